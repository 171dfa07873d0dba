//! Query-name normalization and wire-format length helpers.
//!
//! Names are handled in presentation form, lowercased, with a trailing dot.
//! The root name is `"."`.

pub const MAX_LABEL_LEN: usize = 63;
pub const MAX_NAME_LEN: usize = 255;

/// Lowercases `name` and appends the trailing dot if missing. An empty
/// string normalizes to the root name.
pub fn normalize(name: &str) -> String {
    let mut out = name.trim().to_ascii_lowercase();
    if !out.ends_with('.') {
        out.push('.');
    }
    out
}

/// Labels of a normalized name, excluding the empty root label.
pub fn labels(name: &str) -> impl Iterator<Item = &str> {
    name.strip_suffix('.')
        .unwrap_or(name)
        .split('.')
        .filter(|l| !l.is_empty())
}

/// Uncompressed wire length: one length octet per label plus the label,
/// plus the terminating zero octet.
pub fn wire_length(name: &str) -> usize {
    labels(name).map(|l| l.len() + 1).sum::<usize>() + 1
}

/// Checks the DNS name grammar on an already normalized name: no empty
/// interior labels, labels of at most 63 octets, total wire length at most
/// 255 octets, printable ASCII only.
pub fn is_valid(name: &str) -> bool {
    if name == "." {
        return true;
    }
    let Some(body) = name.strip_suffix('.') else {
        return false;
    };
    if body.is_empty() {
        return false;
    }
    for label in body.split('.') {
        if label.is_empty() || label.len() > MAX_LABEL_LEN {
            return false;
        }
        if !label.bytes().all(|b| b.is_ascii_graphic() && b != b'.') {
            return false;
        }
    }
    wire_length(name) <= MAX_NAME_LEN
}

/// Top-level domain of a normalized name, e.g. `"gov."`; the root name
/// maps to `"."`.
pub fn tld(name: &str) -> String {
    match labels(name).last() {
        Some(l) => format!("{l}."),
        None => ".".to_string(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normalizes_case_and_trailing_dot() {
        assert_eq!(normalize("Example.GOV"), "example.gov.");
        assert_eq!(normalize("a.b."), "a.b.");
        assert_eq!(normalize(""), ".");
        assert_eq!(normalize("."), ".");
    }

    #[test]
    fn wire_lengths() {
        assert_eq!(wire_length("."), 1);
        assert_eq!(wire_length("a.b."), 5);
        assert_eq!(wire_length("ab.cd."), 7);
    }

    #[test]
    fn grammar() {
        assert!(is_valid("."));
        assert!(is_valid("a.b."));
        assert!(!is_valid("a..b."));
        assert!(!is_valid("a.b"));
        let long = format!("{}.com.", "x".repeat(64));
        assert!(!is_valid(&long));
        let ok = format!("{}.com.", "x".repeat(63));
        assert!(is_valid(&ok));
        let huge = format!("{}.", vec!["y".repeat(60); 5].join("."));
        assert!(!is_valid(&huge));
        assert!(!is_valid("bad name.com."));
    }

    #[test]
    fn tlds() {
        assert_eq!(tld("www.example.gov."), "gov.");
        assert_eq!(tld("."), ".");
    }
}
