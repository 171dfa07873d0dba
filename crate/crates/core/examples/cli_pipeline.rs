//! Drives the command-line pipeline end to end into a directory
//! (default `./ampscope-out`).

fn main() {
    let out = std::env::args().nth(1).unwrap_or_else(|| "ampscope-out".into());
    let fx = concat!(env!("CARGO_MANIFEST_DIR"), "/fixtures");
    let p = |f: &str| format!("{out}/{f}");
    let steps: Vec<Vec<String>> = vec![
        vec!["synth".into(), "--config".into(), format!("{fx}/scenario.toml"), "--probe-config".into(), format!("{fx}/probe.toml"), "--out".into(), out.clone()],
        vec!["ingest".into(), "--trace".into(), p("trace.jsonl"), "--out".into(), p("ingested")],
        vec!["select-names".into(), "--trace".into(), p("ingested/trace.jsonl"), "--honeypot".into(), p("honeypot.csv"), "--out".into(), out.clone()],
        vec!["detect".into(), "--trace".into(), p("ingested/trace.jsonl"), "--names".into(), p("misused_names.json"), "--out".into(), out.clone()],
        vec!["fingerprint".into(), "--attacks".into(), p("attacks.jsonl"), "--fingerprint-spec".into(), format!("{fx}/gov_fingerprint.json"), "--out".into(), out.clone()],
        vec!["cluster".into(), "--attacks".into(), p("attacks.jsonl"), "--min-pts".into(), "2".into(), "--out".into(), out.clone()],
        vec!["compare".into(), "--attacks".into(), p("attacks.jsonl"), "--honeypot".into(), p("honeypot.csv"), "--out".into(), out.clone()],
        vec!["estimate".into(), "--records".into(), format!("{fx}/records.jsonl"), "--reference-names".into(), format!("{fx}/reference_names.txt"), "--out".into(), out.clone()],
        vec!["snoop".into(), "--responses".into(), p("responses.jsonl"), "--ttl-table".into(), p("ttl_table.csv"), "--out".into(), out.clone()],
        vec!["report".into(), "--out".into(), out.clone()],
    ];
    for step in steps {
        println!("$ ampscope {}", step.join(" "));
        let code = ampscope::cli::run(std::iter::once("ampscope".to_string()).chain(step));
        if code != 0 {
            std::process::exit(code);
        }
    }
}
