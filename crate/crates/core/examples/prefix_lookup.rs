//! Longest-prefix AS lookup and trace annotation.

use std::io::Cursor;

use ampscope::prefix::PrefixTable;
use ampscope::trace::{self, TraceMeta};

fn main() -> ampscope::Result<()> {
    let table = PrefixTable::from_csv(Cursor::new("prefix,asn\n198.51.0.0/16,64500\n198.51.100.0/24,64501\n2001:db8::/32,64502\n"))?;
    for ip in ["198.51.100.7", "198.51.7.1", "2001:db8::1", "203.0.113.1"] {
        println!("{ip:<14} -> {:?}", table.lookup(&ip.parse().unwrap()));
    }
    let line = r#"{"ts":10.0,"src_ip":"198.51.100.7","dst_ip":"192.0.2.53","src_port":40000,"dst_port":53,"ip_ttl":60,"ip_id":1,"udp_len":41,"qr":0,"dns_id":7,"qname":"EXAMPLE.gov","qtype":255,"rcode":0,"ancount":0,"nscount":0}"#;
    let mut recs = trace::parse_trace(Cursor::new(line), &TraceMeta::default())?.records;
    trace::annotate(&mut recs, &table);
    println!("{} from AS {:?}", recs[0].qname, recs[0].client_as());
    Ok(())
}
