//! Regenerates the bundled fixture dataset (data/fixture.csv): 1,000
//! synthetic flow records over the full 45-column layout, every attack
//! category present with skewed counts, seeded so reruns are bitwise
//! identical.

use std::fmt::Write as _;

use stackids::data::{ColumnKind, Schema, CLASS_NAMES};
use stackids::rng::RunRng;

const SEED: u64 = 42;
const COUNTS: [usize; 10] = [400, 150, 120, 90, 70, 60, 40, 30, 25, 15];
const PROTOS: [&str; 4] = ["tcp", "udp", "arp", "ospf"];
const SERVICES: [&str; 5] = ["-", "http", "dns", "smtp", "ftp"];
const STATES: [&str; 4] = ["FIN", "CON", "INT", "REQ"];

fn main() {
    let schema = Schema::unsw_nb15();
    let numeric: Vec<&str> = schema
        .feature_columns()
        .filter(|c| c.kind == ColumnKind::Numeric)
        .map(|c| c.name.as_str())
        .collect();
    let mut rng = RunRng::from_seed(SEED);

    // Each class gets its own center per numeric column, so the classes
    // are separable but overlap enough to keep training non-trivial.
    let centers: Vec<Vec<f64>> = (0..CLASS_NAMES.len())
        .map(|_| (0..numeric.len()).map(|_| rng.uniform(0.5, 6.0)).collect())
        .collect();

    let mut classes = Vec::new();
    for (c, &count) in COUNTS.iter().enumerate() {
        classes.extend(std::iter::repeat(c).take(count));
    }
    rng.shuffle(&mut classes);

    let mut out = String::new();
    let mut header = vec!["id".to_string()];
    header.extend(schema.feature_columns().map(|c| c.name.clone()));
    header.push("attack_cat".into());
    header.push("label".into());
    out.push_str(&header.join(","));
    out.push('\n');

    for (row, &class) in classes.iter().enumerate() {
        let mut cells = vec![(row + 1).to_string()];
        let mut j = 0;
        for col in schema.feature_columns() {
            match col.kind {
                ColumnKind::Categorical => {
                    let cell = match col.name.as_str() {
                        "proto" => pick(&PROTOS, class, &mut rng),
                        "service" => pick(&SERVICES, class, &mut rng),
                        _ => pick(&STATES, class, &mut rng),
                    };
                    cells.push(cell.to_string());
                }
                ColumnKind::Numeric => {
                    let raw = centers[class][j] + rng.normal();
                    cells.push(format_cell(&col.name, raw, &mut rng));
                    j += 1;
                }
                ColumnKind::Ignored => unreachable!("ignored columns are not features"),
            }
        }
        cells.push(CLASS_NAMES[class].to_string());
        cells.push(if class == 0 { "0" } else { "1" }.to_string());
        out.push_str(&cells.join(","));
        out.push('\n');
    }

    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/data/fixture.csv");
    std::fs::write(path, out).expect("write fixture");
    println!("wrote {} rows to {path}", classes.len());
}

/// Class-biased categorical draw: a per-class favorite value most of
/// the time, otherwise uniform.
fn pick<'a>(vocab: &[&'a str], class: usize, rng: &mut RunRng) -> &'a str {
    if rng.unit() < 0.6 {
        vocab[class % vocab.len()]
    } else {
        vocab[rng.below(vocab.len())]
    }
}

fn format_cell(name: &str, raw: f64, rng: &mut RunRng) -> String {
    let mut s = String::new();
    match name {
        "is_ftp_login" | "is_sm_ips_ports" => {
            let _ = write!(s, "{}", (raw > 4.0) as u8);
        }
        "swin" | "dwin" => {
            let _ = write!(s, "{}", if raw > 3.0 { 255 } else { 0 });
        }
        "sttl" | "dttl" => {
            let _ = write!(s, "{}", ((raw * 40.0).abs().round() as u64).min(255));
        }
        "sbytes" | "dbytes" | "stcpb" | "dtcpb" | "response_body_len" => {
            let _ = write!(s, "{}", (raw.abs() * 900.0).round() as u64 + rng.below(64) as u64);
        }
        "spkts" | "dpkts" | "sloss" | "dloss" | "smean" | "dmean" | "trans_depth"
        | "ct_srv_src" | "ct_state_ttl" | "ct_dst_ltm" | "ct_src_dport_ltm"
        | "ct_dst_sport_ltm" | "ct_dst_src_ltm" | "ct_ftp_cmd" | "ct_flw_http_mthd"
        | "ct_src_ltm" | "ct_srv_dst" => {
            let _ = write!(s, "{}", (raw.abs() * 4.0).round() as u64);
        }
        _ => {
            let _ = write!(s, "{:.4}", raw.abs());
        }
    }
    s
}
