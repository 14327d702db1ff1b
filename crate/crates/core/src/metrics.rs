//! Per-round metrics as CSV and study reports as JSON lines.

use std::io::{self, Write};

use serde::Serialize;

use crate::simulation::RoundRecord;

pub const METRICS_HEADER: &str =
    "round,strategy,seed,train_loss,test_loss,test_acc,rho_effective,eta_l,wall_ms";

/// Header plus one row per record. Floats use Rust's shortest round-trip
/// formatting, so identical runs give identical bytes outside `wall_ms`.
pub fn write_metrics_csv<W: Write>(mut out: W, seed: u64, records: &[RoundRecord]) -> io::Result<()> {
    writeln!(out, "{METRICS_HEADER}")?;
    for r in records {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{:.3}",
            r.t,
            r.strategy,
            seed,
            r.train_loss,
            r.test_loss,
            r.test_accuracy,
            r.rho_effective,
            r.eta_l,
            r.wall_ms
        )?;
    }
    Ok(())
}

pub fn metrics_csv_string(seed: u64, records: &[RoundRecord]) -> String {
    let mut buf = Vec::new();
    write_metrics_csv(&mut buf, seed, records).expect("writing to a Vec cannot fail");
    String::from_utf8(buf).expect("CSV output is ASCII")
}

pub fn write_jsonl<W: Write, T: Serialize>(mut out: W, items: &[T]) -> io::Result<()> {
    for item in items {
        serde_json::to_writer(&mut out, item)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(t: usize, wall_ms: f64) -> RoundRecord {
        RoundRecord {
            t,
            strategy: "fedlga".into(),
            train_loss: 1.25,
            test_loss: 0.1 + 0.2,
            test_accuracy: 0.5,
            rho_effective: 0.5,
            eta_l: 0.05,
            wall_ms,
        }
    }

    #[test]
    fn csv_layout() {
        let csv = metrics_csv_string(3, &[record(0, 1.23456), record(1, 7.0)]);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], METRICS_HEADER);
        assert_eq!(lines[1], "0,fedlga,3,1.25,0.30000000000000004,0.5,0.5,0.05,1.235");
        assert_eq!(lines.len(), 3);
    }

    #[test]
    fn jsonl_one_object_per_line() {
        let mut buf = Vec::new();
        write_jsonl(&mut buf, &[record(0, 0.0), record(1, 0.0)]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let parsed: Vec<RoundRecord> = text
            .lines()
            .map(|l| serde_json::from_str(l).unwrap())
            .collect();
        assert_eq!(parsed, vec![record(0, 0.0), record(1, 0.0)]);
    }
}
