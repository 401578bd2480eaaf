//! Flat CSV export of a Q table: `site,mem_bin,action,q_value`.

use std::io::{Read, Write};

use thiserror::Error;

use super::table::QTable;
use crate::heap::SiteId;
use crate::mdp::{GcAction, GcState};

pub const SNAPSHOT_HEADER: [&str; 4] = ["site", "mem_bin", "action", "q_value"];

#[derive(Debug, Error)]
pub enum SnapshotError {
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error("unexpected header {0:?}")]
    Header(Vec<String>),
    #[error("line {line}: {reason}")]
    Row { line: u64, reason: String },
}

/// Rows come out sorted by (site, mem_bin, action).
pub fn write_snapshot<W: Write>(table: &QTable, out: W) -> Result<(), SnapshotError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(SNAPSHOT_HEADER)?;
    for (state, action, value) in table.sorted_entries() {
        w.write_record([
            state.site.0.to_string(),
            state.mem_bin.to_string(),
            action.to_string(),
            value.to_string(),
        ])?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

pub fn read_snapshot<R: Read>(input: R, num_generations: u8) -> Result<QTable, SnapshotError> {
    let mut r = csv::Reader::from_reader(input);
    let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    if header != SNAPSHOT_HEADER {
        return Err(SnapshotError::Header(header));
    }
    let mut table = QTable::new(num_generations);
    for rec in r.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        let bad = |reason: String| SnapshotError::Row { line, reason };
        if rec.len() != 4 {
            return Err(bad(format!("expected 4 fields, got {}", rec.len())));
        }
        let site: u32 = rec[0].parse().map_err(|e| bad(format!("site: {e}")))?;
        let mem_bin: u16 = rec[1].parse().map_err(|e| bad(format!("mem_bin: {e}")))?;
        let action: GcAction = rec[2].parse().map_err(|e| bad(format!("{e}")))?;
        if action.index() > num_generations as usize {
            return Err(bad(format!(
                "{action} exceeds {num_generations} generations"
            )));
        }
        let value: f64 = rec[3].parse().map_err(|e| bad(format!("q_value: {e}")))?;
        table.set(
            GcState {
                site: SiteId(site),
                mem_bin,
            },
            action,
            value,
        );
    }
    Ok(table)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn golden_layout() {
        let mut t = QTable::new(2);
        let s = GcState {
            site: SiteId(4),
            mem_bin: 9,
        };
        t.set(s, GcAction::Collect(1), 0.25);
        let mut out = Vec::new();
        write_snapshot(&t, &mut out).unwrap();
        assert_eq!(
            String::from_utf8(out).unwrap(),
            "site,mem_bin,action,q_value\n4,9,nothing,0\n4,9,cg1,0.25\n4,9,cg2,0\n"
        );
    }

    #[test]
    fn rejects_bad_rows() {
        let csv = "site,mem_bin,action,q_value\n1,2,cg7,0.5\n";
        assert!(read_snapshot(csv.as_bytes(), 3).is_err());
        let csv = "a,b,c,d\n";
        assert!(matches!(
            read_snapshot(csv.as_bytes(), 3),
            Err(SnapshotError::Header(_))
        ));
    }
}
