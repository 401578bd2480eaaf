use std::io::Write;

use super::compare::ComparisonTable;
use super::run::RunResult;

/// Per-epoch metrics, one row per epoch.
pub fn write_epoch_csv<W: Write>(result: &RunResult, out: W) -> csv::Result<()> {
    let gens = result.config.heap.num_generations;
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec![
        "epoch".to_string(),
        "raw_reward".into(),
        "normalized_reward".into(),
        "live_bytes".into(),
        "table_bytes".into(),
    ];
    header.extend((1..=gens).map(|g| format!("collections_g{g}")));
    header.push("forced_full".into());
    header.push("epsilon".into());
    w.write_record(&header)?;
    for e in &result.epochs {
        let mut row = vec![
            e.epoch_index.to_string(),
            e.raw_reward.to_string(),
            e.normalized_reward.to_string(),
            e.live_bytes_end.to_string(),
            e.table_bytes.to_string(),
        ];
        row.extend(e.collections_by_gen.iter().map(u64::to_string));
        row.push(e.forced_full_collections.to_string());
        row.push(e.epsilon.to_string());
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_summary_json<W: Write>(result: &RunResult, out: W) -> serde_json::Result<()> {
    serde_json::to_writer_pretty(out, result)
}

/// Rows are workloads, columns are variants, cells are median improvement
/// over the baseline in percent.
pub fn write_comparison_csv<W: Write>(table: &ComparisonTable, out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let variants: Vec<_> = table
        .variants
        .iter()
        .copied()
        .filter(|v| *v != super::config::Variant::Baseline)
        .collect();
    let mut header = vec!["workload".to_string()];
    header.extend(variants.iter().map(|v| v.to_string()));
    w.write_record(&header)?;
    for &kind in &table.workloads {
        let mut row = vec![kind.to_string()];
        for &v in &variants {
            row.push(
                table
                    .cell(kind, v)
                    .map_or(String::new(), |c| format!("{:.2}", c.median_improvement)),
            );
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// One row per (workload, variant, seed), plus the spread of each cell.
pub fn write_detail_csv<W: Write>(table: &ComparisonTable, out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "workload",
        "variant",
        "seed",
        "threshold_bytes",
        "baseline_median",
        "variant_median",
        "improvement",
        "cell_median",
        "cell_std",
    ])?;
    for c in &table.cells {
        for s in &c.per_seed {
            w.write_record([
                c.workload.to_string(),
                c.variant.to_string(),
                s.seed.to_string(),
                s.threshold_bytes.to_string(),
                s.baseline_median.to_string(),
                s.variant_median.to_string(),
                s.improvement.to_string(),
                c.median_improvement.to_string(),
                c.std_improvement.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}
