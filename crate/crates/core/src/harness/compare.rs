use std::collections::{BTreeMap, BTreeSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, Threshold, Variant};
use super::run::{calibrate_threshold, median, run, RunError, RunResult};
use crate::error::ConfigError;
use crate::workloads::WorkloadKind;

/// `100 * (variant - baseline) / baseline` on median rewards.
pub fn median_improvement(variant: &RunResult, baseline: &RunResult) -> Result<f64, ConfigError> {
    if baseline.median_reward == 0.0 {
        return Err(ConfigError::new(
            "baseline",
            "median reward is 0; improvement undefined",
        ));
    }
    Ok(100.0 * (variant.median_reward - baseline.median_reward) / baseline.median_reward)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedImprovement {
    pub seed: u64,
    pub threshold_bytes: u64,
    pub baseline_median: f64,
    pub variant_median: f64,
    pub improvement: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonCell {
    pub workload: WorkloadKind,
    pub variant: Variant,
    /// Median over seeds of the per-seed improvement.
    pub median_improvement: f64,
    pub min_improvement: f64,
    pub max_improvement: f64,
    /// Population standard deviation across seeds.
    pub std_improvement: f64,
    pub per_seed: Vec<SeedImprovement>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonTable {
    pub workloads: Vec<WorkloadKind>,
    pub variants: Vec<Variant>,
    pub cells: Vec<ComparisonCell>,
    #[serde(skip)]
    pub runs: Vec<RunResult>,
}

impl ComparisonTable {
    pub fn cell(&self, workload: WorkloadKind, variant: Variant) -> Option<&ComparisonCell> {
        self.cells
            .iter()
            .find(|c| c.workload == workload && c.variant == variant)
    }

    pub fn run(&self, workload: WorkloadKind, variant: Variant, seed: u64) -> Option<&RunResult> {
        self.runs.iter().find(|r| {
            r.config.workload.kind == workload
                && r.config.variant == variant
                && r.config.seed == seed
        })
    }
}

type Group = (WorkloadKind, u64);

/// Runs every config and reports each variant against the baseline run of
/// the same workload and seed. Groups must share duration, epoching and the
/// set of variants; `"auto"` thresholds are calibrated once per group so
/// that all variants in a group face the same M.
pub fn compare_variants(matrix: &[ExperimentConfig]) -> Result<ComparisonTable, RunError> {
    if matrix.is_empty() {
        return Err(ConfigError::new("matrix", "no runs").into());
    }
    let first = &matrix[0];
    let mut groups: BTreeMap<Group, BTreeSet<Variant>> = BTreeMap::new();
    for cfg in matrix {
        cfg.validate()?;
        if cfg.duration_ticks != first.duration_ticks || cfg.epoch_ticks != first.epoch_ticks {
            return Err(
                ConfigError::new("matrix", "runs differ in duration_ticks or epoch_ticks").into(),
            );
        }
        let set = groups.entry((cfg.workload.kind, cfg.seed)).or_default();
        if !set.insert(cfg.variant) {
            return Err(ConfigError::new(
                "matrix",
                format!(
                    "duplicate run {} {} seed {}",
                    cfg.workload.kind, cfg.variant, cfg.seed
                ),
            )
            .into());
        }
    }
    let variants = groups.values().next().cloned().unwrap_or_default();
    for ((kind, seed), set) in &groups {
        if !set.contains(&Variant::Baseline) {
            return Err(ConfigError::new(
                "matrix",
                format!("{kind} seed {seed} has no baseline run"),
            )
            .into());
        }
        if *set != variants {
            return Err(ConfigError::new(
                "matrix",
                format!("{kind} seed {seed} has a different variant set"),
            )
            .into());
        }
    }

    let keys: Vec<Group> = groups.keys().copied().collect();
    let thresholds: Vec<(Group, u64)> = keys
        .par_iter()
        .map(|&key| {
            let cfg = matrix
                .iter()
                .find(|c| (c.workload.kind, c.seed) == key && c.variant == Variant::Baseline)
                .expect("checked above");
            let m = match cfg.memory.threshold_m {
                Threshold::Bytes(b) => b,
                Threshold::Auto => calibrate_threshold(cfg)?,
            };
            Ok((key, m))
        })
        .collect::<Result<_, RunError>>()?;
    let thresholds: BTreeMap<Group, u64> = thresholds.into_iter().collect();

    let runs: Vec<RunResult> = matrix
        .par_iter()
        .map(|cfg| {
            let mut cfg = cfg.clone();
            if cfg.memory.threshold_m == Threshold::Auto {
                cfg.memory.threshold_m =
                    Threshold::Bytes(thresholds[&(cfg.workload.kind, cfg.seed)]);
            }
            run(&cfg)
        })
        .collect::<Result<_, RunError>>()?;

    let workloads: Vec<WorkloadKind> = keys
        .iter()
        .map(|k| k.0)
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let variants: Vec<Variant> = variants.into_iter().collect();
    let find = |kind, seed, variant| {
        runs.iter()
            .find(|r| {
                r.config.workload.kind == kind
                    && r.config.seed == seed
                    && r.config.variant == variant
            })
            .expect("every group has every variant")
    };
    let mut cells = Vec::new();
    for &kind in &workloads {
        let seeds: Vec<u64> = keys.iter().filter(|k| k.0 == kind).map(|k| k.1).collect();
        for &variant in &variants {
            let mut per_seed = Vec::with_capacity(seeds.len());
            for &seed in &seeds {
                let base = find(kind, seed, Variant::Baseline);
                let var = find(kind, seed, variant);
                per_seed.push(SeedImprovement {
                    seed,
                    threshold_bytes: base.threshold_bytes,
                    baseline_median: base.median_reward,
                    variant_median: var.median_reward,
                    improvement: median_improvement(var, base)?,
                });
            }
            let values: Vec<f64> = per_seed.iter().map(|s| s.improvement).collect();
            let mean = values.iter().sum::<f64>() / values.len() as f64;
            let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / values.len() as f64;
            cells.push(ComparisonCell {
                workload: kind,
                variant,
                median_improvement: median(&values),
                min_improvement: values.iter().copied().fold(f64::INFINITY, f64::min),
                max_improvement: values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
                std_improvement: var.sqrt(),
                per_seed,
            });
        }
    }
    Ok(ComparisonTable {
        workloads,
        variants,
        cells,
        runs,
    })
}
