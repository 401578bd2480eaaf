use std::fmt;
use std::str::FromStr;

use serde::de::{self, Visitor};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::ConfigError;
use crate::heap::{HeapConfig, Ticks};
use crate::mdp::MemoryConfig;
use crate::policy::{BaselineConfig, LearnerConfig};
use crate::workloads::{WorkloadKind, WorkloadSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    Baseline,
    #[serde(rename = "never")]
    NeverCollect,
    Q,
    Qp,
    Qps,
    Qpsi,
}

impl Variant {
    pub const ALL: [Variant; 6] = [
        Variant::Baseline,
        Variant::NeverCollect,
        Variant::Q,
        Variant::Qp,
        Variant::Qps,
        Variant::Qpsi,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Baseline => "baseline",
            Variant::NeverCollect => "never",
            Variant::Q => "q",
            Variant::Qp => "qp",
            Variant::Qps => "qps",
            Variant::Qpsi => "qpsi",
        }
    }

    pub fn is_learned(self) -> bool {
        matches!(
            self,
            Variant::Q | Variant::Qp | Variant::Qps | Variant::Qpsi
        )
    }

    /// `(prior, shaping, init)` switches for learned variants.
    pub fn optimizations(self) -> (bool, bool, bool) {
        match self {
            Variant::Qp => (true, false, false),
            Variant::Qps => (true, true, false),
            Variant::Qpsi => (true, true, true),
            _ => (false, false, false),
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Variant::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| ConfigError::new("variant", format!("unknown variant {s:?}")))
    }
}

/// The memory threshold M: a byte count, or `"auto"` for the median
/// per-epoch usage of an unconstrained baseline run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Threshold {
    #[default]
    Auto,
    Bytes(u64),
}

impl Serialize for Threshold {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            Threshold::Auto => s.serialize_str("auto"),
            Threshold::Bytes(b) => s.serialize_u64(*b),
        }
    }
}

impl<'de> Deserialize<'de> for Threshold {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        struct V;
        impl Visitor<'_> for V {
            type Value = Threshold;

            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str("a positive byte count or \"auto\"")
            }

            fn visit_u64<E: de::Error>(self, v: u64) -> Result<Threshold, E> {
                Ok(Threshold::Bytes(v))
            }

            fn visit_i64<E: de::Error>(self, v: i64) -> Result<Threshold, E> {
                u64::try_from(v)
                    .map(Threshold::Bytes)
                    .map_err(|_| E::custom("threshold must be non-negative"))
            }

            fn visit_str<E: de::Error>(self, v: &str) -> Result<Threshold, E> {
                if v == "auto" {
                    Ok(Threshold::Auto)
                } else {
                    v.parse()
                        .map(Threshold::Bytes)
                        .map_err(|_| E::custom("expected \"auto\" or bytes"))
                }
            }
        }
        d.deserialize_any(V)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MemorySettings {
    #[serde(alias = "threshold_M")]
    pub threshold_m: Threshold,
    pub num_bins: u16,
}

impl Default for MemorySettings {
    fn default() -> Self {
        Self {
            threshold_m: Threshold::Auto,
            num_bins: 64,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub variant: Variant,
    pub seed: u64,
    pub duration_ticks: Ticks,
    pub epoch_ticks: Ticks,
    /// Keep a per-decision event log in the result.
    pub record_trace: bool,
    pub workload: WorkloadSpec,
    pub learner: LearnerConfig,
    pub memory: MemorySettings,
    pub heap: HeapConfig,
    pub baseline: BaselineConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            variant: Variant::Qpsi,
            seed: 0,
            duration_ticks: 2_000_000,
            epoch_ticks: 10_000,
            record_trace: false,
            workload: WorkloadSpec::default(),
            learner: LearnerConfig::default(),
            memory: MemorySettings::default(),
            heap: HeapConfig::default(),
            baseline: BaselineConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.epoch_ticks == 0 {
            return Err(ConfigError::new("epoch_ticks", "must be positive"));
        }
        if self.epoch_ticks > self.duration_ticks {
            return Err(ConfigError::new("epoch_ticks", "exceeds duration_ticks"));
        }
        if self.heap.num_generations == 0 {
            return Err(ConfigError::new(
                "heap.num_generations",
                "must be at least 1",
            ));
        }
        if self.memory.num_bins < 2 {
            return Err(ConfigError::new("memory.num_bins", "must be at least 2"));
        }
        if self.memory.threshold_m == Threshold::Bytes(0) {
            return Err(ConfigError::new("memory.threshold_m", "must be positive"));
        }
        self.learner.validate()?;
        self.baseline.validate(self.heap.num_generations)?;
        self.workload.validate()
    }

    /// Learner settings with the variant's optimization switches applied.
    pub fn learner_for_variant(&self) -> LearnerConfig {
        let (p, s, i) = self.variant.optimizations();
        LearnerConfig {
            enable_prior: p,
            enable_shaping: s,
            enable_init: i,
            ..self.learner.clone()
        }
    }

    pub fn memory_config(&self, threshold: u64) -> MemoryConfig {
        MemoryConfig {
            threshold,
            num_bins: self.memory.num_bins,
            full_generation: self.heap.num_generations,
        }
    }

    pub fn epochs(&self) -> usize {
        (self.duration_ticks / self.epoch_ticks) as usize
    }

    /// `run_<workload>_<variant>_<seed>`
    pub fn file_stem(&self) -> String {
        format!("run_{}_{}_{}", self.workload.kind, self.variant, self.seed)
    }
}

/// Cross product of workloads, variants and seeds over a shared base config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MatrixSpec {
    pub workloads: Vec<WorkloadKind>,
    pub variants: Vec<Variant>,
    pub seeds: Vec<u64>,
}

impl Default for MatrixSpec {
    fn default() -> Self {
        Self {
            workloads: WorkloadKind::ALL.to_vec(),
            variants: vec![Variant::Q, Variant::Qp, Variant::Qps, Variant::Qpsi],
            seeds: vec![1, 2, 3, 4, 5],
        }
    }
}

impl MatrixSpec {
    /// One config per (workload, seed, variant), with a baseline run added
    /// for every (workload, seed).
    pub fn expand(&self, base: &ExperimentConfig) -> Result<Vec<ExperimentConfig>, ConfigError> {
        if self.workloads.is_empty() || self.seeds.is_empty() {
            return Err(ConfigError::new(
                "matrix",
                "needs at least one workload and one seed",
            ));
        }
        let mut variants = vec![Variant::Baseline];
        variants.extend(self.variants.iter().filter(|v| **v != Variant::Baseline));
        let mut out = Vec::new();
        for &kind in &self.workloads {
            for &seed in &self.seeds {
                for &variant in &variants {
                    let mut cfg = base.clone();
                    cfg.workload.kind = kind;
                    cfg.seed = seed;
                    cfg.variant = variant;
                    cfg.validate()?;
                    out.push(cfg);
                }
            }
        }
        Ok(out)
    }
}
