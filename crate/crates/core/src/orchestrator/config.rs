use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gda::GdaConfig;
use crate::lgi::{LgiConfig, LgiMode};
use crate::nn::{Activation, ModelSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StrategyKind {
    Gapsl,
    Psl,
    Sfl,
    VanillaSl,
}

/// How survivors of the alignment step are chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GdaMode {
    #[default]
    Threshold,
    /// No alignment: the server steps along the leader gradient.
    Off,
    /// Random survivors of the size the threshold would keep.
    Random,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Strategy {
    pub kind: StrategyKind,
    pub lgi: LgiMode,
    pub gda: GdaMode,
}

impl Strategy {
    pub const fn plain(kind: StrategyKind) -> Self {
        Self { kind, lgi: LgiMode::Adaptive, gda: GdaMode::Threshold }
    }

    pub fn gapsl() -> Self {
        Self::plain(StrategyKind::Gapsl)
    }

    pub fn has_ablation(&self) -> bool {
        self.lgi != LgiMode::Adaptive || self.gda != GdaMode::Threshold
    }

    pub fn validate(&self) -> Result<()> {
        if self.kind != StrategyKind::Gapsl && self.has_ablation() {
            return Err(Error::Config("ablation flags only apply to gapsl".into()));
        }
        Ok(())
    }

    /// Ablation flag names in canonical order.
    pub fn ablations(&self) -> Vec<&'static str> {
        let mut v = Vec::new();
        match self.lgi {
            LgiMode::Adaptive => {}
            LgiMode::Full => v.push("non_lgi"),
            LgiMode::Random => v.push("rand_lgi"),
        }
        match self.gda {
            GdaMode::Threshold => {}
            GdaMode::Off => v.push("non_gda"),
            GdaMode::Random => v.push("rand_gda"),
        }
        v
    }

    /// Display name, e.g. `gapsl`, `psl`, `gapsl+rand_lgi`.
    pub fn name(&self) -> String {
        let base = match self.kind {
            StrategyKind::Gapsl => "gapsl",
            StrategyKind::Psl => "psl",
            StrategyKind::Sfl => "sfl",
            StrategyKind::VanillaSl => "vanilla",
        };
        std::iter::once(base).chain(self.ablations()).collect::<Vec<_>>().join("+")
    }

    /// Applies one ablation flag.
    pub fn with_ablation(mut self, flag: &str) -> Result<Self> {
        let conflict = |what: &str| Error::Config(format!("conflicting {what} ablations"));
        match flag {
            "non_lgi" | "rand_lgi" => {
                if self.lgi != LgiMode::Adaptive {
                    return Err(conflict("lgi"));
                }
                self.lgi = if flag == "non_lgi" { LgiMode::Full } else { LgiMode::Random };
            }
            "non_gda" | "rand_gda" => {
                if self.gda != GdaMode::Threshold {
                    return Err(conflict("gda"));
                }
                self.gda = if flag == "non_gda" { GdaMode::Off } else { GdaMode::Random };
            }
            other => return Err(Error::Config(format!("unknown ablation '{other}'"))),
        }
        Ok(self)
    }
}

impl std::str::FromStr for StrategyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "gapsl" => StrategyKind::Gapsl,
            "psl" => StrategyKind::Psl,
            "sfl" => StrategyKind::Sfl,
            "vanilla" | "vanilla_sl" => StrategyKind::VanillaSl,
            other => return Err(Error::Config(format!("unknown strategy '{other}'"))),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DatasetSpec {
    Gaussian { classes: usize, dim: usize, samples_per_class: usize, spread: f64 },
    Idx { train_images: PathBuf, train_labels: PathBuf, test_images: PathBuf, test_labels: PathBuf },
}

/// Everything needed to run one seeded experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub strategy: Strategy,
    pub num_clients: usize,
    pub rounds: u32,
    pub batch_size: usize,
    pub seed: u64,
    pub model: ModelSpec,
    pub cut_index: usize,
    pub dataset: DatasetSpec,
    /// Dirichlet concentration; `None` partitions IID.
    pub alpha: Option<f64>,
    pub lr_client: f64,
    pub lr_server: f64,
    pub momentum: f64,
    pub lgi: LgiConfig,
    pub gda: GdaConfig,
    pub sfl_interval: u32,
    pub eval_interval: u32,
    /// Clients outside the surviving set get zero activation gradients, as
    /// when only the global loss over survivors is back-propagated.
    pub withhold_excluded: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            strategy: Strategy::gapsl(),
            num_clients: 10,
            rounds: 80,
            batch_size: 32,
            seed: 0,
            model: ModelSpec::new(vec![16, 32, 32, 8], Activation::Relu),
            cut_index: 2,
            dataset: DatasetSpec::Gaussian { classes: 8, dim: 16, samples_per_class: 400, spread: 1.0 },
            alpha: Some(0.1),
            lr_client: 0.05,
            lr_server: 0.05,
            momentum: 0.9,
            lgi: LgiConfig { k_min: 20.0, k_max: 80.0, total_rounds: 80 },
            gda: GdaConfig::default(),
            sfl_interval: 1,
            eval_interval: 1,
            withhold_excluded: false,
        }
    }
}

impl ExperimentConfig {
    /// Every violation, not just the first.
    pub fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        if let Err(e) = self.strategy.validate() {
            v.push(e.to_string());
        }
        if self.num_clients < 2 {
            v.push(format!("clients must be >= 2, got {}", self.num_clients));
        }
        if self.num_clients > u16::MAX as usize {
            v.push("clients must fit in 16 bits".into());
        }
        if self.rounds < 1 {
            v.push("rounds must be >= 1".into());
        }
        if self.batch_size < 1 {
            v.push("batch_size must be >= 1".into());
        }
        if let Err(e) = self.model.validate() {
            v.push(e.to_string());
        } else if self.cut_index < 1 || self.cut_index + 2 > self.model.layer_dims.len() {
            v.push(format!("cut_index must lie in [1, {}], got {}", self.model.layer_dims.len() - 2, self.cut_index));
        }
        match &self.dataset {
            DatasetSpec::Gaussian { classes, dim, samples_per_class, spread } => {
                if *classes < 1 || *dim < 1 {
                    v.push("classes and dim must be >= 1".into());
                }
                if *samples_per_class < 2 {
                    v.push("samples_per_class must be >= 2".into());
                }
                if !(spread.is_finite() && *spread >= 0.0) {
                    v.push(format!("spread must be finite and >= 0, got {spread}"));
                }
                if self.model.layer_dims.first() != Some(dim) {
                    v.push(format!("layer_dims must start with dim {dim}"));
                }
                if self.model.layer_dims.last() != Some(classes) {
                    v.push(format!("layer_dims must end with classes {classes}"));
                }
            }
            DatasetSpec::Idx { train_images, train_labels, test_images, test_labels } => {
                for (key, p) in [
                    ("train_images", train_images),
                    ("train_labels", train_labels),
                    ("test_images", test_images),
                    ("test_labels", test_labels),
                ] {
                    if p.as_os_str().is_empty() {
                        v.push(format!("dataset = idx requires {key}"));
                    }
                }
            }
        }
        if let Some(a) = self.alpha {
            if !(a > 0.0 && a.is_finite()) {
                v.push(format!("alpha must be positive, got {a}"));
            }
        }
        for (key, r) in [("lr_client", self.lr_client), ("lr_server", self.lr_server)] {
            if !(r > 0.0 && r.is_finite()) {
                v.push(format!("{key} must be positive, got {r}"));
            }
        }
        if !(0.0..1.0).contains(&self.momentum) {
            v.push(format!("momentum must lie in [0, 1), got {}", self.momentum));
        }
        for cfg_err in [self.lgi.validate().err(), self.gda.validate().err()].into_iter().flatten() {
            match cfg_err {
                Error::Validation(list) => v.extend(list),
                other => v.push(other.to_string()),
            }
        }
        if self.lgi.total_rounds != self.rounds {
            v.push(format!("selection horizon {} differs from rounds {}", self.lgi.total_rounds, self.rounds));
        }
        if self.withhold_excluded && self.strategy.kind != StrategyKind::Gapsl {
            v.push("withhold_excluded only applies to gapsl".into());
        }
        if self.sfl_interval < 1 {
            v.push("sfl_interval must be >= 1".into());
        }
        if self.eval_interval < 1 {
            v.push("eval_interval must be >= 1".into());
        }
        v
    }

    pub fn validate(&self) -> Result<()> {
        let v = self.violations();
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(v))
        }
    }

    /// Evaluation happens every `eval_interval` rounds and after the last round.
    pub fn is_eval_round(&self, round: u32) -> bool {
        round.is_multiple_of(self.eval_interval) || round == self.rounds
    }
}

/// Independent sub-seed for a named stream of an experiment (splitmix64 finaliser).
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub(crate) mod streams {
    pub const DATA: u64 = 1;
    pub const PARTITION: u64 = 2;
    pub const INIT: u64 = 3;
    pub const ABLATION: u64 = 4;
    pub const CLIENT_BASE: u64 = 1 << 20;
}
