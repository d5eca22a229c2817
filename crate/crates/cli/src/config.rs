use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use gapinfer::inference::{AlphaMode, PriorSign};
use gapinfer::DecisionConfig;
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InferSection {
    pub beams: Option<PathBuf>,
    pub symbolic: Option<PathBuf>,
    pub output: Option<PathBuf>,
    pub no_symbolic: bool,
    pub strict: bool,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScoreSection {
    pub predictions: Option<PathBuf>,
    pub gold: Option<PathBuf>,
    pub strict: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CalibrateSection {
    pub beams: Option<PathBuf>,
    pub gold: Option<PathBuf>,
    pub symbolic: Option<PathBuf>,
    pub n_bins: usize,
    pub output: Option<PathBuf>,
    pub csv: Option<PathBuf>,
    pub strict: bool,
}

impl Default for CalibrateSection {
    fn default() -> Self {
        CalibrateSection { beams: None, gold: None, symbolic: None, n_bins: 10, output: None, csv: None, strict: false }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StatsSection {
    pub beams: Option<PathBuf>,
    pub output: Option<PathBuf>,
    pub strict: bool,
}

/// Everything a run needs; loaded from TOML, then overridden by flags.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Worker threads; unset means one per available core.
    pub workers: Option<usize>,
    pub decision: DecisionConfig,
    pub infer: InferSection,
    pub score: ScoreSection,
    pub calibrate: CalibrateSection,
    pub prune_stats: StatsSection,
    pub cluster_stats: StatsSection,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<RunConfig, CliError> {
        let text = std::fs::read_to_string(path).map_err(|source| CliError::Io { path: path.to_path_buf(), source })?;
        toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum AlphaModeArg {
    PerVariable,
    PerCandidate,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum PriorSignArg {
    Negative,
    Positive,
}

/// Decision settings; each overrides its `[decision]` key.
#[derive(Clone, Debug, Default, Args)]
pub struct DecisionArgs {
    /// Temperature T of the uncertainty coefficient
    #[arg(long, global = true)]
    pub alpha_temperature: Option<f64>,
    /// Bias b of the uncertainty coefficient
    #[arg(long, global = true, allow_negative_numbers = true)]
    pub bias: Option<f64>,
    /// Beam aggregation temperature t
    #[arg(long, global = true)]
    pub temperature: Option<f64>,
    /// Natural-log floor for zero probabilities
    #[arg(long, global = true, allow_negative_numbers = true)]
    pub log_floor: Option<f64>,
    /// Prune variables whose max marginal is below this (0 disables)
    #[arg(long, global = true)]
    pub prune_threshold: Option<f64>,
    /// Cluster beams and infer within the selected component
    #[arg(long, global = true)]
    pub mixture: bool,
    /// Linkage distance at which clustering stops merging
    #[arg(long, global = true)]
    pub mixture_cut: Option<f64>,
    /// Sign of Smatch in the mixture prior
    #[arg(long, global = true, value_enum)]
    pub mixture_prior_sign: Option<PriorSignArg>,
    /// How the uncertainty coefficient is evaluated
    #[arg(long, global = true, value_enum)]
    pub alpha_mode: Option<AlphaModeArg>,
    /// Alignment restarts
    #[arg(long, global = true)]
    pub restarts: Option<usize>,
    /// Hill-climbing rounds per restart
    #[arg(long, global = true)]
    pub iterations: Option<usize>,
    /// Alignment seed
    #[arg(long, global = true)]
    pub seed: Option<u64>,
}

impl DecisionArgs {
    pub fn apply(&self, d: &mut DecisionConfig) {
        fn set<T: Copy>(slot: &mut T, value: Option<T>) {
            if let Some(v) = value {
                *slot = v;
            }
        }
        set(&mut d.alpha_temperature, self.alpha_temperature);
        set(&mut d.bias, self.bias);
        set(&mut d.temperature, self.temperature);
        set(&mut d.log_floor, self.log_floor);
        set(&mut d.prune_threshold, self.prune_threshold);
        set(&mut d.mixture_cut, self.mixture_cut);
        set(&mut d.restarts, self.restarts);
        set(&mut d.iterations, self.iterations);
        set(&mut d.seed, self.seed);
        if self.mixture {
            d.mixture = true;
        }
        if let Some(s) = self.mixture_prior_sign {
            d.mixture_prior_sign = match s {
                PriorSignArg::Negative => PriorSign::Negative,
                PriorSignArg::Positive => PriorSign::Positive,
            };
        }
        if let Some(m) = self.alpha_mode {
            d.alpha_mode = match m {
                AlphaModeArg::PerVariable => AlphaMode::PerVariable,
                AlphaModeArg::PerCandidate => AlphaMode::PerCandidate,
            };
        }
    }
}
