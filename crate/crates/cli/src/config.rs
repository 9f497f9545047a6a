//! Run configuration: TOML file schema plus command-line overrides.
//!
//! Every flag has a config-file counterpart; explicit flags win over file
//! values, which win over defaults.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::Deserialize;

use remedia_core::{ConstraintSpec, ObjectiveSpec, Scenario};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Ir,
    Dip,
}

impl std::str::FromStr for Mode {
    type Err = anyhow::Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ir" => Ok(Mode::Ir),
            "dip" => Ok(Mode::Dip),
            other => bail!("unknown mode `{other}` (expected `ir` or `dip`)"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolverChoice {
    Enumerate,
    BranchBound,
    Local,
}

impl std::str::FromStr for SolverChoice {
    type Err = anyhow::Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "enumerate" => Ok(SolverChoice::Enumerate),
            "bnb" => Ok(SolverChoice::BranchBound),
            "local" => Ok(SolverChoice::Local),
            other => bail!("unknown solver `{other}` (expected enumerate, bnb, or local)"),
        }
    }
}

impl SolverChoice {
    pub fn name(self) -> &'static str {
        match self {
            SolverChoice::Enumerate => "enumerate",
            SolverChoice::BranchBound => "bnb",
            SolverChoice::Local => "local",
        }
    }
}

/// Objective selector as written in config files and flags.
pub fn parse_objective(name: &str, kappa: Option<f64>) -> Result<ObjectiveSpec> {
    let need_kappa = || kappa.with_context(|| format!("objective `{name}` requires --kappa"));
    let spec = match name {
        "across-pairwise" => ObjectiveSpec::AcrossPopulationPairwise,
        "within-pairwise" => ObjectiveSpec::WithinSetPairwise,
        "threshold-within" => ObjectiveSpec::ThresholdWithin {
            kappa: need_kappa()?,
        },
        "threshold-across" => ObjectiveSpec::ThresholdAcross {
            kappa: need_kappa()?,
        },
        "aggregate" => ObjectiveSpec::AggregateImpact,
        other => bail!(
            "unknown objective `{other}` (expected across-pairwise, within-pairwise, \
             threshold-within, threshold-across, or aggregate)"
        ),
    };
    if let ObjectiveSpec::ThresholdWithin { kappa } | ObjectiveSpec::ThresholdAcross { kappa } =
        &spec
    {
        if !(0.0..=1.0).contains(kappa) {
            bail!("kappa {kappa} outside [0, 1]");
        }
    }
    Ok(spec)
}

/// One `[[constraint]]` entry in the config file.
#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ConstraintEntry {
    Budget {
        b: usize,
    },
    NoHarmAcross {
        eta: Option<f64>,
    },
    NoHarmWithin {
        eta: Option<f64>,
        pairs: Option<Vec<(String, String)>>,
    },
    MinRateAcross {
        kappa: f64,
    },
    MinRateWithin {
        kappa: f64,
    },
    CounterfactualPrivilege {
        tau: f64,
    },
}

/// Resolve config-file constraint entries against a loaded scenario.
pub fn resolve_constraints(
    entries: &[ConstraintEntry],
    scenario: &Scenario,
) -> Result<Vec<ConstraintSpec>> {
    let set_index = |id: &str| {
        scenario
            .sets
            .iter()
            .position(|s| s.id == id)
            .with_context(|| format!("constraint references unknown set id `{id}`"))
    };
    let group_index = |g: &str| {
        scenario
            .groups
            .iter()
            .position(|x| x == g)
            .with_context(|| format!("constraint references unknown group `{g}`"))
    };
    entries
        .iter()
        .map(|entry| {
            Ok(match entry {
                ConstraintEntry::Budget { b } => ConstraintSpec::Budget { b: *b },
                ConstraintEntry::NoHarmAcross { eta } => ConstraintSpec::NoHarmAcross {
                    eta: eta.unwrap_or(0.0),
                },
                ConstraintEntry::NoHarmWithin { eta, pairs } => {
                    let resolved = match pairs {
                        None => None,
                        Some(list) => Some(
                            list.iter()
                                .map(|(sid, g)| Ok((set_index(sid)?, group_index(g)?)))
                                .collect::<Result<Vec<_>>>()?,
                        ),
                    };
                    ConstraintSpec::NoHarmWithin {
                        eta: eta.unwrap_or(0.0),
                        pairs: resolved,
                    }
                }
                ConstraintEntry::MinRateAcross { kappa } => {
                    ConstraintSpec::MinRateAcross { kappa: *kappa }
                }
                ConstraintEntry::MinRateWithin { kappa } => {
                    ConstraintSpec::MinRateWithin { kappa: *kappa }
                }
                ConstraintEntry::CounterfactualPrivilege { tau } => {
                    ConstraintSpec::CounterfactualPrivilege { tau: *tau }
                }
            })
        })
        .collect()
}

/// The config-file schema. Every field is optional; flags override.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub sets: Option<PathBuf>,
    pub slices: Option<PathBuf>,
    pub weights: Option<PathBuf>,
    /// Saved model to use instead of refitting.
    pub model: Option<PathBuf>,
    pub neighbor_k: Option<usize>,
    pub objective: Option<String>,
    pub kappa: Option<f64>,
    pub budget: Option<usize>,
    pub solver: Option<String>,
    pub seed: Option<u64>,
    pub mode: Option<String>,
    pub out: Option<PathBuf>,
    pub eta: Option<f64>,
    pub tau: Option<f64>,
    pub ordered_pairs: Option<bool>,
    pub weighted_fit: Option<bool>,
    pub enumeration_limit: Option<u128>,
    pub restarts: Option<usize>,
    pub variants: Option<Vec<String>>,
    #[serde(default)]
    pub constraint: Vec<ConstraintEntry>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let config: FileConfig =
            toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Ok(config.rebase(base))
    }

    /// Interpret relative paths in the file as relative to the file itself.
    fn rebase(mut self, base: &Path) -> Self {
        let fix = |p: Option<PathBuf>| {
            p.map(|path| {
                if path.is_relative() {
                    base.join(path)
                } else {
                    path
                }
            })
        };
        self.sets = fix(self.sets);
        self.slices = fix(self.slices);
        self.weights = fix(self.weights);
        self.model = fix(self.model);
        self.out = fix(self.out);
        self
    }
}
