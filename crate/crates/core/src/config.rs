//! Run configurations: one JSON document describes a model, lattice,
//! disorder, observable sequence, and gap policy. Named presets cover the
//! standard scenarios end to end.

use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::ipp::GapPolicy;
use crate::lattice::{Boundary, LatticeSpec};
use crate::models::{ComplexParam, DisorderSpec, ModelParams};
use crate::position::{PositionFunctional, PositionSpec};

/// Observable sequence: a named row of the standard table or an explicit
/// list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SequenceSpec {
    Named(String),
    Explicit(Vec<PositionSpec>),
}

impl SequenceSpec {
    pub fn resolve(&self) -> Result<Vec<PositionSpec>> {
        use PositionFunctional::*;
        match self {
            SequenceSpec::Explicit(v) => {
                if v.len() < 2 {
                    return Err(Error::Config("sequence needs at least two observables".into()));
                }
                Ok(v.clone())
            }
            SequenceSpec::Named(name) => match name.as_str() {
                "dirichlet_xy" => {
                    Ok(vec![PositionSpec::new(Linear, 1), PositionSpec::new(Linear, 2)])
                }
                "periodic_exp" => {
                    Ok(vec![PositionSpec::new(ComplexExp, 1), PositionSpec::new(ComplexExp, 2)])
                }
                "periodic_sin_cos" => Ok(vec![
                    PositionSpec::new(Sin, 1),
                    PositionSpec::new(Cos, 1),
                    PositionSpec::new(Sin, 2),
                    PositionSpec::new(Cos, 2),
                ]),
                "periodic_sin_cos_trb" => Ok(vec![
                    PositionSpec::new(Sin, 1).with_trb(),
                    PositionSpec::new(Cos, 1).with_trb(),
                    PositionSpec::new(Sin, 2).with_trb(),
                    PositionSpec::new(Cos, 2).with_trb(),
                ]),
                other => Err(Error::Config(format!("unknown sequence preset '{other}'"))),
            },
        }
    }
}

/// Ribbon sweep parameters for charge-center runs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WccConfig {
    #[serde(default = "default_ribbon_width")]
    pub l1: usize,
    #[serde(default = "default_n_k")]
    pub n_k: usize,
}

fn default_ribbon_width() -> usize {
    10
}

fn default_n_k() -> usize {
    128
}

impl Default for WccConfig {
    fn default() -> Self {
        WccConfig { l1: default_ribbon_width(), n_k: default_n_k() }
    }
}

/// Complete description of one reproducible run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    #[serde(flatten)]
    pub model: ModelParams,
    pub lattice: LatticeSpec,
    #[serde(default)]
    pub disorder: Option<DisorderSpec>,
    pub sequence: SequenceSpec,
    pub gap_policy: GapPolicy,
    /// Occupied state count; defaults to the model's half filling
    /// (negative-energy count for p_x + i p_y).
    #[serde(default)]
    pub n_occ: Option<usize>,
    #[serde(default)]
    pub wcc: Option<WccConfig>,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    #[serde(default = "default_threads")]
    pub threads: usize,
}

fn default_threads() -> usize {
    1
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        self.sequence.resolve()?;
        self.gap_policy.validate().map_err(|e| Error::Config(e.to_string()))?;
        if self.threads == 0 {
            return Err(Error::Config("threads must be at least 1".into()));
        }
        if let Some(d) = &self.disorder {
            if d.variance < 0.0 {
                return Err(Error::Config("disorder variance must be nonnegative".into()));
            }
        }
        Ok(())
    }
}

const WEAK_DISORDER_SEED: u64 = 7;
const STRONG_DISORDER_SEED: u64 = 11;

/// The named scenarios: each returns a full configuration matching one of
/// the standard parameter sets.
pub fn preset(name: &str) -> Result<RunConfig> {
    let haldane_clean = ModelParams::Haldane { v: 3.0, t: 1.0, tprime: ComplexParam::from(0.5) };
    let km_even = ModelParams::KaneMele { v: 4.0, t: 1.0, tprime: 0.6, lambda_r: 0.5 };
    let km_odd = ModelParams::KaneMele { v: 0.0, t: 1.0, tprime: 0.6, lambda_r: 0.5 };

    let cfg = match name {
        // Dirichlet boundary scenarios.
        "km_dirichlet" => RunConfig {
            model: km_even.clone(),
            lattice: LatticeSpec::honeycomb(30, 30, Boundary::Dirichlet),
            disorder: None,
            sequence: SequenceSpec::Named("dirichlet_xy".into()),
            gap_policy: GapPolicy::fixed_count(30),
            n_occ: None,
            wcc: None,
            output_dir: None,
            threads: 1,
        },
        "km_dirichlet_weak_disorder" => RunConfig {
            disorder: Some(DisorderSpec { variance: 0.5, seed: WEAK_DISORDER_SEED }),
            ..preset("km_dirichlet")?
        },
        "pxipy_dirichlet" => RunConfig {
            model: ModelParams::PxIpy { mu: 3.0, t: 0.5, delta: 1.0 },
            lattice: LatticeSpec::ammann_beenker(3),
            disorder: None,
            sequence: SequenceSpec::Named("dirichlet_xy".into()),
            gap_policy: GapPolicy::relative(8.0).with_floor(1e-3),
            n_occ: None,
            wcc: None,
            output_dir: None,
            threads: 1,
        },
        // Periodic boundary scenarios.
        "haldane_periodic" => RunConfig {
            model: haldane_clean.clone(),
            lattice: LatticeSpec::honeycomb(30, 30, Boundary::Periodic),
            disorder: None,
            sequence: SequenceSpec::Named("periodic_exp".into()),
            gap_policy: GapPolicy::fixed_count(30),
            n_occ: None,
            wcc: None,
            output_dir: None,
            threads: 1,
        },
        "haldane_periodic_weak_disorder" => RunConfig {
            disorder: Some(DisorderSpec { variance: 0.5, seed: WEAK_DISORDER_SEED }),
            ..preset("haldane_periodic")?
        },
        "haldane_periodic_strong_disorder" => RunConfig {
            disorder: Some(DisorderSpec { variance: 100.0, seed: STRONG_DISORDER_SEED }),
            ..preset("haldane_periodic")?
        },
        // Time-reversal scenarios.
        "haldane_bosonic" => RunConfig {
            model: ModelParams::Haldane {
                v: 3.0,
                t: 1.0,
                tprime: ComplexParam(num_complex::Complex64::new(0.0, 0.5)),
            },
            lattice: LatticeSpec::honeycomb(30, 30, Boundary::Periodic),
            disorder: None,
            sequence: SequenceSpec::Named("periodic_sin_cos".into()),
            gap_policy: GapPolicy::relative(8.0).with_floor(2e-2),
            n_occ: None,
            wcc: None,
            output_dir: None,
            threads: 1,
        },
        "km_periodic_z2_even" => RunConfig {
            model: km_even.clone(),
            lattice: LatticeSpec::honeycomb(30, 30, Boundary::Periodic),
            disorder: None,
            sequence: SequenceSpec::Named("periodic_sin_cos".into()),
            gap_policy: GapPolicy::relative(8.0).with_floor(2e-2),
            n_occ: None,
            wcc: None,
            output_dir: None,
            threads: 1,
        },
        "km_periodic_z2_odd" => RunConfig {
            model: km_odd.clone(),
            sequence: SequenceSpec::Named("periodic_sin_cos_trb".into()),
            gap_policy: GapPolicy::relative(2.0).with_floor(2e-2),
            ..preset("km_periodic_z2_even")?
        },
        "km_periodic_z2_odd_weak_disorder" => RunConfig {
            disorder: Some(DisorderSpec { variance: 0.5, seed: WEAK_DISORDER_SEED }),
            ..preset("km_periodic_z2_odd")?
        },
        // Charge-center sweeps.
        "wcc_haldane_trivial" => RunConfig {
            model: haldane_clean,
            lattice: LatticeSpec::honeycomb(10, 10, Boundary::Periodic),
            disorder: None,
            sequence: SequenceSpec::Named("periodic_exp".into()),
            gap_policy: GapPolicy::fixed_count(10),
            n_occ: None,
            wcc: Some(WccConfig::default()),
            output_dir: None,
            threads: 1,
        },
        "wcc_haldane_chern" => RunConfig {
            model: ModelParams::Haldane { v: 0.0, t: 1.0, tprime: ComplexParam::from(0.5) },
            ..preset("wcc_haldane_trivial")?
        },
        "wcc_km_z2_even" => RunConfig {
            model: km_even,
            ..preset("wcc_haldane_trivial")?
        },
        "wcc_km_z2_odd" => RunConfig {
            model: km_odd,
            ..preset("wcc_haldane_trivial")?
        },
        other => return Err(Error::Config(format!("unknown preset '{other}'"))),
    };
    Ok(cfg)
}

/// Names of the ten end-to-end scenarios, in presentation order.
pub const SCENARIO_PRESETS: [&str; 10] = [
    "km_dirichlet",
    "km_dirichlet_weak_disorder",
    "pxipy_dirichlet",
    "haldane_periodic",
    "haldane_periodic_weak_disorder",
    "haldane_periodic_strong_disorder",
    "haldane_bosonic",
    "km_periodic_z2_even",
    "km_periodic_z2_odd",
    "km_periodic_z2_odd_weak_disorder",
];

/// Load a configuration document. The document is either a full RunConfig
/// or `{"preset": "<name>", ...overrides}` where the remaining keys replace
/// the preset's fields.
pub fn load_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    parse_config(&text)
}

pub fn parse_config(text: &str) -> Result<RunConfig> {
    let mut doc: serde_json::Value =
        serde_json::from_str(text).map_err(|e| Error::Config(format!("invalid JSON: {e}")))?;
    let obj = doc
        .as_object_mut()
        .ok_or_else(|| Error::Config("configuration must be a JSON object".into()))?;
    let cfg = if let Some(name) = obj.remove("preset") {
        let name = name
            .as_str()
            .ok_or_else(|| Error::Config("preset must be a string".into()))?
            .to_string();
        let base = preset(&name)?;
        let mut merged = serde_json::to_value(&base)?;
        let m = merged.as_object_mut().expect("config serializes to an object");
        for (k, v) in obj.iter() {
            m.insert(k.clone(), v.clone());
        }
        serde_json::from_value(merged).map_err(|e| Error::Config(format!("bad override: {e}")))?
    } else {
        serde_json::from_value(doc).map_err(|e| Error::Config(format!("bad config: {e}")))?
    };
    let cfg: RunConfig = cfg;
    cfg.validate()?;
    Ok(cfg)
}
