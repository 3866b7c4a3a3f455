use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use sunprobit::serde_util::{bounds, matrix_from_rows, vector_from};
use sunprobit::vb::{DEFAULT_MAX_ITER, DEFAULT_TOL};
use sunprobit::{CdfSettings, ModelFamily, SpdMatrix, SunParams};

use crate::error::{config_err, CliResult};

pub const DEFAULT_OMEGA_SCALE: f64 = 5.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    #[default]
    Exact,
    Pfm,
    Mf,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum PriorSpec {
    Gaussian {
        #[serde(default)]
        xi: Option<Vec<f64>>,
        #[serde(default)]
        omega_scale: Option<f64>,
        #[serde(default)]
        omega: Option<Vec<Vec<f64>>>,
    },
    Sun {
        xi: Vec<f64>,
        omega: Vec<Vec<f64>>,
        delta: Vec<Vec<f64>>,
        #[serde(with = "bounds")]
        gamma: Vec<f64>,
        gamma_corr: Vec<Vec<f64>>,
    },
}

impl Default for PriorSpec {
    fn default() -> Self {
        PriorSpec::Gaussian {
            xi: None,
            omega_scale: None,
            omega: None,
        }
    }
}

impl PriorSpec {
    pub fn build(&self, q: usize) -> CliResult<SunParams> {
        Ok(match self {
            PriorSpec::Gaussian {
                xi,
                omega_scale,
                omega,
            } => {
                let xi = match xi {
                    Some(v) => vector_from(v, q, "prior xi")?,
                    None => DVector::zeros(q),
                };
                let omega = match (omega, omega_scale) {
                    (Some(_), Some(_)) => {
                        return Err(config_err(
                            "give either prior.omega or prior.omega_scale, not both",
                        ))
                    }
                    (Some(rows), None) => matrix_from_rows(rows, q, q, "prior omega")?,
                    (None, s) => {
                        let s = s.unwrap_or(DEFAULT_OMEGA_SCALE);
                        if !(s > 0.0) {
                            return Err(config_err("prior.omega_scale must be positive"));
                        }
                        DMatrix::identity(q, q) * (s * s)
                    }
                };
                SunParams::gaussian(xi, omega)?
            }
            PriorSpec::Sun {
                xi,
                omega,
                delta,
                gamma,
                gamma_corr,
            } => {
                let h = gamma.len();
                SunParams::new(
                    vector_from(xi, q, "prior xi")?,
                    matrix_from_rows(omega, q, q, "prior omega")?,
                    matrix_from_rows(delta, q, h, "prior delta")?,
                    DVector::from_column_slice(gamma),
                    matrix_from_rows(gamma_corr, h, h, "prior gamma_corr")?,
                )?
            }
        })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SigmaSpec {
    Named(String),
    Matrix(Vec<Vec<f64>>),
}

impl Default for SigmaSpec {
    fn default() -> Self {
        SigmaSpec::Named("identity".into())
    }
}

impl SigmaSpec {
    /// `None` means identity. The flag reports a non-unit diagonal.
    pub fn build(&self, classes: usize) -> CliResult<(Option<SpdMatrix>, bool)> {
        match self {
            SigmaSpec::Named(n) if n == "identity" => Ok((None, false)),
            SigmaSpec::Named(n) => Err(config_err(format!(
                "unknown sigma {n:?}; use \"identity\" or a matrix"
            ))),
            SigmaSpec::Matrix(rows) => {
                let m = matrix_from_rows(rows, classes, classes, "sigma")?;
                let unnormalized = (0..classes).any(|i| (m[(i, i)] - 1.0).abs() > 1e-12);
                Ok((Some(sunprobit::chol_psd(&m)?), unnormalized))
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BlockingSpec {
    /// One block per unit.
    #[default]
    Unit,
    Singleton,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VbSpec {
    pub tol: f64,
    pub max_iter: usize,
    pub blocking: BlockingSpec,
}

impl Default for VbSpec {
    fn default() -> Self {
        VbSpec {
            tol: DEFAULT_TOL,
            max_iter: DEFAULT_MAX_ITER,
            blocking: BlockingSpec::Unit,
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HoldoutSpec {
    /// Fraction of rows held out, chosen by a seeded permutation.
    #[serde(default)]
    pub fraction: Option<f64>,
    /// Explicit 1-based data rows.
    #[serde(default)]
    pub rows: Option<Vec<usize>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub family: Option<ModelFamily>,
    #[serde(default)]
    pub classes: Option<usize>,
    #[serde(default = "default_response")]
    pub response: String,
    /// Unit-level predictor columns; defaults to every other column.
    #[serde(default)]
    pub predictors: Option<Vec<String>>,
    /// Attribute stems for discrete choice; stem `a` reads columns `a_1..a_L`.
    #[serde(default)]
    pub per_class: Option<Vec<String>>,
    #[serde(default)]
    pub prior: PriorSpec,
    #[serde(default)]
    pub sigma: SigmaSpec,
    #[serde(default)]
    pub method: Method,
    #[serde(default = "default_draws")]
    pub draws: usize,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub cdf: CdfSettings,
    #[serde(default)]
    pub vb: VbSpec,
    #[serde(default = "yes")]
    pub standardize: bool,
    #[serde(default = "yes")]
    pub intercept: bool,
    #[serde(default)]
    pub holdout: Option<HoldoutSpec>,
    /// Also report the log-evidence of the training data.
    #[serde(default)]
    pub evidence: bool,
}

fn default_response() -> String {
    "y".into()
}

fn default_draws() -> usize {
    1000
}

fn yes() -> bool {
    true
}

impl RunConfig {
    pub fn parse(text: &str) -> CliResult<Self> {
        let cfg: RunConfig = serde_json::from_str(text).map_err(|e| config_err(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> CliResult<()> {
        if let Some(l) = self.classes {
            if l < 2 {
                return Err(config_err("classes must be at least 2"));
            }
        }
        if self.predictors.is_some() && self.per_class.is_some() {
            return Err(config_err("use either predictors or per_class"));
        }
        match (self.family(), self.per_class.is_some()) {
            (ModelFamily::DiscreteChoice, false) => {
                return Err(config_err(
                    "the discrete_choice family needs per_class attribute stems",
                ))
            }
            (ModelFamily::ClassSpecific | ModelFamily::Sequential, true) => {
                return Err(config_err(
                    "per_class attributes are only used by the discrete_choice family",
                ))
            }
            _ => {}
        }
        if let Some(h) = &self.holdout {
            match (h.fraction, &h.rows) {
                (Some(f), None) if (0.0..1.0).contains(&f) => {}
                (None, Some(_)) => {}
                _ => {
                    return Err(config_err(
                        "holdout needs exactly one of fraction in [0, 1) or rows",
                    ))
                }
            }
        }
        if !(self.vb.tol > 0.0) || self.vb.max_iter == 0 {
            return Err(config_err(
                "vb.tol must be positive and vb.max_iter at least 1",
            ));
        }
        Ok(())
    }

    pub fn family(&self) -> ModelFamily {
        self.family.unwrap_or(if self.per_class.is_some() {
            ModelFamily::DiscreteChoice
        } else {
            ModelFamily::Sequential
        })
    }
}
