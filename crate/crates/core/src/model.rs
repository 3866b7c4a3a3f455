//! Likelihood construction for the three multinomial probit families.
//!
//! Every family reduces to `p(y | β) = Φ_m(X̄β; Λ)` with `Λ` block diagonal
//! over units, so a [`ProbitLikelihood`] stores `X̄` together with the
//! per-unit covariance blocks.

use std::ops::Range;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gauss::{chol_psd, mvn_cdf, sample_mvn, CdfSettings, SpdMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelFamily {
    /// Class-specific attributes, shared coefficients.
    DiscreteChoice,
    /// Unit-level predictors with class-specific coefficients (`β_L = 0`).
    ClassSpecific,
    /// Sequential binary gates with unit-variance errors.
    Sequential,
}

#[derive(Debug, Clone)]
pub struct ModelSpec {
    pub family: ModelFamily,
    pub classes: usize,
    pub predictors: usize,
    /// Error covariance, `classes × classes`. Ignored by `Sequential`.
    pub sigma: SpdMatrix,
}

impl ModelSpec {
    pub fn new(
        family: ModelFamily,
        classes: usize,
        predictors: usize,
        sigma: Option<SpdMatrix>,
    ) -> Result<Self> {
        if classes < 2 {
            return Err(Error::InvalidParameter(format!(
                "need at least 2 classes, got {classes}"
            )));
        }
        if predictors == 0 {
            return Err(Error::InvalidParameter(
                "need at least one predictor".into(),
            ));
        }
        let sigma = match (family, sigma) {
            (ModelFamily::Sequential, _) | (_, None) => SpdMatrix::identity(classes),
            (_, Some(s)) => {
                if s.dim() != classes {
                    return Err(Error::DimensionMismatch {
                        what: "error covariance",
                        expected: classes,
                        found: s.dim(),
                    });
                }
                s
            }
        };
        Ok(ModelSpec {
            family,
            classes,
            predictors,
            sigma,
        })
    }

    /// Coefficient dimension.
    pub fn q(&self) -> usize {
        match self.family {
            ModelFamily::DiscreteChoice => self.predictors,
            _ => self.predictors * (self.classes - 1),
        }
    }
}

/// Predictors for a set of units.
#[derive(Debug, Clone, PartialEq)]
pub enum Predictors {
    /// `n × p`, one row per unit.
    PerUnit(DMatrix<f64>),
    /// One `L × p` matrix per unit, row `l` holding class `l`'s attributes.
    PerClass(Vec<DMatrix<f64>>),
}

impl Predictors {
    pub fn len(&self) -> usize {
        match self {
            Predictors::PerUnit(x) => x.nrows(),
            Predictors::PerClass(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn unit(&self, i: usize) -> NewUnit {
        match self {
            Predictors::PerUnit(x) => NewUnit::PerUnit(x.row(i).transpose()),
            Predictors::PerClass(v) => NewUnit::PerClass(v[i].clone()),
        }
    }
}

/// Predictors for a single unit.
#[derive(Debug, Clone, PartialEq)]
pub enum NewUnit {
    PerUnit(DVector<f64>),
    PerClass(DMatrix<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    /// Labels in `1..=L`.
    pub y: Vec<usize>,
    pub x: Predictors,
}

impl Dataset {
    pub fn new(y: Vec<usize>, x: Predictors) -> Result<Self> {
        if y.len() != x.len() {
            return Err(Error::DimensionMismatch {
                what: "labels vs predictor rows",
                expected: x.len(),
                found: y.len(),
            });
        }
        Ok(Dataset { y, x })
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProbitLikelihood {
    pub m: usize,
    pub q: usize,
    pub xbar: DMatrix<f64>,
    /// Diagonal blocks of `Λ`, one per unit.
    pub lambda_blocks: Vec<DMatrix<f64>>,
    /// Row ranges of each unit in `X̄`.
    pub unit_blocks: Vec<Range<usize>>,
}

impl ProbitLikelihood {
    pub fn empty(q: usize) -> Self {
        ProbitLikelihood {
            m: 0,
            q,
            xbar: DMatrix::zeros(0, q),
            lambda_blocks: Vec::new(),
            unit_blocks: Vec::new(),
        }
    }

    pub fn units(&self) -> usize {
        self.unit_blocks.len()
    }

    /// Dense `Λ`.
    pub fn lambda(&self) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(self.m, self.m);
        for (r, b) in self.unit_blocks.iter().zip(&self.lambda_blocks) {
            out.view_mut((r.start, r.start), (r.len(), r.len()))
                .copy_from(b);
        }
        out
    }

    fn push(&mut self, rows: DMatrix<f64>, lambda: DMatrix<f64>) {
        let k = rows.nrows();
        let start = self.m;
        let mut xbar = DMatrix::zeros(self.m + k, self.q);
        xbar.view_mut((0, 0), (self.m, self.q))
            .copy_from(&self.xbar);
        xbar.view_mut((self.m, 0), (k, self.q)).copy_from(&rows);
        self.xbar = xbar;
        self.m += k;
        self.lambda_blocks.push(lambda);
        self.unit_blocks.push(start..self.m);
    }

    /// Likelihood restricted to a subset of units, in the given order.
    pub fn select_units(&self, units: &[usize]) -> Result<Self> {
        let mut out = ProbitLikelihood::empty(self.q);
        for &u in units {
            let r = self.unit_blocks.get(u).ok_or(Error::IndexOutOfRange {
                index: u,
                len: self.units(),
            })?;
            out.push(
                self.xbar.rows(r.start, r.len()).into_owned(),
                self.lambda_blocks[u].clone(),
            );
        }
        Ok(out)
    }
}

/// Rows of `X̄` and the `Λ` block contributed by one unit with label `label`.
pub fn unit_block(
    spec: &ModelSpec,
    x: &NewUnit,
    label: usize,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let l = spec.classes;
    if label == 0 || label > l {
        return Err(Error::LabelOutOfRange { label, classes: l });
    }
    let p = spec.predictors;
    match (spec.family, x) {
        (ModelFamily::DiscreteChoice, NewUnit::PerClass(a)) => {
            if a.nrows() != l || a.ncols() != p {
                return Err(Error::DimensionMismatch {
                    what: "per-class attribute matrix",
                    expected: l * p,
                    found: a.nrows() * a.ncols(),
                });
            }
            Ok(choice_block(a, label, &spec.sigma))
        }
        (ModelFamily::ClassSpecific, NewUnit::PerUnit(xi)) => {
            check_len(xi, p)?;
            Ok(choice_block(&working_covariates(xi, l), label, &spec.sigma))
        }
        (ModelFamily::Sequential, NewUnit::PerUnit(xi)) => {
            check_len(xi, p)?;
            let ni = label.min(l - 1);
            let mut rows = DMatrix::zeros(ni, p * (l - 1));
            for k in 0..ni {
                let sign = if k + 1 == label { 1.0 } else { -1.0 };
                for j in 0..p {
                    rows[(k, k * p + j)] = sign * xi[j];
                }
            }
            Ok((rows, DMatrix::identity(ni, ni)))
        }
        (family, _) => Err(Error::InvalidParameter(format!(
            "predictor layout does not match the {family:?} family"
        ))),
    }
}

fn check_len(x: &DVector<f64>, p: usize) -> Result<()> {
    if x.len() != p {
        return Err(Error::DimensionMismatch {
            what: "unit predictor vector",
            expected: p,
            found: x.len(),
        });
    }
    Ok(())
}

/// `x_l = v̄_l ⊗ x` with `v̄_L = 0`, as an `L × p(L−1)` matrix.
pub fn working_covariates(x: &DVector<f64>, classes: usize) -> DMatrix<f64> {
    let p = x.len();
    let mut out = DMatrix::zeros(classes, p * (classes - 1));
    for l in 0..classes - 1 {
        for j in 0..p {
            out[(l, l * p + j)] = x[j];
        }
    }
    out
}

/// Rows `(x_y − x_k)ᵀ` for `k ≠ y` ascending and `Λ_i = V Σ Vᵀ` with rows
/// of `V` equal to `(v_k − v_y)ᵀ`.
fn choice_block(a: &DMatrix<f64>, label: usize, sigma: &SpdMatrix) -> (DMatrix<f64>, DMatrix<f64>) {
    let l = a.nrows();
    let y = label - 1;
    let others: Vec<usize> = (0..l).filter(|&k| k != y).collect();
    let rows = DMatrix::from_fn(l - 1, a.ncols(), |r, j| a[(y, j)] - a[(others[r], j)]);
    let s = sigma.values();
    let lam = DMatrix::from_fn(l - 1, l - 1, |r, c| {
        let (k, h) = (others[r], others[c]);
        s[(k, h)] - s[(k, y)] - s[(y, h)] + s[(y, y)]
    });
    (rows, lam)
}

fn build_checked(
    spec: &ModelSpec,
    data: &Dataset,
    family: ModelFamily,
) -> Result<ProbitLikelihood> {
    if spec.family != family {
        return Err(Error::InvalidParameter(format!(
            "spec family {:?} passed to the {family:?} builder",
            spec.family
        )));
    }
    build(spec, data)
}

pub fn build_discrete_choice(spec: &ModelSpec, data: &Dataset) -> Result<ProbitLikelihood> {
    build_checked(spec, data, ModelFamily::DiscreteChoice)
}

pub fn build_class_specific(spec: &ModelSpec, data: &Dataset) -> Result<ProbitLikelihood> {
    build_checked(spec, data, ModelFamily::ClassSpecific)
}

pub fn build_sequential(spec: &ModelSpec, data: &Dataset) -> Result<ProbitLikelihood> {
    build_checked(spec, data, ModelFamily::Sequential)
}

/// Builder for whichever family `spec` names.
pub fn build(spec: &ModelSpec, data: &Dataset) -> Result<ProbitLikelihood> {
    let mut lik = ProbitLikelihood::empty(spec.q());
    for i in 0..data.n() {
        let (rows, lam) = unit_block(spec, &data.x.unit(i), data.y[i])?;
        lik.push(rows, lam);
    }
    Ok(lik)
}

/// `lik` with one more unit observed at `label`.
pub fn build_expanded(
    lik: &ProbitLikelihood,
    spec: &ModelSpec,
    x_new: &NewUnit,
    label: usize,
) -> Result<ProbitLikelihood> {
    if lik.q != spec.q() {
        return Err(Error::DimensionMismatch {
            what: "likelihood coefficient dimension",
            expected: spec.q(),
            found: lik.q,
        });
    }
    let (rows, lam) = unit_block(spec, x_new, label)?;
    let mut out = lik.clone();
    out.push(rows, lam);
    Ok(out)
}

/// Per-unit log-likelihoods `log Φ(X̄_i β; Λ_i)`.
pub fn unit_log_likelihoods<R: Rng + ?Sized>(
    lik: &ProbitLikelihood,
    beta: &DVector<f64>,
    settings: &CdfSettings,
    rng: &mut R,
) -> Result<Vec<f64>> {
    if beta.len() != lik.q {
        return Err(Error::DimensionMismatch {
            what: "coefficient vector",
            expected: lik.q,
            found: beta.len(),
        });
    }
    let lin = &lik.xbar * beta;
    lik.unit_blocks
        .iter()
        .zip(&lik.lambda_blocks)
        .map(|(r, lam)| {
            let cov = chol_psd(lam)?;
            let upper: Vec<f64> = lin.rows(r.start, r.len()).iter().copied().collect();
            Ok(mvn_cdf(&upper, &cov, settings, rng)?.log_prob)
        })
        .collect()
}

/// `log Φ_m(X̄β; Λ)` as a sum over units.
pub fn likelihood_eval<R: Rng + ?Sized>(
    lik: &ProbitLikelihood,
    beta: &DVector<f64>,
    settings: &CdfSettings,
    rng: &mut R,
) -> Result<f64> {
    Ok(unit_log_likelihoods(lik, beta, settings, rng)?.iter().sum())
}

/// Class frequencies when each coefficient draw (row of `draws`) is paired
/// with fresh utility noise: argmax of utilities for the choice families,
/// first open gate for `Sequential`. Ties go to the smallest class.
pub fn class_frequencies<R: Rng + ?Sized>(
    draws: &DMatrix<f64>,
    spec: &ModelSpec,
    x_new: &NewUnit,
    rng: &mut R,
) -> Result<Vec<f64>> {
    let l = spec.classes;
    let t = draws.nrows();
    if draws.ncols() != spec.q() {
        return Err(Error::DimensionMismatch {
            what: "coefficient draws",
            expected: spec.q(),
            found: draws.ncols(),
        });
    }
    let mut counts = vec![0usize; l];
    if t == 0 {
        return Err(Error::InvalidParameter("no draws to predict from".into()));
    }
    match (spec.family, x_new) {
        (ModelFamily::Sequential, NewUnit::PerUnit(x)) => {
            check_len(x, spec.predictors)?;
            let p = spec.predictors;
            let noise = sample_mvn(&DVector::zeros(l - 1), &SpdMatrix::identity(l - 1), t, rng)?;
            for i in 0..t {
                let mut class = l;
                for g in 0..l - 1 {
                    let mut u = noise[(i, g)];
                    for j in 0..p {
                        u += x[j] * draws[(i, g * p + j)];
                    }
                    if u > 0.0 {
                        class = g + 1;
                        break;
                    }
                }
                counts[class - 1] += 1;
            }
        }
        (family, unit) => {
            let a = match (family, unit) {
                (ModelFamily::DiscreteChoice, NewUnit::PerClass(a))
                    if a.nrows() == l && a.ncols() == spec.predictors =>
                {
                    a.clone()
                }
                (ModelFamily::ClassSpecific, NewUnit::PerUnit(x)) => {
                    check_len(x, spec.predictors)?;
                    working_covariates(x, l)
                }
                _ => {
                    return Err(Error::InvalidParameter(format!(
                        "predictor layout does not match the {family:?} family"
                    )))
                }
            };
            let noise = sample_mvn(&DVector::zeros(l), &spec.sigma, t, rng)?;
            let util = draws * a.transpose() + noise;
            for row in util.row_iter() {
                let mut best = 0;
                for k in 1..l {
                    if row[k] > row[best] {
                        best = k;
                    }
                }
                counts[best] += 1;
            }
        }
    }
    Ok(counts.iter().map(|&c| c as f64 / t as f64).collect())
}
