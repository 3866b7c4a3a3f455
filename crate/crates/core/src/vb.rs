//! Blocked partially-factorized variational Bayes.
//!
//! With `z̄ ~ N(γ_pst, Γ_pst)` truncated to `z̄ > 0` and
//! `β | z̄ ~ N(ξ + K(z̄ − γ_pst), V_pst)`, where `K = ωΔΓ_pst⁻¹`, the
//! approximation keeps `q(β | z̄)` exact and factorizes `q(z̄)` over blocks
//! of the augmented data. Coordinate ascent ([`cavi_pfm`]) sets each block
//! to a truncated normal whose moments come from [`tmvn_moments`], so the
//! whole fit is deterministic.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gauss::{
    chol_psd, mvn_cdf, sample_mvn, sample_tmvn, symmetrize, tmvn_moments, CdfSettings, SpdMatrix,
    MOMENT_DIM_CAP,
};
use crate::model::{ModelSpec, NewUnit, ProbitLikelihood};
use crate::serde_util::matrix_rows;
use crate::sun::{PosteriorDraws, SamplerMeta, SunParams};

pub const DEFAULT_TOL: f64 = 1e-6;
pub const DEFAULT_MAX_ITER: usize = 1000;

/// Latent-variable form of a SUN posterior.
#[derive(Debug, Clone)]
pub struct AugmentedForm {
    pub xi: DVector<f64>,
    pub omega: SpdMatrix,
    /// `X_pst = ΔᵀΩ̄⁻¹ω⁻¹`, `(h+m) × q`.
    pub x_pst: DMatrix<f64>,
    /// `γ_pst`.
    pub gamma: DVector<f64>,
    /// `η_pst = γ_pst − X_pst ξ`.
    pub eta: DVector<f64>,
    /// `Σ_pst = Γ_pst − X_pst Ω X_pstᵀ`.
    pub sigma: DMatrix<f64>,
    pub gamma_pst: SpdMatrix,
    /// `Γ_pst⁻¹`.
    pub gamma_inv: DMatrix<f64>,
    /// `K = ωΔΓ_pst⁻¹ = Ω X_pstᵀ Γ_pst⁻¹`, `q × (h+m)`.
    pub gain: DMatrix<f64>,
    /// `V_pst = Ω − K Γ_pst Kᵀ`.
    pub v_pst: SpdMatrix,
    /// Rows coming from the prior's own skewness (`h` of the prior).
    pub prior_rows: usize,
    /// Row ranges of the likelihood units, offset by `prior_rows`.
    pub unit_rows: Vec<std::ops::Range<usize>>,
}

impl AugmentedForm {
    pub fn dim(&self) -> usize {
        self.gamma.len()
    }

    pub fn q(&self) -> usize {
        self.xi.len()
    }

    /// Augmented form of `posterior` with no unit structure: every latent
    /// row is treated as its own unit.
    pub fn from_posterior(posterior: &SunParams) -> Result<Self> {
        let n = posterior.h();
        build_form(posterior, 0, (0..n).map(|i| i..i + 1).collect())
    }
}

/// Augmented form of the posterior obtained by updating some prior with `lik`.
pub fn augmented_form(posterior: &SunParams, lik: &ProbitLikelihood) -> Result<AugmentedForm> {
    if posterior.h() < lik.m || posterior.q() != lik.q {
        return Err(Error::DimensionMismatch {
            what: "posterior latent dimension vs likelihood rows",
            expected: lik.m,
            found: posterior.h(),
        });
    }
    let h0 = posterior.h() - lik.m;
    let units = lik
        .unit_blocks
        .iter()
        .map(|r| r.start + h0..r.end + h0)
        .collect();
    build_form(posterior, h0, units)
}

fn build_form(
    post: &SunParams,
    prior_rows: usize,
    unit_rows: Vec<std::ops::Range<usize>>,
) -> Result<AugmentedForm> {
    let q = post.q();
    let w = DMatrix::from_diagonal(post.scale());
    let w_delta = &w * post.delta();
    // X_pst = Δᵀ ω Ω⁻¹
    let x_pst = post.omega().solve(&w_delta).transpose();
    let gamma = post.gamma().clone();
    let eta = &gamma - &x_pst * post.xi();
    let sigma = post.conditional_gamma();
    let gamma_inv = post.gamma_corr().inverse();
    let gain = &w_delta * &gamma_inv;
    let v = symmetrize(&(post.omega().values() - &gain * w_delta.transpose()));
    let v_pst = if q == 0 {
        SpdMatrix::identity(0)
    } else {
        chol_psd(&v)?
    };
    Ok(AugmentedForm {
        xi: post.xi().clone(),
        omega: post.omega().clone(),
        x_pst,
        gamma,
        eta,
        sigma,
        gamma_pst: post.gamma_corr().clone(),
        gamma_inv,
        gain,
        v_pst,
        prior_rows,
        unit_rows,
    })
}

/// A partition of the latent rows into blocks.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Blocking {
    pub blocks: Vec<Vec<usize>>,
}

impl Blocking {
    pub fn new(blocks: Vec<Vec<usize>>, dim: usize) -> Result<Self> {
        let mut seen = vec![false; dim];
        for b in &blocks {
            if b.is_empty() {
                return Err(Error::InvalidParameter("empty block".into()));
            }
            if b.len() > MOMENT_DIM_CAP {
                return Err(Error::DimensionTooLarge {
                    what: "variational block",
                    dim: b.len(),
                    cap: MOMENT_DIM_CAP,
                });
            }
            for &i in b {
                if i >= dim {
                    return Err(Error::IndexOutOfRange { index: i, len: dim });
                }
                if seen[i] {
                    return Err(Error::InvalidParameter(format!(
                        "row {i} appears in two blocks"
                    )));
                }
                seen[i] = true;
            }
        }
        if let Some(i) = seen.iter().position(|s| !s) {
            return Err(Error::InvalidParameter(format!(
                "row {i} not covered by any block"
            )));
        }
        Ok(Blocking { blocks })
    }

    pub fn singleton(dim: usize) -> Self {
        Blocking {
            blocks: (0..dim).map(|i| vec![i]).collect(),
        }
    }

    pub fn single(dim: usize) -> Self {
        Blocking {
            blocks: if dim == 0 {
                Vec::new()
            } else {
                vec![(0..dim).collect()]
            },
        }
    }

    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }
}

/// One block per unit, preceded by one block holding the prior's rows.
pub fn default_blocking(aug: &AugmentedForm) -> Blocking {
    let mut blocks = Vec::new();
    if aug.prior_rows > 0 {
        blocks.push((0..aug.prior_rows).collect());
    }
    for r in &aug.unit_rows {
        blocks.push(r.clone().collect());
    }
    Blocking { blocks }
}

/// Truncated normal factor `TN(0; loc, cov)` for one block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockState {
    pub indices: Vec<usize>,
    /// Location of the truncated normal.
    pub loc: Vec<f64>,
    /// Scale matrix of the truncated normal.
    pub cond_cov: Vec<Vec<f64>>,
    /// Coupling `W_c` to the other rows (ascending order), empty for MF.
    #[serde(default)]
    pub coupling: Vec<Vec<f64>>,
    pub mean: Vec<f64>,
    pub cov: Vec<Vec<f64>>,
    /// `log P(z_c > 0)` under the untruncated block law.
    pub log_norm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VBState {
    pub blocks: Vec<BlockState>,
    pub iterations: usize,
    pub converged: bool,
    /// Largest change in any block mean, per sweep.
    pub trace: Vec<f64>,
}

impl VBState {
    pub fn blocking(&self) -> Blocking {
        Blocking {
            blocks: self.blocks.iter().map(|b| b.indices.clone()).collect(),
        }
    }

    /// Concatenated `E[z̄]` in row order.
    pub fn mean(&self, dim: usize) -> DVector<f64> {
        let mut out = DVector::zeros(dim);
        for b in &self.blocks {
            for (k, &i) in b.indices.iter().enumerate() {
                out[i] = b.mean[k];
            }
        }
        out
    }

    /// Block-diagonal `Var(z̄)`.
    pub fn variance(&self, dim: usize) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(dim, dim);
        for b in &self.blocks {
            for (a, &i) in b.indices.iter().enumerate() {
                for (c, &j) in b.indices.iter().enumerate() {
                    out[(i, j)] = b.cov[a][c];
                }
            }
        }
        out
    }
}

fn rows_of(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    matrix_rows(m)
}

fn from_rows(rows: &[Vec<f64>]) -> DMatrix<f64> {
    let n = rows.len();
    let c = rows.first().map_or(0, |r| r.len());
    DMatrix::from_fn(n, c, |i, j| rows[i][j])
}

struct BlockPrec {
    idx: Vec<usize>,
    rest: Vec<usize>,
    /// `(Γ⁻¹)_{cc}`.
    p_cc: DMatrix<f64>,
    /// `((Γ⁻¹)_{cc})⁻¹`.
    cond: SpdMatrix,
}

/// Coordinate-ascent driver. [`cavi_pfm`] covers the usual case; this type
/// exposes single sweeps and custom starting points.
pub struct Cavi<'a> {
    aug: &'a AugmentedForm,
    blocks: Vec<BlockPrec>,
    /// `E[z̄] − γ`.
    x: DVector<f64>,
    /// `Γ⁻¹ x`.
    r: DVector<f64>,
    states: Vec<BlockState>,
    trace: Vec<f64>,
}

impl<'a> Cavi<'a> {
    /// Precompute the block conditionals and start every block at the
    /// truncated normal `TN(0; γ_c, Γ_c)` that ignores the coupling.
    pub fn new(aug: &'a AugmentedForm, blocking: &Blocking) -> Result<Self> {
        let mut cavi = Self::prepare(aug, blocking)?;
        let n = aug.dim();
        let mut x = DVector::zeros(n);
        for (c, b) in cavi.blocks.iter().enumerate() {
            let loc = DVector::from_fn(b.idx.len(), |k, _| aug.gamma[b.idx[k]]);
            let st = block_update(b, &loc, &aug.gamma_inv)?;
            for (k, &i) in b.idx.iter().enumerate() {
                x[i] = st.mean[k] - aug.gamma[i];
            }
            cavi.states[c] = st;
        }
        cavi.r = &aug.gamma_inv * &x;
        cavi.x = x;
        Ok(cavi)
    }

    /// Start from given `E[z̄]` (entries must be positive). Block
    /// covariances stay unset until the first sweep.
    pub fn with_means(
        aug: &'a AugmentedForm,
        blocking: &Blocking,
        means: &DVector<f64>,
    ) -> Result<Self> {
        let n = aug.dim();
        if means.len() != n {
            return Err(Error::DimensionMismatch {
                what: "initial latent means",
                expected: n,
                found: means.len(),
            });
        }
        let mut cavi = Self::prepare(aug, blocking)?;
        cavi.x = means - &aug.gamma;
        cavi.r = &aug.gamma_inv * &cavi.x;
        for (c, b) in cavi.blocks.iter().enumerate() {
            cavi.states[c].mean = b.idx.iter().map(|&i| means[i]).collect();
        }
        Ok(cavi)
    }

    fn prepare(aug: &'a AugmentedForm, blocking: &Blocking) -> Result<Self> {
        let n = aug.dim();
        let blocking = Blocking::new(blocking.blocks.clone(), n)?;
        let p = &aug.gamma_inv;
        let mut blocks = Vec::with_capacity(blocking.len());
        let mut states = Vec::with_capacity(blocking.len());
        for idx in blocking.blocks {
            let k = idx.len();
            let rest: Vec<usize> = (0..n).filter(|i| !idx.contains(i)).collect();
            let p_cc = DMatrix::from_fn(k, k, |a, b| p[(idx[a], idx[b])]);
            let cond = chol_psd(&chol_psd(&p_cc)?.inverse())?;
            let p_cr = DMatrix::from_fn(k, rest.len(), |a, b| p[(idx[a], rest[b])]);
            let coupling = -(cond.values() * p_cr);
            states.push(BlockState {
                indices: idx.clone(),
                loc: vec![0.0; k],
                cond_cov: rows_of(cond.values()),
                coupling: rows_of(&coupling),
                mean: vec![0.0; k],
                cov: vec![vec![0.0; k]; k],
                log_norm: 0.0,
            });
            blocks.push(BlockPrec {
                idx,
                rest,
                p_cc,
                cond,
            });
        }
        Ok(Cavi {
            aug,
            blocks,
            x: DVector::zeros(n),
            r: DVector::zeros(n),
            states,
            trace: Vec::new(),
        })
    }

    /// One pass over the blocks in ascending order; returns the largest
    /// absolute change of any block mean.
    pub fn sweep(&mut self) -> Result<f64> {
        let aug = self.aug;
        let mut change = 0.0f64;
        for c in 0..self.blocks.len() {
            let b = &self.blocks[c];
            let k = b.idx.len();
            let xc = DVector::from_fn(k, |a, _| self.x[b.idx[a]]);
            let rc = DVector::from_fn(k, |a, _| self.r[b.idx[a]]);
            // Γ⁻¹[c, −c] x_{−c}
            let cross = rc - &b.p_cc * &xc;
            let gc = DVector::from_fn(k, |a, _| aug.gamma[b.idx[a]]);
            let loc = gc - b.cond.values() * cross;
            let st = block_update(b, &loc, &aug.gamma_inv)?;
            let mut delta = DVector::zeros(k);
            for (a, &i) in b.idx.iter().enumerate() {
                let nx = st.mean[a] - aug.gamma[i];
                delta[a] = nx - self.x[i];
                change = change.max((st.mean[a] - self.states[c].mean[a]).abs());
                self.x[i] = nx;
            }
            for (a, &i) in b.idx.iter().enumerate() {
                if delta[a] != 0.0 {
                    self.r.axpy(delta[a], &aug.gamma_inv.column(i), 1.0);
                }
            }
            self.states[c] = st;
        }
        self.trace.push(change);
        Ok(change)
    }

    pub fn state(&self, converged: bool) -> VBState {
        VBState {
            blocks: self.states.clone(),
            iterations: self.trace.len(),
            converged,
            trace: self.trace.clone(),
        }
    }
}

fn block_update(b: &BlockPrec, loc: &DVector<f64>, p: &DMatrix<f64>) -> Result<BlockState> {
    let k = b.idx.len();
    let m = tmvn_moments(&DVector::zeros(k), loc, &b.cond)?;
    let p_cr = DMatrix::from_fn(k, b.rest.len(), |a, c| p[(b.idx[a], b.rest[c])]);
    Ok(BlockState {
        indices: b.idx.clone(),
        loc: loc.iter().copied().collect(),
        cond_cov: rows_of(b.cond.values()),
        coupling: rows_of(&(-(b.cond.values() * p_cr))),
        mean: m.mean.iter().copied().collect(),
        cov: rows_of(&m.cov),
        log_norm: m.log_norm,
    })
}

/// Coordinate ascent for the blocked partially-factorized approximation.
/// Hitting `max_iter` returns the current state with `converged = false`.
pub fn cavi_pfm(
    aug: &AugmentedForm,
    blocking: &Blocking,
    tol: f64,
    max_iter: usize,
) -> Result<VBState> {
    let mut cavi = Cavi::new(aug, blocking)?;
    for _ in 0..max_iter {
        if cavi.sweep()? <= tol {
            return Ok(cavi.state(true));
        }
    }
    Ok(cavi.state(false))
}

/// Posterior mean and covariance of `β` implied by `state`.
pub fn vb_moments(state: &VBState, aug: &AugmentedForm) -> (DVector<f64>, DMatrix<f64>) {
    let n = aug.dim();
    let ez = state.mean(n);
    let var = state.variance(n);
    let mean = &aug.xi + &aug.gain * (ez - &aug.gamma);
    let cov = symmetrize(&(aug.v_pst.values() + &aug.gain * var * aug.gain.transpose()));
    (mean, cov)
}

/// Draws from the variational posterior: blocks of `z̄` independently from
/// their truncated normals, then `β = ξ + K(z̄ − γ) + ε`, `ε ~ N(0, V_pst)`.
pub fn sample_vb<R: Rng + ?Sized>(
    state: &VBState,
    aug: &AugmentedForm,
    count: usize,
    rng: &mut R,
) -> Result<PosteriorDraws> {
    let n = aug.dim();
    let q = aug.q();
    let mut z = DMatrix::zeros(count, n);
    let mut acceptance = 1.0f64;
    let mut method = None;
    for b in &state.blocks {
        let k = b.indices.len();
        let cov = chol_psd(&from_rows(&b.cond_cov))?;
        let s = sample_tmvn(
            &DVector::zeros(k),
            &DVector::from_column_slice(&b.loc),
            &cov,
            count,
            rng,
        )?;
        acceptance = acceptance.min(s.acceptance);
        method = Some(s.method);
        for (a, &i) in b.indices.iter().enumerate() {
            z.column_mut(i).copy_from(&s.draws.column(a));
        }
    }
    let eps = sample_mvn(&DVector::zeros(q), &aug.v_pst, count, rng)?;
    for mut row in z.row_iter_mut() {
        row -= aug.gamma.transpose();
    }
    let mut draws = eps + z * aug.gain.transpose();
    for mut row in draws.row_iter_mut() {
        row += aug.xi.transpose();
    }
    Ok(PosteriorDraws {
        draws,
        seed: None,
        meta: SamplerMeta {
            tmvn_method: method,
            acceptance,
            jitter: aug.v_pst.jitter(),
        },
    })
}

/// Predictive class frequencies from `count` variational draws.
pub fn predict_vb<R: Rng + ?Sized>(
    state: &VBState,
    aug: &AugmentedForm,
    spec: &ModelSpec,
    x_new: &NewUnit,
    count: usize,
    rng: &mut R,
) -> Result<Vec<f64>> {
    let draws = sample_vb(state, aug, count, rng)?;
    crate::model::class_frequencies(&draws.draws, spec, x_new, rng)
}

/// Mean-field baseline: `q(β) q(z̄)` with `q(z̄)` factorized over blocks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MfState {
    pub beta_mean: Vec<f64>,
    pub z: VBState,
}

impl MfState {
    /// `q(β) = N(beta_mean, V_pst)`.
    pub fn moments(&self, aug: &AugmentedForm) -> (DVector<f64>, DMatrix<f64>) {
        (
            DVector::from_column_slice(&self.beta_mean),
            aug.v_pst.values().clone(),
        )
    }
}

/// Coordinate ascent for the mean-field baseline. Needs `Σ_pst` block
/// diagonal with respect to `blocking`.
pub fn cavi_mf(
    aug: &AugmentedForm,
    blocking: &Blocking,
    tol: f64,
    max_iter: usize,
) -> Result<MfState> {
    let n = aug.dim();
    let blocking = Blocking::new(blocking.blocks.clone(), n)?;
    let mut owner = vec![0usize; n];
    for (c, b) in blocking.blocks.iter().enumerate() {
        for &i in b {
            owner[i] = c;
        }
    }
    for i in 0..n {
        for j in 0..i {
            let s = aug.sigma[(i, j)];
            if owner[i] != owner[j]
                && s.abs() > 1e-10 * (aug.sigma[(i, i)] * aug.sigma[(j, j)]).sqrt()
            {
                return Err(Error::InvalidParameter(format!(
                    "mean-field baseline needs a block-diagonal Sigma_pst; rows {j} and {i} are coupled"
                )));
            }
        }
    }
    let covs: Vec<SpdMatrix> = blocking
        .blocks
        .iter()
        .map(|b| {
            chol_psd(&DMatrix::from_fn(b.len(), b.len(), |x, y| {
                aug.sigma[(b[x], b[y])]
            }))
        })
        .collect::<Result<_>>()?;
    let mut beta = aug.xi.clone();
    let mut ez = aug.gamma.clone();
    let mut states: Vec<BlockState> = Vec::new();
    let mut trace = Vec::new();
    let mut converged = false;
    for _ in 0..max_iter {
        let lin = &aug.eta + &aug.x_pst * &beta;
        let mut change = 0.0f64;
        states.clear();
        for (b, cov) in blocking.blocks.iter().zip(&covs) {
            let loc = DVector::from_fn(b.len(), |k, _| lin[b[k]]);
            let m = tmvn_moments(&DVector::zeros(b.len()), &loc, cov)?;
            for (k, &i) in b.iter().enumerate() {
                change = change.max((m.mean[k] - ez[i]).abs());
                ez[i] = m.mean[k];
            }
            states.push(BlockState {
                indices: b.clone(),
                loc: loc.iter().copied().collect(),
                cond_cov: rows_of(cov.values()),
                coupling: Vec::new(),
                mean: m.mean.iter().copied().collect(),
                cov: rows_of(&m.cov),
                log_norm: m.log_norm,
            });
        }
        beta = &aug.xi + &aug.gain * (&ez - &aug.gamma);
        trace.push(change);
        if change <= tol {
            converged = true;
            break;
        }
    }
    Ok(MfState {
        beta_mean: beta.iter().copied().collect(),
        z: VBState {
            iterations: trace.len(),
            blocks: states,
            converged,
            trace,
        },
    })
}

/// `KL[q(z̄) ‖ p(z̄ | y)]`, with the exact normalizer `Φ_{h+m}(γ; Γ)`
/// estimated by [`mvn_cdf`].
pub fn kl_zbar<R: Rng + ?Sized>(
    state: &VBState,
    aug: &AugmentedForm,
    settings: &CdfSettings,
    rng: &mut R,
) -> Result<f64> {
    let log_zp = exact_log_normalizer(aug, settings, rng)?;
    Ok(kl_zbar_with_normalizer(state, aug, log_zp))
}

/// `log Φ_{h+m}(γ_pst; Γ_pst)`.
pub fn exact_log_normalizer<R: Rng + ?Sized>(
    aug: &AugmentedForm,
    settings: &CdfSettings,
    rng: &mut R,
) -> Result<f64> {
    Ok(mvn_cdf(aug.gamma.as_slice(), &aug.gamma_pst, settings, rng)?.log_prob)
}

/// [`kl_zbar`] with a precomputed `log Φ_{h+m}(γ_pst; Γ_pst)`, so that
/// several states can be compared against the same normalizer.
pub fn kl_zbar_with_normalizer(state: &VBState, aug: &AugmentedForm, log_zp: f64) -> f64 {
    let n = aug.dim();
    let ez = state.mean(n);
    let var = state.variance(n);
    let mut e_log_q = 0.0;
    for b in &state.blocks {
        let k = b.indices.len();
        let cov = from_rows(&b.cond_cov);
        let spd = match chol_psd(&cov) {
            Ok(s) => s,
            Err(_) => return f64::INFINITY,
        };
        let d = DVector::from_fn(k, |a, _| b.mean[a] - b.loc[a]);
        let second = from_rows(&b.cov) + &d * d.transpose();
        let tr = spd.solve(&second).trace();
        e_log_q += -0.5 * spd.log_det()
            - k as f64 * crate::gauss::normal::LN_SQRT_2PI
            - b.log_norm
            - 0.5 * tr;
    }
    let d = &ez - &aug.gamma;
    let second = var + &d * d.transpose();
    let tr = (&aug.gamma_inv * second).trace();
    let e_log_p = -0.5 * aug.gamma_pst.log_det()
        - n as f64 * crate::gauss::normal::LN_SQRT_2PI
        - log_zp
        - 0.5 * tr;
    e_log_q - e_log_p
}

/// Joint `KL[q(β) q(z̄) ‖ p(β, z̄ | y)]` for the mean-field baseline.
pub fn kl_mf_joint(mf: &MfState, aug: &AugmentedForm, log_zp: f64) -> Result<f64> {
    let n = aug.dim();
    let kl_z = kl_zbar_with_normalizer(&mf.z, aug, log_zp);
    let ez = mf.z.mean(n);
    let var = mf.z.variance(n);
    let mu = DVector::from_column_slice(&mf.beta_mean);
    let resid = mu - &aug.xi - &aug.gain * (ez - &aug.gamma);
    let spread = &aug.gain * var * aug.gain.transpose();
    let vinv = aug.v_pst.solve(&spread).trace();
    Ok(kl_z + 0.5 * (aug.v_pst.quad_form_inv(&resid) + vinv))
}
