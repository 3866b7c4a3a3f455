//! Unified skew-normal distributions and exact posterior computation.
//!
//! `β ~ SUN_{q,h}(ξ, Ω, Δ, γ, Γ)` has density
//! `φ_q(β − ξ; Ω) Φ_h(γ + ΔᵀΩ̄⁻¹ω⁻¹(β − ξ); Γ − ΔᵀΩ̄⁻¹Δ) / Φ_h(γ; Γ)`.
//! A SUN prior combined with a probit likelihood `Φ_m(X̄β; Λ)` gives a
//! `SUN_{q,h+m}` posterior ([`posterior_update`]), which can be sampled
//! exactly ([`sample_posterior`]) and whose normalizing constants give the
//! evidence and predictive probabilities.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gauss::{
    chol_psd, mvn_cdf, sample_mvn, sample_tmvn_with, symmetrize, CdfResult, CdfSettings, SpdMatrix,
    TmvnMethod, TmvnOptions,
};
use crate::model::{unit_block, ModelSpec, NewUnit, ProbitLikelihood};
use crate::serde_util::{matrix_from_rows, matrix_rows, vector_from};

/// Largest `h` accepted by the exact sampler.
pub const SAMPLER_CAP: usize = 500;
/// Largest `h` accepted by evidence and prediction.
pub const CDF_CAP: usize = 1000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SunParamsDoc", into = "SunParamsDoc")]
pub struct SunParams {
    xi: DVector<f64>,
    omega: SpdMatrix,
    delta: DMatrix<f64>,
    gamma: DVector<f64>,
    gamma_corr: SpdMatrix,
    scale: DVector<f64>,
    omega_bar: SpdMatrix,
}

impl SunParams {
    /// Validated constructor: `Γ` must have unit diagonal and
    /// `[[Γ, Δᵀ], [Δ, Ω̄]]` must be positive semidefinite.
    pub fn new(
        xi: DVector<f64>,
        omega: DMatrix<f64>,
        delta: DMatrix<f64>,
        gamma: DVector<f64>,
        gamma_corr: DMatrix<f64>,
    ) -> Result<Self> {
        let q = xi.len();
        let h = gamma.len();
        if omega.nrows() != q {
            return Err(Error::DimensionMismatch {
                what: "Omega",
                expected: q,
                found: omega.nrows(),
            });
        }
        if delta.nrows() != q || delta.ncols() != h {
            return Err(Error::DimensionMismatch {
                what: "Delta",
                expected: q * h,
                found: delta.nrows() * delta.ncols(),
            });
        }
        if gamma_corr.nrows() != h {
            return Err(Error::DimensionMismatch {
                what: "Gamma",
                expected: h,
                found: gamma_corr.nrows(),
            });
        }
        for i in 0..h {
            if (gamma_corr[(i, i)] - 1.0).abs() > 1e-10 {
                return Err(Error::InvalidParameter(format!(
                    "Gamma must be a correlation matrix; diagonal entry {} is {}",
                    i + 1,
                    gamma_corr[(i, i)]
                )));
            }
        }
        let params = Self::from_parts(xi, chol_psd(&omega)?, delta, gamma, chol_psd(&gamma_corr)?)?;
        let mut star = DMatrix::zeros(h + q, h + q);
        star.view_mut((0, 0), (h, h))
            .copy_from(params.gamma_corr.values());
        star.view_mut((h, 0), (q, h)).copy_from(&params.delta);
        star.view_mut((0, h), (h, q))
            .copy_from(&params.delta.transpose());
        star.view_mut((h, h), (q, q))
            .copy_from(params.omega_bar.values());
        chol_psd(&star)?;
        Ok(params)
    }

    /// `N_q(ξ, Ω)` as a `SUN_{q,0}`.
    pub fn gaussian(xi: DVector<f64>, omega: DMatrix<f64>) -> Result<Self> {
        let q = xi.len();
        Self::new(
            xi,
            omega,
            DMatrix::zeros(q, 0),
            DVector::zeros(0),
            DMatrix::zeros(0, 0),
        )
    }

    /// Isotropic Gaussian prior `N(0, scale² I)`.
    pub fn isotropic(q: usize, scale: f64) -> Result<Self> {
        Self::gaussian(DVector::zeros(q), DMatrix::identity(q, q) * (scale * scale))
    }

    fn from_parts(
        xi: DVector<f64>,
        omega: SpdMatrix,
        delta: DMatrix<f64>,
        gamma: DVector<f64>,
        gamma_corr: SpdMatrix,
    ) -> Result<Self> {
        let q = xi.len();
        let ov = omega.values();
        let scale = DVector::from_fn(q, |i, _| ov[(i, i)].sqrt());
        if scale.iter().any(|s| !(*s > 0.0)) {
            return Err(Error::InvalidParameter(
                "Omega needs a positive diagonal".into(),
            ));
        }
        let omega_bar = chol_psd(&DMatrix::from_fn(q, q, |i, j| {
            ov[(i, j)] / (scale[i] * scale[j])
        }))?;
        Ok(SunParams {
            xi,
            omega,
            delta,
            gamma,
            gamma_corr,
            scale,
            omega_bar,
        })
    }

    pub fn q(&self) -> usize {
        self.xi.len()
    }

    pub fn h(&self) -> usize {
        self.gamma.len()
    }

    pub fn xi(&self) -> &DVector<f64> {
        &self.xi
    }

    pub fn omega(&self) -> &SpdMatrix {
        &self.omega
    }

    pub fn delta(&self) -> &DMatrix<f64> {
        &self.delta
    }

    pub fn gamma(&self) -> &DVector<f64> {
        &self.gamma
    }

    /// The latent correlation matrix `Γ`.
    pub fn gamma_corr(&self) -> &SpdMatrix {
        &self.gamma_corr
    }

    /// `ω = diag(Ω)^{1/2}`.
    pub fn scale(&self) -> &DVector<f64> {
        &self.scale
    }

    pub fn omega_bar(&self) -> &SpdMatrix {
        &self.omega_bar
    }

    /// `Γ − ΔᵀΩ̄⁻¹Δ`, the covariance inside the density's CDF factor.
    pub fn conditional_gamma(&self) -> DMatrix<f64> {
        let w = self.omega_bar.solve(&self.delta);
        symmetrize(&(self.gamma_corr.values() - self.delta.transpose() * w))
    }

    /// `Φ_h(γ; Γ)`.
    pub fn log_normalizer<R: Rng + ?Sized>(
        &self,
        settings: &CdfSettings,
        rng: &mut R,
    ) -> Result<CdfResult> {
        mvn_cdf(self.gamma.as_slice(), &self.gamma_corr, settings, rng)
    }
}

#[derive(Serialize, Deserialize)]
struct SunParamsDoc {
    q: usize,
    h: usize,
    xi: Vec<f64>,
    omega: Vec<Vec<f64>>,
    delta: Vec<Vec<f64>>,
    gamma: Vec<f64>,
    gamma_corr: Vec<Vec<f64>>,
}

impl From<SunParams> for SunParamsDoc {
    fn from(p: SunParams) -> Self {
        SunParamsDoc {
            q: p.q(),
            h: p.h(),
            xi: p.xi.iter().copied().collect(),
            omega: matrix_rows(p.omega.values()),
            delta: matrix_rows(&p.delta),
            gamma: p.gamma.iter().copied().collect(),
            gamma_corr: matrix_rows(p.gamma_corr.values()),
        }
    }
}

impl TryFrom<SunParamsDoc> for SunParams {
    type Error = Error;

    fn try_from(d: SunParamsDoc) -> Result<Self> {
        SunParams::new(
            vector_from(&d.xi, d.q, "xi")?,
            matrix_from_rows(&d.omega, d.q, d.q, "Omega")?,
            matrix_from_rows(&d.delta, d.q, d.h, "Delta")?,
            vector_from(&d.gamma, d.h, "gamma")?,
            matrix_from_rows(&d.gamma_corr, d.h, d.h, "Gamma")?,
        )
    }
}

/// `log p(β)` under `params`.
pub fn sun_log_density<R: Rng + ?Sized>(
    params: &SunParams,
    beta: &DVector<f64>,
    settings: &CdfSettings,
    rng: &mut R,
) -> Result<f64> {
    let den = if params.h() == 0 {
        0.0
    } else {
        params.log_normalizer(settings, rng)?.log_prob
    };
    sun_log_density_given(params, beta, den, settings, rng)
}

/// [`sun_log_density`] with `log Φ_h(γ; Γ)` supplied, for evaluating many
/// points under one law.
pub fn sun_log_density_given<R: Rng + ?Sized>(
    params: &SunParams,
    beta: &DVector<f64>,
    log_normalizer: f64,
    settings: &CdfSettings,
    rng: &mut R,
) -> Result<f64> {
    if beta.len() != params.q() {
        return Err(Error::DimensionMismatch {
            what: "coefficient vector",
            expected: params.q(),
            found: beta.len(),
        });
    }
    let centered = beta - &params.xi;
    let gauss = params.omega.log_density(&centered);
    if params.h() == 0 {
        return Ok(gauss);
    }
    let scaled = centered.component_div(&params.scale);
    let shift = params.delta.transpose() * params.omega_bar.solve_vec(&scaled);
    let upper = &params.gamma + shift;
    let cond = chol_psd(&params.conditional_gamma())?;
    let num = mvn_cdf(upper.as_slice(), &cond, settings, rng)?;
    Ok(gauss + num.log_prob - log_normalizer)
}

/// Conjugate update of a SUN prior by a probit likelihood.
pub fn posterior_update(prior: &SunParams, lik: &ProbitLikelihood) -> Result<SunParams> {
    if lik.q != prior.q() {
        return Err(Error::DimensionMismatch {
            what: "likelihood coefficient dimension",
            expected: prior.q(),
            found: lik.q,
        });
    }
    let m = lik.m;
    if m == 0 {
        return Ok(prior.clone());
    }
    let q = prior.q();
    let h = prior.h();
    let xbar = &lik.xbar;
    let omega_xt = prior.omega.values() * xbar.transpose();
    let s_mat = symmetrize(&(xbar * &omega_xt + lik.lambda()));
    let s = DVector::from_fn(m, |i, _| s_mat[(i, i)].sqrt());
    if s.iter().any(|v| !(*v > 0.0)) {
        return Err(Error::InvalidParameter(
            "likelihood row with zero total variance".into(),
        ));
    }
    let delta_new = DMatrix::from_fn(q, m, |i, j| omega_xt[(i, j)] / (prior.scale[i] * s[j]));
    let gamma_new = (xbar * &prior.xi).component_div(&s);
    let gamma22 = DMatrix::from_fn(m, m, |i, j| s_mat[(i, j)] / (s[i] * s[j]));
    let mut delta = DMatrix::zeros(q, h + m);
    delta.view_mut((0, 0), (q, h)).copy_from(&prior.delta);
    delta.view_mut((0, h), (q, m)).copy_from(&delta_new);
    let mut gamma = DVector::zeros(h + m);
    gamma.rows_mut(0, h).copy_from(&prior.gamma);
    gamma.rows_mut(h, m).copy_from(&gamma_new);
    let mut gc = DMatrix::zeros(h + m, h + m);
    gc.view_mut((0, 0), (h, h))
        .copy_from(prior.gamma_corr.values());
    gc.view_mut((h, h), (m, m)).copy_from(&gamma22);
    if h > 0 {
        let xw = xbar * DMatrix::from_diagonal(&prior.scale) * &prior.delta;
        let g21 = DMatrix::from_fn(m, h, |i, j| xw[(i, j)] / s[i]);
        gc.view_mut((h, 0), (m, h)).copy_from(&g21);
        gc.view_mut((0, h), (h, m)).copy_from(&g21.transpose());
    }
    SunParams::from_parts(
        prior.xi.clone(),
        prior.omega.clone(),
        delta,
        gamma,
        chol_psd(&gc)?,
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplerMeta {
    /// How the truncated component was drawn; `None` when `h = 0`.
    pub tmvn_method: Option<TmvnMethod>,
    pub acceptance: f64,
    /// Jitter needed to factor `Ω̄ − ΔΓ⁻¹Δᵀ`.
    pub jitter: f64,
}

#[derive(Debug, Clone)]
pub struct PosteriorDraws {
    /// One draw per row.
    pub draws: DMatrix<f64>,
    pub seed: Option<u64>,
    pub meta: SamplerMeta,
}

impl PosteriorDraws {
    pub fn mean(&self) -> DVector<f64> {
        self.draws.row_mean().transpose()
    }

    /// Sample covariance with divisor `T − 1`.
    pub fn covariance(&self) -> DMatrix<f64> {
        let t = self.draws.nrows() as f64;
        let mean = self.draws.row_mean();
        let mut c = self.draws.clone();
        for mut r in c.row_iter_mut() {
            r -= &mean;
        }
        c.transpose() * c / (t - 1.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExactOptions {
    pub sampler_cap: usize,
    pub cdf_cap: usize,
    pub tmvn: TmvnOptions,
}

impl Default for ExactOptions {
    fn default() -> Self {
        ExactOptions {
            sampler_cap: SAMPLER_CAP,
            cdf_cap: CDF_CAP,
            tmvn: TmvnOptions::default(),
        }
    }
}

/// i.i.d. draws `β = ξ + ω(V₀ + ΔΓ⁻¹V₁)` with `V₀ ~ N(0, Ω̄ − ΔΓ⁻¹Δᵀ)` and
/// `V₁ ~ N(0, Γ)` truncated to `V₁ > −γ`.
pub fn sample_posterior<R: Rng + ?Sized>(
    params: &SunParams,
    count: usize,
    rng: &mut R,
) -> Result<PosteriorDraws> {
    sample_posterior_with(params, count, &ExactOptions::default(), rng)
}

pub fn sample_posterior_with<R: Rng + ?Sized>(
    params: &SunParams,
    count: usize,
    opts: &ExactOptions,
    rng: &mut R,
) -> Result<PosteriorDraws> {
    let q = params.q();
    let h = params.h();
    if h > opts.sampler_cap {
        return Err(Error::DimensionTooLarge {
            what: "exact sampler latent dimension h+m",
            dim: h,
            cap: opts.sampler_cap,
        });
    }
    if h == 0 {
        let draws = sample_mvn(&params.xi, &params.omega, count, rng)?;
        return Ok(PosteriorDraws {
            draws,
            seed: None,
            meta: SamplerMeta {
                tmvn_method: None,
                acceptance: 1.0,
                jitter: params.omega.jitter(),
            },
        });
    }
    // Γ⁻¹Δᵀ, h × q
    let gid = params.gamma_corr.solve(&params.delta.transpose());
    let m = symmetrize(&(params.omega_bar.values() - &params.delta * &gid));
    let m = chol_psd(&m)?;
    let v1 = sample_tmvn_with(
        &(-&params.gamma),
        &DVector::zeros(h),
        &params.gamma_corr,
        count,
        &opts.tmvn,
        rng,
    )?;
    let v0 = sample_mvn(&DVector::zeros(q), &m, count, rng)?;
    let mut draws = v0 + &v1.draws * gid;
    for j in 0..q {
        let (w, x) = (params.scale[j], params.xi[j]);
        for v in draws.column_mut(j).iter_mut() {
            *v = x + w * *v;
        }
    }
    Ok(PosteriorDraws {
        draws,
        seed: None,
        meta: SamplerMeta {
            tmvn_method: Some(v1.method),
            acceptance: v1.acceptance,
            jitter: m.jitter(),
        },
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Evidence {
    pub log_evidence: f64,
    /// `Φ_{h+m}(γ_pst; Γ_pst)`.
    pub posterior: CdfResult,
    /// `Φ_h(γ; Γ)`.
    pub prior: CdfResult,
}

impl Evidence {
    pub fn tolerance_met(&self) -> bool {
        self.posterior.tolerance_met && self.prior.tolerance_met
    }
}

fn check_cdf_cap(dim: usize, cap: usize) -> Result<()> {
    if dim > cap {
        return Err(Error::DimensionTooLarge {
            what: "latent dimension h+m for exact evidence/prediction",
            dim,
            cap,
        });
    }
    Ok(())
}

/// `log p(y) = log Φ_{h+m}(γ_pst; Γ_pst) − log Φ_h(γ; Γ)`.
pub fn log_evidence<R: Rng + ?Sized>(
    prior: &SunParams,
    lik: &ProbitLikelihood,
    settings: &CdfSettings,
    rng: &mut R,
) -> Result<Evidence> {
    log_evidence_with(prior, lik, settings, CDF_CAP, rng)
}

pub fn log_evidence_with<R: Rng + ?Sized>(
    prior: &SunParams,
    lik: &ProbitLikelihood,
    settings: &CdfSettings,
    cap: usize,
    rng: &mut R,
) -> Result<Evidence> {
    check_cdf_cap(prior.h() + lik.m, cap)?;
    let post = posterior_update(prior, lik)?;
    let den = prior.log_normalizer(settings, rng)?;
    let num = post.log_normalizer(settings, rng)?;
    Ok(Evidence {
        log_evidence: num.log_prob - den.log_prob,
        posterior: num,
        prior: den,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    /// Class probabilities, renormalized to sum to one.
    pub probs: Vec<f64>,
    /// Unnormalized ratios `Φ_{h+m_l}(·)/Φ_{h+m}(·)`.
    pub raw: Vec<f64>,
    pub raw_sum: f64,
    pub tolerance_met: bool,
}

impl Prediction {
    /// Most probable class (1-based); ties go to the smallest index.
    pub fn argmax(&self) -> usize {
        argmax(&self.probs) + 1
    }
}

pub(crate) fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &p) in v.iter().enumerate() {
        if p > v[best] {
            best = i;
        }
    }
    best
}

/// Exact predictive class probabilities for a new unit.
pub fn predict_exact<R: Rng + ?Sized>(
    prior: &SunParams,
    spec: &ModelSpec,
    lik: &ProbitLikelihood,
    x_new: &NewUnit,
    settings: &CdfSettings,
    rng: &mut R,
) -> Result<Prediction> {
    check_cdf_cap(prior.h() + lik.m + spec.classes - 1, CDF_CAP)?;
    let post = posterior_update(prior, lik)?;
    predict_from_posterior(&post, spec, x_new, settings, rng)
}

/// Predictive probabilities from an already updated posterior: label `l`
/// gets `Φ(γ_l; Γ_l) / Φ(γ_pst; Γ_pst)` where `(γ_l, Γ_l)` come from
/// updating the posterior with the new unit observed at `l`.
pub fn predict_from_posterior<R: Rng + ?Sized>(
    posterior: &SunParams,
    spec: &ModelSpec,
    x_new: &NewUnit,
    settings: &CdfSettings,
    rng: &mut R,
) -> Result<Prediction> {
    predict_from_posterior_with(posterior, spec, x_new, settings, CDF_CAP, rng)
}

pub fn predict_from_posterior_with<R: Rng + ?Sized>(
    posterior: &SunParams,
    spec: &ModelSpec,
    x_new: &NewUnit,
    settings: &CdfSettings,
    cap: usize,
    rng: &mut R,
) -> Result<Prediction> {
    check_cdf_cap(posterior.h() + spec.classes - 1, cap)?;
    let den = posterior.log_normalizer(settings, rng)?;
    let mut met = den.tolerance_met;
    let mut raw = Vec::with_capacity(spec.classes);
    for label in 1..=spec.classes {
        let (rows, lam) = unit_block(spec, x_new, label)?;
        let unit = ProbitLikelihood {
            m: rows.nrows(),
            q: spec.q(),
            unit_blocks: vec![0..rows.nrows()],
            xbar: rows,
            lambda_blocks: vec![lam],
        };
        let post_l = posterior_update(posterior, &unit)?;
        let num = post_l.log_normalizer(settings, rng)?;
        met &= num.tolerance_met;
        raw.push((num.log_prob - den.log_prob).exp());
    }
    let raw_sum: f64 = raw.iter().sum();
    Ok(Prediction {
        probs: raw.iter().map(|r| r / raw_sum).collect(),
        raw,
        raw_sum,
        tolerance_met: met,
    })
}

/// Marginal law of `β_S` for 0-based coordinate indices `S`.
pub fn marginal_subset(params: &SunParams, indices: &[usize]) -> Result<SunParams> {
    let q = params.q();
    for (k, &i) in indices.iter().enumerate() {
        if i >= q {
            return Err(Error::IndexOutOfRange { index: i, len: q });
        }
        if indices[..k].contains(&i) {
            return Err(Error::InvalidParameter(format!("index {i} repeated")));
        }
    }
    if indices.is_empty() {
        return Err(Error::InvalidParameter("empty index set".into()));
    }
    let h = params.h();
    let s = indices.len();
    let xi = DVector::from_fn(s, |i, _| params.xi[indices[i]]);
    let omega = params.omega.submatrix(indices)?;
    let delta = DMatrix::from_fn(s, h, |i, j| params.delta[(indices[i], j)]);
    SunParams::from_parts(
        xi,
        omega,
        delta,
        params.gamma.clone(),
        params.gamma_corr.clone(),
    )
}
