//! Slow reference implementations used to validate the main kernels.
//!
//! Nothing here calls the Gaussian CDF, truncated sampler or moment code of
//! [`crate::gauss`]; only [`chol_psd`] is shared. Univariate normal
//! functions come from `statrs`, bivariate probabilities from adaptive
//! quadrature, and truncated draws from a separate exponential-proposal
//! sampler.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use statrs::distribution::{Continuous, ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::gauss::chol_psd;
use crate::model::ProbitLikelihood;
use crate::sun::{PosteriorDraws, SamplerMeta, SunParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OracleMethod {
    Gibbs,
    Rejection,
    Quadrature,
    PlainMc,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleReport {
    pub estimate: Vec<f64>,
    pub std_error: Vec<f64>,
    pub draws_or_nodes: usize,
    pub method: OracleMethod,
    /// Error target of deterministic methods; zero for stochastic ones.
    pub tolerance: f64,
}

fn std_normal() -> Normal {
    Normal::standard()
}

fn phi(x: f64) -> f64 {
    std_normal().pdf(x)
}

fn big_phi(x: f64) -> f64 {
    std_normal().cdf(x)
}

/// One draw from `N(0, 1)` truncated to `(a, ∞)`: naive rejection for
/// `a < 0.5`, otherwise Robert's translated-exponential proposal.
pub fn truncated_std_normal<R: Rng + ?Sized>(a: f64, rng: &mut R) -> f64 {
    if a < 0.5 {
        loop {
            let z: f64 = rng.sample(StandardNormal);
            if z > a {
                return z;
            }
        }
    }
    let lambda = 0.5 * (a + (a * a + 4.0).sqrt());
    loop {
        let u: f64 = rng.random();
        let z = a - (1.0 - u).ln() / lambda;
        let v: f64 = rng.random();
        if v <= (-0.5 * (z - lambda) * (z - lambda)).exp() && z > a {
            return z;
        }
    }
}

/// Mean and batch-means standard error per column.
fn batch_summary(draws: &DMatrix<f64>) -> (Vec<f64>, Vec<f64>) {
    let n = draws.nrows();
    let bs = ((n as f64).sqrt() as usize).max(1);
    let nb = n / bs;
    let mut mean = Vec::new();
    let mut se = Vec::new();
    for c in draws.column_iter() {
        let m = c.mean();
        let bm: Vec<f64> = (0..nb).map(|b| c.rows(b * bs, bs).mean()).collect();
        let v = bm.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (nb as f64 - 1.0).max(1.0);
        mean.push(m);
        se.push((v / nb as f64).sqrt());
    }
    (mean, se)
}

fn iid_summary(draws: &DMatrix<f64>) -> (Vec<f64>, Vec<f64>) {
    let n = draws.nrows() as f64;
    let mut mean = Vec::new();
    let mut se = Vec::new();
    for c in draws.column_iter() {
        let m = c.mean();
        let v = c.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
        mean.push(m);
        se.push((v / n).sqrt());
    }
    (mean, se)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GibbsSettings {
    pub iterations: usize,
    /// Defaults to 20% of `iterations`.
    pub burnin: Option<usize>,
    pub thin: usize,
}

impl GibbsSettings {
    pub fn new(iterations: usize) -> Self {
        GibbsSettings {
            iterations,
            burnin: None,
            thin: 10,
        }
    }
}

#[derive(Debug, Clone)]
pub struct GibbsOutput {
    pub draws: PosteriorDraws,
    /// Posterior mean with batch-means standard errors.
    pub report: OracleReport,
}

/// Data-augmentation Gibbs sampler for a Gaussian prior: latent utilities
/// `z ~ N(X̄β, Λ)` restricted to `z > 0`, updated one coordinate at a time,
/// alternating with the conjugate draw of `β | z`.
pub fn gibbs_sampler<R: Rng + ?Sized>(
    prior: &SunParams,
    lik: &ProbitLikelihood,
    settings: &GibbsSettings,
    start: Option<&DVector<f64>>,
    rng: &mut R,
) -> Result<GibbsOutput> {
    if prior.h() != 0 {
        return Err(Error::InvalidParameter(
            "the Gibbs oracle needs a Gaussian prior (h = 0)".into(),
        ));
    }
    let q = prior.q();
    if lik.q != q {
        return Err(Error::DimensionMismatch {
            what: "likelihood coefficient dimension",
            expected: q,
            found: lik.q,
        });
    }
    let thin = settings.thin.max(1);
    let burnin = settings.burnin.unwrap_or(settings.iterations / 5);
    if settings.iterations <= burnin {
        return Err(Error::InvalidParameter(
            "iterations must exceed burn-in".into(),
        ));
    }
    let omega_inv = prior.omega().inverse();
    let lam_prec: Vec<DMatrix<f64>> = lik
        .lambda_blocks
        .iter()
        .map(|b| chol_psd(b).map(|s| s.inverse()))
        .collect::<Result<_>>()?;
    let mut lam_inv = DMatrix::zeros(lik.m, lik.m);
    for (r, p) in lik.unit_blocks.iter().zip(&lam_prec) {
        lam_inv
            .view_mut((r.start, r.start), (r.len(), r.len()))
            .copy_from(p);
    }
    let xt_li = lik.xbar.transpose() * &lam_inv;
    let prec = chol_psd(&(&omega_inv + &xt_li * &lik.xbar))?;
    let prior_term = &omega_inv * prior.xi();

    let mut beta = start.cloned().unwrap_or_else(|| prior.xi().clone());
    let mut z = DVector::from_element(lik.m, 1.0);
    let kept = (settings.iterations - burnin) / thin;
    let mut out = DMatrix::zeros(kept.max(1), q);
    let mut row = 0;
    for it in 0..settings.iterations {
        let mu = &lik.xbar * &beta;
        for (r, p) in lik.unit_blocks.iter().zip(&lam_prec) {
            for j in 0..r.len() {
                let pjj = p[(j, j)];
                let mut s = 0.0;
                for l in 0..r.len() {
                    if l != j {
                        s += p[(j, l)] * (z[r.start + l] - mu[r.start + l]);
                    }
                }
                let m = mu[r.start + j] - s / pjj;
                let sd = (1.0 / pjj).sqrt();
                z[r.start + j] = m + sd * truncated_std_normal(-m / sd, rng);
            }
        }
        let rhs = &prior_term + &xt_li * &z;
        let mean = prec.solve_vec(&rhs);
        let eps = DVector::from_fn(q, |_, _| rng.sample::<f64, _>(StandardNormal));
        let noise = prec
            .factor()
            .tr_solve_lower_triangular(&eps)
            .expect("Cholesky factor has a positive diagonal");
        beta = mean + noise;
        if it >= burnin && (it - burnin) % thin == thin - 1 && row < kept {
            out.row_mut(row).copy_from(&beta.transpose());
            row += 1;
        }
    }
    let out = out.rows(0, row.max(1)).into_owned();
    let (mean, se) = batch_summary(&out);
    Ok(GibbsOutput {
        report: OracleReport {
            estimate: mean,
            std_error: se,
            draws_or_nodes: out.nrows(),
            method: OracleMethod::Gibbs,
            tolerance: 0.0,
        },
        draws: PosteriorDraws {
            draws: out,
            seed: None,
            meta: SamplerMeta {
                tmvn_method: None,
                acceptance: 1.0,
                jitter: prec.jitter(),
            },
        },
    })
}

#[derive(Debug, Clone)]
pub struct RejectionOutput {
    pub draws: PosteriorDraws,
    pub acceptance: f64,
    /// Posterior mean with i.i.d. standard errors.
    pub report: OracleReport,
}

/// Draws `(U₁, U₀) ~ N(0, [[Γ, Δᵀ], [Δ, Ω̄]])` and keeps `ξ + ωU₀`
/// whenever `U₁ + γ > 0`.
pub fn rejection_sample_sun<R: Rng + ?Sized>(
    params: &SunParams,
    count: usize,
    max_tries: usize,
    rng: &mut R,
) -> Result<RejectionOutput> {
    let q = params.q();
    let h = params.h();
    let mut star = DMatrix::zeros(h + q, h + q);
    star.view_mut((0, 0), (h, h))
        .copy_from(params.gamma_corr().values());
    star.view_mut((h, 0), (q, h)).copy_from(params.delta());
    star.view_mut((0, h), (h, q))
        .copy_from(&params.delta().transpose());
    star.view_mut((h, h), (q, q))
        .copy_from(params.omega_bar().values());
    let f = chol_psd(&star)?;
    let l = f.factor();
    let mut out = DMatrix::zeros(count, q);
    let mut tries = 0usize;
    let mut kept = 0usize;
    let mut eps = DVector::zeros(h + q);
    while kept < count {
        if tries >= max_tries {
            return Err(Error::MaxTriesExceeded { tries });
        }
        tries += 1;
        for e in eps.iter_mut() {
            *e = rng.sample(StandardNormal);
        }
        let u = l * &eps;
        if (0..h).all(|i| u[i] + params.gamma()[i] > 0.0) {
            for j in 0..q {
                out[(kept, j)] = params.xi()[j] + params.scale()[j] * u[h + j];
            }
            kept += 1;
        }
    }
    let (mean, se) = iid_summary(&out);
    let acceptance = count as f64 / tries as f64;
    Ok(RejectionOutput {
        draws: PosteriorDraws {
            draws: out,
            seed: None,
            meta: SamplerMeta {
                tmvn_method: None,
                acceptance,
                jitter: f.jitter(),
            },
        },
        acceptance,
        report: OracleReport {
            estimate: mean,
            std_error: se,
            draws_or_nodes: tries,
            method: OracleMethod::Rejection,
            tolerance: 0.0,
        },
    })
}

const GK_X: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const GK_WK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const GK_WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn gk15(f: &mut dyn FnMut(f64) -> f64, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut k = GK_WK[7] * fc;
    let mut g = GK_WG[3] * fc;
    for i in 0..7 {
        let x = h * GK_X[i];
        let s = f(c - x) + f(c + x);
        k += GK_WK[i] * s;
        if i % 2 == 1 {
            g += GK_WG[i / 2] * s;
        }
    }
    (k * h, ((k - g) * h).abs())
}

/// Adaptive Gauss–Kronrod (7/15) integration of `f` over `[a, b]` to
/// absolute tolerance `tol`. Returns the value, error estimate and number of
/// function evaluations.
pub fn integrate(f: &mut dyn FnMut(f64) -> f64, a: f64, b: f64, tol: f64) -> (f64, f64, usize) {
    let mut stack = vec![(a, b, gk15(f, a, b))];
    let mut total = 0.0;
    let mut err = 0.0;
    let mut evals = 15;
    let width = (b - a).abs().max(f64::MIN_POSITIVE);
    while let Some((lo, hi, (v, e))) = stack.pop() {
        let local_tol = tol * (hi - lo).abs() / width;
        if e <= local_tol.max(1e-15 * v.abs()) || (hi - lo).abs() < 1e-12 * width {
            total += v;
            err += e;
            continue;
        }
        let mid = 0.5 * (lo + hi);
        stack.push((lo, mid, gk15(f, lo, mid)));
        stack.push((mid, hi, gk15(f, mid, hi)));
        evals += 30;
    }
    (total, err, evals)
}

/// `P(X ≤ h, Y ≤ k)` for a standard bivariate normal with correlation `rho`,
/// as `∫_{−∞}^{h} φ(x) Φ((k − ρx)/√(1−ρ²)) dx`.
pub fn bivariate_cdf(h: f64, k: f64, rho: f64) -> f64 {
    if rho.abs() >= 1.0 - 1e-14 {
        return if rho > 0.0 {
            big_phi(h.min(k))
        } else {
            (big_phi(h) - big_phi(-k)).max(0.0)
        };
    }
    let s = (1.0 - rho * rho).sqrt();
    let lo = -40.0;
    if h <= lo {
        return 0.0;
    }
    let mut f = |x: f64| phi(x) * big_phi((k - rho * x) / s);
    integrate(&mut f, lo, h.min(40.0), 1e-14).0.clamp(0.0, 1.0)
}

/// `P(Z ≤ upper)`, `Z ~ N(0, cov)`, for dimension at most two.
fn small_cdf(upper: &[f64], cov: &DMatrix<f64>) -> Result<f64> {
    match upper.len() {
        0 => Ok(1.0),
        1 => {
            let s = cov[(0, 0)].sqrt();
            Ok(if s <= 1e-300 {
                if upper[0] >= 0.0 {
                    1.0
                } else {
                    0.0
                }
            } else {
                big_phi(upper[0] / s)
            })
        }
        2 => {
            let (s1, s2) = (cov[(0, 0)].sqrt(), cov[(1, 1)].sqrt());
            let rho = (cov[(0, 1)] / (s1 * s2)).clamp(-1.0, 1.0);
            Ok(bivariate_cdf(upper[0] / s1, upper[1] / s2, rho))
        }
        d => Err(Error::InvalidParameter(format!(
            "quadrature oracle handles Gaussian blocks of size <= 2, got {d}"
        ))),
    }
}

/// Prior density of `β` by the oracle's own CDF routines (`h ≤ 2`).
fn oracle_log_density(
    params: &SunParams,
    beta: &DVector<f64>,
    log_norm: f64,
    cond: &DMatrix<f64>,
) -> Result<f64> {
    let centered = beta - params.xi();
    let gauss = params.omega().log_density(&centered);
    if params.h() == 0 {
        return Ok(gauss);
    }
    let scaled = centered.component_div(params.scale());
    let shift = params.delta().transpose() * params.omega_bar().solve_vec(&scaled);
    let upper: Vec<f64> = (params.gamma() + shift).iter().copied().collect();
    Ok(gauss + small_cdf(&upper, cond)?.ln() - log_norm)
}

fn oracle_likelihood(lik: &ProbitLikelihood, beta: &DVector<f64>) -> Result<f64> {
    let lin = &lik.xbar * beta;
    let mut p = 1.0;
    for (r, lam) in lik.unit_blocks.iter().zip(&lik.lambda_blocks) {
        let upper: Vec<f64> = lin.rows(r.start, r.len()).iter().copied().collect();
        p *= small_cdf(&upper, lam)?;
    }
    Ok(p)
}

/// Evidence `∫ p(β) p(y | β) dβ` by nested adaptive quadrature over the box
/// `ξ ± 10·sd`. Supports `q ≤ 2`, prior `h ≤ 2` and likelihood blocks of
/// size at most two.
pub fn quadrature_evidence(
    prior: &SunParams,
    lik: &ProbitLikelihood,
    tol: f64,
) -> Result<OracleReport> {
    const Q_CAP: usize = 2;
    let q = prior.q();
    if q > Q_CAP {
        return Err(Error::QOverCap { q, cap: Q_CAP });
    }
    if prior.h() > 2 {
        return Err(Error::InvalidParameter(
            "quadrature oracle handles prior h <= 2".into(),
        ));
    }
    let cond = prior.conditional_gamma();
    let log_norm = small_cdf(prior.gamma().as_slice(), prior.gamma_corr().values())?.ln();
    let sd: Vec<f64> = prior.scale().iter().copied().collect();
    let xi: Vec<f64> = prior.xi().iter().copied().collect();
    let mut failure: Option<Error> = None;
    let mut nodes = 0usize;
    let mut integrand = |b: &DVector<f64>| -> f64 {
        let v = oracle_log_density(prior, b, log_norm, &cond)
            .and_then(|ld| Ok(ld.exp() * oracle_likelihood(lik, b)?));
        match v {
            Ok(v) => v,
            Err(e) => {
                failure.get_or_insert(e);
                0.0
            }
        }
    };
    let (value, err) = if q == 1 {
        let mut f = |x: f64| integrand(&DVector::from_element(1, x));
        let (v, e, n) = integrate(&mut f, xi[0] - 10.0 * sd[0], xi[0] + 10.0 * sd[0], tol);
        nodes += n;
        (v, e)
    } else {
        let mut inner_nodes = 0usize;
        let mut outer = |x: f64| {
            let mut g = |y: f64| integrand(&DVector::from_vec(vec![x, y]));
            let (v, _, n) = integrate(
                &mut g,
                xi[1] - 10.0 * sd[1],
                xi[1] + 10.0 * sd[1],
                tol * 1e-2,
            );
            inner_nodes += n;
            v
        };
        let (v, e, _) = integrate(&mut outer, xi[0] - 10.0 * sd[0], xi[0] + 10.0 * sd[0], tol);
        nodes += inner_nodes;
        (v, e)
    };
    if let Some(e) = failure {
        return Err(e);
    }
    Ok(OracleReport {
        estimate: vec![value],
        std_error: vec![0.0],
        draws_or_nodes: nodes,
        method: OracleMethod::Quadrature,
        tolerance: err.max(tol),
    })
}

/// Plain Monte Carlo estimate of `P(Z ≤ upper)`, `Z ~ N(0, cov)`.
pub fn plain_mc_cdf<R: Rng + ?Sized>(
    upper: &[f64],
    cov: &DMatrix<f64>,
    count: usize,
    rng: &mut R,
) -> Result<OracleReport> {
    let d = upper.len();
    let f = chol_psd(cov)?;
    let l = f.factor();
    let mut eps = DVector::zeros(d);
    let mut hits = 0usize;
    for _ in 0..count {
        for e in eps.iter_mut() {
            *e = rng.sample(StandardNormal);
        }
        let z = l * &eps;
        if (0..d).all(|i| z[i] <= upper[i]) {
            hits += 1;
        }
    }
    let p = hits as f64 / count as f64;
    Ok(OracleReport {
        estimate: vec![p],
        std_error: vec![(p * (1.0 - p) / count as f64).sqrt()],
        draws_or_nodes: count,
        method: OracleMethod::PlainMc,
        tolerance: 0.0,
    })
}

/// Moments of `N(mean, cov)` truncated to `z > lower` by rejection. The
/// estimate holds the mean followed by the row-major covariance, each with
/// its standard error.
pub fn rejection_tmvn_moments<R: Rng + ?Sized>(
    lower: &[f64],
    mean: &[f64],
    cov: &DMatrix<f64>,
    count: usize,
    rng: &mut R,
) -> Result<OracleReport> {
    let d = lower.len();
    let f = chol_psd(cov)?;
    let l = f.factor();
    let mut eps = DVector::zeros(d);
    let mut kept = Vec::with_capacity(count * d);
    let mut tries = 0usize;
    while kept.len() < count * d {
        tries += 1;
        for e in eps.iter_mut() {
            *e = rng.sample(StandardNormal);
        }
        let z = l * &eps;
        if (0..d).all(|i| z[i] + mean[i] > lower[i]) {
            kept.extend((0..d).map(|i| z[i] + mean[i]));
        }
    }
    let n = count as f64;
    let m: Vec<f64> = (0..d)
        .map(|i| (0..count).map(|t| kept[t * d + i]).sum::<f64>() / n)
        .collect();
    let mut est = m.clone();
    let mut se: Vec<f64> = (0..d)
        .map(|i| {
            let v = (0..count)
                .map(|t| (kept[t * d + i] - m[i]).powi(2))
                .sum::<f64>()
                / (n - 1.0);
            (v / n).sqrt()
        })
        .collect();
    for i in 0..d {
        for j in 0..d {
            let prods: Vec<f64> = (0..count)
                .map(|t| (kept[t * d + i] - m[i]) * (kept[t * d + j] - m[j]))
                .collect();
            let c = prods.iter().sum::<f64>() / (n - 1.0);
            let v = prods.iter().map(|x| (x - c).powi(2)).sum::<f64>() / (n - 1.0);
            est.push(c);
            se.push((v / n).sqrt());
        }
    }
    Ok(OracleReport {
        estimate: est,
        std_error: se,
        draws_or_nodes: tries,
        method: OracleMethod::Rejection,
        tolerance: 0.0,
    })
}

/// Fixed cases whose reference values are produced by the slow oracles and
/// frozen into the test suite.
pub mod fixtures {
    use nalgebra::{dmatrix, DMatrix};

    /// Four-dimensional orthant-type probability `P(Z ≤ upper)`.
    pub fn cdf_case() -> (Vec<f64>, DMatrix<f64>) {
        let cov = dmatrix![
            1.0, 0.42, -0.18, 0.25;
            0.42, 1.0, 0.31, -0.12;
            -0.18, 0.31, 1.0, 0.47;
            0.25, -0.12, 0.47, 1.0
        ];
        (vec![0.3, -0.2, 0.1, 0.5], cov)
    }

    /// Bivariate normal with correlation 0.5 truncated to `z > lower`.
    pub fn moment_case() -> (Vec<f64>, Vec<f64>, DMatrix<f64>) {
        (
            vec![0.0, -0.5],
            vec![0.2, 0.0],
            dmatrix![1.0, 0.5; 0.5, 1.0],
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{build, Dataset, ModelFamily, ModelSpec, Predictors};
    use crate::rng::seeded;
    use nalgebra::{dmatrix, dvector};

    #[test]
    fn integrator_polynomial_and_gaussian() {
        let mut f = |x: f64| x * x;
        assert!((integrate(&mut f, 0.0, 3.0, 1e-12).0 - 9.0).abs() < 1e-12);
        let mut g = |x: f64| phi(x);
        assert!((integrate(&mut g, -12.0, 12.0, 1e-13).0 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn bivariate_orthants() {
        for &r in &[-0.9, -0.5, 0.0, 0.3, 0.9] {
            let e = 0.25 + f64::asin(r) / (2.0 * std::f64::consts::PI);
            assert!((bivariate_cdf(0.0, 0.0, r) - e).abs() < 1e-10, "{r}");
        }
    }

    #[test]
    fn robert_sampler_tail_mean() {
        let mut rng = seeded(3);
        let a = 3.0;
        let n = 100_000;
        let m = (0..n)
            .map(|_| truncated_std_normal(a, &mut rng))
            .sum::<f64>()
            / n as f64;
        let exact = phi(a) / big_phi(-a);
        assert!((m - exact).abs() < 0.01);
    }

    #[test]
    fn evidence_closed_forms() {
        let spec = ModelSpec::new(ModelFamily::Sequential, 2, 1, None).unwrap();
        let prior = SunParams::isotropic(1, 1.0).unwrap();
        let one = build(
            &spec,
            &Dataset::new(vec![1], Predictors::PerUnit(dmatrix![0.7])).unwrap(),
        )
        .unwrap();
        let r = quadrature_evidence(&prior, &one, 1e-10).unwrap();
        assert!((r.estimate[0] - 0.5).abs() < 1e-6);
        let two = build(
            &spec,
            &Dataset::new(vec![1, 1], Predictors::PerUnit(dmatrix![1.0; 1.0])).unwrap(),
        )
        .unwrap();
        let r = quadrature_evidence(&prior, &two, 1e-10).unwrap();
        assert!((r.estimate[0] - 1.0 / 3.0).abs() < 1e-6);
        let none = ProbitLikelihood::empty(1);
        assert!(
            (quadrature_evidence(&prior, &none, 1e-10).unwrap().estimate[0] - 1.0).abs() < 1e-8
        );
    }

    #[test]
    fn quadrature_refuses_large_q() {
        let prior = SunParams::isotropic(3, 1.0).unwrap();
        let err = quadrature_evidence(&prior, &ProbitLikelihood::empty(3), 1e-8).unwrap_err();
        assert_eq!(err, Error::QOverCap { q: 3, cap: 2 });
    }

    #[test]
    fn rejection_with_zero_skewness() {
        let p = SunParams::new(
            dvector![1.0],
            dmatrix![4.0],
            dmatrix![0.0],
            dvector![0.3],
            dmatrix![1.0],
        )
        .unwrap();
        let out = rejection_sample_sun(&p, 20_000, 1_000_000, &mut seeded(1)).unwrap();
        assert!((out.acceptance - big_phi(0.3)).abs() < 0.02);
        assert!((out.report.estimate[0] - 1.0).abs() < 4.0 * out.report.std_error[0]);
        let g = SunParams::isotropic(2, 1.0).unwrap();
        let all = rejection_sample_sun(&g, 100, 100, &mut seeded(1)).unwrap();
        assert_eq!(all.acceptance, 1.0);
    }

    #[test]
    fn max_tries() {
        let p = SunParams::new(
            dvector![0.0],
            dmatrix![1.0],
            dmatrix![0.0],
            dvector![-6.0],
            dmatrix![1.0],
        )
        .unwrap();
        assert!(matches!(
            rejection_sample_sun(&p, 10, 1000, &mut seeded(1)),
            Err(Error::MaxTriesExceeded { tries: 1000 })
        ));
    }

    #[test]
    fn gibbs_without_data_draws_prior() {
        let prior = SunParams::gaussian(dvector![1.0, -1.0], dmatrix![1.0, 0.0; 0.0, 4.0]).unwrap();
        let out = gibbs_sampler(
            &prior,
            &ProbitLikelihood::empty(2),
            &GibbsSettings::new(20_000),
            None,
            &mut seeded(2),
        )
        .unwrap();
        let r = &out.report;
        assert!((r.estimate[0] - 1.0).abs() < 4.0 * r.std_error[0]);
        assert!((r.estimate[1] + 1.0).abs() < 4.0 * r.std_error[1]);
    }
}
