//! Truncated multivariate normal sampling on `{z : z > lower}`.
//!
//! The main path is minimax exponential tilting: after a reordered Cholesky
//! factorization the sequential truncated-normal proposal is tilted by the
//! saddle point of `ψ(x, μ)`, which turns the proposal into an accept–reject
//! sampler with an explicit bound `ψ*`. When the estimated acceptance rate
//! drops below [`TmvnOptions::acceptance_floor`], or the dimension exceeds
//! [`TmvnOptions::tilting_max_dim`], the sampler switches to thinned
//! coordinate-wise Gibbs chains and says so in [`TmvnSample::method`].

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::chol::SpdMatrix;
use super::mvn::{sample_mvn, stack_rows};
use super::normal;
use crate::error::{Error, Result};
use crate::rng::{chunk_count, StreamKey, CHUNK};
use crate::serde_util::{is_neg_inf, NEG_INF_BOUND};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TmvnOptions {
    pub dim_cap: usize,
    pub tilting_max_dim: usize,
    pub acceptance_floor: f64,
    pub gibbs_sweeps: usize,
}

impl Default for TmvnOptions {
    fn default() -> Self {
        TmvnOptions {
            dim_cap: 500,
            tilting_max_dim: 200,
            acceptance_floor: 1e-6,
            gibbs_sweeps: 100,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TmvnMethod {
    Untruncated,
    Univariate,
    Tilted,
    Gibbs,
}

#[derive(Debug, Clone)]
pub struct TmvnSample {
    /// One draw per row.
    pub draws: DMatrix<f64>,
    pub method: TmvnMethod,
    /// Estimated acceptance probability of the tilted proposal (1 for exact
    /// methods).
    pub acceptance: f64,
    /// Upper bound on `log P(Z > lower)` from the tilting problem, when
    /// computed.
    pub log_prob_bound: Option<f64>,
}

pub fn sample_tmvn<R: Rng + ?Sized>(
    lower: &DVector<f64>,
    mean: &DVector<f64>,
    cov: &SpdMatrix,
    count: usize,
    rng: &mut R,
) -> Result<TmvnSample> {
    sample_tmvn_with(lower, mean, cov, count, &TmvnOptions::default(), rng)
}

pub fn sample_tmvn_with<R: Rng + ?Sized>(
    lower: &DVector<f64>,
    mean: &DVector<f64>,
    cov: &SpdMatrix,
    count: usize,
    opts: &TmvnOptions,
    rng: &mut R,
) -> Result<TmvnSample> {
    let d = cov.dim();
    for (what, len) in [
        ("sample_tmvn lower", lower.len()),
        ("sample_tmvn mean", mean.len()),
    ] {
        if len != d {
            return Err(Error::DimensionMismatch {
                what,
                expected: d,
                found: len,
            });
        }
    }
    if d > opts.dim_cap {
        return Err(Error::DimensionTooLarge {
            what: "truncated normal",
            dim: d,
            cap: opts.dim_cap,
        });
    }
    if count == 0 {
        return Err(Error::InvalidParameter(
            "sample count must be positive".into(),
        ));
    }
    let a: Vec<f64> = (0..d)
        .map(|i| {
            if is_neg_inf(lower[i]) {
                NEG_INF_BOUND
            } else {
                lower[i] - mean[i]
            }
        })
        .collect();
    if a.iter().all(|&x| is_neg_inf(x)) {
        return Ok(TmvnSample {
            draws: sample_mvn(mean, cov, count, rng)?,
            method: TmvnMethod::Untruncated,
            acceptance: 1.0,
            log_prob_bound: Some(0.0),
        });
    }
    let key = StreamKey::draw(rng);
    if d == 1 {
        let sd = (cov.values()[(0, 0)] + cov.jitter()).sqrt();
        let chunks: Vec<DMatrix<f64>> = (0..chunk_count(count))
            .into_par_iter()
            .map(|c| {
                let rows = CHUNK.min(count - c * CHUNK);
                let mut r = key.stream(c as u64);
                DMatrix::from_fn(rows, 1, |_, _| {
                    strictly_above(lower[0], || {
                        mean[0] + sd * normal::sample_truncated(a[0] / sd, f64::INFINITY, &mut r)
                    })
                })
            })
            .collect();
        return Ok(TmvnSample {
            draws: stack_rows(&chunks, count, 1),
            method: TmvnMethod::Univariate,
            acceptance: 1.0,
            log_prob_bound: Some(normal::log_cdf(-a[0] / sd)),
        });
    }

    let mut c = cov.values().clone();
    for i in 0..d {
        c[(i, i)] += cov.jitter();
    }

    if d <= opts.tilting_max_dim {
        let problem = TiltingProblem::new(&a, &c);
        let (mu, psi_star) = problem.solve();
        if psi_star < (1e-300f64).ln() {
            return Err(Error::InfeasibleRegion(format!(
                "log P(Z > lower) bound {psi_star:.1} below log(1e-300)"
            )));
        }
        let acceptance = problem.pilot_acceptance(&mu, psi_star, &mut key.stream(u64::MAX));
        if acceptance >= opts.acceptance_floor {
            let chunks: Vec<DMatrix<f64>> = (0..chunk_count(count))
                .into_par_iter()
                .map(|ci| {
                    let rows = CHUNK.min(count - ci * CHUNK);
                    let mut r = key.stream(ci as u64);
                    let mut out = DMatrix::<f64>::zeros(rows, d);
                    let mut z = vec![0.0; d];
                    let mut filled = 0;
                    while filled < rows {
                        let logpr = problem.propose(&mu, &mut z, &mut r);
                        let u: f64 = r.random();
                        if -u.ln() <= psi_star - logpr {
                            continue;
                        }
                        let x = problem.to_original(&z, mean);
                        if (0..d).all(|j| is_neg_inf(lower[j]) || x[j] > lower[j]) {
                            out.row_mut(filled).copy_from(&x.transpose());
                            filled += 1;
                        }
                    }
                    out
                })
                .collect();
            return Ok(TmvnSample {
                draws: stack_rows(&chunks, count, d),
                method: TmvnMethod::Tilted,
                acceptance,
                log_prob_bound: Some(psi_star),
            });
        }
        let draws = gibbs_chains(lower, mean, &a, &c, count, opts.gibbs_sweeps, key)?;
        return Ok(TmvnSample {
            draws,
            method: TmvnMethod::Gibbs,
            acceptance,
            log_prob_bound: Some(psi_star),
        });
    }
    let draws = gibbs_chains(lower, mean, &a, &c, count, opts.gibbs_sweeps, key)?;
    Ok(TmvnSample {
        draws,
        method: TmvnMethod::Gibbs,
        acceptance: 0.0,
        log_prob_bound: None,
    })
}

fn strictly_above(bound: f64, mut draw: impl FnMut() -> f64) -> f64 {
    loop {
        let x = draw();
        if is_neg_inf(bound) || x > bound {
            return x;
        }
    }
}

/// Reordered, scaled problem: `Z` standard normal with `X = L_full Z` and
/// constraint `(L_full Z)_k ≥ a_k`. Row `k` of `l` holds `L_full[k, ·] / D_k`
/// minus the identity, so `l` is strictly lower triangular and the bounds are
/// `bounds_k = a_k / D_k`.
struct TiltingProblem {
    perm: Vec<usize>,
    full: DMatrix<f64>,
    l: DMatrix<f64>,
    bounds: Vec<f64>,
}

impl TiltingProblem {
    fn new(a: &[f64], c: &DMatrix<f64>) -> Self {
        let d = a.len();
        let mut c = c.clone();
        let mut b = a.to_vec();
        let mut perm: Vec<usize> = (0..d).collect();
        let mut l = DMatrix::<f64>::zeros(d, d);
        let mut z = vec![0.0; d];
        for j in 0..d {
            let mut best = j;
            let mut best_p = f64::INFINITY;
            for i in j..d {
                let mut s2 = c[(i, i)];
                let mut shift = 0.0;
                for k in 0..j {
                    s2 -= l[(i, k)] * l[(i, k)];
                    shift += l[(i, k)] * z[k];
                }
                let s = s2.max(1e-300).sqrt();
                let p = if is_neg_inf(b[i]) {
                    0.0
                } else {
                    normal::log_cdf(-(b[i] - shift) / s)
                };
                if p < best_p {
                    best_p = p;
                    best = i;
                }
            }
            if best != j {
                c.swap_rows(j, best);
                c.swap_columns(j, best);
                l.swap_rows(j, best);
                b.swap(j, best);
                perm.swap(j, best);
            }
            let mut s2 = c[(j, j)];
            let mut shift = 0.0;
            for k in 0..j {
                s2 -= l[(j, k)] * l[(j, k)];
                shift += l[(j, k)] * z[k];
            }
            let ljj = s2.max(1e-300).sqrt();
            l[(j, j)] = ljj;
            for i in (j + 1)..d {
                let mut s = c[(i, j)];
                for k in 0..j {
                    s -= l[(i, k)] * l[(j, k)];
                }
                l[(i, j)] = s / ljj;
            }
            z[j] = if is_neg_inf(b[j]) {
                0.0
            } else {
                normal::inv_mills_lower((b[j] - shift) / ljj)
            };
        }
        let full = l.clone();
        let mut scaled = l;
        let mut bounds = b;
        for k in 0..d {
            let dk = full[(k, k)];
            for j in 0..=k {
                scaled[(k, j)] /= dk;
            }
            scaled[(k, k)] = 0.0;
            if !is_neg_inf(bounds[k]) {
                bounds[k] /= dk;
            }
        }
        TiltingProblem {
            perm,
            full,
            l: scaled,
            bounds,
        }
    }

    fn dim(&self) -> usize {
        self.bounds.len()
    }

    /// Shifted lower bounds `l_k − μ_k − (L x)_k`.
    fn shifted(&self, x: &[f64], mu: &[f64]) -> Vec<f64> {
        let d = self.dim();
        (0..d)
            .map(|k| {
                if is_neg_inf(self.bounds[k]) {
                    return NEG_INF_BOUND;
                }
                let mut c = 0.0;
                for j in 0..k {
                    c += self.l[(k, j)] * x[j];
                }
                self.bounds[k] - mu[k] - c
            })
            .collect()
    }

    fn psi(&self, x: &[f64], mu: &[f64]) -> f64 {
        let lt = self.shifted(x, mu);
        (0..self.dim())
            .map(|k| normal::log_cdf(-lt[k]) + 0.5 * mu[k] * mu[k] - x[k] * mu[k])
            .sum()
    }

    /// Gradient of ψ in `(x_{1..d-1}, μ_{1..d-1})` and its Jacobian.
    fn grad_jac(&self, y: &[f64]) -> (DVector<f64>, DMatrix<f64>) {
        let d = self.dim();
        let n = d - 1;
        let (x, mu) = split(y, d);
        let lt = self.shifted(&x, &mu);
        let p: Vec<f64> = lt.iter().map(|&t| normal::inv_mills_lower(t)).collect();
        let dp: Vec<f64> = (0..d)
            .map(|k| {
                let t = if is_neg_inf(lt[k]) { 0.0 } else { lt[k] };
                -p[k] * p[k] + t * p[k]
            })
            .collect();
        let mut g = DVector::<f64>::zeros(2 * n);
        for j in 0..n {
            let mut lp = 0.0;
            for k in 0..d {
                lp += self.l[(k, j)] * p[k];
            }
            g[j] = -mu[j] + lp;
            g[n + j] = mu[j] - x[j] + p[j];
        }
        let mut jac = DMatrix::<f64>::zeros(2 * n, 2 * n);
        for i in 0..n {
            for j in 0..n {
                // Lᵀ diag(dP) L
                let mut s = 0.0;
                for k in 0..d {
                    s += self.l[(k, i)] * dp[k] * self.l[(k, j)];
                }
                jac[(i, j)] = s;
                // mx = −I + diag(dP) L, placed as mxᵀ (top right) and mx (bottom left)
                let mx_ij = -((i == j) as u8 as f64) + dp[i] * self.l[(i, j)];
                jac[(n + i, j)] = mx_ij;
                jac[(j, n + i)] = mx_ij;
            }
            jac[(n + i, n + i)] = 1.0 + dp[i];
        }
        (g, jac)
    }

    /// Newton iteration for the saddle point. Falls back to the untilted
    /// proposal (`μ = 0`, `ψ* = 0`) when Newton does not converge; that
    /// bound is still valid because every log-weight is non-positive.
    fn solve(&self) -> (Vec<f64>, f64) {
        let d = self.dim();
        let n = d - 1;
        let mut y = vec![0.0; 2 * n];
        let (mut g, mut jac) = self.grad_jac(&y);
        let mut gn = g.norm_squared();
        let mut converged = false;
        for _ in 0..200 {
            if gn.sqrt() < 1e-10 {
                converged = true;
                break;
            }
            let step = match jac.clone().lu().solve(&(-&g)) {
                Some(s) if s.iter().all(|v| v.is_finite()) => s,
                _ => break,
            };
            let mut t = 1.0;
            let mut accepted = false;
            while t > 1e-10 {
                let trial: Vec<f64> = y.iter().zip(step.iter()).map(|(a, b)| a + t * b).collect();
                let (g2, j2) = self.grad_jac(&trial);
                let n2 = g2.norm_squared();
                if n2.is_finite() && n2 <= (1.0 - 1e-4 * t) * gn {
                    y = trial;
                    g = g2;
                    jac = j2;
                    gn = n2;
                    accepted = true;
                    break;
                }
                t *= 0.5;
            }
            if !accepted {
                converged = gn.sqrt() < 1e-7;
                break;
            }
        }
        if !converged {
            return (vec![0.0; d], 0.0);
        }
        let (x, mu) = split(&y, d);
        let psi = self.psi(&x, &mu);
        (mu, psi.min(0.0_f64.max(psi)))
    }

    /// One tilted proposal into `z`; returns its log-weight.
    fn propose<R: Rng + ?Sized>(&self, mu: &[f64], z: &mut [f64], rng: &mut R) -> f64 {
        let d = self.dim();
        let mut logpr = 0.0;
        for k in 0..d {
            if is_neg_inf(self.bounds[k]) {
                z[k] = rng.sample(StandardNormal);
                continue;
            }
            let mut col = 0.0;
            for j in 0..k {
                col += self.l[(k, j)] * z[j];
            }
            let tl = self.bounds[k] - mu[k] - col;
            z[k] = mu[k] + normal::sample_truncated(tl, f64::INFINITY, rng);
            logpr += normal::log_cdf(-tl) + 0.5 * mu[k] * mu[k] - mu[k] * z[k];
        }
        logpr
    }

    fn pilot_acceptance<R: Rng + ?Sized>(&self, mu: &[f64], psi_star: f64, rng: &mut R) -> f64 {
        let mut z = vec![0.0; self.dim()];
        let n = 2048;
        let s: f64 = (0..n)
            .map(|_| (self.propose(mu, &mut z, rng) - psi_star).exp())
            .sum();
        s / n as f64
    }

    fn to_original(&self, z: &[f64], mean: &DVector<f64>) -> DVector<f64> {
        let d = self.dim();
        let mut x = mean.clone();
        for k in 0..d {
            let mut s = 0.0;
            for j in 0..=k {
                s += self.full[(k, j)] * z[j];
            }
            x[self.perm[k]] += s;
        }
        x
    }
}

fn split(y: &[f64], d: usize) -> (Vec<f64>, Vec<f64>) {
    let n = d - 1;
    let mut x = y[..n].to_vec();
    x.push(0.0);
    let mut mu = y[n..].to_vec();
    mu.push(0.0);
    (x, mu)
}

/// Independent coordinate-wise Gibbs chains, one per chunk, each burned in
/// and thinned by `sweeps` full sweeps.
fn gibbs_chains(
    lower: &DVector<f64>,
    mean: &DVector<f64>,
    a: &[f64],
    c: &DMatrix<f64>,
    count: usize,
    sweeps: usize,
    key: StreamKey,
) -> Result<DMatrix<f64>> {
    let d = a.len();
    let prec = super::chol::chol_psd(c)?.inverse();
    let cond_sd: Vec<f64> = (0..d).map(|j| (1.0 / prec[(j, j)]).sqrt()).collect();
    let sweeps = sweeps.max(1);
    let chunks: Vec<DMatrix<f64>> = (0..chunk_count(count))
        .into_par_iter()
        .map(|ci| {
            let rows = CHUNK.min(count - ci * CHUNK);
            let mut r = key.stream(ci as u64);
            let mut z: Vec<f64> = a
                .iter()
                .map(|&x| if is_neg_inf(x) { 0.0 } else { x.max(0.0) + 1.0 })
                .collect();
            let sweep = |z: &mut Vec<f64>, r: &mut rand_chacha::ChaCha8Rng| {
                for j in 0..d {
                    let mut s = 0.0;
                    for k in 0..d {
                        if k != j {
                            s += prec[(j, k)] * z[k];
                        }
                    }
                    let m = -s / prec[(j, j)];
                    let sd = cond_sd[j];
                    z[j] = if is_neg_inf(a[j]) {
                        m + sd * r.sample::<f64, _>(StandardNormal)
                    } else {
                        let lo = (a[j] - m) / sd;
                        strictly_above(a[j], || {
                            m + sd * normal::sample_truncated(lo, f64::INFINITY, r)
                        })
                    };
                }
            };
            for _ in 0..sweeps {
                sweep(&mut z, &mut r);
            }
            let mut out = DMatrix::<f64>::zeros(rows, d);
            let mut filled = 0;
            while filled < rows {
                for _ in 0..sweeps {
                    sweep(&mut z, &mut r);
                }
                let x: Vec<f64> = (0..d).map(|j| z[j] + mean[j]).collect();
                if (0..d).all(|j| is_neg_inf(lower[j]) || x[j] > lower[j]) {
                    for j in 0..d {
                        out[(filled, j)] = x[j];
                    }
                    filled += 1;
                }
            }
            out
        })
        .collect();
    Ok(stack_rows(&chunks, count, d))
}
