//! Mean and covariance of a normal vector truncated below, by the
//! Manjunath–Wilhelm recursion. Every probability inside the recursion comes
//! from [`mvn_cdf`] with precise tolerances, a bounded budget and a fixed seed, so the
//! result is a deterministic function of the inputs.

use nalgebra::{DMatrix, DVector};

use super::cdf::{mvn_cdf, CdfSettings};
use super::chol::{chol_psd, symmetrize, SpdMatrix};
use super::normal;
use crate::error::{Error, Result};
use crate::rng::seeded;
use crate::serde_util::{is_neg_inf, POS_INF_BOUND};

pub const MOMENT_DIM_CAP: usize = 10;

const MOMENT_SEED: u64 = 0x5eed_0f_70;

fn settings() -> CdfSettings {
    CdfSettings {
        max_points: 1 << 18,
        ..CdfSettings::precise()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TruncatedMoments {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
    /// `log P(X > lower)` for the untruncated `X ~ N(mean, cov)`.
    pub log_norm: f64,
}

pub fn tmvn_moments(
    lower: &DVector<f64>,
    mean: &DVector<f64>,
    cov: &SpdMatrix,
) -> Result<TruncatedMoments> {
    tmvn_moments_with_cap(lower, mean, cov, MOMENT_DIM_CAP)
}

pub fn tmvn_moments_with_cap(
    lower: &DVector<f64>,
    mean: &DVector<f64>,
    cov: &SpdMatrix,
    cap: usize,
) -> Result<TruncatedMoments> {
    let d = cov.dim();
    for (what, len) in [
        ("tmvn_moments lower", lower.len()),
        ("tmvn_moments mean", mean.len()),
    ] {
        if len != d {
            return Err(Error::DimensionMismatch {
                what,
                expected: d,
                found: len,
            });
        }
    }
    if d > cap {
        return Err(Error::DimensionTooLarge {
            what: "truncated moments",
            dim: d,
            cap,
        });
    }
    let mut s = cov.values().clone();
    for i in 0..d {
        s[(i, i)] += cov.jitter();
    }
    let a: Vec<f64> = (0..d)
        .map(|i| {
            if is_neg_inf(lower[i]) {
                f64::NEG_INFINITY
            } else {
                lower[i] - mean[i]
            }
        })
        .collect();

    let log_alpha = log_upper_orthant(&a, &DVector::zeros(d), &s)?;
    if !log_alpha.is_finite() {
        return Err(Error::InfeasibleRegion(format!(
            "truncation region has probability exp({log_alpha})"
        )));
    }

    let all: Vec<usize> = (0..d).collect();
    let mut f1 = vec![0.0; d];
    let mut af1 = vec![0.0; d];
    for k in 0..d {
        if !a[k].is_finite() {
            continue;
        }
        let skk = s[(k, k)];
        let rest: Vec<usize> = all.iter().copied().filter(|&j| j != k).collect();
        let (cm, cc) = condition(&s, &rest, &[k], &[a[k]]);
        let lp = log_upper_orthant(&pick(&a, &rest), &cm, &cc)?;
        let ld = normal::log_pdf(a[k] / skk.sqrt()) - 0.5 * skk.ln();
        f1[k] = (ld + lp - log_alpha).exp();
        af1[k] = a[k] * f1[k];
    }

    let mut f2 = DMatrix::<f64>::zeros(d, d);
    for k in 0..d {
        for q in (k + 1)..d {
            if !a[k].is_finite() || !a[q].is_finite() {
                continue;
            }
            let pair = [k, q];
            let rest: Vec<usize> = all.iter().copied().filter(|&j| j != k && j != q).collect();
            let (cm, cc) = condition(&s, &rest, &pair, &[a[k], a[q]]);
            let lp = log_upper_orthant(&pick(&a, &rest), &cm, &cc)?;
            let sub = chol_psd(&DMatrix::from_fn(2, 2, |i, j| s[(pair[i], pair[j])]))?;
            let ld = sub.log_density(&DVector::from_vec(vec![a[k], a[q]]));
            let v = (ld + lp - log_alpha).exp();
            f2[(k, q)] = v;
            f2[(q, k)] = v;
        }
    }

    let f1v = DVector::from_vec(f1.clone());
    let ey = &s * &f1v;
    let mut eyy = s.clone();
    for i in 0..d {
        for j in 0..d {
            let mut acc = 0.0;
            for k in 0..d {
                let skk = s[(k, k)];
                acc += s[(i, k)] * s[(j, k)] * af1[k] / skk;
                let mut inner = 0.0;
                for q in 0..d {
                    if q != k {
                        inner += (s[(j, q)] - s[(k, q)] * s[(j, k)] / skk) * f2[(k, q)];
                    }
                }
                acc += s[(i, k)] * inner;
            }
            eyy[(i, j)] += acc;
        }
    }
    let cov_out = symmetrize(&(eyy - &ey * ey.transpose()));
    Ok(TruncatedMoments {
        mean: mean + ey,
        cov: cov_out,
        log_norm: log_alpha,
    })
}

fn pick(v: &[f64], idx: &[usize]) -> Vec<f64> {
    idx.iter().map(|&i| v[i]).collect()
}

/// Conditional mean and covariance of `Y[rest]` given `Y[given] = values`
/// for `Y ~ N(0, s)`.
fn condition(
    s: &DMatrix<f64>,
    rest: &[usize],
    given: &[usize],
    values: &[f64],
) -> (DVector<f64>, DMatrix<f64>) {
    let r = rest.len();
    let g = given.len();
    let srr = DMatrix::from_fn(r, r, |i, j| s[(rest[i], rest[j])]);
    let srg = DMatrix::from_fn(r, g, |i, j| s[(rest[i], given[j])]);
    let sgg = DMatrix::from_fn(g, g, |i, j| s[(given[i], given[j])]);
    let inv = sgg.try_inverse().unwrap_or_else(|| DMatrix::zeros(g, g));
    let gain = &srg * inv;
    let m = &gain * DVector::from_column_slice(values);
    let c = symmetrize(&(srr - &gain * srg.transpose()));
    (m, c)
}

/// `log P(Y > a)` for `Y ~ N(m, c)`; infinite lower bounds drop out.
fn log_upper_orthant(a: &[f64], m: &DVector<f64>, c: &DMatrix<f64>) -> Result<f64> {
    let d = a.len();
    if d == 0 {
        return Ok(0.0);
    }
    let upper: Vec<f64> = (0..d)
        .map(|i| {
            if a[i].is_finite() {
                m[i] - a[i]
            } else {
                POS_INF_BOUND
            }
        })
        .collect();
    let cov = chol_psd(c)?;
    let res = mvn_cdf(&upper, &cov, &settings(), &mut seeded(MOMENT_SEED))?;
    Ok(res.log_prob)
}
