//! Multivariate normal CDF by separation of variables with randomized
//! rank-1 lattice rules.
//!
//! The covariance is first split into independent blocks (exact zeros off
//! the block structure), so block-diagonal inputs such as per-unit probit
//! likelihoods cost one small integral per block. Univariate blocks use the
//! exact normal CDF, bivariate ones the Drezner–Wesolowsky formula and
//! trivariate ones a 1-D quadrature over bivariate probabilities, each with a
//! lattice fallback when ill-conditioned. Larger blocks are integrated after Genz's transform with
//! the variable order chosen greedily by smallest conditional probability.
//! Each of the `shifts` random shifts gives an independent estimate; the
//! reported error is three standard errors of their mean.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::chol::SpdMatrix;
use super::normal;
use crate::error::{Error, Result};
use crate::serde_util::{is_neg_inf, is_pos_inf};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CdfSettings {
    /// Target absolute error of the probability.
    pub abs_tol: f64,
    /// Target error relative to the probability; this is what governs
    /// log-space accuracy of small orthant probabilities.
    pub rel_tol: f64,
    /// Lattice points per shift in the first pass.
    pub min_points: usize,
    /// Budget of integrand evaluations summed over shifts and blocks.
    pub max_points: usize,
    pub shifts: usize,
}

impl Default for CdfSettings {
    fn default() -> Self {
        CdfSettings {
            abs_tol: 1e-5,
            rel_tol: 1e-3,
            min_points: 256,
            max_points: 4_000_000,
            shifts: 12,
        }
    }
}

impl CdfSettings {
    pub fn with_tolerance(abs_tol: f64, rel_tol: f64) -> Self {
        CdfSettings {
            abs_tol,
            rel_tol,
            ..Default::default()
        }
    }

    /// Settings used inside deterministic kernels (truncated moments, KL).
    pub fn precise() -> Self {
        CdfSettings {
            abs_tol: 1e-10,
            rel_tol: 1e-9,
            min_points: 1024,
            max_points: 8_000_000,
            shifts: 12,
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.abs_tol > 0.0) || !(self.rel_tol > 0.0) || self.shifts < 2 || self.min_points == 0
        {
            return Err(Error::InvalidParameter(format!(
                "invalid CDF settings {self:?}"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CdfResult {
    /// Natural log of the probability.
    pub log_prob: f64,
    /// Estimated absolute error of the probability.
    pub err_estimate: f64,
    /// Estimated error relative to the probability.
    pub rel_err: f64,
    pub points_used: usize,
    pub tolerance_met: bool,
}

impl CdfResult {
    fn exact(log_prob: f64) -> Self {
        CdfResult {
            log_prob,
            err_estimate: 0.0,
            rel_err: 0.0,
            points_used: 0,
            tolerance_met: true,
        }
    }

    pub fn prob(&self) -> f64 {
        self.log_prob.exp()
    }

    /// Turn a tolerance miss into [`Error::ToleranceNotMet`].
    pub fn require(self, settings: &CdfSettings) -> Result<Self> {
        if self.tolerance_met {
            Ok(self)
        } else {
            Err(Error::ToleranceNotMet {
                log_prob: self.log_prob,
                err_estimate: self.err_estimate,
                tol: settings.abs_tol,
            })
        }
    }
}

/// `P(Z ≤ upper)` for `Z ~ N(0, cov)`. Entries of `upper` at or beyond
/// `±1e300` are infinite bounds.
pub fn mvn_cdf<R: Rng + ?Sized>(
    upper: &[f64],
    cov: &SpdMatrix,
    settings: &CdfSettings,
    rng: &mut R,
) -> Result<CdfResult> {
    settings.validate()?;
    let d = cov.dim();
    if upper.len() != d {
        return Err(Error::DimensionMismatch {
            what: "mvn_cdf upper bound",
            expected: d,
            found: upper.len(),
        });
    }
    if d == 0 {
        return Ok(CdfResult::exact(0.0));
    }
    if upper.iter().any(|&u| is_neg_inf(u)) {
        return Ok(CdfResult::exact(f64::NEG_INFINITY));
    }
    let active: Vec<usize> = (0..d).filter(|&i| !is_pos_inf(upper[i])).collect();
    if active.is_empty() {
        return Ok(CdfResult::exact(0.0));
    }
    let vals = cov.values();
    let jitter = cov.jitter();
    let entry = |i: usize, j: usize| vals[(i, j)] + if i == j { jitter } else { 0.0 };

    let components = independent_blocks(&active, &entry);
    let mut log_prob = 0.0;
    let mut rel_var = 0.0;
    let mut points = 0;
    let mut budget = settings.max_points;
    let mut met = true;
    for comp in &components {
        if comp.len() == 1 {
            let i = comp[0];
            log_prob += normal::log_cdf(upper[i] / entry(i, i).sqrt());
            continue;
        }
        if comp.len() == 2 {
            let (i, j) = (comp[0], comp[1]);
            let (si, sj) = (entry(i, i).sqrt(), entry(j, j).sqrt());
            let r = (entry(i, j) / (si * sj)).clamp(-1.0, 1.0);
            let p = bvn_upper(-upper[i] / si, -upper[j] / sj, r);
            if p >= BVN_FLOOR {
                log_prob += p.ln();
                rel_var += (BVN_ABS_ERR / p).powi(2);
                continue;
            }
        }
        if comp.len() == 3 {
            let sd: Vec<f64> = comp.iter().map(|&i| entry(i, i).sqrt()).collect();
            let h: Vec<f64> = (0..3).map(|a| upper[comp[a]] / sd[a]).collect();
            let r =
                |a: usize, b: usize| (entry(comp[a], comp[b]) / (sd[a] * sd[b])).clamp(-1.0, 1.0);
            if let Some((p, err)) = tvn(&h, [r(0, 1), r(0, 2), r(1, 2)]) {
                log_prob += p.ln();
                rel_var += (err / p).powi(2);
                continue;
            }
        }
        let k = comp.len();
        let c = DMatrix::from_fn(k, k, |a, b| entry(comp[a], comp[b]));
        let b: Vec<f64> = comp.iter().map(|&i| upper[i]).collect();
        let est = sov_integral(&b, &c, settings, budget, rng);
        budget = budget
            .saturating_sub(est.points_used)
            .max(settings.min_points * settings.shifts);
        points += est.points_used;
        log_prob += est.log_prob;
        rel_var += est.rel_err * est.rel_err;
        met &= est.tolerance_met;
    }
    if log_prob == f64::NEG_INFINITY {
        return Ok(CdfResult {
            log_prob,
            err_estimate: 0.0,
            rel_err: f64::INFINITY,
            points_used: points,
            tolerance_met: false,
        });
    }
    let rel_err = rel_var.sqrt();
    let err_estimate = rel_err * log_prob.exp();
    met &= err_estimate <= settings.abs_tol && rel_err <= settings.rel_tol;
    Ok(CdfResult {
        log_prob: log_prob.min(0.0),
        err_estimate,
        rel_err,
        points_used: points,
        tolerance_met: met,
    })
}

/// Convenience form taking a vector bound.
pub fn mvn_cdf_vec<R: Rng + ?Sized>(
    upper: &DVector<f64>,
    cov: &SpdMatrix,
    settings: &CdfSettings,
    rng: &mut R,
) -> Result<CdfResult> {
    mvn_cdf(upper.as_slice(), cov, settings, rng)
}

/// Connected components of the nonzero pattern, in ascending index order.
fn independent_blocks(active: &[usize], entry: &dyn Fn(usize, usize) -> f64) -> Vec<Vec<usize>> {
    let n = active.len();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(p: &mut [usize], mut x: usize) -> usize {
        while p[x] != x {
            p[x] = p[p[x]];
            x = p[x];
        }
        x
    }
    for a in 0..n {
        for b in 0..a {
            let (i, j) = (active[a], active[b]);
            let c = entry(i, j);
            if c.abs() > 1e-13 * (entry(i, i) * entry(j, j)).sqrt() {
                let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
                if ra != rb {
                    parent[ra.max(rb)] = ra.min(rb);
                }
            }
        }
    }
    let mut groups: Vec<Vec<usize>> = Vec::new();
    let mut slot = vec![usize::MAX; n];
    for a in 0..n {
        let r = find(&mut parent, a);
        if slot[r] == usize::MAX {
            slot[r] = groups.len();
            groups.push(Vec::new());
        }
        groups[slot[r]].push(active[a]);
    }
    groups
}

const BVN_FLOOR: f64 = 1e-6;
const BVN_ABS_ERR: f64 = 1e-15;

const GL_W3: [f64; 3] = [
    0.171_324_492_379_170_5,
    0.360_761_573_048_138_4,
    0.467_913_934_572_691,
];
const GL_X3: [f64; 3] = [
    0.932_469_514_203_152_2,
    0.661_209_386_466_264_7,
    0.238_619_186_083_197,
];
const GL_W6: [f64; 6] = [
    0.047_175_336_386_511_77,
    0.106_939_325_995_318_3,
    0.160_078_328_543_346_4,
    0.203_167_426_723_065_9,
    0.233_492_536_538_354_7,
    0.249_147_045_813_402_9,
];
const GL_X6: [f64; 6] = [
    0.981_560_634_246_719_1,
    0.904_117_256_370_475,
    0.769_902_674_194_305,
    0.587_317_954_286_617_1,
    0.367_831_498_998_180_2,
    0.125_233_408_511_469_2,
];
const GL_W10: [f64; 10] = [
    0.017_614_007_139_152_12,
    0.040_601_429_800_386_94,
    0.062_672_048_334_109_06,
    0.083_276_741_576_704_75,
    0.101_930_119_817_240_4,
    0.118_194_531_961_518_4,
    0.131_688_638_449_176_6,
    0.142_096_109_318_382_1,
    0.149_172_986_472_603_7,
    0.152_753_387_130_725_9,
];
const GL_X10: [f64; 10] = [
    0.993_128_599_185_094_9,
    0.963_971_927_277_913_8,
    0.912_234_428_251_325_9,
    0.839_116_971_822_218_8,
    0.746_331_906_460_150_8,
    0.636_053_680_726_515,
    0.510_867_001_950_827_1,
    0.373_706_088_715_419_6,
    0.227_785_851_141_645_1,
    0.076_526_521_133_497_33,
];

/// `P(X > dh, Y > dk)` for a standard bivariate normal with correlation `r`
/// (Drezner–Wesolowsky with Genz's refinements).
pub(crate) fn bvn_upper(dh: f64, dk: f64, r: f64) -> f64 {
    use std::f64::consts::PI;
    let (w, x): (&[f64], &[f64]) = if r.abs() < 0.3 {
        (&GL_W3, &GL_X3)
    } else if r.abs() < 0.75 {
        (&GL_W6, &GL_X6)
    } else {
        (&GL_W10, &GL_X10)
    };
    let h = dh;
    let mut k = dk;
    let mut hk = h * k;
    let mut bvn = 0.0;
    if r.abs() < 0.925 {
        let hs = (h * h + k * k) / 2.0;
        let asr = r.asin();
        for i in 0..w.len() {
            for sgn in [-1.0, 1.0] {
                let sn = (asr * (sgn * x[i] + 1.0) / 2.0).sin();
                bvn += w[i] * ((sn * hk - hs) / (1.0 - sn * sn)).exp();
            }
        }
        bvn = bvn * asr / (4.0 * PI) + normal::cdf(-h) * normal::cdf(-k);
    } else {
        if r < 0.0 {
            k = -k;
            hk = -hk;
        }
        if r.abs() < 1.0 {
            let as_ = (1.0 - r) * (1.0 + r);
            let mut a = as_.sqrt();
            let bs = (h - k) * (h - k);
            let c = (4.0 - hk) / 8.0;
            let d = (12.0 - hk) / 16.0;
            let asr = -(bs / as_ + hk) / 2.0;
            if asr > -100.0 {
                bvn = a
                    * asr.exp()
                    * (1.0 - c * (bs - as_) * (1.0 - d * bs / 5.0) / 3.0 + c * d * as_ * as_ / 5.0);
            }
            if -hk < 100.0 {
                let b = bs.sqrt();
                bvn -= (-hk / 2.0).exp()
                    * (2.0 * PI).sqrt()
                    * normal::cdf(-b / a)
                    * b
                    * (1.0 - c * bs * (1.0 - d * bs / 5.0) / 3.0);
            }
            a /= 2.0;
            for i in 0..w.len() {
                for sgn in [-1.0, 1.0] {
                    let xs = (a * (sgn * x[i] + 1.0)).powi(2);
                    let rs = (1.0 - xs).sqrt();
                    let asr = -(bs / xs + hk) / 2.0;
                    if asr > -100.0 {
                        bvn += a
                            * w[i]
                            * asr.exp()
                            * ((-hk * (1.0 - rs) / (2.0 * (1.0 + rs))).exp() / rs
                                - (1.0 + c * xs * (1.0 + d * xs)));
                    }
                }
            }
            bvn = -bvn / (2.0 * PI);
        }
        if r > 0.0 {
            bvn += normal::cdf(-h.max(k));
        } else {
            bvn = -bvn + (normal::cdf(-h) - normal::cdf(-k)).max(0.0);
        }
    }
    bvn.clamp(0.0, 1.0)
}

const TVN_FLOOR: f64 = 1e-8;
const TVN_MIN_PANEL: f64 = 0.01;

/// `P(X₁ ≤ h₁, X₂ ≤ h₂, X₃ ≤ h₃)` for standardized variables with
/// correlations `[ρ₁₂, ρ₁₃, ρ₂₃]`, as a 1-D integral over the pivot
/// coordinate of conditional bivariate probabilities. Composite
/// Gauss–Legendre with panel halving for the error estimate. `None` when
/// the conditioning is too sharp or the probability too small for this
/// route; the caller then uses the lattice rule.
fn tvn(h: &[f64], rho: [f64; 3]) -> Option<(f64, f64)> {
    let pair = |a: usize, b: usize| match (a.min(b), a.max(b)) {
        (0, 1) => rho[0],
        (0, 2) => rho[1],
        _ => rho[2],
    };
    // pivot on the coordinate least correlated with the other two
    let pivot = (0..3)
        .min_by(|&a, &b| {
            let worst = |k: usize| {
                (0..3)
                    .filter(|&j| j != k)
                    .map(|j| pair(k, j).abs())
                    .fold(0.0, f64::max)
            };
            worst(a).total_cmp(&worst(b))
        })
        .unwrap();
    let others: Vec<usize> = (0..3).filter(|&j| j != pivot).collect();
    let (i, j) = (others[0], others[1]);
    let (ri, rj) = (pair(pivot, i), pair(pivot, j));
    let (si, sj) = ((1.0 - ri * ri).sqrt(), (1.0 - rj * rj).sqrt());
    if si < 1e-6 || sj < 1e-6 {
        return None;
    }
    let partial = ((pair(i, j) - ri * rj) / (si * sj)).clamp(-1.0, 1.0);
    let scale = [1.0, si / ri.abs().max(1e-300), sj / rj.abs().max(1e-300)]
        .into_iter()
        .fold(f64::INFINITY, f64::min);
    let width = 0.5 * scale;
    if width < TVN_MIN_PANEL {
        return None;
    }
    let lo = -9.0;
    let hi = h[pivot].min(9.0);
    if hi <= lo {
        return None;
    }
    let f =
        |x: f64| normal::pdf(x) * bvn_upper(-(h[i] - ri * x) / si, -(h[j] - rj * x) / sj, partial);
    let panels = ((hi - lo) / width).ceil() as usize;
    let coarse = gauss_legendre(&f, lo, hi, panels);
    let fine = gauss_legendre(&f, lo, hi, 2 * panels);
    let err = (fine - coarse).abs() + 1e-15;
    if fine < TVN_FLOOR || err > 1e-6 * fine {
        return None;
    }
    Some((fine, err))
}

fn gauss_legendre(f: &dyn Fn(f64) -> f64, a: f64, b: f64, panels: usize) -> f64 {
    let w = (b - a) / panels as f64;
    let mut total = 0.0;
    for k in 0..panels {
        let mid = a + (k as f64 + 0.5) * w;
        let half = 0.5 * w;
        for (&x, &wt) in GL_X10.iter().zip(&GL_W10) {
            total += wt * half * (f(mid - half * x) + f(mid + half * x));
        }
    }
    total
}

struct Reordered {
    bounds: Vec<f64>,
    /// Lower factor, packed row by row (`row i` starts at `i(i+1)/2`).
    packed: Vec<f64>,
}

/// Cholesky with greedy variable ordering: at each step the remaining
/// variable with the smallest conditional probability `P(Z_i ≤ b_i | …)`
/// is placed next. Pivots that vanish (relative to the original variance)
/// are marked with a zero diagonal and handled as indicator constraints.
fn reorder(b: &[f64], c: &DMatrix<f64>) -> Reordered {
    let d = b.len();
    let mut c = c.clone();
    let mut b = b.to_vec();
    let mut l = DMatrix::<f64>::zeros(d, d);
    let mut y = vec![0.0; d];
    for j in 0..d {
        let mut best = j;
        let mut best_p = f64::INFINITY;
        for i in j..d {
            let mut s2 = c[(i, i)];
            let mut shift = 0.0;
            for k in 0..j {
                s2 -= l[(i, k)] * l[(i, k)];
                shift += l[(i, k)] * y[k];
            }
            let p = if s2 > 1e-12 * c[(i, i)] {
                normal::cdf((b[i] - shift) / s2.sqrt())
            } else if b[i] - shift >= 0.0 {
                1.0
            } else {
                0.0
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
        }
        let mut s2 = c[(j, j)];
        let mut shift = 0.0;
        for k in 0..j {
            s2 -= l[(j, k)] * l[(j, k)];
            shift += l[(j, k)] * y[k];
        }
        if s2 > 1e-12 * c[(j, j)] {
            let ljj = s2.sqrt();
            l[(j, j)] = ljj;
            for i in (j + 1)..d {
                let mut s = c[(i, j)];
                for k in 0..j {
                    s -= l[(i, k)] * l[(j, k)];
                }
                l[(i, j)] = s / ljj;
            }
            let t = (b[j] - shift) / ljj;
            // E[Z | Z ≤ t]
            y[j] = -(normal::log_pdf(t) - normal::log_cdf(t)).exp();
        } else {
            y[j] = 0.0;
        }
    }
    let mut packed = Vec::with_capacity(d * (d + 1) / 2);
    for i in 0..d {
        for k in 0..=i {
            packed.push(l[(i, k)]);
        }
    }
    Reordered { bounds: b, packed }
}

struct Estimate {
    log_prob: f64,
    rel_err: f64,
    points_used: usize,
    tolerance_met: bool,
}

fn sov_integral<R: Rng + ?Sized>(
    b: &[f64],
    c: &DMatrix<f64>,
    settings: &CdfSettings,
    budget: usize,
    rng: &mut R,
) -> Estimate {
    let d = b.len();
    let ord = reorder(b, c);
    let dims = d - 1;
    let gen = lattice_generator(dims);
    let shifts: Vec<Vec<f64>> = (0..settings.shifts)
        .map(|_| (0..dims).map(|_| rng.random::<f64>()).collect())
        .collect();
    // running (max, scaled sum) per shift for a log-sum-exp
    let mut acc: Vec<(f64, f64)> = vec![(f64::NEG_INFINITY, 0.0); settings.shifts];
    let mut done = 0usize;
    let mut target = settings.min_points;
    loop {
        let from = done + 1;
        let to = target;
        acc.par_iter_mut()
            .zip(shifts.par_iter())
            .for_each(|(a, shift)| {
                let mut y = vec![0.0; d];
                let mut w = vec![0.0; dims];
                for k in from..=to {
                    let kf = k as f64;
                    for j in 0..dims {
                        let x = (kf * gen[j] + shift[j]).fract();
                        w[j] = (2.0 * x - 1.0).abs();
                    }
                    let v = integrand(&ord, &w, &mut y);
                    lse_push(a, v);
                }
            });
        done = target;
        let per_shift: Vec<f64> = acc
            .iter()
            .map(|&(m, s)| m + s.ln() - (done as f64).ln())
            .collect();
        let (log_mean, rel_err) = shift_summary(&per_shift);
        let used = done * settings.shifts;
        let abs_err = rel_err * log_mean.exp();
        let ok = rel_err <= settings.rel_tol && abs_err <= settings.abs_tol;
        if ok || used * 2 > budget || log_mean == f64::NEG_INFINITY {
            return Estimate {
                log_prob: log_mean,
                rel_err,
                points_used: used,
                tolerance_met: ok,
            };
        }
        target *= 2;
    }
}

fn integrand(ord: &Reordered, w: &[f64], y: &mut [f64]) -> f64 {
    let d = ord.bounds.len();
    // product kept in linear scale, folded into `logf` before it underflows
    let mut prod = 1.0;
    let mut logf = 0.0;
    let mut start = 0;
    for i in 0..d {
        let row = &ord.packed[start..start + i + 1];
        start += i + 1;
        let t = ord.bounds[i]
            - row[..i]
                .iter()
                .zip(&y[..i])
                .map(|(a, b)| a * b)
                .sum::<f64>();
        let lii = row[i];
        if lii == 0.0 {
            if t < 0.0 {
                return f64::NEG_INFINITY;
            }
            y[i] = 0.0;
            continue;
        }
        let z = t / lii;
        let e = if z > -37.0 {
            let e = normal::cdf(z);
            prod *= e;
            e
        } else {
            let lc = normal::log_cdf(z);
            if lc == f64::NEG_INFINITY {
                return lc;
            }
            logf += lc;
            lc.exp()
        };
        if prod < 1e-250 {
            if prod == 0.0 {
                return f64::NEG_INFINITY;
            }
            logf += prod.ln();
            prod = 1.0;
        }
        if i + 1 < d {
            let p = (w[i] * e).max(f64::MIN_POSITIVE);
            y[i] = normal::quantile(p).max(-38.5);
        }
    }
    logf + prod.ln()
}

fn lse_push(acc: &mut (f64, f64), v: f64) {
    if v == f64::NEG_INFINITY {
        return;
    }
    if v > acc.0 {
        acc.1 = acc.1 * (acc.0 - v).exp() + 1.0;
        acc.0 = v;
    } else {
        acc.1 += (v - acc.0).exp();
    }
}

/// Log of the mean of the per-shift estimates and three standard errors of
/// that mean relative to it.
fn shift_summary(log_ests: &[f64]) -> (f64, f64) {
    let s = log_ests.len() as f64;
    let m = log_ests.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return (m, f64::INFINITY);
    }
    let ratios: Vec<f64> = log_ests.iter().map(|&v| (v - m).exp()).collect();
    let mean = ratios.iter().sum::<f64>() / s;
    let var = ratios.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / (s - 1.0);
    let log_mean = m + mean.ln();
    let rel = 3.0 * (var / s).sqrt() / mean;
    (log_mean, rel)
}

/// Richtmyer generator `frac(√p_j)` over the first primes.
fn lattice_generator(dims: usize) -> Vec<f64> {
    primes(dims)
        .into_iter()
        .map(|p| (p as f64).sqrt().fract())
        .collect()
}

fn primes(count: usize) -> Vec<u64> {
    let mut out = Vec::with_capacity(count);
    let mut n = 2u64;
    while out.len() < count {
        if out.iter().take_while(|&&p| p * p <= n).all(|&p| n % p != 0) {
            out.push(n);
        }
        n += 1;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gauss::chol_psd;
    use crate::rng::seeded;
    use crate::serde_util::POS_INF_BOUND;
    use nalgebra::dmatrix;

    fn corr2(rho: f64) -> SpdMatrix {
        chol_psd(&dmatrix![1.0, rho; rho, 1.0]).unwrap()
    }

    #[test]
    fn univariate_half() {
        let r = mvn_cdf(
            &[0.0],
            &SpdMatrix::identity(1),
            &CdfSettings::default(),
            &mut seeded(1),
        )
        .unwrap();
        assert!((r.prob() - 0.5).abs() < 1e-15);
        assert!(r.tolerance_met);
    }

    #[test]
    fn bivariate_arcsin() {
        let r = mvn_cdf(
            &[0.0, 0.0],
            &corr2(0.5),
            &CdfSettings::default(),
            &mut seeded(2),
        )
        .unwrap();
        assert!((r.prob() - 1.0 / 3.0).abs() < 1e-5, "{}", r.prob());
        assert!(r.err_estimate <= 1e-5);
    }

    #[test]
    fn independent_trivariate() {
        let r = mvn_cdf(
            &[0.0; 3],
            &SpdMatrix::identity(3),
            &CdfSettings::default(),
            &mut seeded(3),
        )
        .unwrap();
        assert!((r.prob() - 0.125).abs() < 1e-14);
    }

    #[test]
    fn trivariate_orthant_closed_form() {
        for r in [
            [0.3f64, -0.2, 0.5],
            [-0.54, 0.43, -0.82],
            [0.9, 0.85, 0.8],
            [-0.45, -0.45, -0.05],
        ] {
            let cov =
                chol_psd(&dmatrix![1.0, r[0], r[1]; r[0], 1.0, r[2]; r[1], r[2], 1.0]).unwrap();
            let p = mvn_cdf(&[0.0; 3], &cov, &CdfSettings::default(), &mut seeded(1)).unwrap();
            let exact =
                0.125 + r.iter().map(|x| x.asin()).sum::<f64>() / (4.0 * std::f64::consts::PI);
            assert!(
                (p.prob() / exact - 1.0).abs() < 1e-10,
                "{r:?}: {} vs {exact}",
                p.prob()
            );
        }
    }

    #[test]
    fn trivariate_quadrature_agrees_with_lattice() {
        let c: DMatrix<f64> = dmatrix![1.0, 0.6, -0.3; 0.6, 2.0, 0.4; -0.3, 0.4, 0.5];
        let b = [0.4, -1.1, 0.2];
        let (p, err) = {
            let sd: Vec<f64> = (0..3).map(|i| c[(i, i)].sqrt()).collect();
            let h: Vec<f64> = (0..3).map(|i| b[i] / sd[i]).collect();
            let r = |i: usize, j: usize| c[(i, j)] / (sd[i] * sd[j]);
            tvn(&h, [r(0, 1), r(0, 2), r(1, 2)]).unwrap()
        };
        assert!(err < 1e-12);
        let s = CdfSettings::with_tolerance(1e-9, 1e-7);
        let lattice = sov_integral(&b, &c, &s, s.max_points, &mut seeded(2));
        assert!((lattice.log_prob - p.ln()).abs() < 3.0 * lattice.rel_err.max(1e-9));
    }

    #[test]
    fn infinite_upper_marginalizes() {
        let cov = corr2(0.7);
        let r = mvn_cdf(
            &[POS_INF_BOUND, 0.3],
            &cov,
            &CdfSettings::default(),
            &mut seeded(4),
        )
        .unwrap();
        assert!((r.prob() - normal::cdf(0.3)).abs() < 1e-14);
        let all = mvn_cdf(
            &[POS_INF_BOUND; 2],
            &cov,
            &CdfSettings::default(),
            &mut seeded(4),
        )
        .unwrap();
        assert_eq!(all.log_prob, 0.0);
    }

    #[test]
    fn deterministic_given_seed() {
        let cov = chol_psd(&dmatrix![1.0, 0.3, 0.2; 0.3, 1.0, -0.4; 0.2, -0.4, 1.0]).unwrap();
        let a = mvn_cdf(
            &[0.1, -0.5, 1.0],
            &cov,
            &CdfSettings::default(),
            &mut seeded(9),
        )
        .unwrap();
        let b = mvn_cdf(
            &[0.1, -0.5, 1.0],
            &cov,
            &CdfSettings::default(),
            &mut seeded(9),
        )
        .unwrap();
        assert_eq!(a.log_prob.to_bits(), b.log_prob.to_bits());
    }

    #[test]
    fn degenerate_equicorrelated_pair() {
        // Z1 = Z2 exactly: P(Z1 ≤ 0.5, Z2 ≤ -0.2) = Φ(-0.2)
        let cov = chol_psd(&dmatrix![1.0, 1.0; 1.0, 1.0]).unwrap();
        let r = mvn_cdf(&[0.5, -0.2], &cov, &CdfSettings::default(), &mut seeded(5)).unwrap();
        assert!((r.prob() - normal::cdf(-0.2)).abs() < 1e-4, "{}", r.prob());
    }

    #[test]
    fn block_diagonal_factorizes() {
        let mut m = DMatrix::<f64>::identity(4, 4);
        m[(0, 1)] = 0.5;
        m[(1, 0)] = 0.5;
        m[(2, 3)] = -0.5;
        m[(3, 2)] = -0.5;
        let cov = chol_psd(&m).unwrap();
        let r = mvn_cdf(&[0.0; 4], &cov, &CdfSettings::precise(), &mut seeded(6)).unwrap();
        let expect = (1.0 / 3.0) * (1.0 / 6.0);
        assert!(
            (r.prob() - expect).abs() < 1e-9,
            "{} vs {}",
            r.prob(),
            expect
        );
    }

    #[test]
    fn high_dimensional_orthant_in_log_space() {
        // equicorrelated ρ = 1/2 orthant: P = 1/(d+1)
        let d = 30;
        let m = DMatrix::from_fn(d, d, |i, j| if i == j { 1.0 } else { 0.5 });
        let cov = chol_psd(&m).unwrap();
        let r = mvn_cdf(&vec![0.0; d], &cov, &CdfSettings::default(), &mut seeded(8)).unwrap();
        assert!(
            (r.log_prob + ((d + 1) as f64).ln()).abs() < 5e-3,
            "{}",
            r.log_prob
        );
    }
}

#[cfg(test)]
mod bvn_tests {
    use super::*;
    use crate::gauss::chol_psd;
    use crate::rng::seeded;
    use nalgebra::dmatrix;

    #[test]
    fn orthants_match_arcsine_law() {
        for &r in &[
            -0.99, -0.93, -0.8, -0.5, -0.1, 0.0, 0.2, 0.5, 0.8, 0.93, 0.99,
        ] {
            let expect = 0.25 + f64::asin(r) / (2.0 * std::f64::consts::PI);
            assert!((bvn_upper(0.0, 0.0, r) - expect).abs() < 1e-14, "{r}");
        }
    }

    #[test]
    fn agrees_with_lattice_rule_off_origin() {
        let settings = CdfSettings {
            min_points: 1 << 16,
            ..CdfSettings::default()
        };
        for &(h, k, r) in &[
            (0.3, -1.2, 0.6),
            (1.5, 0.4, -0.95),
            (-0.7, 2.0, 0.97),
            (0.1, 0.2, -0.3),
        ] {
            let cov = chol_psd(&dmatrix![1.0, r; r, 1.0]).unwrap();
            let d = cov.dim();
            let b: Vec<f64> = vec![h, k];
            let est = sov_integral(&b, cov.values(), &settings, usize::MAX, &mut seeded(11));
            let exact = bvn_upper(-h, -k, r);
            assert_eq!(d, 2);
            assert!(
                (est.log_prob.exp() - exact).abs() < 1e-6,
                "{h} {k} {r}: {} vs {exact}",
                est.log_prob.exp()
            );
        }
    }
}
