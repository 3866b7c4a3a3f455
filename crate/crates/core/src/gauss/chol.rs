use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Jitter levels tried in order until the factorization succeeds.
pub const JITTER_LADDER: [f64; 4] = [0.0, 1e-10, 1e-8, 1e-6];

/// A symmetric positive (semi)definite matrix with its cached lower Cholesky
/// factor. `jitter` records the diagonal shift that was needed to factor it.
#[derive(Debug, Clone, PartialEq)]
pub struct SpdMatrix {
    values: DMatrix<f64>,
    factor: DMatrix<f64>,
    jitter: f64,
}

/// Factor a symmetric matrix, adding the smallest jitter from
/// [`JITTER_LADDER`] that makes it positive definite.
pub fn chol_psd(a: &DMatrix<f64>) -> Result<SpdMatrix> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(Error::DimensionMismatch {
            what: "square matrix",
            expected: n,
            found: a.ncols(),
        });
    }
    if n == 0 {
        return Ok(SpdMatrix {
            values: a.clone(),
            factor: a.clone(),
            jitter: 0.0,
        });
    }
    let scale = a.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    let mut asym = 0.0f64;
    for i in 0..n {
        for j in 0..i {
            asym = asym.max((a[(i, j)] - a[(j, i)]).abs());
        }
    }
    if asym > 1e-12 * scale {
        return Err(Error::NotSymmetric { asymmetry: asym });
    }
    let values = DMatrix::from_fn(n, n, |i, j| 0.5 * (a[(i, j)] + a[(j, i)]));
    for &jitter in &JITTER_LADDER {
        if let Some(factor) = cholesky_lower(&values, jitter) {
            return Ok(SpdMatrix {
                values,
                factor,
                jitter,
            });
        }
    }
    Err(Error::NotFactorizable {
        dim: n,
        max_jitter: JITTER_LADDER[JITTER_LADDER.len() - 1],
    })
}

/// Plain Cholesky of `a + jitter·I`. Pivots below `1e-14` of the largest
/// diagonal entry count as failure so that rank-deficient input is sent up
/// the jitter ladder instead of producing a rounding-noise factor.
fn cholesky_lower(a: &DMatrix<f64>, jitter: f64) -> Option<DMatrix<f64>> {
    let n = a.nrows();
    let max_diag = (0..n).fold(0.0f64, |m, i| m.max(a[(i, i)].abs()));
    let floor = 1e-14 * max_diag.max(f64::MIN_POSITIVE);
    let mut shifted = a.clone();
    for i in 0..n {
        shifted[(i, i)] += jitter;
    }
    let l = nalgebra::linalg::Cholesky::new(shifted)?.unpack();
    let ok = (0..n).all(|i| {
        let d = l[(i, i)];
        d.is_finite() && d * d > floor
    });
    ok.then_some(l)
}

impl SpdMatrix {
    pub fn identity(n: usize) -> Self {
        SpdMatrix {
            values: DMatrix::identity(n, n),
            factor: DMatrix::identity(n, n),
            jitter: 0.0,
        }
    }

    /// Diagonal matrix; entries must be positive.
    pub fn diagonal(d: &[f64]) -> Result<Self> {
        chol_psd(&DMatrix::from_diagonal(&DVector::from_column_slice(d)))
    }

    pub fn dim(&self) -> usize {
        self.values.nrows()
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn factor(&self) -> &DMatrix<f64> {
        &self.factor
    }

    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    pub fn into_values(self) -> DMatrix<f64> {
        self.values
    }

    /// `L⁻¹ b`.
    pub fn solve_lower(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        self.factor
            .solve_lower_triangular(b)
            .expect("Cholesky factor has a positive diagonal")
    }

    /// `(A + jitter·I)⁻¹ b` through two triangular solves.
    pub fn solve(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        let y = self.solve_lower(b);
        self.factor
            .tr_solve_lower_triangular(&y)
            .expect("Cholesky factor has a positive diagonal")
    }

    pub fn solve_vec(&self, b: &DVector<f64>) -> DVector<f64> {
        let y = self
            .factor
            .solve_lower_triangular(b)
            .expect("Cholesky factor has a positive diagonal");
        self.factor
            .tr_solve_lower_triangular(&y)
            .expect("Cholesky factor has a positive diagonal")
    }

    pub fn inverse(&self) -> DMatrix<f64> {
        let n = self.dim();
        let inv = self.solve(&DMatrix::identity(n, n));
        DMatrix::from_fn(n, n, |i, j| 0.5 * (inv[(i, j)] + inv[(j, i)]))
    }

    pub fn log_det(&self) -> f64 {
        2.0 * (0..self.dim())
            .map(|i| self.factor[(i, i)].ln())
            .sum::<f64>()
    }

    /// `xᵀ A⁻¹ x`.
    pub fn quad_form_inv(&self, x: &DVector<f64>) -> f64 {
        let y = self
            .factor
            .solve_lower_triangular(x)
            .expect("Cholesky factor has a positive diagonal");
        y.norm_squared()
    }

    /// Principal submatrix on `idx`, refactored.
    pub fn submatrix(&self, idx: &[usize]) -> Result<SpdMatrix> {
        let sub = DMatrix::from_fn(idx.len(), idx.len(), |i, j| self.values[(idx[i], idx[j])]);
        chol_psd(&sub)
    }

    /// `log φ_d(x; 0, A)`.
    pub fn log_density(&self, x: &DVector<f64>) -> f64 {
        let d = self.dim() as f64;
        -0.5 * self.quad_form_inv(x) - 0.5 * self.log_det() - d * super::normal::LN_SQRT_2PI
    }
}

/// `0.5 (A + Aᵀ)`.
pub fn symmetrize(a: &DMatrix<f64>) -> DMatrix<f64> {
    DMatrix::from_fn(a.nrows(), a.ncols(), |i, j| 0.5 * (a[(i, j)] + a[(j, i)]))
}
