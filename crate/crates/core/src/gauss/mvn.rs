use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use super::chol::SpdMatrix;
use crate::error::{Error, Result};
use crate::rng::{chunk_count, StreamKey, CHUNK};

/// `count` i.i.d. draws from `N(mean, cov)`, one per row.
pub fn sample_mvn<R: Rng + ?Sized>(
    mean: &DVector<f64>,
    cov: &SpdMatrix,
    count: usize,
    rng: &mut R,
) -> Result<DMatrix<f64>> {
    let d = cov.dim();
    if mean.len() != d {
        return Err(Error::DimensionMismatch {
            what: "sample_mvn mean",
            expected: d,
            found: mean.len(),
        });
    }
    if count == 0 {
        return Err(Error::InvalidParameter(
            "sample count must be positive".into(),
        ));
    }
    let key = StreamKey::draw(rng);
    let lt = cov.factor().transpose();
    let chunks: Vec<DMatrix<f64>> = (0..chunk_count(count))
        .into_par_iter()
        .map(|c| {
            let rows = CHUNK.min(count - c * CHUNK);
            let mut r = key.stream(c as u64);
            let eta = DMatrix::<f64>::from_fn(rows, d, |_, _| r.sample(StandardNormal));
            let mut x = eta * &lt;
            for mut row in x.row_iter_mut() {
                row += mean.transpose();
            }
            x
        })
        .collect();
    Ok(stack_rows(&chunks, count, d))
}

pub(crate) fn stack_rows(chunks: &[DMatrix<f64>], count: usize, d: usize) -> DMatrix<f64> {
    let mut out = DMatrix::<f64>::zeros(count, d);
    let mut at = 0;
    for c in chunks {
        out.rows_mut(at, c.nrows()).copy_from(c);
        at += c.nrows();
    }
    out
}
