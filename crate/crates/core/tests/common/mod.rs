#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::Rng;
use rand_distr::StandardNormal;
use sunprobit::model::{build, Dataset, ModelFamily, ModelSpec, Predictors};
use sunprobit::rng::seeded;
use sunprobit::{chol_psd, ProbitLikelihood, SpdMatrix, SunParams};

/// `BBᵀ + ridge·I` from a flat proptest vector.
pub fn spd_from(entries: &[f64], d: usize, ridge: f64) -> DMatrix<f64> {
    let b = DMatrix::from_fn(d, d, |i, j| entries[i * d + j]);
    &b * b.transpose() + DMatrix::identity(d, d) * ridge
}

pub fn to_corr(a: &DMatrix<f64>) -> DMatrix<f64> {
    let d = a.nrows();
    DMatrix::from_fn(d, d, |i, j| a[(i, j)] / (a[(i, i)] * a[(j, j)]).sqrt())
}

pub fn spd_strategy(max_dim: usize) -> impl Strategy<Value = DMatrix<f64>> {
    (1..=max_dim).prop_flat_map(|d| {
        prop::collection::vec(-1.0f64..1.0, d * d).prop_map(move |v| spd_from(&v, d, 0.2))
    })
}

pub fn spd(a: &DMatrix<f64>) -> SpdMatrix {
    chol_psd(a).unwrap()
}

/// Random unit-level dataset with labels in `1..=classes`.
pub fn random_dataset(seed: u64, n: usize, p: usize, classes: usize) -> Dataset {
    let mut rng = seeded(seed);
    let x = DMatrix::from_fn(n, p, |_, j| {
        if j == 0 {
            1.0
        } else {
            0.5 * rng.sample::<f64, _>(StandardNormal)
        }
    });
    let y = (0..n).map(|_| rng.random_range(1..=classes)).collect();
    Dataset::new(y, Predictors::PerUnit(x)).unwrap()
}

pub fn random_choice_dataset(seed: u64, n: usize, p: usize, classes: usize) -> Dataset {
    let mut rng = seeded(seed);
    let x = (0..n)
        .map(|_| {
            DMatrix::from_fn(classes, p, |_, _| {
                0.5 * rng.sample::<f64, _>(StandardNormal)
            })
        })
        .collect();
    let y = (0..n).map(|_| rng.random_range(1..=classes)).collect();
    Dataset::new(y, Predictors::PerClass(x)).unwrap()
}

pub fn instance(
    family: ModelFamily,
    seed: u64,
    n: usize,
    p: usize,
    classes: usize,
    scale: f64,
) -> (ModelSpec, SunParams, ProbitLikelihood) {
    let spec = ModelSpec::new(family, classes, p, None).unwrap();
    let data = match family {
        ModelFamily::DiscreteChoice => random_choice_dataset(seed, n, p, classes),
        _ => random_dataset(seed, n, p, classes),
    };
    let lik = build(&spec, &data).unwrap();
    (
        spec.clone(),
        SunParams::isotropic(spec.q(), scale).unwrap(),
        lik,
    )
}

/// Skew-normal style prior with `h = 1`.
pub fn skewed_prior(q: usize, alpha: f64) -> SunParams {
    let delta = DMatrix::from_fn(q, 1, |i, _| if i == 0 { alpha } else { 0.0 });
    SunParams::new(
        DVector::zeros(q),
        DMatrix::identity(q, q),
        delta,
        DVector::zeros(1),
        DMatrix::identity(1, 1),
    )
    .unwrap()
}
