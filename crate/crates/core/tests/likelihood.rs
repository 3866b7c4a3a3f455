mod common;

use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use sunprobit::gauss::{mvn_cdf, normal, CdfSettings};
use sunprobit::model::{
    build, unit_block, unit_log_likelihoods, working_covariates, Dataset, ModelFamily, ModelSpec,
    Predictors,
};
use sunprobit::rng::seeded;
use sunprobit::{chol_psd, NewUnit};

use common::{random_choice_dataset, random_dataset, spd_from, to_corr};

fn family() -> impl Strategy<Value = ModelFamily> {
    prop_oneof![
        Just(ModelFamily::DiscreteChoice),
        Just(ModelFamily::ClassSpecific),
        Just(ModelFamily::Sequential)
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn class_probabilities_sum_to_one(
        fam in family(),
        classes in 2usize..=4,
        p in 1usize..=3,
        seed in any::<u64>(),
        sig in prop::collection::vec(-1.0f64..1.0, 16),
        beta_seed in any::<u64>(),
    ) {
        let sigma = chol_psd(&to_corr(&spd_from(&sig[..classes * classes], classes, 0.3))).unwrap();
        let spec = ModelSpec::new(fam, classes, p, Some(sigma)).unwrap();
        let data = match fam {
            ModelFamily::DiscreteChoice => random_choice_dataset(seed, 1, p, classes),
            _ => random_dataset(seed, 1, p, classes),
        };
        let beta = DVector::from_fn(spec.q(), |i, _| ((beta_seed >> (i % 60)) & 7) as f64 / 4.0 - 0.9);
        let s = CdfSettings::default();
        let mut total = 0.0;
        let mut tol = 0.0;
        for l in 1..=classes {
            let (rows, lam) = unit_block(&spec, &data.x.unit(0), l).unwrap();
            let r = mvn_cdf((&rows * &beta).as_slice(), &chol_psd(&lam).unwrap(), &s, &mut seeded(l as u64)).unwrap();
            total += r.prob();
            tol += r.err_estimate.max(s.abs_tol);
        }
        prop_assert!((total - 1.0).abs() <= 5.0 * tol, "sum {total}");
    }

    #[test]
    fn class_specific_is_discrete_choice_on_working_covariates(
        classes in 2usize..=4,
        p in 1usize..=3,
        n in 0usize..=5,
        seed in any::<u64>(),
        sig in prop::collection::vec(-1.0f64..1.0, 16),
    ) {
        let sigma = chol_psd(&spd_from(&sig[..classes * classes], classes, 0.3)).unwrap();
        let cs = ModelSpec::new(ModelFamily::ClassSpecific, classes, p, Some(sigma.clone())).unwrap();
        let data = random_dataset(seed, n, p, classes);
        let Predictors::PerUnit(x) = &data.x else { unreachable!() };
        let w: Vec<DMatrix<f64>> = (0..n).map(|i| working_covariates(&x.row(i).transpose(), classes)).collect();
        let dc = ModelSpec::new(ModelFamily::DiscreteChoice, classes, p * (classes - 1), Some(sigma)).unwrap();
        let a = build(&cs, &data).unwrap();
        let b = build(&dc, &Dataset::new(data.y.clone(), Predictors::PerClass(w)).unwrap()).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn binary_sequential_is_textbook_probit(n in 1usize..=6, p in 1usize..=3, seed in any::<u64>()) {
        let spec = ModelSpec::new(ModelFamily::Sequential, 2, p, None).unwrap();
        let data = random_dataset(seed, n, p, 2);
        let lik = build(&spec, &data).unwrap();
        let beta = DVector::from_fn(p, |i, _| 0.7 - 0.4 * i as f64);
        let ll = unit_log_likelihoods(&lik, &beta, &CdfSettings::default(), &mut seeded(1)).unwrap();
        let Predictors::PerUnit(x) = &data.x else { unreachable!() };
        for i in 0..n {
            let sign = if data.y[i] == 1 { 1.0 } else { -1.0 };
            let eta = sign * x.row(i).dot(&beta.transpose());
            prop_assert_eq!(ll[i], normal::log_cdf(eta));
        }
    }

    #[test]
    fn row_counts_and_blocks(
        fam in family(),
        classes in 2usize..=5,
        p in 1usize..=3,
        n in 0usize..=8,
        seed in any::<u64>(),
    ) {
        let spec = ModelSpec::new(fam, classes, p, None).unwrap();
        let data = match fam {
            ModelFamily::DiscreteChoice => random_choice_dataset(seed, n, p, classes),
            _ => random_dataset(seed, n, p, classes),
        };
        let lik = build(&spec, &data).unwrap();
        let expected: Vec<usize> = data
            .y
            .iter()
            .map(|&y| match fam {
                ModelFamily::Sequential => y.min(classes - 1),
                _ => classes - 1,
            })
            .collect();
        prop_assert_eq!(lik.m, expected.iter().sum::<usize>());
        prop_assert_eq!(lik.xbar.ncols(), spec.q());
        prop_assert_eq!(lik.units(), n);
        let mut start = 0;
        for (i, r) in lik.unit_blocks.iter().enumerate() {
            prop_assert_eq!(r.start, start);
            prop_assert_eq!(r.len(), expected[i]);
            prop_assert_eq!(lik.lambda_blocks[i].nrows(), expected[i]);
            start = r.end;
        }
    }
}

#[test]
fn per_class_layout_rejected_for_sequential() {
    let spec = ModelSpec::new(ModelFamily::Sequential, 3, 2, None).unwrap();
    assert!(unit_block(&spec, &NewUnit::PerClass(DMatrix::zeros(3, 2)), 1).is_err());
}
