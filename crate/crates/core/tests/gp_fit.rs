use bodegen::gp::{fit_detailed, map_objective, FitOptions};
use bodegen::{GpDataset, GpModel, KernelFamily, KernelParams, LengthscalePrior, SearchPoint};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// 40 noisy draws from a zero-mean Matérn-5/2 GP with lengthscale 2 in 4 dims.
fn sample_gp(seed: u64) -> (GpDataset, KernelParams) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let truth = KernelParams::isotropic(4, 2.0, 1.0, 1e-3, KernelFamily::Matern52).unwrap();
    let xs: Vec<Vec<f64>> = (0..40).map(|_| (0..4).map(|_| rng.random_range(0.0..6.0)).collect()).collect();
    let mut k = DMatrix::from_fn(40, 40, |i, j| truth.kernel(&xs[i], &xs[j]).unwrap());
    for i in 0..40 {
        k[(i, i)] += truth.noise_variance();
    }
    let l = k.cholesky().unwrap().unpack();
    let e = DVector::from_fn(40, |_, _| rng.sample::<f64, _>(StandardNormal));
    let y = l * e;
    let dataset = GpDataset::new(xs.into_iter().map(SearchPoint).collect(), y.iter().copied().collect()).unwrap();
    (dataset, truth)
}

#[test]
fn fit_is_at_least_as_good_as_the_generating_parameters() {
    for seed in 0..3 {
        let (dataset, truth) = sample_gp(seed);
        let prior = LengthscalePrior::new(4);
        let report = fit_detailed(&dataset, &prior, &FitOptions::default(), &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        let at_truth = map_objective(&truth, &dataset, &prior).unwrap();
        let at_fit = map_objective(&report.params, &dataset, &prior).unwrap();
        assert!((at_fit - report.objective).abs() < 1e-9 * at_fit.abs().max(1.0));
        assert!(at_fit >= at_truth - 1e-6, "seed {seed}: fit {at_fit} < truth {at_truth}");
        assert!(report.params.lengthscales().iter().all(|l| (0.2..20.0).contains(l)), "{:?}", report.params);
        GpModel::new(report.params, dataset).unwrap();
    }
}

#[test]
fn fit_report_lists_every_restart() {
    let (dataset, _) = sample_gp(7);
    let options = FitOptions {
        restarts: 3,
        ..FitOptions::default()
    };
    let prior = LengthscalePrior::new(4);
    let a = fit_detailed(&dataset, &prior, &options, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
    let b = fit_detailed(&dataset, &prior, &options, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.restarts.len(), 3);
    let best = a.restarts.iter().filter_map(|r| r.objective).fold(f64::NEG_INFINITY, f64::max);
    assert_eq!(a.restarts[a.chosen_restart].objective, Some(best));
}
