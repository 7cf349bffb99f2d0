use std::sync::Arc;

use filmfield::gaussian::thermal_momentum_covariance;
use filmfield::geometry::{build_basis, BoundarySpec, Grid, ModeBasis};
use filmfield::physics::{derive_params, DerivedParams, FilmParams};
use filmfield::reconstruct::{default_sample_times, fit_covariance, synth_two_point, Quadrature};

fn setup(n: usize) -> (Arc<ModeBasis>, DerivedParams) {
    let d = derive_params(&FilmParams::default()).unwrap();
    let c = d.c3;
    let grid = Grid::square(5e-3, n).unwrap();
    (Arc::new(build_basis(grid, BoundarySpec::dirichlet(), move |k| c * k).unwrap()), d)
}

fn mean_error(n_times: usize, rel_sigma: f64, seeds: u64) -> f64 {
    let (b, d) = setup(4);
    let truth = thermal_momentum_covariance(&b, 0.3).unwrap();
    let base = default_sample_times(&b, b.n_modes()).unwrap();
    let times: Vec<f64> = (0..n_times).map(|i| base[i % base.len()] + (i / base.len()) as f64 * 1e-7).collect();
    let mut times = times;
    times.sort_by(f64::total_cmp);
    times.dedup();
    let clean = synth_two_point(&truth, &b, &d, &times, Quadrature::Field, 0.0, 0).unwrap();
    let sigma = rel_sigma * clean.mean_abs_signal();
    (0..seeds)
        .map(|s| {
            let series = synth_two_point(&truth, &b, &d, &times, Quadrature::Field, sigma, s).unwrap();
            fit_covariance(&series, &b, &d).unwrap().relative_error(&truth).unwrap()
        })
        .sum::<f64>()
        / seeds as f64
}

#[test]
fn error_scales_with_noise_over_root_samples() {
    let (b, _) = setup(4);
    let n0 = default_sample_times(&b, b.n_modes()).unwrap().len();
    let e1 = mean_error(n0, 1e-3, 6);
    let e2 = mean_error(n0, 4e-3, 6);
    let ratio_sigma = e2 / e1;
    assert!(ratio_sigma > 4.0 / 3.0 && ratio_sigma < 4.0 * 3.0, "σ scaling ratio {ratio_sigma}");
    let e4 = mean_error(4 * n0, 1e-3, 6);
    let ratio_n = e1 / e4;
    assert!(ratio_n > 2.0 / 3.0 && ratio_n < 2.0 * 3.0, "sample-count scaling ratio {ratio_n}");
}

#[test]
fn residual_grows_with_nested_time_sets() {
    let (b, d) = setup(3);
    let truth = thermal_momentum_covariance(&b, 0.3).unwrap();
    let times = default_sample_times(&b, b.n_modes()).unwrap();
    let clean = synth_two_point(&truth, &b, &d, &times, Quadrature::Momentum, 0.0, 0).unwrap();
    let series = synth_two_point(&truth, &b, &d, &times, Quadrature::Momentum, 1e-2 * clean.mean_abs_signal(), 9).unwrap();
    let mut last = 0.0;
    for k in [times.len() / 4, times.len() / 2, 3 * times.len() / 4, times.len()] {
        let fit = fit_covariance(&series.prefix(k).unwrap(), &b, &d).unwrap();
        assert!(fit.residual_ss >= last * (1.0 - 1e-9), "k={k}: {} < {last}", fit.residual_ss);
        last = fit.residual_ss;
    }
}
