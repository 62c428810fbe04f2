//! Statistical checks of the harness against closed-form targets.

use ustat_ldp::harness::synthetic::kendall_grid;
use ustat_ldp::harness::{run_experiment, DataSource, Experiment, ProtocolConfig, Task};
use ustat_ldp::kernels::{population_moments, Kernel};
use ustat_ldp::pairwise_2pc::MechanismKind;

#[test]
fn kendall_pair_subsampling_mse() {
    let (n, eps) = (500usize, 1.0f64);
    let spec = kendall_grid(n);
    let report = run_experiment(&Experiment {
        task: Task::Kendall,
        protocol: ProtocolConfig::Pairs {
            epsilon: eps,
            p: 1,
            mechanism: MechanismKind::Laplace,
        },
        data: DataSource::Synthetic(spec.clone()),
        reps: 4000,
        resample: true,
        seed: 31,
    })
    .unwrap();

    // Independent target: with P = 1 the n/2 pairs are disjoint, so the
    // estimate is a mean of n/2 i.i.d. kernel values, each plus Laplace
    // noise of scale 2/eps (variance 8/eps^2).
    let (points, dist) = spec.population().unwrap();
    let m = population_moments(&Kernel::kendall_tau().matrix_over(&points).unwrap(), &dist).unwrap();
    let pairs = n as f64 / 2.0;
    let want = (m.zeta2 + 8.0 / (eps * eps)) / pairs;
    let rel = (report.empirical_mse - want).abs() / want;
    assert!(rel <= 0.15, "mse {} vs {want}", report.empirical_mse);
    let bound = report.theoretical_bound.unwrap();
    assert!((bound - want).abs() <= 1e-12 * want, "{bound} vs {want}");
}
