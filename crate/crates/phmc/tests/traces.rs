//! Trace identities: finite-truncation traces of the model covariances
//! against their continuum limits.

use phmc::models::{
    pimd, tps, PimdModel, PimdParams, PointPotential, TargetModel, TpsModel, TpsParams,
};
use phmc::spectral::{weighted_trace, SobolevIndex};

fn tps_trace(m: usize, tau: f64, d: usize) -> f64 {
    let model = TpsModel::build(TpsParams {
        tau,
        d,
        m,
        endpoint_a: vec![0.0; d],
        endpoint_b: vec![0.0; d],
        potential: PointPotential::zero(d),
    })
    .unwrap();
    weighted_trace(
        model.covariance(),
        model.covariance(),
        SobolevIndex::default(),
    )
    .unwrap()
}

fn pimd_trace(m: usize, beta: f64, a: f64, d: usize) -> f64 {
    let model = PimdModel::build(PimdParams {
        beta,
        a,
        d,
        m,
        potential: PointPotential::zero(d),
    })
    .unwrap();
    weighted_trace(
        model.covariance(),
        model.covariance(),
        SobolevIndex::default(),
    )
    .unwrap()
}

#[test]
fn bridge_continuum_trace_is_a_sixth_of_the_squared_horizon() {
    // sum over wavenumbers of (tau/(k pi))^2 = tau^2/6; tau = sqrt(6) makes
    // it exactly 1
    let tau = 6f64.sqrt();
    let partial: f64 = (1..=200_000)
        .map(|k| tps::continuum_eigenvalue(tau, k))
        .sum();
    assert!((partial - 1.0).abs() < 1e-4, "partial sum {partial}");
}

#[test]
fn bridge_truncated_trace_converges_from_above_within_double_the_limit() {
    let tau = 6f64.sqrt();
    let limit = tau * tau / 6.0;
    let mut last_err = f64::INFINITY;
    for m in [64usize, 256, 1024] {
        let tr = tps_trace(m, tau, 1);
        // per-mode discretization excess and the missing tail pull in
        // opposite directions; only the bound and the convergence are
        // claimed
        let err = (tr - limit).abs();
        assert!(tr <= 2.0 * limit, "trace within twice the continuum value");
        assert!(err < last_err, "error not shrinking at m = {m}");
        last_err = err;
    }
    assert!(last_err < 5e-3 * limit);
}

#[test]
fn loop_truncated_trace_converges_to_the_continuum_value() {
    // continuum trace of the shifted-Laplacian inverse on the circle:
    // d/a + 2d sum_k (a + omega_k^2)^-1 = (d beta / (2 sqrt a)) coth(sqrt a beta / 2)
    for (beta, a, d) in [(2.0 * std::f64::consts::PI, 1.0f64, 1usize), (1.5, 0.25, 2)] {
        let x = a.sqrt() * beta / 2.0;
        let coth = (x.exp() + (-x).exp()) / (x.exp() - (-x).exp());
        let limit = d as f64 * beta / (2.0 * a.sqrt()) * coth;

        // direct check of the closed form against a long partial sum
        let direct: f64 = d as f64 / a
            + (2..=200_000)
                .map(|k| 2.0 * d as f64 * pimd::continuum_eigenvalue(beta, a, k))
                .sum::<f64>();
        assert!(
            (direct - limit).abs() < 1e-3 * limit,
            "partial {direct} vs closed form {limit}"
        );

        let mut last_err = f64::INFINITY;
        for m in [64usize, 256, 1024] {
            let tr = pimd_trace(m, beta, a, d);
            let err = (tr - limit).abs();
            assert!(err < last_err, "error not shrinking at m = {m}");
            // the dimension-free bound used by the constant pipeline
            assert!(tr <= 2.0 * d as f64 * (1.0 / a + beta * beta));
            last_err = err;
        }
        assert!(
            last_err < 2e-2 * limit,
            "m = 1024 error {last_err} vs limit {limit}"
        );
    }
}
