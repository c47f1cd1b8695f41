//! Two-scale coupling of two chains driven by the same kernel.
//!
//! High-mode velocity noise is shared between the components; on the low
//! modes the second chain's velocity is shifted by `gamma (x - y)` with the
//! maximal probability allowed by the Gaussian densities, and reflected
//! across the whitened difference direction otherwise. The shift steers the
//! low-mode difference to contract over one flow duration, the reflection
//! keeps the velocity marginal exact, and the shared high-mode noise lets
//! the linear part of the drift contract the remaining modes.

use crate::error::{Error, Result};
use crate::flow::{flow_ode, splitting_trajectory, Drift, DriftKind, PhasePoint};
use crate::metrics::AlphaNorm;
use crate::rng::RngStream;
use crate::sampler::{DurationRule, PhmcKernel};
use crate::spectral::{SpectralOperator, SpectralVector};
use crate::stats::{mean_and_se, median, standard_normal_cdf};
use rayon::prelude::*;
use serde::Serialize;
use std::f64::consts::PI;

/// Choice of the low-mode velocity shift per unit of position difference.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GammaRule {
    /// Synchronous low modes.
    Zero,
    /// Optimal for free flight: the shift closes the gap in time T.
    InverseT,
    /// Optimal for the pure rotation drift.
    CotT,
    /// A fixed value.
    Fixed(f64),
    /// The contraction-theory choice `min(1/T, 1/(4 R))` for cap radius R.
    Theory { r_cap: f64 },
}

impl GammaRule {
    /// Resolve against the flow duration. Must come out finite and
    /// nonnegative.
    pub fn resolve(&self, t: f64) -> Result<f64> {
        let value = match self {
            GammaRule::Zero => 0.0,
            GammaRule::InverseT => 1.0 / t,
            GammaRule::CotT => {
                if !(t > 0.0 && t < PI / 2.0) {
                    return Err(Error::invalid_param(
                        "gamma",
                        format!("cot rule needs duration in (0, pi/2), got {t}"),
                    ));
                }
                1.0 / t.tan()
            }
            GammaRule::Theory { r_cap } => (1.0 / t).min(1.0 / (4.0 * r_cap)),
            GammaRule::Fixed(g) => *g,
        };
        if !value.is_finite() || value < 0.0 {
            return Err(Error::invalid_param(
                "gamma",
                format!("rule resolves to {value}"),
            ));
        }
        Ok(value)
    }

    pub fn label(&self) -> &'static str {
        match self {
            GammaRule::Zero => "zero",
            GammaRule::InverseT => "inv-t",
            GammaRule::CotT => "cot-t",
            GammaRule::Fixed(_) => "fixed",
            GammaRule::Theory { .. } => "theory",
        }
    }
}

/// Reflection across the whitened low-mode difference:
/// `Ct^(1/2) (I - 2 e <e, .>) Ct^(-1/2)` with `e` the normalized whitened
/// difference. An orthogonal map for the covariance inner product that
/// sends the difference to its negative.
pub fn reflection_apply(
    xi_low: &SpectralVector,
    z_low: &SpectralVector,
    c_tilde: &SpectralOperator,
) -> Result<SpectralVector> {
    if xi_low.len() != z_low.len() || xi_low.len() != c_tilde.dim() {
        return Err(Error::DimensionMismatch {
            expected: c_tilde.dim(),
            got: xi_low.len(),
        });
    }
    let mut e: Vec<f64> = z_low
        .coefficients()
        .iter()
        .zip(c_tilde.eigenvalues())
        .map(|(&z, &lam)| z / lam.sqrt())
        .collect();
    let norm = e.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm == 0.0 {
        return Err(Error::ReflectionUndefined);
    }
    for v in &mut e {
        *v /= norm;
    }
    let w: Vec<f64> = xi_low
        .coefficients()
        .iter()
        .zip(c_tilde.eigenvalues())
        .map(|(&x, &lam)| x / lam.sqrt())
        .collect();
    let dot: f64 = e.iter().zip(&w).map(|(a, b)| a * b).sum();
    let coeffs: Vec<f64> = w
        .iter()
        .zip(&e)
        .zip(c_tilde.eigenvalues())
        .map(|((&wj, &ej), &lam)| (wj - 2.0 * dot * ej) * lam.sqrt())
        .collect();
    Ok(SpectralVector::eigen_with_weight(coeffs, xi_low.weight()))
}

/// Relative density of the shifted Gaussian against the centered one:
/// `exp(<Ct^-1 h, x> - <Ct^-1 h, h>/2)`.
pub fn max_coupling_density(
    h: &SpectralVector,
    x: &SpectralVector,
    c_tilde: &SpectralOperator,
) -> Result<f64> {
    if h.len() != x.len() || h.len() != c_tilde.dim() {
        return Err(Error::DimensionMismatch {
            expected: c_tilde.dim(),
            got: h.len(),
        });
    }
    let mut cross = 0.0;
    let mut selfq = 0.0;
    for ((&hj, &xj), &lam) in h
        .coefficients()
        .iter()
        .zip(x.coefficients())
        .zip(c_tilde.eigenvalues())
    {
        cross += hj * xj / lam;
        selfq += hj * hj / lam;
    }
    Ok((cross - 0.5 * selfq).exp())
}

/// Coupled pair of chain states. Once the components meet within the
/// threshold they are declared coalesced and evolve as one chain.
#[derive(Debug, Clone)]
pub struct CoupledPair {
    pub x: SpectralVector,
    pub y: SpectralVector,
    pub coalesced: bool,
}

impl CoupledPair {
    pub fn new(x: SpectralVector, y: SpectralVector) -> Self {
        debug_assert_eq!(x.len(), y.len());
        CoupledPair {
            x,
            y,
            coalesced: false,
        }
    }
}

/// Coupling configuration on top of a transition kernel.
#[derive(Debug, Clone)]
pub struct CouplingKernel {
    pub base: PhmcKernel,
    pub gamma: GammaRule,
    pub alpha_norm: AlphaNorm,
    pub meet_threshold: f64,
    /// Share the accept/reject uniform between the components (the
    /// synchronous extension of the coupling to the adjusted kernel).
    pub shared_acceptance: bool,
    drift: Drift,
}

impl CouplingKernel {
    pub fn new(
        base: PhmcKernel,
        gamma: GammaRule,
        alpha_norm: AlphaNorm,
        meet_threshold: f64,
    ) -> Result<Self> {
        if !(meet_threshold > 0.0) {
            return Err(Error::invalid_param("meet_threshold", "must be positive"));
        }
        alpha_norm.split.validate(base.dim())?;
        // fail early if the rule cannot resolve for this duration
        let _ = gamma.resolve(base.duration)?;
        let drift = Drift::model(base.model.clone());
        Ok(CouplingKernel {
            base,
            gamma,
            alpha_norm,
            meet_threshold,
            shared_acceptance: true,
            drift,
        })
    }

    /// Replace the drift by free flight (b = 0). Test configurations only;
    /// requires the exact kernel.
    pub fn with_free_flight(mut self) -> Result<Self> {
        if self.base.metropolis {
            return Err(Error::invalid_param(
                "drift",
                "free flight is only supported for the exact kernel",
            ));
        }
        self.drift = Drift::zero();
        Ok(self)
    }

    pub fn with_shared_acceptance(mut self, shared: bool) -> Self {
        self.shared_acceptance = shared;
        self
    }

    fn low_modes(&self) -> usize {
        self.alpha_norm.split.low_modes()
    }
}

/// Everything observable about one coupled transition.
#[derive(Debug, Clone)]
pub struct CoupledStepInfo {
    pub pair: CoupledPair,
    /// None when the low-mode difference was zero (synchronous noise);
    /// otherwise whether the shifted branch was taken.
    pub max_coupling_event: Option<bool>,
    pub accepted_x: bool,
    pub accepted_y: bool,
    pub steps: u64,
    /// distance in the two-scale norm after the step
    pub distance: f64,
}

/// One coupled transition. The randomness schedule is fixed: velocity
/// coefficients, one coupling uniform, then (for the adjusted kernel) the
/// step-count draw and the acceptance uniform(s), consumed identically on
/// every path through the step.
pub fn coupled_step(
    pair: &CoupledPair,
    kernel: &CouplingKernel,
    rng: &mut RngStream,
) -> Result<CoupledStepInfo> {
    let base = &kernel.base;
    let xi = {
        let mut draw = crate::spectral::sample_gaussian(&base.velocity_cov, rng);
        draw = SpectralVector::eigen_with_weight(draw.into_coefficients(), base.model.weight());
        draw
    };
    let u_couple = rng.uniform();
    let (k, u_x, u_y) = if base.metropolis {
        let mean_steps = match base.duration_rule {
            DurationRule::GeometricSteps { mean_steps } => mean_steps,
            DurationRule::Deterministic => {
                return Err(Error::invalid_param(
                    "kernel",
                    "adjusted coupling requires geometric step counts",
                ))
            }
        };
        let k = rng.geometric(1.0 / mean_steps);
        let u_x = rng.uniform();
        let u_y = if kernel.shared_acceptance {
            u_x
        } else {
            rng.uniform()
        };
        (k, u_x, u_y)
    } else {
        (0, 0.0, 0.0)
    };

    if pair.coalesced {
        // evolve one chain, keep the pair glued
        let (next, accepted) = propagate(&pair.x, &xi, k, u_x, kernel)?;
        let new_pair = CoupledPair {
            x: next.clone(),
            y: next,
            coalesced: true,
        };
        return Ok(CoupledStepInfo {
            pair: new_pair,
            max_coupling_event: None,
            accepted_x: accepted,
            accepted_y: accepted,
            steps: k,
            distance: 0.0,
        });
    }

    let n = kernel.low_modes();
    let z = pair.x.sub(&pair.y);
    let z_low_sq: f64 = z.coefficients()[..n].iter().map(|v| v * v).sum();

    // low-mode coupling of the velocity draw
    let mut eta = xi.clone();
    let max_coupling_event = if z_low_sq == 0.0 {
        None
    } else {
        let gamma = kernel.gamma.resolve(base.duration)?;
        let mut shift = SpectralVector::zeros_like(&z);
        shift.coefficients_mut()[..n].copy_from_slice(&z.coefficients()[..n]);
        shift.scale(gamma);
        // density of the shifted Gaussian at the drawn velocity
        let mut minus_shift = shift.clone();
        minus_shift.scale(-1.0);
        let density = max_coupling_density(&minus_shift, &xi, &base.velocity_cov)?;
        if u_couple <= density {
            for j in 0..n {
                eta.coefficients_mut()[j] += shift.coefficients()[j];
            }
            Some(true)
        } else {
            let reflected = reflection_apply(&xi, &shift, &base.velocity_cov)?;
            eta.coefficients_mut()[..n].copy_from_slice(&reflected.coefficients()[..n]);
            Some(false)
        }
    };

    let (next_x, accepted_x) = propagate(&pair.x, &xi, k, u_x, kernel)?;
    let (next_y, accepted_y) = propagate(&pair.y, &eta, k, u_y, kernel)?;

    let distance = kernel.alpha_norm.distance(&next_x, &next_y)?;
    let coalesced = distance <= kernel.meet_threshold;
    let pair = if coalesced {
        CoupledPair {
            y: next_x.clone(),
            x: next_x,
            coalesced: true,
        }
    } else {
        CoupledPair {
            x: next_x,
            y: next_y,
            coalesced: false,
        }
    };
    Ok(CoupledStepInfo {
        pair,
        max_coupling_event,
        accepted_x,
        accepted_y,
        steps: k,
        distance,
    })
}

fn propagate(
    x: &SpectralVector,
    velocity: &SpectralVector,
    k: u64,
    u_accept: f64,
    kernel: &CouplingKernel,
) -> Result<(SpectralVector, bool)> {
    let base = &kernel.base;
    let z = PhasePoint::new(x.clone(), velocity.clone());
    if !base.metropolis {
        let out = flow_ode(&z, base.duration, &base.integrator, &kernel.drift)?;
        return Ok((out.q, true));
    }
    debug_assert!(matches!(kernel.drift.kind, DriftKind::Model(_)));
    let proposal = splitting_trajectory(&z, k, base.integrator.dt, base.model.as_ref())?;
    let e_start = base.energy(&z.q, &z.v)?.value();
    let e_prop = base.energy(&proposal.q, &proposal.v)?.value();
    let accepted = u_accept < (-(e_prop - e_start)).exp();
    Ok(if accepted {
        (proposal.q, true)
    } else {
        (x.clone(), false)
    })
}

/// Empirical and exact frequency of the reflection branch for a given shift.
#[derive(Debug, Clone, Serialize)]
pub struct FailureProbability {
    /// Monte Carlo frequency of the reflection branch
    pub empirical: f64,
    /// total variation distance between the centered and shifted Gaussians
    pub tv_exact: f64,
    /// the linear upper bound `|gamma Ct^(-1/2) z_low| / sqrt(2 pi)`
    pub bound: f64,
}

/// Estimate how often the shifted branch fails for the velocity coupling
/// with shift `gamma * z_low`, and compare against the closed-form law.
pub fn coupling_failure_probability(
    z_low: &SpectralVector,
    gamma: f64,
    c_tilde: &SpectralOperator,
    n_samples: usize,
    rng: &mut RngStream,
) -> Result<FailureProbability> {
    if n_samples < 1_000 {
        return Err(Error::invalid_param("n_samples", "need at least 1000"));
    }
    let mut shift = z_low.clone();
    shift.scale(gamma);
    let whitened: f64 = shift
        .coefficients()
        .iter()
        .zip(c_tilde.eigenvalues())
        .map(|(&z, &lam)| z * z / lam)
        .sum::<f64>()
        .sqrt();
    let tv_exact = 2.0 * (standard_normal_cdf(whitened / 2.0) - 0.5);
    let bound = whitened / (2.0 * PI).sqrt();
    let mut minus_shift = shift.clone();
    minus_shift.scale(-1.0);
    let mut failures = 0usize;
    for _ in 0..n_samples {
        let xi = crate::spectral::sample_gaussian(c_tilde, rng);
        let u = rng.uniform();
        if u > max_coupling_density(&minus_shift, &xi, c_tilde)? {
            failures += 1;
        }
    }
    Ok(FailureProbability {
        empirical: failures as f64 / n_samples as f64,
        tv_exact,
        bound,
    })
}

/// Configuration of a coupling-time sweep over durations and shift rules.
#[derive(Debug, Clone)]
pub struct CouplingTimeConfig {
    pub t_grid: Vec<f64>,
    pub rules: Vec<GammaRule>,
    pub replicas: usize,
    pub step_cap: u64,
    pub meet_threshold: f64,
    pub dt: f64,
    pub metropolis: bool,
    pub low_modes: usize,
    pub alpha: f64,
}

/// One replica outcome.
#[derive(Debug, Clone, Serialize)]
pub struct CouplingTimeRow {
    pub rule: String,
    pub duration: f64,
    pub replica: usize,
    pub meet_steps: u64,
    pub censored: bool,
}

/// Aggregate per (rule, duration).
#[derive(Debug, Clone, Serialize)]
pub struct CouplingTimeSummary {
    pub rule: String,
    pub duration: f64,
    pub mean: f64,
    pub median: f64,
    pub se: f64,
    pub censored: usize,
}

/// Run coupled chains from fixed starts for every (rule, duration) cell and
/// record the first step at which the two-scale distance drops below the
/// threshold. Replicas that fail to meet within the cap are censored at the
/// cap. Cells where the rule does not resolve to an admissible shift (the
/// cotangent rule beyond a quarter period) are skipped. Replicas
/// parallelize; randomness depends only on (seed, cell, replica), never on
/// scheduling.
pub fn coupling_time_experiment(
    model: std::sync::Arc<dyn crate::models::TargetModel>,
    x0: &SpectralVector,
    y0: &SpectralVector,
    cfg: &CouplingTimeConfig,
    rng: &RngStream,
) -> Result<(Vec<CouplingTimeRow>, Vec<CouplingTimeSummary>)> {
    use crate::spectral::{ModeSplit, SobolevIndex};
    if cfg.replicas < 1 {
        return Err(Error::invalid_param("replicas", "must be at least 1"));
    }
    let mut rows = Vec::new();
    let mut summaries = Vec::new();
    for (rule_idx, rule) in cfg.rules.iter().enumerate() {
        for (t_idx, &t) in cfg.t_grid.iter().enumerate() {
            if rule.resolve(t).is_err() {
                continue;
            }
            let base = if cfg.metropolis {
                PhmcKernel::adjusted(model.clone(), t, cfg.dt.min(t))?
            } else {
                PhmcKernel::exact(model.clone(), t, cfg.dt.min(t))?
            };
            let alpha_norm = AlphaNorm::new(
                cfg.alpha,
                ModeSplit::new(cfg.low_modes)?,
                model.covariance().clone(),
                model.covariance().clone(),
                SobolevIndex::default(),
            )?;
            let kernel = CouplingKernel::new(base, *rule, alpha_norm, cfg.meet_threshold)?;
            let cell = (rule_idx * cfg.t_grid.len() + t_idx) as u64;
            let cell_rows: Vec<CouplingTimeRow> = (0..cfg.replicas)
                .into_par_iter()
                .map(|replica| {
                    let mut stream = rng.substream(cell * cfg.replicas as u64 + replica as u64);
                    let mut pair = CoupledPair::new(x0.clone(), y0.clone());
                    let mut meet_steps = cfg.step_cap;
                    let mut censored = true;
                    for step in 1..=cfg.step_cap {
                        let out = coupled_step(&pair, &kernel, &mut stream)?;
                        pair = out.pair;
                        if pair.coalesced {
                            meet_steps = step;
                            censored = false;
                            break;
                        }
                    }
                    Ok(CouplingTimeRow {
                        rule: rule.label().to_string(),
                        duration: t,
                        replica,
                        meet_steps,
                        censored,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            let samples: Vec<f64> = cell_rows.iter().map(|r| r.meet_steps as f64).collect();
            let (mean, se) = mean_and_se(&samples);
            summaries.push(CouplingTimeSummary {
                rule: rule.label().to_string(),
                duration: t,
                mean,
                median: median(&samples),
                se,
                censored: cell_rows.iter().filter(|r| r.censored).count(),
            });
            rows.extend(cell_rows);
        }
    }
    Ok((rows, summaries))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{GaussianModel, TargetModel};
    use crate::spectral::{sample_gaussian, ModeSplit, SobolevIndex};
    use std::sync::Arc;

    fn op(lams: &[f64]) -> SpectralOperator {
        SpectralOperator::new("ct", lams.to_vec()).unwrap()
    }

    fn low_supported(coords: &[f64], dim: usize) -> SpectralVector {
        let mut c = vec![0.0; dim];
        c[..coords.len()].copy_from_slice(coords);
        SpectralVector::eigen(c)
    }

    #[test]
    fn reflection_negates_the_difference() {
        let ct = op(&[2.0, 1.0, 0.5, 0.25]);
        let z = low_supported(&[0.7, -1.1], 4);
        let out = reflection_apply(&z, &z, &ct).unwrap();
        for (a, b) in out.coefficients().iter().zip(z.coefficients()) {
            assert!((a + b).abs() < 1e-12);
        }
    }

    #[test]
    fn reflection_is_an_involution_and_isometry() {
        let ct = op(&[2.0, 1.0, 0.5]);
        let mut rng = RngStream::from_seed(30);
        let z = low_supported(&[0.3, 0.9], 3);
        for _ in 0..50 {
            let u = low_supported(&[rng.standard_normal(), rng.standard_normal()], 3);
            let once = reflection_apply(&u, &z, &ct).unwrap();
            let twice = reflection_apply(&once, &z, &ct).unwrap();
            for (a, b) in twice.coefficients().iter().zip(u.coefficients()) {
                assert!((a - b).abs() < 1e-12);
            }
            // orthogonality in the covariance inner product
            let q = |v: &SpectralVector| -> f64 {
                v.coefficients()
                    .iter()
                    .zip(ct.eigenvalues())
                    .map(|(&x, &lam)| x * x / lam)
                    .sum()
            };
            assert!((q(&once) - q(&u)).abs() < 1e-12 * q(&u).max(1.0));
        }
    }

    #[test]
    fn reflection_rejects_zero_difference() {
        let ct = op(&[1.0, 0.5]);
        let zero = SpectralVector::eigen(vec![0.0, 0.0]);
        let xi = SpectralVector::eigen(vec![1.0, 0.0]);
        assert!(matches!(
            reflection_apply(&xi, &zero, &ct),
            Err(Error::ReflectionUndefined)
        ));
    }

    #[test]
    fn density_reference_values() {
        let ct = op(&[1.0]);
        let h0 = SpectralVector::eigen(vec![0.0]);
        let x = SpectralVector::eigen(vec![0.4]);
        assert_eq!(max_coupling_density(&h0, &x, &ct).unwrap(), 1.0);
        // one mode, unit eigenvalue, h = 1, x = 1/2 -> exp(1/2 - 1/2) = 1
        let h = SpectralVector::eigen(vec![1.0]);
        let half = SpectralVector::eigen(vec![0.5]);
        assert!((max_coupling_density(&h, &half, &ct).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn density_inversion_identity() {
        // rho_{-h}(x - h) rho_h(x) = 1
        let ct = op(&[2.0, 0.7, 0.3]);
        let mut rng = RngStream::from_seed(31);
        for _ in 0..200 {
            let h = sample_gaussian(&ct, &mut rng);
            let x = sample_gaussian(&ct, &mut rng);
            let mut mh = h.clone();
            mh.scale(-1.0);
            let shifted = x.sub(&h);
            let prod = max_coupling_density(&mh, &shifted, &ct).unwrap()
                * max_coupling_density(&h, &x, &ct).unwrap();
            assert!((prod - 1.0).abs() < 1e-12);
        }
    }

    fn gaussian_coupling(
        lams: &[f64],
        t: f64,
        rule: GammaRule,
        n: usize,
    ) -> (CouplingKernel, Arc<dyn TargetModel>) {
        let model: Arc<dyn TargetModel> = Arc::new(GaussianModel::new(op(lams)));
        let base = PhmcKernel::exact(model.clone(), t, 0.05).unwrap();
        let alpha_norm = AlphaNorm::new(
            1.0,
            ModeSplit::new(n).unwrap(),
            model.covariance().clone(),
            model.covariance().clone(),
            SobolevIndex::default(),
        )
        .unwrap();
        let kernel = CouplingKernel::new(base, rule, alpha_norm, 1e-12).unwrap();
        (kernel, model)
    }

    #[test]
    fn rotation_drift_meets_exactly_with_cot_rule() {
        let (kernel, _) = gaussian_coupling(&[1.0, 0.5, 0.25], 0.8, GammaRule::CotT, 2);
        let mut rng = RngStream::from_seed(32);
        for _ in 0..200 {
            let x = low_supported(&[rng.standard_normal(), rng.standard_normal()], 3);
            let y = low_supported(&[rng.standard_normal(), rng.standard_normal()], 3);
            let pair = CoupledPair::new(x, y);
            let out = coupled_step(&pair, &kernel, &mut rng).unwrap();
            if out.max_coupling_event == Some(true) {
                let low_dist: f64 = out.pair.x.coefficients()[..2]
                    .iter()
                    .zip(&out.pair.y.coefficients()[..2])
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
                    .sqrt();
                assert!(low_dist <= 1e-12, "low distance {low_dist}");
            }
        }
    }

    #[test]
    fn free_flight_meets_exactly_with_inverse_rule() {
        let (kernel, _) = gaussian_coupling(&[1.0, 0.5], 0.6, GammaRule::InverseT, 2);
        let kernel = kernel.with_free_flight().unwrap();
        let mut rng = RngStream::from_seed(33);
        for _ in 0..200 {
            let x = SpectralVector::eigen(vec![rng.standard_normal(), rng.standard_normal()]);
            let y = SpectralVector::eigen(vec![rng.standard_normal(), rng.standard_normal()]);
            let pair = CoupledPair::new(x, y);
            let out = coupled_step(&pair, &kernel, &mut rng).unwrap();
            if out.max_coupling_event == Some(true) {
                let dist = out.pair.x.sub(&out.pair.y).ambient_norm();
                assert!(dist <= 1e-12, "distance {dist}");
            }
        }
    }

    #[test]
    fn coupling_is_faithful_on_the_diagonal() {
        let (kernel, model) = gaussian_coupling(&[1.0, 0.5, 0.25], 1.1, GammaRule::InverseT, 1);
        let mut rng = RngStream::from_seed(34);
        let x = sample_gaussian(model.covariance(), &mut rng);
        let mut pair = CoupledPair::new(x.clone(), x);
        for _ in 0..10 {
            let out = coupled_step(&pair, &kernel, &mut rng).unwrap();
            pair = out.pair;
            for (a, b) in pair.x.coefficients().iter().zip(pair.y.coefficients()) {
                assert_eq!(a.to_bits(), b.to_bits());
            }
        }
    }

    #[test]
    fn coalescence_is_absorbing() {
        let (kernel, model) = gaussian_coupling(&[1.0, 0.5], 0.9, GammaRule::CotT, 2);
        let mut rng = RngStream::from_seed(35);
        let x = sample_gaussian(model.covariance(), &mut rng);
        let y = sample_gaussian(model.covariance(), &mut rng);
        let mut pair = CoupledPair::new(x, y);
        let mut met = false;
        for _ in 0..200 {
            let out = coupled_step(&pair, &kernel, &mut rng).unwrap();
            pair = out.pair;
            if met {
                assert!(pair.coalesced);
                assert_eq!(pair.x, pair.y);
            }
            met = met || pair.coalesced;
        }
        assert!(met, "pair never met under the optimal rule");
    }

    #[test]
    fn failure_probability_zero_shift() {
        let ct = op(&[1.0, 0.5]);
        let z = low_supported(&[1.0], 2);
        let mut rng = RngStream::from_seed(36);
        let out = coupling_failure_probability(&z, 0.0, &ct, 1_000, &mut rng).unwrap();
        assert_eq!(out.empirical, 0.0);
        assert_eq!(out.tv_exact, 0.0);
        assert_eq!(out.bound, 0.0);
    }

    #[test]
    fn failure_probability_unit_whitened_shift() {
        // |gamma Ct^(-1/2) z| = 1: tv = 2 (Phi(1/2) - 1/2) ~ 0.3829,
        // bound = 1/sqrt(2 pi) ~ 0.3989
        let ct = op(&[4.0]);
        let z = SpectralVector::eigen(vec![2.0]); // whitened norm 1 at gamma 1
        let mut rng = RngStream::from_seed(37);
        let n = 40_000;
        let out = coupling_failure_probability(&z, 1.0, &ct, n, &mut rng).unwrap();
        assert!((out.tv_exact - 0.382_924_922_548_026).abs() < 1e-12);
        assert!((out.bound - 0.398_942_280_401_432_7).abs() < 1e-12);
        let se = (out.tv_exact * (1.0 - out.tv_exact) / n as f64).sqrt();
        assert!((out.empirical - out.tv_exact).abs() < 3.0 * se);
        assert!(out.tv_exact <= out.bound);
    }

    #[test]
    fn tv_never_exceeds_linear_bound() {
        let mut rng = RngStream::from_seed(38);
        for _ in 0..1_000 {
            let h = rng.uniform_in(0.0, 6.0);
            let tv = 2.0 * (standard_normal_cdf(h / 2.0) - 0.5);
            assert!(tv <= h / (2.0 * PI).sqrt() + 1e-14);
        }
    }

    #[test]
    fn trivial_coupling_time_for_equal_starts() {
        let model: Arc<dyn TargetModel> = Arc::new(GaussianModel::new(op(&[1.0, 0.5])));
        let x0 = SpectralVector::eigen(vec![0.4, -0.2]);
        let cfg = CouplingTimeConfig {
            t_grid: vec![0.5, 1.0],
            rules: vec![GammaRule::Zero, GammaRule::InverseT],
            replicas: 3,
            step_cap: 50,
            meet_threshold: 1e-10,
            dt: 0.1,
            metropolis: false,
            low_modes: 1,
            alpha: 1.0,
        };
        let rng = RngStream::from_seed(39);
        let (rows, summaries) =
            coupling_time_experiment(model, &x0, &x0.clone(), &cfg, &rng).unwrap();
        assert_eq!(rows.len(), 2 * 2 * 3);
        assert!(rows.iter().all(|r| r.meet_steps == 1 && !r.censored));
        assert_eq!(summaries.len(), 4);
        assert!(summaries.iter().all(|s| s.mean == 1.0 && s.censored == 0));
    }

    #[test]
    fn cot_rule_rejects_long_durations() {
        assert!(GammaRule::CotT.resolve(2.0).is_err());
        assert!(GammaRule::CotT.resolve(0.5).is_ok());
        let g = GammaRule::Theory { r_cap: 50.0 }.resolve(0.01).unwrap();
        assert!((g - 1.0 / 200.0).abs() < 1e-15);
    }

    #[test]
    fn low_mode_contraction_inequalities_hold_on_shift_event() {
        // the two-scale contraction estimates for the coupled flow with
        // v = u + gamma z_low, under gamma t <= 1 and L t^2 <= 1/4
        let lams = [1.0, 0.6, 0.3, 0.1];
        let model: Arc<dyn TargetModel> = Arc::new(GaussianModel::new(op(&lams)));
        let n = 2usize;
        let norm = AlphaNorm::new(
            1.0,
            ModeSplit::new(n).unwrap(),
            model.covariance().clone(),
            model.covariance().clone(),
            SobolevIndex::default(),
        )
        .unwrap();
        let (smin, smax) = norm.sigma_bounds();
        let l = 1.0; // linear drift
        let t = 0.45;
        let gamma = 0.5 / t; // gamma t <= 1
        assert!(l * t * t <= 0.25 && gamma * t <= 1.0);
        let mut rng = RngStream::from_seed(40);
        for _ in 0..500 {
            let x = sample_gaussian(model.covariance(), &mut rng);
            let y = sample_gaussian(model.covariance(), &mut rng);
            let u = sample_gaussian(model.covariance(), &mut rng);
            let mut v = u.clone();
            for j in 0..n {
                v.coefficients_mut()[j] += gamma * (x.coefficients()[j] - y.coefficients()[j]);
            }
            let fx = crate::flow::flow_rotation(&PhasePoint::new(x.clone(), u.clone()), t);
            let fy = crate::flow::flow_rotation(&PhasePoint::new(y.clone(), v.clone()), t);
            let z0 = x.sub(&y);
            let zt = fx.q.sub(&fy.q);
            let low0 = norm.low_whitened(&z0);
            let high0 = norm.high_fractional(&z0);
            let lowt = norm.low_whitened(&zt);
            let hight = norm.high_fractional(&zt);
            let cond = smax / smin;
            let low_bound = (1.0 - gamma * t + 0.625 * cond * l * t * t) * low0
                + 0.625 * smax * l * t * t * high0;
            assert!(lowt <= low_bound * (1.0 + 1e-10), "{lowt} vs {low_bound}");
            let high_bound = (1.0 - 0.25 * t * t) * high0 + 0.25 / smin * t * t * low0;
            assert!(
                hight <= high_bound * (1.0 + 1e-10),
                "{hight} vs {high_bound}"
            );
        }
    }
}
