//! Markov kernels: the exact transition step and its Metropolis-adjusted,
//! duration-randomized numerical variant.
//!
//! A transition draws a fresh velocity from the kernel's Gaussian, runs the
//! Hamiltonian flow for the configured duration and keeps the final
//! position. The numerical variant integrates with the splitting scheme for
//! a geometrically distributed number of steps (mean `T / dt`, mitigating
//! periodicities of the underlying dynamics) and corrects the time
//! discretization bias with an accept/reject step on the total energy.
//!
//! Every step consumes an identical randomness schedule (velocity draw,
//! step-count draw, acceptance draw) whether or not the proposal is
//! accepted, so coupled chains stay synchronized by construction.

use crate::error::{Error, Result};
use crate::flow::{flow_ode, Drift, IntegratorConfig, PhasePoint};
use crate::models::TargetModel;
use crate::rng::RngStream;
use crate::spectral::{sample_gaussian, SpectralOperator, SpectralVector};
use crate::stats::VectorMoments;
use std::sync::Arc;

/// How the flow duration of one transition is chosen.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DurationRule {
    /// Fixed duration; the contraction theory covers this case.
    Deterministic,
    /// Geometric number of integrator steps supported on {1, 2, ...} with
    /// the given mean.
    GeometricSteps { mean_steps: f64 },
}

/// Total energy of a phase point: kinetic part, potential and Gaussian
/// part, all in the weighted inner product.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Energy(f64);

impl Energy {
    pub fn new(value: f64) -> Result<Self> {
        if !value.is_finite() {
            return Err(Error::invalid_param("energy", "not finite"));
        }
        Ok(Energy(value))
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

/// Full configuration of one transition step.
#[derive(Clone)]
pub struct PhmcKernel {
    /// Duration of the Hamiltonian flow.
    pub duration: f64,
    pub duration_rule: DurationRule,
    pub integrator: IntegratorConfig,
    /// Covariance of the velocity refreshment, in the same eigen
    /// coordinates as the model.
    pub velocity_cov: SpectralOperator,
    pub model: Arc<dyn TargetModel>,
    pub metropolis: bool,
}

impl std::fmt::Debug for PhmcKernel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("PhmcKernel")
            .field("duration", &self.duration)
            .field("duration_rule", &self.duration_rule)
            .field("integrator", &self.integrator)
            .field("metropolis", &self.metropolis)
            .field("model", &self.model.label())
            .finish()
    }
}

impl PhmcKernel {
    /// Exact kernel: deterministic duration, no adjustment. The step size
    /// only matters for targets with a potential.
    pub fn exact(model: Arc<dyn TargetModel>, duration: f64, dt: f64) -> Result<Self> {
        if !(duration > 0.0) {
            return Err(Error::invalid_param("duration", "must be positive"));
        }
        Ok(PhmcKernel {
            duration,
            duration_rule: DurationRule::Deterministic,
            integrator: IntegratorConfig::splitting(dt)?,
            velocity_cov: model.covariance().clone(),
            model,
            metropolis: false,
        })
    }

    /// Metropolis-adjusted kernel with geometric step randomization of mean
    /// `duration / dt`.
    pub fn adjusted(model: Arc<dyn TargetModel>, duration: f64, dt: f64) -> Result<Self> {
        if !(duration > 0.0) {
            return Err(Error::invalid_param("duration", "must be positive"));
        }
        if !(dt > 0.0) || dt > duration {
            return Err(Error::invalid_param("dt", "need 0 < dt <= duration"));
        }
        Ok(PhmcKernel {
            duration,
            duration_rule: DurationRule::GeometricSteps {
                mean_steps: duration / dt,
            },
            integrator: IntegratorConfig::splitting(dt)?,
            velocity_cov: model.covariance().clone(),
            model,
            metropolis: true,
        })
    }

    /// Replace the velocity covariance (it must share the model's
    /// eigenbasis by construction).
    pub fn with_velocity_cov(mut self, c_tilde: SpectralOperator) -> Result<Self> {
        if c_tilde.dim() != self.model.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.model.dim(),
                got: c_tilde.dim(),
            });
        }
        self.velocity_cov = c_tilde;
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.model.dim()
    }

    /// `E(q, v) = <v, C^-1 v>/2 + U_m(q) + <q, C^-1 q>/2` with the model's
    /// covariance.
    pub fn energy(&self, q: &SpectralVector, v: &SpectralVector) -> Result<Energy> {
        let lams = self.model.covariance().eigenvalues();
        if q.len() != lams.len() || v.len() != lams.len() {
            return Err(Error::DimensionMismatch {
                expected: lams.len(),
                got: q.len(),
            });
        }
        let mut quad = 0.0;
        for ((&qc, &vc), &lam) in q.coefficients().iter().zip(v.coefficients()).zip(lams) {
            quad += (qc * qc + vc * vc) / lam;
        }
        let potential = if self.model.has_potential() {
            let mut grid = vec![0.0; self.model.dim()];
            self.model.to_grid(q.coefficients(), &mut grid);
            self.model.potential(&grid)
        } else {
            0.0
        };
        Energy::new(0.5 * quad + potential)
    }

    fn draw_velocity(&self, rng: &mut RngStream) -> SpectralVector {
        let mut xi = sample_gaussian(&self.velocity_cov, rng);
        // states carry the ambient weight of the model
        let w = self.model.weight();
        xi = SpectralVector::eigen_with_weight(xi.into_coefficients(), w);
        xi
    }
}

/// One exact transition: flow the state with a fresh Gaussian velocity for
/// the fixed duration and keep the position.
pub fn phmc_step(
    x: &SpectralVector,
    kernel: &PhmcKernel,
    rng: &mut RngStream,
) -> Result<SpectralVector> {
    if kernel.metropolis {
        return Err(Error::invalid_param(
            "kernel",
            "exact step requires metropolis = false",
        ));
    }
    if kernel.duration_rule != DurationRule::Deterministic {
        return Err(Error::invalid_param(
            "kernel",
            "exact step requires a deterministic duration",
        ));
    }
    let xi = kernel.draw_velocity(rng);
    let z = PhasePoint::new(x.clone(), xi);
    let drift = Drift::model(kernel.model.clone());
    let out = flow_ode(&z, kernel.duration, &kernel.integrator, &drift)?;
    Ok(out.q)
}

/// Outcome of one Metropolis-adjusted randomized transition.
#[derive(Debug, Clone)]
pub struct StepOutcome {
    pub state: SpectralVector,
    pub accepted: bool,
    /// number of integrator steps drawn
    pub steps: u64,
    pub energy_start: f64,
    pub energy_proposal: f64,
}

/// One numerical randomized transition: draw a velocity, draw a geometric
/// number of splitting steps, integrate, and accept with probability
/// `min(1, exp(-(E_proposal - E_start)))`. On rejection the state is
/// unchanged; the randomness consumed is identical either way.
pub fn randomized_phmc_step(
    x: &SpectralVector,
    kernel: &PhmcKernel,
    rng: &mut RngStream,
) -> Result<StepOutcome> {
    if !kernel.metropolis {
        return Err(Error::invalid_param(
            "kernel",
            "randomized step requires metropolis = true",
        ));
    }
    let mean_steps = match kernel.duration_rule {
        DurationRule::GeometricSteps { mean_steps } => mean_steps,
        DurationRule::Deterministic => {
            return Err(Error::invalid_param(
                "kernel",
                "randomized step requires geometric step counts",
            ))
        }
    };
    let xi = kernel.draw_velocity(rng);
    let k = rng.geometric(1.0 / mean_steps);
    let u = rng.uniform();

    let z = PhasePoint::new(x.clone(), xi);
    let proposal =
        crate::flow::splitting_trajectory(&z, k, kernel.integrator.dt, kernel.model.as_ref())?;
    let e_start = kernel.energy(&z.q, &z.v)?.value();
    let e_prop = kernel.energy(&proposal.q, &proposal.v)?.value();
    let accepted = u < (-(e_prop - e_start)).exp();
    Ok(StepOutcome {
        state: if accepted { proposal.q } else { x.clone() },
        accepted,
        steps: k,
        energy_start: e_start,
        energy_proposal: e_prop,
    })
}

/// A row of chain output handed to a sink.
#[derive(Debug, Clone)]
pub struct StepRecord<'a> {
    pub step: u64,
    pub state: &'a [f64],
    pub accepted: bool,
    pub steps: u64,
    pub energy: f64,
}

/// Consumer of chain output.
pub trait ChainSink {
    fn record(&mut self, record: &StepRecord<'_>) -> Result<()>;
}

/// Discards everything.
pub struct NullSink;

impl ChainSink for NullSink {
    fn record(&mut self, _record: &StepRecord<'_>) -> Result<()> {
        Ok(())
    }
}

/// Keeps every row in memory.
#[derive(Debug, Default)]
pub struct MemorySink {
    pub rows: Vec<(u64, Vec<f64>, bool, u64, f64)>,
}

impl ChainSink for MemorySink {
    fn record(&mut self, record: &StepRecord<'_>) -> Result<()> {
        self.rows.push((
            record.step,
            record.state.to_vec(),
            record.accepted,
            record.steps,
            record.energy,
        ));
        Ok(())
    }
}

/// Summary statistics of a chain run.
#[derive(Debug, Clone)]
pub struct ChainStats {
    pub n_steps: u64,
    pub accepted: u64,
    pub mean_steps: f64,
    pub mode_means: Vec<f64>,
    pub mode_variances: Vec<f64>,
}

impl ChainStats {
    pub fn acceptance_rate(&self) -> f64 {
        if self.n_steps == 0 {
            0.0
        } else {
            self.accepted as f64 / self.n_steps as f64
        }
    }
}

/// Iterate the kernel, streaming every state to the sink. Deterministic
/// given the seed of `rng`.
pub fn run_chain(
    x0: &SpectralVector,
    kernel: &PhmcKernel,
    n_steps: u64,
    rng: &mut RngStream,
    sink: &mut dyn ChainSink,
) -> Result<ChainStats> {
    if n_steps < 1 {
        return Err(Error::invalid_param("n_steps", "must be at least 1"));
    }
    let mut x = x0.clone();
    let mut accepted_count = 0u64;
    let mut steps_total = 0u64;
    let mut moments = VectorMoments::new(x.len());
    for step in 1..=n_steps {
        let (accepted, k, energy) = if kernel.metropolis {
            let out = randomized_phmc_step(&x, kernel, rng).map_err(|e| annotate(e, step))?;
            x = out.state;
            (
                out.accepted,
                out.steps,
                if out.accepted {
                    out.energy_proposal
                } else {
                    out.energy_start
                },
            )
        } else {
            let xi_energy;
            {
                // exact kernel: energy reported at the fresh draw
                let mut probe_rng = rng.clone();
                let xi = kernel.draw_velocity(&mut probe_rng);
                xi_energy = kernel.energy(&x, &xi)?.value();
            }
            x = phmc_step(&x, kernel, rng).map_err(|e| annotate(e, step))?;
            (true, 0, xi_energy)
        };
        if accepted {
            accepted_count += 1;
        }
        steps_total += k;
        moments.push(x.coefficients());
        sink.record(&StepRecord {
            step,
            state: x.coefficients(),
            accepted,
            steps: k,
            energy,
        })?;
    }
    Ok(ChainStats {
        n_steps,
        accepted: accepted_count,
        mean_steps: steps_total as f64 / n_steps as f64,
        mode_means: moments.means(),
        mode_variances: moments.variances(),
    })
}

fn annotate(e: Error, step: u64) -> Error {
    match e {
        Error::Divergence { norm, .. } => Error::Divergence { step, norm },
        other => other,
    }
}

/// Search the step size at which the measured acceptance rate of the
/// adjusted kernel lands in `[target, target + 0.005]` over `trials` steps.
/// Acceptance decreases with the step size, so a bisection over
/// `[1e-6, duration]` brackets the band; a flat target (potential-free)
/// returns the upper bracket.
pub fn tune_step_size(
    model: &Arc<dyn TargetModel>,
    duration: f64,
    target: f64,
    trials: u64,
    rng: &RngStream,
) -> Result<f64> {
    if !(0.0 < target && target < 1.0) {
        return Err(Error::invalid_param("target", "must lie in (0, 1)"));
    }
    let mut eval_index = 0u64;
    let mut measure = |dt: f64| -> Result<f64> {
        let kernel = PhmcKernel::adjusted(model.clone(), duration, dt)?;
        let mut stream = rng.substream(eval_index);
        eval_index += 1;
        let x0 = sample_gaussian(model.covariance(), &mut stream);
        let stats = run_chain(&x0, &kernel, trials, &mut stream, &mut NullSink)?;
        Ok(stats.acceptance_rate())
    };
    let mut hi = duration;
    if measure(hi)? >= target {
        return Ok(hi);
    }
    // Probe downward by factors of 8 to find a passing lower bracket. The
    // cost of one measurement scales with duration / dt, so the probe stays
    // as coarse as possible; jumping straight to 1e-6 would dwarf the whole
    // search.
    let floor = 1e-6_f64;
    let mut lo = hi;
    loop {
        lo = (lo / 8.0).max(floor);
        let acc = measure(lo)?;
        if acc >= target {
            if acc <= target + 0.005 {
                return Ok(lo);
            }
            break;
        }
        hi = lo;
        if lo <= floor {
            return Err(Error::StepSizeSearch(format!(
                "acceptance below {target} even at dt = {floor:.1e}"
            )));
        }
    }
    for _ in 0..60 {
        let mid = (lo * hi).sqrt();
        let acc = measure(mid)?;
        if acc < target {
            hi = mid;
        } else if acc > target + 0.005 {
            lo = mid;
        } else {
            return Ok(mid);
        }
        if hi / lo < 1.0 + 1e-9 {
            break;
        }
    }
    Ok(lo)
}
