//! Hamiltonian flow of the preconditioned dynamics.
//!
//! The velocity field is `dq/dt = v`, `dv/dt = b(q)` with drift
//! `b(x) = -x - C grad(q)` for the model targets. The flow splits into a
//! harmonic rotation, which is solved exactly in eigen coordinates, and a
//! velocity kick by the preconditioned force. A step of the symmetric
//! splitting integrator is kick(dt/2) - rotate(dt) - kick(dt/2); the
//! palindrome makes it reversible, and it is exact whenever the force
//! vanishes.

use crate::error::{Error, Result};
use crate::models::TargetModel;
use crate::spectral::SpectralVector;
use crate::theory::DriftConstants;
use std::sync::Arc;

/// Position/velocity pair in eigen coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct PhasePoint {
    pub q: SpectralVector,
    pub v: SpectralVector,
}

impl PhasePoint {
    pub fn new(q: SpectralVector, v: SpectralVector) -> Self {
        debug_assert_eq!(q.len(), v.len());
        debug_assert_eq!(q.representation(), v.representation());
        PhasePoint { q, v }
    }

    /// Negate the velocity.
    pub fn flip(mut self) -> Self {
        self.v.scale(-1.0);
        self
    }
}

/// Integration scheme for [`flow_ode`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scheme {
    /// Closed-form flow; only valid when the drift is linear.
    ExactLinear,
    /// Symmetric splitting steps of size `dt`.
    SymmetricSplitting,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntegratorConfig {
    pub dt: f64,
    pub scheme: Scheme,
}

impl IntegratorConfig {
    pub fn splitting(dt: f64) -> Result<Self> {
        if !(dt > 0.0) {
            return Err(Error::invalid_param("dt", "must be positive"));
        }
        Ok(IntegratorConfig {
            dt,
            scheme: Scheme::SymmetricSplitting,
        })
    }

    pub fn exact_linear() -> Self {
        IntegratorConfig {
            dt: f64::INFINITY,
            scheme: Scheme::ExactLinear,
        }
    }
}

/// The vector field of the position equation.
#[derive(Clone)]
pub enum DriftKind {
    /// `b = 0`: free flight (test configurations).
    Zero,
    /// `b = -x`: pure rotation.
    Linear,
    /// `b = -x - C grad(q)` for a target model.
    Model(Arc<dyn TargetModel>),
}

impl std::fmt::Debug for DriftKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            DriftKind::Zero => write!(f, "Zero"),
            DriftKind::Linear => write!(f, "Linear"),
            DriftKind::Model(m) => write!(f, "Model({})", m.label()),
        }
    }
}

/// A drift with its declared regularity constants. The constants are carried
/// metadata validated by property tests; evaluation never consults them.
#[derive(Debug, Clone)]
pub struct Drift {
    pub kind: DriftKind,
    pub constants: Option<DriftConstants>,
}

impl Drift {
    pub fn zero() -> Self {
        Drift {
            kind: DriftKind::Zero,
            constants: None,
        }
    }

    pub fn linear() -> Self {
        Drift {
            kind: DriftKind::Linear,
            constants: None,
        }
    }

    pub fn model(model: Arc<dyn TargetModel>) -> Self {
        Drift {
            kind: DriftKind::Model(model),
            constants: None,
        }
    }

    pub fn with_constants(mut self, constants: DriftConstants) -> Self {
        self.constants = Some(constants);
        self
    }

    /// Evaluate b(x).
    pub fn eval(&self, x: &SpectralVector) -> SpectralVector {
        match &self.kind {
            DriftKind::Zero => {
                let mut out = x.clone();
                out.scale(0.0);
                out
            }
            DriftKind::Linear => {
                let mut out = x.clone();
                out.scale(-1.0);
                out
            }
            DriftKind::Model(model) => {
                let mut ws = Workspace::new(model.dim());
                let force = ws.preconditioned_force(model.as_ref(), x.coefficients());
                let coeffs: Vec<f64> = x
                    .coefficients()
                    .iter()
                    .zip(force)
                    .map(|(&xi, fi)| -xi - fi)
                    .collect();
                SpectralVector::eigen_with_weight(coeffs, x.weight())
            }
        }
    }

    /// Norm of b at the origin; zero for drifts satisfying the standing
    /// assumptions.
    pub fn origin_drift_norm(&self, dim: usize) -> f64 {
        let zero = SpectralVector::eigen(vec![0.0; dim]);
        self.eval(&zero).ambient_norm()
    }
}

/// Scratch buffers for the force evaluation: grid values, raw gradient and
/// its eigen coefficients.
pub(crate) struct Workspace {
    grid: Vec<f64>,
    grad: Vec<f64>,
    eigen: Vec<f64>,
}

impl Workspace {
    pub(crate) fn new(dim: usize) -> Self {
        Workspace {
            grid: vec![0.0; dim],
            grad: vec![0.0; dim],
            eigen: vec![0.0; dim],
        }
    }

    /// `C grad G_m(q)` in eigen coordinates.
    pub(crate) fn preconditioned_force(&mut self, model: &dyn TargetModel, q: &[f64]) -> &[f64] {
        model.to_grid(q, &mut self.grid);
        model.grad_g(&self.grid, &mut self.grad);
        model.to_eigen(&self.grad, &mut self.eigen);
        for (f, &lam) in self.eigen.iter_mut().zip(model.covariance().eigenvalues()) {
            *f *= lam;
        }
        &self.eigen
    }
}

/// Exact flow of the harmonic part: a rotation in every mode.
pub fn flow_rotation(z: &PhasePoint, t: f64) -> PhasePoint {
    let (c, s) = (t.cos(), t.sin());
    let mut q = z.q.clone();
    let mut v = z.v.clone();
    for (qc, vc) in q
        .coefficients_mut()
        .iter_mut()
        .zip(v.coefficients_mut().iter_mut())
    {
        let (q0, v0) = (*qc, *vc);
        *qc = c * q0 + s * v0;
        *vc = -s * q0 + c * v0;
    }
    PhasePoint { q, v }
}

/// Velocity kick by the preconditioned force: `v -= t * C grad G_m(q)`, the
/// position unchanged. The gradient is evaluated on the grid and the
/// covariance applied in eigen coordinates.
pub fn flow_kick(z: &PhasePoint, t: f64, model: &dyn TargetModel) -> PhasePoint {
    let mut ws = Workspace::new(model.dim());
    let mut out = z.clone();
    kick_in_place(&mut out, t, model, &mut ws);
    out
}

fn kick_in_place(z: &mut PhasePoint, t: f64, model: &dyn TargetModel, ws: &mut Workspace) {
    if !model.has_potential() || t == 0.0 {
        return;
    }
    let force = ws.preconditioned_force(model, z.q.coefficients());
    for (vc, &f) in z.v.coefficients_mut().iter_mut().zip(force) {
        *vc -= t * f;
    }
}

fn rotate_in_place(z: &mut PhasePoint, t: f64) {
    let (c, s) = (t.cos(), t.sin());
    for (qc, vc) in
        z.q.coefficients_mut()
            .iter_mut()
            .zip(z.v.coefficients_mut().iter_mut())
    {
        let (q0, v0) = (*qc, *vc);
        *qc = c * q0 + s * v0;
        *vc = -s * q0 + c * v0;
    }
}

/// One symmetric splitting step: kick(dt/2), rotate(dt), kick(dt/2).
pub fn splitting_step(z: &PhasePoint, dt: f64, model: &dyn TargetModel) -> PhasePoint {
    let mut out = z.clone();
    let mut ws = Workspace::new(model.dim());
    kick_in_place(&mut out, 0.5 * dt, model, &mut ws);
    rotate_in_place(&mut out, dt);
    kick_in_place(&mut out, 0.5 * dt, model, &mut ws);
    out
}

const DIVERGENCE_GUARD: f64 = 1e8;

fn check_divergence(z: &PhasePoint, step: u64) -> Result<()> {
    let norm = z.q.ambient_norm();
    if !norm.is_finite() || norm > DIVERGENCE_GUARD {
        return Err(Error::Divergence { step, norm });
    }
    Ok(())
}

/// `steps` splitting steps of size `dt`. Interior half-kicks are merged,
/// which leaves the map bit-identical to the literal composition because
/// consecutive kicks at a fixed position add.
pub fn splitting_trajectory(
    z: &PhasePoint,
    steps: u64,
    dt: f64,
    model: &dyn TargetModel,
) -> Result<PhasePoint> {
    if steps == 0 {
        return Ok(z.clone());
    }
    let mut ws = Workspace::new(model.dim());
    let mut state = z.clone();
    kick_in_place(&mut state, 0.5 * dt, model, &mut ws);
    for step in 0..steps {
        rotate_in_place(&mut state, dt);
        let half = if step + 1 == steps { 0.5 * dt } else { dt };
        kick_in_place(&mut state, half, model, &mut ws);
        check_divergence(&state, step + 1)?;
    }
    Ok(state)
}

/// Approximate the flow over duration `t`.
///
/// Free flight and the linear drift use their closed forms; model drifts are
/// integrated with ceil(t / dt) splitting steps, the last one shortened so
/// the duration is hit exactly.
pub fn flow_ode(
    z: &PhasePoint,
    t: f64,
    cfg: &IntegratorConfig,
    drift: &Drift,
) -> Result<PhasePoint> {
    if t < 0.0 {
        return Err(Error::invalid_param("t", "duration must be nonnegative"));
    }
    match &drift.kind {
        DriftKind::Zero => {
            let mut out = z.clone();
            out.q.axpy(t, &z.v);
            Ok(out)
        }
        DriftKind::Linear => Ok(flow_rotation(z, t)),
        DriftKind::Model(model) => {
            if !model.has_potential() {
                return Ok(flow_rotation(z, t));
            }
            if cfg.scheme != Scheme::SymmetricSplitting {
                return Err(Error::invalid_param(
                    "scheme",
                    "model drifts require the splitting integrator",
                ));
            }
            if t == 0.0 {
                return Ok(z.clone());
            }
            let dt = cfg.dt;
            let n = (t / dt).ceil().max(1.0) as u64;
            let last = t - (n - 1) as f64 * dt;
            let mut ws = Workspace::new(model.dim());
            let mut state = z.clone();
            for step in 0..n {
                let h = if step + 1 == n { last } else { dt };
                kick_in_place(&mut state, 0.5 * h, model.as_ref(), &mut ws);
                rotate_in_place(&mut state, h);
                kick_in_place(&mut state, 0.5 * h, model.as_ref(), &mut ws);
                check_divergence(&state, step + 1)?;
            }
            Ok(state)
        }
    }
}

/// Step size at which halving changes the endpoint by less than `tol` in
/// norm: the working definition of an exactly integrated flow.
pub fn exact_step_size(
    z: &PhasePoint,
    t: f64,
    model: &Arc<dyn TargetModel>,
    tol: f64,
) -> Result<f64> {
    let drift = Drift::model(model.clone());
    let mut dt = t / 8.0;
    let mut prev = flow_ode(z, t, &IntegratorConfig::splitting(dt)?, &drift)?;
    for _ in 0..40 {
        let half = dt / 2.0;
        let fine = flow_ode(z, t, &IntegratorConfig::splitting(half)?, &drift)?;
        let diff = fine.q.sub(&prev.q).ambient_norm();
        if diff < tol {
            return Ok(half);
        }
        prev = fine;
        dt = half;
    }
    Err(Error::StepSizeSearch(format!(
        "halving did not settle below {tol:.1e}"
    )))
}
