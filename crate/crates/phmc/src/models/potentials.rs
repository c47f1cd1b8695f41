//! Point potentials: the per-point energy functions entering the discretized
//! path and loop targets.
//!
//! Every potential carries declared regularity constants: a gradient bound
//! and a gradient Lipschitz constant. Where the family admits exact values
//! (Laplace mixtures, quadratics) they are exact; otherwise they are
//! conservative bounds obtained from analytic estimates or a deterministic
//! scan over the potential's probe region. Potentials built through
//! [`PotentialSpec`] are recentered so that the gradient vanishes at the
//! origin; the applied shift is recorded in `offset`.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::fmt;
use std::sync::Arc;

pub type ValueFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;
pub type GradFn = Arc<dyn Fn(&[f64], &mut [f64]) + Send + Sync>;

/// A smooth function on R^d with value, gradient and declared regularity
/// constants.
#[derive(Clone)]
pub struct PointPotential {
    name: String,
    dim: usize,
    grad_bound: f64,
    grad_lipschitz: f64,
    offset: Vec<f64>,
    value_shift: f64,
    probe_box: (Vec<f64>, Vec<f64>),
    value_fn: ValueFn,
    grad_fn: GradFn,
}

impl fmt::Debug for PointPotential {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PointPotential")
            .field("name", &self.name)
            .field("dim", &self.dim)
            .field("grad_bound", &self.grad_bound)
            .field("grad_lipschitz", &self.grad_lipschitz)
            .field("offset", &self.offset)
            .finish()
    }
}

impl PointPotential {
    fn from_parts(
        name: impl Into<String>,
        dim: usize,
        value_fn: ValueFn,
        grad_fn: GradFn,
        probe_box: (Vec<f64>, Vec<f64>),
    ) -> Self {
        PointPotential {
            name: name.into(),
            dim,
            grad_bound: f64::NAN,
            grad_lipschitz: f64::NAN,
            offset: vec![0.0; dim],
            value_shift: 0.0,
            probe_box,
            value_fn,
            grad_fn,
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Declared bound on |grad G|.
    pub fn grad_bound(&self) -> f64 {
        self.grad_bound
    }

    /// Declared Lipschitz constant of grad G.
    pub fn grad_lipschitz(&self) -> f64 {
        self.grad_lipschitz
    }

    /// Shift applied by recentering: evaluation happens at `u + offset`.
    pub fn offset(&self) -> &[f64] {
        &self.offset
    }

    pub fn with_declared(mut self, grad_bound: f64, grad_lipschitz: f64) -> Self {
        self.grad_bound = grad_bound;
        self.grad_lipschitz = grad_lipschitz;
        self
    }

    /// Potential value at `u` (in recentered coordinates, normalized so the
    /// value at the origin of a recentered potential is zero).
    pub fn value(&self, u: &[f64]) -> f64 {
        debug_assert_eq!(u.len(), self.dim);
        let shifted = self.shifted(u);
        (self.value_fn)(&shifted) - self.value_shift
    }

    pub fn gradient(&self, u: &[f64], out: &mut [f64]) {
        debug_assert_eq!(u.len(), self.dim);
        debug_assert_eq!(out.len(), self.dim);
        let shifted = self.shifted(u);
        (self.grad_fn)(&shifted, out);
    }

    fn shifted(&self, u: &[f64]) -> Vec<f64> {
        u.iter().zip(&self.offset).map(|(a, b)| a + b).collect()
    }

    /// Shift coordinates so that the gradient vanishes at the origin. The
    /// minimizer search starts from the given points plus the current
    /// origin; fails if no critical point with |grad| <= 1e-11 is found.
    pub fn recentered(mut self, starts: &[Vec<f64>]) -> Result<Self> {
        let mut best: Option<(f64, Vec<f64>)> = None;
        let mut candidates: Vec<Vec<f64>> = vec![vec![0.0; self.dim]];
        candidates.extend(starts.iter().cloned());
        for start in &candidates {
            if let Some(u) = self.minimize_from(start) {
                let v = (self.value_fn)(&u);
                if best.as_ref().map_or(true, |(bv, _)| v < *bv) {
                    best = Some((v, u));
                }
            }
        }
        let (_, u_star) = best.ok_or_else(|| {
            Error::invalid_param("potential", "recentering failed to locate a critical point")
        })?;
        let mut g = vec![0.0; self.dim];
        (self.grad_fn)(&u_star, &mut g);
        let gnorm = norm(&g);
        if gnorm > 1e-11 {
            return Err(Error::invalid_param(
                "potential",
                format!("recentering stalled at |grad| = {gnorm:.3e}"),
            ));
        }
        self.value_shift = (self.value_fn)(&u_star);
        for (o, u) in self.offset.iter_mut().zip(&u_star) {
            *o += u;
        }
        Ok(self)
    }

    /// Gradient descent with backtracking, then a finite-difference Newton
    /// polish.
    fn minimize_from(&self, start: &[f64]) -> Option<Vec<f64>> {
        let d = self.dim;
        let mut u = start.to_vec();
        let mut g = vec![0.0; d];
        let mut step = 0.5;
        for _ in 0..600 {
            (self.grad_fn)(&u, &mut g);
            let gn = norm(&g);
            if gn < 1e-9 {
                break;
            }
            let v0 = (self.value_fn)(&u);
            let mut tried = step;
            let mut moved = false;
            for _ in 0..40 {
                let cand: Vec<f64> = u.iter().zip(&g).map(|(x, gi)| x - tried * gi).collect();
                if (self.value_fn)(&cand) < v0 {
                    u = cand;
                    step = (tried * 1.5).min(1.0);
                    moved = true;
                    break;
                }
                tried *= 0.5;
            }
            if !moved {
                break;
            }
        }
        // Newton polish on the gradient system
        for _ in 0..60 {
            (self.grad_fn)(&u, &mut g);
            if norm(&g) < 1e-13 {
                break;
            }
            let h = self.fd_hessian(&u);
            let delta = solve_dense(&h, &g, d)?;
            for (x, dx) in u.iter_mut().zip(&delta) {
                *x -= dx;
            }
        }
        (self.grad_fn)(&u, &mut g);
        (norm(&g) <= 1e-11).then_some(u)
    }

    fn fd_hessian(&self, u: &[f64]) -> Vec<f64> {
        let d = self.dim;
        let eps = 1e-6;
        let mut h = vec![0.0; d * d];
        let mut gp = vec![0.0; d];
        let mut gm = vec![0.0; d];
        let mut up = u.to_vec();
        for j in 0..d {
            up[j] = u[j] + eps;
            (self.grad_fn)(&up, &mut gp);
            up[j] = u[j] - eps;
            (self.grad_fn)(&up, &mut gm);
            up[j] = u[j];
            for i in 0..d {
                h[i * d + j] = (gp[i] - gm[i]) / (2.0 * eps);
            }
        }
        h
    }

    /// Max |grad G(u) - fd(G)(u)| / max(1, |grad G(u)|) over probe points.
    pub fn max_fd_gradient_error(&self, points: usize) -> f64 {
        let mut worst: f64 = 0.0;
        let mut g = vec![0.0; self.dim];
        for u in self.probe_points(points) {
            self.gradient(&u, &mut g);
            let mut fd = vec![0.0; self.dim];
            let mut up = u.clone();
            for j in 0..self.dim {
                let h = 1e-6 * (1.0 + u[j].abs());
                up[j] = u[j] + h;
                let vp = self.value(&up);
                up[j] = u[j] - h;
                let vm = self.value(&up);
                up[j] = u[j];
                fd[j] = (vp - vm) / (2.0 * h);
            }
            let err = g
                .iter()
                .zip(&fd)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0f64, f64::max);
            worst = worst.max(err / norm(&g).max(1.0));
        }
        worst
    }

    /// Max |grad G| observed over probe points; must stay within the
    /// declared bound.
    pub fn max_gradient_norm(&self, points: usize) -> f64 {
        let mut g = vec![0.0; self.dim];
        let mut worst: f64 = 0.0;
        for u in self.probe_points(points) {
            self.gradient(&u, &mut g);
            worst = worst.max(norm(&g));
        }
        worst
    }

    /// Deterministic probe points spread over the declared probe box
    /// (shifted into recentered coordinates).
    pub fn probe_points(&self, count: usize) -> Vec<Vec<f64>> {
        let (lo, hi) = &self.probe_box;
        let mut pts = Vec::with_capacity(count);
        // Weyl sequence: deterministic, roughly uniform
        let alphas = [
            0.754_877_666_246_69,
            0.569_840_290_998_05,
            0.352_752_087_755_56,
            0.275_619_836_278_92,
        ];
        for k in 0..count {
            let mut u = Vec::with_capacity(self.dim);
            for j in 0..self.dim {
                let a = alphas[j % alphas.len()];
                let t = ((k + 1) as f64 * a + 0.37 * j as f64).fract();
                let shift = self.offset.get(j).copied().unwrap_or(0.0);
                u.push(lo[j] + t * (hi[j] - lo[j]) - shift);
            }
            pts.push(u);
        }
        pts
    }

    fn scan_declared(mut self, margin: f64) -> Self {
        let pts = self.probe_points(4096);
        let mut g = vec![0.0; self.dim];
        let mut max_g: f64 = 0.0;
        let mut max_h: f64 = 0.0;
        for u in &pts {
            self.gradient(u, &mut g);
            max_g = max_g.max(norm(&g));
            let shifted = self.shifted(u);
            let h = self.fd_hessian(&shifted);
            max_h = max_h.max(sym_norm(&h, self.dim));
        }
        self.grad_bound = max_g * margin;
        self.grad_lipschitz = max_h * margin;
        self
    }

    // ----- library families -----

    /// The zero potential.
    pub fn zero(dim: usize) -> Self {
        let value: ValueFn = Arc::new(|_| 0.0);
        let grad: GradFn = Arc::new(|_, out| out.fill(0.0));
        Self::from_parts("zero", dim, value, grad, (vec![-1.0; dim], vec![1.0; dim]))
            .with_declared(0.0, 0.0)
    }

    /// `G(u) = curvature * |u|^2 / 2`. The gradient bound is declared over
    /// the probe radius since a quadratic has no global bound.
    pub fn quadratic(dim: usize, curvature: f64) -> Self {
        let c = curvature;
        let value: ValueFn = Arc::new(move |u| 0.5 * c * u.iter().map(|x| x * x).sum::<f64>());
        let grad: GradFn = Arc::new(move |u, out| {
            for (o, &x) in out.iter_mut().zip(u) {
                *o = c * x;
            }
        });
        let radius = 8.0;
        Self::from_parts(
            "quadratic",
            dim,
            value,
            grad,
            (vec![-radius; dim], vec![radius; dim]),
        )
        .with_declared(curvature * radius * (dim as f64).sqrt(), curvature)
    }

    /// Negative log density of an isotropic (unit variance) normal mixture.
    pub fn normal_mixture(dim: usize, means: Vec<Vec<f64>>, weights: Option<Vec<f64>>) -> Self {
        let k = means.len();
        assert!(k > 0, "mixture needs at least one component");
        let weights = weights.unwrap_or_else(|| vec![1.0 / k as f64; k]);
        assert_eq!(weights.len(), k);
        let log_w: Vec<f64> = weights.iter().map(|w| w.ln()).collect();
        let diam = max_pairwise_distance(&means);
        let probe = mixture_probe_box(&means, 6.0);
        let means_v = means.clone();
        let log_w_v = log_w.clone();
        let value: ValueFn = Arc::new(move |u| {
            -log_sum_exp(
                means_v
                    .iter()
                    .zip(&log_w_v)
                    .map(|(mu, lw)| lw - 0.5 * sq_dist(u, mu)),
            )
        });
        let means_g = means;
        let grad: GradFn = Arc::new(move |u, out| {
            let exponents: Vec<f64> = means_g
                .iter()
                .zip(&log_w)
                .map(|(mu, lw)| lw - 0.5 * sq_dist(u, mu))
                .collect();
            let mx = exponents.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            // components more than ~40 log-units below the leader weigh
            // less than 1e-17 and are dropped
            let ws: Vec<f64> = exponents
                .iter()
                .map(|e| if e - mx < -40.0 { 0.0 } else { (e - mx).exp() })
                .collect();
            let total: f64 = ws.iter().sum();
            out.fill(0.0);
            for (mu, w) in means_g.iter().zip(&ws) {
                if *w == 0.0 {
                    continue;
                }
                let p = w / total;
                for (o, (&ui, &mi)) in out.iter_mut().zip(u.iter().zip(mu)) {
                    *o += p * (ui - mi);
                }
            }
        });
        Self::from_parts("normal-mixture", dim, value, grad, probe)
            // gradient is u minus the posterior mean, bounded on the probe
            // box; Hessian is I minus a posterior covariance
            .with_declared(f64::NAN, 1.0 + 0.25 * diam * diam)
            .scan_grad_bound_only()
    }

    /// Negative log density of a mixture of regularized Laplace
    /// distributions: |u| is smoothed to sqrt(|u|^2 + delta^2) so the
    /// gradient is globally Lipschitz.
    pub fn laplace_mixture(
        dim: usize,
        means: Vec<Vec<f64>>,
        weights: Option<Vec<f64>>,
        delta: f64,
    ) -> Self {
        let k = means.len();
        assert!(k > 0, "mixture needs at least one component");
        let weights = weights.unwrap_or_else(|| vec![1.0 / k as f64; k]);
        let log_w: Vec<f64> = weights.iter().map(|w| w.ln()).collect();
        let probe = mixture_probe_box(&means, 6.0);
        let means_v = means.clone();
        let log_w_v = log_w.clone();
        let soft = move |u: &[f64], mu: &[f64]| (sq_dist(u, mu) + delta * delta).sqrt();
        let soft_v = soft;
        let value: ValueFn = Arc::new(move |u| {
            -log_sum_exp(
                means_v
                    .iter()
                    .zip(&log_w_v)
                    .map(|(mu, lw)| lw - soft_v(u, mu)),
            )
        });
        let means_g = means;
        let grad: GradFn = Arc::new(move |u, out| {
            let exponents: Vec<f64> = means_g
                .iter()
                .zip(&log_w)
                .map(|(mu, lw)| lw - soft(u, mu))
                .collect();
            let mx = exponents.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let ws: Vec<f64> = exponents.iter().map(|e| (e - mx).exp()).collect();
            let total: f64 = ws.iter().sum();
            out.fill(0.0);
            for (mu, w) in means_g.iter().zip(&ws) {
                let p = w / total;
                let r = soft(u, mu);
                for (o, (&ui, &mi)) in out.iter_mut().zip(u.iter().zip(mu)) {
                    *o += p * (ui - mi) / r;
                }
            }
        });
        // each component gradient has norm < 1, so the mixture gradient does
        // too; Hessian bounded by 1/delta plus the gradient-covariance term
        Self::from_parts("laplace-mixture", dim, value, grad, probe)
            .with_declared(1.0, 1.0 / delta + 1.0)
    }

    /// Two-dimensional valley potential with global minimum at (1, 1):
    /// `(u1 - 1)^2 / (2 sigma^2) + (u2 - kappa u1^2 - (1 - kappa))^2 / 2`.
    pub fn banana(sigma: f64, kappa: f64) -> Self {
        let c0 = 1.0 - kappa;
        let inv_s2 = 1.0 / (sigma * sigma);
        let value: ValueFn = Arc::new(move |u| {
            let t = u[1] - kappa * u[0] * u[0] - c0;
            0.5 * inv_s2 * (u[0] - 1.0) * (u[0] - 1.0) + 0.5 * t * t
        });
        let grad: GradFn = Arc::new(move |u, out| {
            let t = u[1] - kappa * u[0] * u[0] - c0;
            out[0] = inv_s2 * (u[0] - 1.0) - 2.0 * kappa * u[0] * t;
            out[1] = t;
        });
        Self::from_parts(
            "banana",
            2,
            value,
            grad,
            (vec![-8.0, -6.0], vec![8.0, 20.0]),
        )
        .scan_declared(1.05)
    }

    /// Two-dimensional three-well potential: two deep wells near
    /// (+-1.048, -0.042) connected by two channels through a shallow upper
    /// well, with quartic confinement.
    pub fn three_well() -> Self {
        let value: ValueFn = Arc::new(|u| {
            let (x, y) = (u[0], u[1]);
            3.0 * (-x * x - (y - 1.0 / 3.0) * (y - 1.0 / 3.0)).exp()
                - 3.0 * (-x * x - (y - 5.0 / 3.0) * (y - 5.0 / 3.0)).exp()
                - 5.0 * (-(x - 1.0) * (x - 1.0) - y * y).exp()
                - 5.0 * (-(x + 1.0) * (x + 1.0) - y * y).exp()
                + 0.2 * x.powi(4)
                + 0.2 * (y - 1.0 / 3.0).powi(4)
        });
        let grad: GradFn = Arc::new(|u, out| {
            let (x, y) = (u[0], u[1]);
            let e1 = (-x * x - (y - 1.0 / 3.0) * (y - 1.0 / 3.0)).exp();
            let e2 = (-x * x - (y - 5.0 / 3.0) * (y - 5.0 / 3.0)).exp();
            let e3 = (-(x - 1.0) * (x - 1.0) - y * y).exp();
            let e4 = (-(x + 1.0) * (x + 1.0) - y * y).exp();
            out[0] = 3.0 * e1 * (-2.0 * x)
                - 3.0 * e2 * (-2.0 * x)
                - 5.0 * e3 * (-2.0 * (x - 1.0))
                - 5.0 * e4 * (-2.0 * (x + 1.0))
                + 0.8 * x.powi(3);
            out[1] = 3.0 * e1 * (-2.0 * (y - 1.0 / 3.0))
                - 3.0 * e2 * (-2.0 * (y - 5.0 / 3.0))
                - 5.0 * e3 * (-2.0 * y)
                - 5.0 * e4 * (-2.0 * y)
                + 0.8 * (y - 1.0 / 3.0).powi(3);
        });
        Self::from_parts(
            "three-well",
            2,
            value,
            grad,
            (vec![-2.5, -2.0], vec![2.5, 3.0]),
        )
        .scan_declared(1.05)
    }

    /// Potential from explicit value and gradient closures, with constants
    /// declared by a scan over the default probe box.
    pub fn custom(name: impl Into<String>, dim: usize, value: ValueFn, grad: GradFn) -> Self {
        Self::from_parts(name, dim, value, grad, (vec![-4.0; dim], vec![4.0; dim]))
            .scan_declared(1.05)
    }

    /// Build a path potential from the gradient and Laplacian of an
    /// underlying energy: `G = |grad Psi|^2 / 2 - lap Psi / 2`. The gradient
    /// of G is evaluated by central finite differences, since second
    /// derivatives of Psi are not supplied.
    pub fn from_gradient_laplacian(
        name: impl Into<String>,
        dim: usize,
        grad_psi: GradFn,
        laplacian_psi: ValueFn,
    ) -> Self {
        let gp = grad_psi.clone();
        let value: ValueFn = Arc::new(move |u| {
            let mut g = vec![0.0; u.len()];
            gp(u, &mut g);
            0.5 * g.iter().map(|x| x * x).sum::<f64>() - 0.5 * laplacian_psi(u)
        });
        let value_for_grad = value.clone();
        let grad: GradFn = Arc::new(move |u, out| {
            let mut up = u.to_vec();
            for j in 0..u.len() {
                let h = 1e-5 * (1.0 + u[j].abs());
                up[j] = u[j] + h;
                let vp = value_for_grad(&up);
                up[j] = u[j] - h;
                let vm = value_for_grad(&up);
                up[j] = u[j];
                out[j] = (vp - vm) / (2.0 * h);
            }
        });
        Self::from_parts(name, dim, value, grad, (vec![-4.0; dim], vec![4.0; dim]))
            .scan_declared(1.05)
    }

    fn scan_grad_bound_only(mut self) -> Self {
        let pts = self.probe_points(4096);
        let mut g = vec![0.0; self.dim];
        let mut max_g: f64 = 0.0;
        for u in &pts {
            self.gradient(u, &mut g);
            max_g = max_g.max(norm(&g));
        }
        self.grad_bound = max_g * 1.05;
        self
    }
}

/// Serializable description of a library potential.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PotentialSpec {
    pub name: String,
    #[serde(default)]
    pub dim: Option<usize>,
    #[serde(default)]
    pub curvature: Option<f64>,
    #[serde(default)]
    pub sigma: Option<f64>,
    #[serde(default)]
    pub components: Option<usize>,
    #[serde(default)]
    pub rect: Option<(f64, f64)>,
    #[serde(default)]
    pub means: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    pub weights: Option<Vec<f64>>,
    #[serde(default)]
    pub delta: Option<f64>,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default = "default_true")]
    pub recenter: bool,
}

fn default_true() -> bool {
    true
}

impl PotentialSpec {
    pub fn named(name: &str, dim: usize) -> Self {
        PotentialSpec {
            name: name.to_string(),
            dim: Some(dim),
            curvature: None,
            sigma: None,
            components: None,
            rect: None,
            means: None,
            weights: None,
            delta: None,
            seed: None,
            recenter: true,
        }
    }

    /// Resolve the spec to a potential, drawing mixture means from the
    /// configured rectangle when they are not given explicitly.
    pub fn build(&self) -> Result<PointPotential> {
        let dim = self.dim.unwrap_or(2);
        let pot = match self.name.as_str() {
            "zero" => PointPotential::zero(dim),
            "quadratic" => PointPotential::quadratic(dim, self.curvature.unwrap_or(1.0)),
            "normal-mixture" => {
                let means = self.resolve_means(dim)?;
                PointPotential::normal_mixture(dim, means, self.weights.clone())
            }
            "laplace-mixture" => {
                let means = self.resolve_means(dim)?;
                PointPotential::laplace_mixture(
                    dim,
                    means,
                    self.weights.clone(),
                    self.delta.unwrap_or(1e-2),
                )
            }
            "banana" => {
                PointPotential::banana(self.sigma.unwrap_or(2.0), self.curvature.unwrap_or(1.0))
            }
            "three-well" => PointPotential::three_well(),
            other => return Err(Error::UnknownPotential(other.to_string())),
        };
        if self.recenter && pot.name != "zero" {
            let starts = starts_for(&pot);
            pot.recentered(&starts)
        } else {
            Ok(pot)
        }
    }

    fn resolve_means(&self, dim: usize) -> Result<Vec<Vec<f64>>> {
        if let Some(means) = &self.means {
            for mu in means {
                if mu.len() != dim {
                    return Err(Error::invalid_param(
                        "means",
                        "component dimension mismatch",
                    ));
                }
            }
            return Ok(means.clone());
        }
        let k = self.components.unwrap_or(20);
        let (lo, hi) = self.rect.unwrap_or((0.0, 10.0));
        let seed = self
            .seed
            .ok_or_else(|| Error::invalid_param("seed", "random mixture means require a seed"))?;
        let mut rng = crate::rng::RngStream::with_stream(seed, 0);
        Ok((0..k)
            .map(|_| (0..dim).map(|_| rng.uniform_in(lo, hi)).collect())
            .collect())
    }
}

fn starts_for(pot: &PointPotential) -> Vec<Vec<f64>> {
    match pot.name() {
        "banana" => vec![vec![1.0, 1.0]],
        "three-well" => vec![vec![1.0, 0.0], vec![-1.0, 0.0]],
        _ => {
            // probe corners plus center of the probe box
            let (lo, hi) = &pot.probe_box;
            let center: Vec<f64> = lo.iter().zip(hi).map(|(a, b)| 0.5 * (a + b)).collect();
            let mut starts = vec![center];
            starts.extend(pot.probe_points(8));
            starts
        }
    }
}

fn log_sum_exp(terms: impl Iterator<Item = f64>) -> f64 {
    let values: Vec<f64> = terms.collect();
    let mx = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = values
        .iter()
        .map(|v| if v - mx < -40.0 { 0.0 } else { (v - mx).exp() })
        .sum();
    mx + sum.ln()
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn max_pairwise_distance(means: &[Vec<f64>]) -> f64 {
    let mut d: f64 = 0.0;
    for (i, a) in means.iter().enumerate() {
        for b in &means[i + 1..] {
            d = d.max(sq_dist(a, b).sqrt());
        }
    }
    d
}

fn mixture_probe_box(means: &[Vec<f64>], pad: f64) -> (Vec<f64>, Vec<f64>) {
    let dim = means[0].len();
    let mut lo = vec![f64::INFINITY; dim];
    let mut hi = vec![f64::NEG_INFINITY; dim];
    for mu in means {
        for j in 0..dim {
            lo[j] = lo[j].min(mu[j]);
            hi[j] = hi[j].max(mu[j]);
        }
    }
    for j in 0..dim {
        lo[j] -= pad;
        hi[j] += pad;
    }
    (lo, hi)
}

/// Gaussian elimination with partial pivoting for the small dense systems
/// used by the Newton polish.
fn solve_dense(a: &[f64], b: &[f64], n: usize) -> Option<Vec<f64>> {
    let mut m = a.to_vec();
    let mut rhs = b.to_vec();
    for col in 0..n {
        let pivot =
            (col..n).max_by(|&i, &j| m[i * n + col].abs().total_cmp(&m[j * n + col].abs()))?;
        if m[pivot * n + col].abs() < 1e-14 {
            return None;
        }
        if pivot != col {
            for j in 0..n {
                m.swap(col * n + j, pivot * n + j);
            }
            rhs.swap(col, pivot);
        }
        for row in col + 1..n {
            let f = m[row * n + col] / m[col * n + col];
            for j in col..n {
                m[row * n + j] -= f * m[col * n + j];
            }
            rhs[row] -= f * rhs[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let mut acc = rhs[row];
        for j in row + 1..n {
            acc -= m[row * n + j] * x[j];
        }
        x[row] = acc / m[row * n + row];
    }
    Some(x)
}

/// Spectral norm of a small symmetric matrix by power iteration.
fn sym_norm(h: &[f64], n: usize) -> f64 {
    let mut v = vec![1.0; n];
    let mut lam = 0.0;
    for _ in 0..60 {
        let mut w = vec![0.0; n];
        for i in 0..n {
            for j in 0..n {
                w[i] += h[i * n + j] * v[j];
            }
        }
        let nw = norm(&w);
        if nw == 0.0 {
            return 0.0;
        }
        lam = nw;
        for (vi, wi) in v.iter_mut().zip(&w) {
            *vi = wi / nw;
        }
    }
    lam
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_gradient_is_linear() {
        let p = PointPotential::quadratic(3, 2.0);
        let mut g = vec![0.0; 3];
        p.gradient(&[1.0, -2.0, 0.5], &mut g);
        assert_eq!(g, vec![2.0, -4.0, 1.0]);
        assert_eq!(p.grad_lipschitz(), 2.0);
    }

    #[test]
    fn symmetric_mixture_gradient_vanishes_at_center() {
        let p = PointPotential::normal_mixture(1, vec![vec![-2.0], vec![2.0]], None);
        let mut g = vec![0.0];
        p.gradient(&[0.0], &mut g);
        assert!(g[0].abs() < 1e-14);
        // true sup |G''| for means +-2, unit variance is 3 (attained at 0)
        assert!(p.grad_lipschitz() >= 3.0);
    }

    #[test]
    fn mixture_gradients_match_finite_differences() {
        let spec = PotentialSpec {
            components: Some(5),
            seed: Some(17),
            dim: Some(2),
            ..PotentialSpec::named("normal-mixture", 2)
        };
        let p = spec.build().unwrap();
        assert!(p.max_fd_gradient_error(200) < 1e-6);
        let mut g = vec![0.0, 0.0];
        p.gradient(&[0.0, 0.0], &mut g);
        assert!(norm(&g) < 1e-10, "recentering leaves |grad| = {}", norm(&g));
    }

    #[test]
    fn laplace_mixture_gradient_bound_is_exact() {
        let spec = PotentialSpec {
            components: Some(4),
            seed: Some(3),
            dim: Some(2),
            ..PotentialSpec::named("laplace-mixture", 2)
        };
        let p = spec.build().unwrap();
        assert_eq!(p.grad_bound(), 1.0);
        assert!(p.max_gradient_norm(500) <= 1.0 + 1e-12);
        assert!(p.max_fd_gradient_error(200) < 1e-6);
    }

    #[test]
    fn banana_minimum_sits_at_one_one() {
        let p = PointPotential::banana(2.0, 1.0);
        let mut g = vec![0.0, 0.0];
        p.gradient(&[1.0, 1.0], &mut g);
        assert!(norm(&g) < 1e-12);
        assert!(p.value(&[1.0, 1.0]) <= p.value(&[0.9, 1.2]));
        assert!(p.max_fd_gradient_error(300) < 1e-6);

        let recentered = PotentialSpec::named("banana", 2).build().unwrap();
        let mut g0 = vec![0.0, 0.0];
        recentered.gradient(&[0.0, 0.0], &mut g0);
        assert!(norm(&g0) < 1e-11);
        assert!((recentered.offset()[0] - 1.0).abs() < 1e-9);
        assert!((recentered.offset()[1] - 1.0).abs() < 1e-9);
    }

    #[test]
    fn three_well_bottom_wells_match_reference_location() {
        let p = PointPotential::three_well();
        for sign in [1.0, -1.0] {
            let well = p.clone().recentered(&[vec![sign, 0.0]]).unwrap();
            let w = well.offset();
            assert!(
                (w[0].abs() - 1.048).abs() < 5e-3 && (w[1] + 0.042).abs() < 5e-3,
                "well at ({:.4}, {:.4})",
                w[0],
                w[1]
            );
        }
        assert!(p.max_fd_gradient_error(300) < 1e-6);
    }

    #[test]
    fn gradient_laplacian_converter() {
        // Psi(u) = |u|^2 / 2 gives G = |u|^2 / 2 - d / 2
        let grad_psi: GradFn = Arc::new(|u, out| out.copy_from_slice(u));
        let lap_psi: ValueFn = Arc::new(|u| u.len() as f64);
        let p = PointPotential::from_gradient_laplacian("ou", 2, grad_psi, lap_psi);
        assert!((p.value(&[1.0, 2.0]) - (2.5 - 1.0)).abs() < 1e-12);
        let mut g = vec![0.0, 0.0];
        p.gradient(&[1.0, 2.0], &mut g);
        assert!((g[0] - 1.0).abs() < 1e-7 && (g[1] - 2.0).abs() < 1e-7);
    }

    #[test]
    fn unknown_potential_name_errors() {
        let spec = PotentialSpec::named("does-not-exist", 2);
        assert!(matches!(spec.build(), Err(Error::UnknownPotential(_))));
    }

    #[test]
    fn seeded_mixture_family_is_reproducible() {
        let spec = PotentialSpec {
            components: Some(20),
            seed: Some(99),
            dim: Some(2),
            recenter: false,
            ..PotentialSpec::named("normal-mixture", 2)
        };
        let a = spec.build().unwrap();
        let b = spec.build().unwrap();
        let grid = [[0.3, 4.0], [7.7, 1.2]];
        for u in grid {
            assert_eq!(a.value(&u).to_bits(), b.value(&u).to_bits());
        }
    }
}
