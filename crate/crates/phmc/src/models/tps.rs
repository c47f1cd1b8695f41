//! Finite-difference bridge-path target.
//!
//! The interval is discretized into evenly spaced interior points with
//! Dirichlet boundary; the reference covariance is the inverse of the
//! discrete Dirichlet Laplacian, diagonal in the discrete sine basis with
//! closed-form eigenvalues, so no numerical eigensolve is ever performed.
//! States are deviations from the straight line connecting the endpoints.

use super::{GridTransform, PointPotential, TargetModel};
use crate::error::{Error, Result};
use crate::spectral::{SpectralOperator, SpectralVector};
use std::f64::consts::PI;

#[derive(Debug, Clone)]
pub struct TpsParams {
    /// Time horizon of the bridge.
    pub tau: f64,
    /// Dimension of each path point.
    pub d: usize,
    /// Number of interior grid points.
    pub m: usize,
    pub endpoint_a: Vec<f64>,
    pub endpoint_b: Vec<f64>,
    pub potential: PointPotential,
}

#[derive(Debug, Clone)]
pub struct TpsModel {
    tau: f64,
    d: usize,
    m: usize,
    endpoint_a: Vec<f64>,
    endpoint_b: Vec<f64>,
    potential: PointPotential,
    operator: SpectralOperator,
    weight: f64,
    transform: GridTransform,
    /// straight-line path at interior grid points, original coordinates
    mean_path: Vec<f64>,
    /// mean path minus the potential's recentering offset
    mean_path_shifted: Vec<f64>,
    label: String,
}

impl TpsModel {
    pub fn build(params: TpsParams) -> Result<TpsModel> {
        let TpsParams {
            tau,
            d,
            m,
            endpoint_a,
            endpoint_b,
            potential,
        } = params;
        if !(tau > 0.0) {
            return Err(Error::invalid_param("tau", "must be positive"));
        }
        if m < 1 || d < 1 {
            return Err(Error::invalid_param("m,d", "must be at least 1"));
        }
        if endpoint_a.len() != d || endpoint_b.len() != d || potential.dim() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: potential.dim(),
            });
        }
        let weight = tau / (m + 1) as f64;

        // closed-form eigenvalues, multiplicity d per wavenumber
        let mut eigenvalues = Vec::with_capacity(m * d);
        for k in 1..=m {
            let lam = discrete_eigenvalue(tau, m, k);
            for _ in 0..d {
                eigenvalues.push(lam);
            }
        }
        let operator = SpectralOperator::new(format!("tps(tau={tau},m={m},d={d})"), eigenvalues)?;

        // discrete sine basis, orthonormal for the plain dot product
        let norm = (2.0 / (m + 1) as f64).sqrt();
        let mut cols = vec![0.0; m * m];
        for k in 1..=m {
            for j in 1..=m {
                cols[(k - 1) * m + (j - 1)] =
                    norm * (j as f64 * k as f64 * PI / (m + 1) as f64).sin();
            }
        }
        let transform = GridTransform::new(m, d, weight, cols);

        let mut mean_path = Vec::with_capacity(m * d);
        for j in 1..=m {
            let t = j as f64 / (m + 1) as f64;
            for i in 0..d {
                mean_path.push(endpoint_a[i] + t * (endpoint_b[i] - endpoint_a[i]));
            }
        }
        let offset = potential.offset().to_vec();
        let mean_path_shifted: Vec<f64> = mean_path
            .iter()
            .enumerate()
            .map(|(idx, &v)| v - offset[idx % d])
            .collect();

        let label = format!("tps(tau={tau},m={m},d={d},{})", potential.name());
        Ok(TpsModel {
            tau,
            d,
            m,
            endpoint_a,
            endpoint_b,
            potential,
            operator,
            weight,
            transform,
            mean_path,
            mean_path_shifted,
            label,
        })
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn endpoints(&self) -> (&[f64], &[f64]) {
        (&self.endpoint_a, &self.endpoint_b)
    }

    pub fn point_potential(&self) -> &PointPotential {
        &self.potential
    }

    /// Straight-line mean path at the interior grid points (original
    /// coordinates).
    pub fn mean_path(&self) -> &[f64] {
        &self.mean_path
    }

    /// Continuum eigenvalue for wavenumber `k`.
    pub fn continuum_eigenvalue(&self, k: usize) -> f64 {
        continuum_eigenvalue(self.tau, k)
    }

    /// Eigen state from a path given at the interior grid points in original
    /// coordinates: the straight-line mean is subtracted first.
    pub fn state_from_path(&self, points: &[f64]) -> Result<SpectralVector> {
        if points.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: points.len(),
            });
        }
        let grid: Vec<f64> = points
            .iter()
            .zip(&self.mean_path)
            .map(|(p, m)| p - m)
            .collect();
        let mut eigen = vec![0.0; self.dim()];
        self.transform.to_eigen(&grid, &mut eigen);
        Ok(SpectralVector::eigen_with_weight(eigen, self.weight))
    }

    /// Dense matrix of the negated discrete Dirichlet Laplacian (the inverse
    /// of the covariance matrix), row-major, size (m d)^2. Used by oracle
    /// tests; the sampler never touches it.
    pub fn inverse_covariance_matrix(&self) -> Vec<f64> {
        let n = self.dim();
        let h2 = self.weight * self.weight;
        let mut a = vec![0.0; n * n];
        for i in 0..n {
            a[i * n + i] = 2.0 / h2;
            if i + self.d < n {
                a[i * n + i + self.d] = -1.0 / h2;
                a[(i + self.d) * n + i] = -1.0 / h2;
            }
        }
        a
    }
}

/// Continuum eigenvalue `(tau / (k pi))^2`.
pub fn continuum_eigenvalue(tau: f64, k: usize) -> f64 {
    let x = tau / (k as f64 * PI);
    x * x
}

/// Discrete eigenvalue: continuum value times `(theta_k / sin theta_k)^2`
/// with `theta_k = k pi / (2 (m + 1))`.
pub fn discrete_eigenvalue(tau: f64, m: usize, k: usize) -> f64 {
    let theta = k as f64 * PI / (2.0 * (m + 1) as f64);
    let ratio = theta / theta.sin();
    continuum_eigenvalue(tau, k) * ratio * ratio
}

impl TargetModel for TpsModel {
    fn dim(&self) -> usize {
        self.m * self.d
    }

    fn weight(&self) -> f64 {
        self.weight
    }

    fn covariance(&self) -> &SpectralOperator {
        &self.operator
    }

    fn to_grid(&self, eigen: &[f64], grid: &mut [f64]) {
        self.transform.to_grid(eigen, grid);
    }

    fn to_eigen(&self, grid: &[f64], eigen: &mut [f64]) {
        self.transform.to_eigen(grid, eigen);
    }

    fn potential(&self, grid: &[f64]) -> f64 {
        let d = self.d;
        let mut acc = 0.0;
        let mut point = vec![0.0; d];
        for j in 0..self.m {
            for i in 0..d {
                point[i] = grid[j * d + i] + self.mean_path_shifted[j * d + i];
            }
            acc += self.potential.value(&point);
        }
        self.weight * acc
    }

    fn grad_g(&self, grid: &[f64], out: &mut [f64]) {
        let d = self.d;
        let mut point = vec![0.0; d];
        let mut g = vec![0.0; d];
        for j in 0..self.m {
            for i in 0..d {
                point[i] = grid[j * d + i] + self.mean_path_shifted[j * d + i];
            }
            self.potential.gradient(&point, &mut g);
            out[j * d..(j + 1) * d].copy_from_slice(&g);
        }
    }

    fn has_potential(&self) -> bool {
        self.potential.name() != "zero"
    }

    fn label(&self) -> &str {
        &self.label
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::discrete_potential;
    use crate::rng::RngStream;
    use crate::spectral::{hs_inner, sample_gaussian, SobolevIndex};

    fn quadratic_model(m: usize, d: usize, tau: f64) -> TpsModel {
        TpsModel::build(TpsParams {
            tau,
            d,
            m,
            endpoint_a: vec![0.0; d],
            endpoint_b: vec![0.0; d],
            potential: PointPotential::quadratic(d, 1.0),
        })
        .unwrap()
    }

    #[test]
    fn continuum_eigenvalues_match_formula() {
        let model = quadratic_model(4, 1, 2.0);
        assert!((model.continuum_eigenvalue(1) - (2.0 / PI).powi(2)).abs() < 1e-15);
        assert!((model.continuum_eigenvalue(3) - (2.0 / (3.0 * PI)).powi(2)).abs() < 1e-15);
    }

    #[test]
    fn smallest_case_discrete_eigenvalue() {
        // m = 1, tau = pi: Lambda_1 = pi^2 / 8
        let lam = discrete_eigenvalue(PI, 1, 1);
        assert!((lam - PI * PI / 8.0).abs() < 1e-14);
    }

    #[test]
    fn eigenvalues_have_multiplicity_d() {
        let model = quadratic_model(3, 2, 1.0);
        let e = model.covariance().eigenvalues();
        assert_eq!(e.len(), 6);
        assert_eq!(e[0], e[1]);
        assert_eq!(e[2], e[3]);
        assert!(e[1] > e[2]);
    }

    #[test]
    fn quadratic_potential_is_half_weighted_norm() {
        // G(u) = |u|^2/2 with zero endpoints: U_m(x) = <x, x> / 2
        let model = quadratic_model(8, 2, 1.3);
        let mut rng = RngStream::from_seed(4);
        let x = sample_gaussian(model.covariance(), &mut rng);
        let grid = super::super::eigen_to_grid(&model, &x).unwrap();
        let (u, _) = discrete_potential(&model, &grid).unwrap();
        let half_norm =
            0.5 * hs_inner(&x, &x, model.covariance(), SobolevIndex::default()).unwrap();
        assert!((u - half_norm).abs() < 1e-10 * half_norm.max(1.0));
    }

    #[test]
    fn gradient_of_um_matches_finite_differences() {
        let model = TpsModel::build(TpsParams {
            tau: 1.0,
            d: 1,
            m: 6,
            endpoint_a: vec![-1.0],
            endpoint_b: vec![2.0],
            potential: PointPotential::normal_mixture(1, vec![vec![-2.0], vec![2.0]], None),
        })
        .unwrap();
        let mut rng = RngStream::from_seed(8);
        let x = sample_gaussian(model.covariance(), &mut rng);
        let grid = super::super::eigen_to_grid(&model, &x).unwrap();
        let (_, grad_u) = discrete_potential(&model, &grid).unwrap();
        let mut pert = grid.clone();
        for j in 0..model.dim() {
            let h = 1e-6;
            pert.coefficients_mut()[j] += h;
            let up = model.potential(pert.coefficients());
            pert.coefficients_mut()[j] -= 2.0 * h;
            let um = model.potential(pert.coefficients());
            pert.coefficients_mut()[j] += h;
            let fd = (up - um) / (2.0 * h);
            let g = grad_u.coefficients()[j];
            assert!(
                (fd - g).abs() <= 1e-6 * g.abs().max(1.0),
                "mode {j}: fd {fd} vs grad {g}"
            );
        }
    }

    #[test]
    fn state_from_path_subtracts_mean() {
        let model = TpsModel::build(TpsParams {
            tau: 1.0,
            d: 1,
            m: 3,
            endpoint_a: vec![0.0],
            endpoint_b: vec![4.0],
            potential: PointPotential::zero(1),
        })
        .unwrap();
        // the straight line itself maps to the zero state
        let straight = model.mean_path().to_vec();
        let x = model.state_from_path(&straight).unwrap();
        assert!(x.coefficients().iter().all(|&c| c.abs() < 1e-13));
    }

    #[test]
    fn drift_lipschitz_bound_holds_on_sampled_pairs() {
        // |b(x) - b(y)| <= (1 + Lambda_1 L_G) |x - y| with b = -x - C grad
        let model = TpsModel::build(TpsParams {
            tau: 1.0,
            d: 1,
            m: 12,
            endpoint_a: vec![0.0],
            endpoint_b: vec![0.0],
            potential: PointPotential::normal_mixture(1, vec![vec![-2.0], vec![2.0]], None),
        })
        .unwrap();
        let lam1 = model.covariance().eigenvalue(0);
        let l_bound = 1.0 + lam1 * model.point_potential().grad_lipschitz();
        let mut rng = RngStream::from_seed(12);
        let dim = model.dim();
        let drift = |x: &SpectralVector| -> Vec<f64> {
            let mut grid = vec![0.0; dim];
            model.to_grid(x.coefficients(), &mut grid);
            let mut g = vec![0.0; dim];
            model.grad_g(&grid, &mut g);
            let mut ge = vec![0.0; dim];
            model.to_eigen(&g, &mut ge);
            x.coefficients()
                .iter()
                .zip(model.covariance().eigenvalues())
                .zip(&ge)
                .map(|((&xi, &lam), &gi)| -xi - lam * gi)
                .collect()
        };
        for _ in 0..50 {
            let x = sample_gaussian(model.covariance(), &mut rng);
            let y = sample_gaussian(model.covariance(), &mut rng);
            let bx = drift(&x);
            let by = drift(&y);
            let num: f64 = bx
                .iter()
                .zip(&by)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            let den: f64 = x
                .coefficients()
                .iter()
                .zip(y.coefficients())
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            assert!(num <= l_bound * den * (1.0 + 1e-10));
        }
    }
}
