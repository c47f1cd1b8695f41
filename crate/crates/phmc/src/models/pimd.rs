//! Finite-difference ring-polymer (loop) target.
//!
//! The circle is discretized into evenly spaced points with periodic
//! boundary; the reference covariance is the inverse of the shifted periodic
//! Laplacian, diagonal in the real Fourier basis. The shift keeps the
//! centroid mode from degenerating. Eigenvalues come in groups: the constant
//! mode with multiplicity d, interior frequencies with multiplicity 2d (one
//! cosine and one sine vector each) and, for even m, the alternating mode
//! with multiplicity d.

use super::{GridTransform, PointPotential, TargetModel};
use crate::error::{Error, Result};
use crate::spectral::{SpectralOperator, SpectralVector};
use std::f64::consts::PI;

#[derive(Debug, Clone)]
pub struct PimdParams {
    /// Inverse temperature: length of the loop.
    pub beta: f64,
    /// Positive shift added to the Laplacian.
    pub a: f64,
    /// Dimension of each loop point.
    pub d: usize,
    /// Number of grid points.
    pub m: usize,
    pub potential: PointPotential,
}

#[derive(Debug, Clone)]
pub struct PimdModel {
    beta: f64,
    a: f64,
    d: usize,
    m: usize,
    potential: PointPotential,
    operator: SpectralOperator,
    weight: f64,
    transform: GridTransform,
    label: String,
}

impl PimdModel {
    pub fn build(params: PimdParams) -> Result<PimdModel> {
        let PimdParams {
            beta,
            a,
            d,
            m,
            potential,
        } = params;
        if !(beta > 0.0) || !(a > 0.0) {
            return Err(Error::invalid_param("beta,a", "must be positive"));
        }
        if m < 1 || d < 1 {
            return Err(Error::invalid_param("m,d", "must be at least 1"));
        }
        if potential.dim() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: potential.dim(),
            });
        }
        let weight = beta / m as f64;

        // eigenvalues and real Fourier basis in frequency-group order
        let groups = frequency_groups(m);
        let mut eigenvalues = Vec::with_capacity(m * d);
        let mut cols = vec![0.0; m * m];
        let mut col = 0usize;
        for g in &groups {
            let lam = discrete_eigenvalue(beta, a, m, g.k);
            for _ in 0..g.columns {
                for _ in 0..d {
                    eigenvalues.push(lam);
                }
            }
            let f = (g.k - 1) as f64;
            match g.columns {
                1 => {
                    for j in 1..=m {
                        cols[col * m + (j - 1)] = if g.k == 1 {
                            1.0 / (m as f64).sqrt()
                        } else {
                            // alternating mode at the top frequency, even m
                            (PI * j as f64).cos() / (m as f64).sqrt()
                        };
                    }
                    col += 1;
                }
                2 => {
                    let norm = (2.0 / m as f64).sqrt();
                    for j in 1..=m {
                        cols[col * m + (j - 1)] = norm * (2.0 * PI * f * j as f64 / m as f64).cos();
                    }
                    for j in 1..=m {
                        cols[(col + 1) * m + (j - 1)] =
                            norm * (2.0 * PI * f * j as f64 / m as f64).sin();
                    }
                    col += 2;
                }
                _ => unreachable!(),
            }
        }
        debug_assert_eq!(col, m);
        debug_assert_eq!(eigenvalues.len(), m * d);
        let operator =
            SpectralOperator::new(format!("pimd(beta={beta},a={a},m={m},d={d})"), eigenvalues)?;
        let transform = GridTransform::new(m, d, weight, cols);
        let label = format!("pimd(beta={beta},a={a},m={m},d={d},{})", potential.name());
        Ok(PimdModel {
            beta,
            a,
            d,
            m,
            potential,
            operator,
            weight,
            transform,
            label,
        })
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn shift(&self) -> f64 {
        self.a
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn point_potential(&self) -> &PointPotential {
        &self.potential
    }

    pub fn continuum_eigenvalue(&self, k: usize) -> f64 {
        continuum_eigenvalue(self.beta, self.a, k)
    }

    /// Eigen state from a loop given at the grid points in original
    /// coordinates; the potential's recentering offset is subtracted.
    pub fn state_from_loop(&self, points: &[f64]) -> Result<SpectralVector> {
        if points.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: points.len(),
            });
        }
        let offset = self.potential.offset();
        let grid: Vec<f64> = points
            .iter()
            .enumerate()
            .map(|(idx, &p)| p - offset[idx % self.d])
            .collect();
        let mut eigen = vec![0.0; self.dim()];
        self.transform.to_eigen(&grid, &mut eigen);
        Ok(SpectralVector::eigen_with_weight(eigen, self.weight))
    }

    /// Dense matrix of the shifted negated periodic Laplacian (the inverse
    /// of the covariance matrix), row-major. Requires m >= 2; the two
    /// wraparound directions accumulate on the same entry for m = 2.
    pub fn inverse_covariance_matrix(&self) -> Result<Vec<f64>> {
        if self.m < 2 {
            return Err(Error::invalid_param(
                "m",
                "periodic stencil needs at least two grid points",
            ));
        }
        let n = self.dim();
        let (m, d) = (self.m, self.d);
        let h2 = self.weight * self.weight;
        let mut mat = vec![0.0; n * n];
        for i in 0..n {
            mat[i * n + i] = 2.0 / h2 + self.a;
        }
        for block in 0..m {
            let next = (block + 1) % m;
            for i in 0..d {
                let row = block * d + i;
                let colx = next * d + i;
                mat[row * n + colx] += -1.0 / h2;
                mat[colx * n + row] += -1.0 / h2;
            }
        }
        Ok(mat)
    }
}

struct FrequencyGroup {
    /// 1-based group index; frequency is k - 1
    k: usize,
    /// 1 for the constant and alternating modes, 2 for cosine/sine pairs
    columns: usize,
}

fn frequency_groups(m: usize) -> Vec<FrequencyGroup> {
    let k_max = (m + 1) / 2 + if m % 2 == 0 { 1 } else { 0 };
    (1..=k_max)
        .map(|k| {
            let columns = if k == 1 || (m % 2 == 0 && k == m / 2 + 1) {
                1
            } else {
                2
            };
            FrequencyGroup { k, columns }
        })
        .collect()
}

/// Continuum eigenvalue: `1/a` for the constant mode, `1/(a + omega_k^2)`
/// with `omega_k = 2 pi (k-1) / beta` otherwise.
pub fn continuum_eigenvalue(beta: f64, a: f64, k: usize) -> f64 {
    if k == 1 {
        1.0 / a
    } else {
        let omega = 2.0 * PI * (k - 1) as f64 / beta;
        1.0 / (a + omega * omega)
    }
}

/// Discrete eigenvalue: the frequency term is damped by
/// `(sin theta_k / theta_k)^2` with `theta_k = (k - 1) pi / m`.
pub fn discrete_eigenvalue(beta: f64, a: f64, m: usize, k: usize) -> f64 {
    if k == 1 {
        return 1.0 / a;
    }
    let theta = (k - 1) as f64 * PI / m as f64;
    let omega2 = 4.0 * ((k - 1) as f64 * PI / beta).powi(2);
    let damp = theta.sin() / theta;
    1.0 / (a + omega2 * damp * damp)
}

impl TargetModel for PimdModel {
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
        for j in 0..self.m {
            acc += self.potential.value(&grid[j * d..(j + 1) * d]);
        }
        self.weight * acc
    }

    fn grad_g(&self, grid: &[f64], out: &mut [f64]) {
        let d = self.d;
        let mut g = vec![0.0; d];
        for j in 0..self.m {
            self.potential.gradient(&grid[j * d..(j + 1) * d], &mut g);
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
    use crate::rng::RngStream;
    use crate::spectral::sample_gaussian;

    fn zero_model(m: usize, d: usize, beta: f64, a: f64) -> PimdModel {
        PimdModel::build(PimdParams {
            beta,
            a,
            d,
            m,
            potential: PointPotential::zero(d),
        })
        .unwrap()
    }

    #[test]
    fn leading_eigenvalue_is_inverse_shift() {
        for m in [1usize, 2, 5, 8] {
            let model = zero_model(m, 1, 2.0, 0.7);
            assert_eq!(model.covariance().eigenvalue(0), 1.0 / 0.7);
            assert_eq!(model.continuum_eigenvalue(1), 1.0 / 0.7);
        }
    }

    #[test]
    fn continuum_second_group() {
        // beta = 2 pi, a = 1, k = 2: omega^2 = 1, lambda = 1/2
        assert!((continuum_eigenvalue(2.0 * PI, 1.0, 2) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn multiplicity_audit_both_parities() {
        for (m, d) in [(5usize, 1usize), (6, 1), (7, 2), (8, 2), (2, 3), (1, 2)] {
            let model = zero_model(m, d, 1.5, 0.3);
            let e = model.covariance().eigenvalues();
            assert_eq!(e.len(), m * d, "m={m} d={d}");
            // constant group has multiplicity exactly d
            assert!(e[..d].iter().all(|&v| v == 1.0 / 0.3));
            if m * d > d {
                assert!(e[d] < e[0]);
            }
            if m >= 3 {
                // first interior group has multiplicity 2d
                let lam = e[d];
                assert!(e[d..3 * d].iter().all(|&v| v == lam));
            }
        }
    }

    #[test]
    fn transform_round_trip() {
        for m in [4usize, 5, 8, 9] {
            let model = zero_model(m, 2, 2.2, 0.4);
            let mut rng = RngStream::from_seed(31);
            let x = sample_gaussian(model.covariance(), &mut rng);
            let mut grid = vec![0.0; model.dim()];
            model.to_grid(x.coefficients(), &mut grid);
            let mut back = vec![0.0; model.dim()];
            model.to_eigen(&grid, &mut back);
            for (a, b) in x.coefficients().iter().zip(&back) {
                assert!((a - b).abs() < 1e-12, "m={m}");
            }
        }
    }

    #[test]
    fn state_from_loop_round_trips_constant_loop() {
        let model = zero_model(6, 2, 1.0, 0.5);
        // a constant loop lives entirely in the constant modes
        let mut points = vec![0.0; 12];
        for j in 0..6 {
            points[2 * j] = 3.0;
            points[2 * j + 1] = -1.0;
        }
        let x = model.state_from_loop(&points).unwrap();
        for (idx, &c) in x.coefficients().iter().enumerate() {
            if idx >= 2 {
                assert!(c.abs() < 1e-12);
            } else {
                assert!(c.abs() > 0.1);
            }
        }
    }
}
