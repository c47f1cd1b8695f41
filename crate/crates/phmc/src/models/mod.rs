//! Target models: the finite-difference path and loop measures plus a plain
//! Gaussian reference model.
//!
//! A model owns the covariance operator of its Gaussian reference measure
//! (expressed by eigenvalues in an eigenbasis orthonormal for the weighted
//! inner product), the conversion between grid values and eigen
//! coefficients, and the discretized potential with its gradient. Samplers
//! and couplings only ever see this interface, so the representation factor
//! between raw coordinates and the weighted inner product is applied in
//! exactly one place.

pub mod pimd;
mod potentials;
pub mod tps;

pub use pimd::{PimdModel, PimdParams};
pub use potentials::{PointPotential, PotentialSpec};
pub use tps::{TpsModel, TpsParams};

use crate::error::{Error, Result};
use crate::spectral::{Representation, SpectralOperator, SpectralVector};

/// A sampling target on a spectrally represented space.
pub trait TargetModel: Send + Sync {
    /// State dimension of the truncation.
    fn dim(&self) -> usize;

    /// Quadrature weight of the discrete inner product.
    fn weight(&self) -> f64;

    /// Covariance operator of the reference Gaussian in eigen coordinates.
    fn covariance(&self) -> &SpectralOperator;

    /// Eigen coefficients to grid values.
    fn to_grid(&self, eigen: &[f64], grid: &mut [f64]);

    /// Grid values to eigen coefficients.
    fn to_eigen(&self, grid: &[f64], eigen: &mut [f64]);

    /// Discretized potential `U_m` at grid values (quadrature weight
    /// included).
    fn potential(&self, grid: &[f64]) -> f64;

    /// Raw gradient of the summed point potential `G_m` at grid values. The
    /// preconditioned force is the covariance applied to this vector.
    fn grad_g(&self, grid: &[f64], out: &mut [f64]);

    /// False for a pure Gaussian target; the Hamiltonian flow is then exact.
    fn has_potential(&self) -> bool {
        true
    }

    fn label(&self) -> &str;
}

/// Potential value and gradient of `U_m` at a grid state. The gradient
/// carries the quadrature weight, i.e. it is the raw gradient of `U_m`
/// itself.
pub fn discrete_potential(
    model: &dyn TargetModel,
    x: &SpectralVector,
) -> Result<(f64, SpectralVector)> {
    if x.representation() != Representation::Grid {
        return Err(Error::RepresentationMismatch {
            expected: "grid",
            got: "eigen",
        });
    }
    if x.len() != model.dim() {
        return Err(Error::DimensionMismatch {
            expected: model.dim(),
            got: x.len(),
        });
    }
    let value = model.potential(x.coefficients());
    let mut grad = vec![0.0; model.dim()];
    model.grad_g(x.coefficients(), &mut grad);
    let w = model.weight();
    for g in &mut grad {
        *g *= w;
    }
    Ok((value, SpectralVector::grid(grad, w)))
}

/// Convert an eigen-coordinate state to grid values.
pub fn eigen_to_grid(model: &dyn TargetModel, x: &SpectralVector) -> Result<SpectralVector> {
    if x.representation() != Representation::Eigen {
        return Err(Error::RepresentationMismatch {
            expected: "eigen",
            got: "grid",
        });
    }
    let mut grid = vec![0.0; model.dim()];
    model.to_grid(x.coefficients(), &mut grid);
    Ok(SpectralVector::grid(grid, model.weight()))
}

/// Convert grid values to an eigen-coordinate state.
pub fn grid_to_eigen(model: &dyn TargetModel, x: &SpectralVector) -> Result<SpectralVector> {
    if x.representation() != Representation::Grid {
        return Err(Error::RepresentationMismatch {
            expected: "grid",
            got: "eigen",
        });
    }
    let mut eigen = vec![0.0; model.dim()];
    model.to_eigen(x.coefficients(), &mut eigen);
    Ok(SpectralVector::eigen_with_weight(eigen, model.weight()))
}

/// Orthonormal trigonometric basis on the grid, shared by the path and loop
/// models. Column `c` holds a basis vector of length `m`; grid blocks of
/// size `d` are transformed per coordinate. Eigen coefficients are
/// normalized for the weighted inner product, so mode `(c, i)` maps to eigen
/// index `c * d + i`.
#[derive(Debug, Clone)]
pub(crate) struct GridTransform {
    m: usize,
    d: usize,
    weight: f64,
    /// column-major, cols[c * m + j]
    cols: Vec<f64>,
}

impl GridTransform {
    pub(crate) fn new(m: usize, d: usize, weight: f64, cols: Vec<f64>) -> Self {
        assert_eq!(cols.len(), m * m);
        GridTransform { m, d, weight, cols }
    }

    pub(crate) fn to_eigen(&self, grid: &[f64], out: &mut [f64]) {
        let (m, d) = (self.m, self.d);
        debug_assert_eq!(grid.len(), m * d);
        debug_assert_eq!(out.len(), m * d);
        let sw = self.weight.sqrt();
        if d == 1 {
            for c in 0..m {
                let col = &self.cols[c * m..(c + 1) * m];
                let acc: f64 = col.iter().zip(grid).map(|(b, g)| b * g).sum();
                out[c] = sw * acc;
            }
            return;
        }
        for c in 0..m {
            let col = &self.cols[c * m..(c + 1) * m];
            let block = &mut out[c * d..(c + 1) * d];
            block.fill(0.0);
            for (j, &b) in col.iter().enumerate() {
                let g = &grid[j * d..(j + 1) * d];
                for i in 0..d {
                    block[i] += b * g[i];
                }
            }
            for v in block.iter_mut() {
                *v *= sw;
            }
        }
    }

    pub(crate) fn to_grid(&self, eigen: &[f64], out: &mut [f64]) {
        let (m, d) = (self.m, self.d);
        debug_assert_eq!(eigen.len(), m * d);
        debug_assert_eq!(out.len(), m * d);
        out.fill(0.0);
        if d == 1 {
            for c in 0..m {
                let col = &self.cols[c * m..(c + 1) * m];
                let e = eigen[c];
                for (o, &b) in out.iter_mut().zip(col) {
                    *o += b * e;
                }
            }
        } else {
            for c in 0..m {
                let col = &self.cols[c * m..(c + 1) * m];
                let e = &eigen[c * d..(c + 1) * d];
                for (j, &b) in col.iter().enumerate() {
                    let block = &mut out[j * d..(j + 1) * d];
                    for i in 0..d {
                        block[i] += b * e[i];
                    }
                }
            }
        }
        let isw = 1.0 / self.weight.sqrt();
        for v in out.iter_mut() {
            *v *= isw;
        }
    }
}

/// A centered Gaussian target with no potential. Grid and eigen coordinates
/// coincide.
#[derive(Debug, Clone)]
pub struct GaussianModel {
    operator: SpectralOperator,
    weight: f64,
    label: String,
}

impl GaussianModel {
    pub fn new(operator: SpectralOperator) -> Self {
        let label = format!("gaussian({})", operator.label());
        GaussianModel {
            operator,
            weight: 1.0,
            label,
        }
    }
}

impl TargetModel for GaussianModel {
    fn dim(&self) -> usize {
        self.operator.dim()
    }

    fn weight(&self) -> f64 {
        self.weight
    }

    fn covariance(&self) -> &SpectralOperator {
        &self.operator
    }

    fn to_grid(&self, eigen: &[f64], grid: &mut [f64]) {
        grid.copy_from_slice(eigen);
    }

    fn to_eigen(&self, grid: &[f64], eigen: &mut [f64]) {
        eigen.copy_from_slice(grid);
    }

    fn potential(&self, _grid: &[f64]) -> f64 {
        0.0
    }

    fn grad_g(&self, _grid: &[f64], out: &mut [f64]) {
        out.fill(0.0);
    }

    fn has_potential(&self) -> bool {
        false
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

    #[test]
    fn discrete_potential_zero_for_gaussian() {
        let op = SpectralOperator::new("c", vec![1.0, 0.5]).unwrap();
        let model = GaussianModel::new(op);
        let x = SpectralVector::grid(vec![1.0, 2.0], 1.0);
        let (u, g) = discrete_potential(&model, &x).unwrap();
        assert_eq!(u, 0.0);
        assert!(g.coefficients().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn transform_round_trip_on_models() {
        for m in [5usize, 8] {
            for d in [1usize, 2] {
                let pot = PointPotential::zero(d);
                let model = TpsModel::build(TpsParams {
                    tau: 1.7,
                    d,
                    m,
                    endpoint_a: vec![0.0; d],
                    endpoint_b: vec![0.0; d],
                    potential: pot,
                })
                .unwrap();
                let mut rng = RngStream::from_seed(14);
                let x = sample_gaussian(model.covariance(), &mut rng);
                let grid = eigen_to_grid(&model, &x).unwrap();
                let back = grid_to_eigen(&model, &grid).unwrap();
                for (a, b) in x.coefficients().iter().zip(back.coefficients()) {
                    assert!((a - b).abs() < 1e-12);
                }
            }
        }
    }
}
