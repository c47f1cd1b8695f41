//! Distances in which the coupling contracts: the two-scale weighted norm,
//! the concave cap, the stability-weighted semimetric, and an empirical
//! Wasserstein decay estimator built on the coupling.

use crate::coupling::{coupled_step, CoupledPair, CouplingKernel};
use crate::error::{Error, Result};
use crate::rng::RngStream;
use crate::spectral::{hs_norm, ModeSplit, SobolevIndex, SpectralOperator, SpectralVector};
use crate::stats::RunningMoments;
use rayon::prelude::*;
use serde::Serialize;

/// Weighted two-scale norm: whitened low modes plus `alpha` times the
/// fractional norm of the high modes.
#[derive(Debug, Clone)]
pub struct AlphaNorm {
    pub alpha: f64,
    pub split: ModeSplit,
    pub c: SpectralOperator,
    pub c_tilde: SpectralOperator,
    pub s: SobolevIndex,
}

impl AlphaNorm {
    pub fn new(
        alpha: f64,
        split: ModeSplit,
        c: SpectralOperator,
        c_tilde: SpectralOperator,
        s: SobolevIndex,
    ) -> Result<Self> {
        if !(alpha > 0.0) {
            return Err(Error::invalid_param("alpha", "must be positive"));
        }
        if c.dim() != c_tilde.dim() {
            return Err(Error::DimensionMismatch {
                expected: c.dim(),
                got: c_tilde.dim(),
            });
        }
        split.validate(c.dim())?;
        Ok(AlphaNorm {
            alpha,
            split,
            c,
            c_tilde,
            s,
        })
    }

    /// `|x|_alpha = |Ct^(-1/2) x_low| + alpha |x_high|_s`.
    pub fn eval(&self, x: &SpectralVector) -> Result<f64> {
        if x.len() != self.c.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.c.dim(),
                got: x.len(),
            });
        }
        let n = self.split.low_modes();
        let sv = self.s.value();
        let mut low = 0.0;
        for j in 0..n {
            let xj = x.coefficients()[j];
            low += xj * xj / self.c_tilde.eigenvalue(j);
        }
        let mut high = 0.0;
        for j in n..x.len() {
            let xj = x.coefficients()[j];
            let scale = if sv == 0.0 {
                1.0
            } else {
                self.c.eigenvalue(j).powf(-sv)
            };
            high += scale * xj * xj;
        }
        Ok(low.sqrt() + self.alpha * high.sqrt())
    }

    pub fn distance(&self, x: &SpectralVector, y: &SpectralVector) -> Result<f64> {
        self.eval(&x.sub(y))
    }

    /// Whitened norm of the low block alone.
    pub fn low_whitened(&self, x: &SpectralVector) -> f64 {
        let n = self.split.low_modes();
        let mut low = 0.0;
        for j in 0..n {
            let xj = x.coefficients()[j];
            low += xj * xj / self.c_tilde.eigenvalue(j);
        }
        low.sqrt()
    }

    /// Fractional norm of the high block alone.
    pub fn high_fractional(&self, x: &SpectralVector) -> f64 {
        let sv = self.s.value();
        let n = self.split.low_modes();
        let mut high = 0.0;
        for j in n..x.len() {
            let xj = x.coefficients()[j];
            let scale = if sv == 0.0 {
                1.0
            } else {
                self.c.eigenvalue(j).powf(-sv)
            };
            high += scale * xj * xj;
        }
        high.sqrt()
    }

    /// Conditioning numbers of the whitening over the low modes:
    /// min and max of `lambda_tilde_i^(-1/2) lambda_i^(s/2)`.
    pub fn sigma_bounds(&self) -> (f64, f64) {
        sigma_bounds(&self.c, &self.c_tilde, self.s, self.split.low_modes())
    }
}

/// Conditioning numbers over the first `n` modes.
pub fn sigma_bounds(
    c: &SpectralOperator,
    c_tilde: &SpectralOperator,
    s: SobolevIndex,
    n: usize,
) -> (f64, f64) {
    let sv = s.value();
    let mut lo = f64::INFINITY;
    let mut hi = 0.0f64;
    for j in 0..n {
        let sigma = c_tilde.eigenvalue(j).powf(-0.5) * c.eigenvalue(j).powf(0.5 * sv);
        lo = lo.min(sigma);
        hi = hi.max(sigma);
    }
    (lo, hi)
}

/// Parameters of the capped concave profile and the stability weight.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct SemimetricParams {
    /// exponential decay of the profile
    pub a: f64,
    /// radius beyond which the profile is constant
    pub r_cap: f64,
    /// weight of the quadratic stability factor
    pub epsilon: f64,
}

impl SemimetricParams {
    pub fn new(a: f64, r_cap: f64, epsilon: f64) -> Result<Self> {
        if !(a > 0.0) || !(r_cap > 0.0) {
            return Err(Error::invalid_param("a,r_cap", "must be positive"));
        }
        if !(epsilon >= 0.0) {
            return Err(Error::invalid_param("epsilon", "must be nonnegative"));
        }
        Ok(SemimetricParams { a, r_cap, epsilon })
    }
}

/// `f(r) = (1 - exp(-a min(r, R))) / a`: concave, non-decreasing, constant
/// beyond the cap.
pub fn f_eval(r: f64, params: &SemimetricParams) -> f64 {
    (1.0 - (-params.a * r.min(params.r_cap)).exp()) / params.a
}

/// Left derivative of the profile: `exp(-a r)` up to the cap, zero after.
pub fn f_left_derivative(r: f64, params: &SemimetricParams) -> f64 {
    if r <= params.r_cap {
        (-params.a * r).exp()
    } else {
        0.0
    }
}

/// The contraction semimetric
/// `rho(x, y) = sqrt(f(|x - y|_alpha) (1 + eps |x|_s^2 + eps |y|_s^2))`.
/// It may violate the triangle inequality; nothing here assumes it.
pub fn semimetric_rho(
    x: &SpectralVector,
    y: &SpectralVector,
    norm: &AlphaNorm,
    params: &SemimetricParams,
) -> Result<f64> {
    let r = norm.distance(x, y)?;
    let sx = hs_norm(x, &norm.c, norm.s)?;
    let sy = hs_norm(y, &norm.c, norm.s)?;
    Ok((f_eval(r, params) * (1.0 + params.epsilon * (sx * sx + sy * sy))).sqrt())
}

/// One step of the empirical coupled-distance series.
#[derive(Debug, Clone, Serialize)]
pub struct DecayPoint {
    pub step: u64,
    pub mean_distance: f64,
    pub se: f64,
    pub log_mean: f64,
}

/// Mean coupled distance `E |X_k - Y_k|_s` per step over replicas: an upper
/// bound on the Wasserstein distance between the two chain laws, exhibiting
/// the contraction empirically.
pub fn empirical_wasserstein_decay(
    kernel: &CouplingKernel,
    draw_x0: &(dyn Fn(&mut RngStream) -> SpectralVector + Sync),
    draw_y0: &(dyn Fn(&mut RngStream) -> SpectralVector + Sync),
    k_steps: u64,
    replicas: usize,
    rng: &RngStream,
) -> Result<Vec<DecayPoint>> {
    if replicas < 1 {
        return Err(Error::invalid_param("replicas", "must be at least 1"));
    }
    let norm = &kernel.alpha_norm;
    let series: Vec<Vec<f64>> = (0..replicas)
        .into_par_iter()
        .map(|r| {
            let mut stream = rng.substream(r as u64);
            let x0 = draw_x0(&mut stream);
            let y0 = draw_y0(&mut stream);
            let mut pair = CoupledPair::new(x0, y0);
            let mut distances = Vec::with_capacity(k_steps as usize + 1);
            let d0 = hs_norm(&pair.x.sub(&pair.y), &norm.c, norm.s)?;
            distances.push(d0);
            for _ in 0..k_steps {
                let out = coupled_step(&pair, kernel, &mut stream)?;
                pair = out.pair;
                distances.push(hs_norm(&pair.x.sub(&pair.y), &norm.c, norm.s)?);
            }
            Ok(distances)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut points = Vec::with_capacity(k_steps as usize + 1);
    for step in 0..=k_steps {
        let mut acc = RunningMoments::new();
        for row in &series {
            acc.push(row[step as usize]);
        }
        points.push(DecayPoint {
            step,
            mean_distance: acc.mean(),
            se: acc.standard_error(),
            log_mean: acc.mean().ln(),
        });
    }
    Ok(points)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::sample_gaussian;

    fn cfg(n: usize, alpha: f64, s: f64) -> AlphaNorm {
        let c = SpectralOperator::new("c", vec![1.0, 0.5, 0.25, 0.125]).unwrap();
        let ct = SpectralOperator::new("ct", vec![0.8, 0.4, 0.2, 0.1]).unwrap();
        AlphaNorm::new(
            alpha,
            ModeSplit::new(n).unwrap(),
            c,
            ct,
            SobolevIndex::new(s).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn alpha_norm_of_zero_is_zero() {
        let norm = cfg(2, 1.5, 0.0);
        let x = SpectralVector::eigen(vec![0.0; 4]);
        assert_eq!(norm.eval(&x).unwrap(), 0.0);
    }

    #[test]
    fn alpha_norm_single_low_mode() {
        // a single low mode j contributes |c| lambda_tilde_j^(-1/2)
        let norm = cfg(2, 1.5, 0.0);
        let x = SpectralVector::eigen(vec![0.0, 3.0, 0.0, 0.0]);
        let expect = 3.0 / 0.4f64.sqrt();
        assert!((norm.eval(&x).unwrap() - expect).abs() < 1e-14);
    }

    #[test]
    fn alpha_norm_equivalence_bounds() {
        // min(sigma_min, alpha) |x|_s <= |x|_alpha
        //   <= sqrt(2) max(sigma_max, alpha) |x|_s
        for s in [0.0, 0.4, -0.5] {
            let norm = cfg(2, 0.9, s);
            let (smin, smax) = norm.sigma_bounds();
            let mut rng = RngStream::from_seed(20);
            for _ in 0..10_000 {
                let x = sample_gaussian(&norm.c_tilde, &mut rng);
                let xs = hs_norm(&x, &norm.c, norm.s).unwrap();
                let xa = norm.eval(&x).unwrap();
                assert!(smin.min(norm.alpha) * xs <= xa * (1.0 + 1e-12));
                assert!(xa <= 2f64.sqrt() * smax.max(norm.alpha) * xs * (1.0 + 1e-12));
            }
        }
    }

    #[test]
    fn profile_basics() {
        let p = SemimetricParams::new(2.0, 1.5, 0.0).unwrap();
        assert_eq!(f_eval(0.0, &p), 0.0);
        let cap = (1.0 - (-2.0f64 * 1.5).exp()) / 2.0;
        assert!((f_eval(1.5, &p) - cap).abs() < 1e-15);
        assert_eq!(f_eval(7.0, &p), f_eval(2.0, &p)); // constant past the cap
        assert_eq!(f_left_derivative(2.0, &p), 0.0);
        assert!((f_left_derivative(1.0, &p) - (-2.0f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn profile_inequalities_on_grid() {
        // concavity, increment bound and the ratio envelope of the profile
        let r_grid: Vec<f64> = (1..=60).map(|i| i as f64 * 0.07).collect();
        for &a in &[0.3, 1.0, 4.0] {
            for &r_cap in &[0.5, 1.0, 3.0] {
                let p = SemimetricParams::new(a, r_cap, 0.0).unwrap();
                for &r in &r_grid {
                    for &rt in &r_grid {
                        let lhs = f_eval(rt, &p) - f_eval(r, &p);
                        assert!(lhs <= f_left_derivative(r, &p) * (rt - r) + 1e-12);
                        assert!(lhs <= f_left_derivative(r, &p) / a + 1e-12);
                    }
                    if r <= r_cap {
                        let ratio = r * f_left_derivative(r, &p) / f_eval(r, &p);
                        let m = 1.0f64.max(a * r_cap);
                        assert!(ratio <= 1.0 + 1e-12);
                        assert!(ratio >= m * (-m).exp() - 1e-12);
                    }
                }
            }
        }
    }

    #[test]
    fn rho_symmetry_and_identity() {
        let norm = cfg(2, 1.0, 0.0);
        let p = SemimetricParams::new(1.0, 2.0, 0.3).unwrap();
        let mut rng = RngStream::from_seed(21);
        for _ in 0..100 {
            let x = sample_gaussian(&norm.c, &mut rng);
            let y = sample_gaussian(&norm.c, &mut rng);
            let xy = semimetric_rho(&x, &y, &norm, &p).unwrap();
            let yx = semimetric_rho(&y, &x, &norm, &p).unwrap();
            assert!((xy - yx).abs() < 1e-13);
            assert!(xy > 0.0);
            assert_eq!(semimetric_rho(&x, &x, &norm, &p).unwrap(), 0.0);
        }
    }

    #[test]
    fn rho_with_zero_epsilon_reduces_to_profile() {
        let norm = cfg(2, 1.0, 0.0);
        let p = SemimetricParams::new(1.0, 2.0, 0.0).unwrap();
        let mut rng = RngStream::from_seed(22);
        let x = sample_gaussian(&norm.c, &mut rng);
        let y = sample_gaussian(&norm.c, &mut rng);
        let rho = semimetric_rho(&x, &y, &norm, &p).unwrap();
        let direct = f_eval(norm.distance(&x, &y).unwrap(), &p).sqrt();
        assert!((rho - direct).abs() < 1e-14);
    }

    #[test]
    fn rho_dominates_fractional_distance() {
        // |x - y|_s <= max(sqrt(e T)/sigma_min,
        //                  sqrt(2)/sqrt((1 - 1/e) T eps)) rho(x, y)
        // for a = 1/T, R >= T and alpha >= sigma_min
        let t = 0.7;
        let norm = cfg(2, 4.0, 0.0);
        let (smin, _) = norm.sigma_bounds();
        assert!(norm.alpha >= smin);
        let eps = 0.05;
        let p = SemimetricParams::new(1.0 / t, 3.0 * t, eps).unwrap();
        let factor = ((std::f64::consts::E * t).sqrt() / smin)
            .max(2f64.sqrt() / ((1.0 - (-1.0f64).exp()) * t * eps).sqrt());
        let mut rng = RngStream::from_seed(23);
        for _ in 0..5_000 {
            let x = sample_gaussian(&norm.c, &mut rng);
            let y = sample_gaussian(&norm.c, &mut rng);
            let ds = hs_norm(&x.sub(&y), &norm.c, norm.s).unwrap();
            let rho = semimetric_rho(&x, &y, &norm, &p).unwrap();
            assert!(ds <= factor * rho * (1.0 + 1e-10));
        }
    }
}
