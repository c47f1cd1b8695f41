//! Finite spectral truncations of a Hilbert space.
//!
//! States live in `R^N` expressed either as coefficients in a fixed
//! eigenbasis or as grid values of the underlying discretization. The
//! eigenbasis is always orthonormal with respect to the weighted inner
//! product of the ambient space, so in eigen coordinates every inner product
//! is a plain dot product and every diagonal operator acts coordinatewise.
//! Grid-value vectors carry the quadrature weight of the discrete inner
//! product instead.

use crate::error::{Error, Result};
use crate::rng::RngStream;
use serde::{Deserialize, Serialize};

/// Which coordinates a [`SpectralVector`] is expressed in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Representation {
    /// Coefficients in the eigenbasis, orthonormal for the weighted inner
    /// product: `<x, y> = sum_j x_j y_j`.
    Eigen,
    /// Values on the grid: `<x, y> = weight * sum_j x_j y_j`.
    Grid,
}

impl Representation {
    fn name(self) -> &'static str {
        match self {
            Representation::Eigen => "eigen",
            Representation::Grid => "grid",
        }
    }
}

/// A positive symmetric operator that is diagonal in the shared eigenbasis,
/// stored as its eigenvalue sequence in non-increasing order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralOperator {
    label: String,
    eigenvalues: Vec<f64>,
}

impl SpectralOperator {
    /// Build an operator, validating positivity and descending order.
    pub fn new(label: impl Into<String>, eigenvalues: Vec<f64>) -> Result<Self> {
        let label = label.into();
        if eigenvalues.is_empty() {
            return Err(Error::InvalidOperator {
                label,
                reason: "empty eigenvalue sequence".into(),
            });
        }
        for (j, &lam) in eigenvalues.iter().enumerate() {
            if !(lam > 0.0) || !lam.is_finite() {
                return Err(Error::InvalidOperator {
                    label,
                    reason: format!("eigenvalue {j} = {lam} is not a positive finite number"),
                });
            }
            if j > 0 && eigenvalues[j - 1] < lam {
                return Err(Error::InvalidOperator {
                    label,
                    reason: format!(
                        "eigenvalues not in descending order at index {j}: {} < {lam}",
                        eigenvalues[j - 1]
                    ),
                });
            }
        }
        Ok(SpectralOperator { label, eigenvalues })
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn eigenvalue(&self, j: usize) -> f64 {
        self.eigenvalues[j]
    }

    /// Apply the diagonal operator in eigen coordinates.
    pub fn apply(&self, x: &SpectralVector) -> Result<SpectralVector> {
        self.apply_power(1.0, x)
    }

    /// Apply a fractional power of the operator in eigen coordinates.
    pub fn apply_power(&self, power: f64, x: &SpectralVector) -> Result<SpectralVector> {
        expect_eigen(x)?;
        check_dim(self.dim(), x.len())?;
        let coeffs = self
            .eigenvalues
            .iter()
            .zip(x.coefficients())
            .map(|(&lam, &c)| pow_signed(lam, power) * c)
            .collect();
        Ok(SpectralVector {
            coefficients: coeffs,
            weight: x.weight,
            representation: Representation::Eigen,
        })
    }
}

fn pow_signed(lam: f64, p: f64) -> f64 {
    if p == 0.0 {
        1.0
    } else if p == 1.0 {
        lam
    } else if p == -1.0 {
        1.0 / lam
    } else {
        lam.powf(p)
    }
}

/// A state of the truncated space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralVector {
    coefficients: Vec<f64>,
    weight: f64,
    representation: Representation,
}

impl SpectralVector {
    /// Eigen-coordinate vector with unit ambient weight.
    pub fn eigen(coefficients: Vec<f64>) -> Self {
        SpectralVector {
            coefficients,
            weight: 1.0,
            representation: Representation::Eigen,
        }
    }

    /// Eigen-coordinate vector tagged with the ambient quadrature weight.
    pub fn eigen_with_weight(coefficients: Vec<f64>, weight: f64) -> Self {
        SpectralVector {
            coefficients,
            weight,
            representation: Representation::Eigen,
        }
    }

    /// Grid-value vector with its quadrature weight.
    pub fn grid(coefficients: Vec<f64>, weight: f64) -> Self {
        SpectralVector {
            coefficients,
            weight,
            representation: Representation::Grid,
        }
    }

    pub fn zeros_like(other: &SpectralVector) -> Self {
        SpectralVector {
            coefficients: vec![0.0; other.len()],
            weight: other.weight,
            representation: other.representation,
        }
    }

    pub fn len(&self) -> usize {
        self.coefficients.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coefficients.is_empty()
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coefficients
    }

    pub fn coefficients_mut(&mut self) -> &mut [f64] {
        &mut self.coefficients
    }

    pub fn into_coefficients(self) -> Vec<f64> {
        self.coefficients
    }

    pub fn weight(&self) -> f64 {
        self.weight
    }

    pub fn representation(&self) -> Representation {
        self.representation
    }

    /// Inner product of the ambient space: plain dot product in eigen
    /// coordinates, weighted dot product on grid values.
    pub fn ambient_inner(&self, other: &SpectralVector) -> Result<f64> {
        check_dim(self.len(), other.len())?;
        if self.representation != other.representation {
            return Err(Error::RepresentationMismatch {
                expected: self.representation.name(),
                got: other.representation.name(),
            });
        }
        let dot: f64 = self
            .coefficients
            .iter()
            .zip(&other.coefficients)
            .map(|(a, b)| a * b)
            .sum();
        Ok(match self.representation {
            Representation::Eigen => dot,
            Representation::Grid => self.weight * dot,
        })
    }

    pub fn ambient_norm(&self) -> f64 {
        self.ambient_inner(self).expect("same vector").sqrt()
    }

    /// x + a * y, keeping representation and weight.
    pub fn axpy(&mut self, a: f64, y: &SpectralVector) {
        debug_assert_eq!(self.len(), y.len());
        for (s, &t) in self.coefficients.iter_mut().zip(&y.coefficients) {
            *s += a * t;
        }
    }

    pub fn scale(&mut self, a: f64) {
        for c in &mut self.coefficients {
            *c *= a;
        }
    }

    pub fn sub(&self, other: &SpectralVector) -> SpectralVector {
        debug_assert_eq!(self.len(), other.len());
        let coefficients = self
            .coefficients
            .iter()
            .zip(&other.coefficients)
            .map(|(a, b)| a - b)
            .collect();
        SpectralVector {
            coefficients,
            weight: self.weight,
            representation: self.representation,
        }
    }

    pub fn add(&self, other: &SpectralVector) -> SpectralVector {
        debug_assert_eq!(self.len(), other.len());
        let coefficients = self
            .coefficients
            .iter()
            .zip(&other.coefficients)
            .map(|(a, b)| a + b)
            .collect();
        SpectralVector {
            coefficients,
            weight: self.weight,
            representation: self.representation,
        }
    }
}

/// Number of low modes in the low/high splitting.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModeSplit {
    n: usize,
}

impl ModeSplit {
    pub fn new(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::ModeSplitOutOfRange { n, dim: usize::MAX });
        }
        Ok(ModeSplit { n })
    }

    pub fn low_modes(&self) -> usize {
        self.n
    }

    pub fn validate(&self, dim: usize) -> Result<()> {
        if self.n < 1 || self.n > dim {
            return Err(Error::ModeSplitOutOfRange { n: self.n, dim });
        }
        Ok(())
    }
}

/// Regularity index of the norm family; must be < 1 so the reference
/// Gaussian lives on the space.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SobolevIndex {
    s: f64,
}

impl SobolevIndex {
    pub fn new(s: f64) -> Result<Self> {
        if !(s < 1.0) {
            return Err(Error::InvalidSobolevIndex(s));
        }
        Ok(SobolevIndex { s })
    }

    pub fn value(&self) -> f64 {
        self.s
    }
}

impl Default for SobolevIndex {
    /// The plain ambient norm.
    fn default() -> Self {
        SobolevIndex { s: 0.0 }
    }
}

/// Fractional inner product `sum_j lambda_j^(-s) x_j y_j` in eigen
/// coordinates.
pub fn hs_inner(
    x: &SpectralVector,
    y: &SpectralVector,
    c: &SpectralOperator,
    s: SobolevIndex,
) -> Result<f64> {
    hs_inner_raw(x, y, c, s.value())
}

/// Same as [`hs_inner`] for an arbitrary real exponent. The norm family is
/// defined for every `s`; the `s < 1` restriction of [`SobolevIndex`] only
/// matters where a Gaussian measure must live on the space.
pub fn hs_inner_raw(
    x: &SpectralVector,
    y: &SpectralVector,
    c: &SpectralOperator,
    sv: f64,
) -> Result<f64> {
    expect_eigen(x)?;
    expect_eigen(y)?;
    check_dim(c.dim(), x.len())?;
    check_dim(x.len(), y.len())?;
    if sv == 0.0 {
        return Ok(x
            .coefficients
            .iter()
            .zip(&y.coefficients)
            .map(|(a, b)| a * b)
            .sum());
    }
    Ok(c.eigenvalues()
        .iter()
        .zip(x.coefficients.iter().zip(&y.coefficients))
        .map(|(&lam, (a, b))| pow_signed(lam, -sv) * a * b)
        .sum())
}

/// Fractional norm `hs_inner(x, x)^(1/2)`.
pub fn hs_norm(x: &SpectralVector, c: &SpectralOperator, s: SobolevIndex) -> Result<f64> {
    Ok(hs_inner(x, x, c, s)?.sqrt())
}

/// Draw from the centered Gaussian with the given covariance operator:
/// independent modes with variance equal to the eigenvalues.
pub fn sample_gaussian(c_tilde: &SpectralOperator, rng: &mut RngStream) -> SpectralVector {
    let coefficients = c_tilde
        .eigenvalues()
        .iter()
        .map(|&lam| lam.sqrt() * rng.standard_normal())
        .collect();
    SpectralVector::eigen(coefficients)
}

/// `trace(C_tilde C^(-s)) = sum_j tilde_lambda_j lambda_j^(-s)` over the
/// truncation.
pub fn weighted_trace(
    c_tilde: &SpectralOperator,
    c: &SpectralOperator,
    s: SobolevIndex,
) -> Result<f64> {
    check_dim(c.dim(), c_tilde.dim())?;
    let sv = s.value();
    Ok(c_tilde
        .eigenvalues()
        .iter()
        .zip(c.eigenvalues())
        .map(|(&tl, &lam)| tl * pow_signed(lam, -sv))
        .sum())
}

/// Orthogonal projections onto the first `n` modes and their complement.
/// Both parts keep full length (zero padded) so they remain valid states.
pub fn split(x: &SpectralVector, split: &ModeSplit) -> Result<(SpectralVector, SpectralVector)> {
    expect_eigen(x)?;
    split.validate(x.len())?;
    let n = split.low_modes();
    let mut low = SpectralVector::zeros_like(x);
    let mut high = SpectralVector::zeros_like(x);
    low.coefficients[..n].copy_from_slice(&x.coefficients[..n]);
    high.coefficients[n..].copy_from_slice(&x.coefficients[n..]);
    Ok((low, high))
}

fn expect_eigen(x: &SpectralVector) -> Result<()> {
    if x.representation != Representation::Eigen {
        return Err(Error::RepresentationMismatch {
            expected: "eigen",
            got: x.representation.name(),
        });
    }
    Ok(())
}

fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::DimensionMismatch { expected, got });
    }
    Ok(())
}

pub mod json {
    //! JSON documents for operators and vectors.
    //!
    //! Floating point entries are emitted either as plain JSON numbers or,
    //! with [`FloatEncoding::Hex`], as `"0x..."` strings holding the IEEE-754
    //! bit pattern, which round-trips every double bit-exactly.

    use super::*;
    use serde_json::{json, Map, Value};

    #[derive(Debug, Clone, Copy, PartialEq, Eq)]
    pub enum FloatEncoding {
        Decimal,
        Hex,
    }

    fn encode_f64(x: f64, enc: FloatEncoding) -> Value {
        match enc {
            FloatEncoding::Decimal => json!(x),
            FloatEncoding::Hex => Value::String(format!("0x{:016x}", x.to_bits())),
        }
    }

    fn decode_f64(v: &Value) -> Result<f64> {
        match v {
            Value::Number(n) => n
                .as_f64()
                .ok_or_else(|| Error::Serialization(format!("bad number {n}"))),
            Value::String(s) => {
                let hex = s
                    .strip_prefix("0x")
                    .ok_or_else(|| Error::Serialization(format!("bad float string {s:?}")))?;
                let bits = u64::from_str_radix(hex, 16)
                    .map_err(|e| Error::Serialization(format!("bad hex float {s:?}: {e}")))?;
                Ok(f64::from_bits(bits))
            }
            other => Err(Error::Serialization(format!("bad float value {other}"))),
        }
    }

    fn encode_array(xs: &[f64], enc: FloatEncoding) -> Value {
        Value::Array(xs.iter().map(|&x| encode_f64(x, enc)).collect())
    }

    fn decode_array(v: &Value, field: &str) -> Result<Vec<f64>> {
        v.as_array()
            .ok_or_else(|| Error::Serialization(format!("field {field} is not an array")))?
            .iter()
            .map(decode_f64)
            .collect()
    }

    pub fn operator_to_json(op: &SpectralOperator, enc: FloatEncoding) -> String {
        let mut doc = Map::new();
        doc.insert("label".into(), json!(op.label()));
        doc.insert("eigenvalues".into(), encode_array(op.eigenvalues(), enc));
        Value::Object(doc).to_string()
    }

    pub fn operator_from_json(text: &str) -> Result<SpectralOperator> {
        let v: Value =
            serde_json::from_str(text).map_err(|e| Error::Serialization(e.to_string()))?;
        let label = v["label"]
            .as_str()
            .ok_or_else(|| Error::Serialization("missing label".into()))?
            .to_string();
        let eigenvalues = decode_array(&v["eigenvalues"], "eigenvalues")?;
        SpectralOperator::new(label, eigenvalues)
    }

    pub fn vector_to_json(x: &SpectralVector, enc: FloatEncoding) -> String {
        let mut doc = Map::new();
        doc.insert("coefficients".into(), encode_array(x.coefficients(), enc));
        doc.insert("weight".into(), encode_f64(x.weight(), enc));
        doc.insert("representation".into(), json!(x.representation().name()));
        Value::Object(doc).to_string()
    }

    pub fn vector_from_json(text: &str) -> Result<SpectralVector> {
        let v: Value =
            serde_json::from_str(text).map_err(|e| Error::Serialization(e.to_string()))?;
        let coefficients = decode_array(&v["coefficients"], "coefficients")?;
        let weight = decode_f64(&v["weight"])?;
        let representation = match v["representation"].as_str() {
            Some("eigen") => Representation::Eigen,
            Some("grid") => Representation::Grid,
            other => {
                return Err(Error::Serialization(format!(
                    "bad representation {other:?}"
                )))
            }
        };
        Ok(match representation {
            Representation::Eigen => SpectralVector::eigen_with_weight(coefficients, weight),
            Representation::Grid => SpectralVector::grid(coefficients, weight),
        })
    }
}
