//! Small statistical helpers used by tests, experiments and diagnostics.

/// Running mean/variance accumulator (Welford).
#[derive(Debug, Clone, Default)]
pub struct RunningMoments {
    n: u64,
    mean: f64,
    m2: f64,
}

impl RunningMoments {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, x: f64) {
        self.n += 1;
        let delta = x - self.mean;
        self.mean += delta / self.n as f64;
        self.m2 += delta * (x - self.mean);
    }

    pub fn count(&self) -> u64 {
        self.n
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// Unbiased sample variance.
    pub fn variance(&self) -> f64 {
        if self.n < 2 {
            0.0
        } else {
            self.m2 / (self.n - 1) as f64
        }
    }

    /// Standard error of the mean.
    pub fn standard_error(&self) -> f64 {
        if self.n < 2 {
            f64::INFINITY
        } else {
            (self.variance() / self.n as f64).sqrt()
        }
    }
}

/// Per-coordinate running moments.
#[derive(Debug, Clone)]
pub struct VectorMoments {
    coords: Vec<RunningMoments>,
}

impl VectorMoments {
    pub fn new(dim: usize) -> Self {
        VectorMoments {
            coords: vec![RunningMoments::new(); dim],
        }
    }

    pub fn push(&mut self, x: &[f64]) {
        assert_eq!(x.len(), self.coords.len());
        for (acc, &v) in self.coords.iter_mut().zip(x) {
            acc.push(v);
        }
    }

    pub fn means(&self) -> Vec<f64> {
        self.coords.iter().map(|c| c.mean()).collect()
    }

    pub fn variances(&self) -> Vec<f64> {
        self.coords.iter().map(|c| c.variance()).collect()
    }

    pub fn count(&self) -> u64 {
        self.coords.first().map_or(0, |c| c.count())
    }
}

/// Mean and standard error of a sample.
pub fn mean_and_se(xs: &[f64]) -> (f64, f64) {
    let mut acc = RunningMoments::new();
    for &x in xs {
        acc.push(x);
    }
    (acc.mean(), acc.standard_error())
}

/// Median of a sample (averaging the middle pair for even lengths).
pub fn median(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    let mut v = xs.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Standard normal cumulative distribution function.
pub fn standard_normal_cdf(x: f64) -> f64 {
    0.5 * (1.0 + libm::erf(x / std::f64::consts::SQRT_2))
}

/// Two-sample Kolmogorov-Smirnov statistic sup_t |F_a(t) - F_b(t)|.
pub fn two_sample_ks(a: &[f64], b: &[f64]) -> f64 {
    assert!(!a.is_empty() && !b.is_empty());
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(|x, y| x.total_cmp(y));
    b.sort_by(|x, y| x.total_cmp(y));
    let (mut i, mut j) = (0usize, 0usize);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let mut d: f64 = 0.0;
    while i < a.len() && j < b.len() {
        // advance both pointers past the current value so ties are handled
        let v = a[i].min(b[j]);
        while i < a.len() && a[i] <= v {
            i += 1;
        }
        while j < b.len() && b[j] <= v {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    d
}

/// Critical value of the two-sample KS statistic at significance `alpha`.
pub fn ks_critical_value(alpha: f64, n: usize, m: usize) -> f64 {
    let c = (-0.5 * (alpha / 2.0).ln()).sqrt();
    c * ((n + m) as f64 / (n as f64 * m as f64)).sqrt()
}

/// Exact L1 optimal transport distance between two equal-size one-dimensional
/// samples: mean absolute difference of sorted values. Used as a per-mode
/// sanity check only.
pub fn sorted_sample_distance(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(|x, y| x.total_cmp(y));
    b.sort_by(|x, y| x.total_cmp(y));
    a.iter().zip(&b).map(|(x, y)| (x - y).abs()).sum::<f64>() / a.len() as f64
}
