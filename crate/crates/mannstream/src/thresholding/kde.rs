//! One-dimensional Gaussian kernel density estimation.

/// Gaussian KDE over a fixed sample set.
///
/// Bandwidth comes from Silverman's rule with a floor that keeps degenerate
/// (zero-variance or tiny) sample sets usable. An empty estimator has
/// density zero everywhere.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianKde {
    points: Vec<f64>,
    bandwidth: f64,
}

const SQRT_TWO_PI: f64 = 2.5066282746310002;

/// Silverman's rule of thumb, `1.06 * sigma * n^(-1/5)`, floored at
/// `1e-6 * (1 + |mean|)` so repeated identical samples still produce a
/// finite density.
pub fn silverman_bandwidth(samples: &[f64]) -> f64 {
    let n = samples.len();
    let mean = if n == 0 {
        0.0
    } else {
        samples.iter().sum::<f64>() / n as f64
    };
    let floor = 1e-6 * (1.0 + mean.abs());
    if n < 2 {
        return floor;
    }
    let var = samples.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n as f64 - 1.0);
    let sigma = var.sqrt();
    let bw = 1.06 * sigma * (n as f64).powf(-0.2);
    bw.max(floor)
}

impl GaussianKde {
    /// Fits the estimator to `samples` as given (callers sort first when
    /// they need order-independent summation).
    pub fn fit(samples: &[f64]) -> Self {
        GaussianKde {
            bandwidth: silverman_bandwidth(samples),
            points: samples.to_vec(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn bandwidth(&self) -> f64 {
        self.bandwidth
    }

    /// Density estimate at `x`; zero for an empty sample set.
    pub fn density(&self, x: f64) -> f64 {
        if self.points.is_empty() {
            return 0.0;
        }
        let h = self.bandwidth;
        let mut sum = 0.0;
        for &p in &self.points {
            let u = (x - p) / h;
            sum += (-0.5 * u * u).exp();
        }
        sum / (self.points.len() as f64 * h * SQRT_TWO_PI)
    }
}
