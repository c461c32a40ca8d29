/// Sample mean, unbiased variance and standard error of the mean.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Summary {
    pub n: usize,
    pub mean: f64,
    pub var: f64,
    pub se: f64,
}

pub fn summarize(xs: &[f64]) -> Summary {
    let n = xs.len();
    if n == 0 {
        return Summary {
            n,
            mean: f64::NAN,
            var: f64::NAN,
            se: f64::NAN,
        };
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    let var = if n > 1 {
        xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64
    } else {
        0.0
    };
    Summary {
        n,
        mean,
        var,
        se: (var / n as f64).sqrt(),
    }
}

/// `(estimate − target)/se`, with the degenerate `se = 0` case mapped to
/// 0 for exact agreement and ±∞ otherwise.
pub fn z_score(estimate: f64, target: f64, se: f64) -> f64 {
    let diff = estimate - target;
    if se > 0.0 {
        diff / se
    } else if diff.abs() <= 1e-12 * (1.0 + target.abs()) {
        0.0
    } else {
        diff.signum() * f64::INFINITY
    }
}

/// Weighted least-squares fit `y = a + s·x` with weights `1/se²`;
/// returns `(s, se(s))`.
pub fn weighted_slope(x: &[f64], y: &[f64], se: &[f64]) -> (f64, f64) {
    let w: Vec<f64> = se.iter().map(|s| if *s > 0.0 { 1.0 / (s * s) } else { 1e12 }).collect();
    let sw: f64 = w.iter().sum();
    let xbar = w.iter().zip(x).map(|(w, x)| w * x).sum::<f64>() / sw;
    let ybar = w.iter().zip(y).map(|(w, y)| w * y).sum::<f64>() / sw;
    let sxx: f64 = w.iter().zip(x).map(|(w, x)| w * (x - xbar).powi(2)).sum();
    let sxy: f64 = w
        .iter()
        .zip(x.iter().zip(y))
        .map(|(w, (x, y))| w * (x - xbar) * (y - ybar))
        .sum();
    (sxy / sxx, (1.0 / sxx).sqrt())
}
