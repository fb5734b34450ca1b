//! Deterministic reductions for Monte-Carlo output.

/// Pairwise (cascade) summation. The reduction tree depends only on the
/// slice length, so the result is bit-identical across runs.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    const BLOCK: usize = 64;
    if xs.len() <= BLOCK {
        return xs.iter().sum();
    }
    let mid = xs.len() / 2;
    pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
}

/// Sample mean and standard error of the mean.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeanSe {
    pub mean: f64,
    pub se: f64,
    pub count: usize,
}

impl MeanSe {
    pub fn from_samples(xs: &[f64]) -> Self {
        let n = xs.len();
        if n == 0 {
            return Self { mean: f64::NAN, se: f64::NAN, count: 0 };
        }
        let mean = pairwise_sum(xs) / n as f64;
        if n == 1 {
            return Self { mean, se: 0.0, count: 1 };
        }
        let dev: Vec<f64> = xs.iter().map(|x| (x - mean) * (x - mean)).collect();
        let var = pairwise_sum(&dev) / (n - 1) as f64;
        Self { mean, se: (var / n as f64).sqrt(), count: n }
    }
}

/// Standard error of the difference of two independent estimates.
pub fn pooled_se(a: f64, b: f64) -> f64 {
    (a * a + b * b).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pairwise_matches_naive_on_integers() {
        let xs: Vec<f64> = (0..1000).map(|i| i as f64).collect();
        assert_eq!(pairwise_sum(&xs), 499_500.0);
    }

    #[test]
    fn mean_se_of_constant() {
        let m = MeanSe::from_samples(&[2.0; 10]);
        assert_eq!(m.mean, 2.0);
        assert_eq!(m.se, 0.0);
    }

    #[test]
    fn mean_se_known_values() {
        let m = MeanSe::from_samples(&[1.0, 2.0, 3.0, 4.0]);
        assert!((m.mean - 2.5).abs() < 1e-15);
        // sample variance 5/3, se = sqrt(5/12)
        assert!((m.se - (5.0f64 / 12.0).sqrt()).abs() < 1e-15);
    }
}
