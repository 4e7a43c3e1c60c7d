use serde::{Deserialize, Serialize};

const CLIP: f64 = 10.0;
const EPS: f64 = 1e-8;

/// Running per-component mean/variance (Welford).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunningNormalizer {
    pub count: u64,
    pub mean: Vec<f64>,
    pub m2: Vec<f64>,
}

impl RunningNormalizer {
    pub fn new(dim: usize) -> Self {
        Self { count: 0, mean: vec![0.0; dim], m2: vec![0.0; dim] }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn update(&mut self, x: &[f64]) {
        self.count += 1;
        let n = self.count as f64;
        for ((m, s), &v) in self.mean.iter_mut().zip(self.m2.iter_mut()).zip(x) {
            let d = v - *m;
            *m += d / n;
            *s += d * (v - *m);
        }
    }

    pub fn variance(&self) -> Vec<f64> {
        if self.count < 2 {
            return vec![1.0; self.dim()];
        }
        self.m2.iter().map(|s| s / self.count as f64).collect()
    }

    /// Standardized copy of `x`, clipped to ±10.
    pub fn normalize(&self, x: &[f64]) -> Vec<f64> {
        let var = self.variance();
        x.iter()
            .zip(&self.mean)
            .zip(&var)
            .map(|((v, m), s)| ((v - m) / (s + EPS).sqrt()).clamp(-CLIP, CLIP))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matches_two_pass_moments() {
        let data = [[1.0, 10.0], [2.0, 30.0], [4.0, 20.0], [7.0, -5.0]];
        let mut n = RunningNormalizer::new(2);
        data.iter().for_each(|x| n.update(x));
        for d in 0..2 {
            let mean = data.iter().map(|x| x[d]).sum::<f64>() / 4.0;
            let var = data.iter().map(|x| (x[d] - mean).powi(2)).sum::<f64>() / 4.0;
            assert!((n.mean[d] - mean).abs() < 1e-12);
            assert!((n.variance()[d] - var).abs() < 1e-12);
        }
    }

    #[test]
    fn fresh_normalizer_is_identity() {
        let n = RunningNormalizer::new(3);
        let y = n.normalize(&[0.5, -2.0, 3.0]);
        assert!(y.iter().zip([0.5, -2.0, 3.0]).all(|(a, b)| (a - b).abs() < 1e-7));
    }
}
