//! Running per-dimension observation statistics.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};

/// Variance floor, also added inside the square root when normalizing.
pub const VAR_EPS: f64 = 1e-8;
/// Normalized observations are clamped to `[-CLIP, CLIP]`.
pub const CLIP: f64 = 5.0;

#[derive(Debug, Clone, PartialEq)]
pub struct RunningNorm {
    mean: Array1<f64>,
    var: Array1<f64>,
    count: f64,
}

impl RunningNorm {
    /// Fresh statistics: zero mean, unit variance, no samples.
    pub fn new(dim: usize) -> Self {
        Self {
            mean: Array1::zeros(dim),
            var: Array1::ones(dim),
            count: 0.0,
        }
    }

    /// Restores saved statistics; variances are floored at [`VAR_EPS`].
    pub fn from_parts(mean: Array1<f64>, var: Array1<f64>, count: f64) -> Self {
        assert_eq!(mean.len(), var.len());
        Self {
            mean,
            var: var.mapv(|v| v.max(VAR_EPS)),
            count,
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> ArrayView1<'_, f64> {
        self.mean.view()
    }

    pub fn var(&self) -> ArrayView1<'_, f64> {
        self.var.view()
    }

    pub fn count(&self) -> f64 {
        self.count
    }

    /// Count-weighted merge of a batch (rows are samples) into the statistics.
    pub fn update(&mut self, batch: ArrayView2<f64>) {
        let n = batch.nrows() as f64;
        if n == 0.0 {
            return;
        }
        let b_mean = batch.mean_axis(Axis(0)).expect("non-empty batch");
        let b_var = batch.var_axis(Axis(0), 0.0);
        if self.count == 0.0 {
            self.mean = b_mean;
            self.var = b_var.mapv(|v| v.max(VAR_EPS));
            self.count = n;
            return;
        }
        let total = self.count + n;
        let delta = &b_mean - &self.mean;
        let m2 = &self.var * self.count + &b_var * n + &delta * &delta * (self.count * n / total);
        self.mean = &self.mean + &delta * (n / total);
        self.var = (m2 / total).mapv(|v| v.max(VAR_EPS));
        self.count = total;
    }

    pub fn normalize_row(&self, obs: &[f64]) -> Vec<f64> {
        obs.iter()
            .zip(self.mean.iter().zip(&self.var))
            .map(|(&o, (&m, &v))| ((o - m) / (v + VAR_EPS).sqrt()).clamp(-CLIP, CLIP))
            .collect()
    }

    pub fn normalize(&self, batch: ArrayView2<f64>) -> Array2<f64> {
        let scale = self.var.mapv(|v| 1.0 / (v + VAR_EPS).sqrt());
        let mut out = &batch - &self.mean;
        out *= &scale;
        out.mapv_inplace(|v| v.clamp(-CLIP, CLIP));
        out
    }
}
