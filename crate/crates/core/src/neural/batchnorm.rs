use ndarray::{Array1, Array2, Axis};

use super::Mode;
use crate::error::{shape_err, Error, Result};

/// Per-feature batch normalization with learned scale and shift.
#[derive(Clone, Debug, PartialEq)]
pub struct BatchNormLayer {
    pub scale: Array1<f64>,
    pub shift: Array1<f64>,
    pub running_mean: Array1<f64>,
    pub running_var: Array1<f64>,
    pub momentum: f64,
    pub epsilon: f64,
}

/// Values kept from a training-mode forward pass.
#[derive(Clone, Debug)]
pub(crate) struct BatchNormCache {
    normalized: Array2<f64>,
    inv_std: Array1<f64>,
}

impl BatchNormLayer {
    pub fn new(dim: usize) -> Self {
        BatchNormLayer {
            scale: Array1::ones(dim),
            shift: Array1::zeros(dim),
            running_mean: Array1::zeros(dim),
            running_var: Array1::ones(dim),
            momentum: 0.1,
            epsilon: 1e-5,
        }
    }

    pub fn dim(&self) -> usize {
        self.scale.len()
    }

    fn check(&self, batch: &Array2<f64>) -> Result<()> {
        if batch.ncols() != self.dim() {
            return Err(shape_err(format!("{} features", self.dim()), batch.ncols()));
        }
        Ok(())
    }

    /// Normalizes with batch statistics and folds them into the running
    /// estimates (the running variance uses the unbiased batch variance).
    pub(crate) fn forward_train(
        &mut self,
        batch: &Array2<f64>,
    ) -> Result<(Array2<f64>, BatchNormCache)> {
        self.check(batch)?;
        let n = batch.nrows();
        if n < 2 {
            return Err(Error::BatchTooSmall(n));
        }
        let mean = batch.mean_axis(Axis(0)).expect("non-empty batch");
        let centered = batch - &mean;
        let var = centered.mapv(|v| v * v).sum_axis(Axis(0)) / n as f64;
        let inv_std = var.mapv(|v| 1.0 / (v + self.epsilon).sqrt());
        let normalized = &centered * &inv_std;
        let out = &normalized * &self.scale + &self.shift;

        let m = self.momentum;
        let unbiased = &var * (n as f64 / (n as f64 - 1.0));
        self.running_mean = &self.running_mean * (1.0 - m) + &mean * m;
        self.running_var = &self.running_var * (1.0 - m) + &unbiased * m;
        Ok((
            out,
            BatchNormCache {
                normalized,
                inv_std,
            },
        ))
    }

    pub fn forward_eval(&self, batch: &Array2<f64>) -> Result<Array2<f64>> {
        self.check(batch)?;
        let inv_std = self.running_var.mapv(|v| 1.0 / (v + self.epsilon).sqrt());
        Ok((batch - &self.running_mean) * &inv_std * &self.scale + &self.shift)
    }

    /// Returns `(d_scale, d_shift, dx)`.
    pub(crate) fn backward(
        &self,
        cache: &BatchNormCache,
        grad_out: &Array2<f64>,
    ) -> (Array1<f64>, Array1<f64>, Array2<f64>) {
        let n = grad_out.nrows() as f64;
        let d_shift = grad_out.sum_axis(Axis(0));
        let d_scale = (grad_out * &cache.normalized).sum_axis(Axis(0));
        let d_norm = grad_out * &self.scale;
        let sum_d = d_norm.sum_axis(Axis(0));
        let sum_dx = (&d_norm * &cache.normalized).sum_axis(Axis(0));
        let dx = (&d_norm * n - &sum_d - &cache.normalized * &sum_dx) * &cache.inv_std / n;
        (d_scale, d_shift, dx)
    }
}

pub fn batchnorm_forward(
    layer: &mut BatchNormLayer,
    batch: &Array2<f64>,
    mode: Mode,
) -> Result<Array2<f64>> {
    match mode {
        Mode::Train => layer.forward_train(batch).map(|(y, _)| y),
        Mode::Eval => layer.forward_eval(batch),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::{Rng, SeedableRng};

    #[test]
    fn standardized_batch_passes_through() {
        let mut bn = BatchNormLayer::new(2);
        let x = array![[1.0, -1.0], [-1.0, 1.0]];
        let y = batchnorm_forward(&mut bn, &x, Mode::Train).unwrap();
        let shrink = 1.0 / (1.0f64 + 1e-5).sqrt();
        for (a, b) in y.iter().zip(x.iter()) {
            assert!((a - b * shrink).abs() < 1e-15);
        }
    }

    #[test]
    fn zero_scale_gives_constant_shift() {
        let mut bn = BatchNormLayer::new(3);
        bn.scale.fill(0.0);
        bn.shift = array![0.5, -2.0, 7.0];
        let x = array![[1.0, 2.0, 3.0], [4.0, -5.0, 6.0], [0.0, 0.0, 1.0]];
        for mode in [Mode::Train, Mode::Eval] {
            let y = batchnorm_forward(&mut bn, &x, mode).unwrap();
            for row in y.rows() {
                assert_eq!(row.to_vec(), vec![0.5, -2.0, 7.0]);
            }
        }
    }

    #[test]
    fn train_output_is_standardized() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        let x = Array2::from_shape_simple_fn((64, 5), || rng.random_range(-3.0..7.0));
        let mut bn = BatchNormLayer::new(5);
        let y = batchnorm_forward(&mut bn, &x, Mode::Train).unwrap();
        for col in y.columns() {
            let mean = col.sum() / 64.0;
            let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 64.0;
            assert!(mean.abs() < 1e-12);
            assert!((var - 1.0).abs() < 1e-3);
        }
    }

    #[test]
    fn running_statistics_update_with_momentum() {
        let mut bn = BatchNormLayer::new(1);
        let x = array![[1.0], [3.0]];
        batchnorm_forward(&mut bn, &x, Mode::Train).unwrap();
        assert!((bn.running_mean[0] - 0.2).abs() < 1e-15);
        // unbiased variance of {1, 3} is 2
        assert!((bn.running_var[0] - (0.9 + 0.2)).abs() < 1e-15);
    }

    #[test]
    fn eval_mode_does_not_mutate() {
        let mut bn = BatchNormLayer::new(2);
        bn.running_mean = array![0.3, -0.1];
        bn.running_var = array![2.0, 0.5];
        let before = bn.clone();
        let x = array![[1.0, 2.0]];
        let a = batchnorm_forward(&mut bn, &x, Mode::Eval).unwrap();
        let b = batchnorm_forward(&mut bn, &x, Mode::Eval).unwrap();
        assert_eq!(a, b);
        assert_eq!(bn, before);
    }

    #[test]
    fn train_mode_rejects_single_row() {
        let mut bn = BatchNormLayer::new(2);
        let err = batchnorm_forward(&mut bn, &array![[1.0, 2.0]], Mode::Train).unwrap_err();
        assert!(matches!(err, Error::BatchTooSmall(1)));
    }
}
