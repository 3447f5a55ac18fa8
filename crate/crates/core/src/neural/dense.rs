use ndarray::{Array1, Array2, Axis};
use rand::Rng;

use crate::error::{shape_err, Result};

/// Fully connected layer, `y = x·Wᵀ + b` with `W` stored `out × in`.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseLayer {
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
}

impl DenseLayer {
    /// Glorot-uniform weights in `±√(6/(fan_in+fan_out))`, zero bias.
    pub fn new<R: Rng + ?Sized>(input: usize, output: usize, rng: &mut R) -> Self {
        let limit = (6.0 / (input + output) as f64).sqrt();
        let weights =
            Array2::from_shape_simple_fn((output, input), || rng.random_range(-limit..=limit));
        DenseLayer {
            weights,
            bias: Array1::zeros(output),
        }
    }

    pub fn zeros(input: usize, output: usize) -> Self {
        DenseLayer {
            weights: Array2::zeros((output, input)),
            bias: Array1::zeros(output),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.weights.ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.weights.nrows()
    }

    pub fn forward(&self, batch: &Array2<f64>) -> Result<Array2<f64>> {
        if batch.ncols() != self.input_dim() {
            return Err(shape_err(
                format!("{} input columns", self.input_dim()),
                batch.ncols(),
            ));
        }
        Ok(batch.dot(&self.weights.t()) + &self.bias)
    }

    /// Returns `(dW, db, dx)` for upstream gradient `grad_out`.
    pub fn backward(
        &self,
        input: &Array2<f64>,
        grad_out: &Array2<f64>,
    ) -> (Array2<f64>, Array1<f64>, Array2<f64>) {
        let dw = grad_out.t().dot(input);
        let db = grad_out.sum_axis(Axis(0));
        let dx = grad_out.dot(&self.weights);
        (dw, db, dx)
    }
}

pub fn dense_forward(layer: &DenseLayer, batch: &Array2<f64>) -> Result<Array2<f64>> {
    layer.forward(batch)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::SeedableRng;

    #[test]
    fn identity_and_bias_only() {
        let mut l = DenseLayer::zeros(3, 3);
        l.weights = Array2::eye(3);
        let x = array![[1.0, -2.0, 3.0], [0.5, 0.0, -1.0]];
        assert_eq!(l.forward(&x).unwrap(), x);

        let mut l = DenseLayer::zeros(3, 2);
        l.bias = array![0.25, -4.0];
        let y = l.forward(&x).unwrap();
        for row in y.rows() {
            assert_eq!(row.to_vec(), vec![0.25, -4.0]);
        }
    }

    #[test]
    fn matches_scalar_dot_products() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let mut l = DenseLayer::new(4, 3, &mut rng);
        l.bias = Array1::from_shape_simple_fn(3, || rng.random_range(-1.0..1.0));
        let x = Array2::from_shape_simple_fn((2, 4), || rng.random_range(-1.0..1.0));
        let y = l.forward(&x).unwrap();
        for b in 0..2 {
            for o in 0..3 {
                let mut acc = l.bias[o];
                for i in 0..4 {
                    acc += x[[b, i]] * l.weights[[o, i]];
                }
                assert!((acc - y[[b, o]]).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn init_respects_glorot_bound() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
        let l = DenseLayer::new(30, 10, &mut rng);
        let limit = (6.0f64 / 40.0).sqrt();
        assert!(l.weights.iter().all(|w| w.abs() <= limit));
        assert!(l.bias.iter().all(|&b| b == 0.0));
    }

    #[test]
    fn width_mismatch_is_an_error() {
        let l = DenseLayer::zeros(3, 2);
        assert!(l.forward(&Array2::zeros((2, 4))).is_err());
    }

    #[test]
    fn squared_error_gradient_closed_form() {
        // L = (1/B) Σ ‖x·Wᵀ − t‖²  =>  dL/dW = 2·errᵀ·x / B
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let l = DenseLayer::new(4, 2, &mut rng);
        let x = Array2::from_shape_simple_fn((5, 4), || rng.random_range(-1.0..1.0));
        let t = Array2::from_shape_simple_fn((5, 2), || rng.random_range(-1.0..1.0));
        let err = l.forward(&x).unwrap() - &t;
        let (dw, db, _) = l.backward(&x, &(&err * (2.0 / 5.0)));
        let expected = err.t().dot(&x) * (2.0 / 5.0);
        for (a, b) in dw.iter().zip(expected.iter()) {
            assert!((a - b).abs() < 1e-14);
        }
        let expected_db = err.sum_axis(Axis(0)) * (2.0 / 5.0);
        for (a, b) in db.iter().zip(expected_db.iter()) {
            assert!((a - b).abs() < 1e-14);
        }
    }
}
