use ndarray::{Array, ArrayBase, Data, Dimension};

pub const DEFAULT_LEAKY_SLOPE: f64 = 0.01;

/// Elementwise `max(x, slope·x)`.
pub fn leaky_relu<S, D>(x: &ArrayBase<S, D>, slope: f64) -> Array<f64, D>
where
    S: Data<Elem = f64>,
    D: Dimension,
{
    x.mapv(|v| if v >= 0.0 { v } else { slope * v })
}

pub(crate) fn leaky_relu_backward<D: Dimension>(
    input: &Array<f64, D>,
    grad_out: &Array<f64, D>,
    slope: f64,
) -> Array<f64, D> {
    let mut g = grad_out.clone();
    g.zip_mut_with(input, |g, &x| {
        if x < 0.0 {
            *g *= slope
        }
    });
    g
}
