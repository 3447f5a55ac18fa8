use crate::error::{shape_err, Error, Result};

/// Adam moment accumulators and hyperparameters.
///
/// Accumulators are created lazily on the first step so they mirror whatever
/// parameter list the caller passes in.
#[derive(Clone, Debug, PartialEq)]
pub struct OptimizerState {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step: u64,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
}

impl OptimizerState {
    pub fn new(learning_rate: f64) -> Self {
        OptimizerState {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            first: Vec::new(),
            second: Vec::new(),
        }
    }

    pub fn first_moments(&self) -> &[Vec<f64>] {
        &self.first
    }

    pub fn second_moments(&self) -> &[Vec<f64>] {
        &self.second
    }
}

/// One bias-corrected Adam update.
///
/// All gradients are checked before any parameter moves, so a non-finite
/// gradient leaves both parameters and state untouched.
pub fn adam_step(
    state: &mut OptimizerState,
    params: &mut [&mut [f64]],
    grads: &[Vec<f64>],
    names: &[String],
) -> Result<()> {
    if params.len() != grads.len() {
        return Err(shape_err(
            format!("{} gradient tensors", params.len()),
            grads.len(),
        ));
    }
    for (k, (p, g)) in params.iter().zip(grads).enumerate() {
        if p.len() != g.len() {
            return Err(shape_err(
                format!("gradient of length {} for tensor {k}", p.len()),
                g.len(),
            ));
        }
        if g.iter().any(|v| !v.is_finite()) {
            let name = names.get(k).cloned().unwrap_or_else(|| format!("#{k}"));
            return Err(Error::NonFiniteGradient(name));
        }
    }
    if state.first.is_empty() {
        state.first = params.iter().map(|p| vec![0.0; p.len()]).collect();
        state.second = state.first.clone();
    } else if state.first.len() != params.len()
        || state
            .first
            .iter()
            .zip(params.iter())
            .any(|(m, p)| m.len() != p.len())
    {
        return Err(shape_err(
            "parameters matching optimizer state",
            "different layout",
        ));
    }

    state.step += 1;
    let t = state.step as i32;
    let (b1, b2) = (state.beta1, state.beta2);
    let c1 = 1.0 - b1.powi(t);
    let c2 = 1.0 - b2.powi(t);
    let lr = state.learning_rate;
    for ((p, g), (m, v)) in params
        .iter_mut()
        .zip(grads)
        .zip(state.first.iter_mut().zip(state.second.iter_mut()))
    {
        for i in 0..p.len() {
            m[i] = b1 * m[i] + (1.0 - b1) * g[i];
            v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
            let m_hat = m[i] / c1;
            let v_hat = v[i] / c2;
            p[i] -= lr * m_hat / (v_hat.sqrt() + state.eps);
        }
    }
    Ok(())
}
