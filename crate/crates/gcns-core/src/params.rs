//! Flat, named collection of every trainable tensor plus Adam state.

use rand::Rng;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
    pub trainable: bool,
    /// Included in the L2 penalty (conv theta/bias, FC weights/biases;
    /// batch-norm scale/shift and running stats are not).
    pub regularized: bool,
}

impl Tensor {
    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParameterSet {
    pub tensors: Vec<Tensor>,
    /// Adam first/second moments, aligned with `tensors`.
    pub adam_m: Vec<Vec<f64>>,
    pub adam_v: Vec<Vec<f64>>,
    pub step: u64,
}

impl ParameterSet {
    pub fn new(tensors: Vec<Tensor>) -> Self {
        let adam_m = tensors.iter().map(|t| vec![0.0; t.len()]).collect();
        let adam_v = tensors.iter().map(|t| vec![0.0; t.len()]).collect();
        ParameterSet {
            tensors,
            adam_m,
            adam_v,
            step: 0,
        }
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.tensors.iter().position(|t| t.name == name)
    }

    pub fn by_name(&self, name: &str) -> Option<&Tensor> {
        self.tensors.iter().find(|t| t.name == name)
    }

    /// Sum of squares over regularized tensors (the L2 penalty body).
    pub fn l2_sum(&self) -> f64 {
        self.tensors
            .iter()
            .filter(|t| t.regularized)
            .flat_map(|t| t.data.iter())
            .map(|v| v * v)
            .sum()
    }

    pub fn n_trainable(&self) -> usize {
        self.tensors
            .iter()
            .filter(|t| t.trainable)
            .map(Tensor::len)
            .sum()
    }
}

/// Gradient buffers aligned index-for-index with a ParameterSet.
#[derive(Debug, Clone)]
pub struct Gradients {
    pub by_tensor: Vec<Vec<f64>>,
}

impl Gradients {
    pub fn zeros_like(params: &ParameterSet) -> Self {
        Gradients {
            by_tensor: params.tensors.iter().map(|t| vec![0.0; t.len()]).collect(),
        }
    }
}

/// One Adam update over all trainable tensors: beta1 0.9, beta2 0.999,
/// eps 1e-8, bias-corrected. A zero gradient leaves parameters unchanged.
pub fn adam_step(params: &mut ParameterSet, grads: &Gradients, learning_rate: f64) -> Result<()> {
    if grads.by_tensor.len() != params.tensors.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} gradient tensors for {} parameters",
            grads.by_tensor.len(),
            params.tensors.len()
        )));
    }
    const BETA1: f64 = 0.9;
    const BETA2: f64 = 0.999;
    const EPS: f64 = 1e-8;
    params.step += 1;
    let t = params.step as i32;
    let c1 = 1.0 - BETA1.powi(t);
    let c2 = 1.0 - BETA2.powi(t);
    for (ix, tensor) in params.tensors.iter_mut().enumerate() {
        if !tensor.trainable {
            continue;
        }
        let g = &grads.by_tensor[ix];
        if g.len() != tensor.data.len() {
            return Err(Error::ShapeMismatch(format!(
                "gradient for '{}' has {} entries, tensor has {}",
                tensor.name,
                g.len(),
                tensor.data.len()
            )));
        }
        let m = &mut params.adam_m[ix];
        let v = &mut params.adam_v[ix];
        for i in 0..g.len() {
            m[i] = BETA1 * m[i] + (1.0 - BETA1) * g[i];
            v[i] = BETA2 * v[i] + (1.0 - BETA2) * g[i] * g[i];
            let m_hat = m[i] / c1;
            let v_hat = v[i] / c2;
            tensor.data[i] -= learning_rate * m_hat / (v_hat.sqrt() + EPS);
        }
    }
    Ok(())
}

/// Uniform(-h, h) fill with h = sqrt(6 / (fan_in + fan_out)).
pub fn glorot_fill(data: &mut [f64], fan_in: usize, fan_out: usize, rng: &mut impl Rng) {
    let h = (6.0 / (fan_in + fan_out) as f64).sqrt();
    for v in data.iter_mut() {
        *v = rng.gen_range(-h..h);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::util::seeded_rng;

    fn scalar(name: &str, value: f64, trainable: bool) -> Tensor {
        Tensor {
            name: name.to_string(),
            shape: vec![1],
            data: vec![value],
            trainable,
            regularized: trainable,
        }
    }

    #[test]
    fn adam_first_step_hand_value() {
        // t=1: m_hat = g, v_hat = g^2, update = lr * g / (|g| + eps).
        let mut params = ParameterSet::new(vec![scalar("w", 0.0, true)]);
        let grads = Gradients {
            by_tensor: vec![vec![0.5]],
        };
        adam_step(&mut params, &grads, 0.01).unwrap();
        let expected = -0.01 * 0.5 / (0.5 + 1e-8);
        assert!((params.tensors[0].data[0] - expected).abs() < 1e-15);
        assert!((params.tensors[0].data[0] + 0.00999999990).abs() < 1e-10);
    }

    #[test]
    fn adam_two_step_trace() {
        let mut params = ParameterSet::new(vec![scalar("w", 1.0, true)]);
        let g = 2.0;
        let grads = Gradients {
            by_tensor: vec![vec![g]],
        };
        adam_step(&mut params, &grads, 0.1).unwrap();
        adam_step(&mut params, &grads, 0.1).unwrap();
        // Hand recursion with the same constants.
        let (b1, b2, eps) = (0.9, 0.999, 1e-8);
        let mut w = 1.0;
        let (mut m, mut v) = (0.0, 0.0);
        for t in 1..=2 {
            m = b1 * m + (1.0 - b1) * g;
            v = b2 * v + (1.0 - b2) * g * g;
            let m_hat = m / (1.0 - f64::powi(b1, t));
            let v_hat = v / (1.0 - f64::powi(b2, t));
            w -= 0.1 * m_hat / (v_hat.sqrt() + eps);
        }
        assert!((params.tensors[0].data[0] - w).abs() < 1e-14);
        assert_eq!(params.step, 2);
    }

    #[test]
    fn adam_zero_gradient_is_identity_on_fresh_state() {
        let mut params = ParameterSet::new(vec![scalar("w", 3.5, true)]);
        let grads = Gradients::zeros_like(&params);
        adam_step(&mut params, &grads, 0.5).unwrap();
        assert_eq!(params.tensors[0].data[0], 3.5);
    }

    #[test]
    fn adam_skips_non_trainable() {
        let mut params = ParameterSet::new(vec![
            scalar("w", 1.0, true),
            scalar("rm", 1.0, false),
        ]);
        let grads = Gradients {
            by_tensor: vec![vec![1.0], vec![1.0]],
        };
        adam_step(&mut params, &grads, 0.1).unwrap();
        assert!(params.tensors[0].data[0] < 1.0);
        assert_eq!(params.tensors[1].data[0], 1.0);
    }

    #[test]
    fn adam_shape_mismatch_rejected() {
        let mut params = ParameterSet::new(vec![scalar("w", 1.0, true)]);
        let grads = Gradients { by_tensor: vec![] };
        assert!(adam_step(&mut params, &grads, 0.1).is_err());
    }

    #[test]
    fn l2_sum_only_regularized() {
        let mut gamma = scalar("bn0.gamma", 2.0, true);
        gamma.regularized = false;
        let params = ParameterSet::new(vec![scalar("w", 3.0, true), gamma]);
        assert_eq!(params.l2_sum(), 9.0);
    }

    #[test]
    fn glorot_bounds_and_mean() {
        let mut rng = seeded_rng(3, 3);
        let mut data = vec![0.0; 20000];
        glorot_fill(&mut data, 10, 20, &mut rng);
        let h = (6.0 / 30.0_f64).sqrt();
        assert!(data.iter().all(|v| v.abs() < h));
        let mean: f64 = data.iter().sum::<f64>() / data.len() as f64;
        assert!(mean.abs() < 0.02);
        // Uniform(-h, h) variance is h^2 / 3.
        let var: f64 = data.iter().map(|v| v * v).sum::<f64>() / data.len() as f64;
        assert!((var - h * h / 3.0).abs() / (h * h / 3.0) < 0.05);
    }
}
