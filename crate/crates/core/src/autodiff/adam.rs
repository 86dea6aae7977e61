use super::tensor::{lit, Scalar, Tensor};
use super::AutodiffError;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-7,
        }
    }
}

/// Adam with bias-corrected moment estimates.
///
/// One first/second moment accumulator per parameter tensor, shaped like the
/// tensor. `step` counts completed updates.
#[derive(Clone, Debug)]
pub struct Adam<F: Scalar = f32> {
    pub config: AdamConfig,
    first: Vec<Tensor<F>>,
    second: Vec<Tensor<F>>,
    step: u64,
}

impl<F: Scalar> Adam<F> {
    pub fn new(config: AdamConfig, params: &[Tensor<F>]) -> Self {
        let zeros = |p: &Tensor<F>| Tensor::zeros(p.shape());
        Self {
            config,
            first: params.iter().map(zeros).collect(),
            second: params.iter().map(zeros).collect(),
            step: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// Applies one update in place. Gradients containing NaN or infinities
    /// abort the step before any state changes.
    pub fn step(
        &mut self,
        params: &mut [Tensor<F>],
        grads: &[Tensor<F>],
    ) -> Result<(), AutodiffError> {
        if params.len() != self.first.len() || grads.len() != self.first.len() {
            return Err(AutodiffError::ParamCount {
                expected: self.first.len(),
                got: params.len().min(grads.len()),
            });
        }
        for ((p, g), m) in params.iter().zip(grads).zip(&self.first) {
            if p.shape() != g.shape() || p.shape() != m.shape() {
                return Err(AutodiffError::ShapeMismatch {
                    op: "adam_step",
                    left: p.shape().to_vec(),
                    right: g.shape().to_vec(),
                });
            }
        }
        if grads.iter().any(|g| !g.is_finite()) {
            return Err(AutodiffError::NonFinite("gradient"));
        }

        self.step += 1;
        let c = self.config;
        let t = self.step as i32;
        let (b1, b2) = (lit::<F>(c.beta1), lit::<F>(c.beta2));
        let one = F::one();
        let correction1 = one - b1.powi(t);
        let correction2 = one - b2.powi(t);
        let lr = lit::<F>(c.learning_rate);
        let eps = lit::<F>(c.epsilon);

        for (((p, g), m), v) in params
            .iter_mut()
            .zip(grads)
            .zip(&mut self.first)
            .zip(&mut self.second)
        {
            let pd = p.data_mut();
            let md = m.data_mut();
            let vd = v.data_mut();
            for (i, &gi) in g.data().iter().enumerate() {
                md[i] = b1 * md[i] + (one - b1) * gi;
                vd[i] = b2 * vd[i] + (one - b2) * gi * gi;
                let m_hat = md[i] / correction1;
                let v_hat = vd[i] / correction2;
                pd[i] = pd[i] - lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}
