use std::collections::HashMap;

/// AdamW with decoupled weight decay. Tensors whose name ends in `.bias`
/// are not decayed.
#[derive(Debug, Clone)]
pub struct AdamW {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    step: i32,
    moments: HashMap<String, (Vec<f64>, Vec<f64>)>,
}

impl AdamW {
    pub fn new(weight_decay: f64) -> Self {
        AdamW {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay,
            step: 0,
            moments: HashMap::new(),
        }
    }

    /// Advances the shared step counter; call once per optimizer step before
    /// updating the tensors.
    pub fn begin_step(&mut self) {
        self.step += 1;
    }

    pub fn update(&mut self, name: &str, param: &mut [f64], grad: &[f64], lr: f64) {
        debug_assert!(self.step > 0, "begin_step not called");
        debug_assert_eq!(param.len(), grad.len());
        let (m, v) = self
            .moments
            .entry(name.to_string())
            .or_insert_with(|| (vec![0.0; param.len()], vec![0.0; param.len()]));
        let c1 = 1.0 - self.beta1.powi(self.step);
        let c2 = 1.0 - self.beta2.powi(self.step);
        let decay = if name.ends_with(".bias") {
            0.0
        } else {
            self.weight_decay
        };
        for i in 0..param.len() {
            let g = grad[i];
            m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g;
            v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g * g;
            let m_hat = m[i] / c1;
            let v_hat = v[i] / c2;
            param[i] -= lr * decay * param[i];
            param[i] -= lr * m_hat / (v_hat.sqrt() + self.eps);
        }
    }
}
