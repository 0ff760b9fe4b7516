//! Adaptive moment estimation over named parameter groups.

use super::config::AdamConfig;
use crate::diff::ParamVector;

/// Adam state for one parameter layout with a step size per group.
#[derive(Debug, Clone)]
pub struct Adam {
    config: AdamConfig,
    step_sizes: Vec<f64>,
    m: ParamVector,
    v: ParamVector,
    t: i32,
}

impl Adam {
    /// `step_sizes[g]` applies to group `g` of `template`.
    pub fn new(config: AdamConfig, template: &ParamVector, step_sizes: Vec<f64>) -> Self {
        assert_eq!(step_sizes.len(), template.groups().len(), "one step size per group");
        Self { config, step_sizes, m: template.zeros_like(), v: template.zeros_like(), t: 0 }
    }

    pub fn steps_taken(&self) -> i32 {
        self.t
    }

    /// Applies one bias-corrected update in place, with every step size
    /// multiplied by `scale`.
    pub fn step(&mut self, params: &mut ParamVector, gradient: &ParamVector, scale: f64) {
        self.t += 1;
        let AdamConfig { beta1, beta2, epsilon } = self.config;
        let c1 = 1.0 - beta1.powi(self.t);
        let c2 = 1.0 - beta2.powi(self.t);
        for (g, lr) in self.step_sizes.iter().enumerate() {
            let name = params.groups()[g].name.clone();
            let grad = gradient.groups()[g].values.as_slice();
            let m = self.m.get_mut(&name).expect("same layout");
            let v = self.v.get_mut(&name).expect("same layout");
            let x = params.get_mut(&name).expect("same layout");
            for i in 0..x.len() {
                m[i] = beta1 * m[i] + (1.0 - beta1) * grad[i];
                v[i] = beta2 * v[i] + (1.0 - beta2) * grad[i] * grad[i];
                let m_hat = m[i] / c1;
                let v_hat = v[i] / c2;
                x[i] -= scale * lr * m_hat / (v_hat.sqrt() + epsilon);
            }
        }
    }
}
