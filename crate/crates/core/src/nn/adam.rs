use super::Mlp;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// L2 penalty folded into the gradient. Off by default.
    pub weight_decay: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { learning_rate: 1e-3, beta1: 0.9, beta2: 0.999, epsilon: 1e-8, weight_decay: 0.0 }
    }
}

/// Adam moments for one parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub config: AdamConfig,
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl Adam {
    pub fn new(config: AdamConfig, len: usize) -> Self {
        Self { config, m: vec![0.0; len], v: vec![0.0; len], t: 0 }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    /// First and second moment estimates.
    pub fn moments(&self) -> (&[f64], &[f64]) {
        (&self.m, &self.v)
    }

    /// Rebuild optimizer state saved from [`Adam::moments`] and [`Adam::steps`].
    pub fn from_parts(config: AdamConfig, m: Vec<f64>, v: Vec<f64>, steps: u64) -> Self {
        assert_eq!(m.len(), v.len(), "moment lengths");
        Self { config, m, v, t: steps }
    }

    pub fn step(&mut self, net: &mut Mlp, grad: &[f64]) {
        let params = net.params_mut();
        assert_eq!(params.len(), grad.len(), "gradient shape");
        assert_eq!(params.len(), self.m.len(), "optimizer shape");
        let AdamConfig { learning_rate, beta1, beta2, epsilon, weight_decay } = self.config;
        self.t += 1;
        let c1 = 1.0 - beta1.powi(self.t as i32);
        let c2 = 1.0 - beta2.powi(self.t as i32);
        for k in 0..params.len() {
            let g = grad[k] + weight_decay * params[k];
            self.m[k] = beta1 * self.m[k] + (1.0 - beta1) * g;
            self.v[k] = beta2 * self.v[k] + (1.0 - beta2) * g * g;
            let m_hat = self.m[k] / c1;
            let v_hat = self.v[k] / c2;
            params[k] -= learning_rate * m_hat / (v_hat.sqrt() + epsilon);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::tests::random_batch;

    #[test]
    fn zero_gradient_is_a_no_op() {
        let mut net = Mlp::new(4, 3, 1).unwrap();
        let before = net.clone();
        let mut opt = Adam::new(AdamConfig::default(), net.params().len());
        opt.step(&mut net, &vec![0.0; before.params().len()]);
        assert_eq!(net, before);
    }

    #[test]
    fn small_step_reduces_loss() {
        let mut net = Mlp::new(6, 8, 2).unwrap();
        let batch = random_batch(6, 16, 4);
        let mut opt = Adam::new(AdamConfig { learning_rate: 1e-4, ..Default::default() }, net.params().len());
        let (g, before) = net.gradient(&batch).unwrap();
        opt.step(&mut net, &g);
        let after = net.batch_loss(&batch).unwrap();
        assert!(after < before, "{after} >= {before}");
    }

    #[test]
    fn trajectories_are_reproducible() {
        let run = || {
            let mut net = Mlp::new(5, 4, 3).unwrap();
            let mut opt = Adam::new(AdamConfig::default(), net.params().len());
            for k in 0..5 {
                let (g, _) = net.gradient(&random_batch(5, 8, k)).unwrap();
                opt.step(&mut net, &g);
            }
            net.params().iter().map(|x| x.to_bits()).collect::<Vec<_>>()
        };
        assert_eq!(run(), run());
    }
}
