//! Scalar-output multilayer perceptron used for the Q, U and F estimators.
//!
//! Hidden layers use ReLU, the output layer is affine. Parameters are laid
//! out layer by layer, weights row-major (`[out][in]`) followed by biases;
//! the same order is used by [`ValueNet::params`], the gradient, Adam state
//! and the checkpoint parameter block.

mod checkpoint;

pub use checkpoint::{load_checkpoint, save_checkpoint, Metadata, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_LR: f64 = 3e-4;
pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetConfig {
    pub input_dim: usize,
    pub hidden_dims: Vec<usize>,
}

impl NetConfig {
    pub fn new(input_dim: usize, hidden_dims: Vec<usize>) -> Self {
        Self { input_dim, hidden_dims }
    }

    /// Two hidden layers of width 20.
    pub fn standard(input_dim: usize) -> Self {
        Self::new(input_dim, vec![20, 20])
    }

    /// `(in, out)` of every layer including the scalar output layer.
    pub fn layer_shapes(&self) -> Vec<(usize, usize)> {
        let mut dims = vec![self.input_dim];
        dims.extend(&self.hidden_dims);
        dims.push(1);
        dims.windows(2).map(|w| (w[0], w[1])).collect()
    }

    pub fn n_params(&self) -> usize {
        self.layer_shapes().iter().map(|(i, o)| i * o + o).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum NetRole {
    Q,
    U,
    F,
}

impl NetRole {
    pub fn as_u8(self) -> u8 {
        match self {
            NetRole::Q => 0,
            NetRole::U => 1,
            NetRole::F => 2,
        }
    }

    pub fn from_u8(v: u8) -> Option<Self> {
        match v {
            0 => Some(NetRole::Q),
            1 => Some(NetRole::U),
            2 => Some(NetRole::F),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            NetRole::Q => "q",
            NetRole::U => "u",
            NetRole::F => "f",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Adam {
    lr: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    step: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValueNet {
    config: NetConfig,
    role: NetRole,
    params: Vec<f64>,
    adam: Adam,
}

impl ValueNet {
    /// Uniform init in `[-1/sqrt(fan_in), 1/sqrt(fan_in)]` for weights and biases.
    pub fn new<R: Rng + ?Sized>(config: NetConfig, role: NetRole, rng: &mut R) -> Self {
        let mut params = Vec::with_capacity(config.n_params());
        for (fan_in, out) in config.layer_shapes() {
            let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
            for _ in 0..(fan_in * out + out) {
                params.push(rng.gen_range(-bound..=bound));
            }
        }
        Self::from_params(config, role, params).expect("length matches config")
    }

    pub fn zeros(config: NetConfig, role: NetRole) -> Self {
        let n = config.n_params();
        Self::from_params(config, role, vec![0.0; n]).expect("length matches config")
    }

    pub fn from_params(config: NetConfig, role: NetRole, params: Vec<f64>) -> Result<Self> {
        let n = config.n_params();
        if params.len() != n {
            return Err(Error::DimensionMismatch(format!(
                "{} parameters for a config expecting {n}",
                params.len()
            )));
        }
        Ok(Self {
            config,
            role,
            params,
            adam: Adam { lr: DEFAULT_LR, m: vec![0.0; n], v: vec![0.0; n], step: 0 },
        })
    }

    pub fn config(&self) -> &NetConfig {
        &self.config
    }

    pub fn role(&self) -> NetRole {
        self.role
    }

    pub fn set_role(&mut self, role: NetRole) {
        self.role = role;
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn learning_rate(&self) -> f64 {
        self.adam.lr
    }

    pub fn set_learning_rate(&mut self, lr: f64) {
        self.adam.lr = lr;
    }

    pub fn adam_step(&self) -> u64 {
        self.adam.step
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.config.input_dim {
            return Err(Error::DimensionMismatch(format!(
                "input of length {}, network expects {}",
                x.len(),
                self.config.input_dim
            )));
        }
        Ok(())
    }

    pub fn forward(&self, x: &[f64]) -> Result<f64> {
        self.check_input(x)?;
        let mut cur = x.to_vec();
        let mut next = Vec::new();
        let shapes = self.config.layer_shapes();
        let last = shapes.len() - 1;
        let mut off = 0;
        for (l, &(fan_in, out)) in shapes.iter().enumerate() {
            let w = &self.params[off..off + fan_in * out];
            let b = &self.params[off + fan_in * out..off + fan_in * out + out];
            next.clear();
            for o in 0..out {
                let row = &w[o * fan_in..(o + 1) * fan_in];
                let mut s = b[o];
                for (wi, xi) in row.iter().zip(&cur) {
                    s += wi * xi;
                }
                next.push(if l < last { s.max(0.0) } else { s });
            }
            std::mem::swap(&mut cur, &mut next);
            off += fan_in * out + out;
        }
        Ok(cur[0])
    }

    pub fn forward_batch<X: AsRef<[f64]>>(&self, rows: &[X]) -> Result<Vec<f64>> {
        rows.iter().map(|r| self.forward(r.as_ref())).collect()
    }

    /// Mean squared error over the batch and its gradient w.r.t. every parameter.
    pub fn loss_and_gradient<X: AsRef<[f64]>>(&self, batch: &[(X, f64)]) -> Result<(f64, Vec<f64>)> {
        if batch.is_empty() {
            return Err(Error::InvalidValue("empty training batch".into()));
        }
        let shapes = self.config.layer_shapes();
        let n_layers = shapes.len();
        let offsets: Vec<usize> = shapes
            .iter()
            .scan(0, |acc, &(i, o)| {
                let start = *acc;
                *acc += i * o + o;
                Some(start)
            })
            .collect();
        let mut grad = vec![0.0; self.params.len()];
        let mut loss = 0.0;
        let bsz = batch.len() as f64;
        // activations[l] is the input to layer l; pre[l] its pre-activation.
        let mut activations: Vec<Vec<f64>> = vec![Vec::new(); n_layers + 1];
        let mut pre: Vec<Vec<f64>> = vec![Vec::new(); n_layers];
        for (x, target) in batch {
            let x = x.as_ref();
            self.check_input(x)?;
            if !target.is_finite() {
                return Err(Error::NonFiniteTarget);
            }
            activations[0].clear();
            activations[0].extend_from_slice(x);
            for l in 0..n_layers {
                let (fan_in, out) = shapes[l];
                let off = offsets[l];
                let w = &self.params[off..off + fan_in * out];
                let b = &self.params[off + fan_in * out..off + fan_in * out + out];
                let (input, rest) = activations.split_at_mut(l + 1);
                let input = &input[l];
                pre[l].clear();
                rest[0].clear();
                for o in 0..out {
                    let s = b[o]
                        + w[o * fan_in..(o + 1) * fan_in]
                            .iter()
                            .zip(input)
                            .map(|(a, b)| a * b)
                            .sum::<f64>();
                    pre[l].push(s);
                    rest[0].push(if l + 1 < n_layers { s.max(0.0) } else { s });
                }
            }
            let y = activations[n_layers][0];
            let err = y - target;
            loss += err * err / bsz;
            // delta = dL/d(pre-activation) of the current layer.
            let mut delta = vec![2.0 * err / bsz];
            for l in (0..n_layers).rev() {
                let (fan_in, out) = shapes[l];
                let off = offsets[l];
                let input = &activations[l];
                for o in 0..out {
                    let d = delta[o];
                    if d == 0.0 {
                        continue;
                    }
                    let g = &mut grad[off + o * fan_in..off + (o + 1) * fan_in];
                    for (gi, ai) in g.iter_mut().zip(input) {
                        *gi += d * ai;
                    }
                    grad[off + fan_in * out + o] += d;
                }
                if l > 0 {
                    let w = &self.params[off..off + fan_in * out];
                    let mut prev = vec![0.0; fan_in];
                    for o in 0..out {
                        let d = delta[o];
                        if d == 0.0 {
                            continue;
                        }
                        for (p, wi) in prev.iter_mut().zip(&w[o * fan_in..(o + 1) * fan_in]) {
                            *p += d * wi;
                        }
                    }
                    for (p, z) in prev.iter_mut().zip(&pre[l - 1]) {
                        if *z <= 0.0 {
                            *p = 0.0;
                        }
                    }
                    delta = prev;
                }
            }
        }
        Ok((loss, grad))
    }

    /// One Adam step on the batch MSE; returns the loss before the update.
    pub fn train_step<X: AsRef<[f64]>>(&mut self, batch: &[(X, f64)]) -> Result<f64> {
        let (loss, grad) = self.loss_and_gradient(batch)?;
        let a = &mut self.adam;
        a.step += 1;
        let bc1 = 1.0 - ADAM_BETA1.powi(a.step as i32);
        let bc2 = 1.0 - ADAM_BETA2.powi(a.step as i32);
        for (((p, g), m), v) in self.params.iter_mut().zip(&grad).zip(&mut a.m).zip(&mut a.v) {
            *m = ADAM_BETA1 * *m + (1.0 - ADAM_BETA1) * g;
            *v = ADAM_BETA2 * *v + (1.0 - ADAM_BETA2) * g * g;
            let m_hat = *m / bc1;
            let v_hat = *v / bc2;
            *p -= a.lr * m_hat / (v_hat.sqrt() + ADAM_EPS);
        }
        Ok(loss)
    }
}

/// Copies the online parameters into the target; the target's Adam state is left alone.
pub fn sync_target(online: &ValueNet, target: &mut ValueNet) -> Result<()> {
    if online.config != target.config {
        return Err(Error::DimensionMismatch("online and target configs differ".into()));
    }
    target.params.copy_from_slice(&online.params);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    #[test]
    fn zero_net_outputs_zero() {
        let net = ValueNet::zeros(NetConfig::standard(3), NetRole::Q);
        assert_eq!(net.forward(&[1.0, -2.0, 3.0]).unwrap(), 0.0);
    }

    #[test]
    fn hand_evaluated_net() {
        // 2 -> 1 -> 1: W1=[[1,1]], b1=[0.5], W2=[[2]], b2=[-1].
        let net = ValueNet::from_params(
            NetConfig::new(2, vec![1]),
            NetRole::Q,
            vec![1.0, 1.0, 0.5, 2.0, -1.0],
        )
        .unwrap();
        assert_eq!(net.forward(&[1.0, -1.0]).unwrap(), 0.0);
        assert_eq!(net.forward(&[1.0, 1.0]).unwrap(), 4.0);
    }

    #[test]
    fn forward_is_deterministic_and_checks_dims() {
        let net = ValueNet::new(NetConfig::standard(4), NetRole::Q, &mut rng(1));
        let x = [0.1, 0.2, -0.3, 0.4];
        assert_eq!(net.forward(&x).unwrap().to_bits(), net.forward(&x).unwrap().to_bits());
        assert!(matches!(net.forward(&[1.0]), Err(Error::DimensionMismatch(_))));
    }

    #[test]
    fn batch_matches_rows() {
        let net = ValueNet::new(NetConfig::standard(2), NetRole::Q, &mut rng(2));
        let rows = vec![vec![0.0, 1.0], vec![1.0, 0.5], vec![-1.0, 2.0], vec![3.0, 3.0]];
        let all = net.forward_batch(&rows).unwrap();
        assert_eq!(all[..1], net.forward_batch(&rows[..1]).unwrap()[..]);
        let mut halves = net.forward_batch(&rows[..2]).unwrap();
        halves.extend(net.forward_batch(&rows[2..]).unwrap());
        assert_eq!(all, halves);
        for (r, y) in rows.iter().zip(&all) {
            assert_eq!(net.forward(r).unwrap(), *y);
        }
        assert!(net.forward_batch::<Vec<f64>>(&[]).unwrap().is_empty());
    }

    #[test]
    fn zero_error_batch_leaves_params() {
        let mut net = ValueNet::new(NetConfig::standard(3), NetRole::U, &mut rng(3));
        let xs = [vec![0.1, 0.2, 0.3], vec![1.0, -1.0, 0.5]];
        let batch: Vec<(Vec<f64>, f64)> =
            xs.iter().map(|x| (x.clone(), net.forward(x).unwrap())).collect();
        let before = net.params().to_vec();
        let loss = net.train_step(&batch).unwrap();
        assert_eq!(loss, 0.0);
        assert_eq!(net.params(), &before[..]);
    }

    #[test]
    fn train_step_errors() {
        let mut net = ValueNet::new(NetConfig::standard(2), NetRole::Q, &mut rng(4));
        assert!(net.train_step::<Vec<f64>>(&[]).is_err());
        assert!(matches!(net.train_step(&[(vec![0.0], 1.0)]), Err(Error::DimensionMismatch(_))));
        assert!(matches!(
            net.train_step(&[(vec![0.0, 0.0], f64::NAN)]),
            Err(Error::NonFiniteTarget)
        ));
    }

    #[test]
    fn converges_on_fixed_batch() {
        let mut r = rng(5);
        let mut net = ValueNet::new(NetConfig::standard(3), NetRole::Q, &mut r);
        net.set_learning_rate(1e-2);
        let batch: Vec<(Vec<f64>, f64)> = (0..16)
            .map(|_| {
                let x: Vec<f64> = (0..3).map(|_| r.gen_range(-1.0..1.0)).collect();
                let y = x[0] - 2.0 * x[1] + x[2] * x[2];
                (x, y)
            })
            .collect();
        let first = net.train_step(&batch).unwrap();
        let mut last = first;
        for _ in 0..199 {
            last = net.train_step(&batch).unwrap();
        }
        assert!(last < 0.1 * first, "initial {first}, final {last}");
    }

    #[test]
    fn sync_semantics() {
        let mut online = ValueNet::new(NetConfig::standard(2), NetRole::Q, &mut rng(7));
        let mut target = ValueNet::new(NetConfig::standard(2), NetRole::Q, &mut rng(8));
        sync_target(&online, &mut target).unwrap();
        let probes: Vec<Vec<f64>> = (0..20).map(|i| vec![i as f64 * 0.1, 1.0 - i as f64 * 0.05]).collect();
        assert_eq!(online.forward_batch(&probes).unwrap(), target.forward_batch(&probes).unwrap());
        let frozen = target.forward_batch(&probes).unwrap();
        online.train_step(&[(vec![0.5, 0.5], 10.0)]).unwrap();
        assert_eq!(target.forward_batch(&probes).unwrap(), frozen);
        sync_target(&online, &mut target).unwrap();
        let once = target.params().to_vec();
        sync_target(&online, &mut target).unwrap();
        assert_eq!(target.params(), &once[..]);
        assert_eq!(target.adam_step(), 0);

        let mut other = ValueNet::zeros(NetConfig::standard(3), NetRole::Q);
        assert!(sync_target(&online, &mut other).is_err());
    }

    #[test]
    fn seeded_init_is_reproducible() {
        let a = ValueNet::new(NetConfig::standard(5), NetRole::F, &mut rng(11));
        let b = ValueNet::new(NetConfig::standard(5), NetRole::F, &mut rng(11));
        assert_eq!(a, b);
        for (fan_in, _) in a.config().layer_shapes() {
            let bound = 1.0 / (fan_in as f64).sqrt();
            assert!(bound > 0.0);
        }
        assert!(a.params().iter().all(|p| p.abs() <= 1.0));
    }

    #[test]
    fn last_layer_homogeneity() {
        let mut net = ValueNet::new(NetConfig::standard(3), NetRole::Q, &mut rng(12));
        let x = [0.3, -0.7, 1.1];
        let y = net.forward(&x).unwrap();
        let n = net.params().len();
        let last = 20 + 1; // 20 weights + 1 bias
        for p in &mut net.params_mut()[n - last..] {
            *p *= 2.5;
        }
        let y2 = net.forward(&x).unwrap();
        assert!((y2 - 2.5 * y).abs() < 1e-12 * (1.0 + y.abs()));
    }
}
