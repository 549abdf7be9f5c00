//! Joint mini-batch training of the backbone, reciprocal points and boundary.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::LabeledSet;
use crate::error::{Error, Result};
use crate::network::{Network, NetworkConfig};
use crate::rpl::{loss_total, RplHead};
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub lambda: f64,
    pub gamma: f64,
    pub momentum: f64,
    pub seed: u64,
    pub deterministic: bool,
    /// Element-wise gradient clip. Off unless set.
    pub clip: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 50,
            learning_rate: 0.001,
            batch_size: 64,
            lambda: 0.1,
            gamma: 1.0,
            momentum: 0.9,
            seed: 0,
            deterministic: true,
            clip: None,
        }
    }
}

impl TrainConfig {
    pub fn violations(&self) -> Vec<Error> {
        let mut out = Vec::new();
        if self.epochs == 0 {
            out.push(Error::config("epochs", "must be >= 1"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            out.push(Error::config("learning_rate", format!("must be > 0, got {}", self.learning_rate)));
        }
        if self.batch_size == 0 {
            out.push(Error::config("batch_size", "must be >= 1"));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            out.push(Error::config("lambda", format!("must be >= 0, got {}", self.lambda)));
        }
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            out.push(Error::config("gamma", format!("must be > 0, got {}", self.gamma)));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            out.push(Error::config("momentum", format!("must lie in [0, 1), got {}", self.momentum)));
        }
        if let Some(c) = self.clip {
            if !(c > 0.0) {
                out.push(Error::config("clip", "must be > 0 when set"));
            }
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        match self.violations().into_iter().next() {
            Some(e) => Err(e),
            None => Ok(()),
        }
    }
}

/// `v <- momentum * v + g; p <- p - lr * v`.
pub fn sgd_step(params: &mut [f64], grads: &[f64], velocity: &mut [f64], lr: f64, momentum: f64) -> Result<()> {
    if params.len() != grads.len() || params.len() != velocity.len() {
        return Err(Error::shape(format!(
            "sgd: {} params, {} grads, {} velocity entries",
            params.len(),
            grads.len(),
            velocity.len()
        )));
    }
    for ((p, g), v) in params.iter_mut().zip(grads).zip(velocity.iter_mut()) {
        *v = momentum * *v + g;
        *p -= lr * *v;
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepLoss {
    pub total: f64,
    pub classification: f64,
    pub boundary: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochLog {
    /// Zero-based epoch index.
    pub epoch: usize,
    /// Sample-weighted means over the epoch.
    pub total: f64,
    pub classification: f64,
    pub boundary: f64,
    pub steps: Vec<StepLoss>,
}

/// Serializable ChaCha stream position.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RngState {
    pub seed: [u8; 32],
    pub stream: u64,
    pub word_pos: u128,
}

impl RngState {
    fn capture(rng: &ChaCha8Rng) -> Self {
        RngState { seed: rng.get_seed(), stream: rng.get_stream(), word_pos: rng.get_word_pos() }
    }

    fn restore(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::from_seed(self.seed);
        rng.set_stream(self.stream);
        rng.set_word_pos(self.word_pos);
        rng
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NamedTensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub values: Vec<f64>,
}

/// Complete training state: resuming from it continues the exact trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub network_config: NetworkConfig,
    pub train_config: TrainConfig,
    /// Network parameters followed by `head.points` and `head.radius`.
    pub tensors: Vec<NamedTensor>,
    pub gamma: f64,
    pub lambda: f64,
    /// Momentum buffers, one per entry of `tensors`, same order.
    pub velocity: Vec<Vec<f64>>,
    /// Completed epochs.
    pub epoch: u64,
    /// Completed optimizer steps.
    pub step: u64,
    pub rng: RngState,
}

pub const HEAD_POINTS: &str = "head.points";
pub const HEAD_RADIUS: &str = "head.radius";

#[derive(Debug, Clone)]
pub struct Trainer {
    net: Network,
    head: RplHead,
    cfg: TrainConfig,
    velocity: Vec<Vec<f64>>,
    rng: ChaCha8Rng,
    epoch: usize,
    step: u64,
}

impl Trainer {
    pub fn new(net: Network, mut head: RplHead, cfg: TrainConfig) -> Result<Self> {
        cfg.validate()?;
        if head.dim() != net.embedding_dim() {
            return Err(Error::config(
                "embedding_dim",
                format!("head dimension {} differs from network embedding {}", head.dim(), net.embedding_dim()),
            ));
        }
        head.gamma = cfg.gamma;
        head.lambda = cfg.lambda;
        let mut velocity: Vec<Vec<f64>> = net.named_params().iter().map(|(_, t)| vec![0.0; t.len()]).collect();
        velocity.push(vec![0.0; head.points().len()]);
        velocity.push(vec![0.0; head.radius().len()]);
        let rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        Ok(Trainer { net, head, cfg, velocity, rng, epoch: 0, step: 0 })
    }

    pub fn network(&self) -> &Network {
        &self.net
    }

    pub fn head(&self) -> &RplHead {
        &self.head
    }

    pub fn config(&self) -> &TrainConfig {
        &self.cfg
    }

    pub fn epochs_done(&self) -> usize {
        self.epoch
    }

    pub fn into_parts(self) -> (Network, RplHead) {
        (self.net, self.head)
    }

    /// One optimizer step on a batch `[B, 1, H, W]`.
    pub fn train_step(&mut self, batch: &Tensor, labels: &[usize]) -> Result<StepLoss> {
        self.net.zero_grad();
        let (emb, tape) = self.net.forward_train(batch)?;
        let loss = loss_total(emb.values(), labels, &self.head)?;
        let total = loss.total();
        if !total.is_finite() {
            return Err(Error::numerical(format!("non-finite loss {total} at step {}", self.step)));
        }
        let d_emb = Tensor::new(emb.shape().to_vec(), loss.grad.d_features.clone())?;
        self.net.backward(&tape, &d_emb)?;

        let (lr, mom, clip) = (self.cfg.learning_rate, self.cfg.momentum, self.cfg.clip);
        let clipped = |g: &[f64]| -> Vec<f64> {
            match clip {
                Some(c) => g.iter().map(|v| v.clamp(-c, c)).collect(),
                None => g.to_vec(),
            }
        };
        let mut vel = self.velocity.iter_mut();
        for (t, trainable) in self.net.params_mut() {
            let v = vel.next().expect("velocity per parameter");
            if !trainable {
                continue;
            }
            let g = clipped(t.grad().unwrap_or(&[]));
            if g.len() != t.len() {
                return Err(Error::numerical("missing gradient for a trainable parameter"));
            }
            sgd_step(t.values_mut(), &g, v, lr, mom)?;
        }
        let vp = vel.next().expect("points velocity");
        sgd_step(self.head.points_mut(), &clipped(&loss.grad.d_points), vp, lr, mom)?;
        let vr = vel.next().expect("radius velocity");
        sgd_step(self.head.radius_mut(), &clipped(&loss.grad.d_radius), vr, lr, mom)?;
        self.head.clamp_radius();
        self.step += 1;
        Ok(StepLoss { total, classification: loss.classification, boundary: loss.boundary })
    }

    /// Shuffles under the run RNG and sweeps the data once.
    pub fn run_epoch(&mut self, data: &LabeledSet) -> Result<EpochLog> {
        if data.is_empty() {
            return Err(Error::argument("training set is empty"));
        }
        if let Some(&bad) = data.labels().iter().find(|&&l| l >= self.head.n_classes()) {
            return Err(Error::argument(format!("label {bad} outside 0..{}", self.head.n_classes())));
        }
        let mut order: Vec<usize> = (0..data.len()).collect();
        order.shuffle(&mut self.rng);
        let mut steps = Vec::new();
        let (mut t, mut c, mut b) = (0.0, 0.0, 0.0);
        for (bi, chunk) in order.chunks(self.cfg.batch_size).enumerate() {
            let (batch, labels) = data.batch(chunk)?;
            let s = self.train_step(&batch, &labels).map_err(|e| match e {
                Error::Numerical(m) => Error::numerical(format!("epoch {} batch {bi}: {m}", self.epoch)),
                other => other,
            })?;
            let w = chunk.len() as f64;
            t += s.total * w;
            c += s.classification * w;
            b += s.boundary * w;
            steps.push(s);
        }
        let n = data.len() as f64;
        let log = EpochLog { epoch: self.epoch, total: t / n, classification: c / n, boundary: b / n, steps };
        self.epoch += 1;
        Ok(log)
    }

    /// Runs the remaining epochs of the configured budget.
    pub fn fit(&mut self, data: &LabeledSet) -> Result<Vec<EpochLog>> {
        let mut logs = Vec::new();
        while self.epoch < self.cfg.epochs {
            logs.push(self.run_epoch(data)?);
        }
        Ok(logs)
    }

    pub fn checkpoint(&self) -> Checkpoint {
        let mut tensors: Vec<NamedTensor> = self
            .net
            .named_params()
            .into_iter()
            .map(|(name, t)| NamedTensor { name, shape: t.shape().to_vec(), values: t.values().to_vec() })
            .collect();
        tensors.push(NamedTensor {
            name: HEAD_POINTS.into(),
            shape: vec![self.head.n_classes(), self.head.dim()],
            values: self.head.points().to_vec(),
        });
        tensors.push(NamedTensor {
            name: HEAD_RADIUS.into(),
            shape: vec![self.head.radius().len()],
            values: self.head.radius().to_vec(),
        });
        Checkpoint {
            network_config: self.net.config().clone(),
            train_config: self.cfg.clone(),
            tensors,
            gamma: self.head.gamma,
            lambda: self.head.lambda,
            velocity: self.velocity.clone(),
            epoch: self.epoch as u64,
            step: self.step,
            rng: RngState::capture(&self.rng),
        }
    }

    /// Rebuilds the trainer exactly as it was when `ckpt` was taken.
    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self> {
        let mut net = crate::network::build_network(&ckpt.network_config, 0)?;
        let n_net = net.named_params().len();
        if ckpt.tensors.len() != n_net + 2 || ckpt.velocity.len() != ckpt.tensors.len() {
            return Err(Error::argument(format!(
                "checkpoint holds {} tensors / {} velocity buffers, network needs {}",
                ckpt.tensors.len(),
                ckpt.velocity.len(),
                n_net + 2
            )));
        }
        for t in &ckpt.tensors[..n_net] {
            net.set_param(&t.name, &t.values)?;
        }
        let points = &ckpt.tensors[n_net];
        let radius = &ckpt.tensors[n_net + 1];
        if points.name != HEAD_POINTS || radius.name != HEAD_RADIUS || points.shape.len() != 2 {
            return Err(Error::argument("checkpoint head tensors missing or malformed"));
        }
        let head = RplHead::from_parts(
            points.shape[0],
            points.shape[1],
            points.values.clone(),
            radius.values.clone(),
            ckpt.gamma,
            ckpt.lambda,
        )?;
        for (v, t) in ckpt.velocity.iter().zip(&ckpt.tensors) {
            if v.len() != t.values.len() {
                return Err(Error::shape(format!("velocity for `{}` has wrong length", t.name)));
            }
        }
        ckpt.train_config.validate()?;
        Ok(Trainer {
            net,
            head,
            cfg: ckpt.train_config.clone(),
            velocity: ckpt.velocity.clone(),
            rng: ckpt.rng.restore(),
            epoch: ckpt.epoch as usize,
            step: ckpt.step,
        })
    }
}

/// Trains `net` and `head` on `data` for `cfg.epochs` epochs.
pub fn fit(net: Network, head: RplHead, data: &LabeledSet, cfg: &TrainConfig) -> Result<(Network, RplHead, Vec<EpochLog>)> {
    let mut trainer = Trainer::new(net, head, cfg.clone())?;
    let logs = trainer.fit(data)?;
    let (net, head) = trainer.into_parts();
    Ok((net, head, logs))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sgd_examples() {
        let mut p = [0.0];
        let mut v = [0.0];
        sgd_step(&mut p, &[1.0], &mut v, 0.1, 0.0).unwrap();
        assert!((p[0] + 0.1).abs() < 1e-15);

        let mut p = [2.5];
        let mut v = [0.0];
        sgd_step(&mut p, &[0.0], &mut v, 0.1, 0.9).unwrap();
        assert_eq!(p[0], 2.5);

        let mut p = [0.0];
        let mut v = [0.0];
        sgd_step(&mut p, &[1.0], &mut v, 1.0, 0.9).unwrap();
        sgd_step(&mut p, &[1.0], &mut v, 1.0, 0.9).unwrap();
        assert!((p[0] + 2.9).abs() < 1e-12);

        assert!(matches!(sgd_step(&mut [0.0; 2], &[1.0], &mut [0.0; 2], 0.1, 0.9), Err(Error::Shape(_))));
    }

    #[test]
    fn config_defaults_and_validation() {
        let c = TrainConfig::default();
        assert_eq!((c.epochs, c.batch_size), (50, 64));
        assert_eq!((c.learning_rate, c.lambda, c.gamma, c.momentum), (0.001, 0.1, 1.0, 0.9));
        assert!(c.validate().is_ok());
        let bad = TrainConfig { epochs: 0, learning_rate: -1.0, ..c };
        assert_eq!(bad.violations().len(), 2);
    }
}
