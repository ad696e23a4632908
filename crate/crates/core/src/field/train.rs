use ndarray::{Array2, Axis};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::network::flatten;
use super::{CoordinateSample, FfmConfig, MlpConfig, NeuralField};
use crate::error::{invalid, CoilError, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub initial_lr: f64,
    /// Multiplicative learning-rate decay applied once per epoch.
    pub lr_decay_per_epoch: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            initial_lr: 5e-3,
            lr_decay_per_epoch: 0.99,
            epochs: 300,
            batch_size: 256,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.initial_lr > 0.0) {
            return Err(invalid("initial learning rate must be positive"));
        }
        if !(self.lr_decay_per_epoch > 0.0 && self.lr_decay_per_epoch <= 1.0) {
            return Err(invalid("learning-rate decay must lie in (0, 1]"));
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(invalid("epochs and batch size must be positive"));
        }
        if !(0.0..1.0).contains(&self.adam_beta1) || !(0.0..1.0).contains(&self.adam_beta2) {
            return Err(invalid("Adam betas must lie in [0, 1)"));
        }
        if !(self.adam_eps > 0.0) {
            return Err(invalid("Adam epsilon must be positive"));
        }
        Ok(())
    }

    pub fn learning_rate(&self, epoch: usize) -> f64 {
        self.initial_lr * self.lr_decay_per_epoch.powi(epoch as i32)
    }
}

/// Adam with bias-corrected moments.
#[derive(Debug, Clone)]
pub struct Adam {
    beta1: f64,
    beta2: f64,
    eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    pub fn new(num_params: usize, beta1: f64, beta2: f64, eps: f64) -> Self {
        Self { beta1, beta2, eps, m: vec![0.0; num_params], v: vec![0.0; num_params], t: 0 }
    }

    /// Apply one step to `params` in place.
    pub fn step<'a>(&mut self, params: impl Iterator<Item = &'a mut f64>, grad: &[f64], lr: f64) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        for (((p, g), m), v) in params.zip(grad).zip(&mut self.m).zip(&mut self.v) {
            *m = self.beta1 * *m + (1.0 - self.beta1) * g;
            *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
            let m_hat = *m / c1;
            let v_hat = *v / c2;
            *p -= lr * m_hat / (v_hat.sqrt() + self.eps);
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainedField {
    pub field: NeuralField,
    /// Mean squared error over all samples at the end of each epoch.
    pub loss_history: Vec<f64>,
}

/// Uniform `±√(6/fan_in)` weights, zero biases.
pub(crate) fn init_field(ffm: FfmConfig, mlp: MlpConfig, rng: &mut impl Rng) -> Result<NeuralField> {
    let mut field = NeuralField::zeros(ffm, mlp)?;
    for layer in &mut field.layers {
        let bound = (6.0 / layer.weights.ncols() as f64).sqrt();
        layer.weights.iter_mut().for_each(|w| *w = rng.random_range(-bound..bound));
    }
    Ok(field)
}

/// Mean squared error of `field` on pre-encoded features.
fn full_loss(field: &NeuralField, features: &Array2<f64>, targets: &[f64]) -> Result<f64> {
    let mut sum = 0.0;
    for (rows, t) in features.axis_chunks_iter(Axis(0), 4096).zip(targets.chunks(4096)) {
        let out = field.forward_features(rows)?;
        sum += out.iter().zip(t).map(|(o, r)| (o - r).powi(2)).sum::<f64>();
    }
    Ok(sum / targets.len() as f64)
}

/// Fit a field to coordinate–response pairs with mini-batch Adam.
///
/// Each epoch shuffles the samples once with the seeded generator and
/// consumes them in consecutive batches; the learning rate is
/// `initial_lr · decay^epoch`. Output bits depend only on the inputs.
pub fn train_field(samples: &[CoordinateSample], ffm: FfmConfig, mlp: MlpConfig, train: &TrainConfig) -> Result<TrainedField> {
    if samples.is_empty() {
        return Err(invalid("training needs at least one sample"));
    }
    train.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(train.seed);
    let mut field = init_field(ffm, mlp, &mut rng)?;
    let features = field.encode(samples.iter().map(|s| s.coordinate));
    let targets: Vec<f64> = samples.iter().map(|s| s.response).collect();

    let mut adam = Adam::new(field.num_params(), train.adam_beta1, train.adam_beta2, train.adam_eps);
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let mut loss_history = Vec::with_capacity(train.epochs);
    for epoch in 0..train.epochs {
        let lr = train.learning_rate(epoch);
        order.shuffle(&mut rng);
        for batch in order.chunks(train.batch_size) {
            let x = features.select(Axis(0), batch);
            let r: Vec<f64> = batch.iter().map(|&i| targets[i]).collect();
            let (loss, grads) = field
                .loss_and_grad_features(x.view(), &r, 1.0 / batch.len() as f64)
                .map_err(|_| CoilError::TrainingDiverged { epoch })?;
            if !loss.is_finite() {
                return Err(CoilError::TrainingDiverged { epoch });
            }
            adam.step(field.params_mut(), &flatten(&grads), lr);
        }
        let loss = full_loss(&field, &features, &targets).map_err(|_| CoilError::TrainingDiverged { epoch })?;
        if !loss.is_finite() {
            return Err(CoilError::TrainingDiverged { epoch });
        }
        loss_history.push(loss);
    }
    Ok(TrainedField { field, loss_history })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::FfmMode;
    use crate::geometry::Coordinate;

    #[test]
    fn adam_first_step_is_signed_lr() {
        let mut params = vec![1.0, -2.0, 0.5];
        let grad = [0.3, -4.0, 1e-3];
        let lr = 0.01;
        let eps = 1e-8;
        let mut adam = Adam::new(3, 0.9, 0.999, eps);
        let before = params.clone();
        adam.step(params.iter_mut(), &grad, lr);
        for ((p, b), g) in params.iter().zip(&before).zip(grad) {
            let delta = p - b;
            let expected = -lr * g / (g.abs() + eps);
            approx::assert_relative_eq!(delta, expected, max_relative = 1e-12);
            approx::assert_relative_eq!(delta, -lr * g.signum(), max_relative = 1e-4);
        }
    }

    #[test]
    fn lr_schedule_decreases() {
        let cfg = TrainConfig { lr_decay_per_epoch: 0.9, ..TrainConfig::default() };
        let lrs: Vec<f64> = (0..20).map(|e| cfg.learning_rate(e)).collect();
        assert_eq!(lrs[0], cfg.initial_lr);
        assert!(lrs.windows(2).all(|w| w[1] < w[0]));
    }

    #[test]
    fn bad_configs_rejected() {
        let ok = TrainConfig::default();
        assert!(ok.validate().is_ok());
        assert!(TrainConfig { epochs: 0, ..ok }.validate().is_err());
        assert!(TrainConfig { lr_decay_per_epoch: 1.5, ..ok }.validate().is_err());
        assert!(TrainConfig { initial_lr: 0.0, ..ok }.validate().is_err());
    }

    #[test]
    fn empty_samples_rejected() {
        let ffm = FfmConfig::new(FfmMode::None, 1).unwrap();
        assert!(train_field(&[], ffm, MlpConfig::desk(2), &TrainConfig::default()).is_err());
    }

    #[test]
    fn huge_learning_rate_reports_epoch() {
        let ffm = FfmConfig::new(FfmMode::Linear, 2).unwrap();
        let samples: Vec<CoordinateSample> = (0..64)
            .map(|i| CoordinateSample {
                coordinate: Coordinate::new(i as f64 / 64.0, 0.5).unwrap(),
                response: 1e200 * (i as f64),
            })
            .collect();
        let cfg = TrainConfig { initial_lr: 1e200, epochs: 5, batch_size: 8, ..TrainConfig::default() };
        match train_field(&samples, ffm, MlpConfig::desk(8), &cfg) {
            Err(CoilError::TrainingDiverged { epoch }) => assert_eq!(epoch, 0),
            other => panic!("expected divergence, got {:?}", other.map(|t| t.loss_history)),
        }
    }
}
