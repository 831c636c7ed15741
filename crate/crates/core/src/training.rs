//! TRADES, Targeted-TRADES and TRIX training.
//!
//! All three methods share one loop. Each batch is split by the attack
//! policy into samples that get an untargeted KL adversary and samples that
//! get a targeted CE adversary toward a random wrong class; the loss is
//!
//! ```text
//! mean_i[ v_i · CE(f(x_i), y_i) ]
//!   + β/B · Σ_i [ t_i · KL(f(x̃_i) ‖ f(x_i)) + (1 − t_i) · KL(f(x_i) ‖ f(x̃_i)) ]
//! ```
//!
//! with `t_i` the policy flag and `v_i` the loss weight. TRADES fixes every
//! `t_i = 0`, Targeted-TRADES every `t_i = 1`, and both keep `v_i = 1`.
//!
//! TRIX runs in two phases. Before the switch epoch `τ` the class weights
//! drive only the policy; they come from the previous epoch's clean
//! predictions (or from each batch in [`StatsGranularity::Batch`] mode).
//! At the end of epoch `τ` they are recomputed from adversarial predictions
//! (see [`RobustStats`]) and frozen. From then on they also weight the
//! cross-entropy and scale each sample's radius.

use crate::attacks::{pgd_attack, sample_targets, AttackConfig, AttackMode};
use crate::autodiff::{cross_entropy_rows, kl_divergence, Tape, Var};
use crate::data::{batches, Dataset};
use crate::epsilon::Epsilon;
use crate::error::{Error, Result};
use crate::fairness::{
    attack_policy, build_similarity, class_mean_predictions, compute_weights, scale_epsilon, ClassMeanAccumulator,
    ClassWeights, PolicyAverage, SimilarityMatrix,
};
use crate::metrics::classwise_accuracy;
use crate::models::{BoundMlp, MlpClassifier};
use crate::rng::{self, tag};
use crate::scalar::Scalar;
use crate::tensor::{Tensor, TensorError};
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Trades,
    TargetedTrades,
    #[default]
    Trix,
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "trades" => Ok(Method::Trades),
            "targeted_trades" => Ok(Method::TargetedTrades),
            "trix" => Ok(Method::Trix),
            other => Err(Error::config(format!(
                "unknown method {other:?}: expected trades, targeted_trades or trix"
            ))),
        }
    }
}

/// How often the phase-1 class weights are refreshed.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StatsGranularity {
    /// From the previous epoch's accumulated clean predictions.
    #[default]
    Epoch,
    /// From the current batch's clean predictions.
    Batch,
}

/// Which adversaries supply the robust predictions the weights are frozen
/// from at the end of phase 1.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RobustStats {
    /// The mixed training adversaries of the last phase-1 epoch.
    Training,
    /// A fresh untargeted KL pass over the training set with the model at
    /// the end of phase 1.
    #[default]
    Untargeted,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LrSchedule {
    pub initial: f64,
    /// Epochs at which the rate is multiplied by `factor`. `None` means
    /// `{T − 10, T − 5}`.
    pub decay_epochs: Option<Vec<usize>>,
    pub factor: f64,
}

impl Default for LrSchedule {
    fn default() -> Self {
        Self { initial: 0.1, decay_epochs: None, factor: 0.1 }
    }
}

impl LrSchedule {
    pub fn resolved_decay_epochs(&self, total_epochs: usize) -> Vec<usize> {
        match &self.decay_epochs {
            Some(d) => d.clone(),
            None => [10, 5]
                .iter()
                .filter_map(|&k| total_epochs.checked_sub(k))
                .filter(|&e| e > 0)
                .collect(),
        }
    }
}

/// Learning rate in effect during `epoch` (0-based).
pub fn lr_at(epoch: usize, schedule: &LrSchedule, total_epochs: usize) -> f64 {
    schedule
        .resolved_decay_epochs(total_epochs)
        .iter()
        .filter(|&&d| epoch >= d)
        .fold(schedule.initial, |lr, _| lr * schedule.factor)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerConfig {
    pub momentum: f64,
    pub weight_decay: f64,
    pub nesterov: bool,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self { momentum: 0.9, weight_decay: 5e-4, nesterov: true }
    }
}

/// Radius, step and iteration count of a PGD adversary. A missing step
/// defaults to a fixed fraction of the radius chosen by the caller.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttackSpec {
    pub epsilon: Epsilon,
    #[serde(default)]
    pub step_size: Option<Epsilon>,
    pub num_steps: usize,
    #[serde(default)]
    pub random_start: bool,
}

impl AttackSpec {
    pub fn training_default() -> Self {
        Self { epsilon: Epsilon::over_255(8), step_size: None, num_steps: 10, random_start: false }
    }

    pub fn evaluation_default() -> Self {
        Self { epsilon: Epsilon::over_255(8), step_size: None, num_steps: 20, random_start: true }
    }

    pub fn step(&self, default_divisor: u32) -> Epsilon {
        self.step_size.unwrap_or_else(|| self.epsilon.scaled(1, default_divisor))
    }

    pub fn build<T: Scalar>(&self, mode: AttackMode, default_divisor: u32, seed: u64) -> AttackConfig<T> {
        AttackConfig {
            epsilon: self.epsilon.value(),
            step_size: self.step(default_divisor).value(),
            num_steps: self.num_steps,
            mode,
            random_start: self.random_start,
            seed,
        }
    }
}

pub const TRAIN_STEP_DIVISOR: u32 = 4;
pub const EVAL_STEP_DIVISOR: u32 = 10;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub method: Method,
    pub seed: u64,
    pub epochs: usize,
    pub tau: usize,
    pub batch_size: usize,
    pub beta: f64,
    pub lambda: f64,
    pub mu: f64,
    pub hidden: Vec<usize>,
    pub lr: LrSchedule,
    pub optimizer: OptimizerConfig,
    pub attack: AttackSpec,
    pub eval_attack: AttackSpec,
    pub stats: StatsGranularity,
    pub robust_stats: RobustStats,
    pub policy_average: PolicyAverage,
    pub epsilon_scaling: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            method: Method::Trix,
            seed: 0,
            epochs: 60,
            tau: 30,
            batch_size: 128,
            beta: 6.0,
            lambda: 1.0,
            mu: 1e-8,
            hidden: vec![64, 64],
            lr: LrSchedule::default(),
            optimizer: OptimizerConfig::default(),
            attack: AttackSpec::training_default(),
            eval_attack: AttackSpec::evaluation_default(),
            stats: StatsGranularity::Epoch,
            robust_stats: RobustStats::Untargeted,
            policy_average: PolicyAverage::Batch,
            epsilon_scaling: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |field: &str, msg: String| Err(Error::Config(format!("{field}: {msg}")));
        if self.epochs == 0 {
            return bad("epochs", "must be at least 1".into());
        }
        if self.tau == 0 || self.tau > self.epochs {
            return bad("tau", format!("must lie in 1..={}, got {}", self.epochs, self.tau));
        }
        if self.batch_size == 0 {
            return bad("batch_size", "must be at least 1".into());
        }
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return bad("beta", format!("must be finite and nonnegative, got {}", self.beta));
        }
        if !self.lambda.is_finite() {
            return bad("lambda", format!("must be finite, got {}", self.lambda));
        }
        if !(self.mu >= 0.0 && self.mu.is_finite()) {
            return bad("mu", format!("must be finite and nonnegative, got {}", self.mu));
        }
        if self.hidden.contains(&0) {
            return bad("hidden", format!("widths must be positive, got {:?}", self.hidden));
        }
        if !(self.lr.initial > 0.0 && self.lr.factor > 0.0) {
            return bad("lr", "initial rate and factor must be positive".into());
        }
        if !(self.optimizer.momentum >= 0.0 && self.optimizer.weight_decay >= 0.0) {
            return bad("optimizer", "momentum and weight_decay must be nonnegative".into());
        }
        for (field, attack, div) in [
            ("attack", &self.attack, TRAIN_STEP_DIVISOR),
            ("eval_attack", &self.eval_attack, EVAL_STEP_DIVISOR),
        ] {
            if let Err(e) = attack.build::<f64>(AttackMode::UntargetedCe, div, 0).validate() {
                return bad(field, e.to_string());
            }
        }
        Ok(())
    }

    pub fn layer_dims(&self, input_dim: usize, num_classes: usize) -> Vec<usize> {
        let mut dims = vec![input_dim];
        dims.extend(&self.hidden);
        dims.push(num_classes);
        dims
    }
}

/// One line of `metrics.jsonl`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub lr: f64,
    pub loss: f64,
    pub ce: f64,
    pub adv: f64,
    /// Accuracy on the clean training batches, before each update.
    pub clean_acc: Vec<Option<f64>>,
    /// Accuracy on the training adversaries, before each update.
    pub robust_acc: Vec<Option<f64>>,
    /// Weights in effect at the end of the epoch.
    pub class_weights: Vec<f64>,
    /// The matrix those weights were computed from, if any.
    pub similarity: Option<Vec<Vec<f64>>>,
    /// Per class, the share of samples that received a targeted adversary.
    pub targeted_fraction: Vec<Option<f64>>,
    pub weights_frozen: bool,
}

pub struct LossTerms<'t, T> {
    pub total: Var<'t, T>,
    pub ce: Var<'t, T>,
    pub adv: Var<'t, T>,
    pub clean_logits: Var<'t, T>,
    pub adv_logits: Var<'t, T>,
}

/// `mean_i[w_i · CE(f(x_i), y_i)] + β · KL(f(x) ‖ f(x_adv))`.
#[allow(clippy::too_many_arguments)]
pub fn trades_loss<'t, T: Scalar>(
    net: &BoundMlp<'t, T>,
    tape: &'t Tape<T>,
    x: &Tensor<T>,
    labels: &[usize],
    x_adv: &Tensor<T>,
    sample_weights: &[T],
    beta: T,
) -> Result<LossTerms<'t, T>> {
    x.same_shape(x_adv, "trades_loss")?;
    let clean_logits = net.forward(tape.constant(x.clone()))?.logits;
    let adv_logits = net.forward(tape.constant(x_adv.clone()))?.logits;
    let ce = cross_entropy_rows(clean_logits, labels)?.weighted_mean(sample_weights)?;
    let adv = kl_divergence(clean_logits, adv_logits)?;
    let total = ce.add(adv.scale(beta))?;
    Ok(LossTerms { total, ce, adv, clean_logits, adv_logits })
}

/// Mixed adversarial term over adversaries already merged by flag:
/// row `i` of `x_adv` is the targeted adversary when `targeted[i]`.
fn mixed_term<'t, T: Scalar>(
    clean_logits: Var<'t, T>,
    adv_logits: Var<'t, T>,
    targeted: &[bool],
) -> Result<Var<'t, T>> {
    let lp_clean = clean_logits.log_softmax()?;
    let lp_adv = adv_logits.log_softmax()?;
    let n = T::from_usize_lossy(targeted.len());
    let t: Vec<T> = targeted.iter().map(|&f| if f { T::one() / n } else { T::zero() }).collect();
    let u: Vec<T> = targeted.iter().map(|&f| if f { T::zero() } else { T::one() / n }).collect();
    let untargeted = lp_clean.kl_rows(lp_adv)?.weighted_sum(&u)?;
    let targeted = lp_adv.kl_rows(lp_clean)?.weighted_sum(&t)?;
    Ok(untargeted.add(targeted)?)
}

fn merge_rows<T: Scalar>(untargeted: &Tensor<T>, targeted: &Tensor<T>, flags: &[bool]) -> Result<Tensor<T>> {
    untargeted.same_shape(targeted, "mixed_adv_loss")?;
    if flags.len() != untargeted.rows() {
        return Err(TensorError::ShapeMismatch {
            op: "mixed_adv_loss",
            left: untargeted.shape().to_vec(),
            right: vec![flags.len()],
        }
        .into());
    }
    let mut merged = untargeted.clone();
    for (i, _) in flags.iter().enumerate().filter(|(_, f)| **f) {
        merged.row_mut(i).copy_from_slice(targeted.row(i));
    }
    Ok(merged)
}

/// `(1/B) Σ_i [t_i · KL(f(x_t,i) ‖ f(x_i)) + (1 − t_i) · KL(f(x_i) ‖ f(x_u,i))]`.
pub fn mixed_adv_loss<'t, T: Scalar>(
    net: &BoundMlp<'t, T>,
    tape: &'t Tape<T>,
    x: &Tensor<T>,
    x_adv_untargeted: &Tensor<T>,
    x_adv_targeted: &Tensor<T>,
    targeted: &[bool],
) -> Result<Var<'t, T>> {
    x.same_shape(x_adv_untargeted, "mixed_adv_loss")?;
    let merged = merge_rows(x_adv_untargeted, x_adv_targeted, targeted)?;
    let clean_logits = net.forward(tape.constant(x.clone()))?.logits;
    let adv_logits = net.forward(tape.constant(merged))?.logits;
    mixed_term(clean_logits, adv_logits, targeted)
}

/// `mean_i[w_i · CE(f(x_i), y_i)] + β · mixed_adv_loss`.
#[allow(clippy::too_many_arguments)]
pub fn total_loss<'t, T: Scalar>(
    net: &BoundMlp<'t, T>,
    tape: &'t Tape<T>,
    x: &Tensor<T>,
    labels: &[usize],
    x_adv_untargeted: &Tensor<T>,
    x_adv_targeted: &Tensor<T>,
    targeted: &[bool],
    sample_weights: &[T],
    beta: T,
) -> Result<LossTerms<'t, T>> {
    x.same_shape(x_adv_untargeted, "total_loss")?;
    let merged = merge_rows(x_adv_untargeted, x_adv_targeted, targeted)?;
    merged_loss(net, tape, x, labels, &merged, targeted, sample_weights, beta)
}

#[allow(clippy::too_many_arguments)]
fn merged_loss<'t, T: Scalar>(
    net: &BoundMlp<'t, T>,
    tape: &'t Tape<T>,
    x: &Tensor<T>,
    labels: &[usize],
    x_adv: &Tensor<T>,
    targeted: &[bool],
    sample_weights: &[T],
    beta: T,
) -> Result<LossTerms<'t, T>> {
    let clean_logits = net.forward(tape.constant(x.clone()))?.logits;
    let adv_logits = net.forward(tape.constant(x_adv.clone()))?.logits;
    let ce = cross_entropy_rows(clean_logits, labels)?.weighted_mean(sample_weights)?;
    let adv = mixed_term(clean_logits, adv_logits, targeted)?;
    let total = ce.add(adv.scale(beta))?;
    Ok(LossTerms { total, ce, adv, clean_logits, adv_logits })
}

/// One SGD update of a flat parameter buffer.
///
/// `g = grad + wd·p`, `v = m·v + g`, `p −= lr·(g + m·v)` with Nesterov,
/// otherwise `p −= lr·v`.
#[allow(clippy::too_many_arguments)]
pub fn sgd_step<T: Scalar>(
    param: &mut [T],
    grad: &[T],
    velocity: &mut [T],
    lr: T,
    momentum: T,
    weight_decay: T,
    nesterov: bool,
) {
    for ((p, &g0), v) in param.iter_mut().zip(grad).zip(velocity.iter_mut()) {
        let g = g0 + weight_decay * *p;
        *v = momentum * *v + g;
        let update = if nesterov { g + momentum * *v } else { *v };
        *p = *p - lr * update;
    }
}

/// SGD with momentum buffers for every parameter tensor of a model.
#[derive(Clone, Debug)]
pub struct Sgd<T> {
    pub momentum: T,
    pub weight_decay: T,
    pub nesterov: bool,
    velocity: Vec<Vec<T>>,
}

impl<T: Scalar> Sgd<T> {
    pub fn new(model: &MlpClassifier<T>, cfg: &OptimizerConfig) -> Self {
        Self {
            momentum: T::lit(cfg.momentum),
            weight_decay: T::lit(cfg.weight_decay),
            nesterov: cfg.nesterov,
            velocity: model.parameters().map(|p| vec![T::zero(); p.len()]).collect(),
        }
    }

    pub fn step(&mut self, model: &mut MlpClassifier<T>, grads: &[Tensor<T>], lr: T) -> Result<()> {
        if grads.len() != self.velocity.len() {
            return Err(Error::usage(format!(
                "{} gradients for {} parameter tensors",
                grads.len(),
                self.velocity.len()
            )));
        }
        for ((p, g), v) in model.parameters_mut().zip(grads).zip(&mut self.velocity) {
            p.same_shape(g, "sgd_step")?;
            sgd_step(p.data_mut(), g.data(), v, lr, self.momentum, self.weight_decay, self.nesterov);
        }
        Ok(())
    }
}

pub struct TrainOutcome<T> {
    pub model: MlpClassifier<T>,
    pub records: Vec<EpochRecord>,
    pub weights: ClassWeights<T>,
}

pub fn train<T: Scalar>(data: &Dataset<T>, cfg: &TrainConfig) -> Result<TrainOutcome<T>> {
    train_with(data, cfg, |_| Ok(()))
}

/// Trains and calls `on_epoch` after every epoch, e.g. to stream records.
pub fn train_with<T: Scalar>(
    data: &Dataset<T>,
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochRecord) -> Result<()>,
) -> Result<TrainOutcome<T>> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::config("training set is empty"));
    }
    let c = data.num_classes();
    let mut model = MlpClassifier::init(&cfg.layer_dims(data.input_dim(), c), cfg.seed)?;
    let mut opt = Sgd::new(&model, &cfg.optimizer);
    let beta = T::lit(cfg.beta);
    let lambda = T::lit(cfg.lambda);
    let mu = T::lit(cfg.mu);
    let eps_base: T = cfg.attack.epsilon.value();

    let mut weights = ClassWeights::uniform(c);
    let mut similarity: Option<SimilarityMatrix<T>> = None;
    let mut frozen = false;
    let mut prev_clean: Option<ClassMeanAccumulator<T>> = None;
    let mut records = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        let lr = lr_at(epoch, &cfg.lr, cfg.epochs);
        let weighted = cfg.method == Method::Trix && frozen;

        if cfg.method == Method::Trix && !frozen && cfg.stats == StatsGranularity::Epoch {
            if let Some(acc) = &prev_clean {
                let s = build_similarity(&acc.finish(), mu)?;
                weights = compute_weights(&s, lambda)?;
                similarity = Some(s);
            }
        }

        let mut clean_stats = ClassMeanAccumulator::new(c);
        let mut robust_stats = ClassMeanAccumulator::new(c);
        let mut clean_pred = Vec::with_capacity(data.len());
        let mut adv_pred = Vec::with_capacity(data.len());
        let mut seen_labels = Vec::with_capacity(data.len());
        let mut targeted_count = vec![0usize; c];
        let (mut sum_loss, mut sum_ce, mut sum_adv) = (0.0, 0.0, 0.0);

        let order = batches(data.len(), cfg.batch_size, rng::mix(&[cfg.seed, epoch as u64]))?;
        for (b, idx) in order.iter().enumerate() {
            let xb = data.inputs().select_rows(idx)?;
            let yb: Vec<usize> = idx.iter().map(|&i| data.labels()[i]).collect();

            if cfg.method == Method::Trix && !frozen && cfg.stats == StatsGranularity::Batch {
                let probs = model.forward(&xb)?.logits.softmax_rows()?;
                let s = build_similarity(&class_mean_predictions(&probs, &yb, c)?, mu)?;
                weights = compute_weights(&s, lambda)?;
                similarity = Some(s);
            }

            let flags = match cfg.method {
                Method::Trades => vec![false; yb.len()],
                Method::TargetedTrades => vec![true; yb.len()],
                Method::Trix => attack_policy(&weights, &yb, cfg.policy_average)?,
            };
            let eps = scale_epsilon(eps_base, &weights, &yb, weighted && cfg.epsilon_scaling);
            let sample_weights = if weighted { weights.per_sample(&yb) } else { vec![T::one(); yb.len()] };

            let batch_key = [cfg.seed, epoch as u64, b as u64];
            let x_adv = generate_adversaries(&model, &xb, &yb, &flags, &eps, cfg, c, batch_key)?;

            let tape = Tape::new();
            let net = model.bind(&tape, true);
            let terms = merged_loss(&net, &tape, &xb, &yb, &x_adv, &flags, &sample_weights, beta)?;
            let total = terms.total.item().to_f64_lossy();
            if !total.is_finite() {
                return Err(Error::Divergence { epoch, value: total });
            }
            let n = yb.len() as f64;
            sum_loss += total * n;
            sum_ce += terms.ce.item().to_f64_lossy() * n;
            sum_adv += terms.adv.item().to_f64_lossy() * n;

            let clean_logits = terms.clean_logits.value();
            let adv_logits = terms.adv_logits.value();
            clean_stats.add(&clean_logits.softmax_rows()?, &yb)?;
            robust_stats.add(&adv_logits.softmax_rows()?, &yb)?;
            clean_pred.extend(clean_logits.argmax_rows());
            adv_pred.extend(adv_logits.argmax_rows());
            for (&y, &f) in yb.iter().zip(&flags) {
                targeted_count[y] += f as usize;
            }
            seen_labels.extend_from_slice(&yb);

            let grads = tape.backward(terms.total)?;
            let g: Vec<Tensor<T>> = net
                .parameters()
                .map(|p| grads.wrt(p).cloned().ok_or(TensorError::Detached))
                .collect::<std::result::Result<_, _>>()?;
            drop(grads);
            drop(tape);
            opt.step(&mut model, &g, T::lit(lr))?;
        }

        if cfg.method == Method::Trix && !frozen && epoch + 1 == cfg.tau {
            if cfg.robust_stats == RobustStats::Untargeted {
                robust_stats = untargeted_stats(&model, data, cfg, rng::mix(&[cfg.seed, tag::UNTARGETED, epoch as u64]))?;
            }
            let s = build_similarity(&robust_stats.finish(), mu)?;
            weights = compute_weights(&s, lambda)?;
            similarity = Some(s);
            frozen = true;
        }
        prev_clean = Some(clean_stats);

        let counts = data.class_counts();
        let record = EpochRecord {
            epoch,
            lr,
            loss: sum_loss / data.len() as f64,
            ce: sum_ce / data.len() as f64,
            adv: sum_adv / data.len() as f64,
            clean_acc: classwise_accuracy(&clean_pred, &seen_labels, c)?,
            robust_acc: classwise_accuracy(&adv_pred, &seen_labels, c)?,
            class_weights: weights.to_f64(),
            similarity: similarity.as_ref().map(SimilarityMatrix::to_rows),
            targeted_fraction: targeted_count
                .iter()
                .zip(&counts)
                .map(|(&t, &n)| (n > 0).then(|| t as f64 / n as f64))
                .collect(),
            weights_frozen: frozen,
        };
        on_epoch(&record)?;
        records.push(record);
    }
    Ok(TrainOutcome { model, records, weights })
}

fn untargeted_stats<T: Scalar>(
    model: &MlpClassifier<T>,
    data: &Dataset<T>,
    cfg: &TrainConfig,
    seed: u64,
) -> Result<ClassMeanAccumulator<T>> {
    let attack = cfg.attack.build::<T>(AttackMode::UntargetedKl, TRAIN_STEP_DIVISOR, seed);
    let adv = pgd_attack(model, data.inputs(), data.labels(), &attack, None, None)?;
    let mut acc = ClassMeanAccumulator::new(data.num_classes());
    acc.add(&model.forward(&adv)?.logits.softmax_rows()?, data.labels())?;
    Ok(acc)
}

/// Builds the batch's adversaries: untargeted KL for unflagged rows and
/// targeted CE toward a random wrong class for flagged rows.
#[allow(clippy::too_many_arguments)]
fn generate_adversaries<T: Scalar>(
    model: &MlpClassifier<T>,
    x: &Tensor<T>,
    labels: &[usize],
    flags: &[bool],
    eps: &[T],
    cfg: &TrainConfig,
    num_classes: usize,
    key: [u64; 3],
) -> Result<Tensor<T>> {
    let mut out = x.clone();
    for targeted in [false, true] {
        let rows: Vec<usize> = (0..labels.len()).filter(|&i| flags[i] == targeted).collect();
        if rows.is_empty() {
            continue;
        }
        let xs = x.select_rows(&rows)?;
        let ys: Vec<usize> = rows.iter().map(|&i| labels[i]).collect();
        let es: Vec<T> = rows.iter().map(|&i| eps[i]).collect();
        let (mode, stream) = if targeted {
            (AttackMode::TargetedCe, tag::TARGETED)
        } else {
            (AttackMode::UntargetedKl, tag::UNTARGETED)
        };
        let seed = rng::mix(&[key[0], stream, key[1], key[2]]);
        let attack = cfg.attack.build::<T>(mode, TRAIN_STEP_DIVISOR, seed);
        let adv = if targeted {
            let targets = sample_targets(&ys, num_classes, seed)?;
            pgd_attack(model, &xs, &ys, &attack, Some(&es), Some(&targets))?
        } else {
            pgd_attack(model, &xs, &ys, &attack, Some(&es), None)?
        };
        for (k, &i) in rows.iter().enumerate() {
            out.row_mut(i).copy_from_slice(adv.row(k));
        }
    }
    Ok(out)
}
