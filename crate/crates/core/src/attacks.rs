//! L∞ projected-gradient adversaries.
//!
//! Three objectives are supported:
//!
//! * `UntargetedKl` ascends `KL(f(x) ‖ f(x + δ))`, the inner maximization of
//!   the TRADES objective. It starts from `δ₀ = 0.001·N(0, I)`.
//! * `UntargetedCe` ascends the cross-entropy of the true label. Used for
//!   evaluation; optionally starts uniformly inside the ball.
//! * `TargetedCe` descends the cross-entropy of a chosen wrong label.
//!
//! Every step moves by `α·sign(∇)` (with `sign(0) = 0`) and projects back
//! onto the per-sample ball intersected with the `[0, 1]` box.
//!
//! Rows are processed in fixed-size chunks on the rayon pool. Each sample
//! draws its random start from a stream keyed by `(seed, row index)`, so
//! the output does not depend on the number of worker threads.

use crate::autodiff::{cross_entropy_rows, Tape};
use crate::error::{Error, Result};
use crate::models::MlpClassifier;
use crate::rng::{self, tag};
use crate::scalar::Scalar;
use crate::tensor::{Tensor, TensorError};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

const CHUNK_ROWS: usize = 32;
const KL_INIT_SCALE: f64 = 0.001;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttackMode {
    UntargetedKl,
    UntargetedCe,
    TargetedCe,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AttackConfig<T> {
    pub epsilon: T,
    pub step_size: T,
    pub num_steps: usize,
    pub mode: AttackMode,
    pub random_start: bool,
    pub seed: u64,
}

impl<T: Scalar> AttackConfig<T> {
    /// Training adversary: `K = 10`, `α = ε/4`, no uniform start.
    pub fn training(epsilon: T, mode: AttackMode, seed: u64) -> Self {
        Self {
            epsilon,
            step_size: epsilon / T::lit(4.0),
            num_steps: 10,
            mode,
            random_start: false,
            seed,
        }
    }

    /// Evaluation adversary: CE-PGD, `K = 20`, `α = ε/10`, uniform start.
    pub fn evaluation(epsilon: T, seed: u64) -> Self {
        Self {
            epsilon,
            step_size: epsilon / T::lit(10.0),
            num_steps: 20,
            mode: AttackMode::UntargetedCe,
            random_start: true,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > T::zero() && self.epsilon <= T::one()) {
            return Err(Error::config(format!("epsilon must lie in (0, 1], got {}", self.epsilon)));
        }
        if !(self.step_size > T::zero()) {
            return Err(Error::config(format!("step_size must be positive, got {}", self.step_size)));
        }
        if self.num_steps == 0 {
            return Err(Error::config("num_steps must be at least 1"));
        }
        Ok(())
    }
}

/// Clamps each row of `x_adv` to `[x − eps_i, x + eps_i]`, then to `[0, 1]`.
pub fn project_linf<T: Scalar>(x_adv: &Tensor<T>, x: &Tensor<T>, eps: &[T]) -> Result<Tensor<T>> {
    x_adv.same_shape(x, "project_linf")?;
    if eps.len() != x.rows() {
        return Err(TensorError::ShapeMismatch {
            op: "project_linf",
            left: x.shape().to_vec(),
            right: vec![eps.len()],
        }
        .into());
    }
    let mut out = x_adv.clone();
    for (i, &e) in eps.iter().enumerate() {
        let base = x.row(i);
        for (o, &b) in out.row_mut(i).iter_mut().zip(base) {
            *o = o.max(b - e).min(b + e).max(T::zero()).min(T::one());
        }
    }
    Ok(out)
}

/// Draws one wrong label per sample, uniform over the other `C − 1` classes.
pub fn sample_targets(labels: &[usize], num_classes: usize, seed: u64) -> Result<Vec<usize>> {
    if num_classes < 2 {
        return Err(Error::config(format!(
            "targeted attacks need at least 2 classes, got {num_classes}"
        )));
    }
    labels
        .iter()
        .enumerate()
        .map(|(i, &y)| {
            if y >= num_classes {
                return Err(Error::usage(format!("label {y} at row {i} exceeds {num_classes} classes")));
            }
            let r = rng::stream(&[seed, tag::TARGETS, i as u64]).random_range(0..num_classes - 1);
            Ok(if r >= y { r + 1 } else { r })
        })
        .collect()
}

/// Runs PGD from `x`. `eps_per_sample` defaults to `config.epsilon` for
/// every row; `targets` must be given exactly when the mode is targeted.
pub fn pgd_attack<T: Scalar>(
    model: &MlpClassifier<T>,
    x: &Tensor<T>,
    labels: &[usize],
    config: &AttackConfig<T>,
    eps_per_sample: Option<&[T]>,
    targets: Option<&[usize]>,
) -> Result<Tensor<T>> {
    config.validate()?;
    let (rows, dim) = x.dims2("pgd_attack")?;
    if dim != model.input_dim() {
        return Err(TensorError::ShapeMismatch {
            op: "pgd_attack",
            left: x.shape().to_vec(),
            right: vec![model.input_dim()],
        }
        .into());
    }
    if labels.len() != rows {
        return Err(Error::usage(format!("{} labels for {rows} samples", labels.len())));
    }
    match (config.mode, targets) {
        (AttackMode::TargetedCe, None) => {
            return Err(Error::usage("targeted_ce attack requires target labels"));
        }
        (AttackMode::UntargetedKl | AttackMode::UntargetedCe, Some(_)) => {
            return Err(Error::usage("target labels supplied to an untargeted attack"));
        }
        (_, Some(t)) if t.len() != rows => {
            return Err(Error::usage(format!("{} targets for {rows} samples", t.len())));
        }
        _ => {}
    }
    let eps = match eps_per_sample {
        Some(e) if e.len() != rows => {
            return Err(Error::usage(format!("{} radii for {rows} samples", e.len())));
        }
        Some(e) => e.to_vec(),
        None => vec![config.epsilon; rows],
    };
    if eps.iter().any(|e| !(e.is_finite() && *e >= T::zero())) {
        return Err(Error::usage("per-sample radii must be finite and nonnegative"));
    }

    let starts: Vec<usize> = (0..rows).step_by(CHUNK_ROWS).collect();
    let parts = starts
        .into_par_iter()
        .map(|start| {
            let end = (start + CHUNK_ROWS).min(rows);
            attack_chunk(model, x, labels, targets, &eps, config, start, end)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Tensor::concat_rows(&parts)?)
}

#[allow(clippy::too_many_arguments)]
fn attack_chunk<T: Scalar>(
    model: &MlpClassifier<T>,
    x: &Tensor<T>,
    labels: &[usize],
    targets: Option<&[usize]>,
    eps: &[T],
    config: &AttackConfig<T>,
    start: usize,
    end: usize,
) -> Result<Tensor<T>> {
    let idx: Vec<usize> = (start..end).collect();
    let xc = x.select_rows(&idx)?;
    let eps_c = &eps[start..end];
    let goal = match config.mode {
        AttackMode::TargetedCe => &targets.expect("checked by caller")[start..end],
        _ => &labels[start..end],
    };
    let clean_logp = match config.mode {
        AttackMode::UntargetedKl => Some(model.forward(&xc)?.logits.log_softmax_rows()?),
        _ => None,
    };

    let mut adv = xc.clone();
    for (r, global) in (start..end).enumerate() {
        let mut rng = rng::stream(&[config.seed, tag::ATTACK_START, global as u64]);
        let e = eps_c[r];
        for v in adv.row_mut(r) {
            match config.mode {
                AttackMode::UntargetedKl => {
                    let z: f64 = rng.sample(StandardNormal);
                    *v = *v + T::lit(KL_INIT_SCALE * z);
                }
                _ if config.random_start => {
                    let u: f64 = rng.random_range(-1.0..=1.0);
                    *v = *v + e * T::lit(u);
                }
                _ => {}
            }
        }
    }
    adv = project_linf(&adv, &xc, eps_c)?;

    let direction = match config.mode {
        AttackMode::TargetedCe => -T::one(),
        _ => T::one(),
    };
    for _ in 0..config.num_steps {
        let tape = Tape::new();
        let net = model.bind(&tape, false);
        let xa = tape.leaf(adv.clone(), true);
        let logits = net.forward(xa)?.logits;
        let loss = match &clean_logp {
            Some(lp) => tape.constant(lp.clone()).kl_rows(logits.log_softmax()?)?.sum(),
            None => cross_entropy_rows(logits, goal)?.sum(),
        };
        let grads = tape.backward(loss)?;
        let g = grads.wrt(xa).expect("input leaf tracks gradients");
        for (a, &gv) in adv.data_mut().iter_mut().zip(g.data()) {
            *a = *a + direction * config.step_size * gv.sign();
        }
        adv = project_linf(&adv, &xc, eps_c)?;
    }
    Ok(adv)
}
