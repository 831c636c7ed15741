//! Class-wise clean and adversarial evaluation of a trained model.

use crate::attacks::{pgd_attack, AttackConfig};
use crate::data::Dataset;
use crate::error::Result;
use crate::metrics::classwise_accuracy;
use crate::models::MlpClassifier;
use crate::scalar::Scalar;

#[derive(Clone, Debug, PartialEq)]
pub struct Evaluation {
    pub clean_preds: Vec<usize>,
    pub adv_preds: Vec<usize>,
    pub clean_acc: Vec<Option<f64>>,
    pub robust_acc: Vec<Option<f64>>,
}

/// Evaluates on clean inputs and, when `attack` is given, on its
/// adversaries. Without an attack the robust columns equal the clean ones.
pub fn evaluate<T: Scalar>(
    model: &MlpClassifier<T>,
    data: &Dataset<T>,
    attack: Option<&AttackConfig<T>>,
) -> Result<Evaluation> {
    let c = data.num_classes().max(model.num_classes());
    let clean_preds = model.predict(data.inputs())?;
    let adv_preds = match attack {
        Some(cfg) => model.predict(&pgd_attack(model, data.inputs(), data.labels(), cfg, None, None)?)?,
        None => clean_preds.clone(),
    };
    Ok(Evaluation {
        clean_acc: classwise_accuracy(&clean_preds, data.labels(), c)?,
        robust_acc: classwise_accuracy(&adv_preds, data.labels(), c)?,
        clean_preds,
        adv_preds,
    })
}
