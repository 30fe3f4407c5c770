//! Training loss: a base regression loss plus four semantic penalties
//! faded in over the course of training.
//!
//! The penalties push rules toward short (`penalty_long`), crisp
//! (`penalty_fuzzy`) and ontology-consistent (`penalty_implied`,
//! `penalty_exclusive`) form. A scaling factor `alpha` ramps from 0 to
//! `alpha_max` between two configured epochs so the model first learns to
//! predict and only then gets squeezed into readable rules.

use serde::{Deserialize, Serialize};

use crate::model::{sigmoid, RuleModel};
use crate::ontology::ConstraintSet;
use crate::{Error, Result};

/// Base regression loss applied to predictions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaseLoss {
    /// Binary cross entropy on predictions and targets divided by
    /// `target_scale`, with the scaled prediction clamped away from 0/1.
    #[default]
    Bce,
    /// Mean squared error on the raw output scale.
    Mse,
}

/// Loss configuration: base loss, rule-length threshold and the alpha
/// fade-in schedule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LossConfig {
    /// Rule-length threshold: the sum of literal sigmoids a rule may use
    /// before the length penalty kicks in.
    pub theta: f64,
    pub base_loss: BaseLoss,
    /// Divisor mapping raw targets into [0, 1] for bce.
    pub target_scale: f64,
    /// Clamp distance from 0 and 1 for the scaled bce prediction.
    pub clamp_eps: f64,
    pub alpha_max: f64,
    pub alpha_start_epoch: usize,
    pub alpha_end_epoch: usize,
    /// Sum length/crispness penalties over all 2n literal weights
    /// (false: positive literals only).
    pub penalize_all_literals: bool,
    /// Per-penalty multipliers (long, fuzzy, implied, exclusive) applied
    /// on top of the shared alpha.
    pub penalty_weights: [f64; 4],
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig {
            theta: 3.0,
            base_loss: BaseLoss::Bce,
            target_scale: 100.0,
            clamp_eps: 1e-6,
            alpha_max: 1.0,
            alpha_start_epoch: 50,
            alpha_end_epoch: 150,
            penalize_all_literals: true,
            penalty_weights: [1.0; 4],
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if self.theta < 0.0 {
            return Err(Error::Config(format!("theta must be >= 0, got {}", self.theta)));
        }
        if !(self.clamp_eps > 0.0 && self.clamp_eps < 0.5) {
            return Err(Error::Config(format!(
                "clamp_eps must be in (0, 0.5), got {}",
                self.clamp_eps
            )));
        }
        if self.alpha_start_epoch > self.alpha_end_epoch {
            return Err(Error::Config(format!(
                "alpha_start_epoch ({}) must not exceed alpha_end_epoch ({})",
                self.alpha_start_epoch, self.alpha_end_epoch
            )));
        }
        if self.alpha_max < 0.0 {
            return Err(Error::Config(format!("alpha_max must be >= 0, got {}", self.alpha_max)));
        }
        if !(self.target_scale > 0.0) {
            return Err(Error::Config(format!(
                "target_scale must be > 0, got {}",
                self.target_scale
            )));
        }
        if self.penalty_weights.iter().any(|w| *w < 0.0 || !w.is_finite()) {
            return Err(Error::Config("penalty weights must be finite and >= 0".into()));
        }
        Ok(())
    }

    /// Number of literal weights the length/crispness penalties run over.
    pub(crate) fn literal_limit(&self, n: usize) -> usize {
        if self.penalize_all_literals {
            2 * n
        } else {
            n
        }
    }
}

pub(crate) fn penalty_long_upto(model: &RuleModel, theta: f64, limit: usize) -> f64 {
    let two_n = 2 * model.n;
    let mut total = 0.0;
    for i in 0..model.m {
        let row = &model.w[i * two_n..i * two_n + limit];
        let length: f64 = row.iter().map(|&w| sigmoid(w)).sum();
        total += (length - theta).max(0.0);
    }
    total
}

/// Hinge penalty on rule length: for each rule, the amount by which the
/// sum of its literal sigmoids exceeds `theta`.
pub fn penalty_long(model: &RuleModel, theta: f64) -> f64 {
    penalty_long_upto(model, theta, 2 * model.n)
}

pub(crate) fn penalty_fuzzy_upto(model: &RuleModel, limit: usize) -> f64 {
    let two_n = 2 * model.n;
    let mut total = 0.0;
    for i in 0..model.m {
        for &w in &model.w[i * two_n..i * two_n + limit] {
            let s = sigmoid(w);
            total += s * (1.0 - s);
        }
    }
    total
}

/// Quadratic crispness penalty: `sigma(w) * (1 - sigma(w))` summed over
/// every literal weight; zero only for fully crisp rules.
pub fn penalty_fuzzy(model: &RuleModel) -> f64 {
    penalty_fuzzy_upto(model, 2 * model.n)
}

fn penalty_pairs(model: &RuleModel, pairs: &[(usize, usize)]) -> f64 {
    let two_n = 2 * model.n;
    let mut total = 0.0;
    for i in 0..model.m {
        let row = &model.w[i * two_n..(i + 1) * two_n];
        for &(a, b) in pairs {
            total += sigmoid(row[a]).min(sigmoid(row[b]));
        }
    }
    total
}

/// Penalty for co-occurrence of implied literal pairs within a rule:
/// `min(sigma(w_a), sigma(w_b))` summed over rules and pairs.
pub fn penalty_implied(model: &RuleModel, pairs: &[(usize, usize)]) -> f64 {
    penalty_pairs(model, pairs)
}

/// Same mechanism as [`penalty_implied`], over mutually exclusive pairs
/// (including the built-in `A AND not A` contradictions).
pub fn penalty_exclusive(model: &RuleModel, pairs: &[(usize, usize)]) -> f64 {
    penalty_pairs(model, pairs)
}

/// Penalty fade-in: 0 before `alpha_start_epoch`, linear ramp to
/// `alpha_max` at `alpha_end_epoch`, constant after.
pub fn alpha_schedule(epoch: usize, cfg: &LossConfig) -> f64 {
    if epoch < cfg.alpha_start_epoch {
        0.0
    } else if epoch >= cfg.alpha_end_epoch {
        cfg.alpha_max
    } else {
        let span = (cfg.alpha_end_epoch - cfg.alpha_start_epoch) as f64;
        cfg.alpha_max * (epoch - cfg.alpha_start_epoch) as f64 / span
    }
}

/// All four penalty values for one model (raw, before alpha and the
/// per-penalty multipliers).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PenaltyValues {
    pub long: f64,
    pub fuzzy: f64,
    pub implied: f64,
    pub exclusive: f64,
}

impl PenaltyValues {
    pub fn compute(model: &RuleModel, constraints: &ConstraintSet, cfg: &LossConfig) -> Self {
        let limit = cfg.literal_limit(model.n);
        PenaltyValues {
            long: penalty_long_upto(model, cfg.theta, limit),
            fuzzy: penalty_fuzzy_upto(model, limit),
            implied: penalty_pairs(model, constraints.implications()),
            exclusive: penalty_pairs(model, constraints.exclusions()),
        }
    }

    /// Combined penalty term under the configured multipliers.
    pub fn weighted_sum(&self, cfg: &LossConfig) -> f64 {
        let [cl, cf, ci, ce] = cfg.penalty_weights;
        cl * self.long + cf * self.fuzzy + ci * self.implied + ce * self.exclusive
    }
}

/// Base loss over a batch of predictions.
pub fn base_loss(y_pred: &[f64], y_target: &[f64], cfg: &LossConfig) -> Result<f64> {
    if y_pred.len() != y_target.len() {
        return Err(Error::Dimension {
            context: "loss targets".into(),
            expected: y_pred.len(),
            got: y_target.len(),
        });
    }
    if y_pred.is_empty() {
        return Err(Error::Data("loss needs at least one sample".into()));
    }
    let n = y_pred.len() as f64;
    match cfg.base_loss {
        BaseLoss::Mse => {
            let sum: f64 = y_pred
                .iter()
                .zip(y_target)
                .map(|(&p, &t)| (p - t) * (p - t))
                .sum();
            Ok(sum / n)
        }
        BaseLoss::Bce => {
            let mut sum = 0.0;
            for (&pred, &target) in y_pred.iter().zip(y_target) {
                let y = target / cfg.target_scale;
                if !(0.0..=1.0).contains(&y) {
                    return Err(Error::Data(format!(
                        "bce target {target} outside [0, {}]",
                        cfg.target_scale
                    )));
                }
                let p = (pred / cfg.target_scale).clamp(cfg.clamp_eps, 1.0 - cfg.clamp_eps);
                sum -= y * p.ln() + (1.0 - y) * (1.0 - p).ln();
            }
            Ok(sum / n)
        }
    }
}

/// Full training loss: base loss plus `alpha` times the weighted penalty
/// sum.
pub fn total_loss(
    y_pred: &[f64],
    y_target: &[f64],
    model: &RuleModel,
    constraints: &ConstraintSet,
    alpha: f64,
    cfg: &LossConfig,
) -> Result<f64> {
    let base = base_loss(y_pred, y_target, cfg)?;
    if alpha == 0.0 {
        return Ok(base);
    }
    let penalties = PenaltyValues::compute(model, constraints, cfg);
    Ok(base + alpha * penalties.weighted_sum(cfg))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Aggregator;

    fn model_from_weights(n: usize, rows: Vec<Vec<f64>>) -> RuleModel {
        let names = (0..n).map(|j| format!("f{j}")).collect();
        let m = rows.len();
        let w = rows.into_iter().flatten().collect();
        RuleModel::new(names, w, vec![1.0; m], 0.0, Aggregator::Min).unwrap()
    }

    #[test]
    fn long_penalty_below_threshold_is_zero() {
        // 2n = 4 weights at 0: sigma sum = 2.0 <= theta 3
        let model = model_from_weights(2, vec![vec![0.0; 4]]);
        assert_eq!(penalty_long(&model, 3.0), 0.0);
    }

    #[test]
    fn long_penalty_hinge_sums() {
        // rule 0: sigma sum 2.0; rule 1: two crisp (1.0) + six at 0.5 = 5.0
        let rule0 = vec![0.0, 0.0, 0.0, 0.0, -40.0, -40.0, -40.0, -40.0];
        let rule1 = vec![40.0, 40.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0];
        let model = model_from_weights(4, vec![rule0, rule1]);
        let p = penalty_long(&model, 3.0);
        assert!((p - 2.0).abs() < 1e-9);
    }

    #[test]
    fn fuzzy_penalty_peaks_at_half() {
        let model = model_from_weights(2, vec![vec![0.0; 4]]);
        assert!((penalty_fuzzy(&model) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn fuzzy_penalty_crisp_weights_vanish() {
        let model = model_from_weights(2, vec![vec![20.0, -20.0, 20.0, -20.0]]);
        assert!(penalty_fuzzy(&model) < 1e-7);
    }

    #[test]
    fn fuzzy_penalty_single_soft_weight() {
        let w_soft = (0.9f64 / 0.1).ln(); // sigma = 0.9
        let model = model_from_weights(2, vec![vec![w_soft, -40.0, -40.0, -40.0]]);
        assert!((penalty_fuzzy(&model) - 0.09).abs() < 1e-9);
    }

    fn logit(p: f64) -> f64 {
        (p / (1.0 - p)).ln()
    }

    #[test]
    fn implied_penalty_empty_pairs() {
        let model = model_from_weights(2, vec![vec![0.0; 4]]);
        assert_eq!(penalty_implied(&model, &[]), 0.0);
    }

    #[test]
    fn implied_penalty_takes_min() {
        let model =
            model_from_weights(2, vec![vec![logit(0.8), logit(0.6), -40.0, -40.0]]);
        assert!((penalty_implied(&model, &[(0, 1)]) - 0.6).abs() < 1e-9);
    }

    #[test]
    fn implied_penalty_sums_over_rules() {
        let rule0 = vec![logit(0.8), logit(0.6), -40.0, -40.0];
        let rule1 = vec![logit(0.1), logit(0.9), -40.0, -40.0];
        let model = model_from_weights(2, vec![rule0, rule1]);
        assert!((penalty_implied(&model, &[(0, 1)]) - 0.7).abs() < 1e-9);
    }

    #[test]
    fn exclusive_penalty_contradiction_pair() {
        // sigma = 1 on both a literal and its negation
        let model = model_from_weights(2, vec![vec![500.0, -500.0, 500.0, -500.0]]);
        let p = penalty_exclusive(&model, &[(0, 2)]);
        assert!((p - 1.0).abs() < 1e-9);
    }

    #[test]
    fn exclusive_penalty_masked_weights() {
        let model = model_from_weights(2, vec![vec![-40.0; 4]]);
        assert!(penalty_exclusive(&model, &[(0, 2), (1, 3)]) < 1e-9);
    }

    #[test]
    fn exclusive_penalty_disjoint_pair() {
        let model =
            model_from_weights(2, vec![vec![logit(0.3), logit(0.7), -40.0, -40.0]]);
        assert!((penalty_exclusive(&model, &[(0, 1)]) - 0.3).abs() < 1e-9);
    }

    #[test]
    fn alpha_schedule_ramp() {
        let cfg = LossConfig {
            alpha_start_epoch: 50,
            alpha_end_epoch: 150,
            alpha_max: 1.0,
            ..LossConfig::default()
        };
        assert_eq!(alpha_schedule(0, &cfg), 0.0);
        assert_eq!(alpha_schedule(49, &cfg), 0.0);
        assert_eq!(alpha_schedule(50, &cfg), 0.0);
        assert!((alpha_schedule(100, &cfg) - 0.5).abs() < 1e-12);
        assert_eq!(alpha_schedule(150, &cfg), 1.0);
        assert_eq!(alpha_schedule(1000, &cfg), 1.0);
    }

    #[test]
    fn alpha_schedule_is_non_decreasing() {
        let cfg = LossConfig::default();
        let mut prev = 0.0;
        for epoch in 0..400 {
            let a = alpha_schedule(epoch, &cfg);
            assert!(a >= prev);
            prev = a;
        }
    }

    #[test]
    fn bce_perfect_crisp_prediction_is_near_zero() {
        let cfg = LossConfig { target_scale: 1.0, ..LossConfig::default() };
        let loss = base_loss(&[0.0, 1.0], &[0.0, 1.0], &cfg).unwrap();
        assert!(loss < 1e-5, "{loss}");
    }

    #[test]
    fn bce_at_half_is_ln_two() {
        let cfg = LossConfig { target_scale: 100.0, ..LossConfig::default() };
        for target in [0.0, 30.0, 100.0] {
            let loss = base_loss(&[50.0], &[target], &cfg).unwrap();
            assert!((loss - std::f64::consts::LN_2).abs() < 1e-12);
        }
    }

    #[test]
    fn bce_rejects_out_of_scale_target() {
        let cfg = LossConfig::default();
        assert!(base_loss(&[50.0], &[101.0], &cfg).is_err());
        assert!(base_loss(&[50.0], &[-1.0], &cfg).is_err());
    }

    #[test]
    fn total_loss_with_zero_alpha_is_base_loss() {
        let model = model_from_weights(2, vec![vec![0.0; 4]]);
        let constraints = ConstraintSet::contradictions_only(2);
        let cfg = LossConfig { base_loss: BaseLoss::Mse, ..LossConfig::default() };
        let total = total_loss(&[3.0], &[1.0], &model, &constraints, 0.0, &cfg).unwrap();
        let base = base_loss(&[3.0], &[1.0], &cfg).unwrap();
        assert_eq!(total, base);
        assert_eq!(total, 4.0);
    }

    #[test]
    fn total_loss_sums_penalties_hand_computed() {
        // one rule, 2 features, all weights 0 (sigma 0.5 everywhere):
        //   long: sum sigma = 2.0, theta 3 -> 0
        //   fuzzy: 4 * 0.25 = 1.0
        //   implied: pair (0,1) -> 0.5
        //   exclusive: contradictions (0,2), (1,3) -> 1.0
        let model = model_from_weights(2, vec![vec![0.0; 4]]);
        let constraints = ConstraintSet::new(2, vec![(0, 1)], vec![]).unwrap();
        let cfg = LossConfig { base_loss: BaseLoss::Mse, ..LossConfig::default() };
        let total = total_loss(&[5.0], &[5.0], &model, &constraints, 1.0, &cfg).unwrap();
        assert!((total - 2.5).abs() < 1e-9);

        let penalties = PenaltyValues::compute(&model, &constraints, &cfg);
        assert_eq!(penalties.long, 0.0);
        assert!((penalties.fuzzy - 1.0).abs() < 1e-12);
        assert!((penalties.implied - 0.5).abs() < 1e-12);
        assert!((penalties.exclusive - 1.0).abs() < 1e-12);
    }

    #[test]
    fn positive_only_literal_scope() {
        // negated-literal weights at 0 are invisible when
        // penalize_all_literals is off
        let model = model_from_weights(2, vec![vec![-40.0, -40.0, 0.0, 0.0]]);
        let cfg = LossConfig { penalize_all_literals: false, ..LossConfig::default() };
        let constraints = ConstraintSet::contradictions_only(2);
        let p = PenaltyValues::compute(&model, &constraints, &cfg);
        assert!(p.fuzzy < 1e-9);
        let cfg_all = LossConfig::default();
        let p_all = PenaltyValues::compute(&model, &constraints, &cfg_all);
        assert!((p_all.fuzzy - 0.5).abs() < 1e-9);
    }
}
