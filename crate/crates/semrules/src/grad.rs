//! Analytic gradients of the full training loss.
//!
//! The computation graph is fixed (literal blend, aggregated fit, scaled
//! sum, base loss plus penalties), so gradients are hand-derived rather
//! than taped. At min/max aggregator ties the subgradient is routed
//! entirely to the lowest-index extremal literal, and pair penalties route
//! to the pair member with the smaller sigmoid (first on ties); both
//! conventions keep training deterministic.

use crate::features::FeatureMatrix;
use crate::loss::{BaseLoss, LossConfig, PenaltyValues};
use crate::model::{expand_literals, sigmoid, Aggregator, RuleModel};
use crate::ontology::ConstraintSet;
use crate::{Error, Result};

/// Gradients with respect to every model parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    /// d loss / d W, row-major `m x 2n`.
    pub w: Vec<f64>,
    /// d loss / d r.
    pub r: Vec<f64>,
    /// d loss / d b.
    pub b: f64,
}

/// Gradients plus the loss value they were taken at.
#[derive(Debug, Clone, PartialEq)]
pub struct GradOutput {
    pub grads: Gradients,
    /// Full loss: base plus alpha-scaled penalties.
    pub loss: f64,
    /// Base loss alone.
    pub base: f64,
    /// Raw penalty values (before alpha and multipliers).
    pub penalties: PenaltyValues,
}

/// Per-sample base loss and its derivative with respect to the raw
/// prediction (clamped bce regions contribute zero slope).
fn base_loss_term(pred: f64, target: f64, cfg: &LossConfig) -> Result<(f64, f64)> {
    match cfg.base_loss {
        BaseLoss::Mse => {
            let d = pred - target;
            Ok((d * d, 2.0 * d))
        }
        BaseLoss::Bce => {
            let scale = cfg.target_scale;
            let y = target / scale;
            if !(0.0..=1.0).contains(&y) {
                return Err(Error::Data(format!("bce target {target} outside [0, {scale}]")));
            }
            let raw = pred / scale;
            let p = raw.clamp(cfg.clamp_eps, 1.0 - cfg.clamp_eps);
            let loss = -(y * p.ln() + (1.0 - y) * (1.0 - p).ln());
            let slope = if raw <= cfg.clamp_eps || raw >= 1.0 - cfg.clamp_eps {
                0.0
            } else {
                (-y / p + (1.0 - y) / (1.0 - p)) / scale
            };
            Ok((loss, slope))
        }
    }
}

/// Computes the full loss and its analytic gradients over a batch.
pub fn model_gradients(
    model: &RuleModel,
    features: &FeatureMatrix,
    targets: &[f64],
    cfg: &LossConfig,
    constraints: &ConstraintSet,
    alpha: f64,
) -> Result<GradOutput> {
    model.validate()?;
    cfg.validate()?;
    if features.n_cols() != model.n {
        return Err(Error::Dimension {
            context: "gradient features".into(),
            expected: model.n,
            got: features.n_cols(),
        });
    }
    if targets.len() != features.n_rows() {
        return Err(Error::Dimension {
            context: "gradient targets".into(),
            expected: features.n_rows(),
            got: targets.len(),
        });
    }
    if targets.is_empty() {
        return Err(Error::Data("gradient batch is empty".into()));
    }
    if let Some(idx) = targets.iter().position(|t| !t.is_finite()) {
        return Err(Error::NonFinite { context: "targets".into(), index: idx });
    }
    if alpha < 0.0 {
        return Err(Error::Config(format!("alpha must be >= 0, got {alpha}")));
    }

    let m = model.m;
    let two_n = 2 * model.n;
    let rows = features.n_rows();
    let inv_rows = 1.0 / rows as f64;
    let agg = model.aggregator;

    // Sigmoids are constant across the batch; hoist them out of the row loop.
    let sig: Vec<f64> = model.w.iter().map(|&w| sigmoid(w)).collect();

    let mut dw = vec![0.0; m * two_n];
    let mut dr = vec![0.0; m];
    let mut db = 0.0;
    let mut base_sum = 0.0;

    let mut mu: Vec<f64> = Vec::with_capacity(two_n);
    let mut fits = vec![0.0; m];
    let mut args = vec![0usize; m];
    // literal terms per rule, only needed by the product aggregator
    let mut terms = if agg == Aggregator::Product { vec![0.0; m * two_n] } else { Vec::new() };

    for k in 0..rows {
        expand_literals(features.row(k), &mut mu);

        for i in 0..m {
            let srow = &sig[i * two_n..(i + 1) * two_n];
            match agg {
                Aggregator::Min => {
                    let mut best = f64::INFINITY;
                    let mut best_j = 0;
                    for (j, (&s, &u)) in srow.iter().zip(&mu).enumerate() {
                        let t = 1.0 - s * (1.0 - u);
                        if t < best {
                            best = t;
                            best_j = j;
                        }
                    }
                    fits[i] = if two_n == 0 { 1.0 } else { best };
                    args[i] = best_j;
                }
                Aggregator::Max => {
                    let mut best = f64::NEG_INFINITY;
                    let mut best_j = 0;
                    for (j, (&s, &u)) in srow.iter().zip(&mu).enumerate() {
                        let t = 1.0 - s * (1.0 - u);
                        if t > best {
                            best = t;
                            best_j = j;
                        }
                    }
                    fits[i] = if two_n == 0 { 1.0 } else { best };
                    args[i] = best_j;
                }
                Aggregator::Product => {
                    let mut prod = 1.0;
                    for (j, (&s, &u)) in srow.iter().zip(&mu).enumerate() {
                        let t = 1.0 - s * (1.0 - u);
                        terms[i * two_n + j] = t;
                        prod *= t;
                    }
                    fits[i] = prod;
                }
            }
        }

        let mut pred = model.b;
        for i in 0..m {
            pred += fits[i] * model.r[i];
        }

        let (loss_k, slope) = base_loss_term(pred, targets[k], cfg)?;
        base_sum += loss_k;
        let g = slope * inv_rows;
        if g == 0.0 {
            continue;
        }
        db += g;
        for i in 0..m {
            dr[i] += g * fits[i];
            let dfit = g * model.r[i];
            if dfit == 0.0 {
                continue;
            }
            match agg {
                Aggregator::Min | Aggregator::Max => {
                    let j = args[i];
                    let s = sig[i * two_n + j];
                    dw[i * two_n + j] += dfit * (-(s * (1.0 - s)) * (1.0 - mu[j]));
                }
                Aggregator::Product => {
                    // leave-one-out products via prefix/suffix scans
                    let trow = &terms[i * two_n..(i + 1) * two_n];
                    let mut suffix = vec![1.0; two_n + 1];
                    for j in (0..two_n).rev() {
                        suffix[j] = suffix[j + 1] * trow[j];
                    }
                    let mut prefix = 1.0;
                    for j in 0..two_n {
                        let s = sig[i * two_n + j];
                        let loo = prefix * suffix[j + 1];
                        dw[i * two_n + j] += dfit * loo * (-(s * (1.0 - s)) * (1.0 - mu[j]));
                        prefix *= trow[j];
                    }
                }
            }
        }
    }

    let base = base_sum * inv_rows;
    let penalties = PenaltyValues::compute(model, constraints, cfg);

    if alpha > 0.0 {
        let limit = cfg.literal_limit(model.n);
        let [cl, cf, ci, ce] = cfg.penalty_weights;

        if cl > 0.0 {
            for i in 0..m {
                let srow = &sig[i * two_n..i * two_n + limit];
                let length: f64 = srow.iter().sum();
                if length > cfg.theta {
                    for (j, &s) in srow.iter().enumerate() {
                        dw[i * two_n + j] += alpha * cl * s * (1.0 - s);
                    }
                }
            }
        }
        if cf > 0.0 {
            for i in 0..m {
                for j in 0..limit {
                    let s = sig[i * two_n + j];
                    dw[i * two_n + j] += alpha * cf * s * (1.0 - s) * (1.0 - 2.0 * s);
                }
            }
        }
        let mut pair_grads = |pairs: &[(usize, usize)], weight: f64| {
            if weight == 0.0 {
                return;
            }
            for i in 0..m {
                for &(a, b) in pairs {
                    let sa = sig[i * two_n + a];
                    let sb = sig[i * two_n + b];
                    let j = if sa <= sb { a } else { b };
                    let s = sig[i * two_n + j];
                    dw[i * two_n + j] += alpha * weight * s * (1.0 - s);
                }
            }
        };
        pair_grads(constraints.implications(), ci);
        pair_grads(constraints.exclusions(), ce);
    }

    let loss = base + alpha * penalties.weighted_sum(cfg);

    if !loss.is_finite() {
        return Err(Error::NonFinite { context: "loss".into(), index: 0 });
    }
    if let Some(idx) = dw.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite { context: "literal weight gradient".into(), index: idx });
    }
    if let Some(idx) = dr.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite { context: "rule weight gradient".into(), index: idx });
    }
    if !db.is_finite() {
        return Err(Error::NonFinite { context: "offset gradient".into(), index: 0 });
    }

    Ok(GradOutput {
        grads: Gradients { w: dw, r: dr, b: db },
        loss,
        base,
        penalties,
    })
}
