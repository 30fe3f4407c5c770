//! Model initialization, Adam optimization and the early-stopping
//! training loop.
//!
//! Initialization follows a two-part scheme: one crisp singleton rule per
//! feature, weighted by a ridge-regression fit, plus uniformly random
//! rules filling up the configured rule count. Training runs full batches
//! for at least `min_epochs` epochs and then stops once the validation
//! loss (penalties included, at the current alpha) has not improved for
//! `patience` consecutive epochs, restoring the best-validation
//! parameters.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::features::FeatureMatrix;
use crate::grad::model_gradients;
use crate::linalg::solve_spd;
use crate::loss::{alpha_schedule, total_loss, LossConfig};
use crate::model::{Aggregator, RuleModel};
use crate::ontology::ConstraintSet;
use crate::{Error, Result};

/// Full-batch or shuffled minibatch gradient steps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode", content = "size")]
pub enum BatchMode {
    #[default]
    Full,
    Minibatch(usize),
}

/// Everything the training loop needs to know.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub m_rules: usize,
    pub seed: u64,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    pub min_epochs: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub batch: BatchMode,
    pub split_ratios: (f64, f64, f64),
    pub loss: LossConfig,
    /// Crisp weight magnitude for singleton rules (literal weight +c for
    /// the rule's own literal, -c elsewhere).
    pub singleton_weight_magnitude: f64,
    /// Ridge strength of the initialization regression.
    pub ridge_lambda: f64,
    /// Keep the global offset fixed at zero.
    pub freeze_offset: bool,
    pub aggregator: Aggregator,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            m_rules: 100,
            seed: 0,
            learning_rate: 1e-2,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
            min_epochs: 300,
            max_epochs: 1000,
            patience: 10,
            batch: BatchMode::Full,
            split_ratios: (0.7, 0.15, 0.15),
            loss: LossConfig::default(),
            singleton_weight_magnitude: 6.0,
            ridge_lambda: 1e-3,
            freeze_offset: false,
            aggregator: Aggregator::Min,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.loss.validate()?;
        let (a, b, c) = self.split_ratios;
        if !(a > 0.0 && b > 0.0 && c > 0.0) || (a + b + c - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!(
                "split ratios must be positive and sum to 1, got ({a}, {b}, {c})"
            )));
        }
        if self.patience < 1 {
            return Err(Error::Config("patience must be >= 1".into()));
        }
        if self.min_epochs > self.max_epochs {
            return Err(Error::Config(format!(
                "min_epochs ({}) exceeds max_epochs ({})",
                self.min_epochs, self.max_epochs
            )));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::Config("learning rate must be > 0".into()));
        }
        if let BatchMode::Minibatch(size) = self.batch {
            if size == 0 {
                return Err(Error::Config("minibatch size must be > 0".into()));
            }
        }
        Ok(())
    }
}

/// Feature matrix plus aligned regression targets on the raw scale.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub features: FeatureMatrix,
    pub targets: Vec<f64>,
}

impl Dataset {
    pub fn new(features: FeatureMatrix, targets: Vec<f64>) -> Result<Self> {
        if features.n_rows() != targets.len() {
            return Err(Error::Dimension {
                context: "dataset targets".into(),
                expected: features.n_rows(),
                got: targets.len(),
            });
        }
        if let Some(idx) = targets.iter().position(|t| !t.is_finite()) {
            return Err(Error::NonFinite { context: "dataset targets".into(), index: idx });
        }
        Ok(Dataset { features, targets })
    }

    pub fn n_rows(&self) -> usize {
        self.targets.len()
    }

    pub fn subset(&self, rows: &[usize]) -> Dataset {
        Dataset {
            features: self.features.subset(rows),
            targets: rows.iter().map(|&r| self.targets[r]).collect(),
        }
    }
}

/// Disjoint train/validation/test partition of a dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct DataSplit {
    pub train: Dataset,
    pub val: Dataset,
    pub test: Dataset,
}

/// Seeded shuffle split into train/validation/test.
pub fn split(dataset: &Dataset, ratios: (f64, f64, f64), seed: u64) -> Result<DataSplit> {
    let (ra, rb, rc) = ratios;
    if !(ra > 0.0 && rb > 0.0 && rc > 0.0) || (ra + rb + rc - 1.0).abs() > 1e-9 {
        return Err(Error::Config(format!(
            "split ratios must be positive and sum to 1, got ({ra}, {rb}, {rc})"
        )));
    }
    let n = dataset.n_rows();
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // Fisher-Yates
    for i in (1..n).rev() {
        let j = rng.gen_range(0..=i);
        order.swap(i, j);
    }
    let n_train = (ra * n as f64).floor() as usize;
    let n_val = (rb * n as f64).floor() as usize;
    let n_test = n - n_train - n_val;
    if n_train == 0 || n_val == 0 || n_test == 0 {
        return Err(Error::Data(format!(
            "split produced an empty part: sizes ({n_train}, {n_val}, {n_test})"
        )));
    }
    Ok(DataSplit {
        train: dataset.subset(&order[..n_train]),
        val: dataset.subset(&order[n_train..n_train + n_val]),
        test: dataset.subset(&order[n_train + n_val..]),
    })
}

/// Ridge-regularized least squares on the feature columns, with an
/// unpenalized intercept via column centering. Returns (coefficients,
/// intercept).
pub fn fit_linear(
    features: &FeatureMatrix,
    targets: &[f64],
    ridge_lambda: f64,
) -> Result<(Vec<f64>, f64)> {
    let rows = features.n_rows();
    let n = features.n_cols();
    if rows == 0 {
        return Err(Error::Data("linear fit needs at least one row".into()));
    }
    if targets.len() != rows {
        return Err(Error::Dimension {
            context: "linear fit targets".into(),
            expected: rows,
            got: targets.len(),
        });
    }
    if let Some(idx) = targets.iter().position(|t| !t.is_finite()) {
        return Err(Error::NonFinite { context: "linear fit targets".into(), index: idx });
    }
    if !(ridge_lambda >= 0.0) {
        return Err(Error::Config(format!("ridge lambda must be >= 0, got {ridge_lambda}")));
    }

    let mut col_mean = vec![0.0; n];
    for row in 0..rows {
        for (j, v) in features.row(row).iter().enumerate() {
            col_mean[j] += v;
        }
    }
    for mean in &mut col_mean {
        *mean /= rows as f64;
    }
    let y_mean = crate::stats::mean(targets);

    // Normal equations on centered data: (Xc^T Xc + lambda I) beta = Xc^T yc.
    let mut xtx = vec![0.0; n * n];
    let mut xty = vec![0.0; n];
    for row in 0..rows {
        let x = features.row(row);
        let yc = targets[row] - y_mean;
        for j in 0..n {
            let xj = x[j] - col_mean[j];
            xty[j] += xj * yc;
            for k in j..n {
                xtx[j * n + k] += xj * (x[k] - col_mean[k]);
            }
        }
    }
    for j in 0..n {
        for k in 0..j {
            xtx[j * n + k] = xtx[k * n + j];
        }
        // tiny floor keeps the system positive definite when lambda is 0
        xtx[j * n + j] += ridge_lambda.max(1e-12);
    }

    let beta = solve_spd(&xtx, &xty)?;
    let intercept = y_mean - beta.iter().zip(&col_mean).map(|(b, m)| b * m).sum::<f64>();
    Ok((beta, intercept))
}

/// Builds the initial rule set: one crisp singleton rule per feature
/// weighted by the ridge fit, then uniformly random rules up to
/// `m_rules` (literal weights U(-1,1), rule weights U(-10,10)).
pub fn init_model(train: &Dataset, cfg: &TrainConfig) -> Result<RuleModel> {
    let n = train.features.n_cols();
    if cfg.m_rules < n {
        return Err(Error::Config(format!(
            "m_rules ({}) must be at least the feature count ({n}) for singleton initialization",
            cfg.m_rules
        )));
    }
    let (beta, intercept) = fit_linear(&train.features, &train.targets, cfg.ridge_lambda)?;

    let m = cfg.m_rules;
    let two_n = 2 * n;
    let c = cfg.singleton_weight_magnitude;
    let mut w = vec![-c; m * two_n];
    let mut r = vec![0.0; m];
    for i in 0..n {
        w[i * two_n + i] = c;
        r[i] = beta[i];
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    for i in n..m {
        for j in 0..two_n {
            w[i * two_n + j] = rng.gen_range(-1.0..1.0);
        }
        r[i] = rng.gen_range(-10.0..10.0);
    }

    let b = if cfg.freeze_offset { 0.0 } else { intercept };
    let names = train.features.meta().iter().map(|m| m.name.clone()).collect();
    RuleModel::new(names, w, r, b, cfg.aggregator)
}

/// Adam optimizer state over a flat parameter vector.
#[derive(Debug, Clone)]
pub struct AdamState {
    m: Vec<f64>,
    v: Vec<f64>,
    t: usize,
}

impl AdamState {
    pub fn new(n_params: usize) -> Self {
        AdamState { m: vec![0.0; n_params], v: vec![0.0; n_params], t: 0 }
    }

    pub fn step_count(&self) -> usize {
        self.t
    }
}

/// One Adam update with bias correction, applied in place.
pub fn adam_step(
    params: &mut [f64],
    grads: &[f64],
    state: &mut AdamState,
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
) {
    debug_assert_eq!(params.len(), grads.len());
    debug_assert_eq!(params.len(), state.m.len());
    state.t += 1;
    let t = state.t as i32;
    let bc1 = 1.0 - beta1.powi(t);
    let bc2 = 1.0 - beta2.powi(t);
    for i in 0..params.len() {
        let g = grads[i];
        state.m[i] = beta1 * state.m[i] + (1.0 - beta1) * g;
        state.v[i] = beta2 * state.v[i] + (1.0 - beta2) * g * g;
        let m_hat = state.m[i] / bc1;
        let v_hat = state.v[i] / bc2;
        params[i] -= lr * m_hat / (v_hat.sqrt() + eps);
    }
}

/// One epoch's worth of history.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub lambda_long: f64,
    pub lambda_fuzzy: f64,
    pub lambda_implied: f64,
    pub lambda_exclusive: f64,
    pub alpha: f64,
}

/// Per-epoch training curves (the data behind loss/penalty plots).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainingHistory {
    pub records: Vec<EpochRecord>,
}

/// A trained model with its history and best-validation bookkeeping.
#[derive(Debug, Clone)]
pub struct TrainedModel {
    pub model: RuleModel,
    pub history: TrainingHistory,
    pub best_epoch: usize,
    pub best_val_loss: f64,
    /// Epoch the loop actually stopped at.
    pub stopped_epoch: usize,
}

/// Result of [`train`]: the trained model plus the split it was trained
/// on (evaluation needs the held-out test part).
#[derive(Debug, Clone)]
pub struct TrainResult {
    pub trained: TrainedModel,
    pub split: DataSplit,
}

/// Splits the dataset per the config and trains on the split.
pub fn train(dataset: &Dataset, cfg: &TrainConfig, constraints: &ConstraintSet) -> Result<TrainResult> {
    cfg.validate()?;
    let split = split(dataset, cfg.split_ratios, cfg.seed)?;
    let trained = train_on_split(&split, cfg, constraints)?;
    Ok(TrainResult { trained, split })
}

/// Trains on an existing split: init, Adam epochs, early stopping on the
/// validation loss (penalties included at the current alpha), best-epoch
/// parameter restoration.
///
/// The improvement protocol starts at `min_epochs`: the fade-in raises the
/// validation loss mechanically while alpha ramps, so epochs before the
/// minimum are trained through without competing for the best snapshot.
pub fn train_on_split(
    split: &DataSplit,
    cfg: &TrainConfig,
    constraints: &ConstraintSet,
) -> Result<TrainedModel> {
    cfg.validate()?;
    if constraints.n() != split.train.features.n_cols() {
        return Err(Error::Dimension {
            context: "constraint literal space".into(),
            expected: split.train.features.n_cols(),
            got: constraints.n(),
        });
    }
    let mut model = init_model(&split.train, cfg)?;
    let m = model.m;
    let two_n = 2 * model.n;
    let n_w = m * two_n;
    // flat parameter layout: W, then r, then b (unless frozen)
    let n_params = n_w + m + if cfg.freeze_offset { 0 } else { 1 };
    let mut adam = AdamState::new(n_params);
    let mut grads_flat = vec![0.0; n_params];

    let mut history = TrainingHistory::default();
    let mut best_val = f64::INFINITY;
    let mut best_epoch = 0usize;
    let mut best_params: Option<(Vec<f64>, Vec<f64>, f64)> = None;
    let mut minibatch_rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x9e37_79b9_7f4a_7c15);

    let mut stopped_epoch = cfg.max_epochs;
    for epoch in 1..=cfg.max_epochs {
        let alpha = alpha_schedule(epoch, &cfg.loss);

        let (train_loss, penalties) = match cfg.batch {
            BatchMode::Full => {
                let out = model_gradients(
                    &model,
                    &split.train.features,
                    &split.train.targets,
                    &cfg.loss,
                    constraints,
                    alpha,
                )
                .map_err(|e| diverged(e, epoch))?;
                grads_flat[..n_w].copy_from_slice(&out.grads.w);
                grads_flat[n_w..n_w + m].copy_from_slice(&out.grads.r);
                if !cfg.freeze_offset {
                    grads_flat[n_w + m] = out.grads.b;
                }
                apply_step(&mut model, &mut adam, &grads_flat, cfg);
                (out.loss, out.penalties)
            }
            BatchMode::Minibatch(size) => {
                let rows = split.train.n_rows();
                let mut order: Vec<usize> = (0..rows).collect();
                for i in (1..rows).rev() {
                    let j = minibatch_rng.gen_range(0..=i);
                    order.swap(i, j);
                }
                for chunk in order.chunks(size.max(1)) {
                    let batch = split.train.subset(chunk);
                    let out = model_gradients(
                        &model,
                        &batch.features,
                        &batch.targets,
                        &cfg.loss,
                        constraints,
                        alpha,
                    )
                    .map_err(|e| diverged(e, epoch))?;
                    grads_flat[..n_w].copy_from_slice(&out.grads.w);
                    grads_flat[n_w..n_w + m].copy_from_slice(&out.grads.r);
                    if !cfg.freeze_offset {
                        grads_flat[n_w + m] = out.grads.b;
                    }
                    apply_step(&mut model, &mut adam, &grads_flat, cfg);
                }
                // post-epoch evaluation on the full training set
                let preds = model.predict_batch(&split.train.features)?;
                let loss = total_loss(
                    &preds,
                    &split.train.targets,
                    &model,
                    constraints,
                    alpha,
                    &cfg.loss,
                )
                .map_err(|e| diverged(e, epoch))?;
                let penalties =
                    crate::loss::PenaltyValues::compute(&model, constraints, &cfg.loss);
                (loss, penalties)
            }
        };

        let val_preds = model.predict_batch(&split.val.features)?;
        let val_loss = total_loss(
            &val_preds,
            &split.val.targets,
            &model,
            constraints,
            alpha,
            &cfg.loss,
        )
        .map_err(|e| diverged(e, epoch))?;
        if !val_loss.is_finite() || !train_loss.is_finite() {
            return Err(Error::Diverged { epoch });
        }

        history.records.push(EpochRecord {
            epoch,
            train_loss,
            val_loss,
            lambda_long: penalties.long,
            lambda_fuzzy: penalties.fuzzy,
            lambda_implied: penalties.implied,
            lambda_exclusive: penalties.exclusive,
            alpha,
        });

        if epoch >= cfg.min_epochs {
            if val_loss < best_val {
                best_val = val_loss;
                best_epoch = epoch;
                best_params = Some((model.w.clone(), model.r.clone(), model.b));
            }
            if epoch - best_epoch >= cfg.patience {
                stopped_epoch = epoch;
                break;
            }
        }
    }

    if let Some((w, r, b)) = best_params {
        model.w = w;
        model.r = r;
        model.b = b;
    }
    Ok(TrainedModel {
        model,
        history,
        best_epoch,
        best_val_loss: best_val,
        stopped_epoch,
    })
}

fn diverged(e: Error, epoch: usize) -> Error {
    match e {
        Error::NonFinite { .. } => Error::Diverged { epoch },
        other => other,
    }
}

fn apply_step(model: &mut RuleModel, adam: &mut AdamState, grads: &[f64], cfg: &TrainConfig) {
    let n_w = model.w.len();
    let m = model.m;
    // borrow the parameters as one flat vector for the update
    let mut params = Vec::with_capacity(grads.len());
    params.extend_from_slice(&model.w);
    params.extend_from_slice(&model.r);
    if !cfg.freeze_offset {
        params.push(model.b);
    }
    adam_step(
        &mut params,
        grads,
        adam,
        cfg.learning_rate,
        cfg.beta1,
        cfg.beta2,
        cfg.adam_eps,
    );
    model.w.copy_from_slice(&params[..n_w]);
    model.r.copy_from_slice(&params[n_w..n_w + m]);
    if !cfg.freeze_offset {
        model.b = params[n_w + m];
    }
}
