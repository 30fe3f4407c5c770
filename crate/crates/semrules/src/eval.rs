//! Evaluation: absolute-error reports, a ridge baseline, a synthetic
//! planted-rule generator and rule-recovery scoring.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::features::{ColumnMeta, FeatureMatrix};
use crate::model::{expand_literals, fit_mu, sigmoid, Aggregator, RuleModel};
use crate::stats::quantile_sorted;
use crate::train::{fit_linear, Dataset};
use crate::{Error, Result};

/// Absolute-error summary for one model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorStats {
    pub label: String,
    pub errors: Vec<f64>,
    pub mean: f64,
    pub median: f64,
    pub q1: f64,
    pub q3: f64,
    pub max: f64,
}

/// Elementwise `|prediction - target|` plus summary statistics.
pub fn absolute_errors(label: &str, predictions: &[f64], targets: &[f64]) -> Result<ErrorStats> {
    if predictions.len() != targets.len() {
        return Err(Error::Dimension {
            context: "error report".into(),
            expected: targets.len(),
            got: predictions.len(),
        });
    }
    if predictions.is_empty() {
        return Err(Error::Data("error report needs at least one sample".into()));
    }
    let errors: Vec<f64> = predictions
        .iter()
        .zip(targets)
        .map(|(&p, &t)| (p - t).abs())
        .collect();
    let mut sorted = errors.clone();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    Ok(ErrorStats {
        label: label.to_string(),
        mean: crate::stats::mean(&errors),
        median: quantile_sorted(&sorted, 0.5),
        q1: quantile_sorted(&sorted, 0.25),
        q3: quantile_sorted(&sorted, 0.75),
        max: *sorted.last().unwrap(),
        errors,
    })
}

/// Evaluation report across models, aligned on one set of rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub row_ids: Vec<String>,
    pub entries: Vec<ErrorStats>,
}

impl EvalReport {
    pub fn new(row_ids: Vec<String>) -> Self {
        EvalReport { row_ids, entries: Vec::new() }
    }

    pub fn push(&mut self, entry: ErrorStats) -> Result<()> {
        if entry.errors.len() != self.row_ids.len() {
            return Err(Error::Dimension {
                context: format!("report entry '{}'", entry.label),
                expected: self.row_ids.len(),
                got: entry.errors.len(),
            });
        }
        self.entries.push(entry);
        Ok(())
    }
}

/// Fits the ridge baseline on the train split and reports its test-split
/// absolute errors.
pub fn ridge_baseline(train: &Dataset, test: &Dataset, lambda: f64) -> Result<ErrorStats> {
    let (beta, intercept) = fit_linear(&train.features, &train.targets, lambda)?;
    let predictions: Vec<f64> = (0..test.n_rows())
        .map(|row| {
            intercept
                + test
                    .features
                    .row(row)
                    .iter()
                    .zip(&beta)
                    .map(|(x, b)| x * b)
                    .sum::<f64>()
        })
        .collect();
    absolute_errors("ridge", &predictions, &test.targets)
}

/// One ground-truth rule: a set of literal indices (an index `>= n`
/// negates feature `index - n`) and the amount the rule adds when all its
/// literals hold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedRule {
    pub literals: Vec<usize>,
    pub weight: f64,
}

/// Recipe for a synthetic planted-rule dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub n_features: usize,
    pub n_rows: usize,
    pub planted_rules: Vec<PlantedRule>,
    /// Gaussian noise added to each target, output units.
    pub noise_std: f64,
    /// Base outcome level.
    pub offset: f64,
    /// Bernoulli activation probability per feature cell.
    pub activation_p: f64,
    pub seed: u64,
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_features == 0 || self.n_rows == 0 {
            return Err(Error::Config("synthetic spec needs features and rows".into()));
        }
        if !(self.activation_p > 0.0 && self.activation_p < 1.0) {
            return Err(Error::Config(format!(
                "activation probability must be in (0,1), got {}",
                self.activation_p
            )));
        }
        if self.noise_std < 0.0 {
            return Err(Error::Config("noise_std must be >= 0".into()));
        }
        for (i, rule) in self.planted_rules.iter().enumerate() {
            if rule.literals.is_empty() {
                return Err(Error::Config(format!("planted rule {i} has no literals")));
            }
            for &lit in &rule.literals {
                if lit >= 2 * self.n_features {
                    return Err(Error::Config(format!(
                        "planted rule {i} literal {lit} out of range for {} features",
                        self.n_features
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let spec: SyntheticSpec = serde_json::from_str(text)?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Crisp weight magnitude used for ground-truth rule models.
const TRUTH_WEIGHT: f64 = 20.0;

/// Draws a crisp Bernoulli feature matrix and targets
/// `offset + sum(planted AND terms) + noise`, returning the generating
/// rule model for recovery scoring. Deterministic given the seed.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<(Dataset, RuleModel)> {
    spec.validate()?;
    let n = spec.n_features;
    let rows = spec.n_rows;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);

    let mut values = vec![0.0; rows * n];
    for cell in values.iter_mut() {
        *cell = if rng.gen_bool(spec.activation_p) { 1.0 } else { 0.0 };
    }
    let meta: Vec<ColumnMeta> = (0..n)
        .map(|j| ColumnMeta {
            name: format!("f{j}"),
            source: format!("f{j}"),
            scheme: "passthrough_binary".into(),
            group: None,
            threshold: None,
        })
        .collect();
    let row_ids: Vec<String> = (0..rows).map(|i| format!("row{i}")).collect();
    let features = FeatureMatrix::new(values, meta, row_ids)?;

    let mut targets = Vec::with_capacity(rows);
    for row in 0..rows {
        let x = features.row(row);
        let mut y = spec.offset;
        for rule in &spec.planted_rules {
            let satisfied = rule.literals.iter().all(|&lit| {
                if lit < n {
                    x[lit] == 1.0
                } else {
                    x[lit - n] == 0.0
                }
            });
            if satisfied {
                y += rule.weight;
            }
        }
        if spec.noise_std > 0.0 {
            y += spec.noise_std * standard_normal(&mut rng);
        }
        targets.push(y);
    }

    let m = spec.planted_rules.len();
    let mut w = vec![-TRUTH_WEIGHT; m * 2 * n];
    let mut r = vec![0.0; m];
    for (i, rule) in spec.planted_rules.iter().enumerate() {
        for &lit in &rule.literals {
            w[i * 2 * n + lit] = TRUTH_WEIGHT;
        }
        r[i] = rule.weight;
    }
    let names = (0..n).map(|j| format!("f{j}")).collect();
    let truth = RuleModel::new(names, w, r, spec.offset, Aggregator::Min)?;

    Ok((Dataset::new(features, targets)?, truth))
}

/// Box-Muller standard normal draw.
fn standard_normal(rng: &mut ChaCha8Rng) -> f64 {
    let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
    let u2: f64 = rng.gen_range(0.0..1.0);
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

fn crisp_literal_sets(model: &RuleModel, crisp_threshold: f64) -> Vec<Vec<usize>> {
    let two_n = 2 * model.n;
    (0..model.m)
        .map(|i| {
            (0..two_n)
                .filter(|&j| sigmoid(model.w[i * two_n + j]) >= crisp_threshold)
                .collect()
        })
        .collect()
}

fn jaccard(a: &[usize], b: &[usize]) -> f64 {
    if a.is_empty() && b.is_empty() {
        return 1.0;
    }
    let sa: std::collections::BTreeSet<usize> = a.iter().copied().collect();
    let sb: std::collections::BTreeSet<usize> = b.iter().copied().collect();
    let inter = sa.intersection(&sb).count() as f64;
    let union = sa.union(&sb).count() as f64;
    inter / union
}

/// Greedy matching of planted rules to trained rules by Jaccard
/// similarity of crispified literal sets; each trained rule is used at
/// most once. Returns the mean matched similarity over planted rules.
pub fn rule_recovery_score(
    trained: &RuleModel,
    truth: &RuleModel,
    crisp_threshold: f64,
) -> Result<f64> {
    if trained.n != truth.n {
        return Err(Error::Dimension {
            context: "recovery feature count".into(),
            expected: truth.n,
            got: trained.n,
        });
    }
    if truth.m == 0 {
        return Err(Error::Data("truth model has no rules".into()));
    }
    let trained_sets = crisp_literal_sets(trained, crisp_threshold);
    let truth_sets = crisp_literal_sets(truth, crisp_threshold);

    // global greedy: repeatedly take the best remaining (planted, trained)
    // pair, ties broken by lowest indices
    let mut scores = vec![0.0; truth_sets.len()];
    let mut used_truth = vec![false; truth_sets.len()];
    let mut used_trained = vec![false; trained_sets.len()];
    for _ in 0..truth_sets.len().min(trained_sets.len()) {
        let mut best = (0.0f64, usize::MAX, usize::MAX);
        for (p, pset) in truth_sets.iter().enumerate() {
            if used_truth[p] {
                continue;
            }
            for (t, tset) in trained_sets.iter().enumerate() {
                if used_trained[t] {
                    continue;
                }
                let score = jaccard(pset, tset);
                if score > best.0 {
                    best = (score, p, t);
                }
            }
        }
        let (score, p, t) = best;
        if p == usize::MAX {
            break;
        }
        scores[p] = score;
        used_truth[p] = true;
        used_trained[t] = true;
    }
    Ok(scores.iter().sum::<f64>() / scores.len() as f64)
}

/// Per-row counts of rules whose fit-scaled contribution clears a
/// threshold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActiveRuleStats {
    /// Mean over rows of the per-row active-rule count.
    pub mean_per_row: f64,
    pub max_per_row: usize,
    /// Rules active on at least one row.
    pub active_anywhere: usize,
}

/// Counts rules with `|fit * r| >= contribution_threshold` per row.
pub fn active_rule_count(
    model: &RuleModel,
    features: &FeatureMatrix,
    contribution_threshold: f64,
) -> Result<ActiveRuleStats> {
    if features.n_cols() != model.n {
        return Err(Error::Dimension {
            context: "active rule features".into(),
            expected: model.n,
            got: features.n_cols(),
        });
    }
    let rows = features.n_rows();
    if rows == 0 {
        return Err(Error::Data("active rule count needs at least one row".into()));
    }
    let two_n = 2 * model.n;
    let mut mu = Vec::with_capacity(two_n);
    let mut ever_active = vec![false; model.m];
    let mut total = 0usize;
    let mut max_per_row = 0usize;
    for row in 0..rows {
        expand_literals(features.row(row), &mut mu);
        let mut count = 0;
        for i in 0..model.m {
            let fit = fit_mu(model.weights_row(i), &mu, model.aggregator);
            if (fit * model.r[i]).abs() >= contribution_threshold {
                count += 1;
                ever_active[i] = true;
            }
        }
        total += count;
        max_per_row = max_per_row.max(count);
    }
    Ok(ActiveRuleStats {
        mean_per_row: total as f64 / rows as f64,
        max_per_row,
        active_anywhere: ever_active.iter().filter(|&&a| a).count(),
    })
}
