//! The differentiable rule model: weighted conjunctions over literals.
//!
//! A model holds `m` rules over `n` features. Each rule carries one real
//! weight per literal (the `n` features and their `n` negations); the
//! sigmoid of that weight is the degree to which the literal takes part in
//! the rule's conjunction. A literal's contribution to the conjunction is
//! a linear blend between its membership and 1, so fully masked literals
//! (sigmoid near 0) drop out. The rule's *fit* aggregates those
//! contributions and scales the rule weight in the final sum.

use serde::{Deserialize, Serialize};

use crate::features::FeatureMatrix;
use crate::{Error, Result};

pub const MODEL_SCHEMA_VERSION: u32 = 1;

/// Logistic sigmoid, stable for large |x|.
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// How literal contributions combine into a rule fit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aggregator {
    #[default]
    Min,
    Product,
    Max,
}

/// Membership degrees of all `2n` literals for one instance: the first
/// `n` entries are the feature memberships, the last `n` their
/// complements.
#[derive(Debug, Clone, PartialEq)]
pub struct LiteralVector {
    mu: Vec<f64>,
}

impl LiteralVector {
    /// Expands an `n`-feature row into `2n` literal memberships.
    pub fn from_features(row: &[f64]) -> Result<Self> {
        let mut mu = Vec::with_capacity(2 * row.len());
        for (j, &x) in row.iter().enumerate() {
            if !x.is_finite() || !(0.0..=1.0).contains(&x) {
                return Err(Error::Data(format!("membership out of [0,1] at feature {j}: {x}")));
            }
            mu.push(x);
        }
        for &x in row {
            mu.push(1.0 - x);
        }
        Ok(LiteralVector { mu })
    }

    pub fn mu(&self) -> &[f64] {
        &self.mu
    }

    pub fn n_features(&self) -> usize {
        self.mu.len() / 2
    }
}

/// Expands a feature row into an existing buffer (hot-path variant of
/// [`LiteralVector::from_features`]; no validation).
pub(crate) fn expand_literals(row: &[f64], mu: &mut Vec<f64>) {
    mu.clear();
    mu.extend_from_slice(row);
    for &x in row {
        mu.push(1.0 - x);
    }
}

/// Weighted contribution of one literal: `sigma(w) * mu + (1 - sigma(w))`,
/// i.e. the blend between the membership and the neutral value 1.
pub fn literal_term(w: f64, mu: f64) -> f64 {
    let s = sigmoid(w);
    1.0 - s * (1.0 - mu)
}

pub(crate) fn fit_mu(weights_row: &[f64], mu: &[f64], aggregator: Aggregator) -> f64 {
    debug_assert_eq!(weights_row.len(), mu.len());
    let terms = weights_row
        .iter()
        .zip(mu)
        .map(|(&w, &mu)| literal_term(w, mu));
    match aggregator {
        Aggregator::Min => terms.fold(1.0, f64::min),
        Aggregator::Max => {
            // empty conjunction stays at 1
            let mut best = f64::NEG_INFINITY;
            let mut any = false;
            for t in terms {
                any = true;
                if t > best {
                    best = t;
                }
            }
            if any {
                best
            } else {
                1.0
            }
        }
        Aggregator::Product => terms.product(),
    }
}

/// Fit of one rule: the aggregated literal contributions.
pub fn rule_fit(weights_row: &[f64], lits: &LiteralVector, aggregator: Aggregator) -> f64 {
    fit_mu(weights_row, lits.mu(), aggregator)
}

/// A trained or in-training rule set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuleModel {
    pub schema_version: u32,
    /// Rule count.
    pub m: usize,
    /// Feature count (the model sees `2n` literals).
    pub n: usize,
    /// `2n` literal labels: feature names then `not <name>` entries.
    pub feature_names: Vec<String>,
    /// Literal weights, row-major `m x 2n`.
    #[serde(rename = "W")]
    pub w: Vec<f64>,
    /// Rule weights, output units.
    pub r: Vec<f64>,
    /// Global offset, output units.
    pub b: f64,
    #[serde(default)]
    pub aggregator: Aggregator,
}

impl RuleModel {
    /// Builds a model from `n` feature names, generating the negated
    /// labels, and validates shapes and finiteness.
    pub fn new(
        feature_names: Vec<String>,
        w: Vec<f64>,
        r: Vec<f64>,
        b: f64,
        aggregator: Aggregator,
    ) -> Result<Self> {
        let n = feature_names.len();
        let m = r.len();
        let mut names = feature_names;
        for j in 0..n {
            names.push(format!("not {}", names[j]));
        }
        let model = RuleModel {
            schema_version: MODEL_SCHEMA_VERSION,
            m,
            n,
            feature_names: names,
            w,
            r,
            b,
            aggregator,
        };
        model.validate()?;
        Ok(model)
    }

    /// Checks dimensions and finiteness of every parameter.
    pub fn validate(&self) -> Result<()> {
        if self.feature_names.len() != 2 * self.n {
            return Err(Error::Dimension {
                context: "literal labels".into(),
                expected: 2 * self.n,
                got: self.feature_names.len(),
            });
        }
        if self.w.len() != self.m * 2 * self.n {
            return Err(Error::Dimension {
                context: "literal weight matrix".into(),
                expected: self.m * 2 * self.n,
                got: self.w.len(),
            });
        }
        if self.r.len() != self.m {
            return Err(Error::Dimension {
                context: "rule weights".into(),
                expected: self.m,
                got: self.r.len(),
            });
        }
        if let Some(idx) = self.w.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { context: "literal weights".into(), index: idx });
        }
        if let Some(idx) = self.r.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { context: "rule weights".into(), index: idx });
        }
        if !self.b.is_finite() {
            return Err(Error::NonFinite { context: "offset".into(), index: 0 });
        }
        Ok(())
    }

    /// Literal weights of rule `i`.
    pub fn weights_row(&self, i: usize) -> &[f64] {
        let two_n = 2 * self.n;
        &self.w[i * two_n..(i + 1) * two_n]
    }

    /// Fit of rule `i` on an instance.
    pub fn fit(&self, i: usize, lits: &LiteralVector) -> f64 {
        rule_fit(self.weights_row(i), lits, self.aggregator)
    }

    pub(crate) fn predict_mu(&self, mu: &[f64]) -> f64 {
        let mut y = self.b;
        for i in 0..self.m {
            y += fit_mu(self.weights_row(i), mu, self.aggregator) * self.r[i];
        }
        y
    }

    /// Prediction for one instance: offset plus fit-scaled rule weights.
    pub fn predict(&self, lits: &LiteralVector) -> f64 {
        self.predict_mu(lits.mu())
    }

    /// Row-wise predictions over a feature matrix.
    pub fn predict_batch(&self, matrix: &FeatureMatrix) -> Result<Vec<f64>> {
        if matrix.n_cols() != self.n {
            return Err(Error::Dimension {
                context: "prediction features".into(),
                expected: self.n,
                got: matrix.n_cols(),
            });
        }
        let mut out = Vec::with_capacity(matrix.n_rows());
        let mut mu = Vec::with_capacity(2 * self.n);
        for row in 0..matrix.n_rows() {
            expand_literals(matrix.row(row), &mut mu);
            out.push(self.predict_mu(&mu));
        }
        Ok(out)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let model: RuleModel = serde_json::from_str(text)?;
        if model.schema_version != MODEL_SCHEMA_VERSION {
            return Err(Error::Data(format!(
                "unsupported model schema version {}",
                model.schema_version
            )));
        }
        model.validate()?;
        Ok(model)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn logit(p: f64) -> f64 {
        (p / (1.0 - p)).ln()
    }

    #[test]
    fn literal_term_at_zero_weight() {
        // sigma(0) = 0.5: 0.5*0.4 + 0.5 = 0.7
        assert!((literal_term(0.0, 0.4) - 0.7).abs() < 1e-12);
    }

    #[test]
    fn literal_term_masked() {
        assert!((literal_term(-20.0, 0.0) - 1.0).abs() < 1e-8);
    }

    #[test]
    fn literal_term_matches_printed_rule_weights() {
        // a literal with weight sigma = 0.46218 and membership 0
        // contributes 1 - 0.46218 = 0.53782
        let w = logit(0.46218);
        assert!((literal_term(w, 0.0) - 0.53782).abs() < 1e-9);
    }

    #[test]
    fn literal_term_is_one_at_full_membership() {
        for w in [-30.0, -1.0, 0.0, 2.5, 40.0] {
            assert_eq!(literal_term(w, 1.0), 1.0);
        }
    }

    fn lits(values: &[f64]) -> LiteralVector {
        LiteralVector::from_features(values).unwrap()
    }

    #[test]
    fn rule_fit_empty_conjunction() {
        let l = lits(&[0.2]);
        let fit = rule_fit(&[-20.0, -20.0], &l, Aggregator::Min);
        assert!((fit - 1.0).abs() < 1e-8);
    }

    #[test]
    fn rule_fit_min_of_active_and_masked() {
        // literals mu = [0.3, 0.9] directly
        let l = LiteralVector { mu: vec![0.3, 0.9] };
        let fit = rule_fit(&[20.0, -20.0], &l, Aggregator::Min);
        assert!((fit - 0.3).abs() < 1e-7);
    }

    #[test]
    fn rule_fit_hand_computed_terms() {
        let l = LiteralVector { mu: vec![0.4, 0.8] };
        // terms: 0.5*0.4+0.5 = 0.7, 0.5*0.8+0.5 = 0.9
        let fit = rule_fit(&[0.0, 0.0], &l, Aggregator::Min);
        assert!((fit - 0.7).abs() < 1e-12);
        let fit = rule_fit(&[0.0, 0.0], &l, Aggregator::Max);
        assert!((fit - 0.9).abs() < 1e-12);
        let fit = rule_fit(&[0.0, 0.0], &l, Aggregator::Product);
        assert!((fit - 0.63).abs() < 1e-12);
    }

    #[test]
    fn literal_vector_pairs_sum_to_one() {
        let l = lits(&[0.25, 1.0, 0.0]);
        for j in 0..3 {
            assert_eq!(l.mu()[j] + l.mu()[j + 3], 1.0);
        }
    }

    #[test]
    fn literal_vector_rejects_out_of_range() {
        assert!(LiteralVector::from_features(&[1.2]).is_err());
        assert!(LiteralVector::from_features(&[f64::NAN]).is_err());
    }

    fn single_rule_model(w: Vec<f64>, r: f64, b: f64) -> RuleModel {
        let n = w.len() / 2;
        let names = (0..n).map(|j| format!("f{j}")).collect();
        RuleModel::new(names, w, vec![r], b, Aggregator::Min).unwrap()
    }

    #[test]
    fn predict_single_full_fit_rule() {
        let model = single_rule_model(vec![-20.0, -20.0], 2.5, 0.0);
        let y = model.predict(&lits(&[0.7]));
        assert!((y - 2.5).abs() < 1e-7);
    }

    #[test]
    fn predict_scaled_contribution_matches_printed_rule() {
        // contribution 0.2623 at fit 0.9999 implies r near 0.26233
        let r: f64 = 0.2623 / 0.9999;
        assert!((r - 0.26233).abs() < 5e-5);
        let model = single_rule_model(vec![-40.0, -40.0], r, 0.0);
        let y = model.predict(&lits(&[1.0]));
        assert!((y - 0.2623).abs() < 1e-4);
    }

    #[test]
    fn predict_sums_fits_times_weights() {
        // fits (0.5, 0.25) via literal weights +inf on mu 0.5 / 0.25
        let names = vec!["f0".to_string(), "f1".to_string()];
        let w = vec![40.0, -40.0, -40.0, -40.0, -40.0, -40.0, -40.0, 40.0];
        let model = RuleModel::new(names, w, vec![4.0, -2.0], 0.0, Aggregator::Min).unwrap();
        let y = model.predict(&lits(&[0.5, 0.75]));
        // rule 0 fit = mu0 = 0.5, rule 1 fit = 1 - mu1 = 0.25
        assert!((y - 1.5).abs() < 1e-9);
    }

    #[test]
    fn predict_batch_empty_and_single() {
        use crate::features::{ColumnMeta, FeatureMatrix};
        let meta = vec![ColumnMeta {
            name: "f0".into(),
            source: "f0".into(),
            scheme: "passthrough_binary".into(),
            group: None,
            threshold: None,
        }];
        let model = single_rule_model(vec![40.0, -40.0], 3.0, 1.0);

        let empty = FeatureMatrix::new(vec![], meta.clone(), vec![]).unwrap();
        assert!(model.predict_batch(&empty).unwrap().is_empty());

        let one = FeatureMatrix::new(vec![1.0], meta, vec!["r0".into()]).unwrap();
        let preds = model.predict_batch(&one).unwrap();
        assert_eq!(preds.len(), 1);
        assert!((preds[0] - 4.0).abs() < 1e-7);
    }

    #[test]
    fn predict_batch_rejects_width_mismatch() {
        use crate::features::{ColumnMeta, FeatureMatrix};
        let meta = (0..2)
            .map(|j| ColumnMeta {
                name: format!("f{j}"),
                source: format!("f{j}"),
                scheme: "passthrough_binary".into(),
                group: None,
                threshold: None,
            })
            .collect();
        let matrix = FeatureMatrix::new(vec![1.0, 0.0], meta, vec!["r0".into()]).unwrap();
        let model = single_rule_model(vec![40.0, -40.0], 3.0, 1.0);
        assert!(model.predict_batch(&matrix).is_err());
    }

    #[test]
    fn predict_invariant_under_rule_permutation() {
        let names = vec!["f0".to_string(), "f1".to_string()];
        let w = vec![1.0, -0.5, 0.2, 0.8, -1.0, 2.0, 0.0, 0.3];
        let model = RuleModel::new(names.clone(), w.clone(), vec![3.0, -1.5], 0.5, Aggregator::Min).unwrap();
        let swapped =
            RuleModel::new(names, [&w[4..], &w[..4]].concat(), vec![-1.5, 3.0], 0.5, Aggregator::Min)
                .unwrap();
        let l = lits(&[0.3, 0.9]);
        assert!((model.predict(&l) - swapped.predict(&l)).abs() < 1e-12);
    }

    #[test]
    fn model_json_round_trip() {
        let model = single_rule_model(vec![1.5, -2.0], 0.75, 0.25);
        let text = model.to_json().unwrap();
        let back = RuleModel::from_json(&text).unwrap();
        assert_eq!(model, back);
        assert!(text.contains("\"W\""));
        assert!(text.contains("not f0"));
    }

    #[test]
    fn model_rejects_bad_dimensions() {
        let names = vec!["f0".to_string()];
        assert!(RuleModel::new(names, vec![1.0], vec![1.0], 0.0, Aggregator::Min).is_err());
    }

    #[test]
    fn model_rejects_non_finite() {
        let names = vec!["f0".to_string()];
        assert!(RuleModel::new(names, vec![f64::NAN, 0.0], vec![1.0], 0.0, Aggregator::Min).is_err());
    }
}
