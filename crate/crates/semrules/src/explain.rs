//! Human-readable rule extraction and per-prediction explanations.
//!
//! A rendered rule shows every literal whose sigmoid weight clears a
//! display threshold, e.g.
//!
//! ```text
//! "Mean age (adult)"[1.0] & "doctor"[0.46218] & "Pill"[0.3893]
//!   => raise predicted outcome by 4.6709 (fit: 0.5382)
//! ```
//!
//! An explanation applies every rule to one instance: rules contributing
//! at least `contribution_threshold` (in output units, scaled by their
//! fit) are listed in descending impact order, the rest are folded into a
//! remainder term, and the listed contributions plus remainder plus offset
//! reconstruct the prediction exactly.

use serde::{Deserialize, Serialize};

use crate::model::{sigmoid, LiteralVector, RuleModel};
use crate::{Error, Result};

/// Whether a rule pushes the prediction up or down.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Raise,
    Lower,
}

/// One displayed literal of a rendered rule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RenderedLiteral {
    /// Feature name, without the `not` prefix.
    pub label: String,
    /// Sigmoid of the literal weight.
    pub sigma: f64,
    pub negated: bool,
}

/// A rule reduced to its display-worthy literals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RenderedRule {
    /// Index of the rule in the model.
    pub index: usize,
    pub literals: Vec<RenderedLiteral>,
    pub rule_weight: f64,
    pub direction: Direction,
}

fn render_rule_literals(model: &RuleModel, rule: usize, display_threshold: f64) -> RenderedRule {
    let n = model.n;
    let mut literals = Vec::new();
    for (j, &w) in model.weights_row(rule).iter().enumerate() {
        let s = sigmoid(w);
        if s >= display_threshold {
            literals.push(RenderedLiteral {
                label: model.feature_names[j % n].clone(),
                sigma: s,
                negated: j >= n,
            });
        }
    }
    let rule_weight = model.r[rule];
    RenderedRule {
        index: rule,
        literals,
        rule_weight,
        direction: if rule_weight > 0.0 { Direction::Raise } else { Direction::Lower },
    }
}

fn check_display_threshold(display_threshold: f64) -> Result<()> {
    if !(display_threshold > 0.0 && display_threshold < 1.0) {
        return Err(Error::Config(format!(
            "display threshold must be in (0, 1), got {display_threshold}"
        )));
    }
    Ok(())
}

/// Renders the whole rule base, sorted by descending absolute rule
/// weight. A literal is shown iff its sigmoid weight is at least
/// `display_threshold`.
pub fn extract_rules(model: &RuleModel, display_threshold: f64) -> Result<Vec<RenderedRule>> {
    check_display_threshold(display_threshold)?;
    let mut rules: Vec<RenderedRule> = (0..model.m)
        .map(|i| render_rule_literals(model, i, display_threshold))
        .collect();
    rules.sort_by(|a, b| {
        b.rule_weight
            .abs()
            .partial_cmp(&a.rule_weight.abs())
            .unwrap()
            .then(a.index.cmp(&b.index))
    });
    Ok(rules)
}

/// One rule applied to an instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExplainedRule {
    pub rule: RenderedRule,
    pub fit: f64,
    /// `fit * rule_weight`, output units.
    pub contribution: f64,
}

/// Full account of one prediction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Explanation {
    /// Rules with `|contribution| >= contribution_threshold`, descending
    /// by absolute contribution.
    pub rules: Vec<ExplainedRule>,
    /// Sum of all contributions below the threshold.
    pub remainder: f64,
    pub offset: f64,
    /// Offset plus every rule's contribution.
    pub total: f64,
}

/// Applies every rule to one instance and assembles the explanation.
pub fn explain_prediction(
    model: &RuleModel,
    lits: &LiteralVector,
    display_threshold: f64,
    contribution_threshold: f64,
) -> Result<Explanation> {
    check_display_threshold(display_threshold)?;
    if contribution_threshold < 0.0 {
        return Err(Error::Config(format!(
            "contribution threshold must be >= 0, got {contribution_threshold}"
        )));
    }
    if lits.n_features() != model.n {
        return Err(Error::Dimension {
            context: "explanation literals".into(),
            expected: model.n,
            got: lits.n_features(),
        });
    }

    let mut total = model.b;
    let mut remainder = 0.0;
    let mut rules = Vec::new();
    for i in 0..model.m {
        let fit = model.fit(i, lits);
        let contribution = fit * model.r[i];
        total += contribution;
        if contribution.abs() >= contribution_threshold {
            rules.push(ExplainedRule {
                rule: render_rule_literals(model, i, display_threshold),
                fit,
                contribution,
            });
        } else {
            remainder += contribution;
        }
    }
    rules.sort_by(|a, b| {
        b.contribution
            .abs()
            .partial_cmp(&a.contribution.abs())
            .unwrap()
            .then(a.rule.index.cmp(&b.rule.index))
    });
    Ok(Explanation { rules, remainder, offset: model.b, total })
}

/// Formats a sigmoid weight: rounded to five decimals, trailing zeros
/// trimmed, always at least one decimal (so a crisp weight prints `1.0`).
fn format_sigma(s: f64) -> String {
    let rounded = (s * 1e5).round() / 1e5;
    if rounded == rounded.trunc() {
        format!("{rounded:.1}")
    } else {
        format!("{rounded}")
    }
}

fn literals_line(literals: &[RenderedLiteral]) -> String {
    if literals.is_empty() {
        return "(always)".to_string();
    }
    literals
        .iter()
        .map(|lit| {
            let core = format!("\"{}\"[{}]", lit.label, format_sigma(lit.sigma));
            if lit.negated {
                format!("not {core}")
            } else {
                core
            }
        })
        .collect::<Vec<_>>()
        .join(" & ")
}

fn direction_word(direction: Direction) -> &'static str {
    match direction {
        Direction::Raise => "raise",
        Direction::Lower => "lower",
    }
}

/// One rule-base line: literals and the raw rule weight.
pub fn render_rule(rule: &RenderedRule) -> String {
    format!(
        "{}\n  => {} predicted outcome by {:.4}",
        literals_line(&rule.literals),
        direction_word(rule.direction),
        rule.rule_weight.abs()
    )
}

/// Renders an explanation as text: one block per applied rule with its
/// fit-scaled contribution, then the offset, remainder and prediction.
/// Byte-stable for a given explanation.
pub fn render_text(explanation: &Explanation) -> String {
    let mut out = String::new();
    for explained in &explanation.rules {
        out.push_str(&literals_line(&explained.rule.literals));
        out.push_str(&format!(
            "\n  => {} predicted outcome by {:.4} (fit: {:.4})\n\n",
            direction_word(if explained.contribution > 0.0 {
                Direction::Raise
            } else {
                Direction::Lower
            }),
            explained.contribution.abs(),
            explained.fit
        ));
    }
    out.push_str(&format!("offset: {:.4}\n", explanation.offset));
    out.push_str(&format!("other rules: {:.4}\n", explanation.remainder));
    out.push_str(&format!("predicted outcome: {:.4}\n", explanation.total));
    out
}
