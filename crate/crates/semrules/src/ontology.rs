//! Lightweight ontology support: subsumption and disjointness axioms,
//! bound to feature columns.
//!
//! Two things come out of an ontology document: a *pre-completion* pass
//! over the feature matrix (a parent feature is at least as "on" as any of
//! its children) and a [`ConstraintSet`] of literal-index pairs feeding
//! the implied/exclusive penalties during training.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::features::{ColumnMeta, FeatureMatrix};
use crate::{Error, Result};

/// Class declaration: bare id or id plus human label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ClassDef {
    Id(String),
    Labeled { id: String, label: String },
}

impl ClassDef {
    pub fn id(&self) -> &str {
        match self {
            ClassDef::Id(id) => id,
            ClassDef::Labeled { id, .. } => id,
        }
    }
}

/// A parsed ontology document: class list, subsumption and disjointness
/// axioms, and bindings from feature column names to class ids.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OntologyDoc {
    #[serde(default)]
    pub classes: Vec<ClassDef>,
    /// (child, parent) pairs: every instance of child is one of parent.
    #[serde(default)]
    pub subclass_of: Vec<(String, String)>,
    /// Unordered pairs of classes that cannot both apply.
    #[serde(default)]
    pub disjoint: Vec<(String, String)>,
    /// Feature column name -> class id.
    #[serde(default)]
    pub bindings: BTreeMap<String, String>,
}

/// Parses and validates an ontology document from JSON.
pub fn parse_ontology(text: &str) -> Result<OntologyDoc> {
    let doc: OntologyDoc = serde_json::from_str(text)?;
    doc.validate()?;
    Ok(doc)
}

impl OntologyDoc {
    /// Rejects unknown class references, subsumption cycles, and
    /// disjointness between a class and itself or its ancestors.
    pub fn validate(&self) -> Result<()> {
        let known: BTreeSet<&str> = self.classes.iter().map(|c| c.id()).collect();
        let check = |id: &str, role: &str| -> Result<()> {
            if known.contains(id) {
                Ok(())
            } else {
                Err(Error::Ontology(format!("{role} references unknown class '{id}'")))
            }
        };
        for (child, parent) in &self.subclass_of {
            check(child, "subclass_of")?;
            check(parent, "subclass_of")?;
        }
        for (a, b) in &self.disjoint {
            check(a, "disjoint")?;
            check(b, "disjoint")?;
        }
        for (column, class) in &self.bindings {
            if !known.contains(class.as_str()) {
                return Err(Error::Ontology(format!(
                    "binding for column '{column}' references unknown class '{class}'"
                )));
            }
        }

        if let Some(cycle) = find_cycle(&self.subclass_of) {
            return Err(Error::Ontology(format!(
                "subsumption cycle: {}",
                cycle.join(" -> ")
            )));
        }

        // With acyclicity established the closure is well-defined; use it
        // to rule out disjointness along a subsumption path.
        let closure = implication_closure(self);
        let closed: BTreeSet<(&str, &str)> = closure
            .iter()
            .map(|(c, p)| (c.as_str(), p.as_str()))
            .collect();
        for (a, b) in &self.disjoint {
            if a == b {
                return Err(Error::Ontology(format!("class '{a}' declared disjoint with itself")));
            }
            if closed.contains(&(a.as_str(), b.as_str())) || closed.contains(&(b.as_str(), a.as_str()))
            {
                return Err(Error::Ontology(format!(
                    "classes '{a}' and '{b}' are disjoint but related by subsumption"
                )));
            }
        }
        Ok(())
    }
}

/// Depth-first cycle search over child -> parent edges.
fn find_cycle(edges: &[(String, String)]) -> Option<Vec<String>> {
    let mut adj: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    for (child, parent) in edges {
        adj.entry(child).or_default().push(parent);
    }
    let mut done: BTreeSet<&str> = BTreeSet::new();
    for start in adj.keys().copied().collect::<Vec<_>>() {
        if done.contains(start) {
            continue;
        }
        let mut stack: Vec<(&str, usize)> = vec![(start, 0)];
        let mut path: Vec<&str> = vec![start];
        let mut on_path: BTreeSet<&str> = [start].into();
        while let Some((node, next)) = stack.pop() {
            let children = adj.get(node).map(|v| v.as_slice()).unwrap_or(&[]);
            if next < children.len() {
                stack.push((node, next + 1));
                let succ = children[next];
                if on_path.contains(succ) {
                    let from = path.iter().position(|&n| n == succ).unwrap();
                    let mut cycle: Vec<String> =
                        path[from..].iter().map(|s| s.to_string()).collect();
                    cycle.push(succ.to_string());
                    return Some(cycle);
                }
                if !done.contains(succ) {
                    stack.push((succ, 0));
                    path.push(succ);
                    on_path.insert(succ);
                }
            } else {
                done.insert(node);
                on_path.remove(node);
                path.pop();
            }
        }
    }
    None
}

/// Reflexive-free transitive closure of the subclass axioms, as sorted
/// deduplicated (child, parent) pairs.
pub fn implication_closure(doc: &OntologyDoc) -> Vec<(String, String)> {
    let mut adj: BTreeMap<&str, BTreeSet<&str>> = BTreeMap::new();
    for (child, parent) in &doc.subclass_of {
        if child != parent {
            adj.entry(child).or_default().insert(parent);
        }
    }
    let mut closure: BTreeSet<(String, String)> = BTreeSet::new();
    for &start in adj.keys().copied().collect::<Vec<_>>().iter() {
        // BFS over ancestors
        let mut queue: Vec<&str> = adj[start].iter().copied().collect();
        let mut seen: BTreeSet<&str> = queue.iter().copied().collect();
        while let Some(node) = queue.pop() {
            if node != start {
                closure.insert((start.to_string(), node.to_string()));
            }
            if let Some(parents) = adj.get(node) {
                for &p in parents {
                    if seen.insert(p) {
                        queue.push(p);
                    }
                }
            }
        }
    }
    closure.into_iter().collect()
}

/// Pre-completes a feature matrix: for every closed implication
/// (child, parent) with both classes bound to existing columns, each row's
/// parent membership becomes `max(parent, child)`. Implications whose
/// columns are absent are skipped (the ontology may be broader than the
/// dataset).
pub fn precomplete(matrix: &FeatureMatrix, doc: &OntologyDoc) -> FeatureMatrix {
    let class_to_col: BTreeMap<&str, usize> = doc
        .bindings
        .iter()
        .filter_map(|(column, class)| {
            matrix.column_index(column).map(|idx| (class.as_str(), idx))
        })
        .collect();

    let mut pairs: Vec<(usize, usize)> = Vec::new();
    for (child, parent) in implication_closure(doc) {
        if let (Some(&c), Some(&p)) = (class_to_col.get(child.as_str()), class_to_col.get(parent.as_str())) {
            pairs.push((c, p));
        }
    }

    let mut out = matrix.clone();
    for row in 0..out.n_rows() {
        for &(child_col, parent_col) in &pairs {
            let child = out.get(row, child_col);
            if child > out.get(row, parent_col) {
                out.set(row, parent_col, child);
            }
        }
    }
    out
}

/// Literal-index pair sets driving the implied/exclusive penalties.
///
/// For `n` features, literal `j < n` is the feature itself and literal
/// `j + n` its negation. The exclusion set always contains every
/// contradiction pair `(j, j + n)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintSet {
    n: usize,
    implications: Vec<(usize, usize)>,
    exclusions: Vec<(usize, usize)>,
}

impl ConstraintSet {
    /// Builds a set from explicit pairs, adding the contradiction pairs
    /// and validating every index against `2n`.
    pub fn new(
        n: usize,
        implications: Vec<(usize, usize)>,
        exclusions: Vec<(usize, usize)>,
    ) -> Result<Self> {
        for &(a, b) in implications.iter().chain(exclusions.iter()) {
            if a >= 2 * n || b >= 2 * n {
                return Err(Error::Config(format!(
                    "literal pair ({a}, {b}) out of range for {n} features"
                )));
            }
        }
        let mut implications: Vec<(usize, usize)> = implications;
        implications.sort_unstable();
        implications.dedup();

        let mut exc: BTreeSet<(usize, usize)> = exclusions
            .into_iter()
            .map(|(a, b)| if a <= b { (a, b) } else { (b, a) })
            .collect();
        for j in 0..n {
            exc.insert((j, j + n));
        }
        Ok(ConstraintSet {
            n,
            implications,
            exclusions: exc.into_iter().collect(),
        })
    }

    /// Only the built-in contradiction pairs (no ontology).
    pub fn contradictions_only(n: usize) -> Self {
        ConstraintSet::new(n, Vec::new(), Vec::new()).expect("contradiction pairs are in range")
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn implications(&self) -> &[(usize, usize)] {
        &self.implications
    }

    pub fn exclusions(&self) -> &[(usize, usize)] {
        &self.exclusions
    }
}

/// Options for deriving literal pairs from an ontology.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LiteralPairOptions {
    /// Also exclude `child AND NOT parent` for every implication.
    pub contrapositive: bool,
    /// Use the transitive closure of subsumption (direct axioms only when
    /// false).
    pub transitive: bool,
}

impl Default for LiteralPairOptions {
    fn default() -> Self {
        LiteralPairOptions { contrapositive: false, transitive: true }
    }
}

/// Resolves ontology axioms against feature columns into a
/// [`ConstraintSet`], returning warnings for bindings that reference
/// columns absent from the matrix.
pub fn literal_pairs(
    doc: &OntologyDoc,
    meta: &[ColumnMeta],
    options: LiteralPairOptions,
) -> Result<(ConstraintSet, Vec<String>)> {
    let n = meta.len();
    let col_index: BTreeMap<&str, usize> = meta
        .iter()
        .enumerate()
        .map(|(i, m)| (m.name.as_str(), i))
        .collect();

    let mut warnings = Vec::new();
    let mut class_to_col: BTreeMap<&str, usize> = BTreeMap::new();
    for (column, class) in &doc.bindings {
        match col_index.get(column.as_str()) {
            Some(&idx) => {
                class_to_col.insert(class.as_str(), idx);
            }
            None => warnings.push(format!(
                "binding '{column}' -> '{class}' skipped: column not in feature matrix"
            )),
        }
    }

    let implication_source: Vec<(String, String)> = if options.transitive {
        implication_closure(doc)
    } else {
        doc.subclass_of.clone()
    };

    let mut implications = Vec::new();
    let mut exclusions = Vec::new();
    for (child, parent) in &implication_source {
        if let (Some(&c), Some(&p)) =
            (class_to_col.get(child.as_str()), class_to_col.get(parent.as_str()))
        {
            implications.push((c, p));
            if options.contrapositive {
                // child AND NOT parent is unsatisfiable
                exclusions.push((c, p + n));
            }
        }
    }
    for (a, b) in &doc.disjoint {
        if let (Some(&ia), Some(&ib)) =
            (class_to_col.get(a.as_str()), class_to_col.get(b.as_str()))
        {
            exclusions.push((ia, ib));
        }
    }

    let set = ConstraintSet::new(n, implications, exclusions)?;
    Ok((set, warnings))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::{apply_spec, BinarizationSpec, ColumnSpec, MissingPolicy, RawColumn, RawColumnData, RawTable, Scheme};

    fn doc(classes: &[&str], subs: &[(&str, &str)], disj: &[(&str, &str)]) -> OntologyDoc {
        OntologyDoc {
            classes: classes.iter().map(|c| ClassDef::Id(c.to_string())).collect(),
            subclass_of: subs.iter().map(|(a, b)| (a.to_string(), b.to_string())).collect(),
            disjoint: disj.iter().map(|(a, b)| (a.to_string(), b.to_string())).collect(),
            bindings: BTreeMap::new(),
        }
    }

    #[test]
    fn parses_single_subsumption() {
        let text = r#"{
            "classes": ["PharmacologicalSupport", {"id": "Somatic", "label": "Somatic delivery"}],
            "subclass_of": [["PharmacologicalSupport", "Somatic"]]
        }"#;
        let doc = parse_ontology(text).unwrap();
        assert_eq!(doc.subclass_of.len(), 1);
        assert_eq!(doc.classes[1].id(), "Somatic");
    }

    #[test]
    fn rejects_two_cycle() {
        let d = doc(&["A", "B"], &[("A", "B"), ("B", "A")], &[]);
        let err = d.validate().unwrap_err().to_string();
        assert!(err.contains("cycle"), "{err}");
    }

    #[test]
    fn rejects_disjoint_with_ancestor() {
        let d = doc(&["A", "B"], &[("A", "B")], &[("A", "B")]);
        let err = d.validate().unwrap_err().to_string();
        assert!(err.contains("disjoint"), "{err}");
    }

    #[test]
    fn rejects_unknown_binding() {
        let mut d = doc(&["A"], &[], &[]);
        d.bindings.insert("col".into(), "Ghost".into());
        assert!(d.validate().is_err());
    }

    #[test]
    fn closure_adds_transitive_pair() {
        let d = doc(&["A", "B", "C"], &[("A", "B"), ("B", "C")], &[]);
        let closure = implication_closure(&d);
        assert_eq!(
            closure,
            vec![
                ("A".to_string(), "B".to_string()),
                ("A".to_string(), "C".to_string()),
                ("B".to_string(), "C".to_string())
            ]
        );
    }

    #[test]
    fn closure_of_empty_is_empty() {
        let d = doc(&[], &[], &[]);
        assert!(implication_closure(&d).is_empty());
    }

    #[test]
    fn closure_of_chain_of_five() {
        let names = ["A", "B", "C", "D", "E"];
        let subs: Vec<(&str, &str)> = names.windows(2).map(|w| (w[0], w[1])).collect();
        let d = doc(&names, &subs, &[]);
        // all pairs i < j in a 5-chain: C(5,2) = 10
        assert_eq!(implication_closure(&d).len(), 10);
    }

    fn binary_matrix(names: &[&str], rows: &[&[f64]]) -> FeatureMatrix {
        let raw = RawTable {
            columns: names
                .iter()
                .enumerate()
                .map(|(c, name)| RawColumn {
                    name: name.to_string(),
                    data: RawColumnData::Continuous(rows.iter().map(|r| r[c]).collect()),
                })
                .collect(),
            row_ids: (0..rows.len()).map(|i| format!("r{i}")).collect(),
        };
        let spec = BinarizationSpec {
            columns: names
                .iter()
                .map(|name| ColumnSpec {
                    column: name.to_string(),
                    scheme: Scheme::PassthroughBinary,
                    missing: MissingPolicy::ZeroFill,
                })
                .collect(),
            seed: 0,
        };
        apply_spec(&raw, &spec).unwrap().0
    }

    fn bound_doc() -> OntologyDoc {
        let mut d = doc(
            &["PharmacologicalSupport", "Somatic"],
            &[("PharmacologicalSupport", "Somatic")],
            &[],
        );
        d.bindings.insert("pharma".into(), "PharmacologicalSupport".into());
        d.bindings.insert("somatic".into(), "Somatic".into());
        d
    }

    #[test]
    fn precomplete_turns_parent_on() {
        let matrix = binary_matrix(&["pharma", "somatic"], &[&[1.0, 0.0]]);
        let out = precomplete(&matrix, &bound_doc());
        assert_eq!(out.get(0, 1), 1.0);
        assert_eq!(out.get(0, 0), 1.0);
    }

    #[test]
    fn precomplete_takes_max_of_fuzzy_values() {
        let matrix = binary_matrix(&["pharma", "somatic"], &[&[0.6, 0.2]]);
        let out = precomplete(&matrix, &bound_doc());
        assert_eq!(out.get(0, 1), 0.6);
    }

    #[test]
    fn precomplete_fixed_point() {
        let matrix = binary_matrix(&["pharma", "somatic"], &[&[0.3, 0.9], &[1.0, 1.0]]);
        let once = precomplete(&matrix, &bound_doc());
        assert_eq!(once, matrix);
        let twice = precomplete(&once, &bound_doc());
        assert_eq!(twice, once);
    }

    #[test]
    fn literal_pairs_resolves_disjoint_axiom() {
        let mut d = doc(&["Buproprion", "NotPill"], &[], &[("Buproprion", "NotPill")]);
        d.bindings.insert("buproprion".into(), "Buproprion".into());
        d.bindings.insert("not_pill".into(), "NotPill".into());
        let matrix = binary_matrix(&["buproprion", "not_pill"], &[&[1.0, 0.0]]);
        let (set, warnings) =
            literal_pairs(&d, matrix.meta(), LiteralPairOptions::default()).unwrap();
        assert!(warnings.is_empty());
        // one bound disjoint pair + two contradiction pairs
        assert_eq!(set.exclusions(), &[(0, 1), (0, 2), (1, 3)]);
        assert!(set.implications().is_empty());
    }

    #[test]
    fn contradiction_pairs_always_present() {
        let set = ConstraintSet::contradictions_only(3);
        assert_eq!(set.exclusions(), &[(0, 3), (1, 4), (2, 5)]);
    }

    #[test]
    fn contrapositive_adds_negated_parent_exclusion() {
        let mut d = doc(&["A", "B"], &[("A", "B")], &[]);
        d.bindings.insert("a".into(), "A".into());
        d.bindings.insert("b".into(), "B".into());
        let matrix = binary_matrix(&["a", "b"], &[&[1.0, 1.0]]);
        let opts = LiteralPairOptions { contrapositive: true, transitive: true };
        let (set, _) = literal_pairs(&d, matrix.meta(), opts).unwrap();
        let n = 2;
        assert!(set.exclusions().contains(&(0, 1 + n)));
        assert_eq!(set.implications(), &[(0, 1)]);
    }

    #[test]
    fn unbound_class_warns_and_skips() {
        let mut d = doc(&["A", "B"], &[("A", "B")], &[]);
        d.bindings.insert("a".into(), "A".into());
        d.bindings.insert("missing_col".into(), "B".into());
        let matrix = binary_matrix(&["a"], &[&[1.0]]);
        let (set, warnings) =
            literal_pairs(&d, matrix.meta(), LiteralPairOptions::default()).unwrap();
        assert_eq!(warnings.len(), 1);
        assert!(set.implications().is_empty());
    }

    #[test]
    fn direct_only_pairs_skip_transitive_links() {
        let mut d = doc(&["A", "B", "C"], &[("A", "B"), ("B", "C")], &[]);
        d.bindings.insert("a".into(), "A".into());
        d.bindings.insert("b".into(), "B".into());
        d.bindings.insert("c".into(), "C".into());
        let matrix = binary_matrix(&["a", "b", "c"], &[&[1.0, 1.0, 1.0]]);
        let opts = LiteralPairOptions { contrapositive: false, transitive: false };
        let (set, _) = literal_pairs(&d, matrix.meta(), opts).unwrap();
        assert_eq!(set.implications(), &[(0, 1), (1, 2)]);
        let opts = LiteralPairOptions { contrapositive: false, transitive: true };
        let (set, _) = literal_pairs(&d, matrix.meta(), opts).unwrap();
        assert_eq!(set.implications(), &[(0, 1), (0, 2), (1, 2)]);
    }
}
