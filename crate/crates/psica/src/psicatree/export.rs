//! Tree interchange document (versioned JSON) and graph-text export.

use serde::{Deserialize, Serialize};

use crate::dataset::{
    Feature, FeatureKind, FeatureSchema, SplitRule, SplitTest, TreatmentSet,
};
use crate::error::{Error, Result};

use super::{CostMatrix, GrowthMethod, NodeSummary, PsicaNode, PsicaTree};

pub const TREE_FORMAT: &str = "psica-tree";
pub const TREE_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct FeatureDoc {
    name: String,
    kind: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    levels: Option<Vec<String>>,
}

#[derive(Debug, Serialize, Deserialize)]
struct SplitDoc {
    feature: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    threshold: Option<f64>,
    /// Level names routed to the left child.
    #[serde(skip_serializing_if = "Option::is_none")]
    levels: Option<Vec<String>>,
}

#[derive(Debug, Serialize, Deserialize)]
struct NodeDoc {
    size: usize,
    agg_probs: Vec<f64>,
    useless: Vec<usize>,
    potential: Vec<usize>,
    trunc_probs: Vec<f64>,
    loss: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    split: Option<SplitDoc>,
    #[serde(skip_serializing_if = "Option::is_none")]
    left: Option<Box<NodeDoc>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    right: Option<Box<NodeDoc>>,
}

/// On-disk representation of a fitted tree.
#[derive(Debug, Serialize, Deserialize)]
pub struct TreeDocument {
    format: String,
    version: u32,
    alpha: f64,
    growth_method: u8,
    min_leaf: usize,
    treatments: Vec<String>,
    features: Vec<FeatureDoc>,
    costs: Vec<Vec<f64>>,
    root: NodeDoc,
}

fn feature_to_doc(f: &Feature) -> FeatureDoc {
    match &f.kind {
        FeatureKind::Numeric => FeatureDoc {
            name: f.name.clone(),
            kind: "numeric".into(),
            levels: None,
        },
        FeatureKind::OrdinalNumeric => FeatureDoc {
            name: f.name.clone(),
            kind: "ordinal".into(),
            levels: None,
        },
        FeatureKind::Categorical { levels } => FeatureDoc {
            name: f.name.clone(),
            kind: "categorical".into(),
            levels: Some(levels.clone()),
        },
    }
}

fn feature_from_doc(doc: &FeatureDoc) -> Result<Feature> {
    let kind = match doc.kind.as_str() {
        "numeric" => FeatureKind::Numeric,
        "ordinal" => FeatureKind::OrdinalNumeric,
        "categorical" => FeatureKind::Categorical {
            levels: doc
                .levels
                .clone()
                .ok_or_else(|| Error::BadModel(format!("feature '{}' lacks levels", doc.name)))?,
        },
        other => {
            return Err(Error::BadModel(format!(
                "unknown feature kind '{other}' for '{}'",
                doc.name
            )))
        }
    };
    Ok(Feature {
        name: doc.name.clone(),
        kind,
    })
}

fn node_to_doc(node: &PsicaNode, schema: &FeatureSchema) -> NodeDoc {
    let summary = node.summary();
    let mut doc = NodeDoc {
        size: summary.size,
        agg_probs: summary.agg_probs.clone(),
        useless: summary.useless.to_indices(),
        potential: summary.potential.to_indices(),
        trunc_probs: summary.trunc_probs.clone(),
        loss: summary.loss,
        split: None,
        left: None,
        right: None,
    };
    if let PsicaNode::Internal {
        rule, left, right, ..
    } = node
    {
        let feature = schema.feature(rule.feature);
        doc.split = Some(match &rule.test {
            SplitTest::Threshold(t) => SplitDoc {
                feature: feature.name.clone(),
                threshold: Some(*t),
                levels: None,
            },
            SplitTest::LevelSet(codes) => SplitDoc {
                feature: feature.name.clone(),
                threshold: None,
                levels: Some(
                    codes
                        .iter()
                        .map(|&c| {
                            feature.kind.levels().expect("categorical split")[c as usize].clone()
                        })
                        .collect(),
                ),
            },
        });
        doc.left = Some(Box::new(node_to_doc(left, schema)));
        doc.right = Some(Box::new(node_to_doc(right, schema)));
    }
    doc
}

fn node_from_doc(doc: &NodeDoc, schema: &FeatureSchema, m: usize) -> Result<PsicaNode> {
    if doc.agg_probs.len() != m || doc.trunc_probs.len() != m {
        return Err(Error::BadModel(
            "node probability vectors do not match the treatment count".into(),
        ));
    }
    let potential = TreatmentSet::from_indices(doc.potential.iter().copied());
    if potential.is_empty() {
        return Err(Error::BadModel("node has no potential treatments".into()));
    }
    let summary = NodeSummary {
        size: doc.size,
        agg_probs: doc.agg_probs.clone(),
        useless: TreatmentSet::from_indices(doc.useless.iter().copied()),
        potential,
        trunc_probs: doc.trunc_probs.clone(),
        loss: doc.loss,
    };
    match (&doc.split, &doc.left, &doc.right) {
        (None, None, None) => Ok(PsicaNode::Leaf { summary }),
        (Some(split), Some(left), Some(right)) => {
            let feature = schema.index_of(&split.feature).ok_or_else(|| {
                Error::BadModel(format!("split references unknown feature '{}'", split.feature))
            })?;
            let test = match (&split.threshold, &split.levels) {
                (Some(t), None) => SplitTest::Threshold(*t),
                (None, Some(level_names)) => {
                    let declared = schema.feature(feature).kind.levels().ok_or_else(|| {
                        Error::BadModel(format!(
                            "level split on non-categorical feature '{}'",
                            split.feature
                        ))
                    })?;
                    let mut codes = level_names
                        .iter()
                        .map(|name| {
                            declared
                                .iter()
                                .position(|l| l == name)
                                .map(|c| c as u32)
                                .ok_or_else(|| {
                                    Error::BadModel(format!(
                                        "split level '{name}' not declared for '{}'",
                                        split.feature
                                    ))
                                })
                        })
                        .collect::<Result<Vec<u32>>>()?;
                    codes.sort_unstable();
                    SplitTest::LevelSet(codes)
                }
                _ => {
                    return Err(Error::BadModel(
                        "split must carry exactly one of threshold/levels".into(),
                    ))
                }
            };
            Ok(PsicaNode::Internal {
                rule: SplitRule { feature, test },
                summary,
                left: Box::new(node_from_doc(left, schema, m)?),
                right: Box::new(node_from_doc(right, schema, m)?),
            })
        }
        _ => Err(Error::BadModel(
            "internal node must carry split, left and right".into(),
        )),
    }
}

impl PsicaTree {
    pub fn to_document(&self) -> TreeDocument {
        TreeDocument {
            format: TREE_FORMAT.to_string(),
            version: TREE_VERSION,
            alpha: self.alpha,
            growth_method: self.growth_method.tag(),
            min_leaf: self.min_leaf,
            treatments: self.treatments.clone(),
            features: self.schema.features().iter().map(feature_to_doc).collect(),
            costs: self.costs.rows(),
            root: node_to_doc(&self.root, &self.schema),
        }
    }

    pub fn from_document(doc: &TreeDocument) -> Result<PsicaTree> {
        if doc.format != TREE_FORMAT {
            return Err(Error::BadModel(format!(
                "expected format '{TREE_FORMAT}', found '{}'",
                doc.format
            )));
        }
        if doc.version != TREE_VERSION {
            return Err(Error::BadModel(format!(
                "unsupported tree document version {}",
                doc.version
            )));
        }
        let schema = FeatureSchema::new(
            doc.features
                .iter()
                .map(feature_from_doc)
                .collect::<Result<Vec<_>>>()?,
        )?;
        let m = doc.treatments.len();
        let root = node_from_doc(&doc.root, &schema, m)?;
        Ok(PsicaTree {
            root,
            schema,
            treatments: doc.treatments.clone(),
            alpha: doc.alpha,
            growth_method: GrowthMethod::from_tag(doc.growth_method)?,
            min_leaf: doc.min_leaf,
            costs: CostMatrix::from_rows(doc.costs.clone())?,
        })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.to_document())?)
    }

    pub fn from_json(text: &str) -> Result<PsicaTree> {
        let doc: TreeDocument = serde_json::from_str(text)?;
        PsicaTree::from_document(&doc)
    }

    fn rule_text(&self, rule: &SplitRule) -> String {
        let feature = self.schema.feature(rule.feature);
        match &rule.test {
            SplitTest::Threshold(t) => format!("{} <= {:.6}", feature.name, t),
            SplitTest::LevelSet(codes) => {
                let levels = feature.kind.levels().expect("categorical split");
                let names: Vec<&str> = codes
                    .iter()
                    .map(|&c| levels[c as usize].as_str())
                    .collect();
                format!("{} in {{{}}}", feature.name, names.join(", "))
            }
        }
    }

    fn probs_text(probs: &[f64]) -> String {
        let entries: Vec<String> = probs.iter().map(|v| format!("{v:.3}")).collect();
        format!("[{}]", entries.join(", "))
    }

    /// Graphviz DOT rendering: internal boxes show the split rule; leaf
    /// boxes show `label: {treatments}, π: [...], |Δ|=n`.
    pub fn to_dot(&self) -> String {
        let mut out = String::from("digraph psica_tree {\n  node [shape=box];\n");
        let mut next_id = 0usize;
        self.dot_node(&self.root, &mut next_id, &mut out);
        out.push_str("}\n");
        out
    }

    fn dot_node(&self, node: &PsicaNode, next_id: &mut usize, out: &mut String) -> usize {
        let id = *next_id;
        *next_id += 1;
        let summary = node.summary();
        match node {
            PsicaNode::Leaf { .. } => {
                out.push_str(&format!(
                    "  n{id} [label=\"label: {}, \u{3c0}: {}, |\u{394}|={}\"];\n",
                    summary.potential.display_with(&self.treatments),
                    Self::probs_text(&summary.agg_probs),
                    summary.size
                ));
            }
            PsicaNode::Internal {
                rule, left, right, ..
            } => {
                out.push_str(&format!(
                    "  n{id} [label=\"{}\\n\u{3c0}: {}, |\u{394}|={}\"];\n",
                    self.rule_text(rule),
                    Self::probs_text(&summary.agg_probs),
                    summary.size
                ));
                let left_id = self.dot_node(left, next_id, out);
                let right_id = self.dot_node(right, next_id, out);
                out.push_str(&format!("  n{id} -> n{left_id} [label=\"yes\"];\n"));
                out.push_str(&format!("  n{id} -> n{right_id} [label=\"no\"];\n"));
            }
        }
        id
    }

    /// Plain-text leaf table, one row per leaf in left-to-right order.
    pub fn leaf_table(&self) -> String {
        let mut out = String::from("leaf  size  label  trunc_probs  agg_probs\n");
        for (i, leaf) in self.leaves().iter().enumerate() {
            out.push_str(&format!(
                "{}  {}  {}  {}  {}\n",
                i + 1,
                leaf.size,
                leaf.potential.display_with(&self.treatments),
                Self::probs_text(&leaf.trunc_probs),
                Self::probs_text(&leaf.agg_probs),
            ));
        }
        out
    }
}
