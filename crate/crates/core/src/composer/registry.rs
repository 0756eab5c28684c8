//! The question-type registry: sixteen template shapes with their hop plans.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::atomic::Modality;

/// Operation tree of a template. Leaves are modality slots.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum Shape {
    Atomic { modality: Modality },
    Compose { outer: Box<Shape>, inner: Box<Shape> },
    Intersect { left: Box<Shape>, right: Box<Shape> },
    Compare { left: Box<Shape>, right: Box<Shape> },
}

impl Shape {
    pub fn leaf(modality: Modality) -> Self {
        Shape::Atomic { modality }
    }

    pub fn compose(outer: Shape, inner: Shape) -> Self {
        Shape::Compose {
            outer: Box::new(outer),
            inner: Box::new(inner),
        }
    }

    pub fn intersect(left: Shape, right: Shape) -> Self {
        Shape::Intersect {
            left: Box::new(left),
            right: Box::new(right),
        }
    }

    pub fn compare(left: Shape, right: Shape) -> Self {
        Shape::Compare {
            left: Box::new(left),
            right: Box::new(right),
        }
    }

    /// Canonical label, e.g. `Compose(TextQ,TableQ)`.
    pub fn label(&self) -> String {
        match self {
            Shape::Atomic { modality } => modality.operator().to_string(),
            Shape::Compose { outer, inner } => format!("Compose({},{})", outer.label(), inner.label()),
            Shape::Intersect { left, right } => format!("Intersect({},{})", left.label(), right.label()),
            Shape::Compare { left, right } => format!("Compare({},{})", left.label(), right.label()),
        }
    }

    /// Depth in operation nodes; a bare slot has depth 0.
    pub fn depth(&self) -> usize {
        match self {
            Shape::Atomic { .. } => 0,
            Shape::Compose { outer: a, inner: b }
            | Shape::Intersect { left: a, right: b }
            | Shape::Compare { left: a, right: b } => 1 + a.depth().max(b.depth()),
        }
    }

    pub fn leaf_modalities(&self) -> BTreeSet<Modality> {
        match self {
            Shape::Atomic { modality } => [modality.channel()].into(),
            Shape::Compose { outer: a, inner: b }
            | Shape::Intersect { left: a, right: b }
            | Shape::Compare { left: a, right: b } => {
                let mut s = a.leaf_modalities();
                s.extend(b.leaf_modalities());
                s
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Combine {
    None,
    Compare,
    Intersect,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TemplateSpec {
    pub label: String,
    pub shape: Shape,
    /// Modality holding the final answer.
    pub final_modality: Modality,
    /// Modalities visited in hop order (one or two).
    pub hop_plan: Vec<Modality>,
    pub combine: Combine,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum RegistryError {
    #[error("invalid registry document: {0}")]
    Json(String),
    #[error("template `{label}`: {msg}")]
    Invalid { label: String, msg: String },
    #[error("duplicate template `{0}`")]
    Duplicate(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TemplateRegistry {
    templates: Vec<TemplateSpec>,
}

impl TemplateRegistry {
    pub fn new(templates: Vec<TemplateSpec>) -> Result<Self, RegistryError> {
        let mut seen = BTreeSet::new();
        for t in &templates {
            let bad = |msg: &str| RegistryError::Invalid {
                label: t.label.clone(),
                msg: msg.to_string(),
            };
            if !seen.insert(t.label.clone()) {
                return Err(RegistryError::Duplicate(t.label.clone()));
            }
            if t.shape.label() != t.label {
                return Err(bad(&format!("label does not match shape `{}`", t.shape.label())));
            }
            if t.shape.depth() > 2 {
                return Err(bad("programs deeper than two operations are not supported"));
            }
            if !(1..=2).contains(&t.hop_plan.len()) {
                return Err(bad("hop plan must have one or two hops"));
            }
            if matches!(t.shape, Shape::Atomic { .. }) && t.hop_plan.len() != 1 {
                return Err(bad("atomic templates take a single hop"));
            }
            let expected = match t.shape {
                Shape::Atomic { .. } | Shape::Compose { .. } => Combine::None,
                Shape::Intersect { .. } => Combine::Intersect,
                Shape::Compare { .. } => Combine::Compare,
            };
            if t.combine != expected {
                return Err(bad("combine does not match the root operation"));
            }
        }
        Ok(TemplateRegistry { templates })
    }

    pub fn from_json(s: &str) -> Result<Self, RegistryError> {
        let templates: Vec<TemplateSpec> = serde_json::from_str(s).map_err(|e| RegistryError::Json(e.to_string()))?;
        Self::new(templates)
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(&self.templates).expect("registry serializes")
    }

    pub fn get(&self, label: &str) -> Option<&TemplateSpec> {
        self.templates.iter().find(|t| t.label == label)
    }

    pub fn iter(&self) -> impl Iterator<Item = &TemplateSpec> {
        self.templates.iter()
    }

    pub fn labels(&self) -> impl Iterator<Item = &str> {
        self.templates.iter().map(|t| t.label.as_str())
    }

    pub fn len(&self) -> usize {
        self.templates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.templates.is_empty()
    }
}

impl Default for TemplateRegistry {
    fn default() -> Self {
        use Modality::*;
        let t = |shape: Shape, final_modality, hop_plan: &[Modality], combine| TemplateSpec {
            label: shape.label(),
            shape,
            final_modality,
            hop_plan: hop_plan.to_vec(),
            combine,
        };
        let leaf = Shape::leaf;
        let templates = vec![
            t(leaf(Table), Table, &[Table], Combine::None),
            t(leaf(Text), Text, &[Text], Combine::None),
            t(leaf(Image), Image, &[Image], Combine::None),
            t(leaf(ImageList), ImageList, &[ImageList], Combine::None),
            t(Shape::compose(leaf(Table), leaf(ImageList)), Table, &[ImageList, Table], Combine::None),
            t(Shape::compose(leaf(Text), leaf(ImageList)), Text, &[ImageList, Text], Combine::None),
            t(Shape::compose(leaf(Image), leaf(Table)), Image, &[Table, Image], Combine::None),
            t(Shape::compose(leaf(Image), leaf(Text)), Image, &[Text, Image], Combine::None),
            t(Shape::compose(leaf(Text), leaf(Table)), Text, &[Table, Text], Combine::None),
            t(Shape::compose(leaf(Table), leaf(Text)), Table, &[Text, Table], Combine::None),
            t(Shape::intersect(leaf(Table), leaf(Text)), Text, &[Table, Text], Combine::Intersect),
            t(Shape::intersect(leaf(ImageList), leaf(Table)), Table, &[ImageList, Table], Combine::Intersect),
            t(Shape::intersect(leaf(ImageList), leaf(Text)), Text, &[ImageList, Text], Combine::Intersect),
            t(
                Shape::compare(leaf(Table), Shape::compose(leaf(Table), leaf(Text))),
                Table,
                &[Text, Table],
                Combine::Compare,
            ),
            t(
                Shape::compare(Shape::compose(leaf(Table), leaf(Image)), leaf(Table)),
                Table,
                &[Image, Table],
                Combine::Compare,
            ),
            t(
                Shape::compare(
                    Shape::compose(leaf(Table), leaf(Image)),
                    Shape::compose(leaf(Table), leaf(Text)),
                ),
                Table,
                &[Image, Text],
                Combine::Compare,
            ),
        ];
        TemplateRegistry::new(templates).expect("default registry is valid")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_has_sixteen_unique_templates() {
        let r = TemplateRegistry::default();
        assert_eq!(r.len(), 16);
        assert!(r.get("Compose(TextQ,TableQ)").is_some());
        assert_eq!(r.get("Compose(TextQ,TableQ)").unwrap().hop_plan, [Modality::Table, Modality::Text]);
        assert!(r.iter().all(|t| t.shape.depth() <= 2));
    }

    #[test]
    fn json_round_trip() {
        let r = TemplateRegistry::default();
        assert_eq!(TemplateRegistry::from_json(&r.to_json_pretty()).unwrap(), r);
    }

    #[test]
    fn mislabeled_template_is_rejected() {
        let mut r = TemplateRegistry::default().templates;
        r[4].label = "Compose(TableQ,TextQ)".into();
        assert!(TemplateRegistry::new(r).is_err());
    }
}
