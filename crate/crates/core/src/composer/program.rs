//! Program trees over atomic questions.

use serde::{Deserialize, Serialize};

use crate::atomic::CompareOp;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnRef {
    pub position: usize,
    pub header: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Node {
    Atomic {
        atomic_id: String,
    },
    Compose {
        outer: Box<Program>,
        inner: Box<Program>,
    },
    Intersect {
        left: Box<Program>,
        right: Box<Program>,
    },
    Compare {
        left: Box<Program>,
        right: Box<Program>,
        column: ColumnRef,
        op: CompareOp,
    },
}

/// A formal question: an operation tree labelled with its template.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Program {
    pub question_type: String,
    pub node: Node,
}

impl Program {
    pub fn atomic(question_type: impl Into<String>, atomic_id: impl Into<String>) -> Self {
        Program {
            question_type: question_type.into(),
            node: Node::Atomic {
                atomic_id: atomic_id.into(),
            },
        }
    }

    pub fn compose(question_type: impl Into<String>, outer: Program, inner: Program) -> Self {
        Program {
            question_type: question_type.into(),
            node: Node::Compose {
                outer: Box::new(outer),
                inner: Box::new(inner),
            },
        }
    }

    pub fn intersect(question_type: impl Into<String>, left: Program, right: Program) -> Self {
        Program {
            question_type: question_type.into(),
            node: Node::Intersect {
                left: Box::new(left),
                right: Box::new(right),
            },
        }
    }

    pub fn compare(
        question_type: impl Into<String>,
        left: Program,
        right: Program,
        column: ColumnRef,
        op: CompareOp,
    ) -> Self {
        Program {
            question_type: question_type.into(),
            node: Node::Compare {
                left: Box::new(left),
                right: Box::new(right),
                column,
                op,
            },
        }
    }

    pub fn is_atomic(&self) -> bool {
        matches!(self.node, Node::Atomic { .. })
    }

    /// Depth in operation nodes.
    pub fn depth(&self) -> usize {
        match &self.node {
            Node::Atomic { .. } => 0,
            Node::Compose { outer: a, inner: b }
            | Node::Intersect { left: a, right: b }
            | Node::Compare { left: a, right: b, .. } => 1 + a.depth().max(b.depth()),
        }
    }

    /// Atomic question ids in left-to-right order.
    pub fn leaves(&self) -> Vec<&str> {
        match &self.node {
            Node::Atomic { atomic_id } => vec![atomic_id.as_str()],
            Node::Compose { outer: a, inner: b }
            | Node::Intersect { left: a, right: b }
            | Node::Compare { left: a, right: b, .. } => {
                let mut v = a.leaves();
                v.extend(b.leaves());
                v
            }
        }
    }
}
