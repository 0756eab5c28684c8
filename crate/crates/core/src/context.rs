//! Table/text/image contexts: types, parsing, validation, filtering, and
//! table linearization.

use std::collections::{BTreeSet, HashMap, HashSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::column::{classify_column, SemanticType};
use crate::text;

#[derive(Debug, Error)]
pub enum ContextError {
    #[error("schema violation: {0}")]
    Schema(#[from] serde_json::Error),
    #[error("row {row} has {found} cells but the table has {expected} columns")]
    RaggedRow {
        row: usize,
        expected: usize,
        found: usize,
    },
    #[error("cell ({row}, {column}) links unknown entity `{title}`")]
    DanglingEntity {
        row: usize,
        column: usize,
        title: String,
    },
    #[error("{owner} references unknown image `{id}`")]
    DanglingImage { owner: String, id: String },
    #[error("image `{id}` names unknown entity `{title}`")]
    DanglingImageEntity { id: String, title: String },
    #[error("duplicate {kind} `{id}`")]
    Duplicate { kind: &'static str, id: String },
    #[error("{0} must not be empty")]
    Empty(&'static str),
    #[error("in-table image `{0}` is not placed in any cell")]
    UnplacedInTableImage(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ImageSource {
    InTable,
    EntityPage,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageRef {
    pub id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub entity_title: Option<String>,
    pub source: ImageSource,
    pub uri: String,
}

/// A linked concept. `image` holds the id of its profile image, if any.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WikiEntity {
    pub title: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Cell {
    pub text: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub links: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image: Option<String>,
}

impl Cell {
    pub fn plain(text: impl Into<String>) -> Self {
        Cell {
            text: text.into(),
            ..Cell::default()
        }
    }

    pub fn linked(text: impl Into<String>, entity: impl Into<String>) -> Self {
        Cell {
            text: text.into(),
            links: vec![entity.into()],
            image: None,
        }
    }

    /// The entity this cell denotes, when it links exactly one.
    pub fn entity(&self) -> Option<&str> {
        match self.links.as_slice() {
            [only] => Some(only),
            _ => None,
        }
    }

    /// The string a question answer takes when it selects this cell: the
    /// linked entity title for single-entity cells, else the surface text.
    pub fn answer_value(&self) -> &str {
        self.entity().unwrap_or(&self.text)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Column {
    pub header: String,
    pub semantic_type: SemanticType,
    pub position: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Table {
    pub page_title: String,
    pub table_title: String,
    pub columns: Vec<Column>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn n_cols(&self) -> usize {
        self.columns.len()
    }

    pub fn column_texts(&self, col: usize) -> Vec<&str> {
        self.rows.iter().map(|r| r[col].text.as_str()).collect()
    }

    pub fn column_by_header(&self, header: &str) -> Option<&Column> {
        self.columns
            .iter()
            .find(|c| c.header.eq_ignore_ascii_case(header))
    }

    /// Rows containing a cell that links `entity`.
    pub fn rows_linking(&self, entity: &str) -> Vec<usize> {
        self.rows
            .iter()
            .enumerate()
            .filter(|(_, row)| row.iter().any(|c| c.links.iter().any(|l| l == entity)))
            .map(|(i, _)| i)
            .collect()
    }

    /// Every `(row, column)` whose cell links `entity`.
    pub fn cells_linking(&self, entity: &str) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for (r, row) in self.rows.iter().enumerate() {
            for (c, cell) in row.iter().enumerate() {
                if cell.links.iter().any(|l| l == entity) {
                    out.push((r, c));
                }
            }
        }
        out
    }

    /// Distinct entity titles linked anywhere in the table, in row-major
    /// first-occurrence order.
    pub fn linked_entities(&self) -> Vec<&str> {
        let mut seen = HashSet::new();
        let mut out = Vec::new();
        for cell in self.rows.iter().flatten() {
            for l in &cell.links {
                if seen.insert(l.as_str()) {
                    out.push(l.as_str());
                }
            }
        }
        out
    }

    /// Stable identity for split disjointness and statistics.
    pub fn key(&self) -> String {
        format!("{} :: {}", self.page_title, self.table_title)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParagraphRole {
    Gold,
    Distractor,
    #[default]
    Unassigned,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Paragraph {
    pub id: String,
    pub article_title: String,
    pub text: String,
    #[serde(default)]
    pub role: ParagraphRole,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Context {
    pub id: String,
    pub table: Table,
    pub paragraphs: Vec<Paragraph>,
    pub images: Vec<ImageRef>,
    pub entities: Vec<WikiEntity>,
}

impl Context {
    pub fn entity(&self, title: &str) -> Option<&WikiEntity> {
        self.entities.iter().find(|e| e.title == title)
    }

    pub fn image(&self, id: &str) -> Option<&ImageRef> {
        self.images.iter().find(|i| i.id == id)
    }

    pub fn paragraph(&self, id: &str) -> Option<&Paragraph> {
        self.paragraphs.iter().find(|p| p.id == id)
    }

    /// The profile image of an entity, if it has one.
    pub fn entity_image(&self, title: &str) -> Option<&ImageRef> {
        self.entity(title)
            .and_then(|e| e.image.as_deref())
            .and_then(|id| self.image(id))
    }

    /// Ids of images reachable from the table: in-table images plus profile
    /// images of linked entities.
    pub fn reachable_images(&self) -> BTreeSet<&str> {
        let mut out = BTreeSet::new();
        for cell in self.table.rows.iter().flatten() {
            if let Some(id) = &cell.image {
                out.insert(id.as_str());
            }
            for link in &cell.links {
                if let Some(img) = self.entity_image(link) {
                    out.insert(img.id.as_str());
                }
            }
        }
        out
    }

    /// "In the [table title] of [page title], "
    pub fn open_domain_prefix(&self) -> String {
        format!("In the {} of {}, ", self.table.table_title, self.table.page_title)
    }

    pub fn validate(&self) -> Result<(), ContextError> {
        let mut titles = HashSet::new();
        for e in &self.entities {
            if e.title.trim().is_empty() {
                return Err(ContextError::Empty("entity title"));
            }
            if !titles.insert(e.title.as_str()) {
                return Err(ContextError::Duplicate {
                    kind: "entity",
                    id: e.title.clone(),
                });
            }
        }
        let mut image_ids = HashMap::new();
        for img in &self.images {
            if image_ids.insert(img.id.as_str(), img).is_some() {
                return Err(ContextError::Duplicate {
                    kind: "image",
                    id: img.id.clone(),
                });
            }
            if let Some(t) = &img.entity_title {
                if !titles.contains(t.as_str()) {
                    return Err(ContextError::DanglingImageEntity {
                        id: img.id.clone(),
                        title: t.clone(),
                    });
                }
            }
        }
        for e in &self.entities {
            if let Some(id) = &e.image {
                if !image_ids.contains_key(id.as_str()) {
                    return Err(ContextError::DanglingImage {
                        owner: format!("entity `{}`", e.title),
                        id: id.clone(),
                    });
                }
            }
        }
        let width = self.table.columns.len();
        let mut placed = HashSet::new();
        for (r, row) in self.table.rows.iter().enumerate() {
            if row.len() != width {
                return Err(ContextError::RaggedRow {
                    row: r,
                    expected: width,
                    found: row.len(),
                });
            }
            for (c, cell) in row.iter().enumerate() {
                for l in &cell.links {
                    if !titles.contains(l.as_str()) {
                        return Err(ContextError::DanglingEntity {
                            row: r,
                            column: c,
                            title: l.clone(),
                        });
                    }
                }
                if let Some(id) = &cell.image {
                    if !image_ids.contains_key(id.as_str()) {
                        return Err(ContextError::DanglingImage {
                            owner: format!("cell ({r}, {c})"),
                            id: id.clone(),
                        });
                    }
                    placed.insert(id.as_str());
                }
            }
        }
        for img in &self.images {
            if img.source == ImageSource::InTable && !placed.contains(img.id.as_str()) {
                return Err(ContextError::UnplacedInTableImage(img.id.clone()));
            }
        }
        for (i, col) in self.table.columns.iter().enumerate() {
            if col.position != i {
                return Err(ContextError::Duplicate {
                    kind: "column position",
                    id: col.position.to_string(),
                });
            }
        }
        let mut pids = HashSet::new();
        for p in &self.paragraphs {
            if p.text.trim().is_empty() {
                return Err(ContextError::Empty("paragraph text"));
            }
            if !pids.insert(p.id.as_str()) {
                return Err(ContextError::Duplicate {
                    kind: "paragraph",
                    id: p.id.clone(),
                });
            }
        }
        Ok(())
    }
}

// On-disk form. Columns may omit their semantic type (it is then inferred)
// and cells may be bare strings.

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ContextDocument {
    #[serde(default)]
    id: Option<String>,
    table: TableDocument,
    paragraphs: Vec<Paragraph>,
    images: Vec<ImageRef>,
    entities: Vec<WikiEntity>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct TableDocument {
    page_title: String,
    table_title: String,
    columns: Vec<ColumnDocument>,
    rows: Vec<Vec<CellDocument>>,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum ColumnDocument {
    Header(String),
    Full {
        header: String,
        #[serde(default)]
        semantic_type: Option<SemanticType>,
        #[serde(default)]
        position: Option<usize>,
    },
}

#[derive(Deserialize)]
#[serde(untagged)]
enum CellDocument {
    Text(String),
    Full(Cell),
}

/// Parses and validates one context document.
pub fn parse_context(json: &str) -> Result<Context, ContextError> {
    let doc: ContextDocument = serde_json::from_str(json)?;
    let TableDocument {
        page_title,
        table_title,
        columns,
        rows,
    } = doc.table;
    let rows: Vec<Vec<Cell>> = rows
        .into_iter()
        .map(|r| {
            r.into_iter()
                .map(|c| match c {
                    CellDocument::Text(t) => Cell::plain(t),
                    CellDocument::Full(c) => c,
                })
                .collect()
        })
        .collect();
    let width = columns.len();
    for (r, row) in rows.iter().enumerate() {
        if row.len() != width {
            return Err(ContextError::RaggedRow {
                row: r,
                expected: width,
                found: row.len(),
            });
        }
    }
    let columns = columns
        .into_iter()
        .enumerate()
        .map(|(i, c)| {
            let (header, ty, pos) = match c {
                ColumnDocument::Header(h) => (h, None, None),
                ColumnDocument::Full {
                    header,
                    semantic_type,
                    position,
                } => (header, semantic_type, position),
            };
            let semantic_type = ty.unwrap_or_else(|| {
                let texts: Vec<&str> = rows.iter().map(|r| r[i].text.as_str()).collect();
                classify_column(&texts)
            });
            Column {
                header,
                semantic_type,
                position: pos.unwrap_or(i),
            }
        })
        .collect();
    let table = Table {
        page_title,
        table_title,
        columns,
        rows,
    };
    let id = doc.id.unwrap_or_else(|| slug(&format!("{} {}", table.page_title, table.table_title)));
    let ctx = Context {
        id,
        table,
        paragraphs: doc.paragraphs,
        images: doc.images,
        entities: doc.entities,
    };
    ctx.validate()?;
    Ok(ctx)
}

/// Lowercase alphanumeric tokens joined by `-`.
pub fn slug(s: &str) -> String {
    text::words(s).join("-")
}

/// Row-count and image-count acceptance bounds for anchor tables.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TableFilter {
    pub min_rows: usize,
    pub max_rows: usize,
    pub min_images: usize,
}

impl Default for TableFilter {
    fn default() -> Self {
        TableFilter {
            min_rows: 10,
            max_rows: 25,
            min_images: 3,
        }
    }
}

/// Whether a context's table is kept as an anchor.
pub fn filter_table(ctx: &Context, filter: &TableFilter) -> bool {
    let n = ctx.table.n_rows();
    (filter.min_rows..=filter.max_rows).contains(&n) && ctx.reachable_images().len() >= filter.min_images
}

/// Row-wise linearization: `Row i: header is cell; ...` with lowercased
/// headers, rows joined by ". " and a terminal period.
pub fn linearize_table(table: &Table) -> String {
    let headers: Vec<String> = table.columns.iter().map(|c| c.header.to_lowercase()).collect();
    let rows: Vec<String> = table
        .rows
        .iter()
        .enumerate()
        .map(|(i, row)| {
            let fields: Vec<String> = headers
                .iter()
                .zip(row)
                .map(|(h, cell)| format!("{h} is {}", cell.text))
                .collect();
            format!("Row {}: {}", i + 1, fields.join("; "))
        })
        .collect();
    if rows.is_empty() {
        String::new()
    } else {
        format!("{}.", rows.join(". "))
    }
}
