mod common;

use mmhop_core::context::{filter_table, linearize_table, parse_context, ContextError, TableFilter};

fn doc(rows: &str) -> String {
    format!(
        r#"{{"table": {{"page_title": "Ben Piazza", "table_title": "Filmography", "columns": ["Year", "Title"], "rows": {rows}}},
            "paragraphs": [], "images": [], "entities": []}}"#
    )
}

#[test]
fn linearizes_two_by_two_table() {
    let ctx = parse_context(&doc(r#"[["1957", "a dangerous age"], ["1959", "The Hanging Tree"]]"#)).unwrap();
    assert_eq!(
        linearize_table(&ctx.table),
        "Row 1: year is 1957; title is a dangerous age. Row 2: year is 1959; title is The Hanging Tree."
    );
}

#[test]
fn linearizes_worked_example_row() {
    let json = r#"{"table": {"page_title": "Ben Piazza", "table_title": "Filmography",
        "columns": ["Year", "Title", "Role"], "rows": [["1957", "a dangerous age", "David"], ["1959", "The Hanging Tree", "Rune"]]},
        "paragraphs": [], "images": [], "entities": []}"#;
    let ctx = parse_context(json).unwrap();
    assert!(linearize_table(&ctx.table).starts_with("Row 1: year is 1957; title is a dangerous age; role is David."));
}

#[test]
fn ragged_rows_are_rejected() {
    let err = parse_context(&doc(r#"[["1957", "x"], ["1959"]]"#)).unwrap_err();
    assert!(matches!(err, ContextError::RaggedRow { row: 1, expected: 2, found: 1 }));
}

#[test]
fn unknown_fields_are_schema_errors() {
    let json = doc("[]").replace(r#""entities": []"#, r#""entities": [], "extra": 1"#);
    assert!(matches!(parse_context(&json), Err(ContextError::Schema(_))));
}

#[test]
fn context_id_defaults_to_slug() {
    let ctx = parse_context(&doc(r#"[["1957", "x"]]"#)).unwrap();
    assert_eq!(ctx.id, "ben-piazza-filmography");
    assert_eq!(ctx.open_domain_prefix(), "In the Filmography of Ben Piazza, ");
}

#[test]
fn column_types_are_inferred() {
    let c = common::corpus();
    let albums = c.context("albums-2011").unwrap();
    assert_eq!(albums.table.columns[0].semantic_type.to_string(), "date");
    let films = c.context("ben-piazza").unwrap();
    assert_eq!(films.table.columns[0].semantic_type.to_string(), "numeric");
    assert_eq!(films.table.columns[1].semantic_type.to_string(), "text");
}

#[test]
fn fixture_tables_pass_the_default_filter() {
    let c = common::corpus();
    assert_eq!(c.contexts.len(), 5);
    for ctx in &c.contexts {
        assert!(filter_table(ctx, &TableFilter::default()), "{}", ctx.id);
    }
    let strict = TableFilter {
        min_rows: 11,
        ..TableFilter::default()
    };
    assert!(!filter_table(c.context("kym-karath").unwrap(), &strict));
    let few_images = TableFilter {
        min_images: 50,
        ..TableFilter::default()
    };
    assert!(c.contexts.iter().all(|ctx| !filter_table(ctx, &few_images)));
}
