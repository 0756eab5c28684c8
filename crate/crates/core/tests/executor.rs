mod common;

use mmhop_core::atomic::{AnswerKind, AnswerList, Anchors, AtomicQuestion, CompareOp, Modality};
use mmhop_core::composer::{Combine, ColumnRef, Program, Shape, TemplateRegistry, TemplateSpec};
use mmhop_core::context::parse_context;
use mmhop_core::dataset::Example;
use mmhop_core::executor::{
    table_answer, Aggregation, AnswererSet, Answers, ExecError, Executor, FixedTypePredictor, GoldTypePredictor,
    HopRequest, ModalityAnswerer, Strategy, TableQuery,
};

fn examples() -> Vec<Example> {
    common::build(&common::corpus(), &common::config(1))
}

fn find<'a>(ex: &'a [Example], qtype: &str, answers: &[&str]) -> &'a Example {
    ex.iter()
        .find(|e| e.question_type == qtype && common::answer_key(&e.answers.values) == common::answer_key(&answers.iter().map(|s| s.to_string()).collect::<Vec<_>>()))
        .unwrap_or_else(|| panic!("no {qtype} example answering {answers:?}"))
}

struct Fixed(Vec<String>);

impl ModalityAnswerer for Fixed {
    fn answer(&self, _req: &HopRequest<'_>) -> Result<Answers, ExecError> {
        Ok(Answers::certain(self.0.clone()))
    }
}

#[test]
fn compose_bridges_through_the_image_hop() {
    let ex = examples();
    let corpus = common::corpus();
    let e = find(&ex, "Compose(TableQ,ImageListQ)", &["Kathy Vaughn"]);
    assert_eq!(e.intermediate_answers.as_ref().unwrap().values, ["Lassie"]);
    let answerers = AnswererSet::oracle(&corpus.registry);
    let exec = Executor {
        registry: &corpus.registry,
        answerers: &answerers,
        predictor: &GoldTypePredictor,
    };
    assert_eq!(exec.implicit_decomp(e, e.question()).unwrap(), ["Kathy Vaughn"]);
    // A single call to the table answerer cannot see the dog on the poster.
    assert!(exec.auto_route(e, e.question()).unwrap().is_empty());

    let wrong = AnswererSet::oracle(&corpus.registry).with(Modality::Image, Fixed(vec!["The Brady Bunch".into()]));
    let exec = Executor {
        answerers: &wrong,
        ..exec
    };
    assert!(exec.implicit_decomp(e, e.question()).unwrap().is_empty());
}

#[test]
fn intersect_keeps_the_common_album() {
    let ex = examples();
    let corpus = common::corpus();
    let e = ex
        .iter()
        .find(|e| {
            e.question_type.starts_with("Intersect(ImageListQ")
                && e.intermediate_answers.as_ref().is_some_and(|i| common::answer_key(&i.values) == ["back to love", "ty o"])
                && e.answers.values == ["Back to Love"]
        })
        .expect("sunglasses intersect example");
    let answerers = AnswererSet::oracle(&corpus.registry);
    let exec = Executor {
        registry: &corpus.registry,
        answerers: &answerers,
        predictor: &GoldTypePredictor,
    };
    assert_eq!(exec.implicit_decomp(e, e.question()).unwrap(), ["Back to Love"]);
}

fn image_atomic(id: &str, entity: &str) -> AtomicQuestion {
    AtomicQuestion {
        id: id.into(),
        modality: Modality::Image,
        pl_text: "which game has a hammer and sickle on its cover?".into(),
        answers: AnswerList::entities(vec![entity.to_string()]),
        answer_kind: AnswerKind::Entity,
        anchors: Anchors::default(),
        mentions: Vec::new(),
        predicate: None,
    }
}

#[test]
fn compare_picks_the_earlier_game() {
    let ex = examples();
    let base = ex.iter().find(|e| e.context.context_id == "wes-johnson").expect("wes johnson example");
    let fallout = ex
        .iter()
        .filter(|e| e.context.context_id == "wes-johnson")
        .flat_map(|e| &e.atomics)
        .find(|a| a.modality == Modality::Table && a.answers.single_entity() == Some("Fallout 4"))
        .expect("a table question answering Fallout 4")
        .clone();
    let label = "Compare(ImageQ,TableQ)";
    let registry = TemplateRegistry::new(vec![TemplateSpec {
        label: label.into(),
        shape: Shape::compare(Shape::leaf(Modality::Image), Shape::leaf(Modality::Table)),
        final_modality: Modality::Table,
        hop_plan: vec![Modality::Image, Modality::Table],
        combine: Combine::Compare,
    }])
    .unwrap();

    let mut e = base.clone();
    e.question_type = label.into();
    e.program = Program::compare(
        label,
        Program::atomic("ImageQ", "hs"),
        Program::atomic("TableQ", fallout.id.clone()),
        ColumnRef {
            position: 0,
            header: "Year".into(),
        },
        CompareOp::Min,
    );
    e.atomics = vec![image_atomic("hs", "Hammer & Sickle"), fallout];
    let run = e.execute().unwrap();
    assert_eq!(run.answers.values, ["Hammer & Sickle"]);
    assert_eq!(run.intermediate.as_ref().unwrap().values, ["Hammer & Sickle"]);
    e.answers = run.answers;
    e.intermediate_answers = run.intermediate;

    let answerers = AnswererSet::oracle(&registry);
    let exec = Executor {
        registry: &registry,
        answerers: &answerers,
        predictor: &GoldTypePredictor,
    };
    assert_eq!(exec.implicit_decomp(&e, &e.pl_question).unwrap(), ["Hammer & Sickle"]);

    // The table side still resolves the comparison from the rows it sees.
    let wrong = AnswererSet::oracle(&registry).with(Modality::Image, Fixed(vec!["Dishonored 2".into()]));
    let exec = Executor {
        answerers: &wrong,
        ..exec
    };
    assert_eq!(exec.implicit_decomp(&e, &e.pl_question).unwrap(), ["Dishonored 2"]);
}

#[test]
fn misprediction_and_unknown_types() {
    let ex = examples();
    let corpus = common::corpus();
    let e = find(&ex, "Compose(TableQ,ImageListQ)", &["Kathy Vaughn"]);
    let answerers = AnswererSet::oracle(&corpus.registry);
    let wrong = FixedTypePredictor("TextQ".into());
    let exec = Executor {
        registry: &corpus.registry,
        answerers: &answerers,
        predictor: &wrong,
    };
    assert!(exec.implicit_decomp(e, e.question()).unwrap().is_empty());

    let bogus = FixedTypePredictor("Nonsense(Q)".into());
    let exec = Executor {
        predictor: &bogus,
        ..exec
    };
    assert_eq!(exec.implicit_decomp(e, e.question()), Err(ExecError::UnknownType("Nonsense(Q)".into())));

    let none = AnswererSet::new();
    let exec = Executor {
        answerers: &none,
        predictor: &GoldTypePredictor,
        ..exec
    };
    assert!(matches!(exec.auto_route(e, e.question()), Err(ExecError::Unregistered(_))));
}

#[test]
fn strategy_names() {
    assert_eq!(Strategy::parse("AutoRouting").unwrap(), Strategy::AutoRouting);
    assert_eq!(Strategy::parse("implicitdecomp").unwrap(), Strategy::ImplicitDecomp);
    for reserved in ["question-only", "context-only"] {
        assert!(matches!(Strategy::parse(reserved), Err(ExecError::ReservedStrategy(_))));
    }
    assert!(matches!(Strategy::parse("beam"), Err(ExecError::UnknownStrategy(_))));
}

#[test]
fn table_aggregations() {
    let ctx = parse_context(
        r#"{"table": {"page_title": "P", "table_title": "T",
            "columns": ["Name", "Score"],
            "rows": [[{"text": "a"}, {"text": "2"}], [{"text": "b"}, {"text": "4"}], [{"text": "c"}, {"text": "x"}]]},
            "paragraphs": [], "images": [], "entities": []}"#,
    )
    .unwrap();
    let q = |aggregation, condition: Option<&str>| TableQuery {
        target: 1,
        condition: condition.map(|v| (0, v.to_string())),
        extremum: None,
        aggregation,
    };
    assert_eq!(table_answer(&ctx.table, &q(Aggregation::Count, None)).unwrap(), ["3"]);
    assert!(table_answer(&ctx.table, &q(Aggregation::Mean, None)).is_err());
    let two = TableQuery {
        target: 1,
        condition: None,
        extremum: None,
        aggregation: Aggregation::Mean,
    };
    let mut t = ctx.table.clone();
    t.rows.pop();
    assert_eq!(table_answer(&t, &two).unwrap(), ["3"]);
    assert_eq!(table_answer(&t, &TableQuery { aggregation: Aggregation::Sum, ..two.clone() }).unwrap(), ["6"]);
    assert_eq!(table_answer(&ctx.table, &q(Aggregation::None, Some("b"))).unwrap(), ["4"]);
    assert_eq!(table_answer(&ctx.table, &q(Aggregation::Yes, Some("b"))).unwrap(), ["yes"]);
}
