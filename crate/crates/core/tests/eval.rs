mod common;

use mmhop_core::dataset::Example;
use mmhop_core::eval::{
    detect_redundant_evidence, detect_weak_distractors, evaluate, list_em_f1, normalize_answer, pair_f1,
    read_predictions, write_predictions, AuditKind, EvalError, Prediction,
};

fn s(v: &[&str]) -> Vec<String> {
    v.iter().map(|x| x.to_string()).collect()
}

fn examples() -> Vec<Example> {
    common::build(&common::corpus(), &common::config(1))
}

#[test]
fn answer_normalization() {
    assert_eq!(normalize_answer("The Godfather"), "godfather");
    assert_eq!(normalize_answer("yes"), "yes");
    assert_eq!(normalize_answer("Tell Me that you love me, Junie Moon"), "tell me that you love me junie moon");
}

#[test]
fn pair_and_list_scores() {
    assert!((pair_f1("x y z", "x y") - 0.8).abs() < 1e-12);
    assert_eq!(pair_f1("Fallout 4", "fallout 4"), 1.0);
    assert_eq!(pair_f1("Fallout", "Skyrim"), 0.0);
    assert_eq!(pair_f1("", ""), 1.0);
    assert_eq!(pair_f1("the", "x"), 0.0);
    assert_eq!(list_em_f1(&s(&["a", "b"]), &s(&["b", "a"])), (1.0, 1.0));
    assert_eq!(list_em_f1(&s(&["a", "b"]), &s(&["a"])), (0.0, 0.5));
    assert_eq!(list_em_f1(&s(&["x"]), &[]), (0.0, 0.0));
}

#[test]
fn oracle_and_empty_predictions() {
    let ex = examples();
    let oracle: Vec<Prediction> = ex
        .iter()
        .map(|e| Prediction {
            qid: e.qid.clone(),
            answers: e.answers.values.clone(),
        })
        .collect();
    let text = write_predictions(&oracle);
    assert_eq!(read_predictions(&text).unwrap(), oracle);
    let r = evaluate(&ex, &oracle).unwrap();
    for b in [&r.single_modality, &r.multi_modality, &r.all] {
        assert_eq!((b.em, b.f1, b.missing), (1.0, 1.0, 0));
    }
    assert_eq!(r.all.count, ex.len());
    assert_eq!(r.single_modality.count + r.multi_modality.count, ex.len());
    assert_eq!(r.multi_modality.count, ex.iter().filter(|e| e.multimodal).count());

    let r = evaluate(&ex, &read_predictions("").unwrap()).unwrap();
    for b in [&r.single_modality, &r.multi_modality, &r.all] {
        assert_eq!((b.em, b.f1), (0.0, 0.0));
        assert_eq!(b.missing, b.count);
    }
    assert_eq!(r.all.count, ex.len());
    assert!(r.render().contains("Multi-modality"));
}

#[test]
fn buckets_average_their_own_examples() {
    let ex = examples();
    let single = ex.iter().find(|e| !e.multimodal).unwrap();
    let multi = ex.iter().find(|e| e.multimodal).unwrap();
    let subset = vec![single.clone(), multi.clone()];
    let preds = vec![Prediction {
        qid: multi.qid.clone(),
        answers: multi.answers.values.clone(),
    }];
    let r = evaluate(&subset, &preds).unwrap();
    assert_eq!((r.multi_modality.em, r.multi_modality.count), (1.0, 1));
    assert_eq!((r.single_modality.em, r.single_modality.missing), (0.0, 1));
    assert_eq!(r.all.em, 0.5);
}

#[test]
fn prediction_qids_are_checked() {
    let ex = examples();
    let p = |qid: &str| Prediction {
        qid: qid.into(),
        answers: vec!["x".into()],
    };
    assert_eq!(evaluate(&ex, &[p("nope")]), Err(EvalError::UnknownQid("nope".into())));
    let q = &ex[0].qid;
    assert_eq!(evaluate(&ex, &[p(q), p(q)]), Err(EvalError::DuplicateQid(q.clone())));
    assert!(matches!(read_predictions("{\"qid\": 1}\n"), Err(EvalError::Malformed { line: 1, .. })));
}

#[test]
fn weak_distractors() {
    let ex = examples();
    let year_q = ex
        .iter()
        .find(|e| {
            e.context.context_id == "ben-piazza" && e.answers.values.len() == 1 && e.answers.values[0].len() == 4 && e.answers.values[0].parse::<u32>().is_ok()
        })
        .expect("a year answer");
    assert_eq!(detect_weak_distractors(year_q), None);

    let year = year_q.answers.values[0].clone();
    let mut lone = year_q.clone();
    for row in &mut lone.context.table.rows {
        row[0].text = year.clone();
    }
    for p in &mut lone.context.paragraphs {
        p.text.retain(|c| !c.is_ascii_digit());
    }
    let flag = detect_weak_distractors(&lone).expect("flagged");
    assert_eq!(flag.kind, AuditKind::WeakDistractors);
    assert_eq!(flag.qid, lone.qid);

    let word = ex.iter().find(|e| e.answers.values.iter().all(|a| !a.chars().any(|c| c.is_ascii_digit()))).unwrap();
    assert_eq!(detect_weak_distractors(word), None);
}

#[test]
fn redundant_evidence() {
    let ex = examples();
    let lassie = ex
        .iter()
        .find(|e| e.question_type == "Compose(TableQ,ImageListQ)" && e.answers.values == ["Kathy Vaughn"])
        .unwrap();
    assert_eq!(detect_redundant_evidence(lassie), None);

    let mut one_show = lassie.clone();
    one_show
        .context
        .table
        .rows
        .retain(|r| r.iter().any(|c| c.links.iter().any(|l| l == "Lassie")));
    let flag = detect_redundant_evidence(&one_show).expect("flagged");
    assert_eq!(flag.kind, AuditKind::RedundantEvidence);

    let intersect = ex
        .iter()
        .find(|e| e.question_type.starts_with("Intersect(ImageListQ") && e.answers.values == ["Back to Love"])
        .unwrap();
    assert_eq!(detect_redundant_evidence(intersect), None);

    let atomic = ex.iter().find(|e| e.program.is_atomic()).unwrap();
    assert_eq!(detect_redundant_evidence(atomic), None);
}
