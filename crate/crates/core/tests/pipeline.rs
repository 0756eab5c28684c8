mod common;

use std::collections::{BTreeMap, BTreeSet};

use mmhop_core::composer::open_domain_prefix;
use mmhop_core::dataset::{
    config_hash, manifest, read_dataset, read_split_dir, split_dataset, write_dataset, write_split_dir, Split,
    SplitRatios,
};
use mmhop_core::pipeline::{generate, Corpus};

#[test]
fn every_template_is_instantiated_and_valid() {
    let corpus = common::corpus();
    let (ex, notes) = generate(&corpus, &common::config(1));
    assert!(notes.iter().all(|n| !n.contains("error")), "{notes:?}");
    let seen: BTreeSet<&str> = ex.iter().map(|e| e.question_type.as_str()).collect();
    for label in corpus.registry.labels() {
        assert!(seen.contains(label), "no {label} example");
    }
    let qids: BTreeSet<&str> = ex.iter().map(|e| e.qid.as_str()).collect();
    assert_eq!(qids.len(), ex.len());
    for e in &ex {
        e.validate().unwrap_or_else(|m| panic!("{}: {m}", e.qid));
        let run = e.execute().unwrap();
        assert_eq!(run.answers, e.answers, "{}", e.qid);
        assert_eq!(run.intermediate, e.intermediate_answers, "{}", e.qid);
    }
}

#[test]
fn prefix_appears_once() {
    let ex = common::build(&common::corpus(), &common::config(2));
    for e in &ex {
        let prefix = open_domain_prefix(&e.context.table);
        assert!(e.pl_question.starts_with(&prefix), "{}", e.pl_question);
        assert_eq!(e.pl_question.matches(&prefix).count(), 1, "{}", e.pl_question);
        assert_eq!(e.pl_question.matches("In the ").count(), 1, "{}", e.pl_question);
    }
}

#[test]
fn splits_are_context_disjoint() {
    let ex = common::build(&common::corpus(), &common::config(1));
    let mut by_ctx: BTreeMap<&str, BTreeSet<Split>> = BTreeMap::new();
    for e in &ex {
        by_ctx.entry(&e.context.context_id).or_default().insert(e.split.expect("split assigned"));
    }
    assert!(by_ctx.values().all(|s| s.len() == 1), "{by_ctx:?}");
    let used: BTreeSet<Split> = by_ctx.values().flatten().copied().collect();
    assert_eq!(used.len(), 3);
}

#[test]
fn corpus_manifest_pins_contexts() {
    let dir = tempfile::tempdir().unwrap();
    let src = common::fixtures().join("corpus");
    for f in std::fs::read_dir(&src).unwrap() {
        let f = f.unwrap();
        std::fs::copy(f.path(), dir.path().join(f.file_name())).unwrap();
    }
    std::fs::write(
        dir.path().join("corpus.json"),
        r#"{"contexts": [
            {"file": "ben-piazza.ctx.json"},
            {"file": "kym-karath.ctx.json", "split": "dev"},
            {"file": "wes-johnson.ctx.json"},
            {"file": "albums-2011.ctx.json"},
            {"file": "wct-doubles.ctx.json", "split": "train"}
        ]}"#,
    )
    .unwrap();
    let corpus = Corpus::load(dir.path()).unwrap();
    assert_eq!(corpus.pins.len(), 2);
    let ex = common::build(&corpus, &common::config(1));
    for e in &ex {
        match e.context.context_id.as_str() {
            "kym-karath" => assert_eq!(e.split, Some(Split::Dev)),
            "wct-doubles" => assert_eq!(e.split, Some(Split::Train)),
            _ => {}
        }
    }

    std::fs::write(dir.path().join("corpus.json"), r#"{"contexts": [], "extra": 1}"#).unwrap();
    assert!(Corpus::load(dir.path()).is_err());
}

#[test]
fn dataset_roundtrip_and_manifest() {
    let ex = common::build(&common::corpus(), &common::config(1));
    let text = write_dataset(&ex);
    assert_eq!(read_dataset(&text).unwrap(), ex);
    assert_eq!(text.lines().count(), ex.len());
    assert!(read_dataset("").unwrap().is_empty());
    assert!(read_dataset("{}\n").is_err());
    let dup = format!("{}\n{}\n", text.lines().next().unwrap(), text.lines().next().unwrap());
    assert!(read_dataset(&dup).is_err());

    let dir = tempfile::tempdir().unwrap();
    let cfg = common::config(1);
    let hash = config_hash(&cfg);
    assert_eq!(hash.len(), 64);
    let m = manifest(&ex, 1, hash);
    assert_eq!(m.splits.values().map(|s| s.examples).sum::<usize>(), ex.len());
    write_split_dir(dir.path(), &ex, &m).unwrap();
    let (m2, back) = read_split_dir(dir.path()).unwrap();
    assert_eq!(m2, m);
    let key = |v: &[mmhop_core::dataset::Example]| v.iter().map(|e| e.qid.clone()).collect::<BTreeSet<_>>();
    assert_eq!(key(&back), key(&ex));
}

#[test]
fn split_reports_and_errors() {
    let corpus = common::corpus();
    let (mut ex, _) = generate(&corpus, &common::config(1));
    let report = split_dataset(&mut ex, SplitRatios::reference(), 1).unwrap();
    assert_eq!(report.examples.iter().sum::<usize>(), ex.len());
    assert!(report.groups.iter().all(|&g| g >= 1));
    let mut few: Vec<_> = ex.iter().filter(|e| e.context.context_id == "ben-piazza").cloned().collect();
    assert!(split_dataset(&mut few, SplitRatios::reference(), 1).is_err());
    assert!(SplitRatios::parse("0.5,0.5").is_err());
    assert!(SplitRatios::parse("0.8,0.1,0.1").is_ok());
    assert_eq!(SplitRatios::parse("reference").unwrap(), SplitRatios::reference());
}
