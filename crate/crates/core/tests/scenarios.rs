//! The scenario files shipped under `scenarios/`.

use std::path::PathBuf;

use satground::sim::metrics::{records_csv, trace_text};
use satground::sim::scenario::WindowSpec;
use satground::sim::{run, Scenario};

fn shipped(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../scenarios").join(name).join("scenario.txt")
}

#[test]
fn canonical_file_matches_built_in_canonical() {
    let loaded = run(&Scenario::load(&shipped("canonical")).unwrap()).unwrap();
    let built = run(&Scenario::canonical()).unwrap();
    assert_eq!(loaded.summary.to_text(), built.summary.to_text());
    assert_eq!(records_csv(&loaded.records), records_csv(&built.records));
    assert_eq!(trace_text(&loaded.trace), trace_text(&built.trace));
}

#[test]
fn two_pass_answers_everything_from_a_file_corpus() {
    let s = Scenario::load(&shipped("two_pass")).unwrap();
    assert_eq!(s.corpus.len(), 12);
    assert!(matches!(&s.windows, WindowSpec::Explicit(w) if w.len() == 3));
    let out = run(&s).unwrap();
    assert!(out.unanswered.is_empty());
    assert_eq!(out.summary.answered, out.captures.len());
    assert!(out.summary.onboard_fraction > 0.0 && out.summary.onboard_fraction < 1.0);
}
