mod common;

use std::collections::BTreeMap;

use chartforge::corpus::CategoryLabel;
use chartforge::metrics::{error_ratio, iteration_fix_counts, RatioCell};
use chartforge::report::{error_table, errors_topk_table, iterations_table};
use chartforge::sandbox::{classify_error, error_histogram, ErrorKind};

use common::*;

fn top3(records: &[chartforge::PipelineRecord]) -> Vec<(ErrorKind, usize)> {
    error_histogram(records, 0)
        .into_iter()
        .take(3)
        .map(|e| (e.kind, e.count))
        .collect()
}

#[test]
fn six_patterns_have_six_kinds() {
    let kinds: Vec<ErrorKind> = [STEM_TB, SHAPE_TB, NP_TB, MPLFINANCE_TB, SQUARIFY_TB, LENGTH_TB]
        .iter()
        .map(|tb| classify_error(tb).unwrap().kind)
        .collect();
    assert_eq!(
        kinds,
        vec![
            ErrorKind::BadKeywordArgument {
                callee: "stem".into(),
                kwarg: "use_line_collection".into()
            },
            ErrorKind::ShapeMismatch,
            ErrorKind::NameUndefined { name: "np".into() },
            ErrorKind::MissingModule { name: "mplfinance".into() },
            ErrorKind::MissingModule { name: "squarify".into() },
            ErrorKind::LengthMismatch,
        ]
    );
}

#[test]
fn text2chart31_draft_histogram() {
    let h = top3(&draft_errors_text2chart31());
    assert_eq!(
        h.iter().map(|(_, c)| *c).collect::<Vec<_>>(),
        vec![49, 19, 17]
    );
    assert_eq!(h[1].0, ErrorKind::ShapeMismatch);
}

#[test]
fn chartx_draft_histogram() {
    let h = top3(&draft_errors_chartx());
    assert_eq!(h.iter().map(|(_, c)| *c).collect::<Vec<_>>(), vec![39, 25, 18]);
    assert_eq!(h[0].0, ErrorKind::MissingModule { name: "mplfinance".into() });
    assert_eq!(h[2].0, ErrorKind::LengthMismatch);
}

#[test]
fn histogram_of_clean_run_is_empty() {
    let records = draft_error_records("ok", &[], 10);
    assert!(error_histogram(&records, 0).is_empty());
}

#[test]
fn errors_topk_first_row() {
    let t = errors_topk_table(&draft_errors_text2chart31(), 0, 3);
    assert_eq!(t.rows.len(), 3);
    assert_eq!(t.cell(0, "Count"), Some("49"));
    assert_eq!(t.cell(0, "Error"), Some("BadKeywordArgument(stem, use_line_collection)"));
}

#[test]
fn few_shot_agentic_error_ratios() {
    let (tasks, records) = ratio_fixture(&FS_AGENTIC_T2C31, 3);
    assert_eq!(tasks.len(), 1423);
    let t = error_ratio(&records, &tasks).unwrap();
    assert_eq!(t.overall, RatioCell::new(64, 1423));
    assert_eq!(t.overall.render(), "4.50");

    let table = error_table("FS GPT 4o-mini Agentic", &records, &tasks).unwrap();
    for (column, expected) in [
        ("Pairwise", "1.48"),
        ("Statistical distribution", "3.76"),
        ("(Irregularly) gridded", "5.59"),
        ("3D and Volumetric", "13.21"),
        ("Total", "4.50"),
    ] {
        assert_eq!(table.cell(0, column), Some(expected), "{column}");
    }
}

#[test]
fn zero_shot_agentic_total() {
    let shape = [
        (CategoryLabel::Pairwise, 472, 12),
        (CategoryLabel::StatisticalDistribution, 452, 23),
        (CategoryLabel::Gridded, 192, 20),
        (CategoryLabel::IrregularlyGridded, 148, 12),
        (CategoryLabel::ThreeDVolumetric, 159, 29),
    ];
    let (tasks, records) = ratio_fixture(&shape, 3);
    let table = error_table("ZS", &records, &tasks).unwrap();
    assert_eq!(table.cell(0, "Total"), Some("6.75"));
    assert_eq!(table.cell(0, "Pairwise"), Some("2.54"));
}

#[test]
fn single_pairwise_failure() {
    let (tasks, records) = ratio_fixture(&[(CategoryLabel::Pairwise, 472, 1)], 3);
    let table = error_table("x", &records, &tasks).unwrap();
    assert_eq!(table.cell(0, "Pairwise"), Some("0.21"));
}

#[test]
fn all_success_renders_zero_everywhere() {
    let shape: Vec<_> = FS_AGENTIC_T2C31.iter().map(|(c, n, _)| (*c, *n, 0)).collect();
    let (tasks, records) = ratio_fixture(&shape, 3);
    let table = error_table("x", &records, &tasks).unwrap();
    assert!(table.rows[0][1..].iter().all(|c| c == "0.00"));
}

#[test]
fn iteration_counts_zero_shot_and_few_shot() {
    let zs = iteration_fixture(&[(1, 177), (2, 24), (3, 18)], 1108, 96, 3);
    assert_eq!(zs.len(), 1423);
    assert_eq!(iteration_fix_counts(&zs), BTreeMap::from([(1, 177), (2, 24), (3, 18)]));
    let t = iterations_table("ZS", &zs, 3);
    assert_eq!(t.rows[0][1..], ["177", "24", "18"]);

    let fs = iteration_fixture(&[(1, 156), (2, 21), (3, 18)], 1164, 64, 3);
    assert_eq!(iteration_fix_counts(&fs), BTreeMap::from([(1, 156), (2, 21), (3, 18)]));
}

#[test]
fn iteration_counts_ignore_draft_successes() {
    let r = iteration_fixture(&[], 12, 3, 3);
    assert!(iteration_fix_counts(&r).is_empty());
}
