//! Record and task builders shared by the integration tests.
//!
//! The fixtures are built in code so every count is visible at the call
//! site.

#![allow(dead_code)]

pub mod ssim_oracle;

use chartforge::corpus::{CategoryLabel, ChartTask, TaskSet};
use chartforge::pipeline::{Attempt, FinalStatus, PipelineRecord, ScriptOrigin, ScriptSource};
use chartforge::sandbox::{synthetic_png, ExecutionOutcome};

pub const STEM_TB: &str = "Traceback (most recent call last):\n  File \"script.py\", line 9, in <module>\n    ax.stem(x, y, use_line_collection=True)\nTypeError: Axes.stem() got an unexpected keyword argument 'use_line_collection'";
pub const SHAPE_TB: &str = "Traceback (most recent call last):\n  File \"script.py\", line 12, in <module>\n    ax.plot_surface(X, Y, Z)\nTypeError: Argument Z must be 2-dimensional.";
pub const NP_TB: &str = "Traceback (most recent call last):\n  File \"script.py\", line 4, in <module>\n    x = np.linspace(0, 1, 50)\nNameError: name 'np' is not defined";
pub const MPLFINANCE_TB: &str = "Traceback (most recent call last):\n  File \"script.py\", line 3, in <module>\n    import mplfinance as mpf\nModuleNotFoundError: No module named 'mplfinance'";
pub const SQUARIFY_TB: &str = "Traceback (most recent call last):\n  File \"script.py\", line 3, in <module>\n    import squarify\nModuleNotFoundError: No module named 'squarify'";
pub const LENGTH_TB: &str = "Traceback (most recent call last):\n  File \"script.py\", line 7, in <module>\n    df = pd.DataFrame(data)\nValueError: All arrays must be of the same length";
pub const FILE_TB: &str = "Traceback (most recent call last):\n  File \"script.py\", line 5, in <module>\n    df = pd.read_csv('sales.csv')\nFileNotFoundError: [Errno 2] No such file or directory: 'sales.csv'";
pub const ZERO_TB: &str = "Traceback (most recent call last):\n  File \"script.py\", line 6, in <module>\n    r = 1 / 0\nZeroDivisionError: division by zero";

pub fn task(id: &str, category: CategoryLabel) -> ChartTask {
    ChartTask {
        id: id.to_string(),
        description: format!("Draw chart {id}."),
        category,
        raw_category: None,
        data_files: Vec::new(),
        reference_code: None,
        reference_image: None,
    }
}

fn origin(k: usize) -> ScriptOrigin {
    if k == 0 {
        ScriptOrigin::Draft
    } else {
        ScriptOrigin::Repair { iteration: k as u32 }
    }
}

fn script(id: &str, k: usize) -> ScriptSource {
    ScriptSource {
        code: format!("import matplotlib.pyplot as plt\n# {id} attempt {k}\nplt.savefig('out.png')\n"),
        origin: origin(k),
    }
}

/// A record whose attempts fail with `tracebacks` in order and, when
/// `then_ok` is set, end with a clean attempt.
pub fn record(id: &str, category: CategoryLabel, tracebacks: &[&str], then_ok: bool) -> PipelineRecord {
    let mut attempts: Vec<Attempt> = tracebacks
        .iter()
        .enumerate()
        .map(|(k, tb)| Attempt {
            script: script(id, k),
            outcome: ExecutionOutcome::raised(*tb, 0.0),
        })
        .collect();
    if then_ok {
        let k = attempts.len();
        attempts.push(Attempt {
            script: script(id, k),
            outcome: ExecutionOutcome::ok(synthetic_png(id.as_bytes()), 0.0),
        });
    }
    let final_status = if then_ok {
        FinalStatus::Success {
            iteration_fixed: tracebacks.len() as u32,
        }
    } else {
        FinalStatus::Failed
    };
    PipelineRecord {
        task_id: id.to_string(),
        category,
        draft: attempts.first().map(|a| a.script.clone()),
        suggestions: (1..attempts.len()).map(|k| format!("suggestion {k}")).collect(),
        attempts,
        final_status,
        error: None,
    }
}

/// Records whose drafts fail with `counts[i].1` copies of `counts[i].0`,
/// repaired on the first iteration, plus `clean` records that ran first
/// time.
pub fn draft_error_records(prefix: &str, counts: &[(&str, usize)], clean: usize) -> Vec<PipelineRecord> {
    let mut out = Vec::new();
    for (tb, n) in counts {
        for _ in 0..*n {
            let id = format!("{prefix}-{}", out.len());
            out.push(record(&id, CategoryLabel::Unknown, &[tb], true));
        }
    }
    for _ in 0..clean {
        let id = format!("{prefix}-{}", out.len());
        out.push(record(&id, CategoryLabel::Unknown, &[], true));
    }
    out
}

/// Draft errors of a Text2Chart31 run: the top three kinds plus a tail.
pub fn draft_errors_text2chart31() -> Vec<PipelineRecord> {
    draft_error_records(
        "t2c",
        &[(STEM_TB, 49), (SHAPE_TB, 19), (NP_TB, 17), (FILE_TB, 11), (ZERO_TB, 6)],
        80,
    )
}

/// Draft errors of a ChartX run: the top three kinds plus a tail.
pub fn draft_errors_chartx() -> Vec<PipelineRecord> {
    draft_error_records(
        "cx",
        &[(MPLFINANCE_TB, 39), (SQUARIFY_TB, 25), (LENGTH_TB, 18), (NP_TB, 9), (ZERO_TB, 4)],
        60,
    )
}

/// Per category: (label, tasks, failures).
pub const FS_AGENTIC_T2C31: [(CategoryLabel, usize, usize); 5] = [
    (CategoryLabel::Pairwise, 472, 7),
    (CategoryLabel::StatisticalDistribution, 452, 17),
    (CategoryLabel::Gridded, 192, 11),
    (CategoryLabel::IrregularlyGridded, 148, 8),
    (CategoryLabel::ThreeDVolumetric, 159, 21),
];

/// A task set and records with the given per-category failure counts.
/// Failed records exhaust `max_iters` repairs; others succeed on the draft.
pub fn ratio_fixture(shape: &[(CategoryLabel, usize, usize)], max_iters: usize) -> (TaskSet, Vec<PipelineRecord>) {
    let mut tasks = Vec::new();
    let mut records = Vec::new();
    for (category, total, failures) in shape {
        for i in 0..*total {
            let id = format!("{category:?}-{i:04}");
            tasks.push(task(&id, *category));
            if i < *failures {
                records.push(record(&id, *category, &vec![ZERO_TB; max_iters + 1], false));
            } else {
                records.push(record(&id, *category, &[], true));
            }
        }
    }
    (TaskSet::new("fixture", tasks), records)
}

/// Records fixed at repair iteration k for each `(k, count)`, plus
/// `draft_ok` clean drafts and `failed` exhausted records.
pub fn iteration_fixture(fixed: &[(usize, usize)], draft_ok: usize, failed: usize, max_iters: usize) -> Vec<PipelineRecord> {
    let mut out = Vec::new();
    let mut push = |tbs: Vec<&str>, ok: bool| {
        let id = format!("it-{}", out.len());
        out.push(record(&id, CategoryLabel::Pairwise, &tbs, ok));
    };
    for (k, n) in fixed {
        for _ in 0..*n {
            push(vec![ZERO_TB; *k], true);
        }
    }
    for _ in 0..draft_ok {
        push(vec![], true);
    }
    for _ in 0..failed {
        push(vec![ZERO_TB; max_iters + 1], false);
    }
    out
}
