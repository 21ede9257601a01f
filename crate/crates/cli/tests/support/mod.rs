//! A small on-disk dataset with a keyed mock script and fake execution
//! rules, plus a helper that runs the built binary.
//!
//! Twelve tasks. Drafts of t00..t04 hit the stem keyword error and are
//! fixed on the first repair; t05 and t06 hit the surface shape error
//! twice and are fixed on the second; t07 never recovers; the rest draw
//! first time.

#![allow(dead_code)]

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::{json, Map, Value};
use tempfile::TempDir;

use chartforge::sandbox::synthetic_png;

pub const TASKS: usize = 12;

pub const STEM_TB: &str = "Traceback (most recent call last):\n  File \"script.py\", line 9, in <module>\n    ax.stem(x, y, use_line_collection=True)\nTypeError: Axes.stem() got an unexpected keyword argument 'use_line_collection'";
pub const SHAPE_TB: &str = "Traceback (most recent call last):\n  File \"script.py\", line 12, in <module>\n    ax.plot_surface(X, Y, Z)\nTypeError: Argument Z must be 2-dimensional.";
pub const ZERO_TB: &str = "Traceback (most recent call last):\n  File \"script.py\", line 6, in <module>\n    r = 1 / 0\nZeroDivisionError: division by zero";

const CATEGORIES: [&str; 5] = ["Pairwise", "Statistical distribution", "Gridded", "Irregularly gridded", "3D and volumetric"];

pub struct Fixture {
    pub dir: TempDir,
    pub dataset: PathBuf,
    pub mock: PathBuf,
    pub fake: PathBuf,
    pub judge_mock: PathBuf,
}

fn id(i: usize) -> String {
    format!("t{i:02}")
}

fn code(id: &str, marker: &str) -> String {
    format!("```python\nimport matplotlib.pyplot as plt\nfig, ax = plt.subplots()\nax.set_title('{id}')  # {marker}\nplt.savefig('chart.png')\n```")
}

fn replies(i: usize) -> Vec<String> {
    let t = id(i);
    let fix = |n: usize| format!("Change line {n} only; keep the rest of {t} unchanged.");
    match i {
        0..=4 => vec![code(&t, "STEM_BUG"), fix(9), code(&t, "fixed")],
        5 | 6 => vec![code(&t, "SHAPE_BUG"), fix(12), code(&t, "SHAPE_BUG again"), fix(12), code(&t, "fixed")],
        7 => {
            let mut v = vec![code(&t, "ZERO_BUG")];
            for k in 1..=3 {
                v.push(fix(6));
                v.push(code(&t, &format!("ZERO_BUG {k}")));
            }
            v
        }
        _ => vec![code(&t, "draft")],
    }
}

impl Fixture {
    pub fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        let root = dir.path();
        fs::create_dir_all(root.join("refs")).unwrap();

        let mut lines = String::new();
        let mut mock = Map::new();
        let mut judge = Map::new();
        for i in 0..TASKS {
            let t = id(i);
            fs::write(root.join(format!("refs/{t}.png")), synthetic_png(t.as_bytes())).unwrap();
            let record = json!({
                "id": t,
                "description": format!("A labelled chart for task {t}."),
                "category": CATEGORIES[i % CATEGORIES.len()],
                "reference_code": format!("import matplotlib.pyplot as plt\nfig, ax = plt.subplots()\nax.set_title('{t}')\nplt.savefig('chart.png')\n"),
                "reference_image_path": format!("refs/{t}.png"),
            });
            lines.push_str(&record.to_string());
            lines.push('\n');
            mock.insert(t.clone(), json!(replies(i)));
            let verdict = if i % 3 == 0 { "Appropriate" } else { "Not appropriate" };
            judge.insert(
                t,
                json!([format!("{{\"score\": {}}}", 40 + i), format!("{{\"Judgment\": \"{verdict}\"}}")]),
            );
        }
        let rules = json!([
            {"contains": "STEM_BUG", "status": "raised", "traceback": STEM_TB},
            {"contains": "SHAPE_BUG", "status": "raised", "traceback": SHAPE_TB},
            {"contains": "ZERO_BUG", "status": "raised", "traceback": ZERO_TB},
        ]);

        let write = |name: &str, text: String| {
            let p = root.join(name);
            fs::write(&p, text).unwrap();
            p
        };
        Fixture {
            dataset: write("tasks.jsonl", lines),
            mock: write("mock.json", Value::Object(mock).to_string()),
            fake: write("fake.json", rules.to_string()),
            judge_mock: write("judge.json", Value::Object(judge).to_string()),
            dir,
        }
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    /// Arguments for a hermetic run into `out`.
    pub fn run_args(&self, out: &Path, workers: usize) -> Vec<String> {
        [
            "run",
            self.dataset.to_str().unwrap(),
            "--provider",
            "mock",
            "--mock-script",
            self.mock.to_str().unwrap(),
            "--backend",
            "fake",
            "--fake-script",
            self.fake.to_str().unwrap(),
            "--workers",
            &workers.to_string(),
            "--out",
            out.to_str().unwrap(),
        ]
        .iter()
        .map(|s| s.to_string())
        .collect()
    }
}

/// Runs the built binary with the API key removed from its environment.
pub fn chartforge<S: AsRef<str>>(args: &[S]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_chartforge"))
        .args(args.iter().map(|s| s.as_ref()))
        .env_remove("CHARTFORGE_API_KEY")
        .output()
        .unwrap()
}

pub fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

pub fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

/// Every file under `dir`, relative path to bytes.
pub fn tree(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in fs::read_dir(&d).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push((p.strip_prefix(dir).unwrap().to_path_buf(), fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}
