//! Benchmark task sets.
//!
//! A split lives in one JSON-lines file, one task per line. Reference images
//! and any other sibling files are resolved relative to the directory holding
//! the JSON-lines file. Two field-name layouts are understood, see
//! [`LayoutSpec`].

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Component, Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("record {id} is missing required field `{field}`")]
    MissingField { id: String, field: String },
    #[error("malformed record on line {line}: {reason}")]
    MalformedRecord { line: usize, reason: String },
    #[error("record {id} has an unsafe data file name `{name}`")]
    UnsafeDataFile { id: String, name: String },
    #[error("duplicate task id {id} on line {line}")]
    DuplicateId { id: String, line: usize },
}

/// Chart families of the two supported benchmarks.
///
/// Text2Chart31 uses the first five labels, ChartX the next three.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum CategoryLabel {
    Pairwise,
    StatisticalDistribution,
    Gridded,
    IrregularlyGridded,
    ThreeDVolumetric,
    General,
    FineGrained,
    Specific,
    Unknown,
}

impl CategoryLabel {
    pub const ALL: [CategoryLabel; 9] = [
        CategoryLabel::Pairwise,
        CategoryLabel::StatisticalDistribution,
        CategoryLabel::Gridded,
        CategoryLabel::IrregularlyGridded,
        CategoryLabel::ThreeDVolumetric,
        CategoryLabel::General,
        CategoryLabel::FineGrained,
        CategoryLabel::Specific,
        CategoryLabel::Unknown,
    ];

    /// Display name as printed in the benchmark statistics table.
    pub fn display_name(self) -> &'static str {
        match self {
            CategoryLabel::Pairwise => "Pairwise Chart",
            CategoryLabel::StatisticalDistribution => "Statistical Distribution Chart",
            CategoryLabel::Gridded => "Gridded Chart",
            CategoryLabel::IrregularlyGridded => "Irregularly Gridded Chart",
            CategoryLabel::ThreeDVolumetric => "3D and Volumetric Chart",
            CategoryLabel::General => "General Chart",
            CategoryLabel::FineGrained => "Fine-Grained Chart",
            CategoryLabel::Specific => "Specific Chart",
            CategoryLabel::Unknown => "Unknown",
        }
    }

    pub fn is_text2chart31(self) -> bool {
        matches!(
            self,
            CategoryLabel::Pairwise
                | CategoryLabel::StatisticalDistribution
                | CategoryLabel::Gridded
                | CategoryLabel::IrregularlyGridded
                | CategoryLabel::ThreeDVolumetric
        )
    }

    pub fn is_chartx(self) -> bool {
        matches!(
            self,
            CategoryLabel::General | CategoryLabel::FineGrained | CategoryLabel::Specific
        )
    }
}

impl fmt::Display for CategoryLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.display_name())
    }
}

fn fold_label(raw: &str) -> String {
    raw.chars()
        .filter(|c| c.is_alphanumeric())
        .flat_map(char::to_lowercase)
        .collect()
}

/// Maps a free-form label onto the closed label set.
///
/// Matching ignores case and every non-alphanumeric character, and the
/// trailing word "chart" is optional. Anything unrecognised is `Unknown`.
pub fn category_of(raw_label: &str) -> CategoryLabel {
    let folded = fold_label(raw_label);
    let key = folded.strip_suffix("chart").unwrap_or(&folded);
    match key {
        "pairwise" => CategoryLabel::Pairwise,
        "statisticaldistribution" | "statistical" => CategoryLabel::StatisticalDistribution,
        "gridded" => CategoryLabel::Gridded,
        "irregularlygridded" => CategoryLabel::IrregularlyGridded,
        "3dandvolumetric" | "3dvolumetric" | "threedvolumetric" | "3d" => {
            CategoryLabel::ThreeDVolumetric
        }
        "general" => CategoryLabel::General,
        "finegrained" => CategoryLabel::FineGrained,
        "specific" => CategoryLabel::Specific,
        _ => CategoryLabel::Unknown,
    }
}

/// A CSV (or other text) file the chart script is expected to read.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DataFile {
    pub name: String,
    pub content: String,
}

/// One benchmark record.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChartTask {
    pub id: String,
    pub description: String,
    pub category: CategoryLabel,
    /// Finer-grained label from the source data (ChartX chart type), when present.
    pub raw_category: Option<String>,
    pub data_files: Vec<DataFile>,
    pub reference_code: Option<String>,
    /// PNG bytes of the ground-truth chart.
    pub reference_image: Option<Vec<u8>>,
}

/// Returns true when `name` is a relative path that stays inside its root.
pub fn is_safe_relative_path(name: &str) -> bool {
    if name.is_empty() {
        return false;
    }
    let path = Path::new(name);
    path.components()
        .all(|c| matches!(c, Component::Normal(_) | Component::CurDir))
        && path.components().any(|c| matches!(c, Component::Normal(_)))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TaskSet {
    pub name: String,
    pub tasks: Vec<ChartTask>,
    pub counts_by_category: BTreeMap<CategoryLabel, usize>,
}

impl TaskSet {
    pub fn new(name: impl Into<String>, tasks: Vec<ChartTask>) -> Self {
        let counts_by_category = count_categories(&tasks);
        Self {
            name: name.into(),
            tasks,
            counts_by_category,
        }
    }

    pub fn len(&self) -> usize {
        self.tasks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tasks.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&ChartTask> {
        self.tasks.iter().find(|t| t.id == id)
    }

    /// Id → task lookup table.
    pub fn index(&self) -> BTreeMap<&str, &ChartTask> {
        self.tasks.iter().map(|t| (t.id.as_str(), t)).collect()
    }
}

pub fn count_categories(tasks: &[ChartTask]) -> BTreeMap<CategoryLabel, usize> {
    let mut counts = BTreeMap::new();
    for task in tasks {
        *counts.entry(task.category).or_insert(0) += 1;
    }
    counts
}

/// Field-name mapping for one on-disk record layout.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayoutSpec {
    pub name: &'static str,
    pub id: &'static str,
    pub description: &'static str,
    pub category: &'static str,
    pub raw_category: &'static str,
    pub data_files: &'static str,
    pub reference_code: &'static str,
    pub reference_image_path: &'static str,
}

impl LayoutSpec {
    pub const T2C31: LayoutSpec = LayoutSpec {
        name: "t2c31",
        id: "id",
        description: "description",
        category: "category",
        raw_category: "raw_category",
        data_files: "data_files",
        reference_code: "reference_code",
        reference_image_path: "reference_image_path",
    };

    pub const CHARTX: LayoutSpec = LayoutSpec {
        name: "chartx",
        id: "imgname",
        description: "description",
        category: "category",
        raw_category: "chart_type",
        data_files: "data_files",
        reference_code: "code",
        reference_image_path: "img",
    };

    pub fn by_name(name: &str) -> Option<LayoutSpec> {
        match name {
            "t2c31" => Some(Self::T2C31),
            "chartx" => Some(Self::CHARTX),
            _ => None,
        }
    }
}

fn optional_string(
    obj: &Map<String, Value>,
    key: &str,
    line: usize,
) -> Result<Option<String>, CorpusError> {
    match obj.get(key) {
        None | Some(Value::Null) => Ok(None),
        Some(Value::String(s)) => Ok(Some(s.clone())),
        Some(other) => Err(CorpusError::MalformedRecord {
            line,
            reason: format!("field `{key}` must be a string, found {other}"),
        }),
    }
}

fn parse_record(
    text: &str,
    line: usize,
    layout: &LayoutSpec,
    base_dir: &Path,
) -> Result<ChartTask, CorpusError> {
    let value: Value = serde_json::from_str(text).map_err(|e| CorpusError::MalformedRecord {
        line,
        reason: e.to_string(),
    })?;
    let Value::Object(obj) = value else {
        return Err(CorpusError::MalformedRecord {
            line,
            reason: "record is not a JSON object".into(),
        });
    };

    let id = match obj.get(layout.id) {
        Some(Value::String(s)) if !s.is_empty() => s.clone(),
        Some(Value::Number(n)) => n.to_string(),
        _ => {
            return Err(CorpusError::MissingField {
                id: format!("<line {line}>"),
                field: layout.id.into(),
            })
        }
    };

    let description = optional_string(&obj, layout.description, line)?
        .filter(|d| !d.trim().is_empty())
        .ok_or_else(|| CorpusError::MissingField {
            id: id.clone(),
            field: layout.description.into(),
        })?;

    let category = optional_string(&obj, layout.category, line)?
        .map(|raw| category_of(&raw))
        .unwrap_or(CategoryLabel::Unknown);
    let raw_category = optional_string(&obj, layout.raw_category, line)?;

    let data_files = match obj.get(layout.data_files) {
        None | Some(Value::Null) => Vec::new(),
        Some(v) => Vec::<DataFile>::deserialize(v).map_err(|e| CorpusError::MalformedRecord {
            line,
            reason: format!("field `{}`: {e}", layout.data_files),
        })?,
    };
    for file in &data_files {
        if !is_safe_relative_path(&file.name) {
            return Err(CorpusError::UnsafeDataFile {
                id,
                name: file.name.clone(),
            });
        }
    }

    let reference_code = optional_string(&obj, layout.reference_code, line)?;
    let reference_image = match optional_string(&obj, layout.reference_image_path, line)? {
        Some(rel) => {
            let path = base_dir.join(&rel);
            Some(fs::read(&path).map_err(|source| CorpusError::Io { path, source })?)
        }
        None => None,
    };

    Ok(ChartTask {
        id,
        description,
        category,
        raw_category,
        data_files,
        reference_code,
        reference_image,
    })
}

/// Loads one split from a JSON-lines file. Blank lines are skipped; record
/// order is preserved.
pub fn load_taskset(path: &Path, layout: LayoutSpec) -> Result<TaskSet, CorpusError> {
    let text = fs::read_to_string(path).map_err(|source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let base_dir = path.parent().unwrap_or_else(|| Path::new("."));
    let mut seen = HashSet::new();
    let mut tasks = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let task = parse_record(line, idx + 1, &layout, base_dir)?;
        if !seen.insert(task.id.clone()) {
            return Err(CorpusError::DuplicateId {
                id: task.id,
                line: idx + 1,
            });
        }
        tasks.push(task);
    }
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    log::debug!("loaded {} tasks from {}", tasks.len(), path.display());
    Ok(TaskSet::new(name, tasks))
}

/// File name used for a task's reference image when a set is written out.
pub fn reference_image_file_name(id: &str) -> String {
    format!("{}.png", sanitize_file_stem(id))
}

/// Replaces characters that are awkward in file names. Ids that needed
/// changes get a short content hash appended so distinct ids stay distinct.
pub fn sanitize_file_stem(id: &str) -> String {
    let clean: String = id
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.') {
                c
            } else {
                '_'
            }
        })
        .collect();
    if clean == id && !clean.starts_with('.') {
        clean
    } else {
        // FNV-1a, stable across platforms and releases.
        let mut hash: u32 = 0x811c_9dc5;
        for b in id.bytes() {
            hash ^= u32::from(b);
            hash = hash.wrapping_mul(0x0100_0193);
        }
        format!("{}-{hash:08x}", clean.trim_start_matches('.'))
    }
}

/// Writes a task set in the `t2c31` layout: `<dir>/<file_name>` plus
/// reference images under `<dir>/images/`.
pub fn write_taskset(set: &TaskSet, dir: &Path, file_name: &str) -> Result<PathBuf, CorpusError> {
    let io_err = |path: &Path| {
        let path = path.to_path_buf();
        move |source| CorpusError::Io { path, source }
    };
    let images_dir = dir.join("images");
    fs::create_dir_all(&images_dir).map_err(io_err(&images_dir))?;
    let out_path = dir.join(file_name);
    let mut out = fs::File::create(&out_path).map_err(io_err(&out_path))?;
    let layout = LayoutSpec::T2C31;
    for task in &set.tasks {
        let mut obj = Map::new();
        obj.insert(layout.id.into(), Value::String(task.id.clone()));
        obj.insert(layout.description.into(), Value::String(task.description.clone()));
        obj.insert(
            layout.category.into(),
            Value::String(task.category.display_name().into()),
        );
        if let Some(raw) = &task.raw_category {
            obj.insert(layout.raw_category.into(), Value::String(raw.clone()));
        }
        obj.insert(
            layout.data_files.into(),
            serde_json::to_value(&task.data_files).expect("data files serialize"),
        );
        if let Some(code) = &task.reference_code {
            obj.insert(layout.reference_code.into(), Value::String(code.clone()));
        }
        if let Some(png) = &task.reference_image {
            let rel = format!("images/{}", reference_image_file_name(&task.id));
            let path = dir.join(&rel);
            fs::write(&path, png).map_err(io_err(&path))?;
            obj.insert(layout.reference_image_path.into(), Value::String(rel));
        }
        let line = serde_json::to_string(&Value::Object(obj)).expect("record serializes");
        writeln!(out, "{line}").map_err(io_err(&out_path))?;
    }
    Ok(out_path)
}
