//! Seeded review samples: generated and reference charts side by side with
//! an empty label column for a human reviewer.

use std::fs;
use std::path::{Path, PathBuf};

use image::{imageops, Rgba, RgbaImage};
use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use chartforge::corpus::sanitize_file_stem;

use crate::args::SampleArgs;
use crate::commands::RunContext;
use crate::{write_file, CliError};

/// Labels a reviewer may enter.
pub const REVIEW_LABELS: [&str; 3] = ["Successful", "WrongStyle", "ErrorDataOther"];

const GAP: u32 = 16;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ReviewRow {
    pub rank: usize,
    pub task_id: String,
    pub category: String,
    pub composite: String,
    pub has_reference: bool,
    pub label: String,
    pub notes: String,
}

/// Indices into `population` chosen by a ChaCha8 stream seeded with `seed`.
pub fn sample_indices(population: usize, n: usize, seed: u64) -> Result<Vec<usize>, CliError> {
    if n > population {
        return Err(CliError::NotEnoughRecords { have: population, need: n });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(index::sample(&mut rng, population, n).into_vec())
}

fn decode(bytes: &[u8]) -> Result<RgbaImage, CliError> {
    image::load_from_memory(bytes)
        .map(|i| i.to_rgba8())
        .map_err(|e| CliError::Runtime(format!("cannot decode image: {e}")))
}

/// Generated image on the left, reference (or a grey placeholder) on the right.
pub fn side_by_side(generated: &[u8], reference: Option<&[u8]>) -> Result<RgbaImage, CliError> {
    let left = decode(generated)?;
    let right = match reference {
        Some(r) => decode(r)?,
        None => RgbaImage::from_pixel(left.width(), left.height(), Rgba([220, 220, 220, 255])),
    };
    let width = left.width() + GAP + right.width();
    let height = left.height().max(right.height());
    let mut canvas = RgbaImage::from_pixel(width, height, Rgba([255, 255, 255, 255]));
    imageops::overlay(&mut canvas, &left, 0, 0);
    imageops::overlay(&mut canvas, &right, i64::from(left.width() + GAP), 0);
    Ok(canvas)
}

pub fn cmd_sample(args: &SampleArgs, out: &mut dyn std::io::Write) -> Result<PathBuf, CliError> {
    let ctx = RunContext::load(&args.run_dir)?;
    let candidates: Vec<_> = ctx
        .records
        .iter()
        .filter_map(|r| r.final_image().map(|img| (r, img)))
        .collect();
    let picked = sample_indices(candidates.len(), args.n, args.seed)?;
    let bundle = args
        .out
        .clone()
        .unwrap_or_else(|| args.run_dir.join(format!("review-{}", args.seed)));
    fs::create_dir_all(&bundle).map_err(|e| CliError::io(&bundle, e))?;

    let mut rows = Vec::with_capacity(picked.len());
    for (rank, &i) in picked.iter().enumerate() {
        let (record, generated) = candidates[i];
        let reference = ctx
            .tasks
            .get(&record.task_id)
            .and_then(|t| t.reference_image.as_deref());
        let name = format!("{:03}_{}.png", rank + 1, sanitize_file_stem(&record.task_id));
        let composite = side_by_side(generated, reference)?;
        save_png(&composite, &bundle.join(&name))?;
        rows.push(ReviewRow {
            rank: rank + 1,
            task_id: record.task_id.clone(),
            category: record.category.display_name().to_string(),
            composite: name,
            has_reference: reference.is_some(),
            label: String::new(),
            notes: String::new(),
        });
    }
    write_review_csv(&bundle.join("review.csv"), &rows)?;
    let mut legend = String::from("Allowed values for the label column:\n");
    for l in REVIEW_LABELS {
        legend.push_str(l);
        legend.push('\n');
    }
    write_file(&bundle.join("labels.txt"), legend.as_bytes())?;
    writeln!(out, "{} charts sampled into {}", rows.len(), bundle.display())
        .map_err(|e| CliError::Runtime(e.to_string()))?;
    Ok(bundle)
}

fn save_png(img: &RgbaImage, path: &Path) -> Result<(), CliError> {
    let mut bytes = std::io::Cursor::new(Vec::new());
    img.write_to(&mut bytes, image::ImageFormat::Png)
        .map_err(|e| CliError::Runtime(e.to_string()))?;
    write_file(path, &bytes.into_inner())
}

fn write_review_csv(path: &Path, rows: &[ReviewRow]) -> Result<(), CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    if rows.is_empty() {
        w.write_record(["rank", "task_id", "category", "composite", "has_reference", "label", "notes"])
            .map_err(|e| CliError::Runtime(e.to_string()))?;
    }
    for row in rows {
        w.serialize(row).map_err(|e| CliError::Runtime(e.to_string()))?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::Runtime(e.to_string()))?;
    write_file(path, &bytes)
}
