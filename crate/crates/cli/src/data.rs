//! On-disk layouts.
//!
//! A synthetic image directory holds `<id>.pgm`, `<id>_mask.pgm` and a
//! `labels.csv` of `image_id,label` rows. A capture directory holds one
//! `.camcap` file per (image, class) and the ground truth `<id>_mask.pgm` of
//! every image.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use camforge::cnn::ShapesSample;
use camforge::pgm::Pgm;
use camforge::seg::{EvalImage, LabelMask};
use camforge::{CaptureFile, Error, Result};

pub const LABELS_FILE: &str = "labels.csv";
pub const MASK_SUFFIX: &str = "_mask.pgm";

pub fn mask_path(dir: &Path, image_id: &str) -> PathBuf {
    dir.join(format!("{image_id}{MASK_SUFFIX}"))
}

pub fn read_labels(dir: &Path) -> Result<Vec<(String, usize)>> {
    let path = dir.join(LABELS_FILE);
    let text = fs::read_to_string(&path).map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    let mut rows = Vec::new();
    for (n, line) in text.lines().enumerate().skip(1) {
        if line.trim().is_empty() {
            continue;
        }
        let bad = || Error::Format(format!("{} line {}: expected image_id,label", path.display(), n + 1));
        let (id, label) = line.split_once(',').ok_or_else(bad)?;
        let label = label.trim().parse().map_err(|_| bad())?;
        rows.push((id.trim().to_string(), label));
    }
    if rows.is_empty() {
        return Err(Error::Format(format!("{} lists no images", path.display())));
    }
    Ok(rows)
}

pub fn write_labels(dir: &Path, rows: &[(String, usize)]) -> Result<()> {
    let mut text = String::from("image_id,label\n");
    for (id, label) in rows {
        text.push_str(&format!("{id},{label}\n"));
    }
    fs::write(dir.join(LABELS_FILE), text)?;
    Ok(())
}

pub fn load_mask(path: &Path) -> Result<LabelMask> {
    Pgm::load(path)?.to_mask()
}

/// Loads the images listed in `labels.csv` together with their masks.
pub fn load_samples(dir: &Path) -> Result<Vec<(String, ShapesSample)>> {
    read_labels(dir)?
        .into_iter()
        .map(|(id, label)| {
            let image = Pgm::load(dir.join(format!("{id}.pgm")))?.to_unit_tensor();
            let gt_mask = load_mask(&mask_path(dir, &id))?;
            Ok((id, ShapesSample { image, label, gt_mask }))
        })
        .collect()
}

/// Loads every capture in `dir`, grouped by image id in sorted order.
pub fn load_eval_set(dir: &Path) -> Result<Vec<EvalImage>> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)?.map(|e| e.map(|e| e.path())).collect::<std::io::Result<_>>()?;
    files.retain(|p| p.extension().is_some_and(|e| e == "camcap"));
    files.sort();
    if files.is_empty() {
        return Err(Error::Format(format!("no .camcap files in {}", dir.display())));
    }
    let mut grouped: BTreeMap<String, Vec<CaptureFile>> = BTreeMap::new();
    for path in &files {
        let cf = CaptureFile::load(path).map_err(|e| annotate(e, path))?;
        grouped.entry(cf.image_id.clone()).or_default().push(cf);
    }
    grouped
        .into_iter()
        .map(|(image_id, captures)| {
            let path = mask_path(dir, &image_id);
            let gt = load_mask(&path).map_err(|e| annotate(e, &path))?;
            Ok(EvalImage { image_id, captures, gt })
        })
        .collect()
}

/// Mask files in `dir`, sorted by name.
pub fn mask_files(dir: &Path) -> Result<Vec<String>> {
    let mut names: Vec<String> = fs::read_dir(dir)?
        .map(|e| e.map(|e| e.file_name().to_string_lossy().into_owned()))
        .collect::<std::io::Result<_>>()?;
    names.retain(|n| n.ends_with(MASK_SUFFIX));
    names.sort();
    Ok(names)
}

fn annotate(e: Error, path: &Path) -> Error {
    match e {
        Error::Io(io) => Error::Io(std::io::Error::new(io.kind(), format!("{}: {io}", path.display()))),
        Error::Format(m) => Error::Format(format!("{}: {m}", path.display())),
        Error::Corruption(m) => Error::Corruption(format!("{}: {m}", path.display())),
        Error::Validation(m) => Error::Validation(format!("{}: {m}", path.display())),
        other => other,
    }
}
