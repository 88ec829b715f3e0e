use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::matrix::Matrix;

use super::gap::gap_pool;
use super::manifest::{DatasetManifest, LayerDescriptor, MANIFEST_FILE};
use super::{ANNOTATIONS_FILE, LABELS_FILE};

/// A validated bundle. Spatial layers are already pooled, so every layer is
/// an `[N, U]` matrix. Immutable after construction.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub manifest: DatasetManifest,
    pub image_ids: Vec<String>,
    /// Class index per image.
    pub labels: Vec<usize>,
    /// `[N, K]` concept presence.
    pub annotations: Matrix<u8>,
    /// Pooled activations, in manifest layer order.
    pub layers: Vec<Matrix<f32>>,
}

impl Dataset {
    /// Builds a dataset from in-memory parts, checking every cross-table
    /// invariant that `load_bundle` checks.
    pub fn new(
        manifest: DatasetManifest,
        image_ids: Vec<String>,
        labels: Vec<usize>,
        annotations: Matrix<u8>,
        layers: Vec<Matrix<f32>>,
    ) -> Result<Self> {
        manifest.validate().map_err(|reason| Error::Manifest {
            path: PathBuf::from(MANIFEST_FILE),
            reason,
        })?;
        let n = manifest.image_count;
        if image_ids.len() != n || labels.len() != n {
            return Err(Error::ShapeMismatch(format!(
                "{} ids / {} labels for {n} images",
                image_ids.len(),
                labels.len()
            )));
        }
        check_labels(&labels, &manifest, Path::new(LABELS_FILE))?;
        if annotations.shape() != (n, manifest.concept_count()) {
            return Err(Error::ShapeMismatch(format!(
                "annotations are {:?}, expected ({n}, {})",
                annotations.shape(),
                manifest.concept_count()
            )));
        }
        if let Some(pos) = annotations.as_slice().iter().position(|&v| v > 1) {
            let k = manifest.concept_count();
            return Err(Error::NonBinaryAnnotation {
                path: PathBuf::from(ANNOTATIONS_FILE),
                row: pos / k,
                column: pos % k,
                value: annotations.as_slice()[pos].to_string(),
            });
        }
        if layers.len() != manifest.layer_count() {
            return Err(Error::ShapeMismatch(format!(
                "{} layer matrices for {} layers",
                layers.len(),
                manifest.layer_count()
            )));
        }
        for (m, desc) in layers.iter().zip(&manifest.layers) {
            if m.shape() != (n, desc.unit_count) {
                return Err(Error::DimensionMismatch {
                    path: PathBuf::from(&desc.file),
                    subject: format!("layer {}", desc.layer_id),
                    reason: format!("matrix is {:?}, expected ({n}, {})", m.shape(), desc.unit_count),
                });
            }
            if let Some(offset) = m.as_slice().iter().position(|v| !v.is_finite()) {
                return Err(Error::NonFinite {
                    path: PathBuf::from(&desc.file),
                    offset,
                });
            }
        }
        Ok(Self {
            manifest,
            image_ids,
            labels,
            annotations,
            layers,
        })
    }

    pub fn image_count(&self) -> usize {
        self.manifest.image_count
    }

    /// Presence of concept `k` as a boolean column.
    pub fn concept_labels(&self, k: usize) -> Vec<bool> {
        (0..self.image_count())
            .map(|n| self.annotations.get(n, k) == 1)
            .collect()
    }

    pub fn layer(&self, layer_id: &str) -> Option<&Matrix<f32>> {
        self.manifest.layer_position(layer_id).map(|pos| &self.layers[pos])
    }

    /// Sample count per class.
    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.manifest.class_count()];
        for &y in &self.labels {
            counts[y] += 1;
        }
        counts
    }
}

pub fn load_bundle(root: &Path) -> Result<Dataset> {
    load_bundle_with(root, Execution::default())
}

/// Loads a bundle; layer files are read with the given execution mode.
pub fn load_bundle_with(root: &Path, exec: Execution) -> Result<Dataset> {
    let manifest = DatasetManifest::read(&root.join(MANIFEST_FILE))?;
    let (image_ids, labels) = read_labels(&root.join(LABELS_FILE), &manifest)?;
    let annotations = read_annotations(&root.join(ANNOTATIONS_FILE), &manifest, &image_ids)?;
    let layers = exec.try_map_range(manifest.layer_count(), |pos| {
        read_layer(root, &manifest.layers[pos], manifest.image_count)
    })?;
    Dataset::new(manifest, image_ids, labels, annotations, layers)
}

/// Writes `dataset` as a bundle of pooled `.f32` layers.
pub fn save_bundle(dataset: &Dataset, root: &Path) -> Result<()> {
    fs::create_dir_all(root).map_err(|e| Error::io(root, e))?;
    let mut manifest = dataset.manifest.clone();
    for (desc, m) in manifest.layers.iter_mut().zip(&dataset.layers) {
        desc.spatial = false;
        desc.height = None;
        desc.width = None;
        desc.file = format!("{}.f32", desc.layer_id);
        write_f32(&root.join(&desc.file), m.as_slice())?;
    }
    let path = root.join(MANIFEST_FILE);
    fs::write(&path, serde_json::to_string_pretty(&manifest)?).map_err(|e| Error::io(&path, e))?;

    let mut labels = String::from("image_id,class\n");
    for (id, &y) in dataset.image_ids.iter().zip(&dataset.labels) {
        labels.push_str(&format!("{id},{}\n", manifest.classes[y]));
    }
    let path = root.join(LABELS_FILE);
    fs::write(&path, labels).map_err(|e| Error::io(&path, e))?;

    let mut ann = String::from("image_id");
    for c in &manifest.concepts {
        ann.push(',');
        ann.push_str(&c.name);
    }
    ann.push('\n');
    for (n, id) in dataset.image_ids.iter().enumerate() {
        ann.push_str(id);
        for &v in dataset.annotations.row(n) {
            ann.push_str(if v == 1 { ",1" } else { ",0" });
        }
        ann.push('\n');
    }
    let path = root.join(ANNOTATIONS_FILE);
    fs::write(&path, ann).map_err(|e| Error::io(&path, e))
}

/// Writes raw little-endian `f32` values.
pub(crate) fn write_f32(path: &Path, values: &[f32]) -> Result<()> {
    let mut buf = Vec::with_capacity(values.len() * 4);
    for v in values {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&buf).map_err(|e| Error::io(path, e))
}

fn check_labels(labels: &[usize], manifest: &DatasetManifest, path: &Path) -> Result<()> {
    let mut counts = vec![0usize; manifest.class_count()];
    for (row, &y) in labels.iter().enumerate() {
        if y >= counts.len() {
            return Err(Error::Csv {
                path: path.to_path_buf(),
                row,
                reason: format!("class index {y} out of range"),
            });
        }
        counts[y] += 1;
    }
    if let Some(empty) = counts.iter().position(|&c| c == 0) {
        return Err(Error::Csv {
            path: path.to_path_buf(),
            row: labels.len(),
            reason: format!("class {:?} has no samples", manifest.classes[empty]),
        });
    }
    Ok(())
}

fn csv_reader(path: &Path) -> Result<csv::Reader<fs::File>> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(file))
}

fn csv_err(path: &Path, row: usize, e: impl ToString) -> Error {
    Error::Csv {
        path: path.to_path_buf(),
        row,
        reason: e.to_string(),
    }
}

fn read_labels(path: &Path, manifest: &DatasetManifest) -> Result<(Vec<String>, Vec<usize>)> {
    let mut rdr = csv_reader(path)?;
    let header = rdr.headers().map_err(|e| csv_err(path, 0, e))?.clone();
    if header.iter().collect::<Vec<_>>() != ["image_id", "class"] {
        return Err(csv_err(path, 0, "header must be image_id,class"));
    }
    let mut ids = Vec::new();
    let mut labels = Vec::new();
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| csv_err(path, row + 1, e))?;
        let class = &rec[1];
        let y = match manifest.class_index(class) {
            Some(y) => y,
            None => class
                .parse::<usize>()
                .ok()
                .filter(|&y| y < manifest.class_count())
                .ok_or_else(|| csv_err(path, row + 1, format!("unknown class {class:?}")))?,
        };
        ids.push(rec[0].to_string());
        labels.push(y);
    }
    if labels.len() != manifest.image_count {
        return Err(Error::DimensionMismatch {
            path: path.to_path_buf(),
            subject: "labels".into(),
            reason: format!("{} rows, manifest image_count {}", labels.len(), manifest.image_count),
        });
    }
    check_labels(&labels, manifest, path)?;
    Ok((ids, labels))
}

fn read_annotations(path: &Path, manifest: &DatasetManifest, ids: &[String]) -> Result<Matrix<u8>> {
    let mut rdr = csv_reader(path)?;
    let header = rdr.headers().map_err(|e| csv_err(path, 0, e))?.clone();
    let expected: Vec<&str> = std::iter::once("image_id")
        .chain(manifest.concepts.iter().map(|c| c.name.as_str()))
        .collect();
    if header.iter().collect::<Vec<_>>() != expected {
        return Err(csv_err(path, 0, format!("header must be {}", expected.join(","))));
    }
    let k = manifest.concept_count();
    let mut data = Vec::with_capacity(ids.len() * k);
    let mut rows = 0;
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| csv_err(path, row + 1, e))?;
        if let Some(id) = ids.get(row) {
            if &rec[0] != id {
                return Err(csv_err(
                    path,
                    row + 1,
                    format!("image_id {:?} does not match labels row {id:?}", &rec[0]),
                ));
            }
        }
        for (col, field) in rec.iter().skip(1).enumerate() {
            let v = match field.parse::<f64>() {
                Ok(0.0) => 0,
                Ok(1.0) => 1,
                _ => {
                    return Err(Error::NonBinaryAnnotation {
                        path: path.to_path_buf(),
                        row: row + 1,
                        column: col + 1,
                        value: field.to_string(),
                    })
                }
            };
            data.push(v);
        }
        rows += 1;
    }
    if rows != manifest.image_count {
        return Err(Error::DimensionMismatch {
            path: path.to_path_buf(),
            subject: "annotations".into(),
            reason: format!("{rows} rows, manifest image_count {}", manifest.image_count),
        });
    }
    Matrix::from_vec(rows, k, data)
}

fn read_layer(root: &Path, desc: &LayerDescriptor, n: usize) -> Result<Matrix<f32>> {
    let path = root.join(&desc.file);
    let per_image = desc.unit_count * desc.spatial_size();
    let mismatch = |reason: String| Error::DimensionMismatch {
        path: path.clone(),
        subject: format!("layer {}", desc.layer_id),
        reason,
    };
    let values = if desc.file.ends_with(".f32") {
        let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
        if bytes.len() != n * per_image * 4 {
            return Err(mismatch(format!(
                "file holds {} bytes ({:.2} rows of {per_image} values), manifest declares {n} rows",
                bytes.len(),
                bytes.len() as f64 / (per_image * 4) as f64
            )));
        }
        bytes
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
            .collect::<Vec<_>>()
    } else {
        let file = fs::File::open(&path).map_err(|e| Error::io(&path, e))?;
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(false)
            .trim(csv::Trim::All)
            .from_reader(file);
        let mut values = Vec::with_capacity(n * per_image);
        let mut rows = 0;
        for (row, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(|e| csv_err(&path, row, e))?;
            if rec.len() != per_image {
                return Err(mismatch(format!(
                    "row {row} has {} values, expected {per_image}",
                    rec.len()
                )));
            }
            for field in rec.iter() {
                values.push(field.parse::<f32>().map_err(|e| csv_err(&path, row, e))?);
            }
            rows += 1;
        }
        if rows != n {
            return Err(mismatch(format!("{rows} rows, manifest declares {n}")));
        }
        values
    };
    if let Some(offset) = values.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite { path, offset });
    }
    match (desc.height, desc.width) {
        (Some(h), Some(w)) if desc.spatial => gap_pool(&values, n, desc.unit_count, h, w),
        _ => Matrix::from_vec(n, desc.unit_count, values),
    }
}
