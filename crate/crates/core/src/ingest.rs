//! Frame features in, per-video features out.
//!
//! Frame descriptors live in an FVEC file (or a plain CSV), a manifest maps
//! each video to a contiguous span of frame rows and a class label, and
//! [`fuse_frames`] collapses a span into one vector by weighted average.

use std::collections::HashSet;
use std::path::Path;

use crate::bytes::{self, ByteReader};
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::rng::Rng;

pub const FVEC_MAGIC: &[u8; 4] = b"FVEC";
pub const FVEC_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct VideoRecord {
    pub video_id: String,
    pub label: usize,
    pub frame_start: usize,
    pub frame_count: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Manifest {
    pub records: Vec<VideoRecord>,
    pub num_classes: usize,
}

/// One fused feature row per video.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub features: Matrix,
    pub labels: Vec<usize>,
    pub num_classes: usize,
    pub ids: Vec<String>,
}

impl Dataset {
    pub fn new(
        features: Matrix,
        labels: Vec<usize>,
        num_classes: usize,
        ids: Vec<String>,
    ) -> Result<Self> {
        if labels.len() != features.rows() || ids.len() != features.rows() {
            return Err(Error::DimensionMismatch {
                context: "dataset rows/labels/ids",
                expected: features.rows(),
                found: if labels.len() != features.rows() {
                    labels.len()
                } else {
                    ids.len()
                },
            });
        }
        let mut seen = vec![false; num_classes];
        for &l in &labels {
            if l >= num_classes {
                return Err(Error::invalid(format!(
                    "label {l} outside 0..{num_classes}"
                )));
            }
            seen[l] = true;
        }
        if let Some(missing) = seen.iter().position(|s| !s) {
            return Err(Error::invalid(format!("class {missing} has no videos")));
        }
        Ok(Dataset {
            features,
            labels,
            num_classes,
            ids,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.cols()
    }

    /// Rows picked by index. Keeps `num_classes` even if a class drops out.
    pub fn subset(&self, idx: &[usize]) -> Dataset {
        Dataset {
            features: self.features.select_rows(idx),
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
            num_classes: self.num_classes,
            ids: idx.iter().map(|&i| self.ids[i].clone()).collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Default)]
pub enum FusionWeights {
    #[default]
    Uniform,
    /// One non-negative weight per frame, summing to 1.
    Custom(Vec<f64>),
}

impl FusionWeights {
    pub fn custom(weights: Vec<f64>) -> Result<Self> {
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::invalid(
                "fusion weights must be finite and non-negative",
            ));
        }
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::invalid(format!(
                "fusion weights sum to {sum}, expected 1"
            )));
        }
        Ok(FusionWeights::Custom(weights))
    }
}

pub fn write_features(path: &Path, m: &Matrix) -> Result<()> {
    let mut out = Vec::with_capacity(16 + m.as_slice().len() * 4);
    out.extend_from_slice(FVEC_MAGIC);
    bytes::put_u32(&mut out, FVEC_VERSION);
    bytes::put_u32(&mut out, bytes::u32_field(m.rows(), "rows")?);
    bytes::put_u32(&mut out, bytes::u32_field(m.cols(), "cols")?);
    for v in m.as_slice() {
        out.extend_from_slice(&(*v as f32).to_le_bytes());
    }
    bytes::write_file(path, &out)
}

/// Loads an FVEC file, or a comma-separated text file when the FVEC magic is absent.
pub fn load_features(path: &Path) -> Result<Matrix> {
    let buf = bytes::read_file(path)?;
    if buf.starts_with(FVEC_MAGIC) {
        return parse_fvec(path, &buf);
    }
    let looks_textual = buf
        .iter()
        .find(|b| !b.is_ascii_whitespace())
        .is_some_and(|b| b.is_ascii_digit() || matches!(b, b'-' | b'+' | b'.'));
    if looks_textual {
        if let Ok(text) = std::str::from_utf8(&buf) {
            return parse_csv_features(path, text);
        }
    }
    Err(ByteReader::new(path, &buf).error_at(0, "bad magic: neither FVEC nor CSV"))
}

fn parse_fvec(path: &Path, buf: &[u8]) -> Result<Matrix> {
    let mut r = ByteReader::new(path, buf);
    r.magic(FVEC_MAGIC)?;
    r.version(FVEC_VERSION)?;
    let n = r.u32("n")? as usize;
    let d = r.u32("d")? as usize;
    let mut data = Vec::with_capacity(n * d);
    for row in 0..n {
        for col in 0..d {
            let at = r.offset();
            let v = r.f32("feature payload")?;
            if !v.is_finite() {
                return Err(r.error_at(at, format!("non-finite feature at ({row}, {col})")));
            }
            data.push(v as f64);
        }
    }
    r.finish()?;
    Ok(Matrix::from_raw(n, d, data))
}

fn parse_csv_features(path: &Path, text: &str) -> Result<Matrix> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (row, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| csv_error(path, e))?;
        let mut vals = Vec::with_capacity(rec.len());
        for (col, field) in rec.iter().enumerate() {
            let v: f64 = field.parse().map_err(|_| Error::Format {
                path: path.to_path_buf(),
                offset: rec.position().map_or(0, |p| p.byte()),
                message: format!("bad number {field:?} at ({row}, {col})"),
            })?;
            if !v.is_finite() {
                return Err(Error::NonFinite {
                    what: "feature file",
                    row,
                    col,
                });
            }
            vals.push(v);
        }
        rows.push(vals);
    }
    if rows.is_empty() {
        return Err(Error::Empty("feature csv has no rows"));
    }
    Matrix::from_rows(&rows)
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    Error::Format {
        path: path.to_path_buf(),
        offset: e.position().map_or(0, |p| p.byte()),
        message: e.to_string(),
    }
}

pub fn write_manifest(path: &Path, records: &[VideoRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["video_id", "label", "frame_start", "frame_count"])
        .and_then(|_| {
            records.iter().try_for_each(|r| {
                w.write_record([
                    r.video_id.as_str(),
                    &r.label.to_string(),
                    &r.frame_start.to_string(),
                    &r.frame_count.to_string(),
                ])
            })
        })
        .map_err(|e| csv_error(path, e))?;
    let buf = w
        .into_inner()
        .map_err(|e| Error::io(path, e.into_error()))?;
    bytes::write_file(path, &buf)
}

/// Reads and validates a manifest against a feature matrix with `feature_rows` rows.
pub fn load_manifest(path: &Path, feature_rows: usize) -> Result<Manifest> {
    let buf = bytes::read_file(path)?;
    let bad = |message: String| Error::Manifest {
        path: path.to_path_buf(),
        message,
    };
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(buf.as_slice());
    let header = reader.headers().map_err(|e| csv_error(path, e))?.clone();
    let expected = ["video_id", "label", "frame_start", "frame_count"];
    if header.iter().collect::<Vec<_>>() != expected {
        return Err(bad(format!(
            "header must be {}, found {}",
            expected.join(","),
            header.iter().collect::<Vec<_>>().join(",")
        )));
    }
    let mut records = Vec::new();
    for (line, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| csv_error(path, e))?;
        let num = |i: usize, name: &str| -> Result<usize> {
            rec[i]
                .parse()
                .map_err(|_| bad(format!("record {line}: bad {name} {:?}", &rec[i])))
        };
        records.push(VideoRecord {
            video_id: rec[0].to_string(),
            label: num(1, "label")?,
            frame_start: num(2, "frame_start")?,
            frame_count: num(3, "frame_count")?,
        });
    }
    let num_classes = validate_records(&records, feature_rows).map_err(bad)?;
    Ok(Manifest {
        records,
        num_classes,
    })
}

/// Checks record invariants and returns the class count.
pub fn validate_records(
    records: &[VideoRecord],
    feature_rows: usize,
) -> std::result::Result<usize, String> {
    if records.is_empty() {
        return Err("no videos".into());
    }
    let mut ids = HashSet::new();
    for r in records {
        if r.frame_count == 0 {
            return Err(format!("video {} has frame_count 0", r.video_id));
        }
        if r.frame_start + r.frame_count > feature_rows {
            return Err(format!(
                "video {} frame range {}..{} out of bounds for {} feature rows",
                r.video_id,
                r.frame_start,
                r.frame_start + r.frame_count,
                feature_rows
            ));
        }
        if !ids.insert(r.video_id.as_str()) {
            return Err(format!("duplicate video id {}", r.video_id));
        }
    }
    let mut spans: Vec<&VideoRecord> = records.iter().collect();
    spans.sort_by_key(|r| r.frame_start);
    for w in spans.windows(2) {
        if w[0].frame_start + w[0].frame_count > w[1].frame_start {
            return Err(format!(
                "overlapping frame ranges for videos {} and {}",
                w[0].video_id, w[1].video_id
            ));
        }
    }
    let max_label = records.iter().map(|r| r.label).max().unwrap();
    let mut present = vec![false; max_label + 1];
    for r in records {
        present[r.label] = true;
    }
    if let Some(gap) = present.iter().position(|p| !p) {
        return Err(format!("label gap at {gap}"));
    }
    Ok(max_label + 1)
}

/// Weighted average of the video's frame rows.
pub fn fuse_frames(
    features: &Matrix,
    rec: &VideoRecord,
    weights: &FusionWeights,
) -> Result<Vec<f64>> {
    if rec.frame_count == 0 || rec.frame_start + rec.frame_count > features.rows() {
        return Err(Error::invalid(format!(
            "video {} frame range out of bounds",
            rec.video_id
        )));
    }
    let rows: Vec<usize> = (rec.frame_start..rec.frame_start + rec.frame_count).collect();
    match weights {
        FusionWeights::Uniform => Ok(fuse_rows_uniform(features, &rows)),
        FusionWeights::Custom(w) => {
            if w.len() != rec.frame_count {
                return Err(Error::DimensionMismatch {
                    context: "fusion weights vs frame_count",
                    expected: rec.frame_count,
                    found: w.len(),
                });
            }
            let mut out = vec![0.0; features.cols()];
            for (&row, &wi) in rows.iter().zip(w) {
                for (o, v) in out.iter_mut().zip(features.row(row)) {
                    *o += wi * v;
                }
            }
            Ok(out)
        }
    }
}

/// Arithmetic mean of the given rows.
pub(crate) fn fuse_rows_uniform(features: &Matrix, rows: &[usize]) -> Vec<f64> {
    let mut out = vec![0.0; features.cols()];
    for &row in rows {
        for (o, v) in out.iter_mut().zip(features.row(row)) {
            *o += v;
        }
    }
    let n = rows.len() as f64;
    out.iter_mut().for_each(|o| *o /= n);
    out
}

/// Fuses every video of the manifest into a [`Dataset`].
pub fn build_dataset(
    features: &Matrix,
    manifest: &Manifest,
    weights: &FusionWeights,
) -> Result<Dataset> {
    let mut data = Vec::with_capacity(manifest.records.len() * features.cols());
    for rec in &manifest.records {
        data.extend(fuse_frames(features, rec, weights)?);
    }
    Dataset::new(
        Matrix::from_raw(manifest.records.len(), features.cols(), data),
        manifest.records.iter().map(|r| r.label).collect(),
        manifest.num_classes,
        manifest
            .records
            .iter()
            .map(|r| r.video_id.clone())
            .collect(),
    )
}

/// Row indices of a stratified database/query split, each sorted ascending.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SplitIndices {
    pub database: Vec<usize>,
    pub queries: Vec<usize>,
}

/// Per class, `round(fraction · n_c)` videos (clamped to 1..n_c−1) become queries.
pub fn split_indices(
    labels: &[usize],
    num_classes: usize,
    rng: &mut Rng,
    query_fraction: f64,
) -> Result<SplitIndices> {
    if !(query_fraction > 0.0 && query_fraction < 1.0) {
        return Err(Error::invalid(format!(
            "query fraction {query_fraction} must lie in (0, 1)"
        )));
    }
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); num_classes];
    for (i, &l) in labels.iter().enumerate() {
        by_class[l].push(i);
    }
    let mut queries = Vec::new();
    for (class, mut members) in by_class.into_iter().enumerate() {
        if members.len() < 2 {
            return Err(Error::invalid(format!(
                "class {class} has {} videos; a split needs at least 2",
                members.len()
            )));
        }
        let n_q =
            ((query_fraction * members.len() as f64).round() as usize).clamp(1, members.len() - 1);
        rng.shuffle(&mut members);
        queries.extend_from_slice(&members[..n_q]);
    }
    queries.sort_unstable();
    let mut is_query = vec![false; labels.len()];
    queries.iter().for_each(|&q| is_query[q] = true);
    let database = (0..labels.len()).filter(|&i| !is_query[i]).collect();
    Ok(SplitIndices { database, queries })
}

/// Stratified split into (database, queries).
pub fn split_dataset(
    ds: &Dataset,
    rng: &mut Rng,
    query_fraction: f64,
) -> Result<(Dataset, Dataset)> {
    let split = split_indices(&ds.labels, ds.num_classes, rng, query_fraction)?;
    Ok((ds.subset(&split.database), ds.subset(&split.queries)))
}
