//! Dataset readers and the on-disk Gram cache.
//!
//! CSV: one row per point, feature columns then an optional `±1` label
//! column. Sparse: one line per point, `label idx:val idx:val ...` with
//! 1-based indices; blank lines and `#` comments are skipped.
//!
//! A cached Gram matrix is a JSON metadata file next to a raw little-endian
//! `f64` row-major matrix file.

use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::kernel::{GramMatrix, KernelSpec, Sample};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DataFormat {
    Csv,
    Sparse,
}

/// How the last CSV column is treated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LabelColumn {
    /// A label column iff every value in it is `+1` or `-1` (and there is
    /// at least one other column).
    #[default]
    Auto,
    Last,
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct CsvOptions {
    pub header: bool,
    pub labels: LabelColumn,
}

fn line_error(line: u64, msg: impl std::fmt::Display) -> Error {
    Error::Data(format!("line {line}: {msg}"))
}

fn parse_value(field: &str, line: u64) -> Result<f64> {
    let v: f64 = field
        .trim()
        .parse()
        .map_err(|_| line_error(line, format!("cannot parse `{}` as a number", field.trim())))?;
    if !v.is_finite() {
        return Err(line_error(line, format!("non-finite value `{}`", field.trim())));
    }
    Ok(v)
}

pub fn parse_csv(text: &str, opts: CsvOptions) -> Result<Sample> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(opts.header)
        .flexible(true)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            line_error(line, e)
        })?;
        let line = record.position().map_or(0, |p| p.line());
        if record.iter().all(str::is_empty) {
            continue;
        }
        let row = record
            .iter()
            .map(|f| parse_value(f, line))
            .collect::<Result<Vec<_>>>()?;
        if let Some(first) = rows.first() {
            if row.len() != first.len() {
                return Err(line_error(
                    line,
                    format!("expected {} columns, found {}", first.len(), row.len()),
                ));
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::Data("no data rows".into()));
    }
    let width = rows[0].len();
    let labelled = match opts.labels {
        LabelColumn::None => false,
        LabelColumn::Last => true,
        LabelColumn::Auto => width >= 2 && rows.iter().all(|r| matches!(r[width - 1], 1.0 | -1.0)),
    };
    if labelled && width < 2 {
        return Err(Error::Data("a label column needs at least one feature column".into()));
    }
    if !labelled {
        return Sample::unlabeled(rows);
    }
    let mut labels = Vec::with_capacity(rows.len());
    for (i, r) in rows.iter_mut().enumerate() {
        let y = r.pop().expect("width checked");
        if y != 1.0 && y != -1.0 {
            return Err(Error::Data(format!("row {}: label {y} is not +1 or -1", i + 1)));
        }
        labels.push(y);
    }
    Sample::new(rows, Some(labels))
}

pub fn parse_sparse(text: &str) -> Result<Sample> {
    let mut entries: Vec<(f64, Vec<(usize, f64)>)> = Vec::new();
    let mut dim = 0;
    for (i, raw) in text.lines().enumerate() {
        let line = i as u64 + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let mut fields = content.split_whitespace();
        let label = parse_value(fields.next().expect("non-empty line"), line)?;
        if label != 1.0 && label != -1.0 {
            return Err(line_error(line, format!("label {label} is not +1 or -1")));
        }
        let mut features = Vec::new();
        let mut last = 0;
        for field in fields {
            let (idx, val) = field
                .split_once(':')
                .ok_or_else(|| line_error(line, format!("expected idx:val, found `{field}`")))?;
            let idx: usize = idx
                .parse()
                .map_err(|_| line_error(line, format!("bad index `{idx}`")))?;
            if idx == 0 {
                return Err(line_error(line, "indices are 1-based"));
            }
            if idx <= last {
                return Err(line_error(line, format!("index {idx} is not increasing")));
            }
            last = idx;
            features.push((idx - 1, parse_value(val, line)?));
        }
        dim = dim.max(last);
        entries.push((label, features));
    }
    if entries.is_empty() {
        return Err(Error::Data("no data rows".into()));
    }
    if dim == 0 {
        return Err(Error::Data("no features in any row".into()));
    }
    let mut points = Vec::with_capacity(entries.len());
    let mut labels = Vec::with_capacity(entries.len());
    for (label, features) in entries {
        let mut x = vec![0.0; dim];
        for (j, v) in features {
            x[j] = v;
        }
        points.push(x);
        labels.push(label);
    }
    Sample::new(points, Some(labels))
}

pub fn read_dataset(path: &Path, format: DataFormat, opts: CsvOptions) -> Result<Sample> {
    let text = fs::read_to_string(path)?;
    match format {
        DataFormat::Csv => parse_csv(&text, opts),
        DataFormat::Sparse => parse_sparse(&text),
    }
}

/// Metadata stored next to a cached Gram matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct GramMeta {
    pub m: usize,
    pub kernel: String,
    pub spec: KernelSpec,
    pub trace: f64,
    /// Matrix file name, relative to the metadata file.
    pub file: String,
    pub layout: String,
}

const LAYOUT: &str = "f64-le-row-major";

fn matrix_bytes(g: &GramMatrix) -> Vec<u8> {
    let m = g.m();
    let mut bytes = Vec::with_capacity(m * m * 8);
    for i in 0..m {
        for j in 0..m {
            bytes.extend_from_slice(&g.get(i, j).to_le_bytes());
        }
    }
    bytes
}

/// Writes a file, refusing to replace an existing file with different
/// contents.
pub fn write_new(path: &Path, bytes: &[u8]) -> Result<()> {
    match fs::read(path) {
        Ok(existing) if existing == bytes => Ok(()),
        Ok(_) => Err(Error::Input(format!(
            "{} exists with different contents; refusing to overwrite",
            path.display()
        ))),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(fs::write(path, bytes)?),
        Err(e) => Err(e.into()),
    }
}

/// Writes `<dir>/<kernel>.json` and `<dir>/<kernel>.bin`; returns the
/// metadata path.
pub fn write_gram_cache(dir: &Path, spec: &KernelSpec, g: &GramMatrix) -> Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let file = format!("{}.bin", spec.name);
    let meta = GramMeta {
        m: g.m(),
        kernel: spec.name.clone(),
        spec: spec.clone(),
        trace: g.trace(),
        file: file.clone(),
        layout: LAYOUT.into(),
    };
    let meta_path = dir.join(format!("{}.json", spec.name));
    write_new(&dir.join(file), &matrix_bytes(g))?;
    let mut json = serde_json::to_vec_pretty(&meta)?;
    json.push(b'\n');
    write_new(&meta_path, &json)?;
    Ok(meta_path)
}

pub fn read_gram_cache(meta_path: &Path) -> Result<(GramMeta, GramMatrix)> {
    let meta: GramMeta = serde_json::from_str(&fs::read_to_string(meta_path)?)?;
    if meta.layout != LAYOUT {
        return Err(Error::Data(format!("unsupported Gram layout `{}`", meta.layout)));
    }
    let bin = meta_path
        .parent()
        .unwrap_or_else(|| Path::new("."))
        .join(&meta.file);
    let mut bytes = Vec::new();
    fs::File::open(&bin)?.read_to_end(&mut bytes)?;
    if bytes.len() != meta.m * meta.m * 8 {
        return Err(Error::Data(format!(
            "{} holds {} bytes, expected {} for m = {}",
            bin.display(),
            bytes.len(),
            meta.m * meta.m * 8,
            meta.m
        )));
    }
    let data: Vec<f64> = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect();
    let g = GramMatrix::from_row_slice(meta.m, &data)?;
    if g.trace().to_bits() != meta.trace.to_bits() {
        return Err(Error::Data(format!(
            "trace {} does not match recorded trace {}",
            g.trace(),
            meta.trace
        )));
    }
    Ok((meta, g))
}
