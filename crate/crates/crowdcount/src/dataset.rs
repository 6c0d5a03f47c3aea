//! Labeled training data on disk.
//!
//! - Features CSV: `f0..f93` then `label` (1 human, 0 not).
//! - Images NDJSON: `{"label":L,"image":[...]}` with 1944 values in
//!   row-major 18x18x6 order.
//! - Labels CSV: `frame_id,object_id,class` with class `human` or `non_human`.

use std::io::{BufRead, Write};

use crowdcount_core::features::{FeatureVector, FEATURE_DIM};
use crowdcount_core::nn::{HUMAN, NON_HUMAN};
use crowdcount_core::projection::IMAGE_LEN;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

fn check_label(label: usize, line: u64) -> Result<usize> {
    match label {
        HUMAN | NON_HUMAN => Ok(label),
        other => Err(Error::parse(line, format!("label must be 0 or 1, got {other}"))),
    }
}

fn csv_line(e: &csv::Error) -> u64 {
    e.position().map_or(0, |p| p.line())
}

pub fn write_features<W: Write>(sink: W, rows: &[(FeatureVector, usize)]) -> Result<W> {
    let mut w = csv::Writer::from_writer(sink);
    let header: Vec<String> = (0..FEATURE_DIM).map(|i| format!("f{i}")).chain(["label".into()]).collect();
    w.write_record(&header).map_err(csv_io)?;
    for (v, label) in rows {
        let record: Vec<String> = v.0.iter().map(f64::to_string).chain([label.to_string()]).collect();
        w.write_record(&record).map_err(csv_io)?;
    }
    w.into_inner().map_err(|e| Error::Stream(e.into_error()))
}

fn csv_io(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Stream(io),
        other => Error::Stream(std::io::Error::other(format!("{other:?}"))),
    }
}

pub fn read_features<R: BufRead>(source: R) -> Result<Vec<(FeatureVector, usize)>> {
    let mut r = csv::ReaderBuilder::new().has_headers(true).flexible(true).from_reader(source);
    let header = r.headers().map_err(|e| Error::parse(csv_line(&e), e.to_string()))?.clone();
    if header.len() != FEATURE_DIM + 1 || header.get(FEATURE_DIM) != Some("label") {
        return Err(Error::parse(1, format!("expected {FEATURE_DIM} feature columns and a label column")));
    }
    let mut rows = Vec::new();
    for record in r.records() {
        let record = record.map_err(|e| Error::parse(csv_line(&e), e.to_string()))?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != FEATURE_DIM + 1 {
            return Err(Error::parse(line, format!("expected {} fields, found {}", FEATURE_DIM + 1, record.len())));
        }
        let mut values = [0.0f64; FEATURE_DIM];
        for (v, text) in values.iter_mut().zip(record.iter()) {
            *v = text.trim().parse().map_err(|_| Error::parse(line, format!("bad feature value `{text}`")))?;
            if !v.is_finite() {
                return Err(Error::parse(line, "feature values must be finite"));
            }
        }
        let label = record[FEATURE_DIM].trim().parse().map_err(|_| Error::parse(line, "bad label"))?;
        rows.push((FeatureVector(values), check_label(label, line)?));
    }
    Ok(rows)
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ImageRecord {
    label: usize,
    image: Vec<f64>,
}

pub fn write_images<W: Write>(mut sink: W, rows: &[(Vec<f64>, usize)]) -> Result<W> {
    for (image, label) in rows {
        serde_json::to_writer(&mut sink, &ImageRecord { label: *label, image: image.clone() })
            .map_err(std::io::Error::from)?;
        sink.write_all(b"\n")?;
    }
    sink.flush()?;
    Ok(sink)
}

pub fn read_images<R: BufRead>(source: R) -> Result<Vec<(Vec<f64>, usize)>> {
    let mut rows = Vec::new();
    for (i, line) in source.lines().enumerate() {
        let line_no = i as u64 + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: ImageRecord = serde_json::from_str(&line).map_err(|e| Error::parse(line_no, e.to_string()))?;
        if rec.image.len() != IMAGE_LEN {
            return Err(Error::parse(line_no, format!("image has {} values, expected {IMAGE_LEN}", rec.image.len())));
        }
        rows.push((rec.image, check_label(rec.label, line_no)?));
    }
    Ok(rows)
}

/// One labeled object of a capture.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ObjectLabel {
    pub frame_id: u64,
    pub object_id: usize,
    pub label: usize,
}

fn class_name(label: usize) -> &'static str {
    if label == HUMAN {
        "human"
    } else {
        "non_human"
    }
}

pub fn write_labels<W: Write>(sink: W, labels: &[ObjectLabel]) -> Result<W> {
    let mut w = csv::Writer::from_writer(sink);
    w.write_record(["frame_id", "object_id", "class"]).map_err(csv_io)?;
    for l in labels {
        w.write_record([l.frame_id.to_string(), l.object_id.to_string(), class_name(l.label).to_string()])
            .map_err(csv_io)?;
    }
    w.into_inner().map_err(|e| Error::Stream(e.into_error()))
}

pub fn read_labels<R: BufRead>(source: R) -> Result<Vec<ObjectLabel>> {
    let mut r = csv::ReaderBuilder::new().has_headers(true).flexible(true).from_reader(source);
    let header = r.headers().map_err(|e| Error::parse(csv_line(&e), e.to_string()))?.clone();
    if header.iter().collect::<Vec<_>>() != ["frame_id", "object_id", "class"] {
        return Err(Error::parse(1, "expected header frame_id,object_id,class"));
    }
    let mut out = Vec::new();
    for record in r.records() {
        let record = record.map_err(|e| Error::parse(csv_line(&e), e.to_string()))?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != 3 {
            return Err(Error::parse(line, format!("expected 3 fields, found {}", record.len())));
        }
        let frame_id = record[0].trim().parse().map_err(|_| Error::parse(line, "bad frame_id"))?;
        let object_id = record[1].trim().parse().map_err(|_| Error::parse(line, "bad object_id"))?;
        let label = match record[2].trim() {
            "human" => HUMAN,
            "non_human" => NON_HUMAN,
            other => return Err(Error::parse(line, format!("unknown class `{other}`"))),
        };
        out.push(ObjectLabel { frame_id, object_id, label });
    }
    Ok(out)
}
