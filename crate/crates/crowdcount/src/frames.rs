//! Frame files: CSV with one point per row, or NDJSON with one frame per line.
//!
//! ```text
//! frame_id,timestamp,x,y,z
//! 0,0.0,1.0,2.0,-1.0
//! ```
//!
//! ```text
//! {"frame_id":0,"timestamp":0.0,"points":[[1.0,2.0,-1.0]]}
//! ```
//!
//! CSV rows of a frame must be contiguous and the header line is optional on
//! input. CSV cannot carry a frame without points, so such frames are skipped
//! on output. Floats are written in their shortest round-trip form.

use std::collections::HashSet;
use std::fmt;
use std::io::{BufRead, Write};
use std::path::Path;
use std::str::FromStr;

use crowdcount_core::{Frame, Point3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const CSV_HEADER: [&str; 5] = ["frame_id", "timestamp", "x", "y", "z"];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FrameFormat {
    Csv,
    Ndjson,
}

impl FrameFormat {
    /// Guesses the format from a file extension.
    pub fn from_path(path: &Path) -> Option<Self> {
        match path.extension()?.to_str()? {
            "csv" => Some(FrameFormat::Csv),
            "ndjson" | "jsonl" => Some(FrameFormat::Ndjson),
            _ => None,
        }
    }
}

impl FromStr for FrameFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(FrameFormat::Csv),
            "ndjson" | "jsonl" => Ok(FrameFormat::Ndjson),
            other => Err(Error::Usage(format!("unknown frame format `{other}` (expected csv or ndjson)"))),
        }
    }
}

impl fmt::Display for FrameFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FrameFormat::Csv => "csv",
            FrameFormat::Ndjson => "ndjson",
        })
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub(crate) struct FrameRecord {
    pub frame_id: u64,
    pub timestamp: f64,
    pub points: Vec<[f64; 3]>,
}

impl FrameRecord {
    pub fn from_frame(frame: &Frame) -> Self {
        FrameRecord {
            frame_id: frame.frame_id,
            timestamp: frame.timestamp,
            points: frame.points.iter().map(|p| p.to_array()).collect(),
        }
    }

    pub fn into_frame(self, line: u64) -> Result<Frame> {
        if !self.timestamp.is_finite() {
            return Err(Error::parse(line, "timestamp must be finite"));
        }
        let points = self
            .points
            .into_iter()
            .map(|[x, y, z]| finite_point(x, y, z).ok_or_else(|| Error::parse(line, "coordinates must be finite")))
            .collect::<Result<Vec<_>>>()?;
        Ok(Frame::new(self.frame_id, self.timestamp, points))
    }
}

fn finite_point(x: f64, y: f64, z: f64) -> Option<Point3> {
    let p = Point3::new(x, y, z);
    p.is_finite().then_some(p)
}

/// Streams frames out of a reader, one at a time.
pub struct FrameReader<R> {
    source: R,
    format: FrameFormat,
    line: u64,
    buf: String,
    /// CSV frame still being assembled, with the line it started on.
    open: Option<(Frame, u64)>,
    started: u64,
    done: bool,
}

impl<R: BufRead> FrameReader<R> {
    pub fn new(source: R, format: FrameFormat) -> Self {
        FrameReader { source, format, line: 0, buf: String::new(), open: None, started: 0, done: false }
    }

    /// Advances to the next non-blank line; false at end of input.
    fn advance(&mut self) -> Result<bool> {
        loop {
            self.buf.clear();
            if self.source.read_line(&mut self.buf)? == 0 {
                return Ok(false);
            }
            self.line += 1;
            if !self.buf.trim().is_empty() {
                return Ok(true);
            }
        }
    }

    /// Line on which the most recently returned frame started.
    pub fn frame_line(&self) -> u64 {
        self.started
    }

    fn next_ndjson(&mut self) -> Result<Option<Frame>> {
        if !self.advance()? {
            return Ok(None);
        }
        self.started = self.line;
        let record: FrameRecord =
            serde_json::from_str(self.buf.trim()).map_err(|e| Error::parse(self.line, e.to_string()))?;
        record.into_frame(self.line).map(Some)
    }

    fn next_csv(&mut self) -> Result<Option<Frame>> {
        loop {
            if !self.advance()? {
                return Ok(self.open.take().map(|(f, start)| {
                    self.started = start;
                    f
                }));
            }
            let line = self.line;
            let fields: Vec<&str> = self.buf.trim().split(',').map(str::trim).collect();
            if fields.first() == Some(&CSV_HEADER[0]) {
                if self.open.is_some() || fields != CSV_HEADER {
                    return Err(Error::parse(line, "unexpected header row"));
                }
                continue;
            }
            let (id, timestamp, point) = parse_csv_row(&fields, line)?;
            match &mut self.open {
                Some((frame, _)) if frame.frame_id == id => {
                    if frame.timestamp.to_bits() != timestamp.to_bits() {
                        return Err(Error::parse(line, format!("frame {id} changes timestamp")));
                    }
                    frame.points.push(point);
                }
                open => {
                    if let Some((frame, start)) = open.replace((Frame::new(id, timestamp, vec![point]), line)) {
                        self.started = start;
                        return Ok(Some(frame));
                    }
                }
            }
        }
    }
}

fn parse_csv_row(fields: &[&str], line: u64) -> Result<(u64, f64, Point3)> {
    if fields.len() != CSV_HEADER.len() {
        return Err(Error::parse(line, format!("expected 5 fields, found {}", fields.len())));
    }
    let id = fields[0].parse::<u64>().map_err(|_| Error::parse(line, format!("bad frame_id `{}`", fields[0])))?;
    let mut values = [0.0; 4];
    for (v, (name, text)) in values.iter_mut().zip(CSV_HEADER[1..].iter().zip(&fields[1..])) {
        *v = text.parse::<f64>().map_err(|_| Error::parse(line, format!("bad {name} `{text}`")))?;
        if !v.is_finite() {
            return Err(Error::parse(line, format!("{name} must be finite")));
        }
    }
    Ok((id, values[0], Point3::new(values[1], values[2], values[3])))
}

impl<R: BufRead> Iterator for FrameReader<R> {
    type Item = Result<Frame>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.done {
            return None;
        }
        let next = match self.format {
            FrameFormat::Csv => self.next_csv(),
            FrameFormat::Ndjson => self.next_ndjson(),
        };
        match next {
            Ok(Some(frame)) => Some(Ok(frame)),
            Ok(None) => {
                self.done = true;
                None
            }
            Err(e) => {
                self.done = true;
                Some(Err(e))
            }
        }
    }
}

/// Reads a whole stream. Frame ids must be unique.
pub fn read_frames<R: BufRead>(source: R, format: FrameFormat) -> Result<Vec<Frame>> {
    let mut reader = FrameReader::new(source, format);
    let mut seen = HashSet::new();
    let mut frames = Vec::new();
    while let Some(frame) = reader.next() {
        let frame = frame?;
        if !seen.insert(frame.frame_id) {
            return Err(Error::parse(reader.frame_line(), format!("frame {} appears twice", frame.frame_id)));
        }
        frames.push(frame);
    }
    Ok(frames)
}

/// Writes frames one at a time; the CSV header goes out on construction.
pub struct FrameWriter<W: Write> {
    sink: W,
    format: FrameFormat,
}

impl<W: Write> FrameWriter<W> {
    pub fn new(mut sink: W, format: FrameFormat) -> Result<Self> {
        if format == FrameFormat::Csv {
            writeln!(sink, "{}", CSV_HEADER.join(","))?;
        }
        Ok(FrameWriter { sink, format })
    }

    pub fn write(&mut self, frame: &Frame) -> Result<()> {
        match self.format {
            FrameFormat::Ndjson => {
                serde_json::to_writer(&mut self.sink, &FrameRecord::from_frame(frame)).map_err(std::io::Error::from)?;
                self.sink.write_all(b"\n")?;
            }
            FrameFormat::Csv => {
                for p in &frame.points {
                    writeln!(self.sink, "{},{},{},{},{}", frame.frame_id, frame.timestamp, p.x, p.y, p.z)?;
                }
            }
        }
        Ok(())
    }

    pub fn finish(mut self) -> Result<W> {
        self.sink.flush()?;
        Ok(self.sink)
    }
}

pub fn write_frames<W: Write>(sink: W, frames: &[Frame], format: FrameFormat) -> Result<W> {
    let mut writer = FrameWriter::new(sink, format)?;
    for f in frames {
        writer.write(f)?;
    }
    writer.finish()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str, format: FrameFormat) -> Result<Vec<Frame>> {
        read_frames(text.as_bytes(), format)
    }

    #[test]
    fn single_csv_row() {
        let frames = parse("0,0.0,1.0,2.0,-1.0\n", FrameFormat::Csv).unwrap();
        assert_eq!(frames, vec![Frame::new(0, 0.0, vec![Point3::new(1.0, 2.0, -1.0)])]);
    }

    #[test]
    fn empty_sources() {
        assert!(parse("", FrameFormat::Csv).unwrap().is_empty());
        assert!(parse("frame_id,timestamp,x,y,z\n", FrameFormat::Csv).unwrap().is_empty());
        assert!(parse("\n\n", FrameFormat::Ndjson).unwrap().is_empty());
    }

    #[test]
    fn csv_groups_contiguous_rows() {
        let text = "frame_id,timestamp,x,y,z\n3,1.5,1,0,-1\n3,1.5,2,0,-1\n\n4,1.6,3,0,-1\n";
        let frames = parse(text, FrameFormat::Csv).unwrap();
        assert_eq!(frames.iter().map(|f| (f.frame_id, f.len())).collect::<Vec<_>>(), vec![(3, 2), (4, 1)]);
    }

    #[test]
    fn ndjson_keeps_empty_frames() {
        let text = concat!(
            r#"{"frame_id":1,"timestamp":0.5,"points":[[1,2,3],[4,5,6],[7,8,9]]}"#,
            "\n",
            r#"{"frame_id":2,"timestamp":0.6,"points":[]}"#,
            "\n"
        );
        let frames = parse(text, FrameFormat::Ndjson).unwrap();
        assert_eq!(frames.iter().map(Frame::len).collect::<Vec<_>>(), vec![3, 0]);
        let written = write_frames(Vec::new(), &frames, FrameFormat::Ndjson).unwrap();
        assert_eq!(parse(std::str::from_utf8(&written).unwrap(), FrameFormat::Ndjson).unwrap(), frames);
    }

    #[test]
    fn errors_name_the_line() {
        let cases = [
            ("0,0,1,2,-1\n0,0,1,2\n", FrameFormat::Csv, 2),
            ("0,0,1,2,-1\n\nx,0,1,2,3\n", FrameFormat::Csv, 3),
            ("0,0,1,2,-1\n0,0,1,nan,3\n", FrameFormat::Csv, 2),
            ("0,0,1,2,-1\n0,1,1,2,3\n", FrameFormat::Csv, 2),
            ("0,0,1,2,-1\nframe_id,timestamp,x,y,z\n", FrameFormat::Csv, 2),
            ("0,0,1,2,-1\n1,0,1,2,3\n0,0,1,2,3\n", FrameFormat::Csv, 3),
            ("{\"frame_id\":0,\"timestamp\":0,\"points\":[]}\n{\"frame_id\":1}\n", FrameFormat::Ndjson, 2),
            ("not json\n", FrameFormat::Ndjson, 1),
        ];
        for (text, format, line) in cases {
            match parse(text, format) {
                Err(Error::Parse { line: got, .. }) => assert_eq!(got, line, "{text:?}"),
                other => panic!("{text:?}: {other:?}"),
            }
        }
    }

    #[test]
    fn unknown_format_is_a_usage_error() {
        assert!(matches!("xml".parse::<FrameFormat>(), Err(Error::Usage(_))));
        assert_eq!(FrameFormat::from_path(Path::new("a/b.jsonl")), Some(FrameFormat::Ndjson));
        assert_eq!(FrameFormat::from_path(Path::new("frames")), None);
    }

    #[test]
    fn empty_list_writes_header_only_csv() {
        assert_eq!(write_frames(Vec::new(), &[], FrameFormat::Csv).unwrap(), b"frame_id,timestamp,x,y,z\n");
        assert!(write_frames(Vec::new(), &[], FrameFormat::Ndjson).unwrap().is_empty());
    }

    #[test]
    fn reader_streams_before_end_of_input() {
        let text = "{\"frame_id\":0,\"timestamp\":0,\"points\":[]}\nnot json\n";
        let mut reader = FrameReader::new(text.as_bytes(), FrameFormat::Ndjson);
        assert!(reader.next().unwrap().is_ok());
        assert!(reader.next().unwrap().is_err());
        assert!(reader.next().is_none());
    }
}
