//! Machine-readable reports (one JSON object per line) and their plain-text
//! tables.

use std::io::Write;

use crowdcount_core::eval::{LatencyReport, MetricsReport, SilhouetteSummary, TemperatureStats};
use crowdcount_core::pipeline::CountReport;
use serde::Serialize;

use crate::error::Result;

/// Writes `value` as one line of JSON.
pub fn write_line<W: Write + ?Sized, T: Serialize>(sink: &mut W, value: &T) -> Result<()> {
    serde_json::to_writer(&mut *sink, value).map_err(std::io::Error::from)?;
    sink.write_all(b"\n")?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsRecord {
    pub model: String,
    pub quantized: bool,
    pub split: String,
    pub n: usize,
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub undefined: Vec<&'static str>,
}

impl MetricsRecord {
    pub fn new(model: &str, quantized: bool, split: &str, m: &MetricsReport) -> Self {
        MetricsRecord {
            model: model.into(),
            quantized,
            split: split.into(),
            n: m.total(),
            tp: m.tp,
            fp: m.fp,
            tn: m.tn,
            fn_: m.fn_,
            accuracy: m.accuracy,
            precision: m.precision,
            recall: m.recall,
            f1: m.f1,
            undefined: m.undefined.clone(),
        }
    }

    pub fn table(&self) -> String {
        let mut s = format!(
            "model      {}{}\nsplit      {} ({} samples)\n",
            self.model,
            if self.quantized { " (8-bit)" } else { "" },
            self.split,
            self.n
        );
        s += &format!("confusion  tp {}  fp {}  tn {}  fn {}\n", self.tp, self.fp, self.tn, self.fn_);
        for (name, v) in [("accuracy", self.accuracy), ("precision", self.precision), ("recall", self.recall), ("f1", self.f1)] {
            let note = if self.undefined.contains(&name) { "  (undefined)" } else { "" };
            s += &format!("{name:<10} {v:.4}{note}\n");
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LatencyRecord {
    pub model: String,
    pub quantized: bool,
    pub n: usize,
    pub warmup: usize,
    pub mean_ms: f64,
    pub p50_ms: f64,
    pub p95_ms: f64,
    pub max_ms: f64,
    pub budget_ms: f64,
    pub pass: bool,
}

impl LatencyRecord {
    pub fn new(model: &str, quantized: bool, warmup: usize, r: &LatencyReport) -> Self {
        LatencyRecord {
            model: model.into(),
            quantized,
            n: r.n,
            warmup,
            mean_ms: r.mean_ms,
            p50_ms: r.p50_ms,
            p95_ms: r.p95_ms,
            max_ms: r.max_ms,
            budget_ms: r.budget_ms,
            pass: r.pass,
        }
    }

    pub fn table(&self) -> String {
        format!(
            "model    {}{}\nruns     {} (after {} warm-up)\nmean     {:.4} ms\np50      {:.4} ms\np95      {:.4} ms\nmax      {:.4} ms\nbudget   {} ms  {}\n",
            self.model,
            if self.quantized { " (8-bit)" } else { "" },
            self.n,
            self.warmup,
            self.mean_ms,
            self.p50_ms,
            self.p95_ms,
            self.max_ms,
            self.budget_ms,
            if self.pass { "pass" } else { "FAIL" }
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DecisionRecord {
    pub cluster: usize,
    pub n_points: usize,
    pub human: bool,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CountRecord {
    pub frame_id: u64,
    pub timestamp: f64,
    pub n_points: usize,
    pub epsilon: Option<f64>,
    pub n_clusters: usize,
    pub n_humans: usize,
    pub clusters: Vec<DecisionRecord>,
}

impl From<&CountReport> for CountRecord {
    fn from(r: &CountReport) -> Self {
        CountRecord {
            frame_id: r.frame_id,
            timestamp: r.timestamp,
            n_points: r.n_points,
            epsilon: r.epsilon,
            n_clusters: r.n_clusters,
            n_humans: r.n_humans,
            clusters: r
                .clusters
                .iter()
                .map(|d| DecisionRecord { cluster: d.cluster, n_points: d.n_points, human: d.is_human, score: d.score })
                .collect(),
        }
    }
}

impl CountRecord {
    pub const TABLE_HEADER: &'static str = "frame_id   timestamp  points  clusters  humans";

    pub fn table_row(&self) -> String {
        format!(
            "{:>8}  {:>10.3}  {:>6}  {:>8}  {:>6}",
            self.frame_id, self.timestamp, self.n_points, self.n_clusters, self.n_humans
        )
    }
}

/// Clustering of one frame.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClusterFrameRecord {
    #[serde(rename = "type")]
    pub kind: &'static str,
    pub frame_id: u64,
    pub n_points: usize,
    pub epsilon: Option<f64>,
    /// The k-distance curve had no usable bend.
    pub degenerate: bool,
    pub n_clusters: usize,
    pub n_noise: usize,
    pub cluster_sizes: Vec<usize>,
    pub silhouette: Option<f64>,
    /// Cluster index of each kept point, -1 for noise.
    pub labels: Vec<i32>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HistogramBin {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
}

/// Dataset-level clustering quality.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClusterSummaryRecord {
    #[serde(rename = "type")]
    pub kind: &'static str,
    pub n_frames: usize,
    pub silhouette_mean: Option<f64>,
    pub silhouette_std: Option<f64>,
    pub n_scored: usize,
    pub n_excluded: usize,
    pub elbow_bin_width: f64,
    pub elbow_histogram: Vec<HistogramBin>,
}

impl ClusterSummaryRecord {
    pub fn new(n_frames: usize, s: &SilhouetteSummary, bin_width: f64, bins: Vec<(f64, f64, usize)>) -> Self {
        ClusterSummaryRecord {
            kind: "summary",
            n_frames,
            silhouette_mean: s.mean,
            silhouette_std: s.std,
            n_scored: s.n_scored,
            n_excluded: s.n_excluded,
            elbow_bin_width: bin_width,
            elbow_histogram: bins.into_iter().map(|(lo, hi, count)| HistogramBin { lo, hi, count }).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TempStatsRecord {
    #[serde(rename = "type")]
    pub kind: &'static str,
    pub count: usize,
    pub max: f64,
    pub min: f64,
    pub mean: f64,
    pub skipped_rows: usize,
    pub duplicate_timestamps: usize,
    pub weather_skipped_rows: Option<usize>,
}

impl TempStatsRecord {
    pub fn new(s: &TemperatureStats, skipped: usize, duplicates: usize, weather_skipped: Option<usize>) -> Self {
        TempStatsRecord {
            kind: "stats",
            count: s.count,
            max: s.max,
            min: s.min,
            mean: s.mean,
            skipped_rows: skipped,
            duplicate_timestamps: duplicates,
            weather_skipped_rows: weather_skipped,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HourlyRecord {
    #[serde(rename = "type")]
    pub kind: &'static str,
    pub hour: String,
    pub celsius: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub count: Option<usize>,
}
