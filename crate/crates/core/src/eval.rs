//! Classification metrics, clustering-quality summaries, latency statistics
//! and temperature-log analysis. People are the positive class throughout.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use crate::cluster::{adaptive_epsilon, cluster_adaptive, silhouette};
use crate::error::{Error, Result};
use crate::nn::HUMAN;
use crate::point::{preprocess, Frame, RoiConfig};

/// F1 from confusion counts; 0 when precision or recall is undefined or both are 0.
pub fn f1_score(tp: usize, fp: usize, fn_: usize) -> f64 {
    if tp + fp == 0 || tp + fn_ == 0 {
        return 0.0;
    }
    let precision = tp as f64 / (tp + fp) as f64;
    let recall = tp as f64 / (tp + fn_) as f64;
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

/// Confusion counts and the metrics derived from them. A metric whose
/// denominator is zero is reported as 0 and listed in `undefined`.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    pub fn_: usize,
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub undefined: Vec<&'static str>,
}

impl MetricsReport {
    pub fn from_counts(tp: usize, fp: usize, tn: usize, fn_: usize) -> Result<Self> {
        let n = tp + fp + tn + fn_;
        if n == 0 {
            return Err(Error::EmptyInput("predictions"));
        }
        let mut undefined = Vec::new();
        let mut ratio = |num: usize, den: usize, name| {
            if den == 0 {
                undefined.push(name);
                0.0
            } else {
                num as f64 / den as f64
            }
        };
        let precision = ratio(tp, tp + fp, "precision");
        let recall = ratio(tp, tp + fn_, "recall");
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            undefined.push("f1");
            0.0
        };
        Ok(MetricsReport {
            tp,
            fp,
            tn,
            fn_,
            accuracy: (tp + tn) as f64 / n as f64,
            precision,
            recall,
            f1,
            undefined,
        })
    }

    pub fn total(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }
}

/// Metrics for predicted against true labels; [`HUMAN`] is positive and every
/// other label negative.
pub fn compute_metrics(predictions: &[usize], truth: &[usize]) -> Result<MetricsReport> {
    if predictions.len() != truth.len() {
        return Err(Error::LengthMismatch { expected: truth.len(), got: predictions.len() });
    }
    let (mut tp, mut fp, mut tn, mut fn_) = (0, 0, 0, 0);
    for (&p, &t) in predictions.iter().zip(truth) {
        match (p == HUMAN, t == HUMAN) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, false) => tn += 1,
            (false, true) => fn_ += 1,
        }
    }
    MetricsReport::from_counts(tp, fp, tn, fn_)
}

fn mean_std(values: &[f64]) -> Option<(f64, f64)> {
    if values.is_empty() {
        return None;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    Some((mean, libm::sqrt(var)))
}

/// Silhouette statistics over frames that produced at least two clusters.
#[derive(Debug, Clone, PartialEq)]
pub struct SilhouetteSummary {
    /// Population mean and standard deviation; `None` when no frame qualified.
    pub mean: Option<f64>,
    pub std: Option<f64>,
    pub n_scored: usize,
    /// Frames with one cluster or none.
    pub n_excluded: usize,
}

impl SilhouetteSummary {
    /// Summary of per-frame scores, `None` marking excluded frames.
    pub fn from_scores(scores: &[Option<f64>]) -> Self {
        let kept: Vec<f64> = scores.iter().flatten().copied().collect();
        let stats = mean_std(&kept);
        SilhouetteSummary {
            mean: stats.map(|s| s.0),
            std: stats.map(|s| s.1),
            n_scored: kept.len(),
            n_excluded: scores.len() - kept.len(),
        }
    }
}

/// Silhouette of one frame after preprocessing and adaptive clustering, or
/// `None` when fewer than two clusters were found.
pub fn frame_silhouette(frame: &Frame, roi: &RoiConfig, min_pts: usize) -> Result<Option<f64>> {
    let points = preprocess(frame, roi).points;
    let clustering = cluster_adaptive(&points, min_pts)?;
    if clustering.assignment.n_clusters < 2 {
        return Ok(None);
    }
    silhouette(&points, &clustering.assignment).map(Some)
}

pub fn silhouette_summary(frames: &[Frame], roi: &RoiConfig, min_pts: usize) -> Result<SilhouetteSummary> {
    if frames.is_empty() {
        return Err(Error::EmptyInput("frames"));
    }
    let scores = frames.iter().map(|f| frame_silhouette(f, roi, min_pts)).collect::<Result<Vec<_>>>()?;
    Ok(SilhouetteSummary::from_scores(&scores))
}

/// Default elbow histogram bin width in meters.
pub const ELBOW_BIN_WIDTH: f64 = 0.02;

/// Counts of per-frame elbow values in left-inclusive bins
/// `[k * width, (k + 1) * width)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ElbowHistogram {
    pub bin_width: f64,
    /// Bin index `k` to count; only occupied bins are present.
    pub counts: BTreeMap<i64, usize>,
    /// Frames too small to produce an elbow.
    pub n_missing: usize,
}

impl ElbowHistogram {
    pub fn new(bin_width: f64) -> Result<Self> {
        if !(bin_width > 0.0 && bin_width.is_finite()) {
            return Err(Error::InvalidParameter("bin width must be positive"));
        }
        Ok(ElbowHistogram { bin_width, counts: BTreeMap::new(), n_missing: 0 })
    }

    /// Bin index of `value`. The small offset keeps values that sit on an edge
    /// up to rounding, such as 0.06, in the bin they start.
    pub fn bin_of(&self, value: f64) -> i64 {
        libm::floor(value / self.bin_width + 1e-9) as i64
    }

    pub fn add(&mut self, value: f64) {
        *self.counts.entry(self.bin_of(value)).or_insert(0) += 1;
    }

    /// `(lower edge, upper edge, count)` for each occupied bin, ascending.
    pub fn bins(&self) -> Vec<(f64, f64, usize)> {
        self.counts
            .iter()
            .map(|(&k, &c)| (k as f64 * self.bin_width, (k + 1) as f64 * self.bin_width, c))
            .collect()
    }

    pub fn total(&self) -> usize {
        self.counts.values().sum()
    }
}

pub fn elbow_histogram(frames: &[Frame], roi: &RoiConfig, min_pts: usize, bin_width: f64) -> Result<ElbowHistogram> {
    if frames.is_empty() {
        return Err(Error::EmptyInput("frames"));
    }
    let mut hist = ElbowHistogram::new(bin_width)?;
    for f in frames {
        match adaptive_epsilon(&preprocess(f, roi).points, min_pts)? {
            Some(e) => hist.add(e.epsilon),
            None => hist.n_missing += 1,
        }
    }
    Ok(hist)
}

/// The per-capture real-time budget in milliseconds (60 captures per second).
pub const LATENCY_BUDGET_MS: f64 = 16.0;

#[derive(Debug, Clone, PartialEq)]
pub struct LatencyReport {
    pub n: usize,
    pub mean_ms: f64,
    pub p50_ms: f64,
    pub p95_ms: f64,
    pub max_ms: f64,
    pub budget_ms: f64,
    /// `p95_ms < budget_ms`.
    pub pass: bool,
}

impl LatencyReport {
    /// Statistics over measured (post warm-up) per-inference times.
    /// Percentiles use the nearest-rank definition.
    pub fn from_samples(samples_ms: &[f64], budget_ms: f64) -> Result<Self> {
        if samples_ms.is_empty() {
            return Err(Error::EmptyInput("latency samples"));
        }
        if samples_ms.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::InvalidParameter("latency samples must be finite and non-negative"));
        }
        let mut sorted = samples_ms.to_vec();
        sorted.sort_by(f64::total_cmp);
        let n = sorted.len();
        let rank = |p: f64| sorted[(libm::ceil(p * n as f64) as usize).clamp(1, n) - 1];
        let p95 = rank(0.95);
        Ok(LatencyReport {
            n,
            mean_ms: sorted.iter().sum::<f64>() / n as f64,
            p50_ms: rank(0.5),
            p95_ms: p95,
            max_ms: sorted[n - 1],
            budget_ms,
            pass: p95 < budget_ms,
        })
    }
}

pub const SECONDS_PER_HOUR: i64 = 3600;

/// UTC hour containing `t` (seconds since the Unix epoch), as its start time.
pub fn hour_floor(t: i64) -> i64 {
    t.div_euclid(SECONDS_PER_HOUR) * SECONDS_PER_HOUR
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HourlyMean {
    /// Start of the hour, Unix seconds.
    pub hour: i64,
    pub mean: f64,
    pub count: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TemperatureStats {
    pub max: f64,
    pub min: f64,
    pub mean: f64,
    pub count: usize,
}

/// Temperature samples `(unix seconds, celsius)` with strictly increasing
/// timestamps.
#[derive(Debug, Clone, PartialEq)]
pub struct TemperatureSeries {
    samples: Vec<(i64, f64)>,
    /// Later samples dropped for repeating an earlier timestamp.
    pub n_duplicates: usize,
}

impl TemperatureSeries {
    /// Sorts by time (stable) and keeps the first sample of any repeated
    /// timestamp. Non-finite readings are rejected.
    pub fn new(mut samples: Vec<(i64, f64)>) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::EmptyInput("temperature samples"));
        }
        if samples.iter().any(|(_, c)| !c.is_finite()) {
            return Err(Error::InvalidParameter("temperature readings must be finite"));
        }
        samples.sort_by_key(|s| s.0);
        let before = samples.len();
        samples.dedup_by_key(|s| s.0);
        Ok(TemperatureSeries { n_duplicates: before - samples.len(), samples })
    }

    pub fn samples(&self) -> &[(i64, f64)] {
        &self.samples
    }

    pub fn stats(&self) -> TemperatureStats {
        let values = self.samples.iter().map(|s| s.1);
        TemperatureStats {
            max: values.clone().fold(f64::NEG_INFINITY, f64::max),
            min: values.clone().fold(f64::INFINITY, f64::min),
            mean: values.sum::<f64>() / self.samples.len() as f64,
            count: self.samples.len(),
        }
    }

    /// Mean of the samples in each UTC hour that has any.
    pub fn hourly(&self) -> Vec<HourlyMean> {
        let mut out: Vec<HourlyMean> = Vec::new();
        let mut sum = 0.0;
        for &(t, c) in &self.samples {
            let hour = hour_floor(t);
            match out.last_mut() {
                Some(last) if last.hour == hour => {
                    sum += c;
                    last.count += 1;
                    last.mean = sum / last.count as f64;
                }
                _ => {
                    sum = c;
                    out.push(HourlyMean { hour, mean: c, count: 1 });
                }
            }
        }
        out
    }
}

/// Hourly pole-minus-weather differences on the hours both series cover.
/// Weather timestamps are floored to their hour; a repeated hour keeps its
/// first reading.
pub fn hourly_difference(pole: &[HourlyMean], weather: &[(i64, f64)]) -> Vec<(i64, f64)> {
    let mut by_hour = BTreeMap::new();
    for &(t, c) in weather {
        by_hour.entry(hour_floor(t)).or_insert(c);
    }
    pole.iter().filter_map(|h| by_hour.get(&h.hour).map(|w| (h.hour, h.mean - w))).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::NON_HUMAN;
    use crate::point::Point3;
    use alloc::vec;
    use proptest::prelude::*;

    #[test]
    fn all_correct() {
        let truth = [1, 0, 1, 1, 0];
        let m = compute_metrics(&truth, &truth).unwrap();
        assert_eq!((m.accuracy, m.f1, m.precision, m.recall), (1.0, 1.0, 1.0, 1.0));
        assert!(m.undefined.is_empty());
    }

    #[test]
    fn hand_confusion_matrix() {
        let m = MetricsReport::from_counts(3, 1, 4, 2).unwrap();
        assert_eq!(m.precision, 0.75);
        assert_eq!(m.recall, 0.6);
        assert_eq!(m.accuracy, 0.7);
        assert!((m.f1 - 2.0 / 3.0).abs() < 1e-12);

        // Same counts through labels.
        let mut pred = vec![];
        let mut truth = vec![];
        for (p, t, n) in [(1, 1, 3), (1, 0, 1), (0, 0, 4), (0, 1, 2)] {
            pred.extend(core::iter::repeat(p).take(n));
            truth.extend(core::iter::repeat(t).take(n));
        }
        assert_eq!(compute_metrics(&pred, &truth).unwrap(), m);
    }

    #[test]
    fn undefined_metrics_are_flagged() {
        let m = compute_metrics(&[NON_HUMAN; 3], &[NON_HUMAN; 3]).unwrap();
        assert_eq!((m.precision, m.recall, m.f1, m.accuracy), (0.0, 0.0, 0.0, 1.0));
        assert_eq!(m.undefined, vec!["precision", "recall", "f1"]);
        assert!(compute_metrics(&[1], &[1, 0]).is_err());
        assert!(compute_metrics(&[], &[]).is_err());
    }

    proptest! {
        #[test]
        fn metric_identities(labels in proptest::collection::vec((0usize..2, 0usize..2), 1..80)) {
            let (p, t): (Vec<_>, Vec<_>) = labels.into_iter().unzip();
            let m = compute_metrics(&p, &t).unwrap();
            prop_assert_eq!(m.total(), p.len());
            prop_assert_eq!(m.accuracy, (m.tp + m.tn) as f64 / p.len() as f64);
            if m.precision + m.recall > 0.0 {
                prop_assert!((m.f1 - 2.0 * m.precision * m.recall / (m.precision + m.recall)).abs() < 1e-12);
            }
            prop_assert_eq!(m.f1, f1_score(m.tp, m.fp, m.fn_));
        }
    }

    fn blob(cx: f64, n: usize, z: f64) -> Vec<Point3> {
        (0..n).map(|i| Point3::new(cx + 0.05 * (i % 4) as f64, 0.05 * (i / 4) as f64, z)).collect()
    }

    fn frame(points: Vec<Point3>) -> Frame {
        Frame::new(0, 0.0, points)
    }

    #[test]
    fn single_cluster_frames_are_excluded() {
        let roi = RoiConfig::default();
        let frames = vec![frame(blob(3.0, 16, -1.0)), frame(vec![])];
        let s = silhouette_summary(&frames, &roi, 5).unwrap();
        assert_eq!((s.mean, s.std, s.n_scored, s.n_excluded), (None, None, 0, 2));
        assert!(silhouette_summary(&[], &roi, 5).is_err());
    }

    #[test]
    fn summary_is_direct_average() {
        let roi = RoiConfig::default();
        let a = frame([blob(3.0, 16, -1.0), blob(6.0, 16, -1.0)].concat());
        let b = frame([blob(3.0, 16, -1.0), blob(3.6, 16, -1.0)].concat());
        let sa = frame_silhouette(&a, &roi, 5).unwrap().unwrap();
        let sb = frame_silhouette(&b, &roi, 5).unwrap().unwrap();
        let s = silhouette_summary(&[a, b], &roi, 5).unwrap();
        assert!((s.mean.unwrap() - (sa + sb) / 2.0).abs() < 1e-12);
        assert!((s.std.unwrap() - (sa - sb).abs() / 2.0).abs() < 1e-12);
        assert_eq!(s.n_excluded, 0);
    }

    #[test]
    fn histogram_edges_are_left_inclusive() {
        let mut h = ElbowHistogram::new(0.02).unwrap();
        for v in [0.0, 0.019999, 0.02, 0.06, 0.07] {
            h.add(v);
        }
        assert_eq!(h.counts, BTreeMap::from([(0, 2), (1, 1), (3, 2)]));
        let bins = h.bins();
        assert!((bins[2].0 - 0.06).abs() < 1e-12 && (bins[2].1 - 0.08).abs() < 1e-12);
    }

    #[test]
    fn identical_frames_share_a_bin() {
        let roi = RoiConfig::default();
        let f = frame([blob(3.0, 16, -1.0), blob(6.0, 16, -1.0)].concat());
        let h = elbow_histogram(&vec![f; 5], &roi, 5, ELBOW_BIN_WIDTH).unwrap();
        assert_eq!(h.counts.len(), 1);
        assert_eq!(h.total(), 5);
    }

    #[test]
    fn histogram_matches_direct_pass() {
        let roi = RoiConfig::default();
        let frames: Vec<Frame> = (1..8)
            .map(|k| {
                let spacing = 0.02 * k as f64;
                let pts: Vec<Point3> = (0..30)
                    .map(|i| Point3::new(2.0 + spacing * (i % 6) as f64, spacing * (i / 6) as f64, -1.0))
                    .chain([Point3::new(9.0, 2.0, 0.0), Point3::new(11.0, -2.0, 0.0)])
                    .collect();
                frame(pts)
            })
            .chain([frame(vec![Point3::new(3.0, 0.0, 0.0)])])
            .collect();
        let h = elbow_histogram(&frames, &roi, 5, 0.02).unwrap();
        let mut oracle = BTreeMap::new();
        for f in &frames[..7] {
            let e = adaptive_epsilon(&f.points, 5).unwrap().unwrap().epsilon;
            *oracle.entry(libm::floor(e / 0.02 + 1e-9) as i64).or_insert(0usize) += 1;
        }
        assert_eq!(h.counts, oracle);
        assert_eq!(h.n_missing, 1);
    }

    #[test]
    fn latency_percentiles() {
        let samples: Vec<f64> = (1..=100).map(f64::from).collect();
        let r = LatencyReport::from_samples(&samples, 96.0).unwrap();
        assert_eq!((r.p50_ms, r.p95_ms, r.max_ms, r.mean_ms), (50.0, 95.0, 100.0, 50.5));
        assert!(r.pass);
        assert!(!LatencyReport::from_samples(&samples, 95.0).unwrap().pass);
        assert!(LatencyReport::from_samples(&[], 16.0).is_err());
    }

    proptest! {
        #[test]
        fn latency_order(samples in proptest::collection::vec(0.0f64..50.0, 1..200)) {
            let r = LatencyReport::from_samples(&samples, LATENCY_BUDGET_MS).unwrap();
            prop_assert!(r.p50_ms <= r.p95_ms && r.p95_ms <= r.max_ms);
        }
    }

    #[test]
    fn constant_log() {
        let s = TemperatureSeries::new((0..50).map(|i| (i * 1200, 40.0)).collect()).unwrap();
        assert_eq!(s.stats(), TemperatureStats { max: 40.0, min: 40.0, mean: 40.0, count: 50 });
        assert!(s.hourly().iter().all(|h| h.mean == 40.0));
    }

    #[test]
    fn three_samples_in_one_hour() {
        let s = TemperatureSeries::new(vec![(7200 + 10, 30.0), (7200 + 5, 10.0), (7200 + 3599, 20.0)]).unwrap();
        assert_eq!(s.hourly(), vec![HourlyMean { hour: 7200, mean: 20.0, count: 3 }]);
    }

    #[test]
    fn duplicates_and_ordering() {
        let s = TemperatureSeries::new(vec![(10, 1.0), (5, 2.0), (10, 3.0)]).unwrap();
        assert_eq!(s.samples(), &[(5, 2.0), (10, 1.0)]);
        assert_eq!(s.n_duplicates, 1);
        assert!(s.samples().windows(2).all(|w| w[0].0 < w[1].0));
        assert!(TemperatureSeries::new(vec![]).is_err());
    }

    #[test]
    fn negative_times_floor_down() {
        assert_eq!(hour_floor(-1), -3600);
        assert_eq!(hour_floor(3599), 0);
    }

    #[test]
    fn difference_aligns_on_hours() {
        let pole = [
            HourlyMean { hour: 0, mean: 30.0, count: 1 },
            HourlyMean { hour: 3600, mean: 35.0, count: 2 },
            HourlyMean { hour: 7200, mean: 40.0, count: 1 },
        ];
        let weather = [(3600 + 60, 20.0), (7200, 22.5), (10800, 25.0)];
        assert_eq!(hourly_difference(&pole, &weather), vec![(3600, 15.0), (7200, 17.5)]);
    }

    proptest! {
        #[test]
        fn hourly_conserves_mass(samples in proptest::collection::vec((0i64..200_000, 10.0f64..60.0), 1..300)) {
            let s = TemperatureSeries::new(samples).unwrap();
            let total: f64 = s.samples().iter().map(|x| x.1).sum();
            let resampled: f64 = s.hourly().iter().map(|h| h.mean * h.count as f64).sum();
            prop_assert!((total - resampled).abs() < 1e-9 * total.abs().max(1.0));
            prop_assert_eq!(s.hourly().iter().map(|h| h.count).sum::<usize>(), s.samples().len());
        }
    }
}
