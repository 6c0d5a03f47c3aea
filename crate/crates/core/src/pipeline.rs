//! End-to-end people counting: preprocessing, adaptive DBSCAN and per-cluster
//! classification, plus the dataset and training helpers shared by the
//! command-line tools.

use alloc::vec::Vec;

use rand::seq::SliceRandom;

use crate::cluster::{cluster_adaptive, extract_clusters};
use crate::error::{Error, Result};
use crate::eval::{compute_metrics, MetricsReport};
use crate::features::{extract_features, fit_normalizer, apply_normalizer, FeatureVector, SliceSpec};
use crate::nn::{
    argmax, build_autoencoder, build_cnn2d, choose_threshold, reconstruction_error, recalibrate_batch_norm, train, Inference, Loss,
    ModelKind, Targets, TrainConfig, TrainedModel, HUMAN, NON_HUMAN,
};
use crate::point::{preprocess, Frame, Point3, RoiConfig};
use crate::projection::{cluster_to_image, GroundPool, PointMatrix, TARGET_POINTS};
use crate::rng::{derive_seed, seeded};

/// Settings for every pipeline stage. Path handling lives with the tools.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PipelineConfig {
    /// Region of interest; its `z_min` is the ground cut.
    pub roi: RoiConfig,
    pub min_pts: usize,
    pub slice: SliceSpec,
    /// Points per cluster after enlargement; fixed by the CNN input size.
    pub projection_target: usize,
    pub train: TrainConfig,
    /// Master seed for cluster enlargement.
    pub seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            roi: RoiConfig::default(),
            min_pts: 5,
            slice: SliceSpec::default(),
            projection_target: TARGET_POINTS,
            train: TrainConfig::default(),
            seed: 0,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        self.roi.validate()?;
        if self.min_pts == 0 {
            return Err(Error::InvalidParameter("min_pts must be at least 1"));
        }
        SliceSpec::new(self.slice.dz)?;
        if self.projection_target != TARGET_POINTS {
            return Err(Error::InvalidParameter("projection target must match the 18x18 CNN input (324)"));
        }
        self.train.validate()
    }
}

/// The decision for one cluster.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterDecision {
    pub cluster: usize,
    pub n_points: usize,
    pub is_human: bool,
    /// Reconstruction error for the autoencoder, human probability for the CNN.
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CountReport {
    pub frame_id: u64,
    pub timestamp: f64,
    /// Points left after ground removal and the region of interest.
    pub n_points: usize,
    /// Adaptive DBSCAN radius, if the frame was large enough to estimate one.
    pub epsilon: Option<f64>,
    pub n_clusters: usize,
    pub n_humans: usize,
    pub clusters: Vec<ClusterDecision>,
}

/// Feature vector of a cluster seen from a sensor at the origin.
pub fn cluster_features(points: &[Point3], slice: &SliceSpec) -> Result<FeatureVector> {
    extract_features(points, slice, Point3::ORIGIN)
}

/// Seed for enlarging cluster `index` of frame `frame_id`.
pub fn image_seed(master: u64, frame_id: u64, index: usize) -> u64 {
    derive_seed(derive_seed(master, frame_id), index as u64)
}

/// Flattened 18x18x6 projection of a cluster.
pub fn cluster_image(points: &[Point3], pool: &GroundPool, seed: u64) -> Result<Vec<f64>> {
    Ok(cluster_to_image(&PointMatrix::from_points(points)?, pool, seed)?.data)
}

/// Classifies one prepared input: a raw (unnormalized) feature vector for the
/// autoencoder, a projection image for the CNN. Returns the label and score as
/// in [`ClusterDecision`].
pub fn classify<M: Inference>(model: &M, input: &[f64]) -> Result<(usize, f64)> {
    match model.spec().kind {
        ModelKind::Autoencoder => {
            let threshold =
                model.threshold().ok_or(Error::InvalidParameter("autoencoder has no decision threshold"))?;
            let v = FeatureVector::from_slice(input)?;
            let x = match model.normalizer() {
                Some(stats) => apply_normalizer(&v, stats).0.to_vec(),
                None => v.0.to_vec(),
            };
            let e = reconstruction_error(model, &x)?;
            Ok((if e <= threshold { HUMAN } else { NON_HUMAN }, e))
        }
        _ => {
            let probs = model.infer(input)?;
            if probs.len() != 2 {
                return Err(Error::LengthMismatch { expected: 2, got: probs.len() });
            }
            Ok((argmax(&probs), probs[HUMAN]))
        }
    }
}

/// Counts people in one frame. `pool` is required by CNN models.
pub fn count_people<M: Inference>(
    frame: &Frame,
    model: &M,
    cfg: &PipelineConfig,
    pool: Option<&GroundPool>,
) -> Result<CountReport> {
    cfg.validate().map_err(|e| e.in_stage("config"))?;
    let points = preprocess(frame, &cfg.roi).points;
    let clustering = cluster_adaptive(&points, cfg.min_pts).map_err(|e| e.in_stage("cluster"))?;
    let clusters = extract_clusters(&points, &clustering.assignment).map_err(|e| e.in_stage("cluster"))?;
    let kind = model.spec().kind;
    let mut decisions = Vec::with_capacity(clusters.len());
    for (i, c) in clusters.iter().enumerate() {
        let input = match kind {
            ModelKind::Autoencoder => {
                cluster_features(c, &cfg.slice).map_err(|e| e.in_stage("features"))?.0.to_vec()
            }
            _ => {
                let pool = pool.ok_or(Error::EmptyPool).map_err(|e| e.in_stage("projection"))?;
                cluster_image(c, pool, image_seed(cfg.seed, frame.frame_id, i)).map_err(|e| e.in_stage("projection"))?
            }
        };
        let (label, score) = classify(model, &input).map_err(|e| e.in_stage("classify"))?;
        decisions.push(ClusterDecision { cluster: i, n_points: c.len(), is_human: label == HUMAN, score });
    }
    Ok(CountReport {
        frame_id: frame.frame_id,
        timestamp: frame.timestamp,
        n_points: points.len(),
        epsilon: clustering.elbow.map(|e| e.epsilon),
        n_clusters: clusters.len(),
        n_humans: decisions.iter().filter(|d| d.is_human).count(),
        clusters: decisions,
    })
}

/// Per-class shuffled split: `round(test_fraction * n_c)` of each class go to
/// the test side. Indices are returned in ascending order.
pub fn stratified_split(labels: &[usize], test_fraction: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(0.0..=1.0).contains(&test_fraction) {
        return Err(Error::InvalidParameter("test fraction must be in [0, 1]"));
    }
    let mut classes: Vec<usize> = labels.to_vec();
    classes.sort_unstable();
    classes.dedup();
    let mut rng = seeded(seed);
    let (mut train_idx, mut test_idx) = (Vec::new(), Vec::new());
    for c in classes {
        let mut idx: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == c).collect();
        idx.shuffle(&mut rng);
        let n_test = libm::round(test_fraction * idx.len() as f64) as usize;
        test_idx.extend_from_slice(&idx[..n_test]);
        train_idx.extend_from_slice(&idx[n_test..]);
    }
    train_idx.sort_unstable();
    test_idx.sort_unstable();
    Ok((train_idx, test_idx))
}

/// Trains the autoencoder on the people in a training split and picks its
/// threshold on the whole split. Returns the model and the loss history.
pub fn train_autoencoder(features: &[FeatureVector], labels: &[usize], cfg: &TrainConfig) -> Result<(TrainedModel, Vec<f64>)> {
    if features.len() != labels.len() {
        return Err(Error::LengthMismatch { expected: features.len(), got: labels.len() });
    }
    let humans: Vec<FeatureVector> =
        features.iter().zip(labels).filter(|(_, &l)| l == HUMAN).map(|(f, _)| f.clone()).collect();
    let stats = fit_normalizer(&humans).map_err(|e| e.in_stage("normalize"))?;
    let inputs: Vec<Vec<f64>> = humans.iter().map(|f| apply_normalizer(f, &stats).0.to_vec()).collect();
    let cfg = TrainConfig { loss: Loss::Mse, ..*cfg };
    let (mut model, history) = train(&build_autoencoder(), &inputs, &Targets::Reconstruct, &cfg)?;
    model.normalizer = Some(stats.clone());
    let all: Vec<Vec<f64>> = features.iter().map(|f| apply_normalizer(f, &stats).0.to_vec()).collect();
    let is_human: Vec<bool> = labels.iter().map(|&l| l == HUMAN).collect();
    model.threshold = Some(choose_threshold(&model, &all, &is_human).map_err(|e| e.in_stage("threshold"))?.threshold);
    Ok((model, history))
}

/// Trains the projection CNN with cross-entropy, then re-estimates its
/// batch-norm statistics on the training images under the final weights.
pub fn train_cnn(images: &[Vec<f64>], labels: &[usize], cfg: &TrainConfig) -> Result<(TrainedModel, Vec<f64>)> {
    let cfg = TrainConfig { loss: Loss::SoftmaxCrossEntropy, ..*cfg };
    let (mut model, history) = train(&build_cnn2d(), images, &Targets::Classes(labels.to_vec()), &cfg)?;
    recalibrate_batch_norm(&mut model, images, RECALIBRATION_CHUNK)?;
    Ok((model, history))
}

const RECALIBRATION_CHUNK: usize = 64;

/// Predictions for prepared inputs (see [`classify`]).
pub fn predict_all<M: Inference>(model: &M, inputs: &[Vec<f64>]) -> Result<Vec<usize>> {
    inputs.iter().map(|x| classify(model, x).map(|(l, _)| l)).collect()
}

pub fn evaluate<M: Inference>(model: &M, inputs: &[Vec<f64>], labels: &[usize]) -> Result<MetricsReport> {
    compute_metrics(&predict_all(model, inputs)?, labels)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{LayerParams, ModelSpec};
    use crate::sim::{gen_ground_pool, gen_scene, SimConfig};
    use alloc::vec;

    /// A CNN whose final bias always favours one class.
    fn constant_cnn(label: usize) -> TrainedModel {
        let mut m = TrainedModel::init(&build_cnn2d(), 1).unwrap();
        let n = m.params.len();
        for p in m.params.iter_mut().take(n - 2) {
            if let LayerParams::Dense { w, .. } | LayerParams::Conv { w, .. } = p {
                w.iter_mut().for_each(|v| *v = 0.0);
            }
        }
        if let LayerParams::Dense { b, .. } = &mut m.params[n - 2] {
            b[label] = 5.0;
        }
        m
    }

    #[test]
    fn empty_frame_counts_nothing() {
        let m = constant_cnn(HUMAN);
        let r = count_people(&Frame::new(3, 0.5, vec![]), &m, &PipelineConfig::default(), None).unwrap();
        assert_eq!((r.n_clusters, r.n_humans, r.frame_id), (0, 0, 3));
    }

    #[test]
    fn counts_follow_classifier_and_clusters() {
        let sim = SimConfig::default();
        let scene = gen_scene(2, 0, 1.5, 11, &sim).unwrap();
        let pool = gen_ground_pool(2, 1, &sim).unwrap();
        let cfg = PipelineConfig::default();
        let yes = count_people(&scene.frame, &constant_cnn(HUMAN), &cfg, Some(&pool)).unwrap();
        let no = count_people(&scene.frame, &constant_cnn(NON_HUMAN), &cfg, Some(&pool)).unwrap();
        assert!(yes.n_clusters >= 1);
        assert_eq!(yes.n_humans, yes.n_clusters);
        assert_eq!(no.n_humans, 0);
        assert_eq!(yes.n_clusters, no.n_clusters);
        assert!(yes.clusters.iter().all(|c| c.score > 0.5));
        // Deterministic.
        assert_eq!(yes, count_people(&scene.frame, &constant_cnn(HUMAN), &cfg, Some(&pool)).unwrap());
    }

    #[test]
    fn missing_pool_names_the_stage() {
        let sim = SimConfig::default();
        let scene = gen_scene(1, 0, 1.0, 2, &sim).unwrap();
        let err = count_people(&scene.frame, &constant_cnn(HUMAN), &PipelineConfig::default(), None).unwrap_err();
        assert!(matches!(err, Error::Stage { stage: "projection", .. }), "{err:?}");
    }

    #[test]
    fn autoencoder_without_threshold_is_rejected() {
        let sim = SimConfig::default();
        let scene = gen_scene(1, 0, 1.0, 2, &sim).unwrap();
        let ae = TrainedModel::init(&build_autoencoder(), 1).unwrap();
        let err = count_people(&scene.frame, &ae, &PipelineConfig::default(), None).unwrap_err();
        assert!(matches!(err, Error::Stage { stage: "classify", .. }), "{err:?}");
    }

    #[test]
    fn split_is_stratified_and_deterministic() {
        let labels: Vec<usize> = (0..50).map(|i| usize::from(i % 5 == 0)).collect();
        let (train_idx, test_idx) = stratified_split(&labels, 0.2, 3).unwrap();
        assert_eq!(test_idx.iter().filter(|&&i| labels[i] == 1).count(), 2);
        assert_eq!(test_idx.len(), 10);
        let mut all = [train_idx.clone(), test_idx.clone()].concat();
        all.sort_unstable();
        assert_eq!(all, (0..50).collect::<Vec<_>>());
        assert_eq!(stratified_split(&labels, 0.2, 3).unwrap(), (train_idx, test_idx));
    }

    #[test]
    fn config_checks_projection_target() {
        let cfg = PipelineConfig { projection_target: 100, ..PipelineConfig::default() };
        assert!(cfg.validate().is_err());
        assert!(PipelineConfig::default().validate().is_ok());
    }

    #[test]
    fn classify_rejects_wrong_output_width() {
        let spec = ModelSpec::new(
            "odd",
            ModelKind::Custom,
            crate::nn::Shape::vector(2),
            vec![crate::nn::LayerSpec::Dense { units: 3 }, crate::nn::LayerSpec::Softmax],
        )
        .unwrap();
        let m = TrainedModel::init(&spec, 0).unwrap();
        assert!(classify(&m, &[0.0, 1.0]).is_err());
    }
}
