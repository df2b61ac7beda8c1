use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::penetration::{resolve_penetration, Colliders, PenetrationReport};
use super::sampling::{sample_shape, PoseSampler, PoseSource, ShapeStats};
use crate::body_model::{joints3d, keypoints3d, skin, BodyParams, BodyTemplate, Mesh};
use crate::camera::{canonical_views, project, CameraParams};
use crate::error::{Error, Result};
use crate::observation::ViewFeature;

/// Camera randomisation around the canonical rig.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CameraJitter {
    /// Nominal image scale.
    pub pixels_per_meter: f64,
    /// Multiplier range applied to the nominal scale.
    pub scale_range: [f64; 2],
    /// Each translation component is uniform in `[-j, j]` pixels.
    pub translation_jitter_px: f64,
}

impl Default for CameraJitter {
    fn default() -> Self {
        Self {
            pixels_per_meter: 100.0,
            scale_range: [0.8, 1.2],
            translation_jitter_px: 20.0,
        }
    }
}

/// Hidden-joint probability: one rate for every view or one per view.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum OcclusionRate {
    Uniform(f64),
    PerView(Vec<f64>),
}

impl Default for OcclusionRate {
    fn default() -> Self {
        OcclusionRate::Uniform(0.0)
    }
}

impl OcclusionRate {
    pub fn for_view(&self, view: usize) -> f64 {
        match self {
            OcclusionRate::Uniform(r) => *r,
            OcclusionRate::PerView(r) => r[view],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthConfig {
    pub n_shapes: usize,
    pub poses_per_shape: usize,
    pub n_views: usize,
    /// Standard deviation of the Gaussian noise added to each 2D coordinate.
    pub noise_sigma_px: f64,
    pub occlusion_rate: OcclusionRate,
    /// Joints forced visible per view after occlusion.
    pub min_visible: usize,
    pub pose_source: PoseSource,
    /// Clearance kept between vertices and foreign bone capsules, metres.
    pub epsilon_margin: f64,
    pub resolve_penetration: bool,
    pub seed: u64,
    /// Fraction of shapes (taken in id order) tagged `train`.
    pub split_fraction: f64,
    /// Defaults to zero mean and unit deviation.
    pub shape_stats: Option<ShapeStats>,
    pub camera: CameraJitter,
    /// Also write each ground-truth mesh as OBJ.
    pub export_meshes: bool,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_shapes: 100,
            poses_per_shape: 5,
            n_views: 4,
            noise_sigma_px: 2.0,
            occlusion_rate: OcclusionRate::default(),
            min_visible: 6,
            pose_source: PoseSource::default(),
            epsilon_margin: 0.005,
            resolve_penetration: true,
            seed: 0,
            split_fraction: 0.9,
            shape_stats: None,
            camera: CameraJitter::default(),
            export_meshes: false,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self, template: &BodyTemplate) -> Result<()> {
        let cfg = |msg: String| Err(Error::Config(msg));
        if self.n_views == 0 {
            return cfg("n_views must be at least 1".into());
        }
        if !(self.noise_sigma_px.is_finite() && self.noise_sigma_px >= 0.0) {
            return cfg(format!("noise_sigma_px must be >= 0, got {}", self.noise_sigma_px));
        }
        let rates: Vec<f64> = match &self.occlusion_rate {
            OcclusionRate::Uniform(r) => vec![*r],
            OcclusionRate::PerView(r) => {
                if r.len() != self.n_views {
                    return Err(Error::Dimension {
                        what: "per-view occlusion rates",
                        expected: self.n_views,
                        got: r.len(),
                    });
                }
                r.clone()
            }
        };
        if let Some(r) = rates.iter().find(|r| !(0.0..=1.0).contains(*r)) {
            return cfg(format!("occlusion rate must lie in [0, 1], got {r}"));
        }
        if self.min_visible > template.keypoint_count() {
            return cfg(format!(
                "min_visible {} exceeds the {} keypoints",
                self.min_visible,
                template.keypoint_count()
            ));
        }
        if !(self.epsilon_margin.is_finite() && self.epsilon_margin >= 0.0) {
            return cfg(format!("epsilon_margin must be >= 0, got {}", self.epsilon_margin));
        }
        if !(0.0..=1.0).contains(&self.split_fraction) {
            return cfg(format!(
                "split_fraction must lie in [0, 1], got {}",
                self.split_fraction
            ));
        }
        let j = &self.camera;
        if !(j.pixels_per_meter.is_finite() && j.pixels_per_meter > 0.0) {
            return cfg("camera.pixels_per_meter must be positive".into());
        }
        if !(j.scale_range[0] > 0.0 && j.scale_range[0] <= j.scale_range[1] && j.scale_range[1].is_finite()) {
            return cfg(format!(
                "camera.scale_range {:?} must be positive and ordered",
                j.scale_range
            ));
        }
        if !(j.translation_jitter_px.is_finite() && j.translation_jitter_px >= 0.0) {
            return cfg("camera.translation_jitter_px must be >= 0".into());
        }
        let stats = self.stats(template);
        stats.validate()?;
        if stats.dim() != template.shape_dim() {
            return Err(Error::Dimension {
                what: "shape stats",
                expected: template.shape_dim(),
                got: stats.dim(),
            });
        }
        Ok(())
    }

    pub fn stats(&self, template: &BodyTemplate) -> ShapeStats {
        self.shape_stats
            .clone()
            .unwrap_or_else(|| ShapeStats::standard(template.shape_dim()))
    }

    pub fn n_instances(&self) -> usize {
        self.n_shapes * self.poses_per_shape
    }

    pub fn train_shape_count(&self) -> usize {
        (self.split_fraction * self.n_shapes as f64).floor() as usize
    }

    pub fn split_of(&self, shape_id: usize) -> Split {
        if shape_id < self.train_shape_count() {
            Split::Train
        } else {
            Split::Test
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Test,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthInstance {
    pub instance_id: usize,
    pub shape_id: usize,
    pub split: Split,
    pub body: BodyParams,
    pub cameras: Vec<CameraParams>,
    /// All `K` posed joints, metres.
    pub joints3d_gt: Vec<[f64; 3]>,
    pub penetration: PenetrationReport,
    /// Skinned mesh after penetration resolution; re-derived on load.
    #[serde(skip)]
    pub mesh_gt: Mesh,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiViewObservation {
    pub views: Vec<ViewFeature>,
}

/// Generator seeded from the master seed on its own stream, so every shape
/// and instance draws from an independent sequence.
pub fn stream_rng(master: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(stream);
    rng
}

const SHAPE_STREAM: u64 = 1 << 40;

pub fn shape_rng(master: u64, shape_id: usize) -> ChaCha8Rng {
    stream_rng(master, SHAPE_STREAM + shape_id as u64)
}

pub fn instance_rng(master: u64, instance_id: usize) -> ChaCha8Rng {
    stream_rng(master, instance_id as u64)
}

/// Skinned mesh with penetrations resolved when the config asks for it.
pub fn ground_truth_mesh(
    template: &BodyTemplate,
    body: &BodyParams,
    config: &SynthConfig,
) -> Result<(Mesh, PenetrationReport)> {
    let mesh = skin(template, body)?;
    if !config.resolve_penetration {
        return Ok((mesh, PenetrationReport::default()));
    }
    let colliders = Colliders::posed(template, body)?;
    resolve_penetration(&mesh, &colliders, config.epsilon_margin)
}

/// Random body (shape and pose), cameras, and noisy partial observations.
pub fn generate_instance<R: Rng + ?Sized>(
    rng: &mut R,
    template: &BodyTemplate,
    config: &SynthConfig,
) -> Result<(GroundTruthInstance, MultiViewObservation)> {
    config.validate(template)?;
    let shape = sample_shape(rng, &config.stats(template))?;
    let sampler = PoseSampler::new(&config.pose_source, template)?;
    generate_with_shape(rng, template, config, &sampler, shape, 0, 0)
}

/// Instance for a given shape; the pose, cameras and observation noise come
/// from `rng`.
pub fn generate_with_shape<R: Rng + ?Sized>(
    rng: &mut R,
    template: &BodyTemplate,
    config: &SynthConfig,
    sampler: &PoseSampler,
    shape: Vec<f64>,
    instance_id: usize,
    shape_id: usize,
) -> Result<(GroundTruthInstance, MultiViewObservation)> {
    let body = sampler.sample(rng, template, shape);
    let (mesh_gt, penetration) = ground_truth_mesh(template, &body, config)?;
    let joints = joints3d(template, &body)?;
    let keypoints = keypoints3d(template, &body)?;

    let jit = &config.camera;
    let cameras: Vec<CameraParams> = canonical_views(config.n_views)?
        .into_iter()
        .map(|c| {
            let m = rng.random_range(jit.scale_range[0]..=jit.scale_range[1]);
            let j = jit.translation_jitter_px;
            let t = [rng.random_range(-j..=j), rng.random_range(-j..=j)];
            CameraParams {
                scale: jit.pixels_per_meter * m,
                translation: t,
                ..c
            }
        })
        .collect();

    let noise = Normal::new(0.0, config.noise_sigma_px).map_err(|e| Error::Config(format!("noise_sigma_px: {e}")))?;
    let views = cameras
        .iter()
        .enumerate()
        .map(|(v, cam)| {
            let joints2d: Vec<[f64; 2]> = project(cam, &keypoints)
                .into_iter()
                .map(|p| [p.x + noise.sample(rng), p.y + noise.sample(rng)])
                .collect();
            let rate = config.occlusion_rate.for_view(v);
            let mut visibility: Vec<bool> = (0..keypoints.len()).map(|_| rng.random::<f64>() >= rate).collect();
            let shown = visibility.iter().filter(|x| **x).count();
            if shown < config.min_visible {
                let mut hidden: Vec<usize> = (0..visibility.len()).filter(|&j| !visibility[j]).collect();
                hidden.shuffle(rng);
                for &j in hidden.iter().take(config.min_visible - shown) {
                    visibility[j] = true;
                }
            }
            ViewFeature::new(v, joints2d, visibility)
        })
        .collect();

    let truth = GroundTruthInstance {
        instance_id,
        shape_id,
        split: config.split_of(shape_id),
        body,
        cameras,
        joints3d_gt: joints.iter().map(|j| [j.x, j.y, j.z]).collect(),
        penetration,
        mesh_gt,
    };
    Ok((truth, MultiViewObservation { views }))
}
