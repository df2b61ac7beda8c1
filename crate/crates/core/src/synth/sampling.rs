use std::fs;
use std::path::{Path, PathBuf};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::body_model::{BodyParams, BodyTemplate};
use crate::error::{Error, Result};

/// Per-component mean and standard deviation of the shape coefficients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShapeStats {
    pub mean: Vec<f64>,
    pub stddev: Vec<f64>,
}

impl ShapeStats {
    /// Zero mean, unit deviation: the natural statistics of a PCA shape space.
    pub fn standard(dim: usize) -> Self {
        Self {
            mean: vec![0.0; dim],
            stddev: vec![1.0; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.mean.len() != self.stddev.len() {
            return Err(Error::Dimension {
                what: "shape stats stddev",
                expected: self.mean.len(),
                got: self.stddev.len(),
            });
        }
        if !self.mean.iter().all(|m| m.is_finite()) {
            return Err(Error::Config("shape stats mean must be finite".into()));
        }
        if !self.stddev.iter().all(|s| s.is_finite() && *s > 0.0) {
            return Err(Error::Config("shape stats stddev must be positive and finite".into()));
        }
        Ok(())
    }

    /// Componentwise `[mu - 3 sigma, mu + 3 sigma]`.
    pub fn bounds(&self) -> Vec<(f64, f64)> {
        self.mean
            .iter()
            .zip(&self.stddev)
            .map(|(m, s)| (m - 3.0 * s, m + 3.0 * s))
            .collect()
    }
}

/// Independent uniform draw of every component in `[mu - 3 sigma, mu + 3 sigma]`.
pub fn sample_shape<R: Rng + ?Sized>(rng: &mut R, stats: &ShapeStats) -> Result<Vec<f64>> {
    stats.validate()?;
    Ok(stats
        .bounds()
        .into_iter()
        .map(|(lo, hi)| rng.random_range(lo..=hi))
        .collect())
}

/// Where poses come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PoseSource {
    /// Every axis-angle component uniform in `[-max_angle_deg, max_angle_deg]`.
    Procedural { max_angle_deg: f64 },
    /// Frames read from a pose file; one is chosen uniformly per sample.
    PoseFile { path: PathBuf },
}

impl Default for PoseSource {
    fn default() -> Self {
        PoseSource::Procedural { max_angle_deg: 30.0 }
    }
}

/// Pose file contents: each frame lists the axis-angle rotations (radians)
/// of joints `1..K`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PoseLibrary {
    pub frames: Vec<Vec<[f64; 3]>>,
}

impl PoseLibrary {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Format {
            format: "pose file",
            detail: format!("{}: {e}", path.display()),
        })
    }

    pub fn validate(&self, template: &BodyTemplate) -> Result<()> {
        if self.frames.is_empty() {
            return Err(Error::Empty("pose file frames"));
        }
        for f in &self.frames {
            if f.len() != template.pose_dim() / 3 {
                return Err(Error::Dimension {
                    what: "pose file frame",
                    expected: template.pose_dim() / 3,
                    got: f.len(),
                });
            }
            if !f.iter().flatten().all(|x| x.is_finite()) {
                return Err(Error::Format {
                    format: "pose file",
                    detail: "non-finite rotation".into(),
                });
            }
        }
        Ok(())
    }
}

/// A pose source with any file already loaded and checked.
#[derive(Debug, Clone)]
pub enum PoseSampler {
    Procedural { max_angle: f64 },
    Library(PoseLibrary),
}

impl PoseSampler {
    pub fn new(source: &PoseSource, template: &BodyTemplate) -> Result<Self> {
        match source {
            PoseSource::Procedural { max_angle_deg } => {
                if !(max_angle_deg.is_finite() && (0.0..=180.0).contains(max_angle_deg)) {
                    return Err(Error::Config(format!(
                        "max_angle_deg must lie in [0, 180], got {max_angle_deg}"
                    )));
                }
                Ok(PoseSampler::Procedural {
                    max_angle: max_angle_deg.to_radians(),
                })
            }
            PoseSource::PoseFile { path } => {
                let lib = PoseLibrary::load(path)?;
                lib.validate(template)?;
                Ok(PoseSampler::Library(lib))
            }
        }
    }

    /// Body parameters with a sampled pose and the given shape.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R, template: &BodyTemplate, shape: Vec<f64>) -> BodyParams {
        let pose = match self {
            PoseSampler::Procedural { max_angle } => {
                let m = *max_angle;
                (0..template.pose_dim() / 3)
                    .map(|_| {
                        if m == 0.0 {
                            [0.0; 3]
                        } else {
                            [0; 3].map(|_| rng.random_range(-m..=m).clamp(-m, m))
                        }
                    })
                    .collect()
            }
            PoseSampler::Library(lib) => lib.frames[rng.random_range(0..lib.frames.len())].clone(),
        };
        BodyParams { pose, shape }
    }
}

/// One pose draw with mean shape.
pub fn sample_pose<R: Rng + ?Sized>(rng: &mut R, template: &BodyTemplate, source: &PoseSource) -> Result<BodyParams> {
    let sampler = PoseSampler::new(source, template)?;
    Ok(sampler.sample(rng, template, vec![0.0; template.shape_dim()]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::body_model::{make_mini_template, MiniTemplateConfig};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn template() -> BodyTemplate {
        make_mini_template(&MiniTemplateConfig {
            vertex_target: 400,
            seed: 0,
        })
        .unwrap()
    }

    #[test]
    fn collapsed_interval_returns_mean() {
        let stats = ShapeStats {
            mean: vec![0.5, -1.0, 2.0],
            stddev: vec![1e-12; 3],
        };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let s = sample_shape(&mut rng, &stats).unwrap();
        for (x, m) in s.iter().zip(&stats.mean) {
            assert!((x - m).abs() <= 1e-11);
        }
    }

    #[test]
    fn shape_samples_are_deterministic_and_bounded() {
        let stats = ShapeStats {
            mean: vec![0.0, 1.0],
            stddev: vec![1.0, 0.5],
        };
        let a = sample_shape(&mut ChaCha8Rng::seed_from_u64(5), &stats).unwrap();
        let b = sample_shape(&mut ChaCha8Rng::seed_from_u64(5), &stats).unwrap();
        assert_eq!(a, b);
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let bounds = stats.bounds();
        for _ in 0..1000 {
            for (x, (lo, hi)) in sample_shape(&mut rng, &stats).unwrap().iter().zip(&bounds) {
                assert!(lo <= x && x <= hi);
            }
        }
    }

    #[test]
    fn invalid_stats_are_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let zero = ShapeStats {
            mean: vec![0.0],
            stddev: vec![0.0],
        };
        assert!(sample_shape(&mut rng, &zero).is_err());
        let ragged = ShapeStats {
            mean: vec![0.0; 2],
            stddev: vec![1.0],
        };
        assert!(sample_shape(&mut rng, &ragged).is_err());
    }

    #[test]
    fn zero_max_angle_gives_rest_pose() {
        let t = template();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let b = sample_pose(&mut rng, &t, &PoseSource::Procedural { max_angle_deg: 0.0 }).unwrap();
        assert_eq!(b, BodyParams::zeros(&t));
    }

    #[test]
    fn procedural_poses_honor_bounds() {
        let t = template();
        let sampler = PoseSampler::new(&PoseSource::default(), &t).unwrap();
        let m = 30f64.to_radians();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut extreme: f64 = 0.0;
        for _ in 0..1000 {
            let b = sampler.sample(&mut rng, &t, vec![0.0; t.shape_dim()]);
            for x in b.pose.iter().flatten() {
                assert!(x.abs() <= m);
                extreme = extreme.max(x.abs());
            }
        }
        assert!(extreme > 0.99 * m);
        assert!(PoseSampler::new(&PoseSource::Procedural { max_angle_deg: -1.0 }, &t).is_err());
    }

    #[test]
    fn single_frame_pose_file_is_returned_verbatim() {
        let t = template();
        let frame: Vec<[f64; 3]> = (0..t.joint_count() - 1)
            .map(|k| [0.01 * k as f64, -0.02, 0.1 / (k as f64 + 1.0)])
            .collect();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("poses.json");
        let lib = PoseLibrary {
            frames: vec![frame.clone()],
        };
        fs::write(&path, serde_json::to_string(&lib).unwrap()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let b = sample_pose(&mut rng, &t, &PoseSource::PoseFile { path: path.clone() }).unwrap();
        assert_eq!(b.pose, frame);

        let short = PoseLibrary {
            frames: vec![frame[1..].to_vec()],
        };
        fs::write(&path, serde_json::to_string(&short).unwrap()).unwrap();
        assert!(sample_pose(&mut rng, &t, &PoseSource::PoseFile { path }).is_err());
    }
}
