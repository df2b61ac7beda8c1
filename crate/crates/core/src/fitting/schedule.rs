use std::collections::hash_map::DefaultHasher;
use std::hash::{Hash, Hasher};
use std::path::Path;
use std::time::Instant;

use nalgebra::{DVector, Vector2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::FitConfig;
use super::corrector::{apply_step, corrector};
use super::loss::step_loss;
use crate::body_model::{keypoints3d, BodyParams, BodyTemplate};
use crate::camera::{canonical_yaws, CameraParams, CAMERA_DOF};
use crate::error::{Error, Result};
use crate::fsutil::write_atomic;
use crate::observation::ViewFeature;
use crate::rotation::yaw;

/// One visit of a regression block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockRecord {
    pub stage: usize,
    pub view: usize,
    pub loss_before: f64,
    pub loss_after: f64,
    /// Norm of the accumulated body correction.
    pub body_step: f64,
    /// Norm of the accumulated camera correction (optimizer coordinates).
    pub camera_step: f64,
    /// Corrector steps taken.
    pub inner_iters: usize,
    /// Some corrector call hit the damping cap.
    pub capped: bool,
    /// Fingerprints of the parameters entering and leaving the block.
    pub body_in: u64,
    pub body_out: u64,
    pub camera_in: u64,
    pub camera_out: u64,
}

/// Shared body parameters, one camera per view, and the block trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitState {
    pub body: BodyParams,
    pub cameras: Vec<CameraParams>,
    pub trace: Vec<BlockRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub state: FitState,
    /// Observations after padding; `source_id` names the original view.
    pub source_ids: Vec<usize>,
    pub start_view: usize,
    pub stages: usize,
    /// Loss of each view after its final-stage block.
    pub per_view_final_loss: Vec<f64>,
    pub mean_final_loss: f64,
    /// Mean loss decrease over the final stage fell below the tolerance.
    pub converged: bool,
    pub wall_time_s: f64,
    /// Diagnostics (degenerate initialisation, capped steps).
    pub flags: Vec<String>,
}

impl FitReport {
    /// Posed evaluation keypoints of the fitted body.
    pub fn keypoints3d(&self, template: &BodyTemplate) -> Result<Vec<nalgebra::Vector3<f64>>> {
        keypoints3d(template, &self.state.body)
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Format {
            format: "fit report",
            detail: e.to_string(),
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut text = self.to_json()?;
        text.push('\n');
        write_atomic(path.as_ref(), text.as_bytes())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Format {
            format: "fit report",
            detail: format!("{}: {e}", path.display()),
        })
    }
}

fn fingerprint<T: Serialize>(value: &T) -> u64 {
    // Bit-exact: serde_json writes shortest round-trip floats.
    let mut h = DefaultHasher::new();
    serde_json::to_string(value)
        .expect("plain data serializes")
        .hash(&mut h);
    h.finish()
}

/// Appends copies of the first view until there are `target_n` views. Copies
/// keep the observation and `source_id` and get fresh `view_id`s.
pub fn pad_views(obs: &[ViewFeature], target_n: usize) -> Result<Vec<ViewFeature>> {
    let first = obs.first().ok_or(Error::Empty("observation views"))?;
    let mut out = obs.to_vec();
    while out.len() < target_n {
        out.push(ViewFeature {
            view_id: out.len(),
            ..first.clone()
        });
    }
    Ok(out)
}

/// Initial guess: mean shape in the rest pose; per view, a canonical yaw when
/// the number of distinct source views is 1 or 4 (identity otherwise), then
/// least-squares scale and translation aligning the rest keypoints to the
/// visible observations. Returns the state and any degeneracy flags.
pub fn init_state(obs: &[ViewFeature], template: &BodyTemplate) -> Result<(FitState, Vec<String>)> {
    if obs.is_empty() {
        return Err(Error::Empty("observation views"));
    }
    let body = BodyParams::zeros(template);
    let rest = keypoints3d(template, &body)?;
    let mut sources: Vec<usize> = obs.iter().map(|v| v.source_id).collect();
    sources.sort_unstable();
    sources.dedup();
    let yaws = matches!(sources.len(), 1 | 4).then(|| canonical_yaws(sources.len()));

    let mut flags = Vec::new();
    let mut cameras = Vec::with_capacity(obs.len());
    for (v, view) in obs.iter().enumerate() {
        let rotation = match &yaws {
            Some(y) => {
                let rank = sources.binary_search(&view.source_id).expect("collected above");
                yaw(y[rank])
            }
            None => nalgebra::Vector3::zeros(),
        };
        let base = CameraParams {
            rotation: rotation.into(),
            ..CameraParams::identity()
        };
        let proj: Vec<Vector2<f64>> = crate::camera::project(&base, &rest);
        let vis: Vec<usize> = (0..rest.len()).filter(|&j| view.visibility[j]).collect();
        let n = vis.len() as f64;
        let (mut scale, mut t) = (1.0, Vector2::zeros());
        if !vis.is_empty() {
            let mp = vis.iter().map(|&j| proj[j]).sum::<Vector2<f64>>() / n;
            let mo = vis.iter().map(|&j| view.point(j)).sum::<Vector2<f64>>() / n;
            let spp: f64 = vis.iter().map(|&j| (proj[j] - mp).norm_squared()).sum();
            let soo: f64 = vis.iter().map(|&j| (view.point(j) - mo).norm_squared()).sum();
            let spo: f64 = vis.iter().map(|&j| (proj[j] - mp).dot(&(view.point(j) - mo))).sum();
            if spp > 0.0 && soo > 1e-12 * (1.0 + mo.norm_squared()) {
                scale = if spo > 0.0 { spo / spp } else { (soo / spp).sqrt() };
            } else {
                flags.push(format!("view {v}: degenerate observation, scale initialised to 1"));
            }
            t = mo - scale * mp;
        } else {
            flags.push(format!("view {v}: no visible joints, scale initialised to 1"));
        }
        cameras.push(CameraParams {
            scale,
            translation: [t.x, t.y],
            ..base
        });
    }
    Ok((
        FitState {
            body,
            cameras,
            trace: Vec::new(),
        },
        flags,
    ))
}

/// Multi-stage chain over the views. Body parameters pass from each block to
/// the next (across stage boundaries); each view's camera passes from one
/// stage to the next of the same view. Inputs with fewer than
/// `config.min_views` views are padded first.
pub fn run_schedule(
    obs: &[ViewFeature],
    template: &BodyTemplate,
    config: &FitConfig,
    gt: Option<&BodyParams>,
) -> Result<FitReport> {
    run_schedule_keyed(obs, template, config, gt, 0)
}

/// `run_schedule` with a key that separates random start views across a batch.
pub fn run_schedule_keyed(
    obs: &[ViewFeature],
    template: &BodyTemplate,
    config: &FitConfig,
    gt: Option<&BodyParams>,
    key: u64,
) -> Result<FitReport> {
    let clock = Instant::now();
    config.validate()?;
    if let Some(g) = gt {
        g.check(template)?;
    }
    for v in obs {
        v.validate(template.keypoint_count())?;
    }
    let views = pad_views(obs, config.min_views.max(obs.len()))?;
    let n = views.len();
    let start = config.start_index(n, key)?;
    let (mut state, mut flags) = init_state(&views, template)?;

    let mut stage_means: Vec<f64> = Vec::with_capacity(config.stages + 1);
    let initial: Vec<f64> = views
        .iter()
        .zip(&state.cameras)
        .map(|(v, c)| step_loss(template, &state.body, c, v, gt, config).map(|l| l.total))
        .collect::<Result<_>>()?;
    stage_means.push(initial.iter().sum::<f64>() / n as f64);
    let mut final_loss = vec![0.0; n];

    for stage in 0..config.stages {
        for offset in 0..n {
            let view = (start + offset) % n;
            let feature = &views[view];
            let body_in = fingerprint(&state.body);
            let camera_in = fingerprint(&state.cameras[view]);
            let loss_before = step_loss(template, &state.body, &state.cameras[view], feature, gt, config)?.total;
            let mut body = state.body.clone();
            let mut camera = state.cameras[view];
            let mut loss = loss_before;
            let mut iters = 0;
            let mut capped = false;
            for _ in 0..config.max_inner_iters {
                let c = corrector(feature, &camera, &body, template, config, gt)?;
                iters += 1;
                if c.is_zero() {
                    capped |= c.capped;
                    break;
                }
                let step = DVector::from_iterator(CAMERA_DOF + c.body.len(), c.camera.iter().chain(&c.body).copied());
                (camera, body) = apply_step(template, &camera, &body, &step)?;
                let improvement = loss - c.loss_after;
                loss = c.loss_after;
                if loss == 0.0 || improvement <= config.convergence_tol * loss_before {
                    break;
                }
            }
            if capped {
                flags.push(format!("stage {stage} view {view}: damping cap reached"));
            }
            let body_step = {
                let (a, b) = (body.to_vec(), state.body.to_vec());
                a.iter().zip(&b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
            };
            let camera_step = {
                let (a, b) = (camera.to_vec(), state.cameras[view].to_vec());
                a.iter().zip(&b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
            };
            state.body = body;
            state.cameras[view] = camera;
            final_loss[view] = loss;
            state.trace.push(BlockRecord {
                stage,
                view,
                loss_before,
                loss_after: loss,
                body_step,
                camera_step,
                inner_iters: iters,
                capped,
                body_in,
                body_out: fingerprint(&state.body),
                camera_in,
                camera_out: fingerprint(&state.cameras[view]),
            });
        }
        stage_means.push(final_loss.iter().sum::<f64>() / n as f64);
    }

    let k = stage_means.len();
    let converged = (stage_means[k - 2] - stage_means[k - 1]).abs() < config.convergence_tol;
    let mean_final_loss = final_loss.iter().sum::<f64>() / n as f64;
    Ok(FitReport {
        source_ids: views.iter().map(|v| v.source_id).collect(),
        state,
        start_view: start,
        stages: config.stages,
        per_view_final_loss: final_loss,
        mean_final_loss,
        converged,
        wall_time_s: clock.elapsed().as_secs_f64(),
        flags,
    })
}

/// One fitting job of a batch.
#[derive(Debug, Clone)]
pub struct FitJob {
    pub key: u64,
    pub views: Vec<ViewFeature>,
    pub gt: Option<BodyParams>,
}

/// Fits independent instances in parallel; results keep the job order.
pub fn fit_batch(jobs: &[FitJob], template: &BodyTemplate, config: &FitConfig) -> Vec<Result<FitReport>> {
    jobs.par_iter()
        .map(|j| run_schedule_keyed(&j.views, template, config, j.gt.as_ref(), j.key))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::body_model::{make_mini_template, MiniTemplateConfig};
    use crate::camera::project;
    use crate::fitting::config::StartView;

    fn template() -> BodyTemplate {
        make_mini_template(&MiniTemplateConfig {
            vertex_target: 400,
            seed: 0,
        })
        .unwrap()
    }

    fn view(id: usize, x: f64) -> ViewFeature {
        ViewFeature::new(id, vec![[x, 0.0]; 14], vec![true; 14])
    }

    #[test]
    fn padding_copies_the_first_view() {
        let one = pad_views(&[view(0, 1.0)], 4).unwrap();
        assert_eq!(one.len(), 4);
        assert!(one.iter().all(|v| v.joints2d == one[0].joints2d && v.source_id == 0));
        assert_eq!(one.iter().map(|v| v.view_id).collect::<Vec<_>>(), vec![0, 1, 2, 3]);
        let four: Vec<_> = (0..4).map(|i| view(i, i as f64)).collect();
        assert_eq!(pad_views(&four, 4).unwrap(), four);
        let three: Vec<_> = (0..3).map(|i| view(i, i as f64)).collect();
        let p = pad_views(&three, 4).unwrap();
        assert_eq!(&p[..3], &three[..]);
        assert_eq!(p[3].joints2d, three[0].joints2d);
        assert_eq!((p[3].view_id, p[3].source_id), (3, 0));
        assert!(pad_views(&[], 4).is_err());
    }

    #[test]
    fn init_matches_mean_body_at_front_view() {
        let t = template();
        let body = BodyParams::zeros(&t);
        let cam = CameraParams {
            scale: 1.0,
            ..CameraParams::identity()
        };
        let pts = project(&cam, &keypoints3d(&t, &body).unwrap())
            .into_iter()
            .map(|p| [p.x, p.y])
            .collect();
        let obs = vec![ViewFeature::new(0, pts, vec![true; 14])];
        let (state, flags) = init_state(&obs, &t).unwrap();
        assert!(flags.is_empty());
        let l = step_loss(&t, &state.body, &state.cameras[0], &obs[0], None, &FitConfig::default()).unwrap();
        assert!(l.total < 1e-12, "{}", l.total);
        assert_eq!(init_state(&obs, &t).unwrap(), (state, flags));
    }

    #[test]
    fn coincident_observation_is_flagged() {
        let t = template();
        let (state, flags) = init_state(&[view(0, 5.0)], &t).unwrap();
        assert_eq!(state.cameras[0].scale, 1.0);
        assert_eq!(flags.len(), 1);
    }

    #[test]
    fn chain_visits_and_flows() {
        let t = template();
        let mut obs: Vec<ViewFeature> = (0..4).map(|i| view(i, 10.0 * i as f64)).collect();
        for v in obs.iter_mut() {
            for (j, p) in v.joints2d.iter_mut().enumerate() {
                p[1] = j as f64 * 7.0;
            }
        }
        let cfg = FitConfig {
            start_view: StartView::Fixed { index: 2 },
            max_inner_iters: 2,
            ..Default::default()
        };
        let r = run_schedule(&obs, &t, &cfg, None).unwrap();
        assert_eq!(r.state.trace.len(), 12);
        let order: Vec<usize> = r.state.trace.iter().map(|b| b.view).collect();
        assert_eq!(order, vec![2, 3, 0, 1, 2, 3, 0, 1, 2, 3, 0, 1]);
        for w in r.state.trace.windows(2) {
            assert_eq!(w[0].body_out, w[1].body_in);
        }
        for v in 0..4 {
            let visits: Vec<&BlockRecord> = r.state.trace.iter().filter(|b| b.view == v).collect();
            assert_eq!(visits.len(), 3);
            for w in visits.windows(2) {
                assert_eq!(w[0].camera_out, w[1].camera_in);
                assert!(w[0].stage < w[1].stage);
            }
        }
        let mean = r.per_view_final_loss.iter().sum::<f64>() / 4.0;
        assert_eq!(r.mean_final_loss, mean);
        assert!(r.state.trace.iter().all(|b| b.loss_after <= b.loss_before));
    }

    #[test]
    fn random_start_depends_on_key_only() {
        let cfg = FitConfig {
            start_view: StartView::Random { seed: 3 },
            ..Default::default()
        };
        let a: Vec<usize> = (0..32).map(|k| cfg.start_index(4, k).unwrap()).collect();
        let b: Vec<usize> = (0..32).map(|k| cfg.start_index(4, k).unwrap()).collect();
        assert_eq!(a, b);
        assert!(a.iter().any(|&s| s != a[0]));
        let fixed = FitConfig {
            start_view: StartView::Fixed { index: 4 },
            ..Default::default()
        };
        assert!(fixed.start_index(4, 0).is_err());
    }
}
