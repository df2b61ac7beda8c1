//! On-disk dataset:
//!
//! ```text
//! manifest.json                 config echo, master seed, split lists, instance index
//! template.mvbt                 body template used for generation
//! instances/inst_000000.json    ground truth and per-view observations
//! meshes/inst_000000.obj        optional ground-truth meshes
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::Vector3;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::instance::{
    generate_with_shape, ground_truth_mesh, instance_rng, shape_rng, GroundTruthInstance, MultiViewObservation, Split,
    SynthConfig,
};
use super::penetration::PenetrationReport;
use super::sampling::{sample_shape, PoseSampler};
use crate::body_model::{joints3d, load_template, save_template, BodyTemplate};
use crate::error::{Error, Result};
use crate::fsutil::write_atomic;
use crate::obj::write_obj;

pub const DATASET_FORMAT: &str = "mvhuman-dataset/1";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const TEMPLATE_FILE: &str = "template.mvbt";
/// Allowed drift between stored and re-derived ground-truth joints, metres.
pub const CONSISTENCY_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestEntry {
    pub instance_id: usize,
    pub shape_id: usize,
    pub split: Split,
    /// Relative to the dataset directory.
    pub file: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub format: String,
    pub seed: u64,
    pub config: SynthConfig,
    pub template_file: String,
    pub train_shapes: Vec<usize>,
    pub test_shapes: Vec<usize>,
    pub instances: Vec<ManifestEntry>,
}

impl Manifest {
    pub fn entries(&self, split: Option<Split>) -> impl Iterator<Item = &ManifestEntry> {
        self.instances
            .iter()
            .filter(move |e| split.is_none_or(|s| e.split == s))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceFile {
    pub ground_truth: GroundTruthInstance,
    pub observation: MultiViewObservation,
}

pub fn instance_file_name(instance_id: usize) -> String {
    format!("instances/inst_{instance_id:06}.json")
}

pub fn mesh_file_name(instance_id: usize) -> String {
    format!("meshes/inst_{instance_id:06}.obj")
}

fn to_json<T: Serialize>(value: &T) -> Result<Vec<u8>> {
    let mut bytes = serde_json::to_vec_pretty(value).map_err(|e| Error::Format {
        format: "json",
        detail: e.to_string(),
    })?;
    bytes.push(b'\n');
    Ok(bytes)
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

/// Generates `n_shapes * poses_per_shape` instances under `out_dir`.
/// Instance `i` uses shape `i / poses_per_shape`; both draw from streams of
/// the master seed, so the output does not depend on thread count.
pub fn generate_dataset(template: &BodyTemplate, config: &SynthConfig, out_dir: &Path) -> Result<Manifest> {
    config.validate(template)?;
    if config.poses_per_shape == 0 || config.n_shapes == 0 {
        return Err(Error::Config("n_shapes and poses_per_shape must be at least 1".into()));
    }
    let sampler = PoseSampler::new(&config.pose_source, template)?;
    let stats = config.stats(template);
    create_dir(&out_dir.join("instances"))?;
    if config.export_meshes {
        create_dir(&out_dir.join("meshes"))?;
    }
    save_template(template, out_dir.join(TEMPLATE_FILE))?;

    let entries: Vec<ManifestEntry> = (0..config.n_instances())
        .into_par_iter()
        .map(|id| -> Result<ManifestEntry> {
            let shape_id = id / config.poses_per_shape;
            let shape = sample_shape(&mut shape_rng(config.seed, shape_id), &stats)?;
            let mut rng = instance_rng(config.seed, id);
            let (truth, observation) = generate_with_shape(&mut rng, template, config, &sampler, shape, id, shape_id)?;
            if config.export_meshes {
                write_obj(out_dir.join(mesh_file_name(id)), &truth.mesh_gt, template.faces())?;
            }
            let file = instance_file_name(id);
            let split = truth.split;
            write_atomic(
                &out_dir.join(&file),
                &to_json(&InstanceFile {
                    ground_truth: truth,
                    observation,
                })?,
            )?;
            Ok(ManifestEntry {
                instance_id: id,
                shape_id,
                split,
                file,
            })
        })
        .collect::<Result<_>>()?;

    let train = config.train_shape_count();
    let manifest = Manifest {
        format: DATASET_FORMAT.to_string(),
        seed: config.seed,
        config: config.clone(),
        template_file: TEMPLATE_FILE.to_string(),
        train_shapes: (0..train).collect(),
        test_shapes: (train..config.n_shapes).collect(),
        instances: entries,
    };
    write_atomic(&out_dir.join(MANIFEST_FILE), &to_json(&manifest)?)?;
    Ok(manifest)
}

pub fn load_manifest(dir: &Path) -> Result<Manifest> {
    let path = dir.join(MANIFEST_FILE);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let m: Manifest = serde_json::from_str(&text).map_err(|e| Error::Format {
        format: "manifest",
        detail: format!("{}: {e}", path.display()),
    })?;
    if m.format != DATASET_FORMAT {
        return Err(Error::Format {
            format: "manifest",
            detail: format!("unsupported format `{}`", m.format),
        });
    }
    Ok(m)
}

/// Reads one instance file and checks it against the template: view sizes,
/// and ground-truth joints re-derived from the stored parameters.
pub fn load_instance(dir: &Path, entry: &ManifestEntry, template: &BodyTemplate) -> Result<InstanceFile> {
    let path: PathBuf = dir.join(&entry.file);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let inst: InstanceFile = serde_json::from_str(&text).map_err(|e| Error::Format {
        format: "instance",
        detail: format!("{}: {e}", path.display()),
    })?;
    let gt = &inst.ground_truth;
    if gt.instance_id != entry.instance_id {
        return Err(Error::Format {
            format: "instance",
            detail: format!(
                "{} holds instance {} but the manifest lists {}",
                path.display(),
                gt.instance_id,
                entry.instance_id
            ),
        });
    }
    for v in &inst.observation.views {
        v.validate(template.keypoint_count())?;
    }
    let derived = joints3d(template, &gt.body)?;
    if derived.len() != gt.joints3d_gt.len() {
        return Err(Error::Dimension {
            what: "stored ground-truth joints",
            expected: derived.len(),
            got: gt.joints3d_gt.len(),
        });
    }
    let drift = derived
        .iter()
        .zip(&gt.joints3d_gt)
        .map(|(d, s)| (d - Vector3::from(*s)).amax())
        .fold(0.0, f64::max);
    if !(drift <= CONSISTENCY_TOL) {
        return Err(Error::Format {
            format: "instance",
            detail: format!(
                "{}: stored joints differ from the re-derived ones by {drift:.3e} m",
                path.display()
            ),
        });
    }
    Ok(inst)
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub dir: PathBuf,
    pub manifest: Manifest,
    pub template: BodyTemplate,
    /// In manifest order.
    pub instances: Vec<InstanceFile>,
}

/// Loads the manifest, template and every instance (optionally one split),
/// re-deriving each ground-truth mesh and penetration report.
pub fn load_dataset(dir: &Path, split: Option<Split>) -> Result<Dataset> {
    let manifest = load_manifest(dir)?;
    let template = load_template(dir.join(&manifest.template_file))?;
    let entries: Vec<&ManifestEntry> = manifest.entries(split).collect();
    let instances = entries
        .par_iter()
        .map(|e| {
            let mut inst = load_instance(dir, e, &template)?;
            let (mesh, penetration) = ground_truth_mesh(&template, &inst.ground_truth.body, &manifest.config)?;
            let stored = PenetrationReport {
                displacements: penetration.displacements.clone(),
                ..inst.ground_truth.penetration.clone()
            };
            if stored != penetration {
                return Err(Error::Format {
                    format: "instance",
                    detail: format!(
                        "{}: stored penetration summary differs from the re-derived one",
                        dir.join(&e.file).display()
                    ),
                });
            }
            inst.ground_truth.mesh_gt = mesh;
            inst.ground_truth.penetration = penetration;
            Ok(inst)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Dataset {
        dir: dir.to_path_buf(),
        manifest,
        template,
        instances,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::body_model::{make_mini_template, MiniTemplateConfig};
    use std::collections::HashSet;

    fn template() -> BodyTemplate {
        make_mini_template(&MiniTemplateConfig {
            vertex_target: 400,
            seed: 0,
        })
        .unwrap()
    }

    fn small() -> SynthConfig {
        SynthConfig {
            n_shapes: 10,
            poses_per_shape: 2,
            seed: 11,
            export_meshes: true,
            ..Default::default()
        }
    }

    fn read_tree(dir: &Path) -> Vec<(String, Vec<u8>)> {
        let mut out = Vec::new();
        let mut stack = vec![dir.to_path_buf()];
        while let Some(d) = stack.pop() {
            for e in fs::read_dir(&d).unwrap() {
                let p = e.unwrap().path();
                if p.is_dir() {
                    stack.push(p);
                } else {
                    let rel = p.strip_prefix(dir).unwrap().to_string_lossy().into_owned();
                    out.push((rel, fs::read(&p).unwrap()));
                }
            }
        }
        out.sort();
        out
    }

    #[test]
    fn split_is_by_shape_and_disjoint() {
        let t = template();
        let dir = tempfile::tempdir().unwrap();
        let m = generate_dataset(&t, &small(), dir.path()).unwrap();
        assert_eq!(m.train_shapes, (0..9).collect::<Vec<_>>());
        assert_eq!(m.test_shapes, vec![9]);
        assert_eq!(m.instances.len(), 20);
        let train: HashSet<usize> = m.entries(Some(Split::Train)).map(|e| e.shape_id).collect();
        let test: HashSet<usize> = m.entries(Some(Split::Test)).map(|e| e.shape_id).collect();
        assert!(train.is_disjoint(&test));
        assert_eq!(train.len() + test.len(), 10);
    }

    #[test]
    fn regeneration_is_byte_identical_and_loads_cleanly() {
        let t = template();
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        let m = generate_dataset(&t, &small(), a.path()).unwrap();
        let again = SynthConfig {
            seed: m.seed,
            ..m.config.clone()
        };
        generate_dataset(&t, &again, b.path()).unwrap();
        let (ta, tb) = (read_tree(a.path()), read_tree(b.path()));
        assert_eq!(ta.len(), 1 + 1 + 20 + 20);
        assert_eq!(ta, tb);

        let ds = load_dataset(a.path(), None).unwrap();
        assert_eq!(ds.manifest, m);
        assert_eq!(ds.instances.len(), 20);
        let shape0 = &ds.instances[0].ground_truth.body.shape;
        assert_eq!(shape0, &ds.instances[1].ground_truth.body.shape);
        assert_ne!(shape0, &ds.instances[2].ground_truth.body.shape);
        let test = load_dataset(a.path(), Some(Split::Test)).unwrap();
        assert_eq!(test.instances.len(), 2);
        let (mesh, _) = crate::obj::read_obj(a.path().join(mesh_file_name(3))).unwrap();
        assert_eq!(mesh, ds.instances[3].ground_truth.mesh_gt);
    }

    #[test]
    fn tampered_ground_truth_is_rejected() {
        let t = template();
        let dir = tempfile::tempdir().unwrap();
        let m = generate_dataset(&t, &small(), dir.path()).unwrap();
        let path = dir.path().join(&m.instances[0].file);
        let mut inst: InstanceFile = serde_json::from_str(&fs::read_to_string(&path).unwrap()).unwrap();
        inst.ground_truth.joints3d_gt[5][1] += 1e-6;
        fs::write(&path, serde_json::to_string(&inst).unwrap()).unwrap();
        let err = load_dataset(dir.path(), None).unwrap_err();
        assert!(err.to_string().contains("re-derived"), "{err}");
    }

    #[test]
    fn penetration_report_is_restored_and_checked() {
        let t = template();
        let dir = tempfile::tempdir().unwrap();
        let m = generate_dataset(&t, &small(), dir.path()).unwrap();
        let ds = load_dataset(dir.path(), None).unwrap();
        let report = &ds.instances[0].ground_truth.penetration;
        assert_eq!(report.displacements.len(), t.vertex_count());
        let moved = report.displacements.iter().filter(|d| **d > 0.0).count();
        assert_eq!(moved, report.moved);

        let path = dir.path().join(&m.instances[0].file);
        let mut inst: InstanceFile = serde_json::from_str(&fs::read_to_string(&path).unwrap()).unwrap();
        inst.ground_truth.penetration.moved += 1;
        fs::write(&path, serde_json::to_string(&inst).unwrap()).unwrap();
        let err = load_dataset(dir.path(), None).unwrap_err();
        assert!(err.to_string().contains("penetration summary"), "{err}");
    }
}
