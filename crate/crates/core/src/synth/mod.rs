//! Synthetic benchmark data: shape and pose sampling, clearance against bone
//! capsules, multi-view joint observations, and dataset files.

mod dataset;
mod instance;
mod penetration;
mod sampling;

pub use dataset::{
    generate_dataset, instance_file_name, load_dataset, load_instance, load_manifest, mesh_file_name, Dataset,
    InstanceFile, Manifest, ManifestEntry, CONSISTENCY_TOL, DATASET_FORMAT, MANIFEST_FILE, TEMPLATE_FILE,
};
pub use instance::{
    generate_instance, generate_with_shape, ground_truth_mesh, instance_rng, shape_rng, stream_rng, CameraJitter,
    GroundTruthInstance, MultiViewObservation, OcclusionRate, Split, SynthConfig,
};
pub use penetration::{dominant_joints, resolve_penetration, Capsule, Colliders, PenetrationReport, MAX_SWEEPS};
pub use sampling::{sample_pose, sample_shape, PoseLibrary, PoseSampler, PoseSource, ShapeStats};
