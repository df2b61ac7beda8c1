//! Parametric articulated body: shape and pose-corrective blendshapes,
//! forward kinematics over the joint tree, and linear blend skinning.

mod io;
mod kinematics;
mod mini;
mod params;
mod template;

pub use io::{load_template, save_template, template_from_bytes, template_to_bytes, template_to_text, MAGIC};
pub use kinematics::{
    blend, global_transforms, joints3d, joints_jacobian, keypoints3d, pose_feature, regress_joints, shape_mesh, skin,
    JointJacobian, RigidTransform,
};
pub use mini::{make_mini_template, MiniTemplateConfig, GIRTH, JOINT_NAMES, KEYPOINTS, SHAPE_DIRECTIONS};
pub use params::{BodyParams, Mesh};
pub use template::{BodyTemplate, BoneCapsule, BoneEnd, MeasurementSpec, TemplateParts};
