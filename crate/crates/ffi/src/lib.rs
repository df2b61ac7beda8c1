//! C ABI over `mvhuman`. Objects are opaque handles created and released by
//! this library; every fallible call returns an `MvhStatus` and leaves a
//! message retrievable with `mvh_last_error_message` on the calling thread.
//! Output arrays are caller-allocated and their lengths are checked.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;

use mvhuman::body_model::{
    keypoints3d, load_template, make_mini_template, save_template, skin, BodyParams, BodyTemplate, MiniTemplateConfig,
};
use mvhuman::camera::{project, CameraParams};
use mvhuman::fitting::{run_schedule, FitConfig, FitReport, ViewFeature};
use mvhuman::metrics::{evaluate, EvalOptions};
use mvhuman::Error;

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MvhStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    BufferTooSmall = 3,
    Dimension = 4,
    Invariant = 5,
    Config = 6,
    Format = 7,
    Io = 8,
    NoConstraints = 9,
    Degenerate = 10,
    Empty = 11,
    Measurement = 12,
    Penetration = 13,
    Panic = 14,
}

impl From<&Error> for MvhStatus {
    fn from(e: &Error) -> Self {
        match e {
            Error::Dimension { .. } => MvhStatus::Dimension,
            Error::Invariant { .. } => MvhStatus::Invariant,
            Error::Config(_) => MvhStatus::Config,
            Error::Format { .. } => MvhStatus::Format,
            Error::Io { .. } => MvhStatus::Io,
            Error::NoConstraints => MvhStatus::NoConstraints,
            Error::Degenerate(_) => MvhStatus::Degenerate,
            Error::Empty(_) => MvhStatus::Empty,
            Error::EmptyCrossSection(_) => MvhStatus::Measurement,
            Error::PenetrationNotConverged { .. } => MvhStatus::Penetration,
        }
    }
}

/// Body template (rest mesh, skinning, regressors, shape directions).
pub struct MvhTemplate(BodyTemplate);

/// Result of a multi-view fit.
pub struct MvhFit(FitReport);

/// Sizes of a template's arrays.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct MvhTemplateDims {
    pub joints: usize,
    pub vertices: usize,
    pub faces: usize,
    pub keypoints: usize,
    /// Length of a pose vector: 3 axis-angle entries per non-root joint.
    pub pose_len: usize,
    pub shape_len: usize,
}

/// Weak-perspective camera: `x = scale * (R(rotation) X)_xy + translation`.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct MvhCamera {
    pub scale: f64,
    pub rotation: [f64; 3],
    pub translation: [f64; 2],
}

impl From<&CameraParams> for MvhCamera {
    fn from(c: &CameraParams) -> Self {
        Self {
            scale: c.scale,
            rotation: c.rotation,
            translation: c.translation,
        }
    }
}

impl From<&MvhCamera> for CameraParams {
    fn from(c: &MvhCamera) -> Self {
        CameraParams {
            scale: c.scale,
            rotation: c.rotation,
            translation: c.translation,
        }
    }
}

/// Evaluation scores; `hausdorff_mm` is NaN when not requested.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct MvhMetrics {
    pub mpjpe_mm: f64,
    pub pa_mpjpe_mm: f64,
    pub pck: f64,
    pub auc: f64,
    pub hausdorff_mm: f64,
    pub measurement_mean_rel_error: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

struct Failure(MvhStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure(MvhStatus::from(&e), e.to_string())
    }
}

type FfiResult<T> = Result<T, Failure>;

fn fail<T>(status: MvhStatus, msg: impl Into<String>) -> FfiResult<T> {
    Err(Failure(status, msg.into()))
}

fn set_last_error(msg: Option<String>) {
    let c = msg.map(|m| CString::new(m.replace('\0', " ")).expect("interior NUL removed"));
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

/// Runs `f`, turning errors and panics into a status plus a thread-local message.
fn guard(f: impl FnOnce() -> FfiResult<()>) -> MvhStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_last_error(None);
            MvhStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_last_error(Some(msg));
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".to_string());
            set_last_error(Some(format!("internal panic: {msg}")));
            MvhStatus::Panic
        }
    }
}

unsafe fn deref<'a, T>(p: *const T, what: &str) -> FfiResult<&'a T> {
    p.as_ref()
        .map_or_else(|| fail(MvhStatus::NullPointer, format!("{what} is null")), Ok)
}

unsafe fn slice<'a, T>(p: *const T, len: usize, what: &str) -> FfiResult<&'a [T]> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return fail(MvhStatus::NullPointer, format!("{what} is null"));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn out_slice<'a, T>(p: *mut T, len: usize, need: usize, what: &str) -> FfiResult<&'a mut [T]> {
    if len < need {
        return fail(
            MvhStatus::BufferTooSmall,
            format!("{what} holds {len} elements, {need} required"),
        );
    }
    if p.is_null() {
        if need == 0 {
            return Ok(&mut []);
        }
        return fail(MvhStatus::NullPointer, format!("{what} is null"));
    }
    Ok(std::slice::from_raw_parts_mut(p, need))
}

unsafe fn write_out<T>(p: *mut T, value: T, what: &str) -> FfiResult<()> {
    if p.is_null() {
        return fail(MvhStatus::NullPointer, format!("{what} is null"));
    }
    p.write(value);
    Ok(())
}

unsafe fn path_arg(p: *const c_char, what: &str) -> FfiResult<PathBuf> {
    if p.is_null() {
        return fail(MvhStatus::NullPointer, format!("{what} is null"));
    }
    match CStr::from_ptr(p).to_str() {
        Ok(s) => Ok(PathBuf::from(s)),
        Err(_) => fail(MvhStatus::InvalidArgument, format!("{what} is not valid UTF-8")),
    }
}

unsafe fn body_arg(
    t: &BodyTemplate,
    pose: *const f64,
    pose_len: usize,
    shape: *const f64,
    shape_len: usize,
) -> FfiResult<BodyParams> {
    let pose = slice(pose, pose_len, "pose")?;
    let shape = slice(shape, shape_len, "shape")?;
    let expected = 3 * (t.joint_count() - 1);
    if pose.len() != expected {
        return Err(Error::Dimension {
            what: "pose",
            expected,
            got: pose.len(),
        }
        .into());
    }
    let body = BodyParams {
        pose: pose.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect(),
        shape: shape.to_vec(),
    };
    body.check(t)?;
    Ok(body)
}

fn copy_points(points: &[nalgebra::Vector3<f64>], out: &mut [f64]) {
    for (dst, p) in out.chunks_exact_mut(3).zip(points) {
        dst.copy_from_slice(p.as_slice());
    }
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn mvh_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failed call on this thread, or null after a success.
/// The pointer stays valid until the next call into this library on the
/// same thread.
#[no_mangle]
pub extern "C" fn mvh_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(std::ptr::null(), |c| c.as_ptr()))
}

/// Builds the built-in procedural template.
///
/// # Safety
/// `out` must be a valid pointer to writable storage for one handle.
#[no_mangle]
pub unsafe extern "C" fn mvh_template_new_mini(out: *mut *mut MvhTemplate) -> MvhStatus {
    guard(|| {
        let t = make_mini_template(&MiniTemplateConfig::default())?;
        write_out(out, Box::into_raw(Box::new(MvhTemplate(t))), "out")
    })
}

/// Loads a template file (binary or JSON container).
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` as in `mvh_template_new_mini`.
#[no_mangle]
pub unsafe extern "C" fn mvh_template_load(path: *const c_char, out: *mut *mut MvhTemplate) -> MvhStatus {
    guard(|| {
        let path = path_arg(path, "path")?;
        let t = load_template(&path)?;
        write_out(out, Box::into_raw(Box::new(MvhTemplate(t))), "out")
    })
}

/// Saves a template in the binary container format.
///
/// # Safety
/// `template` must be a live handle; `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn mvh_template_save(template: *const MvhTemplate, path: *const c_char) -> MvhStatus {
    guard(|| {
        let t = deref(template, "template")?;
        let path = path_arg(path, "path")?;
        Ok(save_template(&t.0, &path)?)
    })
}

/// Releases a template. Null is ignored.
///
/// # Safety
/// `template` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn mvh_template_free(template: *mut MvhTemplate) {
    if !template.is_null() {
        drop(Box::from_raw(template));
    }
}

/// Array sizes of a template.
///
/// # Safety
/// `template` must be a live handle; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn mvh_template_dims(template: *const MvhTemplate, out: *mut MvhTemplateDims) -> MvhStatus {
    guard(|| {
        let t = &deref(template, "template")?.0;
        let dims = MvhTemplateDims {
            joints: t.joint_count(),
            vertices: t.vertex_count(),
            faces: t.faces().len(),
            keypoints: t.keypoint_count(),
            pose_len: 3 * (t.joint_count() - 1),
            shape_len: t.shape_dim(),
        };
        write_out(out, dims, "out")
    })
}

/// Copies triangle vertex indices (3 per face) into `out`.
///
/// # Safety
/// `template` must be a live handle; `out` must hold `out_len` elements.
#[no_mangle]
pub unsafe extern "C" fn mvh_template_faces(template: *const MvhTemplate, out: *mut u32, out_len: usize) -> MvhStatus {
    guard(|| {
        let t = &deref(template, "template")?.0;
        let dst = out_slice(out, out_len, 3 * t.faces().len(), "out")?;
        for (d, f) in dst.chunks_exact_mut(3).zip(t.faces()) {
            d.copy_from_slice(f);
        }
        Ok(())
    })
}

/// Posed mesh vertices (metres, xyz interleaved) for the given pose and
/// shape vectors.
///
/// # Safety
/// `template` must be a live handle; every array must hold its stated length.
#[no_mangle]
pub unsafe extern "C" fn mvh_skin(
    template: *const MvhTemplate,
    pose: *const f64,
    pose_len: usize,
    shape: *const f64,
    shape_len: usize,
    out: *mut f64,
    out_len: usize,
) -> MvhStatus {
    guard(|| {
        let t = &deref(template, "template")?.0;
        let body = body_arg(t, pose, pose_len, shape, shape_len)?;
        let dst = out_slice(out, out_len, 3 * t.vertex_count(), "out")?;
        copy_points(&skin(t, &body)?.vertices, dst);
        Ok(())
    })
}

/// 3D evaluation keypoints (metres, xyz interleaved).
///
/// # Safety
/// As `mvh_skin`.
#[no_mangle]
pub unsafe extern "C" fn mvh_keypoints3d(
    template: *const MvhTemplate,
    pose: *const f64,
    pose_len: usize,
    shape: *const f64,
    shape_len: usize,
    out: *mut f64,
    out_len: usize,
) -> MvhStatus {
    guard(|| {
        let t = &deref(template, "template")?.0;
        let body = body_arg(t, pose, pose_len, shape, shape_len)?;
        let dst = out_slice(out, out_len, 3 * t.keypoint_count(), "out")?;
        copy_points(&keypoints3d(t, &body)?, dst);
        Ok(())
    })
}

/// Projects `n_points` 3D points (xyz interleaved) to pixels (xy interleaved).
///
/// # Safety
/// `camera` must be readable; `points` must hold `3 * n_points` values and
/// `out` `out_len` values.
#[no_mangle]
pub unsafe extern "C" fn mvh_project(
    camera: *const MvhCamera,
    points: *const f64,
    n_points: usize,
    out: *mut f64,
    out_len: usize,
) -> MvhStatus {
    guard(|| {
        let cam = CameraParams::from(deref(camera, "camera")?);
        let pts: Vec<_> = slice(points, 3 * n_points, "points")?
            .chunks_exact(3)
            .map(|c| nalgebra::Vector3::new(c[0], c[1], c[2]))
            .collect();
        let dst = out_slice(out, out_len, 2 * n_points, "out")?;
        for (d, p) in dst.chunks_exact_mut(2).zip(project(&cam, &pts)) {
            d.copy_from_slice(p.as_slice());
        }
        Ok(())
    })
}

/// Fits body and cameras to `n_views` views of 2D keypoints.
///
/// `joints2d` holds `n_views * keypoints * 2` pixel coordinates (view-major),
/// `visibility` `n_views * keypoints` flags (non-zero = visible).
/// `config_json` is a JSON fitting configuration; null or `"{}"` selects
/// the defaults. Fewer views than the configured minimum are padded.
///
/// # Safety
/// `template` must be a live handle; the arrays must hold the lengths above;
/// `config_json` must be null or NUL-terminated; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn mvh_fit(
    template: *const MvhTemplate,
    n_views: usize,
    joints2d: *const f64,
    visibility: *const u8,
    config_json: *const c_char,
    out: *mut *mut MvhFit,
) -> MvhStatus {
    guard(|| {
        let t = &deref(template, "template")?.0;
        if n_views == 0 {
            return fail(MvhStatus::InvalidArgument, "n_views must be at least 1");
        }
        let p = t.keypoint_count();
        let xy = slice(joints2d, n_views * p * 2, "joints2d")?;
        let vis = slice(visibility, n_views * p, "visibility")?;
        let config: FitConfig = if config_json.is_null() {
            FitConfig::default()
        } else {
            let text = CStr::from_ptr(config_json)
                .to_str()
                .map_err(|_| Failure(MvhStatus::InvalidArgument, "config_json is not valid UTF-8".into()))?;
            serde_json::from_str(text).map_err(|e| Failure(MvhStatus::Config, format!("config_json: {e}")))?
        };
        let views: Vec<ViewFeature> = (0..n_views)
            .map(|v| {
                ViewFeature::new(
                    v,
                    xy[v * p * 2..(v + 1) * p * 2]
                        .chunks_exact(2)
                        .map(|c| [c[0], c[1]])
                        .collect(),
                    vis[v * p..(v + 1) * p].iter().map(|&b| b != 0).collect(),
                )
            })
            .collect();
        let report = run_schedule(&views, t, &config, None)?;
        write_out(out, Box::into_raw(Box::new(MvhFit(report))), "out")
    })
}

/// Releases a fit result. Null is ignored.
///
/// # Safety
/// `fit` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn mvh_fit_free(fit: *mut MvhFit) {
    if !fit.is_null() {
        drop(Box::from_raw(fit));
    }
}

/// Fitted pose (`pose_len` values) and shape (`shape_len` values).
///
/// # Safety
/// `fit` must be a live handle; the output arrays must hold their lengths.
#[no_mangle]
pub unsafe extern "C" fn mvh_fit_body(
    fit: *const MvhFit,
    pose: *mut f64,
    pose_len: usize,
    shape: *mut f64,
    shape_len: usize,
) -> MvhStatus {
    guard(|| {
        let body = &deref(fit, "fit")?.0.state.body;
        let dst = out_slice(pose, pose_len, 3 * body.pose.len(), "pose")?;
        for (d, r) in dst.chunks_exact_mut(3).zip(&body.pose) {
            d.copy_from_slice(r);
        }
        out_slice(shape, shape_len, body.shape.len(), "shape")?.copy_from_slice(&body.shape);
        Ok(())
    })
}

/// Number of fitted cameras (after padding).
///
/// # Safety
/// `fit` must be a live handle; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn mvh_fit_view_count(fit: *const MvhFit, out: *mut usize) -> MvhStatus {
    guard(|| write_out(out, deref(fit, "fit")?.0.state.cameras.len(), "out"))
}

/// Fitted camera of one view.
///
/// # Safety
/// `fit` must be a live handle; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn mvh_fit_camera(fit: *const MvhFit, view: usize, out: *mut MvhCamera) -> MvhStatus {
    guard(|| {
        let cams = &deref(fit, "fit")?.0.state.cameras;
        match cams.get(view) {
            Some(c) => write_out(out, MvhCamera::from(c), "out"),
            None => fail(
                MvhStatus::InvalidArgument,
                format!("view {view} out of range for {} cameras", cams.len()),
            ),
        }
    })
}

/// Mean final per-view loss.
///
/// # Safety
/// `fit` must be a live handle; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn mvh_fit_final_loss(fit: *const MvhFit, out: *mut f64) -> MvhStatus {
    guard(|| write_out(out, deref(fit, "fit")?.0.mean_final_loss, "out"))
}

/// Full fit report as NUL-terminated JSON. `required` receives the buffer
/// size needed including the terminator; a null `buf` with `cap` 0 only
/// queries the size.
///
/// # Safety
/// `fit` must be a live handle; `buf` must hold `cap` bytes; `required`
/// must be writable.
#[no_mangle]
pub unsafe extern "C" fn mvh_fit_to_json(
    fit: *const MvhFit,
    buf: *mut c_char,
    cap: usize,
    required: *mut usize,
) -> MvhStatus {
    guard(|| {
        let json = deref(fit, "fit")?.0.to_json()?;
        let need = json.len() + 1;
        write_out(required, need, "required")?;
        if buf.is_null() && cap == 0 {
            return Ok(());
        }
        let dst = out_slice(buf.cast::<u8>(), cap, need, "buf")?;
        dst[..json.len()].copy_from_slice(json.as_bytes());
        dst[json.len()] = 0;
        Ok(())
    })
}

/// Scores predicted against ground-truth body parameters with the default
/// evaluation options (similarity alignment, PCK at 150 mm).
///
/// # Safety
/// `template` must be a live handle; every array must hold its stated
/// length; `out` writable.
#[no_mangle]
#[allow(clippy::too_many_arguments)]
pub unsafe extern "C" fn mvh_evaluate(
    template: *const MvhTemplate,
    pred_pose: *const f64,
    pred_shape: *const f64,
    gt_pose: *const f64,
    gt_shape: *const f64,
    pose_len: usize,
    shape_len: usize,
    with_hausdorff: bool,
    out: *mut MvhMetrics,
) -> MvhStatus {
    guard(|| {
        let t = &deref(template, "template")?.0;
        let pred = body_arg(t, pred_pose, pose_len, pred_shape, shape_len)?;
        let gt = body_arg(t, gt_pose, pose_len, gt_shape, shape_len)?;
        let opts = EvalOptions {
            hausdorff: with_hausdorff,
            ..EvalOptions::default()
        };
        let r = evaluate(t, &pred, &gt, &opts)?;
        let m = MvhMetrics {
            mpjpe_mm: r.mpjpe_mm,
            pa_mpjpe_mm: r.pa_mpjpe_mm,
            pck: r.pck_at_150mm,
            auc: r.auc_0_150,
            hausdorff_mm: r.hausdorff_mm.unwrap_or(f64::NAN),
            measurement_mean_rel_error: r.measurement_mean_rel_error,
        };
        write_out(out, m, "out")
    })
}
