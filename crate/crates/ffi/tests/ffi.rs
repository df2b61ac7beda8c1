use std::ffi::{CStr, CString};
use std::ptr;

use mvhuman::body_model::{keypoints3d, make_mini_template, skin, BodyParams, MiniTemplateConfig};
use mvhuman::camera::{canonical_views, project};
use mvhuman::fitting::{run_schedule, FitConfig, FitReport, ViewFeature};
use mvhuman::metrics::{evaluate, EvalOptions};
use mvhuman_ffi::*;

struct Template(*mut MvhTemplate);

impl Template {
    fn mini() -> Self {
        let mut t = ptr::null_mut();
        assert_eq!(unsafe { mvh_template_new_mini(&mut t) }, MvhStatus::Ok);
        assert!(!t.is_null());
        Template(t)
    }

    fn dims(&self) -> MvhTemplateDims {
        let mut d = MvhTemplateDims::default();
        assert_eq!(unsafe { mvh_template_dims(self.0, &mut d) }, MvhStatus::Ok);
        d
    }
}

impl Drop for Template {
    fn drop(&mut self) {
        unsafe { mvh_template_free(self.0) }
    }
}

fn last_error() -> Option<String> {
    let p = mvh_last_error_message();
    (!p.is_null()).then(|| unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned())
}

fn sample_body(template: &mvhuman::body_model::BodyTemplate) -> BodyParams {
    let mut b = BodyParams::zeros(template);
    for (j, r) in b.pose.iter_mut().enumerate() {
        *r = [
            0.1 * ((j % 3) as f64 - 1.0),
            0.05 * (j % 2) as f64,
            -0.08 * ((j % 4) as f64 - 1.5),
        ];
    }
    for (i, s) in b.shape.iter_mut().enumerate() {
        *s = 0.3 * (i as f64 - 4.5) / 4.5;
    }
    b
}

fn flat_pose(b: &BodyParams) -> Vec<f64> {
    b.pose.iter().flatten().copied().collect()
}

#[test]
fn dims_match_the_core_template() {
    let t = Template::mini();
    let core = make_mini_template(&MiniTemplateConfig::default()).unwrap();
    let d = t.dims();
    assert_eq!(d.joints, core.joint_count());
    assert_eq!(d.vertices, core.vertex_count());
    assert_eq!(d.faces, core.faces().len());
    assert_eq!(d.keypoints, core.keypoint_count());
    assert_eq!(d.pose_len, 3 * (core.joint_count() - 1));
    assert_eq!(d.shape_len, core.shape_dim());
    let mut faces = vec![0u32; 3 * d.faces];
    assert_eq!(
        unsafe { mvh_template_faces(t.0, faces.as_mut_ptr(), faces.len()) },
        MvhStatus::Ok
    );
    assert_eq!(faces, core.faces().iter().flatten().copied().collect::<Vec<_>>());
}

#[test]
fn skin_and_keypoints_match_core() {
    let t = Template::mini();
    let core = make_mini_template(&MiniTemplateConfig::default()).unwrap();
    let d = t.dims();
    let body = sample_body(&core);
    let pose = flat_pose(&body);
    let mut verts = vec![0.0; 3 * d.vertices];
    let status = unsafe {
        mvh_skin(
            t.0,
            pose.as_ptr(),
            pose.len(),
            body.shape.as_ptr(),
            body.shape.len(),
            verts.as_mut_ptr(),
            verts.len(),
        )
    };
    assert_eq!(status, MvhStatus::Ok);
    let expect: Vec<f64> = skin(&core, &body)
        .unwrap()
        .vertices
        .iter()
        .flat_map(|v| [v.x, v.y, v.z])
        .collect();
    assert_eq!(verts, expect);

    let mut kp = vec![0.0; 3 * d.keypoints];
    let status = unsafe {
        mvh_keypoints3d(
            t.0,
            pose.as_ptr(),
            pose.len(),
            body.shape.as_ptr(),
            body.shape.len(),
            kp.as_mut_ptr(),
            kp.len(),
        )
    };
    assert_eq!(status, MvhStatus::Ok);
    let expect: Vec<f64> = keypoints3d(&core, &body)
        .unwrap()
        .iter()
        .flat_map(|v| [v.x, v.y, v.z])
        .collect();
    assert_eq!(kp, expect);
}

#[test]
fn errors_set_and_successes_clear_the_message() {
    let t = Template::mini();
    assert_eq!(
        unsafe { mvh_template_dims(ptr::null(), ptr::null_mut()) },
        MvhStatus::NullPointer
    );
    assert!(last_error().unwrap().contains("null"));
    t.dims();
    assert!(last_error().is_none());

    let d = t.dims();
    let pose = vec![0.0; d.pose_len];
    let shape = vec![0.0; d.shape_len];
    let mut small = vec![0.0; 3];
    let status = unsafe {
        mvh_skin(
            t.0,
            pose.as_ptr(),
            pose.len(),
            shape.as_ptr(),
            shape.len(),
            small.as_mut_ptr(),
            small.len(),
        )
    };
    assert_eq!(status, MvhStatus::BufferTooSmall);
    assert!(last_error().unwrap().contains("required"));

    let mut out = vec![0.0; 3 * d.vertices];
    let status = unsafe {
        mvh_skin(
            t.0,
            pose.as_ptr(),
            pose.len() - 1,
            shape.as_ptr(),
            shape.len(),
            out.as_mut_ptr(),
            out.len(),
        )
    };
    assert_eq!(status, MvhStatus::Dimension);

    let path = CString::new("/nonexistent/template.mvbt").unwrap();
    let mut h = ptr::null_mut();
    assert_eq!(unsafe { mvh_template_load(path.as_ptr(), &mut h) }, MvhStatus::Io);
    assert!(h.is_null());
}

#[test]
fn template_save_load_round_trip() {
    let t = Template::mini();
    let dir = tempfile::tempdir().unwrap();
    let path = CString::new(dir.path().join("t.mvbt").to_str().unwrap()).unwrap();
    assert_eq!(unsafe { mvh_template_save(t.0, path.as_ptr()) }, MvhStatus::Ok);
    let mut h = ptr::null_mut();
    assert_eq!(unsafe { mvh_template_load(path.as_ptr(), &mut h) }, MvhStatus::Ok);
    let loaded = Template(h);
    assert_eq!(loaded.dims(), t.dims());
}

#[test]
fn project_matches_the_weak_perspective_formula() {
    let cam = MvhCamera {
        scale: 120.0,
        rotation: [0.1, -0.4, 0.2],
        translation: [3.0, -7.0],
    };
    let pts = [0.2, 1.1, -0.3, -0.5, 0.0, 0.9];
    let mut out = [0.0; 4];
    assert_eq!(
        unsafe { mvh_project(&cam, pts.as_ptr(), 2, out.as_mut_ptr(), 4) },
        MvhStatus::Ok
    );
    // Rodrigues rotation written out independently.
    let r = nalgebra::Rotation3::from_scaled_axis(nalgebra::Vector3::from(cam.rotation));
    for i in 0..2 {
        let x = r * nalgebra::Vector3::new(pts[3 * i], pts[3 * i + 1], pts[3 * i + 2]);
        assert!((out[2 * i] - (cam.scale * x.x + cam.translation[0])).abs() < 1e-9);
        assert!((out[2 * i + 1] - (cam.scale * x.y + cam.translation[1])).abs() < 1e-9);
    }
}

#[test]
fn fit_matches_the_core_schedule() {
    let t = Template::mini();
    let core = make_mini_template(&MiniTemplateConfig::default()).unwrap();
    let body = sample_body(&core);
    let kp = keypoints3d(&core, &body).unwrap();
    let cams = canonical_views(4).unwrap();
    let p = core.keypoint_count();
    let views: Vec<ViewFeature> = cams
        .iter()
        .enumerate()
        .map(|(v, c)| {
            let xy = project(c, &kp).iter().map(|x| [x.x * 100.0, x.y * 100.0]).collect();
            ViewFeature::new(v, xy, vec![true; p])
        })
        .collect();
    let joints2d: Vec<f64> = views
        .iter()
        .flat_map(|v| v.joints2d.iter().flatten().copied())
        .collect();
    let visibility = vec![1u8; 4 * p];
    let config = CString::new(r#"{"stages": 1, "max_inner_iters": 5}"#).unwrap();

    let mut fit = ptr::null_mut();
    let status = unsafe {
        mvh_fit(
            t.0,
            4,
            joints2d.as_ptr(),
            visibility.as_ptr(),
            config.as_ptr(),
            &mut fit,
        )
    };
    assert_eq!(status, MvhStatus::Ok, "{:?}", last_error());

    let cfg = FitConfig {
        stages: 1,
        max_inner_iters: 5,
        ..FitConfig::default()
    };
    let expect = run_schedule(&views, &core, &cfg, None).unwrap();

    let d = t.dims();
    let mut pose = vec![0.0; d.pose_len];
    let mut shape = vec![0.0; d.shape_len];
    let status = unsafe { mvh_fit_body(fit, pose.as_mut_ptr(), pose.len(), shape.as_mut_ptr(), shape.len()) };
    assert_eq!(status, MvhStatus::Ok);
    assert_eq!(pose, flat_pose(&expect.state.body));
    assert_eq!(shape, expect.state.body.shape);

    let mut n = 0;
    assert_eq!(unsafe { mvh_fit_view_count(fit, &mut n) }, MvhStatus::Ok);
    assert_eq!(n, 4);
    let mut cam = MvhCamera::default();
    assert_eq!(unsafe { mvh_fit_camera(fit, 2, &mut cam) }, MvhStatus::Ok);
    assert_eq!(cam, MvhCamera::from(&expect.state.cameras[2]));
    assert_eq!(unsafe { mvh_fit_camera(fit, 4, &mut cam) }, MvhStatus::InvalidArgument);
    let mut loss = 0.0;
    assert_eq!(unsafe { mvh_fit_final_loss(fit, &mut loss) }, MvhStatus::Ok);
    assert_eq!(loss, expect.mean_final_loss);

    let mut need = 0;
    assert_eq!(
        unsafe { mvh_fit_to_json(fit, ptr::null_mut(), 0, &mut need) },
        MvhStatus::Ok
    );
    let mut buf = vec![0 as std::ffi::c_char; need];
    assert_eq!(
        unsafe { mvh_fit_to_json(fit, buf.as_mut_ptr(), need - 1, &mut need) },
        MvhStatus::BufferTooSmall
    );
    assert_eq!(
        unsafe { mvh_fit_to_json(fit, buf.as_mut_ptr(), buf.len(), &mut need) },
        MvhStatus::Ok
    );
    let json = unsafe { CStr::from_ptr(buf.as_ptr()) }.to_str().unwrap();
    let report: FitReport = serde_json::from_str(json).unwrap();
    assert_eq!(report.state.body, expect.state.body);
    unsafe { mvh_fit_free(fit) };
}

#[test]
fn fit_rejects_bad_input() {
    let t = Template::mini();
    let p = t.dims().keypoints;
    let xy = vec![0.0; 2 * p];
    let vis = vec![1u8; p];
    let bad = CString::new(r#"{"stagez": 1}"#).unwrap();
    let mut fit = ptr::null_mut();
    let status = unsafe { mvh_fit(t.0, 1, xy.as_ptr(), vis.as_ptr(), bad.as_ptr(), &mut fit) };
    assert_eq!(status, MvhStatus::Config);
    assert!(last_error().unwrap().contains("stagez"));
    let status = unsafe { mvh_fit(t.0, 0, xy.as_ptr(), vis.as_ptr(), ptr::null(), &mut fit) };
    assert_eq!(status, MvhStatus::InvalidArgument);
    let hidden = vec![0u8; p];
    let status = unsafe { mvh_fit(t.0, 1, xy.as_ptr(), hidden.as_ptr(), ptr::null(), &mut fit) };
    assert_eq!(status, MvhStatus::NoConstraints);
    assert!(fit.is_null());
}

#[test]
fn evaluate_matches_core() {
    let t = Template::mini();
    let core = make_mini_template(&MiniTemplateConfig::default()).unwrap();
    let gt = sample_body(&core);
    let pred = BodyParams::zeros(&core);
    let (pp, gp) = (flat_pose(&pred), flat_pose(&gt));
    let mut m = MvhMetrics::default();
    let status = unsafe {
        mvh_evaluate(
            t.0,
            pp.as_ptr(),
            pred.shape.as_ptr(),
            gp.as_ptr(),
            gt.shape.as_ptr(),
            pp.len(),
            gt.shape.len(),
            true,
            &mut m,
        )
    };
    assert_eq!(status, MvhStatus::Ok, "{:?}", last_error());
    let r = evaluate(&core, &pred, &gt, &EvalOptions::default()).unwrap();
    assert_eq!(m.mpjpe_mm, r.mpjpe_mm);
    assert_eq!(m.pa_mpjpe_mm, r.pa_mpjpe_mm);
    assert_eq!(m.pck, r.pck_at_150mm);
    assert_eq!(m.auc, r.auc_0_150);
    assert_eq!(Some(m.hausdorff_mm), r.hausdorff_mm);

    let status = unsafe {
        mvh_evaluate(
            t.0,
            gp.as_ptr(),
            gt.shape.as_ptr(),
            gp.as_ptr(),
            gt.shape.as_ptr(),
            gp.len(),
            gt.shape.len(),
            false,
            &mut m,
        )
    };
    assert_eq!(status, MvhStatus::Ok);
    assert_eq!(m.mpjpe_mm, 0.0);
    assert!(m.hausdorff_mm.is_nan());
}

#[test]
fn version_is_the_package_version() {
    let v = unsafe { CStr::from_ptr(mvh_version()) }.to_str().unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
}

#[test]
fn header_declares_every_export() {
    let root = std::path::Path::new(env!("CARGO_MANIFEST_DIR"));
    let header = std::fs::read_to_string(root.join("include/mvhuman.h")).unwrap();
    let src = std::fs::read_to_string(root.join("src/lib.rs")).unwrap();
    let exports: Vec<&str> = src
        .lines()
        .filter_map(|l| l.split("extern \"C\" fn ").nth(1))
        .map(|rest| rest.split('(').next().unwrap())
        .collect();
    assert!(exports.len() >= 18);
    for name in exports {
        assert!(header.contains(&format!("{name}(")), "{name} missing from header");
    }
}

#[test]
fn header_compiles_as_c() {
    let Some(cc) = ["cc", "gcc", "clang"]
        .into_iter()
        .find(|c| std::process::Command::new(c).arg("--version").output().is_ok())
    else {
        eprintln!("no C compiler found; skipping");
        return;
    };
    let root = std::path::Path::new(env!("CARGO_MANIFEST_DIR"));
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("use.c");
    std::fs::write(
        &src,
        "#include \"mvhuman.h\"\n\
         int main(void) {\n\
           MvhTemplate *t = NULL;\n\
           MvhTemplateDims d;\n\
           if (mvh_template_new_mini(&t) != MVH_STATUS_OK) return 1;\n\
           mvh_template_dims(t, &d);\n\
           mvh_template_free(t);\n\
           return (int)d.joints;\n\
         }\n",
    )
    .unwrap();
    let out = std::process::Command::new(cc)
        .args(["-std=c99", "-Wall", "-Werror", "-fsyntax-only", "-I"])
        .arg(root.join("include"))
        .arg(&src)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}
