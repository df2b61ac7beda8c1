use std::path::Path;
use std::process::{Command, Output};

use mvhuman::body_model::{make_mini_template, skin, BodyParams, MiniTemplateConfig};
use mvhuman::cli::{fit_report_file, EvalOutput, FitSummary, EXIT_DATA, EXIT_USAGE, EXIT_VERIFICATION};
use mvhuman::fitting::FitReport;
use mvhuman::metrics::{evaluate, EvalOptions};
use mvhuman::obj::read_obj;
use mvhuman::synth::load_dataset;

fn mvhuman(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mvhuman"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("spawn mvhuman")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn gen_small(dir: &Path, out: &str, seed: &str) {
    let o = mvhuman(
        dir,
        &[
            "--seed",
            seed,
            "--out",
            out,
            "gen",
            "--n-shapes",
            "2",
            "--poses-per-shape",
            "1",
        ],
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
}

fn dir_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let rel = p.strip_prefix(dir).unwrap().to_string_lossy().into_owned();
                files.push((rel, std::fs::read(&p).unwrap()));
            }
        }
    }
    files.sort();
    files
}

#[test]
fn gen_is_deterministic_across_thread_counts() {
    let tmp = tempfile::tempdir().unwrap();
    gen_small(tmp.path(), "a", "11");
    let o = mvhuman(
        tmp.path(),
        &[
            "--seed",
            "11",
            "--jobs",
            "1",
            "--out",
            "b",
            "gen",
            "--n-shapes",
            "2",
            "--poses-per-shape",
            "1",
        ],
    );
    assert_eq!(code(&o), 0);
    let a = dir_bytes(&tmp.path().join("a"));
    assert!(!a.is_empty());
    assert_eq!(a, dir_bytes(&tmp.path().join("b")));
    gen_small(tmp.path(), "c", "12");
    assert_ne!(a, dir_bytes(&tmp.path().join("c")));
}

#[test]
fn fit_then_eval_round_trip() {
    let tmp = tempfile::tempdir().unwrap();
    gen_small(tmp.path(), "ds", "3");
    let o = mvhuman(
        tmp.path(),
        &["--out", "fits", "fit", "--dataset", "ds", "--stages", "1"],
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let summary: FitSummary =
        serde_json::from_slice(&std::fs::read(tmp.path().join("fits/fit_summary.json")).unwrap()).unwrap();
    assert_eq!(summary.instances, 2);
    assert_eq!(summary.stages, 1);
    for f in &summary.files {
        let r = FitReport::load(tmp.path().join("fits").join(f)).unwrap();
        assert_eq!(r.stages, 1);
        assert_eq!(r.state.cameras.len(), 4);
    }
    assert!(tmp.path().join("fits/run_config.toml").is_file());

    let o = mvhuman(
        tmp.path(),
        &[
            "--out",
            "ev",
            "eval",
            "--dataset",
            "ds",
            "--reports",
            "fits",
            "--no-hausdorff",
        ],
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(stdout.contains("PA-MPJPE"));
    let ev: EvalOutput = serde_json::from_slice(&std::fs::read(tmp.path().join("ev/eval.json")).unwrap()).unwrap();
    assert_eq!(ev.rows.len() + ev.failures.len(), 2);
    assert!(ev.rows.iter().all(|r| r.metrics.hausdorff_mm.is_none()));
}

#[test]
fn fit_with_one_view_pads_to_four() {
    let tmp = tempfile::tempdir().unwrap();
    gen_small(tmp.path(), "ds", "4");
    let o = mvhuman(
        tmp.path(),
        &[
            "--out",
            "fits",
            "fit",
            "--dataset",
            "ds",
            "--views",
            "1",
            "--stages",
            "1",
        ],
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let r = FitReport::load(tmp.path().join("fits/fit_000000.json")).unwrap();
    assert_eq!(r.source_ids, vec![0, 0, 0, 0]);
    assert_eq!(r.state.cameras.len(), 4);
}

#[test]
fn config_file_drives_gen() {
    let tmp = tempfile::tempdir().unwrap();
    std::fs::write(
        tmp.path().join("run.toml"),
        "seed = 2\nout = \"cfg\"\n[gen]\nn_shapes = 2\nposes_per_shape = 1\nnoise_sigma_px = 0.0\n",
    )
    .unwrap();
    let o = mvhuman(tmp.path(), &["--config", "run.toml", "gen"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let manifest: serde_json::Value =
        serde_json::from_slice(&std::fs::read(tmp.path().join("cfg/manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["seed"], 2);
    assert_eq!(manifest["instances"].as_array().unwrap().len(), 2);
}

#[test]
fn usage_errors_exit_2() {
    let tmp = tempfile::tempdir().unwrap();
    let o = mvhuman(tmp.path(), &["fit", "--dataset", "missing"]);
    assert_eq!(code(&o), EXIT_USAGE);
    assert!(String::from_utf8_lossy(&o.stderr).contains("does not exist"));
    assert_eq!(code(&mvhuman(tmp.path(), &["gen", "--bogus"])), EXIT_USAGE);
    std::fs::write(tmp.path().join("bad.toml"), "[gen]\nnshapes = 1\n").unwrap();
    assert_eq!(code(&mvhuman(tmp.path(), &["--config", "bad.toml", "gen"])), EXIT_USAGE);
    assert_eq!(code(&mvhuman(tmp.path(), &["gen", "--n-views", "0"])), EXIT_USAGE);
}

#[test]
fn missing_report_is_a_data_error() {
    let tmp = tempfile::tempdir().unwrap();
    gen_small(tmp.path(), "ds", "5");
    std::fs::create_dir(tmp.path().join("empty")).unwrap();
    let o = mvhuman(tmp.path(), &["eval", "--dataset", "ds", "--reports", "empty"]);
    assert_eq!(code(&o), EXIT_DATA);
}

#[test]
fn gradcheck_passes_and_corrupted_jacobian_fails() {
    let tmp = tempfile::tempdir().unwrap();
    let o = mvhuman(tmp.path(), &["gradcheck", "--draws", "3"]);
    assert_eq!(code(&o), 0);
    assert!(String::from_utf8_lossy(&o.stdout).contains("PASS"));
    let o = mvhuman(tmp.path(), &["gradcheck", "--draws", "3", "--corrupt-jacobian"]);
    assert_eq!(code(&o), EXIT_VERIFICATION);
    assert!(String::from_utf8_lossy(&o.stdout).contains("FAIL"));
}

#[test]
fn export_writes_template_topology() {
    let tmp = tempfile::tempdir().unwrap();
    let o = mvhuman(tmp.path(), &["export", "--output", "out/rest.obj"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let (mesh, faces) = read_obj(tmp.path().join("out/rest.obj")).unwrap();
    let t = make_mini_template(&MiniTemplateConfig::default()).unwrap();
    assert_eq!(mesh.vertices.len(), t.vertex_count());
    assert_eq!(faces, t.faces());
    let rest = skin(&t, &BodyParams::zeros(&t)).unwrap();
    for (a, b) in mesh.vertices.iter().zip(&rest.vertices) {
        assert!((a - b).amax() <= 1e-12);
    }
}

#[test]
fn export_of_a_fit_report_round_trips() {
    let tmp = tempfile::tempdir().unwrap();
    gen_small(tmp.path(), "ds", "8");
    let o = mvhuman(
        tmp.path(),
        &["--out", "fits", "fit", "--dataset", "ds", "--stages", "1"],
    );
    assert_eq!(code(&o), 0);
    let o = mvhuman(
        tmp.path(),
        &["export", "--input", "fits/fit_000001.json", "--output", "fit1.obj"],
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let t = make_mini_template(&MiniTemplateConfig::default()).unwrap();
    let report = FitReport::load(tmp.path().join("fits/fit_000001.json")).unwrap();
    let expect = skin(&t, &report.state.body).unwrap();
    let (mesh, _) = read_obj(tmp.path().join("fit1.obj")).unwrap();
    for (a, b) in mesh.vertices.iter().zip(&expect.vertices) {
        assert!((a - b).amax() <= 1e-12);
    }
}

#[test]
fn eval_of_ground_truth_is_all_zero_and_matches_metrics() {
    let tmp = tempfile::tempdir().unwrap();
    gen_small(tmp.path(), "ds", "9");
    let o = mvhuman(
        tmp.path(),
        &["--out", "fits", "fit", "--dataset", "ds", "--stages", "1"],
    );
    assert_eq!(code(&o), 0);
    let data = load_dataset(&tmp.path().join("ds"), None).unwrap();
    std::fs::create_dir(tmp.path().join("perfect")).unwrap();
    for inst in &data.instances {
        let file = fit_report_file(inst.ground_truth.instance_id);
        let mut r = FitReport::load(tmp.path().join("fits").join(&file)).unwrap();
        r.state.body = inst.ground_truth.body.clone();
        r.save(tmp.path().join("perfect").join(&file)).unwrap();
    }
    let o = mvhuman(
        tmp.path(),
        &["--out", "ev0", "eval", "--dataset", "ds", "--reports", "perfect"],
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let ev: EvalOutput = serde_json::from_slice(&std::fs::read(tmp.path().join("ev0/eval.json")).unwrap()).unwrap();
    assert!(ev.failures.is_empty());
    for row in &ev.rows {
        let m = &row.metrics;
        assert_eq!(m.mpjpe_mm, 0.0);
        assert!(m.pa_mpjpe_mm < 1e-9);
        assert_eq!(m.pck_at_150mm, 1.0);
        assert_eq!(m.auc_0_150, 1.0);
        assert_eq!(m.hausdorff_mm, Some(0.0));
        assert_eq!(m.measurement_mean_rel_error, 0.0);
    }

    let o = mvhuman(
        tmp.path(),
        &["--out", "ev1", "eval", "--dataset", "ds", "--reports", "fits"],
    );
    assert_eq!(code(&o), 0);
    let ev: EvalOutput = serde_json::from_slice(&std::fs::read(tmp.path().join("ev1/eval.json")).unwrap()).unwrap();
    let ids: Vec<usize> = ev.rows.iter().map(|r| r.instance_id).collect();
    let mut sorted = ids.clone();
    sorted.sort();
    assert_eq!(ids, sorted);
    for row in &ev.rows {
        let inst = &data.instances[row.instance_id];
        let fit = FitReport::load(tmp.path().join("fits").join(fit_report_file(row.instance_id))).unwrap();
        let direct = evaluate(
            &data.template,
            &fit.state.body,
            &inst.ground_truth.body,
            &EvalOptions::default(),
        )
        .unwrap();
        assert_eq!(row.metrics, direct);
    }
    if let Some(agg) = ev.aggregate {
        let mean = ev.rows.iter().map(|r| r.metrics.pa_mpjpe_mm).sum::<f64>() / ev.rows.len() as f64;
        assert!((agg.pa_mpjpe_mm - mean).abs() <= 1e-12 * mean.max(1.0));
    }
}

#[test]
fn gradcheck_is_deterministic_given_seed() {
    let tmp = tempfile::tempdir().unwrap();
    let a = mvhuman(tmp.path(), &["--seed", "4", "gradcheck", "--draws", "4"]);
    let b = mvhuman(tmp.path(), &["--seed", "4", "gradcheck", "--draws", "4"]);
    assert_eq!(code(&a), 0);
    assert_eq!(a.stdout, b.stdout);
}

#[test]
fn help_lists_every_flag() {
    let tmp = tempfile::tempdir().unwrap();
    let top = String::from_utf8(mvhuman(tmp.path(), &["--help"]).stdout).unwrap();
    for flag in ["--config", "--seed", "--jobs", "--out", "--template"] {
        assert!(top.contains(flag), "{flag}");
    }
    for cmd in ["gen", "fit", "eval", "gradcheck", "export"] {
        assert!(top.contains(cmd), "{cmd}");
    }
    let cases: [(&str, &[&str]); 5] = [
        (
            "gen",
            &[
                "--n-shapes",
                "--poses-per-shape",
                "--n-views",
                "--noise-sigma",
                "--occlusion",
                "--max-angle",
                "--pose-file",
                "--epsilon",
                "--no-penetration",
                "--split-fraction",
                "--export-meshes",
            ],
        ),
        (
            "fit",
            &[
                "--dataset",
                "--split",
                "--views",
                "--stages",
                "--corrector",
                "--damping",
                "--max-inner-iters",
                "--start-view",
            ],
        ),
        (
            "eval",
            &["--dataset", "--reports", "--split", "--align", "--no-hausdorff"],
        ),
        ("gradcheck", &["--draws", "--corrupt-jacobian"]),
        ("export", &["--input", "--output"]),
    ];
    for (cmd, flags) in cases {
        let help = String::from_utf8(mvhuman(tmp.path(), &[cmd, "--help"]).stdout).unwrap();
        for flag in flags {
            assert!(help.contains(flag), "{cmd} {flag}");
        }
    }
}
