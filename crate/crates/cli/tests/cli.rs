//! Integration tests for the subcommand contracts: outputs, error paths,
//! and exit codes (0 ok, 2 config, 3 io, 4 numerical).

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn gatedsim() -> Command {
    Command::new(env!("CARGO_BIN_EXE_gatedsim"))
}

fn run(mut cmd: Command) -> Output {
    cmd.output().expect("spawn gatedsim")
}

fn assert_ok(output: &Output) {
    assert!(
        output.status.success(),
        "stdout: {}\nstderr: {}",
        String::from_utf8_lossy(&output.stdout),
        String::from_utf8_lossy(&output.stderr)
    );
}

fn write_named_scene(dir: &Path, name: &str, body: &str) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, body).unwrap();
    path
}

fn write_scene(dir: &Path, body: &str) -> PathBuf {
    write_named_scene(dir, "scene.toml", body)
}

fn render_ramp(dir: &Path) -> PathBuf {
    let scene = write_scene(
        dir,
        r#"[scene]
kind = "depth_ramp"
width = 24
height = 48
albedo = 0.6
ambient = 0.05
near_m = 5.0
far_m = 170.0
"#,
    );
    let out = dir.join("render");
    let mut cmd = gatedsim();
    cmd.arg("render").arg("--scene").arg(&scene).arg("--out-dir").arg(&out);
    assert_ok(&run(cmd));
    out
}

#[test]
fn end_to_end_ramp_mae_below_five_centimetres() {
    let dir = tempfile::tempdir().unwrap();
    let render = render_ramp(dir.path());
    let decode = dir.path().join("decode");

    let mut cmd = gatedsim();
    cmd.arg("decode")
        .arg("--slice0")
        .arg(render.join("frame_000_slice0.pgm"))
        .arg("--slice1")
        .arg(render.join("frame_000_slice1.pgm"))
        .arg("--slice2")
        .arg(render.join("frame_000_slice2.pgm"))
        .arg("--passive")
        .arg(render.join("frame_000_passive.pgm"))
        .arg("--out-dir")
        .arg(&decode);
    assert_ok(&run(cmd));

    let eval_json = dir.path().join("eval.json");
    let mut cmd = gatedsim();
    cmd.arg("eval")
        .arg("--pred")
        .arg(decode.join("depth.pfm"))
        .arg("--validity")
        .arg(decode.join("validity.pgm"))
        .arg("--gt")
        .arg(render.join("frame_000_depth.pfm"))
        .arg("--out")
        .arg(&eval_json);
    assert_ok(&run(cmd));

    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&eval_json).unwrap()).unwrap();
    let mae = report["mae_m"].as_f64().unwrap();
    assert!(mae < 0.05, "end-to-end MAE {mae}");
    assert!(report["n_points"].as_u64().unwrap() > 100);
}

#[test]
fn render_writes_documented_file_inventory() {
    // Single frame: four PGMs and one PFM.
    let dir = tempfile::tempdir().unwrap();
    let render = render_ramp(dir.path());
    for name in [
        "frame_000_slice0.pgm",
        "frame_000_slice1.pgm",
        "frame_000_slice2.pgm",
        "frame_000_passive.pgm",
        "frame_000_depth.pfm",
        "poses.txt",
        "intrinsics.toml",
    ] {
        assert!(render.join(name).exists(), "missing {name}");
    }

    // Three-frame sequence with 1 m/frame translation: three frame sets and
    // a three-line pose file.
    let scene = write_named_scene(
        dir.path(),
        "seq.toml",
        r#"[scene]
kind = "flat_wall"
width = 8
height = 8
distance_m = 50.0

[sequence]
frames = 3
dz_per_frame_m = 1.0
"#,
    );
    let seq = dir.path().join("seq");
    let mut cmd = gatedsim();
    cmd.arg("render").arg("--scene").arg(&scene).arg("--out-dir").arg(&seq);
    assert_ok(&run(cmd));
    for k in 0..3 {
        for i in 0..3 {
            assert!(seq.join(format!("frame_{k:03}_slice{i}.pgm")).exists());
        }
        assert!(seq.join(format!("frame_{k:03}_passive.pgm")).exists());
        assert!(seq.join(format!("frame_{k:03}_depth.pfm")).exists());
    }
    let poses = std::fs::read_to_string(seq.join("poses.txt")).unwrap();
    assert_eq!(poses.lines().count(), 3);
    // The camera advances 1 m per frame along +z (camera-to-world rows).
    let last: Vec<&str> = poses.lines().last().unwrap().split_whitespace().collect();
    assert_eq!(last[0], "2");
    assert_eq!(last[12], "2");
}

#[test]
fn decode_rejects_mismatched_image_sizes() {
    let dir = tempfile::tempdir().unwrap();
    let render = render_ramp(dir.path());
    // A passive frame with different dimensions.
    let scene = write_named_scene(
        dir.path(),
        "scene_small.toml",
        r#"[scene]
kind = "flat_wall"
width = 8
height = 8
"#,
    );
    let small = dir.path().join("small");
    let mut cmd = gatedsim();
    cmd.arg("render").arg("--scene").arg(&scene).arg("--out-dir").arg(&small);
    assert_ok(&run(cmd));

    let mut cmd = gatedsim();
    cmd.arg("decode")
        .arg("--slice0")
        .arg(render.join("frame_000_slice0.pgm"))
        .arg("--slice1")
        .arg(render.join("frame_000_slice1.pgm"))
        .arg("--slice2")
        .arg(render.join("frame_000_slice2.pgm"))
        .arg("--passive")
        .arg(small.join("frame_000_passive.pgm"))
        .arg("--out-dir")
        .arg(dir.path().join("decode"));
    let output = run(cmd);
    assert_eq!(output.status.code(), Some(2), "dimension mismatch is a config error");
    let text = String::from_utf8_lossy(&output.stdout);
    assert!(text.contains("\"error\""), "machine-readable error JSON: {text}");
}

#[test]
fn masks_on_saturated_frame_reports_zero_unsaturated() {
    let dir = tempfile::tempdir().unwrap();
    // A retroreflector wall with huge albedo saturates everything.
    let scene = write_scene(
        dir.path(),
        r#"[scene]
kind = "flat_wall"
width = 12
height = 12
albedo = 30.0
ambient = 0.2
distance_m = 40.0
"#,
    );
    let render = dir.path().join("render");
    let mut cmd = gatedsim();
    cmd.arg("render").arg("--scene").arg(&scene).arg("--out-dir").arg(&render);
    assert_ok(&run(cmd));

    let masks = dir.path().join("masks");
    let mut cmd = gatedsim();
    cmd.arg("masks")
        .arg("--slice0")
        .arg(render.join("frame_000_slice0.pgm"))
        .arg("--slice1")
        .arg(render.join("frame_000_slice1.pgm"))
        .arg("--slice2")
        .arg(render.join("frame_000_slice2.pgm"))
        .arg("--passive")
        .arg(render.join("frame_000_passive.pgm"))
        .arg("--depth")
        .arg(render.join("frame_000_depth.pfm"))
        .arg("--intrinsics")
        .arg(render.join("intrinsics.toml"))
        .arg("--out-dir")
        .arg(&masks);
    let output = run(cmd);
    assert_ok(&output);
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(masks.join("masks_report.json")).unwrap())
            .unwrap();
    assert_eq!(report["count_unsaturated_m"].as_u64(), Some(0));
    assert_eq!(report["count_valid_b"].as_u64(), Some(0));
}

/// Samples of the default slice-1 profile for calibrate tests.
fn write_slice_samples(path: &Path, slice: usize) -> (f64, f64) {
    use gatedsim_core::profile::{analytic_profile, default_profiles};
    let set = default_profiles();
    let p = set.slice(slice);
    let (lo, hi) = p.domain_m;
    let mut text = String::new();
    for i in 0..512 {
        let r = lo + (hi - lo) * i as f64 / 511.0;
        text.push_str(&format!("{} {}\n", r, analytic_profile(&p.timing, r)));
    }
    std::fs::write(path, text).unwrap();
    p.timing.visible_range()
}

#[test]
fn calibrate_reproduces_default_profiles() {
    let dir = tempfile::tempdir().unwrap();
    let mut ranges: Vec<f64> = Vec::new();
    let mut sample_paths = Vec::new();
    for slice in 0..3 {
        let path = dir.path().join(format!("samples{slice}.txt"));
        let (lo, hi) = write_slice_samples(&path, slice);
        ranges.push(lo);
        ranges.push(hi);
        sample_paths.push(path);
    }
    let out = dir.path().join("profiles.toml");
    let mut cmd = gatedsim();
    cmd.arg("calibrate")
        .arg("--samples")
        .args(&sample_paths)
        .arg("--ranges")
        .args(ranges.iter().map(|r| r.to_string()))
        .arg("--out")
        .arg(&out);
    assert_ok(&run(cmd));

    use gatedsim_core::profile::{default_profiles, EvalMode, CHEB_FIT_TOLERANCE};
    let fitted = gatedsim_core::io::load_profiles(&out).unwrap();
    let reference = default_profiles();
    for (f, r) in fitted.iter().zip(reference.iter()) {
        let (lo, hi) = r.timing.visible_range();
        for i in 0..200 {
            let range = lo + (hi - lo) * i as f64 / 199.0;
            let diff = (f.eval(range, EvalMode::Chebyshev)
                - r.eval(range, EvalMode::Analytic))
            .abs();
            assert!(
                diff <= CHEB_FIT_TOLERANCE,
                "slice {}: fitted profile off by {diff} at {range} m",
                r.slice_index
            );
        }
    }
}

#[test]
fn calibrate_constant_samples_give_unit_constant_coefficients() {
    let dir = tempfile::tempdir().unwrap();
    for slice in 0..3 {
        let path = dir.path().join(format!("flat{slice}.txt"));
        let mut text = String::new();
        for i in 0..64 {
            text.push_str(&format!("{} 1.0\n", 10.0 + i as f64));
        }
        std::fs::write(path, text).unwrap();
    }
    let out = dir.path().join("profiles.toml");
    let mut cmd = gatedsim();
    cmd.arg("calibrate")
        .arg("--samples")
        .arg(dir.path().join("flat0.txt"))
        .arg(dir.path().join("flat1.txt"))
        .arg(dir.path().join("flat2.txt"))
        .arg("--out")
        .arg(&out);
    assert_ok(&run(cmd));
    let fitted = gatedsim_core::io::load_profiles(&out).unwrap();
    for p in fitted.iter() {
        assert!((p.cheb_coeffs[0] - 1.0).abs() < 1e-9, "c0 = {}", p.cheb_coeffs[0]);
        for &c in &p.cheb_coeffs[1..] {
            assert!(c.abs() < 1e-9, "higher coefficient {c}");
        }
    }
}

#[test]
fn calibrate_degenerate_file_exits_with_calibration_error() {
    let dir = tempfile::tempdir().unwrap();
    let one = dir.path().join("one.txt");
    std::fs::write(&one, "10.0 0.5\n").unwrap();
    let good = dir.path().join("good.txt");
    let mut text = String::new();
    for i in 0..64 {
        text.push_str(&format!("{} 0.5\n", 10.0 + i as f64));
    }
    std::fs::write(&good, text).unwrap();

    let mut cmd = gatedsim();
    cmd.arg("calibrate")
        .arg("--samples")
        .arg(&one)
        .arg(&good)
        .arg(&good)
        .arg("--out")
        .arg(dir.path().join("out.toml"));
    let output = run(cmd);
    assert_eq!(output.status.code(), Some(4), "calibration failure is numerical");
}

#[test]
fn seeded_noisy_render_is_stable_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    let scene = write_scene(
        dir.path(),
        r#"[scene]
kind = "flat_wall"
width = 16
height = 16

[noise]
gaussian_sigma = 0.002
poisson_scale = 5000.0
"#,
    );
    let hash_of_render = |out: &Path| -> Vec<u8> {
        let mut cmd = gatedsim();
        cmd.arg("render")
            .args(["--seed", "123"])
            .arg("--scene")
            .arg(&scene)
            .arg("--out-dir")
            .arg(out);
        assert_ok(&run(cmd));
        let mut all = Vec::new();
        let mut names: Vec<_> = std::fs::read_dir(out)
            .unwrap()
            .map(|e| e.unwrap().path())
            .collect();
        names.sort();
        for name in names {
            all.extend(std::fs::read(name).unwrap());
        }
        all
    };
    let a = hash_of_render(&dir.path().join("a"));
    let b = hash_of_render(&dir.path().join("b"));
    assert_eq!(a, b);
}

#[test]
fn warp_between_sequence_frames_round_trips_a_wall() {
    let dir = tempfile::tempdir().unwrap();
    let scene = write_scene(
        dir.path(),
        r#"[scene]
kind = "flat_wall"
width = 24
height = 24
albedo = 0.5
ambient = 0.1
distance_m = 60.0

[sequence]
frames = 2
dz_per_frame_m = 1.0
"#,
    );
    let render = dir.path().join("render");
    let mut cmd = gatedsim();
    // Analytic rendering keeps slice 1's plateau exactly flat between the
    // two camera positions; the Chebyshev representation wiggles there.
    cmd.arg("render")
        .args(["--eval-mode", "analytic"])
        .arg("--scene")
        .arg(&scene)
        .arg("--out-dir")
        .arg(&render);
    assert_ok(&run(cmd));

    // Pull frame 1's slice into frame 0's view using frame 0's depth.
    let warp = dir.path().join("warp");
    let mut cmd = gatedsim();
    cmd.arg("warp")
        .arg("--image")
        .arg(render.join("frame_001_slice1.pgm"))
        .arg("--depth")
        .arg(render.join("frame_000_depth.pfm"))
        .arg("--intrinsics")
        .arg(render.join("intrinsics.toml"))
        .arg("--poses")
        .arg(render.join("poses.txt"))
        .args(["--from", "0", "--to", "1"])
        .arg("--out-dir")
        .arg(&warp);
    assert_ok(&run(cmd));

    // The wall at 60 m sits on slice 1's plateau from both camera positions
    // (59 and 60 m are both inside [53, 88]), so the warped image matches
    // frame 0's slice wherever the sample footprint stays inside.
    let warped = gatedsim_core::io::read_pgm(&warp.join("warped.pgm")).unwrap();
    let valid = gatedsim_core::io::read_pgm_mask(&warp.join("warp_valid.pgm")).unwrap();
    let reference = gatedsim_core::io::read_pgm(&render.join("frame_000_slice1.pgm")).unwrap();
    assert!(valid.count_true() > 24 * 24 / 2);
    let mut worst: f64 = 0.0;
    for (x, y, &v) in warped.enumerate() {
        if *valid.get(x, y) {
            worst = worst.max((v - *reference.get(x, y)).abs());
        }
    }
    assert!(worst <= 2.0 / 65535.0, "warped wall mismatch {worst}");
}

#[test]
fn unknown_flags_and_kinds_are_errors() {
    let output = run({
        let mut c = gatedsim();
        c.arg("eval").arg("--no-such-flag");
        c
    });
    assert!(!output.status.success());

    let dir = tempfile::tempdir().unwrap();
    let img = dir.path().join("x.pgm");
    std::fs::write(&img, b"P5\n1 1\n255\n\x00").unwrap();
    let output = run({
        let mut c = gatedsim();
        c.arg("loss")
            .args(["--kind", "bogus"])
            .arg("--image-a")
            .arg(&img)
            .arg("--image-b")
            .arg(&img);
        c
    });
    assert_eq!(output.status.code(), Some(2));
}

#[test]
fn eval_with_no_usable_points_exits_numerical() {
    let dir = tempfile::tempdir().unwrap();
    let render = render_ramp(dir.path());
    let gt = dir.path().join("gt.txt");
    std::fs::write(&gt, "0 0 200.0\n").unwrap(); // outside [3, 80)
    let mut cmd = gatedsim();
    cmd.arg("eval")
        .arg("--pred")
        .arg(render.join("frame_000_depth.pfm"))
        .arg("--gt")
        .arg(&gt);
    let output = run(cmd);
    assert_eq!(output.status.code(), Some(4));
}

#[test]
fn help_lists_all_subcommands() {
    let output = run({
        let mut c = gatedsim();
        c.arg("--help");
        c
    });
    assert_ok(&output);
    let text = String::from_utf8_lossy(&output.stdout);
    for name in ["render", "calibrate", "decode", "masks", "warp", "loss", "eval"] {
        assert!(text.contains(name), "--help must list {name}");
        // Every subcommand's own --help works and lists its flags.
        let sub = run({
            let mut c = gatedsim();
            c.arg(name).arg("--help");
            c
        });
        assert_ok(&sub);
        let sub_text = String::from_utf8_lossy(&sub.stdout);
        assert!(sub_text.contains("--seed"), "{name} --help must list --seed");
        assert!(sub_text.contains("--threads"), "{name} --help must list --threads");
    }
}
