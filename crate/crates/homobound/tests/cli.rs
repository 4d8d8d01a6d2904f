//! End-to-end tests of the `homobound` binary: every subcommand is exercised
//! through real process spawns with files on disk, checking output contracts
//! and exit codes.

use homobound::imaging::{load_csv, save_csv, Image, Padding};
use homobound::verifier::{save_network, Layer, Network};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_homobound"))
}

/// Runs the command to completion, returning (exit code, stdout, stderr).
fn run(cmd: &mut Command) -> (i32, String, String) {
    let out = cmd.output().expect("binary should spawn");
    (
        out.status.code().expect("no exit code (killed by signal?)"),
        String::from_utf8(out.stdout).expect("stdout is utf-8"),
        String::from_utf8(out.stderr).expect("stderr is utf-8"),
    )
}

fn random_csv(dir: &Path, name: &str, h: usize, w: usize, seed: u64) -> PathBuf {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = (0..h * w).map(|_| rng.gen_range(0.0..=1.0)).collect();
    let img = Image::new(h, w, data, Padding::Black).expect("valid image");
    let path = dir.join(name);
    save_csv(&img, &path).expect("csv written");
    path
}

/// One linear layer mapping any input to logits (1, 0): class 0 always wins
/// by exactly 1.
fn constant_net(dir: &Path, inputs: usize) -> PathBuf {
    let layer =
        Layer::new(0, vec![vec![0.0; inputs]; 2], vec![1.0, 0.0], false).expect("valid layer");
    let net = Network::new(vec![layer]).expect("valid net");
    let path = dir.join("net.txt");
    save_network(&net, &path).expect("net written");
    path
}

/// Synthesizes a small bound set on disk and returns its path.
fn bound_fixture(dir: &Path, image: &Path, name: &str) -> PathBuf {
    let out = dir.join(name);
    let (code, _, stderr) = run(bin().args([
        "bound",
        "--image",
        image.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--scenario",
        "yaw",
        "--range",
        "0:5",
        "--q",
        "2",
    ]));
    assert_eq!(code, 0, "bound failed: {stderr}");
    out
}

#[test]
fn render_at_zero_reproduces_the_input_bitwise() {
    let dir = tempfile::tempdir().unwrap();
    let src = random_csv(dir.path(), "src.csv", 7, 9, 11);
    let frames = dir.path().join("frames");
    let (code, stdout, stderr) = run(bin().args([
        "render",
        "--image",
        src.to_str().unwrap(),
        "--out",
        frames.to_str().unwrap(),
        "--scenario",
        "yaw",
        "--range",
        "0:0",
        "--count",
        "1",
        "--format",
        "csv",
    ]));
    assert_eq!(code, 0, "{stderr}");
    assert!(stdout.contains("wrote 1 frames"), "{stdout}");

    let a = load_csv(&src, Padding::Black).unwrap();
    let b = load_csv(&frames.join("frame_000.csv"), Padding::Black).unwrap();
    assert_eq!((b.height(), b.width()), (7, 9));
    assert_eq!(a.pixels(), b.pixels(), "identity warp must be exact");

    let manifest = fs::read_to_string(frames.join("manifest.txt")).unwrap();
    assert!(
        manifest.lines().any(|l| l == "frame_000.csv 0"),
        "manifest should list the frame at kappa 0:\n{manifest}"
    );
}

#[test]
fn render_strip_lists_exact_manifest_kappas() {
    let dir = tempfile::tempdir().unwrap();
    let src = random_csv(dir.path(), "src.csv", 6, 6, 3);
    let frames = dir.path().join("frames");
    let (code, _, stderr) = run(bin().args([
        "render",
        "--image",
        src.to_str().unwrap(),
        "--out",
        frames.to_str().unwrap(),
        "--scenario",
        "yaw",
        "--range",
        "0:15",
        "--count",
        "6",
    ]));
    assert_eq!(code, 0, "{stderr}");

    let manifest = fs::read_to_string(frames.join("manifest.txt")).unwrap();
    let entries: Vec<(String, f64)> = manifest
        .lines()
        .filter(|l| !l.starts_with('#'))
        .map(|l| {
            let (name, kappa) = l.split_once(' ').expect("name kappa");
            (name.to_owned(), kappa.parse().expect("numeric kappa"))
        })
        .collect();
    let names: Vec<&str> = entries.iter().map(|(n, _)| n.as_str()).collect();
    let kappas: Vec<f64> = entries.iter().map(|(_, k)| *k).collect();
    assert_eq!(
        names,
        ["frame_000.pgm", "frame_001.pgm", "frame_002.pgm", "frame_003.pgm", "frame_004.pgm",
         "frame_005.pgm"]
    );
    assert_eq!(kappas, [0.0, 3.0, 6.0, 9.0, 12.0, 15.0], "entered degrees verbatim");
    for name in names {
        assert!(frames.join(name).is_file(), "{name} should exist");
    }
}

#[test]
fn render_roll_quarter_turn_permutes_the_pixels() {
    let dir = tempfile::tempdir().unwrap();
    let n = 8;
    let data = (0..n * n).map(|k| k as f64 / (n * n) as f64).collect();
    let src = Image::new(n, n, data, Padding::Black).unwrap();
    let src_path = dir.path().join("ramp.csv");
    save_csv(&src, &src_path).unwrap();

    let frames = dir.path().join("frames");
    let (code, _, stderr) = run(bin().args([
        "render",
        "--image",
        src_path.to_str().unwrap(),
        "--out",
        frames.to_str().unwrap(),
        "--scenario",
        "roll",
        "--range",
        "90:90",
        "--count",
        "1",
        "--format",
        "csv",
    ]));
    assert_eq!(code, 0, "{stderr}");

    // A 90-degree roll about the grid center is the quarter-turn
    // out[v][u] = src[u][n-1-v]; equality is up to trig round-off in
    // cos(pi/2) leaking into the interpolation weights.
    let out = load_csv(&frames.join("frame_000.csv"), Padding::Black).unwrap();
    for v in 0..n {
        for u in 0..n {
            let got = out.get(v, u);
            let want = src.get(u, n - 1 - v);
            assert!(
                (got - want).abs() < 1e-12,
                "pixel ({v}, {u}): got {got}, want {want}"
            );
        }
    }
}

#[test]
fn bound_files_are_bitwise_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let src = random_csv(dir.path(), "src.csv", 6, 6, 21);
    let mut outputs = Vec::new();
    for name in ["a.txt", "b.txt"] {
        let out = dir.path().join(name);
        let (code, stdout, stderr) = run(bin().args([
            "bound",
            "--image",
            src.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
            "--scenario",
            "yaw",
            "--range",
            "0:5",
            "--threads",
            "2",
        ]));
        assert_eq!(code, 0, "{stderr}");
        assert!(stdout.contains("polytope area"), "{stdout}");
        assert!(stdout.contains("mean bab steps"), "{stdout}");
        outputs.push(fs::read(&out).unwrap());
    }
    assert_eq!(outputs[0], outputs[1], "repeat runs must serialize identically");
}

#[test]
fn bound_verify_round_trip_certifies_and_refutes() {
    let dir = tempfile::tempdir().unwrap();
    let src = random_csv(dir.path(), "src.csv", 6, 6, 5);
    let bounds = bound_fixture(dir.path(), &src, "b.txt");
    let net = constant_net(dir.path(), 36);

    let (code, stdout, stderr) = run(bin().args([
        "verify",
        "--bounds",
        bounds.to_str().unwrap(),
        "--net",
        net.to_str().unwrap(),
        "--label",
        "0",
    ]));
    assert_eq!(code, 0, "{stderr}");
    assert!(stdout.contains(": robust"), "{stdout}");

    // The same net can never be robust for the losing label, and the
    // failure must come with a concrete parameter witness.
    let (code, stdout, _) = run(bin().args([
        "verify",
        "--bounds",
        bounds.to_str().unwrap(),
        "--net",
        net.to_str().unwrap(),
        "--label",
        "1",
        "--image",
        src.to_str().unwrap(),
    ]));
    assert_eq!(code, 1);
    assert!(stdout.contains(": unknown"), "{stdout}");
    assert!(stdout.contains("witness: kappa"), "{stdout}");
    assert!(stdout.contains("margin"), "{stdout}");
}

#[test]
fn verify_batch_prints_a_robust_count() {
    let dir = tempfile::tempdir().unwrap();
    let src = random_csv(dir.path(), "src.csv", 6, 6, 6);
    let b1 = bound_fixture(dir.path(), &src, "b1.txt");
    let b2 = bound_fixture(dir.path(), &src, "b2.txt");
    let net = constant_net(dir.path(), 36);

    let (code, stdout, stderr) = run(bin().args([
        "verify",
        "--bounds",
        b1.to_str().unwrap(),
        "--bounds",
        b2.to_str().unwrap(),
        "--net",
        net.to_str().unwrap(),
        "--label",
        "0",
    ]));
    assert_eq!(code, 0, "{stderr}");
    assert!(stdout.contains("robust 2/2"), "{stdout}");

    let (code, stdout, _) = run(bin().args([
        "verify",
        "--bounds",
        b1.to_str().unwrap(),
        "--bounds",
        b2.to_str().unwrap(),
        "--net",
        net.to_str().unwrap(),
        "--label",
        "0",
        "--label",
        "1",
    ]));
    assert_eq!(code, 1);
    assert!(stdout.contains("robust 1/2"), "{stdout}");
}

#[test]
fn validate_passes_fresh_bounds_and_catches_corruption() {
    let dir = tempfile::tempdir().unwrap();
    let src = random_csv(dir.path(), "src.csv", 6, 6, 9);
    let bounds = bound_fixture(dir.path(), &src, "b.txt");

    let (code, stdout, stderr) = run(bin().args([
        "validate",
        "--image",
        src.to_str().unwrap(),
        "--bounds",
        bounds.to_str().unwrap(),
        "--grid",
        "300",
        "--seed",
        "3",
    ]));
    assert_eq!(code, 0, "{stderr}\n{stdout}");
    assert!(stdout.contains("gradient check"), "{stdout}");
    assert!(stdout.contains("soundness sweep"), "{stdout}");
    assert!(stdout.contains("lipschitz sweep"), "{stdout}");
    assert!(stdout.contains("all checks passed"), "{stdout}");

    // Hand-raise one lower segment far above the curve: the sweep must
    // report the violation and flip the exit code.
    let text = fs::read_to_string(&bounds).unwrap();
    let mut lines: Vec<String> = text.lines().map(str::to_owned).collect();
    let idx = 1 + lines.iter().position(|l| l.starts_with("lower ")).expect("segment block");
    lines[idx] = "0.0000000000000000e0 2.0000000000000000e0".into();
    let bad = dir.path().join("bad.txt");
    fs::write(&bad, lines.join("\n")).unwrap();

    let (code, stdout, _) = run(bin().args([
        "validate",
        "--image",
        src.to_str().unwrap(),
        "--bounds",
        bad.to_str().unwrap(),
        "--grid",
        "300",
        "--seed",
        "3",
    ]));
    assert_eq!(code, 1, "{stdout}");
    assert!(stdout.contains("soundness sweep") && stdout.contains("FAILED"), "{stdout}");
    assert!(stdout.contains("checks failed"), "{stdout}");
}

#[test]
fn report_rows_bracket_the_curve_between_sound_bounds() {
    let dir = tempfile::tempdir().unwrap();
    let src = random_csv(dir.path(), "src.csv", 6, 6, 14);
    let bounds = bound_fixture(dir.path(), &src, "b.txt");
    let rep = dir.path().join("rep.csv");
    let (code, _, stderr) = run(bin().args([
        "report",
        "--image",
        src.to_str().unwrap(),
        "--bounds",
        bounds.to_str().unwrap(),
        "--pixel",
        "2,3",
        "--points",
        "33",
        "--out",
        rep.to_str().unwrap(),
    ]));
    assert_eq!(code, 0, "{stderr}");

    let text = fs::read_to_string(&rep).unwrap();
    let mut rows = text.lines();
    assert_eq!(
        rows.next().unwrap(),
        "kappa_deg,g,lower,upper,lower_sound,upper_sound"
    );
    let parsed: Vec<Vec<f64>> = rows
        .map(|l| l.split(',').map(|x| x.parse().expect("numeric cell")).collect())
        .collect();
    assert_eq!(parsed.len(), 33, "one row per grid point");
    assert_eq!(parsed[0][0], 0.0);
    assert_eq!(parsed[32][0], 5.0);

    let source = load_csv(&src, Padding::Black).unwrap();
    assert_eq!(parsed[0][1], source.get(2, 3), "kappa 0 is the identity warp");

    for row in &parsed {
        let (g, lower, upper, ls, us) = (row[1], row[2], row[3], row[4], row[5]);
        assert!(ls <= lower && upper <= us, "sound bounds envelop the fitted ones");
        assert!(ls - 1e-9 <= g && g <= us + 1e-9, "sound bounds bracket G: {row:?}");
    }
}

#[test]
fn config_file_fills_defaults_and_flags_override_it() {
    let dir = tempfile::tempdir().unwrap();
    let src = random_csv(dir.path(), "src.csv", 6, 6, 2);
    let cfg = dir.path().join("cfg.toml");
    fs::write(&cfg, "scenario = \"yaw\"\nrange = \"0:5\"\nq = 4\n").unwrap();

    let from_file = dir.path().join("file.txt");
    let (code, _, stderr) = run(bin().args([
        "bound",
        "--image",
        src.to_str().unwrap(),
        "--out",
        from_file.to_str().unwrap(),
        "--config",
        cfg.to_str().unwrap(),
    ]));
    assert_eq!(code, 0, "{stderr}");
    let text = fs::read_to_string(&from_file).unwrap();
    assert!(text.lines().any(|l| l == "q 4"), "config q should apply");
    assert!(text.lines().any(|l| l == "scenario yaw"));

    let overridden = dir.path().join("flag.txt");
    let (code, _, stderr) = run(bin().args([
        "bound",
        "--image",
        src.to_str().unwrap(),
        "--out",
        overridden.to_str().unwrap(),
        "--config",
        cfg.to_str().unwrap(),
        "--q",
        "1",
    ]));
    assert_eq!(code, 0, "{stderr}");
    let text = fs::read_to_string(&overridden).unwrap();
    assert!(text.lines().any(|l| l == "q 1"), "explicit flag should win");
}

#[test]
fn thread_settings_come_from_flag_or_environment() {
    let dir = tempfile::tempdir().unwrap();
    let src = random_csv(dir.path(), "src.csv", 5, 5, 8);

    let out = dir.path().join("flag.txt");
    let (code, _, stderr) = run(bin()
        .env("HOMOBOUND_THREADS", "3")
        .args([
            "bound",
            "--image",
            src.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
            "--scenario",
            "yaw",
            "--range",
            "0:2",
            "--threads",
            "2",
        ]));
    assert_eq!(code, 0, "{stderr}");

    let out = dir.path().join("env.txt");
    let (code, _, stderr) = run(bin()
        .env("HOMOBOUND_THREADS", "2")
        .args([
            "bound",
            "--image",
            src.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
            "--scenario",
            "yaw",
            "--range",
            "0:2",
        ]));
    assert_eq!(code, 0, "{stderr}");

    let out = dir.path().join("bad.txt");
    let (code, _, stderr) = run(bin()
        .env("HOMOBOUND_THREADS", "many")
        .args([
            "bound",
            "--image",
            src.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
            "--scenario",
            "yaw",
            "--range",
            "0:2",
        ]));
    assert_eq!(code, 2, "junk thread counts are usage errors");
    assert!(stderr.contains("HOMOBOUND_THREADS"), "{stderr}");
}

#[test]
fn usage_errors_exit_with_code_two() {
    let dir = tempfile::tempdir().unwrap();
    let src = random_csv(dir.path(), "src.csv", 5, 5, 4);
    let out = dir.path().join("out.txt");

    // --scenario without --range.
    let (code, _, stderr) = run(bin().args([
        "bound",
        "--image",
        src.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--scenario",
        "yaw",
    ]));
    assert_eq!(code, 2);
    assert!(stderr.contains("--range"), "{stderr}");

    // Unknown scenario token (rejected by the flag parser).
    let (code, _, stderr) = run(bin().args([
        "bound",
        "--image",
        src.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--scenario",
        "spin",
        "--range",
        "0:5",
    ]));
    assert_eq!(code, 2);
    assert!(stderr.contains("spin"), "{stderr}");

    // Translation without a camera height.
    let (code, _, stderr) = run(bin().args([
        "bound",
        "--image",
        src.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--scenario",
        "dx",
        "--range",
        "0:1",
    ]));
    assert_eq!(code, 2);
    assert!(stderr.contains("--height"), "{stderr}");

    // Unknown config key.
    let cfg = dir.path().join("cfg.toml");
    fs::write(&cfg, "qq = 3\n").unwrap();
    let (code, _, stderr) = run(bin().args([
        "bound",
        "--image",
        src.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--scenario",
        "yaw",
        "--range",
        "0:5",
        "--config",
        cfg.to_str().unwrap(),
    ]));
    assert_eq!(code, 2);
    assert!(stderr.contains("qq"), "{stderr}");

    // Missing input file.
    let (code, _, stderr) = run(bin().args([
        "bound",
        "--image",
        dir.path().join("absent.csv").to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--scenario",
        "yaw",
        "--range",
        "0:5",
    ]));
    assert_eq!(code, 2);
    assert!(stderr.contains("absent.csv"), "{stderr}");
}

#[test]
fn verify_rejects_mismatched_batch_lists() {
    let dir = tempfile::tempdir().unwrap();
    let src = random_csv(dir.path(), "src.csv", 6, 6, 7);
    let b1 = bound_fixture(dir.path(), &src, "b1.txt");
    let b2 = bound_fixture(dir.path(), &src, "b2.txt");
    let net = constant_net(dir.path(), 36);

    let (code, _, stderr) = run(bin().args([
        "verify",
        "--bounds",
        b1.to_str().unwrap(),
        "--bounds",
        b2.to_str().unwrap(),
        "--net",
        net.to_str().unwrap(),
        "--label",
        "0",
        "--label",
        "1",
        "--label",
        "0",
    ]));
    assert_eq!(code, 2);
    assert!(stderr.contains("--label"), "{stderr}");

    let (code, _, stderr) = run(bin().args([
        "verify",
        "--bounds",
        b1.to_str().unwrap(),
        "--bounds",
        b2.to_str().unwrap(),
        "--net",
        net.to_str().unwrap(),
        "--label",
        "0",
        "--image",
        src.to_str().unwrap(),
    ]));
    assert_eq!(code, 2);
    assert!(stderr.contains("--image"), "{stderr}");
}
