use std::path::Path;
use std::process::{Command, Output};

fn splatkit(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_splatkit"))
        .args(args)
        .output()
        .expect("spawn splatkit")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn field(text: &str, key: &str) -> f64 {
    text.lines()
        .find_map(|l| l.strip_prefix(key)?.trim().parse().ok())
        .unwrap_or_else(|| panic!("no {key} in {text}"))
}

fn small_scene(dir: &Path) -> String {
    let scene = dir.join("scene").to_string_lossy().into_owned();
    let o = splatkit(&[
        "gen-synthetic",
        "--seed",
        "5",
        "--gaussians",
        "6",
        "--views",
        "4",
        "--resolution",
        "24",
        "--out",
        &scene,
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    scene
}

#[test]
fn ground_truth_model_reproduces_its_scene() {
    let dir = tempfile::tempdir().unwrap();
    let scene = small_scene(dir.path());
    let gt = format!("{scene}/ground_truth.ply");
    let o = splatkit(&["eval", "--model", &gt, "--scene", &scene]);
    assert!(o.status.success());
    let text = stdout(&o);
    // Only 16-bit quantization of the targets separates the two, which
    // reaches the PSNR cap.
    assert!(field(&text, "psnr") >= 99.0, "{text}");
    assert!(field(&text, "ssim") > 0.999_999, "{text}");
    assert_eq!(field(&text, "chamfer"), 0.0);
    assert_eq!(field(&text, "gaussians"), 6.0);
}

#[test]
fn gen_synthetic_is_deterministic() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let run = |d: &Path| {
        stdout(&splatkit(&[
            "gen-synthetic",
            "--seed",
            "9",
            "--gaussians",
            "4",
            "--views",
            "3",
            "--resolution",
            "16",
            "--out",
            &d.to_string_lossy(),
        ]))
    };
    let (ca, cb) = (run(a.path()), run(b.path()));
    assert!(ca.starts_with("checksum "));
    assert_eq!(ca, cb);
    let img = "images/view_001.ppm";
    assert_eq!(
        std::fs::read(a.path().join(img)).unwrap(),
        std::fs::read(b.path().join(img)).unwrap()
    );
}

#[test]
fn render_extract_and_simplify_write_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let scene = small_scene(dir.path());
    let gt = format!("{scene}/ground_truth.ply");
    let p = |n: &str| dir.path().join(n).to_string_lossy().into_owned();

    let o = splatkit(&[
        "render",
        "--model",
        &gt,
        "--scene",
        &scene,
        "--view",
        "1",
        "--out",
        &p("v1.png"),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(std::fs::read(p("v1.png")).unwrap().starts_with(b"\x89PNG"));

    let o = splatkit(&[
        "extract-points",
        "--model",
        &gt,
        "--scene",
        &scene,
        "--out",
        &p("pts.ply"),
    ]);
    assert!(o.status.success());
    let n: usize = stdout(&o)
        .split_whitespace()
        .next()
        .unwrap()
        .parse()
        .unwrap();
    assert!(n > 0);
    assert!(std::fs::read(p("pts.ply")).unwrap().starts_with(b"ply\n"));

    let o = splatkit(&[
        "simplify",
        "--model",
        &gt,
        "--scene",
        &scene,
        "--ratio",
        "0.5",
        "--out",
        &p("half.ply"),
    ]);
    assert!(o.status.success());
    assert_eq!(stdout(&o).trim(), "kept 3 of 6 Gaussians");
    let o = splatkit(&["eval", "--model", &p("half.ply"), "--scene", &scene]);
    assert_eq!(field(&stdout(&o), "gaussians"), 3.0);
}

#[test]
fn usage_and_data_errors_have_distinct_codes() {
    let dir = tempfile::tempdir().unwrap();
    let scene = small_scene(dir.path());
    let gt = format!("{scene}/ground_truth.ply");
    // --ratio and --keep-q are mutually exclusive, and one is required.
    assert_eq!(
        splatkit(&["simplify", "--model", &gt, "--scene", &scene, "--out", "x.ply"])
            .status
            .code(),
        Some(1)
    );
    assert_eq!(
        splatkit(&[
            "simplify", "--model", &gt, "--scene", &scene, "--ratio", "0.5", "--keep-q", "0.9",
            "--out", "x.ply"
        ])
        .status
        .code(),
        Some(1)
    );
    assert_eq!(
        splatkit(&["train", "--scene", &scene, "--mode", "fast", "--out", "x"])
            .status
            .code(),
        Some(1)
    );
    let o = splatkit(&[
        "render", "--model", &gt, "--scene", &scene, "--view", "99", "--out", "x.png",
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("view 99 out of range"));
    std::fs::write(dir.path().join("bad.toml"), "no_such_key = 1\n").unwrap();
    let bad = dir.path().join("bad.toml").to_string_lossy().into_owned();
    assert_eq!(
        splatkit(&["train", "--scene", &scene, "--config", &bad, "--out", "x"])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(splatkit(&["--version"]).status.code(), Some(0));
}
