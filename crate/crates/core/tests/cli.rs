use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_microgait"))
}

fn run(args: &[&str]) -> (i32, String) {
    let out = bin().args(args).output().unwrap();
    (out.status.code().unwrap(), String::from_utf8(out.stdout).unwrap())
}

fn value<'a>(stdout: &'a str, key: &str) -> &'a str {
    stdout
        .lines()
        .find_map(|l| l.strip_prefix(key).and_then(|r| r.strip_prefix('=')))
        .unwrap_or_else(|| panic!("{key} missing from {stdout}"))
}

#[test]
fn exit_codes() {
    assert_eq!(run(&["frobnicate"]).0, 2);
    assert_eq!(run(&["cost"]).0, 2);
    assert_eq!(run(&["cost", "--measured", "5e6"]).0, 2);
    assert_eq!(run(&["ik", "--x", "0.01", "--y", "0"]).0, 4);
    assert_eq!(run(&["quantize", "--model", "/nonexistent/model.tgp"]).0, 3);
    assert_eq!(run(&["--help"]).0, 0);
}

#[test]
fn quantize_report_and_output_file() {
    let dir = tempfile::tempdir().unwrap();
    let model = dir.path().join("p.tgp");
    let out = dir.path().join("p.tgq");
    let (code, _) = run(&["init-policy", "--out", model.to_str().unwrap(), "--seed", "3"]);
    assert_eq!(code, 0);
    let (code, s) = run(&[
        "quantize",
        "--model",
        model.to_str().unwrap(),
        "--scheme",
        "per-tensor",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code, 0, "{s}");
    assert_eq!(value(&s, "fp32_payload_bytes"), "47904");
    assert_eq!(value(&s, "reference_ratio"), "4.0000");
    assert!(out.exists());
    // a quantized model runs through the codec path
    let (code, s) = run(&[
        "run-loop",
        "--model",
        out.to_str().unwrap(),
        "--codec",
        "--episode-s",
        "0.5",
    ]);
    assert_eq!(code, 0, "{s}");
    assert_eq!(value(&s, "runtime"), "int8+codec");
}

#[test]
fn calibration_file_with_wrong_width_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let model = dir.path().join("p.tgp");
    let calib = dir.path().join("calib.txt");
    std::fs::write(&calib, "1, 2, 3\n").unwrap();
    run(&["init-policy", "--out", model.to_str().unwrap()]);
    let (code, _) = run(&[
        "quantize",
        "--model",
        model.to_str().unwrap(),
        "--calib",
        calib.to_str().unwrap(),
    ]);
    assert_eq!(code, 3);
}

#[test]
fn cost_and_gait_selection() {
    let (code, s) = run(&["cost", "--measured", "5e6,47.62", "--target-hz", "60"]);
    assert_eq!(code, 0);
    let req: f64 = value(&s, "f_clk_req_hz").parse().unwrap();
    assert!((6.25e6..=6.30e6).contains(&req));
    let (code, s) = run(&["select-gait", "--f-update", "47.62"]);
    assert_eq!(code, 0);
    assert_eq!(value(&s, "gait"), "trot");
    let (_, s) = run(&["select-gait", "--power", "1,50e-6,500e-6", "--cycles", "104998"]);
    assert_eq!(value(&s, "gait"), "gallop");
    let (code, _) = run(&["select-gait", "--power", "1,50e-6,500e-6"]);
    assert_eq!(code, 2);
}

#[test]
fn run_loop_csv_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    for p in [&a, &b] {
        let (code, _) = run(&[
            "run-loop",
            "--f-update",
            "30",
            "--seed",
            "5",
            "--episode-s",
            "2",
            "--csv-out",
            p.to_str().unwrap(),
        ]);
        assert_eq!(code, 0);
    }
    let text = std::fs::read_to_string(&a).unwrap();
    assert!(text.starts_with("t,vx,vy,wz,reward_total,reward_lin,reward_ang,pen_lin,pen_ang,reward_air\n"));
    assert_eq!(text, std::fs::read_to_string(&b).unwrap());
}

#[test]
fn codec_decode_and_selftest() {
    let dir = tempfile::tempdir().unwrap();
    let hex = dir.path().join("frame.hex");
    let mut frame = String::from("# zero observation\n7E 11 00 18 00");
    frame.push_str(&" 00".repeat(24));
    frame.push_str(" 9A\n");
    std::fs::write(&hex, &frame).unwrap();
    let (code, s) = run(&["codec", "--decode", hex.to_str().unwrap()]);
    assert_eq!(code, 0, "{s}");
    assert_eq!(value(&s, "frames"), "1");
    std::fs::write(&hex, frame.replace("9A", "9B")).unwrap();
    assert_eq!(run(&["codec", "--decode", hex.to_str().unwrap()]).0, 3);
    let (code, s) = run(&["codec", "--selftest", "--cases", "500"]);
    assert_eq!(code, 0);
    assert_eq!(value(&s, "corruptions_detected"), "500");
}

#[test]
fn pretty_output_is_a_table() {
    let (_, s) = run(&["--pretty", "ik", "--x", "0", "--y", "-0.0005"]);
    assert!(s.lines().all(|l| !l.contains('=')));
    assert!(s.lines().any(|l| l.starts_with("theta_x")));
}
