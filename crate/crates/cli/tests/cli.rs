use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use distill_core::segment::FixtureSegmenter;
use distill_core::{Image, PipelineConfig};
use distill_harness::{generate_scene, read_bundle, run_episode, EpisodeOptions, Variant};
use tempfile::TempDir;

const BIN: &str = env!("CARGO_BIN_EXE_distill");

fn distill(args: &[&str]) -> Output {
    Command::new(BIN)
        .args(args)
        .env_remove("RUST_LOG")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = distill(args);
    assert!(
        out.status.success(),
        "{args:?} exited {:?}\n{}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn code(args: &[&str]) -> i32 {
    distill(args).status.code().expect("exit code")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn generate(dir: &Path, extra: &[&str]) -> PathBuf {
    let out = dir.join("scene");
    let mut args = vec!["generate", "--out", s(&out)];
    args.extend_from_slice(extra);
    ok(&args);
    out
}

fn frame_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let p = e.unwrap().path();
            (
                p.file_name().unwrap().to_string_lossy().into_owned(),
                fs::read(&p).unwrap(),
            )
        })
        .collect();
    v.sort();
    v
}

#[test]
fn help_lists_flags_and_exits_zero() {
    let top = ok(&["--help"]);
    for cmd in ["distill", "explain", "bench", "record-fixture", "serve", "generate"] {
        assert!(top.contains(cmd), "{cmd} missing from help");
    }
    assert!(top.contains("Exit codes"));
    let sub = ok(&["distill", "--help"]);
    for flag in [
        "--instruction",
        "--lexicon",
        "--domain",
        "--eta",
        "--rd",
        "--rs",
        "--re",
        "--blur-sigma",
        "--seg-backend",
        "--inpaint-backend",
        "--fail-open",
        "--fail-closed",
        "--seed",
        "--jobs",
        "--out",
    ] {
        assert!(sub.contains(flag), "{flag} missing from distill --help");
    }
}

#[test]
fn empty_frame_dir_is_a_usage_error() {
    let tmp = TempDir::new().unwrap();
    let empty = tmp.path().join("empty");
    fs::create_dir(&empty).unwrap();
    assert_eq!(
        code(&["distill", "--input", s(&empty), "--out", s(&tmp.path().join("o"))]),
        2
    );
    assert_eq!(
        code(&["distill", "--input", s(&tmp.path().join("missing")), "--out", "o"]),
        2
    );
    assert_eq!(code(&["distill"]), 2);
}

#[test]
fn frame_dir_without_ground_truth_needs_another_backend() {
    let tmp = TempDir::new().unwrap();
    let scene = generate(tmp.path(), &["--count", "2"]);
    let bundle = read_bundle(&scene).unwrap();
    let frames = tmp.path().join("frames");
    for (t, (img, robot)) in bundle.frames.iter().zip(&bundle.robot_masks).enumerate() {
        distill_harness::bundle::write_frame(&frames, t as u64, img).unwrap();
        fs::write(frames.join(format!("{t:04}.robot.rle.json")), robot.to_rle().to_json()).unwrap();
    }
    let out = tmp.path().join("o");
    // no ground truth for the mock, no instruction
    assert_eq!(code(&["distill", "--input", s(&frames), "--out", s(&out)]), 2);

    let fixture = tmp.path().join("f.jsonl");
    ok(&["record-fixture", "--input", s(&scene), "--out", s(&fixture)]);
    ok(&[
        "distill",
        "--input",
        s(&frames),
        "--out",
        s(&out),
        "--instruction",
        "put spoon on towel",
        "--seg-backend",
        "fixture",
        "--fixture",
        s(&fixture),
    ]);
    let from_bundle = tmp.path().join("b");
    ok(&["distill", "--input", s(&scene), "--out", s(&from_bundle)]);
    assert_eq!(
        frame_bytes(&out.join("frames")),
        frame_bytes(&from_bundle.join("frames"))
    );
}

#[test]
fn mock_wire_and_fixture_backends_give_identical_frames() {
    let tmp = TempDir::new().unwrap();
    let scene = generate(tmp.path(), &["--count", "6", "--seed", "3"]);
    let mock = tmp.path().join("mock");
    ok(&["distill", "--input", s(&scene), "--out", s(&mock)]);

    let endpoint = format!("cmd:{BIN} serve --input {}", s(&scene));
    let wire = tmp.path().join("wire");
    ok(&[
        "distill",
        "--input",
        s(&scene),
        "--out",
        s(&wire),
        "--seg-backend",
        "wire",
        "--inpaint-backend",
        "wire",
        "--seg-endpoint",
        &endpoint,
    ]);

    let fixture = tmp.path().join("f.jsonl");
    ok(&["record-fixture", "--input", s(&scene), "--out", s(&fixture)]);
    let replay = tmp.path().join("replay");
    ok(&[
        "distill",
        "--input",
        s(&scene),
        "--out",
        s(&replay),
        "--seg-backend",
        "fixture",
        "--fixture",
        s(&fixture),
    ]);

    let reference = frame_bytes(&mock.join("frames"));
    assert_eq!(reference.len(), 10);
    assert_eq!(frame_bytes(&wire.join("frames")), reference);
    assert_eq!(frame_bytes(&replay.join("frames")), reference);
    assert_eq!(
        fs::read(mock.join("clean/m_lama.rle.json")).unwrap(),
        fs::read(wire.join("clean/m_lama.rle.json")).unwrap()
    );
}

#[test]
fn wire_server_answers_over_tcp() {
    use std::io::{BufRead, BufReader};
    let tmp = TempDir::new().unwrap();
    let scene = generate(tmp.path(), &["--count", "2", "--seed", "5"]);
    let mut child = Command::new(BIN)
        .args(["serve", "--input", s(&scene), "--listen", "127.0.0.1:0"])
        .stderr(std::process::Stdio::piped())
        .spawn()
        .unwrap();
    let mut line = String::new();
    BufReader::new(child.stderr.take().unwrap())
        .read_line(&mut line)
        .unwrap();
    let addr = line
        .trim()
        .strip_prefix("listening on ")
        .expect("address line")
        .to_string();
    let out = tmp.path().join("tcp");
    let result = distill(&[
        "distill",
        "--input",
        s(&scene),
        "--out",
        s(&out),
        "--seg-backend",
        "wire",
        "--seg-endpoint",
        &format!("tcp:{addr}"),
    ]);
    child.kill().unwrap();
    child.wait().unwrap();
    assert!(result.status.success(), "{}", String::from_utf8_lossy(&result.stderr));
    let mock = tmp.path().join("mock");
    ok(&["distill", "--input", s(&scene), "--out", s(&mock)]);
    assert_eq!(frame_bytes(&out.join("frames")), frame_bytes(&mock.join("frames")));
}

#[test]
fn fixture_recording_is_stable_and_replays_verbatim() {
    let tmp = TempDir::new().unwrap();
    let scene = generate(tmp.path(), &["--count", "4", "--seed", "9"]);
    let a = tmp.path().join("a.jsonl");
    let b = tmp.path().join("b.jsonl");
    let out_a = ok(&["record-fixture", "--input", s(&scene), "--out", s(&a)]);
    let out_b = ok(&["record-fixture", "--input", s(&scene), "--out", s(&b)]);
    let bytes = fs::read(&a).unwrap();
    assert_eq!(bytes, fs::read(&b).unwrap());
    let sum = |o: &str| o.lines().find(|l| l.starts_with("sha256 ")).unwrap().to_string();
    assert_eq!(sum(&out_a), sum(&out_b));

    let fixture = FixtureSegmenter::load(&a).unwrap();
    assert_eq!(fixture.records().len(), 3 + 14);
    let mut rewritten = Vec::new();
    distill_core::segment::write_fixture(fixture.records(), &mut rewritten).unwrap();
    assert_eq!(rewritten, bytes);
    let frame0 = Image::load_png(scene.join("frames/0000.png")).unwrap();
    for r in fixture.records() {
        let concept = r.concept.as_deref().unwrap();
        assert_eq!(fixture.raw_response(&frame0, concept), Some(r.response.as_str()));
    }
}

#[test]
fn zero_concepts_record_an_empty_fixture() {
    let tmp = TempDir::new().unwrap();
    let scene = generate(tmp.path(), &["--count", "0"]);
    let f = tmp.path().join("e.jsonl");
    ok(&["record-fixture", "--input", s(&scene), "--concepts", "", "--out", s(&f)]);
    assert_eq!(fs::read(&f).unwrap(), b"");
}

#[test]
fn distill_matches_the_library_episode_and_is_deterministic() {
    let tmp = TempDir::new().unwrap();
    let scene_dir = generate(tmp.path(), &["--preset", "confusion", "--seed", "7"]);
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    ok(&["distill", "--input", s(&scene_dir), "--out", s(&a)]);
    ok(&["distill", "--input", s(&scene_dir), "--out", s(&b), "--jobs", "1"]);
    assert_eq!(frame_bytes(&a.join("frames")), frame_bytes(&b.join("frames")));
    assert_eq!(frame_bytes(&a.join("clean")).len(), 5);
    for f in ["clean.png", "m_inp.rle.json", "m_lama.rle.json", "trace.json"] {
        assert_eq!(
            fs::read(a.join("clean").join(f)).unwrap(),
            fs::read(b.join("clean").join(f)).unwrap(),
            "{f}"
        );
    }

    // golden: the same episode through the library
    let spec = read_bundle(&scene_dir).unwrap().spec;
    let scene = generate_scene(&spec).unwrap();
    let opts = EpisodeOptions {
        keep_frames: true,
        ..Default::default()
    };
    let expected = run_episode(&scene, Variant::Full, &PipelineConfig::default(), &opts).unwrap();
    let got = frame_bytes(&a.join("frames"));
    for (t, img) in expected.outputs.iter().enumerate() {
        assert_eq!(got[t].1, img.encode_png().unwrap(), "frame {t}");
    }
    let report: serde_json::Value = serde_json::from_slice(&fs::read(a.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["report"]["segmentation_calls_after_init"], 0);
    assert_eq!(report["report"]["inpaint_calls_after_init"], 0);
}

fn trace(dir: &Path) -> serde_json::Value {
    serde_json::from_slice(&fs::read(dir.join("trace.json")).unwrap()).unwrap()
}

#[test]
fn explain_shows_the_imposter_outscored() {
    let tmp = TempDir::new().unwrap();
    let scene = generate(tmp.path(), &["--preset", "worked-example", "--seed", "7"]);
    let out = tmp.path().join("ex");
    let table = ok(&["explain", "--input", s(&scene), "--out", s(&out)]);
    assert!(table.contains("1.440") && table.contains("0.420"), "{table}");
    assert!(out.join("overlay.png").is_file());

    let t = trace(&out);
    let comps = t["refinement"]["components"].as_array().unwrap();
    assert_eq!(comps.len(), 2);
    let mut scores: Vec<f64> = comps.iter().map(|c| c["score"].as_f64().unwrap()).collect();
    scores.sort_by(f64::total_cmp);
    assert!(
        (scores[0] - 0.42).abs() < 1e-9 && (scores[1] - 1.44).abs() < 1e-9,
        "{scores:?}"
    );

    // totals recomputed from the traced g* and sigma*, and the argmax chosen
    let selected = t["refinement"]["selected"].as_u64().unwrap();
    let mut best = (f64::MIN, 0);
    for c in comps {
        let g = c["g_star"].as_f64().unwrap();
        let sigma = c["sigma_star"].as_f64().unwrap();
        let score = c["score"].as_f64().unwrap();
        assert!((score - (1.0 + g) * sigma).abs() < 1e-12);
        if score > best.0 {
            best = (score, c["id"].as_u64().unwrap());
        }
    }
    assert_eq!(selected, best.1);
}

#[test]
fn explain_without_distractors_has_one_component() {
    let tmp = TempDir::new().unwrap();
    // the random taxonomy has no cross-label confusion, so nothing conflicts
    let scene = generate(tmp.path(), &["--taxonomy", "random", "--count", "0", "--seed", "2"]);
    let out = tmp.path().join("ex");
    ok(&["explain", "--input", s(&scene), "--out", s(&out)]);
    let t = trace(&out);
    let comps = t["refinement"]["components"].as_array().unwrap();
    assert_eq!(comps.len(), 1);
    assert_eq!(comps[0]["g_star"], comps[0]["sigma_star"]);
}

#[test]
fn exit_codes_follow_the_contract() {
    let tmp = TempDir::new().unwrap();
    let scene = generate(tmp.path(), &["--count", "2"]);
    let out = tmp.path().join("o");
    let base = ["distill", "--input", s(&scene), "--out", s(&out)];
    let with = |extra: &[&str]| {
        let mut v = base.to_vec();
        v.extend_from_slice(extra);
        code(&v)
    };
    assert_eq!(with(&["--rd", "9", "--rs", "2"]), 2);
    assert_eq!(with(&["--eta", "1.5"]), 2);
    assert_eq!(with(&["--instruction", "juggle the spoon"]), 2);
    assert_eq!(with(&["--seg-backend", "wire"]), 2);
    assert_eq!(with(&["--seg-backend", "wire", "--seg-endpoint", "tcp:127.0.0.1:1"]), 3);
    assert_eq!(with(&["--instruction", "put kettle on towel", "--fail-closed"]), 4);
    assert_eq!(with(&["--instruction", "put kettle on towel"]), 0);
    let fixture = tmp.path().join("e.jsonl");
    ok(&[
        "record-fixture",
        "--input",
        s(&scene),
        "--concepts",
        "",
        "--out",
        s(&fixture),
    ]);
    assert_eq!(with(&["--seg-backend", "fixture", "--fixture", s(&fixture)]), 3);
}

#[test]
fn flags_override_env_which_overrides_the_config_file() {
    let tmp = TempDir::new().unwrap();
    let scene = generate(tmp.path(), &["--count", "2"]);
    let out = tmp.path().join("o");
    let cfg = tmp.path().join("run.toml");
    fs::write(&cfg, "[pipeline.gating]\nr_d = 1\nr_s = 2\n").unwrap();
    let run = |env: &[(&str, &str)], extra: &[&str]| {
        let mut cmd = Command::new(BIN);
        cmd.args(["distill", "--input", s(&scene), "--out", s(&out), "--config", s(&cfg)]);
        cmd.args(extra);
        for (k, v) in env {
            cmd.env(k, v);
        }
        cmd.output().unwrap().status.code().unwrap()
    };
    assert_eq!(run(&[], &[]), 0);
    // env beats the file: r_d 4 > r_s 2
    assert_eq!(run(&[("DISTILL_RD", "4")], &[]), 2);
    // the flag beats env
    assert_eq!(run(&[("DISTILL_RD", "4")], &["--rd", "2"]), 0);
    let report: serde_json::Value = serde_json::from_slice(&fs::read(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["config"]["gating"]["r_d"], 2);
    assert_eq!(report["config"]["gating"]["r_s"], 2);
    assert_eq!(run(&[("DISTILL_FAIL_POLICY", "sideways")], &[]), 2);
}

#[test]
fn sweep_writes_reports_and_passes_its_check() {
    let tmp = TempDir::new().unwrap();
    let run = |dir: &Path| {
        ok(&[
            "bench",
            "sweep",
            "--counts",
            "6",
            "--seeds",
            "0..2",
            "--episodes",
            "2",
            "--check",
            "--out",
            s(dir),
        ])
    };
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    let table = run(&a);
    run(&b);
    assert!(
        table.contains("baseline_identity") && table.contains("ordering holds"),
        "{table}"
    );
    let csv = fs::read_to_string(a.join("sweep.csv")).unwrap();
    assert_eq!(csv, fs::read_to_string(b.join("sweep.csv")).unwrap());
    assert_eq!(csv.lines().count(), 1 + 5 * 4);
    assert!(csv.starts_with("variant,taxonomy,count,seed,episode,success,target_iou,residual,init_ms,frame_ms_p50"));
    assert_eq!(
        fs::read(a.join("sweep.json")).unwrap(),
        fs::read(b.join("sweep.json")).unwrap()
    );
}

#[test]
fn empty_sweep_spec_is_rejected() {
    let tmp = TempDir::new().unwrap();
    let spec = tmp.path().join("spec.json");
    fs::write(&spec, r#"{"counts": []}"#).unwrap();
    assert_eq!(code(&["bench", "sweep", "--spec", s(&spec), "--out", s(tmp.path())]), 2);
    assert_eq!(code(&["bench", "sweep", "--seeds", "3..3", "--out", s(tmp.path())]), 2);
    assert!(!tmp.path().join("sweep.csv").exists());
}

#[test]
fn latency_bench_reports_quiet_backends() {
    let tmp = TempDir::new().unwrap();
    let text = ok(&[
        "bench",
        "latency",
        "--count",
        "2",
        "--repeats",
        "1",
        "--out",
        s(tmp.path()),
    ]);
    assert!(text.contains("backends quiet after init: true"), "{text}");
    let report: serde_json::Value =
        serde_json::from_slice(&fs::read(tmp.path().join("latency.json")).unwrap()).unwrap();
    assert_eq!(report["backends_quiet_after_init"], true);
    assert_eq!(report["frame_samples"], 9);
}
