use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};
use std::process::{Child, Command, Output, Stdio};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::Value;
use tempfile::TempDir;
use wcam::Image;

const EXE: &str = env!("CARGO_BIN_EXE_wcam");

fn wcam(args: &[&str]) -> Output {
    Command::new(EXE).args(args).output().expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn noise_png(dir: &Path, name: &str, side: usize, seed: u64) -> PathBuf {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let img = Image::from_fn(side, side, 3, |_, _, _| rng.gen::<f32>()).unwrap();
    let path = dir.join(name);
    std::fs::write(&path, img.encode_png().unwrap()).unwrap();
    path
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn tsi(result: &Value) -> Vec<f64> {
    result["tsi"].as_array().unwrap().iter().map(|v| v.as_f64().unwrap()).collect()
}

fn argmax(v: &[f64]) -> usize {
    (0..v.len()).fold(0, |best, k| if v[k] > v[best] { k } else { best })
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn attribute_cell13(image: &Path, out: &Path, extra: &[&str]) -> Output {
    let mut args = vec![
        "attribute",
        "--image",
        s(image),
        "--model",
        "builtin:cell13",
        "--n",
        "32",
        "--grid",
        "8",
        "--out",
        s(out),
    ];
    args.extend_from_slice(extra);
    wcam(&args)
}

#[test]
fn attribute_recovers_planted_cell_and_writes_outputs() {
    let dir = TempDir::new().unwrap();
    let img = noise_png(dir.path(), "a.png", 64, 1);
    let out = dir.path().join("out");
    let run = attribute_cell13(&img, &out, &[]);
    assert_eq!(code(&run), 0, "{}", stderr(&run));
    let result = read_json(&out.join("a.wcam.json"));
    let t = tsi(&result);
    assert_eq!(t.len(), 64);
    assert_eq!(argmax(&t), 13);
    assert_eq!(result["forwards"], 2112);
    for f in ["a.scale.png", "a.spatial.png", "attribute.config.json"] {
        assert!(out.join(f).is_file(), "{f} missing");
    }
    assert!(stdout(&run).contains("argmax feature 13"));
    let png = std::fs::read(out.join("a.scale.png")).unwrap();
    assert_eq!(&png[1..4], b"PNG");
}

#[test]
fn missing_image_is_an_input_error() {
    let dir = TempDir::new().unwrap();
    let run = attribute_cell13(&dir.path().join("nope.png"), &dir.path().join("out"), &[]);
    assert_eq!(code(&run), 2);
    assert!(stderr(&run).contains("nope.png"));
    assert!(!dir.path().join("out").exists(), "a failed run must not leave outputs");
}

#[test]
fn unknown_model_is_a_usage_error() {
    let dir = TempDir::new().unwrap();
    let img = noise_png(dir.path(), "a.png", 64, 1);
    let run = wcam(&["attribute", "--image", s(&img), "--model", "resnet50"]);
    assert_eq!(code(&run), 2);
}

#[test]
fn same_seed_gives_identical_json_and_config_replays() {
    let dir = TempDir::new().unwrap();
    let img = noise_png(dir.path(), "a.png", 64, 2);
    let (o1, o2, o3) = (dir.path().join("o1"), dir.path().join("o2"), dir.path().join("o3"));
    for out in [&o1, &o2] {
        let run = attribute_cell13(&img, out, &["--seed", "7", "--scramble"]);
        assert_eq!(code(&run), 0, "{}", stderr(&run));
    }
    let a = std::fs::read(o1.join("a.wcam.json")).unwrap();
    assert_eq!(a, std::fs::read(o2.join("a.wcam.json")).unwrap());

    // the resolved config alone reproduces the run
    let replay = wcam(&["attribute", "--config", s(&o1.join("attribute.config.json")), "--out", s(&o3)]);
    assert_eq!(code(&replay), 0, "{}", stderr(&replay));
    assert_eq!(a, std::fs::read(o3.join("a.wcam.json")).unwrap());
    let config = read_json(&o3.join("attribute.config.json"));
    assert_eq!(config["wcam"]["seed"], 7);
    assert_eq!(config["wcam"]["scramble"], true);
    assert_eq!(config["model"], "builtin:cell13");
}

#[test]
fn jobs_do_not_change_results_and_compare_renders() {
    let dir = TempDir::new().unwrap();
    let a = noise_png(dir.path(), "a.png", 64, 3);
    let b = noise_png(dir.path(), "b.png", 64, 4);
    let (o1, o2) = (dir.path().join("o1"), dir.path().join("o2"));
    for (out, jobs) in [(&o1, "1"), (&o2, "2")] {
        let run = wcam(&[
            "attribute", "--image", s(&a), "--image", s(&b), "--model", "builtin:cell20", "--n", "16", "--jobs", jobs,
            "--compare", "--out", s(out),
        ]);
        assert_eq!(code(&run), 0, "{}", stderr(&run));
    }
    for f in ["a.wcam.json", "b.wcam.json"] {
        assert_eq!(std::fs::read(o1.join(f)).unwrap(), std::fs::read(o2.join(f)).unwrap());
    }
    assert!(o1.join("compare.scale.png").is_file());
    assert!(o1.join("compare.spatial.png").is_file());
}

#[test]
fn center_crop_makes_rectangular_inputs_usable() {
    let dir = TempDir::new().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let img = Image::from_fn(80, 70, 3, |_, _, _| rng.gen::<f32>()).unwrap();
    let path = dir.path().join("wide.png");
    std::fs::write(&path, img.encode_png().unwrap()).unwrap();
    let out = dir.path().join("out");
    let failed = attribute_cell13(&path, &out, &[]);
    assert_eq!(code(&failed), 2);
    let run = attribute_cell13(&path, &out, &["--center-crop", "64"]);
    assert_eq!(code(&run), 0, "{}", stderr(&run));
}

#[test]
fn stdio_scorer_matches_in_process_model() {
    let dir = TempDir::new().unwrap();
    let img = noise_png(dir.path(), "a.png", 64, 6);
    let (local, remote) = (dir.path().join("local"), dir.path().join("remote"));
    assert_eq!(code(&attribute_cell13(&img, &local, &[])), 0);
    let model = format!("stdio:'{EXE}' serve --model builtin:cell13");
    let run = wcam(&["attribute", "--image", s(&img), "--model", &model, "--n", "32", "--out", s(&remote)]);
    assert_eq!(code(&run), 0, "{}", stderr(&run));
    let (l, r) = (read_json(&local.join("a.wcam.json")), read_json(&remote.join("a.wcam.json")));
    assert_eq!(r["forwards"], 2112);
    for (a, b) in tsi(&l).iter().zip(tsi(&r)) {
        assert!((a - b).abs() <= 1e-6, "{a} vs {b}");
    }
    assert!(r["model_id"].as_str().unwrap().starts_with("stdio:"));
}

struct Server(Child, String);

impl Drop for Server {
    fn drop(&mut self) {
        let _ = self.0.kill();
        let _ = self.0.wait();
    }
}

fn http_server() -> Server {
    let mut child = Command::new(EXE)
        .args(["serve", "--model", "builtin:cell13", "--http", "127.0.0.1:0"])
        .stdout(Stdio::piped())
        .spawn()
        .unwrap();
    let mut line = String::new();
    BufReader::new(child.stdout.take().unwrap()).read_line(&mut line).unwrap();
    let url = line.trim().strip_prefix("listening on ").expect("address line").to_string();
    Server(child, url)
}

#[test]
fn http_scorer_matches_in_process_model_and_env_overrides_endpoint() {
    let server = http_server();
    let dir = TempDir::new().unwrap();
    let img = noise_png(dir.path(), "a.png", 64, 7);
    let (local, remote, env) = (dir.path().join("local"), dir.path().join("remote"), dir.path().join("env"));
    assert_eq!(code(&attribute_cell13(&img, &local, &[])), 0);
    let run = wcam(&["attribute", "--image", s(&img), "--model", &server.1, "--n", "32", "--out", s(&remote)]);
    assert_eq!(code(&run), 0, "{}", stderr(&run));
    let (l, r) = (read_json(&local.join("a.wcam.json")), read_json(&remote.join("a.wcam.json")));
    for (a, b) in tsi(&l).iter().zip(tsi(&r)) {
        assert!((a - b).abs() <= 1e-6, "{a} vs {b}");
    }

    // the flag points at a closed port; the environment redirects to the server
    let run = Command::new(EXE)
        .args(["attribute", "--image", s(&img), "--model", "http://127.0.0.1:9", "--n", "32", "--out", s(&env)])
        .env("WCAM_MODEL_ENDPOINT", &server.1)
        .output()
        .unwrap();
    assert_eq!(code(&run), 0, "{}", stderr(&run));
    assert_eq!(tsi(&read_json(&env.join("a.wcam.json"))), tsi(&r));
}

#[test]
fn augment_logs_counts_and_handles_directories() {
    let dir = TempDir::new().unwrap();
    let inputs = dir.path().join("in");
    std::fs::create_dir(&inputs).unwrap();
    for i in 0..10 {
        noise_png(&inputs, &format!("img{i}.png"), 64, 100 + i);
    }
    let out = dir.path().join("out");
    let run = wcam(&["augment", "--op", "blur-wp", "--input", s(&inputs), "--drop-rate", "0.2", "--out", s(&out)]);
    assert_eq!(code(&run), 0, "{}", stderr(&run));
    assert!(stdout(&run).contains("819/4096 coefficients cancelled per channel"));
    let written: Vec<_> = std::fs::read_dir(&out)
        .unwrap()
        .filter_map(|e| e.ok())
        .filter(|e| e.file_name().to_string_lossy().ends_with(".blur-wp.png"))
        .collect();
    assert_eq!(written.len(), 10);
    assert!(out.join("augment.config.json").is_file());
}

#[test]
fn augment_rate_zero_reproduces_input() {
    let dir = TempDir::new().unwrap();
    let img = noise_png(dir.path(), "a.png", 64, 8);
    let out = dir.path().join("out");
    let run = wcam(&["augment", "--op", "wp", "--input", s(&img), "--drop-rate", "0", "--out", s(&out)]);
    assert_eq!(code(&run), 0, "{}", stderr(&run));
    let before = Image::load(&img).unwrap();
    let after = Image::load(out.join("a.wp.png")).unwrap();
    assert!(before.max_abs_diff(&after) <= 0.5 / 255.0);
}

#[test]
fn augment_unreadable_input_fails() {
    let dir = TempDir::new().unwrap();
    let bogus = dir.path().join("bogus.png");
    std::fs::write(&bogus, b"not a png").unwrap();
    let run = wcam(&["augment", "--op", "blur", "--input", s(&bogus), "--out", s(dir.path())]);
    assert_ne!(code(&run), 0);
    let missing = wcam(&["augment", "--op", "blur", "--input", s(&dir.path().join("none"))]);
    assert_eq!(code(&missing), 2);
}

/// Manifest and scores reproducing a confusion quadruple on one test set.
fn counts_fixture(dir: &Path, provider: &str, set: &str, counts: [usize; 4]) -> (PathBuf, PathBuf) {
    let mut manifest = String::from("path,label,provider,installation_id,test_set\n");
    let mut scores = serde_json::Map::new();
    let mut i = 0;
    for (n, label, score) in [(counts[0], "pv", 0.9), (counts[1], "no-pv", 0.1), (counts[2], "no-pv", 0.8), (counts[3], "pv", 0.2)] {
        for _ in 0..n {
            let path = format!("img/{i}.png");
            manifest.push_str(&format!("{path},{label},{provider},inst{i},{set}\n"));
            scores.insert(path, score.into());
            i += 1;
        }
    }
    let (m, s) = (dir.join("manifest.csv"), dir.join("scores.json"));
    std::fs::write(&m, manifest).unwrap();
    std::fs::write(&s, serde_json::to_string(&scores).unwrap()).unwrap();
    (m, s)
}

#[test]
fn eval_reproduces_published_row() {
    let dir = TempDir::new().unwrap();
    let (m, sc) = counts_fixture(dir.path(), "ign", "ign-erm", [566, 2321, 99, 1335]);
    let out = dir.path().join("out");
    let run = wcam(&["eval", "--manifest", s(&m), "--scores", s(&sc), "--out", s(&out)]);
    assert_eq!(code(&run), 0, "{}", stderr(&run));
    let report = read_json(&out.join("report.json"));
    let f1 = report["rows"][0]["f1"].as_f64().unwrap();
    assert_eq!(format!("{f1:.2}"), "0.44");
    assert!(std::fs::read_to_string(out.join("report.csv")).unwrap().contains("ign-erm,4321,566,2321,99,1335,"));
    assert!(stdout(&run).contains("0.44"));
    assert!(!out.join("shift.json").exists());
}

#[test]
fn eval_missing_scores_and_empty_test_set_are_data_errors() {
    let dir = TempDir::new().unwrap();
    let (m, _) = counts_fixture(dir.path(), "google", "g", [2, 1, 0, 0]);
    let partial = dir.path().join("partial.json");
    std::fs::write(&partial, r#"{"img/0.png": 0.9}"#).unwrap();
    let run = wcam(&["eval", "--manifest", s(&m), "--scores", s(&partial), "--out", s(dir.path())]);
    assert_eq!(code(&run), 3);
    assert!(stderr(&run).contains("img/1.png") && stderr(&run).contains("img/2.png"));

    let empty = dir.path().join("empty.csv");
    std::fs::write(&empty, "path,label,provider,installation_id,test_set\na.png,pv,google,i1,\n").unwrap();
    let run = wcam(&["eval", "--manifest", s(&empty), "--scores", s(&partial), "--out", s(dir.path())]);
    assert_eq!(code(&run), 3);
}

#[test]
fn eval_paired_positives_produce_twenty_bin_histogram() {
    let dir = TempDir::new().unwrap();
    let mut manifest = String::from("path,label,provider,installation_id,test_set\n");
    let mut scores = serde_json::Map::new();
    for i in 0..40 {
        manifest.push_str(&format!("g/{i}.png,pv,google,i{i},google\nn/{i}.png,pv,ign,i{i},ign\n"));
        scores.insert(format!("g/{i}.png"), 0.97.into());
        scores.insert(format!("n/{i}.png"), (if i % 4 == 0 { 0.9 } else { 0.03 }).into());
    }
    let m = dir.path().join("m.csv");
    let sc = dir.path().join("s.json");
    std::fs::write(&m, manifest).unwrap();
    std::fs::write(&sc, serde_json::to_string(&scores).unwrap()).unwrap();
    let out = dir.path().join("out");
    let run = wcam(&["eval", "--manifest", s(&m), "--scores", s(&sc), "--out", s(&out)]);
    assert_eq!(code(&run), 0, "{}", stderr(&run));
    let shift = read_json(&out.join("shift.json"));
    assert_eq!(shift["counts"].as_array().unwrap().len(), 20);
    assert_eq!(shift["bin_edges"].as_array().unwrap().len(), 21);
    assert_eq!(shift["pairs"], 40);
    assert_eq!(shift["downward_crossing_fraction"].as_f64().unwrap(), 0.75);

    // drop one IGN counterpart: unpaired
    let broken: String = std::fs::read_to_string(&m).unwrap().lines().filter(|l| !l.starts_with("n/3.png")).collect::<Vec<_>>().join("\n");
    std::fs::write(&m, broken + "\n").unwrap();
    let run = wcam(&["eval", "--manifest", s(&m), "--scores", s(&sc), "--out", s(&out)]);
    assert_eq!(code(&run), 3);
}

#[test]
fn eval_scores_live_with_builtin_model() {
    let dir = TempDir::new().unwrap();
    std::fs::create_dir(dir.path().join("img")).unwrap();
    let bright = Image::filled(8, 8, 3, 0.9).unwrap();
    let dark = Image::filled(8, 8, 3, 0.1).unwrap();
    std::fs::write(dir.path().join("img/b.png"), bright.encode_png().unwrap()).unwrap();
    std::fs::write(dir.path().join("img/d.png"), dark.encode_png().unwrap()).unwrap();
    let m = dir.path().join("m.csv");
    std::fs::write(&m, "path,label,provider,installation_id,test_set\nimg/b.png,pv,google,i1,t\nimg/d.png,no-pv,google,i2,t\n").unwrap();
    let out = dir.path().join("out");
    let run = wcam(&["eval", "--manifest", s(&m), "--model", "builtin:mean", "--out", s(&out)]);
    assert_eq!(code(&run), 0, "{}", stderr(&run));
    assert_eq!(read_json(&out.join("report.json"))["rows"][0]["f1"], 1.0);
}

#[test]
fn selftest_passes_filters_and_detects_corruption() {
    let all = wcam(&["selftest"]);
    assert_eq!(code(&all), 0, "{}", stdout(&all));
    let text = stdout(&all);
    for name in ["wavelet", "jansen", "planted", "augment"] {
        assert!(text.contains(&format!("PASS {name}")), "{text}");
    }

    let only = wcam(&["selftest", "--only", "wavelet"]);
    assert_eq!(code(&only), 0);
    assert_eq!(stdout(&only).lines().count(), 1);
    assert!(stdout(&only).starts_with("PASS wavelet"));

    let broken = wcam(&["selftest", "--only", "jansen", "--corrupt-directions"]);
    assert_eq!(code(&broken), 1);
    assert!(stdout(&broken).contains("FAIL jansen"));
}
