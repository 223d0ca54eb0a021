use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_ccs-ica"));
    c.env_remove("CCS_ICA_OUT_DIR");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap_or(-1)
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn read_csv(path: &Path) -> (Vec<String>, Vec<Vec<f64>>) {
    let mut r = csv::Reader::from_path(path).unwrap();
    let header = r.headers().unwrap().iter().map(String::from).collect();
    let rows = r
        .records()
        .map(|rec| rec.unwrap().iter().map(|f| f.parse().unwrap()).collect())
        .collect();
    (header, rows)
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn gen_2x2(dir: &Path, seed: &str) {
    let o = run(&[
        "gen",
        "--preset",
        "paper-2x2",
        "--T",
        "1000",
        "--seed",
        seed,
        "--out",
        dir.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn gen_writes_four_files_and_mixture_matches() {
    let dir = tempfile::tempdir().unwrap();
    gen_2x2(dir.path(), "7");
    for f in ["sources.csv", "mixtures.csv", "mixing.csv", "gen_manifest.json"] {
        assert!(dir.path().join(f).is_file(), "{f}");
    }
    let (h, s) = read_csv(&dir.path().join("sources.csv"));
    assert_eq!(h, ["ch0", "ch1"]);
    let (_, x) = read_csv(&dir.path().join("mixtures.csv"));
    let (_, a) = read_csv(&dir.path().join("mixing.csv"));
    assert_eq!(a, vec![vec![0.5, 0.3], vec![0.6, 0.4]]);
    assert_eq!(s.len(), 1000);
    for (st, xt) in s.iter().zip(&x) {
        for m in 0..2 {
            let ax = a[m][0] * st[0] + a[m][1] * st[1];
            // both files carry 9 significant digits
            assert!((ax - xt[m]).abs() <= 1e-8 * (1.0 + ax.abs()), "{ax} {}", xt[m]);
        }
    }
}

#[test]
fn gen_noisy_records_sigma_and_is_reproducible() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for d in [&a, &b] {
        let o = run(&[
            "gen",
            "--preset",
            "paper-3x3",
            "--snr-db",
            "20",
            "--T",
            "400",
            "--seed",
            "3",
            "--out",
            d.path().to_str().unwrap(),
        ]);
        assert_eq!(code(&o), 0);
    }
    let m = json(&a.path().join("gen_manifest.json"));
    assert!(m["noise_sigma"].as_f64().unwrap() > 0.0);
    assert_eq!(m["snr_db"].as_f64(), Some(20.0));
    let read = |d: &Path| std::fs::read(d.join("mixtures.csv")).unwrap();
    assert_eq!(read(a.path()), read(b.path()));
    let (h, _) = read_csv(&a.path().join("mixtures.csv"));
    assert_eq!(h.len(), 3);
}

#[test]
fn missing_output_dir_is_an_io_error() {
    let o = run(&["gen", "--out", "/nonexistent/dir/for/sure"]);
    assert_eq!(code(&o), 4);
}

#[test]
fn env_var_sets_default_output_dir() {
    let dir = tempfile::tempdir().unwrap();
    let o = bin()
        .args(["sweep-discrete", "--steps", "70"])
        .env("CCS_ICA_OUT_DIR", dir.path())
        .output()
        .unwrap();
    assert_eq!(code(&o), 0);
    assert!(dir.path().join("sweep.csv").is_file());
}

#[test]
fn usage_errors_exit_2() {
    assert_eq!(code(&run(&["separate"])), 2);
    assert_eq!(code(&run(&["gen", "--preset", "nope"])), 2);
    assert_eq!(code(&run(&["no-such-command"])), 2);
    assert_eq!(code(&run(&["--help"])), 0);
}

#[test]
fn separate_reaches_25_db_and_manifest_reproduces() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    gen_2x2(d, "1");
    let out1 = d.join("run1");
    let out2 = d.join("run2");
    std::fs::create_dir(&out1).unwrap();
    std::fs::create_dir(&out2).unwrap();
    let mixtures = d.join("mixtures.csv");
    let sources = d.join("sources.csv");
    let o = run(&[
        "separate",
        "--input",
        mixtures.to_str().unwrap(),
        "--sources",
        sources.to_str().unwrap(),
        "--epsilon",
        "1e-12",
        "--out",
        out1.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let m = json(&out1.join("manifest.json"));
    let total = m["total_sir_db"].as_f64().unwrap();
    assert!(total >= 25.0, "SIR {total}");
    assert_eq!(m["config"]["epsilon"].as_f64(), Some(1e-12));
    assert!(m["wall_time_s"].as_f64().unwrap() >= 0.0);

    let (h, trace) = read_csv(&out1.join("trace.csv"));
    assert_eq!(h, ["iter", "divergence"]);
    assert_eq!(trace.len(), m["iterations"].as_u64().unwrap() as usize + 1);

    // eval on the written output agrees with the manifest
    let e = run(&[
        "eval",
        "--sources",
        sources.to_str().unwrap(),
        "--demixed",
        out1.join("demixed.csv").to_str().unwrap(),
    ]);
    assert_eq!(code(&e), 0);
    let report: serde_json::Value = serde_json::from_str(&stdout(&e)).unwrap();
    assert!((report["total_sir_db"].as_f64().unwrap() - total).abs() < 0.01);

    // the manifest alone reproduces the run
    let o = run(&[
        "separate",
        "--input",
        mixtures.to_str().unwrap(),
        "--config",
        out1.join("manifest.json").to_str().unwrap(),
        "--out",
        out2.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0);
    for f in ["w.csv", "demixed.csv", "trace.csv"] {
        assert_eq!(
            std::fs::read(out1.join(f)).unwrap(),
            std::fs::read(out2.join(f)).unwrap(),
            "{f}"
        );
    }
}

#[test]
fn separate_with_cs_objective_and_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    gen_2x2(d, "2");
    let cfg: PathBuf = d.join("run.conf");
    std::fs::write(&cfg, "objective = cs\nmax_iter = 5\ngamma = 0.2\n").unwrap();
    let o = run(&[
        "separate",
        "--input",
        d.join("mixtures.csv").to_str().unwrap(),
        "--config",
        cfg.to_str().unwrap(),
        "--gamma",
        "0.1",
        "--out",
        d.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let m = json(&d.join("manifest.json"));
    assert_eq!(m["config"]["objective"], "cs");
    assert_eq!(m["config"]["max_iter"], 5);
    // flag beats file
    assert_eq!(m["config"]["gamma"].as_f64(), Some(0.1));
    assert!(m["sir_db"].is_null());
}

#[test]
fn zero_iterations_pass_whitened_data_through() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    gen_2x2(d, "3");
    let o = run(&[
        "separate",
        "--input",
        d.join("mixtures.csv").to_str().unwrap(),
        "--max-iter",
        "0",
        "--out",
        d.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0);
    let (_, w) = read_csv(&d.join("w.csv"));
    assert_eq!(w, vec![vec![1.0, 0.0], vec![0.0, 1.0]]);
    let (_, y) = read_csv(&d.join("demixed.csv"));
    let n = y.len() as f64;
    for m in 0..2 {
        let var: f64 = y.iter().map(|r| r[m] * r[m]).sum::<f64>() / n;
        assert!((var - 1.0).abs() < 1e-6);
    }
}

#[test]
fn separate_rejects_bad_inputs() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let one = d.join("one.csv");
    std::fs::write(&one, "ch0\n1\n2\n3\n4\n").unwrap();
    let o = run(&[
        "separate",
        "--input",
        one.to_str().unwrap(),
        "--out",
        d.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 2);

    let dup = d.join("dup.csv");
    let body: String = (0..50).map(|i| format!("{i},{i}\n")).collect();
    std::fs::write(&dup, format!("ch0,ch1\n{body}")).unwrap();
    let o = run(&[
        "separate",
        "--input",
        dup.to_str().unwrap(),
        "--out",
        d.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 3, "{}", String::from_utf8_lossy(&o.stderr));

    gen_2x2(d, "4");
    let o = run(&[
        "separate",
        "--input",
        d.join("mixtures.csv").to_str().unwrap(),
        "--max-samples",
        "500",
        "--out",
        d.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 2);

    let o = run(&[
        "separate",
        "--input",
        d.join("missing.csv").to_str().unwrap(),
        "--out",
        d.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 4);
}

#[test]
fn wav_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let o = run(&[
        "gen",
        "--preset",
        "paper-2x2",
        "--T",
        "300",
        "--seed",
        "5",
        "--wav",
        "--out",
        d.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0);
    let out = d.join("sep");
    std::fs::create_dir(&out).unwrap();
    let o = run(&[
        "separate",
        "--input",
        d.join("mixtures_ch0.wav").to_str().unwrap(),
        d.join("mixtures_ch1.wav").to_str().unwrap(),
        "--max-iter",
        "3",
        "--wav",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let r = hound::WavReader::open(out.join("demixed_ch0.wav")).unwrap();
    assert_eq!(r.spec().sample_rate, 8000);
    assert_eq!(r.len(), 300);
}

#[test]
fn landscape_fast_preset_finds_the_four_minima() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("l.csv");
    let o = run(&[
        "landscape",
        "--preset",
        "sources-2",
        "--T",
        "1000",
        "--grid",
        "33",
        "--truncate-kernel",
        "--out",
        path.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let (h, rows) = read_csv(&path);
    assert_eq!(h, ["theta1", "theta2", "divergence"]);
    assert_eq!(rows.len(), 33 * 33);
    let finite: Vec<&Vec<f64>> = rows.iter().filter(|r| r[2].is_finite()).collect();
    assert!(finite.iter().all(|r| r[2] >= 0.0));
    let mut sorted = finite.clone();
    sorted.sort_by(|a, b| a[2].total_cmp(&b[2]));
    let cell = std::f64::consts::PI / 32.0;
    let half = std::f64::consts::FRAC_PI_2;
    for r in &sorted[..4] {
        // one angle on the boundary, the other at pi/2
        let near = |v: f64, t: f64| (v - t).abs() <= cell + 1e-9;
        let edge = |v: f64| near(v, 0.0) || near(v, std::f64::consts::PI);
        assert!(
            (edge(r[0]) && near(r[1], half)) || (near(r[0], half) && edge(r[1])),
            "{r:?}"
        );
    }
    assert!(stdout(&o).contains("lowest grid points"));
}

#[test]
fn landscape_needs_two_channels() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let o = run(&[
        "gen",
        "--preset",
        "paper-3x3",
        "--T",
        "50",
        "--out",
        d.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0);
    let o = run(&[
        "landscape",
        "--input",
        d.join("mixtures.csv").to_str().unwrap(),
        "--out",
        d.join("l.csv").to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 2);
}

#[test]
fn sweep_discrete_minimum_at_independence() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("s.csv");
    let o = run(&[
        "sweep-discrete",
        "--alpha",
        "-1,0,1",
        "--steps",
        "700",
        "--out",
        path.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let (h, rows) = read_csv(&path);
    assert_eq!(h, ["pAA", "alpha", "divergence"]);
    for a in [-1.0, 0.0, 1.0] {
        let curve: Vec<&Vec<f64>> = rows.iter().filter(|r| r[1] == a).collect();
        let best = curve.iter().min_by(|x, y| x[2].total_cmp(&y[2])).unwrap();
        assert!((best[0] - 0.35).abs() <= 0.001 + 1e-12);
        assert!(best[2] < 1e-8);
    }
    assert!(stdout(&o).contains("0.3500"));
}

#[test]
fn eval_edge_cases() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    gen_2x2(d, "6");
    let s = d.join("sources.csv");
    let o = run(&[
        "eval",
        "--sources",
        s.to_str().unwrap(),
        "--demixed",
        s.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0);
    let r: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(r["total_sir_db"].as_f64(), Some(300.0));

    let zeros = d.join("zeros.csv");
    let body: String = (0..1000).map(|_| "0,0\n").collect();
    std::fs::write(&zeros, format!("ch0,ch1\n{body}")).unwrap();
    let o = run(&[
        "eval",
        "--sources",
        s.to_str().unwrap(),
        "--demixed",
        zeros.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0);
    let r: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert!(r["total_sir_db"].as_f64().unwrap().abs() < 1e-12);

    let short = d.join("short.csv");
    std::fs::write(&short, "ch0,ch1\n1,2\n3,4\n").unwrap();
    let o = run(&[
        "eval",
        "--sources",
        s.to_str().unwrap(),
        "--demixed",
        short.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 2);
}
