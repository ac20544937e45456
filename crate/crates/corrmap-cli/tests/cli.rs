//! End-to-end tests of the binary: flag surfaces, output formats,
//! determinism and exit codes.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn corrmap(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_corrmap"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn write_bits(dir: &Path, name: &str, rows: &[&str]) -> String {
    let path = dir.join(name);
    fs::write(&path, rows.join("\n")).unwrap();
    path.display().to_string()
}

fn shipped_config(name: &str) -> std::path::PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../configs")
        .join(name)
}

fn stdout_json(out: &Output) -> serde_json::Value {
    assert!(
        out.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

#[test]
fn qcli_exact_reports_spectrum_and_baseline() {
    let dir = tempfile::tempdir().unwrap();
    let rows: Vec<String> = (0..64)
        .map(|i: u32| format!("{:016b}", i * 1023 % 65536))
        .collect();
    let refs: Vec<&str> = rows.iter().map(|s| s.as_str()).collect();
    let input = write_bits(dir.path(), "d.bits", &refs);

    let out = corrmap(&["qcli", "--input", &input, "--exact"], dir.path());
    let v = stdout_json(&out);
    assert!(v["qcli"].as_f64().unwrap() >= 0.0);
    assert_eq!(v["n"], 16);
    assert_eq!(v["m"].as_array().unwrap().len(), 17);
    assert_eq!(v["b"].as_array().unwrap().len(), 17);
    assert_eq!(v["mode"], "exact");
    assert!(v["manifest"]["tool_version"].is_string());
}

#[test]
fn qcli_mc_output_is_byte_identical_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    let rows: Vec<String> = (0..200).map(|i: u64| format!("{:014b}", (i * 37) % 16384)).collect();
    let refs: Vec<&str> = rows.iter().map(|s| s.as_str()).collect();
    let input = write_bits(dir.path(), "d.bits", &refs);

    let args = ["qcli", "--input", &input, "--mc", "--budget", "20000", "--seed", "1"];
    let a = corrmap(&args, dir.path());
    let b = corrmap(&args, dir.path());
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout, "identical output bytes");
    let v = stdout_json(&a);
    assert_eq!(v["mode"], "mc");
    assert_eq!(v["subsets_per_order"].as_array().unwrap().len(), 15);
}

#[test]
fn qcli_mc_is_invariant_to_thread_count() {
    let dir = tempfile::tempdir().unwrap();
    let rows: Vec<String> = (0..300)
        .map(|i: u64| format!("{:016b}", (i * 257) % 65536))
        .collect();
    let refs: Vec<&str> = rows.iter().map(|s| s.as_str()).collect();
    let input = write_bits(dir.path(), "d.bits", &refs);
    let args = ["qcli", "--input", &input, "--mc", "--budget", "5000", "--seed", "9"];
    let run_with_threads = |threads: &str| {
        Command::new(env!("CARGO_BIN_EXE_corrmap"))
            .args(args)
            .env("RAYON_NUM_THREADS", threads)
            .current_dir(dir.path())
            .output()
            .expect("binary runs")
    };
    let single = run_with_threads("1");
    let multi = run_with_threads("4");
    assert!(single.status.success());
    assert_eq!(single.stdout, multi.stdout, "thread count changed the estimate");
}

#[test]
fn qcli_table_matches_fig_panel_shape() {
    let dir = tempfile::tempdir().unwrap();
    let input = write_bits(dir.path(), "d.bits", &["0101", "1010", "0110", "1001"]);
    let table = dir.path().join("spec.csv");
    let out = corrmap(
        &["qcli", "--input", &input, "--exact", "--table", table.to_str().unwrap()],
        dir.path(),
    );
    assert!(out.status.success());
    let body = fs::read_to_string(&table).unwrap();
    let mut lines = body.lines();
    assert!(lines.next().unwrap().starts_with("# manifest:"));
    assert_eq!(lines.next().unwrap(), "k,m_k,b_k,abs_dev");
    assert_eq!(lines.count(), 5); // orders 0..=4
}

#[test]
fn cci_emits_tree_edges() {
    let dir = tempfile::tempdir().unwrap();
    let input = write_bits(dir.path(), "d.bits", &["000", "111", "000", "111"]);
    let tree = dir.path().join("tree.csv");
    let out = corrmap(
        &["cci", "--input", &input, "--tree", tree.to_str().unwrap()],
        dir.path(),
    );
    let v = stdout_json(&out);
    assert!(v["cci"].as_f64().unwrap() <= 1e-9);
    let body = fs::read_to_string(&tree).unwrap();
    // 3 variables -> 2 edges after the comment + header lines.
    assert_eq!(body.lines().count(), 4);
}

#[test]
fn map_emits_one_row_per_dataset() {
    let dir = tempfile::tempdir().unwrap();
    let a = write_bits(dir.path(), "a.bits", &["0000", "1111", "0000"]);
    let b = write_bits(dir.path(), "b.bits", &["0101", "1010", "0110"]);
    let out_csv = dir.path().join("map.csv");
    let svg = dir.path().join("map.svg");
    let out = corrmap(
        &[
            "map",
            "--inputs",
            &a,
            &b,
            "--provenance",
            "classical",
            "quantum",
            "--out",
            out_csv.to_str().unwrap(),
            "--svg",
            svg.to_str().unwrap(),
        ],
        dir.path(),
    );
    let v = stdout_json(&out);
    assert_eq!(v["points"], 2);
    let body = fs::read_to_string(&out_csv).unwrap();
    let lines: Vec<&str> = body.lines().collect();
    assert_eq!(lines.len(), 4); // comment + header + 2 rows
    assert!(lines[2].starts_with("a,"));
    assert!(lines[3].ends_with("quantum"));
    let svg_body = fs::read_to_string(&svg).unwrap();
    assert!(svg_body.starts_with("<svg"));
    assert!(svg_body.contains("<desc>"));
    // Manifest was written before results and references both outputs.
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("map.csv.manifest.json")).unwrap())
            .unwrap();
    assert_eq!(manifest["outputs"].as_array().unwrap().len(), 2);
    assert_eq!(manifest["inputs"].as_array().unwrap().len(), 2);
    assert!(manifest["inputs"][0]["sha256"].as_str().unwrap().len() == 64);
}

#[test]
fn encode_decode_roundtrip_via_files() {
    let dir = tempfile::tempdir().unwrap();
    let floats = dir.path().join("f.csv");
    fs::write(&floats, "0.0,0.5,1.0\n1.0,0.25,0.0\n0.5,0.75,0.5\n").unwrap();
    let bits = dir.path().join("f.bits");
    let out = corrmap(
        &[
            "encode",
            "--input",
            floats.to_str().unwrap(),
            "--bits",
            "6",
            "--out",
            bits.to_str().unwrap(),
        ],
        dir.path(),
    );
    let v = stdout_json(&out);
    assert_eq!(v["n"], 18);
    assert_eq!(v["samples"], 3);
    let spec = dir.path().join("f.spec.json");
    assert!(spec.exists());
    assert!(dir.path().join("f.dataset.json").exists());

    let back = dir.path().join("back.csv");
    let out = corrmap(
        &[
            "decode",
            "--input",
            bits.to_str().unwrap(),
            "--spec",
            spec.to_str().unwrap(),
            "--out",
            back.to_str().unwrap(),
        ],
        dir.path(),
    );
    stdout_json(&out);
    let body = fs::read_to_string(&back).unwrap();
    assert_eq!(body.lines().count(), 3);
}

#[test]
fn train_adapt_generate_workflow() {
    let dir = tempfile::tempdir().unwrap();
    let rows: Vec<String> = (0..200).map(|i: u64| format!("{:06b}", (i * 11) % 64)).collect();
    let refs: Vec<&str> = rows.iter().map(|s| s.as_str()).collect();
    let t1 = write_bits(dir.path(), "t1.bits", &refs);
    let rows2: Vec<String> = (0..200).map(|i: u64| format!("{:06b}", (i * 13) % 64)).collect();
    let refs2: Vec<&str> = rows2.iter().map(|s| s.as_str()).collect();
    let t2 = write_bits(dir.path(), "t2.bits", &refs2);

    let traj = dir.path().join("traj.json");
    let log = dir.path().join("fit.jsonl");
    let out = corrmap(
        &[
            "train", "--input", &t1, "--gates", "15", "--locality", "2", "--steps", "40",
            "--lr", "0.01", "--latent", "4", "--time", "1", "--seed", "3",
            "--out", traj.to_str().unwrap(), "--log", log.to_str().unwrap(),
        ],
        dir.path(),
    );
    let v = stdout_json(&out);
    assert_eq!(v["mode"], "core-fit");
    assert_eq!(v["history_records"], 41);
    assert_eq!(fs::read_to_string(&log).unwrap().lines().count(), 41);

    let traj2 = dir.path().join("traj2.json");
    let out = corrmap(
        &[
            "adapt", "--trajectory", traj.to_str().unwrap(), "--input", &t2, "--time", "2",
            "--steps", "25", "--lr", "0.01", "--out", traj2.to_str().unwrap(),
        ],
        dir.path(),
    );
    let v = stdout_json(&out);
    assert_eq!(v["anchors"], 2);

    let snap = dir.path().join("snap.bits");
    let out = corrmap(
        &[
            "generate", "--trajectory", traj2.to_str().unwrap(), "--time", "1.5",
            "--shots", "100", "--seed", "5", "--out", snap.to_str().unwrap(),
        ],
        dir.path(),
    );
    let v = stdout_json(&out);
    assert_eq!(v["extrapolated"], false);
    assert_eq!(v["samples"], 100);
    assert_eq!(fs::read_to_string(&snap).unwrap().lines().count(), 100);

    // Determinism end to end: rerunning generate reproduces the bytes.
    let before = fs::read(&snap).unwrap();
    corrmap(
        &[
            "generate", "--trajectory", traj2.to_str().unwrap(), "--time", "1.5",
            "--shots", "100", "--seed", "5", "--out", snap.to_str().unwrap(),
        ],
        dir.path(),
    );
    assert_eq!(before, fs::read(&snap).unwrap());
}

#[test]
fn eval_compares_snapshot_directories() {
    let dir = tempfile::tempdir().unwrap();
    for (sub, base) in [("real", 0.0f64), ("gen", 0.5)] {
        let d = dir.path().join(sub);
        fs::create_dir(&d).unwrap();
        for i in 0..3 {
            let rows: Vec<String> = (0..10)
                .map(|r| {
                    (0..10)
                        .map(|c| format!("{}", base + ((r * 10 + c + i) as f64) * 0.01))
                        .collect::<Vec<_>>()
                        .join(",")
                })
                .collect();
            fs::write(d.join(format!("s{i}.csv")), rows.join("\n")).unwrap();
        }
    }
    let out = corrmap(
        &[
            "eval",
            "--real",
            dir.path().join("real").to_str().unwrap(),
            "--gen",
            dir.path().join("gen").to_str().unwrap(),
        ],
        dir.path(),
    );
    let v = stdout_json(&out);
    assert!(v["pdf_js"].as_f64().unwrap() > 0.0);
    assert!(v["feature_mmd"].as_f64().unwrap() >= 0.0);
    assert_eq!(v["config"]["encoder"]["channel_widths"], serde_json::json!([8, 16, 32]));
}

#[test]
fn exit_codes_distinguish_error_classes() {
    let dir = tempfile::tempdir().unwrap();

    // Missing file: data error, exit 3, diagnostic JSON on stderr.
    let out = corrmap(&["qcli", "--input", "missing.bits", "--exact"], dir.path());
    assert_eq!(out.status.code(), Some(3));
    let diag: serde_json::Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(diag["class"], "data");

    // Budget below the minimum: config error, exit 2.
    let input = write_bits(dir.path(), "d.bits", &["0101010101", "1010101010"]);
    let out = corrmap(
        &["qcli", "--input", &input, "--mc", "--budget", "3"],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(2));
    let diag: serde_json::Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(diag["class"], "config");

    // Unknown flag: clap's usage error, exit 2.
    let out = corrmap(&["qcli", "--nope"], dir.path());
    assert_eq!(out.status.code(), Some(2));

    // Malformed data: parse error, exit 3.
    let bad = write_bits(dir.path(), "bad.bits", &["012"]);
    let out = corrmap(&["qcli", "--input", &bad, "--exact"], dir.path());
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn help_lists_every_subcommand() {
    let dir = tempfile::tempdir().unwrap();
    let out = corrmap(&["--help"], dir.path());
    let text = String::from_utf8_lossy(&out.stdout);
    for sub in [
        "encode", "decode", "qcli", "cci", "map", "train", "adapt", "generate", "eval",
        "sweep", "coupling", "temporal",
    ] {
        assert!(text.contains(sub), "--help missing {sub}");
    }
    assert!(text.contains("CORRMAP_CACHE_DIR"));

    // Defaults surface in subcommand help.
    let out = corrmap(&["train", "--help"], dir.path());
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("default: 5000"));
    assert!(text.contains("default: 0.0001"));
}

#[test]
fn coupling_smoke_runs_shipped_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = shipped_config("coupling-small.json");
    let out_csv = dir.path().join("scatter.csv");
    let out = corrmap(
        &[
            "coupling",
            "--config",
            cfg_path.to_str().unwrap(),
            "--out",
            out_csv.to_str().unwrap(),
        ],
        dir.path(),
    );
    let v = stdout_json(&out);
    assert_eq!(v["points"], 12);
    assert!(fs::read_to_string(&out_csv).unwrap().lines().count() > 12);
}

#[test]
fn sweep_smoke_runs_shipped_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = shipped_config("sweep-small.json");
    let out_csv = dir.path().join("rows.csv");
    let svg = dir.path().join("rows.svg");
    let out = corrmap(
        &[
            "sweep",
            "--config",
            cfg_path.to_str().unwrap(),
            "--out",
            out_csv.to_str().unwrap(),
            "--svg",
            svg.to_str().unwrap(),
        ],
        dir.path(),
    );
    let v = stdout_json(&out);
    assert_eq!(v["rows"], 4); // 2 seeds * 2 snapshots * 1 learner
    let body = fs::read_to_string(&out_csv).unwrap();
    assert!(body.lines().nth(1).unwrap().starts_with("seed,"));
    assert!(svg.exists());
}

#[test]
fn temporal_smoke_runs_shipped_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = shipped_config("temporal-small.json");
    let report = dir.path().join("report.json");
    let out = corrmap(
        &[
            "temporal",
            "--config",
            cfg_path.to_str().unwrap(),
            "--out",
            report.to_str().unwrap(),
        ],
        dir.path(),
    );
    let v = stdout_json(&out);
    assert_eq!(v["heldout_times"], 2);
    let body: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(&report).unwrap()).unwrap();
    // Shared row schema across the generator and the baseline.
    for model in ["interpolated", "nearest_anchor", "rbm"] {
        assert_eq!(body[model]["rows"].as_array().unwrap().len(), 2);
        assert!(body[model]["rows"][0]["tau"].is_number());
        assert!(body[model]["rows"][0]["mmd"].is_number());
    }
}
