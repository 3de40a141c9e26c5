use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn nowcast(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nowcast"))
        .args(args)
        .current_dir(dir)
        .env_remove("NOWCAST_BENCH_THREADS")
        .output()
        .expect("binary runs")
}

fn ok(o: &Output) {
    assert!(o.status.success(), "stderr: {}", String::from_utf8_lossy(&o.stderr));
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn synth_is_byte_identical_per_seed() {
    let d = tempfile::tempdir().unwrap();
    for out in ["a", "b"] {
        ok(&nowcast(
            d.path(),
            &["synth", "--hours", "9000", "--seed", "5", "--out", out],
        ));
    }
    let a = fs::read(d.path().join("a/SYN1.csv")).unwrap();
    assert_eq!(a, fs::read(d.path().join("b/SYN1.csv")).unwrap());
    let text = String::from_utf8(a).unwrap();
    let tp: Vec<f64> = text
        .lines()
        .skip(1)
        .map(|l| l.rsplit(',').next().unwrap().parse().unwrap())
        .collect();
    let zero = tp.iter().filter(|&&v| v == 0.0).count() as f64 / tp.len() as f64;
    assert!((zero - 0.82).abs() < 0.03, "{zero}");
    ok(&nowcast(
        d.path(),
        &["synth", "--hours", "9000", "--seed", "6", "--out", "c"],
    ));
    assert_ne!(
        fs::read(d.path().join("c/SYN1.csv")).unwrap(),
        fs::read(d.path().join("a/SYN1.csv")).unwrap()
    );
}

const DRY: &str = r#"
[[synthetic]]
station_id = "DRY"
duration_hours = 600
zero_fraction = 1.0
"#;

#[test]
fn analyze_all_dry_station() {
    let d = tempfile::tempdir().unwrap();
    fs::write(d.path().join("run.toml"), DRY).unwrap();
    ok(&nowcast(d.path(), &["analyze", "--config", "run.toml", "--out", "o"]));
    let a = json(&d.path().join("o/analysis/DRY.json"));
    assert_eq!(a["zero_inflation"], 1.0);
    assert_eq!(a["adf"]["error"], "degenerate regression");
}

#[test]
fn minimal_evaluation_and_report() {
    let d = tempfile::tempdir().unwrap();
    let cfg = format!(
        "{DRY}\n[grid]\ninput_lengths = [12]\noutput_lengths = [2]\nresolutions = []\nseeds = [0]\n[[models]]\nkind = \"zero\"\n"
    );
    fs::write(d.path().join("run.toml"), cfg).unwrap();
    ok(&nowcast(d.path(), &["evaluate", "--config", "run.toml", "--out", "o"]));
    let r = json(&d.path().join("o/report.json"));
    let records = r["records"].as_array().unwrap();
    assert_eq!(records.len(), 1);
    assert_eq!(records[0]["metrics"]["mse"], 0.0);
    assert_eq!(records[0]["metrics"]["extreme_defined"], false);
    assert_eq!(r["rankings"]["by_mse"][0]["model"], "zero");

    ok(&nowcast(d.path(), &["report", "--out", "o"]));
    let md = fs::read_to_string(d.path().join("o/report.md")).unwrap();
    assert!(md.contains("| zero | **0.0000** | **0.0000** |"), "{md}");
    let csv = fs::read_to_string(d.path().join("o/report_long.csv")).unwrap();
    assert_eq!(
        csv.lines().next().unwrap(),
        "station,model,L_in,L_out,R,seed,metric,value"
    );
    assert_eq!(csv.lines().count(), 3);
}

#[test]
fn evaluate_is_idempotent_with_paired_models() {
    let d = tempfile::tempdir().unwrap();
    let cfg = r#"
[[synthetic]]
station_id = "WET"
duration_hours = 700
[grid]
input_lengths = [12]
output_lengths = [2]
resolutions = [2]
horizon_hours = 4
resolution_input_length = 12
seeds = [0, 1]
[train]
max_epochs = 2
max_batches_per_epoch = 3
[transformer]
d_model = 8
n_heads = 2
n_layers = 1
ff_dim = 8
"#;
    fs::write(d.path().join("run.toml"), cfg).unwrap();
    for out in ["a", "b"] {
        ok(&nowcast(
            d.path(),
            &["evaluate", "--config", "run.toml", "--out", out, "--jobs", "2"],
        ));
    }
    let a = fs::read(d.path().join("a/report.json")).unwrap();
    assert_eq!(a, fs::read(d.path().join("b/report.json")).unwrap());
    let r: Value = serde_json::from_slice(&a).unwrap();
    // 6 models x 2 cells x 2 seeds
    assert_eq!(r["records"].as_array().unwrap().len(), 24);
    assert!(r["failures"].as_array().unwrap().is_empty());
}

#[test]
fn config_errors_exit_with_2() {
    let d = tempfile::tempdir().unwrap();
    fs::write(d.path().join("typo.toml"), "[grid]\nseed = [1]\n").unwrap();
    let o = nowcast(d.path(), &["evaluate", "--config", "typo.toml"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("unknown field"));

    fs::write(
        d.path().join("long.toml"),
        format!("{DRY}\n[grid]\ninput_lengths = [590]\noutput_lengths = [20]\nseeds = [0]\n"),
    )
    .unwrap();
    let o = nowcast(d.path(), &["evaluate", "--config", "long.toml"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("needs 610 hours"));

    let o = nowcast(d.path(), &["evaluate", "--config", "missing.toml"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn gradcheck_passes_with_both_biases() {
    let d = tempfile::tempdir().unwrap();
    let o = nowcast(d.path(), &["gradcheck"]);
    ok(&o);
    let v: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["pass"], true);
    assert!(v["lambda_rel_error"].as_f64().unwrap() < 1e-5);
    assert!(v["alpha_rel_error"].as_f64().unwrap() < 1e-5);
}

#[test]
fn train_writes_a_checkpoint() {
    let d = tempfile::tempdir().unwrap();
    let cfg = "[[synthetic]]\nstation_id = \"WET\"\nduration_hours = 500\n[train]\nmax_epochs = 2\n[[models]]\nkind = \"linear\"\n";
    fs::write(d.path().join("run.toml"), cfg).unwrap();
    ok(&nowcast(
        d.path(),
        &[
            "train", "--config", "run.toml", "--model", "linear", "--l-in", "12", "--l-out", "2", "--out", "o",
        ],
    ));
    let ckpt = fs::read(d.path().join("o/checkpoints/WET_linear_12_2_1_s0.nwb")).unwrap();
    assert_eq!(&ckpt[..4], b"NWB1");
    let o = nowcast(d.path(), &["train", "--config", "run.toml", "--model", "nope"]);
    assert_eq!(o.status.code(), Some(2));
}

const HOURS: usize = 30;

fn stamp(minutes: usize) -> String {
    let (d, m) = (minutes / 1440, minutes % 1440);
    format!("2023-06-{:02}T{:02}:{:02}:00Z", d + 1, m / 60, m % 60)
}

/// PWV at 5 minutes for two stations plus hourly 3x3 grids over 22..24N, 113..115E.
fn write_ingest_fixture(dir: &Path) {
    let mut pwv = String::from("timestamp,pwv\n");
    for i in 0..HOURS * 12 {
        pwv.push_str(&format!("{},{}\n", stamp(5 * i), 40.0 + (i % 7) as f64));
    }
    fs::write(dir.join("IN.csv"), &pwv).unwrap();
    fs::write(dir.join("OUT.csv"), &pwv).unwrap();
    fs::create_dir(dir.join("grids")).unwrap();
    for (var, base) in [
        ("t2m", 300.0),
        ("sp", 101000.0),
        ("rh", 70.0),
        ("wind_speed", 3.0),
        ("tp", 0.0),
    ] {
        for h in 0..HOURS {
            let v = if var == "tp" {
                (h % 4) as f64 * 0.5
            } else {
                base + h as f64
            };
            let row = vec![v.to_string(); 3].join(",");
            let text = format!(
                "timestamp,lat0,lon0,dlat,dlon,nlat,nlon\n{},22,113,1,1,3,3\n{row}\n{row}\n{row}\n",
                stamp(60 * h)
            );
            fs::write(dir.join(format!("grids/{var}_{h:03}.csv")), text).unwrap();
        }
    }
    let cfg = r#"
[ingest]
grid_dirs = ["grids"]
[[ingest.stations]]
id = "IN"
path = "IN.csv"
latitude = 23.1
longitude = 114.2
continent = "asia"
[[ingest.stations]]
id = "OUT"
path = "OUT.csv"
latitude = 40.0
longitude = 114.2
continent = "asia"
"#;
    fs::write(dir.join("ingest.toml"), cfg).unwrap();
}

#[test]
fn ingest_aligns_and_records_station_failures() {
    let d = tempfile::tempdir().unwrap();
    write_ingest_fixture(d.path());
    ok(&nowcast(d.path(), &["ingest", "--config", "ingest.toml", "--out", "o"]));
    let aligned = fs::read_to_string(d.path().join("o/aligned/IN.csv")).unwrap();
    assert_eq!(aligned.lines().count(), HOURS + 1);
    assert!(aligned.starts_with("timestamp,t2m,sp,rh,wind_speed,pwv,tp"));
    let report = json(&d.path().join("o/aligned/ingest_report.json"));
    assert_eq!(report["stations"][0]["station_id"], "IN");
    assert_eq!(report["stations"][0]["hours"], HOURS);
    assert_eq!(report["failures"][0]["station_id"], "OUT");
    assert!(!d.path().join("o/aligned/OUT.csv").exists());
}

#[test]
fn missing_grid_file_exits_2_with_path() {
    let d = tempfile::tempdir().unwrap();
    write_ingest_fixture(d.path());
    let cfg = fs::read_to_string(d.path().join("ingest.toml")).unwrap();
    let cfg = cfg.replace("grid_dirs = [\"grids\"]", "grid_files = [\"grids/tp_999.csv\"]");
    fs::write(d.path().join("ingest.toml"), cfg).unwrap();
    let o = nowcast(d.path(), &["ingest", "--config", "ingest.toml", "--out", "o"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("tp_999.csv"));
}
