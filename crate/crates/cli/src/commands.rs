use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clap::Args;
use nowcast_core::eval::{prepare_cell, run_protocol, unit_seed, Cell, EvaluationReport, MetricSet, ProtocolOptions};
use nowcast_core::ingest::{
    align_station, completeness, parse_station_csv, qc_fill, read_grid_csv, write_aligned_csv, CompletenessReport,
    GridField,
};
use nowcast_core::models::{
    grad_check, probe_batch, write_checkpoint, Checkpoint, TargetScale, TransformerConfig, TransformerNet, WindowConfig,
};
use nowcast_core::stats::analyze_station;
use nowcast_core::synth::{generate, SyntheticSpec};
use nowcast_core::{Seed, StationSeries, TP, VARIABLES};
use serde::Serialize;

use crate::config::RunConfig;
use crate::{Cli, Command, ConfigError, Global};

#[derive(Args, Debug)]
pub struct SynthArgs {
    /// Used when the configuration has no [[synthetic]] entries.
    #[arg(long, default_value_t = 2 * 8760)]
    pub hours: usize,
    #[arg(long, default_value_t = 0.82)]
    pub zero_fraction: f64,
    #[arg(long, default_value = "SYN1")]
    pub station_id: String,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    /// Model name from the configured model list.
    #[arg(long)]
    pub model: String,
    /// Station id; defaults to the first configured station.
    #[arg(long)]
    pub station: Option<String>,
    #[arg(long, default_value_t = 24)]
    pub l_in: usize,
    #[arg(long, default_value_t = 6)]
    pub l_out: usize,
    #[arg(long, default_value_t = 1)]
    pub resolution: usize,
}

#[derive(Args, Debug)]
pub struct ReportArgs {
    /// Report JSON; defaults to <out>/report.json.
    #[arg(long)]
    pub input: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct GradcheckArgs {
    #[arg(long, default_value_t = 2)]
    pub batch: usize,
    #[arg(long, default_value_t = 2)]
    pub heads: usize,
    #[arg(long, default_value_t = 8)]
    pub len: usize,
    #[arg(long, default_value_t = 8)]
    pub d_model: usize,
    #[arg(long, default_value_t = 2)]
    pub layers: usize,
    /// Check the plain transformer instead of the biased one.
    #[arg(long)]
    pub no_bfpf: bool,
    #[arg(long, default_value_t = 1e-5)]
    pub tolerance: f64,
}

pub fn run(cli: Cli) -> anyhow::Result<()> {
    let g = cli.global;
    match cli.command {
        Command::Ingest => ingest(&g),
        Command::Synth(a) => synth(&g, &a),
        Command::Analyze => analyze(&g),
        Command::Train(a) => train(&g, &a),
        Command::Evaluate => evaluate(&g),
        Command::Report(a) => report(&g, &a),
        Command::Gradcheck(a) => gradcheck(&g, &a),
    }
}

fn load_config(g: &Global, required: bool) -> anyhow::Result<RunConfig> {
    let mut cfg = match &g.config {
        Some(p) => RunConfig::load(p)?,
        None if required => bail!(ConfigError("this command needs --config".into())),
        None => RunConfig::default(),
    };
    cfg.apply_overrides(g.seed, g.tau);
    cfg.validate()?;
    Ok(cfg)
}

fn out_dir(g: &Global, cfg: &RunConfig) -> anyhow::Result<PathBuf> {
    let dir = g
        .out
        .clone()
        .or_else(|| cfg.out_dir.clone())
        .unwrap_or_else(|| PathBuf::from("out"));
    fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    Ok(dir)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> anyhow::Result<()> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    fs::write(path, s).with_context(|| format!("writing {}", path.display()))
}

/// Worker count: flag, then config, then all cores; always capped by the environment.
fn jobs(g: &Global, cfg: &RunConfig) -> usize {
    let requested = g
        .jobs
        .or(cfg.jobs)
        .filter(|&j| j > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    let cap = std::env::var("NOWCAST_BENCH_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|&c| c > 0);
    cap.map_or(requested, |c| requested.min(c))
}

/// Variable named by a grid file: the longest variable that the stem equals or
/// starts with followed by `_`.
fn grid_variable(path: &Path) -> anyhow::Result<&'static str> {
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or_default();
    VARIABLES
        .iter()
        .copied()
        .filter(|v| *v != "pwv" && (stem == *v || stem.starts_with(&format!("{v}_"))))
        .max_by_key(|v| v.len())
        .ok_or_else(|| {
            ConfigError(format!(
                "{}: grid file name must start with a gridded variable name",
                path.display()
            ))
            .into()
        })
}

fn grid_paths(cfg: &RunConfig) -> anyhow::Result<Vec<PathBuf>> {
    let mut paths = cfg.ingest.grid_files.clone();
    for dir in &cfg.ingest.grid_dirs {
        let entries = fs::read_dir(dir).map_err(|e| ConfigError(format!("{}: {e}", dir.display())))?;
        let mut found: Vec<PathBuf> = entries
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "csv"))
            .collect();
        found.sort();
        paths.extend(found);
    }
    Ok(paths)
}

#[derive(Serialize)]
struct IngestedStation {
    station_id: String,
    hours: usize,
    start: String,
    aligned_csv: PathBuf,
    completeness: CompletenessReport,
}

#[derive(Serialize)]
struct StationFailure {
    station_id: String,
    reason: String,
}

#[derive(Serialize)]
struct IngestReport {
    stations: Vec<IngestedStation>,
    failures: Vec<StationFailure>,
}

fn ingest(g: &Global) -> anyhow::Result<()> {
    let cfg = load_config(g, true)?;
    if cfg.ingest.stations.is_empty() {
        bail!(ConfigError("no [[ingest.stations]] configured".into()));
    }
    let out = out_dir(g, &cfg)?.join("aligned");
    fs::create_dir_all(&out)?;

    let (mut met, mut precip): (Vec<GridField>, Vec<GridField>) = (Vec::new(), Vec::new());
    for p in grid_paths(&cfg)? {
        let var = grid_variable(&p)?;
        let field = read_grid_csv(&p, var)?;
        if var == VARIABLES[TP] {
            precip.push(field);
        } else {
            met.push(field);
        }
    }

    let mut report = IngestReport {
        stations: Vec::new(),
        failures: Vec::new(),
    };
    for st in &cfg.ingest.stations {
        let raw = parse_station_csv(&st.path)?;
        let aligned = align_station(&raw, &met, &precip, st.meta()?).and_then(|s| qc_fill(&s));
        match aligned {
            Ok(series) => {
                let path = out.join(format!("{}.csv", st.id));
                write_aligned_csv(&path, &series)?;
                let Some(span) = raw.span() else {
                    bail!(ConfigError(format!("{}: no samples", st.path.display())));
                };
                report.stations.push(IngestedStation {
                    station_id: st.id.clone(),
                    hours: series.len(),
                    start: nowcast_core::format_utc(series.start_time),
                    aligned_csv: path,
                    completeness: completeness(&st.id, &raw, span)?,
                });
            }
            Err(e) => {
                log::warn!("station {}: {e}", st.id);
                report.failures.push(StationFailure {
                    station_id: st.id.clone(),
                    reason: e.to_string(),
                });
            }
        }
    }
    write_json(&out.join("ingest_report.json"), &report)?;
    if report.stations.is_empty() {
        bail!("every station failed to align");
    }
    Ok(())
}

fn synth(g: &Global, a: &SynthArgs) -> anyhow::Result<()> {
    let cfg = load_config(g, false)?;
    let specs = if cfg.synthetic.is_empty() {
        let spec = SyntheticSpec {
            station_id: a.station_id.clone(),
            duration_hours: a.hours,
            zero_fraction: a.zero_fraction,
            seed: g.seed.unwrap_or(0),
            ..Default::default()
        };
        spec.validate().map_err(|e| ConfigError(e.to_string()))?;
        vec![spec]
    } else {
        cfg.synthetic.clone()
    };
    let out = out_dir(g, &cfg)?;
    for spec in &specs {
        let series = generate(spec)?;
        let path = out.join(format!("{}.csv", spec.station_id));
        write_aligned_csv(&path, &series)?;
        println!("{}", path.display());
    }
    Ok(())
}

fn stations(cfg: &RunConfig) -> anyhow::Result<Vec<StationSeries>> {
    let s = cfg.load_stations()?;
    if s.is_empty() {
        bail!(ConfigError(
            "no stations: add [[stations]] or [[synthetic]] entries".into()
        ));
    }
    Ok(s)
}

fn analyze(g: &Global) -> anyhow::Result<()> {
    let cfg = load_config(g, true)?;
    let out = out_dir(g, &cfg)?.join("analysis");
    fs::create_dir_all(&out)?;
    for s in stations(&cfg)? {
        let a = analyze_station(&s, &cfg.analysis)?;
        let path = out.join(format!("{}.json", s.meta.station_id));
        write_json(&path, &a)?;
        println!("{}", path.display());
    }
    Ok(())
}

#[derive(Serialize)]
struct TrainSummary {
    station_id: String,
    model: String,
    cell: Cell,
    seed: u64,
    trace: nowcast_core::models::TrainTrace,
    test: MetricSet,
    checkpoint: PathBuf,
}

fn train(g: &Global, a: &TrainArgs) -> anyhow::Result<()> {
    let cfg = load_config(g, true)?;
    let models = cfg.model_list();
    let Some(model) = models.iter().find(|m| m.name == a.model) else {
        let names: Vec<&str> = models.iter().map(|m| m.name.as_str()).collect();
        bail!(ConfigError(format!(
            "unknown model {:?}; configured: {}",
            a.model,
            names.join(", ")
        )));
    };
    let all = stations(&cfg)?;
    let series = match &a.station {
        Some(id) => all
            .iter()
            .find(|s| &s.meta.station_id == id)
            .ok_or_else(|| ConfigError(format!("unknown station {id:?}")))?,
        None => &all[0],
    };
    let cell = Cell {
        l_in: a.l_in,
        l_out: a.l_out,
        resolution: a.resolution,
    };
    if cell.span() > series.len() {
        bail!(ConfigError(format!(
            "cell needs {} hours, station has {}",
            cell.span(),
            series.len()
        )));
    }
    let seed = cfg.grid.seeds[0];
    let station_id = &series.meta.station_id;
    let prep = prepare_cell(series, cell)?;
    let s = unit_seed(seed, station_id, cell);
    let mut m = model.spec.build(&model.name, cell.l_in, cell.l_out, s)?;
    let w = &prep.windows;
    let trace = m.fit(&w.train, &w.val, prep.target, &cfg.train, s)?;
    let (mut y_hat, mut y) = (Vec::new(), Vec::new());
    for smp in &w.test {
        y_hat.extend(m.predict(smp.x.view(), &smp.x_raw_tp)?);
        y.extend_from_slice(&smp.y);
    }
    let test = MetricSet::compute(&y_hat, &y, &cfg.extreme)?;

    let out = out_dir(g, &cfg)?.join("checkpoints");
    fs::create_dir_all(&out)?;
    let stem = format!(
        "{station_id}_{}_{}_{}_{}_s{seed}",
        model.name, cell.l_in, cell.l_out, cell.resolution
    );
    let ckpt_path = out.join(format!("{stem}.nwb"));
    let window = WindowConfig::new(cell.l_in, cell.l_out, cell.resolution)?;
    let ckpt = Checkpoint::from_model(m.as_ref(), window, prep.normalizer.clone());
    let file = fs::File::create(&ckpt_path).with_context(|| format!("creating {}", ckpt_path.display()))?;
    write_checkpoint(std::io::BufWriter::new(file), &ckpt)?;
    let summary = TrainSummary {
        station_id: station_id.clone(),
        model: model.name.clone(),
        cell,
        seed,
        trace,
        test,
        checkpoint: ckpt_path,
    };
    write_json(&out.join(format!("{stem}.json")), &summary)?;
    println!("{}", serde_json::to_string_pretty(&summary.test)?);
    Ok(())
}

fn evaluate(g: &Global) -> anyhow::Result<()> {
    let cfg = load_config(g, true)?;
    let all = stations(&cfg)?;
    cfg.check_lengths(&all)?;
    let opts = ProtocolOptions {
        jobs: jobs(g, &cfg),
        extreme: cfg.extreme,
        ..Default::default()
    };
    let report = run_protocol(&all, &cfg.model_list(), &cfg.grid, &cfg.train, &opts)?;
    let out = out_dir(g, &cfg)?;
    let path = out.join("report.json");
    fs::write(&path, report.to_json()?).with_context(|| format!("writing {}", path.display()))?;
    println!("{}", path.display());
    for f in &report.failures {
        eprintln!(
            "failed: {} {} ({}, {}, {}h) seed {}: {}",
            f.station_id, f.model, f.l_in, f.l_out, f.resolution, f.seed, f.reason
        );
    }
    if report.records.is_empty() {
        bail!("every evaluation cell failed");
    }
    Ok(())
}

fn report(g: &Global, a: &ReportArgs) -> anyhow::Result<()> {
    let cfg = match &g.config {
        Some(_) => load_config(g, true)?,
        None => RunConfig::default(),
    };
    let out = out_dir(g, &cfg)?;
    let input = a.input.clone().unwrap_or_else(|| out.join("report.json"));
    let text = fs::read_to_string(&input).map_err(|e| ConfigError(format!("{}: {e}", input.display())))?;
    let mut report =
        EvaluationReport::from_json(&text).map_err(|e| ConfigError(format!("{}: {e}", input.display())))?;
    report.refresh();
    let md = out.join("report.md");
    fs::write(&md, report.to_markdown())?;
    let csv_path = out.join("report_long.csv");
    let file = fs::File::create(&csv_path).with_context(|| format!("creating {}", csv_path.display()))?;
    report.write_long_csv(std::io::BufWriter::new(file))?;
    println!("{}", md.display());
    Ok(())
}

#[derive(Serialize)]
struct GradcheckOutput {
    batch: usize,
    heads: usize,
    len: usize,
    d_model: usize,
    bfpf: bool,
    n_params: usize,
    max_rel_error: f64,
    worst_param: String,
    lambda_rel_error: Option<f64>,
    alpha_rel_error: Option<f64>,
    tolerance: f64,
    pass: bool,
}

fn gradcheck(g: &Global, a: &GradcheckArgs) -> anyhow::Result<()> {
    let mut cfg = TransformerConfig {
        d_model: a.d_model,
        n_heads: a.heads,
        n_layers: a.layers,
        ff_dim: 2 * a.d_model,
        ..Default::default()
    };
    cfg.bfpf.enabled = !a.no_bfpf;
    if let Some(tau) = g.tau {
        cfg.bfpf.tau = tau;
    }
    cfg.validate().map_err(|e| ConfigError(e.to_string()))?;
    let seed = Seed(g.seed.unwrap_or(0));
    let l_out = 2;
    let mut net = TransformerNet::new(cfg, a.len, l_out, seed.derive_str("net"))?;
    let batch = probe_batch(a.batch, a.len, l_out, seed.derive_str("batch"));
    let r = grad_check(&mut net, &batch, TargetScale { mean: 0.5, std: 1.5 }, 1e-5);
    let out = GradcheckOutput {
        batch: a.batch,
        heads: a.heads,
        len: a.len,
        d_model: a.d_model,
        bfpf: !a.no_bfpf,
        n_params: r.n_params,
        max_rel_error: r.max_rel_error,
        worst_param: r.worst_param.clone(),
        lambda_rel_error: r.slot_error("bfpf.lambda"),
        alpha_rel_error: r.slot_error("bfpf.alpha"),
        tolerance: a.tolerance,
        pass: r.max_rel_error < a.tolerance,
    };
    println!("{}", serde_json::to_string_pretty(&out)?);
    if !out.pass {
        bail!("max relative error {} exceeds {}", r.max_rel_error, a.tolerance);
    }
    Ok(())
}
