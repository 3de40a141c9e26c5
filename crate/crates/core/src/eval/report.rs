//! Report assembly: seed means, station and model averages, rankings, and the
//! JSON / Markdown / long-CSV renderings.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Write;

use serde::{Deserialize, Serialize};

use super::metrics::ExtremeConfig;
use super::protocol::{Cell, CellRecord, FailedCell, NamedModel, ProtocolGrid};
use crate::error::{Error, Result};
use crate::models::TrainConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportMeta {
    pub grid: ProtocolGrid,
    pub cells: Vec<Cell>,
    pub seeds: Vec<u64>,
    pub build_id: String,
    pub stations: Vec<String>,
    pub models: Vec<NamedModel>,
    pub train: TrainConfig,
    pub extreme: ExtremeConfig,
}

/// Running mean of the four metrics; extremes only over records where defined.
#[derive(Debug, Clone, Default)]
struct Acc {
    n: usize,
    mse: f64,
    mae: f64,
    n_ext: usize,
    eere: f64,
    aeere: f64,
}

impl Acc {
    fn push(&mut self, r: &CellRecord) {
        self.n += 1;
        self.mse += r.metrics.mse;
        self.mae += r.metrics.mae;
        if let (true, Some(e), Some(a)) = (r.metrics.extreme_defined, r.metrics.eere, r.metrics.aeere) {
            self.n_ext += 1;
            self.eere += e;
            self.aeere += a;
        }
    }

    fn summary(&self) -> MetricMeans {
        let ext = |v: f64| (self.n_ext > 0).then(|| v / self.n_ext as f64);
        MetricMeans {
            n_records: self.n,
            n_extreme_defined: self.n_ext,
            mse: self.mse / self.n as f64,
            mae: self.mae / self.n as f64,
            eere: ext(self.eere),
            aeere: ext(self.aeere),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricMeans {
    pub n_records: usize,
    /// Records contributing to `eere` / `aeere`.
    pub n_extreme_defined: usize,
    pub mse: f64,
    pub mae: f64,
    pub eere: Option<f64>,
    pub aeere: Option<f64>,
}

/// Mean over seeds for one (station, model, cell).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellMean {
    pub station_id: String,
    pub model: String,
    pub l_in: usize,
    pub l_out: usize,
    pub resolution: usize,
    #[serde(flatten)]
    pub means: MetricMeans,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StationAverage {
    pub station_id: String,
    pub model: String,
    #[serde(flatten)]
    pub means: MetricMeans,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelAverage {
    pub model: String,
    #[serde(flatten)]
    pub means: MetricMeans,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Averages {
    pub cells: Vec<CellMean>,
    pub stations: Vec<StationAverage>,
    pub models: Vec<ModelAverage>,
}

impl Averages {
    /// Group the records. Groups follow the first appearance of their key in `records`.
    pub fn from_records(records: &[CellRecord]) -> Self {
        fn group<K: Ord + Clone>(records: &[CellRecord], key: impl Fn(&CellRecord) -> K) -> Vec<(K, MetricMeans)> {
            let mut order = Vec::new();
            let mut acc: BTreeMap<K, Acc> = BTreeMap::new();
            for r in records {
                let k = key(r);
                acc.entry(k.clone()).or_insert_with(|| {
                    order.push(k.clone());
                    Acc::default()
                });
                acc.get_mut(&k).expect("inserted").push(r);
            }
            order
                .into_iter()
                .map(|k| {
                    let s = acc[&k].summary();
                    (k, s)
                })
                .collect()
        }
        Averages {
            cells: group(records, |r| (r.station_id.clone(), r.model.clone(), r.cell()))
                .into_iter()
                .map(|((station_id, model, c), means)| CellMean {
                    station_id,
                    model,
                    l_in: c.l_in,
                    l_out: c.l_out,
                    resolution: c.resolution,
                    means,
                })
                .collect(),
            stations: group(records, |r| (r.station_id.clone(), r.model.clone()))
                .into_iter()
                .map(|((station_id, model), means)| StationAverage {
                    station_id,
                    model,
                    means,
                })
                .collect(),
            models: group(records, |r| r.model.clone())
                .into_iter()
                .map(|(model, means)| ModelAverage { model, means })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankEntry {
    pub rank: usize,
    pub model: String,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rankings {
    pub by_mse: Vec<RankEntry>,
    pub by_mae: Vec<RankEntry>,
}

/// Ascending by mean, ties alphabetical by model name.
pub fn rank_models(models: &[ModelAverage]) -> Rankings {
    let rank = |metric: fn(&MetricMeans) -> f64| {
        let mut v: Vec<(f64, &str)> = models.iter().map(|m| (metric(&m.means), m.model.as_str())).collect();
        v.sort_by(|a, b| a.0.total_cmp(&b.0).then_with(|| a.1.cmp(b.1)));
        v.into_iter()
            .enumerate()
            .map(|(i, (value, model))| RankEntry {
                rank: i + 1,
                model: model.to_string(),
                value,
            })
            .collect()
    };
    Rankings {
        by_mse: rank(|m| m.mse),
        by_mae: rank(|m| m.mae),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub meta: ReportMeta,
    pub records: Vec<CellRecord>,
    pub averages: Averages,
    pub rankings: Rankings,
    pub failures: Vec<FailedCell>,
}

impl EvaluationReport {
    pub fn assemble(meta: ReportMeta, records: Vec<CellRecord>, failures: Vec<FailedCell>) -> Self {
        let averages = Averages::from_records(&records);
        let rankings = rank_models(&averages.models);
        EvaluationReport {
            meta,
            records,
            averages,
            rankings,
            failures,
        }
    }

    /// Recompute averages and rankings from the records; useful after loading a
    /// report that may have been edited by hand.
    pub fn refresh(&mut self) {
        self.averages = Averages::from_records(&self.records);
        self.rankings = rank_models(&self.averages.models);
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    /// Long format: `station,model,L_in,L_out,R,seed,metric,value`. Undefined
    /// extreme metrics are omitted.
    pub fn write_long_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["station", "model", "L_in", "L_out", "R", "seed", "metric", "value"])?;
        for r in &self.records {
            let m = &r.metrics;
            let metrics = [
                ("mse", Some(m.mse)),
                ("mae", Some(m.mae)),
                ("eere", m.eere),
                ("aeere", m.aeere),
            ];
            for (name, v) in metrics {
                let Some(v) = v else { continue };
                out.write_record([
                    r.station_id.clone(),
                    r.model.clone(),
                    r.l_in.to_string(),
                    r.l_out.to_string(),
                    r.resolution.to_string(),
                    r.seed.to_string(),
                    name.to_string(),
                    v.to_string(),
                ])?;
            }
        }
        out.flush().map_err(|e| Error::Csv(e.into()))
    }

    pub fn to_markdown(&self) -> String {
        render_markdown(self)
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".to_string(), |v| format!("{v:.4}"))
}

/// Table of `rows x columns` values with the minimum of every column in bold.
fn table(out: &mut String, header: &[String], rows: &[(String, Vec<Option<f64>>)]) {
    let _ = writeln!(out, "| {} |", header.join(" | "));
    let _ = writeln!(out, "|{}", "---|".repeat(header.len()));
    let ncol = header.len() - 1;
    let best: Vec<Option<f64>> = (0..ncol)
        .map(|c| rows.iter().filter_map(|r| r.1[c]).min_by(f64::total_cmp))
        .collect();
    for (name, vals) in rows {
        let cells: Vec<String> = vals
            .iter()
            .zip(&best)
            .map(|(v, b)| match (v, b) {
                (Some(v), Some(b)) if format!("{v:.4}") == format!("{b:.4}") => format!("**{v:.4}**"),
                _ => fmt_opt(*v),
            })
            .collect();
        let _ = writeln!(out, "| {name} | {} |", cells.join(" | "));
    }
    out.push('\n');
}

fn render_markdown(report: &EvaluationReport) -> String {
    let mut out = String::new();
    let meta = &report.meta;
    let _ = writeln!(out, "# Evaluation report\n");
    let _ = writeln!(
        out,
        "Build `{}`; {} station(s), {} model(s), {} cell(s), seeds {:?}; {} record(s), {} failure(s).\n",
        meta.build_id,
        meta.stations.len(),
        meta.models.len(),
        meta.cells.len(),
        meta.seeds,
        report.records.len(),
        report.failures.len()
    );
    let models: Vec<&str> = meta.models.iter().map(|m| m.name.as_str()).collect();
    let cell_means: BTreeMap<(&str, &str, Cell), &MetricMeans> = report
        .averages
        .cells
        .iter()
        .map(|c| {
            let cell = Cell {
                l_in: c.l_in,
                l_out: c.l_out,
                resolution: c.resolution,
            };
            ((c.station_id.as_str(), c.model.as_str(), cell), &c.means)
        })
        .collect();

    for cell in &meta.cells {
        let _ = writeln!(
            out,
            "## L_in = {}, L_out = {}, R = {}h\n",
            cell.l_in, cell.l_out, cell.resolution
        );
        for (title, pick) in [
            (
                "MSE / MAE (mm/h)",
                [|m: &MetricMeans| Some(m.mse), |m: &MetricMeans| Some(m.mae)],
            ),
            (
                "EERE / AEERE (mm/h, extremes only)",
                [|m: &MetricMeans| m.eere, |m: &MetricMeans| m.aeere],
            ),
        ] {
            let _ = writeln!(out, "{title}\n");
            let (a, b) = if title.starts_with("MSE") {
                ("MSE", "MAE")
            } else {
                ("EERE", "AEERE")
            };
            let mut header = vec!["model".to_string()];
            for s in &meta.stations {
                header.push(format!("{s} {a}"));
                header.push(format!("{s} {b}"));
            }
            header.push(format!("Avg {a}"));
            header.push(format!("Avg {b}"));
            let rows: Vec<(String, Vec<Option<f64>>)> = models
                .iter()
                .map(|&model| {
                    let mut vals = Vec::new();
                    let mut avg = [Vec::new(), Vec::new()];
                    for s in &meta.stations {
                        let m = cell_means.get(&(s.as_str(), model, *cell));
                        for (k, f) in pick.iter().enumerate() {
                            let v = m.and_then(|m| f(m));
                            if let Some(v) = v {
                                avg[k].push(v);
                            }
                            vals.push(v);
                        }
                    }
                    for a in &avg {
                        vals.push((!a.is_empty()).then(|| a.iter().sum::<f64>() / a.len() as f64));
                    }
                    (model.to_string(), vals)
                })
                .collect();
            table(&mut out, &header, &rows);
        }
    }

    let _ = writeln!(out, "## Ranking by average over all records\n");
    let _ = writeln!(
        out,
        "| rank | by MSE | mean MSE | by MAE | mean MAE |\n|---|---|---|---|---|"
    );
    for (a, b) in report.rankings.by_mse.iter().zip(&report.rankings.by_mae) {
        let _ = writeln!(
            out,
            "| {} | {} | {:.4} | {} | {:.4} |",
            a.rank, a.model, a.value, b.model, b.value
        );
    }
    if !report.failures.is_empty() {
        let _ = writeln!(out, "\n## Failures\n");
        for f in &report.failures {
            let _ = writeln!(
                out,
                "- {} / {} / ({}, {}, {}h) / seed {}: {}",
                f.station_id, f.model, f.l_in, f.l_out, f.resolution, f.seed, f.reason
            );
        }
    }
    out
}
