//! Cartesian evaluation protocol: every (station, cell, model, seed) unit is
//! trained on the chronological train split, selected on val and scored on test.

use std::collections::BTreeSet;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::metrics::{ExtremeConfig, MetricSet};
use super::report::{EvaluationReport, ReportMeta};
use crate::error::{Error, Result};
use crate::models::{window_dataset, ModelSpec, Normalizer, TargetScale, TrainConfig, WindowConfig, WindowedSplits};
use crate::types::{make_split, Seed, StationSeries};

/// One (L_in, L_out, R) combination. R is the output resolution in hours.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Cell {
    pub l_in: usize,
    pub l_out: usize,
    pub resolution: usize,
}

impl Cell {
    pub fn span(&self) -> usize {
        self.l_in + self.l_out * self.resolution
    }
}

/// Multi-scale cells `input_lengths x output_lengths` at hourly output, plus
/// multi-resolution cells that hold the horizon fixed at `horizon_hours` with
/// `resolution_input_length` hourly inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProtocolGrid {
    pub input_lengths: Vec<usize>,
    pub output_lengths: Vec<usize>,
    pub resolutions: Vec<usize>,
    pub horizon_hours: usize,
    pub resolution_input_length: usize,
    pub seeds: Vec<u64>,
}

impl Default for ProtocolGrid {
    fn default() -> Self {
        ProtocolGrid {
            input_lengths: vec![12, 24],
            output_lengths: vec![2, 4, 6],
            resolutions: vec![1, 2, 3],
            horizon_hours: 6,
            resolution_input_length: 24,
            seeds: vec![0, 1, 2],
        }
    }
}

impl ProtocolGrid {
    /// A grid with exactly one cell.
    pub fn single(cell: Cell, seeds: Vec<u64>) -> Self {
        ProtocolGrid {
            input_lengths: vec![cell.l_in],
            output_lengths: vec![cell.l_out],
            resolutions: vec![cell.resolution],
            horizon_hours: cell.l_out * cell.resolution,
            resolution_input_length: cell.l_in,
            seeds,
        }
        .multi_resolution_only()
    }

    fn multi_resolution_only(mut self) -> Self {
        if self.resolutions != [1] {
            self.input_lengths.clear();
            self.output_lengths.clear();
        }
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.seeds.is_empty() {
            return bad("grid needs at least one seed".into());
        }
        if self.input_lengths.is_empty() != self.output_lengths.is_empty() {
            return bad("input_lengths and output_lengths must both be empty or both non-empty".into());
        }
        if self.input_lengths.is_empty() && self.resolutions.is_empty() {
            return bad("grid has no cells".into());
        }
        if self.input_lengths.iter().chain(&self.output_lengths).any(|&v| v == 0) {
            return bad("window lengths must be positive".into());
        }
        if !self.resolutions.is_empty() && self.resolution_input_length == 0 {
            return bad("resolution_input_length must be positive".into());
        }
        for &r in &self.resolutions {
            if r == 0 || !self.horizon_hours.is_multiple_of(r) || self.horizon_hours / r == 0 {
                return bad(format!(
                    "resolution {r}h does not divide the {}h horizon",
                    self.horizon_hours
                ));
            }
        }
        let unique: BTreeSet<u64> = self.seeds.iter().copied().collect();
        if unique.len() != self.seeds.len() {
            return bad("duplicate seeds".into());
        }
        Ok(())
    }

    /// Cells in enumeration order, without duplicates.
    pub fn cells(&self) -> Vec<Cell> {
        let scale = self.input_lengths.iter().flat_map(|&l_in| {
            self.output_lengths.iter().map(move |&l_out| Cell {
                l_in,
                l_out,
                resolution: 1,
            })
        });
        let resolution = self.resolutions.iter().map(|&r| Cell {
            l_in: self.resolution_input_length,
            l_out: self.horizon_hours / r.max(1),
            resolution: r,
        });
        let mut seen = BTreeSet::new();
        scale.chain(resolution).filter(|c| seen.insert(*c)).collect()
    }

    /// Longest series span any cell needs.
    pub fn max_span(&self) -> usize {
        self.cells().iter().map(Cell::span).max().unwrap_or(0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NamedModel {
    pub name: String,
    pub spec: ModelSpec,
}

impl NamedModel {
    pub fn new(spec: ModelSpec) -> Self {
        NamedModel {
            name: spec.default_name(),
            spec,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ProtocolOptions {
    /// Worker threads; 0 uses the rayon default.
    pub jobs: usize,
    pub extreme: ExtremeConfig,
    pub build_id: String,
}

impl Default for ProtocolOptions {
    fn default() -> Self {
        ProtocolOptions {
            jobs: 0,
            extreme: ExtremeConfig::default(),
            build_id: default_build_id(),
        }
    }
}

pub fn default_build_id() -> String {
    format!("nowcast-core/{}", env!("CARGO_PKG_VERSION"))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellRecord {
    pub station_id: String,
    pub model: String,
    pub l_in: usize,
    pub l_out: usize,
    pub resolution: usize,
    pub seed: u64,
    pub metrics: MetricSet,
    pub n_train: usize,
    pub n_test: usize,
    pub epochs_run: usize,
    pub best_epoch: Option<usize>,
}

impl CellRecord {
    pub fn cell(&self) -> Cell {
        Cell {
            l_in: self.l_in,
            l_out: self.l_out,
            resolution: self.resolution,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailedCell {
    pub station_id: String,
    pub model: String,
    pub l_in: usize,
    pub l_out: usize,
    pub resolution: usize,
    pub seed: u64,
    pub reason: String,
}

/// Windows of one station for one cell, with the train-split normalizer.
#[derive(Debug, Clone)]
pub struct PreparedCell {
    pub windows: WindowedSplits,
    pub normalizer: Normalizer,
    pub target: TargetScale,
}

/// Chronological split, train-split normalization and windowing. Every split
/// must end up with at least one window.
pub fn prepare_cell(series: &StationSeries, cell: Cell) -> Result<PreparedCell> {
    let split = make_split(series.len())?;
    let norm = Normalizer::fit(series.data.view(), split.train.clone());
    let cfg = WindowConfig::new(cell.l_in, cell.l_out, cell.resolution)?;
    let windows = window_dataset(series, &cfg, &split, &norm)?;
    for (name, w) in [
        ("train windows", &windows.train),
        ("validation windows", &windows.val),
        ("test windows", &windows.test),
    ] {
        if w.is_empty() {
            return Err(Error::Empty(name));
        }
    }
    Ok(PreparedCell {
        windows,
        target: norm.target(),
        normalizer: norm,
    })
}

/// Seed shared by every model in a unit so that paired comparisons see the
/// same initialization and batch order where parameter layouts agree.
pub fn unit_seed(seed: u64, station_id: &str, cell: Cell) -> Seed {
    Seed(seed)
        .derive(&[cell.l_in as u64, cell.l_out as u64, cell.resolution as u64])
        .derive_str(station_id)
}

fn run_unit(
    prep: &PreparedCell,
    station_id: &str,
    cell: Cell,
    model: &NamedModel,
    seed: u64,
    tc: &TrainConfig,
    extreme: &ExtremeConfig,
) -> Result<CellRecord> {
    let s = unit_seed(seed, station_id, cell);
    let mut m = model.spec.build(&model.name, cell.l_in, cell.l_out, s)?;
    let w = &prep.windows;
    let trace = m.fit(&w.train, &w.val, prep.target, tc, s)?;
    let mut y_hat = Vec::with_capacity(w.test.len() * cell.l_out);
    let mut y = Vec::with_capacity(w.test.len() * cell.l_out);
    for smp in &w.test {
        y_hat.extend(m.predict(smp.x.view(), &smp.x_raw_tp)?);
        y.extend_from_slice(&smp.y);
    }
    Ok(CellRecord {
        station_id: station_id.to_string(),
        model: model.name.clone(),
        l_in: cell.l_in,
        l_out: cell.l_out,
        resolution: cell.resolution,
        seed,
        metrics: MetricSet::compute(&y_hat, &y, extreme)?,
        n_train: w.train.len(),
        n_test: w.test.len(),
        epochs_run: trace.epochs.len(),
        best_epoch: trace.best_epoch,
    })
}

fn pool(jobs: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::InvalidConfig(format!("worker pool: {e}")))
}

/// Run the full protocol. Cell failures are recorded in the report, not raised.
pub fn run_protocol(
    stations: &[StationSeries],
    models: &[NamedModel],
    grid: &ProtocolGrid,
    tc: &TrainConfig,
    opts: &ProtocolOptions,
) -> Result<EvaluationReport> {
    grid.validate()?;
    tc.validate()?;
    opts.extreme.validate()?;
    if stations.is_empty() {
        return Err(Error::Empty("stations"));
    }
    if models.is_empty() {
        return Err(Error::Empty("models"));
    }
    let names: BTreeSet<&str> = models.iter().map(|m| m.name.as_str()).collect();
    if names.len() != models.len() {
        return Err(Error::InvalidConfig("model names must be unique".into()));
    }
    let ids: BTreeSet<&str> = stations.iter().map(|s| s.meta.station_id.as_str()).collect();
    if ids.len() != stations.len() {
        return Err(Error::InvalidConfig("station ids must be unique".into()));
    }
    for m in models {
        m.spec.validate()?;
    }
    for s in stations {
        if !s.qc_applied {
            return Err(Error::InvalidConfig(format!(
                "station {} has not been QC-filled",
                s.meta.station_id
            )));
        }
    }

    let cells = grid.cells();
    let prepared_keys: Vec<(usize, Cell)> = (0..stations.len())
        .flat_map(|s| cells.iter().map(move |&c| (s, c)))
        .collect();
    let units: Vec<(usize, usize, u64)> = (0..prepared_keys.len())
        .flat_map(|p| (0..models.len()).flat_map(move |m| grid.seeds.iter().map(move |&seed| (p, m, seed))))
        .collect();

    let workers = pool(opts.jobs)?;
    let outcomes: Vec<std::result::Result<CellRecord, FailedCell>> = workers.install(|| {
        let prepared: Vec<Result<PreparedCell>> = prepared_keys
            .par_iter()
            .map(|&(s, c)| prepare_cell(&stations[s], c))
            .collect();
        units
            .par_iter()
            .map(|&(p, m, seed)| {
                let (s, cell) = prepared_keys[p];
                let station_id = &stations[s].meta.station_id;
                let result = match &prepared[p] {
                    Ok(prep) => run_unit(prep, station_id, cell, &models[m], seed, tc, &opts.extreme),
                    Err(e) => Err(Error::InvalidConfig(format!("windowing failed: {e}"))),
                };
                result.map_err(|e| {
                    log::warn!("{station_id} {} {cell:?} seed {seed}: {e}", models[m].name);
                    FailedCell {
                        station_id: station_id.clone(),
                        model: models[m].name.clone(),
                        l_in: cell.l_in,
                        l_out: cell.l_out,
                        resolution: cell.resolution,
                        seed,
                        reason: e.to_string(),
                    }
                })
            })
            .collect()
    });

    let (mut records, mut failures) = (Vec::new(), Vec::new());
    for o in outcomes {
        match o {
            Ok(r) => records.push(r),
            Err(f) => failures.push(f),
        }
    }
    let meta = ReportMeta {
        grid: grid.clone(),
        cells,
        seeds: grid.seeds.clone(),
        build_id: opts.build_id.clone(),
        stations: stations.iter().map(|s| s.meta.station_id.clone()).collect(),
        models: models.to_vec(),
        train: tc.clone(),
        extreme: opts.extreme,
    };
    Ok(EvaluationReport::assemble(meta, records, failures))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_grid_has_eight_cells() {
        let cells = ProtocolGrid::default().cells();
        assert_eq!(cells.len(), 8);
        assert_eq!(
            cells[0],
            Cell {
                l_in: 12,
                l_out: 2,
                resolution: 1
            }
        );
        assert_eq!(
            cells[5],
            Cell {
                l_in: 24,
                l_out: 6,
                resolution: 1
            }
        );
        assert_eq!(
            cells[6],
            Cell {
                l_in: 24,
                l_out: 3,
                resolution: 2
            }
        );
        assert_eq!(
            cells[7],
            Cell {
                l_in: 24,
                l_out: 2,
                resolution: 3
            }
        );
        assert_eq!(ProtocolGrid::default().max_span(), 30);
    }

    #[test]
    fn single_cell_grids() {
        let c = Cell {
            l_in: 12,
            l_out: 3,
            resolution: 2,
        };
        let g = ProtocolGrid::single(c, vec![7]);
        g.validate().unwrap();
        assert_eq!(g.cells(), vec![c]);
        let h = Cell {
            l_in: 12,
            l_out: 2,
            resolution: 1,
        };
        assert_eq!(ProtocolGrid::single(h, vec![7]).cells(), vec![h]);
    }

    #[test]
    fn validation() {
        let g = ProtocolGrid {
            resolutions: vec![4],
            ..Default::default()
        };
        assert!(g.validate().is_err());
        let g = ProtocolGrid {
            seeds: vec![1, 1],
            ..Default::default()
        };
        assert!(g.validate().is_err());
        assert!(toml::from_str::<ProtocolGrid>("input_lenghts = [1]").is_err());
    }
}
