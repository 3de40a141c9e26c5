//! Run configuration: a single TOML file, unknown keys rejected.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use nowcast_core::bfpf::BfpfConfig;
use nowcast_core::eval::{ExtremeConfig, NamedModel, ProtocolGrid};
use nowcast_core::ingest::read_aligned_csv;
use nowcast_core::models::{ModelSpec, TrainConfig, TransformerConfig};
use nowcast_core::stats::AnalysisConfig;
use nowcast_core::synth::{generate, SyntheticSpec};
use nowcast_core::{Continent, StationMeta, StationSeries};
use serde::{Deserialize, Serialize};

use crate::ConfigError;

/// An aligned, QC-filled station CSV plus the metadata the file does not carry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StationFile {
    pub id: String,
    pub path: PathBuf,
    pub latitude: f64,
    pub longitude: f64,
    #[serde(default)]
    pub elevation: f64,
    pub continent: Continent,
}

impl StationFile {
    pub fn meta(&self) -> nowcast_core::Result<StationMeta> {
        StationMeta::new(&self.id, self.latitude, self.longitude, self.elevation, self.continent)
    }
}

/// Raw inputs for `ingest`: one PWV file per station and a set of gridded files.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IngestConfig {
    pub stations: Vec<StationFile>,
    /// Every `*.csv` in these directories is a grid file named `<variable>_<anything>.csv`.
    pub grid_dirs: Vec<PathBuf>,
    /// Individual grid files, same naming rule.
    pub grid_files: Vec<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub out_dir: Option<PathBuf>,
    /// Overrides `grid.seeds` when present.
    pub seeds: Option<Vec<u64>>,
    pub jobs: Option<usize>,
    pub stations: Vec<StationFile>,
    pub synthetic: Vec<SyntheticSpec>,
    pub ingest: IngestConfig,
    pub grid: ProtocolGrid,
    pub train: TrainConfig,
    pub extreme: ExtremeConfig,
    pub analysis: AnalysisConfig,
    /// Base transformer for the default model suite.
    pub transformer: TransformerConfig,
    /// Bias settings for the suite's BFPF variant; `enabled` defaults to true here
    /// and `enabled = false` drops that variant.
    #[serde(deserialize_with = "suite_bfpf")]
    pub bfpf: BfpfConfig,
    /// Explicit model list; replaces the default suite.
    pub models: Option<Vec<ModelSpec>>,
}

fn suite_bfpf<'de, D: serde::Deserializer<'de>>(d: D) -> Result<BfpfConfig, D::Error> {
    let mut table = toml::Table::deserialize(d)?;
    table.entry("enabled").or_insert(toml::Value::Boolean(true));
    toml::Value::Table(table).try_into().map_err(serde::de::Error::custom)
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            out_dir: None,
            seeds: None,
            jobs: None,
            stations: Vec::new(),
            synthetic: Vec::new(),
            ingest: IngestConfig::default(),
            grid: ProtocolGrid::default(),
            train: TrainConfig::default(),
            extreme: ExtremeConfig::default(),
            analysis: AnalysisConfig::default(),
            transformer: TransformerConfig::default(),
            bfpf: BfpfConfig {
                enabled: true,
                ..Default::default()
            },
            models: None,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError(format!("{}: {e}", path.display())))?;
        let mut cfg: RunConfig = toml::from_str(&text).map_err(|e| ConfigError(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.resolve_paths(base);
        Ok(cfg)
    }

    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        for s in self.stations.iter_mut().chain(self.ingest.stations.iter_mut()) {
            fix(&mut s.path);
        }
        self.ingest.grid_dirs.iter_mut().for_each(fix);
        self.ingest.grid_files.iter_mut().for_each(fix);
    }

    /// Apply command-line overrides.
    pub fn apply_overrides(&mut self, seed: Option<u64>, tau: Option<f64>) {
        if let Some(s) = seed {
            self.seeds = Some(vec![s]);
            for spec in &mut self.synthetic {
                spec.seed = s;
            }
        }
        if let Some(seeds) = self.seeds.clone() {
            self.grid.seeds = seeds;
        }
        if let Some(tau) = tau {
            self.bfpf.tau = tau;
            self.transformer.bfpf.tau = tau;
            for m in self.models.iter_mut().flatten() {
                if let ModelSpec::Transformer(c) = m {
                    c.bfpf.tau = tau;
                }
            }
        }
    }

    pub fn model_list(&self) -> Vec<NamedModel> {
        match &self.models {
            Some(list) => list.iter().cloned().map(NamedModel::new).collect(),
            None => {
                let mut base = self.transformer.clone();
                base.bfpf = self.bfpf.clone();
                let mut suite = ModelSpec::standard_suite(base);
                if !self.bfpf.enabled {
                    suite.pop();
                }
                suite.into_iter().map(NamedModel::new).collect()
            }
        }
    }

    /// Checks that need no input files.
    pub fn validate(&self) -> anyhow::Result<()> {
        let wrap = |e: nowcast_core::Error| ConfigError(e.to_string());
        self.grid.validate().map_err(wrap)?;
        self.train.validate().map_err(wrap)?;
        self.extreme.validate().map_err(wrap)?;
        self.transformer.validate().map_err(wrap)?;
        self.bfpf.validate().map_err(wrap)?;
        for s in &self.synthetic {
            s.validate().map_err(wrap)?;
        }
        for s in self.stations.iter().chain(&self.ingest.stations) {
            s.meta().map_err(wrap)?;
        }
        let models = self.model_list();
        for m in &models {
            m.spec.validate().map_err(wrap)?;
        }
        let mut names: Vec<&str> = models.iter().map(|m| m.name.as_str()).collect();
        names.sort_unstable();
        if names.windows(2).any(|w| w[0] == w[1]) {
            bail!(ConfigError(
                "model list yields duplicate names; each kind may appear once".into()
            ));
        }
        Ok(())
    }

    /// Aligned station files followed by generated synthetic stations.
    pub fn load_stations(&self) -> anyhow::Result<Vec<StationSeries>> {
        let mut out = Vec::new();
        for s in &self.stations {
            let series = read_aligned_csv(&s.path, s.meta()?).with_context(|| format!("loading station {}", s.id))?;
            out.push(series);
        }
        for spec in &self.synthetic {
            out.push(generate(spec)?);
        }
        Ok(out)
    }

    /// Every window must fit inside the shortest station.
    pub fn check_lengths(&self, stations: &[StationSeries]) -> anyhow::Result<()> {
        let Some(shortest) = stations.iter().min_by_key(|s| s.len()) else {
            bail!(ConfigError("no stations configured".into()));
        };
        let t = shortest.len();
        for c in self.grid.cells() {
            if c.span() > t {
                bail!(ConfigError(format!(
                    "cell L_in={} L_out={} R={} needs {} hours but station {} has only {t}",
                    c.l_in,
                    c.l_out,
                    c.resolution,
                    c.span(),
                    shortest.meta.station_id
                )));
            }
        }
        Ok(())
    }
}
