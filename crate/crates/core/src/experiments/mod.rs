//! End-to-end experiments: synthetic datasets, training runs, the WS
//! rewiring grid, size sweeps, manifest ingestion and activation maps.

mod activations;
mod dataset;
mod sweeps;
mod trade;

use std::path::Path;

use serde::{Deserialize, Serialize};

pub use activations::{
    highlight_cells, map_activations, receptive_patch, render_overlay, ActivationMap, Overlay, Patch, ACTIVE_LEVEL,
    EDGE_LEVEL, NODE_LEVEL,
};
pub use dataset::{
    build_synthetic_dataset, pipeline_sample, split_counts, split_samples, stratified_split, Dataset, DatasetSample,
    Provenance,
};
pub use sweeps::{format_grid_csv, format_robustness_csv, run_size_robustness, run_ws_grid, GridResult, RobustnessRow, SweepAxis};
pub use trade::{ingest_labeled_networks, parse_manifest, run_trade, IngestSummary, ManifestEntry};

use crate::cnn::{evaluate, train, CnnConfig, CnnModel, Evaluation, HistoryRow};
use crate::embed::SgnsConfig;
use crate::error::{Error, Result};
use crate::generators::{BaParams, WsParams};
use crate::graph::Graph;
use crate::raster::{Intensity, DEFAULT_GRID};
use crate::rng::RngStream;
use crate::walker::WalkConfig;

pub const SPEC_VERSION: u32 = 1;

/// How the networks of one class are produced.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "lowercase")]
pub enum Generator {
    Ba { n: usize, m: usize },
    Ws { n: usize, k: usize, p: f64 },
}

impl Generator {
    pub fn validate(&self) -> Result<()> {
        match *self {
            Generator::Ba { n, m } => BaParams { n, m }.validate(),
            Generator::Ws { n, k, p } => WsParams { n, k, p }.validate(),
        }
    }

    /// Draws one network from this model.
    pub fn generate(self, rng: &mut RngStream) -> Result<Graph> {
        dataset::generate(self, rng)
    }

    pub fn node_count(&self) -> usize {
        match *self {
            Generator::Ba { n, .. } | Generator::Ws { n, .. } => n,
        }
    }

    pub fn with_nodes(self, n: usize) -> Self {
        match self {
            Generator::Ba { m, .. } => Generator::Ba { n, m },
            Generator::Ws { k, p, .. } => Generator::Ws { n, k, p },
        }
    }

    /// Same model at mean degree `2 * half`: `m = half` for BA, `k = 2 * half`
    /// for WS.
    pub fn with_half_degree(self, half: usize) -> Self {
        match self {
            Generator::Ba { n, .. } => Generator::Ba { n, m: half },
            Generator::Ws { n, p, .. } => Generator::Ws { n, k: 2 * half, p },
        }
    }

    pub fn describe(&self) -> String {
        match *self {
            Generator::Ba { n, m } => format!("ba(n={n},m={m})"),
            Generator::Ws { n, k, p } => format!("ws(n={n},k={k},p={p})"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassSpec {
    pub name: String,
    #[serde(flatten)]
    pub generator: Generator,
    pub count: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitRatios {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl Default for SplitRatios {
    fn default() -> Self {
        SplitRatios { train: 0.8, val: 0.1, test: 0.1 }
    }
}

impl SplitRatios {
    /// 9:1:1, normalised.
    pub fn nine_one_one() -> Self {
        SplitRatios { train: 9.0 / 11.0, val: 1.0 / 11.0, test: 1.0 / 11.0 }
    }

    pub fn validate(&self) -> Result<()> {
        let parts = [self.train, self.val, self.test];
        if parts.iter().any(|f| !(0.0..=1.0).contains(f)) || (parts.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidParams(format!("split fractions must lie in [0, 1] and sum to 1, got {parts:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Profile {
    Desk,
    Paper,
}

impl std::str::FromStr for Profile {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "desk" => Ok(Profile::Desk),
            "paper" => Ok(Profile::Paper),
            other => Err(Error::Config(format!("unknown profile {other:?} (expected desk or paper)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub version: u32,
    pub seed: u64,
    /// May be empty for manifest-driven runs.
    #[serde(default)]
    pub classes: Vec<ClassSpec>,
    #[serde(default)]
    pub split: SplitRatios,
    #[serde(default)]
    pub walk: WalkConfig,
    #[serde(default)]
    pub sgns: SgnsConfig,
    #[serde(default = "default_grid")]
    pub grid: usize,
    #[serde(default)]
    pub intensity: Intensity,
    #[serde(default)]
    pub cnn: CnnConfig,
    /// Keep each sample's graph and 2D points (needed for activation maps).
    #[serde(default)]
    pub retain_graphs: bool,
}

fn default_grid() -> usize {
    DEFAULT_GRID
}

impl ExperimentSpec {
    /// BA(m = 4) against WS(k = 8, p = 0.1) at the given scale.
    pub fn ba_ws(profile: Profile, seed: u64) -> Self {
        // Desk training sets are 25x smaller, so the batch shrinks with them
        // to keep the number of updates per epoch comparable.
        let (n, count, walks, dim, batch) = match profile {
            Profile::Desk => (200, 200, 2000, 16, 10),
            Profile::Paper => (1000, 5600, 10_000, 20, CnnConfig::default().batch),
        };
        let split = match profile {
            Profile::Desk => SplitRatios::default(),
            Profile::Paper => SplitRatios { train: 8000.0 / 11200.0, val: 2000.0 / 11200.0, test: 1200.0 / 11200.0 },
        };
        ExperimentSpec {
            version: SPEC_VERSION,
            seed,
            classes: vec![
                ClassSpec { name: "ba".into(), generator: Generator::Ba { n, m: 4 }, count },
                ClassSpec { name: "ws".into(), generator: Generator::Ws { n, k: 8, p: 0.1 }, count },
            ],
            split,
            walk: WalkConfig { num_walks: walks, walk_length: 10, ..Default::default() },
            sgns: SgnsConfig { dim, ..Default::default() },
            grid: DEFAULT_GRID,
            intensity: Intensity::Max,
            cnn: CnnConfig { seed, batch, ..Default::default() },
            retain_graphs: false,
        }
    }

    /// Two WS classes differing only in `p`, sized like the BA/WS profile.
    pub fn ws_pair(&self, p_a: f64, p_b: f64) -> Result<Self> {
        let (n, k, count) = self
            .classes
            .iter()
            .find_map(|c| match c.generator {
                Generator::Ws { n, k, .. } => Some((n, k, c.count)),
                _ => None,
            })
            .ok_or_else(|| Error::Config("base spec has no WS class".into()))?;
        let mut spec = self.clone();
        spec.classes = [p_a, p_b]
            .iter()
            .map(|&p| ClassSpec { name: format!("ws_p{p}"), generator: Generator::Ws { n, k, p }, count })
            .collect();
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.classes.len() < 2 {
            return Err(Error::Config("an experiment needs at least two classes".into()));
        }
        for c in &self.classes {
            if c.count == 0 {
                return Err(Error::Config(format!("class {:?} has zero samples", c.name)));
            }
            c.generator.validate()?;
        }
        if self.cnn.classes != self.classes.len() {
            return Err(Error::Config(format!(
                "cnn.classes = {} but {} classes are defined",
                self.cnn.classes,
                self.classes.len()
            )));
        }
        self.validate_pipeline()
    }

    /// Everything except the class list: version, split, walk, SGNS and CNN
    /// settings. Enough for ingested networks, whose classes come from a
    /// manifest.
    pub fn validate_pipeline(&self) -> Result<()> {
        if self.version != SPEC_VERSION {
            return Err(Error::Config(format!("unsupported spec version {} (expected {SPEC_VERSION})", self.version)));
        }
        if self.cnn.input_size != self.grid {
            return Err(Error::Config(format!("cnn.input_size {} differs from grid {}", self.cnn.input_size, self.grid)));
        }
        self.split.validate()?;
        self.walk.validate()?;
        self.sgns.validate()?;
        self.cnn.geometry()?;
        Ok(())
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let spec: ExperimentSpec = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    /// Parses without validating, so callers can apply overrides first.
    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
        toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }
}

/// A trained model with its learning curve and held-out test result.
#[derive(Debug, Clone)]
pub struct RunResult {
    pub model: CnnModel,
    pub history: Vec<HistoryRow>,
    pub test: Evaluation,
}

pub fn train_and_evaluate(cfg: &CnnConfig, data: &Dataset) -> Result<RunResult> {
    if data.test.is_empty() {
        return Err(Error::Empty("test split is empty"));
    }
    let (model, history) = train(CnnModel::new(cfg.clone())?, &data.train, &data.val, cfg)?;
    let test = evaluate(&model, &data.test)?;
    Ok(RunResult { model, history, test })
}

/// Builds the dataset for `spec`, trains and evaluates once.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<(Dataset, RunResult)> {
    spec.validate()?;
    let data = build_synthetic_dataset(spec)?;
    let result = train_and_evaluate(&spec.cnn, &data)?;
    Ok((data, result))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn profiles_validate_and_round_trip() {
        for profile in [Profile::Desk, Profile::Paper] {
            let spec = ExperimentSpec::ba_ws(profile, 7);
            spec.validate().unwrap();
            let text = spec.to_toml().unwrap();
            assert_eq!(ExperimentSpec::from_toml(&text).unwrap(), spec);
        }
    }

    #[test]
    fn paper_profile_keeps_published_training_setup() {
        let paper = ExperimentSpec::ba_ws(Profile::Paper, 1);
        assert_eq!((paper.cnn.lr, paper.cnn.batch), (0.01, 100));
        assert_eq!((paper.cnn.conv1_filters, paper.cnn.conv2_filters, paper.cnn.fc_units), (3, 5, 50));
        assert_eq!((paper.walk.num_walks, paper.walk.walk_length, paper.sgns.dim), (10_000, 10, 20));
        let total: usize = paper.classes.iter().map(|c| c.count).sum();
        let split = [paper.split.train, paper.split.val, paper.split.test].map(|r| (r * total as f64).round() as usize);
        assert_eq!(split, [8000, 2000, 1200]);
        assert_eq!(ExperimentSpec::ba_ws(Profile::Desk, 1).cnn.batch, 10);
    }

    #[test]
    fn minimal_spec_file_uses_defaults() {
        let text = r#"
version = 1
seed = 3

[[classes]]
name = "ba"
model = "ba"
n = 50
m = 2
count = 4

[[classes]]
name = "ws"
model = "ws"
n = 50
k = 4
p = 0.2
count = 4
"#;
        let spec = ExperimentSpec::from_toml(text).unwrap();
        assert_eq!(spec.grid, 48);
        assert_eq!(spec.split, SplitRatios::default());
        assert_eq!(spec.classes[1].generator, Generator::Ws { n: 50, k: 4, p: 0.2 });
    }

    #[test]
    fn rejects_bad_specs() {
        let mut spec = ExperimentSpec::ba_ws(Profile::Desk, 1);
        spec.version = 2;
        assert!(spec.validate().is_err());
        let mut spec = ExperimentSpec::ba_ws(Profile::Desk, 1);
        spec.split = SplitRatios { train: 0.8, val: 0.1, test: 0.2 };
        assert!(spec.validate().is_err());
        let mut spec = ExperimentSpec::ba_ws(Profile::Desk, 1);
        spec.classes[0].count = 0;
        assert!(spec.validate().is_err());
        let mut spec = ExperimentSpec::ba_ws(Profile::Desk, 1);
        spec.grid = 40;
        assert!(spec.validate().is_err());
        assert!(ExperimentSpec::from_toml("version = 1").is_err());
    }

    #[test]
    fn ws_pair_keeps_scale() {
        let spec = ExperimentSpec::ba_ws(Profile::Desk, 1).ws_pair(0.1, 0.6).unwrap();
        assert_eq!(spec.classes[0].generator, Generator::Ws { n: 200, k: 8, p: 0.1 });
        assert_eq!(spec.classes[1].generator, Generator::Ws { n: 200, k: 8, p: 0.6 });
        assert_eq!(spec.classes[1].count, 200);
    }
}
