use std::fmt::Write as _;

use rayon::prelude::*;

use super::dataset::{collect_tolerant, synthesize};
use super::{run_experiment, ExperimentSpec};
use crate::cnn::{evaluate, CnnModel};
use crate::error::{Error, Result};
use crate::rng::{mix, stage, RngStream};

/// Pairwise test errors over a list of rewiring probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct GridResult {
    pub p_values: Vec<f64>,
    /// Symmetric; `None` where a cell was not run or failed. The diagonal is
    /// filled only for control cells.
    pub errors: Vec<Vec<Option<f64>>>,
    pub n_test: Vec<Vec<Option<usize>>>,
    pub failures: Vec<(usize, usize, String)>,
}

impl GridResult {
    pub fn get(&self, p_a: f64, p_b: f64) -> Option<f64> {
        let i = self.p_values.iter().position(|&p| p == p_a)?;
        let j = self.p_values.iter().position(|&p| p == p_b)?;
        self.errors[i][j]
    }
}

fn cell_seed(master: u64, i: usize, j: usize) -> u64 {
    mix(mix(mix(master, stage::CELL), i as u64), j as u64)
}

/// Trains a fresh classifier for every pair `i < j` of `p_values`, plus the
/// diagonal cell of every p listed in `controls` (two independently sampled
/// classes from the same distribution). Cells run in parallel, each with its
/// own seed derived from the base seed and the cell indices. A failing cell
/// is recorded and the rest are kept.
pub fn run_ws_grid(base: &ExperimentSpec, p_values: &[f64], controls: &[f64]) -> Result<GridResult> {
    let mut distinct = p_values.to_vec();
    distinct.sort_by(|a, b| a.partial_cmp(b).unwrap());
    distinct.dedup();
    if distinct.len() < 2 || distinct.len() != p_values.len() {
        return Err(Error::InvalidParams(format!("need at least two distinct p values, got {p_values:?}")));
    }
    let mut cells = Vec::new();
    for i in 0..p_values.len() {
        if controls.contains(&p_values[i]) {
            cells.push((i, i));
        }
        for j in i + 1..p_values.len() {
            cells.push((i, j));
        }
    }
    if let Some(c) = controls.iter().find(|c| !p_values.contains(c)) {
        return Err(Error::InvalidParams(format!("control p {c} is not in the grid")));
    }

    let outcomes: Vec<Result<(f64, usize)>> = cells
        .par_iter()
        .map(|&(i, j)| {
            let mut spec = base.ws_pair(p_values[i], p_values[j])?;
            spec.seed = cell_seed(base.seed, i, j);
            spec.cnn.seed = spec.seed;
            let (_, run) = run_experiment(&spec)?;
            log::info!("cell p={} vs p={}: test error {:.4}", p_values[i], p_values[j], run.test.error_rate);
            Ok((run.test.error_rate, run.test.total()))
        })
        .collect();

    let n = p_values.len();
    let mut result = GridResult {
        p_values: p_values.to_vec(),
        errors: vec![vec![None; n]; n],
        n_test: vec![vec![None; n]; n],
        failures: Vec::new(),
    };
    for (&(i, j), outcome) in cells.iter().zip(outcomes) {
        match outcome {
            Ok((err, count)) => {
                result.errors[i][j] = Some(err);
                result.errors[j][i] = Some(err);
                result.n_test[i][j] = Some(count);
                result.n_test[j][i] = Some(count);
            }
            Err(e) => {
                log::error!("cell p={} vs p={} failed: {e}", p_values[i], p_values[j]);
                result.failures.push((i, j, e.to_string()));
            }
        }
    }
    Ok(result)
}

/// Matrix CSV: header `p,<p_1>,...`, one row per p, empty fields for
/// cells without a value.
pub fn format_grid_csv(grid: &GridResult) -> String {
    let mut out = String::from("p");
    for p in &grid.p_values {
        write!(out, ",{p}").unwrap();
    }
    out.push('\n');
    for (p, row) in grid.p_values.iter().zip(&grid.errors) {
        write!(out, "{p}").unwrap();
        for v in row {
            match v {
                Some(e) => write!(out, ",{e}").unwrap(),
                None => out.push(','),
            }
        }
        out.push('\n');
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepAxis {
    /// Number of nodes per network.
    Nodes,
    /// BA `m`; WS uses `k = 2m` so both models keep the same mean degree.
    HalfDegree,
}

impl SweepAxis {
    pub fn name(self) -> &'static str {
        match self {
            SweepAxis::Nodes => "nodes",
            SweepAxis::HalfDegree => "half_degree",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RobustnessRow {
    pub axis: SweepAxis,
    pub value: usize,
    pub error_rate: f64,
    pub n_test: usize,
}

/// Evaluates an already trained `model` on fresh balanced test sets whose
/// networks differ from `spec` along `axis`. `per_class` networks are drawn
/// per class and value, seeded independently of the training data.
pub fn run_size_robustness(
    model: &CnnModel,
    spec: &ExperimentSpec,
    axis: SweepAxis,
    values: &[usize],
    per_class: usize,
) -> Result<Vec<RobustnessRow>> {
    if per_class == 0 {
        return Err(Error::InvalidParams("per_class must be positive".into()));
    }
    let root = RngStream::new(spec.seed, stage::ROBUST).derive(axis as u64);
    let mut rows = Vec::with_capacity(values.len());
    for &value in values {
        let gens: Vec<_> = spec
            .classes
            .iter()
            .map(|c| match axis {
                SweepAxis::Nodes => c.generator.with_nodes(value),
                SweepAxis::HalfDegree => c.generator.with_half_degree(value),
            })
            .collect();
        for g in &gens {
            g.validate()?;
        }
        let jobs: Vec<(usize, usize)> = (0..gens.len()).flat_map(|c| (0..per_class).map(move |i| (c, i))).collect();
        let samples = collect_tolerant(
            &jobs,
            1.0,
            |&(c, i)| {
                let rng = root.derive_path(&[value as u64, c as u64, i as u64]);
                synthesize(spec, gens[c], c, &spec.classes[c].name, &rng)
            },
            |&(c, i)| format!("{}#{i} at {}={value}", spec.classes[c].name, axis.name()),
        )?;
        let eval = evaluate(model, &samples)?;
        log::info!("{}={value}: error {:.4} over {}", axis.name(), eval.error_rate, samples.len());
        rows.push(RobustnessRow { axis, value, error_rate: eval.error_rate, n_test: samples.len() });
    }
    Ok(rows)
}

pub fn format_robustness_csv(rows: &[RobustnessRow]) -> String {
    let mut out = String::from("axis,value,error_rate,n_test\n");
    for r in rows {
        writeln!(out, "{},{},{},{}", r.axis.name(), r.value, r.error_rate, r.n_test).unwrap();
    }
    out
}
