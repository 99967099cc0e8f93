use rand::seq::SliceRandom;
use rayon::prelude::*;

use super::{ExperimentSpec, Generator, SplitRatios};
use crate::cnn::Labeled;
use crate::embed::{embed_graph, Points2D};
use crate::error::{Error, Result};
use crate::generators::{generate_ba, generate_ws, BaParams, WsParams};
use crate::graph::Graph;
use crate::raster::{rasterize_with, GrayImage};
use crate::rng::{stage, RngStream};

/// Where a sample came from; enough to regenerate it.
#[derive(Debug, Clone, PartialEq)]
pub struct Provenance {
    /// Class name for synthetic samples, file path for ingested ones.
    pub source: String,
    pub params: String,
    pub seed: u64,
    /// Stream id of the sample's random stream.
    pub stream: u64,
}

#[derive(Debug, Clone)]
pub struct DatasetSample {
    pub image: GrayImage,
    pub label: usize,
    pub provenance: Provenance,
    pub graph: Option<Graph>,
    pub points: Option<Points2D>,
}

impl Labeled for DatasetSample {
    fn pixels(&self) -> &[f64] {
        &self.image.pixels
    }

    fn label(&self) -> usize {
        self.label
    }
}

#[derive(Debug, Clone, Default)]
pub struct Dataset {
    pub train: Vec<DatasetSample>,
    pub val: Vec<DatasetSample>,
    pub test: Vec<DatasetSample>,
}

impl Dataset {
    pub fn sizes(&self) -> [usize; 3] {
        [self.train.len(), self.val.len(), self.test.len()]
    }

    pub fn splits(&self) -> [(&'static str, &[DatasetSample]); 3] {
        [("train", &self.train), ("val", &self.val), ("test", &self.test)]
    }

    pub fn class_counts(samples: &[DatasetSample], classes: usize) -> Vec<usize> {
        let mut counts = vec![0; classes];
        for s in samples {
            counts[s.label] += 1;
        }
        counts
    }
}

/// Walks, SGNS, PCA and rasterization for one graph.
pub fn pipeline_sample(g: &Graph, spec: &ExperimentSpec, rng: &RngStream) -> Result<(GrayImage, Points2D)> {
    let out = embed_graph(g, &spec.walk, &spec.sgns, rng)?;
    if !out.report.unvisited.is_empty() {
        log::debug!("{} nodes never visited by walks", out.report.unvisited.len());
    }
    let image = rasterize_with(&out.points, spec.grid, spec.intensity)?;
    Ok((image, out.points))
}

pub(crate) fn generate(gen: Generator, rng: &mut RngStream) -> Result<Graph> {
    match gen {
        Generator::Ba { n, m } => generate_ba(BaParams { n, m }, rng),
        Generator::Ws { n, k, p } => generate_ws(WsParams { n, k, p }, rng),
    }
}

/// Generates and embeds one synthetic network on `rng` (graph on the
/// `GENERATE` child, embedding on the `WALK` and `SGNS` children).
pub(crate) fn synthesize(
    spec: &ExperimentSpec,
    gen: Generator,
    label: usize,
    source: &str,
    rng: &RngStream,
) -> Result<DatasetSample> {
    let g = generate(gen, &mut rng.derive(stage::GENERATE))?;
    let (image, points) = pipeline_sample(&g, spec, rng)?;
    let provenance = Provenance { source: source.to_string(), params: gen.describe(), seed: rng.seed(), stream: rng.stream_id() };
    let (graph, points) = if spec.retain_graphs { (Some(g), Some(points)) } else { (None, None) };
    Ok(DatasetSample { image, label, provenance, graph, points })
}

/// Runs `jobs` in parallel and drops failures, aborting when more than
/// `limit_pct` percent of them fail.
pub(crate) fn collect_tolerant<J: Sync>(
    jobs: &[J],
    limit_pct: f64,
    run: impl Fn(&J) -> Result<DatasetSample> + Sync,
    describe: impl Fn(&J) -> String,
) -> Result<Vec<DatasetSample>> {
    let results: Vec<Result<DatasetSample>> = jobs.par_iter().map(&run).collect();
    let mut samples = Vec::with_capacity(jobs.len());
    let mut failed = 0;
    for (job, r) in jobs.iter().zip(results) {
        match r {
            Ok(s) => samples.push(s),
            Err(e) => {
                failed += 1;
                log::warn!("sample {} failed: {e}", describe(job));
            }
        }
    }
    if failed as f64 > limit_pct / 100.0 * jobs.len() as f64 {
        return Err(Error::TooManyFailures { failed, total: jobs.len(), limit_pct });
    }
    Ok(samples)
}

/// Every class's networks, generated from seeds derived from
/// `(master seed, class index, sample index)`, then split.
pub fn build_synthetic_dataset(spec: &ExperimentSpec) -> Result<Dataset> {
    spec.validate()?;
    let root = RngStream::new(spec.seed, stage::CLASS);
    let jobs: Vec<(usize, usize)> =
        spec.classes.iter().enumerate().flat_map(|(c, cls)| (0..cls.count).map(move |i| (c, i))).collect();
    let samples = collect_tolerant(
        &jobs,
        1.0,
        |&(c, i)| {
            let cls = &spec.classes[c];
            synthesize(spec, cls.generator, c, &cls.name, &root.derive_path(&[c as u64, i as u64]))
        },
        |&(c, i)| format!("{}#{i}", spec.classes[c].name),
    )?;
    split_samples(samples, spec.split, &RngStream::new(spec.seed, stage::SPLIT))
}

/// Split sizes: floors of `total * fraction`, remaining units handed out by
/// largest fractional part (earlier split first on ties).
pub fn split_counts(total: usize, ratios: SplitRatios) -> [usize; 3] {
    let raw = [ratios.train, ratios.val, ratios.test].map(|f| total as f64 * f);
    // absorb representation error in products like 11200 * (8000 / 11200)
    let mut counts = raw.map(|r| (r + 1e-9).floor() as usize);
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| {
        let fa = raw[a] - counts[a] as f64;
        let fb = raw[b] - counts[b] as f64;
        fb.partial_cmp(&fa).unwrap().then(a.cmp(&b))
    });
    let mut left = total.saturating_sub(counts.iter().sum());
    for &i in order.iter().cycle() {
        if left == 0 {
            break;
        }
        counts[i] += 1;
        left -= 1;
    }
    counts
}

/// Index sets for train/val/test.
///
/// Each class is shuffled, classes are interleaved by relative position so
/// every prefix of the pool mirrors the overall balance, the pool is cut by
/// [`split_counts`], and each split is shuffled again.
pub fn stratified_split(labels: &[usize], ratios: SplitRatios, rng: &RngStream) -> Result<[Vec<usize>; 3]> {
    ratios.validate()?;
    let classes = labels.iter().copied().max().map_or(0, |m| m + 1);
    let mut keyed: Vec<(f64, usize, usize)> = Vec::with_capacity(labels.len());
    for c in 0..classes {
        let mut members: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == c).collect();
        members.shuffle(&mut rng.derive(c as u64));
        let n = members.len() as f64;
        keyed.extend(members.into_iter().enumerate().map(|(j, i)| ((j as f64 + 0.5) / n, c, i)));
    }
    keyed.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
    let counts = split_counts(labels.len(), ratios);
    let mut it = keyed.into_iter().map(|(_, _, i)| i);
    let mut out: [Vec<usize>; 3] = Default::default();
    for (s, (part, &n)) in out.iter_mut().zip(&counts).enumerate() {
        *part = it.by_ref().take(n).collect();
        part.shuffle(&mut rng.derive(stage::SHUFFLE).derive(s as u64));
    }
    Ok(out)
}

pub fn split_samples(samples: Vec<DatasetSample>, ratios: SplitRatios, rng: &RngStream) -> Result<Dataset> {
    let labels: Vec<usize> = samples.iter().map(|s| s.label).collect();
    let [train, val, test] = stratified_split(&labels, ratios, rng)?;
    let mut slots: Vec<Option<DatasetSample>> = samples.into_iter().map(Some).collect();
    let mut take = |idx: Vec<usize>| idx.into_iter().map(|i| slots[i].take().unwrap()).collect::<Vec<_>>();
    Ok(Dataset { train: take(train), val: take(val), test: take(test) })
}
