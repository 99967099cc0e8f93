use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use super::dataset::{collect_tolerant, pipeline_sample, split_samples, Dataset, DatasetSample, Provenance};
use super::{train_and_evaluate, ExperimentSpec, RunResult};
use crate::error::{Error, Result};
use crate::graph::read_edge_list;
use crate::rng::{stage, RngStream};

/// Share of manifest entries that may fail before ingestion gives up.
const SKIP_LIMIT_PCT: f64 = 5.0;

#[derive(Debug, Clone, PartialEq)]
pub struct ManifestEntry {
    /// Resolved against the manifest's directory when relative.
    pub path: PathBuf,
    pub label: usize,
    pub directed: bool,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct IngestSummary {
    pub entries: usize,
    pub loaded: usize,
    pub label_counts: BTreeMap<usize, usize>,
}

/// `path,label,directed(0|1)` per line. Blank lines, `#` comments and a
/// leading `path,...` header are ignored.
pub fn parse_manifest(text: &str, base_dir: &Path, origin: &Path) -> Result<Vec<ManifestEntry>> {
    let mut entries = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap().trim();
        if line.is_empty() || (entries.is_empty() && line.starts_with("path,")) {
            continue;
        }
        let err = |reason: String| Error::Parse { path: origin.to_path_buf(), line: i + 1, reason };
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        let [path, label, directed] = fields[..] else {
            return Err(err(format!("expected `path,label,directed`, got {} fields", fields.len())));
        };
        let label = label.parse().map_err(|_| err(format!("label {label:?} is not a class index")))?;
        let directed = match directed {
            "0" => false,
            "1" => true,
            other => return Err(err(format!("directed flag must be 0 or 1, got {other:?}"))),
        };
        let path = Path::new(path);
        let path = if path.is_absolute() { path.to_path_buf() } else { base_dir.join(path) };
        entries.push(ManifestEntry { path, label, directed });
    }
    if entries.is_empty() {
        return Err(Error::Empty("manifest lists no networks"));
    }
    Ok(entries)
}

/// Reads every network listed in `manifest` and runs it through the walk,
/// embedding and rasterization stages of `spec` (weights and direction
/// respected). Unreadable or degenerate networks are skipped with a warning;
/// more than 5% skipped aborts.
pub fn ingest_labeled_networks(manifest: &Path, spec: &ExperimentSpec) -> Result<(Vec<DatasetSample>, IngestSummary)> {
    spec.walk.validate()?;
    spec.sgns.validate()?;
    let text = std::fs::read_to_string(manifest).map_err(|e| Error::io(format!("reading {}", manifest.display()), e))?;
    let base = manifest.parent().unwrap_or(Path::new("."));
    let entries = parse_manifest(&text, base, manifest)?;
    let root = RngStream::new(spec.seed, stage::CLASS);
    let jobs: Vec<(usize, &ManifestEntry)> = entries.iter().enumerate().collect();
    let samples = collect_tolerant(
        &jobs,
        SKIP_LIMIT_PCT,
        |&(i, e)| {
            let (g, report) = read_edge_list(&e.path, e.directed)?;
            if report.self_loops_dropped + report.duplicates_merged > 0 {
                log::debug!("{}: {report:?}", e.path.display());
            }
            let rng = root.derive(i as u64);
            let (image, points) = pipeline_sample(&g, spec, &rng)?;
            let provenance = Provenance {
                source: e.path.display().to_string(),
                params: format!("directed={}", e.directed),
                seed: rng.seed(),
                stream: rng.stream_id(),
            };
            let (graph, points) = if spec.retain_graphs { (Some(g), Some(points)) } else { (None, None) };
            Ok(DatasetSample { image, label: e.label, provenance, graph, points })
        },
        |&(_, e)| e.path.display().to_string(),
    )?;
    let mut label_counts = BTreeMap::new();
    for s in &samples {
        *label_counts.entry(s.label).or_insert(0) += 1;
    }
    log::info!("ingested {}/{} networks, labels {label_counts:?}", samples.len(), entries.len());
    let summary = IngestSummary { entries: entries.len(), loaded: samples.len(), label_counts };
    Ok((samples, summary))
}

/// Ingests `manifest`, splits stratified by label with `spec.split` and
/// trains `spec.cnn`. The class list of `spec` is ignored; labels must be
/// below `spec.cnn.classes`.
pub fn run_trade(manifest: &Path, spec: &ExperimentSpec) -> Result<(IngestSummary, Dataset, RunResult)> {
    spec.validate_pipeline()?;
    let (samples, summary) = ingest_labeled_networks(manifest, spec)?;
    if let Some((&label, _)) = summary.label_counts.range(spec.cnn.classes..).next() {
        return Err(Error::InvalidParams(format!("label {label} needs cnn.classes > {label}, got {}", spec.cnn.classes)));
    }
    let data = split_samples(samples, spec.split, &RngStream::new(spec.seed, stage::SPLIT))?;
    let run = train_and_evaluate(&spec.cnn, &data)?;
    Ok((summary, data, run))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn manifest_lines() {
        let text = "path,label,directed\n# comment\na.edges,0,1\n\n/abs/b.edges, 1 ,0\n";
        let e = parse_manifest(text, Path::new("/data"), Path::new("m.csv")).unwrap();
        assert_eq!(e.len(), 2);
        assert_eq!(e[0], ManifestEntry { path: "/data/a.edges".into(), label: 0, directed: true });
        assert_eq!(e[1].path, PathBuf::from("/abs/b.edges"));
        assert!(!e[1].directed);
    }

    #[test]
    fn manifest_errors_name_the_line() {
        let err = parse_manifest("a,0,1\nb,x,0\n", Path::new("."), Path::new("m.csv")).unwrap_err();
        assert!(err.to_string().contains("m.csv:2"), "{err}");
        assert!(parse_manifest("a,0,2\n", Path::new("."), Path::new("m")).is_err());
        assert!(parse_manifest("a,0\n", Path::new("."), Path::new("m")).is_err());
        assert!(parse_manifest("# nothing\n", Path::new("."), Path::new("m")).is_err());
    }
}
