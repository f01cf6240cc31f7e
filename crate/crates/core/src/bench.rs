//! Synthetic workloads and a head-to-head runner: a traditional pipeline
//! (load everything, emit every triple, deduplicate at the end) against the
//! preprocessing pipeline (project and merge sources first, then emit).

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{SourceRelation, SourceSignature};
use crate::pipeline::{load_mapping, load_raw, preprocess, write_preprocessed, PipelineError};
use crate::rdfize::{rdfize, EmissionMode, KnowledgeGraph, RdfizeError, RdfizeOptions};
use crate::store::{write_csv, CsvDialect};

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("invalid workload spec: {0}")]
    Spec(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
    #[error(transparent)]
    Model(#[from] crate::model::ModelError),
    #[error(transparent)]
    Store(#[from] crate::store::StoreError),
    #[error(transparent)]
    Rdfize(RdfizeError),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> BenchError + '_ {
    move |source| BenchError::Io { path: path.to_path_buf(), source }
}

/// Which side of the gene/chromosome join is free of duplicate rows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum JoinScenario {
    NoneClean,
    OneSideClean,
    BothClean,
}

impl JoinScenario {
    pub const ALL: [JoinScenario; 3] = [JoinScenario::NoneClean, JoinScenario::OneSideClean, JoinScenario::BothClean];

    pub fn label(self) -> &'static str {
        match self {
            JoinScenario::NoneClean => "none-clean",
            JoinScenario::OneSideClean => "one-side-clean",
            JoinScenario::BothClean => "both-clean",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", default, deny_unknown_fields)]
pub struct WorkloadSpec {
    /// Rows per source at volume 1.0.
    pub base_rows: usize,
    pub volume_fractions: Vec<f64>,
    pub duplicate_fractions: Vec<f64>,
    pub attributes_per_source: usize,
    pub source_count: usize,
    /// Join cells to run; empty for none.
    pub join_scenarios: Vec<JoinScenario>,
    /// Duplicate-free child rows in join cells; defaults to a tenth of
    /// `base_rows`.
    pub join_rows: Option<usize>,
    /// Duplicate fraction of the sides of a join that are not clean.
    pub join_duplicate_fraction: f64,
    /// Size the distinct pool from the smallest volume so every volume
    /// draws from the same pool.
    pub fixed_pool: bool,
    pub seed: u64,
    pub timeout_secs: u64,
    /// Each cell runs this many times; the fastest run is reported.
    pub repetitions: usize,
    /// Emissions the traditional pipeline buffers before spilling to disk.
    pub spill_threshold: Option<usize>,
    pub keep_files: bool,
}

impl Default for WorkloadSpec {
    fn default() -> Self {
        WorkloadSpec {
            base_rows: 200_000,
            volume_fractions: vec![0.25, 0.5, 0.75, 1.0],
            duplicate_fractions: vec![0.25, 0.5, 0.75],
            attributes_per_source: 8,
            source_count: 3,
            join_scenarios: JoinScenario::ALL.to_vec(),
            join_rows: None,
            join_duplicate_fraction: 0.5,
            fixed_pool: false,
            seed: 42,
            timeout_secs: 500,
            repetitions: 1,
            spill_threshold: None,
            keep_files: false,
        }
    }
}

impl WorkloadSpec {
    pub fn from_json(text: &str) -> Result<Self, BenchError> {
        let spec: WorkloadSpec = serde_json::from_str(text).map_err(|e| BenchError::Spec(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), BenchError> {
        let bad = |m: String| Err(BenchError::Spec(m));
        if self.base_rows == 0 || self.source_count == 0 || self.repetitions == 0 {
            return bad("baseRows, sourceCount and repetitions must be at least 1".into());
        }
        if self.attributes_per_source < 2 {
            return bad("attributesPerSource must be at least 2".into());
        }
        if let Some(v) = self.volume_fractions.iter().find(|v| !(**v > 0.0 && **v <= 1.0)) {
            return bad(format!("volume fraction {v} is outside (0, 1]"));
        }
        let dups = self.duplicate_fractions.iter().chain(std::iter::once(&self.join_duplicate_fraction));
        if let Some(d) = dups.into_iter().find(|d| !(**d >= 0.0 && **d < 1.0)) {
            return bad(format!("duplicate fraction {d} is outside [0, 1)"));
        }
        if self.join_rows == Some(0) {
            return bad("joinRows must be at least 1".into());
        }
        Ok(())
    }

    fn join_rows(&self) -> usize {
        self.join_rows.unwrap_or((self.base_rows / 10).max(12))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "group", rename_all = "kebab-case", rename_all_fields = "camelCase")]
pub enum CellSpec {
    Merge { volume: f64, duplicate_fraction: f64 },
    Join { scenario: JoinScenario },
}

impl CellSpec {
    pub fn label(&self) -> String {
        match self {
            CellSpec::Merge { volume, duplicate_fraction } => {
                format!("merge_v{:03}_d{:03}", (volume * 100.0).round(), (duplicate_fraction * 100.0).round())
            }
            CellSpec::Join { scenario } => format!("join_{}", scenario.label()),
        }
    }

    fn seed(&self, base: u64) -> u64 {
        self.label()
            .bytes()
            .fold(base ^ 0x9E37_79B9_7F4A_7C15, |h, b| (h ^ u64::from(b)).wrapping_mul(0x0100_0000_01B3))
    }
}

/// A generated workload on disk.
#[derive(Debug, Clone)]
pub struct Workload {
    pub dir: PathBuf,
    pub mapping_path: PathBuf,
    pub files: Vec<PathBuf>,
}

impl Workload {
    pub fn original_bytes(&self) -> u64 {
        self.files.iter().filter_map(|f| fs::metadata(f).ok()).map(|m| m.len()).sum()
    }
}

const CONCEPT_NAMES: [&str; 6] = ["enst", "downstream_gene", "transcript_id", "transcript", "enst_id", "tx_id"];
const BIOTYPES: [&str; 6] = ["protein_coding", "lncRNA", "miRNA", "pseudogene", "snRNA", "retained_intron"];

fn token(rng: &mut ChaCha8Rng, len: usize) -> String {
    const ALPHABET: &[u8] = b"ABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789";
    (0..len).map(|_| ALPHABET[rng.random_range(0..ALPHABET.len())] as char).collect()
}

/// `rows` rows that contain every tuple of `pool` once and are topped up by
/// sampling the pool with replacement, in random order.
fn fill_from_pool(rng: &mut ChaCha8Rng, pool: Vec<Vec<String>>, rows: usize) -> Vec<Vec<String>> {
    let mut out: Vec<Vec<String>> = pool.iter().take(rows).cloned().collect();
    while out.len() < rows {
        let i = rng.random_range(0..pool.len());
        out.push(pool[i].clone());
    }
    out.shuffle(rng);
    out
}

fn pool_size(rows: usize, duplicate_fraction: f64) -> usize {
    (((1.0 - duplicate_fraction) * rows as f64).ceil() as usize).clamp(1, rows.max(1))
}

const PREFIXES: &str = "@prefix rr: <http://www.w3.org/ns/r2rml#> .
@prefix rml: <http://semweb.mmlab.be/ns/rml#> .
@prefix ql: <http://semweb.mmlab.be/ns/ql#> .
@prefix ex: <http://example.com/> .
";

/// Writes the sources and mapping for one cell into `dir`. Output depends
/// only on the spec and the cell.
pub fn generate_workload(spec: &WorkloadSpec, cell: &CellSpec, dir: &Path) -> Result<Workload, BenchError> {
    spec.validate()?;
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let mut rng = ChaCha8Rng::seed_from_u64(cell.seed(spec.seed));
    let dialect = CsvDialect::default();
    let mut files = Vec::new();
    let mut mapping = String::from(PREFIXES);
    match *cell {
        CellSpec::Merge { volume, duplicate_fraction } => {
            let rows = ((spec.base_rows as f64 * volume).round() as usize).max(1);
            let pool = if spec.fixed_pool {
                let min_volume = spec.volume_fractions.iter().copied().fold(1.0, f64::min);
                pool_size((spec.base_rows as f64 * min_volume).round() as usize, duplicate_fraction).min(rows)
            } else {
                pool_size(rows, duplicate_fraction)
            };
            for s in 0..spec.source_count {
                let concept = match s / CONCEPT_NAMES.len() {
                    0 => CONCEPT_NAMES[s].to_string(),
                    k => format!("{}_{k}", CONCEPT_NAMES[s % CONCEPT_NAMES.len()]),
                };
                let mut attrs = vec![concept.clone(), "biotype".to_string()];
                attrs.extend((2..spec.attributes_per_source).map(|j| format!("field{j}")));
                // Sources overlap by half their pools.
                let offset = s * pool / 2;
                let tuples: Vec<Vec<String>> = (0..pool)
                    .map(|k| {
                        let id = offset + k;
                        let mut t = vec![format!("ENST{id:011}"), BIOTYPES[id % BIOTYPES.len()].to_string()];
                        t.extend((2..spec.attributes_per_source).map(|_| token(&mut rng, 8)));
                        t
                    })
                    .collect();
                let name = format!("source{s}");
                let rel = SourceRelation::new(
                    SourceSignature::new(&name, attrs.iter().cloned())?,
                    fill_from_pool(&mut rng, tuples, rows),
                )?;
                let path = dir.join(format!("{name}.csv"));
                write_csv(&rel, &path, dialect)?;
                files.push(path);
                let _ = write!(
                    mapping,
                    "
ex:Source{s}Map a rr:TriplesMap ;
    rml:logicalSource [ rml:source \"{name}.csv\" ; rml:referenceFormulation ql:CSV ] ;
    rr:subjectMap [ rr:template \"http://example.com/transcript/{{{concept}}}\" ; rr:class ex:Transcript ] ;
    rr:predicateObjectMap [ rr:predicate ex:biotype ; rr:objectMap [ rml:reference \"biotype\" ] ] .
"
                );
            }
        }
        CellSpec::Join { scenario } => {
            const TRANSCRIPTS_PER_GENE: usize = 4;
            const BANDS_PER_GENE: usize = 3;
            let genes = (spec.join_rows() / TRANSCRIPTS_PER_GENE).max(1);
            let fillers = spec.attributes_per_source.saturating_sub(3);
            let mut child = Vec::new();
            let mut parent = Vec::new();
            for g in 0..genes {
                for t in 0..TRANSCRIPTS_PER_GENE {
                    let mut row = vec![format!("ENSG{g:011}"), format!("GENE{g}"), format!("ENST{g:09}{t:02}")];
                    row.extend((0..fillers).map(|_| token(&mut rng, 8)));
                    child.push(row);
                }
                for b in 0..BANDS_PER_GENE {
                    let mut row = vec![format!("chr{}", g % 23 + 1), format!("GENE{g}"), format!("p{}.{b}", g % 40)];
                    row.extend((0..fillers).map(|_| token(&mut rng, 8)));
                    parent.push(row);
                }
            }
            let (child_dirty, parent_dirty) = match scenario {
                JoinScenario::NoneClean => (true, true),
                JoinScenario::OneSideClean => (false, true),
                JoinScenario::BothClean => (false, false),
            };
            let grow = |rows: Vec<Vec<String>>, dirty: bool, rng: &mut ChaCha8Rng| {
                if !dirty {
                    return rows;
                }
                let target = (rows.len() as f64 / (1.0 - spec.join_duplicate_fraction)).round() as usize;
                fill_from_pool(rng, rows, target)
            };
            let child = grow(child, child_dirty, &mut rng);
            let parent = grow(parent, parent_dirty, &mut rng);
            for (name, head, rows) in
                [("genes", ["ENSG", "Genename", "Transcript"], child), ("chrom", ["CHROM", "Genename", "Band"], parent)]
            {
                let mut attrs: Vec<String> = head.iter().map(|s| s.to_string()).collect();
                attrs.extend((0..fillers).map(|j| format!("field{j}")));
                let rel = SourceRelation::new(SourceSignature::new(name, attrs)?, rows)?;
                let path = dir.join(format!("{name}.csv"));
                write_csv(&rel, &path, dialect)?;
                files.push(path);
            }
            mapping.push_str(
                "
ex:GeneMap a rr:TriplesMap ;
    rml:logicalSource [ rml:source \"genes.csv\" ; rml:referenceFormulation ql:CSV ] ;
    rr:subjectMap [ rr:template \"http://example.com/gene/{ENSG}\" ; rr:class ex:Gene ] ;
    rr:predicateObjectMap [
        rr:predicate ex:onChromosome ;
        rr:objectMap [
            rr:parentTriplesMap ex:ChromosomeMap ;
            rr:joinCondition [ rr:child \"Genename\" ; rr:parent \"Genename\" ]
        ]
    ] .

ex:ChromosomeMap a rr:TriplesMap ;
    rml:logicalSource [ rml:source \"chrom.csv\" ; rml:referenceFormulation ql:CSV ] ;
    rr:subjectMap [ rr:template \"http://example.com/chromosome/{CHROM}\" ; rr:class ex:Chromosome ] .
",
            );
        }
    }
    let mapping_path = dir.join("mapping.ttl");
    fs::write(&mapping_path, mapping).map_err(io_err(&mapping_path))?;
    Ok(Workload { dir: dir.to_path_buf(), mapping_path, files })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Framework {
    /// Raw sources, every emission kept, deduplicated at the end.
    Traditional,
    /// Sources projected, deduplicated and merged first; deduplicating
    /// emission.
    Preprocessed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct CellRecord {
    #[serde(flatten)]
    pub cell: CellSpec,
    pub framework: Framework,
    pub wall_time_millis: f64,
    pub generated_triples: u64,
    pub distinct_triples: u64,
    /// Rows handed to the RDF generator.
    pub processed_rows: u64,
    pub original_bytes: u64,
    /// Bytes of the sources the RDF generator read.
    pub preprocessed_bytes: u64,
    pub timed_out: bool,
    /// Whether this framework's graph equals the other framework's graph for
    /// the same cell; absent when either timed out.
    pub equivalent: Option<bool>,
}

/// Runs one framework on a workload. Returns the record and, unless the run
/// timed out, the graph.
pub fn run_cell(
    workload: &Workload,
    cell: &CellSpec,
    framework: Framework,
    spec: &WorkloadSpec,
) -> Result<(CellRecord, Option<KnowledgeGraph>), BenchError> {
    let dialect = CsvDialect::default();
    let original_bytes = workload.original_bytes();
    let mut best: Option<(CellRecord, Option<KnowledgeGraph>)> = None;
    for _ in 0..spec.repetitions {
        let start = Instant::now();
        let deadline = start + Duration::from_secs(spec.timeout_secs);
        let outcome = match framework {
            Framework::Traditional => run_traditional(workload, spec, dialect, deadline),
            Framework::Preprocessed => run_preprocessed(workload, dialect, deadline),
        };
        let elapsed = start.elapsed().as_secs_f64() * 1000.0;
        let mut record = CellRecord {
            cell: *cell,
            framework,
            wall_time_millis: elapsed,
            generated_triples: 0,
            distinct_triples: 0,
            processed_rows: 0,
            original_bytes,
            preprocessed_bytes: 0,
            timed_out: false,
            equivalent: None,
        };
        let graph = match outcome {
            Ok(run) => {
                record.generated_triples = run.generated;
                record.distinct_triples = run.graph.len() as u64;
                record.processed_rows = run.rows;
                record.preprocessed_bytes = run.bytes.unwrap_or(original_bytes);
                Some(run.graph)
            }
            Err(RunError::Timeout) => {
                record.timed_out = true;
                None
            }
            Err(RunError::Bench(e)) => return Err(e),
        };
        let faster = best.as_ref().is_none_or(|(b, _)| record.wall_time_millis < b.wall_time_millis);
        if record.timed_out || faster {
            let stop = record.timed_out;
            best = Some((record, graph));
            if stop {
                break;
            }
        }
    }
    Ok(best.expect("at least one repetition"))
}

struct Run {
    graph: KnowledgeGraph,
    generated: u64,
    rows: u64,
    bytes: Option<u64>,
}

enum RunError {
    Timeout,
    Bench(BenchError),
}

impl From<PipelineError> for RunError {
    fn from(e: PipelineError) -> Self {
        match e {
            PipelineError::DeadlineExceeded => RunError::Timeout,
            e => RunError::Bench(e.into()),
        }
    }
}

impl From<RdfizeError> for RunError {
    fn from(e: RdfizeError) -> Self {
        match e {
            RdfizeError::DeadlineExceeded => RunError::Timeout,
            e => RunError::Bench(BenchError::Rdfize(e)),
        }
    }
}

fn run_traditional(w: &Workload, spec: &WorkloadSpec, dialect: CsvDialect, deadline: Instant) -> Result<Run, RunError> {
    let input = load_mapping(&w.mapping_path, &w.dir, dialect)?;
    let dis = load_raw(&input, dialect)?;
    if Instant::now() >= deadline {
        return Err(RunError::Timeout);
    }
    let opts = RdfizeOptions {
        mode: EmissionMode::GenerateAll,
        spill_threshold: spec.spill_threshold,
        deadline: Some(deadline),
        ..Default::default()
    };
    let (graph, stats) = rdfize(&dis, &opts)?;
    let rows = dis.sources.values().map(|s| s.len() as u64).sum();
    Ok(Run { graph, generated: stats.generated_count, rows, bytes: None })
}

fn run_preprocessed(w: &Workload, dialect: CsvDialect, deadline: Instant) -> Result<Run, RunError> {
    let input = load_mapping(&w.mapping_path, &w.dir, dialect)?;
    let result = preprocess(&input, dialect, Some(deadline))?;
    let bytes = write_preprocessed(&result, &w.dir.join("preprocessed"), dialect)?;
    let opts = RdfizeOptions { mode: EmissionMode::Distinct, deadline: Some(deadline), ..Default::default() };
    let (graph, stats) = rdfize(&result.dis, &opts)?;
    let rows = result.dis.sources.values().map(|s| s.len() as u64).sum();
    Ok(Run { graph, generated: stats.generated_count, rows, bytes: Some(bytes) })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Environment {
    pub os: String,
    pub arch: String,
    pub cpus: usize,
    pub optimized_build: bool,
    pub version: String,
}

impl Environment {
    pub fn current() -> Self {
        Environment {
            os: std::env::consts::OS.into(),
            arch: std::env::consts::ARCH.into(),
            cpus: std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1),
            optimized_build: !cfg!(debug_assertions),
            version: env!("CARGO_PKG_VERSION").into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct BenchReport {
    pub seed: u64,
    pub spec: WorkloadSpec,
    pub environment: Environment,
    pub cells: Vec<CellRecord>,
}

impl BenchReport {
    pub fn equivalence_failures(&self) -> usize {
        self.cells.iter().filter(|c| c.equivalent == Some(false)).count()
    }

    pub fn timeouts(&self) -> usize {
        self.cells.iter().filter(|c| c.timed_out).count()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// The record for `framework` in `cell`.
    pub fn find(&self, cell: &CellSpec, framework: Framework) -> Option<&CellRecord> {
        self.cells.iter().find(|c| c.cell == *cell && c.framework == framework)
    }

    pub fn table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<26} {:<13} {:>11} {:>12} {:>10} {:>10} {:>12} {:>12} {:<8}",
            "cell", "framework", "wall ms", "generated", "distinct", "rows", "orig bytes", "prep bytes", "status"
        );
        for c in &self.cells {
            let framework = match c.framework {
                Framework::Traditional => "traditional",
                Framework::Preprocessed => "preprocessed",
            };
            let status = match (c.timed_out, c.equivalent) {
                (true, _) => "timeout",
                (false, Some(false)) => "MISMATCH",
                (false, Some(true)) => "ok",
                (false, None) => "-",
            };
            let _ = writeln!(
                out,
                "{:<26} {:<13} {:>11.1} {:>12} {:>10} {:>10} {:>12} {:>12} {:<8}",
                c.cell.label(),
                framework,
                c.wall_time_millis,
                c.generated_triples,
                c.distinct_triples,
                c.processed_rows,
                c.original_bytes,
                c.preprocessed_bytes,
                status
            );
        }
        out
    }
}

/// Every cell of the spec: volumes × duplicate fractions, then the join
/// scenarios.
pub fn cells(spec: &WorkloadSpec) -> Vec<CellSpec> {
    let mut out = Vec::new();
    for &volume in &spec.volume_fractions {
        for &duplicate_fraction in &spec.duplicate_fractions {
            out.push(CellSpec::Merge { volume, duplicate_fraction });
        }
    }
    out.extend(spec.join_scenarios.iter().map(|&scenario| CellSpec::Join { scenario }));
    out
}

/// Runs both frameworks on every cell, serially, comparing their graphs.
/// Workloads are generated under `work_dir`.
pub fn run_matrix(spec: &WorkloadSpec, work_dir: &Path) -> Result<BenchReport, BenchError> {
    spec.validate()?;
    let mut report =
        BenchReport { seed: spec.seed, spec: spec.clone(), environment: Environment::current(), cells: Vec::new() };
    for cell in cells(spec) {
        let dir = work_dir.join(cell.label());
        let workload = generate_workload(spec, &cell, &dir)?;
        let (mut t, tg) = run_cell(&workload, &cell, Framework::Traditional, spec)?;
        let (mut p, pg) = run_cell(&workload, &cell, Framework::Preprocessed, spec)?;
        if let (Some(a), Some(b)) = (&tg, &pg) {
            let same = a == b;
            t.equivalent = Some(same);
            p.equivalent = Some(same);
        }
        report.cells.push(t);
        report.cells.push(p);
        if !spec.keep_files {
            fs::remove_dir_all(&dir).map_err(io_err(&dir))?;
        }
    }
    Ok(report)
}

/// Per-source distinct row counts of a generated workload, for checks.
pub fn distinct_rows(workload: &Workload) -> Result<BTreeMap<String, usize>, BenchError> {
    let mut out = BTreeMap::new();
    for f in &workload.files {
        let rel = crate::store::load_csv(f, CsvDialect::default())?;
        out.insert(rel.name().to_string(), rel.row_set().len());
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> WorkloadSpec {
        WorkloadSpec {
            base_rows: 40,
            volume_fractions: vec![1.0],
            duplicate_fractions: vec![0.5],
            join_scenarios: vec![JoinScenario::NoneClean],
            ..Default::default()
        }
    }

    #[test]
    fn spec_validation() {
        assert!(WorkloadSpec::default().validate().is_ok());
        let bad = WorkloadSpec { volume_fractions: vec![1.5], ..Default::default() };
        assert!(matches!(bad.validate(), Err(BenchError::Spec(_))));
        let bad = WorkloadSpec { duplicate_fractions: vec![1.0], ..Default::default() };
        assert!(bad.validate().is_err());
        assert!(WorkloadSpec::from_json(r#"{"baseRows": 10, "bogus": 1}"#).is_err());
        let s = WorkloadSpec::from_json(r#"{"baseRows": 10, "joinScenarios": []}"#).unwrap();
        assert_eq!(s.base_rows, 10);
        assert!(s.join_scenarios.is_empty());
    }

    #[test]
    fn cell_grid_shape() {
        assert_eq!(cells(&WorkloadSpec::default()).len(), 12 + 3);
        let one = WorkloadSpec {
            volume_fractions: vec![1.0],
            duplicate_fractions: vec![0.5],
            join_scenarios: vec![],
            ..Default::default()
        };
        assert_eq!(cells(&one).len(), 1);
    }

    #[test]
    fn zero_duplicates_means_all_distinct() {
        let dir = tempfile::tempdir().unwrap();
        let spec = WorkloadSpec { base_rows: 300, ..tiny() };
        let w =
            generate_workload(&spec, &CellSpec::Merge { volume: 1.0, duplicate_fraction: 0.0 }, dir.path()).unwrap();
        assert!(distinct_rows(&w).unwrap().values().all(|n| *n == 300));
        let w =
            generate_workload(&spec, &CellSpec::Merge { volume: 1.0, duplicate_fraction: 0.75 }, dir.path()).unwrap();
        assert!(distinct_rows(&w).unwrap().values().all(|n| *n <= 75));
    }

    #[test]
    fn tiny_matrix_agrees() {
        let dir = tempfile::tempdir().unwrap();
        let report = run_matrix(&tiny(), dir.path()).unwrap();
        assert_eq!(report.cells.len(), 4);
        assert_eq!(report.equivalence_failures(), 0);
        assert!(report.cells.iter().all(|c| c.equivalent == Some(true)));
        assert!(report.table().lines().count() == 5);
    }
}
