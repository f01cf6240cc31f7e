//! Command implementations behind the `kgprep` binary. Each command returns
//! a serializable report; the binary decides how to print it.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use anyhow::{anyhow, Context};
use serde::Serialize;

use kgprep::bench::{run_matrix, BenchError, BenchReport, WorkloadSpec};
use kgprep::pipeline::{load_mapping, load_raw, preprocess, write_preprocessed, MappingInput, PipelineError};
use kgprep::rdfize::{rdfize, write_ntriples, EmissionMode, EmissionStats, RdfizeError, RdfizeOptions};
use kgprep::rml::RmlError;
use kgprep::store::CsvDialect;
use kgprep::transform::{merge_candidates, TransformPlan, TransformStats};

/// A failed command, classified by exit code.
#[derive(Debug)]
pub enum CliError {
    /// Unreadable, unparsable or missing input. Exit code 1.
    Input(anyhow::Error),
    /// Mappings that parse but do not fit their sources, or outputs that
    /// disagree. Exit code 2.
    Failed(anyhow::Error),
    /// Exit code 3.
    Timeout,
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Input(_) => 1,
            CliError::Failed(_) => 2,
            CliError::Timeout => 3,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Input(e) | CliError::Failed(e) => write!(f, "{e:#}"),
            CliError::Timeout => f.write_str("timed out"),
        }
    }
}

impl From<PipelineError> for CliError {
    fn from(e: PipelineError) -> Self {
        match e {
            PipelineError::DeadlineExceeded => CliError::Timeout,
            e @ (PipelineError::Invalid(_) | PipelineError::Rml { source: RmlError::UnknownAttribute { .. }, .. }) => {
                CliError::Failed(e.into())
            }
            e => CliError::Input(e.into()),
        }
    }
}

impl From<RdfizeError> for CliError {
    fn from(e: RdfizeError) -> Self {
        match e {
            RdfizeError::DeadlineExceeded => CliError::Timeout,
            e => CliError::Input(e.into()),
        }
    }
}

impl From<BenchError> for CliError {
    fn from(e: BenchError) -> Self {
        match e {
            BenchError::Pipeline(p) => p.into(),
            BenchError::Rdfize(r) => r.into(),
            e => CliError::Input(e.into()),
        }
    }
}

fn input_err(e: impl Into<anyhow::Error>) -> CliError {
    CliError::Input(e.into())
}

/// Mapping and source locations shared by the data commands.
#[derive(Debug, Clone)]
pub struct InputArgs {
    pub mapping: PathBuf,
    pub sources: PathBuf,
    pub dialect: CsvDialect,
    pub timeout: Option<Duration>,
}

impl InputArgs {
    pub fn new(mapping: impl Into<PathBuf>, sources: impl Into<PathBuf>) -> Self {
        InputArgs { mapping: mapping.into(), sources: sources.into(), dialect: CsvDialect::default(), timeout: None }
    }

    fn load(&self) -> Result<MappingInput, CliError> {
        if !self.mapping.is_file() {
            return Err(input_err(anyhow!("mapping file {} does not exist", self.mapping.display())));
        }
        if !self.sources.is_dir() {
            return Err(input_err(anyhow!("source directory {} does not exist", self.sources.display())));
        }
        Ok(load_mapping(&self.mapping, &self.sources, self.dialect)?)
    }

    fn deadline(&self) -> Option<Instant> {
        self.timeout.map(|t| Instant::now() + t)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct SourceUsage {
    pub file: PathBuf,
    pub attribute_count: usize,
    /// Attributes some rule binds, in header order.
    pub used_attributes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct RuleSummary {
    pub id: String,
    pub sources: Vec<String>,
    pub head_variables: BTreeSet<String>,
    pub join_variables: BTreeSet<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct Analysis {
    pub sources: BTreeMap<String, SourceUsage>,
    pub rules: Vec<RuleSummary>,
    /// Rule ids that share a class, subject shape and property set.
    pub merge_groups: Vec<Vec<String>>,
}

impl Analysis {
    pub fn render(&self) -> String {
        let mut out = String::new();
        for (name, s) in &self.sources {
            let _ = writeln!(
                out,
                "source {name} ({}): {} of {} attributes used: {}",
                s.file.display(),
                s.used_attributes.len(),
                s.attribute_count,
                s.used_attributes.join(", ")
            );
        }
        for r in &self.rules {
            let join = if r.join_variables.is_empty() {
                String::new()
            } else {
                format!("; joins on {}", r.join_variables.iter().cloned().collect::<Vec<_>>().join(", "))
            };
            let head = r.head_variables.iter().cloned().collect::<Vec<_>>().join(", ");
            let _ = writeln!(out, "rule {} over {}: head {head}{join}", r.id, r.sources.join(" x "));
        }
        for g in &self.merge_groups {
            let _ = writeln!(out, "merge group ({}): {}", g.len(), g.join(", "));
        }
        out
    }
}

pub fn cmd_analyze(args: &InputArgs) -> Result<Analysis, CliError> {
    let input = args.load()?;
    let mut used: BTreeMap<&str, BTreeSet<&str>> = BTreeMap::new();
    for r in &input.lowered.rules {
        for p in &r.body {
            used.entry(&p.source).or_default().extend(p.attributes());
        }
    }
    let sources = input
        .headers
        .iter()
        .map(|(name, header)| {
            let attrs = used.get(name.as_str());
            let used_attributes =
                header.iter().filter(|h| attrs.is_some_and(|a| a.contains(h.as_str()))).cloned().collect();
            let usage = SourceUsage { file: input.files[name].clone(), attribute_count: header.len(), used_attributes };
            (name.clone(), usage)
        })
        .collect();
    let rules = input
        .lowered
        .rules
        .iter()
        .map(|r| RuleSummary {
            id: r.id.clone(),
            sources: r.body.iter().map(|p| p.source.clone()).collect(),
            head_variables: r.head_variables(),
            join_variables: r.join_variables(),
        })
        .collect();
    Ok(Analysis { sources, rules, merge_groups: merge_candidates(&input.lowered.rules) })
}

#[derive(Debug, Clone, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct OptimizeSummary {
    pub out_dir: PathBuf,
    pub files: Vec<String>,
    pub bytes_written: u64,
    pub plan: TransformPlan,
    pub stats: TransformStats,
}

impl OptimizeSummary {
    pub fn render(&self) -> String {
        let mut out = String::new();
        let s = &self.stats;
        let _ = writeln!(
            out,
            "{} step(s) over {} pass(es); rows {} -> {}; bytes {} -> {}",
            self.plan.effective_steps(),
            self.plan.passes,
            s.total_rows_before,
            s.total_rows_after,
            s.total_bytes_before,
            self.bytes_written
        );
        for w in &self.plan.warnings {
            let _ = writeln!(out, "warning: {w}");
        }
        let _ = writeln!(out, "wrote {} to {}", self.files.join(", "), self.out_dir.display());
        out
    }
}

/// Writes the transformed sources, the rewritten mapping and `plan.json`
/// into `out_dir`.
pub fn cmd_optimize(args: &InputArgs, out_dir: &Path) -> Result<OptimizeSummary, CliError> {
    let input = args.load()?;
    let result = preprocess(&input, args.dialect, args.deadline())?;
    let bytes_written = write_preprocessed(&result, out_dir, args.dialect)?;
    let mut files: Vec<String> = result.dis.sources.keys().map(|n| format!("{n}.csv")).collect();
    files.extend(["mapping.ttl".to_string(), "plan.json".to_string()]);
    Ok(OptimizeSummary { out_dir: out_dir.to_path_buf(), files, bytes_written, plan: result.plan, stats: result.stats })
}

#[derive(Debug, Clone, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct RdfizeSummary {
    pub output: PathBuf,
    pub stats_file: PathBuf,
    pub optimized: bool,
    pub mode: EmissionMode,
    pub triples: u64,
    pub duplicates: u64,
    pub stats: EmissionStats,
}

impl RdfizeSummary {
    pub fn render(&self) -> String {
        format!(
            "wrote {} triple(s) to {} ({} generated, {} duplicate(s) removed)\n",
            self.triples,
            self.output.display(),
            self.stats.generated_count,
            self.duplicates
        )
    }
}

#[derive(Debug, Clone)]
pub struct RdfizeArgs {
    pub input: InputArgs,
    pub out: PathBuf,
    pub mode: EmissionMode,
    pub optimize: bool,
    pub type_triples: bool,
}

/// The statistics file that accompanies an N-Triples output.
pub fn stats_path(out: &Path) -> PathBuf {
    out.with_extension("stats.json")
}

/// Writes the graph as sorted N-Triples to `out` and the emission
/// statistics next to it.
pub fn cmd_rdfize(args: &RdfizeArgs) -> Result<RdfizeSummary, CliError> {
    let input = args.input.load()?;
    let deadline = args.input.deadline();
    let dis = if args.optimize {
        preprocess(&input, args.input.dialect, deadline)?.dis
    } else {
        load_raw(&input, args.input.dialect)?
    };
    let opts = RdfizeOptions { mode: args.mode, type_triples: args.type_triples, deadline, ..Default::default() };
    let (graph, stats) = rdfize(&dis, &opts)?;
    if let Some(parent) = args.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).with_context(|| parent.display().to_string()).map_err(input_err)?;
    }
    write_ntriples(&graph, &args.out).with_context(|| args.out.display().to_string()).map_err(input_err)?;
    let stats_file = stats_path(&args.out);
    let json = serde_json::to_string_pretty(&stats).expect("stats serialize");
    fs::write(&stats_file, json).with_context(|| stats_file.display().to_string()).map_err(input_err)?;
    Ok(RdfizeSummary {
        output: args.out.clone(),
        stats_file,
        optimized: args.optimize,
        mode: args.mode,
        triples: graph.len() as u64,
        duplicates: stats.duplicates(),
        stats,
    })
}

#[derive(Debug, Clone, Default)]
pub struct BenchArgs {
    pub spec: Option<PathBuf>,
    pub seed: Option<u64>,
    pub timeout_secs: Option<u64>,
    /// Where the report JSON goes.
    pub out: Option<PathBuf>,
    /// Where workloads are generated; a temporary directory when absent.
    pub work_dir: Option<PathBuf>,
}

pub fn load_spec(args: &BenchArgs) -> Result<WorkloadSpec, CliError> {
    let mut spec = match &args.spec {
        Some(path) => {
            let text = fs::read_to_string(path).with_context(|| path.display().to_string()).map_err(input_err)?;
            WorkloadSpec::from_json(&text).with_context(|| path.display().to_string()).map_err(input_err)?
        }
        None => WorkloadSpec::default(),
    };
    if let Some(seed) = args.seed {
        spec.seed = seed;
    }
    if let Some(t) = args.timeout_secs {
        spec.timeout_secs = t;
    }
    Ok(spec)
}

/// Runs the matrix and writes the report. An equivalence failure is an
/// error once the report is written.
pub fn cmd_bench(args: &BenchArgs) -> Result<BenchReport, CliError> {
    let spec = load_spec(args)?;
    let scratch;
    let work_dir = match &args.work_dir {
        Some(d) => d.clone(),
        None => {
            scratch = tempfile::tempdir().context("creating a work directory").map_err(input_err)?;
            scratch.path().to_path_buf()
        }
    };
    let report = run_matrix(&spec, &work_dir)?;
    if let Some(out) = &args.out {
        fs::write(out, report.to_json()).with_context(|| out.display().to_string()).map_err(input_err)?;
    }
    Ok(report)
}
