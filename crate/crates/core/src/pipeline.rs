//! End-to-end plumbing: mapping file plus CSV directory to a loaded DIS,
//! either verbatim or preprocessed.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use thiserror::Error;

use crate::model::{Dis, SourceRelation, SourceSignature, ValidationReport};
use crate::rml::{lower_to_rules, parse_rml, raise_to_rml, serialize_turtle, LoweredMappings, RmlError, TriplesMapDoc};
use crate::store::{load_csv_named, project_distinct_csv, read_header, write_csv, CsvDialect, StoreError};
use crate::transform::{
    optimize_distinct, pushdown_with_report, DerivedProjection, PlanStep, StepAction, TransformResult,
};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Rml { path: PathBuf, source: RmlError },
    #[error("logical source {rml_path:?} not found under {dir}")]
    MissingSourceFile { rml_path: String, dir: PathBuf },
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error("invalid mapping: {}", .0.violations.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; "))]
    Invalid(ValidationReport),
    #[error("deadline exceeded")]
    DeadlineExceeded,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> PipelineError + '_ {
    move |source| PipelineError::Io { path: path.to_path_buf(), source }
}

/// A parsed mapping document with its sources located on disk.
#[derive(Debug, Clone)]
pub struct MappingInput {
    pub mapping_path: PathBuf,
    pub doc: TriplesMapDoc,
    pub lowered: LoweredMappings,
    /// Source name → file.
    pub files: BTreeMap<String, PathBuf>,
    /// Source name → header.
    pub headers: BTreeMap<String, Vec<String>>,
}

impl MappingInput {
    /// An extension-free DIS, enough to validate the rules against headers.
    pub fn schema_dis(&self) -> Dis {
        let mut dis = Dis { ontology: None, sources: BTreeMap::new(), mappings: self.lowered.rules.clone() };
        for (name, header) in &self.headers {
            if let Ok(sig) = SourceSignature::new(name, header.iter().cloned()) {
                dis.sources.insert(name.clone(), Arc::new(SourceRelation::empty(sig)));
            }
        }
        dis
    }

    /// Source names in the order the rules first read them.
    pub fn used_sources(&self) -> Vec<&str> {
        let mut seen = BTreeSet::new();
        let mut out = Vec::new();
        for r in &self.lowered.rules {
            for p in &r.body {
                if seen.insert(p.source.as_str()) {
                    out.push(p.source.as_str());
                }
            }
        }
        out
    }
}

/// Resolves a logical-source path: absolute paths as given, otherwise under
/// `dir`, falling back to the bare file name under `dir`.
pub fn resolve_source(dir: &Path, rml_path: &str) -> Option<PathBuf> {
    let p = Path::new(rml_path);
    if p.is_absolute() {
        return p.is_file().then(|| p.to_path_buf());
    }
    let joined = dir.join(p);
    if joined.is_file() {
        return Some(joined);
    }
    let bare = dir.join(p.file_name()?);
    bare.is_file().then_some(bare)
}

pub fn load_mapping(mapping: &Path, sources_dir: &Path, dialect: CsvDialect) -> Result<MappingInput, PipelineError> {
    let text = fs::read_to_string(mapping).map_err(io_err(mapping))?;
    let doc = parse_rml(&text).map_err(|source| PipelineError::Rml { path: mapping.to_path_buf(), source })?;
    let mut by_path: BTreeMap<String, Vec<String>> = BTreeMap::new();
    let mut resolved: BTreeMap<String, PathBuf> = BTreeMap::new();
    for m in &doc.maps {
        if by_path.contains_key(&m.source_path) {
            continue;
        }
        let file = resolve_source(sources_dir, &m.source_path).ok_or_else(|| PipelineError::MissingSourceFile {
            rml_path: m.source_path.clone(),
            dir: sources_dir.to_path_buf(),
        })?;
        by_path.insert(m.source_path.clone(), read_header(&file, dialect)?);
        resolved.insert(m.source_path.clone(), file);
    }
    let lowered =
        lower_to_rules(&doc, &by_path).map_err(|source| PipelineError::Rml { path: mapping.to_path_buf(), source })?;
    let files = lowered.source_paths.iter().map(|(n, p)| (n.clone(), resolved[p].clone())).collect();
    let headers = lowered.source_paths.iter().map(|(n, p)| (n.clone(), by_path[p].clone())).collect();
    let input = MappingInput { mapping_path: mapping.to_path_buf(), doc, lowered, files, headers };
    let report = input.schema_dis().validate();
    if !report.is_valid() {
        return Err(PipelineError::Invalid(report));
    }
    Ok(input)
}

/// Every source read by the rules, loaded in full.
pub fn load_raw(input: &MappingInput, dialect: CsvDialect) -> Result<Dis, PipelineError> {
    let mut dis = Dis { ontology: None, sources: BTreeMap::new(), mappings: input.lowered.rules.clone() };
    for name in input.used_sources() {
        let rel = load_csv_named(&input.files[name], name, dialect)?;
        dis.sources.insert(name.to_string(), Arc::new(rel));
    }
    Ok(dis)
}

/// Join pushdown, then a single streaming scan per source that keeps only
/// the distinct tuples of the attributes some rule binds, then the full
/// fixed-point rewrite. Statistics are relative to the files on disk.
pub fn preprocess(
    input: &MappingInput,
    dialect: CsvDialect,
    deadline: Option<Instant>,
) -> Result<TransformResult, PipelineError> {
    let mut pre_steps = Vec::new();
    let mut rules = Vec::with_capacity(input.lowered.rules.len());
    for rule in &input.lowered.rules {
        let (r, dropped) = pushdown_with_report(rule);
        if !dropped.is_empty() {
            let n: usize = dropped.iter().map(|d| d.bindings.len()).sum();
            pre_steps.push(PlanStep {
                pass: 0,
                action: StepAction::PushdownJoin { rule: r.id.clone(), dropped },
                note: format!("{n} binding(s) neither in the head nor joined"),
            });
        }
        rules.push(r);
    }
    let mut needed: BTreeMap<&str, BTreeSet<&str>> = BTreeMap::new();
    for r in &rules {
        for p in &r.body {
            needed.entry(&p.source).or_default().extend(p.attributes());
        }
    }
    let mut dis = Dis { ontology: None, sources: BTreeMap::new(), mappings: Vec::new() };
    let mut raw: BTreeMap<String, (u64, u64)> = BTreeMap::new();
    for (name, attrs) in &needed {
        if deadline.is_some_and(|d| Instant::now() >= d) {
            return Err(PipelineError::DeadlineExceeded);
        }
        let file = &input.files[*name];
        let keep: Vec<String> = input.headers[*name].iter().filter(|h| attrs.contains(h.as_str())).cloned().collect();
        let (rel, total) = project_distinct_csv(file, name, dialect, &keep)?;
        let bytes = fs::metadata(file).map_err(io_err(file))?.len();
        raw.insert(name.to_string(), (total as u64, bytes));
        if keep.len() < input.headers[*name].len() || rel.len() < total {
            for r in rules.iter().filter(|r| r.body.iter().any(|p| p.source == *name)) {
                pre_steps.push(PlanStep {
                    pass: 0,
                    action: StepAction::Project {
                        rule: r.id.clone(),
                        projections: vec![DerivedProjection {
                            from: name.to_string(),
                            to: name.to_string(),
                            keep_attributes: keep.clone(),
                        }],
                    },
                    note: format!("projected while scanning {} ({total} -> {} row(s))", file.display(), rel.len()),
                });
            }
        }
        dis.sources.insert(name.to_string(), Arc::new(rel));
    }
    dis.mappings = rules;
    let mut result = optimize_distinct(&dis);
    pre_steps.append(&mut result.plan.steps);
    result.plan.steps = pre_steps;
    let stats = &mut result.stats;
    stats.total_rows_before = raw.values().map(|r| r.0).sum();
    stats.total_bytes_before = raw.values().map(|r| r.1).sum();
    for s in stats.sources.values_mut() {
        s.rows_before = s.origins.iter().filter_map(|o| raw.get(o)).map(|r| r.0).sum();
        s.bytes_before = s.origins.iter().filter_map(|o| raw.get(o)).map(|r| r.1).sum();
    }
    Ok(result)
}

/// Writes `<source>.csv` for every source, the rewritten mapping as
/// `mapping.ttl` and the plan and statistics as `plan.json`. Returns the
/// bytes written for the CSV files.
pub fn write_preprocessed(result: &TransformResult, out_dir: &Path, dialect: CsvDialect) -> Result<u64, PipelineError> {
    fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;
    let mut paths = BTreeMap::new();
    let mut bytes = 0;
    for (name, rel) in &result.dis.sources {
        let file_name = format!("{name}.csv");
        let path = out_dir.join(&file_name);
        write_csv(rel, &path, dialect)?;
        bytes += fs::metadata(&path).map_err(io_err(&path))?.len();
        paths.insert(name.clone(), file_name);
    }
    let mapping_path = out_dir.join("mapping.ttl");
    let doc = raise_to_rml(&result.dis.mappings, &paths)
        .map_err(|source| PipelineError::Rml { path: mapping_path.clone(), source })?;
    fs::write(&mapping_path, serialize_turtle(&doc)).map_err(io_err(&mapping_path))?;
    let plan_path = out_dir.join("plan.json");
    fs::write(&plan_path, result.report_json()).map_err(io_err(&plan_path))?;
    Ok(bytes)
}
