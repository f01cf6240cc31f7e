//! Reference evaluation of mapping rules into RDF.
//!
//! A rule is evaluated over every variable map μ its body admits: one per row
//! for single-source bodies, one per natural-join tuple (hash join on shared
//! variables) otherwise. Each μ yields the subject's `rdf:type` triple when
//! the head has a class, plus one triple per property. A null subject or
//! subject slot suppresses everything for that μ; a null object suppresses
//! only its own triple. Nulls never satisfy a join.
//!
//! Two output modes produce the same graph. `GenerateAll` keeps every emission
//! (spilling to disk past a threshold) and deduplicates at the end, the way a
//! traditional engine does. `Distinct` deduplicates as it emits.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::fs::File;
use std::io::{self, BufRead, BufWriter, Write};
use std::path::Path;
use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{is_null, Dis, MappingRule, ObjectTerm, SourceRelation, VarMap};
use crate::template::{push_iri_encoded, IriTemplate, Segment};

pub const RDF_TYPE: &str = "http://www.w3.org/1999/02/22-rdf-syntax-ns#type";

#[derive(Debug, Error)]
pub enum RdfizeError {
    #[error("rule {rule}: source {source_name:?} is not defined")]
    MissingSource { rule: String, source_name: String },
    #[error("rule {rule}: source {source_name:?} has no attribute {attribute:?}")]
    UnknownAttribute { rule: String, source_name: String, attribute: String },
    #[error("rule {rule}: variable {variable:?} is not bound in the body")]
    UnboundVariable { rule: String, variable: String },
    #[error("template slot {0:?} is unbound")]
    UnboundSlot(String),
    #[error("template slot {0:?} is null")]
    NullSlot(String),
    #[error("deadline exceeded")]
    DeadlineExceeded,
    #[error("spill file: {0}")]
    Spill(#[from] io::Error),
    #[error("malformed N-Triples line {line}: {message}")]
    Syntax { line: usize, message: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Term {
    Iri(String),
    Literal(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct RdfTriple {
    pub subject: String,
    pub predicate: Arc<str>,
    pub object: Term,
}

impl RdfTriple {
    pub fn new(subject: impl Into<String>, predicate: &str, object: Term) -> Self {
        RdfTriple { subject: subject.into(), predicate: Arc::from(predicate), object }
    }
}

impl fmt::Display for RdfTriple {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "<{}> <{}> ", self.subject, self.predicate)?;
        match &self.object {
            Term::Iri(i) => write!(f, "<{i}>")?,
            Term::Literal(l) => {
                f.write_str("\"")?;
                write_escaped_literal(f, l)?;
                f.write_str("\"")?;
            }
        }
        f.write_str(" .")
    }
}

fn write_escaped_literal(f: &mut impl fmt::Write, value: &str) -> fmt::Result {
    for c in value.chars() {
        match c {
            '"' => f.write_str("\\\"")?,
            '\\' => f.write_str("\\\\")?,
            '\n' => f.write_str("\\n")?,
            '\r' => f.write_str("\\r")?,
            '\t' => f.write_str("\\t")?,
            c if c.is_control() => write!(f, "\\u{:04X}", c as u32)?,
            c => f.write_char(c)?,
        }
    }
    Ok(())
}

/// Parses one line written by [`RdfTriple`]'s `Display` (IRIs and plain
/// literals only).
pub fn parse_ntriples_line(line: &str) -> Result<RdfTriple, String> {
    fn iri(s: &str) -> Result<(&str, &str), String> {
        let s = s.trim_start();
        let rest = s.strip_prefix('<').ok_or("expected '<'")?;
        let end = rest.find('>').ok_or("unterminated IRI")?;
        Ok((&rest[..end], &rest[end + 1..]))
    }
    let (subject, rest) = iri(line)?;
    let (predicate, rest) = iri(rest)?;
    let rest = rest.trim_start();
    let (object, rest) = if rest.starts_with('<') {
        let (o, r) = iri(rest)?;
        (Term::Iri(o.to_string()), r)
    } else if let Some(body) = rest.strip_prefix('"') {
        let mut value = String::new();
        let mut chars = body.char_indices();
        let mut end = None;
        while let Some((i, c)) = chars.next() {
            match c {
                '"' => {
                    end = Some(i + 1);
                    break;
                }
                '\\' => match chars.next().map(|(_, e)| e) {
                    Some('"') => value.push('"'),
                    Some('\\') => value.push('\\'),
                    Some('n') => value.push('\n'),
                    Some('r') => value.push('\r'),
                    Some('t') => value.push('\t'),
                    Some('u') => {
                        let hex: String = (0..4).filter_map(|_| chars.next().map(|(_, h)| h)).collect();
                        let code = u32::from_str_radix(&hex, 16).map_err(|_| "bad \\u escape")?;
                        value.push(char::from_u32(code).ok_or("bad code point")?);
                    }
                    other => return Err(format!("unknown escape {other:?}")),
                },
                c => value.push(c),
            }
        }
        let end = end.ok_or("unterminated literal")?;
        (Term::Literal(value), &body[end..])
    } else {
        return Err("expected object".into());
    };
    if rest.trim() != "." {
        return Err("expected terminating '.'".into());
    }
    Ok(RdfTriple::new(subject, predicate, object))
}

/// A set of triples.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct KnowledgeGraph {
    triples: HashSet<RdfTriple>,
}

impl KnowledgeGraph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, t: RdfTriple) -> bool {
        self.triples.insert(t)
    }

    pub fn contains(&self, t: &RdfTriple) -> bool {
        self.triples.contains(t)
    }

    pub fn len(&self) -> usize {
        self.triples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triples.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &RdfTriple> {
        self.triples.iter()
    }

    /// N-Triples lines in lexicographic order.
    pub fn sorted_lines(&self) -> Vec<String> {
        let mut lines: Vec<String> = self.triples.iter().map(|t| t.to_string()).collect();
        lines.sort_unstable();
        lines
    }

    pub fn to_ntriples(&self) -> String {
        let mut out = String::new();
        for line in self.sorted_lines() {
            out.push_str(&line);
            out.push('\n');
        }
        out
    }

    pub fn parse_ntriples(text: &str) -> Result<Self, RdfizeError> {
        let mut g = KnowledgeGraph::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let t = parse_ntriples_line(line).map_err(|message| RdfizeError::Syntax { line: i + 1, message })?;
            g.insert(t);
        }
        Ok(g)
    }
}

impl FromIterator<RdfTriple> for KnowledgeGraph {
    fn from_iter<I: IntoIterator<Item = RdfTriple>>(iter: I) -> Self {
        KnowledgeGraph { triples: iter.into_iter().collect() }
    }
}

impl Extend<RdfTriple> for KnowledgeGraph {
    fn extend<I: IntoIterator<Item = RdfTriple>>(&mut self, iter: I) {
        self.triples.extend(iter)
    }
}

/// One line per triple, sorted, so equal graphs give identical files.
pub fn write_ntriples(graph: &KnowledgeGraph, path: impl AsRef<Path>) -> io::Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    for line in graph.sorted_lines() {
        out.write_all(line.as_bytes())?;
        out.write_all(b"\n")?;
    }
    out.flush()
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RuleEmission {
    pub generated: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EmissionStats {
    /// Triples produced before duplicate elimination.
    pub generated_count: u64,
    /// Size of the resulting graph.
    pub distinct_count: u64,
    pub per_rule: BTreeMap<String, RuleEmission>,
}

impl EmissionStats {
    pub fn duplicates(&self) -> u64 {
        self.generated_count - self.distinct_count
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EmissionMode {
    GenerateAll,
    #[default]
    Distinct,
}

#[derive(Debug, Clone)]
pub struct RdfizeOptions {
    pub mode: EmissionMode,
    pub type_triples: bool,
    /// In `GenerateAll` mode, buffered emissions beyond this count go to a
    /// temporary file before deduplication.
    pub spill_threshold: Option<usize>,
    pub deadline: Option<Instant>,
}

impl Default for RdfizeOptions {
    fn default() -> Self {
        RdfizeOptions { mode: EmissionMode::Distinct, type_triples: true, spill_threshold: None, deadline: None }
    }
}

impl RdfizeOptions {
    pub fn with_mode(mode: EmissionMode) -> Self {
        RdfizeOptions { mode, ..Default::default() }
    }
}

/// Instantiates `template` with the values in `mu`.
pub fn iri_instantiate(template: &IriTemplate, mu: &VarMap) -> Result<String, RdfizeError> {
    let mut out = String::new();
    for seg in template.segments() {
        match seg {
            Segment::Const(c) => out.push_str(c),
            Segment::Slot(v) => match mu.get(v) {
                None => return Err(RdfizeError::UnboundSlot(v.clone())),
                Some(x) if is_null(x) => return Err(RdfizeError::NullSlot(v.clone())),
                Some(x) => push_iri_encoded(&mut out, x),
            },
        }
    }
    Ok(out)
}

enum Piece {
    Const(String),
    Var(usize),
}

struct CompiledTemplate(Vec<Piece>);

impl CompiledTemplate {
    fn expand(&self, mu: &[&str]) -> Option<String> {
        let mut out = String::with_capacity(64);
        for p in &self.0 {
            match p {
                Piece::Const(c) => out.push_str(c),
                Piece::Var(i) => {
                    let v = mu[*i];
                    if is_null(v) {
                        return None;
                    }
                    push_iri_encoded(&mut out, v);
                }
            }
        }
        Some(out)
    }
}

enum CompiledObject {
    Literal(usize),
    Iri(CompiledTemplate),
}

struct CompiledPredicate<'a> {
    rows: &'a [Vec<String>],
    /// (column, variable) for variables first bound by this predicate.
    fresh: Vec<(usize, usize)>,
    /// (column, variable) for variables bound by an earlier predicate.
    keyed: Vec<(usize, usize)>,
}

struct CompiledRule<'a> {
    vars: usize,
    subject_var: usize,
    subject: CompiledTemplate,
    class: Option<Arc<str>>,
    properties: Vec<(Arc<str>, CompiledObject)>,
    preds: Vec<CompiledPredicate<'a>>,
}

fn compile<'a>(
    rule: &'a MappingRule,
    sources: &'a BTreeMap<String, Arc<SourceRelation>>,
) -> Result<CompiledRule<'a>, RdfizeError> {
    let mut index: HashMap<&str, usize> = HashMap::new();
    let mut preds = Vec::with_capacity(rule.body.len());
    for pred in &rule.body {
        let rel = sources
            .get(&pred.source)
            .ok_or_else(|| RdfizeError::MissingSource { rule: rule.id.clone(), source_name: pred.source.clone() })?;
        let mut fresh = Vec::new();
        let mut keyed = Vec::new();
        for b in &pred.bindings {
            let col = rel.signature().position(&b.attribute).ok_or_else(|| RdfizeError::UnknownAttribute {
                rule: rule.id.clone(),
                source_name: pred.source.clone(),
                attribute: b.attribute.clone(),
            })?;
            match index.get(b.variable.as_str()) {
                Some(&v) => keyed.push((col, v)),
                None => {
                    let v = index.len();
                    index.insert(&b.variable, v);
                    fresh.push((col, v));
                }
            }
        }
        preds.push(CompiledPredicate { rows: rel.rows(), fresh, keyed });
    }
    let var = |name: &str| {
        index
            .get(name)
            .copied()
            .ok_or_else(|| RdfizeError::UnboundVariable { rule: rule.id.clone(), variable: name.to_string() })
    };
    let template = |t: &IriTemplate| -> Result<CompiledTemplate, RdfizeError> {
        t.segments()
            .iter()
            .map(|s| match s {
                Segment::Const(c) => Ok(Piece::Const(c.clone())),
                Segment::Slot(v) => var(v).map(Piece::Var),
            })
            .collect::<Result<_, _>>()
            .map(CompiledTemplate)
    };
    let head = &rule.head;
    let properties = head
        .properties
        .iter()
        .map(|p| {
            let obj = match &p.object {
                ObjectTerm::Literal(v) => CompiledObject::Literal(var(v)?),
                ObjectTerm::Iri(t) => CompiledObject::Iri(template(t)?),
            };
            Ok((Arc::from(p.property.as_str()), obj))
        })
        .collect::<Result<_, RdfizeError>>()?;
    Ok(CompiledRule {
        vars: index.len(),
        subject_var: var(&head.subject_var)?,
        subject: template(&head.subject)?,
        class: head.class.as_deref().map(Arc::from),
        properties,
        preds,
    })
}

/// Receives emitted triples.
trait Sink {
    fn emit(&mut self, t: RdfTriple) -> Result<(), RdfizeError>;
}

struct Emitter<'s, S: Sink> {
    sink: &'s mut S,
    rdf_type: Arc<str>,
    type_triples: bool,
    generated: u64,
    deadline: Option<Instant>,
    ticks: u32,
}

impl<S: Sink> Emitter<'_, S> {
    fn tick(&mut self) -> Result<(), RdfizeError> {
        self.ticks = self.ticks.wrapping_add(1);
        if self.ticks.is_multiple_of(1024) {
            if let Some(d) = self.deadline {
                if Instant::now() >= d {
                    return Err(RdfizeError::DeadlineExceeded);
                }
            }
        }
        Ok(())
    }

    fn emit_mu(&mut self, rule: &CompiledRule<'_>, mu: &[&str]) -> Result<(), RdfizeError> {
        self.tick()?;
        if is_null(mu[rule.subject_var]) {
            return Ok(());
        }
        let Some(subject) = rule.subject.expand(mu) else {
            return Ok(());
        };
        if self.type_triples {
            if let Some(class) = &rule.class {
                self.generated += 1;
                self.sink.emit(RdfTriple {
                    subject: subject.clone(),
                    predicate: self.rdf_type.clone(),
                    object: Term::Iri(class.to_string()),
                })?;
            }
        }
        for (predicate, object) in &rule.properties {
            let object = match object {
                CompiledObject::Literal(i) => {
                    let v = mu[*i];
                    if is_null(v) {
                        continue;
                    }
                    Term::Literal(v.to_string())
                }
                CompiledObject::Iri(t) => match t.expand(mu) {
                    Some(iri) => Term::Iri(iri),
                    None => continue,
                },
            };
            self.generated += 1;
            self.sink.emit(RdfTriple { subject: subject.clone(), predicate: predicate.clone(), object })?;
        }
        Ok(())
    }
}

type JoinIndex<'a> = HashMap<Vec<&'a str>, Vec<usize>>;

fn build_index<'a>(pred: &CompiledPredicate<'a>) -> JoinIndex<'a> {
    let mut index: JoinIndex<'a> = HashMap::new();
    'rows: for (i, row) in pred.rows.iter().enumerate() {
        let mut key = Vec::with_capacity(pred.keyed.len());
        for &(col, _) in &pred.keyed {
            let v = row[col].as_str();
            if is_null(v) {
                continue 'rows;
            }
            key.push(v);
        }
        index.entry(key).or_default().push(i);
    }
    index
}

fn eval_compiled<S: Sink>(rule: &CompiledRule<'_>, em: &mut Emitter<'_, S>) -> Result<(), RdfizeError> {
    let mut mu: Vec<&str> = vec![""; rule.vars];
    let first = &rule.preds[0];
    if rule.preds.len() == 1 {
        for row in first.rows {
            for &(col, v) in &first.fresh {
                mu[v] = &row[col];
            }
            em.emit_mu(rule, &mu)?;
        }
        return Ok(());
    }
    let indexes: Vec<JoinIndex<'_>> = rule.preds[1..].iter().map(build_index).collect();

    fn walk<'a, S: Sink>(
        rule: &CompiledRule<'a>,
        indexes: &[JoinIndex<'a>],
        k: usize,
        mu: &mut Vec<&'a str>,
        em: &mut Emitter<'_, S>,
    ) -> Result<(), RdfizeError> {
        if k == rule.preds.len() {
            return em.emit_mu(rule, mu);
        }
        let pred = &rule.preds[k];
        let key: Vec<&str> = pred.keyed.iter().map(|&(_, v)| mu[v]).collect();
        if key.iter().any(|v| is_null(v)) {
            return Ok(());
        }
        if let Some(rows) = indexes[k - 1].get(&key) {
            for &r in rows {
                let row = &pred.rows[r];
                for &(col, v) in &pred.fresh {
                    mu[v] = &row[col];
                }
                walk(rule, indexes, k + 1, mu, em)?;
            }
        }
        Ok(())
    }

    for row in first.rows {
        for &(col, v) in &first.fresh {
            mu[v] = &row[col];
        }
        walk(rule, &indexes, 1, &mut mu, em)?;
    }
    Ok(())
}

struct CollectSink(Vec<RdfTriple>);

impl Sink for CollectSink {
    fn emit(&mut self, t: RdfTriple) -> Result<(), RdfizeError> {
        self.0.push(t);
        Ok(())
    }
}

/// Evaluates one rule, returning every emission (duplicates included) and its
/// statistics.
pub fn eval_rule(
    rule: &MappingRule,
    sources: &BTreeMap<String, Arc<SourceRelation>>,
    type_triples: bool,
) -> Result<(Vec<RdfTriple>, EmissionStats), RdfizeError> {
    let compiled = compile(rule, sources)?;
    let mut sink = CollectSink(Vec::new());
    let mut em = Emitter {
        sink: &mut sink,
        rdf_type: Arc::from(RDF_TYPE),
        type_triples,
        generated: 0,
        deadline: None,
        ticks: 0,
    };
    if !compiled.preds.is_empty() {
        eval_compiled(&compiled, &mut em)?;
    }
    let generated = em.generated;
    let distinct = sink.0.iter().collect::<HashSet<_>>().len() as u64;
    let stats = EmissionStats {
        generated_count: generated,
        distinct_count: distinct,
        per_rule: BTreeMap::from([(rule.id.clone(), RuleEmission { generated })]),
    };
    Ok((sink.0, stats))
}

struct DistinctSink(KnowledgeGraph);

impl Sink for DistinctSink {
    fn emit(&mut self, t: RdfTriple) -> Result<(), RdfizeError> {
        self.0.insert(t);
        Ok(())
    }
}

struct SpillingSink {
    buffer: Vec<RdfTriple>,
    threshold: usize,
    spill: Option<BufWriter<File>>,
    spill_file: Option<tempfile::NamedTempFile>,
}

impl SpillingSink {
    fn flush_buffer(&mut self) -> Result<(), RdfizeError> {
        if self.spill.is_none() {
            let f = tempfile::NamedTempFile::new()?;
            self.spill = Some(BufWriter::new(f.reopen()?));
            self.spill_file = Some(f);
        }
        let w = self.spill.as_mut().expect("spill writer");
        for t in self.buffer.drain(..) {
            writeln!(w, "{t}")?;
        }
        Ok(())
    }

    fn into_graph(mut self) -> Result<KnowledgeGraph, RdfizeError> {
        let mut graph: KnowledgeGraph = self.buffer.drain(..).collect();
        if let (Some(mut w), Some(f)) = (self.spill.take(), self.spill_file.take()) {
            w.flush()?;
            drop(w);
            let reader = io::BufReader::new(f.reopen()?);
            for (i, line) in reader.lines().enumerate() {
                let line = line?;
                let t = parse_ntriples_line(&line).map_err(|message| RdfizeError::Syntax { line: i + 1, message })?;
                graph.insert(t);
            }
        }
        Ok(graph)
    }
}

impl Sink for SpillingSink {
    fn emit(&mut self, t: RdfTriple) -> Result<(), RdfizeError> {
        self.buffer.push(t);
        if self.buffer.len() >= self.threshold {
            self.flush_buffer()?;
        }
        Ok(())
    }
}

fn run_rules<S: Sink>(dis: &Dis, options: &RdfizeOptions, sink: &mut S) -> Result<EmissionStats, RdfizeError> {
    let rdf_type: Arc<str> = Arc::from(RDF_TYPE);
    let mut stats = EmissionStats::default();
    for rule in &dis.mappings {
        let compiled = compile(rule, &dis.sources)?;
        let mut em = Emitter {
            sink: &mut *sink,
            rdf_type: rdf_type.clone(),
            type_triples: options.type_triples,
            generated: 0,
            deadline: options.deadline,
            ticks: 0,
        };
        if !compiled.preds.is_empty() {
            eval_compiled(&compiled, &mut em)?;
        }
        stats.generated_count += em.generated;
        stats.per_rule.entry(rule.id.clone()).or_default().generated += em.generated;
    }
    Ok(stats)
}

/// Evaluates every rule of `dis` and returns the union of their outputs.
pub fn rdfize(dis: &Dis, options: &RdfizeOptions) -> Result<(KnowledgeGraph, EmissionStats), RdfizeError> {
    let (graph, mut stats) = match options.mode {
        EmissionMode::Distinct => {
            let mut sink = DistinctSink(KnowledgeGraph::new());
            let stats = run_rules(dis, options, &mut sink)?;
            (sink.0, stats)
        }
        EmissionMode::GenerateAll => {
            let mut sink = SpillingSink {
                buffer: Vec::new(),
                threshold: options.spill_threshold.unwrap_or(usize::MAX).max(1),
                spill: None,
                spill_file: None,
            };
            let stats = run_rules(dis, options, &mut sink)?;
            (sink.into_graph()?, stats)
        }
    };
    stats.distinct_count = graph.len() as u64;
    Ok((graph, stats))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{AttributeBinding, PropertyBinding, RuleHead, SourcePredicate, SourceSignature};

    fn rel(name: &str, attrs: &[&str], rows: &[&[&str]]) -> SourceRelation {
        SourceRelation::new(
            SourceSignature::new(name, attrs.iter().copied()).unwrap(),
            rows.iter().map(|r| r.iter().map(|s| s.to_string()).collect()).collect(),
        )
        .unwrap()
    }

    fn gene_rule() -> MappingRule {
        MappingRule {
            id: "g".into(),
            head: RuleHead {
                class: Some("http://ex/Gene".into()),
                subject_var: "e".into(),
                subject: IriTemplate::parse("http://ex/g/{e}").unwrap(),
                properties: vec![
                    PropertyBinding::literal("http://ex/symbol", "s"),
                    PropertyBinding::literal("http://ex/acc", "a"),
                ],
            },
            body: vec![SourcePredicate::new(
                "genes",
                [
                    AttributeBinding::new("ENSG", "e"),
                    AttributeBinding::new("SYMBOL", "s"),
                    AttributeBinding::new("ACC", "a"),
                ],
            )],
        }
    }

    fn sources(rels: Vec<SourceRelation>) -> BTreeMap<String, Arc<SourceRelation>> {
        rels.into_iter().map(|r| (r.name().to_string(), Arc::new(r))).collect()
    }

    #[test]
    fn empty_source_emits_nothing() {
        let s = sources(vec![rel("genes", &["ENSG", "SYMBOL", "ACC"], &[])]);
        let (t, stats) = eval_rule(&gene_rule(), &s, true).unwrap();
        assert!(t.is_empty());
        assert_eq!(stats.generated_count, 0);
    }

    #[test]
    fn one_row_class_and_two_properties() {
        let s = sources(vec![rel("genes", &["ENSG", "SYMBOL", "ACC"], &[&["E1", "TP53", "P04637"]])]);
        let (t, stats) = eval_rule(&gene_rule(), &s, true).unwrap();
        assert_eq!(stats.generated_count, 3);
        assert!(t.contains(&RdfTriple::new("http://ex/g/E1", RDF_TYPE, Term::Iri("http://ex/Gene".into()))));
        assert!(t.contains(&RdfTriple::new("http://ex/g/E1", "http://ex/symbol", Term::Literal("TP53".into()))));
        let (t, _) = eval_rule(&gene_rule(), &s, false).unwrap();
        assert_eq!(t.len(), 2);
    }

    #[test]
    fn nulls_suppress_subject_or_single_triple() {
        let s = sources(vec![rel("genes", &["ENSG", "SYMBOL", "ACC"], &[&["", "X", "Y"], &["E2", "", "A2"]])]);
        let (t, stats) = eval_rule(&gene_rule(), &s, true).unwrap();
        assert_eq!(stats.generated_count, 2);
        assert_eq!(t.len(), 2);
        assert!(t.iter().all(|t| t.subject == "http://ex/g/E2"));
    }

    #[test]
    fn join_on_shared_variable() {
        let genes = rel("genes", &["ENSG", "Genename"], &[&["E1", "BRCA1"], &["E2", "TP53"], &["E3", ""]]);
        let chrom = rel("chrom", &["CHROM", "Genename"], &[&["17", "BRCA1"], &["17", "TP53"], &["13", ""]]);
        let rule = MappingRule {
            id: "j".into(),
            head: RuleHead {
                class: None,
                subject_var: "e".into(),
                subject: IriTemplate::parse("http://ex/g/{e}").unwrap(),
                properties: vec![PropertyBinding::iri("http://ex/on", IriTemplate::parse("http://ex/c/{c}").unwrap())],
            },
            body: vec![
                SourcePredicate::new(
                    "genes",
                    [AttributeBinding::new("ENSG", "e"), AttributeBinding::new("Genename", "n")],
                ),
                SourcePredicate::new(
                    "chrom",
                    [AttributeBinding::new("CHROM", "c"), AttributeBinding::new("Genename", "n")],
                ),
            ],
        };
        let (t, stats) = eval_rule(&rule, &sources(vec![genes, chrom]), true).unwrap();
        assert_eq!(stats.generated_count, 2);
        let subjects: HashSet<_> = t.iter().map(|t| t.subject.as_str()).collect();
        assert_eq!(subjects, HashSet::from(["http://ex/g/E1", "http://ex/g/E2"]));
    }

    #[test]
    fn modes_agree_and_spill_round_trips() {
        let genes = rel(
            "genes",
            &["ENSG", "SYMBOL", "ACC"],
            &[&["E1", "a \"q\"\n", "x"], &["E1", "a \"q\"\n", "x"], &["E2", "tab\there", "\u{1}"]],
        );
        let mut dis = Dis::new([genes], vec![gene_rule()]);
        dis.mappings.push(MappingRule { id: "g2".into(), ..gene_rule() });
        let (distinct, s1) = rdfize(&dis, &RdfizeOptions::with_mode(EmissionMode::Distinct)).unwrap();
        let opts = RdfizeOptions { spill_threshold: Some(2), ..RdfizeOptions::with_mode(EmissionMode::GenerateAll) };
        let (all, s2) = rdfize(&dis, &opts).unwrap();
        assert_eq!(distinct, all);
        assert_eq!(s1, s2);
        assert_eq!(s1.generated_count, 18);
        assert_eq!(s1.distinct_count, 6);
    }

    #[test]
    fn zero_rules_empty_graph() {
        let (g, s) = rdfize(&Dis::default(), &RdfizeOptions::default()).unwrap();
        assert!(g.is_empty());
        assert_eq!(s.generated_count, 0);
    }

    #[test]
    fn deadline_in_the_past_aborts() {
        let rows: Vec<Vec<String>> = (0..5000).map(|i| vec![format!("E{i}"), "s".into(), "a".into()]).collect();
        let genes =
            SourceRelation::new(SourceSignature::new("genes", ["ENSG", "SYMBOL", "ACC"]).unwrap(), rows).unwrap();
        let dis = Dis::new([genes], vec![gene_rule()]);
        let opts = RdfizeOptions { deadline: Some(Instant::now()), ..Default::default() };
        assert!(matches!(rdfize(&dis, &opts), Err(RdfizeError::DeadlineExceeded)));
    }

    #[test]
    fn iri_instantiation() {
        let t = IriTemplate::parse("http://ex/g/{ensg}").unwrap();
        let mu: VarMap = [("ensg", "ENSG0001")].into_iter().collect();
        assert_eq!(iri_instantiate(&t, &mu).unwrap(), "http://ex/g/ENSG0001");
        let mu: VarMap = [("ensg", "A B")].into_iter().collect();
        assert_eq!(iri_instantiate(&t, &mu).unwrap(), "http://ex/g/A%20B");
        let c = IriTemplate::constant("http://ex/const");
        assert_eq!(iri_instantiate(&c, &VarMap::new()).unwrap(), "http://ex/const");
        assert!(matches!(iri_instantiate(&t, &VarMap::new()), Err(RdfizeError::UnboundSlot(_))));
        let mu: VarMap = [("ensg", "")].into_iter().collect();
        assert!(matches!(iri_instantiate(&t, &mu), Err(RdfizeError::NullSlot(_))));
    }

    #[test]
    fn ntriples_escaping_round_trips() {
        let t = RdfTriple::new("http://ex/s", "http://ex/p", Term::Literal("line1\nline2 \"q\" \\ \u{7}".into()));
        let line = t.to_string();
        assert!(!line.contains('\n'));
        assert_eq!(parse_ntriples_line(&line).unwrap(), t);
    }

    #[test]
    fn written_file_is_sorted() {
        let dir = tempfile::tempdir().unwrap();
        let g: KnowledgeGraph = [
            RdfTriple::new("http://ex/c", "http://ex/p", Term::Literal("3".into())),
            RdfTriple::new("http://ex/a", "http://ex/p", Term::Iri("http://ex/o".into())),
            RdfTriple::new("http://ex/b", "http://ex/p", Term::Literal("2".into())),
        ]
        .into_iter()
        .collect();
        let p = dir.path().join("g.nt");
        write_ntriples(&g, &p).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 3);
        assert!(lines.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(KnowledgeGraph::parse_ntriples(&text).unwrap(), g);

        let empty = dir.path().join("e.nt");
        write_ntriples(&KnowledgeGraph::new(), &empty).unwrap();
        assert_eq!(std::fs::read(&empty).unwrap().len(), 0);
    }
}
