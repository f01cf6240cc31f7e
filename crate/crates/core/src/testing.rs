//! Random instances, brute-force oracles and small fixtures for tests.
//!
//! The oracles share no code with the library's evaluation or storage paths:
//! joins are nested loops over every combination of rows and duplicate
//! elimination is a linear scan.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::model::{
    AttributeBinding, Dis, MappingRule, ObjectTerm, PropertyBinding, RuleHead, SourcePredicate, SourceRelation,
    SourceSignature,
};
use crate::rdfize::{KnowledgeGraph, RdfTriple, Term, RDF_TYPE};
use crate::rml::{JoinCondition, ObjectMapDef, PredicateObjectMapDef, TriplesMapDef, TriplesMapDoc};
use crate::template::{IriTemplate, Segment};

pub const EX: &str = "http://example.com/";

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn relation(name: &str, attrs: &[&str], rows: &[&[&str]]) -> SourceRelation {
    SourceRelation::new(
        SourceSignature::new(name, attrs.iter().copied()).expect("distinct attributes"),
        rows.iter().map(|r| r.iter().map(|s| s.to_string()).collect()).collect(),
    )
    .expect("rows match the header")
}

#[derive(Debug, Clone)]
pub struct RandomDisConfig {
    pub max_sources: usize,
    pub max_attributes: usize,
    pub max_rows: usize,
    pub duplicate_fraction: f64,
    pub joins: bool,
    pub null_rate: f64,
}

impl Default for RandomDisConfig {
    fn default() -> Self {
        RandomDisConfig {
            max_sources: 5,
            max_attributes: 8,
            max_rows: 200,
            duplicate_fraction: 0.5,
            joins: true,
            null_rate: 0.05,
        }
    }
}

/// `rows` rows drawn from a pool of `⌈(1−d)·rows⌉` random tuples over a small
/// value domain, so joins match and projections collapse.
pub fn random_relation(
    rng: &mut ChaCha8Rng,
    name: &str,
    attrs: &[String],
    rows: usize,
    duplicate_fraction: f64,
    null_rate: f64,
) -> SourceRelation {
    let domain = rng.random_range(2..=12);
    let pool_size =
        (((1.0 - duplicate_fraction) * rows as f64).ceil() as usize).clamp(usize::from(rows > 0), rows.max(1));
    let pool: Vec<Vec<String>> = (0..pool_size)
        .map(|_| {
            attrs
                .iter()
                .map(|_| {
                    if rng.random_bool(null_rate) {
                        String::new()
                    } else {
                        format!("v{}", rng.random_range(0..domain))
                    }
                })
                .collect()
        })
        .collect();
    let mut out: Vec<Vec<String>> = pool.iter().take(rows).cloned().collect();
    while out.len() < rows {
        out.push(pool.choose(rng).expect("non-empty pool").clone());
    }
    out.shuffle(rng);
    SourceRelation::new(SourceSignature::new(name, attrs.iter().cloned()).expect("distinct"), out).expect("arity")
}

fn pick_attrs(rng: &mut ChaCha8Rng, attrs: &[String], n: usize) -> Vec<String> {
    let mut a = attrs.to_vec();
    a.shuffle(rng);
    a.truncate(n.clamp(1, attrs.len()));
    a
}

struct RuleBuilder<'r> {
    rng: &'r mut ChaCha8Rng,
    next_var: usize,
}

impl RuleBuilder<'_> {
    fn var(&mut self) -> String {
        self.next_var += 1;
        format!("x{}", self.next_var)
    }

    fn class(&mut self) -> Option<String> {
        [None, Some(format!("{EX}C0")), Some(format!("{EX}C1"))].choose(self.rng).cloned().flatten()
    }

    fn object(&mut self, var: &str) -> ObjectTerm {
        if self.rng.random_bool(0.7) {
            ObjectTerm::Literal(var.to_string())
        } else {
            ObjectTerm::Iri(IriTemplate::new([Segment::Const(format!("{EX}o/")), Segment::Slot(var.to_string())]))
        }
    }

    fn subject(&self, var: &str, kind: usize) -> IriTemplate {
        IriTemplate::new([Segment::Const(format!("{EX}s{kind}/")), Segment::Slot(var.to_string())])
    }

    /// One predicate binding `attrs` to fresh variables.
    fn predicate(&mut self, source: &SourceRelation, attrs: &[String]) -> (SourcePredicate, Vec<String>) {
        let vars: Vec<String> = attrs.iter().map(|_| self.var()).collect();
        let bindings = attrs.iter().zip(&vars).map(|(a, v)| AttributeBinding::new(a.clone(), v.clone()));
        (SourcePredicate::new(source.name(), bindings), vars)
    }
}

/// A random valid DIS. Besides plain single-source rules it plants groups of
/// structurally identical rules over different sources (merge candidates),
/// unused bindings (pushdown candidates) and, when enabled, two- and
/// three-way joins.
pub fn random_dis(rng: &mut ChaCha8Rng, cfg: &RandomDisConfig) -> Dis {
    let n_sources = rng.random_range(1..=cfg.max_sources.max(1));
    let mut sources = Vec::new();
    for i in 0..n_sources {
        let n_attrs = rng.random_range(1..=cfg.max_attributes.max(1));
        let attrs: Vec<String> = (0..n_attrs).map(|j| format!("s{i}a{j}")).collect();
        let rows = rng.random_range(0..=cfg.max_rows);
        sources.push(random_relation(rng, &format!("src{i}"), &attrs, rows, cfg.duplicate_fraction, cfg.null_rate));
    }
    let mut rules = Vec::new();
    let mut b = RuleBuilder { rng, next_var: 0 };
    let n_rules = b.rng.random_range(1..=4);
    for k in 0..n_rules {
        let kind = b.rng.random_range(0..if cfg.joins { 4 } else { 2 });
        let id = format!("r{k}");
        match kind {
            0 => {
                let src = sources.choose(b.rng).expect("sources").clone();
                let n = b.rng.random_range(1..=src.attributes().len());
                let attrs = pick_attrs(b.rng, src.attributes(), n);
                let (pred, vars) = b.predicate(&src, &attrs);
                let subject_var = vars[0].clone();
                let n_props = b.rng.random_range(0..=vars.len());
                let mut properties = Vec::new();
                for p in 0..n_props {
                    let v = vars[b.rng.random_range(0..vars.len())].clone();
                    properties.push(PropertyBinding { property: format!("{EX}p{p}"), object: b.object(&v) });
                }
                let class = b.class().or_else(|| properties.is_empty().then(|| format!("{EX}C0")));
                let kind = b.rng.random_range(0..2);
                let subject = b.subject(&subject_var, kind);
                rules.push(MappingRule {
                    id,
                    head: RuleHead { class, subject_var, subject, properties },
                    body: vec![pred],
                });
            }
            1 => {
                // A family of rules with one shape over several sources.
                let class = b.class();
                let n_props = b.rng.random_range(0..=2);
                let literal: Vec<bool> = (0..n_props).map(|_| b.rng.random_bool(0.6)).collect();
                let subject_kind = b.rng.random_range(0..2);
                let members = b.rng.random_range(2..=3);
                for m in 0..members {
                    let src = sources.choose(b.rng).expect("sources").clone();
                    let attrs = pick_attrs(b.rng, src.attributes(), 1 + n_props);
                    let extra = pick_attrs(b.rng, src.attributes(), 1);
                    let (mut pred, vars) = b.predicate(&src, &attrs);
                    if !attrs.contains(&extra[0]) {
                        let v = b.var();
                        pred.bindings.push(AttributeBinding::new(extra[0].clone(), v));
                    }
                    let subject_var = vars[0].clone();
                    let properties = (0..n_props)
                        .map(|p| {
                            let v = &vars[(p + 1).min(vars.len() - 1)];
                            let object = if literal[p] {
                                ObjectTerm::Literal(v.clone())
                            } else {
                                ObjectTerm::Iri(IriTemplate::new([
                                    Segment::Const(format!("{EX}o/")),
                                    Segment::Slot(v.clone()),
                                ]))
                            };
                            PropertyBinding { property: format!("{EX}q{p}"), object }
                        })
                        .collect::<Vec<_>>();
                    let class = class.clone().or_else(|| properties.is_empty().then(|| format!("{EX}C2")));
                    let subject = b.subject(&subject_var, 10 + subject_kind);
                    rules.push(MappingRule {
                        id: format!("{id}m{m}"),
                        head: RuleHead { class, subject_var, subject, properties },
                        body: vec![pred],
                    });
                }
            }
            _ => {
                let arity = if kind == 3 && b.rng.random_bool(0.3) { 3 } else { 2 };
                let mut body = Vec::new();
                let mut all_vars: Vec<Vec<String>> = Vec::new();
                for _ in 0..arity {
                    let src = sources.choose(b.rng).expect("sources").clone();
                    let n = b.rng.random_range(1..=src.attributes().len());
                    let attrs = pick_attrs(b.rng, src.attributes(), n);
                    let (pred, vars) = b.predicate(&src, &attrs);
                    body.push(pred);
                    all_vars.push(vars);
                }
                // Chain predicate i to i-1 through one shared variable.
                for i in 1..arity {
                    let j = b.rng.random_range(0..all_vars[i].len());
                    let shared = all_vars[i - 1][b.rng.random_range(0..all_vars[i - 1].len())].clone();
                    if !body[i].bindings.iter().any(|x| x.variable == shared) {
                        body[i].bindings[j].variable = shared.clone();
                        all_vars[i][j] = shared;
                    }
                }
                let subject_var = all_vars[0][0].clone();
                let last = all_vars.last().expect("predicates").clone();
                let mut properties =
                    vec![PropertyBinding { property: format!("{EX}link"), object: b.object(&last[last.len() - 1]) }];
                if b.rng.random_bool(0.5) {
                    let v = all_vars[0][all_vars[0].len() - 1].clone();
                    properties.push(PropertyBinding { property: format!("{EX}p0"), object: b.object(&v) });
                }
                let class = b.class();
                let subject = b.subject(&subject_var, 0);
                rules.push(MappingRule { id, head: RuleHead { class, subject_var, subject, properties }, body });
            }
        }
    }
    let dis = Dis::new(sources, rules);
    debug_assert!(dis.validate().is_valid(), "{:?}", dis.validate());
    dis
}

fn encode(value: &str) -> String {
    let mut out = String::new();
    for c in value.chars() {
        if c.is_control() || " \"'<>{}\\^`|".contains(c) {
            let mut buf = [0u8; 4];
            for byte in c.encode_utf8(&mut buf).bytes() {
                out += &format!("%{byte:02X}");
            }
        } else {
            out.push(c);
        }
    }
    out
}

fn instantiate(t: &IriTemplate, mu: &BTreeMap<&str, &str>) -> Option<String> {
    let mut out = String::new();
    for seg in t.segments() {
        match seg {
            Segment::Const(c) => out += c,
            Segment::Slot(v) => {
                let value = mu.get(v.as_str())?;
                if value.is_empty() {
                    return None;
                }
                out += &encode(value);
            }
        }
    }
    Some(out)
}

/// Every emission of `rule`, found by trying every combination of rows.
pub fn brute_force_eval(
    rule: &MappingRule,
    sources: &BTreeMap<String, Arc<SourceRelation>>,
    type_triples: bool,
) -> Vec<RdfTriple> {
    let rels: Vec<&SourceRelation> = rule.body.iter().map(|p| sources[&p.source].as_ref()).collect();
    let mut out = Vec::new();
    if rels.iter().any(|r| r.is_empty()) {
        return out;
    }
    let mut idx = vec![0usize; rels.len()];
    'combos: loop {
        let mut mu: BTreeMap<&str, &str> = BTreeMap::new();
        let mut consistent = true;
        for (k, pred) in rule.body.iter().enumerate() {
            let rel = rels[k];
            let row = &rel.rows()[idx[k]];
            for b in &pred.bindings {
                let col = rel.attributes().iter().position(|a| *a == b.attribute).expect("attribute exists");
                let value = row[col].as_str();
                match mu.get(b.variable.as_str()) {
                    Some(prev) if *prev != value || value.is_empty() => consistent = false,
                    Some(_) => {}
                    None => {
                        mu.insert(&b.variable, value);
                    }
                }
            }
        }
        if consistent && !mu[rule.head.subject_var.as_str()].is_empty() {
            if let Some(subject) = instantiate(&rule.head.subject, &mu) {
                if let (true, Some(class)) = (type_triples, &rule.head.class) {
                    out.push(RdfTriple::new(subject.clone(), RDF_TYPE, Term::Iri(class.clone())));
                }
                for p in &rule.head.properties {
                    let object = match &p.object {
                        ObjectTerm::Literal(v) => {
                            let value = mu[v.as_str()];
                            (!value.is_empty()).then(|| Term::Literal(value.to_string()))
                        }
                        ObjectTerm::Iri(t) => instantiate(t, &mu).map(Term::Iri),
                    };
                    if let Some(o) = object {
                        out.push(RdfTriple::new(subject.clone(), &p.property, o));
                    }
                }
            }
        }
        for k in (0..idx.len()).rev() {
            idx[k] += 1;
            if idx[k] < rels[k].len() {
                continue 'combos;
            }
            idx[k] = 0;
        }
        break;
    }
    out
}

pub fn brute_force_rdfize(dis: &Dis, type_triples: bool) -> (KnowledgeGraph, usize) {
    let mut all = Vec::new();
    for r in &dis.mappings {
        all.extend(brute_force_eval(r, &dis.sources, type_triples));
    }
    let n = all.len();
    (all.into_iter().collect(), n)
}

fn push_unique(out: &mut Vec<Vec<String>>, row: Vec<String>) {
    if !out.contains(&row) {
        out.push(row);
    }
}

/// Distinct projection by linear search, in first-occurrence order.
pub fn brute_force_project(rel: &SourceRelation, keep: &[String]) -> Vec<Vec<String>> {
    let cols: Vec<usize> =
        keep.iter().map(|k| rel.attributes().iter().position(|a| a == k).expect("kept attribute")).collect();
    let mut out = Vec::new();
    for row in rel.rows() {
        push_unique(&mut out, cols.iter().map(|&c| row[c].clone()).collect());
    }
    out
}

/// Distinct union of renamed parts by linear search.
pub fn brute_force_union(
    parts: &[(&SourceRelation, &BTreeMap<String, String>)],
    target: &[String],
) -> Vec<Vec<String>> {
    let mut out = Vec::new();
    for (rel, rename) in parts {
        for row in rel.rows() {
            let projected = target
                .iter()
                .map(|t| {
                    let from = rename.iter().find(|(_, to)| *to == t).map(|(f, _)| f).expect("bijective");
                    let col = rel.attributes().iter().position(|a| a == from).expect("source attribute");
                    row[col].clone()
                })
                .collect();
            push_unique(&mut out, projected);
        }
    }
    out
}

pub fn row_set(rows: &[Vec<String>]) -> BTreeSet<Vec<String>> {
    rows.iter().cloned().collect()
}

/// A random document in the supported subset, with headers for its sources.
pub fn random_rml_doc(rng: &mut ChaCha8Rng) -> (TriplesMapDoc, BTreeMap<String, Vec<String>>) {
    let n_files = rng.random_range(1..=3);
    let headers: BTreeMap<String, Vec<String>> = (0..n_files)
        .map(|f| {
            let n = rng.random_range(2..=6);
            (format!("data/file{f}.csv"), (0..n).map(|a| format!("f{f}_col{a}")).collect())
        })
        .collect();
    let paths: Vec<String> = headers.keys().cloned().collect();
    let n_maps = rng.random_range(1..=4);
    let mut maps: Vec<TriplesMapDef> = Vec::new();
    for m in 0..n_maps {
        let path = paths.choose(rng).expect("paths").clone();
        let cols = &headers[&path];
        let n_slots = rng.random_range(1..=2);
        let slot_attrs = pick_attrs(rng, cols, n_slots);
        let mut segs = vec![Segment::Const(format!("{EX}m{m}/"))];
        for (i, a) in slot_attrs.iter().enumerate() {
            if i > 0 {
                segs.push(Segment::Const("-".into()));
            }
            segs.push(Segment::Slot(a.clone()));
        }
        let class = rng.random_bool(0.6).then(|| format!("{EX}Class{}", rng.random_range(0..3)));
        let mut poms = Vec::new();
        for p in 0..rng.random_range(0..=3) {
            let object = match rng.random_range(0..3) {
                0 => ObjectMapDef::Reference(cols.choose(rng).expect("cols").clone()),
                1 => ObjectMapDef::Template(IriTemplate::new([
                    Segment::Const(format!("{EX}v/")),
                    Segment::Slot(cols.choose(rng).expect("cols").clone()),
                ])),
                _ => ObjectMapDef::Template(IriTemplate::constant(format!("{EX}const{p}"))),
            };
            poms.push(PredicateObjectMapDef { predicate: format!("{EX}prop{p}"), object });
        }
        maps.push(TriplesMapDef {
            id: format!("{EX}map{m}"),
            source_path: path,
            subject: IriTemplate::new(segs),
            class,
            predicate_object_maps: poms,
        });
    }
    // Joins between existing maps.
    for m in 0..maps.len() {
        if !rng.random_bool(0.5) {
            continue;
        }
        let parent = rng.random_range(0..maps.len());
        let child_cols = pick_attrs(rng, &headers[&maps[m].source_path], 2);
        let parent_cols = pick_attrs(rng, &headers[&maps[parent].source_path], 2);
        let n = rng.random_range(1..=child_cols.len().min(parent_cols.len()));
        let join_conditions =
            (0..n).map(|i| JoinCondition { child: child_cols[i].clone(), parent: parent_cols[i].clone() }).collect();
        let parent_id = maps[parent].id.clone();
        maps[m].predicate_object_maps.push(PredicateObjectMapDef {
            predicate: format!("{EX}joined{m}"),
            object: ObjectMapDef::RefObjectMap { parent: parent_id, join_conditions },
        });
    }
    for m in &mut maps {
        m.normalize();
    }
    let mut doc = TriplesMapDoc { prefixes: BTreeMap::from([("ex".into(), EX.into())]), maps };
    doc.add_standard_prefixes();
    (doc, headers)
}

/// Fixtures with hand-checked duplicate counts.
pub mod fixtures {
    use super::*;

    pub const GENE_ATTRIBUTES: [&str; 8] = ["ENSG", "SYMBOL", "SPECIES", "ACC", "TRANSCRIPT", "EXON", "START", "END"];

    /// Nine rows in three groups that agree on the four mapped attributes and
    /// differ elsewhere. Unprojected evaluation emits 9 triples of which 4 are
    /// distinct (5 duplicates); the projection has 3 rows and emits no
    /// duplicate.
    pub fn gene_source() -> SourceRelation {
        let rows: Vec<[&str; 8]> = vec![
            ["ENSG01", "", "", "", "ENST11", "1", "100", "200"],
            ["ENSG01", "", "", "", "ENST12", "2", "300", "400"],
            ["ENSG01", "", "", "", "ENST13", "3", "500", "600"],
            ["ENSG02", "TP53", "Homo sapiens", "", "ENST21", "1", "700", "800"],
            ["ENSG02", "TP53", "Homo sapiens", "", "ENST22", "2", "900", "950"],
            ["", "BRCA1", "Homo sapiens", "P38398", "ENST31", "1", "10", "20"],
            ["", "BRCA1", "Homo sapiens", "P38398", "ENST32", "2", "30", "40"],
            ["", "BRCA1", "Homo sapiens", "P38398", "ENST33", "3", "50", "60"],
            ["", "BRCA1", "Homo sapiens", "P38398", "ENST34", "4", "70", "80"],
        ];
        let rows: Vec<&[&str]> = rows.iter().map(|r| r.as_slice()).collect();
        relation("genes", &GENE_ATTRIBUTES, &rows)
    }

    pub fn gene_rule() -> MappingRule {
        MappingRule {
            id: "GeneMap".into(),
            head: RuleHead {
                class: Some(format!("{EX}Gene")),
                subject_var: "ENSG".into(),
                subject: IriTemplate::parse(&format!("{EX}gene/{{ENSG}}")).expect("template"),
                properties: vec![
                    PropertyBinding::literal(format!("{EX}symbol"), "SYMBOL"),
                    PropertyBinding::literal(format!("{EX}species"), "SPECIES"),
                    PropertyBinding::literal(format!("{EX}acc"), "ACC"),
                ],
            },
            body: vec![SourcePredicate::new("genes", GENE_ATTRIBUTES.iter().map(|a| AttributeBinding::new(*a, *a)))],
        }
    }

    pub fn gene_dis() -> Dis {
        Dis::new([gene_source()], vec![gene_rule()])
    }

    pub const GENE_RML: &str = r#"@prefix rr: <http://www.w3.org/ns/r2rml#> .
@prefix rml: <http://semweb.mmlab.be/ns/rml#> .
@prefix ql: <http://semweb.mmlab.be/ns/ql#> .
@prefix ex: <http://example.com/> .

ex:GeneMap a rr:TriplesMap ;
    rml:logicalSource [ rml:source "genes.csv" ; rml:referenceFormulation ql:CSV ] ;
    rr:subjectMap [ rr:template "http://example.com/gene/{ENSG}" ; rr:class ex:Gene ] ;
    rr:predicateObjectMap [ rr:predicate ex:symbol ; rr:objectMap [ rml:reference "SYMBOL" ] ] ;
    rr:predicateObjectMap [ rr:predicate ex:species ; rr:objectMap [ rml:reference "SPECIES" ] ] ;
    rr:predicateObjectMap [ rr:predicate ex:acc ; rr:objectMap [ rml:reference "ACC" ] ] .
"#;

    /// Genes joined to chromosomes on `Genename`, with extra unused columns.
    /// Before pushdown and projection the join yields 25 matches for 3
    /// distinct triples (22 duplicates); afterwards 7 matches (4 duplicates).
    pub fn join_sources() -> (SourceRelation, SourceRelation) {
        let mut genes: Vec<Vec<String>> = Vec::new();
        let mut chrom: Vec<Vec<String>> = Vec::new();
        let row = |a: &str, b: &str, c: String| vec![a.to_string(), b.to_string(), c];
        for t in 1..=4 {
            genes.push(row("ENSG1", "GA1", format!("ENST1{t}")));
        }
        for t in 1..=2 {
            genes.push(row("ENSG3", "GA2", format!("ENST3{t}")));
        }
        for g in 1..=5 {
            genes.push(row("ENSG2", &format!("GB{g}"), format!("ENST2{g}")));
        }
        for b in 1..=3 {
            chrom.push(row("chr1", "GA1", format!("p{b}")));
        }
        for b in 1..=4 {
            chrom.push(row("chr3", "GA2", format!("q{b}")));
        }
        for g in 1..=5 {
            chrom.push(row("chr2", &format!("GB{g}"), "p1".into()));
        }
        let g =
            SourceRelation::new(SourceSignature::new("genes", ["ENSG", "Genename", "Transcript"]).expect("sig"), genes);
        let c = SourceRelation::new(SourceSignature::new("chrom", ["CHROM", "Genename", "Band"]).expect("sig"), chrom);
        (g.expect("arity"), c.expect("arity"))
    }

    pub fn join_rule() -> MappingRule {
        MappingRule {
            id: "GeneMap__ref1".into(),
            head: RuleHead {
                class: None,
                subject_var: "ENSG".into(),
                subject: IriTemplate::parse(&format!("{EX}gene/{{ENSG}}")).expect("template"),
                properties: vec![PropertyBinding::iri(
                    format!("{EX}onChromosome"),
                    IriTemplate::parse(&format!("{EX}chrom/{{parent.CHROM}}")).expect("template"),
                )],
            },
            body: vec![
                SourcePredicate::new(
                    "genes",
                    [
                        AttributeBinding::new("ENSG", "ENSG"),
                        AttributeBinding::new("Genename", "Genename"),
                        AttributeBinding::new("Transcript", "Transcript"),
                    ],
                ),
                SourcePredicate::new(
                    "chrom",
                    [
                        AttributeBinding::new("CHROM", "parent.CHROM"),
                        AttributeBinding::new("Genename", "Genename"),
                        AttributeBinding::new("Band", "parent.Band"),
                    ],
                ),
            ],
        }
    }

    pub fn join_dis() -> Dis {
        let (g, c) = join_sources();
        Dis::new([g, c], vec![join_rule()])
    }

    /// Three sources naming one transcript concept differently.
    pub fn transcript_sources() -> Vec<SourceRelation> {
        vec![
            relation(
                "expression",
                &["enst", "tissue", "level"],
                &[
                    &["ENST1", "liver", "3"],
                    &["ENST2", "liver", "5"],
                    &["ENST1", "brain", "1"],
                    &["ENST1", "liver", "3"],
                ],
            ),
            relation(
                "regulation",
                &["downstream_gene", "tf"],
                &[&["ENST2", "MYC"], &["ENST3", "MYC"], &["ENST3", "MAX"]],
            ),
            relation("annotation", &["transcript_id", "biotype"], &[&["ENST1", "coding"], &["ENST4", "lncRNA"]]),
        ]
    }

    pub const TRANSCRIPT_RML: &str = r#"@prefix rr: <http://www.w3.org/ns/r2rml#> .
@prefix rml: <http://semweb.mmlab.be/ns/rml#> .
@prefix ql: <http://semweb.mmlab.be/ns/ql#> .
@prefix ex: <http://example.com/> .

ex:ExpressionMap rml:logicalSource [ rml:source "expression.csv" ; rml:referenceFormulation ql:CSV ] ;
    rr:subjectMap [ rr:template "http://example.com/transcript/{enst}" ; rr:class ex:Transcript ] ;
    rr:predicateObjectMap [ rr:predicate ex:label ; rr:objectMap [ rml:reference "enst" ] ] .

ex:RegulationMap rml:logicalSource [ rml:source "regulation.csv" ; rml:referenceFormulation ql:CSV ] ;
    rr:subjectMap [ rr:template "http://example.com/transcript/{downstream_gene}" ; rr:class ex:Transcript ] ;
    rr:predicateObjectMap [ rr:predicate ex:label ; rr:objectMap [ rml:reference "downstream_gene" ] ] .

ex:AnnotationMap rml:logicalSource [ rml:source "annotation.csv" ; rml:referenceFormulation ql:CSV ] ;
    rr:subjectMap [ rr:template "http://example.com/transcript/{transcript_id}" ; rr:class ex:Transcript ] ;
    rr:predicateObjectMap [ rr:predicate ex:label ; rr:objectMap [ rml:reference "transcript_id" ] ] .
"#;

    pub const JOIN_RML: &str = r#"@prefix rr: <http://www.w3.org/ns/r2rml#> .
@prefix rml: <http://semweb.mmlab.be/ns/rml#> .
@prefix ql: <http://semweb.mmlab.be/ns/ql#> .
@prefix ex: <http://example.com/> .

ex:GeneMap rml:logicalSource [ rml:source "genes.csv" ; rml:referenceFormulation ql:CSV ] ;
    rr:subjectMap [ rr:template "http://example.com/gene/{ENSG}" ] ;
    rr:predicateObjectMap [
        rr:predicate ex:onChromosome ;
        rr:objectMap [
            rr:parentTriplesMap ex:ChromMap ;
            rr:joinCondition [ rr:child "Genename" ; rr:parent "Genename" ]
        ]
    ] .

ex:ChromMap rml:logicalSource [ rml:source "chrom.csv" ; rml:referenceFormulation ql:CSV ] ;
    rr:subjectMap [ rr:template "http://example.com/chrom/{CHROM}" ] .
"#;

    /// Writes `relations` as `<name>.csv` and `mapping` as `mapping.ttl`
    /// into `dir`, returning the mapping path.
    pub fn write_fixture(dir: &std::path::Path, relations: &[SourceRelation], mapping: &str) -> std::path::PathBuf {
        std::fs::create_dir_all(dir).expect("fixture dir");
        for r in relations {
            crate::store::write_csv(r, dir.join(format!("{}.csv", r.name())), Default::default()).expect("fixture csv");
        }
        let path = dir.join("mapping.ttl");
        std::fs::write(&path, mapping).expect("fixture mapping");
        path
    }
}
