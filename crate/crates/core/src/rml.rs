//! A CSV-only subset of RML: parsing from Turtle, lowering triples maps to
//! mapping rules, raising rules back to triples maps, and deterministic
//! Turtle output.
//!
//! Supported: `rml:logicalSource` with `rml:source` and `ql:CSV`; subject maps
//! with one `rr:template` and at most one `rr:class`; object maps given by
//! `rml:reference`, `rr:template`, an IRI `rr:constant`, or
//! `rr:parentTriplesMap` with one or more `rr:joinCondition`s.
//!
//! Lowering gives each triples map one single-source rule (class, subject and
//! every non-join property) and each join one two-source rule whose only
//! triple links the child subject to the parent subject. This is how an RML
//! engine evaluates such maps; a map that would emit nothing on its own
//! yields no rule.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;

use oxrdf::{NamedOrBlankNode, Term};
use oxttl::TurtleParser;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{AttributeBinding, MappingRule, ObjectTerm, PropertyBinding, RuleHead, SourcePredicate};
use crate::store::source_name_for;
use crate::template::{IriTemplate, TemplateError};
use crate::transform::sanitize_name;

pub const RR: &str = "http://www.w3.org/ns/r2rml#";
pub const RML: &str = "http://semweb.mmlab.be/ns/rml#";
pub const QL: &str = "http://semweb.mmlab.be/ns/ql#";
const RDF_TYPE: &str = "http://www.w3.org/1999/02/22-rdf-syntax-ns#type";

/// Namespace of triples maps created by [`raise_to_rml`].
pub const MAP_NAMESPACE: &str = "http://example.com/mapping#";

#[derive(Debug, Error, PartialEq, Eq)]
pub enum RmlError {
    #[error("syntax error at line {line}, column {column}: {message}")]
    Syntax { line: u64, column: u64, message: String },
    #[error("unsupported construct {construct}")]
    Unsupported { construct: String },
    #[error("triples map {map}: {message}")]
    Malformed { map: String, message: String },
    #[error("triples map {map}: parent triples map {parent} is not defined")]
    DanglingParent { map: String, parent: String },
    #[error("triples map {map}: {source}")]
    Template { map: String, source: TemplateError },
    #[error("no header for logical source {0:?}")]
    MissingHeader(String),
    #[error("triples map {map}: attribute {attribute:?} is not in the header of {path:?}")]
    UnknownAttribute { map: String, path: String, attribute: String },
    #[error("rule {rule} is not expressible in RML: {reason}")]
    NotExpressible { rule: String, reason: String },
    #[error("no file path for source {0:?}")]
    MissingSourcePath(String),
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct JoinCondition {
    pub child: String,
    pub parent: String,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ObjectMapDef {
    Reference(String),
    /// Also used for IRI constants (no slots).
    Template(IriTemplate),
    RefObjectMap {
        parent: String,
        join_conditions: Vec<JoinCondition>,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct PredicateObjectMapDef {
    pub predicate: String,
    pub object: ObjectMapDef,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TriplesMapDef {
    pub id: String,
    pub source_path: String,
    pub subject: IriTemplate,
    pub class: Option<String>,
    /// Sorted and duplicate-free.
    pub predicate_object_maps: Vec<PredicateObjectMapDef>,
}

impl TriplesMapDef {
    /// Attributes of this map's own logical source that the map reads.
    pub fn mentioned_attributes(&self) -> BTreeSet<String> {
        let mut out: BTreeSet<String> = self.subject.slots().map(String::from).collect();
        for pom in &self.predicate_object_maps {
            match &pom.object {
                ObjectMapDef::Reference(a) => {
                    out.insert(a.clone());
                }
                ObjectMapDef::Template(t) => out.extend(t.slots().map(String::from)),
                ObjectMapDef::RefObjectMap { join_conditions, .. } => {
                    out.extend(join_conditions.iter().map(|j| j.child.clone()))
                }
            }
        }
        out
    }

    pub(crate) fn normalize(&mut self) {
        for pom in &mut self.predicate_object_maps {
            if let ObjectMapDef::RefObjectMap { join_conditions, .. } = &mut pom.object {
                join_conditions.sort();
                join_conditions.dedup();
            }
        }
        self.predicate_object_maps.sort();
        self.predicate_object_maps.dedup();
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct TriplesMapDoc {
    pub prefixes: BTreeMap<String, String>,
    pub maps: Vec<TriplesMapDef>,
}

impl TriplesMapDoc {
    pub fn map(&self, id: &str) -> Option<&TriplesMapDef> {
        self.maps.iter().find(|m| m.id == id)
    }

    pub(crate) fn add_standard_prefixes(&mut self) {
        for (p, ns) in [("rr", RR), ("rml", RML), ("ql", QL)] {
            if !self.prefixes.values().any(|v| v == ns) && !self.prefixes.contains_key(p) {
                self.prefixes.insert(p.into(), ns.into());
            }
        }
    }
}

const SUPPORTED_PREDICATES: &[&str] = &[
    "http://semweb.mmlab.be/ns/rml#logicalSource",
    "http://semweb.mmlab.be/ns/rml#source",
    "http://semweb.mmlab.be/ns/rml#referenceFormulation",
    "http://semweb.mmlab.be/ns/rml#reference",
    "http://www.w3.org/ns/r2rml#subjectMap",
    "http://www.w3.org/ns/r2rml#template",
    "http://www.w3.org/ns/r2rml#class",
    "http://www.w3.org/ns/r2rml#termType",
    "http://www.w3.org/ns/r2rml#predicateObjectMap",
    "http://www.w3.org/ns/r2rml#predicate",
    "http://www.w3.org/ns/r2rml#predicateMap",
    "http://www.w3.org/ns/r2rml#constant",
    "http://www.w3.org/ns/r2rml#objectMap",
    "http://www.w3.org/ns/r2rml#object",
    "http://www.w3.org/ns/r2rml#parentTriplesMap",
    "http://www.w3.org/ns/r2rml#joinCondition",
    "http://www.w3.org/ns/r2rml#child",
    "http://www.w3.org/ns/r2rml#parent",
];

fn compact(iri: &str) -> String {
    for (p, ns) in [("rr", RR), ("rml", RML), ("ql", QL)] {
        if let Some(local) = iri.strip_prefix(ns) {
            return format!("{p}:{local}");
        }
    }
    format!("<{iri}>")
}

fn unsupported(construct: impl Into<String>) -> RmlError {
    RmlError::Unsupported { construct: construct.into() }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
enum Node {
    Iri(String),
    Blank(String),
    Literal(String),
}

impl Node {
    fn describe(&self) -> String {
        match self {
            Node::Iri(i) => format!("<{i}>"),
            Node::Blank(b) => format!("_:{b}"),
            Node::Literal(l) => format!("{l:?}"),
        }
    }
}

#[derive(Default)]
struct Graph {
    out: HashMap<Node, Vec<(String, Node)>>,
    subjects: Vec<Node>,
}

impl Graph {
    fn values(&self, node: &Node, predicate: &str) -> Vec<&Node> {
        self.out
            .get(node)
            .map(|edges| edges.iter().filter(|(p, _)| p == predicate).map(|(_, o)| o).collect())
            .unwrap_or_default()
    }

    fn has(&self, node: &Node, predicate: &str) -> bool {
        !self.values(node, predicate).is_empty()
    }
}

struct MapParser<'g> {
    graph: &'g Graph,
    map: String,
}

impl MapParser<'_> {
    fn malformed(&self, message: impl Into<String>) -> RmlError {
        RmlError::Malformed { map: self.map.clone(), message: message.into() }
    }

    fn one(&self, node: &Node, predicate: &str) -> Result<Option<&Node>, RmlError> {
        let v = self.graph.values(node, predicate);
        match v.len() {
            0 => Ok(None),
            1 => Ok(Some(v[0])),
            _ => Err(self.malformed(format!("{} given more than once", compact(predicate)))),
        }
    }

    fn required(&self, node: &Node, predicate: &str) -> Result<&Node, RmlError> {
        self.one(node, predicate)?.ok_or_else(|| self.malformed(format!("missing {}", compact(predicate))))
    }

    fn literal<'n>(&self, node: &'n Node, what: &str) -> Result<&'n str, RmlError> {
        match node {
            Node::Literal(s) => Ok(s),
            other => Err(self.malformed(format!("{what} must be a literal, found {}", other.describe()))),
        }
    }

    fn iri<'n>(&self, node: &'n Node, what: &str) -> Result<&'n str, RmlError> {
        match node {
            Node::Iri(s) => Ok(s),
            other => Err(self.malformed(format!("{what} must be an IRI, found {}", other.describe()))),
        }
    }

    fn template(&self, text: &str) -> Result<IriTemplate, RmlError> {
        IriTemplate::parse(text).map_err(|source| RmlError::Template { map: self.map.clone(), source })
    }

    fn term_type(&self, node: &Node) -> Result<Option<&str>, RmlError> {
        match self.one(node, &format!("{RR}termType"))? {
            None => Ok(None),
            Some(t) => {
                let t = self.iri(t, "rr:termType")?;
                match t.strip_prefix(RR) {
                    Some("IRI") => Ok(Some("IRI")),
                    Some("Literal") => Ok(Some("Literal")),
                    _ => Err(unsupported(compact(t))),
                }
            }
        }
    }

    fn parse(&self, node: &Node) -> Result<TriplesMapDef, RmlError> {
        let ls = self.required(node, &format!("{RML}logicalSource"))?;
        let source_path = self.literal(self.required(ls, &format!("{RML}source"))?, "rml:source")?.to_string();
        if let Some(f) = self.one(ls, &format!("{RML}referenceFormulation"))? {
            let f = self.iri(f, "rml:referenceFormulation")?;
            if f != format!("{QL}CSV") {
                return Err(unsupported(compact(f)));
            }
        }

        let sm = self.required(node, &format!("{RR}subjectMap"))?;
        if self.graph.has(sm, &format!("{RML}reference")) || self.graph.has(sm, &format!("{RR}constant")) {
            return Err(unsupported("subject map without rr:template"));
        }
        let template = self.literal(self.required(sm, &format!("{RR}template"))?, "rr:template")?;
        let subject = self.template(template)?;
        if self.term_type(sm)?.is_some_and(|t| t != "IRI") {
            return Err(unsupported("literal subject map"));
        }
        let classes = self.graph.values(sm, &format!("{RR}class"));
        if classes.len() > 1 {
            return Err(unsupported("multiple rr:class"));
        }
        let class = classes.first().map(|c| self.iri(c, "rr:class").map(String::from)).transpose()?;

        let mut poms = Vec::new();
        for pom in self.graph.values(node, &format!("{RR}predicateObjectMap")) {
            let mut predicates = Vec::new();
            for p in self.graph.values(pom, &format!("{RR}predicate")) {
                predicates.push(self.iri(p, "rr:predicate")?.to_string());
            }
            for pm in self.graph.values(pom, &format!("{RR}predicateMap")) {
                let c = self
                    .one(pm, &format!("{RR}constant"))?
                    .ok_or_else(|| unsupported("rr:predicateMap without rr:constant"))?;
                predicates.push(self.iri(c, "predicate constant")?.to_string());
            }
            let mut objects = Vec::new();
            for o in self.graph.values(pom, &format!("{RR}object")) {
                match o {
                    Node::Iri(i) => objects.push(ObjectMapDef::Template(IriTemplate::constant(i.clone()))),
                    _ => return Err(unsupported("literal rr:constant")),
                }
            }
            for om in self.graph.values(pom, &format!("{RR}objectMap")) {
                objects.push(self.object_map(om)?);
            }
            if predicates.is_empty() || objects.is_empty() {
                return Err(self.malformed("predicate-object map needs a predicate and an object"));
            }
            for p in &predicates {
                for o in &objects {
                    poms.push(PredicateObjectMapDef { predicate: p.clone(), object: o.clone() });
                }
            }
        }
        let mut def = TriplesMapDef { id: self.map.clone(), source_path, subject, class, predicate_object_maps: poms };
        def.normalize();
        Ok(def)
    }

    fn object_map(&self, om: &Node) -> Result<ObjectMapDef, RmlError> {
        let term_type = self.term_type(om)?;
        let reference = self.one(om, &format!("{RML}reference"))?;
        let template = self.one(om, &format!("{RR}template"))?;
        let constant = self.one(om, &format!("{RR}constant"))?;
        let parent = self.one(om, &format!("{RR}parentTriplesMap"))?;
        let given = [reference.is_some(), template.is_some(), constant.is_some(), parent.is_some()];
        if given.iter().filter(|g| **g).count() != 1 {
            return Err(self.malformed(
                "object map needs exactly one of rml:reference, rr:template, rr:constant, rr:parentTriplesMap",
            ));
        }
        if let Some(r) = reference {
            let attr = self.literal(r, "rml:reference")?.to_string();
            return Ok(match term_type {
                Some("IRI") => ObjectMapDef::Template(IriTemplate::new([crate::template::Segment::Slot(attr)])),
                _ => ObjectMapDef::Reference(attr),
            });
        }
        if let Some(t) = template {
            if term_type == Some("Literal") {
                return Err(unsupported("literal-valued rr:template"));
            }
            return Ok(ObjectMapDef::Template(self.template(self.literal(t, "rr:template")?)?));
        }
        if let Some(c) = constant {
            return match c {
                Node::Iri(i) => Ok(ObjectMapDef::Template(IriTemplate::constant(i.clone()))),
                _ => Err(unsupported("literal rr:constant")),
            };
        }
        let parent = self.iri(parent.expect("one object kind given"), "rr:parentTriplesMap")?.to_string();
        let mut join_conditions = Vec::new();
        for jc in self.graph.values(om, &format!("{RR}joinCondition")) {
            let child = self.literal(self.required(jc, &format!("{RR}child"))?, "rr:child")?.to_string();
            let parent = self.literal(self.required(jc, &format!("{RR}parent"))?, "rr:parent")?.to_string();
            join_conditions.push(JoinCondition { child, parent });
        }
        if join_conditions.is_empty() {
            return Err(unsupported("rr:parentTriplesMap without rr:joinCondition"));
        }
        Ok(ObjectMapDef::RefObjectMap { parent, join_conditions })
    }
}

/// Parses a Turtle document in the supported subset. Maps keep their order of
/// appearance.
pub fn parse_rml(document: &str) -> Result<TriplesMapDoc, RmlError> {
    let mut graph = Graph::default();
    let mut seen = std::collections::HashSet::new();
    let mut parser = TurtleParser::new().for_slice(document.as_bytes());
    for triple in parser.by_ref() {
        let t = triple.map_err(|e| {
            let start = e.location().start;
            RmlError::Syntax { line: start.line + 1, column: start.column + 1, message: e.message().to_string() }
        })?;
        let predicate = t.predicate.into_string();
        let is_vocab = predicate.starts_with(RR) || predicate.starts_with(RML) || predicate.starts_with(QL);
        if is_vocab && !SUPPORTED_PREDICATES.contains(&predicate.as_str()) {
            return Err(unsupported(compact(&predicate)));
        }
        let subject = match t.subject {
            NamedOrBlankNode::NamedNode(n) => Node::Iri(n.into_string()),
            NamedOrBlankNode::BlankNode(b) => Node::Blank(b.into_string()),
        };
        #[allow(unreachable_patterns)]
        let object = match t.object {
            Term::NamedNode(n) => Node::Iri(n.into_string()),
            Term::BlankNode(b) => Node::Blank(b.into_string()),
            Term::Literal(l) => Node::Literal(l.value().to_string()),
            _ => return Err(unsupported("RDF 1.2 triple term")),
        };
        if seen.insert(subject.clone()) {
            graph.subjects.push(subject.clone());
        }
        graph.out.entry(subject).or_default().push((predicate, object));
    }
    let mut doc = TriplesMapDoc {
        prefixes: parser.prefixes().map(|(p, ns)| (p.to_string(), ns.to_string())).collect(),
        maps: Vec::new(),
    };
    doc.add_standard_prefixes();

    let triples_map = Node::Iri(format!("{RR}TriplesMap"));
    for node in &graph.subjects {
        let is_map = graph.has(node, &format!("{RML}logicalSource"))
            || graph.has(node, &format!("{RR}subjectMap"))
            || graph.values(node, RDF_TYPE).contains(&&triples_map);
        if !is_map {
            continue;
        }
        let id = match node {
            Node::Iri(i) => i.clone(),
            _ => return Err(unsupported("blank-node triples map")),
        };
        doc.maps.push(MapParser { graph: &graph, map: id }.parse(node)?);
    }
    let ids: BTreeSet<&str> = doc.maps.iter().map(|m| m.id.as_str()).collect();
    for m in &doc.maps {
        for pom in &m.predicate_object_maps {
            if let ObjectMapDef::RefObjectMap { parent, .. } = &pom.object {
                if !ids.contains(parent.as_str()) {
                    return Err(RmlError::DanglingParent { map: m.id.clone(), parent: parent.clone() });
                }
            }
        }
    }
    Ok(doc)
}

/// Rules lowered from a document, and the file behind each source name.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LoweredMappings {
    pub rules: Vec<MappingRule>,
    pub source_paths: BTreeMap<String, String>,
}

impl LoweredMappings {
    pub fn source_name(&self, path: &str) -> Option<&str> {
        self.source_paths.iter().find(|(_, p)| *p == path).map(|(n, _)| n.as_str())
    }
}

fn map_local_name(id: &str) -> &str {
    id.rsplit(['#', '/']).find(|s| !s.is_empty()).unwrap_or(id)
}

/// Lowers every triples map to mapping rules over sources named after their
/// file stems. Variables are named after the attributes they bind.
pub fn lower_to_rules(
    doc: &TriplesMapDoc,
    headers: &BTreeMap<String, Vec<String>>,
) -> Result<LoweredMappings, RmlError> {
    let mut source_paths: BTreeMap<String, String> = BTreeMap::new();
    let mut name_of: BTreeMap<&str, String> = BTreeMap::new();
    for m in &doc.maps {
        if name_of.contains_key(m.source_path.as_str()) {
            continue;
        }
        let stem = sanitize_name(&source_name_for(std::path::Path::new(&m.source_path)));
        let mut name = stem.clone();
        let mut i = 2;
        while source_paths.contains_key(&name) {
            name = format!("{stem}_{i}");
            i += 1;
        }
        source_paths.insert(name.clone(), m.source_path.clone());
        name_of.insert(&m.source_path, name);
    }
    let mut rule_ids: BTreeMap<&str, String> = BTreeMap::new();
    let mut taken: BTreeSet<String> = BTreeSet::new();
    for m in &doc.maps {
        let base = sanitize_name(map_local_name(&m.id));
        let mut id = base.clone();
        let mut i = 2;
        while taken.contains(&id) {
            id = format!("{base}_{i}");
            i += 1;
        }
        taken.insert(id.clone());
        rule_ids.insert(&m.id, id);
    }

    let check = |m: &TriplesMapDef, attrs: &mut dyn Iterator<Item = &str>| -> Result<(), RmlError> {
        let header = headers.get(&m.source_path).ok_or_else(|| RmlError::MissingHeader(m.source_path.clone()))?;
        for a in attrs {
            if !header.iter().any(|h| h == a) {
                return Err(RmlError::UnknownAttribute {
                    map: m.id.clone(),
                    path: m.source_path.clone(),
                    attribute: a.to_string(),
                });
            }
        }
        Ok(())
    };
    // Bindings in header order so lowering is deterministic.
    let bindings =
        |m: &TriplesMapDef, used: &BTreeSet<String>, var: &dyn Fn(&str) -> String| -> Vec<AttributeBinding> {
            headers[&m.source_path]
                .iter()
                .filter(|h| used.contains(*h))
                .map(|h| AttributeBinding::new(h.clone(), var(h)))
                .collect()
        };

    let mut rules = Vec::new();
    for m in &doc.maps {
        check(m, &mut m.mentioned_attributes().iter().map(String::as_str))?;
        let subject_var = m
            .subject
            .slots()
            .next()
            .ok_or_else(|| RmlError::Malformed {
                map: m.id.clone(),
                message: "subject template has no attribute".into(),
            })?
            .to_string();
        let id = &rule_ids[m.id.as_str()];
        let source = &name_of[m.source_path.as_str()];

        let mut used: BTreeSet<String> = m.subject.slots().map(String::from).collect();
        let mut properties = Vec::new();
        for pom in &m.predicate_object_maps {
            match &pom.object {
                ObjectMapDef::Reference(a) => {
                    used.insert(a.clone());
                    properties.push(PropertyBinding::literal(&pom.predicate, a));
                }
                ObjectMapDef::Template(t) => {
                    used.extend(t.slots().map(String::from));
                    properties.push(PropertyBinding::iri(&pom.predicate, t.clone()));
                }
                ObjectMapDef::RefObjectMap { .. } => {}
            }
        }
        if m.class.is_some() || !properties.is_empty() {
            rules.push(MappingRule {
                id: id.clone(),
                head: RuleHead {
                    class: m.class.clone(),
                    subject_var: subject_var.clone(),
                    subject: m.subject.clone(),
                    properties,
                },
                body: vec![SourcePredicate::new(source, bindings(m, &used, &|a| a.to_string()))],
            });
        }

        let mut k = 0;
        for pom in &m.predicate_object_maps {
            let ObjectMapDef::RefObjectMap { parent, join_conditions } = &pom.object else { continue };
            k += 1;
            let pm = doc.map(parent).expect("parents resolved at parse time");
            check(pm, &mut pm.subject.slots().chain(join_conditions.iter().map(|j| j.parent.as_str())))?;
            let mut child_used: BTreeSet<String> = m.subject.slots().map(String::from).collect();
            child_used.extend(join_conditions.iter().map(|j| j.child.clone()));
            let mut joined: BTreeMap<&str, &str> = BTreeMap::new();
            for j in join_conditions {
                if joined.insert(&j.parent, &j.child).is_some_and(|c| c != j.child) {
                    return Err(unsupported("two join conditions on one parent attribute"));
                }
            }
            let children: BTreeSet<&str> = joined.values().copied().collect();
            if children.len() != joined.len() {
                return Err(unsupported("two join conditions on one child attribute"));
            }
            let mut prefix = String::from("parent.");
            while child_used.iter().any(|a| a.starts_with(&prefix)) {
                prefix.insert(0, '_');
            }
            let parent_var = |a: &str| match joined.get(a) {
                Some(child) => child.to_string(),
                None => format!("{prefix}{a}"),
            };
            let mut parent_used: BTreeSet<String> = pm.subject.slots().map(String::from).collect();
            parent_used.extend(joined.keys().map(|s| s.to_string()));
            rules.push(MappingRule {
                id: format!("{id}__ref{k}"),
                head: RuleHead {
                    class: None,
                    subject_var: subject_var.clone(),
                    subject: m.subject.clone(),
                    properties: vec![PropertyBinding::iri(&pom.predicate, pm.subject.rename_slots(parent_var))],
                },
                body: vec![
                    SourcePredicate::new(source, bindings(m, &child_used, &|a| a.to_string())),
                    SourcePredicate::new(&name_of[pm.source_path.as_str()], bindings(pm, &parent_used, &parent_var)),
                ],
            });
        }
    }
    Ok(LoweredMappings { rules, source_paths })
}

/// Writes rules back as triples maps over the given files. Single-source
/// rules become maps; a two-source rule becomes a join between the map of its
/// first predicate (child) and the map of its second (parent), reusing
/// existing maps over the same file and subject template.
pub fn raise_to_rml(rules: &[MappingRule], source_paths: &BTreeMap<String, String>) -> Result<TriplesMapDoc, RmlError> {
    let mut doc = TriplesMapDoc::default();
    doc.add_standard_prefixes();
    let path_of = |s: &str| source_paths.get(s).cloned().ok_or_else(|| RmlError::MissingSourcePath(s.to_string()));
    let not_expressible =
        |r: &MappingRule, reason: &str| RmlError::NotExpressible { rule: r.id.clone(), reason: reason.into() };
    let taken = |doc: &TriplesMapDoc, id: &str| doc.maps.iter().any(|m| m.id == id);
    let fresh = |doc: &TriplesMapDoc, base: String| {
        let mut id = base.clone();
        let mut i = 2;
        while taken(doc, &id) {
            id = format!("{base}_{i}");
            i += 1;
        }
        id
    };
    // Attribute bound to each variable in `pred`, failing when unbound.
    let to_attrs = |r: &MappingRule, pred: &SourcePredicate, t: &IriTemplate| -> Result<IriTemplate, RmlError> {
        for v in t.slots() {
            if pred.attribute_of(v).is_none() {
                return Err(not_expressible(r, &format!("variable {v:?} is not bound by {}", pred.source)));
            }
        }
        Ok(t.rename_slots(|v| pred.attribute_of(v).expect("checked").to_string()))
    };
    let subject_ok = |r: &MappingRule| r.head.subject.slots().next() == Some(r.head.subject_var.as_str());

    for r in rules.iter().filter(|r| r.body.len() == 1) {
        if !subject_ok(r) {
            return Err(not_expressible(r, "subject variable is not the first slot of the subject template"));
        }
        let pred = &r.body[0];
        let mut poms = Vec::new();
        for p in &r.head.properties {
            let object = match &p.object {
                ObjectTerm::Literal(v) => ObjectMapDef::Reference(
                    pred.attribute_of(v)
                        .ok_or_else(|| not_expressible(r, &format!("variable {v:?} is unbound")))?
                        .to_string(),
                ),
                ObjectTerm::Iri(t) => ObjectMapDef::Template(to_attrs(r, pred, t)?),
            };
            poms.push(PredicateObjectMapDef { predicate: p.property.clone(), object });
        }
        let mut def = TriplesMapDef {
            id: fresh(&doc, format!("{MAP_NAMESPACE}{}", sanitize_name(&r.id))),
            source_path: path_of(&pred.source)?,
            subject: to_attrs(r, pred, &r.head.subject)?,
            class: r.head.class.clone(),
            predicate_object_maps: poms,
        };
        def.normalize();
        doc.maps.push(def);
    }

    for r in rules.iter().filter(|r| r.body.len() != 1) {
        if r.body.len() != 2 {
            return Err(not_expressible(
                r,
                &format!("{} body predicates; only pairwise joins are expressible", r.body.len()),
            ));
        }
        if r.head.class.is_some() || r.head.properties.len() != 1 {
            return Err(not_expressible(r, "a join rule must emit exactly one linking property and no class"));
        }
        if !subject_ok(r) {
            return Err(not_expressible(r, "subject variable is not the first slot of the subject template"));
        }
        let prop = &r.head.properties[0];
        let ObjectTerm::Iri(object) = &prop.object else {
            return Err(not_expressible(r, "a join rule must link to an IRI"));
        };
        let (child, parent) = (&r.body[0], &r.body[1]);
        let child_subject = to_attrs(r, child, &r.head.subject)?;
        let parent_subject = to_attrs(r, parent, object)?;
        let mut join_conditions: Vec<JoinCondition> = child
            .bindings
            .iter()
            .filter_map(|b| {
                parent
                    .attribute_of(&b.variable)
                    .map(|pa| JoinCondition { child: b.attribute.clone(), parent: pa.to_string() })
            })
            .collect();
        if join_conditions.is_empty() {
            return Err(not_expressible(r, "the predicates share no variable"));
        }
        join_conditions.sort();
        let child_path = path_of(&child.source)?;
        let parent_path = path_of(&parent.source)?;
        let find = |doc: &TriplesMapDoc, path: &str, subject: &IriTemplate| {
            doc.maps.iter().position(|m| m.source_path == path && &m.subject == subject)
        };
        let parent_idx = match find(&doc, &parent_path, &parent_subject) {
            Some(i) => i,
            None => {
                let id = fresh(&doc, format!("{MAP_NAMESPACE}{}_parent", sanitize_name(&r.id)));
                doc.maps.push(TriplesMapDef {
                    id,
                    source_path: parent_path,
                    subject: parent_subject,
                    class: None,
                    predicate_object_maps: Vec::new(),
                });
                doc.maps.len() - 1
            }
        };
        let parent_id = doc.maps[parent_idx].id.clone();
        let child_idx = match find(&doc, &child_path, &child_subject) {
            Some(i) => i,
            None => {
                let id = fresh(&doc, format!("{MAP_NAMESPACE}{}_child", sanitize_name(&r.id)));
                doc.maps.push(TriplesMapDef {
                    id,
                    source_path: child_path,
                    subject: child_subject,
                    class: None,
                    predicate_object_maps: Vec::new(),
                });
                doc.maps.len() - 1
            }
        };
        let def = &mut doc.maps[child_idx];
        def.predicate_object_maps.push(PredicateObjectMapDef {
            predicate: prop.property.clone(),
            object: ObjectMapDef::RefObjectMap { parent: parent_id, join_conditions },
        });
        def.normalize();
    }
    Ok(doc)
}

struct Writer<'a> {
    prefixes: &'a BTreeMap<String, String>,
    out: String,
}

impl Writer<'_> {
    fn iri(&self, iri: &str) -> String {
        let valid_local = |l: &str| {
            let mut cs = l.chars();
            cs.next().is_some_and(|c| c.is_ascii_alphabetic() || c == '_')
                && cs.all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-')
        };
        let best = self
            .prefixes
            .iter()
            .filter_map(|(p, ns)| iri.strip_prefix(ns.as_str()).filter(|l| valid_local(l)).map(|l| (p, l)))
            .min_by_key(|(_, l)| l.len());
        match best {
            Some((p, l)) => format!("{p}:{l}"),
            None => format!("<{}>", iri.replace('\\', "\\u005C").replace('>', "\\u003E")),
        }
    }

    fn string(value: &str) -> String {
        let mut s = String::with_capacity(value.len() + 2);
        s.push('"');
        for c in value.chars() {
            match c {
                '"' => s.push_str("\\\""),
                '\\' => s.push_str("\\\\"),
                '\n' => s.push_str("\\n"),
                '\r' => s.push_str("\\r"),
                '\t' => s.push_str("\\t"),
                c => s.push(c),
            }
        }
        s.push('"');
        s
    }

    fn object_map(&self, o: &ObjectMapDef) -> String {
        match o {
            ObjectMapDef::Reference(a) => format!("[ rml:reference {} ]", Self::string(a)),
            ObjectMapDef::Template(t) if t.slot_count() == 0 => format!("[ rr:constant {} ]", self.iri(&t.to_string())),
            ObjectMapDef::Template(t) => format!("[ rr:template {} ]", Self::string(&t.to_string())),
            ObjectMapDef::RefObjectMap { parent, join_conditions } => {
                let joins = join_conditions
                    .iter()
                    .map(|j| format!("[ rr:child {} ; rr:parent {} ]", Self::string(&j.child), Self::string(&j.parent)))
                    .collect::<Vec<_>>()
                    .join(" , ");
                format!(
                    "[\n            rr:parentTriplesMap {} ;\n            rr:joinCondition {}\n        ]",
                    self.iri(parent),
                    joins
                )
            }
        }
    }
}

/// Deterministic Turtle: prefixes sorted, maps in order, predicate-object
/// maps sorted, nested maps as blank-node property lists.
pub fn serialize_turtle(doc: &TriplesMapDoc) -> String {
    let mut prefixes = doc.prefixes.clone();
    for (p, ns) in [("rr", RR), ("rml", RML), ("ql", QL)] {
        if !prefixes.values().any(|v| v == ns) {
            prefixes.insert(p.into(), ns.into());
        }
    }
    let mut w = Writer { prefixes: &prefixes, out: String::new() };
    for (p, ns) in &prefixes {
        let _ = writeln!(w.out, "@prefix {p}: <{ns}> .");
    }
    for m in &doc.maps {
        let mut body = String::new();
        let _ = write!(body, "\n{} a rr:TriplesMap ;\n", w.iri(&m.id));
        let _ = write!(
            body,
            "    rml:logicalSource [\n        rml:source {} ;\n        rml:referenceFormulation ql:CSV\n    ] ;\n",
            Writer::string(&m.source_path)
        );
        let _ = write!(body, "    rr:subjectMap [\n        rr:template {}", Writer::string(&m.subject.to_string()));
        if let Some(c) = &m.class {
            let _ = write!(body, " ;\n        rr:class {}", w.iri(c));
        }
        body.push_str("\n    ]");
        for pom in &m.predicate_object_maps {
            let _ = write!(
                body,
                " ;\n    rr:predicateObjectMap [\n        rr:predicate {} ;\n        rr:objectMap {}\n    ]",
                w.iri(&pom.predicate),
                w.object_map(&pom.object)
            );
        }
        body.push_str(" .\n");
        w.out.push_str(&body);
    }
    w.out
}

/// Whether two rule lists are equal as multisets once rule ids are ignored
/// and variables are renamed canonically.
pub fn rules_isomorphic(a: &[MappingRule], b: &[MappingRule]) -> bool {
    fn canonical(r: &MappingRule) -> String {
        let mut names: BTreeMap<&str, String> = BTreeMap::new();
        for (i, p) in r.body.iter().enumerate() {
            for b in &p.bindings {
                names.entry(&b.variable).or_insert_with(|| format!("{i}:{}", b.attribute));
            }
        }
        let rename = |v: &str| names.get(v).cloned().unwrap_or_else(|| format!("?{v}"));
        let mut properties: Vec<PropertyBinding> = r
            .head
            .properties
            .iter()
            .map(|p| PropertyBinding {
                property: p.property.clone(),
                object: match &p.object {
                    ObjectTerm::Literal(v) => ObjectTerm::Literal(rename(v)),
                    ObjectTerm::Iri(t) => ObjectTerm::Iri(t.rename_slots(|v| rename(v))),
                },
            })
            .collect();
        properties.sort();
        properties.dedup();
        let body: Vec<(String, Vec<AttributeBinding>)> = r
            .body
            .iter()
            .map(|p| {
                let mut bs: Vec<AttributeBinding> = p
                    .bindings
                    .iter()
                    .map(|b| AttributeBinding::new(b.attribute.clone(), rename(&b.variable)))
                    .collect();
                bs.sort();
                (p.source.clone(), bs)
            })
            .collect();
        let head = (
            &r.head.class,
            rename(&r.head.subject_var),
            r.head.subject.rename_slots(|v| rename(v)).to_string(),
            properties,
        );
        serde_json::to_string(&(head, body)).expect("serializable")
    }
    let mut ca: Vec<String> = a.iter().map(canonical).collect();
    let mut cb: Vec<String> = b.iter().map(canonical).collect();
    ca.sort();
    cb.sort();
    ca == cb
}

#[cfg(test)]
mod tests {
    use super::*;

    const GENES: &str = r#"
@prefix rr: <http://www.w3.org/ns/r2rml#> .
@prefix rml: <http://semweb.mmlab.be/ns/rml#> .
@prefix ql: <http://semweb.mmlab.be/ns/ql#> .
@prefix ex: <http://example.com/> .

ex:GeneMap a rr:TriplesMap ;
    rml:logicalSource [ rml:source "data/genes.csv" ; rml:referenceFormulation ql:CSV ] ;
    rr:subjectMap [ rr:template "http://example.com/gene/{ENSG}" ; rr:class ex:Gene ] ;
    rr:predicateObjectMap [ rr:predicate ex:symbol ; rr:objectMap [ rml:reference "SYMBOL" ] ] ;
    rr:predicateObjectMap [ rr:predicate ex:acc ; rr:objectMap [ rml:reference "ACC" ] ] ;
    rr:predicateObjectMap [
        rr:predicate ex:onChromosome ;
        rr:objectMap [
            rr:parentTriplesMap ex:ChromMap ;
            rr:joinCondition [ rr:child "Genename" ; rr:parent "Genename" ]
        ]
    ] .

ex:ChromMap a rr:TriplesMap ;
    rml:logicalSource [ rml:source "data/chrom.csv" ; rml:referenceFormulation ql:CSV ] ;
    rr:subjectMap [ rr:template "http://example.com/chrom/{CHROM}" ] .
"#;

    fn headers() -> BTreeMap<String, Vec<String>> {
        BTreeMap::from([
            (
                "data/genes.csv".into(),
                vec!["ENSG".into(), "SYMBOL".into(), "ACC".into(), "Genename".into(), "X".into()],
            ),
            ("data/chrom.csv".into(), vec!["CHROM".into(), "Genename".into(), "Band".into()]),
        ])
    }

    #[test]
    fn parses_maps_in_order() {
        let doc = parse_rml(GENES).unwrap();
        assert_eq!(doc.maps.len(), 2);
        assert_eq!(doc.maps[0].id, "http://example.com/GeneMap");
        assert_eq!(doc.maps[0].predicate_object_maps.len(), 3);
        assert_eq!(doc.maps[0].class.as_deref(), Some("http://example.com/Gene"));
        let refs: Vec<_> = doc.maps[0]
            .predicate_object_maps
            .iter()
            .filter_map(|p| match &p.object {
                ObjectMapDef::RefObjectMap { parent, join_conditions } => Some((parent.clone(), join_conditions.len())),
                _ => None,
            })
            .collect();
        assert_eq!(refs, [("http://example.com/ChromMap".to_string(), 1)]);
    }

    #[test]
    fn lowers_main_and_join_rules() {
        let doc = parse_rml(GENES).unwrap();
        let low = lower_to_rules(&doc, &headers()).unwrap();
        assert_eq!(low.source_paths["genes"], "data/genes.csv");
        let ids: Vec<&str> = low.rules.iter().map(|r| r.id.as_str()).collect();
        assert_eq!(ids, ["GeneMap", "GeneMap__ref1"]);
        let main = &low.rules[0];
        assert_eq!(main.body.len(), 1);
        assert_eq!(main.body[0].attributes().collect::<Vec<_>>(), ["ENSG", "SYMBOL", "ACC"]);
        let join = &low.rules[1];
        assert_eq!(join.body.len(), 2);
        assert_eq!(join.join_variables().len(), 1);
        assert!(crate::model::validate_dis(&crate::model::Dis {
            ontology: None,
            sources: headers()
                .into_iter()
                .map(|(p, h)| {
                    let name = low.source_name(&p).unwrap().to_string();
                    let sig = crate::model::SourceSignature::new(&name, h).unwrap();
                    (name, std::sync::Arc::new(crate::model::SourceRelation::empty(sig)))
                })
                .collect(),
            mappings: low.rules.clone(),
        })
        .is_valid());
    }

    #[test]
    fn unsupported_constructs_are_named() {
        let doc = r#"@prefix rr: <http://www.w3.org/ns/r2rml#> .
<http://ex/m> rr:logicalTable [ rr:sqlQuery "SELECT 1" ] ."#;
        let err = parse_rml(doc).unwrap_err();
        assert!(matches!(err, RmlError::Unsupported { .. }));
        let doc = r#"@prefix rr: <http://www.w3.org/ns/r2rml#> .
<http://ex/m> rr:sqlQuery "SELECT 1" ."#;
        assert_eq!(parse_rml(doc).unwrap_err(), unsupported("rr:sqlQuery"));
        let json = GENES.replace("ql:CSV", "ql:JSONPath");
        assert_eq!(parse_rml(&json).unwrap_err(), unsupported("ql:JSONPath"));
    }

    #[test]
    fn syntax_errors_carry_position() {
        let err = parse_rml("@prefix rr: <http://www.w3.org/ns/r2rml#> .\n<a> rr:x").unwrap_err();
        assert!(matches!(err, RmlError::Syntax { line: 2, .. }), "{err:?}");
    }

    #[test]
    fn dangling_parent_is_reported() {
        let text = GENES.replace("rr:parentTriplesMap ex:ChromMap", "rr:parentTriplesMap ex:Nope");
        assert!(matches!(parse_rml(&text).unwrap_err(), RmlError::DanglingParent { .. }));
    }

    #[test]
    fn serialize_round_trips() {
        let doc = parse_rml(GENES).unwrap();
        let text = serialize_turtle(&doc);
        assert_eq!(parse_rml(&text).unwrap(), doc);
        assert_eq!(serialize_turtle(&parse_rml(&text).unwrap()), text);

        let empty = serialize_turtle(&TriplesMapDoc::default());
        assert!(empty.lines().all(|l| l.starts_with("@prefix")));
        assert!(parse_rml(&empty).unwrap().maps.is_empty());
    }

    #[test]
    fn raise_then_lower_is_isomorphic() {
        let doc = parse_rml(GENES).unwrap();
        let low = lower_to_rules(&doc, &headers()).unwrap();
        let raised = raise_to_rml(&low.rules, &low.source_paths).unwrap();
        let again = lower_to_rules(&parse_rml(&serialize_turtle(&raised)).unwrap(), &headers()).unwrap();
        assert!(rules_isomorphic(&low.rules, &again.rules), "{:#?}\n{:#?}", low.rules, again.rules);
    }

    #[test]
    fn three_way_join_is_not_expressible() {
        let doc = parse_rml(GENES).unwrap();
        let mut low = lower_to_rules(&doc, &headers()).unwrap();
        let extra = low.rules[1].body[1].clone();
        low.rules[1].body.push(extra);
        assert!(matches!(raise_to_rml(&low.rules, &low.source_paths), Err(RmlError::NotExpressible { .. })));
    }
}
