//! The data integration system ⟨ontology, sources, mappings⟩ and its
//! well-formedness checks.
//!
//! Mapping rules are safe GAV conjunctive rules: a head that builds a subject
//! (and optionally a class membership and property values) from variables,
//! and a body of source predicates binding source attributes to variables.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::template::IriTemplate;

/// Empty cells are the null marker.
pub const NULL: &str = "";

#[inline]
pub fn is_null(value: &str) -> bool {
    value.is_empty()
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ModelError {
    #[error("source {source_name:?}: attribute names must be non-empty")]
    EmptyAttribute { source_name: String },
    #[error("source {source_name:?}: duplicate attribute {attribute:?}")]
    DuplicateAttribute { source_name: String, attribute: String },
    #[error("source {source_name:?}: row {row} has {found} values, expected {expected}")]
    RowArity { source_name: String, row: usize, expected: usize, found: usize },
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ontology {
    pub classes: BTreeSet<String>,
    pub properties: BTreeSet<String>,
    /// (property, domain class) pairs. Stored, never reasoned over.
    pub axioms: Vec<(String, String)>,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SourceSignature {
    name: String,
    attributes: Vec<String>,
}

impl SourceSignature {
    pub fn new(
        name: impl Into<String>,
        attributes: impl IntoIterator<Item = impl Into<String>>,
    ) -> Result<Self, ModelError> {
        let name = name.into();
        let attributes: Vec<String> = attributes.into_iter().map(Into::into).collect();
        let mut seen = HashSet::new();
        for a in &attributes {
            if a.is_empty() {
                return Err(ModelError::EmptyAttribute { source_name: name });
            }
            if !seen.insert(a.as_str()) {
                return Err(ModelError::DuplicateAttribute { source_name: name, attribute: a.clone() });
            }
        }
        Ok(SourceSignature { name, attributes })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn attributes(&self) -> &[String] {
        &self.attributes
    }

    pub fn arity(&self) -> usize {
        self.attributes.len()
    }

    pub fn position(&self, attribute: &str) -> Option<usize> {
        self.attributes.iter().position(|a| a == attribute)
    }

    pub fn with_name(&self, name: impl Into<String>) -> SourceSignature {
        SourceSignature { name: name.into(), attributes: self.attributes.clone() }
    }
}

/// A named tabular extension. Every row has exactly one value per attribute.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SourceRelation {
    signature: SourceSignature,
    rows: Vec<Vec<String>>,
}

impl SourceRelation {
    pub fn new(signature: SourceSignature, rows: Vec<Vec<String>>) -> Result<Self, ModelError> {
        let expected = signature.arity();
        if let Some((row, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != expected) {
            return Err(ModelError::RowArity { source_name: signature.name.clone(), row, expected, found: r.len() });
        }
        Ok(SourceRelation { signature, rows })
    }

    pub fn empty(signature: SourceSignature) -> Self {
        SourceRelation { signature, rows: Vec::new() }
    }

    pub fn signature(&self) -> &SourceSignature {
        &self.signature
    }

    pub fn name(&self) -> &str {
        self.signature.name()
    }

    pub fn attributes(&self) -> &[String] {
        self.signature.attributes()
    }

    pub fn rows(&self) -> &[Vec<String>] {
        &self.rows
    }

    pub fn into_rows(self) -> Vec<Vec<String>> {
        self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn renamed(&self, name: impl Into<String>) -> SourceRelation {
        SourceRelation { signature: self.signature.with_name(name), rows: self.rows.clone() }
    }

    /// Row multiset comparison is rarely what callers want; this compares the
    /// distinct row sets.
    pub fn row_set(&self) -> BTreeSet<&[String]> {
        self.rows.iter().map(Vec::as_slice).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct AttributeBinding {
    pub attribute: String,
    pub variable: String,
}

impl AttributeBinding {
    pub fn new(attribute: impl Into<String>, variable: impl Into<String>) -> Self {
        AttributeBinding { attribute: attribute.into(), variable: variable.into() }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SourcePredicate {
    pub source: String,
    pub bindings: Vec<AttributeBinding>,
}

impl SourcePredicate {
    pub fn new(source: impl Into<String>, bindings: impl IntoIterator<Item = AttributeBinding>) -> Self {
        SourcePredicate { source: source.into(), bindings: bindings.into_iter().collect() }
    }

    pub fn variables(&self) -> impl Iterator<Item = &str> {
        self.bindings.iter().map(|b| b.variable.as_str())
    }

    pub fn attributes(&self) -> impl Iterator<Item = &str> {
        self.bindings.iter().map(|b| b.attribute.as_str())
    }

    pub fn attribute_of(&self, variable: &str) -> Option<&str> {
        self.bindings.iter().find(|b| b.variable == variable).map(|b| b.attribute.as_str())
    }
}

/// Object position of a head property.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObjectTerm {
    /// Plain string literal holding the variable's value.
    Literal(String),
    /// IRI built from a template over head variables (zero slots = constant IRI).
    Iri(IriTemplate),
}

impl ObjectTerm {
    pub fn variables(&self) -> Vec<&str> {
        match self {
            ObjectTerm::Literal(v) => vec![v.as_str()],
            ObjectTerm::Iri(t) => t.slots().collect(),
        }
    }

    pub fn is_literal(&self) -> bool {
        matches!(self, ObjectTerm::Literal(_))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PropertyBinding {
    pub property: String,
    pub object: ObjectTerm,
}

impl PropertyBinding {
    pub fn literal(property: impl Into<String>, variable: impl Into<String>) -> Self {
        PropertyBinding { property: property.into(), object: ObjectTerm::Literal(variable.into()) }
    }

    pub fn iri(property: impl Into<String>, template: IriTemplate) -> Self {
        PropertyBinding { property: property.into(), object: ObjectTerm::Iri(template) }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RuleHead {
    pub class: Option<String>,
    pub subject_var: String,
    pub subject: IriTemplate,
    pub properties: Vec<PropertyBinding>,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct MappingRule {
    pub id: String,
    pub head: RuleHead,
    pub body: Vec<SourcePredicate>,
}

impl MappingRule {
    /// Subject variable, subject template slots and every property variable.
    pub fn head_variables(&self) -> BTreeSet<String> {
        let head = &self.head;
        let mut vars = BTreeSet::new();
        vars.insert(head.subject_var.clone());
        vars.extend(head.subject.slots().map(str::to_string));
        for p in &head.properties {
            vars.extend(p.object.variables().into_iter().map(str::to_string));
        }
        vars
    }

    /// Variables bound in at least two distinct body predicates.
    pub fn join_variables(&self) -> BTreeSet<String> {
        let mut count: BTreeMap<&str, usize> = BTreeMap::new();
        for pred in &self.body {
            let distinct: BTreeSet<&str> = pred.variables().collect();
            for v in distinct {
                *count.entry(v).or_default() += 1;
            }
        }
        count.into_iter().filter(|(_, n)| *n >= 2).map(|(v, _)| v.to_string()).collect()
    }

    pub fn body_variables(&self) -> BTreeSet<String> {
        self.body.iter().flat_map(|p| p.variables().map(str::to_string)).collect()
    }

    pub fn is_single_source(&self) -> bool {
        self.body.len() == 1
    }
}

/// ⟨ontology, sources, mappings⟩. Sources are shared so rewritten systems can
/// reuse untouched extensions without copying rows.
#[derive(Debug, Clone, Default)]
pub struct Dis {
    pub ontology: Option<Ontology>,
    pub sources: BTreeMap<String, Arc<SourceRelation>>,
    pub mappings: Vec<MappingRule>,
}

impl Dis {
    pub fn new(sources: impl IntoIterator<Item = SourceRelation>, mappings: Vec<MappingRule>) -> Self {
        Dis {
            ontology: None,
            sources: sources.into_iter().map(|s| (s.name().to_string(), Arc::new(s))).collect(),
            mappings,
        }
    }

    pub fn source(&self, name: &str) -> Option<&SourceRelation> {
        self.sources.get(name).map(Arc::as_ref)
    }

    pub fn validate(&self) -> ValidationReport {
        validate_dis(self)
    }
}

/// Assignment of values to variables.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct VarMap {
    assignments: HashMap<String, String>,
}

impl VarMap {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, variable: impl Into<String>, value: impl Into<String>) {
        self.assignments.insert(variable.into(), value.into());
    }

    pub fn get(&self, variable: &str) -> Option<&str> {
        self.assignments.get(variable).map(String::as_str)
    }
}

impl<K: Into<String>, V: Into<String>> FromIterator<(K, V)> for VarMap {
    fn from_iter<I: IntoIterator<Item = (K, V)>>(iter: I) -> Self {
        VarMap { assignments: iter.into_iter().map(|(k, v)| (k.into(), v.into())).collect() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ViolationKind {
    InvalidOntology,
    SourceNameMismatch,
    DuplicateRuleId,
    EmptyBody,
    EmptyTemplate,
    MissingSource,
    UnknownAttribute,
    DuplicateAttributeBinding,
    DuplicateVariableBinding,
    Safety,
    UnknownClass,
    UnknownProperty,
}

impl fmt::Display for ViolationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = serde_json::to_value(self).ok();
        f.write_str(s.as_ref().and_then(|v| v.as_str()).unwrap_or("?"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Violation {
    pub rule: Option<String>,
    pub kind: ViolationKind,
    pub source: Option<String>,
    pub detail: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}]", self.kind)?;
        if let Some(r) = &self.rule {
            write!(f, " rule {r}")?;
        }
        if let Some(s) = &self.source {
            write!(f, " source {s}")?;
        }
        write!(f, ": {}", self.detail)
    }
}

/// Violations sorted by rule id, then kind.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn count(&self, kind: ViolationKind) -> usize {
        self.violations.iter().filter(|v| v.kind == kind).count()
    }
}

pub fn validate_dis(dis: &Dis) -> ValidationReport {
    let mut out = Vec::new();
    let mut push = |rule: Option<&str>, kind, source: Option<&str>, detail: String| {
        out.push(Violation { rule: rule.map(str::to_string), kind, source: source.map(str::to_string), detail })
    };

    if let Some(o) = &dis.ontology {
        for (p, c) in &o.axioms {
            if !o.properties.contains(p) || !o.classes.contains(c) {
                push(None, ViolationKind::InvalidOntology, None, format!("axiom ({p}, {c}) uses undeclared terms"));
            }
        }
    }
    for (key, rel) in &dis.sources {
        if key != rel.name() {
            push(
                None,
                ViolationKind::SourceNameMismatch,
                Some(key),
                format!("registered as {key:?} but named {:?}", rel.name()),
            );
        }
    }

    let mut ids = HashSet::new();
    for rule in &dis.mappings {
        let rid = Some(rule.id.as_str());
        if !ids.insert(rule.id.as_str()) {
            push(rid, ViolationKind::DuplicateRuleId, None, "rule id used more than once".into());
        }
        if rule.body.is_empty() {
            push(rid, ViolationKind::EmptyBody, None, "rule body is empty".into());
        }
        if rule.head.subject.is_empty() {
            push(rid, ViolationKind::EmptyTemplate, None, "subject template has no segments".into());
        }
        for p in &rule.head.properties {
            if let ObjectTerm::Iri(t) = &p.object {
                if t.is_empty() {
                    push(
                        rid,
                        ViolationKind::EmptyTemplate,
                        None,
                        format!("object template of {} is empty", p.property),
                    );
                }
            }
        }
        for pred in &rule.body {
            let src = Some(pred.source.as_str());
            let sig = dis.sources.get(&pred.source).map(|s| s.signature());
            if sig.is_none() {
                push(rid, ViolationKind::MissingSource, src, format!("source {:?} is not defined", pred.source));
            }
            let mut attrs = HashSet::new();
            let mut vars = HashSet::new();
            for b in &pred.bindings {
                if let Some(sig) = sig {
                    if sig.position(&b.attribute).is_none() {
                        push(
                            rid,
                            ViolationKind::UnknownAttribute,
                            src,
                            format!("attribute {:?} not in signature", b.attribute),
                        );
                    }
                }
                if !attrs.insert(b.attribute.as_str()) {
                    push(
                        rid,
                        ViolationKind::DuplicateAttributeBinding,
                        src,
                        format!("attribute {:?} bound twice", b.attribute),
                    );
                }
                if !vars.insert(b.variable.as_str()) {
                    push(
                        rid,
                        ViolationKind::DuplicateVariableBinding,
                        src,
                        format!("variable {:?} bound to two attributes", b.variable),
                    );
                }
            }
        }
        let body_vars = rule.body_variables();
        for v in rule.head_variables() {
            if !body_vars.contains(&v) {
                push(rid, ViolationKind::Safety, None, format!("head variable {v:?} does not occur in the body"));
            }
        }
        if let Some(o) = &dis.ontology {
            if let Some(c) = &rule.head.class {
                if !o.classes.contains(c) {
                    push(rid, ViolationKind::UnknownClass, None, format!("class <{c}> not in ontology"));
                }
            }
            for p in &rule.head.properties {
                if !o.properties.contains(&p.property) {
                    push(
                        rid,
                        ViolationKind::UnknownProperty,
                        None,
                        format!("property <{}> not in ontology", p.property),
                    );
                }
            }
        }
    }
    out.sort();
    ValidationReport { violations: out }
}
