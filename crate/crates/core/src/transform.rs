//! Source-level rewrites that keep the materialized graph unchanged.
//!
//! * Projection: each body predicate reads a duplicate-free projection of its
//!   source onto the attributes it binds.
//! * Join pushdown: bindings whose variable is neither in the head nor shared
//!   between predicates are dropped.
//! * Merge: single-source rules producing the same kind of subject with the
//!   same properties are replaced by one rule over the union of their
//!   sources.
//!
//! [`optimize`] applies pushdown, merge and projection in that order, pass
//! after pass, until nothing changes.

use std::cell::RefCell;
use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::model::{AttributeBinding, Dis, MappingRule, ObjectTerm, SourcePredicate, SourceRelation, SourceSignature};
use crate::store::{csv_size, project_distinct, union_rename, CsvDialect, ProjectionSpec};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DerivedProjection {
    pub from: String,
    pub to: String,
    pub keep_attributes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DroppedBindings {
    pub predicate: usize,
    pub source: String,
    pub bindings: Vec<AttributeBinding>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "step", rename_all = "kebab-case")]
pub enum StepAction {
    Project {
        rule: String,
        projections: Vec<DerivedProjection>,
    },
    PushdownJoin {
        rule: String,
        dropped: Vec<DroppedBindings>,
    },
    Merge {
        rules: Vec<String>,
        merged_rule: String,
        target_source: String,
        /// Per merged rule: its source attribute → merged attribute.
        renames: BTreeMap<String, BTreeMap<String, String>>,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlanStep {
    pub pass: usize,
    #[serde(flatten)]
    pub action: StepAction,
    pub note: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TransformPlan {
    pub steps: Vec<PlanStep>,
    /// Passes run, counting the final one that changed nothing.
    pub passes: usize,
    pub dropped_sources: Vec<String>,
    pub warnings: Vec<String>,
}

impl TransformPlan {
    pub fn effective_steps(&self) -> usize {
        self.steps.len() + self.dropped_sources.len()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourceStats {
    /// Input sources this one was derived from, once per contributing use.
    pub origins: Vec<String>,
    pub rows_before: u64,
    pub rows_after: u64,
    pub bytes_before: u64,
    pub bytes_after: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TransformStats {
    pub sources: BTreeMap<String, SourceStats>,
    pub total_rows_before: u64,
    pub total_rows_after: u64,
    pub total_bytes_before: u64,
    pub total_bytes_after: u64,
}

#[derive(Debug, Clone)]
pub struct TransformResult {
    pub dis: Dis,
    pub plan: TransformPlan,
    pub stats: TransformStats,
}

/// The serializable part of a [`TransformResult`].
#[derive(Debug, Serialize)]
pub struct TransformReport<'a> {
    pub plan: &'a TransformPlan,
    pub stats: &'a TransformStats,
}

impl TransformResult {
    pub fn report(&self) -> TransformReport<'_> {
        TransformReport { plan: &self.plan, stats: &self.stats }
    }

    pub fn report_json(&self) -> String {
        serde_json::to_string_pretty(&self.report()).expect("report serializes")
    }
}

/// Replaces characters outside `[A-Za-z0-9_.-]` with `_`.
pub fn sanitize_name(name: &str) -> String {
    let s: String =
        name.chars().map(|c| if c.is_ascii_alphanumeric() || matches!(c, '_' | '.' | '-') { c } else { '_' }).collect();
    if s.is_empty() {
        "_".into()
    } else {
        s
    }
}

fn fresh_name(base: &str, taken: impl Fn(&str) -> bool) -> String {
    let base = sanitize_name(base);
    if !taken(&base) {
        return base;
    }
    (2..).map(|i| format!("{base}_{i}")).find(|n| !taken(n)).expect("unbounded suffixes")
}

fn local_name(iri: &str) -> &str {
    iri.rsplit(['#', '/']).find(|s| !s.is_empty()).unwrap_or(iri)
}

/// Drops every binding whose variable is neither a head variable nor shared
/// by two body predicates. A predicate left with no bindings keeps its first
/// one, so an empty source still blocks the rule.
pub fn rule2_pushdown_join(rule: &MappingRule) -> MappingRule {
    pushdown_with_report(rule).0
}

/// [`rule2_pushdown_join`] together with the bindings it dropped.
pub fn pushdown_with_report(rule: &MappingRule) -> (MappingRule, Vec<DroppedBindings>) {
    let mut keep = rule.head_variables();
    keep.extend(rule.join_variables());
    let mut out = rule.clone();
    let mut dropped = Vec::new();
    for (i, pred) in out.body.iter_mut().enumerate() {
        let (kept, gone): (Vec<_>, Vec<_>) = pred.bindings.iter().cloned().partition(|b| keep.contains(&b.variable));
        let kept = if kept.is_empty() { pred.bindings[..1].to_vec() } else { kept };
        if kept.len() != pred.bindings.len() {
            let gone = gone.into_iter().filter(|b| !kept.contains(b)).collect();
            dropped.push(DroppedBindings { predicate: i, source: pred.source.clone(), bindings: gone });
            pred.bindings = kept;
        }
    }
    (out, dropped)
}

/// A kept attribute list and its projection, absent when the projection would
/// reproduce the source.
type Candidate = (Vec<String>, Option<(SourceRelation, u64)>);
/// A rule index and its head variables in canonical order.
type Member = (usize, Vec<String>);
/// Property, literal flag, object template shape, object variables.
type HeadProperty<'a> = (&'a str, bool, Vec<Option<String>>, Vec<&'a str>);

struct Engine {
    dis: Dis,
    original: BTreeMap<String, Arc<SourceRelation>>,
    origins: BTreeMap<String, Vec<String>>,
    plan: TransformPlan,
    warnings: BTreeSet<String>,
    pass: usize,
    dialect: CsvDialect,
    /// Sources known to hold no duplicate rows.
    distinct: HashSet<String>,
    sizes: RefCell<HashMap<String, u64>>,
}

impl Engine {
    fn new(dis: Dis) -> Self {
        let origins = dis.sources.keys().map(|k| (k.clone(), vec![k.clone()])).collect();
        Engine {
            original: dis.sources.clone(),
            dis,
            origins,
            plan: TransformPlan::default(),
            warnings: BTreeSet::new(),
            pass: 1,
            dialect: CsvDialect::default(),
            distinct: HashSet::new(),
            sizes: RefCell::new(HashMap::new()),
        }
    }

    fn size_of(&self, name: &str) -> u64 {
        if let Some(n) = self.sizes.borrow().get(name) {
            return *n;
        }
        let n = csv_size(&self.dis.sources[name], self.dialect);
        self.sizes.borrow_mut().insert(name.to_string(), n);
        n
    }

    fn step(&mut self, action: StepAction, note: String) {
        self.plan.steps.push(PlanStep { pass: self.pass, action, note });
    }

    fn add_source(&mut self, rel: SourceRelation, origins: Vec<String>, size: Option<u64>) {
        self.origins.insert(rel.name().to_string(), origins);
        self.distinct.insert(rel.name().to_string());
        match size {
            Some(n) => self.sizes.borrow_mut().insert(rel.name().to_string(), n),
            None => self.sizes.borrow_mut().remove(rel.name()),
        };
        self.dis.sources.insert(rel.name().to_string(), Arc::new(rel));
    }

    fn referenced(&self) -> BTreeSet<&str> {
        self.dis.mappings.iter().flat_map(|r| r.body.iter().map(|p| p.source.as_str())).collect()
    }

    fn drop_unreferenced(&mut self) -> bool {
        let used: BTreeSet<String> = self.referenced().into_iter().map(String::from).collect();
        let unused: Vec<String> = self.dis.sources.keys().filter(|k| !used.contains(*k)).cloned().collect();
        for name in &unused {
            self.dis.sources.remove(name);
            self.origins.remove(name);
            self.distinct.remove(name);
            self.sizes.borrow_mut().remove(name);
        }
        let changed = !unused.is_empty();
        self.plan.dropped_sources.extend(unused);
        changed
    }

    fn apply_pushdown(&mut self) -> bool {
        let mut changed = false;
        for idx in 0..self.dis.mappings.len() {
            let (rule, dropped) = pushdown_with_report(&self.dis.mappings[idx]);
            if dropped.is_empty() {
                continue;
            }
            let n: usize = dropped.iter().map(|d| d.bindings.len()).sum();
            let note = format!("{n} binding(s) neither in the head nor joined");
            self.dis.mappings[idx] = rule;
            self.step(StepAction::PushdownJoin { rule: self.dis.mappings[idx].id.clone(), dropped }, note);
            changed = true;
        }
        changed
    }

    fn apply_projection(&mut self) -> bool {
        // Every (rule, predicate) that reads each source, with its attributes in
        // source order.
        let mut uses: BTreeMap<String, Vec<(usize, usize, Vec<String>)>> = BTreeMap::new();
        for (ri, rule) in self.dis.mappings.iter().enumerate() {
            for (pi, pred) in rule.body.iter().enumerate() {
                let Some(rel) = self.dis.sources.get(&pred.source) else { continue };
                let bound: HashSet<&str> = pred.attributes().collect();
                let attrs = rel.attributes().iter().filter(|a| bound.contains(a.as_str())).cloned().collect();
                uses.entry(pred.source.clone()).or_default().push((ri, pi, attrs));
            }
        }
        let mut per_rule: BTreeMap<usize, Vec<DerivedProjection>> = BTreeMap::new();
        for (source, source_uses) in uses {
            let rel = self.dis.sources[&source].clone();
            let mut sets: Vec<Vec<String>> = Vec::new();
            for (_, _, attrs) in &source_uses {
                if !sets.contains(attrs) {
                    sets.push(attrs.clone());
                }
            }
            let known_distinct = self.distinct.contains(&source);
            // None when the projection would reproduce the source.
            let project = |keep: &[String]| {
                let full = keep.len() == rel.attributes().len();
                if full && known_distinct {
                    return None;
                }
                let p = project_distinct(&rel, &ProjectionSpec::new(&source, keep.iter().cloned()))
                    .expect("bound attributes exist");
                (!full || p.len() != rel.len()).then(|| {
                    let size = csv_size(&p, self.dialect);
                    (p, size)
                })
            };
            let mut candidates: Vec<Candidate> = sets
                .into_iter()
                .map(|s| {
                    let p = project(&s);
                    (s, p)
                })
                .collect();
            let original_bytes = self.size_of(&source);
            let mut total: u64 = candidates.iter().filter_map(|(_, p)| p.as_ref()).map(|(_, n)| n).sum();
            if candidates.iter().any(|(_, p)| p.is_none()) {
                total += original_bytes;
            }
            let mut shared = false;
            if candidates.len() > 1 && total > original_bytes {
                let all: BTreeSet<&str> = candidates.iter().flat_map(|(k, _)| k.iter().map(String::as_str)).collect();
                let keep: Vec<String> = rel.attributes().iter().filter(|a| all.contains(a.as_str())).cloned().collect();
                let p = project(&keep);
                candidates = vec![(keep, p)];
                shared = true;
            }
            let mut derived: Vec<Option<String>> = Vec::new();
            for (keep, p) in candidates.iter_mut() {
                let Some((p, size)) = p.take() else {
                    derived.push(None);
                    continue;
                };
                let first_rule = source_uses
                    .iter()
                    .find(|(_, _, a)| shared || a == &*keep)
                    .map(|(ri, _, _)| self.dis.mappings[*ri].id.clone())
                    .expect("set comes from a use");
                let name = fresh_name(&format!("{source}__{first_rule}"), |n| self.dis.sources.contains_key(n));
                let origins = self.origins.get(&source).cloned().unwrap_or_else(|| vec![source.clone()]);
                self.add_source(p.renamed(name.clone()), origins, Some(size));
                derived.push(Some(name));
            }
            for (ri, pi, attrs) in &source_uses {
                let idx = if shared { 0 } else { candidates.iter().position(|(k, _)| k == attrs).expect("known set") };
                if let Some(name) = &derived[idx] {
                    self.dis.mappings[*ri].body[*pi].source = name.clone();
                    per_rule.entry(*ri).or_default().push(DerivedProjection {
                        from: source.clone(),
                        to: name.clone(),
                        keep_attributes: candidates[idx].0.clone(),
                    });
                }
            }
        }
        let changed = !per_rule.is_empty();
        for (ri, projections) in per_rule {
            let note = projections
                .iter()
                .map(|p| {
                    let rows = self.dis.sources[&p.to].len();
                    format!("{} -> {} ({} attribute(s), {rows} row(s))", p.from, p.to, p.keep_attributes.len())
                })
                .collect::<Vec<_>>()
                .join("; ");
            self.step(StepAction::Project { rule: self.dis.mappings[ri].id.clone(), projections }, note);
        }
        changed
    }

    fn apply_merge(&mut self) -> bool {
        let mut groups: Vec<(MergeKey, Vec<Member>)> = Vec::new();
        for (ri, rule) in self.dis.mappings.iter().enumerate() {
            if rule.body.len() != 1 || !self.dis.sources.contains_key(&rule.body[0].source) {
                continue;
            }
            match merge_key(rule) {
                Ok((key, order)) => match groups.iter_mut().find(|(k, _)| *k == key) {
                    Some((_, members)) => members.push((ri, order)),
                    None => groups.push((key, vec![(ri, order)])),
                },
                Err(msg) => {
                    self.warnings.insert(format!("rule {}: {msg}; left unmerged", rule.id));
                }
            }
        }
        let mut removed: BTreeSet<usize> = BTreeSet::new();
        let mut replacements: BTreeMap<usize, MappingRule> = BTreeMap::new();
        for (_, members) in groups.into_iter().filter(|(_, m)| m.len() >= 2) {
            let member_ids: BTreeSet<usize> = members.iter().map(|(ri, _)| *ri).collect();
            let (first_idx, first_order) = &members[0];
            let first = &self.dis.mappings[*first_idx];
            let first_pred = &first.body[0];
            let target_attrs: Vec<String> = first_order
                .iter()
                .map(|v| first_pred.attribute_of(v).expect("safe rule binds head variables").to_string())
                .collect();
            let class_local = first.head.class.as_deref().map(local_name).unwrap_or("untyped");
            let rule_id = fresh_name(&format!("merged__{class_local}"), |n| {
                self.dis.mappings.iter().any(|r| r.id == n) || replacements.values().any(|r| r.id == n)
            });
            let source_name = fresh_name(&format!("merged__{class_local}"), |n| self.dis.sources.contains_key(n));
            let target = SourceSignature::new(&source_name, target_attrs.iter().cloned()).expect("distinct attributes");
            let mut renames: BTreeMap<String, BTreeMap<String, String>> = BTreeMap::new();
            for (ri, order) in &members {
                let pred = &self.dis.mappings[*ri].body[0];
                let map = order
                    .iter()
                    .zip(&target_attrs)
                    .map(|(v, t)| (pred.attribute_of(v).expect("bound").to_string(), t.clone()))
                    .collect();
                renames.insert(self.dis.mappings[*ri].id.clone(), map);
            }
            let parts: Vec<(&SourceRelation, &BTreeMap<String, String>)> = members
                .iter()
                .map(|(ri, _)| {
                    let rule = &self.dis.mappings[*ri];
                    (self.dis.sources[&rule.body[0].source].as_ref(), &renames[&rule.id])
                })
                .collect();
            let merged = union_rename(&parts, &target).expect("renames are bijective onto the target");

            // Sources read only by this group disappear with it; the merged
            // source must not be larger than they are together.
            let group_sources: BTreeSet<&str> =
                members.iter().map(|(ri, _)| self.dis.mappings[*ri].body[0].source.as_str()).collect();
            let outside: BTreeSet<&str> = self
                .dis
                .mappings
                .iter()
                .enumerate()
                .filter(|(i, _)| !member_ids.contains(i))
                .flat_map(|(_, r)| r.body.iter().map(|p| p.source.as_str()))
                .collect();
            let freed: u64 = group_sources.iter().filter(|s| !outside.contains(*s)).map(|s| self.size_of(s)).sum();
            let rule_ids: Vec<String> = members.iter().map(|(ri, _)| self.dis.mappings[*ri].id.clone()).collect();
            let merged_size = csv_size(&merged, self.dialect);
            if merged_size > freed {
                self.warnings.insert(format!(
                    "rules {} are mergeable but share sources with other rules; left unmerged",
                    rule_ids.join(", ")
                ));
                continue;
            }

            let mut origins = Vec::new();
            for (ri, _) in &members {
                let s = &self.dis.mappings[*ri].body[0].source;
                origins.extend(self.origins.get(s).cloned().unwrap_or_else(|| vec![s.clone()]));
            }
            let rows = merged.len();
            let new_rule = MappingRule {
                id: rule_id.clone(),
                head: first.head.clone(),
                body: vec![SourcePredicate::new(
                    source_name.clone(),
                    target_attrs.iter().zip(first_order).map(|(a, v)| AttributeBinding::new(a, v)),
                )],
            };
            self.add_source(merged, origins, Some(merged_size));
            replacements.insert(*first_idx, new_rule);
            removed.extend(member_ids.iter().filter(|i| *i != first_idx));
            self.step(
                StepAction::Merge {
                    rules: rule_ids.clone(),
                    merged_rule: rule_id,
                    target_source: source_name,
                    renames,
                },
                format!("{} rules, {rows} distinct merged row(s)", rule_ids.len()),
            );
        }
        if replacements.is_empty() {
            return false;
        }
        let old = std::mem::take(&mut self.dis.mappings);
        for (i, rule) in old.into_iter().enumerate() {
            if removed.contains(&i) {
                continue;
            }
            self.dis.mappings.push(replacements.remove(&i).unwrap_or(rule));
        }
        true
    }

    fn finish(mut self) -> TransformResult {
        self.plan.warnings = std::mem::take(&mut self.warnings).into_iter().collect();
        let dialect = self.dialect;
        let mut stats = TransformStats::default();
        let original_bytes: BTreeMap<&String, u64> = self
            .original
            .iter()
            .map(|(k, r)| {
                let cached = self
                    .sizes
                    .borrow()
                    .get(k)
                    .copied()
                    .filter(|_| self.dis.sources.get(k).is_some_and(|s| Arc::ptr_eq(s, r)));
                (k, cached.unwrap_or_else(|| csv_size(r, dialect)))
            })
            .collect();
        stats.total_rows_before = self.original.values().map(|r| r.len() as u64).sum();
        stats.total_bytes_before = original_bytes.values().sum();
        for (name, rel) in &self.dis.sources {
            let origins = self.origins.get(name).cloned().unwrap_or_else(|| vec![name.clone()]);
            let s = SourceStats {
                rows_before: origins.iter().filter_map(|o| self.original.get(o)).map(|r| r.len() as u64).sum(),
                bytes_before: origins.iter().filter_map(|o| original_bytes.get(o)).sum(),
                rows_after: rel.len() as u64,
                bytes_after: self.size_of(name),
                origins,
            };
            stats.total_rows_after += s.rows_after;
            stats.total_bytes_after += s.bytes_after;
            stats.sources.insert(name.clone(), s);
        }
        TransformResult { dis: self.dis, plan: self.plan, stats }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct MergeKey {
    class: Option<String>,
    subject: Vec<Option<String>>,
    properties: Vec<(String, bool, Vec<Option<String>>)>,
    pattern: Vec<usize>,
}

fn shape_of(t: &crate::template::IriTemplate) -> Vec<Option<String>> {
    t.shape().into_iter().map(|s| s.map(String::from)).collect()
}

/// The structural key under which rules merge, and the rule's head variables
/// in canonical order.
fn merge_key(rule: &MappingRule) -> Result<(MergeKey, Vec<String>), String> {
    let head = &rule.head;
    let mut props: Vec<HeadProperty<'_>> = head
        .properties
        .iter()
        .map(|p| match &p.object {
            ObjectTerm::Literal(v) => (p.property.as_str(), true, Vec::new(), vec![v.as_str()]),
            ObjectTerm::Iri(t) => (p.property.as_str(), false, shape_of(t), t.slots().collect()),
        })
        .collect();
    props.sort();
    for w in props.windows(2) {
        if (w[0].0, w[0].1, &w[0].2) == (w[1].0, w[1].1, &w[1].2) && w[0].3 != w[1].3 {
            return Err(format!("property {} appears twice with different values", w[0].0));
        }
    }
    props.dedup();
    let mut order: Vec<&str> = Vec::new();
    let mut pattern = Vec::new();
    let occurrences = std::iter::once(head.subject_var.as_str())
        .chain(head.subject.slots())
        .chain(props.iter().flat_map(|p| p.3.iter().copied()));
    for v in occurrences {
        let i = match order.iter().position(|o| *o == v) {
            Some(i) => i,
            None => {
                order.push(v);
                order.len() - 1
            }
        };
        pattern.push(i);
    }
    let key = MergeKey {
        class: head.class.clone(),
        subject: shape_of(&head.subject),
        properties: props.into_iter().map(|(p, lit, shape, _)| (p.to_string(), lit, shape)).collect(),
        pattern,
    };
    Ok((key, order.into_iter().map(String::from).collect()))
}

/// Ids of single-source rules that share a merge key, in groups of two or
/// more. Rules whose key is ambiguous are left out.
pub fn merge_candidates(rules: &[MappingRule]) -> Vec<Vec<String>> {
    let mut groups: Vec<(MergeKey, Vec<String>)> = Vec::new();
    for rule in rules.iter().filter(|r| r.body.len() == 1) {
        if let Ok((key, _)) = merge_key(rule) {
            match groups.iter_mut().find(|(k, _)| *k == key) {
                Some((_, ids)) => ids.push(rule.id.clone()),
                None => groups.push((key, vec![rule.id.clone()])),
            }
        }
    }
    groups.into_iter().map(|(_, ids)| ids).filter(|ids| ids.len() >= 2).collect()
}

/// Gives each body predicate a duplicate-free projection of its source onto
/// the attributes it binds.
pub fn rule1_project(dis: &Dis) -> TransformResult {
    let mut e = Engine::new(dis.clone());
    e.apply_projection();
    e.drop_unreferenced();
    e.finish()
}

/// Merges groups of single-source rules that emit the same class and
/// properties with subject templates equal up to slot names.
pub fn rule3_merge(dis: &Dis) -> TransformResult {
    let mut e = Engine::new(dis.clone());
    e.apply_merge();
    e.drop_unreferenced();
    e.finish()
}

/// Applies pushdown, merge and projection until a pass changes nothing.
pub fn optimize(dis: &Dis) -> TransformResult {
    fixed_point(Engine::new(dis.clone()))
}

/// [`optimize`] for a DIS whose sources are known to hold no duplicate rows,
/// which skips re-checking them.
pub fn optimize_distinct(dis: &Dis) -> TransformResult {
    let mut e = Engine::new(dis.clone());
    e.distinct = dis.sources.keys().cloned().collect();
    fixed_point(e)
}

fn fixed_point(mut e: Engine) -> TransformResult {
    let dis = &e.original;
    let limit = e.dis.mappings.len() + dis.len() + 2;
    loop {
        let mut changed = e.apply_pushdown();
        changed |= e.apply_merge();
        changed |= e.apply_projection();
        changed |= e.drop_unreferenced();
        e.plan.passes = e.pass;
        if !changed || e.pass >= limit {
            break;
        }
        e.pass += 1;
    }
    e.finish()
}
