//! IRI templates in `rr:template` syntax: constant text with `{variable}` slots.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Segment {
    Const(String),
    Slot(String),
}

/// A sequence of constant and variable segments. Adjacent constants are
/// always coalesced, so two templates that print the same compare equal.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct IriTemplate {
    segments: Vec<Segment>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TemplateError {
    #[error("unbalanced '{{' or '}}' in template {0:?}")]
    Unbalanced(String),
    #[error("empty slot name in template {0:?}")]
    EmptySlot(String),
    #[error("template {0:?} has no segments")]
    Empty(String),
}

impl IriTemplate {
    pub fn new(segments: impl IntoIterator<Item = Segment>) -> Self {
        let mut out: Vec<Segment> = Vec::new();
        for seg in segments {
            match (out.last_mut(), seg) {
                (_, Segment::Const(c)) if c.is_empty() => {}
                (Some(Segment::Const(prev)), Segment::Const(c)) => prev.push_str(&c),
                (_, seg) => out.push(seg),
            }
        }
        IriTemplate { segments: out }
    }

    /// A template with no slots.
    pub fn constant(iri: impl Into<String>) -> Self {
        IriTemplate::new([Segment::Const(iri.into())])
    }

    /// Parses `rr:template` syntax. `\{`, `\}` and `\\` escape literal characters.
    pub fn parse(text: &str) -> Result<Self, TemplateError> {
        let mut segments = Vec::new();
        let mut current = String::new();
        let mut in_slot = false;
        let mut chars = text.chars();
        while let Some(c) = chars.next() {
            match c {
                '\\' => match chars.next() {
                    Some(e) => current.push(e),
                    None => current.push('\\'),
                },
                '{' if !in_slot => {
                    segments.push(Segment::Const(std::mem::take(&mut current)));
                    in_slot = true;
                }
                '}' if in_slot => {
                    if current.is_empty() {
                        return Err(TemplateError::EmptySlot(text.to_string()));
                    }
                    segments.push(Segment::Slot(std::mem::take(&mut current)));
                    in_slot = false;
                }
                '{' | '}' => return Err(TemplateError::Unbalanced(text.to_string())),
                c => current.push(c),
            }
        }
        if in_slot {
            return Err(TemplateError::Unbalanced(text.to_string()));
        }
        segments.push(Segment::Const(current));
        let template = IriTemplate::new(segments);
        if template.segments.is_empty() {
            return Err(TemplateError::Empty(text.to_string()));
        }
        Ok(template)
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn is_empty(&self) -> bool {
        self.segments.is_empty()
    }

    /// Slot names in order of appearance (repeats included).
    pub fn slots(&self) -> impl Iterator<Item = &str> {
        self.segments.iter().filter_map(|s| match s {
            Segment::Slot(v) => Some(v.as_str()),
            Segment::Const(_) => None,
        })
    }

    pub fn slot_count(&self) -> usize {
        self.slots().count()
    }

    /// The template with every slot replaced by `f(slot)`.
    pub fn rename_slots(&self, mut f: impl FnMut(&str) -> String) -> IriTemplate {
        IriTemplate::new(self.segments.iter().map(|s| match s {
            Segment::Const(c) => Segment::Const(c.clone()),
            Segment::Slot(v) => Segment::Slot(f(v)),
        }))
    }

    /// Shape of the template with slot names erased; two templates with the
    /// same shape differ only in the names of their slots.
    pub fn shape(&self) -> Vec<Option<&str>> {
        self.segments
            .iter()
            .map(|s| match s {
                Segment::Const(c) => Some(c.as_str()),
                Segment::Slot(_) => None,
            })
            .collect()
    }

    /// Concatenates constants with slot values, percent-encoding the values.
    /// Returns `None` as soon as `lookup` yields `None` for a slot.
    pub fn expand<'a>(&self, mut lookup: impl FnMut(&str) -> Option<&'a str>) -> Option<String> {
        let mut out = String::new();
        for seg in &self.segments {
            match seg {
                Segment::Const(c) => out.push_str(c),
                Segment::Slot(v) => push_iri_encoded(&mut out, lookup(v)?),
            }
        }
        Some(out)
    }
}

impl fmt::Display for IriTemplate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for seg in &self.segments {
            match seg {
                Segment::Const(c) => {
                    for ch in c.chars() {
                        if matches!(ch, '{' | '}' | '\\') {
                            f.write_str("\\")?;
                        }
                        write!(f, "{ch}")?;
                    }
                }
                Segment::Slot(v) => write!(f, "{{{v}}}")?,
            }
        }
        Ok(())
    }
}

fn needs_encoding(c: char) -> bool {
    c.is_control() || matches!(c, ' ' | '"' | '\'' | '<' | '>' | '{' | '}' | '\\' | '^' | '`' | '|')
}

/// Appends `value`, percent-encoding characters that may not appear in an IRI
/// written in N-Triples.
pub fn push_iri_encoded(out: &mut String, value: &str) {
    if !value.chars().any(needs_encoding) {
        out.push_str(value);
        return;
    }
    let mut buf = [0u8; 4];
    for c in value.chars() {
        if needs_encoding(c) {
            for b in c.encode_utf8(&mut buf).bytes() {
                out.push_str(&format!("%{b:02X}"));
            }
        } else {
            out.push(c);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_and_print() {
        let t = IriTemplate::parse("http://ex/g/{ensg}/{v}").unwrap();
        assert_eq!(t.slots().collect::<Vec<_>>(), ["ensg", "v"]);
        assert_eq!(t.to_string(), "http://ex/g/{ensg}/{v}");
        assert_eq!(IriTemplate::parse(&t.to_string()).unwrap(), t);
    }

    #[test]
    fn escaped_braces_are_constants() {
        let t = IriTemplate::parse(r"http://ex/\{x\}/{a}").unwrap();
        assert_eq!(t.slot_count(), 1);
        assert_eq!(IriTemplate::parse(&t.to_string()).unwrap(), t);
    }

    #[test]
    fn malformed_templates() {
        assert!(matches!(IriTemplate::parse("a{b"), Err(TemplateError::Unbalanced(_))));
        assert!(matches!(IriTemplate::parse("a}b"), Err(TemplateError::Unbalanced(_))));
        assert!(matches!(IriTemplate::parse("a{}b"), Err(TemplateError::EmptySlot(_))));
        assert!(matches!(IriTemplate::parse(""), Err(TemplateError::Empty(_))));
    }

    #[test]
    fn constants_coalesce() {
        let t = IriTemplate::new([Segment::Const("a".into()), Segment::Const("".into()), Segment::Const("b".into())]);
        assert_eq!(t, IriTemplate::constant("ab"));
    }

    #[test]
    fn encoding() {
        let mut s = String::new();
        push_iri_encoded(&mut s, "a b<c>\"d\n");
        assert_eq!(s, "a%20b%3Cc%3E%22d%0A");
    }

    #[test]
    fn shape_ignores_slot_names() {
        let a = IriTemplate::parse("http://ex/t/{enst}").unwrap();
        let b = IriTemplate::parse("http://ex/t/{transcript_id}").unwrap();
        let c = IriTemplate::parse("http://other/t/{enst}").unwrap();
        assert_eq!(a.shape(), b.shape());
        assert_ne!(a.shape(), c.shape());
    }
}
