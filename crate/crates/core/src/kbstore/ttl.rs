//! Turtle export and import.
//!
//! The exporter writes one statement per line with full IRIs, sorted by
//! subject, predicate and object. Entities live under `<ns>entity/` and
//! predicates under `<ns>prop/`; labels are percent-encoded byte-wise, so
//! the mapping from label to IRI is injective. All literals are plain
//! strings. The importer accepts exactly that subset of Turtle.

use super::{EntityRecord, KnowledgeBase};
use crate::triple::{EntityStatus, ObjectKind, Triple};
use std::collections::BTreeMap;
use std::fmt::Write as _;
use thiserror::Error;

pub const DEFAULT_NAMESPACE: &str = "http://example.org/kbforge/";

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TtlError {
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
}

fn malformed(line: usize, message: impl Into<String>) -> TtlError {
    TtlError::Malformed {
        line,
        message: message.into(),
    }
}

pub fn percent_encode(label: &str) -> String {
    let mut out = String::with_capacity(label.len());
    for b in label.bytes() {
        if b.is_ascii_alphanumeric() || matches!(b, b'-' | b'.' | b'_' | b'~') {
            out.push(b as char);
        } else {
            let _ = write!(out, "%{b:02X}");
        }
    }
    out
}

pub fn percent_decode(encoded: &str) -> Option<String> {
    let bytes = encoded.as_bytes();
    let mut out = Vec::with_capacity(bytes.len());
    let mut i = 0;
    while i < bytes.len() {
        if bytes[i] == b'%' {
            let hex = encoded.get(i + 1..i + 3)?;
            out.push(u8::from_str_radix(hex, 16).ok()?);
            i += 3;
        } else {
            out.push(bytes[i]);
            i += 1;
        }
    }
    String::from_utf8(out).ok()
}

fn escape_literal(value: &str) -> String {
    let mut out = String::with_capacity(value.len() + 2);
    out.push('"');
    for c in value.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            '\t' => out.push_str("\\t"),
            c if c.is_control() => {
                let _ = write!(out, "\\u{:04X}", c as u32);
            }
            c => out.push(c),
        }
    }
    out.push('"');
    out
}

/// Render the store as Turtle. Canonical predicates and classes are used
/// where consolidation assigned them.
pub fn export_ttl(kb: &KnowledgeBase, namespace: &str) -> String {
    let mut statements: Vec<(&str, &str, String)> = kb
        .triples()
        .map(|t| {
            let object = if t.object_kind == ObjectKind::NamedEntity {
                format!("<{namespace}entity/{}>", percent_encode(t.effective_object()))
            } else {
                escape_literal(t.effective_object())
            };
            (t.subject.as_str(), t.effective_predicate(), object)
        })
        .collect();
    statements.sort();
    // merged entities can carry the same fact under two raw spellings
    statements.dedup();

    let mut out = format!("@prefix kb: <{namespace}> .\n\n");
    for (s, p, o) in statements {
        let _ = writeln!(
            out,
            "<{namespace}entity/{}> <{namespace}prop/{}> {o} .",
            percent_encode(s),
            percent_encode(p)
        );
    }
    out
}

struct Cursor<'a> {
    rest: &'a str,
    line: usize,
}

impl<'a> Cursor<'a> {
    fn skip_ws(&mut self) {
        self.rest = self.rest.trim_start_matches([' ', '\t']);
    }

    fn iri(&mut self) -> Result<&'a str, TtlError> {
        self.skip_ws();
        let body = self
            .rest
            .strip_prefix('<')
            .ok_or_else(|| malformed(self.line, "expected '<'"))?;
        let end = body
            .find('>')
            .ok_or_else(|| malformed(self.line, "unterminated IRI"))?;
        self.rest = &body[end + 1..];
        Ok(&body[..end])
    }

    fn literal(&mut self) -> Result<String, TtlError> {
        self.skip_ws();
        let mut chars = self
            .rest
            .strip_prefix('"')
            .ok_or_else(|| malformed(self.line, "expected literal"))?
            .char_indices();
        let mut out = String::new();
        let body = &self.rest[1..];
        while let Some((i, c)) = chars.next() {
            match c {
                '"' => {
                    self.rest = &body[i + 1..];
                    if self.rest.starts_with(['@', '^']) {
                        return Err(malformed(self.line, "typed or tagged literals are not supported"));
                    }
                    return Ok(out);
                }
                '\\' => {
                    let (_, e) = chars
                        .next()
                        .ok_or_else(|| malformed(self.line, "dangling escape"))?;
                    match e {
                        'n' => out.push('\n'),
                        'r' => out.push('\r'),
                        't' => out.push('\t'),
                        'b' => out.push('\u{8}'),
                        'f' => out.push('\u{c}'),
                        '"' | '\'' | '\\' => out.push(e),
                        'u' | 'U' => {
                            let width = if e == 'u' { 4 } else { 8 };
                            let hex: String = chars.by_ref().take(width).map(|(_, c)| c).collect();
                            let code = u32::from_str_radix(&hex, 16)
                                .ok()
                                .filter(|_| hex.len() == width)
                                .and_then(char::from_u32)
                                .ok_or_else(|| malformed(self.line, "bad unicode escape"))?;
                            out.push(code);
                        }
                        other => {
                            return Err(malformed(self.line, format!("unknown escape '\\{other}'")))
                        }
                    }
                }
                c => out.push(c),
            }
        }
        Err(malformed(self.line, "unterminated literal"))
    }

    fn end(&mut self) -> Result<(), TtlError> {
        self.skip_ws();
        let rest = self
            .rest
            .strip_prefix('.')
            .ok_or_else(|| malformed(self.line, "expected '.'"))?;
        let rest = rest.trim();
        if rest.is_empty() || rest.starts_with('#') {
            Ok(())
        } else {
            Err(malformed(self.line, "trailing content after '.'"))
        }
    }
}

fn strip_ns(iri: &str, base: &str, line: usize) -> Result<String, TtlError> {
    let local = iri
        .strip_prefix(base)
        .ok_or_else(|| malformed(line, format!("IRI <{iri}> outside <{base}>")))?;
    percent_decode(local).ok_or_else(|| malformed(line, format!("bad percent-encoding in <{iri}>")))
}

/// Parse a document in the exporter's Turtle subset. Imported triples have
/// layer 0 (unknown) since provenance is not part of the export.
pub fn import_ttl(doc: &str) -> Result<KnowledgeBase, TtlError> {
    let mut namespace: Option<String> = None;
    let mut by_subject: BTreeMap<String, Vec<Triple>> = BTreeMap::new();
    for (idx, raw) in doc.lines().enumerate() {
        let line = idx + 1;
        let text = raw.trim();
        if text.is_empty() || text.starts_with('#') {
            continue;
        }
        if let Some(rest) = text.strip_prefix("@prefix") {
            let mut c = Cursor { rest, line };
            c.skip_ws();
            let after = c
                .rest
                .strip_prefix("kb:")
                .ok_or_else(|| malformed(line, "expected prefix 'kb:'"))?;
            c.rest = after;
            let ns = c.iri()?;
            c.end()?;
            namespace = Some(ns.to_string());
            continue;
        }
        let ns = namespace
            .as_deref()
            .ok_or_else(|| malformed(line, "statement before @prefix kb:"))?;
        let entity_base = format!("{ns}entity/");
        let prop_base = format!("{ns}prop/");
        let mut c = Cursor { rest: text, line };
        let subject = strip_ns(c.iri()?, &entity_base, line)?;
        let predicate = strip_ns(c.iri()?, &prop_base, line)?;
        c.skip_ws();
        let (object, kind) = if c.rest.starts_with('<') {
            (strip_ns(c.iri()?, &entity_base, line)?, ObjectKind::NamedEntity)
        } else {
            (c.literal()?, ObjectKind::Literal)
        };
        c.end()?;
        by_subject
            .entry(subject.clone())
            .or_default()
            .push(Triple::new(subject, predicate, object, kind, 0));
    }
    let mut kb = KnowledgeBase::new();
    for (label, triples) in by_subject {
        let mut record = EntityRecord::new(label, 0, EntityStatus::DoneNonempty);
        record.triples = triples;
        kb.put_record(record);
    }
    Ok(kb)
}
