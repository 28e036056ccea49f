//! Parser for system description files.
//!
//! ```text
//! # comment
//! [model]
//! kind = pre
//! tick-bound = 16
//! strict-choose = false
//!
//! [entities]
//! subject alice role=doctor age=40 guardian=@bob
//! subject bob role="nurse"
//! action read
//! object rec1 owner=@alice pair=(@alice,@bob)
//!
//! [domains]
//! att = {0..2} init 0
//! level = {low, high}
//!
//! [policy]
//! (= (attr subject role) "doctor")
//!
//! [updates]
//! preUpdate: st=activated, att=(+ (attr use att) 1)
//! ```

use std::str::FromStr;

use thiserror::Error;
use usecon::model::{ChooseMode, EntityKind, EntitySpec, ModelKind, RawValue, SystemBuilder};
use usecon::policy::UpdateProc;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("line {line}: {message}")]
pub struct SystemFileError {
    pub line: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DomainDecl {
    pub name: String,
    pub values: Vec<RawValue>,
    pub initial: Option<RawValue>,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct SystemFile {
    pub model: Option<ModelKind>,
    pub tick_bound: Option<u64>,
    pub strict_choose: bool,
    pub entities: Vec<EntitySpec>,
    pub domains: Vec<DomainDecl>,
    /// `None` when the file has no `[policy]` section.
    pub policy: Option<String>,
    pub updates: Vec<(UpdateProc, String)>,
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Section {
    None,
    Model,
    Entities,
    Domains,
    Policy,
    Updates,
}

fn err(line: usize, message: impl Into<String>) -> SystemFileError {
    SystemFileError {
        line,
        message: message.into(),
    }
}

impl SystemFile {
    pub fn parse(text: &str) -> Result<SystemFile, SystemFileError> {
        let mut file = SystemFile::default();
        let mut section = Section::None;
        let mut policy_lines: Vec<&str> = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
                section = match name.trim() {
                    "model" => Section::Model,
                    "entities" => Section::Entities,
                    "domains" => Section::Domains,
                    "policy" => {
                        file.policy.get_or_insert_with(String::new);
                        Section::Policy
                    }
                    "updates" => Section::Updates,
                    other => return Err(err(line_no, format!("unknown section [{other}]"))),
                };
                continue;
            }
            match section {
                Section::None => return Err(err(line_no, "content before the first section")),
                Section::Model => file.model_line(line, line_no)?,
                Section::Entities => file.entities.push(entity_line(line, line_no)?),
                Section::Domains => file.domains.push(domain_line(line, line_no)?),
                Section::Policy => policy_lines.push(line),
                Section::Updates => {
                    let (name, body) = line
                        .split_once(':')
                        .ok_or_else(|| err(line_no, "expected 'procName: body'"))?;
                    let proc = UpdateProc::from_name(name.trim()).ok_or_else(|| {
                        err(
                            line_no,
                            format!("unknown update procedure '{}'", name.trim()),
                        )
                    })?;
                    file.updates.push((proc, body.trim().to_string()));
                }
            }
        }
        if let Some(p) = file.policy.as_mut() {
            *p = policy_lines.join(" ");
            if p.is_empty() {
                return Err(err(0, "empty [policy] section"));
            }
        }
        Ok(file)
    }

    fn model_line(&mut self, line: &str, line_no: usize) -> Result<(), SystemFileError> {
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| err(line_no, "expected 'key = value'"))?;
        let value = value.trim();
        match key.trim() {
            "kind" => self.model = Some(ModelKind::from_str(value).map_err(|e| err(line_no, e))?),
            "tick-bound" => {
                self.tick_bound = Some(
                    value
                        .parse()
                        .map_err(|_| err(line_no, format!("invalid tick bound '{value}'")))?,
                )
            }
            "strict-choose" => {
                self.strict_choose = value
                    .parse()
                    .map_err(|_| err(line_no, format!("expected true or false, got '{value}'")))?
            }
            other => return Err(err(line_no, format!("unknown model key '{other}'"))),
        }
        Ok(())
    }

    /// A builder carrying everything but the policy, which the caller may
    /// override. `model` overrides the file's `kind`.
    pub fn builder(&self, model: Option<ModelKind>) -> Result<SystemBuilder, SystemFileError> {
        let model = model
            .or(self.model)
            .ok_or_else(|| err(0, "no model kind given ([model] kind or --model)"))?;
        let mut b = SystemBuilder::new(model);
        for e in &self.entities {
            b = b.entity(e.clone());
        }
        for d in &self.domains {
            b = b.use_attr(d.name.clone(), d.values.clone(), d.initial.clone());
        }
        for (proc, body) in &self.updates {
            b = b.update(*proc, body.clone());
        }
        if let Some(t) = self.tick_bound {
            b = b.tick_bound(t);
        }
        if self.strict_choose {
            b = b.choose_mode(ChooseMode::Strict);
        }
        if let Some(p) = &self.policy {
            b = b.policy_text(p.clone());
        }
        Ok(b)
    }
}

/// Splits on whitespace outside quotes and parentheses.
fn fields(line: &str, line_no: usize) -> Result<Vec<String>, SystemFileError> {
    let mut out = Vec::new();
    let mut cur = String::new();
    let mut depth = 0usize;
    let mut quoted = false;
    for c in line.chars() {
        match c {
            '"' => quoted = !quoted,
            '(' if !quoted => depth += 1,
            ')' if !quoted => {
                depth = depth
                    .checked_sub(1)
                    .ok_or_else(|| err(line_no, "unbalanced ')'"))?
            }
            c if c.is_whitespace() && !quoted && depth == 0 => {
                if !cur.is_empty() {
                    out.push(std::mem::take(&mut cur));
                }
                continue;
            }
            _ => {}
        }
        cur.push(c);
    }
    if quoted || depth != 0 {
        return Err(err(line_no, "unterminated quote or parenthesis"));
    }
    if !cur.is_empty() {
        out.push(cur);
    }
    Ok(out)
}

fn value(text: &str, line_no: usize) -> Result<RawValue, SystemFileError> {
    let text = text.trim();
    if let Some(inner) = text.strip_prefix('(').and_then(|t| t.strip_suffix(')')) {
        let ids = inner
            .split(',')
            .map(|part| {
                part.trim()
                    .strip_prefix('@')
                    .map(str::to_string)
                    .ok_or_else(|| {
                        err(
                            line_no,
                            format!("tuple element '{}' is not an @id", part.trim()),
                        )
                    })
            })
            .collect::<Result<Vec<_>, _>>()?;
        return Ok(RawValue::IdTuple(ids));
    }
    if let Some(id) = text.strip_prefix('@') {
        return Ok(RawValue::IdRef(id.to_string()));
    }
    if let Some(tok) = text.strip_prefix('"').and_then(|t| t.strip_suffix('"')) {
        return Ok(RawValue::Token(tok.to_string()));
    }
    if let Ok(i) = text.parse::<i64>() {
        return Ok(RawValue::Int(i));
    }
    if text.is_empty() || text.contains(|c: char| c.is_whitespace() || "\"(),{}".contains(c)) {
        return Err(err(line_no, format!("invalid value '{text}'")));
    }
    Ok(RawValue::Token(text.to_string()))
}

fn entity_line(line: &str, line_no: usize) -> Result<EntitySpec, SystemFileError> {
    let parts = fields(line, line_no)?;
    let [kind, id, attrs @ ..] = parts.as_slice() else {
        return Err(err(line_no, "expected 'kind id attr=value ...'"));
    };
    let kind = EntityKind::from_str(kind).map_err(|e| err(line_no, e))?;
    let mut spec = EntitySpec::new(kind, id.clone());
    for a in attrs {
        let (name, v) = a
            .split_once('=')
            .ok_or_else(|| err(line_no, format!("expected attr=value, got '{a}'")))?;
        spec = spec.with(name, value(v, line_no)?);
    }
    Ok(spec)
}

fn domain_line(line: &str, line_no: usize) -> Result<DomainDecl, SystemFileError> {
    let (name, rest) = line
        .split_once('=')
        .ok_or_else(|| err(line_no, "expected 'attr = {values} [init value]'"))?;
    let rest = rest.trim();
    let close = rest
        .strip_prefix('{')
        .and_then(|r| r.find('}'))
        .ok_or_else(|| err(line_no, "domain must be a braced set"))?;
    let body = &rest[1..close + 1];
    let tail = rest[close + 2..].trim();
    let values = match body.split_once("..") {
        Some((lo, hi)) if !body.contains(',') => {
            let parse = |s: &str| {
                s.trim()
                    .parse::<i64>()
                    .map_err(|_| err(line_no, format!("invalid range bound '{}'", s.trim())))
            };
            let (lo, hi) = (parse(lo)?, parse(hi)?);
            if hi < lo || hi - lo > 1_000_000 {
                return Err(err(line_no, format!("invalid range {lo}..{hi}")));
            }
            (lo..=hi).map(RawValue::Int).collect()
        }
        _ => split_top_level(body)
            .iter()
            .filter(|v| !v.trim().is_empty())
            .map(|v| value(v, line_no))
            .collect::<Result<Vec<_>, _>>()?,
    };
    let initial = match tail.strip_prefix("init") {
        Some(v) => Some(value(v, line_no)?),
        None if tail.is_empty() => None,
        None => return Err(err(line_no, format!("unexpected '{tail}' after domain"))),
    };
    Ok(DomainDecl {
        name: name.trim().to_string(),
        values,
        initial,
    })
}

/// Splits on commas outside parentheses.
fn split_top_level(s: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let mut depth = 0i32;
    let mut start = 0;
    for (i, c) in s.char_indices() {
        match c {
            '(' => depth += 1,
            ')' => depth -= 1,
            ',' if depth == 0 => {
                out.push(&s[start..i]);
                start = i + 1;
            }
            _ => {}
        }
    }
    out.push(&s[start..]);
    out
}
