//! Step templates and the override file format.
//!
//! Templates are keyed `<strategy>.<step>` (plus `<strategy>.preamble` for the
//! role-playing variants). Recognised slots:
//!
//! | slot         | expands to                                        |
//! |--------------|---------------------------------------------------|
//! | `{text}`     | the review, double-quoted, inner quotes doubled   |
//! | `{labels}`   | label words of the dataset, comma separated       |
//! | `{domain}`   | domain name, e.g. `movie`                         |
//! | `{preamble}` | the rendered role preamble                        |
//!
//! Override files hold one `key = template` per line; blank lines and lines
//! starting with `#` are skipped. Keys not listed in [`DEFAULT_TEMPLATES`]
//! are rejected.

use std::collections::BTreeMap;
use std::path::Path;

use crate::error::Error;

pub const SLOTS: [&str; 4] = ["text", "labels", "domain", "preamble"];

pub const DEFAULT_TEMPLATES: [(&str, &str); 11] = [
    ("vanilla.0", "Classify the sentiment of the text in one word ({labels}): {text}"),
    ("rp.preamble", "You are an expert of sentiment analysis in {domain} review texts domain"),
    ("rp.0", "{preamble}, classify the sentiment of the text in one word ({labels}): {text}"),
    ("cot.0", "Given the review text {text}, what is the specific aspect described of the subjective?"),
    ("cot.1", "What is the implicit opinion towards the mentioned aspect, and why?"),
    ("cot.2", "Based on above, classify the sentiment of the text in one word ({labels}): {text}"),
    (
        "rp_cot.preamble",
        "You are an expert of sentiment analysis in the {domain} review texts domain, please follow the instructions step by step.",
    ),
    ("rp_cot.0", "{preamble}"),
    ("rp_cot.1", "Given the review text {text}, what is the specific aspect described of the subjective?"),
    ("rp_cot.2", "What is the implicit opinion towards the mentioned aspect, and why?"),
    ("rp_cot.3", "Based on above, classify the sentiment of the text in one word ({labels}): {text}"),
];

/// Complete template table: defaults with any overrides applied.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TemplateSet {
    templates: BTreeMap<String, String>,
}

impl Default for TemplateSet {
    fn default() -> Self {
        TemplateSet {
            templates: DEFAULT_TEMPLATES
                .iter()
                .map(|(k, v)| (k.to_string(), v.to_string()))
                .collect(),
        }
    }
}

impl TemplateSet {
    pub fn get(&self, key: &str) -> Option<&str> {
        self.templates.get(key).map(String::as_str)
    }

    pub fn set(&mut self, key: &str, template: &str) -> Result<(), Error> {
        if !self.templates.contains_key(key) {
            return Err(Error::Template(format!("unknown template key {key:?}")));
        }
        check_slots(template).map_err(|m| Error::Template(format!("{key}: {m}")))?;
        self.templates.insert(key.to_string(), template.to_string());
        Ok(())
    }

    /// Applies `key = template` lines on top of the defaults.
    pub fn parse_overrides(text: &str) -> Result<Self, Error> {
        let mut set = TemplateSet::default();
        for (i, line) in text.lines().enumerate() {
            let trimmed = line.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let (key, value) = trimmed.split_once('=').ok_or_else(|| {
                Error::Template(format!("line {}: expected `key = template`", i + 1))
            })?;
            let value = value.trim();
            if value.is_empty() {
                return Err(Error::Template(format!("line {}: empty template", i + 1)));
            }
            set.set(key.trim(), value)
                .map_err(|e| Error::Template(format!("line {}: {e}", i + 1)))?;
        }
        Ok(set)
    }

    pub fn load(path: &Path) -> Result<Self, Error> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse_overrides(&text)
    }
}

/// Iterates the `{name}` placeholders of a template.
fn placeholders(template: &str) -> impl Iterator<Item = Result<&str, String>> {
    let mut rest = template;
    std::iter::from_fn(move || {
        let open = rest.find('{')?;
        let after = &rest[open + 1..];
        match after.find('}') {
            Some(close) => {
                rest = &after[close + 1..];
                Some(Ok(&after[..close]))
            }
            None => {
                rest = "";
                Some(Err("unclosed `{`".to_string()))
            }
        }
    })
}

pub(crate) fn check_slots(template: &str) -> Result<(), String> {
    if template.contains('}') && !template.contains('{') {
        return Err("stray `}`".into());
    }
    for name in placeholders(template) {
        let name = name?;
        if !SLOTS.contains(&name) {
            return Err(format!("unknown slot {{{name}}}"));
        }
    }
    Ok(())
}

/// Single-pass substitution: text inserted for a slot is never rescanned, so
/// braces inside a review survive untouched.
pub(crate) fn fill(
    template: &str,
    lookup: impl Fn(&str) -> Option<String>,
) -> Result<String, Error> {
    let mut out = String::with_capacity(template.len() + 64);
    let mut rest = template;
    while let Some(open) = rest.find('{') {
        out.push_str(&rest[..open]);
        let after = &rest[open + 1..];
        let close = after
            .find('}')
            .ok_or_else(|| Error::Template(format!("unclosed `{{` in {template:?}")))?;
        let name = &after[..close];
        let value = lookup(name).ok_or_else(|| {
            Error::Template(format!("unresolved slot {{{name}}} in {template:?}"))
        })?;
        out.push_str(&value);
        rest = &after[close + 1..];
    }
    out.push_str(rest);
    Ok(out)
}
