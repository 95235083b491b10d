//! Flat `key = value` documents grouped into `[section]`s.
//!
//! ```text
//! # comment
//! name = two_osc
//! [model]
//! coupling = 1.0      # trailing comments are allowed
//! frequencies = 0.375, -0.375
//! ```
//!
//! Keys before the first header belong to the unnamed top-level section.
//! Keys are `[A-Za-z0-9_]+`; values run to the end of the line (or a `#`)
//! and are trimmed. Duplicate sections merge, duplicate keys are an error.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;

/// Parse or validation error, located by line and field where known.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigError {
    pub line: Option<usize>,
    pub field: Option<String>,
    pub message: String,
}

impl ConfigError {
    pub fn new(message: impl Into<String>) -> Self {
        Self { line: None, field: None, message: message.into() }
    }

    pub fn at(line: usize, message: impl Into<String>) -> Self {
        Self { line: Some(line), field: None, message: message.into() }
    }

    pub fn field(mut self, field: impl Into<String>) -> Self {
        self.field = Some(field.into());
        self
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (self.line, &self.field) {
            (Some(l), Some(k)) => write!(f, "line {l}, field `{k}`: {}", self.message),
            (Some(l), None) => write!(f, "line {l}: {}", self.message),
            (None, Some(k)) => write!(f, "field `{k}`: {}", self.message),
            (None, None) => f.write_str(&self.message),
        }
    }
}

impl std::error::Error for ConfigError {}

#[derive(Debug, Clone, PartialEq, Eq)]
struct Entry {
    value: String,
    line: usize,
}

/// Parsed document. Lookups go through [`Section`], which reports keys that
/// were never consumed.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Document {
    sections: BTreeMap<String, BTreeMap<String, Entry>>,
    header_lines: BTreeMap<String, usize>,
}

fn is_identifier(s: &str) -> bool {
    !s.is_empty() && s.bytes().all(|b| b.is_ascii_alphanumeric() || b == b'_')
}

impl FromStr for Document {
    type Err = ConfigError;

    fn from_str(text: &str) -> Result<Self, ConfigError> {
        let mut doc = Document::default();
        let mut current = String::new();
        doc.sections.insert(String::new(), BTreeMap::new());
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            if let Some(rest) = content.strip_prefix('[') {
                let name = rest
                    .strip_suffix(']')
                    .ok_or_else(|| ConfigError::at(line, "section header is missing `]`"))?
                    .trim();
                if !is_identifier(name) {
                    return Err(ConfigError::at(line, format!("invalid section name {name:?}")));
                }
                current = name.to_string();
                doc.sections.entry(current.clone()).or_default();
                doc.header_lines.entry(current.clone()).or_insert(line);
                continue;
            }
            let (key, value) = content
                .split_once('=')
                .ok_or_else(|| ConfigError::at(line, format!("expected `key = value`, got {content:?}")))?;
            let key = key.trim();
            if !is_identifier(key) {
                return Err(ConfigError::at(line, format!("invalid key {key:?}")));
            }
            let section = doc.sections.get_mut(&current).expect("current section exists");
            if let Some(prev) = section.get(key) {
                return Err(ConfigError::at(line, format!("duplicate key (first set on line {})", prev.line)).field(key));
            }
            section.insert(key.to_string(), Entry { value: value.trim().to_string(), line });
        }
        Ok(doc)
    }
}

impl Document {
    pub fn has_section(&self, name: &str) -> bool {
        self.sections.contains_key(name)
    }

    /// Error on any section outside `known`.
    pub fn check_sections(&self, known: &[&str]) -> Result<(), ConfigError> {
        for name in self.sections.keys() {
            if !name.is_empty() && !known.contains(&name.as_str()) {
                let line = self.header_lines.get(name).copied().unwrap_or(0);
                return Err(ConfigError::at(line, format!("unknown section [{name}]")));
            }
        }
        Ok(())
    }

    /// `""` is the top-level section. Missing sections read as empty.
    pub fn section(&self, name: &str) -> Section<'_> {
        static EMPTY: BTreeMap<String, Entry> = BTreeMap::new();
        Section {
            name: name.to_string(),
            entries: self.sections.get(name).unwrap_or(&EMPTY),
            used: std::cell::RefCell::new(Vec::new()),
        }
    }
}

/// Typed view of one section.
pub struct Section<'a> {
    name: String,
    entries: &'a BTreeMap<String, Entry>,
    used: std::cell::RefCell<Vec<String>>,
}

impl<'a> Section<'a> {
    fn qualified(&self, key: &str) -> String {
        if self.name.is_empty() {
            key.to_string()
        } else {
            format!("{}.{key}", self.name)
        }
    }

    fn raw(&self, key: &str) -> Option<&'a Entry> {
        let e = self.entries.get(key)?;
        self.used.borrow_mut().push(key.to_string());
        Some(e)
    }

    pub fn contains(&self, key: &str) -> bool {
        self.entries.contains_key(key)
    }

    /// Parse `key` with `parse`; `None` when absent.
    pub fn get_with<T>(&self, key: &str, parse: impl Fn(&str) -> Result<T, String>) -> Result<Option<T>, ConfigError> {
        match self.raw(key) {
            None => Ok(None),
            Some(e) => parse(&e.value)
                .map(Some)
                .map_err(|m| ConfigError::at(e.line, m).field(self.qualified(key))),
        }
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>, ConfigError>
    where
        T::Err: fmt::Display,
    {
        self.get_with(key, |s| s.parse::<T>().map_err(|e| format!("cannot parse {s:?}: {e}")))
    }

    pub fn get_or<T: FromStr>(&self, key: &str, default: T) -> Result<T, ConfigError>
    where
        T::Err: fmt::Display,
    {
        Ok(self.get(key)?.unwrap_or(default))
    }

    pub fn require<T: FromStr>(&self, key: &str) -> Result<T, ConfigError>
    where
        T::Err: fmt::Display,
    {
        self.get(key)?.ok_or_else(|| self.missing(key))
    }

    pub fn missing(&self, key: &str) -> ConfigError {
        ConfigError::new("required key is missing").field(self.qualified(key))
    }

    /// Located error for a key that parsed but failed validation.
    pub fn invalid(&self, key: &str, message: impl Into<String>) -> ConfigError {
        let line = self.entries.get(key).map(|e| e.line);
        ConfigError { line, field: Some(self.qualified(key)), message: message.into() }
    }

    pub fn list<T: FromStr>(&self, key: &str) -> Result<Option<Vec<T>>, ConfigError>
    where
        T::Err: fmt::Display,
    {
        self.get_with(key, parse_list)
    }

    pub fn complex(&self, key: &str) -> Result<Option<Complex64>, ConfigError> {
        self.get_with(key, parse_complex)
    }

    /// Keys whose names match `pred`, in sorted order.
    pub fn keys_matching(&self, pred: impl Fn(&str) -> bool) -> Vec<String> {
        self.entries.keys().filter(|k| pred(k)).cloned().collect()
    }

    /// Error on the first key that no accessor consumed.
    pub fn finish(self) -> Result<(), ConfigError> {
        let used = self.used.borrow();
        for (key, entry) in self.entries {
            if !used.contains(key) {
                return Err(ConfigError::at(entry.line, "unknown key").field(self.qualified(key)));
            }
        }
        Ok(())
    }
}

/// Comma-separated values; `a:b:step` expands to an inclusive range.
pub fn parse_list<T: FromStr>(s: &str) -> Result<Vec<T>, String>
where
    T::Err: fmt::Display,
{
    let s = s.trim();
    if s.is_empty() {
        return Err("empty list".into());
    }
    s.split(',')
        .map(|item| item.trim().parse::<T>().map_err(|e| format!("cannot parse {:?}: {e}", item.trim())))
        .collect()
}

/// `start:stop:step`, inclusive of `stop` up to rounding.
pub fn parse_range(s: &str) -> Result<Vec<f64>, String> {
    let parts: Vec<&str> = s.split(':').map(str::trim).collect();
    if parts.len() != 3 {
        return Err(format!("range {s:?} must be start:stop:step"));
    }
    let num = |p: &str| p.parse::<f64>().map_err(|e| format!("cannot parse {p:?}: {e}"));
    let (start, stop, step) = (num(parts[0])?, num(parts[1])?, num(parts[2])?);
    if !(step > 0.0) || !start.is_finite() || !stop.is_finite() || stop < start {
        return Err(format!("range {s:?} needs start <= stop and step > 0"));
    }
    let count = ((stop - start) / step + 1e-9).floor() as usize;
    if count > 100_000 {
        return Err(format!("range {s:?} has too many points"));
    }
    // each point from the index, so stop values come out exact when representable
    Ok((0..=count).map(|i| start + i as f64 * step).map(round_decimal).collect())
}

/// Strip binary accumulation noise, e.g. `0.30000000000000004 → 0.3`.
fn round_decimal(v: f64) -> f64 {
    let s = format!("{v:.12}");
    s.parse().unwrap_or(v)
}

/// Float list or range.
pub fn parse_float_axis(s: &str) -> Result<Vec<f64>, String> {
    if s.contains(':') {
        parse_range(s)
    } else {
        parse_list(s)
    }
}

/// Integer list; `a..b` is an inclusive range.
pub fn parse_int_axis<T>(s: &str) -> Result<Vec<T>, String>
where
    T: FromStr + TryFrom<u64>,
    T::Err: fmt::Display,
{
    if let Some((a, b)) = s.split_once("..") {
        let a: u64 = a.trim().parse().map_err(|e| format!("cannot parse {a:?}: {e}"))?;
        let b: u64 = b.trim().parse().map_err(|e| format!("cannot parse {b:?}: {e}"))?;
        if b < a || b - a > 100_000 {
            return Err(format!("invalid integer range {s:?}"));
        }
        (a..=b).map(|v| T::try_from(v).map_err(|_| format!("{v} out of range"))).collect()
    } else {
        parse_list(s)
    }
}

/// `re, im` or a single real number.
pub fn parse_complex(s: &str) -> Result<Complex64, String> {
    let parts: Vec<f64> = parse_list(s)?;
    match parts[..] {
        [re] => Ok(Complex64::new(re, 0.0)),
        [re, im] => Ok(Complex64::new(re, im)),
        _ => Err(format!("complex value {s:?} must be `re` or `re, im`")),
    }
}

pub fn parse_bool(s: &str) -> Result<bool, String> {
    match s {
        "true" | "yes" | "on" | "1" => Ok(true),
        "false" | "no" | "off" | "0" => Ok(false),
        other => Err(format!("expected a boolean, got {other:?}")),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sections_comments_and_lookup() {
        let doc: Document = "name = a # c\n\n[model]\ncoupling = 2.5\n[grid]\npoints=64\n".parse().unwrap();
        assert_eq!(doc.section("").require::<String>("name").unwrap(), "a");
        assert_eq!(doc.section("model").require::<f64>("coupling").unwrap(), 2.5);
        assert_eq!(doc.section("grid").get_or::<usize>("points", 1).unwrap(), 64);
        assert!(doc.section("solver").get::<f64>("dt").unwrap().is_none());
    }

    #[test]
    fn errors_carry_line_and_field() {
        let e = "[model]\ncoupling = x\n".parse::<Document>().unwrap().section("model").require::<f64>("coupling");
        let e = e.unwrap_err();
        assert_eq!(e.line, Some(2));
        assert_eq!(e.field.as_deref(), Some("model.coupling"));
        assert!(e.to_string().starts_with("line 2, field `model.coupling`"));

        let e = "[model]\na = 1\na = 2\n".parse::<Document>().unwrap_err();
        assert_eq!(e.line, Some(3));
        let e = "[model\n".parse::<Document>().unwrap_err();
        assert_eq!(e.line, Some(1));
        let e = "just text\n".parse::<Document>().unwrap_err();
        assert_eq!(e.line, Some(1));
        let e = "[bad name]\n".parse::<Document>().unwrap_err();
        assert_eq!(e.line, Some(1));
    }

    #[test]
    fn unknown_keys_and_sections_are_reported() {
        let doc: Document = "[model]\ncoupling = 1\ntypo = 3\n[extra]\n".parse().unwrap();
        let s = doc.section("model");
        s.require::<f64>("coupling").unwrap();
        let e = s.finish().unwrap_err();
        assert_eq!((e.line, e.field.as_deref()), (Some(3), Some("model.typo")));
        let e = doc.check_sections(&["model"]).unwrap_err();
        assert_eq!(e.line, Some(4));
    }

    #[test]
    fn value_grammars() {
        assert_eq!(parse_list::<f64>("1, 2.5,-3").unwrap(), vec![1.0, 2.5, -3.0]);
        assert_eq!(parse_range("0:1:0.1").unwrap().len(), 11);
        assert_eq!(parse_range("0:1:0.1").unwrap()[3], 0.3);
        assert_eq!(parse_range("0:1:0.1").unwrap()[10], 1.0);
        assert_eq!(parse_int_axis::<u64>("2..4").unwrap(), vec![2, 3, 4]);
        assert_eq!(parse_int_axis::<usize>("2, 5").unwrap(), vec![2, 5]);
        assert_eq!(parse_complex("0.5, -0.25").unwrap(), Complex64::new(0.5, -0.25));
        assert_eq!(parse_complex("2").unwrap(), Complex64::new(2.0, 0.0));
        assert!(parse_complex("1,2,3").is_err());
        assert!(parse_range("1:0:0.1").is_err());
        assert!(parse_bool("maybe").is_err());
    }
}
