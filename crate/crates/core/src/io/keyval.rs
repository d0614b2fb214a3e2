//! Line-oriented `key = value` documents.
//!
//! The format is deliberately small: one assignment per line, `#` comments,
//! blank lines ignored, optional `[section]` headers. Every accessor marks
//! its key as used so `check_consumed` can reject typos instead of silently
//! ignoring them.

use crate::error::{Error, Result};
use std::cell::Cell;
use std::collections::HashMap;

#[derive(Debug)]
struct Entry {
    value: String,
    line: usize,
    used: Cell<bool>,
}

#[derive(Debug, Default)]
pub struct KeyVal {
    entries: HashMap<String, Entry>,
}

impl KeyVal {
    /// Parse a flat document; section headers are rejected.
    pub fn parse(text: &str) -> Result<KeyVal> {
        let mut kv = KeyVal::default();
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = strip_comment(raw).trim();
            if line.is_empty() {
                continue;
            }
            if line.starts_with('[') {
                return Err(Error::Parse {
                    line: line_no,
                    msg: "section headers are not allowed in this file".into(),
                });
            }
            kv.insert_line(line, line_no, "")?;
        }
        Ok(kv)
    }

    /// Parse a sectioned document. Keys before the first header land in the
    /// "" section; each `[name]` groups the assignments that follow it.
    pub fn parse_sections(text: &str) -> Result<HashMap<String, KeyVal>> {
        let mut sections: HashMap<String, KeyVal> = HashMap::new();
        let mut current = String::new();
        sections.insert(String::new(), KeyVal::default());
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = strip_comment(raw).trim();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix('[') {
                let name = rest.strip_suffix(']').ok_or(Error::Parse {
                    line: line_no,
                    msg: "unterminated section header".into(),
                })?;
                current = name.trim().to_string();
                sections.entry(current.clone()).or_default();
                continue;
            }
            sections
                .get_mut(&current)
                .expect("current section exists")
                .insert_line(line, line_no, &current)?;
        }
        Ok(sections)
    }

    fn insert_line(&mut self, line: &str, line_no: usize, section: &str) -> Result<()> {
        let (key, value) = line.split_once('=').ok_or(Error::Parse {
            line: line_no,
            msg: "expected 'key = value'".into(),
        })?;
        let key = key.trim().to_string();
        if key.is_empty() {
            return Err(Error::Parse {
                line: line_no,
                msg: "empty key".into(),
            });
        }
        let prev = self.entries.insert(
            key.clone(),
            Entry {
                value: value.trim().to_string(),
                line: line_no,
                used: Cell::new(false),
            },
        );
        if prev.is_some() {
            let place = if section.is_empty() {
                String::new()
            } else {
                format!(" in section [{section}]")
            };
            return Err(Error::Parse {
                line: line_no,
                msg: format!("duplicate key '{key}'{place}"),
            });
        }
        Ok(())
    }

    pub fn contains(&self, key: &str) -> bool {
        self.entries.contains_key(key)
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    fn get(&self, key: &str) -> Option<&Entry> {
        let e = self.entries.get(key)?;
        e.used.set(true);
        Some(e)
    }

    fn missing(key: &str) -> Error {
        Error::Parse {
            line: 0,
            msg: format!("missing required key '{key}'"),
        }
    }

    fn bad(entry: &Entry, key: &str, want: &str) -> Error {
        Error::Parse {
            line: entry.line,
            msg: format!("key '{key}': expected {want}, got '{}'", entry.value),
        }
    }

    pub fn take_str(&self, key: &str) -> Result<String> {
        self.get(key)
            .map(|e| e.value.clone())
            .ok_or_else(|| Self::missing(key))
    }

    pub fn take_str_or(&self, key: &str, default: String) -> Result<String> {
        Ok(self.get(key).map(|e| e.value.clone()).unwrap_or(default))
    }

    pub fn take_f64(&self, key: &str) -> Result<f64> {
        let e = self.get(key).ok_or_else(|| Self::missing(key))?;
        e.value
            .parse()
            .map_err(|_| Self::bad(e, key, "a number"))
    }

    pub fn take_f64_or(&self, key: &str, default: f64) -> Result<f64> {
        match self.get(key) {
            None => Ok(default),
            Some(e) => e.value.parse().map_err(|_| Self::bad(e, key, "a number")),
        }
    }

    pub fn take_usize_or(&self, key: &str, default: usize) -> Result<usize> {
        match self.get(key) {
            None => Ok(default),
            Some(e) => e
                .value
                .parse()
                .map_err(|_| Self::bad(e, key, "a nonnegative integer")),
        }
    }

    pub fn take_u64_or(&self, key: &str, default: u64) -> Result<u64> {
        match self.get(key) {
            None => Ok(default),
            Some(e) => e
                .value
                .parse()
                .map_err(|_| Self::bad(e, key, "a nonnegative integer")),
        }
    }

    pub fn take_bool_or(&self, key: &str, default: bool) -> Result<bool> {
        match self.get(key) {
            None => Ok(default),
            Some(e) => match e.value.as_str() {
                "true" | "yes" | "1" => Ok(true),
                "false" | "no" | "0" => Ok(false),
                _ => Err(Self::bad(e, key, "a boolean")),
            },
        }
    }

    pub fn take_vec3(&self, key: &str) -> Result<[f64; 3]> {
        let e = self.get(key).ok_or_else(|| Self::missing(key))?;
        Self::parse_vec3(e, key)
    }

    pub fn take_vec3_or(&self, key: &str, default: [f64; 3]) -> Result<[f64; 3]> {
        match self.get(key) {
            None => Ok(default),
            Some(e) => Self::parse_vec3(e, key),
        }
    }

    fn parse_vec3(e: &Entry, key: &str) -> Result<[f64; 3]> {
        let parts: Vec<&str> = e.value.split_whitespace().collect();
        if parts.len() != 3 {
            return Err(Self::bad(e, key, "three numbers"));
        }
        let mut out = [0.0; 3];
        for (i, p) in parts.iter().enumerate() {
            out[i] = p.parse().map_err(|_| Self::bad(e, key, "three numbers"))?;
        }
        Ok(out)
    }

    /// Error if any key was never read, listing each with its line number.
    pub fn check_consumed(&self) -> Result<()> {
        let mut unused: Vec<(&str, usize)> = self
            .entries
            .iter()
            .filter(|(_, e)| !e.used.get())
            .map(|(k, e)| (k.as_str(), e.line))
            .collect();
        if unused.is_empty() {
            return Ok(());
        }
        unused.sort_by_key(|(_, line)| *line);
        let list: Vec<String> = unused
            .iter()
            .map(|(k, line)| format!("'{k}' (line {line})"))
            .collect();
        Err(Error::Parse {
            line: unused[0].1,
            msg: format!("unrecognized keys: {}", list.join(", ")),
        })
    }
}

fn strip_comment(line: &str) -> &str {
    match line.find('#') {
        Some(i) => &line[..i],
        None => line,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_values_and_tracks_consumption() {
        let kv = KeyVal::parse("a = 1.5\nb = 0 1 2 # axis\nname = torus\n").unwrap();
        assert_eq!(kv.take_f64("a").unwrap(), 1.5);
        assert_eq!(kv.take_vec3("b").unwrap(), [0.0, 1.0, 2.0]);
        assert!(kv.check_consumed().is_err());
        assert_eq!(kv.take_str("name").unwrap(), "torus");
        kv.check_consumed().unwrap();
    }

    #[test]
    fn reports_line_numbers_for_malformed_input() {
        let err = KeyVal::parse("a = 1\n\nnot an assignment\n").unwrap_err();
        match err {
            Error::Parse { line, .. } => assert_eq!(line, 3),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn rejects_duplicates() {
        assert!(KeyVal::parse("a = 1\na = 2\n").is_err());
    }

    #[test]
    fn sections_split_keys() {
        let text = "seed = 7\n[spectrum]\nh = 0.1\n[geometry]\nh = 0.2\n";
        let sections = KeyVal::parse_sections(text).unwrap();
        assert_eq!(sections[""].take_f64("seed").unwrap(), 7.0);
        assert_eq!(sections["spectrum"].take_f64("h").unwrap(), 0.1);
        assert_eq!(sections["geometry"].take_f64("h").unwrap(), 0.2);
    }

    #[test]
    fn defaults_apply_only_when_absent() {
        let kv = KeyVal::parse("tol = 1e-3\n").unwrap();
        assert_eq!(kv.take_f64_or("tol", 9.0).unwrap(), 1e-3);
        assert_eq!(kv.take_f64_or("missing", 9.0).unwrap(), 9.0);
        assert!(kv.take_bool_or("tol", false).is_err());
    }
}
