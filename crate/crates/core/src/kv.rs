//! Line-oriented `key = value` files grouped under `[section]` headers.
//!
//! Used for the preference registry, the edge policy file and the server
//! list. `#` starts a comment line. Serialization is canonical: sections and
//! keys are written back in the order they are stored, one blank line
//! between sections, so two stores of the same document are byte-identical.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("line {line}: {message}")]
pub struct KvError {
    pub line: usize,
    pub message: String,
}

impl KvError {
    pub fn new(line: usize, message: impl Into<String>) -> Self {
        Self {
            line,
            message: message.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Entry {
    pub key: String,
    pub value: String,
    pub line: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Section {
    pub name: String,
    pub line: usize,
    pub entries: Vec<Entry>,
}

impl Section {
    pub fn new(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            line: 0,
            entries: Vec::new(),
        }
    }

    pub fn push(&mut self, key: &str, value: impl fmt::Display) {
        self.entries.push(Entry {
            key: key.to_string(),
            value: value.to_string(),
            line: 0,
        });
    }

    pub fn get(&self, key: &str) -> Option<&Entry> {
        self.entries.iter().find(|e| e.key == key)
    }

    /// Typed access that records which keys were consumed, so leftovers can
    /// be reported as unknown.
    pub fn reader(&self) -> SectionReader<'_> {
        SectionReader {
            section: self,
            used: vec![false; self.entries.len()],
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Document {
    pub sections: Vec<Section>,
}

impl Document {
    pub fn parse(text: &str) -> Result<Self, KvError> {
        let mut sections: Vec<Section> = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let trimmed = raw.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            if let Some(rest) = trimmed.strip_prefix('[') {
                let name = rest
                    .strip_suffix(']')
                    .ok_or_else(|| KvError::new(line, "unterminated section header"))?
                    .trim();
                if name.is_empty() {
                    return Err(KvError::new(line, "empty section name"));
                }
                if sections.iter().any(|s| s.name == name) {
                    return Err(KvError::new(line, format!("duplicate section [{name}]")));
                }
                sections.push(Section {
                    name: name.to_string(),
                    line,
                    entries: Vec::new(),
                });
                continue;
            }
            let (key, value) = trimmed
                .split_once('=')
                .ok_or_else(|| KvError::new(line, "expected `key = value`"))?;
            let key = key.trim();
            if key.is_empty() {
                return Err(KvError::new(line, "empty key"));
            }
            let section = sections
                .last_mut()
                .ok_or_else(|| KvError::new(line, "key outside of any section"))?;
            if section.get(key).is_some() {
                return Err(KvError::new(
                    line,
                    format!("duplicate key `{key}` in [{}]", section.name),
                ));
            }
            section.entries.push(Entry {
                key: key.to_string(),
                value: value.trim().to_string(),
                line,
            });
        }
        Ok(Self { sections })
    }

    pub fn section(&self, name: &str) -> Option<&Section> {
        self.sections.iter().find(|s| s.name == name)
    }
}

impl fmt::Display for Document {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, section) in self.sections.iter().enumerate() {
            if i > 0 {
                writeln!(f)?;
            }
            writeln!(f, "[{}]", section.name)?;
            for entry in &section.entries {
                writeln!(f, "{} = {}", entry.key, entry.value)?;
            }
        }
        Ok(())
    }
}

pub struct SectionReader<'a> {
    section: &'a Section,
    used: Vec<bool>,
}

impl SectionReader<'_> {
    fn lookup(&mut self, key: &str) -> Option<&Entry> {
        let idx = self.section.entries.iter().position(|e| e.key == key)?;
        self.used[idx] = true;
        Some(&self.section.entries[idx])
    }

    pub fn opt<T>(&mut self, key: &str) -> Result<Option<T>, KvError>
    where
        T: FromStr,
        T::Err: fmt::Display,
    {
        match self.lookup(key) {
            None => Ok(None),
            Some(entry) => entry.value.parse::<T>().map(Some).map_err(|e| {
                KvError::new(entry.line, format!("invalid value for `{key}`: {e}"))
            }),
        }
    }

    pub fn req<T>(&mut self, key: &str) -> Result<T, KvError>
    where
        T: FromStr,
        T::Err: fmt::Display,
    {
        let line = self.section.line;
        let name = self.section.name.clone();
        self.opt(key)?
            .ok_or_else(|| KvError::new(line, format!("missing key `{key}` in [{name}]")))
    }

    /// Comma-separated list; empty value yields an empty list.
    pub fn list(&mut self, key: &str) -> Vec<String> {
        match self.lookup(key) {
            None => Vec::new(),
            Some(entry) => split_list(&entry.value),
        }
    }

    /// Line of `key` (or of the section header when absent), for errors.
    pub fn line_of(&self, key: &str) -> usize {
        self.section
            .get(key)
            .map(|e| e.line)
            .unwrap_or(self.section.line)
    }

    pub fn finish(self) -> Result<(), KvError> {
        match self.used.iter().position(|u| !u) {
            None => Ok(()),
            Some(idx) => {
                let entry = &self.section.entries[idx];
                Err(KvError::new(
                    entry.line,
                    format!("unknown key `{}` in [{}]", entry.key, self.section.name),
                ))
            }
        }
    }
}

pub fn split_list(value: &str) -> Vec<String> {
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(str::to_string)
        .collect()
}
