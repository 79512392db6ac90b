//! `key = value` run files with `[section]` headers and `#` comments.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};

/// Sections and the keys each one accepts.
const SCHEMA: &[(&str, &[&str])] = &[
    ("run", &["seed"]),
    ("grid", &["nx", "nz", "h", "hx", "hz"]),
    (
        "model",
        &["path", "raw_speed", "raw_order", "salt", "top_speed", "bottom_speed", "c_min", "c_max", "noise_percent", "reference"],
    ),
    ("start", &["path", "salt", "top_speed", "bottom_speed"]),
    ("acquisition", &["sources", "source_depth", "receivers", "receiver_depth", "x_min", "x_max"]),
    ("data", &["path", "frequencies", "snr_db"]),
    ("basis", &["eta", "etas", "beta", "betas", "n"]),
    (
        "inversion",
        &[
            "frequencies",
            "n_schedule",
            "n_iter",
            "parametrization",
            "refresh_basis",
            "c1",
            "shrink",
            "max_backtracks",
            "initial_fraction",
        ],
    ),
    ("output", &["dir", "snapshots"]),
];

#[derive(Debug, Clone)]
struct Entry {
    value: String,
    line: usize,
}

/// A parsed run file. Every key has been checked against the schema.
#[derive(Debug, Clone)]
pub struct RunConfig {
    path: PathBuf,
    entries: BTreeMap<(String, String), Entry>,
}

impl RunConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path)
    }

    /// Parses `text` as if read from `path` (used to resolve relative paths).
    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let err = |line: usize, message: String| Error::Config {
            path: path.to_path_buf(),
            line,
            message,
        };
        let mut section: Option<&'static [&'static str]> = None;
        let mut section_name = String::new();
        let mut entries = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = raw.split('#').next().unwrap().trim();
            if content.is_empty() {
                continue;
            }
            if let Some(name) = content.strip_prefix('[') {
                let name = name
                    .strip_suffix(']')
                    .ok_or_else(|| err(line, format!("malformed section header `{content}`")))?
                    .trim();
                let keys = SCHEMA
                    .iter()
                    .find(|(s, _)| *s == name)
                    .ok_or_else(|| err(line, format!("unknown section `[{name}]`")))?
                    .1;
                section = Some(keys);
                section_name = name.to_string();
                continue;
            }
            let (key, value) = content
                .split_once('=')
                .map(|(k, v)| (k.trim(), v.trim()))
                .ok_or_else(|| err(line, format!("expected `key = value`, found `{content}`")))?;
            let keys = section.ok_or_else(|| err(line, format!("key `{key}` appears before any section")))?;
            if !keys.contains(&key) {
                return Err(err(line, format!("unknown key `{key}` in [{section_name}]")));
            }
            if value.is_empty() {
                return Err(err(line, format!("key `{key}` has no value")));
            }
            let slot = (section_name.clone(), key.to_string());
            if let Some(prev) = entries.get(&slot) {
                let prev: &Entry = prev;
                return Err(err(line, format!("key `{key}` already set on line {}", prev.line)));
            }
            entries.insert(
                slot,
                Entry {
                    value: value.to_string(),
                    line,
                },
            );
        }
        Ok(Self {
            path: path.to_path_buf(),
            entries,
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    fn entry(&self, section: &str, key: &str) -> Option<&Entry> {
        self.entries.get(&(section.to_string(), key.to_string()))
    }

    fn error(&self, line: usize, message: String) -> Error {
        Error::Config {
            path: self.path.clone(),
            line,
            message,
        }
    }

    /// Error pointing at `section.key`, or at line 0 when the key is absent.
    pub fn invalid(&self, section: &str, key: &str, message: impl std::fmt::Display) -> Error {
        let line = self.entry(section, key).map_or(0, |e| e.line);
        self.error(line, format!("[{section}] {key}: {message}"))
    }

    pub fn has(&self, section: &str, key: &str) -> bool {
        self.entry(section, key).is_some()
    }

    pub fn has_section(&self, section: &str) -> bool {
        self.entries.keys().any(|(s, _)| s == section)
    }

    pub fn str(&self, section: &str, key: &str) -> Option<&str> {
        self.entry(section, key).map(|e| e.value.as_str())
    }

    pub fn get<T: FromStr>(&self, section: &str, key: &str) -> Result<Option<T>> {
        let Some(e) = self.entry(section, key) else {
            return Ok(None);
        };
        e.value
            .parse()
            .map(Some)
            .map_err(|_| self.error(e.line, format!("cannot parse `{}` for `{key}`", e.value)))
    }

    pub fn require<T: FromStr>(&self, section: &str, key: &str) -> Result<T> {
        self.get(section, key)?
            .ok_or_else(|| self.error(0, format!("missing required key `{key}` in [{section}]")))
    }

    pub fn get_or<T: FromStr>(&self, section: &str, key: &str, default: T) -> Result<T> {
        Ok(self.get(section, key)?.unwrap_or(default))
    }

    /// Whitespace- or comma-separated list.
    pub fn list<T: FromStr>(&self, section: &str, key: &str) -> Result<Option<Vec<T>>> {
        let Some(e) = self.entry(section, key) else {
            return Ok(None);
        };
        e.value
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|t| !t.is_empty())
            .map(|t| {
                t.parse()
                    .map_err(|_| self.error(e.line, format!("cannot parse `{t}` in list `{key}`")))
            })
            .collect::<Result<Vec<T>>>()
            .map(Some)
    }

    pub fn bool_or(&self, section: &str, key: &str, default: bool) -> Result<bool> {
        let Some(e) = self.entry(section, key) else {
            return Ok(default);
        };
        match e.value.as_str() {
            "true" | "yes" | "1" => Ok(true),
            "false" | "no" | "0" => Ok(false),
            v => Err(self.error(e.line, format!("expected true or false for `{key}`, found `{v}`"))),
        }
    }

    /// Path value resolved against the directory holding the config file.
    pub fn path_of(&self, section: &str, key: &str) -> Option<PathBuf> {
        let v = self.str(section, key)?;
        let p = Path::new(v);
        Some(if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.path.parent().unwrap_or(Path::new(".")).join(p)
        })
    }
}
