//! `key: value` text files (one pair per line, `#` comments, blank lines ignored).

use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Clone, Debug, Default)]
pub struct KvFile {
    path: PathBuf,
    entries: Vec<(String, String, usize)>,
}

impl KvFile {
    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let mut entries: Vec<(String, String, usize)> = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((k, v)) = line.split_once(':') else {
                return Err(Error::Parse {
                    path: path.to_path_buf(),
                    line: idx + 1,
                    msg: format!("expected `key: value`, got {line:?}"),
                });
            };
            let key = k.trim().to_string();
            if entries.iter().any(|(seen, _, _)| *seen == key) {
                return Err(Error::Parse {
                    path: path.to_path_buf(),
                    line: idx + 1,
                    msg: format!("duplicate key {key:?}"),
                });
            }
            entries.push((key, v.trim().to_string(), idx + 1));
        }
        Ok(Self {
            path: path.to_path_buf(),
            entries,
        })
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path)
    }

    fn find(&self, key: &str) -> Option<&(String, String, usize)> {
        self.entries.iter().find(|(k, _, _)| k == key)
    }

    pub fn get_str(&self, key: &str) -> Option<&str> {
        self.find(key).map(|(_, v, _)| v.as_str())
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        match self.find(key) {
            None => Ok(None),
            Some((_, v, line)) => v.parse().map(Some).map_err(|e| Error::Parse {
                path: self.path.clone(),
                line: *line,
                msg: format!("bad value for {key}: {e}"),
            }),
        }
    }

    pub fn require<T: FromStr>(&self, key: &str) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        self.get(key)?.ok_or_else(|| Error::Parse {
            path: self.path.clone(),
            line: 0,
            msg: format!("missing key {key}"),
        })
    }

    /// Comma-separated list value.
    pub fn get_list<T: FromStr>(&self, key: &str) -> Result<Option<Vec<T>>>
    where
        T::Err: std::fmt::Display,
    {
        let Some((_, v, line)) = self.find(key) else {
            return Ok(None);
        };
        v.split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|s| {
                s.parse().map_err(|e| Error::Parse {
                    path: self.path.clone(),
                    line: *line,
                    msg: format!("bad entry {s:?} for {key}: {e}"),
                })
            })
            .collect::<Result<Vec<T>>>()
            .map(Some)
    }

    /// Keys not in `known`, for typo detection.
    pub fn unknown_keys<'a>(&'a self, known: &[&str]) -> Vec<&'a str> {
        self.entries
            .iter()
            .map(|(k, _, _)| k.as_str())
            .filter(|k| !known.contains(k))
            .collect()
    }

    pub fn path(&self) -> &Path {
        &self.path
    }
}
