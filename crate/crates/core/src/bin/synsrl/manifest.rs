//! Flat `key=value` run manifests.
//!
//! ```text
//! synsrl-manifest 1
//! version=0.1.0
//! command=train
//! arg.0=--train=data/train.txt
//! ...
//! input.0.path=data/train.txt
//! input.0.sha256=<hex>
//! output.0.path=runs/b1-seed1.ckpt
//! output.0.sha256=<hex>
//! ```
//!
//! `arg.*` holds every flag with its resolved value, defaults included, so
//! replay never consults a config file or changed defaults.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context, Result};
use sha2::{Digest, Sha256};
use synsrl_core::Error;

const MAGIC: &str = "synsrl-manifest 1";

#[derive(Clone, Debug, Default, PartialEq)]
pub struct RunManifest {
    pub version: String,
    pub command: String,
    pub args: Vec<String>,
    pub seeds: Vec<u64>,
    /// Informational settings derived from the flags (resolved objective defaults).
    pub resolved: Vec<(String, String)>,
    pub inputs: Vec<(PathBuf, String)>,
    pub outputs: Vec<(PathBuf, String)>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    let mut out = String::with_capacity(64);
    for b in digest {
        let _ = write!(out, "{b:02x}");
    }
    out
}

pub fn file_digest(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    Ok(sha256_hex(&bytes))
}

impl RunManifest {
    pub fn new(command: &str, args: Vec<String>) -> Self {
        RunManifest {
            version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.to_string(),
            args,
            ..RunManifest::default()
        }
    }

    pub fn add_input(&mut self, path: &Path) -> Result<()> {
        let digest = file_digest(path)?;
        self.inputs.push((path.to_path_buf(), digest));
        Ok(())
    }

    pub fn add_output(&mut self, path: &Path) -> Result<()> {
        let digest = file_digest(path)?;
        self.outputs.push((path.to_path_buf(), digest));
        Ok(())
    }

    /// Records in-memory output such as a report printed to stdout.
    pub fn add_output_bytes(&mut self, name: &str, bytes: &[u8]) {
        self.outputs.push((PathBuf::from(name), sha256_hex(bytes)));
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{MAGIC}");
        let _ = writeln!(out, "version={}", self.version);
        let _ = writeln!(out, "command={}", self.command);
        for (i, a) in self.args.iter().enumerate() {
            let _ = writeln!(out, "arg.{i}={a}");
        }
        let seeds: Vec<String> = self.seeds.iter().map(u64::to_string).collect();
        let _ = writeln!(out, "seeds={}", seeds.join(","));
        for (k, v) in &self.resolved {
            let _ = writeln!(out, "resolved.{k}={v}");
        }
        for (i, (p, d)) in self.inputs.iter().enumerate() {
            let _ = writeln!(out, "input.{i}.path={}", p.display());
            let _ = writeln!(out, "input.{i}.sha256={d}");
        }
        for (i, (p, d)) in self.outputs.iter().enumerate() {
            let _ = writeln!(out, "output.{i}.path={}", p.display());
            let _ = writeln!(out, "output.{i}.sha256={d}");
        }
        out
    }

    pub fn parse_str(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        if lines.next() != Some(MAGIC) {
            return Err(Error::Format(format!("manifest must start with {MAGIC:?}")).into());
        }
        let mut map = BTreeMap::new();
        for (n, line) in lines.enumerate() {
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Format(format!("manifest line {} has no '='", n + 2)))?;
            if map.insert(k.to_string(), v.to_string()).is_some() {
                return Err(Error::Format(format!("manifest key {k:?} repeats")).into());
            }
        }
        let take = |map: &mut BTreeMap<String, String>, k: &str| {
            map.remove(k)
                .ok_or_else(|| anyhow!(Error::Format(format!("manifest lacks {k:?}"))))
        };
        let mut m = RunManifest {
            version: take(&mut map, "version")?,
            command: take(&mut map, "command")?,
            ..RunManifest::default()
        };
        let seeds = take(&mut map, "seeds")?;
        if !seeds.is_empty() {
            m.seeds = seeds
                .split(',')
                .map(|s| s.parse().map_err(|_| Error::Format(format!("bad seed {s:?}"))))
                .collect::<std::result::Result<_, _>>()?;
        }
        for i in 0.. {
            match map.remove(&format!("arg.{i}")) {
                Some(a) => m.args.push(a),
                None => break,
            }
        }
        for (kind, list) in [("input", &mut m.inputs), ("output", &mut m.outputs)] {
            for i in 0.. {
                let path = map.remove(&format!("{kind}.{i}.path"));
                let digest = map.remove(&format!("{kind}.{i}.sha256"));
                match (path, digest) {
                    (Some(p), Some(d)) => list.push((PathBuf::from(p), d)),
                    (None, None) => break,
                    _ => return Err(Error::Format(format!("{kind}.{i} lacks a path or digest")).into()),
                }
            }
        }
        let resolved: Vec<String> = map.keys().filter(|k| k.starts_with("resolved.")).cloned().collect();
        for k in resolved {
            let v = map.remove(&k).unwrap_or_default();
            m.resolved.push((k["resolved.".len()..].to_string(), v));
        }
        if let Some(k) = map.keys().next() {
            return Err(Error::Format(format!("unknown manifest key {k:?}")).into());
        }
        Ok(m)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text())
            .map_err(|e| Error::Io {
                path: path.to_path_buf(),
                source: e,
            })
            .with_context(|| format!("writing manifest {}", path.display()))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
        Self::parse_str(&text)
    }
}
