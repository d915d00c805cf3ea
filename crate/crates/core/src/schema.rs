//! Line-oriented text format for [`SystemConfig`].
//!
//! Grammar (one directive per line, `#` starts a comment, blank lines are
//! ignored; parsing is strict and rejects unknown keys):
//!
//! ```text
//! tau <seconds>                         # segment duration, required
//! ds <seconds>                          # startup delay, required
//! x <seconds>                           # tail threshold, required
//! theta <weight>                        # tradeoff in [0,1], required
//! streams <count>                       # parallel streams per server, optional (default 1)
//! server alpha=<rate> beta=<shift>      # one per node, order defines the index
//! file segments=<L> k=<k> n=<n> lambda=<rate> [cache=<j>:<L>,<j>:<L>,...]
//! ```
//!
//! File ids are assigned by position.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::model::{ServerParams, SystemConfig, VideoFile};

pub fn parse_config(text: &str) -> Result<SystemConfig> {
    let mut servers = Vec::new();
    let mut files: Vec<VideoFile> = Vec::new();
    let mut tau = None;
    let mut ds = None;
    let mut x = None;
    let mut theta = None;
    let mut streams: Option<u32> = None;

    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let lineno = lineno + 1;
        let mut parts = line.split_whitespace();
        let key = parts.next().unwrap();
        match key {
            "tau" => set_scalar(&mut tau, parts.next(), "tau", lineno)?,
            "ds" => set_scalar(&mut ds, parts.next(), "ds", lineno)?,
            "x" => set_scalar(&mut x, parts.next(), "x", lineno)?,
            "theta" => set_scalar(&mut theta, parts.next(), "theta", lineno)?,
            "streams" => {
                if streams.is_some() {
                    return Err(parse_err(lineno, "duplicate key streams"));
                }
                let v = parts
                    .next()
                    .ok_or_else(|| parse_err(lineno, "streams needs a value"))?;
                streams = Some(parse_num::<u32>(v, "streams", lineno)?);
            }
            "server" => {
                let fields = parse_fields(parts, lineno, &["alpha", "beta"])?;
                let alpha = require(&fields, "alpha", lineno)?;
                let beta = require(&fields, "beta", lineno)?;
                servers.push(
                    ServerParams::new(
                        parse_num(alpha, "alpha", lineno)?,
                        parse_num(beta, "beta", lineno)?,
                    )
                    .map_err(|e| parse_err(lineno, &e.to_string()))?,
                );
            }
            "file" => {
                let fields = parse_fields(parts, lineno, &["segments", "k", "n", "lambda", "cache"])?;
                let id = files.len();
                let mut file = VideoFile::new(
                    id,
                    parse_num(require(&fields, "segments", lineno)?, "segments", lineno)?,
                    parse_num(require(&fields, "k", lineno)?, "k", lineno)?,
                    parse_num(require(&fields, "n", lineno)?, "n", lineno)?,
                    parse_num(require(&fields, "lambda", lineno)?, "lambda", lineno)?,
                );
                if let Some(cache) = fields.get("cache") {
                    file.cached_prefix = parse_cache(cache, lineno)?;
                }
                files.push(file);
            }
            other => return Err(parse_err(lineno, &format!("unknown key {other:?}"))),
        }
        // trailing junk after scalars
        if matches!(key, "tau" | "ds" | "x" | "theta" | "streams") {
            if let Some(junk) = line.split_whitespace().nth(2) {
                return Err(parse_err(lineno, &format!("unexpected token {junk:?}")));
            }
        }
    }

    let cfg = SystemConfig {
        servers,
        files,
        segment_duration: tau.ok_or_else(|| Error::Config("missing tau".into()))?,
        startup_delay: ds.ok_or_else(|| Error::Config("missing ds".into()))?,
        tail_threshold: x.ok_or_else(|| Error::Config("missing x".into()))?,
        tradeoff: theta.ok_or_else(|| Error::Config("missing theta".into()))?,
        streams_per_server: streams.unwrap_or(1),
    };
    cfg.validate()?;
    Ok(cfg)
}

pub fn read_config(path: &std::path::Path) -> Result<SystemConfig> {
    let text = std::fs::read_to_string(path)?;
    parse_config(&text)
}

/// Canonical text form; `parse_config(format_config(cfg))` round-trips.
pub fn format_config(cfg: &SystemConfig) -> String {
    let mut out = String::new();
    writeln!(out, "tau {}", cfg.segment_duration).unwrap();
    writeln!(out, "ds {}", cfg.startup_delay).unwrap();
    writeln!(out, "x {}", cfg.tail_threshold).unwrap();
    writeln!(out, "theta {}", cfg.tradeoff).unwrap();
    writeln!(out, "streams {}", cfg.streams_per_server).unwrap();
    for s in &cfg.servers {
        writeln!(out, "server alpha={} beta={}", s.alpha, s.beta).unwrap();
    }
    for f in &cfg.files {
        write!(
            out,
            "file segments={} k={} n={} lambda={}",
            f.segments, f.data_chunks, f.coded_chunks, f.arrival_rate
        )
        .unwrap();
        if !f.cached_prefix.is_empty() {
            let entries: Vec<String> = f
                .cached_prefix
                .iter()
                .map(|(j, l)| format!("{j}:{l}"))
                .collect();
            write!(out, " cache={}", entries.join(",")).unwrap();
        }
        out.push('\n');
    }
    out
}

pub fn write_config(cfg: &SystemConfig, path: &std::path::Path) -> Result<()> {
    std::fs::write(path, format_config(cfg))?;
    Ok(())
}

fn parse_err(line: usize, detail: &str) -> Error {
    Error::Parse {
        line,
        detail: detail.to_string(),
    }
}

fn set_scalar(slot: &mut Option<f64>, value: Option<&str>, key: &str, line: usize) -> Result<()> {
    if slot.is_some() {
        return Err(parse_err(line, &format!("duplicate key {key}")));
    }
    let v = value.ok_or_else(|| parse_err(line, &format!("{key} needs a value")))?;
    *slot = Some(parse_num(v, key, line)?);
    Ok(())
}

fn parse_num<T: std::str::FromStr>(value: &str, key: &str, line: usize) -> Result<T> {
    value
        .parse()
        .map_err(|_| parse_err(line, &format!("cannot parse {key} value {value:?}")))
}

fn parse_fields<'a>(
    parts: impl Iterator<Item = &'a str>,
    line: usize,
    allowed: &[&str],
) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for tok in parts {
        let (key, value) = tok
            .split_once('=')
            .ok_or_else(|| parse_err(line, &format!("expected key=value, got {tok:?}")))?;
        if !allowed.contains(&key) {
            return Err(parse_err(line, &format!("unknown field {key:?}")));
        }
        if out.insert(key.to_string(), value.to_string()).is_some() {
            return Err(parse_err(line, &format!("duplicate field {key:?}")));
        }
    }
    Ok(out)
}

fn require<'m>(fields: &'m BTreeMap<String, String>, key: &str, line: usize) -> Result<&'m str> {
    fields
        .get(key)
        .map(|s| s.as_str())
        .ok_or_else(|| parse_err(line, &format!("missing field {key}")))
}

fn parse_cache(value: &str, line: usize) -> Result<BTreeMap<usize, u32>> {
    let mut map = BTreeMap::new();
    for entry in value.split(',') {
        let (j, l) = entry
            .split_once(':')
            .ok_or_else(|| parse_err(line, &format!("cache entry {entry:?} not server:prefix")))?;
        map.insert(
            parse_num(j, "cache server", line)?,
            parse_num(l, "cache prefix", line)?,
        );
    }
    Ok(map)
}
