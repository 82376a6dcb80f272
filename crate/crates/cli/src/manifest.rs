// Copyright 2026 The nvmetro Authors
// SPDX-License-Identifier: Apache-2.0

//! Plain-text run manifests.
//!
//! ```text
//! # nvmetro run manifest
//! command = campaign
//! version = 0.1.0
//! seed = 7
//! rng = chacha8
//! threads = 1
//! wall_clock_s = 0.412
//! output <sha256> histogram.csv
//! output <sha256> variance_curve.csv
//! --- config ---
//! <resolved TOML>
//! ```
//!
//! Timing and thread count are informational; every output file is a pure
//! function of the command, the resolved config and the seed.

use std::fmt::Write as _;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

pub const MANIFEST_FILE: &str = "manifest.txt";
const HEADER: &str = "# nvmetro run manifest";
const CONFIG_MARKER: &str = "--- config ---";

#[derive(Debug, Clone, PartialEq)]
pub struct RunManifest {
    pub command: String,
    pub version: String,
    pub seed: u64,
    pub rng: String,
    pub threads: usize,
    pub wall_clock_s: f64,
    /// `(sha256 hex, file name)` in write order.
    pub outputs: Vec<(String, String)>,
    pub config: String,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

impl RunManifest {
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{HEADER}");
        let _ = writeln!(s, "command = {}", self.command);
        let _ = writeln!(s, "version = {}", self.version);
        let _ = writeln!(s, "seed = {}", self.seed);
        let _ = writeln!(s, "rng = {}", self.rng);
        let _ = writeln!(s, "threads = {}", self.threads);
        let _ = writeln!(s, "wall_clock_s = {:.3}", self.wall_clock_s);
        for (digest, name) in &self.outputs {
            let _ = writeln!(s, "output {digest} {name}");
        }
        let _ = writeln!(s, "{CONFIG_MARKER}");
        s.push_str(&self.config);
        s
    }

    pub fn parse(text: &str) -> CliResult<Self> {
        let bad = |line: usize, m: &str| CliError::Config(format!("manifest line {line}: {m}"));
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, l)) if l == HEADER => {}
            _ => return Err(bad(1, "missing manifest header")),
        }
        let mut m = RunManifest {
            command: String::new(),
            version: String::new(),
            seed: 0,
            rng: String::new(),
            threads: 0,
            wall_clock_s: 0.0,
            outputs: Vec::new(),
            config: String::new(),
        };
        let mut in_config = false;
        let mut seen_config = false;
        for (i, line) in lines {
            let n = i + 1;
            if in_config {
                m.config.push_str(line);
                m.config.push('\n');
                continue;
            }
            if line == CONFIG_MARKER {
                in_config = true;
                seen_config = true;
                continue;
            }
            if let Some(rest) = line.strip_prefix("output ") {
                let (digest, name) = rest.split_once(' ').ok_or_else(|| bad(n, "malformed output entry"))?;
                m.outputs.push((digest.to_string(), name.to_string()));
                continue;
            }
            let (key, value) = line.split_once(" = ").ok_or_else(|| bad(n, "expected `key = value`"))?;
            match key {
                "command" => m.command = value.to_string(),
                "version" => m.version = value.to_string(),
                "seed" => m.seed = value.parse().map_err(|_| bad(n, "seed is not a u64"))?,
                "rng" => m.rng = value.to_string(),
                "threads" => m.threads = value.parse().map_err(|_| bad(n, "threads is not a count"))?,
                "wall_clock_s" => {
                    m.wall_clock_s = value.parse().map_err(|_| bad(n, "wall_clock_s is not a number"))?
                }
                other => return Err(bad(n, &format!("unknown key `{other}`"))),
            }
        }
        if m.command.is_empty() || !seen_config {
            return Err(CliError::Config("manifest lacks a command or config section".into()));
        }
        Ok(m)
    }

    pub fn read(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn known_digest() {
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }

    #[test]
    fn text_round_trip() {
        let m = RunManifest {
            command: "budget".into(),
            version: "0.1.0".into(),
            seed: 3,
            rng: "chacha8".into(),
            threads: 2,
            wall_clock_s: 0.25,
            outputs: vec![("ab".into(), "report.txt".into())],
            config: "[table]\nn_spins = 2\n".into(),
        };
        assert_eq!(RunManifest::parse(&m.to_text()).unwrap(), m);
        assert!(RunManifest::parse("command = x\n").is_err());
    }
}
