// Copyright 2026 The nvmetro Authors
// SPDX-License-Identifier: Apache-2.0

//! Piecewise-constant control pulses and their waveform file format.
//!
//! Amplitudes are Rabi frequencies in kHz. The waveform file is plain text:
//! `#` comment lines carrying the slice duration and active channels, then a
//! CSV header and one row per slice with all six channel columns. Numbers are
//! written with 17 significant digits so a write/read cycle is lossless.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::numerics::Rng;
use crate::spin::Channel;

/// Default amplitude bound, kHz.
pub const DEFAULT_MAX_AMPLITUDE_KHZ: f64 = 10_000.0;

const WAVEFORM_MAGIC: &str = "# nvmetro pulse waveform v1";
const WAVEFORM_HEADER: &str = "index,f1_re_kHz,f1_im_kHz,f2_re_kHz,f2_im_kHz,rfN_kHz,rfC_kHz";

#[derive(Debug, Clone, PartialEq)]
pub struct PulseSequence {
    slice_ns: f64,
    channels: Vec<Channel>,
    /// `amplitudes[c][k]`, kHz, aligned with `channels`.
    amplitudes: Vec<Vec<f64>>,
    max_amplitude_khz: f64,
}

impl PulseSequence {
    pub fn zeros(channels: &[Channel], n_slices: usize, slice_ns: f64) -> Result<Self> {
        let seq = Self {
            slice_ns,
            channels: channels.to_vec(),
            amplitudes: vec![vec![0.0; n_slices]; channels.len()],
            max_amplitude_khz: DEFAULT_MAX_AMPLITUDE_KHZ,
        };
        seq.validate()?;
        Ok(seq)
    }

    pub fn from_amplitudes(
        channels: &[Channel],
        amplitudes: Vec<Vec<f64>>,
        slice_ns: f64,
    ) -> Result<Self> {
        if amplitudes.len() != channels.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} amplitude rows for {} channels",
                amplitudes.len(),
                channels.len()
            )));
        }
        let seq = Self {
            slice_ns,
            channels: channels.to_vec(),
            amplitudes,
            max_amplitude_khz: DEFAULT_MAX_AMPLITUDE_KHZ,
        };
        seq.validate()?;
        Ok(seq)
    }

    /// Uniform random amplitudes in `[-scale, scale]` kHz.
    pub fn random(
        channels: &[Channel],
        n_slices: usize,
        slice_ns: f64,
        scale_khz: f64,
        rng: &mut Rng,
    ) -> Result<Self> {
        let mut seq = Self::zeros(channels, n_slices, slice_ns)?;
        for row in seq.amplitudes.iter_mut() {
            for a in row.iter_mut() {
                *a = rng.uniform_range(-scale_khz, scale_khz);
            }
        }
        seq.validate()?;
        Ok(seq)
    }

    pub fn with_max_amplitude(mut self, max_khz: f64) -> Result<Self> {
        self.max_amplitude_khz = max_khz;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.slice_ns > 0.0) || !self.slice_ns.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "slice duration must be positive, got {} ns",
                self.slice_ns
            )));
        }
        if !(self.max_amplitude_khz > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "amplitude bound must be positive, got {} kHz",
                self.max_amplitude_khz
            )));
        }
        for (i, c) in self.channels.iter().enumerate() {
            if self.channels[..i].contains(c) {
                return Err(Error::InvalidParameter(format!("channel {c} listed twice")));
            }
        }
        let n = self.n_slices();
        if n == 0 {
            return Err(Error::InvalidParameter("pulse has no slices".into()));
        }
        for (c, row) in self.channels.iter().zip(&self.amplitudes) {
            if row.len() != n {
                return Err(Error::DimensionMismatch(format!(
                    "channel {c} has {} slices, expected {n}",
                    row.len()
                )));
            }
            if let Some(a) = row
                .iter()
                .find(|a| !a.is_finite() || a.abs() > self.max_amplitude_khz)
            {
                return Err(Error::InvalidParameter(format!(
                    "channel {c} amplitude {a} kHz exceeds bound {} kHz",
                    self.max_amplitude_khz
                )));
            }
        }
        Ok(())
    }

    pub fn n_slices(&self) -> usize {
        self.amplitudes.first().map_or(0, Vec::len)
    }

    pub fn slice_ns(&self) -> f64 {
        self.slice_ns
    }

    pub fn slice_us(&self) -> f64 {
        self.slice_ns * 1e-3
    }

    pub fn duration_us(&self) -> f64 {
        self.slice_us() * self.n_slices() as f64
    }

    /// Midpoint of slice `k`, µs.
    pub fn midpoint_us(&self, k: usize) -> f64 {
        (k as f64 + 0.5) * self.slice_us()
    }

    pub fn channels(&self) -> &[Channel] {
        &self.channels
    }

    pub fn max_amplitude_khz(&self) -> f64 {
        self.max_amplitude_khz
    }

    /// Amplitude of `channel` in slice `k`; zero for inactive channels.
    pub fn amplitude(&self, channel: Channel, k: usize) -> f64 {
        self.channels
            .iter()
            .position(|&c| c == channel)
            .map_or(0.0, |i| self.amplitudes[i][k])
    }

    pub fn channel_amplitudes(&self, index: usize) -> &[f64] {
        &self.amplitudes[index]
    }

    /// Flattened parameters, channel-major.
    pub fn params(&self) -> Vec<f64> {
        self.amplitudes.iter().flatten().copied().collect()
    }

    /// Replace the parameters, clipping each to the amplitude bound.
    pub fn set_params(&mut self, params: &[f64]) -> Result<()> {
        let n = self.n_slices();
        if params.len() != n * self.channels.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} parameters for {} channels × {n} slices",
                params.len(),
                self.channels.len()
            )));
        }
        let m = self.max_amplitude_khz;
        for (row, chunk) in self.amplitudes.iter_mut().zip(params.chunks(n)) {
            for (a, &p) in row.iter_mut().zip(chunk) {
                *a = p.clamp(-m, m);
            }
        }
        Ok(())
    }

    /// Waveform file text.
    pub fn to_waveform(&self) -> String {
        let names: Vec<&str> = self.channels.iter().map(|c| c.name()).collect();
        let mut out = String::new();
        let _ = writeln!(out, "{WAVEFORM_MAGIC}");
        let _ = writeln!(out, "# slice_duration_ns = {:.16e}", self.slice_ns);
        let _ = writeln!(out, "# n_slices = {}", self.n_slices());
        let _ = writeln!(out, "# channels = {}", names.join(","));
        let _ = writeln!(out, "# max_amplitude_khz = {:.16e}", self.max_amplitude_khz);
        let _ = writeln!(out, "{WAVEFORM_HEADER}");
        for k in 0..self.n_slices() {
            let _ = write!(out, "{k}");
            for ch in Channel::ALL {
                let _ = write!(out, ",{:.16e}", self.amplitude(ch, k));
            }
            out.push('\n');
        }
        out
    }

    pub fn from_waveform(text: &str) -> Result<Self> {
        let parse_err = |line: usize, message: String| Error::Parse { line, message };
        let mut slice_ns = None;
        let mut channels: Option<Vec<Channel>> = None;
        let mut max_amp = DEFAULT_MAX_AMPLITUDE_KHZ;
        let mut declared_slices = None;
        let mut header_seen = false;
        let mut columns: Vec<Vec<f64>> = vec![Vec::new(); Channel::ALL.len()];

        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = raw.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(comment) = line.strip_prefix('#') {
                if let Some((key, value)) = comment.split_once('=') {
                    let value = value.trim();
                    let num = || {
                        value
                            .parse::<f64>()
                            .map_err(|e| parse_err(line_no, format!("{}: {e}", key.trim())))
                    };
                    match key.trim() {
                        "slice_duration_ns" => slice_ns = Some(num()?),
                        "max_amplitude_khz" => max_amp = num()?,
                        "n_slices" => {
                            declared_slices = Some(value.parse::<usize>().map_err(|e| {
                                parse_err(line_no, format!("n_slices: {e}"))
                            })?)
                        }
                        "channels" => {
                            let list = value
                                .split(',')
                                .filter(|s| !s.trim().is_empty())
                                .map(|s| s.parse::<Channel>())
                                .collect::<Result<Vec<_>>>()
                                .map_err(|e| parse_err(line_no, e.to_string()))?;
                            channels = Some(list);
                        }
                        _ => {}
                    }
                }
                continue;
            }
            if !header_seen {
                if line != WAVEFORM_HEADER {
                    return Err(parse_err(line_no, format!("expected header `{WAVEFORM_HEADER}`")));
                }
                header_seen = true;
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 1 + Channel::ALL.len() {
                return Err(parse_err(
                    line_no,
                    format!("expected {} fields, found {}", 1 + Channel::ALL.len(), fields.len()),
                ));
            }
            let index: usize = fields[0]
                .trim()
                .parse()
                .map_err(|e| parse_err(line_no, format!("index: {e}")))?;
            if index != columns[0].len() {
                return Err(parse_err(line_no, format!("slice index {index} out of order")));
            }
            for (col, field) in columns.iter_mut().zip(&fields[1..]) {
                col.push(
                    field
                        .trim()
                        .parse::<f64>()
                        .map_err(|e| parse_err(line_no, format!("amplitude `{field}`: {e}")))?,
                );
            }
        }

        let slice_ns =
            slice_ns.ok_or_else(|| parse_err(0, "missing `# slice_duration_ns = ...`".into()))?;
        let channels = channels.unwrap_or_else(|| Channel::ALL.to_vec());
        if let Some(n) = declared_slices {
            if n != columns[0].len() {
                return Err(parse_err(
                    0,
                    format!("declared {n} slices, found {}", columns[0].len()),
                ));
            }
        }
        for ch in Channel::ALL {
            if !channels.contains(&ch) && columns[ch.column()].iter().any(|&a| a != 0.0) {
                return Err(parse_err(
                    0,
                    format!("inactive channel {ch} has non-zero amplitudes"),
                ));
            }
        }
        let amplitudes = channels.iter().map(|c| columns[c.column()].clone()).collect();
        PulseSequence::from_amplitudes(&channels, amplitudes, slice_ns)?.with_max_amplitude(max_amp)
    }

    pub fn write_waveform(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_waveform())?;
        Ok(())
    }

    pub fn read_waveform(path: &Path) -> Result<Self> {
        Self::from_waveform(&std::fs::read_to_string(path)?)
    }
}
