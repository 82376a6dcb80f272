// Copyright 2026 The nvmetro Authors
// SPDX-License-Identifier: Apache-2.0

//! Monte-Carlo measurement campaigns: binomial readout, fringe inversion,
//! histograms and normalized phase-variance curves.
//!
//! Fringe model: `μ(φ) = c - (V/2) cos(Nφ + φ₀)`. The working point is
//! `φ = 0`; with the default `φ₀ = -π/2` it sits mid-fringe, where the slope
//! `|dμ/dφ| = VN/2` is largest and the method-of-moments variance is
//! `1/(ν V² N²)`.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::Rng;

/// Binomial readout: successes in `nu` shots with success probability `p`.
pub fn sample_shots(p: f64, nu: u64, rng: &mut Rng) -> Result<u64> {
    rng.binomial(nu, p)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FringeModel {
    pub visibility: f64,
    pub n_spins: usize,
    /// `φ₀`, radians.
    pub offset_phase: f64,
    /// Fringe centre `c`.
    pub center: f64,
}

impl Default for FringeModel {
    fn default() -> Self {
        Self {
            visibility: 0.869,
            n_spins: 2,
            offset_phase: -PI / 2.0,
            center: 0.5,
        }
    }
}

/// A phase estimate; `clamped` marks readouts outside the fringe's range.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhaseEstimate {
    pub phi: f64,
    pub clamped: bool,
}

impl FringeModel {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.visibility) || self.n_spins == 0 {
            return Err(Error::InvalidParameter(format!(
                "fringe needs visibility in [0, 1] and N ≥ 1, got V = {}, N = {}",
                self.visibility, self.n_spins
            )));
        }
        let half = self.visibility / 2.0;
        if self.center - half < 0.0 || self.center + half > 1.0 {
            return Err(Error::InvalidParameter(format!(
                "fringe {} ± {half} leaves [0, 1]",
                self.center
            )));
        }
        Ok(())
    }

    pub fn probability(&self, phi: f64) -> f64 {
        let n = self.n_spins as f64;
        (self.center - 0.5 * self.visibility * (n * phi + self.offset_phase).cos()).clamp(0.0, 1.0)
    }

    /// `|dμ/dφ|` at `φ`.
    pub fn slope(&self, phi: f64) -> f64 {
        let n = self.n_spins as f64;
        (0.5 * self.visibility * n * (n * phi + self.offset_phase).sin()).abs()
    }

    /// `1/(ν V² N²)`, the moment-method variance at a mid-fringe working point.
    pub fn predicted_variance(&self, nu: u64) -> f64 {
        let n = self.n_spins as f64;
        1.0 / (nu as f64 * self.visibility.powi(2) * n * n)
    }

    /// Inverts `μ̂` on the monotonic branch of the fringe containing `φ = 0`.
    pub fn estimate(&self, mu_hat: f64) -> Result<PhaseEstimate> {
        let n = self.n_spins as f64;
        if self.visibility * n == 0.0 {
            return Err(Error::ZeroSlope);
        }
        let x = (self.center - mu_hat) / (0.5 * self.visibility);
        let clamped = !(-1.0..=1.0).contains(&x);
        let a = x.clamp(-1.0, 1.0).acos();
        // branch [kπ, (k+1)π] of ψ = Nφ + φ₀ that holds the working point
        let k = (self.offset_phase / PI).floor();
        let psi = if (k as i64).rem_euclid(2) == 0 {
            k * PI + a
        } else {
            (k + 1.0) * PI - a
        };
        Ok(PhaseEstimate {
            phi: (psi - self.offset_phase) / n,
            clamped,
        })
    }
}

pub fn estimate_phase(successes: u64, nu: u64, model: &FringeModel) -> Result<PhaseEstimate> {
    if nu == 0 || successes > nu {
        return Err(Error::InvalidParameter(format!(
            "{successes} successes in {nu} shots"
        )));
    }
    model.estimate(successes as f64 / nu as f64)
}

/// Phase noise from a field fluctuation: `φ = k ΔB`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JitterModel {
    pub rad_per_gauss: f64,
}

impl Default for JitterModel {
    fn default() -> Self {
        // 0.01 G ↦ 0.015 rad
        Self { rad_per_gauss: 1.5 }
    }
}

pub fn magnetic_phase_jitter(delta_b_gauss: f64, model: &JitterModel) -> f64 {
    model.rad_per_gauss * delta_b_gauss
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MeasurementCampaign {
    pub true_phase: f64,
    /// Shots per estimate, ν.
    pub nu: u64,
    pub n_estimates: usize,
    pub model: FringeModel,
    /// Standard deviation of a quasi-static phase offset redrawn per estimate.
    pub phase_jitter_rad: f64,
    pub seed: u64,
}

impl Default for MeasurementCampaign {
    fn default() -> Self {
        Self {
            true_phase: PI / 60.0,
            nu: 200,
            n_estimates: 10_000,
            model: FringeModel::default(),
            phase_jitter_rad: 0.0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CampaignResult {
    pub estimates: Vec<f64>,
    pub clamped: usize,
    pub mean: f64,
    /// Unbiased sample variance.
    pub variance: f64,
    pub predicted_variance: f64,
}

impl CampaignResult {
    pub fn standard_error_of_mean(&self) -> f64 {
        (self.variance / self.estimates.len() as f64).sqrt()
    }
}

fn mean_and_variance(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = if x.len() > 1 {
        x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    (mean, var)
}

/// Runs the campaign. Estimate `i` uses the child generator `derive(i)` of
/// the campaign seed, so results do not depend on the thread count.
pub fn run_campaign(c: &MeasurementCampaign) -> Result<CampaignResult> {
    c.model.validate()?;
    if c.nu == 0 || c.n_estimates < 2 {
        return Err(Error::InvalidParameter(
            "campaign needs ν ≥ 1 and at least two estimates".into(),
        ));
    }
    if !(c.phase_jitter_rad >= 0.0) {
        return Err(Error::InvalidParameter("phase jitter must be non-negative".into()));
    }
    if c.model.visibility * c.model.n_spins as f64 == 0.0 {
        return Err(Error::ZeroSlope);
    }
    let root = Rng::new(c.seed);
    let results: Vec<PhaseEstimate> = (0..c.n_estimates)
        .into_par_iter()
        .map(|i| {
            let mut rng = root.derive(i as u64);
            let jitter = if c.phase_jitter_rad > 0.0 {
                c.phase_jitter_rad * rng.standard_normal()
            } else {
                0.0
            };
            let p = c.model.probability(c.true_phase + jitter);
            let k = sample_shots(p, c.nu, &mut rng)?;
            estimate_phase(k, c.nu, &c.model)
        })
        .collect::<Result<_>>()?;
    let clamped = results.iter().filter(|r| r.clamped).count();
    let estimates: Vec<f64> = results.into_iter().map(|r| r.phi).collect();
    let (mean, variance) = mean_and_variance(&estimates);
    Ok(CampaignResult {
        estimates,
        clamped,
        mean,
        variance,
        predicted_variance: c.model.predicted_variance(c.nu),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    /// `bins + 1` increasing edges.
    pub edges: Vec<f64>,
    pub counts: Vec<u64>,
    /// Samples outside the edges.
    pub outside: u64,
}

impl Histogram {
    pub fn new(samples: &[f64], lo: f64, hi: f64, bins: usize) -> Result<Self> {
        if bins == 0 || !(hi > lo) {
            return Err(Error::InvalidParameter(format!(
                "histogram needs bins ≥ 1 and lo < hi, got {bins} bins over [{lo}, {hi}]"
            )));
        }
        let width = (hi - lo) / bins as f64;
        let edges = (0..=bins).map(|i| lo + width * i as f64).collect();
        let mut counts = vec![0u64; bins];
        let mut outside = 0;
        for &s in samples {
            if s < lo || s > hi {
                outside += 1;
                continue;
            }
            let b = (((s - lo) / width) as usize).min(bins - 1);
            counts[b] += 1;
        }
        Ok(Self {
            edges,
            counts,
            outside,
        })
    }

    /// Default binning: 200 bins over ±4 predicted σ around the true phase.
    pub fn for_campaign(c: &MeasurementCampaign, r: &CampaignResult) -> Result<Self> {
        let sigma = r.predicted_variance.sqrt();
        Self::new(
            &r.estimates,
            c.true_phase - 4.0 * sigma,
            c.true_phase + 4.0 * sigma,
            200,
        )
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("bin_lo_rad,bin_hi_rad,count\n");
        for (i, c) in self.counts.iter().enumerate() {
            s.push_str(&format!(
                "{:.16e},{:.16e},{c}\n",
                self.edges[i],
                self.edges[i + 1]
            ));
        }
        s
    }
}

/// Phase variance against ν, normalized to the SQL `1/(N ν)`.
#[derive(Debug, Clone, PartialEq)]
pub struct VarianceCurve {
    pub nu_values: Vec<u64>,
    pub variance: Vec<f64>,
    pub normalized_variance: Vec<f64>,
    pub n_spins: usize,
}

impl VarianceCurve {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("nu,variance,normalized_variance,normalized_db\n");
        for ((nu, v), nv) in self
            .nu_values
            .iter()
            .zip(&self.variance)
            .zip(&self.normalized_variance)
        {
            s.push_str(&format!(
                "{nu},{v:.16e},{nv:.16e},{:.16e}\n",
                10.0 * nv.log10()
            ));
        }
        s
    }
}

/// One campaign per ν; campaign `j` is seeded with `derive(j)` of the
/// template seed.
pub fn variance_vs_nu(template: &MeasurementCampaign, nu_values: &[u64]) -> Result<VarianceCurve> {
    let root = Rng::new(template.seed);
    let n = template.model.n_spins as f64;
    let mut variance = Vec::with_capacity(nu_values.len());
    let mut normalized = Vec::with_capacity(nu_values.len());
    for (j, &nu) in nu_values.iter().enumerate() {
        let c = MeasurementCampaign {
            nu,
            seed: root.derive(j as u64).next_u64(),
            ..template.clone()
        };
        let r = run_campaign(&c)?;
        if !(r.variance > 0.0 && r.variance.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "campaign at ν = {nu} produced variance {}",
                r.variance
            )));
        }
        variance.push(r.variance);
        normalized.push(r.variance * n * nu as f64);
    }
    Ok(VarianceCurve {
        nu_values: nu_values.to_vec(),
        variance,
        normalized_variance: normalized,
        n_spins: template.model.n_spins,
    })
}
