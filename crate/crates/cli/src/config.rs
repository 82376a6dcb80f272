// Copyright 2026 The nvmetro Authors
// SPDX-License-Identifier: Apache-2.0

//! TOML run configurations. Unknown keys are rejected, and parse errors carry
//! the line and column of the offending entry.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use nvmetro_core::budget::{BudgetEntry, ErrorBudgetTable};
use nvmetro_core::grape::{GrapeOptions, NoiseModel};
use nvmetro_core::interferometer::CircuitConventions;
use nvmetro_core::metrology::ScalingLaw;
use nvmetro_core::spin::{Channel, SpinSystem};
use nvmetro_core::stats::FringeModel;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

/// Reads and parses `path`; the error names the file and the TOML location.
pub fn load<T: DeserializeOwned>(path: &Path) -> CliResult<T> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    parse(&text).map_err(|e| match e {
        CliError::Config(m) => CliError::Config(format!("{}: {m}", path.display())),
        other => other,
    })
}

pub fn parse<T: DeserializeOwned>(text: &str) -> CliResult<T> {
    toml::from_str(text).map_err(|e| CliError::Config(e.to_string().trim_end().to_string()))
}

pub fn to_toml<T: Serialize>(value: &T) -> CliResult<String> {
    toml::to_string(value).map_err(|e| CliError::Config(format!("cannot serialize config: {e}")))
}

/// Makes a config-relative path absolute against the config's directory.
pub fn resolve_path(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

fn default_init_scale() -> f64 {
    150.0
}

fn default_max_amplitude() -> f64 {
    nvmetro_core::pulse::DEFAULT_MAX_AMPLITUDE_KHZ
}

fn default_sigma_grid() -> Vec<f64> {
    (-6..=6).map(|k| 0.5 * f64::from(k)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PulseShape {
    pub n_slices: usize,
    pub slice_ns: f64,
    pub channels: Vec<Channel>,
    /// Scale of the random initial amplitudes, kHz.
    #[serde(default = "default_init_scale")]
    pub init_scale_khz: f64,
    #[serde(default = "default_max_amplitude")]
    pub max_amplitude_khz: f64,
    /// Waveform file used instead of a random start.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum TargetSpec {
    /// `I_e ⊗ (I - 2P(m_N, m_C))` on the `m_S = 0` manifold.
    Cphase { m_n: i32, two_m_c: i32 },
    Identity {},
    /// Explicit 8×8 unitary, scored on `support` (all states if omitted).
    Matrix {
        real: Vec<Vec<f64>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        imag: Option<Vec<Vec<f64>>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        support: Option<Vec<usize>>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MapGrid {
    /// Detuning axis in units of the noise model's `sigma_mag_khz`.
    #[serde(default = "default_sigma_grid")]
    pub delta_sigma: Vec<f64>,
    /// Amplitude axis in units of `sigma_amp`.
    #[serde(default = "default_sigma_grid")]
    pub delta1_sigma: Vec<f64>,
}

impl Default for MapGrid {
    fn default() -> Self {
        Self {
            delta_sigma: default_sigma_grid(),
            delta1_sigma: default_sigma_grid(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizeConfig {
    #[serde(default)]
    pub seed: u64,
    /// The run fails with exit code 3 below this robust fidelity.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min_fidelity: Option<f64>,
    #[serde(default)]
    pub system: SpinSystem,
    pub pulse: PulseShape,
    pub target: TargetSpec,
    #[serde(default)]
    pub noise: NoiseModel,
    #[serde(default)]
    pub optimizer: GrapeOptions,
    #[serde(default)]
    pub map: MapGrid,
}

fn default_phi_min() -> f64 {
    -PI
}

fn default_phi_max() -> f64 {
    PI
}

fn default_points() -> usize {
    61
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CircuitSpec {
    pub n_spins: usize,
    #[serde(default = "default_phi_min")]
    pub phi_min: f64,
    #[serde(default = "default_phi_max")]
    pub phi_max: f64,
    #[serde(default = "default_points")]
    pub n_points: usize,
    /// Binomial shot noise per point; exact populations if omitted.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shots: Option<u64>,
}

/// How the ideal fringe contrast is reduced. Variants are struct-like so that
/// stray keys are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum VisibilitySpec {
    Ideal {},
    Scalar {
        value: f64,
    },
    TwoSpinBudget {},
    ThreeSpinBudget {},
    Table {
        entries: Vec<BudgetEntry>,
    },
}

impl Default for VisibilitySpec {
    fn default() -> Self {
        VisibilitySpec::Ideal {}
    }
}

impl VisibilitySpec {
    pub fn table(&self, n_spins: usize) -> CliResult<Option<ErrorBudgetTable>> {
        let t = match self {
            VisibilitySpec::Ideal {} => return Ok(None),
            VisibilitySpec::Scalar { value } => ErrorBudgetTable::new(
                n_spins,
                vec![BudgetEntry::new("visibility", *value, 0.0, 1)],
            )?,
            VisibilitySpec::TwoSpinBudget {} => ErrorBudgetTable::two_spin(),
            VisibilitySpec::ThreeSpinBudget {} => ErrorBudgetTable::three_spin(),
            VisibilitySpec::Table { entries } => ErrorBudgetTable::new(n_spins, entries.clone())?,
        };
        Ok(Some(t))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PulseCheck {
    /// Waveform whose propagator replaces both CPhase gates.
    pub pulse: PathBuf,
    #[serde(default)]
    pub noise: NoiseModel,
    /// Phases averaged over; defaults to -π..π in steps of π/4.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phases: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InterfereConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub system: SpinSystem,
    #[serde(default)]
    pub conventions: CircuitConventions,
    pub circuit: CircuitSpec,
    #[serde(default)]
    pub visibility: VisibilitySpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pulse_check: Option<PulseCheck>,
}

fn default_nu_values() -> Vec<u64> {
    vec![50, 100, 200, 500, 1000]
}

fn default_bins() -> usize {
    200
}

fn default_half_width() -> f64 {
    4.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CampaignSpec {
    pub true_phase: f64,
    pub nu: u64,
    pub n_estimates: usize,
    #[serde(default)]
    pub phase_jitter_rad: f64,
    #[serde(default = "default_nu_values")]
    pub nu_values: Vec<u64>,
    #[serde(default = "default_bins")]
    pub histogram_bins: usize,
    /// Histogram half-width in predicted standard deviations.
    #[serde(default = "default_half_width")]
    pub histogram_half_width_sigma: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CampaignConfig {
    #[serde(default)]
    pub seed: u64,
    pub campaign: CampaignSpec,
    pub model: FringeModel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProductCheck {
    pub expected: f64,
    pub tolerance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BudgetConfig {
    pub table: ErrorBudgetTable,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub check: Option<ProductCheck>,
}

fn default_max_n() -> usize {
    30
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScalingConfig {
    #[serde(default = "default_max_n")]
    pub max_n: usize,
    #[serde(default)]
    pub law: ScalingLaw,
}

impl Default for ScalingConfig {
    fn default() -> Self {
        Self {
            max_n: default_max_n(),
            law: ScalingLaw::default(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_key_is_rejected_with_location() {
        let text = "[circuit]\nn_spins = 2\nbogus = 1\n";
        let err = parse::<InterfereConfig>(text).unwrap_err().to_string();
        assert!(err.contains("bogus"), "{err}");
        assert!(err.contains("line 3"), "{err}");
    }

    #[test]
    fn missing_key_is_named() {
        let text = "[campaign]\ntrue_phase = 0.05\nnu = 200\n\n[model]\n";
        let err = parse::<CampaignConfig>(text).unwrap_err().to_string();
        assert!(err.contains("n_estimates"), "{err}");
    }

    #[test]
    fn resolved_config_round_trips() {
        let text = r#"
seed = 4
[pulse]
n_slices = 10
slice_ns = 20.0
channels = ["f1_real", "rf_c"]
[target]
kind = "cphase"
m_n = 1
two_m_c = -1
[noise]
sigma_mag_khz = 10.0
"#;
        let c: OptimizeConfig = parse(text).unwrap();
        let again: OptimizeConfig = parse(&to_toml(&c).unwrap()).unwrap();
        assert_eq!(c, again);
        assert_eq!(c.pulse.channels, vec![Channel::F1Real, Channel::RfC]);
    }

    #[test]
    fn tagged_variants_reject_stray_keys() {
        let err = parse::<InterfereConfig>("[circuit]\nn_spins = 2\n[visibility]\nkind = \"ideal\"\nx = 1\n")
            .unwrap_err()
            .to_string();
        // tagged tables are buffered, so the location is the table header
        assert!(err.contains("line 3") && err.contains("`x`"), "{err}");
        assert!(parse::<TargetSpec>("kind = \"identity\"\nm_n = 1\n").is_err());
    }

    #[test]
    fn visibility_variants() {
        let c: InterfereConfig =
            parse("[circuit]\nn_spins = 2\n[visibility]\nkind = \"scalar\"\nvalue = 0.869\n").unwrap();
        let t = c.visibility.table(2).unwrap().unwrap();
        assert_eq!(nvmetro_core::budget::overall_fidelity(&t), 0.869);
        assert!(VisibilitySpec::Scalar { value: 1.2 }.table(2).is_err());
        assert!(VisibilitySpec::Ideal {}.table(2).unwrap().is_none());
    }
}
