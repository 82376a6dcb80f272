// Copyright 2026 The nvmetro Authors
// SPDX-License-Identifier: Apache-2.0

//! Error budgets: `Vis = ∏ Fidelity_i^Power_i`, and the scalar fidelity
//! formulas feeding the individual rows.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BudgetEntry {
    pub label: String,
    pub fidelity: f64,
    /// One standard deviation of `fidelity`; zero when unknown.
    #[serde(default)]
    pub uncertainty: f64,
    pub power: u32,
    /// Set for rows estimated from other measurements rather than measured.
    #[serde(default)]
    pub inferred: bool,
}

impl BudgetEntry {
    pub fn new(label: &str, fidelity: f64, uncertainty: f64, power: u32) -> Self {
        Self {
            label: label.to_string(),
            fidelity,
            uncertainty,
            power,
            inferred: false,
        }
    }

    fn inferred(mut self) -> Self {
        self.inferred = true;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ErrorBudgetTable {
    pub n_spins: usize,
    pub entries: Vec<BudgetEntry>,
}

/// One line of a budget report.
#[derive(Debug, Clone, PartialEq)]
pub struct BudgetReportRow {
    pub label: String,
    pub fidelity: f64,
    pub power: u32,
    pub factor: f64,
    pub running_product: f64,
}

impl ErrorBudgetTable {
    pub fn new(n_spins: usize, entries: Vec<BudgetEntry>) -> Result<Self> {
        let t = Self { n_spins, entries };
        t.validate()?;
        Ok(t)
    }

    /// Two-nuclear-spin interference budget.
    pub fn two_spin() -> Self {
        Self {
            n_spins: 2,
            entries: vec![
                BudgetEntry::new("readout", 0.9914, 0.0004, 2),
                BudgetEntry::new("NV- preparation", 0.9894, 0.0003, 1),
                BudgetEntry::new("NV- survival", 0.9942, 0.0005, 1),
                BudgetEntry::new("electron polarization", 0.9774, 0.0018, 1),
                BudgetEntry::new("13C polarization", 0.9834, 0.0013, 2),
                BudgetEntry::new("14N polarization", 0.9871, 0.0018, 2),
                BudgetEntry::new("CPhase", 0.995, 0.002, 2).inferred(),
                BudgetEntry::new("T1", 0.985, 0.002, 1),
            ],
        }
    }

    /// Three-spin budget: the longer sequence lowers T₁ survival and the two
    /// C_nNOT_e gates enter with their inferred fidelity.
    pub fn three_spin() -> Self {
        let mut t = Self::two_spin();
        t.n_spins = 3;
        for e in t.entries.iter_mut() {
            if e.label == "T1" {
                e.fidelity = 0.979;
                e.uncertainty = 0.003;
            }
        }
        t.entries
            .push(BudgetEntry::new("CnNOTe", 0.959, 0.0, 2).inferred());
        t
    }

    pub fn validate(&self) -> Result<()> {
        for (i, e) in self.entries.iter().enumerate() {
            if !(0.0..=1.0).contains(&e.fidelity) {
                return Err(Error::InvalidParameter(format!(
                    "budget entry `{}` fidelity {} outside [0, 1]",
                    e.label, e.fidelity
                )));
            }
            if !(e.uncertainty >= 0.0 && e.uncertainty.is_finite()) {
                return Err(Error::InvalidParameter(format!(
                    "budget entry `{}` uncertainty must be non-negative",
                    e.label
                )));
            }
            if self.entries[..i].iter().any(|o| o.label == e.label) {
                return Err(Error::InvalidParameter(format!(
                    "duplicate budget label `{}`",
                    e.label
                )));
            }
        }
        Ok(())
    }

    pub fn report(&self) -> Vec<BudgetReportRow> {
        let mut running = 1.0;
        self.entries
            .iter()
            .map(|e| {
                let factor = e.fidelity.powi(e.power as i32);
                running *= factor;
                BudgetReportRow {
                    label: e.label.clone(),
                    fidelity: e.fidelity,
                    power: e.power,
                    factor,
                    running_product: running,
                }
            })
            .collect()
    }

    pub fn report_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{:<24} {:>9} {:>5} {:>9} {:>9}", "item", "fidelity", "power", "factor", "product");
        for r in self.report() {
            let _ = writeln!(
                s,
                "{:<24} {:>9.5} {:>5} {:>9.5} {:>9.5}",
                r.label, r.fidelity, r.power, r.factor, r.running_product
            );
        }
        let _ = writeln!(
            s,
            "overall {:.5} ± {:.5}",
            overall_fidelity(self),
            overall_uncertainty(self)
        );
        s
    }
}

/// `∏ fidelity_i^power_i`.
pub fn overall_fidelity(t: &ErrorBudgetTable) -> f64 {
    t.entries
        .iter()
        .map(|e| e.fidelity.powi(e.power as i32))
        .product()
}

/// First-order propagated standard deviation of the product, with rows
/// taken as independent.
pub fn overall_uncertainty(t: &ErrorBudgetTable) -> f64 {
    let f = overall_fidelity(t);
    let rel: f64 = t
        .entries
        .iter()
        .filter(|e| e.fidelity > 0.0)
        .map(|e| (e.power as f64 * e.uncertainty / e.fidelity).powi(2))
        .sum();
    f * rel.sqrt()
}

fn probability(name: &str, p: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::InvalidParameter(format!(
            "{name} = {p} is not a probability"
        )));
    }
    Ok(())
}

/// NV⁻ preparation fidelity `1 - P_ion - P_NV⁰/(RSB + 1)`, clamped to `[0, 1]`.
pub fn nv_negative_fidelity(p_ion: f64, p_nv0: f64, rsb: f64) -> Result<f64> {
    probability("p_ion", p_ion)?;
    probability("p_nv0", p_nv0)?;
    if !(rsb >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "signal-to-background ratio must be non-negative, got {rsb}"
        )));
    }
    Ok((1.0 - p_ion - p_nv0 / (rsb + 1.0)).clamp(0.0, 1.0))
}

/// Largest nuclear polarization reachable by swapping from an electron with
/// polarization `p_e`: `2 P_e / (1 + P_e)`.
pub fn nuclear_polarization_bound(p_e: f64) -> Result<f64> {
    probability("p_e", p_e)?;
    Ok(2.0 * p_e / (1.0 + p_e))
}

/// Charge-state survival under chopped illumination, `p_joint / p_nv`.
pub fn chopped_survival(p_joint: f64, p_nv: f64) -> Result<f64> {
    probability("p_joint", p_joint)?;
    probability("p_nv", p_nv)?;
    if p_nv == 0.0 {
        return Err(Error::InvalidParameter("p_nv must be positive".into()));
    }
    let r = p_joint / p_nv;
    if r > 1.0 {
        log::warn!("joint probability {p_joint} exceeds NV- probability {p_nv}; clamping survival to 1");
    }
    Ok(r.min(1.0))
}

/// Population-decay curve for the T₁ survival estimate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayCurve {
    pub times_us: Vec<f64>,
    pub values: Vec<f64>,
    /// Long-time plateau of the curve.
    pub plateau: f64,
}

/// Survival probability and its error for a sequence of `duration_us`,
/// using the two samples bracketing the duration:
/// `1 - (2 plateau - y₁ - y₂)/2`, error `|y₁ - y₂|/2`.
pub fn survival_probability_t1(curve: &DecayCurve, duration_us: f64) -> Result<(f64, f64)> {
    if curve.times_us.len() != curve.values.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} times, {} values",
            curve.times_us.len(),
            curve.values.len()
        )));
    }
    if curve.times_us.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidParameter("decay times must increase".into()));
    }
    let k = curve
        .times_us
        .windows(2)
        .position(|w| w[0] <= duration_us && duration_us <= w[1])
        .ok_or_else(|| {
            Error::InvalidParameter(format!(
                "duration {duration_us} µs is not bracketed by the decay samples"
            ))
        })?;
    let (y1, y2) = (curve.values[k], curve.values[k + 1]);
    let p = 1.0 - (2.0 * curve.plateau - y1 - y2) / 2.0;
    Ok((p.clamp(0.0, 1.0), (y1 - y2).abs() / 2.0))
}

/// Visibility as a function of the number of entangled spins.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum VisibilityModel {
    /// `one_spin · per_spin^(N-1)`.
    Geometric { one_spin: f64, per_spin: f64 },
    /// One budget table per spin count.
    Explicit { tables: Vec<ErrorBudgetTable> },
}

impl Default for VisibilityModel {
    fn default() -> Self {
        VisibilityModel::Geometric {
            one_spin: 0.91,
            per_spin: 0.96,
        }
    }
}

pub fn predict_visibility(model: &VisibilityModel, n_spins: usize) -> Result<f64> {
    if n_spins == 0 {
        return Err(Error::InvalidParameter("spin count must be at least 1".into()));
    }
    match model {
        VisibilityModel::Geometric { one_spin, per_spin } => {
            Ok(one_spin * per_spin.powi(n_spins as i32 - 1))
        }
        VisibilityModel::Explicit { tables } => tables
            .iter()
            .find(|t| t.n_spins == n_spins)
            .map(overall_fidelity)
            .ok_or_else(|| {
                Error::InvalidParameter(format!("no budget table for {n_spins} spins"))
            }),
    }
}

/// Measured interference visibility with one standard deviation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeasuredVisibility {
    pub n_spins: usize,
    pub visibility: f64,
    pub uncertainty: f64,
}

/// Measured visibilities; the three-spin value is the two-spin value minus
/// 0.075.
pub const MEASURED_VISIBILITIES: [MeasuredVisibility; 3] = [
    MeasuredVisibility {
        n_spins: 1,
        visibility: 0.91,
        uncertainty: 0.0,
    },
    MeasuredVisibility {
        n_spins: 2,
        visibility: 0.869,
        uncertainty: 0.006,
    },
    MeasuredVisibility {
        n_spins: 3,
        visibility: 0.794,
        uncertainty: 0.009,
    },
];

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn product_examples() {
        assert_eq!(overall_fidelity(&ErrorBudgetTable::new(2, vec![]).unwrap()), 1.0);
        let one = ErrorBudgetTable::new(2, vec![BudgetEntry::new("x", 0.995, 0.0, 2)]).unwrap();
        assert!((overall_fidelity(&one) - 0.990025).abs() < 1e-15);
    }

    #[test]
    fn shipped_tables() {
        let two = overall_fidelity(&ErrorBudgetTable::two_spin());
        assert!((two - 0.868).abs() < 0.007, "{two}");
        let three = overall_fidelity(&ErrorBudgetTable::three_spin());
        assert!((three - 0.794).abs() < 0.01, "{three}");
        let report = ErrorBudgetTable::two_spin().report();
        assert_eq!(report.last().unwrap().running_product, two);
    }

    #[test]
    fn validation() {
        let bad = ErrorBudgetTable::new(2, vec![BudgetEntry::new("x", 1.2, 0.0, 1)]);
        assert!(bad.is_err());
        let dup = ErrorBudgetTable::new(
            2,
            vec![
                BudgetEntry::new("x", 0.9, 0.0, 1),
                BudgetEntry::new("x", 0.9, 0.0, 1),
            ],
        );
        assert!(dup.is_err());
    }

    #[test]
    fn scalar_formula_limits() {
        assert_eq!(nv_negative_fidelity(0.0, 0.3, f64::INFINITY).unwrap(), 1.0);
        assert_eq!(nv_negative_fidelity(0.02, 0.0, 30.0).unwrap(), 0.98);
        assert_eq!(nuclear_polarization_bound(1.0).unwrap(), 1.0);
        assert_eq!(nuclear_polarization_bound(0.0).unwrap(), 0.0);
        assert_eq!(chopped_survival(0.9, 0.9).unwrap(), 1.0);
        assert_eq!(chopped_survival(0.95, 0.9).unwrap(), 1.0);
        assert!(nuclear_polarization_bound(1.1).is_err());
    }

    #[test]
    fn flat_decay_survives() {
        let c = DecayCurve {
            times_us: vec![0.0, 100.0, 200.0],
            values: vec![0.92, 0.92, 0.92],
            plateau: 0.92,
        };
        assert_eq!(survival_probability_t1(&c, 150.0).unwrap(), (1.0, 0.0));
        assert!(survival_probability_t1(&c, 250.0).is_err());
    }

    #[test]
    fn geometric_and_explicit_models() {
        let m = VisibilityModel::default();
        assert!((predict_visibility(&m, 1).unwrap() - 0.91).abs() < 1e-15);
        assert!((predict_visibility(&m, 2).unwrap() - 0.8736).abs() < 1e-12);
        let e = VisibilityModel::Explicit {
            tables: vec![ErrorBudgetTable::two_spin()],
        };
        assert_eq!(
            predict_visibility(&e, 2).unwrap(),
            overall_fidelity(&ErrorBudgetTable::two_spin())
        );
        assert!(predict_visibility(&e, 3).is_err());
    }
}
