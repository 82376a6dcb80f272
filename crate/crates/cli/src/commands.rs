// Copyright 2026 The nvmetro Authors
// SPDX-License-Identifier: Apache-2.0

//! The experiment commands. Each one reads a resolved configuration, writes
//! its outputs through [`Outputs`] and reports a [`Verdict`].

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use log::info;
use nvmetro_core::budget::overall_fidelity;
use nvmetro_core::grape::{
    fidelity_map, gate_fidelity, grape_optimize, propagate, ControlSystem, GateTarget,
};
use nvmetro_core::interferometer::{extract_visibility, phase_grid, Interferometer};
use nvmetro_core::metrology::qfi_from_visibility;
use nvmetro_core::numerics::{ComplexMatrix, Rng, C64};
use nvmetro_core::pulse::PulseSequence;
use nvmetro_core::stats::{run_campaign, variance_vs_nu, Histogram, MeasurementCampaign};

use crate::config::{
    BudgetConfig, CampaignConfig, InterfereConfig, OptimizeConfig, ScalingConfig, TargetSpec,
};
use crate::error::{CliError, CliResult};
use crate::manifest::sha256_hex;

/// Files written by one command, with their digests in write order.
#[derive(Debug)]
pub struct Outputs {
    dir: PathBuf,
    pub files: Vec<(String, String)>,
}

impl Outputs {
    pub fn new(dir: &Path) -> CliResult<Self> {
        std::fs::create_dir_all(dir)
            .map_err(|e| CliError::Io(format!("cannot create {}: {e}", dir.display())))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            files: Vec::new(),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn write(&mut self, name: &str, contents: &str) -> CliResult<()> {
        let path = self.dir.join(name);
        std::fs::write(&path, contents)
            .map_err(|e| CliError::Io(format!("cannot write {}: {e}", path.display())))?;
        self.files.push((sha256_hex(contents.as_bytes()), name.to_string()));
        Ok(())
    }
}

/// Outcome of a command whose outputs were written. A failed verdict still
/// leaves a complete output directory and manifest behind.
#[derive(Debug)]
pub enum Verdict {
    Success,
    Failed(CliError),
}

fn e(x: f64) -> String {
    format!("{x:.16e}")
}

// Stream keys under the root seed, fixed so outputs do not depend on the
// order in which a command consumes randomness.
const STREAM_INIT: u64 = 1;
const STREAM_OPTIMIZER: u64 = 2;
const STREAM_SHOTS: u64 = 3;
const STREAM_PULSE_CHECK: u64 = 4;

fn build_target(spec: &TargetSpec, sys: &ControlSystem) -> CliResult<GateTarget> {
    Ok(match spec {
        TargetSpec::Cphase { m_n, two_m_c } => GateTarget::conditional_phase(sys, *m_n, *two_m_c)?,
        TargetSpec::Identity {} => GateTarget::identity(sys.reg.dim()),
        TargetSpec::Matrix {
            real,
            imag,
            support,
        } => {
            let dim = real.len();
            if let Some(im) = imag {
                if im.len() != dim || im.iter().zip(real).any(|(a, b)| a.len() != b.len()) {
                    return Err(CliError::Config(
                        "target.imag must have the shape of target.real".into(),
                    ));
                }
            }
            let mut data = Vec::with_capacity(dim * dim);
            for (r, row) in real.iter().enumerate() {
                if row.len() != dim {
                    return Err(CliError::Config(format!(
                        "target.real row {r} has {} entries, expected {dim}",
                        row.len()
                    )));
                }
                for (c, &re) in row.iter().enumerate() {
                    let im = imag.as_ref().map_or(0.0, |m| m[r][c]);
                    data.push(C64::new(re, im));
                }
            }
            let u = ComplexMatrix::from_vec(dim, dim, data)?;
            let support = support.clone().unwrap_or_else(|| (0..dim).collect());
            GateTarget::new(u, support, "matrix")?
        }
    })
}

pub fn optimize_pulse(cfg: &OptimizeConfig, out: &mut Outputs) -> CliResult<Verdict> {
    let sys = ControlSystem::new(&cfg.system)?;
    let target = build_target(&cfg.target, &sys)?;
    let root = Rng::new(cfg.seed);
    let shape = &cfg.pulse;
    let initial = match &shape.initial {
        Some(path) => {
            let p = PulseSequence::read_waveform(path)?;
            if p.n_slices() != shape.n_slices || p.channels() != shape.channels.as_slice() {
                return Err(CliError::Config(format!(
                    "initial pulse {} has {} slices on {:?}, config asks for {} on {:?}",
                    path.display(),
                    p.n_slices(),
                    p.channels(),
                    shape.n_slices,
                    shape.channels
                )));
            }
            p.with_max_amplitude(shape.max_amplitude_khz)?
        }
        None if shape.init_scale_khz == 0.0 => {
            PulseSequence::zeros(&shape.channels, shape.n_slices, shape.slice_ns)?
                .with_max_amplitude(shape.max_amplitude_khz)?
        }
        None => PulseSequence::random(
            &shape.channels,
            shape.n_slices,
            shape.slice_ns,
            shape.init_scale_khz,
            &mut root.derive(STREAM_INIT),
        )?
        .with_max_amplitude(shape.max_amplitude_khz)?,
    };

    let res = grape_optimize(
        &initial,
        &sys,
        &target,
        &cfg.noise,
        &mut root.derive(STREAM_OPTIMIZER),
        &cfg.optimizer,
    )?;
    info!(
        "optimizer stopped after {} iterations ({:?}), robust fidelity {}",
        res.iterations, res.stop, res.fidelity
    );
    let nominal = gate_fidelity(&propagate(&res.sequence, &sys, 0.0, 0.0)?, &target)?;
    let map = fidelity_map(
        &res.sequence,
        &sys,
        &target,
        &cfg.noise,
        &cfg.map.delta_sigma,
        &cfg.map.delta1_sigma,
    )?;

    out.write("pulse.txt", &res.sequence.to_waveform())?;

    let mut trace = String::from("iteration,robust_fidelity\n");
    for (i, f) in res.trace.iter().enumerate() {
        let _ = writeln!(trace, "{i},{}", e(*f));
    }
    out.write("trace.csv", &trace)?;

    let mut csv = String::from("delta_sigma,delta1_sigma,delta_khz,delta1,fidelity\n");
    for (i, &ds) in map.delta_sigma.iter().enumerate() {
        for (j, &d1) in map.delta1_sigma.iter().enumerate() {
            let _ = writeln!(
                csv,
                "{},{},{},{},{}",
                e(ds),
                e(d1),
                e(ds * cfg.noise.sigma_mag_khz),
                e(d1 * cfg.noise.sigma_amp),
                e(map.values[i][j])
            );
        }
    }
    out.write("robustness_map.csv", &csv)?;

    let (pi, pj) = map.argmax();
    let mut report = String::new();
    let _ = writeln!(report, "target            {}", target.label);
    let _ = writeln!(report, "pulse             {} slices x {} ns on {:?}", shape.n_slices, shape.slice_ns, shape.channels);
    let _ = writeln!(report, "iterations        {}", res.iterations);
    let _ = writeln!(report, "stop              {:?}", res.stop);
    let _ = writeln!(report, "initial_robust    {:.6}", res.trace.first().copied().unwrap_or(f64::NAN));
    let _ = writeln!(report, "nominal_fidelity  {:.6}", nominal);
    let _ = writeln!(report, "robust_fidelity   {:.6}", res.fidelity);
    if !map.values.is_empty() && !map.values[0].is_empty() {
        let _ = writeln!(
            report,
            "map_peak          {:.6} at delta = {} sigma, delta1 = {} sigma",
            map.values[pi][pj], map.delta_sigma[pi], map.delta1_sigma[pj]
        );
    }
    out.write("report.txt", &report)?;
    print!("{report}");

    if let Some(min) = cfg.min_fidelity {
        if res.fidelity < min {
            return Ok(Verdict::Failed(CliError::Numerical(format!(
                "robust fidelity {:.6} below required {min} after {} iterations ({:?})",
                res.fidelity, res.iterations, res.stop
            ))));
        }
    }
    Ok(Verdict::Success)
}

pub fn interfere(cfg: &InterfereConfig, out: &mut Outputs) -> CliResult<Verdict> {
    let n = cfg.circuit.n_spins;
    let ifm = Interferometer::new(&cfg.system, cfg.conventions.clone())?;
    let root = Rng::new(cfg.seed);
    let table = cfg.visibility.table(n)?;
    if cfg.circuit.n_points < 2 || !(cfg.circuit.phi_max > cfg.circuit.phi_min) {
        return Err(CliError::Config(
            "circuit needs n_points ≥ 2 and phi_min < phi_max".into(),
        ));
    }
    let phases = phase_grid(cfg.circuit.phi_min, cfg.circuit.phi_max, cfg.circuit.n_points);
    let mut fringe = ifm.standard_fringe(n, &phases, table.as_ref())?;
    if let Some(shots) = cfg.circuit.shots {
        fringe = fringe.with_shots(shots, &mut root.derive(STREAM_SHOTS))?;
    }
    out.write("fringe.csv", &fringe.to_csv())?;

    let fit = extract_visibility(&fringe)?;
    let model_vis = table.as_ref().map_or(1.0, overall_fidelity);
    let (model_qfi, model_db) = qfi_from_visibility(model_vis, n)?;
    let fit_vis = fit.visibility.clamp(0.0, 1.0);
    let (fit_qfi, fit_db) = qfi_from_visibility(fit_vis, n)?;

    let mut report = String::new();
    let _ = writeln!(report, "n_spins              {n}");
    let _ = writeln!(report, "visibility_fit       {:.6} ± {:.6}", fit.visibility, fit.visibility_err);
    let _ = writeln!(report, "fringe_frequency     {:.6} ± {:.6}", fit.frequency, fit.frequency_err);
    let _ = writeln!(report, "period_rad           {:.6} ± {:.6}", fit.period, fit.period_err);
    let _ = writeln!(report, "phase_offset_rad     {:.6} ± {:.6}", fit.phase_offset, fit.phase_offset_err);
    let _ = writeln!(report, "offset               {:.6} ± {:.6}", fit.offset, fit.offset_err);
    let _ = writeln!(report, "qfi_fit              {:.6}", fit_qfi);
    let _ = writeln!(report, "db_over_sql_fit      {:.4}", fit_db);
    let _ = writeln!(report, "visibility_model     {:.6}", model_vis);
    let _ = writeln!(report, "qfi_model            {:.6}", model_qfi);
    let _ = writeln!(report, "db_over_sql_model    {:.4}", model_db);
    let _ = writeln!(report, "sql                  {n}");
    let _ = writeln!(report, "hl                   {}", n * n);

    if let Some(check) = &cfg.pulse_check {
        let pulse = PulseSequence::read_waveform(&check.pulse)?;
        let phis = check
            .phases
            .clone()
            .unwrap_or_else(|| (0..=8).map(|k| -PI + f64::from(k) * PI / 4.0).collect());
        let f = ifm.circuit_fidelity_under_noise(
            &phis,
            &pulse,
            &check.noise,
            &mut root.derive(STREAM_PULSE_CHECK),
        )?;
        let _ = writeln!(report, "circuit_fidelity     {f:.6}");
    }
    out.write("report.txt", &report)?;
    print!("{report}");
    Ok(Verdict::Success)
}

pub fn campaign(cfg: &CampaignConfig, out: &mut Outputs) -> CliResult<Verdict> {
    let spec = &cfg.campaign;
    let c = MeasurementCampaign {
        true_phase: spec.true_phase,
        nu: spec.nu,
        n_estimates: spec.n_estimates,
        model: cfg.model,
        phase_jitter_rad: spec.phase_jitter_rad,
        seed: cfg.seed,
    };
    let r = run_campaign(&c)?;
    let sigma = r.predicted_variance.sqrt();
    let w = spec.histogram_half_width_sigma;
    let hist = Histogram::new(
        &r.estimates,
        spec.true_phase - w * sigma,
        spec.true_phase + w * sigma,
        spec.histogram_bins,
    )?;
    out.write("histogram.csv", &hist.to_csv())?;

    let curve = variance_vs_nu(&c, &spec.nu_values)?;
    out.write("variance_curve.csv", &curve.to_csv())?;

    let n = cfg.model.n_spins as f64;
    let normalized = r.variance * n * spec.nu as f64;
    let expected = 1.0 / (cfg.model.visibility.powi(2) * n);
    let mut report = String::new();
    let _ = writeln!(report, "estimates            {}", r.estimates.len());
    let _ = writeln!(report, "clamped              {}", r.clamped);
    let _ = writeln!(report, "outside_histogram    {}", hist.outside);
    let _ = writeln!(report, "mean_rad             {:.8} ± {:.8}", r.mean, r.standard_error_of_mean());
    let _ = writeln!(report, "true_phase_rad       {:.8}", spec.true_phase);
    let _ = writeln!(report, "variance             {:.8e}", r.variance);
    let _ = writeln!(report, "cramer_rao_variance  {:.8e}", r.predicted_variance);
    let _ = writeln!(report, "normalized_variance  {:.6}", normalized);
    let _ = writeln!(report, "expected_normalized  {:.6}", expected);
    let _ = writeln!(report, "db_vs_sql            {:.4}", 10.0 * normalized.log10());
    out.write("report.txt", &report)?;
    print!("{report}");
    Ok(Verdict::Success)
}

pub fn budget(cfg: &BudgetConfig, out: &mut Outputs) -> CliResult<Verdict> {
    cfg.table.validate()?;
    let mut csv = String::from("label,fidelity,uncertainty,power,factor,running_product\n");
    for (row, entry) in cfg.table.report().iter().zip(&cfg.table.entries) {
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{}",
            row.label,
            e(row.fidelity),
            e(entry.uncertainty),
            row.power,
            e(row.factor),
            e(row.running_product)
        );
    }
    out.write("budget.csv", &csv)?;
    let report = cfg.table.report_text();
    out.write("report.txt", &report)?;
    print!("{report}");
    if let Some(check) = &cfg.check {
        let product = overall_fidelity(&cfg.table);
        if (product - check.expected).abs() > check.tolerance {
            return Ok(Verdict::Failed(CliError::Check(format!(
                "overall fidelity {product:.5} differs from expected {} by more than {}",
                check.expected, check.tolerance
            ))));
        }
    }
    Ok(Verdict::Success)
}

pub fn scaling(cfg: &ScalingConfig, out: &mut Outputs) -> CliResult<Verdict> {
    if cfg.max_n == 0 {
        return Err(CliError::Config("max_n must be at least 1".into()));
    }
    let scan = cfg.law.scan(cfg.max_n)?;
    let mut csv = String::from("n,visibility,qfi,sql,hl,db_over_sql,argmax\n");
    for &(n, q) in &scan.values {
        let nf = n as f64;
        let _ = writeln!(
            csv,
            "{n},{},{},{},{},{},{}",
            e(cfg.law.visibility(n)),
            e(q),
            e(nf),
            e(nf * nf),
            e(10.0 * (q / nf).log10()),
            u8::from(scan.ties.contains(&n))
        );
    }
    out.write("scaling.csv", &csv)?;
    let mut report = String::new();
    let _ = writeln!(report, "argmax_n  {}", scan.argmax);
    let _ = writeln!(report, "max_qfi   {:.6}", scan.max);
    let _ = writeln!(report, "ties      {:?}", scan.ties);
    if scan.argmax == cfg.max_n {
        let _ = writeln!(report, "note      maximum sits on the scan edge; increase max_n");
    }
    out.write("report.txt", &report)?;
    print!("{report}");
    Ok(Verdict::Success)
}
