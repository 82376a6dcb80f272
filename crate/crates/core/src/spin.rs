// Copyright 2026 The nvmetro Authors
// SPDX-License-Identifier: Apache-2.0

//! Spin Hamiltonians of the NV electron (S = 1), its ¹⁴N nucleus (I = 1) and
//! one ¹³C nucleus (I = 1/2).
//!
//! Units: frequencies are stored in the unit named by each field and
//! converted to MHz internally; times are in µs. The factor 2π appears only
//! inside exponentials, so `exp(-i 2π H t)` with `H` in MHz and `t` in µs.
//!
//! The reduced register keeps two electron sublevels, two ¹⁴N sublevels and
//! both ¹³C sublevels. Its basis index is `4 e + 2 n + c` with
//!
//! - `e = 0, 1` the first and second retained electron level
//!   (default `m_S = 0, +1`),
//! - `n = 0, 1` the first and second retained nitrogen level
//!   (default `m_N = +1, 0`),
//! - `c = 0, 1` for `m_C = +1/2, -1/2`.
//!
//! Reduced `z` operators carry the physical magnetic quantum numbers of the
//! retained levels, so the hyperfine products `A S_z I_z` are numerically
//! identical to the full model on those levels. Transverse operators are
//! two-level spin-1/2 operators `σ/2`.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{expm, kron, kron_all, ComplexMatrix, C64, I, ZERO};

/// Dimension of the reduced register.
pub const REGISTER_DIM: usize = 8;
/// Dimension of the full S = 1, I = 1, I = 1/2 space.
pub const FULL_DIM: usize = 18;

/// Which magnetic sublevels form the reduced register.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LevelSelection {
    /// Retained electron `m_S` values, in basis order.
    pub electron: [i32; 2],
    /// Retained ¹⁴N `m_N` values, in basis order.
    pub nitrogen: [i32; 2],
}

impl Default for LevelSelection {
    fn default() -> Self {
        Self {
            electron: [0, 1],
            nitrogen: [1, 0],
        }
    }
}

impl LevelSelection {
    pub fn validate(&self) -> Result<()> {
        for (name, pair) in [("electron", self.electron), ("nitrogen", self.nitrogen)] {
            if pair[0] == pair[1] || pair.iter().any(|m| !(-1..=1).contains(m)) {
                return Err(Error::InvalidParameter(format!(
                    "{name} level selection {pair:?} must be two distinct values in {{-1, 0, +1}}"
                )));
            }
        }
        Ok(())
    }
}

/// Physical constants of the three-spin system.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SpinSystem {
    /// Electron zero-field splitting, MHz.
    pub d_mhz: f64,
    /// ¹⁴N quadrupole splitting, kHz.
    pub q_khz: f64,
    /// Static field along the NV axis, gauss.
    pub b0_gauss: f64,
    /// Electron gyromagnetic ratio, MHz/G.
    pub gamma_e_mhz_per_g: f64,
    /// ¹⁴N gyromagnetic ratio, kHz/G (enters as `-γ_N B₀ I_z`).
    pub gamma_n_khz_per_g: f64,
    /// ¹³C gyromagnetic ratio, kHz/G (enters as `-γ_C B₀ I_z`).
    pub gamma_c_khz_per_g: f64,
    /// ¹⁴N parallel hyperfine coupling, kHz.
    pub a_par_khz: f64,
    /// ¹³C longitudinal hyperfine coupling, kHz.
    pub a_zz_khz: f64,
    pub levels: LevelSelection,
}

impl Default for SpinSystem {
    fn default() -> Self {
        Self {
            d_mhz: 2869.73,
            q_khz: 4945.8,
            b0_gauss: 8066.0,
            gamma_e_mhz_per_g: 2.8025,
            gamma_n_khz_per_g: 0.3077,
            gamma_c_khz_per_g: 1.0705,
            a_par_khz: 2164.9,
            a_zz_khz: 375.4,
            levels: LevelSelection::default(),
        }
    }
}

impl SpinSystem {
    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("d_mhz", self.d_mhz),
            ("q_khz", self.q_khz),
            ("b0_gauss", self.b0_gauss),
            ("gamma_e_mhz_per_g", self.gamma_e_mhz_per_g),
            ("gamma_n_khz_per_g", self.gamma_n_khz_per_g),
            ("gamma_c_khz_per_g", self.gamma_c_khz_per_g),
            ("a_par_khz", self.a_par_khz),
            ("a_zz_khz", self.a_zz_khz),
        ];
        for (name, v) in fields {
            if !v.is_finite() {
                return Err(Error::InvalidParameter(format!("{name} is not finite")));
            }
        }
        if self.b0_gauss <= 0.0 {
            return Err(Error::InvalidParameter(format!(
                "b0_gauss must be positive, got {}",
                self.b0_gauss
            )));
        }
        self.levels.validate()
    }

    pub fn a_par_mhz(&self) -> f64 {
        self.a_par_khz * 1e-3
    }

    pub fn a_zz_mhz(&self) -> f64 {
        self.a_zz_khz * 1e-3
    }

    /// Single-electron energy `D m² + γ_e B₀ m`, MHz.
    pub fn electron_energy(&self, m_s: i32) -> f64 {
        let m = m_s as f64;
        self.d_mhz * m * m + self.gamma_e_mhz_per_g * self.b0_gauss * m
    }

    /// Single-nitrogen energy `Q m² - γ_N B₀ m`, MHz.
    pub fn nitrogen_energy(&self, m_n: i32) -> f64 {
        let m = m_n as f64;
        (self.q_khz * m * m - self.gamma_n_khz_per_g * self.b0_gauss * m) * 1e-3
    }

    /// Single-carbon energy `-γ_C B₀ m`, MHz; `two_m_c` is `±1`.
    pub fn carbon_energy(&self, two_m_c: i32) -> f64 {
        -self.gamma_c_khz_per_g * self.b0_gauss * 1e-3 * (two_m_c as f64 / 2.0)
    }

    /// Diagonal element of the full Hamiltonian, MHz.
    pub fn level_energy(&self, m_s: i32, m_n: i32, two_m_c: i32) -> f64 {
        let (ms, mn, mc) = (m_s as f64, m_n as f64, two_m_c as f64 / 2.0);
        self.electron_energy(m_s)
            + self.nitrogen_energy(m_n)
            + self.carbon_energy(two_m_c)
            + self.a_par_mhz() * ms * mn
            + self.a_zz_mhz() * ms * mc
    }
}

/// Full-space basis index for `(m_S, m_N, 2 m_C)`; electron and nitrogen run
/// `+1, 0, -1`, carbon `+1/2, -1/2`.
pub fn full_index(m_s: i32, m_n: i32, two_m_c: i32) -> usize {
    let e = (1 - m_s) as usize;
    let n = (1 - m_n) as usize;
    let c = if two_m_c > 0 { 0 } else { 1 };
    e * 6 + n * 2 + c
}

/// The 18×18 diagonal Hamiltonian `D S_z² + γ_e B₀ S_z + Q (I_z^N)² − γ_N B₀ I_z^N
/// + A_∥ S_z I_z^N − γ_C B₀ I_z^C + A_zz S_z I_z^C`, in MHz.
pub fn full_hamiltonian(sys: &SpinSystem) -> ComplexMatrix {
    let s1z = ComplexMatrix::from_real_diag(&[1.0, 0.0, -1.0]);
    let i3 = ComplexMatrix::identity(3);
    let i2 = ComplexMatrix::identity(2);
    let cz = ComplexMatrix::from_real_diag(&[0.5, -0.5]);
    let sz = kron_all(&[&s1z, &i3, &i2]);
    let nz = kron_all(&[&i3, &s1z, &i2]);
    let czf = kron_all(&[&i3, &i3, &cz]);
    let sz2 = &sz * &sz;
    let nz2 = &nz * &nz;

    let b = sys.b0_gauss;
    let mut h = sz2.scale_real(sys.d_mhz);
    h.add_scaled(&sz, C64::new(sys.gamma_e_mhz_per_g * b, 0.0));
    h.add_scaled(&nz2, C64::new(sys.q_khz * 1e-3, 0.0));
    h.add_scaled(&nz, C64::new(-sys.gamma_n_khz_per_g * b * 1e-3, 0.0));
    h.add_scaled(&(&sz * &nz), C64::new(sys.a_par_mhz(), 0.0));
    h.add_scaled(&czf, C64::new(-sys.gamma_c_khz_per_g * b * 1e-3, 0.0));
    h.add_scaled(&(&sz * &czf), C64::new(sys.a_zz_mhz(), 0.0));
    h
}

fn sigma_x() -> ComplexMatrix {
    ComplexMatrix::from_real_rows(&[&[0.0, 1.0], &[1.0, 0.0]])
}

fn sigma_y() -> ComplexMatrix {
    ComplexMatrix::from_rows(&[&[ZERO, -I], &[I, ZERO]])
}

/// Identifies one of the three register spins.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Spin {
    Electron,
    Nitrogen,
    Carbon,
}

impl Spin {
    pub const ALL: [Spin; 3] = [Spin::Electron, Spin::Nitrogen, Spin::Carbon];

    fn position(self) -> usize {
        match self {
            Spin::Electron => 0,
            Spin::Nitrogen => 1,
            Spin::Carbon => 2,
        }
    }

    /// Bit shift of this spin's index within the register basis index.
    pub fn shift(self) -> usize {
        2 - self.position()
    }
}

impl fmt::Display for Spin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Spin::Electron => "electron",
            Spin::Nitrogen => "nitrogen",
            Spin::Carbon => "carbon",
        })
    }
}

impl FromStr for Spin {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "electron" | "e" | "nv" => Ok(Spin::Electron),
            "nitrogen" | "n" | "14n" => Ok(Spin::Nitrogen),
            "carbon" | "c" | "13c" => Ok(Spin::Carbon),
            other => Err(Error::InvalidParameter(format!("unknown spin `{other}`"))),
        }
    }
}

/// The reduced 2×2×2 register and its operator cache.
#[derive(Debug, Clone)]
pub struct ReducedRegister {
    pub levels: LevelSelection,
    /// Effective qubit gaps, MHz (multiply by 2π for circular frequency).
    pub omega_s: f64,
    pub omega_n: f64,
    pub omega_c: f64,
    pub a_par_mhz: f64,
    pub a_zz_mhz: f64,
    pub sz: ComplexMatrix,
    pub iz_n: ComplexMatrix,
    pub iz_c: ComplexMatrix,
    pub sx: ComplexMatrix,
    pub sy: ComplexMatrix,
    pub ix_n: ComplexMatrix,
    pub iy_n: ComplexMatrix,
    pub ix_c: ComplexMatrix,
    pub iy_c: ComplexMatrix,
}

impl ReducedRegister {
    pub fn new(sys: &SpinSystem) -> Result<Self> {
        sys.validate()?;
        let lv = sys.levels;
        let [ea, eb] = lv.electron;
        let [na, nb] = lv.nitrogen;
        // Single-species energies are quadratic in m, hence affine on any two levels.
        let omega_s = (sys.electron_energy(eb) - sys.electron_energy(ea)) / (eb - ea) as f64;
        let omega_n = (sys.nitrogen_energy(nb) - sys.nitrogen_energy(na)) / (nb - na) as f64;
        let omega_c = sys.carbon_energy(1) - sys.carbon_energy(-1);

        let i2 = ComplexMatrix::identity(2);
        let e_z = ComplexMatrix::from_real_diag(&[ea as f64, eb as f64]);
        let n_z = ComplexMatrix::from_real_diag(&[na as f64, nb as f64]);
        let c_z = ComplexMatrix::from_real_diag(&[0.5, -0.5]);
        let half_x = sigma_x().scale_real(0.5);
        let half_y = sigma_y().scale_real(0.5);

        Ok(Self {
            levels: lv,
            omega_s,
            omega_n,
            omega_c,
            a_par_mhz: sys.a_par_mhz(),
            a_zz_mhz: sys.a_zz_mhz(),
            sz: kron_all(&[&e_z, &i2, &i2]),
            iz_n: kron_all(&[&i2, &n_z, &i2]),
            iz_c: kron_all(&[&i2, &i2, &c_z]),
            sx: kron_all(&[&half_x, &i2, &i2]),
            sy: kron_all(&[&half_y, &i2, &i2]),
            ix_n: kron_all(&[&i2, &half_x, &i2]),
            iy_n: kron_all(&[&i2, &half_y, &i2]),
            ix_c: kron_all(&[&i2, &i2, &half_x]),
            iy_c: kron_all(&[&i2, &i2, &half_y]),
        })
    }

    pub fn dim(&self) -> usize {
        REGISTER_DIM
    }

    /// Register index of `(electron level idx, nitrogen level idx, carbon idx)`.
    pub fn index(e: usize, n: usize, c: usize) -> usize {
        4 * e + 2 * n + c
    }

    /// Register index for physical quantum numbers, if those levels are retained.
    pub fn index_of(&self, m_s: i32, m_n: i32, two_m_c: i32) -> Option<usize> {
        let e = self.levels.electron.iter().position(|&m| m == m_s)?;
        let n = self.levels.nitrogen.iter().position(|&m| m == m_n)?;
        let c = match two_m_c {
            1 => 0,
            -1 => 1,
            _ => return None,
        };
        Some(Self::index(e, n, c))
    }

    /// Basis-order position of the electron `m_S = 0` level.
    pub fn electron_zero(&self) -> Result<usize> {
        self.levels
            .electron
            .iter()
            .position(|&m| m == 0)
            .ok_or_else(|| {
                Error::InvalidParameter("level selection does not retain m_S = 0".into())
            })
    }

    /// `|m_S = 0><m_S = 0| ⊗ I₄`.
    pub fn electron_zero_projector(&self) -> Result<ComplexMatrix> {
        let z = self.electron_zero()?;
        let p = ComplexMatrix::outer_basis(2, z, z);
        let i2 = ComplexMatrix::identity(2);
        Ok(kron_all(&[&p, &i2, &i2]))
    }

    /// Register indices with the electron in `m_S = 0`.
    pub fn electron_zero_subspace(&self) -> Result<Vec<usize>> {
        let z = self.electron_zero()?;
        Ok((0..4).map(|k| 4 * z + k).collect())
    }

    pub fn z_operator(&self, spin: Spin) -> &ComplexMatrix {
        match spin {
            Spin::Electron => &self.sz,
            Spin::Nitrogen => &self.iz_n,
            Spin::Carbon => &self.iz_c,
        }
    }

    pub fn x_operator(&self, spin: Spin) -> &ComplexMatrix {
        match spin {
            Spin::Electron => &self.sx,
            Spin::Nitrogen => &self.ix_n,
            Spin::Carbon => &self.ix_c,
        }
    }

    pub fn y_operator(&self, spin: Spin) -> &ComplexMatrix {
        match spin {
            Spin::Electron => &self.sy,
            Spin::Nitrogen => &self.iy_n,
            Spin::Carbon => &self.iy_c,
        }
    }
}

/// Reduced Hamiltonian `ω_S S_z + ω_N I_z^N + ω_C I_z^C + A_∥ S_z I_z^N + A_zz S_z I_z^C`, MHz.
pub fn reduced_hamiltonian(sys: &SpinSystem) -> Result<(ReducedRegister, ComplexMatrix)> {
    let reg = ReducedRegister::new(sys)?;
    let mut h = reg.sz.scale_real(reg.omega_s);
    h.add_scaled(&reg.iz_n, C64::new(reg.omega_n, 0.0));
    h.add_scaled(&reg.iz_c, C64::new(reg.omega_c, 0.0));
    h.add_scaled(&(&reg.sz * &reg.iz_n), C64::new(reg.a_par_mhz, 0.0));
    h.add_scaled(&(&reg.sz * &reg.iz_c), C64::new(reg.a_zz_mhz, 0.0));
    Ok((reg, h))
}

/// Full-model energies of the eight retained levels, in register order.
pub fn retained_full_energies(sys: &SpinSystem) -> Vec<f64> {
    let h = full_hamiltonian(sys);
    let mut out = Vec::with_capacity(REGISTER_DIM);
    for &ms in &sys.levels.electron {
        for &mn in &sys.levels.nitrogen {
            for two_mc in [1, -1] {
                let k = full_index(ms, mn, two_mc);
                out.push(h[(k, k)].re);
            }
        }
    }
    out
}

/// `U_I(t) = exp(-i 2π h t)` with `h` in MHz and `t` in µs.
pub fn interaction_transform(h: &ComplexMatrix, t_us: f64) -> Result<ComplexMatrix> {
    expm(h, C64::new(0.0, -2.0 * PI * t_us))
}

/// `|m_N, m_C><m_N, m_C|` on the four-dimensional nuclear space, embedded as
/// `I_e ⊗ P` on the register.
#[derive(Debug, Clone)]
pub struct NuclearProjectors {
    nitrogen: [i32; 2],
    /// Indexed `[n][c]` with basis-order nitrogen index and `c = 0` for `+1/2`.
    nuclear: [[ComplexMatrix; 2]; 2],
    embedded: [[ComplexMatrix; 2]; 2],
}

impl NuclearProjectors {
    pub fn new(reg: &ReducedRegister) -> Self {
        let i2 = ComplexMatrix::identity(2);
        let make = |n: usize, c: usize| ComplexMatrix::outer_basis(4, 2 * n + c, 2 * n + c);
        let nuclear = [[make(0, 0), make(0, 1)], [make(1, 0), make(1, 1)]];
        let embed = |p: &ComplexMatrix| kron(&i2, p);
        let embedded = [
            [embed(&nuclear[0][0]), embed(&nuclear[0][1])],
            [embed(&nuclear[1][0]), embed(&nuclear[1][1])],
        ];
        Self {
            nitrogen: reg.levels.nitrogen,
            nuclear,
            embedded,
        }
    }

    fn locate(&self, m_n: i32, two_m_c: i32) -> Result<(usize, usize)> {
        let n = self.nitrogen.iter().position(|&m| m == m_n).ok_or_else(|| {
            Error::InvalidParameter(format!("m_N = {m_n} is not a retained nitrogen level"))
        })?;
        let c = match two_m_c {
            1 => 0,
            -1 => 1,
            _ => {
                return Err(Error::InvalidParameter(format!(
                    "2 m_C must be ±1, got {two_m_c}"
                )))
            }
        };
        Ok((n, c))
    }

    /// Four-dimensional nuclear projector `P(m_N, m_C)`.
    pub fn nuclear(&self, m_n: i32, two_m_c: i32) -> Result<&ComplexMatrix> {
        let (n, c) = self.locate(m_n, two_m_c)?;
        Ok(&self.nuclear[n][c])
    }

    /// `I_e ⊗ P(m_N, m_C)` on the register.
    pub fn embedded(&self, m_n: i32, two_m_c: i32) -> Result<&ComplexMatrix> {
        let (n, c) = self.locate(m_n, two_m_c)?;
        Ok(&self.embedded[n][c])
    }

    pub fn all_nuclear(&self) -> impl Iterator<Item = &ComplexMatrix> {
        self.nuclear.iter().flatten()
    }
}

/// Control channels of the interaction-picture Hamiltonian.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Channel {
    F1Real,
    F1Imag,
    F2Real,
    F2Imag,
    RfN,
    RfC,
}

impl Channel {
    pub const ALL: [Channel; 6] = [
        Channel::F1Real,
        Channel::F1Imag,
        Channel::F2Real,
        Channel::F2Imag,
        Channel::RfN,
        Channel::RfC,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Channel::F1Real => "f1_real",
            Channel::F1Imag => "f1_imag",
            Channel::F2Real => "f2_real",
            Channel::F2Imag => "f2_imag",
            Channel::RfN => "rf_n",
            Channel::RfC => "rf_c",
        }
    }

    /// Microwave channels carry the relative amplitude error; RF does not.
    pub fn is_microwave(self) -> bool {
        !matches!(self, Channel::RfN | Channel::RfC)
    }

    /// Column position in the waveform file.
    pub fn column(self) -> usize {
        Channel::ALL.iter().position(|&c| c == self).unwrap()
    }
}

impl fmt::Display for Channel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Channel {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Channel::ALL
            .into_iter()
            .find(|c| c.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::UnknownChannel(s.trim().to_string()))
    }
}

/// `cos θ S_x + sin θ S_y` (real quadrature) or `-sin θ S_x + cos θ S_y` (imaginary).
fn rotated_drive(reg: &ReducedRegister, theta: f64, imaginary: bool) -> ComplexMatrix {
    let (c, s) = (theta.cos(), theta.sin());
    let (cx, cy) = if imaginary { (-s, c) } else { (c, s) };
    let mut m = reg.sx.scale_real(cx);
    m.add_scaled(&reg.sy, C64::new(cy, 0.0));
    m
}

/// Basis operator multiplying the amplitude of `channel` at time `t_us`.
///
/// The MW tones carry the hyperfine crosstalk phases of the interaction
/// picture: `f1` is resonant with the `(m_N, m_C) = (+1, -1/2)` transition,
/// `f2` sits midway between the two `m_N = 0` transitions. RF channels drive
/// `I_x` of their nucleus inside the `m_S = 0` manifold.
pub fn control_hamiltonian(
    reg: &ReducedRegister,
    proj: &NuclearProjectors,
    channel: Channel,
    t_us: f64,
) -> Result<ComplexMatrix> {
    if !(t_us >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "control time must be non-negative, got {t_us}"
        )));
    }
    let w = 2.0 * PI * t_us;
    let (ap, az) = (reg.a_par_mhz, reg.a_zz_mhz);
    // (m_N, 2 m_C, phase angle) for each nuclear block
    let terms: [(i32, i32, f64); 4] = match channel {
        Channel::F1Real | Channel::F1Imag => [
            (1, -1, 0.0),
            (1, 1, -az * w),
            (0, -1, -ap * w),
            (0, 1, -(ap + az) * w),
        ],
        Channel::F2Real | Channel::F2Imag => [
            (0, -1, az / 2.0 * w),
            (0, 1, -az / 2.0 * w),
            (1, -1, (ap + az / 2.0) * w),
            (1, 1, (ap - az / 2.0) * w),
        ],
        Channel::RfN | Channel::RfC => {
            let p0 = reg.electron_zero_projector()?;
            let op = if channel == Channel::RfN {
                &reg.ix_n
            } else {
                &reg.ix_c
            };
            return Ok(op * &p0);
        }
    };
    let imaginary = matches!(channel, Channel::F1Imag | Channel::F2Imag);
    let mut h = ComplexMatrix::zeros(REGISTER_DIM, REGISTER_DIM);
    for (m_n, two_m_c, theta) in terms {
        let drive = rotated_drive(reg, theta, imaginary);
        h += &(&drive * proj.embedded(m_n, two_m_c)?);
    }
    Ok(h)
}
