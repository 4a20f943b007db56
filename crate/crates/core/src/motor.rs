//! Motor terminal network with the switched RC branch across the first coil.
//!
//! ```text
//!  T ──┬── L_coil ──┬── J ──┬── (N-1)·L_coil ── r_wind ── neutral
//!     │└─ branch ───┘       ├── r_gnd ── c_gnd ────────── neutral
//!     │                     └── r_damp ────────────────── neutral
//!     └── r_term ──────────────────────────────────────── neutral
//! ```
//!
//! The branch is the duty-averaged switched resistor `R_b/D` in parallel with
//! `C_b`, present only while gated on. Every element uses its trapezoidal
//! companion, so one step is a 2x2 linear solve that reduces to a Norton
//! equivalent at the terminal node `T`.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::line::Termination;
use crate::params::{BranchParams, MotorHfParams, PwmParams};

/// Averaged branch impedance `(R_b/D) ∥ C_b` at frequency `f`.
///
/// `|Z| = (R_b/D) / sqrt(1 + (2π f C_b R_b/D)^2)`, strictly decreasing in
/// both `D` and `f`.
pub fn z_eq(d: f64, f: f64, branch: &BranchParams) -> Result<Complex64> {
    if !(d >= branch.d_min && d <= branch.d_max) {
        return Err(Error::argument(
            "d",
            format!("duty {d} outside [{}, {}]", branch.d_min, branch.d_max),
        ));
    }
    if f.is_nan() || f < 0.0 {
        return Err(Error::argument("f", format!("frequency must be >= 0, got {f}")));
    }
    Ok(z_eq_unchecked(d, f, branch))
}

pub(crate) fn z_eq_unchecked(d: f64, f: f64, branch: &BranchParams) -> Complex64 {
    let r = branch.r_b / d;
    let x = 2.0 * PI * f * branch.c_b * r;
    Complex64::new(r, 0.0) / Complex64::new(1.0, x)
}

/// Inverse of the resistive part: the duty that makes `R_b/D == z`.
pub fn duty_for_resistance(z: f64, branch: &BranchParams) -> f64 {
    (branch.r_b / z).clamp(branch.d_min, branch.d_max)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BranchState {
    pub d: f64,
    pub v_cb: f64,
    pub active: bool,
    /// Total branch current (resistive plus capacitive), T to J.
    pub i_branch: f64,
    i_cb: f64,
}

impl BranchState {
    pub fn new(d: f64) -> Self {
        Self {
            d,
            v_cb: 0.0,
            active: false,
            i_branch: 0.0,
            i_cb: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct CoilState {
    /// Current entering the first-coil assembly (coil plus branch).
    pub i_coil: f64,
    /// Voltage across the first-coil assembly, `v_T - v_J`.
    pub v_coil: f64,
}

#[derive(Debug, Clone)]
pub struct MotorNetwork {
    motor: MotorHfParams,
    branch_params: BranchParams,
    pub branch: BranchState,
    pub coil: CoilState,
    v_t: f64,
    v_j: f64,
    i_l1: f64,
    i_rest: f64,
    i_ret: f64,
    v_ret: f64,
    i_drawn: f64,
    dissipated: f64,
    delivered: f64,
}

/// Per-step conductances and history sources.
struct Stamp {
    a: f64,
    s: f64,
    g_l: f64,
    h_l: f64,
    g_c: f64,
    g_j: f64,
    s_j: f64,
    g_rest: f64,
    s_rest: f64,
    g_ret: f64,
    s_ret: f64,
}

impl MotorNetwork {
    pub fn new(motor: MotorHfParams, branch_params: BranchParams, d: f64) -> Self {
        Self {
            motor,
            branch_params,
            branch: BranchState::new(d),
            coil: CoilState::default(),
            v_t: 0.0,
            v_j: 0.0,
            i_l1: 0.0,
            i_rest: 0.0,
            i_ret: 0.0,
            v_ret: 0.0,
            i_drawn: 0.0,
            dissipated: 0.0,
            delivered: 0.0,
        }
    }

    pub fn terminal_voltage(&self) -> f64 {
        self.v_t
    }

    pub fn set_active(&mut self, active: bool) {
        self.branch.active = active;
    }

    /// Sets the duty, clamping it into `[d_min, d_max]`.
    pub fn set_duty(&mut self, d: f64) {
        self.branch.d = d.clamp(self.branch_params.d_min, self.branch_params.d_max);
    }

    /// Energy in the inductors, the return capacitor, and (when connected)
    /// the branch capacitor.
    pub fn stored_energy(&self) -> f64 {
        let l_rest = self.motor.remaining_inductance();
        let mut e = 0.5 * self.motor.l_coil * self.i_l1 * self.i_l1
            + 0.5 * l_rest * self.i_rest * self.i_rest
            + 0.5 * self.motor.c_gnd * self.v_ret * self.v_ret;
        if self.branch.active {
            e += 0.5 * self.branch_params.c_b * self.branch.v_cb * self.branch.v_cb;
        }
        e
    }

    /// Energy dissipated in resistors since construction.
    pub fn dissipated_energy(&self) -> f64 {
        self.dissipated
    }

    /// Energy delivered into the terminal since construction.
    pub fn delivered_energy(&self) -> f64 {
        self.delivered
    }

    fn stamp(&self, dt: f64) -> Stamp {
        let m = &self.motor;
        let b = &self.branch_params;
        let v_tj = self.v_t - self.v_j;

        let g_l = dt / (2.0 * m.l_coil);
        let h_l = self.i_l1 + g_l * v_tj;
        let mut a = g_l;
        let mut s = h_l;
        let mut g_c = 0.0;
        if self.branch.active {
            g_c = 2.0 * b.c_b / dt;
            a += self.branch.d / b.r_b + g_c;
            s -= g_c * self.branch.v_cb + self.branch.i_cb;
        }

        let two_l = 2.0 * m.remaining_inductance() / dt;
        let g_rest = 1.0 / (m.r_wind + two_l);
        let s_rest = g_rest * (self.v_j + (two_l - m.r_wind) * self.i_rest);

        let (g_ret, s_ret) = if m.c_gnd > 0.0 {
            let k = dt / (2.0 * m.c_gnd);
            let g = 1.0 / (m.r_gnd + k);
            (g, -g * (self.v_ret + k * self.i_ret))
        } else {
            (0.0, 0.0)
        };

        Stamp {
            a,
            s,
            g_l,
            h_l,
            g_c,
            g_j: g_rest + g_ret + 1.0 / m.r_damp,
            s_j: s_rest + s_ret,
            g_rest,
            s_rest,
            g_ret,
            s_ret,
        }
    }

    /// Solves the terminal node against a line Norton equivalent.
    ///
    /// The line contributes `-(v/z + hist)` into the node. Returns the
    /// terminal voltage and the current drawn by the motor.
    pub fn terminal_solve(&mut self, hist: f64, z: f64, dt: f64) -> Result<(f64, f64)> {
        let (g, i0) = self.companion(dt);
        let v = -(hist + i0) / (g + 1.0 / z);
        let i = self.commit(v, dt)?;
        Ok((v, i))
    }
}

impl Termination for MotorNetwork {
    fn companion(&self, dt: f64) -> (f64, f64) {
        let st = self.stamp(dt);
        let den = st.a + st.g_j;
        (
            st.a * st.g_j / den + 1.0 / self.motor.r_term,
            (st.s * st.g_j + st.a * st.s_j) / den,
        )
    }

    fn commit(&mut self, v_t: f64, dt: f64) -> Result<f64> {
        let st = self.stamp(dt);
        let v_j = (st.a * v_t + st.s - st.s_j) / (st.a + st.g_j);
        let v_tj = v_t - v_j;

        let i_l1 = st.g_l * v_tj + st.h_l;
        let (i_r, i_cb) = if self.branch.active {
            let i_r = self.branch.d / self.branch_params.r_b * v_tj;
            let i_cb = st.g_c * (v_tj - self.branch.v_cb) - self.branch.i_cb;
            (i_r, i_cb)
        } else {
            (0.0, 0.0)
        };
        let i_rest = st.g_rest * v_j + st.s_rest;
        let i_ret = st.g_ret * v_j + st.s_ret;
        let i_shunt = v_t / self.motor.r_term;
        let drawn = i_l1 + i_r + i_cb + i_shunt;

        if ![v_t, v_j, i_l1, i_r, i_cb, i_rest, i_ret]
            .iter()
            .all(|x| x.is_finite())
        {
            return Err(Error::Runtime {
                step: 0,
                message: format!("non-finite motor network state: v_t={v_t}, v_j={v_j}, i_l1={i_l1}"),
            });
        }

        // Midpoint-product energy bookkeeping (exact under the trapezoidal rule).
        let avg = |a: f64, b: f64| 0.5 * (a + b);
        self.delivered += dt * avg(self.v_t, v_t) * avg(self.i_drawn, drawn);
        let i_rest_avg = avg(self.i_rest, i_rest);
        let i_ret_avg = avg(self.i_ret, i_ret);
        let v_t_avg = avg(self.v_t, v_t);
        let v_j_avg = avg(self.v_j, v_j);
        self.dissipated += dt * v_j_avg * v_j_avg / self.motor.r_damp;
        self.dissipated += dt
            * (self.motor.r_wind * i_rest_avg * i_rest_avg
                + self.motor.r_gnd * i_ret_avg * i_ret_avg
                + v_t_avg * v_t_avg / self.motor.r_term);
        if self.branch.active {
            let v_avg = avg(self.v_t - self.v_j, v_tj);
            self.dissipated += dt * self.branch.d / self.branch_params.r_b * v_avg * v_avg;
        }

        if self.motor.c_gnd > 0.0 {
            self.v_ret += dt / (2.0 * self.motor.c_gnd) * (i_ret + self.i_ret);
        }
        self.i_l1 = i_l1;
        self.i_rest = i_rest;
        self.i_ret = i_ret;
        self.v_t = v_t;
        self.v_j = v_j;
        // While gated off the branch capacitor is held at the coil voltage,
        // so re-connecting it does not inject a charge step.
        self.branch.v_cb = v_tj;
        self.branch.i_cb = i_cb;
        self.branch.i_branch = i_r + i_cb;
        self.i_drawn = drawn;
        self.coil = CoilState {
            i_coil: drawn - i_shunt,
            v_coil: v_tj,
        };
        Ok(drawn)
    }
}

/// True when the terminal voltage is past the arming threshold
/// `activation_ratio * safety * v_dc`.
pub fn overvoltage(v_mot: f64, pwm: &PwmParams, branch: &BranchParams) -> bool {
    v_mot.abs() > branch.activation_ratio * branch.safety * pwm.v_dc
}

/// Ringing is considered decayed once the terminal is within this fraction
/// of the bus voltage of its settled level.
pub const QUIET_BAND: f64 = 0.1;

/// Edge-triggered branch gate.
///
/// Switches on when an edge is arriving at the motor or the terminal
/// overvoltage threshold is crossed. Switches off once, for `holdoff`, the
/// terminal voltage has stayed inside the quiet band around its settled
/// level and the coil voltage inside the quiet band around zero, so the
/// switch never interrupts a large branch current.
#[derive(Debug, Clone, Copy, Default)]
pub struct Gate {
    pub active: bool,
    quiet_since: Option<f64>,
}

impl Gate {
    #[allow(clippy::too_many_arguments)]
    pub fn update(
        &mut self,
        t: f64,
        v_mot: f64,
        settled_level: f64,
        v_coil: f64,
        edge_arriving: bool,
        pwm: &PwmParams,
        branch: &BranchParams,
    ) -> bool {
        if edge_arriving || overvoltage(v_mot, pwm, branch) {
            self.active = true;
            self.quiet_since = None;
        } else if self.active {
            let band = QUIET_BAND * pwm.v_dc;
            if (v_mot - settled_level).abs() >= band || v_coil.abs() >= branch.coil_band * pwm.v_dc {
                self.quiet_since = None;
            } else {
                let since = *self.quiet_since.get_or_insert(t);
                if t - since >= branch.holdoff {
                    self.active = false;
                    self.quiet_since = None;
                }
            }
        }
        self.active
    }
}
