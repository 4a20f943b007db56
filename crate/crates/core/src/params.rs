//! Configuration types shared by every subsystem, and their validation.
//!
//! All quantities are SI base units. [`Config::validate`] checks every
//! physical invariant at once and returns a [`Validated`] bundle carrying the
//! derived line quantities and the grid-adjusted time step.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result, Violation};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CableParams {
    pub length_m: f64,
    /// Series inductance per meter.
    pub l_per_m: f64,
    /// Shunt capacitance per meter.
    pub c_per_m: f64,
    /// Series resistance per meter.
    pub r_per_m: f64,
}

impl CableParams {
    pub fn surge_impedance(&self) -> f64 {
        (self.l_per_m / self.c_per_m).sqrt()
    }

    /// One-way propagation delay.
    pub fn delay(&self) -> f64 {
        self.length_m * (self.l_per_m * self.c_per_m).sqrt()
    }

    pub fn total_resistance(&self) -> f64 {
        self.r_per_m * self.length_m
    }

    /// Quarter-wave ringing frequency of an open-ended line, `1/(4τ)`.
    pub fn quarter_wave_frequency(&self) -> f64 {
        1.0 / (4.0 * self.delay())
    }
}

impl Default for CableParams {
    fn default() -> Self {
        Self {
            length_m: 70.0,
            l_per_m: 250e-9,
            c_per_m: 100e-12,
            r_per_m: 0.0,
        }
    }
}

/// Lumped high-frequency model of one phase winding.
///
/// `r_term` shunts the terminal node and stands for the winding's
/// high-frequency loss; it sets the terminal reflection with the branch off.
/// The first coil connects the terminal node to the coil-exit node. From the
/// coil-exit node the remaining `n_coils - 1` coils (in series with `r_wind`)
/// run to the neutral, and a winding-to-frame return (`r_gnd` in series with
/// `c_gnd`) shunts the coil-exit node. At ringing frequencies the return holds
/// the coil-exit node near the neutral, so the fast front lands on the first
/// coil. `r_damp` also runs from the coil-exit node to the neutral; it damps
/// the first coil against `c_gnd` so the coil-exit node follows the terminal
/// between edges. `c_gnd = 0` removes the return path.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MotorHfParams {
    pub n_coils: u32,
    pub l_coil: f64,
    pub r_term: f64,
    pub r_wind: f64,
    pub c_gnd: f64,
    pub r_gnd: f64,
    pub r_damp: f64,
}

impl MotorHfParams {
    pub fn remaining_inductance(&self) -> f64 {
        f64::from(self.n_coils - 1) * self.l_coil
    }

    /// Impedance from the coil-exit node to the neutral.
    pub fn exit_impedance(&self, f: f64) -> Complex64 {
        let w = 2.0 * PI * f;
        let z_rest = Complex64::new(self.r_wind, w * self.remaining_inductance());
        let z_damp = Complex64::new(self.r_damp, 0.0);
        let z = z_rest * z_damp / (z_rest + z_damp);
        if self.c_gnd > 0.0 && w > 0.0 {
            let z_ret = Complex64::new(self.r_gnd, -1.0 / (w * self.c_gnd));
            z * z_ret / (z + z_ret)
        } else {
            z
        }
    }

    /// Terminal impedance with the branch gated off.
    pub fn terminal_impedance(&self, f: f64) -> Complex64 {
        let z_winding = Complex64::new(0.0, 2.0 * PI * f * self.l_coil) + self.exit_impedance(f);
        let z_shunt = Complex64::new(self.r_term, 0.0);
        z_shunt * z_winding / (z_shunt + z_winding)
    }
}

impl Default for MotorHfParams {
    fn default() -> Self {
        Self {
            n_coils: 4,
            l_coil: 1e-3,
            r_term: 2e3,
            r_wind: 60.0,
            c_gnd: 2e-7,
            r_gnd: 1.0,
            r_damp: 300.0,
        }
    }
}

/// How the branch switch is enabled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Gating {
    /// Enabled on edge arrival or overvoltage, released after a quiet hold-off.
    Edge,
    /// Permanently enabled.
    Always,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BranchParams {
    pub r_b: f64,
    pub c_b: f64,
    pub d_min: f64,
    pub d_max: f64,
    /// Overvoltage ratio (relative to the bus) the branch guards against.
    pub activation_ratio: f64,
    /// Fraction of `activation_ratio` at which the branch arms.
    pub safety: f64,
    /// Quiet time required before the branch is released.
    pub holdoff: f64,
    /// Release also waits for `|v_coil|` to fall below this fraction of
    /// `v_dc`; opening the branch hands its current to the coil path.
    pub coil_band: f64,
    pub gating: Gating,
}

impl BranchParams {
    /// Duty at which the resistive part of the branch equals `z0`.
    pub fn matched_duty(&self, z0: f64) -> f64 {
        self.r_b / z0
    }
}

impl Default for BranchParams {
    fn default() -> Self {
        Self {
            r_b: 25.0,
            c_b: 1e-10,
            d_min: 0.1,
            d_max: 1.0,
            activation_ratio: 2.0,
            safety: 0.9,
            holdoff: 2e-6,
            coil_band: 0.03,
            gating: Gating::Edge,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PwmParams {
    pub v_dc: f64,
    pub f_sw: f64,
    pub duty_cmd: f64,
    pub t_rise: f64,
    pub t_fall: f64,
    /// Thevenin output resistance of the inverter leg.
    pub r_src: f64,
}

impl PwmParams {
    pub fn period(&self) -> f64 {
        1.0 / self.f_sw
    }
}

impl Default for PwmParams {
    fn default() -> Self {
        Self {
            v_dc: 600.0,
            f_sw: 10e3,
            duty_cmd: 0.5,
            t_rise: 100e-9,
            t_fall: 100e-9,
            r_src: 0.1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RefKind {
    Underdamped,
    CriticallyDamped,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MracParams {
    pub kind: RefKind,
    pub alpha: f64,
    pub omega: f64,
    pub gamma: f64,
    pub epsilon: f64,
    pub freeze_when_inactive: bool,
    /// Duty the controller starts from.
    pub d_init: f64,
    /// Corner of the single-pole high-pass that separates `i_HF` (and the
    /// tracking error) from the fundamental. Zero selects `10 * f_sw`.
    pub hp_cutoff: f64,
    /// How long after an edge starts reaching the motor the duty may adapt.
    /// Later samples carry re-reflections from the inverter end whose sign
    /// no longer follows the termination error. Zero selects the round trip
    /// less one edge duration at each end.
    pub window: f64,
    /// Corner of the high-pass both `v_coil` and the reference output go
    /// through before they are compared. The coil voltage decays to zero
    /// between edges while the reference holds its DC share. Zero selects
    /// the cable's quarter-wave frequency.
    pub err_cutoff: f64,
}

impl MracParams {
    pub fn hp_corner(&self, pwm: &PwmParams) -> f64 {
        if self.hp_cutoff > 0.0 {
            self.hp_cutoff
        } else {
            10.0 * pwm.f_sw
        }
    }

    pub fn err_corner(&self, f_ring: f64) -> f64 {
        if self.err_cutoff > 0.0 {
            self.err_cutoff
        } else {
            f_ring
        }
    }

    pub fn adapt_window(&self, pwm: &PwmParams, tau: f64) -> f64 {
        let edge = pwm.t_rise.max(pwm.t_fall);
        if self.window > 0.0 {
            self.window
        } else if tau > 2.0 * edge {
            2.0 * (tau - edge)
        } else {
            2.0 * tau
        }
    }

    /// Largest eigenvalue magnitude of the reference model.
    pub fn eigen_magnitude(&self) -> f64 {
        match self.kind {
            RefKind::Underdamped => self.alpha.hypot(self.omega),
            RefKind::CriticallyDamped => self.alpha,
        }
    }
}

impl Default for MracParams {
    fn default() -> Self {
        Self {
            kind: RefKind::CriticallyDamped,
            alpha: 9e7,
            omega: 2.0 * PI * 714e3,
            gamma: 100.0,
            epsilon: 1.0,
            freeze_when_inactive: true,
            d_init: 0.32,
            hp_cutoff: 0.0,
            window: 0.0,
            err_cutoff: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimParams {
    pub dt: f64,
    pub t_end: f64,
    pub record_stride: u32,
}

impl Default for SimParams {
    fn default() -> Self {
        Self {
            dt: 1e-9,
            t_end: 1e-3,
            record_stride: 10,
        }
    }
}

/// Full parameter bundle, as read from a config file.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Config {
    pub cable: CableParams,
    pub motor: MotorHfParams,
    pub branch: BranchParams,
    pub pwm: PwmParams,
    pub mrac: MracParams,
    pub sim: SimParams,
}

/// A configuration that passed validation, with derived quantities.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Validated {
    /// The bundle with `sim.dt` already snapped to the delay grid.
    pub config: Config,
    pub z0: f64,
    pub tau: f64,
    /// Line delay in steps; `tau == delay_steps * dt` up to rounding.
    pub delay_steps: usize,
}

impl Validated {
    pub fn dt(&self) -> f64 {
        self.config.sim.dt
    }

    pub fn total_steps(&self) -> u64 {
        (self.config.sim.t_end / self.dt() - 1e-9).ceil().max(0.0) as u64
    }
}

// Relative slack used when snapping dt so that re-validation is a no-op.
const GRID_SLACK: f64 = 1e-9;

struct Checker {
    violations: Vec<Violation>,
}

impl Checker {
    fn finite(&mut self, field: &str, v: f64) -> bool {
        if v.is_finite() {
            true
        } else {
            self.violations
                .push(Violation::new(field, format!("must be finite, got {v}")));
            false
        }
    }

    fn positive(&mut self, field: &str, v: f64) {
        if self.finite(field, v) && v <= 0.0 {
            self.violations
                .push(Violation::new(field, format!("{field} must be > 0, got {v}")));
        }
    }

    fn non_negative(&mut self, field: &str, v: f64) {
        if self.finite(field, v) && v < 0.0 {
            self.violations
                .push(Violation::new(field, format!("{field} must be >= 0, got {v}")));
        }
    }

    fn require(&mut self, ok: bool, field: &str, message: String) {
        if !ok {
            self.violations.push(Violation::new(field, message));
        }
    }
}

impl Config {
    /// Checks every invariant and derives `Z0`, `τ` and the snapped step.
    ///
    /// All violations are collected; the step is only ever shrunk so that the
    /// line delay is an integer number of steps.
    pub fn validate(&self) -> Result<Validated> {
        let mut c = Checker {
            violations: Vec::new(),
        };
        let Config {
            cable,
            motor,
            branch,
            pwm,
            mrac,
            sim,
        } = *self;

        c.positive("cable.length_m", cable.length_m);
        c.positive("cable.l_per_m", cable.l_per_m);
        c.positive("cable.c_per_m", cable.c_per_m);
        c.non_negative("cable.r_per_m", cable.r_per_m);

        c.require(
            motor.n_coils >= 2,
            "motor.n_coils",
            format!("motor.n_coils must be >= 2, got {}", motor.n_coils),
        );
        c.positive("motor.l_coil", motor.l_coil);
        c.positive("motor.r_term", motor.r_term);
        c.positive("motor.r_wind", motor.r_wind);
        c.non_negative("motor.c_gnd", motor.c_gnd);
        c.non_negative("motor.r_gnd", motor.r_gnd);
        c.positive("motor.r_damp", motor.r_damp);

        c.positive("branch.r_b", branch.r_b);
        c.non_negative("branch.c_b", branch.c_b);
        c.positive("branch.d_min", branch.d_min);
        if c.finite("branch.d_max", branch.d_max) {
            c.require(
                branch.d_max > branch.d_min && branch.d_max <= 1.0,
                "branch.d_max",
                format!(
                    "branch.d_max must satisfy d_min < d_max <= 1, got {}",
                    branch.d_max
                ),
            );
        }
        if c.finite("branch.activation_ratio", branch.activation_ratio) {
            c.require(
                branch.activation_ratio > 1.0,
                "branch.activation_ratio",
                format!(
                    "branch.activation_ratio must be > 1, got {}",
                    branch.activation_ratio
                ),
            );
        }
        if c.finite("branch.safety", branch.safety) {
            c.require(
                branch.safety > 0.0 && branch.safety <= 1.0,
                "branch.safety",
                format!("branch.safety must be in (0, 1], got {}", branch.safety),
            );
        }
        c.non_negative("branch.holdoff", branch.holdoff);
        c.positive("branch.coil_band", branch.coil_band);

        c.positive("pwm.v_dc", pwm.v_dc);
        c.positive("pwm.f_sw", pwm.f_sw);
        c.positive("pwm.t_rise", pwm.t_rise);
        c.positive("pwm.t_fall", pwm.t_fall);
        c.non_negative("pwm.r_src", pwm.r_src);
        if c.finite("pwm.duty_cmd", pwm.duty_cmd) {
            c.require(
                (0.0..=1.0).contains(&pwm.duty_cmd),
                "pwm.duty_cmd",
                format!("pwm.duty_cmd must be in [0, 1], got {}", pwm.duty_cmd),
            );
        }
        if pwm.f_sw > 0.0 && pwm.f_sw.is_finite() {
            let half = 0.5 * pwm.period();
            c.require(
                pwm.t_rise < half,
                "pwm.t_rise",
                format!("pwm.t_rise must be < 1/(2 f_sw) = {half}"),
            );
            c.require(
                pwm.t_fall < half,
                "pwm.t_fall",
                format!("pwm.t_fall must be < 1/(2 f_sw) = {half}"),
            );
            if pwm.duty_cmd > 0.0 && pwm.duty_cmd < 1.0 {
                let high = pwm.duty_cmd * pwm.period();
                c.require(
                    high >= pwm.t_rise && pwm.period() - high >= pwm.t_fall,
                    "pwm.duty_cmd",
                    "pwm.duty_cmd leaves no room for the edges to complete".to_string(),
                );
            }
        }

        c.positive("mrac.alpha", mrac.alpha);
        if mrac.kind == RefKind::Underdamped {
            c.positive("mrac.omega", mrac.omega);
        } else {
            c.non_negative("mrac.omega", mrac.omega);
        }
        c.non_negative("mrac.gamma", mrac.gamma);
        c.positive("mrac.epsilon", mrac.epsilon);
        c.non_negative("mrac.hp_cutoff", mrac.hp_cutoff);
        c.non_negative("mrac.window", mrac.window);
        c.non_negative("mrac.err_cutoff", mrac.err_cutoff);
        if c.finite("mrac.d_init", mrac.d_init) {
            c.require(
                mrac.d_init >= branch.d_min && mrac.d_init <= branch.d_max,
                "mrac.d_init",
                format!("mrac.d_init must lie in [d_min, d_max], got {}", mrac.d_init),
            );
        }

        c.positive("sim.dt", sim.dt);
        c.positive("sim.t_end", sim.t_end);
        c.require(
            sim.record_stride >= 1,
            "sim.record_stride",
            "sim.record_stride must be >= 1".to_string(),
        );

        if !c.violations.is_empty() {
            return Err(Error::Invalid(c.violations));
        }

        // Cross-field checks need the individual fields to be sane first.
        let z0 = cable.surge_impedance();
        let tau = cable.delay();
        c.require(
            z0.is_finite() && z0 > 0.0,
            "cable",
            format!("surge impedance must be finite and positive, got {z0}"),
        );
        c.require(
            tau.is_finite() && tau > 0.0,
            "cable",
            format!("delay must be finite and positive, got {tau}"),
        );
        let f_ring = cable.quarter_wave_frequency();
        let z_motor = motor.terminal_impedance(f_ring).norm();
        c.require(
            z_motor > z0,
            "motor",
            format!(
                "unmatched terminal impedance {z_motor:.4} ohm at {f_ring:.4} Hz must exceed Z0 = {z0:.4} ohm"
            ),
        );
        let max_dt = pwm.t_rise.min(pwm.t_fall) / 20.0;
        c.require(
            sim.dt <= max_dt * (1.0 + GRID_SLACK),
            "sim.dt",
            format!(
                "sim.dt must be <= min(t_rise, t_fall)/20 = {max_dt}, got {}",
                sim.dt
            ),
        );
        c.require(
            sim.t_end >= 4.0 * tau * (1.0 - GRID_SLACK),
            "sim.t_end",
            format!("sim.t_end must be >= 4 tau = {}, got {}", 4.0 * tau, sim.t_end),
        );
        if !c.violations.is_empty() {
            return Err(Error::Invalid(c.violations));
        }

        let delay_steps = (tau / sim.dt - GRID_SLACK).ceil().max(1.0) as usize;
        let dt = tau / delay_steps as f64;

        let eig = mrac.eigen_magnitude();
        c.require(
            dt * eig < 0.1,
            "mrac.alpha",
            format!(
                "reference model too fast for the step: dt*|lambda| = {} must be < 0.1",
                dt * eig
            ),
        );
        if !c.violations.is_empty() {
            return Err(Error::Invalid(c.violations));
        }

        let mut config = *self;
        config.sim.dt = dt;
        Ok(Validated {
            config,
            z0,
            tau,
            delay_steps,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_cable_gives_fifty_ohms_and_350ns() {
        let v = Config::default().validate().unwrap();
        assert!((v.z0 - 50.0).abs() < 1e-12);
        assert!((v.tau - 0.35e-6).abs() < 1e-18);
        assert_eq!(v.delay_steps, 350);
        assert!((v.config.cable.quarter_wave_frequency() - 714_285.714).abs() < 1e-2);
    }

    #[test]
    fn other_surge_impedances() {
        let mut cable = CableParams {
            l_per_m: 100e-9,
            ..Default::default()
        };
        assert!((cable.surge_impedance() - 1000f64.sqrt()).abs() < 1e-12);
        cable.l_per_m = 3e-7;
        cable.c_per_m = 3e-7;
        assert_eq!(cable.surge_impedance(), 1.0);
    }

    #[test]
    fn d_min_zero_is_named() {
        let mut cfg = Config::default();
        cfg.branch.d_min = 0.0;
        match cfg.validate() {
            Err(Error::Invalid(v)) => {
                assert!(v.iter().any(|x| x.message.contains("d_min must be > 0")), "{v:?}");
            }
            other => panic!("expected violations, got {other:?}"),
        }
    }

    #[test]
    fn every_violation_is_reported() {
        let mut cfg = Config::default();
        cfg.cable.length_m = -1.0;
        cfg.pwm.v_dc = f64::NAN;
        cfg.branch.r_b = 0.0;
        let Err(Error::Invalid(v)) = cfg.validate() else {
            panic!("expected failure")
        };
        let fields: Vec<_> = v.iter().map(|x| x.field.as_str()).collect();
        assert!(fields.contains(&"cable.length_m"));
        assert!(fields.contains(&"pwm.v_dc"));
        assert!(fields.contains(&"branch.r_b"));
    }

    #[test]
    fn dt_is_shrunk_onto_the_delay_grid() {
        let mut cfg = Config::default();
        cfg.sim.dt = 0.98e-9;
        let v = cfg.validate().unwrap();
        assert_eq!(v.delay_steps, 358);
        assert!(v.dt() <= 0.98e-9);
        assert!((v.dt() * 358.0 - v.tau).abs() < 1e-20);
    }

    #[test]
    fn coarse_step_rejected() {
        let mut cfg = Config::default();
        cfg.sim.dt = 6e-9;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn short_run_rejected() {
        let mut cfg = Config::default();
        cfg.sim.t_end = 1e-6;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn low_impedance_motor_rejected() {
        let mut cfg = Config::default();
        cfg.motor.l_coil = 1e-9;
        cfg.motor.r_term = 1.0;
        assert!(cfg.validate().is_err());
    }
}
