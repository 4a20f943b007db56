//! Fixed-step simulation of inverter, cable, motor branch and controller.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::line::{BergeronLine, Ladder, Termination, Thevenin};
use crate::motor::{z_eq_unchecked, Gate, MotorNetwork};
use crate::mrac::{adapt_duty, matched_coil_share, observe, ref_step, HighPass, MracState, RefModel};
use crate::params::{Config, Gating, Validated};
use crate::source::{last_edge, pwm_voltage};
use crate::trace::{Sample, Trace};

/// How the first-coil branch is driven.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Mode {
    /// Duty adapted online by the reference-model controller.
    Adaptive,
    /// Duty fixed at the resistive match `R_b / Z0`.
    StaticMatched,
    /// Branch never connected.
    Off,
}

impl Mode {
    pub const ALL: [Mode; 3] = [Mode::Adaptive, Mode::StaticMatched, Mode::Off];

    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Adaptive => "adaptive",
            Mode::StaticMatched => "static-matched",
            Mode::Off => "off",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Mode::ALL.into_iter().find(|m| m.as_str() == s).ok_or_else(|| {
            Error::argument(
                "mode",
                format!("expected adaptive, static-matched or off, got {s:?}"),
            )
        })
    }
}

/// Cable representation used by a run.
#[derive(Debug, Clone)]
pub enum LineModel {
    Bergeron(BergeronLine),
    Ladder(Ladder),
}

impl LineModel {
    fn step<T: Termination>(&mut self, src: Thevenin, term: &mut T, dt: f64) -> Result<()> {
        match self {
            LineModel::Bergeron(l) => l.step(src, term, dt),
            LineModel::Ladder(l) => l.step(src, term, dt),
        }
    }

    fn v_send(&self) -> f64 {
        match self {
            LineModel::Bergeron(l) => l.v_send,
            LineModel::Ladder(l) => l.v_send(),
        }
    }

    fn v_recv(&self) -> f64 {
        match self {
            LineModel::Bergeron(l) => l.v_recv,
            LineModel::Ladder(l) => l.v_recv(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SimRun {
    pub validated: Validated,
    pub mode: Mode,
    pub line: LineModel,
    pub motor: MotorNetwork,
    pub gate: Gate,
    pub mrac: MracState,
    model: RefModel,
    hp_i: HighPass,
    hp_coil: HighPass,
    hp_ref: HighPass,
    u_prev: f64,
    f_ring: f64,
    window: f64,
    lead: f64,
    step_index: u64,
    pub trace: Trace,
}

impl SimRun {
    pub fn new(validated: Validated, mode: Mode) -> Result<Self> {
        let line = LineModel::Bergeron(BergeronLine::new(&validated.config.cable, validated.delay_steps));
        Self::with_line(validated, mode, line)
    }

    /// Same run with the cable replaced by an `n_seg` section ladder.
    pub fn with_ladder(validated: Validated, mode: Mode, n_seg: usize) -> Result<Self> {
        let line = LineModel::Ladder(Ladder::resolved(&validated.config.cable, n_seg, validated.dt())?);
        Self::with_line(validated, mode, line)
    }

    fn with_line(validated: Validated, mode: Mode, line: LineModel) -> Result<Self> {
        let c = &validated.config;
        let f_ring = c.cable.quarter_wave_frequency();
        let d0 = match mode {
            Mode::StaticMatched => c.branch.matched_duty(validated.z0),
            _ => c.mrac.d_init,
        }
        .clamp(c.branch.d_min, c.branch.d_max);
        let share = matched_coil_share(&c.motor, validated.z0, f_ring);
        let model = RefModel::from_params(&c.mrac, share)?;
        let dt = validated.dt();
        let mut run = Self {
            validated,
            mode,
            line,
            motor: MotorNetwork::new(c.motor, c.branch, d0),
            gate: Gate::default(),
            mrac: MracState::new(d0, c.mrac.gamma, c.mrac.epsilon),
            hp_i: HighPass::new(c.mrac.hp_corner(&c.pwm), dt),
            hp_coil: HighPass::new(c.mrac.err_corner(f_ring), dt),
            hp_ref: HighPass::new(c.mrac.err_corner(f_ring), dt),
            u_prev: 0.0,
            f_ring,
            window: c.mrac.adapt_window(&c.pwm, validated.tau),
            lead: model.ramp_lag(),
            model,
            step_index: 0,
            trace: Trace::new(),
        };
        let first = run.sample();
        run.trace.push(first);
        Ok(run)
    }

    pub fn config(&self) -> &Config {
        &self.validated.config
    }

    pub fn time(&self) -> f64 {
        self.step_index as f64 * self.validated.dt()
    }

    pub fn steps_taken(&self) -> u64 {
        self.step_index
    }

    pub fn v_mot(&self) -> f64 {
        self.line.v_recv()
    }

    /// High-passed first-coil current seen by the controller.
    pub fn i_hf(&self) -> f64 {
        self.hp_i.output()
    }

    pub fn branch_enabled(&self) -> bool {
        self.mode != Mode::Off
    }

    fn sample(&self) -> Sample {
        let enabled = self.branch_enabled();
        Sample {
            t: self.time(),
            v_inv: self.line.v_send(),
            v_mot: self.line.v_recv(),
            v_coil: self.motor.coil.v_coil,
            i_hf: self.hp_i.output(),
            i_branch: self.motor.branch.i_branch,
            duty: if enabled { self.mrac.d } else { 0.0 },
            zeq: if enabled { self.z_mag() } else { 0.0 },
            lyap: self.mrac.big_e,
        }
    }

    fn z_mag(&self) -> f64 {
        z_eq_unchecked(self.mrac.d, self.f_ring, &self.config().branch).norm()
    }

    fn abort(&self, step: u64, err: Error) -> Error {
        match err {
            Error::Runtime { message, .. } => Error::Runtime {
                step,
                message: format!(
                    "{message}\n  t = {:e} s, mode = {}\n  motor = {:?}\n  mrac = {:?}\n  gate = {:?}",
                    step as f64 * self.validated.dt(),
                    self.mode,
                    self.motor,
                    self.mrac,
                    self.gate
                ),
            },
            other => other,
        }
    }

    /// Advances the run by one step.
    pub fn step(&mut self) -> Result<()> {
        let n = self.step_index + 1;
        self.advance(n).map_err(|e| self.abort(n, e))?;
        self.step_index = n;
        let stride = u64::from(self.config().sim.record_stride.max(1));
        if n.is_multiple_of(stride) {
            let s = self.sample();
            self.trace.push(s);
        }
        Ok(())
    }

    fn advance(&mut self, n: u64) -> Result<()> {
        let c = self.validated.config;
        let dt = self.validated.dt();
        let tau = self.validated.tau;
        let t = n as f64 * dt;

        let src = Thevenin {
            v: pwm_voltage(t, &c.pwm),
            r: c.pwm.r_src,
        };
        self.line.step(src, &mut self.motor, dt)?;
        let v_mot = self.line.v_recv();

        // Gate for the coming step, looking at what reaches the motor then.
        let at_motor = t - tau;
        let active = match self.mode {
            Mode::Off => false,
            _ if c.branch.gating == Gating::Always => true,
            _ => {
                let arriving =
                    last_edge(at_motor + dt, &c.pwm).is_some_and(|e| e.in_flight(at_motor + dt, &c.pwm));
                let settled = pwm_voltage(at_motor, &c.pwm);
                self.gate.update(
                    t,
                    v_mot,
                    settled,
                    self.motor.coil.v_coil,
                    arriving,
                    &c.pwm,
                    &c.branch,
                )
            }
        };

        // Lead the reference by its own ramp lag so a matched termination
        // tracks it through the edge.
        let u = pwm_voltage(at_motor + self.lead, &c.pwm) / c.pwm.v_dc;
        let (x_m, v_ref) = ref_step(&self.model, &self.mrac.x_m, c.pwm.v_dc, self.u_prev, u, dt)?;
        self.u_prev = u;
        self.mrac.x_m = x_m;
        self.mrac.v_ref = self.hp_ref.update(v_ref);

        let i_hf = self.hp_i.update(self.motor.coil.i_coil);
        let v_coil = self.hp_coil.update(self.motor.coil.v_coil);
        let fresh = last_edge(at_motor, &c.pwm).is_some_and(|e| at_motor - e.t_start < self.window);
        let adapting = self.mode == Mode::Adaptive && fresh && (active || !c.mrac.freeze_when_inactive);
        if adapting {
            adapt_duty(&mut self.mrac, v_coil, i_hf, &c.branch, self.f_ring, dt)?;
            self.motor.set_duty(self.mrac.d);
        } else {
            let z = if self.branch_enabled() { self.z_mag() } else { 0.0 };
            observe(&mut self.mrac, v_coil, i_hf, z)?;
        }
        self.motor.set_active(active);
        Ok(())
    }

    pub fn run_to_end(mut self) -> Result<Trace> {
        let total = self.validated.total_steps();
        while self.step_index < total {
            self.step()?;
        }
        Ok(self.trace)
    }
}

/// Validates `config` and runs it to `t_end`.
pub fn run_to_end(config: &Config, mode: Mode) -> Result<Trace> {
    SimRun::new(config.validate()?, mode)?.run_to_end()
}

/// The same run on an `n_seg` ladder cable.
pub fn run_ladder(config: &Config, mode: Mode, n_seg: usize) -> Result<Trace> {
    SimRun::with_ladder(config.validate()?, mode, n_seg)?.run_to_end()
}

/// Largest `|a - b|` in `v_mot` over samples with `t <= t_max`.
pub fn max_divergence(a: &Trace, b: &Trace, t_max: f64) -> f64 {
    a.samples
        .iter()
        .zip(&b.samples)
        .take_while(|(x, _)| x.t <= t_max)
        .map(|(x, y)| (x.v_mot - y.v_mot).abs())
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn short(t_end: f64) -> Config {
        let mut c = Config::default();
        c.sim.t_end = t_end;
        c
    }

    #[test]
    fn mode_names_round_trip() {
        for m in Mode::ALL {
            assert_eq!(m.as_str().parse::<Mode>().unwrap(), m);
        }
        assert!("matched".parse::<Mode>().is_err());
    }

    #[test]
    fn sample_count_includes_both_ends() {
        let mut c = short(10e-6);
        c.sim.dt = 1e-9;
        c.sim.record_stride = 10;
        let tr = run_to_end(&c, Mode::Off).unwrap();
        assert_eq!(tr.len(), 1001);
        assert_eq!(tr.samples[0].t, 0.0);
        assert!((tr.samples[1000].t - 10e-6).abs() < 1e-15);
    }

    #[test]
    fn zero_input_is_silent() {
        let mut c = short(2000.0 * 1e-9);
        c.pwm.duty_cmd = 0.0;
        c.sim.record_stride = 1;
        let tr = run_to_end(&c, Mode::Off).unwrap();
        assert_eq!(tr.len(), 2001);
        for s in &tr.samples {
            let Sample {
                t: _,
                v_inv,
                v_mot,
                v_coil,
                i_hf,
                i_branch,
                duty,
                zeq,
                lyap,
            } = *s;
            for v in [v_inv, v_mot, v_coil, i_hf, i_branch, duty, zeq, lyap] {
                assert_eq!(v, 0.0);
            }
        }
    }

    #[test]
    fn causal_at_the_motor() {
        let c = short(2e-6);
        let v = c.validate().unwrap();
        let tr = run_to_end(&c, Mode::Off).unwrap();
        for s in tr.samples.iter().filter(|s| s.t < v.tau) {
            assert_eq!(s.v_mot, 0.0, "t = {}", s.t);
        }
    }

    #[test]
    fn deterministic() {
        let c = short(40e-6);
        let a = run_to_end(&c, Mode::Adaptive).unwrap();
        let b = run_to_end(&c, Mode::Adaptive).unwrap();
        assert_eq!(a.to_csv(), b.to_csv());
    }

    #[test]
    fn duty_stays_in_range() {
        let c = short(120e-6);
        let tr = run_to_end(&c, Mode::Adaptive).unwrap();
        for s in &tr.samples {
            assert!(s.duty >= c.branch.d_min && s.duty <= c.branch.d_max);
            assert!(s.lyap >= 0.0);
        }
    }
}
