//! Sectioned key-value config files.
//!
//! ```text
//! # comment
//! [cable]
//! length_m = 70
//! l_per_m  = 250n     # SI suffixes: f p n u µ m k M G
//! ```
//!
//! Sections are `cable`, `motor`, `branch`, `pwm`, `mrac` and `sim`; keys
//! are the field names of the matching parameter struct. Keys that are not
//! given keep their default value. Unknown sections or keys are errors.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::params::{Config, Gating, RefKind};

/// Parses a decimal number with an optional trailing SI prefix.
pub fn parse_number(text: &str) -> Option<f64> {
    let s = text.trim();
    let (body, scale) = match s.char_indices().last() {
        Some((i, ch)) => match ch {
            'f' => (&s[..i], 1e-15),
            'p' => (&s[..i], 1e-12),
            'n' => (&s[..i], 1e-9),
            'u' | 'µ' | 'μ' => (&s[..i], 1e-6),
            'm' => (&s[..i], 1e-3),
            'k' => (&s[..i], 1e3),
            'M' => (&s[..i], 1e6),
            'G' => (&s[..i], 1e9),
            _ => (s, 1.0),
        },
        None => return None,
    };
    let v: f64 = body.trim().parse().ok()?;
    // Keep exact values for plain numbers; scaling by 1.0 is exact anyway.
    Some(if scale == 1.0 { v } else { v * scale })
}

fn parse_bool(text: &str) -> Option<bool> {
    match text.trim() {
        "true" | "yes" | "on" | "1" => Some(true),
        "false" | "no" | "off" | "0" => Some(false),
        _ => None,
    }
}

impl Config {
    pub fn from_file(path: impl AsRef<Path>) -> Result<Config> {
        let text = std::fs::read_to_string(path)?;
        Config::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Config> {
        let mut cfg = Config::default();
        let mut section = String::new();
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix('[') {
                let name = rest.strip_suffix(']').ok_or_else(|| Error::Parse {
                    line: line_no,
                    message: format!("unterminated section header `{line}`"),
                })?;
                section = name.trim().to_string();
                if !matches!(
                    section.as_str(),
                    "cable" | "motor" | "branch" | "pwm" | "mrac" | "sim"
                ) {
                    return Err(Error::Parse {
                        line: line_no,
                        message: format!("unknown section `{section}`"),
                    });
                }
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| Error::Parse {
                line: line_no,
                message: format!("expected `key = value`, got `{line}`"),
            })?;
            let key = format!("{section}.{}", key.trim());
            cfg.set(&key, value.trim()).map_err(|message| Error::Parse {
                line: line_no,
                message,
            })?;
        }
        Ok(cfg)
    }

    /// Sets one field from its textual value, e.g. `set("cable.length_m", "50")`.
    pub fn set(&mut self, key: &str, value: &str) -> std::result::Result<(), String> {
        let num = || parse_number(value).ok_or_else(|| format!("`{value}` is not a number for {key}"));
        match key {
            "cable.length_m" => self.cable.length_m = num()?,
            "cable.l_per_m" => self.cable.l_per_m = num()?,
            "cable.c_per_m" => self.cable.c_per_m = num()?,
            "cable.r_per_m" => self.cable.r_per_m = num()?,
            "motor.n_coils" => self.motor.n_coils = parse_count(value, key)?,
            "motor.l_coil" => self.motor.l_coil = num()?,
            "motor.r_term" => self.motor.r_term = num()?,
            "motor.r_wind" => self.motor.r_wind = num()?,
            "motor.c_gnd" => self.motor.c_gnd = num()?,
            "motor.r_gnd" => self.motor.r_gnd = num()?,
            "motor.r_damp" => self.motor.r_damp = num()?,
            "branch.r_b" => self.branch.r_b = num()?,
            "branch.c_b" => self.branch.c_b = num()?,
            "branch.d_min" => self.branch.d_min = num()?,
            "branch.d_max" => self.branch.d_max = num()?,
            "branch.activation_ratio" => self.branch.activation_ratio = num()?,
            "branch.safety" => self.branch.safety = num()?,
            "branch.holdoff" => self.branch.holdoff = num()?,
            "branch.coil_band" => self.branch.coil_band = num()?,
            "branch.gating" => {
                self.branch.gating = match value {
                    "edge" => Gating::Edge,
                    "always" => Gating::Always,
                    _ => return Err(format!("branch.gating must be `edge` or `always`, got `{value}`")),
                }
            }
            "pwm.v_dc" => self.pwm.v_dc = num()?,
            "pwm.f_sw" => self.pwm.f_sw = num()?,
            "pwm.duty_cmd" => self.pwm.duty_cmd = num()?,
            "pwm.t_rise" => self.pwm.t_rise = num()?,
            "pwm.t_fall" => self.pwm.t_fall = num()?,
            "pwm.r_src" => self.pwm.r_src = num()?,
            "mrac.kind" => {
                self.mrac.kind = match value {
                    "underdamped" => RefKind::Underdamped,
                    "critically_damped" | "critically-damped" => RefKind::CriticallyDamped,
                    _ => {
                        return Err(format!(
                            "mrac.kind must be `underdamped` or `critically_damped`, got `{value}`"
                        ))
                    }
                }
            }
            "mrac.alpha" => self.mrac.alpha = num()?,
            "mrac.omega" => self.mrac.omega = num()?,
            "mrac.gamma" => self.mrac.gamma = num()?,
            "mrac.epsilon" => self.mrac.epsilon = num()?,
            "mrac.d_init" => self.mrac.d_init = num()?,
            "mrac.hp_cutoff" => self.mrac.hp_cutoff = num()?,
            "mrac.window" => self.mrac.window = num()?,
            "mrac.err_cutoff" => self.mrac.err_cutoff = num()?,
            "mrac.freeze_when_inactive" => {
                self.mrac.freeze_when_inactive =
                    parse_bool(value).ok_or_else(|| format!("`{value}` is not a boolean for {key}"))?
            }
            "sim.dt" => self.sim.dt = num()?,
            "sim.t_end" => self.sim.t_end = num()?,
            "sim.record_stride" => self.sim.record_stride = parse_count(value, key)?,
            _ => return Err(format!("unknown key `{key}`")),
        }
        Ok(())
    }

    /// Reads one numeric field back, using the same keys as [`Config::set`].
    pub fn get(&self, key: &str) -> Option<f64> {
        Some(match key {
            "cable.length_m" => self.cable.length_m,
            "cable.l_per_m" => self.cable.l_per_m,
            "cable.c_per_m" => self.cable.c_per_m,
            "cable.r_per_m" => self.cable.r_per_m,
            "motor.n_coils" => f64::from(self.motor.n_coils),
            "motor.l_coil" => self.motor.l_coil,
            "motor.r_term" => self.motor.r_term,
            "motor.r_wind" => self.motor.r_wind,
            "motor.c_gnd" => self.motor.c_gnd,
            "motor.r_gnd" => self.motor.r_gnd,
            "motor.r_damp" => self.motor.r_damp,
            "branch.r_b" => self.branch.r_b,
            "branch.c_b" => self.branch.c_b,
            "branch.d_min" => self.branch.d_min,
            "branch.d_max" => self.branch.d_max,
            "branch.activation_ratio" => self.branch.activation_ratio,
            "branch.safety" => self.branch.safety,
            "branch.holdoff" => self.branch.holdoff,
            "branch.coil_band" => self.branch.coil_band,
            "pwm.v_dc" => self.pwm.v_dc,
            "pwm.f_sw" => self.pwm.f_sw,
            "pwm.duty_cmd" => self.pwm.duty_cmd,
            "pwm.t_rise" => self.pwm.t_rise,
            "pwm.t_fall" => self.pwm.t_fall,
            "pwm.r_src" => self.pwm.r_src,
            "mrac.alpha" => self.mrac.alpha,
            "mrac.omega" => self.mrac.omega,
            "mrac.gamma" => self.mrac.gamma,
            "mrac.epsilon" => self.mrac.epsilon,
            "mrac.d_init" => self.mrac.d_init,
            "mrac.hp_cutoff" => self.mrac.hp_cutoff,
            "mrac.window" => self.mrac.window,
            "mrac.err_cutoff" => self.mrac.err_cutoff,
            "sim.dt" => self.sim.dt,
            "sim.t_end" => self.sim.t_end,
            "sim.record_stride" => f64::from(self.sim.record_stride),
            _ => return None,
        })
    }

    /// Renders the bundle in the config grammar with lossless floats.
    pub fn to_config_string(&self) -> String {
        let mut s = String::new();
        let c = self;
        let _ = writeln!(s, "[cable]");
        let _ = writeln!(s, "length_m = {:?}", c.cable.length_m);
        let _ = writeln!(s, "l_per_m = {:?}", c.cable.l_per_m);
        let _ = writeln!(s, "c_per_m = {:?}", c.cable.c_per_m);
        let _ = writeln!(s, "r_per_m = {:?}", c.cable.r_per_m);
        let _ = writeln!(s, "\n[motor]");
        let _ = writeln!(s, "n_coils = {}", c.motor.n_coils);
        let _ = writeln!(s, "l_coil = {:?}", c.motor.l_coil);
        let _ = writeln!(s, "r_term = {:?}", c.motor.r_term);
        let _ = writeln!(s, "r_wind = {:?}", c.motor.r_wind);
        let _ = writeln!(s, "c_gnd = {:?}", c.motor.c_gnd);
        let _ = writeln!(s, "r_gnd = {:?}", c.motor.r_gnd);
        let _ = writeln!(s, "r_damp = {:?}", c.motor.r_damp);
        let _ = writeln!(s, "\n[branch]");
        let _ = writeln!(s, "r_b = {:?}", c.branch.r_b);
        let _ = writeln!(s, "c_b = {:?}", c.branch.c_b);
        let _ = writeln!(s, "d_min = {:?}", c.branch.d_min);
        let _ = writeln!(s, "d_max = {:?}", c.branch.d_max);
        let _ = writeln!(s, "activation_ratio = {:?}", c.branch.activation_ratio);
        let _ = writeln!(s, "safety = {:?}", c.branch.safety);
        let _ = writeln!(s, "holdoff = {:?}", c.branch.holdoff);
        let _ = writeln!(s, "coil_band = {:?}", c.branch.coil_band);
        let gating = match c.branch.gating {
            Gating::Edge => "edge",
            Gating::Always => "always",
        };
        let _ = writeln!(s, "gating = {gating}");
        let _ = writeln!(s, "\n[pwm]");
        let _ = writeln!(s, "v_dc = {:?}", c.pwm.v_dc);
        let _ = writeln!(s, "f_sw = {:?}", c.pwm.f_sw);
        let _ = writeln!(s, "duty_cmd = {:?}", c.pwm.duty_cmd);
        let _ = writeln!(s, "t_rise = {:?}", c.pwm.t_rise);
        let _ = writeln!(s, "t_fall = {:?}", c.pwm.t_fall);
        let _ = writeln!(s, "r_src = {:?}", c.pwm.r_src);
        let _ = writeln!(s, "\n[mrac]");
        let kind = match c.mrac.kind {
            RefKind::Underdamped => "underdamped",
            RefKind::CriticallyDamped => "critically_damped",
        };
        let _ = writeln!(s, "kind = {kind}");
        let _ = writeln!(s, "alpha = {:?}", c.mrac.alpha);
        let _ = writeln!(s, "omega = {:?}", c.mrac.omega);
        let _ = writeln!(s, "gamma = {:?}", c.mrac.gamma);
        let _ = writeln!(s, "epsilon = {:?}", c.mrac.epsilon);
        let _ = writeln!(s, "freeze_when_inactive = {}", c.mrac.freeze_when_inactive);
        let _ = writeln!(s, "d_init = {:?}", c.mrac.d_init);
        let _ = writeln!(s, "hp_cutoff = {:?}", c.mrac.hp_cutoff);
        let _ = writeln!(s, "window = {:?}", c.mrac.window);
        let _ = writeln!(s, "err_cutoff = {:?}", c.mrac.err_cutoff);
        let _ = writeln!(s, "\n[sim]");
        let _ = writeln!(s, "dt = {:?}", c.sim.dt);
        let _ = writeln!(s, "t_end = {:?}", c.sim.t_end);
        let _ = writeln!(s, "record_stride = {}", c.sim.record_stride);
        s
    }
}

fn parse_count(value: &str, key: &str) -> std::result::Result<u32, String> {
    value
        .trim()
        .parse()
        .map_err(|_| format!("`{value}` is not a non-negative integer for {key}"))
}
