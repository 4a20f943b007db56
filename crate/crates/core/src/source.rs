//! Inverter line voltage: a two-level pulse train with linear edges.

use crate::params::PwmParams;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Polarity {
    Rising,
    Falling,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EdgeEvent {
    pub t_start: f64,
    pub polarity: Polarity,
    /// Signed slew rate in V/s.
    pub slope: f64,
}

impl EdgeEvent {
    fn rising(t_start: f64, pwm: &PwmParams) -> Self {
        Self {
            t_start,
            polarity: Polarity::Rising,
            slope: pwm.v_dc / pwm.t_rise,
        }
    }

    fn falling(t_start: f64, pwm: &PwmParams) -> Self {
        Self {
            t_start,
            polarity: Polarity::Falling,
            slope: -pwm.v_dc / pwm.t_fall,
        }
    }

    pub fn duration(&self, pwm: &PwmParams) -> f64 {
        match self.polarity {
            Polarity::Rising => pwm.t_rise,
            Polarity::Falling => pwm.t_fall,
        }
    }

    /// Waveform value at `t >= t_start`, assuming no later edge has started.
    pub fn value_at(&self, t: f64, pwm: &PwmParams) -> f64 {
        let progress = ((t - self.t_start) / self.duration(pwm)).clamp(0.0, 1.0);
        match self.polarity {
            Polarity::Rising => pwm.v_dc * progress,
            Polarity::Falling => pwm.v_dc * (1.0 - progress),
        }
    }

    pub fn in_flight(&self, t: f64, pwm: &PwmParams) -> bool {
        t >= self.t_start && t <= self.t_start + self.duration(pwm)
    }
}

fn rising_time(k: u64, pwm: &PwmParams) -> f64 {
    k as f64 / pwm.f_sw
}

fn falling_time(k: u64, pwm: &PwmParams) -> f64 {
    (k as f64 + pwm.duty_cmd) / pwm.f_sw
}

/// The most recent edge that started at or before `t`, if any.
pub fn last_edge(t: f64, pwm: &PwmParams) -> Option<EdgeEvent> {
    if t < 0.0 || pwm.duty_cmd <= 0.0 {
        return None;
    }
    if pwm.duty_cmd >= 1.0 {
        return Some(EdgeEvent::rising(0.0, pwm));
    }
    let mut k = (t * pwm.f_sw).floor().max(0.0) as u64;
    if rising_time(k, pwm) > t {
        k = k.saturating_sub(1);
    } else if rising_time(k + 1, pwm) <= t {
        k += 1;
    }
    if falling_time(k, pwm) <= t {
        Some(EdgeEvent::falling(falling_time(k, pwm), pwm))
    } else {
        Some(EdgeEvent::rising(rising_time(k, pwm), pwm))
    }
}

/// Inverter output voltage at time `t`, in `[0, v_dc]`.
pub fn pwm_voltage(t: f64, pwm: &PwmParams) -> f64 {
    last_edge(t, pwm).map_or(0.0, |e| e.value_at(t, pwm))
}

/// All edges starting in `[0, t_end)`, in time order.
pub fn detect_edges(pwm: &PwmParams, t_end: f64) -> Vec<EdgeEvent> {
    let mut events = Vec::new();
    if pwm.duty_cmd <= 0.0 || t_end <= 0.0 {
        return events;
    }
    if pwm.duty_cmd >= 1.0 {
        events.push(EdgeEvent::rising(0.0, pwm));
        return events;
    }
    let periods = (t_end * pwm.f_sw - 1e-9).ceil().max(0.0) as u64;
    for k in 0..periods {
        let tr = rising_time(k, pwm);
        if tr < t_end {
            events.push(EdgeEvent::rising(tr, pwm));
        }
        let tf = falling_time(k, pwm);
        if tf < t_end {
            events.push(EdgeEvent::falling(tf, pwm));
        }
    }
    events
}

/// Rebuilds the waveform from an event list.
pub fn reconstruct(events: &[EdgeEvent], t: f64, pwm: &PwmParams) -> f64 {
    let idx = events.partition_point(|e| e.t_start <= t);
    if idx == 0 {
        0.0
    } else {
        events[idx - 1].value_at(t, pwm)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn pwm() -> PwmParams {
        PwmParams::default()
    }

    #[test]
    fn plateau_and_ramp_midpoint() {
        let p = pwm();
        assert_eq!(pwm_voltage(25e-6, &p), p.v_dc);
        assert_eq!(pwm_voltage(75e-6, &p), 0.0);
        let mid = 100e-6 + p.t_rise / 2.0;
        assert!((pwm_voltage(mid, &p) - p.v_dc / 2.0).abs() < 1e-9);
        let fall_mid = 50e-6 + p.t_fall / 2.0;
        assert!((pwm_voltage(fall_mid, &p) - p.v_dc / 2.0).abs() < 1e-9);
    }

    #[test]
    fn zero_duty_is_silent() {
        let mut p = pwm();
        p.duty_cmd = 0.0;
        for i in 0..1000 {
            assert_eq!(pwm_voltage(i as f64 * 1.3e-7, &p), 0.0);
        }
        assert!(detect_edges(&p, 1e-3).is_empty());
    }

    #[test]
    fn counts_edges() {
        let p = pwm();
        let ev = detect_edges(&p, 1e-3);
        let rising = ev.iter().filter(|e| e.polarity == Polarity::Rising).count();
        let falling = ev.iter().filter(|e| e.polarity == Polarity::Falling).count();
        assert_eq!((rising, falling), (10, 10));
        assert!(ev
            .windows(2)
            .all(|w| w[0].t_start + w[0].duration(&p) < w[1].t_start));
        for e in &ev {
            let expect = match e.polarity {
                Polarity::Rising => p.v_dc / p.t_rise,
                Polarity::Falling => -p.v_dc / p.t_fall,
            };
            assert_eq!(e.slope, expect);
        }
    }

    #[test]
    fn full_duty_has_one_rising_edge() {
        let mut p = pwm();
        p.duty_cmd = 1.0;
        let ev = detect_edges(&p, 1e-3);
        assert_eq!(ev.len(), 1);
        assert_eq!(ev[0].polarity, Polarity::Rising);
        assert_eq!(ev[0].t_start, 0.0);
        assert_eq!(pwm_voltage(0.7e-3, &p), p.v_dc);
    }

    #[test]
    fn max_slew_matches_fastest_edge() {
        let mut p = pwm();
        p.t_fall = 60e-9;
        let dt = 1e-9;
        let mut max_slope: f64 = 0.0;
        let mut prev = pwm_voltage(0.0, &p);
        for i in 1..200_000 {
            let v = pwm_voltage(i as f64 * dt, &p);
            max_slope = max_slope.max(((v - prev) / dt).abs());
            prev = v;
        }
        let expected = p.v_dc / p.t_rise.min(p.t_fall);
        assert!(
            (max_slope - expected).abs() <= expected * 0.02,
            "{max_slope} vs {expected}"
        );
    }

    proptest! {
        #[test]
        fn events_reconstruct_exactly(t in 0.0f64..1e-3, duty in 0.01f64..0.99) {
            let mut p = pwm();
            p.duty_cmd = duty;
            let ev = detect_edges(&p, 1e-3);
            prop_assert_eq!(reconstruct(&ev, t, &p), pwm_voltage(t, &p));
        }

        #[test]
        fn bounded(t in -1e-3f64..2e-3, duty in 0.0f64..=1.0) {
            let mut p = pwm();
            p.duty_cmd = duty;
            let v = pwm_voltage(t, &p);
            prop_assert!((0.0..=p.v_dc).contains(&v));
        }
    }
}
