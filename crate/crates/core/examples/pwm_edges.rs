//! Trapezoidal PWM source: edge list and reconstruction.

use reflectwave::params::PwmParams;
use reflectwave::source::{detect_edges, pwm_voltage, reconstruct};

fn main() {
    let pwm = PwmParams::default();
    let edges = detect_edges(&pwm, 2.0 * pwm.period());
    for e in &edges {
        println!(
            "t = {:9.3} us  {:?}  {:+.2e} V/s  lasts {:.0} ns",
            e.t_start * 1e6,
            e.polarity,
            e.slope,
            e.duration(&pwm) * 1e9
        );
    }
    let worst = (0..20_000)
        .map(|k| k as f64 * 10e-9)
        .map(|t| (pwm_voltage(t, &pwm) - reconstruct(&edges, t, &pwm)).abs())
        .fold(0.0, f64::max);
    println!("reconstruction error {worst:e} V");
}
