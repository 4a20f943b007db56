//! Reference models: step response, overshoot and ramp lag.

use std::f64::consts::PI;

use reflectwave::mrac::{make_critically_damped, make_underdamped, ref_step};

fn main() -> reflectwave::Result<()> {
    let alpha = 1e7;
    let omega = 2.0 * PI * 6e6;
    for model in [
        make_critically_damped(alpha, 1.0)?,
        make_underdamped(alpha, omega, 1.0)?,
    ] {
        let dt = 1e-10;
        let mut x = [0.0; 2];
        let mut peak = 0.0f64;
        for _ in 0..20_000 {
            let (next, y) = ref_step(&model, &x, 1.0, 1.0, 1.0, dt)?;
            x = next;
            peak = peak.max(y);
        }
        let expect = if model.b_m[0] == 0.0 {
            (-PI * alpha / omega).exp()
        } else {
            0.0
        };
        println!(
            "{:?}: overshoot {:.4} (closed form {:.4}), ramp lag {:.2} ns",
            model.kind,
            peak - 1.0,
            expect,
            model.ramp_lag() * 1e9
        );
    }
    Ok(())
}
