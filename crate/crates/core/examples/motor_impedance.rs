//! High-frequency impedance seen at the motor terminals, and the branch duty
//! that matches the cable.

use reflectwave::line::reflection_coefficient;
use reflectwave::motor::z_eq;
use reflectwave::Config;

fn main() -> reflectwave::Result<()> {
    let c = Config::default();
    let v = c.validate()?;
    let f_ring = c.cable.quarter_wave_frequency();
    println!("Z0 = {:.1} ohm, tau = {:.0} ns", v.z0, v.tau * 1e9);
    for f in [10e3, 100e3, f_ring, 5e6] {
        let z = c.motor.terminal_impedance(f);
        let g = reflection_coefficient(z, v.z0)?;
        println!("{:>9.0} Hz  |Z| = {:>10.1}  gamma = {:.3}", f, z.norm(), g.norm());
    }
    let d = c.branch.matched_duty(v.z0);
    let zb = z_eq(d, f_ring, &c.branch)?;
    println!(
        "matched duty {d:.3}: branch {:.1}{:+.1}j ohm at the ringing frequency",
        zb.re, zb.im
    );
    Ok(())
}
