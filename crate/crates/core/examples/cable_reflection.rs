//! Unsuppressed reflection at the motor terminals for a few cable lengths.
//!
//! The terminal voltage nearly doubles and rings at the quarter-wave
//! frequency of the cable.

use reflectwave::{analysis, run_to_end, Config, Mode};

fn main() -> reflectwave::Result<()> {
    println!(
        "{:>8} {:>10} {:>12} {:>12}",
        "len_m", "peak/Vdc", "ring_kHz", "1/(4tau)_kHz"
    );
    for len in [20.0, 50.0, 70.0, 100.0] {
        let mut c = Config::default();
        c.cable.length_m = len;
        c.sim.t_end = 100e-6;
        let tr = run_to_end(&c, Mode::Off)?;
        let m = analysis::metrics(&tr, &c);
        println!(
            "{len:>8.0} {:>10.3} {:>12.1} {:>12.1}",
            m.peak_ratio,
            m.ring_freq_hz.unwrap_or(f64::NAN) / 1e3,
            c.cable.quarter_wave_frequency() / 1e3
        );
    }
    Ok(())
}
