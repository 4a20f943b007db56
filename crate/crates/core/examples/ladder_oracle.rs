//! Cross-check of the traveling-wave cable against lumped ladders.

use reflectwave::sim::{max_divergence, run_ladder};
use reflectwave::{run_to_end, Config, Mode};

fn main() -> reflectwave::Result<()> {
    let mut c = Config::default();
    let tau = c.cable.delay();
    c.sim.t_end = 12.0 * tau;
    c.sim.record_stride = 1;
    let bergeron = run_to_end(&c, Mode::Off)?;
    for n in [50, 100, 200, 400] {
        let ladder = run_ladder(&c, Mode::Off, n)?;
        let d = max_divergence(&bergeron, &ladder, 10.0 * tau);
        println!(
            "{n:>4} sections: max |dv| = {d:7.2} V ({:.2}% of Vdc)",
            100.0 * d / c.pwm.v_dc
        );
    }
    Ok(())
}
