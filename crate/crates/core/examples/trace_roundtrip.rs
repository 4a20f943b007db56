//! Writes a trace, reads it back and checks the metrics agree exactly.

use reflectwave::analysis::metrics;
use reflectwave::{run_to_end, Config, Mode, Trace};

fn main() -> reflectwave::Result<()> {
    let mut c = Config::default();
    c.sim.t_end = 50e-6;
    let tr = run_to_end(&c, Mode::Adaptive)?;
    let dir = std::env::temp_dir().join("reflectwave-roundtrip");
    std::fs::create_dir_all(&dir)?;
    let path = dir.join("trace.csv");
    tr.write(&path)?;
    let back = Trace::read(&path)?;
    let (a, b) = (metrics(&tr, &c), metrics(&back, &c));
    assert_eq!(a, b);
    print!("{} samples in {}\n{}", back.len(), path.display(), a.to_text());
    Ok(())
}
