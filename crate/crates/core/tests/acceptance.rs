//! Acceptance checks. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fails.

use std::f64::consts::PI;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use reflectwave::analysis::{self, optimize_refmodel, OptimizeOptions, SearchSpace};
use reflectwave::line::reflection_coefficient;
use reflectwave::mrac::{error_dynamics_identity, make_underdamped, ref_step, ErrorDynamicsInput, Matrix};
use reflectwave::sim::{max_divergence, run_ladder};
use reflectwave::trace::Sample;
use reflectwave::{run_to_end, Config, Mode, Trace};

type Check = Result<String, String>;
type Criterion = (&'static str, fn() -> Check);

fn z0(c: &Config) -> f64 {
    (c.cable.l_per_m / c.cable.c_per_m).sqrt()
}

fn tau(c: &Config) -> f64 {
    c.cable.length_m * (c.cable.l_per_m * c.cable.c_per_m).sqrt()
}

fn peak(tr: &Trace, c: &Config) -> f64 {
    tr.samples.iter().map(|s| s.v_mot.abs()).fold(0.0, f64::max) / c.pwm.v_dc
}

fn run(c: &Config, mode: Mode) -> Result<Trace, String> {
    run_to_end(c, mode).map_err(|e| e.to_string())
}

fn overvoltage_anchor() -> Check {
    let c = Config::default();
    let gamma = reflection_coefficient(c.motor.terminal_impedance(1.0 / (4.0 * tau(&c))), z0(&c))
        .map_err(|e| e.to_string())?
        .norm();
    let start = Instant::now();
    let tr = run(&c, Mode::Off)?;
    let m = analysis::metrics(&tr, &c);
    let secs = start.elapsed().as_secs_f64();
    let msg = format!(
        "peak_ratio {:.4} in [1.8, 2.0], |gamma_m| {gamma:.3} >= 0.95, {secs:.2} s < 5 s",
        m.peak_ratio
    );
    if (1.8..=2.0).contains(&m.peak_ratio) && gamma >= 0.95 && secs < 5.0 {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn ringing_anchor() -> Check {
    let mut worst = 0.0f64;
    let mut at_default = f64::NAN;
    for len in [20.0, 50.0, 70.0, 100.0] {
        let mut c = Config::default();
        c.cable.length_m = len;
        c.sim.t_end = 100e-6;
        let tr = run(&c, Mode::Off)?;
        let f = analysis::metrics(&tr, &c)
            .ring_freq_hz
            .ok_or_else(|| format!("no ringing detected at {len} m"))?;
        let expect = 1.0 / (4.0 * tau(&c));
        worst = worst.max((f - expect).abs() / expect);
        if len == 70.0 {
            at_default = f;
        }
    }
    let err = (at_default - 714e3).abs() / 714e3;
    let msg = format!(
        "{:.1} kHz vs 714 kHz ({:.2}%), worst sweep deviation from 1/(4 tau) {:.2}%",
        at_default / 1e3,
        100.0 * err,
        100.0 * worst
    );
    if err <= 0.05 && worst <= 0.05 {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn matched_anchor() -> Check {
    let c = Config::default();
    let p = peak(&run(&c, Mode::StaticMatched)?, &c);
    let msg = format!("static-matched peak_ratio {p:.4} <= 1.1");
    if p <= 1.1 {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn oracle_equivalence() -> Check {
    let mut c = Config::default();
    c.cable.r_per_m = 0.0;
    let t = tau(&c);
    c.sim.t_end = 11.0 * t;
    c.sim.record_stride = 1;
    let a = run(&c, Mode::Off)?;
    let b = run_ladder(&c, Mode::Off, 200).map_err(|e| e.to_string())?;
    if b.samples.last().is_none_or(|s| s.t < 10.0 * t) {
        return Err("ladder trace shorter than 10 tau".into());
    }
    let d = max_divergence(&a, &b, 10.0 * t) / c.pwm.v_dc;
    let msg = format!(
        "max |v_bergeron - v_ladder| over [0, 10 tau] = {:.2}% of Vdc <= 5%",
        100.0 * d
    );
    if d <= 0.05 {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn algebraic_identity() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(0x1de);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let mut v = |n: usize| (0..n).map(|_| rng.gen_range(-10.0..10.0)).collect::<Vec<f64>>();
        let inp = ErrorDynamicsInput {
            a: Matrix::new(2, 2, v(4)).unwrap(),
            b: Matrix::column(v(2)),
            c: Matrix::row(v(2)),
            a_m: Matrix::new(2, 2, v(4)).unwrap(),
            b_m: Matrix::column(v(2)),
            c_m: Matrix::row(v(2)),
            x: Matrix::column(v(2)),
            x_m: Matrix::column(v(2)),
            v_dc: v(1)[0].abs() * 100.0,
        };
        let (l, r) = error_dynamics_identity(&inp).map_err(|e| e.to_string())?;
        worst = worst.max((l - r).abs() / l.abs().max(r.abs()));
    }
    let msg = format!("1000 random instances, worst relative gap {worst:.2e} <= 1e-9");
    if worst <= 1e-9 {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn abs_e(s: &Sample) -> f64 {
    (2.0 * s.lyap - s.zeq * s.i_hf * s.i_hf).max(0.0).sqrt()
}

fn adaptation_suite() -> Check {
    let c = Config::default();
    let tr = run(&c, Mode::Adaptive)?;
    let off = peak(&run(&c, Mode::Off)?, &c);

    let e_min = tr.samples.iter().map(|s| s.lyap).fold(f64::INFINITY, f64::min);

    // One burst per inverter edge.
    let half = 0.5 / c.pwm.f_sw;
    let n = (c.sim.t_end / half).round() as usize;
    let mut sum = vec![0.0; n];
    let mut cnt = vec![0usize; n];
    let mut pk = vec![0.0f64; n];
    for s in &tr.samples {
        let k = ((s.t / half) as usize).min(n - 1);
        sum[k] += s.lyap;
        cnt[k] += 1;
        pk[k] = pk[k].max(abs_e(s));
    }
    let mean: Vec<f64> = sum.iter().zip(&cnt).map(|(s, &c)| s / c.max(1) as f64).collect();
    let decreasing = mean[2..].windows(2).all(|w| w[1] < w[0]);
    let ratio = pk[n - 1] / pk[0];
    let d = tr.samples.last().map_or(f64::NAN, |s| s.duty);
    let d_star = c.branch.r_b / z0(&c);
    let d_err = (d - d_star).abs() / d_star;
    let p = peak(&tr, &c);

    let checks = [
        (e_min >= 0.0, format!("(a) min E {e_min:.3e} >= 0")),
        (
            decreasing,
            format!("(b) burst-mean E strictly decreasing over bursts 3..{n}"),
        ),
        (
            ratio <= 0.25,
            format!("(c) final/first peak |e| {ratio:.3} <= 0.25"),
        ),
        (
            d_err <= 0.2,
            format!("(d) D {d:.3} vs d* {d_star:.3} ({:.1}%)", 100.0 * d_err),
        ),
        (
            p <= 1.2 && p < off,
            format!("(e) peak_ratio {p:.4} <= 1.2 and < off {off:.4}"),
        ),
    ];
    let msg = checks
        .iter()
        .map(|(_, m)| m.as_str())
        .collect::<Vec<_>>()
        .join("; ");
    if checks.iter().all(|(ok, _)| *ok) {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn numerical_hygiene() -> Check {
    let mut worst = 0.0f64;
    for mode in [Mode::Off, Mode::StaticMatched, Mode::Adaptive] {
        let c = Config::default();
        let mut fine = c;
        fine.sim.dt = c.sim.dt / 2.0;
        fine.sim.record_stride = 2 * c.sim.record_stride;
        let (a, b) = (peak(&run(&c, mode)?, &c), peak(&run(&fine, mode)?, &fine));
        worst = worst.max((a - b).abs() / a);
    }

    let c = Config::default();
    let (x, y) = (run(&c, Mode::Adaptive)?, run(&c, Mode::Adaptive)?);
    let identical = x.len() == y.len()
        && x.samples.iter().zip(&y.samples).all(|(p, q)| {
            [
                p.t, p.v_inv, p.v_mot, p.v_coil, p.i_hf, p.i_branch, p.duty, p.zeq, p.lyap,
            ]
            .iter()
            .zip([
                q.t, q.v_inv, q.v_mot, q.v_coil, q.i_hf, q.i_branch, q.duty, q.zeq, q.lyap,
            ])
            .all(|(u, v)| u.to_bits() == v.to_bits())
        });

    // Step response of an underdamped reference against
    // 1 - e^{-at}(cos wt + (a/w) sin wt).
    let (alpha, omega) = (2e6, 2.0 * PI * 714e3);
    let model = make_underdamped(alpha, omega, 1.0).map_err(|e| e.to_string())?;
    let dt = c.validate().map_err(|e| e.to_string())?.dt();
    let mut xm = [0.0; 2];
    let (mut top, mut wave_err) = (0.0f64, 0.0f64);
    for k in 1..=((8.0 / alpha) / dt) as usize {
        let (nx, out) = ref_step(&model, &xm, 1.0, 1.0, 1.0, dt).map_err(|e| e.to_string())?;
        xm = nx;
        let t = k as f64 * dt;
        let exact = 1.0 - (-alpha * t).exp() * ((omega * t).cos() + alpha / omega * (omega * t).sin());
        wave_err = wave_err.max((out - exact).abs());
        top = top.max(out);
    }
    let expect = (-PI * alpha / omega).exp();
    let os_err = ((top - 1.0) - expect).abs() / expect;

    let msg = format!(
        "dt/2 peak change {:.4}% < 1%; identical configs bit-identical: {identical}; \
         overshoot {:.4} vs {expect:.4} ({:.3}%), waveform max error {wave_err:.1e}",
        100.0 * worst,
        top - 1.0,
        100.0 * os_err
    );
    if worst < 0.01 && identical && os_err <= 0.02 {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn optimizer() -> Check {
    let mut c = Config::default();
    c.sim.t_end = 200e-6;
    let space = SearchSpace::around(&c, 3.0);
    let here = [c.mrac.alpha, c.mrac.omega, c.mrac.gamma];
    if !space.contains(here) {
        return Err("search space does not contain the default".into());
    }
    let base = analysis::metrics(&run(&c, Mode::Adaptive)?, &c);
    let opts = OptimizeOptions {
        seed: 11,
        budget: 24,
        ..Default::default()
    };
    let r1 = optimize_refmodel(&c, &space, &opts).map_err(|e| e.to_string())?;
    let r2 = optimize_refmodel(&c, &space, &opts).map_err(|e| e.to_string())?;
    let best = r1.best.as_ref().ok_or("no feasible point returned")?;
    let m = best.metrics.ok_or("best point has no metrics")?;
    let same = r1.log == r2.log;
    let msg = format!(
        "loss {:.2} W <= default {:.2} W, peak {:.4} <= 1.25, {} evaluations, repeat log identical: {same}",
        m.branch_loss_w,
        base.branch_loss_w,
        m.peak_ratio,
        r1.log.len()
    );
    if m.branch_loss_w <= base.branch_loss_w && m.peak_ratio <= 1.25 && same && r1.log.len() <= 24 {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn main() {
    let criteria: [Criterion; 8] = [
        ("overvoltage anchor", overvoltage_anchor),
        ("ringing frequency", ringing_anchor),
        ("matched limit", matched_anchor),
        ("ladder equivalence", oracle_equivalence),
        ("error-dynamics identity", algebraic_identity),
        ("adaptation properties", adaptation_suite),
        ("numerical hygiene", numerical_hygiene),
        ("optimizer", optimizer),
    ];
    let mut failed = 0;
    for (k, (name, f)) in criteria.iter().enumerate() {
        match f() {
            Ok(m) => println!("PASS {}. {name}: {m}", k + 1),
            Err(m) => {
                failed += 1;
                println!("FAIL {}. {name}: {m}", k + 1);
            }
        }
    }
    println!(
        "{} of {} criteria passed",
        criteria.len() - failed,
        criteria.len()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
