//! Cable models.
//!
//! [`BergeronLine`] is the traveling-wave model used by the simulator: each
//! end is a Norton equivalent (the surge impedance in parallel with a history
//! current that was launched from the opposite end one delay earlier).
//! [`Ladder`] is an independent lumped RLC ladder integrated with the
//! trapezoidal rule; it exists to cross-check the traveling-wave model.
//!
//! Both share the [`Termination`] interface for the receiving end, and drive
//! the sending end from a Thevenin source.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::params::CableParams;

pub fn surge_impedance(cable: &CableParams) -> f64 {
    cable.surge_impedance()
}

/// `(z_term - z0) / (z_term + z0)`. An infinite termination gives `1`.
pub fn reflection_coefficient(z_term: Complex64, z0: f64) -> Result<Complex64> {
    if !(z0 > 0.0 && z0.is_finite()) {
        return Err(Error::argument("z0", format!("must be positive, got {z0}")));
    }
    if z_term.re.is_infinite() || z_term.im.is_infinite() {
        return Ok(Complex64::new(1.0, 0.0));
    }
    let den = z_term + z0;
    if den.norm() == 0.0 {
        return Err(Error::argument(
            "z_term",
            "a termination of -z0 has no reflection coefficient",
        ));
    }
    Ok((z_term - z0) / den)
}

/// A linear one-port attached to the end of a line.
///
/// For the coming step the port draws `g * v + i0` (`companion`). Once the
/// line has fixed `v`, `commit` advances the network's internal state and
/// returns the drawn current.
pub trait Termination {
    fn companion(&self, dt: f64) -> (f64, f64);
    fn commit(&mut self, v: f64, dt: f64) -> Result<f64>;
}

#[derive(Debug, Clone, Copy)]
pub struct Resistor(pub f64);

impl Termination for Resistor {
    fn companion(&self, _dt: f64) -> (f64, f64) {
        (1.0 / self.0, 0.0)
    }

    fn commit(&mut self, v: f64, _dt: f64) -> Result<f64> {
        Ok(v / self.0)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Open;

impl Termination for Open {
    fn companion(&self, _dt: f64) -> (f64, f64) {
        (0.0, 0.0)
    }

    fn commit(&mut self, _v: f64, _dt: f64) -> Result<f64> {
        Ok(0.0)
    }
}

/// Thevenin drive at the sending end.
#[derive(Debug, Clone, Copy)]
pub struct Thevenin {
    pub v: f64,
    pub r: f64,
}

/// Traveling-wave line with lumped series loss.
///
/// The loss is split as `R/4 | lossless τ/2 | R/2 | lossless τ/2 | R/4` and
/// folded into a single delay, which keeps the delay exact on the step grid.
#[derive(Debug, Clone)]
pub struct BergeronLine {
    z: f64,
    h: f64,
    hist_send: Vec<f64>,
    hist_recv: Vec<f64>,
    head: usize,
    steps: u64,
    pub v_send: f64,
    pub v_recv: f64,
    /// Current into the line at the sending end.
    pub i_send: f64,
    /// Current into the line at the receiving end.
    pub i_recv: f64,
}

impl BergeronLine {
    /// `delay_steps` must equal `τ/dt`; callers get it from validation.
    pub fn new(cable: &CableParams, delay_steps: usize) -> Self {
        let z0 = cable.surge_impedance();
        let quarter = cable.total_resistance() / 4.0;
        let depth = delay_steps.max(1);
        Self {
            z: z0 + quarter,
            h: (z0 - quarter) / (z0 + quarter),
            hist_send: vec![0.0; depth],
            hist_recv: vec![0.0; depth],
            head: 0,
            steps: 0,
            v_send: 0.0,
            v_recv: 0.0,
            i_send: 0.0,
            i_recv: 0.0,
        }
    }

    pub fn depth(&self) -> usize {
        self.hist_send.len()
    }

    /// Norton history currents applying to the coming step, `(send, recv)`.
    pub fn history(&self) -> (f64, f64) {
        (self.hist_send[self.head], self.hist_recv[self.head])
    }

    /// Impedance of the end Norton equivalents.
    pub fn port_impedance(&self) -> f64 {
        self.z
    }

    pub fn is_quiescent(&self) -> bool {
        self.hist_send.iter().chain(&self.hist_recv).all(|&x| x == 0.0)
    }

    pub fn step<T: Termination + ?Sized>(&mut self, src: Thevenin, term: &mut T, dt: f64) -> Result<()> {
        let (hs, hr) = self.history();
        let z = self.z;

        let v_s = if src.r > 0.0 {
            (src.v / src.r - hs) / (1.0 / src.r + 1.0 / z)
        } else {
            src.v
        };
        let i_s = v_s / z + hs;

        let (g, i0) = term.companion(dt);
        let v_r = -(hr + i0) / (g + 1.0 / z);
        let drawn = term.commit(v_r, dt)?;
        let i_r = v_r / z + hr;

        if ![v_s, i_s, v_r, i_r, drawn].iter().all(|x| x.is_finite()) {
            return Err(Error::Runtime {
                step: self.steps,
                message: format!(
                    "non-finite line terminal values: v_send={v_s}, i_send={i_s}, v_recv={v_r}, i_recv={i_r}"
                ),
            });
        }

        let (a, b) = ((1.0 + self.h) / 2.0, (1.0 - self.h) / 2.0);
        let far_s = v_r / z + self.h * i_r;
        let far_r = v_s / z + self.h * i_s;
        self.hist_send[self.head] = -a * far_s - b * far_r;
        self.hist_recv[self.head] = -a * far_r - b * far_s;
        self.head = (self.head + 1) % self.hist_send.len();

        self.v_send = v_s;
        self.i_send = i_s;
        self.v_recv = v_r;
        self.i_recv = i_r;
        self.steps += 1;
        Ok(())
    }
}

/// Lumped RLC ladder: `n_seg` series R-L sections, shunt C split so the end
/// nodes carry half a section each.
///
/// Each call to [`Ladder::step`] takes `substeps` trapezoidal steps with the
/// source ramped linearly across them, so the section dynamics stay
/// resolved when the outer step is longer than a section's delay.
#[derive(Debug, Clone)]
pub struct Ladder {
    l_seg: f64,
    r_seg: f64,
    c_node: Vec<f64>,
    /// Section currents, section `k` flows from node `k` to node `k + 1`.
    i_l: Vec<f64>,
    v: Vec<f64>,
    i_c: Vec<f64>,
    substeps: usize,
    v_src: f64,
    steps: u64,
    // scratch for the tridiagonal solve
    hist: Vec<f64>,
    rhs: Vec<f64>,
    c_prime: Vec<f64>,
    inv_denom: Vec<f64>,
    /// `2 C / dt` per node.
    g_c: Vec<f64>,
    /// `(dt, g_term, pinned)` the factors in `c_prime`/`inv_denom` belong to.
    factored: Option<(u64, u64, bool)>,
}

pub const MIN_LADDER_SEGMENTS: usize = 10;

/// Sub-steps per section delay chosen by [`Ladder::resolved`].
pub const LADDER_STEPS_PER_SECTION: f64 = 4.0;

impl Ladder {
    pub fn new(cable: &CableParams, n_seg: usize) -> Result<Self> {
        if n_seg < MIN_LADDER_SEGMENTS {
            return Err(Error::argument(
                "n_seg",
                format!("need at least {MIN_LADDER_SEGMENTS} segments, got {n_seg}"),
            ));
        }
        let frac = cable.length_m / n_seg as f64;
        let c_seg = cable.c_per_m * frac;
        let mut c_node = vec![c_seg; n_seg + 1];
        c_node[0] = c_seg / 2.0;
        c_node[n_seg] = c_seg / 2.0;
        Ok(Self {
            l_seg: cable.l_per_m * frac,
            r_seg: cable.r_per_m * frac,
            c_node,
            i_l: vec![0.0; n_seg],
            v: vec![0.0; n_seg + 1],
            i_c: vec![0.0; n_seg + 1],
            substeps: 1,
            v_src: 0.0,
            steps: 0,
            hist: vec![0.0; n_seg],
            rhs: vec![0.0; n_seg + 1],
            c_prime: vec![0.0; n_seg + 1],
            inv_denom: vec![0.0; n_seg + 1],
            g_c: vec![0.0; n_seg + 1],
            factored: None,
        })
    }

    /// A ladder that sub-steps `dt` often enough to give every section delay
    /// at least [`LADDER_STEPS_PER_SECTION`] steps.
    pub fn resolved(cable: &CableParams, n_seg: usize, dt: f64) -> Result<Self> {
        let ladder = Self::new(cable, n_seg)?;
        let section = cable.delay() / n_seg as f64;
        let k = (LADDER_STEPS_PER_SECTION * dt / section).ceil().max(1.0) as usize;
        Ok(ladder.with_substeps(k))
    }

    pub fn with_substeps(mut self, k: usize) -> Self {
        self.substeps = k.max(1);
        self
    }

    pub fn substeps(&self) -> usize {
        self.substeps
    }

    pub fn segments(&self) -> usize {
        self.i_l.len()
    }

    pub fn v_send(&self) -> f64 {
        self.v[0]
    }

    pub fn v_recv(&self) -> f64 {
        self.v[self.v.len() - 1]
    }

    pub fn node_voltages(&self) -> &[f64] {
        &self.v
    }

    /// Energy held in the inductors and capacitors.
    pub fn stored_energy(&self) -> f64 {
        let el: f64 = self.i_l.iter().map(|i| 0.5 * self.l_seg * i * i).sum();
        let ec: f64 = self
            .c_node
            .iter()
            .zip(&self.v)
            .map(|(c, v)| 0.5 * c * v * v)
            .sum();
        el + ec
    }

    pub fn step<T: Termination + ?Sized>(&mut self, src: Thevenin, term: &mut T, dt: f64) -> Result<()> {
        let k = self.substeps;
        let h = dt / k as f64;
        let v0 = self.v_src;
        for j in 1..=k {
            let v = if j == k {
                src.v
            } else {
                v0 + (src.v - v0) * j as f64 / k as f64
            };
            self.substep(Thevenin { v, r: src.r }, term, h)?;
        }
        if !self.v.iter().chain(&self.i_l).all(|x| x.is_finite()) {
            return Err(Error::Runtime {
                step: self.steps,
                message: "non-finite ladder state".into(),
            });
        }
        self.v_src = src.v;
        self.steps += 1;
        Ok(())
    }

    fn factor(&mut self, dt: f64, gs: f64, gt: f64, r_src: f64) -> Result<()> {
        let n = self.i_l.len();
        let off = -gs;
        for (g, c) in self.g_c.iter_mut().zip(&self.c_node) {
            *g = 2.0 * c / dt;
        }
        let diag = |j: usize| {
            let mut d = self.g_c[j];
            if j > 0 {
                d += gs;
            }
            if j < n {
                d += gs;
            }
            if j == n {
                d += gt;
            }
            if j == 0 && r_src > 0.0 {
                d += 1.0 / r_src;
            }
            d
        };
        if r_src <= 0.0 {
            self.c_prime[0] = 0.0;
            self.inv_denom[0] = 1.0;
        } else {
            let d0 = diag(0);
            self.c_prime[0] = off / d0;
            self.inv_denom[0] = 1.0 / d0;
        }
        for j in 1..=n {
            let denom = diag(j) - off * self.c_prime[j - 1];
            if denom == 0.0 || !denom.is_finite() {
                return Err(Error::Runtime {
                    step: self.steps,
                    message: format!("singular ladder matrix at node {j}"),
                });
            }
            self.c_prime[j] = if j < n { off / denom } else { 0.0 };
            self.inv_denom[j] = 1.0 / denom;
        }
        Ok(())
    }

    fn substep<T: Termination + ?Sized>(&mut self, src: Thevenin, term: &mut T, dt: f64) -> Result<()> {
        let n = self.i_l.len();
        let two_l = 2.0 * self.l_seg / dt;
        let gs = 1.0 / (self.r_seg + two_l);
        let (gt, it) = term.companion(dt);

        for k in 0..n {
            self.hist[k] = gs * ((self.v[k] - self.v[k + 1]) + (two_l - self.r_seg) * self.i_l[k]);
        }

        // Thomas algorithm; the off-diagonals are all -gs. A zero source
        // resistance pins node 0 instead. The matrix only changes with the
        // step or the termination conductance, so its factors are reused.
        let off = -gs;
        let pinned = src.r <= 0.0;
        let key = (dt.to_bits(), gt.to_bits(), pinned);
        if self.factored != Some(key) {
            self.factor(dt, gs, gt, src.r)?;
            self.factored = Some(key);
        }

        for j in 0..=n {
            let mut r = self.g_c[j] * self.v[j] + self.i_c[j];
            if j > 0 {
                r += self.hist[j - 1];
            }
            if j < n {
                r -= self.hist[j];
            }
            self.rhs[j] = r;
        }
        self.rhs[n] -= it;
        if pinned {
            self.rhs[0] = src.v;
        } else {
            self.rhs[0] += src.v / src.r;
        }
        self.rhs[0] *= self.inv_denom[0];
        for j in 1..=n {
            self.rhs[j] = (self.rhs[j] - off * self.rhs[j - 1]) * self.inv_denom[j];
        }
        for j in (0..n).rev() {
            self.rhs[j] -= self.c_prime[j] * self.rhs[j + 1];
        }
        let v_new = &self.rhs;

        for k in 0..n {
            self.i_l[k] = gs * (v_new[k] - v_new[k + 1]) + self.hist[k];
        }
        for (((ic, g), vn), v) in self.i_c.iter_mut().zip(&self.g_c).zip(v_new).zip(&self.v) {
            *ic = g * (vn - v) - *ic;
        }
        std::mem::swap(&mut self.v, &mut self.rhs);
        term.commit(self.v[n], dt)?;
        Ok(())
    }
}
