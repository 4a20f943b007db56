//! Model-reference adaptation of the branch duty.
//!
//! The reference model is a stable second-order system
//! `dX_M/dt = A_M X_M + b_M V_dc u(t)`, `V_coilM = C_M X_M` with
//! `X_M = [V_coilM, i_HF,M]` and `C_M = [1, 0]`. The duty follows a
//! normalized gradient (MIT) rule on the output error `e = V_coil - V_coilM`:
//!
//! ```text
//! dD/dt = γ · e · i_HF · (R_b / D²) / (ε + i_HF²)
//! ```
//!
//! since `∂V_coil/∂D = -i_HF · R_b / D²` for the resistive part of the
//! branch. Progress is monitored through `E = ½(e² + |Z_eq| i_HF²)`.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::motor::z_eq_unchecked;
use crate::params::{BranchParams, MotorHfParams, MracParams, RefKind};

pub type Mat2 = [[f64; 2]; 2];
pub type Vec2 = [f64; 2];

fn mat_vec(a: &Mat2, x: &Vec2) -> Vec2 {
    [a[0][0] * x[0] + a[0][1] * x[1], a[1][0] * x[0] + a[1][1] * x[1]]
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RefModel {
    pub a_m: Mat2,
    pub b_m: Vec2,
    pub c_m: Vec2,
    pub kind: RefKind,
}

/// Reference model with eigenvalues `-alpha ± j·omega`.
///
/// The input enters through the second state only, so the output step
/// response is the textbook `1 - e^{-αt}(cos ωt + (α/ω) sin ωt)` scaled to
/// `dc_gain`.
pub fn make_underdamped(alpha: f64, omega: f64, dc_gain: f64) -> Result<RefModel> {
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(Error::argument("alpha", format!("must be > 0, got {alpha}")));
    }
    if !(omega > 0.0 && omega.is_finite()) {
        return Err(Error::argument(
            "omega",
            format!("an underdamped model needs omega > 0, got {omega}"),
        ));
    }
    let b2 = dc_gain * (alpha * alpha + omega * omega) / omega;
    Ok(RefModel {
        a_m: [[-alpha, omega], [-omega, -alpha]],
        b_m: [0.0, b2],
        c_m: [1.0, 0.0],
        kind: RefKind::Underdamped,
    })
}

/// Reference model `A_M = diag(-alpha, -alpha)`; the output is first order.
pub fn make_critically_damped(alpha: f64, dc_gain: f64) -> Result<RefModel> {
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(Error::argument("alpha", format!("must be > 0, got {alpha}")));
    }
    Ok(RefModel {
        a_m: [[-alpha, 0.0], [0.0, -alpha]],
        b_m: [dc_gain * alpha, 0.0],
        c_m: [1.0, 0.0],
        kind: RefKind::CriticallyDamped,
    })
}

/// Share of the terminal voltage that a matched branch leaves across the
/// first coil at frequency `f`: the branch (at `z0`) against the coil-exit
/// impedance to the neutral.
pub fn matched_coil_share(motor: &MotorHfParams, z0: f64, f: f64) -> f64 {
    let z_exit = motor.exit_impedance(f);
    let z_branch = Complex64::new(z0, 0.0);
    (z_branch / (z_branch + z_exit)).norm()
}

impl RefModel {
    pub fn from_params(p: &MracParams, dc_gain: f64) -> Result<RefModel> {
        match p.kind {
            RefKind::Underdamped => make_underdamped(p.alpha, p.omega, dc_gain),
            RefKind::CriticallyDamped => make_critically_damped(p.alpha, dc_gain),
        }
    }

    pub fn trace(&self) -> f64 {
        self.a_m[0][0] + self.a_m[1][1]
    }

    pub fn det(&self) -> f64 {
        self.a_m[0][0] * self.a_m[1][1] - self.a_m[0][1] * self.a_m[1][0]
    }

    /// Eigenvalues as `(re, im)` pairs from the characteristic polynomial
    /// `λ² - tr·λ + det`.
    pub fn eigenvalues(&self) -> [(f64, f64); 2] {
        let tr = self.trace();
        let disc = tr * tr / 4.0 - self.det();
        if disc >= 0.0 {
            let s = disc.sqrt();
            [(tr / 2.0 + s, 0.0), (tr / 2.0 - s, 0.0)]
        } else {
            let s = (-disc).sqrt();
            [(tr / 2.0, s), (tr / 2.0, -s)]
        }
    }

    pub fn is_stable(&self) -> bool {
        self.eigenvalues().iter().all(|(re, _)| *re < 0.0)
    }

    pub fn output(&self, x: &Vec2) -> f64 {
        self.c_m[0] * x[0] + self.c_m[1] * x[1]
    }

    fn inverse(&self) -> Mat2 {
        let det = self.det();
        let a = &self.a_m;
        [[a[1][1] / det, -a[0][1] / det], [-a[1][0] / det, a[0][0] / det]]
    }

    /// Steady state `-A_M⁻¹ b_M · input`.
    pub fn steady_state(&self, input: f64) -> Vec2 {
        let y = mat_vec(&self.inverse(), &self.b_m);
        [-y[0] * input, -y[1] * input]
    }

    /// Delay by which the output trails a ramp input once the transient has
    /// died out, `-C A⁻² b / C A⁻¹ b`.
    pub fn ramp_lag(&self) -> f64 {
        let inv = self.inverse();
        let y1 = mat_vec(&inv, &self.b_m);
        let y2 = mat_vec(&inv, &y1);
        -self.output(&y2) / self.output(&y1)
    }

    /// One trapezoidal step. `input_prev` and `input` are `V_dc·u` at the
    /// start and end of the step.
    pub fn step(&self, x: &Vec2, input_prev: f64, input: f64, dt: f64) -> Vec2 {
        let h = dt / 2.0;
        let a = &self.a_m;
        let ax = mat_vec(a, x);
        let r = [
            x[0] + h * ax[0] + h * self.b_m[0] * (input_prev + input),
            x[1] + h * ax[1] + h * self.b_m[1] * (input_prev + input),
        ];
        // (I - hA) x' = r
        let m = [
            [1.0 - h * a[0][0], -h * a[0][1]],
            [-h * a[1][0], 1.0 - h * a[1][1]],
        ];
        let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
        [
            (m[1][1] * r[0] - m[0][1] * r[1]) / det,
            (m[0][0] * r[1] - m[1][0] * r[0]) / det,
        ]
    }
}

/// Advances the reference state by one step and returns `(x_m, V_coilM)`.
///
/// Aborts if the state grows past `10³ · v_dc`.
pub fn ref_step(
    model: &RefModel,
    x_m: &Vec2,
    v_dc: f64,
    u_prev: f64,
    u: f64,
    dt: f64,
) -> Result<(Vec2, f64)> {
    let x = model.step(x_m, v_dc * u_prev, v_dc * u, dt);
    let bound = 1e3 * v_dc;
    if !(x[0].abs() <= bound && x[1].abs() <= bound) {
        return Err(Error::Runtime {
            step: 0,
            message: format!("reference model diverged: x_m = {x:?}"),
        });
    }
    Ok((x, model.output(&x)))
}

/// Dense row-major matrix used by [`error_dynamics_identity`].
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::argument(
                "matrix",
                format!("{rows}x{cols} needs {} entries, got {}", rows * cols, data.len()),
            ));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn column(data: Vec<f64>) -> Self {
        Self {
            rows: data.len(),
            cols: 1,
            data,
        }
    }

    pub fn row(data: Vec<f64>) -> Self {
        Self {
            rows: 1,
            cols: data.len(),
            data,
        }
    }

    fn at(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    fn mul(&self, other: &Matrix, what: &'static str) -> Result<Matrix> {
        if self.cols != other.rows {
            return Err(Error::argument(
                what,
                format!(
                    "shape mismatch: {}x{} times {}x{}",
                    self.rows, self.cols, other.rows, other.cols
                ),
            ));
        }
        let mut out = vec![0.0; self.rows * other.cols];
        for r in 0..self.rows {
            for c in 0..other.cols {
                out[r * other.cols + c] = (0..self.cols).map(|k| self.at(r, k) * other.at(k, c)).sum();
            }
        }
        Ok(Matrix {
            rows: self.rows,
            cols: other.cols,
            data: out,
        })
    }

    fn combine(&self, other: &Matrix, sign: f64, what: &'static str) -> Result<Matrix> {
        if self.rows != other.rows || self.cols != other.cols {
            return Err(Error::argument(
                what,
                format!(
                    "shape mismatch: {}x{} vs {}x{}",
                    self.rows, self.cols, other.rows, other.cols
                ),
            ));
        }
        Ok(Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| a + sign * b)
                .collect(),
        })
    }

    fn scale(&self, k: f64) -> Matrix {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|x| x * k).collect(),
        }
    }

    fn scalar(&self, what: &'static str) -> Result<f64> {
        if self.rows == 1 && self.cols == 1 {
            Ok(self.data[0])
        } else {
            Err(Error::argument(
                what,
                format!("expected 1x1, got {}x{}", self.rows, self.cols),
            ))
        }
    }
}

/// Plant and reference-model data for [`error_dynamics_identity`].
#[derive(Debug, Clone)]
pub struct ErrorDynamicsInput {
    pub a: Matrix,
    pub b: Matrix,
    pub c: Matrix,
    pub a_m: Matrix,
    pub b_m: Matrix,
    pub c_m: Matrix,
    pub x: Matrix,
    pub x_m: Matrix,
    pub v_dc: f64,
}

/// Evaluates the output-error derivative two ways.
///
/// `lhs = C(AX + bV) - C_M(A_M X_M + b_M V)` and
/// `rhs = C_M A_M (X - X_M) + (CA - C_M A_M) X + (Cb - C_M b_M) V`,
/// the second obtained by adding and subtracting `C_M A_M X`. The two agree
/// for any finite input.
pub fn error_dynamics_identity(inp: &ErrorDynamicsInput) -> Result<(f64, f64)> {
    let ErrorDynamicsInput {
        a,
        b,
        c,
        a_m,
        b_m,
        c_m,
        x,
        x_m,
        v_dc,
    } = inp;

    let plant = a.mul(x, "A·X")?.combine(&b.scale(*v_dc), 1.0, "b·V")?;
    let model = a_m
        .mul(x_m, "A_M·X_M")?
        .combine(&b_m.scale(*v_dc), 1.0, "b_M·V")?;
    let lhs = c
        .mul(&plant, "C·(AX+bV)")?
        .combine(&c_m.mul(&model, "C_M·(A_M X_M + b_M V)")?, -1.0, "lhs")?
        .scalar("lhs")?;

    let cm_am = c_m.mul(a_m, "C_M·A_M")?;
    let state_err = x.combine(x_m, -1.0, "X - X_M")?;
    let t1 = cm_am.mul(&state_err, "C_M A_M ε")?;
    let t2 = c
        .mul(a, "C·A")?
        .combine(&cm_am, -1.0, "CA - C_M A_M")?
        .mul(x, "(CA - C_M A_M)X")?;
    let t3 = c
        .mul(b, "C·b")?
        .combine(&c_m.mul(b_m, "C_M·b_M")?, -1.0, "Cb - C_M b_M")?
        .scale(*v_dc);
    let rhs = t1
        .combine(&t2, 1.0, "rhs")?
        .combine(&t3, 1.0, "rhs")?
        .scalar("rhs")?;
    Ok((lhs, rhs))
}

/// `E = ½(e² + |Z_eq| i_HF²)`.
pub fn lyapunov(e: f64, z_eq_mag: f64, i_hf: f64) -> Result<f64> {
    if z_eq_mag.is_nan() || z_eq_mag < 0.0 {
        return Err(Error::argument(
            "z_eq_mag",
            format!("impedance magnitude must be >= 0, got {z_eq_mag}"),
        ));
    }
    Ok(0.5 * (e * e + z_eq_mag * i_hf * i_hf))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MracState {
    pub x_m: Vec2,
    /// Reference output as seen through the measurement conditioning.
    pub v_ref: f64,
    pub e: f64,
    /// State error `[V_coil - V_coilM, i_HF - i_HF,M]`.
    pub eps: Vec2,
    pub d: f64,
    pub big_e: f64,
    pub gamma: f64,
    pub epsilon: f64,
    pub clamp_count: u64,
    clamped: Option<f64>,
}

impl MracState {
    pub fn new(d: f64, gamma: f64, epsilon: f64) -> Self {
        Self {
            x_m: [0.0; 2],
            v_ref: 0.0,
            e: 0.0,
            eps: [0.0; 2],
            d,
            big_e: 0.0,
            gamma,
            epsilon,
            clamp_count: 0,
            clamped: None,
        }
    }
}

/// Computes the error against `state.v_ref`, refreshes `E`, and takes one
/// gradient step on the duty. Returns whether the duty hit a bound.
///
/// `v_coil` and `i_hf` must be conditioned the same way as `state.v_ref`.
pub fn adapt_duty(
    state: &mut MracState,
    v_coil: f64,
    i_hf: f64,
    branch: &BranchParams,
    f_ring: f64,
    dt: f64,
) -> Result<bool> {
    observe(
        state,
        v_coil,
        i_hf,
        z_eq_unchecked(state.d, f_ring, branch).norm(),
    )?;
    let d = state.d;
    let rate = state.gamma * state.e * i_hf * (branch.r_b / (d * d)) / (state.epsilon + i_hf * i_hf);
    let next = d + dt * rate;
    let clamped = next.clamp(branch.d_min, branch.d_max);
    let hit = clamped != next;
    // Count arrivals at a bound, not every step spent on it.
    let bound = hit.then_some(clamped);
    if hit && state.clamped != bound {
        state.clamp_count += 1;
    }
    state.clamped = bound;
    state.d = clamped;
    Ok(hit)
}

/// Updates `e`, `eps` and `E` without touching the duty. `z_eq_mag` is the
/// branch impedance magnitude used in `E`.
pub fn observe(state: &mut MracState, v_coil: f64, i_hf: f64, z_eq_mag: f64) -> Result<()> {
    let e = v_coil - state.v_ref;
    if !e.is_finite() || !i_hf.is_finite() {
        return Err(Error::Runtime {
            step: 0,
            message: format!("non-finite adaptation input: e={e}, i_hf={i_hf}"),
        });
    }
    state.e = e;
    state.eps = [v_coil - state.x_m[0], i_hf - state.x_m[1]];
    state.big_e = lyapunov(e, z_eq_mag, i_hf)?;
    Ok(())
}

/// Single-pole high-pass, bilinear discretisation of `s / (s + ω_c)`.
#[derive(Debug, Clone, Copy)]
pub struct HighPass {
    k_in: f64,
    k_out: f64,
    x_prev: f64,
    y: f64,
}

impl HighPass {
    pub fn new(corner_hz: f64, dt: f64) -> Self {
        let wc = 2.0 * PI * corner_hz;
        let two = 2.0 / dt;
        Self {
            k_in: two / (two + wc),
            k_out: (two - wc) / (two + wc),
            x_prev: 0.0,
            y: 0.0,
        }
    }

    pub fn update(&mut self, x: f64) -> f64 {
        self.y = self.k_in * (x - self.x_prev) + self.k_out * self.y;
        self.x_prev = x;
        self.y
    }

    pub fn output(&self) -> f64 {
        self.y
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn underdamped_eigenvalues() {
        let omega = 2.0 * PI * 714e3;
        let m = make_underdamped(1e6, omega, 1.0).unwrap();
        let [(re1, im1), (re2, im2)] = m.eigenvalues();
        assert!((re1 + 1e6).abs() < 1e-6 && (re2 + 1e6).abs() < 1e-6);
        assert!((im1.abs() - 4.486e6).abs() < 1e3, "{im1}");
        assert!((im1 + im2).abs() < 1e-6);
        assert!((m.trace() + 2e6).abs() < 1e-9);
        assert!((m.det() - (1e12 + omega * omega)).abs() / m.det() < 1e-15);
        assert!(m.is_stable());
        assert_eq!(m.kind, RefKind::Underdamped);
        // Diagonal terms equal and negative, off-diagonals opposite.
        assert_eq!(m.a_m[0][0], m.a_m[1][1]);
        assert_eq!(m.a_m[0][1], -m.a_m[1][0]);
    }

    #[test]
    fn constructors_reject_bad_arguments() {
        assert!(make_underdamped(1e6, 0.0, 1.0).is_err());
        assert!(make_underdamped(-1.0, 1e6, 1.0).is_err());
        assert!(make_critically_damped(0.0, 1.0).is_err());
        assert!(make_critically_damped(f64::NAN, 1.0).is_err());
    }

    #[test]
    fn critically_damped_shape() {
        let m = make_critically_damped(1e6, 1.0).unwrap();
        assert_eq!(m.eigenvalues(), [(-1e6, 0.0), (-1e6, 0.0)]);
        assert_eq!(m.a_m[0][1], 0.0);
        assert_eq!(m.a_m[1][0], 0.0);
        assert_eq!(m.kind, RefKind::CriticallyDamped);
    }

    #[test]
    fn quiescent_reference_stays_zero() {
        let m = make_underdamped(2e6, 4.5e6, 1.0).unwrap();
        let mut x = [0.0; 2];
        for _ in 0..100 {
            let (nx, y) = ref_step(&m, &x, 600.0, 0.0, 0.0, 5e-9).unwrap();
            x = nx;
            assert_eq!(y, 0.0);
        }
    }

    #[test]
    fn critically_damped_settles_within_five_time_constants() {
        let alpha = 1e6;
        let m = make_critically_damped(alpha, 0.8).unwrap();
        let dt = 5e-9;
        let steps = (5.0 / alpha / dt).round() as usize;
        let mut x = [0.0; 2];
        let mut peak: f64 = 0.0;
        for n in 0..steps {
            let u_prev = if n == 0 { 0.0 } else { 1.0 };
            x = ref_step(&m, &x, 600.0, u_prev, 1.0, dt).unwrap().0;
            peak = peak.max(m.output(&x));
        }
        let ss = m.steady_state(600.0);
        assert!((x[0] - ss[0]).abs() <= 0.01 * ss[0].abs(), "{x:?} vs {ss:?}");
        assert!(peak <= ss[0] * (1.0 + 1e-12));
    }

    #[test]
    fn underdamped_overshoot_matches_closed_form() {
        let (alpha, omega) = (2e6, 2.0 * PI * 714e3);
        let m = make_underdamped(alpha, omega, 1.0).unwrap();
        let dt = 1e-9;
        let mut x = [0.0; 2];
        let mut peak: f64 = 0.0;
        for n in 0..10_000 {
            let u_prev = if n == 0 { 0.0 } else { 1.0 };
            x = m.step(&x, u_prev, 1.0, dt);
            peak = peak.max(m.output(&x));
        }
        let expected = (-alpha * PI / omega).exp();
        assert!(((peak - 1.0) - expected).abs() <= 0.02 * expected, "{peak}");
    }

    #[test]
    fn ramp_lag_matches_simulated_ramp() {
        let (alpha, omega) = (3e6, 2.0 * PI * 714e3);
        let ud = make_underdamped(alpha, omega, 0.9).unwrap();
        let cd = make_critically_damped(alpha, 0.9).unwrap();
        assert!((cd.ramp_lag() - 1.0 / alpha).abs() < 1e-20);
        let closed = 2.0 * alpha / (alpha * alpha + omega * omega);
        assert!((ud.ramp_lag() - closed).abs() <= 1e-12 * closed);
        for m in [ud, cd] {
            let dt = 1e-10;
            let mut x = [0.0; 2];
            let n_end = 50_000;
            for n in 0..n_end {
                x = m.step(&x, n as f64 * dt, (n + 1) as f64 * dt, dt);
            }
            let t = n_end as f64 * dt;
            let lag = t - m.output(&x) / 0.9;
            assert!(
                (lag - m.ramp_lag()).abs() <= 1e-3 * m.ramp_lag(),
                "{lag} vs {}",
                m.ramp_lag()
            );
        }
    }

    #[test]
    fn instability_guard() {
        let mut m = make_critically_damped(1e6, 1.0).unwrap();
        m.a_m = [[1e9, 0.0], [0.0, 1e9]];
        let mut x = [1.0, 1.0];
        let mut failed = false;
        for _ in 0..1000 {
            match ref_step(&m, &x, 1.0, 0.0, 0.0, 1e-9) {
                Ok((nx, _)) => x = nx,
                Err(_) => {
                    failed = true;
                    break;
                }
            }
        }
        assert!(failed);
    }

    fn random_input(rng: &mut ChaCha8Rng, n: usize) -> ErrorDynamicsInput {
        let mut v = |len: usize| (0..len).map(|_| rng.gen_range(-1e3..1e3)).collect::<Vec<_>>();
        ErrorDynamicsInput {
            a: Matrix::new(n, n, v(n * n)).unwrap(),
            b: Matrix::column(v(n)),
            c: Matrix::row(v(n)),
            a_m: Matrix::new(n, n, v(n * n)).unwrap(),
            b_m: Matrix::column(v(n)),
            c_m: Matrix::row(v(n)),
            x: Matrix::column(v(n)),
            x_m: Matrix::column(v(n)),
            v_dc: v(1)[0],
        }
    }

    #[test]
    fn error_dynamics_trivial_cases() {
        let z2 = || Matrix::new(2, 2, vec![0.0; 4]).unwrap();
        let zc = || Matrix::column(vec![0.0; 2]);
        let zr = || Matrix::row(vec![0.0; 2]);
        let zero = ErrorDynamicsInput {
            a: z2(),
            b: zc(),
            c: zr(),
            a_m: z2(),
            b_m: zc(),
            c_m: zr(),
            x: zc(),
            x_m: zc(),
            v_dc: 0.0,
        };
        assert_eq!(error_dynamics_identity(&zero).unwrap(), (0.0, 0.0));

        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut same = random_input(&mut rng, 2);
        same.a_m = same.a.clone();
        same.b_m = same.b.clone();
        same.c_m = same.c.clone();
        same.x_m = same.x.clone();
        let (l, r) = error_dynamics_identity(&same).unwrap();
        assert_eq!(l, 0.0);
        assert!(r.abs() < 1e-6, "{r}");
    }

    #[test]
    fn error_dynamics_shape_mismatch() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut inp = random_input(&mut rng, 2);
        inp.x = Matrix::column(vec![1.0, 2.0, 3.0]);
        assert!(error_dynamics_identity(&inp).is_err());
        assert!(Matrix::new(2, 2, vec![1.0]).is_err());
    }

    #[test]
    fn error_dynamics_randomized() {
        let mut rng = ChaCha8Rng::seed_from_u64(0xE0);
        for n in [2usize, 2, 2, 3] {
            for _ in 0..250 {
                let inp = random_input(&mut rng, n);
                let (l, r) = error_dynamics_identity(&inp).unwrap();
                assert!(
                    (l - r).abs() <= 1e-9 * l.abs().max(r.abs()).max(1.0),
                    "{l} vs {r}"
                );
            }
        }
    }

    #[test]
    fn lyapunov_values() {
        assert_eq!(lyapunov(0.0, 123.0, 0.0).unwrap(), 0.0);
        assert_eq!(lyapunov(1.0, 2.0, 1.0).unwrap(), 1.5);
        assert_eq!(
            lyapunov(-3.0, 5.0, -2.0).unwrap(),
            lyapunov(3.0, 5.0, 2.0).unwrap()
        );
        assert!(lyapunov(1.0, -1.0, 1.0).is_err());
    }

    #[test]
    fn adaptation_direction() {
        let b = BranchParams::default();
        let f = 714e3;
        for (e, i) in [(5.0, 2.0), (-5.0, 2.0), (5.0, -2.0), (-5.0, -2.0), (0.0, 3.0)] {
            let mut s = MracState::new(0.5, 5e3, 1e-2);
            s.v_ref = 100.0;
            adapt_duty(&mut s, 100.0 + e, i, &b, f, 5e-9).unwrap();
            let delta = s.d - 0.5;
            let want = (e * i).signum();
            if e == 0.0 {
                assert_eq!(delta, 0.0);
            } else {
                assert_eq!(delta.signum(), want, "e={e} i={i}");
            }
        }
    }

    #[test]
    fn adaptation_clamps_and_counts() {
        let b = BranchParams::default();
        let mut s = MracState::new(b.d_max - 1e-6, 1e9, 1e-2);
        s.v_ref = 0.0;
        for _ in 0..10 {
            adapt_duty(&mut s, 100.0, 1.0, &b, 714e3, 5e-9).unwrap();
        }
        assert_eq!(s.d, b.d_max);
        assert_eq!(s.clamp_count, 1);
        // Far enough to land on the lower bound, then back to the upper one.
        adapt_duty(&mut s, -100.0, 1.0, &b, 714e3, 5e-9).unwrap();
        assert_eq!(s.d, b.d_min);
        adapt_duty(&mut s, 100.0, 1.0, &b, 714e3, 5e-9).unwrap();
        assert_eq!(s.clamp_count, 3);
        let mut s = MracState::new(0.5, 1.0, 1e-2);
        adapt_duty(&mut s, 1.0, 1.0, &b, 714e3, 5e-9).unwrap();
        assert_eq!(s.clamp_count, 0);
    }

    #[test]
    fn adaptation_rejects_non_finite_error() {
        let b = BranchParams::default();
        let mut s = MracState::new(0.5, 1.0, 1e-2);
        assert!(adapt_duty(&mut s, f64::NAN, 1.0, &b, 714e3, 5e-9).is_err());
    }

    #[test]
    fn high_pass_blocks_dc() {
        let mut hp = HighPass::new(100e3, 5e-9);
        let mut y = 0.0;
        for _ in 0..200_000 {
            y = hp.update(1.0);
        }
        assert!(y.abs() < 1e-9);
        let mut hp = HighPass::new(100e3, 5e-9);
        assert!((hp.update(1.0) - 1.0).abs() < 0.01);
    }
}
