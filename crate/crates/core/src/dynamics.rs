//! Classical coupled-mode equations for the pump, the two optical sidebands
//! and the microwave mode.
//!
//! With H = ħg(b₋†c†a + b₊c†a†) + h.c. the mean-field equations are
//!
//! ```text
//! ȧ  = −κ_a a  − i(g* b₋ c + g b₊ c*) + d_a
//! ḃ₋ = −κ_b b₋ − i g c* a
//! ḃ₊ = −κ_b b₊ − i g* c a
//! ċ  = −κ_c c  − i g (b₋* a + b₊ a*) + d_c
//! ```
//!
//! Without loss or drive, |a|² + |b₊|² + |b₋|² and |c|² + |b₊|² − |b₋|² are
//! constants of motion.

use num_complex::Complex64;
use thiserror::Error;

use crate::units::{Frequency, HBAR};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DynamicsError {
    #[error("step size underflow at t = {t:e} s (h = {h:e} s)")]
    StepFailure { t: f64, h: f64 },
    #[error("invalid dynamics input: {0}")]
    InvalidInput(String),
}

const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModeAmplitudes {
    pub a: Complex64,
    pub b_plus: Complex64,
    pub b_minus: Complex64,
    pub c: Complex64,
    pub kappa_a: f64,
    pub kappa_b: f64,
    pub kappa_c: f64,
    pub drive_a: Complex64,
    pub drive_c: Complex64,
}

impl ModeAmplitudes {
    /// Lossless, undriven state.
    pub fn lossless(a: Complex64, b_plus: Complex64, b_minus: Complex64, c: Complex64) -> Self {
        ModeAmplitudes {
            a,
            b_plus,
            b_minus,
            c,
            kappa_a: 0.0,
            kappa_b: 0.0,
            kappa_c: 0.0,
            drive_a: Complex64::new(0.0, 0.0),
            drive_c: Complex64::new(0.0, 0.0),
        }
    }

    pub fn amplitudes(&self) -> [Complex64; 4] {
        [self.a, self.b_plus, self.b_minus, self.c]
    }

    pub fn with_amplitudes(mut self, y: [Complex64; 4]) -> Self {
        self.a = y[0];
        self.b_plus = y[1];
        self.b_minus = y[2];
        self.c = y[3];
        self
    }

    /// |a|² + |b₊|² + |b₋|².
    pub fn optical_photons(&self) -> f64 {
        self.a.norm_sqr() + self.b_plus.norm_sqr() + self.b_minus.norm_sqr()
    }

    /// |c|² + |b₊|² − |b₋|².
    pub fn manley_rowe(&self) -> f64 {
        self.c.norm_sqr() + self.b_plus.norm_sqr() - self.b_minus.norm_sqr()
    }

    fn validate(&self) -> Result<(), DynamicsError> {
        let rates_ok = [self.kappa_a, self.kappa_b, self.kappa_c].iter().all(|k| *k >= 0.0 && k.is_finite());
        let finite = self
            .amplitudes()
            .iter()
            .chain([self.drive_a, self.drive_c].iter())
            .all(|z| z.re.is_finite() && z.im.is_finite());
        if !rates_ok {
            return Err(DynamicsError::InvalidInput("decay rates must be finite and non-negative".into()));
        }
        if !finite {
            return Err(DynamicsError::InvalidInput("amplitudes and drives must be finite".into()));
        }
        Ok(())
    }
}

/// Coupling rates of the two sideband processes; a single-sideband
/// converter sets the other one to zero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Coupling {
    pub g_stokes: Complex64,
    pub g_anti_stokes: Complex64,
}

impl Coupling {
    pub fn both(g: f64) -> Self {
        Coupling { g_stokes: Complex64::new(g, 0.0), g_anti_stokes: Complex64::new(g, 0.0) }
    }

    pub fn anti_stokes_only(g: f64) -> Self {
        Coupling { g_stokes: Complex64::new(0.0, 0.0), g_anti_stokes: Complex64::new(g, 0.0) }
    }

    pub fn stokes_only(g: f64) -> Self {
        Coupling { g_stokes: Complex64::new(g, 0.0), g_anti_stokes: Complex64::new(0.0, 0.0) }
    }
}

/// Time derivatives (ȧ, ḃ₊, ḃ₋, ċ).
pub fn rhs(state: &ModeAmplitudes, coupling: &Coupling) -> [Complex64; 4] {
    derivative(state, coupling, &state.amplitudes())
}

fn derivative(p: &ModeAmplitudes, k: &Coupling, y: &[Complex64; 4]) -> [Complex64; 4] {
    let [a, bp, bm, c] = *y;
    let (gm, gp) = (k.g_stokes, k.g_anti_stokes);
    [
        -p.kappa_a * a - I * (gm.conj() * bm * c + gp * bp * c.conj()) + p.drive_a,
        -p.kappa_b * bp - I * gp.conj() * c * a,
        -p.kappa_b * bm - I * gm * c.conj() * a,
        -p.kappa_c * c - I * (gm * bm.conj() * a + gp * bp * a.conj()) + p.drive_c,
    ]
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimulateOptions {
    /// Local relative error per step.
    pub tolerance: f64,
    /// Number of equal output intervals over the duration.
    pub samples: usize,
    /// Initial step; 0 picks one from the rates.
    pub initial_step: f64,
}

impl Default for SimulateOptions {
    fn default() -> Self {
        SimulateOptions { tolerance: 1e-10, samples: 100, initial_step: 0.0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeries {
    pub t: Vec<f64>,
    pub states: Vec<ModeAmplitudes>,
    pub steps: usize,
}

// Dormand-Prince 5(4) tableau.
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const B_ERR: [f64; 7] = [
    35.0 / 384.0 - 5179.0 / 57600.0,
    0.0,
    500.0 / 1113.0 - 7571.0 / 16695.0,
    125.0 / 192.0 - 393.0 / 640.0,
    -2187.0 / 6784.0 + 92097.0 / 339200.0,
    11.0 / 84.0 - 187.0 / 2100.0,
    -1.0 / 40.0,
];

struct Stepper<'a> {
    params: &'a ModeAmplitudes,
    coupling: &'a Coupling,
    tol: f64,
    h: f64,
    steps: usize,
}

impl Stepper<'_> {
    /// Advances `y` from `t` to exactly `t_end`.
    fn advance(&mut self, t: &mut f64, y: &mut [Complex64; 4], t_end: f64) -> Result<(), DynamicsError> {
        let mut k1 = derivative(self.params, self.coupling, y);
        while *t < t_end {
            let last = self.h >= t_end - *t;
            let h = if last { t_end - *t } else { self.h };
            if h <= 16.0 * f64::EPSILON * t.abs().max(t_end.abs()) {
                return Err(DynamicsError::StepFailure { t: *t, h });
            }
            let mut k = [[Complex64::new(0.0, 0.0); 4]; 7];
            k[0] = k1;
            for s in 1..7 {
                let mut ys = *y;
                for (j, kj) in k.iter().enumerate().take(s) {
                    if A[s][j] != 0.0 {
                        for i in 0..4 {
                            ys[i] += h * A[s][j] * kj[i];
                        }
                    }
                }
                k[s] = derivative(self.params, self.coupling, &ys);
            }
            let mut y_new = *y;
            for (j, kj) in k.iter().enumerate().take(6) {
                for i in 0..4 {
                    y_new[i] += h * A[6][j] * kj[i];
                }
            }
            let floor = 1e-6 * y.iter().map(|z| z.norm()).fold(0.0, f64::max);
            let mut err: f64 = 0.0;
            for i in 0..4 {
                let mut e = Complex64::new(0.0, 0.0);
                for (j, kj) in k.iter().enumerate() {
                    e += h * B_ERR[j] * kj[i];
                }
                let scale = self.tol * y[i].norm().max(y_new[i].norm()).max(floor).max(1e-300);
                err = err.max(e.norm() / scale);
            }
            if err <= 1.0 {
                *t = if last { t_end } else { *t + h };
                *y = y_new;
                k1 = k[6];
                self.steps += 1;
                let grow = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
                if !last || grow < 1.0 {
                    self.h = h * grow;
                }
            } else {
                self.h = h * (0.9 * err.powf(-0.2)).clamp(0.1, 1.0);
            }
        }
        Ok(())
    }
}

fn rate_scale(state: &ModeAmplitudes, coupling: &Coupling) -> f64 {
    let n: f64 = state.amplitudes().iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    let g = coupling.g_stokes.norm().max(coupling.g_anti_stokes.norm());
    let drive = state.drive_a.norm().max(state.drive_c.norm()) / n.max(1e-300);
    state.kappa_a.max(state.kappa_b).max(state.kappa_c).max(g * n.max(1.0)).max(drive)
}

/// Integrates the coupled-mode equations with an adaptive Dormand-Prince
/// 5(4) scheme, recording `samples + 1` equally spaced states.
pub fn simulate(
    initial: &ModeAmplitudes,
    coupling: &Coupling,
    duration: f64,
    opts: &SimulateOptions,
) -> Result<TimeSeries, DynamicsError> {
    initial.validate()?;
    if !(duration > 0.0 && duration.is_finite()) {
        return Err(DynamicsError::InvalidInput("duration must be positive".into()));
    }
    if !(opts.tolerance > 0.0) {
        return Err(DynamicsError::InvalidInput("tolerance must be positive".into()));
    }
    let samples = opts.samples.max(1);
    let h0 = if opts.initial_step > 0.0 {
        opts.initial_step
    } else {
        0.01 / rate_scale(initial, coupling).max(1e-300)
    };
    let mut stepper = Stepper { params: initial, coupling, tol: opts.tolerance, h: h0.min(duration), steps: 0 };
    let mut y = initial.amplitudes();
    let mut t = 0.0;
    let mut out = TimeSeries { t: vec![0.0], states: vec![*initial], steps: 0 };
    for s in 1..=samples {
        let t_end = duration * s as f64 / samples as f64;
        stepper.advance(&mut t, &mut y, t_end)?;
        out.t.push(t_end);
        out.states.push(initial.with_amplitudes(y));
    }
    out.steps = stepper.steps;
    Ok(out)
}

/// Largest |derivative| relative to the fastest rate times the state size.
pub fn relative_derivative(state: &ModeAmplitudes, coupling: &Coupling) -> f64 {
    let d = rhs(state, coupling);
    let n: f64 = state.amplitudes().iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    let scale = rate_scale(state, coupling) * n;
    if scale == 0.0 {
        return 0.0;
    }
    d.iter().map(|z| z.norm()).fold(0.0, f64::max) / scale
}

/// Fixed point of a driven, damped system: integrates until transients die
/// out, then refines with Newton iterations until the relative derivative is
/// below `threshold`.
pub fn steady_state(
    initial: &ModeAmplitudes,
    coupling: &Coupling,
    threshold: f64,
) -> Result<ModeAmplitudes, DynamicsError> {
    initial.validate()?;
    let kmin = initial.kappa_a.min(initial.kappa_b).min(initial.kappa_c);
    if !(kmin > 0.0) {
        return Err(DynamicsError::InvalidInput("steady state needs positive decay rates".into()));
    }
    let opts = SimulateOptions { tolerance: 1e-9, samples: 1, initial_step: 0.0 };
    let mut state = *initial;
    for _ in 0..20 {
        if relative_derivative(&state, coupling) < 1e-4 {
            break;
        }
        let ts = simulate(&state, coupling, 5.0 / kmin, &opts)?;
        state = *ts.states.last().unwrap();
    }
    for _ in 0..30 {
        if relative_derivative(&state, coupling) < threshold {
            return Ok(state);
        }
        state = newton_step(&state, coupling);
    }
    if relative_derivative(&state, coupling) < threshold {
        Ok(state)
    } else {
        Err(DynamicsError::StepFailure { t: f64::INFINITY, h: relative_derivative(&state, coupling) })
    }
}

fn to_real(y: &[Complex64; 4]) -> [f64; 8] {
    let mut v = [0.0; 8];
    for i in 0..4 {
        v[2 * i] = y[i].re;
        v[2 * i + 1] = y[i].im;
    }
    v
}

fn from_real(v: &[f64; 8]) -> [Complex64; 4] {
    std::array::from_fn(|i| Complex64::new(v[2 * i], v[2 * i + 1]))
}

fn newton_step(state: &ModeAmplitudes, coupling: &Coupling) -> ModeAmplitudes {
    let y = to_real(&state.amplitudes());
    let f0 = to_real(&rhs(state, coupling));
    let norm = y.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-300);
    let mut jac = [[0.0; 8]; 8];
    for j in 0..8 {
        // The system is a polynomial of degree 2, so central differences are exact
        // up to rounding.
        let step = 1e-6 * norm;
        let mut yp = y;
        let mut ym = y;
        yp[j] += step;
        ym[j] -= step;
        let fp = to_real(&derivative(state, coupling, &from_real(&yp)));
        let fm = to_real(&derivative(state, coupling, &from_real(&ym)));
        for i in 0..8 {
            jac[i][j] = (fp[i] - fm[i]) / (2.0 * step);
        }
    }
    match solve8(jac, f0) {
        Some(dx) => {
            let mut y1 = y;
            for i in 0..8 {
                y1[i] -= dx[i];
            }
            state.with_amplitudes(from_real(&y1))
        }
        None => *state,
    }
}

fn solve8(mut a: [[f64; 8]; 8], mut b: [f64; 8]) -> Option<[f64; 8]> {
    for col in 0..8 {
        let piv = (col..8).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[piv][col] == 0.0 {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for row in col + 1..8 {
            let f = a[row][col] / a[col][col];
            for k in col..8 {
                a[row][k] -= f * a[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = [0.0; 8];
    for row in (0..8).rev() {
        let s: f64 = (row + 1..8).map(|k| a[row][k] * x[k]).sum();
        x[row] = (b[row] - s) / a[row][row];
    }
    Some(x)
}

/// Amplitude decay rate κ = ω/(2Q).
pub fn kappa(omega: Frequency, q: f64) -> f64 {
    omega.rad_per_s() / (2.0 * q)
}

/// Drive rate for an over-coupled mode fed with power `p`: d = √(2κP/ħω),
/// so that the steady-state out-coupled photon flux is 2κ|x|².
pub fn drive_rate(p: f64, omega: Frequency, kappa: f64) -> f64 {
    (2.0 * kappa * p / (HBAR * omega.rad_per_s())).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmallSignalResult {
    /// Anti-Stokes photon flux per incident microwave photon.
    pub anti_stokes: f64,
    pub stokes: f64,
    pub state: ModeAmplitudes,
}

/// Photon-number efficiency from the driven steady state with both sidebands
/// coupled, all optical modes of quality Q and the microwave mode of Q_M.
pub fn smallsignal_efficiency(
    g: f64,
    q: f64,
    q_m: f64,
    omega_0: Frequency,
    omega_c: Frequency,
    p0: f64,
    p_m: f64,
) -> Result<SmallSignalResult, DynamicsError> {
    if !(q > 0.0 && q_m > 0.0 && p0 > 0.0 && p_m > 0.0 && g >= 0.0) {
        return Err(DynamicsError::InvalidInput("Q, Q_M, P0 and P_M must be positive".into()));
    }
    let xi = crate::conversion::xi_factor(g, q, q_m, omega_0, omega_c);
    if 2.0 * xi * xi * p_m >= 1e-3 {
        return Err(DynamicsError::InvalidInput(format!(
            "P_M = {p_m:e} W is outside the small-signal regime (2ξ²P_M = {:e})",
            2.0 * xi * xi * p_m
        )));
    }
    let ka = kappa(omega_0, q);
    let kc = kappa(omega_c, q_m);
    let da = drive_rate(p0, omega_0, ka);
    let dc = drive_rate(p_m, omega_c, kc);
    let zero = Complex64::new(0.0, 0.0);
    let initial = ModeAmplitudes {
        a: Complex64::new(da / ka, 0.0),
        b_plus: zero,
        b_minus: zero,
        c: Complex64::new(dc / kc, 0.0),
        kappa_a: ka,
        kappa_b: ka,
        kappa_c: kc,
        drive_a: Complex64::new(da, 0.0),
        drive_c: Complex64::new(dc, 0.0),
    };
    let state = steady_state(&initial, &Coupling::both(g), 1e-10)?;
    let incident = p_m / (HBAR * omega_c.rad_per_s());
    Ok(SmallSignalResult {
        anti_stokes: 2.0 * ka * state.b_plus.norm_sqr() / incident,
        stokes: 2.0 * ka * state.b_minus.norm_sqr() / incident,
        state,
    })
}

/// `t_s, a_re, a_im, b_plus_re, ...` rows.
pub fn timeseries_csv(series: &TimeSeries) -> String {
    let mut out = String::from("t_s, a_re, a_im, b_plus_re, b_plus_im, b_minus_re, b_minus_im, c_re, c_im\n");
    for (t, s) in series.t.iter().zip(&series.states) {
        out.push_str(&format!("{t:.9e}"));
        for z in s.amplitudes() {
            out.push_str(&format!(", {:.9e}, {:.9e}", z.re, z.im));
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn cz(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn decoupled_decay() {
        let mut s = ModeAmplitudes::lossless(cz(1.0, 0.0), cz(0.5, 0.5), cz(0.0, 1.0), cz(2.0, 0.0));
        s.kappa_a = 1.0;
        s.kappa_b = 2.0;
        s.kappa_c = 0.5;
        let ts = simulate(&s, &Coupling::both(0.0), 1.0, &SimulateOptions { tolerance: 1e-11, ..Default::default() }).unwrap();
        let end = ts.states.last().unwrap();
        assert!((end.a.re - (-1.0f64).exp()).abs() < 1e-9);
        assert!((end.b_minus.im - (-2.0f64).exp()).abs() < 1e-9);
        assert!((end.c.re - 2.0 * (-0.5f64).exp()).abs() < 1e-9);
    }

    #[test]
    fn rhs_conserves_instantaneously() {
        let s = ModeAmplitudes::lossless(cz(1.0, 0.3), cz(0.2, -0.5), cz(-0.4, 0.1), cz(0.7, 0.9));
        let k = Coupling { g_stokes: cz(0.8, 0.2), g_anti_stokes: cz(1.1, -0.4) };
        let d = rhs(&s, &k);
        let y = s.amplitudes();
        let dn = |i: usize| 2.0 * (y[i].conj() * d[i]).re;
        assert!((dn(0) + dn(1) + dn(2)).abs() < 1e-14);
        assert!((dn(3) + dn(1) - dn(2)).abs() < 1e-14);
    }

    #[test]
    fn step_failure_reported() {
        let mut s = ModeAmplitudes::lossless(cz(1.0, 0.0), cz(0.0, 0.0), cz(0.0, 0.0), cz(1.0, 0.0));
        s.kappa_a = 1.0;
        let r = simulate(&s, &Coupling::both(1.0), 1.0, &SimulateOptions { tolerance: 1e-300, samples: 1, initial_step: 0.0 });
        assert!(matches!(r, Err(DynamicsError::StepFailure { .. })), "{r:?}");
        assert!(simulate(&s, &Coupling::both(1.0), -1.0, &SimulateOptions::default()).is_err());
    }

    #[test]
    fn csv_header_and_rows() {
        let s = ModeAmplitudes::lossless(cz(1.0, 0.0), cz(0.0, 0.0), cz(0.0, 0.0), cz(0.1, 0.0));
        let ts = simulate(&s, &Coupling::both(1.0), 1.0, &SimulateOptions { samples: 4, ..Default::default() }).unwrap();
        let csv = timeseries_csv(&ts);
        assert!(csv.starts_with("t_s, a_re, a_im, b_plus_re"));
        assert_eq!(csv.lines().count(), 6);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]
        #[test]
        fn phase_covariance(alpha in 0.0f64..6.28, gamma in 0.0f64..6.28, ar in -1.0f64..1.0, ci in -1.0f64..1.0) {
            // Pump phase α and microwave phase γ; the sidebands follow as α ± γ.
            let s = ModeAmplitudes::lossless(cz(ar, 0.5), cz(0.1, 0.0), cz(0.0, 0.2), cz(0.3, ci));
            let p = |x: f64| Complex64::from_polar(1.0, x);
            let r = s.with_amplitudes([s.a * p(alpha), s.b_plus * p(alpha + gamma), s.b_minus * p(alpha - gamma), s.c * p(gamma)]);
            let k = Coupling::both(1.0);
            let opts = SimulateOptions { tolerance: 1e-12, samples: 1, initial_step: 0.0 };
            let e1 = *simulate(&s, &k, 5.0, &opts).unwrap().states.last().unwrap();
            let e2 = *simulate(&r, &k, 5.0, &opts).unwrap().states.last().unwrap();
            for (x, y) in e1.amplitudes().iter().zip(e2.amplitudes().iter()) {
                prop_assert!((x.norm_sqr() - y.norm_sqr()).abs() < 1e-12 * (1.0 + x.norm_sqr()));
            }
        }
    }
}
