//! Two-sided Wiener paths, the Wiener shift, colored noise `Z_δ` and the
//! Ornstein-Uhlenbeck processes `y` and `z_δ`.
//!
//! A [`WienerPath`] stores node values on a uniform grid that contains `t = 0`
//! as an exact node. Between nodes the path is linear, so every derived
//! quantity (difference quotients, their time integrals, the OU solutions) can
//! be evaluated in closed form cell by cell.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative distance (in units of `h`) under which a time is treated as a node.
const NODE_SNAP: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseParams {
    pub delta: f64,
    pub ell: f64,
    pub sigma: f64,
    pub kappa: f64,
}

impl Default for NoiseParams {
    fn default() -> Self {
        NoiseParams {
            delta: 0.1,
            ell: 1.0,
            sigma: 0.0,
            kappa: 0.0,
        }
    }
}

impl NoiseParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.delta > 0.0 && self.delta <= 1.0) {
            return Err(Error::param("delta", format!("{} not in (0, 1]", self.delta)));
        }
        if !(self.ell > 0.0) || !self.ell.is_finite() {
            return Err(Error::param("ell", format!("{} must be positive", self.ell)));
        }
        if !(self.sigma >= 0.0) {
            return Err(Error::param("sigma", format!("{} must be >= 0", self.sigma)));
        }
        if !(self.kappa >= 0.0) {
            return Err(Error::param("kappa", format!("{} must be >= 0", self.kappa)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProcessLabel {
    ZDelta,
    Y,
    ZdeltaOu,
    IntegralZ,
}

impl ProcessLabel {
    pub fn as_str(&self) -> &'static str {
        match self {
            ProcessLabel::ZDelta => "Z_delta",
            ProcessLabel::Y => "y",
            ProcessLabel::ZdeltaOu => "z_delta",
            ProcessLabel::IntegralZ => "integral_Z",
        }
    }
}

/// Sampled values of one scalar noise process on a time grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarProcessTrace {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    pub label: ProcessLabel,
}

/// A seeded two-sided Brownian sample path on `[t_min, t_max]`.
#[derive(Debug, Clone, PartialEq)]
pub struct WienerPath {
    seed: u64,
    h: f64,
    /// Index of the node at `t = 0`.
    i0: usize,
    samples: Vec<f64>,
    /// `prefix[i] = ∫_0^{t_i} ω`, exact for the piecewise-linear path.
    prefix: Vec<f64>,
}

fn aligned_steps(x: f64, h: f64, name: &'static str) -> Result<usize> {
    let k = x / h;
    let kr = k.round();
    if (k - kr).abs() > 1e-9 * kr.abs().max(1.0) {
        return Err(Error::param(
            name,
            format!("{x} is not an integer multiple of h = {h}"),
        ));
    }
    Ok(kr as usize)
}

impl WienerPath {
    /// Draws a path whose increments are i.i.d. `N(0, h)`.
    ///
    /// Forward increments (to the right of 0) come from ChaCha stream 0 and
    /// backward increments from stream 1, both consumed outward from the zero
    /// node. The increment adjacent to 0 therefore depends only on the seed,
    /// and enlarging the window never changes values already drawn.
    pub fn sample(seed: u64, t_min: f64, t_max: f64, h: f64) -> Result<Self> {
        let (i0, n_fwd) = Self::layout(t_min, t_max, h)?;
        let sd = h.sqrt();
        let mut samples = vec![0.0; i0 + n_fwd + 1];

        let mut fwd = ChaCha8Rng::seed_from_u64(seed);
        fwd.set_stream(0);
        for j in 0..n_fwd {
            let g: f64 = fwd.sample(StandardNormal);
            samples[i0 + j + 1] = samples[i0 + j] + sd * g;
        }
        let mut bwd = ChaCha8Rng::seed_from_u64(seed);
        bwd.set_stream(1);
        for j in 0..i0 {
            let g: f64 = bwd.sample(StandardNormal);
            samples[i0 - j - 1] = samples[i0 - j] - sd * g;
        }
        Ok(Self::from_parts(seed, h, i0, samples))
    }

    /// Builds a deterministic path by sampling `f` at the nodes. The value at
    /// zero is subtracted so that `ω(0) = 0` holds exactly.
    pub fn from_fn(t_min: f64, t_max: f64, h: f64, f: impl Fn(f64) -> f64) -> Result<Self> {
        let (i0, n_fwd) = Self::layout(t_min, t_max, h)?;
        let f0 = f(0.0);
        let samples = (0..=i0 + n_fwd)
            .map(|i| {
                let t = (i as f64 - i0 as f64) * h;
                f(t) - f0
            })
            .collect();
        Ok(Self::from_parts(0, h, i0, samples))
    }

    /// The identically zero path.
    pub fn zero(t_min: f64, t_max: f64, h: f64) -> Result<Self> {
        Self::from_fn(t_min, t_max, h, |_| 0.0)
    }

    fn layout(t_min: f64, t_max: f64, h: f64) -> Result<(usize, usize)> {
        if !(h > 0.0) || !h.is_finite() {
            return Err(Error::param("h", format!("{h} must be positive")));
        }
        if !(t_min < 0.0 && t_max > 0.0) {
            return Err(Error::param(
                "t_min/t_max",
                format!("need t_min < 0 < t_max, got [{t_min}, {t_max}]"),
            ));
        }
        let i0 = aligned_steps(-t_min, h, "t_min")?;
        let n_fwd = (t_max / h - 1e-9).ceil() as usize;
        Ok((i0, n_fwd))
    }

    fn from_parts(seed: u64, h: f64, i0: usize, samples: Vec<f64>) -> Self {
        let mut prefix = vec![0.0; samples.len()];
        for i in i0 + 1..samples.len() {
            prefix[i] = prefix[i - 1] + 0.5 * h * (samples[i - 1] + samples[i]);
        }
        for i in (0..i0).rev() {
            prefix[i] = prefix[i + 1] - 0.5 * h * (samples[i] + samples[i + 1]);
        }
        WienerPath {
            seed,
            h,
            i0,
            samples,
            prefix,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }
    pub fn h(&self) -> f64 {
        self.h
    }
    pub fn t_min(&self) -> f64 {
        -(self.i0 as f64) * self.h
    }
    pub fn t_max(&self) -> f64 {
        (self.samples.len() - 1 - self.i0) as f64 * self.h
    }
    pub fn samples(&self) -> &[f64] {
        &self.samples
    }
    pub fn zero_index(&self) -> usize {
        self.i0
    }
    pub fn node_time(&self, i: usize) -> f64 {
        (i as f64 - self.i0 as f64) * self.h
    }

    /// Linear refinement: each cell is split into `factor` equal cells with the
    /// same piecewise-linear values.
    pub fn refine(&self, factor: usize) -> Result<Self> {
        if factor == 0 {
            return Err(Error::param("factor", "must be >= 1"));
        }
        let m = self.samples.len() - 1;
        let mut samples = Vec::with_capacity(m * factor + 1);
        for i in 0..m {
            let (a, b) = (self.samples[i], self.samples[i + 1]);
            for j in 0..factor {
                samples.push(a + (b - a) * (j as f64 / factor as f64));
            }
        }
        samples.push(self.samples[m]);
        Ok(Self::from_parts(
            self.seed,
            self.h / factor as f64,
            self.i0 * factor,
            samples,
        ))
    }

    /// Locates `t`: returns the cell index and fractional position in it.
    fn locate(&self, t: f64) -> Result<(usize, f64)> {
        let pos = self.i0 as f64 + t / self.h;
        let last = (self.samples.len() - 1) as f64;
        if !(pos >= -NODE_SNAP && pos <= last + NODE_SNAP) {
            return Err(Error::OutOfRange {
                t,
                min: self.t_min(),
                max: self.t_max(),
            });
        }
        let r = pos.round();
        if (pos - r).abs() < NODE_SNAP {
            let i = r as usize;
            return Ok((i, 0.0));
        }
        let i = pos.floor() as usize;
        Ok((i, pos - i as f64))
    }

    /// `ω(t)` by linear interpolation.
    pub fn omega(&self, t: f64) -> Result<f64> {
        let (i, f) = self.locate(t)?;
        if f == 0.0 {
            return Ok(self.samples[i]);
        }
        let (a, b) = (self.samples[i], self.samples[i + 1]);
        Ok(a + f * (b - a))
    }

    /// `Ω(t) = ∫_0^t ω(ξ) dξ`, exact for the interpolated path.
    pub fn antiderivative(&self, t: f64) -> Result<f64> {
        let (i, f) = self.locate(t)?;
        if f == 0.0 {
            return Ok(self.prefix[i]);
        }
        let (a, b) = (self.samples[i], self.samples[i + 1]);
        let wt = a + f * (b - a);
        Ok(self.prefix[i] + 0.5 * f * self.h * (a + wt))
    }

    /// `θ_s ω(τ) = ω(τ + s) − ω(s)`.
    pub fn shifted(&self, shift: f64, tau: f64) -> Result<f64> {
        Ok(self.omega(tau + shift)? - self.omega(shift)?)
    }

    fn check_delta(&self, delta: f64) -> Result<()> {
        if !(delta > 0.0) {
            return Err(Error::param("delta", format!("{delta} must be positive")));
        }
        aligned_steps(delta, self.h, "delta").map(|_| ())
    }

    /// `Z_δ(θ_t ω) = (ω(t + δ) − ω(t)) / δ`.
    pub fn colored(&self, delta: f64, t: f64) -> Result<f64> {
        self.check_delta(delta)?;
        Ok((self.omega(t + delta)? - self.omega(t)?) / delta)
    }

    /// `∫_0^t Z_δ(θ_ξ ω) dξ`, exact for the piecewise-linear integrand.
    pub fn integral_colored(&self, delta: f64, t: f64) -> Result<f64> {
        self.check_delta(delta)?;
        if t == 0.0 {
            return Ok(0.0);
        }
        let a = self.antiderivative(t + delta)? - self.antiderivative(t)?;
        let b = self.antiderivative(delta)?;
        Ok((a - b) / delta)
    }

    /// Node values of `y`, solving `y' = −ℓ y + ω'` exactly on each cell
    /// for the piecewise-linear path, from `y(t_min) = 0`.
    pub fn ou_y_trace(&self, ell: f64) -> Result<OuTrace> {
        check_ell(ell)?;
        let forcing: Vec<f64> = self.samples.windows(2).map(|w| (w[1] - w[0]) / self.h).collect();
        let mut values = vec![0.0; self.samples.len()];
        for (i, &d) in forcing.iter().enumerate() {
            values[i + 1] = ou_cell(ell, self.h, values[i], d, d);
        }
        Ok(OuTrace {
            label: ProcessLabel::Y,
            ell,
            delta: None,
            h: self.h,
            i0: self.i0,
            values,
            forcing,
            per_cell: true,
        })
    }

    /// Node values of `z_δ`, solving `z' = −ℓ z + Z_δ` exactly on each cell
    /// (the forcing is linear there) from `z(t_min) = 0`. Defined up to
    /// `t_max − δ`.
    pub fn ou_z_trace(&self, ell: f64, delta: f64) -> Result<OuTrace> {
        check_ell(ell)?;
        self.check_delta(delta)?;
        let lag = aligned_steps(delta, self.h, "delta")?;
        if lag >= self.samples.len() {
            return Err(Error::param("delta", "longer than the path window"));
        }
        let nodes = self.samples.len() - lag;
        let forcing: Vec<f64> = (0..nodes)
            .map(|i| (self.samples[i + lag] - self.samples[i]) / delta)
            .collect();
        let mut values = vec![0.0; nodes];
        for i in 0..nodes - 1 {
            values[i + 1] = ou_cell(ell, self.h, values[i], forcing[i], forcing[i + 1]);
        }
        Ok(OuTrace {
            label: ProcessLabel::ZdeltaOu,
            ell,
            delta: Some(delta),
            h: self.h,
            i0: self.i0,
            values,
            forcing,
            per_cell: false,
        })
    }

    /// Samples one of the scalar processes on `t0, t0 + step, …, t1`.
    pub fn trace(
        &self,
        label: ProcessLabel,
        params: &NoiseParams,
        t0: f64,
        t1: f64,
        step: f64,
    ) -> Result<ScalarProcessTrace> {
        let times = uniform_grid(t0, t1, step)?;
        let values = match label {
            ProcessLabel::ZDelta => times
                .iter()
                .map(|&t| self.colored(params.delta, t))
                .collect::<Result<Vec<_>>>()?,
            ProcessLabel::IntegralZ => times
                .iter()
                .map(|&t| self.integral_colored(params.delta, t))
                .collect::<Result<Vec<_>>>()?,
            ProcessLabel::Y => {
                let tr = self.ou_y_trace(params.ell)?;
                times.iter().map(|&t| tr.eval(t)).collect::<Result<Vec<_>>>()?
            }
            ProcessLabel::ZdeltaOu => {
                let tr = self.ou_z_trace(params.ell, params.delta)?;
                times.iter().map(|&t| tr.eval(t)).collect::<Result<Vec<_>>>()?
            }
        };
        Ok(ScalarProcessTrace {
            times,
            values,
            label,
        })
    }
}

fn check_ell(ell: f64) -> Result<()> {
    if !(ell > 0.0) || !ell.is_finite() {
        return Err(Error::param("ell", format!("{ell} must be positive")));
    }
    Ok(())
}

/// One exact step of `z' = −ℓz + F` over a cell of length `tau` where `F`
/// runs linearly from `fa` to `fb`.
fn ou_cell(ell: f64, tau: f64, z: f64, fa: f64, fb: f64) -> f64 {
    let one_minus_e = -(-ell * tau).exp_m1();
    let e = 1.0 - one_minus_e;
    let slope = fb - fa;
    e * z + fa * one_minus_e / ell + slope * (1.0 / ell - one_minus_e / (ell * ell * tau))
}

/// `t0, t0+step, …` up to and including `t1` (within rounding).
pub fn uniform_grid(t0: f64, t1: f64, step: f64) -> Result<Vec<f64>> {
    if !(step > 0.0) || !(t1 >= t0) {
        return Err(Error::param("step", format!("bad grid [{t0}, {t1}] step {step}")));
    }
    let m = ((t1 - t0) / step + 1e-9).floor() as usize;
    Ok((0..=m).map(|j| t0 + j as f64 * step).collect())
}

/// Precomputed node values of `y` or `z_δ` along a path.
#[derive(Debug, Clone, PartialEq)]
pub struct OuTrace {
    label: ProcessLabel,
    ell: f64,
    delta: Option<f64>,
    h: f64,
    i0: usize,
    values: Vec<f64>,
    /// `Z_δ` at the nodes, or the path slope per cell for `y`.
    forcing: Vec<f64>,
    per_cell: bool,
}

impl OuTrace {
    pub fn label(&self) -> ProcessLabel {
        self.label
    }
    pub fn ell(&self) -> f64 {
        self.ell
    }
    pub fn delta(&self) -> Option<f64> {
        self.delta
    }
    pub fn t_min(&self) -> f64 {
        -(self.i0 as f64) * self.h
    }
    pub fn t_max(&self) -> f64 {
        (self.values.len() - 1 - self.i0) as f64 * self.h
    }

    /// Bound on the error from starting the recursion at `t_min` instead of
    /// `−∞`, scaled by the stationary standard deviation `1/√(2ℓ)`.
    pub fn truncation_bound(&self, t: f64) -> f64 {
        (-self.ell * (t - self.t_min())).exp() / (2.0 * self.ell).sqrt()
    }

    pub fn truncation_warning(&self, t: f64) -> bool {
        self.truncation_bound(t) > 1e-6
    }

    /// Value at `t` from the exact cell solution.
    pub fn eval(&self, t: f64) -> Result<f64> {
        let pos = self.i0 as f64 + t / self.h;
        let last = (self.values.len() - 1) as f64;
        if !(pos >= -NODE_SNAP && pos <= last + NODE_SNAP) {
            return Err(Error::OutOfRange {
                t,
                min: self.t_min(),
                max: self.t_max(),
            });
        }
        let r = pos.round();
        if (pos - r).abs() < NODE_SNAP {
            return Ok(self.values[r as usize]);
        }
        let i = pos.floor() as usize;
        let f = pos - i as f64;
        let (fa, fb) = if self.per_cell {
            (self.forcing[i], self.forcing[i])
        } else {
            let fa = self.forcing[i];
            (fa, fa + f * (self.forcing[i + 1] - fa))
        };
        Ok(ou_cell(self.ell, f * self.h, self.values[i], fa, fb))
    }

    /// Evaluation with the full report including the truncation flag.
    pub fn eval_report(&self, t: f64) -> Result<OuValue> {
        Ok(OuValue {
            value: self.eval(t)?,
            truncation_bound: self.truncation_bound(t),
            warning: self.truncation_warning(t),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OuValue {
    pub value: f64,
    pub truncation_bound: f64,
    pub warning: bool,
}

/// The shifted path `θ_shift ω`, sharing storage with the base path.
#[derive(Debug, Clone)]
pub struct NoiseWindow {
    pub path: Arc<WienerPath>,
    pub shift: f64,
}

impl NoiseWindow {
    pub fn new(path: Arc<WienerPath>, shift: f64) -> Self {
        NoiseWindow { path, shift }
    }

    /// `θ_a(θ_b ω) = θ_{a+b} ω`.
    pub fn shift_by(&self, extra: f64) -> Self {
        NoiseWindow {
            path: Arc::clone(&self.path),
            shift: self.shift + extra,
        }
    }

    pub fn omega(&self, tau: f64) -> Result<f64> {
        self.path.shifted(self.shift, tau)
    }

    pub fn colored(&self, delta: f64, tau: f64) -> Result<f64> {
        self.path.colored(delta, tau + self.shift)
    }

    pub fn integral_colored(&self, delta: f64, tau: f64) -> Result<f64> {
        Ok(self.path.integral_colored(delta, tau + self.shift)?
            - self.path.integral_colored(delta, self.shift)?)
    }
}

pub fn sample_wiener(seed: u64, t_min: f64, t_max: f64, h: f64) -> Result<WienerPath> {
    WienerPath::sample(seed, t_min, t_max, h)
}

pub fn eval_omega(path: &WienerPath, t: f64) -> Result<f64> {
    path.omega(t)
}

pub fn colored_noise(path: &WienerPath, delta: f64, t: f64) -> Result<f64> {
    path.colored(delta, t)
}

pub fn integral_colored(path: &WienerPath, delta: f64, t: f64) -> Result<f64> {
    path.integral_colored(delta, t)
}

/// Single evaluation of `y`; builds the whole trace, so prefer
/// [`WienerPath::ou_y_trace`] for repeated use.
pub fn ou_y(path: &WienerPath, ell: f64, t: f64) -> Result<OuValue> {
    path.ou_y_trace(ell)?.eval_report(t)
}

pub fn ou_z(path: &WienerPath, ell: f64, delta: f64, t: f64) -> Result<OuValue> {
    path.ou_z_trace(ell, delta)?.eval_report(t)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NoiseDiagnosticRow {
    pub delta: f64,
    pub sup_wz_error: f64,
    pub sup_zy_error: f64,
    pub ergodic_mean: f64,
    pub growth_ratio: f64,
}

/// Per-δ finite-window surrogates of the Wong-Zakai limits on `[s, s+T]`,
/// evaluated at the path nodes.
pub fn noise_diagnostics(
    path: &WienerPath,
    params: &NoiseParams,
    s: f64,
    horizon: f64,
    delta_list: &[f64],
) -> Result<Vec<NoiseDiagnosticRow>> {
    if !(horizon > 0.0) {
        return Err(Error::param("T", "horizon must be positive"));
    }
    let times = uniform_grid(s, s + horizon, path.h())?;
    let y = path.ou_y_trace(params.ell)?;
    delta_list
        .iter()
        .map(|&delta| {
            let z = path.ou_z_trace(params.ell, delta)?;
            let mut sup_wz: f64 = 0.0;
            let mut sup_zy: f64 = 0.0;
            let mut growth: f64 = 0.0;
            for &t in &times {
                let wz = (path.integral_colored(delta, t)? - path.omega(t)?).abs();
                sup_wz = sup_wz.max(wz);
                sup_zy = sup_zy.max((z.eval(t)? - y.eval(t)?).abs());
                growth = growth.max(path.colored(delta, t)?.abs() / (1.0 + t.abs()));
            }
            let ergodic_mean = (path.integral_colored(delta, horizon)? / horizon).abs();
            Ok(NoiseDiagnosticRow {
                delta,
                sup_wz_error: sup_wz,
                sup_zy_error: sup_zy,
                ergodic_mean,
                growth_ratio: growth,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn zero_is_pinned_and_sampling_is_deterministic() {
        let a = WienerPath::sample(7, -4.0, 4.0, 0.001).unwrap();
        let b = WienerPath::sample(7, -4.0, 4.0, 0.001).unwrap();
        assert_eq!(a.omega(0.0).unwrap(), 0.0);
        assert_eq!(a.samples(), b.samples());
        let c = WienerPath::sample(8, -4.0, 4.0, 0.001).unwrap();
        assert!(a.samples().iter().zip(c.samples()).any(|(x, y)| x != y));
    }

    #[test]
    fn enlarging_the_window_keeps_shared_values() {
        let small = WienerPath::sample(3, -1.0, 1.0, 0.01).unwrap();
        let big = WienerPath::sample(3, -2.0, 3.0, 0.01).unwrap();
        for &t in &[-1.0, -0.37, 0.0, 0.5, 1.0] {
            assert_eq!(small.omega(t).unwrap(), big.omega(t).unwrap());
        }
    }

    #[test]
    fn increment_statistics() {
        let p = WienerPath::sample(11, -50.0, 50.0, 0.01).unwrap();
        let inc: Vec<f64> = p.samples().windows(2).map(|w| w[1] - w[0]).collect();
        let n = inc.len() as f64;
        let mean = inc.iter().sum::<f64>() / n;
        let var = inc.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
        assert!(mean.abs() < 4.0 * (0.01 / n).sqrt());
        assert!((var / 0.01 - 1.0).abs() < 0.03);
    }

    #[test]
    fn misaligned_grid_is_rejected() {
        assert!(WienerPath::sample(1, -1.1, 1.0, 0.1).is_ok());
        assert!(WienerPath::sample(1, -1.03, 1.0, 0.1).is_err());
        assert!(WienerPath::sample(1, -1.0, 1.0, 0.0).is_err());
        assert!(WienerPath::sample(1, 0.5, 1.0, 0.1).is_err());
    }

    #[test]
    fn out_of_range_names_interval() {
        let p = WienerPath::sample(1, -1.0, 1.0, 0.1).unwrap();
        match p.omega(1.5) {
            Err(Error::OutOfRange { min, max, .. }) => {
                assert_eq!((min, max), (-1.0, 1.0));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn node_values_and_linear_path() {
        let p = WienerPath::sample(5, -1.0, 1.0, 0.125).unwrap();
        assert_eq!(p.omega(0.25).unwrap(), p.samples()[p.zero_index() + 2]);
        let lin = WienerPath::from_fn(-1.0, 1.0, 0.125, |t| t).unwrap();
        assert!((lin.omega(0.3).unwrap() - 0.3).abs() < 1e-15);
    }

    #[test]
    fn colored_on_analytic_paths() {
        let c = -2.75;
        let lin = WienerPath::from_fn(-2.0, 6.0, 0.01, |t| c * t).unwrap();
        for &t in &[-1.5, 0.0, 0.333, 4.9] {
            assert!((lin.colored(0.2, t).unwrap() - c).abs() < 1e-12);
        }
        let quad = WienerPath::from_fn(-2.0, 6.0, 0.01, |t| t * t).unwrap();
        for &t in &[0.0, 1.0, 3.27] {
            assert!((quad.colored(0.1, t).unwrap() - (2.0 * t + 0.1)).abs() < 1e-9);
        }
    }

    #[test]
    fn colored_matches_direct_difference_quotient() {
        let p = WienerPath::sample(19, -2.0, 3.0, 0.001).unwrap();
        let z = p.colored(0.1, 1.0).unwrap();
        let direct = (p.omega(1.1).unwrap() - p.omega(1.0).unwrap()) / 0.1;
        assert_eq!(z, direct);
        assert!(p.colored(0.1005, 1.0).is_err());
    }

    #[test]
    fn integral_on_quadratic_path() {
        let quad = WienerPath::from_fn(-1.0, 6.0, 0.001, |t| t * t).unwrap();
        for &t in &[0.0, 1.0, 2.5, 5.0] {
            let want = t * t + 0.1 * t;
            assert!((quad.integral_colored(0.1, t).unwrap() - want).abs() < 1e-9);
        }
    }

    #[test]
    fn integral_matches_refined_riemann_sum() {
        // Trapezoid sum of Z on a 10x refined grid; the integrand is linear
        // between nodes so the sum is exact up to rounding.
        let p = WienerPath::sample(23, -1.0, 3.0, 0.01).unwrap();
        let (delta, t) = (0.05, 1.37);
        let m = 13_700;
        let step = t / m as f64;
        let mut sum = 0.0;
        for j in 0..=m {
            let w = if j == 0 || j == m { 0.5 } else { 1.0 };
            sum += w * p.colored(delta, j as f64 * step).unwrap();
        }
        sum *= step;
        let got = p.integral_colored(delta, t).unwrap();
        assert!((got - sum).abs() <= 1e-8 * got.abs().max(1.0), "{got} vs {sum}");
    }

    #[test]
    fn ou_y_zero_and_single_step() {
        let z = WienerPath::zero(-10.0, 5.0, 0.01).unwrap();
        let tr = z.ou_y_trace(1.5).unwrap();
        assert_eq!(tr.eval(2.0).unwrap(), 0.0);

        let (amp, tau0, ell) = (0.7, 1.0, 2.0);
        let step = WienerPath::from_fn(-10.0, 5.0, 0.01, |t| if t >= tau0 { amp } else { 0.0 })
            .unwrap();
        let tr = step.ou_y_trace(ell).unwrap();
        // the path ramps up over the cell ending at tau0
        let gain = -(-ell * 0.01f64).exp_m1() / (ell * 0.01);
        for &t in &[1.0, 1.5, 3.0] {
            let want = amp * gain * (-ell * (t - tau0)).exp();
            assert!((tr.eval(t).unwrap() - want).abs() < 1e-12, "t={t}");
        }
        assert_eq!(tr.eval(0.5).unwrap(), 0.0);
    }

    #[test]
    fn ou_y_step_halving() {
        let p = WienerPath::sample(2, -20.0, 5.0, 0.002).unwrap();
        let fine = p.refine(2).unwrap();
        let a = p.ou_y_trace(1.0).unwrap();
        let b = fine.ou_y_trace(1.0).unwrap();
        for &t in &[0.0, 1.234, 4.0] {
            assert!((a.eval(t).unwrap() - b.eval(t).unwrap()).abs() < 0.01);
        }
    }

    #[test]
    fn ou_y_matches_direct_convolution() {
        let p = WienerPath::sample(4, -30.0, 2.0, 0.01).unwrap();
        let ell = 0.8;
        let tr = p.ou_y_trace(ell).unwrap();
        let t = 1.0;
        let it = p.zero_index() + 100;
        let s = p.samples();
        let gain = -(-ell * 0.01f64).exp_m1() / (ell * 0.01);
        let direct: f64 = (0..it)
            .map(|i| gain * (-ell * 0.01 * (it - 1 - i) as f64).exp() * (s[i + 1] - s[i]))
            .sum();
        assert!((tr.eval(t).unwrap() - direct).abs() < 1e-12);
        assert!(!tr.truncation_warning(t));
        assert!(tr.truncation_warning(-29.0));
    }

    #[test]
    fn ou_z_constant_forcing() {
        let (c, ell) = (1.3, 0.5);
        let p = WienerPath::from_fn(-60.0, 2.0, 0.01, |t| c * t).unwrap();
        let tr = p.ou_z_trace(ell, 0.1).unwrap();
        for &t in &[-55.0, -40.0, 0.0, 1.0, 1.555] {
            let want = c / ell * (1.0 - (-ell * (t + 60.0)).exp());
            assert!((tr.eval(t).unwrap() - want).abs() < 1e-11, "t={t}");
        }
    }

    #[test]
    fn ou_z_matches_quadrature_of_convolution() {
        // z(t) = ∫_{t_min}^t e^{-ℓ(t-τ)} Z(τ) dτ via composite Simpson on a fine grid.
        let p = WienerPath::sample(9, -6.0, 2.0, 0.01).unwrap();
        let (ell, delta, t) = (4.0, 0.1, 0.5);
        let tr = p.ou_z_trace(ell, delta).unwrap();
        let a = -6.0;
        let m = 65_000;
        let hq = (t - a) / m as f64;
        let mut sum = 0.0;
        for j in 0..=m {
            let tau = a + j as f64 * hq;
            let w = if j == 0 || j == m {
                1.0
            } else if j % 2 == 1 {
                4.0
            } else {
                2.0
            };
            sum += w * (-ell * (t - tau)).exp() * p.colored(delta, tau).unwrap();
        }
        sum *= hq / 3.0;
        assert!((tr.eval(t).unwrap() - sum).abs() < 1e-5, "{} vs {sum}", tr.eval(t).unwrap());
        // large ℓ: z ≈ Z/ℓ
        let big = p.ou_z_trace(400.0, delta).unwrap();
        let zt = p.colored(delta, t).unwrap();
        assert!((big.eval(t).unwrap() - zt / 400.0).abs() < 0.05 * zt.abs() / 400.0 + 1e-3);
    }

    #[test]
    fn diagnostics_on_quadratic_path() {
        let quad = WienerPath::from_fn(-1.0, 6.0, 0.001, |t| t * t).unwrap();
        let rows =
            noise_diagnostics(&quad, &NoiseParams::default(), 0.0, 5.0, &[0.2, 0.1, 0.05]).unwrap();
        for r in rows {
            assert!((r.sup_wz_error - 5.0 * r.delta).abs() < 1e-6);
        }
    }

    #[test]
    fn window_composition() {
        let p = Arc::new(WienerPath::sample(31, -5.0, 5.0, 0.01).unwrap());
        let w = NoiseWindow::new(p.clone(), 1.0).shift_by(-0.5);
        let direct = NoiseWindow::new(p, 0.5);
        for &tau in &[-1.0, 0.0, 0.77] {
            assert_eq!(w.omega(tau).unwrap(), direct.omega(tau).unwrap());
            assert_eq!(w.omega(0.0).unwrap(), 0.0);
        }
        assert_eq!(w.integral_colored(0.1, 0.0).unwrap(), 0.0);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn integral_at_zero_vanishes(seed in any::<u64>(), k in 1usize..20) {
            let p = WienerPath::sample(seed, -1.0, 3.0, 0.01).unwrap();
            prop_assert_eq!(p.integral_colored(k as f64 * 0.01, 0.0).unwrap(), 0.0);
        }

        #[test]
        fn linear_path_identity(c in -10.0f64..10.0, k in 1usize..50, t in -1.0f64..2.0) {
            let p = WienerPath::from_fn(-1.0, 3.0, 0.02, |s| c * s).unwrap();
            let z = p.colored(k as f64 * 0.02, t).unwrap();
            prop_assert!((z - c).abs() <= 1e-12 * (1.0 + c.abs()) / (k as f64 * 0.02));
        }

        #[test]
        fn shift_consistency(seed in any::<u64>(), shift in -2.0f64..2.0, xi in -1.0f64..1.0) {
            let p = WienerPath::sample(seed, -4.0, 4.0, 0.01).unwrap();
            let shifted = WienerPath::from_fn(-1.0, 1.0, 0.01, |s| {
                p.omega(s + shift).unwrap() - p.omega(shift).unwrap()
            }).unwrap();
            // compare at nodes of the shifted grid, where both are exact
            let xi = (xi / 0.01).round() * 0.01;
            let a = p.shifted(shift, xi).unwrap();
            let b = shifted.omega(xi).unwrap();
            prop_assert!((a - b).abs() < 1e-12);
        }
    }
}
