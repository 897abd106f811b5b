//! Time integration of the Wong-Zakai CBF system
//! `u' + μAu + B(u) + αu + βC(u) = f + S(t, u) Z_δ(θ_t ω)`
//! and the per-step energy ledger used to audit the energy equality.
//!
//! The scheme is an integrating-factor Heun method: the linear part
//! `μ|k|² + α` is integrated exactly and the remaining tendency `N` with a
//! second-order predictor-corrector,
//!
//! ```text
//! u* = E (u_n + dt N(t_n, u_n))
//! u_{n+1} = E (u_n + dt/2 N(t_n, u_n)) + dt/2 N(t_{n+1}, u*),   E = e^{−(μ|k|²+α) dt}.
//! ```
//!
//! Any system exposing its tendency through [`Dynamics`] can be stepped; the
//! transformed additive and multiplicative systems reuse this integrator.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::diffusion::DiffusionTerm;
use crate::error::{Error, Result};
use crate::noise::{NoiseWindow, WienerPath};
use crate::spectral::{lp_integral, nonlinear_terms, TorusGrid, VelocityField};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CbfParams {
    pub mu: f64,
    pub alpha: f64,
    pub beta: f64,
    pub r: f64,
}

impl Default for CbfParams {
    fn default() -> Self {
        CbfParams {
            mu: 0.05,
            alpha: 0.5,
            beta: 0.1,
            r: 3.0,
        }
    }
}

impl CbfParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.mu > 0.0) || !self.mu.is_finite() {
            return Err(Error::param("mu", format!("{} must be positive", self.mu)));
        }
        if !(self.alpha >= 0.0) {
            return Err(Error::param("alpha", format!("{} must be >= 0", self.alpha)));
        }
        if !(self.beta >= 0.0) {
            return Err(Error::param("beta", format!("{} must be >= 0", self.beta)));
        }
        if !(self.r >= 1.0) || !self.r.is_finite() {
            return Err(Error::param("r", format!("{} must be >= 1", self.r)));
        }
        Ok(())
    }

    /// `α = β = 0`: the Navier-Stokes preset, which requires mean-zero fields.
    pub fn is_nse(&self) -> bool {
        self.alpha == 0.0 && self.beta == 0.0
    }
}

/// `f(t) = e^{γ_f t} F`.
#[derive(Debug, Clone, PartialEq)]
pub enum Forcing {
    Zero,
    Constant(VelocityField),
    ExpModulated { field: VelocityField, rate: f64 },
}

impl Forcing {
    pub fn factor(&self, t: f64) -> f64 {
        match self {
            Forcing::Zero => 0.0,
            Forcing::Constant(_) => 1.0,
            Forcing::ExpModulated { rate, .. } => (rate * t).exp(),
        }
    }

    pub fn field(&self) -> Option<&VelocityField> {
        match self {
            Forcing::Zero => None,
            Forcing::Constant(f) | Forcing::ExpModulated { field: f, .. } => Some(f),
        }
    }

    pub fn eval(&self, t: f64, grid: &TorusGrid) -> VelocityField {
        match self.field() {
            None => VelocityField::zeros(grid),
            Some(f) => f.scale(self.factor(t)),
        }
    }

    /// `‖f(t)‖²_{V'}`.
    pub fn dual_norm2(&self, t: f64) -> f64 {
        self.field()
            .map_or(0.0, |f| f.dual_norm2() * self.factor(t).powi(2))
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, Forcing::Zero)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepperConfig {
    pub dt: f64,
    pub substeps: usize,
    /// Store every `store_stride`-th state (the first and last are always kept).
    pub store_stride: usize,
    pub cfl_limit: f64,
    /// Record the energy ledger at every internal step.
    #[serde(default = "yes")]
    pub ledger: bool,
}

fn yes() -> bool {
    true
}

impl Default for StepperConfig {
    fn default() -> Self {
        StepperConfig {
            dt: 1e-3,
            substeps: 1,
            store_stride: 1,
            cfl_limit: 0.5,
            ledger: true,
        }
    }
}

impl StepperConfig {
    pub fn with_dt(dt: f64) -> Self {
        StepperConfig {
            dt,
            ..Default::default()
        }
    }

    /// Same step, keeping only the endpoints and no ledger.
    pub fn endpoint_only(&self) -> Self {
        StepperConfig {
            store_stride: usize::MAX / 2,
            ledger: false,
            ..*self
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return Err(Error::param("dt", format!("{} must be positive", self.dt)));
        }
        if self.substeps == 0 || self.store_stride == 0 {
            return Err(Error::param("substeps/store_stride", "must be >= 1"));
        }
        Ok(())
    }
}

/// The explicit part of the right-hand side, split by physical origin.
/// Signs are included, so `total = convective + damping + forcing + noise`.
#[derive(Debug, Clone)]
pub struct Tendency {
    pub convective: VelocityField,
    pub damping: VelocityField,
    pub forcing: VelocityField,
    pub noise: VelocityField,
    /// Largest advecting speed, for the CFL guard.
    pub max_speed: f64,
}

impl Tendency {
    pub fn total(&self) -> VelocityField {
        let mut t = self.convective.clone();
        t.axpy(1.0, &self.damping);
        t.axpy(1.0, &self.forcing);
        t.axpy(1.0, &self.noise);
        t
    }

    pub fn powers(&self, u: &VelocityField) -> Powers {
        Powers {
            conv: self.convective.inner(u),
            damp: self.damping.inner(u),
            forc: self.forcing.inner(u),
            noise: self.noise.inner(u),
        }
    }
}

/// `(part, u)_H` for each tendency part.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct Powers {
    pub conv: f64,
    pub damp: f64,
    pub forc: f64,
    pub noise: f64,
}

impl Powers {
    pub fn sum(&self) -> f64 {
        self.conv + self.damp + self.forc + self.noise
    }
}

pub trait Dynamics: Sync {
    fn grid(&self) -> &TorusGrid;
    fn viscosity(&self) -> f64;
    fn damping(&self) -> f64;
    /// Exponent `r` used for the `‖u‖^{r+1}_{L^{r+1}}` ledger column.
    fn exponent(&self) -> f64;

    fn requires_mean_zero(&self) -> bool {
        false
    }

    /// If `Some(tc)`, all stages of the step starting at `t0` evaluate their
    /// time-dependent coefficients at `tc`.
    fn frozen_time(&self, _t0: f64, _dt: f64) -> Option<f64> {
        None
    }

    fn tendency(&self, t: f64, u: &VelocityField) -> Result<Tendency>;

    /// Powers at the actual time `t`. `frozen` carries a tendency already
    /// evaluated at `u` with coefficients frozen at another time.
    fn powers_at(
        &self,
        t: f64,
        u: &VelocityField,
        _frozen: Option<(f64, &Tendency)>,
    ) -> Result<Powers> {
        Ok(self.tendency(t, u)?.powers(u))
    }
}

fn integrating_factor(u: &VelocityField, mu: f64, alpha: f64, dt: f64) -> VelocityField {
    u.apply_symbol(|k2| (-(mu * k2 + alpha) * dt).exp())
}

fn cfl_check(t: f64, speed: f64, grid: &TorusGrid, dt: f64, limit: f64) -> Result<()> {
    let courant = dt * speed * grid.k_max();
    if courant > limit {
        return Err(Error::CflViolation { t, courant, limit });
    }
    Ok(())
}

/// One integrating-factor Heun step from `t` to `t + dt`. Returns the new
/// state and the tendency evaluated at `(t, u)`.
pub fn if_heun_step<D: Dynamics + ?Sized>(
    sys: &D,
    t: f64,
    u: &VelocityField,
    dt: f64,
    cfl_limit: f64,
) -> Result<(VelocityField, Tendency)> {
    let (mu, alpha) = (sys.viscosity(), sys.damping());
    let frozen = sys.frozen_time(t, dt);
    let n0 = sys.tendency(frozen.unwrap_or(t), u)?;
    cfl_check(t, n0.max_speed, sys.grid(), dt, cfl_limit)?;
    let n0_total = n0.total();

    let mut pred = u.clone();
    pred.axpy(dt, &n0_total);
    let pred = integrating_factor(&pred, mu, alpha, dt);
    if !pred.is_finite() {
        return Err(Error::NonFinite { last_valid_time: t });
    }
    let n1 = sys.tendency(frozen.unwrap_or(t + dt), &pred)?;
    cfl_check(t + dt, n1.max_speed, sys.grid(), dt, cfl_limit)?;

    let mut base = u.clone();
    base.axpy(0.5 * dt, &n0_total);
    let mut next = integrating_factor(&base, mu, alpha, dt);
    next.axpy(0.5 * dt, &n1.total());
    if !next.is_finite() {
        return Err(Error::NonFinite { last_valid_time: t });
    }
    Ok((next, n0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LedgerEntry {
    pub time: f64,
    pub h_norm2: f64,
    pub grad_norm2: f64,
    pub v_norm2: f64,
    /// `‖u‖^{r+1}_{L^{r+1}}`.
    pub lr_norm: f64,
    pub powers: Powers,
}

fn ledger_entry(t: f64, u: &VelocityField, r: f64, powers: Powers) -> LedgerEntry {
    let h = u.h_norm2();
    let g = u.grad_norm2();
    LedgerEntry {
        time: t,
        h_norm2: h,
        grad_norm2: g,
        v_norm2: h + g,
        lr_norm: lp_integral(u.grid(), &u.to_physical(), r + 1.0),
        powers,
    }
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<VelocityField>,
    pub ledger: Vec<LedgerEntry>,
    /// Internal step size.
    pub step: f64,
    pub mu: f64,
    pub alpha: f64,
}

impl Trajectory {
    pub fn final_state(&self) -> &VelocityField {
        self.states.last().expect("trajectory holds at least the initial state")
    }
    pub fn final_time(&self) -> f64 {
        *self.times.last().expect("non-empty")
    }
}

/// Number of whole steps of size `dt` in `horizon`.
pub fn step_count(horizon: f64, dt: f64) -> Result<usize> {
    if !(horizon >= 0.0) {
        return Err(Error::param("T", format!("{horizon} must be >= 0")));
    }
    let k = (horizon / dt).round();
    if (k * dt - horizon).abs() > 1e-9 * horizon.max(1.0) {
        return Err(Error::param(
            "T",
            format!("{horizon} is not a multiple of dt = {dt}"),
        ));
    }
    Ok(k as usize)
}

/// Integrates on `[s, s + horizon]`, recording the ledger at every internal
/// step and states at the configured stride.
pub fn integrate<D: Dynamics + ?Sized>(
    sys: &D,
    s: f64,
    horizon: f64,
    u_s: &VelocityField,
    cfg: &StepperConfig,
) -> Result<Trajectory> {
    cfg.validate()?;
    if u_s.grid() != sys.grid() {
        return Err(Error::GridMismatch {
            left: format!("{:?}", sys.grid()),
            right: format!("{:?}", u_s.grid()),
        });
    }
    if sys.requires_mean_zero() {
        let m = u_s.mean();
        if m[0].abs() > 1e-12 || m[1].abs() > 1e-12 {
            return Err(Error::param(
                "u_s",
                "the Navier-Stokes preset (alpha = beta = 0) needs a mean-zero field",
            ));
        }
    }
    let outer = step_count(horizon, cfg.dt)?;
    let n = outer * cfg.substeps;
    let h = cfg.dt / cfg.substeps as f64;
    let r = sys.exponent();

    let mut u = u_s.clone();
    let mut traj = Trajectory {
        times: vec![s],
        states: vec![u.clone()],
        ledger: Vec::with_capacity(n + 1),
        step: h,
        mu: sys.viscosity(),
        alpha: sys.damping(),
    };
    for i in 0..n {
        let t = s + i as f64 * h;
        let (next, n0) = if_heun_step(sys, t, &u, h, cfg.cfl_limit)?;
        if cfg.ledger {
            let powers = match sys.frozen_time(t, h) {
                None => n0.powers(&u),
                Some(tc) => sys.powers_at(t, &u, Some((tc, &n0)))?,
            };
            traj.ledger.push(ledger_entry(t, &u, r, powers));
        }
        u = next;
        let done = i + 1;
        if done % (cfg.store_stride * cfg.substeps) == 0 || done == n {
            traj.times.push(s + done as f64 * h);
            traj.states.push(u.clone());
        }
    }
    if cfg.ledger {
        let t_end = s + n as f64 * h;
        let powers = sys.powers_at(t_end, &u, None)?;
        traj.ledger.push(ledger_entry(t_end, &u, r, powers));
    }
    Ok(traj)
}

/// Cumulative integrals `∫_{t_0}^{t_n} f` on a uniform grid: trapezoid sums
/// with Gregory end corrections through second differences.
pub fn cumulative_gregory(f: &[f64], h: f64) -> Vec<f64> {
    let mut out = vec![0.0; f.len()];
    let mut trap = 0.0;
    for n in 1..f.len() {
        trap += 0.5 * h * (f[n - 1] + f[n]);
        out[n] = if n >= 4 {
            let back1 = f[n] - f[n - 1];
            let fwd1 = f[1] - f[0];
            let back2 = f[n] - 2.0 * f[n - 1] + f[n - 2];
            let fwd2 = f[2] - 2.0 * f[1] + f[0];
            trap - h / 12.0 * (back1 - fwd1) - h / 24.0 * (back2 + fwd2)
        } else {
            trap
        };
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnergyRow {
    pub time: f64,
    pub h_norm2: f64,
    pub grad_norm2: f64,
    pub lr_norm: f64,
    pub work_f: f64,
    pub work_s: f64,
    /// Normalized residual of the gradient-form energy equality.
    pub residual: f64,
    /// Same with the dissipation written as `2μ∫‖u‖²_V`; reported only.
    pub residual_v_form: f64,
}

/// Residual of
/// `‖u(t)‖² + 2μ∫‖∇u‖² + 2α∫‖u‖² − 2∫(N, u) = ‖u_s‖²`
/// at every ledger time, normalized by `max(1, ‖u_s‖²)`. With the
/// ledger split, `(N, u)` includes `−β∫|u|^{r+1}`, `(f, u)` and `(S Z, u)`.
pub fn energy_residual(traj: &Trajectory) -> Result<Vec<EnergyRow>> {
    let led = &traj.ledger;
    if led.is_empty() {
        return Err(Error::IncompleteLedger("no entries".into()));
    }
    let expected = (traj.final_time() - traj.times[0]) / traj.step;
    if (led.len() as f64 - 1.0 - expected).abs() > 1e-6 {
        return Err(Error::IncompleteLedger(format!(
            "{} entries for {} steps",
            led.len(),
            expected.round()
        )));
    }
    let h = traj.step;
    let col = |f: &dyn Fn(&LedgerEntry) -> f64| cumulative_gregory(&led.iter().map(f).collect::<Vec<_>>(), h);
    let grad = col(&|e| e.grad_norm2);
    let vv = col(&|e| e.v_norm2);
    let hh = col(&|e| e.h_norm2);
    let pw = col(&|e| e.powers.sum());
    let wf = col(&|e| e.powers.forc);
    let ws = col(&|e| e.powers.noise);
    let e0 = led[0].h_norm2;
    let norm = e0.max(1.0);
    Ok(led
        .iter()
        .enumerate()
        .map(|(i, e)| {
            let base = e.h_norm2 - e0 + 2.0 * traj.alpha * hh[i] - 2.0 * pw[i];
            EnergyRow {
                time: e.time,
                h_norm2: e.h_norm2,
                grad_norm2: e.grad_norm2,
                lr_norm: e.lr_norm,
                work_f: wf[i],
                work_s: ws[i],
                residual: (base + 2.0 * traj.mu * grad[i]).abs() / norm,
                residual_v_form: (base + 2.0 * traj.mu * vv[i]).abs() / norm,
            }
        })
        .collect())
}

/// The Wong-Zakai random CBF system on a noise window.
#[derive(Debug, Clone)]
pub struct WzCbf {
    pub grid: TorusGrid,
    pub params: CbfParams,
    pub forcing: Forcing,
    pub diffusion: DiffusionTerm,
    pub delta: f64,
    pub window: NoiseWindow,
}

impl WzCbf {
    pub fn new(
        grid: &TorusGrid,
        params: CbfParams,
        forcing: Forcing,
        diffusion: DiffusionTerm,
        delta: f64,
        window: NoiseWindow,
    ) -> Result<Self> {
        params.validate()?;
        if !(delta > 0.0 && delta <= 1.0) {
            return Err(Error::param("delta", format!("{delta} not in (0, 1]")));
        }
        Ok(WzCbf {
            grid: grid.clone(),
            params,
            forcing,
            diffusion,
            delta,
            window,
        })
    }

    pub fn with_window(&self, window: NoiseWindow) -> Self {
        WzCbf {
            window,
            ..self.clone()
        }
    }
}

impl Dynamics for WzCbf {
    fn grid(&self) -> &TorusGrid {
        &self.grid
    }
    fn viscosity(&self) -> f64 {
        self.params.mu
    }
    fn damping(&self) -> f64 {
        self.params.alpha
    }
    fn exponent(&self) -> f64 {
        self.params.r
    }
    fn requires_mean_zero(&self) -> bool {
        self.params.is_nse()
    }

    fn tendency(&self, t: f64, u: &VelocityField) -> Result<Tendency> {
        let beta = self.params.beta;
        let nl = nonlinear_terms(u, (beta > 0.0).then_some(self.params.r))?;
        let damping = match nl.c {
            Some(c) => c.scale(-beta),
            None => VelocityField::zeros(&self.grid),
        };
        let noise = if self.diffusion.is_zero() {
            VelocityField::zeros(&self.grid)
        } else {
            let z = self.window.colored(self.delta, t)?;
            if z == 0.0 {
                VelocityField::zeros(&self.grid)
            } else {
                self.diffusion.eval(t, u)?.scale(z)
            }
        };
        Ok(Tendency {
            convective: nl.b.scale(-1.0),
            damping,
            forcing: self.forcing.eval(t, &self.grid),
            noise,
            max_speed: nl.max_speed,
        })
    }
}

/// One step of the Wong-Zakai system.
pub fn step_wz(sys: &WzCbf, t: f64, u: &VelocityField, cfg: &StepperConfig) -> Result<VelocityField> {
    Ok(if_heun_step(sys, t, u, cfg.dt, cfg.cfl_limit)?.0)
}

/// `Φ(t, s, ω, u_s) = u(t + s; s, θ_{−s} ω, u_s)` for a system built from a
/// noise window by `make`.
pub fn cocycle_eval<D: Dynamics>(
    t: f64,
    s: f64,
    path: &Arc<WienerPath>,
    u_s: &VelocityField,
    make: impl Fn(NoiseWindow) -> D,
    cfg: &StepperConfig,
) -> Result<VelocityField> {
    let sys = make(NoiseWindow::new(Arc::clone(path), -s));
    let traj = integrate(&sys, s, t, u_s, &cfg.endpoint_only())?;
    Ok(traj.final_state().clone())
}
