//! Random transformations that turn additive and multiplicative noise into
//! pathwise PDEs, their transformed dynamics, and the δ → 0 solution
//! convergence experiment.
//!
//! Additive noise `e^{σt} g dW`: with `η` the OU process `y` (white) or `z_δ`
//! (Wong-Zakai), `v = u − e^{σt} g η(t)` solves
//! `v' + μAv + B(v+G) + αv + βC(v+G) = f + (ℓ−σ−α)G − μ e^{σt} η Ag`, `G = e^{σt} g η`.
//!
//! Multiplicative noise `u ∘ dW`: with `W = ω(t)` (white) or `∫_0^t Z_δ`
//! (Wong-Zakai), `v = e^{−W} u` solves
//! `v' + μAv + e^{W}B(v) + αv + βe^{(r−1)W}C(v) = e^{−W} f`.
//!
//! Scalar drivers are read on a shifted path `θ_shift ω`; the cocycle and the
//! pullback runs use `shift = −s` for an equation started at time `s`.

use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};

use crate::diffusion::DiffusionTerm;
use crate::dynamics::{
    integrate, CbfParams, Dynamics, Forcing, Powers, StepperConfig, Tendency, Trajectory, WzCbf,
};
use crate::error::{Error, Result};
use crate::noise::{NoiseWindow, OuTrace, WienerPath};
use crate::spectral::{nonlinear_terms, taylor_green, TorusGrid, VelocityField};

/// Largest admissible `|W|` in the multiplicative coefficients.
pub const COEFFICIENT_LIMIT: f64 = 30.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseMode {
    White,
    Colored(f64),
}

impl NoiseMode {
    pub fn delta(&self) -> Option<f64> {
        match self {
            NoiseMode::White => None,
            NoiseMode::Colored(d) => Some(*d),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransformKind {
    Additive,
    Multiplicative,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdditiveProfile {
    pub g: VelocityField,
    pub sigma: f64,
    pub ell: f64,
}

impl AdditiveProfile {
    pub fn new(g: VelocityField, sigma: f64, ell: f64) -> Result<Self> {
        if !(sigma >= 0.0) {
            return Err(Error::param("sigma", "must be >= 0"));
        }
        if !(ell > 0.0) {
            return Err(Error::param("ell", "must be positive"));
        }
        if g.divergence_max() > 1e-10 {
            return Err(Error::param("g", "must be divergence-free"));
        }
        Ok(AdditiveProfile { g, sigma, ell })
    }

    /// Taylor-Green vortex normalized to `‖g‖_H = 1`.
    pub fn taylor_green(grid: &TorusGrid, sigma: f64, ell: f64) -> Result<Self> {
        let g = taylor_green(grid, 1.0);
        let g = g.scale(1.0 / g.h_norm());
        Self::new(g, sigma, ell)
    }
}

/// A path with lazily built OU traces, shared across runs.
#[derive(Debug)]
pub struct NoiseSource {
    pub path: Arc<WienerPath>,
    ell: f64,
    y: Mutex<Option<Arc<OuTrace>>>,
    z: Mutex<Vec<(f64, Arc<OuTrace>)>>,
}

impl NoiseSource {
    pub fn new(path: Arc<WienerPath>, ell: f64) -> Self {
        NoiseSource {
            path,
            ell,
            y: Mutex::new(None),
            z: Mutex::new(Vec::new()),
        }
    }

    pub fn ell(&self) -> f64 {
        self.ell
    }

    pub fn y(&self) -> Result<Arc<OuTrace>> {
        let mut slot = self.y.lock().expect("poisoned");
        if let Some(t) = slot.as_ref() {
            return Ok(Arc::clone(t));
        }
        let t = Arc::new(self.path.ou_y_trace(self.ell)?);
        *slot = Some(Arc::clone(&t));
        Ok(t)
    }

    pub fn z(&self, delta: f64) -> Result<Arc<OuTrace>> {
        let mut list = self.z.lock().expect("poisoned");
        if let Some((_, t)) = list.iter().find(|(d, _)| *d == delta) {
            return Ok(Arc::clone(t));
        }
        let t = Arc::new(self.path.ou_z_trace(self.ell, delta)?);
        list.push((delta, Arc::clone(&t)));
        Ok(t)
    }

    /// Driver of the transformation for `kind` and `mode` on `θ_shift ω`.
    pub fn driver(&self, kind: TransformKind, mode: NoiseMode, shift: f64) -> Result<ShiftedDriver> {
        let driver = match (kind, mode) {
            (TransformKind::Additive, NoiseMode::White) => Driver::Ou(self.y()?),
            (TransformKind::Additive, NoiseMode::Colored(d)) => Driver::Ou(self.z(d)?),
            (TransformKind::Multiplicative, NoiseMode::White) => Driver::Omega(Arc::clone(&self.path)),
            (TransformKind::Multiplicative, NoiseMode::Colored(d)) => {
                Driver::IntegralZ(Arc::clone(&self.path), d)
            }
        };
        Ok(ShiftedDriver { driver, shift })
    }
}

#[derive(Debug, Clone)]
pub enum Driver {
    /// Stationary OU process (`y` or `z_δ`), read at `τ + shift`.
    Ou(Arc<OuTrace>),
    /// `ω(τ + shift) − ω(shift)`.
    Omega(Arc<WienerPath>),
    /// `∫_0^τ Z_δ(θ_{ξ+shift} ω) dξ`.
    IntegralZ(Arc<WienerPath>, f64),
}

#[derive(Debug, Clone)]
pub struct ShiftedDriver {
    pub driver: Driver,
    pub shift: f64,
}

impl ShiftedDriver {
    pub fn eval(&self, tau: f64) -> Result<f64> {
        let s = self.shift;
        match &self.driver {
            Driver::Ou(tr) => tr.eval(tau + s),
            Driver::Omega(p) => p.shifted(s, tau),
            Driver::IntegralZ(p, d) => Ok(p.integral_colored(*d, tau + s)? - p.integral_colored(*d, s)?),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransformMode {
    AdditiveWhite,
    AdditiveWz(f64),
    MultiplicativeWhite,
    MultiplicativeWz(f64),
}

impl TransformMode {
    pub fn new(kind: TransformKind, mode: NoiseMode) -> Self {
        match (kind, mode) {
            (TransformKind::Additive, NoiseMode::White) => TransformMode::AdditiveWhite,
            (TransformKind::Additive, NoiseMode::Colored(d)) => TransformMode::AdditiveWz(d),
            (TransformKind::Multiplicative, NoiseMode::White) => TransformMode::MultiplicativeWhite,
            (TransformKind::Multiplicative, NoiseMode::Colored(d)) => TransformMode::MultiplicativeWz(d),
        }
    }

    pub fn kind(&self) -> TransformKind {
        match self {
            TransformMode::AdditiveWhite | TransformMode::AdditiveWz(_) => TransformKind::Additive,
            _ => TransformKind::Multiplicative,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransformedState {
    pub v: VelocityField,
    pub t: f64,
    pub mode: TransformMode,
}

/// `v = u − e^{σt} g η(t)`.
pub fn to_v_additive(
    u: &VelocityField,
    t: f64,
    driver: &ShiftedDriver,
    profile: &AdditiveProfile,
    mode: TransformMode,
) -> Result<TransformedState> {
    if mode.kind() != TransformKind::Additive {
        return Err(Error::ModeMismatch {
            expected: "additive".into(),
            found: format!("{mode:?}"),
        });
    }
    let mut v = u.clone();
    v.axpy(-(profile.sigma * t).exp() * driver.eval(t)?, &profile.g);
    Ok(TransformedState { v, t, mode })
}

fn multiplicative_exponent(driver: &ShiftedDriver, t: f64) -> Result<f64> {
    let w = driver.eval(t)?;
    if w.abs() > COEFFICIENT_LIMIT {
        return Err(Error::CoefficientOverflow {
            t,
            exponent: w.abs(),
            limit: COEFFICIENT_LIMIT,
        });
    }
    Ok(w)
}

/// `v = e^{−W(t)} u`.
pub fn to_v_multiplicative(
    u: &VelocityField,
    t: f64,
    driver: &ShiftedDriver,
    mode: TransformMode,
) -> Result<TransformedState> {
    if mode.kind() != TransformKind::Multiplicative {
        return Err(Error::ModeMismatch {
            expected: "multiplicative".into(),
            found: format!("{mode:?}"),
        });
    }
    let w = multiplicative_exponent(driver, t)?;
    Ok(TransformedState {
        v: u.scale((-w).exp()),
        t,
        mode,
    })
}

/// Inverse transformation at the state's time.
pub fn reconstruct_u(
    state: &TransformedState,
    driver: &ShiftedDriver,
    profile: Option<&AdditiveProfile>,
) -> Result<VelocityField> {
    match state.mode.kind() {
        TransformKind::Additive => {
            let p = profile.ok_or_else(|| Error::ModeMismatch {
                expected: "additive profile".into(),
                found: "none".into(),
            })?;
            let mut u = state.v.clone();
            u.axpy((p.sigma * state.t).exp() * driver.eval(state.t)?, &p.g);
            Ok(u)
        }
        TransformKind::Multiplicative => {
            Ok(state.v.scale(multiplicative_exponent(driver, state.t)?.exp()))
        }
    }
}

/// The transformed additive system.
#[derive(Debug, Clone)]
pub struct AdditiveSystem {
    grid: TorusGrid,
    params: CbfParams,
    forcing: Forcing,
    profile: AdditiveProfile,
    ag: VelocityField,
    driver: ShiftedDriver,
}

impl AdditiveSystem {
    pub fn new(
        params: CbfParams,
        forcing: Forcing,
        profile: AdditiveProfile,
        driver: ShiftedDriver,
    ) -> Result<Self> {
        params.validate()?;
        let ag = profile.g.stokes();
        Ok(AdditiveSystem {
            grid: profile.g.grid().clone(),
            params,
            forcing,
            profile,
            ag,
            driver,
        })
    }
}

impl Dynamics for AdditiveSystem {
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

    fn tendency(&self, t: f64, v: &VelocityField) -> Result<Tendency> {
        let p = &self.params;
        let amp = (self.profile.sigma * t).exp() * self.driver.eval(t)?;
        let big_g = self.profile.g.scale(amp);
        let w = v + &big_g;
        let nl = nonlinear_terms(&w, (p.beta > 0.0).then_some(p.r))?;
        let damping = match nl.c {
            Some(c) => c.scale(-p.beta),
            None => VelocityField::zeros(&self.grid),
        };
        let mut noise = big_g.scale(self.profile.ell - self.profile.sigma - p.alpha);
        noise.axpy(-p.mu * amp, &self.ag);
        Ok(Tendency {
            convective: nl.b.scale(-1.0),
            damping,
            forcing: self.forcing.eval(t, &self.grid),
            noise,
            max_speed: nl.max_speed,
        })
    }
}

/// The transformed multiplicative system, with coefficients frozen at the
/// midpoint of each step.
#[derive(Debug, Clone)]
pub struct MultiplicativeSystem {
    grid: TorusGrid,
    params: CbfParams,
    forcing: Forcing,
    driver: ShiftedDriver,
}

impl MultiplicativeSystem {
    pub fn new(grid: &TorusGrid, params: CbfParams, forcing: Forcing, driver: ShiftedDriver) -> Result<Self> {
        params.validate()?;
        Ok(MultiplicativeSystem {
            grid: grid.clone(),
            params,
            forcing,
            driver,
        })
    }
}

impl Dynamics for MultiplicativeSystem {
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
    fn frozen_time(&self, t0: f64, dt: f64) -> Option<f64> {
        Some(t0 + 0.5 * dt)
    }

    fn tendency(&self, t: f64, v: &VelocityField) -> Result<Tendency> {
        let p = &self.params;
        let w = multiplicative_exponent(&self.driver, t)?;
        let nl = nonlinear_terms(v, (p.beta > 0.0).then_some(p.r))?;
        let damping = match nl.c {
            Some(c) => c.scale(-p.beta * ((p.r - 1.0) * w).exp()),
            None => VelocityField::zeros(&self.grid),
        };
        Ok(Tendency {
            convective: nl.b.scale(-w.exp()),
            damping,
            forcing: self.forcing.eval(t, &self.grid).scale((-w).exp()),
            noise: VelocityField::zeros(&self.grid),
            max_speed: w.exp() * nl.max_speed,
        })
    }

    fn powers_at(&self, t: f64, v: &VelocityField, frozen: Option<(f64, &Tendency)>) -> Result<Powers> {
        let Some((tc, tend)) = frozen else {
            return Ok(self.tendency(t, v)?.powers(v));
        };
        let (wt, wc) = (
            multiplicative_exponent(&self.driver, t)?,
            multiplicative_exponent(&self.driver, tc)?,
        );
        let p = tend.powers(v);
        let fc = self.forcing.factor(tc);
        let forc = if fc == 0.0 {
            0.0
        } else {
            p.forc * self.forcing.factor(t) / fc * (wc - wt).exp()
        };
        Ok(Powers {
            conv: p.conv * (wt - wc).exp(),
            damp: p.damp * ((self.params.r - 1.0) * (wt - wc)).exp(),
            forc,
            noise: 0.0,
        })
    }
}

/// A system description in `u` variables; transformed systems are
/// integrated in `v` and mapped back.
#[derive(Debug, Clone)]
pub enum SystemSpec {
    WongZakai {
        params: CbfParams,
        forcing: Forcing,
        diffusion: DiffusionTerm,
        delta: f64,
    },
    Additive {
        params: CbfParams,
        forcing: Forcing,
        profile: AdditiveProfile,
        mode: NoiseMode,
    },
    Multiplicative {
        params: CbfParams,
        forcing: Forcing,
        mode: NoiseMode,
    },
}

/// Outcome of [`SystemSpec::evolve`].
#[derive(Debug, Clone)]
pub struct Evolution {
    /// Trajectory of the integrated variable (`u` for Wong-Zakai, `v` otherwise).
    pub trajectory: Trajectory,
    pub u_final: VelocityField,
}

impl SystemSpec {
    pub fn params(&self) -> &CbfParams {
        match self {
            SystemSpec::WongZakai { params, .. }
            | SystemSpec::Additive { params, .. }
            | SystemSpec::Multiplicative { params, .. } => params,
        }
    }

    pub fn forcing(&self) -> &Forcing {
        match self {
            SystemSpec::WongZakai { forcing, .. }
            | SystemSpec::Additive { forcing, .. }
            | SystemSpec::Multiplicative { forcing, .. } => forcing,
        }
    }

    /// Same system with the noise mode replaced (transformed systems only).
    pub fn with_mode(&self, mode: NoiseMode) -> Self {
        match self.clone() {
            SystemSpec::Additive { params, forcing, profile, .. } => SystemSpec::Additive {
                params,
                forcing,
                profile,
                mode,
            },
            SystemSpec::Multiplicative { params, forcing, .. } => {
                SystemSpec::Multiplicative { params, forcing, mode }
            }
            other => other,
        }
    }

    /// Integrates from `u_s` at time `s` over `horizon`, with the noise read on
    /// `θ_shift ω`.
    pub fn evolve(
        &self,
        source: &NoiseSource,
        shift: f64,
        s: f64,
        horizon: f64,
        u_s: &VelocityField,
        cfg: &StepperConfig,
    ) -> Result<Evolution> {
        let end = s + horizon;
        match self {
            SystemSpec::WongZakai {
                params,
                forcing,
                diffusion,
                delta,
            } => {
                let sys = WzCbf::new(
                    u_s.grid(),
                    *params,
                    forcing.clone(),
                    diffusion.clone(),
                    *delta,
                    NoiseWindow::new(Arc::clone(&source.path), shift),
                )?;
                let trajectory = integrate(&sys, s, horizon, u_s, cfg)?;
                let u_final = trajectory.final_state().clone();
                Ok(Evolution { trajectory, u_final })
            }
            SystemSpec::Additive {
                params,
                forcing,
                profile,
                mode,
            } => {
                let tmode = TransformMode::new(TransformKind::Additive, *mode);
                let driver = source.driver(TransformKind::Additive, *mode, shift)?;
                let v0 = to_v_additive(u_s, s, &driver, profile, tmode)?;
                let sys = AdditiveSystem::new(*params, forcing.clone(), profile.clone(), driver.clone())?;
                let trajectory = integrate(&sys, s, horizon, &v0.v, cfg)?;
                let state = TransformedState {
                    v: trajectory.final_state().clone(),
                    t: end,
                    mode: tmode,
                };
                let u_final = reconstruct_u(&state, &driver, Some(profile))?;
                Ok(Evolution { trajectory, u_final })
            }
            SystemSpec::Multiplicative { params, forcing, mode } => {
                let tmode = TransformMode::new(TransformKind::Multiplicative, *mode);
                let driver = source.driver(TransformKind::Multiplicative, *mode, shift)?;
                let v0 = to_v_multiplicative(u_s, s, &driver, tmode)?;
                let sys = MultiplicativeSystem::new(u_s.grid(), *params, forcing.clone(), driver.clone())?;
                let trajectory = integrate(&sys, s, horizon, &v0.v, cfg)?;
                let state = TransformedState {
                    v: trajectory.final_state().clone(),
                    t: end,
                    mode: tmode,
                };
                let u_final = reconstruct_u(&state, &driver, None)?;
                Ok(Evolution { trajectory, u_final })
            }
        }
    }

    /// `Φ(t, s, ω, u_s) = u(t + s; s, θ_{−s} ω, u_s)`.
    pub fn cocycle(
        &self,
        source: &NoiseSource,
        t: f64,
        s: f64,
        u_s: &VelocityField,
        cfg: &StepperConfig,
    ) -> Result<VelocityField> {
        let cfg = cfg.endpoint_only();
        Ok(self.evolve(source, -s, s, t, u_s, &cfg)?.u_final)
    }
}

/// One step of the transformed additive system from `state`.
pub fn step_cscbf_add(
    state: &TransformedState,
    sys: &AdditiveSystem,
    cfg: &StepperConfig,
) -> Result<TransformedState> {
    let (v, _) = crate::dynamics::if_heun_step(sys, state.t, &state.v, cfg.dt, cfg.cfl_limit)?;
    Ok(TransformedState {
        v,
        t: state.t + cfg.dt,
        mode: state.mode,
    })
}

/// One step of the transformed multiplicative system from `state`.
pub fn step_cscbf_multi(
    state: &TransformedState,
    sys: &MultiplicativeSystem,
    cfg: &StepperConfig,
) -> Result<TransformedState> {
    let (v, _) = crate::dynamics::if_heun_step(sys, state.t, &state.v, cfg.dt, cfg.cfl_limit)?;
    Ok(TransformedState {
        v,
        t: state.t + cfg.dt,
        mode: state.mode,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConvergenceRow {
    pub delta: f64,
    pub error_h: f64,
    /// `e(previous δ) / e(δ)`; absent on the first row.
    pub ratio_to_previous: Option<f64>,
}

/// `e(δ) = ‖u_δ(s+T) − u(s+T)‖_H` for a transformed system, white versus
/// Wong-Zakai, on the cocycle window `θ_{−s} ω`. Rows follow `delta_list`.
pub fn wz_solution_convergence(
    spec: &SystemSpec,
    source: &NoiseSource,
    delta_list: &[f64],
    s: f64,
    horizon: f64,
    u_s: &VelocityField,
    cfg: &StepperConfig,
) -> Result<Vec<ConvergenceRow>> {
    if matches!(spec, SystemSpec::WongZakai { .. }) {
        return Err(Error::param("spec", "convergence needs a transformed system"));
    }
    let reference = spec.with_mode(NoiseMode::White).cocycle(source, horizon, s, u_s, cfg)?;
    let errors = delta_list
        .iter()
        .map(|&d| {
            let u = spec.with_mode(NoiseMode::Colored(d)).cocycle(source, horizon, s, u_s, cfg)?;
            Ok((&u - &reference).h_norm())
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(delta_list
        .iter()
        .enumerate()
        .map(|(i, &delta)| ConvergenceRow {
            delta,
            error_h: errors[i],
            ratio_to_previous: (i > 0).then(|| errors[i - 1] / errors[i]),
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::energy_residual;
    use crate::spectral::random_field;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn grid() -> TorusGrid {
        TorusGrid::periodic(16).unwrap()
    }

    fn params() -> CbfParams {
        CbfParams { mu: 0.05, alpha: 0.5, beta: 0.2, r: 3.0 }
    }

    fn source(seed: u64) -> NoiseSource {
        NoiseSource::new(Arc::new(WienerPath::sample(seed, -30.0, 6.0, 0.01).unwrap()), 1.0)
    }

    fn ic(seed: u64) -> VelocityField {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        random_field(&grid(), &mut rng, 1.0, 2.0, false)
    }

    #[test]
    fn additive_round_trip_and_linearity() {
        let g = grid();
        let src = source(1);
        let prof = AdditiveProfile::taylor_green(&g, 0.3, 1.0).unwrap();
        let u = ic(2);
        let dw = src.driver(TransformKind::Additive, NoiseMode::White, 0.0).unwrap();
        let dz = src.driver(TransformKind::Additive, NoiseMode::Colored(0.1), 0.0).unwrap();
        let t = 1.3;
        let sw = to_v_additive(&u, t, &dw, &prof, TransformMode::AdditiveWhite).unwrap();
        let sz = to_v_additive(&u, t, &dz, &prof, TransformMode::AdditiveWz(0.1)).unwrap();
        assert!((&reconstruct_u(&sw, &dw, Some(&prof)).unwrap() - &u).h_norm() < 1e-12);
        let gap = (&sw.v - &sz.v).h_norm();
        let want = (dw.eval(t).unwrap() - dz.eval(t).unwrap()).abs() * (0.3 * t).exp();
        assert!((gap - want).abs() < 1e-12);
        // scaling g by 2 and the driver by 1/2 gives the same u
        let prof2 = AdditiveProfile::new(prof.g.scale(2.0), 0.3, 1.0).unwrap();
        let half = ShiftedDriver {
            driver: Driver::Ou(Arc::new(src.path.ou_y_trace(1.0).unwrap())),
            shift: 0.0,
        };
        let s2 = TransformedState { v: sw.v.clone(), t, mode: sw.mode };
        let a = reconstruct_u(&s2, &half, Some(&prof)).unwrap();
        let mut b = sw.v.clone();
        b.axpy((0.3 * t).exp() * 0.5 * half.eval(t).unwrap(), &prof2.g);
        assert!((&a - &b).h_norm() < 1e-12);
        assert!(reconstruct_u(&sw, &dw, None).is_err());
    }

    #[test]
    fn multiplicative_round_trip_and_constant_shift() {
        let g = grid();
        let p = Arc::new(WienerPath::from_fn(-1.0, 3.0, 0.01, |t| if t > 0.5 { 0.7 } else { 0.0 }).unwrap());
        let drv = ShiftedDriver { driver: Driver::Omega(p), shift: 0.0 };
        let u = ic(3);
        let st = to_v_multiplicative(&u, 1.0, &drv, TransformMode::MultiplicativeWhite).unwrap();
        assert!((&st.v.scale(0.7f64.exp()) - &u).h_norm() < 1e-12);
        assert!((&reconstruct_u(&st, &drv, None).unwrap() - &u).h_norm() < 1e-12);
        assert!(to_v_multiplicative(&u, 1.0, &drv, TransformMode::AdditiveWhite).is_err());
        let _ = g;
    }

    #[test]
    fn overflow_guard_triggers() {
        let p = Arc::new(WienerPath::from_fn(-1.0, 3.0, 0.01, |t| 40.0 * t).unwrap());
        let drv = ShiftedDriver { driver: Driver::Omega(p), shift: 0.0 };
        let sys = MultiplicativeSystem::new(&grid(), params(), Forcing::Zero, drv).unwrap();
        let u = ic(1).scale(1e-20);
        assert!(sys.tendency(0.7, &u).is_ok());
        assert!(matches!(sys.tendency(0.8, &u), Err(Error::CoefficientOverflow { .. })));
        let r = to_v_multiplicative(&u, 1.0, &sys.driver, TransformMode::MultiplicativeWhite);
        assert!(matches!(r, Err(Error::CoefficientOverflow { .. })));
    }

    #[test]
    fn zero_path_reduces_to_plain_cbf() {
        let g = grid();
        let zero = NoiseSource::new(Arc::new(WienerPath::zero(-30.0, 5.0, 0.01).unwrap()), 1.0);
        let f = Forcing::Constant(taylor_green(&g, 0.2));
        let plain = SystemSpec::WongZakai {
            params: params(),
            forcing: f.clone(),
            diffusion: DiffusionTerm::zero(&g),
            delta: 0.1,
        };
        let add = SystemSpec::Additive {
            params: params(),
            forcing: f.clone(),
            profile: AdditiveProfile::taylor_green(&g, 0.0, 1.0).unwrap(),
            mode: NoiseMode::White,
        };
        let mul = SystemSpec::Multiplicative { params: params(), forcing: f, mode: NoiseMode::Colored(0.1) };
        let cfg = StepperConfig::with_dt(0.01);
        let u0 = ic(4);
        let a = plain.cocycle(&zero, 1.0, 0.0, &u0, &cfg).unwrap();
        for other in [&add, &mul] {
            let b = other.cocycle(&zero, 1.0, 0.0, &u0, &cfg).unwrap();
            assert!((&a - &b).h_norm() < 1e-13);
        }
        let rows = wz_solution_convergence(&add, &zero, &[0.2, 0.1], 0.0, 1.0, &u0, &cfg).unwrap();
        assert!(rows.iter().all(|r| r.error_h <= 1e-10));
        let rows = wz_solution_convergence(&mul, &zero, &[0.2, 0.1], 0.0, 0.0, &u0, &cfg).unwrap();
        assert!(rows.iter().all(|r| r.error_h == 0.0));
    }

    #[test]
    fn additive_v_route_matches_direct_wz() {
        // u_δ from the transformed system equals the Wong-Zakai system with S = e^{σt} g.
        let g = grid();
        let src = source(7);
        let prof = AdditiveProfile::taylor_green(&g, 0.2, 1.0).unwrap();
        let f = Forcing::Constant(taylor_green(&g, 0.3));
        let delta = 0.1;
        let add = SystemSpec::Additive { params: params(), forcing: f.clone(), profile: prof.clone(), mode: NoiseMode::Colored(delta) };
        let direct = SystemSpec::WongZakai {
            params: params(),
            forcing: f,
            diffusion: DiffusionTerm::constant_g(prof.g.clone(), 0.2),
            delta,
        };
        let u0 = ic(8);
        let run = |spec: &SystemSpec, dt: f64| spec.cocycle(&src, 1.0, -0.5, &u0, &StepperConfig::with_dt(dt)).unwrap();
        let e1 = (&run(&add, 0.01) - &run(&direct, 0.01)).h_norm();
        let e2 = (&run(&add, 0.005) - &run(&direct, 0.005)).h_norm();
        assert!(e1 < 1e-4, "{e1}");
        assert!(e2 < e1 / 3.0, "{e1} {e2}");
    }

    #[test]
    fn multiplicative_wz_matches_direct_linear_diffusion() {
        // S(u) = u with colored noise is the Wong-Zakai form of the multiplicative system.
        let g = grid();
        let src = source(9);
        let f = Forcing::Constant(taylor_green(&g, 0.3));
        let delta = 0.1;
        let mul = SystemSpec::Multiplicative { params: params(), forcing: f.clone(), mode: NoiseMode::Colored(delta) };
        let direct = SystemSpec::WongZakai { params: params(), forcing: f, diffusion: DiffusionTerm::linear_u(&g), delta };
        let u0 = ic(10);
        let run = |spec: &SystemSpec, dt: f64| spec.cocycle(&src, 1.0, 0.0, &u0, &StepperConfig::with_dt(dt)).unwrap();
        let e1 = (&run(&mul, 0.01) - &run(&direct, 0.01)).h_norm();
        let e2 = (&run(&mul, 0.005) - &run(&direct, 0.005)).h_norm();
        assert!(e1 < 5e-3, "{e1}");
        assert!(e2 < e1 / 3.0, "{e1} {e2}");
    }

    #[test]
    fn transformed_energy_ledgers_close() {
        let g = grid();
        let src = source(11);
        let f = Forcing::Constant(taylor_green(&g, 0.3));
        let add = SystemSpec::Additive {
            params: params(),
            forcing: f.clone(),
            profile: AdditiveProfile::taylor_green(&g, 0.1, 1.0).unwrap(),
            mode: NoiseMode::Colored(0.1),
        };
        let mul = SystemSpec::Multiplicative { params: params(), forcing: f, mode: NoiseMode::White };
        for spec in [&add, &mul] {
            let ev = spec.evolve(&src, 0.0, 0.0, 1.0, &ic(12), &StepperConfig::with_dt(0.001)).unwrap();
            let worst = energy_residual(&ev.trajectory).unwrap().iter().map(|r| r.residual).fold(0.0, f64::max);
            assert!(worst < 1e-3, "{worst}");
        }
    }

    #[test]
    fn multiplicative_self_convergence_is_second_order() {
        let g = grid();
        let src = source(13);
        let spec = SystemSpec::Multiplicative {
            params: params(),
            forcing: Forcing::Constant(taylor_green(&g, 0.3)),
            mode: NoiseMode::White,
        };
        let u0 = ic(14);
        let run = |dt: f64| spec.cocycle(&src, 1.0, 0.0, &u0, &StepperConfig::with_dt(dt)).unwrap();
        let (a, b, c) = (run(0.01), run(0.005), run(0.0025));
        let order = ((&a - &b).h_norm() / (&b - &c).h_norm()).log2();
        assert!(order > 1.9, "{order}");
    }
}
