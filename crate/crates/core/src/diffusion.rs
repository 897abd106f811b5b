//! Nonlinear diffusion terms `S(t, x, u)` and empirical checks of the
//! structural conditions they are meant to satisfy.
//!
//! The families are
//! * `zero`, `constant_g` (`e^{σt} g`), `linear_u` (`u`),
//! * `ndt1`: `e^{σt}[κu + sin u + B(g1, u) + h]` with `sin` taken componentwise,
//! * `ndt2`: `e^{σt}[κu + B(g2, u) + h]`,
//! * `ndt3`: `S1(x)|u|^{q−1} ê + S2(x) ê` with the unit direction `ê = (1,1)/√2`
//!   and nonnegative envelopes, so `|S| = S1|u|^{q−1} + S2` pointwise.
//!
//! Every output is dealiased and Leray-projected before it enters the
//! dynamics; the pointwise bound for `ndt3` is checked on the raw values.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectral::{
    bilinear_b, random_field, safe_pow, taylor_green_shifted, Physical, TorusGrid, VelocityField,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DiffusionVariant {
    Zero,
    ConstantG,
    LinearU,
    Ndt1,
    Ndt2,
    Ndt3,
}

impl DiffusionVariant {
    pub fn name(&self) -> &'static str {
        match self {
            DiffusionVariant::Zero => "zero",
            DiffusionVariant::ConstantG => "constant_g",
            DiffusionVariant::LinearU => "linear_u",
            DiffusionVariant::Ndt1 => "ndt1_example",
            DiffusionVariant::Ndt2 => "ndt2_example",
            DiffusionVariant::Ndt3 => "ndt3_example",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Condition {
    S1Orth,
    S2Lip,
    S3Weak,
    S4Growth,
    Gs1Bound,
}

impl Condition {
    pub fn id(&self) -> &'static str {
        match self {
            Condition::S1Orth => "S1_orth",
            Condition::S2Lip => "S2_lip",
            Condition::S3Weak => "S3_weak",
            Condition::S4Growth => "S4_growth",
            Condition::Gs1Bound => "GS1_bound",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiffusionTerm {
    variant: DiffusionVariant,
    grid: TorusGrid,
    kappa: f64,
    sigma: f64,
    /// `g` for `constant_g`, `g1`/`g2` for the examples.
    profile: Option<VelocityField>,
    offset: Option<VelocityField>,
    envelopes: Option<[Vec<f64>; 2]>,
    q: f64,
}

impl DiffusionTerm {
    fn base(variant: DiffusionVariant, grid: &TorusGrid) -> Self {
        DiffusionTerm {
            variant,
            grid: grid.clone(),
            kappa: 0.0,
            sigma: 0.0,
            profile: None,
            offset: None,
            envelopes: None,
            q: 1.0,
        }
    }

    pub fn zero(grid: &TorusGrid) -> Self {
        Self::base(DiffusionVariant::Zero, grid)
    }

    pub fn constant_g(g: VelocityField, sigma: f64) -> Self {
        let mut t = Self::base(DiffusionVariant::ConstantG, g.grid());
        t.sigma = sigma;
        t.profile = Some(g);
        t
    }

    pub fn linear_u(grid: &TorusGrid) -> Self {
        Self::base(DiffusionVariant::LinearU, grid)
    }

    pub fn ndt1(kappa: f64, sigma: f64, g1: VelocityField, h: VelocityField) -> Result<Self> {
        Self::example(DiffusionVariant::Ndt1, kappa, sigma, g1, h)
    }

    pub fn ndt2(kappa: f64, sigma: f64, g2: VelocityField, h: VelocityField) -> Result<Self> {
        Self::example(DiffusionVariant::Ndt2, kappa, sigma, g2, h)
    }

    fn example(
        variant: DiffusionVariant,
        kappa: f64,
        sigma: f64,
        g: VelocityField,
        h: VelocityField,
    ) -> Result<Self> {
        if !(kappa >= 0.0) {
            return Err(Error::param("kappa", "must be >= 0"));
        }
        if !(sigma >= 0.0) {
            return Err(Error::param("sigma", "must be >= 0"));
        }
        if g.grid() != h.grid() {
            return Err(Error::GridMismatch {
                left: format!("{:?}", g.grid()),
                right: format!("{:?}", h.grid()),
            });
        }
        let mut t = Self::base(variant, g.grid());
        t.kappa = kappa;
        t.sigma = sigma;
        t.profile = Some(g);
        t.offset = Some(h);
        Ok(t)
    }

    /// Default `ndt1` instance: `g1` a Taylor-Green vortex with phase
    /// `(0.3, 0.7)` and `h` a weak vortex with phase `(1.1, 0.2)`.
    pub fn ndt1_default(grid: &TorusGrid, kappa: f64, sigma: f64) -> Result<Self> {
        let g1 = taylor_green_shifted(grid, 0.5, 0.3, 0.7);
        let h = taylor_green_shifted(grid, 0.2, 1.1, 0.2);
        Self::ndt1(kappa, sigma, g1, h)
    }

    /// Default `ndt2` instance with `g2` of phase `(1.9, 0.4)`.
    pub fn ndt2_default(grid: &TorusGrid, kappa: f64, sigma: f64) -> Result<Self> {
        let g2 = taylor_green_shifted(grid, 0.5, 1.9, 0.4);
        let h = taylor_green_shifted(grid, 0.2, 1.1, 0.2);
        Self::ndt2(kappa, sigma, g2, h)
    }

    /// `S1(x)|u|^{q−1} ê + S2(x) ê`. The exponent must satisfy `q = 1` or
    /// `2 ≤ q < r + 1`; for `1 < q < 2` the map `u ↦ |u|^{q−1}` is not
    /// Lipschitz at the origin.
    pub fn ndt3(grid: &TorusGrid, s1: Vec<f64>, s2: Vec<f64>, q: f64, r: f64) -> Result<Self> {
        if s1.len() != grid.len() || s2.len() != grid.len() {
            return Err(Error::param("envelopes", "length must match the grid"));
        }
        if s1.iter().chain(&s2).any(|&v| !(v >= 0.0) || !v.is_finite()) {
            return Err(Error::param("envelopes", "must be finite and nonnegative"));
        }
        if !(q == 1.0 || (q >= 2.0 && q < r + 1.0)) {
            return Err(Error::param(
                "q",
                format!("{q} must be 1 or lie in [2, r+1) with r = {r}"),
            ));
        }
        let mut t = Self::base(DiffusionVariant::Ndt3, grid);
        t.envelopes = Some([s1, s2]);
        t.q = q;
        Ok(t)
    }

    /// Smooth envelopes `S1 = a1(1 + cos x' cos y')/2`,
    /// `S2 = a2(1 + sin x')/2` with `x' = 2πx/L`.
    pub fn ndt3_default(grid: &TorusGrid, q: f64, r: f64) -> Result<Self> {
        let s = 2.0 * PI / grid.box_length();
        let (mut e1, mut e2) = (vec![0.0; grid.len()], vec![0.0; grid.len()]);
        for idx in 0..grid.len() {
            let (x, y) = grid.coords(idx);
            e1[idx] = 0.3 * 0.5 * (1.0 + (s * x).cos() * (s * y).cos());
            e2[idx] = 0.1 * 0.5 * (1.0 + (s * x).sin());
        }
        Self::ndt3(grid, e1, e2, q, r)
    }

    pub fn variant(&self) -> DiffusionVariant {
        self.variant
    }
    pub fn grid(&self) -> &TorusGrid {
        &self.grid
    }
    pub fn kappa(&self) -> f64 {
        self.kappa
    }
    pub fn sigma(&self) -> f64 {
        self.sigma
    }
    pub fn offset(&self) -> Option<&VelocityField> {
        self.offset.as_ref()
    }
    pub fn profile(&self) -> Option<&VelocityField> {
        self.profile.as_ref()
    }

    /// Returns a copy with the offset replaced.
    pub fn with_offset(&self, h: VelocityField) -> Self {
        let mut t = self.clone();
        t.offset = Some(h);
        t
    }

    /// `S(t, u) ≡ 0` for every `u`.
    pub fn is_zero(&self) -> bool {
        self.variant == DiffusionVariant::Zero
    }

    /// Whether `S(t, ·, 0) = 0`, so that the zero state is an equilibrium.
    pub fn vanishes_at_zero(&self) -> bool {
        match self.variant {
            DiffusionVariant::Zero | DiffusionVariant::LinearU => true,
            DiffusionVariant::ConstantG => self.profile.as_ref().is_some_and(|g| g.h_norm() == 0.0),
            DiffusionVariant::Ndt1 | DiffusionVariant::Ndt2 => {
                self.offset.as_ref().is_some_and(|h| h.h_norm() == 0.0)
            }
            DiffusionVariant::Ndt3 => self
                .envelopes
                .as_ref()
                .is_some_and(|e| e[1].iter().all(|&v| v == 0.0) && self.q > 1.0),
        }
    }

    fn check_grid(&self, u: &VelocityField) -> Result<()> {
        if u.grid() != &self.grid {
            return Err(Error::GridMismatch {
                left: format!("{:?}", self.grid),
                right: format!("{:?}", u.grid()),
            });
        }
        Ok(())
    }

    /// The state-dependent part `𝒮(u)` of the `ndt1`/`ndt2` families.
    pub fn nonlinear_part(&self, u: &VelocityField) -> Result<VelocityField> {
        self.check_grid(u)?;
        let g = self.profile.as_ref();
        match self.variant {
            DiffusionVariant::Ndt1 => {
                let p = u.to_physical();
                let s: Physical = [
                    p[0].iter().map(|v| v.sin()).collect(),
                    p[1].iter().map(|v| v.sin()).collect(),
                ];
                let mut out = VelocityField::from_physical(&self.grid, &s);
                out.axpy(1.0, &bilinear_b(g.expect("ndt1 profile"), u));
                Ok(out)
            }
            DiffusionVariant::Ndt2 => Ok(bilinear_b(g.expect("ndt2 profile"), u)),
            other => Err(Error::UnsupportedCondition {
                condition: "nonlinear part".into(),
                variant: other.name().into(),
            }),
        }
    }

    /// Raw grid values of `ndt3` before projection.
    pub fn ndt3_raw(&self, u: &VelocityField) -> Result<Physical> {
        self.check_grid(u)?;
        let env = self.envelopes.as_ref().ok_or_else(|| Error::UnsupportedCondition {
            condition: "GS1_bound".into(),
            variant: self.variant.name().into(),
        })?;
        let p = u.to_physical();
        let mut out = [vec![0.0; p[0].len()], vec![0.0; p[0].len()]];
        for idx in 0..p[0].len() {
            let mag = (p[0][idx].powi(2) + p[1][idx].powi(2)).sqrt();
            let s = env[0][idx] * safe_pow(mag, self.q - 1.0) + env[1][idx];
            out[0][idx] = s * FRAC_1_SQRT_2;
            out[1][idx] = s * FRAC_1_SQRT_2;
        }
        Ok(out)
    }

    /// `S(t, ·, u)`, projected and dealiased.
    pub fn eval(&self, t: f64, u: &VelocityField) -> Result<VelocityField> {
        self.check_grid(u)?;
        let growth = (self.sigma * t).exp();
        match self.variant {
            DiffusionVariant::Zero => Ok(VelocityField::zeros(&self.grid)),
            DiffusionVariant::ConstantG => {
                Ok(self.profile.as_ref().expect("constant_g profile").scale(growth))
            }
            DiffusionVariant::LinearU => Ok(u.clone().masked().project()),
            DiffusionVariant::Ndt1 | DiffusionVariant::Ndt2 => {
                let mut out = self.nonlinear_part(u)?;
                out.axpy(self.kappa, &u.clone().masked().project());
                out.axpy(1.0, &self.offset.as_ref().expect("offset").clone().masked().project());
                Ok(out.scale(growth))
            }
            DiffusionVariant::Ndt3 => Ok(VelocityField::from_physical(&self.grid, &self.ndt3_raw(u)?)),
        }
    }

    /// Largest pointwise excess `|S| − (S1|u|^{q−1} + S2)` over the grid.
    pub fn gs1_excess(&self, u: &VelocityField) -> Result<f64> {
        let raw = self.ndt3_raw(u)?;
        let env = self.envelopes.as_ref().expect("checked in ndt3_raw");
        let p = u.to_physical();
        let mut worst = f64::NEG_INFINITY;
        for idx in 0..p[0].len() {
            let mag = (p[0][idx].powi(2) + p[1][idx].powi(2)).sqrt();
            let bound = env[0][idx] * safe_pow(mag, self.q - 1.0) + env[1][idx];
            let val = (raw[0][idx].powi(2) + raw[1][idx].powi(2)).sqrt();
            worst = worst.max(val - bound - 1e-14 * bound);
        }
        Ok(worst)
    }
}

pub fn eval_s(term: &DiffusionTerm, t: f64, u: &VelocityField) -> Result<VelocityField> {
    term.eval(t, u)
}

/// Fitted constants of the growth bound `|(𝒮(u), u)| ≤ s3 + s4‖u‖_V^{1+s5}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GrowthFit {
    pub s3: f64,
    pub s4: f64,
    pub s5: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AssumptionReport {
    pub condition: Condition,
    pub constant: f64,
    pub samples: usize,
    pub pass: bool,
    /// Constant obtained from the first half of the samples.
    pub half_constant: f64,
    pub growth: Option<GrowthFit>,
    pub half_growth: Option<GrowthFit>,
}

/// Relative agreement with an absolute floor for constants near zero.
fn stable(a: f64, b: f64, floor: f64) -> bool {
    let d = (a - b).abs();
    d <= floor || d <= 0.25 * a.abs().max(b.abs())
}

/// Sample field for validators. `‖u‖_H` runs over `[0.1, 10]` on a
/// golden-ratio ladder in log scale, so every prefix of the sample covers
/// the range evenly; the direction is random.
fn sample_field(grid: &TorusGrid, rng: &mut ChaCha8Rng, index: usize, stream: f64) -> VelocityField {
    let golden = 0.5 * (5f64.sqrt() - 1.0);
    let frac = (stream + index as f64 * golden).fract();
    let amp = 10f64.powf(2.0 * frac - 1.0);
    random_field(grid, rng, amp, 2.0, false)
}

fn growth_fit(xs: &[f64], ys: &[f64]) -> GrowthFit {
    // Tightest envelope y ≤ s4 x^{1+s5} over ‖u‖_V ≥ 1: s5 minimizes the
    // summed log gap between envelope and samples, a convex function of s5.
    let pts: Vec<(f64, f64)> = xs
        .iter()
        .zip(ys)
        .filter(|(x, y)| **x >= 1.0 && **y > 0.0)
        .map(|(x, y)| (x.ln(), y.ln()))
        .collect();
    let log_s4 = |s5: f64| {
        pts.iter()
            .map(|(lx, ly)| ly - (1.0 + s5) * lx)
            .fold(f64::NEG_INFINITY, f64::max)
    };
    let gap = |s5: f64| {
        let c = log_s4(s5);
        pts.iter().map(|(lx, ly)| c + (1.0 + s5) * lx - ly).sum::<f64>()
    };
    let s5 = if pts.is_empty() {
        0.0
    } else {
        let (mut lo, mut hi) = (0.0f64, 0.9f64);
        let phi = 0.5 * (5f64.sqrt() - 1.0);
        for _ in 0..80 {
            let m1 = hi - phi * (hi - lo);
            let m2 = lo + phi * (hi - lo);
            if gap(m1) <= gap(m2) {
                hi = m2;
            } else {
                lo = m1;
            }
        }
        0.5 * (lo + hi)
    };
    let s4 = if pts.is_empty() { 0.0 } else { log_s4(s5).exp() };
    let s3 = xs
        .iter()
        .zip(ys)
        .map(|(&x, &y)| (y - s4 * x.powf(1.0 + s5)).max(0.0))
        .fold(0.0, f64::max);
    GrowthFit { s3, s4, s5 }
}

/// Samples `samples` random fields (pairs for the Lipschitz conditions),
/// computes the tightest empirical constant, and compares it with the
/// constant from the first half of the samples.
pub fn validate_assumption(
    term: &DiffusionTerm,
    condition: Condition,
    samples: usize,
    seed: u64,
) -> Result<AssumptionReport> {
    let supported = matches!(
        (term.variant, condition),
        (DiffusionVariant::Ndt2, Condition::S1Orth)
            | (DiffusionVariant::Ndt1 | DiffusionVariant::Ndt2, Condition::S2Lip)
            | (DiffusionVariant::Ndt1 | DiffusionVariant::Ndt2, Condition::S3Weak)
            | (DiffusionVariant::Ndt1 | DiffusionVariant::Ndt2, Condition::S4Growth)
            | (DiffusionVariant::Ndt3, Condition::Gs1Bound)
    );
    if !supported {
        return Err(Error::UnsupportedCondition {
            condition: condition.id().into(),
            variant: term.variant.name().into(),
        });
    }
    if samples < 2 {
        return Err(Error::param("samples", "need at least 2"));
    }
    let grid = term.grid.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let half = samples / 2;

    let mut values = Vec::with_capacity(samples);
    let mut xs = Vec::new();
    for i in 0..samples {
        let u = sample_field(&grid, &mut rng, i, 0.0);
        let val = match condition {
            Condition::S1Orth => {
                let su = term.nonlinear_part(&u)?;
                su.inner(&u).abs() / u.v_norm2()
            }
            Condition::S2Lip | Condition::S3Weak => {
                let v = sample_field(&grid, &mut rng, i, 0.5);
                let d = &term.nonlinear_part(&u)? - &term.nonlinear_part(&v)?;
                let uv = &u - &v;
                if condition == Condition::S2Lip {
                    d.h_norm() / uv.v_norm2().sqrt()
                } else {
                    // sup over w of |(d, w)| / ‖w‖_V is the dual norm of d
                    d.dual_norm2().sqrt() / uv.h_norm()
                }
            }
            Condition::S4Growth => {
                xs.push(u.v_norm2().sqrt());
                term.nonlinear_part(&u)?.inner(&u).abs()
            }
            Condition::Gs1Bound => term.gs1_excess(&u)?,
        };
        values.push(val);
    }

    let max_of = |v: &[f64]| v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let (constant, half_constant) = (max_of(&values), max_of(&values[..half]));
    let (pass, growth, half_growth) = match condition {
        Condition::S1Orth => (constant <= 1e-9, None, None),
        Condition::Gs1Bound => (constant <= 0.0, None, None),
        Condition::S2Lip | Condition::S3Weak => (
            constant.is_finite() && stable(constant, half_constant, 1e-12),
            None,
            None,
        ),
        Condition::S4Growth => {
            let full = growth_fit(&xs, &values);
            let part = growth_fit(&xs[..half], &values[..half]);
            let floor = 1e-6 * (1.0 + full.s4);
            let ok = [full.s3, full.s4, full.s5].iter().all(|v| v.is_finite())
                && stable(full.s3, part.s3, floor)
                && stable(full.s4, part.s4, floor)
                && stable(full.s5, part.s5, 0.05);
            (ok, Some(full), Some(part))
        }
    };
    let constant = growth.map_or(constant, |g| g.s4);
    let half_constant = half_growth.map_or(half_constant, |g| g.s4);
    Ok(AssumptionReport {
        condition,
        constant,
        samples,
        pass,
        half_constant,
        growth,
        half_growth,
    })
}

/// Empirical local Lipschitz constant of `ndt3` over pairs with
/// `‖u‖_∞, ‖v‖_∞ ≤ radius`, measured on the raw pointwise values.
pub fn ndt3_local_lipschitz(
    term: &DiffusionTerm,
    radius: f64,
    samples: usize,
    seed: u64,
) -> Result<f64> {
    let grid = term.grid.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..samples {
        let mut pair = Vec::with_capacity(2);
        for _ in 0..2 {
            let u = random_field(&grid, &mut rng, 1.0, 2.0, false);
            let target = radius * rng.random_range(0.1..1.0);
            pair.push(u.scale(target / u.max_speed()));
        }
        let (a, b) = (term.ndt3_raw(&pair[0])?, term.ndt3_raw(&pair[1])?);
        let raw = VelocityField::from_physical_raw(&grid, &[
            a[0].iter().zip(&b[0]).map(|(x, y)| x - y).collect(),
            a[1].iter().zip(&b[1]).map(|(x, y)| x - y).collect(),
        ]);
        let du = (&pair[0] - &pair[1]).h_norm();
        if du > 0.0 {
            worst = worst.max(raw.h_norm() / du);
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::{taylor_green, trilinear_b};
    use proptest::prelude::*;

    fn grid() -> TorusGrid {
        TorusGrid::periodic(32).unwrap()
    }

    #[test]
    fn simple_variants() {
        let g = grid();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let u = random_field(&g, &mut rng, 1.0, 2.0, false);
        assert_eq!(DiffusionTerm::zero(&g).eval(0.3, &u).unwrap().h_norm(), 0.0);
        let tg = taylor_green(&g, 1.0);
        let cg = DiffusionTerm::constant_g(tg.clone(), 0.5);
        assert!((&cg.eval(0.0, &u).unwrap() - &tg).h_norm() < 1e-15);
        assert!((&cg.eval(2.0, &u).unwrap() - &tg.scale(1f64.exp())).h_norm() < 1e-12);
        assert!((&DiffusionTerm::linear_u(&g).eval(1.0, &u).unwrap() - &u).h_norm() < 1e-13);
    }

    #[test]
    fn ndt2_is_orthogonal_up_to_linear_part() {
        let g = grid();
        let term = DiffusionTerm::ndt2_default(&g, 0.4, 0.1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let u = random_field(&g, &mut rng, 3.0, 1.5, false);
        let t: f64 = 0.7;
        let e = (0.1 * t).exp();
        let mut lin = u.scale(0.4);
        lin.axpy(1.0, term.offset().unwrap());
        let rest = &term.eval(t, &u).unwrap() - &lin.scale(e);
        let b = e * trilinear_b(term.profile().unwrap(), &u, &u).unwrap();
        assert!((rest.inner(&u) - b).abs() < 1e-9 * u.v_norm2());
        assert!(rest.inner(&u).abs() < 1e-9 * u.v_norm2());
    }

    #[test]
    fn ndt1_nonlinear_part_matches_definition() {
        let g = grid();
        let term = DiffusionTerm::ndt1_default(&g, 0.0, 0.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let u = random_field(&g, &mut rng, 2.0, 2.0, false);
        let got = term.nonlinear_part(&u).unwrap();
        // (𝒮(u), u) = ∫ sin(u)·u since b(g1, u, u) = 0
        let p = u.to_physical();
        let want: f64 = (0..g.len())
            .map(|i| p[0][i].sin() * p[0][i] + p[1][i].sin() * p[1][i])
            .sum::<f64>()
            * g.cell_area();
        assert!((got.inner(&u) - want).abs() < 1e-10 * want.abs().max(1.0));
    }

    #[test]
    fn ndt3_validation() {
        let g = grid();
        assert!(DiffusionTerm::ndt3_default(&g, 1.5, 3.0).is_err());
        assert!(DiffusionTerm::ndt3_default(&g, 4.0, 3.0).is_err());
        assert!(DiffusionTerm::ndt3_default(&g, 2.0, 3.0).is_ok());
        let bad = DiffusionTerm::ndt3(&g, vec![-1.0; g.len()], vec![0.0; g.len()], 2.0, 3.0);
        assert!(bad.is_err());
    }

    #[test]
    fn gs1_holds_and_lipschitz_is_finite() {
        let g = grid();
        let term = DiffusionTerm::ndt3_default(&g, 2.0, 3.0).unwrap();
        let rep = validate_assumption(&term, Condition::Gs1Bound, 20, 4).unwrap();
        assert!(rep.pass, "{rep:?}");
        let lip = ndt3_local_lipschitz(&term, 2.0, 10, 5).unwrap();
        // |S1(|u| − |v|)| ≤ max S1 |u − v| pointwise, and max S1 = 0.3
        assert!(lip > 0.0 && lip <= 0.3 + 1e-12, "{lip}");
    }

    #[test]
    fn unsupported_conditions_are_rejected() {
        let g = grid();
        let t1 = DiffusionTerm::ndt1_default(&g, 0.0, 0.0).unwrap();
        assert!(matches!(
            validate_assumption(&t1, Condition::S1Orth, 4, 1),
            Err(Error::UnsupportedCondition { .. })
        ));
        assert!(validate_assumption(&DiffusionTerm::zero(&g), Condition::S2Lip, 4, 1).is_err());
    }

    #[test]
    fn growth_fit_recovers_power_law() {
        let xs: Vec<f64> = (0..40).map(|i| 0.1 * 1.2f64.powi(i)).collect();
        let pure: Vec<f64> = xs.iter().map(|x| 2.0 * x.powf(1.4)).collect();
        let fit = growth_fit(&xs, &pure);
        assert!((fit.s5 - 0.4).abs() < 1e-6 && (fit.s4 - 2.0).abs() < 1e-5, "{fit:?}");
        let ys: Vec<f64> = xs.iter().map(|x| 0.5 + 2.0 * x.powf(1.4)).collect();
        let fit = growth_fit(&xs, &ys);
        for (x, y) in xs.iter().zip(&ys) {
            assert!(*y <= fit.s3 + fit.s4 * x.powf(1.0 + fit.s5) + 1e-9);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]

        #[test]
        fn offset_enters_linearly(seed in any::<u64>(), c in -3.0f64..3.0, t in 0.0f64..2.0) {
            let g = TorusGrid::periodic(16).unwrap();
            let term = DiffusionTerm::ndt1_default(&g, 0.3, 0.2).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let u = random_field(&g, &mut rng, 1.0, 2.0, false);
            let h = term.offset().unwrap().clone();
            let mut h2 = h.clone();
            h2.axpy(c, &h);
            let shifted = term.with_offset(h2);
            let diff = &shifted.eval(t, &u).unwrap() - &term.eval(t, &u).unwrap();
            let want = h.project().scale(c * (0.2 * t).exp());
            prop_assert!((&diff - &want).h_norm() <= 1e-12 * (1.0 + want.h_norm()));
        }
    }
}
