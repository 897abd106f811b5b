//! Divergence-free velocity fields on the periodic torus `[0, L)²` and the
//! operators `P`, `A`, `B`, `C`.
//!
//! Coefficients follow `û(k) = N⁻² Σ_x u(x) e^{−ik·x}`, so that
//! `‖u‖²_H = L² Σ_k |û(k)|²` and physical quadrature `(L/N)² Σ_x` agrees with
//! the spectral sums exactly for band-limited fields.
//!
//! States are kept inside the dealiasing band `3|m_j| < n` (integer
//! wavenumber `m_j` per axis). For fields in that band every triple product
//! has total wavenumber below `n`, so grid quadrature of `u·∇v·w` is exact and
//! the skew-symmetry identities of `b` hold to rounding.

use std::f64::consts::PI;
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};
use std::sync::Arc;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use rustfft::{Fft, FftPlanner};
use serde::Serialize;

use crate::error::{Error, Result};

struct GridInner {
    n: usize,
    box_length: f64,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
    /// Signed integer wavenumber for each FFT index.
    m: Vec<i64>,
    /// Physical wavenumber `2π m / L`.
    k: Vec<f64>,
    /// Flat per-mode tables.
    kx: Vec<f64>,
    ky: Vec<f64>,
    k2: Vec<f64>,
    band: Vec<bool>,
    /// Flat index of `−k`.
    neg: Vec<usize>,
}

/// An `n × n` periodic grid with cached FFT plans. Cloning is cheap.
#[derive(Clone)]
pub struct TorusGrid {
    inner: Arc<GridInner>,
}

impl fmt::Debug for TorusGrid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "TorusGrid(n={}, L={})", self.n(), self.box_length())
    }
}

impl PartialEq for TorusGrid {
    fn eq(&self, other: &Self) -> bool {
        Arc::ptr_eq(&self.inner, &other.inner)
            || (self.n() == other.n() && self.box_length() == other.box_length())
    }
}

impl TorusGrid {
    pub fn new(n: usize, box_length: f64) -> Result<Self> {
        if n < 8 || !n.is_multiple_of(2) {
            return Err(Error::param("n", format!("{n} must be even and >= 8")));
        }
        if !(box_length > 0.0) || !box_length.is_finite() {
            return Err(Error::param("box_length", format!("{box_length} must be positive")));
        }
        let mut planner = FftPlanner::<f64>::new();
        let fwd = planner.plan_fft_forward(n);
        let inv = planner.plan_fft_inverse(n);
        let m: Vec<i64> = (0..n)
            .map(|j| if j < n / 2 { j as i64 } else { j as i64 - n as i64 })
            .collect();
        let k: Vec<f64> = m.iter().map(|&mj| 2.0 * PI / box_length * mj as f64).collect();
        let in_band: Vec<bool> = m.iter().map(|&mj| 3 * mj.unsigned_abs() < n as u64).collect();
        let len = n * n;
        let kx: Vec<f64> = (0..len).map(|i| k[i % n]).collect();
        let ky: Vec<f64> = (0..len).map(|i| k[i / n]).collect();
        let k2 = kx.iter().zip(&ky).map(|(a, b)| a * a + b * b).collect();
        let band = (0..len).map(|i| in_band[i % n] && in_band[i / n]).collect();
        let neg = (0..len)
            .map(|i| ((n - i / n) % n) * n + (n - i % n) % n)
            .collect();
        Ok(TorusGrid {
            inner: Arc::new(GridInner {
                n,
                box_length,
                fwd,
                inv,
                m,
                k,
                kx,
                ky,
                k2,
                band,
                neg,
            }),
        })
    }

    /// The standard `2π` box.
    pub fn periodic(n: usize) -> Result<Self> {
        Self::new(n, 2.0 * PI)
    }

    pub fn n(&self) -> usize {
        self.inner.n
    }
    pub fn box_length(&self) -> f64 {
        self.inner.box_length
    }
    pub fn len(&self) -> usize {
        self.inner.n * self.inner.n
    }
    pub fn is_empty(&self) -> bool {
        false
    }
    pub fn dx(&self) -> f64 {
        self.inner.box_length / self.inner.n as f64
    }
    /// Quadrature weight of one grid cell.
    pub fn cell_area(&self) -> f64 {
        self.dx() * self.dx()
    }
    pub fn area(&self) -> f64 {
        self.inner.box_length * self.inner.box_length
    }
    /// Physical wavenumber at FFT index `j`.
    pub fn wavenumber(&self, j: usize) -> f64 {
        self.inner.k[j]
    }
    pub fn integer_wavenumber(&self, j: usize) -> i64 {
        self.inner.m[j]
    }
    /// Largest retained integer wavenumber per axis.
    pub fn band_limit(&self) -> i64 {
        (self.inner.n as i64 - 1) / 3
    }
    /// Largest retained physical wavenumber per axis.
    pub fn k_max(&self) -> f64 {
        2.0 * PI / self.inner.box_length * self.band_limit() as f64
    }
    /// `(kx, ky)` at flat index `iy * n + ix`.
    pub fn kvec(&self, idx: usize) -> (f64, f64) {
        (self.inner.kx[idx], self.inner.ky[idx])
    }
    pub fn k2(&self, idx: usize) -> f64 {
        self.inner.k2[idx]
    }
    pub fn in_band(&self, idx: usize) -> bool {
        self.inner.band[idx]
    }
    /// Physical coordinates of grid node `idx`.
    pub fn coords(&self, idx: usize) -> (f64, f64) {
        let n = self.inner.n;
        ((idx % n) as f64 * self.dx(), (idx / n) as f64 * self.dx())
    }

    fn transform(&self, buf: &mut [Complex64], plan: &Arc<dyn Fft<f64>>) {
        let n = self.inner.n;
        plan.process(buf);
        transpose(buf, n);
        plan.process(buf);
        transpose(buf, n);
    }

    /// Coefficients of a real grid function.
    pub fn forward(&self, values: &[f64]) -> Vec<Complex64> {
        let mut buf: Vec<Complex64> = values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.transform(&mut buf, &self.inner.fwd);
        let s = 1.0 / self.len() as f64;
        buf.iter_mut().for_each(|c| *c *= s);
        buf
    }

    /// Grid values of a Hermitian coefficient array (imaginary parts dropped).
    pub fn inverse(&self, coeffs: &[Complex64]) -> Vec<f64> {
        let mut buf = coeffs.to_vec();
        self.transform(&mut buf, &self.inner.inv);
        buf.into_iter().map(|c| c.re).collect()
    }

    /// Coefficients of two real grid functions with one complex transform.
    pub fn forward_pair(&self, a: &[f64], b: &[f64]) -> [Vec<Complex64>; 2] {
        let mut buf: Vec<Complex64> = a.iter().zip(b).map(|(&x, &y)| Complex64::new(x, y)).collect();
        self.transform(&mut buf, &self.inner.fwd);
        let s = 0.5 / self.len() as f64;
        let neg = &self.inner.neg;
        let mut ca = Vec::with_capacity(buf.len());
        let mut cb = Vec::with_capacity(buf.len());
        for (idx, &z) in buf.iter().enumerate() {
            let zn = buf[neg[idx]].conj();
            ca.push((z + zn) * s);
            let d = (z - zn) * s;
            cb.push(Complex64::new(d.im, -d.re));
        }
        [ca, cb]
    }

    /// Grid values of two Hermitian coefficient arrays with one complex
    /// transform.
    pub fn inverse_pair(&self, a: &[Complex64], b: &[Complex64]) -> [Vec<f64>; 2] {
        let mut buf: Vec<Complex64> = a
            .iter()
            .zip(b)
            .map(|(&x, &y)| Complex64::new(x.re - y.im, x.im + y.re))
            .collect();
        self.transform(&mut buf, &self.inner.inv);
        [buf.iter().map(|c| c.re).collect(), buf.iter().map(|c| c.im).collect()]
    }

    /// Zero every coefficient outside the dealiasing band.
    pub fn apply_mask(&self, coeffs: &mut [Complex64]) {
        for (c, &keep) in coeffs.iter_mut().zip(&self.inner.band) {
            if !keep {
                *c = Complex64::new(0.0, 0.0);
            }
        }
    }

    pub fn quadrature(&self, values: &[f64]) -> f64 {
        values.iter().sum::<f64>() * self.cell_area()
    }
}

fn transpose(buf: &mut [Complex64], n: usize) {
    for i in 0..n {
        for j in i + 1..n {
            buf.swap(i * n + j, j * n + i);
        }
    }
}

/// Grid values of both velocity components.
pub type Physical = [Vec<f64>; 2];

/// A real two-component field stored by its Fourier coefficients.
#[derive(Clone, Debug, PartialEq)]
pub struct VelocityField {
    grid: TorusGrid,
    c: [Vec<Complex64>; 2],
}

impl VelocityField {
    pub fn zeros(grid: &TorusGrid) -> Self {
        let z = vec![Complex64::new(0.0, 0.0); grid.len()];
        VelocityField {
            grid: grid.clone(),
            c: [z.clone(), z],
        }
    }

    pub fn from_coeffs(grid: &TorusGrid, c: [Vec<Complex64>; 2]) -> Result<Self> {
        if c[0].len() != grid.len() || c[1].len() != grid.len() {
            return Err(Error::Format(format!(
                "expected {} coefficients per component",
                grid.len()
            )));
        }
        Ok(VelocityField {
            grid: grid.clone(),
            c,
        })
    }

    /// Transforms grid values without masking or projecting.
    pub fn from_physical_raw(grid: &TorusGrid, u: &Physical) -> Self {
        VelocityField {
            grid: grid.clone(),
            c: grid.forward_pair(&u[0], &u[1]),
        }
    }

    /// Transforms grid values, then dealiases and projects.
    pub fn from_physical(grid: &TorusGrid, u: &Physical) -> Self {
        Self::from_physical_raw(grid, u).masked().project_in_place()
    }

    /// Samples `f(x, y)` at the nodes, then dealiases and projects.
    pub fn from_fn(grid: &TorusGrid, f: impl Fn(f64, f64) -> (f64, f64)) -> Self {
        let mut u = [vec![0.0; grid.len()], vec![0.0; grid.len()]];
        for idx in 0..grid.len() {
            let (x, y) = grid.coords(idx);
            let (a, b) = f(x, y);
            u[0][idx] = a;
            u[1][idx] = b;
        }
        Self::from_physical(grid, &u)
    }

    pub fn grid(&self) -> &TorusGrid {
        &self.grid
    }
    pub fn coeffs(&self) -> &[Vec<Complex64>; 2] {
        &self.c
    }
    pub fn coeffs_mut(&mut self) -> &mut [Vec<Complex64>; 2] {
        &mut self.c
    }

    /// Grid values of both components from one packed transform; the
    /// coefficients must be Hermitian, as they are for fields built from real data.
    pub fn to_physical(&self) -> Physical {
        self.grid.inverse_pair(&self.c[0], &self.c[1])
    }

    fn same_grid(&self, other: &Self) -> Result<()> {
        if self.grid == other.grid {
            Ok(())
        } else {
            Err(Error::GridMismatch {
                left: format!("{:?}", self.grid),
                right: format!("{:?}", other.grid),
            })
        }
    }

    fn expect_same_grid(&self, other: &Self) {
        if let Err(e) = self.same_grid(other) {
            panic!("{e}");
        }
    }

    pub fn map_modes(&self, f: impl Fn(usize, [Complex64; 2]) -> [Complex64; 2]) -> Self {
        let mut out = Self::zeros(&self.grid);
        for idx in 0..self.grid.len() {
            let [a, b] = f(idx, [self.c[0][idx], self.c[1][idx]]);
            out.c[0][idx] = a;
            out.c[1][idx] = b;
        }
        out
    }

    pub fn masked(mut self) -> Self {
        for comp in self.c.iter_mut() {
            self.grid.apply_mask(comp);
        }
        self
    }

    /// Leray projection `û ← û − k (k·û)/|k|²`; the mean mode is kept.
    pub fn project(&self) -> Self {
        self.clone().project_in_place()
    }

    fn project_in_place(mut self) -> Self {
        let inner = &self.grid.inner;
        let [c0, c1] = &mut self.c;
        for idx in 1..c0.len() {
            let (kx, ky, k2) = (inner.kx[idx], inner.ky[idx], inner.k2[idx]);
            let d = (c0[idx] * kx + c1[idx] * ky) / k2;
            c0[idx] -= d * kx;
            c1[idx] -= d * ky;
        }
        self
    }

    /// Stokes operator `û ← |k|² û`.
    pub fn stokes(&self) -> Self {
        let g = &self.grid;
        self.map_modes(|idx, [a, b]| {
            let k2 = g.k2(idx);
            [a * k2, b * k2]
        })
    }

    /// Multiplies each mode by a real symbol.
    pub fn apply_symbol(&self, symbol: impl Fn(f64) -> f64) -> Self {
        let g = &self.grid;
        self.map_modes(|idx, [a, b]| {
            let s = symbol(g.k2(idx));
            [a * s, b * s]
        })
    }

    /// `∂_j u_i` on the grid, indexed `[i][j]`.
    pub fn gradient_physical(&self) -> [[Vec<f64>; 2]; 2] {
        let g = &self.grid;
        let deriv = |comp: usize| {
            let dx: Vec<Complex64> = self.c[comp]
                .iter()
                .zip(&g.inner.kx)
                .map(|(&c, &k)| Complex64::new(-c.im * k, c.re * k))
                .collect();
            let dy: Vec<Complex64> = self.c[comp]
                .iter()
                .zip(&g.inner.ky)
                .map(|(&c, &k)| Complex64::new(-c.im * k, c.re * k))
                .collect();
            g.inverse_pair(&dx, &dy)
        };
        [deriv(0), deriv(1)]
    }

    pub fn mean(&self) -> [f64; 2] {
        [self.c[0][0].re, self.c[1][0].re]
    }

    pub fn remove_mean(mut self) -> Self {
        self.c[0][0] = Complex64::new(0.0, 0.0);
        self.c[1][0] = Complex64::new(0.0, 0.0);
        self
    }

    /// `(u, v)_H = L² Σ_k Re(û · conj v̂)`.
    pub fn inner(&self, other: &Self) -> f64 {
        self.expect_same_grid(other);
        let mut s = 0.0;
        for comp in 0..2 {
            for (a, b) in self.c[comp].iter().zip(&other.c[comp]) {
                s += a.re * b.re + a.im * b.im;
            }
        }
        s * self.grid.area()
    }

    pub fn h_norm2(&self) -> f64 {
        self.inner(self)
    }
    pub fn h_norm(&self) -> f64 {
        self.h_norm2().sqrt()
    }

    /// `‖∇u‖²_H = L² Σ |k|² |û|²`.
    pub fn grad_norm2(&self) -> f64 {
        let mut s = 0.0;
        for comp in 0..2 {
            for (idx, a) in self.c[comp].iter().enumerate() {
                s += self.grid.k2(idx) * a.norm_sqr();
            }
        }
        s * self.grid.area()
    }

    pub fn v_norm2(&self) -> f64 {
        self.h_norm2() + self.grad_norm2()
    }

    /// Dual norm `‖u‖²_{V'} = L² Σ |û|² / (1 + |k|²)`.
    pub fn dual_norm2(&self) -> f64 {
        let mut s = 0.0;
        for comp in 0..2 {
            for (idx, a) in self.c[comp].iter().enumerate() {
                s += a.norm_sqr() / (1.0 + self.grid.k2(idx));
            }
        }
        s * self.grid.area()
    }

    /// `(∫ |u|^p)^{1/p}` by grid quadrature.
    pub fn lp_norm(&self, p: f64) -> Result<f64> {
        if !(p >= 1.0) {
            return Err(Error::param("p", format!("{p} must be >= 1")));
        }
        let u = self.to_physical();
        Ok(lp_integral(&self.grid, &u, p).powf(1.0 / p))
    }

    pub fn max_speed(&self) -> f64 {
        let u = self.to_physical();
        u[0].iter()
            .zip(&u[1])
            .map(|(a, b)| (a * a + b * b).sqrt())
            .fold(0.0, f64::max)
    }

    /// `max_k |k·û(k)| / max_k |û(k)|`.
    pub fn divergence_max(&self) -> f64 {
        let mut div: f64 = 0.0;
        let mut amp: f64 = 0.0;
        for idx in 0..self.grid.len() {
            let (kx, ky) = self.grid.kvec(idx);
            let (a, b) = (self.c[0][idx], self.c[1][idx]);
            div = div.max((a * kx + b * ky).norm());
            amp = amp.max((a.norm_sqr() + b.norm_sqr()).sqrt());
        }
        if amp == 0.0 {
            0.0
        } else {
            div / amp
        }
    }

    /// Largest Hermitian-symmetry defect `|û(−k) − conj û(k)|`.
    pub fn hermitian_defect(&self) -> f64 {
        let n = self.grid.n();
        let neg = |j: usize| (n - j) % n;
        let mut worst: f64 = 0.0;
        for comp in 0..2 {
            for iy in 0..n {
                for ix in 0..n {
                    let a = self.c[comp][iy * n + ix];
                    let b = self.c[comp][neg(iy) * n + neg(ix)];
                    worst = worst.max((a - b.conj()).norm());
                }
            }
        }
        worst
    }

    pub fn is_finite(&self) -> bool {
        self.c
            .iter()
            .all(|comp| comp.iter().all(|c| c.re.is_finite() && c.im.is_finite()))
    }

    pub fn scale(&self, s: f64) -> Self {
        self.map_modes(|_, [a, b]| [a * s, b * s])
    }

    /// `self += a · x`.
    pub fn axpy(&mut self, a: f64, x: &Self) {
        self.expect_same_grid(x);
        for comp in 0..2 {
            for (y, &xv) in self.c[comp].iter_mut().zip(&x.c[comp]) {
                *y += xv * a;
            }
        }
    }

    pub fn norms(&self, p: Option<f64>) -> Result<NormReport> {
        let h = self.h_norm2();
        let g = self.grad_norm2();
        Ok(NormReport {
            h_norm2: h,
            grad_norm2: g,
            v_norm2: h + g,
            lp_norm: p.map(|p| self.lp_norm(p)).transpose()?,
        })
    }
}

impl<'a> Add<&'a VelocityField> for &'a VelocityField {
    type Output = VelocityField;
    fn add(self, rhs: &'a VelocityField) -> VelocityField {
        let mut out = self.clone();
        out.axpy(1.0, rhs);
        out
    }
}

impl<'a> Sub<&'a VelocityField> for &'a VelocityField {
    type Output = VelocityField;
    fn sub(self, rhs: &'a VelocityField) -> VelocityField {
        let mut out = self.clone();
        out.axpy(-1.0, rhs);
        out
    }
}

impl Mul<f64> for &VelocityField {
    type Output = VelocityField;
    fn mul(self, s: f64) -> VelocityField {
        self.scale(s)
    }
}

impl Neg for &VelocityField {
    type Output = VelocityField;
    fn neg(self) -> VelocityField {
        self.scale(-1.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NormReport {
    pub h_norm2: f64,
    pub grad_norm2: f64,
    pub v_norm2: f64,
    pub lp_norm: Option<f64>,
}

pub fn leray_project(u: &VelocityField) -> VelocityField {
    u.project()
}

pub fn stokes_apply(u: &VelocityField) -> VelocityField {
    u.stokes()
}

/// `(u·∇)v` on the grid for already-dealiased inputs.
fn advection_physical(u: &VelocityField, v: &VelocityField) -> Physical {
    let up = u.to_physical();
    let gv = v.gradient_physical();
    let mut out = [vec![0.0; up[0].len()], vec![0.0; up[0].len()]];
    for i in 0..2 {
        for idx in 0..up[0].len() {
            out[i][idx] = up[0][idx] * gv[i][0][idx] + up[1][idx] * gv[i][1][idx];
        }
    }
    out
}

/// `B(u, v) = P[(u·∇)v]` with dealiased inputs and output.
pub fn bilinear_b(u: &VelocityField, v: &VelocityField) -> VelocityField {
    u.expect_same_grid(v);
    let um = u.clone().masked();
    let vm = v.clone().masked();
    VelocityField::from_physical(u.grid(), &advection_physical(&um, &vm))
}

/// `B(u, u)`, optionally `C(u)`, and `max |u|`, sharing one transform of `u`.
pub struct NonlinearTerms {
    pub b: VelocityField,
    pub c: Option<VelocityField>,
    pub max_speed: f64,
}

pub fn nonlinear_terms(u: &VelocityField, r: Option<f64>) -> Result<NonlinearTerms> {
    if let Some(r) = r {
        check_r(r)?;
    }
    let um = u.clone().masked();
    let up = um.to_physical();
    let gv = um.gradient_physical();
    let len = up[0].len();
    let mut adv = [vec![0.0; len], vec![0.0; len]];
    let mut max2: f64 = 0.0;
    for idx in 0..len {
        let (a, b) = (up[0][idx], up[1][idx]);
        max2 = max2.max(a * a + b * b);
        for i in 0..2 {
            adv[i][idx] = a * gv[i][0][idx] + b * gv[i][1][idx];
        }
    }
    let c = r.map(|r| {
        if r == 1.0 {
            um.project()
        } else {
            VelocityField::from_physical(u.grid(), &power_physical(&up, r))
        }
    });
    Ok(NonlinearTerms {
        b: VelocityField::from_physical(u.grid(), &adv),
        c,
        max_speed: max2.sqrt(),
    })
}

/// `b(u, v, w) = ∫ u_i ∂_i v_j w_j` by grid quadrature on dealiased inputs.
pub fn trilinear_b(u: &VelocityField, v: &VelocityField, w: &VelocityField) -> Result<f64> {
    u.same_grid(v)?;
    u.same_grid(w)?;
    let adv = advection_physical(&u.clone().masked(), &v.clone().masked());
    let wp = w.clone().masked().to_physical();
    let mut s = 0.0;
    for i in 0..2 {
        s += adv[i].iter().zip(&wp[i]).map(|(a, b)| a * b).sum::<f64>();
    }
    Ok(s * u.grid().cell_area())
}

fn check_r(r: f64) -> Result<()> {
    if !(r >= 1.0) || !r.is_finite() {
        return Err(Error::param("r", format!("{r} must be >= 1")));
    }
    Ok(())
}

/// `|v|^{e}` with the value `0` at `v = 0` for every `e ≥ 0`.
#[inline]
pub fn safe_pow(mag: f64, e: f64) -> f64 {
    if e == 0.0 {
        1.0
    } else if mag <= f64::EPSILON * 1e-3 {
        0.0
    } else {
        mag.powf(e)
    }
}

/// Pointwise `|u|^{r−1} u`.
pub fn power_physical(u: &Physical, r: f64) -> Physical {
    let len = u[0].len();
    let mut out = [vec![0.0; len], vec![0.0; len]];
    // even integer r − 1 avoids the square root and powf
    let half = (r - 1.0) / 2.0;
    let even = half.fract() == 0.0 && half <= 16.0;
    for idx in 0..len {
        let (a, b) = (u[0][idx], u[1][idx]);
        let w = if even {
            (a * a + b * b).powi(half as i32)
        } else {
            safe_pow((a * a + b * b).sqrt(), r - 1.0)
        };
        out[0][idx] = w * a;
        out[1][idx] = w * b;
    }
    out
}

/// `∫ |u|^p` by quadrature.
pub fn lp_integral(grid: &TorusGrid, u: &Physical, p: f64) -> f64 {
    let s: f64 = u[0]
        .iter()
        .zip(&u[1])
        .map(|(a, b)| safe_pow((a * a + b * b).sqrt(), p))
        .sum();
    s * grid.cell_area()
}

/// `C(u) = P(|u|^{r−1} u)`, dealiased.
pub fn nonlinear_c(u: &VelocityField, r: f64) -> Result<VelocityField> {
    check_r(r)?;
    if r == 1.0 {
        return Ok(u.clone().masked().project());
    }
    let up = u.to_physical();
    Ok(VelocityField::from_physical(u.grid(), &power_physical(&up, r)))
}

/// Gateaux derivative of `C` at `u` in direction `w`.
pub fn gateaux_c(u: &VelocityField, w: &VelocityField, r: f64) -> Result<VelocityField> {
    check_r(r)?;
    u.same_grid(w)?;
    let up = u.to_physical();
    let wp = w.to_physical();
    let len = up[0].len();
    let mut out = [vec![0.0; len], vec![0.0; len]];
    for idx in 0..len {
        let (a, b) = (up[0][idx], up[1][idx]);
        let (c, d) = (wp[0][idx], wp[1][idx]);
        let mag = (a * a + b * b).sqrt();
        let p1 = safe_pow(mag, r - 1.0);
        // u |u|^{r-3} (u·w): zero at u = 0 for every r > 1
        let p3 = if r == 1.0 || mag <= f64::EPSILON * 1e-3 {
            0.0
        } else {
            (r - 1.0) * mag.powf(r - 3.0) * (a * c + b * d)
        };
        out[0][idx] = p1 * c + p3 * a;
        out[1][idx] = p1 * d + p3 * b;
    }
    Ok(VelocityField::from_physical(u.grid(), &out))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct InequalityReport {
    pub lhs: f64,
    pub rhs: f64,
    pub pass: bool,
}

/// `∫ |w|^{e} |d|²` for weight field `w` and difference `d`.
fn weighted_l2(grid: &TorusGrid, w: &Physical, d: &Physical, e: f64) -> f64 {
    let mut s = 0.0;
    for idx in 0..w[0].len() {
        let mag = (w[0][idx].powi(2) + w[1][idx].powi(2)).sqrt();
        s += safe_pow(mag, e) * (d[0][idx].powi(2) + d[1][idx].powi(2));
    }
    s * grid.cell_area()
}

fn diff_physical(a: &Physical, b: &Physical) -> Physical {
    [
        a[0].iter().zip(&b[0]).map(|(x, y)| x - y).collect(),
        a[1].iter().zip(&b[1]).map(|(x, y)| x - y).collect(),
    ]
}

/// Monotonicity of `C`, evaluated on the unprojected pointwise integrands:
/// `∫(|u1|^{r−1}u1 − |u2|^{r−1}u2)·(u1−u2) ≥ ½∫|u1|^{r−1}|u1−u2|² + ½∫|u2|^{r−1}|u1−u2|²`.
pub fn check_monotonicity_c(
    u1: &VelocityField,
    u2: &VelocityField,
    r: f64,
) -> Result<InequalityReport> {
    check_r(r)?;
    u1.same_grid(u2)?;
    let g = u1.grid();
    let (p1, p2) = (u1.to_physical(), u2.to_physical());
    let d = diff_physical(&p1, &p2);
    let dc = diff_physical(&power_physical(&p1, r), &power_physical(&p2, r));
    let mut lhs = 0.0;
    for i in 0..2 {
        lhs += dc[i].iter().zip(&d[i]).map(|(a, b)| a * b).sum::<f64>();
    }
    lhs *= g.cell_area();
    let rhs = 0.5 * weighted_l2(g, &p1, &d, r - 1.0) + 0.5 * weighted_l2(g, &p2, &d, r - 1.0);
    Ok(InequalityReport {
        lhs,
        rhs,
        pass: lhs >= rhs - 1e-9 * (1.0 + lhs.abs()),
    })
}

/// `‖u−v‖^{r+1}_{L^{r+1}} ≤ c_r (∫|u|^{r−1}|u−v|² + ∫|v|^{r−1}|u−v|²)` with
/// `c_r = 2^{r−2}` for `r ≥ 2` and `c_r = 1` for `1 ≤ r ≤ 2`.
pub fn check_a215(u: &VelocityField, v: &VelocityField, r: f64) -> Result<InequalityReport> {
    check_r(r)?;
    u.same_grid(v)?;
    let g = u.grid();
    let (pu, pv) = (u.to_physical(), v.to_physical());
    let d = diff_physical(&pu, &pv);
    let lhs = lp_integral(g, &d, r + 1.0);
    let c = if r >= 2.0 { 2f64.powf(r - 2.0) } else { 1.0 };
    let rhs = c * (weighted_l2(g, &pu, &d, r - 1.0) + weighted_l2(g, &pv, &d, r - 1.0));
    Ok(InequalityReport {
        lhs,
        rhs,
        pass: lhs <= rhs + 1e-9 * (1.0 + rhs.abs()),
    })
}

/// `‖u‖⁴_{L⁴} / (‖u‖²_H ‖∇u‖²_H)`.
pub fn ladyzhenskaya_ratio(u: &VelocityField) -> Result<f64> {
    let h = u.h_norm2();
    let g = u.grad_norm2();
    if h == 0.0 || g == 0.0 {
        return Err(Error::Undefined(
            "Ladyzhenskaya ratio needs a nonzero, non-constant field".into(),
        ));
    }
    let l4 = lp_integral(u.grid(), &u.to_physical(), 4.0);
    Ok(l4 / (h * g))
}

/// `(sin x' cos y', −cos x' sin y')` with `x' = 2πx/L`, scaled by `amplitude`.
pub fn taylor_green(grid: &TorusGrid, amplitude: f64) -> VelocityField {
    taylor_green_shifted(grid, amplitude, 0.0, 0.0)
}

/// Taylor-Green vortex translated by `(px, py)` radians.
pub fn taylor_green_shifted(grid: &TorusGrid, amplitude: f64, px: f64, py: f64) -> VelocityField {
    let s = 2.0 * PI / grid.box_length();
    VelocityField::from_fn(grid, |x, y| {
        let (a, b) = (s * x + px, s * y + py);
        (amplitude * a.sin() * b.cos(), -amplitude * a.cos() * b.sin())
    })
}

/// Random in-band divergence-free field with spectral envelope
/// `(1 + |m|²)^{−decay/2}` and prescribed `‖u‖_H`.
pub fn random_field<R: Rng + ?Sized>(
    grid: &TorusGrid,
    rng: &mut R,
    h_norm: f64,
    decay: f64,
    mean_zero: bool,
) -> VelocityField {
    let len = grid.len();
    let mut c = [Vec::with_capacity(len), Vec::with_capacity(len)];
    for comp in c.iter_mut() {
        for idx in 0..len {
            let n = grid.n();
            let (mx, my) = (
                grid.integer_wavenumber(idx % n) as f64,
                grid.integer_wavenumber(idx / n) as f64,
            );
            let env = (1.0 + mx * mx + my * my).powf(-decay / 2.0);
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            comp.push(Complex64::new(re, im) * env);
        }
    }
    // Real part in physical space enforces Hermitian symmetry.
    let phys = [grid.inverse(&c[0]), grid.inverse(&c[1])];
    let mut u = VelocityField::from_physical(grid, &phys);
    if mean_zero {
        u = u.remove_mean();
    }
    let nrm = u.h_norm();
    if nrm > 0.0 {
        u = u.scale(h_norm / nrm);
    }
    u
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn grid(n: usize) -> TorusGrid {
        TorusGrid::periodic(n).unwrap()
    }

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / a.abs().max(b.abs()).max(1e-300)
    }

    #[test]
    fn grid_validation_and_band() {
        assert!(TorusGrid::periodic(7).is_err());
        assert!(TorusGrid::periodic(6).is_err());
        assert!(TorusGrid::new(16, -1.0).is_err());
        let g = grid(64);
        assert_eq!(g.band_limit(), 21);
        let g = grid(12);
        assert_eq!(g.band_limit(), 3);
    }

    #[test]
    fn fft_round_trip() {
        let g = grid(16);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let vals: Vec<f64> = (0..g.len()).map(|_| rng.random::<f64>()).collect();
        let back = g.inverse(&g.forward(&vals));
        for (a, b) in vals.iter().zip(&back) {
            assert!((a - b).abs() < 1e-13);
        }
    }

    #[test]
    fn single_mode_parseval_closed_form() {
        // u = (0, A cos(x)) has ∫|u|² = A² · (2π)² / 2 on the 2π box.
        let g = grid(32);
        let amp = 1.7;
        let u = VelocityField::from_fn(&g, |x, _| (0.0, amp * x.cos()));
        let want = amp * amp * (2.0 * PI).powi(2) / 2.0;
        assert!(rel(u.h_norm2(), want) < 1e-13);
        assert!(rel(u.grad_norm2(), want) < 1e-13);
        let phys = u.to_physical();
        let quad = g.quadrature(
            &phys[0].iter().zip(&phys[1]).map(|(a, b)| a * a + b * b).collect::<Vec<_>>(),
        );
        assert!(rel(quad, want) < 1e-12);
        let zero = VelocityField::zeros(&g).norms(Some(3.0)).unwrap();
        assert_eq!(zero.h_norm2 + zero.grad_norm2 + zero.lp_norm.unwrap(), 0.0);
    }

    #[test]
    fn gradient_fields_are_annihilated() {
        let g = grid(32);
        // ∇φ for φ = sin(2x) cos(y)
        let u = VelocityField::from_physical_raw(&g, &{
            let mut p = [vec![0.0; g.len()], vec![0.0; g.len()]];
            for idx in 0..g.len() {
                let (x, y) = g.coords(idx);
                p[0][idx] = 2.0 * (2.0 * x).cos() * y.cos();
                p[1][idx] = -(2.0 * x).sin() * y.sin();
            }
            p
        });
        assert!(u.project().h_norm() < 1e-12);
    }

    #[test]
    fn stokes_scales_modes() {
        let g = grid(32);
        let u = VelocityField::from_fn(&g, |_, y| (y.sin(), 0.0));
        assert!((&u.stokes() - &u).h_norm() < 1e-12);
        // mode k = (2, 1): divergence-free field from stream function sin(2x + y)
        let u = VelocityField::from_fn(&g, |x, y| ((2.0 * x + y).cos(), -2.0 * (2.0 * x + y).cos()));
        assert!((&u.stokes() - &u.scale(5.0)).h_norm() < 1e-11);
    }

    #[test]
    fn b_of_constant_v_vanishes_and_taylor_green() {
        let g = grid(32);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let u = random_field(&g, &mut rng, 1.0, 2.0, false);
        let c = VelocityField::from_fn(&g, |_, _| (0.3, -1.1));
        assert!(bilinear_b(&u, &c).h_norm() < 1e-13);
        let tg = taylor_green(&g, 1.0);
        assert!(trilinear_b(&tg, &tg, &tg).unwrap().abs() < 1e-10);
    }

    #[test]
    fn b_pairs_with_trilinear_form() {
        let g = grid(32);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let u = random_field(&g, &mut rng, 1.0, 1.5, false);
        let v = random_field(&g, &mut rng, 1.0, 1.5, false);
        let w = random_field(&g, &mut rng, 1.0, 1.5, false);
        let lhs = bilinear_b(&u, &v).inner(&w);
        let rhs = trilinear_b(&u, &v, &w).unwrap();
        assert!(rel(lhs, rhs) < 1e-10);
    }

    #[test]
    fn c_constant_field_and_identity() {
        let g = grid(16);
        let c = 0.8;
        let u = VelocityField::from_fn(&g, |_, _| (c, 0.0));
        let cu = nonlinear_c(&u, 3.0).unwrap();
        assert!((cu.mean()[0] - c * c * c).abs() < 1e-14);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let v = random_field(&g, &mut rng, 2.0, 1.0, false);
        assert!((&nonlinear_c(&v, 1.0).unwrap() - &v).h_norm() < 1e-13);
        assert!(nonlinear_c(&v, 0.5).is_err());
    }

    #[test]
    fn c_energy_pairing() {
        let g = grid(32);
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for &r in &[1.5, 2.0, 3.0, 4.5] {
            let u = random_field(&g, &mut rng, 3.0, 1.5, false);
            let lhs = nonlinear_c(&u, r).unwrap().inner(&u);
            let rhs = lp_integral(&g, &u.to_physical(), r + 1.0);
            assert!(rel(lhs, rhs) < 1e-8, "r={r}: {lhs} vs {rhs}");
        }
    }

    #[test]
    fn gateaux_pointwise_cases() {
        let g = grid(16);
        let (c, d) = (0.7, -1.3);
        let u = VelocityField::from_fn(&g, |_, _| (c, 0.0));
        let w = VelocityField::from_fn(&g, |_, _| (0.0, d));
        let dc = gateaux_c(&u, &w, 3.0).unwrap();
        assert!(dc.mean()[0].abs() < 1e-14);
        assert!((dc.mean()[1] - c * c * d).abs() < 1e-14);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let v = random_field(&g, &mut rng, 1.0, 1.0, false);
        let w = random_field(&g, &mut rng, 1.0, 1.0, false);
        assert!((&gateaux_c(&v, &w, 1.0).unwrap() - &w).h_norm() < 1e-13);
    }

    #[test]
    fn gateaux_matches_central_differences() {
        let g = grid(32);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for &r in &[2.0, 3.0, 5.0] {
            let u = random_field(&g, &mut rng, 2.0, 1.5, false);
            let w = random_field(&g, &mut rng, 1.0, 1.5, false);
            let eps = 1e-5;
            let mut up = u.clone();
            up.axpy(eps, &w);
            let mut um = u.clone();
            um.axpy(-eps, &w);
            let fd = (&nonlinear_c(&up, r).unwrap() - &nonlinear_c(&um, r).unwrap())
                .scale(0.5 / eps);
            let an = gateaux_c(&u, &w, r).unwrap();
            assert!((&fd - &an).h_norm() / an.h_norm() < 1e-4, "r={r}");
        }
    }

    #[test]
    fn monotonicity_and_a215_special_cases() {
        let g = grid(16);
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let u = random_field(&g, &mut rng, 2.0, 1.0, false);
        let z = VelocityField::zeros(&g);
        let rep = check_monotonicity_c(&u, &z, 3.0).unwrap();
        assert!(rel(rep.lhs, 2.0 * rep.rhs) < 1e-12 && rep.pass);
        let rep = check_monotonicity_c(&u, &u, 3.0).unwrap();
        assert!(rep.lhs == 0.0 && rep.pass);
        let rep = check_a215(&u, &z, 3.0).unwrap();
        assert!(rel(rep.rhs, 2.0 * rep.lhs) < 1e-12 && rep.pass);
        let rep = check_a215(&u, &u, 3.0).unwrap();
        assert!(rep.lhs == 0.0 && rep.pass);
    }

    #[test]
    fn taylor_green_ladyzhenskaya_oracle() {
        // On the 2π box: ∫|u|² = 2π², ‖∇u‖² = 4π², ∫|u|⁴ = 5π²/4.
        let g = grid(32);
        let tg = taylor_green(&g, 1.0);
        let pi2 = PI * PI;
        assert!(rel(tg.h_norm2(), 2.0 * pi2) < 1e-13);
        assert!(rel(tg.grad_norm2(), 4.0 * pi2) < 1e-13);
        let want = (5.0 * pi2 / 4.0) / (2.0 * pi2 * 4.0 * pi2);
        assert!(rel(ladyzhenskaya_ratio(&tg).unwrap(), want) < 1e-12);
        assert!(ladyzhenskaya_ratio(&VelocityField::zeros(&g)).is_err());
    }

    #[test]
    fn dual_norm_of_single_mode() {
        let g = grid(16);
        let u = VelocityField::from_fn(&g, |x, _| (0.0, (2.0 * x).cos()));
        assert!(rel(u.dual_norm2(), u.h_norm2() / 5.0) < 1e-13);
    }

    #[test]
    fn trilinear_rejects_grid_mismatch() {
        let a = VelocityField::zeros(&grid(16));
        let b = VelocityField::zeros(&grid(32));
        assert!(matches!(trilinear_b(&a, &a, &b), Err(Error::GridMismatch { .. })));
    }

    fn field_strategy(n: usize) -> impl Strategy<Value = VelocityField> {
        (any::<u64>(), 0.1f64..5.0, 0.5f64..3.0).prop_map(move |(seed, amp, decay)| {
            let g = TorusGrid::periodic(n).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            random_field(&g, &mut rng, amp, decay, false)
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn projection_idempotent_and_self_adjoint(u in field_strategy(16), seed in any::<u64>()) {
            let g = u.grid().clone();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            // raw, non-solenoidal field
            let raw = VelocityField::from_physical_raw(&g, &[
                (0..g.len()).map(|_| rng.random::<f64>() - 0.5).collect(),
                (0..g.len()).map(|_| rng.random::<f64>() - 0.5).collect(),
            ]);
            let p = raw.project();
            prop_assert!((&p.project() - &p).h_norm() <= 1e-12 * p.h_norm().max(1.0));
            prop_assert!(p.divergence_max() < 1e-10);
            let a = raw.project().inner(&u);
            let b = raw.inner(&u.project());
            prop_assert!((a - b).abs() <= 1e-11 * (a.abs() + b.abs()).max(1e-12));
        }

        #[test]
        fn b_skew_identities(u in field_strategy(16), v in field_strategy(16), w in field_strategy(16)) {
            let scale = u.v_norm2().sqrt() * v.v_norm2().sqrt() * w.v_norm2().sqrt();
            let bvv = trilinear_b(&u, &v, &v).unwrap();
            prop_assert!(bvv.abs() <= 1e-10 * scale);
            let a = trilinear_b(&u, &v, &w).unwrap();
            let b = trilinear_b(&u, &w, &v).unwrap();
            prop_assert!((a + b).abs() <= 1e-9 * scale);
        }

        #[test]
        fn stokes_pairing(u in field_strategy(16)) {
            let lhs = u.stokes().inner(&u);
            prop_assert!((lhs - u.grad_norm2()).abs() <= 1e-10 * lhs.abs().max(1e-300));
        }

        #[test]
        fn c_monotone(u in field_strategy(16), v in field_strategy(16), r in 1.0f64..6.0) {
            let rep = check_monotonicity_c(&u, &v, r).unwrap();
            prop_assert!(rep.pass);
            prop_assert!(rep.lhs >= -1e-12 * (1.0 + rep.rhs));
            prop_assert!(check_a215(&u, &v, r).unwrap().pass);
        }

        #[test]
        fn v_norm_decomposes(u in field_strategy(16)) {
            let rep = u.norms(Some(4.0)).unwrap();
            prop_assert!((rep.v_norm2 - rep.h_norm2 - rep.grad_norm2).abs() <= 1e-12 * rep.v_norm2);
            prop_assert!(u.hermitian_defect() < 1e-14 * u.h_norm().max(1.0));
        }
    }
}
