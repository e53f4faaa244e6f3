//! Local-regularity diagnostics on parabolic cylinders
//! `Q_r(z0) = B_r(x0) x [t0 - r^2, t0]`: dimensionless energy quantities,
//! a heat-semigroup Besov monitor, the localized energy inequality and the
//! radius-iteration smallness criterion.
//!
//! All cylinder machinery assumes a 3-D grid and `4r < pi` so balls never
//! wrap around the box.

use crate::algebra::{commutator_antisym, rotate, PotentialParams, TracelessSym3};
use crate::dynamics::vorticity;
use crate::error::{Error, Result};
use crate::field::{Field, ScalarField, TensorField};
use crate::grid::Grid;
use crate::scalar::{as_f64, r64, Real};
use crate::timestepper::State;

/// Dyadic-style evaluation grid for the heat-semigroup Besov proxy.
#[derive(Clone, Copy, Debug)]
pub struct BesovConfig<R> {
    pub s_min: R,
    pub s_max: R,
    /// Evaluation points per octave of `s`; 1 reproduces the dyadic grid.
    pub per_octave: usize,
}

impl<R: Real> BesovConfig<R> {
    pub fn for_grid(grid: &Grid<R>) -> Self {
        let h = grid.spacing();
        Self {
            s_min: h * h,
            s_max: R::one(),
            per_octave: 4,
        }
    }

    pub fn with_per_octave(mut self, per_octave: usize) -> Self {
        self.per_octave = per_octave.max(1);
        self
    }

    fn values(&self) -> Vec<R> {
        let ratio = r64::<R>(2.0).powf(R::one() / r64(self.per_octave as f64));
        let mut s = self.s_min;
        let mut out = Vec::new();
        while s <= self.s_max {
            out.push(s);
            s = s * ratio;
        }
        out
    }
}

/// `max_s sqrt(s) ||e^{s lap} f||_inf` over the configured `s` grid, with
/// the magnitude taken jointly over all parts (e.g. the three partial
/// derivatives of a tensor field). The field should be mean-zero for the
/// homogeneous norm to be meaningful.
pub fn besov_proxy_parts<R: Real, F: Field<R>>(
    grid: &Grid<R>,
    parts: &[F],
    cfg: &BesovConfig<R>,
) -> Result<R> {
    if cfg.s_min <= R::zero() || cfg.s_max < cfg.s_min {
        return Err(Error::InvalidConfig(
            "besov proxy needs 0 < s_min <= s_max".into(),
        ));
    }
    let spectra: Vec<Vec<Vec<num_complex::Complex<R>>>> = parts
        .iter()
        .map(|f| f.planes().iter().map(|p| grid.forward(p)).collect())
        .collect();
    let mut best = R::zero();
    for s in cfg.values() {
        let smoothed: Vec<F> = spectra
            .iter()
            .map(|specs| {
                let planes = specs
                    .iter()
                    .map(|spec| {
                        let scaled: Vec<_> = spec
                            .iter()
                            .enumerate()
                            .map(|(idx, &v)| v * (-s * grid.k_sq(idx)).exp())
                            .collect();
                        grid.backward(&scaled)
                    })
                    .collect();
                F::from_planes(planes)
            })
            .collect();
        let mut peak = R::zero();
        for idx in 0..grid.len() {
            let mag: R = smoothed
                .iter()
                .map(|f| f.magnitude_sq(idx))
                .fold(R::zero(), |a, v| a + v);
            peak = peak.max(mag);
        }
        best = best.max(s.sqrt() * peak.sqrt());
    }
    Ok(best)
}

pub fn besov_proxy<R: Real, F: Field<R>>(
    grid: &Grid<R>,
    f: &F,
    cfg: &BesovConfig<R>,
) -> Result<R> {
    besov_proxy_parts(grid, std::slice::from_ref(f), cfg)
}

/// Proxy for the gradient of a Q-tensor field.
pub fn besov_proxy_grad_q<R: Real>(
    grid: &Grid<R>,
    q: &TensorField<R>,
    cfg: &BesovConfig<R>,
) -> Result<R> {
    besov_proxy_parts(grid, &grid.gradient_field(q), cfg)
}

// ---------------------------------------------------------------------------
// Ball quadrature.

/// Gauss-Legendre nodes and weights on (-1, 1).
fn gauss_legendre(n: usize) -> Vec<(f64, f64)> {
    let mut out = Vec::with_capacity(n);
    for i in 1..=n {
        let mut x = (std::f64::consts::PI * (i as f64 - 0.25) / (n as f64 + 0.5)).cos();
        for _ in 0..100 {
            // Legendre recurrence for P_n and P_n'.
            let mut p0 = 1.0;
            let mut p1 = x;
            for k in 2..=n {
                let kf = k as f64;
                let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
                p0 = p1;
                p1 = p2;
            }
            let dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        let mut p0 = 1.0;
        let mut p1 = x;
        for k in 2..=n {
            let kf = k as f64;
            let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
            p0 = p1;
            p1 = p2;
        }
        let dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
        out.push((x, 2.0 / ((1.0 - x * x) * dp * dp)));
    }
    out
}

/// Interpolation scheme used to evaluate grid fields at ball quadrature
/// nodes. Cubic convolution gives a C^1 surrogate whose quadrature
/// converges orders of magnitude faster than the kinked trilinear one.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Interpolation {
    Trilinear,
    Tricubic,
}

/// Quadrature resolution for ball integrals.
#[derive(Clone, Copy, Debug)]
pub struct BallQuadrature {
    pub radial: usize,
    pub polar: usize,
    pub azimuthal: usize,
    pub interpolation: Interpolation,
}

impl Default for BallQuadrature {
    fn default() -> Self {
        Self {
            radial: 24,
            polar: 16,
            azimuthal: 32,
            interpolation: Interpolation::Tricubic,
        }
    }
}

impl BallQuadrature {
    pub fn refined(&self, factor: usize) -> Self {
        Self {
            radial: self.radial * factor,
            polar: self.polar * factor,
            azimuthal: self.azimuthal * factor,
            interpolation: self.interpolation,
        }
    }
}

/// Product rule over the ball `|y| <= r`: Gauss-Legendre in radius and
/// polar angle, trapezoid in azimuth. Weights sum to `4 pi r^3 / 3`
/// exactly, so constants integrate without quadrature error.
struct BallRule<R> {
    points: Vec<([R; 3], R)>,
    interpolation: Interpolation,
}

impl<R: Real> BallRule<R> {
    fn new(radius: R, quad: &BallQuadrature) -> Self {
        let rf = as_f64(radius);
        let radial = gauss_legendre(quad.radial);
        let polar = gauss_legendre(quad.polar);
        let n_theta = quad.azimuthal;
        let dtheta = 2.0 * std::f64::consts::PI / n_theta as f64;
        let mut points = Vec::with_capacity(quad.radial * quad.polar * n_theta);
        for &(xr, wr) in &radial {
            // Map (-1,1) to (0, r).
            let rho = 0.5 * rf * (xr + 1.0);
            let w_rho = 0.5 * rf * wr * rho * rho;
            for &(mu, wmu) in &polar {
                let sin_phi = (1.0 - mu * mu).sqrt();
                for it in 0..n_theta {
                    let theta = dtheta * it as f64;
                    let offset = [
                        r64::<R>(rho * sin_phi * theta.cos()),
                        r64::<R>(rho * sin_phi * theta.sin()),
                        r64::<R>(rho * mu),
                    ];
                    points.push((offset, r64::<R>(w_rho * wmu * dtheta)));
                }
            }
        }
        Self {
            points,
            interpolation: quad.interpolation,
        }
    }
}

fn cell_and_fraction<R: Real>(grid: &Grid<R>, x: [R; 3]) -> ([usize; 3], [R; 3]) {
    let n = grid.n();
    let h = grid.spacing();
    let mut base = [0usize; 3];
    let mut frac = [R::zero(); 3];
    for a in 0..3 {
        let s = x[a] / h;
        let fl = s.floor();
        frac[a] = s - fl;
        let cell = as_f64(fl) as i64;
        base[a] = cell.rem_euclid(n as i64) as usize;
    }
    (base, frac)
}

/// Periodic trilinear interpolation of one sample plane.
fn trilinear<R: Real>(grid: &Grid<R>, plane: &ScalarField<R>, x: [R; 3]) -> R {
    let n = grid.n();
    let (base, frac) = cell_and_fraction(grid, x);
    let at = |i: usize, j: usize, k: usize| -> R {
        plane.data[(i * n + j) * n + k]
    };
    let mut acc = R::zero();
    for di in 0..2usize {
        for dj in 0..2usize {
            for dk in 0..2usize {
                let wi = if di == 0 { R::one() - frac[0] } else { frac[0] };
                let wj = if dj == 0 { R::one() - frac[1] } else { frac[1] };
                let wk = if dk == 0 { R::one() - frac[2] } else { frac[2] };
                acc += wi
                    * wj
                    * wk
                    * at(
                        (base[0] + di) % n,
                        (base[1] + dj) % n,
                        (base[2] + dk) % n,
                    );
            }
        }
    }
    acc
}

#[inline]
fn catmull_rom_weights<R: Real>(t: R) -> [R; 4] {
    let half = r64::<R>(0.5);
    let t2 = t * t;
    let t3 = t2 * t;
    [
        half * (-t3 + r64::<R>(2.0) * t2 - t),
        half * (r64::<R>(3.0) * t3 - r64::<R>(5.0) * t2 + r64::<R>(2.0)),
        half * (-r64::<R>(3.0) * t3 + r64::<R>(4.0) * t2 + t),
        half * (t3 - t2),
    ]
}

/// Periodic cubic-convolution (Catmull-Rom) interpolation.
fn tricubic<R: Real>(grid: &Grid<R>, plane: &ScalarField<R>, x: [R; 3]) -> R {
    let n = grid.n();
    let (base, frac) = cell_and_fraction(grid, x);
    let wx = catmull_rom_weights(frac[0]);
    let wy = catmull_rom_weights(frac[1]);
    let wz = catmull_rom_weights(frac[2]);
    let wrap = |b: usize, d: usize| (b + n + d - 1) % n;
    let mut acc = R::zero();
    for di in 0..4usize {
        let i = wrap(base[0], di);
        let mut acc_j = R::zero();
        for dj in 0..4usize {
            let j = wrap(base[1], dj);
            let row = (i * n + j) * n;
            let mut acc_k = R::zero();
            for dk in 0..4usize {
                acc_k += wz[dk] * plane.data[row + wrap(base[2], dk)];
            }
            acc_j += wy[dj] * acc_k;
        }
        acc += wx[di] * acc_j;
    }
    acc
}

fn interpolate<R: Real>(
    grid: &Grid<R>,
    plane: &ScalarField<R>,
    x: [R; 3],
    scheme: Interpolation,
) -> R {
    match scheme {
        Interpolation::Trilinear => trilinear(grid, plane, x),
        Interpolation::Tricubic => tricubic(grid, plane, x),
    }
}

/// Test-only window into the ball quadrature.
#[doc(hidden)]
pub fn ball_integral_probe<R: Real>(
    grid: &Grid<R>,
    plane: &ScalarField<R>,
    center: [R; 3],
    radius: R,
    quad: &BallQuadrature,
) -> R {
    ball_integral(grid, plane, center, &BallRule::new(radius, quad))
}

fn ball_integral<R: Real>(
    grid: &Grid<R>,
    plane: &ScalarField<R>,
    center: [R; 3],
    rule: &BallRule<R>,
) -> R {
    let mut acc = R::zero();
    for (offset, w) in &rule.points {
        let x = [
            center[0] + offset[0],
            center[1] + offset[1],
            center[2] + offset[2],
        ];
        acc += *w * interpolate(grid, plane, x, rule.interpolation);
    }
    acc
}

// ---------------------------------------------------------------------------
// Cylinder quantities.

/// Dimensionless quantities on one parabolic cylinder.
#[derive(Clone, Debug)]
pub struct CknReport<R> {
    pub center: [R; 3],
    pub t0: R,
    pub radius: R,
    /// `E(u,gradQ;r) = sup_t r^{-1} int_B (|u|^2, |grad Q|^2)`.
    pub e_sup: R,
    /// `E*(u,gradQ;r) = r^{-1} iint (|grad u|^2 + |grad grad Q|^2)`.
    pub e_star: R,
    /// `E_3(u,gradQ;r) = r^{-2} iint (|u|^3 + |grad Q|^3)`.
    pub e3: R,
    /// `P_{3/2}(P,r) = r^{-2} iint |P|^{3/2}`.
    pub p32: R,
    /// `F_1 = E + E* + P_{3/2}`.
    pub f1: R,
    /// Besov proxy of `(u, grad Q)` over the cylinder's time window.
    pub besov: R,
    /// Whether `F_1 <= eps1^2 theta^2`.
    pub small: bool,
}

#[derive(Clone, Copy, Debug)]
pub struct CknConfig<R> {
    pub quadrature: BallQuadrature,
    pub besov: BesovConfig<R>,
    pub eps1: R,
    pub theta: R,
}

impl<R: Real> CknConfig<R> {
    pub fn for_grid(grid: &Grid<R>) -> Self {
        Self {
            quadrature: BallQuadrature::default(),
            besov: BesovConfig::for_grid(grid).with_per_octave(2),
            eps1: r64(0.1),
            theta: r64(0.5),
        }
    }
}

fn check_window<R: Real>(times: &[R], lo: R, hi: R) -> Result<()> {
    let tol = r64::<R>(1e-9);
    if times.is_empty() || times[0] > lo + tol || times[times.len() - 1] < hi - tol {
        return Err(Error::WindowTooShort {
            have_lo: times.first().map(|&t| as_f64(t)).unwrap_or(f64::NAN),
            have_hi: times.last().map(|&t| as_f64(t)).unwrap_or(f64::NAN),
            need_lo: as_f64(lo),
            need_hi: as_f64(hi),
        });
    }
    Ok(())
}

/// Linear interpolation of a sampled series, clamped at the ends.
fn interp_series<R: Real>(times: &[R], values: &[R], t: R) -> R {
    match times.iter().position(|&x| x >= t) {
        Some(0) => values[0],
        Some(i) => {
            let (t0, t1) = (times[i - 1], times[i]);
            let w = if t1 > t0 { (t - t0) / (t1 - t0) } else { R::zero() };
            values[i - 1] * (R::one() - w) + values[i] * w
        }
        None => values[values.len() - 1],
    }
}

/// Trapezoid of sampled values over `[lo, hi]` with linear interpolation
/// at the window boundaries.
fn trapezoid_window<R: Real>(times: &[R], values: &[R], lo: R, hi: R) -> R {
    let mut knots = vec![lo];
    for &t in times {
        if t > lo && t < hi {
            knots.push(t);
        }
    }
    knots.push(hi);
    let mut acc = R::zero();
    for pair in knots.windows(2) {
        acc += (pair[1] - pair[0])
            * (interp_series(times, values, pair[0]) + interp_series(times, values, pair[1]))
            * r64::<R>(0.5);
    }
    acc
}

/// Scalar planes entering the cylinder integrals for one snapshot.
struct SnapshotPlanes<R> {
    u_sq: ScalarField<R>,
    u_cu: ScalarField<R>,
    grad_u_sq: ScalarField<R>,
    gq_sq: ScalarField<R>,
    gq_cu: ScalarField<R>,
    hess_q_sq: ScalarField<R>,
    p_pow: ScalarField<R>,
}

fn snapshot_planes<R: Real>(
    grid: &Grid<R>,
    state: &State<R>,
    pressure: &ScalarField<R>,
) -> SnapshotPlanes<R> {
    let dim = grid.dim();
    let grad_u = grid.gradient_field(&state.u);
    let grad_q = grid.gradient_field(&state.q);
    // Second derivatives of Q: pairs (a, b) with a <= b, off-diagonal twice.
    let q_hat: Vec<_> = state.q.comps.iter().map(|p| grid.forward(p)).collect();
    let mut hess_sq = ScalarField::zeros(grid);
    for a in 0..dim {
        for b in a..dim {
            let planes: Vec<ScalarField<R>> = q_hat
                .iter()
                .map(|s| {
                    let da = grid.derivative_spectral(s, a);
                    grid.backward(&grid.derivative_spectral(&da, b))
                })
                .collect();
            let tf = TensorField::from_planes(planes);
            let mult = if a == b { R::one() } else { r64(2.0) };
            for idx in 0..grid.len() {
                hess_sq.data[idx] += mult * tf.magnitude_sq(idx);
            }
        }
    }
    let mut planes = SnapshotPlanes {
        u_sq: ScalarField::zeros(grid),
        u_cu: ScalarField::zeros(grid),
        grad_u_sq: ScalarField::zeros(grid),
        gq_sq: ScalarField::zeros(grid),
        gq_cu: ScalarField::zeros(grid),
        hess_q_sq: hess_sq,
        p_pow: ScalarField::zeros(grid),
    };
    for idx in 0..grid.len() {
        let usq = state.u.magnitude_sq(idx);
        planes.u_sq.data[idx] = usq;
        planes.u_cu.data[idx] = usq * usq.sqrt();
        planes.grad_u_sq.data[idx] = grad_u
            .iter()
            .map(|g| g.magnitude_sq(idx))
            .fold(R::zero(), |a, v| a + v);
        let gq = grad_q
            .iter()
            .map(|g| g.magnitude_sq(idx))
            .fold(R::zero(), |a, v| a + v);
        planes.gq_sq.data[idx] = gq;
        planes.gq_cu.data[idx] = gq * gq.sqrt();
        planes.p_pow.data[idx] = pressure.data[idx].abs().powf(r64(1.5));
    }
    planes
}

/// Cylinder quantities for one `(z0, r)`.
///
/// The trajectory must cover `[t0 - (4r)^2, t0]`; spatial integrals use the
/// spherical product rule with trilinear interpolation, time integrals a
/// boundary-interpolated trapezoid over the stored samples.
pub fn ckn_quantities<R: Real>(
    grid: &Grid<R>,
    states: &[State<R>],
    pressures: &[ScalarField<R>],
    center: [R; 3],
    t0: R,
    radius: R,
    cfg: &CknConfig<R>,
) -> Result<CknReport<R>> {
    if grid.dim() != 3 {
        return Err(Error::InvalidConfig(
            "cylinder quantities require a 3-D grid".into(),
        ));
    }
    if !(radius > R::zero()) || r64::<R>(4.0) * radius >= R::PI() {
        return Err(Error::RadiusTooLarge { r: as_f64(radius) });
    }
    if states.len() != pressures.len() {
        return Err(Error::MismatchedRuns(format!(
            "{} states but {} pressure snapshots",
            states.len(),
            pressures.len()
        )));
    }
    let times: Vec<R> = states.iter().map(|s| s.t).collect();
    let four_r = r64::<R>(4.0) * radius;
    check_window(&times, t0 - four_r * four_r, t0)?;

    let lo = t0 - radius * radius;
    let hi = t0;
    let tol = r64::<R>(1e-9);
    // Indices participating in the cylinder (one extra sample on each side
    // for boundary interpolation).
    let mut first = times.iter().position(|&t| t >= lo - tol).unwrap_or(0);
    first = first.saturating_sub(1);
    let mut last = times
        .iter()
        .rposition(|&t| t <= hi + tol)
        .unwrap_or(times.len() - 1);
    last = (last + 1).min(times.len() - 1);

    let rule = BallRule::new(radius, &cfg.quadrature);
    let mut ts = Vec::new();
    let mut u_sq_int = Vec::new();
    let mut u_cu_int = Vec::new();
    let mut gu_sq_int = Vec::new();
    let mut gq_sq_int = Vec::new();
    let mut gq_cu_int = Vec::new();
    let mut hq_sq_int = Vec::new();
    let mut p_int = Vec::new();
    let mut besov = R::zero();
    for i in first..=last {
        let planes = snapshot_planes(grid, &states[i], &pressures[i]);
        ts.push(times[i]);
        u_sq_int.push(ball_integral(grid, &planes.u_sq, center, &rule));
        u_cu_int.push(ball_integral(grid, &planes.u_cu, center, &rule));
        gu_sq_int.push(ball_integral(grid, &planes.grad_u_sq, center, &rule));
        gq_sq_int.push(ball_integral(grid, &planes.gq_sq, center, &rule));
        gq_cu_int.push(ball_integral(grid, &planes.gq_cu, center, &rule));
        hq_sq_int.push(ball_integral(grid, &planes.hess_q_sq, center, &rule));
        p_int.push(ball_integral(grid, &planes.p_pow, center, &rule));
        if times[i] >= lo - tol && times[i] <= hi + tol {
            let bu = besov_proxy(grid, &states[i].u, &cfg.besov)?;
            let bq = besov_proxy_grad_q(grid, &states[i].q, &cfg.besov)?;
            besov = besov.max(bu + bq);
        }
    }

    let inv_r = R::one() / radius;
    let inv_r2 = inv_r * inv_r;
    // sup over sampled times inside the window, plus the interpolated
    // window endpoints (windows can be shorter than the sample spacing).
    let density: Vec<R> = u_sq_int
        .iter()
        .zip(gq_sq_int.iter())
        .map(|(&a, &b)| a + b)
        .collect();
    let mut e_sup = interp_series(&ts, &density, lo)
        .max(interp_series(&ts, &density, hi))
        * inv_r;
    for (i, &t) in ts.iter().enumerate() {
        if t >= lo - tol && t <= hi + tol {
            e_sup = e_sup.max(inv_r * density[i]);
        }
    }
    let e_star = inv_r
        * (trapezoid_window(&ts, &gu_sq_int, lo, hi) + trapezoid_window(&ts, &hq_sq_int, lo, hi));
    let e3 = inv_r2
        * (trapezoid_window(&ts, &u_cu_int, lo, hi) + trapezoid_window(&ts, &gq_cu_int, lo, hi));
    let p32 = inv_r2 * trapezoid_window(&ts, &p_int, lo, hi);
    let f1 = e_sup + e_star + p32;
    let threshold = cfg.eps1 * cfg.eps1 * cfg.theta * cfg.theta;
    Ok(CknReport {
        center,
        t0,
        radius,
        e_sup,
        e_star,
        e3,
        p32,
        f1,
        besov,
        small: f1 <= threshold,
    })
}

// ---------------------------------------------------------------------------
// Localized energy inequality.

/// Smooth space-time cutoff: 1 on `Q_r(z0)`, supported in `Q_{2r}(z0)`.
///
/// Built from quintic smoothsteps; the test function used in the local
/// energy inequality is the square of this profile. A smooth transition
/// from 1 to 0 over a width-`r` shell forces `sup |grad phi| >= 1/r`, so
/// the certified bounds carry the profile constants below rather than the
/// unattainable `1/(2r)`.
#[derive(Clone, Copy, Debug)]
pub struct CutoffSpec<R> {
    pub center: [R; 3],
    pub t0: R,
    pub r: R,
}

/// `sup |grad phi^2| <= GRAD_FACTOR / r`.
pub const CUTOFF_GRAD_FACTOR: f64 = 3.75;
/// `sup (|hess phi^2| + |d_t phi^2|) <= CURV_FACTOR / r^2` (Frobenius norm).
pub const CUTOFF_CURV_FACTOR: f64 = 45.0;

fn smoothstep(x: f64) -> (f64, f64, f64) {
    // Quintic smoothstep with clamped tails; value, first and second
    // derivatives.
    if x <= 0.0 {
        (0.0, 0.0, 0.0)
    } else if x >= 1.0 {
        (1.0, 0.0, 0.0)
    } else {
        let v = x * x * x * (10.0 + x * (-15.0 + 6.0 * x));
        let d = 30.0 * x * x * (x - 1.0) * (x - 1.0);
        let dd = 60.0 * x * (2.0 * x - 1.0) * (x - 1.0);
        (v, d, dd)
    }
}

/// Value and derivatives of the squared cutoff `phi = (chi psi)^2`.
pub struct CutoffEval<R> {
    pub phi: R,
    pub phi_t: R,
    pub grad: [R; 3],
    pub hess: [[R; 3]; 3],
}

impl<R: Real> CutoffSpec<R> {
    /// Minimal-image displacement from the cutoff center.
    fn displacement(&self, x: [R; 3]) -> [R; 3] {
        let two_pi = r64::<R>(2.0) * R::PI();
        let mut d = [R::zero(); 3];
        for a in 0..3 {
            let mut v = x[a] - self.center[a];
            while v > R::PI() {
                v -= two_pi;
            }
            while v < -R::PI() {
                v += two_pi;
            }
            d[a] = v;
        }
        d
    }

    /// Spatial profile `chi` and derivatives at distance `rho`.
    fn chi(&self, rho: f64) -> (f64, f64, f64) {
        let rf = as_f64(self.r);
        let (s, ds, dds) = smoothstep((rho - rf) / rf);
        (1.0 - s, -ds / rf, -dds / (rf * rf))
    }

    /// Temporal profile `psi` rising from 0 at `t0 - (2r)^2` to 1 at `t0 - r^2`.
    fn psi(&self, t: f64) -> (f64, f64) {
        let rf = as_f64(self.r);
        let lo = as_f64(self.t0) - 4.0 * rf * rf;
        let width = 3.0 * rf * rf;
        let (s, ds, _) = smoothstep((t - lo) / width);
        (s, ds / width)
    }

    pub fn eval(&self, x: [R; 3], t: R) -> CutoffEval<R> {
        let d = self.displacement(x);
        let rho2 = as_f64(d[0] * d[0] + d[1] * d[1] + d[2] * d[2]);
        let rho = rho2.sqrt();
        let (chi, dchi, ddchi) = self.chi(rho);
        let (psi, dpsi) = self.psi(as_f64(t));
        let phi = (chi * psi).powi(2);
        let phi_t = 2.0 * chi * chi * psi * dpsi;
        let mut grad = [R::zero(); 3];
        let mut hess = [[R::zero(); 3]; 3];
        if rho > 1e-12 && (dchi != 0.0 || ddchi != 0.0) {
            let psi2 = psi * psi;
            let er: Vec<f64> = d.iter().map(|&v| as_f64(v) / rho).collect();
            for a in 0..3 {
                grad[a] = r64(2.0 * chi * dchi * psi2 * er[a]);
            }
            for a in 0..3 {
                for b in 0..3 {
                    let delta = if a == b { 1.0 } else { 0.0 };
                    let radial = 2.0 * (dchi * dchi + chi * ddchi) * er[a] * er[b];
                    let angular = 2.0 * chi * dchi * (delta - er[a] * er[b]) / rho;
                    hess[a][b] = r64(psi2 * (radial + angular));
                }
            }
        }
        CutoffEval {
            phi: r64(phi),
            phi_t: r64(phi_t),
            grad,
            hess,
        }
    }

    /// Sampled verification of the certified profile bounds.
    pub fn sampled_check(&self, grid: &Grid<R>) -> Result<()> {
        if r64::<R>(4.0) * self.r >= R::PI() {
            return Err(Error::RadiusTooLarge { r: as_f64(self.r) });
        }
        let rf = as_f64(self.r);
        let t_samples = [
            self.t0 - r64::<R>(3.99) * self.r * self.r,
            self.t0 - r64::<R>(2.0) * self.r * self.r,
            self.t0 - self.r * self.r,
            self.t0,
        ];
        for &t in &t_samples {
            for idx in 0..grid.len() {
                let x = grid.point(idx);
                let e = self.eval(x, t);
                let d = self.displacement(x);
                let rho = as_f64(d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt();
                let inside_qr = rho <= rf && as_f64(t) >= as_f64(self.t0) - rf * rf;
                let outside = rho >= 2.0 * rf
                    || as_f64(t) <= as_f64(self.t0) - 4.0 * rf * rf;
                if inside_qr && as_f64(e.phi - R::one()).abs() > 1e-12 {
                    return Err(Error::UnsupportedCutoff(format!(
                        "phi != 1 inside the unit cylinder at rho = {rho}"
                    )));
                }
                if outside && as_f64(e.phi) != 0.0 {
                    return Err(Error::UnsupportedCutoff(
                        "phi does not vanish outside the double cylinder".into(),
                    ));
                }
                let grad_mag = as_f64(
                    (e.grad[0] * e.grad[0] + e.grad[1] * e.grad[1] + e.grad[2] * e.grad[2])
                        .sqrt(),
                );
                if grad_mag > CUTOFF_GRAD_FACTOR / rf * (1.0 + 1e-9) {
                    return Err(Error::UnsupportedCutoff(format!(
                        "|grad phi| = {grad_mag} exceeds {CUTOFF_GRAD_FACTOR}/r"
                    )));
                }
                let mut hess_sq = 0.0;
                for row in &e.hess {
                    for &v in row {
                        hess_sq += as_f64(v) * as_f64(v);
                    }
                }
                let curv = hess_sq.sqrt() + as_f64(e.phi_t).abs();
                if curv > CUTOFF_CURV_FACTOR / (rf * rf) * (1.0 + 1e-9) {
                    return Err(Error::UnsupportedCutoff(format!(
                        "|hess phi| + |phi_t| = {curv} exceeds {CUTOFF_CURV_FACTOR}/r^2"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Signed residual `LHS - RHS` of the localized energy balance with
/// `phi = cutoff^2`; smooth solutions satisfy it with equality, so the
/// residual measures discretization error and should be `<= 0` up to
/// tolerance for suitable behavior.
///
/// The terms carrying second derivatives of the cutoff
/// (`(|u|^2+|grad Q|^2) lap(phi)` and
/// `2 (grad Q x grad Q - |grad Q|^2 I) : hess(phi)`) are evaluated in their
/// integrated-by-parts form, with the derivative landing on the band-limited
/// fields: the cutoff is not band-limited a nd quadrature against its Hessian
/// converges far too slowly, while the equivalent `grad(phi)` pairings are
/// accurate at realistic resolutions.
#[derive(Clone, Copy, Debug)]
pub struct LocalEnergyReport<R> {
    pub lhs: R,
    pub rhs: R,
    pub residual: R,
    /// `max(|lhs|, |rhs|)`, the natural normalization for the residual.
    pub scale: R,
}

pub fn local_energy_residual<R: Real>(
    grid: &Grid<R>,
    states: &[State<R>],
    pressures: &[ScalarField<R>],
    cutoff: &CutoffSpec<R>,
    potential: &PotentialParams<R>,
) -> Result<LocalEnergyReport<R>> {
    if grid.dim() != 3 {
        return Err(Error::InvalidConfig(
            "the localized energy balance requires a 3-D grid".into(),
        ));
    }
    if states.len() != pressures.len() {
        return Err(Error::MismatchedRuns(format!(
            "{} states but {} pressure snapshots",
            states.len(),
            pressures.len()
        )));
    }
    cutoff.sampled_check(grid)?;
    let times: Vec<R> = states.iter().map(|s| s.t).collect();
    // The temporal profile rises from 0 starting at t0 - (2r)^2; samples
    // must cover the full support.
    let support_lo = cutoff.t0 - r64::<R>(4.0) * cutoff.r * cutoff.r;
    check_window(&times, support_lo, cutoff.t0)?;

    let dim = 3usize;
    let cell = grid.cell_volume();

    // Per-snapshot integrands.
    let mut ts = Vec::new();
    let mut dissipation_term = Vec::new();
    let mut rhs_term = Vec::new();
    let mut top_term = R::zero();
    let tol = r64::<R>(1e-9);
    for (i, state) in states.iter().enumerate() {
        let t = times[i];
        if t < support_lo - tol || t > cutoff.t0 + tol {
            continue;
        }
        let grad_u = grid.gradient_field(&state.u);
        let grad_q = grid.gradient_field(&state.q);
        let lap_q = grid.laplacian(&state.q);
        let w = vorticity(grid, &state.u);
        let mut lsf = TensorField::zeros(grid);
        for idx in 0..grid.len() {
            lsf.set(idx, potential.gradient(&state.q.at(idx)));
        }
        let grad_lsf = grid.gradient_field(&lsf);
        let pressure = &pressures[i];

        // Band-limited auxiliaries for the by-parts terms.
        let mut density_plane = ScalarField::zeros(grid);
        let mut gq_sq_plane = ScalarField::zeros(grid);
        for idx in 0..grid.len() {
            let gq: R = grad_q
                .iter()
                .map(|g| g.magnitude_sq(idx))
                .fold(R::zero(), |a, v| a + v);
            gq_sq_plane.data[idx] = gq;
            density_plane.data[idx] = state.u.magnitude_sq(idx) + gq;
        }
        let grad_density = grid.gradient(&density_plane);
        // div of M_ab = dQ_a : dQ_b - delta_ab |grad Q|^2.
        let mut elastic_planes: Vec<Vec<num_complex::Complex<R>>> = Vec::new();
        for a in 0..dim {
            for b in a..dim {
                let mut t = ScalarField::zeros(grid);
                for idx in 0..grid.len() {
                    t.data[idx] = grad_q[a].at(idx).dot(&grad_q[b].at(idx));
                    if a == b {
                        t.data[idx] -= gq_sq_plane.data[idx];
                    }
                }
                elastic_planes.push(grid.forward(&t));
            }
        }
        let pair = |a: usize, b: usize| -> usize {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            lo * dim - lo * (lo + 1) / 2 + hi
        };
        let div_m: Vec<ScalarField<R>> = (0..dim)
            .map(|b| {
                let spec: Vec<num_complex::Complex<R>> = (0..grid.len())
                    .map(|idx| {
                        let kg = grid.grad_mode(idx);
                        let mut acc = num_complex::Complex::new(R::zero(), R::zero());
                        for a in 0..dim {
                            let v = elastic_planes[pair(a, b)][idx];
                            acc += num_complex::Complex::new(-v.im * kg[a], v.re * kg[a]);
                        }
                        acc
                    })
                    .collect();
                grid.backward(&spec)
            })
            .collect();

        let mut diss = R::zero();
        let mut rhs_acc = R::zero();
        let mut top_acc = R::zero();
        let at_top = (t - cutoff.t0).abs() <= tol;
        for idx in 0..grid.len() {
            let x = grid.point(idx);
            let e = cutoff.eval(x, t);
            let has_grad = e.grad[0] != R::zero()
                || e.grad[1] != R::zero()
                || e.grad[2] != R::zero();
            if e.phi == R::zero() && e.phi_t == R::zero() && !has_grad {
                continue;
            }
            let u_sq = state.u.magnitude_sq(idx);
            let gq_sq: R = grad_q
                .iter()
                .map(|g| g.magnitude_sq(idx))
                .fold(R::zero(), |a, v| a + v);
            let density = u_sq + gq_sq;

            if e.phi != R::zero() {
                let gu_sq: R = grad_u
                    .iter()
                    .map(|g| g.magnitude_sq(idx))
                    .fold(R::zero(), |a, v| a + v);
                diss += (gu_sq + lap_q.magnitude_sq(idx)) * e.phi;
                // Relaxation exchange: grad(L[dF(Q)]) : grad Q.
                let mut pot = R::zero();
                for g in 0..dim {
                    pot += grad_lsf[g].at(idx).dot(&grad_q[g].at(idx));
                }
                rhs_acc -= r64::<R>(2.0) * pot * e.phi;
                if at_top {
                    top_acc += density * e.phi;
                }
            }

            rhs_acc += density * e.phi_t;

            if has_grad {
                // density * lap(phi), integrated by parts.
                for a in 0..dim {
                    rhs_acc -= grad_density.comps[a].data[idx] * e.grad[a];
                }
                // 2 (grad Q x grad Q - |grad Q|^2 I) : hess(phi), by parts.
                for b in 0..dim {
                    rhs_acc -= r64::<R>(2.0) * div_m[b].data[idx] * e.grad[b];
                }
            }
            if has_grad {
                let uv = state.u.at(idx);
                let u_dot_grad: R = (0..dim).map(|a| uv[a] * e.grad[a]).sum();
                // Transport and pressure flux.
                rhs_acc += (density + r64::<R>(2.0) * pressure.data[idx]) * u_dot_grad;
                // Elastic flux: 2 (grad Q x grad Q) : u x grad(phi).
                let mut elastic = R::zero();
                for a in 0..dim {
                    for b in 0..dim {
                        elastic += grad_q[a].at(idx).dot(&grad_q[b].at(idx))
                            * uv[a]
                            * e.grad[b];
                    }
                }
                rhs_acc += r64::<R>(2.0) * elastic;
                // Rotational flux: -2 [Q, lap Q] : u x grad(phi).
                let sigma = commutator_antisym(&state.q.at(idx), &lap_q.at(idx));
                let sg = sigma.to_matrix();
                let mut rot = R::zero();
                for a in 0..dim {
                    for b in 0..dim {
                        rot += sg.0[a][b] * uv[a] * e.grad[b];
                    }
                }
                rhs_acc -= r64::<R>(2.0) * rot;
                // Corotation flux: -2 [w, Q] : (grad Q . grad phi).
                let rotq = rotate(&w.at(idx), &state.q.at(idx));
                let mut carried = TracelessSym3::zero();
                for g in 0..dim {
                    carried = carried + grad_q[g].at(idx).scale(e.grad[g]);
                }
                rhs_acc -= r64::<R>(2.0) * rotq.dot(&carried);
            }
        }
        ts.push(t);
        dissipation_term.push(diss * cell);
        rhs_term.push(rhs_acc * cell);
        if at_top {
            top_term = top_acc * cell;
        }
    }
    if ts.len() < 2 {
        return Err(Error::WindowTooShort {
            have_lo: times.first().map(|&t| as_f64(t)).unwrap_or(f64::NAN),
            have_hi: times.last().map(|&t| as_f64(t)).unwrap_or(f64::NAN),
            need_lo: as_f64(support_lo),
            need_hi: as_f64(cutoff.t0),
        });
    }

    let lhs = top_term
        + r64::<R>(2.0) * trapezoid_window(&ts, &dissipation_term, support_lo, cutoff.t0);
    let rhs = trapezoid_window(&ts, &rhs_term, support_lo, cutoff.t0);
    let residual = lhs - rhs;
    Ok(LocalEnergyReport {
        lhs,
        rhs,
        residual,
        scale: lhs.abs().max(rhs.abs()),
    })
}

// ---------------------------------------------------------------------------
// Radius iteration.

#[derive(Clone, Debug)]
pub struct CriterionVerdict<R> {
    pub f1_by_level: Vec<R>,
    /// First level `k` with `F_1(theta^k rho) <= eps1^2 theta^2`.
    pub first_small: Option<usize>,
    /// Whether `F_1` is nonincreasing for `k >= 1`.
    pub nonincreasing_beyond_first: bool,
}

pub fn criterion_iteration<R: Real>(
    reports: &[CknReport<R>],
    eps1: R,
    theta: R,
) -> Result<CriterionVerdict<R>> {
    if reports.len() < 2 {
        return Err(Error::TooFewRadii(reports.len()));
    }
    let threshold = eps1 * eps1 * theta * theta;
    let f1: Vec<R> = reports.iter().map(|r| r.f1).collect();
    let first_small = f1.iter().position(|&v| v <= threshold);
    let mut nonincreasing = true;
    for i in 1..f1.len() - 1 {
        if f1[i + 1] > f1[i] * (R::one() + r64(1e-9)) {
            nonincreasing = false;
        }
    }
    Ok(CriterionVerdict {
        f1_by_level: f1,
        first_small,
        nonincreasing_beyond_first: nonincreasing,
    })
}

/// Convenience: reports at radii `theta^k rho` for `k = 0..levels`.
#[allow(clippy::too_many_arguments)]
pub fn ckn_report_series<R: Real>(
    grid: &Grid<R>,
    states: &[State<R>],
    pressures: &[ScalarField<R>],
    center: [R; 3],
    t0: R,
    rho: R,
    levels: usize,
    cfg: &CknConfig<R>,
) -> Result<Vec<CknReport<R>>> {
    let mut out = Vec::with_capacity(levels);
    let mut radius = rho;
    for _ in 0..levels {
        out.push(ckn_quantities(
            grid, states, pressures, center, t0, radius, cfg,
        )?);
        radius = radius * cfg.theta;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::VectorField;

    #[test]
    fn besov_proxy_single_mode_matches_calculus() {
        let grid = Grid::<f64>::new(2, 64).unwrap();
        let u = VectorField::from_fn(&grid, |x| [0.0, x[0].sin(), 0.0]);
        let cfg = BesovConfig::for_grid(&grid).with_per_octave(8);
        let proxy = besov_proxy(&grid, &u, &cfg).unwrap();
        let exact = (-0.5f64).exp() / 2.0f64.sqrt();
        assert!(
            (proxy - exact).abs() <= 0.01 * exact,
            "proxy {proxy} vs exact {exact}"
        );
        // Refinement converges from below.
        let coarse = besov_proxy(&grid, &u, &BesovConfig::for_grid(&grid).with_per_octave(1))
            .unwrap();
        assert!(coarse <= proxy + 1e-12);
    }

    #[test]
    fn besov_proxy_is_positively_homogeneous() {
        let grid = Grid::<f64>::new(2, 32).unwrap();
        let cfg = BesovConfig::for_grid(&grid);
        let f = ScalarField::from_fn(&grid, |x| x[0].sin() + 0.3 * (2.0 * x[1]).cos());
        let one = besov_proxy(&grid, &f, &cfg).unwrap();
        let scaled = ScalarField {
            data: f.data.iter().map(|v| 3.5 * v).collect(),
        };
        let three = besov_proxy(&grid, &scaled, &cfg).unwrap();
        assert!((three - 3.5 * one).abs() < 1e-12);
        assert_eq!(
            besov_proxy(&grid, &ScalarField::zeros(&grid), &cfg).unwrap(),
            0.0
        );
    }

    #[test]
    fn besov_proxy_of_grad_q_is_bounded_by_q_sup() {
        let grid = Grid::<f64>::new(2, 64).unwrap();
        let q = crate::init::uniaxial_mode_q(&grid, 0.5, [1, 0, 0]);
        let cfg = BesovConfig::for_grid(&grid).with_per_octave(8);
        let proxy = besov_proxy_grad_q(&grid, &q, &cfg).unwrap();
        let q_sup = grid.linf_norm(&q);
        assert!(proxy <= 1.05 * q_sup, "proxy {proxy} vs sup {q_sup}");
        // Sharp single-mode value: sup_s sqrt(s) e^{-s} * ||Q||_inf.
        let sharp = (-0.5f64).exp() / 2.0f64.sqrt() * q_sup;
        assert!((proxy - sharp).abs() <= 0.05 * sharp);
    }

    #[test]
    fn gauss_legendre_integrates_polynomials() {
        for n in [2usize, 8, 16] {
            let rule = gauss_legendre(n);
            let sum_w: f64 = rule.iter().map(|p| p.1).sum();
            assert!((sum_w - 2.0).abs() < 1e-13);
            let x2: f64 = rule.iter().map(|(x, w)| w * x * x).sum();
            assert!((x2 - 2.0 / 3.0).abs() < 1e-13);
        }
    }

    #[test]
    fn ball_rule_weights_sum_to_ball_volume() {
        let rule = BallRule::<f64>::new(0.3, &BallQuadrature::default());
        let total: f64 = rule.points.iter().map(|p| p.1).sum();
        let exact = 4.0 / 3.0 * std::f64::consts::PI * 0.3f64.powi(3);
        assert!((total - exact).abs() < 1e-14 * exact.max(1.0));
    }

    #[test]
    fn cutoff_profile_satisfies_certified_bounds() {
        let grid = Grid::<f64>::new(3, 16).unwrap();
        let pi = std::f64::consts::PI;
        let cutoff = CutoffSpec {
            center: [pi, pi, pi],
            t0: 1.0,
            r: 0.3,
        };
        cutoff.sampled_check(&grid).unwrap();
        // Too large a radius is rejected.
        let bad = CutoffSpec {
            center: [pi, pi, pi],
            t0: 1.0,
            r: 0.9,
        };
        assert!(bad.sampled_check(&grid).is_err());
    }

    fn constant_u_trajectory(
        grid: &Grid<f64>,
        u0: [f64; 3],
        t0: f64,
        samples: usize,
        span: f64,
    ) -> (Vec<State<f64>>, Vec<ScalarField<f64>>) {
        let states: Vec<State<f64>> = (0..samples)
            .map(|i| {
                let t = t0 - span + span * i as f64 / (samples - 1) as f64;
                State::new(
                    t,
                    VectorField::from_fn(grid, |_| u0),
                    TensorField::zeros(grid),
                )
            })
            .collect();
        let pressures = states
            .iter()
            .map(|_| ScalarField::zeros(grid))
            .collect();
        (states, pressures)
    }

    #[test]
    fn constant_field_cylinder_quantities_match_closed_forms() {
        let grid = Grid::<f64>::new(3, 16).unwrap();
        let pi = std::f64::consts::PI;
        let u0 = [0.3, -0.2, 0.1];
        let r = 0.4;
        let (states, pressures) = constant_u_trajectory(&grid, u0, 1.0, 17, 16.0 * r * r);
        let cfg = CknConfig::for_grid(&grid);
        let report = ckn_quantities(
            &grid,
            &states,
            &pressures,
            [pi, pi, pi],
            1.0,
            r,
            &cfg,
        )
        .unwrap();
        let speed_sq = u0.iter().map(|v| v * v).sum::<f64>();
        let ball = 4.0 / 3.0 * pi * r.powi(3);
        // E_3 = r^{-2} * |U0|^3 * vol(B_r) * r^2 = (4 pi / 3) |U0|^3 r^3.
        let expect_e3 = speed_sq.powf(1.5) * ball;
        assert!(
            (report.e3 - expect_e3).abs() <= 1e-4 * expect_e3,
            "E3 {} vs {}",
            report.e3,
            expect_e3
        );
        // E = r^{-1} |U0|^2 vol(B_r); E* and P vanish.
        let expect_e = speed_sq * ball / r;
        assert!((report.e_sup - expect_e).abs() <= 1e-4 * expect_e);
        assert!(report.e_star.abs() < 1e-12);
        assert!(report.p32.abs() < 1e-12);
        assert!((report.f1 - (report.e_sup + report.e_star + report.p32)).abs() == 0.0);
    }

    #[test]
    fn cylinder_quantities_scale_with_field_amplitude() {
        let grid = Grid::<f64>::new(3, 16).unwrap();
        let pi = std::f64::consts::PI;
        let r = 0.3;
        let make = |amp: f64| {
            let states: Vec<State<f64>> = (0..9)
                .map(|i| {
                    let t = 1.0 - 16.0 * r * r + 16.0 * r * r * i as f64 / 8.0;
                    State::new(
                        t,
                        VectorField::from_fn(&grid, |x| {
                            [amp * x[1].sin(), amp * x[2].cos(), amp * x[0].sin()]
                        }),
                        TensorField::zeros(&grid),
                    )
                })
                .collect();
            let pressures: Vec<ScalarField<f64>> =
                states.iter().map(|_| ScalarField::zeros(&grid)).collect();
            ckn_quantities(
                &grid,
                &states,
                &pressures,
                [pi, pi, pi],
                1.0,
                r,
                &CknConfig::for_grid(&grid),
            )
            .unwrap()
        };
        let one = make(1.0);
        let lam = make(2.0);
        assert!((lam.e3 / one.e3 - 8.0).abs() < 1e-9);
        assert!((lam.e_sup / one.e_sup - 4.0).abs() < 1e-9);
        assert!((lam.e_star / one.e_star - 4.0).abs() < 1e-9);
    }

    #[test]
    fn cylinder_quantities_converge_under_quadrature_refinement() {
        let grid = Grid::<f64>::new(3, 16).unwrap();
        let pi = std::f64::consts::PI;
        let r = 0.5;
        let states: Vec<State<f64>> = (0..9)
            .map(|i| {
                let t = 1.0 - 16.0 * r * r + 16.0 * r * r * i as f64 / 8.0;
                State::new(
                    t,
                    VectorField::from_fn(&grid, |x| [0.0, x[0].sin(), 0.0]),
                    crate::init::uniaxial_mode_q(&grid, 0.4, [0, 1, 0]),
                )
            })
            .collect();
        let pressures: Vec<ScalarField<f64>> =
            states.iter().map(|_| ScalarField::zeros(&grid)).collect();
        let mut cfg = CknConfig::for_grid(&grid);
        let center = [pi, pi, pi];
        let coarse = ckn_quantities(&grid, &states, &pressures, center, 1.0, r, &cfg).unwrap();
        cfg.quadrature = cfg.quadrature.refined(4);
        let fine = ckn_quantities(&grid, &states, &pressures, center, 1.0, r, &cfg).unwrap();
        for (a, b, name) in [
            (coarse.e3, fine.e3, "E3"),
            (coarse.e_sup, fine.e_sup, "E"),
            (coarse.e_star, fine.e_star, "E*"),
        ] {
            assert!(
                (a - b).abs() <= 1e-4 * b.abs().max(1e-12),
                "{name}: {a} vs {b}"
            );
        }
    }

    #[test]
    fn cylinder_preconditions_are_enforced() {
        let grid3 = Grid::<f64>::new(3, 16).unwrap();
        let grid2 = Grid::<f64>::new(2, 16).unwrap();
        let pi = std::f64::consts::PI;
        let (states, pressures) = constant_u_trajectory(&grid3, [0.1, 0.0, 0.0], 1.0, 9, 2.9);
        let cfg = CknConfig::for_grid(&grid3);
        // Radius with 4r >= pi.
        assert!(matches!(
            ckn_quantities(&grid3, &states, &pressures, [pi; 3], 1.0, 0.8, &cfg),
            Err(Error::RadiusTooLarge { .. })
        ));
        // Window not covering [t0 - (4r)^2, t0].
        assert!(matches!(
            ckn_quantities(&grid3, &states[..3], &pressures[..3], [pi; 3], 1.0, 0.4, &cfg),
            Err(Error::WindowTooShort { .. })
        ));
        // Mismatched pressure series.
        assert!(ckn_quantities(&grid3, &states, &pressures[..5], [pi; 3], 1.0, 0.4, &cfg).is_err());
        // 2-D grids are rejected.
        let (s2, p2) = {
            let states: Vec<State<f64>> = (0..9)
                .map(|i| {
                    let mut s = State::zero(&grid2);
                    s.t = i as f64 * 0.4;
                    s
                })
                .collect();
            let pressures: Vec<ScalarField<f64>> =
                states.iter().map(|_| ScalarField::zeros(&grid2)).collect();
            (states, pressures)
        };
        assert!(ckn_quantities(&grid2, &s2, &p2, [pi; 3], 3.0, 0.4, &cfg).is_err());
    }

    #[test]
    fn local_energy_balance_closes_on_pure_relaxation() {
        // u = 0, b = c = 0: the exact solution is e^{(lap - a) t} Q0, built
        // directly from the heat semigroup, so the localized balance must
        // close to quadrature accuracy.
        let grid = Grid::<f64>::new(3, 32).unwrap();
        let pi = std::f64::consts::PI;
        let potential = PotentialParams {
            a: 1.0,
            b: 0.0,
            c: 0.0,
            r: 10.0,
            c1: 1.0,
            lambda: 0.5,
        };
        let r = 0.7;
        let t0 = 4.0 * r * r + 0.05;
        let q0 = crate::init::uniaxial_mode_q(&grid, 0.4, [1, 0, 1]);
        let samples = 100usize;
        let states: Vec<State<f64>> = (0..=samples)
            .map(|i| {
                let t = t0 * i as f64 / samples as f64;
                let heat = grid.heat_semigroup(&q0, t).unwrap();
                let damp = (-potential.a * t).exp();
                let mut q = heat;
                for p in q.comps.iter_mut() {
                    for v in p.data.iter_mut() {
                        *v *= damp;
                    }
                }
                State::new(t, VectorField::zeros(&grid), q)
            })
            .collect();
        let pressures: Vec<ScalarField<f64>> =
            states.iter().map(|_| ScalarField::zeros(&grid)).collect();
        let cutoff = CutoffSpec {
            center: [pi, pi, pi],
            t0,
            r,
        };
        let report =
            local_energy_residual(&grid, &states, &pressures, &cutoff, &potential).unwrap();
        assert!(
            report.residual.abs() <= 1e-3 * report.scale,
            "residual {} vs scale {}",
            report.residual,
            report.scale
        );
    }

    #[test]
    fn criterion_iteration_threshold_logic() {
        let mk = |f1: f64| CknReport {
            center: [0.0; 3],
            t0: 1.0,
            radius: 0.1,
            e_sup: f1,
            e_star: 0.0,
            e3: 0.0,
            p32: 0.0,
            f1,
            besov: 0.0,
            small: false,
        };
        // All-zero reports: first small level is 0.
        let zero: Vec<_> = (0..3).map(|_| mk(0.0)).collect();
        let v = criterion_iteration(&zero, 0.1, 0.5).unwrap();
        assert_eq!(v.first_small, Some(0));
        // Constant F1 = 1 with eps1 = 0.1: never small.
        let ones: Vec<_> = (0..4).map(|_| mk(1.0)).collect();
        let v = criterion_iteration(&ones, 0.1, 0.5).unwrap();
        assert_eq!(v.first_small, None);
        assert!(v.nonincreasing_beyond_first);
        assert!(criterion_iteration(&ones[..1], 0.1, 0.5).is_err());
    }
}
