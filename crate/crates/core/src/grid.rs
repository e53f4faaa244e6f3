//! Periodic-box discretization on `[0, 2pi)^dim` with exact spectral
//! differential operators.
//!
//! Wavenumbers are integers; derivatives multiply mode `k` by `i k`,
//! the Laplacian by `-|k|^2`. The 2/3 rule removes every mode with any
//! `|k_axis| > n/3`, which keeps quadratic products alias-free. Odd
//! derivatives treat the Nyquist mode as zero so real fields stay real;
//! `|k|^2` keeps the Nyquist wavenumber `n/2`.

use crate::error::{Error, Result};
use crate::field::{Field, ScalarField, VectorField};
use crate::scalar::{as_f64, r64, Real};
use num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use std::sync::Arc;

#[derive(Clone)]
pub struct Grid<R: Real> {
    dim: usize,
    n: usize,
    len: usize,
    fwd: Arc<dyn Fft<R>>,
    inv: Arc<dyn Fft<R>>,
    k1d: Vec<i64>,
}

impl<R: Real> std::fmt::Debug for Grid<R> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Grid")
            .field("dim", &self.dim)
            .field("n", &self.n)
            .finish()
    }
}

impl<R: Real> Grid<R> {
    pub fn new(dim: usize, n: usize) -> Result<Self> {
        if dim != 2 && dim != 3 {
            return Err(Error::InvalidDimension(dim));
        }
        if n < 8 || !n.is_power_of_two() {
            return Err(Error::InvalidResolution(n));
        }
        let mut planner = FftPlanner::new();
        let fwd = planner.plan_fft_forward(n);
        let inv = planner.plan_fft_inverse(n);
        let k1d = (0..n)
            .map(|i| if i <= n / 2 { i as i64 } else { i as i64 - n as i64 })
            .collect();
        Ok(Self {
            dim,
            n,
            len: n.pow(dim as u32),
            fwd,
            inv,
            k1d,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Total number of grid points, `n^dim`.
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Mesh width `h = 2pi / n`.
    pub fn spacing(&self) -> R {
        r64::<R>(2.0) * R::PI() / r64(self.n as f64)
    }

    /// Box volume `(2pi)^dim`.
    pub fn volume(&self) -> R {
        (r64::<R>(2.0) * R::PI()).powi(self.dim as i32)
    }

    /// Quadrature weight per sample, `h^dim`.
    pub fn cell_volume(&self) -> R {
        self.volume() / r64(self.len as f64)
    }

    pub fn same_shape(&self, other: &Self) -> bool {
        self.dim == other.dim && self.n == other.n
    }

    /// Integer indices `(i0, i1, i2)` of a flat index; `i2 = 0` in 2-D.
    #[inline]
    pub fn indices(&self, idx: usize) -> [usize; 3] {
        if self.dim == 2 {
            [idx / self.n, idx % self.n, 0]
        } else {
            let n2 = self.n * self.n;
            [idx / n2, (idx / self.n) % self.n, idx % self.n]
        }
    }

    /// Physical coordinates of a grid point.
    #[inline]
    pub fn point(&self, idx: usize) -> [R; 3] {
        let h = self.spacing();
        let ijk = self.indices(idx);
        [
            h * r64(ijk[0] as f64),
            h * r64(ijk[1] as f64),
            if self.dim == 3 {
                h * r64(ijk[2] as f64)
            } else {
                R::zero()
            },
        ]
    }

    /// Signed wavenumber vector of a mode (Nyquist reported as `+n/2`).
    #[inline]
    pub fn mode(&self, idx: usize) -> [i64; 3] {
        let ijk = self.indices(idx);
        [
            self.k1d[ijk[0]],
            self.k1d[ijk[1]],
            if self.dim == 3 { self.k1d[ijk[2]] } else { 0 },
        ]
    }

    /// `|k|^2` of a mode.
    #[inline]
    pub fn k_sq(&self, idx: usize) -> R {
        let k = self.mode(idx);
        r64((k[0] * k[0] + k[1] * k[1] + k[2] * k[2]) as f64)
    }

    /// Wavenumbers used by odd derivatives: the Nyquist entry is zeroed.
    #[inline]
    pub fn grad_mode(&self, idx: usize) -> [R; 3] {
        let k = self.mode(idx);
        let ny = (self.n / 2) as i64;
        let fix = |v: i64| if v == ny { R::zero() } else { r64(v as f64) };
        [fix(k[0]), fix(k[1]), fix(k[2])]
    }

    fn expect_len(&self, got: usize) {
        assert_eq!(
            got,
            self.len,
            "field has {got} samples, grid expects {}",
            self.len
        );
    }

    fn fft_axis(&self, data: &mut [Complex<R>], axis: usize, inverse: bool) {
        let n = self.n;
        let plan = if inverse { &self.inv } else { &self.fwd };
        if axis == self.dim - 1 {
            for chunk in data.chunks_exact_mut(n) {
                plan.process(chunk);
            }
            return;
        }
        let stride = n.pow((self.dim - 1 - axis) as u32);
        let mut buf = vec![Complex::new(R::zero(), R::zero()); n];
        let blocks = self.len / (stride * n);
        for pre in 0..blocks {
            for suf in 0..stride {
                let base = pre * stride * n + suf;
                for (t, b) in buf.iter_mut().enumerate() {
                    *b = data[base + t * stride];
                }
                plan.process(&mut buf);
                for (t, b) in buf.iter().enumerate() {
                    data[base + t * stride] = *b;
                }
            }
        }
    }

    fn fft_all(&self, data: &mut [Complex<R>], inverse: bool) {
        for axis in 0..self.dim {
            self.fft_axis(data, axis, inverse);
        }
    }

    /// Forward transform of one sample plane (unnormalized coefficients).
    pub fn forward(&self, f: &ScalarField<R>) -> Vec<Complex<R>> {
        self.expect_len(f.data.len());
        let mut spec: Vec<Complex<R>> =
            f.data.iter().map(|&v| Complex::new(v, R::zero())).collect();
        self.fft_all(&mut spec, false);
        spec
    }

    /// Inverse transform back to samples (applies the `1/n^dim` factor and
    /// drops the round-off imaginary part).
    pub fn backward(&self, spec: &[Complex<R>]) -> ScalarField<R> {
        self.expect_len(spec.len());
        let mut work = spec.to_vec();
        self.fft_all(&mut work, true);
        let scale = R::one() / r64(self.len as f64);
        ScalarField {
            data: work.into_iter().map(|c| c.re * scale).collect(),
        }
    }

    /// Spectral coefficients of `d/dx_axis` applied to `spec`.
    pub fn derivative_spectral(&self, spec: &[Complex<R>], axis: usize) -> Vec<Complex<R>> {
        self.expect_len(spec.len());
        assert!(axis < self.dim, "axis {axis} out of range");
        spec.iter()
            .enumerate()
            .map(|(idx, &v)| {
                let k = self.grad_mode(idx)[axis];
                Complex::new(-v.im * k, v.re * k)
            })
            .collect()
    }

    /// Gradient of a scalar field, `(grad f)_a = d_a f`.
    pub fn gradient(&self, f: &ScalarField<R>) -> VectorField<R> {
        let spec = self.forward(f);
        let comps = (0..self.dim)
            .map(|axis| self.backward(&self.derivative_spectral(&spec, axis)))
            .collect();
        VectorField { comps }
    }

    /// Plane-wise partial derivatives of any field: entry `a` holds `d_a f`.
    pub fn gradient_field<F: Field<R>>(&self, f: &F) -> Vec<F> {
        let specs: Vec<Vec<Complex<R>>> = f.planes().iter().map(|p| self.forward(p)).collect();
        (0..self.dim)
            .map(|axis| {
                F::from_planes(
                    specs
                        .iter()
                        .map(|s| self.backward(&self.derivative_spectral(s, axis)))
                        .collect(),
                )
            })
            .collect()
    }

    pub fn divergence(&self, v: &VectorField<R>) -> ScalarField<R> {
        assert_eq!(v.comps.len(), self.dim, "vector field has wrong dimension");
        let mut acc = vec![Complex::new(R::zero(), R::zero()); self.len];
        for (axis, comp) in v.comps.iter().enumerate() {
            let spec = self.forward(comp);
            for (idx, (a, &s)) in acc.iter_mut().zip(spec.iter()).enumerate() {
                let k = self.grad_mode(idx)[axis];
                *a += Complex::new(-s.im * k, s.re * k);
            }
        }
        self.backward(&acc)
    }

    pub fn laplacian<F: Field<R>>(&self, f: &F) -> F {
        F::from_planes(
            f.planes()
                .iter()
                .map(|p| {
                    let mut spec = self.forward(p);
                    for (idx, v) in spec.iter_mut().enumerate() {
                        *v = *v * (-self.k_sq(idx));
                    }
                    self.backward(&spec)
                })
                .collect(),
        )
    }

    /// 2/3-rule truncation: zero every mode with any `3 |k_axis| > n`.
    pub fn dealias_spectrum(&self, spec: &mut [Complex<R>]) {
        self.expect_len(spec.len());
        let n = self.n as i64;
        for (idx, v) in spec.iter_mut().enumerate() {
            let k = self.mode(idx);
            if 3 * k[0].abs() > n || 3 * k[1].abs() > n || 3 * k[2].abs() > n {
                *v = Complex::new(R::zero(), R::zero());
            }
        }
    }

    pub fn dealias<F: Field<R>>(&self, f: &F) -> F {
        F::from_planes(
            f.planes()
                .iter()
                .map(|p| {
                    let mut spec = self.forward(p);
                    self.dealias_spectrum(&mut spec);
                    self.backward(&spec)
                })
                .collect(),
        )
    }

    /// In-place Leray projection of spectral velocity components:
    /// `v_hat -> v_hat - k (k . v_hat) / |k|^2`, `k = 0` untouched.
    pub fn leray_spectral(&self, specs: &mut [Vec<Complex<R>>]) {
        assert_eq!(specs.len(), self.dim, "vector field has wrong dimension");
        for idx in 0..self.len {
            let k = self.grad_mode(idx);
            let k2 = k[0] * k[0] + k[1] * k[1] + k[2] * k[2];
            if k2 == R::zero() {
                continue;
            }
            let mut dot = Complex::new(R::zero(), R::zero());
            for (axis, spec) in specs.iter().enumerate() {
                dot += spec[idx] * k[axis];
            }
            let factor = dot / k2;
            for (axis, spec) in specs.iter_mut().enumerate() {
                spec[idx] -= factor * k[axis];
            }
        }
    }

    pub fn leray_project(&self, v: &VectorField<R>) -> VectorField<R> {
        let mut specs: Vec<Vec<Complex<R>>> =
            v.comps.iter().map(|c| self.forward(c)).collect();
        self.leray_spectral(&mut specs);
        VectorField {
            comps: specs.iter().map(|s| self.backward(s)).collect(),
        }
    }

    /// Heat semigroup `e^{s Laplacian}`: multiplies mode `k` by `exp(-s|k|^2)`.
    pub fn heat_semigroup<F: Field<R>>(&self, f: &F, s: R) -> Result<F> {
        if s < R::zero() {
            return Err(Error::NegativeDiffusionTime(as_f64(s)));
        }
        Ok(F::from_planes(
            f.planes()
                .iter()
                .map(|p| {
                    let mut spec = self.forward(p);
                    for (idx, v) in spec.iter_mut().enumerate() {
                        *v = *v * (-s * self.k_sq(idx)).exp();
                    }
                    self.backward(&spec)
                })
                .collect(),
        ))
    }

    /// Solve `-lap p = rhs` with zero-mean normalization (`k = 0` set to 0).
    pub fn invert_neg_laplacian(&self, rhs: &ScalarField<R>) -> ScalarField<R> {
        let mut spec = self.forward(rhs);
        for (idx, v) in spec.iter_mut().enumerate() {
            let k2 = self.k_sq(idx);
            *v = if k2 == R::zero() {
                Complex::new(R::zero(), R::zero())
            } else {
                *v / k2
            };
        }
        self.backward(&spec)
    }

    /// Quadrature `L^q` norm; `q = infinity` takes the pointwise maximum of
    /// the field magnitude (Frobenius for tensors).
    pub fn lq_norm<F: Field<R>>(&self, f: &F, q: R) -> Result<R> {
        if !(q >= R::one()) {
            return Err(Error::InvalidExponent(as_f64(q)));
        }
        for p in f.planes() {
            self.expect_len(p.data.len());
        }
        if q.is_infinite() {
            let mut m = R::zero();
            for idx in 0..self.len {
                m = m.max(f.magnitude_sq(idx));
            }
            return Ok(m.sqrt());
        }
        let half_q = q / r64::<R>(2.0);
        let mut acc = R::zero();
        for idx in 0..self.len {
            acc += f.magnitude_sq(idx).powf(half_q);
        }
        Ok((acc * self.cell_volume()).powf(R::one() / q))
    }

    pub fn l2_norm<F: Field<R>>(&self, f: &F) -> R {
        let mut acc = R::zero();
        for idx in 0..self.len {
            acc += f.magnitude_sq(idx);
        }
        (acc * self.cell_volume()).sqrt()
    }

    pub fn linf_norm<F: Field<R>>(&self, f: &F) -> R {
        self.lq_norm(f, R::infinity()).expect("infinity is >= 1")
    }

    /// `sqrt(||f||_L2^2 + ||grad f||_L2^2)`.
    pub fn h1_norm<F: Field<R>>(&self, f: &F) -> R {
        let l2 = self.l2_norm(f);
        let mut acc = l2 * l2;
        for df in self.gradient_field(f) {
            let g = self.l2_norm(&df);
            acc += g * g;
        }
        acc.sqrt()
    }

    pub fn mean(&self, f: &ScalarField<R>) -> R {
        self.expect_len(f.data.len());
        f.data.iter().fold(R::zero(), |a, &v| a + v) / r64(self.len as f64)
    }

    /// Parseval evaluation of the `L^2` norm from one plane's coefficients.
    pub fn spectral_l2(&self, spec: &[Complex<R>]) -> R {
        self.expect_len(spec.len());
        let sum = spec
            .iter()
            .fold(R::zero(), |a, c| a + c.re * c.re + c.im * c.im);
        (sum * self.volume() / r64((self.len * self.len) as f64)).sqrt()
    }
}
