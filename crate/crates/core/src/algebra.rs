//! Pointwise algebra on symmetric traceless 3x3 tensors and the polynomial
//! bulk potential `F(Q) = (a/2)|Q|^2 - (b/3) tr(Q^3) + (c/4)|Q|^4` that
//! drives their relaxation.
//!
//! Tensors are stored by their five independent components; symmetry and
//! tracelessness hold by construction, never by bookkeeping.

use crate::error::{Error, Result};
use crate::scalar::{as_f64, r64, Real};
use rand::Rng;
use std::ops::{Add, Mul, Neg, Sub};

/// Symmetric traceless 3x3 tensor; `q33 = -q11 - q22` is implied.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TracelessSym3<R> {
    pub q11: R,
    pub q12: R,
    pub q13: R,
    pub q22: R,
    pub q23: R,
}

/// Plain 3x3 matrix, used for general products and commutators.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Mat3<R>(pub [[R; 3]; 3]);

/// Antisymmetric 3x3 tensor; stores the strictly upper triangle.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Antisym3<R> {
    pub a12: R,
    pub a13: R,
    pub a23: R,
}

impl<R: Real> TracelessSym3<R> {
    pub fn zero() -> Self {
        Self {
            q11: R::zero(),
            q12: R::zero(),
            q13: R::zero(),
            q22: R::zero(),
            q23: R::zero(),
        }
    }

    pub fn new(q11: R, q12: R, q13: R, q22: R, q23: R) -> Self {
        Self {
            q11,
            q12,
            q13,
            q22,
            q23,
        }
    }

    /// Uniaxial tensor `s (n x n - Id/3)` along the first axis, scaled so
    /// that `|Q| = amplitude`; its matrix is `amplitude diag(2,-1,-1)/sqrt(6)`.
    pub fn uniaxial_x(amplitude: R) -> Self {
        let s = amplitude / r64::<R>(6.0).sqrt();
        Self::new(s + s, R::zero(), R::zero(), -s, R::zero())
    }

    /// Reconstructed `q33` component.
    #[inline]
    pub fn q33(&self) -> R {
        -self.q11 - self.q22
    }

    pub fn to_matrix(&self) -> Mat3<R> {
        Mat3([
            [self.q11, self.q12, self.q13],
            [self.q12, self.q22, self.q23],
            [self.q13, self.q23, self.q33()],
        ])
    }

    /// Squared Frobenius norm `|Q|^2 = Q_ab Q_ab`.
    #[inline]
    pub fn norm_sq(&self) -> R {
        let two = r64::<R>(2.0);
        two * (self.q11 * self.q11
            + self.q22 * self.q22
            + self.q11 * self.q22
            + self.q12 * self.q12
            + self.q13 * self.q13
            + self.q23 * self.q23)
    }

    #[inline]
    pub fn norm(&self) -> R {
        self.norm_sq().sqrt()
    }

    /// Full contraction `Q : P = Q_ab P_ab` of two traceless symmetric tensors.
    #[inline]
    pub fn dot(&self, p: &Self) -> R {
        let two = r64::<R>(2.0);
        two * (self.q11 * p.q11 + self.q22 * p.q22)
            + self.q11 * p.q22
            + self.q22 * p.q11
            + two * (self.q12 * p.q12 + self.q13 * p.q13 + self.q23 * p.q23)
    }

    /// `tr(Q^3)`, evaluated from the matrix square.
    pub fn trace_cubed(&self) -> R {
        let q33 = self.q33();
        let s11 = self.q11 * self.q11 + self.q12 * self.q12 + self.q13 * self.q13;
        let s22 = self.q12 * self.q12 + self.q22 * self.q22 + self.q23 * self.q23;
        let s33 = self.q13 * self.q13 + self.q23 * self.q23 + q33 * q33;
        let s12 = self.q12 * (self.q11 + self.q22) + self.q13 * self.q23;
        let s13 = self.q13 * (self.q11 + q33) + self.q12 * self.q23;
        let s23 = self.q23 * (self.q22 + q33) + self.q12 * self.q13;
        s11 * self.q11
            + s22 * self.q22
            + s33 * q33
            + r64::<R>(2.0) * (s12 * self.q12 + s13 * self.q13 + s23 * self.q23)
    }

    /// Traceless part of the matrix square, `Q^2 - (|Q|^2/3) Id`.
    pub fn squared_traceless(&self) -> Self {
        let q33 = self.q33();
        let third = self.norm_sq() / r64::<R>(3.0);
        Self::new(
            self.q11 * self.q11 + self.q12 * self.q12 + self.q13 * self.q13 - third,
            self.q12 * (self.q11 + self.q22) + self.q13 * self.q23,
            self.q13 * (self.q11 + q33) + self.q12 * self.q23,
            self.q12 * self.q12 + self.q22 * self.q22 + self.q23 * self.q23 - third,
            self.q23 * (self.q22 + q33) + self.q12 * self.q13,
        )
    }

    /// Component expansion in an orthonormal (Frobenius) basis of the
    /// traceless symmetric tensors, so that `|Q| = |c|_2`.
    pub fn from_orthonormal_coords(c: [R; 5]) -> Self {
        let inv_sqrt2 = R::one() / r64::<R>(2.0).sqrt();
        let inv_sqrt6 = R::one() / r64::<R>(6.0).sqrt();
        Self::new(
            c[0] * inv_sqrt2 + c[1] * inv_sqrt6,
            c[2] * inv_sqrt2,
            c[3] * inv_sqrt2,
            -c[0] * inv_sqrt2 + c[1] * inv_sqrt6,
            c[4] * inv_sqrt2,
        )
    }

    pub fn scale(&self, s: R) -> Self {
        Self::new(
            self.q11 * s,
            self.q12 * s,
            self.q13 * s,
            self.q22 * s,
            self.q23 * s,
        )
    }

    pub fn is_finite(&self) -> bool {
        self.q11.is_finite()
            && self.q12.is_finite()
            && self.q13.is_finite()
            && self.q22.is_finite()
            && self.q23.is_finite()
    }
}

impl<R: Real> Add for TracelessSym3<R> {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Self::new(
            self.q11 + o.q11,
            self.q12 + o.q12,
            self.q13 + o.q13,
            self.q22 + o.q22,
            self.q23 + o.q23,
        )
    }
}

impl<R: Real> Sub for TracelessSym3<R> {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        Self::new(
            self.q11 - o.q11,
            self.q12 - o.q12,
            self.q13 - o.q13,
            self.q22 - o.q22,
            self.q23 - o.q23,
        )
    }
}

impl<R: Real> Neg for TracelessSym3<R> {
    type Output = Self;
    fn neg(self) -> Self {
        self.scale(-R::one())
    }
}

impl<R: Real> Mul<R> for TracelessSym3<R> {
    type Output = Self;
    fn mul(self, s: R) -> Self {
        self.scale(s)
    }
}

impl<R: Real> Mat3<R> {
    pub fn zero() -> Self {
        Mat3([[R::zero(); 3]; 3])
    }

    pub fn identity() -> Self {
        let mut m = Self::zero();
        for i in 0..3 {
            m.0[i][i] = R::one();
        }
        m
    }

    pub fn diag(d0: R, d1: R, d2: R) -> Self {
        let mut m = Self::zero();
        m.0[0][0] = d0;
        m.0[1][1] = d1;
        m.0[2][2] = d2;
        m
    }

    pub fn mul(&self, o: &Self) -> Self {
        let mut out = Self::zero();
        for i in 0..3 {
            for j in 0..3 {
                let mut s = R::zero();
                for k in 0..3 {
                    s += self.0[i][k] * o.0[k][j];
                }
                out.0[i][j] = s;
            }
        }
        out
    }

    pub fn sub(&self, o: &Self) -> Self {
        let mut out = Self::zero();
        for i in 0..3 {
            for j in 0..3 {
                out.0[i][j] = self.0[i][j] - o.0[i][j];
            }
        }
        out
    }

    pub fn transpose(&self) -> Self {
        let mut out = Self::zero();
        for i in 0..3 {
            for j in 0..3 {
                out.0[i][j] = self.0[j][i];
            }
        }
        out
    }

    pub fn trace(&self) -> R {
        self.0[0][0] + self.0[1][1] + self.0[2][2]
    }

    pub fn max_abs(&self) -> R {
        let mut m = R::zero();
        for row in &self.0 {
            for v in row {
                m = m.max(v.abs());
            }
        }
        m
    }
}

impl<R: Real> Antisym3<R> {
    pub fn zero() -> Self {
        Self {
            a12: R::zero(),
            a13: R::zero(),
            a23: R::zero(),
        }
    }

    pub fn new(a12: R, a13: R, a23: R) -> Self {
        Self { a12, a13, a23 }
    }

    pub fn to_matrix(&self) -> Mat3<R> {
        Mat3([
            [R::zero(), self.a12, self.a13],
            [-self.a12, R::zero(), self.a23],
            [-self.a13, -self.a23, R::zero()],
        ])
    }
}

/// Commutator `AB - BA` of two plain matrices.
pub fn commutator<R: Real>(a: &Mat3<R>, b: &Mat3<R>) -> Mat3<R> {
    a.mul(b).sub(&b.mul(a))
}

/// Symmetrization followed by removal of the trace: `(A + A^T)/2 - tr(A)/3 Id`.
///
/// Round-off can break the symmetry of assembled matrices, so the input is
/// symmetrized before projecting; the result is traceless exactly by storage.
pub fn project_traceless<R: Real>(a: &Mat3<R>) -> TracelessSym3<R> {
    let half = r64::<R>(0.5);
    let s01 = (a.0[0][1] + a.0[1][0]) * half;
    let s02 = (a.0[0][2] + a.0[2][0]) * half;
    let s12 = (a.0[1][2] + a.0[2][1]) * half;
    let tr3 = a.trace() / r64::<R>(3.0);
    TracelessSym3::new(a.0[0][0] - tr3, s01, s02, a.0[1][1] - tr3, s12)
}

/// `wQ - Qw` for antisymmetric `w` and symmetric traceless `Q`; the result
/// is again symmetric traceless.
pub fn rotate<R: Real>(w: &Antisym3<R>, q: &TracelessSym3<R>) -> TracelessSym3<R> {
    let two = r64::<R>(2.0);
    let q33 = q.q33();
    TracelessSym3::new(
        two * (w.a12 * q.q12 + w.a13 * q.q13),
        w.a12 * (q.q22 - q.q11) + w.a13 * q.q23 + w.a23 * q.q13,
        w.a12 * q.q23 + w.a13 * (q33 - q.q11) - w.a23 * q.q12,
        two * (-w.a12 * q.q12 + w.a23 * q.q23),
        -w.a12 * q.q13 - w.a13 * q.q12 + w.a23 * (q33 - q.q22),
    )
}

/// `QH - HQ` for symmetric traceless `Q`, `H`; the result is antisymmetric.
pub fn commutator_antisym<R: Real>(
    q: &TracelessSym3<R>,
    h: &TracelessSym3<R>,
) -> Antisym3<R> {
    let q33 = q.q33();
    let h33 = h.q33();
    Antisym3::new(
        q.q11 * h.q12 + q.q12 * h.q22 + q.q13 * h.q23
            - h.q11 * q.q12
            - h.q12 * q.q22
            - h.q13 * q.q23,
        q.q11 * h.q13 + q.q12 * h.q23 + q.q13 * h33
            - h.q11 * q.q13
            - h.q12 * q.q23
            - h.q13 * q33,
        q.q12 * h.q13 + q.q22 * h.q23 + q.q23 * h33
            - h.q12 * q.q13
            - h.q22 * q.q23
            - h.q23 * q33,
    )
}

/// Coefficients of the bulk potential together with the derived safe-ball
/// constants: on `|Q| <= r` the potential satisfies `dF(Q):Q >= c1 |Q|^2`
/// and `F(Q) >= lambda |Q|^2`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PotentialParams<R> {
    pub a: R,
    pub b: R,
    pub c: R,
    pub r: R,
    pub c1: R,
    pub lambda: R,
}

impl<R: Real> PotentialParams<R> {
    /// Safe-ball radius used when `b = 0` leaves the radius unconstrained.
    pub const DEFAULT_RADIUS_CAP: f64 = 10.0;

    /// Derive `(r, c1, lambda)` from the coefficients with the cubic bound
    /// `|tr Q^3| <= |Q|^3 / sqrt(6)`:
    /// `r = sqrt(6) a / (2|b|)` (capped), `c1 = a - |b| r / sqrt(6)`,
    /// `lambda = a/2 - |b| r / (3 sqrt(6))`.
    pub fn derive(a: R, b: R, c: R) -> Result<Self> {
        Self::derive_capped(a, b, c, r64(Self::DEFAULT_RADIUS_CAP))
    }

    pub fn derive_capped(a: R, b: R, c: R, radius_cap: R) -> Result<Self> {
        if a <= R::zero() || c <= R::zero() {
            return Err(Error::InvalidPotential {
                a: as_f64(a),
                c: as_f64(c),
            });
        }
        let sqrt6 = r64::<R>(6.0).sqrt();
        let r = if b == R::zero() {
            radius_cap
        } else {
            (sqrt6 * a / (r64::<R>(2.0) * b.abs())).min(radius_cap)
        };
        let c1 = a - b.abs() * r / sqrt6;
        let lambda = a / r64::<R>(2.0) - b.abs() * r / (r64::<R>(3.0) * sqrt6);
        Ok(Self {
            a,
            b,
            c,
            r,
            c1,
            lambda,
        })
    }

    /// Explicit constants, for configurations that override the derivation.
    pub fn with_constants(a: R, b: R, c: R, r: R, c1: R, lambda: R) -> Result<Self> {
        if a <= R::zero() || c <= R::zero() {
            return Err(Error::InvalidPotential {
                a: as_f64(a),
                c: as_f64(c),
            });
        }
        if r <= R::zero() || c1 <= R::zero() || c1 > a || lambda <= R::zero() {
            return Err(Error::InvalidConfig(format!(
                "safe-ball constants must satisfy r > 0, c1 in (0, a], lambda > 0; \
                 got r = {}, c1 = {}, lambda = {}",
                as_f64(r),
                as_f64(c1),
                as_f64(lambda)
            )));
        }
        Ok(Self {
            a,
            b,
            c,
            r,
            c1,
            lambda,
        })
    }

    /// `F(Q) = (a/2)|Q|^2 - (b/3) tr(Q^3) + (c/4)|Q|^4`.
    #[inline]
    pub fn value(&self, q: &TracelessSym3<R>) -> R {
        let n2 = q.norm_sq();
        self.a / r64::<R>(2.0) * n2 - self.b / r64::<R>(3.0) * q.trace_cubed()
            + self.c / r64::<R>(4.0) * n2 * n2
    }

    /// Traceless variational derivative
    /// `L[dF(Q)] = a Q - b (Q^2 - (|Q|^2/3) Id) + c |Q|^2 Q`.
    #[inline]
    pub fn gradient(&self, q: &TracelessSym3<R>) -> TracelessSym3<R> {
        let n2 = q.norm_sq();
        let sq = q.squared_traceless();
        q.scale(self.a + self.c * n2) - sq.scale(self.b)
    }

    /// `dF(Q) : Q = a|Q|^2 - b tr(Q^3) + c|Q|^4`; coincides with
    /// `L[dF(Q)] : Q` because `Q` is traceless.
    #[inline]
    pub fn contraction(&self, q: &TracelessSym3<R>) -> R {
        let n2 = q.norm_sq();
        self.a * n2 - self.b * q.trace_cubed() + self.c * n2 * n2
    }
}

/// Uniform sample from the Frobenius ball `{|Q| <= radius}`, drawn from the
/// orthonormal component coordinates.
pub fn sample_ball<R: Real>(rng: &mut impl Rng, radius: R) -> TracelessSym3<R> {
    // Gaussian direction (Box-Muller) and a beta-distributed radius.
    let mut c = [R::zero(); 5];
    let mut norm_sq = R::zero();
    let mut i = 0;
    while i < 5 {
        let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
        let u2: f64 = rng.gen_range(0.0..1.0);
        let mag = (-2.0 * u1.ln()).sqrt();
        let g0 = mag * (2.0 * std::f64::consts::PI * u2).cos();
        let g1 = mag * (2.0 * std::f64::consts::PI * u2).sin();
        for g in [g0, g1] {
            if i < 5 {
                let v = r64::<R>(g);
                c[i] = v;
                norm_sq += v * v;
                i += 1;
            }
        }
    }
    let u: f64 = rng.gen_range(0.0..1.0);
    let scale = radius * r64::<R>(u.powf(0.2)) / norm_sq.sqrt().max(R::min_positive_value());
    TracelessSym3::from_orthonormal_coords(c.map(|v| v * scale))
}
