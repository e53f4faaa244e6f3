//! Discrete fields on the periodic grid.
//!
//! A field is a set of scalar sample planes sharing the grid shape:
//! one plane for a scalar, `dim` planes for a velocity, five planes for a
//! Q-tensor (storage enforces the traceless-symmetric constraint pointwise)
//! and three planes for an antisymmetric tensor.

use crate::algebra::{Antisym3, TracelessSym3};
use crate::grid::Grid;
use crate::scalar::{r64, Real};

#[derive(Clone, Debug, PartialEq)]
pub struct ScalarField<R> {
    pub data: Vec<R>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct VectorField<R> {
    pub comps: Vec<ScalarField<R>>,
}

/// Q-tensor field; planes are ordered `q11, q12, q13, q22, q23`.
#[derive(Clone, Debug, PartialEq)]
pub struct TensorField<R> {
    pub comps: Vec<ScalarField<R>>,
}

/// Antisymmetric tensor field; planes are ordered `a12, a13, a23`.
#[derive(Clone, Debug, PartialEq)]
pub struct AntisymField<R> {
    pub comps: Vec<ScalarField<R>>,
}

impl<R: Real> ScalarField<R> {
    pub fn zeros(grid: &Grid<R>) -> Self {
        Self {
            data: vec![R::zero(); grid.len()],
        }
    }

    /// Sample a closure of the physical coordinates (third entry is 0 in 2-D).
    pub fn from_fn(grid: &Grid<R>, f: impl Fn([R; 3]) -> R) -> Self {
        Self {
            data: (0..grid.len()).map(|i| f(grid.point(i))).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }
}

impl<R: Real> VectorField<R> {
    pub fn zeros(grid: &Grid<R>) -> Self {
        Self {
            comps: (0..grid.dim()).map(|_| ScalarField::zeros(grid)).collect(),
        }
    }

    /// Sample a closure returning the components (entries past `dim` ignored).
    pub fn from_fn(grid: &Grid<R>, f: impl Fn([R; 3]) -> [R; 3]) -> Self {
        let comps = (0..grid.dim())
            .map(|c| ScalarField {
                data: (0..grid.len()).map(|i| f(grid.point(i))[c]).collect(),
            })
            .collect();
        Self { comps }
    }

    pub fn dim(&self) -> usize {
        self.comps.len()
    }

    /// Velocity vector at a grid point, zero-padded to three entries.
    #[inline]
    pub fn at(&self, idx: usize) -> [R; 3] {
        let mut v = [R::zero(); 3];
        for (c, plane) in self.comps.iter().enumerate() {
            v[c] = plane.data[idx];
        }
        v
    }
}

impl<R: Real> TensorField<R> {
    pub fn zeros(grid: &Grid<R>) -> Self {
        Self {
            comps: (0..5).map(|_| ScalarField::zeros(grid)).collect(),
        }
    }

    pub fn from_fn(grid: &Grid<R>, f: impl Fn([R; 3]) -> TracelessSym3<R>) -> Self {
        let values: Vec<TracelessSym3<R>> = (0..grid.len()).map(|i| f(grid.point(i))).collect();
        let mut out = Self::zeros(grid);
        for (i, q) in values.iter().enumerate() {
            out.set(i, *q);
        }
        out
    }

    #[inline]
    pub fn at(&self, idx: usize) -> TracelessSym3<R> {
        TracelessSym3::new(
            self.comps[0].data[idx],
            self.comps[1].data[idx],
            self.comps[2].data[idx],
            self.comps[3].data[idx],
            self.comps[4].data[idx],
        )
    }

    #[inline]
    pub fn set(&mut self, idx: usize, q: TracelessSym3<R>) {
        self.comps[0].data[idx] = q.q11;
        self.comps[1].data[idx] = q.q12;
        self.comps[2].data[idx] = q.q13;
        self.comps[3].data[idx] = q.q22;
        self.comps[4].data[idx] = q.q23;
    }
}

impl<R: Real> AntisymField<R> {
    pub fn zeros(grid: &Grid<R>) -> Self {
        Self {
            comps: (0..3).map(|_| ScalarField::zeros(grid)).collect(),
        }
    }

    #[inline]
    pub fn at(&self, idx: usize) -> Antisym3<R> {
        Antisym3::new(
            self.comps[0].data[idx],
            self.comps[1].data[idx],
            self.comps[2].data[idx],
        )
    }

    #[inline]
    pub fn set(&mut self, idx: usize, w: Antisym3<R>) {
        self.comps[0].data[idx] = w.a12;
        self.comps[1].data[idx] = w.a13;
        self.comps[2].data[idx] = w.a23;
    }
}

/// Common view of a field as its sample planes plus the pointwise squared
/// magnitude (Euclidean for vectors, Frobenius for tensors).
pub trait Field<R: Real>: Sized + Clone {
    fn planes(&self) -> &[ScalarField<R>];
    fn planes_mut(&mut self) -> &mut [ScalarField<R>];
    fn from_planes(planes: Vec<ScalarField<R>>) -> Self;
    fn magnitude_sq(&self, idx: usize) -> R;
}

impl<R: Real> Field<R> for ScalarField<R> {
    fn planes(&self) -> &[ScalarField<R>] {
        std::slice::from_ref(self)
    }
    fn planes_mut(&mut self) -> &mut [ScalarField<R>] {
        std::slice::from_mut(self)
    }
    fn from_planes(mut planes: Vec<ScalarField<R>>) -> Self {
        assert_eq!(planes.len(), 1, "scalar field has one plane");
        planes.pop().unwrap()
    }
    #[inline]
    fn magnitude_sq(&self, idx: usize) -> R {
        let v = self.data[idx];
        v * v
    }
}

impl<R: Real> Field<R> for VectorField<R> {
    fn planes(&self) -> &[ScalarField<R>] {
        &self.comps
    }
    fn planes_mut(&mut self) -> &mut [ScalarField<R>] {
        &mut self.comps
    }
    fn from_planes(planes: Vec<ScalarField<R>>) -> Self {
        Self { comps: planes }
    }
    #[inline]
    fn magnitude_sq(&self, idx: usize) -> R {
        self.comps
            .iter()
            .map(|p| p.data[idx] * p.data[idx])
            .fold(R::zero(), |a, v| a + v)
    }
}

impl<R: Real> Field<R> for TensorField<R> {
    fn planes(&self) -> &[ScalarField<R>] {
        &self.comps
    }
    fn planes_mut(&mut self) -> &mut [ScalarField<R>] {
        &mut self.comps
    }
    fn from_planes(planes: Vec<ScalarField<R>>) -> Self {
        assert_eq!(planes.len(), 5, "tensor field has five planes");
        Self { comps: planes }
    }
    #[inline]
    fn magnitude_sq(&self, idx: usize) -> R {
        let q11 = self.comps[0].data[idx];
        let q12 = self.comps[1].data[idx];
        let q13 = self.comps[2].data[idx];
        let q22 = self.comps[3].data[idx];
        let q23 = self.comps[4].data[idx];
        r64::<R>(2.0) * (q11 * q11 + q22 * q22 + q11 * q22 + q12 * q12 + q13 * q13 + q23 * q23)
    }
}

impl<R: Real> Field<R> for AntisymField<R> {
    fn planes(&self) -> &[ScalarField<R>] {
        &self.comps
    }
    fn planes_mut(&mut self) -> &mut [ScalarField<R>] {
        &mut self.comps
    }
    fn from_planes(planes: Vec<ScalarField<R>>) -> Self {
        assert_eq!(planes.len(), 3, "antisymmetric field has three planes");
        Self { comps: planes }
    }
    #[inline]
    fn magnitude_sq(&self, idx: usize) -> R {
        // |W|^2 = 2 (a12^2 + a13^2 + a23^2)
        r64::<R>(2.0)
            * self
                .comps
                .iter()
                .map(|p| p.data[idx] * p.data[idx])
                .fold(R::zero(), |a, v| a + v)
    }
}
