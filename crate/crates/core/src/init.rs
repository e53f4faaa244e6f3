//! Initial-condition families: uniaxial single modes and seeded random
//! band-limited fields with prescribed amplitudes.

use crate::algebra::TracelessSym3;
use crate::field::{Field, ScalarField, TensorField, VectorField};
use crate::grid::Grid;
use crate::scalar::{r64, Real};
use num_complex::Complex;
use rand::Rng;

/// `Q(x) = amplitude sin(k.x) Q_uni` with the unit uniaxial tensor along
/// the first axis, so `||Q||_inf = |amplitude|`.
pub fn uniaxial_mode_q<R: Real>(
    grid: &Grid<R>,
    amplitude: R,
    wavevector: [i64; 3],
) -> TensorField<R> {
    TensorField::from_fn(grid, |x| {
        let phase = x[0] * r64(wavevector[0] as f64)
            + x[1] * r64(wavevector[1] as f64)
            + x[2] * r64(wavevector[2] as f64);
        TracelessSym3::uniaxial_x(amplitude * phase.sin())
    })
}

/// Spatially constant tensor field.
pub fn uniform_q<R: Real>(grid: &Grid<R>, value: TracelessSym3<R>) -> TensorField<R> {
    TensorField::from_fn(grid, |_| value)
}

fn band_limited_noise<R: Real>(
    grid: &Grid<R>,
    rng: &mut impl Rng,
    band: f64,
) -> ScalarField<R> {
    let raw = ScalarField {
        data: (0..grid.len())
            .map(|_| r64::<R>(rng.gen_range(-1.0..1.0)))
            .collect(),
    };
    let mut spec = grid.forward(&raw);
    for (idx, v) in spec.iter_mut().enumerate() {
        let k = grid.mode(idx);
        let k2 = (k[0] * k[0] + k[1] * k[1] + k[2] * k[2]) as f64;
        if k2 == 0.0 || k2 > band * band {
            *v = Complex::new(R::zero(), R::zero());
        }
    }
    grid.backward(&spec)
}

/// Mean-zero random Q field with modes `0 < |k| <= band`, rescaled so that
/// `||Q||_inf = amplitude`.
pub fn random_bandlimited_q<R: Real>(
    grid: &Grid<R>,
    rng: &mut impl Rng,
    band: f64,
    linf_amplitude: R,
) -> TensorField<R> {
    let q = TensorField::from_planes(
        (0..5).map(|_| band_limited_noise(grid, rng, band)).collect(),
    );
    let peak = grid.linf_norm(&q);
    if peak == R::zero() {
        return q;
    }
    let s = linf_amplitude / peak;
    TensorField::from_planes(
        q.comps
            .iter()
            .map(|p| ScalarField {
                data: p.data.iter().map(|&v| v * s).collect(),
            })
            .collect(),
    )
}

/// Divergence-free mean-zero random velocity with modes `0 < |k| <= band`,
/// rescaled so that `||u||_L2 = amplitude`.
pub fn random_bandlimited_u<R: Real>(
    grid: &Grid<R>,
    rng: &mut impl Rng,
    band: f64,
    l2_amplitude: R,
) -> VectorField<R> {
    let u = grid.leray_project(&VectorField {
        comps: (0..grid.dim())
            .map(|_| band_limited_noise(grid, rng, band))
            .collect(),
    });
    let norm = grid.l2_norm(&u);
    if norm == R::zero() {
        return u;
    }
    let s = l2_amplitude / norm;
    VectorField {
        comps: u
            .comps
            .iter()
            .map(|p| ScalarField {
                data: p.data.iter().map(|&v| v * s).collect(),
            })
            .collect(),
    }
}
