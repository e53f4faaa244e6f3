//! Right-hand sides of the coupled system: transport-relaxation of the
//! Q-tensor and incompressible momentum balance with elastic and
//! rotational stresses.
//!
//! Conventions: `(grad u)_{ab} = d_b u_a`, vorticity `w = (grad u - grad u^T)/2`,
//! elastic stress `tau_{ab} = -d_a Q : d_b Q`, rotational stress
//! `sigma = Q lap(Q) - lap(Q) Q`. The sign of `tau` is the one under which
//! the elastic exchange terms cancel in the energy balance; the alternative
//! `+div(grad Q x grad Q)` forcing breaks dissipativity (see the energy
//! balance tests in `diagnostics`).
//!
//! In 2-D the velocity keeps two components while Q stays a full 3x3
//! traceless symmetric tensor; the vorticity embeds with zero third row and
//! column, which preserves the rotational energy cancellation pointwise.

use crate::algebra::{commutator_antisym, rotate, Antisym3, PotentialParams, TracelessSym3};
use crate::field::{AntisymField, Field, ScalarField, TensorField, VectorField};
use crate::grid::Grid;
use crate::scalar::{r64, Real};
use num_complex::Complex;

/// Physical coefficients and discretization switches for RHS assembly.
#[derive(Clone, Copy, Debug)]
pub struct RhsOptions<R> {
    pub potential: PotentialParams<R>,
    /// Viscosity multiplier on `lap u` (1 in the reference system).
    pub viscosity: R,
    /// Relaxation multiplier on `lap Q - L[dF(Q)]` (1 in the reference system).
    pub relaxation: R,
    /// Apply the 2/3 rule to every nonlinear product.
    pub dealias: bool,
}

impl<R: Real> RhsOptions<R> {
    pub fn new(potential: PotentialParams<R>) -> Self {
        Self {
            potential,
            viscosity: R::one(),
            relaxation: R::one(),
            dealias: true,
        }
    }
}

/// Assembled time derivatives; `du_dt` is Leray-projected and mean-free.
#[derive(Clone, Debug)]
pub struct Rhs<R> {
    pub dq_dt: TensorField<R>,
    pub du_dt: VectorField<R>,
}

/// Spectral form of the explicit (nonlinear) terms plus the state spectra,
/// shared between the public RHS wrappers and the IMEX stepper.
pub(crate) struct SpectralRhs<R> {
    /// Explicit Q terms: `-(u.grad)Q + [w,Q] - relax (L[dF(Q)] - aQ)`.
    pub nq: Vec<Vec<Complex<R>>>,
    /// Explicit u terms: `P[-(u.grad)u + div tau + div sigma]`.
    pub nu: Vec<Vec<Complex<R>>>,
    pub q_hat: Vec<Vec<Complex<R>>>,
    pub u_hat: Vec<Vec<Complex<R>>>,
}

#[inline]
fn mul_ik<R: Real>(k: R, v: Complex<R>) -> Complex<R> {
    Complex::new(-v.im * k, v.re * k)
}

#[inline]
fn sym_pair_index(a: usize, b: usize, dim: usize) -> usize {
    let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
    // Row-major upper triangle.
    lo * dim - lo * (lo + 1) / 2 + hi
}

#[inline]
fn vorticity_at<R: Real>(grad_u: &[Vec<ScalarField<R>>], idx: usize, dim: usize) -> Antisym3<R> {
    let half = r64::<R>(0.5);
    let a12 = half * (grad_u[0][1].data[idx] - grad_u[1][0].data[idx]);
    if dim == 2 {
        Antisym3::new(a12, R::zero(), R::zero())
    } else {
        Antisym3::new(
            a12,
            half * (grad_u[0][2].data[idx] - grad_u[2][0].data[idx]),
            half * (grad_u[1][2].data[idx] - grad_u[2][1].data[idx]),
        )
    }
}

/// Vorticity tensor `w_{ab} = (d_b u_a - d_a u_b)/2`.
pub fn vorticity<R: Real>(grid: &Grid<R>, u: &VectorField<R>) -> AntisymField<R> {
    let dim = grid.dim();
    let u_hat: Vec<_> = u.comps.iter().map(|p| grid.forward(p)).collect();
    let grad_u: Vec<Vec<ScalarField<R>>> = (0..dim)
        .map(|a| {
            (0..dim)
                .map(|b| grid.backward(&grid.derivative_spectral(&u_hat[a], b)))
                .collect()
        })
        .collect();
    let mut w = AntisymField::zeros(grid);
    for idx in 0..grid.len() {
        w.set(idx, vorticity_at(&grad_u, idx, dim));
    }
    w
}

pub(crate) fn explicit_rhs<R: Real>(
    grid: &Grid<R>,
    u: &VectorField<R>,
    q: &TensorField<R>,
    opts: &RhsOptions<R>,
) -> SpectralRhs<R> {
    let dim = grid.dim();
    let len = grid.len();
    let q_hat: Vec<_> = q.comps.iter().map(|p| grid.forward(p)).collect();
    let u_hat: Vec<_> = u.comps.iter().map(|p| grid.forward(p)).collect();

    let grad_q: Vec<TensorField<R>> = (0..dim)
        .map(|axis| {
            TensorField::from_planes(
                q_hat
                    .iter()
                    .map(|s| grid.backward(&grid.derivative_spectral(s, axis)))
                    .collect(),
            )
        })
        .collect();
    let lap_q = TensorField::from_planes(
        q_hat
            .iter()
            .map(|s| {
                let scaled: Vec<Complex<R>> = s
                    .iter()
                    .enumerate()
                    .map(|(idx, &v)| v * (-grid.k_sq(idx)))
                    .collect();
                grid.backward(&scaled)
            })
            .collect(),
    );
    let grad_u: Vec<Vec<ScalarField<R>>> = (0..dim)
        .map(|a| {
            (0..dim)
                .map(|b| grid.backward(&grid.derivative_spectral(&u_hat[a], b)))
                .collect()
        })
        .collect();

    // Q equation: -(u.grad)Q + [w,Q] - relax (L[dF(Q)] - aQ).
    let mut nq_real = TensorField::zeros(grid);
    for idx in 0..len {
        let qv = q.at(idx);
        let uv = u.at(idx);
        let mut adv = TracelessSym3::zero();
        for (axis, dq) in grad_q.iter().enumerate() {
            adv = adv + dq.at(idx).scale(uv[axis]);
        }
        let w = vorticity_at(&grad_u, idx, dim);
        let nonlinear_potential =
            opts.potential.gradient(&qv) - qv.scale(opts.potential.a);
        nq_real.set(
            idx,
            rotate(&w, &qv) - adv - nonlinear_potential.scale(opts.relaxation),
        );
    }
    let mut nq: Vec<Vec<Complex<R>>> =
        nq_real.comps.iter().map(|p| grid.forward(p)).collect();
    if opts.dealias {
        for s in &mut nq {
            grid.dealias_spectrum(s);
        }
    }

    // Momentum equation: advection and the two Q-stresses.
    let n_pairs = dim * (dim + 1) / 2;
    let mut advection: Vec<ScalarField<R>> =
        (0..dim).map(|_| ScalarField::zeros(grid)).collect();
    let mut elastic: Vec<ScalarField<R>> =
        (0..n_pairs).map(|_| ScalarField::zeros(grid)).collect();
    let n_sigma = if dim == 2 { 1 } else { 3 };
    let mut sigma: Vec<ScalarField<R>> =
        (0..n_sigma).map(|_| ScalarField::zeros(grid)).collect();
    for idx in 0..len {
        let uv = u.at(idx);
        for a in 0..dim {
            let mut s = R::zero();
            for b in 0..dim {
                s += uv[b] * grad_u[a][b].data[idx];
            }
            advection[a].data[idx] = s;
        }
        for a in 0..dim {
            for b in a..dim {
                elastic[sym_pair_index(a, b, dim)].data[idx] =
                    grad_q[a].at(idx).dot(&grad_q[b].at(idx));
            }
        }
        let s = commutator_antisym(&q.at(idx), &lap_q.at(idx));
        sigma[0].data[idx] = s.a12;
        if dim == 3 {
            sigma[1].data[idx] = s.a13;
            sigma[2].data[idx] = s.a23;
        }
    }
    let advection_hat: Vec<Vec<Complex<R>>> =
        advection.iter().map(|p| grid.forward(p)).collect();
    let elastic_hat: Vec<Vec<Complex<R>>> =
        elastic.iter().map(|p| grid.forward(p)).collect();
    let sigma_hat: Vec<Vec<Complex<R>>> = sigma.iter().map(|p| grid.forward(p)).collect();

    let sigma_entry = |a: usize, b: usize, idx: usize| -> Complex<R> {
        let zero = Complex::new(R::zero(), R::zero());
        match (a, b) {
            (0, 1) => sigma_hat[0][idx],
            (1, 0) => -sigma_hat[0][idx],
            (0, 2) => sigma_hat[1][idx],
            (2, 0) => -sigma_hat[1][idx],
            (1, 2) => sigma_hat[2][idx],
            (2, 1) => -sigma_hat[2][idx],
            _ => zero,
        }
    };

    let mut nu: Vec<Vec<Complex<R>>> = (0..dim)
        .map(|_| vec![Complex::new(R::zero(), R::zero()); len])
        .collect();
    for idx in 0..len {
        let kg = grid.grad_mode(idx);
        for a in 0..dim {
            let mut acc = -advection_hat[a][idx];
            for b in 0..dim {
                let stress =
                    -elastic_hat[sym_pair_index(a, b, dim)][idx] + sigma_entry(a, b, idx);
                acc += mul_ik(kg[b], stress);
            }
            nu[a][idx] = acc;
        }
    }
    if opts.dealias {
        for s in &mut nu {
            grid.dealias_spectrum(s);
        }
    }
    grid.leray_spectral(&mut nu);
    for s in &mut nu {
        s[0] = Complex::new(R::zero(), R::zero());
    }

    SpectralRhs {
        nq,
        nu,
        q_hat,
        u_hat,
    }
}

/// Full right-hand sides including the linear diffusion and damping terms.
pub fn rhs<R: Real>(
    grid: &Grid<R>,
    u: &VectorField<R>,
    q: &TensorField<R>,
    opts: &RhsOptions<R>,
) -> Rhs<R> {
    let sp = explicit_rhs(grid, u, q, opts);
    let dq_dt = TensorField::from_planes(
        (0..5)
            .map(|p| {
                let spec: Vec<Complex<R>> = sp.nq[p]
                    .iter()
                    .zip(sp.q_hat[p].iter())
                    .enumerate()
                    .map(|(idx, (&n, &qh))| {
                        n + qh * (opts.relaxation * (-grid.k_sq(idx) - opts.potential.a))
                    })
                    .collect();
                grid.backward(&spec)
            })
            .collect(),
    );
    let du_dt = VectorField {
        comps: (0..grid.dim())
            .map(|a| {
                let spec: Vec<Complex<R>> = sp.nu[a]
                    .iter()
                    .zip(sp.u_hat[a].iter())
                    .enumerate()
                    .map(|(idx, (&n, &uh))| n + uh * (-opts.viscosity * grid.k_sq(idx)))
                    .collect();
                grid.backward(&spec)
            })
            .collect(),
    };
    Rhs { dq_dt, du_dt }
}

/// Q-tensor evolution rate `-(u.grad)Q + [w,Q] + relax (lap Q - L[dF(Q)])`.
pub fn q_rhs<R: Real>(
    grid: &Grid<R>,
    u: &VectorField<R>,
    q: &TensorField<R>,
    opts: &RhsOptions<R>,
) -> TensorField<R> {
    rhs(grid, u, q, opts).dq_dt
}

/// Velocity evolution rate, Leray-projected:
/// `P[-(u.grad)u + visc lap u - div(grad Q x grad Q) + div(Q lap Q - lap Q Q)]`.
pub fn u_rhs<R: Real>(
    grid: &Grid<R>,
    u: &VectorField<R>,
    q: &TensorField<R>,
    opts: &RhsOptions<R>,
) -> VectorField<R> {
    rhs(grid, u, q, opts).du_dt
}

/// Divergence of the elastic stress `tau_{ab} = -d_a Q : d_b Q`.
pub fn div_elastic_stress<R: Real>(grid: &Grid<R>, q: &TensorField<R>) -> VectorField<R> {
    let dim = grid.dim();
    let grad_q = grid.gradient_field(q);
    let mut planes: Vec<Vec<Complex<R>>> = Vec::new();
    for a in 0..dim {
        for b in a..dim {
            let mut t = ScalarField::zeros(grid);
            for idx in 0..grid.len() {
                t.data[idx] = grad_q[a].at(idx).dot(&grad_q[b].at(idx));
            }
            let mut spec = grid.forward(&t);
            grid.dealias_spectrum(&mut spec);
            planes.push(spec);
        }
    }
    let comps = (0..dim)
        .map(|a| {
            let spec: Vec<Complex<R>> = (0..grid.len())
                .map(|idx| {
                    let kg = grid.grad_mode(idx);
                    let mut acc = Complex::new(R::zero(), R::zero());
                    for b in 0..dim {
                        acc += mul_ik(kg[b], -planes[sym_pair_index(a, b, dim)][idx]);
                    }
                    acc
                })
                .collect();
            grid.backward(&spec)
        })
        .collect();
    VectorField { comps }
}

/// Divergence of the rotational stress `sigma = Q lap Q - lap Q Q`.
pub fn div_rotational_stress<R: Real>(grid: &Grid<R>, q: &TensorField<R>) -> VectorField<R> {
    let dim = grid.dim();
    let lap_q = grid.laplacian(q);
    let mut sigma = AntisymField::zeros(grid);
    for idx in 0..grid.len() {
        sigma.set(idx, commutator_antisym(&q.at(idx), &lap_q.at(idx)));
    }
    let sigma_hat: Vec<Vec<Complex<R>>> = sigma
        .comps
        .iter()
        .map(|p| {
            let mut spec = grid.forward(p);
            grid.dealias_spectrum(&mut spec);
            spec
        })
        .collect();
    let entry = |a: usize, b: usize, idx: usize| -> Complex<R> {
        match (a, b) {
            (0, 1) => sigma_hat[0][idx],
            (1, 0) => -sigma_hat[0][idx],
            (0, 2) => sigma_hat[1][idx],
            (2, 0) => -sigma_hat[1][idx],
            (1, 2) => sigma_hat[2][idx],
            (2, 1) => -sigma_hat[2][idx],
            _ => Complex::new(R::zero(), R::zero()),
        }
    };
    let comps = (0..dim)
        .map(|a| {
            let spec: Vec<Complex<R>> = (0..grid.len())
                .map(|idx| {
                    let kg = grid.grad_mode(idx);
                    let mut acc = Complex::new(R::zero(), R::zero());
                    for b in 0..dim {
                        acc += mul_ik(kg[b], entry(a, b, idx));
                    }
                    acc
                })
                .collect();
            grid.backward(&spec)
        })
        .collect();
    VectorField { comps }
}

/// Pressure recovery: solves `-lap P = div^2 [u x u + grad Q x grad Q]`
/// with zero mean. The rotational stress drops out because the double
/// divergence of an antisymmetric tensor vanishes identically.
pub fn pressure_solve<R: Real>(
    grid: &Grid<R>,
    u: &VectorField<R>,
    q: &TensorField<R>,
) -> ScalarField<R> {
    let dim = grid.dim();
    let grad_q = grid.gradient_field(q);
    let mut planes: Vec<Vec<Complex<R>>> = Vec::new();
    for a in 0..dim {
        for b in a..dim {
            let mut t = ScalarField::zeros(grid);
            for idx in 0..grid.len() {
                t.data[idx] = u.comps[a].data[idx] * u.comps[b].data[idx]
                    + grad_q[a].at(idx).dot(&grad_q[b].at(idx));
            }
            let mut spec = grid.forward(&t);
            grid.dealias_spectrum(&mut spec);
            planes.push(spec);
        }
    }
    // -lap P = d_a d_b T_ab  =>  P_hat = -k_a k_b T_ab_hat / |k|^2.
    let spec: Vec<Complex<R>> = (0..grid.len())
        .map(|idx| {
            let kg = grid.grad_mode(idx);
            let k2 = kg[0] * kg[0] + kg[1] * kg[1] + kg[2] * kg[2];
            if k2 == R::zero() {
                return Complex::new(R::zero(), R::zero());
            }
            let mut acc = Complex::new(R::zero(), R::zero());
            for a in 0..dim {
                for b in 0..dim {
                    acc += planes[sym_pair_index(a, b, dim)][idx] * (kg[a] * kg[b]);
                }
            }
            -acc / k2
        })
        .collect();
    grid.backward(&spec)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebra::PotentialParams;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn opts(a: f64, b: f64, c: f64) -> RhsOptions<f64> {
        RhsOptions::new(PotentialParams::derive(a, b, c).unwrap())
    }

    fn noise_scalar(grid: &Grid<f64>, seed: u64, amp: f64) -> ScalarField<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        grid.dealias(&ScalarField {
            data: (0..grid.len()).map(|_| rng.gen_range(-amp..amp)).collect(),
        })
    }

    fn random_divfree_u(grid: &Grid<f64>, seed: u64, amp: f64) -> VectorField<f64> {
        let v = VectorField {
            comps: (0..grid.dim())
                .map(|c| noise_scalar(grid, seed + c as u64, amp))
                .collect(),
        };
        let mut proj = grid.leray_project(&v);
        for comp in &mut proj.comps {
            let mean = grid.mean(comp);
            for x in &mut comp.data {
                *x -= mean;
            }
        }
        proj
    }

    fn random_q(grid: &Grid<f64>, seed: u64, amp: f64) -> TensorField<f64> {
        TensorField::from_planes(
            (0..5)
                .map(|p| noise_scalar(grid, seed + 10 * p as u64, amp))
                .collect(),
        )
    }

    fn quad(grid: &Grid<f64>, vals: impl Iterator<Item = f64>) -> f64 {
        vals.sum::<f64>() * grid.cell_volume()
    }

    #[test]
    fn vorticity_examples() {
        let grid = Grid::<f64>::new(2, 32).unwrap();
        // Gradient fields have no curl.
        let u = VectorField::from_fn(&grid, |p| [-p[0].sin(), 0.0, 0.0]);
        let w = vorticity(&grid, &u);
        for plane in &w.comps {
            assert!(plane.data.iter().all(|v| v.abs() < 1e-12));
        }
        // u = e1 sin(x2): w12 = cos(x2)/2.
        let u = VectorField::from_fn(&grid, |p| [p[1].sin(), 0.0, 0.0]);
        let w = vorticity(&grid, &u);
        for idx in 0..grid.len() {
            let expect = 0.5 * grid.point(idx)[1].cos();
            assert!((w.comps[0].data[idx] - expect).abs() < 1e-12);
            assert!(w.comps[1].data[idx].abs() < 1e-14);
            assert!(w.comps[2].data[idx].abs() < 1e-14);
        }
    }

    #[test]
    fn q_rhs_zero_state_is_zero() {
        let grid = Grid::<f64>::new(2, 16).unwrap();
        let out = rhs(
            &grid,
            &VectorField::zeros(&grid),
            &TensorField::zeros(&grid),
            &opts(1.0, 1.0, 1.0),
        );
        for p in &out.dq_dt.comps {
            assert!(p.data.iter().all(|v| v.abs() < 1e-14));
        }
        for p in &out.du_dt.comps {
            assert!(p.data.iter().all(|v| v.abs() < 1e-14));
        }
    }

    #[test]
    fn q_rhs_uniform_state_relaxes_by_potential_gradient() {
        let grid = Grid::<f64>::new(2, 16).unwrap();
        let o = opts(1.0, 1.0, 1.0);
        let qbar = crate::algebra::TracelessSym3::uniaxial_x(1.0);
        let q = TensorField::from_fn(&grid, |_| qbar);
        let out = q_rhs(&grid, &VectorField::zeros(&grid), &q, &o);
        let factor = -(1.0 - 1.0 / 6.0f64.sqrt() + 1.0);
        for idx in 0..grid.len() {
            assert!((out.at(idx) - qbar.scale(factor)).norm() < 1e-12);
        }
    }

    #[test]
    fn q_rhs_linear_relaxation_matches_heat_plus_damping() {
        let grid = Grid::<f64>::new(2, 32).unwrap();
        let mut o = opts(0.7, 0.0, 1.0);
        o.potential.b = 0.0;
        o.potential.c = 0.0;
        let q = TensorField::from_fn(&grid, |p| {
            crate::algebra::TracelessSym3::uniaxial_x(p[0].sin())
        });
        let out = q_rhs(&grid, &VectorField::zeros(&grid), &q, &o);
        for idx in 0..grid.len() {
            let expect = q.at(idx).scale(-(1.0 + 0.7));
            assert!((out.at(idx) - expect).norm() < 1e-12);
        }
    }

    #[test]
    fn u_rhs_pure_viscosity() {
        let grid = Grid::<f64>::new(2, 32).unwrap();
        let u = VectorField::from_fn(&grid, |p| [0.0, p[0].sin(), 0.0]);
        let out = u_rhs(&grid, &u, &TensorField::zeros(&grid), &opts(1.0, 1.0, 1.0));
        for idx in 0..grid.len() {
            let expect = -grid.point(idx)[0].sin();
            assert!((out.comps[1].data[idx] - expect).abs() < 1e-12);
            assert!(out.comps[0].data[idx].abs() < 1e-12);
        }
    }

    #[test]
    fn u_rhs_vanishes_for_uniform_q() {
        let grid = Grid::<f64>::new(2, 16).unwrap();
        let q = TensorField::from_fn(&grid, |_| crate::algebra::TracelessSym3::uniaxial_x(0.5));
        let out = u_rhs(&grid, &VectorField::zeros(&grid), &q, &opts(1.0, 1.0, 1.0));
        for p in &out.comps {
            assert!(p.data.iter().all(|v| v.abs() < 1e-13));
        }
    }

    #[test]
    fn pressure_solve_residual_is_tiny() {
        for dim in [2usize, 3] {
            let n = if dim == 2 { 32 } else { 16 };
            let grid = Grid::<f64>::new(dim, n).unwrap();
            let u = random_divfree_u(&grid, 101, 0.5);
            let q = random_q(&grid, 202, 0.5);
            let p = pressure_solve(&grid, &u, &q);
            // Residual of -lap P = div^2 T with the dealiased product tensor.
            let lap_p = grid.laplacian(&p);
            let grad_q = grid.gradient_field(&q);
            let mut div2 = vec![Complex::new(0.0, 0.0); grid.len()];
            for a in 0..dim {
                for b in 0..dim {
                    let mut t = ScalarField::zeros(&grid);
                    for idx in 0..grid.len() {
                        t.data[idx] = u.comps[a].data[idx] * u.comps[b].data[idx]
                            + grad_q[a].at(idx).dot(&grad_q[b].at(idx));
                    }
                    let mut spec = grid.forward(&t);
                    grid.dealias_spectrum(&mut spec);
                    for idx in 0..grid.len() {
                        let kg = grid.grad_mode(idx);
                        div2[idx] += spec[idx] * (-kg[a] * kg[b]);
                    }
                }
            }
            let div2_real = grid.backward(&div2);
            let mut residual = 0.0f64;
            let mut scale = 0.0f64;
            for idx in 0..grid.len() {
                residual += (lap_p.data[idx] + div2_real.data[idx]).powi(2);
                scale += div2_real.data[idx].powi(2);
            }
            assert!(residual.sqrt() <= 1e-10 * scale.sqrt().max(1.0));
            // Zero-mean normalization.
            assert!(grid.mean(&p).abs() < 1e-12);
        }
    }

    #[test]
    fn double_divergence_of_rotational_stress_vanishes() {
        let grid = Grid::<f64>::new(2, 32).unwrap();
        let q = random_q(&grid, 33, 1.0);
        let lap_q = grid.laplacian(&q);
        let mut sigma = AntisymField::zeros(&grid);
        for idx in 0..grid.len() {
            sigma.set(idx, commutator_antisym(&q.at(idx), &lap_q.at(idx)));
        }
        let sigma_hat: Vec<_> = sigma.comps.iter().map(|p| grid.forward(p)).collect();
        let mut div2 = vec![Complex::new(0.0, 0.0); grid.len()];
        let entry = |a: usize, b: usize, idx: usize| -> Complex<f64> {
            match (a, b) {
                (0, 1) => sigma_hat[0][idx],
                (1, 0) => -sigma_hat[0][idx],
                _ => Complex::new(0.0, 0.0),
            }
        };
        for a in 0..2 {
            for b in 0..2 {
                for idx in 0..grid.len() {
                    let kg = grid.grad_mode(idx);
                    div2[idx] += entry(a, b, idx) * (-kg[a] * kg[b]);
                }
            }
        }
        let real = grid.backward(&div2);
        let norm_scale = grid.l2_norm(&q) * grid.l2_norm(&lap_q);
        assert!(grid.l2_norm(&real) <= 1e-9 * norm_scale.max(1.0));
    }

    #[test]
    fn rotational_stress_is_energy_neutral() {
        for dim in [2usize, 3] {
            let n = if dim == 2 { 32 } else { 16 };
            let grid = Grid::<f64>::new(dim, n).unwrap();
            let u = random_divfree_u(&grid, 7, 0.8);
            let q = random_q(&grid, 8, 0.8);
            let div_sigma = div_rotational_stress(&grid, &q);
            let w = vorticity(&grid, &u);
            let lap_q = grid.laplacian(&q);
            let work_u = quad(
                &grid,
                (0..grid.len()).map(|i| {
                    (0..dim)
                        .map(|a| div_sigma.comps[a].data[i] * u.comps[a].data[i])
                        .sum::<f64>()
                }),
            );
            let work_q = quad(
                &grid,
                (0..grid.len())
                    .map(|i| rotate(&w.at(i), &q.at(i)).dot(&lap_q.at(i).scale(-1.0))),
            );
            let scale = work_u.abs().max(work_q.abs()).max(1e-6);
            assert!(
                (work_u + work_q).abs() <= 1e-9 * scale,
                "dim {dim}: {work_u} + {work_q}"
            );
        }
    }

    #[test]
    fn transport_is_energy_neutral() {
        for dim in [2usize, 3] {
            let n = if dim == 2 { 32 } else { 16 };
            let grid = Grid::<f64>::new(dim, n).unwrap();
            let u = random_divfree_u(&grid, 17, 0.8);
            let q = random_q(&grid, 18, 0.8);
            let grad_q = grid.gradient_field(&q);
            let pairing = quad(
                &grid,
                (0..grid.len()).map(|i| {
                    let mut adv = crate::algebra::TracelessSym3::zero();
                    for a in 0..dim {
                        adv = adv + grad_q[a].at(i).scale(u.comps[a].data[i]);
                    }
                    adv.dot(&q.at(i))
                }),
            );
            let scale = grid.l2_norm(&q).powi(2).max(1e-6);
            assert!(pairing.abs() <= 1e-9 * scale, "dim {dim}: {pairing}");
        }
    }
}
