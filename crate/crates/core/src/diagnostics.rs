//! Per-snapshot physical diagnostics: norms, the energy functional and its
//! dissipation, weighted Lq balances, maximum-principle margins, decay-rate
//! fits and the two-run perturbation metrics.

use crate::algebra::PotentialParams;
use crate::dynamics::{rhs, RhsOptions};
use crate::error::{Error, Result};
use crate::field::{Field, ScalarField, TensorField, VectorField};
use crate::grid::Grid;
use crate::scalar::{as_f64, r64, Real};
use crate::timestepper::{RunOutput, State};
use std::io::Write;

/// One sampled row of the record stream.
#[derive(Clone, Debug)]
pub struct DiagnosticsRecord<R> {
    pub t: R,
    pub u_l2: R,
    pub q_l1: R,
    pub q_l2: R,
    pub q_l4: R,
    pub q_linf: R,
    pub gradq_l2: R,
    pub q_h1: R,
    pub energy: R,
    pub dissipation: R,
    /// `||Q0||_inf - ||Q(t)||_inf`; nonnegative when the maximum principle holds.
    pub margin: R,
    /// Discrete balance over the previous record interval:
    /// `dE/dt + D` by central differencing; 0 on the first record.
    pub ebal_residual: R,
    /// Additional `(q, ||Q||_Lq)` pairs beyond the fixed header set.
    pub extra_q: Vec<(R, R)>,
}

pub const CSV_HEADER: &str =
    "t,u_l2,q_l1,q_l2,q_l4,q_linf,gradq_l2,q_h1,energy,dissipation,margin,ebal_residual";

impl<R: Real> DiagnosticsRecord<R> {
    pub fn csv_row(&self) -> String {
        let mut row = format!(
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            self.t,
            self.u_l2,
            self.q_l1,
            self.q_l2,
            self.q_l4,
            self.q_linf,
            self.gradq_l2,
            self.q_h1,
            self.energy,
            self.dissipation,
            self.margin,
            self.ebal_residual
        );
        for (_, v) in &self.extra_q {
            row.push(',');
            row.push_str(&format!("{v}"));
        }
        row
    }
}

/// Consumer of records as a run produces them.
pub trait RecordSink<R: Real> {
    fn record(&mut self, rec: &DiagnosticsRecord<R>);
}

impl<R: Real> RecordSink<R> for Vec<DiagnosticsRecord<R>> {
    fn record(&mut self, rec: &DiagnosticsRecord<R>) {
        self.push(rec.clone());
    }
}

/// Streams records as CSV, header first.
pub struct CsvSink<W: Write> {
    writer: W,
    wrote_header: bool,
    extra_q: Vec<f64>,
}

impl<W: Write> CsvSink<W> {
    pub fn new(writer: W) -> Self {
        Self {
            writer,
            wrote_header: false,
            extra_q: Vec::new(),
        }
    }
}

impl<R: Real, W: Write> RecordSink<R> for CsvSink<W> {
    fn record(&mut self, rec: &DiagnosticsRecord<R>) {
        if !self.wrote_header {
            let mut header = CSV_HEADER.to_string();
            self.extra_q = rec.extra_q.iter().map(|(q, _)| as_f64(*q)).collect();
            for q in &self.extra_q {
                header.push_str(&format!(",q_l{q}"));
            }
            writeln!(self.writer, "{header}").expect("csv write");
            self.wrote_header = true;
        }
        writeln!(self.writer, "{}", rec.csv_row()).expect("csv write");
    }
}

/// Pointwise `|grad Q|^2 = sum_g |d_g Q|_F^2` plane.
fn grad_sq_plane<R: Real, F: Field<R>>(grid: &Grid<R>, f: &F) -> ScalarField<R> {
    let grads = grid.gradient_field(f);
    let mut out = ScalarField::zeros(grid);
    for idx in 0..grid.len() {
        out.data[idx] = grads
            .iter()
            .map(|g| g.magnitude_sq(idx))
            .fold(R::zero(), |a, v| a + v);
    }
    out
}

/// Total free energy `int [ |u|^2/2 + |grad Q|^2/2 + F(Q) ]`.
pub fn energy<R: Real>(
    grid: &Grid<R>,
    u: &VectorField<R>,
    q: &TensorField<R>,
    p: &PotentialParams<R>,
) -> R {
    let gq = grad_sq_plane(grid, q);
    let half = r64::<R>(0.5);
    let mut acc = R::zero();
    for idx in 0..grid.len() {
        acc += half * u.magnitude_sq(idx) + half * gq.data[idx] + p.value(&q.at(idx));
    }
    acc * grid.cell_volume()
}

/// Molecular field `H = lap Q - L[dF(Q)]`.
pub fn molecular_field<R: Real>(
    grid: &Grid<R>,
    q: &TensorField<R>,
    p: &PotentialParams<R>,
) -> TensorField<R> {
    let mut h = grid.laplacian(q);
    for idx in 0..grid.len() {
        let v = h.at(idx) - p.gradient(&q.at(idx));
        h.set(idx, v);
    }
    h
}

/// `int [ |grad u|^2 + |H|^2 ]`, the energy decay rate at unit coefficients.
pub fn dissipation<R: Real>(
    grid: &Grid<R>,
    u: &VectorField<R>,
    q: &TensorField<R>,
    p: &PotentialParams<R>,
) -> R {
    dissipation_weighted(grid, u, q, p, R::one(), R::one())
}

/// `int [ visc |grad u|^2 + relax |H|^2 ]`.
pub fn dissipation_weighted<R: Real>(
    grid: &Grid<R>,
    u: &VectorField<R>,
    q: &TensorField<R>,
    p: &PotentialParams<R>,
    viscosity: R,
    relaxation: R,
) -> R {
    let gu = grad_sq_plane(grid, u);
    let h = molecular_field(grid, q, p);
    let mut acc = R::zero();
    for idx in 0..grid.len() {
        acc += viscosity * gu.data[idx] + relaxation * h.magnitude_sq(idx);
    }
    acc * grid.cell_volume()
}

/// Instantaneous energy balance evaluated by the chain rule on the
/// assembled right-hand sides.
#[derive(Clone, Copy, Debug)]
pub struct EnergyBalance<R> {
    pub dedt: R,
    pub dissipation: R,
    /// `dE/dt + D`; zero for the exact semigroup.
    pub residual: R,
    pub relative_residual: R,
}

pub fn energy_balance<R: Real>(
    grid: &Grid<R>,
    u: &VectorField<R>,
    q: &TensorField<R>,
    opts: &RhsOptions<R>,
) -> EnergyBalance<R> {
    let out = rhs(grid, u, q, opts);
    let grad_q = grid.gradient_field(q);
    let grad_dq = grid.gradient_field(&out.dq_dt);
    let mut dedt = R::zero();
    for idx in 0..grid.len() {
        let mut point = R::zero();
        for (a, comp) in u.comps.iter().enumerate() {
            point += comp.data[idx] * out.du_dt.comps[a].data[idx];
        }
        for (gq, gdq) in grad_q.iter().zip(grad_dq.iter()) {
            point += gq.at(idx).dot(&gdq.at(idx));
        }
        point += opts.potential.gradient(&q.at(idx)).dot(&out.dq_dt.at(idx));
        dedt += point;
    }
    dedt *= grid.cell_volume();
    let diss =
        dissipation_weighted(grid, u, q, &opts.potential, opts.viscosity, opts.relaxation);
    let residual = dedt + diss;
    let scale = dedt.abs().max(diss).max(R::min_positive_value());
    EnergyBalance {
        dedt,
        dissipation: diss,
        residual,
        relative_residual: residual.abs() / scale,
    }
}

/// Residual of the G-weighted balance with `G(z) = z^q` applied to
/// `z = |Q|^2`, finite-differenced across two consecutive states:
/// `d/dt int |Q|^{2q} + int [2q |Q|^{2(q-1)} |grad Q|^2
///  + q(q-1) |Q|^{2(q-2)} |grad |Q|^2|^2] + 2q int |Q|^{2(q-1)} dF(Q):Q`.
pub fn g_weighted_balance<R: Real>(
    grid: &Grid<R>,
    pre: &State<R>,
    post: &State<R>,
    exponent: u32,
    p: &PotentialParams<R>,
) -> R {
    assert!(exponent >= 1, "G(z) = z^q needs q >= 1");
    let dt = post.t - pre.t;
    assert!(dt > R::zero(), "states must be ordered in time");
    let qf = r64::<R>(exponent as f64);

    let lq_2q = |state: &State<R>| -> R {
        let mut acc = R::zero();
        for idx in 0..grid.len() {
            acc += state.q.magnitude_sq(idx).powi(exponent as i32);
        }
        acc * grid.cell_volume()
    };
    let interior = |state: &State<R>| -> R {
        let gq = grad_sq_plane(grid, &state.q);
        let norm_sq = ScalarField {
            data: (0..grid.len()).map(|i| state.q.magnitude_sq(i)).collect(),
        };
        let grad_norm_sq = grad_sq_plane(grid, &norm_sq);
        let mut acc = R::zero();
        for idx in 0..grid.len() {
            let z = norm_sq.data[idx];
            let mut v = r64::<R>(2.0) * qf * z.powi(exponent as i32 - 1) * gq.data[idx];
            if exponent >= 2 {
                v += qf
                    * (qf - R::one())
                    * z.powi(exponent as i32 - 2)
                    * grad_norm_sq.data[idx];
            }
            acc += v;
        }
        acc * grid.cell_volume()
    };
    let potential_term = |state: &State<R>| -> R {
        let mut acc = R::zero();
        for idx in 0..grid.len() {
            let qv = state.q.at(idx);
            acc += qv.norm_sq().powi(exponent as i32 - 1) * p.contraction(&qv);
        }
        r64::<R>(2.0) * qf * acc * grid.cell_volume()
    };

    let fd = (lq_2q(post) - lq_2q(pre)) / dt;
    let half = r64::<R>(0.5);
    fd + half * (interior(pre) + interior(post)) + half * (potential_term(pre) + potential_term(post))
}

/// Maximum-principle margins `(t, ||Q0||_inf - ||Q(t)||_inf)` from a record stream.
pub fn margin_series<R: Real>(records: &[DiagnosticsRecord<R>]) -> Vec<(R, R)> {
    records.iter().map(|r| (r.t, r.margin)).collect()
}

pub fn min_margin<R: Real>(records: &[DiagnosticsRecord<R>]) -> R {
    records
        .iter()
        .map(|r| r.margin)
        .fold(R::infinity(), |a, v| a.min(v))
}

#[derive(Clone, Copy, Debug)]
pub struct DecayFit<R> {
    /// Positive rate means exponential decay.
    pub rate: R,
    pub amplitude: R,
    pub rms_residual: R,
}

#[derive(Clone, Copy, Debug)]
pub struct FitOptions<R> {
    /// Fraction of the time span discarded as initial transient.
    pub skip_fraction: R,
    pub min_samples: usize,
}

impl<R: Real> Default for FitOptions<R> {
    fn default() -> Self {
        Self {
            skip_fraction: r64(0.2),
            min_samples: 10,
        }
    }
}

/// Least-squares line on `(t, log value)`.
pub fn decay_fit<R: Real>(series: &[(R, R)], opts: &FitOptions<R>) -> Result<DecayFit<R>> {
    if series.len() < opts.min_samples {
        return Err(Error::TooFewSamples {
            min: opts.min_samples,
            got: series.len(),
        });
    }
    let t0 = series[0].0;
    let t1 = series[series.len() - 1].0;
    let t_start = t0 + opts.skip_fraction * (t1 - t0);
    let mut pts = Vec::new();
    for (index, &(t, v)) in series.iter().enumerate() {
        if t < t_start {
            continue;
        }
        if v <= R::zero() {
            return Err(Error::NonPositiveSample {
                index,
                value: as_f64(v),
            });
        }
        pts.push((t, v.ln()));
    }
    if pts.len() < 2 {
        return Err(Error::TooFewSamples {
            min: 2,
            got: pts.len(),
        });
    }
    let n = r64::<R>(pts.len() as f64);
    let st: R = pts.iter().map(|p| p.0).sum();
    let sy: R = pts.iter().map(|p| p.1).sum();
    let stt: R = pts.iter().map(|p| p.0 * p.0).sum();
    let sty: R = pts.iter().map(|p| p.0 * p.1).sum();
    let denom = n * stt - st * st;
    let slope = (n * sty - st * sy) / denom;
    let intercept = (sy - slope * st) / n;
    let mut ss = R::zero();
    for &(t, y) in &pts {
        let e = y - (intercept + slope * t);
        ss += e * e;
    }
    Ok(DecayFit {
        rate: -slope,
        amplitude: intercept.exp(),
        rms_residual: (ss / n).sqrt(),
    })
}

/// Perturbation metrics for a pair of runs sharing grid and time stamps.
#[derive(Clone, Debug)]
pub struct DependenceReport<R> {
    pub times: Vec<R>,
    /// `E_n(t) = ||dQ||_L2^2 + ||lap dQ||_L2^2 + ||du||_L2^2`.
    pub e_n: Vec<R>,
    /// `A_n(t)`, the Gronwall weight assembled from the base/perturbed norms.
    pub a_n: Vec<R>,
    /// Cumulative trapezoid of `A_n`.
    pub a_int: Vec<R>,
    pub e0: R,
    pub sup_ratio: R,
    /// Whether `E_n(t) <= E_n(0) exp(c_abs int A_n)` held at every sample.
    pub envelope_ok: bool,
}

#[derive(Clone, Copy, Debug)]
pub struct DependenceOptions<R> {
    /// Constant absorbed into the Gronwall exponent.
    pub c_abs: R,
}

impl<R: Real> Default for DependenceOptions<R> {
    fn default() -> Self {
        Self { c_abs: R::one() }
    }
}

pub fn dependence_metrics<R: Real>(
    grid: &Grid<R>,
    base: &RunOutput<R>,
    perturbed: &RunOutput<R>,
    opts: &DependenceOptions<R>,
) -> Result<DependenceReport<R>> {
    if base.snapshots.is_empty() || perturbed.snapshots.is_empty() {
        return Err(Error::MismatchedRuns(
            "both runs must retain state snapshots".into(),
        ));
    }
    if base.snapshots.len() != perturbed.snapshots.len() {
        return Err(Error::MismatchedRuns(format!(
            "snapshot counts differ: {} vs {}",
            base.snapshots.len(),
            perturbed.snapshots.len()
        )));
    }
    for (a, b) in base.snapshots.iter().zip(perturbed.snapshots.iter()) {
        if a.t != b.t {
            return Err(Error::MismatchedRuns(format!(
                "time stamps differ: {} vs {}",
                as_f64(a.t),
                as_f64(b.t)
            )));
        }
        if a.q.comps[0].len() != grid.len() || b.q.comps[0].len() != grid.len() {
            return Err(Error::MismatchedRuns("snapshot grids differ".into()));
        }
    }

    let mut times = Vec::new();
    let mut e_n = Vec::new();
    let mut a_n = Vec::new();
    for (a, b) in base.snapshots.iter().zip(perturbed.snapshots.iter()) {
        times.push(a.t);

        let dq = TensorField::from_planes(
            (0..5)
                .map(|p| ScalarField {
                    data: a.q.comps[p]
                        .data
                        .iter()
                        .zip(b.q.comps[p].data.iter())
                        .map(|(x, y)| *y - *x)
                        .collect(),
                })
                .collect(),
        );
        let du = VectorField {
            comps: (0..grid.dim())
                .map(|cidx| ScalarField {
                    data: a.u.comps[cidx]
                        .data
                        .iter()
                        .zip(b.u.comps[cidx].data.iter())
                        .map(|(x, y)| *y - *x)
                        .collect(),
                })
                .collect(),
        };
        let lap_dq = grid.laplacian(&dq);
        let e = grid.l2_norm(&dq).powi(2)
            + grid.l2_norm(&lap_dq).powi(2)
            + grid.l2_norm(&du).powi(2);
        e_n.push(e);

        // Base-run norms.
        let gq = grad_sq_plane(grid, &a.q);
        let gu = grad_sq_plane(grid, &a.u);
        let gradq_inf = gq.data.iter().fold(R::zero(), |m, &v| m.max(v)).sqrt();
        let gradu_inf = gu.data.iter().fold(R::zero(), |m, &v| m.max(v)).sqrt();
        let u_inf = grid.linf_norm(&a.u);
        let q_inf = grid.linf_norm(&a.q);
        let lapq_inf = grid.linf_norm(&grid.laplacian(&a.q));
        let q_l2 = grid.l2_norm(&a.q);
        let q_l4 = grid.lq_norm(&a.q, r64(4.0))?;
        // Perturbed-run norms.
        let qn_l2 = grid.l2_norm(&b.q);
        let qn_l4 = grid.lq_norm(&b.q, r64(4.0))?;
        let qn_l8 = grid.lq_norm(&b.q, r64(8.0))?;

        let j1 = gradq_inf.powi(2) + gradu_inf.powi(2);
        let j2 = u_inf.powi(2) + gradq_inf.powi(2);
        let j3 = R::one() + gradu_inf.powi(2) + q_inf.powi(2) + lapq_inf.powi(2);
        let j4 = qn_l4.powi(2) + qn_l2 + q_l2 + qn_l8.powi(4);
        let j5 = q_inf * (qn_l2 + q_l2 + q_inf * (qn_l4.powi(2) + q_l4.powi(2)));
        a_n.push(j1 + j2 + j3 + j4 + j5);
    }

    let mut a_int = vec![R::zero(); times.len()];
    for i in 1..times.len() {
        let dt = times[i] - times[i - 1];
        a_int[i] = a_int[i - 1] + r64::<R>(0.5) * dt * (a_n[i] + a_n[i - 1]);
    }

    let e0 = e_n[0];
    let mut sup_ratio = R::zero();
    let mut envelope_ok = true;
    for i in 0..times.len() {
        if e0 > R::zero() {
            sup_ratio = sup_ratio.max(e_n[i] / e0);
            let envelope = e0 * (opts.c_abs * a_int[i]).exp();
            if e_n[i] > envelope {
                envelope_ok = false;
            }
        }
    }
    Ok(DependenceReport {
        times,
        e_n,
        a_n,
        a_int,
        e0,
        sup_ratio,
        envelope_ok,
    })
}

/// Build one record from a state; `prev` supplies the differencing for the
/// balance column.
#[allow(clippy::too_many_arguments)]
pub fn snapshot_record<R: Real>(
    grid: &Grid<R>,
    t: R,
    u: &VectorField<R>,
    q: &TensorField<R>,
    opts: &RhsOptions<R>,
    q0_linf: R,
    prev: Option<&DiagnosticsRecord<R>>,
    extra_q: &[R],
) -> DiagnosticsRecord<R> {
    let q_l2 = grid.l2_norm(q);
    let gq = grad_sq_plane(grid, q);
    let gradq_l2 = (gq.data.iter().fold(R::zero(), |a, &v| a + v) * grid.cell_volume()).sqrt();
    let q_linf = grid.linf_norm(q);
    let half = r64::<R>(0.5);
    let mut e = R::zero();
    for idx in 0..grid.len() {
        e += half * u.magnitude_sq(idx) + half * gq.data[idx]
            + opts.potential.value(&q.at(idx));
    }
    let energy = e * grid.cell_volume();
    let diss = dissipation_weighted(
        grid,
        u,
        q,
        &opts.potential,
        opts.viscosity,
        opts.relaxation,
    );
    let ebal = match prev {
        Some(p) if t > p.t => {
            (energy - p.energy) / (t - p.t) + half * (diss + p.dissipation)
        }
        _ => R::zero(),
    };
    DiagnosticsRecord {
        t,
        u_l2: grid.l2_norm(u),
        q_l1: grid.lq_norm(q, R::one()).expect("q = 1 is valid"),
        q_l2,
        q_l4: grid.lq_norm(q, r64(4.0)).expect("q = 4 is valid"),
        q_linf,
        gradq_l2,
        q_h1: (q_l2 * q_l2 + gradq_l2 * gradq_l2).sqrt(),
        energy,
        dissipation: diss,
        margin: q0_linf - q_linf,
        ebal_residual: ebal,
        extra_q: extra_q
            .iter()
            .map(|&qq| {
                (
                    qq,
                    grid.lq_norm(q, qq).expect("configured exponents are >= 1"),
                )
            })
            .collect(),
    }
}
