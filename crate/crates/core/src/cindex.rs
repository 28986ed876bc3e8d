//! Solvability indices computed from a single snapshot: the per-bus C-index
//! `c_h = |v_h| / sum_k |z_hk i_k|`, the necessary-condition predicate, the
//! fixed-point solvability bound it is compared against, and the
//! proportional-current margin.
//!
//! Fixed constant-current injections are never part of the sums; their
//! contribution is already folded into the equivalent source.

use nalgebra::{ComplexField, DVector};
use num_complex::Complex;

use crate::error::{Error, Result};
use crate::netmodel::{BusId, ReducedNetwork};
use crate::pfsolve::Snapshot;
use crate::scalar::{real, Scalar};

/// Outcome of the competing fixed-point solvability bound
/// `|v_s|^2 > 4 ||w^{-1} z conj(w)^{-1}||* ||s||` with `||.||*` the maximum
/// row Euclidean norm.
#[derive(Debug, Clone, Copy)]
pub struct BolognaniBound<T: Scalar> {
    pub lhs: T,
    pub rhs: T,
    pub satisfied: bool,
}

/// Per-bus indices at one operating point, over the constant-power buses.
#[derive(Debug, Clone)]
pub struct IndexReport<T: Scalar> {
    /// Bus ids in reduced order.
    pub bus: Vec<BusId>,
    pub v_mag: DVector<T>,
    /// Voltage-drop sums `sum_k |z_hk i_k|`.
    pub denom: DVector<T>,
    /// Per-bus index; +inf where the denominator vanishes.
    pub c: DVector<T>,
    pub c_min: T,
    /// Reduced index attaining the minimum, when finite.
    pub c_argmin: Option<usize>,
    /// True iff some c_h <= 1.
    pub condition_triggered: bool,
    pub bolognani: BolognaniBound<T>,
    /// Per-bus `|v_h| - |sum_k z_hk i_k|` (sum inside the magnitude).
    pub kessel_margin: DVector<T>,
    /// `max_h |w_h / v_h|` at the snapshot, used by the conservatism chain.
    pub w_over_v_inf: T,
}

/// Per-bus C-index and system minimum.
pub fn c_index<T: Scalar>(
    net: &ReducedNetwork<T>,
    snap: &Snapshot<T>,
) -> (DVector<T>, DVector<T>, T, Option<usize>) {
    let n = net.n_pq();
    let z = net.z_pp();
    let inf = real::<T>(f64::INFINITY);
    let mut denom = DVector::zeros(n);
    let mut c = DVector::from_element(n, inf);
    let mut c_min = inf;
    let mut c_argmin = None;
    for h in 0..n {
        let mut sum = T::zero();
        for k in 0..n {
            sum += (z[(h, k)] * snap.i[k]).modulus();
        }
        denom[h] = sum;
        if sum > T::zero() {
            c[h] = snap.v[h].modulus() / sum;
        }
        if c[h] < c_min {
            c_min = c[h];
            c_argmin = Some(h);
        }
    }
    (c, denom, c_min, c_argmin)
}

/// Necessary-condition predicate: true iff some bus index is at or below
/// one. The offending buses come back sorted ascending by index.
pub fn necessary_condition<T: Scalar>(report: &IndexReport<T>) -> (bool, Vec<(BusId, T)>) {
    let mut offending: Vec<(BusId, T)> = report
        .bus
        .iter()
        .zip(report.c.iter())
        .filter(|(_, c)| **c <= T::one())
        .map(|(id, c)| (*id, *c))
        .collect();
    offending.sort_by(|a, b| a.1.partial_cmp(&b.1).expect("indices are not NaN"));
    (!offending.is_empty(), offending)
}

/// Evaluate the fixed-point solvability bound for a given power set-point
/// vector (magnitudes only, so either polarity works).
pub fn bolognani_bound<T: Scalar>(
    net: &ReducedNetwork<T>,
    s_pq: &DVector<Complex<T>>,
) -> Result<BolognaniBound<T>> {
    let n = net.n_pq();
    let z = net.z_pp();
    let w = net.w.rows(0, n).into_owned();
    for h in 0..n {
        if w[h].modulus() == T::zero() {
            return Err(Error::DegenerateSource(net.bus_ids()[h]));
        }
    }
    // max row Euclidean norm of w^{-1} z conj(w)^{-1}
    let mut row_max = T::zero();
    for h in 0..n {
        let mut sq = T::zero();
        for k in 0..n {
            let entry = z[(h, k)] / (w[h] * w[k].conj());
            sq += entry.modulus_squared();
        }
        row_max = row_max.max(sq.sqrt());
    }
    let s_norm = s_pq
        .iter()
        .fold(T::zero(), |acc, s| acc + s.modulus_squared());
    let v_s = net.slack_voltage.modulus();
    let lhs = v_s * v_s;
    let rhs = real::<T>(4.0) * row_max * s_norm.sqrt();
    Ok(BolognaniBound {
        lhs,
        rhs,
        satisfied: lhs > rhs,
    })
}

/// Proportional-current margins `|v_h| - |sum_k z_hk i_k|`. A zero margin
/// marks instability only when all bus currents move proportionally; kept
/// as a diagnostic next to the C-index.
pub fn kessel_condition<T: Scalar>(net: &ReducedNetwork<T>, snap: &Snapshot<T>) -> DVector<T> {
    let n = net.n_pq();
    let z = net.z_pp();
    DVector::from_fn(n, |h, _| {
        let mut sum = Complex::new(T::zero(), T::zero());
        for k in 0..n {
            sum += z[(h, k)] * snap.i[k];
        }
        snap.v[h].modulus() - sum.modulus()
    })
}

impl<T: Scalar> IndexReport<T> {
    /// Compute every index at a snapshot.
    pub fn build(net: &ReducedNetwork<T>, snap: &Snapshot<T>) -> Result<Self> {
        if snap.v.len() != net.n_pq() {
            return Err(Error::DimensionMismatch(format!(
                "snapshot covers {} buses, network has {} constant-power buses",
                snap.v.len(),
                net.n_pq()
            )));
        }
        let (c, denom, c_min, c_argmin) = c_index(net, snap);
        let bolognani = bolognani_bound(net, &snap.s)?;
        let kessel_margin = kessel_condition(net, snap);
        let n = net.n_pq();
        let mut w_over_v_inf = T::zero();
        for h in 0..n {
            let vm = snap.v[h].modulus();
            if vm > T::zero() {
                w_over_v_inf = w_over_v_inf.max(net.w[h].modulus() / vm);
            } else {
                w_over_v_inf = real(f64::INFINITY);
            }
        }
        Ok(IndexReport {
            bus: net.pq_bus_ids().to_vec(),
            v_mag: DVector::from_fn(n, |h, _| snap.v[h].modulus()),
            denom,
            c_min,
            c_argmin,
            condition_triggered: c_min <= T::one(),
            c,
            bolognani,
            kessel_margin,
            w_over_v_inf,
        })
    }

    /// Bus id attaining the minimum index, when any index is finite.
    pub fn c_argmin_bus(&self) -> Option<BusId> {
        self.c_argmin.map(|h| self.bus[h])
    }

    /// Premise of the conservatism chain: the fixed-point bound holds and
    /// `1 / ||w/v||_inf > |v_s| / 2`. When true, the minimum index must
    /// exceed one.
    pub fn conservatism_premise(&self, slack_voltage_mag: T) -> bool {
        self.bolognani.satisfied
            && self.w_over_v_inf > T::zero()
            && T::one() / self.w_over_v_inf > slack_voltage_mag / real::<T>(2.0)
    }
}
