//! Newton solution of the power-flow equations `v = e' - z i`,
//! `s_h = conj(i_h) v_h`, with the bus current injections as unknowns.
//!
//! Fixed constant-current injections never enter the iteration: they shift
//! the equivalent source seen by the constant-power buses once, up front.

use nalgebra::{ComplexField, DVector};
use num_complex::Complex;
use num_traits::Zero;

use crate::netmodel::{BusKind, ReducedNetwork};
use crate::scalar::{real, to_f64, Scalar};
use crate::wjac;

/// Injection set for one operating point. Internal polarity: delivered
/// current/power positive, so plain loads carry positive `s_pq` entries.
#[derive(Debug, Clone)]
pub struct Injections<T: Scalar> {
    pub lambda: T,
    pub s_pq: DVector<Complex<T>>,
    pub i_ci: DVector<Complex<T>>,
}

impl<T: Scalar> Injections<T> {
    /// Base-case injections (loading factor 1).
    pub fn base(net: &ReducedNetwork<T>) -> Self {
        Self::scaled(net, T::one())
    }

    /// Proportionally scale the load set-points by `lambda`; DG set-points
    /// and fixed currents stay at their base values.
    pub fn scaled(net: &ReducedNetwork<T>, lambda: T) -> Self {
        let s_pq = DVector::from_fn(net.n_pq(), |h, _| {
            let s = net.s_base_pq()[h];
            if net.kind(h) == BusKind::PqLoad {
                s * Complex::new(lambda, T::zero())
            } else {
                s
            }
        });
        Injections {
            lambda,
            s_pq,
            i_ci: net.i_ci_base().clone(),
        }
    }
}

/// Iteration start.
#[derive(Debug, Clone, Default)]
pub enum Initialization<T: Scalar> {
    /// `i = conj(s / e')`, exact at zero loading.
    #[default]
    Flat,
    /// Reuse the currents of a previous snapshot.
    Warm(Snapshot<T>),
}

#[derive(Debug, Clone)]
pub struct SolveOptions<T: Scalar> {
    /// Residual tolerance, pu.
    pub tol: T,
    pub max_iter: usize,
    pub init: Initialization<T>,
}

impl<T: Scalar> Default for SolveOptions<T> {
    fn default() -> Self {
        SolveOptions {
            tol: real(1e-8),
            max_iter: 50,
            init: Initialization::Flat,
        }
    }
}

/// One solved operating point over the constant-power buses.
#[derive(Debug, Clone)]
pub struct Snapshot<T: Scalar> {
    /// Bus voltages, pu.
    pub v: DVector<Complex<T>>,
    /// Bus currents, delivered-positive, pu.
    pub i: DVector<Complex<T>>,
    /// Specified bus powers the point satisfies, pu.
    pub s: DVector<Complex<T>>,
    /// Fixed currents at the constant-current buses, part of the operating point.
    pub i_ci: DVector<Complex<T>>,
    /// Voltages at the constant-current buses.
    pub v_ci: DVector<Complex<T>>,
    pub loading_factor: T,
    pub converged: bool,
    pub iterations: usize,
    pub max_residual: T,
}

impl<T: Scalar> Snapshot<T> {
    /// Build an exact snapshot directly from a current vector: voltages
    /// follow the network law and the implied set-points are
    /// `s = conj(i) .* v`, so the result satisfies the power-flow equations
    /// by construction. This is how random operating points are made for
    /// the determinant and dominance checks.
    pub fn from_currents(
        net: &ReducedNetwork<T>,
        i: DVector<Complex<T>>,
        i_ci: DVector<Complex<T>>,
        loading_factor: T,
    ) -> Self {
        let e_eff = net.effective_source(&i_ci);
        let v = &e_eff - net.z_pp() * &i;
        let s = DVector::from_fn(i.len(), |h, _| i[h].conj() * v[h]);
        let v_ci = ci_voltages(net, &i, &i_ci);
        Snapshot {
            v,
            i,
            s,
            i_ci,
            v_ci,
            loading_factor,
            converged: true,
            iterations: 0,
            max_residual: T::zero(),
        }
    }
}

/// Why the iteration gave up.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DivergenceReason {
    /// Iteration budget exhausted, or the damped step could not reduce the
    /// residual after ten halvings.
    MaxIter,
    /// Jacobian factorization failed or its condition estimate passed 1e12.
    SingularJacobian,
    /// Some bus voltage fell to (numerical) zero.
    VoltageCollapseToZero,
}

/// Failed solve: a verdict about possible insolvability, not a crash.
#[derive(Debug, Clone)]
pub struct Divergence<T: Scalar> {
    pub reason: DivergenceReason,
    pub iterations: usize,
    pub best_residual: T,
}

#[derive(Debug, Clone)]
pub enum SolveOutcome<T: Scalar> {
    Converged(Snapshot<T>),
    Diverged(Divergence<T>),
}

impl<T: Scalar> SolveOutcome<T> {
    pub fn into_snapshot(self) -> Option<Snapshot<T>> {
        match self {
            SolveOutcome::Converged(s) => Some(s),
            SolveOutcome::Diverged(_) => None,
        }
    }
    pub fn is_converged(&self) -> bool {
        matches!(self, SolveOutcome::Converged(_))
    }
}

/// Voltages at the constant-current buses implied by a current assignment.
pub fn ci_voltages<T: Scalar>(
    net: &ReducedNetwork<T>,
    i_pq: &DVector<Complex<T>>,
    i_ci: &DVector<Complex<T>>,
) -> DVector<Complex<T>> {
    let n_pq = net.n_pq();
    let n_ci = net.n_ci();
    if n_ci == 0 {
        return DVector::zeros(0);
    }
    let e_ci = net.e.rows(n_pq, n_ci).into_owned();
    let z_cp = net.z.view((n_pq, 0), (n_ci, n_pq));
    let z_cc = net.z.view((n_pq, n_pq), (n_ci, n_ci));
    e_ci - z_cp * i_pq - z_cc * i_ci
}

const MAX_HALVINGS: usize = 10;
const COND_LIMIT: f64 = 1e12;

/// Damped Newton iteration on the current unknowns. Returns a snapshot on
/// convergence to the requested residual, or a divergence verdict.
pub fn solve<T: Scalar>(
    net: &ReducedNetwork<T>,
    inj: &Injections<T>,
    opts: &SolveOptions<T>,
) -> SolveOutcome<T> {
    let n = net.n_pq();
    assert_eq!(inj.s_pq.len(), n, "injection vector length");
    assert_eq!(inj.i_ci.len(), net.n_ci(), "fixed current vector length");
    assert!(opts.tol > T::zero(), "tolerance must be positive");
    assert!(opts.max_iter >= 1, "at least one iteration");

    let e_eff = net.effective_source(&inj.i_ci);
    let z = net.z_pp();
    let s_spec = &inj.s_pq;

    let mut i = match &opts.init {
        Initialization::Flat => DVector::from_fn(n, |h, _| {
            if s_spec[h].is_zero() {
                Complex::zero()
            } else {
                (s_spec[h] / e_eff[h]).conj()
            }
        }),
        Initialization::Warm(prev) => {
            assert_eq!(prev.i.len(), n, "warm start from a different network");
            prev.i.clone()
        }
    };

    let residual_at = |i: &DVector<Complex<T>>| -> (DVector<Complex<T>>, T) {
        let v = &e_eff - z * i;
        let mis = DVector::from_fn(n, |h, _| i[h].conj() * v[h] - s_spec[h]);
        let norm = mis.iter().fold(T::zero(), |m, c| m.max(c.modulus()));
        (v, norm)
    };

    let (mut v, mut res) = residual_at(&i);
    let mut best = res;
    let finish = |i: DVector<Complex<T>>, v: DVector<Complex<T>>, iters: usize, res: T| {
        log::debug!(
            "converged in {iters} iterations, residual {:.3e}",
            crate::scalar::to_f64(res)
        );
        let v_ci = ci_voltages(net, &i, &inj.i_ci);
        SolveOutcome::Converged(Snapshot {
            v,
            i,
            s: s_spec.clone(),
            i_ci: inj.i_ci.clone(),
            v_ci,
            loading_factor: inj.lambda,
            converged: true,
            iterations: iters,
            max_residual: res,
        })
    };
    let collapse_floor = real::<T>(1e-9);
    let diverge = |reason: DivergenceReason, iters: usize, best: T| {
        log::debug!(
            "diverged after {iters} iterations ({reason:?}), best residual {:.3e}",
            crate::scalar::to_f64(best)
        );
        SolveOutcome::Diverged(Divergence {
            reason,
            iterations: iters,
            best_residual: best,
        })
    };

    for iter in 0..opts.max_iter {
        if to_f64(res).is_nan() || v.iter().any(|c| to_f64(c.modulus()).is_nan()) {
            return diverge(DivergenceReason::VoltageCollapseToZero, iter, best);
        }
        if res < opts.tol {
            return finish(i, v, iter, res);
        }
        if v.iter().any(|c| c.modulus() < collapse_floor) {
            return diverge(DivergenceReason::VoltageCollapseToZero, iter, best);
        }

        let a = wjac::power_current_block(z, &i);
        let jr = wjac::real_jacobian_from_blocks(&a, &v);
        let lu = jr.lu();
        let u = lu.u();
        let mut dmin = real::<T>(f64::INFINITY);
        let mut dmax = T::zero();
        for k in 0..u.nrows() {
            let d = u[(k, k)].abs();
            dmin = dmin.min(d);
            dmax = dmax.max(d);
        }
        if dmin == T::zero() || dmax / dmin > real(COND_LIMIT) {
            return diverge(DivergenceReason::SingularJacobian, iter, best);
        }

        let mut rhs = DVector::<T>::zeros(2 * n);
        for h in 0..n {
            let mis = i[h].conj() * v[h] - s_spec[h];
            rhs[h] = -mis.re;
            rhs[n + h] = -mis.im;
        }
        let dx = match lu.solve(&rhs) {
            Some(dx) => dx,
            None => return diverge(DivergenceReason::SingularJacobian, iter, best),
        };
        let step = DVector::from_fn(n, |h, _| Complex::new(dx[h], dx[n + h]));

        // backtrack on the residual norm
        let mut alpha = T::one();
        let mut accepted = false;
        for _ in 0..=MAX_HALVINGS {
            let trial = &i + &step * Complex::new(alpha, T::zero());
            let (tv, tres) = residual_at(&trial);
            if !to_f64(tres).is_nan() && tres < res {
                i = trial;
                v = tv;
                res = tres;
                best = best.min(res);
                accepted = true;
                break;
            }
            alpha *= real::<T>(0.5);
        }
        if !accepted {
            let reason = if v.iter().any(|c| c.modulus() < real(1e-6)) {
                DivergenceReason::VoltageCollapseToZero
            } else {
                DivergenceReason::MaxIter
            };
            return diverge(reason, iter + 1, best);
        }
    }
    if res < opts.tol {
        finish(i, v, opts.max_iter, res)
    } else {
        diverge(DivergenceReason::MaxIter, opts.max_iter, best)
    }
}

/// Worst mismatch of a snapshot against the network: the power-flow
/// equations evaluated with voltages recomputed from the currents, plus the
/// linear-law consistency of the stored voltages themselves. Zero at an
/// exact solution.
pub fn residual<T: Scalar>(net: &ReducedNetwork<T>, snap: &Snapshot<T>) -> T {
    let e_eff = net.effective_source(&snap.i_ci);
    let v_of_i = &e_eff - net.z_pp() * &snap.i;
    let mut worst = T::zero();
    for h in 0..net.n_pq() {
        let power_mis = (snap.s[h] - snap.i[h].conj() * v_of_i[h]).modulus();
        let law_mis = (snap.v[h] - v_of_i[h]).modulus();
        worst = worst.max(power_mis).max(law_mis);
    }
    worst
}
