//! Proportional load sweep: scale every load set-point in fixed steps until
//! the power flow stops converging, recording the per-step indices, the
//! first index crossing of one, the first violation of the fixed-point bound
//! and the critical loading factor. Also hosts the parameter-sensitivity
//! experiments (homogeneous impedance scaling, load power-factor change).

use nalgebra::{ComplexField, DVector};
use num_complex::Complex;
use num_traits::Zero;

use crate::cindex::{bolognani_bound, IndexReport};
use crate::error::{Error, Result};
use crate::netmodel::{reduce, BusId, BusKind, NetworkCase, ReducedNetwork};
use crate::pfsolve::{solve, Initialization, Injections, Snapshot, SolveOptions};
use crate::scalar::{real, to_f64, Scalar};
use crate::wjac;

/// How DG buses are treated during a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DgMode {
    /// DG buses keep their constant power set-points.
    #[default]
    HoldConstantPower,
    /// Constant-power DG buses are frozen at the current they inject in the
    /// base case and swept as constant-current sources.
    HoldConstantCurrent,
}

#[derive(Debug, Clone)]
pub struct SweepConfig<T: Scalar> {
    /// Load increment per step, as a fraction of the base load.
    pub step: T,
    pub max_lambda: T,
    pub dg_mode: DgMode,
    pub solve: SolveOptions<T>,
    /// Slack on the unity test for the index crossing. A converged solution
    /// at an exact fold carries an index bias of order sqrt(solver tol), so
    /// the crossing is detected as `c_min <= 1 + unity_slack`.
    pub unity_slack: T,
}

impl<T: Scalar> Default for SweepConfig<T> {
    fn default() -> Self {
        SweepConfig {
            step: real(0.01),
            max_lambda: real(20.0),
            dg_mode: DgMode::HoldConstantPower,
            solve: SolveOptions::default(),
            unity_slack: real(1e-3),
        }
    }
}

/// One sweep step.
#[derive(Debug, Clone)]
pub struct SweepRow<T: Scalar> {
    pub lambda: T,
    pub converged: bool,
    /// NaN when the step did not converge.
    pub c_min: T,
    pub c_argmin_bus: Option<BusId>,
    pub bolognani_ok: bool,
    /// NaN when the step did not converge.
    pub sigma_min: T,
}

#[derive(Debug, Clone)]
pub struct SweepSummary<T: Scalar> {
    /// Last loading factor at which the power flow converged.
    pub lambda_critical: T,
    /// First loading factor with the minimum index at or below one.
    pub lambda_c_unity: Option<T>,
    /// First loading factor violating the fixed-point bound.
    pub lambda_bolognani: Option<T>,
    /// `(lambda_critical - lambda_c_unity) / lambda_critical * 100`.
    pub mismatch_pct: Option<T>,
    /// False when the sweep ran out of `max_lambda` without diverging.
    pub hit_divergence: bool,
}

#[derive(Debug, Clone)]
pub struct SweepReport<T: Scalar> {
    pub rows: Vec<SweepRow<T>>,
    pub summary: SweepSummary<T>,
}

/// Freeze every constant-power DG at the current it injects in the solved
/// base case and re-declare it as a constant-current source.
pub fn hold_dg_constant_current<T: Scalar>(case: &NetworkCase<T>) -> Result<NetworkCase<T>> {
    let net = reduce(case)?;
    let snap = solve(&net, &Injections::base(&net), &SolveOptions::default())
        .into_snapshot()
        .ok_or_else(|| Error::InsolvableBase("cannot freeze DG currents".into()))?;
    let mut frozen = case.clone();
    for (h, id) in net.pq_bus_ids().iter().enumerate() {
        if net.kind(h) == BusKind::PqDg {
            let bus = frozen
                .buses
                .iter_mut()
                .find(|b| b.id == *id)
                .expect("reduced ids come from the case");
            bus.kind = BusKind::CiDg;
            // back to file polarity (net injection positive)
            bus.i_base = -snap.i[h];
            bus.s_base = Complex::zero();
        }
    }
    Ok(frozen)
}

/// Scale DG set-points so that total DG capacity over total peak apparent
/// load equals `percent / 100`.
pub fn apply_penetration<T: Scalar>(case: &NetworkCase<T>, percent: T) -> Result<NetworkCase<T>> {
    if to_f64(percent).is_nan() || percent < T::zero() {
        return Err(Error::Invalid("penetration must be non-negative".into()));
    }
    let mut total_load = T::zero();
    let mut total_dg = T::zero();
    for b in &case.buses {
        match b.kind {
            BusKind::PqLoad => total_load += b.s_base.modulus(),
            BusKind::PqDg => total_dg += b.s_base.modulus(),
            BusKind::CiDg => total_dg += b.i_base.modulus(),
            _ => {}
        }
    }
    if total_dg == T::zero() {
        return Err(Error::Invalid(
            "case has no DG capacity to scale to the requested penetration".into(),
        ));
    }
    let factor = percent / real::<T>(100.0) * total_load / total_dg;
    let mut scaled = case.clone();
    for b in &mut scaled.buses {
        match b.kind {
            BusKind::PqDg => b.s_base *= Complex::new(factor, T::zero()),
            BusKind::CiDg => b.i_base *= Complex::new(factor, T::zero()),
            _ => {}
        }
    }
    Ok(scaled)
}

fn sigma_min_at<T: Scalar>(net: &ReducedNetwork<T>, snap: &Snapshot<T>) -> T {
    let a = wjac::power_current_block(net.z_pp(), &snap.i);
    let jr = wjac::real_jacobian_from_blocks(&a, &snap.v);
    jr.svd(false, false).singular_values.min()
}

/// Run the stepped load sweep. Steps are warm-started from the previous
/// solution; a divergence is only accepted after a flat-start retry, so a
/// bad warm path cannot manufacture an early collapse.
pub fn run_sweep<T: Scalar>(
    case: &NetworkCase<T>,
    config: &SweepConfig<T>,
) -> Result<SweepReport<T>> {
    if to_f64(config.step).is_nan() || config.step <= T::zero() {
        return Err(Error::Invalid("sweep step must be positive".into()));
    }
    if to_f64(config.max_lambda).is_nan() || config.max_lambda <= T::one() {
        return Err(Error::Invalid("max lambda must exceed 1".into()));
    }
    let case = match config.dg_mode {
        DgMode::HoldConstantPower => case.clone(),
        DgMode::HoldConstantCurrent => hold_dg_constant_current(case)?,
    };
    let net = reduce(&case)?;

    let mut rows: Vec<SweepRow<T>> = Vec::new();
    let mut prev: Option<Snapshot<T>> = None;
    let mut lambda_critical = T::zero();
    let mut lambda_c_unity = None;
    let mut lambda_bolognani = None;
    let mut hit_divergence = false;
    let nan = real::<T>(f64::NAN);

    let mut k = 0u32;
    loop {
        let lambda = T::one() + real::<T>(k as f64) * config.step;
        if lambda > config.max_lambda {
            break;
        }
        let inj = Injections::scaled(&net, lambda);

        let mut opts = config.solve.clone();
        if let Some(p) = &prev {
            opts.init = Initialization::Warm(p.clone());
        }
        let mut outcome = solve(&net, &inj, &opts);
        if !outcome.is_converged() && prev.is_some() {
            let flat = SolveOptions {
                init: Initialization::Flat,
                ..config.solve.clone()
            };
            outcome = solve(&net, &inj, &flat);
        }

        match outcome.into_snapshot() {
            Some(snap) => {
                let report = IndexReport::build(&net, &snap)?;
                let row = SweepRow {
                    lambda,
                    converged: true,
                    c_min: report.c_min,
                    c_argmin_bus: report.c_argmin_bus(),
                    bolognani_ok: report.bolognani.satisfied,
                    sigma_min: sigma_min_at(&net, &snap),
                };
                if lambda_c_unity.is_none() && report.c_min <= T::one() + config.unity_slack {
                    lambda_c_unity = Some(lambda);
                }
                if lambda_bolognani.is_none() && !report.bolognani.satisfied {
                    lambda_bolognani = Some(lambda);
                }
                rows.push(row);
                lambda_critical = lambda;
                prev = Some(snap);
            }
            None => {
                if prev.is_none() {
                    return Err(Error::InsolvableBase(
                        "power flow does not converge at loading factor 1".into(),
                    ));
                }
                let bol = bolognani_bound(&net, &inj.s_pq)?;
                rows.push(SweepRow {
                    lambda,
                    converged: false,
                    c_min: nan,
                    c_argmin_bus: None,
                    bolognani_ok: bol.satisfied,
                    sigma_min: nan,
                });
                hit_divergence = true;
                break;
            }
        }
        k += 1;
    }

    log::info!(
        "sweep finished: lambda_critical {:.4}, {} steps{}",
        crate::scalar::to_f64(lambda_critical),
        rows.len(),
        if hit_divergence {
            ""
        } else {
            " (max lambda reached without divergence)"
        }
    );
    let mismatch_pct =
        lambda_c_unity.map(|lc| (lambda_critical - lc) / lambda_critical * real::<T>(100.0));
    Ok(SweepReport {
        rows,
        summary: SweepSummary {
            lambda_critical,
            lambda_c_unity,
            lambda_bolognani,
            mismatch_pct,
            hit_divergence,
        },
    })
}

/// Per-bus index change produced by a case transformation.
#[derive(Debug, Clone)]
pub struct SensitivityReport<T: Scalar> {
    pub bus: Vec<BusId>,
    pub kinds: Vec<BusKind>,
    pub c_before: DVector<T>,
    pub c_after: DVector<T>,
    /// Strict decrease held at every bus the experiment predicts:
    /// all constant-power buses for impedance scaling, load buses for a
    /// power-factor change. Trivially false for an identity transform.
    pub all_predicted_lower: bool,
}

fn indices_at_base<T: Scalar>(
    case: &NetworkCase<T>,
) -> Result<(ReducedNetwork<T>, IndexReport<T>)> {
    let net = reduce(case)?;
    let snap = solve(&net, &Injections::base(&net), &SolveOptions::default())
        .into_snapshot()
        .ok_or_else(|| Error::InsolvableBase("base case does not converge".into()))?;
    let report = IndexReport::build(&net, &snap)?;
    Ok((net, report))
}

/// Homogeneous impedance scaling: every branch admittance and shunt is
/// multiplied by `a`, i.e. impedances grow by `1/a`. Re-solves the base case
/// and reports the index change.
pub fn impedance_sensitivity<T: Scalar>(
    case: &NetworkCase<T>,
    a: T,
) -> Result<SensitivityReport<T>> {
    if to_f64(a).is_nan() || a <= T::zero() || a > T::one() {
        return Err(Error::Invalid("impedance scale must lie in (0, 1]".into()));
    }
    let (net, before) = indices_at_base(case)?;
    let mut scaled = case.clone();
    let inv = Complex::new(T::one() / a, T::zero());
    let fwd = Complex::new(a, T::zero());
    for br in &mut scaled.branches {
        br.z *= inv;
    }
    for b in &mut scaled.buses {
        b.shunt *= fwd;
    }
    let (_, after) = indices_at_base(&scaled)
        .map_err(|_| Error::InsolvableBase("case is insolvable after impedance scaling".into()))?;

    let kinds: Vec<BusKind> = (0..net.n_pq()).map(|h| net.kind(h)).collect();
    let all_predicted_lower = (0..net.n_pq()).all(|h| after.c[h] < before.c[h]);
    Ok(SensitivityReport {
        bus: net.pq_bus_ids().to_vec(),
        kinds,
        c_before: before.c,
        c_after: after.c,
        all_predicted_lower,
    })
}

/// Re-angle every load to the target (inductive) power factor, preserving
/// apparent power magnitudes, and report the index change.
pub fn power_factor_sensitivity<T: Scalar>(
    case: &NetworkCase<T>,
    pf: T,
) -> Result<SensitivityReport<T>> {
    if to_f64(pf).is_nan() || pf <= T::zero() || pf > T::one() {
        return Err(Error::Invalid("power factor must lie in (0, 1]".into()));
    }
    let slack = real::<T>(1e-9);
    let mut re_angled = case.clone();
    for b in &mut re_angled.buses {
        if b.kind != BusKind::PqLoad {
            continue;
        }
        let consumption = -b.s_base; // loads consume; file stores net injection
        let m = consumption.modulus();
        if m == T::zero() {
            continue;
        }
        if consumption.re <= T::zero() {
            return Err(Error::Invalid(format!(
                "bus {} is not consuming active power; cannot re-angle",
                b.id
            )));
        }
        let current_pf = consumption.re / m;
        if pf > current_pf + slack {
            return Err(Error::Invalid(format!(
                "bus {}: target power factor {} exceeds the present {}",
                b.id,
                crate::scalar::to_f64(pf),
                crate::scalar::to_f64(current_pf)
            )));
        }
        let sin = (T::one() - pf * pf).sqrt();
        b.s_base = -Complex::new(m * pf, m * sin);
    }

    let (net, before) = indices_at_base(case)?;
    let (_, after) = indices_at_base(&re_angled).map_err(|_| {
        Error::InsolvableBase("case is insolvable after the power-factor change".into())
    })?;
    let kinds: Vec<BusKind> = (0..net.n_pq()).map(|h| net.kind(h)).collect();
    let all_predicted_lower = (0..net.n_pq())
        .filter(|&h| net.kind(h) == BusKind::PqLoad)
        .all(|h| after.c[h] < before.c[h]);
    Ok(SensitivityReport {
        bus: net.pq_bus_ids().to_vec(),
        kinds,
        c_before: before.c,
        c_after: after.c,
        all_predicted_lower,
    })
}

/// First-order voltage estimate `v_j = v_s (1 + |v_s|^{-2} sum_k z_jk conj(s_k))`
/// for a net-injection set-point vector (generation positive). Diagnostic
/// companion of the sensitivity experiments, never used by the solver.
pub fn linearized_voltage<T: Scalar>(
    net: &ReducedNetwork<T>,
    s_injection: &DVector<Complex<T>>,
) -> DVector<Complex<T>> {
    let n = net.n_pq();
    let v_s = net.slack_voltage;
    let inv_vs2 = T::one() / v_s.modulus_squared();
    let z = net.z_pp();
    DVector::from_fn(n, |j, _| {
        let mut acc = Complex::new(T::zero(), T::zero());
        for k in 0..n {
            acc += z[(j, k)] * s_injection[k].conj();
        }
        v_s * (Complex::new(T::one(), T::zero()) + acc * Complex::new(inv_vs2, T::zero()))
    })
}
