//! Jacobians of the current-parameterized power flow.
//!
//! With bus powers written as `s_h = conj(i_h) (e'_h - sum_k z_hk i_k)`, the
//! conjugate-coordinate (Wirtinger) derivatives have closed forms:
//!
//! * `dS/dI` is dense with entries `-z_hk conj(i_h)`,
//! * `dS/dI*` is diagonal and its diagonal is exactly the bus voltage vector,
//!
//! and the remaining two blocks of the 2n x 2n complex Jacobian are their
//! element-wise conjugates. The real Jacobian in the `(i_d, i_q)` unknowns is
//! similar to the complex one, so their determinants agree; swapping the
//! block columns and regrouping yields a dominance form whose diagonal holds
//! the bus voltages and whose off-diagonal row sums are voltage drops, which
//! is what connects diagonal dominance to nonsingularity.

use nalgebra::{ComplexField, DMatrix, DVector};
use num_complex::Complex;
use num_traits::Zero;

use crate::error::{Error, Result};
use crate::netmodel::ReducedNetwork;
use crate::pfsolve::Snapshot;
use crate::scalar::{real, to_f64, Scalar};

/// Dense `dS/dI` block: entry (h, k) is `-z_hk conj(i_h)`.
pub fn power_current_block<T: Scalar>(
    z_pp: &DMatrix<Complex<T>>,
    i: &DVector<Complex<T>>,
) -> DMatrix<Complex<T>> {
    let n = i.len();
    DMatrix::from_fn(n, n, |h, k| -z_pp[(h, k)] * i[h].conj())
}

/// Off-diagonal coupling of the dominance form: entry (h, k) is `-z_hk i_k`,
/// so row sums are the voltage drops from the equivalent source to the bus.
pub fn voltage_drop_block<T: Scalar>(
    z_pp: &DMatrix<Complex<T>>,
    i: &DVector<Complex<T>>,
) -> DMatrix<Complex<T>> {
    let n = i.len();
    DMatrix::from_fn(n, n, |h, k| -z_pp[(h, k)] * i[k])
}

fn check_snapshot_dims<T: Scalar>(net: &ReducedNetwork<T>, snap: &Snapshot<T>) -> Result<()> {
    if snap.v.len() != net.n_pq() || snap.i.len() != net.n_pq() {
        return Err(Error::DimensionMismatch(format!(
            "snapshot covers {} buses, network has {} constant-power buses",
            snap.v.len(),
            net.n_pq()
        )));
    }
    if snap.i_ci.len() != net.n_ci() {
        return Err(Error::DimensionMismatch(format!(
            "snapshot has {} fixed currents, network has {} constant-current buses",
            snap.i_ci.len(),
            net.n_ci()
        )));
    }
    Ok(())
}

/// Assemble the full 2n x 2n complex Jacobian
/// `[[dS/dI, dS/dI*], [dS*/dI, dS*/dI*]]` at a snapshot.
pub fn complex_jacobian<T: Scalar>(
    net: &ReducedNetwork<T>,
    snap: &Snapshot<T>,
) -> Result<DMatrix<Complex<T>>> {
    check_snapshot_dims(net, snap)?;
    let n = net.n_pq();
    let a = power_current_block(net.z_pp(), &snap.i);
    let mut jz = DMatrix::zeros(2 * n, 2 * n);
    for h in 0..n {
        for k in 0..n {
            jz[(h, k)] = a[(h, k)];
            jz[(n + h, n + k)] = a[(h, k)].conj();
        }
        // dS/dI* is diagonal and equals the bus voltage
        jz[(h, n + h)] = snap.v[h];
        jz[(n + h, h)] = snap.v[h].conj();
    }
    Ok(jz)
}

/// Dominance form: block-column swap of the complex Jacobian with the dense
/// couplings rewritten as voltage drops, `[[diag(v), B], [conj(B), diag(v*)]]`.
pub fn dominance_form<T: Scalar>(
    net: &ReducedNetwork<T>,
    snap: &Snapshot<T>,
) -> Result<DMatrix<Complex<T>>> {
    check_snapshot_dims(net, snap)?;
    let n = net.n_pq();
    let b = voltage_drop_block(net.z_pp(), &snap.i);
    let mut jzp = DMatrix::zeros(2 * n, 2 * n);
    for h in 0..n {
        for k in 0..n {
            jzp[(h, n + k)] = b[(h, k)];
            jzp[(n + h, k)] = b[(h, k)].conj();
        }
        jzp[(h, h)] = snap.v[h];
        jzp[(n + h, n + h)] = snap.v[h].conj();
    }
    Ok(jzp)
}

/// Real Jacobian in the `(i_d, i_q)` unknowns, via the explicit similarity
/// transform of the complex Jacobian. The result must be real up to rounding;
/// a large imaginary residue means the conjugate blocks were built
/// inconsistently and is reported as an error.
pub fn real_jacobian<T: Scalar>(jz: &DMatrix<Complex<T>>) -> Result<DMatrix<T>> {
    let m = jz.nrows();
    if jz.ncols() != m || !m.is_multiple_of(2) {
        return Err(Error::DimensionMismatch(format!(
            "complex Jacobian must be square with even dimension, got {}x{}",
            m,
            jz.ncols()
        )));
    }
    let n = m / 2;
    let half = Complex::new(real::<T>(0.5), T::zero());
    let jhalf = Complex::new(T::zero(), real::<T>(0.5));
    let one = Complex::new(T::one(), T::zero());
    let j = Complex::new(T::zero(), T::one());

    let mut t = DMatrix::<Complex<T>>::zeros(m, m);
    let mut tinv = DMatrix::<Complex<T>>::zeros(m, m);
    for k in 0..n {
        t[(k, k)] = half;
        t[(k, n + k)] = half;
        t[(n + k, k)] = -jhalf;
        t[(n + k, n + k)] = jhalf;

        tinv[(k, k)] = one;
        tinv[(k, n + k)] = j;
        tinv[(n + k, k)] = one;
        tinv[(n + k, n + k)] = -j;
    }
    let jr_c = &t * jz * &tinv;

    let scale = jz.map(|c| c.modulus()).max().max(T::one());
    let tol = real::<T>(1e-8).max(T::default_epsilon() * real::<T>(100.0) * scale);
    let residue = jr_c.map(|c| c.im.abs()).max();
    if residue > tol {
        return Err(Error::NonrealJacobian(to_f64(residue)));
    }
    Ok(jr_c.map(|c| c.re))
}

/// Closed form of the similarity transform, assembled directly from the
/// `dS/dI` block and the voltage vector. Used in the solver loop where the
/// explicit transform would waste two dense multiplies; agrees with
/// [`real_jacobian`] to rounding.
pub fn real_jacobian_from_blocks<T: Scalar>(
    a: &DMatrix<Complex<T>>,
    v: &DVector<Complex<T>>,
) -> DMatrix<T> {
    let n = v.len();
    let mut jr = DMatrix::zeros(2 * n, 2 * n);
    for h in 0..n {
        for k in 0..n {
            let apd = a[(h, k)] + if h == k { v[h] } else { Complex::zero() };
            let amd = a[(h, k)] - if h == k { v[h] } else { Complex::zero() };
            jr[(h, k)] = apd.re;
            jr[(h, n + k)] = -amd.im;
            jr[(n + h, k)] = apd.im;
            jr[(n + h, n + k)] = amd.re;
        }
    }
    jr
}

/// Compact n x n diagnostic of the dominance form. Off-diagonal entries are
/// the voltage-drop magnitudes `|z_hk i_k|`; the diagonal stores
/// `| |v_h| - |z_hh i_h| |` with the signed difference kept separately, since
/// dominance tests need the sign.
#[derive(Debug, Clone)]
pub struct FMatrix<T: Scalar> {
    /// Element-wise magnitudes; diagonal is the absolute difference.
    pub values: DMatrix<T>,
    /// Signed diagonal `|v_h| - |z_hh i_h|`.
    pub diag_signed: DVector<T>,
}

impl<T: Scalar> FMatrix<T> {
    pub fn n(&self) -> usize {
        self.diag_signed.len()
    }

    pub fn offdiag_row_sum(&self, h: usize) -> T {
        let mut sum = T::zero();
        for k in 0..self.n() {
            if k != h {
                sum += self.values[(h, k)];
            }
        }
        sum
    }

    /// Strict row dominance with the signed diagonal.
    pub fn row_dominant(&self, h: usize) -> bool {
        self.diag_signed[h] > self.offdiag_row_sum(h)
    }

    pub fn all_rows_dominant(&self) -> bool {
        (0..self.n()).all(|h| self.row_dominant(h))
    }
}

/// Build the F diagnostic at a snapshot.
pub fn f_matrix<T: Scalar>(net: &ReducedNetwork<T>, snap: &Snapshot<T>) -> Result<FMatrix<T>> {
    check_snapshot_dims(net, snap)?;
    let n = net.n_pq();
    let z = net.z_pp();
    let mut values = DMatrix::zeros(n, n);
    let mut diag_signed = DVector::zeros(n);
    for h in 0..n {
        for k in 0..n {
            let drop = (z[(h, k)] * snap.i[k]).modulus();
            if h == k {
                let signed = snap.v[h].modulus() - drop;
                diag_signed[h] = signed;
                values[(h, h)] = signed.abs();
            } else {
                values[(h, k)] = drop;
            }
        }
    }
    Ok(FMatrix {
        values,
        diag_signed,
    })
}

/// Central-difference check of the conjugate-coordinate derivative blocks.
/// Perturbs the real and imaginary part of every current by `h` and returns
/// the largest deviation from the analytic blocks.
pub fn wirtinger_fd_check<T: Scalar>(
    net: &ReducedNetwork<T>,
    snap: &Snapshot<T>,
    h: T,
) -> Result<T> {
    check_snapshot_dims(net, snap)?;
    let n = net.n_pq();
    let z = net.z_pp();
    let e_eff = net.effective_source(&snap.i_ci);
    let s_of = |i: &DVector<Complex<T>>| -> DVector<Complex<T>> {
        let v = &e_eff - z * i;
        DVector::from_fn(n, |k, _| i[k].conj() * v[k])
    };

    let a = power_current_block(z, &snap.i);
    let two_h = h + h;
    let half = real::<T>(0.5);
    let mut worst = T::zero();
    for k in 0..n {
        let mut ip = snap.i.clone();
        let mut im = snap.i.clone();
        ip[k] += Complex::new(h, T::zero());
        im[k] -= Complex::new(h, T::zero());
        let ds_dx = (s_of(&ip) - s_of(&im)) / Complex::new(two_h, T::zero());

        let mut ip = snap.i.clone();
        let mut im = snap.i.clone();
        ip[k] += Complex::new(T::zero(), h);
        im[k] -= Complex::new(T::zero(), h);
        let ds_dy = (s_of(&ip) - s_of(&im)) / Complex::new(two_h, T::zero());

        for row in 0..n {
            let jj = Complex::new(T::zero(), T::one());
            let fd_di = (ds_dx[row] - jj * ds_dy[row]) * half;
            let fd_dconj = (ds_dx[row] + jj * ds_dy[row]) * half;
            let ref_di = a[(row, k)];
            let ref_dconj = if row == k {
                snap.v[row]
            } else {
                Complex::zero()
            };
            worst = worst.max((fd_di - ref_di).modulus());
            worst = worst.max((fd_dconj - ref_dconj).modulus());
        }
    }
    Ok(worst)
}

/// Determinant and singular-value diagnostics of the real Jacobian.
#[derive(Debug, Clone)]
pub struct SingularityMetrics<T: Scalar> {
    pub det: T,
    /// log |det| accumulated from the LU factors; stays finite when the
    /// direct determinant over/underflows on large systems.
    pub log_abs_det: T,
    pub sign: i8,
    pub sigma_min: T,
    pub sigma_max: T,
    pub cond_estimate: T,
}

pub fn singularity_metrics<T: Scalar>(jr: &DMatrix<T>) -> SingularityMetrics<T> {
    let svd = jr.clone().svd(false, false);
    let sigma_min = svd.singular_values.min();
    let sigma_max = svd.singular_values.max();
    let cond_estimate = if sigma_min > T::zero() {
        sigma_max / sigma_min
    } else {
        real(f64::INFINITY)
    };

    let lu = jr.clone().lu();
    let det = lu.determinant();
    let mut log_abs_det = T::zero();
    let mut sign = 1i8;
    let u = lu.u();
    for k in 0..u.nrows() {
        let d = u[(k, k)];
        if d == T::zero() {
            sign = 0;
            log_abs_det = real(f64::NEG_INFINITY);
            break;
        }
        if d < T::zero() {
            sign = -sign;
        }
        log_abs_det += d.abs().ln();
    }
    if sign != 0 {
        let perm_det: T = lu.p().determinant();
        if perm_det < T::zero() {
            sign = -sign;
        }
    }
    SingularityMetrics {
        det,
        log_abs_det,
        sign,
        sigma_min,
        sigma_max,
        cond_estimate,
    }
}

/// Everything the sweep and reports need about the Jacobians at one point.
#[derive(Debug, Clone)]
pub struct JacobianBundle<T: Scalar> {
    pub jz: DMatrix<Complex<T>>,
    pub jr: DMatrix<T>,
    pub jzp: DMatrix<Complex<T>>,
    pub f: FMatrix<T>,
    pub det_jr: T,
    pub det_jz: Complex<T>,
    pub det_jzp: Complex<T>,
    pub sigma_min: T,
    pub n: usize,
}

impl<T: Scalar> JacobianBundle<T> {
    pub fn build(net: &ReducedNetwork<T>, snap: &Snapshot<T>) -> Result<Self> {
        let jz = complex_jacobian(net, snap)?;
        let jr = real_jacobian(&jz)?;
        let jzp = dominance_form(net, snap)?;
        let f = f_matrix(net, snap)?;
        let det_jz = jz.clone().lu().determinant();
        let det_jzp = jzp.clone().lu().determinant();
        let metrics = singularity_metrics(&jr);
        Ok(JacobianBundle {
            n: net.n_pq(),
            jz,
            jr,
            jzp,
            f,
            det_jr: metrics.det,
            det_jz,
            det_jzp,
            sigma_min: metrics.sigma_min,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netmodel::{reduce, NetworkCase};
    use crate::pfsolve::{solve, Injections, SolveOptions};
    use approx::assert_relative_eq;
    use num_traits::Zero;

    const SQRT_0_6: f64 = 0.7745966692414834;

    fn two_bus(kind_z: (f64, f64), s_file: (f64, f64)) -> NetworkCase<f64> {
        let text = format!(
            r#"
            [meta]
            base_mva = 1.0

            [[buses]]
            id = 0
            kind = "slack"

            [[buses]]
            id = 1
            kind = "pq_load"
            s_base = [{}, {}]

            [[branches]]
            from = 0
            to = 1
            z = [{}, {}]
            "#,
            s_file.0, s_file.1, kind_z.0, kind_z.1
        );
        NetworkCase::from_toml_str(&text, "inline").unwrap()
    }

    fn solved_two_bus(s_load: f64) -> (crate::netmodel::ReducedNetwork<f64>, Snapshot<f64>) {
        let case = two_bus((0.1, 0.0), (-s_load, 0.0));
        let net = reduce(&case).unwrap();
        let snap = solve(&net, &Injections::base(&net), &SolveOptions::default())
            .into_snapshot()
            .expect("two-bus converges below the nose");
        (net, snap)
    }

    #[test]
    fn blocks_match_closed_form_two_bus() {
        let (net, snap) = solved_two_bus(1.0);
        let v = (1.0 + SQRT_0_6) / 2.0;
        let i = 1.0 / v;
        assert_relative_eq!(snap.v[0].re, v, epsilon = 1e-9);
        let jz = complex_jacobian(&net, &snap).unwrap();
        assert_relative_eq!(jz[(0, 0)].re, -0.1 * i, epsilon = 1e-9);
        assert_relative_eq!(jz[(0, 1)].re, v, epsilon = 1e-9);
        assert_relative_eq!(jz[(1, 0)].re, v, epsilon = 1e-9);
        assert_relative_eq!(jz[(1, 1)].re, -0.1 * i, epsilon = 1e-9);
    }

    #[test]
    fn zero_injection_blocks() {
        let (net, snap) = solved_two_bus(0.0);
        let jz = complex_jacobian(&net, &snap).unwrap();
        assert_eq!(jz[(0, 0)], Complex::zero());
        assert_relative_eq!(jz[(0, 1)].re, 1.0, epsilon = 1e-12);
        let jr = real_jacobian(&jz).unwrap();
        let det = singularity_metrics(&jr).det;
        assert_relative_eq!(det, -1.0, epsilon = 1e-12);
        let jzp = dominance_form(&net, &snap).unwrap();
        assert_eq!(jzp[(0, 1)], Complex::zero());
        let f = f_matrix(&net, &snap).unwrap();
        assert_relative_eq!(f.values[(0, 0)], 1.0, epsilon = 1e-12);
        assert!(f.all_rows_dominant());
    }

    #[test]
    fn one_bus_determinant_identity() {
        let (net, snap) = solved_two_bus(1.0);
        let bundle = JacobianBundle::build(&net, &snap).unwrap();
        let zi = (net.z_pp()[(0, 0)] * snap.i[0]).modulus();
        let vm = snap.v[0].modulus();
        let expected = zi * zi - vm * vm;
        assert_relative_eq!(bundle.det_jz.re, expected, epsilon = 1e-10);
        assert!(bundle.det_jz.im.abs() < 1e-12);
        assert_relative_eq!(bundle.det_jr, -SQRT_0_6, epsilon = 1e-8);
        // n = 1 is odd: dominance form flips the sign
        assert_relative_eq!(bundle.det_jzp.re, -expected, epsilon = 1e-10);
    }

    #[test]
    fn fast_real_jacobian_matches_similarity() {
        let (net, snap) = solved_two_bus(1.3);
        let jz = complex_jacobian(&net, &snap).unwrap();
        let slow = real_jacobian(&jz).unwrap();
        let a = power_current_block(net.z_pp(), &snap.i);
        let fast = real_jacobian_from_blocks(&a, &snap.v);
        assert!((slow - fast).abs().max() < 1e-13);
    }

    #[test]
    fn nonreal_input_is_rejected() {
        let (net, snap) = solved_two_bus(1.0);
        let mut jz = complex_jacobian(&net, &snap).unwrap();
        // corrupt a conjugate block
        jz[(1, 0)] += Complex::new(0.0, 1e-3);
        match real_jacobian(&jz) {
            Err(Error::NonrealJacobian(_)) => {}
            other => panic!("expected NonrealJacobian, got {other:?}"),
        }
    }

    #[test]
    fn f_matrix_at_the_nose() {
        let (net, snap) = solved_two_bus(2.5);
        let f = f_matrix(&net, &snap).unwrap();
        assert!(f.diag_signed[0].abs() < 1e-4, "{}", f.diag_signed[0]);
        assert!(!f.all_rows_dominant() || f.diag_signed[0] < 1e-4);
        let metrics = singularity_metrics(&JacobianBundle::build(&net, &snap).unwrap().jr);
        assert!(metrics.sigma_min < 1e-3, "sigma_min {}", metrics.sigma_min);
    }

    #[test]
    fn finite_differences_agree() {
        let (net, snap) = solved_two_bus(1.0);
        let dev = wirtinger_fd_check(&net, &snap, 1e-5).unwrap();
        assert!(dev < 1e-6, "deviation {dev}");
        let (net, snap) = solved_two_bus(0.0);
        let dev = wirtinger_fd_check(&net, &snap, 1e-3).unwrap();
        assert!(dev < 1e-8, "blocks are exact for zero injection, got {dev}");
    }

    #[test]
    fn sigma_min_decreases_towards_nose() {
        let mut last = f64::INFINITY;
        for s in [0.5, 1.0, 1.5, 2.0, 2.4] {
            let (net, snap) = solved_two_bus(s);
            let bundle = JacobianBundle::build(&net, &snap).unwrap();
            assert!(
                bundle.sigma_min < last,
                "sigma_min not strictly decreasing at s={s}"
            );
            last = bundle.sigma_min;
        }
    }
}
