//! Shared helpers for the integration suites: fixture paths, closed-form
//! two-bus oracles, and an augmented-system solver that keeps the
//! constant-current buses explicit. The augmented solver is a plain
//! fixed-point iteration on the full multiport relation, deliberately
//! independent of the production Newton path and of the source-folding it
//! checks.

use nalgebra::DVector;
use num_complex::Complex;
use solvcheck::netmodel::ReducedNetwork;
use solvcheck::scalar::Scalar;

pub fn fixture(name: &str) -> String {
    format!("{}/../../fixtures/{name}", env!("CARGO_MANIFEST_DIR"))
}

/// High root of `v^2 - v + z p = 0`: exact load voltage of the resistive
/// two-bus network.
#[allow(dead_code)]
pub fn quadratic_high_root(z: f64, p: f64) -> f64 {
    (1.0 + (1.0 - 4.0 * z * p).sqrt()) / 2.0
}

pub type VoltagePair<T> = (DVector<Complex<T>>, DVector<Complex<T>>);

/// Fixed-point solve of the augmented system: all bus currents explicit,
/// constant-current entries pinned, voltages from the full impedance matrix.
/// Returns `(v_pq, v_ci)` on convergence of the voltage iterates.
#[allow(dead_code)]
pub fn augmented_fixed_point<T: Scalar>(
    net: &ReducedNetwork<T>,
    s_pq: &DVector<Complex<T>>,
    i_ci_fixed: &DVector<Complex<T>>,
    tol: f64,
    max_iter: usize,
) -> Option<VoltagePair<T>> {
    use nalgebra::ComplexField;
    let n_pq = net.n_pq();
    let n_ci = net.n_ci();
    let n = n_pq + n_ci;
    let tol = solvcheck::scalar::real::<T>(tol);

    let mut i_all = DVector::<Complex<T>>::zeros(n);
    for k in 0..n_ci {
        i_all[n_pq + k] = i_ci_fixed[k];
    }
    let mut v_all = &net.e - &net.z * &i_all;
    for _ in 0..max_iter {
        for h in 0..n_pq {
            if v_all[h].modulus() < solvcheck::scalar::real::<T>(1e-9) {
                return None;
            }
            i_all[h] = (s_pq[h] / v_all[h]).conj();
        }
        let v_next = &net.e - &net.z * &i_all;
        let delta = (&v_next - &v_all)
            .iter()
            .fold(T::zero(), |m, c| m.max(c.modulus()));
        v_all = v_next;
        if delta < tol {
            let v_pq = v_all.rows(0, n_pq).into_owned();
            let v_ci = v_all.rows(n_pq, n_ci).into_owned();
            return Some((v_pq, v_ci));
        }
    }
    None
}
