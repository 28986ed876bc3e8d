//! Power-flow solvability and voltage-stability assessment for distribution
//! feeders with distributed generation.
//!
//! The pipeline: load a per-unit case file ([`netmodel`]), reduce it to the
//! multiport form `v = e - z i` ([`netmodel::reduce`]), solve operating
//! points with Newton iteration on the bus currents ([`pfsolve`]), and judge
//! distance to the solvability boundary through the Jacobian determinant
//! identities ([`wjac`]) and the per-bus voltage-drop index ([`cindex`]).
//! [`sweep`] runs the stepped load-growth protocol that locates the critical
//! loading factor.
//!
//! All numerics are generic over the real scalar ([`scalar::Scalar`], either
//! `f32` or `f64`); the aliases below fix the default double-precision
//! types.

pub mod cindex;
pub mod error;
pub mod netmodel;
pub mod pfsolve;
pub mod report;
pub mod scalar;
pub mod sweep;
pub mod synth;
pub mod verify;
pub mod wjac;

pub use error::{Error, Result};
pub use scalar::Scalar;

/// Working complex number at default precision.
pub type Cx = num_complex::Complex<f64>;
pub type Case = netmodel::NetworkCase<f64>;
pub type Reduced = netmodel::ReducedNetwork<f64>;
pub type Snapshot = pfsolve::Snapshot<f64>;
pub type Injections = pfsolve::Injections<f64>;
pub type SolveOptions = pfsolve::SolveOptions<f64>;
pub type SolveOutcome = pfsolve::SolveOutcome<f64>;
pub type JacobianBundle = wjac::JacobianBundle<f64>;
pub type IndexReport = cindex::IndexReport<f64>;
pub type SweepConfig = sweep::SweepConfig<f64>;
pub type SweepReport = sweep::SweepReport<f64>;

#[cfg(test)]
mod smoke {
    use crate::scalar::{real, Scalar};
    use nalgebra::{ComplexField, DMatrix, DVector};
    use num_complex::Complex;

    fn det_of_identity<T: Scalar>(n: usize) -> Complex<T> {
        let m = DMatrix::<Complex<T>>::identity(n, n);
        m.lu().determinant()
    }

    #[test]
    fn complex_linalg_is_generic() {
        let d32 = det_of_identity::<f32>(3);
        let d64 = det_of_identity::<f64>(3);
        assert_eq!(d32, Complex::new(1.0f32, 0.0));
        assert_eq!(d64, Complex::new(1.0f64, 0.0));

        let a = DMatrix::<Complex<f64>>::from_row_slice(
            2,
            2,
            &[
                Complex::new(2.0, 0.0),
                Complex::new(0.0, 1.0),
                Complex::new(0.0, -1.0),
                Complex::new(2.0, 0.0),
            ],
        );
        let inv = a.clone().try_inverse().expect("invertible");
        let prod = &a * &inv;
        assert!((prod - DMatrix::identity(2, 2)).map(|c| c.modulus()).max() < 1e-12);

        fn probe<T: Scalar>() -> T {
            let c = Complex::new(real::<T>(3.0), real::<T>(4.0));
            c.conj().modulus()
        }
        assert_eq!(probe::<f64>(), 5.0);

        let m = DMatrix::<f64>::from_row_slice(2, 2, &[3.0, 0.0, 0.0, 0.5]);
        let sv = m.svd(false, false).singular_values;
        assert!((sv.min() - 0.5).abs() < 1e-14);

        let v = DVector::<Complex<f64>>::zeros(3);
        assert_eq!(v.len(), 3);
    }

    /// The solver pipeline works at single precision too, at looser
    /// tolerances.
    #[test]
    fn pipeline_runs_at_f32() {
        use crate::netmodel::{reduce, NetworkCase};
        use crate::pfsolve::{solve, Injections, SolveOptions};

        let case = NetworkCase::<f32>::from_toml_str(
            r#"
            [meta]
            base_mva = 1.0
            [[buses]]
            id = 0
            kind = "slack"
            [[buses]]
            id = 1
            kind = "pq_load"
            s_base = [-1.0, 0.0]
            [[branches]]
            from = 0
            to = 1
            z = [0.1, 0.0]
            "#,
            "inline",
        )
        .unwrap();
        let net = reduce(&case).unwrap();
        let opts = SolveOptions {
            tol: 1e-5f32,
            ..SolveOptions::default()
        };
        let snap = solve(&net, &Injections::base(&net), &opts)
            .into_snapshot()
            .unwrap();
        assert!((snap.v[0].re - 0.887_298_3f32).abs() < 1e-4);
        let (c, ..) = crate::cindex::c_index(&net, &snap);
        assert!((c[0] - 7.873f32).abs() < 1e-2);
    }
}
