//! Randomized verification suite for the determinant identities and the
//! dominance condition: determinant agreement of the real and complex
//! Jacobian forms, the sign-parity relation of the dominance form, the
//! soundness of the index threshold, and the finite-difference check of the
//! derivative blocks.

use nalgebra::ComplexField;
use num_complex::Complex;
use rand::Rng;

use crate::cindex::c_index;
use crate::error::Result;
use crate::netmodel::reduce;
use crate::scalar::{real, to_f64, Scalar};
use crate::synth::{random_case, random_operating_point, seeded_rng, SynthConfig};
use crate::wjac::{singularity_metrics, wirtinger_fd_check, JacobianBundle};

#[derive(Debug, Clone)]
pub struct SuiteConfig {
    pub trials: usize,
    pub min_buses: usize,
    pub max_buses: usize,
    pub seed: u64,
    /// Central-difference step for the derivative check.
    pub fd_step: f64,
    /// How many of the trials also run the finite-difference check.
    pub fd_trials: usize,
    /// Mix constant-current buses into the trials.
    pub with_ci: bool,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        SuiteConfig {
            trials: 100,
            min_buses: 2,
            max_buses: 8,
            seed: 7,
            fd_step: 1e-5,
            fd_trials: 20,
            with_ci: true,
        }
    }
}

#[derive(Debug, Clone)]
pub struct CheckOutcome {
    pub name: &'static str,
    pub passed: bool,
    /// Worst observed deviation (meaning depends on the check).
    pub worst: f64,
    pub failures: usize,
    pub detail: String,
}

#[derive(Debug, Clone)]
pub struct SuiteReport {
    pub checks: Vec<CheckOutcome>,
    pub trials: usize,
}

impl SuiteReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

const DET_REL_TOL: f64 = 1e-8;
const PARITY_PHASE_TOL: f64 = 1e-6;
const FD_TOL: f64 = 1e-6;
const SIGMA_FLOOR: f64 = 1e-10;

/// Run the randomized suite over `trials` random connected cases at random
/// exact operating points of varying stress.
pub fn run_suite<T: Scalar>(cfg: &SuiteConfig) -> Result<SuiteReport> {
    let mut rng = seeded_rng(cfg.seed);

    let mut det_worst = 0.0f64;
    let mut det_failures = 0usize;
    let mut parity_worst_rel = 0.0f64;
    let mut parity_worst_phase = 0.0f64;
    let mut parity_failures = 0usize;
    let mut dominant_points = 0usize;
    let mut dominance_failures = 0usize;
    let mut sigma_at_failures = f64::INFINITY;
    let mut fd_worst = 0.0f64;
    let mut fd_failures = 0usize;
    let mut fd_runs = 0usize;

    for trial in 0..cfg.trials {
        let n = rng.gen_range(cfg.min_buses..=cfg.max_buses);
        let cfg_case = SynthConfig {
            n_buses: n,
            ci_prob: if cfg.with_ci && trial % 3 == 0 {
                0.3
            } else {
                0.0
            },
            ..SynthConfig::default()
        };
        let case = random_case::<T>(&mut rng, &cfg_case);
        let net = reduce(&case)?;
        let stress = rng.gen_range(0.1..2.5);
        let snap = random_operating_point(&net, &mut rng, stress);
        let bundle = JacobianBundle::build(&net, &snap)?;
        let n_pq = net.n_pq();

        // determinant agreement of the real and complex forms, and the
        // reality of the complex determinant
        let det_jz_mag = bundle.det_jz.modulus();
        let dev = (bundle.det_jz - Complex::new(bundle.det_jr, T::zero())).modulus();
        let rel = to_f64(dev / det_jz_mag);
        det_worst = det_worst.max(rel);
        let imag_rel = to_f64(bundle.det_jz.im.abs() / det_jz_mag);
        det_worst = det_worst.max(imag_rel);
        if rel >= DET_REL_TOL || imag_rel >= DET_REL_TOL {
            det_failures += 1;
        }

        // sign parity of the dominance form: det_jz = (-1)^n det_jzp
        let det_jzp_mag = bundle.det_jzp.modulus();
        let mag_rel = to_f64((det_jz_mag - det_jzp_mag).abs() / det_jz_mag);
        parity_worst_rel = parity_worst_rel.max(mag_rel);
        let parity = if n_pq % 2 == 0 { 1.0 } else { -1.0 };
        let ratio = bundle.det_jz / bundle.det_jzp;
        let phase = to_f64((ratio * Complex::new(real::<T>(parity), T::zero())).argument()).abs();
        parity_worst_phase = parity_worst_phase.max(phase);
        if mag_rel >= DET_REL_TOL || phase >= PARITY_PHASE_TOL {
            parity_failures += 1;
        }

        // index above one at every bus must imply a nonsingular point
        let (c, _, c_min, _) = c_index(&net, &snap);
        if c.iter().all(|&ch| ch > T::one()) {
            dominant_points += 1;
            let sigma = singularity_metrics(&bundle.jr).sigma_min;
            if to_f64(sigma).is_nan() || sigma <= real(SIGMA_FLOOR) {
                dominance_failures += 1;
                sigma_at_failures = sigma_at_failures.min(to_f64(sigma));
            }
        }
        let _ = c_min;

        if fd_runs < cfg.fd_trials {
            fd_runs += 1;
            let dev = to_f64(wirtinger_fd_check(&net, &snap, real(cfg.fd_step))?);
            fd_worst = fd_worst.max(dev);
            if dev >= FD_TOL {
                fd_failures += 1;
            }
        }
    }

    let checks = vec![
        CheckOutcome {
            name: "theorem1",
            passed: det_failures == 0,
            worst: det_worst,
            failures: det_failures,
            detail: format!("max relative determinant deviation {det_worst:.3e}"),
        },
        CheckOutcome {
            name: "lemma2",
            passed: parity_failures == 0,
            worst: parity_worst_rel.max(parity_worst_phase),
            failures: parity_failures,
            detail: format!(
                "max |det| deviation {parity_worst_rel:.3e}, max parity phase {parity_worst_phase:.3e} rad"
            ),
        },
        CheckOutcome {
            name: "theorem2",
            passed: dominance_failures == 0 && dominant_points > 0,
            worst: if dominance_failures == 0 {
                0.0
            } else {
                sigma_at_failures
            },
            failures: dominance_failures,
            detail: format!(
                "{dominant_points} of {trials} points with every index above one, {dominance_failures} singular",
                trials = cfg.trials
            ),
        },
        CheckOutcome {
            name: "wirtinger",
            passed: fd_failures == 0 && fd_runs > 0,
            worst: fd_worst,
            failures: fd_failures,
            detail: format!("max finite-difference deviation {fd_worst:.3e} over {fd_runs} points"),
        },
    ];
    Ok(SuiteReport {
        checks,
        trials: cfg.trials,
    })
}
