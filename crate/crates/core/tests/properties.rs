//! Randomized invariants: reduction algebra, Kron terminal equivalence,
//! index properties along sweep trajectories, and case-file round trips.

mod common;

use nalgebra::{ComplexField, DMatrix, DVector};
use num_complex::Complex;
use proptest::prelude::*;

use solvcheck::cindex::{c_index, IndexReport};
use solvcheck::netmodel::{
    build_admittance, eliminate_ties, reduce, Branch, Bus, BusKind, NetworkCase,
};
use solvcheck::pfsolve::{solve, Initialization, Injections, Snapshot, SolveOptions};
use solvcheck::sweep::{run_sweep, SweepConfig};
use solvcheck::synth::{random_case, random_operating_point, seeded_rng, SynthConfig};

fn feeder() -> NetworkCase<f64> {
    solvcheck::netmodel::load_case(common::fixture("feeder56.case")).unwrap()
}

#[test]
fn reduction_inverts_the_non_slack_block() {
    let mut rng = seeded_rng(101);
    for trial in 0..100 {
        let cfg = SynthConfig {
            n_buses: 2 + trial % 9,
            ci_prob: if trial % 4 == 0 { 0.3 } else { 0.0 },
            ..SynthConfig::default()
        };
        let case = random_case::<f64>(&mut rng, &cfg);
        let net = reduce(&case).unwrap();
        let n = net.y_ll.nrows();
        let resid = (&net.z * -&net.y_ll - DMatrix::<Complex<f64>>::identity(n, n))
            .map(|c| c.modulus())
            .max();
        assert!(resid < 1e-10, "trial {trial}: residual {resid}");
    }
}

#[test]
fn admittance_is_symmetric() {
    let mut rng = seeded_rng(102);
    for trial in 0..50 {
        let cfg = SynthConfig {
            n_buses: 2 + trial % 9,
            ..SynthConfig::default()
        };
        let case = random_case::<f64>(&mut rng, &cfg);
        let y = build_admittance(&case);
        let asym = (&y - y.transpose()).map(|c| c.modulus()).max();
        assert!(asym < 1e-12, "trial {trial}: asymmetry {asym}");
    }
}

#[test]
fn shunt_free_equivalent_source_is_the_slack_voltage() {
    let mut rng = seeded_rng(103);
    for trial in 0..50 {
        let cfg = SynthConfig {
            n_buses: 2 + trial % 9,
            shunt_prob: 0.0,
            ci_prob: 0.25,
            ..SynthConfig::default()
        };
        let case = random_case::<f64>(&mut rng, &cfg);
        let net = reduce(&case).unwrap();
        for h in 0..net.e.len() {
            assert!(
                (net.e[h] - Complex::new(1.0, 0.0)).modulus() < 1e-12,
                "trial {trial}: e[{h}] = {}",
                net.e[h]
            );
        }
    }
}

/// Split random branches with a pass-through bus, eliminate it again, and
/// check that the terminal voltages under fixed current injections agree.
#[test]
fn tie_elimination_preserves_terminal_behavior() {
    let mut rng = seeded_rng(104);
    for trial in 0..40 {
        let cfg = SynthConfig {
            n_buses: 2 + trial % 7,
            ..SynthConfig::default()
        };
        let base = random_case::<f64>(&mut rng, &cfg);

        // split every third branch in two with a tie bus in the middle
        let mut with_ties = base.clone();
        let mut next_id = base.buses.iter().map(|b| b.id).max().unwrap() + 1;
        let mut split = Vec::new();
        for (k, br) in base.branches.iter().enumerate() {
            if k % 3 == 0 {
                split.push((k, next_id, br.clone()));
                next_id += 1;
            }
        }
        for (k, tie_id, br) in split.iter().rev() {
            with_ties.branches.remove(*k);
            let half = br.z * Complex::new(0.5, 0.0);
            with_ties.branches.push(Branch {
                from: br.from,
                to: *tie_id,
                z: half,
            });
            with_ties.branches.push(Branch {
                from: *tie_id,
                to: br.to,
                z: half,
            });
            with_ties.buses.push(Bus {
                id: *tie_id,
                kind: BusKind::Tie,
                shunt: Complex::new(0.0, 0.0),
                s_base: Complex::new(0.0, 0.0),
                i_base: Complex::new(0.0, 0.0),
            });
        }
        if split.is_empty() {
            continue;
        }
        with_ties.validate().unwrap();

        // linear terminal test: fixed current injections at the kept buses
        let order = with_ties.bus_order();
        let y = build_admittance(&with_ties);
        let n_total = order.full.len();
        let n_keep = n_total - order.n_tie;
        let v_s = Complex::new(1.0, 0.0);

        let inj_kept: Vec<Complex<f64>> = (0..n_keep - 1)
            .map(|_| Complex::new(rng.gen_range(-0.3..0.3), rng.gen_range(-0.3..0.3)))
            .collect();

        let solve_linear = |y: &DMatrix<Complex<f64>>, n_buses: usize| -> DVector<Complex<f64>> {
            // rows 1.. of: inj = y_ls v_s + y_ll v  (ties carry zero injection)
            let m = n_buses - 1;
            let y_ll = y.view((1, 1), (m, m)).into_owned();
            let y_ls = y.view((1, 0), (m, 1)).into_owned();
            let mut rhs = DVector::<Complex<f64>>::zeros(m);
            for (h, inj) in inj_kept.iter().enumerate() {
                rhs[h] = *inj;
            }
            let rhs = rhs - y_ls * v_s;
            y_ll.lu().solve(&rhs).expect("linear network solves")
        };

        let v_full = solve_linear(&y, n_total);
        let ties: Vec<usize> = (n_keep..n_total).collect();
        let y_red = eliminate_ties(&y, &ties).unwrap();
        let v_red = solve_linear(&y_red, n_keep);

        for h in 0..n_keep - 1 {
            let dev = (v_full[h] - v_red[h]).modulus();
            assert!(dev < 1e-10, "trial {trial}, bus row {h}: deviation {dev}");
        }
    }
}

use rand::Rng;

#[test]
fn load_voltages_sag_as_loading_grows() {
    let case = feeder();
    let net = reduce(&case).unwrap();
    let mut prev: Option<(Snapshot<f64>, Vec<f64>)> = None;
    let mut lambda = 1.0f64;
    while lambda < 20.0 {
        let inj = Injections::scaled(&net, lambda);
        let opts = match &prev {
            Some((snap, _)) => SolveOptions {
                init: Initialization::Warm(snap.clone()),
                ..SolveOptions::default()
            },
            None => SolveOptions::default(),
        };
        let Some(snap) = solve(&net, &inj, &opts).into_snapshot() else {
            break;
        };
        let mags: Vec<f64> = (0..net.n_pq()).map(|h| snap.v[h].modulus()).collect();
        if let Some((_, before)) = &prev {
            for h in 0..net.n_pq() {
                if net.kind(h) == BusKind::PqLoad {
                    assert!(
                        mags[h] <= before[h] + 1e-7,
                        "load bus {} voltage rose from {} to {} at lambda {lambda}",
                        net.pq_bus_ids()[h],
                        before[h],
                        mags[h]
                    );
                }
            }
        }
        prev = Some((snap, mags));
        lambda += 0.05;
    }
    assert!(prev.is_some());
}

#[test]
fn index_minimum_is_non_increasing_and_chain_holds_on_feeder() {
    let case = feeder();
    let net = reduce(&case).unwrap();
    let mut prev_c = f64::INFINITY;
    let mut prev_snap: Option<Snapshot<f64>> = None;
    let mut lambda = 1.0f64;
    let mut premise_steps = 0;
    while lambda < 20.0 {
        let inj = Injections::scaled(&net, lambda);
        let opts = match &prev_snap {
            Some(s) => SolveOptions {
                init: Initialization::Warm(s.clone()),
                ..SolveOptions::default()
            },
            None => SolveOptions::default(),
        };
        let Some(snap) = solve(&net, &inj, &opts).into_snapshot() else {
            break;
        };
        let report = IndexReport::build(&net, &snap).unwrap();
        assert!(
            report.c_min <= prev_c + 1e-9,
            "c_min rose from {prev_c} to {} at lambda {lambda}",
            report.c_min
        );
        // conservatism: while the fixed-point bound holds together with the
        // voltage premise, the minimum index must sit above one
        if report.conservatism_premise(1.0) {
            premise_steps += 1;
            assert!(
                report.c_min > 1.0,
                "premise held but c_min = {} at lambda {lambda}",
                report.c_min
            );
        }
        prev_c = report.c_min;
        prev_snap = Some(snap);
        lambda += 0.05;
    }
    assert!(premise_steps > 0, "the premise must hold somewhere");
}

#[test]
fn sigma_min_collapses_towards_divergence() {
    let report = run_sweep(&feeder(), &SweepConfig::default()).unwrap();
    let first = report.rows.first().unwrap();
    let last = report
        .rows
        .iter()
        .rev()
        .find(|r| r.converged)
        .expect("a convergent step exists");
    assert!(
        last.sigma_min * 10.0 < first.sigma_min,
        "sigma_min fell only from {} to {}",
        first.sigma_min,
        last.sigma_min
    );
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    /// Emit then parse reproduces an identical case.
    #[test]
    fn case_file_round_trip(seed in any::<u64>(), n in 2usize..10) {
        let cfg = SynthConfig { n_buses: n, ci_prob: 0.3, ..SynthConfig::default() };
        let case = random_case::<f64>(&mut seeded_rng(seed), &cfg);
        let text = case.to_toml_string();
        let back = NetworkCase::<f64>::from_toml_str(&text, "round-trip").unwrap();
        prop_assert_eq!(case, back);
    }

    /// A common phase rotation of voltages and currents leaves every index
    /// unchanged (magnitudes only).
    #[test]
    fn index_is_phase_invariant(seed in any::<u64>(), phase in -3.1f64..3.1, n in 2usize..8) {
        let cfg = SynthConfig { n_buses: n, ..SynthConfig::default() };
        let case = random_case::<f64>(&mut seeded_rng(seed), &cfg);
        let net = reduce(&case).unwrap();
        let snap = random_operating_point(&net, &mut seeded_rng(seed ^ 0x5eed), 0.8);
        let (c0, ..) = c_index(&net, &snap);
        let mut rotated = snap;
        let rot = Complex::from_polar(1.0, phase);
        rotated.v *= rot;
        rotated.i *= rot;
        let (c1, ..) = c_index(&net, &rotated);
        for h in 0..net.n_pq() {
            if c0[h].is_finite() {
                prop_assert!((c0[h] - c1[h]).abs() <= 1e-9 * c0[h].max(1.0));
            } else {
                prop_assert!(!c1[h].is_finite());
            }
        }
    }

    /// Triangle inequality: the proportional-current margin never falls
    /// below the index margin `|v| - sum |z i|`.
    #[test]
    fn kessel_margin_dominates_index_margin(seed in any::<u64>(), stress in 0.1f64..2.0, n in 2usize..8) {
        let cfg = SynthConfig { n_buses: n, ci_prob: 0.2, ..SynthConfig::default() };
        let case = random_case::<f64>(&mut seeded_rng(seed), &cfg);
        let net = reduce(&case).unwrap();
        let snap = random_operating_point(&net, &mut seeded_rng(seed ^ 0xfeed), stress);
        let report = IndexReport::build(&net, &snap).unwrap();
        for h in 0..net.n_pq() {
            prop_assert!(report.kessel_margin[h] >= report.v_mag[h] - report.denom[h] - 1e-12);
        }
    }

    /// Two algebraic routes to the real Jacobian agree.
    #[test]
    fn real_jacobian_routes_agree(seed in any::<u64>(), stress in 0.1f64..1.5, n in 2usize..8) {
        let cfg = SynthConfig { n_buses: n, ..SynthConfig::default() };
        let case = random_case::<f64>(&mut seeded_rng(seed), &cfg);
        let net = reduce(&case).unwrap();
        let snap = random_operating_point(&net, &mut seeded_rng(seed ^ 0xabcd), stress);
        let jz = solvcheck::wjac::complex_jacobian(&net, &snap).unwrap();
        let slow = solvcheck::wjac::real_jacobian(&jz).unwrap();
        let a = solvcheck::wjac::power_current_block(net.z_pp(), &snap.i);
        let fast = solvcheck::wjac::real_jacobian_from_blocks(&a, &snap.v);
        let dev = (slow - fast).abs().max();
        prop_assert!(dev < 1e-12, "routes deviate by {}", dev);
    }
}
