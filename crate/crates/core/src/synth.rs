//! Seeded random test networks: connected cases with mixed load, DG and
//! constant-current buses, plus exact random operating points. Everything is
//! driven by a caller-supplied RNG so runs are reproducible.

use nalgebra::DVector;
use num_complex::Complex;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::netmodel::{Branch, Bus, BusKind, NetworkCase, ReducedNetwork};
use crate::pfsolve::Snapshot;
use crate::scalar::{cplx, real, Scalar};

/// Deterministic RNG for a seed.
pub fn seeded_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

#[derive(Debug, Clone)]
pub struct SynthConfig {
    /// Non-slack bus count.
    pub n_buses: usize,
    /// Probability of an extra (loop-forming) edge per bus beyond the tree.
    pub extra_edge_prob: f64,
    pub shunt_prob: f64,
    /// Probability that a non-slack bus is a constant-current DG.
    pub ci_prob: f64,
    /// Magnitude scale of the base injections.
    pub injection_scale: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_buses: 6,
            extra_edge_prob: 0.3,
            shunt_prob: 0.25,
            ci_prob: 0.0,
            injection_scale: 0.4,
        }
    }
}

/// Random connected case: a random spanning tree over the buses plus a few
/// loop edges, light shunts, mixed load/DG injections.
pub fn random_case<T: Scalar>(rng: &mut impl Rng, cfg: &SynthConfig) -> NetworkCase<T> {
    let n = cfg.n_buses.max(1);
    let mut buses = vec![Bus {
        id: 0,
        kind: BusKind::Slack,
        shunt: cplx(0.0, 0.0),
        s_base: cplx(0.0, 0.0),
        i_base: cplx(0.0, 0.0),
    }];
    let mut n_pq = 0;
    for id in 1..=n as u32 {
        let is_ci = n_pq > 0 && rng.gen_bool(cfg.ci_prob);
        // last bus must keep the pq set non-empty
        let is_ci = is_ci && !(id == n as u32 && n_pq == 0);
        let shunt = if rng.gen_bool(cfg.shunt_prob) {
            cplx(0.0, rng.gen_range(0.0..0.05))
        } else {
            cplx(0.0, 0.0)
        };
        if is_ci {
            let mag = cfg.injection_scale * rng.gen_range(0.05..0.5);
            let ang: f64 = rng.gen_range(-0.4..0.4);
            buses.push(Bus {
                id,
                kind: BusKind::CiDg,
                shunt,
                s_base: cplx(0.0, 0.0),
                i_base: cplx(mag * ang.cos(), mag * ang.sin()),
            });
        } else {
            n_pq += 1;
            let generating = rng.gen_bool(0.25);
            let p = if generating {
                cfg.injection_scale * rng.gen_range(0.05..0.5)
            } else {
                -cfg.injection_scale * rng.gen_range(0.1..1.0)
            };
            let pf = rng.gen_range(0.85..1.0f64);
            let q = p.abs() * (1.0 - pf * pf).sqrt() * if p < 0.0 { -1.0 } else { 0.3 };
            buses.push(Bus {
                id,
                kind: if generating {
                    BusKind::PqDg
                } else {
                    BusKind::PqLoad
                },
                shunt,
                s_base: cplx(p, q),
                i_base: cplx(0.0, 0.0),
            });
        }
    }

    let mut branches = Vec::new();
    let rand_z = |rng: &mut dyn rand::RngCore| {
        cplx::<T>(rng.gen_range(0.005..0.06), rng.gen_range(0.01..0.12))
    };
    for id in 1..=n as u32 {
        let parent = rng.gen_range(0..id);
        let z = rand_z(rng);
        branches.push(Branch {
            from: parent,
            to: id,
            z,
        });
    }
    for id in 2..=n as u32 {
        if rng.gen_bool(cfg.extra_edge_prob) {
            let other = rng.gen_range(0..id - 1);
            let z = rand_z(rng);
            branches.push(Branch {
                from: other,
                to: id,
                z,
            });
        }
    }

    NetworkCase {
        base_mva: real(1.0),
        slack_voltage: cplx(1.0, 0.0),
        buses,
        branches,
    }
}

/// Exact random operating point of a reduced network: draw a current vector
/// of the requested stress, let the voltages follow the network law.
pub fn random_operating_point<T: Scalar>(
    net: &ReducedNetwork<T>,
    rng: &mut impl Rng,
    stress: f64,
) -> Snapshot<T> {
    let i = DVector::from_fn(net.n_pq(), |_, _| {
        let mag = stress * rng.gen_range(0.05..1.0);
        let ang = rng.gen_range(-std::f64::consts::PI..std::f64::consts::PI);
        Complex::new(real(mag * ang.cos()), real(mag * ang.sin()))
    });
    Snapshot::from_currents(net, i, net.i_ci_base().clone(), T::one())
}
