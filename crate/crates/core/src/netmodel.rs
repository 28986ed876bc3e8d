//! Network model: case schema, admittance assembly, tie-bus elimination and
//! the reduced multiport form `V = E - Z I` consumed by every other module.
//!
//! Case files are TOML with sections `meta`, `buses`, `branches`; all numeric
//! data is per-unit. Power and current set-points in the file are signed net
//! injections (generation positive). Internally the solver and index modules
//! work with the opposite polarity (current delivered by the network through
//! a bus is positive, so a plain load carries positive power); the flip
//! happens once, inside [`reduce`].

use std::collections::{HashMap, HashSet};
use std::path::Path;

use nalgebra::{ComplexField, DMatrix, DVector};
use num_complex::Complex;
use num_traits::Zero;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{cplx, real, to_f64, Scalar};

pub type BusId = u32;

/// Role of a bus in the case schema.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BusKind {
    Slack,
    PqLoad,
    PqDg,
    CiDg,
    Tie,
}

impl BusKind {
    pub fn is_pq(self) -> bool {
        matches!(self, BusKind::PqLoad | BusKind::PqDg)
    }
    pub fn is_ci(self) -> bool {
        matches!(self, BusKind::CiDg)
    }
}

/// One bus of the raw case. `s_base`/`i_base` are signed net injections in
/// file polarity (generation positive); only the field matching the bus kind
/// is meaningful.
#[derive(Debug, Clone, PartialEq)]
pub struct Bus<T: Scalar> {
    pub id: BusId,
    pub kind: BusKind,
    /// Shunt admittance g + jb at the bus, pu.
    pub shunt: Complex<T>,
    pub s_base: Complex<T>,
    pub i_base: Complex<T>,
}

/// One branch: series impedance `z = r + jx` between two bus ids.
#[derive(Debug, Clone, PartialEq)]
pub struct Branch<T: Scalar> {
    pub from: BusId,
    pub to: BusId,
    pub z: Complex<T>,
}

/// Raw validated case.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkCase<T: Scalar> {
    pub base_mva: T,
    pub slack_voltage: Complex<T>,
    pub buses: Vec<Bus<T>>,
    pub branches: Vec<Branch<T>>,
}

// ---------------------------------------------------------------------------
// case file schema (serde side)
// ---------------------------------------------------------------------------

#[derive(Serialize, Deserialize)]
struct CaseFile {
    meta: MetaFile,
    #[serde(default)]
    buses: Vec<BusFile>,
    #[serde(default)]
    branches: Vec<BranchFile>,
}

#[derive(Serialize, Deserialize)]
struct MetaFile {
    base_mva: f64,
    #[serde(default = "unit_voltage")]
    slack_voltage: [f64; 2],
}

fn unit_voltage() -> [f64; 2] {
    [1.0, 0.0]
}

#[derive(Serialize, Deserialize)]
struct BusFile {
    id: BusId,
    kind: BusKind,
    #[serde(default)]
    shunt: [f64; 2],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    s_base: Option<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    i_base: Option<[f64; 2]>,
}

#[derive(Serialize, Deserialize)]
struct BranchFile {
    from: BusId,
    to: BusId,
    z: [f64; 2],
}

fn finite(pair: [f64; 2], what: &str) -> Result<()> {
    if pair.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::Validation(format!("{what} must be finite")))
    }
}

impl<T: Scalar> NetworkCase<T> {
    /// Parse a case from TOML text. `origin` is used in error messages only.
    pub fn from_toml_str(text: &str, origin: &str) -> Result<Self> {
        let file: CaseFile = toml::from_str(text).map_err(|e| Error::Parse {
            path: origin.to_string(),
            msg: e.to_string(),
        })?;
        finite(file.meta.slack_voltage, "meta.slack_voltage")?;
        if !file.meta.base_mva.is_finite() || file.meta.base_mva <= 0.0 {
            return Err(Error::Validation("meta.base_mva must be positive".into()));
        }

        let mut buses = Vec::with_capacity(file.buses.len());
        for b in &file.buses {
            finite(b.shunt, "bus shunt")?;
            if let Some(s) = b.s_base {
                finite(s, "bus s_base")?;
                if !b.kind.is_pq() {
                    return Err(Error::Validation(format!(
                        "bus {}: s_base is only valid on pq buses (pq/ci designations disjoint)",
                        b.id
                    )));
                }
            }
            if let Some(i) = b.i_base {
                finite(i, "bus i_base")?;
                if !b.kind.is_ci() {
                    return Err(Error::Validation(format!(
                        "bus {}: i_base is only valid on ci_dg buses (pq/ci designations disjoint)",
                        b.id
                    )));
                }
            }
            let s = b.s_base.unwrap_or([0.0, 0.0]);
            let i = b.i_base.unwrap_or([0.0, 0.0]);
            buses.push(Bus {
                id: b.id,
                kind: b.kind,
                shunt: cplx(b.shunt[0], b.shunt[1]),
                s_base: cplx(s[0], s[1]),
                i_base: cplx(i[0], i[1]),
            });
        }
        let branches = file
            .branches
            .iter()
            .map(|br| {
                finite(br.z, "branch z")?;
                Ok(Branch {
                    from: br.from,
                    to: br.to,
                    z: cplx(br.z[0], br.z[1]),
                })
            })
            .collect::<Result<Vec<_>>>()?;

        let case = NetworkCase {
            base_mva: real(file.meta.base_mva),
            slack_voltage: cplx(file.meta.slack_voltage[0], file.meta.slack_voltage[1]),
            buses,
            branches,
        };
        case.validate()?;
        Ok(case)
    }

    /// Serialize back to the case file format.
    pub fn to_toml_string(&self) -> String {
        let file = CaseFile {
            meta: MetaFile {
                base_mva: to_f64(self.base_mva),
                slack_voltage: [to_f64(self.slack_voltage.re), to_f64(self.slack_voltage.im)],
            },
            buses: self
                .buses
                .iter()
                .map(|b| BusFile {
                    id: b.id,
                    kind: b.kind,
                    shunt: [to_f64(b.shunt.re), to_f64(b.shunt.im)],
                    s_base: b
                        .kind
                        .is_pq()
                        .then(|| [to_f64(b.s_base.re), to_f64(b.s_base.im)]),
                    i_base: b
                        .kind
                        .is_ci()
                        .then(|| [to_f64(b.i_base.re), to_f64(b.i_base.im)]),
                })
                .collect(),
            branches: self
                .branches
                .iter()
                .map(|br| BranchFile {
                    from: br.from,
                    to: br.to,
                    z: [to_f64(br.z.re), to_f64(br.z.im)],
                })
                .collect(),
        };
        toml::to_string(&file).expect("case serialization cannot fail")
    }

    /// Check the schema invariants, naming the violated one on failure.
    pub fn validate(&self) -> Result<()> {
        let slack_count = self
            .buses
            .iter()
            .filter(|b| b.kind == BusKind::Slack)
            .count();
        if slack_count != 1 {
            return Err(Error::Validation(format!(
                "exactly one slack bus required, found {slack_count}"
            )));
        }
        let mut seen = HashSet::new();
        for b in &self.buses {
            if !seen.insert(b.id) {
                return Err(Error::Validation(format!(
                    "bus ids unique: {} repeats",
                    b.id
                )));
            }
            if b.kind == BusKind::Tie
                && (b.s_base != Complex::zero() || b.i_base != Complex::zero())
            {
                return Err(Error::Validation(format!(
                    "tie buses carry no injection: bus {}",
                    b.id
                )));
            }
        }
        if !self.buses.iter().any(|b| b.kind.is_pq() || b.kind.is_ci()) {
            return Err(Error::Validation(
                "at least one pq or ci bus required".into(),
            ));
        }
        for br in &self.branches {
            if br.z == Complex::zero() {
                return Err(Error::Validation(format!(
                    "every branch impedance nonzero: branch {}-{}",
                    br.from, br.to
                )));
            }
            if br.from == br.to {
                return Err(Error::Validation(format!(
                    "branch endpoints must differ: bus {}",
                    br.from
                )));
            }
            for end in [br.from, br.to] {
                if !seen.contains(&end) {
                    return Err(Error::Validation(format!(
                        "branch {}-{} references unknown bus {}",
                        br.from, br.to, end
                    )));
                }
            }
        }
        // connectivity over the branch graph
        let order = self.bus_order();
        let n = self.buses.len();
        let mut adj = vec![Vec::new(); n];
        for br in &self.branches {
            let (f, t) = (order.pos[&br.from], order.pos[&br.to]);
            adj[f].push(t);
            adj[t].push(f);
        }
        let mut visited = vec![false; n];
        let mut stack = vec![0usize];
        visited[0] = true;
        while let Some(i) = stack.pop() {
            for &j in &adj[i] {
                if !visited[j] {
                    visited[j] = true;
                    stack.push(j);
                }
            }
        }
        if let Some(i) = visited.iter().position(|v| !v) {
            return Err(Error::Validation(format!(
                "graph connected: bus {} is unreachable from the slack",
                order.full[i]
            )));
        }
        Ok(())
    }

    /// Canonical bus ordering: slack first, then pq buses in declaration
    /// order, then ci buses, then tie buses.
    pub fn bus_order(&self) -> BusOrder {
        let mut full = Vec::with_capacity(self.buses.len());
        for b in self.buses.iter().filter(|b| b.kind == BusKind::Slack) {
            full.push(b.id);
        }
        for b in self.buses.iter().filter(|b| b.kind.is_pq()) {
            full.push(b.id);
        }
        for b in self.buses.iter().filter(|b| b.kind.is_ci()) {
            full.push(b.id);
        }
        for b in self.buses.iter().filter(|b| b.kind == BusKind::Tie) {
            full.push(b.id);
        }
        let pos = full.iter().enumerate().map(|(i, &id)| (id, i)).collect();
        BusOrder {
            n_pq: self.buses.iter().filter(|b| b.kind.is_pq()).count(),
            n_ci: self.buses.iter().filter(|b| b.kind.is_ci()).count(),
            n_tie: self.buses.iter().filter(|b| b.kind == BusKind::Tie).count(),
            full,
            pos,
        }
    }

    pub fn bus(&self, id: BusId) -> Option<&Bus<T>> {
        self.buses.iter().find(|b| b.id == id)
    }
}

/// Canonical index assignment for the full admittance matrix.
#[derive(Debug, Clone)]
pub struct BusOrder {
    /// Matrix index -> bus id, ordered slack / pq / ci / tie.
    pub full: Vec<BusId>,
    /// Bus id -> matrix index.
    pub pos: HashMap<BusId, usize>,
    pub n_pq: usize,
    pub n_ci: usize,
    pub n_tie: usize,
}

/// Load and validate a case file from disk.
pub fn load_case<T: Scalar>(path: impl AsRef<Path>) -> Result<NetworkCase<T>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.display().to_string(),
        source: e,
    })?;
    NetworkCase::from_toml_str(&text, &path.display().to_string())
}

/// Assemble the full bus admittance matrix in the canonical ordering:
/// off-diagonal entries are -y_ik, diagonals sum incident branch admittances
/// plus the bus shunt, so `Y v` gives net current injected into the network.
pub fn build_admittance<T: Scalar>(case: &NetworkCase<T>) -> DMatrix<Complex<T>> {
    let order = case.bus_order();
    let n = order.full.len();
    let mut y = DMatrix::<Complex<T>>::zeros(n, n);
    for br in &case.branches {
        let a = order.pos[&br.from];
        let b = order.pos[&br.to];
        let yk = Complex::new(T::one(), T::zero()) / br.z;
        y[(a, a)] += yk;
        y[(b, b)] += yk;
        y[(a, b)] -= yk;
        y[(b, a)] -= yk;
    }
    for bus in &case.buses {
        let i = order.pos[&bus.id];
        y[(i, i)] += bus.shunt;
    }
    y
}

/// Kron reduction: eliminate the zero-injection buses listed in `ties`
/// (matrix indices) via the Schur complement over the kept set. Terminal
/// behavior at the kept buses is unchanged.
pub fn eliminate_ties<T: Scalar>(
    y: &DMatrix<Complex<T>>,
    ties: &[usize],
) -> Result<DMatrix<Complex<T>>> {
    if ties.is_empty() {
        return Ok(y.clone());
    }
    let n = y.nrows();
    let tie_set: HashSet<usize> = ties.iter().copied().collect();
    let kept: Vec<usize> = (0..n).filter(|i| !tie_set.contains(i)).collect();
    let y_kk = y.select_rows(&kept).select_columns(&kept);
    let y_kt = y.select_rows(&kept).select_columns(ties);
    let y_tk = y.select_rows(ties).select_columns(&kept);
    let y_tt = y.select_rows(ties).select_columns(ties);
    let solved = y_tt
        .clone()
        .lu()
        .solve(&y_tk)
        .ok_or(Error::SingularTieBlock)?;
    let resid = (&y_tt * &solved - &y_tk).map(|c| c.modulus()).max();
    let scale = y_tt.map(|c| c.modulus()).max().max(T::one());
    if resid > real::<T>(1e-8) * scale {
        return Err(Error::SingularTieBlock);
    }
    Ok(y_kk - y_kt * solved)
}

/// The reduced multiport network. Indexing over non-slack, non-tie buses:
/// constant-power buses occupy 0..n_pq in declaration order, constant-current
/// buses follow. Injections are stored in the internal polarity (current
/// delivered through a bus is positive, so loads carry positive power).
#[derive(Debug, Clone)]
pub struct ReducedNetwork<T: Scalar> {
    pub slack_voltage: Complex<T>,
    /// Admittance blocks in the polarity of the multiport relation
    /// `[i_s; i] = [y_ss y_sl; y_ls y_ll] [v_s; v]` with delivered currents
    /// positive (the negation of the assembled bus admittance matrix).
    pub y_ss: Complex<T>,
    pub y_sl: DVector<Complex<T>>,
    pub y_ls: DVector<Complex<T>>,
    pub y_ll: DMatrix<Complex<T>>,
    /// Impedance matrix `z = -y_ll^{-1}` over all kept non-slack buses.
    pub z: DMatrix<Complex<T>>,
    /// Equivalent source vector `e = -y_ll^{-1} y_ls v_s`.
    pub e: DVector<Complex<T>>,
    /// Diagonal of `W = diag(-y_ll^{-1} y_ls)`, i.e. `e / v_s`.
    pub w: DVector<Complex<T>>,
    bus_order: Vec<BusId>,
    kinds: Vec<BusKind>,
    n_pq: usize,
    n_ci: usize,
    s_base_pq: DVector<Complex<T>>,
    i_ci: DVector<Complex<T>>,
    z_pp: DMatrix<Complex<T>>,
    z_pc: DMatrix<Complex<T>>,
}

impl<T: Scalar> ReducedNetwork<T> {
    pub fn n_pq(&self) -> usize {
        self.n_pq
    }
    pub fn n_ci(&self) -> usize {
        self.n_ci
    }
    /// Reduced index -> bus id (pq buses first, then ci buses).
    pub fn bus_ids(&self) -> &[BusId] {
        &self.bus_order
    }
    pub fn pq_bus_ids(&self) -> &[BusId] {
        &self.bus_order[..self.n_pq]
    }
    pub fn kind(&self, reduced_index: usize) -> BusKind {
        self.kinds[reduced_index]
    }
    /// Impedance block over constant-power buses.
    pub fn z_pp(&self) -> &DMatrix<Complex<T>> {
        &self.z_pp
    }
    /// Impedance block coupling constant-power to constant-current buses.
    pub fn z_pc(&self) -> &DMatrix<Complex<T>> {
        &self.z_pc
    }
    pub fn e_pq(&self) -> DVector<Complex<T>> {
        self.e.rows(0, self.n_pq).into_owned()
    }
    /// Base power set-points of the constant-power buses, internal polarity.
    pub fn s_base_pq(&self) -> &DVector<Complex<T>> {
        &self.s_base_pq
    }
    /// Fixed constant-current injections, internal polarity.
    pub fn i_ci_base(&self) -> &DVector<Complex<T>> {
        &self.i_ci
    }
    /// Equivalent source seen by the constant-power buses once the fixed
    /// currents are folded in: `e' = e_pq - z_pc i_ci`.
    pub fn effective_source(&self, i_ci: &DVector<Complex<T>>) -> DVector<Complex<T>> {
        if self.n_ci == 0 {
            self.e_pq()
        } else {
            self.e_pq() - &self.z_pc * i_ci
        }
    }
}

/// Build the reduced network: assemble Y, eliminate tie buses, partition and
/// invert the non-slack block.
pub fn reduce<T: Scalar>(case: &NetworkCase<T>) -> Result<ReducedNetwork<T>> {
    case.validate()?;
    let order = case.bus_order();
    let y_full = build_admittance(case);
    let n_keep = 1 + order.n_pq + order.n_ci;
    let ties: Vec<usize> = (n_keep..order.full.len()).collect();
    let y_kept = eliminate_ties(&y_full, &ties)?;

    // Flip to the delivered-current polarity so that z = -y_ll^{-1} is a
    // proper (passive) impedance matrix.
    let yp = -y_kept;
    let n = n_keep - 1;
    let y_ss = yp[(0, 0)];
    let y_sl = yp.view((0, 1), (1, n)).transpose().column(0).into_owned();
    let y_ls = yp.view((1, 0), (n, 1)).column(0).into_owned();
    let y_ll = yp.view((1, 1), (n, n)).into_owned();

    let z = -y_ll.clone().try_inverse().ok_or(Error::SingularNetwork)?;
    // z (-y_ll) must reproduce the identity; a large residual means the
    // block was numerically singular even if the factorization succeeded.
    let resid = (&z * -&y_ll - DMatrix::<Complex<T>>::identity(n, n))
        .map(|c| c.modulus())
        .max();
    if to_f64(resid).is_nan() || resid > real::<T>(1e-6) {
        return Err(Error::SingularNetwork);
    }
    // Shunt/branch cancellations can leave a block that inverts cleanly but
    // is singular at the network's own admittance scale.
    let y_scale = y_full.diagonal().map(|c| c.modulus()).max();
    if z.map(|c| c.modulus()).max() * y_scale > real::<T>(1e12) {
        return Err(Error::SingularNetwork);
    }

    let v_s = case.slack_voltage;
    let e = &z * &y_ls * v_s;
    let w = e.map(|ei| ei / v_s);

    let bus_order: Vec<BusId> = order.full[1..n_keep].to_vec();
    let kinds: Vec<BusKind> = bus_order
        .iter()
        .map(|id| case.bus(*id).expect("ordered id exists").kind)
        .collect();
    let n_pq = order.n_pq;
    let n_ci = order.n_ci;

    // File polarity is net injection (generation positive); internal
    // polarity counts delivered current as positive. One sign flip, here.
    let s_base_pq = DVector::from_iterator(
        n_pq,
        bus_order[..n_pq]
            .iter()
            .map(|id| -case.bus(*id).unwrap().s_base),
    );
    let i_ci = DVector::from_iterator(
        n_ci,
        bus_order[n_pq..]
            .iter()
            .map(|id| -case.bus(*id).unwrap().i_base),
    );

    let z_pp = z.view((0, 0), (n_pq, n_pq)).into_owned();
    let z_pc = z.view((0, n_pq), (n_pq, n_ci)).into_owned();

    Ok(ReducedNetwork {
        slack_voltage: v_s,
        y_ss,
        y_sl,
        y_ls,
        y_ll,
        z,
        e,
        w,
        bus_order,
        kinds,
        n_pq,
        n_ci,
        s_base_pq,
        i_ci,
        z_pp,
        z_pc,
    })
}
