//! DC susceptance network, Kron reduction onto machine angles, and the linear
//! swing model built from it.
//!
//! State ordering is fixed as `[δ_1 … δ_m, ω_1 … ω_m]` over the non-infinite
//! machines in file order; δ in rad, ω in pu.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::system::{BusId, GridSystem};
use crate::error::{Error, Result};

pub type StateVector = DVector<f64>;
pub type InjectionVector = DVector<f64>;

/// Relative size below which an elimination pivot counts as zero.
const PIVOT_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Eq)]
enum NodeKind {
    Bus(BusId),
    Internal(BusId),
}

impl NodeKind {
    fn label(&self) -> String {
        match self {
            NodeKind::Bus(b) => format!("{b}"),
            NodeKind::Internal(b) => format!("{b} (internal EMF)"),
        }
    }
}

/// Full nodal susceptance matrix with the node bookkeeping needed to
/// recover every angle from machine angles and bus injections.
#[derive(Debug, Clone)]
pub struct Network {
    nodes: Vec<NodeKind>,
    b: DMatrix<f64>,
    reference: usize,
    machine_nodes: Vec<usize>,
    bus_nodes: Vec<usize>,
}

impl Network {
    fn build(sys: &GridSystem, infinite: usize) -> Self {
        let mut nodes: Vec<NodeKind> = sys.buses.iter().map(|b| NodeKind::Bus(b.id)).collect();
        let bus_idx = sys.bus_index();
        let mut gen_node = Vec::with_capacity(sys.generators.len());
        for g in &sys.generators {
            if g.xd_prime > 0.0 {
                nodes.push(NodeKind::Internal(g.bus));
                gen_node.push(nodes.len() - 1);
            } else {
                gen_node.push(bus_idx[&g.bus]);
            }
        }

        let n = nodes.len();
        let mut b = DMatrix::zeros(n, n);
        let mut stamp = |i: usize, j: usize, x: f64| {
            let y = 1.0 / x;
            b[(i, i)] += y;
            b[(j, j)] += y;
            b[(i, j)] -= y;
            b[(j, i)] -= y;
        };
        for br in &sys.branches {
            stamp(bus_idx[&br.from], bus_idx[&br.to], br.x);
        }
        for (k, g) in sys.generators.iter().enumerate() {
            if g.xd_prime > 0.0 {
                stamp(gen_node[k], bus_idx[&g.bus], g.xd_prime);
            }
        }

        let machine_nodes = gen_node
            .iter()
            .enumerate()
            .filter(|&(k, _)| k != infinite)
            .map(|(_, &node)| node)
            .collect();
        Network {
            nodes,
            b,
            reference: gen_node[infinite],
            machine_nodes,
            bus_nodes: (0..sys.buses.len()).collect(),
        }
    }

    /// Susceptance matrix over all nodes, reference included.
    pub fn susceptance(&self) -> &DMatrix<f64> {
        &self.b
    }

    /// All node angles (reference at 0) for given machine angles and
    /// per-bus net injections (pu, positive into the network).
    pub fn node_angles(&self, delta: &DVector<f64>, bus_injection: &DVector<f64>) -> DVector<f64> {
        let n = self.nodes.len();
        let mut fixed = vec![None; n];
        fixed[self.reference] = Some(0.0);
        for (k, &node) in self.machine_nodes.iter().enumerate() {
            fixed[node] = Some(delta[k]);
        }
        let free: Vec<usize> = (0..n).filter(|&i| fixed[i].is_none()).collect();
        let mut rhs = DVector::zeros(free.len());
        let mut bll = DMatrix::zeros(free.len(), free.len());
        for (r, &i) in free.iter().enumerate() {
            if let Some(bus) = self.bus_nodes.iter().position(|&bn| bn == i) {
                rhs[r] += bus_injection[bus];
            }
            for j in 0..n {
                if let Some(th) = fixed[j] {
                    rhs[r] -= self.b[(i, j)] * th;
                }
            }
            for (c, &j) in free.iter().enumerate() {
                bll[(r, c)] = self.b[(i, j)];
            }
        }
        let theta_free = bll
            .lu()
            .solve(&rhs)
            .unwrap_or_else(|| DVector::zeros(free.len()));
        let mut theta = DVector::zeros(n);
        for i in 0..n {
            if let Some(th) = fixed[i] {
                theta[i] = th;
            }
        }
        for (r, &i) in free.iter().enumerate() {
            theta[i] = theta_free[r];
        }
        theta
    }

    /// Net power leaving the reference node into the network for the given angles.
    pub fn reference_injection(&self, theta: &DVector<f64>) -> f64 {
        (self.b.row(self.reference) * theta)[0]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MachineInfo {
    pub bus: BusId,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
}

/// Linear swing model `ẋ = A x + [−ω_s 1; h]` with its network reduction.
#[derive(Debug, Clone)]
pub struct ReducedModel {
    pub omega_s: f64,
    pub base_mva: f64,
    pub machines: Vec<MachineInfo>,
    /// Diagonal of the inertia matrix, seconds.
    pub h: DVector<f64>,
    pub pm: DVector<f64>,
    pub a: DMatrix<f64>,
    pub ba: DMatrix<f64>,
    pub bb: DMatrix<f64>,
    pub bc: DMatrix<f64>,
    pub pl: DVector<f64>,
    pub p0: DVector<f64>,
    pub load_buses: Vec<BusId>,
    pub cc_buses: Vec<BusId>,
    pub bus_ids: Vec<BusId>,
    /// Map from per-bus net injection to machine electrical power (m × n_bus).
    pub bus_injection: DMatrix<f64>,
    pub delta_e: DVector<f64>,
    pub x_e: StateVector,
    ba_inv: DMatrix<f64>,
    pub network: Network,
}

impl ReducedModel {
    pub fn n_machines(&self) -> usize {
        self.h.len()
    }

    pub fn n_states(&self) -> usize {
        2 * self.h.len()
    }

    pub fn n_ccs(&self) -> usize {
        self.cc_buses.len()
    }

    pub fn ba_inv(&self) -> &DMatrix<f64> {
        &self.ba_inv
    }

    /// `B_a⁻¹ B_c`: angle displacement per unit of CC injection.
    pub fn cc_sensitivity(&self) -> DMatrix<f64> {
        &self.ba_inv * &self.bc
    }

    pub fn bus_column(&self, bus: BusId) -> Result<DVector<f64>> {
        let k = self
            .bus_ids
            .iter()
            .position(|&b| b == bus)
            .ok_or_else(|| Error::Model(format!("unknown bus {bus}")))?;
        Ok(self.bus_injection.column(k).into_owned())
    }

    /// Equilibrium with an extra injection vector applied through `map`
    /// (columns index the injections).
    fn shifted(&self, map: &DMatrix<f64>, p: &DVector<f64>) -> StateVector {
        let delta = &self.delta_e - &self.ba_inv * (map * p);
        let m = self.n_machines();
        let mut x = StateVector::from_element(2 * m, 1.0);
        x.rows_mut(0, m).copy_from(&delta);
        x
    }

    /// Equilibrium after adding `p` pu of injection at a single bus.
    pub fn equilibrium_with_bus_injection(&self, bus: BusId, p: f64) -> Result<StateVector> {
        let col = self.bus_column(bus)?;
        Ok(self.shifted(
            &DMatrix::from_column_slice(col.len(), 1, col.as_slice()),
            &DVector::from_element(1, p),
        ))
    }

    /// Machine electrical powers for given angles and CC injections.
    pub fn electrical_power(&self, delta: &DVector<f64>, p_cc: &DVector<f64>) -> DVector<f64> {
        &self.ba * delta - &self.bb * &self.pl + &self.bc * p_cc
    }

    /// Angle and speed sub-vectors of a state.
    pub fn split(&self, x: &StateVector) -> (DVector<f64>, DVector<f64>) {
        let m = self.n_machines();
        (x.rows(0, m).into_owned(), x.rows(m, m).into_owned())
    }

    /// Per-bus net injection vector (pu) of the loads and CCs at `p_cc`.
    pub fn bus_injections(&self, p_cc: &DVector<f64>) -> DVector<f64> {
        let mut u = DVector::zeros(self.bus_ids.len());
        let pos: BTreeMap<BusId, usize> = self
            .bus_ids
            .iter()
            .enumerate()
            .map(|(i, &b)| (b, i))
            .collect();
        for (k, b) in self.load_buses.iter().enumerate() {
            u[pos[b]] -= self.pl[k];
        }
        for (k, b) in self.cc_buses.iter().enumerate() {
            u[pos[b]] += p_cc[k];
        }
        u
    }
}

/// Builds the reduced linear swing model of a network.
///
/// The DC susceptance matrix is formed over buses plus one internal node per
/// machine with a transient reactance; the infinite machine's node is grounded,
/// and every non-machine node is Kron-eliminated, leaving `B_a`, and the
/// injection maps `B_b` (loads) and `B_c` (CCs) such that machine electrical
/// power is `P_e = B_a δ − B_b P_L + B_c P_cc`.
pub fn build_reduced_model(sys: &GridSystem) -> Result<ReducedModel> {
    sys.validate()?;
    let infinite = sys.infinite_generator().ok_or_else(|| {
        Error::Model("no infinite bus designated; equilibrium angles are undefined".into())
    })?;
    let net = Network::build(sys, infinite);
    let n_nodes = net.nodes.len();
    let n_bus = sys.buses.len();

    let unknown: Vec<usize> = (0..n_nodes).filter(|&i| i != net.reference).collect();
    let machines = &net.machine_nodes;
    let m = machines.len();
    if m == 0 {
        return Err(Error::Model(
            "no dynamic machines besides the infinite bus".into(),
        ));
    }

    // Row i: Σ_j B_ij θ_j − u_i = P_e (machine rows) or 0 (algebraic rows).
    // Columns: unknown node angles, then one injection column per bus.
    let nu = unknown.len();
    let mut w = DMatrix::zeros(nu, nu + n_bus);
    for (r, &i) in unknown.iter().enumerate() {
        for (c, &j) in unknown.iter().enumerate() {
            w[(r, c)] = net.b[(i, j)];
        }
        if let Some(bus) = net.bus_nodes.iter().position(|&bn| bn == i) {
            w[(r, nu + bus)] = -1.0;
        }
    }

    let scale = net.b.amax().max(1.0);
    let is_machine = |node: usize| machines.contains(&node);
    let mut alive: Vec<bool> = vec![true; nu];
    for (k, &node) in unknown.iter().enumerate() {
        if is_machine(node) {
            continue;
        }
        let pivot = w[(k, k)];
        if pivot.abs() <= PIVOT_TOL * scale {
            return Err(Error::SingularReduction {
                bus: net.nodes[node].label(),
                pivot,
            });
        }
        let pivot_row = w.row(k).into_owned();
        for r in 0..nu {
            if r == k || !alive[r] {
                continue;
            }
            let f = w[(r, k)] / pivot;
            if f != 0.0 {
                for c in 0..w.ncols() {
                    w[(r, c)] -= f * pivot_row[c];
                }
            }
        }
        alive[k] = false;
    }

    let machine_rows: Vec<usize> = machines
        .iter()
        .map(|mn| unknown.iter().position(|u| u == mn).unwrap())
        .collect();
    let mut ba = DMatrix::zeros(m, m);
    let mut t = DMatrix::zeros(m, n_bus);
    for (a, &ra) in machine_rows.iter().enumerate() {
        for (b, &rb) in machine_rows.iter().enumerate() {
            ba[(a, b)] = w[(ra, rb)];
        }
        for bus in 0..n_bus {
            t[(a, bus)] = w[(ra, nu + bus)];
        }
    }

    let bus_pos = sys.bus_index();
    let pick = |buses: &[BusId]| {
        let mut out = DMatrix::zeros(m, buses.len());
        for (c, b) in buses.iter().enumerate() {
            out.set_column(c, &t.column(bus_pos[b]));
        }
        out
    };
    let load_buses: Vec<BusId> = sys.loads.iter().map(|l| l.bus).collect();
    let cc_buses: Vec<BusId> = sys.ccs.iter().map(|c| c.bus).collect();
    let bb = pick(&load_buses);
    let bc = pick(&cc_buses);

    let gens: Vec<_> = sys
        .generators
        .iter()
        .enumerate()
        .filter(|&(k, _)| k != infinite)
        .map(|(_, g)| g)
        .collect();
    let h = DVector::from_iterator(m, gens.iter().map(|g| g.h));
    let pm = DVector::from_iterator(m, gens.iter().map(|g| sys.to_pu(g.pm)));
    let pl = DVector::from_iterator(load_buses.len(), sys.loads.iter().map(|l| sys.to_pu(l.p)));
    let p0 = DVector::from_iterator(cc_buses.len(), sys.ccs.iter().map(|c| sys.to_pu(c.p0)));

    let ba_inv = ba
        .clone()
        .lu()
        .try_inverse()
        .ok_or_else(|| Error::Model("reduced susceptance matrix B_a is singular".into()))?;
    let delta_e = &ba_inv * (&pm + &bb * &pl - &bc * &p0);

    let omega_s = sys.omega_s;
    let mut a = DMatrix::zeros(2 * m, 2 * m);
    for i in 0..m {
        a[(i, m + i)] = omega_s;
        for j in 0..m {
            a[(m + i, j)] = -0.5 * ba[(i, j)] / h[i];
        }
    }

    let mut x_e = StateVector::from_element(2 * m, 1.0);
    x_e.rows_mut(0, m).copy_from(&delta_e);

    Ok(ReducedModel {
        omega_s,
        base_mva: sys.base_mva,
        machines: gens
            .iter()
            .map(|g| MachineInfo {
                bus: g.bus,
                name: g.name.clone(),
            })
            .collect(),
        h,
        pm,
        a,
        ba,
        bb,
        bc,
        pl,
        p0,
        load_buses,
        cc_buses,
        bus_ids: sys.buses.iter().map(|b| b.id).collect(),
        bus_injection: t,
        delta_e,
        x_e,
        ba_inv,
        network: net,
    })
}

/// Equilibrium under an active CC power change: `δ_c = δ_e − B_a⁻¹ B_c ΔP`, `ω_c = 1`.
pub fn equilibrium_shifted(model: &ReducedModel, dp: &InjectionVector) -> Result<StateVector> {
    if dp.len() != model.n_ccs() {
        return Err(Error::dim("equilibrium_shifted", model.n_ccs(), dp.len()));
    }
    Ok(model.shifted(&model.bc, dp))
}
