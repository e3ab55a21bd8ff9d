//! Polar-form AC OPF models: the central problem, per-partition
//! subproblems with augmented-Lagrangian coupling terms, and (through the
//! same data type) the coarse problem.
//!
//! Every node carries the state `(V, θ, P of its generators, Q of its
//! generators)`. Reference angles owned by a model are eliminated (fixed
//! at 0) rather than kept as variables.

use std::collections::BTreeMap;

use hiopf_nlp::NlpProblem;

use crate::error::{CoreError, Result};
use crate::graph::Graph;
use crate::network::{Admittance, NetworkCase};
use crate::partition::LiftedStructure;

const NONE: usize = usize::MAX;

#[derive(Debug, Clone, PartialEq)]
pub struct GenData {
    /// Generator id in the source case.
    pub id: usize,
    pub node: usize,
    pub cost: f64,
    pub p_min: f64,
    pub p_max: f64,
    pub q_min: f64,
    pub q_max: f64,
    pub is_slack: bool,
}

/// Angle-difference limits `min <= θ(a) − θ(b) <= max` with `a < b`.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeData {
    pub a: usize,
    pub b: usize,
    pub min: f64,
    pub max: f64,
}

/// Everything an OPF model needs, over dense node indices.
#[derive(Debug, Clone, PartialEq)]
pub struct OpfData {
    pub labels: Vec<usize>,
    pub y: Admittance,
    pub p_load: Vec<f64>,
    pub q_load: Vec<f64>,
    pub v_min: Vec<f64>,
    pub v_max: Vec<f64>,
    pub is_ref: Vec<bool>,
    pub gens: Vec<GenData>,
    /// Generators per node, ascending id.
    pub node_gens: Vec<Vec<usize>>,
    pub edges: Vec<EdgeData>,
}

impl OpfData {
    pub fn from_case(case: &NetworkCase) -> Result<Self> {
        let index = case.bus_index();
        let n = case.buses.len();
        let y = case.admittance()?;
        let (vlo, vhi) = case.voltage_limits;
        let mut gens: Vec<GenData> = case
            .generators
            .iter()
            .map(|g| GenData {
                id: g.id,
                node: index[&g.bus],
                cost: g.unit_cost,
                p_min: g.p_min,
                p_max: g.p_max,
                q_min: g.q_min,
                q_max: g.q_max,
                is_slack: g.is_artificial_slack,
            })
            .collect();
        gens.sort_by_key(|g| g.id);
        let mut limits: BTreeMap<(usize, usize), (f64, f64)> = BTreeMap::new();
        let (amin, amax) = case.angle_limits;
        for br in &case.branches {
            let (f, t) = (index[&br.from_bus], index[&br.to_bus]);
            let lo = br.angle_min.unwrap_or(amin);
            let hi = br.angle_max.unwrap_or(amax);
            let (key, lo, hi) = if f < t { ((f, t), lo, hi) } else { ((t, f), -hi, -lo) };
            let e = limits.entry(key).or_insert((f64::NEG_INFINITY, f64::INFINITY));
            e.0 = e.0.max(lo);
            e.1 = e.1.min(hi);
        }
        let edges = limits
            .into_iter()
            .map(|((a, b), (min, max))| EdgeData { a, b, min, max })
            .collect();
        Ok(Self::assemble(
            case.buses.iter().map(|b| b.id).collect(),
            y,
            case.buses.iter().map(|b| b.active_load).collect(),
            case.buses.iter().map(|b| b.reactive_load).collect(),
            case.buses.iter().map(|b| b.v_min.unwrap_or(vlo)).collect(),
            case.buses.iter().map(|b| b.v_max.unwrap_or(vhi)).collect(),
            case.buses.iter().map(|b| b.is_reference).collect(),
            gens,
            edges,
            n,
        ))
    }

    #[allow(clippy::too_many_arguments)]
    pub(crate) fn assemble(
        labels: Vec<usize>,
        y: Admittance,
        p_load: Vec<f64>,
        q_load: Vec<f64>,
        v_min: Vec<f64>,
        v_max: Vec<f64>,
        is_ref: Vec<bool>,
        gens: Vec<GenData>,
        edges: Vec<EdgeData>,
        n: usize,
    ) -> Self {
        let mut node_gens = vec![Vec::new(); n];
        for (k, g) in gens.iter().enumerate() {
            node_gens[g.node].push(k);
        }
        Self {
            labels,
            y,
            p_load,
            q_load,
            v_min,
            v_max,
            is_ref,
            gens,
            node_gens,
            edges,
        }
    }

    pub fn n(&self) -> usize {
        self.labels.len()
    }

    pub fn graph(&self) -> Graph {
        let e: Vec<(usize, usize)> = self.edges.iter().map(|e| (e.a, e.b)).collect();
        Graph::from_edges(self.n(), &e)
    }

    /// Length of the node state `(V, θ, P.., Q..)`.
    pub fn state_dim(&self, i: usize) -> usize {
        2 + 2 * self.node_gens[i].len()
    }

    /// V = 1, θ = 0, real generators at their bound midpoints, artificial
    /// slacks at the point of their box closest to zero.
    pub fn flat_state(&self, i: usize) -> Vec<f64> {
        let gens = &self.node_gens[i];
        let mut s = vec![1.0, 0.0];
        for &g in gens {
            let g = &self.gens[g];
            s.push(if g.is_slack { 0.0_f64.clamp(g.p_min, g.p_max) } else { 0.5 * (g.p_min + g.p_max) });
        }
        for &g in gens {
            let g = &self.gens[g];
            s.push(if g.is_slack { 0.0_f64.clamp(g.q_min, g.q_max) } else { 0.5 * (g.q_min + g.q_max) });
        }
        s
    }

    /// Total generation cost of a full set of node states.
    pub fn cost_of_states(&self, states: &[Vec<f64>]) -> f64 {
        let mut f = 0.0;
        for (i, s) in states.iter().enumerate() {
            for (k, &g) in self.node_gens[i].iter().enumerate() {
                f += self.gens[g].cost * s[2 + k];
            }
        }
        f
    }
}

/// Augmented-Lagrangian coupling data of a subproblem.
#[derive(Debug, Clone, PartialEq)]
pub struct Coupling {
    pub rho: f64,
    /// Per coupling node (in the model's coupling order): target state z.
    pub z: Vec<Vec<f64>>,
    /// Per coupling node: dual y.
    pub y: Vec<Vec<f64>>,
}

/// One OPF model over a subset of nodes of an [`OpfData`].
#[derive(Debug, Clone)]
pub struct OpfModel<'a> {
    data: &'a OpfData,
    nodes: Vec<usize>,
    local: Vec<usize>,
    owned: Vec<bool>,
    offset: Vec<usize>,
    has_theta: Vec<bool>,
    nvar: usize,
    owned_local: Vec<usize>,
    edges: Vec<usize>,
    coupling_nodes: Vec<usize>,
    coupling: Coupling,
    jac_pattern: Vec<(usize, usize)>,
    hess_pattern: Vec<(usize, usize)>,
}

/// Off-diagonal flow coefficients and their θ-derivatives for one term.
#[inline]
fn trig(g: f64, b: f64, dth: f64) -> (f64, f64, f64, f64) {
    let (s, c) = dth.sin_cos();
    let ap = g * c + b * s;
    let bp = -g * s + b * c;
    let aq = g * s - b * c;
    let bq = g * c + b * s;
    (ap, bp, aq, bq)
}

impl<'a> OpfModel<'a> {
    /// Model over `nodes` (sorted global indices) whose constraints, bounds
    /// and costs belong to `owned` nodes. `coupling_nodes` (sorted, subset
    /// of `nodes`) receive augmented-Lagrangian terms.
    pub fn new(data: &'a OpfData, nodes: Vec<usize>, owned_nodes: &[usize], coupling_nodes: &[usize]) -> Result<Self> {
        let n = data.n();
        let mut local = vec![NONE; n];
        for (l, &i) in nodes.iter().enumerate() {
            if i >= n || local[i] != NONE {
                return Err(CoreError::Argument(format!("invalid node list entry {i}")));
            }
            local[i] = l;
        }
        let mut owned = vec![false; nodes.len()];
        for &i in owned_nodes {
            if local[i] == NONE {
                return Err(CoreError::Argument(format!("owned node {i} not in the model")));
            }
            owned[local[i]] = true;
        }
        // every neighbor of an owned node must be present
        for &i in owned_nodes {
            for &(j, _, _) in &data.y.rows[i] {
                if local[j] == NONE {
                    return Err(CoreError::Argument(format!("neighbor {j} of owned node {i} missing")));
                }
            }
        }
        let mut offset = Vec::with_capacity(nodes.len());
        let mut has_theta = Vec::with_capacity(nodes.len());
        let mut nvar = 0;
        for (l, &i) in nodes.iter().enumerate() {
            offset.push(nvar);
            let th = !(owned[l] && data.is_ref[i]);
            has_theta.push(th);
            nvar += 1 + usize::from(th) + 2 * data.node_gens[i].len();
        }
        let owned_local: Vec<usize> = (0..nodes.len()).filter(|&l| owned[l]).collect();
        let edges = data
            .edges
            .iter()
            .enumerate()
            .filter(|(_, e)| local[e.a] != NONE && local[e.b] != NONE && owned[local[e.a]])
            .map(|(k, _)| k)
            .collect();
        let mut coupling_local = Vec::with_capacity(coupling_nodes.len());
        for &i in coupling_nodes {
            if local[i] == NONE {
                return Err(CoreError::Argument(format!("coupling node {i} not in the model")));
            }
            coupling_local.push(local[i]);
        }
        let coupling = Coupling {
            rho: 0.0,
            z: coupling_nodes.iter().map(|&i| data.flat_state(i)).collect(),
            y: coupling_nodes.iter().map(|&i| vec![0.0; data.state_dim(i)]).collect(),
        };
        let mut model = Self {
            data,
            nodes,
            local,
            owned,
            offset,
            has_theta,
            nvar,
            owned_local,
            edges,
            coupling_nodes: coupling_local,
            coupling,
            jac_pattern: Vec::new(),
            hess_pattern: Vec::new(),
        };
        let x = vec![1.0; nvar];
        let mut jp = Vec::new();
        model.jacobian_entries(&x, |r, c, _| jp.push((r, c)));
        let mut hp = Vec::new();
        let lam = vec![1.0; model.num_eq()];
        model.hessian_entries(&x, 1.0, &lam, |r, c, _| hp.push((r, c)));
        model.jac_pattern = jp;
        model.hess_pattern = hp;
        Ok(model)
    }

    /// The full problem over all nodes.
    pub fn central(data: &'a OpfData) -> Self {
        let all: Vec<usize> = (0..data.n()).collect();
        Self::new(data, all.clone(), &all, &[]).expect("central model covers every node")
    }

    /// Subproblem of part `k`: variables over the closed neighborhood,
    /// constraints of owned nodes, coupling terms on the part's coupling
    /// nodes (targets set with [`Self::set_coupling`]).
    pub fn subproblem(data: &'a OpfData, lifted: &LiftedStructure, k: usize) -> Result<Self> {
        let v = lifted
            .views
            .get(k)
            .ok_or_else(|| CoreError::Argument(format!("no part {k}")))?;
        Self::new(data, v.extended.clone(), &v.owned, &v.coupling)
    }

    pub fn data(&self) -> &OpfData {
        self.data
    }

    pub fn nodes(&self) -> &[usize] {
        &self.nodes
    }

    pub fn coupling_nodes(&self) -> Vec<usize> {
        self.coupling_nodes.iter().map(|&l| self.nodes[l]).collect()
    }

    pub fn coupling(&self) -> &Coupling {
        &self.coupling
    }

    pub fn set_coupling(&mut self, coupling: Coupling) -> Result<()> {
        if coupling.z.len() != self.coupling_nodes.len() || coupling.y.len() != self.coupling_nodes.len() {
            return Err(CoreError::Argument(format!(
                "expected targets for {} coupling nodes",
                self.coupling_nodes.len()
            )));
        }
        for (c, &l) in self.coupling_nodes.iter().enumerate() {
            let d = self.data.state_dim(self.nodes[l]);
            if coupling.z[c].len() != d || coupling.y[c].len() != d {
                return Err(CoreError::Argument(format!(
                    "coupling node {} expects a state of length {d}",
                    self.nodes[l]
                )));
            }
        }
        if !(coupling.rho >= 0.0) {
            return Err(CoreError::Argument(format!("rho must be nonnegative, got {}", coupling.rho)));
        }
        self.coupling = coupling;
        Ok(())
    }

    pub fn owns(&self, i: usize) -> bool {
        self.local.get(i).is_some_and(|&l| l != NONE && self.owned[l])
    }

    pub fn num_owned(&self) -> usize {
        self.owned_local.len()
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    /// Variable index of each state component of local node `l` (`None`
    /// for an eliminated angle).
    fn state_vars(&self, l: usize) -> Vec<Option<usize>> {
        let i = self.nodes[l];
        let ng = self.data.node_gens[i].len();
        let o = self.offset[l];
        let th = usize::from(self.has_theta[l]);
        let mut v = vec![Some(o), self.has_theta[l].then_some(o + 1)];
        v.extend((0..2 * ng).map(|k| Some(o + 1 + th + k)));
        v
    }

    fn v_var(&self, l: usize) -> usize {
        self.offset[l]
    }

    fn th_var(&self, l: usize) -> Option<usize> {
        self.has_theta[l].then_some(self.offset[l] + 1)
    }

    fn p_var(&self, l: usize, k: usize) -> usize {
        self.offset[l] + 1 + usize::from(self.has_theta[l]) + k
    }

    fn q_var(&self, l: usize, k: usize) -> usize {
        let ng = self.data.node_gens[self.nodes[l]].len();
        self.p_var(l, k) + ng
    }

    fn theta(&self, x: &[f64], l: usize) -> f64 {
        self.th_var(l).map_or(0.0, |v| x[v])
    }

    /// State of global node `i` read from the variable vector.
    pub fn state_of(&self, x: &[f64], i: usize) -> Option<Vec<f64>> {
        let l = *self.local.get(i)?;
        if l == NONE {
            return None;
        }
        Some(self.state_vars(l).iter().map(|v| v.map_or(0.0, |v| x[v])).collect())
    }

    /// Builds a variable vector from per-node states (eliminated angles are
    /// dropped).
    pub fn x_from_states(&self, state: impl Fn(usize) -> Vec<f64>) -> Vec<f64> {
        let mut x = vec![0.0; self.nvar];
        for l in 0..self.nodes.len() {
            let s = state(self.nodes[l]);
            for (v, val) in self.state_vars(l).into_iter().zip(s) {
                if let Some(v) = v {
                    x[v] = val;
                }
            }
        }
        x
    }

    /// Generation cost of owned generators.
    pub fn local_cost(&self, x: &[f64]) -> f64 {
        let mut f = 0.0;
        for &l in &self.owned_local {
            for (k, &g) in self.data.node_gens[self.nodes[l]].iter().enumerate() {
                f += self.data.gens[g].cost * x[self.p_var(l, k)];
            }
        }
        f
    }

    /// Value of the coupling terms `yᵀ(x − z) + ρ/2 ‖x − z‖²`.
    pub fn coupling_value(&self, x: &[f64]) -> f64 {
        let mut f = 0.0;
        for (c, &l) in self.coupling_nodes.iter().enumerate() {
            for (k, v) in self.state_vars(l).into_iter().enumerate() {
                let d = v.map_or(0.0, |v| x[v]) - self.coupling.z[c][k];
                f += self.coupling.y[c][k] * d + 0.5 * self.coupling.rho * d * d;
            }
        }
        f
    }

    /// Power-balance mismatches (active rows for every owned node, then
    /// reactive rows) and inequality values `h <= 0` (two per edge).
    pub fn eval_constraints(&self, x: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        if x.len() != self.nvar {
            return Err(CoreError::Argument(format!("x has {} entries, expected {}", x.len(), self.nvar)));
        }
        let mut g = vec![0.0; self.num_eq()];
        self.eq_into(x, &mut g);
        let mut h = vec![0.0; self.num_ineq()];
        self.ineq_into(x, &mut h);
        Ok((g, h))
    }

    fn eq_into(&self, x: &[f64], out: &mut [f64]) {
        let no = self.owned_local.len();
        let d = self.data;
        for (pos, &l) in self.owned_local.iter().enumerate() {
            let i = self.nodes[l];
            let vi = x[self.v_var(l)];
            let ti = self.theta(x, l);
            let mut p = d.p_load[i];
            let mut q = d.q_load[i];
            for &(j, gij, bij) in &d.y.rows[i] {
                if j == i {
                    p += vi * vi * gij;
                    q -= vi * vi * bij;
                    continue;
                }
                let lj = self.local[j];
                let vj = x[self.v_var(lj)];
                let (ap, _, aq, _) = trig(gij, bij, ti - self.theta(x, lj));
                p += vi * vj * ap;
                q += vi * vj * aq;
            }
            for k in 0..d.node_gens[i].len() {
                p -= x[self.p_var(l, k)];
                q -= x[self.q_var(l, k)];
            }
            out[pos] = p;
            out[no + pos] = q;
        }
    }

    fn ineq_into(&self, x: &[f64], out: &mut [f64]) {
        for (r, &e) in self.edges.iter().enumerate() {
            let e = &self.data.edges[e];
            let diff = self.theta(x, self.local[e.a]) - self.theta(x, self.local[e.b]);
            out[2 * r] = diff - e.max;
            out[2 * r + 1] = e.min - diff;
        }
    }

    /// Equality Jacobian entries in a fixed order (independent of `x`).
    fn jacobian_entries(&self, x: &[f64], mut emit: impl FnMut(usize, usize, f64)) {
        let no = self.owned_local.len();
        let d = self.data;
        for (pos, &l) in self.owned_local.iter().enumerate() {
            let i = self.nodes[l];
            let vi = x[self.v_var(l)];
            let ti = self.theta(x, l);
            let (mut dp_vi, mut dq_vi, mut dp_ti, mut dq_ti) = (0.0, 0.0, 0.0, 0.0);
            for &(j, gij, bij) in &d.y.rows[i] {
                if j == i {
                    dp_vi += 2.0 * vi * gij;
                    dq_vi -= 2.0 * vi * bij;
                    continue;
                }
                let lj = self.local[j];
                let vj = x[self.v_var(lj)];
                let (ap, bp, aq, bq) = trig(gij, bij, ti - self.theta(x, lj));
                dp_vi += vj * ap;
                dq_vi += vj * aq;
                dp_ti += vi * vj * bp;
                dq_ti += vi * vj * bq;
            }
            for (row, dv, dt, reactive) in [(pos, dp_vi, dp_ti, false), (no + pos, dq_vi, dq_ti, true)] {
                emit(row, self.v_var(l), dv);
                if let Some(t) = self.th_var(l) {
                    emit(row, t, dt);
                }
                for &(j, gij, bij) in &d.y.rows[i] {
                    if j == i {
                        continue;
                    }
                    let lj = self.local[j];
                    let vj = x[self.v_var(lj)];
                    let (ap, bp, aq, bq) = trig(gij, bij, ti - self.theta(x, lj));
                    let (a, b) = if reactive { (aq, bq) } else { (ap, bp) };
                    emit(row, self.v_var(lj), vi * a);
                    if let Some(t) = self.th_var(lj) {
                        emit(row, t, -vi * vj * b);
                    }
                }
                for k in 0..d.node_gens[i].len() {
                    let v = if reactive { self.q_var(l, k) } else { self.p_var(l, k) };
                    emit(row, v, -1.0);
                }
            }
        }
    }

    fn ineq_jacobian_entries(&self, mut emit: impl FnMut(usize, usize, f64)) {
        for (r, &e) in self.edges.iter().enumerate() {
            let e = &self.data.edges[e];
            let (ta, tb) = (self.th_var(self.local[e.a]), self.th_var(self.local[e.b]));
            for (row, sign) in [(2 * r, 1.0), (2 * r + 1, -1.0)] {
                if let Some(t) = ta {
                    emit(row, t, sign);
                }
                if let Some(t) = tb {
                    emit(row, t, -sign);
                }
            }
        }
    }

    /// Lower-triangle Hessian entries of `obj_factor·f + λᵀg` in a fixed
    /// order (the inequalities are affine).
    fn hessian_entries(&self, x: &[f64], obj_factor: f64, lambda: &[f64], mut emit: impl FnMut(usize, usize, f64)) {
        let mut push = |a: usize, b: usize, v: f64| {
            if a >= b {
                emit(a, b, v)
            } else {
                emit(b, a, v)
            }
        };
        let no = self.owned_local.len();
        let d = self.data;
        for (pos, &l) in self.owned_local.iter().enumerate() {
            let i = self.nodes[l];
            let (lp, lq) = (lambda[pos], lambda[no + pos]);
            let vi = x[self.v_var(l)];
            let ti = self.theta(x, l);
            let (vvi, tvi) = (self.v_var(l), self.th_var(l));
            for &(j, gij, bij) in &d.y.rows[i] {
                if j == i {
                    push(vvi, vvi, 2.0 * (lp * gij - lq * bij));
                    continue;
                }
                let lj = self.local[j];
                let vj = x[self.v_var(lj)];
                let (vvj, tvj) = (self.v_var(lj), self.th_var(lj));
                let (ap, bp, aq, bq) = trig(gij, bij, ti - self.theta(x, lj));
                let a = lp * ap + lq * aq;
                let b = lp * bp + lq * bq;
                push(vvi, vvj, a);
                if let Some(t) = tvi {
                    push(vvi, t, vj * b);
                    push(vvj, t, vi * b);
                    push(t, t, -vi * vj * a);
                }
                if let Some(t) = tvj {
                    push(vvi, t, -vj * b);
                    push(vvj, t, -vi * b);
                    push(t, t, -vi * vj * a);
                }
                if let (Some(s), Some(t)) = (tvi, tvj) {
                    push(s, t, vi * vj * a);
                }
            }
        }
        for &l in &self.coupling_nodes {
            for v in self.state_vars(l).into_iter().flatten() {
                push(v, v, obj_factor * self.coupling.rho);
            }
        }
    }

    /// Objective, gradient, and the sparse Jacobians of g and h as
    /// `(row, col, value)` triplets.
    #[allow(clippy::type_complexity)]
    pub fn eval_objective_gradient_jacobian(
        &self,
        x: &[f64],
    ) -> (f64, Vec<f64>, Vec<(usize, usize, f64)>, Vec<(usize, usize, f64)>) {
        let mut grad = vec![0.0; self.nvar];
        self.gradient(x, &mut grad);
        let mut jg = Vec::new();
        self.jacobian_entries(x, |r, c, v| jg.push((r, c, v)));
        let mut jh = Vec::new();
        self.ineq_jacobian_entries(|r, c, v| jh.push((r, c, v)));
        (self.objective(x), grad, jg, jh)
    }

    /// Lower triangle of the Lagrangian Hessian as `(row, col, value)`
    /// triplets (duplicates summed).
    pub fn lagrangian_hessian(&self, x: &[f64], lambda: &[f64], obj_scale: f64) -> Vec<(usize, usize, f64)> {
        let mut out = Vec::new();
        self.hessian_entries(x, obj_scale, lambda, |r, c, v| out.push((r, c, v)));
        out
    }

    /// Flat start (see [`OpfData::flat_state`]).
    pub fn flat_start(&self) -> Vec<f64> {
        self.x_from_states(|i| self.data.flat_state(i))
    }
}

impl NlpProblem for OpfModel<'_> {
    fn num_vars(&self) -> usize {
        self.nvar
    }

    fn num_eq(&self) -> usize {
        2 * self.owned_local.len()
    }

    fn num_ineq(&self) -> usize {
        2 * self.edges.len()
    }

    fn bounds(&self, lower: &mut [f64], upper: &mut [f64]) {
        lower.iter_mut().for_each(|v| *v = f64::NEG_INFINITY);
        upper.iter_mut().for_each(|v| *v = f64::INFINITY);
        let d = self.data;
        for &l in &self.owned_local {
            let i = self.nodes[l];
            lower[self.v_var(l)] = d.v_min[i];
            upper[self.v_var(l)] = d.v_max[i];
            for (k, &g) in d.node_gens[i].iter().enumerate() {
                let g = &d.gens[g];
                lower[self.p_var(l, k)] = g.p_min;
                upper[self.p_var(l, k)] = g.p_max;
                lower[self.q_var(l, k)] = g.q_min;
                upper[self.q_var(l, k)] = g.q_max;
            }
        }
    }

    fn initial_point(&self, x: &mut [f64]) {
        x.copy_from_slice(&self.flat_start());
    }

    fn objective(&self, x: &[f64]) -> f64 {
        self.local_cost(x) + self.coupling_value(x)
    }

    fn gradient(&self, x: &[f64], grad: &mut [f64]) {
        grad.iter_mut().for_each(|g| *g = 0.0);
        for &l in &self.owned_local {
            for (k, &g) in self.data.node_gens[self.nodes[l]].iter().enumerate() {
                grad[self.p_var(l, k)] += self.data.gens[g].cost;
            }
        }
        for (c, &l) in self.coupling_nodes.iter().enumerate() {
            for (k, v) in self.state_vars(l).into_iter().enumerate() {
                if let Some(v) = v {
                    grad[v] += self.coupling.y[c][k] + self.coupling.rho * (x[v] - self.coupling.z[c][k]);
                }
            }
        }
    }

    fn eq_values(&self, x: &[f64], out: &mut [f64]) {
        self.eq_into(x, out);
    }

    fn ineq_values(&self, x: &[f64], out: &mut [f64]) {
        self.ineq_into(x, out);
    }

    fn eq_jacobian_pattern(&self) -> Vec<(usize, usize)> {
        self.jac_pattern.clone()
    }

    fn eq_jacobian_values(&self, x: &[f64], vals: &mut [f64]) {
        let mut k = 0;
        self.jacobian_entries(x, |_, _, v| {
            vals[k] = v;
            k += 1;
        });
    }

    fn ineq_jacobian_pattern(&self) -> Vec<(usize, usize)> {
        let mut p = Vec::new();
        self.ineq_jacobian_entries(|r, c, _| p.push((r, c)));
        p
    }

    fn ineq_jacobian_values(&self, _x: &[f64], vals: &mut [f64]) {
        let mut k = 0;
        self.ineq_jacobian_entries(|_, _, v| {
            vals[k] = v;
            k += 1;
        });
    }

    fn hessian_pattern(&self) -> Vec<(usize, usize)> {
        self.hess_pattern.clone()
    }

    fn hessian_values(&self, x: &[f64], obj_factor: f64, lambda: &[f64], _nu: &[f64], vals: &mut [f64]) {
        let mut k = 0;
        self.hessian_entries(x, obj_factor, lambda, |_, _, v| {
            vals[k] = v;
            k += 1;
        });
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{Branch, Bus, Generator};

    fn bus(id: usize, p: f64, reference: bool) -> Bus {
        Bus {
            id,
            active_load: p,
            reactive_load: 0.0,
            is_reference: reference,
            shunt_g: 0.0,
            shunt_b: 0.0,
            v_min: None,
            v_max: None,
        }
    }

    fn lossless_pair() -> NetworkCase {
        NetworkCase {
            name: "pair".into(),
            base_mva: 100.0,
            buses: vec![bus(1, 0.5, true), bus(2, -0.5, false)],
            branches: vec![Branch {
                from_bus: 1,
                to_bus: 2,
                r: 0.0,
                x: 0.1,
                charging: 0.0,
                tap: 1.0,
                angle_min: None,
                angle_max: None,
            }],
            generators: vec![],
            angle_limits: (-0.5, 0.5),
            voltage_limits: (0.9, 1.1),
        }
    }

    #[test]
    fn flat_start_mismatch_is_the_load() {
        let data = OpfData::from_case(&lossless_pair()).unwrap();
        let m = OpfModel::central(&data);
        let x = m.x_from_states(|_| vec![1.0, 0.0]);
        let (g, h) = m.eval_constraints(&x).unwrap();
        assert!((g[0] - 0.5).abs() < 1e-12 && (g[1] + 0.5).abs() < 1e-12);
        assert!(g[2].abs() < 1e-12 && g[3].abs() < 1e-12);
        assert_eq!(h.len(), 2);
    }

    #[test]
    fn zero_load_flat_start_is_balanced() {
        let mut case = lossless_pair();
        case.buses[0].active_load = 0.0;
        case.buses[1].active_load = 0.0;
        let data = OpfData::from_case(&case).unwrap();
        let m = OpfModel::central(&data);
        let (g, _) = m.eval_constraints(&m.x_from_states(|_| vec![1.0, 0.0])).unwrap();
        assert!(g.iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn isolated_generator_column() {
        let case = NetworkCase {
            name: "one".into(),
            base_mva: 100.0,
            buses: vec![Bus {
                shunt_g: 0.3,
                ..bus(1, 0.2, true)
            }],
            branches: vec![],
            generators: vec![Generator {
                id: 1,
                bus: 1,
                unit_cost: 7.0,
                p_min: 0.0,
                p_max: 1.0,
                q_min: -1.0,
                q_max: 1.0,
                is_artificial_slack: false,
            }],
            angle_limits: (-0.5, 0.5),
            voltage_limits: (0.9, 1.1),
        };
        let data = OpfData::from_case(&case).unwrap();
        let m = OpfModel::central(&data);
        // V, P, Q (angle eliminated)
        assert_eq!(m.num_vars(), 3);
        let x = vec![1.05, 0.4, 0.1];
        let (_, grad, jg, _) = m.eval_objective_gradient_jacobian(&x);
        assert_eq!(grad, vec![0.0, 7.0, 0.0]);
        let entry = |r, c| jg.iter().filter(|e| e.0 == r && e.1 == c).map(|e| e.2).sum::<f64>();
        assert_eq!(entry(0, 1), -1.0);
        assert!((entry(0, 0) - 2.0 * 1.05 * 0.3).abs() < 1e-12);
        assert_eq!(entry(1, 2), -1.0);
    }

    #[test]
    fn central_dimensions() {
        let case = lossless_pair().with_slack_generators(1e4);
        let data = OpfData::from_case(&case).unwrap();
        let m = OpfModel::central(&data);
        // one reference angle eliminated
        assert_eq!(m.num_vars(), 2 * 2 + 2 * 2 - 1);
        assert_eq!(m.num_eq(), 4);
        assert_eq!(m.num_ineq(), 2);
    }

    #[test]
    fn augmented_terms_value_and_gradient() {
        let case = lossless_pair();
        let data = OpfData::from_case(&case).unwrap();
        let all = vec![0, 1];
        let mut m = OpfModel::new(&data, all.clone(), &all, &[1]).unwrap();
        let x = m.x_from_states(|i| if i == 1 { vec![2.0, 0.0] } else { vec![1.0, 0.0] });
        assert_eq!(m.objective(&x), 0.0);
        m.set_coupling(Coupling {
            rho: 10.0,
            z: vec![vec![1.0, 0.0]],
            y: vec![vec![3.0, 0.0]],
        })
        .unwrap();
        assert!((m.objective(&x) - 8.0).abs() < 1e-12);
        let mut g = vec![0.0; m.num_vars()];
        m.gradient(&x, &mut g);
        let v1 = m.x_from_states(|i| if i == 1 { vec![1.0, 0.0] } else { vec![0.0, 0.0] });
        let slot = v1.iter().position(|&v| v == 1.0).unwrap();
        assert!((g[slot] - (3.0 + 10.0 * 1.0)).abs() < 1e-12);
        assert!(m.set_coupling(Coupling { rho: 1.0, z: vec![], y: vec![] }).is_err());
    }

    #[test]
    fn zero_multipliers_give_zero_hessian() {
        let data = OpfData::from_case(&lossless_pair().with_slack_generators(1e4)).unwrap();
        let m = OpfModel::central(&data);
        let x = m.flat_start();
        let lam = vec![0.0; m.num_eq()];
        assert!(m.lagrangian_hessian(&x, &lam, 1.0).iter().all(|e| e.2 == 0.0));
    }
}
