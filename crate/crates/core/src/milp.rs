//! Solver-independent MILP for makespan-minimal placement.
//!
//! Variables (all times in seconds, all continuous variables `>= 0`):
//!
//! | name            | meaning                                                   |
//! |-----------------|-----------------------------------------------------------|
//! | `x_i_k`         | op `i` runs on device `k`                                 |
//! | `z_q`           | flow `q` crosses devices                                  |
//! | `u_q_a_b`       | flow `q` uses channel `a -> b`                            |
//! | `S_n`, `C_n`    | start / completion of op or flow `n`                      |
//! | `T`             | makespan                                                  |
//! | `d_i_j`         | order of two unrelated ops sharing a device               |
//! | `e_q_r`         | order of two unrelated flows sharing an endpoint device   |
//!
//! Indices in names are node and device ids, not positions.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::io;
use std::path::Path;

use crate::error::ModelError;
use crate::problem::Problem;
use crate::schedule::Schedule;

pub type VarId = usize;

/// Absolute tolerance for integrality and row satisfaction.
pub const FEAS_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VarKind {
    Binary,
    Continuous,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Var {
    pub name: String,
    pub kind: VarKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    Le,
    Ge,
    Eq,
}

/// Constraint family, for counting and diagnostics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Family {
    Makespan,
    Precedence,
    Duration,
    Assignment,
    Memory,
    NonOverlap,
    Communication,
    Congestion,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub name: String,
    pub family: Family,
    pub terms: Vec<(VarId, f64)>,
    pub sense: Sense,
    pub rhs: f64,
}

impl Row {
    /// Signed violation (`<= 0` means satisfied).
    pub fn violation(&self, values: &[f64]) -> f64 {
        let lhs: f64 = self.terms.iter().map(|&(v, c)| c * values[v]).sum();
        match self.sense {
            Sense::Le => lhs - self.rhs,
            Sense::Ge => self.rhs - lhs,
            Sense::Eq => (lhs - self.rhs).abs(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BigM {
    pub ms: f64,
    pub ml: f64,
    pub mr: f64,
}

/// Horizon `H` = sum of each op's slowest time plus each flow's slowest
/// cross-device transfer; every big-M constant is set to `H`.
pub fn big_m(p: &Problem) -> BigM {
    let ops: f64 = (0..p.n_ops())
        .map(|i| {
            (0..p.n_devices())
                .map(|k| p.op_time(i, k))
                .fold(0.0, f64::max)
        })
        .sum();
    let flows: f64 = (0..p.n_flows()).map(|q| p.max_comm(q)).sum();
    let h = ops + flows;
    BigM {
        ms: h,
        ml: h,
        mr: h,
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct VarTable {
    /// `[op][device]`
    pub x: Vec<Vec<VarId>>,
    pub z: Vec<VarId>,
    /// Per flow, ordered device-index pairs `(a, b)`, `a != b`.
    pub u: Vec<BTreeMap<(usize, usize), VarId>>,
    /// Augmented-graph index (ops then flows).
    pub start: Vec<VarId>,
    pub end: Vec<VarId>,
    pub makespan: VarId,
    /// Keyed by op index pair `(i, j)` with `i < j`.
    pub order: BTreeMap<(usize, usize), VarId>,
    /// Keyed by flow index pair `(q, r)` with `q < r`.
    pub comm_order: BTreeMap<(usize, usize), VarId>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MilpModel {
    pub vars: Vec<Var>,
    pub table: VarTable,
    pub rows: Vec<Row>,
    pub big_m: BigM,
    n_ops: usize,
}

impl MilpModel {
    pub fn n_binaries(&self) -> usize {
        self.vars
            .iter()
            .filter(|v| v.kind == VarKind::Binary)
            .count()
    }

    pub fn rows_in(&self, family: Family) -> usize {
        self.rows.iter().filter(|r| r.family == family).count()
    }

    pub fn var_index(&self) -> HashMap<&str, VarId> {
        self.vars
            .iter()
            .enumerate()
            .map(|(i, v)| (v.name.as_str(), i))
            .collect()
    }
}

/// Number of binary variables [`build_model`] would create, without
/// materializing any rows.
pub fn binary_count(p: &Problem) -> usize {
    let (n, m, k) = (p.n_ops(), p.n_flows(), p.n_devices());
    let mut count = n * k + m + m * k * (k - 1);
    for i in 0..n {
        count += (i + 1..n)
            .filter(|&j| p.op_closure.unrelated_idx(i, j))
            .count();
    }
    for q in 0..m {
        let aq = p.flow_aug_index(q);
        count += (q + 1..m)
            .filter(|&r| p.aug_closure.unrelated_idx(aq, p.flow_aug_index(r)))
            .count();
    }
    count
}

struct Builder {
    vars: Vec<Var>,
    rows: Vec<Row>,
}

impl Builder {
    fn var(&mut self, name: String, kind: VarKind) -> VarId {
        self.vars.push(Var { name, kind });
        self.vars.len() - 1
    }

    fn row(
        &mut self,
        name: String,
        family: Family,
        terms: &[(VarId, f64)],
        sense: Sense,
        rhs: f64,
    ) {
        let mut merged: BTreeMap<VarId, f64> = BTreeMap::new();
        for &(v, c) in terms {
            *merged.entry(v).or_insert(0.0) += c;
        }
        let terms = merged.into_iter().filter(|&(_, c)| c != 0.0).collect();
        self.rows.push(Row {
            name,
            family,
            terms,
            sense,
            rhs,
        });
    }
}

/// Builds the full model for `p`.
pub fn build_model(p: &Problem) -> Result<MilpModel, ModelError> {
    p.check_memory()?;
    let (n, m, kdev) = (p.n_ops(), p.n_flows(), p.n_devices());
    let bm = big_m(p);
    let (ms, ml, mr) = (bm.ms, bm.ml, bm.mr);
    let did = |k: usize| p.device_ids[k];
    let oid = |i: usize| p.op_ids[i];
    let fid = |q: usize| p.flows[q].id;
    let mut b = Builder {
        vars: Vec::new(),
        rows: Vec::new(),
    };

    let x: Vec<Vec<VarId>> = (0..n)
        .map(|i| {
            (0..kdev)
                .map(|k| b.var(format!("x_{}_{}", oid(i), did(k)), VarKind::Binary))
                .collect()
        })
        .collect();
    let z: Vec<VarId> = (0..m)
        .map(|q| b.var(format!("z_{}", fid(q)), VarKind::Binary))
        .collect();
    let u: Vec<BTreeMap<(usize, usize), VarId>> = (0..m)
        .map(|q| {
            let mut row = BTreeMap::new();
            for a in 0..kdev {
                for c in 0..kdev {
                    if a != c {
                        row.insert(
                            (a, c),
                            b.var(
                                format!("u_{}_{}_{}", fid(q), did(a), did(c)),
                                VarKind::Binary,
                            ),
                        );
                    }
                }
            }
            row
        })
        .collect();
    let aug_ids: Vec<u32> = (0..n).map(oid).chain((0..m).map(fid)).collect();
    let start: Vec<VarId> = aug_ids
        .iter()
        .map(|id| b.var(format!("S_{id}"), VarKind::Continuous))
        .collect();
    let end: Vec<VarId> = aug_ids
        .iter()
        .map(|id| b.var(format!("C_{id}"), VarKind::Continuous))
        .collect();
    let t = b.var("T".into(), VarKind::Continuous);

    let mut order = BTreeMap::new();
    for i in 0..n {
        for j in i + 1..n {
            if p.op_closure.unrelated_idx(i, j) {
                order.insert(
                    (i, j),
                    b.var(format!("d_{}_{}", oid(i), oid(j)), VarKind::Binary),
                );
            }
        }
    }
    let mut comm_order = BTreeMap::new();
    for q in 0..m {
        for r in q + 1..m {
            if p.aug_closure
                .unrelated_idx(p.flow_aug_index(q), p.flow_aug_index(r))
            {
                comm_order.insert(
                    (q, r),
                    b.var(format!("e_{}_{}", fid(q), fid(r)), VarKind::Binary),
                );
            }
        }
    }

    for i in 0..n {
        b.row(
            format!("mk_{}", oid(i)),
            Family::Makespan,
            &[(t, 1.0), (end[i], -1.0)],
            Sense::Ge,
            0.0,
        );
    }
    for (q, f) in p.flows.iter().enumerate() {
        let qa = p.flow_aug_index(q);
        b.row(
            format!("prec_{}_{}", oid(f.src), f.id),
            Family::Precedence,
            &[(end[f.src], 1.0), (start[qa], -1.0)],
            Sense::Le,
            0.0,
        );
        b.row(
            format!("prec_{}_{}", f.id, oid(f.dst)),
            Family::Precedence,
            &[(end[qa], 1.0), (start[f.dst], -1.0)],
            Sense::Le,
            0.0,
        );
    }
    for i in 0..n {
        let mut terms = vec![(end[i], 1.0), (start[i], -1.0)];
        terms.extend((0..kdev).map(|k| (x[i][k], -p.op_time(i, k))));
        b.row(
            format!("dur_{}", oid(i)),
            Family::Duration,
            &terms,
            Sense::Eq,
            0.0,
        );
    }
    for i in 0..n {
        let terms: Vec<_> = (0..kdev).map(|k| (x[i][k], 1.0)).collect();
        b.row(
            format!("assign_{}", oid(i)),
            Family::Assignment,
            &terms,
            Sense::Eq,
            1.0,
        );
    }
    for k in 0..kdev {
        let terms: Vec<_> = (0..n).map(|i| (x[i][k], p.op_mem[i] as f64)).collect();
        b.row(
            format!("mem_{}", did(k)),
            Family::Memory,
            &terms,
            Sense::Le,
            p.dev_mem[k] as f64,
        );
    }
    for (&(i, j), &d) in &order {
        for k in 0..kdev {
            // S_i >= C_j - Ms d - Ml (2 - x_ik - x_jk)
            b.row(
                format!("novl_{}_{}_{}_a", oid(i), oid(j), did(k)),
                Family::NonOverlap,
                &[
                    (start[i], 1.0),
                    (end[j], -1.0),
                    (d, ms),
                    (x[i][k], -ml),
                    (x[j][k], -ml),
                ],
                Sense::Ge,
                -2.0 * ml,
            );
            // S_j >= C_i - Ms (1 - d) - Ml (2 - x_ik - x_jk)
            b.row(
                format!("novl_{}_{}_{}_b", oid(i), oid(j), did(k)),
                Family::NonOverlap,
                &[
                    (start[j], 1.0),
                    (end[i], -1.0),
                    (d, -ms),
                    (x[i][k], -ml),
                    (x[j][k], -ml),
                ],
                Sense::Ge,
                -ms - 2.0 * ml,
            );
        }
    }
    for (q, f) in p.flows.iter().enumerate() {
        let (i, j, qa) = (f.src, f.dst, p.flow_aug_index(q));
        for k in 0..kdev {
            let tag = |s: &str| format!("comm_{}_{}_{s}", f.id, did(k));
            b.row(
                tag("zle"),
                Family::Communication,
                &[(z[q], 1.0), (x[i][k], 1.0), (x[j][k], 1.0)],
                Sense::Le,
                2.0,
            );
            b.row(
                tag("zge1"),
                Family::Communication,
                &[(z[q], 1.0), (x[i][k], -1.0), (x[j][k], 1.0)],
                Sense::Ge,
                0.0,
            );
            b.row(
                tag("zge2"),
                Family::Communication,
                &[(z[q], 1.0), (x[i][k], 1.0), (x[j][k], -1.0)],
                Sense::Ge,
                0.0,
            );
        }
        let mut terms: Vec<_> = u[q].values().map(|&v| (v, 1.0)).collect();
        terms.push((z[q], -1.0));
        b.row(
            format!("chan_{}", f.id),
            Family::Communication,
            &terms,
            Sense::Eq,
            0.0,
        );
        for (&(a, c), &v) in &u[q] {
            b.row(
                format!("act_{}_{}_{}", f.id, did(a), did(c)),
                Family::Communication,
                &[(v, 1.0), (x[i][a], -1.0), (x[j][c], -1.0)],
                Sense::Ge,
                -1.0,
            );
        }
        let mut terms = vec![(end[qa], 1.0), (start[qa], -1.0)];
        terms.extend(u[q].iter().map(|(&(a, c), &v)| (v, -p.comm(q, a, c))));
        b.row(
            format!("cdur_{}", f.id),
            Family::Communication,
            &terms,
            Sense::Eq,
            0.0,
        );
        b.row(
            format!("cpos_{}", f.id),
            Family::Communication,
            &[(end[qa], 1.0), (start[qa], -1.0)],
            Sense::Ge,
            0.0,
        );
    }
    for (&(q, r), &e) in &comm_order {
        let (fq, fr) = (p.flows[q], p.flows[r]);
        let (sq, cq) = (start[p.flow_aug_index(q)], end[p.flow_aug_index(q)]);
        let (sr, cr) = (start[p.flow_aug_index(r)], end[p.flow_aug_index(r)]);
        let (a, bb, c, d) = (fq.src, fq.dst, fr.src, fr.dst);
        for k in 0..kdev {
            // activation sign: +1 on the two source-side x, -1 on destination side
            for (side, sign) in [("src", 1.0), ("dst", -1.0)] {
                let act = [
                    (x[a][k], -mr * sign),
                    (x[c][k], -mr * sign),
                    (x[bb][k], mr * sign),
                    (x[d][k], mr * sign),
                ];
                // S_q >= C_r - Ms e - Ml(2 - z_q - z_r) + Mr(... - 2)
                let mut t1 = vec![(sq, 1.0), (cr, -1.0), (e, ms), (z[q], -ml), (z[r], -ml)];
                t1.extend(act);
                b.row(
                    format!("cong_{}_{}_{}_{side}_a", fq.id, fr.id, did(k)),
                    Family::Congestion,
                    &t1,
                    Sense::Ge,
                    -2.0 * ml - 2.0 * mr,
                );
                // S_r >= C_q - Ms(1 - e) - Ml(2 - z_q - z_r) + Mr(... - 2)
                let mut t2 = vec![(sr, 1.0), (cq, -1.0), (e, -ms), (z[q], -ml), (z[r], -ml)];
                t2.extend(act);
                b.row(
                    format!("cong_{}_{}_{}_{side}_b", fq.id, fr.id, did(k)),
                    Family::Congestion,
                    &t2,
                    Sense::Ge,
                    -ms - 2.0 * ml - 2.0 * mr,
                );
            }
        }
    }

    Ok(MilpModel {
        vars: b.vars,
        table: VarTable {
            x,
            z,
            u,
            start,
            end,
            makespan: t,
            order,
            comm_order,
        },
        rows: b.rows,
        big_m: bm,
        n_ops: n,
    })
}

fn fmt_num(v: f64) -> String {
    // `{:?}` gives the shortest round-trip form, with an exponent for very
    // large or small magnitudes, which LP readers accept
    let s = format!("{v:?}");
    s.strip_suffix(".0").map(str::to_string).unwrap_or(s)
}

/// LP-format text of the model. Row order and formatting are deterministic.
pub fn to_lp_string(model: &MilpModel) -> String {
    let mut out = String::new();
    out.push_str("\\ makespan-minimal placement\n");
    let _ = writeln!(
        out,
        "Minimize\n obj: {}",
        model.vars[model.table.makespan].name
    );
    out.push_str("Subject To\n");
    for row in &model.rows {
        let _ = write!(out, " {}:", row.name);
        if row.terms.is_empty() {
            let _ = write!(out, " 0 {}", model.vars[model.table.makespan].name);
        }
        for (n, &(v, c)) in row.terms.iter().enumerate() {
            if n > 0 && n % 8 == 0 {
                out.push_str("\n  ");
            }
            let sign = if c < 0.0 { '-' } else { '+' };
            let mag = c.abs();
            if mag == 1.0 {
                let _ = write!(out, " {sign} {}", model.vars[v].name);
            } else {
                let _ = write!(out, " {sign} {} {}", fmt_num(mag), model.vars[v].name);
            }
        }
        let sense = match row.sense {
            Sense::Le => "<=",
            Sense::Ge => ">=",
            Sense::Eq => "=",
        };
        let _ = writeln!(out, " {sense} {}", fmt_num(row.rhs));
    }
    out.push_str("Bounds\n");
    for v in model.vars.iter().filter(|v| v.kind == VarKind::Continuous) {
        let _ = writeln!(out, " {} >= 0", v.name);
    }
    out.push_str("Binaries\n");
    for (n, v) in model
        .vars
        .iter()
        .filter(|v| v.kind == VarKind::Binary)
        .enumerate()
    {
        out.push_str(if n % 8 == 0 {
            if n == 0 {
                " "
            } else {
                "\n "
            }
        } else {
            " "
        });
        out.push_str(&v.name);
    }
    out.push_str("\nEnd\n");
    out
}

pub fn export_lp(model: &MilpModel, path: impl AsRef<Path>) -> io::Result<()> {
    std::fs::write(path, to_lp_string(model))
}

/// Variable values that realize `s` in the model: placement binaries from
/// the assignment, ordering binaries from the observed order.
pub fn values_from_schedule(p: &Problem, model: &MilpModel, s: &Schedule) -> Vec<f64> {
    let tb = &model.table;
    let mut v = vec![0.0; model.vars.len()];
    for i in 0..p.n_ops() {
        v[tb.x[i][s.assignment[i]]] = 1.0;
    }
    for (q, f) in p.flows.iter().enumerate() {
        let (a, b) = (s.assignment[f.src], s.assignment[f.dst]);
        if a != b {
            v[tb.z[q]] = 1.0;
            v[tb.u[q][&(a, b)]] = 1.0;
        }
    }
    for n in 0..p.n_ops() + p.n_flows() {
        let (st, en) = s.interval(n);
        v[tb.start[n]] = st;
        v[tb.end[n]] = en;
    }
    v[tb.makespan] = s.makespan();
    for (&(i, j), &d) in &tb.order {
        v[d] = if s.op_start[i] >= s.op_end[j] {
            0.0
        } else {
            1.0
        };
    }
    for (&(q, r), &e) in &tb.comm_order {
        v[e] = if s.flow_start[q] >= s.flow_end[r] {
            0.0
        } else {
            1.0
        };
    }
    v
}

/// Rows violated by more than [`FEAS_TOL`], with their violation.
pub fn violated_rows<'m>(model: &'m MilpModel, values: &[f64]) -> Vec<(&'m Row, f64)> {
    model
        .rows
        .iter()
        .map(|r| (r, r.violation(values)))
        .filter(|&(_, slack)| slack > FEAS_TOL)
        .collect()
}

/// Turns a solver's variable values (by name) into a placement and schedule
/// after checking integrality and every row.
pub fn extract_placement(
    p: &Problem,
    model: &MilpModel,
    solution: &HashMap<String, f64>,
) -> Result<Schedule, ModelError> {
    let mut values = Vec::with_capacity(model.vars.len());
    for var in &model.vars {
        let val = *solution
            .get(&var.name)
            .ok_or_else(|| ModelError::MissingValue(var.name.clone()))?;
        if var.kind == VarKind::Binary && (val - val.round()).abs() > FEAS_TOL {
            return Err(ModelError::NonIntegral {
                var: var.name.clone(),
                value: val,
            });
        }
        values.push(val);
    }
    if let Some((row, slack)) = violated_rows(model, &values).first() {
        return Err(ModelError::ConstraintViolated {
            row: row.name.clone(),
            slack: *slack,
        });
    }
    let tb = &model.table;
    let assignment: Vec<usize> = (0..model.n_ops)
        .map(|i| {
            (0..p.n_devices())
                .find(|&k| values[tb.x[i][k]] > 0.5)
                .expect("assignment row holds")
        })
        .collect();
    let a = p.n_ops();
    let flow_channel = p
        .flows
        .iter()
        .enumerate()
        .map(|(q, _)| {
            tb.u[q]
                .iter()
                .find(|(_, &v)| values[v] > 0.5)
                .map(|(&pair, _)| pair)
        })
        .collect();
    Ok(Schedule {
        op_start: (0..a).map(|i| values[tb.start[i]]).collect(),
        op_end: (0..a).map(|i| values[tb.end[i]]).collect(),
        flow_start: (0..p.n_flows()).map(|q| values[tb.start[a + q]]).collect(),
        flow_end: (0..p.n_flows()).map(|q| values[tb.end[a + q]]).collect(),
        flow_channel,
        assignment,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{CompGraph, FlowEdge, OpNode};
    use crate::profiles::{effective_bandwidth, Cluster, Device};

    fn problem(nodes: Vec<OpNode>, edges: Vec<FlowEdge>) -> Problem {
        let g = CompGraph::new(nodes, edges).unwrap();
        let devs = vec![
            Device {
                id: 1,
                mem_bytes: 100,
            },
            Device {
                id: 2,
                mem_bytes: 100,
            },
        ];
        let c = Cluster::full_mesh(devs, 5e6).unwrap();
        Problem::new(&g, &c, &effective_bandwidth(&c).unwrap()).unwrap()
    }

    fn one_op() -> Problem {
        problem(vec![OpNode::new(1, "a", 1, [(1, 2.0), (2, 3.0)])], vec![])
    }

    fn chain() -> Problem {
        let nodes = vec![
            OpNode::new(1, "a", 1, [(1, 2.0), (2, 1.0)]),
            OpNode::new(2, "b", 1, [(1, 3.0), (2, 2.0)]),
        ];
        problem(
            nodes,
            vec![FlowEdge {
                src: 1,
                dst: 2,
                payload_bytes: 100_000_000,
            }],
        )
    }

    #[test]
    fn horizon() {
        assert_eq!(big_m(&one_op()).ms, 3.0);
        // max times 2 and 3, flow 100 MB at 5 MB/s = 20
        assert_eq!(big_m(&chain()).ms, 25.0);
    }

    #[test]
    fn one_op_counts() {
        let m = build_model(&one_op()).unwrap();
        assert_eq!(m.vars.len(), 5);
        assert_eq!(m.n_binaries(), 2);
        assert_eq!(m.rows.len(), 5);
        assert_eq!(m.rows_in(Family::Memory), 2);
        let lp = to_lp_string(&m);
        assert!(lp.contains("Minimize\n obj: T"));
        assert!(lp.contains("Binaries\n x_1_1 x_1_2"));
    }

    #[test]
    fn chain_counts() {
        let m = build_model(&chain()).unwrap();
        assert_eq!(m.table.z.len(), 1);
        assert_eq!(m.table.u[0].len(), 2);
        assert!(m.table.order.is_empty() && m.table.comm_order.is_empty());
        // 3 z-bounds x 2 devices + channel + 2 activations + duration + positivity
        assert_eq!(m.rows_in(Family::Communication), 11);
        assert_eq!(m.rows_in(Family::Precedence), 2);
        assert_eq!(
            m.rows_in(Family::NonOverlap) + m.rows_in(Family::Congestion),
            0
        );
        assert_eq!(m.n_binaries(), 2 * 2 + 1 + 2);
    }

    #[test]
    fn parallel_ops_get_one_order_var() {
        let nodes = vec![
            OpNode::new(1, "a", 1, [(1, 2.0), (2, 1.0)]),
            OpNode::new(2, "b", 1, [(1, 3.0), (2, 2.0)]),
        ];
        let m = build_model(&problem(nodes, vec![])).unwrap();
        assert_eq!(m.table.order.len(), 1);
        assert_eq!(m.rows_in(Family::NonOverlap), 4);
    }

    #[test]
    fn extract_checks_rows() {
        let p = one_op();
        let m = build_model(&p).unwrap();
        let mut sol: HashMap<String, f64> = [
            ("x_1_1", 0.0),
            ("x_1_2", 1.0),
            ("S_1", 0.0),
            ("C_1", 3.0),
            ("T", 3.0),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect();
        let s = extract_placement(&p, &m, &sol).unwrap();
        assert_eq!(s.assignment, vec![1]);
        sol.insert("x_1_1".into(), 1.0);
        assert!(matches!(
            extract_placement(&p, &m, &sol),
            Err(ModelError::ConstraintViolated { .. })
        ));
        sol.insert("x_1_1".into(), 0.5);
        assert!(matches!(
            extract_placement(&p, &m, &sol),
            Err(ModelError::NonIntegral { .. })
        ));
    }

    #[test]
    fn deterministic_export() {
        let m = build_model(&chain()).unwrap();
        assert_eq!(
            to_lp_string(&m),
            to_lp_string(&build_model(&chain()).unwrap())
        );
        let lp = to_lp_string(&m);
        let rows = lp
            .split("Subject To\n")
            .nth(1)
            .unwrap()
            .split("Bounds")
            .next()
            .unwrap();
        assert_eq!(
            rows.lines()
                .filter(|l| l.starts_with(' ') && l.contains(':'))
                .count(),
            m.rows.len()
        );
    }

    #[test]
    fn numbers_format_compactly() {
        assert_eq!(fmt_num(2.0), "2");
        assert_eq!(fmt_num(0.5), "0.5");
        assert_eq!(fmt_num(1e-7), "1e-7");
    }
}
