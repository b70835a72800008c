//! Holistic response-time baseline for dependent task graphs on preemptive
//! PEs.
//!
//! Each task gets a response time measured from its own release (a classic
//! RTA fixed point with release-jitter terms), releases propagate along edges
//! as predecessor finish times, and separation plus phase bookkeeping removes
//! interference that provably cannot hit the task. Known to be optimistic on
//! some systems; the discrete-event oracle is the referee.

use crate::model::{Policy, SystemModel, Violation};
use crate::num::{ceil_div, emod};
use thiserror::Error;

#[derive(Clone, Debug, PartialEq)]
pub struct YwResult {
    pub per_graph_wcrt: Vec<u64>,
    /// Response time of each task measured from its own release.
    pub per_task_response: Vec<u64>,
    pub per_task_max_r: Vec<u64>,
    pub converged: bool,
    pub iterations: u32,
    pub schedulable: bool,
}

#[derive(Debug, Error)]
pub enum YwError {
    #[error("invalid model: {0:?}")]
    InvalidModel(Vec<Violation>),
    #[error("the holistic baseline only supports preemptive PEs (PE {0})")]
    NonPreemptive(String),
}

/// Separation matrix: `sep[i][j]` holds when j can never preempt an instance
/// of i, either because j is released only after i's latest finish within the
/// graph, or because a dependency path connects them in either direction.
pub fn yw_separation(model: &SystemModel, min_r: &[u64], max_f: &[u64]) -> Vec<Vec<bool>> {
    let n = model.tasks.len();
    let mut sep = vec![vec![false; n]; n];
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            sep[i][j] = (model.same_graph(i, j) && min_r[j] > max_f[i]) || model.has_path(i, j);
        }
    }
    sep
}

struct YwState {
    min_r: Vec<u64>,
    max_r: Vec<u64>,
    resp: Vec<u64>,
    /// Request phase per ordered pair (task, foreign preemptor).
    req: Vec<i64>,
    /// Finish phase per ordered pair.
    fin: Vec<i64>,
}

pub fn yw_analyze(model: &SystemModel) -> Result<YwResult, YwError> {
    let violations = model.validate();
    if !violations.is_empty() {
        return Err(YwError::InvalidModel(violations));
    }
    if let Some(pe) = model
        .pes
        .iter()
        .find(|pe| pe.policy == Policy::NonPreemptive)
    {
        return Err(YwError::NonPreemptive(pe.id.clone()));
    }

    let n = model.tasks.len();
    let ix = |t: usize, j: usize| t * n + j;
    let mut st = YwState {
        min_r: vec![0; n],
        max_r: vec![0; n],
        resp: model.tasks.iter().map(|t| t.wcet).collect(),
        req: vec![0; n * n],
        fin: vec![0; n * n],
    };
    let mut sep = vec![vec![false; n]; n];
    let mut iterations = 0u32;
    let mut converged = false;
    let mut diverged = false;

    'outer: while iterations < 1000 {
        iterations += 1;
        let max_f: Vec<u64> = (0..n).map(|t| st.max_r[t] + st.resp[t]).collect();
        sep = yw_separation(model, &st.min_r, &max_f);

        let before = (st.min_r.clone(), st.max_r.clone(), st.resp.clone(), st.req.clone());
        for &t in model.topo_order() {
            if model.is_source(t) {
                st.min_r[t] = 0;
                st.max_r[t] = model.graph_of(t).jitter;
            } else {
                st.min_r[t] = model.tasks[t]
                    .preds
                    .iter()
                    .map(|&p| st.min_r[p] + model.tasks[p].bcet)
                    .max()
                    .unwrap();
                st.max_r[t] = model.tasks[t]
                    .preds
                    .iter()
                    .map(|&p| st.max_r[p] + st.resp[p])
                    .max()
                    .unwrap();
            }
            // Request phases against every foreign task, inherited from the
            // predecessors' finish phases.
            for j in 0..n {
                if model.same_graph(t, j) {
                    continue;
                }
                st.req[ix(t, j)] = if model.is_source(t) {
                    0
                } else {
                    let inherited = model.tasks[t]
                        .preds
                        .iter()
                        .map(|&p| st.fin[ix(p, j)] + (st.max_r[p] + st.resp[p]) as i64)
                        .min()
                        .unwrap();
                    (inherited - st.max_r[t] as i64).max(0)
                };
            }

            let preemptors: Vec<usize> = (0..n)
                .filter(|&j| {
                    j != t
                        && model.same_pe(j, t)
                        && model.tasks[j].priority > model.tasks[t].priority
                        && !sep[t][j]
                })
                .collect();
            let horizon = st.max_r[t] + model.graph_of(t).deadline;
            let mut r = model.tasks[t].wcet;
            loop {
                let mut total = model.tasks[t].wcet;
                for &j in &preemptors {
                    let phase = if model.same_graph(t, j) {
                        0
                    } else {
                        st.req[ix(t, j)]
                    };
                    let jitter = (st.max_r[j] - st.min_r[j]) as i64;
                    let num = (r as i64 - phase + jitter).max(0);
                    total += ceil_div(num, model.period_of(j) as i64).max(0) as u64
                        * model.tasks[j].wcet;
                }
                if total == r {
                    break;
                }
                r = total;
                if r > horizon {
                    diverged = true;
                    break 'outer;
                }
            }
            st.resp[t] = r;

            for j in 0..n {
                if model.same_graph(t, j) {
                    continue;
                }
                let raw = st.req[ix(t, j)] - st.resp[t] as i64;
                // Wrapping applies only when j can actually preempt t;
                // otherwise the distance just shrinks by the response time.
                let wraps = model.same_pe(j, t)
                    && model.tasks[j].priority > model.tasks[t].priority
                    && !sep[t][j];
                st.fin[ix(t, j)] = if wraps {
                    emod(raw, model.period_of(j)) as i64
                } else {
                    raw.max(0)
                };
            }
        }
        if (st.min_r.clone(), st.max_r.clone(), st.resp.clone(), st.req.clone()) == before {
            converged = true;
            break;
        }
    }
    let _ = sep;

    let per_graph_wcrt: Vec<u64> = model
        .graphs
        .iter()
        .map(|g| {
            g.tasks
                .iter()
                .map(|&t| st.max_r[t] + st.resp[t])
                .max()
                .unwrap_or(0)
        })
        .collect();
    let schedulable = !diverged
        && converged
        && per_graph_wcrt
            .iter()
            .zip(&model.graphs)
            .all(|(&w, g)| w <= g.deadline);
    Ok(YwResult {
        per_graph_wcrt,
        per_task_response: st.resp,
        per_task_max_r: st.max_r,
        converged,
        iterations,
        schedulable,
    })
}

/// Plain response-time analysis for independent tasks: every task interferes
/// with every same-PE higher-priority task at its graph period, with no
/// dependency or phase reasoning. Returns `None` for a task whose fixed point
/// exceeds its deadline.
pub fn classic_rta(model: &SystemModel) -> Vec<Option<u64>> {
    (0..model.tasks.len())
        .map(|t| {
            let deadline = model.graph_of(t).deadline;
            let mut r = model.tasks[t].wcet;
            loop {
                let mut total = model.tasks[t].wcet;
                for j in 0..model.tasks.len() {
                    if j != t
                        && model.same_pe(j, t)
                        && model.tasks[j].priority > model.tasks[t].priority
                    {
                        total += ceil_div(r as i64, model.period_of(j) as i64) as u64
                            * model.tasks[j].wcet;
                    }
                }
                if total == r {
                    return Some(r);
                }
                r = total;
                if r > deadline {
                    return None;
                }
            }
        })
        .collect()
}
