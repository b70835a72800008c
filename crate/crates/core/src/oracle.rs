//! Discrete-event scheduling oracle.
//!
//! Simulates concrete executions of a system under one fully specified
//! scenario (initial phases, per-instance release jitter, per-task execution
//! times) and reports observed response times per graph instance. Monte-Carlo
//! sampling and bounded exhaustive enumeration drive the simulator to probe
//! for worst cases; both underapproximate the true WCRT, so they can refute a
//! bound but never certify it.
//!
//! Timestamp tie-break: releases are processed before scheduling decisions,
//! so a job arriving exactly when a PE frees up competes for it.

use crate::model::{Policy, SystemModel};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::cmp::Reverse;
use std::collections::BinaryHeap;
use thiserror::Error;

/// One fully determined execution of the system.
#[derive(Clone, Debug)]
pub struct Scenario {
    /// Initial release phase of each graph; instance k of graph g is
    /// nominally released at `phases[g] + k * period`.
    pub phases: Vec<u64>,
    /// Release jitter deviation per graph instance, each in `[0, jitter]`.
    /// Instances beyond the vector get deviation 0.
    pub offsets: Vec<Vec<u64>>,
    /// Execution time per task, each in `[bcet, wcet]`.
    pub exec: Vec<u64>,
}

impl Scenario {
    /// All phases and deviations zero, every task at WCET.
    pub fn nominal(model: &SystemModel) -> Scenario {
        Scenario {
            phases: vec![0; model.graphs.len()],
            offsets: vec![Vec::new(); model.graphs.len()],
            exec: model.tasks.iter().map(|t| t.wcet).collect(),
        }
    }

    fn offset(&self, g: usize, k: usize) -> u64 {
        self.offsets[g].get(k).copied().unwrap_or(0)
    }
}

/// One task activation inside one graph instance.
#[derive(Clone, Debug)]
pub struct JobRecord {
    pub task: usize,
    pub graph: usize,
    pub instance: u64,
    /// Nominal release of the enclosing graph instance.
    pub nominal_release: u64,
    /// Time the job became eligible to run.
    pub ready: u64,
    pub start: Option<u64>,
    pub finish: Option<u64>,
    /// Maximal intervals during which the job occupied its PE.
    pub segments: Vec<(u64, u64)>,
}

#[derive(Clone, Debug)]
pub struct SimResult {
    pub horizon: u64,
    pub jobs: Vec<JobRecord>,
    /// (instance index, response) per graph, for instances that completed
    /// within the horizon. Response is measured from the nominal release.
    pub per_graph_responses: Vec<Vec<(u64, u64)>>,
    /// Max observed response per graph (0 if no instance completed).
    pub per_graph_max: Vec<u64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct McResult {
    pub per_graph_max: Vec<u64>,
    pub scenarios_run: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EnumResult {
    pub per_graph_max: Vec<u64>,
    pub scenarios_run: u64,
    /// True when per-instance jitter deviations were restricted to
    /// {0, jitter} to fit the scenario budget.
    pub extremes_only: bool,
}

#[derive(Debug, Error)]
#[error("scenario space has {required} points, exceeding the budget of {budget}")]
pub struct SpaceTooLarge {
    pub required: u128,
    pub budget: u64,
}

/// Two hyperperiods plus the largest jitter: long enough that every phase
/// alignment enumerated over one period recurs with all graphs active.
pub fn default_horizon(model: &SystemModel) -> u64 {
    let lcm = model
        .graphs
        .iter()
        .map(|g| g.period)
        .fold(1u64, |a, p| {
            let g = gcd(a, p);
            (a / g).saturating_mul(p)
        });
    let max_jitter = model.graphs.iter().map(|g| g.jitter).max().unwrap_or(0);
    2 * lcm + max_jitter
}

fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Runs one scenario to the horizon.
pub fn simulate(model: &SystemModel, scenario: &Scenario, horizon: u64) -> SimResult {
    let n_pes = model.pes.len();

    // Materialize all jobs released within the horizon.
    let mut jobs: Vec<JobRecord> = Vec::new();
    let mut pred_left: Vec<usize> = Vec::new();
    // Job index of (graph, instance, task-position-in-graph).
    let mut first_job_of_instance: Vec<Vec<usize>> = vec![Vec::new(); model.graphs.len()];
    for (g, graph) in model.graphs.iter().enumerate() {
        let mut k = 0u64;
        loop {
            let nominal = scenario.phases[g] + k * graph.period;
            if nominal > horizon {
                break;
            }
            first_job_of_instance[g].push(jobs.len());
            for &t in &graph.tasks {
                let is_source = model.is_source(t);
                jobs.push(JobRecord {
                    task: t,
                    graph: g,
                    instance: k,
                    nominal_release: nominal,
                    ready: if is_source {
                        nominal + scenario.offset(g, k as usize)
                    } else {
                        0
                    },
                    start: None,
                    finish: None,
                    segments: Vec::new(),
                });
                pred_left.push(model.tasks[t].preds.len());
            }
            k += 1;
        }
    }
    // Position of each task inside its graph's task list, to find the sibling
    // job of a successor.
    let mut pos_in_graph = vec![0usize; model.tasks.len()];
    for graph in &model.graphs {
        for (i, &t) in graph.tasks.iter().enumerate() {
            pos_in_graph[t] = i;
        }
    }

    let mut remaining: Vec<u64> = jobs.iter().map(|j| scenario.exec[j.task]).collect();
    let mut unfinished_in_instance: Vec<Vec<usize>> = (0..model.graphs.len())
        .map(|g| vec![model.graphs[g].tasks.len(); first_job_of_instance[g].len()])
        .collect();

    // Ready queues keyed by (priority, earlier ready first, job id).
    type Key = (i64, Reverse<u64>, Reverse<usize>);
    let mut ready: Vec<BinaryHeap<Key>> = (0..n_pes).map(|_| BinaryHeap::new()).collect();
    let mut running: Vec<Option<usize>> = vec![None; n_pes];
    let mut activations: BinaryHeap<Reverse<(u64, usize)>> = BinaryHeap::new();
    for (j, job) in jobs.iter().enumerate() {
        if model.is_source(job.task) {
            activations.push(Reverse((job.ready, j)));
        }
    }

    let mut per_graph_responses: Vec<Vec<(u64, u64)>> = vec![Vec::new(); model.graphs.len()];
    let key_of = |jobs: &Vec<JobRecord>, j: usize| -> Key {
        (
            model.tasks[jobs[j].task].priority,
            Reverse(jobs[j].ready),
            Reverse(j),
        )
    };

    let mut now = 0u64;
    loop {
        let next_act = activations.peek().map(|Reverse((t, _))| *t);
        let next_fin = running
            .iter()
            .filter_map(|r| r.map(|j| now + remaining[j]))
            .min();
        let next = match (next_act, next_fin) {
            (Some(a), Some(f)) => a.min(f),
            (Some(a), None) => a,
            (None, Some(f)) => f,
            (None, None) => break,
        };
        if next > horizon {
            break;
        }
        if next > now {
            for pe in 0..n_pes {
                if let Some(j) = running[pe] {
                    let ran = (next - now).min(remaining[j]);
                    if ran > 0 {
                        match jobs[j].segments.last_mut() {
                            Some(seg) if seg.1 == now => seg.1 = next,
                            _ => jobs[j].segments.push((now, next)),
                        }
                        remaining[j] -= ran;
                    }
                }
            }
            now = next;
        }

        // Settle everything due at this timestamp: releases first, then
        // completions, then scheduling; repeat for zero-length jobs.
        loop {
            let mut progressed = false;
            while let Some(&Reverse((t, j))) = activations.peek() {
                if t > now {
                    break;
                }
                activations.pop();
                ready[model.tasks[jobs[j].task].pe].push(key_of(&jobs, j));
                progressed = true;
            }
            for pe in 0..n_pes {
                let Some(j) = running[pe] else { continue };
                if remaining[j] > 0 {
                    continue;
                }
                running[pe] = None;
                jobs[j].finish = Some(now);
                progressed = true;
                let (g, inst, task) = (jobs[j].graph, jobs[j].instance as usize, jobs[j].task);
                unfinished_in_instance[g][inst] -= 1;
                if unfinished_in_instance[g][inst] == 0 {
                    per_graph_responses[g]
                        .push((inst as u64, now - jobs[j].nominal_release));
                }
                let base = first_job_of_instance[g][inst];
                for &s in &model.tasks[task].succs {
                    let sj = base + pos_in_graph[s];
                    pred_left[sj] -= 1;
                    if pred_left[sj] == 0 {
                        jobs[sj].ready = now;
                        ready[model.tasks[s].pe].push(key_of(&jobs, sj));
                    }
                }
            }
            for pe in 0..n_pes {
                match running[pe] {
                    None => {
                        if let Some((_, _, Reverse(j))) = ready[pe].pop() {
                            running[pe] = Some(j);
                            if jobs[j].start.is_none() {
                                jobs[j].start = Some(now);
                            }
                            progressed = true;
                        }
                    }
                    Some(cur) if model.pes[pe].policy == Policy::Preemptive => {
                        let preempt = ready[pe]
                            .peek()
                            .is_some_and(|&(pri, _, _)| {
                                pri > model.tasks[jobs[cur].task].priority
                            });
                        if preempt {
                            let (_, _, Reverse(j)) = ready[pe].pop().unwrap();
                            ready[pe].push(key_of(&jobs, cur));
                            running[pe] = Some(j);
                            if jobs[j].start.is_none() {
                                jobs[j].start = Some(now);
                            }
                            progressed = true;
                        }
                    }
                    Some(_) => {}
                }
            }
            let instant_done = running
                .iter()
                .any(|r| r.is_some_and(|j| remaining[j] == 0));
            if !instant_done && !progressed {
                break;
            }
            if !instant_done && progressed {
                // One more pass to let fresh releases contest the PEs.
                continue;
            }
        }
    }

    let per_graph_max = per_graph_responses
        .iter()
        .map(|rs| rs.iter().map(|&(_, r)| r).max().unwrap_or(0))
        .collect();
    SimResult {
        horizon,
        jobs,
        per_graph_responses,
        per_graph_max,
    }
}

/// Total time within `[x, y]` during which jobs that could delay task `t`
/// occupied `t`'s PE: higher-priority jobs, plus (on a non-preemptive PE)
/// lower-priority jobs that started before `x`.
pub fn occupancy(model: &SystemModel, sim: &SimResult, t: usize, x: u64, y: u64) -> u64 {
    let pe = model.tasks[t].pe;
    let pri = model.tasks[t].priority;
    let non_preemptive = model.pes[pe].policy == Policy::NonPreemptive;
    let mut total = 0;
    for job in &sim.jobs {
        if job.task == t || model.tasks[job.task].pe != pe {
            continue;
        }
        let qualifies = model.tasks[job.task].priority > pri
            || (non_preemptive && job.start.is_some_and(|s| s < x));
        if !qualifies {
            continue;
        }
        for &(a, b) in &job.segments {
            total += b.min(y).saturating_sub(a.max(x));
        }
    }
    total
}

/// Random scenario sampling. Each sample independently chooses, with equal
/// probability, values drawn uniformly from the full ranges or from the range
/// extremes only; extremes are where worst cases concentrate.
pub fn monte_carlo_wcrt(
    model: &SystemModel,
    samples: u64,
    seed: u64,
    horizon: Option<u64>,
) -> McResult {
    let horizon = horizon.unwrap_or_else(|| default_horizon(model));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut per_graph_max = vec![0u64; model.graphs.len()];
    for _ in 0..samples {
        let extreme = rng.random_bool(0.5);
        let phases: Vec<u64> = model
            .graphs
            .iter()
            .map(|g| rng.random_range(0..g.period))
            .collect();
        let offsets: Vec<Vec<u64>> = model
            .graphs
            .iter()
            .map(|g| {
                let count = (horizon / g.period) as usize + 1;
                (0..count)
                    .map(|_| {
                        if g.jitter == 0 {
                            0
                        } else if extreme {
                            if rng.random_bool(0.5) { 0 } else { g.jitter }
                        } else {
                            rng.random_range(0..=g.jitter)
                        }
                    })
                    .collect()
            })
            .collect();
        let exec: Vec<u64> = model
            .tasks
            .iter()
            .map(|t| {
                if extreme {
                    if rng.random_bool(0.5) { t.bcet } else { t.wcet }
                } else {
                    rng.random_range(t.bcet..=t.wcet)
                }
            })
            .collect();
        let sim = simulate(model, &Scenario { phases, offsets, exec }, horizon);
        for (g, &m) in sim.per_graph_max.iter().enumerate() {
            per_graph_max[g] = per_graph_max[g].max(m);
        }
    }
    McResult {
        per_graph_max,
        scenarios_run: samples,
    }
}

/// Exhaustive scenario enumeration within a budget.
///
/// The first graph's phase is pinned at 0 (only relative alignment matters);
/// the other phases range over a full period in steps of 1. Per-instance
/// jitter deviations range over their full lattice, or over {0, jitter} if
/// the full product exceeds the budget. Execution times range over
/// {bcet, wcet}.
pub fn enumerate_wcrt(
    model: &SystemModel,
    budget: u64,
    horizon: Option<u64>,
) -> Result<EnumResult, SpaceTooLarge> {
    let horizon = horizon.unwrap_or_else(|| default_horizon(model));

    // Dimensions: phases per graph (except the first), one deviation per
    // graph instance, one execution time per task.
    let build = |extremes_only: bool| -> Vec<Vec<u64>> {
        let mut d: Vec<Vec<u64>> = Vec::new();
        for (g, graph) in model.graphs.iter().enumerate() {
            if g == 0 {
                d.push(vec![0]);
            } else {
                d.push((0..graph.period).collect());
            }
        }
        for graph in &model.graphs {
            let count = (horizon / graph.period) as usize + 1;
            let vals: Vec<u64> = if graph.jitter == 0 {
                vec![0]
            } else if extremes_only {
                vec![0, graph.jitter]
            } else {
                (0..=graph.jitter).collect()
            };
            for _ in 0..count {
                d.push(vals.clone());
            }
        }
        for t in &model.tasks {
            if t.bcet == t.wcet {
                d.push(vec![t.wcet]);
            } else {
                d.push(vec![t.bcet, t.wcet]);
            }
        }
        d
    };
    let space = |d: &[Vec<u64>]| -> u128 { d.iter().map(|v| v.len() as u128).product() };

    let mut extremes_only = false;
    let mut dims = build(false);
    if space(&dims) > budget as u128 {
        extremes_only = true;
        dims = build(true);
        if space(&dims) > budget as u128 {
            return Err(SpaceTooLarge {
                required: space(&dims),
                budget,
            });
        }
    }

    let n_graphs = model.graphs.len();
    let instance_counts: Vec<usize> = model
        .graphs
        .iter()
        .map(|g| (horizon / g.period) as usize + 1)
        .collect();

    let mut per_graph_max = vec![0u64; n_graphs];
    let mut index = vec![0usize; dims.len()];
    let mut scenarios_run = 0u64;
    loop {
        let mut cursor = 0;
        let phases: Vec<u64> = (0..n_graphs)
            .map(|g| dims[cursor + g][index[cursor + g]])
            .collect();
        cursor += n_graphs;
        let mut offsets: Vec<Vec<u64>> = Vec::with_capacity(n_graphs);
        for &count in &instance_counts {
            offsets.push(
                (0..count)
                    .map(|k| dims[cursor + k][index[cursor + k]])
                    .collect(),
            );
            cursor += count;
        }
        let exec: Vec<u64> = (0..model.tasks.len())
            .map(|t| dims[cursor + t][index[cursor + t]])
            .collect();

        let sim = simulate(model, &Scenario { phases, offsets, exec }, horizon);
        for (g, &m) in sim.per_graph_max.iter().enumerate() {
            per_graph_max[g] = per_graph_max[g].max(m);
        }
        scenarios_run += 1;

        // Mixed-radix increment.
        let mut pos = dims.len();
        loop {
            if pos == 0 {
                return Ok(EnumResult {
                    per_graph_max,
                    scenarios_run,
                    extremes_only,
                });
            }
            pos -= 1;
            index[pos] += 1;
            if index[pos] < dims[pos].len() {
                break;
            }
            index[pos] = 0;
        }
    }
}
