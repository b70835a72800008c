//! Random system generation and comparison campaigns.
//!
//! Generated systems are layered DAGs (or chains) with periods derived from
//! the critical-path WCET sum, rounded up to a power of two so that the
//! hyperperiod stays small and simulation stays cheap. Systems that the
//! hybrid analysis cannot schedule are repaired by doubling all periods.

use crate::hpa::{self, AnalysisOptions};
use crate::model::{Policy, ProcessingElement, SystemModel, Task, TaskGraph};
use crate::yw;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::time::Instant;
use thiserror::Error;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Topology {
    /// Layered DAG with an average in-degree of about 1.5.
    Layered,
    /// Single dependency chain.
    Chain,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum JitterMode {
    Zero,
    /// Source release jitter of one tenth of the graph period.
    TenthOfPeriod,
}

#[derive(Clone, Copy, Debug)]
pub struct GenParams {
    pub pes: usize,
    pub graphs: usize,
    pub tasks_per_graph: (usize, usize),
    pub topology: Topology,
    pub wcet_range: (u64, u64),
    /// Lower bound of BCET as a fraction of WCET; BCET is drawn uniformly
    /// from [ratio * wcet, wcet].
    pub bcet_ratio: f64,
    pub jitter: JitterMode,
    /// Probability that a PE schedules non-preemptively. Must be 0 for
    /// campaigns, since the holistic baseline rejects non-preemptive PEs.
    pub nonpreemptive_fraction: f64,
}

impl Default for GenParams {
    fn default() -> Self {
        GenParams {
            pes: 2,
            graphs: 3,
            tasks_per_graph: (3, 6),
            topology: Topology::Layered,
            wcet_range: (5, 50),
            bcet_ratio: 0.5,
            jitter: JitterMode::Zero,
            nonpreemptive_fraction: 0.0,
        }
    }
}

#[derive(Debug, Error)]
pub enum GenError {
    #[error("could not repair generated system into schedulability after {0} period doublings")]
    RepairFailed(u32),
}

/// Number of period doublings attempted before giving up.
const MAX_REPAIRS: u32 = 16;

/// Generates one random system that the hybrid analysis deems schedulable.
pub fn generate(params: &GenParams, seed: u64) -> Result<SystemModel, GenError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pes: Vec<ProcessingElement> = (0..params.pes)
        .map(|i| ProcessingElement {
            id: format!("pe{i}"),
            policy: if rng.random_bool(params.nonpreemptive_fraction) {
                Policy::NonPreemptive
            } else {
                Policy::Preemptive
            },
        })
        .collect();

    let mut tasks: Vec<Task> = Vec::new();
    let mut graphs: Vec<TaskGraph> = Vec::new();
    for g in 0..params.graphs {
        let count = rng.random_range(params.tasks_per_graph.0..=params.tasks_per_graph.1);
        let base = tasks.len();
        // Split tasks into layers; each task after the first starts a new
        // layer with probability 1/2.
        let mut layers: Vec<Vec<usize>> = vec![vec![base]];
        for t in base + 1..base + count {
            if params.topology == Topology::Chain || rng.random_bool(0.5) {
                layers.push(vec![t]);
            } else {
                layers.last_mut().unwrap().push(t);
            }
        }
        for (li, layer) in layers.iter().enumerate() {
            for &t in layer {
                let wcet = rng.random_range(params.wcet_range.0..=params.wcet_range.1);
                let lo = ((wcet as f64 * params.bcet_ratio).ceil() as u64).min(wcet);
                let bcet = rng.random_range(lo..=wcet);
                let mut preds = Vec::new();
                if li > 0 {
                    // One parent in the previous layer keeps the DAG
                    // connected; an occasional extra parent from any earlier
                    // layer raises the mean in-degree to about 1.5.
                    let prev = &layers[li - 1];
                    preds.push(prev[rng.random_range(0..prev.len())]);
                    if params.topology == Topology::Layered && rng.random_bool(0.5) {
                        let earlier: Vec<usize> =
                            layers[..li].iter().flatten().copied().collect();
                        let extra = earlier[rng.random_range(0..earlier.len())];
                        if !preds.contains(&extra) {
                            preds.push(extra);
                        }
                    }
                }
                tasks.push(Task {
                    id: format!("t{}", t),
                    graph: g,
                    pe: rng.random_range(0..params.pes),
                    priority: 0,
                    bcet,
                    wcet,
                    preds,
                    succs: Vec::new(),
                });
            }
        }
        graphs.push(TaskGraph {
            id: format!("g{g}"),
            period: 0,
            jitter: 0,
            deadline: 0,
            tasks: (base..base + count).collect(),
        });
    }

    let mut priorities: Vec<i64> = (1..=tasks.len() as i64).collect();
    priorities.shuffle(&mut rng);
    for (t, pri) in tasks.iter_mut().zip(priorities) {
        t.priority = pri;
    }

    // Period: power of two at least twice the critical-path WCET sum.
    for g in 0..graphs.len() {
        let crit = critical_path_wcet(&tasks, &graphs[g]);
        graphs[g].period = (2 * crit.max(1)).next_power_of_two();
    }

    for attempt in 0..=MAX_REPAIRS {
        for g in graphs.iter_mut() {
            g.deadline = g.period;
            g.jitter = match params.jitter {
                JitterMode::Zero => 0,
                JitterMode::TenthOfPeriod => g.period / 10,
            };
        }
        let model = SystemModel::from_parts(pes.clone(), graphs.clone(), tasks.clone());
        let result = hpa::analyze(&model, AnalysisOptions::default());
        if matches!(result, Ok(r) if r.schedulable) {
            return Ok(model);
        }
        if attempt == MAX_REPAIRS {
            break;
        }
        for g in graphs.iter_mut() {
            g.period *= 2;
        }
    }
    Err(GenError::RepairFailed(MAX_REPAIRS))
}

fn critical_path_wcet(tasks: &[Task], graph: &TaskGraph) -> u64 {
    let mut best = vec![0u64; tasks.len()];
    // Graph task lists are in insertion order, which respects dependencies
    // for generated systems; iterate until stable to be safe.
    loop {
        let mut changed = false;
        for &t in &graph.tasks {
            let from_preds = tasks[t]
                .preds
                .iter()
                .map(|&p| best[p])
                .max()
                .unwrap_or(0);
            let v = from_preds + tasks[t].wcet;
            if v > best[t] {
                best[t] = v;
                changed = true;
            }
        }
        if !changed {
            return graph.tasks.iter().map(|&t| best[t]).max().unwrap_or(0);
        }
    }
}

/// Per-graph comparison of the hybrid analysis against the holistic baseline.
#[derive(Clone, Debug)]
pub struct CompareRow {
    pub graph: usize,
    pub deadline: u64,
    pub hpa_wcrt: u64,
    pub hpa_schedulable: bool,
    pub hpa_iterations: u32,
    pub hpa_micros: u128,
    pub yw_wcrt: u64,
    pub yw_schedulable: bool,
    pub yw_iterations: u32,
    pub yw_micros: u128,
    /// (yw - hpa) / hpa * 100; positive means the hybrid bound is tighter.
    pub gap_percent: f64,
}

#[derive(Debug, Error)]
pub enum CompareError {
    #[error(transparent)]
    Hpa(#[from] hpa::AnalysisError),
    #[error(transparent)]
    Yw(#[from] yw::YwError),
}

pub fn compare(model: &SystemModel) -> Result<Vec<CompareRow>, CompareError> {
    let t0 = Instant::now();
    let h = hpa::analyze(model, AnalysisOptions::default())?;
    let hpa_micros = t0.elapsed().as_micros();
    let t1 = Instant::now();
    let y = yw::yw_analyze(model)?;
    let yw_micros = t1.elapsed().as_micros();
    Ok(model
        .graphs
        .iter()
        .enumerate()
        .map(|(g, graph)| {
            let (a, b) = (h.per_graph_wcrt[g], y.per_graph_wcrt[g]);
            CompareRow {
                graph: g,
                deadline: graph.deadline,
                hpa_wcrt: a,
                hpa_schedulable: h.schedulable && a <= graph.deadline,
                hpa_iterations: h.iterations,
                hpa_micros,
                yw_wcrt: b,
                yw_schedulable: y.schedulable && b <= graph.deadline,
                yw_iterations: y.iterations,
                yw_micros,
                gap_percent: (b as f64 - a as f64) / a as f64 * 100.0,
            }
        })
        .collect())
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct CampaignStats {
    /// Graphs where the hybrid bound is strictly tighter than the baseline.
    pub win: u64,
    pub tie: u64,
    pub lose: u64,
    pub max_gap_percent: f64,
    pub min_gap_percent: f64,
    pub avg_gap_percent: f64,
}

#[derive(Clone, Debug)]
pub struct CampaignResult {
    pub rows: Vec<(u64, CompareRow)>,
    pub stats: CampaignStats,
    /// Seeds that failed generation (repair gave up); skipped, not fatal.
    pub failed_instances: Vec<u64>,
}

/// Generates `instances` systems (seeds `seed..seed+instances`) and compares
/// the two analyses on each.
pub fn run_campaign(params: &GenParams, instances: u64, seed: u64) -> CampaignResult {
    let mut rows = Vec::new();
    let mut failed = Vec::new();
    for i in 0..instances {
        let model = match generate(params, seed + i) {
            Ok(m) => m,
            Err(_) => {
                failed.push(seed + i);
                continue;
            }
        };
        match compare(&model) {
            Ok(cmp) => rows.extend(cmp.into_iter().map(|r| (i, r))),
            Err(_) => failed.push(seed + i),
        }
    }
    let stats = campaign_stats(rows.iter().map(|(_, r)| r));
    CampaignResult {
        rows,
        stats,
        failed_instances: failed,
    }
}

pub fn campaign_stats<'a>(rows: impl Iterator<Item = &'a CompareRow>) -> CampaignStats {
    let mut s = CampaignStats::default();
    let mut sum = 0.0;
    let mut count = 0u64;
    for r in rows {
        match r.hpa_wcrt.cmp(&r.yw_wcrt) {
            std::cmp::Ordering::Less => s.win += 1,
            std::cmp::Ordering::Equal => s.tie += 1,
            std::cmp::Ordering::Greater => s.lose += 1,
        }
        if count == 0 {
            s.max_gap_percent = r.gap_percent;
            s.min_gap_percent = r.gap_percent;
        } else {
            s.max_gap_percent = s.max_gap_percent.max(r.gap_percent);
            s.min_gap_percent = s.min_gap_percent.min(r.gap_percent);
        }
        sum += r.gap_percent;
        count += 1;
    }
    if count > 0 {
        s.avg_gap_percent = sum / count as f64;
    }
    s
}

pub const CAMPAIGN_CSV_HEADER: &str =
    "instance,graph,method,wcrt,deadline,schedulable,iterations,micros";

/// Two CSV lines (hybrid and baseline) for one campaign row.
pub fn campaign_csv_lines(instance: u64, r: &CompareRow) -> [String; 2] {
    [
        format!(
            "{},{},hpa,{},{},{},{},{}",
            instance, r.graph, r.hpa_wcrt, r.deadline, r.hpa_schedulable, r.hpa_iterations,
            r.hpa_micros
        ),
        format!(
            "{},{},yw,{},{},{},{},{}",
            instance, r.graph, r.yw_wcrt, r.deadline, r.yw_schedulable, r.yw_iterations,
            r.yw_micros
        ),
    ]
}

pub const STATS_CSV_HEADER: &str = "win,tie,lose,max_gap_percent,min_gap_percent,avg_gap_percent";

pub fn stats_csv_line(s: &CampaignStats) -> String {
    format!(
        "{},{},{},{:.2},{:.2},{:.2}",
        s.win, s.tie, s.lose, s.max_gap_percent, s.min_gap_percent, s.avg_gap_percent
    )
}
