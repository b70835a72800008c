//! System model: processing elements, task graphs, and tasks.
//!
//! A system is a set of processing elements (PEs), each either preemptive or
//! non-preemptive, and a set of periodic task graphs. A task graph releases
//! all of its source tasks together, once per period, with a bounded release
//! jitter; a non-source task is released when the last of its predecessors
//! finishes. Each task is mapped to one PE and has a priority that is unique
//! on that PE (larger number = higher priority).
//!
//! Models are immutable after construction. String identifiers are resolved
//! to dense indices at load time; all analysis code works on indices.

use serde::{Deserialize, Serialize};
use std::cmp::Reverse;
use std::collections::{BinaryHeap, HashMap};
use std::fmt;
use thiserror::Error;

/// Scheduling policy of a processing element.
#[derive(Clone, Copy, PartialEq, Eq, Debug, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Policy {
    Preemptive,
    NonPreemptive,
}

#[derive(Clone, Debug)]
pub struct ProcessingElement {
    pub id: String,
    pub policy: Policy,
}

#[derive(Clone, Debug)]
pub struct Task {
    pub id: String,
    /// Index of the owning graph.
    pub graph: usize,
    /// Index of the PE this task is mapped to.
    pub pe: usize,
    /// Larger number = higher priority. Unique per PE.
    pub priority: i64,
    pub bcet: u64,
    pub wcet: u64,
    /// Immediate predecessors (task indices, same graph).
    pub preds: Vec<usize>,
    /// Immediate successors (derived from `preds`).
    pub succs: Vec<usize>,
}

#[derive(Clone, Debug)]
pub struct TaskGraph {
    pub id: String,
    pub period: u64,
    pub jitter: u64,
    pub deadline: u64,
    /// Task indices belonging to this graph.
    pub tasks: Vec<usize>,
}

/// A fully linked system model with derived dependency relations.
#[derive(Clone, Debug)]
pub struct SystemModel {
    pub pes: Vec<ProcessingElement>,
    pub graphs: Vec<TaskGraph>,
    pub tasks: Vec<Task>,
    /// Global topological order; ties (no dependency relation) are broken by
    /// priority descending, then by task index.
    topo: Vec<usize>,
    /// `ancestors[t][s]` is true iff `s` is a (transitive) predecessor of `t`.
    ancestors: Vec<Vec<bool>>,
    /// `descendants[t][s]` is true iff `s` is a (transitive) successor of `t`.
    descendants: Vec<Vec<bool>>,
    /// True when some graph contains a dependency cycle. The topological
    /// order is then incomplete and analyses must not run (validate reports it).
    cyclic: bool,
}

/// A broken model invariant. Violations are data, not failures: `validate`
/// reports all of them and never panics.
#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum Violation {
    #[error("task {task}: bcet {bcet} exceeds wcet {wcet}")]
    ExecutionRangeInverted { task: String, bcet: u64, wcet: u64 },
    #[error("PE {pe}: tasks {a} and {b} share priority {priority}")]
    DuplicatePriority {
        pe: String,
        a: String,
        b: String,
        priority: i64,
    },
    #[error("graph {graph}: dependency cycle detected")]
    CycleDetected { graph: String },
    #[error("task {task}: predecessor {pred} belongs to a different graph")]
    CrossGraphEdge { task: String, pred: String },
    #[error("graph {graph}: period must be positive")]
    ZeroPeriod { graph: String },
    #[error("graph {graph}: deadline must be positive")]
    ZeroDeadline { graph: String },
    #[error("graph {graph}: deadline {deadline} exceeds period {period}")]
    DeadlineExceedsPeriod {
        graph: String,
        deadline: u64,
        period: u64,
    },
    #[error("task {task}: wcet must be positive")]
    ZeroWcet { task: String },
}

#[derive(Debug, Error)]
pub enum ParseError {
    #[error("syntax error: {0}")]
    Syntax(#[from] serde_json::Error),
    #[error("duplicate identifier {0}")]
    DuplicateId(String),
    #[error("{kind} {name}: unknown reference to {target}")]
    UnknownReference {
        kind: &'static str,
        name: String,
        target: String,
    },
    #[error("invalid model: {}", format_violations(.0))]
    Invalid(Vec<Violation>),
}

fn format_violations(vs: &[Violation]) -> String {
    vs.iter()
        .map(|v| v.to_string())
        .collect::<Vec<_>>()
        .join("; ")
}

// On-disk JSON schema. Unknown keys are rejected so that typos in hand-written
// fixtures fail loudly.

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SystemJson {
    pes: Vec<PeJson>,
    graphs: Vec<GraphJson>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PeJson {
    id: String,
    policy: Policy,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GraphJson {
    id: String,
    period: u64,
    #[serde(default)]
    jitter: u64,
    deadline: u64,
    tasks: Vec<TaskJson>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TaskJson {
    id: String,
    pe: String,
    priority: i64,
    bcet: u64,
    wcet: u64,
    #[serde(default)]
    preds: Vec<String>,
}

/// Parses a JSON document into a validated model. Fails on syntax errors,
/// unresolved or duplicate identifiers, and on any invariant violation.
pub fn parse_system(text: &str) -> Result<SystemModel, ParseError> {
    let raw: SystemJson = serde_json::from_str(text)?;

    let mut pe_index: HashMap<&str, usize> = HashMap::new();
    for (i, pe) in raw.pes.iter().enumerate() {
        if pe_index.insert(&pe.id, i).is_some() {
            return Err(ParseError::DuplicateId(pe.id.clone()));
        }
    }
    let mut graph_index: HashMap<&str, usize> = HashMap::new();
    let mut task_index: HashMap<&str, usize> = HashMap::new();
    let mut next_task = 0usize;
    for (g, graph) in raw.graphs.iter().enumerate() {
        if graph_index.insert(&graph.id, g).is_some() {
            return Err(ParseError::DuplicateId(graph.id.clone()));
        }
        for task in &graph.tasks {
            if task_index.insert(&task.id, next_task).is_some() {
                return Err(ParseError::DuplicateId(task.id.clone()));
            }
            next_task += 1;
        }
    }

    let pes: Vec<ProcessingElement> = raw
        .pes
        .iter()
        .map(|p| ProcessingElement {
            id: p.id.clone(),
            policy: p.policy,
        })
        .collect();

    let mut graphs = Vec::with_capacity(raw.graphs.len());
    let mut tasks: Vec<Task> = Vec::new();
    for (g, graph) in raw.graphs.iter().enumerate() {
        let mut members = Vec::with_capacity(graph.tasks.len());
        for tj in &graph.tasks {
            let pe = *pe_index
                .get(tj.pe.as_str())
                .ok_or_else(|| ParseError::UnknownReference {
                    kind: "task",
                    name: tj.id.clone(),
                    target: tj.pe.clone(),
                })?;
            let mut preds = Vec::with_capacity(tj.preds.len());
            for p in &tj.preds {
                let pi = *task_index
                    .get(p.as_str())
                    .ok_or_else(|| ParseError::UnknownReference {
                        kind: "task",
                        name: tj.id.clone(),
                        target: p.clone(),
                    })?;
                preds.push(pi);
            }
            members.push(tasks.len());
            tasks.push(Task {
                id: tj.id.clone(),
                graph: g,
                pe,
                priority: tj.priority,
                bcet: tj.bcet,
                wcet: tj.wcet,
                preds,
                succs: Vec::new(),
            });
        }
        graphs.push(TaskGraph {
            id: graph.id.clone(),
            period: graph.period,
            jitter: graph.jitter,
            deadline: graph.deadline,
            tasks: members,
        });
    }

    let model = SystemModel::from_parts(pes, graphs, tasks);
    let violations = model.validate();
    if !violations.is_empty() {
        return Err(ParseError::Invalid(violations));
    }
    Ok(model)
}

impl SystemModel {
    /// Links a model from its raw parts and derives the dependency relations.
    /// Does not validate; use [`SystemModel::validate`].
    pub fn from_parts(
        pes: Vec<ProcessingElement>,
        graphs: Vec<TaskGraph>,
        mut tasks: Vec<Task>,
    ) -> SystemModel {
        let n = tasks.len();
        // Derive successor lists.
        for t in 0..n {
            tasks[t].succs.clear();
        }
        let pred_lists: Vec<Vec<usize>> = tasks.iter().map(|t| t.preds.clone()).collect();
        for (t, preds) in pred_lists.iter().enumerate() {
            for &p in preds {
                tasks[p].succs.push(t);
            }
        }
        for t in 0..n {
            tasks[t].succs.sort_unstable();
            tasks[t].succs.dedup();
        }

        // Topological order via Kahn's algorithm; the ready set pops the
        // highest priority first, then the smallest index, so that tasks with
        // no dependency relation appear in priority-descending order.
        let mut indegree: Vec<usize> = tasks.iter().map(|t| t.preds.len()).collect();
        let mut ready: BinaryHeap<(i64, Reverse<usize>)> = BinaryHeap::new();
        for t in 0..n {
            if indegree[t] == 0 {
                ready.push((tasks[t].priority, Reverse(t)));
            }
        }
        let mut topo = Vec::with_capacity(n);
        while let Some((_, Reverse(t))) = ready.pop() {
            topo.push(t);
            for &s in &tasks[t].succs {
                indegree[s] -= 1;
                if indegree[s] == 0 {
                    ready.push((tasks[s].priority, Reverse(s)));
                }
            }
        }
        let cyclic = topo.len() < n;
        if cyclic {
            // Keep the order total so that other diagnostics still work.
            let mut seen = vec![false; n];
            for &t in &topo {
                seen[t] = true;
            }
            for t in 0..n {
                if !seen[t] {
                    topo.push(t);
                }
            }
        }

        // Transitive ancestor sets (cycle-safe DFS with memoization on the
        // acyclic part; on cycles the fixed point below still terminates).
        let mut ancestors = vec![vec![false; n]; n];
        for &t in &topo {
            let preds = tasks[t].preds.clone();
            for p in preds {
                ancestors[t][p] = true;
                for s in 0..n {
                    if ancestors[p][s] {
                        ancestors[t][s] = true;
                    }
                }
            }
        }
        let mut descendants = vec![vec![false; n]; n];
        for t in 0..n {
            for s in 0..n {
                if ancestors[t][s] {
                    descendants[s][t] = true;
                }
            }
        }

        SystemModel {
            pes,
            graphs,
            tasks,
            topo,
            ancestors,
            descendants,
            cyclic,
        }
    }

    /// Checks every model invariant and returns all violations found.
    pub fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        for g in &self.graphs {
            if g.period == 0 {
                out.push(Violation::ZeroPeriod {
                    graph: g.id.clone(),
                });
            }
            if g.deadline == 0 {
                out.push(Violation::ZeroDeadline {
                    graph: g.id.clone(),
                });
            }
            if g.deadline > g.period && g.period > 0 {
                out.push(Violation::DeadlineExceedsPeriod {
                    graph: g.id.clone(),
                    deadline: g.deadline,
                    period: g.period,
                });
            }
        }
        for t in &self.tasks {
            if t.bcet > t.wcet {
                out.push(Violation::ExecutionRangeInverted {
                    task: t.id.clone(),
                    bcet: t.bcet,
                    wcet: t.wcet,
                });
            }
            if t.wcet == 0 {
                out.push(Violation::ZeroWcet {
                    task: t.id.clone(),
                });
            }
            for &p in &t.preds {
                if self.tasks[p].graph != t.graph {
                    out.push(Violation::CrossGraphEdge {
                        task: t.id.clone(),
                        pred: self.tasks[p].id.clone(),
                    });
                }
            }
        }
        // Distinct priorities per PE.
        for (pi, pe) in self.pes.iter().enumerate() {
            let mut by_priority: HashMap<i64, usize> = HashMap::new();
            for (t, task) in self.tasks.iter().enumerate() {
                if task.pe != pi {
                    continue;
                }
                if let Some(&other) = by_priority.get(&task.priority) {
                    out.push(Violation::DuplicatePriority {
                        pe: pe.id.clone(),
                        a: self.tasks[other].id.clone(),
                        b: task.id.clone(),
                        priority: task.priority,
                    });
                } else {
                    by_priority.insert(task.priority, t);
                }
            }
        }
        if self.cyclic {
            // Attribute the cycle to each graph that contains one.
            for (g, graph) in self.graphs.iter().enumerate() {
                if self.graph_has_cycle(g) {
                    out.push(Violation::CycleDetected {
                        graph: graph.id.clone(),
                    });
                }
            }
        }
        out
    }

    fn graph_has_cycle(&self, g: usize) -> bool {
        let members = &self.graphs[g].tasks;
        let mut indegree: HashMap<usize, usize> = members
            .iter()
            .map(|&t| {
                (
                    t,
                    self.tasks[t]
                        .preds
                        .iter()
                        .filter(|&&p| self.tasks[p].graph == g)
                        .count(),
                )
            })
            .collect();
        let mut queue: Vec<usize> = members
            .iter()
            .copied()
            .filter(|t| indegree[t] == 0)
            .collect();
        let mut removed = 0;
        while let Some(t) = queue.pop() {
            removed += 1;
            for &s in &self.tasks[t].succs {
                if self.tasks[s].graph == g {
                    let d = indegree.get_mut(&s).unwrap();
                    *d -= 1;
                    if *d == 0 {
                        queue.push(s);
                    }
                }
            }
        }
        removed < members.len()
    }

    /// Serializes back to the input JSON schema.
    pub fn to_json(&self) -> String {
        let raw = SystemJson {
            pes: self
                .pes
                .iter()
                .map(|p| PeJson {
                    id: p.id.clone(),
                    policy: p.policy,
                })
                .collect(),
            graphs: self
                .graphs
                .iter()
                .map(|g| GraphJson {
                    id: g.id.clone(),
                    period: g.period,
                    jitter: g.jitter,
                    deadline: g.deadline,
                    tasks: g
                        .tasks
                        .iter()
                        .map(|&t| {
                            let task = &self.tasks[t];
                            TaskJson {
                                id: task.id.clone(),
                                pe: self.pes[task.pe].id.clone(),
                                priority: task.priority,
                                bcet: task.bcet,
                                wcet: task.wcet,
                                preds: task
                                    .preds
                                    .iter()
                                    .map(|&p| self.tasks[p].id.clone())
                                    .collect(),
                            }
                        })
                        .collect(),
                })
                .collect(),
        };
        serde_json::to_string_pretty(&raw).expect("model serialization cannot fail")
    }

    pub fn task_count(&self) -> usize {
        self.tasks.len()
    }

    pub fn is_source(&self, t: usize) -> bool {
        self.tasks[t].preds.is_empty()
    }

    /// True iff `s` is a transitive predecessor of `t`.
    pub fn is_ancestor(&self, s: usize, t: usize) -> bool {
        self.ancestors[t][s]
    }

    /// True iff `s` is a transitive successor of `t`.
    pub fn is_descendant(&self, s: usize, t: usize) -> bool {
        self.descendants[t][s]
    }

    /// True iff a directed dependency path connects `a` and `b` in either
    /// direction.
    pub fn has_path(&self, a: usize, b: usize) -> bool {
        self.ancestors[b][a] || self.ancestors[a][b]
    }

    /// Global topological order with priority-descending tie-breaking.
    pub fn topo_order(&self) -> &[usize] {
        &self.topo
    }

    pub fn same_graph(&self, a: usize, b: usize) -> bool {
        self.tasks[a].graph == self.tasks[b].graph
    }

    pub fn same_pe(&self, a: usize, b: usize) -> bool {
        self.tasks[a].pe == self.tasks[b].pe
    }

    pub fn policy_of(&self, t: usize) -> Policy {
        self.pes[self.tasks[t].pe].policy
    }

    pub fn graph_of(&self, t: usize) -> &TaskGraph {
        &self.graphs[self.tasks[t].graph]
    }

    pub fn period_of(&self, t: usize) -> u64 {
        self.graph_of(t).period
    }
}

impl fmt::Display for SystemModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} PEs, {} graphs, {} tasks",
            self.pes.len(),
            self.graphs.len(),
            self.tasks.len()
        )
    }
}
