//! Tightening optimizations on top of the base analysis.
//!
//! Exclusion sets prune tasks that provably cannot preempt a given task from
//! the interference candidate sets. Duplicate-preemption elimination walks the
//! critical path of a task's predecessors and removes preemption cost that the
//! base equations would otherwise charge both to an ancestor (pushing the
//! release later) and to the task itself.

use crate::hpa::AnalysisState;
use crate::model::Policy;

/// Result of the duplicate-preemption walk for one task.
pub struct DpResult {
    /// T^r: amount by which the effective latest release can be reduced.
    pub release_reduction: u64,
    /// T^s: foreign preemption cost moved from ancestors to this task.
    pub moved_foreign_delay: u64,
}

pub struct ExclusionSets {
    pub ex: Vec<Vec<bool>>,
}

/// Rebuilds all exclusion sets from the current bounds.
///
/// `ex[i][s]` holds when s can never preempt an instance of i: s is a
/// descendant of i, or i is guaranteed to finish before some ancestor of s
/// starts (i always preempts that ancestor), or transitively via another
/// excluded task.
pub fn update_exclusion_sets(st: &AnalysisState) -> ExclusionSets {
    let m = st.model;
    let n = m.tasks.len();
    let mut ex = vec![vec![false; n]; n];
    for i in 0..n {
        for s in 0..n {
            ex[i][s] = m.is_descendant(s, i);
        }
    }
    for s in 0..n {
        for p in 0..n {
            if !m.is_ancestor(p, s) {
                continue;
            }
            for i in 0..n {
                if !ex[i][s] && st.always_preempts(p, i) {
                    ex[i][s] = true;
                }
            }
        }
    }
    // Transitive closure: s ∈ ex[j] and j ∈ ex[i] imply s ∈ ex[i].
    loop {
        let mut changed = false;
        for i in 0..n {
            for j in 0..n {
                if !ex[i][j] {
                    continue;
                }
                for s in 0..n {
                    if ex[j][s] && !ex[i][s] {
                        ex[i][s] = true;
                        changed = true;
                    }
                }
            }
        }
        if !changed {
            return ExclusionSets { ex };
        }
    }
}

/// Duplicate-preemption elimination for task `t`.
///
/// Repeats the critical-path walk with the previous (T^r, T^s) estimate until
/// it reproduces itself; gives up (returns zeros) if it fails to converge
/// within graph-size + 1 rounds.
pub fn remove_duplicate_preemptions(t: usize, st: &AnalysisState) -> DpResult {
    let m = st.model;
    if m.is_source(t) {
        return DpResult {
            release_reduction: 0,
            moved_foreign_delay: 0,
        };
    }
    // The reduction is only safe when the predecessor that pins maxR is
    // itself release-limited by a cross-PE chain; the walk moves that foreign
    // cost onto t instead.
    let cross_detect = m.tasks[t]
        .preds
        .iter()
        .any(|&p| st.bounds[p].max_f == st.bounds[t].max_r && st.detect[p]);
    let rounds = m.graph_of(t).tasks.len() + 1;
    let mut prev = (0u64, 0u64);
    for _ in 0..rounds {
        let mut walk = Walk {
            st,
            t,
            seed_reduction: prev.0,
            cross_detect,
            moved: 0,
            interfered: vec![false; m.tasks.len()],
        };
        let t_r = walk.recurse(t);
        let cur = (t_r, walk.moved);
        if cur == prev {
            return DpResult {
                release_reduction: cur.0,
                moved_foreign_delay: cur.1,
            };
        }
        prev = cur;
    }
    DpResult {
        release_reduction: 0,
        moved_foreign_delay: 0,
    }
}

struct Walk<'a, 'm> {
    st: &'a AnalysisState<'m>,
    t: usize,
    /// T^r_t from the previous round, used in the interference window test.
    seed_reduction: u64,
    cross_detect: bool,
    /// Accumulated T^s.
    moved: u64,
    /// Tasks already charged once along this walk.
    interfered: Vec<bool>,
}

impl Walk<'_, '_> {
    /// Walks from `c` up the critical path, returning the reduction available
    /// at `c`.
    fn recurse(&mut self, c: usize) -> u64 {
        let st = self.st;
        let m = st.model;
        let t = self.t;
        let n = m.tasks.len();
        let mut extra = 0u64;

        if c != t {
            // Same-graph interference on c that the target also pays for.
            for s in 0..n {
                if self.in_set_j(c, s) {
                    extra += m.tasks[s].wcet;
                    self.interfered[s] = true;
                }
            }
        }
        if self.cross_detect {
            // Foreign preemptions charged to c whose cost moves onto t.
            for s in 0..n {
                if self.in_set_k(c, s) {
                    let cost = st.preemption_count(c, s) * m.tasks[s].wcet;
                    extra += cost;
                    self.moved += cost;
                    self.interfered[s] = true;
                }
            }
        }

        let Some(cri1) = st.critical_pred(c) else {
            return extra;
        };
        let mut reduction = self.recurse(cri1);
        if c != t {
            // Tasks that could fill the freed window at c cancel part of the
            // reduction.
            let mut refill = 0u64;
            for s in 0..n {
                if self.in_set_l(c, s, reduction) {
                    let window =
                        st.bounds[s].max_f as i64 - (st.bounds[c].max_r as i64 - reduction as i64);
                    refill += m.tasks[s].wcet.min(window.max(0) as u64);
                }
            }
            reduction = reduction.saturating_sub(refill);
        }
        match st.second_pred(c) {
            // A second predecessor pins the release once the critical one is
            // pulled level with it.
            Some(cri2) => reduction.min(st.bounds[cri1].max_f - st.bounds[cri2].max_f) + extra,
            None => reduction + extra,
        }
    }

    /// Same-graph higher-priority tasks charged to c that also interfere with
    /// the target window.
    fn in_set_j(&self, c: usize, s: usize) -> bool {
        let st = self.st;
        let m = st.model;
        let t = self.t;
        if self.interfered[s] || s == t {
            return false;
        }
        // The execution-window pattern is only a real charge on a preemptive
        // ancestor; a non-preemptive task pays nothing while it runs.
        let charged = st.in_set_d(c, s, st.bounds[c].max_s)
            || (m.policy_of(c) == Policy::Preemptive
                && st.in_set_g(c, s, st.bounds[c].max_f));
        if !charged {
            return false;
        }
        // An excluded task releases only after the target finishes, so any
        // charge of it along the path to the target's release is impossible
        // and removable outright, with no window overlap to test.
        if st.excluded(t, s) {
            return true;
        }
        m.same_pe(s, t)
            && m.tasks[s].priority > m.tasks[t].priority
            && (st.bounds[t].max_r as i64 - self.seed_reduction as i64)
                < st.bounds[s].max_f as i64
    }

    /// Foreign tasks whose ceiling count at c is nonzero.
    fn in_set_k(&self, c: usize, s: usize) -> bool {
        let st = self.st;
        let m = st.model;
        let t = self.t;
        !self.interfered[s]
            && !m.same_graph(t, s)
            && st.preemption_count(c, s) != 0
            && m.same_pe(s, t)
            && m.tasks[s].priority > m.tasks[t].priority
    }

    /// Tasks not already charged to c that could occupy the freed window at c.
    fn in_set_l(&self, c: usize, s: usize, reduction: u64) -> bool {
        let st = self.st;
        let m = st.model;
        if s == c || !m.same_graph(c, s) || !m.same_pe(s, c) {
            return false;
        }
        // Same policy gating as in_set_j: only charges the ancestor really
        // pays exempt s from refilling the freed window.
        if st.in_set_d(c, s, st.bounds[c].max_s)
            || (m.policy_of(c) == Policy::Preemptive
                && st.in_set_g(c, s, st.bounds[c].max_f))
        {
            return false;
        }
        if st.excluded(c, s) || m.is_ancestor(s, c) {
            return false;
        }
        // On a non-preemptive PE lower-priority tasks can also occupy the
        // window, so the priority filter only applies when preemptive.
        if m.policy_of(c) == Policy::Preemptive && m.tasks[s].priority <= m.tasks[c].priority {
            return false;
        }
        st.bounds[s].min_s <= st.bounds[c].max_r
            && (st.bounds[c].max_r as i64 - reduction as i64) < st.bounds[s].max_f as i64
    }
}
