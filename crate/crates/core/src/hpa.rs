//! Hybrid WCRT analysis.
//!
//! Tasks of one graph are scheduled against each other with explicit
//! [min, max] windows for release, start, and finish times, while interference
//! from other graphs enters through response-time-analysis style ceiling terms
//! driven by per-pair phases (request/start/finish) and period-shift amounts.
//! Everything is wrapped in an outer fixed-point loop: full sweeps over all
//! tasks in topological (then priority-descending) order, followed by
//! period-shift and exclusion-set updates, until the whole state vector stops
//! changing or a deadline is violated.
//!
//! Sign conventions: times are unsigned ticks, phases are signed (a negative
//! request phase acts as a period shift). Phase wrapping uses Euclidean
//! modulo.

use crate::model::{Policy, SystemModel, Violation};
use crate::num::{ceil_div, emod};
use crate::opt;
use thiserror::Error;

/// Toggles for the tightening optimizations and the outer iteration cap.
#[derive(Clone, Copy, Debug)]
pub struct AnalysisOptions {
    /// Maintain exclusion sets (tasks provably unable to preempt) and apply
    /// them to the candidate sets.
    pub exclusion: bool,
    /// Duplicate-preemption elimination: reduce effective release times along
    /// the critical path and move foreign preemption delay to the target.
    pub dp_elimination: bool,
    /// Outer sweep cap; exceeding it reports converged = false.
    pub max_iterations: u32,
}

impl Default for AnalysisOptions {
    fn default() -> Self {
        AnalysisOptions {
            exclusion: true,
            dp_elimination: true,
            max_iterations: 1000,
        }
    }
}

/// Per-task scheduling time bounds. `reduced_max_r` is the effective maximum
/// release after duplicate-preemption elimination; it equals `max_r` when the
/// optimization is off.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct TimeBounds {
    pub min_r: u64,
    pub max_r: u64,
    pub min_s: u64,
    pub max_s: u64,
    pub min_f: u64,
    pub max_f: u64,
    pub reduced_max_r: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AnalysisResult {
    /// Worst-case response time per graph: max over member tasks of maxF,
    /// measured from the graph's earliest possible release (time 0).
    pub per_graph_wcrt: Vec<u64>,
    pub per_task_bounds: Vec<TimeBounds>,
    pub converged: bool,
    pub iterations: u32,
    /// True iff every graph's WCRT is within its deadline (and no inner
    /// fixed point diverged past its horizon).
    pub schedulable: bool,
}

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("invalid model: {0:?}")]
    InvalidModel(Vec<Violation>),
}

/// Full mutable state of one analysis run. Exposed so that tests can drive
/// individual computations and inspect pair-wise quantities.
pub struct AnalysisState<'m> {
    pub model: &'m SystemModel,
    pub opts: AnalysisOptions,
    pub bounds: Vec<TimeBounds>,
    request_phase: Vec<i64>,
    start_phase: Vec<i64>,
    finish_phase: Vec<i64>,
    period_shift: Vec<u64>,
    delta: Vec<u64>,
    /// Most recent ceiling count per (task, foreign task) from the maxS
    /// computation.
    preemption_count: Vec<u64>,
    /// True when the release-time reduction of the task is limited by a
    /// predecessor on a different PE (inherited along the critical path).
    pub detect: Vec<bool>,
    /// T^r: release-time reduction from duplicate-preemption elimination.
    pub release_reduction: Vec<u64>,
    /// T^s: foreign preemption delay moved from ancestors to the task.
    pub moved_delay: Vec<u64>,
    /// Exclusion sets: `exclusion[i][s]` means s can never preempt i.
    pub exclusion: Vec<Vec<bool>>,
    pub iteration: u32,
    /// Set when an inner fixed point exceeded its deadline horizon.
    pub diverged: bool,
    n: usize,
}

impl<'m> AnalysisState<'m> {
    pub fn new(model: &'m SystemModel, opts: AnalysisOptions) -> Self {
        let n = model.tasks.len();
        let mut st = AnalysisState {
            model,
            opts,
            bounds: vec![TimeBounds::default(); n],
            request_phase: vec![0; n * n],
            start_phase: vec![0; n * n],
            finish_phase: vec![0; n * n],
            period_shift: vec![0; n * n],
            delta: vec![0; n * n],
            preemption_count: vec![0; n * n],
            detect: vec![false; n],
            release_reduction: vec![0; n],
            moved_delay: vec![0; n],
            exclusion: vec![vec![false; n]; n],
            iteration: 0,
            diverged: false,
            n,
        };
        // Period shifts start at the jitter of the foreign graph; exclusion
        // sets start as the descendant sets.
        for t in 0..n {
            for i in 0..n {
                if !model.same_graph(t, i) {
                    st.period_shift[t * n + i] = model.graph_of(i).jitter;
                }
                st.exclusion[t][i] = model.is_descendant(i, t);
            }
        }
        st
    }

    #[inline]
    fn ix(&self, t: usize, i: usize) -> usize {
        t * self.n + i
    }

    pub fn request_phase(&self, t: usize, i: usize) -> i64 {
        self.request_phase[self.ix(t, i)]
    }
    pub fn start_phase(&self, t: usize, i: usize) -> i64 {
        self.start_phase[self.ix(t, i)]
    }
    pub fn finish_phase(&self, t: usize, i: usize) -> i64 {
        self.finish_phase[self.ix(t, i)]
    }
    pub fn period_shift(&self, t: usize, i: usize) -> u64 {
        self.period_shift[self.ix(t, i)]
    }
    pub fn delta(&self, t: usize, i: usize) -> u64 {
        self.delta[self.ix(t, i)]
    }
    pub fn preemption_count(&self, t: usize, i: usize) -> u64 {
        self.preemption_count[self.ix(t, i)]
    }

    pub(crate) fn excluded(&self, t: usize, s: usize) -> bool {
        self.opts.exclusion && self.exclusion[t][s]
    }

    /// Inner fixed points abort once the evolving bound exceeds the task's
    /// release plus the graph deadline; the system is then unschedulable.
    fn horizon(&self, t: usize) -> u64 {
        self.bounds[t].max_r + self.model.graph_of(t).deadline
    }

    // ----- candidate sets -------------------------------------------------

    /// Same-graph tasks that always delay the earliest start of `t`.
    /// `min_s_cur` is the evolving minS value of `t`.
    fn in_set_a(&self, t: usize, s: usize, min_s_cur: u64) -> bool {
        let m = self.model;
        if s == t || !m.same_graph(t, s) || !m.same_pe(t, s) || self.excluded(t, s) {
            return false;
        }
        let (bt, bs) = (&self.bounds[t], &self.bounds[s]);
        let higher = m.tasks[s].priority > m.tasks[t].priority
            && bt.min_r < bs.min_f
            && bs.max_s <= min_s_cur;
        match m.policy_of(t) {
            Policy::Preemptive => higher,
            Policy::NonPreemptive => {
                higher
                    || (m.tasks[s].priority < m.tasks[t].priority
                        && bs.max_s < bt.min_r
                        && bt.min_r < bs.min_f)
            }
        }
    }

    /// Same-graph lower-priority tasks that may block `t`'s start on a
    /// non-preemptive PE.
    fn in_set_b(&self, t: usize, s: usize) -> bool {
        let m = self.model;
        if s == t || !m.same_graph(t, s) || !m.same_pe(t, s) || self.excluded(t, s) {
            return false;
        }
        if self.opts.dp_elimination && m.is_ancestor(s, t) {
            return false;
        }
        let (bt, bs) = (&self.bounds[t], &self.bounds[s]);
        // With DP-elimination the blocking window is anchored at the reduced
        // release.
        let anchor = bt.reduced_max_r;
        m.tasks[s].priority < m.tasks[t].priority && bs.min_s < anchor && anchor < bs.max_f
    }

    /// Lower-priority tasks of other graphs on `t`'s PE.
    fn in_set_c(&self, t: usize, s: usize) -> bool {
        let m = self.model;
        s != t
            && !m.same_graph(t, s)
            && m.same_pe(t, s)
            && m.tasks[s].priority < m.tasks[t].priority
    }

    /// Same-graph higher-priority tasks that can delay `t`'s start.
    /// `max_s_cur` is the evolving maxS value of `t`.
    pub(crate) fn in_set_d(&self, t: usize, s: usize, max_s_cur: u64) -> bool {
        self.in_set_d_at(t, s, max_s_cur, self.bounds[t].reduced_max_r)
    }

    /// Like [`Self::in_set_d`] but with an explicit release anchor, so the
    /// start delay can also be evaluated without the walk's reduction.
    fn in_set_d_at(&self, t: usize, s: usize, max_s_cur: u64, anchor: u64) -> bool {
        let m = self.model;
        if s == t || !m.same_graph(t, s) || !m.same_pe(t, s) || self.excluded(t, s) {
            return false;
        }
        if self.opts.dp_elimination && m.is_ancestor(s, t) {
            return false;
        }
        let bs = &self.bounds[s];
        m.tasks[s].priority > m.tasks[t].priority
            && bs.min_s <= max_s_cur
            && anchor < bs.max_f
    }

    /// Higher-priority tasks of other graphs on `t`'s PE (interference via
    /// ceiling terms).
    pub(crate) fn in_set_e(&self, t: usize, s: usize) -> bool {
        let m = self.model;
        s != t
            && !m.same_graph(t, s)
            && m.same_pe(t, s)
            && m.tasks[s].priority > m.tasks[t].priority
    }

    /// Same-graph tasks that necessarily preempt `t` before its earliest
    /// finish. `min_f_cur` is the evolving minF value of `t`.
    fn in_set_f(&self, t: usize, s: usize, min_f_cur: u64) -> bool {
        let m = self.model;
        if s == t || !m.same_graph(t, s) || !m.same_pe(t, s) || self.excluded(t, s) {
            return false;
        }
        let (bt, bs) = (&self.bounds[t], &self.bounds[s]);
        m.tasks[s].priority > m.tasks[t].priority
            && bt.min_s <= bs.min_s
            && bs.min_s <= bs.max_s
            && bs.max_s <= min_f_cur
    }

    /// Same-graph higher-priority tasks that can arrive while `t` executes.
    /// `max_f_cur` is the evolving maxF value of `t`.
    pub(crate) fn in_set_g(&self, t: usize, s: usize, max_f_cur: u64) -> bool {
        let m = self.model;
        if s == t || !m.same_graph(t, s) || !m.same_pe(t, s) || self.excluded(t, s) {
            return false;
        }
        let (bt, bs) = (&self.bounds[t], &self.bounds[s]);
        m.tasks[s].priority > m.tasks[t].priority
            && bt.max_s < bs.min_s
            && bs.min_s <= max_f_cur
    }

    /// Set A ∩ set F: tasks that always preempt `t` (consumed by the
    /// exclusion-set update).
    pub(crate) fn always_preempts(&self, t: usize, s: usize) -> bool {
        let b = &self.bounds[t];
        self.in_set_a(t, s, b.min_s) && self.in_set_f(t, s, b.min_f)
    }

    // ----- per-task bound computations ------------------------------------

    /// Release window: sources get (0, jitter); otherwise the max over
    /// predecessors of (minF, maxF).
    pub fn release_bounds(&self, t: usize) -> (u64, u64) {
        let m = self.model;
        if m.is_source(t) {
            (0, m.graph_of(t).jitter)
        } else {
            let min_r = m.tasks[t]
                .preds
                .iter()
                .map(|&p| self.bounds[p].min_f)
                .max()
                .unwrap();
            let max_r = m.tasks[t]
                .preds
                .iter()
                .map(|&p| self.bounds[p].max_f)
                .max()
                .unwrap();
            (min_r, max_r)
        }
    }

    /// Earliest start: release plus completion of same-graph tasks that are
    /// guaranteed to occupy the PE first. Self-referential through the
    /// candidate set, so iterated upward.
    pub fn min_start(&self, t: usize) -> u64 {
        let min_r = self.bounds[t].min_r;
        let mut v = min_r;
        loop {
            let mut next = min_r;
            for &s in &self.model.graph_of(t).tasks {
                if self.in_set_a(t, s, v) {
                    next = next.max(self.bounds[s].min_f);
                }
            }
            if next == v {
                return v;
            }
            v = next;
        }
    }

    /// Blocking by lower-priority tasks before `t` can start; only possible
    /// on non-preemptive PEs and only when some predecessor is elsewhere.
    pub fn delay_lower(&self, t: usize) -> u64 {
        self.delay_lower_at(t, self.bounds[t].reduced_max_r)
    }

    fn delay_lower_at(&self, t: usize, anchor: u64) -> u64 {
        let m = self.model;
        if m.policy_of(t) == Policy::NonPreemptive {
            if !m.is_source(t) && m.tasks[t].preds.iter().all(|&p| m.same_pe(p, t)) {
                return 0;
            }
            let mut d = 0u64;
            for s in 0..self.n {
                if m.same_pe(t, s) && self.in_set_b(t, s) {
                    d = d.max((self.bounds[s].max_f - anchor).min(m.tasks[s].wcet));
                } else if self.in_set_c(t, s) {
                    d = d.max(m.tasks[s].wcet);
                }
            }
            d
        } else {
            0
        }
    }

    /// Latest start: reduced release plus moved foreign delay, lower-priority
    /// blocking, and the higher-priority delay fixed point. Records the
    /// per-pair ceiling counts for duplicate-preemption elimination.
    pub fn max_start(&mut self, t: usize) -> Result<u64, Diverged> {
        let b = self.bounds[t];
        let Some(w) = self.start_fixed_point(t, b.reduced_max_r, self.moved_delay[t]) else {
            self.diverged = true;
            return Err(Diverged);
        };
        let best = if self.opts.dp_elimination {
            w.max(b.max_r)
        } else {
            w
        };
        for s in 0..self.n {
            if self.in_set_e(t, s) {
                let c = self.foreign_start_count(t, s, best);
                let ix = self.ix(t, s);
                self.preemption_count[ix] = c;
            }
        }
        Ok(best)
    }

    /// Fixed point of the latest-start delay from a given release anchor.
    /// Returns `None` when the delay exceeds the deadline horizon.
    fn start_fixed_point(&self, t: usize, anchor: u64, moved: u64) -> Option<u64> {
        let m = self.model;
        let base = anchor + moved + self.delay_lower_at(t, anchor);
        let cap = self.horizon(t);
        let mut w = base;
        loop {
            let mut total = base;
            for &s in &m.graph_of(t).tasks {
                if self.in_set_d_at(t, s, w, anchor) {
                    total += m.tasks[s].wcet.min(self.bounds[s].max_f - anchor);
                }
            }
            for s in 0..self.n {
                if self.in_set_e(t, s) {
                    total += self.foreign_start_count(t, s, w) * m.tasks[s].wcet;
                }
            }
            if total == w {
                return Some(w);
            }
            w = total;
            if w > cap {
                return None;
            }
        }
    }

    /// Number of arrivals of foreign task `s` delaying the start of `t`,
    /// given the evolving latest-start value `w`.
    fn foreign_start_count(&self, t: usize, s: usize, w: u64) -> u64 {
        let b = &self.bounds[t];
        // With DP-elimination the start delay is measured from the reduced
        // release, which may lie below maxR; clamp the elapsed part at zero.
        let elapsed = if self.opts.dp_elimination {
            (w as i64 - b.max_r as i64).max(0)
        } else {
            w as i64 - b.max_r as i64
        };
        let num = (elapsed + 1 - self.request_phase(t, s)).max(0);
        ceil_div(num, self.model.period_of(s) as i64).max(0) as u64
    }

    /// Earliest finish: earliest start plus BCET plus guaranteed preemptions
    /// (preemptive PEs only). Self-referential, iterated upward.
    pub fn min_finish(&self, t: usize) -> u64 {
        let m = self.model;
        let base = self.bounds[t].min_s + m.tasks[t].bcet;
        if m.policy_of(t) == Policy::NonPreemptive {
            return base;
        }
        let mut v = base;
        loop {
            let mut next = base;
            for &s in &m.graph_of(t).tasks {
                if self.in_set_f(t, s, v) {
                    next += m.tasks[s].bcet;
                }
            }
            if next == v {
                return v;
            }
            v = next;
        }
    }

    /// Latest finish: latest start plus WCET plus worst-case preemption during
    /// execution (zero on non-preemptive PEs).
    pub fn max_finish(&mut self, t: usize) -> Result<u64, Diverged> {
        let m = self.model;
        if m.policy_of(t) == Policy::NonPreemptive {
            return Ok(self.bounds[t].max_s + m.tasks[t].wcet);
        }
        let anchor = self.bounds[t].max_s;
        let base = anchor + m.tasks[t].wcet;
        let cap = self.horizon(t);
        let mut f = base;
        loop {
            let mut total = base;
            for &s in &m.graph_of(t).tasks {
                if self.in_set_g(t, s, f) {
                    total += m.tasks[s].wcet;
                }
            }
            for s in 0..self.n {
                if self.in_set_e(t, s) {
                    let num = (f as i64 - anchor as i64 - self.start_phase(t, s)).max(0);
                    let cnt = ceil_div(num, m.period_of(s) as i64).max(0) as u64;
                    total += cnt * m.tasks[s].wcet;
                }
            }
            if total == f {
                return Ok(f);
            }
            f = total;
            if f > cap {
                self.diverged = true;
                return Err(Diverged);
            }
        }
    }

    // ----- phases ----------------------------------------------------------

    /// Minimum distance from `t`'s latest release to the next arrival of
    /// foreign task `i` (negative values act as period shifts).
    pub fn request_phase_value(&self, t: usize, i: usize) -> i64 {
        let m = self.model;
        let shift = -(self.period_shift(t, i) as i64);
        let cross_pe_pred = m.tasks[t].preds.iter().any(|&p| !m.same_pe(p, t));
        // With DP-elimination active the cross-PE reset is suppressed: the
        // moved preemption delay already accounts for it.
        if m.is_source(t) || (cross_pe_pred && !self.opts.dp_elimination) {
            return shift;
        }
        let inherited = m.tasks[t]
            .preds
            .iter()
            .map(|&p| self.finish_phase(p, i) + self.bounds[p].max_f as i64)
            .min()
            .unwrap();
        shift.max(inherited - self.bounds[t].max_r as i64)
    }

    /// Same distance re-anchored at the latest start; wrapped into
    /// [0, period) when `i` can actually preempt `t`.
    pub fn start_phase_value(&self, t: usize, i: usize) -> i64 {
        let b = &self.bounds[t];
        let raw = self.request_phase(t, i) + b.max_r as i64 - b.max_s as i64;
        if self.in_set_e(t, i) {
            emod(raw, self.model.period_of(i)) as i64
        } else {
            raw
        }
    }

    /// Distance re-anchored at the latest finish; wrapping applies only on
    /// preemptive PEs (no arrivals land inside a non-preemptive execution).
    pub fn finish_phase_value(&self, t: usize, i: usize) -> i64 {
        let b = &self.bounds[t];
        let raw = self.start_phase(t, i) + b.max_s as i64 - b.max_f as i64;
        if self.in_set_e(t, i) && self.model.policy_of(t) == Policy::Preemptive {
            emod(raw, self.model.period_of(i)) as i64
        } else {
            raw
        }
    }

    /// Period-shift amount for foreign task `i` against target `t`: release
    /// variation of `i` plus the burst allowance δ.
    ///
    /// δ counts interference that delays `i`'s start but not `t`'s: foreign
    /// extra appearances and same-graph releases inside the look-back window
    /// before `t`'s latest release. The fixed point is seeded with `i`'s own
    /// start delay (maxS − maxR), the largest shift the alignment argument
    /// permits, and iterated to convergence.
    pub fn period_shift_value(&mut self, t: usize, i: usize) -> Result<u64, Diverged> {
        let m = self.model;
        let b_i = self.bounds[i];
        // Saturate: a mid-iteration sweep can transiently leave max_r below
        // min_r while a release reduction propagates through the graph.
        let release_var = b_i.max_r.saturating_sub(b_i.min_r);
        let cap = m.graph_of(t).deadline + m.period_of(i);
        let mut d = b_i.max_s.saturating_sub(b_i.max_r);
        for _ in 0..64 {
            let next = self.delta_step(t, i, d);
            if next == d {
                let ix = self.ix(t, i);
                self.delta[ix] = d;
                return Ok(release_var + d);
            }
            d = next;
            if d > cap {
                break;
            }
        }
        self.diverged = true;
        Err(Diverged)
    }

    fn delta_step(&self, t: usize, i: usize, d: u64) -> u64 {
        let m = self.model;
        let b_t = &self.bounds[t];
        let r_t = b_t.max_s as i64 - b_t.max_r as i64;
        let mut total = 0i64;
        for s in 0..self.n {
            if self.in_set_e(t, s) && m.tasks[s].priority > m.tasks[i].priority {
                let p = m.period_of(s) as i64;
                let with_burst = ceil_div(r_t + d as i64 + self.period_shift(t, s) as i64, p);
                let already = ceil_div(r_t - self.request_phase(t, s), p);
                total += (with_burst - already) * m.tasks[s].wcet as i64;
            }
        }
        let period = m.graph_of(t).period as i64;
        for &s in &m.graph_of(t).tasks {
            if m.tasks[s].priority <= m.tasks[i].priority {
                continue;
            }
            let (rt, rs) = (b_t.max_r as i64, self.bounds[s].max_r as i64);
            let current = rt - d as i64 <= rs && rs < rt;
            let previous = rt - d as i64 <= rs - period && rs - period < rt;
            if current || previous {
                total += m.tasks[s].wcet as i64;
            }
        }
        total.max(0) as u64
    }

    // ----- outer loop -------------------------------------------------------

    fn sweep(&mut self) -> Result<(), Diverged> {
        let order: Vec<usize> = self.model.topo_order().to_vec();
        for &t in &order {
            let (min_r, max_r) = self.release_bounds(t);
            self.bounds[t].min_r = min_r;
            self.bounds[t].max_r = max_r;
            self.bounds[t].min_s = self.min_start(t);
            self.bounds[t].min_f = self.min_finish(t);

            self.detect[t] = self.detect_flag(t);
            if self.opts.dp_elimination {
                let dp = opt::remove_duplicate_preemptions(t, self);
                self.release_reduction[t] = dp.release_reduction;
                self.moved_delay[t] = dp.moved_foreign_delay;
            } else {
                self.release_reduction[t] = 0;
                self.moved_delay[t] = 0;
            }
            self.bounds[t].reduced_max_r = max_r - self.release_reduction[t].min(max_r);

            for i in 0..self.n {
                if !self.model.same_graph(t, i) {
                    let v = self.request_phase_value(t, i);
                    let ix = self.ix(t, i);
                    self.request_phase[ix] = v;
                }
            }
            self.bounds[t].max_s = self.max_start(t)?;
            for i in 0..self.n {
                if !self.model.same_graph(t, i) {
                    let v = self.start_phase_value(t, i);
                    let ix = self.ix(t, i);
                    self.start_phase[ix] = v;
                }
            }
            self.bounds[t].max_f = self.max_finish(t)?;
            for i in 0..self.n {
                if !self.model.same_graph(t, i) {
                    let v = self.finish_phase_value(t, i);
                    let ix = self.ix(t, i);
                    self.finish_phase[ix] = v;
                }
            }
        }
        Ok(())
    }

    /// True when `t`'s release reduction is limited by a predecessor on a
    /// different PE; inherited along the critical path.
    fn detect_flag(&self, t: usize) -> bool {
        let m = self.model;
        if m.is_source(t) {
            return false;
        }
        if m.tasks[t].preds.iter().any(|&p| !m.same_pe(p, t)) {
            return true;
        }
        match self.critical_pred(t) {
            Some(p) => self.detect[p],
            None => false,
        }
    }

    /// Critical-path predecessor: the predecessor with the largest maxF
    /// (ties: larger wcet, then smaller id).
    pub(crate) fn critical_pred(&self, c: usize) -> Option<usize> {
        self.model.tasks[c]
            .preds
            .iter()
            .copied()
            .max_by(|&a, &b| self.pred_rank(a).cmp(&self.pred_rank(b)))
    }

    /// Second-largest predecessor by the same ranking.
    pub(crate) fn second_pred(&self, c: usize) -> Option<usize> {
        let cri1 = self.critical_pred(c)?;
        self.model.tasks[c]
            .preds
            .iter()
            .copied()
            .filter(|&p| p != cri1)
            .max_by(|&a, &b| self.pred_rank(a).cmp(&self.pred_rank(b)))
    }

    fn pred_rank(&self, p: usize) -> (u64, u64, std::cmp::Reverse<&str>) {
        (
            self.bounds[p].max_f,
            self.model.tasks[p].wcet,
            std::cmp::Reverse(self.model.tasks[p].id.as_str()),
        )
    }

    fn update_period_shifts(&mut self) -> Result<(), Diverged> {
        // Shifts are consumed stale: compute all new values from the current
        // matrix, then replace it.
        let mut next = self.period_shift.clone();
        for t in 0..self.n {
            for i in 0..self.n {
                if !self.model.same_graph(t, i) {
                    next[self.ix(t, i)] = self.period_shift_value(t, i)?;
                }
            }
        }
        self.period_shift = next;
        Ok(())
    }

    fn per_graph_wcrt(&self) -> Vec<u64> {
        self.model
            .graphs
            .iter()
            .map(|g| {
                g.tasks
                    .iter()
                    .map(|&t| self.bounds[t].max_f)
                    .max()
                    .unwrap_or(0)
            })
            .collect()
    }

    fn snapshot(&self) -> Snapshot {
        Snapshot {
            bounds: self.bounds.clone(),
            request_phase: self.request_phase.clone(),
            start_phase: self.start_phase.clone(),
            finish_phase: self.finish_phase.clone(),
            period_shift: self.period_shift.clone(),
            delta: self.delta.clone(),
            preemption_count: self.preemption_count.clone(),
            detect: self.detect.clone(),
            release_reduction: self.release_reduction.clone(),
            moved_delay: self.moved_delay.clone(),
            exclusion: self.exclusion.clone(),
        }
    }
}

/// An inner fixed point exceeded its deadline horizon: the system is
/// unschedulable and iteration stops.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Diverged;

#[derive(PartialEq)]
struct Snapshot {
    bounds: Vec<TimeBounds>,
    request_phase: Vec<i64>,
    start_phase: Vec<i64>,
    finish_phase: Vec<i64>,
    period_shift: Vec<u64>,
    delta: Vec<u64>,
    preemption_count: Vec<u64>,
    detect: Vec<bool>,
    release_reduction: Vec<u64>,
    moved_delay: Vec<u64>,
    exclusion: Vec<Vec<bool>>,
}

/// Runs the full analysis: repeated sweeps in topological
/// (priority-descending) order with period-shift and exclusion-set updates
/// between sweeps, until the state vector converges, a deadline is violated,
/// or the iteration cap is hit.
pub fn analyze(model: &SystemModel, opts: AnalysisOptions) -> Result<AnalysisResult, AnalysisError> {
    analyze_with_state(model, opts).map(|(r, _)| r)
}

/// Like [`analyze`] but also returns the final internal state for inspection.
///
/// With DP-elimination enabled the rearranged charges are sound but not
/// guaranteed to come out tighter than the plain equations everywhere, so a
/// second run with the optimization off is evaluated concurrently and the
/// published bounds are the intersection of whichever runs converged. This
/// keeps the optimization monotone: enabling it can only tighten the result.
pub fn analyze_with_state(
    model: &SystemModel,
    opts: AnalysisOptions,
) -> Result<(AnalysisResult, AnalysisState<'_>), AnalysisError> {
    let violations = model.validate();
    if !violations.is_empty() {
        return Err(AnalysisError::InvalidModel(violations));
    }
    if !opts.dp_elimination {
        return Ok(run_fixed_point(model, opts));
    }
    let plain_opts = AnalysisOptions {
        dp_elimination: false,
        max_iterations: opts.max_iterations.min(50),
        ..opts
    };
    let ((pr, pst), (sr, sst)) = std::thread::scope(|scope| {
        let plain = scope.spawn(|| run_fixed_point(model, plain_opts));
        let primary = run_fixed_point(model, opts);
        (primary, plain.join().expect("plain analysis thread"))
    });
    if !pr.converged {
        // The plain run stands on its own when the walk oscillates.
        return Ok(if sr.converged { (sr, sst) } else { (pr, pst) });
    }
    if !sr.converged {
        return Ok((pr, pst));
    }
    let per_task_bounds: Vec<TimeBounds> = pr
        .per_task_bounds
        .iter()
        .zip(&sr.per_task_bounds)
        .map(|(a, b)| TimeBounds {
            min_r: a.min_r.max(b.min_r),
            max_r: a.max_r.min(b.max_r),
            min_s: a.min_s.max(b.min_s),
            max_s: a.max_s.min(b.max_s),
            min_f: a.min_f.max(b.min_f),
            max_f: a.max_f.min(b.max_f),
            reduced_max_r: a.reduced_max_r.min(b.reduced_max_r),
        })
        .collect();
    let per_graph_wcrt: Vec<u64> = pr
        .per_graph_wcrt
        .iter()
        .zip(&sr.per_graph_wcrt)
        .map(|(&a, &b)| a.min(b))
        .collect();
    let schedulable = per_graph_wcrt
        .iter()
        .zip(&model.graphs)
        .all(|(&wcrt, g)| wcrt <= g.deadline);
    let result = AnalysisResult {
        per_graph_wcrt,
        per_task_bounds,
        converged: true,
        iterations: pr.iterations.max(sr.iterations),
        schedulable,
    };
    Ok((result, pst))
}

/// One raw fixed-point run with the given options, no fallback.
fn run_fixed_point(model: &SystemModel, opts: AnalysisOptions) -> (AnalysisResult, AnalysisState<'_>) {
    let mut st = AnalysisState::new(model, opts);
    let mut previous = st.snapshot();
    let mut converged = false;
    let mut deadline_violated = false;

    while st.iteration < opts.max_iterations {
        st.iteration += 1;
        if st.sweep().is_err() || st.update_period_shifts().is_err() {
            break;
        }
        if opts.exclusion {
            st.exclusion = opt::update_exclusion_sets(&st).ex;
        }
        if st
            .per_graph_wcrt()
            .iter()
            .zip(&model.graphs)
            .any(|(&wcrt, g)| wcrt > g.deadline)
        {
            deadline_violated = true;
            break;
        }
        let current = st.snapshot();
        if current == previous {
            converged = true;
            break;
        }
        previous = current;
    }

    let per_graph_wcrt = st.per_graph_wcrt();
    let schedulable = !st.diverged
        && !deadline_violated
        && converged
        && per_graph_wcrt
            .iter()
            .zip(&model.graphs)
            .all(|(&wcrt, g)| wcrt <= g.deadline);
    let result = AnalysisResult {
        per_graph_wcrt,
        per_task_bounds: st.bounds.clone(),
        converged,
        iterations: st.iteration,
        schedulable,
    };
    (result, st)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{parse_system, ProcessingElement, Task, TaskGraph};

    fn make(
        pes: Vec<Policy>,
        graphs: Vec<(u64, u64, u64)>,
        tasks: Vec<(usize, usize, i64, u64, u64, Vec<usize>)>,
    ) -> SystemModel {
        let pes = pes
            .into_iter()
            .enumerate()
            .map(|(i, policy)| ProcessingElement {
                id: format!("pe{i}"),
                policy,
            })
            .collect();
        let graphs = graphs
            .into_iter()
            .enumerate()
            .map(|(g, (period, jitter, deadline))| TaskGraph {
                id: format!("g{g}"),
                period,
                jitter,
                deadline,
                tasks: tasks
                    .iter()
                    .enumerate()
                    .filter(|(_, t)| t.0 == g)
                    .map(|(i, _)| i)
                    .collect(),
            })
            .collect();
        let tasks = tasks
            .into_iter()
            .enumerate()
            .map(|(i, (graph, pe, priority, bcet, wcet, preds))| Task {
                id: format!("t{i}"),
                graph,
                pe,
                priority,
                bcet,
                wcet,
                preds,
                succs: vec![],
            })
            .collect();
        SystemModel::from_parts(pes, graphs, tasks)
    }

    fn fixture(name: &str) -> SystemModel {
        let path = format!(
            "{}/../../fixtures/{name}.json",
            env!("CARGO_MANIFEST_DIR")
        );
        parse_system(&std::fs::read_to_string(path).unwrap()).unwrap()
    }

    #[test]
    fn release_bounds_of_a_source_span_the_jitter() {
        let m = make(
            vec![Policy::Preemptive],
            vec![(100, 5, 100)],
            vec![(0, 0, 1, 3, 3, vec![])],
        );
        let st = AnalysisState::new(&m, AnalysisOptions::default());
        assert_eq!(st.release_bounds(0), (0, 5));
    }

    #[test]
    fn release_bounds_take_the_max_over_predecessors() {
        let m = make(
            vec![Policy::Preemptive],
            vec![(100, 0, 100)],
            vec![
                (0, 0, 3, 1, 1, vec![]),
                (0, 0, 2, 1, 1, vec![]),
                (0, 0, 1, 1, 1, vec![0, 1]),
            ],
        );
        let mut st = AnalysisState::new(&m, AnalysisOptions::default());
        st.bounds[0].min_f = 3;
        st.bounds[0].max_f = 10;
        st.bounds[1].min_f = 7;
        st.bounds[1].max_f = 12;
        assert_eq!(st.release_bounds(2), (7, 12));
    }

    #[test]
    fn min_start_is_release_when_nothing_precedes() {
        let m = make(
            vec![Policy::Preemptive],
            vec![(100, 0, 100)],
            vec![(0, 0, 1, 3, 3, vec![])],
        );
        let mut st = AnalysisState::new(&m, AnalysisOptions::default());
        st.bounds[0].min_r = 4;
        assert_eq!(st.min_start(0), 4);
    }

    #[test]
    fn min_start_waits_for_a_guaranteed_earlier_task() {
        let m = make(
            vec![Policy::Preemptive],
            vec![(100, 0, 100)],
            vec![(0, 0, 1, 3, 3, vec![]), (0, 0, 2, 3, 3, vec![])],
        );
        let mut st = AnalysisState::new(&m, AnalysisOptions::default());
        st.bounds[0].min_r = 4;
        st.bounds[1].max_s = 3;
        st.bounds[1].min_f = 9;
        assert_eq!(st.min_start(0), 9);
    }

    #[test]
    fn delay_lower_is_zero_when_all_preds_share_the_pe() {
        let m = make(
            vec![Policy::NonPreemptive],
            vec![(100, 0, 100)],
            vec![(0, 0, 2, 3, 3, vec![]), (0, 0, 1, 3, 3, vec![0])],
        );
        let st = AnalysisState::new(&m, AnalysisOptions::default());
        assert_eq!(st.delay_lower(1), 0);
    }

    #[test]
    fn delay_lower_takes_a_foreign_lower_priority_wcet() {
        let m = make(
            vec![Policy::NonPreemptive],
            vec![(100, 0, 100), (100, 0, 100)],
            vec![(0, 0, 2, 3, 3, vec![]), (1, 0, 1, 7, 7, vec![])],
        );
        let st = AnalysisState::new(&m, AnalysisOptions::default());
        assert_eq!(st.delay_lower(0), 7);
    }

    #[test]
    fn delay_lower_clamps_partial_blocking_at_the_remaining_window() {
        let m = make(
            vec![Policy::NonPreemptive],
            vec![(100, 0, 100)],
            vec![(0, 0, 2, 3, 3, vec![]), (0, 0, 1, 9, 9, vec![])],
        );
        let mut st = AnalysisState::new(&m, AnalysisOptions::default());
        st.bounds[0].reduced_max_r = 10;
        st.bounds[1].min_s = 0;
        st.bounds[1].max_f = 14;
        // The blocker can only run for maxF - anchor = 4 of its 9 ticks.
        assert_eq!(st.delay_lower(0), 4);
    }

    #[test]
    fn max_start_without_interference_is_the_release() {
        let m = make(
            vec![Policy::Preemptive],
            vec![(100, 0, 100)],
            vec![(0, 0, 1, 3, 3, vec![])],
        );
        let mut st = AnalysisState::new(&m, AnalysisOptions::default());
        st.bounds[0].max_r = 5;
        st.bounds[0].reduced_max_r = 5;
        assert_eq!(st.max_start(0).unwrap(), 5);
    }

    #[test]
    fn max_start_fixed_point_counts_foreign_arrivals() {
        // One interferer with wcet 1 and period 2 against a target released at
        // 0: the fixed point settles at 1 extra tick.
        let m = make(
            vec![Policy::Preemptive],
            vec![(10, 0, 10), (2, 0, 2)],
            vec![(0, 0, 1, 1, 1, vec![]), (1, 0, 2, 1, 1, vec![])],
        );
        let mut st = AnalysisState::new(&m, AnalysisOptions::default());
        assert_eq!(st.max_start(0).unwrap(), 1);
        assert_eq!(st.preemption_count(0, 1), 1);
    }

    #[test]
    fn min_finish_adds_guaranteed_preemptions() {
        let m = make(
            vec![Policy::Preemptive],
            vec![(100, 0, 100)],
            vec![(0, 0, 1, 5, 5, vec![]), (0, 0, 2, 3, 3, vec![])],
        );
        let mut st = AnalysisState::new(&m, AnalysisOptions::default());
        st.bounds[1].min_s = 9;
        st.bounds[1].max_s = 9;
        assert_eq!(st.min_finish(0), 5);
        st.bounds[1].min_s = 2;
        st.bounds[1].max_s = 2;
        assert_eq!(st.min_finish(0), 8);
    }

    #[test]
    fn max_finish_on_nonpreemptive_pe_is_start_plus_wcet() {
        let m = make(
            vec![Policy::NonPreemptive],
            vec![(100, 0, 100)],
            vec![(0, 0, 1, 5, 5, vec![])],
        );
        let mut st = AnalysisState::new(&m, AnalysisOptions::default());
        st.bounds[0].max_s = 7;
        assert_eq!(st.max_finish(0).unwrap(), 12);
    }

    #[test]
    fn max_finish_adds_nothing_when_the_start_phase_covers_the_execution() {
        let m = make(
            vec![Policy::Preemptive],
            vec![(10, 0, 10), (2, 0, 2)],
            vec![(0, 0, 1, 1, 1, vec![]), (1, 0, 2, 1, 1, vec![])],
        );
        let mut st = AnalysisState::new(&m, AnalysisOptions::default());
        st.bounds[0].max_s = 1;
        let ix = st.ix(0, 1);
        st.start_phase[ix] = 1;
        assert_eq!(st.max_finish(0).unwrap(), 2);
    }

    #[test]
    fn request_phase_of_a_source_is_the_negated_shift() {
        let m = make(
            vec![Policy::Preemptive],
            vec![(100, 0, 100), (50, 0, 50)],
            vec![(0, 0, 1, 1, 1, vec![]), (1, 0, 2, 1, 1, vec![])],
        );
        let mut st = AnalysisState::new(&m, AnalysisOptions::default());
        let ix = st.ix(0, 1);
        st.period_shift[ix] = 3;
        assert_eq!(st.request_phase_value(0, 1), -3);
    }

    #[test]
    fn request_phase_inherits_the_earliest_predecessor_arrival() {
        let m = make(
            vec![Policy::Preemptive],
            vec![(100, 0, 100), (50, 0, 50)],
            vec![
                (0, 0, 3, 1, 1, vec![]),
                (0, 0, 2, 1, 1, vec![]),
                (0, 0, 1, 1, 1, vec![0, 1]),
                (1, 0, 4, 1, 1, vec![]),
            ],
        );
        let mut st = AnalysisState::new(&m, AnalysisOptions::default());
        let i = 3;
        let (a, b, c) = (st.ix(0, i), st.ix(1, i), st.ix(2, i));
        st.finish_phase[a] = 2;
        st.bounds[0].max_f = 10;
        st.finish_phase[b] = 7;
        st.bounds[1].max_f = 10;
        st.bounds[2].max_r = 10;
        st.period_shift[c] = 3;
        // max(-3, min(12, 17) - 10) = 2
        assert_eq!(st.request_phase_value(2, i), 2);
        // And the clamp engages when the inherited value falls below -P.
        st.finish_phase[a] = -6;
        st.finish_phase[b] = -6;
        assert_eq!(st.request_phase_value(2, i), -3);
    }

    #[test]
    fn start_phase_wraps_only_for_actual_preemptors() {
        let m = make(
            vec![Policy::Preemptive],
            vec![(100, 0, 100), (25, 0, 25)],
            vec![(0, 0, 1, 1, 1, vec![]), (1, 0, 2, 1, 1, vec![])],
        );
        let mut st = AnalysisState::new(&m, AnalysisOptions::default());
        let ix = st.ix(0, 1);
        st.request_phase[ix] = -4;
        st.bounds[0].max_r = 10;
        st.bounds[0].max_s = 20;
        // ((-4 + 10) - 20) mod 25 = 11
        assert_eq!(st.start_phase_value(0, 1), 11);
        // The higher-priority task keeps a raw (possibly negative) phase
        // against the lower-priority one: no wrap.
        let xi = st.ix(1, 0);
        st.request_phase[xi] = 3;
        st.bounds[1].max_r = 10;
        st.bounds[1].max_s = 20;
        assert_eq!(st.start_phase_value(1, 0), -7);
    }

    #[test]
    fn start_phase_is_zero_when_start_equals_release() {
        let m = make(
            vec![Policy::Preemptive],
            vec![(100, 0, 100), (25, 0, 25)],
            vec![(0, 0, 1, 1, 1, vec![]), (1, 0, 2, 1, 1, vec![])],
        );
        let mut st = AnalysisState::new(&m, AnalysisOptions::default());
        st.bounds[0].max_r = 10;
        st.bounds[0].max_s = 10;
        assert_eq!(st.start_phase_value(0, 1), 0);
    }

    #[test]
    fn finish_phase_wraps_on_preemptive_pes_only() {
        let preemptive = make(
            vec![Policy::Preemptive],
            vec![(100, 0, 100), (25, 0, 25)],
            vec![(0, 0, 1, 1, 1, vec![]), (1, 0, 2, 1, 1, vec![])],
        );
        let mut st = AnalysisState::new(&preemptive, AnalysisOptions::default());
        let ix = st.ix(0, 1);
        st.start_phase[ix] = 2;
        st.bounds[0].max_s = 10;
        st.bounds[0].max_f = 20;
        // (2 + 10 - 20) mod 25 = 17
        assert_eq!(st.finish_phase_value(0, 1), 17);

        let nonpreemptive = make(
            vec![Policy::NonPreemptive],
            vec![(100, 0, 100), (25, 0, 25)],
            vec![(0, 0, 1, 1, 1, vec![]), (1, 0, 2, 1, 1, vec![])],
        );
        let mut st = AnalysisState::new(&nonpreemptive, AnalysisOptions::default());
        let ix = st.ix(0, 1);
        st.start_phase[ix] = 2;
        st.bounds[0].max_s = 10;
        st.bounds[0].max_f = 20;
        assert_eq!(st.finish_phase_value(0, 1), -8);
    }

    #[test]
    fn period_shift_captures_the_delayed_foreign_start() {
        let m = fixture("fig3");
        let (r, st) = analyze_with_state(&m, AnalysisOptions::default()).unwrap();
        // The foreign task is pushed back by the source of the main graph; the
        // delay reappears as a burst allowance against the sink.
        assert_eq!(st.period_shift(1, 2), 10);
        assert_eq!(r.per_graph_wcrt[0], 40);
    }

    #[test]
    fn period_shift_and_start_on_the_shifting_example() {
        let m = fixture("pshift");
        let (_, mut st) = analyze_with_state(&m, AnalysisOptions::default()).unwrap();
        assert_eq!(st.bounds[3].max_s - st.bounds[3].min_r, 30);
        assert_eq!(st.period_shift(1, 3), 10);
        assert_eq!(st.delta(1, 3), 10);
        // At convergence recomputing the shift reproduces the stored value.
        assert_eq!(st.period_shift_value(1, 3).unwrap(), 10);
    }

    #[test]
    fn period_shift_is_zero_for_an_undisturbed_foreign_task() {
        let m = make(
            vec![Policy::Preemptive],
            vec![(10, 0, 10), (5, 0, 5)],
            vec![(0, 0, 1, 1, 1, vec![]), (1, 0, 2, 1, 1, vec![])],
        );
        let (_, st) = analyze_with_state(&m, AnalysisOptions::default()).unwrap();
        assert_eq!(st.period_shift(0, 1), 0);
    }

    #[test]
    fn analyze_single_task_is_jitter_plus_wcet() {
        let m = make(
            vec![Policy::Preemptive],
            vec![(20, 7, 20)],
            vec![(0, 0, 1, 5, 5, vec![])],
        );
        let r = analyze(&m, AnalysisOptions::default()).unwrap();
        assert_eq!(r.per_graph_wcrt[0], 12);
        assert!(r.schedulable);
    }

    #[test]
    fn analyze_bounds_are_ordered_and_deterministic() {
        for name in ["fig2", "fig3", "fig4", "fig5", "fig6", "fig11", "pshift"] {
            let m = fixture(name);
            let r = analyze(&m, AnalysisOptions::default()).unwrap();
            for b in &r.per_task_bounds {
                assert!(b.min_r <= b.max_r, "{name}: {b:?}");
                assert!(b.min_s <= b.max_s, "{name}: {b:?}");
                assert!(b.min_f <= b.max_f, "{name}: {b:?}");
                assert!(b.min_r <= b.min_s && b.min_s <= b.min_f, "{name}: {b:?}");
                assert!(b.max_r <= b.max_s && b.max_s <= b.max_f, "{name}: {b:?}");
                assert!(b.reduced_max_r <= b.max_r, "{name}: {b:?}");
            }
            assert_eq!(r, analyze(&m, AnalysisOptions::default()).unwrap());
        }
    }

    #[test]
    fn analyze_rejects_invalid_models() {
        let m = make(
            vec![Policy::Preemptive],
            vec![(10, 0, 10)],
            vec![(0, 0, 1, 9, 5, vec![])],
        );
        assert!(matches!(
            analyze(&m, AnalysisOptions::default()),
            Err(AnalysisError::InvalidModel(_))
        ));
    }
}
