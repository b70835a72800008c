//! Randomized invariant checks across generated systems.

use hpa_core::expgen::{self, GenParams, JitterMode, Topology};
use hpa_core::hpa::{analyze, analyze_with_state, AnalysisOptions};
use hpa_core::model::parse_system;
use hpa_core::num::{ceil_div, emod};
use hpa_core::oracle::{self, Scenario};
use proptest::prelude::*;

fn gen_params(seed: u64) -> GenParams {
    GenParams {
        pes: 1 + (seed % 3) as usize,
        graphs: 1 + ((seed >> 2) % 3) as usize,
        tasks_per_graph: (2, 5),
        topology: if seed % 2 == 0 {
            Topology::Layered
        } else {
            Topology::Chain
        },
        jitter: if seed % 5 == 0 {
            JitterMode::TenthOfPeriod
        } else {
            JitterMode::Zero
        },
        ..GenParams::default()
    }
}

fn generated(seed: u64) -> hpa_core::model::SystemModel {
    expgen::generate(&gen_params(seed), seed).expect("generation with repair")
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn emod_is_a_euclidean_remainder(a in -100_000i64..100_000, m in 1u64..10_000) {
        let r = emod(a, m);
        prop_assert!(r < m);
        prop_assert_eq!((a - r as i64).rem_euclid(m as i64), 0);
    }

    #[test]
    fn ceil_div_is_the_least_sufficient_quotient(a in -100_000i64..100_000, b in 1i64..10_000) {
        let q = ceil_div(a, b);
        prop_assert!(q * b >= a);
        prop_assert!((q - 1) * b < a);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn models_round_trip_through_json(seed in 0u64..10_000) {
        let m = generated(seed);
        let text = m.to_json();
        let again = parse_system(&text).unwrap();
        prop_assert_eq!(text, again.to_json());
    }

    #[test]
    fn analysis_bounds_are_ordered(seed in 0u64..10_000) {
        let m = generated(seed);
        let r = analyze(&m, AnalysisOptions::default()).unwrap();
        prop_assert!(r.converged);
        for b in &r.per_task_bounds {
            prop_assert!(b.min_r <= b.min_s && b.min_s <= b.min_f);
            prop_assert!(b.max_r <= b.max_s && b.max_s <= b.max_f);
            prop_assert!(b.min_r <= b.max_r && b.min_s <= b.max_s && b.min_f <= b.max_f);
            prop_assert!(b.reduced_max_r <= b.max_r);
        }
    }

    #[test]
    fn phases_respect_their_ranges(seed in 0u64..10_000) {
        let m = generated(seed);
        let (_, st) = analyze_with_state(&m, AnalysisOptions::default()).unwrap();
        let n = m.tasks.len();
        for t in 0..n {
            for i in 0..n {
                if m.same_graph(t, i) {
                    continue;
                }
                prop_assert!(st.request_phase(t, i) >= -(st.period_shift(t, i) as i64));
                let preemptor = m.same_pe(t, i)
                    && m.tasks[i].priority > m.tasks[t].priority;
                if preemptor {
                    let p = m.period_of(i) as i64;
                    prop_assert!((0..p).contains(&st.start_phase(t, i)));
                }
            }
        }
    }

    #[test]
    fn simulated_times_stay_inside_the_analytic_bounds(seed in 0u64..10_000) {
        let m = generated(seed);
        let r = analyze(&m, AnalysisOptions::default()).unwrap();
        prop_assert!(r.schedulable);
        let horizon = oracle::default_horizon(&m);
        let sim = oracle::simulate(&m, &Scenario::nominal(&m), horizon);
        for job in &sim.jobs {
            let Some(finish) = job.finish else { continue };
            let b = &r.per_task_bounds[job.task];
            let rel = job.ready - job.nominal_release;
            prop_assert!(b.min_r <= rel && rel <= b.max_r, "release of {}", job.task);
            let start = job.start.unwrap() - job.nominal_release;
            prop_assert!(b.min_s <= start && start <= b.max_s, "start of {}", job.task);
            let fin = finish - job.nominal_release;
            prop_assert!(b.min_f <= fin && fin <= b.max_f, "finish of {}", job.task);
        }
        let mc = oracle::monte_carlo_wcrt(&m, 100, seed, None);
        for (g, &observed) in mc.per_graph_max.iter().enumerate() {
            prop_assert!(observed <= r.per_graph_wcrt[g]);
        }
    }

    #[test]
    fn optimizations_only_tighten(seed in 0u64..10_000) {
        // A combo that fails to converge yields no bound and is skipped.
        let m = generated(seed);
        let combos = |exclusion, dp_elimination| {
            let r = analyze(&m, AnalysisOptions { exclusion, dp_elimination, max_iterations: 1000 })
                .unwrap();
            r.converged.then_some(r.per_graph_wcrt)
        };
        let both = combos(true, true);
        let only_ex = combos(true, false);
        let only_dp = combos(false, true);
        let neither = combos(false, false);
        prop_assert!(both.is_some());
        for (weak, strong) in [(&neither, &only_ex), (&neither, &only_dp),
                               (&only_ex, &both), (&only_dp, &both)] {
            prop_assert!(weak.is_none() || strong.is_some());
            if let (Some(w), Some(s)) = (weak, strong) {
                for g in 0..m.graphs.len() {
                    prop_assert!(s[g] <= w[g]);
                }
            }
        }
    }

    #[test]
    fn occupancy_is_bounded_and_additive(seed in 0u64..10_000, x in 0u64..200, len1 in 0u64..200, len2 in 0u64..200) {
        let m = generated(seed);
        let sim = oracle::simulate(&m, &Scenario::nominal(&m), oracle::default_horizon(&m));
        let (y, z) = (x + len1, x + len1 + len2);
        for t in 0..m.tasks.len() {
            let whole = oracle::occupancy(&m, &sim, t, x, z);
            prop_assert!(whole <= z - x);
            prop_assert_eq!(
                whole,
                oracle::occupancy(&m, &sim, t, x, y) + oracle::occupancy(&m, &sim, t, y, z)
            );
        }
    }

    #[test]
    fn monte_carlo_grows_with_its_sample_prefix(seed in 0u64..10_000) {
        let m = generated(seed);
        let small = oracle::monte_carlo_wcrt(&m, 40, seed, None);
        let large = oracle::monte_carlo_wcrt(&m, 80, seed, None);
        for g in 0..m.graphs.len() {
            prop_assert!(small.per_graph_max[g] <= large.per_graph_max[g]);
        }
    }

    #[test]
    fn foreign_arrivals_respect_the_period_shift(seed in 0u64..10_000) {
        // In the nominal schedule, the number of arrivals of a foreign task i
        // inside [maxR_t, maxF_t] never exceeds the shifted ceiling bound.
        let m = generated(seed);
        let (r, st) = analyze_with_state(&m, AnalysisOptions::default()).unwrap();
        let sim = oracle::simulate(&m, &Scenario::nominal(&m), oracle::default_horizon(&m));
        for t in 0..m.tasks.len() {
            let b = &r.per_task_bounds[t];
            for i in 0..m.tasks.len() {
                if m.same_graph(t, i) {
                    continue;
                }
                let arrivals = sim
                    .jobs
                    .iter()
                    .filter(|j| j.task == i && b.max_r <= j.ready && j.ready <= b.max_f)
                    .count() as u64;
                let window = b.max_f - b.max_r + st.period_shift(t, i);
                let bound = ceil_div(window as i64, m.period_of(i) as i64).max(0) as u64;
                // An arrival exactly at the window edge still counts once.
                prop_assert!(arrivals <= bound + 1);
            }
        }
    }
}
