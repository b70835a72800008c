//! Command-line front end.
//!
//! Exit codes: 0 on success with a schedulable/affirmative outcome, 1 when the
//! analysis says unschedulable (or did not converge, or an oracle run could
//! not be completed), 2 on usage errors and unreadable or invalid input.

use crate::expgen::{self, GenParams, JitterMode, Topology};
use crate::hpa::{self, AnalysisOptions};
use crate::model::{parse_system, SystemModel};
use crate::oracle;
use crate::yw;
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;
use std::fs;
use std::path::{Path, PathBuf};

#[derive(Parser)]
#[command(name = "hpa", version, about = "WCRT analysis for dependent task graphs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Format {
    Text,
    Json,
    Csv,
}

#[derive(Args)]
struct OutputOpts {
    /// Output format.
    #[arg(long, value_enum, default_value = "text")]
    format: Format,
    /// Write the report to this file (atomically) instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Run the hybrid analysis on a model file.
    Analyze {
        model: PathBuf,
        /// Disable the exclusion-set optimization.
        #[arg(long)]
        no_exclusion: bool,
        /// Disable duplicate-preemption elimination.
        #[arg(long)]
        no_dp_elim: bool,
        /// Outer iteration cap.
        #[arg(long, default_value_t = 1000)]
        max_iterations: u32,
        #[command(flatten)]
        output: OutputOpts,
    },
    /// Run the holistic baseline analysis on a model file.
    Yw {
        model: PathBuf,
        #[command(flatten)]
        output: OutputOpts,
    },
    /// Simulate the nominal scenario (zero phases, WCET everywhere).
    Simulate {
        model: PathBuf,
        /// Simulation horizon in ticks (default: two hyperperiods + jitter).
        #[arg(long)]
        horizon: Option<u64>,
        #[command(flatten)]
        output: OutputOpts,
    },
    /// Exhaustively enumerate scenarios within a budget.
    Enumerate {
        model: PathBuf,
        /// Maximum number of scenarios to simulate.
        #[arg(long, default_value_t = 1_000_000)]
        budget: u64,
        #[arg(long)]
        horizon: Option<u64>,
        #[command(flatten)]
        output: OutputOpts,
    },
    /// Sample random scenarios for empirical worst cases.
    Montecarlo {
        model: PathBuf,
        #[arg(long, default_value_t = 1000)]
        samples: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        horizon: Option<u64>,
        #[command(flatten)]
        output: OutputOpts,
    },
    /// Generate a random schedulable system and print it as JSON.
    Generate {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        gen: GenOpts,
        /// Write the model to this file instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Generate many systems and compare the two analyses.
    Campaign {
        #[arg(long, default_value_t = 100)]
        instances: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        gen: GenOpts,
        #[command(flatten)]
        output: OutputOpts,
    },
}

#[derive(Args)]
struct GenOpts {
    #[arg(long, default_value_t = 2)]
    pes: usize,
    #[arg(long, default_value_t = 3)]
    graphs: usize,
    #[arg(long, default_value_t = 3)]
    min_tasks: usize,
    #[arg(long, default_value_t = 6)]
    max_tasks: usize,
    #[arg(long, value_enum, default_value = "layered")]
    topology: TopologyOpt,
    #[arg(long, value_enum, default_value = "zero")]
    jitter: JitterOpt,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum TopologyOpt {
    Layered,
    Chain,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum JitterOpt {
    Zero,
    Tenth,
}

impl GenOpts {
    fn params(&self) -> GenParams {
        GenParams {
            pes: self.pes,
            graphs: self.graphs,
            tasks_per_graph: (self.min_tasks, self.max_tasks.max(self.min_tasks)),
            topology: match self.topology {
                TopologyOpt::Layered => Topology::Layered,
                TopologyOpt::Chain => Topology::Chain,
            },
            jitter: match self.jitter {
                JitterOpt::Zero => JitterMode::Zero,
                JitterOpt::Tenth => JitterMode::TenthOfPeriod,
            },
            ..GenParams::default()
        }
    }
}

/// Runs the CLI on the given argument list (first element is the program
/// name) and returns the process exit code.
pub fn run<I, S>(args: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            // clap uses 2 for usage errors and 0 for --help/--version.
            let code = e.exit_code();
            let _ = e.print();
            return if code == 0 { 0 } else { 2 };
        }
    };
    match dispatch(cli.command) {
        Ok(code) => code,
        Err(msg) => {
            eprintln!("error: {msg}");
            2
        }
    }
}

fn dispatch(cmd: Command) -> Result<i32, String> {
    match cmd {
        Command::Analyze {
            model,
            no_exclusion,
            no_dp_elim,
            max_iterations,
            output,
        } => {
            let m = load_model(&model)?;
            let opts = AnalysisOptions {
                exclusion: !no_exclusion,
                dp_elimination: !no_dp_elim,
                max_iterations,
            };
            let r = hpa::analyze(&m, opts).map_err(|e| e.to_string())?;
            let report = analysis_report(&m, "hpa", r.schedulable, r.converged, r.iterations,
                &r.per_graph_wcrt, output.format);
            emit(&report, output.out.as_deref())?;
            Ok(if r.schedulable { 0 } else { 1 })
        }
        Command::Yw { model, output } => {
            let m = load_model(&model)?;
            let r = yw::yw_analyze(&m).map_err(|e| e.to_string())?;
            let mut report = analysis_report(&m, "yw", r.schedulable, r.converged, r.iterations,
                &r.per_graph_wcrt, output.format);
            if output.format == Format::Text {
                report.insert_str(
                    0,
                    "warning: the holistic baseline is not guaranteed conservative; \
                     its bounds can fall below the true worst case\n",
                );
            }
            emit(&report, output.out.as_deref())?;
            Ok(if r.schedulable { 0 } else { 1 })
        }
        Command::Simulate { model, horizon, output } => {
            let m = load_model(&model)?;
            let h = horizon.unwrap_or_else(|| oracle::default_horizon(&m));
            let sim = oracle::simulate(&m, &oracle::Scenario::nominal(&m), h);
            let report = oracle_report(&m, "simulate", &sim.per_graph_max, None, output.format);
            emit(&report, output.out.as_deref())?;
            Ok(0)
        }
        Command::Enumerate { model, budget, horizon, output } => {
            let m = load_model(&model)?;
            match oracle::enumerate_wcrt(&m, budget, horizon) {
                Ok(r) => {
                    let report = oracle_report(&m, "enumerate", &r.per_graph_max,
                        Some(r.scenarios_run), output.format);
                    emit(&report, output.out.as_deref())?;
                    Ok(0)
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    Ok(1)
                }
            }
        }
        Command::Montecarlo { model, samples, seed, horizon, output } => {
            let m = load_model(&model)?;
            let r = oracle::monte_carlo_wcrt(&m, samples, seed, horizon);
            let mut report = oracle_report(&m, "montecarlo", &r.per_graph_max,
                Some(r.scenarios_run), output.format);
            if output.format == Format::Text {
                if let Ok(a) = hpa::analyze(&m, AnalysisOptions::default()) {
                    for (g, graph) in m.graphs.iter().enumerate() {
                        let ok = r.per_graph_max[g] <= a.per_graph_wcrt[g];
                        report.push_str(&format!(
                            "\n  {}: observed {} {} analytic bound {}",
                            graph.id,
                            r.per_graph_max[g],
                            if ok { "<=" } else { "EXCEEDS" },
                            a.per_graph_wcrt[g]
                        ));
                    }
                }
            }
            emit(&report, output.out.as_deref())?;
            Ok(0)
        }
        Command::Generate { seed, gen, out } => match expgen::generate(&gen.params(), seed) {
            Ok(m) => {
                emit(&m.to_json(), out.as_deref())?;
                Ok(0)
            }
            Err(e) => {
                eprintln!("error: {e}");
                Ok(1)
            }
        },
        Command::Campaign { instances, seed, gen, output } => {
            let r = expgen::run_campaign(&gen.params(), instances, seed);
            let report = campaign_report(&r, output.format);
            emit(&report, output.out.as_deref())?;
            Ok(0)
        }
    }
}

fn load_model(path: &Path) -> Result<SystemModel, String> {
    let text = fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    parse_system(&text).map_err(|e| format!("{}: {e}", path.display()))
}

/// Writes `content` to `path` via a temporary file and rename, or to stdout.
fn emit(content: &str, path: Option<&Path>) -> Result<(), String> {
    match path {
        None => {
            println!("{content}");
            Ok(())
        }
        Some(path) => {
            let dir = path.parent().filter(|p| !p.as_os_str().is_empty());
            let tmp = dir
                .unwrap_or_else(|| Path::new("."))
                .join(format!(".{}.tmp", std::process::id()));
            fs::write(&tmp, content).map_err(|e| format!("{}: {e}", tmp.display()))?;
            fs::rename(&tmp, path).map_err(|e| format!("{}: {e}", path.display()))
        }
    }
}

fn analysis_report(
    m: &SystemModel,
    method: &str,
    schedulable: bool,
    converged: bool,
    iterations: u32,
    wcrt: &[u64],
    format: Format,
) -> String {
    match format {
        Format::Text => {
            let mut s = format!(
                "{method}: {} ({} iterations{})\n",
                if schedulable { "schedulable" } else { "not schedulable" },
                iterations,
                if converged { "" } else { ", did not converge" },
            );
            for (g, graph) in m.graphs.iter().enumerate() {
                s.push_str(&format!(
                    "  {}: wcrt={} deadline={}\n",
                    graph.id, wcrt[g], graph.deadline
                ));
            }
            s.trim_end().to_string()
        }
        Format::Json => json!({
            "method": method,
            "schedulable": schedulable,
            "converged": converged,
            "iterations": iterations,
            "graphs": m.graphs.iter().enumerate().map(|(g, graph)| json!({
                "id": graph.id,
                "wcrt": wcrt[g],
                "deadline": graph.deadline,
                "schedulable": wcrt[g] <= graph.deadline,
            })).collect::<Vec<_>>(),
        })
        .to_string(),
        Format::Csv => {
            let mut s = String::from("graph,method,wcrt,deadline,schedulable\n");
            for (g, graph) in m.graphs.iter().enumerate() {
                s.push_str(&format!(
                    "{},{method},{},{},{}\n",
                    graph.id,
                    wcrt[g],
                    graph.deadline,
                    wcrt[g] <= graph.deadline
                ));
            }
            s.trim_end().to_string()
        }
    }
}

fn oracle_report(
    m: &SystemModel,
    method: &str,
    per_graph_max: &[u64],
    scenarios: Option<u64>,
    format: Format,
) -> String {
    match format {
        Format::Text => {
            let mut s = format!("{method}: max observed response per graph\n");
            for (g, graph) in m.graphs.iter().enumerate() {
                s.push_str(&format!("  {}: {}\n", graph.id, per_graph_max[g]));
            }
            if let Some(n) = scenarios {
                s.push_str(&format!("  scenarios: {n}\n"));
            }
            s.trim_end().to_string()
        }
        Format::Json => json!({
            "method": method,
            "scenarios": scenarios,
            "graphs": m.graphs.iter().enumerate().map(|(g, graph)| json!({
                "id": graph.id,
                "max_response": per_graph_max[g],
            })).collect::<Vec<_>>(),
        })
        .to_string(),
        Format::Csv => {
            let mut s = String::from("graph,method,max_response\n");
            for (g, graph) in m.graphs.iter().enumerate() {
                s.push_str(&format!("{},{method},{}\n", graph.id, per_graph_max[g]));
            }
            s.trim_end().to_string()
        }
    }
}

fn campaign_report(r: &expgen::CampaignResult, format: Format) -> String {
    match format {
        Format::Text => format!(
            "campaign: {} comparisons, {} failed instances\n  win={} tie={} lose={}\n  gap% max={:.2} min={:.2} avg={:.2}",
            r.rows.len(),
            r.failed_instances.len(),
            r.stats.win,
            r.stats.tie,
            r.stats.lose,
            r.stats.max_gap_percent,
            r.stats.min_gap_percent,
            r.stats.avg_gap_percent,
        ),
        Format::Json => json!({
            "stats": {
                "win": r.stats.win,
                "tie": r.stats.tie,
                "lose": r.stats.lose,
                "max_gap_percent": r.stats.max_gap_percent,
                "min_gap_percent": r.stats.min_gap_percent,
                "avg_gap_percent": r.stats.avg_gap_percent,
            },
            "failed_instances": r.failed_instances,
            "rows": r.rows.iter().map(|(i, row)| json!({
                "instance": i,
                "graph": row.graph,
                "hpa_wcrt": row.hpa_wcrt,
                "yw_wcrt": row.yw_wcrt,
                "deadline": row.deadline,
                "gap_percent": row.gap_percent,
            })).collect::<Vec<_>>(),
        })
        .to_string(),
        Format::Csv => {
            let mut s = String::from(expgen::CAMPAIGN_CSV_HEADER);
            s.push('\n');
            for (i, row) in &r.rows {
                for line in expgen::campaign_csv_lines(*i, row) {
                    s.push_str(&line);
                    s.push('\n');
                }
            }
            s.trim_end().to_string()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fixture(name: &str) -> String {
        format!("{}/../../fixtures/{name}.json", env!("CARGO_MANIFEST_DIR"))
    }

    fn cli(args: &[&str]) -> i32 {
        run(std::iter::once("hpa").chain(args.iter().copied()))
    }

    #[test]
    fn exit_codes_follow_the_verdict() {
        assert_eq!(cli(&["analyze", &fixture("fig3")]), 0);
        assert_eq!(cli(&["yw", &fixture("fig3")]), 0);
        assert_eq!(cli(&["--help"]), 0);
        assert_eq!(cli(&["analyze"]), 2);
        assert_eq!(cli(&["analyze", "/no/such/file.json"]), 2);
        assert_eq!(cli(&["frobnicate"]), 2);
    }

    #[test]
    fn unschedulable_systems_exit_one() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("overload.json");
        // Two 60-tick tasks sharing a PE with period 100 each: the lower
        // priority one cannot make its deadline.
        fs::write(
            &path,
            r#"{
                "pes": [{"id": "pe0", "policy": "preemptive"}],
                "graphs": [
                    {"id": "g0", "period": 100, "deadline": 100, "tasks": [
                        {"id": "a", "pe": "pe0", "priority": 2, "bcet": 60, "wcet": 60}
                    ]},
                    {"id": "g1", "period": 100, "deadline": 100, "tasks": [
                        {"id": "b", "pe": "pe0", "priority": 1, "bcet": 60, "wcet": 60}
                    ]}
                ]
            }"#,
        )
        .unwrap();
        let path = path.to_str().unwrap();
        assert_eq!(cli(&["analyze", path]), 1);
        assert_eq!(cli(&["yw", path]), 1);
    }

    #[test]
    fn invalid_input_exits_two() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("broken.json");
        fs::write(&path, "{ not json").unwrap();
        assert_eq!(cli(&["analyze", path.to_str().unwrap()]), 2);
    }

    #[test]
    fn tiny_enumeration_budget_exits_one() {
        assert_eq!(cli(&["enumerate", &fixture("fig5"), "--budget", "4"]), 1);
    }

    #[test]
    fn out_file_is_written_and_input_untouched() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("report.json");
        let input = fixture("fig3");
        let before = fs::read_to_string(&input).unwrap();
        assert_eq!(
            cli(&["analyze", &input, "--format", "json", "--out", out.to_str().unwrap()]),
            0
        );
        assert_eq!(fs::read_to_string(&input).unwrap(), before);
        let report: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(&out).unwrap()).unwrap();
        assert_eq!(report["graphs"][0]["wcrt"], 40);
        assert_eq!(report["schedulable"], true);
        // No temporary file left behind.
        assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 1);
    }

    #[test]
    fn csv_report_has_the_documented_header() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("report.csv");
        assert_eq!(
            cli(&["yw", &fixture("fig4"), "--format", "csv", "--out", out.to_str().unwrap()]),
            0
        );
        let text = fs::read_to_string(&out).unwrap();
        assert!(text.starts_with("graph,method,wcrt,deadline,schedulable\n"));
        assert!(text.contains("g0,yw,110,200,true"));
    }

    #[test]
    fn generate_and_campaign_run_end_to_end() {
        let dir = tempfile::tempdir().unwrap();
        let model_out = dir.path().join("model.json");
        assert_eq!(
            cli(&["generate", "--seed", "5", "--out", model_out.to_str().unwrap()]),
            0
        );
        let text = fs::read_to_string(&model_out).unwrap();
        assert!(parse_system(&text).is_ok());
        assert_eq!(cli(&["analyze", model_out.to_str().unwrap()]), 0);

        let csv_out = dir.path().join("campaign.csv");
        assert_eq!(
            cli(&[
                "campaign",
                "--instances",
                "2",
                "--seed",
                "1",
                "--format",
                "csv",
                "--out",
                csv_out.to_str().unwrap(),
            ]),
            0
        );
        let csv = fs::read_to_string(&csv_out).unwrap();
        assert!(csv.starts_with(expgen::CAMPAIGN_CSV_HEADER));
    }
}
