use std::path::{Path, PathBuf};
use std::process::ExitCode;

use ccm_core::env::Scenario;
use ccm_core::graph::{NodeId, Role};
use ccm_core::harness::{
    compare, resolve_scenario, run_eval, run_train, verify_report, EvalNoise, EvalRequest, ExperimentConfig,
    HarnessError, MetricsReport, Summary,
};
use ccm_core::modular::{enumerate_min_cuts, features, CutSetCatalog};
use clap::{Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "ccm", version, about = "Train and inspect causal coupled mechanism agents")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train every seed of an experiment config.
    Train {
        config: PathBuf,
        /// Overrides the config's output directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run frozen-policy episodes of a checkpoint.
    Eval {
        checkpoint: PathBuf,
        #[arg(long)]
        scenario: String,
        #[arg(long, default_value_t = 10)]
        episodes: usize,
        #[arg(long, default_value = "none")]
        noise: EvalNoise,
        /// Evaluate on this many generated glucose individuals.
        #[arg(long)]
        cohort: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "eval")]
        out: PathBuf,
    },
    /// Minimum cut catalog of a scenario with its features.
    Cuts {
        scenario: String,
        #[arg(long, value_enum, default_value_t = Format::Table)]
        format: Format,
    },
    /// Scenario inspection.
    Env {
        #[command(subcommand)]
        command: EnvCommand,
    },
    /// Paired comparison of two report directories.
    Compare {
        a: PathBuf,
        b: PathBuf,
        #[arg(long, value_enum, default_value_t = Format::Table)]
        format: Format,
    },
    /// Re-derive a report from its logs and list any difference.
    VerifyReport { dir: PathBuf },
}

#[derive(Subcommand)]
enum EnvCommand {
    /// Roles, goal, noise and cut catalog.
    Info { name: String },
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Table,
    Csv,
}

fn print_table(rows: &[Vec<String>]) {
    let widths: Vec<usize> =
        (0..rows[0].len()).map(|c| rows.iter().map(|r| r[c].chars().count()).max().unwrap_or(0)).collect();
    for row in rows {
        let cells: Vec<String> = row.iter().zip(&widths).map(|(s, w)| format!("{s:<w$}")).collect();
        println!("{}", cells.join("  ").trim_end());
    }
}

fn print_csv(rows: &[Vec<String>]) {
    for row in rows {
        let cells: Vec<String> =
            row.iter().map(|c| if c.contains([',', '"']) { format!("\"{}\"", c.replace('"', "\"\"")) } else { c.clone() }).collect();
        println!("{}", cells.join(","));
    }
}

fn emit(rows: &[Vec<String>], format: Format) {
    match format {
        Format::Table => print_table(rows),
        Format::Csv => print_csv(rows),
    }
}

fn ids(xs: &[NodeId]) -> String {
    xs.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(" ")
}

fn catalog(scenario: &Scenario) -> Result<(ccm_core::graph::Topology, CutSetCatalog), HarnessError> {
    let graph = scenario.build_graph()?;
    let catalog = enumerate_min_cuts(graph.topology(), &graph.modifiable(), &graph.targets())
        .map_err(|e| HarnessError::Config(format!("{}: {e}", scenario.name)))?;
    Ok((graph.topology().clone(), catalog))
}

/// Features as the high level sees them at the start of an episode, before
/// any cut is active.
fn cut_rows(scenario: &Scenario) -> Result<Vec<Vec<String>>, HarnessError> {
    let (topology, catalog) = catalog(scenario)?;
    let feats = features(&topology, &catalog, &Default::default());
    let mut rows = vec![["cut_id", "nodes", "isCon", "dis", "num", "in_degree", "out_degree"].map(String::from).to_vec()];
    for (i, (cut, f)) in catalog.cuts().iter().zip(&feats).enumerate() {
        rows.push(vec![
            i.to_string(),
            ids(cut.nodes()),
            f.is_con.to_string(),
            f.dis.to_string(),
            f.num.to_string(),
            format!("{:.4}", f.extras[0]),
            format!("{:.4}", f.extras[1]),
        ]);
    }
    Ok(rows)
}

fn env_info(name: &str) -> Result<(), HarnessError> {
    let scenario = resolve_scenario(name)?;
    let graph = scenario.build_graph()?;
    println!("{}: {}", scenario.name, scenario.description);
    println!("episode length {}", scenario.episode_len);
    for role in [Role::Modifiable, Role::Target, Role::Observed] {
        println!("{:<10} {}", format!("{role:?}").to_lowercase(), ids(&graph.ids_with_role(role)));
    }
    let edges: Vec<String> = graph.topology().edges().iter().map(|(a, b)| format!("{a}->{b}")).collect();
    println!("edges      {}", edges.join(" "));
    println!("goal       center {:?} half-width {}", scenario.goal.center, scenario.goal.half_width);
    println!("noise      {:?} p={} factor={}", scenario.noise.kind, scenario.noise.trigger_prob, scenario.noise.magnitude_factor);
    if let Some(m) = &scenario.meals {
        println!("meals      node {} at {:?} (±{}), sizes {:?}", m.node, m.times, m.jitter, m.sizes);
    }
    println!();
    print_table(&cut_rows(&scenario)?);
    Ok(())
}

fn fmt_summary(s: &Summary) -> String {
    format!("{:.4} ± {:.4} (n={})", s.mean, s.sd, s.n)
}

fn print_report(report: &MetricsReport, dir: &Path) {
    println!("{} {} on {}, report in {}", report.agent.name(), format!("{:?}", report.kind).to_lowercase(), report.scenario, dir.display());
    for (name, s) in &report.aggregate {
        println!("  {name:<18} {}", fmt_summary(s));
    }
    for (name, s) in &report.groups {
        println!("  time_in_goal[{name}] {}", fmt_summary(s));
    }
}

fn run(cli: Cli) -> Result<(), HarnessError> {
    match cli.command {
        Command::Train { config, out } => {
            let mut config = ExperimentConfig::load(&config)?;
            if let Some(out) = out {
                config.output = out;
            }
            let outcome = run_train(&config)?;
            print_report(&outcome.report, &outcome.dir);
        }
        Command::Eval { checkpoint, scenario, episodes, noise, cohort, seed, out } => {
            let req = EvalRequest { checkpoint, scenario, episodes, noise, cohort, seed, output: out };
            let report = run_eval(&req)?;
            print_report(&report, &req.output);
        }
        Command::Cuts { scenario, format } => emit(&cut_rows(&resolve_scenario(&scenario)?)?, format),
        Command::Env { command: EnvCommand::Info { name } } => env_info(&name)?,
        Command::Compare { a, b, format } => {
            let cmp = compare(&MetricsReport::load(&a)?, &MetricsReport::load(&b)?)?;
            let mut rows = vec![["metric", "mean_a", "mean_b", "delta", "wins", "losses", "ties", "p_value"].map(String::from).to_vec()];
            for r in &cmp.rows {
                rows.push(vec![
                    r.metric.clone(),
                    format!("{:.4}", r.mean_a),
                    format!("{:.4}", r.mean_b),
                    format!("{:+.4}", r.delta),
                    r.wins.to_string(),
                    r.losses.to_string(),
                    r.ties.to_string(),
                    format!("{:.4}", r.p_value),
                ]);
            }
            emit(&rows, format);
        }
        Command::VerifyReport { dir } => {
            verify_report(&dir)?;
            println!("{}: every number matches its logs", dir.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
