use clap::{Args, Parser, Subcommand};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;
use wordsweep::array::ArrayUnifyOp;
use wordsweep::driver::{
    build_abv, build_ec, solve, Backend, EmitFormat, ExitStatus, RulesFile, RunOptions,
};
use wordsweep::oracle::{BruteForce, ExternalSolverConfig};
use wordsweep::sweep::SweepConfig;

#[derive(Parser)]
#[command(
    name = "wordsweep",
    version,
    about = "Word-level SAT sweeping for BTOR2 models"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check two designs for equivalence under matching rules.
    Ec {
        design_a: PathBuf,
        design_b: PathBuf,
        /// Rules file with `match`, `pin` and `check` lines.
        #[arg(long)]
        rules: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Check whether a bad property of one design is reachable.
    Abv {
        design: PathBuf,
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Args)]
struct Common {
    /// Unrolling bound.
    #[arg(short = 'k', long = "bound", default_value_t = 0)]
    bound: u32,
    /// Number of initial simulation patterns.
    #[arg(long, default_value_t = 32)]
    patterns: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// SMT-LIB2 solver command, e.g. `z3 -in`. Without it the brute-force
    /// oracle is used.
    #[arg(long)]
    solver_cmd: Option<String>,
    #[arg(long, default_value_t = 30_000)]
    solver_timeout_ms: u64,
    /// Largest AST-size difference of a candidate pair (0 disables).
    #[arg(long, default_value_t = 32)]
    size_diff_limit: u32,
    #[arg(long, default_value_t = 8)]
    bucket_sample_limit: usize,
    /// Total oracle calls, including the final check.
    #[arg(long, default_value_t = 10_000)]
    solver_budget: usize,
    #[arg(long, default_value_t = 4)]
    solver_budget_per_node: usize,
    /// Comma-separated operators for elementwise table matching.
    #[arg(long, default_value = "concat", value_delimiter = ',')]
    array_unify_ops: Vec<ArrayUnifyOp>,
    /// Ask miters about the original terms instead of their reduced forms.
    #[arg(long)]
    literal_miters: bool,
    /// Check every frame up to the bound instead of the last one.
    #[arg(long)]
    all_frames: bool,
    /// Print the reduced problem after the verdict.
    #[arg(long)]
    emit: Option<EmitFormat>,
    /// Write the stats JSON here (`-` for standard output).
    #[arg(long)]
    stats_out: Option<PathBuf>,
    /// Decide the formula with one oracle call, without sweeping.
    #[arg(long)]
    no_sweep: bool,
    /// Enumeration limit of the brute-force oracle, in bits.
    #[arg(long, default_value_t = BruteForce::DEFAULT_CAP_BITS)]
    brute_force_cap: u32,
    /// Report wall time as 0 so identical runs give identical stats.
    #[arg(long)]
    omit_timing: bool,
}

impl Common {
    fn options(&self) -> Result<RunOptions, String> {
        let sweep = SweepConfig {
            size_diff_limit: self.size_diff_limit,
            bucket_sample_limit: self.bucket_sample_limit,
            solver_budget_per_node: self.solver_budget_per_node,
            solver_budget_total: self.solver_budget,
            patterns: self.patterns,
            seed: self.seed,
            array_unify_ops: self.array_unify_ops.clone(),
            reduced_miters: !self.literal_miters,
        };
        if sweep.bucket_sample_limit == 0
            || sweep.solver_budget_per_node == 0
            || sweep.solver_budget_total == 0
        {
            return Err("budgets and sample limits must be at least 1".into());
        }
        if sweep.patterns == 0 {
            return Err("--patterns must be at least 1".into());
        }
        let backend = match &self.solver_cmd {
            Some(cmd) => {
                let mut cfg = ExternalSolverConfig::new(cmd.clone());
                cfg.timeout = Duration::from_millis(self.solver_timeout_ms);
                Backend::External(cfg)
            }
            None => Backend::BruteForce {
                cap_bits: self.brute_force_cap,
            },
        };
        Ok(RunOptions {
            bound: self.bound,
            sweep,
            backend,
            all_frames: self.all_frames,
            no_sweep: self.no_sweep,
        })
    }
}

fn read(path: &Path) -> Result<String, String> {
    std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))
}

fn usage(msg: impl std::fmt::Display) -> ExitCode {
    eprintln!("error: {msg}");
    ExitCode::from(ExitStatus::Usage as u8)
}

fn run(cli: Cli) -> ExitCode {
    let (problem, common) = match &cli.command {
        Command::Ec {
            design_a,
            design_b,
            rules,
            common,
        } => {
            let texts = (read(design_a), read(design_b));
            let (Ok(text_a), Ok(text_b)) = texts else {
                let (a, b) = texts;
                return usage(a.err().or(b.err()).unwrap_or_default());
            };
            let rules = match rules {
                Some(path) => match read(path)
                    .and_then(|t| t.parse::<RulesFile>().map_err(|e| e.to_string()))
                {
                    Ok(r) => r,
                    Err(e) => return usage(e),
                },
                None => RulesFile::default(),
            };
            let a = (design_a.to_string_lossy().into_owned(), text_a);
            let b = (design_b.to_string_lossy().into_owned(), text_b);
            let built = build_ec(
                (&a.0, &a.1),
                (&b.0, &b.1),
                &rules,
                common.bound,
                common.all_frames,
            );
            (built, common)
        }
        Command::Abv { design, common } => {
            let text = match read(design) {
                Ok(t) => t,
                Err(e) => return usage(e),
            };
            let file = design.to_string_lossy().into_owned();
            (
                build_abv((&file, &text), common.bound, common.all_frames),
                common,
            )
        }
    };
    let options = match common.options() {
        Ok(o) => o,
        Err(e) => return usage(e),
    };
    let problem = match problem {
        Ok(p) => p,
        Err(e) => return usage(e),
    };
    let report = solve(problem, &options);
    print!("{}", report.render());
    let timing = !common.omit_timing;
    if let Some(format) = common.emit {
        print!("{}", report.emit(format, timing));
    }
    if let Some(path) = &common.stats_out {
        let json = report.stats_report(timing).to_json() + "\n";
        if path.as_os_str() == "-" {
            print!("{json}");
        } else if let Err(e) = std::fs::write(path, json) {
            return usage(format!("{}: {e}", path.display()));
        }
    }
    ExitCode::from(report.status() as u8)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() {
                ExitStatus::Usage as u8
            } else {
                0
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    run(cli)
}
