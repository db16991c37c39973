//! The `concord` command.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use concord_core::align::{run_spec_with, Backend};
use concord_core::model::{Catalog, Instance};
use concord_core::solver::{
    assemble, read_qp, solve_dense, solve_with, write_qp, SolveOptions, SolveResult, Status,
};
use concord_core::specdsl::{parse_with, SpecDocument};

use crate::bench::{backend_name, run_bench, write_report, BenchConfig, BenchQuery};
use crate::ingest::load_instance;
use crate::weights::WeightRules;

pub const EXIT_OK: i32 = 0;
pub const EXIT_VALIDATION: i32 = 1;
pub const EXIT_RUNTIME: i32 = 2;
pub const EXIT_INFEASIBLE: i32 = 3;

/// Largest KKT dimension the dense oracle accepts.
const ORACLE_LIMIT: usize = 4000;

#[derive(Debug, Parser)]
#[command(name = "concord", version, about = "Measure how far uncertain data sources are from agreeing")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Global {
    /// Feasibility tolerance, relative to 1 + ‖b‖∞.
    #[arg(long, global = true)]
    tolerance_feas: Option<f64>,
    /// Discord at or below which data counts as concordant.
    #[arg(long, global = true)]
    tolerance_conc: Option<f64>,
    /// Weight file (label patterns to objective weights).
    #[arg(long, global = true)]
    weights: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = BackendArg::Inline)]
    backend: BackendArg,
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum BackendArg {
    Inline,
    Partitioned,
    Both,
}

impl BackendArg {
    fn backends(self) -> Vec<Backend> {
        match self {
            BackendArg::Inline => vec![Backend::Inline],
            BackendArg::Partitioned => vec![Backend::Partitioned],
            BackendArg::Both => vec![Backend::Inline, Backend::Partitioned],
        }
    }
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Parse and typecheck a specification.
    Check {
        spec: PathBuf,
        /// Override a `set` parameter, e.g. `--set lag=2`.
        #[arg(long = "set", value_parser = parse_assignment)]
        set: Vec<(String, f64)>,
    },
    /// Load data, evaluate the alignment and measure discord.
    Run {
        spec: PathBuf,
        /// Directory holding `<table>.csv` for every declared table.
        #[arg(long)]
        data: PathBuf,
        /// Write the assembled QP in the text exchange format.
        #[arg(long)]
        export_qp: Option<PathBuf>,
        /// Write per-variable values as CSV.
        #[arg(long)]
        report: Option<PathBuf>,
        #[arg(long = "set", value_parser = parse_assignment)]
        set: Vec<(String, f64)>,
        /// Number of adjustments to print.
        #[arg(long, default_value_t = 20)]
        top: usize,
        /// Exit with status 3 when the constraints are unsatisfiable.
        #[arg(long)]
        fail_on_infeasible: bool,
    },
    /// Run the synthetic microbenchmark and print a CSV report.
    Bench {
        /// Instance sizes, comma-separated.
        #[arg(long, value_delimiter = ',', default_value = "100")]
        n: Vec<usize>,
        /// Queries (q1…q7, T1…T5), comma-separated; all by default.
        #[arg(long, value_delimiter = ',')]
        queries: Vec<BenchQuery>,
        #[arg(long, default_value_t = 0.01)]
        null_prob: f64,
        #[arg(long, default_value_t = 0.05)]
        noise_sigma: f64,
        /// Consecutive seeds starting at `--seed`.
        #[arg(long, default_value_t = 1)]
        seeds: u64,
        #[arg(long, default_value_t = 1)]
        repetitions: usize,
        /// Write the report here instead of stdout.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Solve an exported QP with the dense reference solver.
    Oracle { qp: PathBuf },
}

fn parse_assignment(s: &str) -> Result<(String, f64), String> {
    let (k, v) = s.split_once('=').ok_or("expected NAME=VALUE")?;
    let v: f64 = v.trim().parse().map_err(|_| format!("`{v}` is not a number"))?;
    Ok((k.trim().to_string(), v))
}

/// Failure carrying its exit code.
#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub kind: &'static str,
    pub message: String,
}

impl Failure {
    fn validation(message: impl ToString) -> Self {
        Failure {
            code: EXIT_VALIDATION,
            kind: "validation",
            message: message.to_string(),
        }
    }

    fn runtime(message: impl ToString) -> Self {
        Failure {
            code: EXIT_RUNTIME,
            kind: "runtime",
            message: message.to_string(),
        }
    }

    fn report(&self, err: &mut dyn Write) {
        let block = serde_json::json!({
            "error": { "kind": self.kind, "exit_code": self.code, "message": self.message }
        });
        let _ = writeln!(err, "{}", serde_json::to_string_pretty(&block).unwrap_or_default());
    }
}

type CmdResult = Result<i32, Failure>;

/// Runs the command line `args` (program name first). Human output goes to
/// `out`, error blocks to `err`.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_VALIDATION } else { EXIT_OK };
            if code == EXIT_OK {
                let _ = write!(out, "{e}");
            } else {
                let _ = write!(err, "{e}");
            }
            return code;
        }
    };
    match dispatch(&cli, out) {
        Ok(code) => code,
        Err(f) => {
            f.report(err);
            f.code
        }
    }
}

fn dispatch(cli: &Cli, out: &mut dyn Write) -> CmdResult {
    match &cli.command {
        Command::Check { spec, set } => check(spec, set, out),
        Command::Run {
            spec,
            data,
            export_qp,
            report,
            set,
            top,
            fail_on_infeasible,
        } => run_cmd(
            &cli.global,
            &RunArgs {
                spec,
                data,
                export_qp: export_qp.as_deref(),
                report: report.as_deref(),
                set,
                top: *top,
                fail_on_infeasible: *fail_on_infeasible,
            },
            out,
        ),
        Command::Bench {
            n,
            queries,
            null_prob,
            noise_sigma,
            seeds,
            repetitions,
            report,
        } => {
            let queries = if queries.is_empty() {
                BenchQuery::ALL.to_vec()
            } else {
                queries.clone()
            };
            let mut rows = Vec::new();
            for &size in n {
                for seed in cli.global.seed..cli.global.seed + seeds.max(&1) {
                    let cfg = BenchConfig {
                        n: size,
                        null_prob: *null_prob,
                        noise_sigma: *noise_sigma,
                        seed,
                        queries: queries.clone(),
                        repetitions: *repetitions,
                        backends: cli.global.backend.backends(),
                        solve: solve_options(&cli.global, None),
                    };
                    cfg.validate().map_err(Failure::validation)?;
                    rows.extend(run_bench(&cfg).map_err(Failure::runtime)?);
                }
            }
            match report {
                Some(p) => {
                    let f = std::fs::File::create(p).map_err(|e| Failure::runtime(format!("{}: {e}", p.display())))?;
                    write_report(&rows, f).map_err(Failure::runtime)?;
                    let _ = writeln!(out, "wrote {} rows to {}", rows.len(), p.display());
                }
                None => write_report(&rows, &mut *out).map_err(Failure::runtime)?,
            }
            Ok(EXIT_OK)
        }
        Command::Oracle { qp } => oracle(qp, out),
    }
}

fn read_file(p: &Path) -> Result<String, Failure> {
    std::fs::read_to_string(p).map_err(|e| Failure::runtime(format!("{}: {e}", p.display())))
}

fn load_spec(path: &Path, set: &[(String, f64)]) -> Result<SpecDocument, Failure> {
    let text = read_file(path)?;
    let overrides: BTreeMap<String, f64> = set.iter().cloned().collect();
    parse_with(&text, &overrides).map_err(|e| Failure::validation(format!("{}:{e}", path.display())))
}

fn check(path: &Path, set: &[(String, f64)], out: &mut dyn Write) -> CmdResult {
    let doc = load_spec(path, set)?;
    let spec = doc.validate().map_err(Failure::validation)?;
    let _ = writeln!(
        out,
        "ok: {} tables, {} views",
        spec.source.len(),
        spec.views.len()
    );
    for v in &spec.views {
        let _ = writeln!(out, "  view {} ({} fused queries)", v.name, v.queries.len());
    }
    Ok(EXIT_OK)
}

fn solve_options(g: &Global, doc: Option<&SpecDocument>) -> SolveOptions {
    let mut o = SolveOptions::default();
    if let Some(d) = doc {
        if let Some(v) = d.setting("tolerance_feas") {
            o.feasibility_tol = v;
        }
        if let Some(v) = d.setting("tolerance_conc") {
            o.concordance_tol = v;
        }
    }
    if let Some(v) = g.tolerance_feas {
        o.feasibility_tol = v;
    }
    if let Some(v) = g.tolerance_conc {
        o.concordance_tol = v;
    }
    o
}

struct RunArgs<'a> {
    spec: &'a Path,
    data: &'a Path,
    export_qp: Option<&'a Path>,
    report: Option<&'a Path>,
    set: &'a [(String, f64)],
    top: usize,
    fail_on_infeasible: bool,
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".to_string(), |d| format!("{d:.9}"))
}

fn run_cmd(g: &Global, a: &RunArgs<'_>, out: &mut dyn Write) -> CmdResult {
    let doc = load_spec(a.spec, a.set)?;
    let spec = doc.validate().map_err(Failure::validation)?;
    let inst: Instance = load_instance(&doc, a.data).map_err(Failure::runtime)?;
    if let Some(w) = &g.weights {
        let rules = WeightRules::parse(&read_file(w)?).map_err(|e| Failure::validation(format!("{}: {e}", w.display())))?;
        rules.apply(inst.catalog());
    }
    let opts = solve_options(g, Some(&doc));
    let mut last: Option<(SolveResult, Catalog)> = None;
    for backend in g.backend.backends() {
        let run_inst = inst.fork();
        let catalog = run_inst.catalog().clone();
        let (_views, phi) = run_spec_with(&spec, &run_inst, backend).map_err(Failure::runtime)?;
        let reduced = phi.eliminate_lluns(&catalog);
        let problem = assemble(&reduced, &catalog);
        if let Some(p) = a.export_qp {
            std::fs::write(p, write_qp(&problem, &opts)).map_err(|e| Failure::runtime(format!("{}: {e}", p.display())))?;
        }
        let mut result = solve_with(&problem, &opts).map_err(Failure::runtime)?;
        if let Some(h) = result.valuation.as_mut() {
            reduced.reconstruct(h);
        }
        let _ = writeln!(out, "backend: {}", backend_name(backend));
        let _ = writeln!(out, "status: {}", result.status);
        let _ = writeln!(out, "discord: {}", fmt_opt(result.discord));
        let _ = writeln!(out, "discord_per_variable: {}", fmt_opt(result.discord_per_variable));
        let _ = writeln!(
            out,
            "variables: {}  constraints: {}  kkt_residual: {:.3e}",
            result.n_vars, result.n_constraints, result.kkt_residual
        );
        last = Some((result, catalog.snapshot()));
    }
    let (result, catalog) = last.expect("at least one backend");
    if let Some(h) = &result.valuation {
        let mut adj: Vec<_> = catalog
            .entries()
            .into_iter()
            .map(|v| (h.get(v.id), v))
            .filter(|(x, _)| *x != 0.0)
            .collect();
        adj.sort_by(|a, b| b.0.abs().total_cmp(&a.0.abs()).then(a.1.id.cmp(&b.1.id)));
        let _ = writeln!(out, "adjustments (largest first):");
        for (x, v) in adj.iter().take(a.top) {
            let _ = writeln!(out, "  {:<40} {:<5} w={:<6} {:+.9}", v.label.to_string(), v.kind.name(), v.weight(), x);
        }
        if adj.len() > a.top {
            let _ = writeln!(out, "  … {} more", adj.len() - a.top);
        }
    }
    if let Some(p) = a.report {
        let file = std::fs::File::create(p).map_err(|e| Failure::runtime(format!("{}: {e}", p.display())))?;
        let mut w = csv::Writer::from_writer(file);
        let write = |w: &mut csv::Writer<std::fs::File>| -> csv::Result<()> {
            w.write_record(["id", "kind", "label", "weight", "value"])?;
            for v in catalog.entries() {
                let x = result.valuation.as_ref().map_or(String::new(), |h| format!("{:.12e}", h.get(v.id)));
                w.write_record([v.id.0.to_string(), v.kind.name().into(), v.label.to_string(), v.weight().to_string(), x])?;
            }
            w.flush()?;
            Ok(())
        };
        write(&mut w).map_err(Failure::runtime)?;
    }
    if a.fail_on_infeasible && result.status == Status::Infeasible {
        return Ok(EXIT_INFEASIBLE);
    }
    Ok(EXIT_OK)
}

fn oracle(path: &Path, out: &mut dyn Write) -> CmdResult {
    let (p, opts) = read_qp(&read_file(path)?).map_err(|e| Failure::validation(format!("{}: {e}", path.display())))?;
    let dim = p.vars.len() + p.rows.len();
    if dim > ORACLE_LIMIT {
        return Err(Failure::runtime(format!(
            "KKT dimension {dim} exceeds the dense oracle limit of {ORACLE_LIMIT}"
        )));
    }
    let o = solve_dense(&p);
    let _ = writeln!(out, "oracle_feasible: {}", o.feasible);
    let _ = writeln!(out, "oracle_discord: {:.12e}", o.discord);
    let _ = writeln!(out, "oracle_feasibility_residual: {:.3e}", o.feasibility_residual);
    if let Ok(r) = solve_with(&p, &opts) {
        let _ = writeln!(out, "solver_status: {}", r.status);
        let _ = writeln!(out, "solver_discord: {}", r.discord.map_or("n/a".into(), |d| format!("{d:.12e}")));
    }
    Ok(EXIT_OK)
}
