//! Synthetic microbenchmark: `R : A,B ▷ C,D` and `S : B ▷ E,F`, distorted
//! symbolic copies, twelve queries and a CSV report.

use std::fmt;
use std::io::Write;
use std::str::FromStr;
use std::sync::Arc;
use std::time::Instant;

use concord_core::algebra::{eval_with, EvalError, Expr, Query};
use concord_core::align::{fuse, Backend, Coalescer, ConstraintSet};
use concord_core::model::{
    Catalog, Instance, KeyAttr, KeyType, KeyValue, LinExpr, STable, Signature, VarKind, VarLabel,
};
use concord_core::partitioned::{self, PartitionedTable};
use concord_core::solver::{assemble, solve_with, SolveError, SolveOptions, Status};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use thiserror::Error;

/// Column order of the report.
pub const REPORT_COLUMNS: [&str; 11] = [
    "query",
    "n",
    "seed",
    "backend",
    "eval_ms",
    "eqgen_ms",
    "solve_ms",
    "n_vars",
    "n_constraints",
    "discord",
    "status",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum BenchQuery {
    Q1,
    Q2,
    Q3,
    Q4,
    Q5,
    Q6,
    Q7,
    T1,
    T2,
    T3,
    T4,
    T5,
}

impl BenchQuery {
    pub const ALL: [BenchQuery; 12] = [
        BenchQuery::Q1,
        BenchQuery::Q2,
        BenchQuery::Q3,
        BenchQuery::Q4,
        BenchQuery::Q5,
        BenchQuery::Q6,
        BenchQuery::Q7,
        BenchQuery::T1,
        BenchQuery::T2,
        BenchQuery::T3,
        BenchQuery::T4,
        BenchQuery::T5,
    ];

    pub fn name(self) -> &'static str {
        match self {
            BenchQuery::Q1 => "q1",
            BenchQuery::Q2 => "q2",
            BenchQuery::Q3 => "q3",
            BenchQuery::Q4 => "q4",
            BenchQuery::Q5 => "q5",
            BenchQuery::Q6 => "q6",
            BenchQuery::Q7 => "q7",
            BenchQuery::T1 => "T1",
            BenchQuery::T2 => "T2",
            BenchQuery::T3 => "T3",
            BenchQuery::T4 => "T4",
            BenchQuery::T5 => "T5",
        }
    }

    /// The query over the symbolic tables `R'`, `S'`, `R''`.
    pub fn query(self) -> Query {
        self.build(SYMBOLIC)
    }

    /// The same query over the source tables, with `R''` read as `R`. For
    /// the `T` queries this is the ground counterpart of the inner `q`.
    pub fn ground_query(self) -> Query {
        self.build(GROUND)
    }

    /// Whether the query itself coalesces against ground data.
    pub fn is_aligned(self) -> bool {
        matches!(
            self,
            BenchQuery::T1 | BenchQuery::T2 | BenchQuery::T3 | BenchQuery::T4 | BenchQuery::T5
        )
    }

    fn inner(self) -> BenchQuery {
        match self {
            BenchQuery::T1 => BenchQuery::Q1,
            BenchQuery::T2 => BenchQuery::Q2,
            BenchQuery::T3 => BenchQuery::Q3,
            BenchQuery::T4 => BenchQuery::Q4,
            BenchQuery::T5 => BenchQuery::Q5,
            q => q,
        }
    }

    fn build(self, t: [&str; 3]) -> Query {
        let [r, s, r2] = t;
        let rel = Query::rel;
        match self {
            BenchQuery::Q1 => rel(r).join(rel(s)),
            BenchQuery::Q2 => rel(r).derive("W", Expr::add(Expr::attr("C"), Expr::attr("D"))),
            BenchQuery::Q3 => rel(r)
                .derive("W", Expr::Num(1.0))
                .derive("X", Expr::mul(Expr::attr("W"), Expr::attr("C"))),
            BenchQuery::Q4 => rel(r).aggregate(&["A"], &["C"]),
            BenchQuery::Q5 => rel(r).aggregate(&["B"], &["C"]),
            BenchQuery::Q6 => rel(r).dunion("Z", rel(r2)),
            BenchQuery::Q7 => rel(r).dunion("Z", rel(r2)).coalesce(&["Z"]),
            _ => {
                let q = self.inner();
                q.build(t)
                    .dunion("Z", q.build(GROUND))
                    .coalesce(&["Z"])
            }
        }
    }
}

const SYMBOLIC: [&str; 3] = ["R'", "S'", "R''"];
const GROUND: [&str; 3] = ["R", "S", "R"];

impl fmt::Display for BenchQuery {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for BenchQuery {
    type Err = BenchConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        BenchQuery::ALL
            .into_iter()
            .find(|q| q.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| BenchConfigError::UnknownQuery(s.to_string()))
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum BenchConfigError {
    #[error("unknown benchmark query `{0}` (expected q1…q7 or T1…T5)")]
    UnknownQuery(String),
    #[error("nullProb must lie in [0, 1], got {0}")]
    NullProb(f64),
    #[error("noiseSigma must be finite and non-negative, got {0}")]
    Noise(f64),
    #[error("n must be at least 1")]
    EmptyInstance,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchConfig {
    pub n: usize,
    pub null_prob: f64,
    /// Relative standard deviation of the distortion.
    pub noise_sigma: f64,
    pub seed: u64,
    pub queries: Vec<BenchQuery>,
    /// Timed runs per query and backend. With more than one, an untimed
    /// warm-up run precedes them and the median is reported.
    pub repetitions: usize,
    pub backends: Vec<Backend>,
    pub solve: SolveOptions,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            n: 100,
            null_prob: 0.01,
            noise_sigma: 0.05,
            seed: 0,
            queries: BenchQuery::ALL.to_vec(),
            repetitions: 1,
            backends: vec![Backend::Inline, Backend::Partitioned],
            solve: SolveOptions::default(),
        }
    }
}

impl BenchConfig {
    pub fn validate(&self) -> Result<(), BenchConfigError> {
        if self.n == 0 {
            return Err(BenchConfigError::EmptyInstance);
        }
        if !(0.0..=1.0).contains(&self.null_prob) {
            return Err(BenchConfigError::NullProb(self.null_prob));
        }
        if !self.noise_sigma.is_finite() || self.noise_sigma < 0.0 {
            return Err(BenchConfigError::Noise(self.noise_sigma));
        }
        Ok(())
    }
}

/// Ground tables `R`, `S` and symbolic views `R'`, `S'`, `R''` over one
/// catalog.
#[derive(Debug, Clone)]
pub struct BenchInstance {
    pub instance: Instance,
    pub n_error: usize,
    pub n_null: usize,
}

impl BenchInstance {
    pub fn ground_rows(&self) -> usize {
        ["R", "S"]
            .iter()
            .filter_map(|n| self.instance.get(n))
            .map(STable::len)
            .sum()
    }
}

fn r_sig() -> Signature {
    Signature::new(
        vec![KeyAttr::new("A", KeyType::Integer), KeyAttr::new("B", KeyType::Integer)],
        vec!["C".into(), "D".into()],
    )
    .expect("static signature")
}

fn s_sig() -> Signature {
    Signature::new(vec![KeyAttr::new("B", KeyType::Integer)], vec!["E".into(), "F".into()])
        .expect("static signature")
}

/// `n` rows of `S`; for each, between 0 and ⌊√n⌋ rows of `R` sharing `B`.
/// Values are uniform in [1, 100).
pub fn gen_ground<R: Rng>(rng: &mut R, n: usize) -> (STable, STable) {
    let fan = (n as f64).sqrt().floor() as i64;
    let mut r = STable::new(r_sig());
    let mut s = STable::new(s_sig());
    let val = |rng: &mut R| LinExpr::constant(rng.random_range(1.0..100.0));
    for b in 0..n as i64 {
        let row = vec![val(rng), val(rng)];
        s.insert(vec![KeyValue::Integer(b)], row).expect("fresh key");
        for a in 0..rng.random_range(0..=fan) {
            let row = vec![val(rng), val(rng)];
            r.insert(vec![KeyValue::Integer(a), KeyValue::Integer(b)], row)
                .expect("fresh key");
        }
    }
    (r, s)
}

/// Observation table: each value becomes a null variable with probability
/// `p`, otherwise `o·(1+x)` where `o = v·(1 + σ·N(0,1))`.
fn distort<R: Rng>(
    rng: &mut R,
    t: &STable,
    name: &str,
    cfg: &BenchConfig,
    catalog: &Catalog,
    counts: &mut (usize, usize),
) -> STable {
    let mut out = STable::new(t.signature().clone());
    for (key, vals) in t.rows() {
        let rendered: Vec<String> = key.iter().map(ToString::to_string).collect();
        let row = vals
            .iter()
            .zip(t.signature().values())
            .map(|(v, attr)| {
                let label = VarLabel::new(name, rendered.clone(), attr.clone());
                if rng.random_bool(cfg.null_prob) {
                    counts.1 += 1;
                    return LinExpr::var(catalog.alloc(VarKind::Null, label));
                }
                let z: f64 = StandardNormal.sample(rng);
                let o = v.constant_term() * (1.0 + cfg.noise_sigma * z);
                counts.0 += 1;
                let x = catalog.alloc(VarKind::Error, label);
                if o == 0.0 {
                    LinExpr::var(x)
                } else {
                    LinExpr::from_terms(o, [(x, o)])
                }
            })
            .collect();
        out.insert(key.clone(), row).expect("keys copied from a valid table");
    }
    out
}

pub fn gen_bench_instance(cfg: &BenchConfig) -> BenchInstance {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let (r, s) = gen_ground(&mut rng, cfg.n);
    let catalog = Arc::new(Catalog::new());
    let mut counts = (0, 0);
    let rp = distort(&mut rng, &r, "R'", cfg, &catalog, &mut counts);
    let sp = distort(&mut rng, &s, "S'", cfg, &catalog, &mut counts);
    let rpp = distort(&mut rng, &r, "R''", cfg, &catalog, &mut counts);
    let mut instance = Instance::new(catalog);
    instance.insert("R", r);
    instance.insert("S", s);
    instance.insert("R'", rp);
    instance.insert("S'", sp);
    instance.insert("R''", rpp);
    BenchInstance {
        instance,
        n_error: counts.0,
        n_null: counts.1,
    }
}

#[derive(Debug, Error)]
pub enum BenchError {
    #[error(transparent)]
    Config(#[from] BenchConfigError),
    #[error("{query}: {source}")]
    Eval { query: BenchQuery, source: EvalError },
    #[error("{query}: {source}")]
    Solve { query: BenchQuery, source: SolveError },
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchRow {
    pub query: BenchQuery,
    pub n: usize,
    pub seed: u64,
    pub backend: Backend,
    pub eval_ms: f64,
    pub eqgen_ms: f64,
    pub solve_ms: f64,
    pub n_vars: usize,
    pub n_constraints: usize,
    pub discord: Option<f64>,
    pub status: Status,
}

pub fn backend_name(b: Backend) -> &'static str {
    match b {
        Backend::Inline => "inline",
        Backend::Partitioned => "partitioned",
    }
}

impl BenchRow {
    pub fn cells(&self) -> [String; 11] {
        [
            self.query.to_string(),
            self.n.to_string(),
            self.seed.to_string(),
            backend_name(self.backend).to_string(),
            format!("{:.3}", self.eval_ms),
            format!("{:.3}", self.eqgen_ms),
            format!("{:.3}", self.solve_ms),
            self.n_vars.to_string(),
            self.n_constraints.to_string(),
            self.discord.map_or_else(String::new, |d| format!("{d:.12e}")),
            self.status.to_string(),
        ]
    }
}

pub fn write_report<W: Write>(rows: &[BenchRow], w: W) -> csv::Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(REPORT_COLUMNS)?;
    for r in rows {
        out.write_record(r.cells())?;
    }
    out.flush()?;
    Ok(())
}

/// Everything one pipeline run produces, for equivalence checks.
#[derive(Debug, Clone)]
pub struct RunOutput {
    /// The evaluated query result (before fusion with ground data).
    pub result: STable,
    /// Partitioned form of the result when that backend ran.
    pub partitioned: Option<PartitionedTable>,
    pub constraints: ConstraintSet,
    pub row: BenchRow,
}

fn ms(t: Instant) -> f64 {
    t.elapsed().as_secs_f64() * 1e3
}

/// Evaluates `q`, aligns it with ground data, and solves. Runs on a fork
/// of `data` so that backends allocate identical Llun ids.
pub fn run_query(
    data: &BenchInstance,
    q: BenchQuery,
    backend: Backend,
    cfg: &BenchConfig,
) -> Result<RunOutput, BenchError> {
    let eval_err = |source| BenchError::Eval { query: q, source };
    let inst = data.instance.fork();
    let catalog = inst.catalog().clone();
    let pinst = match backend {
        Backend::Partitioned => Some(partitioned::from_instance(&inst)),
        Backend::Inline => None,
    };
    let mut hook = Coalescer::new(&catalog, q.name());

    let t = Instant::now();
    let (result, ptable) = match &pinst {
        Some(p) => {
            let pt = partitioned::eval_partitioned_with(&q.query(), p, &mut hook).map_err(eval_err)?;
            (pt.to_inline(), Some(pt))
        }
        None => (eval_with(&q.query(), &inst, &mut hook).map_err(eval_err)?, None),
    };
    let eval_ms = ms(t);

    let t = Instant::now();
    let mut phi = hook.constraints;
    if !q.is_aligned() {
        let ground = match &pinst {
            Some(p) => partitioned::eval_partitioned_with(&q.ground_query(), p, &mut Coalescer::new(&catalog, "ground"))
                .map_err(eval_err)?
                .to_inline(),
            None => eval_with(&q.ground_query(), &inst, &mut Coalescer::new(&catalog, "ground")).map_err(eval_err)?,
        };
        let fused = fuse(&[result.clone(), ground], &catalog, q.name()).map_err(eval_err)?;
        phi.extend(fused.constraints);
    }
    let reduced = phi.eliminate_lluns(&catalog);
    let problem = assemble(&reduced, &catalog);
    let eqgen_ms = ms(t);

    let t = Instant::now();
    let solved = solve_with(&problem, &cfg.solve).map_err(|source| BenchError::Solve { query: q, source })?;
    let solve_ms = ms(t);

    Ok(RunOutput {
        result,
        partitioned: ptable,
        constraints: phi,
        row: BenchRow {
            query: q,
            n: cfg.n,
            seed: cfg.seed,
            backend,
            eval_ms,
            eqgen_ms,
            solve_ms,
            n_vars: solved.n_vars,
            n_constraints: solved.n_constraints,
            discord: solved.discord,
            status: solved.status,
        },
    })
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        (v[m - 1] + v[m]) / 2.0
    }
}

/// Generates the instance for `cfg` and runs every query on every backend.
/// Rows come out in query order, then backend order.
pub fn run_bench(cfg: &BenchConfig) -> Result<Vec<BenchRow>, BenchError> {
    cfg.validate()?;
    let data = gen_bench_instance(cfg);
    let mut rows = Vec::new();
    let reps = cfg.repetitions.max(1);
    for &q in &cfg.queries {
        for &b in &cfg.backends {
            if reps > 1 {
                run_query(&data, q, b, cfg)?;
            }
            let runs = (0..reps)
                .map(|_| run_query(&data, q, b, cfg).map(|o| o.row))
                .collect::<Result<Vec<_>, _>>()?;
            let mut row = runs[runs.len() - 1].clone();
            row.eval_ms = median(runs.iter().map(|r| r.eval_ms).collect());
            row.eqgen_ms = median(runs.iter().map(|r| r.eqgen_ms).collect());
            row.solve_ms = median(runs.iter().map(|r| r.solve_ms).collect());
            rows.push(row);
        }
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(n: usize) -> BenchConfig {
        BenchConfig {
            n,
            ..BenchConfig::default()
        }
    }

    #[test]
    fn query_names_round_trip() {
        for q in BenchQuery::ALL {
            assert_eq!(q.name().parse::<BenchQuery>().unwrap(), q);
        }
        assert!("q8".parse::<BenchQuery>().is_err());
    }

    #[test]
    fn total_rows_track_the_expected_size() {
        let n = 10_000;
        let expected = n as f64 + n as f64 / 2.0 * (n as f64).sqrt();
        for seed in 0..3 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (r, s) = gen_ground(&mut rng, n);
            let total = (r.len() + s.len()) as f64;
            assert!((total / expected - 1.0).abs() < 0.05, "{total} vs {expected}");
        }
    }

    #[test]
    fn zero_distortion_keeps_ground_values() {
        let c = BenchConfig {
            null_prob: 0.0,
            noise_sigma: 0.0,
            ..cfg(50)
        };
        let data = gen_bench_instance(&c);
        let r = data.instance.get("R").unwrap();
        let rp = data.instance.get("R'").unwrap();
        for (k, vals) in r.rows() {
            for (g, e) in vals.iter().zip(rp.get(k).unwrap()) {
                let v = g.constant_term();
                assert_eq!(e.constant_term(), v);
                assert_eq!(e.terms().len(), 1);
                assert_eq!(e.terms()[0].1, v);
            }
        }
        assert_eq!(data.n_null, 0);
    }

    #[test]
    fn null_fraction_matches_the_probability() {
        for seed in 0..3 {
            let c = BenchConfig {
                n: 400,
                null_prob: 0.05,
                seed,
                ..BenchConfig::default()
            };
            let data = gen_bench_instance(&c);
            let total = (data.n_null + data.n_error) as f64;
            let p = data.n_null as f64 / total;
            // 99% normal-approximation interval of a binomial proportion.
            let half = 2.576 * (0.05 * 0.95 / total).sqrt();
            assert!((p - 0.05).abs() <= half, "seed {seed}: {p}");
        }
    }

    #[test]
    fn disc_union_doubles_rows() {
        let data = gen_bench_instance(&cfg(100));
        let out = run_query(&data, BenchQuery::Q6, Backend::Inline, &cfg(100)).unwrap();
        assert_eq!(out.result.len(), 2 * data.instance.get("R").unwrap().len());
    }

    #[test]
    fn t2_is_discordant_under_noise() {
        for seed in 0..3 {
            let c = BenchConfig { seed, ..cfg(100) };
            let data = gen_bench_instance(&c);
            let out = run_query(&data, BenchQuery::T2, Backend::Inline, &c).unwrap();
            assert_eq!(out.row.status, Status::Discordant);
            assert!(out.row.discord.unwrap() > 0.0);
        }
    }

    #[test]
    fn report_has_the_documented_columns() {
        let c = BenchConfig {
            queries: vec![BenchQuery::Q4],
            ..cfg(30)
        };
        let rows = run_bench(&c).unwrap();
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[0].discord, rows[1].discord);
        let mut buf = Vec::new();
        write_report(&rows, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), REPORT_COLUMNS.join(","));
        assert!(lines.next().unwrap().starts_with("q4,30,0,inline,"));
        assert!(lines.next().unwrap().starts_with("q4,30,0,partitioned,"));
    }
}
