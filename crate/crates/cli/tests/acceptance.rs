//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any
//! criterion fails.

use std::collections::BTreeMap;
use std::panic::{self, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::{Duration, Instant};

use concord_cli::bench::{gen_bench_instance, run_query, BenchConfig, BenchQuery};
use concord_cli::gen::{consistent_case, random_instance, random_schema, random_valuation, QueryGen};
use concord_cli::ingest::{load_instance, read_table, EncodingPolicy};
use concord_cli::weights::WeightRules;
use concord_core::algebra::{eval_ground, eval_symbolic};
use concord_core::align::{run_spec, AlignmentSpec, Backend, Constraint, ConstraintSet};
use concord_core::model::{
    Catalog, Instance, KeyAttr, KeyType, LinExpr, STable, Signature, Valuation, VarId, VarKind,
};
use concord_core::solver::{assemble, solve_constraints, solve_dense, SolveOptions, Status};
use concord_core::specdsl::{parse, parse_with};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures")
}

fn read(path: &Path) -> Result<String, String> {
    std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn close(a: f64, b: f64, rel: f64) -> bool {
    (a - b).abs() <= rel * a.abs().max(b.abs()).max(1.0)
}

struct Panem {
    spec: AlignmentSpec,
    inst: Instance,
    x: Vec<VarId>,
    y: VarId,
    z: VarId,
}

fn find_var(cat: &Catalog, source: &str, key0: &str) -> Result<VarId, String> {
    cat.entries()
        .into_iter()
        .find(|v| v.label.source == source && v.label.key.first().map(String::as_str) == Some(key0))
        .map(|v| v.id)
        .ok_or_else(|| format!("no variable for {source}[{key0}]"))
}

fn load_panem() -> Result<Panem, String> {
    let dir = fixtures().join("panem");
    let doc = parse(&read(&dir.join("panem.spec"))?).map_err(|e| e.to_string())?;
    let spec = doc.validate().map_err(|e| e.to_string())?;
    let inst = load_instance(&doc, &dir).map_err(|e| e.to_string())?;
    let cat = inst.catalog().clone();
    let districts = [
        "I", "II", "III", "IV", "V", "VI", "VII", "VIII", "IX", "X", "XI", "XII", "XIII",
    ];
    let x = districts
        .iter()
        .map(|d| find_var(&cat, "ReportedDistrict", d))
        .collect::<Result<Vec<_>, _>>()?;
    let y = find_var(&cat, "ReportedCountry", "2110W25")?;
    let z = find_var(&cat, "Census", "2110W25")?;
    Ok(Panem { spec, inst, x, y, z })
}

fn apply_weights(cat: &Catalog, file: &str) -> Result<(), String> {
    let text = read(&fixtures().join("panem").join(file))?;
    WeightRules::parse(&text).map_err(|e| e.to_string())?.apply(cat);
    Ok(())
}

/// `Σ wᵢ h(xᵢ)²` over every non-Llun variable.
fn cost(cat: &Catalog, h: &Valuation) -> f64 {
    cat.entries()
        .iter()
        .filter(|v| v.kind != VarKind::Llun)
        .map(|v| v.weight() * h.get(v.id).powi(2))
        .sum()
}

fn panem_reduced(p: &Panem) -> Result<ConstraintSet, String> {
    let (_, phi) = run_spec(&p.spec, &p.inst).map_err(|e| e.to_string())?;
    Ok(phi.eliminate_lluns(p.inst.catalog()))
}

fn hand_solutions(p: &Panem) -> (Valuation, Valuation) {
    let s1 = Valuation::from_pairs([(p.y, -0.1), (p.z, -0.325)]);
    let s2 = Valuation::from_pairs([(p.x[12], 100.0), (p.z, -0.25)]);
    (s1, s2)
}

fn criterion_1() -> Outcome {
    let t = Instant::now();
    let p = load_panem()?;
    let reduced = panem_reduced(&p)?;
    let mut district: Vec<(VarId, f64)> = p.x[..12].iter().map(|&v| (v, 75.0)).collect();
    district.push((p.x[12], 1.0));
    let expected = [
        Constraint::new(
            LinExpr::from_terms(1000.0, [(p.y, 1000.0)]),
            LinExpr::from_terms(900.0, district),
        ),
        Constraint::new(
            LinExpr::from_terms(20.0, [(p.z, 20.0)]),
            LinExpr::from_terms(15.0, [(p.y, 15.0)]),
        ),
    ];
    ensure(reduced.equations() == expected, || {
        format!("equations differ:\n{}", reduced.render(p.inst.catalog()))
    })?;
    let (s1, s2) = hand_solutions(&p);
    for (name, s) in [("S1", &s1), ("S2", &s2)] {
        ensure(reduced.holds(s, 1e-12), || format!("{name} violates the equations"))?;
    }
    let cat = p.inst.catalog();
    apply_weights(cat, "c1.weights")?;
    let (c1s1, c1s2) = (cost(cat, &s1), cost(cat, &s2));
    apply_weights(cat, "c2.weights")?;
    let c2s2 = cost(cat, &s2);
    for (name, got, want) in [
        ("c1(S1)", c1s1, 0.115625),
        ("c1(S2)", c1s2, 10000.0625),
        ("c2(S2)", c2s2, 0.0625),
    ] {
        ensure((got - want).abs() <= 1e-9, || format!("{name} = {got}, expected {want}"))?;
    }
    let elapsed = t.elapsed();
    ensure(elapsed < Duration::from_secs(1), || format!("took {elapsed:?}"))?;
    Ok(format!(
        "2 equations match; c1(S1)={c1s1} c1(S2)={c1s2} c2(S2)={c2s2} in {elapsed:.2?}"
    ))
}

fn criterion_2() -> Outcome {
    let mut notes = Vec::new();
    for (file, hand) in [("c1.weights", 0.115625), ("c2.weights", 0.0625)] {
        let p = load_panem()?;
        let cat = p.inst.catalog();
        apply_weights(cat, file)?;
        let reduced = panem_reduced(&p)?;
        let r = solve_constraints(&reduced, cat, &SolveOptions::default()).map_err(|e| e.to_string())?;
        let got = r.discord.ok_or("solver reports infeasible")?;
        let oracle = solve_dense(&assemble(&reduced, cat));
        ensure(oracle.feasible, || "oracle reports infeasible".into())?;
        ensure(
            (got - oracle.discord).abs() <= 1e-6 * oracle.discord.abs().max(f64::MIN_POSITIVE),
            || format!("{file}: solver {got} vs oracle {}", oracle.discord),
        )?;
        ensure(got <= hand + 1e-12, || format!("{file}: optimum {got} exceeds hand cost {hand}"))?;
        notes.push(format!("{}: {got:.9} (oracle {:.9})", &file[..2], oracle.discord));
    }
    Ok(notes.join(", "))
}

fn tables_commute(a: &STable, b: &STable) -> Result<(), String> {
    ensure(a.len() == b.len(), || format!("{} vs {} rows", a.len(), b.len()))?;
    for ((ka, va), (kb, vb)) in a.rows().zip(b.rows()) {
        ensure(ka == kb, || format!("key {ka:?} vs {kb:?}"))?;
        for (x, y) in va.iter().zip(vb) {
            let (x, y) = (x.constant_term(), y.constant_term());
            ensure(close(x, y, 1e-9), || format!("value {x} vs {y} at {ka:?}"))?;
        }
    }
    Ok(())
}

fn criterion_3() -> Outcome {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let mut both_err = 0;
    for i in 0..1000 {
        let schema = random_schema(&mut rng);
        let inst = random_instance(&mut rng, &schema, 50);
        let h = random_valuation(&mut rng, inst.catalog());
        let q = QueryGen::new(&schema).query(&mut rng, 4);
        ensure(q.depth() <= 4, || format!("case {i}: depth {}", q.depth()))?;
        let symbolic = eval_symbolic(&q, &inst).map(|r| r.apply_valuation(&h));
        let ground = eval_ground(&q, &inst.apply_valuation(&h));
        match (symbolic, ground) {
            (Ok(a), Ok(b)) => tables_commute(&a, &b).map_err(|e| format!("case {i}: {e}; {q:?}"))?,
            (Err(_), Err(_)) => both_err += 1,
            (a, b) => return Err(format!("case {i}: {:?} vs {:?}", a.err(), b.err())),
        }
    }
    let elapsed = t.elapsed();
    ensure(elapsed < Duration::from_secs(60), || format!("took {elapsed:?}"))?;
    Ok(format!("1000 triples commute ({both_err} fail identically) in {elapsed:.2?}"))
}

enum BackendFailure {
    Mismatch(String),
    ZeroRows(String),
}

fn compare_backends() -> Result<(usize, usize), BackendFailure> {
    let mismatch = |e: String| BackendFailure::Mismatch(e);
    let (mut compared, mut rows) = (0, 0);
    for seed in 0..3 {
        let cfg = BenchConfig {
            n: 100,
            seed,
            ..BenchConfig::default()
        };
        let data = gen_bench_instance(&cfg);
        for q in BenchQuery::ALL {
            let a = run_query(&data, q, Backend::Inline, &cfg).map_err(|e| mismatch(e.to_string()))?;
            let b = run_query(&data, q, Backend::Partitioned, &cfg).map_err(|e| mismatch(e.to_string()))?;
            let pt = b
                .partitioned
                .as_ref()
                .ok_or_else(|| mismatch("partitioned run lost its table".into()))?;
            ensure(a.result == b.result, || format!("{q} seed {seed}: results differ")).map_err(mismatch)?;
            ensure(a.constraints == b.constraints, || {
                format!("{q} seed {seed}: constraint systems differ")
            })
            .map_err(mismatch)?;
            let (da, db) = (a.row.discord, b.row.discord);
            ensure(
                match (da, db) {
                    (Some(x), Some(y)) => (x - y).abs() <= 1e-9 * x.abs().max(1.0),
                    (None, None) => true,
                    _ => false,
                },
                || format!("{q} seed {seed}: discord {da:?} vs {db:?}"),
            )
            .map_err(mismatch)?;
            compared += 1;
            let zeros = pt.zero_coefficient_rows();
            if zeros > 0 {
                return Err(BackendFailure::ZeroRows(format!(
                    "{q} seed {seed}: {zeros} zero-coefficient rows"
                )));
            }
            rows += pt.len();
        }
    }
    Ok((compared, rows))
}

fn criteria_4_and_5() -> (Outcome, Outcome) {
    match compare_backends() {
        Ok((compared, rows)) => (
            Ok(format!("{compared} query runs identical across backends")),
            Ok(format!("no zero coefficients across {rows} partitioned rows")),
        ),
        Err(BackendFailure::ZeroRows(e)) => (Ok("backends agreed up to the failure".into()), Err(e)),
        Err(BackendFailure::Mismatch(e)) => (Err(e.clone()), Err(format!("not reached: {e}"))),
    }
}

fn example_2_5() -> Result<Instance, String> {
    let cat = Arc::new(Catalog::new());
    let mut inst = Instance::new(cat.clone());
    let week = || KeyAttr::new("week", KeyType::Week);
    let mut districts = String::from("district,week,cases\n");
    for d in ["I", "II", "III", "IV", "V", "VI", "VII", "VIII", "IX", "X", "XI", "XII"] {
        districts.push_str(&format!("{d},2110W25,75\n"));
    }
    let sources = [
        ("ReportedDistrict", vec![KeyAttr::new("district", KeyType::Text), week()], "cases", districts),
        ("ReportedCountry", vec![week()], "cases", "week,cases\n2110W25,1000\n".to_string()),
        ("Census", vec![week()], "deaths", "week,deaths\n2110W25,20\n".to_string()),
    ];
    for (name, keys, value, csv) in sources {
        let sig = Signature::new(keys, vec![value.into()]).map_err(|e| e.to_string())?;
        let t = read_table(csv.as_bytes(), name, &sig, &EncodingPolicy::exact(1), &cat)
            .map_err(|e| e.to_string())?;
        inst.insert(name, t);
    }
    Ok(inst)
}

fn criterion_6() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let opts = SolveOptions::default();
    let mut equations = 0;
    for i in 0..100 {
        let case = consistent_case(&mut rng);
        for (label, inst) in [("ground", &case.ground), ("encoded", &case.encoded)] {
            let (_, phi) = run_spec(&case.spec, inst).map_err(|e| format!("case {i}: {e}"))?;
            equations += phi.len();
            let r = solve_constraints(&phi, inst.catalog(), &opts).map_err(|e| e.to_string())?;
            ensure(
                r.status == Status::Concordant && r.discord.is_some_and(|d| d <= 1e-9),
                || format!("case {i} ({label}): {} discord {:?}", r.status, r.discord),
            )?;
        }
    }
    let p = load_panem()?;
    let ground = example_2_5()?;
    let (_, phi) = run_spec(&p.spec, &ground).map_err(|e| e.to_string())?;
    let r = solve_constraints(&phi, ground.catalog(), &opts).map_err(|e| e.to_string())?;
    ensure(r.status == Status::Infeasible, || {
        format!("contradictory ground instance reported {}", r.status)
    })?;
    Ok(format!(
        "100 generated cases concordant ({equations} equations); contradictory instance infeasible"
    ))
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    v[v.len() / 2]
}

fn criterion_7() -> Outcome {
    let scaling_queries = [
        BenchQuery::Q1,
        BenchQuery::Q4,
        BenchQuery::Q5,
        BenchQuery::T1,
        BenchQuery::T4,
        BenchQuery::T5,
    ];
    let mut eval_ms: BTreeMap<(BenchQuery, usize), f64> = BTreeMap::new();
    let mut min_noisy = f64::INFINITY;
    for n in [100, 1000] {
        for (noise, null_prob) in [(0.0, 0.0), (0.05, 0.01)] {
            let cfg = BenchConfig {
                n,
                noise_sigma: noise,
                null_prob,
                backends: vec![Backend::Inline],
                ..BenchConfig::default()
            };
            let data = gen_bench_instance(&cfg);
            for q in BenchQuery::ALL {
                let out = run_query(&data, q, Backend::Inline, &cfg).map_err(|e| e.to_string())?;
                let d = out.row.discord.ok_or_else(|| format!("{q} n={n}: infeasible"))?;
                if noise == 0.0 {
                    ensure(d <= 1e-9 && out.row.status == Status::Concordant, || {
                        format!("{q} n={n}: undistorted discord {d}")
                    })?;
                } else {
                    ensure(d >= 1e-6, || format!("{q} n={n}: distorted discord {d}"))?;
                    min_noisy = min_noisy.min(d);
                }
                if noise == 0.0 && scaling_queries.contains(&q) {
                    let mut times = vec![out.row.eval_ms];
                    for _ in 0..2 {
                        let o = run_query(&data, q, Backend::Inline, &cfg).map_err(|e| e.to_string())?;
                        times.push(o.row.eval_ms);
                    }
                    eval_ms.insert((q, n), median(times));
                }
            }
        }
    }
    let mut ratios = Vec::new();
    for q in scaling_queries {
        let ratio = eval_ms[&(q, 1000)] / eval_ms[&(q, 100)];
        ensure(ratio >= 3.0, || format!("{q}: eval time ratio {ratio:.2}"))?;
        ratios.push(format!("{q} {ratio:.0}x"));
    }
    Ok(format!(
        "all queries complete; min distorted discord {min_noisy:.3e}; scaling {}",
        ratios.join(" ")
    ))
}

fn criterion_8() -> Outcome {
    let t = Instant::now();
    let dir = fixtures().join("casestudy");
    let text = read(&dir.join("casestudy.spec"))?;
    let mut sweep = Vec::new();
    for lag in 1..=8 {
        let overrides = BTreeMap::from([("lag".to_string(), lag as f64)]);
        let doc = parse_with(&text, &overrides).map_err(|e| e.to_string())?;
        let spec = doc.validate().map_err(|e| e.to_string())?;
        let inst = load_instance(&doc, &dir).map_err(|e| e.to_string())?;
        let (_, phi) = run_spec(&spec, &inst).map_err(|e| e.to_string())?;
        let r = solve_constraints(&phi, inst.catalog(), &SolveOptions::default())
            .map_err(|e| e.to_string())?;
        sweep.push((lag, r.discord.ok_or_else(|| format!("lag {lag}: infeasible"))?));
    }
    let best = sweep
        .iter()
        .copied()
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .expect("non-empty sweep");
    let ties = sweep.iter().filter(|(_, d)| *d == best.1).count();
    let elapsed = t.elapsed();
    let table: Vec<String> = sweep.iter().map(|(l, d)| format!("{l}:{d:.3}")).collect();
    ensure(best.0 == 3 && ties == 1, || {
        format!("argmin at lag {} ({ties} ties): {}", best.0, table.join(" "))
    })?;
    ensure(elapsed < Duration::from_secs(10), || format!("took {elapsed:?}"))?;
    Ok(format!("unique argmin at lag 3 [{}] in {elapsed:.2?}", table.join(" ")))
}

fn guarded(f: impl FnOnce() -> Outcome) -> Outcome {
    panic::catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
        let msg = e
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_default();
        Err(format!("panicked: {msg}"))
    })
}

fn main() {
    let (c4, c5) = panic::catch_unwind(criteria_4_and_5)
        .unwrap_or_else(|_| (Err("panicked".into()), Err("panicked".into())));
    let results: Vec<(usize, &str, Outcome)> = vec![
        (1, "Panem equations and hand-solution costs", guarded(criterion_1)),
        (2, "solver optimum matches dense oracle", guarded(criterion_2)),
        (3, "evaluation commutes with valuations", guarded(criterion_3)),
        (4, "inline and partitioned backends agree", c4),
        (5, "partitioned results hold no zero coefficients", c5),
        (6, "concordance soundness", guarded(criterion_6)),
        (7, "microbenchmark pipeline", guarded(criterion_7)),
        (8, "case-study lag sweep", guarded(criterion_8)),
    ];
    let mut failed = 0;
    for (n, name, outcome) in &results {
        match outcome {
            Ok(detail) => println!("PASS criterion {n}: {name}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL criterion {n}: {name}: {detail}");
            }
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
