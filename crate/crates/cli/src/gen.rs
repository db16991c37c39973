//! Random schemas, instances, valuations and well-typed query trees.

use std::sync::Arc;

use concord_core::algebra::{eval_ground, typecheck, AggFunc, AggItem, Cond, Expr, Operand, Query, Schema};
use concord_core::model::{
    Catalog, Instance, KeyAttr, KeyType, KeyValue, LinExpr, STable, Signature, Valuation, VarId,
    VarKind, VarLabel,
};
use concord_core::align::{AlignmentSpec, ViewDef};
use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;

/// Shared key attributes; a name always has the same type so joins line up.
const KEYS: &[(&str, KeyType)] = &[
    ("k", KeyType::Integer),
    ("m", KeyType::Integer),
    ("w", KeyType::Week),
    ("t", KeyType::Text),
];

const TEXTS: &[&str] = &["a", "b", "c", "d"];

fn key_value<R: Rng>(rng: &mut R, ty: KeyType) -> KeyValue {
    match ty {
        KeyType::Integer => KeyValue::Integer(rng.random_range(0..5)),
        KeyType::Week => KeyValue::week(2020, rng.random_range(1..=6)).expect("valid week"),
        KeyType::Text => KeyValue::text(*TEXTS.choose(rng).expect("non-empty")),
        KeyType::Decimal => KeyValue::decimal(f64::from(rng.random_range(0..5u8)) / 2.0),
        KeyType::Date => KeyValue::Date(rng.random_range(18_000..18_006)),
    }
}

/// Between two and three relations `R0…`; relation `i` has values
/// `v{i}_0…`, so value names never clash across relations.
pub fn random_schema<R: Rng>(rng: &mut R) -> Schema {
    let mut schema = Schema::new();
    for i in 0..rng.random_range(2..=3) {
        let mut keys: Vec<&(&str, KeyType)> = KEYS.iter().collect();
        keys.shuffle(rng);
        keys.truncate(rng.random_range(1..=3));
        let keys = keys.into_iter().map(|(n, t)| KeyAttr::new(*n, *t)).collect();
        let values = (0..rng.random_range(1..=2)).map(|j| format!("v{i}_{j}")).collect();
        schema.insert(format!("R{i}"), Signature::new(keys, values).expect("distinct names"));
    }
    schema
}

/// Populates every relation with at most `max_rows` rows. Each value is a
/// constant plus up to two terms; variables are shared across tables.
pub fn random_instance<R: Rng>(rng: &mut R, schema: &Schema, max_rows: usize) -> Instance {
    let catalog = Arc::new(Catalog::new());
    let pool: Vec<VarId> = (0..rng.random_range(1..=12))
        .map(|i| {
            let kind = if rng.random_bool(0.8) {
                VarKind::Error
            } else {
                VarKind::Null
            };
            catalog.alloc(kind, VarLabel::new("gen", vec![i.to_string()], "x"))
        })
        .collect();
    let mut inst = Instance::new(catalog);
    for (name, sig) in schema {
        let mut t = STable::new(sig.clone());
        for _ in 0..rng.random_range(0..=max_rows) {
            let key: Vec<KeyValue> = sig.keys().iter().map(|k| key_value(rng, k.ty)).collect();
            if t.contains_key(&key) {
                continue;
            }
            let values = sig
                .values()
                .iter()
                .map(|_| {
                    let c = f64::from(rng.random_range(-20..=20i8));
                    let terms: Vec<(VarId, f64)> = (0..rng.random_range(0..=2))
                        .map(|_| {
                            (*pool.choose(rng).expect("non-empty"), f64::from(rng.random_range(-5..=5i8)))
                        })
                        .collect();
                    LinExpr::from_terms(c, terms)
                })
                .collect();
            t.insert(key, values).expect("fresh key");
        }
        inst.insert(name.clone(), t);
    }
    inst
}

/// Uniform values in [-3, 3] for every catalog variable.
pub fn random_valuation<R: Rng>(rng: &mut R, catalog: &Catalog) -> Valuation {
    Valuation::from_pairs(
        catalog
            .entries()
            .into_iter()
            .map(|v| (v.id, rng.random_range(-3.0..=3.0))),
    )
}

/// Generator of coalescing-free queries; every returned query typechecks.
pub struct QueryGen<'a> {
    schema: &'a Schema,
    fresh: usize,
}

impl<'a> QueryGen<'a> {
    pub fn new(schema: &'a Schema) -> Self {
        QueryGen { schema, fresh: 0 }
    }

    fn name(&mut self, prefix: &str) -> String {
        self.fresh += 1;
        format!("{prefix}{}", self.fresh)
    }

    fn sig(&self, q: &Query) -> Option<Signature> {
        typecheck(q, self.schema).ok()
    }

    /// A query of depth at most `depth` (a bare relation has depth 1).
    pub fn query<R: Rng>(&mut self, rng: &mut R, depth: usize) -> Query {
        let names: Vec<&String> = self.schema.keys().collect();
        let base = Query::rel(names.choose(rng).expect("non-empty schema").as_str());
        if depth <= 1 || rng.random_bool(0.15) {
            return base;
        }
        for _ in 0..20 {
            let input = self.query(rng, depth - 1);
            if let Some(q) = self.step(rng, input, depth) {
                if q.depth() <= depth && self.sig(&q).is_some() {
                    return q;
                }
            }
        }
        base
    }

    fn step<R: Rng>(&mut self, rng: &mut R, input: Query, depth: usize) -> Option<Query> {
        let sig = self.sig(&input)?;
        let keys: Vec<&KeyAttr> = sig.keys().iter().collect();
        let values: Vec<&String> = sig.values().iter().collect();
        Some(match rng.random_range(0..11) {
            0 => {
                let c = self.cond(rng, &sig, 2);
                Query::Select(c, Box::new(input))
            }
            1 if !values.is_empty() => {
                let v = values.choose(rng)?;
                Query::ProjectAway(vec![(*v).clone()], Box::new(input))
            }
            2 => {
                let other = self.query(rng, depth - 1);
                if rng.random_bool(0.5) {
                    input.join(other)
                } else {
                    other.join(input)
                }
            }
            3 => {
                let d = self.name("z");
                let (a, b) = (self.cond(rng, &sig, 1), self.cond(rng, &sig, 1));
                Query::DiscUnion(
                    d,
                    Box::new(Query::Select(a, Box::new(input.clone()))),
                    Box::new(Query::Select(b, Box::new(input))),
                )
            }
            4 => {
                let c = self.cond(rng, &sig, 1);
                let right = Query::ProjectAway(
                    sig.values().to_vec(),
                    Box::new(Query::Select(c, Box::new(input.clone()))),
                );
                let right = if sig.values().is_empty() {
                    match right {
                        Query::ProjectAway(_, inner) => *inner,
                        other => other,
                    }
                } else {
                    right
                };
                input.minus(right)
            }
            5 => {
                let from = if rng.random_bool(0.5) && !values.is_empty() {
                    (*values.choose(rng)?).clone()
                } else {
                    keys.choose(rng)?.name.clone()
                };
                let to = self.name(&format!("{from}_"));
                input.rename(&from, &to)
            }
            6 | 7 => {
                let e = self.expr(rng, &sig, 2);
                let attr = self.name("d");
                input.derive(&attr, e)
            }
            8 => {
                let mut ks: Vec<&str> = keys.iter().map(|k| k.name.as_str()).collect();
                ks.shuffle(rng);
                ks.truncate(rng.random_range(0..=ks.len()));
                let vs: Vec<&str> = values
                    .iter()
                    .filter(|_| rng.random_bool(0.7))
                    .map(|v| v.as_str())
                    .collect();
                input.aggregate(&ks, &vs)
            }
            9 => {
                let mut ks: Vec<String> = keys.iter().map(|k| k.name.clone()).collect();
                ks.truncate(rng.random_range(0..=ks.len()));
                let mut items = vec![AggItem {
                    func: AggFunc::Count,
                    attr: None,
                    alias: Some(self.name("n")),
                }];
                if let Some(v) = values.choose(rng) {
                    items.push(AggItem {
                        func: AggFunc::Avg,
                        attr: Some((*v).clone()),
                        alias: Some(self.name("avg")),
                    });
                    items.push(AggItem::sum((*v).clone()));
                }
                Query::GroupBy {
                    keys: ks,
                    items,
                    input: Box::new(input),
                }
            }
            _ => {
                let k = keys
                    .iter()
                    .filter(|k| k.ty.is_shiftable())
                    .collect::<Vec<_>>()
                    .choose(rng)
                    .map(|k| k.name.clone())?;
                input.shift(&k, rng.random_range(-2..=2))
            }
        })
    }

    fn cond<R: Rng>(&mut self, rng: &mut R, sig: &Signature, depth: usize) -> Cond {
        if depth > 0 && rng.random_bool(0.3) {
            let a = self.cond(rng, sig, depth - 1);
            return if rng.random_bool(0.5) {
                Cond::not(a)
            } else {
                let b = self.cond(rng, sig, depth - 1);
                Cond::and(a, b)
            };
        }
        let Some(k) = sig.keys().choose(rng) else {
            return Cond::True;
        };
        let lhs = Operand::Attr(k.name.clone());
        let rhs = match sig.keys().iter().filter(|o| o.ty == k.ty && o.name != k.name).collect::<Vec<_>>().choose(rng) {
            Some(o) if rng.random_bool(0.2) => Operand::Attr(o.name.clone()),
            _ => Operand::Lit(key_value(rng, k.ty)),
        };
        if rng.random_bool(0.5) {
            Cond::Eq(lhs, rhs)
        } else {
            Cond::Lt(lhs, rhs)
        }
    }

    fn expr<R: Rng>(&mut self, rng: &mut R, sig: &Signature, depth: usize) -> Expr {
        let numeric_keys: Vec<&KeyAttr> = sig.keys().iter().filter(|k| k.ty.is_numeric()).collect();
        let atom = |rng: &mut R| -> Expr {
            match rng.random_range(0..4) {
                0 => Expr::Num(f64::from(rng.random_range(-4..=4i8))),
                1 if !numeric_keys.is_empty() => {
                    Expr::attr(numeric_keys.choose(rng).expect("non-empty").name.clone())
                }
                _ => match sig.values().choose(rng) {
                    Some(v) => Expr::attr(v.clone()),
                    None => Expr::Num(1.0),
                },
            }
        };
        if depth == 0 || rng.random_bool(0.3) {
            return atom(rng);
        }
        let a = self.expr(rng, sig, depth - 1);
        match rng.random_range(0..4) {
            0 => Expr::add(a, self.expr(rng, sig, depth - 1)),
            1 => Expr::sub(a, self.expr(rng, sig, depth - 1)),
            2 => Expr::mul(Expr::Num(*[0.5, 2.0, -3.0].choose(rng).expect("non-empty")), a),
            _ => Expr::div(a, Expr::Num(*[2.0, 4.0, -0.5].choose(rng).expect("non-empty"))),
        }
    }
}

/// Replaces every value `v` of every table by `v·(1+x)` (or `x` when
/// `v = 0`) with a fresh error variable.
pub fn encode_errors(inst: &Instance) -> Instance {
    let catalog = Arc::new(inst.catalog().snapshot());
    let mut out = Instance::new(catalog.clone());
    for (name, t) in inst.tables() {
        let mut enc = STable::new(t.signature().clone());
        for (key, vals) in t.rows() {
            let rendered: Vec<String> = key.iter().map(ToString::to_string).collect();
            let vals = vals
                .iter()
                .zip(t.signature().values())
                .map(|(e, attr)| {
                    let x = catalog.alloc(VarKind::Error, VarLabel::new(name.clone(), rendered.clone(), attr.clone()));
                    let v = e.constant_term();
                    if v == 0.0 {
                        e.add(&LinExpr::var(x))
                    } else {
                        e.add(&LinExpr::term(x, v))
                    }
                })
                .collect();
            enc.insert(key.clone(), vals).expect("keys copied from a valid table");
        }
        out.insert(name.clone(), enc);
    }
    out
}

/// A random alignment that the generated data satisfies exactly.
pub struct ConsistentCase {
    pub spec: AlignmentSpec,
    /// Variable-free sources.
    pub ground: Instance,
    /// The same sources with an error variable on every value.
    pub encoded: Instance,
}

/// Grounds a random instance, evaluates a random query `q` on it, stores
/// the result as source `Obs`, and aligns `Obs ⊔ q`.
pub fn consistent_case<R: Rng>(rng: &mut R) -> ConsistentCase {
    let schema = random_schema(rng);
    let symbolic = random_instance(rng, &schema, 20);
    let h = random_valuation(rng, symbolic.catalog());
    let mut ground = Instance::new(Arc::new(Catalog::new()));
    for (name, t) in symbolic.tables() {
        ground.insert(name.clone(), t.apply_valuation(&h));
    }
    let q = QueryGen::new(&schema).query(rng, 3);
    let obs = eval_ground(&q, &ground).expect("generated queries evaluate");
    ground.insert("Obs", obs);
    let spec = AlignmentSpec {
        source: ground.schema(),
        views: vec![ViewDef {
            name: "Aligned".into(),
            queries: vec![Query::rel("Obs"), q],
        }],
    };
    let encoded = encode_errors(&ground);
    ConsistentCase { spec, ground, encoded }
}
