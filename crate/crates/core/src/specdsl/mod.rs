//! Textual specification documents: table declarations, encoding policies,
//! numeric parameters and view definitions. See `docs/grammar.md`.

mod lexer;
mod parser;
mod printer;

pub use printer::{print_cond, print_document, print_expr, print_query};

use std::collections::BTreeMap;

use thiserror::Error;

use crate::algebra::{Schema, TypeError};
use crate::align::{AlignmentSpec, ViewDef};
use crate::model::{KeyAttr, ModelError, Signature};

#[derive(Debug, Clone, PartialEq, Error)]
#[error("{line}:{col}: expected {}, found {found}", expected.join(" or "))]
pub struct ParseError {
    pub line: usize,
    pub col: usize,
    pub expected: Vec<String>,
    pub found: String,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ValidationError {
    #[error("table `{0}` declared twice")]
    DuplicateTable(String),
    #[error(transparent)]
    Signature(#[from] ModelError),
    #[error("policy for unknown column `{0}.{1}`")]
    UnknownColumn(String, String),
    #[error("key column `{0}.{1}` must be exact")]
    KeyPolicy(String, String),
    #[error(transparent)]
    Type(#[from] TypeError),
}

/// How the cells of one value column are read. Under every policy except
/// `Guess` an empty cell becomes a fresh null variable.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Policy {
    Exact,
    /// `v·(1+x)` with a fresh error variable, or a lone `x` when `v = 0`.
    Error,
    /// Cells are read as exact numbers.
    Null,
    /// Empty cells become the educated guess `c·(1+x)`; filled cells are
    /// exact.
    Guess(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct TableDecl {
    pub name: String,
    pub keys: Vec<KeyAttr>,
    pub values: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolicyDecl {
    pub table: String,
    pub column: String,
    pub policy: Policy,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SpecDocument {
    pub tables: Vec<TableDecl>,
    pub policies: Vec<PolicyDecl>,
    /// `set name = value;` in document order, after overrides.
    pub settings: Vec<(String, f64)>,
    pub views: Vec<ViewDef>,
}

pub fn parse(text: &str) -> Result<SpecDocument, ParseError> {
    parse_with(text, &BTreeMap::new())
}

/// Parses with `overrides` replacing the values of matching `set` lines.
/// Parameters (`$name`) are substituted at parse time.
pub fn parse_with(
    text: &str,
    overrides: &BTreeMap<String, f64>,
) -> Result<SpecDocument, ParseError> {
    parser::Parser::new(text, overrides)?.document()
}

/// Byte ranges of the tokens of `text`, for editors and mutation tests.
pub fn token_spans(text: &str) -> Result<Vec<std::ops::Range<usize>>, ParseError> {
    let toks = lexer::lex(text)?;
    Ok(toks
        .into_iter()
        .filter(|t| t.tok != lexer::Tok::Eof)
        .map(|t| t.span)
        .collect())
}

impl SpecDocument {
    pub fn setting(&self, name: &str) -> Option<f64> {
        self.settings
            .iter()
            .rev()
            .find(|(k, _)| k == name)
            .map(|(_, v)| *v)
    }

    /// Policy of a value column; unlisted columns are exact.
    pub fn policy(&self, table: &str, column: &str) -> Policy {
        self.policies
            .iter()
            .rev()
            .find(|p| p.table == table && p.column == column)
            .map_or(Policy::Exact, |p| p.policy)
    }

    pub fn schema(&self) -> Result<Schema, ValidationError> {
        let mut schema = Schema::new();
        for t in &self.tables {
            let sig = Signature::new(t.keys.clone(), t.values.clone())?;
            if schema.insert(t.name.clone(), sig).is_some() {
                return Err(ValidationError::DuplicateTable(t.name.clone()));
            }
        }
        Ok(schema)
    }

    /// Resolves names and typechecks every view.
    pub fn validate(&self) -> Result<AlignmentSpec, ValidationError> {
        let source = self.schema()?;
        for p in &self.policies {
            let sig = source
                .get(&p.table)
                .ok_or_else(|| ValidationError::UnknownColumn(p.table.clone(), p.column.clone()))?;
            if sig.key_index(&p.column).is_some() {
                if p.policy != Policy::Exact {
                    return Err(ValidationError::KeyPolicy(
                        p.table.clone(),
                        p.column.clone(),
                    ));
                }
            } else if sig.value_index(&p.column).is_none() {
                return Err(ValidationError::UnknownColumn(
                    p.table.clone(),
                    p.column.clone(),
                ));
            }
        }
        let spec = AlignmentSpec {
            source,
            views: self.views.clone(),
        };
        spec.check()?;
        Ok(spec)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebra::{AggFunc, Cond, Expr, Operand, Query};
    use crate::model::{KeyType, KeyValue};

    const PANEM: &str = r#"
        table ReportedDistrict(district: text, week: week | cases);
        table ReportedCountry(week: week | cases);
        table Census(week: week | deaths);
        policy ReportedDistrict.cases = error;
        policy ReportedCountry.cases = error;
        policy Census.deaths = error;
        view SumOfCases := ReportedCountry fuse agg(week; sum cases)(ReportedDistrict);
        view NumberOfDeaths := Census
            ⊔ projaway(cases)(derive(deaths := 0.015 * cases)(SumOfCases));
    "#;

    #[test]
    fn sum_of_cases_view() {
        let doc = parse(PANEM).unwrap();
        assert_eq!(doc.views[0].name, "SumOfCases");
        assert_eq!(
            doc.views[0].queries,
            vec![
                Query::rel("ReportedCountry"),
                Query::rel("ReportedDistrict").aggregate(&["week"], &["cases"])
            ]
        );
        assert_eq!(doc.policy("Census", "deaths"), Policy::Error);
        let spec = doc.validate().unwrap();
        assert_eq!(spec.views.len(), 2);
    }

    #[test]
    fn empty_document() {
        assert_eq!(parse("").unwrap(), SpecDocument::default());
        assert_eq!(
            parse("  # only a comment\n").unwrap(),
            SpecDocument::default()
        );
    }

    #[test]
    fn round_trip() {
        let doc = parse(PANEM).unwrap();
        let again = parse(&print_document(&doc)).unwrap();
        assert_eq!(doc, again);
    }

    #[test]
    fn sugar_and_parameters() {
        let text = r#"
            table T(w: week, r: text | d);
            set lag = 3;
            view V := shift(w + $lag)(select(w >= 2020W10 and (r = "north" or r != "south"))(T));
            view A := agg(r; avg d as mean, count as n)(T);
        "#;
        let doc = parse(text).unwrap();
        let Query::KeyShift { delta, input, .. } = &doc.views[0].queries[0] else {
            panic!()
        };
        assert_eq!(*delta, 3);
        let Query::Select(c, _) = &**input else {
            panic!()
        };
        let wk = Operand::Lit(KeyValue::week(2020, 10).unwrap());
        let ge = Cond::not(Cond::Lt(Operand::Attr("w".into()), wk));
        let Cond::And(a, _) = c else { panic!() };
        assert_eq!(**a, ge);
        let Query::GroupBy { items, .. } = &doc.views[1].queries[0] else {
            panic!()
        };
        assert_eq!(items[1].func, AggFunc::Count);
        let over = BTreeMap::from([("lag".to_string(), 5.0)]);
        let doc5 = parse_with(text, &over).unwrap();
        assert!(matches!(
            &doc5.views[0].queries[0],
            Query::KeyShift { delta: 5, .. }
        ));
        assert_eq!(parse(&print_document(&doc)).unwrap(), doc);
        doc.validate().unwrap();
    }

    #[test]
    fn aggregation_may_keep_keys_only() {
        let doc = parse("table T(k: int | a); view V := agg(k; )(T);").unwrap();
        assert!(matches!(
            &doc.views[0].queries[0],
            Query::Aggregate { values, .. } if values.is_empty()
        ));
        assert_eq!(parse(&print_document(&doc)).unwrap(), doc);
    }

    #[test]
    fn expressions_print_fully_parenthesized() {
        let doc =
            parse("table T(k: int | a, b); view V := derive(c := a - -2.5 * b / 4)(T);").unwrap();
        let Query::Derive { expr, .. } = &doc.views[0].queries[0] else {
            panic!()
        };
        assert_eq!(
            *expr,
            Expr::sub(
                Expr::attr("a"),
                Expr::div(Expr::mul(Expr::Num(-2.5), Expr::attr("b")), Expr::Num(4.0))
            )
        );
        assert_eq!(print_expr(expr), "(a - ((-2.5 * b) / 4.0))");
    }

    #[test]
    fn errors_carry_positions() {
        let e = parse("table T(k: int | a);\nview V := select(k = )(T);").unwrap_err();
        assert_eq!((e.line, e.col), (2, 22));
        assert!(e.expected.iter().any(|x| x.contains("literal")));
        let e = parse("table T(k: colour);").unwrap_err();
        assert_eq!(e.col, 12);
    }

    #[test]
    fn validation_catches_unknown_names_and_key_policies() {
        let doc = parse("table T(k: int | a); view V := projaway(b)(T);").unwrap();
        assert!(matches!(doc.validate(), Err(ValidationError::Type(_))));
        let doc = parse("table T(k: int | a); policy T.k = error;").unwrap();
        assert!(matches!(
            doc.validate(),
            Err(ValidationError::KeyPolicy(..))
        ));
        let doc = parse("table T(k: int | a); policy T.z = null;").unwrap();
        assert!(matches!(
            doc.validate(),
            Err(ValidationError::UnknownColumn(..))
        ));
        let doc = parse("table T(k: int | a); view V := select(a = 1)(T);").unwrap();
        let err = doc.validate().unwrap_err().to_string();
        assert!(err.contains("selection"), "{err}");
        assert_eq!(doc.tables[0].keys[0].ty, KeyType::Integer);
    }
}
