//! Weight files: objective weights chosen by variable label.
//!
//! ```text
//! # pattern            weight
//! kind:null            1
//! ReportedDistrict[*]* 2.5
//! Census[*].deaths     0.5
//! ```
//! Patterns are globs (`*` any run, `?` one character) matched against the
//! whole label `Source[k1,k2].attr`, or `kind:<error|null|llun>`. For each
//! variable the last matching rule wins; unmatched variables keep the
//! default weight of their kind.

use concord_core::model::{Catalog, VarKind};
use regex::Regex;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum WeightFileError {
    #[error("line {line}: expected `<pattern> <weight>`")]
    Shape { line: usize },
    #[error("line {line}: `{value}` is not a non-negative number")]
    Weight { line: usize, value: String },
    #[error("line {line}: unknown variable kind `{kind}`")]
    Kind { line: usize, kind: String },
}

#[derive(Debug, Clone)]
enum Matcher {
    Kind(VarKind),
    Label(Regex),
}

#[derive(Debug, Clone)]
struct Rule {
    matcher: Matcher,
    weight: f64,
}

#[derive(Debug, Clone, Default)]
pub struct WeightRules {
    rules: Vec<Rule>,
}

fn glob(pattern: &str) -> Regex {
    let mut re = String::from("^");
    for c in pattern.chars() {
        match c {
            '*' => re.push_str(".*"),
            '?' => re.push('.'),
            c => re.push_str(&regex::escape(&c.to_string())),
        }
    }
    re.push('$');
    Regex::new(&re).expect("escaped glob is a valid regex")
}

impl WeightRules {
    pub fn parse(text: &str) -> Result<Self, WeightFileError> {
        let mut rules = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let body = raw.split('#').next().unwrap_or("").trim();
            if body.is_empty() {
                continue;
            }
            let mut parts = body.split_whitespace();
            let (Some(pat), Some(w), None) = (parts.next(), parts.next(), parts.next()) else {
                return Err(WeightFileError::Shape { line });
            };
            let weight: f64 = w
                .parse()
                .ok()
                .filter(|v: &f64| v.is_finite() && *v >= 0.0)
                .ok_or_else(|| WeightFileError::Weight {
                    line,
                    value: w.to_string(),
                })?;
            let matcher = match pat.strip_prefix("kind:") {
                Some(k) => Matcher::Kind(VarKind::parse(k).ok_or_else(|| WeightFileError::Kind {
                    line,
                    kind: k.to_string(),
                })?),
                None => Matcher::Label(glob(pat)),
            };
            rules.push(Rule { matcher, weight });
        }
        Ok(WeightRules { rules })
    }

    pub fn len(&self) -> usize {
        self.rules.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rules.is_empty()
    }

    /// Sets the weight of every matched variable; returns how many matched.
    pub fn apply(&self, catalog: &Catalog) -> usize {
        let mut matched = 0;
        for info in catalog.entries() {
            let label = info.label.to_string();
            let hit = self.rules.iter().rev().find(|r| match &r.matcher {
                Matcher::Kind(k) => *k == info.kind,
                Matcher::Label(re) => re.is_match(&label),
            });
            if let Some(r) = hit {
                catalog.set_weight(info.id, r.weight);
                matched += 1;
            }
        }
        matched
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use concord_core::model::VarLabel;

    #[test]
    fn last_matching_rule_wins() {
        let cat = Catalog::new();
        let a = cat.alloc(VarKind::Error, VarLabel::new("D", vec!["I".into()], "cases"));
        let b = cat.alloc(VarKind::Null, VarLabel::new("D", vec!["XIII".into()], "cases"));
        let c = cat.alloc(VarKind::Error, VarLabel::new("C", vec![], "deaths"));
        let rules = WeightRules::parse("# c1\nkind:null 1\nD[I]* 3 # trailing\n\nD[I?]* 7\n").unwrap();
        assert_eq!(rules.apply(&cat), 2);
        assert_eq!(cat.info(a).unwrap().weight(), 3.0);
        assert_eq!(cat.info(b).unwrap().weight(), 1.0);
        assert_eq!(cat.info(c).unwrap().weight(), 1.0);
        assert!(cat.info(c).unwrap().weight.is_none());
    }

    #[test]
    fn malformed_lines_are_rejected() {
        assert_eq!(
            WeightRules::parse("a").unwrap_err(),
            WeightFileError::Shape { line: 1 }
        );
        assert!(matches!(
            WeightRules::parse("a -1"),
            Err(WeightFileError::Weight { .. })
        ));
        assert!(matches!(
            WeightRules::parse("kind:bogus 1"),
            Err(WeightFileError::Kind { .. })
        ));
    }
}
