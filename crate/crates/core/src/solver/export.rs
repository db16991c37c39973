//! Plain-text QP exchange format.
//!
//! ```text
//! concord-qp 1
//! [variables]
//! <id> <kind> <weight> <label…>
//! [constraints]
//! <row> <var-id> <coeff>
//! [rhs]
//! <row> <value>
//! [metadata]
//! variables <n>
//! constraints <m>
//! nonzeros <nnz>
//! contradictions <c>
//! tolerance_feasibility <t>
//! tolerance_concordance <t>
//! ```
//! Reals are written with 17 significant digits.

use std::collections::HashMap;
use std::fmt::Write as _;

use thiserror::Error;

use super::{QpProblem, QpVar, SolveOptions};
use crate::model::{VarId, VarKind};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum QpFormatError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("metadata `{0}` does not match the document")]
    Metadata(String),
}

fn real(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn write_qp(p: &QpProblem, opts: &SolveOptions) -> String {
    let mut s = String::from("concord-qp 1\n[variables]\n");
    for v in &p.vars {
        let _ = writeln!(
            s,
            "{} {} {} {}",
            v.id.0,
            v.kind.name(),
            real(v.weight),
            v.label
        );
    }
    s.push_str("[constraints]\n");
    for (r, row) in p.rows.iter().enumerate() {
        for &(c, a) in row {
            let _ = writeln!(s, "{r} {} {}", p.vars[c].id.0, real(a));
        }
    }
    s.push_str("[rhs]\n");
    for (r, b) in p.rhs.iter().enumerate() {
        let _ = writeln!(s, "{r} {}", real(*b));
    }
    s.push_str("[metadata]\n");
    let _ = writeln!(s, "variables {}", p.vars.len());
    let _ = writeln!(s, "constraints {}", p.rows.len());
    let _ = writeln!(s, "nonzeros {}", p.nnz());
    let _ = writeln!(s, "contradictions {}", p.contradictions);
    let _ = writeln!(s, "tolerance_feasibility {}", real(opts.feasibility_tol));
    let _ = writeln!(s, "tolerance_concordance {}", real(opts.concordance_tol));
    s
}

/// Parses a document written by [`write_qp`]; the tolerances in its
/// metadata are returned alongside the problem.
pub fn read_qp(text: &str) -> Result<(QpProblem, SolveOptions), QpFormatError> {
    let err = |line: usize, message: &str| QpFormatError::Syntax {
        line,
        message: message.to_string(),
    };
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
    match lines.next() {
        Some((_, "concord-qp 1")) => {}
        _ => return Err(err(1, "expected header `concord-qp 1`")),
    }
    let mut section = "";
    let mut p = QpProblem::default();
    let mut index: HashMap<u32, usize> = HashMap::new();
    let mut opts = SolveOptions::default();
    let mut meta: HashMap<String, f64> = HashMap::new();
    for (n, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        if line.starts_with('[') {
            section = match line {
                "[variables]" | "[constraints]" | "[rhs]" | "[metadata]" => line,
                _ => return Err(err(n, "unknown section")),
            };
            continue;
        }
        let num = |s: Option<&str>| -> Result<f64, QpFormatError> {
            s.and_then(|s| s.parse().ok())
                .ok_or_else(|| err(n, "expected a number"))
        };
        let int = |s: Option<&str>| -> Result<usize, QpFormatError> {
            s.and_then(|s| s.parse().ok())
                .ok_or_else(|| err(n, "expected an integer"))
        };
        match section {
            "[variables]" => {
                let mut f = line.splitn(4, ' ');
                let id = int(f.next())? as u32;
                let kind = f
                    .next()
                    .and_then(VarKind::parse)
                    .ok_or_else(|| err(n, "unknown variable kind"))?;
                let weight = num(f.next())?;
                let label = f.next().unwrap_or("").to_string();
                if index.insert(id, p.vars.len()).is_some() {
                    return Err(err(n, "duplicate variable id"));
                }
                p.vars.push(QpVar {
                    id: VarId(id),
                    kind,
                    weight,
                    label,
                });
            }
            "[constraints]" => {
                let mut f = line.split(' ');
                let r = int(f.next())?;
                let id = int(f.next())? as u32;
                let a = num(f.next())?;
                let c = *index
                    .get(&id)
                    .ok_or_else(|| err(n, "undeclared variable"))?;
                if r >= p.rows.len() {
                    p.rows.resize(r + 1, Vec::new());
                }
                p.rows[r].push((c, a));
            }
            "[rhs]" => {
                let mut f = line.split(' ');
                let r = int(f.next())?;
                let b = num(f.next())?;
                if r >= p.rhs.len() {
                    p.rhs.resize(r + 1, 0.0);
                }
                p.rhs[r] = b;
            }
            "[metadata]" => {
                let mut f = line.split(' ');
                let key = f.next().unwrap_or_default().to_string();
                meta.insert(key, num(f.next())?);
            }
            _ => return Err(err(n, "content before the first section")),
        }
    }
    let m = p.rows.len().max(p.rhs.len());
    p.rows.resize(m, Vec::new());
    p.rhs.resize(m, 0.0);
    let expect = |k: &str, v: usize| match meta.get(k) {
        Some(x) if *x as usize == v => Ok(()),
        None => Ok(()),
        Some(_) => Err(QpFormatError::Metadata(k.to_string())),
    };
    expect("variables", p.vars.len())?;
    expect("constraints", m)?;
    expect("nonzeros", p.nnz())?;
    p.contradictions = meta.get("contradictions").map_or(0, |c| *c as usize);
    if let Some(t) = meta.get("tolerance_feasibility") {
        opts.feasibility_tol = *t;
    }
    if let Some(t) = meta.get("tolerance_concordance") {
        opts.concordance_tol = *t;
    }
    Ok((p, opts))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_exact() {
        let p = QpProblem {
            vars: vec![
                QpVar {
                    id: VarId(3),
                    kind: VarKind::Error,
                    weight: 1.0,
                    label: "R[a b].x".into(),
                },
                QpVar {
                    id: VarId(9),
                    kind: VarKind::Null,
                    weight: 0.0,
                    label: String::new(),
                },
            ],
            rows: vec![vec![(0, 1.0), (1, -1.0 / 3.0)], vec![(1, 0.1)]],
            rhs: vec![std::f64::consts::PI, -2.5e-300],
            contradictions: 0,
        };
        let text = write_qp(&p, &SolveOptions::default());
        let (q, opts) = read_qp(&text).unwrap();
        assert_eq!(q, p);
        assert_eq!(opts, SolveOptions::default());
    }

    #[test]
    fn bad_header_is_rejected() {
        assert!(read_qp("qp\n").is_err());
    }
}
