use super::ParseError;

#[derive(Debug, Clone, PartialEq)]
pub enum Tok {
    Ident(String),
    Param(String),
    Int(i64),
    Real(f64),
    Str(String),
    Week(String),
    Date(String),
    Sym(&'static str),
    Eof,
}

impl Tok {
    pub fn describe(&self) -> String {
        match self {
            Tok::Ident(s) => format!("`{s}`"),
            Tok::Param(s) => format!("`${s}`"),
            Tok::Int(i) => format!("`{i}`"),
            Tok::Real(r) => format!("`{r:?}`"),
            Tok::Str(s) => format!("{s:?}"),
            Tok::Week(s) | Tok::Date(s) => format!("`{s}`"),
            Tok::Sym(s) => format!("`{s}`"),
            Tok::Eof => "end of input".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Spanned {
    pub tok: Tok,
    pub line: usize,
    pub col: usize,
    /// Byte range in the source.
    pub span: std::ops::Range<usize>,
}

/// Multi-character symbols first so the longest match wins. Unicode
/// operators are mapped onto their ASCII spelling.
const SYMBOLS: &[(&str, &str)] = &[
    (":=", ":="),
    ("->", "->"),
    ("<=", "<="),
    (">=", ">="),
    ("!=", "!="),
    ("≤", "<="),
    ("≥", ">="),
    ("≠", "!="),
    ("→", "->"),
    ("⊔", "fuse"),
    ("⋈", "join"),
    ("⊎", "dunion"),
    ("∖", "minus"),
    ("σ", "select"),
    ("π̂", "projaway"),
    ("ρ", "rename"),
    ("ε", "derive"),
    ("γ", "agg"),
    ("κ", "coalesce"),
    ("¬", "not"),
    ("∧", "and"),
    ("∨", "or"),
    ("(", "("),
    (")", ")"),
    ("[", "["),
    ("]", "]"),
    (",", ","),
    (";", ";"),
    (":", ":"),
    ("|", "|"),
    (".", "."),
    ("=", "="),
    ("<", "<"),
    (">", ">"),
    ("+", "+"),
    ("-", "-"),
    ("*", "*"),
    ("/", "/"),
];

/// Unicode operators that read as words.
fn is_word_alias(s: &str) -> bool {
    matches!(
        s,
        "fuse"
            | "join"
            | "dunion"
            | "minus"
            | "select"
            | "projaway"
            | "rename"
            | "derive"
            | "agg"
            | "coalesce"
            | "not"
            | "and"
            | "or"
    )
}

pub fn lex(src: &str) -> Result<Vec<Spanned>, ParseError> {
    let chars: Vec<char> = src.chars().collect();
    let offsets: Vec<usize> = src
        .char_indices()
        .map(|(b, _)| b)
        .chain([src.len()])
        .collect();
    let mut out = Vec::new();
    let (mut i, mut line, mut col) = (0, 1, 1);
    let advance = |i: &mut usize, line: &mut usize, col: &mut usize, n: usize| {
        for _ in 0..n {
            if chars[*i] == '\n' {
                *line += 1;
                *col = 1;
            } else {
                *col += 1;
            }
            *i += 1;
        }
    };
    while i < chars.len() {
        let c = chars[i];
        if c.is_whitespace() {
            advance(&mut i, &mut line, &mut col, 1);
            continue;
        }
        if c == '#' {
            while i < chars.len() && chars[i] != '\n' {
                advance(&mut i, &mut line, &mut col, 1);
            }
            continue;
        }
        let (l0, c0, start0) = (line, col, i);
        let err = |expected: &str| ParseError {
            line: l0,
            col: c0,
            expected: vec![expected.to_string()],
            found: format!("`{c}`"),
        };
        if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                advance(&mut i, &mut line, &mut col, 1);
            }
            out.push(Spanned {
                tok: Tok::Ident(chars[start..i].iter().collect()),
                line: l0,
                col: c0,
                span: offsets[start0]..offsets[i],
            });
            continue;
        }
        if c == '$' {
            advance(&mut i, &mut line, &mut col, 1);
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                advance(&mut i, &mut line, &mut col, 1);
            }
            if start == i {
                return Err(err("parameter name after `$`"));
            }
            out.push(Spanned {
                tok: Tok::Param(chars[start..i].iter().collect()),
                line: l0,
                col: c0,
                span: offsets[start0]..offsets[i],
            });
            continue;
        }
        if c == '"' {
            advance(&mut i, &mut line, &mut col, 1);
            let mut s = String::new();
            loop {
                match chars.get(i) {
                    None => return Err(err("closing `\"`")),
                    Some('"') => {
                        advance(&mut i, &mut line, &mut col, 1);
                        break;
                    }
                    Some('\\') if matches!(chars.get(i + 1), Some('"') | Some('\\')) => {
                        s.push(chars[i + 1]);
                        advance(&mut i, &mut line, &mut col, 2);
                    }
                    Some(&ch) => {
                        s.push(ch);
                        advance(&mut i, &mut line, &mut col, 1);
                    }
                }
            }
            out.push(Spanned {
                tok: Tok::Str(s),
                line: l0,
                col: c0,
                span: offsets[start0]..offsets[i],
            });
            continue;
        }
        if c.is_ascii_digit() {
            let start = i;
            let digits = |i: &mut usize, line: &mut usize, col: &mut usize| {
                let s = *i;
                while *i < chars.len() && chars[*i].is_ascii_digit() {
                    advance(i, line, col, 1);
                }
                *i > s
            };
            digits(&mut i, &mut line, &mut col);
            // 2110W25
            if i < chars.len()
                && chars[i] == 'W'
                && chars.get(i + 1).is_some_and(char::is_ascii_digit)
            {
                advance(&mut i, &mut line, &mut col, 1);
                digits(&mut i, &mut line, &mut col);
                out.push(Spanned {
                    tok: Tok::Week(chars[start..i].iter().collect()),
                    line: l0,
                    col: c0,
                    span: offsets[start0]..offsets[i],
                });
                continue;
            }
            // 2020-03-01
            let is_date = i - start == 4
                && chars.get(i) == Some(&'-')
                && chars
                    .get(i + 1..i + 3)
                    .is_some_and(|s| s.iter().all(char::is_ascii_digit))
                && chars.get(i + 3) == Some(&'-');
            if is_date {
                advance(&mut i, &mut line, &mut col, 4);
                digits(&mut i, &mut line, &mut col);
                out.push(Spanned {
                    tok: Tok::Date(chars[start..i].iter().collect()),
                    line: l0,
                    col: c0,
                    span: offsets[start0]..offsets[i],
                });
                continue;
            }
            let mut real = false;
            if i < chars.len()
                && chars[i] == '.'
                && chars.get(i + 1).is_some_and(char::is_ascii_digit)
            {
                real = true;
                advance(&mut i, &mut line, &mut col, 1);
                digits(&mut i, &mut line, &mut col);
            }
            if i < chars.len() && (chars[i] == 'e' || chars[i] == 'E') {
                let sign = usize::from(matches!(chars.get(i + 1), Some('+') | Some('-')));
                if chars.get(i + 1 + sign).is_some_and(char::is_ascii_digit) {
                    real = true;
                    advance(&mut i, &mut line, &mut col, 1 + sign);
                    digits(&mut i, &mut line, &mut col);
                }
            }
            let text: String = chars[start..i].iter().collect();
            let tok = if real {
                Tok::Real(text.parse().map_err(|_| err("a number"))?)
            } else {
                Tok::Int(
                    text.parse()
                        .map_err(|_| err("an integer that fits in 64 bits"))?,
                )
            };
            out.push(Spanned {
                tok,
                line: l0,
                col: c0,
                span: offsets[start0]..offsets[i],
            });
            continue;
        }
        let rest: String = chars[i..chars.len().min(i + 3)].iter().collect();
        match SYMBOLS.iter().find(|(s, _)| rest.starts_with(s)) {
            Some((s, canon)) => {
                advance(&mut i, &mut line, &mut col, s.chars().count());
                let tok = if is_word_alias(canon) {
                    Tok::Ident((*canon).to_string())
                } else {
                    Tok::Sym(canon)
                };
                out.push(Spanned {
                    tok,
                    line: l0,
                    col: c0,
                    span: offsets[start0]..offsets[i],
                });
            }
            None => return Err(err("a token")),
        }
    }
    out.push(Spanned {
        tok: Tok::Eof,
        line,
        col,
        span: src.len()..src.len(),
    });
    Ok(out)
}
