//! The `GIBBS-LOG` text model format.
//!
//! ```text
//! GIBBS-LOG 1
//! 2             # variables
//! 2 2           # domain sizes
//! 1             # hyperedges
//! 2 0 1         # arity, then ascending variable indices
//! 0 0           # theta_0
//! 0 0           # theta_1
//! 1 0 0 0       # theta_{01}, row-major, last variable fastest
//! ```
//!
//! `#` starts a comment. Apart from the header, tokens are whitespace
//! separated and may span lines freely.

use std::fmt::Write as _;

use thiserror::Error;

use crate::model::{Hypergraph, Model, ModelError, TableVector};

pub const MAGIC: &str = "GIBBS-LOG";
pub const VERSION: &str = "1";

#[derive(Debug, Error, Clone, PartialEq)]
#[error("line {line}: {kind}")]
pub struct ParseError {
    pub line: usize,
    pub kind: ParseErrorKind,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ParseErrorKind {
    #[error("expected header `{MAGIC} {VERSION}`, found `{0}`")]
    BadHeader(String),
    #[error("unsupported format version `{0}`")]
    VersionMismatch(String),
    #[error("unexpected end of input while reading {0}")]
    UnexpectedEof(String),
    #[error("expected a non-negative integer for {what}, found `{token}`")]
    BadInteger { what: String, token: String },
    #[error("expected a real number for {what}, found `{token}`")]
    BadReal { what: String, token: String },
    #[error("non-finite value `{token}` in {what}")]
    NonFinite { what: String, token: String },
    #[error("unexpected trailing token `{0}`")]
    TrailingToken(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

struct Tokens<'a> {
    items: Vec<(usize, &'a str)>,
    pos: usize,
    last_line: usize,
}

impl<'a> Tokens<'a> {
    fn new(text: &'a str) -> Self {
        let mut items = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let content = line.split('#').next().unwrap_or("");
            items.extend(content.split_whitespace().map(|t| (i + 1, t)));
        }
        let last_line = text.lines().count().max(1);
        Self { items, pos: 0, last_line }
    }

    fn line(&self) -> usize {
        self.items.get(self.pos).map_or(self.last_line, |t| t.0)
    }

    fn next(&mut self, what: &str) -> Result<(usize, &'a str), ParseError> {
        let t = self.items.get(self.pos).copied().ok_or_else(|| ParseError {
            line: self.last_line,
            kind: ParseErrorKind::UnexpectedEof(what.to_string()),
        })?;
        self.pos += 1;
        Ok(t)
    }

    fn integer(&mut self, what: &str) -> Result<(usize, usize), ParseError> {
        let (line, token) = self.next(what)?;
        token.parse().map(|v| (line, v)).map_err(|_| ParseError {
            line,
            kind: ParseErrorKind::BadInteger { what: what.to_string(), token: token.to_string() },
        })
    }

    fn real(&mut self, what: &str) -> Result<f64, ParseError> {
        let (line, token) = self.next(what)?;
        let value: f64 = token.parse().map_err(|_| ParseError {
            line,
            kind: ParseErrorKind::BadReal { what: what.to_string(), token: token.to_string() },
        })?;
        if !value.is_finite() {
            return Err(ParseError {
                line,
                kind: ParseErrorKind::NonFinite { what: what.to_string(), token: token.to_string() },
            });
        }
        Ok(value)
    }
}

/// Parses and validates a `GIBBS-LOG` document.
pub fn parse_model(text: &str) -> Result<Model, ParseError> {
    let mut tokens = Tokens::new(text);
    let (line, magic) = tokens.next("header")?;
    if magic != MAGIC {
        return Err(ParseError { line, kind: ParseErrorKind::BadHeader(magic.to_string()) });
    }
    let (line, version) = tokens.next("format version")?;
    if version != VERSION {
        return Err(ParseError { line, kind: ParseErrorKind::VersionMismatch(version.to_string()) });
    }

    let (_, n) = tokens.integer("variable count")?;
    let mut domains = Vec::with_capacity(n);
    for v in 0..n {
        let (_, d) = tokens.integer(&format!("domain size of variable {v}"))?;
        domains.push(d);
    }
    let (_, m) = tokens.integer("hyperedge count")?;
    let mut edges = Vec::with_capacity(m);
    let mut edge_lines = Vec::with_capacity(m);
    for a in 0..m {
        let (line, k) = tokens.integer(&format!("arity of hyperedge {a}"))?;
        let mut vars = Vec::with_capacity(k);
        for _ in 0..k {
            vars.push(tokens.integer(&format!("variable of hyperedge {a}"))?.1);
        }
        edges.push(vars);
        edge_lines.push(line);
    }
    let structure_line = edge_lines.last().copied().unwrap_or_else(|| tokens.line());
    let graph = Hypergraph::new(domains, edges).map_err(|e| {
        let line = match &e {
            ModelError::ArityTooSmall { edge, .. }
            | ModelError::VariableOutOfRange { edge, .. }
            | ModelError::NotAscending { edge }
            | ModelError::DuplicateEdge { edge, .. } => edge_lines[*edge],
            _ => structure_line,
        };
        ParseError { line, kind: e.into() }
    })?;

    let mut theta = TableVector::zeros(&graph);
    for (v, table) in theta.unary.iter_mut().enumerate() {
        for (s, slot) in table.iter_mut().enumerate() {
            *slot = tokens.real(&format!("theta of variable {v}, state {s}"))?;
        }
    }
    for (a, table) in theta.higher.iter_mut().enumerate() {
        for (i, slot) in table.iter_mut().enumerate() {
            *slot = tokens.real(&format!("theta of hyperedge {a}, entry {i}"))?;
        }
    }
    if tokens.pos < tokens.items.len() {
        let (line, token) = tokens.items[tokens.pos];
        return Err(ParseError { line, kind: ParseErrorKind::TrailingToken(token.to_string()) });
    }
    Model::from_parts(graph, theta).map_err(|e| ParseError { line: tokens.last_line, kind: e.into() })
}

/// Formats a real with 17 significant digits, enough to round-trip any
/// `f64`.
pub fn format_real(value: f64) -> String {
    format!("{value:.16e}")
}

/// Writes a model in `GIBBS-LOG` form. [`parse_model`] reads it back
/// exactly.
pub fn serialize_model(model: &Model) -> String {
    let g = model.graph();
    let mut out = String::new();
    let join = |xs: &[usize]| xs.iter().map(usize::to_string).collect::<Vec<_>>().join(" ");
    let _ = writeln!(out, "{MAGIC} {VERSION}");
    let _ = writeln!(out, "{}", g.num_vars());
    let _ = writeln!(out, "{}", join(g.domain_sizes()));
    let _ = writeln!(out, "{}", g.num_edges());
    for e in g.edges() {
        let _ = writeln!(out, "{} {}", e.len(), join(e));
    }
    for (v, t) in model.theta().unary.iter().enumerate() {
        let _ = writeln!(out, "# theta_{v}");
        let _ = writeln!(out, "{}", reals(t));
    }
    for (a, t) in model.theta().higher.iter().enumerate() {
        let _ = writeln!(out, "# theta_{}", join(g.edge(a)).replace(' ', ","));
        let _ = writeln!(out, "{}", reals(t));
    }
    out
}

fn reals(values: &[f64]) -> String {
    values.iter().map(|&v| format_real(v)).collect::<Vec<_>>().join(" ")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generate::{random_model, RandomShape};
    use proptest::prelude::*;

    const T1: &str = "GIBBS-LOG 1\n2\n2 2\n1\n2 0 1\n0 0\n0 0\n0 0 0 0\n";

    #[test]
    fn parses_t1() {
        let m = parse_model(T1).unwrap();
        assert_eq!(m, Model::zeros(Hypergraph::new(vec![2, 2], vec![vec![0, 1]]).unwrap()));
    }

    #[test]
    fn comments_and_wrapped_tables() {
        let text = "# a model\nGIBBS-LOG 1 # header\n2\n2 3\n1\n2 0 1\n1 2\n3 4 5\n1 2 3\n4 5 6\n";
        let m = parse_model(text).unwrap();
        assert_eq!(m.theta().unary, vec![vec![1.0, 2.0], vec![3.0, 4.0, 5.0]]);
        assert_eq!(m.theta().higher, vec![vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]]);
    }

    #[test]
    fn unary_hyperedge_reports_its_line() {
        let text = "GIBBS-LOG 1\n2\n2 2\n1\n1 0\n0 0\n0 0\n0 0\n";
        let err = parse_model(text).unwrap_err();
        assert_eq!(err.line, 5);
        assert_eq!(err.kind, ParseErrorKind::Model(ModelError::ArityTooSmall { edge: 0, arity: 1 }));
    }

    #[test]
    fn error_cases() {
        let err = parse_model("GIBBS-LOG 2\n").unwrap_err();
        assert_eq!(err.kind, ParseErrorKind::VersionMismatch("2".into()));
        let err = parse_model("UAI\n").unwrap_err();
        assert!(matches!(err.kind, ParseErrorKind::BadHeader(_)));
        let err = parse_model("GIBBS-LOG 1\n2\n2 2\n1\n2 0 1\n0 0\n0 0\n0 0 0\n").unwrap_err();
        assert!(matches!(err.kind, ParseErrorKind::UnexpectedEof(_)));
        let err = parse_model("GIBBS-LOG 1\n2\n2 2\n1\n2 0 1\n0 0\n0 inf\n0 0 0 0\n").unwrap_err();
        assert_eq!(err.line, 7);
        assert!(matches!(err.kind, ParseErrorKind::NonFinite { .. }));
        let err = parse_model("GIBBS-LOG 1\n2\n2 2\n1\n2 0 1\n0 0\n0 0\n0 0 0 0 9\n").unwrap_err();
        assert_eq!(err.kind, ParseErrorKind::TrailingToken("9".into()));
        let err = parse_model("GIBBS-LOG 1\n2\n2 x\n").unwrap_err();
        assert_eq!(err.line, 3);
        assert!(matches!(err.kind, ParseErrorKind::BadInteger { .. }));
        let err = parse_model("GIBBS-LOG 1\n2\n2 2\n1\n2 0 5\n").unwrap_err();
        assert_eq!(err.line, 5);
        assert!(matches!(err.kind, ParseErrorKind::Model(ModelError::VariableOutOfRange { .. })));
    }

    #[test]
    fn serialization_is_idempotent() {
        let m = parse_model(T1).unwrap();
        let once = serialize_model(&m);
        assert_eq!(serialize_model(&parse_model(&once).unwrap()), once);
    }

    proptest! {
        #[test]
        fn round_trip_is_exact(seed in any::<u64>()) {
            let m = random_model(&RandomShape::default(), seed);
            let back = parse_model(&serialize_model(&m)).unwrap();
            prop_assert_eq!(back, m);
        }
    }
}
