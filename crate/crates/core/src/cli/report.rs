//! Ordered key-value report documents, rendered as JSON.
//!
//! Reals are always written with 17 significant digits so that a report
//! carries the exact `f64` values the library produced. Keys keep their
//! insertion order, which makes reports diffable.

use std::fmt::Write as _;

use super::format::format_real;

#[derive(Debug, Clone, PartialEq)]
pub enum Value {
    Real(f64),
    Int(i128),
    Bool(bool),
    Str(String),
    List(Vec<Value>),
    Map(Node),
}

impl From<f64> for Value {
    fn from(v: f64) -> Self {
        Value::Real(v)
    }
}

impl From<usize> for Value {
    fn from(v: usize) -> Self {
        Value::Int(v as i128)
    }
}

impl From<u64> for Value {
    fn from(v: u64) -> Self {
        Value::Int(v as i128)
    }
}

impl From<u128> for Value {
    fn from(v: u128) -> Self {
        Value::Int(v.min(i128::MAX as u128) as i128)
    }
}

impl From<bool> for Value {
    fn from(v: bool) -> Self {
        Value::Bool(v)
    }
}

impl From<&str> for Value {
    fn from(v: &str) -> Self {
        Value::Str(v.to_string())
    }
}

impl From<String> for Value {
    fn from(v: String) -> Self {
        Value::Str(v)
    }
}

impl From<Node> for Value {
    fn from(v: Node) -> Self {
        Value::Map(v)
    }
}

impl From<&[f64]> for Value {
    fn from(v: &[f64]) -> Self {
        Value::List(v.iter().map(|&x| Value::Real(x)).collect())
    }
}

impl From<&[usize]> for Value {
    fn from(v: &[usize]) -> Self {
        Value::List(v.iter().map(|&x| x.into()).collect())
    }
}

impl From<&Vec<Vec<f64>>> for Value {
    fn from(v: &Vec<Vec<f64>>) -> Self {
        Value::List(v.iter().map(|t| t.as_slice().into()).collect())
    }
}

/// An ordered map.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Node {
    pub entries: Vec<(String, Value)>,
}

impl Node {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, key: &str, value: impl Into<Value>) -> Self {
        self.insert(key, value);
        self
    }

    pub fn insert(&mut self, key: &str, value: impl Into<Value>) {
        self.entries.push((key.to_string(), value.into()));
    }

    pub fn get(&self, key: &str) -> Option<&Value> {
        self.entries.iter().find(|(k, _)| k == key).map(|(_, v)| v)
    }
}

/// One pass/fail line of a check.
#[derive(Debug, Clone, PartialEq)]
pub struct Verdict {
    pub name: String,
    pub value: f64,
    pub threshold: f64,
    /// `"<="` or `">="`.
    pub relation: &'static str,
    pub pass: bool,
}

impl Verdict {
    pub fn at_most(name: &str, value: f64, threshold: f64) -> Self {
        Self {
            name: name.to_string(),
            value,
            threshold,
            relation: "<=",
            pass: value <= threshold,
        }
    }

    pub fn at_least(name: &str, value: f64, threshold: f64) -> Self {
        Self {
            name: name.to_string(),
            value,
            threshold,
            relation: ">=",
            pass: value >= threshold,
        }
    }

    /// A boolean condition, recorded as value 1 (true) or 0 (false).
    pub fn holds(name: &str, condition: bool) -> Self {
        Self {
            name: name.to_string(),
            value: if condition { 1.0 } else { 0.0 },
            threshold: 1.0,
            relation: ">=",
            pass: condition,
        }
    }

    fn to_node(&self) -> Node {
        Node::new()
            .with("name", self.name.as_str())
            .with("value", self.value)
            .with("relation", self.relation)
            .with("threshold", self.threshold)
            .with("pass", self.pass)
    }
}

/// The document printed by every subcommand.
#[derive(Debug, Clone, PartialEq)]
pub struct CommandReport {
    pub command: String,
    pub input_digest: String,
    pub seeds: Node,
    pub results: Node,
    pub verdicts: Vec<Verdict>,
    pub wall_time_seconds: f64,
}

impl CommandReport {
    pub fn new(command: &str, input_digest: String) -> Self {
        Self {
            command: command.to_string(),
            input_digest,
            seeds: Node::new(),
            results: Node::new(),
            verdicts: Vec::new(),
            wall_time_seconds: 0.0,
        }
    }

    pub fn all_pass(&self) -> bool {
        self.verdicts.iter().all(|v| v.pass)
    }

    pub fn to_node(&self) -> Node {
        Node::new()
            .with("command", self.command.as_str())
            .with("input_digest", self.input_digest.as_str())
            .with("seeds", self.seeds.clone())
            .with("results", self.results.clone())
            .with(
                "verdicts",
                Value::List(self.verdicts.iter().map(|v| Value::Map(v.to_node())).collect()),
            )
            .with("all_pass", self.all_pass())
            .with("wall_time_seconds", self.wall_time_seconds)
    }

    /// Pretty JSON, one scalar per line, `wall_time_seconds` last.
    pub fn render(&self) -> String {
        let mut out = String::new();
        render_value(&mut out, &Value::Map(self.to_node()), 0);
        out.push('\n');
        out
    }
}

fn escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len() + 2);
    out.push('"');
    for c in s.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            '\t' => out.push_str("\\t"),
            c if (c as u32) < 0x20 => {
                let _ = write!(out, "\\u{:04x}", c as u32);
            }
            c => out.push(c),
        }
    }
    out.push('"');
    out
}

fn is_scalar_list(items: &[Value]) -> bool {
    items
        .iter()
        .all(|v| !matches!(v, Value::List(_) | Value::Map(_)))
}

fn render_value(out: &mut String, value: &Value, indent: usize) {
    let pad = "  ".repeat(indent + 1);
    let close = "  ".repeat(indent);
    match value {
        Value::Real(x) if x.is_finite() => out.push_str(&format_real(*x)),
        Value::Real(x) => out.push_str(&escape(&x.to_string())),
        Value::Int(i) => {
            let _ = write!(out, "{i}");
        }
        Value::Bool(b) => {
            let _ = write!(out, "{b}");
        }
        Value::Str(s) => out.push_str(&escape(s)),
        Value::List(items) if items.is_empty() => out.push_str("[]"),
        Value::List(items) if is_scalar_list(items) => {
            out.push('[');
            for (i, item) in items.iter().enumerate() {
                if i > 0 {
                    out.push_str(", ");
                }
                render_value(out, item, indent);
            }
            out.push(']');
        }
        Value::List(items) => {
            out.push_str("[\n");
            for (i, item) in items.iter().enumerate() {
                out.push_str(&pad);
                render_value(out, item, indent + 1);
                out.push_str(if i + 1 < items.len() { ",\n" } else { "\n" });
            }
            out.push_str(&close);
            out.push(']');
        }
        Value::Map(node) if node.entries.is_empty() => out.push_str("{}"),
        Value::Map(node) => {
            out.push_str("{\n");
            for (i, (k, v)) in node.entries.iter().enumerate() {
                out.push_str(&pad);
                out.push_str(&escape(k));
                out.push_str(": ");
                render_value(out, v, indent + 1);
                out.push_str(if i + 1 < node.entries.len() { ",\n" } else { "\n" });
            }
            out.push_str(&close);
            out.push('}');
        }
    }
}

/// Drops the `wall_time_seconds` line so two renders can be compared.
pub fn without_wall_time(rendered: &str) -> String {
    rendered
        .lines()
        .filter(|l| !l.trim_start().starts_with("\"wall_time_seconds\""))
        .collect::<Vec<_>>()
        .join("\n")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn renders_nested_document() {
        let mut r = CommandReport::new("exact", "abc".into());
        r.results.insert("log_partition", 4f64.ln());
        r.results.insert("marginals", &vec![vec![0.5, 0.5]]);
        r.results.insert("note", "a \"quoted\" word");
        r.verdicts.push(Verdict::at_most("gap", 1e-12, 1e-9));
        let text = r.render();
        assert!(text.contains("\"log_partition\": 1.3862943611198906e0"));
        assert!(text.contains("[5.0000000000000000e-1, 5.0000000000000000e-1]"));
        assert!(text.contains("\\\"quoted\\\""));
        assert!(text.contains("\"all_pass\": true"));
        assert!(text.trim_end().ends_with('}'));
        let last_field = text.lines().rev().nth(1).unwrap();
        assert!(last_field.contains("wall_time_seconds"));
        assert!(!without_wall_time(&text).contains("wall_time"));
    }

    #[test]
    fn failing_verdict_flips_all_pass() {
        let mut r = CommandReport::new("check", String::new());
        r.verdicts.push(Verdict::at_most("x", 2.0, 1.0));
        r.verdicts.push(Verdict::holds("y", true));
        assert!(!r.all_pass());
    }
}
