//! Plain-text edge lists.
//!
//! ```text
//! # comment
//! n 4
//! 1 0 1.0
//! ```
//!
//! Each edge line is `src dst weight` with 0-based indices.

use std::fmt::Write as _;

use super::{GraphError, WeightedDigraph};

pub fn parse_edge_list(text: &str) -> Result<WeightedDigraph, GraphError> {
    let err = |line: usize, msg: String| GraphError::Parse { line, msg };
    let mut n: Option<usize> = None;
    let mut edges = Vec::new();
    let mut seen = std::collections::HashSet::new();

    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields[0] == "n" {
            if n.is_some() {
                return Err(err(line_no, "duplicate vertex-count header".into()));
            }
            if fields.len() != 2 {
                return Err(err(line_no, "header must be `n <count>`".into()));
            }
            let count: usize = fields[1]
                .parse()
                .map_err(|_| err(line_no, format!("bad vertex count `{}`", fields[1])))?;
            if count == 0 {
                return Err(err(line_no, "vertex count must be positive".into()));
            }
            n = Some(count);
            continue;
        }
        let count = n.ok_or_else(|| err(line_no, "edge before `n <count>` header".into()))?;
        if fields.len() != 3 {
            return Err(err(line_no, "edge must be `src dst weight`".into()));
        }
        let src: usize = fields[0]
            .parse()
            .map_err(|_| err(line_no, format!("bad source `{}`", fields[0])))?;
        let dst: usize = fields[1]
            .parse()
            .map_err(|_| err(line_no, format!("bad destination `{}`", fields[1])))?;
        let w: f64 = fields[2]
            .parse()
            .map_err(|_| err(line_no, format!("bad weight `{}`", fields[2])))?;
        if src >= count || dst >= count {
            return Err(err(
                line_no,
                format!("vertex index out of range for n = {count}"),
            ));
        }
        if src == dst {
            return Err(err(line_no, format!("self link on vertex {src}")));
        }
        if !(w.is_finite() && w >= 0.0) {
            return Err(err(
                line_no,
                format!("weight {w} must be finite and nonnegative"),
            ));
        }
        if !seen.insert((src, dst)) {
            return Err(err(line_no, format!("duplicate edge {src} -> {dst}")));
        }
        edges.push((src, dst, w));
    }
    let count = n.ok_or_else(|| err(0, "missing `n <count>` header".into()))?;
    WeightedDigraph::from_edges(count, &edges)
}

pub fn write_edge_list(g: &WeightedDigraph) -> String {
    let mut out = String::new();
    writeln!(out, "n {}", g.n()).unwrap();
    for (src, dst, w) in g.edges() {
        writeln!(out, "{src} {dst} {w}").unwrap();
    }
    out
}
