use log::warn;

use super::{Graph, ProblemInstance, ProblemKind};
use crate::error::{Error, Result};

fn parse_err(line: usize, msg: impl Into<String>) -> Error {
    Error::Parse { line, msg: msg.into() }
}

fn number<T: std::str::FromStr>(tok: Option<&str>, line: usize, what: &str) -> Result<T> {
    let tok = tok.ok_or_else(|| parse_err(line, format!("missing {what}")))?;
    tok.parse().map_err(|_| parse_err(line, format!("invalid {what} {tok:?}")))
}

/// Parses a DIMACS edge list (`p edge <n> <m>`, `e <u> <v>`, 1-indexed,
/// `c` comments) into a graph instance of the given kind.
pub fn parse_graph(text: &str, kind: ProblemKind) -> Result<ProblemInstance> {
    let mut header: Option<(usize, usize)> = None;
    let mut edges = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let mut toks = raw.split_whitespace();
        match toks.next() {
            None | Some("c") => continue,
            Some("p") => {
                if header.is_some() {
                    return Err(parse_err(line, "duplicate problem line"));
                }
                match toks.next() {
                    Some("edge" | "col") => {}
                    other => return Err(parse_err(line, format!("expected 'p edge', found {other:?}"))),
                }
                let n = number(toks.next(), line, "vertex count")?;
                let m = number(toks.next(), line, "edge count")?;
                header = Some((n, m));
            }
            Some("e") => {
                let u: usize = number(toks.next(), line, "vertex")?;
                let v: usize = number(toks.next(), line, "vertex")?;
                if u == v {
                    return Err(Error::Validation(format!("line {line}: self-loop on vertex {u}")));
                }
                if u == 0 || v == 0 {
                    return Err(parse_err(line, "vertices are 1-indexed"));
                }
                edges.push((u - 1, v - 1));
            }
            Some(tok) if tok.starts_with('c') => continue,
            Some(tok) => return Err(parse_err(line, format!("unexpected token {tok:?}"))),
        }
        if toks.next().is_some() {
            return Err(parse_err(line, "trailing tokens"));
        }
    }
    let (n, m) = header.ok_or_else(|| parse_err(0, "missing 'p edge' line"))?;
    if edges.len() != m {
        warn!("edge list declares {m} edges but contains {}", edges.len());
    }
    ProblemInstance::graph(kind, Graph::new(n, edges)?)
}

/// Parses a DIMACS CNF document into a max-sat instance, preserving clause
/// order. Clauses may span lines and must be terminated by `0`.
pub fn parse_cnf(text: &str) -> Result<ProblemInstance> {
    let mut header: Option<(usize, usize)> = None;
    let mut clauses: Vec<Vec<i32>> = Vec::new();
    let mut current: Vec<i32> = Vec::new();
    let mut last_line = 0;
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let trimmed = raw.trim_start();
        if trimmed.is_empty() || trimmed.starts_with('c') {
            continue;
        }
        if trimmed.starts_with('%') {
            break;
        }
        if trimmed.starts_with('p') {
            if header.is_some() {
                return Err(parse_err(line, "duplicate problem line"));
            }
            let mut toks = trimmed.split_whitespace().skip(1);
            if toks.next() != Some("cnf") {
                return Err(parse_err(line, "expected 'p cnf'"));
            }
            let vars = number(toks.next(), line, "variable count")?;
            let count = number(toks.next(), line, "clause count")?;
            if toks.next().is_some() {
                return Err(parse_err(line, "trailing tokens"));
            }
            header = Some((vars, count));
            continue;
        }
        let Some((vars, _)) = header else {
            return Err(parse_err(line, "clause before 'p cnf' line"));
        };
        for tok in trimmed.split_whitespace() {
            let lit: i32 = tok.parse().map_err(|_| parse_err(line, format!("invalid literal {tok:?}")))?;
            if lit == 0 {
                if current.is_empty() {
                    return Err(Error::Validation(format!("line {line}: empty clause")));
                }
                clauses.push(std::mem::take(&mut current));
                continue;
            }
            if lit.unsigned_abs() as usize > vars {
                return Err(Error::Validation(format!(
                    "line {line}: literal {lit} outside 1..={vars}"
                )));
            }
            current.push(lit);
        }
        last_line = line;
    }
    let (vars, count) = header.ok_or_else(|| parse_err(0, "missing 'p cnf' line"))?;
    if !current.is_empty() {
        return Err(parse_err(last_line, "clause is not terminated by 0"));
    }
    if clauses.len() != count {
        warn!("cnf declares {count} clauses but contains {}", clauses.len());
    }
    ProblemInstance::max_sat(vars, clauses)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::Payload;

    #[test]
    fn triangle_graph() {
        let inst = parse_graph("c tri\np edge 3 3\ne 1 2\ne 2 3\ne 1 3\n", ProblemKind::MaxClique).unwrap();
        assert_eq!(inst.variable_count(), 3);
        let Payload::Graph(g) = inst.payload() else { panic!() };
        assert_eq!(g.edges().len(), 3);
    }

    #[test]
    fn edgeless_graph() {
        let inst = parse_graph("p edge 2 0\n", ProblemKind::MaxClique).unwrap();
        assert_eq!(inst.variable_count(), 2);
    }

    #[test]
    fn self_loop_is_validation_error() {
        let err = parse_graph("e 1 1\n", ProblemKind::MaxClique).unwrap_err();
        assert!(matches!(err, Error::Validation(_)), "{err}");
    }

    #[test]
    fn malformed_edge_reports_line() {
        let err = parse_graph("p edge 3 1\ne 1 x\n", ProblemKind::MaxClique).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }), "{err}");
    }

    #[test]
    fn duplicate_edges_are_merged() {
        let inst = parse_graph("p edge 2 2\ne 1 2\ne 2 1\n", ProblemKind::MaxClique).unwrap();
        let Payload::Graph(g) = inst.payload() else { panic!() };
        assert_eq!(g.edges(), &[(0, 1)]);
    }

    #[test]
    fn out_of_range_vertex() {
        assert!(parse_graph("p edge 2 1\ne 1 3\n", ProblemKind::MaxClique).is_err());
    }

    #[test]
    fn simple_cnf() {
        let inst = parse_cnf("p cnf 2 1\n1 2 0\n").unwrap();
        assert_eq!(inst.variable_count(), 2);
        assert_eq!(inst.payload(), &Payload::Cnf(vec![vec![1, 2]]));
    }

    #[test]
    fn cnf_order_preserved() {
        let inst = parse_cnf("c x\np cnf 1 2\n1 0\n-1 0\n").unwrap();
        assert_eq!(inst.payload(), &Payload::Cnf(vec![vec![1], vec![-1]]));
    }

    #[test]
    fn cnf_clause_spanning_lines() {
        let inst = parse_cnf("p cnf 3 2\n1 -2\n3 0 2 0\n").unwrap();
        assert_eq!(inst.payload(), &Payload::Cnf(vec![vec![1, -2, 3], vec![2]]));
    }

    #[test]
    fn cnf_empty_clause() {
        assert!(matches!(parse_cnf("p cnf 1 1\n0\n"), Err(Error::Validation(_))));
    }

    #[test]
    fn cnf_missing_terminator() {
        assert!(matches!(parse_cnf("p cnf 2 1\n1 2\n"), Err(Error::Parse { line: 2, .. })));
    }

    #[test]
    fn cnf_bad_literal() {
        assert!(matches!(parse_cnf("p cnf 2 1\n1 a 0\n"), Err(Error::Parse { line: 2, .. })));
        assert!(matches!(parse_cnf("p cnf 2 1\n1 3 0\n"), Err(Error::Validation(_))));
    }
}
