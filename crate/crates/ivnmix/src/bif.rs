//! Parser for the BIF text format (the distribution format of the ALARM
//! benchmark network).
//!
//! Supported subset: `network`, `variable X { type discrete [K] { labels }; }`,
//! `probability ( child | parents ) { (parent labels) p, ..., p; }` and the
//! unconditional `table p, ..., p;` form. `property` lines are ignored, as are
//! `//` and `%` line comments. Anything else is a syntax error.

use std::collections::BTreeMap;

use crate::bn::{CausalNetwork, Cpt, NodeSpec};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Word(String),
    Num(f64),
    Punct(char),
}

#[derive(Debug, Clone)]
struct Token {
    tok: Tok,
    line: usize,
}

fn syntax(line: usize, expected: &str) -> Error {
    Error::Syntax {
        line,
        expected: expected.to_string(),
    }
}

fn tokenize(text: &str) -> Result<Vec<Token>> {
    let mut out = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = lineno + 1;
        let stripped = match raw.find("//").into_iter().chain(raw.find('%')).min() {
            Some(cut) => &raw[..cut],
            None => raw,
        };
        let mut chars = stripped.char_indices().peekable();
        while let Some(&(start, c)) = chars.peek() {
            if c.is_whitespace() {
                chars.next();
            } else if "(){}[]|,;".contains(c) {
                chars.next();
                out.push(Token {
                    tok: Tok::Punct(c),
                    line,
                });
            } else if c.is_ascii_digit() || c == '.' || c == '-' || c == '+' {
                let mut end = start;
                while let Some(&(i, d)) = chars.peek() {
                    if d.is_ascii_digit() || "+-.eE".contains(d) {
                        end = i + d.len_utf8();
                        chars.next();
                    } else {
                        break;
                    }
                }
                let lit = &stripped[start..end];
                let value: f64 = lit
                    .parse()
                    .map_err(|_| syntax(line, "decimal probability"))?;
                out.push(Token {
                    tok: Tok::Num(value),
                    line,
                });
            } else if c.is_alphanumeric() || c == '_' {
                let mut end = start;
                while let Some(&(i, d)) = chars.peek() {
                    if d.is_alphanumeric() || d == '_' || d == '-' || d == '.' {
                        end = i + d.len_utf8();
                        chars.next();
                    } else {
                        break;
                    }
                }
                out.push(Token {
                    tok: Tok::Word(stripped[start..end].to_string()),
                    line,
                });
            } else {
                return Err(syntax(line, "token"));
            }
        }
    }
    Ok(out)
}

struct Cursor {
    tokens: Vec<Token>,
    pos: usize,
}

impl Cursor {
    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.pos)
    }

    fn line(&self) -> usize {
        self.peek()
            .map(|t| t.line)
            .or_else(|| self.tokens.last().map(|t| t.line))
            .unwrap_or(0)
    }

    fn next(&mut self, expected: &str) -> Result<Token> {
        let line = self.line();
        let tok = self
            .tokens
            .get(self.pos)
            .cloned()
            .ok_or_else(|| syntax(line, expected))?;
        self.pos += 1;
        Ok(tok)
    }

    fn expect_punct(&mut self, c: char) -> Result<()> {
        let tok = self.next(&format!("'{c}'"))?;
        if tok.tok == Tok::Punct(c) {
            Ok(())
        } else {
            Err(syntax(tok.line, &format!("'{c}'")))
        }
    }

    fn expect_word(&mut self, word: &str) -> Result<()> {
        let tok = self.next(word)?;
        match tok.tok {
            Tok::Word(ref w) if w == word => Ok(()),
            _ => Err(syntax(tok.line, word)),
        }
    }

    fn word(&mut self, expected: &str) -> Result<String> {
        let tok = self.next(expected)?;
        match tok.tok {
            Tok::Word(w) => Ok(w),
            _ => Err(syntax(tok.line, expected)),
        }
    }

    fn number(&mut self) -> Result<f64> {
        let tok = self.next("number")?;
        match tok.tok {
            Tok::Num(v) => Ok(v),
            // integer-valued labels tokenize as numbers in other positions,
            // but probabilities must be numeric
            _ => Err(syntax(tok.line, "number")),
        }
    }

    fn at_punct(&self, c: char) -> bool {
        matches!(self.peek(), Some(t) if t.tok == Tok::Punct(c))
    }

    fn at_word(&self, w: &str) -> bool {
        matches!(self.peek(), Some(t) if matches!(&t.tok, Tok::Word(s) if s == w))
    }

    /// Skip a `property ... ;` line.
    fn skip_property(&mut self) -> Result<()> {
        let line = self.line();
        while let Some(tok) = self.peek() {
            let done = tok.tok == Tok::Punct(';');
            self.pos += 1;
            if done {
                return Ok(());
            }
        }
        Err(syntax(line, "';'"))
    }
}

#[derive(Debug)]
struct VariableBlock {
    name: String,
    categories: Vec<String>,
}

#[derive(Debug)]
struct ProbabilityBlock {
    child: String,
    parents: Vec<String>,
    /// Either a single unconditional `table` row or labelled rows.
    rows: Vec<(Vec<String>, Vec<f64>)>,
}

fn parse_variable(cur: &mut Cursor) -> Result<VariableBlock> {
    let name = cur.word("variable name")?;
    cur.expect_punct('{')?;
    let mut categories = None;
    while !cur.at_punct('}') {
        if cur.at_word("property") {
            cur.pos += 1;
            cur.skip_property()?;
        } else if cur.at_word("type") {
            cur.pos += 1;
            cur.expect_word("discrete")?;
            cur.expect_punct('[')?;
            let tok = cur.next("cardinality")?;
            let k = match tok.tok {
                Tok::Num(v) if v.fract() == 0.0 && v >= 1.0 => v as usize,
                _ => return Err(syntax(tok.line, "cardinality")),
            };
            cur.expect_punct(']')?;
            cur.expect_punct('{')?;
            let mut labels = Vec::new();
            loop {
                let tok = cur.next("category label")?;
                match tok.tok {
                    Tok::Word(w) => labels.push(w),
                    Tok::Num(v) => labels.push(format_label(v)),
                    _ => return Err(syntax(tok.line, "category label")),
                }
                if cur.at_punct(',') {
                    cur.pos += 1;
                } else {
                    break;
                }
            }
            cur.expect_punct('}')?;
            cur.expect_punct(';')?;
            if labels.len() != k {
                return Err(syntax(cur.line(), "label count matching cardinality"));
            }
            categories = Some(labels);
        } else {
            return Err(syntax(cur.line(), "type declaration"));
        }
    }
    cur.expect_punct('}')?;
    let categories = categories.ok_or_else(|| syntax(cur.line(), "type declaration"))?;
    Ok(VariableBlock { name, categories })
}

fn format_label(v: f64) -> String {
    if v.fract() == 0.0 {
        format!("{}", v as i64)
    } else {
        format!("{v}")
    }
}

fn parse_probability(cur: &mut Cursor) -> Result<ProbabilityBlock> {
    cur.expect_punct('(')?;
    let child = cur.word("child variable")?;
    let mut parents = Vec::new();
    if cur.at_punct('|') {
        cur.pos += 1;
        loop {
            parents.push(cur.word("parent variable")?);
            if cur.at_punct(',') {
                cur.pos += 1;
            } else {
                break;
            }
        }
    }
    cur.expect_punct(')')?;
    cur.expect_punct('{')?;
    let mut rows = Vec::new();
    while !cur.at_punct('}') {
        if cur.at_word("property") {
            cur.pos += 1;
            cur.skip_property()?;
        } else if cur.at_word("table") {
            cur.pos += 1;
            let mut values = Vec::new();
            loop {
                values.push(cur.number()?);
                if cur.at_punct(',') {
                    cur.pos += 1;
                } else {
                    break;
                }
            }
            cur.expect_punct(';')?;
            rows.push((Vec::new(), values));
        } else if cur.at_punct('(') {
            cur.pos += 1;
            let mut labels = Vec::new();
            loop {
                let tok = cur.next("parent category label")?;
                match tok.tok {
                    Tok::Word(w) => labels.push(w),
                    Tok::Num(v) => labels.push(format_label(v)),
                    _ => return Err(syntax(tok.line, "parent category label")),
                }
                if cur.at_punct(',') {
                    cur.pos += 1;
                } else {
                    break;
                }
            }
            cur.expect_punct(')')?;
            let mut values = Vec::new();
            loop {
                values.push(cur.number()?);
                if cur.at_punct(',') {
                    cur.pos += 1;
                } else {
                    break;
                }
            }
            cur.expect_punct(';')?;
            rows.push((labels, values));
        } else {
            return Err(syntax(cur.line(), "table row"));
        }
    }
    cur.expect_punct('}')?;
    Ok(ProbabilityBlock {
        child,
        parents,
        rows,
    })
}

/// Parse the supported BIF subset into a validated network. Category order
/// is preserved from the file; nodes are renumbered into topological order
/// by network construction.
pub fn parse_bif(text: &str) -> Result<CausalNetwork> {
    let mut cur = Cursor {
        tokens: tokenize(text)?,
        pos: 0,
    };

    cur.expect_word("network")?;
    let _name = cur.word("network name")?;
    cur.expect_punct('{')?;
    while !cur.at_punct('}') {
        if cur.at_word("property") {
            cur.pos += 1;
            cur.skip_property()?;
        } else {
            return Err(syntax(cur.line(), "'}'"));
        }
    }
    cur.expect_punct('}')?;

    let mut variables: Vec<VariableBlock> = Vec::new();
    let mut probabilities: Vec<(ProbabilityBlock, usize)> = Vec::new();
    while let Some(tok) = cur.peek() {
        let line = tok.line;
        if cur.at_word("variable") {
            cur.pos += 1;
            variables.push(parse_variable(&mut cur)?);
        } else if cur.at_word("probability") {
            cur.pos += 1;
            probabilities.push((parse_probability(&mut cur)?, line));
        } else {
            return Err(syntax(line, "variable or probability block"));
        }
    }

    let ids: BTreeMap<&str, usize> = variables
        .iter()
        .enumerate()
        .map(|(i, v)| (v.name.as_str(), i))
        .collect();
    if ids.len() != variables.len() {
        return Err(syntax(0, "unique variable names"));
    }

    let mut parent_lists: Vec<Option<Vec<usize>>> = vec![None; variables.len()];
    let mut tables: Vec<Option<Vec<Vec<f64>>>> = vec![None; variables.len()];
    for (block, _line) in &probabilities {
        let child = *ids
            .get(block.child.as_str())
            .ok_or_else(|| Error::UndeclaredVariable(block.child.clone()))?;
        let parents: Vec<usize> = block
            .parents
            .iter()
            .map(|p| ids.get(p.as_str()).copied().ok_or_else(|| Error::UndeclaredVariable(p.clone())))
            .collect::<Result<_>>()?;
        let child_card = variables[child].categories.len();
        let row_count: usize = parents
            .iter()
            .map(|&p| variables[p].categories.len())
            .product();
        let mut rows: Vec<Option<Vec<f64>>> = vec![None; row_count];
        for (labels, values) in &block.rows {
            if values.len() != child_card {
                return Err(Error::TableShapeMismatch(block.child.clone()));
            }
            let index = if labels.is_empty() {
                if !parents.is_empty() {
                    return Err(Error::TableShapeMismatch(block.child.clone()));
                }
                0
            } else {
                if labels.len() != parents.len() {
                    return Err(Error::TableShapeMismatch(block.child.clone()));
                }
                // row-major with the last parent fastest, matching the
                // network's CPT layout
                let mut index = 0usize;
                for (&p, label) in parents.iter().zip(labels) {
                    let cat = variables[p]
                        .categories
                        .iter()
                        .position(|c| c == label)
                        .ok_or_else(|| Error::TableShapeMismatch(block.child.clone()))?;
                    index = index * variables[p].categories.len() + cat;
                }
                index
            };
            if rows[index].replace(values.clone()).is_some() {
                return Err(Error::TableShapeMismatch(block.child.clone()));
            }
        }
        let rows: Vec<Vec<f64>> = rows
            .into_iter()
            .collect::<Option<_>>()
            .ok_or_else(|| Error::TableShapeMismatch(block.child.clone()))?;
        if parent_lists[child].replace(parents).is_some() {
            return Err(Error::TableShapeMismatch(block.child.clone()));
        }
        tables[child] = Some(rows);
    }

    let mut nodes = Vec::with_capacity(variables.len());
    let mut cpts = Vec::with_capacity(variables.len());
    for (i, var) in variables.iter().enumerate() {
        let parents = parent_lists[i]
            .take()
            .ok_or_else(|| Error::TableShapeMismatch(var.name.clone()))?;
        let mut rows = tables[i].take().expect("table set alongside parents");
        for row in &mut rows {
            renormalize_row(row)?;
        }
        nodes.push(NodeSpec {
            node_id: i,
            name: var.name.clone(),
            categories: var.categories.clone(),
            parents,
        });
        cpts.push(Cpt { node_id: i, rows });
    }
    CausalNetwork::new(nodes, cpts)
}

/// Serialize a network into the supported BIF subset. Probabilities are
/// printed with the shortest round-tripping representation, so
/// `parse_bif(network_to_bif(n))` reproduces `n` exactly.
pub fn network_to_bif(network: &CausalNetwork, name: &str) -> String {
    use std::fmt::Write as _;

    let mut out = String::new();
    let _ = writeln!(out, "network {name} {{\n}}");
    for node in network.nodes() {
        let _ = writeln!(out, "variable {} {{", node.name);
        let _ = writeln!(
            out,
            "  type discrete [ {} ] {{ {} }};",
            node.cardinality(),
            node.categories.join(", ")
        );
        let _ = writeln!(out, "}}");
    }
    let join_row = |row: &[f64]| {
        row.iter()
            .map(|v| v.to_string())
            .collect::<Vec<_>>()
            .join(", ")
    };
    for node in network.nodes() {
        let cpt = network.cpt(node.node_id);
        if node.parents.is_empty() {
            let _ = writeln!(out, "probability ( {} ) {{", node.name);
            let _ = writeln!(out, "  table {};", join_row(&cpt.rows[0]));
        } else {
            let parent_names: Vec<&str> = node
                .parents
                .iter()
                .map(|&p| network.node(p).name.as_str())
                .collect();
            let _ = writeln!(
                out,
                "probability ( {} | {} ) {{",
                node.name,
                parent_names.join(", ")
            );
            for (r, row) in cpt.rows.iter().enumerate() {
                // decode the row index (last parent fastest) back to labels
                let mut labels = vec![""; node.parents.len()];
                let mut rem = r;
                for (slot, &p) in labels.iter_mut().zip(&node.parents).rev() {
                    let card = network.cardinality(p);
                    *slot = &network.node(p).categories[rem % card];
                    rem /= card;
                }
                let _ = writeln!(out, "  ({}) {};", labels.join(", "), join_row(row));
            }
        }
        let _ = writeln!(out, "}}");
    }
    out
}

/// Rescale away printing round-off up to [`crate::bn::ROW_RENORM_TOL`];
/// larger deviations are surfaced by network validation as
/// `RowSumViolation`.
fn renormalize_row(row: &mut [f64]) -> Result<()> {
    let sum: f64 = row.iter().sum();
    // sums already within float noise of 1 are left untouched so that a
    // parse-serialize-parse cycle is an exact fixpoint
    let off = (sum - 1.0).abs();
    if off > 1e-12 && off <= crate::bn::ROW_RENORM_TOL && sum > 0.0 {
        for v in row.iter_mut() {
            *v /= sum;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "network minimal {\n}\nvariable X {\n  type discrete [ 2 ] { yes, no };\n}\nprobability ( X ) {\n  table 0.6, 0.4;\n}\n";

    #[test]
    fn minimal_single_node() {
        let net = parse_bif(MINIMAL).unwrap();
        assert_eq!(net.n(), 1);
        let node = net.node(0);
        assert_eq!(node.name, "X");
        assert_eq!(node.categories, vec!["yes", "no"]);
        assert_eq!(net.cpt(0).rows, vec![vec![0.6, 0.4]]);
    }

    #[test]
    fn conditional_rows_follow_parent_labels() {
        let text = "network t {\n}\nvariable A {\n  type discrete [ 2 ] { lo, hi };\n}\nvariable B {\n  type discrete [ 2 ] { off, on };\n}\nprobability ( A ) {\n  table 0.4, 0.6;\n}\nprobability ( B | A ) {\n  (hi) 0.1, 0.9;\n  (lo) 0.8, 0.2;\n}\n";
        let net = parse_bif(text).unwrap();
        let b = net.node_by_name("B").unwrap();
        // rows indexed by parent category order from the file, not by the
        // order the rows were written in
        assert_eq!(net.cpt(b).rows, vec![vec![0.8, 0.2], vec![0.1, 0.9]]);
    }

    #[test]
    fn comments_and_properties_ignored() {
        let text = "// header comment\nnetwork t {\n  property author unknown;\n}\nvariable X { % trailing\n  property position (1, 2);\n  type discrete [ 2 ] { a, b };\n}\nprobability ( X ) {\n  property note x;\n  table 0.5, 0.5; // inline\n}\n";
        assert_eq!(parse_bif(text).unwrap().n(), 1);
    }

    #[test]
    fn bad_row_sum_is_rejected() {
        let text = MINIMAL.replace("0.6, 0.4", "0.6, 0.3");
        match parse_bif(&text) {
            Err(Error::RowSumViolation { .. }) => {}
            other => panic!("expected RowSumViolation, got {other:?}"),
        }
    }

    #[test]
    fn small_round_off_is_renormalized() {
        let text = MINIMAL.replace("0.6, 0.4", "0.6000001, 0.4");
        let net = parse_bif(&text).unwrap();
        let sum: f64 = net.cpt(0).rows[0].iter().sum();
        assert!((sum - 1.0).abs() < 1e-12);
    }

    #[test]
    fn undeclared_variable_in_probability() {
        let text = format!("{MINIMAL}probability ( Y ) {{\n  table 0.5, 0.5;\n}}\n");
        match parse_bif(&text) {
            Err(Error::UndeclaredVariable(_)) => {}
            other => panic!("expected UndeclaredVariable, got {other:?}"),
        }
    }

    #[test]
    fn wrong_row_length_is_rejected() {
        let text = MINIMAL.replace("0.6, 0.4", "0.6, 0.3, 0.1");
        match parse_bif(&text) {
            Err(Error::TableShapeMismatch(_)) => {}
            other => panic!("expected TableShapeMismatch, got {other:?}"),
        }
    }

    #[test]
    fn missing_probability_block_is_rejected() {
        let text = "network t {\n}\nvariable X {\n  type discrete [ 2 ] { a, b };\n}\n";
        match parse_bif(text) {
            Err(Error::TableShapeMismatch(_)) => {}
            other => panic!("expected TableShapeMismatch, got {other:?}"),
        }
    }

    #[test]
    fn syntax_error_reports_line() {
        let text = "network t {\n}\nvariable X {\n  type discrete [ 2 ] { a, b }\n}\n";
        match parse_bif(text) {
            Err(Error::Syntax { line, .. }) => assert!(line >= 4),
            other => panic!("expected Syntax, got {other:?}"),
        }
    }
}
