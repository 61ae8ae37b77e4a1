//! Reading and writing instances in the CPLEX-style LP text format.
//!
//! Every row is preceded by a `\ [tag]` comment carrying its family, and the
//! `Bounds` section lists every variable so that variable order survives a
//! round trip. Numbers are written with Rust's shortest round-trip float
//! formatting.

use std::collections::HashMap;
use std::fmt::Write as _;

use crate::error::{Error, Result};

use super::{Constraint, MilpInstance, RowSense, RowTag, VarKind, VarRole, Variable};

const TERMS_PER_LINE: usize = 6;

fn fmt_num(x: f64) -> String {
    if x == f64::INFINITY {
        "+inf".to_string()
    } else if x == f64::NEG_INFINITY {
        "-inf".to_string()
    } else {
        format!("{x}")
    }
}

fn write_terms(out: &mut String, label: &str, terms: &[(f64, &str)]) {
    let _ = write!(out, " {label}:");
    for (k, &(a, name)) in terms.iter().enumerate() {
        if k > 0 && k % TERMS_PER_LINE == 0 {
            out.push_str("\n    ");
        }
        if k == 0 {
            let _ = write!(out, " {} {name}", fmt_num(a));
        } else {
            let sign = if a.is_sign_negative() { '-' } else { '+' };
            let _ = write!(out, " {sign} {} {name}", fmt_num(a.abs()));
        }
    }
}

/// Writes `instance` as LP text. Terms are written in stored order; call
/// [`MilpInstance::canonicalize`] first for name-sorted output.
pub fn export_lp_text(instance: &MilpInstance) -> String {
    let mut out = String::new();
    out.push_str("\\ biorefinery scheduling model\n");
    let _ = writeln!(
        out,
        "\\ variables: {}, binaries: {}, rows: {}",
        instance.variables.len(),
        instance.num_binaries(),
        instance.constraints.len()
    );
    for w in &instance.warnings {
        let _ = writeln!(out, "\\ warning: {}", w.replace(['\n', '\r'], " "));
    }
    if instance.variables.is_empty() && instance.constraints.is_empty() {
        out.push_str("End\n");
        return out;
    }
    let name = |j: usize| instance.variables[j].name.as_str();

    out.push_str("Minimize\n");
    let mut obj: Vec<(f64, &str)> = instance
        .variables
        .iter()
        .filter(|v| v.obj != 0.0)
        .map(|v| (v.obj, v.name.as_str()))
        .collect();
    if obj.is_empty() {
        if let Some(v) = instance.variables.first() {
            obj.push((0.0, v.name.as_str()));
        }
    }
    write_terms(&mut out, "obj", &obj);
    out.push('\n');

    out.push_str("Subject To\n");
    for (i, row) in instance.constraints.iter().enumerate() {
        let _ = writeln!(out, "\\ [{}]", row.tag);
        let terms: Vec<(f64, &str)> = row.terms.iter().map(|&(j, a)| (a, name(j))).collect();
        write_terms(&mut out, &format!("r{i}"), &terms);
        let _ = writeln!(out, " {} {}", row.sense.symbol(), fmt_num(row.rhs));
    }

    out.push_str("Bounds\n");
    for v in &instance.variables {
        let _ = writeln!(out, " {} <= {} <= {}", fmt_num(v.lower), v.name, fmt_num(v.upper));
    }
    let binaries: Vec<&str> = instance
        .variables
        .iter()
        .filter(|v| v.kind == VarKind::Binary)
        .map(|v| v.name.as_str())
        .collect();
    if !binaries.is_empty() {
        out.push_str("Binaries\n");
        for chunk in binaries.chunks(8) {
            let _ = writeln!(out, " {}", chunk.join(" "));
        }
    }
    out.push_str("End\n");
    out
}

#[derive(Clone, Copy, PartialEq)]
enum Section {
    Preamble,
    Objective,
    Rows,
    Bounds,
    Binaries,
    Done,
}

struct PendingRow {
    tag: RowTag,
    terms: Vec<(String, f64)>,
    line: usize,
}

struct Parser {
    names: Vec<String>,
    index: HashMap<String, usize>,
    bounds: HashMap<usize, (f64, f64)>,
    binary: Vec<bool>,
    obj: HashMap<usize, f64>,
    rows: Vec<Constraint>,
    warnings: Vec<String>,
}

impl Parser {
    fn var(&mut self, name: &str) -> usize {
        if let Some(&j) = self.index.get(name) {
            return j;
        }
        self.names.push(name.to_string());
        self.binary.push(false);
        self.index.insert(name.to_string(), self.names.len() - 1);
        self.names.len() - 1
    }
}

fn parse_number(tok: &str, line: usize) -> Result<f64> {
    tok.parse::<f64>()
        .map_err(|_| Error::parse("lp", line, format!("expected a number, found `{tok}`")))
}

fn is_number(tok: &str) -> bool {
    tok.parse::<f64>().is_ok() && !tok.chars().next().is_some_and(|c| c.is_ascii_alphabetic())
}

// Parses `[+|-] [coef] name` sequences into (name, coefficient) pairs.
fn parse_terms(tokens: &[&str], line: usize) -> Result<Vec<(String, f64)>> {
    let mut out = Vec::new();
    let mut sign = 1.0;
    let mut coef: Option<f64> = None;
    for &tok in tokens {
        match tok {
            "+" => sign = 1.0,
            "-" => sign = -1.0,
            _ if is_number(tok) => {
                if coef.is_some() {
                    return Err(Error::parse("lp", line, format!("two numbers in a row near `{tok}`")));
                }
                coef = Some(parse_number(tok, line)?);
            }
            _ => {
                let a = coef.take().unwrap_or(1.0);
                out.push((tok.to_string(), if sign < 0.0 { -a } else { a }));
                sign = 1.0;
            }
        }
    }
    if coef.is_some() {
        return Err(Error::parse("lp", line, "dangling coefficient"));
    }
    Ok(out)
}

/// Parses LP text produced by [`export_lp_text`] (or any file in the same
/// subset of the format: minimisation, linear rows, bounds, binaries).
pub fn parse_lp_text(text: &str) -> Result<MilpInstance> {
    let mut p = Parser {
        names: Vec::new(),
        index: HashMap::new(),
        bounds: HashMap::new(),
        binary: Vec::new(),
        obj: HashMap::new(),
        rows: Vec::new(),
        warnings: Vec::new(),
    };
    let mut section = Section::Preamble;
    let mut bounded_order: Vec<usize> = Vec::new();
    let mut obj_tokens: Vec<String> = Vec::new();
    let mut obj_line = 0;
    let mut pending_tag: Option<RowTag> = None;
    let mut row: Option<PendingRow> = None;

    for (ln, raw) in text.lines().enumerate() {
        let line_no = ln + 1;
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(comment) = line.strip_prefix('\\') {
            let comment = comment.trim();
            if let Some(w) = comment.strip_prefix("warning:") {
                p.warnings.push(w.trim().to_string());
            } else if let Some(tag) = comment.strip_prefix('[').and_then(|c| c.strip_suffix(']')) {
                pending_tag = Some(
                    tag.parse()
                        .map_err(|_| Error::parse("lp", line_no, format!("unknown row tag `{tag}`")))?,
                );
            }
            continue;
        }
        let lower = line.to_ascii_lowercase();
        let header = match lower.as_str() {
            "minimize" | "minimise" | "min" => Some(Section::Objective),
            "maximize" | "maximise" | "max" => {
                return Err(Error::parse("lp", line_no, "only minimisation is supported"));
            }
            "subject to" | "st" | "s.t." | "such that" => Some(Section::Rows),
            "bounds" => Some(Section::Bounds),
            "binaries" | "binary" | "bin" => Some(Section::Binaries),
            "end" => Some(Section::Done),
            _ => None,
        };
        if let Some(next) = header {
            if let Some(r) = row.take() {
                return Err(Error::parse("lp", r.line, "row has no sense or right-hand side"));
            }
            section = next;
            continue;
        }
        match section {
            Section::Preamble | Section::Done => {
                return Err(Error::parse("lp", line_no, format!("unexpected text `{line}`")));
            }
            Section::Objective => {
                if obj_tokens.is_empty() {
                    obj_line = line_no;
                }
                let body = match line.split_once(':') {
                    Some((_, rest)) => rest,
                    None => line,
                };
                obj_tokens.extend(body.split_whitespace().map(str::to_string));
            }
            Section::Rows => {
                let mut body = line;
                if let Some((_, rest)) = line.split_once(':') {
                    if row.is_some() {
                        return Err(Error::parse("lp", line_no, "previous row is incomplete"));
                    }
                    body = rest;
                    row = Some(PendingRow {
                        tag: pending_tag.take().unwrap_or(RowTag::Plumbing),
                        terms: Vec::new(),
                        line: line_no,
                    });
                }
                let current = row
                    .as_mut()
                    .ok_or_else(|| Error::parse("lp", line_no, "row continuation without a row"))?;
                let tokens: Vec<&str> = body.split_whitespace().collect();
                let sense_at = tokens.iter().position(|t| matches!(*t, "<=" | ">=" | "=" | "=<" | "=>" | "<" | ">"));
                match sense_at {
                    None => current.terms.extend(parse_terms(&tokens, line_no)?),
                    Some(k) => {
                        current.terms.extend(parse_terms(&tokens[..k], line_no)?);
                        let sense = match tokens[k] {
                            "<=" | "=<" | "<" => RowSense::Le,
                            ">=" | "=>" | ">" => RowSense::Ge,
                            _ => RowSense::Eq,
                        };
                        if tokens.len() != k + 2 {
                            return Err(Error::parse("lp", line_no, "expected one right-hand side value"));
                        }
                        let rhs = parse_number(tokens[k + 1], line_no)?;
                        let done = row.take().unwrap();
                        let terms = done.terms.iter().map(|(n, a)| (p.var(n), *a)).collect();
                        p.rows.push(Constraint {
                            tag: done.tag,
                            terms,
                            sense,
                            rhs,
                        });
                    }
                }
            }
            Section::Bounds => {
                let tokens: Vec<&str> = line.split_whitespace().collect();
                let (name, lo, hi) = match tokens.as_slice() {
                    [lo, "<=", name, "<=", hi] => (*name, parse_number(lo, line_no)?, parse_number(hi, line_no)?),
                    [name, "free"] | [name, "Free"] | [name, "FREE"] => (*name, f64::NEG_INFINITY, f64::INFINITY),
                    [name, ">=", lo] => (*name, parse_number(lo, line_no)?, f64::INFINITY),
                    [name, "<=", hi] => (*name, 0.0, parse_number(hi, line_no)?),
                    [name, "=", v] => {
                        let v = parse_number(v, line_no)?;
                        (*name, v, v)
                    }
                    _ => return Err(Error::parse("lp", line_no, format!("unrecognised bound `{line}`"))),
                };
                let j = p.var(name);
                if p.bounds.insert(j, (lo, hi)).is_none() {
                    bounded_order.push(j);
                }
            }
            Section::Binaries => {
                for name in line.split_whitespace() {
                    let j = p.var(name);
                    p.binary[j] = true;
                }
            }
        }
    }
    if let Some(r) = row {
        return Err(Error::parse("lp", r.line, "row has no sense or right-hand side"));
    }
    if section != Section::Done {
        return Err(Error::parse("lp", text.lines().count(), "missing `End`"));
    }
    let obj_refs: Vec<&str> = obj_tokens.iter().map(String::as_str).collect();
    for (name, a) in parse_terms(&obj_refs, obj_line)? {
        let j = p.var(&name);
        *p.obj.entry(j).or_insert(0.0) += a;
    }

    // Variables listed under Bounds come first, in listed order.
    let mut order = bounded_order.clone();
    let mut listed = vec![false; p.names.len()];
    for &j in &order {
        listed[j] = true;
    }
    order.extend((0..p.names.len()).filter(|&j| !listed[j]));
    let mut new_index = vec![0; p.names.len()];
    for (new, &old) in order.iter().enumerate() {
        new_index[old] = new;
    }
    let variables = order
        .iter()
        .map(|&j| {
            let kind = if p.binary[j] { VarKind::Binary } else { VarKind::Continuous };
            let default = if p.binary[j] { (0.0, 1.0) } else { (0.0, f64::INFINITY) };
            let (lower, upper) = p.bounds.get(&j).copied().unwrap_or(default);
            Variable {
                name: p.names[j].clone(),
                kind,
                lower,
                upper,
                obj: p.obj.get(&j).copied().unwrap_or(0.0),
                role: VarRole::from_name(&p.names[j]),
            }
        })
        .collect();
    let constraints = p
        .rows
        .into_iter()
        .map(|mut r| {
            for t in &mut r.terms {
                t.0 = new_index[t.0];
            }
            r
        })
        .collect();
    Ok(MilpInstance {
        variables,
        constraints,
        warnings: p.warnings,
    })
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;

    #[test]
    fn empty_instance_is_header_only() {
        let text = export_lp_text(&MilpInstance::default());
        assert!(text.lines().all(|l| l.starts_with('\\') || l == "End"));
        assert_eq!(parse_lp_text(&text).unwrap(), MilpInstance::default());
    }

    #[test]
    fn rows_carry_tags() {
        let mut inst = MilpInstance::default();
        let u = inst.add_var(VarRole::MaxFeed, VarKind::Continuous, 0.0, 5.0, 1.0);
        let z = inst.add_var(VarRole::ReactorOn { t: 1 }, VarKind::Binary, 0.0, 1.0, 0.0);
        inst.add_row(RowTag::McCormickCap, vec![(u, 1.0), (z, -5.0)], RowSense::Le, 0.0);
        let text = export_lp_text(&inst);
        let lines: Vec<&str> = text.lines().collect();
        let at = lines.iter().position(|l| l.starts_with(" r0:")).unwrap();
        assert_eq!(lines[at - 1], "\\ [mccormick-cap]");
        assert_eq!(lines[at], " r0: 1 u - 5 zr_1 <= 0");
        assert_eq!(parse_lp_text(&text).unwrap(), inst);
    }

    #[test]
    fn reads_hand_written_bounds() {
        let text = "Minimize\n obj: x + 2 y\nSubject To\n c1: x + y >= 1\nBounds\n y <= 4\n x free\nEnd\n";
        let inst = parse_lp_text(text).unwrap();
        assert_eq!(inst.variables[0].name, "y");
        assert_eq!((inst.variables[0].lower, inst.variables[0].upper), (0.0, 4.0));
        assert_eq!(inst.variables[1].lower, f64::NEG_INFINITY);
        assert_eq!(inst.variables[1].obj, 1.0);
        assert_eq!(inst.constraints[0].tag, RowTag::Plumbing);
    }

    #[test]
    fn truncated_row_is_an_error() {
        let text = "Minimize\n obj: x\nSubject To\n c1: x + y\nEnd\n";
        let err = parse_lp_text(text).unwrap_err().to_string();
        assert!(err.contains("line 4"), "{err}");
    }

    fn arb_instance() -> impl Strategy<Value = MilpInstance> {
        let coef = prop_oneof![
            -1e6f64..1e6,
            Just(0.0),
            Just(-0.0),
            Just(1.0),
            Just(1e-300),
            Just(-3.0e-7),
            (1u32..1000).prop_map(|k| k as f64 / 7.0),
        ];
        let nv = 1usize..12;
        nv.prop_flat_map(move |nv| {
            let vars = proptest::collection::vec(
                (any::<bool>(), -100.0f64..100.0, prop_oneof![Just(f64::INFINITY), 0.0f64..1e4], coef.clone()),
                nv,
            );
            let rows = proptest::collection::vec(
                (
                    proptest::collection::vec((0..nv, coef.clone()), 1..15),
                    0usize..3,
                    coef.clone(),
                    0usize..RowTag::ALL.len(),
                ),
                0..10,
            );
            (vars, rows)
        })
        .prop_map(|(vars, rows)| {
            let mut inst = MilpInstance::default();
            for (k, (bin, lo, extra, obj)) in vars.into_iter().enumerate() {
                let role = VarRole::Other(format!("y{k}"));
                if bin {
                    inst.add_var(role, VarKind::Binary, 0.0, 1.0, obj);
                } else {
                    inst.add_var(role, VarKind::Continuous, lo, lo + extra, obj);
                }
            }
            for (terms, s, rhs, tag) in rows {
                let sense = [RowSense::Le, RowSense::Ge, RowSense::Eq][s];
                inst.add_row(RowTag::ALL[tag], terms, sense, rhs);
            }
            inst.warnings.push("sample warning".into());
            inst.canonicalize();
            inst
        })
    }

    fn same_bits(a: &MilpInstance, b: &MilpInstance) -> bool {
        let bits = |x: f64| x.to_bits();
        a.variables.len() == b.variables.len()
            && a.constraints.len() == b.constraints.len()
            && a.variables.iter().zip(&b.variables).all(|(x, y)| {
                x.name == y.name && x.kind == y.kind && bits(x.lower) == bits(y.lower) && bits(x.upper) == bits(y.upper)
            })
            && a.constraints.iter().zip(&b.constraints).all(|(x, y)| {
                x.tag == y.tag
                    && x.sense == y.sense
                    && bits(x.rhs) == bits(y.rhs)
                    && x.terms.len() == y.terms.len()
                    && x.terms.iter().zip(&y.terms).all(|(s, t)| s.0 == t.0 && bits(s.1) == bits(t.1))
            })
    }

    proptest! {
        #[test]
        fn export_parse_round_trip(inst in arb_instance()) {
            let text = export_lp_text(&inst);
            let back = parse_lp_text(&text).unwrap();
            prop_assert!(same_bits(&inst, &back));
            // Objective values equal numerically (a lone -0 objective may read back as 0).
            for (x, y) in inst.variables.iter().zip(&back.variables) {
                prop_assert_eq!(x.obj, y.obj);
            }
            prop_assert_eq!(export_lp_text(&back), text);
        }
    }
}
