//! Line-oriented netlist files.
//!
//! ```text
//! INPUT 0 x_c0_y0_x0
//! INPUT 1 x_c0_y0_x1
//! GATE 2 XOR2 0 1
//! GATE 3 AND2 0 1
//! OUTPUT sum 2
//! OUTPUT carry 3
//! ```
//!
//! Ids are dense and in topological order. Blank lines and lines starting
//! with `#` are ignored on input and never written.

use std::collections::HashSet;
use std::fmt::Write;

use super::{GateType, Netlist, NetlistBuilder, NetlistError, Node, NodeId};

pub fn write_netlist(n: &Netlist) -> String {
    let mut s = String::with_capacity(n.len() * 20);
    for (i, node) in n.nodes().iter().enumerate() {
        if node.ty == GateType::Input {
            writeln!(s, "INPUT {i} {}", n.input_names()[i]).unwrap();
        } else {
            write!(s, "GATE {i} {}", node.ty).unwrap();
            for o in node.operands() {
                write!(s, " {o}").unwrap();
            }
            s.push('\n');
        }
    }
    for (name, id) in n.outputs() {
        writeln!(s, "OUTPUT {name} {id}").unwrap();
    }
    s
}

fn err(line: usize, msg: impl Into<String>) -> NetlistError {
    NetlistError::Parse {
        line,
        msg: msg.into(),
    }
}

fn parse_id(tok: Option<&str>, line: usize, what: &str) -> Result<NodeId, NetlistError> {
    let tok = tok.ok_or_else(|| err(line, format!("missing {what}")))?;
    tok.parse::<NodeId>()
        .map_err(|_| err(line, format!("invalid {what} {tok:?}")))
}

/// Parses a netlist file verbatim: no folding or hashing is applied, so
/// the result round-trips byte for byte.
pub fn parse_netlist(text: &str) -> Result<Netlist, NetlistError> {
    let mut b = NetlistBuilder::raw();
    let mut input_names = HashSet::new();
    let mut output_names = HashSet::new();
    let mut seen_output = false;
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let l = raw.trim();
        if l.is_empty() || l.starts_with('#') {
            continue;
        }
        let mut toks = l.split_whitespace();
        let kw = toks.next().expect("non-empty line");
        match kw {
            "INPUT" | "GATE" if seen_output => {
                return Err(err(line, format!("{kw} after OUTPUT")));
            }
            "INPUT" => {
                let id = parse_id(toks.next(), line, "id")?;
                if id as usize != b.len() {
                    return Err(err(line, format!("expected id {}, got {id}", b.len())));
                }
                let name = toks.next().ok_or_else(|| err(line, "missing input name"))?;
                if !input_names.insert(name.to_string()) {
                    return Err(NetlistError::DuplicateName {
                        kind: "input",
                        name: name.into(),
                    });
                }
                b.add_input(name).map_err(|e| err(line, e.to_string()))?;
            }
            "GATE" => {
                let id = parse_id(toks.next(), line, "id")?;
                if id as usize != b.len() {
                    return Err(err(line, format!("expected id {}, got {id}", b.len())));
                }
                let tname = toks.next().ok_or_else(|| err(line, "missing gate type"))?;
                let ty = GateType::from_name(tname)
                    .filter(|t| *t != GateType::Input)
                    .ok_or_else(|| err(line, format!("unknown gate type {tname:?}")))?;
                let mut ops = [0; 3];
                let mut count = 0;
                for tok in toks.by_ref() {
                    if count == 3 {
                        return Err(err(line, "too many operands"));
                    }
                    let o = parse_id(Some(tok), line, "operand")?;
                    if o >= id {
                        return Err(err(line, format!("operand {o} does not precede node {id}")));
                    }
                    ops[count] = o;
                    count += 1;
                }
                if count != ty.arity() {
                    return Err(err(
                        line,
                        format!("{ty} takes {} operands, got {count}", ty.arity()),
                    ));
                }
                b.push_raw(Node { ty, ops });
            }
            "OUTPUT" => {
                seen_output = true;
                let name = toks.next().ok_or_else(|| err(line, "missing output name"))?;
                let id = parse_id(toks.next(), line, "id")?;
                if !output_names.insert(name.to_string()) {
                    return Err(NetlistError::DuplicateName {
                        kind: "output",
                        name: name.into(),
                    });
                }
                b.add_output(name, id).map_err(|e| err(line, e.to_string()))?;
            }
            other => return Err(err(line, format!("unknown directive {other:?}"))),
        }
        if kw != "GATE" && toks.next().is_some() {
            return Err(err(line, "trailing tokens"));
        }
    }
    Ok(b.finish())
}
