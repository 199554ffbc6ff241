//! Netlist-to-netlist optimization passes.
//!
//! Every pass rebuilds the netlist in id order through a
//! [`NetlistBuilder`] configured for the rewrite it performs, so inputs keep
//! their ids and names and outputs keep their names and order.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::netlist::{GateStats, GateType, Netlist, NetlistBuilder, NodeId};

/// Fixpoint bound for the iterated O2 pipeline.
pub const MAX_ITERATIONS: usize = 10;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum OptError {
    #[error("unknown pass {0:?} (expected const_fold, cse or dce)")]
    UnknownPass(String),
    #[error("unknown optimization level {0:?} (expected O0 or O2)")]
    UnknownLevel(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Pass {
    ConstFold,
    Cse,
    Dce,
}

impl Pass {
    pub fn name(self) -> &'static str {
        match self {
            Pass::ConstFold => "const_fold",
            Pass::Cse => "cse",
            Pass::Dce => "dce",
        }
    }

    pub fn run(self, n: &Netlist) -> (Netlist, PassReport) {
        match self {
            Pass::ConstFold => const_fold(n),
            Pass::Cse => cse(n),
            Pass::Dce => dce(n),
        }
    }
}

impl fmt::Display for Pass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Pass {
    type Err = OptError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "const_fold" => Ok(Pass::ConstFold),
            "cse" => Ok(Pass::Cse),
            "dce" => Ok(Pass::Dce),
            _ => Err(OptError::UnknownPass(s.to_string())),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Pipeline {
    /// No passes.
    O0,
    /// `[const_fold, cse, dce]` repeated until the netlist stops changing.
    O2,
    /// Explicit list, each pass run once in order.
    Passes(Vec<Pass>),
}

impl Pipeline {
    pub fn from_level(level: &str) -> Result<Self, OptError> {
        match level {
            "O0" => Ok(Pipeline::O0),
            "O2" => Ok(Pipeline::O2),
            _ => Err(OptError::UnknownLevel(level.to_string())),
        }
    }

    /// Parses a comma separated pass list.
    pub fn from_list(list: &str) -> Result<Self, OptError> {
        list.split(',')
            .map(|p| p.trim())
            .filter(|p| !p.is_empty())
            .map(Pass::from_str)
            .collect::<Result<Vec<_>, _>>()
            .map(Pipeline::Passes)
    }

    pub fn label(&self) -> String {
        match self {
            Pipeline::O0 => "O0".into(),
            Pipeline::O2 => "O2".into(),
            Pipeline::Passes(p) => p.iter().map(|p| p.name()).collect::<Vec<_>>().join(","),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PassReport {
    pub pass: Pass,
    pub before: GateStats,
    pub after: GateStats,
    /// Net decrease in node count.
    pub nodes_removed: usize,
    /// Gates answered by an existing structurally identical node.
    pub nodes_merged: usize,
}

/// Replays `n` through a builder. Nodes with `keep[i] == false` are dropped
/// (they must not be referenced by kept nodes or outputs).
fn rebuild(n: &Netlist, fold: bool, hash: bool, keep: Option<&[bool]>) -> (Netlist, usize) {
    let mut b = NetlistBuilder::with_capacity(fold, hash, n.len());
    let mut map: Vec<NodeId> = vec![NodeId::MAX; n.len()];
    for (i, node) in n.nodes().iter().enumerate() {
        b.set_tag(n.tag(i as NodeId));
        if node.ty == GateType::Input {
            map[i] = b
                .add_input(n.input_names()[i].clone())
                .expect("inputs precede gates");
            continue;
        }
        if keep.is_some_and(|k| !k[i]) {
            continue;
        }
        let mut ops = [0; 3];
        for (slot, &o) in ops.iter_mut().zip(node.operands()) {
            *slot = map[o as usize];
            debug_assert_ne!(*slot, NodeId::MAX, "dropped node still referenced");
        }
        map[i] = match node.ty {
            GateType::Const0 | GateType::Const1 if hash || fold => {
                b.constant(node.ty == GateType::Const1)
            }
            GateType::Const0 | GateType::Const1 => b.push_raw(*node),
            _ => b.gate(node.ty, ops),
        };
    }
    for (name, id) in n.outputs() {
        b.add_output(name.clone(), map[*id as usize])
            .expect("output maps to a rebuilt node");
    }
    let merged = b.merged();
    (b.finish(), merged)
}

fn report(pass: Pass, before: &Netlist, after: &Netlist, merged: usize) -> PassReport {
    PassReport {
        pass,
        before: before.stats(),
        after: after.stats(),
        nodes_removed: before.len().saturating_sub(after.len()),
        nodes_merged: merged,
    }
}

/// Rewrites gates with constant, repeated, complementary or inverted
/// operands under Boolean identities. A single ordered sweep reaches the
/// local fixpoint because operands are rewritten before their users.
pub fn const_fold(n: &Netlist) -> (Netlist, PassReport) {
    let (out, merged) = rebuild(n, true, false, None);
    let r = report(Pass::ConstFold, n, &out, merged);
    (out, r)
}

/// Merges structurally identical gates (same type, same canonical
/// operands).
pub fn cse(n: &Netlist) -> (Netlist, PassReport) {
    let (out, merged) = rebuild(n, false, true, None);
    let r = report(Pass::Cse, n, &out, merged);
    (out, r)
}

/// Removes nodes not reachable from any output. Inputs are kept.
pub fn dce(n: &Netlist) -> (Netlist, PassReport) {
    let live = n.reachable();
    let (out, merged) = rebuild(n, false, false, Some(&live));
    let r = report(Pass::Dce, n, &out, merged);
    (out, r)
}

pub fn optimize(n: &Netlist, pipeline: &Pipeline) -> (Netlist, Vec<PassReport>) {
    let mut cur = n.clone();
    let mut reports = Vec::new();
    match pipeline {
        Pipeline::O0 => {}
        Pipeline::Passes(passes) => {
            for p in passes {
                let (next, r) = p.run(&cur);
                reports.push(r);
                cur = next;
            }
        }
        Pipeline::O2 => {
            for _ in 0..MAX_ITERATIONS {
                let start = cur.clone();
                for p in [Pass::ConstFold, Pass::Cse, Pass::Dce] {
                    let (next, r) = p.run(&cur);
                    reports.push(r);
                    cur = next;
                }
                if cur.nodes() == start.nodes() && cur.outputs() == start.outputs() {
                    break;
                }
            }
        }
    }
    (cur, reports)
}
