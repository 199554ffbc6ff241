//! Combinational gate DAG.
//!
//! Nodes are stored in an append-only array; every operand id is smaller
//! than the id of the gate using it, so id order is a topological order.
//! Primary inputs always occupy the first ids.

mod builder;
mod text;

use std::fmt;
use std::hash::{Hash, Hasher};

use thiserror::Error;

pub use builder::NetlistBuilder;
pub use text::{parse_netlist, write_netlist};

pub type NodeId = u32;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum NetlistError {
    #[error("{ty} takes {expected} operands, got {got}")]
    Arity {
        ty: GateType,
        expected: usize,
        got: usize,
    },
    #[error("operand {operand} of node {node} does not precede it")]
    UnknownOperand { node: u64, operand: u64 },
    #[error("input {0:?} added after the first gate")]
    InputAfterGate(String),
    #[error("{0} nodes cannot be created with add_gate")]
    NotAGate(GateType),
    #[error("duplicate {kind} name {name:?}")]
    DuplicateName { kind: &'static str, name: String },
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[repr(u8)]
pub enum GateType {
    Const0,
    Const1,
    Input,
    Inv,
    And2,
    Or2,
    Xor2,
    Xnor2,
    Mux2,
}

impl GateType {
    pub const ALL: [GateType; 9] = [
        GateType::Const0,
        GateType::Const1,
        GateType::Input,
        GateType::Inv,
        GateType::And2,
        GateType::Or2,
        GateType::Xor2,
        GateType::Xnor2,
        GateType::Mux2,
    ];

    /// Gates that count towards logic area.
    pub const LOGIC: [GateType; 6] = [
        GateType::Inv,
        GateType::And2,
        GateType::Or2,
        GateType::Xor2,
        GateType::Xnor2,
        GateType::Mux2,
    ];

    pub fn arity(self) -> usize {
        match self {
            GateType::Const0 | GateType::Const1 | GateType::Input => 0,
            GateType::Inv => 1,
            GateType::And2 | GateType::Or2 | GateType::Xor2 | GateType::Xnor2 => 2,
            GateType::Mux2 => 3,
        }
    }

    pub fn is_commutative(self) -> bool {
        matches!(
            self,
            GateType::And2 | GateType::Or2 | GateType::Xor2 | GateType::Xnor2
        )
    }

    pub fn is_logic(self) -> bool {
        self.arity() > 0
    }

    pub fn name(self) -> &'static str {
        match self {
            GateType::Const0 => "CONST0",
            GateType::Const1 => "CONST1",
            GateType::Input => "INPUT",
            GateType::Inv => "INV",
            GateType::And2 => "AND2",
            GateType::Or2 => "OR2",
            GateType::Xor2 => "XOR2",
            GateType::Xnor2 => "XNOR2",
            GateType::Mux2 => "MUX2",
        }
    }

    pub fn from_name(s: &str) -> Option<GateType> {
        GateType::ALL.into_iter().find(|t| t.name() == s)
    }

    /// Bitwise evaluation over 64 lanes. `MUX2` operands are
    /// `(select, then, else)`.
    #[inline]
    pub fn eval(self, a: u64, b: u64, c: u64) -> u64 {
        match self {
            GateType::Const0 => 0,
            GateType::Const1 => !0,
            GateType::Input => unreachable!("inputs are not evaluated"),
            GateType::Inv => !a,
            GateType::And2 => a & b,
            GateType::Or2 => a | b,
            GateType::Xor2 => a ^ b,
            GateType::Xnor2 => !(a ^ b),
            GateType::Mux2 => (a & b) | (!a & c),
        }
    }
}

impl fmt::Display for GateType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Node {
    pub ty: GateType,
    /// Unused operand slots are zero.
    pub ops: [NodeId; 3],
}

impl Hash for Node {
    fn hash<H: Hasher>(&self, state: &mut H) {
        // two packed words hash far better than the field-wise default
        let [a, b, c] = self.ops;
        state.write_u64(a as u64 | (b as u64) << 32);
        state.write_u64(c as u64 | (self.ty as u64) << 32);
    }
}

impl Node {
    pub fn operands(&self) -> &[NodeId] {
        &self.ops[..self.ty.arity()]
    }
}

/// Per-gate-type counts.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct GateStats {
    counts: [usize; 9],
}

impl GateStats {
    pub fn get(&self, ty: GateType) -> usize {
        self.counts[ty as usize]
    }

    pub fn add(&mut self, ty: GateType, n: usize) {
        self.counts[ty as usize] += n;
    }

    pub fn inputs(&self) -> usize {
        self.get(GateType::Input)
    }

    pub fn constants(&self) -> usize {
        self.get(GateType::Const0) + self.get(GateType::Const1)
    }

    /// Logic gates only; inputs and constants are excluded.
    pub fn total(&self) -> usize {
        GateType::LOGIC.iter().map(|&t| self.get(t)).sum()
    }

    /// Non-zero logic entries in [`GateType::LOGIC`] order.
    pub fn logic_counts(&self) -> impl Iterator<Item = (GateType, usize)> + '_ {
        GateType::LOGIC.into_iter().map(|t| (t, self.get(t)))
    }
}

/// An immutable combinational netlist.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Netlist {
    nodes: Vec<Node>,
    input_names: Vec<String>,
    outputs: Vec<(String, NodeId)>,
    /// Layer tag per node (0 = untagged); not serialized.
    tags: Vec<u16>,
}

impl Netlist {
    pub fn empty() -> Self {
        Netlist {
            nodes: Vec::new(),
            input_names: Vec::new(),
            outputs: Vec::new(),
            tags: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn node(&self, id: NodeId) -> &Node {
        &self.nodes[id as usize]
    }

    pub fn num_inputs(&self) -> usize {
        self.input_names.len()
    }

    pub fn input_names(&self) -> &[String] {
        &self.input_names
    }

    pub fn outputs(&self) -> &[(String, NodeId)] {
        &self.outputs
    }

    pub fn tag(&self, id: NodeId) -> u16 {
        self.tags[id as usize]
    }

    pub fn tags(&self) -> &[u16] {
        &self.tags
    }

    /// Node ids in evaluation order. Construction guarantees operands come
    /// first, so this is id order.
    pub fn topo_order(&self) -> Vec<NodeId> {
        debug_assert!(self
            .nodes
            .iter()
            .enumerate()
            .all(|(i, n)| n.operands().iter().all(|&o| (o as usize) < i)));
        (0..self.nodes.len() as NodeId).collect()
    }

    pub fn stats(&self) -> GateStats {
        let mut s = GateStats::default();
        for n in &self.nodes {
            s.add(n.ty, 1);
        }
        s
    }

    /// Per-tag gate statistics, indexed by tag.
    pub fn stats_by_tag(&self) -> Vec<GateStats> {
        let max = self.tags.iter().copied().max().unwrap_or(0) as usize;
        let mut out = vec![GateStats::default(); max + 1];
        for (n, &t) in self.nodes.iter().zip(&self.tags) {
            out[t as usize].add(n.ty, 1);
        }
        out
    }

    /// Longest path from any input or constant, in gates.
    pub fn depths(&self) -> Vec<u32> {
        let mut d = vec![0u32; self.nodes.len()];
        for (i, n) in self.nodes.iter().enumerate() {
            d[i] = n
                .operands()
                .iter()
                .map(|&o| d[o as usize] + 1)
                .max()
                .unwrap_or(0);
        }
        d
    }

    /// Nodes reachable backwards from the outputs.
    pub fn reachable(&self) -> Vec<bool> {
        let mut live = vec![false; self.nodes.len()];
        for &(_, id) in &self.outputs {
            live[id as usize] = true;
        }
        for i in (0..self.nodes.len()).rev() {
            if live[i] {
                for &o in self.nodes[i].operands() {
                    live[o as usize] = true;
                }
            }
        }
        live
    }
}
