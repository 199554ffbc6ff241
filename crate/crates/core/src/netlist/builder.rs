use std::hash::BuildHasher;

use hashbrown::hash_table::{Entry, HashTable};
use rustc_hash::FxBuildHasher;

use super::{GateType, Netlist, NetlistError, Node, NodeId};

/// Single-writer netlist construction with optional local simplification
/// (`fold`) and structural hashing (`hash`).
///
/// With both enabled, every `add_gate` first rewrites the gate under Boolean
/// identities (constants, double inversion, idempotence, complementary
/// operands, inversion absorption into XOR/XNOR) and then returns an
/// existing node if one with the same type and canonical operands exists.
#[derive(Debug)]
pub struct NetlistBuilder {
    nodes: Vec<Node>,
    input_names: Vec<String>,
    outputs: Vec<(String, NodeId)>,
    tags: Vec<u16>,
    tag: u16,
    fold: bool,
    hash: bool,
    /// Ids of hashed nodes, keyed by the node they point to.
    index: HashTable<NodeId>,
    consts: [Option<NodeId>; 2],
    merged: usize,
}

fn key_hash(n: &Node) -> u64 {
    FxBuildHasher.hash_one(n)
}

impl Default for NetlistBuilder {
    fn default() -> Self {
        Self::new()
    }
}

impl NetlistBuilder {
    pub fn new() -> Self {
        Self::with_rules(true, true)
    }

    /// Builder with no rewriting at all: every call appends a node.
    pub fn raw() -> Self {
        Self::with_rules(false, false)
    }

    pub fn with_rules(fold: bool, hash: bool) -> Self {
        Self::with_capacity(fold, hash, 0)
    }

    /// Builder with room for `nodes` nodes.
    pub fn with_capacity(fold: bool, hash: bool, nodes: usize) -> Self {
        let index = if hash {
            HashTable::with_capacity(nodes)
        } else {
            HashTable::new()
        };
        NetlistBuilder {
            nodes: Vec::with_capacity(nodes),
            input_names: Vec::new(),
            outputs: Vec::new(),
            tags: Vec::with_capacity(nodes),
            tag: 0,
            fold,
            hash,
            index,
            consts: [None, None],
            merged: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn node(&self, id: NodeId) -> &Node {
        &self.nodes[id as usize]
    }

    /// Number of `add_gate` calls answered by an existing node.
    pub fn merged(&self) -> usize {
        self.merged
    }

    /// Tag applied to nodes created from now on.
    pub fn set_tag(&mut self, tag: u16) {
        self.tag = tag;
    }

    pub fn add_input(&mut self, name: impl Into<String>) -> Result<NodeId, NetlistError> {
        let name = name.into();
        if self.nodes.len() != self.input_names.len() {
            return Err(NetlistError::InputAfterGate(name));
        }
        let id = self.push(Node {
            ty: GateType::Input,
            ops: [0; 3],
        });
        self.input_names.push(name);
        Ok(id)
    }

    pub fn add_output(&mut self, name: impl Into<String>, id: NodeId) -> Result<(), NetlistError> {
        if id as usize >= self.nodes.len() {
            return Err(NetlistError::UnknownOperand {
                node: self.nodes.len() as u64,
                operand: id as u64,
            });
        }
        self.outputs.push((name.into(), id));
        Ok(())
    }

    pub fn constant(&mut self, value: bool) -> NodeId {
        if let Some(id) = self.consts[value as usize] {
            return id;
        }
        let ty = if value {
            GateType::Const1
        } else {
            GateType::Const0
        };
        let id = self.push(Node { ty, ops: [0; 3] });
        if self.hash {
            let nodes = &self.nodes;
            self.index
                .insert_unique(key_hash(&nodes[id as usize]), id, |&i| key_hash(&nodes[i as usize]));
        }
        self.consts[value as usize] = Some(id);
        id
    }

    /// Adds a gate, checking arity and operand existence.
    pub fn add_gate(&mut self, ty: GateType, operands: &[NodeId]) -> Result<NodeId, NetlistError> {
        match ty {
            GateType::Input => return Err(NetlistError::NotAGate(ty)),
            GateType::Const0 => return Ok(self.constant(false)),
            GateType::Const1 => return Ok(self.constant(true)),
            _ => {}
        }
        if operands.len() != ty.arity() {
            return Err(NetlistError::Arity {
                ty,
                expected: ty.arity(),
                got: operands.len(),
            });
        }
        for &o in operands {
            if o as usize >= self.nodes.len() {
                return Err(NetlistError::UnknownOperand {
                    node: self.nodes.len() as u64,
                    operand: o as u64,
                });
            }
        }
        let mut ops = [0; 3];
        ops[..operands.len()].copy_from_slice(operands);
        Ok(self.gate(ty, ops))
    }

    /// Appends a node verbatim. Callers guarantee operand validity.
    pub(crate) fn push_raw(&mut self, node: Node) -> NodeId {
        self.push(node)
    }

    fn push(&mut self, node: Node) -> NodeId {
        let id = self.nodes.len() as NodeId;
        self.nodes.push(node);
        self.tags.push(self.tag);
        id
    }

    fn ty(&self, id: NodeId) -> GateType {
        self.nodes[id as usize].ty
    }

    fn const_value(&self, id: NodeId) -> Option<bool> {
        match self.ty(id) {
            GateType::Const0 => Some(false),
            GateType::Const1 => Some(true),
            _ => None,
        }
    }

    /// `Some(x)` if `id` is `INV(x)`.
    fn inverted(&self, id: NodeId) -> Option<NodeId> {
        let n = &self.nodes[id as usize];
        (n.ty == GateType::Inv).then_some(n.ops[0])
    }

    fn complementary(&self, a: NodeId, b: NodeId) -> bool {
        self.inverted(a) == Some(b) || self.inverted(b) == Some(a)
    }

    /// Adds a gate with already validated operands.
    pub(crate) fn gate(&mut self, ty: GateType, mut ops: [NodeId; 3]) -> NodeId {
        if self.fold {
            if let Some(id) = self.simplify(ty, ops) {
                return id;
            }
        }
        if ty.is_commutative() && ops[0] > ops[1] {
            ops.swap(0, 1);
        }
        let node = Node { ty, ops };
        if self.hash {
            let next = self.nodes.len() as NodeId;
            let nodes = &self.nodes;
            let entry = self.index.entry(
                key_hash(&node),
                |&i| nodes[i as usize] == node,
                |&i| key_hash(&nodes[i as usize]),
            );
            match entry {
                Entry::Occupied(e) => {
                    self.merged += 1;
                    *e.get()
                }
                Entry::Vacant(e) => {
                    e.insert(next);
                    self.push(node)
                }
            }
        } else {
            self.push(node)
        }
    }

    /// Local rewrite; `None` means the gate stays as is.
    fn simplify(&mut self, ty: GateType, ops: [NodeId; 3]) -> Option<NodeId> {
        let [a, b, c] = ops;
        match ty {
            GateType::Inv => {
                if let Some(v) = self.const_value(a) {
                    return Some(self.constant(!v));
                }
                self.inverted(a)
            }
            GateType::And2 | GateType::Or2 => {
                // AND absorbs on 0, OR on 1
                let absorbing = ty == GateType::Or2;
                for (x, y) in [(a, b), (b, a)] {
                    match self.const_value(x) {
                        Some(v) if v == absorbing => return Some(self.constant(absorbing)),
                        Some(_) => return Some(y),
                        None => {}
                    }
                }
                if a == b {
                    return Some(a);
                }
                if self.complementary(a, b) {
                    return Some(self.constant(absorbing));
                }
                None
            }
            GateType::Xor2 | GateType::Xnor2 => {
                let xnor = ty == GateType::Xnor2;
                for (x, y) in [(a, b), (b, a)] {
                    if let Some(v) = self.const_value(x) {
                        // XOR with 0 and XNOR with 1 pass y through
                        return Some(if v == xnor { y } else { self.gate(GateType::Inv, [y, 0, 0]) });
                    }
                }
                if a == b {
                    return Some(self.constant(xnor));
                }
                if self.complementary(a, b) {
                    return Some(self.constant(!xnor));
                }
                // Inversions are pulled out without creating new XNOR2
                // gates: a single inversion moves onto the higher id.
                let (ia, ib) = (self.inverted(a), self.inverted(b));
                let (x, y) = (ia.unwrap_or(a), ib.unwrap_or(b));
                let (lo, hi) = (x.min(y), x.max(y));
                match (ia.is_some(), ib.is_some()) {
                    (true, true) => return Some(self.gate(ty, [x, y, 0])),
                    (true, false) | (false, true) => {
                        if xnor {
                            return Some(self.gate(GateType::Xor2, [x, y, 0]));
                        }
                        let plain = if ia.is_none() { a } else { b };
                        if plain != lo {
                            let nhi = self.gate(GateType::Inv, [hi, 0, 0]);
                            return Some(self.gate(GateType::Xor2, [lo, nhi, 0]));
                        }
                    }
                    (false, false) => {}
                }
                None
            }
            GateType::Mux2 => {
                let (s, t, e) = (a, b, c);
                if let Some(v) = self.const_value(s) {
                    return Some(if v { t } else { e });
                }
                if t == e {
                    return Some(t);
                }
                if let Some(x) = self.inverted(s) {
                    return Some(self.gate(GateType::Mux2, [x, e, t]));
                }
                match (self.const_value(t), self.const_value(e)) {
                    (Some(true), Some(false)) => return Some(s),
                    (Some(false), Some(true)) => return Some(self.gate(GateType::Inv, [s, 0, 0])),
                    (Some(true), None) => return Some(self.gate(GateType::Or2, [s, e, 0])),
                    (Some(false), None) => {
                        let ns = self.gate(GateType::Inv, [s, 0, 0]);
                        return Some(self.gate(GateType::And2, [ns, e, 0]));
                    }
                    (None, Some(false)) => return Some(self.gate(GateType::And2, [s, t, 0])),
                    (None, Some(true)) => {
                        let ns = self.gate(GateType::Inv, [s, 0, 0]);
                        return Some(self.gate(GateType::Or2, [ns, t, 0]));
                    }
                    _ => {}
                }
                if t == s {
                    return Some(self.gate(GateType::Or2, [s, e, 0]));
                }
                if e == s {
                    return Some(self.gate(GateType::And2, [s, t, 0]));
                }
                None
            }
            GateType::Const0 | GateType::Const1 | GateType::Input => None,
        }
    }

    pub fn inv(&mut self, a: NodeId) -> NodeId {
        self.gate(GateType::Inv, [a, 0, 0])
    }

    pub fn and(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.gate(GateType::And2, [a, b, 0])
    }

    pub fn or(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.gate(GateType::Or2, [a, b, 0])
    }

    pub fn xor(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.gate(GateType::Xor2, [a, b, 0])
    }

    pub fn xnor(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.gate(GateType::Xnor2, [a, b, 0])
    }

    /// `select ? then : else`.
    pub fn mux(&mut self, select: NodeId, then: NodeId, els: NodeId) -> NodeId {
        self.gate(GateType::Mux2, [select, then, els])
    }

    /// Half adder: `(sum, carry)` = `(XOR2, AND2)`.
    pub fn half_adder(&mut self, a: NodeId, b: NodeId) -> (NodeId, NodeId) {
        (self.xor(a, b), self.and(a, b))
    }

    /// Full adder from two half adders and an OR2.
    pub fn full_adder(&mut self, a: NodeId, b: NodeId, cin: NodeId) -> (NodeId, NodeId) {
        let (s1, c1) = self.half_adder(a, b);
        let (s, c2) = self.half_adder(s1, cin);
        (s, self.or(c1, c2))
    }

    pub fn finish(self) -> Netlist {
        Netlist {
            nodes: self.nodes,
            input_names: self.input_names,
            outputs: self.outputs,
            tags: self.tags,
        }
    }
}
