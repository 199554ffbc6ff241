//! Compiles a [`BnnModel`] into a gate netlist.
//!
//! Each output neuron becomes an XNOR stage, a balanced popcount adder tree
//! and a threshold comparator; OR gates implement 2x2 pooling and the final
//! layer exposes its popcount buses as outputs.
//!
//! In [`LowerMode::Fixed`] the parameters are constants: an XNOR with a
//! weight becomes a wire (weight 1) or a shared inverter (weight 0), padded
//! taps become constants that are folded into the threshold, and the
//! comparison is specialised to the constant threshold.
//!
//! In [`LowerMode::Variable`] the parameters are primary inputs, ordered
//! after the image bits, layer by layer and map by map:
//!
//! * `L{l}_m{m}_w{i}`: weight bit `i` (`N_RF` bits)
//! * `L{l}_m{m}_t{j}`: threshold bit `j`, LSB first (`floor(log2 N_RF) + 1` bits)
//! * `L{l}_m{m}_sel`: 1 selects `phi >= t`, 0 selects `phi <= t`
//! * `L{l}_m{m}_cst`: 1 overrides the comparison with the value of `sel`
//!
//! so a map costs `N_RF + floor(log2 N_RF) + 3` input bits, matching the
//! parameter footprint. The final layer gets the same inputs even though
//! its threshold controls are unused.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::model::{BnnModel, LayerKind, NeuronParams, Pool, Shape, Sign};
use crate::netlist::{Netlist, NetlistBuilder, NodeId};
use crate::reference::BinaryFrame;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum LowerMode {
    Fixed,
    Variable,
}

impl LowerMode {
    pub fn name(self) -> &'static str {
        match self {
            LowerMode::Fixed => "fixed",
            LowerMode::Variable => "variable",
        }
    }
}

impl fmt::Display for LowerMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for LowerMode {
    type Err = LowerError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "fixed" => Ok(LowerMode::Fixed),
            "variable" => Ok(LowerMode::Variable),
            _ => Err(LowerError::UnknownMode(s.to_string())),
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum LowerError {
    #[error("popcount over an empty bit list")]
    EmptyPopcount,
    #[error("unknown lowering mode {0:?} (expected fixed or variable)")]
    UnknownMode(String),
    #[error("invalid model: {0}")]
    Model(String),
}

/// A little-endian bus of node ids with a known maximum value.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Bus {
    pub bits: Vec<NodeId>,
    pub max: u64,
}

/// Number of bits needed to hold `v`.
pub fn bit_width(v: u64) -> usize {
    (64 - v.leading_zeros() as usize).max(1)
}

/// Width of a popcount over `n_rf` bits, `floor(log2 n_rf) + 1`.
pub fn count_width(n_rf: usize) -> usize {
    bit_width(n_rf as u64)
}

/// Ripple-carry addition. Bit 0 uses a half adder, higher bits full adders
/// while both operands and the carry are present. A carry-out that cannot
/// be set given the operand maxima is not emitted.
pub fn ripple_add(b: &mut NetlistBuilder, x: &Bus, y: &Bus) -> Bus {
    let max = x.max + y.max;
    let width = bit_width(max);
    let mut bits = Vec::with_capacity(width);
    let mut carry: Option<NodeId> = None;
    for i in 0..x.bits.len().max(y.bits.len()) {
        let present: Vec<NodeId> = [x.bits.get(i).copied(), y.bits.get(i).copied(), carry]
            .into_iter()
            .flatten()
            .collect();
        let (s, c) = match present[..] {
            [p, q, r] => {
                let (s, c) = b.full_adder(p, q, r);
                (s, Some(c))
            }
            [p, q] => {
                let (s, c) = b.half_adder(p, q);
                (s, Some(c))
            }
            [p] => (p, None),
            _ => unreachable!("at least one operand has bit {i}"),
        };
        bits.push(s);
        carry = c;
    }
    if let Some(c) = carry {
        bits.push(c);
    }
    bits.truncate(width);
    Bus { bits, max }
}

/// Balanced binary reduction of single bits into a count bus.
///
/// Operands are combined pairwise in the given order, level by level; an
/// odd leftover is carried to the next level unchanged.
pub fn build_popcount_tree(b: &mut NetlistBuilder, bits: &[NodeId]) -> Result<Bus, LowerError> {
    if bits.is_empty() {
        return Err(LowerError::EmptyPopcount);
    }
    let mut level: Vec<Bus> = bits.iter().map(|&n| Bus { bits: vec![n], max: 1 }).collect();
    while level.len() > 1 {
        let mut next = Vec::with_capacity(level.len().div_ceil(2));
        let mut it = level.chunks(2);
        for pair in it.by_ref() {
            match pair {
                [x, y] => next.push(ripple_add(b, x, y)),
                [x] => next.push(x.clone()),
                _ => unreachable!(),
            }
        }
        level = next;
    }
    Ok(level.pop().expect("non-empty"))
}

/// `[value(bus) >= k]` for a constant `k`.
pub fn build_geq_const(b: &mut NetlistBuilder, bus: &[NodeId], k: i64) -> NodeId {
    if k <= 0 {
        return b.constant(true);
    }
    if bus.len() < 64 && k as u64 > (1u64 << bus.len()) - 1 {
        return b.constant(false);
    }
    // ge_i: bits 0..=i of the bus are >= bits 0..=i of k
    let mut ge = b.constant(true);
    for (i, &bit) in bus.iter().enumerate() {
        ge = if (k >> i) & 1 == 1 {
            b.and(bit, ge)
        } else {
            b.or(bit, ge)
        };
    }
    ge
}

/// `[value(x) >= value(y)]` for two variable buses, as a ripple compare
/// `ge_i = (x_i & !y_i) | (xnor(x_i, y_i) & ge_{i-1})`, which unrolls to
/// an MSB-first decision chain.
pub fn build_comparator(b: &mut NetlistBuilder, x: &[NodeId], y: &[NodeId]) -> NodeId {
    let zero = b.constant(false);
    let mut ge = b.constant(true);
    for i in 0..x.len().max(y.len()) {
        let xi = x.get(i).copied().unwrap_or(zero);
        let yi = y.get(i).copied().unwrap_or(zero);
        let nyi = b.inv(yi);
        let gt = b.and(xi, nyi);
        let eq = b.xnor(xi, yi);
        let keep = b.and(eq, ge);
        ge = b.or(gt, keep);
    }
    ge
}

/// Threshold/sign parameter inputs of one map in variable mode.
#[derive(Clone, Debug)]
struct MapParams {
    weights: Vec<NodeId>,
    thresh: Vec<NodeId>,
    sel: NodeId,
    cst: NodeId,
}

/// Receptive field taps of one output position: `Some(source index)` into
/// the layer input, or `None` for a padded position.
fn conv_taps(input: Shape, kh: usize, kw: usize, y: usize, x: usize) -> Vec<Option<usize>> {
    let (ph, pw) = (kh / 2, kw / 2);
    let mut taps = Vec::with_capacity(input.channels * kh * kw);
    for c in 0..input.channels {
        for ky in 0..kh {
            for kx in 0..kw {
                let iy = (y + ky).checked_sub(ph).filter(|&v| v < input.height);
                let ix = (x + kx).checked_sub(pw).filter(|&v| v < input.width);
                taps.push(match (iy, ix) {
                    (Some(iy), Some(ix)) => Some((c * input.height + iy) * input.width + ix),
                    _ => None,
                });
            }
        }
    }
    taps
}

/// Names of every primary input, in order.
pub fn input_names(m: &BnnModel, mode: LowerMode) -> Vec<String> {
    let s = m.input;
    let mut names = Vec::new();
    for c in 0..s.channels {
        for y in 0..s.height {
            for x in 0..s.width {
                names.push(format!("x_c{c}_y{y}_x{x}"));
            }
        }
    }
    if mode == LowerMode::Variable {
        for (l, layer) in m.layers.iter().enumerate() {
            let n_rf = layer.spec.n_rf();
            for mm in 0..layer.spec.out_maps {
                let p = format!("L{}_m{mm}", l + 1);
                names.extend((0..n_rf).map(|i| format!("{p}_w{i}")));
                names.extend((0..count_width(n_rf)).map(|j| format!("{p}_t{j}")));
                names.push(format!("{p}_sel"));
                names.push(format!("{p}_cst"));
            }
        }
    }
    names
}

/// Names of every output: `score{k}_b{j}`, LSB first.
pub fn output_names(m: &BnnModel) -> Vec<String> {
    let last = m.layers.last().expect("validated model");
    let w = count_width(last.spec.n_rf());
    (0..last.spec.out_maps)
        .flat_map(|k| (0..w).map(move |j| format!("score{k}_b{j}")))
        .collect()
}

/// Number of parameter input bits in variable mode.
pub fn param_input_count(m: &BnnModel) -> usize {
    m.layers
        .iter()
        .map(|l| l.spec.out_maps * (l.spec.n_rf() + count_width(l.spec.n_rf()) + 2))
        .sum()
}

/// Primary input assignment for `frame`, driving parameter inputs (variable
/// mode) with the model's values.
pub fn input_vector(m: &BnnModel, mode: LowerMode, frame: &BinaryFrame) -> Vec<bool> {
    let mut v = frame.bits.clone();
    if mode == LowerMode::Variable {
        v.reserve(param_input_count(m));
        for layer in &m.layers {
            let w = count_width(layer.spec.n_rf());
            for n in &layer.neurons {
                v.extend_from_slice(&n.weights);
                let t = if matches!(n.sign, Sign::Geq | Sign::Leq) {
                    n.thresh as u64
                } else {
                    0
                };
                v.extend((0..w).map(|j| (t >> j) & 1 == 1));
                let (sel, cst) = match n.sign {
                    Sign::Geq => (true, false),
                    Sign::Leq => (false, false),
                    Sign::Const1 => (true, true),
                    Sign::Const0 => (false, true),
                };
                v.push(sel);
                v.push(cst);
            }
        }
    }
    v
}

/// Decodes output bits into per-class scores.
pub fn decode_scores(m: &BnnModel, outputs: &[bool]) -> Vec<i64> {
    let w = count_width(m.layers.last().expect("validated model").spec.n_rf());
    outputs
        .chunks(w)
        .map(|c| {
            c.iter()
                .enumerate()
                .map(|(j, &b)| (b as i64) << j)
                .sum()
        })
        .collect()
}

struct Lowerer<'a> {
    b: NetlistBuilder,
    mode: LowerMode,
    model: &'a BnnModel,
    params: Vec<Vec<MapParams>>,
}

impl Lowerer<'_> {
    /// XNOR stage + popcount for one neuron. Returns the count bus and the
    /// number of constant-one contributions that were folded out (fixed
    /// mode padding).
    fn popcount(
        &mut self,
        layer: usize,
        map: usize,
        neuron: &NeuronParams,
        taps: &[Option<usize>],
        act: &[NodeId],
    ) -> (Option<Bus>, i64) {
        let mut real: Vec<(usize, NodeId)> = Vec::with_capacity(taps.len());
        let mut padded: Vec<NodeId> = Vec::new();
        let mut ones = 0i64;
        for (i, tap) in taps.iter().enumerate() {
            match self.mode {
                LowerMode::Fixed => match tap {
                    Some(src) => {
                        let x = act[*src];
                        let bit = if neuron.weights[i] { x } else { self.b.inv(x) };
                        real.push((*src, bit));
                    }
                    // padding is 0, XNOR with the weight is !w
                    None => ones += (!neuron.weights[i]) as i64,
                },
                LowerMode::Variable => {
                    let w = self.params[layer][map].weights[i];
                    match tap {
                        Some(src) => {
                            let bit = self.b.xnor(act[*src], w);
                            real.push((*src, bit));
                        }
                        None => {
                            let zero = self.b.constant(false);
                            padded.push(self.b.xnor(zero, w));
                        }
                    }
                }
            }
        }
        real.sort_by_key(|&(src, _)| src);
        let bits: Vec<NodeId> = real.into_iter().map(|(_, n)| n).chain(padded).collect();
        if bits.is_empty() {
            return (None, ones);
        }
        let bus = build_popcount_tree(&mut self.b, &bits).expect("non-empty");
        (Some(bus), ones)
    }

    fn compare(&mut self, layer: usize, map: usize, neuron: &NeuronParams, bus: Option<Bus>, ones: i64) -> NodeId {
        match self.mode {
            LowerMode::Fixed => {
                let b = &mut self.b;
                match neuron.sign {
                    Sign::Const1 => b.constant(true),
                    Sign::Const0 => b.constant(false),
                    Sign::Geq | Sign::Leq => {
                        let (k, invert) = match neuron.sign {
                            Sign::Geq => (neuron.thresh - ones, false),
                            _ => (neuron.thresh - ones + 1, true),
                        };
                        let ge = match &bus {
                            Some(bus) => build_geq_const(b, &bus.bits, k),
                            None => b.constant(0 >= k),
                        };
                        if invert {
                            b.inv(ge)
                        } else {
                            ge
                        }
                    }
                }
            }
            LowerMode::Variable => {
                let p = self.params[layer][map].clone();
                let bus = bus.expect("variable mode keeps every tap");
                let b = &mut self.b;
                let geq = build_comparator(b, &bus.bits, &p.thresh);
                let leq = build_comparator(b, &p.thresh, &bus.bits);
                let dir = b.mux(p.sel, geq, leq);
                b.mux(p.cst, p.sel, dir)
            }
        }
    }

    fn lower(mut self) -> Netlist {
        let m = self.model;
        let names = input_names(m, self.mode);
        let mut ids = names
            .into_iter()
            .map(|n| self.b.add_input(n).expect("inputs first"));
        let mut act: Vec<NodeId> = ids.by_ref().take(m.input.len()).collect();
        if self.mode == LowerMode::Variable {
            for layer in &m.layers {
                let n_rf = layer.spec.n_rf();
                let maps = (0..layer.spec.out_maps)
                    .map(|_| MapParams {
                        weights: ids.by_ref().take(n_rf).collect(),
                        thresh: ids.by_ref().take(count_width(n_rf)).collect(),
                        sel: ids.next().expect("sel"),
                        cst: ids.next().expect("cst"),
                    })
                    .collect();
                self.params.push(maps);
            }
        }
        drop(ids);

        let inputs = m.layer_inputs();
        let last = m.layers.len() - 1;
        for (l, layer) in m.layers.iter().enumerate() {
            self.b.set_tag(l as u16 + 1);
            let s = inputs[l];
            match layer.spec.kind {
                LayerKind::BinConv { kh, kw, pool } => {
                    let plane = s.height * s.width;
                    let mut out = vec![0; layer.spec.out_maps * plane];
                    for y in 0..s.height {
                        for x in 0..s.width {
                            let taps = conv_taps(s, kh, kw, y, x);
                            for (mm, neuron) in layer.neurons.iter().enumerate() {
                                let (bus, ones) = self.popcount(l, mm, neuron, &taps, &act);
                                out[mm * plane + y * s.width + x] =
                                    self.compare(l, mm, neuron, bus, ones);
                            }
                        }
                    }
                    act = match pool {
                        Pool::None => out,
                        Pool::Or2x2 => {
                            let (h, w) = (s.height / 2, s.width / 2);
                            let mut pooled = Vec::with_capacity(layer.spec.out_maps * h * w);
                            for c in 0..layer.spec.out_maps {
                                for y in 0..h {
                                    for x in 0..w {
                                        let at = |dy: usize, dx: usize| {
                                            out[c * plane + (2 * y + dy) * s.width + 2 * x + dx]
                                        };
                                        let top = self.b.or(at(0, 0), at(0, 1));
                                        let bottom = self.b.or(at(1, 0), at(1, 1));
                                        pooled.push(self.b.or(top, bottom));
                                    }
                                }
                            }
                            pooled
                        }
                    };
                }
                LayerKind::BinFc { .. } => {
                    let taps: Vec<Option<usize>> = (0..layer.spec.in_maps).map(Some).collect();
                    let mut out = Vec::with_capacity(layer.spec.out_maps);
                    for (mm, neuron) in layer.neurons.iter().enumerate() {
                        let (bus, _) = self.popcount(l, mm, neuron, &taps, &act);
                        let bus = bus.expect("fc layers have no padding");
                        if l == last {
                            let w = count_width(layer.spec.n_rf());
                            for j in 0..w {
                                let bit = match bus.bits.get(j) {
                                    Some(&bit) => bit,
                                    None => self.b.constant(false),
                                };
                                self.b
                                    .add_output(format!("score{mm}_b{j}"), bit)
                                    .expect("bit exists");
                            }
                        } else {
                            out.push(self.compare(l, mm, neuron, Some(bus), 0));
                        }
                    }
                    act = out;
                }
            }
        }
        self.b.finish()
    }
}

/// Lowers a validated model. Construction uses structural hashing and local
/// simplification throughout.
pub fn lower_model(m: &BnnModel, mode: LowerMode) -> Result<Netlist, LowerError> {
    m.validate().map_err(|e| LowerError::Model(e.to_string()))?;
    Ok(Lowerer {
        b: NetlistBuilder::new(),
        mode,
        model: m,
        params: Vec::new(),
    }
    .lower())
}
