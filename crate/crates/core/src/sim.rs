//! Bit-parallel netlist simulation, toggle counting and equivalence checks.
//!
//! Stimuli are evaluated 64 at a time, one per bit lane of a `u64`. Chunks
//! of 64 stimuli are independent and may run on several threads; results
//! are always collected in stimulus order.
//!
//! Random equivalence checks draw frames from `ChaCha8Rng::seed_from_u64`
//! with one `gen::<bool>()` per image bit, frame after frame, bits in
//! channel, row, column order.

use std::fmt::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde_json::json;
use thiserror::Error;

use crate::lower::{self, LowerMode};
use crate::model::{BnnModel, Shape};
use crate::netlist::{GateType, Netlist};
use crate::reference::{self, BinaryFrame, RefError};

/// Largest image input count for which exhaustive checking is allowed.
pub const MAX_EXHAUSTIVE_INPUTS: usize = 20;

const LANES: usize = 64;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SimError {
    #[error("input vector {index} has {got} bits, netlist has {expected} inputs")]
    Length {
        index: usize,
        expected: usize,
        got: usize,
    },
    #[error("toggle profile needs at least 2 stimuli, got {0}")]
    TooFewStimuli(usize),
    #[error("exhaustive check over {inputs} inputs exceeds the limit of {MAX_EXHAUSTIVE_INPUTS}")]
    ExhaustiveTooLarge { inputs: usize },
    #[error("netlist interface does not match the model: {0}")]
    Interface(String),
    #[error(transparent)]
    Reference(#[from] RefError),
}

/// Values of every node for up to 64 stimuli packed into lanes.
fn eval_words(n: &Netlist, inputs: &[u64]) -> Vec<u64> {
    let mut v: Vec<u64> = Vec::with_capacity(n.len());
    for (i, node) in n.nodes().iter().enumerate() {
        let [a, b, c] = node.ops;
        let val = match node.ty {
            GateType::Input => inputs[i],
            GateType::Const0 => 0,
            GateType::Const1 => !0,
            GateType::Inv => !v[a as usize],
            GateType::And2 => v[a as usize] & v[b as usize],
            GateType::Or2 => v[a as usize] | v[b as usize],
            GateType::Xor2 => v[a as usize] ^ v[b as usize],
            GateType::Xnor2 => !(v[a as usize] ^ v[b as usize]),
            GateType::Mux2 => {
                let s = v[a as usize];
                (s & v[b as usize]) | (!s & v[c as usize])
            }
        };
        v.push(val);
    }
    v
}

fn check_lengths(n: &Netlist, s: &[Vec<bool>]) -> Result<(), SimError> {
    match s.iter().position(|v| v.len() != n.num_inputs()) {
        Some(index) => Err(SimError::Length {
            index,
            expected: n.num_inputs(),
            got: s[index].len(),
        }),
        None => Ok(()),
    }
}

fn pack(n: &Netlist, chunk: &[Vec<bool>]) -> Vec<u64> {
    (0..n.num_inputs())
        .map(|i| {
            chunk
                .iter()
                .enumerate()
                .fold(0u64, |w, (lane, v)| w | ((v[i] as u64) << lane))
        })
        .collect()
}

pub fn evaluate(n: &Netlist, v: &[bool]) -> Result<Vec<bool>, SimError> {
    if v.len() != n.num_inputs() {
        return Err(SimError::Length {
            index: 0,
            expected: n.num_inputs(),
            got: v.len(),
        });
    }
    let words: Vec<u64> = v.iter().map(|&b| b as u64).collect();
    let vals = eval_words(n, &words);
    Ok(n.outputs().iter().map(|&(_, id)| vals[id as usize] & 1 == 1).collect())
}

/// `evaluate` over every stimulus, in order.
pub fn batch_evaluate(n: &Netlist, s: &[Vec<bool>]) -> Result<Vec<Vec<bool>>, SimError> {
    check_lengths(n, s)?;
    let chunks: Vec<Vec<Vec<bool>>> = s
        .par_chunks(LANES)
        .map(|chunk| {
            let vals = eval_words(n, &pack(n, chunk));
            (0..chunk.len())
                .map(|lane| {
                    n.outputs()
                        .iter()
                        .map(|&(_, id)| (vals[id as usize] >> lane) & 1 == 1)
                        .collect()
                })
                .collect()
        })
        .collect();
    Ok(chunks.into_iter().flatten().collect())
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DepthToggles {
    pub depth: u32,
    pub nodes: usize,
    pub toggles: u64,
}

/// Zero-delay toggle counts over consecutive stimuli.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ToggleProfile {
    pub stimuli: usize,
    pub per_node: Vec<u64>,
    pub by_depth: Vec<DepthToggles>,
    /// Indexed by layer tag.
    pub by_tag: Vec<u64>,
    pub total: u64,
}

impl ToggleProfile {
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        writeln!(s, "stimuli {}", self.stimuli).unwrap();
        writeln!(s, "nodes {}", self.per_node.len()).unwrap();
        writeln!(s, "total_toggles {}", self.total).unwrap();
        writeln!(s, "tag toggles").unwrap();
        for (t, n) in self.by_tag.iter().enumerate() {
            writeln!(s, "{t} {n}").unwrap();
        }
        writeln!(s, "depth nodes toggles toggles_per_node").unwrap();
        for d in &self.by_depth {
            let avg = if d.nodes == 0 {
                0.0
            } else {
                d.toggles as f64 / d.nodes as f64
            };
            writeln!(s, "{} {} {} {:.3}", d.depth, d.nodes, d.toggles, avg).unwrap();
        }
        s
    }

    pub fn to_json(&self) -> serde_json::Value {
        json!({
            "stimuli": self.stimuli,
            "nodes": self.per_node.len(),
            "total_toggles": self.total,
            "by_tag": self.by_tag,
            "by_depth": self.by_depth.iter().map(|d| json!({
                "depth": d.depth,
                "nodes": d.nodes,
                "toggles": d.toggles,
            })).collect::<Vec<_>>(),
        })
    }
}

pub fn toggle_profile(n: &Netlist, s: &[Vec<bool>]) -> Result<ToggleProfile, SimError> {
    if s.len() < 2 {
        return Err(SimError::TooFewStimuli(s.len()));
    }
    check_lengths(n, s)?;
    // Each chunk overlaps the previous one by one stimulus so that every
    // consecutive pair lies inside a single chunk.
    let starts: Vec<usize> = (0..s.len() - 1).step_by(LANES - 1).collect();
    let zero = || vec![0u64; n.len()];
    let per_node = starts
        .par_iter()
        .fold(zero, |mut acc, &start| {
            let chunk = &s[start..(start + LANES).min(s.len())];
            let vals = eval_words(n, &pack(n, chunk));
            let mask = (1u64 << (chunk.len() - 1)) - 1;
            for (a, &w) in acc.iter_mut().zip(&vals) {
                *a += ((w ^ (w >> 1)) & mask).count_ones() as u64;
            }
            acc
        })
        .reduce(zero, |mut a, b| {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
            a
        });
    let depths = n.depths();
    let max_depth = depths.iter().copied().max().unwrap_or(0) as usize;
    let mut by_depth: Vec<DepthToggles> = (0..=max_depth)
        .map(|d| DepthToggles {
            depth: d as u32,
            nodes: 0,
            toggles: 0,
        })
        .collect();
    if n.is_empty() {
        by_depth.clear();
    }
    let max_tag = n.tags().iter().copied().max().unwrap_or(0) as usize;
    let mut by_tag = vec![0u64; max_tag + 1];
    for (i, &t) in per_node.iter().enumerate() {
        let d = &mut by_depth[depths[i] as usize];
        d.nodes += 1;
        d.toggles += t;
        by_tag[n.tags()[i] as usize] += t;
    }
    Ok(ToggleProfile {
        stimuli: s.len(),
        total: per_node.iter().sum(),
        per_node,
        by_depth,
        by_tag,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Strategy {
    Exhaustive,
    Random { count: usize, seed: u64 },
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Counterexample {
    pub index: usize,
    pub frame: BinaryFrame,
    pub expected: Vec<i64>,
    pub got: Vec<i64>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EquivReport {
    pub vectors: usize,
    pub mismatches: usize,
    pub first: Option<Counterexample>,
}

impl EquivReport {
    pub fn passed(&self) -> bool {
        self.mismatches == 0
    }
}

pub fn random_frames(shape: Shape, count: usize, seed: u64) -> Vec<BinaryFrame> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| BinaryFrame {
            shape,
            bits: (0..shape.len()).map(|_| rng.gen::<bool>()).collect(),
        })
        .collect()
}

fn exhaustive_frame(shape: Shape, v: usize) -> BinaryFrame {
    BinaryFrame {
        shape,
        bits: (0..shape.len()).map(|i| (v >> i) & 1 == 1).collect(),
    }
}

/// Checks that the netlist's inputs and outputs are the ones lowering
/// would produce for `m` in `mode`.
pub fn check_interface(n: &Netlist, m: &BnnModel, mode: LowerMode) -> Result<(), SimError> {
    let want_in = lower::input_names(m, mode);
    if n.input_names() != want_in.as_slice() {
        let at = n
            .input_names()
            .iter()
            .zip(&want_in)
            .position(|(a, b)| a != b)
            .unwrap_or(want_in.len().min(n.num_inputs()));
        return Err(SimError::Interface(format!(
            "expected {} inputs for {mode} mode, got {} (first difference at input {at})",
            want_in.len(),
            n.num_inputs()
        )));
    }
    let want_out = lower::output_names(m);
    let got_out: Vec<&str> = n.outputs().iter().map(|o| o.0.as_str()).collect();
    if got_out != want_out.iter().map(String::as_str).collect::<Vec<_>>() {
        return Err(SimError::Interface(format!(
            "expected outputs {}..{} ({} total), got {}",
            want_out.first().map(String::as_str).unwrap_or(""),
            want_out.last().map(String::as_str).unwrap_or(""),
            want_out.len(),
            got_out.len()
        )));
    }
    Ok(())
}

/// Compares netlist scores with the reference interpreter. Parameter
/// inputs (variable mode) are driven with the model's values. Exhaustive
/// checking enumerates all image inputs, frame `v` setting image bit `i`
/// to bit `i` of `v`.
pub fn check_equivalence(
    n: &Netlist,
    m: &BnnModel,
    mode: LowerMode,
    strategy: Strategy,
) -> Result<EquivReport, SimError> {
    check_interface(n, m, mode)?;
    let shape = m.input;
    let image = shape.len();
    let (total, frames) = match strategy {
        Strategy::Exhaustive => {
            if image > MAX_EXHAUSTIVE_INPUTS {
                return Err(SimError::ExhaustiveTooLarge { inputs: image });
            }
            (1usize << image, None)
        }
        Strategy::Random { count, seed } => (count, Some(random_frames(shape, count, seed))),
    };
    let frame_at = |i: usize| match &frames {
        Some(f) => f[i].clone(),
        None => exhaustive_frame(shape, i),
    };
    let params = lower::input_vector(m, mode, &BinaryFrame::zeros(shape))[image..].to_vec();

    let starts: Vec<usize> = (0..total).step_by(LANES).collect();
    let results: Vec<Result<(usize, Option<Counterexample>), SimError>> = starts
        .par_iter()
        .map(|&start| {
            let lanes = (total - start).min(LANES);
            let chunk: Vec<BinaryFrame> = (start..start + lanes).map(frame_at).collect();
            let mut words: Vec<u64> = (0..image)
                .map(|i| {
                    chunk
                        .iter()
                        .enumerate()
                        .fold(0u64, |w, (lane, f)| w | ((f.bits[i] as u64) << lane))
                })
                .collect();
            words.extend(params.iter().map(|&p| if p { !0u64 } else { 0 }));
            let vals = eval_words(n, &words);
            let mut mismatches = 0;
            let mut first = None;
            for (lane, frame) in chunk.into_iter().enumerate() {
                let bits: Vec<bool> = n
                    .outputs()
                    .iter()
                    .map(|&(_, id)| (vals[id as usize] >> lane) & 1 == 1)
                    .collect();
                let got = lower::decode_scores(m, &bits);
                let expected = reference::infer(m, &frame)?.scores;
                if got != expected {
                    mismatches += 1;
                    if first.is_none() {
                        first = Some(Counterexample {
                            index: start + lane,
                            frame,
                            expected,
                            got,
                        });
                    }
                }
            }
            Ok((mismatches, first))
        })
        .collect();
    let mut report = EquivReport {
        vectors: total,
        mismatches: 0,
        first: None,
    };
    for r in results {
        let (mm, first) = r?;
        report.mismatches += mm;
        if report.first.is_none() {
            report.first = first;
        }
    }
    Ok(report)
}
