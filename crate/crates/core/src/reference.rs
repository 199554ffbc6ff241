//! Bit-exact software interpreter for binarized inference.
//!
//! Layer pipeline: XNOR-popcount, folded threshold compare, then OR pooling.
//! Same padding feeds constant zeros into the receptive field.

use thiserror::Error;

use crate::model::{BnnModel, Layer, LayerKind, NeuronParams, Pool, Shape};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum RefError {
    #[error("receptive field has {got} bits, weights have {expected}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("frame shape {got} does not match expected {expected}")]
    ShapeMismatch { expected: Shape, got: Shape },
    #[error("OR pooling needs even spatial dimensions, got {0}")]
    OddDims(Shape),
    #[error("frame has {got} bits, shape {shape} needs {}", shape.len())]
    BitCount { shape: Shape, got: usize },
    #[error("line {line}: {msg}")]
    Stimuli { line: usize, msg: String },
}

/// Binary activations indexed `(channel, y, x)` row-major.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct BinaryFrame {
    pub shape: Shape,
    pub bits: Vec<bool>,
}

impl BinaryFrame {
    pub fn new(shape: Shape, bits: Vec<bool>) -> Result<Self, RefError> {
        if bits.len() != shape.len() {
            return Err(RefError::BitCount {
                shape,
                got: bits.len(),
            });
        }
        Ok(BinaryFrame { shape, bits })
    }

    pub fn zeros(shape: Shape) -> Self {
        BinaryFrame {
            shape,
            bits: vec![false; shape.len()],
        }
    }

    pub fn index(&self, c: usize, y: usize, x: usize) -> usize {
        (c * self.shape.height + y) * self.shape.width + x
    }

    pub fn get(&self, c: usize, y: usize, x: usize) -> bool {
        self.bits[self.index(c, y, x)]
    }

    /// Parses a single '0'/'1' line.
    pub fn parse(shape: Shape, line: &str) -> Result<Self, RefError> {
        let bits = parse_bit_line(line).map_err(|msg| RefError::Stimuli { line: 1, msg })?;
        BinaryFrame::new(shape, bits)
    }

    pub fn to_line(&self) -> String {
        bits_to_line(&self.bits)
    }
}

pub(crate) fn parse_bit_line(line: &str) -> Result<Vec<bool>, String> {
    line.trim()
        .bytes()
        .map(|b| match b {
            b'0' => Ok(false),
            b'1' => Ok(true),
            other => Err(format!("unexpected character {:?}", other as char)),
        })
        .collect()
}

pub(crate) fn bits_to_line(bits: &[bool]) -> String {
    bits.iter().map(|&b| if b { '1' } else { '0' }).collect()
}

/// Reads a stimuli file: one vector per non-empty line. Every line must have
/// `width` bits.
pub fn parse_stimuli(text: &str, width: usize) -> Result<Vec<Vec<bool>>, RefError> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let bits = parse_bit_line(line).map_err(|msg| RefError::Stimuli { line: i + 1, msg })?;
        if bits.len() != width {
            return Err(RefError::Stimuli {
                line: i + 1,
                msg: format!("expected {width} bits, got {}", bits.len()),
            });
        }
        out.push(bits);
    }
    Ok(out)
}

pub fn format_stimuli(vectors: &[Vec<bool>]) -> String {
    let mut s = String::new();
    for v in vectors {
        s.push_str(&bits_to_line(v));
        s.push('\n');
    }
    s
}

/// `popcount(weights XNOR rec_field)`.
pub fn xnor_popcount(weights: &[bool], rec_field: &[bool]) -> Result<i64, RefError> {
    if weights.len() != rec_field.len() {
        return Err(RefError::LengthMismatch {
            expected: weights.len(),
            got: rec_field.len(),
        });
    }
    Ok(weights
        .iter()
        .zip(rec_field)
        .filter(|(w, r)| w == r)
        .count() as i64)
}

pub fn binconv_neuron(rec_field: &[bool], params: &NeuronParams) -> Result<bool, RefError> {
    Ok(params.fire(xnor_popcount(&params.weights, rec_field)?))
}

/// Receptive field of output position `(y, x)` in weight bit order, with
/// zeros at padded positions.
pub fn receptive_field(input: &BinaryFrame, kh: usize, kw: usize, y: usize, x: usize) -> Vec<bool> {
    let (ph, pw) = (kh / 2, kw / 2);
    let s = input.shape;
    let mut rf = Vec::with_capacity(s.channels * kh * kw);
    for c in 0..s.channels {
        for ky in 0..kh {
            for kx in 0..kw {
                let iy = (y + ky).checked_sub(ph).filter(|&v| v < s.height);
                let ix = (x + kx).checked_sub(pw).filter(|&v| v < s.width);
                rf.push(match (iy, ix) {
                    (Some(iy), Some(ix)) => input.get(c, iy, ix),
                    _ => false,
                });
            }
        }
    }
    rf
}

/// Popcount values of every conv output neuron, before comparison.
fn conv_popcounts(input: &BinaryFrame, layer: &Layer, kh: usize, kw: usize) -> Vec<i64> {
    let s = input.shape;
    let mut out = vec![0; layer.spec.out_maps * s.height * s.width];
    for y in 0..s.height {
        for x in 0..s.width {
            let rf = receptive_field(input, kh, kw, y, x);
            for (m, n) in layer.neurons.iter().enumerate() {
                out[(m * s.height + y) * s.width + x] =
                    xnor_popcount(&n.weights, &rf).expect("lengths validated");
            }
        }
    }
    out
}

pub fn or_pool(input: &BinaryFrame) -> Result<BinaryFrame, RefError> {
    let s = input.shape;
    if s.height % 2 != 0 || s.width % 2 != 0 {
        return Err(RefError::OddDims(s));
    }
    let os = Shape::new(s.height / 2, s.width / 2, s.channels);
    let mut bits = Vec::with_capacity(os.len());
    for c in 0..s.channels {
        for y in 0..os.height {
            for x in 0..os.width {
                bits.push(
                    input.get(c, 2 * y, 2 * x)
                        | input.get(c, 2 * y, 2 * x + 1)
                        | input.get(c, 2 * y + 1, 2 * x)
                        | input.get(c, 2 * y + 1, 2 * x + 1),
                );
            }
        }
    }
    Ok(BinaryFrame { shape: os, bits })
}

pub fn conv_layer_forward(input: &BinaryFrame, layer: &Layer) -> Result<BinaryFrame, RefError> {
    let LayerKind::BinConv { kh, kw, pool } = layer.spec.kind else {
        panic!("conv_layer_forward called on a non-conv layer");
    };
    let s = input.shape;
    if s.channels != layer.spec.in_maps {
        return Err(RefError::ShapeMismatch {
            expected: Shape::new(s.height, s.width, layer.spec.in_maps),
            got: s,
        });
    }
    let phis = conv_popcounts(input, layer, kh, kw);
    let plane = s.height * s.width;
    let bits = phis
        .iter()
        .enumerate()
        .map(|(i, &phi)| layer.neurons[i / plane].fire(phi))
        .collect();
    let out = BinaryFrame {
        shape: Shape::new(s.height, s.width, layer.spec.out_maps),
        bits,
    };
    match pool {
        Pool::None => Ok(out),
        Pool::Or2x2 => or_pool(&out),
    }
}

/// Popcounts of a fully connected layer over the flattened input.
pub fn fc_popcounts(input: &BinaryFrame, layer: &Layer) -> Result<Vec<i64>, RefError> {
    layer
        .neurons
        .iter()
        .map(|n| xnor_popcount(&n.weights, &input.bits))
        .collect()
}

/// Scores and decision of one inference.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Inference {
    pub scores: Vec<i64>,
    pub class: usize,
}

/// Index of the maximum score, lowest index on ties.
pub fn argmax(scores: &[i64]) -> usize {
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate() {
        if s > scores[best] {
            best = i;
        }
    }
    best
}

/// Runs every layer but the last and returns the activations feeding the
/// final layer.
pub fn forward_hidden(m: &BnnModel, frame: &BinaryFrame) -> Result<BinaryFrame, RefError> {
    if frame.shape != m.input {
        return Err(RefError::ShapeMismatch {
            expected: m.input,
            got: frame.shape,
        });
    }
    let mut cur = frame.clone();
    for layer in &m.layers[..m.layers.len() - 1] {
        cur = match layer.spec.kind {
            LayerKind::BinConv { .. } => conv_layer_forward(&cur, layer)?,
            LayerKind::BinFc { .. } => {
                let bits = fc_popcounts(&cur, layer)?
                    .into_iter()
                    .zip(&layer.neurons)
                    .map(|(phi, n)| n.fire(phi))
                    .collect();
                BinaryFrame {
                    shape: Shape::new(1, 1, layer.spec.out_maps),
                    bits,
                }
            }
        };
    }
    Ok(cur)
}

pub fn infer(m: &BnnModel, frame: &BinaryFrame) -> Result<Inference, RefError> {
    let hidden = forward_hidden(m, frame)?;
    let last = m.layers.last().expect("validated model has layers");
    let scores = fc_popcounts(&hidden, last)?;
    let class = argmax(&scores);
    Ok(Inference { scores, class })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::model::{LayerSpec, Sign};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn bits(s: &str) -> Vec<bool> {
        s.bytes().map(|b| b == b'1').collect()
    }

    fn neuron(w: &str, thresh: i64, sign: Sign) -> NeuronParams {
        NeuronParams {
            weights: bits(w),
            thresh,
            sign,
        }
    }

    #[test]
    fn identical_vectors_saturate() {
        let n = neuron("101101001", 9, Sign::Geq);
        assert!(binconv_neuron(&n.weights.clone(), &n).unwrap());
    }

    #[test]
    fn complement_gives_zero() {
        let n = neuron("101101001", 1, Sign::Geq);
        let inv: Vec<bool> = n.weights.iter().map(|b| !b).collect();
        assert_eq!(xnor_popcount(&n.weights, &inv).unwrap(), 0);
        assert!(!binconv_neuron(&inv, &n).unwrap());
    }

    #[test]
    fn hand_enumerated_leq() {
        // 110100110 vs 101101001: agreeing positions are 0, 3, 5 -> phi = 3
        let n = neuron("101101001", 4, Sign::Leq);
        let rf = bits("110100110");
        assert_eq!(xnor_popcount(&n.weights, &rf).unwrap(), 3);
        assert!(binconv_neuron(&rf, &n).unwrap());
        let n = neuron("101101001", 2, Sign::Leq);
        assert!(!binconv_neuron(&rf, &n).unwrap());
    }

    #[test]
    fn length_mismatch() {
        let n = neuron("101", 1, Sign::Geq);
        assert_eq!(
            binconv_neuron(&[true], &n),
            Err(RefError::LengthMismatch { expected: 3, got: 1 })
        );
    }

    #[test]
    fn const_neurons_give_all_ones() {
        let layer = Layer {
            spec: LayerSpec {
                kind: LayerKind::BinConv {
                    kh: 3,
                    kw: 3,
                    pool: Pool::None,
                },
                in_maps: 1,
                out_maps: 2,
            },
            neurons: vec![neuron("111111111", 0, Sign::Const1); 2],
        };
        let out = conv_layer_forward(&BinaryFrame::zeros(Shape::new(4, 4, 1)), &layer).unwrap();
        assert_eq!(out.shape, Shape::new(4, 4, 2));
        assert!(out.bits.iter().all(|&b| b));
    }

    /// Direct sliding-window loop written without `receptive_field`.
    fn brute_conv(input: &BinaryFrame, layer: &Layer) -> Vec<bool> {
        let s = input.shape;
        let mut out = Vec::new();
        for n in &layer.neurons {
            for y in 0..s.height as i64 {
                for x in 0..s.width as i64 {
                    let mut phi = 0;
                    let mut k = 0;
                    for c in 0..s.channels {
                        for dy in -1..=1i64 {
                            for dx in -1..=1i64 {
                                let (yy, xx) = (y + dy, x + dx);
                                let v = yy >= 0
                                    && xx >= 0
                                    && yy < s.height as i64
                                    && xx < s.width as i64
                                    && input.get(c, yy as usize, xx as usize);
                                if v == n.weights[k] {
                                    phi += 1;
                                }
                                k += 1;
                            }
                        }
                    }
                    out.push(n.fire(phi));
                }
            }
        }
        out
    }

    #[test]
    fn conv_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut model = fixtures::micro(5);
        let layer = &mut model.layers[0];
        layer.spec.kind = LayerKind::BinConv {
            kh: 3,
            kw: 3,
            pool: Pool::None,
        };
        for _ in 0..50 {
            let frame = BinaryFrame::new(
                Shape::new(4, 4, 1),
                (0..16).map(|_| rng.gen_bool(0.5)).collect(),
            )
            .unwrap();
            let got = conv_layer_forward(&frame, layer).unwrap();
            assert_eq!(got.bits, brute_conv(&frame, layer));
        }
    }

    #[test]
    fn fixture_first_layer_shape() {
        let m = fixtures::bnn16(1);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let frame = BinaryFrame::new(m.input, (0..256).map(|_| rng.gen_bool(0.3)).collect()).unwrap();
        let out = conv_layer_forward(&frame, &m.layers[0]).unwrap();
        assert_eq!(out.shape, Shape::new(8, 8, 16));
    }

    #[test]
    fn or_pool_cases() {
        let s = Shape::new(4, 4, 1);
        assert!(or_pool(&BinaryFrame::zeros(s)).unwrap().bits.iter().all(|&b| !b));
        let mut f = BinaryFrame::zeros(s);
        let i = f.index(0, 3, 2);
        f.bits[i] = true;
        let p = or_pool(&f).unwrap();
        assert_eq!(p.bits, vec![false, false, false, true]);
        assert_eq!(
            or_pool(&BinaryFrame::zeros(Shape::new(3, 4, 1))),
            Err(RefError::OddDims(Shape::new(3, 4, 1)))
        );
    }

    #[test]
    fn or_pool_equals_max_pool() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let s = Shape::new(8, 8, 3);
        for _ in 0..20 {
            let f = BinaryFrame::new(s, (0..s.len()).map(|_| rng.gen_bool(0.4)).collect()).unwrap();
            let p = or_pool(&f).unwrap();
            for c in 0..3 {
                for y in 0..4 {
                    for x in 0..4 {
                        let max = [(0, 0), (0, 1), (1, 0), (1, 1)]
                            .iter()
                            .map(|(dy, dx)| f.get(c, 2 * y + dy, 2 * x + dx) as u8)
                            .max()
                            .unwrap();
                        assert_eq!(p.get(c, y, x) as u8, max);
                    }
                }
            }
        }
    }

    #[test]
    fn zero_final_weights_tie_to_class_zero() {
        let mut m = fixtures::micro(4);
        for n in &mut m.layers[1].neurons {
            n.weights.iter_mut().for_each(|w| *w = false);
        }
        let frame = BinaryFrame::zeros(m.input);
        let hidden = forward_hidden(&m, &frame).unwrap();
        let zeros = hidden.bits.iter().filter(|&&b| !b).count() as i64;
        let r = infer(&m, &frame).unwrap();
        assert_eq!(r.scores, vec![zeros, zeros]);
        assert_eq!(r.class, 0);
    }

    #[test]
    fn fixture_classes_in_range() {
        let m = fixtures::bnn16(1);
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for _ in 0..100 {
            let f = BinaryFrame::new(m.input, (0..256).map(|_| rng.gen_bool(0.5)).collect()).unwrap();
            let r = infer(&m, &f).unwrap();
            assert!(r.class < 4);
            assert_eq!(r.scores.len(), 4);
        }
    }

    #[test]
    fn infer_rejects_wrong_shape() {
        let m = fixtures::micro(1);
        assert!(matches!(
            infer(&m, &BinaryFrame::zeros(Shape::new(4, 4, 2))),
            Err(RefError::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn stimuli_parsing() {
        let v = parse_stimuli("0101\n\n1111\n", 4).unwrap();
        assert_eq!(v.len(), 2);
        assert_eq!(format_stimuli(&v), "0101\n1111\n");
        assert!(matches!(
            parse_stimuli("010\n", 4),
            Err(RefError::Stimuli { line: 1, .. })
        ));
        assert!(parse_stimuli("01x1\n", 4).is_err());
    }

    proptest! {
        #[test]
        fn xnor_plus_xor_is_length(w in prop::collection::vec(any::<bool>(), 1..300),
                                   seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let r: Vec<bool> = (0..w.len()).map(|_| rng.gen()).collect();
            let xnor = xnor_popcount(&w, &r).unwrap();
            let xor = w.iter().zip(&r).filter(|(a, b)| a != b).count() as i64;
            prop_assert_eq!(xnor + xor, w.len() as i64);
        }

        #[test]
        fn single_flip_moves_phi_by_one(w in prop::collection::vec(any::<bool>(), 1..300),
                                        seed in any::<u64>(), idx in any::<prop::sample::Index>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let r: Vec<bool> = (0..w.len()).map(|_| rng.gen()).collect();
            let mut r2 = r.clone();
            let i = idx.index(w.len());
            r2[i] = !r2[i];
            let d = xnor_popcount(&w, &r2).unwrap() - xnor_popcount(&w, &r).unwrap();
            prop_assert_eq!(d.abs(), 1);
        }

        /// With GEQ neurons, binarize-then-OR equals max-then-binarize.
        #[test]
        fn geq_binarize_commutes_with_pooling(seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut m = fixtures::micro(seed);
            for n in &mut m.layers[0].neurons {
                n.sign = Sign::Geq;
                n.thresh = rng.gen_range(1..=9);
            }
            let layer = &m.layers[0];
            let frame = BinaryFrame::new(m.input, (0..16).map(|_| rng.gen()).collect()).unwrap();
            let pooled = conv_layer_forward(&frame, layer).unwrap();
            let phis = conv_popcounts(&frame, layer, 3, 3);
            for mm in 0..2 {
                for y in 0..2 {
                    for x in 0..2 {
                        let max = [(0, 0), (0, 1), (1, 0), (1, 1)]
                            .iter()
                            .map(|(dy, dx)| phis[(mm * 4 + 2 * y + dy) * 4 + 2 * x + dx])
                            .max()
                            .unwrap();
                        prop_assert_eq!(pooled.get(mm, y, x), layer.neurons[mm].fire(max));
                    }
                }
            }
        }
    }
}
