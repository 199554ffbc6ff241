//! Bundled network topologies with seeded random parameters.
//!
//! The two VGG-like models mirror the 16x16 and 32x32 topologies used
//! throughout the tests; trained weights are not available, so parameters
//! are drawn from a ChaCha8 stream with thresholds centred on `N_RF / 2`
//! to keep activations balanced.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::model::{canonical, BnnModel, Layer, LayerKind, LayerSpec, NeuronParams, Pool, Shape, Sign};

/// Seed used for the checked-in `models/*.json` fixtures.
pub const FIXTURE_SEED: u64 = 2018;

/// Compact layer description used to build models.
#[derive(Clone, Copy, Debug)]
pub enum Arch {
    /// 3x3 conv with OR pooling.
    Conv3Pool(usize, usize),
    /// 3x3 conv without pooling.
    Conv3(usize, usize),
    Fc(usize, usize),
}

pub const BNN16: &[Arch] = &[
    Arch::Conv3Pool(1, 16),
    Arch::Conv3Pool(16, 32),
    Arch::Conv3Pool(32, 48),
    Arch::Fc(192, 64),
    Arch::Fc(64, 4),
];

pub const BNN32: &[Arch] = &[
    Arch::Conv3Pool(1, 16),
    Arch::Conv3Pool(16, 32),
    Arch::Conv3Pool(32, 48),
    Arch::Conv3Pool(48, 64),
    Arch::Fc(256, 64),
    Arch::Fc(64, 4),
];

/// Five conv + two fc layers over a 64x64 input; used only for area
/// extrapolation (23.05 MOp/img).
pub const BNN64: &[Arch] = &[
    Arch::Conv3Pool(1, 16),
    Arch::Conv3Pool(16, 32),
    Arch::Conv3Pool(32, 48),
    Arch::Conv3Pool(48, 64),
    Arch::Conv3Pool(64, 96),
    Arch::Fc(384, 64),
    Arch::Fc(64, 4),
];

fn random_neuron(rng: &mut ChaCha8Rng, n_rf: usize, binarizes: bool) -> NeuronParams {
    let weights = (0..n_rf).map(|_| rng.gen_bool(0.5)).collect();
    if !binarizes {
        return NeuronParams {
            weights,
            thresh: 0,
            sign: Sign::Const1,
        };
    }
    let n = n_rf as i64;
    let spread = (n / 8).max(1);
    let centre = n / 2;
    let roll: f64 = rng.gen();
    let sign = if roll < 0.02 {
        Sign::Const1
    } else if roll < 0.04 {
        Sign::Const0
    } else if roll < 0.30 {
        Sign::Leq
    } else {
        Sign::Geq
    };
    let thresh = rng.gen_range(centre - spread..=centre + spread);
    let (thresh, sign) = canonical(thresh, sign, n_rf);
    NeuronParams {
        weights,
        thresh,
        sign,
    }
}

/// Builds a model with seeded random parameters.
pub fn random_model(name: &str, input: Shape, arch: &[Arch], seed: u64) -> BnnModel {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let last = arch.len() - 1;
    let layers = arch
        .iter()
        .enumerate()
        .map(|(i, a)| {
            let spec = match *a {
                Arch::Conv3Pool(i_m, o_m) | Arch::Conv3(i_m, o_m) => LayerSpec {
                    kind: LayerKind::BinConv {
                        kh: 3,
                        kw: 3,
                        pool: if matches!(a, Arch::Conv3Pool(..)) {
                            Pool::Or2x2
                        } else {
                            Pool::None
                        },
                    },
                    in_maps: i_m,
                    out_maps: o_m,
                },
                Arch::Fc(i_m, o_m) => LayerSpec {
                    kind: LayerKind::BinFc {
                        binarize_output: i != last,
                    },
                    in_maps: i_m,
                    out_maps: o_m,
                },
            };
            let neurons = (0..spec.out_maps)
                .map(|_| random_neuron(&mut rng, spec.n_rf(), spec.binarizes()))
                .collect();
            Layer { spec, neurons }
        })
        .collect();
    BnnModel::new(name, input, layers).expect("fixture topology is valid")
}

pub fn bnn16(seed: u64) -> BnnModel {
    random_model("bnn16", Shape::new(16, 16, 1), BNN16, seed)
}

pub fn bnn32(seed: u64) -> BnnModel {
    random_model("bnn32", Shape::new(32, 32, 1), BNN32, seed)
}

pub fn bnn64(seed: u64) -> BnnModel {
    random_model("bnn64", Shape::new(64, 64, 1), BNN64, seed)
}

/// 4x4x1 input, conv3x3(1,2) + OR pool, fc(8,2) scores: 16 input bits.
pub fn micro(seed: u64) -> BnnModel {
    random_model(
        "micro",
        Shape::new(4, 4, 1),
        &[Arch::Conv3Pool(1, 2), Arch::Fc(8, 2)],
        seed,
    )
}

/// Smallest legal model: one fc(1,1) neuron with weight 1.
pub fn single_fc() -> BnnModel {
    BnnModel::new(
        "single",
        Shape::new(1, 1, 1),
        vec![Layer {
            spec: LayerSpec {
                kind: LayerKind::BinFc {
                    binarize_output: false,
                },
                in_maps: 1,
                out_maps: 1,
            },
            neurons: vec![NeuronParams {
                weights: vec![true],
                thresh: 1,
                sign: Sign::Geq,
            }],
        }],
    )
    .expect("valid")
}

/// Looks up a bundled topology by name.
pub fn by_name(name: &str, seed: u64) -> Option<BnnModel> {
    Some(match name {
        "bnn16" => bnn16(seed),
        "bnn32" => bnn32(seed),
        "bnn64" => bnn64(seed),
        "micro" => micro(seed),
        "single" => single_fc(),
        _ => return None,
    })
}
