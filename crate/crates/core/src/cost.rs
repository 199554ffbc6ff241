//! Analytical area model, parameter footprint, operation counts and
//! measured netlist area.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use thiserror::Error;

use crate::model::{BnnModel, LayerKind, LayerSpec, Shape};
use crate::netlist::{GateStats, GateType, Netlist};

/// The bundled technology defaults.
pub const DEFAULT_TECH: &str = include_str!("../../../tech/gf22-defaults.txt");

#[derive(Debug, Error)]
pub enum CostError {
    #[error("{path}:{line}: {msg}")]
    Parse {
        path: String,
        line: usize,
        msg: String,
    },
    #[error("{path}: missing required key {key}")]
    MissingKey { path: String, key: String },
    #[error("technology library has no area for {0}")]
    MissingGate(GateType),
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

/// Cell areas in um^2.
#[derive(Clone, Debug, PartialEq)]
pub struct TechLibrary {
    pub gates: BTreeMap<GateType, f64>,
    pub a_xnor: f64,
    pub a_ha: f64,
    pub a_fa: f64,
    /// um^2 per gate equivalent.
    pub ge_area: f64,
    /// ps, informational.
    pub fo4_delay: Option<f64>,
}

impl Default for TechLibrary {
    fn default() -> Self {
        TechLibrary::parse(DEFAULT_TECH, "<builtin>").expect("bundled technology file parses")
    }
}

impl TechLibrary {
    /// Parses `key value` lines. Keys are gate type names (`INV`, `AND2`,
    /// ...), `A_XNOR`, `A_HA`, `A_FA`, `ge_area` and `fo4_delay`.
    pub fn parse(text: &str, path: &str) -> Result<Self, CostError> {
        let err = |line: usize, msg: String| CostError::Parse {
            path: path.to_string(),
            line,
            msg,
        };
        let mut values: BTreeMap<String, f64> = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let l = raw.split('#').next().unwrap_or("").trim();
            if l.is_empty() {
                continue;
            }
            let toks: Vec<&str> = l.split_whitespace().collect();
            let [key, value] = toks[..] else {
                return Err(err(i + 1, format!("expected `key value`, got {l:?}")));
            };
            let v: f64 = value
                .parse()
                .map_err(|_| err(i + 1, format!("invalid number {value:?}")))?;
            if !(v.is_finite() && v > 0.0) {
                return Err(err(i + 1, format!("{key} must be positive, got {value}")));
            }
            let known = matches!(key, "A_XNOR" | "A_HA" | "A_FA" | "ge_area" | "fo4_delay")
                || GateType::from_name(key).is_some_and(|t| t.is_logic());
            if !known {
                return Err(err(i + 1, format!("unknown key {key:?}")));
            }
            if values.insert(key.to_string(), v).is_some() {
                return Err(err(i + 1, format!("duplicate key {key:?}")));
            }
        }
        let req = |k: &str| {
            values.get(k).copied().ok_or_else(|| CostError::MissingKey {
                path: path.to_string(),
                key: k.to_string(),
            })
        };
        let gates = GateType::LOGIC
            .iter()
            .filter_map(|&t| values.get(t.name()).map(|&a| (t, a)))
            .collect();
        Ok(TechLibrary {
            gates,
            a_xnor: req("A_XNOR")?,
            a_ha: req("A_HA")?,
            a_fa: req("A_FA")?,
            ge_area: req("ge_area")?,
            fo4_delay: values.get("fo4_delay").copied(),
        })
    }

    pub fn load(path: &Path) -> Result<Self, CostError> {
        let text = std::fs::read_to_string(path).map_err(|source| CostError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse(&text, &path.display().to_string())
    }

    pub fn gate_area(&self, t: GateType) -> Result<f64, CostError> {
        match t {
            GateType::Const0 | GateType::Const1 | GateType::Input => Ok(0.0),
            _ => self.gates.get(&t).copied().ok_or(CostError::MissingGate(t)),
        }
    }
}

pub fn um2_to_mm2(a: f64) -> f64 {
    a * 1e-6
}

/// Analytical estimate for one layer, in um^2.
#[derive(Clone, Debug, PartialEq)]
pub struct LayerArea {
    pub n_out: usize,
    pub n_rf: usize,
    pub xnor: f64,
    pub ha: f64,
    pub fa: f64,
}

impl LayerArea {
    pub fn total(&self) -> f64 {
        self.xnor + self.ha + self.fa
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AreaEstimate {
    pub layers: Vec<LayerArea>,
    pub ge_area: f64,
}

impl AreaEstimate {
    pub fn total(&self) -> f64 {
        self.layers.iter().map(LayerArea::total).sum()
    }

    pub fn total_mm2(&self) -> f64 {
        um2_to_mm2(self.total())
    }

    pub fn total_ge(&self) -> f64 {
        self.total() / self.ge_area
    }
}

/// Number of neuron evaluations: `H*W*OF` for a conv layer on an `H x W`
/// input (before pooling), `OF` for a fully connected layer.
pub fn n_out(spec: &LayerSpec, input: Shape) -> usize {
    match spec.kind {
        LayerKind::BinConv { .. } => input.height * input.width * spec.out_maps,
        LayerKind::BinFc { .. } => spec.out_maps,
    }
}

/// XNOR, half adder and full adder area of a layer. The full adder count
/// `N_RF - log2(N_RF) - 1` uses the real logarithm; negative terms clamp
/// to zero.
pub fn estimate_layer_area(spec: &LayerSpec, input: Shape, tech: &TechLibrary) -> LayerArea {
    let n_out = n_out(spec, input);
    let n_rf = spec.n_rf();
    let (o, r) = (n_out as f64, n_rf as f64);
    LayerArea {
        n_out,
        n_rf,
        xnor: o * r * tech.a_xnor,
        ha: (o * (r - 1.0) * tech.a_ha).max(0.0),
        fa: (o * (r - r.log2() - 1.0) * tech.a_fa).max(0.0),
    }
}

pub fn estimate_model_area(m: &BnnModel, tech: &TechLibrary) -> AreaEstimate {
    AreaEstimate {
        layers: m
            .layers
            .iter()
            .zip(m.layer_inputs())
            .map(|(l, s)| estimate_layer_area(&l.spec, s, tech))
            .collect(),
        ge_area: tech.ge_area,
    }
}

/// Parameter bits per layer: `OF * (N_RF + floor(log2 N_RF) + 3)`.
pub fn param_footprint(m: &BnnModel) -> Vec<u64> {
    m.layers
        .iter()
        .map(|l| {
            let n = l.spec.n_rf() as u64;
            l.spec.out_maps as u64 * (n + n.ilog2() as u64 + 3)
        })
        .collect()
}

/// Operations per layer, two per multiply-accumulate.
pub fn op_count(m: &BnnModel) -> Vec<u64> {
    m.layers
        .iter()
        .zip(m.layer_inputs())
        .map(|(l, s)| 2 * (n_out(&l.spec, s) * l.spec.n_rf()) as u64)
        .collect()
}

/// Summed cell area of a netlist.
#[derive(Clone, Debug, PartialEq)]
pub struct MeasuredArea {
    pub um2: f64,
    pub ge: f64,
}

impl MeasuredArea {
    pub fn mm2(&self) -> f64 {
        um2_to_mm2(self.um2)
    }

    pub fn ge_per_op(&self, ops: u64) -> f64 {
        self.ge / ops as f64
    }
}

pub fn stats_area(s: &GateStats, tech: &TechLibrary) -> Result<MeasuredArea, CostError> {
    let mut um2 = 0.0;
    for (t, c) in s.logic_counts() {
        if c > 0 {
            um2 += c as f64 * tech.gate_area(t)?;
        }
    }
    Ok(MeasuredArea {
        um2,
        ge: um2 / tech.ge_area,
    })
}

pub fn measured_area(n: &Netlist, tech: &TechLibrary) -> Result<MeasuredArea, CostError> {
    stats_area(&n.stats(), tech)
}

impl fmt::Display for MeasuredArea {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.2} um2 ({:.0} GE)", self.um2, self.ge)
    }
}
