//! Per-layer compute, footprint and area tables, with optional measured
//! area of lowered netlists in both modes.

use std::fmt::Write;

use serde_json::{json, Value};
use thiserror::Error;

use crate::cost::{self, CostError, LayerArea, MeasuredArea, TechLibrary};
use crate::lower::{lower_model, LowerError, LowerMode};
use crate::model::{BnnModel, LayerKind, Pool, Shape};
use crate::netlist::{GateStats, GateType, Netlist};
use crate::opt::{optimize, PassReport, Pipeline};

/// Version of the JSON report layout.
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ReportError {
    #[error(transparent)]
    Cost(#[from] CostError),
    #[error(transparent)]
    Lower(#[from] LowerError),
}

#[derive(Clone, Debug, PartialEq)]
pub struct LayerRow {
    pub label: String,
    pub output: Shape,
    pub ops: u64,
    pub params: u64,
    pub estimate: LayerArea,
}

/// Measured figures for one lowered and optimized netlist.
#[derive(Clone, Debug, PartialEq)]
pub struct ModeSummary {
    pub mode: LowerMode,
    pub pipeline: String,
    pub nodes: usize,
    pub inputs: usize,
    pub stats: GateStats,
    pub area: MeasuredArea,
    /// um^2 per layer, from the layer tags.
    pub layer_um2: Vec<f64>,
    pub passes: Vec<PassReport>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Report {
    pub model: String,
    pub input: Shape,
    pub ge_area: f64,
    pub rows: Vec<LayerRow>,
    pub modes: Vec<ModeSummary>,
}

pub fn layer_label(kind: &LayerKind) -> String {
    match kind {
        LayerKind::BinConv { kh, kw, pool } => match pool {
            Pool::None => format!("binconv{kh}x{kw}"),
            Pool::Or2x2 => format!("binconv{kh}x{kw}+or2x2"),
        },
        LayerKind::BinFc { .. } => "binfc".to_string(),
    }
}

/// Analytical part of the report.
pub fn estimate_report(m: &BnnModel, tech: &TechLibrary) -> Report {
    let est = cost::estimate_model_area(m, tech);
    let ops = cost::op_count(m);
    let params = cost::param_footprint(m);
    let rows = m
        .layers
        .iter()
        .zip(m.layer_shapes())
        .enumerate()
        .map(|(i, (l, out))| LayerRow {
            label: layer_label(&l.spec.kind),
            output: out,
            ops: ops[i],
            params: params[i],
            estimate: est.layers[i].clone(),
        })
        .collect();
    Report {
        model: m.name.clone(),
        input: m.input,
        ge_area: tech.ge_area,
        rows,
        modes: Vec::new(),
    }
}

pub fn mode_summary(
    m: &BnnModel,
    mode: LowerMode,
    n: &Netlist,
    pipeline: &Pipeline,
    passes: Vec<PassReport>,
    tech: &TechLibrary,
) -> Result<ModeSummary, CostError> {
    let by_tag = n.stats_by_tag();
    let layer_um2 = (1..=m.layers.len())
        .map(|t| match by_tag.get(t) {
            Some(s) => cost::stats_area(s, tech).map(|a| a.um2),
            None => Ok(0.0),
        })
        .collect::<Result<_, _>>()?;
    Ok(ModeSummary {
        mode,
        pipeline: pipeline.label(),
        nodes: n.len(),
        inputs: n.num_inputs(),
        stats: n.stats(),
        area: cost::measured_area(n, tech)?,
        layer_um2,
        passes,
    })
}

/// Lowers `m` in both modes, optimizes with `pipeline` and measures.
pub fn full_report(m: &BnnModel, tech: &TechLibrary, pipeline: &Pipeline) -> Result<Report, ReportError> {
    let mut r = estimate_report(m, tech);
    for mode in [LowerMode::Fixed, LowerMode::Variable] {
        let raw = lower_model(m, mode)?;
        let (n, passes) = optimize(&raw, pipeline);
        drop(raw);
        r.modes.push(mode_summary(m, mode, &n, pipeline, passes, tech)?);
    }
    Ok(r)
}

fn mm2(um2: f64) -> f64 {
    cost::um2_to_mm2(um2)
}

impl Report {
    pub fn total_ops(&self) -> u64 {
        self.rows.iter().map(|r| r.ops).sum()
    }

    pub fn total_params(&self) -> u64 {
        self.rows.iter().map(|r| r.params).sum()
    }

    pub fn total_estimate_um2(&self) -> f64 {
        self.rows.iter().map(|r| r.estimate.total()).sum()
    }

    pub fn mode(&self, mode: LowerMode) -> Option<&ModeSummary> {
        self.modes.iter().find(|s| s.mode == mode)
    }

    /// Variable over fixed, by logic gate count and by area.
    pub fn savings(&self) -> Option<(f64, f64)> {
        let f = self.mode(LowerMode::Fixed)?;
        let v = self.mode(LowerMode::Variable)?;
        Some((
            v.stats.total() as f64 / f.stats.total() as f64,
            v.area.um2 / f.area.um2,
        ))
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let total_ops = self.total_ops();
        writeln!(s, "model {}", self.model).unwrap();
        writeln!(s, "input {}", self.input).unwrap();
        writeln!(s).unwrap();
        write!(
            s,
            "{:<5} {:<18} {:>8} {:>15} {:>11} {:>10} {:>10} {:>10} {:>10}",
            "layer", "type", "output", "compute[kOp]", "params[bit]", "estim[mm2]", "xnor[mm2]", "ha[mm2]", "fa[mm2]"
        )
        .unwrap();
        for m in &self.modes {
            write!(s, " {:>13}", format!("{}[mm2]", m.mode)).unwrap();
        }
        s.push('\n');
        for (i, r) in self.rows.iter().enumerate() {
            let e = &r.estimate;
            write!(
                s,
                "{:<5} {:<18} {:>8} {:>6.0} ({:>5.1}%) {:>11} {:>10.3} {:>10.3} {:>10.3} {:>10.3}",
                i + 1,
                r.label,
                r.output.to_string(),
                r.ops as f64 / 1e3,
                100.0 * r.ops as f64 / total_ops as f64,
                r.params,
                mm2(e.total()),
                mm2(e.xnor),
                mm2(e.ha),
                mm2(e.fa)
            )
            .unwrap();
            for m in &self.modes {
                write!(s, " {:>13.3}", mm2(m.layer_um2[i])).unwrap();
            }
            s.push('\n');
        }
        let sum = |f: fn(&LayerArea) -> f64| self.rows.iter().map(|r| f(&r.estimate)).sum::<f64>();
        write!(
            s,
            "{:<5} {:<18} {:>8} {:>6.0} ({:>5.1}%) {:>11} {:>10.3} {:>10.3} {:>10.3} {:>10.3}",
            "total",
            "",
            "",
            total_ops as f64 / 1e3,
            100.0,
            self.total_params(),
            mm2(self.total_estimate_um2()),
            mm2(sum(|e| e.xnor)),
            mm2(sum(|e| e.ha)),
            mm2(sum(|e| e.fa))
        )
        .unwrap();
        for m in &self.modes {
            write!(s, " {:>13.3}", mm2(m.area.um2)).unwrap();
        }
        s.push('\n');
        writeln!(s).unwrap();
        writeln!(s, "compute {} Op/img ({:.2} MOp/img)", total_ops, total_ops as f64 / 1e6).unwrap();
        writeln!(
            s,
            "params {} bit ({:.0} kbit)",
            self.total_params(),
            self.total_params() as f64 / 1e3
        )
        .unwrap();
        writeln!(
            s,
            "estimated area {:.3} mm2 ({:.0} GE, {:.2} GE/Op)",
            mm2(self.total_estimate_um2()),
            self.total_estimate_um2() / self.ge_area,
            self.total_estimate_um2() / self.ge_area / total_ops as f64
        )
        .unwrap();
        for m in &self.modes {
            writeln!(s).unwrap();
            writeln!(s, "mode {} ({})", m.mode, m.pipeline).unwrap();
            writeln!(
                s,
                "  nodes {} inputs {} gates {}",
                m.nodes,
                m.inputs,
                m.stats.total()
            )
            .unwrap();
            let counts: Vec<String> = m
                .stats
                .logic_counts()
                .map(|(t, c)| format!("{t} {c}"))
                .collect();
            writeln!(s, "  {}", counts.join(", ")).unwrap();
            writeln!(
                s,
                "  area {:.3} mm2 ({:.0} GE, {:.2} GE/Op)",
                m.area.mm2(),
                m.area.ge,
                m.area.ge_per_op(total_ops)
            )
            .unwrap();
            for p in &m.passes {
                writeln!(
                    s,
                    "  pass {:<10} gates {} -> {}, removed {}, merged {}",
                    p.pass.name(),
                    p.before.total(),
                    p.after.total(),
                    p.nodes_removed,
                    p.nodes_merged
                )
                .unwrap();
            }
        }
        if let Some((g, a)) = self.savings() {
            writeln!(s).unwrap();
            writeln!(s, "variable/fixed gates {g:.3}x, area {a:.3}x").unwrap();
        }
        s
    }

    pub fn to_json(&self) -> Value {
        let total_ops = self.total_ops();
        let stats_json = |st: &GateStats| {
            let mut o = serde_json::Map::new();
            for t in GateType::LOGIC {
                o.insert(t.name().to_string(), json!(st.get(t)));
            }
            o.insert("total".into(), json!(st.total()));
            Value::Object(o)
        };
        json!({
            "format_version": FORMAT_VERSION,
            "model": self.model,
            "input": self.input.to_string(),
            "ge_area_um2": self.ge_area,
            "layers": self.rows.iter().enumerate().map(|(i, r)| json!({
                "index": i + 1,
                "type": r.label,
                "output": r.output.to_string(),
                "n_out": r.estimate.n_out,
                "n_rf": r.estimate.n_rf,
                "ops": r.ops,
                "params_bits": r.params,
                "estimate_um2": {
                    "xnor": r.estimate.xnor,
                    "ha": r.estimate.ha,
                    "fa": r.estimate.fa,
                    "total": r.estimate.total(),
                },
                "measured_um2": self.modes.iter()
                    .map(|m| (m.mode.name().to_string(), json!(m.layer_um2[i])))
                    .collect::<serde_json::Map<_, _>>(),
            })).collect::<Vec<_>>(),
            "totals": {
                "ops": total_ops,
                "params_bits": self.total_params(),
                "estimate_um2": self.total_estimate_um2(),
                "estimate_ge": self.total_estimate_um2() / self.ge_area,
            },
            "modes": self.modes.iter().map(|m| json!({
                "mode": m.mode.name(),
                "pipeline": m.pipeline,
                "nodes": m.nodes,
                "inputs": m.inputs,
                "gates": stats_json(&m.stats),
                "area_um2": m.area.um2,
                "area_ge": m.area.ge,
                "ge_per_op": m.area.ge_per_op(total_ops),
                "passes": m.passes.iter().map(|p| json!({
                    "pass": p.pass.name(),
                    "before": stats_json(&p.before),
                    "after": stats_json(&p.after),
                    "nodes_removed": p.nodes_removed,
                    "nodes_merged": p.nodes_merged,
                })).collect::<Vec<_>>(),
            })).collect::<Vec<_>>(),
            "variable_over_fixed": self.savings().map(|(g, a)| json!({"gates": g, "area": a})),
        })
    }
}

/// Estimated totals for several models, each relative to the previous.
pub fn extrapolation_text(models: &[BnnModel], tech: &TechLibrary) -> String {
    let mut s = String::new();
    writeln!(
        s,
        "{:<8} {:>8} {:>12} {:>12} {:>10}",
        "model", "input", "ops", "estim[mm2]", "vs prev"
    )
    .unwrap();
    let mut prev: Option<f64> = None;
    for m in models {
        let a = cost::estimate_model_area(m, tech).total();
        let ops: u64 = cost::op_count(m).iter().sum();
        let rel = prev.map_or("-".to_string(), |p| format!("{:.2}x", a / p));
        writeln!(
            s,
            "{:<8} {:>8} {:>12} {:>12.3} {:>10}",
            m.name,
            m.input.to_string(),
            ops,
            mm2(a),
            rel
        )
        .unwrap();
        prev = Some(a);
    }
    s
}
