//! JSON model files.
//!
//! ```text
//! {
//!   "format_version": 1,
//!   "name": "bnn16",
//!   "input": {"height": 16, "width": 16, "channels": 1},
//!   "layers": [
//!     {"type": "binconv", "in_maps": 1, "out_maps": 16, "kh": 3, "kw": 3,
//!      "padding": "same", "pool": "or2x2",
//!      "neurons": [{"weights": "010011101", "thresh": 5, "sign": "GEQ"}, ...]},
//!     {"type": "binfc", "in_maps": 64, "out_maps": 4, "binarize_output": false,
//!      "neurons": [{"weights": "...", "batchnorm":
//!         {"mu": 1.5, "gamma": 0.9, "sigma": 2.0, "beta": -0.1, "bias": 0.0}}]}
//!   ]
//! }
//! ```
//!
//! A neuron carries either an explicit `thresh`/`sign` pair or a `batchnorm`
//! record, which is folded at load time. The final layer may omit both.
//! Saving always writes the folded form with sorted keys.

use serde_json::{json, Map, Value};

use super::{
    canonical, derive_threshold, BatchNormParams, BnnModel, Layer, LayerKind, LayerSpec,
    ModelError, NeuronParams, Pool, Shape, Sign,
};

pub const FORMAT_VERSION: u64 = 1;

fn schema(path: &str, msg: impl Into<String>) -> ModelError {
    ModelError::Schema {
        path: path.to_string(),
        msg: msg.into(),
    }
}

fn object<'a>(v: &'a Value, path: &str) -> Result<&'a Map<String, Value>, ModelError> {
    v.as_object().ok_or_else(|| schema(path, "expected an object"))
}

fn check_keys(obj: &Map<String, Value>, path: &str, allowed: &[&str]) -> Result<(), ModelError> {
    for k in obj.keys() {
        if !allowed.contains(&k.as_str()) {
            return Err(schema(&format!("{path}.{k}"), "unknown field"));
        }
    }
    Ok(())
}

fn field<'a>(obj: &'a Map<String, Value>, path: &str, key: &str) -> Result<&'a Value, ModelError> {
    obj.get(key)
        .ok_or_else(|| schema(&format!("{path}.{key}"), "missing field"))
}

fn uint(obj: &Map<String, Value>, path: &str, key: &str) -> Result<usize, ModelError> {
    field(obj, path, key)?
        .as_u64()
        .map(|v| v as usize)
        .ok_or_else(|| schema(&format!("{path}.{key}"), "expected a non-negative integer"))
}

fn positive(obj: &Map<String, Value>, path: &str, key: &str) -> Result<usize, ModelError> {
    let v = uint(obj, path, key)?;
    if v == 0 {
        return Err(schema(&format!("{path}.{key}"), "must be >= 1"));
    }
    Ok(v)
}

fn string<'a>(obj: &'a Map<String, Value>, path: &str, key: &str) -> Result<&'a str, ModelError> {
    field(obj, path, key)?
        .as_str()
        .ok_or_else(|| schema(&format!("{path}.{key}"), "expected a string"))
}

fn real(obj: &Map<String, Value>, path: &str, key: &str) -> Result<f64, ModelError> {
    let v = field(obj, path, key)?
        .as_f64()
        .ok_or_else(|| schema(&format!("{path}.{key}"), "expected a number"))?;
    if !v.is_finite() {
        return Err(schema(&format!("{path}.{key}"), "must be finite"));
    }
    Ok(v)
}

fn parse_bits(s: &str, path: &str) -> Result<Vec<bool>, ModelError> {
    s.bytes()
        .map(|b| match b {
            b'0' => Ok(false),
            b'1' => Ok(true),
            _ => Err(schema(path, "weights must contain only '0' and '1'")),
        })
        .collect()
}

fn bits_to_string(bits: &[bool]) -> String {
    bits.iter().map(|&b| if b { '1' } else { '0' }).collect()
}

fn parse_neuron(
    v: &Value,
    path: &str,
    n_rf: usize,
    binarizes: bool,
) -> Result<NeuronParams, ModelError> {
    let obj = object(v, path)?;
    check_keys(obj, path, &["weights", "thresh", "sign", "batchnorm"])?;
    let wpath = format!("{path}.weights");
    let weights = parse_bits(string(obj, path, "weights")?, &wpath)?;
    if weights.len() != n_rf {
        return Err(ModelError::WeightLength {
            path: wpath,
            expected: n_rf,
            got: weights.len(),
        });
    }

    let explicit = obj.contains_key("thresh") || obj.contains_key("sign");
    let (thresh, sign) = match obj.get("batchnorm") {
        Some(_) if explicit => {
            return Err(schema(path, "give either thresh/sign or batchnorm, not both"));
        }
        Some(bn) => {
            let bpath = format!("{path}.batchnorm");
            let b = object(bn, &bpath)?;
            check_keys(b, &bpath, &["mu", "gamma", "sigma", "beta", "bias"])?;
            let p = BatchNormParams {
                mu: real(b, &bpath, "mu")?,
                gamma: real(b, &bpath, "gamma")?,
                sigma: real(b, &bpath, "sigma")?,
                beta: real(b, &bpath, "beta")?,
                bias: match b.get("bias") {
                    Some(_) => real(b, &bpath, "bias")?,
                    None => 0.0,
                },
            };
            derive_threshold(&p, n_rf).map_err(|e| e.at(&bpath))?
        }
        None if explicit => {
            let sign_str = string(obj, path, "sign")?;
            let sign = Sign::parse(sign_str).ok_or_else(|| {
                schema(
                    &format!("{path}.sign"),
                    format!("unknown sign {sign_str:?}, expected GEQ, LEQ, CONST1 or CONST0"),
                )
            })?;
            let thresh = match sign {
                Sign::Const0 | Sign::Const1 => obj.get("thresh").and_then(Value::as_i64).unwrap_or(0),
                _ => field(obj, path, "thresh")?
                    .as_i64()
                    .ok_or_else(|| schema(&format!("{path}.thresh"), "expected an integer"))?,
            };
            if binarizes && !(0..=n_rf as i64 + 1).contains(&thresh) {
                return Err(schema(
                    &format!("{path}.thresh"),
                    format!("threshold {thresh} outside [0, {}]", n_rf + 1),
                ));
            }
            canonical(thresh, sign, n_rf)
        }
        None if !binarizes => (0, Sign::Const1),
        None => return Err(schema(path, "missing thresh/sign or batchnorm")),
    };
    Ok(NeuronParams {
        weights,
        thresh,
        sign,
    })
}

fn parse_layer(v: &Value, path: &str) -> Result<Layer, ModelError> {
    let obj = object(v, path)?;
    let kind = string(obj, path, "type")?;
    let in_maps = positive(obj, path, "in_maps")?;
    let out_maps = positive(obj, path, "out_maps")?;
    let kind = match kind {
        "binconv" => {
            check_keys(
                obj,
                path,
                &["type", "in_maps", "out_maps", "kh", "kw", "padding", "pool", "neurons"],
            )?;
            let kh = positive(obj, path, "kh")?;
            let kw = positive(obj, path, "kw")?;
            match obj.get("padding").map(|p| p.as_str()) {
                None | Some(Some("same")) => {}
                _ => return Err(schema(&format!("{path}.padding"), "only \"same\" is supported")),
            }
            let pool = match obj.get("pool").map(|p| p.as_str()) {
                None | Some(Some("none")) => Pool::None,
                Some(Some("or2x2")) => Pool::Or2x2,
                _ => return Err(schema(&format!("{path}.pool"), "expected \"none\" or \"or2x2\"")),
            };
            LayerKind::BinConv { kh, kw, pool }
        }
        "binfc" => {
            check_keys(
                obj,
                path,
                &["type", "in_maps", "out_maps", "binarize_output", "neurons"],
            )?;
            let binarize_output = field(obj, path, "binarize_output")?
                .as_bool()
                .ok_or_else(|| schema(&format!("{path}.binarize_output"), "expected a boolean"))?;
            LayerKind::BinFc { binarize_output }
        }
        other => {
            return Err(schema(
                &format!("{path}.type"),
                format!("unknown layer type {other:?}"),
            ))
        }
    };
    let spec = LayerSpec {
        kind,
        in_maps,
        out_maps,
    };
    let npath = format!("{path}.neurons");
    let list = field(obj, path, "neurons")?
        .as_array()
        .ok_or_else(|| schema(&npath, "expected an array"))?;
    if list.len() != out_maps {
        return Err(schema(
            &npath,
            format!("expected {out_maps} neurons, got {}", list.len()),
        ));
    }
    let neurons = list
        .iter()
        .enumerate()
        .map(|(m, n)| parse_neuron(n, &format!("{npath}[{m}]"), spec.n_rf(), spec.binarizes()))
        .collect::<Result<_, _>>()?;
    Ok(Layer { spec, neurons })
}

/// Parses and validates a model file, folding batch-norm records into
/// integer thresholds.
pub fn load_model(text: &str) -> Result<BnnModel, ModelError> {
    let root: Value = serde_json::from_str(text)?;
    let obj = object(&root, "$")?;
    check_keys(obj, "$", &["format_version", "name", "input", "layers"])?;
    if let Some(v) = obj.get("format_version") {
        if v.as_u64() != Some(FORMAT_VERSION) {
            return Err(schema("format_version", format!("unsupported version {v}")));
        }
    }
    let name = string(obj, "$", "name")?.to_string();
    let input = object(field(obj, "$", "input")?, "input")?;
    check_keys(input, "input", &["height", "width", "channels"])?;
    let input = Shape::new(
        positive(input, "input", "height")?,
        positive(input, "input", "width")?,
        positive(input, "input", "channels")?,
    );
    let layers = field(obj, "$", "layers")?
        .as_array()
        .ok_or_else(|| schema("layers", "expected an array"))?
        .iter()
        .enumerate()
        .map(|(i, l)| parse_layer(l, &format!("layers[{i}]")))
        .collect::<Result<Vec<_>, _>>()?;
    BnnModel::new(name, input, layers)
}

/// Canonical serialization: sorted keys, two-space indentation, trailing
/// newline.
pub fn save_model(m: &BnnModel) -> String {
    let layers: Vec<Value> = m
        .layers
        .iter()
        .map(|l| {
            let neurons: Vec<Value> = l
                .neurons
                .iter()
                .map(|n| {
                    json!({
                        "weights": bits_to_string(&n.weights),
                        "thresh": n.thresh,
                        "sign": n.sign.as_str(),
                    })
                })
                .collect();
            match l.spec.kind {
                LayerKind::BinConv { kh, kw, pool } => json!({
                    "type": "binconv",
                    "in_maps": l.spec.in_maps,
                    "out_maps": l.spec.out_maps,
                    "kh": kh,
                    "kw": kw,
                    "padding": "same",
                    "pool": match pool { Pool::None => "none", Pool::Or2x2 => "or2x2" },
                    "neurons": neurons,
                }),
                LayerKind::BinFc { binarize_output } => json!({
                    "type": "binfc",
                    "in_maps": l.spec.in_maps,
                    "out_maps": l.spec.out_maps,
                    "binarize_output": binarize_output,
                    "neurons": neurons,
                }),
            }
        })
        .collect();
    let doc = json!({
        "format_version": FORMAT_VERSION,
        "name": m.name,
        "input": {
            "height": m.input.height,
            "width": m.input.width,
            "channels": m.input.channels,
        },
        "layers": layers,
    });
    let mut s = serde_json::to_string_pretty(&doc).expect("model serializes");
    s.push('\n');
    s
}
