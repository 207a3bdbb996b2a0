//! Text and binary formats read by the command-line tools.
//!
//! Tensor manifest, one `key=value` per line:
//!
//! ```text
//! name=layer1.0.conv1
//! dtype=f32
//! shape=64,64,3,3
//! data=layer1.0.conv1.bin   # optional, defaults to <manifest stem>.bin
//! ```
//!
//! The blob is little-endian `f32` in row-major order. Shapes with fewer than
//! four dims are padded with trailing ones, so a `1000,512` linear layer is
//! read as `1000,512,1,1`.
//!
//! Layer table: `name Cout Cin Kh Kw OH OW` per line.
//!
//! Layer config: one line per layer name (or `default`) followed by any of
//! `d=`, `k=`, `nm=N:M`, `qc=`, `include`, `exclude`.
//!
//! All three text formats skip blank lines and `#` comments.

use crate::accel::{LayerSpec, NamedLayer};
use crate::error::{Error, Result};
use crate::pipeline::LayerSettings;
use crate::sparsity::NmPattern;
use crate::tensor::{Shape4, WeightTensor};

fn parse_err(line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        line,
        msg: msg.into(),
    }
}

/// Non-empty lines with comments stripped, numbered from 1.
fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines().enumerate().filter_map(|(i, l)| {
        let l = l.split('#').next().unwrap_or("").trim();
        (!l.is_empty()).then_some((i + 1, l))
    })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TensorManifest {
    pub name: String,
    pub shape: Shape4,
    /// Blob path relative to the manifest, if given.
    pub data: Option<String>,
}

pub fn parse_shape(s: &str) -> Option<Shape4> {
    let dims: Vec<usize> = s
        .split(',')
        .map(|p| p.trim().parse().ok().filter(|v| *v > 0))
        .collect::<Option<_>>()?;
    if dims.is_empty() || dims.len() > 4 {
        return None;
    }
    let mut shape = [1; 4];
    shape[..dims.len()].copy_from_slice(&dims);
    Some(shape)
}

pub fn parse_manifest(text: &str) -> Result<TensorManifest> {
    let (mut name, mut shape, mut data, mut dtype) = (None, None, None, None);
    for (n, line) in content_lines(text) {
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| parse_err(n, format!("expected key=value, got '{line}'")))?;
        let value = value.trim();
        let slot = match key.trim() {
            "name" => &mut name,
            "dtype" => &mut dtype,
            "shape" => &mut shape,
            "data" => &mut data,
            other => return Err(parse_err(n, format!("unknown key '{other}'"))),
        };
        if slot.replace((n, value.to_string())).is_some() {
            return Err(parse_err(n, format!("duplicate key '{}'", key.trim())));
        }
    }
    if let Some((n, dt)) = &dtype {
        if dt != "f32" {
            return Err(parse_err(*n, format!("unsupported dtype '{dt}'")));
        }
    }
    let (_, name) = name.ok_or_else(|| parse_err(0, "missing 'name'"))?;
    if name.is_empty() {
        return Err(parse_err(0, "empty name"));
    }
    let (sn, shape) = shape.ok_or_else(|| parse_err(0, "missing 'shape'"))?;
    let shape = parse_shape(&shape).ok_or_else(|| parse_err(sn, format!("bad shape '{shape}'")))?;
    Ok(TensorManifest {
        name,
        shape,
        data: data.map(|(_, v)| v),
    })
}

pub fn render_manifest(m: &TensorManifest) -> String {
    let shape = m.shape.map(|v| v.to_string()).join(",");
    let mut s = format!("name={}\ndtype=f32\nshape={shape}\n", m.name);
    if let Some(d) = &m.data {
        s.push_str(&format!("data={d}\n"));
    }
    s
}

pub fn decode_blob(bytes: &[u8], shape: Shape4) -> Result<WeightTensor> {
    let count = shape.iter().try_fold(1usize, |a, &v| a.checked_mul(v));
    let expected = count.and_then(|c| c.checked_mul(4));
    if expected != Some(bytes.len()) {
        return Err(Error::InvalidTensor(format!(
            "blob has {} bytes, shape {shape:?} needs {}",
            bytes.len(),
            expected.map_or_else(|| "too many".into(), |e| e.to_string())
        )));
    }
    let data = bytes
        .chunks_exact(4)
        .map(|c| f64::from(f32::from_le_bytes([c[0], c[1], c[2], c[3]])))
        .collect();
    WeightTensor::new(shape, data)
}

/// Values are narrowed to `f32`.
pub fn encode_blob(w: &WeightTensor) -> Vec<u8> {
    w.data()
        .iter()
        .flat_map(|&v| (v as f32).to_le_bytes())
        .collect()
}

pub fn parse_layer_table(text: &str) -> Result<Vec<NamedLayer>> {
    content_lines(text)
        .map(|(n, line)| {
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.len() != 7 {
                return Err(parse_err(
                    n,
                    format!("expected 'name Cout Cin Kh Kw OH OW', got {} fields", fields.len()),
                ));
            }
            let mut dims = [0usize; 6];
            for (slot, f) in dims.iter_mut().zip(&fields[1..]) {
                *slot = f
                    .parse()
                    .map_err(|_| parse_err(n, format!("bad dimension '{f}'")))?;
            }
            let [cout, cin, kh, kw, oh, ow] = dims;
            let spec = LayerSpec::new(cout, cin, kh, kw, oh, ow)
                .map_err(|e| parse_err(n, e.to_string()))?;
            Ok(NamedLayer {
                name: fields[0].to_string(),
                spec,
            })
        })
        .collect()
}

/// Overrides from one config line; unset fields fall through.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct LayerOverride {
    pub d: Option<usize>,
    pub k: Option<usize>,
    pub pattern: Option<NmPattern>,
    pub qc: Option<u32>,
    pub include: Option<bool>,
}

impl LayerOverride {
    fn apply(&self, s: &mut LayerSettings) -> bool {
        if let Some(d) = self.d {
            s.d = d;
        }
        if let Some(k) = self.k {
            s.k = k;
        }
        if let Some(p) = self.pattern {
            s.pattern = p;
        }
        if let Some(q) = self.qc {
            s.qc = q;
        }
        self.include.unwrap_or(true)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LayerConfig {
    pub default: LayerOverride,
    pub layers: Vec<(String, LayerOverride)>,
}

impl LayerConfig {
    /// Settings for `name`, or `None` when the layer is excluded.
    pub fn resolve(&self, name: &str, base: &LayerSettings) -> Option<LayerSettings> {
        let mut s = *base;
        let mut include = self.default.apply(&mut s);
        if let Some((_, o)) = self.layers.iter().find(|(n, _)| n == name) {
            let inc = o.apply(&mut s);
            include = o.include.map_or(include, |_| inc);
        }
        include.then_some(s)
    }
}

fn parse_num<T: std::str::FromStr>(n: usize, key: &str, v: &str) -> Result<T> {
    v.parse()
        .map_err(|_| parse_err(n, format!("bad value '{v}' for {key}")))
}

pub fn parse_layer_config(text: &str) -> Result<LayerConfig> {
    let mut cfg = LayerConfig::default();
    let mut seen_default = false;
    for (n, line) in content_lines(text) {
        let mut fields = line.split_whitespace();
        let name = fields.next().expect("non-empty line");
        let mut o = LayerOverride::default();
        for f in fields {
            match f.split_once('=') {
                Some(("d", v)) => o.d = Some(parse_num(n, "d", v)?),
                Some(("k", v)) => o.k = Some(parse_num(n, "k", v)?),
                Some(("qc", v)) => o.qc = Some(parse_num(n, "qc", v)?),
                Some(("nm", v)) => {
                    o.pattern = Some(v.parse().map_err(|e: Error| parse_err(n, e.to_string()))?)
                }
                None if f == "include" => o.include = Some(true),
                None if f == "exclude" => o.include = Some(false),
                _ => return Err(parse_err(n, format!("unknown field '{f}'"))),
            }
        }
        if name == "default" {
            if std::mem::replace(&mut seen_default, true) {
                return Err(parse_err(n, "duplicate default line"));
            }
            cfg.default = o;
        } else if cfg.layers.iter().any(|(l, _)| l == name) {
            return Err(parse_err(n, format!("layer '{name}' listed twice")));
        } else {
            cfg.layers.push((name.to_string(), o));
        }
    }
    Ok(cfg)
}
