//! `QEEG1` weight container.
//!
//! ```text
//! QEEG1
//! version=1
//! param name=input.scale value=1/4
//! tensor name=temporal.weight dtype=i8 shape=8x64 layout=time-innermost scale=1/128 offset=0 bytes=512
//! ...
//! calib point=input min=-31.5 max=30.25 scale=0.248...
//! blob bytes=4456
//! end
//! <blob>
//! ```
//!
//! The manifest is line-oriented `key=value` text; the blob that follows
//! `end\n` holds every tensor back to back, little-endian. Batch-norm
//! records (`dtype=bn`) store one `(bias: i32, divisor: i32)` pair per
//! channel. Kernels are always stored in forward order.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::{expected_param_count, param_count, BnStage, Layout, ModelShape, ModelWeights, QWeights, Scale, QEEGNET};
use crate::error::LoadError;
use crate::quant::{QuantPoint, RequantParams};

const MAGIC: &str = "QEEG1";
const VERSION: &str = "1";

/// Activation range recorded for one quantization point at calibration time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CalibrationRecord {
    pub point: QuantPoint,
    pub min: f64,
    pub max: f64,
    pub scale: f64,
}

#[derive(Clone, Copy)]
enum Dtype {
    I8,
    I32,
    Bn,
}

impl Dtype {
    fn name(self) -> &'static str {
        match self {
            Dtype::I8 => "i8",
            Dtype::I32 => "i32",
            Dtype::Bn => "bn",
        }
    }

    fn width(self) -> usize {
        match self {
            Dtype::I8 => 1,
            Dtype::I32 => 4,
            Dtype::Bn => 8,
        }
    }
}

struct Spec {
    name: &'static str,
    dtype: Dtype,
    shape: Vec<usize>,
    layout: Option<Layout>,
}

fn tensor_specs(s: &ModelShape) -> Vec<Spec> {
    let f = s.spatial_filters();
    let spec = |name, dtype, shape: &[usize], layout| Spec { name, dtype, shape: shape.to_vec(), layout };
    vec![
        spec("temporal.weight", Dtype::I8, &[s.temporal_filters, s.temporal_kernel], Some(Layout::TimeInnermost)),
        spec("temporal.bn", Dtype::Bn, &[s.temporal_filters], None),
        spec("spatial.weight", Dtype::I8, &[f, s.channels], Some(Layout::SpaceInnermost)),
        spec("spatial.bn", Dtype::Bn, &[f], None),
        spec("separable.depthwise.weight", Dtype::I8, &[f, s.separable_kernel], Some(Layout::TimeInnermost)),
        spec("separable.pointwise.weight", Dtype::I8, &[f, f], Some(Layout::ChannelInnermost)),
        spec("separable.bn", Dtype::Bn, &[f], None),
        spec("fc.weight", Dtype::I8, &[s.classes, s.flat()], Some(Layout::TimeInnermost)),
        spec("fc.bias", Dtype::I32, &[s.classes], None),
    ]
}

fn shape_str(shape: &[usize]) -> String {
    shape.iter().map(|d| d.to_string()).collect::<Vec<_>>().join("x")
}

/// Serializes weights; identical weights always produce identical bytes.
pub fn write_weights(w: &ModelWeights) -> Vec<u8> {
    let mut manifest = String::new();
    let mut blob: Vec<u8> = Vec::new();
    writeln!(manifest, "{MAGIC}").unwrap();
    writeln!(manifest, "version={VERSION}").unwrap();
    writeln!(manifest, "param name=input.scale value={}", w.input_scale).unwrap();
    writeln!(manifest, "param name=separable.depthwise.shift value={}", w.depthwise_shift).unwrap();

    for spec in tensor_specs(&w.shape) {
        let offset = blob.len();
        let scale = match spec.name {
            "temporal.weight" => {
                blob.extend(w.temporal.data.iter().map(|&v| v as u8));
                Some(w.temporal.scale)
            }
            "temporal.bn" => Some(push_bn(&mut blob, &w.temporal_bn)),
            "spatial.weight" => {
                blob.extend(w.spatial.data.iter().map(|&v| v as u8));
                Some(w.spatial.scale)
            }
            "spatial.bn" => Some(push_bn(&mut blob, &w.spatial_bn)),
            "separable.depthwise.weight" => {
                blob.extend(w.depthwise.data.iter().map(|&v| v as u8));
                Some(w.depthwise.scale)
            }
            "separable.pointwise.weight" => {
                blob.extend(w.pointwise.data.iter().map(|&v| v as u8));
                Some(w.pointwise.scale)
            }
            "separable.bn" => Some(push_bn(&mut blob, &w.separable_bn)),
            "fc.weight" => {
                blob.extend(w.fc.data.iter().map(|&v| v as u8));
                Some(w.fc.scale)
            }
            "fc.bias" => {
                for b in &w.fc_bias {
                    blob.extend_from_slice(&b.to_le_bytes());
                }
                None
            }
            _ => unreachable!(),
        };
        write!(manifest, "tensor name={} dtype={} shape={}", spec.name, spec.dtype.name(), shape_str(&spec.shape)).unwrap();
        if let Some(l) = spec.layout {
            write!(manifest, " layout={}", l.as_str()).unwrap();
        }
        if let Some(s) = scale {
            write!(manifest, " scale={s}").unwrap();
        }
        writeln!(manifest, " offset={offset} bytes={}", blob.len() - offset).unwrap();
    }
    for c in &w.calibration {
        writeln!(manifest, "calib point={} min={} max={} scale={}", c.point.name(), c.min, c.max, c.scale).unwrap();
    }
    writeln!(manifest, "blob bytes={}", blob.len()).unwrap();
    writeln!(manifest, "end").unwrap();

    let mut out = manifest.into_bytes();
    out.extend_from_slice(&blob);
    out
}

fn push_bn(blob: &mut Vec<u8>, bn: &BnStage) -> Scale {
    for p in &bn.params {
        blob.extend_from_slice(&p.bias.to_le_bytes());
        blob.extend_from_slice(&p.divisor.to_le_bytes());
    }
    bn.out_scale
}

pub fn save_weights(w: &ModelWeights, path: impl AsRef<Path>) -> Result<(), LoadError> {
    fs::write(path, write_weights(w))?;
    Ok(())
}

pub fn load_weights(path: impl AsRef<Path>) -> Result<ModelWeights, LoadError> {
    read_weights(&fs::read(path)?)
}

struct Record {
    line: usize,
    fields: BTreeMap<String, String>,
}

impl Record {
    fn get(&self, key: &str) -> Result<&str, LoadError> {
        self.fields.get(key).map(String::as_str).ok_or_else(|| LoadError::Malformed {
            line: self.line,
            reason: format!("missing `{key}`"),
        })
    }

    fn usize(&self, key: &str) -> Result<usize, LoadError> {
        let v = self.get(key)?;
        v.parse().map_err(|_| LoadError::Malformed { line: self.line, reason: format!("`{key}` is not an integer: {v}") })
    }

    fn f64(&self, key: &str) -> Result<f64, LoadError> {
        let v = self.get(key)?;
        v.parse().map_err(|_| LoadError::Malformed { line: self.line, reason: format!("`{key}` is not a number: {v}") })
    }
}

fn parse_record(line_no: usize, rest: &str) -> Result<Record, LoadError> {
    let mut fields = BTreeMap::new();
    for tok in rest.split_whitespace() {
        let (k, v) = tok
            .split_once('=')
            .ok_or_else(|| LoadError::Malformed { line: line_no, reason: format!("expected key=value, found `{tok}`") })?;
        if fields.insert(k.to_string(), v.to_string()).is_some() {
            return Err(LoadError::Malformed { line: line_no, reason: format!("duplicate key `{k}`") });
        }
    }
    Ok(Record { line: line_no, fields })
}

/// Parses and validates a weight file image.
pub fn read_weights(bytes: &[u8]) -> Result<ModelWeights, LoadError> {
    let header_end = bytes.windows(5).position(|w| w == b"\nend\n").map(|p| p + 5);
    if !bytes.starts_with(b"QEEG1\n") {
        return Err(LoadError::BadMagic);
    }
    let header_end = header_end.ok_or(LoadError::Malformed { line: 0, reason: "manifest has no `end` line".into() })?;
    let manifest = std::str::from_utf8(&bytes[..header_end])
        .map_err(|_| LoadError::Malformed { line: 0, reason: "manifest is not UTF-8".into() })?;
    let blob = &bytes[header_end..];

    let mut params: BTreeMap<String, Record> = BTreeMap::new();
    let mut tensors: BTreeMap<String, Record> = BTreeMap::new();
    let mut calib = Vec::new();
    let mut version = None;
    let mut blob_len = None;
    for (i, line) in manifest.lines().enumerate().skip(1) {
        let line_no = i + 1;
        if line == "end" {
            break;
        }
        if let Some(v) = line.strip_prefix("version=") {
            version = Some(v.to_string());
            continue;
        }
        let (kind, rest) = line.split_once(' ').unwrap_or((line, ""));
        let rec = parse_record(line_no, rest)?;
        match kind {
            "param" => {
                params.insert(rec.get("name")?.to_string(), rec);
            }
            "tensor" => {
                let name = rec.get("name")?.to_string();
                if tensors.contains_key(&name) {
                    return Err(LoadError::Malformed { line: line_no, reason: format!("duplicate tensor `{name}`") });
                }
                tensors.insert(name, rec);
            }
            "calib" => calib.push(rec),
            "blob" => blob_len = Some(rec.usize("bytes")?),
            other => {
                return Err(LoadError::Malformed { line: line_no, reason: format!("unknown record kind `{other}`") })
            }
        }
    }
    match version.as_deref() {
        Some(VERSION) => {}
        Some(v) => return Err(LoadError::UnsupportedVersion(v.to_string())),
        None => return Err(LoadError::Malformed { line: 2, reason: "missing version".into() }),
    }
    let blob_len = blob_len.ok_or(LoadError::Malformed { line: 0, reason: "missing blob record".into() })?;
    if blob_len != blob.len() {
        return Err(LoadError::Malformed {
            line: 0,
            reason: format!("blob record says {blob_len} bytes, file holds {}", blob.len()),
        });
    }

    let shape = QEEGNET;
    let specs = tensor_specs(&shape);
    for name in tensors.keys() {
        if !specs.iter().any(|s| s.name == name) {
            return Err(LoadError::UnknownTensor(name.clone()));
        }
    }

    let mut raw: BTreeMap<&'static str, (&[u8], Option<Scale>)> = BTreeMap::new();
    for spec in &specs {
        let rec = tensors.get(spec.name).ok_or_else(|| LoadError::MissingTensor(spec.name.to_string()))?;
        let dtype = rec.get("dtype")?;
        if dtype != spec.dtype.name() {
            return Err(LoadError::DtypeMismatch {
                name: spec.name.into(),
                expected: spec.dtype.name(),
                found: dtype.into(),
            });
        }
        let found = rec.get("shape")?;
        let expected = shape_str(&spec.shape);
        if found != expected {
            return Err(LoadError::ShapeMismatch { name: spec.name.into(), expected, found: found.into() });
        }
        if let Some(layout) = spec.layout {
            let l = rec.get("layout")?;
            if Layout::parse(l) != Some(layout) {
                return Err(LoadError::Malformed {
                    line: rec.line,
                    reason: format!("tensor `{}` must be {}, found {l}", spec.name, layout.as_str()),
                });
            }
        }
        let scale = match rec.fields.get("scale") {
            Some(s) => Some(Scale::parse(s).ok_or_else(|| LoadError::BadScale(spec.name.into()))?),
            None if matches!(spec.dtype, Dtype::I32) => None,
            None => return Err(LoadError::BadScale(spec.name.into())),
        };
        let offset = rec.usize("offset")?;
        let len = rec.usize("bytes")?;
        let want = spec.shape.iter().product::<usize>() * spec.dtype.width();
        if len != want {
            return Err(LoadError::ShapeMismatch {
                name: spec.name.into(),
                expected: format!("{want} bytes"),
                found: format!("{len} bytes"),
            });
        }
        let end = offset.checked_add(len).filter(|&e| e <= blob.len()).ok_or(LoadError::OutOfBounds {
            name: spec.name.into(),
            offset,
            end: offset.saturating_add(len),
            blob: blob.len(),
        })?;
        raw.insert(spec.name, (&blob[offset..end], scale));
    }

    let qweights = |name: &'static str| -> QWeights {
        let spec = specs.iter().find(|s| s.name == name).unwrap();
        let (bytes, scale) = raw[name];
        QWeights {
            shape: [spec.shape[0], spec.shape[1]],
            layout: spec.layout.unwrap(),
            data: bytes.iter().map(|&b| b as i8).collect(),
            scale: scale.unwrap(),
        }
    };
    let bn = |name: &'static str| -> Result<BnStage, LoadError> {
        let (bytes, scale) = raw[name];
        let mut params = Vec::new();
        for (channel, c) in bytes.chunks_exact(8).enumerate() {
            let bias = i32::from_le_bytes(c[..4].try_into().unwrap());
            let divisor = i32::from_le_bytes(c[4..].try_into().unwrap());
            let p = RequantParams::new(bias, divisor).map_err(|_| LoadError::NonPositiveDivisor {
                name: name.into(),
                channel,
                divisor,
            })?;
            params.push(p);
        }
        Ok(BnStage { params, out_scale: scale.unwrap() })
    };

    let param = |name: &str| params.get(name).ok_or_else(|| LoadError::MissingTensor(name.to_string()));
    let input_scale = Scale::parse(param("input.scale")?.get("value")?).ok_or(LoadError::BadScale("input.scale".into()))?;
    let shift_rec = param("separable.depthwise.shift")?;
    let depthwise_shift = shift_rec.usize("value")?;
    if depthwise_shift > 24 {
        return Err(LoadError::Malformed { line: shift_rec.line, reason: format!("shift {depthwise_shift} too large") });
    }

    let calibration = calib
        .iter()
        .map(|rec| {
            let p = rec.get("point")?;
            let point = QuantPoint::parse(p)
                .ok_or_else(|| LoadError::Malformed { line: rec.line, reason: format!("unknown quantization point `{p}`") })?;
            Ok(CalibrationRecord { point, min: rec.f64("min")?, max: rec.f64("max")?, scale: rec.f64("scale")? })
        })
        .collect::<Result<Vec<_>, LoadError>>()?;

    let w = ModelWeights {
        shape,
        input_scale,
        temporal: qweights("temporal.weight"),
        temporal_bn: bn("temporal.bn")?,
        spatial: qweights("spatial.weight"),
        spatial_bn: bn("spatial.bn")?,
        depthwise: qweights("separable.depthwise.weight"),
        depthwise_shift: depthwise_shift as u32,
        pointwise: qweights("separable.pointwise.weight"),
        separable_bn: bn("separable.bn")?,
        fc: qweights("fc.weight"),
        fc_bias: raw["fc.bias"].0.chunks_exact(4).map(|c| i32::from_le_bytes(c.try_into().unwrap())).collect(),
        calibration,
    };
    let expected = expected_param_count(&shape);
    let found = param_count(&w);
    if found != expected {
        return Err(LoadError::ParamCount { expected, found });
    }
    Ok(w)
}
