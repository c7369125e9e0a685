//! Checkpoint and tensor files: a single-line JSON header followed by raw
//! little-endian f64 payloads, one per tensor, in layer order.
//!
//! Three container kinds share the format:
//! - `"params"`   — plain network parameters,
//! - `"interval_params"` — lower/central/upper sections (in that order),
//! - `"tensor"`   — a single tensor (images, sinograms, heatmaps).

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::interval::IntervalParams;
use crate::nn::{LayerParams, NetworkParams, NetworkSpec};
use crate::tensor::Tensor;

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct TensorEntry {
    layer: usize,
    name: String,
    shape: Vec<usize>,
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    version: u32,
    kind: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    spec: Option<NetworkSpec>,
    #[serde(skip_serializing_if = "Option::is_none")]
    interval_layers: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    sections: Option<Vec<String>>,
    tensors: Vec<TensorEntry>,
}

fn write_header(w: &mut impl Write, header: &Header, path: &Path) -> Result<()> {
    let mut line = serde_json::to_vec(header)?;
    line.push(b'\n');
    w.write_all(&line)
        .map_err(|e| Error::io(path.display().to_string(), e))
}

fn write_payload(w: &mut impl Write, t: &Tensor, path: &Path) -> Result<()> {
    let mut buf = Vec::with_capacity(t.len() * 8);
    for v in t.data() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    w.write_all(&buf)
        .map_err(|e| Error::io(path.display().to_string(), e))
}

fn read_header(r: &mut impl Read, path: &Path) -> Result<Header> {
    let mut line = Vec::new();
    let mut byte = [0u8; 1];
    loop {
        let n = r
            .read(&mut byte)
            .map_err(|e| Error::io(path.display().to_string(), e))?;
        if n == 0 {
            return Err(Error::contract(format!(
                "{}: truncated checkpoint header",
                path.display()
            )));
        }
        if byte[0] == b'\n' {
            break;
        }
        line.push(byte[0]);
    }
    let header: Header = serde_json::from_slice(&line)?;
    if header.version != FORMAT_VERSION {
        return Err(Error::config(format!(
            "{}: unsupported checkpoint version {}",
            path.display(),
            header.version
        )));
    }
    Ok(header)
}

fn read_payload(r: &mut impl Read, shape: &[usize], path: &Path) -> Result<Tensor> {
    let n: usize = shape.iter().product();
    let mut buf = vec![0u8; n * 8];
    r.read_exact(&mut buf)
        .map_err(|e| Error::io(path.display().to_string(), e))?;
    let data = buf
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Tensor::new(shape.to_vec(), data)
}

fn param_entries(spec: &NetworkSpec, params: &NetworkParams) -> Vec<(TensorEntry, Tensor)> {
    let mut out = Vec::new();
    for i in spec.parametric_layers() {
        let lp = params.layer(i).unwrap();
        out.push((
            TensorEntry {
                layer: i,
                name: "weight".into(),
                shape: lp.weight.shape().to_vec(),
            },
            lp.weight.clone(),
        ));
        out.push((
            TensorEntry {
                layer: i,
                name: "bias".into(),
                shape: lp.bias.shape().to_vec(),
            },
            lp.bias.clone(),
        ));
    }
    out
}

pub fn save_params(path: &Path, spec: &NetworkSpec, params: &NetworkParams) -> Result<()> {
    params.validate_against(spec)?;
    let entries = param_entries(spec, params);
    let header = Header {
        version: FORMAT_VERSION,
        kind: "params".into(),
        spec: Some(spec.clone()),
        interval_layers: None,
        sections: None,
        tensors: entries.iter().map(|(e, _)| clone_entry(e)).collect(),
    };
    let file = File::create(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let mut w = BufWriter::new(file);
    write_header(&mut w, &header, path)?;
    for (_, t) in &entries {
        write_payload(&mut w, t, path)?;
    }
    w.flush().map_err(|e| Error::io(path.display().to_string(), e))
}

pub fn load_params(path: &Path) -> Result<(NetworkSpec, NetworkParams)> {
    let file = File::open(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let mut r = BufReader::new(file);
    let header = read_header(&mut r, path)?;
    if header.kind != "params" {
        return Err(Error::config(format!(
            "{}: expected a params checkpoint, found kind {:?}",
            path.display(),
            header.kind
        )));
    }
    let spec = header
        .spec
        .ok_or_else(|| Error::config(format!("{}: header lacks a network spec", path.display())))?;
    let params = read_param_section(&mut r, &spec, &header.tensors, path)?;
    params.validate_against(&spec)?;
    Ok((spec, params))
}

fn read_param_section(
    r: &mut impl Read,
    spec: &NetworkSpec,
    entries: &[TensorEntry],
    path: &Path,
) -> Result<NetworkParams> {
    let mut layers: Vec<Option<LayerParams>> = vec![None; spec.layers.len()];
    let mut pending: Option<(usize, Tensor)> = None;
    for e in entries {
        let t = read_payload(r, &e.shape, path)?;
        match e.name.as_str() {
            "weight" => pending = Some((e.layer, t)),
            "bias" => {
                let (layer, weight) = pending.take().ok_or_else(|| {
                    Error::contract(format!("{}: bias entry without weight", path.display()))
                })?;
                if layer != e.layer {
                    return Err(Error::contract(format!(
                        "{}: interleaved weight/bias entries",
                        path.display()
                    )));
                }
                layers[e.layer] = Some(LayerParams { weight, bias: t });
            }
            other => {
                return Err(Error::config(format!(
                    "{}: unknown tensor entry {other:?}",
                    path.display()
                )))
            }
        }
    }
    Ok(NetworkParams::from_layers(layers))
}

pub fn save_interval_params(path: &Path, spec: &NetworkSpec, iparams: &IntervalParams) -> Result<()> {
    let entries = param_entries(spec, iparams.central());
    let header = Header {
        version: FORMAT_VERSION,
        kind: "interval_params".into(),
        spec: Some(spec.clone()),
        interval_layers: Some(iparams.interval_layers()),
        sections: Some(vec!["lower".into(), "central".into(), "upper".into()]),
        tensors: entries.iter().map(|(e, _)| clone_entry(e)).collect(),
    };
    let file = File::create(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let mut w = BufWriter::new(file);
    write_header(&mut w, &header, path)?;
    for section in [iparams.lower(), iparams.central(), iparams.upper()] {
        for (e, _) in &entries {
            let lp = section.layer(e.layer).unwrap();
            let t = if e.name == "weight" { &lp.weight } else { &lp.bias };
            write_payload(&mut w, t, path)?;
        }
    }
    w.flush().map_err(|e| Error::io(path.display().to_string(), e))
}

pub fn load_interval_params(path: &Path) -> Result<(NetworkSpec, IntervalParams)> {
    let file = File::open(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let mut r = BufReader::new(file);
    let header = read_header(&mut r, path)?;
    if header.kind != "interval_params" {
        return Err(Error::config(format!(
            "{}: expected an interval_params checkpoint, found kind {:?}",
            path.display(),
            header.kind
        )));
    }
    let spec = header
        .spec
        .ok_or_else(|| Error::config(format!("{}: header lacks a network spec", path.display())))?;
    let k = header.interval_layers.ok_or_else(|| {
        Error::config(format!("{}: header lacks interval_layers", path.display()))
    })?;
    let sections = header.sections.unwrap_or_default();
    if sections != ["lower", "central", "upper"] {
        return Err(Error::config(format!(
            "{}: unexpected sections {sections:?}",
            path.display()
        )));
    }
    let lower = read_param_section(&mut r, &spec, &header.tensors, path)?;
    let central = read_param_section(&mut r, &spec, &header.tensors, path)?;
    let upper = read_param_section(&mut r, &spec, &header.tensors, path)?;
    let iparams = IntervalParams::from_parts(lower, central, upper, k, &spec)?;
    Ok((spec, iparams))
}

pub fn save_tensor(path: &Path, t: &Tensor) -> Result<()> {
    let header = Header {
        version: FORMAT_VERSION,
        kind: "tensor".into(),
        spec: None,
        interval_layers: None,
        sections: None,
        tensors: vec![TensorEntry {
            layer: 0,
            name: "data".into(),
            shape: t.shape().to_vec(),
        }],
    };
    let file = File::create(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let mut w = BufWriter::new(file);
    write_header(&mut w, &header, path)?;
    write_payload(&mut w, t, path)?;
    w.flush().map_err(|e| Error::io(path.display().to_string(), e))
}

pub fn load_tensor(path: &Path) -> Result<Tensor> {
    let file = File::open(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let mut r = BufReader::new(file);
    let header = read_header(&mut r, path)?;
    if header.kind != "tensor" {
        return Err(Error::config(format!(
            "{}: expected a tensor file, found kind {:?}",
            path.display(),
            header.kind
        )));
    }
    let entry = header
        .tensors
        .first()
        .ok_or_else(|| Error::contract(format!("{}: empty tensor file", path.display())))?;
    read_payload(&mut r, &entry.shape, path)
}

fn clone_entry(e: &TensorEntry) -> TensorEntry {
    TensorEntry {
        layer: e.layer,
        name: e.name.clone(),
        shape: e.shape.clone(),
    }
}
