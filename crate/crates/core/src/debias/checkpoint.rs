//! Plain-text checkpoints. Line 1 is a JSON header (format version, widths,
//! activations, training config); then for every layer a
//! `layer <stack> <index> <out> <in>` line, `out` weight rows and one bias row.
//! Values use shortest round-trip decimal formatting, so reloads are exact.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use super::nn::{Activation, LayerParams, Mlp};
use super::{Architecture, DebiasModel, TrainConfig};
use crate::error::{Error, Result};

const FORMAT: &str = "fairmatch-debias";
const VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct StackHeader {
    name: String,
    widths: Vec<usize>,
    activations: Vec<Activation>,
}

#[derive(Serialize, Deserialize)]
struct Header {
    format: String,
    version: u32,
    architecture: Architecture,
    stacks: Vec<StackHeader>,
    config: Option<TrainConfig>,
}

fn stacks(model: &DebiasModel) -> [(&'static str, &Mlp); 3] {
    [("generator", &model.generator), ("classifier", &model.classifier), ("adversary", &model.adversary)]
}

fn write_row<'a, W: Write>(w: &mut W, values: impl IntoIterator<Item = &'a f64>) -> std::io::Result<()> {
    let mut first = true;
    for v in values {
        if !first {
            w.write_all(b" ")?;
        }
        write!(w, "{v}")?;
        first = false;
    }
    w.write_all(b"\n")
}

pub fn write_checkpoint<W: Write>(model: &DebiasModel, config: Option<&TrainConfig>, mut w: W) -> std::io::Result<()> {
    let header = Header {
        format: FORMAT.into(),
        version: VERSION,
        architecture: model.arch,
        stacks: stacks(model)
            .iter()
            .map(|(name, mlp)| StackHeader {
                name: name.to_string(),
                widths: mlp.widths(),
                activations: mlp.activations.clone(),
            })
            .collect(),
        config: config.cloned(),
    };
    serde_json::to_writer(&mut w, &header)?;
    w.write_all(b"\n")?;
    for (name, mlp) in stacks(model) {
        for (i, layer) in mlp.layers.iter().enumerate() {
            writeln!(w, "layer {name} {i} {} {}", layer.outputs(), layer.inputs())?;
            for row in layer.weights.rows() {
                write_row(&mut w, row)?;
            }
            write_row(&mut w, &layer.bias)?;
        }
    }
    w.flush()
}

pub fn read_checkpoint<R: BufRead>(reader: R) -> Result<(DebiasModel, Option<TrainConfig>)> {
    let mut lines = reader.lines().enumerate().skip_while(|(_, l)| l.as_ref().is_ok_and(|l| l.starts_with('#')));
    let mut next = |what: &str| -> Result<(usize, String)> {
        match lines.next() {
            Some((i, Ok(l))) => Ok((i + 1, l)),
            Some((i, Err(e))) => Err(Error::data(format!("checkpoint line {}: {e}", i + 1))),
            None => Err(Error::data(format!("checkpoint truncated: expected {what}"))),
        }
    };
    let (_, head) = next("header")?;
    let header: Header = serde_json::from_str(&head).map_err(|e| Error::data(format!("checkpoint header: {e}")))?;
    if header.format != FORMAT || header.version != VERSION {
        return Err(Error::data(format!("unsupported checkpoint {} v{}", header.format, header.version)));
    }
    let arch = header.architecture;
    let expected = [arch.generator_widths(), arch.classifier_widths(), arch.adversary_widths()];
    let mut mlps = Vec::with_capacity(3);
    for (sh, want) in header.stacks.iter().zip(&expected) {
        if &sh.widths != want || sh.activations.len() + 1 != sh.widths.len() {
            return Err(Error::data(format!("stack {} widths do not match the architecture", sh.name)));
        }
        let mut layers = Vec::new();
        for (i, win) in sh.widths.windows(2).enumerate() {
            let (inp, out) = (win[0], win[1]);
            let (ln, tag) = next("layer tag")?;
            if tag != format!("layer {} {i} {out} {inp}", sh.name) {
                return Err(Error::data(format!("checkpoint line {ln}: unexpected {tag:?}")));
            }
            let mut parse_row = |len: usize| -> Result<Vec<f64>> {
                let (ln, line) = next("values")?;
                let v: Vec<f64> = line
                    .split(' ')
                    .filter(|t| !t.is_empty())
                    .map(str::parse)
                    .collect::<std::result::Result<_, _>>()
                    .map_err(|e| Error::data(format!("checkpoint line {ln}: {e}")))?;
                if v.len() != len {
                    return Err(Error::data(format!("checkpoint line {ln}: expected {len} values")));
                }
                Ok(v)
            };
            let mut w = Vec::with_capacity(out * inp);
            for _ in 0..out {
                w.extend(parse_row(inp)?);
            }
            let bias = Array1::from(parse_row(out)?);
            layers.push(LayerParams { weights: Array2::from_shape_vec((out, inp), w).expect("shape"), bias });
        }
        mlps.push(Mlp { layers, activations: sh.activations.clone() });
    }
    if mlps.len() != 3 {
        return Err(Error::data("checkpoint must contain generator, classifier and adversary"));
    }
    let adversary = mlps.pop().unwrap();
    let classifier = mlps.pop().unwrap();
    let generator = mlps.pop().unwrap();
    Ok((DebiasModel { arch, generator, classifier, adversary }, header.config))
}

pub fn save_checkpoint(model: &DebiasModel, config: Option<&TrainConfig>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let f = File::create(path).map_err(|e| Error::io(path, e))?;
    write_checkpoint(model, config, BufWriter::new(f)).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<(DebiasModel, Option<TrainConfig>)> {
    let path = path.as_ref();
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    read_checkpoint(BufReader::new(f))
}

