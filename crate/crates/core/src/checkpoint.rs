//! Plain-text checkpoint container.
//!
//! ```text
//! hgrec-checkpoint 1
//! fingerprint <hex>
//! layout <users> <items> <categories>
//! dim <d>
//! layers <n>
//! tensor <name> <dim0> [<dim1>]
//! <one row of values per line>
//! ...
//! end
//! ```
//!
//! Values are written in shortest round-trip exponent form, so loading a
//! saved checkpoint reproduces every value bit for bit.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::graph::VertexLayout;
use crate::model::{ModelConfig, ModelParams};

const MAGIC: &str = "hgrec-checkpoint 1";

pub fn to_text(params: &ModelParams, fingerprint: &str) -> String {
    let mut s = String::new();
    let l = params.layout;
    writeln!(s, "{MAGIC}").unwrap();
    writeln!(s, "fingerprint {fingerprint}").unwrap();
    writeln!(s, "layout {} {} {}", l.n_users, l.n_items, l.n_categories).unwrap();
    writeln!(s, "dim {}", params.dim()).unwrap();
    writeln!(s, "layers {}", params.n_layers()).unwrap();
    for ((name, values), (_, shape)) in params.tensors().into_iter().zip(params.shapes()) {
        let dims: Vec<String> = shape.iter().map(ToString::to_string).collect();
        writeln!(s, "tensor {name} {}", dims.join(" ")).unwrap();
        let row_len = if shape.len() == 2 { shape[1] } else { shape[0] };
        for row in values.chunks(row_len.max(1)) {
            let cells: Vec<String> = row.iter().map(|v| format!("{v:e}")).collect();
            writeln!(s, "{}", cells.join(" ")).unwrap();
        }
    }
    writeln!(s, "end").unwrap();
    s
}

fn header<'a>(lines: &mut impl Iterator<Item = (usize, &'a str)>, key: &str) -> Result<(usize, Vec<&'a str>)> {
    let (no, line) = lines.next().ok_or_else(|| Error::parse("checkpoint", 0, format!("missing {key}")))?;
    let mut parts = line.split_whitespace();
    if parts.next() != Some(key) {
        return Err(Error::parse("checkpoint", no + 1, format!("expected {key}")));
    }
    Ok((no, parts.collect()))
}

fn number(s: &str, no: usize) -> Result<usize> {
    s.parse().map_err(|_| Error::parse("checkpoint", no + 1, format!("bad integer {s:?}")))
}

/// Parses a checkpoint, returning the parameters and the stored fingerprint.
pub fn from_text(text: &str) -> Result<(ModelParams, String)> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, MAGIC)) => {}
        _ => return Err(Error::parse("checkpoint", 1, "not a version 1 checkpoint")),
    }
    let (_, fp) = header(&mut lines, "fingerprint")?;
    let fingerprint = fp.first().map(|s| s.to_string()).unwrap_or_default();
    let (no, l) = header(&mut lines, "layout")?;
    if l.len() != 3 {
        return Err(Error::parse("checkpoint", no + 1, "layout needs three counts"));
    }
    let layout = VertexLayout::new(number(l[0], no)?, number(l[1], no)?, number(l[2], no)?);
    let (no, d) = header(&mut lines, "dim")?;
    let dim = number(d.first().copied().unwrap_or(""), no)?;
    let (no, n) = header(&mut lines, "layers")?;
    let layers = number(n.first().copied().unwrap_or(""), no)?;

    let mut params = ModelParams::init(layout, &ModelConfig { dim, layers, seed: 0 })?;
    let shapes = params.shapes();
    for ((name, slot), (_, shape)) in params.tensors_mut().into_iter().zip(shapes) {
        let (no, head) = header(&mut lines, "tensor")?;
        let dims: Vec<usize> = head.iter().skip(1).map(|s| number(s, no)).collect::<Result<_>>()?;
        if head.first() != Some(&name.as_str()) || dims != shape {
            return Err(Error::parse("checkpoint", no + 1, format!("expected tensor {name} {shape:?}")));
        }
        let mut filled = 0;
        while filled < slot.len() {
            let (no, line) = lines
                .next()
                .ok_or_else(|| Error::parse("checkpoint", 0, format!("tensor {name} truncated")))?;
            for cell in line.split_whitespace() {
                if filled == slot.len() {
                    return Err(Error::parse("checkpoint", no + 1, "too many values"));
                }
                slot[filled] = cell
                    .parse()
                    .map_err(|_| Error::parse("checkpoint", no + 1, format!("bad number {cell:?}")))?;
                filled += 1;
            }
        }
    }
    match lines.next() {
        Some((_, "end")) => Ok((params, fingerprint)),
        other => Err(Error::parse("checkpoint", other.map_or(0, |(n, _)| n + 1), "expected end")),
    }
}

pub fn save(params: &ModelParams, fingerprint: &str, path: &Path) -> Result<()> {
    std::fs::write(path, to_text(params, fingerprint)).map_err(|e| Error::io(path, e))
}

pub fn load(path: &Path) -> Result<(ModelParams, String)> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    from_text(&text)
}
