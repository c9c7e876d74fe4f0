//! Text checkpoints:
//!
//! ```text
//! vinrs-checkpoint 1
//! dims <height> <width>
//! param <name> <d0>x<d1>x...
//! <values, whitespace separated>
//! ```

use std::fmt::Write;

use super::network::{param_shapes, VinConfig, VinNetwork};
use crate::error::{Error, Result};
use crate::numcore::Tensor;

const MAGIC: &str = "vinrs-checkpoint 1";

pub fn save_checkpoint(net: &VinNetwork) -> String {
    let (h, w) = net.arch().dims();
    let mut out = format!("{MAGIC}\ndims {h} {w}\n");
    for p in net.params().iter() {
        let dims: Vec<String> = p.value.shape().iter().map(|d| d.to_string()).collect();
        writeln!(out, "param {} {}", p.name, dims.join("x")).unwrap();
        let vals: Vec<String> = p.value.data().iter().map(|v| format!("{v:e}")).collect();
        writeln!(out, "{}", vals.join(" ")).unwrap();
    }
    out
}

/// Restores a checkpoint, checking every tensor against the shapes that
/// `config` implies.
pub fn load_checkpoint(text: &str, config: VinConfig) -> Result<VinNetwork> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim()));
    let perr = |line: usize, msg: String| Error::Parse { line, msg };
    match lines.next() {
        Some((_, MAGIC)) => {}
        _ => return Err(perr(1, "not a checkpoint".into())),
    }
    let (dl, dims) = lines.next().ok_or_else(|| perr(2, "missing dims".into()))?;
    let d: Vec<usize> = dims
        .strip_prefix("dims ")
        .ok_or_else(|| perr(dl, "expected dims".into()))?
        .split_whitespace()
        .map(|t| t.parse().map_err(|_| perr(dl, format!("bad dimension {t:?}"))))
        .collect::<Result<_>>()?;
    let [height, width] = d[..] else {
        return Err(perr(dl, "dims needs height and width".into()));
    };
    let mut tensors = Vec::new();
    for (name, shape) in param_shapes(&config, height, width) {
        let (hl, header) = lines.next().ok_or_else(|| perr(0, format!("missing parameter {name}")))?;
        let toks: Vec<&str> = header.split_whitespace().collect();
        if toks.len() != 3 || toks[0] != "param" || toks[1] != name {
            return Err(perr(hl, format!("expected header for {name}")));
        }
        let found: Vec<usize> = toks[2]
            .split('x')
            .map(|t| t.parse().map_err(|_| perr(hl, format!("bad shape {:?}", toks[2]))))
            .collect::<Result<_>>()?;
        if found != shape {
            return Err(Error::Mismatch(format!(
                "{name}: checkpoint shape {found:?}, configuration expects {shape:?}"
            )));
        }
        let (vl, vals) = lines.next().ok_or_else(|| perr(hl + 1, format!("missing values for {name}")))?;
        let data: Vec<f64> = vals
            .split_whitespace()
            .map(|t| t.parse().map_err(|_| perr(vl, format!("bad value {t:?}"))))
            .collect::<Result<_>>()?;
        tensors.push(Tensor::new(shape, data).map_err(|e| perr(vl, e.to_string()))?);
    }
    if let Some((l, extra)) = lines.find(|(_, l)| !l.is_empty()) {
        return Err(perr(l, format!("unexpected trailing content {extra:?}")));
    }
    let mut it = tensors.into_iter();
    VinNetwork::build(config, height, width, |_, _| it.next().expect("one tensor per parameter"))
}
