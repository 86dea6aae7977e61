//! Model checkpoints.
//!
//! A short text header followed by the raw parameter arrays:
//!
//! ```text
//! sprl-checkpoint v1
//! mode multilabel
//! max_len 30
//! ...
//! inventory spr1 1
//! property awareness
//! ...
//! param marker 3 300
//! ...
//! end
//! ```
//!
//! After `end\n` come the arrays in `param` order as little-endian `f32`.

use std::fs;
use std::path::Path;

use crate::autodiff::Tensor;
use crate::dataset::PropertyInventory;
use crate::model::{Ablation, MarkerScope, ModelConfig, ModelParams};
use crate::{Error, Result};

const MAGIC: &str = "sprl-checkpoint v1";

pub struct Checkpoint {
    pub params: ModelParams<f32>,
    pub inventory: PropertyInventory,
}

pub fn to_bytes(params: &ModelParams<f32>, inventory: &PropertyInventory) -> Result<Vec<u8>> {
    let c = &params.config;
    if inventory.len() != c.num_properties {
        return Err(Error::config(format!(
            "inventory has {} properties, model has {}",
            inventory.len(),
            c.num_properties
        )));
    }
    let mut head = format!("{MAGIC}\n");
    let scope = match c.marker_scope {
        MarkerScope::Full => "full",
        MarkerScope::WordOnly => "word",
    };
    head.push_str(&format!("mode {}\n", c.mode.as_str()));
    for (k, v) in [
        ("max_len", c.max_len),
        ("hidden", c.hidden),
        ("attention_dim", c.attention_dim),
        ("input_dim", c.input_dim),
        ("word_dim", c.word_dim),
        ("num_properties", c.num_properties),
    ] {
        head.push_str(&format!("{k} {v}\n"));
    }
    head.push_str(&format!("marker_scope {scope}\n"));
    head.push_str(&format!("seed {}\n", c.seed));
    for (name, on) in c.ablation.flags() {
        if on {
            head.push_str(&format!("ablate {name}\n"));
        }
    }
    head.push_str(&format!(
        "inventory {} {}\n",
        inventory.name(),
        inventory.responses_per_property()
    ));
    for p in inventory.properties() {
        head.push_str(&format!("property {p}\n"));
    }
    for ((name, _), t) in c.param_shapes().iter().zip(&params.tensors) {
        let dims: Vec<String> = t.shape().iter().map(|d| d.to_string()).collect();
        head.push_str(&format!("param {name} {}\n", dims.join(" ")));
    }
    head.push_str("end\n");
    let mut out = head.into_bytes();
    for t in &params.tensors {
        for v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

pub fn save(path: &Path, params: &ModelParams<f32>, inventory: &PropertyInventory) -> Result<()> {
    fs::write(path, to_bytes(params, inventory)?).map_err(|e| Error::io(path, e))
}

pub fn from_bytes(bytes: &[u8], origin: &str) -> Result<Checkpoint> {
    let bad = |msg: String| Error::data(format!("{origin}: {msg}"));
    let marker = b"\nend\n";
    let split = bytes
        .windows(marker.len())
        .position(|w| w == marker)
        .ok_or_else(|| bad("missing header terminator".into()))?;
    let header = std::str::from_utf8(&bytes[..split])
        .map_err(|_| bad("header is not UTF-8".into()))?;
    let mut body = &bytes[split + marker.len()..];

    let mut lines = header.lines();
    if lines.next() != Some(MAGIC) {
        return Err(bad("not a checkpoint".into()));
    }
    let mut mode = None;
    let mut dims = std::collections::BTreeMap::new();
    let mut scope = MarkerScope::Full;
    let mut seed = 0u64;
    let mut ablation = Ablation::default();
    let mut inv_name = String::new();
    let mut responses = 1usize;
    let mut properties = Vec::new();
    let mut shapes: Vec<(String, Vec<usize>)> = Vec::new();
    for line in lines {
        let (key, rest) = line.split_once(' ').unwrap_or((line, ""));
        let num = |s: &str| -> Result<usize> {
            s.parse().map_err(|_| bad(format!("bad number in {line:?}")))
        };
        match key {
            "mode" => mode = Some(rest.parse()?),
            "max_len" | "hidden" | "attention_dim" | "input_dim" | "word_dim"
            | "num_properties" => {
                dims.insert(key.to_string(), num(rest)?);
            }
            "marker_scope" => {
                scope = match rest {
                    "full" => MarkerScope::Full,
                    "word" => MarkerScope::WordOnly,
                    _ => return Err(bad(format!("unknown marker scope {rest:?}"))),
                }
            }
            "seed" => seed = rest.parse().map_err(|_| bad("bad seed".into()))?,
            "ablate" => ablation = ablation.with(rest)?,
            "inventory" => {
                let (n, r) = rest
                    .rsplit_once(' ')
                    .ok_or_else(|| bad("bad inventory line".into()))?;
                inv_name = n.to_string();
                responses = num(r)?;
            }
            "property" => properties.push(rest.to_string()),
            "param" => {
                let mut parts = rest.split(' ');
                let name = parts.next().unwrap_or_default().to_string();
                let shape = parts.map(num).collect::<Result<Vec<_>>>()?;
                shapes.push((name, shape));
            }
            _ => return Err(bad(format!("unknown header line {line:?}"))),
        }
    }
    let get = |k: &str| {
        dims.get(k)
            .copied()
            .ok_or_else(|| bad(format!("missing {k}")))
    };
    let config = ModelConfig {
        mode: mode.ok_or_else(|| bad("missing mode".into()))?,
        max_len: get("max_len")?,
        hidden: get("hidden")?,
        attention_dim: get("attention_dim")?,
        input_dim: get("input_dim")?,
        word_dim: get("word_dim")?,
        marker_scope: scope,
        num_properties: get("num_properties")?,
        ablation,
        seed,
    };
    config.validate()?;
    let inventory = PropertyInventory::new(inv_name, properties, responses)?;
    if inventory.len() != config.num_properties {
        return Err(bad(format!(
            "{} properties listed, model has {}",
            inventory.len(),
            config.num_properties
        )));
    }
    let expected = config.param_shapes();
    if shapes.len() != expected.len() {
        return Err(bad(format!(
            "{} parameter arrays, expected {}",
            shapes.len(),
            expected.len()
        )));
    }
    let mut tensors = Vec::with_capacity(shapes.len());
    for ((name, shape), (want_name, want)) in shapes.iter().zip(&expected) {
        if name != want_name || shape.as_slice() != want.as_slice() {
            return Err(bad(format!(
                "parameter {name} {shape:?} does not match {want_name} {want:?}"
            )));
        }
        let n: usize = shape.iter().product();
        if body.len() < 4 * n {
            return Err(bad(format!("truncated data for {name}")));
        }
        let data = body[..4 * n]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        body = &body[4 * n..];
        tensors.push(Tensor::new(shape.clone(), data)?);
    }
    if !body.is_empty() {
        return Err(bad(format!("{} trailing bytes", body.len())));
    }
    Ok(Checkpoint {
        params: ModelParams::from_tensors(config, tensors)?,
        inventory,
    })
}

pub fn load(path: &Path) -> Result<Checkpoint> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    from_bytes(&bytes, &path.display().to_string())
}

/// Loads a checkpoint and rejects it unless it was trained on `inventory`.
pub fn load_for(path: &Path, inventory: &PropertyInventory) -> Result<Checkpoint> {
    let ckpt = load(path)?;
    if ckpt.inventory.properties() != inventory.properties() {
        return Err(Error::data(format!(
            "{}: checkpoint properties do not match inventory {}",
            path.display(),
            inventory.name()
        )));
    }
    Ok(ckpt)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Mode;

    fn small() -> (ModelParams<f32>, PropertyInventory) {
        let mut c = ModelConfig::new(Mode::Multilabel, 5, 2);
        c.max_len = 4;
        c.hidden = 3;
        c.attention_dim = 4;
        c.seed = 9;
        c.ablation.no_argument_marker = true;
        let inv = PropertyInventory::new("tiny", vec!["a".into(), "b c".into()], 2).unwrap();
        (ModelParams::initialize(c).unwrap(), inv)
    }

    #[test]
    fn roundtrip_is_exact_and_deterministic() {
        let (p, inv) = small();
        let bytes = to_bytes(&p, &inv).unwrap();
        assert_eq!(bytes, to_bytes(&p, &inv).unwrap());
        let back = from_bytes(&bytes, "mem").unwrap();
        assert_eq!(back.params, p);
        assert_eq!(back.inventory, inv);
    }

    #[test]
    fn rejects_corruption() {
        let (p, inv) = small();
        let bytes = to_bytes(&p, &inv).unwrap();
        assert!(from_bytes(&bytes[..bytes.len() - 1], "mem").is_err());
        let text = String::from_utf8_lossy(&bytes).replace("hidden 3", "hidden 4");
        let mut patched = text.split("\nend\n").next().unwrap().as_bytes().to_vec();
        patched.extend_from_slice(&bytes[bytes.windows(5).position(|w| w == b"\nend\n").unwrap()..]);
        let err = from_bytes(&patched, "mem").err().unwrap();
        assert!(err.to_string().contains("does not match"), "{err}");
    }

    #[test]
    fn rejects_other_inventory() {
        let (p, inv) = small();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        save(&path, &p, &inv).unwrap();
        let other = PropertyInventory::new("x", vec!["b c".into(), "a".into()], 2).unwrap();
        assert!(load_for(&path, &other).is_err());
        assert!(load_for(&path, &inv).is_ok());
    }
}
