//! Embedding checkpoints.
//!
//! Text layout (one record per line, ASCII):
//!
//! ```text
//! cwrec-checkpoint 1
//! num_users <U>
//! num_items <I>
//! dim <d>
//! backbone <MF|LightGCN|XSimGCL>
//! layers <L>
//! scoring <cosine|dot>
//! <U user rows, then I item rows: d space-separated floats each>
//! ```
//!
//! Floats are written in the shortest form that parses back to the same
//! bits, so a text round trip is exact.
//!
//! Binary layout: the 8 magic bytes `CWRECKPT`, then little-endian `u32`
//! version, `u64` U, I, d, `u8` backbone (0 MF, 1 LightGCN, 2 XSimGCL),
//! `u64` layers, `u8` scoring (0 cosine, 1 dot), then `(U + I) * d`
//! little-endian `f64`.

use std::fmt::Write as _;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{BackboneConfig, BackboneKind, EmbeddingTable, Model, Scoring};
use crate::data::UserItemSet;
use crate::error::{Error, Result};

const TEXT_MAGIC: &str = "cwrec-checkpoint";
const BINARY_MAGIC: &[u8; 8] = b"CWRECKPT";
const VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CheckpointMode {
    #[default]
    Text,
    Binary,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub kind: BackboneKind,
    pub layers: usize,
    pub scoring: Scoring,
    pub table: EmbeddingTable,
}

impl Checkpoint {
    pub fn of_model(model: &Model) -> Self {
        Self {
            kind: model.config.kind,
            layers: model.config.effective_layers(),
            scoring: model.scoring,
            table: model.base.clone(),
        }
    }

    /// Rebuilds the model; `train` supplies the graph for propagating
    /// backbones and must match the table's shape.
    pub fn into_model(self, train: &UserItemSet) -> Result<Model> {
        let mut config = BackboneConfig::for_kind(self.kind).with_dim(self.table.dim());
        config.layers = self.layers;
        config.contrast_layer = config.contrast_layer.min(self.layers);
        Model::new(config, self.scoring, self.table, train)
    }
}

pub fn save_checkpoint(path: impl AsRef<Path>, ckpt: &Checkpoint, mode: CheckpointMode) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let res = match mode {
        CheckpointMode::Text => write_text(&mut w, ckpt),
        CheckpointMode::Binary => write_binary(&mut w, ckpt),
    };
    res.and_then(|_| w.flush()).map_err(|e| Error::io(path, e))
}

fn write_text<W: Write>(w: &mut W, c: &Checkpoint) -> std::io::Result<()> {
    let t = &c.table;
    writeln!(w, "{TEXT_MAGIC} {VERSION}")?;
    writeln!(w, "num_users {}", t.num_users())?;
    writeln!(w, "num_items {}", t.num_items())?;
    writeln!(w, "dim {}", t.dim())?;
    writeln!(w, "backbone {}", c.kind)?;
    writeln!(w, "layers {}", c.layers)?;
    writeln!(w, "scoring {}", c.scoring)?;
    let mut line = String::new();
    for node in 0..t.num_nodes() {
        line.clear();
        for (k, x) in t.row(node).iter().enumerate() {
            if k > 0 {
                line.push(' ');
            }
            write!(line, "{x:e}").expect("write to string");
        }
        writeln!(w, "{line}")?;
    }
    Ok(())
}

fn write_binary<W: Write>(w: &mut W, c: &Checkpoint) -> std::io::Result<()> {
    let t = &c.table;
    w.write_all(BINARY_MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    for n in [t.num_users(), t.num_items(), t.dim()] {
        w.write_all(&(n as u64).to_le_bytes())?;
    }
    w.write_all(&[match c.kind {
        BackboneKind::MF => 0,
        BackboneKind::LightGCN => 1,
        BackboneKind::XSimGCL => 2,
    }])?;
    w.write_all(&(c.layers as u64).to_le_bytes())?;
    w.write_all(&[match c.scoring {
        Scoring::HalfCosine => 0,
        Scoring::Dot => 1,
    }])?;
    for x in t.as_slice() {
        w.write_all(&x.to_le_bytes())?;
    }
    Ok(())
}

/// Reads either layout, detected from the leading magic bytes.
pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    let path = path.as_ref();
    let mut bytes = Vec::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::io(path, e))?;
    if bytes.starts_with(BINARY_MAGIC) {
        read_binary(&bytes)
    } else {
        read_text(&bytes)
    }
}

fn bad(msg: impl Into<String>) -> Error {
    Error::Checkpoint(msg.into())
}

fn read_text(bytes: &[u8]) -> Result<Checkpoint> {
    let mut lines = BufReader::new(bytes).lines();
    let mut next = || -> Result<String> {
        lines
            .next()
            .ok_or_else(|| bad("unexpected end of file"))?
            .map_err(|e| bad(e.to_string()))
    };
    let magic = next()?;
    if magic != format!("{TEXT_MAGIC} {VERSION}") {
        return Err(bad(format!("unrecognized header `{magic}`")));
    }
    let mut field = |name: &str| -> Result<String> {
        let line = next()?;
        let (key, value) = line
            .split_once(' ')
            .ok_or_else(|| bad(format!("malformed header line `{line}`")))?;
        if key != name {
            return Err(bad(format!("expected `{name}`, found `{key}`")));
        }
        Ok(value.to_owned())
    };
    let parse_usize = |s: String| s.parse::<usize>().map_err(|_| bad(format!("bad count `{s}`")));
    let num_users = parse_usize(field("num_users")?)?;
    let num_items = parse_usize(field("num_items")?)?;
    let dim = parse_usize(field("dim")?)?;
    let kind: BackboneKind = field("backbone")?.parse().map_err(|_| bad("bad backbone"))?;
    let layers = parse_usize(field("layers")?)?;
    let scoring: Scoring = field("scoring")?.parse().map_err(|_| bad("bad scoring"))?;
    if dim == 0 {
        return Err(bad("dim must be >= 1"));
    }

    let mut data = Vec::with_capacity((num_users + num_items) * dim);
    for row in 0..num_users + num_items {
        let line = next()?;
        let before = data.len();
        for tok in line.split_ascii_whitespace() {
            data.push(
                tok.parse::<f64>()
                    .map_err(|_| bad(format!("bad float `{tok}` in row {row}")))?,
            );
        }
        if data.len() - before != dim {
            return Err(bad(format!(
                "row {row} has {} values, expected {dim}",
                data.len() - before
            )));
        }
    }
    Ok(Checkpoint {
        kind,
        layers,
        scoring,
        table: EmbeddingTable::from_raw(num_users, num_items, dim, data),
    })
}

fn read_binary(bytes: &[u8]) -> Result<Checkpoint> {
    let mut pos = BINARY_MAGIC.len();
    let mut take = |n: usize| -> Result<&[u8]> {
        let s = bytes
            .get(pos..pos + n)
            .ok_or_else(|| bad("truncated binary checkpoint"))?;
        pos += n;
        Ok(s)
    };
    let version = u32::from_le_bytes(take(4)?.try_into().expect("4 bytes"));
    if version != VERSION {
        return Err(bad(format!("unsupported version {version}")));
    }
    let mut read_u64 = || -> Result<usize> { Ok(u64::from_le_bytes(take(8)?.try_into().expect("8 bytes")) as usize) };
    let num_users = read_u64()?;
    let num_items = read_u64()?;
    let dim = read_u64()?;
    let kind = match take(1)?[0] {
        0 => BackboneKind::MF,
        1 => BackboneKind::LightGCN,
        2 => BackboneKind::XSimGCL,
        b => return Err(bad(format!("bad backbone tag {b}"))),
    };
    let layers = u64::from_le_bytes(take(8)?.try_into().expect("8 bytes")) as usize;
    let scoring = match take(1)?[0] {
        0 => Scoring::HalfCosine,
        1 => Scoring::Dot,
        b => return Err(bad(format!("bad scoring tag {b}"))),
    };
    if dim == 0 {
        return Err(bad("dim must be >= 1"));
    }
    let count = (num_users + num_items) * dim;
    let raw = take(count * 8)?;
    let data = raw
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    if pos != bytes.len() {
        return Err(bad("trailing bytes after binary checkpoint"));
    }
    Ok(Checkpoint {
        kind,
        layers,
        scoring,
        table: EmbeddingTable::from_raw(num_users, num_items, dim, data),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backbones::init_embeddings;

    fn sample() -> Checkpoint {
        let mut table = init_embeddings(3, 5, 4, 17, 0.37);
        table.as_mut_slice()[0] = 1e-300;
        table.as_mut_slice()[1] = -0.0;
        Checkpoint {
            kind: BackboneKind::LightGCN,
            layers: 2,
            scoring: Scoring::HalfCosine,
            table,
        }
    }

    #[test]
    fn text_round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ckpt.txt");
        let c = sample();
        save_checkpoint(&path, &c, CheckpointMode::Text).unwrap();
        let back = load_checkpoint(&path).unwrap();
        assert_eq!(back.kind, c.kind);
        for (a, b) in back.table.as_slice().iter().zip(c.table.as_slice()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("cwrec-checkpoint 1\nnum_users 3\nnum_items 5\ndim 4\nbackbone LightGCN\n"));
    }

    #[test]
    fn binary_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ckpt.bin");
        let c = sample();
        save_checkpoint(&path, &c, CheckpointMode::Binary).unwrap();
        assert_eq!(load_checkpoint(&path).unwrap(), c);
    }

    #[test]
    fn truncated_text_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.txt");
        std::fs::write(
            &path,
            "cwrec-checkpoint 1\nnum_users 1\nnum_items 1\ndim 2\nbackbone MF\nlayers 0\nscoring cosine\n1 2\n",
        )
        .unwrap();
        assert!(matches!(load_checkpoint(&path), Err(Error::Checkpoint(_))));
    }
}
