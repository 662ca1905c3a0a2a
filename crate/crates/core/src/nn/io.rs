//! Binary parameter files: `NSCN`, u32 version, u32 layer count, one header
//! per layer (kind u8, padding u8, three u32 dims), then for each layer its
//! weights followed by its bias as little-endian f64.

use std::io::{Read, Write};
use std::path::Path;

use super::layers::{LayerKind, LayerParams, Padding};
use crate::error::{Error, Result};
use crate::features::matrix::{read_array, read_exact};

const MAGIC: &[u8; 4] = b"NSCN";
const VERSION: u32 = 1;

fn header(kind: &LayerKind) -> (u8, u8, [u32; 3]) {
    match *kind {
        LayerKind::Conv1d {
            kernel,
            in_channels,
            filters,
            padding,
        } => {
            let pad = match padding {
                Padding::Valid => 0,
                Padding::Same => 1,
            };
            (0, pad, [kernel as u32, in_channels as u32, filters as u32])
        }
        LayerKind::Dense { input, output } => (1, 0, [input as u32, output as u32, 0]),
    }
}

pub fn write_layers(layers: &[LayerParams], mut w: impl Write) -> std::io::Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(layers.len() as u32).to_le_bytes())?;
    for l in layers {
        let (kind, pad, dims) = header(&l.kind);
        w.write_all(&[kind, pad])?;
        for d in dims {
            w.write_all(&d.to_le_bytes())?;
        }
    }
    for l in layers {
        for v in l.weights.iter().chain(&l.bias) {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn read_layers(mut r: impl Read) -> Result<Vec<LayerParams>> {
    let bad = |m: String| Error::Data(format!("parameter file: {m}"));
    let mut magic = [0u8; 4];
    read_exact(&mut r, &mut magic)?;
    if &magic != MAGIC {
        return Err(bad("bad magic".into()));
    }
    let version = u32::from_le_bytes(read_array(&mut r)?);
    if version != VERSION {
        return Err(bad(format!("unsupported version {version}")));
    }
    let n = u32::from_le_bytes(read_array(&mut r)?) as usize;
    let mut kinds = Vec::with_capacity(n.min(64));
    for i in 0..n {
        let [kind, pad] = read_array::<2>(&mut r)?;
        let mut dims = [0usize; 3];
        for d in &mut dims {
            *d = u32::from_le_bytes(read_array(&mut r)?) as usize;
        }
        let kind = match (kind, pad) {
            (0, 0 | 1) => LayerKind::Conv1d {
                kernel: dims[0],
                in_channels: dims[1],
                filters: dims[2],
                padding: if pad == 0 { Padding::Valid } else { Padding::Same },
            },
            (1, 0) => LayerKind::Dense {
                input: dims[0],
                output: dims[1],
            },
            _ => return Err(bad(format!("layer {i} has unknown kind {kind}/{pad}"))),
        };
        kinds.push(kind);
    }
    let mut layers = Vec::with_capacity(kinds.len());
    for kind in kinds {
        let mut p = LayerParams::zeros(kind);
        for v in p.weights.iter_mut().chain(p.bias.iter_mut()) {
            *v = f64::from_le_bytes(read_array(&mut r)?);
        }
        layers.push(p);
    }
    let mut rest = [0u8; 1];
    if r.read(&mut rest).map_err(|e| bad(e.to_string()))? != 0 {
        return Err(bad("trailing bytes".into()));
    }
    Ok(layers)
}

pub fn save_layers(layers: &[LayerParams], path: &Path) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = std::io::BufWriter::new(file);
    write_layers(layers, &mut w)
        .and_then(|_| w.flush())
        .map_err(|e| Error::io(path, e))
}

pub fn load_layers(path: &Path) -> Result<Vec<LayerParams>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_layers(std::io::BufReader::new(file))
}
