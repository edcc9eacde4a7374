//! Checkpoint files: a plain-text header followed by little-endian `f64` blocks.
//!
//! ```text
//! adamve-checkpoint 1
//! meta <key> <value>
//! block <name> tabular <width> <height> <outputs> <pinned> <count>
//! block <name> mlp <sizes> <bias> <input_scale> <pinned> <count>
//! data
//! <count * 8 bytes per block, in header order>
//! ```
//!
//! `<sizes>` and `<pinned>` are comma-separated lists; an empty pinned list is
//! written as `-`. Meta values run to the end of the line.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use super::{Approximator, Body, Mlp};
use crate::error::{Error, Result};

const MAGIC: &str = "adamve-checkpoint 1";

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Checkpoint {
    pub meta: BTreeMap<String, String>,
    pub blocks: Vec<(String, Approximator)>,
}

impl Checkpoint {
    pub fn block(&self, name: &str) -> Option<&Approximator> {
        self.blocks.iter().find(|(n, _)| n == name).map(|(_, a)| a)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut header = String::from(MAGIC);
        header.push('\n');
        for (k, v) in &self.meta {
            header.push_str(&format!("meta {k} {v}\n"));
        }
        for (name, a) in &self.blocks {
            let pinned: Vec<String> = a
                .pinned()
                .iter()
                .enumerate()
                .filter(|(_, &p)| p)
                .map(|(i, _)| i.to_string())
                .collect();
            let pinned = if pinned.is_empty() {
                "-".to_string()
            } else {
                pinned.join(",")
            };
            let count = a.params().len();
            match a.body() {
                Body::Tabular { width, height, .. } => header.push_str(&format!(
                    "block {name} tabular {width} {height} {} {pinned} {count}\n",
                    a.outputs()
                )),
                Body::Mlp { net, input_scale } => {
                    let sizes: Vec<String> = net.sizes().iter().map(usize::to_string).collect();
                    header.push_str(&format!(
                        "block {name} mlp {} {} {input_scale:e} {pinned} {count}\n",
                        sizes.join(","),
                        u8::from(net.has_bias())
                    ));
                }
            }
        }
        header.push_str("data\n");
        let mut bytes = header.into_bytes();
        for (_, a) in &self.blocks {
            for p in a.params() {
                bytes.extend_from_slice(&p.to_le_bytes());
            }
        }
        bytes
    }

    pub fn from_bytes(bytes: &[u8]) -> std::result::Result<Self, String> {
        let marker = b"\ndata\n";
        let split = bytes
            .windows(marker.len())
            .position(|w| w == marker)
            .ok_or("missing `data` marker")?;
        let header = std::str::from_utf8(&bytes[..split]).map_err(|e| e.to_string())?;
        let mut data = &bytes[split + marker.len()..];
        let mut lines = header.lines();
        if lines.next() != Some(MAGIC) {
            return Err("not an adamve checkpoint".into());
        }
        let mut ckpt = Checkpoint::default();
        for line in lines {
            let mut parts = line.splitn(3, ' ');
            match parts.next() {
                Some("meta") => {
                    let key = parts.next().ok_or("meta line without key")?;
                    let value = parts.next().unwrap_or("");
                    ckpt.meta.insert(key.to_string(), value.to_string());
                }
                Some("block") => {
                    let fields: Vec<&str> = line.split(' ').collect();
                    let (name, approx, count) = parse_block(&fields)?;
                    let need = count * 8;
                    if data.len() < need {
                        return Err(format!("block `{name}` truncated"));
                    }
                    let params: Vec<f64> = data[..need]
                        .chunks_exact(8)
                        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                        .collect();
                    data = &data[need..];
                    let mut approx = approx;
                    approx.params_mut().copy_from_slice(&params);
                    ckpt.blocks.push((name, approx));
                }
                _ => return Err(format!("unrecognised header line `{line}`")),
            }
        }
        if !data.is_empty() {
            return Err(format!("{} trailing bytes", data.len()));
        }
        Ok(ckpt)
    }
}

fn parse_list(s: &str) -> std::result::Result<Vec<usize>, String> {
    if s == "-" {
        return Ok(Vec::new());
    }
    s.split(',')
        .map(|x| x.parse::<usize>().map_err(|e| format!("`{x}`: {e}")))
        .collect()
}

fn num<T: std::str::FromStr>(s: &str) -> std::result::Result<T, String>
where
    T::Err: std::fmt::Display,
{
    s.parse::<T>().map_err(|e| format!("`{s}`: {e}"))
}

fn parse_block(f: &[&str]) -> std::result::Result<(String, Approximator, usize), String> {
    let name = f.get(1).ok_or("block without name")?.to_string();
    let approx = match (f.get(2).copied(), f.len()) {
        (Some("tabular"), 8) => {
            let a = Approximator::tabular_with_size(num(f[3])?, num(f[4])?, num(f[5])?);
            a.with_pinned(parse_list(f[6])?).map_err(|e| e.to_string())?
        }
        (Some("mlp"), 8) => {
            let sizes = parse_list(f[3])?;
            let bias = match f[4] {
                "0" => false,
                "1" => true,
                other => return Err(format!("bad bias flag `{other}`")),
            };
            let net = Mlp::zeros(&sizes, bias).map_err(|e| e.to_string())?;
            Approximator::from_mlp(net, num(f[5])?)
                .with_pinned(parse_list(f[6])?)
                .map_err(|e| e.to_string())?
        }
        _ => return Err(format!("malformed block line `{}`", f.join(" "))),
    };
    let count: usize = num(f[7])?;
    if count != approx.params().len() {
        return Err(format!(
            "block `{name}` declares {count} parameters, shape needs {}",
            approx.params().len()
        ));
    }
    Ok((name, approx, count))
}

pub fn write_checkpoint(path: &Path, ckpt: &Checkpoint) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent)?;
        }
    }
    fs::write(path, ckpt.to_bytes())?;
    Ok(())
}

pub fn read_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes = fs::read(path)?;
    Checkpoint::from_bytes(&bytes).map_err(|reason| Error::Checkpoint {
        path: path.to_path_buf(),
        reason,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{GridSpec, GridState};
    use crate::rng::{stream, Stream};

    #[test]
    fn round_trip_preserves_every_bit() {
        let spec = GridSpec::four_room();
        let mut tab = Approximator::tabular(&spec, 12).with_pinned([0, 6]).unwrap();
        tab.set_value(GridState::new(3, 3), 1, -0.125).unwrap();
        tab.set_value(GridState::new(18, 0), 11, 1e-300).unwrap();
        let mlp = Approximator::mlp(&spec, &[7, 3], 5, &mut stream(9, Stream::NetworkInit)).unwrap();
        let mut ckpt = Checkpoint::default();
        ckpt.meta.insert("form".into(), "state-action".into());
        ckpt.meta.insert("note".into(), "two words".into());
        ckpt.blocks.push(("online".into(), tab));
        ckpt.blocks.push(("net".into(), mlp));
        let back = Checkpoint::from_bytes(&ckpt.to_bytes()).unwrap();
        assert_eq!(back, ckpt);
    }

    #[test]
    fn corrupt_files_are_rejected() {
        let spec = GridSpec::four_room();
        let mut ckpt = Checkpoint::default();
        ckpt.blocks.push(("q".into(), Approximator::tabular(&spec, 5)));
        let bytes = ckpt.to_bytes();
        assert!(Checkpoint::from_bytes(&bytes[..bytes.len() - 3]).is_err());
        assert!(Checkpoint::from_bytes(b"hello\ndata\n").is_err());
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(Checkpoint::from_bytes(&extra).is_err());
    }

    #[test]
    fn header_is_plain_text() {
        let spec = GridSpec::four_room();
        let mut ckpt = Checkpoint::default();
        ckpt.blocks.push(("q".into(), Approximator::tabular(&spec, 5)));
        let bytes = ckpt.to_bytes();
        let text = String::from_utf8_lossy(&bytes[..60]);
        assert!(text.starts_with("adamve-checkpoint 1\nblock q tabular 19 19 5 - 1805\ndata\n"));
    }
}
