//! Model checkpoints.
//!
//! Layout: magic `CKP1`, a little-endian `u32` metadata length, the metadata
//! as UTF-8 `key=value` lines, then every layer's weights (row-major,
//! `outputs x inputs`) followed by its biases, as little-endian `f64`.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2};

use crate::diffusion::mlp::{Dense, MlpConfig, MlpDenoiser, ModelMeta};
use crate::diffusion::schedule::NoiseSchedule;
use crate::error::{Error, Result};
use crate::field::Shape;

pub const CHECKPOINT_MAGIC: [u8; 4] = *b"CKP1";

fn join(v: &[usize]) -> String {
    v.iter().map(usize::to_string).collect::<Vec<_>>().join(",")
}

pub fn encode_checkpoint(model: &MlpDenoiser) -> Vec<u8> {
    let cfg = model.config();
    let meta = model.meta();
    let mut text = String::new();
    let mut kv = |k: &str, v: String| {
        text.push_str(k);
        text.push('=');
        text.push_str(&v);
        text.push('\n');
    };
    kv("format", "mlp".into());
    kv("height", cfg.shape.height.to_string());
    kv("width", cfg.shape.width.to_string());
    kv("channels", cfg.shape.channels.to_string());
    kv("num_cond", cfg.num_cond.to_string());
    kv("embed_dim", cfg.embed_dim.to_string());
    kv("sigma_data", format!("{:e}", cfg.sigma_data));
    kv("cond_scale", format!("{:e}", cfg.cond_scale));
    kv("layers", join(&model.layer_sizes()));
    kv("activation", "silu".into());
    kv("level", meta.level.to_string());
    kv("num_levels", meta.num_levels.to_string());
    kv("sigma_min", format!("{:e}", meta.schedule.sigma_min));
    kv("sigma_max", format!("{:e}", meta.schedule.sigma_max));
    kv("rho", format!("{:e}", meta.schedule.rho));
    kv("num_steps", meta.schedule.num_steps.to_string());

    let mut out = Vec::new();
    out.extend_from_slice(&CHECKPOINT_MAGIC);
    out.extend_from_slice(&(text.len() as u32).to_le_bytes());
    out.extend_from_slice(text.as_bytes());
    for l in model.layers() {
        for v in l.weight.iter().chain(l.bias.iter()) {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

fn get<'a>(map: &'a BTreeMap<String, String>, key: &str) -> Result<&'a str> {
    map.get(key).map(String::as_str).ok_or_else(|| Error::Header(format!("missing key `{key}`")))
}

fn parse<T: std::str::FromStr>(map: &BTreeMap<String, String>, key: &str) -> Result<T> {
    get(map, key)?.parse().map_err(|_| Error::Header(format!("bad value for `{key}`")))
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<MlpDenoiser> {
    if bytes.len() < 8 || bytes[..4] != CHECKPOINT_MAGIC {
        return Err(Error::Header("not a CKP1 checkpoint".into()));
    }
    let meta_len = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    let meta_bytes = bytes
        .get(8..8 + meta_len)
        .ok_or(Error::Truncated { expected: 8 + meta_len, found: bytes.len() })?;
    let text = std::str::from_utf8(meta_bytes).map_err(|_| Error::Header("metadata is not UTF-8".into()))?;
    let map: BTreeMap<String, String> = text
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            l.split_once('=')
                .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
                .ok_or_else(|| Error::Header(format!("bad metadata line `{l}`")))
        })
        .collect::<Result<_>>()?;
    if get(&map, "format")? != "mlp" || get(&map, "activation")? != "silu" {
        return Err(Error::Header("unsupported model format".into()));
    }
    let shape = Shape::new(parse(&map, "height")?, parse(&map, "width")?, parse(&map, "channels")?)
        .map_err(|e| Error::Header(e.to_string()))?;
    let sizes: Vec<usize> = get(&map, "layers")?
        .split(',')
        .map(|s| s.trim().parse().map_err(|_| Error::Header("bad layer size".into())))
        .collect::<Result<_>>()?;
    if sizes.len() < 2 {
        return Err(Error::Header("need at least one layer".into()));
    }
    let config = MlpConfig {
        shape,
        num_cond: parse(&map, "num_cond")?,
        hidden: sizes[1..sizes.len() - 1].to_vec(),
        embed_dim: parse(&map, "embed_dim")?,
        sigma_data: parse(&map, "sigma_data")?,
        cond_scale: parse(&map, "cond_scale")?,
    };
    let schedule = NoiseSchedule::new(
        parse(&map, "sigma_min")?,
        parse(&map, "sigma_max")?,
        parse(&map, "rho")?,
        parse(&map, "num_steps")?,
    )
    .map_err(|e| Error::Header(e.to_string()))?;
    let meta = ModelMeta { level: parse(&map, "level")?, num_levels: parse(&map, "num_levels")?, schedule };

    let payload = &bytes[8 + meta_len..];
    let expected: usize = sizes.windows(2).map(|w| (w[0] * w[1] + w[1]) * 8).sum();
    if payload.len() < expected {
        return Err(Error::Truncated { expected, found: payload.len() });
    }
    if payload.len() > expected {
        return Err(Error::Header(format!("{} trailing bytes", payload.len() - expected)));
    }
    let mut values = payload.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap()));
    let layers = sizes
        .windows(2)
        .map(|w| {
            let weight = Array2::from_shape_fn((w[1], w[0]), |_| values.next().unwrap());
            let bias = Array1::from_shape_fn(w[1], |_| values.next().unwrap());
            Dense { weight, bias }
        })
        .collect();
    MlpDenoiser::from_layers(config, layers, meta).map_err(|e| Error::Header(e.to_string()))
}

pub fn save_checkpoint(model: &MlpDenoiser, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, encode_checkpoint(model))?;
    Ok(())
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<MlpDenoiser> {
    decode_checkpoint(&fs::read(path)?)
}
