//! Checkpoint files: a text header, a parameter manifest and a raw
//! little-endian f32 payload.
//!
//! ```text
//! ABDNMT1
//! key=value        (model configuration)
//!
//! name rows cols byte-offset
//!
//! <payload>
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::model::Model;
use crate::model::{init_model, param_manifest, ModelConfig};
use crate::numcore::Tensor2;

pub const MAGIC: &str = "ABDNMT1";

fn format_err(path: &Path, msg: impl Into<String>) -> Error {
    Error::Format {
        path: path.to_path_buf(),
        msg: msg.into(),
    }
}

/// `key=value` pairs describing a model configuration.
pub fn config_entries(c: &ModelConfig) -> Vec<(&'static str, String)> {
    vec![
        ("architecture", c.architecture.to_string()),
        ("src_vocab", c.src_vocab.to_string()),
        ("tgt_vocab", c.tgt_vocab.to_string()),
        ("embed_dim", c.embed_dim.to_string()),
        ("hidden_dim", c.hidden_dim.to_string()),
        ("attn_dim", c.attn_dim.to_string()),
        ("readout_dim", c.readout_dim.to_string()),
        ("lambda", c.lambda.to_string()),
        ("detach_backward_trace", c.detach_backward_trace.to_string()),
        (
            "share_target_embeddings",
            c.share_target_embeddings.to_string(),
        ),
        ("dropout", c.dropout.to_string()),
        ("init_scale", c.init_scale.to_string()),
        ("max_len_factor", c.max_len_factor.to_string()),
        ("max_len_offset", c.max_len_offset.to_string()),
        ("precision", "f32".to_string()),
    ]
}

fn parse_config(path: &Path, meta: &BTreeMap<String, String>) -> Result<ModelConfig> {
    fn get<T: std::str::FromStr>(
        path: &Path,
        meta: &BTreeMap<String, String>,
        key: &str,
    ) -> Result<T> {
        let raw = meta
            .get(key)
            .ok_or_else(|| format_err(path, format!("missing header key `{key}`")))?;
        raw.parse()
            .map_err(|_| format_err(path, format!("bad value `{raw}` for `{key}`")))
    }
    if let Some(p) = meta.get("precision") {
        if p != "f32" {
            return Err(format_err(path, format!("unsupported precision `{p}`")));
        }
    }
    let c = ModelConfig {
        architecture: get(path, meta, "architecture")?,
        src_vocab: get(path, meta, "src_vocab")?,
        tgt_vocab: get(path, meta, "tgt_vocab")?,
        embed_dim: get(path, meta, "embed_dim")?,
        hidden_dim: get(path, meta, "hidden_dim")?,
        attn_dim: get(path, meta, "attn_dim")?,
        readout_dim: get(path, meta, "readout_dim")?,
        lambda: get(path, meta, "lambda")?,
        detach_backward_trace: get(path, meta, "detach_backward_trace")?,
        share_target_embeddings: get(path, meta, "share_target_embeddings")?,
        dropout: get(path, meta, "dropout")?,
        init_scale: get(path, meta, "init_scale")?,
        max_len_factor: get(path, meta, "max_len_factor")?,
        max_len_offset: get(path, meta, "max_len_offset")?,
    };
    c.validate().map_err(|e| format_err(path, e.to_string()))?;
    Ok(c)
}

/// Serializes a model to bytes.
pub fn to_bytes(model: &Model<f32>) -> Vec<u8> {
    let mut head = format!("{MAGIC}\n");
    for (k, v) in config_entries(&model.config) {
        head.push_str(&format!("{k}={v}\n"));
    }
    head.push('\n');
    let mut offset = 0usize;
    for p in model.store.iter() {
        head.push_str(&format!(
            "{} {} {} {}\n",
            p.name,
            p.value.rows(),
            p.value.cols(),
            offset
        ));
        offset += 4 * p.value.len();
    }
    head.push('\n');
    let mut out = head.into_bytes();
    out.reserve(offset);
    for p in model.store.iter() {
        for &x in p.value.data() {
            out.extend_from_slice(&x.to_le_bytes());
        }
    }
    out
}

pub fn save(model: &Model<f32>, path: &Path) -> Result<()> {
    let bytes = to_bytes(model);
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&bytes).map_err(|e| Error::io(path, e))
}

fn next_line<'a>(path: &Path, bytes: &'a [u8], pos: &mut usize) -> Result<&'a str> {
    let rest = &bytes[*pos..];
    let end = rest
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| format_err(path, "truncated header"))?;
    *pos += end + 1;
    std::str::from_utf8(&rest[..end]).map_err(|_| format_err(path, "header is not UTF-8"))
}

/// Reads only the header and manifest.
pub fn read_header(
    path: &Path,
    bytes: &[u8],
) -> Result<(ModelConfig, Vec<(String, usize, usize, usize)>, usize)> {
    let mut pos = 0;
    if next_line(path, bytes, &mut pos)? != MAGIC {
        return Err(format_err(
            path,
            format!("not a checkpoint (expected `{MAGIC}` header)"),
        ));
    }
    let mut meta = BTreeMap::new();
    loop {
        let line = next_line(path, bytes, &mut pos)?;
        if line.is_empty() {
            break;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| format_err(path, format!("bad header line `{line}`")))?;
        meta.insert(k.to_string(), v.to_string());
    }
    let config = parse_config(path, &meta)?;
    let mut manifest = Vec::new();
    loop {
        let line = next_line(path, bytes, &mut pos)?;
        if line.is_empty() {
            break;
        }
        let f: Vec<&str> = line.split(' ').collect();
        let num = |s: &str| {
            s.parse::<usize>()
                .map_err(|_| format_err(path, format!("bad manifest line `{line}`")))
        };
        if f.len() != 4 {
            return Err(format_err(path, format!("bad manifest line `{line}`")));
        }
        manifest.push((f[0].to_string(), num(f[1])?, num(f[2])?, num(f[3])?));
    }
    Ok((config, manifest, pos))
}

pub fn from_bytes(path: &Path, bytes: &[u8]) -> Result<Model<f32>> {
    let (config, manifest, start) = read_header(path, bytes)?;
    let expected = param_manifest(&config);
    if manifest.len() != expected.len() {
        return Err(format_err(
            path,
            format!(
                "manifest lists {} parameters, configuration declares {}",
                manifest.len(),
                expected.len()
            ),
        ));
    }
    let payload = &bytes[start..];
    let mut offset = 0;
    for ((name, rows, cols, off), (ename, _, erows, ecols)) in manifest.iter().zip(&expected) {
        if name != ename || (rows, cols) != (erows, ecols) {
            return Err(format_err(
                path,
                format!("manifest entry `{name}` {rows}x{cols} does not match `{ename}` {erows}x{ecols}"),
            ));
        }
        if *off != offset {
            return Err(format_err(
                path,
                format!("offset of `{name}` is {off}, expected {offset}"),
            ));
        }
        offset += 4 * rows * cols;
    }
    if payload.len() != offset {
        return Err(format_err(
            path,
            format!(
                "payload has {} bytes, manifest needs {offset}",
                payload.len()
            ),
        ));
    }
    let mut model: Model<f32> = init_model(&config, 0)?;
    for (id, (_, rows, cols, off)) in model
        .store
        .ids()
        .collect::<Vec<_>>()
        .into_iter()
        .zip(&manifest)
    {
        let data = payload[*off..*off + 4 * rows * cols]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        let t = Tensor2::from_vec(*rows, *cols, data)?;
        if !t.all_finite() {
            return Err(format_err(path, "payload holds non-finite values"));
        }
        model.store.get_mut(id).value = t;
    }
    Ok(model)
}

pub fn load(path: &Path) -> Result<Model<f32>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    from_bytes(path, &bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Architecture;

    fn model(arch: Architecture) -> Model<f32> {
        let mut c = ModelConfig::small(9, 11, 4, 5).with_architecture(arch);
        c.lambda = 0.35;
        init_model(&c, 7).unwrap()
    }

    #[test]
    fn round_trip_is_bit_identical() {
        for arch in [Architecture::Abd, Architecture::L2r, Architecture::R2l] {
            let m = model(arch);
            let bytes = to_bytes(&m);
            let back = from_bytes(Path::new("x"), &bytes).unwrap();
            assert_eq!(back.config, m.config);
            assert_eq!(back.store, m.store);
            assert_eq!(to_bytes(&back), bytes);
        }
    }

    #[test]
    fn header_is_readable_text() {
        let bytes = to_bytes(&model(Architecture::Abd));
        let text = String::from_utf8_lossy(&bytes);
        assert!(text.starts_with("ABDNMT1\narchitecture=abd\n"));
        assert!(text.contains("lambda=0.35\n"));
        assert!(text.contains("\n\nenc.src_emb 9 4 0\n"));
    }

    #[test]
    fn corrupt_files_are_format_errors() {
        let bytes = to_bytes(&model(Architecture::Abd));
        let p = Path::new("m.ckpt");
        assert!(matches!(
            from_bytes(p, b"nope\n"),
            Err(Error::Format { .. })
        ));
        assert!(matches!(
            from_bytes(p, &bytes[..bytes.len() - 4]),
            Err(Error::Format { .. })
        ));
        let text = String::from_utf8_lossy(&bytes).replace("hidden_dim=5", "hidden_dim=6");
        let mut changed = text.as_bytes()[..text.find("\n\n").unwrap()].to_vec();
        changed.extend_from_slice(&bytes[changed.len()..]);
        assert!(matches!(from_bytes(p, &changed), Err(Error::Format { .. })));
    }
}
