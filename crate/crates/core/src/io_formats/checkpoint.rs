use serde::{Deserialize, Serialize};

use super::kernel_json::json_error;
use crate::error::{Error, Result};
use crate::integral_training::{MlpCheckpoint, TrainingMeta};
use crate::tensor_math::Mlp;

pub const CHECKPOINT_MAGIC: &[u8] = b"NFCONV1\n";

#[derive(Serialize, Deserialize)]
struct Header {
    widths: Vec<usize>,
    activation: String,
    order: usize,
    kernel_dim: usize,
    din: usize,
    dout: usize,
    domain_lo: Vec<f64>,
    domain_hi: Vec<f64>,
    norm_shift: Vec<f64>,
    norm_scale: Vec<f64>,
    input_scale: f64,
    seed: u64,
    training: TrainingMeta,
}

const ACTIVATION: &str = "swish";

/// Serialises a checkpoint: magic line, JSON header line, then every layer's
/// row-major weights followed by its bias as little-endian 32-bit floats.
pub fn write_checkpoint(ckpt: &MlpCheckpoint) -> Vec<u8> {
    let header = Header {
        widths: ckpt.mlp.widths(),
        activation: ACTIVATION.into(),
        order: ckpt.order,
        kernel_dim: ckpt.kernel_dim,
        din: ckpt.din(),
        dout: ckpt.dout(),
        domain_lo: ckpt.domain_lo.clone(),
        domain_hi: ckpt.domain_hi.clone(),
        norm_shift: ckpt.norm_shift.clone(),
        norm_scale: ckpt.norm_scale.clone(),
        input_scale: ckpt.input_scale,
        seed: ckpt.meta.seed,
        training: ckpt.meta.clone(),
    };
    let json = serde_json::to_string(&header).expect("header serialises");
    let mut out = Vec::with_capacity(
        CHECKPOINT_MAGIC.len() + json.len() + 1 + 4 * ckpt.mlp.parameter_count(),
    );
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(json.as_bytes());
    out.push(b'\n');
    for block in ckpt.mlp.parameters() {
        for &p in block {
            out.extend_from_slice(&(p as f32).to_le_bytes());
        }
    }
    out
}

pub fn read_checkpoint(bytes: &[u8]) -> Result<MlpCheckpoint> {
    if !bytes.starts_with(CHECKPOINT_MAGIC) {
        let shown = String::from_utf8_lossy(&bytes[..bytes.len().min(CHECKPOINT_MAGIC.len())]);
        return Err(Error::Version(format!(
            "expected checkpoint magic \"NFCONV1\", found {:?}",
            shown.trim_end()
        )));
    }
    let start = CHECKPOINT_MAGIC.len();
    let end = bytes[start..]
        .iter()
        .position(|&b| b == b'\n')
        .map(|p| start + p)
        .ok_or_else(|| Error::parse(bytes.len(), "checkpoint header is not terminated"))?;
    let text = std::str::from_utf8(&bytes[start..end])
        .map_err(|e| Error::parse(start + e.valid_up_to(), "header is not UTF-8"))?;
    let header: Header = serde_json::from_str(text).map_err(|e| match json_error(text, e) {
        Error::Parse { offset, message } => Error::parse(start + offset, message),
        other => other,
    })?;
    if header.activation != ACTIVATION {
        return Err(Error::Format(format!(
            "unsupported activation {:?}",
            header.activation
        )));
    }
    if header.widths.len() < 2 {
        return Err(Error::Format("checkpoint needs at least one layer".into()));
    }
    if header.widths.first() != Some(&header.din) || header.widths.last() != Some(&header.dout) {
        return Err(Error::Format("din/dout disagree with layer widths".into()));
    }

    let payload = &bytes[end + 1..];
    let mut floats = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64);
    let expected: usize = header
        .widths
        .windows(2)
        .map(|w| w[0].saturating_mul(w[1]).saturating_add(w[1]))
        .fold(0usize, usize::saturating_add);
    let needed = expected.saturating_mul(4);
    if payload.len() != needed {
        return Err(Error::parse(
            end + 1 + payload.len().min(needed),
            format!("expected {needed} payload bytes, found {}", payload.len()),
        ));
    }
    let mut weights = Vec::new();
    let mut biases = Vec::new();
    for w in header.widths.windows(2) {
        weights.push(floats.by_ref().take(w[0] * w[1]).collect());
        biases.push(floats.by_ref().take(w[1]).collect());
    }
    let mlp = Mlp::from_parameters(&header.widths, weights, biases)
        .map_err(|e| Error::Format(e.to_string()))?;
    let mut meta = header.training;
    meta.seed = header.seed;
    let ckpt = MlpCheckpoint {
        mlp,
        order: header.order,
        kernel_dim: header.kernel_dim,
        domain_lo: header.domain_lo,
        domain_hi: header.domain_hi,
        norm_shift: header.norm_shift,
        norm_scale: header.norm_scale,
        input_scale: header.input_scale,
        meta,
    };
    ckpt.validate()?;
    Ok(ckpt)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    pub(crate) fn sample_checkpoint(seed: u64) -> MlpCheckpoint {
        let mut mlp = Mlp::new(&[2, 5, 3, 1], &mut seeded(seed, 0)).unwrap();
        mlp.round_to_f32();
        MlpCheckpoint {
            mlp,
            order: 2,
            kernel_dim: 2,
            domain_lo: vec![-0.4, -0.4],
            domain_hi: vec![1.4, 1.4],
            norm_shift: vec![0.25],
            norm_scale: vec![0.5],
            input_scale: 4.0,
            meta: TrainingMeta {
                w1: 0.025,
                w2: 0.0125,
                phase1_iterations: 10,
                phase2_iterations: 2,
                batch_size: 8,
                mc_samples: 4,
                seed,
                final_loss: 1.5e-3,
            },
        }
    }

    #[test]
    fn write_read_identity() {
        let c = sample_checkpoint(3);
        let bytes = write_checkpoint(&c);
        assert!(bytes.starts_with(b"NFCONV1\n{"));
        assert_eq!(read_checkpoint(&bytes).unwrap(), c);
    }

    #[test]
    fn payload_is_little_endian_in_layer_order() {
        let c = sample_checkpoint(4);
        let bytes = write_checkpoint(&c);
        let n = c.mlp.parameter_count();
        let payload = &bytes[bytes.len() - 4 * n..];
        let first_weight = c.mlp.layers()[0].weights()[(0, 1)] as f32;
        assert_eq!(&payload[4..8], &first_weight.to_le_bytes());
        let last_bias = c.mlp.layers()[2].bias()[0] as f32;
        assert_eq!(&payload[4 * n - 4..], &last_bias.to_le_bytes());
    }

    #[test]
    fn golden_bytes_decode() {
        // One 1->1 layer: weight 2.0, bias -0.5, written byte by byte.
        let mut bytes = b"NFCONV1\n".to_vec();
        bytes.extend_from_slice(
            br#"{"widths":[1,1],"activation":"swish","order":1,"kernel_dim":1,"din":1,"dout":1,"domain_lo":[0],"domain_hi":[1],"norm_shift":[0],"norm_scale":[1],"input_scale":1,"seed":9,"training":{"w1":0.025,"w2":0.0125,"phase1_iterations":0,"phase2_iterations":0,"batch_size":1,"mc_samples":1,"seed":9,"final_loss":0}}"#,
        );
        bytes.push(b'\n');
        bytes.extend_from_slice(&[0x00, 0x00, 0x00, 0x40, 0x00, 0x00, 0x00, 0xbf]);
        let c = read_checkpoint(&bytes).unwrap();
        assert_eq!(c.mlp.layers()[0].weights()[(0, 0)], 2.0);
        assert_eq!(c.mlp.layers()[0].bias()[0], -0.5);
        assert_eq!(c.meta.seed, 9);
    }

    #[test]
    fn corrupted_magic_is_a_version_error() {
        let mut bytes = write_checkpoint(&sample_checkpoint(1));
        bytes[6] = b'2';
        assert!(matches!(read_checkpoint(&bytes), Err(Error::Version(_))));
        assert!(matches!(read_checkpoint(b""), Err(Error::Version(_))));
    }

    #[test]
    fn truncation_and_bad_headers_are_errors() {
        let bytes = write_checkpoint(&sample_checkpoint(1));
        assert!(matches!(
            read_checkpoint(&bytes[..bytes.len() - 3]),
            Err(Error::Parse { .. })
        ));
        let mut longer = bytes.clone();
        longer.push(0);
        assert!(matches!(read_checkpoint(&longer), Err(Error::Parse { .. })));
        assert!(matches!(
            read_checkpoint(b"NFCONV1\n{\"widths\""),
            Err(Error::Parse { .. })
        ));
        match read_checkpoint(b"NFCONV1\n{\"widths\": x}\n") {
            Err(Error::Parse { offset, .. }) => assert_eq!(offset, 19),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn invalid_normalisation_is_rejected() {
        let mut c = sample_checkpoint(2);
        c.norm_scale = vec![0.0];
        assert!(read_checkpoint(&write_checkpoint(&c)).is_err());
    }
}
