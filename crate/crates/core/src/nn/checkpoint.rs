//! `RSPM1` model checkpoints.
//!
//! Layout: magic `RSPM1`, u32 LE header length, JSON header, then every
//! parameter as LE `f32` in layer order (weights row-major, then biases).

use serde::{Deserialize, Serialize};

use super::Mlp;
use crate::binio::{self, ByteReader};
use crate::error::Result;

pub const MODEL_MAGIC: &[u8; 5] = b"RSPM1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelHeader {
    pub layer_dims: Vec<usize>,
    pub dropout_rate: f64,
    /// Names the normalization statistics the model expects its inputs in.
    pub norm_ref: Option<String>,
}

pub fn encode_model(net: &Mlp<f32>, norm_ref: Option<&str>, out: &mut Vec<u8>) {
    let header = ModelHeader {
        layer_dims: net.layer_dims().to_vec(),
        dropout_rate: net.dropout_rate(),
        norm_ref: norm_ref.map(str::to_owned),
    };
    binio::put_header(out, MODEL_MAGIC, &binio::header_bytes(&header));
    for p in net.param_slices() {
        binio::put_f32s(out, p);
    }
}

/// Bytes `encode_model` produces for a header of `header_len` bytes.
pub fn encoded_model_size(layer_dims: &[usize], header_len: usize) -> usize {
    let params: usize = layer_dims.windows(2).map(|w| w[0] * w[1] + w[1]).sum();
    MODEL_MAGIC.len() + 4 + header_len + 4 * params
}

pub(crate) fn decode_model(r: &mut ByteReader<'_>) -> Result<(Mlp<f32>, ModelHeader)> {
    r.expect_magic(MODEL_MAGIC)?;
    let header: ModelHeader = r.header()?;
    if header.layer_dims.len() < 2 || header.layer_dims.contains(&0) {
        return Err(r.err(format!("invalid layer dims {:?}", header.layer_dims)));
    }
    let mut weights = Vec::new();
    let mut biases = Vec::new();
    for w in header.layer_dims.windows(2) {
        weights.push(r.f32s(w[0] * w[1])?);
        biases.push(r.f32s(w[1])?);
    }
    let net = Mlp::from_parts(&header.layer_dims, weights, biases, header.dropout_rate)
        .map_err(|e| r.err(e.to_string()))?;
    Ok((net, header))
}

pub fn save_model(path: &std::path::Path, net: &Mlp<f32>, norm_ref: Option<&str>) -> Result<()> {
    let mut out = Vec::new();
    encode_model(net, norm_ref, &mut out);
    binio::write_file(path, &out)
}

pub fn load_model(path: &std::path::Path) -> Result<(Mlp<f32>, ModelHeader)> {
    let bytes = binio::read_file(path)?;
    let mut r = ByteReader::new(&bytes);
    let out = decode_model(&mut r)?;
    r.finish()?;
    Ok(out)
}

pub fn decode_model_bytes(bytes: &[u8]) -> Result<(Mlp<f32>, ModelHeader)> {
    let mut r = ByteReader::new(bytes);
    let out = decode_model(&mut r)?;
    r.finish()?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::Error;

    #[test]
    fn round_trip_and_size() {
        let net = Mlp::<f32>::new(&[6, 16, 16, 4], 3)
            .unwrap()
            .with_dropout(0.1)
            .unwrap();
        let mut bytes = Vec::new();
        encode_model(&net, Some("dataset"), &mut bytes);
        let hlen = u32::from_le_bytes(bytes[5..9].try_into().unwrap()) as usize;
        assert_eq!(bytes.len(), encoded_model_size(net.layer_dims(), hlen));
        let (back, header) = decode_model_bytes(&bytes).unwrap();
        assert_eq!(back, net);
        assert_eq!(header.norm_ref.as_deref(), Some("dataset"));
    }

    #[test]
    fn truncation_reports_offset() {
        let net = Mlp::<f32>::new(&[2, 3, 1], 0).unwrap();
        let mut bytes = Vec::new();
        encode_model(&net, None, &mut bytes);
        bytes.truncate(bytes.len() - 2);
        match decode_model_bytes(&bytes) {
            Err(Error::Format { offset, .. }) => assert!(offset > 9),
            other => panic!("expected format error, got {other:?}"),
        }
    }
}
