//! Named tensor files: a JSON header of names, shapes and byte offsets followed
//! by little-endian f32 payloads (the safetensors layout).

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use safetensors::tensor::TensorView;
use safetensors::{Dtype, SafeTensors};

use crate::error::IoError;
use crate::fusion::Tensor;

const FORMAT_KEY: &str = "format";
const FORMAT_VALUE: &str = "detgeom-tensors";

/// Serialized bytes. Values are narrowed to f32; the output depends only on
/// the map contents.
pub fn tensor_file_bytes(tensors: &BTreeMap<String, Tensor>) -> Result<Vec<u8>, String> {
    let payloads: Vec<(String, Vec<usize>, Vec<u8>)> = tensors
        .iter()
        .map(|(n, t)| {
            let bytes = t.data.iter().flat_map(|&v| (v as f32).to_le_bytes()).collect();
            (n.clone(), t.shape.clone(), bytes)
        })
        .collect();
    let views = payloads
        .iter()
        .map(|(n, s, b)| TensorView::new(Dtype::F32, s.clone(), b).map(|v| (n.as_str(), v)))
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| e.to_string())?;
    let meta = HashMap::from([(FORMAT_KEY.to_string(), FORMAT_VALUE.to_string())]);
    safetensors::serialize(views, Some(meta)).map_err(|e| e.to_string())
}

pub fn write_tensor_file(path: &Path, tensors: &BTreeMap<String, Tensor>) -> Result<(), IoError> {
    let bytes = tensor_file_bytes(tensors).map_err(|m| IoError::parse(path, m))?;
    std::fs::write(path, bytes).map_err(|e| IoError::io(path, e))
}

pub fn parse_tensor_bytes(bytes: &[u8], path: &Path) -> Result<BTreeMap<String, Tensor>, IoError> {
    let st = SafeTensors::deserialize(bytes).map_err(|e| IoError::parse(path, e.to_string()))?;
    let mut out = BTreeMap::new();
    for (name, view) in st.tensors() {
        if view.dtype() != Dtype::F32 {
            return Err(IoError::parse(path, format!("tensor {name}: dtype {:?}, expected F32", view.dtype())));
        }
        let data: Vec<f64> = view
            .data()
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
            .collect();
        if data.iter().any(|v| !v.is_finite()) {
            return Err(IoError::parse(path, format!("tensor {name}: non-finite value")));
        }
        out.insert(name, Tensor { shape: view.shape().to_vec(), data });
    }
    Ok(out)
}

pub fn read_tensor_file(path: &Path) -> Result<BTreeMap<String, Tensor>, IoError> {
    let bytes = std::fs::read(path).map_err(|e| IoError::io(path, e))?;
    parse_tensor_bytes(&bytes, path)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> BTreeMap<String, Tensor> {
        BTreeMap::from([
            ("b".to_string(), Tensor::new(vec![2, 1], vec![0.5, -3.25]).unwrap()),
            ("a".to_string(), Tensor::new(vec![3], vec![1.0, 2.0, 1e-3 as f32 as f64]).unwrap()),
        ])
    }

    #[test]
    fn round_trip_is_exact_for_f32_values() {
        let bytes = tensor_file_bytes(&sample()).unwrap();
        assert_eq!(parse_tensor_bytes(&bytes, Path::new("t")).unwrap(), sample());
    }

    #[test]
    fn bytes_are_deterministic() {
        assert_eq!(tensor_file_bytes(&sample()).unwrap(), tensor_file_bytes(&sample()).unwrap());
    }

    #[test]
    fn header_lists_names_shapes_offsets() {
        let bytes = tensor_file_bytes(&sample()).unwrap();
        let n = u64::from_le_bytes(bytes[..8].try_into().unwrap()) as usize;
        let header: serde_json::Value = serde_json::from_slice(&bytes[8..8 + n]).unwrap();
        assert_eq!(header["a"]["dtype"], "F32");
        assert_eq!(header["a"]["shape"], serde_json::json!([3]));
        assert!(header["b"]["data_offsets"].is_array());
        assert_eq!(header["__metadata__"]["format"], "detgeom-tensors");
    }

    #[test]
    fn rejects_garbage() {
        assert!(parse_tensor_bytes(b"not a tensor file", Path::new("t")).is_err());
    }
}
