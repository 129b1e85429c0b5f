//! safetensors container: 8-byte little-endian header length, JSON header,
//! raw payload.

use std::collections::BTreeMap;
use std::fmt;

use serde::de::{MapAccess, Visitor};
use serde_json::Value;
use thiserror::Error;

use crate::error::{input, Result};
use crate::spectral::Matrix;

const METADATA_KEY: &str = "__metadata__";

/// Classified parse failure.
#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ParseError {
    #[error("truncated header: file has {len} bytes, at least 8 are needed for the header length")]
    TruncatedHeader { len: usize },
    #[error("header length {declared} exceeds the {available} bytes available after the length prefix")]
    HeaderTooLarge { declared: u64, available: usize },
    #[error("header is not valid UTF-8")]
    HeaderNotUtf8,
    #[error("malformed JSON header: {0}")]
    MalformedJson(String),
    #[error("malformed entry `{name}`: {reason}")]
    MalformedEntry { name: String, reason: String },
    #[error("duplicate tensor name `{name}`")]
    DuplicateName { name: String },
    #[error("tensor `{name}` has unknown dtype `{dtype}`")]
    UnknownDtype { name: String, dtype: String },
    #[error("tensor `{name}` byte range [{begin}, {end}) is outside the {payload_len}-byte payload")]
    OutOfBounds { name: String, begin: u64, end: u64, payload_len: usize },
    #[error("tensors `{first}` and `{second}` have overlapping byte ranges")]
    Overlap { first: String, second: String },
    #[error("tensor `{name}` needs {expected} bytes for its shape and dtype but its range holds {actual}")]
    ShapeMismatch { name: String, expected: u64, actual: u64 },
}

impl ParseError {
    /// Stable short code for each failure class.
    pub fn code(&self) -> &'static str {
        match self {
            ParseError::TruncatedHeader { .. } => "truncated_header",
            ParseError::HeaderTooLarge { .. } => "header_too_large",
            ParseError::HeaderNotUtf8 => "header_not_utf8",
            ParseError::MalformedJson(_) => "malformed_json",
            ParseError::MalformedEntry { .. } => "malformed_entry",
            ParseError::DuplicateName { .. } => "duplicate_name",
            ParseError::UnknownDtype { .. } => "unknown_dtype",
            ParseError::OutOfBounds { .. } => "out_of_bounds",
            ParseError::Overlap { .. } => "overlap",
            ParseError::ShapeMismatch { .. } => "shape_mismatch",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub enum Dtype {
    F64,
    F32,
    F16,
    BF16,
}

impl Dtype {
    pub fn size(self) -> usize {
        match self {
            Dtype::F64 => 8,
            Dtype::F32 => 4,
            Dtype::F16 | Dtype::BF16 => 2,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Dtype::F64 => "F64",
            Dtype::F32 => "F32",
            Dtype::F16 => "F16",
            Dtype::BF16 => "BF16",
        }
    }

    pub fn from_name(s: &str) -> Option<Dtype> {
        match s {
            "F64" => Some(Dtype::F64),
            "F32" => Some(Dtype::F32),
            "F16" => Some(Dtype::F16),
            "BF16" => Some(Dtype::BF16),
            _ => None,
        }
    }

    fn decode(self, bytes: &[u8]) -> f64 {
        match self {
            Dtype::F64 => f64::from_le_bytes(bytes.try_into().expect("8 bytes")),
            Dtype::F32 => f32::from_le_bytes(bytes.try_into().expect("4 bytes")) as f64,
            Dtype::F16 => half::f16::from_le_bytes(bytes.try_into().expect("2 bytes")).to_f64(),
            Dtype::BF16 => half::bf16::from_le_bytes(bytes.try_into().expect("2 bytes")).to_f64(),
        }
    }

    fn encode(self, v: f64, out: &mut Vec<u8>) {
        match self {
            Dtype::F64 => out.extend_from_slice(&v.to_le_bytes()),
            Dtype::F32 => out.extend_from_slice(&(v as f32).to_le_bytes()),
            Dtype::F16 => out.extend_from_slice(&half::f16::from_f64(v).to_le_bytes()),
            Dtype::BF16 => out.extend_from_slice(&half::bf16::from_f64(v).to_le_bytes()),
        }
    }
}

/// Header record of one tensor; `begin..end` is relative to the payload start.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TensorInfo {
    pub dtype: Dtype,
    pub shape: Vec<usize>,
    pub begin: usize,
    pub end: usize,
}

impl TensorInfo {
    pub fn numel(&self) -> usize {
        self.shape.iter().product()
    }
}

/// Parsed container: validated header plus the raw payload.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct TensorTable {
    tensors: BTreeMap<String, TensorInfo>,
    metadata: Option<BTreeMap<String, String>>,
    payload: Vec<u8>,
}

impl TensorTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.tensors.keys().map(String::as_str)
    }

    pub fn info(&self, name: &str) -> Option<&TensorInfo> {
        self.tensors.get(name)
    }

    pub fn tensors(&self) -> &BTreeMap<String, TensorInfo> {
        &self.tensors
    }

    pub fn metadata(&self) -> Option<&BTreeMap<String, String>> {
        self.metadata.as_ref()
    }

    pub fn set_metadata(&mut self, metadata: Option<BTreeMap<String, String>>) {
        self.metadata = metadata;
    }

    pub fn payload(&self) -> &[u8] {
        &self.payload
    }

    pub fn raw_bytes(&self, name: &str) -> Option<&[u8]> {
        self.tensors.get(name).map(|t| &self.payload[t.begin..t.end])
    }

    /// Appends a tensor encoded from 64-bit values in row-major order.
    pub fn insert(&mut self, name: &str, dtype: Dtype, shape: &[usize], values: &[f64]) -> Result<()> {
        let numel: usize = shape.iter().product();
        if numel != values.len() {
            return Err(input(format!("tensor `{name}`: shape {shape:?} needs {numel} values, got {}", values.len())));
        }
        let mut bytes = Vec::with_capacity(numel * dtype.size());
        for &v in values {
            dtype.encode(v, &mut bytes);
        }
        self.insert_raw(name, dtype, shape, &bytes)
    }

    /// Appends a tensor from already-encoded little-endian bytes.
    pub fn insert_raw(&mut self, name: &str, dtype: Dtype, shape: &[usize], bytes: &[u8]) -> Result<()> {
        if name == METADATA_KEY {
            return Err(input("`__metadata__` is reserved"));
        }
        if self.tensors.contains_key(name) {
            return Err(input(format!("duplicate tensor name `{name}`")));
        }
        let need = shape.iter().product::<usize>() * dtype.size();
        if need != bytes.len() {
            return Err(input(format!("tensor `{name}`: expected {need} bytes, got {}", bytes.len())));
        }
        let begin = self.payload.len();
        self.payload.extend_from_slice(bytes);
        let info = TensorInfo { dtype, shape: shape.to_vec(), begin, end: self.payload.len() };
        self.tensors.insert(name.to_string(), info);
        Ok(())
    }

    /// Materialises a tensor as 64-bit values in row-major order.
    pub fn tensor_f64(&self, name: &str) -> Option<Vec<f64>> {
        let t = self.tensors.get(name)?;
        let bytes = &self.payload[t.begin..t.end];
        Some(bytes.chunks_exact(t.dtype.size()).map(|c| t.dtype.decode(c)).collect())
    }

    /// Materialises a 2-D tensor as a matrix of shape `shape`.
    pub fn tensor_matrix(&self, name: &str) -> Option<Result<Matrix>> {
        let t = self.tensors.get(name)?;
        if t.shape.len() != 2 {
            return Some(Err(input(format!("tensor `{name}` has rank {}, expected 2", t.shape.len()))));
        }
        let vals = self.tensor_f64(name)?;
        Some(Matrix::from_row_major(t.shape[0], t.shape[1], &vals))
    }
}

/// Header entries in file order, rejecting duplicate keys.
struct OrderedEntries(Vec<(String, Value)>);

impl<'de> serde::Deserialize<'de> for OrderedEntries {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        struct V;
        impl<'de> Visitor<'de> for V {
            type Value = OrderedEntries;
            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("a JSON object")
            }
            fn visit_map<A: MapAccess<'de>>(self, mut map: A) -> std::result::Result<OrderedEntries, A::Error> {
                let mut out = Vec::new();
                while let Some((k, v)) = map.next_entry::<String, Value>()? {
                    out.push((k, v));
                }
                Ok(OrderedEntries(out))
            }
        }
        d.deserialize_map(V)
    }
}

fn entry_err(name: &str, reason: impl Into<String>) -> ParseError {
    ParseError::MalformedEntry { name: name.to_string(), reason: reason.into() }
}

fn as_u64(name: &str, v: &Value, what: &str) -> std::result::Result<u64, ParseError> {
    v.as_u64().ok_or_else(|| entry_err(name, format!("{what} must be a nonnegative integer")))
}

fn parse_entry(name: &str, v: &Value, payload_len: usize) -> std::result::Result<TensorInfo, ParseError> {
    let obj = v.as_object().ok_or_else(|| entry_err(name, "entry must be an object"))?;
    for k in obj.keys() {
        if !matches!(k.as_str(), "dtype" | "shape" | "data_offsets") {
            return Err(entry_err(name, format!("unexpected field `{k}`")));
        }
    }
    let dtype_s = obj
        .get("dtype")
        .ok_or_else(|| entry_err(name, "missing `dtype`"))?
        .as_str()
        .ok_or_else(|| entry_err(name, "`dtype` must be a string"))?;
    let dtype = Dtype::from_name(dtype_s).ok_or_else(|| ParseError::UnknownDtype { name: name.to_string(), dtype: dtype_s.to_string() })?;
    let shape_v = obj
        .get("shape")
        .ok_or_else(|| entry_err(name, "missing `shape`"))?
        .as_array()
        .ok_or_else(|| entry_err(name, "`shape` must be an array"))?;
    let mut shape = Vec::with_capacity(shape_v.len());
    let mut numel: u64 = 1;
    for s in shape_v {
        let d = as_u64(name, s, "shape dimension")?;
        numel = numel.checked_mul(d).ok_or_else(|| entry_err(name, "shape element count overflows"))?;
        shape.push(usize::try_from(d).map_err(|_| entry_err(name, "shape dimension too large"))?);
    }
    let offs = obj
        .get("data_offsets")
        .ok_or_else(|| entry_err(name, "missing `data_offsets`"))?
        .as_array()
        .ok_or_else(|| entry_err(name, "`data_offsets` must be an array"))?;
    if offs.len() != 2 {
        return Err(entry_err(name, "`data_offsets` must have exactly two elements"));
    }
    let begin = as_u64(name, &offs[0], "offset")?;
    let end = as_u64(name, &offs[1], "offset")?;
    if begin > end || end > payload_len as u64 {
        return Err(ParseError::OutOfBounds { name: name.to_string(), begin, end, payload_len });
    }
    let expected = numel.checked_mul(dtype.size() as u64).ok_or_else(|| entry_err(name, "byte size overflows"))?;
    if expected != end - begin {
        return Err(ParseError::ShapeMismatch { name: name.to_string(), expected, actual: end - begin });
    }
    Ok(TensorInfo { dtype, shape, begin: begin as usize, end: end as usize })
}

/// Parses and validates a complete safetensors file.
pub fn parse_safetensors(bytes: &[u8]) -> std::result::Result<TensorTable, ParseError> {
    if bytes.len() < 8 {
        return Err(ParseError::TruncatedHeader { len: bytes.len() });
    }
    let declared = u64::from_le_bytes(bytes[..8].try_into().expect("8 bytes"));
    let available = bytes.len() - 8;
    if declared > available as u64 {
        return Err(ParseError::HeaderTooLarge { declared, available });
    }
    let hlen = declared as usize;
    let header = std::str::from_utf8(&bytes[8..8 + hlen]).map_err(|_| ParseError::HeaderNotUtf8)?;
    let payload = &bytes[8 + hlen..];
    let mut de = serde_json::Deserializer::from_str(header);
    let entries: OrderedEntries = serde::Deserialize::deserialize(&mut de).map_err(|e| ParseError::MalformedJson(e.to_string()))?;
    de.end().map_err(|e| ParseError::MalformedJson(e.to_string()))?;

    let mut tensors = BTreeMap::new();
    let mut metadata = None;
    for (name, v) in entries.0 {
        if name == METADATA_KEY {
            if metadata.is_some() {
                return Err(ParseError::DuplicateName { name });
            }
            let obj = v.as_object().ok_or_else(|| entry_err(METADATA_KEY, "metadata must be an object"))?;
            let mut m = BTreeMap::new();
            for (k, val) in obj {
                let s = val.as_str().ok_or_else(|| entry_err(METADATA_KEY, format!("value of `{k}` must be a string")))?;
                m.insert(k.clone(), s.to_string());
            }
            metadata = Some(m);
            continue;
        }
        let info = parse_entry(&name, &v, payload.len())?;
        if tensors.contains_key(&name) {
            return Err(ParseError::DuplicateName { name });
        }
        tensors.insert(name, info);
    }

    let mut ranges: Vec<(&String, &TensorInfo)> = tensors.iter().filter(|(_, t)| t.end > t.begin).collect();
    ranges.sort_by_key(|(_, t)| (t.begin, t.end));
    for w in ranges.windows(2) {
        if w[0].1.end > w[1].1.begin {
            return Err(ParseError::Overlap { first: w[0].0.clone(), second: w[1].0.clone() });
        }
    }
    Ok(TensorTable { tensors, metadata, payload: payload.to_vec() })
}

/// Serialises with a canonical header: lexicographic keys, no whitespace.
pub fn write_safetensors(table: &TensorTable) -> Vec<u8> {
    let mut header = serde_json::Map::new();
    if let Some(m) = &table.metadata {
        let obj = m.iter().map(|(k, v)| (k.clone(), Value::String(v.clone()))).collect();
        header.insert(METADATA_KEY.to_string(), Value::Object(obj));
    }
    for (name, t) in &table.tensors {
        let mut e = serde_json::Map::new();
        e.insert("data_offsets".into(), Value::from(vec![t.begin as u64, t.end as u64]));
        e.insert("dtype".into(), Value::from(t.dtype.name()));
        e.insert("shape".into(), Value::from(t.shape.iter().map(|&d| d as u64).collect::<Vec<_>>()));
        header.insert(name.clone(), Value::Object(e));
    }
    let json = serde_json::to_string(&Value::Object(header)).expect("header serialises");
    let mut out = Vec::with_capacity(8 + json.len() + table.payload.len());
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(json.as_bytes());
    out.extend_from_slice(&table.payload);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn file(header: &str, payload: &[u8]) -> Vec<u8> {
        let mut v = (header.len() as u64).to_le_bytes().to_vec();
        v.extend_from_slice(header.as_bytes());
        v.extend_from_slice(payload);
        v
    }

    #[test]
    fn minimal_f32_fixture() {
        let f = file(r#"{"x":{"dtype":"F32","shape":[1],"data_offsets":[0,4]}}"#, &1.0f32.to_le_bytes());
        let t = parse_safetensors(&f).unwrap();
        assert_eq!(t.len(), 1);
        assert_eq!(t.tensor_f64("x").unwrap(), vec![1.0]);
    }

    #[test]
    fn empty_header() {
        let t = parse_safetensors(&file("{}", &[])).unwrap();
        assert!(t.is_empty());
        let back = parse_safetensors(&write_safetensors(&t)).unwrap();
        assert_eq!(back, t);
    }

    #[test]
    fn distinct_diagnostics() {
        let code = |b: &[u8]| parse_safetensors(b).unwrap_err().code();
        assert_eq!(code(&[1, 2, 3]), "truncated_header");
        let mut too_long = 100u64.to_le_bytes().to_vec();
        too_long.extend_from_slice(b"{}");
        assert_eq!(code(&too_long), "header_too_large");
        assert_eq!(code(&file("{\"a\":", &[])), "malformed_json");
        assert_eq!(code(&[2, 0, 0, 0, 0, 0, 0, 0, 0xff, 0xfe]), "header_not_utf8");
        assert_eq!(code(&file(r#"{"x":{"dtype":"I8","shape":[1],"data_offsets":[0,1]}}"#, &[0])), "unknown_dtype");
        assert_eq!(code(&file(r#"{"x":{"dtype":"F32","shape":[1],"data_offsets":[0,8]}}"#, &[0; 4])), "out_of_bounds");
        assert_eq!(code(&file(r#"{"x":{"dtype":"F32","shape":[2],"data_offsets":[0,4]}}"#, &[0; 4])), "shape_mismatch");
        assert_eq!(
            code(&file(
                r#"{"x":{"dtype":"F32","shape":[1],"data_offsets":[0,4]},"y":{"dtype":"F16","shape":[2],"data_offsets":[2,6]}}"#,
                &[0; 6]
            )),
            "overlap"
        );
        assert_eq!(
            code(&file(
                r#"{"x":{"dtype":"F32","shape":[1],"data_offsets":[0,4]},"x":{"dtype":"F32","shape":[1],"data_offsets":[4,8]}}"#,
                &[0; 8]
            )),
            "duplicate_name"
        );
        assert_eq!(code(&file(r#"{"x":{"dtype":"F32","shape":[1]}}"#, &[0; 4])), "malformed_entry");
        assert_eq!(code(&file("[]", &[])), "malformed_json");
    }

    #[test]
    fn canonical_header_and_metadata() {
        let mut t = TensorTable::new();
        t.insert("b", Dtype::F64, &[2], &[1.0, 2.0]).unwrap();
        t.insert("a", Dtype::BF16, &[1, 1], &[0.5]).unwrap();
        t.set_metadata(Some([("format".to_string(), "pt".to_string())].into()));
        let bytes = write_safetensors(&t);
        let hlen = u64::from_le_bytes(bytes[..8].try_into().unwrap()) as usize;
        let header = std::str::from_utf8(&bytes[8..8 + hlen]).unwrap();
        assert_eq!(
            header,
            r#"{"__metadata__":{"format":"pt"},"a":{"data_offsets":[16,18],"dtype":"BF16","shape":[1,1]},"b":{"data_offsets":[0,16],"dtype":"F64","shape":[2]}}"#
        );
        let back = parse_safetensors(&bytes).unwrap();
        assert_eq!(back, t);
        assert_eq!(back.tensor_f64("a").unwrap(), vec![0.5]);
    }

    #[test]
    fn half_precision_decode_exact() {
        let mut t = TensorTable::new();
        let vals = [0.0, -2.5, 65504.0, 6.103515625e-5];
        t.insert("h", Dtype::F16, &[4], &vals).unwrap();
        assert_eq!(t.tensor_f64("h").unwrap(), vals.to_vec());
        for bits in [0x0001u16, 0x3c00, 0x7bff, 0x8400] {
            let h = half::f16::from_bits(bits);
            assert_eq!(Dtype::F16.decode(&h.to_le_bytes()) as f32, h.to_f32());
            let b = half::bf16::from_bits(bits);
            assert_eq!(Dtype::BF16.decode(&b.to_le_bytes()) as f32, b.to_f32());
        }
    }
}
