//! File formats: VOC XML ground truth, JSON-lines detections, class tables,
//! CSV outputs and the tensor container used by the fusion reference.

mod detections;
mod tables;
mod tensors;
mod voc;

use std::collections::HashMap;
use std::path::Path;

use crate::error::IoError;

pub use detections::{parse_detections, read_detections};
pub use tables::{
    read_histogram_csv, read_sweep_csv, write_histogram_csv, write_size_rows, write_sweep_csv, SizeRow,
};
pub use tensors::{parse_tensor_bytes, read_tensor_file, tensor_file_bytes, write_tensor_file};
pub use voc::{parse_voc, read_voc_dir, VocAnnotation, VocObject};

/// Class names in id order. Line `i` of the table file names class `i`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassTable {
    names: Vec<String>,
    index: HashMap<String, usize>,
}

impl ClassTable {
    pub fn new(names: Vec<String>) -> Result<Self, String> {
        let mut index = HashMap::with_capacity(names.len());
        for (i, n) in names.iter().enumerate() {
            if n.is_empty() {
                return Err(format!("empty class name at line {}", i + 1));
            }
            if index.insert(n.clone(), i).is_some() {
                return Err(format!("duplicate class name '{n}' at line {}", i + 1));
            }
        }
        Ok(Self { names, index })
    }

    pub fn read(path: &Path) -> Result<Self, IoError> {
        let text = std::fs::read_to_string(path).map_err(|e| IoError::io(path, e))?;
        Self::parse(&text).map_err(|m| IoError::parse(path, m))
    }

    /// Trailing blank lines are ignored; blank lines elsewhere are an error.
    pub fn parse(text: &str) -> Result<Self, String> {
        let mut names: Vec<String> = text.lines().map(|l| l.trim().to_string()).collect();
        while names.last().is_some_and(String::is_empty) {
            names.pop();
        }
        Self::new(names)
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn id(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn name(&self, id: usize) -> Option<&str> {
        self.names.get(id).map(String::as_str)
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }
}

/// Nine significant digits, fixed notation for moderate magnitudes.
pub fn fmt_sig_padded(x: f64) -> String {
    if !x.is_finite() {
        return x.to_string();
    }
    if x == 0.0 {
        return "0.00000000".to_string();
    }
    let sci = format!("{x:.8e}");
    let exp: i32 = sci
        .split_once('e')
        .and_then(|(_, e)| e.parse().ok())
        .expect("exponent in scientific format");
    if (-5..9).contains(&exp) {
        format!("{:.*}", (8 - exp) as usize, x)
    } else {
        sci
    }
}

/// [`fmt_sig_padded`] with trailing zeros removed, for CSV cells.
pub fn fmt_sig(x: f64) -> String {
    let s = fmt_sig_padded(x);
    match s.split_once('e') {
        Some((mant, exp)) => format!("{}e{exp}", trim_zeros(mant)),
        None => trim_zeros(&s).to_string(),
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}
