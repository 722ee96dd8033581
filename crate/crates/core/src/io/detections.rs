use std::path::Path;

use serde::Deserialize;

use crate::error::IoError;
use crate::evaluation::ImageDetection;
use crate::geometry::{CornerBox, Detection};
use crate::io::ClassTable;

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct Record {
    image_id: String,
    class: String,
    score: f64,
    bbox: [f64; 4],
}

/// One JSON object per line:
/// `{"image_id": "...", "class": "...", "score": 0.9, "bbox": [xmin, ymin, xmax, ymax]}`.
/// Blank lines are skipped. Errors carry the 1-based line number.
pub fn parse_detections(text: &str, path: &Path, classes: &ClassTable) -> Result<Vec<ImageDetection>, IoError> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let lineno = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let rec: Record = serde_json::from_str(line).map_err(|e| IoError::record(path, lineno, e.to_string()))?;
        let class_id = classes
            .id(&rec.class)
            .ok_or_else(|| IoError::record(path, lineno, format!("class '{}' not in class table", rec.class)))?;
        let [xmin, ymin, xmax, ymax] = rec.bbox;
        let bbox = CornerBox::new(xmin, ymin, xmax, ymax)
            .and_then(|c| c.to_box())
            .map_err(|e| IoError::record(path, lineno, e.to_string()))?;
        let det = Detection::new(bbox, class_id, rec.score).map_err(|e| IoError::record(path, lineno, e.to_string()))?;
        out.push(ImageDetection {
            image_id: rec.image_id,
            det,
        });
    }
    Ok(out)
}

pub fn read_detections(path: &Path, classes: &ClassTable) -> Result<Vec<ImageDetection>, IoError> {
    let text = std::fs::read_to_string(path).map_err(|e| IoError::io(path, e))?;
    parse_detections(&text, path, classes)
}
