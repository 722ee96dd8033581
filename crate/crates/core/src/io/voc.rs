use std::path::{Path, PathBuf};

use crate::error::IoError;
use crate::evaluation::ImageGroundTruth;
use crate::geometry::{CornerBox, GroundTruth};
use crate::io::ClassTable;

#[derive(Debug, Clone, PartialEq)]
pub struct VocObject {
    pub name: String,
    pub bndbox: CornerBox,
}

/// One Pascal VOC annotation file. The image id is the XML file stem.
#[derive(Debug, Clone, PartialEq)]
pub struct VocAnnotation {
    pub path: PathBuf,
    pub image_id: String,
    pub filename: Option<String>,
    pub width: f64,
    pub height: f64,
    pub objects: Vec<VocObject>,
}

impl VocAnnotation {
    pub fn ground_truths(&self, classes: &ClassTable) -> Result<Vec<GroundTruth>, IoError> {
        self.objects
            .iter()
            .enumerate()
            .map(|(i, o)| {
                let class_id = classes.id(&o.name).ok_or_else(|| {
                    IoError::parse(&self.path, format!("object {}: class '{}' not in class table", i + 1, o.name))
                })?;
                let bbox = o
                    .bndbox
                    .to_box()
                    .map_err(|e| IoError::parse(&self.path, format!("object {}: {e}", i + 1)))?;
                Ok(GroundTruth { bbox, class_id })
            })
            .collect()
    }

    pub fn image_ground_truths(&self, classes: &ClassTable) -> Result<Vec<ImageGroundTruth>, IoError> {
        Ok(self
            .ground_truths(classes)?
            .into_iter()
            .map(|gt| ImageGroundTruth {
                image_id: self.image_id.clone(),
                gt,
            })
            .collect())
    }
}

fn child<'a>(node: roxmltree::Node<'a, 'a>, tag: &str) -> Option<roxmltree::Node<'a, 'a>> {
    node.children().find(|c| c.has_tag_name(tag))
}

fn number(node: roxmltree::Node<'_, '_>, tag: &str, path: &Path, ctx: &str) -> Result<f64, IoError> {
    let text = child(node, tag)
        .and_then(|n| n.text())
        .ok_or_else(|| IoError::parse(path, format!("{ctx}: missing <{tag}>")))?;
    let v: f64 = text
        .trim()
        .parse()
        .map_err(|_| IoError::parse(path, format!("{ctx}: <{tag}> is not a number: '{}'", text.trim())))?;
    if !v.is_finite() {
        return Err(IoError::parse(path, format!("{ctx}: <{tag}> is not finite")));
    }
    Ok(v)
}

pub fn parse_voc(text: &str, path: &Path) -> Result<VocAnnotation, IoError> {
    let doc = roxmltree::Document::parse(text).map_err(|e| IoError::parse(path, e.to_string()))?;
    let root = doc.root_element();
    if !root.has_tag_name("annotation") {
        return Err(IoError::parse(path, format!("root element is <{}>, expected <annotation>", root.tag_name().name())));
    }
    let size = child(root, "size").ok_or_else(|| IoError::parse(path, "missing <size>"))?;
    let width = number(size, "width", path, "size")?;
    let height = number(size, "height", path, "size")?;
    if width <= 0.0 || height <= 0.0 {
        return Err(IoError::parse(path, format!("non-positive image size {width}x{height}")));
    }

    let mut objects = Vec::new();
    for (i, obj) in root.children().filter(|c| c.has_tag_name("object")).enumerate() {
        let ctx = format!("object {}", i + 1);
        let name = child(obj, "name")
            .and_then(|n| n.text())
            .map(|s| s.trim().to_string())
            .ok_or_else(|| IoError::parse(path, format!("{ctx}: missing <name>")))?;
        let bb = child(obj, "bndbox").ok_or_else(|| IoError::parse(path, format!("{ctx}: missing <bndbox>")))?;
        let bndbox = CornerBox::new(
            number(bb, "xmin", path, &ctx)?,
            number(bb, "ymin", path, &ctx)?,
            number(bb, "xmax", path, &ctx)?,
            number(bb, "ymax", path, &ctx)?,
        )
        .map_err(|e| IoError::parse(path, format!("{ctx}: {e}")))?;
        objects.push(VocObject { name, bndbox });
    }

    let image_id = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    Ok(VocAnnotation {
        path: path.to_path_buf(),
        image_id,
        filename: child(root, "filename").and_then(|n| n.text()).map(|s| s.trim().to_string()),
        width,
        height,
        objects,
    })
}

/// Every `*.xml` file directly inside `dir`, sorted by file name.
pub fn read_voc_dir(dir: &Path) -> Result<Vec<VocAnnotation>, IoError> {
    let entries = std::fs::read_dir(dir).map_err(|e| IoError::io(dir, e))?;
    let mut paths = Vec::new();
    for entry in entries {
        let p = entry.map_err(|e| IoError::io(dir, e))?.path();
        if p.extension().is_some_and(|e| e.eq_ignore_ascii_case("xml")) {
            paths.push(p);
        }
    }
    paths.sort();
    paths
        .iter()
        .map(|p| {
            let text = std::fs::read_to_string(p).map_err(|e| IoError::io(p, e))?;
            parse_voc(&text, p)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = r#"<annotation>
  <folder>el</folder>
  <filename>cell_001.jpg</filename>
  <size><width>640</width><height>480</height><depth>1</depth></size>
  <object>
    <name>crack</name><pose>Unspecified</pose><truncated>0</truncated><difficult>0</difficult>
    <bndbox><xmin>10</xmin><ymin>20</ymin><xmax>74</xmax><ymax>84.5</ymax></bndbox>
  </object>
  <object>
    <name>dark_spot</name>
    <bndbox><xmin>100</xmin><ymin>100</ymin><xmax>110</xmax><ymax>105</ymax></bndbox>
  </object>
</annotation>"#;

    #[test]
    fn parses_labelimg_output() {
        let a = parse_voc(SAMPLE, Path::new("dir/cell_001.xml")).unwrap();
        assert_eq!(a.image_id, "cell_001");
        assert_eq!(a.filename.as_deref(), Some("cell_001.jpg"));
        assert_eq!((a.width, a.height), (640.0, 480.0));
        assert_eq!(a.objects.len(), 2);
        assert_eq!(a.objects[0].bndbox, CornerBox::new(10.0, 20.0, 74.0, 84.5).unwrap());

        let classes = ClassTable::parse("crack\ndark_spot\n").unwrap();
        let gts = a.ground_truths(&classes).unwrap();
        assert_eq!(gts[1].class_id, 1);
        assert_eq!(gts[0].bbox.to_array(), [42.0, 52.25, 64.0, 64.5]);
    }

    #[test]
    fn unknown_class_names_location() {
        let a = parse_voc(SAMPLE, Path::new("x.xml")).unwrap();
        let err = a.ground_truths(&ClassTable::parse("crack\n").unwrap()).unwrap_err();
        assert!(err.to_string().contains("object 2"), "{err}");
    }

    #[test]
    fn malformed_inputs() {
        let p = Path::new("bad.xml");
        assert!(parse_voc("<annotation>", p).is_err());
        assert!(parse_voc("<root/>", p).is_err());
        let no_size = "<annotation><object><name>a</name></object></annotation>";
        assert!(parse_voc(no_size, p).is_err());
        let degenerate = SAMPLE.replace("<xmax>74</xmax>", "<xmax>10</xmax>");
        assert!(parse_voc(&degenerate, p).is_err());
        let nan = SAMPLE.replace("<xmax>74</xmax>", "<xmax>NaN</xmax>");
        assert!(parse_voc(&nan, p).is_err());
        let text = SAMPLE.replace("<ymin>20</ymin>", "<ymin>abc</ymin>");
        let err = parse_voc(&text, p).unwrap_err().to_string();
        assert!(err.contains("object 1") && err.contains("ymin"), "{err}");
    }
}
