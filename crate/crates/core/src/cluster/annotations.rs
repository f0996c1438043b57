use std::collections::HashMap;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::Value;

use super::Point;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum AnnotationFormat {
    CocoJson,
    Csv,
}

impl std::str::FromStr for AnnotationFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "coco_json" | "coco" | "json" => Ok(AnnotationFormat::CocoJson),
            "csv" => Ok(AnnotationFormat::Csv),
            _ => Err(Error::UnknownName {
                what: "annotation format",
                name: s.to_string(),
            }),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SourceMeta {
    pub path: PathBuf,
    /// Number of images listed in a COCO file; 0 for CSV input.
    pub image_count: usize,
    /// Boxes read, before dropping.
    pub box_count: usize,
    /// Boxes with non-positive width or height.
    pub dropped: usize,
    pub normalized: bool,
}

/// `(width, height)` pairs of ground-truth boxes.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AnnotationSet {
    pub points: Vec<Point>,
    pub source: SourceMeta,
}

impl AnnotationSet {
    /// Builds a set from in-memory sizes, dropping non-positive ones.
    pub fn from_sizes(points: impl IntoIterator<Item = Point>) -> Result<Self> {
        let all: Vec<Point> = points.into_iter().collect();
        let box_count = all.len();
        let kept: Vec<Point> = all.into_iter().filter(keep).collect();
        finish(
            kept,
            SourceMeta {
                path: PathBuf::new(),
                image_count: 0,
                box_count,
                dropped: 0,
                normalized: false,
            },
        )
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

fn keep(p: &Point) -> bool {
    p[0] > 0.0 && p[1] > 0.0 && p[0].is_finite() && p[1].is_finite()
}

fn finish(points: Vec<Point>, mut source: SourceMeta) -> Result<AnnotationSet> {
    source.dropped = source.box_count - points.len();
    if points.is_empty() {
        return Err(Error::domain(format!(
            "no boxes with positive width and height in {} ({} read, {} dropped)",
            source.path.display(),
            source.box_count,
            source.dropped
        )));
    }
    Ok(AnnotationSet { points, source })
}

/// Reads ground-truth box sizes.
///
/// COCO files contribute `annotations[].bbox` as `[x, y, w, h]`; with
/// `normalize`, sizes are divided by the referenced image's width and height.
/// CSV files hold `w,h` rows with an optional header. `normalize` is ignored
/// for CSV.
pub fn load_annotations(
    path: impl AsRef<Path>,
    format: AnnotationFormat,
    normalize: bool,
) -> Result<AnnotationSet> {
    let path = path.as_ref();
    match format {
        AnnotationFormat::CocoJson => load_coco(path, normalize),
        AnnotationFormat::Csv => load_csv(path),
    }
}

fn parse_err(path: &Path, context: impl Into<String>, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        context: context.into(),
        message: message.into(),
    }
}

fn load_coco(path: &Path, normalize: bool) -> Result<AnnotationSet> {
    let text = std::fs::read_to_string(path)?;
    let root: Value = serde_json::from_str(&text).map_err(|e| {
        parse_err(
            path,
            format!("line {}, column {}", e.line(), e.column()),
            e.to_string(),
        )
    })?;
    let images = match root.get("images") {
        None => Vec::new(),
        Some(Value::Array(a)) => a.clone(),
        Some(_) => return Err(parse_err(path, "images", "expected an array")),
    };
    let mut dims: HashMap<String, (f64, f64)> = HashMap::new();
    for (i, img) in images.iter().enumerate() {
        let ctx = format!("images[{i}]");
        let id = img
            .get("id")
            .ok_or_else(|| parse_err(path, &ctx, "missing `id`"))?
            .to_string();
        if normalize {
            let num = |key: &str| -> Result<f64> {
                img.get(key)
                    .and_then(Value::as_f64)
                    .filter(|v| *v > 0.0)
                    .ok_or_else(|| {
                        parse_err(path, &ctx, format!("`{key}` must be a positive number"))
                    })
            };
            dims.insert(id, (num("width")?, num("height")?));
        } else {
            dims.insert(id, (1.0, 1.0));
        }
    }
    let anns = match root.get("annotations") {
        Some(Value::Array(a)) => a,
        Some(_) => return Err(parse_err(path, "annotations", "expected an array")),
        None => return Err(parse_err(path, "annotations", "missing")),
    };
    let mut points = Vec::with_capacity(anns.len());
    for (i, ann) in anns.iter().enumerate() {
        let ctx = format!("annotations[{i}].bbox");
        let bbox = ann
            .get("bbox")
            .and_then(Value::as_array)
            .ok_or_else(|| parse_err(path, &ctx, "missing or not an array"))?;
        if bbox.len() != 4 {
            return Err(parse_err(
                path,
                &ctx,
                format!("expected 4 numbers, got {}", bbox.len()),
            ));
        }
        let mut v = [0.0; 4];
        for (slot, x) in v.iter_mut().zip(bbox) {
            *slot = x
                .as_f64()
                .ok_or_else(|| parse_err(path, &ctx, format!("`{x}` is not a number")))?;
        }
        let (mut w, mut h) = (v[2], v[3]);
        if normalize {
            let id = ann
                .get("image_id")
                .ok_or_else(|| parse_err(path, format!("annotations[{i}]"), "missing `image_id`"))?
                .to_string();
            let (iw, ih) = dims.get(&id).ok_or_else(|| {
                parse_err(
                    path,
                    format!("annotations[{i}]"),
                    format!("unknown image_id {id}"),
                )
            })?;
            w /= iw;
            h /= ih;
        }
        points.push([w, h]);
    }
    let box_count = points.len();
    let kept = points.into_iter().filter(keep).collect();
    finish(
        kept,
        SourceMeta {
            path: path.to_path_buf(),
            image_count: images.len(),
            box_count,
            dropped: 0,
            normalized: normalize,
        },
    )
}

fn load_csv(path: &Path) -> Result<AnnotationSet> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)?;
    let mut points = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let line = i + 1;
        let rec = rec.map_err(|e| parse_err(path, format!("line {line}"), e.to_string()))?;
        if rec.iter().all(str::is_empty) {
            continue;
        }
        if rec.len() != 2 {
            return Err(parse_err(
                path,
                format!("line {line}"),
                format!("expected 2 columns `w,h`, got {}", rec.len()),
            ));
        }
        let parsed: std::result::Result<Vec<f64>, _> = rec.iter().map(str::parse::<f64>).collect();
        match parsed {
            Ok(v) => points.push([v[0], v[1]]),
            Err(_) if i == 0 => continue,
            Err(e) => {
                return Err(parse_err(path, format!("line {line}"), e.to_string()));
            }
        }
    }
    let box_count = points.len();
    let kept = points.into_iter().filter(keep).collect();
    finish(
        kept,
        SourceMeta {
            path: path.to_path_buf(),
            image_count: 0,
            box_count,
            dropped: 0,
            normalized: false,
        },
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write(contents: &str, suffix: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::Builder::new().suffix(suffix).tempfile().unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        f
    }

    const COCO: &str = r#"{
        "images": [{"id": 1, "width": 100, "height": 50}, {"id": 2, "width": 200, "height": 200}],
        "annotations": [
            {"id": 1, "image_id": 1, "bbox": [0, 0, 10, 20]},
            {"id": 2, "image_id": 1, "bbox": [5, 5, 30, 10]},
            {"id": 3, "image_id": 2, "bbox": [1, 2, 40, 40]}
        ]
    }"#;

    #[test]
    fn coco_boxes_are_read() {
        let f = write(COCO, ".json");
        let set = load_annotations(f.path(), AnnotationFormat::CocoJson, false).unwrap();
        assert_eq!(set.points, vec![[10.0, 20.0], [30.0, 10.0], [40.0, 40.0]]);
        assert_eq!(set.source.image_count, 2);
        assert_eq!(set.source.box_count, 3);
        assert_eq!(set.source.dropped, 0);
    }

    #[test]
    fn coco_normalization_uses_the_image_size() {
        let f = write(COCO, ".json");
        let set = load_annotations(f.path(), AnnotationFormat::CocoJson, true).unwrap();
        assert_eq!(set.points, vec![[0.1, 0.4], [0.3, 0.2], [0.2, 0.2]]);
        assert!(set.source.normalized);
    }

    #[test]
    fn zero_width_boxes_are_dropped_and_counted() {
        let f = write(
            r#"{"annotations": [{"bbox": [0, 0, 0, 5]}, {"bbox": [0, 0, 3, 5]}]}"#,
            ".json",
        );
        let set = load_annotations(f.path(), AnnotationFormat::CocoJson, false).unwrap();
        assert_eq!(set.points, vec![[3.0, 5.0]]);
        assert_eq!(set.source.dropped, 1);
        assert_eq!(set.source.box_count, 2);
    }

    #[test]
    fn csv_pairs_with_and_without_header() {
        let f = write("2,4\n4,2\n", ".csv");
        let set = load_annotations(f.path(), AnnotationFormat::Csv, false).unwrap();
        assert_eq!(set.points, vec![[2.0, 4.0], [4.0, 2.0]]);
        let f = write("w,h\n2,4\n", ".csv");
        let set = load_annotations(f.path(), AnnotationFormat::Csv, false).unwrap();
        assert_eq!(set.points, vec![[2.0, 4.0]]);
    }

    #[test]
    fn malformed_inputs_name_their_location() {
        let f = write("2,4\n4,x\n", ".csv");
        let e = load_annotations(f.path(), AnnotationFormat::Csv, false).unwrap_err();
        assert!(e.to_string().contains("line 2"), "{e}");

        let f = write(r#"{"annotations": [{"bbox": [0, 0, 1]}]}"#, ".json");
        let e = load_annotations(f.path(), AnnotationFormat::CocoJson, false).unwrap_err();
        assert!(e.to_string().contains("annotations[0].bbox"), "{e}");

        let f = write("{\"annotations\": [", ".json");
        let e = load_annotations(f.path(), AnnotationFormat::CocoJson, false).unwrap_err();
        assert!(matches!(e, Error::Parse { .. }));
    }

    #[test]
    fn nothing_retained_is_a_domain_error() {
        let f = write("0,4\n3,-1\n", ".csv");
        let e = load_annotations(f.path(), AnnotationFormat::Csv, false).unwrap_err();
        assert!(matches!(e, Error::Domain(_)));
    }
}
