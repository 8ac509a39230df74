//! Comma-delimited tables with header rows: annotations, per-image
//! metadata, vehicle poses, harvest truths and detections.

use super::atomic_write;
use crate::detect::Detection;
use crate::error::{CoreError, Result};
use crate::yieldmap::FramePose;
use serde::{de::DeserializeOwned, Deserialize, Serialize};
use std::path::Path;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AnnotationRow {
    pub image_id: String,
    pub center_row: f64,
    pub center_col: f64,
    pub radius: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetadataRow {
    pub image_id: String,
    pub row_id: usize,
    pub sun_azimuth: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PoseRow {
    pub image_id: String,
    pub easting: f64,
    pub northing: f64,
    pub heading: f64,
    pub row_id: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RowTruthRow {
    pub row_id: usize,
    pub true_count: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DetectionRow {
    pub image_id: String,
    pub row: f64,
    pub col: f64,
    pub radius: f64,
    pub score: Option<f64>,
}

impl From<&PoseRow> for FramePose {
    fn from(r: &PoseRow) -> Self {
        FramePose {
            image_id: r.image_id.clone(),
            easting: r.easting,
            northing: r.northing,
            heading: r.heading,
            row_id: r.row_id,
        }
    }
}

impl DetectionRow {
    pub fn new(image_id: &str, d: &Detection) -> Self {
        DetectionRow {
            image_id: image_id.to_string(),
            row: d.row,
            col: d.col,
            radius: d.radius,
            score: d.score,
        }
    }

    pub fn detection(&self) -> Detection {
        Detection {
            row: self.row,
            col: self.col,
            radius: self.radius,
            score: self.score,
        }
    }
}

/// Serializes rows to CSV bytes and writes them atomically.
pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut writer = csv::Writer::from_writer(Vec::new());
    for row in rows {
        writer.serialize(row).map_err(|e| CoreError::Parse {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
    }
    let bytes = writer.into_inner().map_err(|e| CoreError::Parse {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    atomic_write(path, &bytes)
}

pub fn read_csv<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let bytes = std::fs::read(path).map_err(|e| CoreError::io(path.display().to_string(), e))?;
    let mut reader = csv::Reader::from_reader(bytes.as_slice());
    reader
        .deserialize()
        .collect::<std::result::Result<Vec<T>, _>>()
        .map_err(|e| CoreError::parse(path.display().to_string(), e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn detection_table_roundtrip() {
        let dir = std::env::temp_dir().join(format!("orchard-csv-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("dets.csv");
        let rows = vec![
            DetectionRow {
                image_id: "a".into(),
                row: 1.5,
                col: 2.25,
                radius: 10.0,
                score: Some(0.75),
            },
            DetectionRow {
                image_id: "b".into(),
                row: 3.0,
                col: 4.0,
                radius: 12.0,
                score: None,
            },
        ];
        write_csv(&path, &rows).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("image_id,row,col,radius,score\n"), "{text}");
        let back: Vec<DetectionRow> = read_csv(&path).unwrap();
        assert_eq!(back.len(), 2);
        assert_eq!(back[0].score, Some(0.75));
        assert_eq!(back[1].score, None);
        std::fs::remove_dir_all(&dir).unwrap();
    }
}
