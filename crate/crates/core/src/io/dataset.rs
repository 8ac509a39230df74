//! Dataset descriptor, on-disk layout, loading and the deterministic
//! train/validation/test split.
//!
//! Layout under the dataset root:
//!
//! ```text
//! descriptor.toml
//! images/<image_id>.png      8-bit RGB
//! masks/<image_id>.png       8-bit 0/255
//! annotations.csv            image_id, center_row, center_col, radius
//! metadata.csv               image_id, row_id, sun_azimuth
//! poses.csv                  image_id, easting, northing, heading, row_id
//! row_truths.csv             row_id, true_count
//! ```

use super::atomic_write;
use super::png;
use super::tables::{
    read_csv, write_csv, AnnotationRow, DetectionRow, MetadataRow, PoseRow, RowTruthRow,
};
use crate::detect::Detection;
use crate::error::{CoreError, Result};
use crate::metadata::{EncoderSpec, MetaParam};
use crate::rng;
use crate::sampling::LabeledScene;
use crate::synthgen::Orchard;
use crate::yieldmap::{FramePose, Roi};
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::path::{Path, PathBuf};

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct SplitRatios {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl Default for SplitRatios {
    fn default() -> Self {
        SplitRatios {
            train: 0.8,
            val: 0.1,
            test: 0.1,
        }
    }
}

/// `descriptor.toml` contents.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct DatasetDescriptor {
    pub image_height: usize,
    pub image_width: usize,
    pub split: SplitRatios,
    pub split_seed: u64,
    /// Orchard row ids present in the dataset.
    pub row_ids: Vec<usize>,
    /// Channels per continuous metadata parameter.
    pub meta_channels: usize,
    /// Sun azimuth encoder range in degrees.
    pub azimuth_range: (f64, f64),
    /// Counting region of interest in image coordinates.
    pub roi: Roi,
}

impl DatasetDescriptor {
    pub fn validate(&self) -> Result<()> {
        if self.image_height == 0 || self.image_width == 0 {
            return Err(CoreError::Config("empty image extents".into()));
        }
        let sum = self.split.train + self.split.val + self.split.test;
        if (sum - 1.0).abs() > 1e-9 {
            return Err(CoreError::Config(format!(
                "split ratios sum to {sum}, expected 1"
            )));
        }
        if self.split.train < 0.0 || self.split.val < 0.0 || self.split.test < 0.0 {
            return Err(CoreError::Config("negative split ratio".into()));
        }
        if self.row_ids.is_empty() {
            return Err(CoreError::Config("empty row set".into()));
        }
        if self.meta_channels == 0 {
            return Err(CoreError::Config("metadata channels must be >= 1".into()));
        }
        self.roi.validate(self.image_height, self.image_width)?;
        Ok(())
    }

    /// Builds the metadata encoder for the enabled parameter subset, taking
    /// extents and row cardinality from this descriptor.
    pub fn encoder_spec(&self, enabled: &[MetaParam]) -> Result<EncoderSpec> {
        let mut spec = EncoderSpec::new(
            enabled,
            self.image_height,
            self.image_width,
            self.row_ids.len(),
        )?;
        spec.channels = self.meta_channels;
        spec.s_psi_range = self.azimuth_range;
        spec.validate()?;
        Ok(spec)
    }
}

/// One indexed image with its per-image metadata.
#[derive(Clone, Debug)]
pub struct DatasetItem {
    pub image_id: String,
    pub row_id: usize,
    pub sun_azimuth: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SplitName {
    Train,
    Val,
    Test,
    All,
}

impl SplitName {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(SplitName::Train),
            "val" => Ok(SplitName::Val),
            "test" => Ok(SplitName::Test),
            "all" => Ok(SplitName::All),
            other => Err(CoreError::Parameter(format!(
                "unknown split '{other}' (train|val|test|all)"
            ))),
        }
    }
}

/// A loaded dataset handle: index, split and lazily loadable rasters.
#[derive(Clone, Debug)]
pub struct Dataset {
    pub root: PathBuf,
    pub descriptor: DatasetDescriptor,
    pub items: Vec<DatasetItem>,
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
    pub annotations: HashMap<String, Vec<Detection>>,
    pub poses: Vec<FramePose>,
    pub row_truths: Vec<(usize, u64)>,
}

impl Dataset {
    pub fn split(&self, name: SplitName) -> Vec<usize> {
        match name {
            SplitName::Train => self.train.clone(),
            SplitName::Val => self.val.clone(),
            SplitName::Test => self.test.clone(),
            SplitName::All => (0..self.items.len()).collect(),
        }
    }

    pub fn image_path(&self, id: &str) -> PathBuf {
        self.root.join("images").join(format!("{id}.png"))
    }

    pub fn mask_path(&self, id: &str) -> PathBuf {
        self.root.join("masks").join(format!("{id}.png"))
    }

    pub fn load_image(&self, idx: usize) -> Result<crate::raster::Image> {
        let item = &self.items[idx];
        let img = png::read_image(&self.image_path(&item.image_id))?;
        if img.height() != self.descriptor.image_height || img.width() != self.descriptor.image_width
        {
            return Err(CoreError::Data(format!(
                "image '{}' extents {}x{} do not match descriptor {}x{}",
                item.image_id,
                img.height(),
                img.width(),
                self.descriptor.image_height,
                self.descriptor.image_width
            )));
        }
        Ok(img)
    }

    pub fn load_scene(&self, idx: usize) -> Result<LabeledScene> {
        let item = &self.items[idx];
        let image = self.load_image(idx)?;
        let mask = png::read_mask(&self.mask_path(&item.image_id))?;
        if mask.height() != image.height() || mask.width() != image.width() {
            return Err(CoreError::Data(format!(
                "mask '{}' extents do not match its image",
                item.image_id
            )));
        }
        Ok(LabeledScene {
            image,
            mask,
            row_id: item.row_id,
            sun_azimuth: item.sun_azimuth,
        })
    }

    pub fn load_scenes(&self, indices: &[usize]) -> Result<Vec<LabeledScene>> {
        indices.iter().map(|&i| self.load_scene(i)).collect()
    }

    pub fn annotations_for(&self, id: &str) -> &[Detection] {
        self.annotations.get(id).map(|v| v.as_slice()).unwrap_or(&[])
    }
}

/// Loads and validates a dataset: descriptor, index tables and the
/// materialized deterministic split.
pub fn load_dataset(root: &Path) -> Result<Dataset> {
    let desc_path = root.join("descriptor.toml");
    let text = std::fs::read_to_string(&desc_path)
        .map_err(|e| CoreError::io(desc_path.display().to_string(), e))?;
    let descriptor: DatasetDescriptor = toml::from_str(&text)
        .map_err(|e| CoreError::parse(desc_path.display().to_string(), e.to_string()))?;
    descriptor.validate()?;

    let meta_rows: Vec<MetadataRow> = read_csv(&root.join("metadata.csv"))?;
    if meta_rows.is_empty() {
        return Err(CoreError::Data("metadata.csv lists no images".into()));
    }
    let row_set: std::collections::HashSet<usize> = descriptor.row_ids.iter().copied().collect();
    let mut items: Vec<DatasetItem> = Vec::with_capacity(meta_rows.len());
    for r in &meta_rows {
        if !row_set.contains(&r.row_id) {
            return Err(CoreError::Data(format!(
                "image '{}' references unknown row id {}",
                r.image_id, r.row_id
            )));
        }
        items.push(DatasetItem {
            image_id: r.image_id.clone(),
            row_id: r.row_id,
            sun_azimuth: r.sun_azimuth,
        });
    }
    items.sort_by(|a, b| a.image_id.cmp(&b.image_id));

    // Referenced rasters must exist up front.
    for item in &items {
        for path in [
            root.join("images").join(format!("{}.png", item.image_id)),
            root.join("masks").join(format!("{}.png", item.image_id)),
        ] {
            if !path.exists() {
                return Err(CoreError::Data(format!(
                    "missing file {}",
                    path.display()
                )));
            }
        }
    }

    let ann_rows: Vec<AnnotationRow> = read_csv(&root.join("annotations.csv"))?;
    let mut annotations: HashMap<String, Vec<Detection>> = HashMap::new();
    for a in ann_rows {
        annotations.entry(a.image_id.clone()).or_default().push(Detection {
            row: a.center_row,
            col: a.center_col,
            radius: a.radius,
            score: None,
        });
    }

    let poses: Vec<FramePose> = read_csv::<PoseRow>(&root.join("poses.csv"))?
        .iter()
        .map(FramePose::from)
        .collect();
    let truth_path = root.join("row_truths.csv");
    let row_truths: Vec<(usize, u64)> = if truth_path.exists() {
        read_csv::<RowTruthRow>(&truth_path)?
            .into_iter()
            .map(|r| (r.row_id, r.true_count))
            .collect()
    } else {
        Vec::new()
    };

    // Deterministic split from the descriptor seed.
    let n = items.len();
    let mut order: Vec<usize> = (0..n).collect();
    let mut split_rng = rng::stream(descriptor.split_seed, "dataset-split", 0);
    for i in (1..n).rev() {
        let j = split_rng.random_range(0..=i);
        order.swap(i, j);
    }
    let n_train = (n as f64 * descriptor.split.train).floor() as usize;
    let n_val = (n as f64 * descriptor.split.val).floor() as usize;
    let train = order[..n_train].to_vec();
    let val = order[n_train..n_train + n_val].to_vec();
    let test = order[n_train + n_val..].to_vec();

    Ok(Dataset {
        root: root.to_path_buf(),
        descriptor,
        items,
        train,
        val,
        test,
        annotations,
        poses,
        row_truths,
    })
}

/// Writes a synthetic orchard to disk in the dataset layout.
pub fn write_orchard(orchard: &Orchard, root: &Path) -> Result<()> {
    std::fs::create_dir_all(root.join("images"))
        .map_err(|e| CoreError::io(root.display().to_string(), e))?;
    std::fs::create_dir_all(root.join("masks"))
        .map_err(|e| CoreError::io(root.display().to_string(), e))?;

    let descriptor = DatasetDescriptor {
        image_height: orchard.spec.scene.height,
        image_width: orchard.spec.scene.width,
        split: SplitRatios::default(),
        split_seed: 0,
        row_ids: (0..orchard.spec.rows).collect(),
        meta_channels: 8,
        azimuth_range: (-180.0, 180.0),
        roi: orchard.roi,
    };
    let toml_text = toml::to_string_pretty(&descriptor)
        .map_err(|e| CoreError::parse("descriptor.toml", e.to_string()))?;
    atomic_write(&root.join("descriptor.toml"), toml_text.as_bytes())?;

    let mut meta_rows = Vec::new();
    let mut ann_rows = Vec::new();
    let mut pose_rows = Vec::new();
    for f in &orchard.frames {
        png::write_image(&root.join("images").join(format!("{}.png", f.image_id)), &f.image)?;
        png::write_mask(&root.join("masks").join(format!("{}.png", f.image_id)), &f.truth.mask)?;
        meta_rows.push(MetadataRow {
            image_id: f.image_id.clone(),
            row_id: f.row_id,
            sun_azimuth: f.sun_azimuth,
        });
        for a in &f.truth.annotations {
            ann_rows.push(AnnotationRow {
                image_id: f.image_id.clone(),
                center_row: a.row,
                center_col: a.col,
                radius: a.radius,
            });
        }
        pose_rows.push(PoseRow {
            image_id: f.image_id.clone(),
            easting: f.pose.easting,
            northing: f.pose.northing,
            heading: f.pose.heading,
            row_id: f.pose.row_id,
        });
    }
    write_csv(&root.join("metadata.csv"), &meta_rows)?;
    write_csv(&root.join("annotations.csv"), &ann_rows)?;
    write_csv(&root.join("poses.csv"), &pose_rows)?;
    let truth_rows: Vec<RowTruthRow> = orchard
        .row_truths
        .iter()
        .map(|&(row_id, true_count)| RowTruthRow { row_id, true_count })
        .collect();
    write_csv(&root.join("row_truths.csv"), &truth_rows)?;
    Ok(())
}

/// Convenience for writing per-image detection tables.
pub fn write_detections(path: &Path, dets: &[(String, Vec<Detection>)]) -> Result<()> {
    let mut rows = Vec::new();
    for (id, list) in dets {
        for d in list {
            rows.push(DetectionRow::new(id, d));
        }
    }
    write_csv(path, &rows)
}

/// Reads a detection table grouped by image id (insertion order preserved).
pub fn read_detections(path: &Path) -> Result<Vec<(String, Vec<Detection>)>> {
    let rows: Vec<DetectionRow> = read_csv(path)?;
    let mut order: Vec<String> = Vec::new();
    let mut by_id: HashMap<String, Vec<Detection>> = HashMap::new();
    for r in rows {
        if !by_id.contains_key(&r.image_id) {
            order.push(r.image_id.clone());
        }
        by_id.entry(r.image_id.clone()).or_default().push(r.detection());
    }
    Ok(order
        .into_iter()
        .map(|id| {
            let dets = by_id.remove(&id).unwrap();
            (id, dets)
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthgen::{generate_orchard, OrchardSpec, SceneSpec};

    fn tiny_orchard() -> Orchard {
        let spec = OrchardSpec {
            scene: SceneSpec {
                height: 48,
                width: 48,
                fruit_count: (1, 2),
                radius_range: (6.0, 9.0),
                cluster_prob: 0.0,
                occluder_count: (0, 1),
                ..SceneSpec::default()
            },
            rows: 3,
            frames_per_row: 4,
            roi_width_px: 24,
            ..OrchardSpec::default()
        };
        generate_orchard(&spec, 77).unwrap()
    }

    fn tmp_root(tag: &str) -> PathBuf {
        let dir = std::env::temp_dir().join(format!(
            "orchard-dataset-{tag}-{}-{:?}",
            std::process::id(),
            std::thread::current().id()
        ));
        let _ = std::fs::remove_dir_all(&dir);
        dir
    }

    #[test]
    fn orchard_roundtrip_loads_cleanly() {
        let root = tmp_root("roundtrip");
        let orchard = tiny_orchard();
        write_orchard(&orchard, &root).unwrap();
        let ds = load_dataset(&root).unwrap();
        assert_eq!(ds.items.len(), 12);
        assert_eq!(ds.train.len() + ds.val.len() + ds.test.len(), 12);
        assert_eq!(ds.row_truths.len(), 3);
        let scene = ds.load_scene(0).unwrap();
        assert_eq!(scene.image.height(), 48);
        // Annotations present for frames that have fruit.
        let total_annotations: usize = ds.annotations.values().map(|v| v.len()).sum();
        let expect: usize = orchard.frames.iter().map(|f| f.truth.annotations.len()).sum();
        assert_eq!(total_annotations, expect);
        std::fs::remove_dir_all(&root).unwrap();
    }

    #[test]
    fn bad_split_ratios_rejected() {
        let root = tmp_root("ratios");
        let orchard = tiny_orchard();
        write_orchard(&orchard, &root).unwrap();
        let desc_path = root.join("descriptor.toml");
        let text = std::fs::read_to_string(&desc_path).unwrap();
        let patched = text.replace("test = 0.1", "test = 0.2");
        std::fs::write(&desc_path, patched).unwrap();
        match load_dataset(&root) {
            Err(CoreError::Config(msg)) => assert!(msg.contains("split ratios")),
            other => panic!("expected config error, got {other:?}"),
        }
        std::fs::remove_dir_all(&root).unwrap();
    }

    #[test]
    fn missing_file_and_unknown_row_are_data_errors() {
        let root = tmp_root("missing");
        let orchard = tiny_orchard();
        write_orchard(&orchard, &root).unwrap();
        std::fs::remove_file(root.join("images").join("r00_f000.png")).unwrap();
        assert!(matches!(load_dataset(&root), Err(CoreError::Data(_))));

        // Restore layout, then corrupt a row id.
        write_orchard(&orchard, &root).unwrap();
        let meta_path = root.join("metadata.csv");
        let text = std::fs::read_to_string(&meta_path).unwrap();
        std::fs::write(&meta_path, text.replace("r00_f000,0", "r00_f000,99")).unwrap();
        assert!(matches!(load_dataset(&root), Err(CoreError::Data(_))));
        std::fs::remove_dir_all(&root).unwrap();
    }

    #[test]
    fn split_sizes_follow_floor_rule() {
        // The 80-10-10 split of 1100 images is 880/110/110; check the rule
        // at a desk-scale item count (floor for train and val, rest test).
        let root = tmp_root("split");
        let orchard = tiny_orchard();
        write_orchard(&orchard, &root).unwrap();
        let ds = load_dataset(&root).unwrap();
        // 12 items: floor(9.6)=9 train, floor(1.2)=1 val, 2 test.
        assert_eq!(ds.train.len(), 9);
        assert_eq!(ds.val.len(), 1);
        assert_eq!(ds.test.len(), 2);
        // Deterministic: same split on a reload.
        let again = load_dataset(&root).unwrap();
        assert_eq!(ds.train, again.train);
        assert_eq!(ds.test, again.test);
        // The arithmetic that yields 880/110/110 at corpus scale:
        assert_eq!((1100f64 * 0.8).floor() as usize, 880);
        assert_eq!((1100f64 * 0.1).floor() as usize, 110);
        std::fs::remove_dir_all(&root).unwrap();
    }

    #[test]
    fn detection_table_grouping_roundtrip() {
        let root = tmp_root("dets");
        std::fs::create_dir_all(&root).unwrap();
        let path = root.join("d.csv");
        let d = |r: f64| Detection {
            row: r,
            col: 2.0 * r,
            radius: 5.0,
            score: Some(r / 10.0),
        };
        let groups = vec![
            ("img_b".to_string(), vec![d(1.0), d(2.0)]),
            ("img_a".to_string(), vec![d(3.0)]),
        ];
        write_detections(&path, &groups).unwrap();
        let back = read_detections(&path).unwrap();
        assert_eq!(back.len(), 2);
        assert_eq!(back[0].0, "img_b");
        assert_eq!(back[0].1.len(), 2);
        assert_eq!(back[1].1[0].row, 3.0);
        std::fs::remove_dir_all(&root).unwrap();
    }
}
