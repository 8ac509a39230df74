//! Contextual metadata encoding.
//!
//! Capture-time side information (pixel position, orchard row number, sun
//! azimuth, and an optional uniform-noise control channel) is one-hot
//! encoded per parameter and concatenated into a single vector `D` that the
//! networks consume alongside the image data.

use crate::error::{CoreError, Result};
use crate::nn::Real;
use serde::{Deserialize, Serialize};

/// The meta-parameters, in their fixed concatenation order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum MetaParam {
    /// Pixel row within the full image.
    PixelI,
    /// Pixel column within the full image.
    PixelJ,
    /// Orchard row number (categorical id).
    RowNumber,
    /// Sun azimuth in the vehicle body frame, degrees.
    SunAzimuth,
    /// Uniform random channel used as an ablation control.
    Noise,
}

/// Fixed concatenation order; serialization stability matters more than any
/// particular semantic ordering.
pub const META_ORDER: [MetaParam; 5] = [
    MetaParam::PixelI,
    MetaParam::PixelJ,
    MetaParam::RowNumber,
    MetaParam::SunAzimuth,
    MetaParam::Noise,
];

impl MetaParam {
    pub fn name(self) -> &'static str {
        match self {
            MetaParam::PixelI => "p_i",
            MetaParam::PixelJ => "p_j",
            MetaParam::RowNumber => "r_n",
            MetaParam::SunAzimuth => "s_psi",
            MetaParam::Noise => "noise",
        }
    }

    pub fn from_name(name: &str) -> Result<Self> {
        match name {
            "p_i" => Ok(MetaParam::PixelI),
            "p_j" => Ok(MetaParam::PixelJ),
            "r_n" => Ok(MetaParam::RowNumber),
            "s_psi" => Ok(MetaParam::SunAzimuth),
            "noise" => Ok(MetaParam::Noise),
            other => Err(CoreError::Parameter(format!(
                "unknown metadata parameter '{other}' (expected p_i, p_j, r_n, s_psi, noise)"
            ))),
        }
    }
}

/// Per-pixel contextual record prior to encoding.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MetadataRecord {
    /// Pixel row in `[0, image height)`.
    pub p_i: f64,
    /// Pixel column in `[0, image width)`.
    pub p_j: f64,
    /// Orchard row id.
    pub r_n: usize,
    /// Sun azimuth in degrees, body frame, `[-180, 180)`.
    pub s_psi: f64,
    /// Uniform random control channel in `[0, 1)`, present only when the
    /// noise parameter is enabled.
    pub noise: Option<f64>,
}

/// Declares which meta-parameters are enabled and how each is discretised.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EncoderSpec {
    /// Enabled subset, kept in `META_ORDER` order.
    pub enabled: Vec<MetaParam>,
    /// Channels for each continuous parameter (p_i, p_j, s_psi, noise).
    pub channels: usize,
    /// Continuous range of the pixel row encoder, `[0, image height)`.
    pub p_i_range: (f64, f64),
    /// Continuous range of the pixel column encoder, `[0, image width)`.
    pub p_j_range: (f64, f64),
    /// Sun azimuth range, default `[-180, 180)`.
    pub s_psi_range: (f64, f64),
    /// Cardinality of the row-number one-hot encoding.
    pub row_count: usize,
}

impl EncoderSpec {
    /// Builds a spec with the default 8 channels per continuous parameter.
    pub fn new(
        enabled: &[MetaParam],
        image_height: usize,
        image_width: usize,
        row_count: usize,
    ) -> Result<Self> {
        let mut ordered = Vec::new();
        for p in META_ORDER {
            if enabled.contains(&p) {
                ordered.push(p);
            }
        }
        if ordered.len() != enabled.len() {
            return Err(CoreError::Parameter("duplicate metadata parameters".into()));
        }
        let spec = EncoderSpec {
            enabled: ordered,
            channels: 8,
            p_i_range: (0.0, image_height as f64),
            p_j_range: (0.0, image_width as f64),
            s_psi_range: (-180.0, 180.0),
            row_count,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.channels == 0 {
            return Err(CoreError::Parameter("channel count must be >= 1".into()));
        }
        if self.enabled.contains(&MetaParam::RowNumber) && self.row_count == 0 {
            return Err(CoreError::Parameter(
                "row-number encoding enabled with zero rows".into(),
            ));
        }
        Ok(())
    }

    /// Total encoded length |D|.
    pub fn encoded_len(&self) -> usize {
        self.enabled
            .iter()
            .map(|p| match p {
                MetaParam::RowNumber => self.row_count,
                _ => self.channels,
            })
            .sum()
    }

    pub fn is_enabled(&self, p: MetaParam) -> bool {
        self.enabled.contains(&p)
    }
}

/// One-hot bin index for a continuous value over `[lo, hi)`; values are
/// clamped at the boundaries, so `hi` itself activates the last bin.
pub fn continuous_bin(value: f64, range: (f64, f64), channels: usize) -> Result<usize> {
    let (lo, hi) = range;
    if !(hi > lo) {
        return Err(CoreError::Parameter(format!(
            "degenerate encoder range [{lo}, {hi}]"
        )));
    }
    let v = value.clamp(lo, hi);
    let bin = ((v - lo) / (hi - lo) * channels as f64).floor() as usize;
    Ok(bin.min(channels - 1))
}

/// One-hot encoding of a continuous value.
pub fn one_hot_continuous<F: Real>(value: f64, range: (f64, f64), channels: usize) -> Result<Vec<F>> {
    let bin = continuous_bin(value, range, channels)?;
    let mut v = vec![F::zero(); channels];
    v[bin] = F::one();
    Ok(v)
}

/// Unit vector with 1 at position `id`.
pub fn one_hot_categorical<F: Real>(id: usize, cardinality: usize) -> Result<Vec<F>> {
    if id >= cardinality {
        return Err(CoreError::Parameter(format!(
            "categorical id {id} out of range 0..{cardinality}"
        )));
    }
    let mut v = vec![F::zero(); cardinality];
    v[id] = F::one();
    Ok(v)
}

/// Concatenates the enabled encodings of `record` in fixed declared order.
pub fn combine_metadata<F: Real>(record: &MetadataRecord, spec: &EncoderSpec) -> Result<Vec<F>> {
    let mut d = Vec::with_capacity(spec.encoded_len());
    for p in &spec.enabled {
        match p {
            MetaParam::PixelI => {
                d.extend(one_hot_continuous::<F>(record.p_i, spec.p_i_range, spec.channels)?)
            }
            MetaParam::PixelJ => {
                d.extend(one_hot_continuous::<F>(record.p_j, spec.p_j_range, spec.channels)?)
            }
            MetaParam::RowNumber => {
                d.extend(one_hot_categorical::<F>(record.r_n, spec.row_count)?)
            }
            MetaParam::SunAzimuth => {
                d.extend(one_hot_continuous::<F>(record.s_psi, spec.s_psi_range, spec.channels)?)
            }
            MetaParam::Noise => {
                let noise = record.noise.ok_or_else(|| {
                    CoreError::Encoding(
                        "noise parameter enabled but record carries no noise value".into(),
                    )
                })?;
                d.extend(one_hot_continuous::<F>(noise, (0.0, 1.0), spec.channels)?)
            }
        }
    }
    Ok(d)
}

/// Per-image metadata source producing per-pixel records.
///
/// Pixel position varies per pixel; row number and sun azimuth are constant
/// for the image. The noise control channel is a pure hash of the pixel
/// coordinate, so patch-wise and whole-image evaluation of the same pixel
/// see the same value.
#[derive(Clone, Debug)]
pub struct PixelMeta {
    pub spec: EncoderSpec,
    pub r_n: usize,
    pub s_psi: f64,
    pub noise_seed: u64,
}

impl PixelMeta {
    fn noise_at(&self, y: usize, x: usize) -> f64 {
        let counter = ((y as u64) << 32) | x as u64;
        let bits = crate::rng::derive_seed(self.noise_seed, "meta-noise", counter);
        (bits >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn record_at(&self, y: usize, x: usize) -> MetadataRecord {
        MetadataRecord {
            p_i: y as f64,
            p_j: x as f64,
            r_n: self.r_n,
            s_psi: self.s_psi,
            noise: if self.spec.is_enabled(MetaParam::Noise) {
                Some(self.noise_at(y, x))
            } else {
                None
            },
        }
    }

    pub fn encode_at<F: Real>(&self, y: usize, x: usize) -> Result<Vec<F>> {
        combine_metadata(&self.record_at(y, x), &self.spec)
    }
}

/// Enumerates every distinct `D` vector an image can produce.
///
/// With row number and azimuth fixed per image, `D` is determined by the
/// active bins of `p_i`, `p_j` and the noise channel, so whole-image
/// inference can precompute the metadata contribution once per combination
/// instead of once per pixel — with identical results, since the encoding
/// depends only on the bins.
#[derive(Clone, Debug)]
pub struct DTable<F> {
    vectors: Vec<Vec<F>>,
    cj: usize,
    cn: usize,
}

impl<F: Real> DTable<F> {
    pub fn build(meta: &PixelMeta) -> Result<Self> {
        let spec = &meta.spec;
        let ch = spec.channels;
        let ci = if spec.is_enabled(MetaParam::PixelI) { ch } else { 1 };
        let cj = if spec.is_enabled(MetaParam::PixelJ) { ch } else { 1 };
        let cn = if spec.is_enabled(MetaParam::Noise) { ch } else { 1 };
        let dlen = spec.encoded_len();

        let mut offsets = std::collections::HashMap::new();
        let mut off = 0usize;
        for p in &spec.enabled {
            offsets.insert(*p, off);
            off += match p {
                MetaParam::RowNumber => spec.row_count,
                _ => ch,
            };
        }

        let mut vectors = Vec::with_capacity(ci * cj * cn);
        for bi in 0..ci {
            for bj in 0..cj {
                for bn in 0..cn {
                    let mut d = vec![F::zero(); dlen];
                    if let Some(&o) = offsets.get(&MetaParam::PixelI) {
                        d[o + bi] = F::one();
                    }
                    if let Some(&o) = offsets.get(&MetaParam::PixelJ) {
                        d[o + bj] = F::one();
                    }
                    if let Some(&o) = offsets.get(&MetaParam::RowNumber) {
                        d[o + meta.r_n] = F::one();
                    }
                    if let Some(&o) = offsets.get(&MetaParam::SunAzimuth) {
                        d[o + continuous_bin(meta.s_psi, spec.s_psi_range, ch)?] = F::one();
                    }
                    if let Some(&o) = offsets.get(&MetaParam::Noise) {
                        d[o + bn] = F::one();
                    }
                    vectors.push(d);
                }
            }
        }
        Ok(DTable { vectors, cj, cn })
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn vectors(&self) -> &[Vec<F>] {
        &self.vectors
    }

    #[inline]
    pub fn index(&self, bins: (usize, usize, usize)) -> usize {
        (bins.0 * self.cj + bins.1) * self.cn + bins.2
    }

    /// Active bins of pixel `(y, x)` under this image's metadata.
    pub fn bins_at(meta: &PixelMeta, y: usize, x: usize) -> Result<(usize, usize, usize)> {
        let spec = &meta.spec;
        let ch = spec.channels;
        let bi = if spec.is_enabled(MetaParam::PixelI) {
            continuous_bin(y as f64, spec.p_i_range, ch)?
        } else {
            0
        };
        let bj = if spec.is_enabled(MetaParam::PixelJ) {
            continuous_bin(x as f64, spec.p_j_range, ch)?
        } else {
            0
        };
        let bn = if spec.is_enabled(MetaParam::Noise) {
            let r = meta.record_at(y, x);
            continuous_bin(r.noise.unwrap(), (0.0, 1.0), ch)?
        } else {
            0
        };
        Ok((bi, bj, bn))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(p_i: f64) -> MetadataRecord {
        MetadataRecord {
            p_i,
            p_j: 0.0,
            r_n: 0,
            s_psi: 90.0,
            noise: None,
        }
    }

    #[test]
    fn continuous_bins_match_paper_height_range() {
        // Image height indexed by the 1616 extent.
        assert_eq!(continuous_bin(0.0, (0.0, 1616.0), 8).unwrap(), 0);
        assert_eq!(continuous_bin(1616.0, (0.0, 1616.0), 8).unwrap(), 7);
        assert_eq!(continuous_bin(808.0, (0.0, 1616.0), 8).unwrap(), 4);
    }

    #[test]
    fn degenerate_range_is_error() {
        assert!(continuous_bin(0.0, (3.0, 3.0), 8).is_err());
    }

    #[test]
    fn categorical_is_unit_vector() {
        let v = one_hot_categorical::<f32>(0, 15).unwrap();
        assert_eq!(v.len(), 15);
        assert_eq!(v[0], 1.0);
        assert_eq!(v.iter().sum::<f32>(), 1.0);
        let v = one_hot_categorical::<f32>(14, 15).unwrap();
        assert_eq!(v[14], 1.0);
        assert!(one_hot_categorical::<f32>(15, 15).is_err());
    }

    #[test]
    fn combined_length_is_sum_of_channels() {
        let only_pi = EncoderSpec::new(&[MetaParam::PixelI], 1616, 1232, 15).unwrap();
        assert_eq!(only_pi.encoded_len(), 8);
        let all = EncoderSpec::new(
            &[
                MetaParam::PixelI,
                MetaParam::PixelJ,
                MetaParam::RowNumber,
                MetaParam::SunAzimuth,
            ],
            1616,
            1232,
            15,
        )
        .unwrap();
        assert_eq!(all.encoded_len(), 8 + 8 + 15 + 8);
        let none = EncoderSpec::new(&[], 1616, 1232, 15).unwrap();
        assert_eq!(none.encoded_len(), 0);
    }

    #[test]
    fn one_active_unit_per_enabled_parameter() {
        let spec = EncoderSpec::new(
            &[
                MetaParam::PixelI,
                MetaParam::PixelJ,
                MetaParam::RowNumber,
                MetaParam::SunAzimuth,
            ],
            100,
            200,
            15,
        )
        .unwrap();
        let d: Vec<f64> = combine_metadata(
            &MetadataRecord {
                p_i: 55.0,
                p_j: 13.0,
                r_n: 7,
                s_psi: -45.0,
                noise: None,
            },
            &spec,
        )
        .unwrap();
        assert_eq!(d.len(), spec.encoded_len());
        assert_eq!(d.iter().filter(|&&v| v == 1.0).count(), 4);
        assert_eq!(d.iter().filter(|&&v| v == 0.0).count(), d.len() - 4);
    }

    #[test]
    fn missing_noise_field_is_encoding_error() {
        let spec = EncoderSpec::new(&[MetaParam::Noise], 100, 100, 1).unwrap();
        assert!(combine_metadata::<f64>(&record(0.0), &spec).is_err());
    }

    #[test]
    fn dtable_entries_match_direct_encoding() {
        let spec = EncoderSpec::new(
            &[
                MetaParam::PixelI,
                MetaParam::PixelJ,
                MetaParam::RowNumber,
                MetaParam::SunAzimuth,
                MetaParam::Noise,
            ],
            64,
            80,
            7,
        )
        .unwrap();
        let meta = PixelMeta {
            spec,
            r_n: 4,
            s_psi: 90.0,
            noise_seed: 5,
        };
        let table = DTable::<f64>::build(&meta).unwrap();
        for (y, x) in [(0usize, 0usize), (13, 40), (63, 79), (32, 5)] {
            let bins = DTable::<f64>::bins_at(&meta, y, x).unwrap();
            let from_table = &table.vectors()[table.index(bins)];
            let direct = meta.encode_at::<f64>(y, x).unwrap();
            assert_eq!(from_table, &direct, "pixel ({y}, {x})");
        }
    }

    #[test]
    fn encoding_is_deterministic() {
        let spec = EncoderSpec::new(&[MetaParam::PixelI, MetaParam::SunAzimuth], 100, 100, 1).unwrap();
        let a: Vec<f32> = combine_metadata(&record(42.0), &spec).unwrap();
        let b: Vec<f32> = combine_metadata(&record(42.0), &spec).unwrap();
        assert_eq!(a, b);
    }
}
