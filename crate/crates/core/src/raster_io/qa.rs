use std::collections::HashSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum QaSpecError {
    #[error("bit position {bit} for flag {flag:?} outside 0..=15")]
    BitOutOfRange { flag: String, bit: u8 },
    #[error("bit position {0} assigned to more than one flag")]
    DuplicateBit(u8),
    #[error("flag name {0:?} declared twice")]
    DuplicateName(String),
    #[error("reject flag {0:?} is not a named flag")]
    UnknownRejectFlag(String),
}

/// Named bits of a 16-bit quality word and the subset that marks a pixel
/// unusable.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawQaBitSpec", into = "RawQaBitSpec")]
pub struct QaBitSpec {
    named_flags: Vec<(String, u8)>,
    reject_flags: Vec<String>,
    reject_mask: u16,
}

#[derive(Serialize, Deserialize)]
struct RawQaBitSpec {
    named_flags: Vec<(String, u8)>,
    reject_flags: Vec<String>,
}

impl TryFrom<RawQaBitSpec> for QaBitSpec {
    type Error = QaSpecError;

    fn try_from(raw: RawQaBitSpec) -> Result<Self, Self::Error> {
        QaBitSpec::new(raw.named_flags, raw.reject_flags)
    }
}

impl From<QaBitSpec> for RawQaBitSpec {
    fn from(spec: QaBitSpec) -> Self {
        RawQaBitSpec {
            named_flags: spec.named_flags,
            reject_flags: spec.reject_flags,
        }
    }
}

impl QaBitSpec {
    pub fn new<S: Into<String>>(
        named_flags: impl IntoIterator<Item = (S, u8)>,
        reject_flags: impl IntoIterator<Item = S>,
    ) -> Result<Self, QaSpecError> {
        let named_flags: Vec<(String, u8)> = named_flags
            .into_iter()
            .map(|(n, b)| (n.into(), b))
            .collect();
        let reject_flags: Vec<String> = reject_flags.into_iter().map(Into::into).collect();

        let mut bits = HashSet::new();
        let mut names = HashSet::new();
        for (name, bit) in &named_flags {
            if *bit > 15 {
                return Err(QaSpecError::BitOutOfRange {
                    flag: name.clone(),
                    bit: *bit,
                });
            }
            if !bits.insert(*bit) {
                return Err(QaSpecError::DuplicateBit(*bit));
            }
            if !names.insert(name.as_str()) {
                return Err(QaSpecError::DuplicateName(name.clone()));
            }
        }
        let mut reject_mask = 0u16;
        for r in &reject_flags {
            let (_, bit) = named_flags
                .iter()
                .find(|(n, _)| n == r)
                .ok_or_else(|| QaSpecError::UnknownRejectFlag(r.clone()))?;
            reject_mask |= 1 << bit;
        }
        Ok(QaBitSpec {
            named_flags,
            reject_flags,
            reject_mask,
        })
    }

    /// Landsat Collection-2 `QA_PIXEL` layout. Dilated cloud, cloud, cloud
    /// shadow and snow reject a pixel.
    pub fn landsat_c2() -> Self {
        QaBitSpec::new(
            [
                ("fill", 0),
                ("dilated_cloud", 1),
                ("cirrus", 2),
                ("cloud", 3),
                ("cloud_shadow", 4),
                ("snow", 5),
                ("clear", 6),
                ("water", 7),
            ],
            ["dilated_cloud", "cloud", "cloud_shadow", "snow"],
        )
        .expect("static spec is valid")
    }

    pub fn named_flags(&self) -> &[(String, u8)] {
        &self.named_flags
    }

    pub fn reject_flags(&self) -> &[String] {
        &self.reject_flags
    }

    pub fn reject_mask(&self) -> u16 {
        self.reject_mask
    }

    pub fn bit_of(&self, flag: &str) -> Option<u8> {
        self.named_flags
            .iter()
            .find(|(n, _)| n == flag)
            .map(|(_, b)| *b)
    }
}

impl Default for QaBitSpec {
    fn default() -> Self {
        QaBitSpec::landsat_c2()
    }
}

/// False iff any reject flag's bit is set in `pixel`.
pub fn decode_qa(pixel: u16, spec: &QaBitSpec) -> bool {
    pixel & spec.reject_mask == 0
}

/// Interprets a raster sample as a QA word. Samples that are not integers
/// in 0..=65535 (including nodata NaN) are reported as `None`.
pub fn qa_word(sample: f64) -> Option<u16> {
    if sample.fract() == 0.0 && (0.0..=65535.0).contains(&sample) {
        Some(sample as u16)
    } else {
        None
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cloud_shadow() -> QaBitSpec {
        QaBitSpec::new([("cloud", 3), ("shadow", 4)], ["cloud", "shadow"]).unwrap()
    }

    #[test]
    fn zero_pixel_is_usable() {
        assert!(decode_qa(0, &QaBitSpec::landsat_c2()));
        assert!(decode_qa(0, &cloud_shadow()));
    }

    #[test]
    fn cloud_bit_rejects() {
        let spec = QaBitSpec::new([("cloud", 3)], ["cloud"]).unwrap();
        assert!(!decode_qa(8, &spec));
    }

    #[test]
    fn non_reject_bit_passes() {
        assert!(decode_qa(2, &cloud_shadow()));
    }

    #[test]
    fn brute_force_all_words() {
        let spec = cloud_shadow();
        for p in 0..=u16::MAX {
            let expected = (p >> 3) & 1 == 0 && (p >> 4) & 1 == 0;
            assert_eq!(decode_qa(p, &spec), expected, "pixel {p}");
        }
    }

    #[test]
    fn landsat_default_layout() {
        let spec = QaBitSpec::landsat_c2();
        assert_eq!(spec.reject_mask(), 0b11_1010);
        assert!(decode_qa(1 << 6, &spec)); // clear
        assert!(decode_qa(1 << 2, &spec)); // cirrus is not rejected
        assert!(!decode_qa(1 << 5, &spec));
    }

    #[test]
    fn invalid_specs() {
        assert_eq!(
            QaBitSpec::new([("a", 16)], Vec::<&str>::new()),
            Err(QaSpecError::BitOutOfRange {
                flag: "a".into(),
                bit: 16
            })
        );
        assert_eq!(
            QaBitSpec::new([("a", 1), ("b", 1)], Vec::<&str>::new()),
            Err(QaSpecError::DuplicateBit(1))
        );
        assert_eq!(
            QaBitSpec::new([("a", 1)], ["b"]),
            Err(QaSpecError::UnknownRejectFlag("b".into()))
        );
    }

    #[test]
    fn serde_revalidates() {
        let json = serde_json::to_string(&QaBitSpec::landsat_c2()).unwrap();
        let back: QaBitSpec = serde_json::from_str(&json).unwrap();
        assert_eq!(back, QaBitSpec::landsat_c2());
        let bad = r#"{"named_flags":[["x",20]],"reject_flags":[]}"#;
        assert!(serde_json::from_str::<QaBitSpec>(bad).is_err());
    }

    #[test]
    fn qa_word_conversion() {
        assert_eq!(qa_word(8.0), Some(8));
        assert_eq!(qa_word(f64::NAN), None);
        assert_eq!(qa_word(-1.0), None);
        assert_eq!(qa_word(1.5), None);
    }
}
