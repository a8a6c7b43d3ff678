//! IDX containers (MNIST family).
//!
//! ```text
//! IDX3 images: u32 BE magic 0x00000803 | u32 BE count | u32 BE rows | u32 BE cols | u8 payload
//! IDX1 labels: u32 BE magic 0x00000801 | u32 BE count | u8 payload
//! ```
//! The payload length must match the header exactly; trailing bytes are an error.

use super::{DataError, ImageSet, LabelSet};
use crate::MIN_CLASSES;

pub const IDX3_MAGIC: u32 = 0x0000_0803;
pub const IDX1_MAGIC: u32 = 0x0000_0801;

fn read_u32(bytes: &[u8], offset: usize) -> Option<u32> {
    let word = bytes.get(offset..offset + 4)?;
    Some(u32::from_be_bytes(word.try_into().ok()?))
}

fn check_magic(bytes: &[u8], expected: u32, header_len: usize) -> Result<(), DataError> {
    let found = read_u32(bytes, 0).ok_or(DataError::TruncatedPayload {
        expected: header_len,
        actual: bytes.len(),
    })?;
    if found != expected {
        return Err(DataError::WrongMagic { expected, found });
    }
    if bytes.len() < header_len {
        return Err(DataError::TruncatedPayload {
            expected: header_len,
            actual: bytes.len(),
        });
    }
    Ok(())
}

pub fn parse_idx_images(bytes: &[u8]) -> Result<ImageSet, DataError> {
    check_magic(bytes, IDX3_MAGIC, 16)?;
    let dim = |o| read_u32(bytes, o).expect("header length checked") as usize;
    let (count, rows, cols) = (dim(4), dim(8), dim(12));
    let expected = count
        .checked_mul(rows)
        .and_then(|n| n.checked_mul(cols))
        .and_then(|n| n.checked_add(16))
        .unwrap_or(usize::MAX);
    if bytes.len() != expected {
        return Err(DataError::TruncatedPayload {
            expected,
            actual: bytes.len(),
        });
    }
    Ok(ImageSet {
        count,
        height: rows,
        width: cols,
        pixels: bytes[16..].iter().map(|&b| f64::from(b) / 255.0).collect(),
    })
}

pub fn parse_idx_labels(bytes: &[u8], num_classes: usize) -> Result<LabelSet, DataError> {
    if num_classes < MIN_CLASSES {
        return Err(DataError::TooFewClasses(num_classes));
    }
    check_magic(bytes, IDX1_MAGIC, 8)?;
    let count = read_u32(bytes, 4).expect("header length checked") as usize;
    let expected = count.saturating_add(8);
    if bytes.len() != expected {
        return Err(DataError::TruncatedPayload {
            expected,
            actual: bytes.len(),
        });
    }
    LabelSet::new(
        num_classes,
        bytes[8..].iter().map(|&b| b as usize).collect(),
    )
}

fn dim_u32(d: usize) -> Result<[u8; 4], DataError> {
    u32::try_from(d)
        .map(u32::to_be_bytes)
        .map_err(|_| DataError::DimensionOverflow(d))
}

/// Serializes an image set. Each value must be `k / 255` for an integer `k` in
/// `0..=255` (up to rounding); anything else is rejected rather than quantized.
pub fn encode_idx_images(images: &ImageSet) -> Result<Vec<u8>, DataError> {
    let mut out = Vec::with_capacity(16 + images.pixels.len());
    out.extend_from_slice(&IDX3_MAGIC.to_be_bytes());
    out.extend_from_slice(&dim_u32(images.count)?);
    out.extend_from_slice(&dim_u32(images.height)?);
    out.extend_from_slice(&dim_u32(images.width)?);
    for (index, &value) in images.pixels.iter().enumerate() {
        let scaled = value * 255.0;
        let level = scaled.round();
        if !(0.0..=255.0).contains(&level) || (scaled - level).abs() > 1e-6 {
            return Err(DataError::NotAnIntensity { index, value });
        }
        out.push(level as u8);
    }
    Ok(out)
}

pub fn encode_idx_labels(labels: &LabelSet) -> Result<Vec<u8>, DataError> {
    let mut out = Vec::with_capacity(8 + labels.count());
    out.extend_from_slice(&IDX1_MAGIC.to_be_bytes());
    out.extend_from_slice(&dim_u32(labels.count())?);
    for (index, &label) in labels.labels.iter().enumerate() {
        let byte = u8::try_from(label).map_err(|_| DataError::LabelOutOfRange {
            index,
            label,
            num_classes: 256,
        })?;
        out.push(byte);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn header(magic: u32, dims: &[u32]) -> Vec<u8> {
        let mut v = magic.to_be_bytes().to_vec();
        for d in dims {
            v.extend_from_slice(&d.to_be_bytes());
        }
        v
    }

    #[test]
    fn parses_hand_encoded_image() {
        let mut bytes = header(0x803, &[1, 2, 2]);
        bytes.extend_from_slice(&[0, 255, 128, 0]);
        assert_eq!(bytes.len(), 20);
        let set = parse_idx_images(&bytes).unwrap();
        assert_eq!((set.count, set.height, set.width), (1, 2, 2));
        assert_eq!(set.pixels, vec![0.0, 1.0, 128.0 / 255.0, 0.0]);
    }

    #[test]
    fn zero_count_image_file() {
        let set = parse_idx_images(&header(0x803, &[0, 28, 28])).unwrap();
        assert_eq!(set.count, 0);
        assert!(set.pixels.is_empty());
    }

    #[test]
    fn label_magic_in_image_parser() {
        let err = parse_idx_images(&header(0x801, &[0, 1, 1])).unwrap_err();
        assert_eq!(
            err,
            DataError::WrongMagic {
                expected: 0x803,
                found: 0x801
            }
        );
    }

    #[test]
    fn short_and_long_image_payloads() {
        let mut bytes = header(0x803, &[1, 2, 2]);
        bytes.extend_from_slice(&[1, 2, 3]);
        assert!(matches!(
            parse_idx_images(&bytes),
            Err(DataError::TruncatedPayload {
                expected: 20,
                actual: 19
            })
        ));
        bytes.extend_from_slice(&[4, 5]);
        assert!(matches!(
            parse_idx_images(&bytes),
            Err(DataError::TruncatedPayload {
                expected: 20,
                actual: 21
            })
        ));
        assert!(matches!(
            parse_idx_images(&[0, 0, 8]),
            Err(DataError::TruncatedPayload { .. })
        ));
        assert!(matches!(
            parse_idx_images(&header(0x803, &[1, 2])),
            Err(DataError::TruncatedPayload { .. })
        ));
    }

    #[test]
    fn huge_header_dims_do_not_overflow() {
        let bytes = header(0x803, &[u32::MAX, u32::MAX, u32::MAX]);
        assert!(matches!(
            parse_idx_images(&bytes),
            Err(DataError::TruncatedPayload { .. })
        ));
    }

    #[test]
    fn parses_hand_encoded_labels() {
        let mut bytes = header(0x801, &[3]);
        bytes.extend_from_slice(&[0, 2, 1]);
        assert_eq!(bytes.len(), 11);
        let set = parse_idx_labels(&bytes, 3).unwrap();
        assert_eq!(set.labels, vec![0, 2, 1]);
        assert_eq!(set.num_classes, 3);
    }

    #[test]
    fn empty_label_file() {
        let set = parse_idx_labels(&header(0x801, &[0]), 10).unwrap();
        assert_eq!(set.count(), 0);
    }

    #[test]
    fn label_out_of_range() {
        let mut bytes = header(0x801, &[1]);
        bytes.push(7);
        assert!(matches!(
            parse_idx_labels(&bytes, 3),
            Err(DataError::LabelOutOfRange {
                label: 7,
                num_classes: 3,
                ..
            })
        ));
    }

    #[test]
    fn label_parser_rejects_image_magic_and_binary_tasks() {
        assert!(matches!(
            parse_idx_labels(&header(0x803, &[0]), 3),
            Err(DataError::WrongMagic { .. })
        ));
        assert_eq!(
            parse_idx_labels(&header(0x801, &[0]), 2),
            Err(DataError::TooFewClasses(2))
        );
    }

    #[test]
    fn encoder_rejects_non_intensities() {
        let set = ImageSet::from_features(1, 2, vec![0.5, -1.0]);
        assert!(matches!(
            encode_idx_images(&set),
            Err(DataError::NotAnIntensity { index: 0, .. })
        ));
    }

    proptest! {
        #[test]
        fn image_round_trip(count in 0usize..4, h in 1usize..5, w in 1usize..5, seed in any::<u64>()) {
            let mut rng = crate::rng::SplitMix64::new(seed);
            let mut bytes = header(0x803, &[count as u32, h as u32, w as u32]);
            bytes.extend((0..count * h * w).map(|_| rng.next_below(256) as u8));
            let parsed = parse_idx_images(&bytes).unwrap();
            let encoded = encode_idx_images(&parsed).unwrap();
            prop_assert_eq!(&encoded, &bytes);
            prop_assert_eq!(parse_idx_images(&encoded).unwrap(), parsed);
        }

        #[test]
        fn parsing_is_total(bytes in proptest::collection::vec(any::<u8>(), 0..64)) {
            // Any input yields either a consistent set or an error; never a panic.
            if let Ok(set) = parse_idx_images(&bytes) {
                prop_assert_eq!(set.pixels.len(), set.count * set.height * set.width);
            }
            if let Ok(set) = parse_idx_labels(&bytes, 5) {
                prop_assert!(set.labels.iter().all(|&l| l < 5));
            }
        }
    }
}
