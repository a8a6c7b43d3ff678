use super::{DataError, Dataset, ImageSet, LabelSet};
use crate::rng::{streams, SplitMix64};
use crate::MIN_CLASSES;

/// Isotropic Gaussian clusters with controllable pairwise overlap.
#[derive(Debug, Clone, PartialEq)]
pub struct BlobSpec {
    pub num_classes: usize,
    pub samples_per_class: usize,
    pub dim: usize,
    pub class_centers: Vec<Vec<f64>>,
    /// Per-class standard deviation.
    pub spread: f64,
    /// `(i, j, distance)`: move centers `i` and `j` symmetrically about their
    /// midpoint until they are `distance` apart.
    pub confusable_pairs: Vec<(usize, usize, f64)>,
}

impl BlobSpec {
    /// Centers evenly spaced on a circle of `radius` in the first two coordinates.
    /// Remaining coordinates are zero. Requires `dim >= 2`.
    pub fn ring(
        num_classes: usize,
        samples_per_class: usize,
        dim: usize,
        radius: f64,
        spread: f64,
    ) -> Self {
        let class_centers = (0..num_classes)
            .map(|c| {
                let angle = std::f64::consts::TAU * c as f64 / num_classes as f64;
                let mut center = vec![0.0; dim];
                if dim >= 2 {
                    center[0] = radius * angle.cos();
                    center[1] = radius * angle.sin();
                }
                center
            })
            .collect();
        Self {
            num_classes,
            samples_per_class,
            dim,
            class_centers,
            spread,
            confusable_pairs: Vec::new(),
        }
    }

    pub fn with_confusable_pair(mut self, i: usize, j: usize, distance: f64) -> Self {
        self.confusable_pairs.push((i, j, distance));
        self
    }

    pub fn validate(&self) -> Result<(), DataError> {
        let bad = |msg: String| Err(DataError::InvalidSpec(msg));
        if self.num_classes < MIN_CLASSES {
            return bad(format!(
                "num_classes = {} (need >= {MIN_CLASSES})",
                self.num_classes
            ));
        }
        if self.samples_per_class == 0 || self.dim == 0 {
            return bad("samples_per_class and dim must be positive".into());
        }
        if self.class_centers.len() != self.num_classes {
            return bad(format!(
                "{} centers for {} classes",
                self.class_centers.len(),
                self.num_classes
            ));
        }
        if let Some(c) = self.class_centers.iter().position(|c| c.len() != self.dim) {
            return bad(format!("center {c} does not have length {}", self.dim));
        }
        if self.class_centers.iter().flatten().any(|v| !v.is_finite()) {
            return bad("non-finite center coordinate".into());
        }
        if !(self.spread > 0.0 && self.spread.is_finite()) {
            return bad(format!("spread must be positive, got {}", self.spread));
        }
        for &(i, j, d) in &self.confusable_pairs {
            if i >= self.num_classes || j >= self.num_classes || i == j {
                return bad(format!(
                    "confusable pair ({i}, {j}) is not two distinct classes"
                ));
            }
            if !(d >= 0.0 && d.is_finite()) {
                return bad(format!("confusable pair distance {d} must be >= 0"));
            }
        }
        Ok(())
    }

    /// Centers after applying the confusable-pair overrides in order.
    pub fn effective_centers(&self) -> Vec<Vec<f64>> {
        let mut centers = self.class_centers.clone();
        for &(i, j, distance) in &self.confusable_pairs {
            let mid: Vec<f64> = centers[i]
                .iter()
                .zip(&centers[j])
                .map(|(a, b)| 0.5 * (a + b))
                .collect();
            let diff: Vec<f64> = centers[j]
                .iter()
                .zip(&centers[i])
                .map(|(b, a)| b - a)
                .collect();
            let norm = diff.iter().map(|d| d * d).sum::<f64>().sqrt();
            // coincident centers: separate along the first axis
            let unit: Vec<f64> = if norm > 0.0 {
                diff.iter().map(|d| d / norm).collect()
            } else {
                let mut e = vec![0.0; self.dim];
                e[0] = 1.0;
                e
            };
            let half = 0.5 * distance;
            centers[i] = mid.iter().zip(&unit).map(|(m, u)| m - half * u).collect();
            centers[j] = mid.iter().zip(&unit).map(|(m, u)| m + half * u).collect();
        }
        centers
    }
}

/// Samples are stored class-major: all of class 0, then class 1, and so on.
/// Each sample draws `dim` standard normals in coordinate order.
pub fn make_blobs(spec: &BlobSpec, seed: u64) -> Result<Dataset, DataError> {
    spec.validate()?;
    let centers = spec.effective_centers();
    let mut rng = SplitMix64::for_stream(seed, streams::BLOBS);
    let count = spec.num_classes * spec.samples_per_class;
    let mut features = Vec::with_capacity(count * spec.dim);
    let mut labels = Vec::with_capacity(count);
    for (class, center) in centers.iter().enumerate() {
        for _ in 0..spec.samples_per_class {
            features.extend(
                center
                    .iter()
                    .map(|&m| m + spec.spread * rng.next_gaussian()),
            );
            labels.push(class);
        }
    }
    Dataset::new(
        ImageSet::from_features(count, spec.dim, features),
        LabelSet::new(spec.num_classes, labels)?,
    )
}
