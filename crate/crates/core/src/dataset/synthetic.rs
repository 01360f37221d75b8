use std::f64::consts::TAU;

use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{DatasetError, DatasetType, Result, Sample, TimeSeriesDataset};
use crate::rng;

/// Parameters of the synthetic time-series generator.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub name: String,
    pub n_samples: usize,
    pub n_classes: usize,
    pub sequence_length: usize,
    /// Prototype amplitude relative to unit Gaussian noise.
    pub class_separation: f64,
    pub seed: u64,
}

/// Smooth class prototype: a sum of three random sinusoids, normalised to zero
/// mean and unit RMS.
fn prototype(len: usize, rng: &mut rng::Rng) -> Vec<f64> {
    let waves: Vec<(f64, f64, f64)> = (0..3)
        .map(|_| {
            (
                rng.random_range(0.5..1.0),
                rng.random_range(0.5..4.0),
                rng.random_range(0.0..TAU),
            )
        })
        .collect();
    let mut p: Vec<f64> = (0..len)
        .map(|t| {
            let x = t as f64 / len as f64;
            waves.iter().map(|(a, f, ph)| a * (TAU * f * x + ph).sin()).sum()
        })
        .collect();
    let mean = p.iter().sum::<f64>() / len as f64;
    p.iter_mut().for_each(|v| *v -= mean);
    let rms = (p.iter().map(|v| v * v).sum::<f64>() / len as f64).sqrt();
    if rms > 0.0 {
        p.iter_mut().for_each(|v| *v /= rms);
    }
    p
}

/// Draws a balanced labelled dataset: each sample is its class prototype
/// scaled by `class_separation` plus i.i.d. standard normal noise.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<TimeSeriesDataset> {
    if !(spec.class_separation >= 0.0 && spec.class_separation.is_finite()) {
        return Err(DatasetError::InvalidSpec(format!(
            "class_separation must be a non-negative number, got {}",
            spec.class_separation
        )));
    }
    if spec.n_classes < 2 || spec.sequence_length == 0 {
        return Err(DatasetError::InvalidSpec(
            "need at least 2 classes and a positive sequence length".into(),
        ));
    }
    if spec.n_samples < spec.n_classes {
        return Err(DatasetError::InvalidSpec(format!(
            "{} samples cannot cover {} classes",
            spec.n_samples, spec.n_classes
        )));
    }
    let mut proto_rng = rng::stream(spec.seed, &[rng::tag("prototypes")]);
    let prototypes: Vec<Vec<f64>> = (0..spec.n_classes)
        .map(|_| prototype(spec.sequence_length, &mut proto_rng))
        .collect();

    let mut labels: Vec<usize> = (0..spec.n_samples).map(|i| i % spec.n_classes).collect();
    let mut rng = rng::stream(spec.seed, &[rng::tag("samples")]);
    labels.shuffle(&mut rng);
    let samples = labels
        .into_iter()
        .enumerate()
        .map(|(i, label)| Sample {
            id: i as u64,
            label,
            values: prototypes[label]
                .iter()
                .map(|p| {
                    let noise: f64 = StandardNormal.sample(&mut rng);
                    spec.class_separation * p + noise
                })
                .collect(),
        })
        .collect();
    TimeSeriesDataset::new(
        spec.name.clone(),
        DatasetType::Synthetic,
        samples,
        spec.n_classes,
        spec.sequence_length,
    )
}
