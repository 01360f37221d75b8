use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use super::{DatasetError, Result, TimeSeriesDataset};

/// Measured quality of a shard relative to its pre-injection reference.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct QualityProfile {
    pub volume: f64,
    pub accuracy: f64,
    pub consistency: f64,
    pub completeness: f64,
}

impl QualityProfile {
    pub const PERFECT: QualityProfile = QualityProfile {
        volume: 1.0,
        accuracy: 1.0,
        consistency: 1.0,
        completeness: 1.0,
    };
}

/// Ids of every sample that belongs to a group of identical value vectors
/// carrying more than one label. Both members of a conflicting pair count.
pub fn inconsistent_ids(shard: &TimeSeriesDataset) -> BTreeSet<u64> {
    let mut groups: HashMap<Vec<u64>, Vec<usize>> = HashMap::new();
    for (i, s) in shard.samples.iter().enumerate() {
        let key = s.values.iter().map(|v| v.to_bits()).collect();
        groups.entry(key).or_default().push(i);
    }
    let mut out = BTreeSet::new();
    for members in groups.values().filter(|m| m.len() > 1) {
        let first = shard.samples[members[0]].label;
        if members.iter().any(|&i| shard.samples[i].label != first) {
            out.extend(members.iter().map(|&i| shard.samples[i].id));
        }
    }
    out
}

/// Computes volume, label accuracy, consistency and completeness of `shard`
/// against `reference`, all as fractions of the reference size.
///
/// Samples whose id is absent from the reference (injected duplicates) do not
/// count toward volume.
pub fn measure_quality(
    shard: &TimeSeriesDataset,
    reference: &TimeSeriesDataset,
) -> Result<QualityProfile> {
    if reference.is_empty() {
        return Err(DatasetError::InvalidReference("reference shard is empty".into()));
    }
    let n_ref = reference.len() as f64;
    let ref_labels: BTreeMap<u64, usize> =
        reference.samples.iter().map(|s| (s.id, s.label)).collect();

    let mut kept = 0usize;
    let mut mislabeled = 0usize;
    for s in &shard.samples {
        if let Some(&label) = ref_labels.get(&s.id) {
            kept += 1;
            if label != s.label {
                mislabeled += 1;
            }
        }
    }
    let inconsistent = inconsistent_ids(shard).len();
    let with_missing = shard.samples.iter().filter(|s| s.has_missing()).count();

    let frac = |count: usize| (1.0 - count as f64 / n_ref).clamp(0.0, 1.0);
    Ok(QualityProfile {
        volume: (kept as f64 / n_ref).clamp(0.0, 1.0),
        accuracy: frac(mislabeled),
        consistency: frac(inconsistent),
        completeness: frac(with_missing),
    })
}

/// Drops every member of a conflicting-duplicate group and every sample with
/// missing values. Mislabeled samples cannot be detected without ground truth
/// and are kept.
pub fn clean_shard(shard: &TimeSeriesDataset) -> TimeSeriesDataset {
    let dirty = inconsistent_ids(shard);
    let samples = shard
        .samples
        .iter()
        .filter(|s| !dirty.contains(&s.id) && !s.has_missing())
        .cloned()
        .collect();
    shard.with_samples(samples)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{DatasetType, Sample};

    fn shard(n: usize) -> TimeSeriesDataset {
        let samples = (0..n)
            .map(|i| Sample {
                id: i as u64,
                label: i % 3,
                values: vec![i as f64, (i * 7 % 11) as f64, 0.5],
            })
            .collect();
        TimeSeriesDataset::new("q", DatasetType::Synthetic, samples, 3, 3).unwrap()
    }

    /// O(n²) pairwise scan: a sample is inconsistent if some other sample has
    /// identical values and a different label.
    fn brute_force_inconsistent(d: &TimeSeriesDataset) -> usize {
        d.samples
            .iter()
            .filter(|a| {
                d.samples.iter().any(|b| {
                    a.id != b.id
                        && a.label != b.label
                        && a.values.iter().zip(&b.values).all(|(x, y)| x.to_bits() == y.to_bits())
                })
            })
            .count()
    }

    #[test]
    fn volume_only() {
        let reference = shard(100);
        let kept = reference.with_samples(reference.samples[..80].to_vec());
        let q = measure_quality(&kept, &reference).unwrap();
        assert_eq!(q.volume, 0.8);
        assert_eq!((q.accuracy, q.consistency, q.completeness), (1.0, 1.0, 1.0));
    }

    #[test]
    fn relabeled_samples_lower_accuracy() {
        let reference = shard(100);
        let mut noisy = reference.clone();
        for s in noisy.samples.iter_mut().take(20) {
            s.label = (s.label + 1) % 3;
        }
        let q = measure_quality(&noisy, &reference).unwrap();
        assert!((q.accuracy - 0.8).abs() < 1e-12);
        assert_eq!(q.volume, 1.0);
    }

    #[test]
    fn conflicting_duplicates_count_both_members() {
        let reference = shard(100);
        let mut dirty = reference.clone();
        for i in 0..10 {
            let mut dup = reference.samples[i * 7].clone();
            dup.id = 1000 + i as u64;
            dup.label = (dup.label + 2) % 3;
            dirty.samples.push(dup);
        }
        let expected_inconsistent = brute_force_inconsistent(&dirty);
        assert_eq!(expected_inconsistent, 20);
        assert_eq!(inconsistent_ids(&dirty).len(), expected_inconsistent);
        let q = measure_quality(&dirty, &reference).unwrap();
        assert!((q.consistency - 0.8).abs() < 1e-12);
        assert_eq!(q.volume, 1.0, "duplicates are excluded from volume");
    }

    #[test]
    fn agreeing_duplicates_are_consistent() {
        let reference = shard(10);
        let mut d = reference.clone();
        let mut dup = d.samples[0].clone();
        dup.id = 99;
        d.samples.push(dup);
        assert!(inconsistent_ids(&d).is_empty());
    }

    #[test]
    fn missing_values_lower_completeness_and_are_cleaned() {
        let reference = shard(50);
        let mut d = reference.clone();
        for s in d.samples.iter_mut().take(5) {
            s.values[1] = f64::NAN;
        }
        let q = measure_quality(&d, &reference).unwrap();
        assert!((q.completeness - 0.9).abs() < 1e-12);
        assert_eq!(clean_shard(&d).len(), 45);
    }

    #[test]
    fn empty_reference_is_rejected() {
        let reference = shard(3);
        let empty = reference.with_samples(vec![]);
        assert!(matches!(
            measure_quality(&reference, &empty),
            Err(DatasetError::InvalidReference(_))
        ));
    }
}
