//! Dataset manifests, patient-level splitting, augmentation and batching.
//!
//! A [`Manifest`] is the tabular description of a dataset: one
//! [`SampleRecord`] per image, keyed by `(source, image_path)`, carrying a
//! patient id and a three-way class label. Manifests are merged from
//! multiple source repositories under per-source [`SelectionRule`]s and are
//! always split at patient granularity, never at image granularity.

mod augment;
mod batch;
mod merge;
mod resize;
mod split;

pub use augment::{apply_augment, augment, AugmentParams, AugmentationConfig};
pub use batch::{rebalanced_batches, round_batch_size};
pub use merge::{merge_manifests, SelectionRule, ANY_SOURCE};
pub use resize::resize_bilinear;
pub use split::patient_split;
pub(crate) use split::choose_test_patients;

use crate::error::{Error, Result};
use crate::tensor::Tensor;
use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

/// The three infection classes, in fixed report order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ClassLabel {
    Normal,
    Pneumonia,
    Covid19,
}

impl ClassLabel {
    pub const COUNT: usize = 3;
    pub const ALL: [ClassLabel; 3] = [ClassLabel::Normal, ClassLabel::Pneumonia, ClassLabel::Covid19];

    pub fn index(self) -> usize {
        match self {
            ClassLabel::Normal => 0,
            ClassLabel::Pneumonia => 1,
            ClassLabel::Covid19 => 2,
        }
    }

    pub fn from_index(i: usize) -> Result<Self> {
        Self::ALL
            .get(i)
            .copied()
            .ok_or_else(|| Error::InvalidData(format!("class index {i} out of range")))
    }

    /// Manifest spelling.
    pub fn as_str(self) -> &'static str {
        match self {
            ClassLabel::Normal => "normal",
            ClassLabel::Pneumonia => "pneumonia",
            ClassLabel::Covid19 => "covid19",
        }
    }

    /// Column heading used in rendered metric tables.
    pub fn heading(self) -> &'static str {
        match self {
            ClassLabel::Normal => "Normal",
            ClassLabel::Pneumonia => "Non-COVID19",
            ClassLabel::Covid19 => "COVID-19",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "normal" => Ok(ClassLabel::Normal),
            "pneumonia" => Ok(ClassLabel::Pneumonia),
            "covid19" => Ok(ClassLabel::Covid19),
            other => Err(Error::InvalidData(format!(
                "unknown class label {other:?} (expected normal|pneumonia|covid19)"
            ))),
        }
    }
}

impl core::fmt::Display for ClassLabel {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One image entry of a manifest.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SampleRecord {
    pub patient_id: String,
    pub image_path: String,
    pub label: ClassLabel,
    pub source: String,
}

impl SampleRecord {
    pub fn validate(&self) -> Result<()> {
        if self.patient_id.is_empty() {
            return Err(Error::InvalidData(format!(
                "record {:?} has an empty patient_id",
                self.image_path
            )));
        }
        if self.image_path.is_empty() {
            return Err(Error::InvalidData(format!(
                "record for patient {:?} has an empty image_path",
                self.patient_id
            )));
        }
        Ok(())
    }
}

/// An ordered collection of sample records plus per-source provenance counts.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Manifest {
    records: Vec<SampleRecord>,
    provenance: BTreeMap<String, usize>,
}

impl Manifest {
    /// Validates records (non-empty fields, no duplicate `(source,
    /// image_path)` keys) and computes provenance.
    pub fn new(records: Vec<SampleRecord>) -> Result<Self> {
        let mut seen: BTreeSet<(&str, &str)> = BTreeSet::new();
        let mut provenance: BTreeMap<String, usize> = BTreeMap::new();
        for rec in &records {
            rec.validate()?;
            if !seen.insert((rec.source.as_str(), rec.image_path.as_str())) {
                return Err(Error::InvalidData(format!(
                    "duplicate record key ({}, {})",
                    rec.source, rec.image_path
                )));
            }
        }
        for rec in &records {
            *provenance.entry(rec.source.clone()).or_insert(0) += 1;
        }
        Ok(Manifest {
            records,
            provenance,
        })
    }

    pub fn records(&self) -> &[SampleRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn provenance(&self) -> &BTreeMap<String, usize> {
        &self.provenance
    }

    /// Image counts per class, in class order.
    pub fn image_counts(&self) -> [usize; 3] {
        let mut counts = [0usize; 3];
        for rec in &self.records {
            counts[rec.label.index()] += 1;
        }
        counts
    }

    /// Assigns each patient the majority label of its records (ties go to
    /// the lower class index). Split and reporting both use this rule.
    pub fn patient_classes(&self) -> BTreeMap<&str, ClassLabel> {
        let mut votes: BTreeMap<&str, [usize; 3]> = BTreeMap::new();
        for rec in &self.records {
            votes.entry(rec.patient_id.as_str()).or_insert([0; 3])[rec.label.index()] += 1;
        }
        votes
            .into_iter()
            .map(|(pid, v)| {
                let mut best = 0;
                for i in 1..3 {
                    if v[i] > v[best] {
                        best = i;
                    }
                }
                (pid, ClassLabel::from_index(best).expect("index < 3"))
            })
            .collect()
    }

    /// Distinct patient counts per class, under the majority rule.
    pub fn patient_counts(&self) -> [usize; 3] {
        let mut counts = [0usize; 3];
        for (_, class) in self.patient_classes() {
            counts[class.index()] += 1;
        }
        counts
    }

    /// Class-rebalanced batches of record indices; see
    /// [`rebalanced_batches`].
    pub fn batches(&self, batch_size: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
        let labels: Vec<ClassLabel> = self.records.iter().map(|r| r.label).collect();
        rebalanced_batches(&labels, batch_size, seed)
    }
}

/// An in-memory dataset: decoded grayscale images with labels and patient
/// ids, all index-aligned.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub images: Vec<Tensor>,
    pub labels: Vec<ClassLabel>,
    pub patient_ids: Vec<String>,
}

impl Dataset {
    pub fn new(images: Vec<Tensor>, labels: Vec<ClassLabel>, patient_ids: Vec<String>) -> Result<Self> {
        if images.len() != labels.len() || images.len() != patient_ids.len() {
            return Err(Error::InvalidData(format!(
                "dataset lengths disagree: {} images, {} labels, {} patients",
                images.len(),
                labels.len(),
                patient_ids.len()
            )));
        }
        if images.is_empty() {
            return Err(Error::InvalidData("dataset is empty".into()));
        }
        let shape = images[0].shape().to_vec();
        for (i, img) in images.iter().enumerate() {
            img.expect_rank(2, "dataset image")?;
            if img.shape() != shape {
                return Err(Error::InvalidData(format!(
                    "image {i} has shape {:?}, expected {shape:?}",
                    img.shape()
                )));
            }
        }
        Ok(Dataset {
            images,
            labels,
            patient_ids,
        })
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    /// Image side lengths `(h, w)`.
    pub fn image_hw(&self) -> (usize, usize) {
        (self.images[0].shape()[0], self.images[0].shape()[1])
    }

    /// Splits off a patient-disjoint validation subset; returns
    /// `(train_indices, val_indices)` in stable index order.
    pub fn carve_validation(&self, fraction: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
        let mut classes: BTreeMap<&str, [usize; 3]> = BTreeMap::new();
        for (pid, label) in self.patient_ids.iter().zip(&self.labels) {
            classes.entry(pid.as_str()).or_insert([0; 3])[label.index()] += 1;
        }
        let patient_classes: BTreeMap<&str, ClassLabel> = classes
            .into_iter()
            .map(|(pid, v)| {
                let mut best = 0;
                for i in 1..3 {
                    if v[i] > v[best] {
                        best = i;
                    }
                }
                (pid, ClassLabel::from_index(best).expect("index < 3"))
            })
            .collect();
        let val_patients = choose_test_patients(&patient_classes, fraction, seed)?;
        let mut train = Vec::new();
        let mut val = Vec::new();
        for (i, pid) in self.patient_ids.iter().enumerate() {
            if val_patients.contains(pid.as_str()) {
                val.push(i);
            } else {
                train.push(i);
            }
        }
        Ok((train, val))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::string::ToString;
    use alloc::vec;

    pub(crate) fn rec(pid: &str, path: &str, label: ClassLabel, source: &str) -> SampleRecord {
        SampleRecord {
            patient_id: pid.to_string(),
            image_path: path.to_string(),
            label,
            source: source.to_string(),
        }
    }

    #[test]
    fn manifest_rejects_duplicate_keys() {
        let records = vec![
            rec("p1", "a.png", ClassLabel::Normal, "src"),
            rec("p2", "a.png", ClassLabel::Covid19, "src"),
        ];
        assert!(Manifest::new(records).is_err());
    }

    #[test]
    fn provenance_counts_sum_to_len() {
        let m = Manifest::new(vec![
            rec("p1", "a.png", ClassLabel::Normal, "s1"),
            rec("p2", "b.png", ClassLabel::Covid19, "s2"),
            rec("p3", "c.png", ClassLabel::Covid19, "s2"),
        ])
        .unwrap();
        let total: usize = m.provenance().values().sum();
        assert_eq!(total, m.len());
        assert_eq!(m.provenance()["s2"], 2);
    }

    #[test]
    fn label_parse_round_trips() {
        for label in ClassLabel::ALL {
            assert_eq!(ClassLabel::parse(label.as_str()).unwrap(), label);
        }
        assert!(ClassLabel::parse("covid").is_err());
    }
}
