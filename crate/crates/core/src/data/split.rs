//! Patient-level train/test splitting.

use crate::data::{ClassLabel, Manifest};
use crate::error::{Error, Result};
use crate::rng::stream_rng;
use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use rand::seq::SliceRandom;

/// Picks the per-class test patients: `round(fraction * class patients)`,
/// clamped so both sides keep at least one patient of every class.
pub(crate) fn choose_test_patients(
    patient_classes: &BTreeMap<&str, ClassLabel>,
    fraction: f64,
    seed: u64,
) -> Result<BTreeSet<String>> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::InvalidData(format!(
            "test fraction must lie in (0, 1), got {fraction}"
        )));
    }
    let mut per_class: [Vec<&str>; 3] = [Vec::new(), Vec::new(), Vec::new()];
    for (pid, class) in patient_classes {
        per_class[class.index()].push(pid);
    }
    let mut test: BTreeSet<String> = BTreeSet::new();
    for (ci, patients) in per_class.iter_mut().enumerate() {
        if patients.len() < 2 {
            return Err(Error::InvalidData(format!(
                "class {} has {} patient(s); need at least 2 to split",
                ClassLabel::from_index(ci).expect("index < 3"),
                patients.len()
            )));
        }
        // BTreeMap iteration gave a sorted base order; the shuffle is the
        // only randomness.
        let mut rng = stream_rng(seed, "patient-split", ci as u64);
        patients.shuffle(&mut rng);
        let want = crate::math::round(fraction * patients.len() as f64) as usize;
        let take = want.clamp(1, patients.len() - 1);
        for pid in patients.iter().take(take) {
            test.insert((*pid).to_string());
        }
    }
    Ok(test)
}

/// Splits a manifest into patient-disjoint train and test manifests.
///
/// Every record of a patient lands on the same side. Deterministic in
/// `seed`. A class with fewer than two patients is rejected.
pub fn patient_split(
    manifest: &Manifest,
    test_fraction_per_class: f64,
    seed: u64,
) -> Result<(Manifest, Manifest)> {
    let patient_classes = manifest.patient_classes();
    let test_patients = choose_test_patients(&patient_classes, test_fraction_per_class, seed)?;
    let mut train = Vec::new();
    let mut test = Vec::new();
    for rec in manifest.records() {
        if test_patients.contains(rec.patient_id.as_str()) {
            test.push(rec.clone());
        } else {
            train.push(rec.clone());
        }
    }
    Ok((Manifest::new(train)?, Manifest::new(test)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::SampleRecord;
    use alloc::vec;

    fn rec(pid: &str, path: &str, label: ClassLabel) -> SampleRecord {
        SampleRecord {
            patient_id: pid.to_string(),
            image_path: path.to_string(),
            label,
            source: "s".to_string(),
        }
    }

    fn balanced_manifest(patients_per_class: usize) -> Manifest {
        let mut records = Vec::new();
        for class in ClassLabel::ALL {
            for p in 0..patients_per_class {
                let pid = format!("{class}-{p}");
                records.push(rec(&pid, &format!("{pid}.png"), class));
            }
        }
        Manifest::new(records).unwrap()
    }

    #[test]
    fn fraction_of_ten_patients_gives_two_per_class() {
        let m = balanced_manifest(10);
        let (train, test) = patient_split(&m, 0.2, 3).unwrap();
        assert_eq!(test.patient_counts(), [2, 2, 2]);
        assert_eq!(train.patient_counts(), [8, 8, 8]);
        let train_ids: BTreeSet<_> = train.records().iter().map(|r| r.patient_id.clone()).collect();
        let test_ids: BTreeSet<_> = test.records().iter().map(|r| r.patient_id.clone()).collect();
        assert!(train_ids.is_disjoint(&test_ids));
    }

    #[test]
    fn all_images_of_a_patient_stay_together() {
        let mut records = vec![
            rec("multi", "m1.png", ClassLabel::Covid19),
            rec("multi", "m2.png", ClassLabel::Covid19),
            rec("multi", "m3.png", ClassLabel::Covid19),
        ];
        for p in 0..6 {
            records.push(rec(&format!("n{p}"), &format!("n{p}.png"), ClassLabel::Normal));
            records.push(rec(&format!("q{p}"), &format!("q{p}.png"), ClassLabel::Pneumonia));
            records.push(rec(&format!("c{p}"), &format!("c{p}.png"), ClassLabel::Covid19));
        }
        let m = Manifest::new(records).unwrap();
        for seed in 0..20 {
            let (train, test) = patient_split(&m, 0.3, seed).unwrap();
            let on_train = train.records().iter().filter(|r| r.patient_id == "multi").count();
            let on_test = test.records().iter().filter(|r| r.patient_id == "multi").count();
            assert!(
                (on_train == 3 && on_test == 0) || (on_train == 0 && on_test == 3),
                "seed {seed}: patient records split {on_train}/{on_test}"
            );
        }
    }

    #[test]
    fn deterministic_in_seed() {
        let m = balanced_manifest(9);
        let a = patient_split(&m, 0.25, 11).unwrap();
        let b = patient_split(&m, 0.25, 11).unwrap();
        assert_eq!(a.0, b.0);
        assert_eq!(a.1, b.1);
        let c = patient_split(&m, 0.25, 12).unwrap();
        assert!(c.0 != a.0 || c.1 != a.1);
    }

    #[test]
    fn class_with_single_patient_rejected() {
        let records = vec![
            rec("only", "o.png", ClassLabel::Covid19),
            rec("n1", "n1.png", ClassLabel::Normal),
            rec("n2", "n2.png", ClassLabel::Normal),
            rec("p1", "p1.png", ClassLabel::Pneumonia),
            rec("p2", "p2.png", ClassLabel::Pneumonia),
        ];
        let m = Manifest::new(records).unwrap();
        let err = patient_split(&m, 0.5, 0).unwrap_err();
        assert!(matches!(err, Error::InvalidData(msg) if msg.contains("covid19")));
    }

    #[test]
    fn invalid_fraction_rejected() {
        let m = balanced_manifest(4);
        assert!(patient_split(&m, 0.0, 0).is_err());
        assert!(patient_split(&m, 1.0, 0).is_err());
    }
}
