//! Multi-source manifest merging under per-source selection rules.

use crate::data::{ClassLabel, Manifest, SampleRecord};
use crate::error::{Error, Result};
use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

/// Wildcard source name: a rule with this source applies to any record whose
/// source has no dedicated rule.
pub const ANY_SOURCE: &str = "*";

/// Which labels a source repository contributes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SelectionRule {
    source: String,
    admitted: BTreeSet<ClassLabel>,
}

impl SelectionRule {
    /// A rule must admit at least one label.
    pub fn new(source: impl Into<String>, admitted: impl IntoIterator<Item = ClassLabel>) -> Result<Self> {
        let admitted: BTreeSet<ClassLabel> = admitted.into_iter().collect();
        if admitted.is_empty() {
            return Err(Error::InvalidData(
                "selection rule admits no labels".into(),
            ));
        }
        Ok(SelectionRule {
            source: source.into(),
            admitted,
        })
    }

    /// The identity rule: admits every label from any source.
    pub fn all() -> Self {
        SelectionRule {
            source: String::from(ANY_SOURCE),
            admitted: ClassLabel::ALL.iter().copied().collect(),
        }
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn admits(&self, label: ClassLabel) -> bool {
        self.admitted.contains(&label)
    }
}

/// Combines source manifests, keeping exactly the records admitted by their
/// source's rule.
///
/// Records are keyed by `(source, image_path)`; a key seen twice with the
/// same label is kept once, and conflicting labels for one key reject the
/// whole merge with every conflict listed. Patients appearing in several
/// sources are kept once per distinct image.
pub fn merge_manifests(sources: &[(Manifest, SelectionRule)]) -> Result<Manifest> {
    let mut rules: BTreeMap<&str, &SelectionRule> = BTreeMap::new();
    for (_, rule) in sources {
        if rules.insert(rule.source(), rule).is_some() {
            return Err(Error::InvalidData(format!(
                "duplicate selection rule for source {:?}",
                rule.source()
            )));
        }
    }

    let mut kept: Vec<SampleRecord> = Vec::new();
    let mut seen: BTreeMap<(String, String), ClassLabel> = BTreeMap::new();
    let mut conflicts: Vec<String> = Vec::new();
    for (manifest, _) in sources {
        for rec in manifest.records() {
            let rule = rules
                .get(rec.source.as_str())
                .or_else(|| rules.get(ANY_SOURCE))
                .ok_or_else(|| {
                    Error::InvalidData(format!(
                        "no selection rule for source {:?}",
                        rec.source
                    ))
                })?;
            if !rule.admits(rec.label) {
                continue;
            }
            let key = (rec.source.clone(), rec.image_path.clone());
            match seen.get(&key) {
                Some(&label) if label == rec.label => continue,
                Some(&label) => {
                    conflicts.push(format!(
                        "({}, {}): {} vs {}",
                        key.0, key.1, label, rec.label
                    ));
                    continue;
                }
                None => {
                    seen.insert(key, rec.label);
                    kept.push(rec.clone());
                }
            }
        }
    }
    if !conflicts.is_empty() {
        return Err(Error::InvalidData(format!(
            "conflicting labels for {} record key(s): {}",
            conflicts.len(),
            conflicts.join("; ")
        )));
    }
    Manifest::new(kept)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::string::ToString;
    use alloc::vec;

    fn rec(pid: &str, path: &str, label: ClassLabel, source: &str) -> SampleRecord {
        SampleRecord {
            patient_id: pid.to_string(),
            image_path: path.to_string(),
            label,
            source: source.to_string(),
        }
    }

    fn manifest(records: Vec<SampleRecord>) -> Manifest {
        Manifest::new(records).unwrap()
    }

    #[test]
    fn rules_filter_each_source() {
        // rule A admits only covid19; rule B admits normal + pneumonia.
        let a = manifest(vec![
            rec("a1", "a1.png", ClassLabel::Covid19, "A"),
            rec("a2", "a2.png", ClassLabel::Covid19, "A"),
            rec("a3", "a3.png", ClassLabel::Covid19, "A"),
            rec("a4", "a4.png", ClassLabel::Normal, "A"),
            rec("a5", "a5.png", ClassLabel::Normal, "A"),
        ]);
        let b = manifest(vec![
            rec("b1", "b1.png", ClassLabel::Normal, "B"),
            rec("b2", "b2.png", ClassLabel::Normal, "B"),
            rec("b3", "b3.png", ClassLabel::Normal, "B"),
            rec("b4", "b4.png", ClassLabel::Normal, "B"),
            rec("b5", "b5.png", ClassLabel::Covid19, "B"),
        ]);
        let merged = merge_manifests(&[
            (a, SelectionRule::new("A", [ClassLabel::Covid19]).unwrap()),
            (
                b,
                SelectionRule::new("B", [ClassLabel::Normal, ClassLabel::Pneumonia]).unwrap(),
            ),
        ])
        .unwrap();
        assert_eq!(merged.len(), 7);
        assert_eq!(merged.image_counts(), [4, 0, 3]);
    }

    #[test]
    fn empty_admitted_set_is_rejected() {
        assert!(SelectionRule::new("A", []).is_err());
    }

    #[test]
    fn conflicting_labels_listed() {
        let a = manifest(vec![rec("p", "x.png", ClassLabel::Normal, "S")]);
        let b = manifest(vec![rec("p", "x.png", ClassLabel::Covid19, "S")]);
        let rule = SelectionRule::all();
        let err = merge_manifests(&[(a, SelectionRule::new("S", ClassLabel::ALL).unwrap()), (b, rule)]);
        // second rule is a wildcard so both manifests resolve; same key with
        // different labels must reject.
        let err = err.unwrap_err();
        assert!(matches!(err, Error::InvalidData(m) if m.contains("x.png")));
    }

    #[test]
    fn merge_is_idempotent_under_identity_rule() {
        let m = manifest(vec![
            rec("p1", "a.png", ClassLabel::Normal, "S1"),
            rec("p2", "b.png", ClassLabel::Covid19, "S2"),
            rec("p2", "c.png", ClassLabel::Covid19, "S2"),
        ]);
        let again = merge_manifests(&[(m.clone(), SelectionRule::all())]).unwrap();
        assert_eq!(again, m);
    }

    #[test]
    fn unknown_source_without_wildcard_is_rejected() {
        let m = manifest(vec![rec("p1", "a.png", ClassLabel::Normal, "mystery")]);
        let err = merge_manifests(&[(m, SelectionRule::new("other", ClassLabel::ALL).unwrap())]);
        assert!(err.is_err());
    }
}
