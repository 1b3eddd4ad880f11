//! Feature CSV parsing and the bundled reference dataset.

use serde::{Deserialize, Serialize};

use super::FeatureVector;
use crate::signal::{ClassLabel, SurgeryPhase};
use crate::stls::LinearParams;
use crate::{Error, Result};

/// Twenty identified parameter sets: ten AA and ten AVM recordings, five
/// before and five after surgery each. After-surgery rows are labelled Treated.
pub const REFERENCE_CSV: &str = include_str!("../../data/reference_parameters.csv");

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ReferenceRow {
    pub subject: String,
    pub pathology: ClassLabel,
    pub phase: SurgeryPhase,
    pub params: LinearParams,
    pub label: ClassLabel,
}

#[derive(Deserialize)]
struct RawRow {
    subject: String,
    pathology: String,
    phase: String,
    a: f64,
    b: f64,
    epsilon: f64,
    label: String,
}

pub fn reference_rows() -> Vec<ReferenceRow> {
    csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_reader(REFERENCE_CSV.as_bytes())
        .deserialize::<RawRow>()
        .map(|r| {
            let r = r.expect("bundled dataset is well formed");
            ReferenceRow {
                subject: r.subject,
                pathology: r.pathology.parse().expect("bundled pathology"),
                phase: r.phase.parse().expect("bundled phase"),
                params: LinearParams::new(r.a, r.b, r.epsilon).expect("bundled parameters"),
                label: r.label.parse().expect("bundled label"),
            }
        })
        .collect()
}

pub fn reference_dataset() -> Vec<FeatureVector> {
    reference_rows()
        .iter()
        .map(|r| FeatureVector::new(r.params.a, r.params.b, r.params.epsilon, r.label).expect("finite"))
        .collect()
}

/// Parses rows with at least `a, b, epsilon, label` columns (by header name,
/// any order, extra columns ignored). Every bad row is reported.
pub fn parse_features_csv(text: &str) -> Result<Vec<FeatureVector>> {
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let headers = reader
        .headers()
        .map_err(|e| Error::input(format!("cannot read CSV header: {e}")))?
        .clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::input(format!("features CSV lacks column {name:?}")))
    };
    let idx = [col("a")?, col("b")?, col("epsilon")?];
    let li = col("label")?;

    let mut out = Vec::new();
    let mut diagnostics = Vec::new();
    for (row, record) in reader.records().enumerate() {
        let line = row + 2;
        let record = match record {
            Ok(r) => r,
            Err(e) => {
                diagnostics.push(format!("line {line}: {e}"));
                continue;
            }
        };
        let mut vals = [0.0; 3];
        let mut ok = true;
        for (k, (&i, name)) in idx.iter().zip(["a", "b", "epsilon"]).enumerate() {
            match record.get(i).map(str::parse::<f64>) {
                Some(Ok(x)) if x.is_finite() => vals[k] = x,
                _ => {
                    diagnostics.push(format!("line {line}: {name} = {:?} is not a finite number", record.get(i).unwrap_or("")));
                    ok = false;
                }
            }
        }
        let label = match record.get(li).map(str::parse::<ClassLabel>) {
            Some(Ok(l)) => Some(l),
            _ => {
                diagnostics.push(format!("line {line}: label = {:?} is not AA, AVM, Treated or 0-2", record.get(li).unwrap_or("")));
                None
            }
        };
        if let (true, Some(label)) = (ok, label) {
            out.push(FeatureVector::new(vals[0], vals[1], vals[2], label)?);
        }
    }
    if !diagnostics.is_empty() {
        return Err(Error::Malformed { diagnostics });
    }
    if out.is_empty() {
        return Err(Error::input("features CSV has no rows"));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_dataset_shape() {
        let rows = reference_rows();
        assert_eq!(rows.len(), 20);
        let count = |l: ClassLabel| rows.iter().filter(|r| r.label == l).count();
        assert_eq!((count(ClassLabel::AA), count(ClassLabel::AVM), count(ClassLabel::Treated)), (5, 5, 10));
        assert!(rows.iter().all(|r| (r.phase == SurgeryPhase::After) == (r.label == ClassLabel::Treated)));
        let first = &rows[0];
        assert_eq!((first.params.a, first.params.b, first.params.epsilon), (27.5, 455.0, 35500.0));
        let avm3 = rows.iter().find(|r| r.subject == "avm-03").unwrap();
        assert_eq!((avm3.params.a, avm3.params.b), (8.7, 220.0));
        assert_eq!(reference_dataset().len(), 20);
    }

    #[test]
    fn bundled_csv_parses_as_features() {
        let parsed = parse_features_csv(REFERENCE_CSV).unwrap();
        assert_eq!(parsed, reference_dataset());
    }

    #[test]
    fn diagnostics_per_line() {
        let text = "label,epsilon,b,a\nAA,1,2,3\n1,x,2,3\nfoo,1,2,3\n2,1,2,inf\n";
        match parse_features_csv(text).unwrap_err() {
            Error::Malformed { diagnostics } => {
                assert_eq!(diagnostics.len(), 3);
                assert!(diagnostics[0].starts_with("line 3: epsilon"));
                assert!(diagnostics[1].starts_with("line 4: label"));
                assert!(diagnostics[2].starts_with("line 5: a"));
            }
            e => panic!("unexpected {e:?}"),
        }
        let ok = parse_features_csv("a,b,epsilon,label\n1,2,3,Treated\n").unwrap();
        assert_eq!(ok[0].raw(), [1.0, 2.0, 3.0]);
        assert!(parse_features_csv("a,b,label\n1,2,AA\n").is_err());
    }
}
