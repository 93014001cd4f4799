use std::collections::{BTreeMap, HashSet};
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::{DatasetError, SentimentLabel};

/// A single volunteer's 1-5 grade for one image.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GradeRecord {
    pub image_id: String,
    pub volunteer_id: String,
    pub grade: u8,
    pub form_id: String,
}

/// Aggregated label of one image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageLabel {
    pub image_id: String,
    pub mean_grade: f64,
    pub n_raters: usize,
    pub label: SentimentLabel,
}

/// Keeps the first grade of each (image, volunteer) pair, in input order.
pub fn dedupe_grades(records: &[GradeRecord]) -> Vec<GradeRecord> {
    let mut seen = HashSet::new();
    records
        .iter()
        .filter(|r| seen.insert((r.image_id.as_str(), r.volunteer_id.as_str())))
        .cloned()
        .collect()
}

/// Maps a list of 1-5 grades to a label by its mean: below 2.2 negative,
/// above 3.8 positive, neutral in between (both bounds inclusive).
///
/// The bounds are compared on the exact rational mean (`sum / n`), so no
/// rounding of the mean can move an image across a threshold.
pub fn aggregate_grades(grades: &[u8]) -> Result<SentimentLabel, DatasetError> {
    if grades.is_empty() {
        return Err(DatasetError::NoGrades);
    }
    if let Some(&g) = grades.iter().find(|&&g| !(1..=5).contains(&g)) {
        return Err(DatasetError::GradeOutOfRange(g));
    }
    let sum: u64 = grades.iter().map(|&g| u64::from(g)).sum();
    let n = grades.len() as u64;
    // mean < 11/5  <=>  5 * sum < 11 * n
    if 5 * sum < 11 * n {
        Ok(SentimentLabel::Negative)
    } else if 5 * sum > 19 * n {
        Ok(SentimentLabel::Positive)
    } else {
        Ok(SentimentLabel::Neutral)
    }
}

/// Dedupes `records` and aggregates each image's grades. Output is sorted
/// by image id.
pub fn aggregate_per_image(records: &[GradeRecord]) -> Result<Vec<ImageLabel>, DatasetError> {
    let mut by_image: BTreeMap<&str, Vec<u8>> = BTreeMap::new();
    let deduped = dedupe_grades(records);
    for r in &deduped {
        by_image
            .entry(r.image_id.as_str())
            .or_default()
            .push(r.grade);
    }
    by_image
        .into_iter()
        .map(|(id, grades)| {
            let label = aggregate_grades(&grades)?;
            let sum: f64 = grades.iter().map(|&g| f64::from(g)).sum();
            Ok(ImageLabel {
                image_id: id.to_string(),
                mean_grade: sum / grades.len() as f64,
                n_raters: grades.len(),
                label,
            })
        })
        .collect()
}

/// Reads grade records from delimited text with the header
/// `image_id,volunteer_id,grade,form_id`.
pub fn read_grades_csv<R: Read>(reader: R) -> Result<Vec<GradeRecord>, DatasetError> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut out = Vec::new();
    for row in rdr.deserialize() {
        let rec: GradeRecord = row?;
        if !(1..=5).contains(&rec.grade) {
            return Err(DatasetError::GradeOutOfRange(rec.grade));
        }
        out.push(rec);
    }
    Ok(out)
}

pub fn write_grades_csv<W: Write>(writer: W, records: &[GradeRecord]) -> Result<(), DatasetError> {
    let mut wtr = csv::Writer::from_writer(writer);
    for r in records {
        wtr.serialize(r)?;
    }
    wtr.flush()
        .map_err(|e| DatasetError::io("flushing grade export", e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use SentimentLabel::*;

    fn grade(image: &str, volunteer: &str, g: u8) -> GradeRecord {
        GradeRecord {
            image_id: image.into(),
            volunteer_id: volunteer.into(),
            grade: g,
            form_id: "f0".into(),
        }
    }

    #[test]
    fn dedupe_keeps_first_response() {
        let recs = vec![grade("I", "V", 4), grade("I", "V", 2)];
        let out = dedupe_grades(&recs);
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].grade, 4);
    }

    #[test]
    fn dedupe_trivial_cases() {
        assert!(dedupe_grades(&[]).is_empty());
        let recs: Vec<_> = (0..5).map(|v| grade("I", &format!("v{v}"), 3)).collect();
        assert_eq!(dedupe_grades(&recs), recs);
    }

    #[test]
    fn aggregate_examples() {
        assert_eq!(aggregate_grades(&[1, 1, 2, 2, 2]).unwrap(), Negative);
        assert_eq!(aggregate_grades(&[2, 2, 2, 2, 3]).unwrap(), Neutral);
        assert_eq!(aggregate_grades(&[5, 5, 5, 4, 5]).unwrap(), Positive);
        assert_eq!(aggregate_grades(&[4, 4, 4, 4, 3]).unwrap(), Neutral); // 3.8
        assert!(matches!(aggregate_grades(&[]), Err(DatasetError::NoGrades)));
        assert!(matches!(
            aggregate_grades(&[3, 0]),
            Err(DatasetError::GradeOutOfRange(0))
        ));
    }

    #[test]
    fn per_image_aggregation_uses_deduped_grades() {
        let recs = vec![
            grade("a", "v1", 1),
            grade("a", "v1", 5),
            grade("a", "v2", 1),
            grade("b", "v1", 5),
        ];
        let labels = aggregate_per_image(&recs).unwrap();
        assert_eq!(labels.len(), 2);
        assert_eq!(labels[0].n_raters, 2);
        assert_eq!(labels[0].label, Negative);
        assert_eq!(labels[1].label, Positive);
    }

    #[test]
    fn csv_round_trip() {
        let recs = vec![grade("a", "v1", 1), grade("b", "v2", 5)];
        let mut buf = Vec::new();
        write_grades_csv(&mut buf, &recs).unwrap();
        assert!(String::from_utf8_lossy(&buf).starts_with("image_id,volunteer_id,grade,form_id"));
        assert_eq!(read_grades_csv(&buf[..]).unwrap(), recs);
    }

    proptest! {
        #[test]
        fn dedupe_is_idempotent(raw in prop::collection::vec((0u8..4, 0u8..4, 1u8..=5), 0..40)) {
            let recs: Vec<_> = raw.iter()
                .map(|&(i, v, g)| grade(&i.to_string(), &v.to_string(), g))
                .collect();
            let once = dedupe_grades(&recs);
            prop_assert_eq!(dedupe_grades(&once), once);
        }

        #[test]
        fn aggregation_is_monotone(grades in prop::collection::vec(1u8..=5, 1..12), pos in 0usize..12) {
            let pos = pos % grades.len();
            let before = aggregate_grades(&grades).unwrap();
            let mut raised = grades.clone();
            raised[pos] = (raised[pos] + 1).min(5);
            prop_assert!(aggregate_grades(&raised).unwrap() >= before);
        }
    }
}
