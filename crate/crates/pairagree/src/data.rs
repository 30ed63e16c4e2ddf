//! Measurement data model: the paired wide CSV format produced by agreement
//! studies, and the long format the model fitter consumes.
//!
//! A study records, for every subject and visit time, one binary outcome per
//! measuring method, each administered by a (possibly different) rater. The
//! wide format has one row per (subject, time); the long format has one row
//! per (subject, rater, method, time).
//!
//! ```
//! use pairagree::data::{parse_wide_csv, widen_to_long, CsvColumns, OutcomeLabels};
//!
//! let text = "id,time,y1,y2,rater1,rater2\n\
//!             S1,1,Positive,Negative,R1,R2\n\
//!             S1,2,Negative,Negative,R2,R1\n\
//!             S2,1,Positive,Positive,R1,R2\n";
//! let paired = parse_wide_csv(text, &CsvColumns::default(), &OutcomeLabels::default())?;
//! let dataset = widen_to_long(&paired)?;
//! assert_eq!(paired.len(), 3);
//! assert_eq!(dataset.records().len(), 6);
//! assert_eq!(dataset.n_subjects(), 2);
//! # Ok::<(), pairagree::Error>(())
//! ```

use std::collections::{HashMap, HashSet};
use std::fmt;

use crate::error::{Error, Result};

/// The two measuring methods under comparison.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Method {
    One,
    Two,
}

impl Method {
    /// Zero-based index, used for array addressing.
    pub fn index(self) -> usize {
        match self {
            Method::One => 0,
            Method::Two => 1,
        }
    }

    pub fn from_index(idx: usize) -> Option<Method> {
        match idx {
            0 => Some(Method::One),
            1 => Some(Method::Two),
            _ => None,
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.index() + 1)
    }
}

/// One row of the wide input format: a pair of binary outcomes taken on the
/// same subject at the same time, one per method, each by its own rater.
#[derive(Debug, Clone, PartialEq)]
pub struct PairedRecord {
    pub subject_id: String,
    pub time: f64,
    pub outcome_m1: u8,
    pub outcome_m2: u8,
    pub rater_m1: String,
    pub rater_m2: String,
}

/// One row of the long format consumed by the fitter.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementRecord {
    pub subject_index: usize,
    pub rater_index: usize,
    pub method: Method,
    pub time: f64,
    pub outcome: u8,
}

/// The long dataset: records sorted by (subject, method, time), with dense
/// label maps for subjects and raters. Raters share one index space across
/// both methods.
#[derive(Debug, Clone)]
pub struct LongDataset {
    records: Vec<MeasurementRecord>,
    subject_labels: Vec<String>,
    rater_labels: Vec<String>,
}

impl LongDataset {
    /// Builds a dataset from raw records, sorting them into the canonical
    /// (subject, method, time) order and checking index-map density and
    /// per-(subject, time, method) uniqueness.
    pub fn new(
        mut records: Vec<MeasurementRecord>,
        subject_labels: Vec<String>,
        rater_labels: Vec<String>,
    ) -> Result<LongDataset> {
        if records.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let n_subjects = subject_labels.len();
        let n_raters = rater_labels.len();
        for r in &records {
            if r.subject_index >= n_subjects {
                return Err(Error::Invalid(format!(
                    "subject index {} out of range (I = {})",
                    r.subject_index, n_subjects
                )));
            }
            if r.rater_index >= n_raters {
                return Err(Error::Invalid(format!(
                    "rater index {} out of range (J = {})",
                    r.rater_index, n_raters
                )));
            }
            if r.outcome > 1 {
                return Err(Error::Invalid(format!("outcome {} is not binary", r.outcome)));
            }
            if !r.time.is_finite() {
                return Err(Error::Invalid("non-finite time value".into()));
            }
        }
        records.sort_by(|a, b| {
            (a.subject_index, a.method, ordered(a.time))
                .cmp(&(b.subject_index, b.method, ordered(b.time)))
        });
        let mut seen = HashSet::new();
        let mut subj_seen = vec![false; n_subjects];
        let mut rater_seen = vec![false; n_raters];
        for r in &records {
            if !seen.insert((r.subject_index, r.method, ordered(r.time))) {
                return Err(Error::Invalid(format!(
                    "duplicate measurement for subject '{}', method {}, time {}",
                    subject_labels[r.subject_index], r.method, r.time
                )));
            }
            subj_seen[r.subject_index] = true;
            rater_seen[r.rater_index] = true;
        }
        if let Some(i) = subj_seen.iter().position(|&s| !s) {
            return Err(Error::Invalid(format!(
                "subject '{}' has no records (index map not dense)",
                subject_labels[i]
            )));
        }
        if let Some(j) = rater_seen.iter().position(|&s| !s) {
            return Err(Error::Invalid(format!(
                "rater '{}' has no records (index map not dense)",
                rater_labels[j]
            )));
        }
        Ok(LongDataset {
            records,
            subject_labels,
            rater_labels,
        })
    }

    pub fn records(&self) -> &[MeasurementRecord] {
        &self.records
    }

    pub fn n_subjects(&self) -> usize {
        self.subject_labels.len()
    }

    pub fn n_raters(&self) -> usize {
        self.rater_labels.len()
    }

    pub fn subject_labels(&self) -> &[String] {
        &self.subject_labels
    }

    pub fn rater_labels(&self) -> &[String] {
        &self.rater_labels
    }

    /// Distinct observed times of one subject, ascending (union over methods).
    pub fn subject_times(&self, subject_index: usize) -> Vec<f64> {
        let mut times: Vec<f64> = self
            .records
            .iter()
            .filter(|r| r.subject_index == subject_index)
            .map(|r| r.time)
            .collect();
        times.sort_by(|a, b| a.partial_cmp(b).unwrap());
        times.dedup();
        times
    }

    /// Number of distinct time points per subject.
    pub fn times_per_subject(&self) -> Vec<usize> {
        (0..self.n_subjects())
            .map(|i| self.subject_times(i).len())
            .collect()
    }
}

fn ordered(t: f64) -> u64 {
    // total order on finite times; sign-aware bit trick
    let bits = t.to_bits() as i64;
    (if bits < 0 { !bits } else { bits ^ i64::MIN }) as u64
}

/// Column names of the wide CSV format.
#[derive(Debug, Clone)]
pub struct CsvColumns {
    pub id: String,
    pub time: String,
    pub outcome_m1: String,
    pub outcome_m2: String,
    pub rater_m1: String,
    pub rater_m2: String,
}

impl Default for CsvColumns {
    fn default() -> Self {
        CsvColumns {
            id: "id".into(),
            time: "time".into(),
            outcome_m1: "y1".into(),
            outcome_m2: "y2".into(),
            rater_m1: "rater1".into(),
            rater_m2: "rater2".into(),
        }
    }
}

/// Outcome label mapping. Labels are matched case-sensitively; anything other
/// than the two configured labels is rejected.
#[derive(Debug, Clone)]
pub struct OutcomeLabels {
    pub positive: String,
    pub negative: String,
}

impl Default for OutcomeLabels {
    fn default() -> Self {
        OutcomeLabels {
            positive: "Positive".into(),
            negative: "Negative".into(),
        }
    }
}

impl OutcomeLabels {
    fn map(&self, token: &str, line: usize) -> Result<u8> {
        if token == self.positive {
            Ok(1)
        } else if token == self.negative {
            Ok(0)
        } else {
            Err(Error::Parse {
                line,
                msg: format!(
                    "unknown outcome label '{}' (expected '{}' or '{}')",
                    token, self.positive, self.negative
                ),
            })
        }
    }
}

/// Parses the wide CSV format: header row, then one row per (subject, time)
/// with both methods' outcomes and raters.
pub fn parse_wide_csv(
    text: &str,
    columns: &CsvColumns,
    labels: &OutcomeLabels,
) -> Result<Vec<PairedRecord>> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .flexible(false)
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());

    let headers = reader
        .headers()
        .map_err(|e| Error::Parse {
            line: 1,
            msg: format!("bad header: {e}"),
        })?
        .clone();
    let col = |name: &str| -> Result<usize> {
        headers.iter().position(|h| h == name).ok_or_else(|| Error::Parse {
            line: 1,
            msg: format!("missing column '{name}'"),
        })
    };
    let c_id = col(&columns.id)?;
    let c_time = col(&columns.time)?;
    let c_y1 = col(&columns.outcome_m1)?;
    let c_y2 = col(&columns.outcome_m2)?;
    let c_r1 = col(&columns.rater_m1)?;
    let c_r2 = col(&columns.rater_m2)?;

    let mut out = Vec::new();
    let mut seen: HashSet<(String, u64)> = HashSet::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map(|p| p.line() as usize).unwrap_or(0);
            Error::Parse {
                line,
                msg: e.to_string(),
            }
        })?;
        let line = rec.position().map(|p| p.line() as usize).unwrap_or(0);
        let field = |idx: usize| -> Result<&str> {
            rec.get(idx).ok_or_else(|| Error::Parse {
                line,
                msg: "short row".into(),
            })
        };
        let id = field(c_id)?.to_string();
        let time_tok = field(c_time)?;
        let time: f64 = time_tok.parse().map_err(|_| Error::Parse {
            line,
            msg: format!("bad time value '{time_tok}'"),
        })?;
        if !time.is_finite() {
            return Err(Error::Parse {
                line,
                msg: format!("non-finite time value '{time_tok}'"),
            });
        }
        let outcome_m1 = labels.map(field(c_y1)?, line)?;
        let outcome_m2 = labels.map(field(c_y2)?, line)?;
        let rater_m1 = field(c_r1)?.to_string();
        let rater_m2 = field(c_r2)?.to_string();
        if !seen.insert((id.clone(), ordered(time))) {
            return Err(Error::Parse {
                line,
                msg: format!("duplicate (id, time) pair ('{id}', {time})"),
            });
        }
        out.push(PairedRecord {
            subject_id: id,
            time,
            outcome_m1,
            outcome_m2,
            rater_m1,
            rater_m2,
        });
    }
    if out.is_empty() {
        return Err(Error::EmptyDataset);
    }
    Ok(out)
}

/// Reshapes paired records into the long format: two measurement records per
/// pair. Rater labels from both methods are unioned into one shared index
/// space, in order of first appearance.
pub fn widen_to_long(paired: &[PairedRecord]) -> Result<LongDataset> {
    if paired.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut subject_labels: Vec<String> = Vec::new();
    let mut subject_index: HashMap<String, usize> = HashMap::new();
    let mut rater_labels: Vec<String> = Vec::new();
    let mut rater_index: HashMap<String, usize> = HashMap::new();
    let intern = |labels: &mut Vec<String>, index: &mut HashMap<String, usize>, key: &str| {
        *index.entry(key.to_string()).or_insert_with(|| {
            labels.push(key.to_string());
            labels.len() - 1
        })
    };

    let mut records = Vec::with_capacity(paired.len() * 2);
    for p in paired {
        let si = intern(&mut subject_labels, &mut subject_index, &p.subject_id);
        let r1 = intern(&mut rater_labels, &mut rater_index, &p.rater_m1);
        let r2 = intern(&mut rater_labels, &mut rater_index, &p.rater_m2);
        records.push(MeasurementRecord {
            subject_index: si,
            rater_index: r1,
            method: Method::One,
            time: p.time,
            outcome: p.outcome_m1,
        });
        records.push(MeasurementRecord {
            subject_index: si,
            rater_index: r2,
            method: Method::Two,
            time: p.time,
            outcome: p.outcome_m2,
        });
    }
    LongDataset::new(records, subject_labels, rater_labels)
}

/// Data-quality report; informational, never a failure.
#[derive(Debug, Clone)]
pub struct ValidationReport {
    pub n_subjects: usize,
    pub n_raters: usize,
    pub n_records: usize,
    pub min_times: usize,
    pub max_times: usize,
    /// Overall fraction of positive outcomes per method.
    pub prevalence: [f64; 2],
    /// Subjects whose outcomes are all identical (separation risk).
    pub constant_subjects: Vec<String>,
    /// Raters appearing under only one method.
    pub single_method_raters: Vec<String>,
    /// True when the response is constant overall or within a method.
    pub complete_separation: bool,
    pub messages: Vec<String>,
}

pub fn validate(ds: &LongDataset) -> ValidationReport {
    let mut messages = Vec::new();
    let n_subjects = ds.n_subjects();
    let n_raters = ds.n_raters();

    let tps = ds.times_per_subject();
    let min_times = tps.iter().copied().min().unwrap_or(0);
    let max_times = tps.iter().copied().max().unwrap_or(0);

    let mut pos = [0usize; 2];
    let mut tot = [0usize; 2];
    for r in ds.records() {
        tot[r.method.index()] += 1;
        pos[r.method.index()] += r.outcome as usize;
    }
    let prevalence = [
        pos[0] as f64 / tot[0].max(1) as f64,
        pos[1] as f64 / tot[1].max(1) as f64,
    ];

    let mut constant_subjects = Vec::new();
    for i in 0..n_subjects {
        let outcomes: Vec<u8> = ds
            .records()
            .iter()
            .filter(|r| r.subject_index == i)
            .map(|r| r.outcome)
            .collect();
        if outcomes.iter().all(|&y| y == outcomes[0]) {
            constant_subjects.push(ds.subject_labels()[i].clone());
        }
    }

    let mut methods_per_rater: Vec<[bool; 2]> = vec![[false; 2]; n_raters];
    for r in ds.records() {
        methods_per_rater[r.rater_index][r.method.index()] = true;
    }
    let single_method_raters: Vec<String> = (0..n_raters)
        .filter(|&j| methods_per_rater[j][0] != methods_per_rater[j][1])
        .map(|j| ds.rater_labels()[j].clone())
        .collect();

    let per_method_constant = (0..2).any(|m| pos[m] == 0 || pos[m] == tot[m]);
    let complete_separation = per_method_constant;
    if complete_separation {
        messages.push("complete separation: constant response".to_string());
    }
    if n_subjects < 2 {
        messages.push("fewer than 2 subjects; model fitting requires I >= 2".to_string());
    }
    if n_raters < 2 {
        messages.push("fewer than 2 raters; rater effects are not identifiable".to_string());
    }
    if min_times != max_times {
        messages.push(format!(
            "unbalanced design: subjects observed at {min_times} to {max_times} time points"
        ));
    }

    ValidationReport {
        n_subjects,
        n_raters,
        n_records: ds.records().len(),
        min_times,
        max_times,
        prevalence,
        constant_subjects,
        single_method_raters,
        complete_separation,
        messages,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const PSEUDODATA: &str = "\
id,time,y1,y2,rater1,rater2
1,1,Negative,Negative,A,B
1,2,Negative,Positive,C,D
2,1,Positive,Positive,A,D
2,2,Negative,Negative,B,C
3,1,Positive,Negative,E,F
";

    fn parse_default(text: &str) -> Result<Vec<PairedRecord>> {
        parse_wide_csv(text, &CsvColumns::default(), &OutcomeLabels::default())
    }

    #[test]
    fn parses_pseudodata_row() {
        let recs = parse_default(PSEUDODATA).unwrap();
        assert_eq!(recs.len(), 5);
        assert_eq!(
            recs[0],
            PairedRecord {
                subject_id: "1".into(),
                time: 1.0,
                outcome_m1: 0,
                outcome_m2: 0,
                rater_m1: "A".into(),
                rater_m2: "B".into(),
            }
        );
    }

    #[test]
    fn header_only_is_empty_dataset() {
        let err = parse_default("id,time,y1,y2,rater1,rater2\n").unwrap_err();
        assert!(matches!(err, Error::EmptyDataset));
    }

    #[test]
    fn typo_label_is_rejected_with_line() {
        let text = "id,time,y1,y2,rater1,rater2\n1,1,Negative,Postive,A,B\n";
        let err = parse_default(text).unwrap_err();
        match err {
            Error::Parse { line, msg } => {
                assert_eq!(line, 2);
                assert!(msg.contains("Postive"), "{msg}");
            }
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn duplicate_id_time_is_rejected() {
        let text = "id,time,y1,y2,rater1,rater2\n1,1,Negative,Negative,A,B\n1,1,Positive,Positive,C,D\n";
        let err = parse_default(text).unwrap_err();
        assert!(err.to_string().contains("duplicate"), "{err}");
    }

    #[test]
    fn widen_doubles_record_count() {
        let recs = parse_default(PSEUDODATA).unwrap();
        let ds = widen_to_long(&recs).unwrap();
        assert_eq!(ds.records().len(), 2 * recs.len());
        assert_eq!(ds.n_subjects(), 3);
        assert_eq!(ds.n_raters(), 6);
    }

    #[test]
    fn widen_single_pair() {
        let recs = vec![PairedRecord {
            subject_id: "s".into(),
            time: 1.0,
            outcome_m1: 1,
            outcome_m2: 0,
            rater_m1: "A".into(),
            rater_m2: "A".into(),
        }];
        let ds = widen_to_long(&recs).unwrap();
        assert_eq!(ds.records().len(), 2);
        assert_eq!(ds.n_subjects(), 1);
        assert_eq!(ds.n_raters(), 1);
    }

    #[test]
    fn records_sorted_by_subject_method_time() {
        let recs = parse_default(PSEUDODATA).unwrap();
        let ds = widen_to_long(&recs).unwrap();
        let keys: Vec<(usize, usize, f64)> = ds
            .records()
            .iter()
            .map(|r| (r.subject_index, r.method.index(), r.time))
            .collect();
        let mut sorted = keys.clone();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert_eq!(keys, sorted);
    }

    #[test]
    fn validate_flags_constant_response() {
        let text = "id,time,y1,y2,rater1,rater2\n1,1,Positive,Positive,A,B\n2,1,Positive,Positive,B,A\n";
        let ds = widen_to_long(&parse_default(text).unwrap()).unwrap();
        let report = validate(&ds);
        assert!(report.complete_separation);
        assert!(report
            .messages
            .iter()
            .any(|m| m.contains("complete separation")));
        assert_eq!(report.constant_subjects.len(), 2);
    }

    #[test]
    fn validate_reports_unbalancedness() {
        let recs = parse_default(PSEUDODATA).unwrap();
        let ds = widen_to_long(&recs).unwrap();
        let report = validate(&ds);
        assert_eq!(report.min_times, 1);
        assert_eq!(report.max_times, 2);
        assert!(report.messages.iter().any(|m| m.contains("unbalanced")));
    }

    #[test]
    fn round_trip_pairing_preserves_records() {
        // widen + pair-up is identity up to ordering
        let recs = parse_default(PSEUDODATA).unwrap();
        let ds = widen_to_long(&recs).unwrap();
        // reconstruct pairs from the long data
        let mut by_key: HashMap<(usize, u64), [Option<&MeasurementRecord>; 2]> = HashMap::new();
        for r in ds.records() {
            let slot = by_key
                .entry((r.subject_index, ordered(r.time)))
                .or_insert([None, None]);
            slot[r.method.index()] = Some(r);
        }
        assert_eq!(by_key.len(), recs.len());
        for p in &recs {
            let si = ds
                .subject_labels()
                .iter()
                .position(|l| *l == p.subject_id)
                .unwrap();
            let pair = &by_key[&(si, ordered(p.time))];
            let (m1, m2) = (pair[0].unwrap(), pair[1].unwrap());
            assert_eq!(m1.outcome, p.outcome_m1);
            assert_eq!(m2.outcome, p.outcome_m2);
            assert_eq!(ds.rater_labels()[m1.rater_index], p.rater_m1);
            assert_eq!(ds.rater_labels()[m2.rater_index], p.rater_m2);
        }
    }
}
