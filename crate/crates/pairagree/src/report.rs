//! Plain-text persistence: key=value configuration files, sectioned report
//! documents, and the versioned fit-state format that downstream commands
//! consume instead of refitting.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use nalgebra::DMatrix;

use crate::agreement::SubjectSummary;
use crate::data::LongDataset;
use crate::error::{Error, Result};
use crate::glmm::{
    FitResult, FixedEffects, ModelSpec, RaterEffect, ResidualCorrelation, TimeTrend,
    VarianceComponents,
};

pub const FIT_STATE_VERSION: u32 = 1;

/// Parses `key = value` lines. `#` starts a comment, blank lines are skipped,
/// duplicate keys are an error. Values keep internal whitespace.
pub fn parse_key_values(text: &str) -> Result<BTreeMap<String, String>> {
    let mut map = BTreeMap::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = match raw.find('#') {
            Some(pos) => &raw[..pos],
            None => raw,
        };
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| Error::Parse {
            line: lineno + 1,
            msg: format!("expected 'key = value', got {line:?}"),
        })?;
        let key = key.trim().to_string();
        let value = value.trim().to_string();
        if key.is_empty() {
            return Err(Error::Parse {
                line: lineno + 1,
                msg: "empty key".into(),
            });
        }
        if map.insert(key.clone(), value).is_some() {
            return Err(Error::Parse {
                line: lineno + 1,
                msg: format!("duplicate key {key:?}"),
            });
        }
    }
    Ok(map)
}

/// An ordered sectioned document of `key = value` entries, the on-disk shape
/// of fit states and reports.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Document {
    pub sections: Vec<(String, Vec<(String, String)>)>,
}

impl Document {
    pub fn new() -> Document {
        Document::default()
    }

    pub fn section(&mut self, name: &str) -> &mut Vec<(String, String)> {
        self.sections.push((name.to_string(), Vec::new()));
        &mut self.sections.last_mut().unwrap().1
    }

    pub fn get(&self, section: &str) -> Option<&[(String, String)]> {
        self.sections
            .iter()
            .find(|(n, _)| n == section)
            .map(|(_, e)| e.as_slice())
    }

    pub fn value(&self, section: &str, key: &str) -> Result<&str> {
        self.get(section)
            .and_then(|entries| entries.iter().find(|(k, _)| k == key))
            .map(|(_, v)| v.as_str())
            .ok_or_else(|| Error::Invalid(format!("missing [{section}] {key}")))
    }

    pub fn f64(&self, section: &str, key: &str) -> Result<f64> {
        let raw = self.value(section, key)?;
        raw.parse()
            .map_err(|_| Error::Invalid(format!("[{section}] {key}: bad number {raw:?}")))
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for (name, entries) in &self.sections {
            let _ = writeln!(out, "[{name}]");
            for (k, v) in entries {
                let _ = writeln!(out, "{k} = {v}");
            }
            out.push('\n');
        }
        out
    }

    pub fn parse(text: &str) -> Result<Document> {
        let mut doc = Document::new();
        let mut current: Option<usize> = None;
        for (lineno, raw) in text.lines().enumerate() {
            let line = match raw.find('#') {
                Some(pos) => &raw[..pos],
                None => raw,
            };
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(name) = line.strip_prefix('[').and_then(|s| s.strip_suffix(']')) {
                doc.sections.push((name.to_string(), Vec::new()));
                current = Some(doc.sections.len() - 1);
                continue;
            }
            let idx = current.ok_or_else(|| Error::Parse {
                line: lineno + 1,
                msg: "entry before first [section] header".into(),
            })?;
            let (key, value) = line.split_once('=').ok_or_else(|| Error::Parse {
                line: lineno + 1,
                msg: format!("expected 'key = value', got {line:?}"),
            })?;
            doc.sections[idx]
                .1
                .push((key.trim().to_string(), value.trim().to_string()));
        }
        Ok(doc)
    }
}

/// Shortest round-trip float formatting, shared by every writer so equal
/// inputs always produce byte-equal files.
pub fn fmt_f64(v: f64) -> String {
    if v.is_nan() {
        "nan".into()
    } else {
        format!("{v}")
    }
}

fn parse_f64(raw: &str) -> Result<f64> {
    if raw == "nan" {
        return Ok(f64::NAN);
    }
    raw.parse()
        .map_err(|_| Error::Invalid(format!("bad number {raw:?}")))
}

fn spec_entries(spec: ModelSpec) -> Vec<(String, String)> {
    let trend = match spec.time_trend {
        TimeTrend::None => "none",
        TimeTrend::Linear => "linear",
    };
    let resid = match spec.residual_correlation {
        ResidualCorrelation::Independent => "independent",
        ResidualCorrelation::Ar1 => "ar1",
    };
    let rater = match spec.rater_effect {
        RaterEffect::Included => "included",
        RaterEffect::Omitted => "omitted",
    };
    vec![
        ("time_trend".into(), trend.into()),
        ("residual_correlation".into(), resid.into()),
        ("rater_effect".into(), rater.into()),
    ]
}

pub fn parse_model_spec(doc: &Document, section: &str) -> Result<ModelSpec> {
    let trend = match doc.value(section, "time_trend")? {
        "none" => TimeTrend::None,
        "linear" => TimeTrend::Linear,
        other => return Err(Error::Invalid(format!("unknown time_trend {other:?}"))),
    };
    let resid = match doc.value(section, "residual_correlation")? {
        "independent" => ResidualCorrelation::Independent,
        "ar1" => ResidualCorrelation::Ar1,
        other => {
            return Err(Error::Invalid(format!(
                "unknown residual_correlation {other:?}"
            )))
        }
    };
    let rater = match doc.value(section, "rater_effect")? {
        "included" => RaterEffect::Included,
        "omitted" => RaterEffect::Omitted,
        other => return Err(Error::Invalid(format!("unknown rater_effect {other:?}"))),
    };
    Ok(ModelSpec {
        time_trend: trend,
        residual_correlation: resid,
        rater_effect: rater,
    })
}

/// Everything a downstream agreement command needs from a completed fit.
#[derive(Debug, Clone)]
pub struct FitState {
    pub fit: FitResult,
    pub subject_labels: Vec<String>,
    pub rater_labels: Vec<String>,
    pub summaries: Vec<SubjectSummary>,
    /// Naive per-visit contingency counts (a, b, c, d).
    pub naive: (u64, u64, u64, u64),
}

impl FitState {
    pub fn from_fit(fit: FitResult, ds: &LongDataset) -> FitState {
        let summaries = crate::agreement::eblup_summary(&fit, ds);
        let naive = crate::agreement::naive_contingency(ds);
        FitState {
            fit,
            subject_labels: ds.subject_labels().to_vec(),
            rater_labels: ds.rater_labels().to_vec(),
            summaries,
            naive,
        }
    }
}

fn opt(v: Option<f64>) -> String {
    match v {
        Some(x) => fmt_f64(x),
        None => "-".into(),
    }
}

fn parse_opt(raw: &str) -> Result<Option<f64>> {
    if raw == "-" {
        Ok(None)
    } else {
        parse_f64(raw).map(Some)
    }
}

pub fn write_fit_state(state: &FitState) -> String {
    let mut doc = Document::new();
    {
        let meta = doc.section("pairagree-fit");
        meta.push(("format_version".into(), FIT_STATE_VERSION.to_string()));
    }
    doc.sections
        .push(("model".into(), spec_entries(state.fit.spec)));
    {
        let fixed = doc.section("fixed");
        fixed.push(("beta_1".into(), fmt_f64(state.fit.fixed.beta_1)));
        fixed.push(("beta_2".into(), fmt_f64(state.fit.fixed.beta_2)));
        fixed.push(("theta".into(), opt(state.fit.fixed.theta)));
        let cov = &state.fit.fixed.cov;
        fixed.push(("cov_dim".into(), cov.nrows().to_string()));
        for r in 0..cov.nrows() {
            let row: Vec<String> = (0..cov.ncols()).map(|c| fmt_f64(cov[(r, c)])).collect();
            fixed.push((format!("cov_{r}"), row.join(" ")));
        }
    }
    {
        let vc = doc.section("variance");
        let v = &state.fit.vc;
        vc.push(("sigma2_gamma".into(), fmt_f64(v.sigma2_gamma)));
        vc.push(("sigma2_alpha1".into(), fmt_f64(v.sigma2_alpha1)));
        vc.push(("sigma2_alpha2".into(), fmt_f64(v.sigma2_alpha2)));
        vc.push(("rho".into(), fmt_f64(v.rho)));
        vc.push(("se_sigma2_gamma".into(), opt(v.se_sigma2_gamma)));
        vc.push(("se_sigma2_alpha1".into(), opt(v.se_sigma2_alpha1)));
        vc.push(("se_sigma2_alpha2".into(), opt(v.se_sigma2_alpha2)));
        vc.push(("se_rho".into(), opt(v.se_rho)));
    }
    {
        let status = doc.section("status");
        status.push(("converged".into(), state.fit.converged.to_string()));
        status.push((
            "n_outer_iterations".into(),
            state.fit.n_outer_iterations.to_string(),
        ));
        status.push(("final_change".into(), fmt_f64(state.fit.final_change)));
        for (k, w) in state.fit.warnings.iter().enumerate() {
            status.push((format!("warning_{k}"), w.clone()));
        }
    }
    {
        let gamma = doc.section("eblup_gamma");
        for (label, value) in state.subject_labels.iter().zip(&state.fit.eblup_gamma) {
            gamma.push((label.clone(), fmt_f64(*value)));
        }
    }
    {
        let alpha = doc.section("eblup_alpha");
        for (label, value) in state.rater_labels.iter().zip(&state.fit.eblup_alpha) {
            alpha.push((
                label.clone(),
                format!("{} {}", fmt_f64(value[0]), fmt_f64(value[1])),
            ));
        }
    }
    {
        let subj = doc.section("subject_summaries");
        for s in &state.summaries {
            subj.push((
                state.subject_labels[s.subject_index].clone(),
                format!("{} {}", fmt_f64(s.mu_hat_m1), fmt_f64(s.mu_hat_m2)),
            ));
        }
    }
    {
        let naive = doc.section("naive_contingency");
        naive.push(("a".into(), state.naive.0.to_string()));
        naive.push(("b".into(), state.naive.1.to_string()));
        naive.push(("c".into(), state.naive.2.to_string()));
        naive.push(("d".into(), state.naive.3.to_string()));
    }
    doc.render()
}

pub fn parse_fit_state(text: &str) -> Result<FitState> {
    let doc = Document::parse(text)?;
    let version = doc.value("pairagree-fit", "format_version").map_err(|_| {
        Error::Invalid("not a pairagree fit-state file (missing [pairagree-fit])".into())
    })?;
    if version != FIT_STATE_VERSION.to_string() {
        return Err(Error::Invalid(format!(
            "unsupported fit-state format_version {version} (expected {FIT_STATE_VERSION})"
        )));
    }
    let spec = parse_model_spec(&doc, "model")?;

    let dim: usize = doc
        .value("fixed", "cov_dim")?
        .parse()
        .map_err(|_| Error::Invalid("bad cov_dim".into()))?;
    let mut cov = DMatrix::zeros(dim, dim);
    for r in 0..dim {
        let row = doc.value("fixed", &format!("cov_{r}"))?;
        let vals: Vec<f64> = row
            .split_whitespace()
            .map(parse_f64)
            .collect::<Result<_>>()?;
        if vals.len() != dim {
            return Err(Error::Invalid(format!("cov_{r} has {} entries", vals.len())));
        }
        for (c, v) in vals.iter().enumerate() {
            cov[(r, c)] = *v;
        }
    }
    let fixed = FixedEffects {
        beta_1: doc.f64("fixed", "beta_1")?,
        beta_2: doc.f64("fixed", "beta_2")?,
        theta: parse_opt(doc.value("fixed", "theta")?)?,
        cov,
    };
    let mut vc = VarianceComponents::new(
        doc.f64("variance", "sigma2_gamma")?,
        doc.f64("variance", "sigma2_alpha1")?,
        doc.f64("variance", "sigma2_alpha2")?,
        doc.f64("variance", "rho")?,
    );
    vc.se_sigma2_gamma = parse_opt(doc.value("variance", "se_sigma2_gamma")?)?;
    vc.se_sigma2_alpha1 = parse_opt(doc.value("variance", "se_sigma2_alpha1")?)?;
    vc.se_sigma2_alpha2 = parse_opt(doc.value("variance", "se_sigma2_alpha2")?)?;
    vc.se_rho = parse_opt(doc.value("variance", "se_rho")?)?;

    let converged = doc.value("status", "converged")? == "true";
    let n_outer: usize = doc
        .value("status", "n_outer_iterations")?
        .parse()
        .map_err(|_| Error::Invalid("bad n_outer_iterations".into()))?;
    let final_change = doc.f64("status", "final_change")?;
    let warnings: Vec<String> = doc
        .get("status")
        .unwrap()
        .iter()
        .filter(|(k, _)| k.starts_with("warning_"))
        .map(|(_, v)| v.clone())
        .collect();

    let mut subject_labels = Vec::new();
    let mut eblup_gamma = Vec::new();
    for (k, v) in doc.get("eblup_gamma").unwrap_or(&[]) {
        subject_labels.push(k.clone());
        eblup_gamma.push(parse_f64(v)?);
    }
    let mut rater_labels = Vec::new();
    let mut eblup_alpha = Vec::new();
    for (k, v) in doc.get("eblup_alpha").unwrap_or(&[]) {
        rater_labels.push(k.clone());
        let vals: Vec<f64> = v
            .split_whitespace()
            .map(parse_f64)
            .collect::<Result<_>>()?;
        if vals.len() != 2 {
            return Err(Error::Invalid(format!("eblup_alpha {k}: expected 2 values")));
        }
        eblup_alpha.push([vals[0], vals[1]]);
    }
    let mut summaries = Vec::new();
    for (k, v) in doc.get("subject_summaries").unwrap_or(&[]) {
        let idx = subject_labels
            .iter()
            .position(|l| l == k)
            .ok_or_else(|| Error::Invalid(format!("summary for unknown subject {k:?}")))?;
        let vals: Vec<f64> = v
            .split_whitespace()
            .map(parse_f64)
            .collect::<Result<_>>()?;
        if vals.len() != 2 {
            return Err(Error::Invalid(format!(
                "subject summary {k}: expected 2 values"
            )));
        }
        summaries.push(SubjectSummary {
            subject_index: idx,
            mu_hat_m1: vals[0],
            mu_hat_m2: vals[1],
        });
    }
    let naive = (
        doc.value("naive_contingency", "a")?
            .parse()
            .map_err(|_| Error::Invalid("bad naive count a".into()))?,
        doc.value("naive_contingency", "b")?
            .parse()
            .map_err(|_| Error::Invalid("bad naive count b".into()))?,
        doc.value("naive_contingency", "c")?
            .parse()
            .map_err(|_| Error::Invalid("bad naive count c".into()))?,
        doc.value("naive_contingency", "d")?
            .parse()
            .map_err(|_| Error::Invalid("bad naive count d".into()))?,
    );
    Ok(FitState {
        fit: FitResult {
            spec,
            fixed,
            vc,
            eblup_gamma,
            eblup_alpha,
            converged,
            n_outer_iterations: n_outer,
            final_change,
            warnings,
        },
        subject_labels,
        rater_labels,
        summaries,
        naive,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::glmm::{RaterEffect, ResidualCorrelation, TimeTrend};

    #[test]
    fn key_values_parse_with_comments() {
        let map = parse_key_values("# header\n a = 1 \nb= two words # trailing\n\n").unwrap();
        assert_eq!(map["a"], "1");
        assert_eq!(map["b"], "two words");
        assert_eq!(map.len(), 2);
    }

    #[test]
    fn key_values_reject_duplicates_and_garbage() {
        let err = parse_key_values("a = 1\na = 2\n").unwrap_err();
        assert!(err.to_string().contains("duplicate"));
        let err = parse_key_values("just some words\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }));
    }

    #[test]
    fn document_round_trip() {
        let mut doc = Document::new();
        doc.section("alpha")
            .push(("x".into(), "1".into()));
        doc.section("beta")
            .extend([("y".into(), "2".into()), ("z".into(), "hello".into())]);
        let text = doc.render();
        let back = Document::parse(&text).unwrap();
        assert_eq!(back, doc);
        assert_eq!(back.value("beta", "z").unwrap(), "hello");
        assert!(back.value("beta", "missing").is_err());
    }

    fn toy_state() -> FitState {
        let spec = ModelSpec {
            time_trend: TimeTrend::Linear,
            residual_correlation: ResidualCorrelation::Ar1,
            rater_effect: RaterEffect::Included,
        };
        let mut vc = VarianceComponents::new(0.8, 0.2, 0.4, 0.1);
        vc.se_sigma2_gamma = Some(0.11);
        let fit = FitResult {
            spec,
            fixed: FixedEffects {
                beta_1: 1.6,
                beta_2: 1.55,
                theta: Some(-0.5),
                cov: DMatrix::from_row_slice(3, 3, &[
                    0.02, 0.001, 0.0, 0.001, 0.021, 0.0, 0.0, 0.0, 0.003,
                ]),
            },
            vc,
            eblup_gamma: vec![0.3, -0.2],
            eblup_alpha: vec![[0.1, -0.1], [0.0, 0.2]],
            converged: true,
            n_outer_iterations: 7,
            final_change: 4.2e-7,
            warnings: vec!["something minor".into()],
        };
        FitState {
            fit,
            subject_labels: vec!["S1".into(), "S2".into()],
            rater_labels: vec!["R1".into(), "R2".into()],
            summaries: vec![
                SubjectSummary {
                    subject_index: 0,
                    mu_hat_m1: 0.9,
                    mu_hat_m2: 0.85,
                },
                SubjectSummary {
                    subject_index: 1,
                    mu_hat_m1: 0.4,
                    mu_hat_m2: 0.5,
                },
            ],
            naive: (40, 10, 10, 40),
        }
    }

    #[test]
    fn fit_state_round_trip() {
        let state = toy_state();
        let text = write_fit_state(&state);
        let back = parse_fit_state(&text).unwrap();
        assert_eq!(back.fit.fixed.beta_1, state.fit.fixed.beta_1);
        assert_eq!(back.fit.fixed.theta, state.fit.fixed.theta);
        assert_eq!(back.fit.fixed.cov, state.fit.fixed.cov);
        assert_eq!(back.fit.vc.sigma2_alpha2, 0.4);
        assert_eq!(back.fit.vc.se_sigma2_gamma, Some(0.11));
        assert_eq!(back.fit.vc.se_rho, None);
        assert_eq!(back.fit.eblup_alpha, state.fit.eblup_alpha);
        assert_eq!(back.fit.warnings, state.fit.warnings);
        assert_eq!(back.subject_labels, state.subject_labels);
        assert_eq!(back.summaries.len(), 2);
        assert_eq!(back.summaries[1].mu_hat_m2, 0.5);
        assert_eq!(back.naive, (40, 10, 10, 40));
        // writing again reproduces the bytes exactly
        assert_eq!(write_fit_state(&back), text);
    }

    #[test]
    fn fit_state_rejects_wrong_version() {
        let state = toy_state();
        let text = write_fit_state(&state).replace("format_version = 1", "format_version = 99");
        let err = parse_fit_state(&text).unwrap_err();
        assert!(err.to_string().contains("format_version"));
    }

    #[test]
    fn fit_state_rejects_foreign_text() {
        assert!(parse_fit_state("hello world").is_err());
        assert!(parse_fit_state("[something]\nx = 1\n").is_err());
    }
}
