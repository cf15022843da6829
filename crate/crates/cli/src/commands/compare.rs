use std::path::Path;

use serde::{Deserialize, Serialize};
use softcrowd_core::evalstat::{two_sample_t, SampleSummary, TTestResult, TTestVariant};
use softcrowd_core::MetricsReportF64;

use crate::error::{CliError, Result};
use crate::io;
use crate::run_manifest::Outcome;

pub const COMPARISON_FILE: &str = "comparison.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Closer {
    A,
    B,
    Tie,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub a: SampleSummary<f64>,
    pub b: SampleSummary<f64>,
    pub test: TTestResult<f64>,
    /// Lower mean L1 is closer to the human distribution.
    pub closer: Closer,
}

impl Comparison {
    pub fn verdict(&self) -> String {
        let which = match self.closer {
            Closer::A => "A is distribution-closer",
            Closer::B => "B is distribution-closer",
            Closer::Tie => "neither is distribution-closer",
        };
        format!("mean L1 A = {:.4}, B = {:.4}: {which}", self.a.mean, self.b.mean)
    }

    pub fn lines(&self) -> String {
        format!(
            "t = {:.4}\ndf = {}\np = {:.4} (two-tailed, {})\n{}\n",
            self.test.t,
            self.test.df,
            self.test.p_two_tailed,
            match self.test.variant {
                TTestVariant::Pooled => "pooled",
                TTestVariant::Welch => "welch",
            },
            self.verdict()
        )
    }
}

pub fn compare_summaries(a: SampleSummary<f64>, b: SampleSummary<f64>, variant: TTestVariant) -> Result<Comparison> {
    let test = two_sample_t(&a, &b, variant).map_err(|e| CliError::Format(e.to_string()))?;
    let closer = match a.mean.partial_cmp(&b.mean) {
        Some(std::cmp::Ordering::Less) => Closer::A,
        Some(std::cmp::Ordering::Greater) => Closer::B,
        _ => Closer::Tie,
    };
    Ok(Comparison { a, b, test, closer })
}

/// Both reports must score the same items in the same order.
pub fn compare_reports(a: &MetricsReportF64, b: &MetricsReportF64, variant: TTestVariant) -> Result<Comparison> {
    if a.l1_values.len() != b.l1_values.len() {
        return Err(CliError::MismatchedTestSets(format!("{} vs {} items", a.l1_values.len(), b.l1_values.len())));
    }
    if a.item_ids != b.item_ids {
        return Err(CliError::MismatchedTestSets("item ids differ".into()));
    }
    let sa = SampleSummary::of(&a.l1_values).map_err(|e| CliError::Format(e.to_string()))?;
    let sb = SampleSummary::of(&b.l1_values).map_err(|e| CliError::Format(e.to_string()))?;
    compare_summaries(sa, sb, variant)
}

/// Parses `mean,sd,n`.
pub fn parse_summary(text: &str) -> Result<SampleSummary<f64>> {
    let bad = || CliError::Usage(format!("--summary expects mean,sd,n; got {text:?}"));
    let parts: Vec<&str> = text.split(',').map(str::trim).collect();
    let [m, s, n] = parts.as_slice() else {
        return Err(bad());
    };
    Ok(SampleSummary::new(m.parse().map_err(|_| bad())?, s.parse().map_err(|_| bad())?, n.parse().map_err(|_| bad())?))
}

pub fn run_reports(a_path: &Path, b_path: &Path, variant: TTestVariant, out: &Path) -> Result<(Comparison, Outcome)> {
    let a = io::read_json::<MetricsReportF64>(a_path)?;
    let b = io::read_json::<MetricsReportF64>(b_path)?;
    let cmp = compare_reports(&a, &b, variant)?;
    let outcome = finish(&cmp, variant, vec![a_path.to_path_buf(), b_path.to_path_buf()], out)?;
    Ok((cmp, outcome))
}

pub fn run_summaries(summaries: &[String], variant: TTestVariant, out: &Path) -> Result<(Comparison, Outcome)> {
    let [a, b] = summaries else {
        return Err(CliError::Usage("--summary must be given exactly twice".into()));
    };
    let cmp = compare_summaries(parse_summary(a)?, parse_summary(b)?, variant)?;
    let outcome = finish(&cmp, variant, Vec::new(), out)?;
    Ok((cmp, outcome))
}

fn finish(cmp: &Comparison, variant: TTestVariant, inputs: Vec<std::path::PathBuf>, out: &Path) -> Result<Outcome> {
    io::create_dir(out)?;
    io::write_json(&out.join(COMPARISON_FILE), cmp)?;
    Ok(Outcome {
        config: serde_json::json!({ "variant": variant, "a": cmp.a, "b": cmp.b }),
        seed: None,
        inputs,
        outputs: vec![COMPARISON_FILE.into()],
        partial_failure: None,
    })
}
