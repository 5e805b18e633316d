//! Writer-independent decision rule and Accuracy / FAR / FRR.
//!
//! A query claiming writer `w` is accepted iff the classifier predicts `w`.
//! Accepting a genuine query or rejecting a forged one is correct.

use alloc::format;
use alloc::string::String;
use core::fmt;
use core::str::FromStr;

use crate::svm::WriterClassifier;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Label {
    Genuine,
    Forged,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Decision {
    Accept,
    Reject,
}

impl Label {
    pub fn as_str(self) -> &'static str {
        match self {
            Label::Genuine => "genuine",
            Label::Forged => "forged",
        }
    }
}

impl Decision {
    pub fn as_str(self) -> &'static str {
        match self {
            Decision::Accept => "accept",
            Decision::Reject => "reject",
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl fmt::Display for Decision {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Label {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "genuine" => Ok(Label::Genuine),
            "forged" => Ok(Label::Forged),
            _ => Err(Error::InvalidArgument(format!("unknown label {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerificationRecord {
    pub query_id: String,
    pub claimed_writer: String,
    pub predicted_writer: String,
    pub true_label: Label,
    pub decision: Decision,
    pub correct: bool,
}

impl VerificationRecord {
    /// Build a record from a prediction; decision and correctness follow
    /// from the rule.
    pub fn new(query_id: String, claimed_writer: String, predicted_writer: String, true_label: Label) -> Self {
        let decision = if predicted_writer == claimed_writer {
            Decision::Accept
        } else {
            Decision::Reject
        };
        let correct = matches!(
            (decision, true_label),
            (Decision::Accept, Label::Genuine) | (Decision::Reject, Label::Forged)
        );
        Self {
            query_id,
            claimed_writer,
            predicted_writer,
            true_label,
            decision,
            correct,
        }
    }
}

pub fn verify(
    query_id: &str,
    feature: &[f64],
    claimed_writer: &str,
    true_label: Label,
    clf: &WriterClassifier,
) -> Result<VerificationRecord> {
    if clf.class_index(claimed_writer).is_none() {
        return Err(Error::UnknownWriter(claimed_writer.into()));
    }
    let predicted = clf.predict(feature)?;
    Ok(VerificationRecord::new(
        query_id.into(),
        claimed_writer.into(),
        predicted.into(),
        true_label,
    ))
}

/// Aggregated rates. `far` is NaN without forged queries and `frr` is NaN
/// without genuine ones.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricsReport {
    pub accuracy: f64,
    pub far: f64,
    pub frr: f64,
    pub n_genuine: usize,
    pub n_forged: usize,
    pub false_accepts: usize,
    pub false_rejects: usize,
}

impl MetricsReport {
    pub fn far_defined(&self) -> bool {
        self.n_forged > 0
    }

    pub fn frr_defined(&self) -> bool {
        self.n_genuine > 0
    }
}

pub fn compute_metrics(records: &[VerificationRecord]) -> Result<MetricsReport> {
    if records.is_empty() {
        return Err(Error::InsufficientSamples(String::from("no verification records")));
    }
    let (mut ng, mut nf, mut fa, mut fr, mut correct) = (0usize, 0usize, 0usize, 0usize, 0usize);
    for r in records {
        match (r.true_label, r.decision) {
            (Label::Genuine, d) => {
                ng += 1;
                fr += (d == Decision::Reject) as usize;
            }
            (Label::Forged, d) => {
                nf += 1;
                fa += (d == Decision::Accept) as usize;
            }
        }
        correct += r.correct as usize;
    }
    let rate = |num: usize, den: usize| if den == 0 { f64::NAN } else { num as f64 / den as f64 };
    Ok(MetricsReport {
        accuracy: correct as f64 / records.len() as f64,
        far: rate(fa, nf),
        frr: rate(fr, ng),
        n_genuine: ng,
        n_forged: nf,
        false_accepts: fa,
        false_rejects: fr,
    })
}
