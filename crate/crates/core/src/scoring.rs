//! Top-1 accuracy and diagnostic reporting.
//!
//! Unlabeled questions are excluded from accuracy (not counted wrong) and
//! surfaced as a warning count, since hidden-label test splits are the norm
//! for competition data. Agreement treats abstention as its own symbol, so
//! disagreement-by-silence stays visible.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::ensemble::{FinalPredictions, PredictionSet};
use crate::error::{Error, Result};
use crate::par;

/// Pairwise agreement rates between prediction sets; symmetric with unit
/// diagonal, ordered like `set_ids`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AgreementMatrix {
    pub set_ids: Vec<String>,
    pub matrix: Vec<Vec<f64>>,
}

/// Everything the score stage knows about a run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoreReport {
    /// n_correct / n_questions over labeled, scored questions.
    pub top1: f64,
    pub n_questions: usize,
    pub n_correct: usize,
    /// Labeled questions skipped because no final answer covered them, plus
    /// final answers with no label — reported, never counted wrong.
    pub n_unlabeled: usize,
    /// Scored questions whose final tally carried zero total weight (every
    /// set abstained). Requires the tally dump; zero when scoring from a
    /// bare final CSV.
    pub n_abstained_final: usize,
    pub tie_count: usize,
    pub per_set_top1: BTreeMap<String, f64>,
    pub agreement: AgreementMatrix,
}

struct Counts {
    correct: usize,
    scored: usize,
    unlabeled: usize,
}

fn count_correct(final_: &FinalPredictions, ds: &Dataset) -> Counts {
    let mut counts = Counts { correct: 0, scored: 0, unlabeled: 0 };
    for r in ds.records() {
        match (r.answer_index, final_.answers.get(&r.question_uid)) {
            (Some(gold), Some(&pred)) => {
                counts.scored += 1;
                if pred == gold {
                    counts.correct += 1;
                }
            }
            _ => counts.unlabeled += 1,
        }
    }
    counts
}

/// Fraction of labeled, answered questions whose final answer matches the
/// ground truth.
pub fn top1_accuracy(final_: &FinalPredictions, ds: &Dataset) -> Result<f64> {
    let counts = count_correct(final_, ds);
    if counts.scored == 0 {
        return Err(Error::Validation(
            "no labeled questions to score".into(),
        ));
    }
    Ok(counts.correct as f64 / counts.scored as f64)
}

fn agreement_between(a: &PredictionSet, b: &PredictionSet, universe: &[String]) -> f64 {
    let same = universe
        .iter()
        .filter(|uid| {
            let va = a.predictions.get(*uid).copied().flatten();
            let vb = b.predictions.get(*uid).copied().flatten();
            va == vb
        })
        .count();
    same as f64 / universe.len() as f64
}

fn agreement_impl(sets: &[PredictionSet], sequential: bool) -> Result<AgreementMatrix> {
    if sets.len() < 2 {
        return Err(Error::Validation(
            "agreement needs at least two prediction sets".into(),
        ));
    }
    let mut universe: Vec<String> = sets
        .iter()
        .flat_map(|s| s.predictions.keys().cloned())
        .collect();
    universe.sort_unstable();
    universe.dedup();
    if universe.is_empty() {
        return Err(Error::Validation("empty question universe".into()));
    }
    // upper triangle (i < j), mirrored afterwards
    let pairs: Vec<(usize, usize)> = (0..sets.len())
        .flat_map(|i| ((i + 1)..sets.len()).map(move |j| (i, j)))
        .collect();
    let compute = |&(i, j): &(usize, usize)| agreement_between(&sets[i], &sets[j], &universe);
    let values = if sequential {
        par::map_seq(&pairs, compute)
    } else {
        par::map_auto(&pairs, compute)
    };
    let mut matrix = vec![vec![1.0; sets.len()]; sets.len()];
    for ((i, j), v) in pairs.into_iter().zip(values) {
        matrix[i][j] = v;
        matrix[j][i] = v;
    }
    Ok(AgreementMatrix {
        set_ids: sets.iter().map(|s| s.set_id.clone()).collect(),
        matrix,
    })
}

/// Pairwise agreement: entry (i, j) is the fraction of the shared universe
/// where sets i and j emit the same canonical index, with abstention agreeing
/// only with abstention.
pub fn agreement_matrix(sets: &[PredictionSet]) -> Result<AgreementMatrix> {
    agreement_impl(sets, false)
}

/// Single-threaded reference version of [`agreement_matrix`].
pub fn agreement_matrix_seq(sets: &[PredictionSet]) -> Result<AgreementMatrix> {
    agreement_impl(sets, true)
}

// A set's own top-1: abstentions fall back to the zero-tally tie-break
// answer (canonical index 0), exactly what voting that set alone would do.
fn per_set_top1(set: &PredictionSet, final_: &FinalPredictions, ds: &Dataset) -> f64 {
    let mut correct = 0usize;
    let mut scored = 0usize;
    for r in ds.records() {
        let Some(gold) = r.answer_index else { continue };
        if !final_.answers.contains_key(&r.question_uid) {
            continue;
        }
        scored += 1;
        let pred = set
            .predictions
            .get(&r.question_uid)
            .copied()
            .flatten()
            .unwrap_or(0);
        if pred == gold {
            correct += 1;
        }
    }
    if scored == 0 {
        0.0
    } else {
        correct as f64 / scored as f64
    }
}

/// Score a run and write the report files under `out_dir`:
/// `report.json`, `per_question.csv`, `per_set.csv`, `agreement.csv`.
/// The returned struct matches the JSON on disk exactly.
pub fn report(
    final_: &FinalPredictions,
    sets: &[PredictionSet],
    ds: &Dataset,
    out_dir: &Path,
) -> Result<ScoreReport> {
    let counts = count_correct(final_, ds);
    if counts.scored == 0 {
        return Err(Error::Validation("no labeled questions to score".into()));
    }
    let top1 = counts.correct as f64 / counts.scored as f64;
    let n_abstained_final = final_
        .tally
        .values()
        .filter(|t| t.iter().all(|&w| w == 0.0))
        .count();
    let per_set: BTreeMap<String, f64> = sets
        .iter()
        .map(|s| (s.set_id.clone(), per_set_top1(s, final_, ds)))
        .collect();
    let agreement = if sets.len() >= 2 {
        agreement_matrix(sets)?
    } else {
        AgreementMatrix {
            set_ids: sets.iter().map(|s| s.set_id.clone()).collect(),
            matrix: Vec::new(),
        }
    };
    let report = ScoreReport {
        top1,
        n_questions: counts.scored,
        n_correct: counts.correct,
        n_unlabeled: counts.unlabeled,
        n_abstained_final,
        tie_count: final_.tie_flags.len(),
        per_set_top1: per_set,
        agreement,
    };

    fs::create_dir_all(out_dir)?;
    let json = serde_json::to_string_pretty(&report).map_err(|e| Error::Io(e.into()))?;
    fs::write(out_dir.join("report.json"), json + "\n")?;

    let mut pq = Vec::new();
    writeln!(pq, "question_uid,final,gold,correct,flagged")?;
    let gold_of: BTreeMap<&str, u8> = ds
        .records()
        .iter()
        .filter_map(|r| r.answer_index.map(|a| (r.question_uid.as_str(), a)))
        .collect();
    for (uid, &pred) in &final_.answers {
        let (gold, correct) = match gold_of.get(uid.as_str()) {
            Some(&g) => (g.to_string(), (pred == g).to_string()),
            None => (String::new(), String::new()),
        };
        writeln!(
            pq,
            "{uid},{pred},{gold},{correct},{}",
            final_.tie_flags.contains(uid)
        )?;
    }
    fs::write(out_dir.join("per_question.csv"), pq)?;

    let mut ps = Vec::new();
    writeln!(ps, "set_id,top1")?;
    for (set_id, acc) in &report.per_set_top1 {
        writeln!(ps, "{set_id},{acc}")?;
    }
    fs::write(out_dir.join("per_set.csv"), ps)?;

    let mut ag = Vec::new();
    write!(ag, "set_id")?;
    for id in &report.agreement.set_ids {
        write!(ag, ",{id}")?;
    }
    writeln!(ag)?;
    for (id, row) in report.agreement.set_ids.iter().zip(&report.agreement.matrix) {
        write!(ag, "{id}")?;
        for v in row {
            write!(ag, ",{v}")?;
        }
        writeln!(ag)?;
    }
    fs::write(out_dir.join("agreement.csv"), ag)?;

    Ok(report)
}
