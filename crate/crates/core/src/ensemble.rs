//! Weighted majority voting over canonical-space prediction sets.
//!
//! A [`PredictionSet`] is one (model, sampling preset, permutation)
//! combination's answers over the question universe, already inverted into
//! canonical option indices. Voting never sees presented positions.
//! Abstentions contribute zero weight.
//!
//! Prediction sets travel as JSONL, one record per question per set:
//!
//! ```json
//! {"set_id":"fold_0.hr_train.p201","model_id":"fold_0","preset_id":"hr_train",
//!  "permutation":[2,0,1],"question_uid":"q17","canonical_index":1}
//! ```

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::par;
use crate::tta::Permutation;

/// Relative tolerance when comparing per-option weight sums; absorbs
/// accumulation-order noise in the decimal weights.
pub const TALLY_REL_TOL: f64 = 1e-9;

/// One prediction set: canonical-space answers for every question it covers.
/// Question uids missing from `predictions` (or present with `None`) are
/// abstentions.
#[derive(Clone, Debug, PartialEq)]
pub struct PredictionSet {
    pub set_id: String,
    pub model_id: String,
    pub preset_id: String,
    /// Metadata only: the option-order permutation the set was inferred
    /// under (the first row's, for per-question augmentation). Voting is
    /// permutation-neutral by construction.
    pub permutation: Permutation,
    pub predictions: BTreeMap<String, Option<u8>>,
    pub weight: f64,
}

impl PredictionSet {
    pub fn new(
        set_id: impl Into<String>,
        model_id: impl Into<String>,
        preset_id: impl Into<String>,
        permutation: Permutation,
        predictions: BTreeMap<String, Option<u8>>,
    ) -> Self {
        PredictionSet {
            set_id: set_id.into(),
            model_id: model_id.into(),
            preset_id: preset_id.into(),
            permutation,
            predictions,
            weight: 1.0,
        }
    }

    /// Rows in uid order, ready for JSONL.
    pub fn records(&self) -> Vec<PredictionRecord> {
        self.predictions
            .iter()
            .map(|(uid, idx)| PredictionRecord {
                set_id: self.set_id.clone(),
                model_id: self.model_id.clone(),
                preset_id: self.preset_id.clone(),
                permutation: self.permutation,
                question_uid: uid.clone(),
                canonical_index: *idx,
            })
            .collect()
    }
}

/// One JSONL row of a prediction set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub set_id: String,
    pub model_id: String,
    pub preset_id: String,
    pub permutation: Permutation,
    pub question_uid: String,
    /// `null` encodes an abstention.
    pub canonical_index: Option<u8>,
}

/// Write records as JSONL, one per line.
pub fn write_prediction_records<W: Write>(mut w: W, records: &[PredictionRecord]) -> Result<()> {
    for r in records {
        serde_json::to_writer(&mut w, r).map_err(|e| Error::Io(e.into()))?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

/// Read JSONL records, reporting the offending line on failure.
pub fn read_prediction_records<R: BufRead>(r: R) -> Result<Vec<PredictionRecord>> {
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: PredictionRecord = serde_json::from_str(&line).map_err(|e| Error::Validation(
            format!("prediction record on line {}: {e}", i + 1),
        ))?;
        if let Some(idx) = rec.canonical_index {
            if idx > 2 {
                return Err(Error::Validation(format!(
                    "prediction record on line {}: canonical_index {idx} out of range",
                    i + 1
                )));
            }
        }
        out.push(rec);
    }
    Ok(out)
}

/// Group loose records into sets, keyed by `set_id` and sorted by it.
/// Metadata must be consistent within a set; duplicate (set, question) rows
/// are rejected.
pub fn collect_sets(records: Vec<PredictionRecord>) -> Result<Vec<PredictionSet>> {
    let mut by_set: BTreeMap<String, PredictionSet> = BTreeMap::new();
    for rec in records {
        let set = by_set.entry(rec.set_id.clone()).or_insert_with(|| {
            PredictionSet::new(
                rec.set_id.clone(),
                rec.model_id.clone(),
                rec.preset_id.clone(),
                rec.permutation,
                BTreeMap::new(),
            )
        });
        if set.model_id != rec.model_id || set.preset_id != rec.preset_id {
            return Err(Error::Validation(format!(
                "set {:?} mixes model/preset metadata",
                rec.set_id
            )));
        }
        if set
            .predictions
            .insert(rec.question_uid.clone(), rec.canonical_index)
            .is_some()
        {
            return Err(Error::Validation(format!(
                "set {:?} repeats question {:?}",
                rec.set_id, rec.question_uid
            )));
        }
    }
    Ok(by_set.into_values().collect())
}

/// Read every `*.jsonl` file in a directory into prediction sets.
pub fn load_prediction_dir(dir: &std::path::Path) -> Result<Vec<PredictionSet>> {
    let mut paths: Vec<std::path::PathBuf> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e == "jsonl"))
        .collect();
    paths.sort();
    let mut records = Vec::new();
    for p in paths {
        let file = std::fs::File::open(&p)?;
        records.extend(read_prediction_records(std::io::BufReader::new(file))?);
    }
    if records.is_empty() {
        return Err(Error::Validation(format!(
            "no prediction records found under {}",
            dir.display()
        )));
    }
    collect_sets(records)
}

/// How near-equal top tallies are resolved.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TieBreak {
    LowestCanonicalIndex,
    HighestMaxComponentWeight,
}

impl Default for TieBreak {
    fn default() -> Self {
        TieBreak::LowestCanonicalIndex
    }
}

/// Flat voting weighs every set individually. Hierarchical voting first
/// majority-votes each (component, model) group's sets with unit weights,
/// then weighs one vote per group.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VoteMode {
    Flat,
    Hierarchical,
}

impl Default for VoteMode {
    fn default() -> Self {
        VoteMode::Flat
    }
}

/// A named group of sets sharing one voting weight.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VoteComponent {
    pub name: String,
    pub set_ids: Vec<String>,
    pub weight: f64,
}

/// The full ensemble description: disjoint components covering every set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VoteConfig {
    pub components: Vec<VoteComponent>,
    #[serde(default)]
    pub tie_break: TieBreak,
    #[serde(default)]
    pub mode: VoteMode,
}

impl VoteConfig {
    /// Uniform unit-weight config over the given sets.
    pub fn uniform(set_ids: Vec<String>) -> Self {
        VoteConfig {
            components: vec![VoteComponent {
                name: "uniform".into(),
                set_ids,
                weight: 1.0,
            }],
            tie_break: TieBreak::default(),
            mode: VoteMode::default(),
        }
    }

    /// Sum of component weight x component size.
    pub fn total_weight(&self) -> f64 {
        self.components
            .iter()
            .map(|c| c.weight * c.set_ids.len() as f64)
            .sum()
    }

    fn validate(&self) -> Result<()> {
        if self.components.is_empty() {
            return Err(Error::Validation("vote config has no components".into()));
        }
        for c in &self.components {
            if !(c.weight > 0.0 && c.weight.is_finite()) {
                return Err(Error::Validation(format!(
                    "component {:?} weight must be positive, got {}",
                    c.name, c.weight
                )));
            }
        }
        Ok(())
    }
}

/// Final per-question answers plus the evidence behind them.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FinalPredictions {
    pub answers: BTreeMap<String, u8>,
    /// Per-option weight sums, index 0..2.
    pub tally: BTreeMap<String, [f64; 3]>,
    /// Questions whose answer came from the tie-break rule.
    pub tie_flags: BTreeSet<String>,
}

// Per-set resolved weight and (for the tie-break) component identity.
struct ResolvedWeights {
    // aligned with the sets slice
    weights: Vec<f64>,
    component_of: Vec<usize>,
}

fn resolve_weights(sets: &[PredictionSet], cfg: &VoteConfig) -> Result<ResolvedWeights> {
    cfg.validate()?;
    let mut assignment: HashMap<&str, (usize, f64)> = HashMap::new();
    for (ci, comp) in cfg.components.iter().enumerate() {
        for id in &comp.set_ids {
            if assignment.insert(id.as_str(), (ci, comp.weight)).is_some() {
                return Err(Error::Validation(format!(
                    "set {id:?} selected by more than one component"
                )));
            }
        }
    }
    let present: BTreeSet<&str> = sets.iter().map(|s| s.set_id.as_str()).collect();
    for id in assignment.keys() {
        if !present.contains(id) {
            return Err(Error::Validation(format!(
                "vote config names missing set {id:?}"
            )));
        }
    }
    let mut weights = Vec::with_capacity(sets.len());
    let mut component_of = Vec::with_capacity(sets.len());
    for s in sets {
        let Some(&(ci, w)) = assignment.get(s.set_id.as_str()) else {
            return Err(Error::Validation(format!(
                "set {:?} not covered by any vote component",
                s.set_id
            )));
        };
        weights.push(w);
        component_of.push(ci);
    }
    Ok(ResolvedWeights { weights, component_of })
}

fn question_universe(sets: &[PredictionSet]) -> Vec<String> {
    let mut universe: BTreeSet<&str> = BTreeSet::new();
    for s in sets {
        universe.extend(s.predictions.keys().map(String::as_str));
    }
    universe.into_iter().map(String::from).collect()
}

/// Pick the winning option. `scores` are the per-option weight sums;
/// `max_weight` the heaviest single vote behind each option. Returns the
/// answer and whether the tie-break decided it.
fn pick_winner(scores: &[f64; 3], max_weight: &[f64; 3], tie_break: TieBreak) -> (u8, bool) {
    let top = scores.iter().cloned().fold(f64::MIN, f64::max);
    let winners: Vec<u8> = (0u8..3)
        .filter(|&i| top - scores[i as usize] <= TALLY_REL_TOL * top)
        .collect();
    if winners.len() == 1 {
        return (winners[0], false);
    }
    let answer = match tie_break {
        TieBreak::LowestCanonicalIndex => winners[0],
        TieBreak::HighestMaxComponentWeight => {
            let mut best = winners[0];
            for &w in &winners[1..] {
                if max_weight[w as usize] > max_weight[best as usize] {
                    best = w;
                }
            }
            best
        }
    };
    (answer, true)
}

// Flat tally for one question: accumulate each set's weight behind its vote,
// in set order.
fn tally_flat(
    uid: &str,
    sets: &[PredictionSet],
    weights: &[f64],
) -> ([f64; 3], [f64; 3]) {
    let mut scores = [0.0f64; 3];
    let mut max_weight = [0.0f64; 3];
    for (s, &w) in sets.iter().zip(weights) {
        if let Some(Some(idx)) = s.predictions.get(uid) {
            let i = *idx as usize;
            scores[i] += w;
            if w > max_weight[i] {
                max_weight[i] = w;
            }
        }
    }
    (scores, max_weight)
}

// Hierarchical tally: unit-weight inner vote per (component, model) group,
// then one weighted vote per group. A group abstains when all members do.
fn tally_hierarchical(
    uid: &str,
    groups: &[(f64, Vec<usize>)],
    sets: &[PredictionSet],
) -> ([f64; 3], [f64; 3]) {
    let mut scores = [0.0f64; 3];
    let mut max_weight = [0.0f64; 3];
    for (weight, members) in groups {
        let mut inner = [0u32; 3];
        let mut any = false;
        for &si in members {
            if let Some(Some(idx)) = sets[si].predictions.get(uid) {
                inner[*idx as usize] += 1;
                any = true;
            }
        }
        if !any {
            continue;
        }
        let top = *inner.iter().max().expect("three options");
        let choice = inner.iter().position(|&v| v == top).expect("max exists");
        scores[choice] += weight;
        if *weight > max_weight[choice] {
            max_weight[choice] = *weight;
        }
    }
    (scores, max_weight)
}

fn vote_impl(
    sets: &[PredictionSet],
    cfg: &VoteConfig,
    sequential: bool,
) -> Result<FinalPredictions> {
    if sets.is_empty() {
        return Err(Error::Validation("cannot vote over zero sets".into()));
    }
    let resolved = resolve_weights(sets, cfg)?;
    let universe = question_universe(sets);

    // groups for hierarchical mode: one per (component, model_id)
    let groups: Vec<(f64, Vec<usize>)> = {
        let mut map: BTreeMap<(usize, &str), Vec<usize>> = BTreeMap::new();
        for (si, s) in sets.iter().enumerate() {
            map.entry((resolved.component_of[si], s.model_id.as_str()))
                .or_default()
                .push(si);
        }
        map.into_iter()
            .map(|((ci, _), members)| (cfg.components[ci].weight, members))
            .collect()
    };

    let per_question = |uid: &String| -> (u8, [f64; 3], bool) {
        let (scores, max_weight) = match cfg.mode {
            VoteMode::Flat => tally_flat(uid, sets, &resolved.weights),
            VoteMode::Hierarchical => tally_hierarchical(uid, &groups, sets),
        };
        let (answer, tied) = pick_winner(&scores, &max_weight, cfg.tie_break);
        (answer, scores, tied)
    };

    let rows: Vec<(u8, [f64; 3], bool)> = if sequential {
        par::map_seq(&universe, per_question)
    } else {
        par::map_auto(&universe, per_question)
    };

    let mut answers = BTreeMap::new();
    let mut tally = BTreeMap::new();
    let mut tie_flags = BTreeSet::new();
    for (uid, (answer, scores, tied)) in universe.into_iter().zip(rows) {
        answers.insert(uid.clone(), answer);
        tally.insert(uid.clone(), scores);
        if tied {
            tie_flags.insert(uid);
        }
    }
    Ok(FinalPredictions { answers, tally, tie_flags })
}

/// Weighted majority vote across all sets: for each question, each
/// non-abstaining set adds its resolved weight behind its canonical index;
/// the heaviest option wins, near-ties (relative 1e-9) resolved by
/// `cfg.tie_break` and flagged.
pub fn weighted_vote(sets: &[PredictionSet], cfg: &VoteConfig) -> Result<FinalPredictions> {
    vote_impl(sets, cfg, false)
}

/// Single-threaded reference version of [`weighted_vote`]; always produces
/// identical output.
pub fn weighted_vote_seq(sets: &[PredictionSet], cfg: &VoteConfig) -> Result<FinalPredictions> {
    vote_impl(sets, cfg, true)
}

/// Unweighted majority vote: [`weighted_vote`] with unit weights.
pub fn majority_vote(sets: &[PredictionSet]) -> Result<FinalPredictions> {
    let cfg = VoteConfig::uniform(sets.iter().map(|s| s.set_id.clone()).collect());
    weighted_vote(sets, &cfg)
}

/// The published 31-set composition: 1 baseline set (weight 1), 20
/// permutation-augmented sets (weight 0.25), 5 sixty-frame sets (weight 1.2),
/// and 5 sixty-frame high-resolution sets (weight 1.4). Total weight 19.0.
pub fn paper_preset(
    baseline: &[String],
    tta: &[String],
    hr60: &[String],
    hr60_hires: &[String],
) -> Result<VoteConfig> {
    for (name, ids, expected) in [
        ("baseline", baseline, 1usize),
        ("hr_tta", tta, 20),
        ("hr_60f", hr60, 5),
        ("hr_60f_hires", hr60_hires, 5),
    ] {
        if ids.len() != expected {
            return Err(Error::Validation(format!(
                "group {name:?}: expected {expected} sets, found {}",
                ids.len()
            )));
        }
    }
    Ok(VoteConfig {
        components: vec![
            VoteComponent { name: "baseline".into(), set_ids: baseline.to_vec(), weight: 1.0 },
            VoteComponent { name: "hr_tta".into(), set_ids: tta.to_vec(), weight: 0.25 },
            VoteComponent { name: "hr_60f".into(), set_ids: hr60.to_vec(), weight: 1.2 },
            VoteComponent { name: "hr_60f_hires".into(), set_ids: hr60_hires.to_vec(), weight: 1.4 },
        ],
        tie_break: TieBreak::default(),
        mode: VoteMode::default(),
    })
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Export final answers as `question_uid,answer_index,flagged` CSV.
pub fn write_final_csv<W: Write>(mut w: W, final_: &FinalPredictions) -> Result<()> {
    writeln!(w, "question_uid,answer_index,flagged")?;
    for (uid, answer) in &final_.answers {
        writeln!(
            w,
            "{},{},{}",
            csv_field(uid),
            answer,
            final_.tie_flags.contains(uid)
        )?;
    }
    Ok(())
}

/// Read a final-answer CSV back (tallies are not part of the CSV; load the
/// tally dump separately when needed).
pub fn read_final_csv<R: BufRead>(r: R) -> Result<FinalPredictions> {
    let mut answers = BTreeMap::new();
    let mut tie_flags = BTreeSet::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if i == 0 || line.trim().is_empty() {
            continue;
        }
        // uids never contain commas in harness-produced files; reject rather
        // than mis-parse if one does
        let parts: Vec<&str> = line.split(',').collect();
        if parts.len() != 3 || parts[0].starts_with('"') {
            return Err(Error::Validation(format!(
                "final CSV line {}: expected question_uid,answer_index,flagged",
                i + 1
            )));
        }
        let answer: u8 = parts[1].parse().map_err(|_| {
            Error::Validation(format!("final CSV line {}: bad answer_index", i + 1))
        })?;
        if answer > 2 {
            return Err(Error::Validation(format!(
                "final CSV line {}: answer_index {answer} out of range",
                i + 1
            )));
        }
        let flagged: bool = parts[2].trim().parse().map_err(|_| {
            Error::Validation(format!("final CSV line {}: bad flagged value", i + 1))
        })?;
        answers.insert(parts[0].to_string(), answer);
        if flagged {
            tie_flags.insert(parts[0].to_string());
        }
    }
    Ok(FinalPredictions { answers, tally: BTreeMap::new(), tie_flags })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn uid(i: usize) -> String {
        format!("q{i:03}")
    }

    fn set_with(
        set_id: &str,
        votes: &[(usize, Option<u8>)],
    ) -> PredictionSet {
        let predictions = votes
            .iter()
            .map(|&(q, v)| (uid(q), v))
            .collect();
        PredictionSet::new(set_id, "m", "p", Permutation::identity(), predictions)
    }

    fn uniform_sets(votes_per_set: &[&[Option<u8>]]) -> Vec<PredictionSet> {
        votes_per_set
            .iter()
            .enumerate()
            .map(|(si, votes)| {
                set_with(
                    &format!("s{si}"),
                    &votes.iter().enumerate().map(|(q, &v)| (q, v)).collect::<Vec<_>>(),
                )
            })
            .collect()
    }

    #[test]
    fn table_shaped_weighted_example() {
        // baseline (w 1) says A; 12 of 20 augmented sets (w 0.25) say A and 8
        // say B; 5 sixty-frame sets (w 1.2) say B; 5 high-res (w 1.4) say A.
        // A = 1 + 3 + 7 = 11, B = 2 + 6 = 8.
        let mut sets = Vec::new();
        let mut ids = |prefix: &str, n: usize| -> Vec<String> {
            let out: Vec<String> = (0..n).map(|i| format!("{prefix}{i}")).collect();
            out
        };
        let baseline = ids("base", 1);
        let tta = ids("tta", 20);
        let hr60 = ids("hr60_", 5);
        let hires = ids("hires", 5);
        sets.push(set_with(&baseline[0], &[(0, Some(0))]));
        for (i, id) in tta.iter().enumerate() {
            sets.push(set_with(id, &[(0, Some(if i < 12 { 0 } else { 1 }))]));
        }
        for id in &hr60 {
            sets.push(set_with(id, &[(0, Some(1))]));
        }
        for id in &hires {
            sets.push(set_with(id, &[(0, Some(0))]));
        }
        let cfg = paper_preset(&baseline, &tta, &hr60, &hires).unwrap();
        let out = weighted_vote(&sets, &cfg).unwrap();
        assert_eq!(out.answers[&uid(0)], 0);
        let tally = out.tally[&uid(0)];
        assert!((tally[0] - 11.0).abs() < 1e-9, "{tally:?}");
        assert!((tally[1] - 8.0).abs() < 1e-9, "{tally:?}");
        assert_eq!(tally[2], 0.0);
        assert!(out.tie_flags.is_empty());
    }

    #[test]
    fn two_set_tie_goes_to_lowest_index_and_flags() {
        let sets = uniform_sets(&[&[Some(0)], &[Some(1)]]);
        let out = majority_vote(&sets).unwrap();
        assert_eq!(out.answers[&uid(0)], 0);
        assert!(out.tie_flags.contains(&uid(0)));
    }

    #[test]
    fn single_set_passes_through() {
        let sets = uniform_sets(&[&[Some(2), Some(1), None]]);
        let out = majority_vote(&sets).unwrap();
        assert_eq!(out.answers[&uid(0)], 2);
        assert_eq!(out.answers[&uid(1)], 1);
        // abstained question: zero tally, tie-broken to 0 and flagged
        assert_eq!(out.answers[&uid(2)], 0);
        assert!(out.tie_flags.contains(&uid(2)));
        assert_eq!(out.tally[&uid(2)], [0.0, 0.0, 0.0]);
    }

    #[test]
    fn majority_counts() {
        // 6 sets: 4 say B, 2 say C
        let sets = uniform_sets(&[
            &[Some(1)], &[Some(1)], &[Some(1)], &[Some(1)], &[Some(2)], &[Some(2)],
        ]);
        let out = majority_vote(&sets).unwrap();
        assert_eq!(out.answers[&uid(0)], 1);
        assert!(out.tie_flags.is_empty());

        // 3 A vs 3 B: tie to A, flagged
        let sets = uniform_sets(&[
            &[Some(0)], &[Some(0)], &[Some(0)], &[Some(1)], &[Some(1)], &[Some(1)],
        ]);
        let out = majority_vote(&sets).unwrap();
        assert_eq!(out.answers[&uid(0)], 0);
        assert!(out.tie_flags.contains(&uid(0)));

        // unanimity
        let sets = uniform_sets(&[&[Some(2)], &[Some(2)], &[Some(2)]]);
        let out = majority_vote(&sets).unwrap();
        assert_eq!(out.answers[&uid(0)], 2);
        assert!(out.tie_flags.is_empty());
    }

    #[test]
    fn empty_set_list_errors() {
        assert!(majority_vote(&[]).is_err());
    }

    #[test]
    fn preset_weights_and_total() {
        let ids = |p: &str, n: usize| (0..n).map(|i| format!("{p}{i}")).collect::<Vec<_>>();
        let cfg = paper_preset(&ids("b", 1), &ids("t", 20), &ids("h", 5), &ids("x", 5)).unwrap();
        let weights: Vec<f64> = cfg.components.iter().map(|c| c.weight).collect();
        assert_eq!(weights, [1.0, 0.25, 1.2, 1.4]);
        assert!((cfg.total_weight() - 19.0).abs() <= 1e-9);
    }

    #[test]
    fn preset_rejects_wrong_cardinalities() {
        let ids = |p: &str, n: usize| (0..n).map(|i| format!("{p}{i}")).collect::<Vec<_>>();
        let err =
            paper_preset(&ids("b", 1), &ids("t", 19), &ids("h", 5), &ids("x", 5)).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("expected 20") && msg.contains("19"), "{msg}");
        assert!(paper_preset(&ids("b", 2), &ids("t", 20), &ids("h", 5), &ids("x", 5)).is_err());
        assert!(paper_preset(&ids("b", 1), &ids("t", 20), &ids("h", 4), &ids("x", 5)).is_err());
        assert!(paper_preset(&ids("b", 1), &ids("t", 20), &ids("h", 5), &ids("x", 6)).is_err());
    }

    #[test]
    fn unmatched_or_doubly_matched_sets_error() {
        let sets = uniform_sets(&[&[Some(0)], &[Some(1)]]);
        let mut cfg = VoteConfig::uniform(vec!["s0".into()]);
        assert!(weighted_vote(&sets, &cfg).is_err(), "s1 uncovered");
        cfg.components.push(VoteComponent {
            name: "dup".into(),
            set_ids: vec!["s0".into(), "s1".into()],
            weight: 1.0,
        });
        assert!(weighted_vote(&sets, &cfg).is_err(), "s0 doubly covered");
        let cfg = VoteConfig::uniform(vec!["s0".into(), "s1".into(), "ghost".into()]);
        assert!(weighted_vote(&sets, &cfg).is_err(), "ghost set missing");
    }

    #[test]
    fn permutation_metadata_is_neutral() {
        let a = uniform_sets(&[&[Some(0), Some(1)], &[Some(0), Some(2)]]);
        let mut b = a.clone();
        b[0].permutation = Permutation::new([2, 0, 1]).unwrap();
        b[1].permutation = Permutation::new([1, 2, 0]).unwrap();
        assert_eq!(majority_vote(&a).unwrap(), majority_vote(&b).unwrap());
    }

    #[test]
    fn weight_scaling_leaves_answers_unchanged() {
        let sets = uniform_sets(&[
            &[Some(0), Some(1), None],
            &[Some(1), Some(1), Some(2)],
            &[Some(0), None, Some(2)],
        ]);
        let mk = |scale: f64| VoteConfig {
            components: vec![
                VoteComponent { name: "x".into(), set_ids: vec!["s0".into(), "s1".into()], weight: 0.7 * scale },
                VoteComponent { name: "y".into(), set_ids: vec!["s2".into()], weight: 1.3 * scale },
            ],
            tie_break: TieBreak::default(),
            mode: VoteMode::default(),
        };
        let base = weighted_vote(&sets, &mk(1.0)).unwrap();
        for scale in [0.001, 3.0, 1e6] {
            let scaled = weighted_vote(&sets, &mk(scale)).unwrap();
            assert_eq!(scaled.answers, base.answers);
            assert_eq!(scaled.tie_flags, base.tie_flags);
        }
    }

    #[test]
    fn hierarchical_mode_votes_groups_once() {
        // model m0 has 3 augmented sets voting 2x option1, 1x option0; model
        // m1 has one set voting option0. Flat unit vote: option0 and option1
        // tie 2-2. Hierarchical: m0's inner majority -> option1, so the outer
        // vote ties 1-1 and still flags; with a heavier m1 component the
        // outer vote resolves to option0.
        let mut sets = uniform_sets(&[&[Some(1)], &[Some(1)], &[Some(0)], &[Some(0)]]);
        for (i, s) in sets.iter_mut().enumerate() {
            s.model_id = if i < 3 { "m0".into() } else { "m1".into() };
        }
        let cfg = VoteConfig {
            components: vec![
                VoteComponent { name: "tta".into(), set_ids: vec!["s0".into(), "s1".into(), "s2".into()], weight: 1.0 },
                VoteComponent { name: "solo".into(), set_ids: vec!["s3".into()], weight: 2.0 },
            ],
            tie_break: TieBreak::default(),
            mode: VoteMode::Hierarchical,
        };
        let out = weighted_vote(&sets, &cfg).unwrap();
        assert_eq!(out.answers[&uid(0)], 0);
        assert_eq!(out.tally[&uid(0)], [2.0, 1.0, 0.0]);
        assert!(out.tie_flags.is_empty());
    }

    #[test]
    fn highest_max_component_weight_tie_break() {
        let sets = uniform_sets(&[&[Some(0)], &[Some(1)]]);
        let cfg = VoteConfig {
            components: vec![
                VoteComponent { name: "light_pair".into(), set_ids: vec!["s0".into()], weight: 1.0 },
                VoteComponent { name: "heavy".into(), set_ids: vec!["s1".into()], weight: 1.0 },
            ],
            tie_break: TieBreak::HighestMaxComponentWeight,
            mode: VoteMode::Flat,
        };
        // equal weights: falls back to lowest index
        let out = weighted_vote(&sets, &cfg).unwrap();
        assert_eq!(out.answers[&uid(0)], 0);
        assert!(out.tie_flags.contains(&uid(0)));

        // option1 backed by a single heavier voter among a tied tally
        let sets = uniform_sets(&[&[Some(0)], &[Some(0)], &[Some(1)]]);
        let cfg = VoteConfig {
            components: vec![
                VoteComponent { name: "light".into(), set_ids: vec!["s0".into(), "s1".into()], weight: 0.5 },
                VoteComponent { name: "heavy".into(), set_ids: vec!["s2".into()], weight: 1.0 },
            ],
            tie_break: TieBreak::HighestMaxComponentWeight,
            mode: VoteMode::Flat,
        };
        let out = weighted_vote(&sets, &cfg).unwrap();
        assert_eq!(out.answers[&uid(0)], 1);
        assert!(out.tie_flags.contains(&uid(0)));
    }

    #[test]
    fn jsonl_round_trip() {
        let sets = uniform_sets(&[&[Some(0), None, Some(2)]]);
        let records = sets[0].records();
        let mut buf = Vec::new();
        write_prediction_records(&mut buf, &records).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.contains("\"canonical_index\":null"), "{text}");
        let back = collect_sets(read_prediction_records(buf.as_slice()).unwrap()).unwrap();
        assert_eq!(back, sets);
    }

    #[test]
    fn final_csv_round_trip() {
        let sets = uniform_sets(&[&[Some(0), Some(1), None]]);
        let fin = majority_vote(&sets).unwrap();
        let mut buf = Vec::new();
        write_final_csv(&mut buf, &fin).unwrap();
        let back = read_final_csv(buf.as_slice()).unwrap();
        assert_eq!(back.answers, fin.answers);
        assert_eq!(back.tie_flags, fin.tie_flags);
    }

    // Brute-force reference: dumb per-question loops, same tie rule.
    fn brute_force(
        sets: &[PredictionSet],
        weights: &HashMap<String, f64>,
        tie_break: TieBreak,
    ) -> BTreeMap<String, (u8, bool)> {
        let mut universe: BTreeSet<String> = BTreeSet::new();
        for s in sets {
            universe.extend(s.predictions.keys().cloned());
        }
        let mut out = BTreeMap::new();
        for q in universe {
            let mut scores = [0.0f64; 3];
            let mut maxw = [0.0f64; 3];
            for s in sets {
                if let Some(Some(v)) = s.predictions.get(&q) {
                    let w = weights[&s.set_id];
                    scores[*v as usize] += w;
                    maxw[*v as usize] = maxw[*v as usize].max(w);
                }
            }
            let top = scores.iter().cloned().fold(f64::MIN, f64::max);
            let winners: Vec<u8> = (0u8..3)
                .filter(|&i| top - scores[i as usize] <= TALLY_REL_TOL * top)
                .collect();
            let ans = if winners.len() == 1 {
                winners[0]
            } else {
                match tie_break {
                    TieBreak::LowestCanonicalIndex => winners[0],
                    TieBreak::HighestMaxComponentWeight => {
                        let mut best = winners[0];
                        for &w in &winners[1..] {
                            if maxw[w as usize] > maxw[best as usize] {
                                best = w;
                            }
                        }
                        best
                    }
                }
            };
            out.insert(q, (ans, winners.len() > 1));
        }
        out
    }

    proptest! {
        #[test]
        fn matches_brute_force_oracle(
            n_sets in 3usize..12,
            n_questions in 1usize..25,
            seed in any::<u64>(),
        ) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha20Rng::seed_from_u64(seed);
            let mut sets = Vec::new();
            let mut weights = HashMap::new();
            let mut components = Vec::new();
            for si in 0..n_sets {
                let mut predictions = BTreeMap::new();
                for q in 0..n_questions {
                    let v: Option<u8> = if rng.random_bool(0.1) {
                        None
                    } else {
                        Some(rng.random_range(0u8..3))
                    };
                    predictions.insert(uid(q), v);
                }
                let id = format!("s{si}");
                let w: f64 = rng.random_range(0.0f64..2.0) + f64::MIN_POSITIVE;
                weights.insert(id.clone(), w);
                components.push(VoteComponent { name: id.clone(), set_ids: vec![id.clone()], weight: w });
                sets.push(PredictionSet::new(id, "m", "p", Permutation::identity(), predictions));
            }
            let cfg = VoteConfig { components, tie_break: TieBreak::default(), mode: VoteMode::Flat };
            let got = weighted_vote(&sets, &cfg).unwrap();
            let expected = brute_force(&sets, &weights, cfg.tie_break);
            for (q, (ans, tied)) in expected {
                prop_assert_eq!(got.answers[&q], ans);
                prop_assert_eq!(got.tie_flags.contains(&q), tied);
            }
        }

        #[test]
        fn majority_equals_unit_weighted(
            n_sets in 1usize..10,
            n_questions in 1usize..15,
            seed in any::<u64>(),
        ) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha20Rng::seed_from_u64(seed);
            let sets: Vec<PredictionSet> = (0..n_sets)
                .map(|si| {
                    let predictions = (0..n_questions)
                        .map(|q| {
                            let v: Option<u8> = if rng.random_bool(0.15) { None } else { Some(rng.random_range(0u8..3)) };
                            (uid(q), v)
                        })
                        .collect();
                    PredictionSet::new(format!("s{si}"), "m", "p", Permutation::identity(), predictions)
                })
                .collect();
            let unit = VoteConfig::uniform(sets.iter().map(|s| s.set_id.clone()).collect());
            prop_assert_eq!(majority_vote(&sets).unwrap(), weighted_vote(&sets, &unit).unwrap());
        }

        #[test]
        fn parallel_equals_sequential(
            n_sets in 2usize..8,
            n_questions in 1usize..40,
            seed in any::<u64>(),
        ) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha20Rng::seed_from_u64(seed);
            let sets: Vec<PredictionSet> = (0..n_sets)
                .map(|si| {
                    let predictions = (0..n_questions)
                        .map(|q| (uid(q), Some(rng.random_range(0u8..3))))
                        .collect();
                    PredictionSet::new(format!("s{si}"), "m", "p", Permutation::identity(), predictions)
                })
                .collect();
            let cfg = VoteConfig::uniform(sets.iter().map(|s| s.set_id.clone()).collect());
            prop_assert_eq!(
                weighted_vote(&sets, &cfg).unwrap(),
                weighted_vote_seq(&sets, &cfg).unwrap()
            );
        }
    }
}
