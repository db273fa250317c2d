use serde::{Deserialize, Serialize};

use super::assignment::solve_assignment;
use crate::error::{Error, Result};
use crate::transcript::SpeakerTranscript;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct WerCounts {
    pub substitutions: usize,
    pub deletions: usize,
    pub insertions: usize,
    pub reference_words: usize,
}

impl WerCounts {
    pub fn errors(&self) -> usize {
        self.substitutions + self.deletions + self.insertions
    }

    /// Error fraction; infinite for an empty reference with insertions.
    pub fn wer(&self) -> f64 {
        match (self.errors(), self.reference_words) {
            (0, _) => 0.0,
            (_, 0) => f64::INFINITY,
            (e, n) => e as f64 / n as f64,
        }
    }

    pub fn accumulate(&mut self, other: &WerCounts) {
        self.substitutions += other.substitutions;
        self.deletions += other.deletions;
        self.insertions += other.insertions;
        self.reference_words += other.reference_words;
    }
}

/// Levenshtein alignment with unit costs, reporting the S/D/I breakdown.
pub fn wer<S: AsRef<str>>(reference: &[S], hypothesis: &[S]) -> WerCounts {
    let n = reference.len();
    let m = hypothesis.len();
    // cell: (cost, subs, dels, ins)
    let mut prev: Vec<(usize, usize, usize, usize)> = (0..=m).map(|j| (j, 0, 0, j)).collect();
    let mut cur = vec![(0, 0, 0, 0); m + 1];
    for i in 1..=n {
        cur[0] = (i, 0, i, 0);
        for j in 1..=m {
            let same = reference[i - 1].as_ref() == hypothesis[j - 1].as_ref();
            let diag = prev[j - 1];
            let diag = if same {
                diag
            } else {
                (diag.0 + 1, diag.1 + 1, diag.2, diag.3)
            };
            let up = prev[j];
            let del = (up.0 + 1, up.1, up.2 + 1, up.3);
            let left = cur[j - 1];
            let ins = (left.0 + 1, left.1, left.2, left.3 + 1);
            cur[j] = [diag, del, ins]
                .into_iter()
                .min_by_key(|c| c.0)
                .expect("three candidates");
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    let (_, s, d, ins) = prev[m];
    WerCounts {
        substitutions: s,
        deletions: d,
        insertions: ins,
        reference_words: n,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CpWerResult {
    pub cpwer: f64,
    pub counts: WerCounts,
    /// Reference speaker to its hypothesis speaker, if any.
    pub mapping: Vec<(String, Option<String>)>,
}

/// Concatenated minimum-permutation WER.
///
/// Every (reference, hypothesis) speaker pair is scored on concatenated words;
/// the assignment minimizes the total edit count. Unpaired reference speakers
/// count as deletions and unpaired hypothesis speakers as insertions.
pub fn cpwer(reference: &SpeakerTranscript, hypothesis: &SpeakerTranscript) -> Result<CpWerResult> {
    let ref_spk: Vec<&str> = reference.speakers().collect();
    let hyp_spk: Vec<&str> = hypothesis.speakers().collect();
    if ref_spk.is_empty() {
        return Err(Error::UndefinedMetric("cpWER without reference speakers".into()));
    }
    let ref_words: Vec<Vec<String>> = ref_spk.iter().map(|s| reference.concatenated(s)).collect();
    let hyp_words: Vec<Vec<String>> = hyp_spk.iter().map(|s| hypothesis.concatenated(s)).collect();
    let total_ref: usize = ref_words.iter().map(Vec::len).sum();
    if total_ref == 0 {
        return Err(Error::UndefinedMetric("cpWER with an empty reference".into()));
    }

    let pair: Vec<Vec<WerCounts>> = ref_words
        .iter()
        .map(|r| hyp_words.iter().map(|h| wer(r, h)).collect())
        .collect();

    // pad to a square problem: dummy columns delete, dummy rows insert
    let size = ref_spk.len().max(hyp_spk.len());
    let cost: Vec<Vec<f64>> = (0..size)
        .map(|i| {
            (0..size)
                .map(|j| match (i < ref_spk.len(), j < hyp_spk.len()) {
                    (true, true) => pair[i][j].errors() as f64,
                    (true, false) => ref_words[i].len() as f64,
                    (false, true) => hyp_words[j].len() as f64,
                    (false, false) => 0.0,
                })
                .collect()
        })
        .collect();
    let assignment = solve_assignment(&cost);

    let mut counts = WerCounts::default();
    let mut mapping = Vec::with_capacity(ref_spk.len());
    for &(i, j) in &assignment.mapping {
        match (i < ref_spk.len(), j < hyp_spk.len()) {
            (true, true) => {
                counts.accumulate(&pair[i][j]);
                mapping.push((ref_spk[i].to_string(), Some(hyp_spk[j].to_string())));
            }
            (true, false) => {
                counts.accumulate(&WerCounts {
                    deletions: ref_words[i].len(),
                    reference_words: ref_words[i].len(),
                    ..Default::default()
                });
                mapping.push((ref_spk[i].to_string(), None));
            }
            (false, true) => counts.accumulate(&WerCounts {
                insertions: hyp_words[j].len(),
                ..Default::default()
            }),
            (false, false) => {}
        }
    }
    Ok(CpWerResult {
        cpwer: counts.wer(),
        counts,
        mapping,
    })
}
