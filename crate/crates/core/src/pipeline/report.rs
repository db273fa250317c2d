//! Per-session scores and their aggregation into a report.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::manifest::Condition;
use crate::annotation::{read_rttm, SegmentAnnotation};
use crate::error::Result;
use crate::metrics::{cpwer, der, DerBreakdown, MeetingSdr, WerCounts};
use crate::transcript::{read_transcript_json, SpeakerTranscript};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionScores {
    pub der: DerBreakdown,
    pub cpwer: WerCounts,
    /// Reference speaker to hypothesis speaker, as chosen by cpWER.
    pub speaker_mapping: Vec<(String, Option<String>)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sdr: Option<MeetingSdr>,
}

pub fn score_session(
    reference_segments: &[SegmentAnnotation],
    reference_transcript: &SpeakerTranscript,
    hypothesis_segments: &[SegmentAnnotation],
    hypothesis_transcript: &SpeakerTranscript,
    collar: f64,
) -> Result<SessionScores> {
    let der = der(reference_segments, hypothesis_segments, collar)?;
    let cp = cpwer(reference_transcript, hypothesis_transcript)?;
    Ok(SessionScores {
        der,
        cpwer: cp.counts,
        speaker_mapping: cp.mapping,
        sdr: None,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "lowercase")]
pub enum SessionOutcome {
    Ok { scores: SessionScores },
    Failed { error: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionReport {
    pub name: String,
    pub condition: Condition,
    #[serde(flatten)]
    pub outcome: SessionOutcome,
}

impl SessionReport {
    pub fn scores(&self) -> Option<&SessionScores> {
        match &self.outcome {
            SessionOutcome::Ok { scores } => Some(scores),
            SessionOutcome::Failed { .. } => None,
        }
    }

    pub fn failed(&self) -> bool {
        matches!(self.outcome, SessionOutcome::Failed { .. })
    }
}

/// Totals over a set of sessions. DER is weighted by reference speech time
/// and cpWER by reference word count, both from raw counts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub sessions: usize,
    pub failed: usize,
    pub der: DerBreakdown,
    pub der_rate: Option<f64>,
    pub cpwer: WerCounts,
    pub cpwer_rate: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mean_sdr_db: Option<f64>,
}

impl Summary {
    pub fn from_sessions<'a>(sessions: impl IntoIterator<Item = &'a SessionReport>) -> Self {
        let mut der = DerBreakdown::default();
        let mut cp = WerCounts::default();
        let (mut n, mut failed) = (0, 0);
        let mut sdrs = Vec::new();
        for s in sessions {
            n += 1;
            match s.scores() {
                Some(sc) => {
                    der.accumulate(&sc.der);
                    cp.accumulate(&sc.cpwer);
                    if let Some(sdr) = &sc.sdr {
                        sdrs.push(sdr.mean_db);
                    }
                }
                None => failed += 1,
            }
        }
        Self {
            sessions: n,
            failed,
            der_rate: (der.total_speech_ms > 0).then(|| der.der()),
            der,
            cpwer_rate: (cp.reference_words > 0).then(|| cp.wer()),
            cpwer: cp,
            mean_sdr_db: (!sdrs.is_empty()).then(|| sdrs.iter().sum::<f64>() / sdrs.len() as f64),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionSummary {
    pub condition: Condition,
    #[serde(flatten)]
    pub summary: Summary,
}

/// Wall-clock seconds per stage; kept out of the report so reports stay
/// byte-identical between runs.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct StageTiming {
    pub session: String,
    pub separation: f64,
    pub diarization: f64,
    pub asr: f64,
    pub scoring: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineReport {
    /// "mixture" or "separated": which input the diarization saw.
    pub input: String,
    pub sessions: Vec<SessionReport>,
    pub conditions: Vec<ConditionSummary>,
    pub overall: Summary,
    #[serde(skip)]
    pub timing: Vec<StageTiming>,
}

impl PipelineReport {
    pub fn new(input: &str, sessions: Vec<SessionReport>, timing: Vec<StageTiming>) -> Self {
        let conditions = Condition::ALL
            .into_iter()
            .filter(|c| sessions.iter().any(|s| s.condition == *c))
            .map(|c| ConditionSummary {
                condition: c,
                summary: Summary::from_sessions(sessions.iter().filter(|s| s.condition == c)),
            })
            .collect();
        let overall = Summary::from_sessions(&sessions);
        Self {
            input: input.to_string(),
            sessions,
            conditions,
            overall,
            timing,
        }
    }

    pub fn failed_sessions(&self) -> Vec<&str> {
        self.sessions
            .iter()
            .filter(|s| s.failed())
            .map(|s| s.name.as_str())
            .collect()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    /// One row per session, per condition and overall.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "scope,name,condition,status,der,missed,false_alarm,confusion,speech_s,cpwer,substitutions,deletions,insertions,ref_words,sdr_db\n",
        );
        let rate = |v: Option<f64>| v.map(|x| format!("{x:.6}")).unwrap_or_default();
        let der_cols = |d: &DerBreakdown| {
            if d.total_speech_ms > 0 {
                format!("{:.6},{:.6},{:.6},{:.6},{:.3}", d.der(), d.missed(), d.false_alarm(), d.confusion(), d.total_speech())
            } else {
                ",,,,".to_string()
            }
        };
        let wer_cols = |c: &WerCounts, r: Option<f64>| {
            format!("{},{},{},{},{}", rate(r), c.substitutions, c.deletions, c.insertions, c.reference_words)
        };
        for s in &self.sessions {
            match &s.outcome {
                SessionOutcome::Ok { scores } => {
                    let r = (scores.cpwer.reference_words > 0).then(|| scores.cpwer.wer());
                    let _ = writeln!(
                        out,
                        "session,{},{},ok,{},{},{}",
                        s.name,
                        s.condition,
                        der_cols(&scores.der),
                        wer_cols(&scores.cpwer, r),
                        rate(scores.sdr.as_ref().map(|x| x.mean_db))
                    );
                }
                SessionOutcome::Failed { .. } => {
                    let _ = writeln!(out, "session,{},{},failed,,,,,,,,,,,", s.name, s.condition);
                }
            }
        }
        let mut summary_row = |scope: &str, name: &str, cond: &str, sm: &Summary| {
            let status = if sm.failed > 0 { "partial" } else { "ok" };
            let _ = writeln!(
                out,
                "{scope},{name},{cond},{status},{},{},{}",
                der_cols(&sm.der),
                wer_cols(&sm.cpwer, sm.cpwer_rate),
                rate(sm.mean_sdr_db)
            );
        };
        for c in &self.conditions {
            summary_row("condition", "", c.condition.label(), &c.summary);
        }
        summary_row("overall", "", "", &self.overall);
        out
    }

    /// Writes `report.json`, `report.csv` and `timing.json` under `dir`.
    pub fn write(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        crate::fsutil::write_atomic(dir.join("report.json"), self.to_json()?)?;
        crate::fsutil::write_atomic(dir.join("report.csv"), self.to_csv())?;
        crate::fsutil::write_atomic(dir.join("timing.json"), serde_json::to_string_pretty(&self.timing)? + "\n")
    }
}

/// A hypothesis produced outside this tool, with its reference.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExternalSession {
    pub name: String,
    pub condition: Condition,
    pub reference_rttm: PathBuf,
    pub reference_transcript: PathBuf,
    pub hypothesis_rttm: PathBuf,
    pub hypothesis_transcript: PathBuf,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ExternalList {
    #[serde(rename = "session")]
    sessions: Vec<ExternalSession>,
}

impl ExternalSession {
    /// Reads `[[session]]` entries from TOML; relative paths resolve
    /// against the file's directory.
    pub fn load_list(path: impl AsRef<Path>) -> Result<Vec<ExternalSession>> {
        let path = path.as_ref();
        let text = crate::fsutil::read_to_string(path)?;
        let mut list: ExternalList = toml::from_str(&text)
            .map_err(|e| crate::error::Error::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new(""));
        for s in &mut list.sessions {
            for p in [
                &mut s.reference_rttm,
                &mut s.reference_transcript,
                &mut s.hypothesis_rttm,
                &mut s.hypothesis_transcript,
            ] {
                if p.is_relative() {
                    *p = base.join(&*p);
                }
            }
        }
        Ok(list.sessions)
    }

    pub fn score(&self, collar: f64) -> Result<SessionScores> {
        let ref_segs = read_rttm(&self.reference_rttm)?;
        let hyp_segs = read_rttm(&self.hypothesis_rttm)?;
        let ref_tr = SpeakerTranscript::from_records(&read_transcript_json(&self.reference_transcript)?);
        let hyp_tr = SpeakerTranscript::from_records(&read_transcript_json(&self.hypothesis_transcript)?);
        score_session(&ref_segs, &ref_tr, &hyp_segs, &hyp_tr, collar)
    }
}

/// Scores hypotheses from files; sessions that fail to parse are marked
/// failed with the error text.
pub fn score_external(sessions: &[ExternalSession], collar: f64) -> PipelineReport {
    let reports = sessions
        .iter()
        .map(|s| SessionReport {
            name: s.name.clone(),
            condition: s.condition,
            outcome: match s.score(collar) {
                Ok(scores) => SessionOutcome::Ok { scores },
                Err(e) => {
                    log::error!("session {}: {e}", s.name);
                    SessionOutcome::Failed { error: e.to_string() }
                }
            },
        })
        .collect();
    PipelineReport::new("external", reports, Vec::new())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scores(missed: i64, speech: i64, errs: usize, words: usize) -> SessionScores {
        SessionScores {
            der: DerBreakdown {
                missed_ms: missed,
                false_alarm_ms: 0,
                confusion_ms: 0,
                total_speech_ms: speech,
            },
            cpwer: WerCounts {
                substitutions: errs,
                deletions: 0,
                insertions: 0,
                reference_words: words,
            },
            speaker_mapping: Vec::new(),
            sdr: None,
        }
    }

    fn session(name: &str, c: Condition, s: Option<SessionScores>) -> SessionReport {
        SessionReport {
            name: name.into(),
            condition: c,
            outcome: match s {
                Some(scores) => SessionOutcome::Ok { scores },
                None => SessionOutcome::Failed { error: "boom".into() },
            },
        }
    }

    #[test]
    fn aggregation_is_weighted_by_raw_counts() {
        let r = PipelineReport::new(
            "mixture",
            vec![
                session("a", Condition::Ov10, Some(scores(100, 1000, 1, 10))),
                session("b", Condition::Ov10, Some(scores(900, 3000, 9, 30))),
                session("c", Condition::Ov20, None),
            ],
            Vec::new(),
        );
        // 1000 / 4000, not the mean of 0.1 and 0.3
        assert_eq!(r.conditions[0].summary.der_rate, Some(0.25));
        assert_eq!(r.conditions[0].summary.cpwer_rate, Some(0.25));
        assert_eq!(r.conditions[1].summary.failed, 1);
        assert_eq!(r.conditions[1].summary.der_rate, None);
        assert_eq!(r.overall.sessions, 3);
        assert_eq!(r.failed_sessions(), vec!["c"]);
        let csv = r.to_csv();
        assert_eq!(csv.lines().count(), 1 + 3 + 2 + 1);
        assert!(csv.contains("session,c,OV20,failed"));
    }

    #[test]
    fn report_json_round_trips() {
        let r = PipelineReport::new("mixture", vec![session("a", Condition::ZeroLong, Some(scores(0, 10, 0, 3)))], Vec::new());
        let back: PipelineReport = serde_json::from_str(&r.to_json().unwrap()).unwrap();
        assert_eq!(back, r);
    }
}
