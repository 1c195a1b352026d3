use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::CaptionStrategy;
use crate::error::{Error, Result};
use crate::report::MetricReport;

pub const SCORE_MIN: f64 = 0.0;
pub const SCORE_MAX: f64 = 100.0;
pub const SCORE_COLUMN: &str = "score";
pub const COUNT_COLUMN: &str = "responses";

/// One rating of one soundtrack variant by one respondent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurveyResponse {
    pub respondent_id: String,
    pub video_id: String,
    pub strategy: CaptionStrategy,
    pub score: f64,
}

#[derive(Deserialize)]
struct RawResponse {
    respondent_id: String,
    video_id: String,
    strategy: String,
    score: f64,
}

fn check_score(score: f64) -> Result<()> {
    if !(SCORE_MIN..=SCORE_MAX).contains(&score) {
        return Err(Error::invalid(format!(
            "score {score} outside [{SCORE_MIN}, {SCORE_MAX}]"
        )));
    }
    Ok(())
}

/// Reads a CSV export with header `respondent_id,video_id,strategy,score`.
/// Strategy names are case-insensitive.
pub fn read_survey(path: &Path) -> Result<Vec<SurveyResponse>> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::invalid(format!("{}: {e}", path.display())))?;
    let parse_err = |line: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut out = Vec::new();
    for (i, row) in reader.deserialize::<RawResponse>().enumerate() {
        let line = i + 2;
        let raw = row.map_err(|e| parse_err(line, e.to_string()))?;
        let strategy = raw
            .strategy
            .parse()
            .map_err(|e: Error| parse_err(line, e.to_string()))?;
        check_score(raw.score).map_err(|e| parse_err(line, e.to_string()))?;
        out.push(SurveyResponse {
            respondent_id: raw.respondent_id,
            video_id: raw.video_id,
            strategy,
            score: raw.score,
        });
    }
    Ok(out)
}

/// Mean score per strategy over all (respondent, video) ratings. Scores are
/// summed in sorted order so the result does not depend on input order.
pub fn aggregate_subjective(responses: &[SurveyResponse]) -> Result<MetricReport> {
    if responses.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut seen = BTreeSet::new();
    let mut by_strategy: BTreeMap<CaptionStrategy, Vec<f64>> = BTreeMap::new();
    for r in responses {
        check_score(r.score)?;
        if !seen.insert((&r.respondent_id, &r.video_id, r.strategy)) {
            return Err(Error::invalid(format!(
                "duplicate response: respondent {}, video {}, strategy {}",
                r.respondent_id,
                r.video_id,
                r.strategy.name()
            )));
        }
        by_strategy.entry(r.strategy).or_default().push(r.score);
    }
    let mut report = MetricReport::new();
    for (strategy, mut scores) in by_strategy {
        scores.sort_by(f64::total_cmp);
        let mean = scores.iter().sum::<f64>() / scores.len() as f64;
        report.insert_row(
            strategy.label(),
            [(SCORE_COLUMN, mean), (COUNT_COLUMN, scores.len() as f64)],
        );
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn resp(who: &str, video: &str, strategy: CaptionStrategy, score: f64) -> SurveyResponse {
        SurveyResponse {
            respondent_id: who.into(),
            video_id: video.into(),
            strategy,
            score,
        }
    }

    #[test]
    fn single_and_two_point_means() {
        let r = aggregate_subjective(&[resp("a", "v", CaptionStrategy::Msi, 50.0)]).unwrap();
        assert_eq!(r.get("MSI", SCORE_COLUMN), Some(50.0));
        let r = aggregate_subjective(&[
            resp("a", "v", CaptionStrategy::Video, 0.0),
            resp("b", "v", CaptionStrategy::Video, 100.0),
        ])
        .unwrap();
        assert_eq!(r.get("Video", SCORE_COLUMN), Some(50.0));
        assert_eq!(r.get("Video", COUNT_COLUMN), Some(2.0));
    }

    #[test]
    fn rejects_duplicates_and_out_of_range() {
        let dup = [
            resp("a", "v", CaptionStrategy::Msi, 10.0),
            resp("a", "v", CaptionStrategy::Msi, 20.0),
        ];
        assert!(aggregate_subjective(&dup).is_err());
        assert!(aggregate_subjective(&[resp("a", "v", CaptionStrategy::Msi, 100.5)]).is_err());
        assert!(matches!(
            aggregate_subjective(&[]),
            Err(Error::EmptyDataset)
        ));
    }

    #[test]
    fn csv_reports_offending_line() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.csv");
        std::fs::write(
            &p,
            "respondent_id,video_id,strategy,score\nr1,v1,MSI,80\nr1,v1,Video,120\n",
        )
        .unwrap();
        match read_survey(&p) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
        std::fs::write(
            &p,
            "respondent_id,video_id,strategy,score\nr1,v1,MSI,80\nr1,v1, music ,70.5\n",
        )
        .unwrap();
        let rows = read_survey(&p).unwrap();
        assert_eq!(rows[1].strategy, CaptionStrategy::Music);
        assert_eq!(rows[1].score, 70.5);
    }
}
