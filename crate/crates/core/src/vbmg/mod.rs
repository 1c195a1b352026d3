//! Caption-driven background music generation experiments.
//!
//! For each caption strategy the driver sends one caption per clip to a
//! text-to-music backend, records every call in an append-only ledger, and
//! scores the generated set against the original soundtracks with FAD and
//! label KL. Survey responses are aggregated into per-strategy means.

mod backend;
mod experiment;
mod ledger;
mod survey;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use backend::{
    FnMusicBackend, HttpMusicBackend, MusicBackend, MusicRequest, ReferenceEcho, SineStub,
};
pub use experiment::{
    generate_music, report_from_ledger, run_experiment, ExperimentConfig, ReferenceSet,
};
pub use ledger::{GenerationStatus, Ledger, LedgerEntry, LEDGER_FILE};
pub use survey::{
    aggregate_subjective, read_survey, SurveyResponse, COUNT_COLUMN, SCORE_COLUMN, SCORE_MAX,
    SCORE_MIN,
};

use crate::corpus::CaptionBundle;
use crate::error::{Error, Result};

/// Clip length of the source corpus.
pub const DEFAULT_DURATION_S: f64 = 10.0;
/// Allowed gap between requested and returned audio length.
pub const DURATION_TOLERANCE_S: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CaptionStrategy {
    Msi,
    Video,
    Music,
    Fusion,
}

impl CaptionStrategy {
    pub const ALL: [CaptionStrategy; 4] = [Self::Msi, Self::Video, Self::Music, Self::Fusion];

    /// Row key used in reports.
    pub fn label(self) -> &'static str {
        match self {
            Self::Msi => "MSI",
            Self::Video => "Video",
            Self::Music => "Music",
            Self::Fusion => "Fusion",
        }
    }

    /// Lowercase name used in files and on the command line.
    pub fn name(self) -> &'static str {
        match self {
            Self::Msi => "msi",
            Self::Video => "video",
            Self::Music => "music",
            Self::Fusion => "fusion",
        }
    }

    /// Parses a comma-separated list such as `msi,video`.
    pub fn parse_list(s: &str) -> Result<Vec<Self>> {
        let mut out = Vec::new();
        for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let st: Self = part.parse()?;
            if out.contains(&st) {
                return Err(Error::invalid(format!("strategy {part:?} listed twice")));
            }
            out.push(st);
        }
        if out.is_empty() {
            return Err(Error::invalid("no caption strategy given"));
        }
        Ok(out)
    }
}

impl fmt::Display for CaptionStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for CaptionStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|st| st.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| {
                Error::invalid(format!(
                    "unknown caption strategy {s:?} (expected msi, video, music or fusion)"
                ))
            })
    }
}

/// The caption a strategy feeds to the music backend.
pub fn select_caption(bundle: &CaptionBundle, strategy: CaptionStrategy) -> Result<&str> {
    let caption = match strategy {
        CaptionStrategy::Msi => &bundle.msi_caption,
        CaptionStrategy::Video => &bundle.video_caption,
        CaptionStrategy::Music => &bundle.music_caption,
        CaptionStrategy::Fusion => &bundle.fusion_caption,
    };
    let caption = caption.trim();
    if caption.is_empty() {
        return Err(Error::invalid(format!(
            "clip {}: {} caption is empty",
            bundle.clip_id,
            strategy.name()
        )));
    }
    Ok(caption)
}

/// Generation seed for one (clip, strategy) pair: the first eight bytes of
/// `sha256(run_seed ‖ clip_id ‖ 0 ‖ strategy)`.
pub fn generation_seed(run_seed: u64, clip_id: &str, strategy: CaptionStrategy) -> u64 {
    let mut h = Sha256::new();
    h.update(run_seed.to_le_bytes());
    h.update(clip_id.as_bytes());
    h.update([0u8]);
    h.update(strategy.name().as_bytes());
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("8 bytes"))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bundle() -> CaptionBundle {
        CaptionBundle {
            clip_id: "c1".into(),
            video_caption: "A basketball game is being played in front of a crowd.".into(),
            music_caption: "The music has a mood of suspense.".into(),
            fusion_caption: "".into(),
            msi_caption: "The music is suitable for a scene of sports competition, such as a crucial moment in a basketball game, where a high level of tension and excitement is being built up.".into(),
            backend_provenance: Default::default(),
        }
    }

    #[test]
    fn selects_the_matching_field() {
        let b = bundle();
        assert!(select_caption(&b, CaptionStrategy::Msi)
            .unwrap()
            .starts_with("The music is suitable for a scene of sports"));
        assert_eq!(
            select_caption(&b, CaptionStrategy::Video).unwrap(),
            b.video_caption
        );
        assert!(select_caption(&b, CaptionStrategy::Fusion).is_err());
    }

    #[test]
    fn strategy_names_parse_case_insensitively() {
        assert_eq!(
            "MSI".parse::<CaptionStrategy>().unwrap(),
            CaptionStrategy::Msi
        );
        assert_eq!(
            CaptionStrategy::parse_list("msi, video,music,FUSION").unwrap(),
            CaptionStrategy::ALL.to_vec()
        );
        assert!(CaptionStrategy::parse_list("msi,msi").is_err());
        assert!("audio".parse::<CaptionStrategy>().is_err());
    }

    #[test]
    fn seeds_differ_by_clip_and_strategy() {
        let a = generation_seed(1, "c1", CaptionStrategy::Msi);
        assert_eq!(a, generation_seed(1, "c1", CaptionStrategy::Msi));
        assert_ne!(a, generation_seed(1, "c2", CaptionStrategy::Msi));
        assert_ne!(a, generation_seed(1, "c1", CaptionStrategy::Video));
        assert_ne!(a, generation_seed(2, "c1", CaptionStrategy::Msi));
    }
}
