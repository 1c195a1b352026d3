use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const FUSION_TEMPLATE: &str =
    "Video Caption: \"{video}\", Music Caption: \"{music}\". Describe the music from both video and music captions.";
pub const MSI_TEMPLATE: &str =
    "Video Caption: \"{video}\", Music Caption: \"{music}\". What type of scene the music is suitable for?";

/// Prompt templates with `{video}` and `{music}` placeholders.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PromptTemplates {
    pub fusion: String,
    pub msi: String,
}

impl Default for PromptTemplates {
    fn default() -> Self {
        Self {
            fusion: FUSION_TEMPLATE.to_string(),
            msi: MSI_TEMPLATE.to_string(),
        }
    }
}

fn fill(template: &str, video_caption: &str, music_caption: &str) -> Result<String> {
    if video_caption.is_empty() {
        return Err(Error::invalid("video caption is empty"));
    }
    if music_caption.is_empty() {
        return Err(Error::invalid("music caption is empty"));
    }
    // Single pass so placeholder text inside a caption is left alone.
    let mut out = String::with_capacity(template.len() + video_caption.len() + music_caption.len());
    let mut rest = template;
    while let Some(pos) = rest.find('{') {
        out.push_str(&rest[..pos]);
        let tail = &rest[pos..];
        if let Some(r) = tail.strip_prefix("{video}") {
            out.push_str(video_caption);
            rest = r;
        } else if let Some(r) = tail.strip_prefix("{music}") {
            out.push_str(music_caption);
            rest = r;
        } else {
            out.push('{');
            rest = &tail[1..];
        }
    }
    out.push_str(rest);
    Ok(out)
}

impl PromptTemplates {
    pub fn fusion_prompt(&self, video_caption: &str, music_caption: &str) -> Result<String> {
        fill(&self.fusion, video_caption, music_caption)
    }

    pub fn msi_prompt(&self, video_caption: &str, music_caption: &str) -> Result<String> {
        fill(&self.msi, video_caption, music_caption)
    }
}

pub fn build_fusion_prompt(video_caption: &str, music_caption: &str) -> Result<String> {
    fill(FUSION_TEMPLATE, video_caption, music_caption)
}

pub fn build_msi_prompt(video_caption: &str, music_caption: &str) -> Result<String> {
    fill(MSI_TEMPLATE, video_caption, music_caption)
}
