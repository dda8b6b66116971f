//! The selection-oracle port: the component that looks at an annotated image
//! and a prompt and names the most promising labels.
//!
//! Implementations in this crate are the deterministic synthetic oracle, the
//! scripted replay oracle and the region-naming text baseline. Network-backed
//! oracles live in the std companion crate and implement the same trait.

pub mod baseline;
pub mod parse;
pub mod prompt;
pub mod replay;
pub mod synthetic;

use alloc::boxed::Box;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::annotate::AnnotatedImage;
use crate::space::Action;

pub use baseline::{Region, SyntheticRegionPicker};
pub use parse::{parse_selection, ParseError};
pub use prompt::{build_prompt, build_prompt_parts, PromptError, PromptPart};
pub use replay::ReplayOracle;
pub use synthetic::SyntheticOracle;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum OracleError {
    #[error("transport failure: {0}")]
    Transport(String),
    #[error("rate limited (retry after {retry_after_secs:?} s)")]
    RateLimited { retry_after_secs: Option<f64> },
    #[error("could not read a selection from the oracle reply: {kind}")]
    Parse { kind: ParseError, raw_text: String },
    #[error("replay script exhausted")]
    ScriptExhausted,
    #[error("invalid query: {0}")]
    InvalidQuery(&'static str),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error("synthetic oracle has no reference action")]
    MissingReference,
}

impl OracleError {
    /// Whether repeating the same request may succeed.
    pub fn is_transient(&self) -> bool {
        matches!(self, OracleError::Transport(_) | OracleError::RateLimited { .. })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PromptStyle {
    #[default]
    ZeroShotCot,
    ZeroShotDirect,
    FewShotCot,
    FewShotDirect,
}

impl PromptStyle {
    pub fn is_cot(self) -> bool {
        matches!(self, PromptStyle::ZeroShotCot | PromptStyle::FewShotCot)
    }

    pub fn is_few_shot(self) -> bool {
        matches!(self, PromptStyle::FewShotCot | PromptStyle::FewShotDirect)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Segment {
    Preamble,
    Image,
    Task,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TaskKind {
    #[default]
    Navigation,
    Manipulation,
    Keypoint,
    Pickplace,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PromptOptions {
    pub style: PromptStyle,
    pub ordering: [Segment; 3],
    pub task: TaskKind,
    /// Worked examples inserted verbatim after the preamble in few-shot styles.
    pub exemplars: Vec<String>,
}

impl Default for PromptOptions {
    fn default() -> Self {
        Self {
            style: PromptStyle::ZeroShotCot,
            ordering: [Segment::Preamble, Segment::Image, Segment::Task],
            task: TaskKind::Navigation,
            exemplars: Vec::new(),
        }
    }
}

impl PromptOptions {
    pub fn for_task(task: TaskKind) -> Self {
        Self { task, ..Self::default() }
    }

    pub fn validate(&self) -> Result<(), PromptError> {
        let [a, b, c] = self.ordering;
        if a == b || b == c || a == c {
            return Err(PromptError::InvalidOrdering);
        }
        if self.style.is_few_shot() && self.exemplars.is_empty() {
            return Err(PromptError::MissingExemplars);
        }
        Ok(())
    }
}

/// One multiple-choice question put to an oracle.
#[derive(Debug, Clone, Copy)]
pub struct SelectionQuery<'a> {
    pub annotated: &'a AnnotatedImage,
    pub instruction: &'a str,
    pub k: usize,
    pub prompt: &'a PromptOptions,
    /// Gripper intent for manipulation prompts, stated in text only.
    pub gripper: Option<bool>,
}

impl SelectionQuery<'_> {
    pub fn validate(&self) -> Result<(), OracleError> {
        if self.k == 0 {
            return Err(OracleError::InvalidQuery("k must be at least 1"));
        }
        if self.k > self.annotated.labels.len() {
            return Err(OracleError::InvalidQuery("k exceeds the number of labels"));
        }
        Ok(())
    }

    pub fn valid_labels(&self) -> Vec<u32> {
        self.annotated.label_ids()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SelectionResponse {
    /// Best first, no duplicates.
    pub ranked_labels: Vec<u32>,
    pub raw_text: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Concurrency {
    /// Calls must not overlap; the engine serializes them.
    Serial,
    /// Up to `max_in_flight` calls may run at once on clones of the oracle.
    Concurrent { max_in_flight: usize },
}

pub trait SelectionOracle {
    fn select(&mut self, query: &SelectionQuery<'_>) -> Result<SelectionResponse, OracleError>;

    fn concurrency(&self) -> Concurrency {
        Concurrency::Serial
    }

    /// Hands the oracle the known answer, for oracles that score candidates
    /// against one. Others ignore it.
    fn set_reference(&mut self, _truth: &Action) {}
}

impl<O: SelectionOracle + ?Sized> SelectionOracle for &mut O {
    fn select(&mut self, query: &SelectionQuery<'_>) -> Result<SelectionResponse, OracleError> {
        (**self).select(query)
    }

    fn concurrency(&self) -> Concurrency {
        (**self).concurrency()
    }

    fn set_reference(&mut self, truth: &Action) {
        (**self).set_reference(truth)
    }
}

impl<O: SelectionOracle + ?Sized> SelectionOracle for Box<O> {
    fn select(&mut self, query: &SelectionQuery<'_>) -> Result<SelectionResponse, OracleError> {
        (**self).select(query)
    }

    fn concurrency(&self) -> Concurrency {
        (**self).concurrency()
    }

    fn set_reference(&mut self, truth: &Action) {
        (**self).set_reference(truth)
    }
}
