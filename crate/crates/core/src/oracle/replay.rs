//! Scripted oracle that replays canned reply texts in order.

use alloc::collections::VecDeque;
use alloc::string::String;

use super::{parse_selection, OracleError, SelectionOracle, SelectionQuery, SelectionResponse};

#[derive(Debug, Clone, Default)]
pub struct ReplayOracle {
    script: VecDeque<String>,
}

impl ReplayOracle {
    pub fn new<I, S>(script: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Self { script: script.into_iter().map(Into::into).collect() }
    }

    pub fn remaining(&self) -> usize {
        self.script.len()
    }
}

impl SelectionOracle for ReplayOracle {
    fn select(&mut self, query: &SelectionQuery<'_>) -> Result<SelectionResponse, OracleError> {
        let raw_text = self.script.pop_front().ok_or(OracleError::ScriptExhausted)?;
        match parse_selection(&raw_text, &query.valid_labels()) {
            Ok(ranked_labels) => Ok(SelectionResponse { ranked_labels, raw_text }),
            Err(kind) => Err(OracleError::Parse { kind, raw_text }),
        }
    }
}

#[cfg(test)]
mod tests {
    use alloc::collections::BTreeMap;
    use alloc::vec;

    use super::*;
    use crate::annotate::AnnotatedImage;
    use crate::oracle::{ParseError, PromptOptions};
    use crate::raster::{Raster, Rgb};
    use crate::space::Action;

    fn ten_labels() -> AnnotatedImage {
        let labels: BTreeMap<u32, Action> = (1..=10).map(|i| (i, Action::new(vec![0.0, 0.0]))).collect();
        AnnotatedImage { pixels: Raster::new(2, 2, Rgb::WHITE), labels, geometries: vec![] }
    }

    #[test]
    fn pops_in_order_then_exhausts() {
        let img = ten_labels();
        let opts = PromptOptions::default();
        let q = SelectionQuery { annotated: &img, instruction: "", k: 1, prompt: &opts, gripper: None };
        let mut o = ReplayOracle::new(["{\"points\":[1]}"]);
        assert_eq!(o.select(&q).unwrap().ranked_labels, vec![1]);
        assert_eq!(o.select(&q), Err(OracleError::ScriptExhausted));
    }

    #[test]
    fn invalid_label_surfaces_filter_error() {
        let img = ten_labels();
        let opts = PromptOptions::default();
        let q = SelectionQuery { annotated: &img, instruction: "", k: 1, prompt: &opts, gripper: None };
        let mut o = ReplayOracle::new(["{\"points\": [99]}"]);
        assert!(matches!(o.select(&q), Err(OracleError::Parse { kind: ParseError::EmptyAfterFilter, .. })));
    }
}
