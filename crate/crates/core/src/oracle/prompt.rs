//! Prompt templates for each task family and their assembly in a chosen
//! segment order.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use super::{PromptOptions, Segment, SelectionQuery, TaskKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
pub enum PromptError {
    #[error("few-shot prompt styles need at least one exemplar")]
    MissingExemplars,
    #[error("prompt ordering must name preamble, image and task exactly once")]
    InvalidOrdering,
}

/// Placeholder written where the image goes in the flattened text form.
pub const IMAGE_MARKER: &str = "IMG,";

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PromptPart {
    Text(String),
    Image,
}

const POINTS_FORMAT: &str = "{\"points\": []}";

const MANIPULATION_LEGEND: &str = "Red means move the arm forward (away from the camera), blue means move the arm backwards (towards the camera).\n\
Smaller circles are further from the camera and thus move the arm forward, larger circles are closer and thus move the arm backwards.";

fn preamble(opts: &PromptOptions, instruction: &str) -> String {
    let cot = opts.style.is_cot();
    match opts.task {
        TaskKind::Keypoint => format!(
            "Your goal is to find the {instruction} in this scene. I have annotated the image with numbered circles."
        ),
        TaskKind::Navigation => String::from(
            "I am a wheeled robot that cannot go over objects. This is the image I'm seeing right now. \
I have annotated it with numbered circles. Each number represent a general direction I can follow.",
        ),
        TaskKind::Manipulation if cot => format!(
            "Summary: The arrows are actions the robot can take.\n\
Reason through the task first and at the end summarize the correct action choice(s) with the format, Arrow: [<number>, <number>, etc.].\n\
Description: The robot can only grasp or move objects if the gripper is around the object and closed on the object.\n\
{MANIPULATION_LEGEND}\n\
You must include this summarization."
        ),
        TaskKind::Manipulation => format!(
            "Summary: The arrows are actions the robot can take.\n\
{MANIPULATION_LEGEND}\n\
Do not output anything else, direct answer with the format, Arrow: [<number>, <number>, etc.]."
        ),
        TaskKind::Pickplace => String::from("I have annotated the image with numbered markers."),
    }
}

fn task(q: &SelectionQuery<'_>) -> String {
    let opts = q.prompt;
    let cot = opts.style.is_cot();
    let (instr, k) = (q.instruction, q.k);
    match opts.task {
        TaskKind::Keypoint => {
            let analysis = if cot {
                "Give a one sentence analysis of why you chose those points."
            } else {
                "Do not give any analysis."
            };
            format!(
                "Choose the {k} numbers that have the most overlap with the {instr}. If there are no points with overlap, \
then don't choose any points. You are a five-time world champion in this game. {analysis} \
Provide your answer at the end in a json file of this format:\n{POINTS_FORMAT}"
            )
        }
        TaskKind::Navigation => {
            let lead = if cot { "Reason through the task first and provide" } else { "Skip analysis and provide" };
            format!(
                "Now you are a five-time world-champion navigation agent and your task is to tell me which circle I should pick \
for the task of: {instr}? Choose {k} best candidate numbers. Do NOT choose routes that goes through objects.  \
{lead} your answer at the end in a json file of this form:\n{POINTS_FORMAT}"
            )
        }
        TaskKind::Manipulation => {
            let mut t = if opts.style.is_few_shot() {
                format!("Task: {instr}.")
            } else {
                format!("Task: What are the best arrows for the robot follow to {instr}?")
            };
            match q.gripper {
                Some(true) => t.push_str("\nThe robot will close its gripper after this motion."),
                Some(false) => t.push_str("\nThe gripper stays open during this motion."),
                None => {}
            }
            t
        }
        TaskKind::Pickplace => {
            if cot {
                format!(
                    "which number markers are closest to the {instr}? Reason and express the final answer as 'final answer' \
followed by a list of the closest marker numbers."
                )
            } else {
                format!(
                    "which number markers are closest to the {instr}? Express only the final answer as 'final answer' \
followed by a list of the closest marker numbers."
                )
            }
        }
    }
}

/// Prompt as an ordered list of text and image parts, for multimodal
/// transports.
pub fn build_prompt_parts(q: &SelectionQuery<'_>) -> Result<Vec<PromptPart>, PromptError> {
    let opts = q.prompt;
    opts.validate()?;
    let mut pre = preamble(opts, q.instruction);
    if opts.style.is_few_shot() {
        for ex in &opts.exemplars {
            pre.push('\n');
            pre.push_str(ex);
        }
    }
    let task = task(q);
    Ok(opts
        .ordering
        .iter()
        .map(|seg| match seg {
            Segment::Preamble => PromptPart::Text(pre.clone()),
            Segment::Image => PromptPart::Image,
            Segment::Task => PromptPart::Text(task.clone()),
        })
        .collect())
}

/// Flattened prompt text, with [`IMAGE_MARKER`] standing in for the image.
pub fn build_prompt(q: &SelectionQuery<'_>) -> Result<String, PromptError> {
    let parts = build_prompt_parts(q)?;
    let lines: Vec<&str> = parts
        .iter()
        .map(|p| match p {
            PromptPart::Text(t) => t.as_str(),
            PromptPart::Image => IMAGE_MARKER,
        })
        .collect();
    Ok(lines.join("\n"))
}

#[cfg(test)]
mod tests {
    use alloc::collections::BTreeMap;
    use alloc::string::ToString;
    use alloc::vec;

    use super::*;
    use crate::annotate::AnnotatedImage;
    use crate::oracle::PromptStyle;
    use crate::raster::{Raster, Rgb};
    use crate::space::Action;

    fn annotated(n: u32) -> AnnotatedImage {
        let labels: BTreeMap<u32, Action> = (1..=n).map(|i| (i, Action::new(vec![f64::from(i), 0.0]))).collect();
        AnnotatedImage { pixels: Raster::new(4, 4, Rgb::WHITE), labels, geometries: vec![] }
    }

    fn query<'a>(img: &'a AnnotatedImage, instr: &'a str, k: usize, opts: &'a PromptOptions) -> SelectionQuery<'a> {
        SelectionQuery { annotated: img, instruction: instr, k, prompt: opts, gripper: None }
    }

    #[test]
    fn keypoint_prompt_carries_template_clauses() {
        let img = annotated(10);
        let opts = PromptOptions::for_task(TaskKind::Keypoint);
        let text = build_prompt(&query(&img, "red mug", 3, &opts)).unwrap();
        assert!(text.contains("Choose the 3 numbers that have the most overlap"));
        assert!(text.contains("Provide your answer at the end in a json file"));
        assert!(text.contains("find the red mug in this scene"));
        assert!(text.contains("{\"points\": []}"));
    }

    #[test]
    fn navigation_prompt_substitutes_k() {
        let img = annotated(10);
        let opts = PromptOptions::for_task(TaskKind::Navigation);
        let text = build_prompt(&query(&img, "find the apple", 2, &opts)).unwrap();
        assert!(text.contains("Choose 2 best candidate numbers"));
        assert!(text.contains("for the task of: find the apple?"));
    }

    #[test]
    fn ordering_permutes_identical_segments() {
        let img = annotated(5);
        let pit = PromptOptions::default();
        let ipt =
            PromptOptions { ordering: [Segment::Image, Segment::Preamble, Segment::Task], ..PromptOptions::default() };
        let a = build_prompt_parts(&query(&img, "go to the door", 2, &pit)).unwrap();
        let b = build_prompt_parts(&query(&img, "go to the door", 2, &ipt)).unwrap();
        assert_ne!(a, b);
        let mut sa = a.clone();
        let mut sb = b.clone();
        let key = |p: &PromptPart| match p {
            PromptPart::Text(t) => t.clone(),
            PromptPart::Image => IMAGE_MARKER.to_string(),
        };
        sa.sort_by_key(key);
        sb.sort_by_key(key);
        assert_eq!(sa, sb);
        assert_eq!(b[0], PromptPart::Image);
    }

    #[test]
    fn few_shot_requires_exemplars() {
        let img = annotated(3);
        let opts =
            PromptOptions { style: PromptStyle::FewShotDirect, task: TaskKind::Manipulation, ..Default::default() };
        assert_eq!(build_prompt(&query(&img, "pick oreo", 1, &opts)), Err(PromptError::MissingExemplars));
    }

    #[test]
    fn few_shot_inserts_exemplars_verbatim() {
        let img = annotated(3);
        let ex = "IMG,\nTask: Pick up the iced coffee can.\nArrow: [1],".to_string();
        let opts = PromptOptions {
            style: PromptStyle::FewShotDirect,
            task: TaskKind::Manipulation,
            exemplars: vec![ex.clone()],
            ..Default::default()
        };
        let text = build_prompt(&query(&img, "pick white coat hanger", 1, &opts)).unwrap();
        assert!(text.contains(&ex));
        assert!(text.ends_with("Task: pick white coat hanger."));
    }

    #[test]
    fn manipulation_cot_demands_arrow_summary() {
        let img = annotated(3);
        let opts = PromptOptions::for_task(TaskKind::Manipulation);
        let mut q = query(&img, "pick catnip toy", 1, &opts);
        q.gripper = Some(true);
        let text = build_prompt(&q).unwrap();
        assert!(text.contains("Reason through the task first and at the end summarize the correct action choice(s) with the format, Arrow: ["));
        assert!(text.contains("Task: What are the best arrows for the robot follow to pick catnip toy?"));
        assert!(text.contains("close its gripper"));
    }

    #[test]
    fn duplicate_segments_rejected() {
        let img = annotated(3);
        let opts = PromptOptions { ordering: [Segment::Task, Segment::Task, Segment::Image], ..Default::default() };
        assert_eq!(build_prompt(&query(&img, "x", 1, &opts)), Err(PromptError::InvalidOrdering));
    }
}
