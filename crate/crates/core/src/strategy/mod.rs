//! The four prompting pipelines and their execution over a chat backend.
//!
//! | strategy | backend calls | shape                                              |
//! |----------|---------------|----------------------------------------------------|
//! | vanilla  | 1             | instruction + review                               |
//! | rp       | 1             | role preamble prefixed to the vanilla instruction  |
//! | cot      | 3             | aspect → implicit opinion → final label            |
//! | rp_cot   | 4             | role assignment turn, then the three cot steps     |
//!
//! Each call sends the whole conversation so far plus the next user turn, so
//! every later step sees every earlier answer.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::{BackendError, ChatBackend, ChatRequest, GenerationParams, Role};
use crate::error::Error;
use crate::parser::parse_label;
use crate::types::{DomainTag, LabelSpace, Outcome, Prediction, Sample};

pub mod templates;

pub use crate::backend::Turn;
pub use templates::TemplateSet;

/// Default cap on review length, in characters, before quoting.
pub const DEFAULT_MAX_TEXT_CHARS: usize = 6000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StrategyKind {
    Vanilla,
    Rp,
    Cot,
    RpCot,
}

impl StrategyKind {
    pub const ALL: [StrategyKind; 4] = [
        StrategyKind::Vanilla,
        StrategyKind::Rp,
        StrategyKind::Cot,
        StrategyKind::RpCot,
    ];

    /// Number of backend calls (and assistant turns) per sample.
    pub fn step_count(self) -> usize {
        match self {
            StrategyKind::Vanilla | StrategyKind::Rp => 1,
            StrategyKind::Cot => 3,
            StrategyKind::RpCot => 4,
        }
    }

    pub fn uses_role(self) -> bool {
        matches!(self, StrategyKind::Rp | StrategyKind::RpCot)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            StrategyKind::Vanilla => "vanilla",
            StrategyKind::Rp => "rp",
            StrategyKind::Cot => "cot",
            StrategyKind::RpCot => "rp_cot",
        }
    }

    /// Row label used in accuracy tables.
    pub fn display_name(self) -> &'static str {
        match self {
            StrategyKind::Vanilla => "Vanilla prompting",
            StrategyKind::Rp => "RP prompting",
            StrategyKind::Cot => "CoT prompting",
            StrategyKind::RpCot => "RP-CoT prompting",
        }
    }
}

impl fmt::Display for StrategyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for StrategyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "vanilla" => Ok(StrategyKind::Vanilla),
            "rp" => Ok(StrategyKind::Rp),
            "cot" => Ok(StrategyKind::Cot),
            "rp_cot" | "rp-cot" => Ok(StrategyKind::RpCot),
            other => Err(Error::Config(format!(
                "unknown strategy {other:?} (expected vanilla, rp, cot or rp_cot)"
            ))),
        }
    }
}

/// Expert persona placed in front of the instructions.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RolePreamble {
    pub template: String,
    pub rendered: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepInstruction {
    pub index: usize,
    pub template: String,
}

/// Immutable recipe for one strategy over one domain and label space.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptPlan {
    kind: StrategyKind,
    domain: DomainTag,
    label_space: LabelSpace,
    steps: Vec<StepInstruction>,
    preamble: Option<RolePreamble>,
    max_text_chars: usize,
}

/// Plan built from the shipped templates.
pub fn build_plan(kind: StrategyKind, domain: DomainTag, space: LabelSpace) -> PromptPlan {
    build_plan_with(kind, domain, space, &TemplateSet::default())
        .expect("default templates are well formed")
}

pub fn build_plan_with(
    kind: StrategyKind,
    domain: DomainTag,
    space: LabelSpace,
    templates: &TemplateSet,
) -> Result<PromptPlan, Error> {
    let template = |key: String| {
        templates
            .get(&key)
            .map(str::to_string)
            .ok_or_else(|| Error::Template(format!("missing template {key:?}")))
    };
    let preamble = if kind.uses_role() {
        let t = template(format!("{kind}.preamble"))?;
        let rendered = templates::fill(&t, |slot| match slot {
            "domain" => Some(domain.name().to_string()),
            "labels" => Some(space.label_list()),
            _ => None,
        })?;
        Some(RolePreamble {
            template: t,
            rendered,
        })
    } else {
        None
    };
    let steps = (0..kind.step_count())
        .map(|index| {
            Ok(StepInstruction {
                index,
                template: template(format!("{kind}.{index}"))?,
            })
        })
        .collect::<Result<Vec<_>, Error>>()?;
    for step in &steps {
        templates::check_slots(&step.template).map_err(Error::Template)?;
        if preamble.is_none() && step.template.contains("{preamble}") {
            return Err(Error::Template(format!(
                "{kind}.{} uses {{preamble}} but {kind} has no role",
                step.index
            )));
        }
    }
    Ok(PromptPlan {
        kind,
        domain,
        label_space: space,
        steps,
        preamble,
        max_text_chars: DEFAULT_MAX_TEXT_CHARS,
    })
}

/// Truncates to `max_chars` characters, doubles embedded quotes and wraps the
/// result in double quotes. The flag reports whether truncation happened.
pub fn quote_review(text: &str, max_chars: usize) -> (String, bool) {
    let truncated = text.chars().count() > max_chars;
    let body: String = if truncated {
        text.chars().take(max_chars).collect()
    } else {
        text.to_string()
    };
    (format!("\"{}\"", body.replace('"', "\"\"")), truncated)
}

impl PromptPlan {
    pub fn kind(&self) -> StrategyKind {
        self.kind
    }

    pub fn domain(&self) -> &DomainTag {
        &self.domain
    }

    pub fn label_space(&self) -> LabelSpace {
        self.label_space
    }

    pub fn steps(&self) -> &[StepInstruction] {
        &self.steps
    }

    pub fn preamble(&self) -> Option<&RolePreamble> {
        self.preamble.as_ref()
    }

    pub fn max_text_chars(&self) -> usize {
        self.max_text_chars
    }

    pub fn with_max_text_chars(mut self, max_chars: usize) -> Self {
        self.max_text_chars = max_chars.max(1);
        self
    }

    /// User message for step `step_index` applied to `sample`.
    pub fn render_step(&self, step_index: usize, sample: &Sample) -> Result<String, Error> {
        let step = self.steps.get(step_index).ok_or(Error::StepOutOfRange {
            index: step_index,
            steps: self.steps.len(),
        })?;
        let (quoted, _) = quote_review(sample.text(), self.max_text_chars);
        templates::fill(&step.template, |slot| match slot {
            "text" => Some(quoted.clone()),
            "labels" => Some(self.label_space.label_list()),
            "domain" => Some(self.domain.name().to_string()),
            "preamble" => self.preamble.as_ref().map(|p| p.rendered.clone()),
            _ => None,
        })
    }
}

/// Append-only record of one pipeline execution.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Transcript {
    pub id: String,
    pub sample_id: String,
    pub strategy: StrategyKind,
    pub model: String,
    /// Review was cut to the plan's character budget before prompting.
    pub truncated: bool,
    turns: Vec<Turn>,
}

impl Transcript {
    pub fn new(sample_id: &str, strategy: StrategyKind, model: &str, truncated: bool) -> Self {
        Transcript {
            id: format!("{sample_id}/{strategy}"),
            sample_id: sample_id.to_string(),
            strategy,
            model: model.to_string(),
            truncated,
            turns: Vec::new(),
        }
    }

    pub fn turns(&self) -> &[Turn] {
        &self.turns
    }

    pub fn push(&mut self, turn: Turn) {
        self.turns.push(turn);
    }

    pub fn assistant_turns(&self) -> impl Iterator<Item = &Turn> {
        self.turns.iter().filter(|t| t.role == Role::Assistant)
    }

    pub fn user_turns(&self) -> impl Iterator<Item = &Turn> {
        self.turns.iter().filter(|t| t.role == Role::User)
    }

    /// Checks the structural laws of a completed transcript: non-empty
    /// turns, strict user/assistant alternation after any leading system
    /// turns, and one assistant turn per strategy step.
    pub fn validate(&self) -> Result<(), String> {
        if let Some(i) = self.turns.iter().position(|t| t.content.is_empty()) {
            return Err(format!("turn {i} is empty"));
        }
        let body: Vec<_> = self
            .turns
            .iter()
            .skip_while(|t| t.role == Role::System)
            .collect();
        for (i, t) in body.iter().enumerate() {
            let want = if i % 2 == 0 {
                Role::User
            } else {
                Role::Assistant
            };
            if t.role != want {
                return Err(format!(
                    "turn {i} after system prefix is {} not {want}",
                    t.role
                ));
            }
        }
        let answers = self.assistant_turns().count();
        if answers != self.strategy.step_count() || body.len() % 2 != 0 {
            return Err(format!(
                "{} assistant turns for {} (expected {})",
                answers,
                self.strategy,
                self.strategy.step_count()
            ));
        }
        Ok(())
    }
}

/// Backend failure mid-pipeline. `partial` holds every turn up to and
/// including the user turn that failed.
#[derive(Debug, Error)]
#[error("{} step {step} of {}: {source}", partial.strategy, partial.sample_id)]
pub struct ExecutionError {
    pub step: usize,
    pub partial: Transcript,
    #[source]
    pub source: BackendError,
}

/// Runs every step of `plan` on `sample`, threading the full conversation
/// into each call, and parses the last answer into a prediction.
pub fn execute<B: ChatBackend + ?Sized>(
    plan: &PromptPlan,
    sample: &Sample,
    backend: &B,
    params: &GenerationParams,
) -> Result<(Prediction, Transcript), ExecutionError> {
    let truncated = sample.text().chars().count() > plan.max_text_chars;
    let mut transcript = Transcript::new(sample.id(), plan.kind, &params.model, truncated);
    let mut messages: Vec<Turn> = Vec::with_capacity(plan.steps.len() * 2);
    for step in 0..plan.steps.len() {
        let fail = |transcript: &Transcript, source| ExecutionError {
            step,
            partial: transcript.clone(),
            source,
        };
        let prompt = plan
            .render_step(step, sample)
            .map_err(|e| fail(&transcript, BackendError::InvalidRequest(e.to_string())))?;
        let user = Turn::user(prompt);
        transcript.push(user.clone());
        messages.push(user);
        let request =
            ChatRequest::new(params.clone(), messages.clone()).map_err(|e| fail(&transcript, e))?;
        let answer = backend
            .complete(&request)
            .map_err(|e| fail(&transcript, e))?;
        if answer.is_empty() {
            return Err(fail(
                &transcript,
                BackendError::Malformed("empty assistant reply".into()),
            ));
        }
        let reply = Turn::assistant(answer);
        transcript.push(reply.clone());
        messages.push(reply);
    }
    let final_text = messages
        .last()
        .map(|t| t.content.clone())
        .expect("every plan has at least one step");
    let outcome: Outcome = parse_label(&final_text, plan.label_space).result;
    let prediction = Prediction {
        sample_id: sample.id().to_string(),
        outcome,
        raw_final_text: final_text,
        transcript_id: transcript.id.clone(),
    };
    Ok((prediction, transcript))
}
