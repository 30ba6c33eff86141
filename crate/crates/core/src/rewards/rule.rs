use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::RewardSample;

/// Per-deployment facts the predicates need: vocabulary size and the target
/// output of every prompt.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskContext {
    pub vocab: usize,
    pub targets: Vec<Vec<usize>>,
}

/// Marker tokens occupy the top four vocabulary ids; everything below them is
/// a "digit" token.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Markers {
    pub open: usize,
    pub close: usize,
    pub answer_open: usize,
    pub answer_close: usize,
}

impl Markers {
    pub fn for_vocab(vocab: usize) -> Option<Self> {
        (vocab >= 5).then(|| Self {
            open: vocab - 4,
            close: vocab - 3,
            answer_open: vocab - 2,
            answer_close: vocab - 1,
        })
    }

    pub fn is_digit(&self, tok: usize) -> bool {
        tok < self.open
    }

    fn all(&self) -> [usize; 4] {
        [self.open, self.close, self.answer_open, self.answer_close]
    }
}

/// Synthetic rule predicates over token sequences.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Predicate {
    /// Output equals the prompt's target sequence.
    ExactMatch,
    /// Final token is a digit token.
    IntegerShape,
    /// Sequence opens with `open` and has `close` right before the final token.
    StrictFormat,
    /// Some `open` precedes some `close`.
    SoftFormat,
    /// Graded: a quarter of the magnitude per marker that appears exactly
    /// once, minus 0.001 per token trailing the answer-close marker.
    StructureCount,
}

/// Per-trailing-token deduction of [`Predicate::StructureCount`].
pub const TRAILING_PENALTY: f64 = 0.001;

impl Predicate {
    fn needs_markers(&self) -> bool {
        !matches!(self, Predicate::ExactMatch)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Component {
    pub name: String,
    pub magnitude: f64,
    pub predicate: Predicate,
}

impl Component {
    pub fn new(name: &str, magnitude: f64, predicate: Predicate) -> Self {
        Self {
            name: name.to_string(),
            magnitude,
            predicate,
        }
    }

    /// Value in `[0, magnitude]`.
    pub fn value(&self, ctx: &TaskContext, prompt: usize, output: &[usize]) -> f64 {
        let hit = |b: bool| if b { self.magnitude } else { 0.0 };
        match self.predicate {
            Predicate::ExactMatch => hit(ctx.targets.get(prompt).is_some_and(|t| t == output)),
            _ => {
                let Some(m) = Markers::for_vocab(ctx.vocab) else {
                    return 0.0;
                };
                match self.predicate {
                    Predicate::IntegerShape => hit(output.last().is_some_and(|&t| m.is_digit(t))),
                    Predicate::StrictFormat => hit(output.len() >= 2
                        && output[0] == m.open
                        && output[output.len() - 2] == m.close),
                    Predicate::SoftFormat => {
                        let first_open = output.iter().position(|&t| t == m.open);
                        let last_close = output.iter().rposition(|&t| t == m.close);
                        hit(matches!((first_open, last_close), (Some(a), Some(b)) if a < b))
                    }
                    Predicate::StructureCount => structure_count(&m, output, self.magnitude),
                    Predicate::ExactMatch => unreachable!(),
                }
            }
        }
    }
}

fn structure_count(m: &Markers, output: &[usize], magnitude: f64) -> f64 {
    let per_marker = magnitude / 4.0;
    let mut value = 0.0;
    for marker in m.all() {
        if output.iter().filter(|&&t| t == marker).count() == 1 {
            value += per_marker;
        }
    }
    if output.iter().filter(|&&t| t == m.answer_close).count() == 1 {
        let at = output.iter().position(|&t| t == m.answer_close).unwrap_or(0);
        let trailing = output.len() - at - 1;
        value -= TRAILING_PENALTY * trailing as f64;
    }
    value.clamp(0.0, magnitude)
}

/// A weighted sum of rule components: `R(x, o) = sum_i value_i(x, o)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RewardRule {
    pub components: Vec<Component>,
}

impl RewardRule {
    pub fn new(components: Vec<Component>) -> Result<Self> {
        let rule = Self { components };
        rule.validate("reward")?;
        Ok(rule)
    }

    /// Binary exact-match reward of magnitude 1.
    pub fn sparse() -> Self {
        Self {
            components: vec![Component::new("exact_match", 1.0, Predicate::ExactMatch)],
        }
    }

    /// Five components with magnitudes 2.0, 0.5, 1.0, 1.0, 0.5.
    pub fn multi_component() -> Self {
        Self {
            components: vec![
                Component::new("exact_match", 2.0, Predicate::ExactMatch),
                Component::new("integer_shape", 0.5, Predicate::IntegerShape),
                Component::new("strict_format", 1.0, Predicate::StrictFormat),
                Component::new("soft_format", 1.0, Predicate::SoftFormat),
                Component::new("structure_count", 0.5, Predicate::StructureCount),
            ],
        }
    }

    pub fn validate(&self, path: &str) -> Result<()> {
        if self.components.is_empty() {
            return Err(Error::config(format!("{path}.components"), "at least one component required"));
        }
        let mut seen = HashSet::new();
        for (i, c) in self.components.iter().enumerate() {
            if !(c.magnitude.is_finite() && c.magnitude >= 0.0) {
                return Err(Error::config(
                    format!("{path}.components[{i}].magnitude"),
                    format!("magnitude must be finite and nonnegative, got {}", c.magnitude),
                ));
            }
            if !seen.insert(c.name.as_str()) {
                return Err(Error::config(
                    format!("{path}.components[{i}].name"),
                    format!("duplicate component name `{}`", c.name),
                ));
            }
        }
        Ok(())
    }

    pub fn validate_for(&self, path: &str, vocab: usize) -> Result<()> {
        self.validate(path)?;
        if vocab < 5 && self.components.iter().any(|c| c.predicate.needs_markers()) {
            return Err(Error::config(
                format!("{path}.components"),
                "format predicates need a vocabulary of at least 5 tokens",
            ));
        }
        Ok(())
    }

    pub fn magnitudes(&self) -> Vec<f64> {
        self.components.iter().map(|c| c.magnitude).collect()
    }

    /// Raw component values and their total; noise fields are zero.
    pub fn evaluate(&self, ctx: &TaskContext, prompt: usize, output: &[usize]) -> RewardSample {
        RewardSample::from_components(
            self.components
                .iter()
                .map(|c| c.value(ctx, prompt, output))
                .collect(),
        )
    }

    /// Raw total only.
    pub fn total(&self, ctx: &TaskContext, prompt: usize, output: &[usize]) -> f64 {
        self.components.iter().map(|c| c.value(ctx, prompt, output)).sum()
    }
}
