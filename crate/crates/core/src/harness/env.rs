use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::optimizer::Task;
use crate::policy::{Dims, ParamTable, DEFAULT_ENUMERATION_CAP};
use crate::rewards::{Markers, Predicate, RewardRule, RewardSample, TaskContext};

/// Largest output set a signed bandit may have.
pub const MAX_BANDIT_OUTPUTS: usize = 64;

const SIGNED_LEVELS: [f64; 5] = [-1.0, -0.5, 0.0, 0.5, 1.0];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnvKind {
    /// One exact-match component of magnitude 1 on a random target sequence.
    SparseSeq,
    /// Five components: exact match, integer shape, strict and soft format,
    /// structure count.
    MultiRewardSeq,
    /// A table of ground-truth rewards in `[-1, 1]` per (prompt, output).
    SignedBandit,
}

/// Declarative environment description. Fields a kind does not use stay 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvironmentSpec {
    pub kind: EnvKind,
    pub prompts: usize,
    #[serde(default)]
    pub vocab: usize,
    #[serde(default)]
    pub seq_len: usize,
    /// Output-set size (signed bandit only).
    #[serde(default)]
    pub outputs: usize,
    /// Autoregressive context window, 0 or 1.
    #[serde(default)]
    pub window: usize,
    /// Seed for targets / reward tables; fixed across training seeds.
    #[serde(default)]
    pub seed: u64,
}

impl EnvironmentSpec {
    pub fn sparse_seq() -> Self {
        Self {
            kind: EnvKind::SparseSeq,
            prompts: 8,
            vocab: 8,
            seq_len: 3,
            outputs: 0,
            window: 0,
            seed: 7,
        }
    }

    pub fn multi_reward_seq() -> Self {
        Self {
            kind: EnvKind::MultiRewardSeq,
            seq_len: 4,
            ..Self::sparse_seq()
        }
    }

    pub fn signed_bandit() -> Self {
        Self {
            kind: EnvKind::SignedBandit,
            prompts: 4,
            vocab: 0,
            seq_len: 0,
            outputs: 16,
            window: 0,
            seed: 7,
        }
    }

    pub fn validate(&self, path: &str) -> Result<()> {
        let bad = |field: &str, msg: String| Err(Error::config(format!("{path}.{field}"), msg));
        if self.prompts == 0 {
            return bad("prompts", "need at least one prompt".into());
        }
        match self.kind {
            EnvKind::SignedBandit => {
                if !(2..=MAX_BANDIT_OUTPUTS).contains(&self.outputs) {
                    return bad("outputs", format!("must lie in 2..={MAX_BANDIT_OUTPUTS}, got {}", self.outputs));
                }
                if self.vocab != 0 || self.seq_len != 0 || self.window != 0 {
                    return bad("kind", "signed_bandit takes `outputs`, not vocab/seq_len/window".into());
                }
            }
            EnvKind::SparseSeq | EnvKind::MultiRewardSeq => {
                if self.vocab < 2 {
                    return bad("vocab", format!("need at least 2 tokens, got {}", self.vocab));
                }
                if self.seq_len == 0 {
                    return bad("seq_len", "must be at least 1".into());
                }
                if self.window > 1 {
                    return bad("window", format!("must be 0 or 1, got {}", self.window));
                }
                if self.outputs != 0 {
                    return bad("outputs", "only signed_bandit takes `outputs`".into());
                }
                if self.kind == EnvKind::MultiRewardSeq {
                    if self.vocab < 5 {
                        return bad("vocab", "multi_reward_seq needs 4 marker tokens plus a digit".into());
                    }
                    if self.seq_len < 3 {
                        return bad("seq_len", "multi_reward_seq needs seq_len >= 3".into());
                    }
                }
            }
        }
        Ok(())
    }

    pub fn dims(&self) -> Dims {
        match self.kind {
            EnvKind::SignedBandit => Dims::bandit(self.prompts, self.outputs),
            _ => Dims::autoregressive(self.prompts, self.seq_len, self.vocab, self.window),
        }
    }

    pub fn default_rule(&self) -> Option<RewardRule> {
        match self.kind {
            EnvKind::SparseSeq => Some(RewardRule::sparse()),
            EnvKind::MultiRewardSeq => Some(RewardRule::multi_component()),
            EnvKind::SignedBandit => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum RewardSource {
    Rule { rule: RewardRule, ctx: TaskContext },
    /// `values[x][y]` in `[-1, 1]`.
    SignedTable { values: Vec<Vec<f64>> },
}

/// A built environment: policy shape plus the reward it is scored against.
#[derive(Debug, Clone, PartialEq)]
pub struct Environment {
    spec: EnvironmentSpec,
    source: RewardSource,
    magnitudes: Vec<f64>,
    /// Exact-match-only rules score `magnitude * pi(target)` directly.
    exact_match_only: Option<f64>,
}

impl Environment {
    /// Builds with the kind's default reward rule.
    pub fn build(spec: &EnvironmentSpec) -> Result<Self> {
        Self::with_rule(spec, None)
    }

    pub fn with_rule(spec: &EnvironmentSpec, rule: Option<RewardRule>) -> Result<Self> {
        spec.validate("environment")?;
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        let source = match spec.kind {
            EnvKind::SignedBandit => {
                if rule.is_some() {
                    return Err(Error::config("reward", "signed_bandit scores with its own reward table"));
                }
                let values = (0..spec.prompts)
                    .map(|_| {
                        let mut row: Vec<f64> = (0..spec.outputs)
                            .map(|_| SIGNED_LEVELS[rng.random_range(0..SIGNED_LEVELS.len())])
                            .collect();
                        let best = rng.random_range(0..spec.outputs);
                        row[best] = 1.0;
                        row
                    })
                    .collect();
                RewardSource::SignedTable { values }
            }
            EnvKind::SparseSeq => {
                let targets = (0..spec.prompts)
                    .map(|_| (0..spec.seq_len).map(|_| rng.random_range(0..spec.vocab)).collect())
                    .collect();
                let rule = rule.unwrap_or_else(RewardRule::sparse);
                rule.validate_for("reward", spec.vocab)?;
                RewardSource::Rule {
                    rule,
                    ctx: TaskContext {
                        vocab: spec.vocab,
                        targets,
                    },
                }
            }
            EnvKind::MultiRewardSeq => {
                // open, digits..., close, digit: satisfies every format predicate
                let m = Markers::for_vocab(spec.vocab).expect("validated vocab");
                let l = spec.seq_len;
                let targets = (0..spec.prompts)
                    .map(|_| {
                        (0..l)
                            .map(|pos| match pos {
                                0 => m.open,
                                p if p == l - 2 => m.close,
                                _ => rng.random_range(0..m.open),
                            })
                            .collect()
                    })
                    .collect();
                let rule = rule.unwrap_or_else(RewardRule::multi_component);
                rule.validate_for("reward", spec.vocab)?;
                RewardSource::Rule {
                    rule,
                    ctx: TaskContext {
                        vocab: spec.vocab,
                        targets,
                    },
                }
            }
        };
        let (magnitudes, exact_match_only) = match &source {
            RewardSource::SignedTable { .. } => (vec![1.0], None),
            RewardSource::Rule { rule, .. } => {
                let only = match rule.components.as_slice() {
                    [c] if c.predicate == Predicate::ExactMatch => Some(c.magnitude),
                    _ => None,
                };
                (rule.magnitudes(), only)
            }
        };
        Ok(Self {
            spec: spec.clone(),
            source,
            magnitudes,
            exact_match_only,
        })
    }

    pub fn spec(&self) -> &EnvironmentSpec {
        &self.spec
    }

    pub fn source(&self) -> &RewardSource {
        &self.source
    }

    pub fn dims(&self) -> Dims {
        self.spec.dims()
    }

    /// Target sequences (rule-based kinds).
    pub fn targets(&self) -> Option<&[Vec<usize>]> {
        match &self.source {
            RewardSource::Rule { ctx, .. } => Some(&ctx.targets),
            RewardSource::SignedTable { .. } => None,
        }
    }

    /// Raw reward of one output.
    pub fn reward(&self, prompt: usize, output: &[usize]) -> f64 {
        match &self.source {
            RewardSource::Rule { rule, ctx } => rule.total(ctx, prompt, output),
            RewardSource::SignedTable { values } => values[prompt][output[0]],
        }
    }

    /// Exact expected reward for one prompt, by enumeration where needed.
    pub fn prompt_expected_reward(&self, params: &ParamTable, x: usize) -> Result<f64> {
        if let (Some(mag), RewardSource::Rule { ctx, .. }) = (self.exact_match_only, &self.source) {
            return Ok(mag * params.logprob(x, &ctx.targets[x])?.exp());
        }
        params.expected_reward(x, DEFAULT_ENUMERATION_CAP, |o| self.reward(x, o))
    }
}

impl Task for Environment {
    fn prompts(&self) -> usize {
        self.spec.prompts
    }

    fn magnitudes(&self) -> &[f64] {
        &self.magnitudes
    }

    fn evaluate(&self, prompt: usize, output: &[usize]) -> RewardSample {
        match &self.source {
            RewardSource::Rule { rule, ctx } => rule.evaluate(ctx, prompt, output),
            RewardSource::SignedTable { values } => {
                RewardSample::from_components(vec![values[prompt][output[0]]])
            }
        }
    }

    fn expected_reward(&self, params: &ParamTable) -> Result<f64> {
        let p = self.spec.prompts;
        let mut total = 0.0;
        for x in 0..p {
            total += self.prompt_expected_reward(params, x)?;
        }
        Ok(total / p as f64)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sparse_fast_path_matches_enumeration() {
        let env = Environment::build(&EnvironmentSpec::sparse_seq()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let dims = env.dims();
        let logits = (0..dims.len()).map(|_| rng.random::<f64>() * 4.0 - 2.0).collect();
        let params = ParamTable::from_logits(dims, logits).unwrap();
        for x in 0..dims.prompts {
            let fast = env.prompt_expected_reward(&params, x).unwrap();
            let slow = params
                .expected_reward(x, DEFAULT_ENUMERATION_CAP, |o| env.reward(x, o))
                .unwrap();
            assert!((fast - slow).abs() < 1e-12);
        }
    }

    #[test]
    fn uniform_hit_rate_is_v_to_minus_l() {
        let env = Environment::build(&EnvironmentSpec::sparse_seq()).unwrap();
        let params = ParamTable::zeros(env.dims());
        let j = env.expected_reward(&params).unwrap();
        assert!((j - 1.0 / 512.0).abs() < 1e-15);
    }

    #[test]
    fn multi_targets_earn_full_reward() {
        let env = Environment::build(&EnvironmentSpec::multi_reward_seq()).unwrap();
        let t = env.targets().unwrap()[0].clone();
        let s = env.evaluate(0, &t);
        // exact 2.0 + int 0.5 + strict 1.0 + soft 1.0 + open and close once each
        assert!(s.raw_total >= 4.5 + 0.25 - 1e-12, "{:?}", s);
        assert_eq!(env.magnitudes(), &[2.0, 0.5, 1.0, 1.0, 0.5]);
    }

    #[test]
    fn signed_bandit_has_a_best_arm_per_prompt() {
        let env = Environment::build(&EnvironmentSpec::signed_bandit()).unwrap();
        let RewardSource::SignedTable { values } = env.source() else {
            panic!("expected a table")
        };
        for row in values {
            assert_eq!(row.len(), 16);
            assert!(row.contains(&1.0));
            assert!(row.iter().all(|v| (-1.0..=1.0).contains(v)));
        }
    }

    #[test]
    fn invalid_specs_name_the_field() {
        let mut spec = EnvironmentSpec::signed_bandit();
        spec.outputs = 100;
        assert!(matches!(Environment::build(&spec), Err(Error::Config { ref path, .. }) if path == "environment.outputs"));
        let mut spec = EnvironmentSpec::multi_reward_seq();
        spec.vocab = 4;
        assert!(matches!(spec.validate("environment"), Err(Error::Config { ref path, .. }) if path == "environment.vocab"));
    }
}
