use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyKind {
    SequenceBandit,
    Autoregressive,
}

/// Shape of a parameter table.
///
/// For the bandit form `seq_len == 1`, `window == 0` and `width` is the number
/// of outputs per prompt.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Dims {
    pub kind: PolicyKind,
    pub prompts: usize,
    pub seq_len: usize,
    width: usize,
    pub window: usize,
}

impl Dims {
    pub fn bandit(prompts: usize, outputs: usize) -> Self {
        Self {
            kind: PolicyKind::SequenceBandit,
            prompts,
            seq_len: 1,
            width: outputs,
            window: 0,
        }
    }

    /// `window` is 0 for `(prompt, position)` contexts, 1 to also condition on
    /// the previous token.
    pub fn autoregressive(prompts: usize, seq_len: usize, vocab: usize, window: usize) -> Self {
        Self {
            kind: PolicyKind::Autoregressive,
            prompts,
            seq_len,
            width: vocab,
            window,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.prompts == 0 || self.seq_len == 0 || self.width == 0 {
            return Err(Error::input(format!("degenerate dimensions {self:?}")));
        }
        if self.window > 1 {
            return Err(Error::input(format!("context window must be 0 or 1, got {}", self.window)));
        }
        if self.kind == PolicyKind::SequenceBandit && (self.seq_len != 1 || self.window != 0) {
            return Err(Error::input("sequence-bandit tables have seq_len 1 and window 0"));
        }
        Ok(())
    }

    /// Number of choices per context: outputs (bandit) or vocabulary size.
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn rows_per_prompt(&self) -> usize {
        if self.window == 0 {
            self.seq_len
        } else {
            1 + (self.seq_len - 1) * self.width
        }
    }

    pub fn rows(&self) -> usize {
        self.prompts * self.rows_per_prompt()
    }

    /// Total number of logits.
    pub fn len(&self) -> usize {
        self.rows() * self.width
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Row index within a prompt's block.
    pub fn local_row(&self, pos: usize, prev: Option<usize>) -> usize {
        match (self.window, pos, prev) {
            (0, _, _) | (_, 0, _) => pos,
            (_, _, Some(p)) => 1 + (pos - 1) * self.width + p,
            (_, _, None) => panic!("window-1 context at position {pos} needs a previous token"),
        }
    }

    pub fn global_row(&self, prompt: usize, local_row: usize) -> usize {
        prompt * self.rows_per_prompt() + local_row
    }
}

/// Policy parameters: one logit row per context.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamTable {
    dims: Dims,
    logits: Vec<f64>,
}

impl ParamTable {
    /// All-zero logits, i.e. the uniform policy.
    pub fn zeros(dims: Dims) -> Self {
        Self {
            dims,
            logits: vec![0.0; dims.len()],
        }
    }

    pub fn from_logits(dims: Dims, logits: Vec<f64>) -> Result<Self> {
        dims.validate()?;
        if logits.len() != dims.len() {
            return Err(Error::input(format!(
                "expected {} logits for {:?}, got {}",
                dims.len(),
                dims,
                logits.len()
            )));
        }
        if let Some(i) = logits.iter().position(|v| !v.is_finite()) {
            return Err(Error::input(format!("logit {i} is not finite")));
        }
        Ok(Self { dims, logits })
    }

    pub fn dims(&self) -> &Dims {
        &self.dims
    }

    pub fn kind(&self) -> PolicyKind {
        self.dims.kind
    }

    pub fn logits(&self) -> &[f64] {
        &self.logits
    }

    pub fn logits_mut(&mut self) -> &mut [f64] {
        &mut self.logits
    }

    pub fn row(&self, row: usize) -> &[f64] {
        let w = self.dims.width;
        &self.logits[row * w..(row + 1) * w]
    }

    /// `theta += alpha * g`.
    pub fn add_scaled(&mut self, alpha: f64, g: &GradVector) -> Result<()> {
        if g.dims != self.dims {
            return Err(Error::input("gradient shape does not match parameters"));
        }
        for (t, v) in self.logits.iter_mut().zip(&g.values) {
            *t += alpha * v;
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&ParamDoc::from(self))?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let doc: ParamDoc = serde_json::from_str(s)?;
        doc.try_into()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()? + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let s = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&s)
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DimsDoc {
    prompts: usize,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    outputs: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    seq_len: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    vocab: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    window: Option<usize>,
}

/// On-disk form: `{kind, dims, logits}` with row-major logits.
#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ParamDoc {
    kind: PolicyKind,
    dims: DimsDoc,
    logits: Vec<f64>,
}

impl From<&ParamTable> for ParamDoc {
    fn from(t: &ParamTable) -> Self {
        let d = t.dims;
        let dims = match d.kind {
            PolicyKind::SequenceBandit => DimsDoc {
                prompts: d.prompts,
                outputs: Some(d.width),
                seq_len: None,
                vocab: None,
                window: None,
            },
            PolicyKind::Autoregressive => DimsDoc {
                prompts: d.prompts,
                outputs: None,
                seq_len: Some(d.seq_len),
                vocab: Some(d.width),
                window: Some(d.window),
            },
        };
        ParamDoc {
            kind: d.kind,
            dims,
            logits: t.logits.clone(),
        }
    }
}

impl TryFrom<ParamDoc> for ParamTable {
    type Error = Error;

    fn try_from(doc: ParamDoc) -> Result<Self> {
        let missing = |f: &str| Error::input(format!("parameter document is missing dims.{f}"));
        let dims = match doc.kind {
            PolicyKind::SequenceBandit => {
                Dims::bandit(doc.dims.prompts, doc.dims.outputs.ok_or_else(|| missing("outputs"))?)
            }
            PolicyKind::Autoregressive => Dims::autoregressive(
                doc.dims.prompts,
                doc.dims.seq_len.ok_or_else(|| missing("seq_len"))?,
                doc.dims.vocab.ok_or_else(|| missing("vocab"))?,
                doc.dims.window.unwrap_or(0),
            ),
        };
        ParamTable::from_logits(dims, doc.logits)
    }
}

/// Dense parameter-shaped buffer of partial derivatives.
#[derive(Debug, Clone, PartialEq)]
pub struct GradVector {
    dims: Dims,
    values: Vec<f64>,
}

impl GradVector {
    pub fn zeros(dims: Dims) -> Self {
        Self {
            dims,
            values: vec![0.0; dims.len()],
        }
    }

    pub fn from_values(dims: Dims, values: Vec<f64>) -> Result<Self> {
        if values.len() != dims.len() {
            return Err(Error::input("gradient length does not match dims"));
        }
        Ok(Self { dims, values })
    }

    pub fn dims(&self) -> &Dims {
        &self.dims
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn row(&self, row: usize) -> &[f64] {
        let w = self.dims.width;
        &self.values[row * w..(row + 1) * w]
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn scale(&mut self, s: f64) {
        self.values.iter_mut().for_each(|v| *v *= s);
    }

    /// `self += alpha * other`.
    pub fn axpy(&mut self, alpha: f64, other: &GradVector) {
        for (a, b) in self.values.iter_mut().zip(&other.values) {
            *a += alpha * b;
        }
    }
}
