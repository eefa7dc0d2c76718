use serde::{Deserialize, Serialize};

use crate::corpus::MainLabel;
use crate::metrics::SupportPolicy;
use crate::{Error, Result};

/// Sequence-labeling architectures.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// Linear emissions over the input followed by a CRF.
    Crf,
    /// BiLSTM with an independent softmax per sentence.
    Bilstm,
    BilstmCrf,
    /// BiLSTM-CRF over shift-composed inputs.
    LspBilstmCrf,
    /// Joint shift and role components sharing one CRF.
    Mtl,
}

impl Variant {
    pub fn name(self) -> &'static str {
        match self {
            Variant::Crf => "crf",
            Variant::Bilstm => "bilstm",
            Variant::BilstmCrf => "bilstm_crf",
            Variant::LspBilstmCrf => "lsp_bilstm_crf",
            Variant::Mtl => "mtl",
        }
    }
}

impl std::str::FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s.replace('-', "_").as_str() {
            "crf" => Variant::Crf,
            "bilstm" => Variant::Bilstm,
            "bilstm_crf" => Variant::BilstmCrf,
            "lsp_bilstm_crf" | "lsp" => Variant::LspBilstmCrf,
            "mtl" => Variant::Mtl,
            other => return Err(Error::InvalidConfig(format!("unknown variant {other:?}"))),
        })
    }
}

/// Treatment of the missing shift vectors before the first and after the
/// last sentence of a composed input.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundaryMode {
    #[default]
    Zero,
    /// Trainable vectors added to the zero blocks.
    Learned,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SequenceModelConfig {
    pub variant: Variant,
    /// Width of the role-component input (E2 for the joint model).
    pub input_dim: usize,
    /// Width of the shift-component input (E1); joint model only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shift_input_dim: Option<usize>,
    /// Per-direction hidden size; defaults to half the input width.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hidden: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shift_hidden: Option<usize>,
    #[serde(default = "default_num_labels")]
    pub num_labels: usize,
    pub learning_rate: f32,
    /// Documents per batch.
    pub batch_size: usize,
    pub epochs: usize,
    /// Weight of the shift loss; joint model only.
    #[serde(default)]
    pub lambda: f32,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grad_clip: Option<f32>,
    /// Stop after this many epochs without validation improvement.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub patience: Option<usize>,
    #[serde(default)]
    pub boundary: BoundaryMode,
    /// Width of one shift vector inside composed inputs; needed for learned boundaries.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shift_embedding_dim: Option<usize>,
    #[serde(default)]
    pub zero_support: SupportPolicy,
}

fn default_num_labels() -> usize {
    MainLabel::COUNT
}

impl SequenceModelConfig {
    fn base(variant: Variant, input_dim: usize, learning_rate: f32) -> Self {
        Self {
            variant,
            input_dim,
            shift_input_dim: None,
            hidden: None,
            shift_hidden: None,
            num_labels: MainLabel::COUNT,
            learning_rate,
            batch_size: 40,
            epochs: 300,
            lambda: 0.0,
            seed: 0,
            grad_clip: None,
            patience: None,
            boundary: BoundaryMode::Zero,
            shift_embedding_dim: None,
            zero_support: SupportPolicy::PresentOnly,
        }
    }

    /// Handcrafted-feature CRF: lr 0.01, 40 documents per batch, 300 epochs.
    pub fn crf(input_dim: usize) -> Self {
        Self::base(Variant::Crf, input_dim, 0.01)
    }

    pub fn bilstm(input_dim: usize) -> Self {
        Self::base(Variant::Bilstm, input_dim, 0.01)
    }

    pub fn bilstm_crf(input_dim: usize) -> Self {
        Self::base(Variant::BilstmCrf, input_dim, 0.01)
    }

    /// Composed-input labeler: lr 0.005.
    pub fn lsp_bilstm_crf(input_dim: usize) -> Self {
        Self::base(Variant::LspBilstmCrf, input_dim, 0.005)
    }

    /// Joint model with the shift component over `e1` and roles over `e2`.
    /// The role component keeps the half-width default (384 for 768 inputs).
    pub fn mtl(e1: usize, e2: usize, lambda: f32) -> Self {
        Self {
            shift_input_dim: Some(e1),
            lambda,
            ..Self::base(Variant::Mtl, e2, 0.005)
        }
    }

    pub fn hidden_dim(&self) -> usize {
        self.hidden.unwrap_or((self.input_dim / 2).max(1))
    }

    pub fn shift_hidden_dim(&self) -> usize {
        self.shift_hidden
            .unwrap_or((self.shift_input_dim.unwrap_or(self.input_dim) / 2).max(1))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.input_dim == 0 {
            return bad("input_dim must be positive".into());
        }
        if self.num_labels == 0 {
            return bad("num_labels must be positive".into());
        }
        if self.batch_size == 0 {
            return bad("batch_size must be positive".into());
        }
        if !(self.learning_rate > 0.0) {
            return bad(format!("learning rate {} must be positive", self.learning_rate));
        }
        if !(0.0..=1.0).contains(&self.lambda) {
            return bad(format!("lambda {} outside [0, 1]", self.lambda));
        }
        if self.variant != Variant::Mtl && self.lambda != 0.0 {
            return bad("lambda is only used by the mtl variant".into());
        }
        if self.variant == Variant::Mtl && self.shift_input_dim.is_none() {
            return bad("mtl needs shift_input_dim".into());
        }
        if self.variant != Variant::Mtl && self.shift_input_dim.is_some() {
            return bad("shift_input_dim is only used by the mtl variant".into());
        }
        if self.boundary == BoundaryMode::Learned {
            if !matches!(self.variant, Variant::LspBilstmCrf | Variant::Mtl) {
                return bad("learned boundaries need composed inputs".into());
            }
            let composed = if self.variant == Variant::Mtl {
                self.shift_input_dim.unwrap_or(0)
            } else {
                self.input_dim
            };
            match self.shift_embedding_dim {
                Some(s) if 2 * s < composed => {}
                _ => return bad("learned boundaries need a shift_embedding_dim below half the composed width".into()),
            }
        }
        Ok(())
    }

    /// Stable short hash of the serialized config.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        crate::util::sha256_hex(json.as_bytes())[..16].to_string()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_follow_reference_settings() {
        let c = SequenceModelConfig::bilstm_crf(768);
        assert_eq!((c.learning_rate, c.batch_size, c.epochs), (0.01, 40, 300));
        assert_eq!(c.hidden_dim(), 384);
        let l = SequenceModelConfig::lsp_bilstm_crf(2304);
        assert_eq!((l.learning_rate, l.hidden_dim()), (0.005, 1152));
        let m = SequenceModelConfig::mtl(2304, 768, 0.6);
        assert_eq!((m.shift_hidden_dim(), m.hidden_dim()), (1152, 384));
        assert_eq!(SequenceModelConfig::bilstm_crf(172).hidden_dim(), 86);
        assert_eq!(SequenceModelConfig::bilstm(200).hidden_dim(), 100);
        m.validate().unwrap();
    }

    #[test]
    fn validation() {
        assert!(SequenceModelConfig::mtl(8, 8, 1.5).validate().is_err());
        assert!(SequenceModelConfig::mtl(8, 8, -0.1).validate().is_err());
        let mut c = SequenceModelConfig::bilstm_crf(8);
        c.lambda = 0.5;
        assert!(c.validate().is_err());
        let mut c = SequenceModelConfig::lsp_bilstm_crf(12);
        c.boundary = BoundaryMode::Learned;
        assert!(c.validate().is_err());
        c.shift_embedding_dim = Some(4);
        c.validate().unwrap();
    }

    #[test]
    fn toml_like_roundtrip_rejects_unknown_keys() {
        let c = SequenceModelConfig::mtl(6, 4, 0.6);
        let json = serde_json::to_string(&c).unwrap();
        assert_eq!(serde_json::from_str::<SequenceModelConfig>(&json).unwrap(), c);
        let bad = json.replacen('{', "{\"bogus\":1,", 1);
        assert!(serde_json::from_str::<SequenceModelConfig>(&bad).is_err());
        assert_eq!("bilstm-crf".parse::<Variant>().unwrap(), Variant::BilstmCrf);
    }
}
