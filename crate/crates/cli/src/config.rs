//! The TOML pipeline configuration and the encoder registry.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};

use rrseg::encoders::{
    ExternalEncoder, HandcraftedFeaturizer, HashingEncoder, SentenceEncoder, StaticVectorEncoder, TokenEncoder,
    TokenEncoderConfig,
};
use rrseg::experiments::TransferDomain;
use rrseg::labelers::SequenceModelConfig;

use crate::error::CliError;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    #[serde(default)]
    pub paths: Paths,
    /// Named encoders, usable wherever an encoder is expected.
    #[serde(default)]
    pub encoders: BTreeMap<String, EncoderSpec>,
    /// Named labeler configs, selected with `--model`.
    #[serde(default)]
    pub models: BTreeMap<String, SequenceModelConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub transfer: Option<TransferMatrix>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Paths {
    pub corpus: Option<PathBuf>,
    pub split: Option<PathBuf>,
    pub runs_dir: Option<PathBuf>,
    pub cache_dir: Option<PathBuf>,
}

/// `(train, test)` cells such as `["G", "IT"]`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransferMatrix {
    pub cells: Vec<(String, String)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub g_mapping: Option<PathBuf>,
}

impl TransferMatrix {
    pub fn parsed_cells(&self) -> Result<Vec<(TransferDomain, TransferDomain)>> {
        self.cells
            .iter()
            .map(|(a, b)| Ok((a.parse()?, b.parse()?)))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum EncoderSpec {
    Hashing {
        dim: usize,
        #[serde(default)]
        bigrams: bool,
    },
    Handcrafted,
    /// Whitespace-separated word vectors, averaged per sentence.
    Static { path: PathBuf },
    /// A saved token encoder directory, or a freshly initialised one.
    Token {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        path: Option<PathBuf>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        config: Option<TokenEncoderConfig>,
    },
    External {
        program: String,
        #[serde(default)]
        args: Vec<String>,
        id: String,
        dim: usize,
    },
}

impl EncoderSpec {
    /// Inline forms: `hashing:DIM[:bigrams]`, `handcrafted`, `static:PATH`,
    /// `token` (fresh) and `token:DIR`.
    pub fn parse(spec: &str) -> Result<Self> {
        let (kind, rest) = spec.split_once(':').unwrap_or((spec, ""));
        let bad = || CliError::Config(format!("bad encoder spec {spec:?}"));
        Ok(match kind {
            "hashing" => {
                let mut parts = rest.split(':');
                let dim = parts.next().unwrap_or("").parse().map_err(|_| bad())?;
                let bigrams = match parts.next() {
                    None => false,
                    Some("bigrams") => true,
                    Some(_) => return Err(bad().into()),
                };
                EncoderSpec::Hashing { dim, bigrams }
            }
            "handcrafted" if rest.is_empty() => EncoderSpec::Handcrafted,
            "static" if !rest.is_empty() => EncoderSpec::Static { path: rest.into() },
            "token" => EncoderSpec::Token {
                path: (!rest.is_empty()).then(|| rest.into()),
                config: None,
            },
            _ => return Err(bad().into()),
        })
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            EncoderSpec::Hashing { dim: 0, .. } | EncoderSpec::External { dim: 0, .. } => {
                Err(CliError::Config("encoder dim must be positive".into()).into())
            }
            EncoderSpec::Static { path } | EncoderSpec::Token { path: Some(path), .. } if !path.exists() => {
                Err(CliError::Config(format!("encoder path {} does not exist", path.display())).into())
            }
            _ => Ok(()),
        }
    }

    pub fn build(&self) -> Result<Box<dyn SentenceEncoder>> {
        Ok(match self {
            EncoderSpec::Hashing { dim, bigrams } => Box::new(HashingEncoder::new(*dim, *bigrams)?),
            EncoderSpec::Handcrafted => Box::new(HandcraftedFeaturizer),
            EncoderSpec::Static { path } => Box::new(StaticVectorEncoder::from_file(path)?),
            EncoderSpec::Token { path: Some(path), .. } => Box::new(TokenEncoder::load(path)?),
            EncoderSpec::Token { path: None, config } => {
                Box::new(TokenEncoder::new(config.clone().unwrap_or_default())?)
            }
            EncoderSpec::External { program, args, id, dim } => {
                Box::new(ExternalEncoder::spawn(program, args, id.clone(), *dim)?)
            }
        })
    }

    /// The token encoder this spec names, for models that fine-tune one.
    pub fn token_encoder(&self) -> Result<TokenEncoder> {
        match self {
            EncoderSpec::Token { path: Some(path), .. } => Ok(TokenEncoder::load(path)?),
            EncoderSpec::Token { path: None, config } => Ok(TokenEncoder::new(config.clone().unwrap_or_default())?),
            _ => Err(CliError::Config("the pair shift model needs a token encoder".into()).into()),
        }
    }
}

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let config: Self = toml::from_str(&text)
            .map_err(|e| CliError::Config(format!("{}: {}", path.display(), e.message())))?;
        config.validate()?;
        Ok(config)
    }

    /// Checks everything that can be checked before a job starts.
    pub fn validate(&self) -> Result<()> {
        for (name, spec) in &self.encoders {
            spec.validate().with_context(|| format!("encoder {name:?}"))?;
        }
        for (name, model) in &self.models {
            model.validate().with_context(|| format!("model {name:?}"))?;
        }
        if let Some(t) = &self.transfer {
            t.parsed_cells()?;
            if let Some(p) = &t.g_mapping {
                if !p.exists() {
                    return Err(CliError::Config(format!("G mapping {} does not exist", p.display())).into());
                }
            }
        }
        Ok(())
    }

    /// A registered encoder name, or an inline spec.
    pub fn encoder(&self, name_or_spec: &str) -> Result<EncoderSpec> {
        let spec = match self.encoders.get(name_or_spec) {
            Some(spec) => spec.clone(),
            None => EncoderSpec::parse(name_or_spec)?,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn model(&self, name: &str) -> Result<SequenceModelConfig> {
        self.models
            .get(name)
            .cloned()
            .ok_or_else(|| CliError::Config(format!("no model {name:?} in the config")).into())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_registry_and_rejects_unknown_keys() {
        let text = r#"
            [paths]
            runs_dir = "runs"

            [encoders.small]
            kind = "hashing"
            dim = 16

            [models.base]
            variant = "bilstm_crf"
            input_dim = 16
            learning_rate = 0.01
            batch_size = 4
            epochs = 2

            [transfer]
            cells = [["G", "IT"], ["IT+CL", "G"]]
        "#;
        let config: PipelineConfig = toml::from_str(text).unwrap();
        config.validate().unwrap();
        assert_eq!(config.encoder("small").unwrap(), EncoderSpec::Hashing { dim: 16, bigrams: false });
        assert_eq!(config.transfer.unwrap().parsed_cells().unwrap().len(), 2);

        assert!(toml::from_str::<PipelineConfig>("[paths]\nrun_dir = \"x\"").is_err());
        assert!(toml::from_str::<PipelineConfig>("[encoders.x]\nkind = \"hashing\"\ndim = 4\nsize = 2").is_err());
        assert!(toml::from_str::<PipelineConfig>("bogus = 1").is_err());
    }

    #[test]
    fn inline_specs() {
        assert_eq!(
            EncoderSpec::parse("hashing:64:bigrams").unwrap(),
            EncoderSpec::Hashing { dim: 64, bigrams: true }
        );
        assert_eq!(EncoderSpec::parse("handcrafted").unwrap(), EncoderSpec::Handcrafted);
        assert!(EncoderSpec::parse("hashing:x").is_err());
        assert!(EncoderSpec::parse("bert").is_err());
        assert!(EncoderSpec::parse("hashing:0").unwrap().validate().is_err());
    }
}
