use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::tensor::NdArray;

/// How the two per-frame feature streams are combined.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum FusionMode {
    Add,
    Concat,
    Multiply,
}

/// Which streams and which fusion path a model uses.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Architecture {
    RgbOnly,
    DepthOnly,
    /// Fuse encoder outputs directly, skipping mutual attention.
    DirectFusion,
    /// Mutual attention between the streams, then fusion.
    MutualFusion,
}

/// How per-frame outputs become one clip prediction.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ClipAggregation {
    /// Mean of per-frame logits, then softmax cross-entropy.
    Logits,
    /// Mean of per-frame softmax probabilities, then negative log-likelihood.
    Probabilities,
}

macro_rules! keyword_enum {
    ($ty:ty, $what:literal, { $($variant:path => $name:literal),+ $(,)? }) => {
        impl $ty {
            pub const ALL: &'static [$ty] = &[$($variant),+];

            pub fn as_str(&self) -> &'static str {
                match self { $($variant => $name),+ }
            }

            fn index(&self) -> usize {
                Self::ALL.iter().position(|v| v == self).expect("listed")
            }
        }

        impl FromStr for $ty {
            type Err = Error;
            fn from_str(s: &str) -> Result<Self> {
                match s.trim() {
                    $($name => Ok($variant),)+
                    other => Err(Error::Config(format!(
                        concat!("unknown ", $what, " {:?}"), other
                    ))),
                }
            }
        }

        impl fmt::Display for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.as_str())
            }
        }
    };
}

keyword_enum!(FusionMode, "fusion mode", {
    FusionMode::Add => "add",
    FusionMode::Concat => "concat",
    FusionMode::Multiply => "multiply",
});

keyword_enum!(Architecture, "architecture", {
    Architecture::RgbOnly => "rgb",
    Architecture::DepthOnly => "depth",
    Architecture::DirectFusion => "direct",
    Architecture::MutualFusion => "mutual",
});

keyword_enum!(ClipAggregation, "clip aggregation", {
    ClipAggregation::Logits => "logits",
    ClipAggregation::Probabilities => "probabilities",
});

impl Architecture {
    pub fn uses_rgb(self) -> bool {
        self != Architecture::DepthOnly
    }

    pub fn uses_depth(self) -> bool {
        self != Architecture::RgbOnly
    }

    pub fn fuses(self) -> bool {
        matches!(
            self,
            Architecture::DirectFusion | Architecture::MutualFusion
        )
    }
}

/// Architectural hyperparameters.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelConfig {
    pub d_model: usize,
    /// Frames per clip.
    pub frames: usize,
    pub heads_encoder: usize,
    pub heads_mutual: usize,
    pub num_encoders: usize,
    /// Hidden width of the position-wise feed-forward block; `None` means
    /// `4 · d_model`.
    pub ffn_hidden: Option<usize>,
    pub dropout_rate: f64,
    pub fusion_mode: FusionMode,
    pub num_classes: usize,
    pub use_positional_encoding: bool,
    /// Switches the inter-frame encoder off, leaving backbone features only.
    pub use_encoder: bool,
    pub architecture: Architecture,
    pub clip_aggregation: ClipAggregation,
    pub layer_norm_eps: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            d_model: 64,
            frames: 8,
            heads_encoder: 8,
            heads_mutual: 8,
            num_encoders: 1,
            ffn_hidden: None,
            dropout_rate: 0.1,
            fusion_mode: FusionMode::Add,
            num_classes: 4,
            use_positional_encoding: true,
            use_encoder: true,
            architecture: Architecture::MutualFusion,
            clip_aggregation: ClipAggregation::Logits,
            layer_norm_eps: 1e-5,
        }
    }
}

/// Backbone channel widths before the final `d_model` stage.
pub const BACKBONE_CHANNELS: [usize; 2] = [8, 16];

impl ModelConfig {
    pub fn ffn_hidden(&self) -> usize {
        self.ffn_hidden.unwrap_or(4 * self.d_model)
    }

    pub fn head_dim_encoder(&self) -> usize {
        self.d_model / self.heads_encoder
    }

    pub fn head_dim_mutual(&self) -> usize {
        self.d_model / self.heads_mutual
    }

    /// Width of the classifier input after fusion.
    pub fn classifier_width(&self) -> usize {
        if self.architecture.fuses() && self.fusion_mode == FusionMode::Concat {
            2 * self.d_model
        } else {
            self.d_model
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.d_model == 0 || self.frames == 0 || self.num_classes == 0 {
            return fail("d_model, frames and num_classes must be at least 1".into());
        }
        for (name, heads) in [
            ("heads_encoder", self.heads_encoder),
            ("heads_mutual", self.heads_mutual),
        ] {
            if heads == 0 || !self.d_model.is_multiple_of(heads) {
                return fail(format!(
                    "d_model {} is not divisible by {name} {heads}",
                    self.d_model
                ));
            }
        }
        if self.use_positional_encoding && !self.d_model.is_multiple_of(2) {
            return fail(format!(
                "positional encoding needs an even d_model, got {}",
                self.d_model
            ));
        }
        if self.use_encoder && self.num_encoders == 0 {
            return fail("num_encoders must be at least 1 when the encoder is on".into());
        }
        if self.ffn_hidden() == 0 {
            return fail("ffn_hidden must be at least 1".into());
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return fail(format!("dropout_rate {} not in [0, 1)", self.dropout_rate));
        }
        if self.layer_norm_eps.is_nan() || self.layer_norm_eps < 0.0 {
            return fail(format!(
                "layer_norm_eps {} is negative",
                self.layer_norm_eps
            ));
        }
        Ok(())
    }

    /// Rank-0 `meta.*` entries for the checkpoint container.
    pub fn to_entries(&self) -> Vec<(String, NdArray)> {
        let scalar = |k: &str, v: f64| (format!("meta.{k}"), NdArray::scalar(v));
        vec![
            scalar("d_model", self.d_model as f64),
            scalar("frames", self.frames as f64),
            scalar("heads_encoder", self.heads_encoder as f64),
            scalar("heads_mutual", self.heads_mutual as f64),
            scalar("num_encoders", self.num_encoders as f64),
            scalar("ffn_hidden", self.ffn_hidden() as f64),
            scalar("dropout_rate", self.dropout_rate),
            scalar("fusion_mode", self.fusion_mode.index() as f64),
            scalar("num_classes", self.num_classes as f64),
            scalar(
                "use_positional_encoding",
                f64::from(u8::from(self.use_positional_encoding)),
            ),
            scalar("use_encoder", f64::from(u8::from(self.use_encoder))),
            scalar("architecture", self.architecture.index() as f64),
            scalar("clip_aggregation", self.clip_aggregation.index() as f64),
            scalar("layer_norm_eps", self.layer_norm_eps),
        ]
    }

    pub fn from_entries(entries: &[(String, NdArray)]) -> Result<Self> {
        let get = |k: &str| -> Result<f64> {
            let key = format!("meta.{k}");
            entries
                .iter()
                .find(|(n, _)| *n == key)
                .map(|(_, a)| a.data()[0])
                .ok_or_else(|| Error::format(key, "missing from checkpoint"))
        };
        let count = |k: &str| -> Result<usize> {
            let v = get(k)?;
            if v >= 0.0 && v.fract() == 0.0 {
                Ok(v as usize)
            } else {
                Err(Error::format(
                    format!("meta.{k}"),
                    format!("{v} is not a count"),
                ))
            }
        };
        fn pick<T: Copy>(all: &[T], i: usize, key: &str) -> Result<T> {
            all.get(i)
                .copied()
                .ok_or_else(|| Error::format(format!("meta.{key}"), format!("unknown variant {i}")))
        }
        let config = Self {
            d_model: count("d_model")?,
            frames: count("frames")?,
            heads_encoder: count("heads_encoder")?,
            heads_mutual: count("heads_mutual")?,
            num_encoders: count("num_encoders")?,
            ffn_hidden: Some(count("ffn_hidden")?),
            dropout_rate: get("dropout_rate")?,
            fusion_mode: pick(FusionMode::ALL, count("fusion_mode")?, "fusion_mode")?,
            num_classes: count("num_classes")?,
            use_positional_encoding: count("use_positional_encoding")? != 0,
            use_encoder: count("use_encoder")? != 0,
            architecture: pick(Architecture::ALL, count("architecture")?, "architecture")?,
            clip_aggregation: pick(
                ClipAggregation::ALL,
                count("clip_aggregation")?,
                "clip_aggregation",
            )?,
            layer_norm_eps: get("layer_norm_eps")?,
        };
        config.validate()?;
        Ok(config)
    }
}
