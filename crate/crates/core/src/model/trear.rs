use std::path::Path;

use super::backbone::{embed_frames, TinyBackbone};
use super::config::{Architecture, ModelConfig};
use super::encoder::{encoder_forward, EncoderLayer, EncoderLayerTrace};
use super::fusion::{classify, fuse, mutual_attention, Classifier, ClassifierOutput, MutualBlock};
use super::layers::{Context, Initializer};
use super::positional::PositionalEncodingTable;
use crate::error::{Error, Result};
use crate::rng::{streams, RngStream};
use crate::tensor::{
    checkpoint, AdamConfig, AdamState, Graph, Mode, NdArray, ParamId, ParamStore, Tensor,
};

/// Preprocessed model input: `[k, 3, S, S]` RGB and depth frames.
#[derive(Clone, Debug, PartialEq)]
pub struct ClipTensors {
    pub rgb: NdArray,
    pub depth: NdArray,
}

impl ClipTensors {
    pub fn frames(&self) -> usize {
        self.rgb.shape()[0]
    }
}

/// Backbone and encoder stack of one modality.
#[derive(Clone, Debug, PartialEq)]
pub struct Stream {
    pub backbone: TinyBackbone,
    pub encoder: Vec<EncoderLayer>,
}

impl Stream {
    fn init(init: &mut Initializer<'_>, name: &str, config: &ModelConfig) -> Result<Self> {
        let backbone = TinyBackbone::init(init, &format!("{name}.backbone"), config.d_model)?;
        let layers = if config.use_encoder {
            config.num_encoders
        } else {
            0
        };
        let encoder = (0..layers)
            .map(|l| {
                EncoderLayer::init(
                    init,
                    &format!("{name}.encoder{l}"),
                    config.d_model,
                    config.heads_encoder,
                    config.ffn_hidden(),
                )
            })
            .collect::<Result<_>>()?;
        Ok(Self { backbone, encoder })
    }

    pub fn ids(&self) -> Vec<ParamId> {
        let mut ids = self.backbone.ids();
        for layer in &self.encoder {
            ids.extend(layer.ids());
        }
        ids
    }
}

/// Values of every attention map of one forward pass.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct AttentionMaps {
    /// `[layer][head]` self-attention maps of the RGB encoder.
    pub rgb: Vec<Vec<NdArray>>,
    pub depth: Vec<Vec<NdArray>>,
    /// Per-head maps with RGB queries and depth context.
    pub rgb2depth: Vec<NdArray>,
    pub depth2rgb: Vec<NdArray>,
}

impl AttentionMaps {
    pub fn all(&self) -> impl Iterator<Item = &NdArray> {
        self.rgb
            .iter()
            .chain(&self.depth)
            .flatten()
            .chain(&self.rgb2depth)
            .chain(&self.depth2rgb)
    }
}

#[derive(Clone, Debug)]
pub struct StreamActivations<'g> {
    /// Backbone output before positional encoding.
    pub embeddings: Tensor<'g>,
    /// Encoder input.
    pub input: Tensor<'g>,
    pub layers: Vec<EncoderLayerTrace<'g>>,
    pub encoded: Tensor<'g>,
}

#[derive(Clone, Debug)]
pub struct ForwardOutput<'g> {
    pub rgb: Option<StreamActivations<'g>>,
    pub depth: Option<StreamActivations<'g>>,
    /// Mutual-attention outputs, RGB then depth.
    pub mutual: Option<(Tensor<'g>, Tensor<'g>)>,
    pub fused: Tensor<'g>,
    pub head: ClassifierOutput<'g>,
    pub maps: AttentionMaps,
}

impl<'g> ForwardOutput<'g> {
    pub fn clip_scores(&self) -> Tensor<'g> {
        self.head.clip_scores
    }

    pub fn loss(&self, label: usize) -> Result<Tensor<'g>> {
        self.head.loss(label)
    }

    pub fn predicted(&self) -> usize {
        self.head.clip_scores.value_ref().argmax()
    }
}

/// Full model: parameters plus the handles that address them.
#[derive(Clone, Debug, PartialEq)]
pub struct Trear {
    config: ModelConfig,
    params: ParamStore,
    rgb: Option<Stream>,
    depth: Option<Stream>,
    mutual: Option<MutualBlock>,
    classifier: Classifier,
}

impl Trear {
    /// Fresh model with parameters drawn from the `init` stream of `seed`.
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut params = ParamStore::new();
        let mut rng = RngStream::new(seed, streams::INIT);
        let mut init = Initializer {
            store: &mut params,
            rng: &mut rng,
        };
        let arch = config.architecture;
        let rgb = arch
            .uses_rgb()
            .then(|| Stream::init(&mut init, "rgb", &config))
            .transpose()?;
        let depth = arch
            .uses_depth()
            .then(|| Stream::init(&mut init, "depth", &config))
            .transpose()?;
        let mutual = (arch == Architecture::MutualFusion)
            .then(|| MutualBlock::init(&mut init, "mutual", config.d_model, config.heads_mutual))
            .transpose()?;
        let classifier =
            Classifier::init(&mut init, config.classifier_width(), config.num_classes)?;
        Ok(Self {
            config,
            params,
            rgb,
            depth,
            mutual,
            classifier,
        })
    }

    /// Model with the given parameter values; names and shapes must match
    /// what `config` builds.
    pub fn with_params(config: ModelConfig, params: ParamStore) -> Result<Self> {
        let mut model = Self::new(config, 0)?;
        if model.params.len() != params.len() {
            return Err(Error::Config(format!(
                "expected {} parameter blocks, got {}",
                model.params.len(),
                params.len()
            )));
        }
        for ((_, want, a), (_, got, b)) in model.params.iter().zip(params.iter()) {
            if want != got || a.shape() != b.shape() {
                return Err(Error::Config(format!(
                    "parameter {got} {:?} does not match expected {want} {:?}",
                    b.shape(),
                    a.shape()
                )));
            }
        }
        model.params = params;
        Ok(model)
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    pub fn rgb_stream(&self) -> Option<&Stream> {
        self.rgb.as_ref()
    }

    pub fn depth_stream(&self) -> Option<&Stream> {
        self.depth.as_ref()
    }

    pub fn mutual_block(&self) -> Option<&MutualBlock> {
        self.mutual.as_ref()
    }

    pub fn classifier(&self) -> &Classifier {
        &self.classifier
    }

    fn run_stream<'g>(
        &self,
        graph: &'g Graph,
        cx: &mut Context<'_>,
        stream: &Stream,
        frames: &NdArray,
        pe: Option<Tensor<'g>>,
    ) -> Result<StreamActivations<'g>> {
        let embeddings = embed_frames(graph, cx, graph.constant(frames.clone()), &stream.backbone)?;
        let input = match pe {
            Some(pe) => embeddings.add(&pe)?,
            None => embeddings,
        };
        let (encoded, layers) = encoder_forward(graph, cx, input, &stream.encoder)?;
        Ok(StreamActivations {
            embeddings,
            input,
            layers,
            encoded,
        })
    }

    /// Backbones, encoders, mutual attention (when configured), fusion and
    /// the frame-averaged classifier.
    pub fn forward<'g>(
        &self,
        graph: &'g Graph,
        input: &ClipTensors,
        mode: Mode,
        rng: &mut RngStream,
    ) -> Result<ForwardOutput<'g>> {
        if input.rgb.shape() != input.depth.shape() {
            return Err(Error::Data(format!(
                "rgb frames {:?} and depth frames {:?} are not aligned",
                input.rgb.shape(),
                input.depth.shape()
            )));
        }
        let k = input.frames();
        let mut cx = Context {
            params: &self.params,
            mode,
            dropout_rate: self.config.dropout_rate,
            layer_norm_eps: self.config.layer_norm_eps,
            rng,
        };
        let pe = if self.config.use_positional_encoding {
            let table = PositionalEncodingTable::new(k, self.config.d_model)?;
            Some(graph.constant(table.into_array()))
        } else {
            None
        };

        let rgb = match &self.rgb {
            Some(s) => Some(self.run_stream(graph, &mut cx, s, &input.rgb, pe)?),
            None => None,
        };
        let depth = match &self.depth {
            Some(s) => Some(self.run_stream(graph, &mut cx, s, &input.depth, pe)?),
            None => None,
        };

        let mut maps = AttentionMaps::default();
        let collect = |layers: &[EncoderLayerTrace<'_>]| -> Vec<Vec<NdArray>> {
            layers
                .iter()
                .map(|l| l.maps.iter().map(Tensor::value).collect())
                .collect()
        };
        if let Some(a) = &rgb {
            maps.rgb = collect(&a.layers);
        }
        if let Some(a) = &depth {
            maps.depth = collect(&a.layers);
        }

        let mut mutual = None;
        let fused = match (&rgb, &depth) {
            (Some(r), None) => r.encoded,
            (None, Some(d)) => d.encoded,
            (Some(r), Some(d)) => match &self.mutual {
                Some(block) => {
                    let out = mutual_attention(graph, &mut cx, r.encoded, d.encoded, block)?;
                    maps.rgb2depth = out.rgb2depth.iter().map(Tensor::value).collect();
                    maps.depth2rgb = out.depth2rgb.iter().map(Tensor::value).collect();
                    mutual = Some((out.rgb, out.depth));
                    fuse(out.rgb, out.depth, self.config.fusion_mode)?
                }
                None => fuse(r.encoded, d.encoded, self.config.fusion_mode)?,
            },
            (None, None) => unreachable!("every architecture uses a stream"),
        };
        let head = classify(
            graph,
            &cx,
            fused,
            &self.classifier,
            self.config.clip_aggregation,
        )?;
        Ok(ForwardOutput {
            rgb,
            depth,
            mutual,
            fused,
            head,
            maps,
        })
    }

    /// Eval-mode prediction and clip scores.
    pub fn predict(&self, input: &ClipTensors) -> Result<(usize, NdArray)> {
        let graph = Graph::new();
        let mut rng = RngStream::new(0, streams::DROPOUT);
        let out = self.forward(&graph, input, Mode::Eval, &mut rng)?;
        Ok((out.predicted(), out.clip_scores().value()))
    }

    /// Checkpoint entries: config, parameters and, when given, Adam state.
    pub fn to_entries(&self, adam: Option<&AdamState>) -> Vec<(String, NdArray)> {
        let mut entries = self.config.to_entries();
        for (_, name, value) in self.params.iter() {
            entries.push((name.to_owned(), value.clone()));
        }
        if let Some(adam) = adam {
            let c = adam.config;
            for (k, v) in [
                ("step", adam.step_count() as f64),
                ("lr", c.lr),
                ("beta1", c.beta1),
                ("beta2", c.beta2),
                ("eps", c.eps),
            ] {
                entries.push((format!("adam.{k}"), NdArray::scalar(v)));
            }
            let (m, v) = adam.moments();
            for (prefix, moments) in [("adam.m", m), ("adam.v", v)] {
                for (name, value) in self.params.names().zip(moments) {
                    entries.push((format!("{prefix}.{name}"), value.clone()));
                }
            }
        }
        entries
    }

    pub fn from_entries(entries: Vec<(String, NdArray)>) -> Result<(Self, Option<AdamState>)> {
        let config = ModelConfig::from_entries(&entries)?;
        let mut params = ParamStore::new();
        let mut adam_scalars = Vec::new();
        let mut adam_m = Vec::new();
        let mut adam_v = Vec::new();
        for (name, value) in entries {
            if name.starts_with("meta.") {
                continue;
            } else if let Some(rest) = name.strip_prefix("adam.m.") {
                adam_m.push((rest.to_owned(), value));
            } else if let Some(rest) = name.strip_prefix("adam.v.") {
                adam_v.push((rest.to_owned(), value));
            } else if let Some(rest) = name.strip_prefix("adam.") {
                adam_scalars.push((rest.to_owned(), value.data()[0]));
            } else {
                params.add(name, value)?;
            }
        }
        let model = Self::with_params(config, params)?;
        let adam = if adam_scalars.is_empty() {
            None
        } else {
            let get = |k: &str| {
                adam_scalars
                    .iter()
                    .find(|(n, _)| n == k)
                    .map(|(_, v)| *v)
                    .ok_or_else(|| Error::format(format!("adam.{k}"), "missing from checkpoint"))
            };
            let order = |list: Vec<(String, NdArray)>, what: &str| -> Result<Vec<NdArray>> {
                if list.len() != model.params.len()
                    || list
                        .iter()
                        .zip(model.params.iter())
                        .any(|((n, a), (_, pn, pv))| n != pn || a.shape() != pv.shape())
                {
                    return Err(Error::format(
                        what.to_owned(),
                        "does not match the parameters",
                    ));
                }
                Ok(list.into_iter().map(|(_, a)| a).collect())
            };
            let config = AdamConfig {
                lr: get("lr")?,
                beta1: get("beta1")?,
                beta2: get("beta2")?,
                eps: get("eps")?,
            };
            Some(AdamState::from_parts(
                config,
                get("step")? as u64,
                order(adam_m, "adam.m")?,
                order(adam_v, "adam.v")?,
            )?)
        };
        Ok((model, adam))
    }

    pub fn save(&self, path: &Path, adam: Option<&AdamState>) -> Result<()> {
        checkpoint::write_file(path, &self.to_entries(adam))
    }

    pub fn load(path: &Path) -> Result<(Self, Option<AdamState>)> {
        Self::from_entries(checkpoint::read_file(path)?)
    }
}
