use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Head {
    /// Two outputs, the source direction projected on the unit circle.
    Regression,
    /// One logit per angular partition.
    Classification { n_classes: usize },
}

impl Head {
    pub fn n_outputs(&self) -> usize {
        match self {
            Head::Regression => 2,
            Head::Classification { n_classes } => *n_classes,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub n_channels: usize,
    pub n_f: usize,
    pub multiplier: usize,
    pub kernel_width: usize,
    pub dilations: Vec<usize>,
    pub n_banks: usize,
    /// Add the output of layer `l` of each filterbank to the input of layer
    /// `l` of the next one.
    pub cross_bank_skips: bool,
    pub head: Head,
    pub frame_len: usize,
    pub fs: f64,
}

impl ModelSpec {
    /// Full-size network: 3 filterbanks of 6 layers, 128 channels.
    pub fn full(head: Head) -> Self {
        Self {
            n_channels: 7,
            n_f: 128,
            multiplier: 4,
            kernel_width: 3,
            dilations: vec![1, 2, 4, 8, 16, 32],
            n_banks: 3,
            cross_bank_skips: true,
            head,
            frame_len: beamlab_core::FRAME_LEN,
            fs: beamlab_core::DEFAULT_FS,
        }
    }

    /// Full topology with fewer channels.
    pub fn with_channels(n_f: usize, head: Head) -> Self {
        Self {
            n_f,
            ..Self::full(head)
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Spec(m));
        if self.n_channels == 0 || self.n_f == 0 || self.multiplier == 0 || self.n_banks == 0 {
            return bad("channel counts, multiplier and bank count must be positive".into());
        }
        if self.kernel_width.is_multiple_of(2) {
            return bad(format!("kernel width must be odd, got {}", self.kernel_width));
        }
        if self.dilations.is_empty() || self.dilations[0] == 0 {
            return bad("dilations must be non-empty and positive".into());
        }
        if self.dilations.windows(2).any(|w| w[1] != 2 * w[0]) {
            return bad(format!(
                "dilations must double layer to layer, got {:?}",
                self.dilations
            ));
        }
        if let Head::Classification { n_classes } = self.head {
            if n_classes < 2 {
                return bad(format!("classification needs at least 2 classes, got {n_classes}"));
            }
        }
        if self.frame_len < self.receptive_field() {
            return bad(format!(
                "frame of {} samples leaves no valid output for receptive field {}",
                self.frame_len,
                self.receptive_field()
            ));
        }
        if !(self.fs > 0.0) {
            return bad(format!("sample rate must be positive, got {}", self.fs));
        }
        Ok(())
    }

    pub fn layers_per_bank(&self) -> usize {
        self.dilations.len()
    }

    pub fn n_layers(&self) -> usize {
        self.n_banks * self.dilations.len()
    }

    pub fn dilation(&self, layer: usize) -> usize {
        self.dilations[layer % self.dilations.len()]
    }

    pub fn in_channels(&self, layer: usize) -> usize {
        if layer == 0 {
            self.n_channels
        } else {
            self.n_f
        }
    }

    pub fn has_skip_projection(&self, layer: usize) -> bool {
        self.in_channels(layer) != self.n_f
    }

    pub fn half_width(&self) -> usize {
        (self.kernel_width - 1) / 2
    }

    pub fn receptive_field_per_bank(&self) -> usize {
        1 + (self.kernel_width - 1) * self.dilations.iter().sum::<usize>()
    }

    pub fn receptive_field(&self) -> usize {
        1 + self.n_banks * (self.receptive_field_per_bank() - 1)
    }

    /// Samples dropped from each end before pooling.
    pub fn crop(&self) -> usize {
        (self.receptive_field() - 1) / 2
    }

    pub fn valid_range(&self, t: usize) -> Range<usize> {
        self.crop()..t - self.crop()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParamKind {
    Weight,
    Bias,
    Gain,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: usize,
    pub kind: ParamKind,
}

impl ParamEntry {
    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn range(&self) -> Range<usize> {
        self.offset..self.offset + self.len()
    }
}

/// Offsets of one layer's tensors in the flat parameter vector.
#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) struct LayerSlots {
    pub depthwise: Range<usize>,
    pub pointwise: Range<usize>,
    pub pointwise_bias: Range<usize>,
    pub ln_gain: Range<usize>,
    pub ln_bias: Range<usize>,
    pub skip: Option<Range<usize>>,
}

/// Named tensors of the flat parameter vector, in storage order.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamLayout {
    pub entries: Vec<ParamEntry>,
    pub(crate) layers: Vec<LayerSlots>,
    pub(crate) energy_gain: Range<usize>,
    pub(crate) energy_bias: Range<usize>,
    pub(crate) head_weight: Range<usize>,
    pub(crate) head_bias: Range<usize>,
}

impl ParamLayout {
    pub fn new(spec: &ModelSpec) -> Self {
        let mut entries: Vec<ParamEntry> = Vec::new();
        let mut push = |name: String, shape: Vec<usize>, kind: ParamKind| {
            let offset = entries.last().map_or(0, |e| e.offset + e.len());
            let e = ParamEntry {
                name,
                shape,
                offset,
                kind,
            };
            let r = e.range();
            entries.push(e);
            r
        };
        let f = spec.n_f;
        let nl = spec.layers_per_bank();
        let mut layers = Vec::new();
        for layer in 0..spec.n_layers() {
            let c = spec.in_channels(layer);
            let p = format!("bank{}.layer{}", layer / nl, layer % nl);
            layers.push(LayerSlots {
                depthwise: push(
                    format!("{p}.depthwise"),
                    vec![c, spec.multiplier, spec.kernel_width],
                    ParamKind::Weight,
                ),
                pointwise: push(
                    format!("{p}.pointwise"),
                    vec![f, c * spec.multiplier],
                    ParamKind::Weight,
                ),
                pointwise_bias: push(format!("{p}.pointwise_bias"), vec![f], ParamKind::Bias),
                ln_gain: push(format!("{p}.ln_gain"), vec![f], ParamKind::Gain),
                ln_bias: push(format!("{p}.ln_bias"), vec![f], ParamKind::Bias),
                skip: spec
                    .has_skip_projection(layer)
                    .then(|| push(format!("{p}.skip"), vec![f, c], ParamKind::Weight)),
            });
        }
        let energy_gain = push("energy.ln_gain".into(), vec![f], ParamKind::Gain);
        let energy_bias = push("energy.ln_bias".into(), vec![f], ParamKind::Bias);
        let n_out = spec.head.n_outputs();
        let head_weight = push("head.weight".into(), vec![n_out, f], ParamKind::Weight);
        let head_bias = push("head.bias".into(), vec![n_out], ParamKind::Bias);
        Self {
            entries,
            layers,
            energy_gain,
            energy_bias,
            head_weight,
            head_bias,
        }
    }

    pub fn n_params(&self) -> usize {
        self.entries.last().map_or(0, |e| e.offset + e.len())
    }

    pub fn get(&self, name: &str) -> Option<&ParamEntry> {
        self.entries.iter().find(|e| e.name == name)
    }
}
