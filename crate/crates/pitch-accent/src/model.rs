//! The baseline acoustic CNN and its lexico-acoustic extension.
//!
//! The acoustic branch convolves the `(d+1) x s_max` word matrix
//! (features plus position indicator) with two ReLU conv layers,
//! max-pools each of the 100 feature maps over time and applies
//! dropout 0.2 to the pooled vector. The first layer's kernels span
//! the full feature axis, indicator row included, so every kernel
//! sees which frames belong to the current word.
//!
//! The lexical branch applies dropout 0.8 to the (non-trainable)
//! embedding input and compresses it through a small ReLU bottleneck
//! of `n` units. Branch weights are L2-regularized separately; the
//! branch outputs are concatenated (width `100 + n`) and fed into a
//! 2-unit softmax layer.

use std::fmt::Write as _;
use std::io::{BufRead, BufReader};
use std::path::Path;

use rand::Rng;

use crate::corpus::{AccentLabel, InputMatrix, MATRIX_ROWS};
use crate::dsp::FEATURE_DIM;
use crate::embeddings::{LexicalInput, Ngram};
use crate::error::{Error, Result};
use crate::nn::{
    add_l2_grads, conv2d, conv2d_backward, conv2d_depthwise, conv2d_depthwise_backward,
    dense_backward, dense_forward, dropout, maxpool_over_time, maxpool_over_time_backward,
    softmax, softmax_xent, Activation, ConvGrads, ConvLayerParams, DenseCache, DenseGrads,
    DenseLayerParams, Phase, Tensor,
};

/// Geometry and regularization of the acoustic CNN.
#[derive(Debug, Clone, PartialEq)]
pub struct AcousticConfig {
    pub s_max: usize,
    pub conv1_channels: usize,
    pub conv1_kh: usize,
    pub conv1_stride: usize,
    pub conv2_channels: usize,
    pub conv2_kh: usize,
    pub conv2_stride: usize,
    /// Second layer spans all input channels unless set, in which case
    /// each kernel convolves only its own channel.
    pub conv2_depthwise: bool,
    pub dropout_p: f64,
    pub l2_lambda: f64,
}

impl AcousticConfig {
    /// The architecture defaults: 100 kernels of 6 x (d+1) at stride
    /// (4,1), then 100 kernels of 4 x 1 at stride (2,1), dropout 0.2.
    pub fn new(s_max: usize) -> AcousticConfig {
        AcousticConfig {
            s_max,
            conv1_channels: 100,
            conv1_kh: 6,
            conv1_stride: 4,
            conv2_channels: 100,
            conv2_kh: 4,
            conv2_stride: 2,
            conv2_depthwise: false,
            dropout_p: 0.2,
            l2_lambda: 1e-4,
        }
    }

    /// First conv kernel width: the whole feature set plus indicator.
    pub fn conv1_kw(&self) -> usize {
        FEATURE_DIM + 1
    }

    /// Time lengths after each conv layer, by the valid-convolution
    /// formula. Values <= 0 mean the input is too short to build.
    pub fn conv_lengths(&self) -> (i64, i64) {
        let h1 = (self.s_max as i64 - self.conv1_kh as i64).div_euclid(self.conv1_stride as i64) + 1;
        let h2 = (h1 - self.conv2_kh as i64).div_euclid(self.conv2_stride as i64) + 1;
        (h1, h2)
    }

    fn validate(&self) -> Result<(usize, usize)> {
        if self.s_max < self.conv1_kh {
            return Err(Error::Config(format!(
                "s_max {} is below the first kernel height {}",
                self.s_max, self.conv1_kh
            )));
        }
        let (h1, h2) = self.conv_lengths();
        if h1 < self.conv2_kh as i64 || h2 < 1 {
            return Err(Error::Config(format!(
                "s_max {} leaves no room for the second conv layer (lengths {h1}, {h2})",
                self.s_max
            )));
        }
        if !(0.0..1.0).contains(&self.dropout_p) {
            return Err(Error::Config(format!("dropout rate {} not in [0, 1)", self.dropout_p)));
        }
        Ok((h1 as usize, h2 as usize))
    }
}

/// Geometry and regularization of the lexical bottleneck branch.
#[derive(Debug, Clone, PartialEq)]
pub struct LexicalConfig {
    pub embed_dim: usize,
    pub ngram: Ngram,
    pub bottleneck_n: usize,
    pub input_dropout_p: f64,
    pub l2_lambda: f64,
}

impl LexicalConfig {
    pub fn new(embed_dim: usize, ngram: Ngram, bottleneck_n: usize) -> LexicalConfig {
        LexicalConfig {
            embed_dim,
            ngram,
            bottleneck_n,
            input_dropout_p: 0.8,
            l2_lambda: 1e-4,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.embed_dim * self.ngram.n_words()
    }

    fn validate(&self) -> Result<()> {
        if self.bottleneck_n < 1 || self.embed_dim < 1 {
            return Err(Error::Config("bottleneck and embedding dims must be >= 1".into()));
        }
        if !(0.0..1.0).contains(&self.input_dropout_p) {
            return Err(Error::Config(format!(
                "dropout rate {} not in [0, 1)",
                self.input_dropout_p
            )));
        }
        Ok(())
    }
}

/// Which branches feed the classifier.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelMode {
    Acoustic,
    AcousticEmbs,
    EmbsOnly,
}

impl ModelMode {
    pub fn uses_acoustic(self) -> bool {
        self != ModelMode::EmbsOnly
    }

    pub fn uses_lexical(self) -> bool {
        self != ModelMode::Acoustic
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ModelMode::Acoustic => "acoustic",
            ModelMode::AcousticEmbs => "acoustic+embs",
            ModelMode::EmbsOnly => "embs-only",
        }
    }
}

impl std::str::FromStr for ModelMode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "acoustic" => Ok(ModelMode::Acoustic),
            "acoustic+embs" => Ok(ModelMode::AcousticEmbs),
            "embs-only" | "embs_only" => Ok(ModelMode::EmbsOnly),
            other => Err(format!(
                "unknown mode {other:?} (expected acoustic, acoustic+embs or embs-only)"
            )),
        }
    }
}

impl std::fmt::Display for ModelMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq)]
struct AcousticBranch {
    cfg: AcousticConfig,
    conv1: ConvLayerParams,
    conv2: ConvLayerParams,
}

#[derive(Debug, Clone, PartialEq)]
struct LexicalBranch {
    cfg: LexicalConfig,
    bottleneck: DenseLayerParams,
}

/// All trainable tensors of one model instance.
#[derive(Debug, Clone, PartialEq)]
pub struct LexicoAcousticModel {
    pub mode: ModelMode,
    acoustic: Option<AcousticBranch>,
    lexical: Option<LexicalBranch>,
    softmax_layer: DenseLayerParams,
}

/// Builds a freshly initialized model. Initialization order is fixed
/// (conv1, conv2, bottleneck, softmax) so a seed fully determines the
/// parameters; branches that the mode excludes draw nothing.
pub fn build_model(
    acoustic_cfg: &AcousticConfig,
    lexical_cfg: Option<&LexicalConfig>,
    mode: ModelMode,
    rng: &mut impl Rng,
) -> Result<LexicoAcousticModel> {
    let acoustic = if mode.uses_acoustic() {
        acoustic_cfg.validate()?;
        let conv1 = ConvLayerParams::init(
            acoustic_cfg.conv1_channels,
            1,
            acoustic_cfg.conv1_kh,
            acoustic_cfg.conv1_kw(),
            (acoustic_cfg.conv1_stride, 1),
            rng,
        );
        let conv2 = if acoustic_cfg.conv2_depthwise {
            ConvLayerParams::init(
                acoustic_cfg.conv2_channels,
                1,
                acoustic_cfg.conv2_kh,
                1,
                (acoustic_cfg.conv2_stride, 1),
                rng,
            )
        } else {
            ConvLayerParams::init(
                acoustic_cfg.conv2_channels,
                acoustic_cfg.conv1_channels,
                acoustic_cfg.conv2_kh,
                1,
                (acoustic_cfg.conv2_stride, 1),
                rng,
            )
        };
        if acoustic_cfg.conv2_depthwise && acoustic_cfg.conv2_channels != acoustic_cfg.conv1_channels
        {
            return Err(Error::Config(
                "depthwise conv2 requires conv2_channels == conv1_channels".into(),
            ));
        }
        Some(AcousticBranch {
            cfg: acoustic_cfg.clone(),
            conv1,
            conv2,
        })
    } else {
        None
    };

    let lexical = if mode.uses_lexical() {
        let cfg = lexical_cfg
            .ok_or_else(|| Error::Config(format!("mode {mode} requires a lexical config")))?;
        cfg.validate()?;
        let bottleneck = DenseLayerParams::init(cfg.bottleneck_n, cfg.input_dim(), rng);
        Some(LexicalBranch {
            cfg: cfg.clone(),
            bottleneck,
        })
    } else {
        None
    };

    let fused = acoustic.as_ref().map_or(0, |a| a.cfg.conv2_channels)
        + lexical.as_ref().map_or(0, |l| l.cfg.bottleneck_n);
    let softmax_layer = DenseLayerParams::init(2, fused, rng);

    Ok(LexicoAcousticModel {
        mode,
        acoustic,
        lexical,
        softmax_layer,
    })
}

/// One labelled training example.
#[derive(Debug)]
pub struct Example<'a> {
    pub matrix: &'a InputMatrix,
    pub lexical: Option<&'a LexicalInput>,
    pub gold: AccentLabel,
}

struct AcousticCache {
    input: Tensor,
    conv1_pre: Tensor,
    conv1_out: Tensor,
    conv2_pre: Tensor,
    pool_argmax: Vec<usize>,
    dropout_mask: Vec<f64>,
}

struct LexicalCache {
    dropped_input: Vec<f64>,
    bottleneck: DenseCache,
}

/// Intermediate activations one backward pass needs.
pub struct ForwardCache {
    acoustic: Option<AcousticCache>,
    lexical: Option<LexicalCache>,
    features: Vec<f64>,
    softmax_cache: DenseCache,
}

impl ForwardCache {
    pub fn logits(&self) -> &[f64] {
        &self.softmax_cache.pre
    }
}

/// Gradients for every trainable tensor, mirroring the model layout.
pub struct ModelGrads {
    conv1: Option<ConvGrads>,
    conv2: Option<ConvGrads>,
    bottleneck: Option<DenseGrads>,
    softmax_grads: DenseGrads,
}

impl LexicoAcousticModel {
    pub fn acoustic_cfg(&self) -> Option<&AcousticConfig> {
        self.acoustic.as_ref().map(|a| &a.cfg)
    }

    pub fn lexical_cfg(&self) -> Option<&LexicalConfig> {
        self.lexical.as_ref().map(|l| &l.cfg)
    }

    /// Width of the concatenated feature representation.
    pub fn fused_width(&self) -> usize {
        self.softmax_layer.in_dim()
    }

    /// Length of the pooled acoustic vector (0 without the branch).
    pub fn pooled_width(&self) -> usize {
        self.acoustic.as_ref().map_or(0, |a| a.cfg.conv2_channels)
    }

    fn matrix_to_tensor(&self, matrix: &InputMatrix, s_max: usize) -> Result<Tensor> {
        if matrix.rows() != MATRIX_ROWS || matrix.cols() != s_max {
            return Err(Error::Shape(format!(
                "input matrix is {}x{}, model expects {}x{}",
                matrix.rows(),
                matrix.cols(),
                MATRIX_ROWS,
                s_max
            )));
        }
        // time on the height axis, features (plus indicator) on the width axis
        let mut t = Tensor::zeros(&[1, s_max, MATRIX_ROWS]);
        let data = t.data_mut();
        for col in 0..s_max {
            for row in 0..MATRIX_ROWS {
                data[col * MATRIX_ROWS + row] = matrix.get(row, col);
            }
        }
        Ok(t)
    }

    /// Runs the network, returning class probabilities `(none, accented)`
    /// and the cache the backward pass consumes.
    pub fn forward(
        &self,
        matrix: &InputMatrix,
        lexical: Option<&LexicalInput>,
        phase: Phase,
        rng: &mut impl Rng,
    ) -> Result<(Vec<f64>, ForwardCache)> {
        let mut features = Vec::with_capacity(self.fused_width());

        let acoustic = match &self.acoustic {
            Some(branch) => {
                let input = self.matrix_to_tensor(matrix, branch.cfg.s_max)?;
                let conv1_pre = conv2d(&input, &branch.conv1)?;
                let conv1_out = relu_tensor(&conv1_pre);
                let conv2_pre = if branch.cfg.conv2_depthwise {
                    conv2d_depthwise(&conv1_out, &branch.conv2)?
                } else {
                    conv2d(&conv1_out, &branch.conv2)?
                };
                let conv2_out = relu_tensor(&conv2_pre);
                let (pooled, pool_argmax) = maxpool_over_time(&conv2_out)?;
                let (dropped, dropout_mask) = dropout(&pooled, branch.cfg.dropout_p, phase, rng);
                features.extend_from_slice(&dropped);
                Some(AcousticCache {
                    input,
                    conv1_pre,
                    conv1_out,
                    conv2_pre,
                    pool_argmax,
                    dropout_mask,
                })
            }
            None => None,
        };

        let lexical_cache = match &self.lexical {
            Some(branch) => {
                let lex = lexical.ok_or_else(|| {
                    Error::Config(format!("mode {} requires a lexical input", self.mode))
                })?;
                if lex.vector.len() != branch.cfg.input_dim() {
                    return Err(Error::Shape(format!(
                        "lexical input length {} does not match {}",
                        lex.vector.len(),
                        branch.cfg.input_dim()
                    )));
                }
                let (dropped_input, _mask) =
                    dropout(&lex.vector, branch.cfg.input_dropout_p, phase, rng);
                let bottleneck =
                    dense_forward(&branch.bottleneck, &dropped_input, Activation::Relu)?;
                features.extend_from_slice(&bottleneck.out);
                Some(LexicalCache {
                    dropped_input,
                    bottleneck,
                })
            }
            None => {
                if lexical.is_some() {
                    return Err(Error::Config(format!(
                        "mode {} takes no lexical input",
                        self.mode
                    )));
                }
                None
            }
        };

        let softmax_cache = dense_forward(&self.softmax_layer, &features, Activation::Identity)?;
        let probs = softmax(&softmax_cache.pre);
        Ok((
            probs,
            ForwardCache {
                acoustic,
                lexical: lexical_cache,
                features,
                softmax_cache,
            },
        ))
    }

    /// Deterministic eval-mode probabilities.
    pub fn forward_eval(
        &self,
        matrix: &InputMatrix,
        lexical: Option<&LexicalInput>,
    ) -> Result<Vec<f64>> {
        // eval mode draws nothing from the rng
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
        use rand::SeedableRng;
        let (probs, _) = self.forward(matrix, lexical, Phase::Eval, &mut rng)?;
        Ok(probs)
    }

    /// Argmax class of the eval probabilities; ties predict `None`.
    pub fn predict(
        &self,
        matrix: &InputMatrix,
        lexical: Option<&LexicalInput>,
    ) -> Result<AccentLabel> {
        let probs = self.forward_eval(matrix, lexical)?;
        Ok(predict_from_probs(&probs))
    }

    /// Gradients of the data loss for one example, given `d_logits`.
    fn backward(&self, cache: &ForwardCache, d_logits: &[f64]) -> Result<ModelGrads> {
        let (d_features, softmax_grads) = dense_backward(
            &self.softmax_layer,
            &cache.features,
            &cache.softmax_cache,
            Activation::Identity,
            d_logits,
        )?;

        let pooled_width = self.pooled_width();
        let mut conv1 = None;
        let mut conv2 = None;
        if let (Some(branch), Some(ac)) = (&self.acoustic, &cache.acoustic) {
            let d_pooled: Vec<f64> = d_features[..pooled_width]
                .iter()
                .zip(&ac.dropout_mask)
                .map(|(g, m)| g * m)
                .collect();
            let conv2_shape = ac.conv2_pre.shape();
            let d_conv2_out = maxpool_over_time_backward(conv2_shape, &ac.pool_argmax, &d_pooled);
            let d_conv2_pre = relu_backward(&ac.conv2_pre, &d_conv2_out);
            let (d_conv1_out, g2) = if branch.cfg.conv2_depthwise {
                conv2d_depthwise_backward(&ac.conv1_out, &branch.conv2, &d_conv2_pre)?
            } else {
                conv2d_backward(&ac.conv1_out, &branch.conv2, &d_conv2_pre)?
            };
            let d_conv1_pre = relu_backward(&ac.conv1_pre, &d_conv1_out);
            let (_d_input, g1) = conv2d_backward(&ac.input, &branch.conv1, &d_conv1_pre)?;
            conv1 = Some(g1);
            conv2 = Some(g2);
        }

        let mut bottleneck = None;
        if let (Some(branch), Some(lex)) = (&self.lexical, &cache.lexical) {
            let d_out = &d_features[pooled_width..];
            let (_d_in, g) = dense_backward(
                &branch.bottleneck,
                &lex.dropped_input,
                &lex.bottleneck,
                Activation::Relu,
                d_out,
            )?;
            bottleneck = Some(g);
        }

        Ok(ModelGrads {
            conv1,
            conv2,
            bottleneck,
            softmax_grads,
        })
    }

    /// Mean cross-entropy over a batch plus the separate L2 terms of
    /// each branch, with gradients for every parameter.
    pub fn loss_and_grads(
        &self,
        batch: &[Example<'_>],
        phase: Phase,
        rng: &mut impl Rng,
    ) -> Result<(f64, ModelGrads)> {
        if batch.is_empty() {
            return Err(Error::Training("empty batch".into()));
        }
        let mut total = self.zero_grads();
        let mut data_loss = 0.0;
        for ex in batch {
            let (_probs, cache) = self.forward(ex.matrix, ex.lexical, phase, rng)?;
            let (loss, d_logits) = softmax_xent(cache.logits(), ex.gold.index());
            data_loss += loss;
            let grads = self.backward(&cache, &d_logits)?;
            total.add_assign(&grads);
        }
        let inv = 1.0 / batch.len() as f64;
        total.scale(inv);
        let mut loss = data_loss * inv;

        if let Some(branch) = &self.acoustic {
            let lambda = branch.cfg.l2_lambda;
            loss += lambda * (branch.conv1.kernels.sum_squares() + branch.conv2.kernels.sum_squares());
            let g1 = total.conv1.as_mut().unwrap();
            add_l2_grads(&branch.conv1.kernels, lambda, &mut g1.d_kernels);
            let g2 = total.conv2.as_mut().unwrap();
            add_l2_grads(&branch.conv2.kernels, lambda, &mut g2.d_kernels);
        }
        if let Some(branch) = &self.lexical {
            let lambda = branch.cfg.l2_lambda;
            loss += lambda * branch.bottleneck.weights.sum_squares();
            let g = total.bottleneck.as_mut().unwrap();
            add_l2_grads(&branch.bottleneck.weights, lambda, &mut g.d_weights);
        }
        Ok((loss, total))
    }

    fn zero_grads(&self) -> ModelGrads {
        ModelGrads {
            conv1: self.acoustic.as_ref().map(|a| ConvGrads {
                d_kernels: Tensor::zeros(a.conv1.kernels.shape()),
                d_bias: vec![0.0; a.conv1.bias.len()],
            }),
            conv2: self.acoustic.as_ref().map(|a| ConvGrads {
                d_kernels: Tensor::zeros(a.conv2.kernels.shape()),
                d_bias: vec![0.0; a.conv2.bias.len()],
            }),
            bottleneck: self.lexical.as_ref().map(|l| DenseGrads {
                d_weights: Tensor::zeros(l.bottleneck.weights.shape()),
                d_bias: vec![0.0; l.bottleneck.bias.len()],
            }),
            softmax_grads: DenseGrads {
                d_weights: Tensor::zeros(self.softmax_layer.weights.shape()),
                d_bias: vec![0.0; self.softmax_layer.bias.len()],
            },
        }
    }

    /// Named parameter tensors in the fixed flatten order.
    fn named_tensors(&self) -> Vec<(String, Vec<usize>, &[f64])> {
        let mut out = Vec::new();
        if let Some(a) = &self.acoustic {
            out.push(("conv1.kernels".into(), a.conv1.kernels.shape().to_vec(), a.conv1.kernels.data()));
            out.push(("conv1.bias".into(), vec![a.conv1.bias.len()], &a.conv1.bias[..]));
            out.push(("conv2.kernels".into(), a.conv2.kernels.shape().to_vec(), a.conv2.kernels.data()));
            out.push(("conv2.bias".into(), vec![a.conv2.bias.len()], &a.conv2.bias[..]));
        }
        if let Some(l) = &self.lexical {
            out.push(("bottleneck.weights".into(), l.bottleneck.weights.shape().to_vec(), l.bottleneck.weights.data()));
            out.push(("bottleneck.bias".into(), vec![l.bottleneck.bias.len()], &l.bottleneck.bias[..]));
        }
        out.push(("softmax.weights".into(), self.softmax_layer.weights.shape().to_vec(), self.softmax_layer.weights.data()));
        out.push(("softmax.bias".into(), vec![self.softmax_layer.bias.len()], &self.softmax_layer.bias[..]));
        out
    }

    pub fn param_count(&self) -> usize {
        self.named_tensors().iter().map(|(_, _, d)| d.len()).sum()
    }

    /// All parameters as one flat vector (checkpoint and Adam order).
    pub fn flatten_params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for (_, _, data) in self.named_tensors() {
            out.extend_from_slice(data);
        }
        out
    }

    /// Loads a flat vector written by [`Self::flatten_params`].
    pub fn load_params(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.param_count() {
            return Err(Error::Shape(format!(
                "parameter vector has {} values, model needs {}",
                flat.len(),
                self.param_count()
            )));
        }
        let mut pos = 0;
        let mut take = |dst: &mut [f64]| {
            dst.copy_from_slice(&flat[pos..pos + dst.len()]);
            pos += dst.len();
        };
        if let Some(a) = &mut self.acoustic {
            take(a.conv1.kernels.data_mut());
            take(&mut a.conv1.bias);
            take(a.conv2.kernels.data_mut());
            take(&mut a.conv2.bias);
        }
        if let Some(l) = &mut self.lexical {
            take(l.bottleneck.weights.data_mut());
            take(&mut l.bottleneck.bias);
        }
        take(self.softmax_layer.weights.data_mut());
        take(&mut self.softmax_layer.bias);
        Ok(())
    }

    /// True iff every parameter is finite; checked once per epoch.
    pub fn params_finite(&self) -> bool {
        self.named_tensors()
            .iter()
            .all(|(_, _, d)| d.iter().all(|v| v.is_finite()))
    }
}

impl ModelGrads {
    fn add_assign(&mut self, other: &ModelGrads) {
        fn add_conv(a: &mut Option<ConvGrads>, b: &Option<ConvGrads>) {
            if let (Some(a), Some(b)) = (a.as_mut(), b.as_ref()) {
                for (x, y) in a.d_kernels.data_mut().iter_mut().zip(b.d_kernels.iter()) {
                    *x += y;
                }
                for (x, y) in a.d_bias.iter_mut().zip(&b.d_bias) {
                    *x += y;
                }
            }
        }
        fn add_dense(a: &mut DenseGrads, b: &DenseGrads) {
            for (x, y) in a.d_weights.data_mut().iter_mut().zip(b.d_weights.iter()) {
                *x += y;
            }
            for (x, y) in a.d_bias.iter_mut().zip(&b.d_bias) {
                *x += y;
            }
        }
        add_conv(&mut self.conv1, &other.conv1);
        add_conv(&mut self.conv2, &other.conv2);
        if let (Some(a), Some(b)) = (self.bottleneck.as_mut(), other.bottleneck.as_ref()) {
            add_dense(a, b);
        }
        add_dense(&mut self.softmax_grads, &other.softmax_grads);
    }

    fn scale(&mut self, c: f64) {
        let mut apply = |slice: &mut [f64]| slice.iter_mut().for_each(|v| *v *= c);
        if let Some(g) = self.conv1.as_mut() {
            apply(g.d_kernels.data_mut());
            apply(&mut g.d_bias);
        }
        if let Some(g) = self.conv2.as_mut() {
            apply(g.d_kernels.data_mut());
            apply(&mut g.d_bias);
        }
        if let Some(g) = self.bottleneck.as_mut() {
            apply(g.d_weights.data_mut());
            apply(&mut g.d_bias);
        }
        apply(self.softmax_grads.d_weights.data_mut());
        apply(&mut self.softmax_grads.d_bias);
    }

    /// Flat view aligned with [`LexicoAcousticModel::flatten_params`].
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::new();
        if let Some(g) = &self.conv1 {
            out.extend_from_slice(g.d_kernels.data());
            out.extend_from_slice(&g.d_bias);
        }
        if let Some(g) = &self.conv2 {
            out.extend_from_slice(g.d_kernels.data());
            out.extend_from_slice(&g.d_bias);
        }
        if let Some(g) = &self.bottleneck {
            out.extend_from_slice(g.d_weights.data());
            out.extend_from_slice(&g.d_bias);
        }
        out.extend_from_slice(self.softmax_grads.d_weights.data());
        out.extend_from_slice(&self.softmax_grads.d_bias);
        out
    }
}

/// Argmax with the tie rule: equal probabilities predict `None`.
pub fn predict_from_probs(probs: &[f64]) -> AccentLabel {
    if probs[AccentLabel::Accented.index()] > probs[AccentLabel::None.index()] {
        AccentLabel::Accented
    } else {
        AccentLabel::None
    }
}

fn relu_tensor(t: &Tensor) -> Tensor {
    let mut out = t.clone();
    for v in out.data_mut() {
        *v = v.max(0.0);
    }
    out
}

fn relu_backward(pre: &Tensor, d_out: &Tensor) -> Tensor {
    let mut d = d_out.clone();
    for (g, p) in d.data_mut().iter_mut().zip(pre.iter()) {
        if *p <= 0.0 {
            *g = 0.0;
        }
    }
    d
}

// --- checkpoint format ---

const CHECKPOINT_MAGIC: &str = "pitch-accent-checkpoint v1";

/// Serializes a model with its seed and config hash into the versioned
/// text container: named tensors with shapes and round-trip-exact
/// row-major values.
pub fn save_checkpoint(
    model: &LexicoAcousticModel,
    seed: u64,
    config_hash: &str,
    path: &Path,
) -> Result<()> {
    let mut out = String::new();
    writeln!(out, "{CHECKPOINT_MAGIC}").unwrap();
    writeln!(out, "seed {seed}").unwrap();
    writeln!(out, "config_hash {config_hash}").unwrap();
    writeln!(out, "mode {}", model.mode).unwrap();
    if let Some(cfg) = model.acoustic_cfg() {
        writeln!(
            out,
            "acoustic s_max={} conv1_channels={} conv1_kh={} conv1_stride={} conv2_channels={} conv2_kh={} conv2_stride={} conv2_depthwise={} dropout_p={} l2={}",
            cfg.s_max,
            cfg.conv1_channels,
            cfg.conv1_kh,
            cfg.conv1_stride,
            cfg.conv2_channels,
            cfg.conv2_kh,
            cfg.conv2_stride,
            cfg.conv2_depthwise,
            cfg.dropout_p,
            cfg.l2_lambda
        )
        .unwrap();
    }
    if let Some(cfg) = model.lexical_cfg() {
        writeln!(
            out,
            "lexical embed_dim={} ngram={} bottleneck={} dropout_p={} l2={}",
            cfg.embed_dim,
            cfg.ngram.n_words(),
            cfg.bottleneck_n,
            cfg.input_dropout_p,
            cfg.l2_lambda
        )
        .unwrap();
    }
    for (name, shape, data) in model.named_tensors() {
        let dims: Vec<String> = shape.iter().map(|d| d.to_string()).collect();
        writeln!(out, "tensor {name} {}", dims.join(" ")).unwrap();
        let values: Vec<String> = data.iter().map(|v| format!("{v}")).collect();
        writeln!(out, "{}", values.join(" ")).unwrap();
    }
    writeln!(out, "end").unwrap();
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Loads a checkpoint written by [`save_checkpoint`].
pub fn load_checkpoint(path: &Path) -> Result<(LexicoAcousticModel, u64, String)> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut lines = BufReader::new(file).lines().enumerate();
    let ffe = |line: usize, msg: String| Error::FileFormat {
        path: path.to_path_buf(),
        line,
        msg,
    };
    let mut next_line = |expect: &str| -> Result<(usize, String)> {
        match lines.next() {
            Some((i, Ok(l))) => Ok((i + 1, l)),
            Some((i, Err(e))) => Err(ffe(i + 1, e.to_string())),
            None => Err(ffe(0, format!("unexpected end of file, expected {expect}"))),
        }
    };

    let (n, magic) = next_line("header")?;
    if magic != CHECKPOINT_MAGIC {
        return Err(ffe(n, format!("bad header {magic:?}")));
    }
    let (n, seed_line) = next_line("seed")?;
    let seed: u64 = seed_line
        .strip_prefix("seed ")
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| ffe(n, "bad seed line".into()))?;
    let (n, hash_line) = next_line("config_hash")?;
    let config_hash = hash_line
        .strip_prefix("config_hash ")
        .ok_or_else(|| ffe(n, "bad config_hash line".into()))?
        .to_string();
    let (n, mode_line) = next_line("mode")?;
    let mode: ModelMode = mode_line
        .strip_prefix("mode ")
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| ffe(n, "bad mode line".into()))?;

    let kv = |field: &str, line: &str, line_no: usize| -> Result<f64> {
        line.split_whitespace()
            .find_map(|tok| tok.strip_prefix(&format!("{field}=")))
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| ffe(line_no, format!("missing field {field}")))
    };

    let mut acoustic_cfg = None;
    let mut lexical_cfg = None;
    let mut pending: Option<(usize, String)> = None;
    loop {
        let (n, line) = next_line("config or tensor")?;
        if line.starts_with("acoustic ") {
            acoustic_cfg = Some(AcousticConfig {
                s_max: kv("s_max", &line, n)? as usize,
                conv1_channels: kv("conv1_channels", &line, n)? as usize,
                conv1_kh: kv("conv1_kh", &line, n)? as usize,
                conv1_stride: kv("conv1_stride", &line, n)? as usize,
                conv2_channels: kv("conv2_channels", &line, n)? as usize,
                conv2_kh: kv("conv2_kh", &line, n)? as usize,
                conv2_stride: kv("conv2_stride", &line, n)? as usize,
                conv2_depthwise: line.contains("conv2_depthwise=true"),
                dropout_p: kv("dropout_p", &line, n)?,
                l2_lambda: kv("l2", &line, n)?,
            });
        } else if line.starts_with("lexical ") {
            let ngram = match kv("ngram", &line, n)? as usize {
                1 => Ngram::Unigram,
                3 => Ngram::Trigram,
                other => return Err(ffe(n, format!("bad ngram {other}"))),
            };
            lexical_cfg = Some(LexicalConfig {
                embed_dim: kv("embed_dim", &line, n)? as usize,
                ngram,
                bottleneck_n: kv("bottleneck", &line, n)? as usize,
                input_dropout_p: kv("dropout_p", &line, n)?,
                l2_lambda: kv("l2", &line, n)?,
            });
        } else {
            pending = Some((n, line));
            break;
        }
    }

    if mode.uses_acoustic() && acoustic_cfg.is_none() {
        return Err(ffe(0, "missing acoustic config".into()));
    }
    if mode.uses_lexical() && lexical_cfg.is_none() {
        return Err(ffe(0, "missing lexical config".into()));
    }
    let mut rng = {
        use rand::SeedableRng;
        rand_chacha::ChaCha8Rng::seed_from_u64(0)
    };
    let mut model = build_model(
        &acoustic_cfg.unwrap_or_else(|| AcousticConfig::new(18)),
        lexical_cfg.as_ref(),
        mode,
        &mut rng,
    )?;

    let mut flat = Vec::with_capacity(model.param_count());
    let expected: Vec<(String, Vec<usize>)> = model
        .named_tensors()
        .iter()
        .map(|(name, shape, _)| (name.clone(), shape.clone()))
        .collect();
    for (name, shape) in expected {
        let (n, header) = match pending.take() {
            Some(p) => p,
            None => next_line("tensor header")?,
        };
        let mut parts = header.split_whitespace();
        if parts.next() != Some("tensor") || parts.next() != Some(name.as_str()) {
            return Err(ffe(n, format!("expected tensor {name}, got {header:?}")));
        }
        let dims: Vec<usize> = parts.filter_map(|p| p.parse().ok()).collect();
        if dims != shape {
            return Err(ffe(n, format!("tensor {name} has shape {dims:?}, expected {shape:?}")));
        }
        let (n, values_line) = next_line("tensor values")?;
        let count: usize = shape.iter().product();
        let mut values = Vec::with_capacity(count);
        for tok in values_line.split_whitespace() {
            values.push(tok.parse::<f64>().map_err(|_| ffe(n, format!("bad value {tok:?}")))?);
        }
        if values.len() != count {
            return Err(ffe(n, format!("tensor {name}: {} values, expected {count}", values.len())));
        }
        flat.extend(values);
    }
    model.load_params(&flat)?;
    Ok((model, seed, config_hash))
}
