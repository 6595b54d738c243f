//! Point-wise segmentation network: encoder E, projector P and classifier G.
//!
//! ```text
//! feats ─ E (Linear+ReLU)* ─┬─ P: Linear+ReLU, Linear, L2-normalize ─→ embeddings
//!                           └─ G: Linear ─────────────────────────────→ logits
//! ```
//!
//! Gradients are computed by hand. [`Model::forward`] caches activations and
//! [`Model::backward`] consumes the cache, accumulating into per-layer
//! gradient buffers that mirror the parameter buffers.

use rand::Rng as _;

use crate::error::{Error, Result};
use crate::labels::{TrainId, NUM_EVAL_CLASSES};
use crate::matrix::{axpy, dot, Mat};
use crate::rng::rng;
use crate::voxel::FEATURE_WIDTH;

/// Below this norm the projector output is replaced by a fixed unit vector.
pub const NORM_EPS: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub input_dim: usize,
    pub hidden: Vec<usize>,
    /// Embedding dimension D, shared by encoder output and projector.
    pub embed_dim: usize,
    pub num_classes: usize,
    /// Voxel size used to featurize inputs for this model.
    pub voxel_size: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            input_dim: FEATURE_WIDTH,
            hidden: vec![64, 64],
            embed_dim: 32,
            num_classes: NUM_EVAL_CLASSES,
            voxel_size: 0.5,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.embed_dim == 0 || self.num_classes == 0 {
            return Err(Error::Argument("model dimensions must be positive".into()));
        }
        if self.hidden.contains(&0) {
            return Err(Error::Argument("hidden widths must be positive".into()));
        }
        if self.voxel_size.is_nan() || self.voxel_size <= 0.0 {
            return Err(Error::Argument("voxel size must be positive".into()));
        }
        Ok(())
    }

    /// `(in, out)` of every linear layer in declaration order.
    pub fn layer_shapes(&self) -> Vec<(usize, usize)> {
        let mut dims = vec![self.input_dim];
        dims.extend(&self.hidden);
        dims.push(self.embed_dim);
        let mut shapes: Vec<_> = dims.windows(2).map(|w| (w[0], w[1])).collect();
        shapes.push((self.embed_dim, self.embed_dim));
        shapes.push((self.embed_dim, self.embed_dim));
        shapes.push((self.embed_dim, self.num_classes));
        shapes
    }
}

/// Fully connected layer `y = W x + b`, `W` stored row-major as `out × in`.
#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    pub in_dim: usize,
    pub out_dim: usize,
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
    pub grad_weight: Vec<f64>,
    pub grad_bias: Vec<f64>,
}

impl Linear {
    pub fn zeros(in_dim: usize, out_dim: usize) -> Self {
        Self {
            in_dim,
            out_dim,
            weight: vec![0.0; in_dim * out_dim],
            bias: vec![0.0; out_dim],
            grad_weight: vec![0.0; in_dim * out_dim],
            grad_bias: vec![0.0; out_dim],
        }
    }

    /// He-style uniform init on fan-in, zero bias.
    fn init(in_dim: usize, out_dim: usize, rng: &mut crate::rng::Rng) -> Self {
        let mut layer = Self::zeros(in_dim, out_dim);
        let bound = (6.0 / in_dim as f64).sqrt();
        for w in &mut layer.weight {
            *w = rng.gen_range(-bound..bound);
        }
        layer
    }

    fn weight_row(&self, o: usize) -> &[f64] {
        &self.weight[o * self.in_dim..(o + 1) * self.in_dim]
    }

    pub fn forward(&self, x: &Mat) -> Mat {
        debug_assert_eq!(x.cols(), self.in_dim);
        let mut out = Mat::zeros(x.rows(), self.out_dim);
        for (i, xi) in x.iter_rows().enumerate() {
            let row = out.row_mut(i);
            for (o, y) in row.iter_mut().enumerate() {
                *y = dot(self.weight_row(o), xi) + self.bias[o];
            }
        }
        out
    }

    /// Accumulates parameter gradients for upstream `gz` and returns the
    /// gradient wrt the input when `input_grad` is set.
    fn backward(&mut self, x: &Mat, gz: &Mat, input_grad: bool) -> Option<Mat> {
        let mut gx = input_grad.then(|| Mat::zeros(x.rows(), self.in_dim));
        for (i, xi) in x.iter_rows().enumerate() {
            for (o, &g) in gz.row(i).iter().enumerate() {
                if g == 0.0 {
                    continue;
                }
                self.grad_bias[o] += g;
                axpy(g, xi, &mut self.grad_weight[o * self.in_dim..(o + 1) * self.in_dim]);
                if let Some(gx) = gx.as_mut() {
                    axpy(g, &self.weight[o * self.in_dim..(o + 1) * self.in_dim], gx.row_mut(i));
                }
            }
        }
        gx
    }

    fn zero_grad(&mut self) {
        self.grad_weight.fill(0.0);
        self.grad_bias.fill(0.0);
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelOutput {
    /// `N × D`, unit L2 norm per row.
    pub embeddings: Mat,
    /// `N × C`
    pub logits: Mat,
}

#[derive(Debug, Clone)]
struct Cache {
    /// Inputs to each encoder layer followed by the encoder output.
    encoder: Vec<Mat>,
    proj_hidden: Mat,
    proj_norms: Vec<f64>,
    embeddings: Mat,
}

#[derive(Debug, Clone)]
pub struct Model {
    config: ModelConfig,
    /// Encoder layers, then the two projector layers, then the classifier.
    layers: Vec<Linear>,
    cache: Option<Cache>,
}

fn relu_in_place(m: &mut Mat) {
    m.as_mut_slice().iter_mut().for_each(|v| *v = v.max(0.0));
}

/// Zeroes `g` wherever the ReLU output `act` is not positive.
fn relu_mask(g: &mut Mat, act: &Mat) {
    for (gv, &a) in g.as_mut_slice().iter_mut().zip(act.as_slice()) {
        if a <= 0.0 {
            *gv = 0.0;
        }
    }
}

impl Model {
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = rng(seed);
        let layers = config
            .layer_shapes()
            .into_iter()
            .map(|(i, o)| Linear::init(i, o, &mut rng))
            .collect();
        Ok(Self {
            config,
            layers,
            cache: None,
        })
    }

    /// Rebuilds a model from layers in declaration order.
    pub fn from_layers(config: ModelConfig, layers: Vec<Linear>) -> Result<Self> {
        config.validate()?;
        let shapes: Vec<_> = layers.iter().map(|l| (l.in_dim, l.out_dim)).collect();
        if shapes != config.layer_shapes()
            || layers
                .iter()
                .any(|l| l.weight.len() != l.in_dim * l.out_dim || l.bias.len() != l.out_dim)
        {
            return Err(Error::Argument("layer shapes do not match the model config".into()));
        }
        Ok(Self {
            config,
            layers,
            cache: None,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn layers(&self) -> &[Linear] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Linear] {
        &mut self.layers
    }

    fn encoder_len(&self) -> usize {
        self.config.hidden.len() + 1
    }

    pub fn classifier_mut(&mut self) -> &mut Linear {
        self.layers.last_mut().expect("classifier")
    }

    pub fn zero_grad(&mut self) {
        self.layers.iter_mut().for_each(Linear::zero_grad);
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(|l| l.weight.len() + l.bias.len()).sum()
    }

    /// Parameter and gradient buffers in declaration order (weight then bias
    /// of each layer).
    pub fn params_and_grads_mut(&mut self) -> Vec<(&mut [f64], &[f64])> {
        let mut out = Vec::with_capacity(2 * self.layers.len());
        for l in &mut self.layers {
            out.push((l.weight.as_mut_slice(), l.grad_weight.as_slice()));
            out.push((l.bias.as_mut_slice(), l.grad_bias.as_slice()));
        }
        out
    }

    fn locate(&self, mut index: usize) -> (usize, bool, usize) {
        for (li, l) in self.layers.iter().enumerate() {
            if index < l.weight.len() {
                return (li, true, index);
            }
            index -= l.weight.len();
            if index < l.bias.len() {
                return (li, false, index);
            }
            index -= l.bias.len();
        }
        panic!("parameter index out of range");
    }

    /// Flat parameter access in declaration order.
    pub fn param(&self, index: usize) -> f64 {
        let (l, w, i) = self.locate(index);
        if w {
            self.layers[l].weight[i]
        } else {
            self.layers[l].bias[i]
        }
    }

    pub fn set_param(&mut self, index: usize, value: f64) {
        let (l, w, i) = self.locate(index);
        if w {
            self.layers[l].weight[i] = value;
        } else {
            self.layers[l].bias[i] = value;
        }
    }

    pub fn grad(&self, index: usize) -> f64 {
        let (l, w, i) = self.locate(index);
        if w {
            self.layers[l].grad_weight[i]
        } else {
            self.layers[l].grad_bias[i]
        }
    }

    fn run(&self, feats: &Mat) -> Result<(ModelOutput, Cache)> {
        if feats.cols() != self.config.input_dim {
            return Err(Error::Argument(format!(
                "expected {} input features, got {}",
                self.config.input_dim,
                feats.cols()
            )));
        }
        if !feats.is_finite() {
            return Err(Error::Argument("input features are not finite".into()));
        }
        let n_enc = self.encoder_len();
        let mut encoder = Vec::with_capacity(n_enc + 1);
        let mut h = feats.clone();
        for (li, layer) in self.layers[..n_enc].iter().enumerate() {
            let mut z = layer.forward(&h);
            if !z.is_finite() {
                return Err(Error::Numeric { layer: li });
            }
            relu_in_place(&mut z);
            encoder.push(std::mem::replace(&mut h, z));
        }
        let features = h;

        let mut proj_hidden = self.layers[n_enc].forward(&features);
        if !proj_hidden.is_finite() {
            return Err(Error::Numeric { layer: n_enc });
        }
        relu_in_place(&mut proj_hidden);
        let mut embeddings = self.layers[n_enc + 1].forward(&proj_hidden);
        if !embeddings.is_finite() {
            return Err(Error::Numeric { layer: n_enc + 1 });
        }
        let mut proj_norms = Vec::with_capacity(embeddings.rows());
        for i in 0..embeddings.rows() {
            let row = embeddings.row_mut(i);
            let norm = dot(row, row).sqrt();
            if norm < NORM_EPS {
                row.fill(0.0);
                row[0] = 1.0;
            } else {
                row.iter_mut().for_each(|v| *v /= norm);
            }
            proj_norms.push(norm);
        }

        let logits = self.layers[n_enc + 2].forward(&features);
        if !logits.is_finite() {
            return Err(Error::Numeric { layer: n_enc + 2 });
        }
        encoder.push(features);
        let output = ModelOutput {
            embeddings: embeddings.clone(),
            logits,
        };
        Ok((
            output,
            Cache {
                encoder,
                proj_hidden,
                proj_norms,
                embeddings,
            },
        ))
    }

    /// Forward pass without touching the activation cache.
    pub fn infer(&self, feats: &Mat) -> Result<ModelOutput> {
        self.run(feats).map(|(out, _)| out)
    }

    /// Forward pass that keeps activations for one [`Model::backward`] call.
    pub fn forward(&mut self, feats: &Mat) -> Result<ModelOutput> {
        self.cache = None;
        let (out, cache) = self.run(feats)?;
        self.cache = Some(cache);
        Ok(out)
    }

    /// Argmax over logits; ties resolve to the lowest class index.
    pub fn predict(&self, feats: &Mat) -> Result<Vec<TrainId>> {
        let out = self.infer(feats)?;
        Ok(out
            .logits
            .iter_rows()
            .map(|row| {
                let mut best = 0;
                for (c, &v) in row.iter().enumerate() {
                    if v > row[best] {
                        best = c;
                    }
                }
                best as TrainId
            })
            .collect())
    }

    /// Back-propagates upstream gradients on the embeddings and logits of the
    /// last [`Model::forward`] call, adding into the gradient buffers. `None`
    /// stands for an all-zero upstream gradient.
    pub fn backward(&mut self, grad_embeddings: Option<&Mat>, grad_logits: Option<&Mat>) -> Result<()> {
        let cache = self
            .cache
            .take()
            .ok_or_else(|| Error::State("backward called without a cached forward pass".into()))?;
        let n = cache.embeddings.rows();
        let d = self.config.embed_dim;
        let c = self.config.num_classes;
        for (g, cols) in [(grad_embeddings, d), (grad_logits, c)] {
            if let Some(g) = g {
                if g.shape() != (n, cols) {
                    return Err(Error::Argument(format!(
                        "upstream gradient shape {:?}, expected {:?}",
                        g.shape(),
                        (n, cols)
                    )));
                }
            }
        }

        let n_enc = self.encoder_len();
        let features = cache.encoder.last().expect("encoder output");
        let mut g_features = Mat::zeros(n, d);

        if let Some(g_logits) = grad_logits {
            let g = self.layers[n_enc + 2].backward(features, g_logits, true).unwrap();
            axpy(1.0, g.as_slice(), g_features.as_mut_slice());
        }

        if let Some(g_f) = grad_embeddings {
            // d(v/|v|)/dv = (I - f fᵀ) / |v|
            let mut g_v = Mat::zeros(n, d);
            for i in 0..n {
                let norm = cache.proj_norms[i];
                if norm < NORM_EPS {
                    continue;
                }
                let f = cache.embeddings.row(i);
                let gf = g_f.row(i);
                let proj = dot(f, gf);
                for (k, gv) in g_v.row_mut(i).iter_mut().enumerate() {
                    *gv = (gf[k] - f[k] * proj) / norm;
                }
            }
            let mut g_hidden = self.layers[n_enc + 1]
                .backward(&cache.proj_hidden, &g_v, true)
                .unwrap();
            relu_mask(&mut g_hidden, &cache.proj_hidden);
            let g = self.layers[n_enc].backward(features, &g_hidden, true).unwrap();
            axpy(1.0, g.as_slice(), g_features.as_mut_slice());
        }

        let mut g_h = g_features;
        for li in (0..n_enc).rev() {
            relu_mask(&mut g_h, &cache.encoder[li + 1]);
            match self.layers[li].backward(&cache.encoder[li], &g_h, li > 0) {
                Some(g) => g_h = g,
                None => break,
            }
        }
        Ok(())
    }
}
