//! The confidence network: a fixed-shape chain of 3-D convolutions that
//! collapses an N×N×D cost-volume patch to a single confidence value.
//!
//! The chain is: input batch norm → (N−1)/2 fusion blocks of 3×3×3 valid
//! convolution + batch norm + ReLU (collapsing the spatial extent to 1×1
//! and the depth to D−(N−1)) → one depth block per entry of
//! `depth_kernels`, a 1×1×k depth-zero-padded convolution + batch norm +
//! ReLU → a two-layer head. The head's dense layers are realized as 1×1
//! spatial convolutions over the depth-flattened features, so the same
//! code path serves patch training and whole-image inference: applied to
//! a full cost volume padded by edge replication, the network emits a
//! dense confidence map in a single forward pass.
//!
//! All computation is serial with a fixed iteration order, so forward,
//! backward, and inference are bit-deterministic.

mod layers;
mod scalar;
mod tensor;

pub use layers::{
    apply_mask, batchnorm_backward, batchnorm_infer_forward, batchnorm_train_forward,
    conv3d_backward, conv3d_forward, dropout_mask, relu_backward, relu_forward, sigmoid,
    BnCache, ConvSpec,
};
pub use scalar::Scalar;
pub use tensor::Tensor4;

use std::io::Write;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::image::ConfidenceMap;
use crate::train::bce_loss;
use crate::volume::CostVolume;

const MODEL_MAGIC: &[u8; 4] = b"CVAM";
const MODEL_VERSION: u16 = 1;

/// Architecture and initialization hyper-parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct NetConfig {
    /// Receptive-field side length (odd); also the training patch side.
    pub n: usize,
    /// Expected cost-volume depth.
    pub d: usize,
    /// Filter count of every convolution body layer.
    pub channels: usize,
    /// Width of the hidden head layer.
    pub head: usize,
    /// Depth-kernel length per depth block.
    pub depth_kernels: Vec<usize>,
    /// Standard deviation of the normal conv-weight initialization.
    pub conv_init_std: f64,
    pub bn_eps: f64,
    /// Running-statistics momentum: `r ← m·r + (1−m)·batch`.
    pub bn_momentum: f64,
    /// Dropout rate of the head (train mode only).
    pub dropout: f64,
}

impl NetConfig {
    /// Full-size configuration: 13×13×256 patches, 32 channels,
    /// depth kernels 8, 16, 32, then seven of 64; 782,725 parameters.
    pub fn canonical() -> Self {
        NetConfig {
            n: 13,
            d: 256,
            channels: 32,
            head: 16,
            depth_kernels: vec![8, 16, 32, 64, 64, 64, 64, 64, 64, 64],
            conv_init_std: 0.05,
            bn_eps: 1e-5,
            bn_momentum: 0.9,
            dropout: 0.5,
        }
    }

    /// Desk-scale configuration for end-to-end training tests.
    pub fn reduced() -> Self {
        NetConfig {
            n: 7,
            d: 32,
            channels: 16,
            head: 16,
            depth_kernels: vec![8, 16, 32],
            conv_init_std: 0.05,
            bn_eps: 1e-5,
            bn_momentum: 0.9,
            dropout: 0.5,
        }
    }

    /// Minimal configuration for double-precision gradient checks.
    pub fn tiny() -> Self {
        NetConfig {
            n: 3,
            d: 8,
            channels: 4,
            head: 4,
            depth_kernels: vec![2, 3],
            conv_init_std: 0.05,
            bn_eps: 1e-5,
            bn_momentum: 0.9,
            dropout: 0.5,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 3 || self.n.is_multiple_of(2) {
            return Err(Error::InvalidArgument(format!(
                "patch side must be odd and ≥ 3, got {}",
                self.n
            )));
        }
        if self.d < self.n {
            return Err(Error::InvalidArgument(format!(
                "depth {} must exceed n−1 = {} or the fusion stack consumes it",
                self.d,
                self.n - 1
            )));
        }
        if self.channels == 0 || self.head == 0 {
            return Err(Error::InvalidArgument(
                "channel and head widths must be ≥ 1".into(),
            ));
        }
        if self.depth_kernels.is_empty() || self.depth_kernels.contains(&0) {
            return Err(Error::InvalidArgument(
                "depth kernels must be non-empty and each ≥ 1".into(),
            ));
        }
        if !(self.conv_init_std > 0.0 && self.conv_init_std.is_finite()) {
            return Err(Error::InvalidArgument(
                "conv init std must be positive and finite".into(),
            ));
        }
        if !(self.bn_eps > 0.0 && self.bn_eps.is_finite()) {
            return Err(Error::InvalidArgument("bn eps must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.bn_momentum) {
            return Err(Error::InvalidArgument(
                "bn momentum must lie in [0, 1]".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::InvalidArgument(
                "dropout rate must lie in [0, 1)".into(),
            ));
        }
        if self.depth_kernels.len() > 4096 {
            return Err(Error::InvalidArgument(format!(
                "implausible depth-kernel count {}",
                self.depth_kernels.len()
            )));
        }
        // Closed-form parameter budget in u128, so absurd dimensions (e.g.
        // from a corrupted checkpoint header) are rejected before any layout
        // loop or allocation could overflow or exhaust memory.
        let c = self.channels as u128;
        let h = self.head as u128;
        let fusion = self.fusion_convs() as u128;
        let kd_sum: u128 = self.depth_kernels.iter().map(|&k| k as u128).sum();
        let inner = self.inner_depth() as u128;
        let per_block_extra = 5 * c; // bias + scale/shift/mean/var
        let total = 4
            + (27 * c + per_block_extra)
            + (fusion - 1) * (27 * c * c + per_block_extra)
            + kd_sum * c * c
            + self.depth_kernels.len() as u128 * per_block_extra
            + inner * c * h
            + h
            + (h + 1);
        const MAX_PARAMS: u128 = 1 << 31;
        if total > MAX_PARAMS {
            return Err(Error::InvalidArgument(format!(
                "configuration implies {total} parameters, above the supported {MAX_PARAMS}"
            )));
        }
        Ok(())
    }

    /// Number of 3×3×3 fusion blocks: exactly enough to collapse an N×N
    /// patch to 1×1.
    pub fn fusion_convs(&self) -> usize {
        (self.n - 1) / 2
    }

    /// Spatial halo consumed around each output pixel.
    pub fn margin(&self) -> usize {
        (self.n - 1) / 2
    }

    /// Depth remaining after the fusion stack.
    pub fn inner_depth(&self) -> usize {
        self.d - (self.n - 1)
    }

    fn block_count(&self) -> usize {
        self.fusion_convs() + self.depth_kernels.len()
    }

    /// Convolution shape of body block `k` (fusion blocks first).
    fn block_spec(&self, k: usize) -> ConvSpec {
        let fusion = self.fusion_convs();
        if k < fusion {
            let cin = if k == 0 { 1 } else { self.channels };
            ConvSpec::valid(3, 3, 3, cin, self.channels)
        } else {
            ConvSpec::depth_padded(self.depth_kernels[k - fusion], self.channels, self.channels)
        }
    }

    fn fc1_spec(&self) -> ConvSpec {
        ConvSpec::valid(1, 1, self.inner_depth(), self.channels, self.head)
    }

    fn fc2_spec(&self) -> ConvSpec {
        ConvSpec::valid(1, 1, 1, self.head, 1)
    }

    /// Activation dimensions `(h, w, depth, channels)` after every layer
    /// stage for a single N×N×D patch.
    pub fn shape_chain(&self) -> Vec<(usize, usize, usize, usize)> {
        let mut dims = (self.n, self.n, self.d, 1usize);
        let mut chain = Vec::new();
        for k in 0..self.block_count() {
            let spec = self.block_spec(k);
            let (h, w, d) = spec
                .out_dims(dims.0, dims.1, dims.2)
                .expect("validated config");
            dims = (h, w, d, spec.cout);
            chain.push(dims);
        }
        for spec in [self.fc1_spec(), self.fc2_spec()] {
            let (h, w, d) = spec
                .out_dims(dims.0, dims.1, dims.2)
                .expect("validated config");
            dims = (h, w, d, spec.cout);
            chain.push(dims);
        }
        chain
    }

    /// Total parameter count, running statistics included.
    pub fn param_count(&self) -> usize {
        Layout::build(self).total
    }
}

/// One named contiguous slice of the flat parameter vector.
#[derive(Debug, Clone)]
pub struct Segment {
    pub name: String,
    pub offset: usize,
    pub len: usize,
    /// Whether the optimizer updates this slice (running statistics are
    /// state, not trainable parameters).
    pub trainable: bool,
}

#[derive(Debug, Clone, Copy)]
struct BnIdx {
    scale: usize,
    shift: usize,
    mean: usize,
    var: usize,
}

#[derive(Debug, Clone, Copy)]
struct ConvIdx {
    w: usize,
    b: usize,
}

#[derive(Debug, Clone, Copy)]
struct BlockIdx {
    conv: ConvIdx,
    bn: BnIdx,
}

/// Flat parameter layout: segments in network order.
#[derive(Debug, Clone)]
pub struct Layout {
    pub segments: Vec<Segment>,
    pub total: usize,
    input_bn: BnIdx,
    blocks: Vec<BlockIdx>,
    fc1: ConvIdx,
    fc2: ConvIdx,
}

#[derive(Default)]
struct LayoutBuilder {
    segments: Vec<Segment>,
    total: usize,
}

impl LayoutBuilder {
    fn push(&mut self, name: String, len: usize, trainable: bool) -> usize {
        let idx = self.segments.len();
        self.segments.push(Segment {
            name,
            offset: self.total,
            len,
            trainable,
        });
        self.total += len;
        idx
    }

    fn bn(&mut self, prefix: &str, c: usize) -> BnIdx {
        BnIdx {
            scale: self.push(format!("{prefix}.bn.scale"), c, true),
            shift: self.push(format!("{prefix}.bn.shift"), c, true),
            mean: self.push(format!("{prefix}.bn.mean"), c, false),
            var: self.push(format!("{prefix}.bn.var"), c, false),
        }
    }

    fn conv(&mut self, prefix: &str, spec: &ConvSpec) -> ConvIdx {
        ConvIdx {
            w: self.push(format!("{prefix}.w"), spec.weight_len(), true),
            b: self.push(format!("{prefix}.b"), spec.cout, true),
        }
    }
}

impl Layout {
    fn build(cfg: &NetConfig) -> Layout {
        let mut b = LayoutBuilder::default();
        let input_bn = b.bn("input", 1);
        let fusion = cfg.fusion_convs();
        let mut blocks = Vec::with_capacity(cfg.block_count());
        for k in 0..cfg.block_count() {
            let prefix = if k < fusion {
                format!("fusion{k}")
            } else {
                format!("depth{}", k - fusion)
            };
            let conv = b.conv(&format!("{prefix}.conv"), &cfg.block_spec(k));
            let bn = b.bn(&prefix, cfg.channels);
            blocks.push(BlockIdx { conv, bn });
        }
        let fc1 = b.conv("head.fc1", &cfg.fc1_spec());
        let fc2 = b.conv("head.fc2", &cfg.fc2_spec());
        Layout {
            segments: b.segments,
            total: b.total,
            input_bn,
            blocks,
            fc1,
            fc2,
        }
    }

    fn range(&self, idx: usize) -> std::ops::Range<usize> {
        let s = &self.segments[idx];
        s.offset..s.offset + s.len
    }

    /// Flat indices of every trainable parameter.
    pub fn trainable_indices(&self) -> Vec<usize> {
        self.segments
            .iter()
            .filter(|s| s.trainable)
            .flat_map(|s| s.offset..s.offset + s.len)
            .collect()
    }
}

/// Per-batch activations cached by the training forward pass.
pub struct TrainCache<S: Scalar> {
    bn0: BnCache<S>,
    /// `conv_in` of block k is the ReLU output of block k−1 (or the
    /// normalized input for k = 0).
    blocks: Vec<BlockCacheEntry<S>>,
    fc1_in: Vec<Tensor4<S>>,
    fc1_relu: Vec<Tensor4<S>>,
    masks: Vec<Vec<S>>,
    fc2_in: Vec<Tensor4<S>>,
    pub preds: Vec<S>,
}

struct BlockCacheEntry<S: Scalar> {
    conv_in: Vec<Tensor4<S>>,
    bn: BnCache<S>,
}

/// The network: a configuration plus one flat parameter vector.
#[derive(Debug, Clone)]
pub struct Network<S: Scalar> {
    config: NetConfig,
    layout: Layout,
    params: Vec<S>,
}

impl<S: Scalar> Network<S> {
    /// All-zero weights and biases; batch-norm scale and running variance
    /// set to one. Mostly useful in tests: the output is exactly 0.5.
    pub fn zeroed(config: NetConfig) -> Result<Self> {
        config.validate()?;
        let layout = Layout::build(&config);
        let mut params = vec![S::zero(); layout.total];
        for seg in &layout.segments {
            if seg.name.ends_with(".bn.scale") || seg.name.ends_with(".bn.var") {
                params[seg.offset..seg.offset + seg.len].fill(S::one());
            }
        }
        Ok(Network {
            config,
            layout,
            params,
        })
    }

    /// Seeded initialization: conv weights from a zero-mean normal with
    /// `conv_init_std`, head weights Glorot-uniform, biases zero,
    /// batch-norm scale 1 / shift 0 / running mean 0 / running var 1.
    pub fn init(config: NetConfig, seed: u64) -> Result<Self> {
        let mut net = Self::zeroed(config)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, net.config.conv_init_std)
            .expect("validated positive std");
        for k in 0..net.config.block_count() {
            let idx = net.layout.blocks[k].conv;
            for v in &mut net.params[net.layout.range(idx.w)] {
                *v = S::from_double(normal.sample(&mut rng));
            }
        }
        for (idx, spec) in [
            (net.layout.fc1, net.config.fc1_spec()),
            (net.layout.fc2, net.config.fc2_spec()),
        ] {
            let fan_in = spec.kh * spec.kw * spec.kd * spec.cin;
            let limit = (6.0 / (fan_in + spec.cout) as f64).sqrt();
            for v in &mut net.params[net.layout.range(idx.w)] {
                *v = S::from_double(rng.gen_range(-limit..limit));
            }
        }
        Ok(net)
    }

    pub fn from_params(config: NetConfig, params: Vec<S>) -> Result<Self> {
        config.validate()?;
        let layout = Layout::build(&config);
        if params.len() != layout.total {
            return Err(Error::InvalidArgument(format!(
                "expected {} parameters, got {}",
                layout.total,
                params.len()
            )));
        }
        Ok(Network {
            config,
            layout,
            params,
        })
    }

    pub fn config(&self) -> &NetConfig {
        &self.config
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn params(&self) -> &[S] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [S] {
        &mut self.params
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    fn seg(&self, idx: usize) -> &[S] {
        &self.params[self.layout.range(idx)]
    }

    fn check_patch(&self, t: &Tensor4<S>) -> Result<()> {
        let want = (self.config.n, self.config.n, self.config.d, 1);
        if t.dims() != want {
            return Err(Error::InvalidArgument(format!(
                "patch dims {:?} do not match the configured {:?}",
                t.dims(),
                want
            )));
        }
        Ok(())
    }

    /// Inference-mode pipeline over an arbitrary spatial extent: input
    /// `(h, w, D, 1)`, output `(h−(N−1), w−(N−1), 1, 1)` of sigmoid
    /// confidences.
    fn infer_pipeline(&self, x: Tensor4<S>) -> Result<Tensor4<S>> {
        let eps = self.config.bn_eps;
        let l = &self.layout;
        let mut cur = batchnorm_infer_forward(
            &x,
            self.seg(l.input_bn.scale),
            self.seg(l.input_bn.shift),
            self.seg(l.input_bn.mean),
            self.seg(l.input_bn.var),
            eps,
        )?;
        for (k, block) in l.blocks.iter().enumerate() {
            let spec = self.config.block_spec(k);
            let z = conv3d_forward(&cur, &spec, self.seg(block.conv.w), self.seg(block.conv.b))?;
            let nrm = batchnorm_infer_forward(
                &z,
                self.seg(block.bn.scale),
                self.seg(block.bn.shift),
                self.seg(block.bn.mean),
                self.seg(block.bn.var),
                eps,
            )?;
            cur = relu_forward(&nrm);
        }
        let z = conv3d_forward(&cur, &self.config.fc1_spec(), self.seg(l.fc1.w), self.seg(l.fc1.b))?;
        let hidden = relu_forward(&z); // dropout is the identity at inference
        let mut out = conv3d_forward(
            &hidden,
            &self.config.fc2_spec(),
            self.seg(l.fc2.w),
            self.seg(l.fc2.b),
        )?;
        for v in out.data_mut() {
            *v = sigmoid(*v);
        }
        Ok(out)
    }

    /// Inference-mode confidence for a batch of N×N×D patches.
    pub fn forward(&self, batch: &[Tensor4<S>]) -> Result<Vec<S>> {
        let mut preds = Vec::with_capacity(batch.len());
        for t in batch {
            self.check_patch(t)?;
            let out = self.infer_pipeline(t.clone())?;
            debug_assert_eq!(out.dims(), (1, 1, 1, 1));
            preds.push(out.data()[0]);
        }
        Ok(preds)
    }

    /// Training-mode forward pass: batch normalization uses joint batch
    /// statistics and dropout masks are drawn from `dropout_seed`.
    /// Running statistics are not touched; apply
    /// [`Network::update_running_stats`] with the returned cache to fold
    /// the batch statistics in.
    pub fn forward_train(
        &self,
        batch: &[Tensor4<S>],
        dropout_seed: u64,
    ) -> Result<(Vec<S>, TrainCache<S>)> {
        if batch.is_empty() {
            return Err(Error::InvalidArgument("empty training batch".into()));
        }
        for t in batch {
            self.check_patch(t)?;
        }
        let eps = self.config.bn_eps;
        let l = &self.layout;
        let mut rng = ChaCha8Rng::seed_from_u64(dropout_seed);

        let (bn0_out, bn0) = batchnorm_train_forward(
            batch,
            self.seg(l.input_bn.scale),
            self.seg(l.input_bn.shift),
            eps,
        )?;

        let mut blocks = Vec::with_capacity(l.blocks.len());
        let mut cur = bn0_out;
        for (k, block) in l.blocks.iter().enumerate() {
            let spec = self.config.block_spec(k);
            let mut z = Vec::with_capacity(cur.len());
            for t in &cur {
                z.push(conv3d_forward(t, &spec, self.seg(block.conv.w), self.seg(block.conv.b))?);
            }
            let (nrm, bn) = batchnorm_train_forward(
                &z,
                self.seg(block.bn.scale),
                self.seg(block.bn.shift),
                eps,
            )?;
            let out: Vec<Tensor4<S>> = nrm.iter().map(relu_forward).collect();
            blocks.push(BlockCacheEntry { conv_in: cur, bn });
            cur = out;
        }

        let fc1_spec = self.config.fc1_spec();
        let mut fc1_relu = Vec::with_capacity(cur.len());
        for t in &cur {
            let z = conv3d_forward(t, &fc1_spec, self.seg(l.fc1.w), self.seg(l.fc1.b))?;
            fc1_relu.push(relu_forward(&z));
        }
        let fc1_in = cur;

        let rate = self.config.dropout;
        let mut masks = Vec::with_capacity(fc1_relu.len());
        let mut fc2_in = Vec::with_capacity(fc1_relu.len());
        for t in &fc1_relu {
            let mask: Vec<S> = dropout_mask(t.len(), rate, &mut rng);
            fc2_in.push(apply_mask(t, &mask));
            masks.push(mask);
        }

        let fc2_spec = self.config.fc2_spec();
        let mut preds = Vec::with_capacity(fc2_in.len());
        for t in &fc2_in {
            let z = conv3d_forward(t, &fc2_spec, self.seg(l.fc2.w), self.seg(l.fc2.b))?;
            debug_assert_eq!(z.dims(), (1, 1, 1, 1));
            preds.push(sigmoid(z.data()[0]));
        }

        Ok((
            preds.clone(),
            TrainCache {
                bn0,
                blocks,
                fc1_in,
                fc1_relu,
                masks,
                fc2_in,
                preds,
            },
        ))
    }

    /// Backward pass for a cached training batch: returns the mean
    /// binary-cross-entropy loss and the gradient of every parameter in
    /// layout order (zero for the non-trainable running statistics).
    #[allow(clippy::needless_range_loop)] // one index walks several per-sample caches
    pub fn backward(&self, cache: &TrainCache<S>, labels: &[S]) -> Result<(f64, Vec<S>)> {
        let m = cache.preds.len();
        if labels.len() != m {
            return Err(Error::InvalidArgument(format!(
                "{} labels for a batch of {m}",
                labels.len()
            )));
        }
        if labels.iter().any(|&l| l != S::zero() && l != S::one()) {
            return Err(Error::InvalidArgument("labels must be 0 or 1".into()));
        }
        if cache.preds.iter().any(|p| !p.to_double().is_finite()) {
            return Err(Error::Numerical(
                "non-finite prediction at the sigmoid head".into(),
            ));
        }
        let loss = cache
            .preds
            .iter()
            .zip(labels)
            .map(|(&p, &l)| bce_loss(p.to_double(), l.to_double()))
            .sum::<f64>()
            / m as f64;
        if !loss.is_finite() {
            return Err(Error::Numerical(
                "non-finite training loss at the sigmoid head".into(),
            ));
        }

        let l = &self.layout;
        let mut grads = vec![S::zero(); l.total];
        let inv_m = S::from_double(1.0 / m as f64);

        // Head: sigmoid + BCE combine to (pred − label)/m at the logit.
        let fc2_spec = self.config.fc2_spec();
        let mut g: Vec<Tensor4<S>> = Vec::with_capacity(m);
        {
            let (dw, db) = conv_grad_slices(&mut grads, l, &l.fc2);
            for i in 0..m {
                let gz = Tensor4::from_vec(
                    1,
                    1,
                    1,
                    1,
                    vec![(cache.preds[i] - labels[i]) * inv_m],
                );
                g.push(conv3d_backward(
                    &cache.fc2_in[i],
                    &fc2_spec,
                    self.seg(l.fc2.w),
                    &gz,
                    dw,
                    db,
                ));
            }
        }

        // Dropout, then the head ReLU.
        let g: Vec<Tensor4<S>> = g
            .iter()
            .zip(&cache.masks)
            .map(|(t, mask)| apply_mask(t, mask))
            .collect();
        let g: Vec<Tensor4<S>> = cache
            .fc1_relu
            .iter()
            .zip(&g)
            .map(|(out, gt)| relu_backward(out, gt))
            .collect();

        let fc1_spec = self.config.fc1_spec();
        let mut g_body: Vec<Tensor4<S>> = Vec::with_capacity(m);
        {
            let (dw, db) = conv_grad_slices(&mut grads, l, &l.fc1);
            for i in 0..m {
                g_body.push(conv3d_backward(
                    &cache.fc1_in[i],
                    &fc1_spec,
                    self.seg(l.fc1.w),
                    &g[i],
                    dw,
                    db,
                ));
            }
        }
        let mut g = g_body;

        for k in (0..l.blocks.len()).rev() {
            let entry = &cache.blocks[k];
            let relu_out = if k + 1 < l.blocks.len() {
                &cache.blocks[k + 1].conv_in
            } else {
                &cache.fc1_in
            };
            let gz: Vec<Tensor4<S>> = relu_out
                .iter()
                .zip(&g)
                .map(|(out, gt)| relu_backward(out, gt))
                .collect();
            let block = &l.blocks[k];
            let (gconv, dscale, dshift) =
                batchnorm_backward(&entry.bn, self.seg(block.bn.scale), &gz);
            grads[l.range(block.bn.scale)].copy_from_slice(&dscale);
            grads[l.range(block.bn.shift)].copy_from_slice(&dshift);

            let spec = self.config.block_spec(k);
            let mut g_next = Vec::with_capacity(m);
            {
                let (dw, db) = conv_grad_slices(&mut grads, l, &block.conv);
                for i in 0..m {
                    g_next.push(conv3d_backward(
                        &entry.conv_in[i],
                        &spec,
                        self.seg(block.conv.w),
                        &gconv[i],
                        dw,
                        db,
                    ));
                }
            }
            g = g_next;
        }

        let (_, dscale0, dshift0) =
            batchnorm_backward(&cache.bn0, self.seg(l.input_bn.scale), &g);
        grads[l.range(l.input_bn.scale)].copy_from_slice(&dscale0);
        grads[l.range(l.input_bn.shift)].copy_from_slice(&dshift0);

        Ok((loss, grads))
    }

    /// Folds the cached batch statistics into the running statistics:
    /// `r ← momentum·r + (1−momentum)·batch`.
    pub fn update_running_stats(&mut self, cache: &TrainCache<S>) {
        let mom = S::from_double(self.config.bn_momentum);
        let upd = S::from_double(1.0 - self.config.bn_momentum);
        let mut apply = |mean_idx: usize, var_idx: usize, bn: &BnCache<S>| {
            let ranges = (self.layout.range(mean_idx), self.layout.range(var_idx));
            for (r, &b) in self.params[ranges.0].iter_mut().zip(&bn.mean) {
                *r = mom * *r + upd * b;
            }
            for (r, &b) in self.params[ranges.1].iter_mut().zip(&bn.var) {
                *r = mom * *r + upd * b;
            }
        };
        apply(
            self.layout.input_bn.mean,
            self.layout.input_bn.var,
            &cache.bn0,
        );
        let blocks: Vec<BlockIdx> = self.layout.blocks.clone();
        for (idx, entry) in blocks.iter().zip(&cache.blocks) {
            apply(idx.bn.mean, idx.bn.var, &entry.bn);
        }
    }

    fn check_volume(&self, vol: &CostVolume) -> Result<()> {
        if !vol.is_normalized() {
            return Err(Error::InvalidState(
                "inference requires a normalized cost volume".into(),
            ));
        }
        if vol.depth() != self.config.d {
            return Err(Error::InvalidArgument(format!(
                "cost volume depth {} does not match the configured {}",
                vol.depth(),
                self.config.d
            )));
        }
        Ok(())
    }

    /// Gathers the input region for an output tile, replicating edge
    /// pixels for out-of-bounds coordinates.
    fn gather_region(
        &self,
        vol: &CostVolume,
        x0: usize,
        y0: usize,
        tw: usize,
        th: usize,
    ) -> Tensor4<S> {
        let m = self.config.margin();
        let depth = vol.depth();
        let mut t = Tensor4::zeros(th + 2 * m, tw + 2 * m, depth, 1);
        for py in 0..th + 2 * m {
            let vy = (y0 + py) as isize - m as isize;
            let vy = vy.clamp(0, vol.height() as isize - 1) as usize;
            for px in 0..tw + 2 * m {
                let vx = (x0 + px) as isize - m as isize;
                let vx = vx.clamp(0, vol.width() as isize - 1) as usize;
                for d in 0..depth {
                    t.set(py, px, d, 0, S::from_single(vol.get(vx, vy, d)));
                }
            }
        }
        t
    }

    /// Whole-image inference in one fully-convolutional pass: every pixel
    /// receives the confidence of its edge-replicated N×N×D patch.
    pub fn infer_full(&self, vol: &CostVolume) -> Result<ConfidenceMap> {
        self.infer_tiled(vol, vol.width().max(vol.height()))
    }

    /// Tiled inference with identical results to [`Network::infer_full`]
    /// but peak memory bounded by the tile size.
    pub fn infer_tiled(&self, vol: &CostVolume, tile: usize) -> Result<ConfidenceMap> {
        self.check_volume(vol)?;
        if tile == 0 {
            return Err(Error::InvalidArgument("tile size must be ≥ 1".into()));
        }
        let (w, h) = (vol.width(), vol.height());
        let mut values = vec![0.0f32; w * h];
        for y0 in (0..h).step_by(tile) {
            let th = tile.min(h - y0);
            for x0 in (0..w).step_by(tile) {
                let tw = tile.min(w - x0);
                let input = self.gather_region(vol, x0, y0, tw, th);
                let out = self.infer_pipeline(input)?;
                debug_assert_eq!(out.dims(), (th, tw, 1, 1));
                for yy in 0..th {
                    for xx in 0..tw {
                        values[(y0 + yy) * w + x0 + xx] = out.get(yy, xx, 0, 0).to_single();
                    }
                }
            }
        }
        ConfidenceMap::new(w, h, values)
    }

    /// Saves the checkpoint: magic, version, configuration, then the
    /// parameter vector as 32-bit little-endian floats in layout order.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut out = Vec::with_capacity(64 + self.params.len() * 4);
        out.extend_from_slice(MODEL_MAGIC);
        out.extend_from_slice(&MODEL_VERSION.to_le_bytes());
        out.extend_from_slice(&0u16.to_le_bytes());
        for v in [
            self.config.n,
            self.config.d,
            self.config.channels,
            self.config.head,
            self.config.depth_kernels.len(),
        ] {
            out.extend_from_slice(&(v as u32).to_le_bytes());
        }
        for &k in &self.config.depth_kernels {
            out.extend_from_slice(&(k as u32).to_le_bytes());
        }
        for v in [
            self.config.conv_init_std,
            self.config.bn_eps,
            self.config.bn_momentum,
            self.config.dropout,
        ] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out.extend_from_slice(&(self.params.len() as u64).to_le_bytes());
        for v in &self.params {
            out.extend_from_slice(&v.to_single().to_le_bytes());
        }
        let mut file = std::io::BufWriter::new(std::fs::File::create(path)?);
        file.write_all(&out)?;
        Ok(())
    }

    /// Loads a checkpoint saved by [`Network::save`].
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path)?;
        let mut r = ByteReader::new(&bytes, path);

        let magic = r.take(4)?;
        if magic != MODEL_MAGIC {
            return Err(r.format_at(0, "bad magic, expected \"CVAM\""));
        }
        let version = r.u16()?;
        if version != MODEL_VERSION {
            return Err(r.format_at(4, format!("unsupported version {version}")));
        }
        let reserved = r.u16()?;
        if reserved != 0 {
            return Err(r.format_at(6, "reserved bytes must be zero"));
        }
        let n = r.u32()? as usize;
        let d = r.u32()? as usize;
        let channels = r.u32()? as usize;
        let head = r.u32()? as usize;
        let kernel_count = r.u32()? as usize;
        if kernel_count > 4096 {
            return Err(r.format_here(format!("implausible kernel count {kernel_count}")));
        }
        let mut depth_kernels = Vec::with_capacity(kernel_count);
        for _ in 0..kernel_count {
            depth_kernels.push(r.u32()? as usize);
        }
        let conv_init_std = r.f64()?;
        let bn_eps = r.f64()?;
        let bn_momentum = r.f64()?;
        let dropout = r.f64()?;
        let config = NetConfig {
            n,
            d,
            channels,
            head,
            depth_kernels,
            conv_init_std,
            bn_eps,
            bn_momentum,
            dropout,
        };
        if let Err(e) = config.validate() {
            return Err(r.format_here(format!("invalid stored configuration: {e}")));
        }
        let layout = Layout::build(&config);
        let count = r.u64()?;
        if count != layout.total as u64 {
            return Err(r.format_here(format!(
                "parameter count {count} does not match the configuration's {}",
                layout.total
            )));
        }
        let declared = count
            .checked_mul(4)
            .ok_or_else(|| r.format_here("parameter byte size overflows"))?;
        if r.remaining() as u64 != declared {
            return Err(r.format_here(format!(
                "expected {declared} parameter bytes, found {}",
                r.remaining()
            )));
        }
        let mut params = Vec::with_capacity(layout.total);
        for _ in 0..layout.total {
            let off = r.offset();
            let v = r.f32()?;
            if !v.is_finite() {
                return Err(r.format_at(off, format!("non-finite parameter {v}")));
            }
            params.push(S::from_single(v));
        }
        Ok(Network {
            config,
            layout,
            params,
        })
    }

    /// Loads a checkpoint and verifies it was saved with `expected`.
    pub fn load_expecting(path: impl AsRef<Path>, expected: &NetConfig) -> Result<Self> {
        let path = path.as_ref();
        let net = Self::load(path)?;
        if net.config != *expected {
            return Err(Error::format(
                path,
                8,
                "checkpoint configuration does not match the expected one",
            ));
        }
        Ok(net)
    }
}

fn mean_bce<S: Scalar>(preds: &[S], labels: &[S]) -> f64 {
    preds
        .iter()
        .zip(labels)
        .map(|(&p, &l)| bce_loss(p.to_double(), l.to_double()))
        .sum::<f64>()
        / preds.len() as f64
}

/// Compares analytic gradients against central finite differences of the
/// mean batch loss at the current parameters, probing `indices` (every
/// trainable parameter when `None`). Returns the maximum relative error;
/// parameters are restored on return. Use a double-precision network —
/// single precision cannot resolve the differences.
pub fn gradient_check<S: Scalar>(
    net: &mut Network<S>,
    batch: &[Tensor4<S>],
    labels: &[S],
    dropout_seed: u64,
    indices: Option<&[usize]>,
    step: f64,
) -> Result<f64> {
    let (_, cache) = net.forward_train(batch, dropout_seed)?;
    let (_, grads) = net.backward(&cache, labels)?;
    let all: Vec<usize>;
    let probe: &[usize] = match indices {
        Some(ix) => ix,
        None => {
            all = net.layout().trainable_indices();
            &all
        }
    };
    let mut worst = 0.0f64;
    for &i in probe {
        let orig = net.params()[i];
        net.params_mut()[i] = orig + S::from_double(step);
        let (hi, _) = net.forward_train(batch, dropout_seed)?;
        net.params_mut()[i] = orig - S::from_double(step);
        let (lo, _) = net.forward_train(batch, dropout_seed)?;
        net.params_mut()[i] = orig;
        let numeric = (mean_bce(&hi, labels) - mean_bce(&lo, labels)) / (2.0 * step);
        let analytic = grads[i].to_double();
        let err = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6);
        worst = worst.max(err);
    }
    Ok(worst)
}

/// Adjacent weight+bias gradient slices for one convolution.
fn conv_grad_slices<'a, S: Scalar>(
    grads: &'a mut [S],
    layout: &Layout,
    idx: &ConvIdx,
) -> (&'a mut [S], &'a mut [S]) {
    let w = &layout.segments[idx.w];
    let b = &layout.segments[idx.b];
    debug_assert_eq!(w.offset + w.len, b.offset);
    grads[w.offset..b.offset + b.len].split_at_mut(w.len)
}

/// Little-endian cursor with path-carrying format errors.
struct ByteReader<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl<'a> ByteReader<'a> {
    fn new(bytes: &'a [u8], path: &'a Path) -> Self {
        ByteReader {
            bytes,
            pos: 0,
            path,
        }
    }

    fn offset(&self) -> u64 {
        self.pos as u64
    }

    fn remaining(&self) -> usize {
        self.bytes.len() - self.pos
    }

    fn format_at(&self, offset: u64, message: impl Into<String>) -> Error {
        Error::format(self.path, offset, message)
    }

    fn format_here(&self, message: impl Into<String>) -> Error {
        self.format_at(self.offset(), message)
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.remaining() < n {
            return Err(self.format_here("unexpected end of file"));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f32(&mut self) -> Result<f32> {
        Ok(f32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}
