//! Layer kernels: 3-D convolution, batch normalization, ReLU, sigmoid,
//! and dropout, each with forward and backward passes. All loops are
//! serial with a fixed iteration order, so results are deterministic.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::scalar::Scalar;
use super::tensor::Tensor4;
use crate::error::{Error, Result};

/// Shape of one 3-D convolution.
///
/// Height and width always use valid semantics. With `depth_pad` the
/// depth axis is zero-padded so the output depth equals the input depth;
/// the padding splits as `(kd−1)/2` before and the remainder after, so
/// even kernels pad one more at the far end.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConvSpec {
    pub kh: usize,
    pub kw: usize,
    pub kd: usize,
    pub cin: usize,
    pub cout: usize,
    pub depth_pad: bool,
}

impl ConvSpec {
    pub fn valid(kh: usize, kw: usize, kd: usize, cin: usize, cout: usize) -> Self {
        ConvSpec {
            kh,
            kw,
            kd,
            cin,
            cout,
            depth_pad: false,
        }
    }

    pub fn depth_padded(kd: usize, cin: usize, cout: usize) -> Self {
        ConvSpec {
            kh: 1,
            kw: 1,
            kd,
            cin,
            cout,
            depth_pad: true,
        }
    }

    pub fn weight_len(&self) -> usize {
        self.kh * self.kw * self.kd * self.cin * self.cout
    }

    fn pad_front(&self) -> usize {
        if self.depth_pad {
            (self.kd - 1) / 2
        } else {
            0
        }
    }

    pub fn out_dims(&self, h: usize, w: usize, d: usize) -> Result<(usize, usize, usize)> {
        if self.kh == 0 || self.kw == 0 || self.kd == 0 || self.cin == 0 || self.cout == 0 {
            return Err(Error::InvalidArgument(
                "convolution kernel dims and channel counts must be ≥ 1".into(),
            ));
        }
        if h < self.kh || w < self.kw {
            return Err(Error::InvalidArgument(format!(
                "input {h}x{w} smaller than {}x{} kernel",
                self.kh, self.kw
            )));
        }
        let od = if self.depth_pad {
            d
        } else if d < self.kd {
            return Err(Error::InvalidArgument(format!(
                "input depth {d} smaller than kernel depth {}",
                self.kd
            )));
        } else {
            d - self.kd + 1
        };
        Ok((h - self.kh + 1, w - self.kw + 1, od))
    }

    fn check_params<S>(&self, input: &Tensor4<S>, w: &[S], b: &[S]) -> Result<()>
    where
        S: Scalar,
    {
        if input.channels() != self.cin {
            return Err(Error::InvalidArgument(format!(
                "input has {} channels, kernel expects {}",
                input.channels(),
                self.cin
            )));
        }
        if w.len() != self.weight_len() || b.len() != self.cout {
            return Err(Error::InvalidArgument(
                "kernel parameter length mismatch".into(),
            ));
        }
        Ok(())
    }
}

/// Valid or depth-padded 3-D convolution.
///
/// Weights are laid out `(ky, kx, kd, cin, cout)` with `cout` fastest.
pub fn conv3d_forward<S: Scalar>(
    input: &Tensor4<S>,
    spec: &ConvSpec,
    w: &[S],
    b: &[S],
) -> Result<Tensor4<S>> {
    spec.check_params(input, w, b)?;
    let (ih, iw, id, _) = input.dims();
    let (oh, ow, od) = spec.out_dims(ih, iw, id)?;
    let pad = spec.pad_front();
    let (cin, cout) = (spec.cin, spec.cout);

    let mut out = Tensor4::zeros(oh, ow, od, cout);
    let idat = input.data();
    let odat = out.data_mut();
    for oy in 0..oh {
        for ox in 0..ow {
            for oz in 0..od {
                let obase = ((oy * ow + ox) * od + oz) * cout;
                let orow = &mut odat[obase..obase + cout];
                orow.copy_from_slice(b);
                for ky in 0..spec.kh {
                    for kx in 0..spec.kw {
                        for kz in 0..spec.kd {
                            let iz = match (oz + kz).checked_sub(pad) {
                                Some(iz) if iz < id => iz,
                                _ => continue, // zero padding
                            };
                            let ibase =
                                (((oy + ky) * iw + (ox + kx)) * id + iz) * cin;
                            let wbase = (((ky * spec.kw + kx) * spec.kd + kz) * cin) * cout;
                            for ci in 0..cin {
                                let v = idat[ibase + ci];
                                if v == S::zero() {
                                    continue; // ReLU inputs are often sparse
                                }
                                let wrow = &w[wbase + ci * cout..wbase + (ci + 1) * cout];
                                for (o, &wv) in orow.iter_mut().zip(wrow) {
                                    *o = *o + v * wv;
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Backward pass of [`conv3d_forward`]: accumulates weight and bias
/// gradients into `dw`/`db` and returns the input gradient.
pub fn conv3d_backward<S: Scalar>(
    input: &Tensor4<S>,
    spec: &ConvSpec,
    w: &[S],
    gout: &Tensor4<S>,
    dw: &mut [S],
    db: &mut [S],
) -> Tensor4<S> {
    let (ih, iw, id, _) = input.dims();
    let (oh, ow, od, oc) = gout.dims();
    debug_assert_eq!(oc, spec.cout);
    debug_assert_eq!(dw.len(), spec.weight_len());
    debug_assert_eq!(db.len(), spec.cout);
    let pad = spec.pad_front();
    let (cin, cout) = (spec.cin, spec.cout);

    let mut din = Tensor4::zeros(ih, iw, id, cin);
    let idat = input.data();
    let gdat = gout.data();
    let ddat = din.data_mut();
    for oy in 0..oh {
        for ox in 0..ow {
            for oz in 0..od {
                let gbase = ((oy * ow + ox) * od + oz) * cout;
                let grow = &gdat[gbase..gbase + cout];
                for (d, &g) in db.iter_mut().zip(grow) {
                    *d = *d + g;
                }
                for ky in 0..spec.kh {
                    for kx in 0..spec.kw {
                        for kz in 0..spec.kd {
                            let iz = match (oz + kz).checked_sub(pad) {
                                Some(iz) if iz < id => iz,
                                _ => continue,
                            };
                            let ibase =
                                (((oy + ky) * iw + (ox + kx)) * id + iz) * cin;
                            let wbase = (((ky * spec.kw + kx) * spec.kd + kz) * cin) * cout;
                            for ci in 0..cin {
                                let v = idat[ibase + ci];
                                let off = wbase + ci * cout;
                                let wrow = &w[off..off + cout];
                                let dwrow = &mut dw[off..off + cout];
                                let mut acc = S::zero();
                                for co in 0..cout {
                                    let g = grow[co];
                                    dwrow[co] = dwrow[co] + v * g;
                                    acc = acc + wrow[co] * g;
                                }
                                ddat[ibase + ci] = ddat[ibase + ci] + acc;
                            }
                        }
                    }
                }
            }
        }
    }
    din
}

/// Batch statistics cached by the training-mode forward pass.
#[derive(Debug, Clone)]
pub struct BnCache<S> {
    pub mean: Vec<S>,
    /// Biased (population) variance per channel.
    pub var: Vec<S>,
    pub inv_std: Vec<S>,
    /// Normalized activations, needed by the backward pass.
    pub xhat: Vec<Tensor4<S>>,
    /// Elements per channel across the whole batch.
    pub count: usize,
}

fn check_bn_batch<S: Scalar>(batch: &[Tensor4<S>], param_len: usize) -> Result<usize> {
    let first = batch.first().ok_or_else(|| {
        Error::InvalidArgument("batch normalization requires a non-empty batch".into())
    })?;
    let c = first.channels();
    if param_len != c {
        return Err(Error::InvalidArgument(format!(
            "batch-norm parameter length {param_len} does not match {c} channels"
        )));
    }
    if batch.iter().any(|t| t.dims() != first.dims()) {
        return Err(Error::InvalidArgument(
            "batch tensors must share one shape".into(),
        ));
    }
    Ok(c)
}

/// Training-mode batch normalization over a whole batch jointly: each
/// channel is normalized by the biased batch statistics, then scaled and
/// shifted. Sums are accumulated in double precision in index order.
pub fn batchnorm_train_forward<S: Scalar>(
    batch: &[Tensor4<S>],
    scale: &[S],
    shift: &[S],
    eps: f64,
) -> Result<(Vec<Tensor4<S>>, BnCache<S>)> {
    let c = check_bn_batch(batch, scale.len())?;
    if shift.len() != c {
        return Err(Error::InvalidArgument(
            "batch-norm shift length mismatch".into(),
        ));
    }
    let per_tensor = batch[0].len() / c;
    let count = per_tensor * batch.len();

    let mut sums = vec![0.0f64; c];
    for t in batch {
        for chunk in t.data().chunks_exact(c) {
            for (s, &v) in sums.iter_mut().zip(chunk) {
                *s += v.to_double();
            }
        }
    }
    let mean: Vec<f64> = sums.iter().map(|s| s / count as f64).collect();

    let mut sq = vec![0.0f64; c];
    for t in batch {
        for chunk in t.data().chunks_exact(c) {
            for ((s, &v), m) in sq.iter_mut().zip(chunk).zip(&mean) {
                let d = v.to_double() - m;
                *s += d * d;
            }
        }
    }
    let var: Vec<f64> = sq.iter().map(|s| s / count as f64).collect();
    let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + eps).sqrt()).collect();

    let mut xhat = Vec::with_capacity(batch.len());
    let mut out = Vec::with_capacity(batch.len());
    for t in batch {
        let (h, w, d, _) = t.dims();
        let mut xh = Tensor4::zeros(h, w, d, c);
        let mut o = Tensor4::zeros(h, w, d, c);
        let (xd, od) = (xh.data_mut(), o.data_mut());
        for (i, &v) in t.data().iter().enumerate() {
            let ch = i % c;
            let n = (v.to_double() - mean[ch]) * inv_std[ch];
            xd[i] = S::from_double(n);
            od[i] = scale[ch] * xd[i] + shift[ch];
        }
        xhat.push(xh);
        out.push(o);
    }

    let cache = BnCache {
        mean: mean.iter().map(|&m| S::from_double(m)).collect(),
        var: var.iter().map(|&v| S::from_double(v)).collect(),
        inv_std: inv_std.iter().map(|&v| S::from_double(v)).collect(),
        xhat,
        count,
    };
    Ok((out, cache))
}

/// Inference-mode batch normalization with running statistics.
pub fn batchnorm_infer_forward<S: Scalar>(
    input: &Tensor4<S>,
    scale: &[S],
    shift: &[S],
    mean: &[S],
    var: &[S],
    eps: f64,
) -> Result<Tensor4<S>> {
    let c = input.channels();
    if scale.len() != c || shift.len() != c || mean.len() != c || var.len() != c {
        return Err(Error::InvalidArgument(
            "batch-norm parameter length mismatch".into(),
        ));
    }
    // Pre-fold the affine map: y = x·(γ/σ) + (β − μ·γ/σ).
    let mut mul = vec![S::zero(); c];
    let mut add = vec![S::zero(); c];
    for ch in 0..c {
        let inv = 1.0 / (var[ch].to_double().max(0.0) + eps).sqrt();
        let m = scale[ch].to_double() * inv;
        mul[ch] = S::from_double(m);
        add[ch] = S::from_double(shift[ch].to_double() - mean[ch].to_double() * m);
    }
    let (h, w, d, _) = input.dims();
    let mut out = Tensor4::zeros(h, w, d, c);
    let od = out.data_mut();
    for (i, &v) in input.data().iter().enumerate() {
        let ch = i % c;
        od[i] = v * mul[ch] + add[ch];
    }
    Ok(out)
}

/// Backward pass of training-mode batch normalization, differentiating
/// through the batch statistics. Returns `(d_input, d_scale, d_shift)`.
pub fn batchnorm_backward<S: Scalar>(
    cache: &BnCache<S>,
    scale: &[S],
    gout: &[Tensor4<S>],
) -> (Vec<Tensor4<S>>, Vec<S>, Vec<S>) {
    let c = scale.len();
    let m = cache.count as f64;

    let mut dshift = vec![0.0f64; c];
    let mut dscale = vec![0.0f64; c];
    for (g, xh) in gout.iter().zip(&cache.xhat) {
        for (i, &gv) in g.data().iter().enumerate() {
            let ch = i % c;
            dshift[ch] += gv.to_double();
            dscale[ch] += gv.to_double() * xh.data()[i].to_double();
        }
    }

    // dx = γ·inv_std·(g − (dβ + x̂·dγ)/m)
    let mut din = Vec::with_capacity(gout.len());
    for (g, xh) in gout.iter().zip(&cache.xhat) {
        let (h, w, d, _) = g.dims();
        let mut t = Tensor4::zeros(h, w, d, c);
        let td = t.data_mut();
        for (i, &gv) in g.data().iter().enumerate() {
            let ch = i % c;
            let v = scale[ch].to_double()
                * cache.inv_std[ch].to_double()
                * (gv.to_double()
                    - (dshift[ch] + xh.data()[i].to_double() * dscale[ch]) / m);
            td[i] = S::from_double(v);
        }
        din.push(t);
    }
    let dscale = dscale.iter().map(|&v| S::from_double(v)).collect();
    let dshift = dshift.iter().map(|&v| S::from_double(v)).collect();
    (din, dscale, dshift)
}

pub fn relu_forward<S: Scalar>(t: &Tensor4<S>) -> Tensor4<S> {
    let (h, w, d, c) = t.dims();
    let data = t
        .data()
        .iter()
        .map(|&v| if v > S::zero() { v } else { S::zero() })
        .collect();
    Tensor4::from_vec(h, w, d, c, data)
}

/// ReLU backward using the forward output as the activity mask.
pub fn relu_backward<S: Scalar>(out: &Tensor4<S>, gout: &Tensor4<S>) -> Tensor4<S> {
    let (h, w, d, c) = out.dims();
    let data = out
        .data()
        .iter()
        .zip(gout.data())
        .map(|(&o, &g)| if o > S::zero() { g } else { S::zero() })
        .collect();
    Tensor4::from_vec(h, w, d, c, data)
}

/// Numerically stable logistic sigmoid.
pub fn sigmoid<S: Scalar>(z: S) -> S {
    if z >= S::zero() {
        S::one() / (S::one() + (-z).exp())
    } else {
        let e = z.exp();
        e / (S::one() + e)
    }
}

/// Inverted-scaling dropout mask: each element is 0 with probability
/// `rate`, otherwise `1/(1−rate)`, so inference needs no rescaling.
pub fn dropout_mask<S: Scalar>(len: usize, rate: f64, rng: &mut ChaCha8Rng) -> Vec<S> {
    debug_assert!((0.0..1.0).contains(&rate));
    let keep = S::from_double(1.0 / (1.0 - rate));
    (0..len)
        .map(|_| {
            if rng.gen::<f64>() < rate {
                S::zero()
            } else {
                keep
            }
        })
        .collect()
}

/// Elementwise product with a dropout mask; also its own backward pass.
pub fn apply_mask<S: Scalar>(t: &Tensor4<S>, mask: &[S]) -> Tensor4<S> {
    let (h, w, d, c) = t.dims();
    debug_assert_eq!(t.len(), mask.len());
    let data = t
        .data()
        .iter()
        .zip(mask)
        .map(|(&v, &m)| v * m)
        .collect();
    Tensor4::from_vec(h, w, d, c, data)
}
