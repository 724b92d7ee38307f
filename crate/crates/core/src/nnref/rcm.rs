//! Rectangular self-calibration block.
//!
//! Horizontal and vertical strip pooling followed by 1-D depthwise
//! convolutions build directional context; a 1×1 fusion of the two broadcast
//! context maps feeds a compact calibration head whose sigmoid output gates a
//! depthwise detail branch. A 1×1 projection re-enters the residual path, so
//! with the projection zero-initialized the block is the identity.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::ops::{sigmoid, Conv2d, ConvGrads, DwConv2d};
use super::tensor::Tensor;
use super::{NnError, ParamGroups};

#[derive(Debug, Clone)]
pub struct RcmParams {
    pub channels: usize,
    /// 1-D depthwise convolution (kernel 7) along height over the
    /// width-collapsed profile.
    pub h_ctx: DwConv2d,
    /// 1-D depthwise convolution (kernel 7) along width over the
    /// height-collapsed profile.
    pub v_ctx: DwConv2d,
    /// 1×1 fusion of the concatenated directional context, 2C -> C.
    pub fuse: Conv2d,
    /// Calibration head: 3×3 depthwise then 1×1 dense.
    pub calib_dw: DwConv2d,
    pub calib_pw: Conv2d,
    /// 3×3 depthwise local detail branch.
    pub detail: DwConv2d,
    /// Output 1×1 projection back onto the residual path.
    pub proj: Conv2d,
}

pub const RCM_CTX_KERNEL: usize = 7;

impl RcmParams {
    /// Default initialization: random everywhere except the output
    /// projection, which starts at zero so the block is exactly the identity.
    pub fn seeded(channels: usize, seed: u64) -> Result<Self, NnError> {
        let mut p = Self::seeded_dense(channels, seed)?;
        p.proj = Conv2d::zeros(channels, channels, 1);
        Ok(p)
    }

    /// Fully random initialization including the projection; used by the
    /// gradient checker, where a zero projection would zero out most
    /// parameter gradients.
    pub fn seeded_dense(channels: usize, seed: u64) -> Result<Self, NnError> {
        if channels == 0 {
            return Err(NnError::ZeroChannels);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Ok(RcmParams {
            channels,
            h_ctx: DwConv2d::seeded(channels, RCM_CTX_KERNEL, 1, &mut rng),
            v_ctx: DwConv2d::seeded(channels, RCM_CTX_KERNEL, 1, &mut rng),
            fuse: Conv2d::seeded(2 * channels, channels, 1, &mut rng),
            calib_dw: DwConv2d::seeded(channels, 3, 3, &mut rng),
            calib_pw: Conv2d::seeded(channels, channels, 1, &mut rng),
            detail: DwConv2d::seeded(channels, 3, 3, &mut rng),
            proj: Conv2d::seeded(channels, channels, 1, &mut rng),
        })
    }
}

impl ParamGroups for RcmParams {
    fn groups(&self) -> Vec<(&'static str, &[f64])> {
        vec![
            ("h_ctx.w", &self.h_ctx.w),
            ("h_ctx.b", &self.h_ctx.b),
            ("v_ctx.w", &self.v_ctx.w),
            ("v_ctx.b", &self.v_ctx.b),
            ("fuse.w", &self.fuse.w),
            ("fuse.b", &self.fuse.b),
            ("calib_dw.w", &self.calib_dw.w),
            ("calib_dw.b", &self.calib_dw.b),
            ("calib_pw.w", &self.calib_pw.w),
            ("calib_pw.b", &self.calib_pw.b),
            ("detail.w", &self.detail.w),
            ("detail.b", &self.detail.b),
            ("proj.w", &self.proj.w),
            ("proj.b", &self.proj.b),
        ]
    }

    fn groups_mut(&mut self) -> Vec<(&'static str, &mut [f64])> {
        vec![
            ("h_ctx.w", &mut self.h_ctx.w),
            ("h_ctx.b", &mut self.h_ctx.b),
            ("v_ctx.w", &mut self.v_ctx.w),
            ("v_ctx.b", &mut self.v_ctx.b),
            ("fuse.w", &mut self.fuse.w),
            ("fuse.b", &mut self.fuse.b),
            ("calib_dw.w", &mut self.calib_dw.w),
            ("calib_dw.b", &mut self.calib_dw.b),
            ("calib_pw.w", &mut self.calib_pw.w),
            ("calib_pw.b", &mut self.calib_pw.b),
            ("detail.w", &mut self.detail.w),
            ("detail.b", &mut self.detail.b),
            ("proj.w", &mut self.proj.w),
            ("proj.b", &mut self.proj.b),
        ]
    }

    fn group_shapes(&self) -> Vec<(&'static str, Vec<usize>)> {
        let c = self.channels;
        vec![
            ("h_ctx.w", vec![c, RCM_CTX_KERNEL]),
            ("h_ctx.b", vec![c]),
            ("v_ctx.w", vec![c, RCM_CTX_KERNEL]),
            ("v_ctx.b", vec![c]),
            ("fuse.w", vec![c, 2 * c, 1, 1]),
            ("fuse.b", vec![c]),
            ("calib_dw.w", vec![c, 3, 3]),
            ("calib_dw.b", vec![c]),
            ("calib_pw.w", vec![c, c, 1, 1]),
            ("calib_pw.b", vec![c]),
            ("detail.w", vec![c, 3, 3]),
            ("detail.b", vec![c]),
            ("proj.w", vec![c, c, 1, 1]),
            ("proj.b", vec![c]),
        ]
    }
}

#[derive(Debug, Clone)]
pub struct RcmGrads {
    pub h_ctx: ConvGrads,
    pub v_ctx: ConvGrads,
    pub fuse: ConvGrads,
    pub calib_dw: ConvGrads,
    pub calib_pw: ConvGrads,
    pub detail: ConvGrads,
    pub proj: ConvGrads,
}

impl RcmGrads {
    pub fn groups(&self) -> Vec<(&'static str, &[f64])> {
        vec![
            ("h_ctx.w", &self.h_ctx.w[..]),
            ("h_ctx.b", &self.h_ctx.b),
            ("v_ctx.w", &self.v_ctx.w),
            ("v_ctx.b", &self.v_ctx.b),
            ("fuse.w", &self.fuse.w),
            ("fuse.b", &self.fuse.b),
            ("calib_dw.w", &self.calib_dw.w),
            ("calib_dw.b", &self.calib_dw.b),
            ("calib_pw.w", &self.calib_pw.w),
            ("calib_pw.b", &self.calib_pw.b),
            ("detail.w", &self.detail.w),
            ("detail.b", &self.detail.b),
            ("proj.w", &self.proj.w),
            ("proj.b", &self.proj.b),
        ]
    }
}

struct RcmCache {
    col: Tensor,
    row: Tensor,
    xh1d: Tensor,
    xv1d: Tensor,
    concat: Tensor,
    fused: Tensor,
    calib_mid: Tensor,
    calib_out: Tensor,
    w_map: Tensor,
    detail_out: Tensor,
    gated: Tensor,
}

/// Width-collapsed profile as a C×h×1 tensor.
fn collapse_width(x: &Tensor) -> Tensor {
    let mut col = Tensor::zeros(x.channels, x.height, 1);
    let n = x.width as f64;
    for c in 0..x.channels {
        for y in 0..x.height {
            let mut acc = 0.0;
            for xx in 0..x.width {
                acc += x.get(c, y, xx);
            }
            col.set(c, y, 0, acc / n);
        }
    }
    col
}

/// Height-collapsed profile as a C×w×1 tensor.
fn collapse_height(x: &Tensor) -> Tensor {
    let mut row = Tensor::zeros(x.channels, x.width, 1);
    let n = x.height as f64;
    for c in 0..x.channels {
        for xx in 0..x.width {
            let mut acc = 0.0;
            for y in 0..x.height {
                acc += x.get(c, y, xx);
            }
            row.set(c, xx, 0, acc / n);
        }
    }
    row
}

fn rcm_run(x: &Tensor, p: &RcmParams) -> Result<(Tensor, RcmCache), NnError> {
    x.ensure_finite()?;
    if x.channels != p.channels {
        return Err(NnError::ShapeMismatch {
            expected: (p.channels, x.height, x.width),
            got: x.shape(),
        });
    }
    let (c, h, w) = x.shape();

    // directional context
    let col = collapse_width(x);
    let row = collapse_height(x);
    let xh1d = p.h_ctx.forward(&col);
    let xv1d = p.v_ctx.forward(&row);

    // broadcast back to C×h×w and concatenate along channels
    let mut concat = Tensor::zeros(2 * c, h, w);
    for ch in 0..c {
        for y in 0..h {
            let hv = xh1d.get(ch, y, 0);
            for xx in 0..w {
                concat.set(ch, y, xx, hv);
            }
        }
        for xx in 0..w {
            let vv = xv1d.get(ch, xx, 0);
            for y in 0..h {
                concat.set(c + ch, y, xx, vv);
            }
        }
    }
    let fused = p.fuse.forward(&concat);

    // calibration map
    let calib_mid = p.calib_dw.forward(&fused);
    let calib_out = p.calib_pw.forward(&calib_mid);
    let w_map = calib_out.map(sigmoid);

    // gated detail plus residual
    let detail_out = p.detail.forward(x);
    let gated = w_map.zip_map(&detail_out, |g, v| g * v);
    let mut out = p.proj.forward(&gated);
    out.add_assign(x);

    Ok((
        out,
        RcmCache {
            col,
            row,
            xh1d,
            xv1d,
            concat,
            fused,
            calib_mid,
            calib_out,
            w_map,
            detail_out,
            gated,
        },
    ))
}

/// Forward pass; output shape equals input shape.
pub fn rcm_forward(x: &Tensor, p: &RcmParams) -> Result<Tensor, NnError> {
    rcm_run(x, p).map(|(out, _)| out)
}

/// Calibration map for an input (sigmoid of the calibration head).
pub fn rcm_calibration_map(x: &Tensor, p: &RcmParams) -> Result<Tensor, NnError> {
    rcm_run(x, p).map(|(_, cache)| cache.w_map)
}

/// Directional context profiles `(X_h, X_v)` as C×h×1 / C×w×1 tensors.
pub fn rcm_context_profiles(x: &Tensor, p: &RcmParams) -> Result<(Tensor, Tensor), NnError> {
    rcm_run(x, p).map(|(_, cache)| (cache.xh1d, cache.xv1d))
}

/// Analytic gradients of `L = Σ d_out ⊙ rcm_forward(x)`.
pub fn rcm_backward(
    x: &Tensor,
    p: &RcmParams,
    d_out: &Tensor,
) -> Result<(Tensor, RcmGrads), NnError> {
    let (_, cache) = rcm_run(x, p)?;
    x.ensure_same_shape(d_out)?;
    let (c, h, w) = x.shape();

    // residual path
    let mut d_x = d_out.clone();

    // projection and gate product
    let (d_gated, proj_grads) = p.proj.backward(&cache.gated, d_out);
    let d_w_map = d_gated.zip_map(&cache.detail_out, |d, l| d * l);
    let d_detail = d_gated.zip_map(&cache.w_map, |d, g| d * g);

    // detail branch
    let (d_x_detail, detail_grads) = p.detail.backward(x, &d_detail);
    d_x.add_assign(&d_x_detail);

    // calibration head (through the sigmoid)
    let d_calib_out = d_w_map.zip_map(&cache.w_map, |d, s| d * s * (1.0 - s));
    let (d_calib_mid, calib_pw_grads) = p.calib_pw.backward(&cache.calib_mid, &d_calib_out);
    let (d_fused, calib_dw_grads) = p.calib_dw.backward(&cache.fused, &d_calib_mid);

    // fusion back to the two broadcast context maps
    let (d_concat, fuse_grads) = p.fuse.backward(&cache.concat, &d_fused);

    // collapse the broadcasts back onto the 1-D profiles
    let mut d_xh1d = Tensor::zeros(c, h, 1);
    let mut d_xv1d = Tensor::zeros(c, w, 1);
    for ch in 0..c {
        for y in 0..h {
            let mut acc = 0.0;
            for xx in 0..w {
                acc += d_concat.get(ch, y, xx);
            }
            d_xh1d.set(ch, y, 0, acc);
        }
        for xx in 0..w {
            let mut acc = 0.0;
            for y in 0..h {
                acc += d_concat.get(c + ch, y, xx);
            }
            d_xv1d.set(ch, xx, 0, acc);
        }
    }

    // 1-D context convolutions, then spread the pooling means
    let (d_col, h_ctx_grads) = p.h_ctx.backward(&cache.col, &d_xh1d);
    let (d_row, v_ctx_grads) = p.v_ctx.backward(&cache.row, &d_xv1d);
    let inv_w = 1.0 / w as f64;
    let inv_h = 1.0 / h as f64;
    for ch in 0..c {
        for y in 0..h {
            let dc = d_col.get(ch, y, 0) * inv_w;
            for xx in 0..w {
                d_x.add_at(ch, y, xx, dc);
            }
        }
        for xx in 0..w {
            let dr = d_row.get(ch, xx, 0) * inv_h;
            for y in 0..h {
                d_x.add_at(ch, y, xx, dr);
            }
        }
    }

    Ok((
        d_x,
        RcmGrads {
            h_ctx: h_ctx_grads,
            v_ctx: v_ctx_grads,
            fuse: fuse_grads,
            calib_dw: calib_dw_grads,
            calib_pw: calib_pw_grads,
            detail: detail_grads,
            proj: proj_grads,
        },
    ))
}
