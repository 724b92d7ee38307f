//! Local-global attention block.
//!
//! Pipeline: a multi-scale mix of depthwise 3/5/7 branches weighted by
//! softmax coefficients from pooled statistics, a 3×3 local attention map, a
//! squeeze-excitation style global gain, and a learnable convex gate feeding
//! a 1×1 projection. Local and global gains, and the gate itself, can be
//! frozen to constants for algebraic identity tests.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::ops::{sigmoid, softmax, Conv2d, ConvGrads, DwConv2d, LinGrads, Linear};
use super::tensor::Tensor;
use super::{NnError, ParamGroups};

/// Test-mode constants replacing learned factors; `None` means learned.
#[derive(Debug, Clone, Copy, Default)]
pub struct LgaOverrides {
    /// Replaces `sigmoid(gate_logit)` with a fixed gate value.
    pub gate: Option<f64>,
    /// Replaces the local attention map `sigmoid(A_loc(X_ms))` with a constant.
    pub local_gain: Option<f64>,
    /// Replaces the global channel gain with a constant.
    pub global_gain: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct LgaParams {
    pub channels: usize,
    /// Depthwise multi-scale branches, kernel sizes 3, 5 and 7.
    pub branch3: DwConv2d,
    pub branch5: DwConv2d,
    pub branch7: DwConv2d,
    /// Pooled statistics -> branch logits (3 of them).
    pub alpha_head: Linear,
    /// 3×3 full convolution producing local attention logits.
    pub local_attn: Conv2d,
    /// Squeeze-excitation pair: channels -> channels/4 -> channels.
    pub se_reduce: Linear,
    pub se_expand: Linear,
    /// Gate parameter; the gate is `sigmoid(gate_logit)`.
    pub gate_logit: f64,
    /// Output 1×1 projection.
    pub proj: Conv2d,
    pub overrides: LgaOverrides,
}

pub const LGA_BRANCH_KERNELS: [usize; 3] = [3, 5, 7];

impl LgaParams {
    /// Random initialization: every weight and bias uniform in
    /// ±1/sqrt(fan_in) from one seeded stream; gate logit starts at 0
    /// (gate 0.5).
    pub fn seeded(channels: usize, seed: u64) -> Result<Self, NnError> {
        if channels == 0 {
            return Err(NnError::ZeroChannels);
        }
        let hidden = (channels / 4).max(1);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Ok(LgaParams {
            channels,
            branch3: DwConv2d::seeded(channels, 3, 3, &mut rng),
            branch5: DwConv2d::seeded(channels, 5, 5, &mut rng),
            branch7: DwConv2d::seeded(channels, 7, 7, &mut rng),
            alpha_head: Linear::seeded(channels, 3, &mut rng),
            local_attn: Conv2d::seeded(channels, channels, 3, &mut rng),
            se_reduce: Linear::seeded(channels, hidden, &mut rng),
            se_expand: Linear::seeded(hidden, channels, &mut rng),
            gate_logit: 0.0,
            proj: Conv2d::seeded(channels, channels, 1, &mut rng),
            overrides: LgaOverrides::default(),
        })
    }

    fn branches(&self) -> [&DwConv2d; 3] {
        [&self.branch3, &self.branch5, &self.branch7]
    }

    /// Branch mixing weights for an input; always on the simplex.
    pub fn branch_weights(&self, x: &Tensor) -> Vec<f64> {
        softmax(&self.alpha_head.forward(&x.global_avg_pool()))
    }

    pub fn gate(&self) -> f64 {
        self.overrides.gate.unwrap_or_else(|| sigmoid(self.gate_logit))
    }
}

impl ParamGroups for LgaParams {
    fn groups(&self) -> Vec<(&'static str, &[f64])> {
        vec![
            ("branch3.w", &self.branch3.w),
            ("branch3.b", &self.branch3.b),
            ("branch5.w", &self.branch5.w),
            ("branch5.b", &self.branch5.b),
            ("branch7.w", &self.branch7.w),
            ("branch7.b", &self.branch7.b),
            ("alpha_head.w", &self.alpha_head.w),
            ("alpha_head.b", &self.alpha_head.b),
            ("local_attn.w", &self.local_attn.w),
            ("local_attn.b", &self.local_attn.b),
            ("se_reduce.w", &self.se_reduce.w),
            ("se_reduce.b", &self.se_reduce.b),
            ("se_expand.w", &self.se_expand.w),
            ("se_expand.b", &self.se_expand.b),
            ("gate_logit", std::slice::from_ref(&self.gate_logit)),
            ("proj.w", &self.proj.w),
            ("proj.b", &self.proj.b),
        ]
    }

    fn groups_mut(&mut self) -> Vec<(&'static str, &mut [f64])> {
        vec![
            ("branch3.w", &mut self.branch3.w),
            ("branch3.b", &mut self.branch3.b),
            ("branch5.w", &mut self.branch5.w),
            ("branch5.b", &mut self.branch5.b),
            ("branch7.w", &mut self.branch7.w),
            ("branch7.b", &mut self.branch7.b),
            ("alpha_head.w", &mut self.alpha_head.w),
            ("alpha_head.b", &mut self.alpha_head.b),
            ("local_attn.w", &mut self.local_attn.w),
            ("local_attn.b", &mut self.local_attn.b),
            ("se_reduce.w", &mut self.se_reduce.w),
            ("se_reduce.b", &mut self.se_reduce.b),
            ("se_expand.w", &mut self.se_expand.w),
            ("se_expand.b", &mut self.se_expand.b),
            ("gate_logit", std::slice::from_mut(&mut self.gate_logit)),
            ("proj.w", &mut self.proj.w),
            ("proj.b", &mut self.proj.b),
        ]
    }

    fn group_shapes(&self) -> Vec<(&'static str, Vec<usize>)> {
        let c = self.channels;
        let hidden = self.se_reduce.c_out;
        vec![
            ("branch3.w", vec![c, 3, 3]),
            ("branch3.b", vec![c]),
            ("branch5.w", vec![c, 5, 5]),
            ("branch5.b", vec![c]),
            ("branch7.w", vec![c, 7, 7]),
            ("branch7.b", vec![c]),
            ("alpha_head.w", vec![3, c]),
            ("alpha_head.b", vec![3]),
            ("local_attn.w", vec![c, c, 3, 3]),
            ("local_attn.b", vec![c]),
            ("se_reduce.w", vec![hidden, c]),
            ("se_reduce.b", vec![hidden]),
            ("se_expand.w", vec![c, hidden]),
            ("se_expand.b", vec![c]),
            ("gate_logit", vec![1]),
            ("proj.w", vec![c, c, 1, 1]),
            ("proj.b", vec![c]),
        ]
    }
}

/// Gradients of every LGA parameter group, mirrored onto the param layout.
#[derive(Debug, Clone)]
pub struct LgaGrads {
    pub branch3: ConvGrads,
    pub branch5: ConvGrads,
    pub branch7: ConvGrads,
    pub alpha_head: LinGrads,
    pub local_attn: ConvGrads,
    pub se_reduce: LinGrads,
    pub se_expand: LinGrads,
    pub gate_logit: f64,
    pub proj: ConvGrads,
}

impl LgaGrads {
    pub fn groups(&self) -> Vec<(&'static str, &[f64])> {
        vec![
            ("branch3.w", &self.branch3.w[..]),
            ("branch3.b", &self.branch3.b),
            ("branch5.w", &self.branch5.w),
            ("branch5.b", &self.branch5.b),
            ("branch7.w", &self.branch7.w),
            ("branch7.b", &self.branch7.b),
            ("alpha_head.w", &self.alpha_head.w),
            ("alpha_head.b", &self.alpha_head.b),
            ("local_attn.w", &self.local_attn.w),
            ("local_attn.b", &self.local_attn.b),
            ("se_reduce.w", &self.se_reduce.w),
            ("se_reduce.b", &self.se_reduce.b),
            ("se_expand.w", &self.se_expand.w),
            ("se_expand.b", &self.se_expand.b),
            ("gate_logit", std::slice::from_ref(&self.gate_logit)),
            ("proj.w", &self.proj.w),
            ("proj.b", &self.proj.b),
        ]
    }
}

struct LgaCache {
    gap_x: Vec<f64>,
    alpha: Vec<f64>,
    branch_outs: [Tensor; 3],
    x_ms: Tensor,
    /// sigmoid(local attention logits), or the override constant everywhere
    sig_local: Tensor,
    x_loc: Tensor,
    gap_ms: Vec<f64>,
    z1: Vec<f64>,
    relu1: Vec<f64>,
    /// per-channel global gain
    gain: Vec<f64>,
    x_glob: Tensor,
    gamma: f64,
    u: Tensor,
}

fn lga_run(x: &Tensor, p: &LgaParams) -> Result<(Tensor, LgaCache), NnError> {
    x.ensure_finite()?;
    if x.channels != p.channels {
        return Err(NnError::ShapeMismatch {
            expected: (p.channels, x.height, x.width),
            got: x.shape(),
        });
    }
    let (_, h, w) = x.shape();

    // multi-scale mix
    let gap_x = x.global_avg_pool();
    let alpha = softmax(&p.alpha_head.forward(&gap_x));
    let branch_outs = [
        p.branch3.forward(x),
        p.branch5.forward(x),
        p.branch7.forward(x),
    ];
    let mut x_ms = Tensor::zeros(p.channels, h, w);
    for (s, branch) in branch_outs.iter().enumerate() {
        for (acc, &v) in x_ms.values_mut().iter_mut().zip(branch.values()) {
            *acc += alpha[s] * v;
        }
    }

    // local attention
    let sig_local = match p.overrides.local_gain {
        Some(g) => Tensor::zeros(p.channels, h, w).map(|_| g),
        None => p.local_attn.forward(&x_ms).map(sigmoid),
    };
    let x_loc = sig_local.zip_map(&x_ms, |s, v| s * v);

    // global attention
    let gap_ms = x_ms.global_avg_pool();
    let z1 = p.se_reduce.forward(&gap_ms);
    let relu1: Vec<f64> = z1.iter().map(|&v| v.max(0.0)).collect();
    let gain: Vec<f64> = match p.overrides.global_gain {
        Some(g) => vec![g; p.channels],
        None => p.se_expand.forward(&relu1).iter().map(|&v| sigmoid(v)).collect(),
    };
    let mut x_glob = x_ms.clone();
    for c in 0..p.channels {
        for y in 0..h {
            for xx in 0..w {
                x_glob.set(c, y, xx, gain[c] * x_ms.get(c, y, xx));
            }
        }
    }

    // gated fusion and projection
    let gamma = p.gate();
    let u = x_loc.zip_map(&x_glob, |l, g| gamma * l + (1.0 - gamma) * g);
    let out = p.proj.forward(&u);

    Ok((
        out,
        LgaCache {
            gap_x,
            alpha,
            branch_outs,
            x_ms,
            sig_local,
            x_loc,
            gap_ms,
            z1,
            relu1,
            gain,
            x_glob,
            gamma,
            u,
        },
    ))
}

/// Forward pass; output shape equals input shape.
pub fn lga_forward(x: &Tensor, p: &LgaParams) -> Result<Tensor, NnError> {
    lga_run(x, p).map(|(out, _)| out)
}

/// Analytic gradients of `L = Σ d_out ⊙ lga_forward(x)` with respect to the
/// input and every parameter group.
pub fn lga_backward(
    x: &Tensor,
    p: &LgaParams,
    d_out: &Tensor,
) -> Result<(Tensor, LgaGrads), NnError> {
    let (_, cache) = lga_run(x, p)?;
    x.ensure_same_shape(d_out)?;
    let (c, h, w) = x.shape();
    let spatial = (h * w) as f64;

    // projection
    let (d_u, proj_grads) = p.proj.backward(&cache.u, d_out);

    // gate
    let d_gamma: f64 = cache
        .x_loc
        .values()
        .iter()
        .zip(cache.x_glob.values())
        .zip(d_u.values())
        .map(|((&l, &g), &du)| du * (l - g))
        .sum();
    let gate_logit_grad = match p.overrides.gate {
        Some(_) => 0.0,
        None => {
            let gamma = cache.gamma;
            d_gamma * gamma * (1.0 - gamma)
        }
    };
    let d_x_loc = d_u.scaled(cache.gamma);
    let d_x_glob = d_u.scaled(1.0 - cache.gamma);

    let mut d_x_ms = Tensor::zeros(c, h, w);

    // local branch: X_loc = sig_local ⊙ X_ms
    let local_grads;
    {
        // product rule: gradient through the X_ms factor
        let through_value = d_x_loc.zip_map(&cache.sig_local, |d, s| d * s);
        d_x_ms.add_assign(&through_value);
        match p.overrides.local_gain {
            Some(_) => {
                local_grads = ConvGrads {
                    w: vec![0.0; p.local_attn.w.len()],
                    b: vec![0.0; p.local_attn.b.len()],
                };
            }
            None => {
                let d_sig = d_x_loc.zip_map(&cache.x_ms, |d, v| d * v);
                let d_logits = d_sig.zip_map(&cache.sig_local, |d, s| d * s * (1.0 - s));
                let (d_ms_from_attn, grads) = p.local_attn.backward(&cache.x_ms, &d_logits);
                d_x_ms.add_assign(&d_ms_from_attn);
                local_grads = grads;
            }
        }
    }

    // global branch: X_glob = gain ⊙ X_ms (gain broadcast per channel)
    let (se_reduce_grads, se_expand_grads);
    {
        let mut d_gain = vec![0.0; c];
        for ch in 0..c {
            for y in 0..h {
                for xx in 0..w {
                    let d = d_x_glob.get(ch, y, xx);
                    d_gain[ch] += d * cache.x_ms.get(ch, y, xx);
                    d_x_ms.add_at(ch, y, xx, d * cache.gain[ch]);
                }
            }
        }
        match p.overrides.global_gain {
            Some(_) => {
                se_reduce_grads = LinGrads {
                    w: vec![0.0; p.se_reduce.w.len()],
                    b: vec![0.0; p.se_reduce.b.len()],
                };
                se_expand_grads = LinGrads {
                    w: vec![0.0; p.se_expand.w.len()],
                    b: vec![0.0; p.se_expand.b.len()],
                };
            }
            None => {
                let d_se: Vec<f64> = d_gain
                    .iter()
                    .zip(&cache.gain)
                    .map(|(&dg, &a)| dg * a * (1.0 - a))
                    .collect();
                let (d_relu, expand_grads) = p.se_expand.backward(&cache.relu1, &d_se);
                let d_z1: Vec<f64> = d_relu
                    .iter()
                    .zip(&cache.z1)
                    .map(|(&d, &z)| if z > 0.0 { d } else { 0.0 })
                    .collect();
                let (d_gap_ms, reduce_grads) = p.se_reduce.backward(&cache.gap_ms, &d_z1);
                for ch in 0..c {
                    let per_pixel = d_gap_ms[ch] / spatial;
                    for y in 0..h {
                        for xx in 0..w {
                            d_x_ms.add_at(ch, y, xx, per_pixel);
                        }
                    }
                }
                se_reduce_grads = reduce_grads;
                se_expand_grads = expand_grads;
            }
        }
    }

    // multi-scale mix: X_ms = Σ_s α_s B_s
    let mut d_alpha = [0.0f64; 3];
    for (s, branch_out) in cache.branch_outs.iter().enumerate() {
        d_alpha[s] = d_x_ms.dot(branch_out);
    }
    let mut d_x = Tensor::zeros(c, h, w);
    let mut branch_grads: Vec<ConvGrads> = Vec::with_capacity(3);
    for (s, branch) in [&p.branch3, &p.branch5, &p.branch7].iter().enumerate() {
        let d_branch = d_x_ms.scaled(cache.alpha[s]);
        let (d_x_s, grads) = branch.backward(x, &d_branch);
        d_x.add_assign(&d_x_s);
        branch_grads.push(grads);
    }

    // softmax jacobian then the alpha head
    let weighted: f64 = cache.alpha.iter().zip(&d_alpha).map(|(&a, &d)| a * d).sum();
    let d_logits: Vec<f64> = cache
        .alpha
        .iter()
        .zip(&d_alpha)
        .map(|(&a, &d)| a * (d - weighted))
        .collect();
    let (d_gap_x, alpha_head_grads) = p.alpha_head.backward(&cache.gap_x, &d_logits);
    for ch in 0..c {
        let per_pixel = d_gap_x[ch] / spatial;
        for y in 0..h {
            for xx in 0..w {
                d_x.add_at(ch, y, xx, per_pixel);
            }
        }
    }

    let branch7_grads = branch_grads.pop().expect("three branches");
    let branch5_grads = branch_grads.pop().expect("three branches");
    let branch3_grads = branch_grads.pop().expect("three branches");
    Ok((
        d_x,
        LgaGrads {
            branch3: branch3_grads,
            branch5: branch5_grads,
            branch7: branch7_grads,
            alpha_head: alpha_head_grads,
            local_attn: local_grads,
            se_reduce: se_reduce_grads,
            se_expand: se_expand_grads,
            gate_logit: gate_logit_grad,
            proj: proj_grads,
        },
    ))
}
