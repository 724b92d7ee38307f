//! Convolution and linear primitives with analytic backward passes.
//!
//! All convolutions are stride 1 with zero padding chosen to preserve the
//! spatial shape (kernels are odd). Weights are plain `Vec<f64>` so parameter
//! groups can be exposed as flat slices for gradient checking and
//! serialization.

use rand::Rng;

use super::tensor::Tensor;

/// Gradient buffers for a convolution (same layout as its weights).
#[derive(Debug, Clone)]
pub struct ConvGrads {
    pub w: Vec<f64>,
    pub b: Vec<f64>,
}

/// Gradient buffers for a linear map.
#[derive(Debug, Clone)]
pub struct LinGrads {
    pub w: Vec<f64>,
    pub b: Vec<f64>,
}

fn uniform_init(rng: &mut impl Rng, n: usize, fan_in: usize) -> Vec<f64> {
    let bound = 1.0 / (fan_in as f64).sqrt();
    (0..n).map(|_| rng.gen_range(-bound..bound)).collect()
}

/// Full (dense-channel) convolution with an odd square kernel.
/// Weight layout: `[c_out][c_in][k][k]`.
#[derive(Debug, Clone)]
pub struct Conv2d {
    pub c_in: usize,
    pub c_out: usize,
    pub k: usize,
    pub w: Vec<f64>,
    pub b: Vec<f64>,
}

impl Conv2d {
    pub fn seeded(c_in: usize, c_out: usize, k: usize, rng: &mut impl Rng) -> Self {
        debug_assert!(k % 2 == 1);
        let fan_in = c_in * k * k;
        Conv2d {
            c_in,
            c_out,
            k,
            w: uniform_init(rng, c_out * c_in * k * k, fan_in),
            b: uniform_init(rng, c_out, fan_in),
        }
    }

    pub fn zeros(c_in: usize, c_out: usize, k: usize) -> Self {
        Conv2d {
            c_in,
            c_out,
            k,
            w: vec![0.0; c_out * c_in * k * k],
            b: vec![0.0; c_out],
        }
    }

    #[inline]
    fn w_at(&self, o: usize, ci: usize, ky: usize, kx: usize) -> f64 {
        self.w[((o * self.c_in + ci) * self.k + ky) * self.k + kx]
    }

    pub fn forward(&self, x: &Tensor) -> Tensor {
        debug_assert_eq!(x.channels, self.c_in);
        let (h, w) = (x.height, x.width);
        let pad = self.k / 2;
        let mut out = Tensor::zeros(self.c_out, h, w);
        for o in 0..self.c_out {
            for y in 0..h {
                for xx in 0..w {
                    let mut acc = self.b[o];
                    for ci in 0..self.c_in {
                        for ky in 0..self.k {
                            let sy = y as isize + ky as isize - pad as isize;
                            if sy < 0 || sy >= h as isize {
                                continue;
                            }
                            for kx in 0..self.k {
                                let sx = xx as isize + kx as isize - pad as isize;
                                if sx < 0 || sx >= w as isize {
                                    continue;
                                }
                                acc += self.w_at(o, ci, ky, kx) * x.get(ci, sy as usize, sx as usize);
                            }
                        }
                    }
                    out.set(o, y, xx, acc);
                }
            }
        }
        out
    }

    pub fn backward(&self, x: &Tensor, d_out: &Tensor) -> (Tensor, ConvGrads) {
        debug_assert_eq!(d_out.channels, self.c_out);
        let (h, w) = (x.height, x.width);
        let pad = self.k / 2;
        let mut dx = Tensor::zeros(self.c_in, h, w);
        let mut grads = ConvGrads {
            w: vec![0.0; self.w.len()],
            b: vec![0.0; self.b.len()],
        };
        for o in 0..self.c_out {
            for y in 0..h {
                for xx in 0..w {
                    let g = d_out.get(o, y, xx);
                    if g == 0.0 {
                        continue;
                    }
                    grads.b[o] += g;
                    for ci in 0..self.c_in {
                        for ky in 0..self.k {
                            let sy = y as isize + ky as isize - pad as isize;
                            if sy < 0 || sy >= h as isize {
                                continue;
                            }
                            for kx in 0..self.k {
                                let sx = xx as isize + kx as isize - pad as isize;
                                if sx < 0 || sx >= w as isize {
                                    continue;
                                }
                                let wi = ((o * self.c_in + ci) * self.k + ky) * self.k + kx;
                                grads.w[wi] += g * x.get(ci, sy as usize, sx as usize);
                                dx.add_at(ci, sy as usize, sx as usize, g * self.w[wi]);
                            }
                        }
                    }
                }
            }
        }
        (dx, grads)
    }
}

/// Depthwise convolution with an odd rectangular kernel `kh×kw`; each channel
/// has its own kernel. Weight layout: `[c][kh][kw]`.
#[derive(Debug, Clone)]
pub struct DwConv2d {
    pub c: usize,
    pub kh: usize,
    pub kw: usize,
    pub w: Vec<f64>,
    pub b: Vec<f64>,
}

impl DwConv2d {
    pub fn seeded(c: usize, kh: usize, kw: usize, rng: &mut impl Rng) -> Self {
        debug_assert!(kh % 2 == 1 && kw % 2 == 1);
        let fan_in = kh * kw;
        DwConv2d {
            c,
            kh,
            kw,
            w: uniform_init(rng, c * kh * kw, fan_in),
            b: uniform_init(rng, c, fan_in),
        }
    }

    /// Identity kernels: center tap one, everything else (and bias) zero.
    pub fn identity(c: usize, kh: usize, kw: usize) -> Self {
        let mut conv = DwConv2d {
            c,
            kh,
            kw,
            w: vec![0.0; c * kh * kw],
            b: vec![0.0; c],
        };
        for ch in 0..c {
            conv.w[(ch * kh + kh / 2) * kw + kw / 2] = 1.0;
        }
        conv
    }

    pub fn forward(&self, x: &Tensor) -> Tensor {
        debug_assert_eq!(x.channels, self.c);
        let (h, w) = (x.height, x.width);
        let (ph, pw) = (self.kh / 2, self.kw / 2);
        let mut out = Tensor::zeros(self.c, h, w);
        for c in 0..self.c {
            for y in 0..h {
                for xx in 0..w {
                    let mut acc = self.b[c];
                    for ky in 0..self.kh {
                        let sy = y as isize + ky as isize - ph as isize;
                        if sy < 0 || sy >= h as isize {
                            continue;
                        }
                        for kx in 0..self.kw {
                            let sx = xx as isize + kx as isize - pw as isize;
                            if sx < 0 || sx >= w as isize {
                                continue;
                            }
                            acc += self.w[(c * self.kh + ky) * self.kw + kx]
                                * x.get(c, sy as usize, sx as usize);
                        }
                    }
                    out.set(c, y, xx, acc);
                }
            }
        }
        out
    }

    pub fn backward(&self, x: &Tensor, d_out: &Tensor) -> (Tensor, ConvGrads) {
        let (h, w) = (x.height, x.width);
        let (ph, pw) = (self.kh / 2, self.kw / 2);
        let mut dx = Tensor::zeros(self.c, h, w);
        let mut grads = ConvGrads {
            w: vec![0.0; self.w.len()],
            b: vec![0.0; self.b.len()],
        };
        for c in 0..self.c {
            for y in 0..h {
                for xx in 0..w {
                    let g = d_out.get(c, y, xx);
                    if g == 0.0 {
                        continue;
                    }
                    grads.b[c] += g;
                    for ky in 0..self.kh {
                        let sy = y as isize + ky as isize - ph as isize;
                        if sy < 0 || sy >= h as isize {
                            continue;
                        }
                        for kx in 0..self.kw {
                            let sx = xx as isize + kx as isize - pw as isize;
                            if sx < 0 || sx >= w as isize {
                                continue;
                            }
                            let wi = (c * self.kh + ky) * self.kw + kx;
                            grads.w[wi] += g * x.get(c, sy as usize, sx as usize);
                            dx.add_at(c, sy as usize, sx as usize, g * self.w[wi]);
                        }
                    }
                }
            }
        }
        (dx, grads)
    }
}

/// Dense linear map `c_in -> c_out`. Weight layout: `[c_out][c_in]`.
#[derive(Debug, Clone)]
pub struct Linear {
    pub c_in: usize,
    pub c_out: usize,
    pub w: Vec<f64>,
    pub b: Vec<f64>,
}

impl Linear {
    pub fn seeded(c_in: usize, c_out: usize, rng: &mut impl Rng) -> Self {
        Linear {
            c_in,
            c_out,
            w: uniform_init(rng, c_out * c_in, c_in),
            b: uniform_init(rng, c_out, c_in),
        }
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.c_in);
        (0..self.c_out)
            .map(|o| {
                self.b[o]
                    + (0..self.c_in)
                        .map(|i| self.w[o * self.c_in + i] * x[i])
                        .sum::<f64>()
            })
            .collect()
    }

    pub fn backward(&self, x: &[f64], d_out: &[f64]) -> (Vec<f64>, LinGrads) {
        let mut dx = vec![0.0; self.c_in];
        let mut grads = LinGrads {
            w: vec![0.0; self.w.len()],
            b: d_out.to_vec(),
        };
        for o in 0..self.c_out {
            for i in 0..self.c_in {
                grads.w[o * self.c_in + i] = d_out[o] * x[i];
                dx[i] += self.w[o * self.c_in + i] * d_out[o];
            }
        }
        (dx, grads)
    }
}

pub(crate) fn sigmoid(v: f64) -> f64 {
    1.0 / (1.0 + (-v).exp())
}

pub(crate) fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&v| (v - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.iter().map(|&e| e / sum).collect()
}
