//! Image fidelity metrics and the timeliness-fidelity objective.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::scene::{max_intensity, ViewImage};

fn check_dims(a: &ViewImage, b: &ViewImage) -> Result<()> {
    if a.width != b.width || a.height != b.height {
        return Err(invalid(format!(
            "image sizes differ: {}x{} vs {}x{}",
            a.width, a.height, b.width, b.height
        )));
    }
    if a.pixels.is_empty() {
        return Err(invalid("empty image"));
    }
    Ok(())
}

/// Mean squared per-pixel difference.
pub fn mse(a: &ViewImage, b: &ViewImage) -> Result<f64> {
    check_dims(a, b)?;
    let sum: f64 = a
        .pixels
        .iter()
        .zip(&b.pixels)
        .map(|(&x, &y)| {
            let d = x as f64 - y as f64;
            d * d
        })
        .sum();
    Ok(sum / a.pixels.len() as f64)
}

/// PSNR in dB from an MSE; `f64::INFINITY` marks an exact match.
pub fn psnr_from_mse(mse: f64, kappa: u32) -> f64 {
    if mse == 0.0 {
        return f64::INFINITY;
    }
    let r = max_intensity(kappa) as f64;
    10.0 * (r * r / mse).log10()
}

pub fn psnr(a: &ViewImage, b: &ViewImage, kappa: u32) -> Result<f64> {
    Ok(psnr_from_mse(mse(a, b)?, kappa))
}

/// Whole-image SSIM with population moments.
pub fn ssim(a: &ViewImage, b: &ViewImage, k1: f64, k2: f64, l_d: f64) -> Result<f64> {
    check_dims(a, b)?;
    if !(k1 > 0.0 && k2 > 0.0) {
        return Err(invalid("ssim constants must be positive"));
    }
    let n = a.pixels.len() as f64;
    let mean = |img: &ViewImage| img.pixels.iter().map(|&p| p as f64).sum::<f64>() / n;
    let (ma, mb) = (mean(a), mean(b));
    let (mut va, mut vb, mut cov) = (0.0, 0.0, 0.0);
    for (&x, &y) in a.pixels.iter().zip(&b.pixels) {
        let (dx, dy) = (x as f64 - ma, y as f64 - mb);
        va += dx * dx;
        vb += dy * dy;
        cov += dx * dy;
    }
    let (va, vb, cov) = (va / n, vb / n, cov / n);
    let c1 = (k1 * l_d).powi(2);
    let c2 = (k2 * l_d).powi(2);
    Ok((2.0 * ma * mb + c1) * (2.0 * cov + c2) / ((ma * ma + mb * mb + c1) * (va + vb + c2)))
}

/// Feature map stack: `channels × height × width`, row-major per channel.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub data: Vec<f64>,
}

impl FeatureMap {
    #[inline]
    fn at(&self, c: usize, y: usize, x: usize) -> f64 {
        self.data[(c * self.height + y) * self.width + x]
    }
}

pub const LPIPS_CHANNELS: usize = 8;

/// Perceptual distance over a fixed random feature pyramid. Each layer
/// blurs with a 3×3 binomial kernel, subsamples by 2, applies a 3×3
/// convolution bank (every filter scaled to unit norm) and a ReLU; the
/// activations are then unit-normalised across channels at each location.
#[derive(Debug, Clone)]
pub struct LpipsProxy {
    /// Per layer: `out × in × 3 × 3` kernel weights.
    kernels: Vec<Vec<f64>>,
    in_channels: Vec<usize>,
}

impl LpipsProxy {
    pub fn new(layers: usize, seed: u64) -> Result<Self> {
        if layers == 0 {
            return Err(invalid("lpips proxy needs at least one layer"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut kernels = Vec::with_capacity(layers);
        let mut in_channels = Vec::with_capacity(layers);
        for l in 0..layers {
            let cin = if l == 0 { 1 } else { LPIPS_CHANNELS };
            let per = cin * 9;
            let mut k: Vec<f64> = (0..LPIPS_CHANNELS * per).map(|_| rng.random_range(-1.0..1.0)).collect();
            for filt in k.chunks_mut(per) {
                let norm = filt.iter().map(|v| v * v).sum::<f64>().sqrt();
                filt.iter_mut().for_each(|v| *v /= norm);
            }
            kernels.push(k);
            in_channels.push(cin);
        }
        Ok(Self { kernels, in_channels })
    }

    pub fn layers(&self) -> usize {
        self.kernels.len()
    }

    /// Per-layer normalised activations.
    pub fn features(&self, img: &ViewImage) -> Vec<FeatureMap> {
        let r = img.max_value() as f64;
        let mut x = FeatureMap {
            channels: 1,
            height: img.height,
            width: img.width,
            data: img.pixels.iter().map(|&p| 2.0 * p as f64 / r - 1.0).collect(),
        };
        let mut out = Vec::with_capacity(self.layers());
        for (kernel, &cin) in self.kernels.iter().zip(&self.in_channels) {
            debug_assert_eq!(cin, x.channels);
            let down = downsample(&blur(&x));
            let mut act = conv3x3_relu(&down, kernel, LPIPS_CHANNELS);
            normalize_channels(&mut act);
            out.push(act.clone());
            x = act;
        }
        out
    }

    pub fn distance_features(&self, fa: &[FeatureMap], fb: &[FeatureMap]) -> f64 {
        let w = 1.0 / fa.len() as f64;
        fa.iter()
            .zip(fb)
            .map(|(a, b)| {
                let ss: f64 = a
                    .data
                    .iter()
                    .zip(&b.data)
                    .map(|(x, y)| {
                        let d = w * (x - y);
                        d * d
                    })
                    .sum();
                ss / (a.height * a.width) as f64
            })
            .sum()
    }

    pub fn distance(&self, a: &ViewImage, b: &ViewImage) -> Result<f64> {
        check_dims(a, b)?;
        Ok(self.distance_features(&self.features(a), &self.features(b)))
    }
}

/// `[1 2 1]/4` blur in both directions with clamped edges.
fn blur(x: &FeatureMap) -> FeatureMap {
    let (h, w) = (x.height, x.width);
    let tap = |v: &dyn Fn(isize) -> f64| 0.25 * v(-1) + 0.5 * v(0) + 0.25 * v(1);
    let mut horiz = vec![0.0; x.data.len()];
    for c in 0..x.channels {
        for yy in 0..h {
            for xx in 0..w {
                horiz[(c * h + yy) * w + xx] =
                    tap(&|d| x.at(c, yy, (xx as isize + d).clamp(0, w as isize - 1) as usize));
            }
        }
    }
    let mut data = vec![0.0; x.data.len()];
    for c in 0..x.channels {
        for yy in 0..h {
            for xx in 0..w {
                data[(c * h + yy) * w + xx] = tap(&|d| {
                    let y2 = (yy as isize + d).clamp(0, h as isize - 1) as usize;
                    horiz[(c * h + y2) * w + xx]
                });
            }
        }
    }
    FeatureMap { data, ..*x }
}

/// Keep even rows and columns.
fn downsample(x: &FeatureMap) -> FeatureMap {
    let (h, w) = (x.height.div_ceil(2), x.width.div_ceil(2));
    let mut data = Vec::with_capacity(x.channels * h * w);
    for c in 0..x.channels {
        for yy in 0..h {
            for xx in 0..w {
                data.push(x.at(c, 2 * yy, 2 * xx));
            }
        }
    }
    FeatureMap {
        channels: x.channels,
        height: h,
        width: w,
        data,
    }
}

/// Zero-padded 3×3 convolution followed by ReLU.
fn conv3x3_relu(x: &FeatureMap, kernel: &[f64], cout: usize) -> FeatureMap {
    let (h, w, cin) = (x.height, x.width, x.channels);
    let mut data = vec![0.0; cout * h * w];
    for o in 0..cout {
        for yy in 0..h {
            for xx in 0..w {
                let mut acc = 0.0;
                for i in 0..cin {
                    for ky in 0..3 {
                        let sy = yy as isize + ky as isize - 1;
                        if sy < 0 || sy >= h as isize {
                            continue;
                        }
                        for kx in 0..3 {
                            let sx = xx as isize + kx as isize - 1;
                            if sx < 0 || sx >= w as isize {
                                continue;
                            }
                            acc += kernel[((o * cin + i) * 3 + ky) * 3 + kx] * x.at(i, sy as usize, sx as usize);
                        }
                    }
                }
                data[(o * h + yy) * w + xx] = acc.max(0.0);
            }
        }
    }
    FeatureMap {
        channels: cout,
        height: h,
        width: w,
        data,
    }
}

fn normalize_channels(x: &mut FeatureMap) {
    let plane = x.height * x.width;
    for p in 0..plane {
        let norm = (0..x.channels)
            .map(|c| x.data[c * plane + p].powi(2))
            .sum::<f64>()
            .sqrt();
        let scale = 1.0 / (norm + 1e-10);
        for c in 0..x.channels {
            x.data[c * plane + p] *= scale;
        }
    }
}

/// Compact-form objective weights.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricWeights {
    pub w1: f64,
    pub w2: f64,
    pub w3: f64,
    pub wt: f64,
}

impl Default for MetricWeights {
    fn default() -> Self {
        Self {
            w1: -0.02,
            w2: -0.2,
            w3: 0.3,
            wt: 0.015,
        }
    }
}

impl MetricWeights {
    pub fn zero() -> Self {
        Self {
            w1: 0.0,
            w2: 0.0,
            w3: 0.0,
            wt: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if [self.w1, self.w2, self.w3, self.wt].iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(invalid("metric weights must be finite"))
        }
    }

    /// Per-metric weights (w_p, w_s, w_l) for a given fidelity weight w_q,
    /// from w_1 = w_q·w_p and so on.
    pub fn decompose(&self, wq: f64) -> (f64, f64, f64) {
        (self.w1 / wq, self.w2 / wq, self.w3 / wq)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SsimParams {
    pub k1: f64,
    pub k2: f64,
}

impl Default for SsimParams {
    fn default() -> Self {
        Self { k1: 0.01, k2: 0.03 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LpipsParams {
    pub layers: usize,
    pub seed: u64,
}

impl Default for LpipsParams {
    fn default() -> Self {
        Self { layers: 3, seed: 7 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricParams {
    pub weights: MetricWeights,
    pub psnr_cap_db: f64,
    pub ssim: SsimParams,
    pub lpips: LpipsParams,
}

impl Default for MetricParams {
    fn default() -> Self {
        Self {
            weights: MetricWeights::default(),
            psnr_cap_db: 60.0,
            ssim: SsimParams::default(),
            lpips: LpipsParams::default(),
        }
    }
}

impl MetricParams {
    pub fn validate(&self) -> Result<()> {
        self.weights.validate()?;
        if !(self.psnr_cap_db.is_finite() && self.psnr_cap_db > 0.0) {
            return Err(invalid("psnr_cap_db must be positive and finite"));
        }
        if !(self.ssim.k1 > 0.0 && self.ssim.k2 > 0.0) {
            return Err(invalid("ssim constants must be positive"));
        }
        if self.lpips.layers == 0 {
            return Err(invalid("lpips needs at least one layer"));
        }
        Ok(())
    }
}

/// `w1·PSNR + w2·SSIM + w3·LPIPS + wt·Δ̄`. PSNR must already be finite.
pub fn objective_fw(psnr: f64, ssim: f64, lpips: f64, aaoi: f64, w: &MetricWeights) -> f64 {
    w.w1 * psnr + w.w2 * ssim + w.w3 * lpips + w.wt * aaoi
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FidelityReport {
    /// Raw PSNR; infinite on an exact match.
    pub psnr: f64,
    pub ssim: f64,
    pub lpips_proxy: f64,
    /// Fidelity part of the objective (weights as given, w_q = 1).
    pub q: f64,
    pub f_w: f64,
    pub reward: f64,
    pub aaoi: f64,
}

impl FidelityReport {
    pub fn from_metrics(psnr: f64, ssim: f64, lpips_proxy: f64, aaoi: f64, params: &MetricParams) -> Self {
        let w = &params.weights;
        let capped = psnr.min(params.psnr_cap_db);
        let q = w.w1 * capped + w.w2 * ssim + w.w3 * lpips_proxy;
        let f_w = objective_fw(capped, ssim, lpips_proxy, aaoi, w);
        Self {
            psnr,
            ssim,
            lpips_proxy,
            q,
            f_w,
            reward: -f_w,
            aaoi,
        }
    }

    /// PSNR with the exact-match sentinel replaced by the cap.
    pub fn psnr_capped(&self, cap: f64) -> f64 {
        self.psnr.min(cap)
    }
}

/// Metric evaluator with its LPIPS pyramid built once.
#[derive(Debug, Clone)]
pub struct Evaluator {
    pub params: MetricParams,
    lpips: LpipsProxy,
}

impl Evaluator {
    pub fn new(params: MetricParams) -> Result<Self> {
        params.validate()?;
        Ok(Self {
            lpips: LpipsProxy::new(params.lpips.layers, params.lpips.seed)?,
            params,
        })
    }

    pub fn lpips(&self) -> &LpipsProxy {
        &self.lpips
    }

    /// Score `rendered` against `truth`, with precomputed truth features.
    pub fn report_with_features(
        &self,
        truth: &ViewImage,
        truth_features: &[FeatureMap],
        rendered: &ViewImage,
        aaoi: f64,
    ) -> Result<FidelityReport> {
        let kappa = truth.kappa;
        let p = psnr(truth, rendered, kappa)?;
        let s = ssim(
            truth,
            rendered,
            self.params.ssim.k1,
            self.params.ssim.k2,
            max_intensity(kappa) as f64,
        )?;
        let l = self
            .lpips
            .distance_features(truth_features, &self.lpips.features(rendered));
        Ok(FidelityReport::from_metrics(p, s, l, aaoi, &self.params))
    }

    pub fn report(&self, truth: &ViewImage, rendered: &ViewImage, aaoi: f64) -> Result<FidelityReport> {
        check_dims(truth, rendered)?;
        let tf = self.lpips.features(truth);
        self.report_with_features(truth, &tf, rendered, aaoi)
    }
}
