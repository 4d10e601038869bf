//! Deterministic image descriptor and the scheduler state matrix.

use std::f64::consts::{FRAC_PI_2, TAU};

use crate::error::{invalid, Result};
use crate::scene::ViewImage;
use crate::streaming::{CameraPose, Frame, SimWorld};

pub const FEATURE_DIM: usize = 16;
const ORIENTATION_BINS: usize = 8;

#[derive(Debug, Clone, PartialEq)]
pub struct SemanticFeature {
    pub z: Vec<f64>,
}

impl SemanticFeature {
    pub fn zeros(d: usize) -> Self {
        Self { z: vec![0.0; d] }
    }

    pub fn norm(&self) -> f64 {
        self.z.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

/// 16 values in [0, 1]: an 8-bin gradient-orientation histogram weighted by
/// magnitude (sums to 1, or all zero for flat images), the four quadrant
/// means scaled by R_I, and intensity-weighted centroid and spread in x and
/// y relative to the image size.
pub fn extract_features(img: &ViewImage) -> SemanticFeature {
    let (w, h) = (img.width, img.height);
    let r = img.max_value() as f64;
    let px = |x: usize, y: usize| img.get(x, y) as f64;
    let mut z = Vec::with_capacity(FEATURE_DIM);

    let mut hist = [0.0; ORIENTATION_BINS];
    if w >= 3 && h >= 3 {
        for y in 1..h - 1 {
            for x in 1..w - 1 {
                let gx = px(x + 1, y) - px(x - 1, y);
                let gy = px(x, y + 1) - px(x, y - 1);
                let mag = gx.hypot(gy);
                if mag == 0.0 {
                    continue;
                }
                let angle = gy.atan2(gx).rem_euclid(TAU);
                let bin = ((angle / TAU * ORIENTATION_BINS as f64) as usize).min(ORIENTATION_BINS - 1);
                hist[bin] += mag;
            }
        }
    }
    let total: f64 = hist.iter().sum();
    z.extend(hist.iter().map(|v| if total > 0.0 { v / total } else { 0.0 }));

    let (hw, hh) = (w.div_ceil(2), h.div_ceil(2));
    for (x0, x1, y0, y1) in [(0, hw, 0, hh), (hw, w, 0, hh), (0, hw, hh, h), (hw, w, hh, h)] {
        let count = (x1 - x0) * (y1 - y0);
        let mut s = 0.0;
        for y in y0..y1 {
            for x in x0..x1 {
                s += px(x, y);
            }
        }
        z.push(if count > 0 { s / count as f64 / r } else { 0.0 });
    }

    let (mut m, mut mx, mut my) = (0.0, 0.0, 0.0);
    for y in 0..h {
        for x in 0..w {
            let v = px(x, y);
            m += v;
            mx += v * x as f64;
            my += v * y as f64;
        }
    }
    let (cx, cy, sx, sy) = if m > 0.0 {
        let (cx, cy) = (mx / m, my / m);
        let (mut vx, mut vy) = (0.0, 0.0);
        for y in 0..h {
            for x in 0..w {
                let v = px(x, y);
                vx += v * (x as f64 - cx).powi(2);
                vy += v * (y as f64 - cy).powi(2);
            }
        }
        (cx, cy, (vx / m).sqrt(), (vy / m).sqrt())
    } else {
        ((w as f64 - 1.0) / 2.0, (h as f64 - 1.0) / 2.0, 0.0, 0.0)
    };
    let span = |n: usize| (n.max(2) - 1) as f64;
    z.push((cx / span(w)).clamp(0.0, 1.0));
    z.push((cy / span(h)).clamp(0.0, 1.0));
    z.push((sx / (w as f64 / 2.0)).clamp(0.0, 1.0));
    z.push((sy / (h as f64 / 2.0)).clamp(0.0, 1.0));
    SemanticFeature { z }
}

/// `N × (d + 6)` matrix, rows `[z | Δ | x y z θ φ]`, in raw units.
#[derive(Debug, Clone, PartialEq)]
pub struct StateMatrix {
    pub rows: usize,
    pub d: usize,
    pub data: Vec<f64>,
}

/// Scales that bring state entries to order one before they reach the net.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InputScale {
    pub aoi: f64,
    pub world_w: f64,
    pub world_h: f64,
}

impl StateMatrix {
    pub fn cols(&self) -> usize {
        self.d + 6
    }

    pub fn row(&self, n: usize) -> &[f64] {
        let c = self.cols();
        &self.data[n * c..(n + 1) * c]
    }

    pub fn aoi_column(&self) -> Vec<f64> {
        (0..self.rows).map(|n| self.row(n)[self.d]).collect()
    }

    /// Flattened, scaled network input. AoI is divided by `scale.aoi` and
    /// capped at 10; positions by the world size; θ by 2π; φ by π/2.
    pub fn to_input(&self, scale: &InputScale) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.data.len());
        for n in 0..self.rows {
            let row = self.row(n);
            out.extend_from_slice(&row[..self.d]);
            out.push((row[self.d] / scale.aoi).min(10.0));
            let p = &row[self.d + 1..];
            out.push(p[0] / scale.world_w);
            out.push(p[1] / scale.world_h);
            out.push(p[2] / scale.world_w);
            out.push(p[3] / TAU);
            out.push(p[4] / FRAC_PI_2);
        }
        out
    }
}

/// Assemble the state at slot `t`. `feature_of` maps a delivered frame to
/// its descriptor; cameras without a delivery get zero features and Δ = t.
pub fn build_state(
    world: &SimWorld,
    t: u64,
    d: usize,
    feature_of: &mut dyn FnMut(&Frame) -> Result<SemanticFeature>,
) -> Result<StateMatrix> {
    let n = world.n_cameras();
    let tracker = world.tracker();
    let mut data = Vec::with_capacity(n * (d + 6));
    for cam in 0..n {
        let z = match tracker.latest(cam).filter(|f| f.arrival_slot.is_some_and(|a| a <= t)) {
            Some(f) => feature_of(f)?,
            None => SemanticFeature::zeros(d),
        };
        if z.z.len() != d {
            return Err(invalid(format!("feature length {} != d = {d}", z.z.len())));
        }
        data.extend_from_slice(&z.z);
        data.push(tracker.aoi(cam, t)? as f64);
        let p: CameraPose = world.pose(cam, t);
        data.extend_from_slice(&p.as_array());
    }
    Ok(StateMatrix { rows: n, d, data })
}
