//! Synthetic dynamic scene with exact ground truth, and the reconstruction
//! backends that turn a set of posed views into a renderable model.
//!
//! The world is a W×H intensity field: a sum of drifting sinusoids plus a
//! translating bright square. A camera sees the axis-aligned window centred
//! `look_distance` ahead of it along `theta`.

use std::f64::consts::TAU;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::streaming::CameraPose;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SceneParams {
    pub world: Extent,
    pub window: Extent,
    pub kappa: u32,
    /// Drift of the background pattern, pixels per slot.
    pub evolution_speed: f64,
    /// Speed of the moving square, pixels per slot.
    pub object_speed: f64,
    pub object_size: usize,
    pub components: usize,
    pub look_distance: f64,
    pub seed: u64,
    pub backend: BackendKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Extent {
    pub w: usize,
    pub h: usize,
}

impl Default for SceneParams {
    fn default() -> Self {
        Self {
            world: Extent { w: 512, h: 512 },
            window: Extent { w: 64, h: 64 },
            kappa: 8,
            evolution_speed: 0.1,
            object_speed: 1.0,
            object_size: 16,
            components: 6,
            look_distance: 120.0,
            seed: 0,
            backend: BackendKind::LeastSquares,
        }
    }
}

impl SceneParams {
    pub fn validate(&self) -> Result<()> {
        if !(1..=16).contains(&self.kappa) {
            return Err(invalid(format!("kappa must be in 1..=16, got {}", self.kappa)));
        }
        if self.window.w == 0 || self.window.h == 0 {
            return Err(invalid("window must be non-empty"));
        }
        if self.window.w > self.world.w || self.window.h > self.world.h {
            return Err(invalid("window larger than world"));
        }
        for (name, v) in [
            ("evolution_speed", self.evolution_speed),
            ("object_speed", self.object_speed),
            ("look_distance", self.look_distance),
        ] {
            if !v.is_finite() || v < 0.0 {
                return Err(invalid(format!("{name} must be finite and non-negative")));
            }
        }
        Ok(())
    }

    pub fn geometry(&self) -> ViewGeometry {
        ViewGeometry {
            world: self.world,
            window: self.window,
            look_distance: self.look_distance,
        }
    }
}

/// Maps a pose to its window in world pixel coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ViewGeometry {
    pub world: Extent,
    pub window: Extent,
    pub look_distance: f64,
}

impl ViewGeometry {
    /// Top-left corner of the window seen from `pose`.
    pub fn window_origin(&self, pose: &CameraPose) -> Result<(usize, usize)> {
        let (s, c) = pose.theta.sin_cos();
        let ox = (pose.x + self.look_distance * c - self.window.w as f64 / 2.0).round();
        let oy = (pose.y + self.look_distance * s - self.window.h as f64 / 2.0).round();
        let max_x = (self.world.w - self.window.w) as f64;
        let max_y = (self.world.h - self.window.h) as f64;
        if !(0.0..=max_x).contains(&ox) || !(0.0..=max_y).contains(&oy) {
            return Err(invalid(format!(
                "pose ({:.1}, {:.1}, θ={:.3}) sees a window outside the world",
                pose.x, pose.y, pose.theta
            )));
        }
        Ok((ox as usize, oy as usize))
    }
}

/// A κ-bit grayscale image.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ViewImage {
    pub width: usize,
    pub height: usize,
    pub kappa: u32,
    pub pixels: Vec<u16>,
    pub capture_slot: u64,
}

impl ViewImage {
    pub fn new(width: usize, height: usize, kappa: u32, pixels: Vec<u16>, capture_slot: u64) -> Result<Self> {
        if pixels.len() != width * height {
            return Err(invalid(format!(
                "{} pixels for a {width}x{height} image",
                pixels.len()
            )));
        }
        let max = max_intensity(kappa);
        if pixels.iter().any(|&p| p > max) {
            return Err(invalid(format!("pixel exceeds {max} for kappa {kappa}")));
        }
        Ok(Self {
            width,
            height,
            kappa,
            pixels,
            capture_slot,
        })
    }

    pub fn filled(width: usize, height: usize, kappa: u32, value: u16, capture_slot: u64) -> Self {
        Self {
            width,
            height,
            kappa,
            pixels: vec![value; width * height],
            capture_slot,
        }
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> u16 {
        self.pixels[y * self.width + x]
    }

    /// R_I = 2^κ − 1.
    pub fn max_value(&self) -> u16 {
        max_intensity(self.kappa)
    }
}

pub fn max_intensity(kappa: u32) -> u16 {
    ((1u32 << kappa) - 1) as u16
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Wave {
    kx: f64,
    ky: f64,
    omega: f64,
    phase: f64,
    amp: f64,
}

/// Ground-truth scene; a pure function of (params, slot, pose).
#[derive(Debug, Clone)]
pub struct DynamicScene {
    params: SceneParams,
    waves: Vec<Wave>,
    object_start: (f64, f64),
    object_velocity: (f64, f64),
    fill: u16,
    object_value: u16,
}

impl DynamicScene {
    pub fn new(params: SceneParams) -> Result<Self> {
        params.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
        let r = max_intensity(params.kappa) as f64;
        let scale = r / 255.0;
        let waves = (0..params.components)
            .map(|_| {
                let wavelength = rng.random_range(12.0..64.0);
                let dir: f64 = rng.random_range(0.0..TAU);
                let drift_dir: f64 = rng.random_range(0.0..TAU);
                let k = TAU / wavelength;
                let (kx, ky) = (k * dir.cos(), k * dir.sin());
                let (vx, vy) = (
                    params.evolution_speed * drift_dir.cos(),
                    params.evolution_speed * drift_dir.sin(),
                );
                Wave {
                    kx,
                    ky,
                    omega: -(kx * vx + ky * vy),
                    phase: rng.random_range(0.0..TAU),
                    amp: rng.random_range(12.0..30.0) * scale,
                }
            })
            .collect();
        let heading: f64 = rng.random_range(0.0..TAU);
        let object_start = (
            rng.random_range(0.0..params.world.w as f64),
            rng.random_range(0.0..params.world.h as f64),
        );
        Ok(Self {
            object_velocity: (params.object_speed * heading.cos(), params.object_speed * heading.sin()),
            object_start,
            waves,
            fill: (r / 2.0).round() as u16,
            object_value: (r * 240.0 / 255.0).round() as u16,
            params,
        })
    }

    pub fn params(&self) -> &SceneParams {
        &self.params
    }

    pub fn geometry(&self) -> ViewGeometry {
        self.params.geometry()
    }

    /// Intensity used where nothing is known.
    pub fn fill_value(&self) -> u16 {
        self.fill
    }

    fn object_origin(&self, t: u64) -> (f64, f64) {
        let t = t as f64;
        (
            (self.object_start.0 + self.object_velocity.0 * t).rem_euclid(self.params.world.w as f64),
            (self.object_start.1 + self.object_velocity.1 * t).rem_euclid(self.params.world.h as f64),
        )
    }

    fn in_object(&self, x: usize, y: usize, origin: (f64, f64)) -> bool {
        let size = self.params.object_size as f64;
        let dx = (x as f64 - origin.0).rem_euclid(self.params.world.w as f64);
        let dy = (y as f64 - origin.1).rem_euclid(self.params.world.h as f64);
        dx < size && dy < size
    }

    fn quantize(&self, v: f64) -> u16 {
        v.round().clamp(0.0, max_intensity(self.params.kappa) as f64) as u16
    }

    /// Ground-truth rectangle with top-left `(x0, y0)` at slot `t`.
    pub fn region(&self, x0: usize, y0: usize, w: usize, h: usize, t: u64) -> Vec<u16> {
        let tf = t as f64;
        // sin(a + b) expanded so the per-column and per-row factors are shared.
        let mut col_sin = vec![0.0; w * self.waves.len()];
        let mut col_cos = vec![0.0; w * self.waves.len()];
        for (k, wave) in self.waves.iter().enumerate() {
            for i in 0..w {
                let (s, c) = (wave.kx * (x0 + i) as f64).sin_cos();
                col_sin[k * w + i] = s;
                col_cos[k * w + i] = c;
            }
        }
        let obj = self.object_origin(t);
        let base = self.fill as f64;
        let mut out = Vec::with_capacity(w * h);
        let mut row_sin = vec![0.0; self.waves.len()];
        let mut row_cos = vec![0.0; self.waves.len()];
        for j in 0..h {
            let y = y0 + j;
            for (k, wave) in self.waves.iter().enumerate() {
                let (s, c) = (wave.ky * y as f64 + wave.omega * tf + wave.phase).sin_cos();
                row_sin[k] = wave.amp * s;
                row_cos[k] = wave.amp * c;
            }
            for i in 0..w {
                let x = x0 + i;
                if self.in_object(x, y, obj) {
                    out.push(self.object_value);
                    continue;
                }
                let mut v = base;
                for k in 0..self.waves.len() {
                    v += col_sin[k * w + i] * row_cos[k] + col_cos[k * w + i] * row_sin[k];
                }
                out.push(self.quantize(v));
            }
        }
        out
    }

    /// Single ground-truth pixel.
    pub fn texel(&self, x: usize, y: usize, t: u64) -> u16 {
        self.region(x, y, 1, 1, t)[0]
    }

    /// Image seen from `pose` at slot `t`.
    pub fn observe(&self, pose: &CameraPose, t: u64) -> Result<ViewImage> {
        let (ox, oy) = self.geometry().window_origin(pose)?;
        let Extent { w, h } = self.params.window;
        Ok(ViewImage {
            width: w,
            height: h,
            kappa: self.params.kappa,
            pixels: self.region(ox, oy, w, h, t),
            capture_slot: t,
        })
    }
}

/// Fitted scene: a canvas over the bounding box of the inputs in world
/// coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneModel {
    pub origin: (usize, usize),
    pub width: usize,
    pub height: usize,
    pub values: Vec<f64>,
    /// Number of views covering each canvas pixel.
    pub coverage: Vec<u32>,
    /// Capture slot of the view that determined each pixel (newest
    /// contributor for blending backends).
    pub source_slot: Vec<Option<u64>>,
    pub fill: u16,
    pub kappa: u32,
    /// Set when fit received no views; the model renders all-fill.
    pub degenerate: bool,
}

impl SceneModel {
    fn empty(fill: u16, kappa: u32) -> Self {
        Self {
            origin: (0, 0),
            width: 0,
            height: 0,
            values: Vec::new(),
            coverage: Vec::new(),
            source_slot: Vec::new(),
            fill,
            kappa,
            degenerate: true,
        }
    }

    /// Canvas over `region`, or over the bounding box of the views.
    fn canvas(views: &[PlacedView<'_>], region: Option<Rect>, fill: u16, kappa: u32) -> Self {
        let r = region.unwrap_or_else(|| {
            let x0 = views.iter().map(|v| v.origin.0).min().unwrap_or(0);
            let y0 = views.iter().map(|v| v.origin.1).min().unwrap_or(0);
            let x1 = views.iter().map(|v| v.origin.0 + v.image.width).max().unwrap_or(0);
            let y1 = views.iter().map(|v| v.origin.1 + v.image.height).max().unwrap_or(0);
            Rect {
                x: x0,
                y: y0,
                w: x1 - x0,
                h: y1 - y0,
            }
        });
        let n = r.w * r.h;
        Self {
            origin: (r.x, r.y),
            width: r.w,
            height: r.h,
            values: vec![0.0; n],
            coverage: vec![0; n],
            source_slot: vec![None; n],
            fill,
            kappa,
            degenerate: false,
        }
    }

    /// Visit every (canvas index, view pixel) pair where `v` lands on the
    /// canvas.
    fn overlay(&mut self, v: &PlacedView<'_>, mut f: impl FnMut(&mut Self, usize, u16)) {
        let x0 = v.origin.0.max(self.origin.0);
        let y0 = v.origin.1.max(self.origin.1);
        let x1 = (v.origin.0 + v.image.width).min(self.origin.0 + self.width);
        let y1 = (v.origin.1 + v.image.height).min(self.origin.1 + self.height);
        for y in y0..y1 {
            for x in x0..x1 {
                let k = (y - self.origin.1) * self.width + (x - self.origin.0);
                f(self, k, v.image.get(x - v.origin.0, y - v.origin.1));
            }
        }
    }

    /// Canvas index of world pixel `(x, y)`, if inside.
    fn index(&self, x: usize, y: usize) -> Option<usize> {
        let (cx, cy) = (x.checked_sub(self.origin.0)?, y.checked_sub(self.origin.1)?);
        (cx < self.width && cy < self.height).then(|| cy * self.width + cx)
    }

    /// Extract the window at `pose`; uncovered pixels take the fill value.
    pub fn render(&self, geometry: &ViewGeometry, pose: &CameraPose) -> Result<ViewImage> {
        let (ox, oy) = geometry.window_origin(pose)?;
        let Extent { w, h } = geometry.window;
        let max = max_intensity(self.kappa) as f64;
        let mut pixels = Vec::with_capacity(w * h);
        let mut newest = 0;
        for j in 0..h {
            for i in 0..w {
                let p = match self.index(ox + i, oy + j) {
                    Some(k) if self.coverage[k] > 0 => {
                        newest = newest.max(self.source_slot[k].unwrap_or(0));
                        self.values[k].round().clamp(0.0, max) as u16
                    }
                    _ => self.fill,
                };
                pixels.push(p);
            }
        }
        Ok(ViewImage {
            width: w,
            height: h,
            kappa: self.kappa,
            pixels,
            capture_slot: newest,
        })
    }
}

struct PlacedView<'a> {
    image: &'a ViewImage,
    origin: (usize, usize),
}

fn place<'a>(geometry: &ViewGeometry, views: &'a [(ViewImage, CameraPose)]) -> Result<Vec<PlacedView<'a>>> {
    views
        .iter()
        .map(|(image, pose)| {
            Ok(PlacedView {
                image,
                origin: geometry.window_origin(pose)?,
            })
        })
        .collect()
}

/// Axis-aligned world rectangle.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Rect {
    pub x: usize,
    pub y: usize,
    pub w: usize,
    pub h: usize,
}

/// Fit/render interface for reconstruction methods.
pub trait ReconstructionBackend: Send + Sync {
    /// Fit a model of `region` (the inputs' bounding box when `None`).
    fn fit_region(
        &self,
        geometry: &ViewGeometry,
        views: &[(ViewImage, CameraPose)],
        region: Option<Rect>,
    ) -> Result<SceneModel>;

    fn fit(&self, geometry: &ViewGeometry, views: &[(ViewImage, CameraPose)]) -> Result<SceneModel> {
        self.fit_region(geometry, views, None)
    }

    fn render(&self, geometry: &ViewGeometry, model: &SceneModel, pose: &CameraPose) -> Result<ViewImage> {
        model.render(geometry, pose)
    }

    /// Fit only what the view at `pose` can see, then render it. Same pixels
    /// as `render(fit(..))`.
    fn fit_render(&self, geometry: &ViewGeometry, views: &[(ViewImage, CameraPose)], pose: &CameraPose) -> Result<ViewImage> {
        let (x, y) = geometry.window_origin(pose)?;
        let region = Rect {
            x,
            y,
            w: geometry.window.w,
            h: geometry.window.h,
        };
        let model = self.fit_region(geometry, views, Some(region))?;
        self.render(geometry, &model, pose)
    }
}

/// Freshest-wins compositing: every covered pixel comes from the overlapping
/// view with the largest capture slot (first in input order on ties).
#[derive(Debug, Clone, Copy, Default)]
pub struct CompositeBackend {
    pub fill: u16,
    pub kappa: u32,
}

impl ReconstructionBackend for CompositeBackend {
    fn fit_region(
        &self,
        geometry: &ViewGeometry,
        views: &[(ViewImage, CameraPose)],
        region: Option<Rect>,
    ) -> Result<SceneModel> {
        if views.is_empty() {
            return Ok(SceneModel::empty(self.fill, self.kappa));
        }
        let placed = place(geometry, views)?;
        let mut m = SceneModel::canvas(&placed, region, self.fill, self.kappa);
        for v in &placed {
            let slot = v.image.capture_slot;
            m.overlay(v, |m, k, px| {
                m.coverage[k] += 1;
                if m.source_slot[k].is_none_or(|s| slot > s) {
                    m.source_slot[k] = Some(slot);
                    m.values[k] = px as f64;
                }
            });
        }
        Ok(m)
    }
}

/// Per-pixel mean of all overlapping views: the minimiser of the summed
/// squared photometric loss over the inputs.
#[derive(Debug, Clone, Copy, Default)]
pub struct LeastSquaresBackend {
    pub fill: u16,
    pub kappa: u32,
}

impl ReconstructionBackend for LeastSquaresBackend {
    fn fit_region(
        &self,
        geometry: &ViewGeometry,
        views: &[(ViewImage, CameraPose)],
        region: Option<Rect>,
    ) -> Result<SceneModel> {
        if views.is_empty() {
            return Ok(SceneModel::empty(self.fill, self.kappa));
        }
        let placed = place(geometry, views)?;
        let mut m = SceneModel::canvas(&placed, region, self.fill, self.kappa);
        for v in &placed {
            let slot = v.image.capture_slot;
            m.overlay(v, |m, k, px| {
                m.coverage[k] += 1;
                m.values[k] += px as f64;
                m.source_slot[k] = Some(m.source_slot[k].map_or(slot, |s| s.max(slot)));
            });
        }
        for (v, &c) in m.values.iter_mut().zip(&m.coverage) {
            if c > 0 {
                *v /= c as f64;
            }
        }
        Ok(m)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    #[default]
    LeastSquares,
    Composite,
}

impl BackendKind {
    pub fn build(self, fill: u16, kappa: u32) -> Box<dyn ReconstructionBackend> {
        match self {
            BackendKind::LeastSquares => Box::new(LeastSquaresBackend { fill, kappa }),
            BackendKind::Composite => Box::new(CompositeBackend { fill, kappa }),
        }
    }
}
