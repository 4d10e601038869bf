//! Slotted simulation of camera capture, channel transmission and per-camera
//! Age of Information.
//!
//! Camera ids are 0-based. The clock starts at slot 0, where the first
//! captures are taken and submitted; every [`SimWorld::advance`] moves it one
//! slot forward and processes, in order: channel modulation, deliveries,
//! captures, submissions.

use std::f64::consts::{FRAC_PI_2, PI, TAU};
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::channel::{ChannelProcess, LinkMode, Submission};
use crate::error::{invalid, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraPose {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub theta: f64,
    pub phi: f64,
}

impl CameraPose {
    /// Validates finiteness and angle ranges; `theta` is wrapped into [0, 2π).
    pub fn new(x: f64, y: f64, z: f64, theta: f64, phi: f64) -> Result<Self> {
        if ![x, y, z, theta, phi].iter().all(|v| v.is_finite()) {
            return Err(invalid("camera pose has non-finite components"));
        }
        if !(-FRAC_PI_2..=FRAC_PI_2).contains(&phi) {
            return Err(invalid(format!("phi {phi} outside [-pi/2, pi/2]")));
        }
        Ok(Self {
            x,
            y,
            z,
            theta: wrap_angle(theta),
            phi,
        })
    }

    pub fn origin() -> Self {
        Self {
            x: 0.0,
            y: 0.0,
            z: 0.0,
            theta: 0.0,
            phi: 0.0,
        }
    }

    pub fn as_array(&self) -> [f64; 5] {
        [self.x, self.y, self.z, self.theta, self.phi]
    }
}

fn wrap_angle(a: f64) -> f64 {
    let w = a.rem_euclid(TAU);
    // rem_euclid can round up to exactly TAU for tiny negative inputs.
    if w >= TAU {
        0.0
    } else {
        w
    }
}

/// One captured image. The pixels are not stored: `scene.observe(pose, S)`
/// regenerates them exactly.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Frame {
    pub camera: usize,
    pub generation_slot: u64,
    pub arrival_slot: Option<u64>,
    pub pose: CameraPose,
}

impl Frame {
    pub fn new(camera: usize, generation_slot: u64, pose: CameraPose) -> Self {
        Self {
            camera,
            generation_slot,
            arrival_slot: None,
            pose,
        }
    }

    /// Y = D − S once delivered.
    pub fn transmission_slots(&self) -> Option<u64> {
        self.arrival_slot.map(|d| d - self.generation_slot)
    }
}

/// Per-camera freshness bookkeeping at the receiver.
#[derive(Debug, Clone)]
pub struct AoITracker {
    last_fresh: Vec<u64>,
    latest: Vec<Option<Frame>>,
}

impl AoITracker {
    pub fn new(n_cameras: usize) -> Self {
        Self {
            last_fresh: vec![0; n_cameras],
            latest: vec![None; n_cameras],
        }
    }

    pub fn n_cameras(&self) -> usize {
        self.last_fresh.len()
    }

    /// Register a delivered frame. Older frames than the current freshest are
    /// ignored so U stays nondecreasing.
    pub fn record_delivery(&mut self, frame: Frame) -> Result<()> {
        let n = frame.camera;
        if n >= self.n_cameras() {
            return Err(invalid(format!("unknown camera {n}")));
        }
        let d = frame
            .arrival_slot
            .ok_or_else(|| invalid("delivered frame has no arrival slot"))?;
        if d <= frame.generation_slot {
            return Err(invalid(format!(
                "arrival slot {d} not after generation slot {}",
                frame.generation_slot
            )));
        }
        let newer = match &self.latest[n] {
            None => true,
            Some(prev) => frame.generation_slot > prev.generation_slot,
        };
        if newer {
            self.last_fresh[n] = self.last_fresh[n].max(frame.generation_slot);
            self.latest[n] = Some(frame);
        }
        Ok(())
    }

    /// U^n: generation slot of the freshest delivered frame, 0 before any.
    pub fn last_fresh(&self, n: usize) -> Result<u64> {
        self.last_fresh
            .get(n)
            .copied()
            .ok_or_else(|| invalid(format!("unknown camera {n}")))
    }

    /// Δ^n(t) = t − U^n(t).
    pub fn aoi(&self, n: usize, t: u64) -> Result<u64> {
        let u = self.last_fresh(n)?;
        t.checked_sub(u)
            .ok_or_else(|| invalid(format!("slot {t} precedes freshest generation {u}")))
    }

    pub fn aoi_vector(&self, t: u64) -> Vec<u64> {
        self.last_fresh.iter().map(|&u| t.saturating_sub(u)).collect()
    }

    /// Mean AoI across cameras.
    pub fn average_aoi(&self, t: u64) -> f64 {
        let n = self.n_cameras();
        if n == 0 {
            return 0.0;
        }
        self.aoi_vector(t).iter().map(|&a| a as f64).sum::<f64>() / n as f64
    }

    /// Newest delivered frame per camera (arrived by `t`), ordered by camera
    /// id. Cameras without a delivery are skipped.
    pub fn latest_images(&self, t: u64) -> Vec<(usize, Frame, CameraPose)> {
        self.latest
            .iter()
            .enumerate()
            .filter_map(|(n, f)| {
                f.filter(|f| f.arrival_slot.is_some_and(|d| d <= t))
                    .map(|f| (n, f, f.pose))
            })
            .collect()
    }

    pub fn latest(&self, n: usize) -> Option<&Frame> {
        self.latest.get(n).and_then(|f| f.as_ref())
    }
}

/// Mean of `aoi()` across cameras.
pub fn average_aoi(tracker: &AoITracker, t: u64) -> f64 {
    tracker.average_aoi(t)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RigKind {
    /// Cameras on a circle looking at the centre.
    #[default]
    Inward,
    /// Cameras near the centre looking out.
    Outward,
}

/// Parametric camera rig: `n_views` poses evenly spaced in angle. The last
/// index is reserved as the held-out novel view.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rig {
    pub kind: RigKind,
    pub n_views: usize,
    pub center: (f64, f64),
    /// Distance of the camera positions from the centre.
    pub radius: f64,
    /// Angular orbit speed in radians per slot.
    pub orbit_speed: f64,
}

impl Rig {
    pub fn new(kind: RigKind, n_views: usize, center: (f64, f64), radius: f64) -> Self {
        Self {
            kind,
            n_views,
            center,
            radius,
            orbit_speed: 0.0,
        }
    }

    pub fn pose(&self, view: usize, t: u64) -> CameraPose {
        let a = TAU * view as f64 / self.n_views as f64 + self.orbit_speed * t as f64;
        let (s, c) = a.sin_cos();
        let theta = match self.kind {
            RigKind::Inward => a + PI,
            RigKind::Outward => a,
        };
        CameraPose {
            x: self.center.0 + self.radius * c,
            y: self.center.1 + self.radius * s,
            z: 0.0,
            theta: wrap_angle(theta),
            phi: 0.0,
        }
    }

    /// Pose used for the novel-view evaluation.
    pub fn held_out(&self, t: u64) -> CameraPose {
        self.pose(self.n_views - 1, t)
    }
}

/// How cameras produce new frames.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GenerationMode {
    /// Periodic capture every C slots, newest frame replaces the held one.
    #[default]
    Capture,
    /// Captures only at modulated-Poisson arrival instants (rate λ_g).
    Mmpp,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimParams {
    pub n_cameras: usize,
    pub capture_interval: u64,
    pub slot_duration_s: f64,
    /// Per-camera capture phase; defaults to `n mod C`.
    pub phases: Option<Vec<u64>>,
    pub generation: GenerationMode,
    /// Keep every delivered frame in [`SimWorld::delivery_log`].
    pub record_log: bool,
}

impl Default for SimParams {
    fn default() -> Self {
        Self {
            n_cameras: 18,
            capture_interval: 1,
            slot_duration_s: 0.03,
            phases: None,
            generation: GenerationMode::Capture,
            record_log: false,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SimWorld {
    n_cameras: usize,
    capture_interval: u64,
    slot_duration_s: f64,
    phases: Vec<u64>,
    generation: GenerationMode,
    t: u64,
    channel: ChannelProcess,
    tracker: AoITracker,
    rig: Rig,
    held: Vec<Option<Frame>>,
    next_generation: Vec<u64>,
    rr_next: usize,
    log: Option<Vec<Frame>>,
}

impl SimWorld {
    /// Build the world and process slot 0 (initial captures and submissions).
    pub fn new(params: SimParams, channel: ChannelProcess, rig: Rig) -> Result<Self> {
        let n = params.n_cameras;
        if n == 0 {
            return Err(invalid("need at least one camera"));
        }
        if params.capture_interval == 0 {
            return Err(invalid("capture interval must be at least 1 slot"));
        }
        if rig.n_views < n + 1 {
            return Err(invalid(format!(
                "rig has {} views, need {} cameras plus a held-out view",
                rig.n_views, n
            )));
        }
        if channel.links() == LinkMode::PerCamera && channel.server_count() < n {
            return Err(invalid("per-camera channel has fewer links than cameras"));
        }
        let phases = match params.phases {
            Some(p) if p.len() != n => {
                return Err(invalid(format!("{} phases for {n} cameras", p.len())))
            }
            Some(p) => p.into_iter().map(|v| v % params.capture_interval).collect(),
            None => (0..n as u64).map(|i| i % params.capture_interval).collect(),
        };
        let mut world = Self {
            n_cameras: n,
            capture_interval: params.capture_interval,
            slot_duration_s: params.slot_duration_s,
            phases,
            generation: params.generation,
            t: 0,
            channel,
            tracker: AoITracker::new(n),
            rig,
            held: vec![None; n],
            next_generation: vec![0; n],
            rr_next: 0,
            log: params.record_log.then(Vec::new),
        };
        if world.generation == GenerationMode::Mmpp {
            for i in 0..n {
                world.next_generation[i] = world.channel.sample_interarrival();
            }
        }
        world.capture_and_submit()?;
        Ok(world)
    }

    pub fn n_cameras(&self) -> usize {
        self.n_cameras
    }

    pub fn capture_interval(&self) -> u64 {
        self.capture_interval
    }

    pub fn slot_duration_s(&self) -> f64 {
        self.slot_duration_s
    }

    pub fn now(&self) -> u64 {
        self.t
    }

    pub fn tracker(&self) -> &AoITracker {
        &self.tracker
    }

    pub fn channel(&self) -> &ChannelProcess {
        &self.channel
    }

    pub fn rig(&self) -> &Rig {
        &self.rig
    }

    pub fn pose(&self, n: usize, t: u64) -> CameraPose {
        self.rig.pose(n, t)
    }

    pub fn held_out_pose(&self, t: u64) -> CameraPose {
        self.rig.held_out(t)
    }

    pub fn held_frame(&self, n: usize) -> Option<&Frame> {
        self.held.get(n).and_then(|f| f.as_ref())
    }

    /// Every delivered frame so far, when recording is enabled.
    pub fn delivery_log(&self) -> Option<&[Frame]> {
        self.log.as_deref()
    }

    /// Step to slot t+1 and return the frames delivered in it.
    pub fn advance(&mut self) -> Result<Vec<Frame>> {
        self.t += 1;
        self.channel.step_modulation(1)?;
        let delivered = self.channel.take_deliveries(self.t);
        for f in &delivered {
            self.tracker.record_delivery(*f)?;
        }
        if let Some(log) = &mut self.log {
            log.extend(delivered.iter().copied());
        }
        self.capture_and_submit()?;
        Ok(delivered)
    }

    /// Advance `k` slots, collecting all deliveries.
    pub fn advance_by(&mut self, k: u64) -> Result<Vec<Frame>> {
        let mut out = Vec::new();
        for _ in 0..k {
            out.extend(self.advance()?);
        }
        Ok(out)
    }

    fn capture_and_submit(&mut self) -> Result<()> {
        let t = self.t;
        for n in 0..self.n_cameras {
            let capture = match self.generation {
                GenerationMode::Capture => t % self.capture_interval == self.phases[n],
                GenerationMode::Mmpp => {
                    let due = self.next_generation[n] <= t;
                    if due {
                        let mut next = self.next_generation[n];
                        while next <= t {
                            next = next.saturating_add(self.channel.sample_interarrival().max(1));
                        }
                        self.next_generation[n] = next;
                    }
                    due
                }
            };
            if capture {
                self.held[n] = Some(Frame::new(n, t, self.rig.pose(n, t)));
            }
        }
        // Round-robin over cameras holding frames, starting after the last
        // one served.
        for k in 0..self.n_cameras {
            let n = (self.rr_next + k) % self.n_cameras;
            let Some(frame) = self.held[n] else { continue };
            let link = self.channel.link_of(n);
            if !self.channel.is_idle(link, t) {
                continue;
            }
            if let Submission::Admitted { .. } = self.channel.submit(frame, t)? {
                self.held[n] = None;
                if self.channel.links() == LinkMode::Shared {
                    self.rr_next = (n + 1) % self.n_cameras;
                }
            }
        }
        Ok(())
    }
}

/// Per-slot, per-camera CSV trace: `t,n,aoi,u,delivered,S,D`, where S and D
/// describe the freshest delivered frame (empty before the first delivery).
pub struct TraceWriter<W: Write> {
    inner: csv::Writer<W>,
}

impl<W: Write> TraceWriter<W> {
    pub fn new(out: W) -> Result<Self> {
        let mut inner = csv::Writer::from_writer(out);
        inner.write_record(["t", "n", "aoi", "u", "delivered", "S", "D"])?;
        Ok(Self { inner })
    }

    pub fn record(&mut self, world: &SimWorld, delivered: &[Frame]) -> Result<()> {
        let t = world.now();
        let tracker = world.tracker();
        for n in 0..world.n_cameras() {
            let hit = delivered.iter().any(|f| f.camera == n);
            let (s, d) = match tracker.latest(n) {
                Some(f) => (
                    f.generation_slot.to_string(),
                    f.arrival_slot.map(|d| d.to_string()).unwrap_or_default(),
                ),
                None => (String::new(), String::new()),
            };
            self.inner.write_record([
                t.to_string(),
                n.to_string(),
                tracker.aoi(n, t)?.to_string(),
                tracker.last_fresh(n)?.to_string(),
                u8::from(hit).to_string(),
                s,
                d,
            ])?;
        }
        Ok(())
    }

    pub fn finish(mut self) -> Result<W> {
        self.inner.flush()?;
        self.inner
            .into_inner()
            .map_err(|e| crate::Error::Io(e.into_error()))
    }
}
