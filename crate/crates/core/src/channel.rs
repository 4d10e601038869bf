//! Bufferless unit-capacity wireless channel driven by a Markov-modulated
//! arrival/service process.
//!
//! All rates are per slot. A single continuous-time Markov chain (the
//! modulating chain) selects the current [`StateRates`]; with two states this
//! is the Gilbert-Elliott / switched-Poisson special case. Service durations
//! are exponential draws rounded up to whole slots.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::streaming::Frame;

/// Dense row-major square matrix. Only what the CTMC math needs.
#[derive(Debug, Clone, PartialEq)]
pub struct SquareMatrix {
    n: usize,
    data: Vec<f64>,
}

impl SquareMatrix {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            data: vec![0.0; n * n],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(invalid("matrix rows must all have length equal to the row count"));
        }
        Ok(Self {
            n,
            data: rows.iter().flatten().copied().collect(),
        })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.n + j] = v;
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    pub fn matmul(&self, other: &Self) -> Self {
        assert_eq!(self.n, other.n, "dimension mismatch");
        let n = self.n;
        let mut out = Self::zeros(n);
        for i in 0..n {
            for k in 0..n {
                let a = self.data[i * n + k];
                if a == 0.0 {
                    continue;
                }
                for j in 0..n {
                    out.data[i * n + j] += a * other.data[k * n + j];
                }
            }
        }
        out
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self {
            n: self.n,
            data: self.data.iter().map(|v| v * s).collect(),
        }
    }

    pub fn add_assign(&mut self, other: &Self) {
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    /// Maximum absolute row sum.
    pub fn norm_inf(&self) -> f64 {
        (0..self.n)
            .map(|i| self.row(i).iter().map(|v| v.abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// CTMC generator: non-negative off-diagonal transition rates, rows summing
/// to zero.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorMatrix {
    q: SquareMatrix,
}

impl GeneratorMatrix {
    /// Build from the row-major list of off-diagonal rates μ_ij
    /// (`m * (m - 1)` entries, row i skipping column i).
    pub fn from_off_diagonal(m: usize, mu: &[f64]) -> Result<Self> {
        if m < 2 {
            return Err(invalid(format!("generator needs at least 2 states, got {m}")));
        }
        if mu.len() != m * (m - 1) {
            return Err(invalid(format!(
                "expected {} off-diagonal rates for {m} states, got {}",
                m * (m - 1),
                mu.len()
            )));
        }
        let mut q = SquareMatrix::zeros(m);
        let mut it = mu.iter();
        for i in 0..m {
            for j in 0..m {
                if i != j {
                    q.set(i, j, *it.next().expect("length checked"));
                }
            }
        }
        Self::from_rates(q)
    }

    /// Two-state chain: `mu1` is the rate out of state 0, `mu2` out of state 1.
    pub fn two_state(mu1: f64, mu2: f64) -> Result<Self> {
        Self::from_off_diagonal(2, &[mu1, mu2])
    }

    /// Validate a full matrix. The diagonal is overwritten with the negated
    /// off-diagonal row sum.
    pub fn from_rates(mut q: SquareMatrix) -> Result<Self> {
        let m = q.dim();
        if m < 2 {
            return Err(invalid("generator needs at least 2 states"));
        }
        for i in 0..m {
            let mut exit = 0.0;
            for j in 0..m {
                if i == j {
                    continue;
                }
                let r = q.get(i, j);
                if !r.is_finite() {
                    return Err(invalid(format!("non-finite rate at ({i},{j})")));
                }
                if r < 0.0 {
                    return Err(invalid(format!("negative rate {r} at ({i},{j})")));
                }
                exit += r;
            }
            q.set(i, i, -exit);
        }
        Ok(Self { q })
    }

    pub fn states(&self) -> usize {
        self.q.dim()
    }

    pub fn matrix(&self) -> &SquareMatrix {
        &self.q
    }

    pub fn rate(&self, i: usize, j: usize) -> f64 {
        self.q.get(i, j)
    }

    /// Total rate of leaving state `i` (μ_i).
    pub fn exit_rate(&self, i: usize) -> f64 {
        -self.q.get(i, i)
    }
}

/// `P(dt) = exp(Q dt)`: the probability of being in state j after `dt` slots
/// having started in state i.
///
/// Two-state chains use the closed form; larger chains use scaling and
/// squaring over a truncated Taylor series.
pub fn transition_matrix(generator: &GeneratorMatrix, dt: f64) -> Result<SquareMatrix> {
    if !dt.is_finite() || dt < 0.0 {
        return Err(invalid(format!("dt must be finite and non-negative, got {dt}")));
    }
    if !generator.q.is_finite() {
        return Err(invalid("generator has non-finite entries"));
    }
    let m = generator.states();
    if dt == 0.0 {
        return Ok(SquareMatrix::identity(m));
    }
    let mut p = if m == 2 {
        two_state_closed_form(generator.exit_rate(0), generator.exit_rate(1), dt)
    } else {
        expm_scaling_squaring(&generator.q.scaled(dt))
    };
    normalize_rows(&mut p);
    Ok(p)
}

fn two_state_closed_form(mu1: f64, mu2: f64, dt: f64) -> SquareMatrix {
    let total = mu1 + mu2;
    if total == 0.0 {
        return SquareMatrix::identity(2);
    }
    let decay = (-total * dt).exp();
    let mut p = SquareMatrix::zeros(2);
    p.set(0, 0, (mu2 + mu1 * decay) / total);
    p.set(0, 1, (mu1 - mu1 * decay) / total);
    p.set(1, 0, (mu2 - mu2 * decay) / total);
    p.set(1, 1, (mu1 + mu2 * decay) / total);
    p
}

fn expm_scaling_squaring(a: &SquareMatrix) -> SquareMatrix {
    let n = a.dim();
    let norm = a.norm_inf();
    let mut squarings = 0u32;
    if norm > 0.5 {
        squarings = (norm / 0.5).log2().ceil() as u32;
    }
    let scaled = a.scaled(0.5f64.powi(squarings as i32));

    let mut sum = SquareMatrix::identity(n);
    let mut term = SquareMatrix::identity(n);
    for k in 1..=30 {
        term = term.matmul(&scaled).scaled(1.0 / k as f64);
        sum.add_assign(&term);
        if term.norm_inf() < 1e-18 {
            break;
        }
    }
    for _ in 0..squarings {
        sum = sum.matmul(&sum);
        normalize_rows(&mut sum);
    }
    sum
}

/// Clamp round-off negatives and rescale each row to sum to one.
fn normalize_rows(p: &mut SquareMatrix) {
    let n = p.dim();
    for i in 0..n {
        let mut s = 0.0;
        for j in 0..n {
            let v = p.get(i, j).clamp(0.0, 1.0);
            p.set(i, j, v);
            s += v;
        }
        if s > 0.0 {
            for j in 0..n {
                p.set(i, j, p.get(i, j) / s);
            }
        }
    }
}

/// Per-state arrival (λ_g) and service (λ_d) rates, both per slot.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StateRates {
    pub arrival: f64,
    pub service: f64,
}

impl StateRates {
    pub fn new(arrival: f64, service: f64) -> Result<Self> {
        for (name, v) in [("arrival", arrival), ("service", service)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(invalid(format!("{name} rate must be positive and finite, got {v}")));
            }
        }
        Ok(Self { arrival, service })
    }
}

/// Outcome of offering a frame to the channel.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Submission {
    /// Frame admitted; it will arrive at the given slot.
    Admitted { arrival_slot: u64 },
    /// Server occupied. Nothing changed; the caller keeps the frame.
    Busy,
}

/// How cameras map onto servers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LinkMode {
    /// Every camera owns a unit-capacity uplink.
    #[default]
    PerCamera,
    /// All cameras contend for one unit-capacity server.
    Shared,
}

#[derive(Debug, Clone, Default)]
struct Server {
    busy_until: Option<u64>,
    in_flight: Option<Frame>,
}

/// Longest service duration representable; starved channels saturate here.
const MAX_SLOTS: f64 = (u64::MAX / 4) as f64;

/// Markov-modulated bufferless channel with one or more unit-capacity
/// servers sharing the modulating chain and random stream.
#[derive(Debug, Clone)]
pub struct ChannelProcess {
    generator: GeneratorMatrix,
    rates: Vec<StateRates>,
    state: usize,
    servers: Vec<Server>,
    links: LinkMode,
    one_step: SquareMatrix,
    rng: ChaCha8Rng,
}

impl ChannelProcess {
    /// `n_cameras` sizes the server pool under [`LinkMode::PerCamera`].
    pub fn new(
        generator: GeneratorMatrix,
        rates: Vec<StateRates>,
        links: LinkMode,
        n_cameras: usize,
        seed: u64,
    ) -> Result<Self> {
        if rates.len() != generator.states() {
            return Err(invalid(format!(
                "{} state rates for a {}-state generator",
                rates.len(),
                generator.states()
            )));
        }
        for r in &rates {
            StateRates::new(r.arrival, r.service)?;
        }
        let servers = match links {
            LinkMode::PerCamera => n_cameras.max(1),
            LinkMode::Shared => 1,
        };
        let one_step = transition_matrix(&generator, 1.0)?;
        Ok(Self {
            generator,
            rates,
            state: 0,
            servers: vec![Server::default(); servers],
            links,
            one_step,
            rng: ChaCha8Rng::seed_from_u64(seed),
        })
    }

    pub fn generator(&self) -> &GeneratorMatrix {
        &self.generator
    }

    pub fn state(&self) -> usize {
        self.state
    }

    pub fn set_state(&mut self, state: usize) -> Result<()> {
        if state >= self.generator.states() {
            return Err(invalid(format!("state {state} out of range")));
        }
        self.state = state;
        Ok(())
    }

    pub fn current_rates(&self) -> StateRates {
        self.rates[self.state]
    }

    pub fn links(&self) -> LinkMode {
        self.links
    }

    pub fn server_count(&self) -> usize {
        self.servers.len()
    }

    /// Advance the modulating chain by `dt` slots and return the new state.
    pub fn step_modulation(&mut self, dt: u64) -> Result<usize> {
        if dt == 0 {
            return Ok(self.state);
        }
        let p = if dt == 1 {
            self.one_step.clone()
        } else {
            transition_matrix(&self.generator, dt as f64)?
        };
        let u: f64 = self.rng.random();
        let row = p.row(self.state);
        let mut acc = 0.0;
        let mut next = row.len() - 1;
        for (j, &pj) in row.iter().enumerate() {
            acc += pj;
            if u < acc {
                next = j;
                break;
            }
        }
        // Guard against picking a zero-probability tail state on round-off.
        if row[next] == 0.0 {
            next = self.state;
        }
        self.state = next;
        Ok(next)
    }

    fn exp_draw(&mut self, rate: f64) -> f64 {
        Exp::new(rate)
            .expect("rates validated positive")
            .sample(&mut self.rng)
    }

    /// Whole-slot gap to the next arrival under the current state's λ_g.
    /// Flooring an exponential gives a geometric gap, the slotted
    /// counterpart of Poisson arrivals.
    pub fn sample_interarrival(&mut self) -> u64 {
        let rate = self.rates[self.state].arrival;
        self.exp_draw(rate).floor().min(MAX_SLOTS) as u64
    }

    /// Service duration in slots: ceiling of an exponential with the current
    /// state's λ_d, at least one slot.
    pub fn sample_service(&mut self) -> u64 {
        let rate = self.rates[self.state].service;
        (self.exp_draw(rate).ceil().min(MAX_SLOTS) as u64).max(1)
    }

    pub fn link_of(&self, camera: usize) -> usize {
        match self.links {
            LinkMode::PerCamera => camera,
            LinkMode::Shared => 0,
        }
    }

    pub fn is_idle(&self, link: usize, t: u64) -> bool {
        match self.servers[link].busy_until {
            None => true,
            Some(d) => d <= t && self.servers[link].in_flight.is_none(),
        }
    }

    /// Slot until which `link` is occupied, if any.
    pub fn busy_until(&self, link: usize) -> Option<u64> {
        self.servers[link].busy_until
    }

    /// Offer `frame` at slot `t`. Admitted frames get a sampled service time
    /// and their arrival slot filled in.
    pub fn submit(&mut self, mut frame: Frame, t: u64) -> Result<Submission> {
        if frame.generation_slot > t {
            return Err(invalid(format!(
                "frame generated at slot {} submitted at earlier slot {t}",
                frame.generation_slot
            )));
        }
        let link = self.link_of(frame.camera);
        if link >= self.servers.len() {
            return Err(invalid(format!("camera {} has no uplink", frame.camera)));
        }
        if !self.is_idle(link, t) {
            return Ok(Submission::Busy);
        }
        let service = self.sample_service();
        let arrival = t.saturating_add(service);
        frame.arrival_slot = Some(arrival);
        let server = &mut self.servers[link];
        server.busy_until = Some(arrival);
        server.in_flight = Some(frame);
        Ok(Submission::Admitted {
            arrival_slot: arrival,
        })
    }

    /// Release every frame whose service completes at or before `t`.
    pub fn take_deliveries(&mut self, t: u64) -> Vec<Frame> {
        let mut out = Vec::new();
        for server in &mut self.servers {
            if matches!(server.busy_until, Some(d) if d <= t) {
                if let Some(f) = server.in_flight.take() {
                    out.push(f);
                }
            }
        }
        out
    }

    /// Frame currently in service on `link`, if any.
    pub fn in_flight(&self, link: usize) -> Option<&Frame> {
        self.servers[link].in_flight.as_ref()
    }
}
