//! Deterministic event-driven simulation kernel.
//!
//! Virtual time is an integer millisecond counter. Events dispatch in
//! `(fire_at, seq)` order where `seq` is the insertion sequence, so
//! simultaneous events run FIFO. All randomness flows through named
//! [`RandomSource`] streams so that adding a metric or profile to an
//! experiment never perturbs the draws of another.

use std::cmp::Reverse;
use std::collections::BinaryHeap;
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Default dispatch ceiling; hitting it means a model failed to terminate.
pub const DEFAULT_EVENT_CEILING: u64 = 100_000_000;

/// Descriptor of what an event does. Payload ids are small indices into
/// per-iteration tables owned by the caller.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum EventKind {
    /// A git push finished uploading; webhooks may now be notified.
    PushArrived { push: u32 },
    /// A reconciler observed the new revision (sync complete).
    SyncFired { rec: u32 },
    /// A reconciler finished applying the drift.
    ReconcileDone { rec: u32 },
    /// The cluster scheduled a deployment (creation timestamp set).
    DeployScheduled { app: u32 },
    /// All replicas of a deployment became available.
    PodHealthy { app: u32 },
    /// One step of a package hydration pipeline (0 = variant up,
    /// 1..=4 = lifecycle transitions, 5 = merge into main).
    HydrationStep { pkg: u32, step: u8 },
    /// Resource utilization sampled from the control-plane namespace.
    ResourceSample,
}

impl EventKind {
    /// Stable label used in event-trace logs.
    pub fn label(&self) -> String {
        match self {
            EventKind::PushArrived { push } => format!("push-arrived:{push}"),
            EventKind::SyncFired { rec } => format!("sync-fired:{rec}"),
            EventKind::ReconcileDone { rec } => format!("reconcile-done:{rec}"),
            EventKind::DeployScheduled { app } => format!("deploy-scheduled:{app}"),
            EventKind::PodHealthy { app } => format!("pod-healthy:{app}"),
            EventKind::HydrationStep { pkg, step } => format!("hydration-step:{pkg}.{step}"),
            EventKind::ResourceSample => "resource-sample".to_string(),
        }
    }
}

impl fmt::Display for EventKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

/// An event drawn from the queue, ready to be handled.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SimEvent {
    pub fire_at_ms: u64,
    pub seq: u64,
    pub kind: EventKind,
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct Queued {
    fire_at_ms: u64,
    seq: u64,
    kind: EventKind,
}

impl Ord for Queued {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        (self.fire_at_ms, self.seq).cmp(&(other.fire_at_ms, other.seq))
    }
}

impl PartialOrd for Queued {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

/// Virtual clock plus event queue for one isolated simulation instance.
pub struct Simulator {
    now_ms: u64,
    next_seq: u64,
    dispatched: u64,
    ceiling: u64,
    queue: BinaryHeap<Reverse<Queued>>,
    trace: Option<Vec<String>>,
}

impl Default for Simulator {
    fn default() -> Self {
        Self::new()
    }
}

impl Simulator {
    pub fn new() -> Self {
        Simulator {
            now_ms: 0,
            next_seq: 0,
            dispatched: 0,
            ceiling: DEFAULT_EVENT_CEILING,
            queue: BinaryHeap::new(),
            trace: None,
        }
    }

    pub fn with_ceiling(mut self, ceiling: u64) -> Self {
        self.ceiling = ceiling;
        self
    }

    /// Start recording one `<fire_at_ms>,<seq>,<kind>` line per dispatch.
    pub fn enable_trace(&mut self) {
        self.trace = Some(Vec::new());
    }

    pub fn take_trace(&mut self) -> Vec<String> {
        self.trace.take().unwrap_or_default()
    }

    pub fn now_ms(&self) -> u64 {
        self.now_ms
    }

    pub fn pending(&self) -> usize {
        self.queue.len()
    }

    /// Enqueue an event. Scheduling in the past signals a model bug and
    /// is rejected.
    pub fn schedule(&mut self, fire_at_ms: u64, kind: EventKind) -> Result<()> {
        if fire_at_ms < self.now_ms {
            return Err(Error::ScheduleInPast {
                fire_at: fire_at_ms,
                now: self.now_ms,
            });
        }
        let seq = self.next_seq;
        self.next_seq += 1;
        self.queue.push(Reverse(Queued {
            fire_at_ms,
            seq,
            kind,
        }));
        Ok(())
    }

    /// Schedule relative to the current clock.
    pub fn schedule_in(&mut self, delay_ms: u64, kind: EventKind) -> Result<()> {
        self.schedule(self.now_ms + delay_ms, kind)
    }

    /// Pop the next event, advance the clock and trace it. Returns `None`
    /// once the queue is empty.
    pub fn next_event(&mut self) -> Result<Option<SimEvent>> {
        let Some(Reverse(ev)) = self.queue.pop() else {
            return Ok(None);
        };
        debug_assert!(ev.fire_at_ms >= self.now_ms, "clock must not decrease");
        self.now_ms = ev.fire_at_ms;
        self.dispatched += 1;
        if self.dispatched > self.ceiling {
            return Err(Error::EventCeiling {
                limit: self.ceiling,
            });
        }
        if let Some(trace) = &mut self.trace {
            trace.push(format!("{},{},{}", ev.fire_at_ms, ev.seq, ev.kind.label()));
        }
        Ok(Some(SimEvent {
            fire_at_ms: ev.fire_at_ms,
            seq: ev.seq,
            kind: ev.kind,
        }))
    }

    /// Drain the queue through `handler`, which may schedule follow-up
    /// events. Returns the final virtual time.
    pub fn run_until_idle<F>(&mut self, mut handler: F) -> Result<u64>
    where
        F: FnMut(&mut Simulator, SimEvent) -> Result<()>,
    {
        while let Some(ev) = self.next_event()? {
            handler(self, ev)?;
        }
        Ok(self.now_ms)
    }
}

/// Converts a latency in seconds to integer virtual milliseconds.
pub fn secs_to_ms(seconds: f64) -> u64 {
    debug_assert!(seconds >= 0.0, "latencies are non-negative");
    (seconds * 1000.0).round() as u64
}

/// Converts integer virtual milliseconds back to seconds.
pub fn ms_to_secs(ms: u64) -> f64 {
    ms as f64 / 1000.0
}

/// Master seed from which all per-stream generators are derived.
///
/// A stream is identified by a label such as
/// `single-app/argo/k11/rep3/sync`; identical `(seed, label)` pairs yield
/// identical draw sequences and distinct labels give independent streams.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RandomSource {
    seed: u64,
}

impl RandomSource {
    pub fn new(seed: u64) -> Self {
        RandomSource { seed }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Derive the generator for one named stream.
    pub fn stream(&self, label: &str) -> StreamRng {
        let mut hasher = Sha256::new();
        hasher.update(self.seed.to_le_bytes());
        hasher.update(label.as_bytes());
        let digest = hasher.finalize();
        let mut key = [0u8; 32];
        key.copy_from_slice(&digest);
        StreamRng {
            rng: ChaCha8Rng::from_seed(key),
        }
    }
}

/// One reproducible random stream.
pub struct StreamRng {
    rng: ChaCha8Rng,
}

impl StreamRng {
    /// Uniform draw in `[0, 1)`.
    pub fn unit(&mut self) -> f64 {
        self.rng.gen::<f64>()
    }

    /// Uniform draw in `[lo, hi)`.
    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.unit()
    }

    /// Standard normal draw (Box-Muller; two unit draws per value).
    pub fn standard_normal(&mut self) -> f64 {
        let u1 = loop {
            let u = self.unit();
            if u > 0.0 {
                break u;
            }
        };
        let u2 = self.unit();
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }
}

/// Latency / utilization model attached to one metric of one profile.
///
/// `PiecewiseLinearK` interpolates a curve over the scale index `k` and
/// adds symmetric truncated-normal noise; it carries the calibrations that
/// depend on the deployment scale.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(
    tag = "kind",
    rename_all = "kebab-case",
    rename_all_fields = "kebab-case"
)]
pub enum Distribution {
    Constant {
        value: f64,
    },
    Uniform {
        lo: f64,
        hi: f64,
    },
    TruncNormal {
        mu: f64,
        sigma: f64,
        lo: f64,
        hi: f64,
    },
    PiecewiseLinearK {
        /// `(k, value)` knots, strictly increasing in `k`.
        points: Vec<(f64, f64)>,
        /// Sigma of zero-mean additive noise, truncated at ±3σ.
        #[serde(default)]
        noise_sigma: f64,
    },
}

impl Distribution {
    /// Validates parameters. Called at config load so that sampling never
    /// has to cope with malformed models.
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::InvalidDistribution(msg));
        match self {
            Distribution::Constant { value } => {
                if !value.is_finite() || *value < 0.0 {
                    return fail(format!("constant value {value} must be finite and >= 0"));
                }
            }
            Distribution::Uniform { lo, hi } => {
                if !(lo.is_finite() && hi.is_finite()) || lo > hi || *lo < 0.0 {
                    return fail(format!("uniform bounds [{lo}, {hi}] invalid"));
                }
            }
            Distribution::TruncNormal { mu, sigma, lo, hi } => {
                if !(mu.is_finite() && sigma.is_finite() && lo.is_finite() && hi.is_finite()) {
                    return fail("truncated normal parameters must be finite".into());
                }
                if *sigma < 0.0 || lo > hi || *lo < 0.0 {
                    return fail(format!(
                        "truncated normal (mu={mu}, sigma={sigma}, lo={lo}, hi={hi}) invalid"
                    ));
                }
                // rejection sampling needs reachable bounds
                if *sigma > 0.0 && (*lo > mu + 8.0 * sigma || *hi < mu - 8.0 * sigma) {
                    return fail(format!(
                        "truncation window [{lo}, {hi}] lies more than 8 sigma from mu={mu}"
                    ));
                }
            }
            Distribution::PiecewiseLinearK {
                points,
                noise_sigma,
            } => {
                if points.is_empty() {
                    return fail("piecewise curve needs at least one point".into());
                }
                if *noise_sigma < 0.0 || !noise_sigma.is_finite() {
                    return fail(format!("noise sigma {noise_sigma} invalid"));
                }
                let mut prev_k = f64::NEG_INFINITY;
                for (k, v) in points {
                    if *k <= prev_k {
                        return fail("piecewise curve knots must be strictly increasing".into());
                    }
                    prev_k = *k;
                    // Noise is truncated at ±3σ, so this keeps samples >= 0.
                    if !v.is_finite() || *v - 3.0 * noise_sigma < 0.0 {
                        return fail(format!(
                            "curve value {v} minus 3x noise sigma {noise_sigma} dips below zero"
                        ));
                    }
                }
            }
        }
        Ok(())
    }

    fn curve_at(points: &[(f64, f64)], k: f64) -> f64 {
        let first = points[0];
        let last = points[points.len() - 1];
        if k <= first.0 {
            return first.1;
        }
        if k >= last.0 {
            return last.1;
        }
        for window in points.windows(2) {
            let (k0, v0) = window[0];
            let (k1, v1) = window[1];
            if k <= k1 {
                let t = (k - k0) / (k1 - k0);
                return v0 + t * (v1 - v0);
            }
        }
        last.1
    }

    /// Draw one value at scale index `k`. Assumes `validate` has passed;
    /// the result is always >= 0.
    pub fn sample(&self, k: u32, rng: &mut StreamRng) -> f64 {
        match self {
            Distribution::Constant { value } => *value,
            Distribution::Uniform { lo, hi } => rng.uniform(*lo, *hi),
            Distribution::TruncNormal { mu, sigma, lo, hi } => {
                if *sigma == 0.0 {
                    return mu.clamp(*lo, *hi);
                }
                loop {
                    let draw = mu + sigma * rng.standard_normal();
                    if draw >= *lo && draw <= *hi {
                        return draw;
                    }
                }
            }
            Distribution::PiecewiseLinearK {
                points,
                noise_sigma,
            } => {
                let base = Self::curve_at(points, k as f64);
                if *noise_sigma == 0.0 {
                    return base;
                }
                let noise = loop {
                    let draw = noise_sigma * rng.standard_normal();
                    if draw.abs() <= 3.0 * noise_sigma {
                        break draw;
                    }
                };
                (base + noise).max(0.0)
            }
        }
    }

    /// Noise-free value at scale `k`: the analytic mean for symmetric
    /// shapes, the curve value for scale-dependent ones. Used by the
    /// zero-noise diagnostics (affine footprints, amortization checks).
    pub fn mean_at(&self, k: u32) -> f64 {
        match self {
            Distribution::Constant { value } => *value,
            Distribution::Uniform { lo, hi } => (lo + hi) / 2.0,
            Distribution::TruncNormal { mu, .. } => *mu,
            Distribution::PiecewiseLinearK { points, .. } => Self::curve_at(points, k as f64),
        }
    }
}
