//! Configuration-as-Data pipeline model: blueprint/deployment
//! repositories, package variants, Porch hydration with the four-state
//! package lifecycle, and the intent-processing time decomposition
//! `t_inproc = t_hydrate + t_oh`.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::git::{GitRepository, WebhookDelivery, MAIN_BRANCH};
use crate::sim::{secs_to_ms, Distribution, EventKind, RandomSource, Simulator};

/// Token the pipeline uses for its internal DPR operations.
pub const NEPHIO_TOKEN: &str = "nephio-pat";

/// Sequential package lifecycle. The only reachable path is
/// draft -> proposed -> approved -> published.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Lifecycle {
    Draft,
    Proposed,
    Approved,
    Published,
}

impl Lifecycle {
    pub fn next(self) -> Result<Lifecycle> {
        match self {
            Lifecycle::Draft => Ok(Lifecycle::Proposed),
            Lifecycle::Proposed => Ok(Lifecycle::Approved),
            Lifecycle::Approved => Ok(Lifecycle::Published),
            Lifecycle::Published => Err(Error::AlreadyPublished),
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Lifecycle::Draft => "draft",
            Lifecycle::Proposed => "proposed",
            Lifecycle::Approved => "approved",
            Lifecycle::Published => "published",
        }
    }
}

/// Count `{slot}` placeholders left in a payload.
fn unfilled_slots(payload: &str) -> Vec<String> {
    let mut slots = Vec::new();
    let mut rest = payload;
    while let Some(start) = rest.find('{') {
        if let Some(len) = rest[start + 1..].find('}') {
            let slot = &rest[start + 1..start + 1 + len];
            if !slot.is_empty() && slot.chars().all(|c| c.is_ascii_alphanumeric() || c == '_') {
                slots.push(slot.to_string());
            }
            rest = &rest[start + 1 + len + 1..];
        } else {
            break;
        }
    }
    slots
}

/// A Kpt package template with unfilled parameter slots, stored in the
/// blueprint repository.
#[derive(Debug, Clone, PartialEq)]
pub struct DryPackage {
    pub name: String,
    pub template: String,
    pub revision: String,
}

impl DryPackage {
    pub fn new(name: &str, template: &str) -> Result<Self> {
        if unfilled_slots(template).is_empty() {
            return Err(Error::InvalidParams(format!(
                "dry package {name} has no unfilled parameter slots"
            )));
        }
        Ok(DryPackage {
            name: name.to_string(),
            template: template.to_string(),
            revision: "0000000001".to_string(),
        })
    }

    pub fn slots(&self) -> Vec<String> {
        unfilled_slots(&self.template)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PvState {
    Instantiating,
    Tracking,
}

/// Tracks one dry package toward one deployment-repository target.
#[derive(Debug, Clone, PartialEq)]
pub struct PackageVariant {
    pub source: String,
    pub target_dir: String,
    pub state: PvState,
}

/// A package revision moving through the lifecycle in the DPR.
#[derive(Debug, Clone, PartialEq)]
pub struct PackageRevision {
    pub package: String,
    pub lifecycle: Lifecycle,
    pub payload: String,
    pub t_hydrate_ms: u64,
    pub t_oh_ms: u64,
}

impl PackageRevision {
    pub fn unfilled(&self) -> usize {
        unfilled_slots(&self.payload).len()
    }
}

/// Advance a package revision exactly one lifecycle step.
pub fn advance_lifecycle(rev: &mut PackageRevision) -> Result<()> {
    rev.lifecycle = rev.lifecycle.next()?;
    Ok(())
}

/// Per-intent timing decomposition; all fields in virtual milliseconds so
/// the identity `t_inproc = t_hydrate + t_oh` is exact.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct IntentTiming {
    pub t_inproc_ms: u64,
    pub t_hydrate_ms: u64,
    pub t_oh_ms: u64,
}

/// Calibration of the hydration latency model.
///
/// Overhead per intent is `floor + shared / n`: variant instantiation for
/// all `n` intents starts at the same virtual instant, so the shared
/// component amortizes with concurrency while the floor does not.
#[derive(Debug, Clone, PartialEq)]
pub struct NephioCalibration {
    pub hydrate: Distribution,
    pub oh_floor: Distribution,
    pub oh_shared: Distribution,
}

impl NephioCalibration {
    pub fn validate(&self) -> Result<()> {
        self.hydrate.validate()?;
        self.oh_floor.validate()?;
        self.oh_shared.validate()
    }

    /// Noise-free per-intent overhead at a given concurrency.
    pub fn mean_oh_s(&self, concurrency: u32) -> f64 {
        self.oh_floor.mean_at(concurrency)
            + self.oh_shared.mean_at(concurrency) / concurrency as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IntentMode {
    /// One intent whose deployment scales by replica count.
    SingleReplicaScaled,
    /// `n` intents, one replica each, instantiated simultaneously.
    MultiPackage,
}

/// One intent scheduled for hydration.
#[derive(Debug, Clone)]
pub struct IntentPlan {
    pub package: String,
    pub target_dir: String,
    pub replicas: u32,
    pub payload: String,
    pub oh_ms: u64,
    pub hydrate_ms: u64,
}

/// Draw the per-intent timing plan for `n` scale units in `mode`.
pub fn plan_intents(
    n: u32,
    mode: IntentMode,
    calib: &NephioCalibration,
    source: &RandomSource,
    stream_prefix: &str,
) -> Result<Vec<IntentPlan>> {
    if n == 0 {
        return Err(Error::InvalidParams(
            "intent count must be at least 1".into(),
        ));
    }
    let (intents, replicas) = match mode {
        IntentMode::SingleReplicaScaled => (1u32, n),
        IntentMode::MultiPackage => (n, 1u32),
    };
    let mut floor_rng = source.stream(&format!("{stream_prefix}/oh-floor"));
    let mut shared_rng = source.stream(&format!("{stream_prefix}/oh-shared"));
    let mut hydrate_rng = source.stream(&format!("{stream_prefix}/hydrate"));
    let mut plans = Vec::with_capacity(intents as usize);
    for i in 1..=intents {
        let floor = calib.oh_floor.sample(intents, &mut floor_rng);
        let shared = calib.oh_shared.sample(intents, &mut shared_rng);
        let oh_s = floor + shared / intents as f64;
        let name = format!("nephio-pkg-{i}");
        let dry = DryPackage::new(&name, PACKAGE_TEMPLATE)?;
        let config: BTreeMap<String, String> = [
            ("name".to_string(), name.clone()),
            ("namespace".to_string(), format!("{name}-ns")),
            ("replicas".to_string(), replicas.to_string()),
        ]
        .into();
        plans.push(IntentPlan {
            target_dir: format!("{name}/"),
            replicas,
            payload: fill_template(&dry, &config)?,
            oh_ms: secs_to_ms(oh_s),
            hydrate_ms: secs_to_ms(calib.hydrate.sample(intents, &mut hydrate_rng)),
            package: name,
        });
    }
    Ok(plans)
}

/// The dry template every intent hydrates from.
pub const PACKAGE_TEMPLATE: &str = "apiVersion: apps/v1\nkind: Deployment\nmetadata:\n  name: {name}\n  namespace: {namespace}\nspec:\n  replicas: {replicas}\n";

/// Fill a dry package with configuration values. Every slot needs a
/// value, otherwise hydration fails while still in draft.
pub fn fill_template(pkg: &DryPackage, config: &BTreeMap<String, String>) -> Result<String> {
    let mut payload = pkg.template.clone();
    for slot in pkg.slots() {
        match config.get(&slot) {
            Some(value) => payload = payload.replace(&format!("{{{slot}}}"), value),
            None => return Err(Error::MissingParameter(slot)),
        }
    }
    Ok(payload)
}

/// Hydrate one dry package synchronously: fill the template, walk the
/// Draft branch through the lifecycle and merge into the DPR main branch.
/// Returns the published revision and the webhook deliveries the merge
/// fired.
pub fn hydrate(
    pkg: &DryPackage,
    config: &BTreeMap<String, String>,
    repo: &mut GitRepository,
    calib: &NephioCalibration,
    oh_ms: u64,
    rng: &mut crate::sim::StreamRng,
) -> Result<(PackageRevision, Vec<WebhookDelivery>)> {
    let payload = fill_template(pkg, config)?;
    let draft_branch = format!("draft-{}", pkg.name);
    repo.create_branch(&draft_branch, MAIN_BRANCH)?;
    let zero = Distribution::Constant { value: 0.0 };
    repo.push(
        &draft_branch,
        &[(format!("{}/", pkg.name), payload.clone())],
        NEPHIO_TOKEN,
        &zero,
        1,
        rng,
    )?;
    let mut rev = PackageRevision {
        package: pkg.name.clone(),
        lifecycle: Lifecycle::Draft,
        payload,
        t_hydrate_ms: secs_to_ms(calib.hydrate.sample(1, rng)),
        t_oh_ms: oh_ms,
    };
    while rev.lifecycle != Lifecycle::Published {
        advance_lifecycle(&mut rev)?;
    }
    let (_, deliveries) = repo.merge(&draft_branch, MAIN_BRANCH)?;
    repo.delete_branch(&draft_branch)?;
    Ok((rev, deliveries))
}

/// Event-driven hydration of a batch of planned intents on a shared
/// simulator. Variant instantiation for every intent fires at the same
/// virtual instant; lifecycle steps spread across the hydration interval
/// and the merge lands exactly `oh + hydrate` after the start.
pub struct HydrationPipeline {
    plans: Vec<IntentPlan>,
    /// One variant per (dry package, target) pair.
    variants: Vec<PackageVariant>,
    start_ms: u64,
    revisions: Vec<Option<PackageRevision>>,
    merges: u32,
}

impl HydrationPipeline {
    pub fn new(plans: Vec<IntentPlan>) -> Self {
        let n = plans.len();
        let variants: Vec<PackageVariant> = plans
            .iter()
            .map(|p| PackageVariant {
                source: p.package.clone(),
                target_dir: p.target_dir.clone(),
                state: PvState::Instantiating,
            })
            .collect();
        debug_assert_eq!(
            variants
                .iter()
                .map(|v| (&v.source, &v.target_dir))
                .collect::<std::collections::BTreeSet<_>>()
                .len(),
            n,
            "variants must be unique per (package, target) pair"
        );
        HydrationPipeline {
            plans,
            variants,
            start_ms: 0,
            revisions: vec![None; n],
            merges: 0,
        }
    }

    pub fn plans(&self) -> &[IntentPlan] {
        &self.plans
    }

    pub fn variants(&self) -> &[PackageVariant] {
        &self.variants
    }

    /// Schedule variant instantiation for every intent at the current
    /// virtual instant.
    pub fn start(&mut self, sim: &mut Simulator) -> Result<()> {
        self.start_ms = sim.now_ms();
        for (i, _) in self.plans.iter().enumerate() {
            sim.schedule(
                self.start_ms,
                EventKind::HydrationStep {
                    pkg: i as u32,
                    step: 0,
                },
            )?;
        }
        Ok(())
    }

    /// Handle one hydration step. Returns merge deliveries when the
    /// package lands in the DPR main branch.
    pub fn handle_step(
        &mut self,
        sim: &mut Simulator,
        repo: &mut GitRepository,
        pkg: u32,
        step: u8,
    ) -> Result<Option<(u32, Vec<WebhookDelivery>)>> {
        let idx = pkg as usize;
        let plan = self.plans[idx].clone();
        let base = self.start_ms + plan.oh_ms;
        match step {
            0 => {
                // variant instantiated; discovery completes after the
                // per-intent overhead
                sim.schedule(base, EventKind::HydrationStep { pkg, step: 1 })?;
                Ok(None)
            }
            1 => {
                // draft discovered: the variant now tracks its package;
                // create the Draft branch and store the hydrated payload
                self.variants[idx].state = PvState::Tracking;
                let draft = format!("draft-{}", plan.package);
                repo.create_branch(&draft, MAIN_BRANCH)?;
                let zero = Distribution::Constant { value: 0.0 };
                let mut scratch = RandomSource::new(0).stream("nephio/zero");
                repo.push(
                    &draft,
                    &[(plan.target_dir.clone(), plan.payload.clone())],
                    NEPHIO_TOKEN,
                    &zero,
                    1,
                    &mut scratch,
                )?;
                self.revisions[idx] = Some(PackageRevision {
                    package: plan.package.clone(),
                    lifecycle: Lifecycle::Draft,
                    payload: plan.payload.clone(),
                    t_hydrate_ms: plan.hydrate_ms,
                    t_oh_ms: plan.oh_ms,
                });
                for s in 2u8..=5 {
                    let offset = plan.hydrate_ms * (s as u64 - 1) / 4;
                    sim.schedule(base + offset, EventKind::HydrationStep { pkg, step: s })?;
                }
                Ok(None)
            }
            2..=4 => {
                let rev = self.revisions[idx]
                    .as_mut()
                    .expect("lifecycle step before draft creation");
                advance_lifecycle(rev)?;
                Ok(None)
            }
            5 => {
                // published: merge the Draft branch into main
                let rev = self.revisions[idx]
                    .as_ref()
                    .expect("merge step before draft creation");
                debug_assert_eq!(rev.lifecycle, Lifecycle::Published);
                debug_assert_eq!(rev.unfilled(), 0, "published package left a slot unfilled");
                let draft = format!("draft-{}", plan.package);
                let (_, deliveries) = repo.merge(&draft, MAIN_BRANCH)?;
                repo.delete_branch(&draft)?;
                self.merges += 1;
                Ok(Some((pkg, deliveries)))
            }
            other => Err(Error::InvalidParams(format!(
                "unknown hydration step {other}"
            ))),
        }
    }

    pub fn merges(&self) -> u32 {
        self.merges
    }

    pub fn timings(&self) -> Vec<IntentTiming> {
        self.plans
            .iter()
            .map(|p| IntentTiming {
                t_inproc_ms: p.oh_ms + p.hydrate_ms,
                t_hydrate_ms: p.hydrate_ms,
                t_oh_ms: p.oh_ms,
            })
            .collect()
    }
}

/// Outcome of a standalone intent-submission run.
#[derive(Debug, Clone)]
pub struct IntentBatch {
    pub timings: Vec<IntentTiming>,
    pub trace: Vec<String>,
    pub merges: u32,
    pub final_main_revision: String,
}

/// Run a self-contained hydration batch against a fresh deployment
/// repository: `n` scale units in the given mode, one webhook-subscribed
/// observer per package.
pub fn submit_intents(
    n: u32,
    mode: IntentMode,
    calib: &NephioCalibration,
    source: &RandomSource,
    stream_prefix: &str,
) -> Result<IntentBatch> {
    let plans = plan_intents(n, mode, calib, source, stream_prefix)?;
    let mut sim = Simulator::new();
    sim.enable_trace();
    let mut repo = GitRepository::new(NEPHIO_TOKEN);
    for plan in &plans {
        repo.subscribe(crate::git::WebhookSubscription {
            subscriber: format!("{}-observer", plan.package),
            branch: MAIN_BRANCH.into(),
            dir_filter: plan.target_dir.clone(),
            token: NEPHIO_TOKEN.into(),
            notify_delay_ms: 0,
        });
    }
    let mut pipeline = HydrationPipeline::new(plans);
    pipeline.start(&mut sim)?;
    let mut chains = 0u32;
    while let Some(event) = sim.next_event()? {
        if let EventKind::HydrationStep { pkg, step } = event.kind {
            if let Some((_, deliveries)) = pipeline.handle_step(&mut sim, &mut repo, pkg, step)? {
                chains += deliveries.len() as u32;
            }
        }
    }
    debug_assert_eq!(chains, pipeline.merges(), "one sync chain per merge");
    debug_assert!(
        pipeline
            .variants()
            .iter()
            .all(|v| v.state == PvState::Tracking),
        "every variant ends up tracking its package"
    );
    Ok(IntentBatch {
        timings: pipeline.timings(),
        trace: sim.take_trace(),
        merges: pipeline.merges(),
        final_main_revision: repo.revision_of(MAIN_BRANCH)?,
    })
}
