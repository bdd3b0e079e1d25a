//! The four-phase experiment loop: manifest generation, reconciler
//! generation, KPI measurement, garbage collection; plus the per-scale
//! aggregation and the raw/aggregated CSV formats.
//!
//! Each `(k, repetition)` iteration runs on its own isolated simulation
//! instance, so iterations can execute on parallel threads; results merge
//! deterministically ordered by `(k, repetition)`.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use crate::cluster::{ClusterBackend, SimulatedCluster, DEFAULT_POD_CAPACITY};
use crate::error::{Error, Result};
use crate::git::{GitRepository, WebhookSubscription, MAIN_BRANCH};
use crate::nephio::{plan_intents, HydrationPipeline, IntentMode};
use crate::preset::Preset;
use crate::reconcilers::{
    generate_reconcilers, reconcile, ProfileId, ReconcilerArgs, ReconcilerProfile, ResourceModel,
    ScenarioKind,
};
use crate::sim::{ms_to_secs, secs_to_ms, EventKind, RandomSource, Simulator};

/// Token shared between the harness and its repository.
pub const HARNESS_TOKEN: &str = "bench-pat";

/// Virtual-time ceiling per measurement phase, in seconds.
pub const DEFAULT_PHASE_TIMEOUT_S: f64 = 3600.0;

/// The lightweight web-server deployment template every desired state is
/// rendered from.
pub const STATE_TEMPLATE: &str = "\
apiVersion: apps/v1
kind: Deployment
metadata:
  name: {name}
  namespace: {namespace}
  labels:
    app: {label}
spec:
  replicas: {replicas}
  selector:
    matchLabels:
      app: {label}
  template:
    metadata:
      labels:
        app: {label}
    spec:
      containers:
        - name: web
          image: nginx:1.27-alpine
          ports:
            - containerPort: 80
";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Scenario {
    SingleApp,
    MultiApp,
    NephioSingle,
    NephioMulti,
}

impl Scenario {
    pub fn as_str(&self) -> &'static str {
        match self {
            Scenario::SingleApp => "single-app",
            Scenario::MultiApp => "multi-app",
            Scenario::NephioSingle => "nephio-single",
            Scenario::NephioMulti => "nephio-multi",
        }
    }

    pub fn parse(s: &str) -> Result<Scenario> {
        match s {
            "single-app" => Ok(Scenario::SingleApp),
            "multi-app" => Ok(Scenario::MultiApp),
            "nephio-single" => Ok(Scenario::NephioSingle),
            "nephio-multi" => Ok(Scenario::NephioMulti),
            other => Err(Error::UnknownScenario(other.to_string())),
        }
    }

    pub fn is_nephio(&self) -> bool {
        matches!(self, Scenario::NephioSingle | Scenario::NephioMulti)
    }

    /// Which latency calibration set an iteration draws from.
    pub fn kind(&self) -> ScenarioKind {
        match self {
            Scenario::SingleApp | Scenario::NephioSingle => ScenarioKind::Single,
            Scenario::MultiApp | Scenario::NephioMulti => ScenarioKind::Multi,
        }
    }
}

impl std::fmt::Display for Scenario {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// The `{p, m, r, c}` tuple driving one experiment.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExperimentParams {
    pub prefix: String,
    pub max: u32,
    pub reps: u32,
    pub step: u32,
}

impl ExperimentParams {
    pub fn new(prefix: &str, max: u32, reps: u32, step: u32) -> Result<Self> {
        let ep = ExperimentParams {
            prefix: prefix.to_string(),
            max,
            reps,
            step,
        };
        ep.validate()?;
        Ok(ep)
    }

    pub fn validate(&self) -> Result<()> {
        if self.prefix.is_empty() || !self.prefix.chars().all(|c| c.is_ascii_lowercase()) {
            return Err(Error::InvalidParams(format!(
                "prefix `{}` must be non-empty lowercase letters",
                self.prefix
            )));
        }
        if self.max == 0 || self.reps == 0 || self.step == 0 {
            return Err(Error::InvalidParams(
                "m, r and c must all be positive".into(),
            ));
        }
        if self.step > self.max {
            return Err(Error::InvalidParams(format!(
                "step {} exceeds max {}",
                self.step, self.max
            )));
        }
        Ok(())
    }

    /// Scale grid `{1, 1+c, 1+2c, ...}` clipped at `m`.
    pub fn grid(&self) -> Vec<u32> {
        (1..=self.max).step_by(self.step as usize).collect()
    }

    pub fn iterations(&self) -> u32 {
        self.grid().len() as u32 * self.reps
    }
}

/// One declarative manifest generated for an iteration.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DesiredState {
    pub name: String,
    pub namespace: String,
    pub label: String,
    pub replicas: u32,
    /// Sub-directory of the repository (and of the work dir) holding it.
    pub dir: String,
    pub manifest: String,
}

pub fn render_manifest(name: &str, namespace: &str, label: &str, replicas: u32) -> String {
    STATE_TEMPLATE
        .replace("{name}", name)
        .replace("{namespace}", namespace)
        .replace("{label}", label)
        .replace("{replicas}", &replicas.to_string())
}

/// Generate `n` manifests named `{p}-app-{i}` with matching namespaces
/// and labels, one sub-directory per app under `d_target`.
pub fn generate_manifests(
    n: u32,
    prefix: &str,
    replicas: u32,
    d_target: &Path,
) -> Result<Vec<DesiredState>> {
    let mut out = Vec::with_capacity(n as usize);
    if n == 0 {
        return Ok(out);
    }
    std::fs::create_dir_all(d_target)?;
    for i in 1..=n {
        let name = format!("{prefix}-app-{i}");
        let namespace = format!("{prefix}-ns-{i}");
        let label = format!("{prefix}-label-{i}");
        let dir = d_target.join(&name);
        if dir.exists() {
            return Err(Error::DirtyTargetDir(dir));
        }
        std::fs::create_dir(&dir)?;
        let manifest = render_manifest(&name, &namespace, &label, replicas);
        std::fs::write(dir.join("deployment.yaml"), &manifest)?;
        out.push(DesiredState {
            dir: format!("{name}/"),
            name,
            namespace,
            label,
            replicas,
            manifest,
        });
    }
    Ok(out)
}

/// Per-intent processing KPIs emitted by the nephio scenarios.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NephioKpis {
    pub t_inproc_s: f64,
    pub t_hydrate_s: f64,
    pub t_oh_s: f64,
}

/// One row of raw results: per-intent mean KPI values of one iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct KpiRecord {
    pub scenario: Scenario,
    pub profile: String,
    pub k: u32,
    pub rep: u32,
    pub t_push_s: f64,
    pub t_sync_s: f64,
    pub t_recon_s: f64,
    pub t_deploy_s: f64,
    pub t_healthy_s: f64,
    pub u_cpu_millicore: f64,
    pub u_mem_mib: f64,
    pub seed: u64,
    pub nephio: Option<NephioKpis>,
}

/// Eq-style aggregate per scale point: timings as the mean over
/// repetitions of the per-iteration cumulative sums, utilization as the
/// mean over repetitions of the per-iteration per-app means.
#[derive(Debug, Clone, PartialEq)]
pub struct AggregatedKpi {
    pub scenario: Scenario,
    pub profile: String,
    pub k: u32,
    pub t_push_s: f64,
    pub t_sync_s: f64,
    pub t_recon_s: f64,
    pub t_deploy_s: f64,
    pub t_healthy_s: f64,
    pub u_cpu_millicore: f64,
    pub u_mem_mib: f64,
    pub nephio: Option<NephioKpis>,
}

fn quantize(v: f64) -> f64 {
    // records round-trip through the 6-decimal CSV format losslessly
    (v * 1e6).round() / 1e6
}

fn mean(values: &[u64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    values.iter().sum::<u64>() as f64 / values.len() as f64
}

/// Aggregate raw records per `(scenario, profile, k)`. A record carries
/// per-intent means, so the cumulative sum over the scale index is
/// exactly `k * mean`.
pub fn aggregate(records: &[KpiRecord]) -> Result<Vec<AggregatedKpi>> {
    if records.is_empty() {
        return Err(Error::EmptyRecords);
    }
    let mut groups: BTreeMap<(Scenario, String, u32), Vec<&KpiRecord>> = BTreeMap::new();
    for rec in records {
        groups
            .entry((rec.scenario, rec.profile.clone(), rec.k))
            .or_default()
            .push(rec);
    }
    let mut out = Vec::with_capacity(groups.len());
    for ((scenario, profile, k), mut group) in groups {
        // canonical reduction order makes the result exactly invariant
        // under permutation of the input records
        group.sort_by_key(|r| r.rep);
        let n = group.len() as f64;
        let avg = |f: &dyn Fn(&KpiRecord) -> f64| group.iter().map(|r| f(r)).sum::<f64>() / n;
        let kf = k as f64;
        let nephio = group[0].nephio.map(|_| NephioKpis {
            t_inproc_s: kf * avg(&|r| r.nephio.map(|n| n.t_inproc_s).unwrap_or(0.0)),
            t_hydrate_s: kf * avg(&|r| r.nephio.map(|n| n.t_hydrate_s).unwrap_or(0.0)),
            t_oh_s: kf * avg(&|r| r.nephio.map(|n| n.t_oh_s).unwrap_or(0.0)),
        });
        out.push(AggregatedKpi {
            scenario,
            profile,
            k,
            t_push_s: kf * avg(&|r| r.t_push_s),
            t_sync_s: kf * avg(&|r| r.t_sync_s),
            t_recon_s: kf * avg(&|r| r.t_recon_s),
            t_deploy_s: kf * avg(&|r| r.t_deploy_s),
            t_healthy_s: kf * avg(&|r| r.t_healthy_s),
            u_cpu_millicore: avg(&|r| r.u_cpu_millicore),
            u_mem_mib: avg(&|r| r.u_mem_mib),
            nephio,
        });
    }
    Ok(out)
}

/// Configuration for one scenario run.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub scenario: Scenario,
    /// Behavior profile under test; for nephio scenarios, the downstream
    /// reconciler tracking the deployment repository.
    pub profile: ProfileId,
    pub ep: ExperimentParams,
    pub preset: Preset,
    pub seed: u64,
    pub parallel: usize,
    pub trace: bool,
    pub workdir: PathBuf,
    pub timeout_s: f64,
}

impl RunConfig {
    pub fn new(
        scenario: Scenario,
        profile: ProfileId,
        ep: ExperimentParams,
        preset: Preset,
        seed: u64,
        workdir: PathBuf,
    ) -> Self {
        RunConfig {
            scenario,
            profile,
            ep,
            preset,
            seed,
            parallel: 1,
            trace: false,
            workdir,
            timeout_s: DEFAULT_PHASE_TIMEOUT_S,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub records: Vec<KpiRecord>,
    pub failures: u32,
    /// Event trace lines concatenated in `(k, rep)` order when enabled.
    pub trace: Vec<String>,
    /// Fresh-cluster state line every iteration must return to.
    pub baseline_state: String,
    /// Post-cleanup `pods=..;namespaces=..;hash=..` line per iteration.
    pub cleanup_states: Vec<((u32, u32), String)>,
}

struct IterationOutcome {
    record: Option<KpiRecord>,
    trace: Vec<String>,
    baseline_state: String,
    cleanup_state: String,
}

/// Run the four-phase loop over the full `(k, repetition)` grid.
pub fn run_scenario(cfg: &RunConfig) -> Result<RunOutput> {
    cfg.ep.validate()?;
    if cfg.parallel == 0 {
        return Err(Error::InvalidParams(
            "parallelism must be at least 1".into(),
        ));
    }
    let profile = cfg.preset.profile(cfg.profile);
    if !cfg.scenario.is_nephio() && cfg.ep.prefix != profile.id.prefix() {
        return Err(Error::InvalidParams(format!(
            "prefix `{}` does not select profile `{}`",
            cfg.ep.prefix,
            profile.id.prefix()
        )));
    }
    // capacity is a configuration error before any event runs
    let max_k = *cfg.ep.grid().last().expect("grid is non-empty");
    let worst_pods = max_k + profile.control_plane_pods;
    if worst_pods > DEFAULT_POD_CAPACITY {
        return Err(Error::CapacityExceeded {
            requested: max_k,
            available: DEFAULT_POD_CAPACITY.saturating_sub(profile.control_plane_pods),
            capacity: DEFAULT_POD_CAPACITY,
        });
    }
    std::fs::create_dir_all(&cfg.workdir)?;

    let mut iterations: Vec<(u32, u32)> = Vec::new();
    for k in cfg.ep.grid() {
        for rep in 1..=cfg.ep.reps {
            iterations.push((k, rep));
        }
    }

    let outcomes: Vec<((u32, u32), IterationOutcome)> = if cfg.parallel <= 1 {
        iterations
            .iter()
            .map(|&(k, rep)| run_iteration(cfg, k, rep).map(|o| ((k, rep), o)))
            .collect::<Result<Vec<_>>>()?
    } else {
        let chunks: Vec<Vec<(u32, u32)>> = (0..cfg.parallel)
            .map(|w| {
                iterations
                    .iter()
                    .copied()
                    .skip(w)
                    .step_by(cfg.parallel)
                    .collect()
            })
            .collect();
        type WorkerResult = Result<Vec<((u32, u32), IterationOutcome)>>;
        let mut collected: Vec<WorkerResult> = Vec::new();
        std::thread::scope(|scope| {
            let handles: Vec<_> = chunks
                .into_iter()
                .map(|chunk| {
                    scope.spawn(move || {
                        chunk
                            .into_iter()
                            .map(|(k, rep)| run_iteration(cfg, k, rep).map(|o| ((k, rep), o)))
                            .collect::<Result<Vec<_>>>()
                    })
                })
                .collect();
            for handle in handles {
                collected.push(handle.join().expect("iteration worker panicked"));
            }
        });
        let mut merged = Vec::new();
        for part in collected {
            merged.extend(part?);
        }
        merged.sort_by_key(|((k, rep), _)| (*k, *rep));
        merged
    };

    let mut output = RunOutput {
        records: Vec::new(),
        failures: 0,
        trace: Vec::new(),
        baseline_state: String::new(),
        cleanup_states: Vec::new(),
    };
    for ((k, rep), outcome) in outcomes {
        if output.baseline_state.is_empty() {
            output.baseline_state = outcome.baseline_state.clone();
        }
        match outcome.record {
            Some(record) => output.records.push(record),
            None => output.failures += 1,
        }
        output.trace.extend(outcome.trace);
        output
            .cleanup_states
            .push(((k, rep), outcome.cleanup_state));
    }
    Ok(output)
}

/// Streams derived for one iteration; one stream per metric, shared by
/// all apps of the iteration.
struct IterationStreams {
    push: crate::sim::StreamRng,
    sync: crate::sim::StreamRng,
    /// Poll-phase draws are a separate physical quantity from webhook
    /// latencies, so polling profiles get their own stream.
    poll: crate::sim::StreamRng,
    recon: crate::sim::StreamRng,
    deploy: crate::sim::StreamRng,
    healthy: crate::sim::StreamRng,
    cpu: crate::sim::StreamRng,
    mem: crate::sim::StreamRng,
}

impl IterationStreams {
    fn derive(source: &RandomSource, base: &str) -> Self {
        IterationStreams {
            push: source.stream(&format!("{base}/push")),
            sync: source.stream(&format!("{base}/sync")),
            poll: source.stream(&format!("{base}/poll-phase")),
            recon: source.stream(&format!("{base}/recon")),
            deploy: source.stream(&format!("{base}/deploy")),
            healthy: source.stream(&format!("{base}/healthy")),
            cpu: source.stream(&format!("{base}/cpu")),
            mem: source.stream(&format!("{base}/mem")),
        }
    }

    /// Stream feeding a profile's sync-delay model.
    fn sync_stream(&mut self, profile: &ReconcilerProfile) -> &mut crate::sim::StreamRng {
        match profile.sync {
            crate::reconcilers::SyncModel::Polling { .. } => &mut self.poll,
            crate::reconcilers::SyncModel::Webhook { .. } => &mut self.sync,
        }
    }
}

fn run_iteration(cfg: &RunConfig, k: u32, rep: u32) -> Result<IterationOutcome> {
    let profile = cfg.preset.profile(cfg.profile);
    let source = RandomSource::new(cfg.seed);
    let base = format!(
        "{}/{}/k{}/rep{}",
        cfg.scenario.as_str(),
        profile.id.prefix(),
        k,
        rep
    );
    let mut streams = IterationStreams::derive(&source, &base);
    let mut sim = Simulator::new();
    if cfg.trace {
        sim.enable_trace();
    }
    let mut cluster = SimulatedCluster::new(DEFAULT_POD_CAPACITY);
    cluster.provision_control_plane(profile)?;
    let baseline_state = cluster.dump_line();
    let workdir = cfg.workdir.join(format!(
        "{}-{}-k{}-rep{}",
        cfg.scenario.as_str(),
        profile.id.prefix(),
        k,
        rep
    ));

    let result = if cfg.scenario.is_nephio() {
        run_nephio_iteration(
            cfg,
            profile,
            k,
            rep,
            &source,
            &base,
            &mut streams,
            &mut sim,
            &mut cluster,
        )
    } else {
        run_gitops_iteration(
            cfg,
            profile,
            k,
            rep,
            &mut streams,
            &mut sim,
            &mut cluster,
            &workdir,
        )
    };
    // Phase 4 runs regardless: garbage-collect and verify the reset.
    cluster.cleanup(&cfg.ep.prefix);
    cluster.cleanup(profile.id.prefix());
    cluster.cleanup("nephio");
    if workdir.exists() {
        std::fs::remove_dir_all(&workdir)?;
    }
    let cleanup_state = cluster.dump_line();
    let record = result?;
    Ok(IterationOutcome {
        record,
        trace: sim.take_trace(),
        baseline_state,
        cleanup_state,
    })
}

/// Measured timeline of one app's chain, in virtual ms.
#[derive(Debug, Clone, Copy, Default)]
struct ChainTimes {
    chain_start_ms: u64,
    sync_at_ms: u64,
    recon_done_ms: u64,
    deploy_at_ms: u64,
    sync_ms: u64,
    recon_ms: u64,
    deploy_ms: u64,
    healthy_ms: u64,
}

#[allow(clippy::too_many_arguments)]
fn run_gitops_iteration(
    cfg: &RunConfig,
    profile: &ReconcilerProfile,
    k: u32,
    rep: u32,
    streams: &mut IterationStreams,
    sim: &mut Simulator,
    cluster: &mut SimulatedCluster,
    workdir: &Path,
) -> Result<Option<KpiRecord>> {
    let scenario_kind = cfg.scenario.kind();
    let (n_apps, replicas) = match scenario_kind {
        ScenarioKind::Single => (1u32, k),
        ScenarioKind::Multi => (k, 1u32),
    };
    let prefix = &cfg.ep.prefix;
    let mut repo = GitRepository::new(HARNESS_TOKEN);

    // Phase 1: generate manifests and push them as one change set.
    let apps = generate_manifests(n_apps, prefix, replicas, workdir)?;
    let changes: Vec<(String, String)> = apps
        .iter()
        .map(|a| (a.dir.clone(), a.manifest.clone()))
        .collect();
    let timings = profile.timings(scenario_kind);
    let push = repo.push(
        MAIN_BRANCH,
        &changes,
        HARNESS_TOKEN,
        &timings.push,
        k,
        &mut streams.push,
    )?;
    sim.schedule(push.t_push_ms, EventKind::PushArrived { push: 0 })?;

    let mut specs = Vec::new();
    let mut chains: Vec<ChainTimes> = vec![ChainTimes::default(); n_apps as usize];
    let mut recon_pending = n_apps;
    let mut sample: Option<crate::cluster::ResourceSample> = None;

    while let Some(event) = sim.next_event()? {
        match event.kind {
            EventKind::PushArrived { .. } => {
                // Phase 2: generate reconciler bindings; each one
                // immediately observes the pushed revision as drift.
                let args = ReconcilerArgs {
                    cluster_url: "https://cluster.local".into(),
                    git_branch: MAIN_BRANCH.into(),
                    repo_dir: String::new(),
                };
                specs = generate_reconcilers(n_apps, profile.id.prefix(), &args)?;
                for (i, spec) in specs.iter().enumerate() {
                    repo.subscribe(WebhookSubscription {
                        subscriber: spec.name.clone(),
                        branch: spec.git_branch.clone(),
                        dir_filter: format!("{}/", spec.repo_dir),
                        token: HARNESS_TOKEN.into(),
                        notify_delay_ms: 0,
                    });
                    let instance = match profile.resources {
                        ResourceModel::PerApp { .. } => spec.name.clone(),
                        ResourceModel::Shared { .. } => {
                            format!("{}-reconciler", profile.id.prefix())
                        }
                    };
                    cluster.bind_instance(&profile.control_plane_namespace, &instance)?;
                    let (delay_s, drift) = crate::reconcilers::detect_and_sync(
                        spec,
                        &repo,
                        profile,
                        k,
                        streams.sync_stream(profile),
                    )?;
                    debug_assert!(!drift.is_zero(), "fresh binding always sees drift");
                    chains[i].chain_start_ms = sim.now_ms();
                    sim.schedule_in(secs_to_ms(delay_s), EventKind::SyncFired { rec: i as u32 })?;
                }
                // per-app control planes spawn one instance per binding;
                // shared ones keep a single reconciler
                let expected_instances = match profile.resources {
                    ResourceModel::PerApp { .. } => n_apps,
                    ResourceModel::Shared { .. } => 1,
                };
                assert_eq!(
                    cluster.instance_count(&profile.control_plane_namespace),
                    expected_instances,
                    "reconciler instance count diverged from the control-plane model"
                );
            }
            EventKind::SyncFired { rec } => {
                let i = rec as usize;
                let spec = &mut specs[i];
                let observed = repo.revision_of(&spec.git_branch)?;
                let drift = crate::reconcilers::StateDrift {
                    tracked_revision: spec.tracked_revision.clone(),
                    observed_revision: observed.clone(),
                };
                let t_recon_s = reconcile(profile, scenario_kind, &drift, k, &mut streams.recon)?;
                spec.tracked_revision = Some(observed);
                chains[i].sync_at_ms = sim.now_ms();
                chains[i].sync_ms = sim.now_ms() - chains[i].chain_start_ms;
                sim.schedule_in(secs_to_ms(t_recon_s), EventKind::ReconcileDone { rec })?;
            }
            EventKind::ReconcileDone { rec } => {
                let i = rec as usize;
                chains[i].recon_done_ms = sim.now_ms();
                chains[i].recon_ms = sim.now_ms() - chains[i].sync_at_ms;
                let app = &apps[i];
                let timing = cluster.apply_deployment(
                    &app.namespace,
                    &app.name,
                    app.replicas,
                    profile,
                    scenario_kind,
                    k,
                    &mut streams.deploy,
                    &mut streams.healthy,
                )?;
                let deploy_ms = secs_to_ms(timing.t_deploy_s);
                let healthy_ms = secs_to_ms(timing.t_healthy_s);
                sim.schedule_in(deploy_ms, EventKind::DeployScheduled { app: rec })?;
                sim.schedule_in(deploy_ms + healthy_ms, EventKind::PodHealthy { app: rec })?;
                recon_pending -= 1;
                if recon_pending == 0 {
                    // Phase 3: one utilization sample per iteration, taken
                    // when reconciliation settles.
                    sim.schedule_in(0, EventKind::ResourceSample)?;
                }
            }
            EventKind::DeployScheduled { app } => {
                let i = app as usize;
                cluster.mark_created(&apps[i].namespace, &apps[i].name, sim.now_ms());
                chains[i].deploy_at_ms = sim.now_ms();
                chains[i].deploy_ms = sim.now_ms() - chains[i].recon_done_ms;
            }
            EventKind::PodHealthy { app } => {
                let i = app as usize;
                cluster.mark_healthy(&apps[i].namespace, &apps[i].name);
                chains[i].healthy_ms = sim.now_ms() - chains[i].deploy_at_ms;
            }
            EventKind::ResourceSample => {
                sample = Some(cluster.top(
                    &profile.control_plane_namespace,
                    profile,
                    n_apps,
                    sim.now_ms(),
                    &mut streams.cpu,
                    &mut streams.mem,
                )?);
            }
            other => {
                return Err(Error::InvalidParams(format!(
                    "unexpected event {other:?} in a GitOps iteration"
                )));
            }
        }
        assert!(
            cluster.pods() <= cluster.capacity(),
            "pod capacity violated at t={}ms",
            sim.now_ms()
        );
    }

    let sample = sample.expect("resource sample always taken");
    let timeout_ms = secs_to_ms(cfg.timeout_s);
    let timed_out = push.t_push_ms > timeout_ms
        || chains.iter().any(|c| {
            c.sync_ms > timeout_ms
                || c.recon_ms > timeout_ms
                || c.deploy_ms > timeout_ms
                || c.healthy_ms > timeout_ms
        });
    if timed_out {
        return Ok(None);
    }
    let per_app = n_apps as f64;
    Ok(Some(KpiRecord {
        scenario: cfg.scenario,
        profile: profile.id.prefix().to_string(),
        k,
        rep,
        t_push_s: quantize(ms_to_secs(push.t_push_ms)),
        t_sync_s: quantize(mean(&chains.iter().map(|c| c.sync_ms).collect::<Vec<_>>()) / 1000.0),
        t_recon_s: quantize(mean(&chains.iter().map(|c| c.recon_ms).collect::<Vec<_>>()) / 1000.0),
        t_deploy_s: quantize(
            mean(&chains.iter().map(|c| c.deploy_ms).collect::<Vec<_>>()) / 1000.0,
        ),
        t_healthy_s: quantize(
            mean(&chains.iter().map(|c| c.healthy_ms).collect::<Vec<_>>()) / 1000.0,
        ),
        u_cpu_millicore: quantize(sample.u_cpu_millicore / per_app),
        u_mem_mib: quantize(sample.u_mem_mib / per_app),
        seed: cfg.seed,
        nephio: None,
    }))
}

#[allow(clippy::too_many_arguments)]
fn run_nephio_iteration(
    cfg: &RunConfig,
    profile: &ReconcilerProfile,
    k: u32,
    rep: u32,
    source: &RandomSource,
    stream_base: &str,
    streams: &mut IterationStreams,
    sim: &mut Simulator,
    cluster: &mut SimulatedCluster,
) -> Result<Option<KpiRecord>> {
    let mode = match cfg.scenario {
        Scenario::NephioSingle => IntentMode::SingleReplicaScaled,
        Scenario::NephioMulti => IntentMode::MultiPackage,
        _ => unreachable!("gitops scenarios take the other path"),
    };
    let scenario_kind = cfg.scenario.kind();
    let mut repo = GitRepository::new(crate::nephio::NEPHIO_TOKEN);
    let plans = plan_intents(k, mode, &cfg.preset.nephio, source, stream_base)?;
    let n_intents = plans.len() as u32;

    // downstream reconcilers track the deployment repository's main branch
    for (i, plan) in plans.iter().enumerate() {
        let rec_name = format!("{}-rec-{}", profile.id.prefix(), i + 1);
        repo.subscribe(WebhookSubscription {
            subscriber: rec_name.clone(),
            branch: MAIN_BRANCH.into(),
            dir_filter: plan.target_dir.clone(),
            token: crate::nephio::NEPHIO_TOKEN.into(),
            notify_delay_ms: 0,
        });
        let instance = match profile.resources {
            ResourceModel::PerApp { .. } => rec_name,
            ResourceModel::Shared { .. } => format!("{}-reconciler", profile.id.prefix()),
        };
        cluster.bind_instance(&profile.control_plane_namespace, &instance)?;
    }

    let mut pipeline = HydrationPipeline::new(plans);
    pipeline.start(sim)?;

    let mut chains: Vec<ChainTimes> = vec![ChainTimes::default(); n_intents as usize];
    let mut tracked: Vec<Option<String>> = vec![None; n_intents as usize];
    let mut recon_pending = n_intents;

    let mut sample: Option<crate::cluster::ResourceSample> = None;
    while let Some(event) = sim.next_event()? {
        match event.kind {
            EventKind::HydrationStep { pkg, step } => {
                if let Some((i, deliveries)) = pipeline.handle_step(sim, &mut repo, pkg, step)? {
                    debug_assert_eq!(deliveries.len(), 1, "one sync chain per merge");
                    let idx = i as usize;
                    chains[idx].chain_start_ms = sim.now_ms();
                    let plan = &pipeline.plans()[idx];
                    let spec = crate::reconcilers::ReconcilerSpec {
                        name: format!("{}-rec-{}", profile.id.prefix(), i + 1),
                        namespace: format!("{}-ns", plan.package),
                        cluster_url: "https://cluster.local".into(),
                        git_branch: MAIN_BRANCH.into(),
                        repo_dir: plan.target_dir.clone(),
                        profile: profile.id,
                        tracked_revision: tracked[idx].clone(),
                    };
                    let (delay_s, drift) = crate::reconcilers::detect_and_sync(
                        &spec,
                        &repo,
                        profile,
                        k,
                        streams.sync_stream(profile),
                    )?;
                    debug_assert!(!drift.is_zero());
                    sim.schedule_in(secs_to_ms(delay_s), EventKind::SyncFired { rec: i })?;
                }
            }
            EventKind::SyncFired { rec } => {
                let i = rec as usize;
                let observed = repo.revision_of(MAIN_BRANCH)?;
                let drift = crate::reconcilers::StateDrift {
                    tracked_revision: tracked[i].clone(),
                    observed_revision: observed.clone(),
                };
                let t_recon_s = reconcile(profile, scenario_kind, &drift, k, &mut streams.recon)?;
                tracked[i] = Some(observed);
                chains[i].sync_at_ms = sim.now_ms();
                chains[i].sync_ms = sim.now_ms() - chains[i].chain_start_ms;
                sim.schedule_in(secs_to_ms(t_recon_s), EventKind::ReconcileDone { rec })?;
            }
            EventKind::ReconcileDone { rec } => {
                let i = rec as usize;
                chains[i].recon_done_ms = sim.now_ms();
                chains[i].recon_ms = sim.now_ms() - chains[i].sync_at_ms;
                let plan = &pipeline.plans()[i];
                let timing = cluster.apply_deployment(
                    &format!("{}-ns", plan.package),
                    &plan.package,
                    plan.replicas,
                    profile,
                    scenario_kind,
                    k,
                    &mut streams.deploy,
                    &mut streams.healthy,
                )?;
                let deploy_ms = secs_to_ms(timing.t_deploy_s);
                let healthy_ms = secs_to_ms(timing.t_healthy_s);
                sim.schedule_in(deploy_ms, EventKind::DeployScheduled { app: rec })?;
                sim.schedule_in(deploy_ms + healthy_ms, EventKind::PodHealthy { app: rec })?;
                recon_pending -= 1;
                if recon_pending == 0 {
                    sim.schedule_in(0, EventKind::ResourceSample)?;
                }
            }
            EventKind::DeployScheduled { app } => {
                let i = app as usize;
                let plan = &pipeline.plans()[i];
                cluster.mark_created(&format!("{}-ns", plan.package), &plan.package, sim.now_ms());
                chains[i].deploy_at_ms = sim.now_ms();
                chains[i].deploy_ms = sim.now_ms() - chains[i].recon_done_ms;
            }
            EventKind::PodHealthy { app } => {
                let i = app as usize;
                let plan = &pipeline.plans()[i];
                cluster.mark_healthy(&format!("{}-ns", plan.package), &plan.package);
                chains[i].healthy_ms = sim.now_ms() - chains[i].deploy_at_ms;
            }
            EventKind::ResourceSample => {
                sample = Some(cluster.top(
                    &profile.control_plane_namespace,
                    profile,
                    n_intents,
                    sim.now_ms(),
                    &mut streams.cpu,
                    &mut streams.mem,
                )?);
            }
            other => {
                return Err(Error::InvalidParams(format!(
                    "unexpected event {other:?} in a nephio iteration"
                )));
            }
        }
        assert!(
            cluster.pods() <= cluster.capacity(),
            "pod capacity violated at t={}ms",
            sim.now_ms()
        );
    }

    let sample = sample.expect("resource sample always taken");
    let timings = pipeline.timings();
    let timeout_ms = secs_to_ms(cfg.timeout_s);
    let timed_out = timings.iter().any(|t| t.t_inproc_ms > timeout_ms)
        || chains.iter().any(|c| {
            c.sync_ms > timeout_ms
                || c.recon_ms > timeout_ms
                || c.deploy_ms > timeout_ms
                || c.healthy_ms > timeout_ms
        });
    if timed_out {
        return Ok(None);
    }
    let oh_mean = mean(&timings.iter().map(|t| t.t_oh_ms).collect::<Vec<_>>()) / 1000.0;
    let hydrate_mean = mean(&timings.iter().map(|t| t.t_hydrate_ms).collect::<Vec<_>>()) / 1000.0;
    let oh_mean = quantize(oh_mean);
    let hydrate_mean = quantize(hydrate_mean);
    let per_intent = n_intents as f64;
    Ok(Some(KpiRecord {
        scenario: cfg.scenario,
        profile: "nephio".to_string(),
        k,
        rep,
        t_push_s: 0.0,
        t_sync_s: quantize(mean(&chains.iter().map(|c| c.sync_ms).collect::<Vec<_>>()) / 1000.0),
        t_recon_s: quantize(mean(&chains.iter().map(|c| c.recon_ms).collect::<Vec<_>>()) / 1000.0),
        t_deploy_s: quantize(
            mean(&chains.iter().map(|c| c.deploy_ms).collect::<Vec<_>>()) / 1000.0,
        ),
        t_healthy_s: quantize(
            mean(&chains.iter().map(|c| c.healthy_ms).collect::<Vec<_>>()) / 1000.0,
        ),
        u_cpu_millicore: quantize(sample.u_cpu_millicore / per_intent),
        u_mem_mib: quantize(sample.u_mem_mib / per_intent),
        seed: cfg.seed,
        nephio: Some(NephioKpis {
            // derive the sum so the identity survives the means exactly
            t_inproc_s: quantize(oh_mean + hydrate_mean),
            t_hydrate_s: hydrate_mean,
            t_oh_s: oh_mean,
        }),
    }))
}

// ---------------------------------------------------------------------
// CSV formats

pub const RAW_HEADER: &str = "scenario,profile,k,rep,t_push_s,t_sync_s,t_recon_s,t_deploy_s,t_healthy_s,u_cpu_millicore,u_mem_mib,seed";
pub const NEPHIO_EXTRA_COLUMNS: &str = ",t_inproc_s,t_hydrate_s,t_oh_s";
pub const AGGREGATED_HEADER: &str = "scenario,profile,k,t_push_s,t_sync_s,t_recon_s,t_deploy_s,t_healthy_s,u_cpu_millicore,u_mem_mib";

pub fn raw_csv(records: &[KpiRecord]) -> String {
    let nephio = records.iter().any(|r| r.nephio.is_some());
    let mut out = String::from(RAW_HEADER);
    if nephio {
        out.push_str(NEPHIO_EXTRA_COLUMNS);
    }
    out.push('\n');
    for r in records {
        out.push_str(&format!(
            "{},{},{},{},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{}",
            r.scenario.as_str(),
            r.profile,
            r.k,
            r.rep,
            r.t_push_s,
            r.t_sync_s,
            r.t_recon_s,
            r.t_deploy_s,
            r.t_healthy_s,
            r.u_cpu_millicore,
            r.u_mem_mib,
            r.seed
        ));
        if nephio {
            let n = r.nephio.unwrap_or(NephioKpis {
                t_inproc_s: 0.0,
                t_hydrate_s: 0.0,
                t_oh_s: 0.0,
            });
            out.push_str(&format!(
                ",{:.6},{:.6},{:.6}",
                n.t_inproc_s, n.t_hydrate_s, n.t_oh_s
            ));
        }
        out.push('\n');
    }
    out
}

pub fn aggregated_csv(aggs: &[AggregatedKpi]) -> String {
    let nephio = aggs.iter().any(|a| a.nephio.is_some());
    let mut out = String::from(AGGREGATED_HEADER);
    if nephio {
        out.push_str(NEPHIO_EXTRA_COLUMNS);
    }
    out.push('\n');
    for a in aggs {
        out.push_str(&format!(
            "{},{},{},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6}",
            a.scenario.as_str(),
            a.profile,
            a.k,
            a.t_push_s,
            a.t_sync_s,
            a.t_recon_s,
            a.t_deploy_s,
            a.t_healthy_s,
            a.u_cpu_millicore,
            a.u_mem_mib
        ));
        if nephio {
            let n = a.nephio.unwrap_or(NephioKpis {
                t_inproc_s: 0.0,
                t_hydrate_s: 0.0,
                t_oh_s: 0.0,
            });
            out.push_str(&format!(
                ",{:.6},{:.6},{:.6}",
                n.t_inproc_s, n.t_hydrate_s, n.t_oh_s
            ));
        }
        out.push('\n');
    }
    out
}

/// Parse a raw results CSV, validating the header column by column.
pub fn parse_raw_csv(text: &str) -> Result<Vec<KpiRecord>> {
    let mut lines = text.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or_else(|| Error::HeaderMismatch("scenario".into()))?;
    let expected_base: Vec<&str> = RAW_HEADER.split(',').collect();
    let expected_nephio: Vec<&str> = NEPHIO_EXTRA_COLUMNS
        .trim_start_matches(',')
        .split(',')
        .collect();
    let got: Vec<&str> = header.split(',').collect();
    for (i, want) in expected_base.iter().enumerate() {
        match got.get(i) {
            Some(col) if col == want => {}
            Some(col) => return Err(Error::HeaderMismatch(col.to_string())),
            None => return Err(Error::HeaderMismatch(want.to_string())),
        }
    }
    let has_nephio = got.len() > expected_base.len();
    if has_nephio {
        for (i, want) in expected_nephio.iter().enumerate() {
            match got.get(expected_base.len() + i) {
                Some(col) if col == want => {}
                Some(col) => return Err(Error::HeaderMismatch(col.to_string())),
                None => return Err(Error::HeaderMismatch(want.to_string())),
            }
        }
    }
    let expected_cols = expected_base.len() + if has_nephio { 3 } else { 0 };

    let mut records = Vec::new();
    for (lineno, line) in lines {
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != expected_cols {
            return Err(Error::CsvParse {
                line: lineno + 1,
                msg: format!("expected {expected_cols} columns, found {}", fields.len()),
            });
        }
        let parse_f = |idx: usize| -> Result<f64> {
            fields[idx].parse::<f64>().map_err(|e| Error::CsvParse {
                line: lineno + 1,
                msg: format!("column {}: {e}", idx + 1),
            })
        };
        let parse_u = |idx: usize| -> Result<u64> {
            fields[idx].parse::<u64>().map_err(|e| Error::CsvParse {
                line: lineno + 1,
                msg: format!("column {}: {e}", idx + 1),
            })
        };
        let scenario = Scenario::parse(fields[0])?;
        let nephio = if has_nephio && scenario.is_nephio() {
            Some(NephioKpis {
                t_inproc_s: parse_f(12)?,
                t_hydrate_s: parse_f(13)?,
                t_oh_s: parse_f(14)?,
            })
        } else {
            None
        };
        records.push(KpiRecord {
            scenario,
            profile: fields[1].to_string(),
            k: parse_u(2)? as u32,
            rep: parse_u(3)? as u32,
            t_push_s: parse_f(4)?,
            t_sync_s: parse_f(5)?,
            t_recon_s: parse_f(6)?,
            t_deploy_s: parse_f(7)?,
            t_healthy_s: parse_f(8)?,
            u_cpu_millicore: parse_f(9)?,
            u_mem_mib: parse_f(10)?,
            seed: parse_u(11)?,
            nephio,
        });
    }
    Ok(records)
}
