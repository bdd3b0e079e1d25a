//! Behavior profiles of the three GitOps operators (argo, flux, csync):
//! sync triggering, latency models, control-plane architecture and
//! resource footprints.

use crate::error::{Error, Result};
use crate::git::GitRepository;
use crate::sim::{Distribution, StreamRng};

/// The three supported operator families.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ProfileId {
    Argo,
    Flux,
    Csync,
}

impl ProfileId {
    pub const ALL: [ProfileId; 3] = [ProfileId::Argo, ProfileId::Flux, ProfileId::Csync];

    pub fn prefix(&self) -> &'static str {
        match self {
            ProfileId::Argo => "argo",
            ProfileId::Flux => "flux",
            ProfileId::Csync => "csync",
        }
    }

    /// Display name used in summary tables.
    pub fn display_name(&self) -> &'static str {
        match self {
            ProfileId::Argo => "Argo CD",
            ProfileId::Flux => "Flux CD",
            ProfileId::Csync => "Config Sync",
        }
    }

    pub fn parse(s: &str) -> Result<ProfileId> {
        match s {
            "argo" => Ok(ProfileId::Argo),
            "flux" => Ok(ProfileId::Flux),
            "csync" => Ok(ProfileId::Csync),
            other => Err(Error::UnknownProfile {
                given: other.to_string(),
            }),
        }
    }
}

/// Whether an iteration scales replicas of one app or the app count.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScenarioKind {
    Single,
    Multi,
}

/// How the operator notices a new revision.
#[derive(Debug, Clone, PartialEq)]
pub enum SyncModel {
    /// Push-triggered: delay drawn from a latency distribution.
    Webhook { dist: Distribution },
    /// Pull-based polling: the push lands uniformly inside a poll period.
    Polling { period_s: f64 },
}

/// Latency models for one scenario kind.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioTimings {
    pub push: Distribution,
    pub recon: Distribution,
    pub deploy: Distribution,
    pub healthy: Distribution,
}

/// Control-plane resource accounting.
#[derive(Debug, Clone, PartialEq)]
pub enum ResourceModel {
    /// One reconciler serves all apps; load curves give the namespace
    /// total as a function of the bound app count.
    Shared {
        base_cpu: f64,
        base_mem: f64,
        cpu_load: Distribution,
        mem_load: Distribution,
    },
    /// One reconciler instance per bound app (csync root-reconcilers).
    PerApp {
        base_cpu: f64,
        base_mem: f64,
        cpu_per_instance: Distribution,
        mem_per_instance: Distribution,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReconcilerProfile {
    pub id: ProfileId,
    pub control_plane_namespace: String,
    /// Fixed pod count the control plane reserves against the ceiling.
    pub control_plane_pods: u32,
    pub sync: SyncModel,
    pub single: ScenarioTimings,
    pub multi: ScenarioTimings,
    pub resources: ResourceModel,
}

impl ReconcilerProfile {
    pub fn timings(&self, scenario: ScenarioKind) -> &ScenarioTimings {
        match scenario {
            ScenarioKind::Single => &self.single,
            ScenarioKind::Multi => &self.multi,
        }
    }

    /// Delay between a push landing and the operator observing it.
    pub fn sync_delay_s(&self, k: u32, rng: &mut StreamRng) -> f64 {
        match &self.sync {
            SyncModel::Webhook { dist } => dist.sample(k, rng),
            SyncModel::Polling { period_s } => rng.uniform(0.0, *period_s),
        }
    }

    /// Idle footprint with no bound apps.
    pub fn base_footprint(&self) -> (f64, f64) {
        match &self.resources {
            ResourceModel::Shared {
                base_cpu, base_mem, ..
            }
            | ResourceModel::PerApp {
                base_cpu, base_mem, ..
            } => (*base_cpu, *base_mem),
        }
    }

    /// Control-plane `(u_cpu millicore, u_mem MiB)` at `n_apps` bound apps.
    pub fn control_plane_footprint(
        &self,
        n_apps: u32,
        cpu_rng: &mut StreamRng,
        mem_rng: &mut StreamRng,
    ) -> (f64, f64) {
        match &self.resources {
            ResourceModel::Shared {
                base_cpu,
                base_mem,
                cpu_load,
                mem_load,
            } => {
                if n_apps == 0 {
                    return (*base_cpu, *base_mem);
                }
                (
                    base_cpu + cpu_load.sample(n_apps, cpu_rng),
                    base_mem + mem_load.sample(n_apps, mem_rng),
                )
            }
            ResourceModel::PerApp {
                base_cpu,
                base_mem,
                cpu_per_instance,
                mem_per_instance,
            } => {
                let mut cpu = *base_cpu;
                let mut mem = *base_mem;
                for _ in 0..n_apps {
                    cpu += cpu_per_instance.sample(n_apps, cpu_rng);
                    mem += mem_per_instance.sample(n_apps, mem_rng);
                }
                (cpu, mem)
            }
        }
    }

    /// Noise-free footprint; with a per-app model this is exactly
    /// `base + n_apps * per_instance_mean`.
    pub fn control_plane_footprint_mean(&self, n_apps: u32) -> (f64, f64) {
        match &self.resources {
            ResourceModel::Shared {
                base_cpu,
                base_mem,
                cpu_load,
                mem_load,
            } => {
                if n_apps == 0 {
                    return (*base_cpu, *base_mem);
                }
                (
                    base_cpu + cpu_load.mean_at(n_apps),
                    base_mem + mem_load.mean_at(n_apps),
                )
            }
            ResourceModel::PerApp {
                base_cpu,
                base_mem,
                cpu_per_instance,
                mem_per_instance,
            } => (
                base_cpu + n_apps as f64 * cpu_per_instance.mean_at(n_apps),
                base_mem + n_apps as f64 * mem_per_instance.mean_at(n_apps),
            ),
        }
    }
}

/// One tracked sync binding: a reconciler watching one repo directory.
#[derive(Debug, Clone, PartialEq)]
pub struct ReconcilerSpec {
    pub name: String,
    pub namespace: String,
    pub cluster_url: String,
    pub git_branch: String,
    /// Unique sub-directory of the shared repository this binding tracks.
    pub repo_dir: String,
    pub profile: ProfileId,
    /// Revision last applied; `None` before the first sync.
    pub tracked_revision: Option<String>,
}

/// Revision-based drift between desired and runtime state.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StateDrift {
    pub tracked_revision: Option<String>,
    pub observed_revision: String,
}

impl StateDrift {
    /// Drift is zero exactly when the revision strings agree.
    pub fn is_zero(&self) -> bool {
        self.tracked_revision.as_deref() == Some(self.observed_revision.as_str())
    }
}

/// Arguments shared by every binding of one experiment.
#[derive(Debug, Clone)]
pub struct ReconcilerArgs {
    pub cluster_url: String,
    pub git_branch: String,
    /// Base directory; each binding gets `{repo_dir}/{p}-app-{i}`.
    pub repo_dir: String,
}

/// Expand reconciler bindings `{p}-rec-1..n` / namespaces `{p}-ns-1..n`.
/// Prefixes outside the three-tool set are a hard error.
pub fn generate_reconcilers(
    n: u32,
    prefix: &str,
    args: &ReconcilerArgs,
) -> Result<Vec<ReconcilerSpec>> {
    let profile = ProfileId::parse(prefix)?;
    let mut specs = Vec::with_capacity(n as usize);
    for i in 1..=n {
        let dir = if args.repo_dir.is_empty() {
            format!("{prefix}-app-{i}")
        } else {
            format!("{}/{prefix}-app-{i}", args.repo_dir.trim_end_matches('/'))
        };
        specs.push(ReconcilerSpec {
            name: format!("{prefix}-rec-{i}"),
            namespace: format!("{prefix}-ns-{i}"),
            cluster_url: args.cluster_url.clone(),
            git_branch: args.git_branch.clone(),
            repo_dir: dir,
            profile,
            tracked_revision: None,
        });
    }
    Ok(specs)
}

/// Observe the repository and draw the sync latency. Returns the delay
/// until the operator sees the revision plus the drift it will observe.
pub fn detect_and_sync(
    spec: &ReconcilerSpec,
    repo: &GitRepository,
    profile: &ReconcilerProfile,
    k: u32,
    rng: &mut StreamRng,
) -> Result<(f64, StateDrift)> {
    let observed = repo.revision_of(&spec.git_branch)?;
    let drift = StateDrift {
        tracked_revision: spec.tracked_revision.clone(),
        observed_revision: observed,
    };
    if drift.is_zero() {
        // nothing to do; no reconcile follows
        return Ok((0.0, drift));
    }
    Ok((profile.sync_delay_s(k, rng), drift))
}

/// Draw the reconcile latency for a non-zero drift. Calling this with
/// zero drift is a harness bug and is rejected.
pub fn reconcile(
    profile: &ReconcilerProfile,
    scenario: ScenarioKind,
    drift: &StateDrift,
    k: u32,
    rng: &mut StreamRng,
) -> Result<f64> {
    if drift.is_zero() {
        return Err(Error::ReconcileWithoutDrift);
    }
    Ok(profile.timings(scenario).recon.sample(k, rng))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::preset;
    use crate::sim::RandomSource;

    fn args() -> ReconcilerArgs {
        ReconcilerArgs {
            cluster_url: "https://cluster.local".into(),
            git_branch: "main".into(),
            repo_dir: "".into(),
        }
    }

    #[test]
    fn generated_names_follow_the_prefix_scheme() {
        let specs = generate_reconcilers(2, "flux", &args()).unwrap();
        let names: Vec<_> = specs.iter().map(|s| s.name.as_str()).collect();
        let namespaces: Vec<_> = specs.iter().map(|s| s.namespace.as_str()).collect();
        assert_eq!(names, vec!["flux-rec-1", "flux-rec-2"]);
        assert_eq!(namespaces, vec!["flux-ns-1", "flux-ns-2"]);
        assert_eq!(specs[0].repo_dir, "flux-app-1");
        assert_eq!(specs[1].repo_dir, "flux-app-2");
    }

    #[test]
    fn single_app_mode_generates_one_spec() {
        let specs = generate_reconcilers(1, "argo", &args()).unwrap();
        assert_eq!(specs.len(), 1);
        assert_eq!(specs[0].name, "argo-rec-1");
    }

    #[test]
    fn unknown_prefix_is_a_hard_error() {
        let err = generate_reconcilers(5, "xyz", &args()).unwrap_err();
        assert!(matches!(err, Error::UnknownProfile { .. }));
    }

    #[test]
    fn control_plane_namespaces_are_fixed_per_tool() {
        let preset = preset::builtin("table3").unwrap();
        assert_eq!(
            preset.profile(ProfileId::Argo).control_plane_namespace,
            "argo"
        );
        assert_eq!(
            preset.profile(ProfileId::Flux).control_plane_namespace,
            "flux-system"
        );
        assert_eq!(
            preset.profile(ProfileId::Csync).control_plane_namespace,
            "config-management-system"
        );
    }

    #[test]
    fn argo_sync_latency_mean_over_twenty_reps() {
        let preset = preset::builtin("table3").unwrap();
        let profile = preset.profile(ProfileId::Argo);
        let mut rng = RandomSource::new(42).stream("argo-sync");
        let mean: f64 = (0..20)
            .map(|_| profile.sync_delay_s(1, &mut rng))
            .sum::<f64>()
            / 20.0;
        assert!(
            (2.4..=3.3).contains(&mean),
            "argo mean t_sync over r=20 was {mean}, expected within [2.4, 3.3]"
        );
    }

    #[test]
    fn csync_polling_matches_uniform_moments() {
        let preset = preset::builtin("table3").unwrap();
        let profile = preset.profile(ProfileId::Csync);
        let mut rng = RandomSource::new(7).stream("csync-sync");
        let n = 10_000;
        let samples: Vec<f64> = (0..n).map(|_| profile.sync_delay_s(1, &mut rng)).collect();
        let mean = samples.iter().sum::<f64>() / n as f64;
        let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        let sigma = var.sqrt();
        // oracle: uniform(0, P) has mu = P/2 and sigma = P/sqrt(12)
        let period = 435.0;
        let mu_oracle = period / 2.0;
        let sigma_oracle = period / 12.0_f64.sqrt();
        assert!(
            (mean - mu_oracle).abs() / mu_oracle < 0.05,
            "polling mean {mean} not within 5% of {mu_oracle}"
        );
        assert!(
            (sigma - sigma_oracle).abs() / sigma_oracle < 0.10,
            "polling sigma {sigma} not within 10% of {sigma_oracle}"
        );
    }

    #[test]
    fn sync_against_unchanged_revision_reports_zero_drift() {
        let preset = preset::builtin("table3").unwrap();
        let profile = preset.profile(ProfileId::Argo);
        let repo = GitRepository::new("bench-pat");
        let mut spec = generate_reconcilers(1, "argo", &args()).unwrap().remove(0);
        spec.tracked_revision = Some(repo.revision_of("main").unwrap());
        let mut rng = RandomSource::new(1).stream("sync");
        let (delay, drift) = detect_and_sync(&spec, &repo, profile, 1, &mut rng).unwrap();
        assert!(drift.is_zero());
        assert_eq!(delay, 0.0);
        // reconciling zero drift is a contract violation
        assert!(matches!(
            reconcile(profile, ScenarioKind::Single, &drift, 1, &mut rng),
            Err(Error::ReconcileWithoutDrift)
        ));
    }

    #[test]
    fn csync_vshape_medians_in_fig_preset() {
        let preset = preset::builtin("fig5").unwrap();
        let profile = preset.profile(ProfileId::Csync);
        let recon = &profile.multi.recon;
        let mut rng = RandomSource::new(42).stream("vshape");
        let median_at = |k: u32, rng: &mut StreamRng| -> f64 {
            let mut samples: Vec<f64> = (0..20).map(|_| recon.sample(k, rng)).collect();
            samples.sort_by(f64::total_cmp);
            (samples[9] + samples[10]) / 2.0
        };
        let m1 = median_at(1, &mut rng);
        let m50 = median_at(50, &mut rng);
        assert!(
            (m1 - 17.5).abs() / 17.5 < 0.10,
            "csync multi-app median t_recon at k=1 was {m1}, expected about 17.5"
        );
        assert!(
            (m50 - 7.5).abs() / 7.5 < 0.10,
            "csync multi-app median t_recon at k=50 was {m50}, expected about 7.5"
        );
        // noise-free trajectory grows after the dip
        let mut prev = recon.mean_at(50);
        for k in [51, 61, 71, 81, 90] {
            let v = recon.mean_at(k);
            assert!(v >= prev, "noise-free median curve decreased after k=50");
            prev = v;
        }
    }

    #[test]
    fn argo_single_recon_summary_moments() {
        // pooled over the default grid the recon model reproduces the
        // calibrated summary row (mu 0.01, sigma 0.01)
        let preset = preset::builtin("table3").unwrap();
        let profile = preset.profile(ProfileId::Argo);
        let recon = &profile.single.recon;
        let mut rng = RandomSource::new(42).stream("argo-recon");
        let mut samples = Vec::new();
        for k in (1..=91).step_by(10) {
            for _ in 0..20 {
                samples.push(recon.sample(k, &mut rng));
            }
        }
        let mean = samples.iter().sum::<f64>() / samples.len() as f64;
        let var =
            samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (samples.len() - 1) as f64;
        assert!(
            (mean - 0.01).abs() / 0.01 < 0.05,
            "pooled mean {mean} off 0.01"
        );
        assert!(
            (var.sqrt() - 0.01).abs() / 0.01 < 0.25,
            "pooled sigma {} off 0.01",
            var.sqrt()
        );
    }

    #[test]
    fn csync_footprint_is_affine_and_matches_scale_law() {
        let preset = preset::builtin("table3").unwrap();
        let profile = preset.profile(ProfileId::Csync);
        let (base_cpu, base_mem) = profile.control_plane_footprint_mean(0);
        let (_, mem_per) = profile.control_plane_footprint_mean(1);
        let per_instance = mem_per - base_mem;
        for n in [0u32, 1, 10, 45, 90] {
            let (cpu, mem) = profile.control_plane_footprint_mean(n);
            assert!(
                (mem - (base_mem + n as f64 * per_instance)).abs() < 1e-9,
                "zero-noise memory footprint not affine at n={n}"
            );
            assert!(cpu >= base_cpu);
        }
        let (_, mem90) = profile.control_plane_footprint_mean(90);
        assert!(
            (mem90 - 90.0 * 98.47).abs() < 1e-6,
            "90-app footprint should be 90 x 98.47 MiB, got {mem90}"
        );
        assert!((mem90 - 8192.0).abs() / 8192.0 < 0.10);
    }

    #[test]
    fn sampled_footprint_mean_tracks_per_instance_calibration() {
        let preset = preset::builtin("table3").unwrap();
        let profile = preset.profile(ProfileId::Csync);
        let src = RandomSource::new(3);
        let mut cpu_rng = src.stream("cpu");
        let mut mem_rng = src.stream("mem");
        let reps = 50;
        let mut total = 0.0;
        for _ in 0..reps {
            let (_, mem) = profile.control_plane_footprint(90, &mut cpu_rng, &mut mem_rng);
            total += mem;
        }
        let mean = total / reps as f64;
        assert!(
            (mean - 8862.3).abs() / 8862.3 < 0.02,
            "sampled 90-app memory mean was {mean}, expected about 8862"
        );
    }

    #[test]
    fn flux_cpu_band_in_fig_preset() {
        let preset = preset::builtin("fig4").unwrap();
        let profile = preset.profile(ProfileId::Flux);
        let src = RandomSource::new(4);
        let mut cpu_rng = src.stream("cpu");
        let mut mem_rng = src.stream("mem");
        for n in [1u32, 30, 60, 90] {
            let (cpu, _) = profile.control_plane_footprint(n, &mut cpu_rng, &mut mem_rng);
            assert!(
                (1.0..=250.0).contains(&cpu),
                "flux u_cpu at {n} apps was {cpu}, expected inside [1, 250]"
            );
        }
    }
}
