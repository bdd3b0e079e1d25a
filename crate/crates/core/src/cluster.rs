//! Kubernetes-like cluster backend: namespaces, deployments with replica
//! health, a pod-capacity ceiling and per-namespace resource accounting.
//!
//! All four operations a live-cluster adapter would have to provide
//! (apply, status read, top, cleanup) sit behind [`ClusterBackend`]; only
//! the simulated implementation ships here.

use std::collections::{BTreeMap, BTreeSet};

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::reconcilers::{ReconcilerProfile, ResourceModel, ScenarioKind};
use crate::sim::StreamRng;

/// Default K3s-style pod ceiling.
pub const DEFAULT_POD_CAPACITY: u32 = 110;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Health {
    Pending,
    Healthy,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeploymentRecord {
    pub name: String,
    pub namespace: String,
    pub replicas: u32,
    pub available_replicas: u32,
    /// Virtual creation timestamp; `None` until the scheduler placed it.
    pub created_at_ms: Option<u64>,
    pub health: Health,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResourceSample {
    pub namespace: String,
    pub u_cpu_millicore: f64,
    pub u_mem_mib: f64,
    pub at_ms: u64,
}

/// Latencies drawn when a deployment is applied.
#[derive(Debug, Clone, Copy)]
pub struct DeployTiming {
    pub t_deploy_s: f64,
    pub t_healthy_s: f64,
}

/// The four operations a cluster adapter must provide.
pub trait ClusterBackend {
    /// Admit a deployment (capacity permitting) and draw its scheduling
    /// and health latencies from the profile's models.
    #[allow(clippy::too_many_arguments)]
    fn apply_deployment(
        &mut self,
        namespace: &str,
        name: &str,
        replicas: u32,
        profile: &ReconcilerProfile,
        scenario: ScenarioKind,
        k: u32,
        deploy_rng: &mut StreamRng,
        healthy_rng: &mut StreamRng,
    ) -> Result<DeployTiming>;

    fn deployment_status(&self, namespace: &str, name: &str) -> Option<&DeploymentRecord>;

    /// Sample resource utilization of a (control-plane) namespace.
    fn top(
        &mut self,
        namespace: &str,
        profile: &ReconcilerProfile,
        n_apps: u32,
        at_ms: u64,
        cpu_rng: &mut StreamRng,
        mem_rng: &mut StreamRng,
    ) -> Result<ResourceSample>;

    /// Remove everything carrying `prefix`; idempotent.
    fn cleanup(&mut self, prefix: &str);
}

#[derive(Debug, Clone)]
pub struct SimulatedCluster {
    namespaces: BTreeSet<String>,
    /// Namespaces that survive cleanup (reconciler control planes).
    protected: BTreeSet<String>,
    deployments: BTreeMap<(String, String), DeploymentRecord>,
    /// Reconciler instances per control-plane namespace.
    instances: BTreeMap<String, BTreeSet<String>>,
    pod_capacity: u32,
    control_plane_pods: u32,
}

impl SimulatedCluster {
    pub fn new(pod_capacity: u32) -> Self {
        SimulatedCluster {
            namespaces: BTreeSet::new(),
            protected: BTreeSet::new(),
            deployments: BTreeMap::new(),
            instances: BTreeMap::new(),
            pod_capacity,
            control_plane_pods: 0,
        }
    }

    /// Install a reconciler control plane: its namespace becomes protected
    /// and its fixed pod count is reserved against the capacity ceiling.
    pub fn provision_control_plane(&mut self, profile: &ReconcilerProfile) -> Result<()> {
        let ns = profile.control_plane_namespace.clone();
        if self.protected.contains(&ns) {
            return Ok(());
        }
        let pods = profile.control_plane_pods;
        self.check_capacity(pods)?;
        self.control_plane_pods += pods;
        self.namespaces.insert(ns.clone());
        self.protected.insert(ns.clone());
        self.instances.entry(ns).or_default();
        Ok(())
    }

    /// Register a reconciler instance in its control-plane namespace.
    pub fn bind_instance(&mut self, control_plane_ns: &str, instance: &str) -> Result<()> {
        if !self.namespaces.contains(control_plane_ns) {
            return Err(Error::UnknownNamespace(control_plane_ns.to_string()));
        }
        self.instances
            .entry(control_plane_ns.to_string())
            .or_default()
            .insert(instance.to_string());
        Ok(())
    }

    pub fn instance_count(&self, control_plane_ns: &str) -> u32 {
        self.instances
            .get(control_plane_ns)
            .map(|set| set.len() as u32)
            .unwrap_or(0)
    }

    /// App replicas plus reserved control-plane pods.
    pub fn pods(&self) -> u32 {
        self.control_plane_pods + self.deployments.values().map(|d| d.replicas).sum::<u32>()
    }

    pub fn namespace_count(&self) -> u32 {
        self.namespaces.len() as u32
    }

    pub fn capacity(&self) -> u32 {
        self.pod_capacity
    }

    fn check_capacity(&self, additional: u32) -> Result<()> {
        let used = self.pods();
        if used + additional > self.pod_capacity {
            return Err(Error::CapacityExceeded {
                requested: additional,
                available: self.pod_capacity.saturating_sub(used),
                capacity: self.pod_capacity,
            });
        }
        Ok(())
    }

    /// Set the creation timestamp once the scheduler placed the deployment.
    pub fn mark_created(&mut self, namespace: &str, name: &str, at_ms: u64) {
        if let Some(dep) = self
            .deployments
            .get_mut(&(namespace.to_string(), name.to_string()))
        {
            debug_assert!(dep.created_at_ms.is_none(), "creation timestamp set twice");
            dep.created_at_ms = Some(at_ms);
        }
    }

    /// Transition pending -> healthy; a zero-replica deployment never
    /// becomes healthy.
    pub fn mark_healthy(&mut self, namespace: &str, name: &str) {
        if let Some(dep) = self
            .deployments
            .get_mut(&(namespace.to_string(), name.to_string()))
        {
            if dep.replicas == 0 {
                return;
            }
            debug_assert_eq!(dep.health, Health::Pending, "health must transition once");
            dep.available_replicas = dep.replicas;
            dep.health = Health::Healthy;
        }
    }

    /// Stable digest of the full cluster state, for reset verification.
    pub fn state_hash(&self) -> String {
        let mut hasher = Sha256::new();
        hasher.update(format!(
            "capacity={};cp_pods={}\n",
            self.pod_capacity, self.control_plane_pods
        ));
        for ns in &self.namespaces {
            hasher.update(format!("ns={ns}\n"));
        }
        for ((ns, name), dep) in &self.deployments {
            hasher.update(format!(
                "dep={ns}/{name};replicas={};avail={};created={:?};health={:?}\n",
                dep.replicas, dep.available_replicas, dep.created_at_ms, dep.health
            ));
        }
        for (ns, instances) in &self.instances {
            for inst in instances {
                hasher.update(format!("inst={ns}/{inst}\n"));
            }
        }
        let digest = hasher.finalize();
        digest[..8].iter().map(|b| format!("{b:02x}")).collect()
    }

    /// One-line dump for reset verification logs.
    pub fn dump_line(&self) -> String {
        format!(
            "pods={};namespaces={};hash={}",
            self.pods(),
            self.namespace_count(),
            self.state_hash()
        )
    }
}

impl ClusterBackend for SimulatedCluster {
    #[allow(clippy::too_many_arguments)]
    fn apply_deployment(
        &mut self,
        namespace: &str,
        name: &str,
        replicas: u32,
        profile: &ReconcilerProfile,
        scenario: ScenarioKind,
        k: u32,
        deploy_rng: &mut StreamRng,
        healthy_rng: &mut StreamRng,
    ) -> Result<DeployTiming> {
        self.check_capacity(replicas)?;
        self.namespaces.insert(namespace.to_string());
        self.deployments.insert(
            (namespace.to_string(), name.to_string()),
            DeploymentRecord {
                name: name.to_string(),
                namespace: namespace.to_string(),
                replicas,
                available_replicas: 0,
                created_at_ms: None,
                health: Health::Pending,
            },
        );
        let timings = profile.timings(scenario);
        Ok(DeployTiming {
            t_deploy_s: timings.deploy.sample(k, deploy_rng),
            t_healthy_s: timings.healthy.sample(k, healthy_rng),
        })
    }

    fn deployment_status(&self, namespace: &str, name: &str) -> Option<&DeploymentRecord> {
        self.deployments
            .get(&(namespace.to_string(), name.to_string()))
    }

    fn top(
        &mut self,
        namespace: &str,
        profile: &ReconcilerProfile,
        n_apps: u32,
        at_ms: u64,
        cpu_rng: &mut StreamRng,
        mem_rng: &mut StreamRng,
    ) -> Result<ResourceSample> {
        if !self.namespaces.contains(namespace) {
            return Err(Error::UnknownNamespace(namespace.to_string()));
        }
        if let ResourceModel::PerApp { .. } = profile.resources {
            debug_assert_eq!(
                self.instance_count(namespace),
                n_apps,
                "per-app control planes keep one instance per bound app"
            );
        }
        let (u_cpu_millicore, u_mem_mib) =
            profile.control_plane_footprint(n_apps, cpu_rng, mem_rng);
        Ok(ResourceSample {
            namespace: namespace.to_string(),
            u_cpu_millicore,
            u_mem_mib,
            at_ms,
        })
    }

    fn cleanup(&mut self, prefix: &str) {
        let doomed: Vec<String> = self
            .namespaces
            .iter()
            .filter(|ns| ns.starts_with(prefix) && !self.protected.contains(*ns))
            .cloned()
            .collect();
        for ns in &doomed {
            self.namespaces.remove(ns);
        }
        self.deployments
            .retain(|(ns, name), _| !ns.starts_with(prefix) && !name.starts_with(prefix));
        for instances in self.instances.values_mut() {
            instances.retain(|inst| !inst.starts_with(prefix));
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::preset;
    use crate::reconcilers::ProfileId;
    use crate::sim::RandomSource;

    fn rngs(seed: u64) -> (StreamRng, StreamRng) {
        let src = RandomSource::new(seed);
        (src.stream("a"), src.stream("b"))
    }

    #[test]
    fn capacity_violation_is_an_explicit_error() {
        let preset = preset::builtin("table3").unwrap();
        let profile = preset.profile(ProfileId::Argo);
        let mut cluster = SimulatedCluster::new(DEFAULT_POD_CAPACITY);
        cluster.provision_control_plane(profile).unwrap();
        let (mut d, mut h) = rngs(1);
        // argo control plane reserves 7 pods, so 104 replicas exceed 110
        let err = cluster
            .apply_deployment(
                "argo-ns-1",
                "argo-app-1",
                104,
                profile,
                ScenarioKind::Single,
                104,
                &mut d,
                &mut h,
            )
            .unwrap_err();
        assert!(matches!(err, Error::CapacityExceeded { .. }));
        // nothing was admitted
        assert!(cluster
            .deployment_status("argo-ns-1", "argo-app-1")
            .is_none());
    }

    #[test]
    fn zero_replica_deployments_never_become_healthy() {
        let preset = preset::builtin("table3").unwrap();
        let profile = preset.profile(ProfileId::Flux);
        let mut cluster = SimulatedCluster::new(DEFAULT_POD_CAPACITY);
        cluster.provision_control_plane(profile).unwrap();
        let (mut d, mut h) = rngs(2);
        cluster
            .apply_deployment(
                "flux-ns-1",
                "flux-app-1",
                0,
                profile,
                ScenarioKind::Single,
                1,
                &mut d,
                &mut h,
            )
            .unwrap();
        cluster.mark_healthy("flux-ns-1", "flux-app-1");
        let dep = cluster
            .deployment_status("flux-ns-1", "flux-app-1")
            .unwrap();
        assert_eq!(dep.health, Health::Pending);
    }

    #[test]
    fn healthy_implies_full_availability_and_creation() {
        let preset = preset::builtin("table3").unwrap();
        let profile = preset.profile(ProfileId::Argo);
        let mut cluster = SimulatedCluster::new(DEFAULT_POD_CAPACITY);
        cluster.provision_control_plane(profile).unwrap();
        let (mut d, mut h) = rngs(3);
        cluster
            .apply_deployment(
                "argo-ns-1",
                "argo-app-1",
                5,
                profile,
                ScenarioKind::Single,
                5,
                &mut d,
                &mut h,
            )
            .unwrap();
        cluster.mark_created("argo-ns-1", "argo-app-1", 1234);
        cluster.mark_healthy("argo-ns-1", "argo-app-1");
        let dep = cluster
            .deployment_status("argo-ns-1", "argo-app-1")
            .unwrap();
        assert_eq!(dep.health, Health::Healthy);
        assert_eq!(dep.available_replicas, dep.replicas);
        assert_eq!(dep.created_at_ms, Some(1234));
    }

    #[test]
    fn cleanup_restores_baseline_and_is_idempotent() {
        let preset = preset::builtin("table3").unwrap();
        let profile = preset.profile(ProfileId::Csync);
        let mut cluster = SimulatedCluster::new(DEFAULT_POD_CAPACITY);
        cluster.provision_control_plane(profile).unwrap();
        let baseline = cluster.state_hash();
        let baseline_pods = cluster.pods();
        let (mut d, mut h) = rngs(4);
        for i in 1..=9 {
            cluster
                .apply_deployment(
                    &format!("csync-ns-{i}"),
                    &format!("csync-app-{i}"),
                    1,
                    profile,
                    ScenarioKind::Multi,
                    9,
                    &mut d,
                    &mut h,
                )
                .unwrap();
            cluster
                .bind_instance(&profile.control_plane_namespace, &format!("csync-rec-{i}"))
                .unwrap();
        }
        assert_ne!(cluster.state_hash(), baseline);
        cluster.cleanup("csync");
        assert_eq!(cluster.state_hash(), baseline);
        assert_eq!(cluster.pods(), baseline_pods);
        // second cleanup is a no-op
        cluster.cleanup("csync");
        assert_eq!(cluster.state_hash(), baseline);
    }

    #[test]
    fn argo_deploy_latency_follows_scale_curve_in_fig_preset() {
        let preset = preset::builtin("fig3").unwrap();
        let profile = preset.profile(ProfileId::Argo);
        let mut cluster = SimulatedCluster::new(DEFAULT_POD_CAPACITY);
        cluster.provision_control_plane(profile).unwrap();
        let src = RandomSource::new(42);
        let mut deploy = src.stream("deploy");
        let mut healthy = src.stream("healthy");
        let mut at = |k: u32| -> f64 {
            let mut samples = Vec::new();
            for rep in 0..20 {
                let t = cluster
                    .apply_deployment(
                        "argo-ns-1",
                        &format!("argo-app-{k}-{rep}"),
                        1,
                        profile,
                        ScenarioKind::Single,
                        k,
                        &mut deploy,
                        &mut healthy,
                    )
                    .unwrap();
                samples.push(t.t_deploy_s);
                cluster.cleanup("argo-ns");
            }
            samples.sort_by(f64::total_cmp);
            (samples[9] + samples[10]) / 2.0
        };
        let median_k30 = at(30);
        assert!(
            (median_k30 - 0.2).abs() < 0.05,
            "median t_deploy at k=30 was {median_k30}, expected about 0.2"
        );
        let median_k100 = at(100);
        assert!(
            (median_k100 - 10.0).abs() < 0.5,
            "median t_deploy at k=100 was {median_k100}, expected near 10"
        );
    }

    #[test]
    fn top_matches_resource_models() {
        let preset = preset::builtin("fig3").unwrap();
        let mut cluster = SimulatedCluster::new(DEFAULT_POD_CAPACITY);

        let flux = preset.profile(ProfileId::Flux);
        cluster.provision_control_plane(flux).unwrap();
        let (mut c, mut m) = rngs(5);
        let sample = cluster
            .top("flux-system", flux, 90, 0, &mut c, &mut m)
            .unwrap();
        assert!(
            (sample.u_mem_mib - 120.0).abs() / 120.0 < 0.10,
            "flux control-plane memory at 90 apps was {}, expected about 120",
            sample.u_mem_mib
        );

        let csync = preset.profile(ProfileId::Csync);
        cluster.provision_control_plane(csync).unwrap();
        for i in 1..=90 {
            cluster
                .bind_instance("config-management-system", &format!("csync-rec-{i}"))
                .unwrap();
        }
        let sample = cluster
            .top("config-management-system", csync, 90, 0, &mut c, &mut m)
            .unwrap();
        assert!(
            (sample.u_mem_mib - 8192.0).abs() / 8192.0 < 0.10,
            "csync control-plane memory at 90 apps was {}, expected within 10% of 8192",
            sample.u_mem_mib
        );
    }

    #[test]
    fn top_with_zero_apps_returns_base_footprint() {
        let preset = preset::builtin("table3").unwrap();
        let profile = preset.profile(ProfileId::Csync);
        let mut cluster = SimulatedCluster::new(DEFAULT_POD_CAPACITY);
        cluster.provision_control_plane(profile).unwrap();
        let (mut c, mut m) = rngs(6);
        let sample = cluster
            .top("config-management-system", profile, 0, 0, &mut c, &mut m)
            .unwrap();
        let (base_cpu, base_mem) = profile.base_footprint();
        assert_eq!(sample.u_cpu_millicore, base_cpu);
        assert_eq!(sample.u_mem_mib, base_mem);
    }

    #[test]
    fn top_unknown_namespace_errors() {
        let preset = preset::builtin("table3").unwrap();
        let profile = preset.profile(ProfileId::Argo);
        let mut cluster = SimulatedCluster::new(DEFAULT_POD_CAPACITY);
        let (mut c, mut m) = rngs(7);
        assert!(matches!(
            cluster.top("missing", profile, 1, 0, &mut c, &mut m),
            Err(Error::UnknownNamespace(_))
        ));
    }
}
