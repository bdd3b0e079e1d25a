//! In-memory model of the Git single source of truth.
//!
//! One repository, per-app sub-directories, branch trees keyed by a
//! repo-wide monotone revision counter rendered as a zero-padded string.
//! Drift detection elsewhere compares these revision strings, so pushes
//! and merges always bump the counter even when the content diff is
//! empty, mirroring real Git revision behavior.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::sim::{secs_to_ms, Distribution, StreamRng};

pub const MAIN_BRANCH: &str = "main";

fn content_hash(content: &str) -> u64 {
    // FNV-1a; stable across platforms, only used as a content fingerprint.
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for byte in content.as_bytes() {
        hash ^= u64::from(*byte);
        hash = hash.wrapping_mul(0x100_0000_01b3);
    }
    hash
}

/// Snapshot of one branch: revision counter plus directory entries.
///
/// Each branch keeps its own counter, incremented by exactly one per push
/// or merge into it; a new branch continues from its source's counter.
/// Drift detection always compares revisions of the same branch.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RevisionTree {
    revision: u64,
    /// directory path -> content hash of the manifest stored there
    entries: BTreeMap<String, u64>,
}

impl RevisionTree {
    pub fn revision_string(&self) -> String {
        format!("{:010}", self.revision)
    }

    pub fn entries(&self) -> &BTreeMap<String, u64> {
        &self.entries
    }
}

/// Webhook binding between a repository path prefix and a reconciler.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WebhookSubscription {
    pub subscriber: String,
    pub branch: String,
    /// Only pushes whose changed paths fall under this prefix fire the hook.
    pub dir_filter: String,
    pub token: String,
    pub notify_delay_ms: u64,
}

/// A webhook that fired for a push or merge.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WebhookDelivery {
    pub subscriber: String,
    pub branch: String,
    pub revision: String,
    pub notify_delay_ms: u64,
}

/// Outcome of a push: new revision, sampled push latency, fired hooks.
#[derive(Debug, Clone)]
pub struct PushOutcome {
    pub revision: String,
    pub t_push_s: f64,
    pub t_push_ms: u64,
    pub deliveries: Vec<WebhookDelivery>,
}

#[derive(Debug, Clone)]
pub struct GitRepository {
    branches: BTreeMap<String, RevisionTree>,
    webhooks: Vec<WebhookSubscription>,
    token: String,
}

impl GitRepository {
    /// Fresh repository with an empty `main` branch.
    pub fn new(token: &str) -> Self {
        let mut branches = BTreeMap::new();
        branches.insert(
            MAIN_BRANCH.to_string(),
            RevisionTree {
                revision: 0,
                entries: BTreeMap::new(),
            },
        );
        GitRepository {
            branches,
            webhooks: Vec::new(),
            token: token.to_string(),
        }
    }

    pub fn branch(&self, name: &str) -> Result<&RevisionTree> {
        self.branches
            .get(name)
            .ok_or_else(|| Error::UnknownBranch(name.to_string()))
    }

    pub fn revision_of(&self, branch: &str) -> Result<String> {
        Ok(self.branch(branch)?.revision_string())
    }

    pub fn subscribe(&mut self, hook: WebhookSubscription) {
        self.webhooks.push(hook);
    }

    /// Drop all subscriptions whose subscriber carries `prefix`.
    pub fn unsubscribe_prefix(&mut self, prefix: &str) {
        self.webhooks.retain(|w| !w.subscriber.starts_with(prefix));
    }

    pub fn webhooks(&self) -> &[WebhookSubscription] {
        &self.webhooks
    }

    fn deliveries_for(
        &self,
        branch: &str,
        changed: &[String],
        revision: &str,
    ) -> Vec<WebhookDelivery> {
        self.webhooks
            .iter()
            .filter(|hook| {
                hook.branch == branch
                    && changed
                        .iter()
                        .any(|path| path.starts_with(&hook.dir_filter))
            })
            .map(|hook| WebhookDelivery {
                subscriber: hook.subscriber.clone(),
                branch: hook.branch.clone(),
                revision: revision.to_string(),
                notify_delay_ms: hook.notify_delay_ms,
            })
            .collect()
    }

    /// Upload a set of `(directory path, manifest content)` pairs to a
    /// branch. The caller authenticates with the repository token; the
    /// push latency is drawn from `push_dist`.
    pub fn push(
        &mut self,
        branch: &str,
        changes: &[(String, String)],
        caller_token: &str,
        push_dist: &Distribution,
        k: u32,
        rng: &mut StreamRng,
    ) -> Result<PushOutcome> {
        if caller_token != self.token {
            return Err(Error::TokenMismatch);
        }
        if changes.is_empty() {
            return Err(Error::EmptyChangeSet);
        }
        let Some(tree) = self.branches.get_mut(branch) else {
            return Err(Error::UnknownBranch(branch.to_string()));
        };
        tree.revision += 1;
        let mut changed_paths = Vec::with_capacity(changes.len());
        for (path, content) in changes {
            tree.entries.insert(path.clone(), content_hash(content));
            changed_paths.push(path.clone());
        }
        let revision = tree.revision_string();
        let t_push_s = push_dist.sample(k, rng);
        Ok(PushOutcome {
            deliveries: self.deliveries_for(branch, &changed_paths, &revision),
            revision,
            t_push_ms: secs_to_ms(t_push_s),
            t_push_s,
        })
    }

    /// Branch off `from`; the new branch starts with a copy of the tree
    /// and the revision counter continues from the source.
    pub fn create_branch(&mut self, name: &str, from: &str) -> Result<()> {
        if self.branches.contains_key(name) {
            return Err(Error::DuplicateBranch(name.to_string()));
        }
        let source = self.branch(from)?.clone();
        self.branches.insert(name.to_string(), source);
        Ok(())
    }

    pub fn delete_branch(&mut self, name: &str) -> Result<()> {
        if name == MAIN_BRANCH {
            return Ok(());
        }
        self.branches
            .remove(name)
            .map(|_| ())
            .ok_or_else(|| Error::UnknownBranch(name.to_string()))
    }

    /// Merge `from` into `into` (source entries win on conflict). The
    /// target revision increments even for an empty diff, and webhooks on
    /// the target branch fire for every path carried by the source.
    pub fn merge(&mut self, from: &str, into: &str) -> Result<(String, Vec<WebhookDelivery>)> {
        if from == into {
            return Err(Error::MergeSelf(from.to_string()));
        }
        let source = self.branch(from)?.clone();
        let Some(target) = self.branches.get_mut(into) else {
            return Err(Error::UnknownBranch(into.to_string()));
        };
        target.revision += 1;
        let mut changed: Vec<String> = Vec::new();
        for (path, hash) in &source.entries {
            target.entries.insert(path.clone(), *hash);
            changed.push(path.clone());
        }
        let revision = target.revision_string();
        Ok((
            revision.clone(),
            self.deliveries_for(into, &changed, &revision),
        ))
    }

    /// Debug dump: `branch,revision,path,content-hash` lines, stable order.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        for (branch, tree) in &self.branches {
            for (path, hash) in &tree.entries {
                out.push_str(&format!(
                    "{},{},{},{:016x}\n",
                    branch,
                    tree.revision_string(),
                    path,
                    hash
                ));
            }
        }
        out
    }
}
