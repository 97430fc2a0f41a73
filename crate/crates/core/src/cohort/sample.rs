use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{CohortError, CohortManifest};
use crate::labels::Task;
use crate::provenance::seeded_rng;

/// Label values of one stratum, keyed by task.
pub type StratumKey = BTreeMap<Task, u8>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StratumAllocation {
    pub key: StratumKey,
    pub population: usize,
    /// Proportional share `n * population / N`.
    pub quota: f64,
    pub allocated: usize,
}

/// A seeded sample of image ids with the allocation that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseSet {
    /// Sampled ids in manifest order.
    pub image_ids: Vec<String>,
    pub n: usize,
    pub strata: Vec<Task>,
    pub seed: u64,
    pub source_digest: String,
    pub allocations: Vec<StratumAllocation>,
    /// Reallocations forced by undersized strata.
    #[serde(default)]
    pub warnings: Vec<String>,
}

impl CaseSet {
    pub fn len(&self) -> usize {
        self.image_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.image_ids.is_empty()
    }

    /// The whole manifest as a case set, in manifest order.
    pub fn all(manifest: &CohortManifest) -> CaseSet {
        CaseSet {
            image_ids: manifest.records().iter().map(|r| r.image_id.clone()).collect(),
            n: manifest.len(),
            strata: Vec::new(),
            seed: 0,
            source_digest: manifest.digest().to_string(),
            allocations: Vec::new(),
            warnings: Vec::new(),
        }
    }
}

/// Largest-remainder rounding of `quotas` to integers summing to `total`.
/// Ties go to the lower index.
pub(crate) fn apportion(quotas: &[f64], total: usize) -> Vec<usize> {
    let mut alloc: Vec<usize> = quotas.iter().map(|q| q.max(0.0).floor() as usize).collect();
    let mut order: Vec<usize> = (0..quotas.len()).collect();
    let frac = |i: usize| quotas[i] - quotas[i].floor();
    order.sort_by(|&a, &b| frac(b).total_cmp(&frac(a)).then(a.cmp(&b)));
    let mut assigned: usize = alloc.iter().sum();
    let mut k = 0;
    while assigned < total && !order.is_empty() {
        alloc[order[k % order.len()]] += 1;
        assigned += 1;
        k += 1;
    }
    // Only reachable through floating-point overshoot.
    let mut k = order.len();
    while assigned > total && k > 0 {
        k -= 1;
        let i = order[k];
        if alloc[i] > 0 {
            alloc[i] -= 1;
            assigned -= 1;
        }
    }
    alloc
}

fn marginal_penalty(
    keys: &[Vec<u8>],
    alloc: &[usize],
    quotas: &[f64],
    dims: usize,
) -> f64 {
    let mut penalty = 0.0;
    for d in 0..dims {
        let mut dev: BTreeMap<u8, f64> = BTreeMap::new();
        for (i, key) in keys.iter().enumerate() {
            *dev.entry(key[d]).or_default() += alloc[i] as f64 - quotas[i];
        }
        for v in dev.values() {
            let a = v.abs();
            penalty += a + 100.0 * (a - 1.0 - 1e-9).max(0.0);
        }
    }
    penalty
}

/// Swaps round-ups between cells so that every single-task marginal also
/// stays within one case of its proportional share. Each cell stays at the
/// floor or ceiling of its own quota throughout.
fn balance_marginals(keys: &[Vec<u8>], alloc: &mut [usize], quotas: &[f64]) {
    let dims = keys.first().map_or(0, Vec::len);
    if dims < 2 {
        return;
    }
    let is_fractional = |i: usize| quotas[i].fract() > 1e-12;
    let mut current = marginal_penalty(keys, alloc, quotas, dims);
    for _ in 0..10_000 {
        let mut best: Option<(usize, usize, f64)> = None;
        for up in 0..alloc.len() {
            if !is_fractional(up) || alloc[up] as f64 <= quotas[up] {
                continue;
            }
            for down in 0..alloc.len() {
                if down == up || !is_fractional(down) || alloc[down] as f64 >= quotas[down] {
                    continue;
                }
                alloc[up] -= 1;
                alloc[down] += 1;
                let p = marginal_penalty(keys, alloc, quotas, dims);
                alloc[up] += 1;
                alloc[down] -= 1;
                if p < current - 1e-12 && best.is_none_or(|(_, _, bp)| p < bp) {
                    best = Some((up, down, p));
                }
            }
        }
        match best {
            Some((up, down, p)) => {
                alloc[up] -= 1;
                alloc[down] += 1;
                current = p;
            }
            None => break,
        }
    }
}

/// Draws `n` images so that each stratum (joint label tuple over `strata`)
/// receives its proportional share, rounded by largest remainder.
pub fn stratified_sample(
    manifest: &CohortManifest,
    n: usize,
    strata: &[Task],
    seed: u64,
) -> Result<CaseSet, CohortError> {
    if n > manifest.len() {
        return Err(CohortError::InvalidSample(format!(
            "requested {n} cases from a manifest of {}",
            manifest.len()
        )));
    }
    let mut strata_tasks: Vec<Task> = strata.to_vec();
    strata_tasks.sort();
    strata_tasks.dedup();

    let mut groups: BTreeMap<Vec<u8>, Vec<usize>> = BTreeMap::new();
    for (i, r) in manifest.records().iter().enumerate() {
        let key: Vec<u8> = strata_tasks.iter().map(|t| r.labels.get(*t)).collect();
        groups.entry(key).or_default().push(i);
    }
    let keys: Vec<Vec<u8>> = groups.keys().cloned().collect();
    let sizes: Vec<usize> = groups.values().map(Vec::len).collect();
    let total = manifest.len() as f64;
    let quotas: Vec<f64> = sizes.iter().map(|&s| n as f64 * s as f64 / total).collect();

    let mut alloc = if n == manifest.len() { sizes.clone() } else { apportion(&quotas, n) };
    balance_marginals(&keys, &mut alloc, &quotas);

    let mut warnings = Vec::new();
    for i in 0..alloc.len() {
        if alloc[i] > sizes[i] {
            let excess = alloc[i] - sizes[i];
            alloc[i] = sizes[i];
            let target = (0..alloc.len())
                .filter(|&j| alloc[j] < sizes[j])
                .max_by_key(|&j| (sizes[j], std::cmp::Reverse(j)))
                .expect("n <= manifest size leaves spare capacity");
            alloc[target] += excess;
            warnings.push(format!(
                "stratum {:?} holds {} cases but was allocated {}; moved {excess} to stratum {:?}",
                keys[i],
                sizes[i],
                sizes[i] + excess,
                keys[target]
            ));
        }
    }

    let mut rng = seeded_rng(seed);
    let mut chosen: Vec<usize> = Vec::with_capacity(n);
    for ((_, members), &take) in groups.iter().zip(&alloc) {
        let mut members = members.clone();
        members.shuffle(&mut rng);
        chosen.extend_from_slice(&members[..take]);
    }
    chosen.sort_unstable();

    let allocations = keys
        .iter()
        .zip(sizes.iter().zip(quotas.iter().zip(&alloc)))
        .map(|(key, (&population, (&quota, &allocated)))| StratumAllocation {
            key: strata_tasks.iter().copied().zip(key.iter().copied()).collect(),
            population,
            quota,
            allocated,
        })
        .collect();

    Ok(CaseSet {
        image_ids: chosen.into_iter().map(|i| manifest.records()[i].image_id.clone()).collect(),
        n,
        strata: strata_tasks,
        seed,
        source_digest: manifest.digest().to_string(),
        allocations,
        warnings,
    })
}
