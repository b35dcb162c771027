use alloc::collections::BTreeMap;
use alloc::format;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::Corpus;
use crate::rng::{derive_seed, rng_from, tag};
use crate::{Error, Result};

/// Fractions for (conversion training, classifier training, validation),
/// stratified by class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SplitSpec {
    pub fractions: [f64; 3],
    /// Split at segment level so every device variant of a segment lands in
    /// the same subset.
    pub align_counterparts: bool,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self {
            fractions: [0.45, 0.45, 0.10],
            align_counterparts: true,
        }
    }
}

impl SplitSpec {
    pub fn validate(&self) -> Result<()> {
        let sum: f64 = self.fractions.iter().sum();
        if self.fractions.iter().any(|f| !(0.0..=1.0).contains(f)) || (sum - 1.0).abs() > 1e-9 {
            return Err(Error::arg(format!(
                "split fractions {:?} must be in [0, 1] and sum to 1",
                self.fractions
            )));
        }
        Ok(())
    }
}

/// Integer allocation of each class to the three subsets such that every
/// cell is within one of its exact share and every subset total is within
/// one of its exact share.
pub(crate) fn apportion(sizes: &[usize], fractions: [f64; 3]) -> Vec<[usize; 3]> {
    let total: usize = sizes.iter().sum();
    let mut alloc: Vec<[usize; 3]> = sizes
        .iter()
        .map(|&n| fractions.map(|f| libm::floor(f * n as f64) as usize))
        .collect();
    let remainders: Vec<[f64; 3]> = sizes
        .iter()
        .zip(&alloc)
        .map(|(&n, a)| {
            let mut r = [0.0; 3];
            for s in 0..3 {
                r[s] = fractions[s] * n as f64 - a[s] as f64;
            }
            r
        })
        .collect();
    let lower: [usize; 3] = core::array::from_fn(|s| alloc.iter().map(|a| a[s]).sum());
    let upper: [usize; 3] = core::array::from_fn(|s| lower[s] + remainders.iter().filter(|r| r[s] > 1e-12).count());
    let round = |x: f64| libm::floor(x + 0.5) as usize;
    let mut target = [0usize; 3];
    for s in 0..2 {
        target[s] = round(fractions[s] * total as f64).clamp(lower[s], upper[s]);
    }
    let mut rest = total as isize - target[0] as isize - target[1] as isize;
    while rest > upper[2] as isize {
        let s = if target[0] < upper[0] { 0 } else { 1 };
        target[s] += 1;
        rest -= 1;
    }
    while rest < lower[2] as isize {
        let s = if target[0] > lower[0] { 0 } else { 1 };
        target[s] -= 1;
        rest += 1;
    }
    target[2] = rest as usize;

    // Distribute the leftover units: classes with more units first, each
    // unit to the subset with the largest outstanding demand.
    let mut demand: [usize; 3] = core::array::from_fn(|s| target[s] - lower[s]);
    let mut order: Vec<usize> = (0..sizes.len()).collect();
    let units: Vec<usize> = sizes
        .iter()
        .zip(&alloc)
        .map(|(&n, a)| n - a.iter().sum::<usize>())
        .collect();
    order.sort_by_key(|&c| core::cmp::Reverse(units[c]));
    for c in order {
        let k = units[c];
        let mut subsets = [0usize, 1, 2];
        subsets.sort_by(|&a, &b| {
            demand[b]
                .cmp(&demand[a])
                .then(remainders[c][b].total_cmp(&remainders[c][a]))
                .then(a.cmp(&b))
        });
        for &s in subsets.iter().take(k) {
            alloc[c][s] += 1;
            demand[s] = demand[s].saturating_sub(1);
        }
    }
    alloc
}

/// Stratified three-way split at segment-id level.
pub fn split_corpus(c: &Corpus, spec: &SplitSpec, seed: u64) -> Result<(Corpus, Corpus, Corpus)> {
    spec.validate()?;
    if spec.align_counterparts && !c.is_counterpart_complete() {
        return Err(Error::arg("corpus is not counterpart-complete"));
    }
    let classes = c.segment_classes();
    let mut by_class: BTreeMap<usize, Vec<u32>> = BTreeMap::new();
    for (&id, &class) in &classes {
        by_class.entry(class).or_default().push(id);
    }
    for (&class_id, ids) in &by_class {
        if ids.len() < 10 {
            return Err(Error::TooSparseToStratify {
                class_id,
                count: ids.len(),
            });
        }
    }
    let sizes: Vec<usize> = by_class.values().map(Vec::len).collect();
    let alloc = apportion(&sizes, spec.fractions);

    let assign = |device_tag: u64| -> BTreeMap<u32, usize> {
        let mut subset_of = BTreeMap::new();
        for ((&class, ids), a) in by_class.iter().zip(&alloc) {
            let mut ids = ids.clone();
            let mut rng = rng_from(derive_seed(seed, &[tag("split"), class as u64, device_tag]));
            ids.shuffle(&mut rng);
            for (i, id) in ids.into_iter().enumerate() {
                let s = if i < a[0] {
                    0
                } else if i < a[0] + a[1] {
                    1
                } else {
                    2
                };
                subset_of.insert(id, s);
            }
        }
        subset_of
    };

    if spec.align_counterparts {
        let subset_of = assign(0);
        let part = |s: usize| c.subset(|id| subset_of[&id] == s);
        Ok((part(0), part(1), part(2)))
    } else {
        let per_device: BTreeMap<&str, BTreeMap<u32, usize>> =
            c.devices().iter().map(|d| (d.as_str(), assign(tag(d)))).collect();
        let part = |s: usize| {
            let entries = c
                .entries()
                .iter()
                .filter(|e| per_device[e.device.as_str()].get(&e.segment_id) == Some(&s))
                .cloned()
                .collect();
            Corpus::from_entries(c.devices().to_vec(), entries)
        };
        Ok((part(0), part(1), part(2)))
    }
}
