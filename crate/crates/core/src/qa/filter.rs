//! Ambiguity filtering and balanced sampling.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{QAItem, TemplateBank, TemplateError};
use crate::rng::derive_rng;
use crate::scene::{ObjectId, Scene};

/// Drops items that name a category with more than one visible instance in
/// the set (`census`: visible instances per lowercased category), and items
/// whose derivation recorded an ambiguous classification.
pub fn apply_ambiguity_filters(
    items: Vec<QAItem>,
    scene: &Scene,
    census: &BTreeMap<String, BTreeSet<ObjectId>>,
) -> Vec<QAItem> {
    items
        .into_iter()
        .filter(|item| !item.derivation.is_ambiguous())
        .filter(|item| {
            item.named_objects().iter().all(|id| {
                scene.object(id).is_some_and(|o| census.get(&o.category.to_lowercase()).is_some_and(|s| s.len() == 1))
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BalanceCaps {
    pub per_template_per_set: usize,
    pub per_set_total: usize,
    /// `None` leaves the global count unbounded.
    pub per_template_global: Option<usize>,
}

impl Default for BalanceCaps {
    fn default() -> Self {
        BalanceCaps { per_template_per_set: 3, per_set_total: 24, per_template_global: None }
    }
}

fn set_key(item: &QAItem) -> (String, String) {
    (item.scene_id.0.clone(), item.image_set_id.clone())
}

/// Caps items per template and per set, then per template globally, and
/// draws each survivor's question from its template's paraphrase pool.
///
/// Within a set, candidates are visited in a seeded shuffle and kept while
/// both per-set caps allow. The global cap is filled round-robin over the
/// sets, visited in a seeded order. Survivors keep their input order.
pub fn balance_sample(
    items: Vec<QAItem>,
    caps: &BalanceCaps,
    bank: &TemplateBank,
    seed: u64,
) -> Result<Vec<QAItem>, TemplateError> {
    let mut by_set: BTreeMap<(String, String), Vec<usize>> = BTreeMap::new();
    for (i, it) in items.iter().enumerate() {
        by_set.entry(set_key(it)).or_default().push(i);
    }

    // Per-set caps; each set's survivors listed in visit order per template.
    let mut kept_by_set: BTreeMap<(String, String), BTreeMap<String, Vec<usize>>> = BTreeMap::new();
    for (key, idx) in &by_set {
        let mut order = idx.clone();
        order.shuffle(&mut derive_rng(seed, &["balance", &key.0, &key.1]));
        let mut per_template: BTreeMap<String, Vec<usize>> = BTreeMap::new();
        let mut total = 0;
        for i in order {
            if total >= caps.per_set_total {
                break;
            }
            let slot = per_template.entry(items[i].task.clone()).or_default();
            if slot.len() < caps.per_template_per_set {
                slot.push(i);
                total += 1;
            }
        }
        kept_by_set.insert(key.clone(), per_template);
    }

    let mut keep: BTreeSet<usize> = BTreeSet::new();
    let templates: BTreeSet<String> = kept_by_set.values().flat_map(|m| m.keys().cloned()).collect();
    for t in &templates {
        let mut queues: Vec<&Vec<usize>> = kept_by_set.values().filter_map(|m| m.get(t)).collect();
        let available: usize = queues.iter().map(|q| q.len()).sum();
        let cap = caps.per_template_global.unwrap_or(usize::MAX);
        if available <= cap {
            keep.extend(queues.iter().flat_map(|q| q.iter().copied()));
            continue;
        }
        queues.shuffle(&mut derive_rng(seed, &["balance-global", t]));
        let mut taken = 0;
        let mut round = 0;
        while taken < cap {
            let mut progressed = false;
            for q in &queues {
                if taken == cap {
                    break;
                }
                if let Some(&i) = q.get(round) {
                    keep.insert(i);
                    taken += 1;
                    progressed = true;
                }
            }
            if !progressed {
                break;
            }
            round += 1;
        }
    }

    let mut out = Vec::with_capacity(keep.len());
    for (i, mut item) in items.into_iter().enumerate() {
        if !keep.contains(&i) {
            continue;
        }
        let n = bank.paraphrases(&item.task)?.len();
        let choice = derive_rng(seed, &["paraphrase", &item.qa_id]).gen_range(0..n);
        item.question = bank.render(&item.task, choice, &item.slots)?;
        item.paraphrase = choice;
        out.push(item);
    }
    Ok(out)
}
