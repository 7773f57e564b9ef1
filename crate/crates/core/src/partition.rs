//! Splits a roster into conversational subgroups and attaches a relay agent
//! to each one.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{SessionConfig, Subgroup, SubgroupId};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PartitionPlan {
    pub subgroups: Vec<Subgroup>,
    pub seed_used: u64,
}

impl PartitionPlan {
    pub fn subgroup_of(&self, participant: &str) -> Option<SubgroupId> {
        self.subgroups.iter().find(|g| g.member_ids.iter().any(|m| m == participant)).map(|g| g.id)
    }

    pub fn get(&self, id: SubgroupId) -> Option<&Subgroup> {
        self.subgroups.iter().find(|g| g.id == id)
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.subgroups.iter().map(|g| g.member_ids.len()).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PartitionError {
    #[error("roster of {size} is smaller than the minimum subgroup size {min}")]
    RosterTooSmall { size: usize, min: usize },
    #[error("cannot split {size} participants into subgroups of {min}..={max}")]
    PartitionInfeasible { size: usize, min: usize, max: usize },
}

pub fn agent_id(subgroup: SubgroupId) -> String {
    format!("agent-{subgroup}")
}

/// Sizes of `k` near-equal groups covering `n`; the first `n % k` groups
/// take one extra member.
fn spread(n: usize, k: usize) -> Vec<usize> {
    let (base, extra) = (n / k, n % k);
    (0..k).map(|i| base + usize::from(i < extra)).collect()
}

/// Group sizes for `n` participants: `floor(n / target)` groups with the
/// remainder spread one per group, falling back to one more group when a
/// size would exceed `max`.
pub fn group_sizes(n: usize, config: &SessionConfig) -> Result<Vec<usize>, PartitionError> {
    let (min, max, target) = (config.subgroup_min, config.subgroup_max, config.subgroup_target.max(1));
    if n < min || n == 0 {
        return Err(PartitionError::RosterTooSmall { size: n, min });
    }
    let fits = |sizes: &[usize]| sizes.iter().all(|s| (min..=max).contains(s));
    let infeasible = PartitionError::PartitionInfeasible { size: n, min, max };

    if let Some(k) = config.subgroup_count {
        if k == 0 || k > n {
            return Err(infeasible);
        }
        let sizes = spread(n, k);
        return if fits(&sizes) { Ok(sizes) } else { Err(infeasible) };
    }

    let k = (n / target).max(1);
    let sizes = spread(n, k);
    if fits(&sizes) {
        return Ok(sizes);
    }
    let sizes = spread(n, k + 1);
    if fits(&sizes) {
        Ok(sizes)
    } else {
        Err(infeasible)
    }
}

/// Deterministic seeded partition of `roster`. Subgroup ids start at 1.
pub fn partition(roster: &[String], config: &SessionConfig) -> Result<PartitionPlan, PartitionError> {
    let sizes = group_sizes(roster.len(), config)?;
    let mut shuffled = roster.to_vec();
    let mut rng = ChaCha8Rng::seed_from_u64(config.rng_seed);
    shuffled.shuffle(&mut rng);

    let mut rest = shuffled.as_slice();
    let subgroups = sizes
        .iter()
        .enumerate()
        .map(|(i, &size)| {
            let (members, tail) = rest.split_at(size);
            rest = tail;
            let id = i as SubgroupId + 1;
            Subgroup { id, member_ids: members.to_vec(), agent_id: agent_id(id) }
        })
        .collect();
    Ok(PartitionPlan { subgroups, seed_used: config.rng_seed })
}
