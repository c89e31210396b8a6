use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::Rng;

use super::config::SimConfig;
use super::map::SyntheticMap;
use crate::error::{Error, Result};
use crate::model::{OutlierType, PlaceType};

#[derive(Debug, Clone, PartialEq)]
pub struct AgentProfile {
    pub agent_id: String,
    /// Map index of the home apartment.
    pub home: usize,
    /// Map index of the workplace.
    pub workplace: usize,
    /// Preference weight for every leisure site (Recreation and Pub), as
    /// `(map index, weight)` pairs in map order.
    pub site_preferences: Vec<(usize, f64)>,
    /// Indices (into the agent list) of befriended agents.
    pub friends: BTreeSet<usize>,
    /// Hunger decay per awake hour.
    pub hunger_rate: f64,
    pub outlier_type: OutlierType,
    /// First tick of abnormal behaviour; `Some` iff the agent is an outlier.
    pub outlier_onset: Option<u32>,
}

impl AgentProfile {
    pub fn is_outlier(&self) -> bool {
        self.outlier_type != OutlierType::None
    }

    pub fn preference(&self, site: usize) -> f64 {
        self.site_preferences
            .iter()
            .find(|(s, _)| *s == site)
            .map(|&(_, w)| w)
            .unwrap_or(0.0)
    }

    /// Returns a copy with the outlier flag replaced.
    pub fn with_outlier(&self, outlier_type: OutlierType, onset: u32) -> Self {
        let mut p = self.clone();
        p.outlier_type = outlier_type;
        p.outlier_onset = (outlier_type != OutlierType::None).then_some(onset);
        p
    }
}

pub fn agent_id(index: usize) -> String {
    format!("u{index:05}")
}

/// Draws homes, workplaces, leisure preferences (log-uniform in [0.1, 10]),
/// an Erdős–Rényi friendship graph and the outlier assignment.
pub fn spawn_agents<R: Rng>(config: &SimConfig, map: &SyntheticMap, rng: &mut R) -> Result<Vec<AgentProfile>> {
    let n = config.n_agents;
    if config.n_hunger + config.n_social + config.n_work > n {
        return Err(Error::Config(format!(
            "outlier counts {}+{}+{} exceed n_agents {n}",
            config.n_hunger, config.n_social, config.n_work
        )));
    }
    let apartments = map.indices_of(PlaceType::APARTMENT);
    let workplaces = map.indices_of(PlaceType::WORKPLACE);
    let mut leisure = map.indices_of(PlaceType::RECREATION);
    leisure.extend(map.indices_of(PlaceType::PUB));
    leisure.sort_unstable();
    if apartments.is_empty() || workplaces.is_empty() || leisure.is_empty() {
        return Err(Error::Config("map lacks apartments, workplaces or leisure sites".into()));
    }

    let mut agents: Vec<AgentProfile> = (0..n)
        .map(|i| AgentProfile {
            agent_id: agent_id(i),
            home: apartments[rng.gen_range(0..apartments.len())],
            workplace: workplaces[rng.gen_range(0..workplaces.len())],
            site_preferences: leisure.iter().map(|&s| (s, 10f64.powf(rng.gen_range(-1.0..1.0)))).collect(),
            friends: BTreeSet::new(),
            hunger_rate: rng.gen_range(config.hunger_rate_min..=config.hunger_rate_max),
            outlier_type: OutlierType::None,
            outlier_onset: None,
        })
        .collect();

    if n > 1 {
        let p = (config.mean_friend_degree / (n - 1) as f64).min(1.0);
        for i in 0..n {
            for j in (i + 1)..n {
                if rng.gen_bool(p) {
                    agents[i].friends.insert(j);
                    agents[j].friends.insert(i);
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let onset = config.onset_tick();
    let kinds = std::iter::repeat(OutlierType::Hunger)
        .take(config.n_hunger)
        .chain(std::iter::repeat(OutlierType::Social).take(config.n_social))
        .chain(std::iter::repeat(OutlierType::Work).take(config.n_work));
    for (idx, kind) in order.into_iter().zip(kinds) {
        agents[idx] = agents[idx].with_outlier(kind, onset);
    }
    Ok(agents)
}
