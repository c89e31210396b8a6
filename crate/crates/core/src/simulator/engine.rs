use chrono::{DateTime, Datelike, Timelike};
use rand::Rng;
use rayon::prelude::*;

use super::agents::{spawn_agents, AgentProfile};
use super::config::SimConfig;
use super::map::{build_map, SyntheticMap};
use crate::error::Result;
use crate::model::{Dataset, Label, LabelSet, OutlierType, PlaceType, StayPoint, Trajectory};

const MAP_STREAM: u64 = 0;
const AGENT_STREAM: u64 = 1;
const FIRST_AGENT_STREAM: u64 = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activity {
    Home,
    Work,
    /// Work outlier spending work hours elsewhere.
    SkipWork,
    Eat,
    Social,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SimEvent {
    pub tick: u32,
    pub activity: Activity,
    /// Map index of the place.
    pub place: usize,
}

#[derive(Debug, Clone)]
pub struct AgentRun {
    pub trajectory: Trajectory,
    /// One entry per change of (activity, place), plus one per meal.
    pub events: Vec<SimEvent>,
}

impl AgentRun {
    pub fn meals_from(&self, tick: u32) -> usize {
        self.events.iter().filter(|e| e.activity == Activity::Eat && e.tick >= tick).count()
    }
}

/// Pre-built world shared by all agent runs.
pub struct World {
    pub config: SimConfig,
    pub map: SyntheticMap,
    pub agents: Vec<AgentProfile>,
    nearest_restaurants: Vec<Vec<usize>>,
    /// Per agent: leisure sites and cumulative friend-informed weights.
    social_weights: Vec<(Vec<usize>, Vec<f64>)>,
    recreation: Vec<usize>,
}

impl World {
    pub fn build(config: &SimConfig) -> Result<Self> {
        config.validate()?;
        let map = build_map(config, &mut crate::rng::stream(config.seed, MAP_STREAM))?;
        let agents = spawn_agents(config, &map, &mut crate::rng::stream(config.seed, AGENT_STREAM))?;
        let nearest_restaurants = map.nearest_restaurants(config.nearby_restaurants);
        let social_weights = agents
            .iter()
            .map(|a| {
                let sites: Vec<usize> = a.site_preferences.iter().map(|&(s, _)| s).collect();
                let mut acc = 0.0;
                let cumulative = a
                    .site_preferences
                    .iter()
                    .map(|&(s, w)| {
                        let friends: f64 = a.friends.iter().map(|&f| agents[f].preference(s)).sum();
                        acc += w * (1.0 + friends);
                        acc
                    })
                    .collect();
                (sites, cumulative)
            })
            .collect();
        let recreation = map.indices_of(PlaceType::RECREATION);
        Ok(World { config: config.clone(), map, agents, nearest_restaurants, social_weights, recreation })
    }

    /// Runs one agent's tick loop. `profile` may differ from `self.agents[index]`
    /// (e.g. a twin with the outlier flag toggled); the random stream depends
    /// only on the seed and `index`.
    pub fn simulate_agent(&self, index: usize, profile: &AgentProfile) -> AgentRun {
        let cfg = &self.config;
        let mut rng = crate::rng::stream(cfg.seed, FIRST_AGENT_STREAM + index as u64);
        let tick_hours = cfg.tick_minutes as f64 / 60.0;
        let meal_ticks = cfg.meal_minutes.div_ceil(cfg.tick_minutes);
        let social_ticks = cfg.social_minutes.div_ceil(cfg.tick_minutes);
        let onset = profile.outlier_onset.unwrap_or(u32::MAX);
        let post_onset = |tick: u32, kind: OutlierType| profile.outlier_type == kind && tick >= onset;

        let mut hunger: f64 = rng.gen_range(0.5..1.0);
        let mut social: f64 = rng.gen_range(0.5..1.0);
        let mut busy: Option<(Activity, usize, u32)> = None;
        let mut skip_day: Option<(i64, usize)> = None;

        let mut events: Vec<SimEvent> = Vec::new();
        let mut stays: Vec<StayPoint> = Vec::new();
        let mut current: Option<(Activity, usize)> = None;

        for tick in 0..cfg.total_ticks() {
            let now = cfg.start_timestamp + tick as i64 * cfg.tick_seconds();
            let dt = DateTime::from_timestamp(now, 0).expect("timestamp in range");
            let hour = dt.hour();
            let weekday = dt.weekday().num_days_from_monday();
            let awake = (cfg.wake_hour..cfg.sleep_hour).contains(&hour);
            let work_hours = weekday < 5 && (cfg.work_start_hour..cfg.work_end_hour).contains(&hour);

            if awake {
                let mult = if post_onset(tick, OutlierType::Hunger) { cfg.hunger_multiplier } else { 1.0 };
                hunger = (hunger - profile.hunger_rate * tick_hours * mult).clamp(0.0, 1.0);
                social = (social - cfg.social_rate * tick_hours).clamp(0.0, 1.0);
            }

            let here = current.map(|(_, p)| p).unwrap_or(profile.home);
            let (activity, place) = match busy {
                Some((a, p, until)) if tick < until => (a, p),
                _ => {
                    busy = None;
                    if awake && hunger < cfg.hunger_threshold {
                        hunger = 1.0;
                        let place = if rng.gen_bool(0.5) {
                            profile.home
                        } else {
                            let near = &self.nearest_restaurants[here];
                            near[rng.gen_range(0..near.len())]
                        };
                        busy = Some((Activity::Eat, place, tick + meal_ticks));
                        (Activity::Eat, place)
                    } else if work_hours {
                        if post_onset(tick, OutlierType::Work) {
                            let day = now.div_euclid(86_400);
                            let place = match skip_day {
                                Some((d, p)) if d == day => p,
                                _ => {
                                    let p = if rng.gen_bool(0.5) {
                                        profile.home
                                    } else {
                                        self.pick_recreation(profile, &mut rng)
                                    };
                                    skip_day = Some((day, p));
                                    p
                                }
                            };
                            (Activity::SkipWork, place)
                        } else {
                            (Activity::Work, profile.workplace)
                        }
                    } else if awake && social < cfg.social_threshold {
                        social = 1.0;
                        let u: f64 = rng.gen();
                        let place = if post_onset(tick, OutlierType::Social) {
                            let sites = &self.social_weights[index].0;
                            sites[((u * sites.len() as f64) as usize).min(sites.len() - 1)]
                        } else {
                            self.pick_social(index, u)
                        };
                        busy = Some((Activity::Social, place, tick + social_ticks));
                        (Activity::Social, place)
                    } else {
                        (Activity::Home, profile.home)
                    }
                }
            };

            let new_meal = activity == Activity::Eat && busy.is_some_and(|(_, _, until)| until == tick + meal_ticks);
            if current != Some((activity, place)) || new_meal {
                let moved = current.map(|(_, p)| p) != Some(place);
                if moved {
                    if let Some(last) = stays.last_mut() {
                        last.depart = now;
                    }
                    let p = &self.map.places[place];
                    stays.push(StayPoint {
                        arrive: now,
                        depart: now,
                        place_id: p.place_id.clone(),
                        place_type: p.place_type.clone(),
                        location: p.location,
                    });
                }
                events.push(SimEvent { tick, activity, place });
                current = Some((activity, place));
            }
        }
        if let Some(last) = stays.last_mut() {
            last.depart = cfg.start_timestamp + cfg.total_ticks() as i64 * cfg.tick_seconds();
        }
        AgentRun { trajectory: Trajectory::new(profile.agent_id.clone(), stays), events }
    }

    fn pick_social(&self, index: usize, u: f64) -> usize {
        let (sites, cumulative) = &self.social_weights[index];
        let target = u * cumulative.last().copied().unwrap_or(0.0);
        let pos = cumulative.partition_point(|&c| c <= target);
        sites[pos.min(sites.len() - 1)]
    }

    fn pick_recreation<R: Rng>(&self, profile: &AgentProfile, rng: &mut R) -> usize {
        let weights: Vec<f64> = self.recreation.iter().map(|&s| profile.preference(s)).collect();
        let total: f64 = weights.iter().sum();
        let mut target = rng.gen::<f64>() * total;
        for (&site, w) in self.recreation.iter().zip(&weights) {
            if target < *w {
                return site;
            }
            target -= w;
        }
        *self.recreation.last().expect("map has recreation sites")
    }
}

/// Output of a full simulation run.
pub struct SimOutput {
    pub dataset: Dataset,
    pub labels: LabelSet,
    pub world: World,
    pub runs: Vec<AgentRun>,
}

/// Builds the world and simulates every agent (in parallel; results are
/// independent of scheduling).
pub fn simulate(config: &SimConfig) -> Result<SimOutput> {
    let world = World::build(config)?;
    let runs: Vec<AgentRun> = world
        .agents
        .par_iter()
        .enumerate()
        .map(|(i, profile)| world.simulate_agent(i, profile))
        .collect();

    let onset_ts = config.onset_timestamp();
    let mut labels = LabelSet::default();
    for (profile, run) in world.agents.iter().zip(&runs) {
        let label = if profile.is_outlier() {
            let pts = &run.trajectory.points;
            let idx = pts.iter().position(|p| p.arrive >= onset_ts).unwrap_or(pts.len().saturating_sub(1));
            Label::outlier(profile.outlier_type, idx)
        } else {
            Label::normal()
        };
        labels.insert(profile.agent_id.clone(), label);
    }

    let mut dataset = Dataset::new(runs.iter().map(|r| r.trajectory.clone()).collect())?;
    dataset.meta.insert("source".into(), "simulator".into());
    dataset.meta.insert("seed".into(), config.seed.to_string());
    dataset.meta.insert("config_hash".into(), config.hash());
    dataset.meta.insert("onset_timestamp".into(), onset_ts.to_string());
    Ok(SimOutput { dataset, labels, world, runs })
}
