use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Place counts and bounding box of the synthetic city.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MapConfig {
    pub n_apartment: usize,
    pub n_workplace: usize,
    pub n_restaurant: usize,
    pub n_pub: usize,
    pub n_recreation: usize,
    pub lat_min: f64,
    pub lat_max: f64,
    pub lon_min: f64,
    pub lon_max: f64,
}

impl Default for MapConfig {
    fn default() -> Self {
        MapConfig {
            n_apartment: 400,
            n_workplace: 60,
            n_restaurant: 80,
            n_pub: 40,
            n_recreation: 60,
            lat_min: 39.85,
            lat_max: 40.05,
            lon_min: 116.25,
            lon_max: 116.55,
        }
    }
}

/// Simulation parameters. Every behavioural constant lives here so a run is
/// fully described by its config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub n_agents: usize,
    pub weeks: u32,
    pub n_hunger: usize,
    pub n_social: usize,
    pub n_work: usize,
    pub seed: u64,
    pub tick_minutes: u32,
    pub hunger_multiplier: f64,
    /// Onset tick as a fraction of the total number of ticks.
    pub outlier_onset_fraction: f64,
    /// First simulated instant (UTC epoch seconds). The default is a Monday 00:00.
    pub start_timestamp: i64,

    /// Per-agent hunger decay (fraction per awake hour) is drawn uniformly from this range.
    pub hunger_rate_min: f64,
    pub hunger_rate_max: f64,
    /// Global social-need decay per awake hour.
    pub social_rate: f64,
    pub hunger_threshold: f64,
    pub social_threshold: f64,
    pub meal_minutes: u32,
    pub social_minutes: u32,
    /// Number of nearest restaurants an agent chooses between when eating out.
    pub nearby_restaurants: usize,
    pub mean_friend_degree: f64,
    pub wake_hour: u32,
    pub sleep_hour: u32,
    pub work_start_hour: u32,
    pub work_end_hour: u32,

    pub map: MapConfig,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            n_agents: 1000,
            weeks: 4,
            n_hunger: 30,
            n_social: 30,
            n_work: 30,
            seed: 0,
            tick_minutes: 15,
            hunger_multiplier: 3.0,
            outlier_onset_fraction: 0.5,
            start_timestamp: 1_704_067_200, // 2024-01-01T00:00:00Z, a Monday
            hunger_rate_min: 0.12,
            hunger_rate_max: 0.2,
            social_rate: 0.1,
            hunger_threshold: 0.2,
            social_threshold: 0.3,
            meal_minutes: 45,
            social_minutes: 120,
            nearby_restaurants: 3,
            mean_friend_degree: 5.0,
            wake_hour: 7,
            sleep_hour: 23,
            work_start_hour: 9,
            work_end_hour: 17,
            map: MapConfig::default(),
        }
    }
}

impl SimConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: SimConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::Config(m.to_string()));
        if self.n_hunger + self.n_social + self.n_work > self.n_agents {
            return fail("outlier counts exceed n_agents");
        }
        if self.weeks < 1 {
            return fail("weeks must be >= 1");
        }
        if self.tick_minutes == 0 || 60 % self.tick_minutes != 0 {
            return fail("tick_minutes must divide 60");
        }
        if !(self.outlier_onset_fraction > 0.0 && self.outlier_onset_fraction < 1.0) {
            return fail("outlier_onset_fraction must be in (0, 1)");
        }
        if !(self.hunger_rate_min > 0.0 && self.hunger_rate_min <= self.hunger_rate_max) {
            return fail("hunger rate range must be positive and ordered");
        }
        if !(self.hunger_multiplier > 0.0 && self.social_rate > 0.0) {
            return fail("rates must be positive");
        }
        if !(self.mean_friend_degree >= 0.0) {
            return fail("mean_friend_degree must be non-negative");
        }
        if self.nearby_restaurants == 0 || self.meal_minutes == 0 || self.social_minutes == 0 {
            return fail("meal/social durations and nearby_restaurants must be positive");
        }
        if !(self.wake_hour < self.sleep_hour && self.sleep_hour <= 24)
            || !(self.work_start_hour < self.work_end_hour && self.work_end_hour <= 24)
        {
            return fail("invalid daily schedule hours");
        }
        let m = &self.map;
        if m.n_apartment == 0 || m.n_workplace == 0 || m.n_restaurant == 0 || m.n_pub == 0 || m.n_recreation == 0 {
            return fail("every place type needs a positive count");
        }
        if !(m.lat_min < m.lat_max && m.lon_min < m.lon_max)
            || !(-90.0..=90.0).contains(&m.lat_min)
            || !(-90.0..=90.0).contains(&m.lat_max)
            || !(-180.0..=180.0).contains(&m.lon_min)
            || !(-180.0..=180.0).contains(&m.lon_max)
        {
            return fail("invalid bounding box");
        }
        Ok(())
    }

    pub fn ticks_per_day(&self) -> u32 {
        24 * 60 / self.tick_minutes
    }

    pub fn total_ticks(&self) -> u32 {
        self.weeks * 7 * self.ticks_per_day()
    }

    pub fn onset_tick(&self) -> u32 {
        (self.outlier_onset_fraction * self.total_ticks() as f64).floor() as u32
    }

    pub fn tick_seconds(&self) -> i64 {
        self.tick_minutes as i64 * 60
    }

    pub fn onset_timestamp(&self) -> i64 {
        self.start_timestamp + self.onset_tick() as i64 * self.tick_seconds()
    }

    /// Short content hash of the config, recorded into dataset metadata.
    pub fn hash(&self) -> String {
        let text = serde_json::to_string(self).expect("config serializes");
        crate::io::sha256_hex(text.as_bytes())[..16].to_string()
    }
}
