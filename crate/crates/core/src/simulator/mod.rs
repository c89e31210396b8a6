//! Patterns-of-life style agent simulator producing labelled semantic
//! trajectories with hunger, social and work outliers.
//!
//! Agents live on a synthetic uniform map. Each tick an agent eats when hungry
//! (restaurant or home), works on weekday office hours, socialises when its
//! social need runs low outside work, and otherwise stays home. Travel is
//! instantaneous; consecutive ticks at one place merge into a stay point.

mod agents;
mod config;
mod engine;
mod map;

pub use agents::{agent_id, spawn_agents, AgentProfile};
pub use config::{MapConfig, SimConfig};
pub use engine::{simulate, Activity, AgentRun, SimEvent, SimOutput, World};
pub use map::{build_map, Place, SyntheticMap, MAP_TYPES};
