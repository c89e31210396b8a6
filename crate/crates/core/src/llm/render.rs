use chrono::DateTime;

use crate::error::{Error, Result};
use crate::model::{haversine_unchecked, Timestamp, Trajectory};

pub const DEVIATE_MARKER: &str = "***<deviate-point>***";

/// `Ddd HH:MM` of a UTC timestamp.
pub fn day_clock(ts: Timestamp) -> Result<String> {
    let dt = DateTime::from_timestamp(ts, 0).ok_or_else(|| Error::InvalidInput(format!("timestamp {ts} out of range")))?;
    Ok(dt.format("%a %H:%M").to_string())
}

/// `Sat 10:36, Pub, 0.4 km ->Sat 10:57, Apartment`, with the deviate marker
/// after the place type of point `deviate_index` when given.
pub fn render_stay_sequence(t: &Trajectory, deviate_index: Option<usize>) -> Result<String> {
    if t.points.is_empty() {
        return Err(Error::InvalidInput(format!("agent {} has no stay points", t.agent_id)));
    }
    if let Some(k) = deviate_index {
        if k >= t.points.len() {
            return Err(Error::InvalidInput(format!("deviate index {k} outside {} points", t.points.len())));
        }
    }
    let mut out = String::new();
    for (i, p) in t.points.iter().enumerate() {
        if i > 0 {
            let d = haversine_unchecked(t.points[i - 1].location, p.location);
            out.push_str(&format!(", {d:.1} km ->"));
        }
        out.push_str(&day_clock(p.arrive)?);
        out.push_str(", ");
        out.push_str(p.place_type.as_str());
        if deviate_index == Some(i) {
            out.push(' ');
            out.push_str(DEVIATE_MARKER);
            out.push(' ');
        }
    }
    Ok(out)
}
