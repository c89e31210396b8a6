use rand::Rng;

use super::config::SimConfig;
use crate::error::{Error, Result};
use crate::model::{haversine_unchecked, GeoPoint, PlaceType};

#[derive(Debug, Clone, PartialEq)]
pub struct Place {
    pub place_id: String,
    pub place_type: PlaceType,
    pub location: GeoPoint,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticMap {
    pub places: Vec<Place>,
    pub lat_range: (f64, f64),
    pub lon_range: (f64, f64),
}

/// Generation order of place types; ids are `<type>-<nnnn>` within each type.
pub const MAP_TYPES: [&str; 5] = [
    PlaceType::APARTMENT,
    PlaceType::WORKPLACE,
    PlaceType::RESTAURANT,
    PlaceType::PUB,
    PlaceType::RECREATION,
];

impl SyntheticMap {
    /// Indices of all places of the given type, in id order.
    pub fn indices_of(&self, place_type: &str) -> Vec<usize> {
        self.places
            .iter()
            .enumerate()
            .filter(|(_, p)| p.place_type.as_str() == place_type)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn count_of(&self, place_type: &str) -> usize {
        self.places.iter().filter(|p| p.place_type.as_str() == place_type).count()
    }

    /// For every place, the `k` nearest restaurants (distance, then index).
    pub(crate) fn nearest_restaurants(&self, k: usize) -> Vec<Vec<usize>> {
        let restaurants = self.indices_of(PlaceType::RESTAURANT);
        self.places
            .iter()
            .map(|p| {
                let mut by_dist: Vec<(f64, usize)> = restaurants
                    .iter()
                    .map(|&r| (haversine_unchecked(p.location, self.places[r].location), r))
                    .collect();
                by_dist.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
                by_dist.into_iter().take(k).map(|(_, r)| r).collect()
            })
            .collect()
    }
}

/// Samples every place uniformly inside the configured bounding box.
pub fn build_map<R: Rng>(config: &SimConfig, rng: &mut R) -> Result<SyntheticMap> {
    let m = &config.map;
    let counts = [m.n_apartment, m.n_workplace, m.n_restaurant, m.n_pub, m.n_recreation];
    if let Some(i) = counts.iter().position(|&c| c == 0) {
        return Err(Error::Config(format!("map needs at least one {}", MAP_TYPES[i])));
    }
    let mut places = Vec::with_capacity(counts.iter().sum());
    for (ty, &count) in MAP_TYPES.iter().zip(&counts) {
        for i in 0..count {
            let lat = rng.gen_range(m.lat_min..m.lat_max);
            let lon = rng.gen_range(m.lon_min..m.lon_max);
            places.push(Place {
                place_id: format!("{}-{:04}", ty.to_lowercase(), i),
                place_type: PlaceType::new(*ty)?,
                location: GeoPoint { lat, lon },
            });
        }
    }
    Ok(SyntheticMap { places, lat_range: (m.lat_min, m.lat_max), lon_range: (m.lon_min, m.lon_max) })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulator::config::MapConfig;

    fn cfg(n_workplace: usize) -> SimConfig {
        SimConfig {
            map: MapConfig { n_apartment: 5, n_workplace, n_restaurant: 3, n_pub: 2, n_recreation: 3, ..Default::default() },
            ..Default::default()
        }
    }

    #[test]
    fn exact_counts_and_bbox() {
        let c = cfg(2);
        let map = build_map(&c, &mut crate::rng::stream(1, 0)).unwrap();
        let expected = [5, 2, 3, 2, 3];
        for (ty, n) in MAP_TYPES.iter().zip(expected) {
            assert_eq!(map.count_of(ty), n);
        }
        for p in &map.places {
            assert!((c.map.lat_min..c.map.lat_max).contains(&p.location.lat));
            assert!((c.map.lon_min..c.map.lon_max).contains(&p.location.lon));
        }
        let ids: std::collections::HashSet<_> = map.places.iter().map(|p| &p.place_id).collect();
        assert_eq!(ids.len(), map.places.len());
    }

    #[test]
    fn deterministic_given_seed() {
        let c = cfg(2);
        let a = build_map(&c, &mut crate::rng::stream(9, 0)).unwrap();
        let b = build_map(&c, &mut crate::rng::stream(9, 0)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn zero_workplaces_rejected() {
        assert!(matches!(build_map(&cfg(0), &mut crate::rng::stream(1, 0)), Err(Error::Config(_))));
    }
}
