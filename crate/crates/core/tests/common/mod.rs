#![allow(dead_code)]

use std::path::PathBuf;

use trajbench::model::{GeoPoint, PlaceType, StayPoint, Trajectory};

// 2024-01-06 00:00 UTC, a Saturday
const SATURDAY: i64 = 1_704_499_200;
const DAYS: [&str; 7] = ["Sat", "Sun", "Mon", "Tue", "Wed", "Thu", "Fri"];

/// The 21-point sequence of the published prompt example.
pub const SAMPLE_POINTS: [(&str, &str, &str); 21] = [
    ("Sat", "10:36", "Pub"),
    ("Sat", "10:57", "Apartment"),
    ("Sat", "13:44", "Pub"),
    ("Sat", "04:45", "Apartment"),
    ("Sat", "07:39", "Pub"),
    ("Sat", "09:44", "Apartment"),
    ("Sat", "10:14", "Apartment"),
    ("Wed", "00:30", "Apartment"),
    ("Wed", "06:08", "Apartment"),
    ("Wed", "06:44", "Apartment"),
    ("Wed", "07:27", "Apartment"),
    ("Sat", "03:39", "Apartment"),
    ("Sat", "04:17", "Apartment"),
    ("Sat", "05:52", "Apartment"),
    ("Sat", "08:48", "Pub"),
    ("Sat", "09:36", "Restaurant"),
    ("Thu", "06:01", "Apartment"),
    ("Wed", "08:25", "Apartment"),
    ("Thu", "01:05", "Workplace"),
    ("Sat", "01:18", "Pub"),
    ("Sat", "05:33", "Pub"),
];

pub const SAMPLE_KM: [f64; 20] =
    [0.4, 4.8, 3.4, 4.9, 0.6, 0.8, 3.1, 1.1, 0.2, 1.3, 13.5, 0.3, 2.1, 3.7, 0.6, 11.9, 1.5, 1.3, 0.6, 10.4];

/// The marker sits after the 17th point.
pub const SAMPLE_DEVIATE: usize = 16;

/// Each point arrives at the next matching weekday and clock time after the
/// previous one; points step north and south along one meridian so that
/// consecutive great-circle distances equal `SAMPLE_KM`.
pub fn sample_trajectory() -> Trajectory {
    let deg_per_km = 180.0 / (std::f64::consts::PI * 6371.0);
    let mut prev = SATURDAY - 1;
    let mut lat = 39.9;
    let mut points = Vec::new();
    for (i, (day, clock, ty)) in SAMPLE_POINTS.iter().enumerate() {
        let (h, m) = clock.split_once(':').unwrap();
        let offset = DAYS.iter().position(|d| d == day).unwrap() as i64 * 86_400
            + h.parse::<i64>().unwrap() * 3600
            + m.parse::<i64>().unwrap() * 60;
        let mut t = SATURDAY + offset;
        while t <= prev {
            t += 7 * 86_400;
        }
        if i > 0 {
            let sign = if i % 2 == 0 { -1.0 } else { 1.0 };
            lat += sign * SAMPLE_KM[i - 1] * deg_per_km;
        }
        points.push(StayPoint {
            arrive: t,
            depart: t + 60,
            place_id: format!("p{i}"),
            place_type: PlaceType::new(*ty).unwrap(),
            location: GeoPoint { lat, lon: 116.4 },
        });
        prev = t + 60;
    }
    Trajectory::new("sample", points)
}

pub fn golden(name: &str) -> String {
    std::fs::read_to_string(fixture_dir().join("golden").join(name)).unwrap()
}

pub fn fixture_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests")
}

pub fn answer(name: &str) -> String {
    std::fs::read_to_string(fixture_dir().join("fixtures/answers").join(format!("{name}.txt"))).unwrap()
}

// 2023-11-15 00:00 UTC
pub const T0: i64 = 1_700_006_400;

pub fn stay(t: i64, ty: &str, lat: f64, lon: f64) -> StayPoint {
    StayPoint {
        arrive: t,
        depart: t + 1800,
        place_id: format!("{ty}@{lat:.4},{lon:.4}"),
        place_type: PlaceType::new(ty).unwrap(),
        location: GeoPoint { lat, lon },
    }
}

/// One visit of a day plan: hour of arrival, type, latitude, longitude.
pub type Visit = (i64, &'static str, f64, f64);

pub const HOME: (f64, f64) = (39.90, 116.40);
pub const WORK: (f64, f64) = (39.95, 116.45);
pub const LUNCH: (f64, f64) = (39.951, 116.452);

pub fn workday() -> Vec<Visit> {
    vec![
        (0, "Apartment", HOME.0, HOME.1),
        (9, "Workplace", WORK.0, WORK.1),
        (12, "Restaurant", LUNCH.0, LUNCH.1),
        (13, "Workplace", WORK.0, WORK.1),
        (19, "Apartment", HOME.0, HOME.1),
    ]
}

/// Lays day plans on consecutive days starting at `T0`.
pub fn agent_from_days(id: &str, days: &[Vec<Visit>]) -> Trajectory {
    let points = days
        .iter()
        .enumerate()
        .flat_map(|(d, plan)| {
            plan.iter().map(move |&(h, ty, lat, lon)| stay(T0 + d as i64 * 86_400 + h * 3600, ty, lat, lon))
        })
        .collect();
    Trajectory::new(id, points)
}

/// Central-difference gradient check. Returns the largest relative error
/// `|a - n| / max(|a|, |n|, 1e-6)` over all parameters.
pub fn max_gradient_error(
    net: &trajbench::detectors::TinyNet,
    x: ndarray::ArrayView2<f64>,
    obj: &trajbench::detectors::Objective,
) -> f64 {
    use trajbench::detectors::nn::{gradients, loss};
    let eps = 1e-5;
    let (_, analytic) = gradients(net, x, obj).unwrap();
    let base = net.flat_params();
    let mut probe = net.clone();
    let mut worst: f64 = 0.0;
    for (i, a) in analytic.iter().enumerate() {
        let mut p = base.clone();
        p[i] = base[i] + eps;
        probe.set_flat_params(&p);
        let up = loss(&probe, x, obj).unwrap();
        p[i] = base[i] - eps;
        probe.set_flat_params(&p);
        let down = loss(&probe, x, obj).unwrap();
        let numeric = (up - down) / (2.0 * eps);
        worst = worst.max((a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-6));
    }
    worst
}
