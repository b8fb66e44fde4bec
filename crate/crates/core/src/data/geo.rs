use std::collections::HashMap;

use crate::error::{Error, Result};

pub const EARTH_RADIUS_KM: f64 = 6371.0;

/// Great-circle distance between two (lat, lon) points in degrees.
pub fn haversine_km(a: (f64, f64), b: (f64, f64)) -> f64 {
    let (lat1, lon1) = (a.0.to_radians(), a.1.to_radians());
    let (lat2, lon2) = (b.0.to_radians(), b.1.to_radians());
    let dlat = lat2 - lat1;
    let dlon = lon2 - lon1;
    let h = (dlat / 2.0).sin().powi(2) + lat1.cos() * lat2.cos() * (dlon / 2.0).sin().powi(2);
    2.0 * EARTH_RADIUS_KM * h.sqrt().min(1.0).asin()
}

/// Postal code to centroid lookup.
#[derive(Debug, Clone, Default)]
pub struct CentroidTable {
    centroids: HashMap<String, (f64, f64)>,
}

impl CentroidTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, zip: impl Into<String>, lat: f64, lon: f64) -> Result<()> {
        if !(-90.0..=90.0).contains(&lat) || !(-180.0..=180.0).contains(&lon) {
            return Err(Error::Data(format!("centroid ({lat}, {lon}) out of range")));
        }
        self.centroids.insert(zip.into(), (lat, lon));
        Ok(())
    }

    pub fn get(&self, zip: &str) -> Option<(f64, f64)> {
        self.centroids.get(zip).copied()
    }

    pub fn len(&self) -> usize {
        self.centroids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centroids.is_empty()
    }

    /// Entries sorted by postal code.
    pub fn sorted(&self) -> Vec<(&str, (f64, f64))> {
        let mut v: Vec<_> = self.centroids.iter().map(|(k, v)| (k.as_str(), *v)).collect();
        v.sort_by(|a, b| a.0.cmp(b.0));
        v
    }
}

/// Distance in km between two postal-code centroids; `None` when either
/// code is unknown.
pub fn zip_distance(zip_a: &str, zip_b: &str, centroids: &CentroidTable) -> Option<f64> {
    Some(haversine_km(centroids.get(zip_a)?, centroids.get(zip_b)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Haversine written out from the defining formula with R = 6371 km.
    fn hand_haversine(lat1: f64, lon1: f64, lat2: f64, lon2: f64) -> f64 {
        let p = std::f64::consts::PI / 180.0;
        let a = 0.5 - ((lat2 - lat1) * p).cos() / 2.0
            + (lat1 * p).cos() * (lat2 * p).cos() * (1.0 - ((lon2 - lon1) * p).cos()) / 2.0;
        12742.0 * a.sqrt().asin()
    }

    #[test]
    fn berlin_munich() {
        // Frozen from the independent evaluation above: 504.2 km.
        let expected = hand_haversine(52.52, 13.405, 48.137, 11.575);
        assert!((expected - 504.2).abs() < 0.5, "{expected}");
        let d = haversine_km((52.52, 13.405), (48.137, 11.575));
        assert!((d - expected).abs() < 1e-9);
    }

    #[test]
    fn identical_and_unknown_codes() {
        let mut t = CentroidTable::new();
        t.insert("10115", 52.53, 13.38).unwrap();
        assert_eq!(zip_distance("10115", "10115", &t), Some(0.0));
        assert_eq!(zip_distance("10115", "99999", &t), None);
    }

    fn point() -> impl Strategy<Value = (f64, f64)> {
        (47.0f64..55.0, 6.0f64..15.0)
    }

    proptest! {
        #[test]
        fn symmetric_and_triangle(a in point(), b in point(), c in point()) {
            let ab = haversine_km(a, b);
            let ba = haversine_km(b, a);
            prop_assert!(ab >= 0.0);
            prop_assert!((ab - ba).abs() < 1e-9);
            let ac = haversine_km(a, c);
            let cb = haversine_km(c, b);
            prop_assert!(ab <= ac + cb + 1e-9);
        }
    }
}
