use crate::model::{GeoPoint, ModelError};

pub const EARTH_RADIUS_KM: f64 = 6371.0;

/// Great-circle distance in kilometers on a sphere of radius 6371 km.
pub fn great_circle_km(a: GeoPoint, b: GeoPoint) -> f64 {
    let (lat1, lat2) = (a.lat.to_radians(), b.lat.to_radians());
    let dlat = lat2 - lat1;
    let dlon = (b.lon - a.lon).to_radians();
    let h = (dlat / 2.0).sin().powi(2) + lat1.cos() * lat2.cos() * (dlon / 2.0).sin().powi(2);
    2.0 * EARTH_RADIUS_KM * h.clamp(0.0, 1.0).sqrt().asin()
}

/// Haversine distance between two `(lat, lon)` pairs in degrees.
pub fn haversine_km(a: (f64, f64), b: (f64, f64)) -> Result<f64, ModelError> {
    Ok(great_circle_km(
        GeoPoint::new(a.0, a.1)?,
        GeoPoint::new(b.0, b.1)?,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn identical_points() {
        assert_eq!(haversine_km((52.52, 13.405), (52.52, 13.405)).unwrap(), 0.0);
    }

    #[test]
    fn pole_to_pole() {
        let d = haversine_km((90.0, 0.0), (-90.0, 0.0)).unwrap();
        assert!((d - std::f64::consts::PI * 6371.0).abs() < 1e-9);
        assert!((d - 20015.087).abs() < 0.001);
    }

    #[test]
    fn berlin_paris() {
        // spherical law of cosines, an independent route to the same distance
        let (p1, l1, p2, l2) = (
            52.52f64.to_radians(),
            13.405f64.to_radians(),
            48.8566f64.to_radians(),
            2.3522f64.to_radians(),
        );
        let central = (p1.sin() * p2.sin() + p1.cos() * p2.cos() * (l2 - l1).cos()).acos();
        let expected = 6371.0 * central;
        let d = haversine_km((52.5200, 13.4050), (48.8566, 2.3522)).unwrap();
        assert!((d - expected).abs() < 0.5);
        assert!((d - 877.46).abs() < 0.5, "{d}");
    }

    #[test]
    fn invalid_coordinates() {
        assert!(haversine_km((91.0, 0.0), (0.0, 0.0)).is_err());
        assert!(haversine_km((0.0, 0.0), (0.0, -180.0)).is_err());
    }

    fn coord() -> impl Strategy<Value = (f64, f64)> {
        (-90.0f64..=90.0, -179.999f64..=180.0)
    }

    proptest! {
        #[test]
        fn symmetric_and_triangle(a in coord(), b in coord(), c in coord()) {
            let ab = haversine_km(a, b).unwrap();
            let ba = haversine_km(b, a).unwrap();
            prop_assert!((ab - ba).abs() < 1e-9);
            let ac = haversine_km(a, c).unwrap();
            let cb = haversine_km(c, b).unwrap();
            prop_assert!(ab <= ac + cb + 1e-6);
            prop_assert!(ab <= std::f64::consts::PI * 6371.0 + 1e-9);
        }
    }
}
