use super::{AssetCatalog, CameraModel, MapId, WeatherState};
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Span of every encoded coordinate, starting at `min_coord`.
pub const COORD_SPAN: f64 = 600.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WaypointKind {
    Road,
    Sidewalk,
}

/// A straight run of waypoints: points every `spacing` meters from `from` to
/// `to`, repeated at each lateral offset (left of the direction of travel is
/// positive). Points snap to the 0.5 m grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoadSpec {
    pub kind: WaypointKind,
    pub from: [f64; 2],
    pub to: [f64; 2],
    pub offsets: Vec<f64>,
    pub spacing: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapConfig {
    pub id: MapId,
    pub weight: f64,
    pub roads: Vec<RoadSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeatherPreset {
    pub name: String,
    pub weight: f64,
    pub state: WeatherState,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub weight: f64,
    pub camera: CameraModel,
}

/// Poisson count truncated to `[min, max]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VehicleCountDistribution {
    pub mean: f64,
    pub min: usize,
    pub max: usize,
}

impl VehicleCountDistribution {
    /// Normalized probabilities for `min..=max`.
    pub fn pmf(&self) -> Vec<f64> {
        let mut log_p = Vec::with_capacity(self.max + 1 - self.min);
        for k in self.min..=self.max {
            let kf = k as f64;
            log_p.push(kf * self.mean.ln() - self.mean - libm::lgamma(kf + 1.0));
        }
        let top = log_p.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let w: Vec<f64> = log_p.iter().map(|l| (l - top).exp()).collect();
        let total: f64 = w.iter().sum();
        w.into_iter().map(|x| x / total).collect()
    }
}

/// Mixture of wrapped normals over yaw, in degrees.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RotationDistribution {
    pub means: Vec<f64>,
    pub weights: Vec<f64>,
    pub sigma: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GeneratorConfig {
    pub min_coord: f64,
    pub pedestrians: usize,
    pub ego_asset: String,
    pub maps: Vec<MapConfig>,
    pub weather_presets: Vec<WeatherPreset>,
    pub calibrations: Vec<Calibration>,
    pub vehicle_count: VehicleCountDistribution,
    pub rotation: RotationDistribution,
    /// Pedestrians face one of these headings with equal probability.
    pub pedestrian_headings: Vec<f64>,
    pub catalog: AssetCatalog,
}

fn check_weights(what: &str, weights: impl IntoIterator<Item = f64>) -> Result<()> {
    let mut total = 0.0;
    for w in weights {
        if !(w >= 0.0) || !w.is_finite() {
            return Err(Error::Config(format!("{what}: weights must be finite and non-negative")));
        }
        total += w;
    }
    if total <= 0.0 {
        return Err(Error::Config(format!("{what}: empty or all-zero weights")));
    }
    Ok(())
}

impl GeneratorConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: GeneratorConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.min_coord.is_finite() {
            return Err(Error::Config("min_coord must be finite".into()));
        }
        if self.maps.is_empty() {
            return Err(Error::Config("no maps configured".into()));
        }
        check_weights("maps", self.maps.iter().map(|m| m.weight))?;
        for (i, m) in self.maps.iter().enumerate() {
            if self.maps[..i].iter().any(|o| o.id == m.id) {
                return Err(Error::Config(format!("map {} configured twice", m.id)));
            }
            for r in &m.roads {
                if !(r.spacing > 0.0) {
                    return Err(Error::Config(format!("map {}: road spacing must be positive", m.id)));
                }
            }
        }
        if self.weather_presets.is_empty() {
            return Err(Error::Config("weather preset list is empty".into()));
        }
        check_weights("weather presets", self.weather_presets.iter().map(|p| p.weight))?;
        for (i, p) in self.weather_presets.iter().enumerate() {
            if !p.state.is_valid() {
                return Err(Error::Config(format!("weather preset {} out of range", p.name)));
            }
            if self.weather_presets[..i].iter().any(|o| o.name == p.name || o.state == p.state) {
                return Err(Error::Config(format!("weather preset {} is not unique", p.name)));
            }
        }
        if self.calibrations.is_empty() {
            return Err(Error::Config("camera calibration set is empty".into()));
        }
        check_weights("calibrations", self.calibrations.iter().map(|c| c.weight))?;
        for c in &self.calibrations {
            if !c.camera.is_valid() {
                return Err(Error::Config(format!("invalid camera calibration {:?}", c.camera)));
            }
        }
        let vc = &self.vehicle_count;
        if vc.min > vc.max || !(vc.mean > 0.0) {
            return Err(Error::Config("vehicle count distribution is degenerate".into()));
        }
        let rot = &self.rotation;
        if rot.means.is_empty() || rot.means.len() != rot.weights.len() || !(rot.sigma > 0.0) {
            return Err(Error::Config("rotation distribution is malformed".into()));
        }
        check_weights("rotation modes", rot.weights.iter().copied())?;
        if self.pedestrian_headings.is_empty()
            || self.pedestrian_headings.iter().any(|h| !(0.0..360.0).contains(h))
        {
            return Err(Error::Config("pedestrian headings must be in [0, 360)".into()));
        }
        self.catalog.validate()?;
        match self.catalog.lookup(&self.ego_asset) {
            Some(a) if a.family.is_vehicle() => {}
            _ => return Err(Error::Config(format!("unknown ego asset {}", self.ego_asset))),
        }
        check_weights(
            "vehicle assets",
            self.catalog.entries.iter().filter(|e| e.family.is_vehicle()).map(|e| e.weight),
        )?;
        if self.pedestrians > 0 {
            check_weights(
                "pedestrian assets",
                self.catalog.entries.iter().filter(|e| !e.family.is_vehicle()).map(|e| e.weight),
            )?;
        }
        Ok(())
    }

    pub fn preset_index(&self, weather: &WeatherState) -> Option<usize> {
        self.weather_presets.iter().position(|p| p.state == *weather)
    }

    pub fn preset_by_name(&self, name: &str) -> Option<usize> {
        self.weather_presets.iter().position(|p| p.name == name)
    }

    pub fn calibration_index(&self, camera: &CameraModel) -> Option<usize> {
        self.calibrations.iter().position(|c| c.camera == *camera)
    }
}

fn road(kind: WaypointKind, from: [f64; 2], to: [f64; 2], offsets: &[f64]) -> RoadSpec {
    RoadSpec {
        kind,
        from,
        to,
        offsets: offsets.to_vec(),
        spacing: 5.0,
    }
}

fn town_a() -> MapConfig {
    use WaypointKind::*;
    let lanes = [-2.0, 2.0];
    MapConfig {
        id: MapId::TownA,
        weight: 0.5,
        roads: vec![
            road(Road, [-60.0, -12.0], [60.0, -12.0], &lanes),
            road(Road, [-60.0, 0.0], [60.0, 0.0], &lanes),
            road(Road, [-60.0, 12.0], [60.0, 12.0], &lanes),
            road(Sidewalk, [-60.0, -6.0], [60.0, -6.0], &[0.0]),
            road(Sidewalk, [-60.0, 6.0], [60.0, 6.0], &[0.0]),
            road(Sidewalk, [-60.0, 18.0], [60.0, 18.0], &[0.0]),
        ],
    }
}

fn town_b() -> MapConfig {
    use WaypointKind::*;
    MapConfig {
        id: MapId::TownB,
        weight: 0.5,
        roads: vec![
            road(Road, [-70.0, -8.0], [70.0, -8.0], &[-5.5, -2.0, 2.0, 5.5]),
            road(Road, [-70.0, 8.0], [70.0, 8.0], &[-5.5, -2.0, 2.0, 5.5]),
            road(Sidewalk, [-70.0, 0.0], [70.0, 0.0], &[0.0]),
            road(Sidewalk, [-70.0, -16.0], [70.0, -16.0], &[0.0]),
            road(Sidewalk, [-70.0, 16.0], [70.0, 16.0], &[0.0]),
        ],
    }
}

fn preset(name: &str, weight: f64, v: [f64; 10]) -> WeatherPreset {
    WeatherPreset {
        name: name.to_string(),
        weight,
        state: WeatherState::from_array(v),
    }
}

/// Fifteen named weather presets. Columns follow [`WeatherState::ATTRIBUTES`].
pub fn default_weather_presets() -> Vec<WeatherPreset> {
    vec![
        preset("ClearNoon", 0.12, [0.05, 0.0, 0.0, 0.1, 45.0, 0.0, 0.0, 0.0, 0.03, 0.33]),
        preset("CloudyNoon", 0.10, [0.6, 0.0, 0.0, 0.1, 45.0, 0.0, 0.0, 0.0, 0.03, 0.33]),
        preset("WetNoon", 0.07, [0.05, 0.0, 0.5, 0.1, 45.0, 0.0, 0.0, 0.5, 0.03, 0.33]),
        preset("WetCloudyNoon", 0.07, [0.6, 0.0, 0.5, 0.1, 45.0, 0.0, 0.0, 0.5, 0.03, 0.33]),
        preset("SoftRainNoon", 0.06, [0.7, 0.3, 0.3, 0.2, 45.0, 0.1, 0.75, 0.5, 0.03, 0.33]),
        preset("HardRainNoon", 0.05, [0.9, 0.6, 0.6, 0.4, 45.0, 0.2, 0.75, 1.0, 0.03, 0.33]),
        preset("ClearSunset", 0.08, [0.05, 0.0, 0.0, 0.1, 15.0, 0.0, 0.0, 0.0, 0.03, 0.33]),
        preset("CloudySunset", 0.07, [0.6, 0.0, 0.0, 0.1, 15.0, 0.0, 0.0, 0.0, 0.03, 0.33]),
        preset("WetSunset", 0.06, [0.05, 0.0, 0.5, 0.1, 15.0, 0.0, 0.0, 0.5, 0.03, 0.33]),
        preset("SoftRainSunset", 0.06, [0.7, 0.3, 0.3, 0.2, 15.0, 0.1, 0.75, 0.5, 0.03, 0.33]),
        preset("HardRainSunset", 0.05, [0.9, 0.6, 0.6, 0.4, 15.0, 0.2, 0.75, 1.0, 0.03, 0.33]),
        preset("SunnyPuddles", 0.06, [0.1, 0.0, 0.8, 0.1, 60.0, 0.0, 0.0, 0.7, 0.03, 0.33]),
        preset("CloudyDark", 0.05, [0.9, 0.0, 0.0, 0.2, -20.0, 0.1, 0.5, 0.0, 0.03, 0.33]),
        preset("CloudyDarkPuddles", 0.05, [0.9, 0.0, 0.6, 0.2, -20.0, 0.1, 0.5, 0.6, 0.03, 0.33]),
        preset("ClearNight", 0.05, [0.1, 0.0, 0.0, 0.1, -60.0, 0.0, 0.0, 0.0, 0.03, 0.33]),
    ]
}

fn calibration(weight: f64, focal: f64, cx: f64, cy: f64) -> Calibration {
    Calibration {
        weight,
        camera: CameraModel {
            image_width: 1600.0,
            image_height: 900.0,
            focal,
            principal_x: cx,
            principal_y: cy,
        },
    }
}

pub fn default_calibrations() -> Vec<Calibration> {
    vec![
        calibration(0.25, 1266.4, 816.3, 491.5),
        calibration(0.25, 1260.5, 807.9, 495.3),
        calibration(0.2, 1272.6, 826.6, 479.8),
        calibration(0.2, 1257.9, 827.2, 450.9),
        calibration(0.1, 809.2, 829.2, 481.8),
    ]
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            min_coord: -300.0,
            pedestrians: 20,
            ego_asset: "LincolnMKZ".to_string(),
            maps: vec![town_a(), town_b()],
            weather_presets: default_weather_presets(),
            calibrations: default_calibrations(),
            vehicle_count: VehicleCountDistribution {
                mean: 8.0,
                min: 1,
                max: 20,
            },
            rotation: RotationDistribution {
                means: vec![0.0, 180.0],
                weights: vec![0.5, 0.5],
                sigma: 25.0,
            },
            pedestrian_headings: vec![0.0, 180.0],
            catalog: AssetCatalog::default(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_config_validates() {
        let c = GeneratorConfig::default();
        c.validate().unwrap();
        assert_eq!(c.weather_presets.len(), 15);
    }

    #[test]
    fn truncated_poisson_is_normalized() {
        let d = VehicleCountDistribution {
            mean: 8.0,
            min: 1,
            max: 20,
        };
        let p = d.pmf();
        assert_eq!(p.len(), 20);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        // mode of Poisson(8) is at 7 and 8
        assert!((p[6] - p[7]).abs() < 1e-12);
    }

    #[test]
    fn empty_presets_rejected() {
        let c = GeneratorConfig {
            weather_presets: vec![],
            ..GeneratorConfig::default()
        };
        assert!(c.validate().unwrap_err().is_config());
    }

    #[test]
    fn toml_round_trip() {
        let c = GeneratorConfig::default();
        let text = toml::to_string(&c).unwrap();
        assert_eq!(GeneratorConfig::from_toml(&text).unwrap(), c);
        // a partial file falls back to defaults
        let partial = GeneratorConfig::from_toml("pedestrians = 5\n").unwrap();
        assert_eq!(partial.pedestrians, 5);
        assert_eq!(partial.maps, c.maps);
    }
}
