//! Symbolic scenes and the parametric generator that produces them.
//!
//! A [`SceneGraph`] is the full world state the rest of the pipeline reasons
//! about: weather, camera intrinsics, the ego agent carrying the camera, and an
//! ordered list of vehicles and pedestrians. Scenes are static; nothing moves.

mod catalog;
mod config;
mod generate;

pub use catalog::{AssetCatalog, CatalogEntry};
pub use config::{
    default_calibrations, default_weather_presets, Calibration, COORD_SPAN, GeneratorConfig, MapConfig, RoadSpec, RotationDistribution, VehicleCountDistribution,
    WaypointKind, WeatherPreset,
};
pub use generate::{sample_scene, scene_distribution_log_prob, Generator, Waypoint, IMPOSSIBLE};

use serde::{Deserialize, Serialize};
use std::fmt;

/// Width of a rotation group bin in degrees.
pub const ROTATION_BIN_DEGREES: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum MapId {
    TownA,
    TownB,
}

impl fmt::Display for MapId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MapId::TownA => f.write_str("TownA"),
            MapId::TownB => f.write_str("TownB"),
        }
    }
}

/// Ten weather attributes. Everything is a fraction in `[0, 1]` except
/// `sun_altitude`, which is in degrees `[-90, 90]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeatherState {
    pub cloudiness: f64,
    pub precipitation: f64,
    pub puddles: f64,
    pub wind: f64,
    pub sun_altitude: f64,
    pub fog_density: f64,
    pub fog_distance: f64,
    pub wetness: f64,
    pub mie_scattering: f64,
    pub rayleigh_scattering: f64,
}

impl WeatherState {
    pub const ATTRIBUTES: [&'static str; 10] = [
        "cloudiness",
        "precipitation",
        "puddles",
        "wind",
        "sun_altitude",
        "fog_density",
        "fog_distance",
        "wetness",
        "mie_scattering",
        "rayleigh_scattering",
    ];

    pub fn to_array(&self) -> [f64; 10] {
        [
            self.cloudiness,
            self.precipitation,
            self.puddles,
            self.wind,
            self.sun_altitude,
            self.fog_density,
            self.fog_distance,
            self.wetness,
            self.mie_scattering,
            self.rayleigh_scattering,
        ]
    }

    pub fn from_array(a: [f64; 10]) -> Self {
        WeatherState {
            cloudiness: a[0],
            precipitation: a[1],
            puddles: a[2],
            wind: a[3],
            sun_altitude: a[4],
            fog_density: a[5],
            fog_distance: a[6],
            wetness: a[7],
            mie_scattering: a[8],
            rayleigh_scattering: a[9],
        }
    }

    pub fn is_valid(&self) -> bool {
        let a = self.to_array();
        a.iter()
            .enumerate()
            .all(|(i, v)| if i == 4 { (-90.0..=90.0).contains(v) } else { (0.0..=1.0).contains(v) })
    }
}

/// Pinhole intrinsics, all in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraModel {
    pub image_width: f64,
    pub image_height: f64,
    pub focal: f64,
    pub principal_x: f64,
    pub principal_y: f64,
}

impl CameraModel {
    pub const ATTRIBUTES: [&'static str; 5] = ["image_width", "image_height", "focal", "principal_x", "principal_y"];

    pub fn to_array(&self) -> [f64; 5] {
        [self.image_width, self.image_height, self.focal, self.principal_x, self.principal_y]
    }

    pub fn from_array(a: [f64; 5]) -> Self {
        CameraModel {
            image_width: a[0],
            image_height: a[1],
            focal: a[2],
            principal_x: a[3],
            principal_y: a[4],
        }
    }

    pub fn is_valid(&self) -> bool {
        self.image_width > 0.0
            && self.image_height > 0.0
            && self.focal > 0.0
            && (0.0..self.image_width).contains(&self.principal_x)
            && (0.0..self.image_height).contains(&self.principal_y)
    }
}

/// World-frame pose. Locations are meters, `z` is the ground contact height;
/// angles are degrees in `[0, 360)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub roll: f64,
    pub yaw: f64,
}

impl Pose {
    pub fn to_array(&self) -> [f64; 5] {
        [self.x, self.y, self.z, self.roll, self.yaw]
    }

    pub fn from_array(a: [f64; 5]) -> Self {
        Pose {
            x: a[0],
            y: a[1],
            z: a[2],
            roll: a[3],
            yaw: a[4],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgentKind {
    Ego,
    Vehicle,
    Pedestrian,
}

/// Asset class family. `Pedestrian` covers walkers; the other five are vehicles.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Bike,
    Motorcycle,
    Compact,
    Sedan,
    Heavy,
    Pedestrian,
}

impl Family {
    pub const ALL: [Family; 6] = [
        Family::Bike,
        Family::Motorcycle,
        Family::Compact,
        Family::Sedan,
        Family::Heavy,
        Family::Pedestrian,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Family> {
        Family::ALL.get(i).copied()
    }

    pub fn is_vehicle(self) -> bool {
        self != Family::Pedestrian
    }
}

/// Two-part asset identifier: family plus model index within the family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct AssetRef {
    pub family: Family,
    pub model: u8,
}

impl AssetRef {
    pub fn new(family: Family, model: u8) -> Self {
        AssetRef { family, model }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentNode {
    pub id: u32,
    pub kind: AgentKind,
    pub asset: AssetRef,
    pub pose: Pose,
    /// Half-dimensions in meters: along heading, lateral, vertical.
    pub extent: [f64; 3],
}

impl AgentNode {
    pub fn is_vehicle(&self) -> bool {
        self.kind == AgentKind::Vehicle
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneGraph {
    pub id: u64,
    pub seed: u64,
    pub map: MapId,
    pub weather: WeatherState,
    pub camera: CameraModel,
    pub ego: AgentNode,
    /// Vehicles first, then pedestrians; order is fixed by the generation seed.
    pub agents: Vec<AgentNode>,
}

impl SceneGraph {
    pub fn agent(&self, id: u32) -> Option<&AgentNode> {
        self.agents.iter().find(|a| a.id == id)
    }

    pub fn agent_mut(&mut self, id: u32) -> Option<&mut AgentNode> {
        self.agents.iter_mut().find(|a| a.id == id)
    }

    pub fn vehicles(&self) -> impl Iterator<Item = &AgentNode> {
        self.agents.iter().filter(|a| a.is_vehicle())
    }

    pub fn vehicle_count(&self) -> usize {
        self.vehicles().count()
    }

    pub fn pedestrian_count(&self) -> usize {
        self.agents.iter().filter(|a| a.kind == AgentKind::Pedestrian).count()
    }
}

/// Start of the rotation bin containing `yaw` (degrees).
pub fn rotation_bin(yaw: f64) -> u16 {
    let y = yaw.rem_euclid(360.0);
    ((y / ROTATION_BIN_DEGREES).floor() * ROTATION_BIN_DEGREES) as u16 % 360
}

/// Center of the rotation bin starting at `bin_start`.
pub fn rotation_bin_center(bin_start: u16) -> f64 {
    f64::from(bin_start) + ROTATION_BIN_DEGREES / 2.0
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rotation_bins() {
        assert_eq!(rotation_bin(175.3), 170);
        assert_eq!(rotation_bin(0.0), 0);
        assert_eq!(rotation_bin(359.9), 350);
        assert_eq!(rotation_bin(-5.0), 350);
        assert_eq!(rotation_bin_center(170), 175.0);
    }

    #[test]
    fn weather_array_round_trip() {
        let w = WeatherState::from_array([0.1, 0.2, 0.3, 0.4, 45.0, 0.5, 0.6, 0.7, 0.8, 0.9]);
        assert_eq!(WeatherState::from_array(w.to_array()), w);
        assert!(w.is_valid());
        let bad = WeatherState { sun_altitude: 95.0, ..w };
        assert!(!bad.is_valid());
    }
}
