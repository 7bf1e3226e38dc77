//! Intervention groups: the attribute values results are aggregated by.

use crate::error::{Error, Result};
use crate::geometry::LabelSet;
use crate::scene::{rotation_bin, AgentNode, AssetRef, GeneratorConfig, SceneGraph};
use serde::{Deserialize, Serialize};

/// An asset type, a 10° yaw bin (by its start), a weather preset (by index
/// into the generator's preset list), or a 10 m location cell (by its corner).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GroupKey {
    Asset(AssetRef),
    Rotation(u16),
    Weather(u16),
    Location([i32; 2]),
}

/// Side of a location cell, meters.
pub const LOCATION_CELL: f64 = 10.0;

impl GroupKey {
    pub fn rotation_of(yaw: f64) -> GroupKey {
        GroupKey::Rotation(rotation_bin(yaw))
    }

    pub fn location_of(x: f64, y: f64) -> GroupKey {
        let cell = |v: f64| (v / LOCATION_CELL).floor() as i32 * LOCATION_CELL as i32;
        GroupKey::Location([cell(x), cell(y)])
    }

    /// Human-readable name, e.g. `Asset GazelleBike`, `Rotation 170`,
    /// `Weather CloudyDark`.
    pub fn label(&self, config: &GeneratorConfig) -> String {
        match *self {
            GroupKey::Asset(a) => format!(
                "Asset {}",
                config.catalog.name(a).map_or_else(|| format!("{a:?}"), str::to_string)
            ),
            GroupKey::Rotation(b) => format!("Rotation {b}"),
            GroupKey::Weather(w) => format!(
                "Weather {}",
                config
                    .weather_presets
                    .get(usize::from(w))
                    .map_or_else(|| format!("#{w}"), |p| p.name.clone())
            ),
            GroupKey::Location([x, y]) => format!("Location {x},{y}"),
        }
    }

    /// Inverse of [`GroupKey::label`].
    pub fn parse(text: &str, config: &GeneratorConfig) -> Result<GroupKey> {
        let (kind, value) = text
            .trim()
            .split_once(char::is_whitespace)
            .ok_or_else(|| Error::Invalid(format!("group '{text}' is not '<Kind> <value>'")))?;
        let value = value.trim();
        match kind.to_ascii_lowercase().as_str() {
            "asset" => config
                .catalog
                .lookup(value)
                .map(GroupKey::Asset)
                .ok_or_else(|| Error::Invalid(format!("unknown asset {value}"))),
            "rotation" => {
                let deg: f64 = value
                    .parse()
                    .map_err(|_| Error::Invalid(format!("bad rotation {value}")))?;
                if !(0.0..360.0).contains(&deg) {
                    return Err(Error::Invalid(format!("rotation {value} outside [0, 360)")));
                }
                Ok(GroupKey::rotation_of(deg))
            }
            "weather" => config
                .preset_by_name(value)
                .map(|i| GroupKey::Weather(i as u16))
                .ok_or_else(|| Error::Invalid(format!("unknown weather preset {value}"))),
            "location" => {
                let coords: Vec<f64> = value
                    .split(',')
                    .map(|v| v.trim().parse::<f64>())
                    .collect::<std::result::Result<_, _>>()
                    .map_err(|_| Error::Invalid(format!("bad location {value}")))?;
                match coords[..] {
                    [x, y] => Ok(GroupKey::location_of(x, y)),
                    _ => Err(Error::Invalid(format!("location {value} is not 'x,y'"))),
                }
            }
            _ => Err(Error::Invalid(format!("unknown group kind {kind}"))),
        }
    }

    /// Whether `agent` in `scene` belongs to this group.
    pub fn matches(&self, scene: &SceneGraph, agent: &AgentNode, config: &GeneratorConfig) -> bool {
        match *self {
            GroupKey::Asset(a) => agent.asset == a,
            GroupKey::Rotation(b) => rotation_bin(agent.pose.yaw) == b,
            GroupKey::Weather(w) => config.preset_index(&scene.weather) == Some(usize::from(w)),
            GroupKey::Location(_) => GroupKey::location_of(agent.pose.x, agent.pose.y) == *self,
        }
    }

    /// Only the labels of agents in this group. Used to evaluate a group on
    /// its own members.
    pub fn restrict(&self, scene: &SceneGraph, labels: &LabelSet, config: &GeneratorConfig) -> LabelSet {
        LabelSet {
            scene_id: labels.scene_id,
            labels: labels
                .labels
                .iter()
                .filter(|l| scene.agent(l.agent_id).is_some_and(|a| self.matches(scene, a, config)))
                .cloned()
                .collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn labels_round_trip() {
        let cfg = GeneratorConfig::default();
        for text in ["Asset GazelleBike", "Rotation 170", "Weather CloudyDark", "Location -60,0"] {
            let g = GroupKey::parse(text, &cfg).unwrap();
            assert_eq!(g.label(&cfg), text);
        }
        assert_eq!(GroupKey::parse("rotation 178", &cfg).unwrap(), GroupKey::Rotation(170));
        assert!(GroupKey::parse("Asset Unicycle", &cfg).is_err());
        assert!(GroupKey::parse("Rotation", &cfg).is_err());
        assert_eq!(GroupKey::location_of(-55.5, 3.0), GroupKey::Location([-60, 0]));
    }
}
