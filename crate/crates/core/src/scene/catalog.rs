use super::{AssetRef, Family};
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::collections::HashSet;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CatalogEntry {
    pub name: String,
    pub family: Family,
    /// Half-dimensions in meters: along heading, lateral, vertical.
    pub extent: [f64; 3],
    /// Multiplies the oracle detector's confidence; in `(0, 1]`.
    pub detectability: f64,
    /// Relative sampling weight within its kind (vehicles or pedestrians).
    pub weight: f64,
}

/// The set of spawnable assets. Model indices are positions within a family,
/// in entry order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssetCatalog {
    pub entries: Vec<CatalogEntry>,
}

impl AssetCatalog {
    pub fn validate(&self) -> Result<()> {
        let mut names = HashSet::new();
        for e in &self.entries {
            if !names.insert(e.name.as_str()) {
                return Err(Error::Config(format!("duplicate asset name {}", e.name)));
            }
            if e.extent.iter().any(|&x| !(x > 0.0)) {
                return Err(Error::Config(format!("asset {} has a non-positive extent", e.name)));
            }
            if !(e.detectability > 0.0 && e.detectability <= 1.0) {
                return Err(Error::Config(format!("asset {} detectability outside (0, 1]", e.name)));
            }
            if !(e.weight >= 0.0) || !e.weight.is_finite() {
                return Err(Error::Config(format!("asset {} has an invalid weight", e.name)));
            }
        }
        for f in Family::ALL {
            let n = self.models(f).count();
            if n == 0 {
                return Err(Error::Config(format!("asset family {f:?} is empty")));
            }
            if n > usize::from(u8::MAX) {
                return Err(Error::Config(format!("asset family {f:?} has too many models")));
            }
        }
        Ok(())
    }

    /// Entries of one family, paired with their model index.
    pub fn models(&self, family: Family) -> impl Iterator<Item = (u8, &CatalogEntry)> {
        self.entries
            .iter()
            .filter(move |e| e.family == family)
            .enumerate()
            .map(|(i, e)| (i as u8, e))
    }

    pub fn model_count(&self, family: Family) -> usize {
        self.models(family).count()
    }

    /// Largest model count over all families; the size of the model-token vocabulary.
    pub fn max_models(&self) -> usize {
        Family::ALL.iter().map(|&f| self.model_count(f)).max().unwrap_or(0)
    }

    pub fn get(&self, asset: AssetRef) -> Option<&CatalogEntry> {
        self.models(asset.family).find(|(m, _)| *m == asset.model).map(|(_, e)| e)
    }

    pub fn contains(&self, asset: AssetRef) -> bool {
        self.get(asset).is_some()
    }

    pub fn lookup(&self, name: &str) -> Option<AssetRef> {
        Family::ALL.iter().find_map(|&f| {
            self.models(f)
                .find(|(_, e)| e.name == name)
                .map(|(m, _)| AssetRef::new(f, m))
        })
    }

    pub fn name(&self, asset: AssetRef) -> Option<&str> {
        self.get(asset).map(|e| e.name.as_str())
    }

    /// All vehicle assets in family/model order.
    pub fn vehicle_assets(&self) -> Vec<AssetRef> {
        self.assets_where(|f| f.is_vehicle())
    }

    pub fn pedestrian_assets(&self) -> Vec<AssetRef> {
        self.assets_where(|f| !f.is_vehicle())
    }

    fn assets_where(&self, keep: impl Fn(Family) -> bool) -> Vec<AssetRef> {
        Family::ALL
            .iter()
            .filter(|&&f| keep(f))
            .flat_map(|&f| self.models(f).map(move |(m, _)| AssetRef::new(f, m)))
            .collect()
    }

    pub fn detectability(&self, asset: AssetRef) -> f64 {
        self.get(asset).map_or(1.0, |e| e.detectability)
    }
}

fn entry(name: &str, family: Family, extent: [f64; 3], detectability: f64, weight: f64) -> CatalogEntry {
    CatalogEntry {
        name: name.to_string(),
        family,
        extent,
        detectability,
        weight,
    }
}

impl Default for AssetCatalog {
    fn default() -> Self {
        use Family::*;
        AssetCatalog {
            entries: vec![
                entry("DiamondbackBike", Bike, [0.82, 0.30, 0.85], 0.6, 0.022),
                entry("GazelleBike", Bike, [0.84, 0.28, 0.85], 0.6, 0.022),
                entry("CrossBike", Bike, [0.80, 0.30, 0.82], 0.6, 0.022),
                entry("KawasakiNinja", Motorcycle, [1.05, 0.40, 0.80], 0.95, 0.03),
                entry("HarleyDavidson", Motorcycle, [1.15, 0.45, 0.78], 0.95, 0.03),
                entry("YamahaYZF", Motorcycle, [1.00, 0.38, 0.80], 0.95, 0.03),
                entry("MiniCooper", Compact, [1.90, 0.85, 0.72], 1.0, 0.07),
                entry("BMWIsetta", Compact, [1.15, 0.70, 0.70], 1.0, 0.04),
                entry("CitroenC3", Compact, [1.95, 0.88, 0.78], 1.0, 0.08),
                entry("SmartFortwo", Compact, [1.35, 0.80, 0.78], 1.0, 0.05),
                entry("MercedesCCC", Sedan, [2.35, 0.95, 0.72], 1.0, 0.09),
                entry("TeslaModel3", Sedan, [2.35, 0.95, 0.72], 1.0, 0.09),
                entry("AudiA2", Sedan, [1.90, 0.88, 0.77], 1.0, 0.07),
                entry("ToyotaPrius", Sedan, [2.25, 0.88, 0.75], 1.0, 0.08),
                entry("LincolnMKZ", Sedan, [2.45, 0.95, 0.75], 1.0, 0.07),
                entry("DodgeCharger", Sedan, [2.50, 0.95, 0.72], 1.0, 0.06),
                entry("Cybertruck", Heavy, [3.10, 1.20, 1.05], 1.0, 0.03),
                entry("CarlaCola", Heavy, [2.60, 1.30, 1.30], 1.0, 0.03),
                entry("VolkswagenT2", Heavy, [2.20, 1.00, 1.00], 1.0, 0.03),
                entry("NissanPatrol", Heavy, [2.60, 1.00, 0.95], 1.0, 0.04),
                entry("JeepWrangler", Heavy, [1.95, 0.95, 0.95], 1.0, 0.04),
                entry("Walker01", Pedestrian, [0.20, 0.25, 0.90], 1.0, 0.7),
                entry("Walker02", Pedestrian, [0.20, 0.25, 0.85], 1.0, 0.15),
                entry("Walker03", Pedestrian, [0.22, 0.28, 0.92], 1.0, 0.1),
                entry("Walker04", Pedestrian, [0.18, 0.24, 0.80], 1.0, 0.05),
            ],
        }
    }
}
