use super::config::COORD_SPAN;
use super::{
    AgentKind, AgentNode, AssetRef, GeneratorConfig, MapId, Pose, SceneGraph, WaypointKind,
};
use crate::error::{Error, Result};
use crate::seed::{self, Rng};
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng as _;
use rand_distr::StandardNormal;
use std::collections::HashSet;

/// Log-probability reported for scenes the generator can never produce.
pub const IMPOSSIBLE: f64 = f64::NEG_INFINITY;

/// Yaw values are emitted on this grid (degrees) so they survive encoding exactly.
const YAW_STEP_TENTHS: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Waypoint {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub kind: WaypointKind,
}

#[derive(Debug, Clone)]
struct MapTables {
    id: MapId,
    roads: Vec<Waypoint>,
    sidewalks: Vec<Waypoint>,
}

/// A validated generator with its waypoint tables expanded.
///
/// Sampling is a pure function of the seed; [`Generator::log_prob`] mirrors the
/// sampling factorization term by term.
#[derive(Debug, Clone)]
pub struct Generator {
    config: GeneratorConfig,
    maps: Vec<MapTables>,
    count_pmf: Vec<f64>,
    ego_asset: AssetRef,
    vehicle_assets: Vec<(AssetRef, f64)>,
    pedestrian_assets: Vec<(AssetRef, f64)>,
}

fn normalized(weights: impl IntoIterator<Item = f64>) -> Vec<f64> {
    let w: Vec<f64> = weights.into_iter().collect();
    let total: f64 = w.iter().sum();
    w.into_iter().map(|x| x / total).collect()
}

fn expand_waypoints(config: &GeneratorConfig, roads: &[super::RoadSpec], kind: WaypointKind) -> Vec<Waypoint> {
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for r in roads.iter().filter(|r| r.kind == kind) {
        let (dx, dy) = (r.to[0] - r.from[0], r.to[1] - r.from[1]);
        let len = dx.hypot(dy);
        let (ux, uy) = if len > 0.0 { (dx / len, dy / len) } else { (1.0, 0.0) };
        let steps = (len / r.spacing + 1e-9).floor() as usize;
        for &off in &r.offsets {
            for s in 0..=steps {
                let along = s as f64 * r.spacing;
                let x = ((r.from[0] + along * ux - off * uy) * 2.0).round() / 2.0;
                let y = ((r.from[1] + along * uy + off * ux) * 2.0).round() / 2.0;
                let key = ((x * 2.0) as i64, (y * 2.0) as i64);
                let inside = |v: f64| v >= config.min_coord && v < config.min_coord + COORD_SPAN;
                if inside(x) && inside(y) && seen.insert(key) {
                    out.push(Waypoint { x, y, z: 0.0, kind });
                }
            }
        }
    }
    out
}

/// Standard normal mass between two z-scores, computed on the side of the
/// mean where the tail is small to avoid cancellation.
fn normal_mass(lo: f64, hi: f64) -> f64 {
    let s = std::f64::consts::SQRT_2;
    if lo >= 0.0 {
        0.5 * (libm::erfc(lo / s) - libm::erfc(hi / s))
    } else if hi <= 0.0 {
        0.5 * (libm::erfc(-hi / s) - libm::erfc(-lo / s))
    } else {
        1.0 - 0.5 * libm::erfc(-lo / s) - 0.5 * libm::erfc(hi / s)
    }
}

impl Generator {
    pub fn new(config: GeneratorConfig) -> Result<Self> {
        config.validate()?;
        let mut maps = Vec::new();
        for m in &config.maps {
            let roads = expand_waypoints(&config, &m.roads, WaypointKind::Road);
            let sidewalks = expand_waypoints(&config, &m.roads, WaypointKind::Sidewalk);
            if roads.is_empty() {
                return Err(Error::Config(format!("map {} has an empty road waypoint set", m.id)));
            }
            if roads.len() < config.vehicle_count.max + 1 {
                return Err(Error::Config(format!(
                    "map {} has {} road waypoints, fewer than the {} needed",
                    m.id,
                    roads.len(),
                    config.vehicle_count.max + 1
                )));
            }
            if sidewalks.len() < config.pedestrians {
                return Err(Error::Config(format!(
                    "map {} has {} sidewalk waypoints, fewer than {} pedestrians",
                    m.id,
                    sidewalks.len(),
                    config.pedestrians
                )));
            }
            maps.push(MapTables {
                id: m.id,
                roads,
                sidewalks,
            });
        }
        let catalog = &config.catalog;
        let ego_asset = catalog.lookup(&config.ego_asset).expect("validated");
        let weighted = |assets: Vec<AssetRef>| -> Vec<(AssetRef, f64)> {
            let w = normalized(assets.iter().map(|&a| catalog.get(a).expect("catalog asset").weight));
            assets.into_iter().zip(w).collect()
        };
        let vehicle_assets = weighted(catalog.vehicle_assets());
        let pedestrian_assets = weighted(catalog.pedestrian_assets());
        Ok(Generator {
            count_pmf: config.vehicle_count.pmf(),
            config,
            maps,
            ego_asset,
            vehicle_assets,
            pedestrian_assets,
        })
    }

    pub fn config(&self) -> &GeneratorConfig {
        &self.config
    }

    pub fn ego_asset(&self) -> AssetRef {
        self.ego_asset
    }

    pub fn waypoints(&self, map: MapId, kind: WaypointKind) -> &[Waypoint] {
        let t = self.maps.iter().find(|t| t.id == map);
        match (t, kind) {
            (Some(t), WaypointKind::Road) => &t.roads,
            (Some(t), WaypointKind::Sidewalk) => &t.sidewalks,
            (None, _) => &[],
        }
    }

    /// Sampling probability of each vehicle asset, in catalog order.
    pub fn vehicle_asset_weights(&self) -> &[(AssetRef, f64)] {
        &self.vehicle_assets
    }

    /// Scene `index` of a generation run seeded with `base_seed`.
    pub fn scene(&self, index: u64, base_seed: u64) -> SceneGraph {
        self.sample(index, seed::split(base_seed, index))
    }

    /// Scenes `0..n` of a generation run.
    pub fn scenes(&self, n: usize, base_seed: u64) -> Vec<SceneGraph> {
        (0..n as u64).map(|i| self.scene(i, base_seed)).collect()
    }

    pub fn sample(&self, id: u64, seed: u64) -> SceneGraph {
        let cfg = &self.config;
        let mut rng = seed::rng(seed);
        let pick = |rng: &mut Rng, weights: Vec<f64>| -> usize {
            WeightedIndex::new(weights).expect("validated weights").sample(rng)
        };

        let map_idx = pick(&mut rng, cfg.maps.iter().map(|m| m.weight).collect());
        let tables = &self.maps[map_idx];
        let weather = cfg.weather_presets[pick(&mut rng, cfg.weather_presets.iter().map(|p| p.weight).collect())].state;
        let camera = cfg.calibrations[pick(&mut rng, cfg.calibrations.iter().map(|c| c.weight).collect())].camera;
        let vehicles = cfg.vehicle_count.min + pick(&mut rng, self.count_pmf.clone());

        let road_slots = rand::seq::index::sample(&mut rng, tables.roads.len(), vehicles + 1);
        let walk_slots = rand::seq::index::sample(&mut rng, tables.sidewalks.len(), cfg.pedestrians);

        let place = |id: u32, kind: AgentKind, asset: AssetRef, wp: Waypoint, yaw: f64| AgentNode {
            id,
            kind,
            asset,
            pose: Pose {
                x: wp.x,
                y: wp.y,
                z: wp.z,
                roll: 0.0,
                yaw,
            },
            extent: cfg.catalog.get(asset).expect("catalog asset").extent,
        };

        let mut slots = road_slots.iter();
        let ego_wp = tables.roads[slots.next().expect("ego slot")];
        let ego_yaw = self.sample_yaw(&mut rng);
        let ego = place(0, AgentKind::Ego, self.ego_asset, ego_wp, ego_yaw);

        let vehicle_weights: Vec<f64> = self.vehicle_assets.iter().map(|(_, w)| *w).collect();
        let mut agents = Vec::with_capacity(vehicles + cfg.pedestrians);
        for (i, slot) in slots.enumerate() {
            let asset = self.vehicle_assets[pick(&mut rng, vehicle_weights.clone())].0;
            let yaw = self.sample_yaw(&mut rng);
            agents.push(place(i as u32 + 1, AgentKind::Vehicle, asset, tables.roads[slot], yaw));
        }
        let walker_weights: Vec<f64> = self.pedestrian_assets.iter().map(|(_, w)| *w).collect();
        for (i, slot) in walk_slots.iter().enumerate() {
            let asset = self.pedestrian_assets[pick(&mut rng, walker_weights.clone())].0;
            let heading = cfg.pedestrian_headings[rng.random_range(0..cfg.pedestrian_headings.len())];
            let id = (vehicles + 1 + i) as u32;
            agents.push(place(id, AgentKind::Pedestrian, asset, tables.sidewalks[slot], heading));
        }

        SceneGraph {
            id,
            seed,
            map: tables.id,
            weather,
            camera,
            ego,
            agents,
        }
    }

    fn sample_yaw(&self, rng: &mut Rng) -> f64 {
        let rot = &self.config.rotation;
        let mode = WeightedIndex::new(&rot.weights).expect("validated").sample(rng);
        let z: f64 = rng.sample(StandardNormal);
        let raw = (rot.means[mode] + rot.sigma * z).rem_euclid(360.0);
        let tenths = (raw * YAW_STEP_TENTHS).floor().min(3599.0);
        tenths / YAW_STEP_TENTHS
    }

    /// Probability mass of the 0.1° yaw cell containing `yaw`.
    pub fn yaw_log_prob(&self, yaw: f64) -> f64 {
        if !(0.0..360.0).contains(&yaw) {
            return IMPOSSIBLE;
        }
        let rot = &self.config.rotation;
        let lo = (yaw * YAW_STEP_TENTHS + 1e-6).floor() / YAW_STEP_TENTHS;
        let hi = lo + 1.0 / YAW_STEP_TENTHS;
        let total: f64 = rot.weights.iter().sum();
        let mut mass = 0.0;
        for (&mean, &w) in rot.means.iter().zip(&rot.weights) {
            for k in -2..=2 {
                let shift = 360.0 * f64::from(k) - mean;
                mass += w / total * normal_mass((lo + shift) / rot.sigma, (hi + shift) / rot.sigma);
            }
        }
        if mass > 0.0 {
            mass.ln()
        } else {
            IMPOSSIBLE
        }
    }

    /// Exact log-probability of `scene` under [`Generator::sample`], or
    /// [`IMPOSSIBLE`] when the scene is outside the generator's support.
    pub fn log_prob(&self, scene: &SceneGraph) -> f64 {
        self.try_log_prob(scene).unwrap_or(IMPOSSIBLE)
    }

    fn try_log_prob(&self, scene: &SceneGraph) -> Option<f64> {
        let cfg = &self.config;
        let ln_weight = |weights: &[f64], i: usize| -> f64 {
            let total: f64 = weights.iter().sum();
            (weights[i] / total).ln()
        };

        let map_idx = cfg.maps.iter().position(|m| m.id == scene.map)?;
        let tables = &self.maps[map_idx];
        let mut lp = ln_weight(&cfg.maps.iter().map(|m| m.weight).collect::<Vec<_>>(), map_idx);
        let preset = cfg.preset_index(&scene.weather)?;
        lp += ln_weight(&cfg.weather_presets.iter().map(|p| p.weight).collect::<Vec<_>>(), preset);
        let calib = cfg.calibration_index(&scene.camera)?;
        lp += ln_weight(&cfg.calibrations.iter().map(|c| c.weight).collect::<Vec<_>>(), calib);

        let vehicles = scene.vehicle_count();
        let pedestrians = scene.pedestrian_count();
        if pedestrians != cfg.pedestrians || vehicles + pedestrians != scene.agents.len() {
            return None;
        }
        if vehicles < cfg.vehicle_count.min || vehicles > cfg.vehicle_count.max {
            return None;
        }
        lp += self.count_pmf[vehicles - cfg.vehicle_count.min].ln();
        // vehicles come first, then pedestrians
        if scene.agents[..vehicles].iter().any(|a| a.kind != AgentKind::Vehicle) {
            return None;
        }

        let extent_ok = |a: &AgentNode| cfg.catalog.get(a.asset).is_some_and(|e| e.extent == a.extent);
        let at_waypoint = |a: &AgentNode, set: &[Waypoint]| {
            a.pose.roll == 0.0 && set.iter().any(|w| w.x == a.pose.x && w.y == a.pose.y && w.z == a.pose.z)
        };

        // ego plus vehicles occupy distinct road waypoints, drawn without replacement
        let road_agents = std::iter::once(&scene.ego).chain(&scene.agents[..vehicles]);
        let mut used = HashSet::new();
        for (i, a) in road_agents.enumerate() {
            if !at_waypoint(a, &tables.roads) || !extent_ok(a) {
                return None;
            }
            if !used.insert((a.pose.x.to_bits(), a.pose.y.to_bits())) {
                return None;
            }
            lp -= ((tables.roads.len() - i) as f64).ln();
            lp += self.yaw_log_prob(a.pose.yaw);
        }
        if scene.ego.asset != self.ego_asset || scene.ego.kind != AgentKind::Ego {
            return None;
        }
        for a in &scene.agents[..vehicles] {
            let w = self.vehicle_assets.iter().find(|(r, _)| *r == a.asset)?.1;
            lp += w.ln();
        }

        let mut used = HashSet::new();
        let headings = &cfg.pedestrian_headings;
        for (i, a) in scene.agents[vehicles..].iter().enumerate() {
            if !at_waypoint(a, &tables.sidewalks) || !extent_ok(a) {
                return None;
            }
            if !used.insert((a.pose.x.to_bits(), a.pose.y.to_bits())) {
                return None;
            }
            lp -= ((tables.sidewalks.len() - i) as f64).ln();
            let w = self.pedestrian_assets.iter().find(|(r, _)| *r == a.asset)?.1;
            lp += w.ln();
            let hits = headings.iter().filter(|&&h| h == a.pose.yaw).count();
            if hits == 0 {
                return None;
            }
            lp += (hits as f64 / headings.len() as f64).ln();
        }
        lp.is_finite().then_some(lp)
    }
}

/// Sample one scene from `config`. Builds a [`Generator`] on every call; keep
/// a `Generator` around when sampling many scenes.
pub fn sample_scene(config: &GeneratorConfig, seed: u64) -> Result<SceneGraph> {
    Ok(Generator::new(config.clone())?.sample(0, seed))
}

pub fn scene_distribution_log_prob(config: &GeneratorConfig, scene: &SceneGraph) -> Result<f64> {
    Ok(Generator::new(config.clone())?.log_prob(scene))
}
