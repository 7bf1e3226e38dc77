//! Scene graphs to flat token sequences and back.
//!
//! Layout: 10 weather tokens, 5 camera tokens, 15 ego pose tokens, then 17
//! tokens per non-ego agent (asset family, asset model, 15 pose tokens). Each
//! pose scalar (x, y, z, roll, yaw) takes three digit tokens: hundreds, ones
//! (two decimal digits) and tenths, so `value = 100·w0 + w1 + 0.1·w2`.
//! Coordinates are stored as offsets from `min_coord`.
//!
//! Every slot class owns a disjoint range of the shared vocabulary, so a token
//! index alone identifies its class.

use crate::error::{Error, Result};
use crate::scene::{
    AgentKind, AgentNode, AssetCatalog, AssetRef, CameraModel, Family, GeneratorConfig, Pose, SceneGraph,
    WeatherState, COORD_SPAN,
};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::fmt;

pub type Token = u32;

pub const WEATHER_TOKENS: usize = 10;
pub const CAMERA_TOKENS: usize = 5;
pub const POSE_TOKENS: usize = 15;
pub const HEADER_TOKENS: usize = WEATHER_TOKENS + CAMERA_TOKENS + POSE_TOKENS;
pub const AGENT_TOKENS: usize = 2 + POSE_TOKENS;

/// Upper bound (exclusive) of encodable angles, in degrees.
pub const ANGLE_SPAN: f64 = 360.0;

/// Values within this many tenths below a grid point snap up to it, absorbing
/// binary representation error of decimal inputs.
const SNAP_TENTHS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SlotClass {
    WeatherAttr(u8),
    CameraAttr(u8),
    AssetFamily,
    AssetModel,
    CoordHundreds,
    CoordOnes,
    CoordDecimal,
    RotHundreds,
    RotOnes,
    RotDecimal,
}

impl fmt::Display for SlotClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SlotClass::WeatherAttr(i) => write!(f, "weather_attr_{i}"),
            SlotClass::CameraAttr(j) => write!(f, "camera_attr_{j}"),
            SlotClass::AssetFamily => f.write_str("asset_family"),
            SlotClass::AssetModel => f.write_str("asset_model"),
            SlotClass::CoordHundreds => f.write_str("coord_hundreds"),
            SlotClass::CoordOnes => f.write_str("coord_ones"),
            SlotClass::CoordDecimal => f.write_str("coord_decimal"),
            SlotClass::RotHundreds => f.write_str("rot_hundreds"),
            SlotClass::RotOnes => f.write_str("rot_ones"),
            SlotClass::RotDecimal => f.write_str("rot_decimal"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PoseScalar {
    X,
    Y,
    Z,
    Roll,
    Yaw,
}

impl PoseScalar {
    pub const ALL: [PoseScalar; 5] = [PoseScalar::X, PoseScalar::Y, PoseScalar::Z, PoseScalar::Roll, PoseScalar::Yaw];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn is_angle(self) -> bool {
        matches!(self, PoseScalar::Roll | PoseScalar::Yaw)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SlotRange {
    pub class: SlotClass,
    pub offset: Token,
    pub size: u32,
}

impl SlotRange {
    pub fn contains(&self, token: Token) -> bool {
        token >= self.offset && token < self.offset + self.size
    }
}

/// Self-describing vocabulary layout. Persisted next to token files and
/// hashed into model artifacts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CodecSchema {
    pub min_coord: f64,
    /// Distinct values of each weather attribute over the presets, ascending.
    pub weather_values: Vec<Vec<f64>>,
    /// Distinct values of each camera attribute over the calibrations, ascending.
    pub camera_values: Vec<Vec<f64>>,
    /// Number of models per family, indexed by [`Family::index`].
    pub models_per_family: Vec<u32>,
    pub slots: Vec<SlotRange>,
}

fn distinct_sorted(values: impl Iterator<Item = f64>) -> Vec<f64> {
    let mut v: Vec<f64> = values.collect();
    v.sort_by(f64::total_cmp);
    v.dedup();
    v
}

impl CodecSchema {
    pub fn from_config(config: &GeneratorConfig) -> Result<Self> {
        config.validate()?;
        let weather_values = (0..WEATHER_TOKENS)
            .map(|i| distinct_sorted(config.weather_presets.iter().map(|p| p.state.to_array()[i])))
            .collect();
        let camera_values = (0..CAMERA_TOKENS)
            .map(|j| distinct_sorted(config.calibrations.iter().map(|c| c.camera.to_array()[j])))
            .collect();
        let models_per_family = Family::ALL
            .iter()
            .map(|&f| config.catalog.model_count(f) as u32)
            .collect();
        Ok(Self::assemble(config.min_coord, weather_values, camera_values, models_per_family))
    }

    fn assemble(
        min_coord: f64,
        weather_values: Vec<Vec<f64>>,
        camera_values: Vec<Vec<f64>>,
        models_per_family: Vec<u32>,
    ) -> Self {
        let mut sizes: Vec<(SlotClass, u32)> = Vec::new();
        for (i, v) in weather_values.iter().enumerate() {
            sizes.push((SlotClass::WeatherAttr(i as u8), v.len() as u32));
        }
        for (j, v) in camera_values.iter().enumerate() {
            sizes.push((SlotClass::CameraAttr(j as u8), v.len() as u32));
        }
        let max_models = models_per_family.iter().copied().max().unwrap_or(0);
        sizes.extend([
            (SlotClass::AssetFamily, Family::ALL.len() as u32),
            (SlotClass::AssetModel, max_models),
            (SlotClass::CoordHundreds, 6),
            (SlotClass::CoordOnes, 100),
            (SlotClass::CoordDecimal, 10),
            (SlotClass::RotHundreds, 4),
            (SlotClass::RotOnes, 100),
            (SlotClass::RotDecimal, 10),
        ]);
        let mut offset = 0;
        let slots = sizes
            .into_iter()
            .map(|(class, size)| {
                let r = SlotRange { class, offset, size };
                offset += size;
                r
            })
            .collect();
        CodecSchema {
            min_coord,
            weather_values,
            camera_values,
            models_per_family,
            slots,
        }
    }

    pub fn vocab_size(&self) -> u32 {
        self.slots.iter().map(|s| s.size).sum()
    }

    pub fn range(&self, class: SlotClass) -> SlotRange {
        *self.slots.iter().find(|s| s.class == class).expect("every slot class has a range")
    }

    /// The class owning a token index, if any.
    pub fn class_of_token(&self, token: Token) -> Option<SlotClass> {
        self.slots.iter().find(|s| s.contains(token)).map(|s| s.class)
    }

    /// Slot class at `position` of a sequence, independent of its length.
    pub fn class_at(&self, position: usize) -> SlotClass {
        if position < WEATHER_TOKENS {
            return SlotClass::WeatherAttr(position as u8);
        }
        if position < WEATHER_TOKENS + CAMERA_TOKENS {
            return SlotClass::CameraAttr((position - WEATHER_TOKENS) as u8);
        }
        let pose_offset = if position < HEADER_TOKENS {
            position - WEATHER_TOKENS - CAMERA_TOKENS
        } else {
            match (position - HEADER_TOKENS) % AGENT_TOKENS {
                0 => return SlotClass::AssetFamily,
                1 => return SlotClass::AssetModel,
                k => k - 2,
            }
        };
        digit_class(PoseScalar::ALL[pose_offset / 3], pose_offset % 3)
    }

    /// Slot class of every position in a sequence of `len` tokens.
    pub fn layout(&self, len: usize) -> Vec<SlotClass> {
        (0..len).map(|p| self.class_at(p)).collect()
    }

    /// Hex SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("schema serializes");
        hex::encode(Sha256::digest(&json))
    }
}

fn digit_class(scalar: PoseScalar, digit: usize) -> SlotClass {
    match (scalar.is_angle(), digit) {
        (false, 0) => SlotClass::CoordHundreds,
        (false, 1) => SlotClass::CoordOnes,
        (false, _) => SlotClass::CoordDecimal,
        (true, 0) => SlotClass::RotHundreds,
        (true, 1) => SlotClass::RotOnes,
        (true, _) => SlotClass::RotDecimal,
    }
}

/// Number of non-ego agents a sequence of `len` tokens encodes.
pub fn agent_count(len: usize) -> Result<usize> {
    if len < HEADER_TOKENS || (len - HEADER_TOKENS) % AGENT_TOKENS != 0 {
        return Err(Error::Layout(format!(
            "length {len} is not {HEADER_TOKENS} + {AGENT_TOKENS}·n"
        )));
    }
    Ok((len - HEADER_TOKENS) / AGENT_TOKENS)
}

pub fn sequence_len(agents: usize) -> usize {
    HEADER_TOKENS + AGENT_TOKENS * agents
}

/// Positions of the weather tokens.
pub fn weather_positions() -> std::ops::Range<usize> {
    0..WEATHER_TOKENS
}

/// Position of agent `index`'s block (its family token).
pub fn agent_base(index: usize) -> usize {
    HEADER_TOKENS + AGENT_TOKENS * index
}

/// Family and model token positions of agent `index`.
pub fn asset_positions(index: usize) -> [usize; 2] {
    let b = agent_base(index);
    [b, b + 1]
}

/// Digit positions of one pose scalar; `agent = None` addresses the ego.
pub fn pose_positions(agent: Option<usize>, scalar: PoseScalar) -> [usize; 3] {
    let start = match agent {
        None => WEATHER_TOKENS + CAMERA_TOKENS,
        Some(i) => agent_base(i) + 2,
    } + 3 * scalar.index();
    [start, start + 1, start + 2]
}

/// Split a value in `[0, span)` into (hundreds, ones, tenths) by truncation.
pub fn encode_scalar_in(v: f64, span: f64, what: &'static str) -> Result<[u8; 3]> {
    if !(v >= 0.0 && v < span) {
        return Err(Error::Range {
            what,
            value: v,
            min: 0.0,
            max: span,
        });
    }
    let tenths = ((v * 10.0 + SNAP_TENTHS).floor() as u32).min((span * 10.0) as u32 - 1);
    Ok([(tenths / 1000) as u8, (tenths / 10 % 100) as u8, (tenths % 10) as u8])
}

/// Coordinate offset in `[0, 600)` to digits.
pub fn encode_scalar(v: f64) -> Result<[u8; 3]> {
    encode_scalar_in(v, COORD_SPAN, "coordinate offset")
}

/// Digits back to a value; the result is `tenths / 10` computed in one
/// division, so grid values come back bit-exact.
pub fn decode_scalar_in(digits: [u8; 3], span: f64, what: &'static str) -> Result<f64> {
    let [w0, w1, w2] = digits;
    if w1 > 99 || w2 > 9 || f64::from(w0) * 100.0 >= span {
        return Err(Error::Range {
            what,
            value: f64::from(w0) * 100.0 + f64::from(w1) + f64::from(w2) / 10.0,
            min: 0.0,
            max: span,
        });
    }
    let tenths = 1000 * u32::from(w0) + 10 * u32::from(w1) + u32::from(w2);
    let v = f64::from(tenths) / 10.0;
    if v >= span {
        return Err(Error::Range {
            what,
            value: v,
            min: 0.0,
            max: span,
        });
    }
    Ok(v)
}

pub fn decode_scalar(digits: [u8; 3]) -> Result<f64> {
    decode_scalar_in(digits, COORD_SPAN, "coordinate offset")
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TokenSequence {
    pub tokens: Vec<Token>,
}

impl TokenSequence {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

/// Encoder/decoder bound to one schema and asset catalog.
#[derive(Debug, Clone)]
pub struct Codec {
    schema: CodecSchema,
    catalog: AssetCatalog,
}

impl Codec {
    pub fn new(config: &GeneratorConfig) -> Result<Self> {
        Ok(Codec {
            schema: CodecSchema::from_config(config)?,
            catalog: config.catalog.clone(),
        })
    }

    pub fn schema(&self) -> &CodecSchema {
        &self.schema
    }

    pub fn catalog(&self) -> &AssetCatalog {
        &self.catalog
    }

    /// Token for a local index within a slot class.
    pub fn token(&self, class: SlotClass, local: u32) -> Token {
        self.schema.range(class).offset + local
    }

    /// Local index of `token`, checked against the class expected at `position`.
    pub fn local(&self, position: usize, token: Token) -> Result<u32> {
        let range = self.schema.range(self.schema.class_at(position));
        if !range.contains(token) {
            return Err(Error::Layout(format!(
                "token {token} at position {position} is outside {}",
                range.class
            )));
        }
        Ok(token - range.offset)
    }

    fn push_pose(&self, out: &mut Vec<Token>, pose: &Pose) -> Result<()> {
        for scalar in PoseScalar::ALL {
            let v = pose.to_array()[scalar.index()];
            let digits = if scalar.is_angle() {
                encode_scalar_in(v, ANGLE_SPAN, "angle")?
            } else {
                encode_scalar(v - self.schema.min_coord)?
            };
            for (d, &w) in digits.iter().enumerate() {
                out.push(self.token(digit_class(scalar, d), u32::from(w)));
            }
        }
        Ok(())
    }

    pub fn encode(&self, scene: &SceneGraph) -> Result<TokenSequence> {
        let mut tokens = Vec::with_capacity(sequence_len(scene.agents.len()));
        for (i, (v, values)) in scene.weather.to_array().iter().zip(&self.schema.weather_values).enumerate() {
            let idx = values.iter().position(|x| x == v).ok_or_else(|| Error::Encoding {
                attribute: WeatherState::ATTRIBUTES[i].to_string(),
                reason: format!("value {v} is not in any weather preset"),
            })?;
            tokens.push(self.token(SlotClass::WeatherAttr(i as u8), idx as u32));
        }
        for (j, (v, values)) in scene.camera.to_array().iter().zip(&self.schema.camera_values).enumerate() {
            let idx = values.iter().position(|x| x == v).ok_or_else(|| Error::Encoding {
                attribute: CameraModel::ATTRIBUTES[j].to_string(),
                reason: format!("value {v} is not in any calibration"),
            })?;
            tokens.push(self.token(SlotClass::CameraAttr(j as u8), idx as u32));
        }
        self.push_pose(&mut tokens, &scene.ego.pose)?;
        for a in &scene.agents {
            if !self.catalog.contains(a.asset) {
                return Err(Error::Encoding {
                    attribute: format!("asset of agent {}", a.id),
                    reason: format!("{:?} is not in the catalog", a.asset),
                });
            }
            tokens.push(self.token(SlotClass::AssetFamily, a.asset.family.index() as u32));
            tokens.push(self.token(SlotClass::AssetModel, u32::from(a.asset.model)));
            self.push_pose(&mut tokens, &a.pose)
                .map_err(|e| Error::Encoding {
                    attribute: format!("pose of agent {}", a.id),
                    reason: e.to_string(),
                })?;
        }
        Ok(TokenSequence { tokens })
    }

    fn decode_pose(&self, seq: &TokenSequence, agent: Option<usize>) -> Result<Pose> {
        let mut values = [0.0; 5];
        for scalar in PoseScalar::ALL {
            let pos = pose_positions(agent, scalar);
            let mut digits = [0u8; 3];
            for (d, &p) in pos.iter().enumerate() {
                digits[d] = self.local(p, seq.tokens[p])? as u8;
            }
            values[scalar.index()] = if scalar.is_angle() {
                decode_scalar_in(digits, ANGLE_SPAN, "angle")?
            } else {
                self.schema.min_coord + decode_scalar(digits)?
            };
        }
        Ok(Pose::from_array(values))
    }

    /// Rebuild a scene from tokens. `template` supplies what the tokens do not
    /// carry: ids, map, seeds, and the ego's asset.
    pub fn decode(&self, seq: &TokenSequence, template: &SceneGraph) -> Result<SceneGraph> {
        let n = agent_count(seq.len())?;
        if n != template.agents.len() {
            return Err(Error::Layout(format!(
                "sequence has {n} agents but the template has {}",
                template.agents.len()
            )));
        }
        let mut weather = [0.0; WEATHER_TOKENS];
        for (i, w) in weather.iter_mut().enumerate() {
            *w = self.schema.weather_values[i][self.local(i, seq.tokens[i])? as usize];
        }
        let mut camera = [0.0; CAMERA_TOKENS];
        for (j, c) in camera.iter_mut().enumerate() {
            let p = WEATHER_TOKENS + j;
            *c = self.schema.camera_values[j][self.local(p, seq.tokens[p])? as usize];
        }
        let mut scene = template.clone();
        scene.weather = WeatherState::from_array(weather);
        scene.camera = CameraModel::from_array(camera);
        scene.ego.pose = self.decode_pose(seq, None)?;
        for (i, agent) in scene.agents.iter_mut().enumerate() {
            let [fp, mp] = asset_positions(i);
            let family = Family::from_index(self.local(fp, seq.tokens[fp])? as usize)
                .ok_or_else(|| Error::Layout(format!("unknown asset family at position {fp}")))?;
            let model = self.local(mp, seq.tokens[mp])? as u8;
            let asset = AssetRef::new(family, model);
            let entry = self
                .catalog
                .get(asset)
                .ok_or_else(|| Error::Layout(format!("unknown asset index {family:?}/{model} at position {fp}")))?;
            *agent = AgentNode {
                id: agent.id,
                kind: if family.is_vehicle() {
                    AgentKind::Vehicle
                } else {
                    AgentKind::Pedestrian
                },
                asset,
                pose: self.decode_pose(seq, Some(i))?,
                extent: entry.extent,
            };
        }
        Ok(scene)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::Generator;

    #[test]
    fn scalar_examples() {
        assert_eq!(encode_scalar(0.0).unwrap(), [0, 0, 0]);
        assert_eq!(encode_scalar(123.47).unwrap(), [1, 23, 4]);
        assert_eq!(encode_scalar(599.99).unwrap(), [5, 99, 9]);
        assert!(encode_scalar(600.0).is_err());
        assert!(encode_scalar(-0.01).is_err());
        assert!((decode_scalar([1, 23, 4]).unwrap() - 123.4).abs() < 1e-9);
        assert_eq!(decode_scalar([0, 0, 0]).unwrap(), 0.0);
        assert!(decode_scalar([6, 0, 0]).is_err());
        assert!(decode_scalar([0, 100, 0]).is_err());
        assert!(decode_scalar_in([3, 60, 0], ANGLE_SPAN, "angle").is_err());
        assert_eq!(decode_scalar_in([3, 59, 9], ANGLE_SPAN, "angle").unwrap(), 359.9);
    }

    #[test]
    fn slot_classes_partition_vocab() {
        let schema = CodecSchema::from_config(&GeneratorConfig::default()).unwrap();
        let mut next = 0;
        for s in &schema.slots {
            assert_eq!(s.offset, next);
            assert!(s.size > 0);
            next += s.size;
        }
        assert_eq!(schema.range(SlotClass::CoordHundreds).size, 6);
        assert_eq!(schema.range(SlotClass::RotHundreds).size, 4);
        for t in 0..schema.vocab_size() {
            let owners = schema.slots.iter().filter(|s| s.contains(t)).count();
            assert_eq!(owners, 1);
        }
    }

    #[test]
    fn layout_lengths() {
        assert_eq!(sequence_len(0), 30);
        assert_eq!(sequence_len(12), 234);
        assert!(agent_count(31).is_err());
        assert_eq!(agent_count(47).unwrap(), 1);
    }

    #[test]
    fn scene_round_trip_is_exact() {
        let cfg = GeneratorConfig::default();
        let g = Generator::new(cfg.clone()).unwrap();
        let codec = Codec::new(&cfg).unwrap();
        for i in 0..50 {
            let s = g.scene(i, 99);
            let seq = codec.encode(&s).unwrap();
            assert_eq!(seq.len(), sequence_len(s.agents.len()));
            let back = codec.decode(&seq, &s).unwrap();
            assert_eq!(back, s);
            assert_eq!(codec.encode(&back).unwrap(), seq);
        }
    }

    #[test]
    fn unknown_weather_names_attribute() {
        let cfg = GeneratorConfig::default();
        let g = Generator::new(cfg.clone()).unwrap();
        let codec = Codec::new(&cfg).unwrap();
        let mut s = g.scene(0, 1);
        s.weather.wind = 0.77;
        match codec.encode(&s) {
            Err(Error::Encoding { attribute, .. }) => assert_eq!(attribute, "wind"),
            other => panic!("unexpected {other:?}"),
        }
    }
}
