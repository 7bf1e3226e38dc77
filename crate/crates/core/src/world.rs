//! The simulated world: generator, codec and sensor bundled together, with
//! the label-detect-score loop every experiment repeats.

use crate::codec::Codec;
use crate::detector::{DetectorProfile, Prediction};
use crate::error::Result;
use crate::geometry::{derive_labels_with, LabelSet, SensorConfig};
use crate::scene::{Generator, GeneratorConfig, SceneGraph};
use crate::score::{score_example, ScoreReport};

#[derive(Debug, Clone)]
pub struct World {
    generator: Generator,
    codec: Codec,
    sensor: SensorConfig,
}

/// One scene seen through the sensor and the detector.
#[derive(Debug, Clone)]
pub struct Observation {
    pub labels: LabelSet,
    pub predictions: Vec<Prediction>,
    pub report: ScoreReport,
}

impl World {
    pub fn new(config: GeneratorConfig, sensor: SensorConfig) -> Result<Self> {
        sensor.validate()?;
        let codec = Codec::new(&config)?;
        Ok(World {
            generator: Generator::new(config)?,
            codec,
            sensor,
        })
    }

    pub fn config(&self) -> &GeneratorConfig {
        self.generator.config()
    }

    pub fn generator(&self) -> &Generator {
        &self.generator
    }

    pub fn codec(&self) -> &Codec {
        &self.codec
    }

    pub fn sensor(&self) -> &SensorConfig {
        &self.sensor
    }

    pub fn labels(&self, scene: &SceneGraph) -> Result<LabelSet> {
        derive_labels_with(scene, &self.sensor)
    }

    pub fn observe(&self, detector: &DetectorProfile, scene: &SceneGraph) -> Result<Observation> {
        let labels = self.labels(scene)?;
        let predictions = detector.detect(scene, &labels);
        let report = score_example(&predictions, &labels)?;
        Ok(Observation {
            labels,
            predictions,
            report,
        })
    }

    pub fn score(&self, detector: &DetectorProfile, scene: &SceneGraph) -> Result<f64> {
        Ok(self.observe(detector, scene)?.report.score)
    }

    /// Scenes paired with their labels.
    pub fn labeled(&self, scenes: Vec<SceneGraph>) -> Result<Vec<(SceneGraph, LabelSet)>> {
        scenes
            .into_iter()
            .map(|s| {
                let l = self.labels(&s)?;
                Ok((s, l))
            })
            .collect()
    }
}
