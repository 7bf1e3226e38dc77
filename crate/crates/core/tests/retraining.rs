//! Smaller-scale retraining curves.

use counterscene::curation::{build_group_dataset, DatasetSpec};
use counterscene::detector::{coco_thresholds, DetectorConstants, DetectorProfile, InjectionSpec};
use counterscene::geometry::SensorConfig;
use counterscene::group::GroupKey;
use counterscene::scene::GeneratorConfig;
use counterscene::world::World;

#[test]
fn adding_group_scenes_is_monotone_for_that_group() {
    let world = World::new(GeneratorConfig::default(), SensorConfig::default()).unwrap();
    let gazelle = GroupKey::Asset(world.config().catalog.lookup("GazelleBike").unwrap());
    let injection = InjectionSpec {
        assets: vec!["GazelleBike".into()],
        rotations: vec![],
        weather: vec![],
    }
    .resolve(world.config())
    .unwrap();
    let pool = world.generator().scenes(300, 41);
    let eval: Vec<_> = world
        .labeled(build_group_dataset(&world, &pool, gazelle, 42).unwrap())
        .unwrap()
        .into_iter()
        .map(|(s, l)| {
            let r = gazelle.restrict(&s, &l, world.config());
            (s, r)
        })
        .collect();
    let ap: Vec<f64> = [0, 500, 1000]
        .iter()
        .map(|&n| {
            let m = DatasetSpec::iid(2000, 43).with_addition(gazelle, n).manifest(&world).unwrap();
            let d = DetectorProfile::fit(&m, DetectorConstants::default(), injection.clone(), world.config(), 7).unwrap();
            d.evaluate_ap_over(&eval, &coco_thresholds()).unwrap().ap
        })
        .collect();
    assert!(ap[0] <= ap[1] && ap[1] <= ap[2], "{ap:?}");
    assert!(ap[2] > ap[0], "{ap:?}");
}
