//! Ranking intervention groups by how often they drive large score changes.

use super::{Category, InterventionRecord};
use crate::error::{Error, Result};
use crate::group::GroupKey;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AggregateParams {
    pub threshold: f64,
    /// Groups with fewer occurrences are dropped.
    pub min_count: usize,
    /// Descending percent cut points; a group's tier is the number of cut
    /// points above its percent (0 = top tier).
    pub tier_cuts: Vec<f64>,
    pub include_location: bool,
    /// Count a record twice for its group when source and target fall in the
    /// same group.
    pub count_same_group_twice: bool,
}

impl Default for AggregateParams {
    fn default() -> Self {
        AggregateParams {
            threshold: 0.2,
            min_count: 20,
            tier_cuts: vec![10.0, 5.0],
            include_location: false,
            count_same_group_twice: false,
        }
    }
}

impl AggregateParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.threshold > 0.0) {
            return Err(Error::Config(format!("threshold must be positive, got {}", self.threshold)));
        }
        if self.min_count == 0 {
            return Err(Error::Config("min_count must be at least 1".into()));
        }
        if self.tier_cuts.windows(2).any(|w| !(w[0] > w[1])) {
            return Err(Error::Config("tier cut points must be strictly decreasing".into()));
        }
        Ok(())
    }

    pub fn tier_of(&self, percent: f64) -> usize {
        self.tier_cuts.iter().take_while(|&&cut| percent < cut).count()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupStats {
    pub group: GroupKey,
    pub total: usize,
    pub events: usize,
    pub percent: f64,
    pub tier: usize,
}

/// Every record adds an occurrence to its source and target groups. A
/// record with `delta ≤ −threshold` is an event for its target; one with
/// `delta ≥ threshold` is an event for its source.
pub fn aggregate_groups(records: &[InterventionRecord], params: &AggregateParams) -> Result<Vec<GroupStats>> {
    params.validate()?;
    let mut tally: BTreeMap<GroupKey, (usize, usize)> = BTreeMap::new();
    for r in records {
        if r.edit.category == Category::Location && !params.include_location {
            continue;
        }
        let source = r.edit.source.group();
        let target = r.edit.target.group();
        let same = source == target;
        tally.entry(source).or_default().0 += 1;
        if !same || params.count_same_group_twice {
            tally.entry(target).or_default().0 += 1;
        }
        if r.delta <= -params.threshold {
            tally.entry(target).or_default().1 += 1;
        } else if r.delta >= params.threshold {
            tally.entry(source).or_default().1 += 1;
        }
    }
    let mut out: Vec<GroupStats> = tally
        .into_iter()
        .filter(|(_, (total, _))| *total >= params.min_count)
        .map(|(group, (total, events))| {
            let percent = 100.0 * events as f64 / total as f64;
            GroupStats {
                group,
                total,
                events,
                percent,
                tier: params.tier_of(percent),
            }
        })
        .collect();
    out.sort_by(|a, b| {
        b.percent
            .total_cmp(&a.percent)
            .then(b.total.cmp(&a.total))
            .then(a.group.cmp(&b.group))
    });
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::super::{Edit, EditValue, Strategy};
    use super::*;
    use crate::scene::{AssetRef, Family};

    fn rec(source: EditValue, target: EditValue, delta: f64) -> InterventionRecord {
        InterventionRecord {
            trial: 0,
            scene_id: 0,
            edit: Edit {
                category: source.category(),
                agent_id: Some(1),
                source,
                target,
            },
            score_before: 0.5,
            score_after: 0.5 + delta,
            delta,
            strategy: Strategy::Mlm,
        }
    }

    #[test]
    fn credits_target_on_drop_and_source_on_gain() {
        let bike = EditValue::Asset(AssetRef::new(Family::Bike, 0));
        let sedan = EditValue::Asset(AssetRef::new(Family::Sedan, 0));
        let mut records = vec![rec(sedan, bike, -0.3); 6];
        records.extend(vec![rec(sedan, bike, 0.0); 24]);
        let params = AggregateParams {
            min_count: 1,
            ..Default::default()
        };
        let stats = aggregate_groups(&records, &params).unwrap();
        assert_eq!(stats[0].group, GroupKey::Asset(AssetRef::new(Family::Bike, 0)));
        assert_eq!((stats[0].events, stats[0].total), (6, 30));
        assert_eq!(stats[0].percent, 20.0);
        assert_eq!(stats[0].tier, 0);
        assert_eq!(stats[1].percent, 0.0);
        assert_eq!(stats[1].tier, 2);

        let gain = aggregate_groups(&[rec(bike, sedan, 0.4)], &params).unwrap();
        assert_eq!(gain[0].group, GroupKey::Asset(AssetRef::new(Family::Bike, 0)));
        assert_eq!(gain[0].events, 1);
    }

    #[test]
    fn min_count_filters() {
        let a = EditValue::Weather(0);
        let b = EditValue::Weather(1);
        let records = vec![rec(a, b, 0.0); 19];
        assert!(aggregate_groups(&records, &AggregateParams::default()).unwrap().is_empty());
    }

    #[test]
    fn same_bin_counts_once() {
        let r = rec(EditValue::Yaw(171.0), EditValue::Yaw(175.5), 0.0);
        let params = AggregateParams {
            min_count: 1,
            ..Default::default()
        };
        assert_eq!(aggregate_groups(std::slice::from_ref(&r), &params).unwrap()[0].total, 1);
        let twice = AggregateParams {
            count_same_group_twice: true,
            ..params
        };
        assert_eq!(aggregate_groups(&[r], &twice).unwrap()[0].total, 2);
    }
}
