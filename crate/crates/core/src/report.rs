//! Tables, histograms and curves rendered from result files.
//!
//! CSV rows are the source of truth; text tables and SVG plots are derived
//! from them and are byte-for-byte deterministic.

use crate::error::{Error, Result};
use crate::intervention::GroupStats;
use crate::scene::GeneratorConfig;
use crate::stats::histogram;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt::Write as _;

/// One row of the group ranking CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupRow {
    pub group: String,
    pub tier: usize,
    pub percent: f64,
    pub events: usize,
    pub total: usize,
}

impl GroupRow {
    pub fn from_stats(stats: &[GroupStats], config: &GeneratorConfig) -> Vec<GroupRow> {
        stats
            .iter()
            .map(|s| GroupRow {
                group: s.group.label(config),
                tier: s.tier,
                percent: s.percent,
                events: s.events,
                total: s.total,
            })
            .collect()
    }
}

/// Tiered text table: `Intervention | Percent > τ | Total`, one block per
/// tier, rows in file order.
pub fn intervention_table(rows: &[GroupRow], threshold: f64, tier_cuts: &[f64]) -> String {
    let heading = format!("Percent > {threshold}");
    let width = rows.iter().map(|r| r.group.len()).max().unwrap_or(0).max("Intervention".len());
    let mut out = String::new();
    let _ = writeln!(out, "{:<width$} | {heading} | Total", "Intervention");
    let _ = writeln!(out, "{}-|-{}-|------", "-".repeat(width), "-".repeat(heading.len()));
    let mut tiers: BTreeMap<usize, Vec<&GroupRow>> = BTreeMap::new();
    for r in rows {
        tiers.entry(r.tier).or_default().push(r);
    }
    for (tier, members) in tiers {
        let _ = writeln!(out, "[{}]", tier_name(tier, tier_cuts));
        for r in members {
            let _ = writeln!(
                out,
                "{:<width$} | {:>w2$.2} | {}",
                r.group,
                r.percent,
                r.total,
                w2 = heading.len()
            );
        }
    }
    out
}

fn tier_name(tier: usize, cuts: &[f64]) -> String {
    match (tier.checked_sub(1).and_then(|i| cuts.get(i)), cuts.get(tier)) {
        (None, Some(lo)) => format!("percent >= {lo}"),
        (Some(hi), Some(lo)) => format!("{lo} <= percent < {hi}"),
        (Some(hi), None) => format!("percent < {hi}"),
        (None, None) => "all".to_string(),
    }
}

/// One histogram bin with the mass of each compared source.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistogramRow {
    pub bin_start: f64,
    pub original: f64,
    pub mlm: f64,
    pub random: f64,
}

pub fn histogram_rows(original: &[f64], mlm: &[f64], random: &[f64], lo: f64, hi: f64, bins: usize) -> Vec<HistogramRow> {
    let (o, m, r) = (
        histogram(original, lo, hi, bins),
        histogram(mlm, lo, hi, bins),
        histogram(random, lo, hi, bins),
    );
    let width = (hi - lo) / bins as f64;
    (0..bins)
        .map(|i| HistogramRow {
            bin_start: lo + width * i as f64,
            original: o[i],
            mlm: m[i],
            random: r[i],
        })
        .collect()
}

const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];
const PLOT_W: f64 = 640.0;
const PLOT_H: f64 = 360.0;
const MARGIN: f64 = 48.0;

fn svg_open(out: &mut String, title: &str) {
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{PLOT_W}" height="{PLOT_H}" viewBox="0 0 {PLOT_W} {PLOT_H}">"#
    );
    let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        out,
        r#"<text x="{:.1}" y="24" text-anchor="middle" font-family="sans-serif" font-size="14">{}</text>"#,
        PLOT_W / 2.0,
        escape(title)
    );
    let _ = writeln!(
        out,
        r#"<path d="M{m:.1} {y0:.1} L{m:.1} {m:.1} M{m:.1} {y0:.1} L{x1:.1} {y0:.1}" stroke="black" fill="none"/>"#,
        m = MARGIN,
        y0 = PLOT_H - MARGIN,
        x1 = PLOT_W - MARGIN
    );
}

fn legend(out: &mut String, names: &[&str]) {
    for (i, name) in names.iter().enumerate() {
        let y = MARGIN + 16.0 * i as f64;
        let _ = writeln!(
            out,
            r#"<rect x="{:.1}" y="{:.1}" width="10" height="10" fill="{}"/><text x="{:.1}" y="{:.1}" font-family="sans-serif" font-size="11">{}</text>"#,
            PLOT_W - MARGIN - 110.0,
            y,
            PALETTE[i % PALETTE.len()],
            PLOT_W - MARGIN - 96.0,
            y + 9.0,
            escape(name)
        );
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Grouped bars, one color per source.
pub fn histogram_svg(rows: &[HistogramRow], title: &str) -> Result<String> {
    if rows.is_empty() {
        return Err(Error::Invalid("histogram has no bins".into()));
    }
    let peak = rows
        .iter()
        .flat_map(|r| [r.original, r.mlm, r.random])
        .fold(0.0f64, f64::max)
        .max(1e-12);
    let slot = (PLOT_W - 2.0 * MARGIN) / rows.len() as f64;
    let bar = slot / 3.5;
    let mut out = String::new();
    svg_open(&mut out, title);
    for (i, r) in rows.iter().enumerate() {
        for (k, v) in [r.original, r.mlm, r.random].into_iter().enumerate() {
            let h = (PLOT_H - 2.0 * MARGIN) * v / peak;
            let _ = writeln!(
                out,
                r#"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="{}"/>"#,
                MARGIN + slot * i as f64 + bar * k as f64,
                PLOT_H - MARGIN - h,
                bar,
                h,
                PALETTE[k]
            );
        }
    }
    legend(&mut out, &["Original", "MLM", "Random"]);
    out.push_str("</svg>\n");
    Ok(out)
}

/// One evaluation point of an AP curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub series: String,
    pub x: f64,
    pub ap: f64,
}

/// Line plot of AP against `x`, one line per series (series sorted by name,
/// points by `x`).
pub fn curves_svg(points: &[CurvePoint], title: &str) -> Result<String> {
    if points.len() < 2 {
        return Err(Error::Invalid("curves need at least two evaluation points".into()));
    }
    let mut series: BTreeMap<&str, Vec<(f64, f64)>> = BTreeMap::new();
    for p in points {
        series.entry(p.series.as_str()).or_default().push((p.x, p.ap));
    }
    let (x_lo, x_hi) = points
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| (lo.min(p.x), hi.max(p.x)));
    let span = if x_hi > x_lo { x_hi - x_lo } else { 1.0 };
    let sx = |x: f64| MARGIN + (PLOT_W - 2.0 * MARGIN) * (x - x_lo) / span;
    let sy = |ap: f64| PLOT_H - MARGIN - (PLOT_H - 2.0 * MARGIN) * ap / 100.0;
    let mut out = String::new();
    svg_open(&mut out, title);
    for (k, (_, pts)) in series.iter_mut().enumerate() {
        pts.sort_by(|a, b| a.0.total_cmp(&b.0));
        let d: Vec<String> = pts
            .iter()
            .enumerate()
            .map(|(i, &(x, ap))| format!("{}{:.2} {:.2}", if i == 0 { "M" } else { "L" }, sx(x), sy(ap)))
            .collect();
        let _ = writeln!(
            out,
            r#"<path d="{}" stroke="{}" stroke-width="2" fill="none"/>"#,
            d.join(" "),
            PALETTE[k % PALETTE.len()]
        );
    }
    let names: Vec<&str> = series.keys().copied().collect();
    legend(&mut out, &names);
    out.push_str("</svg>\n");
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_has_tier_blocks() {
        let rows = vec![
            GroupRow {
                group: "Asset GazelleBike".into(),
                tier: 0,
                percent: 20.0,
                events: 6,
                total: 30,
            },
            GroupRow {
                group: "Rotation 0".into(),
                tier: 2,
                percent: 1.0,
                events: 1,
                total: 100,
            },
        ];
        let t = intervention_table(&rows, 0.2, &[10.0, 5.0]);
        assert!(t.starts_with("Intervention      | Percent > 0.2 | Total\n"));
        assert!(t.contains("[percent >= 10]\nAsset GazelleBike |         20.00 | 30\n"));
        assert!(t.contains("[percent < 5]"));
    }

    #[test]
    fn svgs_are_deterministic() {
        let rows = histogram_rows(&[1.0, 2.0], &[1.0], &[3.0], 0.0, 4.0, 4);
        assert_eq!(histogram_svg(&rows, "yaw").unwrap(), histogram_svg(&rows, "yaw").unwrap());
        let pts = vec![
            CurvePoint {
                series: "a".into(),
                x: 0.0,
                ap: 10.0,
            },
            CurvePoint {
                series: "a".into(),
                x: 1.0,
                ap: 20.0,
            },
        ];
        assert!(curves_svg(&pts, "t").unwrap().contains("<path d=\"M48.00"));
        assert!(curves_svg(&[], "t").is_err());
    }
}
