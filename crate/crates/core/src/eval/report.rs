use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::breakdown::{mean_over_classes, ApBreakdown};
use crate::error::{Error, Result};
use crate::types::ClassLabel;

/// Breakdown of one class on its own validation sub-dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassEval {
    pub class: ClassLabel,
    pub name: String,
    pub images: usize,
    pub instances: usize,
    pub breakdown: ApBreakdown,
}

/// One model evaluated on every per-class sub-dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSide {
    pub model_tag: String,
    pub checkpoint_digest: String,
    pub dataset_digest: String,
    pub classes: Vec<ClassEval>,
}

impl EvalSide {
    /// Mean over classes of the headline AP.
    pub fn mean_ap(&self) -> Option<f64> {
        mean_over_classes(&self.classes.iter().map(|c| c.breakdown.ap).collect::<Vec<_>>())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassComparison {
    pub class: ClassLabel,
    pub name: String,
    pub before: ApBreakdown,
    pub after: ApBreakdown,
    /// `after - before` per metric; `None` when either side is undefined.
    pub delta: [Option<f64>; 6],
}

/// Before/after comparison of two evaluations on identical sub-datasets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub model_tag: String,
    pub dataset_digest: String,
    pub before_checkpoint: String,
    pub after_checkpoint: String,
    pub classes: Vec<ClassComparison>,
    pub mean_before: Option<f64>,
    pub mean_after: Option<f64>,
    /// Mean over classes of the AP delta.
    pub mean_delta: Option<f64>,
}

pub fn delta(before: Option<f64>, after: Option<f64>) -> Option<f64> {
    Some(after? - before?)
}

/// Arithmetic mean of per-class deltas.
pub fn aggregate_delta(deltas: &[f64]) -> Option<f64> {
    (!deltas.is_empty()).then(|| deltas.iter().sum::<f64>() / deltas.len() as f64)
}

pub fn compare_reports(before: &EvalSide, after: &EvalSide) -> Result<EvalReport> {
    if before.dataset_digest != after.dataset_digest {
        return Err(Error::Incomparable(format!(
            "dataset digests differ ({} vs {})",
            before.dataset_digest, after.dataset_digest
        )));
    }
    let classes_of = |s: &EvalSide| s.classes.iter().map(|c| (c.class, c.images, c.instances)).collect::<Vec<_>>();
    if classes_of(before) != classes_of(after) {
        return Err(Error::Incomparable(
            "class lists or per-class sub-datasets differ".into(),
        ));
    }
    let classes: Vec<ClassComparison> = before
        .classes
        .iter()
        .zip(&after.classes)
        .map(|(b, a)| {
            let (bv, av) = (b.breakdown.values(), a.breakdown.values());
            ClassComparison {
                class: b.class,
                name: b.name.clone(),
                before: b.breakdown,
                after: a.breakdown,
                delta: std::array::from_fn(|i| delta(bv[i], av[i])),
            }
        })
        .collect();
    let deltas: Vec<f64> = classes.iter().filter_map(|c| c.delta[0]).collect();
    Ok(EvalReport {
        model_tag: after.model_tag.clone(),
        dataset_digest: before.dataset_digest.clone(),
        before_checkpoint: before.checkpoint_digest.clone(),
        after_checkpoint: after.checkpoint_digest.clone(),
        mean_before: before.mean_ap(),
        mean_after: after.mean_ap(),
        mean_delta: aggregate_delta(&deltas),
        classes,
    })
}

fn cell(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |x| format!("{x:.3}"))
}

fn signed(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |x| format!("{x:+.3}"))
}

/// Plain-text table: one row per class, a before/after pair per metric.
pub fn render_table(report: &EvalReport) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "model: {}  dataset: {}", report.model_tag, short(&report.dataset_digest));
    let mut header = format!("{:<12}", "class");
    for f in ApBreakdown::FIELDS {
        header.push_str(&format!(" | {:^15}", f));
    }
    header.push_str(" | delta AP");
    let _ = writeln!(out, "{header}");
    let mut sub = format!("{:<12}", "");
    for _ in ApBreakdown::FIELDS {
        sub.push_str(&format!(" | {:>7} {:>7}", "before", "after"));
    }
    let _ = writeln!(out, "{sub}");
    let _ = writeln!(out, "{}", "-".repeat(sub.len() + 11));
    for c in &report.classes {
        let mut row = format!("{:<12}", c.name);
        for (b, a) in c.before.values().into_iter().zip(c.after.values()) {
            row.push_str(&format!(" | {:>7} {:>7}", cell(b), cell(a)));
        }
        row.push_str(&format!(" | {:>8}", signed(c.delta[0])));
        let _ = writeln!(out, "{row}");
    }
    let _ = writeln!(
        out,
        "mean AP: before {} after {} delta {}",
        cell(report.mean_before),
        cell(report.mean_after),
        signed(report.mean_delta)
    );
    out
}

/// Comma-separated rows: class, then before/after/delta per metric.
pub fn render_csv(report: &EvalReport) -> String {
    let mut out = String::from("class");
    for f in ApBreakdown::FIELDS {
        out.push_str(&format!(",{f}_before,{f}_after,{f}_delta"));
    }
    out.push('\n');
    let csv = |v: Option<f64>| v.map_or_else(String::new, |x| format!("{x:.6}"));
    for c in &report.classes {
        out.push_str(&c.name);
        for i in 0..6 {
            out.push_str(&format!(
                ",{},{},{}",
                csv(c.before.values()[i]),
                csv(c.after.values()[i]),
                csv(c.delta[i])
            ));
        }
        out.push('\n');
    }
    out
}

fn short(digest: &str) -> &str {
    &digest[..digest.len().min(12)]
}

/// One before/after bar pair of the chart.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BarPair {
    pub label: String,
    pub before: f64,
    pub after: f64,
}

/// SVG bar chart with a before/after pair per label, values in `[0, 1]`.
pub fn render_bar_chart(title: &str, pairs: &[BarPair]) -> String {
    let (bar, gap, top, height, left) = (28.0, 24.0, 40.0, 240.0, 50.0);
    let width = left + pairs.len() as f64 * (2.0 * bar + gap) + gap;
    let total_h = top + height + 60.0;
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width:.0}" height="{total_h:.0}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(s, r#"<text x="{:.1}" y="20" text-anchor="middle" font-size="14">{}</text>"#, width / 2.0, xml(title));
    let base = top + height;
    let _ = writeln!(s, r#"<line x1="{left}" y1="{base}" x2="{width:.1}" y2="{base}" stroke="black"/>"#);
    let _ = writeln!(s, r#"<line x1="{left}" y1="{top}" x2="{left}" y2="{base}" stroke="black"/>"#);
    for tick in 0..=4 {
        let v = tick as f64 / 4.0;
        let y = base - v * height;
        let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{v:.2}</text>"#, left - 4.0, y + 4.0);
    }
    for (i, p) in pairs.iter().enumerate() {
        let x0 = left + gap + i as f64 * (2.0 * bar + gap);
        for (k, (v, color)) in [(p.before, "#9e9e9e"), (p.after, "#1f77b4")].into_iter().enumerate() {
            let h = v.clamp(0.0, 1.0) * height;
            let x = x0 + k as f64 * bar;
            let _ = writeln!(
                s,
                r#"<rect x="{x:.1}" y="{:.1}" width="{bar}" height="{h:.1}" fill="{color}"/>"#,
                base - h
            );
            let _ = writeln!(
                s,
                r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{v:.3}</text>"#,
                x + bar / 2.0,
                base - h - 3.0
            );
        }
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
            x0 + bar,
            base + 16.0,
            xml(&p.label)
        );
    }
    let ly = base + 40.0;
    let _ = writeln!(s, r##"<rect x="{left}" y="{:.1}" width="10" height="10" fill="#9e9e9e"/>"##, ly - 9.0);
    let _ = writeln!(s, r#"<text x="{:.1}" y="{ly:.1}">before</text>"#, left + 14.0);
    let _ = writeln!(s, r##"<rect x="{:.1}" y="{:.1}" width="10" height="10" fill="#1f77b4"/>"##, left + 70.0, ly - 9.0);
    let _ = writeln!(s, r#"<text x="{:.1}" y="{ly:.1}">after</text>"#, left + 84.0);
    s.push_str("</svg>\n");
    s
}

fn xml(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn side(tag: &str, digest: &str, aps: &[f64]) -> EvalSide {
        EvalSide {
            model_tag: tag.into(),
            checkpoint_digest: format!("ck-{tag}"),
            dataset_digest: digest.into(),
            classes: aps
                .iter()
                .enumerate()
                .map(|(i, &ap)| ClassEval {
                    class: ClassLabel(i as u32 + 1),
                    name: format!("c{}", i + 1),
                    images: 4,
                    instances: 6,
                    breakdown: ApBreakdown {
                        ap: Some(ap),
                        ..ApBreakdown::default()
                    },
                })
                .collect(),
        }
    }

    #[test]
    fn digest_mismatch_is_incomparable() {
        let r = compare_reports(&side("a", "d1", &[0.5]), &side("b", "d2", &[0.5]));
        assert!(matches!(r, Err(Error::Incomparable(_))));
    }

    #[test]
    fn identical_sides_have_zero_delta() {
        let s = side("a", "d", &[0.3, 0.7]);
        let r = compare_reports(&s, &s).unwrap();
        assert!(r.classes.iter().all(|c| c.delta[0] == Some(0.0)));
        assert_eq!(r.mean_delta, Some(0.0));
        assert!(r.classes.iter().all(|c| c.delta[1].is_none()));
    }

    #[test]
    fn table_and_csv_have_a_row_per_class() {
        let r = compare_reports(&side("a", "d", &[0.3, 0.7]), &side("b", "d", &[0.4, 0.6])).unwrap();
        let t = render_table(&r);
        assert!(t.contains("c1") && t.contains("c2") && t.contains("+0.100"));
        assert_eq!(render_csv(&r).lines().count(), 3);
        let svg = render_bar_chart("mask AP", &[BarPair { label: "split".into(), before: 0.3, after: 0.4 }]);
        assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
    }
}
