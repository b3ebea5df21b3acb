//! Self-contained SVG charts written as plain strings.

use std::fmt::Write as _;

use crate::rsd::{BusinessRsd, FencePair, Polarity};

const WIDTH: f64 = 800.0;
const HEIGHT: f64 = 320.0;
const MARGIN: f64 = 48.0;

const POSITIVE: &str = "#3b7dd8";
const NEGATIVE: &str = "#8c8c8c";
const SPIKE: &str = "#d62728";

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

fn open(title: &str) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{}" y="20" text-anchor="middle" font-size="14">{}</text>"#,
        WIDTH / 2.0,
        escape(title)
    );
    s
}

/// Daily positive counts as bars above the axis, negative counts below it,
/// each polarity's upper fence as a dashed line and spike days in red.
pub fn timeline_svg(rsd: &BusinessRsd) -> String {
    let series = &rsd.series;
    let mut s = open(&format!("Daily reviews of {}", series.business_id));
    let days: Vec<_> = series.positive.keys().chain(series.negative.keys()).copied().collect();
    let (Some(first), Some(last)) = (days.iter().min(), days.iter().max()) else {
        let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">no reviews in window</text>"#, WIDTH / 2.0, HEIGHT / 2.0);
        s.push_str("</svg>\n");
        return s;
    };
    let span = ((*last - *first).num_days() + 1) as f64;
    let peak = |p: Polarity, fence: Option<&FencePair>| {
        let m = series.counts(p).values().copied().max().unwrap_or(0) as f64;
        fence.map_or(m, |f| m.max(f.uof))
    };
    let pos_max = peak(Polarity::Positive, rsd.positive_fence.as_ref()).max(1.0);
    let neg_max = peak(Polarity::Negative, rsd.negative_fence.as_ref());
    let plot_h = HEIGHT - 2.0 * MARGIN;
    let axis_y = MARGIN + plot_h * pos_max / (pos_max + neg_max);
    let unit = plot_h / (pos_max + neg_max);
    let plot_w = WIDTH - 2.0 * MARGIN;
    let bar_w = (plot_w / span).max(1.0);
    let x_of = |d: chrono::NaiveDate| MARGIN + plot_w * (d - *first).num_days() as f64 / span;

    let spike_days = |p: Polarity| rsd.spikes.iter().filter(move |sp| sp.polarity == p).map(|sp| sp.date);
    for (polarity, colour, sign) in [(Polarity::Positive, POSITIVE, -1.0), (Polarity::Negative, NEGATIVE, 1.0)] {
        let spiky: Vec<_> = spike_days(polarity).collect();
        for (&day, &count) in series.counts(polarity) {
            let h = f64::from(count) * unit;
            let y = if sign < 0.0 { axis_y - h } else { axis_y };
            let fill = if spiky.contains(&day) { SPIKE } else { colour };
            let _ = writeln!(
                s,
                r#"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="{fill}"><title>{day} {polarity}: {count}</title></rect>"#,
                x_of(day),
                y,
                bar_w,
                h
            );
        }
    }
    for (fence, sign, colour, label) in [
        (rsd.positive_fence, -1.0, POSITIVE, "positive UOF"),
        (rsd.negative_fence, 1.0, NEGATIVE, "negative UOF"),
    ] {
        if let Some(f) = fence {
            let y = axis_y + sign * f.uof * unit;
            let _ = writeln!(
                s,
                r#"<line x1="{MARGIN}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="{colour}" stroke-dasharray="6 4"/>"#,
                WIDTH - MARGIN
            );
            let _ = writeln!(
                s,
                r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{label} {:.2}</text>"#,
                WIDTH - MARGIN,
                y - 3.0,
                f.uof
            );
        }
    }
    let _ = writeln!(
        s,
        r#"<line x1="{MARGIN}" y1="{axis_y:.2}" x2="{:.2}" y2="{axis_y:.2}" stroke="black"/>"#,
        WIDTH - MARGIN
    );
    let _ = writeln!(s, r#"<text x="{MARGIN}" y="{:.2}">{first}</text>"#, HEIGHT - 12.0);
    let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{last}</text>"#, WIDTH - MARGIN, HEIGHT - 12.0);
    s.push_str("</svg>\n");
    s
}

/// Box-and-whisker of the daily counts per polarity: box from Q1 to Q3,
/// median line, whiskers to the furthest counts inside the fences, and the
/// counts beyond them as dots.
pub fn box_svg(rsd: &BusinessRsd) -> String {
    let series = &rsd.series;
    let mut s = open(&format!("Daily count distribution of {}", series.business_id));
    let boxes = [
        (Polarity::Positive, rsd.positive_fence, POSITIVE),
        (Polarity::Negative, rsd.negative_fence, NEGATIVE),
    ];
    let top = boxes
        .iter()
        .map(|(p, f, _)| {
            let m = series.counts(*p).values().copied().max().unwrap_or(0) as f64;
            f.map_or(m, |f| m.max(f.uof))
        })
        .fold(1.0, f64::max);
    let plot_h = HEIGHT - 2.0 * MARGIN;
    let y_of = |v: f64| HEIGHT - MARGIN - plot_h * v.max(0.0) / top;
    let _ = writeln!(s, r#"<line x1="{MARGIN}" y1="{MARGIN}" x2="{MARGIN}" y2="{:.2}" stroke="black"/>"#, HEIGHT - MARGIN);
    let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{top:.0}</text>"#, MARGIN - 4.0, y_of(top) + 4.0);
    let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}" text-anchor="end">0</text>"#, MARGIN - 4.0, y_of(0.0) + 4.0);
    for (i, (polarity, fence, colour)) in boxes.iter().enumerate() {
        let cx = MARGIN + (WIDTH - 2.0 * MARGIN) * (i as f64 * 2.0 + 1.0) / 4.0;
        let _ = writeln!(s, r#"<text x="{cx:.2}" y="{:.2}" text-anchor="middle">{polarity}</text>"#, HEIGHT - 12.0);
        let Some(f) = fence else {
            let _ = writeln!(s, r#"<text x="{cx:.2}" y="{:.2}" text-anchor="middle">not enough active days</text>"#, HEIGHT / 2.0);
            continue;
        };
        let values: Vec<f64> = series.counts(*polarity).values().map(|&c| f64::from(c)).collect();
        let inside: Vec<f64> = values.iter().copied().filter(|v| *v >= f.lof && *v <= f.uof).collect();
        let lo = inside.iter().copied().fold(f.q1, f64::min);
        let hi = inside.iter().copied().fold(f.q3, f64::max);
        let half = 60.0;
        let _ = writeln!(
            s,
            r#"<line x1="{cx:.2}" y1="{:.2}" x2="{cx:.2}" y2="{:.2}" stroke="black"/>"#,
            y_of(hi),
            y_of(lo)
        );
        let _ = writeln!(
            s,
            r#"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="{colour}" fill-opacity="0.4" stroke="black"/>"#,
            cx - half,
            y_of(f.q3),
            2.0 * half,
            (y_of(f.q1) - y_of(f.q3)).max(1.0)
        );
        let _ = writeln!(
            s,
            r#"<line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="black" stroke-width="2"/>"#,
            cx - half,
            y_of(f.q2),
            cx + half,
            y_of(f.q2)
        );
        let _ = writeln!(
            s,
            r#"<line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="{SPIKE}" stroke-dasharray="6 4"/>"#,
            cx - 1.5 * half,
            y_of(f.uof),
            cx + 1.5 * half,
            y_of(f.uof)
        );
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}">UOF {:.2}</text>"#,
            cx + 1.5 * half + 4.0,
            y_of(f.uof) + 4.0,
            f.uof
        );
        for v in values.iter().filter(|v| **v > f.uof || **v < f.lof) {
            let _ = writeln!(s, r#"<circle cx="{cx:.2}" cy="{:.2}" r="3" fill="{SPIKE}"/>"#, y_of(*v));
        }
    }
    s.push_str("</svg>\n");
    s
}

/// Bars of the quarantined percentage per threshold.
pub fn quarantine_svg(rows: &[(u32, usize, f64)]) -> String {
    let mut s = open("Quarantined popular users by threshold");
    if rows.is_empty() {
        s.push_str("</svg>\n");
        return s;
    }
    let plot_w = WIDTH - 2.0 * MARGIN;
    let plot_h = HEIGHT - 2.0 * MARGIN;
    let slot = plot_w / rows.len() as f64;
    for (i, (theta, count, pct)) in rows.iter().enumerate() {
        let h = plot_h * pct.clamp(0.0, 100.0) / 100.0;
        let x = MARGIN + slot * i as f64 + slot * 0.15;
        let _ = writeln!(
            s,
            r#"<rect x="{x:.2}" y="{:.2}" width="{:.2}" height="{h:.2}" fill="{POSITIVE}"><title>{count} users</title></rect>"#,
            HEIGHT - MARGIN - h,
            slot * 0.7
        );
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{pct:.2}%</text>"#,
            x + slot * 0.35,
            HEIGHT - MARGIN - h - 4.0
        );
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{theta}</text>"#,
            x + slot * 0.35,
            HEIGHT - MARGIN + 14.0
        );
    }
    s.push_str("</svg>\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::DateWindow;
    use crate::rsd::{detect_spikes, fences, DailyCountSeries};
    use chrono::NaiveDate;

    fn rsd() -> BusinessRsd {
        let d = |i: u32| NaiveDate::from_ymd_opt(2015, 1, i).unwrap();
        let mut positive: std::collections::BTreeMap<_, _> = (1..=9).map(|i| (d(i), 1)).collect();
        positive.insert(d(20), 12);
        let series = DailyCountSeries {
            business_id: "b<1>".into(),
            window: DateWindow::default(),
            positive,
            negative: [(d(3), 1)].into(),
            neutral: 0,
        };
        let pf = fences(&series, Polarity::Positive, 5).ok();
        let spikes = detect_spikes(&series, pf.as_ref(), None);
        BusinessRsd {
            series,
            positive_fence: pf,
            negative_fence: None,
            spikes,
        }
    }

    #[test]
    fn timeline_marks_spikes() {
        let svg = timeline_svg(&rsd());
        assert!(svg.starts_with("<svg") && svg.ends_with("</svg>\n"));
        assert_eq!(svg.matches(SPIKE).count(), 1);
        assert!(svg.contains("b&lt;1&gt;"));
        assert!(svg.contains("positive UOF 1.00"));
    }

    #[test]
    fn box_plot_draws_outliers() {
        let svg = box_svg(&rsd());
        assert_eq!(svg.matches("<circle").count(), 1);
        assert!(svg.contains("not enough active days"));
    }

    #[test]
    fn empty_inputs_still_render() {
        let mut r = rsd();
        r.series.positive.clear();
        r.series.negative.clear();
        assert!(timeline_svg(&r).contains("no reviews"));
        assert!(quarantine_svg(&[]).ends_with("</svg>\n"));
        assert_eq!(quarantine_svg(&[(3, 5, 50.0), (4, 2, 20.0)]).matches("<rect").count(), 3);
    }
}
