//! Static SVG line charts of 96-slot daily profiles.
//!
//! Every plotted series is one `<polyline>` whose `class` names its role
//! (`member`, `centroid`, `anomaly`), so documents can be checked by counting.

use std::fmt::Write;

use enwell_core::analytics::{AnomalyReport, ClusterModel, DailyProfile};
use enwell_core::time::SLOTS_PER_DAY;

const PANEL_W: f64 = 360.0;
const PANEL_H: f64 = 240.0;
const MARGIN_L: f64 = 56.0;
const MARGIN_R: f64 = 16.0;
const MARGIN_T: f64 = 32.0;
const MARGIN_B: f64 = 36.0;
const HEADER: f64 = 36.0;

const PALETTE: [&str; 6] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#9467bd", "#8c564b", "#e377c2",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    /// Thin grey line for one day.
    Member,
    /// Thick line for a cluster mean.
    Centroid,
    /// Red line for an anomalous day.
    Anomaly,
}

impl Role {
    fn class(self) -> &'static str {
        match self {
            Role::Member => "member",
            Role::Centroid => "centroid",
            Role::Anomaly => "anomaly",
        }
    }
}

pub struct Series<'a> {
    pub values: &'a [f64],
    pub role: Role,
    pub color: Option<&'static str>,
}

pub struct Panel<'a> {
    pub title: String,
    pub series: Vec<Series<'a>>,
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

fn nice_ceiling(v: f64) -> f64 {
    if v <= 0.0 {
        return 100.0;
    }
    let magnitude = 10f64.powf(v.log10().floor());
    for step in [1.0, 2.0, 2.5, 5.0, 10.0] {
        if step * magnitude >= v {
            return step * magnitude;
        }
    }
    10.0 * magnitude
}

/// Lays panels out in rows of at most `columns`, sharing one power axis.
pub fn render(title: &str, panels: &[Panel], columns: usize) -> String {
    let columns = columns.clamp(1, panels.len().max(1));
    let rows = panels.len().div_ceil(columns).max(1);
    let width = columns as f64 * PANEL_W;
    let height = HEADER + rows as f64 * PANEL_H;
    let y_max = nice_ceiling(
        panels
            .iter()
            .flat_map(|p| p.series.iter().flat_map(|s| s.values.iter().copied()))
            .fold(0.0, f64::max),
    );

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="22" text-anchor="middle" font-size="14">{}</text>"#,
        width / 2.0,
        escape(title)
    );
    for (i, panel) in panels.iter().enumerate() {
        let x0 = (i % columns) as f64 * PANEL_W;
        let y0 = HEADER + (i / columns) as f64 * PANEL_H;
        render_panel(&mut svg, panel, x0, y0, y_max);
    }
    svg.push_str("</svg>\n");
    svg
}

fn render_panel(svg: &mut String, panel: &Panel, x0: f64, y0: f64, y_max: f64) {
    let left = x0 + MARGIN_L;
    let right = x0 + PANEL_W - MARGIN_R;
    let top = y0 + MARGIN_T;
    let bottom = y0 + PANEL_H - MARGIN_B;
    let x = |slot: usize| left + (right - left) * slot as f64 / (SLOTS_PER_DAY - 1) as f64;
    let y = |w: f64| bottom - (bottom - top) * (w / y_max).clamp(0.0, 1.0);

    let _ = writeln!(svg, "<g>");
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
        (left + right) / 2.0,
        y0 + 20.0,
        escape(&panel.title)
    );
    let _ = writeln!(
        svg,
        r##"<rect x="{left}" y="{top}" width="{}" height="{}" fill="none" stroke="#888"/>"##,
        right - left,
        bottom - top
    );
    for hour in (0..=24).step_by(6) {
        let xs = left + (right - left) * hour as f64 / 24.0;
        let _ = writeln!(
            svg,
            r#"<text x="{xs}" y="{}" text-anchor="middle">{hour:02}:00</text>"#,
            bottom + 14.0
        );
    }
    for tick in 0..=4 {
        let w = y_max * tick as f64 / 4.0;
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{}" text-anchor="end">{w:.0}</text>"#,
            left - 4.0,
            y(w) + 4.0
        );
    }
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="{}" text-anchor="middle">time of day; power [W]</text>"#,
        (left + right) / 2.0,
        bottom + 28.0
    );
    // Members first so means and anomalies draw on top.
    let mut order: Vec<&Series> = panel.series.iter().collect();
    order.sort_by_key(|s| s.role != Role::Member);
    for s in order {
        let (stroke, width, opacity) = match s.role {
            Role::Member => ("#9a9a9a", 0.8, 0.6),
            Role::Centroid => (s.color.unwrap_or("#000000"), 2.5, 1.0),
            Role::Anomaly => (s.color.unwrap_or("#d62728"), 1.5, 1.0),
        };
        let points: Vec<String> = s
            .values
            .iter()
            .enumerate()
            .map(|(i, v)| format!("{:.1},{:.1}", x(i), y(*v)))
            .collect();
        let _ = writeln!(
            svg,
            r#"<polyline class="{}" fill="none" stroke="{stroke}" stroke-width="{width}" stroke-opacity="{opacity}" points="{}"/>"#,
            s.role.class(),
            points.join(" ")
        );
    }
    let _ = writeln!(svg, "</g>");
}

/// One panel per cluster: member days thin, the mean profile thick.
pub fn cluster_chart(model: &ClusterModel, profiles: &[DailyProfile]) -> String {
    let panels: Vec<Panel> = model
        .centroids
        .iter()
        .enumerate()
        .map(|(c, centroid)| {
            let mut series: Vec<Series> = profiles
                .iter()
                .filter(|p| model.assignments.get(&p.day) == Some(&c))
                .map(|p| Series {
                    values: &p.values,
                    role: Role::Member,
                    color: None,
                })
                .collect();
            let n = series.len();
            series.push(Series {
                values: centroid,
                role: Role::Centroid,
                color: None,
            });
            Panel {
                title: format!("Cluster {} ({n} days)", c + 1),
                series,
            }
        })
        .collect();
    render(
        &format!("{}: daily profiles in {} clusters", model.meter_id, model.k),
        &panels,
        model.k,
    )
}

/// One panel per meter with all of its cluster means.
pub fn centroid_chart(models: &[&ClusterModel]) -> String {
    let panels: Vec<Panel> = models
        .iter()
        .map(|m| Panel {
            title: m.meter_id.clone(),
            series: m
                .centroids
                .iter()
                .enumerate()
                .map(|(c, values)| Series {
                    values,
                    role: Role::Centroid,
                    color: Some(PALETTE[c % PALETTE.len()]),
                })
                .collect(),
        })
        .collect();
    render("Mean cluster profiles per meter", &panels, 2)
}

/// The `top_n` highest-scoring days, each over its nearest mean profile.
pub fn anomaly_chart(
    model: &ClusterModel,
    profiles: &[DailyProfile],
    report: &AnomalyReport,
    top_n: usize,
) -> String {
    let panels: Vec<Panel> = report
        .top(top_n)
        .iter()
        .filter_map(|day| {
            let profile = profiles.iter().find(|p| p.day == *day)?;
            let nearest = report.nearest_cluster[day];
            Some(Panel {
                title: format!("{day} (score {:.0} W)", report.scores[day]),
                series: vec![
                    Series {
                        values: &model.centroids[nearest],
                        role: Role::Centroid,
                        color: None,
                    },
                    Series {
                        values: &profile.values,
                        role: Role::Anomaly,
                        color: None,
                    },
                ],
            })
        })
        .collect();
    render(
        &format!(
            "{}: most anomalous days against the closest mean profile",
            model.meter_id
        ),
        &panels,
        top_n,
    )
}
