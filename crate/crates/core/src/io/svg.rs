//! SVG output: the goal-rate training chart and the overhead trajectory
//! view, plus readers for both so emitted files can be checked back.

use std::fmt::Write;

use thiserror::Error;

use crate::curriculum::IterationMetrics;
use crate::eval::Trace;
use crate::geometry::{Vec2, WorldSpec};

#[derive(Debug, Error, PartialEq)]
pub enum PlotError {
    #[error("no data rows")]
    NoDataRows,
}

const CHART_WIDTH: f64 = 800.0;
const CHART_HEIGHT: f64 = 450.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 20.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 60.0;

/// Pixel mapping of the chart's plot area.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ChartFrame {
    pub first: f64,
    pub last: f64,
}

impl ChartFrame {
    pub fn x(&self, iteration: f64) -> f64 {
        let span = (self.last - self.first).max(1.0);
        LEFT + (iteration - self.first) / span * (CHART_WIDTH - LEFT - RIGHT)
    }

    pub fn y(&self, rate: f64) -> f64 {
        CHART_HEIGHT - BOTTOM - rate * (CHART_HEIGHT - TOP - BOTTOM)
    }
}

fn tick_step(span: f64) -> f64 {
    let raw = (span / 10.0).max(1.0);
    let mag = 10f64.powf(raw.log10().floor());
    [1.0, 2.0, 5.0, 10.0]
        .iter()
        .map(|m| m * mag)
        .find(|s| *s >= raw)
        .unwrap_or(10.0 * mag)
}

/// Line chart of `goal_rate_ma5` against iteration. Rows with a missing
/// average break the line; each phase change gets a vertical rule at the
/// last iteration of the earlier phase.
pub fn render_goal_rate_chart(rows: &[IterationMetrics]) -> Result<String, PlotError> {
    let (first, last) = match (rows.first(), rows.last()) {
        (Some(a), Some(b)) => (a.iteration as f64, b.iteration as f64),
        _ => return Err(PlotError::NoDataRows),
    };
    let f = ChartFrame { first, last };
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{CHART_WIDTH}" height="{CHART_HEIGHT}" viewBox="0 0 {CHART_WIDTH} {CHART_HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text class="title" x="{}" y="24" text-anchor="middle" font-size="15">Moving average of goal rate</text>"#,
        CHART_WIDTH / 2.0
    );
    for i in 0..=5 {
        let rate = i as f64 / 5.0;
        let y = f.y(rate);
        let _ = writeln!(
            s,
            r##"<line class="grid" x1="{LEFT}" y1="{y}" x2="{}" y2="{y}" stroke="#ddd"/>"##,
            CHART_WIDTH - RIGHT
        );
        let _ = writeln!(
            s,
            r#"<text class="tick" x="{}" y="{}" text-anchor="end">{rate:.1}</text>"#,
            LEFT - 6.0,
            y + 4.0
        );
    }
    let step = tick_step(last - first);
    let mut tick = (first / step).ceil() * step;
    while tick <= last {
        let x = f.x(tick);
        let _ = writeln!(
            s,
            r#"<text class="tick" x="{x}" y="{}" text-anchor="middle">{tick}</text>"#,
            CHART_HEIGHT - BOTTOM + 18.0
        );
        tick += step;
    }
    let _ = writeln!(
        s,
        r#"<line class="axis" x1="{LEFT}" y1="{}" x2="{}" y2="{}" stroke="black"/>"#,
        f.y(0.0),
        CHART_WIDTH - RIGHT,
        f.y(0.0)
    );
    let _ = writeln!(
        s,
        r#"<line class="axis" x1="{LEFT}" y1="{}" x2="{LEFT}" y2="{}" stroke="black"/>"#,
        f.y(0.0),
        f.y(1.0)
    );
    let _ = writeln!(
        s,
        r#"<text class="axis-label" x="{}" y="{}" text-anchor="middle">Iteration</text>"#,
        (LEFT + CHART_WIDTH - RIGHT) / 2.0,
        CHART_HEIGHT - 15.0
    );
    let _ = writeln!(
        s,
        r#"<text class="axis-label" x="18" y="{0}" text-anchor="middle" transform="rotate(-90 18 {0})">Goal rate (5-iteration moving average)</text>"#,
        (TOP + CHART_HEIGHT - BOTTOM) / 2.0
    );
    for pair in rows.windows(2) {
        if pair[0].phase != pair[1].phase {
            let it = pair[0].iteration;
            let x = f.x(it as f64);
            let _ = writeln!(
                s,
                r##"<line class="phase-rule" data-iteration="{it}" x1="{x}" y1="{}" x2="{x}" y2="{}" stroke="#888" stroke-dasharray="6 4"/>"##,
                f.y(0.0),
                f.y(1.0)
            );
        }
    }
    let mut runs: Vec<Vec<(f64, f64)>> = Vec::new();
    let mut current = Vec::new();
    for row in rows {
        match row.goal_rate_ma5 {
            Some(v) => current.push((f.x(row.iteration as f64), f.y(v))),
            None if !current.is_empty() => runs.push(std::mem::take(&mut current)),
            None => {}
        }
    }
    if !current.is_empty() {
        runs.push(current);
    }
    for run in runs {
        let points: Vec<String> = run.iter().map(|(x, y)| format!("{x:.2},{y:.2}")).collect();
        let _ = writeln!(
            s,
            r##"<polyline class="ma5" fill="none" stroke="#1f77b4" stroke-width="2" points="{}"/>"##,
            points.join(" ")
        );
    }
    s.push_str("</svg>\n");
    Ok(s)
}

/// Structure recovered from a chart SVG.
#[derive(Clone, Debug, PartialEq)]
pub struct ChartSvg {
    pub polylines: Vec<Vec<(f64, f64)>>,
    pub phase_rules: Vec<u64>,
    pub axis_labels: Vec<String>,
}

fn parse_points(text: &str) -> Result<Vec<(f64, f64)>, String> {
    text.split_whitespace()
        .map(|pair| {
            let (x, y) = pair.split_once(',').ok_or_else(|| format!("bad point `{pair}`"))?;
            let num = |v: &str| v.parse::<f64>().map_err(|_| format!("bad point `{pair}`"));
            Ok((num(x)?, num(y)?))
        })
        .collect()
}

fn has_class(node: &roxmltree::Node, class: &str) -> bool {
    node.attribute("class")
        .is_some_and(|c| c.split_whitespace().any(|c| c == class))
}

pub fn parse_chart_svg(text: &str) -> Result<ChartSvg, String> {
    let doc = roxmltree::Document::parse(text).map_err(|e| e.to_string())?;
    let mut chart = ChartSvg {
        polylines: Vec::new(),
        phase_rules: Vec::new(),
        axis_labels: Vec::new(),
    };
    for node in doc.descendants().filter(|n| n.is_element()) {
        if node.has_tag_name("polyline") && has_class(&node, "ma5") {
            chart
                .polylines
                .push(parse_points(node.attribute("points").unwrap_or(""))?);
        } else if node.has_tag_name("line") && has_class(&node, "phase-rule") {
            let it = node
                .attribute("data-iteration")
                .and_then(|v| v.parse().ok())
                .ok_or("phase rule without data-iteration")?;
            chart.phase_rules.push(it);
        } else if node.has_tag_name("text") && has_class(&node, "axis-label") {
            chart.axis_labels.push(node.text().unwrap_or("").to_string());
        }
    }
    Ok(chart)
}

const TRACE_SCALE: f64 = 20.0;
const TRACE_MARGIN: f64 = 20.0;

/// Overhead view of a world and one trajectory. Geometry is drawn in world
/// metres inside a y-flipping group, so coordinates read back unchanged.
pub fn render_trace_svg(world: &WorldSpec, trace: &Trace, goal_radius: f64) -> String {
    let b = world.bounds();
    let w = b.width() * TRACE_SCALE + 2.0 * TRACE_MARGIN;
    let h = b.height() * TRACE_SCALE + 2.0 * TRACE_MARGIN + 24.0;
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text class="caption" x="{TRACE_MARGIN}" y="{}">{} | outcome: {} | steps: {}</text>"#,
        h - 8.0,
        xml_escape(world.name()),
        trace.outcome,
        trace.rows.len().saturating_sub(1)
    );
    let _ = writeln!(
        s,
        r#"<g class="world" transform="translate({} {}) scale({TRACE_SCALE} -{TRACE_SCALE}) translate({} {})">"#,
        TRACE_MARGIN,
        TRACE_MARGIN + b.height() * TRACE_SCALE,
        -b.min.x,
        -b.min.y
    );
    let rect = |s: &mut String, class: &str, r: &crate::geometry::Rect, style: &str| {
        let _ = writeln!(
            s,
            r#"<rect class="{class}" x="{}" y="{}" width="{}" height="{}" {style} vector-effect="non-scaling-stroke"/>"#,
            r.min.x,
            r.min.y,
            r.width(),
            r.height()
        );
    };
    rect(&mut s, "bounds", b, r##"fill="none" stroke="black""##);
    for o in world.obstacles() {
        rect(&mut s, "obstacle", o, r##"fill="#555" stroke="none""##);
    }
    for p in world.spawn_points() {
        let _ = writeln!(
            s,
            r##"<circle class="spawn" cx="{}" cy="{}" r="0.15" fill="#bbb"/>"##,
            p.x, p.y
        );
    }
    let _ = writeln!(
        s,
        r##"<circle class="goal" cx="{}" cy="{}" r="{goal_radius}" fill="#2ca02c" fill-opacity="0.4"/>"##,
        trace.goal.x, trace.goal.y
    );
    let _ = writeln!(
        s,
        r##"<circle class="start" cx="{}" cy="{}" r="0.3" fill="#1f77b4"/>"##,
        trace.start.position.x, trace.start.position.y
    );
    let points: Vec<String> = trace.rows.iter().map(|r| format!("{},{}", r.x, r.y)).collect();
    let _ = writeln!(
        s,
        r##"<polyline class="path" fill="none" stroke="#d62728" stroke-width="2" vector-effect="non-scaling-stroke" points="{}"/>"##,
        points.join(" ")
    );
    s.push_str("</g>\n</svg>\n");
    s
}

fn xml_escape(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Structure recovered from a trace SVG, in world coordinates.
#[derive(Clone, Debug, PartialEq)]
pub struct TraceSvg {
    pub path: Vec<Vec2>,
    pub start: Option<Vec2>,
    pub goal: Option<Vec2>,
    pub goal_radius: Option<f64>,
    pub obstacles: usize,
    pub spawn_points: usize,
}

pub fn parse_trace_svg(text: &str) -> Result<TraceSvg, String> {
    let doc = roxmltree::Document::parse(text).map_err(|e| e.to_string())?;
    let mut out = TraceSvg {
        path: Vec::new(),
        start: None,
        goal: None,
        goal_radius: None,
        obstacles: 0,
        spawn_points: 0,
    };
    let num = |node: &roxmltree::Node, attr: &str| -> Result<f64, String> {
        node.attribute(attr)
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| format!("missing numeric `{attr}`"))
    };
    for node in doc.descendants().filter(|n| n.is_element()) {
        if node.has_tag_name("polyline") && has_class(&node, "path") {
            out.path = parse_points(node.attribute("points").unwrap_or(""))?
                .into_iter()
                .map(|(x, y)| Vec2::new(x, y))
                .collect();
        } else if node.has_tag_name("rect") && has_class(&node, "obstacle") {
            out.obstacles += 1;
        } else if node.has_tag_name("circle") {
            if has_class(&node, "spawn") {
                out.spawn_points += 1;
            } else if has_class(&node, "start") {
                out.start = Some(Vec2::new(num(&node, "cx")?, num(&node, "cy")?));
            } else if has_class(&node, "goal") {
                out.goal = Some(Vec2::new(num(&node, "cx")?, num(&node, "cy")?));
                out.goal_radius = Some(num(&node, "r")?);
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rows(n: u64, boundary: u64) -> Vec<IterationMetrics> {
        (1..=n)
            .map(|i| IterationMetrics {
                iteration: i,
                phase: if i <= boundary { 1 } else { 2 },
                episodes: 1,
                goals: 1,
                collisions: 0,
                timeouts: 0,
                truncated: 0,
                goal_rate: Some(1.0),
                goal_rate_ma5: Some((i as f64 / n as f64).min(1.0)),
                mean_return: None,
                mean_episode_length: None,
                policy_loss: 0.0,
                value_loss: 0.0,
                mean_kl: 0.0,
                entropy: 0.0,
                kl_coeff: 0.2,
            })
            .collect()
    }

    #[test]
    fn full_run_chart_structure() {
        let svg = render_goal_rate_chart(&rows(300, 200)).unwrap();
        let chart = parse_chart_svg(&svg).unwrap();
        assert_eq!(chart.polylines.len(), 1);
        assert_eq!(chart.polylines[0].len(), 300);
        assert_eq!(chart.phase_rules, vec![200]);
        assert_eq!(chart.axis_labels.len(), 2);
        let f = ChartFrame {
            first: 1.0,
            last: 300.0,
        };
        let (x, y) = chart.polylines[0][149];
        assert!((x - f.x(150.0)).abs() < 0.01 && (y - f.y(0.5)).abs() < 0.01);
    }

    #[test]
    fn empty_and_gapped_charts() {
        assert_eq!(render_goal_rate_chart(&[]), Err(PlotError::NoDataRows));
        assert_eq!(PlotError::NoDataRows.to_string(), "no data rows");
        let mut r = rows(10, 10);
        r[0].goal_rate_ma5 = None;
        r[4].goal_rate_ma5 = None;
        let chart = parse_chart_svg(&render_goal_rate_chart(&r).unwrap()).unwrap();
        let lens: Vec<usize> = chart.polylines.iter().map(Vec::len).collect();
        assert_eq!(lens, vec![3, 5]);
        assert!(chart.phase_rules.is_empty());
    }

    #[test]
    fn single_row_chart_is_finite() {
        let svg = render_goal_rate_chart(&rows(1, 1)).unwrap();
        let chart = parse_chart_svg(&svg).unwrap();
        assert!(chart.polylines[0][0].0.is_finite());
    }
}
