//! SVG rendering of a training trajectory: difficulty action as a thick step
//! curve, hard-negative loss as a thin line, dashed phase boundaries.

use std::fmt::Write as _;
use std::path::Path;

use crate::curriculum::{ActionId, Phase};
use crate::error::Result;
use crate::sim::log::{TrajectoryLog, TrajectoryRecord};

const WIDTH: f64 = 800.0;
const HEIGHT: f64 = 400.0;
const LEFT: f64 = 60.0;
const RIGHT: f64 = 60.0;
const TOP: f64 = 30.0;
const BOTTOM: f64 = 40.0;

struct Point {
    step: u64,
    phase: Option<Phase>,
    action: Option<ActionId>,
    loss: f64,
}

fn points(log: &TrajectoryLog) -> Vec<Point> {
    log.steps()
        .filter_map(|r| match r {
            TrajectoryRecord::Step {
                step,
                phase,
                action,
                loss,
                ..
            } => Some(Point {
                step: *step,
                phase: *phase,
                action: *action,
                loss: loss.total,
            }),
            _ => None,
        })
        .collect()
}

/// Renders `log` as an SVG document. `num_actions` fixes the left axis range.
pub fn render_svg(log: &TrajectoryLog, num_actions: usize) -> String {
    let pts = points(log);
    let plot_w = WIDTH - LEFT - RIGHT;
    let plot_h = HEIGHT - TOP - BOTTOM;
    let max_step = pts.last().map(|p| p.step + 1).unwrap_or(1).max(1) as f64;
    let max_action = num_actions.saturating_sub(1).max(1) as f64;
    let max_loss = pts
        .iter()
        .map(|p| p.loss)
        .filter(|l| l.is_finite())
        .fold(0.0_f64, f64::max);
    let max_loss = if max_loss > 0.0 { max_loss } else { 1.0 };
    let x = |s: f64| LEFT + plot_w * s / max_step;
    let ya = |a: f64| TOP + plot_h * (1.0 - a / max_action);
    let yl = |l: f64| TOP + plot_h * (1.0 - l / max_loss);

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="monospace" font-size="11">"#
    );
    let _ = writeln!(s, r##"<rect width="{WIDTH}" height="{HEIGHT}" fill="#ffffff"/>"##);
    let (x0, x1, y0, y1) = (LEFT, WIDTH - RIGHT, TOP + plot_h, TOP);
    let _ = writeln!(
        s,
        r##"<g id="axes" stroke="#000000" stroke-width="1"><line x1="{x0:.2}" y1="{y0:.2}" x2="{x1:.2}" y2="{y0:.2}"/><line x1="{x0:.2}" y1="{y0:.2}" x2="{x0:.2}" y2="{y1:.2}"/><line x1="{x1:.2}" y1="{y0:.2}" x2="{x1:.2}" y2="{y1:.2}"/></g>"##
    );
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">step</text>"#,
        LEFT + plot_w / 2.0,
        HEIGHT - 8.0
    );
    let _ = writeln!(s, r#"<text x="8.00" y="{:.2}">action</text>"#, TOP - 10.0);
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="{:.2}">loss</text>"#,
        WIDTH - RIGHT + 4.0,
        TOP - 10.0
    );
    for a in 0..num_actions.max(1) {
        let label = ActionId(a).letter();
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{label}</text>"#,
            LEFT - 6.0,
            ya(a as f64) + 4.0
        );
    }
    for i in 0..=4 {
        let l = max_loss * i as f64 / 4.0;
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}">{l:.3}</text>"#,
            WIDTH - RIGHT + 4.0,
            yl(l) + 4.0
        );
    }
    for i in 0..=4 {
        let st = max_step * i as f64 / 4.0;
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{st:.0}</text>"#,
            x(st),
            y0 + 16.0
        );
    }

    for w in pts.windows(2) {
        if w[1].phase != w[0].phase {
            if let Some(p) = w[1].phase {
                let bx = x(w[1].step as f64);
                let _ = writeln!(
                    s,
                    r##"<line class="phase-boundary" x1="{bx:.2}" y1="{y0:.2}" x2="{bx:.2}" y2="{y1:.2}" stroke="#888888" stroke-dasharray="4 3"/><text x="{:.2}" y="{:.2}" fill="#555555">{}</text>"##,
                    bx + 3.0,
                    y1 + 12.0,
                    p.label()
                );
            }
        }
    }

    let mut action_path = String::new();
    for p in &pts {
        let Some(a) = p.action else { continue };
        let (xs, xe, y) = (x(p.step as f64), x(p.step as f64 + 1.0), ya(a.0 as f64));
        if action_path.is_empty() {
            let _ = write!(action_path, "M{xs:.2},{y:.2}");
        } else {
            let _ = write!(action_path, " V{y:.2}");
        }
        let _ = write!(action_path, " H{xe:.2}");
    }
    if !action_path.is_empty() {
        let _ = writeln!(
            s,
            r##"<path id="action" d="{action_path}" fill="none" stroke="#1f4e9c" stroke-width="3"/>"##
        );
    }
    let loss_pts: Vec<String> = pts
        .iter()
        .filter(|p| p.loss.is_finite())
        .map(|p| format!("{:.2},{:.2}", x(p.step as f64 + 0.5), yl(p.loss)))
        .collect();
    if !loss_pts.is_empty() {
        let _ = writeln!(
            s,
            r##"<polyline id="loss" points="{}" fill="none" stroke="#c0392b" stroke-width="1"/>"##,
            loss_pts.join(" ")
        );
    }
    s.push_str("</svg>\n");
    s
}

pub fn plot_trajectory(trajectory: &Path, out: &Path, num_actions: usize) -> Result<()> {
    let log = TrajectoryLog::read(trajectory)?;
    std::fs::write(out, render_svg(&log, num_actions))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::losses::LossBreakdown;

    fn step(step: u64, phase: Phase, action: usize, loss: f64) -> TrajectoryRecord {
        TrajectoryRecord::Step {
            step,
            phase: Some(phase),
            action: Some(ActionId(action)),
            interval: (0.0, 1.0),
            loss: LossBreakdown {
                total: loss,
                ..Default::default()
            },
            fallback_pairs: 0,
            pairs: vec![],
        }
    }

    #[test]
    fn empty_log_has_axes_only() {
        let svg = render_svg(&TrajectoryLog::default(), 16);
        assert!(svg.contains(r#"id="axes""#));
        assert!(!svg.contains(r#"id="action""#));
        assert!(!svg.contains(r#"id="loss""#));
        assert!(!svg.contains("phase-boundary"));
    }

    #[test]
    fn downgrade_shows_as_decrease() {
        let log = TrajectoryLog {
            records: vec![
                step(0, Phase::LockIn, 5, 0.4),
                step(1, Phase::LockIn, 5, 0.5),
                step(2, Phase::LockIn, 4, 0.6),
            ],
        };
        let svg = render_svg(&log, 16);
        let d = svg
            .split(r#"id="action" d=""#)
            .nth(1)
            .unwrap()
            .split('"')
            .next()
            .unwrap();
        let ys: Vec<f64> = d
            .split(' ')
            .filter_map(|t| {
                t.strip_prefix('V')
                    .or_else(|| t.strip_prefix('M').map(|m| m.split(',').nth(1).unwrap()))
            })
            .map(|v| v.parse().unwrap())
            .collect();
        assert_eq!(ys.len(), 3);
        assert_eq!(ys[0], ys[1]);
        assert!(ys[2] > ys[1], "lower action should sit lower on the plot");
    }

    #[test]
    fn phase_boundaries_marked() {
        let log = TrajectoryLog {
            records: vec![
                step(0, Phase::Exploration, 0, 0.4),
                step(1, Phase::Transition, 1, 0.5),
                step(2, Phase::LockIn, 1, 0.6),
            ],
        };
        let svg = render_svg(&log, 16);
        assert_eq!(svg.matches("phase-boundary").count(), 2);
        assert!(svg.contains("TRANSITION") && svg.contains("LOCK-IN"));
        assert_eq!(svg, render_svg(&log, 16));
    }
}
