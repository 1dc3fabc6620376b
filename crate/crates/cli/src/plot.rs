//! Per-frame timeline charts as SVG.

use std::fs;
use std::path::Path;

use dtwin::evaluation::{MetricKind, MetricTimeline};
use plotters::prelude::*;

use crate::CliError;

const SIZE: (u32, u32) = (960, 480);

fn colour(kind: MetricKind) -> RGBColor {
    match kind {
        MetricKind::DeidLevel => RGBColor(31, 119, 180),
        MetricKind::IdentityConsistency => RGBColor(214, 39, 40),
        MetricKind::ExpressionPreservation => RGBColor(44, 160, 44),
    }
}

/// Maximal runs of present values as `(frame, value)` points.
fn segments(values: &[Option<f64>]) -> Vec<Vec<(f64, f64)>> {
    let mut out = Vec::new();
    let mut run = Vec::new();
    for (t, v) in values.iter().enumerate() {
        match v {
            Some(v) => run.push((t as f64, *v)),
            None if !run.is_empty() => out.push(std::mem::take(&mut run)),
            None => {}
        }
    }
    if !run.is_empty() {
        out.push(run);
    }
    out
}

fn title(timelines: &[MetricTimeline]) -> String {
    let mut families: Vec<&str> = timelines.iter().map(|t| t.distance.name()).collect();
    families.dedup();
    format!("Per-frame metrics ({} distance)", families.join(" / "))
}

/// One chart with a labelled curve per timeline. Skipped frames leave a
/// gap; an isolated frame is drawn as a dot.
pub fn plot_timeline(timelines: &[MetricTimeline], out_path: &Path) -> Result<(), CliError> {
    let len = match timelines.first() {
        Some(t) if !t.is_empty() => t.len(),
        _ => return Err(CliError::Precondition("no timelines to plot".into())),
    };
    if timelines.iter().any(|t| t.len() != len) {
        return Err(CliError::Precondition("timelines differ in length".into()));
    }
    if let Some(dir) = out_path.parent() {
        fs::create_dir_all(dir).map_err(|e| CliError::write(dir, e))?;
    }
    let y_max = timelines
        .iter()
        .flat_map(|t| t.present())
        .fold(0.0f64, f64::max);
    let y_max = if y_max > 0.0 { y_max * 1.1 } else { 1.0 };
    let x_max = (len - 1).max(1) as f64;

    let draw = || -> Result<(), Box<dyn std::error::Error>> {
        let root = SVGBackend::new(out_path, SIZE).into_drawing_area();
        root.fill(&WHITE)?;
        let mut chart = ChartBuilder::on(&root)
            .caption(title(timelines), ("sans-serif", 20))
            .margin(12)
            .x_label_area_size(36)
            .y_label_area_size(56)
            .build_cartesian_2d(0.0..x_max, 0.0..y_max)?;
        chart
            .configure_mesh()
            .x_desc("frame index")
            .y_desc("distance")
            .draw()?;
        for t in timelines {
            let style = colour(t.metric_kind).stroke_width(2);
            let label = if timelines
                .iter()
                .filter(|o| o.metric_kind == t.metric_kind)
                .count()
                > 1
            {
                format!("{} ({})", t.metric_kind.label(), t.distance)
            } else {
                t.metric_kind.label().to_string()
            };
            let mut labelled = false;
            for seg in segments(&t.values) {
                let anno = if seg.len() == 1 {
                    chart.draw_series(PointSeries::of_element(
                        seg,
                        3,
                        style.filled(),
                        &|c, s, st| Circle::new(c, s, st),
                    ))?
                } else {
                    chart.draw_series(LineSeries::new(seg, style))?
                };
                if !labelled {
                    let c = colour(t.metric_kind);
                    anno.label(label.clone()).legend(move |(x, y)| {
                        PathElement::new(vec![(x, y), (x + 20, y)], c.stroke_width(2))
                    });
                    labelled = true;
                }
            }
        }
        chart
            .configure_series_labels()
            .background_style(WHITE.mix(0.8))
            .border_style(BLACK)
            .draw()?;
        root.present()?;
        Ok(())
    };
    draw().map_err(|e| CliError::write(out_path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use dtwin::model::DistanceMetric;

    fn timeline(kind: MetricKind, values: Vec<Option<f64>>) -> MetricTimeline {
        MetricTimeline {
            metric_kind: kind,
            distance: DistanceMetric::Cosine,
            values,
        }
    }

    #[test]
    fn gaps_split_segments() {
        let s = segments(&[Some(1.0), Some(2.0), None, Some(3.0), None, None]);
        assert_eq!(s, vec![vec![(0.0, 1.0), (1.0, 2.0)], vec![(3.0, 3.0)]]);
        assert!(segments(&[None]).is_empty());
    }

    #[test]
    fn writes_deterministic_svg() {
        let dir = tempfile::tempdir().unwrap();
        let mut with_gap: Vec<Option<f64>> = (0..10).map(|_| Some(0.7)).collect();
        with_gap[5] = None;
        let ts = vec![
            timeline(MetricKind::DeidLevel, with_gap),
            timeline(MetricKind::IdentityConsistency, vec![Some(0.0); 10]),
            timeline(MetricKind::ExpressionPreservation, vec![Some(0.1); 10]),
        ];
        let a = dir.path().join("a.svg");
        let b = dir.path().join("b.svg");
        plot_timeline(&ts, &a).unwrap();
        plot_timeline(&ts, &b).unwrap();
        let svg = fs::read_to_string(&a).unwrap();
        assert_eq!(svg, fs::read_to_string(&b).unwrap());
        for kind in MetricKind::ALL {
            assert!(svg.contains(kind.label()));
        }
    }

    #[test]
    fn empty_or_ragged_input_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.svg");
        assert!(matches!(
            plot_timeline(&[], &p),
            Err(CliError::Precondition(_))
        ));
        let ragged = vec![
            timeline(MetricKind::DeidLevel, vec![Some(1.0)]),
            timeline(MetricKind::IdentityConsistency, vec![Some(1.0), Some(2.0)]),
        ];
        assert!(matches!(
            plot_timeline(&ragged, &p),
            Err(CliError::Precondition(_))
        ));
        assert!(!p.exists());
    }
}
