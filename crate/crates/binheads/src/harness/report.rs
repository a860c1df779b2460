//! Report emission: sweep and comparison CSVs, confusion-matrix CSVs, and
//! minimal hand-emitted SVG line charts (fixed 800×500 viewBox, one
//! polyline per method). All tables use a header row, LF endings, and
//! 17-significant-digit reals.

use crate::data::fmt_real;
use crate::error::{Error, Result};
use crate::metrics::{ConfusionMatrix, EvalReport};
use crate::types::OOD_LABEL;

use super::sweep::{SweepMean, SweepPoint, SweepResult};

fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt_real).unwrap_or_default()
}

/// Per-repetition sweep table: one row per (method, ood_count, repetition).
pub fn sweep_csv(result: &SweepResult) -> String {
    let mut out = String::from(
        "method,ood_count,repetition,accuracy,balanced_accuracy,ood_recall,ood_precision\n",
    );
    for p in result.points() {
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            p.method,
            p.ood_count,
            p.repetition,
            fmt_real(p.accuracy),
            fmt_real(p.balanced_accuracy),
            fmt_real(p.ood_recall),
            fmt_opt(p.ood_precision),
        ));
    }
    out
}

/// Parse a sweep CSV back into points plus the method and count orders as
/// first encountered (which is how [`sweep_csv`] emits them).
pub fn parse_sweep_csv(text: &str) -> Result<(Vec<SweepPoint>, Vec<String>, Vec<usize>)> {
    let mut lines = text.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or_else(|| Error::parse(1, "empty sweep CSV"))?;
    if header
        != "method,ood_count,repetition,accuracy,balanced_accuracy,ood_recall,ood_precision"
    {
        return Err(Error::parse(1, format!("unexpected header '{header}'")));
    }
    let mut points = Vec::new();
    let mut methods: Vec<String> = Vec::new();
    let mut counts: Vec<usize> = Vec::new();
    for (i, line) in lines {
        let line_no = i + 1;
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 7 {
            return Err(Error::parse(
                line_no,
                format!("expected 7 fields, got {}", fields.len()),
            ));
        }
        let int = |j: usize| -> Result<usize> {
            fields[j]
                .parse::<usize>()
                .map_err(|_| Error::parse(line_no, format!("bad integer '{}'", fields[j])))
        };
        let real = |j: usize| -> Result<f64> {
            fields[j]
                .parse::<f64>()
                .map_err(|_| Error::parse(line_no, format!("bad number '{}'", fields[j])))
        };
        let point = SweepPoint {
            method: fields[0].to_string(),
            ood_count: int(1)?,
            repetition: int(2)?,
            accuracy: real(3)?,
            balanced_accuracy: real(4)?,
            ood_recall: real(5)?,
            ood_precision: if fields[6].is_empty() {
                None
            } else {
                Some(real(6)?)
            },
        };
        if !methods.contains(&point.method) {
            methods.push(point.method.clone());
        }
        if !counts.contains(&point.ood_count) {
            counts.push(point.ood_count);
        }
        points.push(point);
    }
    Ok((points, methods, counts))
}

/// Comparison table from aggregated means: per ood_count, per method —
/// accuracy, balanced accuracy, OOD recall, OOD precision. An undefined
/// OOD precision (no OOD verdicts) is an empty cell, not 0.
pub fn compare_csv(means: &[SweepMean]) -> String {
    let mut out =
        String::from("ood_count,method,accuracy,balanced_accuracy,ood_recall,ood_precision\n");
    for m in means {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            m.ood_count,
            m.method,
            fmt_real(m.accuracy),
            fmt_real(m.balanced_accuracy),
            fmt_real(m.ood_recall),
            fmt_opt(m.ood_precision),
        ));
    }
    out
}

/// The method-comparison table for a finished sweep.
pub fn compare_report(result: &SweepResult) -> String {
    compare_csv(&result.means())
}

/// Confusion matrix as CSV: true classes down the rows, verdicts across
/// the columns, the OOD row/column last.
pub fn confusion_csv(confusion: &ConfusionMatrix, class_names: &[String]) -> Result<String> {
    let c = confusion.n_classes();
    if class_names.len() != c {
        return Err(Error::invalid(format!(
            "{} class names for a {c}-class confusion matrix",
            class_names.len()
        )));
    }
    let mut names: Vec<&str> = class_names.iter().map(String::as_str).collect();
    names.push(OOD_LABEL);
    let mut out = String::from("true");
    for name in &names {
        out.push(',');
        out.push_str(name);
    }
    out.push('\n');
    for (i, name) in names.iter().enumerate() {
        out.push_str(name);
        for j in 0..=c {
            out.push_str(&format!(",{}", confusion.count(i, j)));
        }
        out.push('\n');
    }
    Ok(out)
}

/// Full-test-set evaluation table: one row per method.
pub fn eval_csv(reports: &[(String, EvalReport)]) -> String {
    let mut out = String::from("method,accuracy,balanced_accuracy,ood_recall,ood_precision\n");
    for (name, report) in reports {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            name,
            fmt_real(report.accuracy),
            fmt_real(report.balanced_accuracy),
            fmt_real(*report.per_class_recall.last().expect("has OOD slot")),
            fmt_opt(super::sweep::ood_precision(&report.confusion)),
        ));
    }
    out
}

/// One line in a chart.
#[derive(Debug, Clone, PartialEq)]
pub struct ChartSeries {
    pub name: String,
    /// (x, y) pairs in drawing order.
    pub points: Vec<(f64, f64)>,
}

const PALETTE: [&str; 6] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b",
];

const WIDTH: f64 = 800.0;
const HEIGHT: f64 = 500.0;
const PLOT_LEFT: f64 = 70.0;
const PLOT_RIGHT: f64 = 620.0;
const PLOT_TOP: f64 = 50.0;
const PLOT_BOTTOM: f64 = 440.0;

fn fmt_tick(v: f64) -> String {
    let s = format!("{v:.3}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s.is_empty() {
        "0".to_string()
    } else {
        s.to_string()
    }
}

/// Minimal line chart: axes, five ticks per axis, one polyline with point
/// markers per series, legend on the right. Returns the SVG document.
pub fn render_line_chart(
    title: &str,
    x_label: &str,
    y_label: &str,
    series: &[ChartSeries],
) -> Result<String> {
    if series.is_empty() || series.iter().all(|s| s.points.is_empty()) {
        return Err(Error::invalid("chart needs at least one data point"));
    }
    for s in series {
        for &(x, y) in &s.points {
            if !x.is_finite() || !y.is_finite() {
                return Err(Error::invalid(format!(
                    "non-finite chart point in series '{}'",
                    s.name
                )));
            }
        }
    }

    let xs: Vec<f64> = series.iter().flat_map(|s| s.points.iter().map(|p| p.0)).collect();
    let ys: Vec<f64> = series.iter().flat_map(|s| s.points.iter().map(|p| p.1)).collect();
    let (mut x_min, mut x_max) = bounds(&xs);
    let (mut y_min, mut y_max) = bounds(&ys);
    if x_min == x_max {
        x_min -= 0.5;
        x_max += 0.5;
    }
    if y_min == y_max {
        y_min -= 0.05;
        y_max += 0.05;
    } else {
        let pad = (y_max - y_min) * 0.05;
        y_min -= pad;
        y_max += pad;
    }
    let sx = |x: f64| PLOT_LEFT + (x - x_min) / (x_max - x_min) * (PLOT_RIGHT - PLOT_LEFT);
    let sy = |y: f64| PLOT_BOTTOM - (y - y_min) / (y_max - y_min) * (PLOT_BOTTOM - PLOT_TOP);

    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 {WIDTH} {HEIGHT}\" \
         font-family=\"sans-serif\" font-size=\"13\">\n"
    ));
    svg.push_str(&format!(
        "  <rect x=\"0\" y=\"0\" width=\"{WIDTH}\" height=\"{HEIGHT}\" fill=\"white\"/>\n"
    ));
    svg.push_str(&format!(
        "  <text x=\"{:.1}\" y=\"28\" text-anchor=\"middle\" font-size=\"17\">{}</text>\n",
        (PLOT_LEFT + PLOT_RIGHT) / 2.0,
        escape(title)
    ));

    // Grid and ticks: five divisions per axis.
    for i in 0..=4 {
        let fy = i as f64 / 4.0;
        let yv = y_min + fy * (y_max - y_min);
        let ypix = sy(yv);
        svg.push_str(&format!(
            "  <line x1=\"{PLOT_LEFT}\" y1=\"{ypix:.1}\" x2=\"{PLOT_RIGHT}\" y2=\"{ypix:.1}\" \
             stroke=\"#dddddd\"/>\n"
        ));
        svg.push_str(&format!(
            "  <text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"end\">{}</text>\n",
            PLOT_LEFT - 8.0,
            ypix + 4.0,
            fmt_tick(yv)
        ));
        let fx = i as f64 / 4.0;
        let xv = x_min + fx * (x_max - x_min);
        let xpix = sx(xv);
        svg.push_str(&format!(
            "  <line x1=\"{xpix:.1}\" y1=\"{PLOT_TOP}\" x2=\"{xpix:.1}\" y2=\"{PLOT_BOTTOM}\" \
             stroke=\"#eeeeee\"/>\n"
        ));
        svg.push_str(&format!(
            "  <text x=\"{xpix:.1}\" y=\"{:.1}\" text-anchor=\"middle\">{}</text>\n",
            PLOT_BOTTOM + 20.0,
            fmt_tick(xv)
        ));
    }

    // Axes on top of the grid.
    svg.push_str(&format!(
        "  <line x1=\"{PLOT_LEFT}\" y1=\"{PLOT_TOP}\" x2=\"{PLOT_LEFT}\" y2=\"{PLOT_BOTTOM}\" \
         stroke=\"black\"/>\n"
    ));
    svg.push_str(&format!(
        "  <line x1=\"{PLOT_LEFT}\" y1=\"{PLOT_BOTTOM}\" x2=\"{PLOT_RIGHT}\" \
         y2=\"{PLOT_BOTTOM}\" stroke=\"black\"/>\n"
    ));
    svg.push_str(&format!(
        "  <text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\">{}</text>\n",
        (PLOT_LEFT + PLOT_RIGHT) / 2.0,
        PLOT_BOTTOM + 42.0,
        escape(x_label)
    ));
    svg.push_str(&format!(
        "  <text x=\"18\" y=\"{:.1}\" text-anchor=\"middle\" \
         transform=\"rotate(-90 18 {:.1})\">{}</text>\n",
        (PLOT_TOP + PLOT_BOTTOM) / 2.0,
        (PLOT_TOP + PLOT_BOTTOM) / 2.0,
        escape(y_label)
    ));

    for (i, s) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        if s.points.len() > 1 {
            let pts: Vec<String> = s
                .points
                .iter()
                .map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y)))
                .collect();
            svg.push_str(&format!(
                "  <polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"2\" \
                 points=\"{}\"/>\n",
                pts.join(" ")
            ));
        }
        for &(x, y) in &s.points {
            svg.push_str(&format!(
                "  <circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"3.5\" fill=\"{color}\"/>\n",
                sx(x),
                sy(y)
            ));
        }
        // Legend entry.
        let ly = PLOT_TOP + 14.0 + i as f64 * 22.0;
        svg.push_str(&format!(
            "  <line x1=\"{:.1}\" y1=\"{ly:.1}\" x2=\"{:.1}\" y2=\"{ly:.1}\" \
             stroke=\"{color}\" stroke-width=\"3\"/>\n",
            PLOT_RIGHT + 16.0,
            PLOT_RIGHT + 44.0,
        ));
        svg.push_str(&format!(
            "  <text x=\"{:.1}\" y=\"{:.1}\">{}</text>\n",
            PLOT_RIGHT + 50.0,
            ly + 4.0,
            escape(&s.name)
        ));
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}

fn bounds(values: &[f64]) -> (f64, f64) {
    let mut min = f64::INFINITY;
    let mut max = f64::NEG_INFINITY;
    for &v in values {
        min = min.min(v);
        max = max.max(v);
    }
    (min, max)
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::decision::DetectorConfig;
    use crate::harness::sweep::{aggregate_points, ood_sweep, SweepConfig, SweepMethod};
    use crate::types::{Label, LabelVector, ScoreKind, ScoreMatrix, ThresholdVector};

    fn small_sweep() -> SweepResult {
        let labels = LabelVector::new(
            vec![Label::Class(0), Label::Class(1)],
            vec!["a".into(), "b".into()],
        )
        .unwrap();
        let in_dist = ScoreMatrix::from_rows(
            ScoreKind::Probability,
            &[vec![0.9, 0.1], vec![0.2, 0.8]],
        )
        .unwrap();
        let ood = ScoreMatrix::from_rows(
            ScoreKind::Probability,
            &[vec![0.3, 0.2], vec![0.1, 0.2], vec![0.25, 0.1]],
        )
        .unwrap();
        let methods = [
            SweepMethod {
                name: "bh".into(),
                detector: DetectorConfig::BhThreshold {
                    thresholds: ThresholdVector::new(vec![0.5, 0.5]).unwrap(),
                },
                in_dist_scores: in_dist.clone(),
                ood_scores: ood.clone(),
            },
            SweepMethod {
                name: "vanilla".into(),
                detector: DetectorConfig::VanillaArgmax,
                in_dist_scores: in_dist,
                ood_scores: ood,
            },
        ];
        ood_sweep(
            &labels,
            &methods,
            &SweepConfig {
                ood_counts: vec![0, 2, 3],
                repetitions: 2,
                seed: 5,
            },
        )
        .unwrap()
    }

    #[test]
    fn sweep_csv_round_trips() {
        let result = small_sweep();
        let text = sweep_csv(&result);
        let (points, methods, counts) = parse_sweep_csv(&text).unwrap();
        assert_eq!(points, result.points());
        assert_eq!(methods, result.method_names);
        assert_eq!(counts, result.ood_counts);
        // Aggregating parsed points reproduces the in-memory means exactly,
        // so the report stage can run from the CSV alone.
        assert_eq!(aggregate_points(&points, &methods, &counts), result.means());
    }

    #[test]
    fn compare_table_has_one_row_per_count_method_pair() {
        let result = small_sweep();
        let table = compare_report(&result);
        let lines: Vec<&str> = table.lines().collect();
        assert_eq!(lines.len(), 1 + 3 * 2);
        assert_eq!(
            lines[0],
            "ood_count,method,accuracy,balanced_accuracy,ood_recall,ood_precision"
        );
        // Vanilla never says OOD: its precision cells are empty, not 0.
        for line in &lines[1..] {
            if line.contains("vanilla") {
                assert!(line.ends_with(','), "empty precision cell in '{line}'");
            }
        }
    }

    #[test]
    fn compare_columns_match_stored_confusions() {
        let result = small_sweep();
        let table = compare_report(&result);
        // Recompute each mean directly from the stored confusion matrices.
        for mean in result.means() {
            let mut accs = Vec::new();
            for row in &result.rows {
                if row.method == mean.method && row.ood_count == mean.ood_count {
                    let cm = &row.report.confusion;
                    accs.push(cm.trace() as f64 / cm.total() as f64);
                }
            }
            let recount = accs.iter().sum::<f64>() / accs.len() as f64;
            assert_eq!(mean.accuracy, recount);
            assert!(table.contains(&fmt_real(recount)));
        }
    }

    #[test]
    fn single_cell_sweep_gives_single_data_row() {
        let labels =
            LabelVector::new(vec![Label::Class(0)], vec!["only".into()]).unwrap();
        let in_dist =
            ScoreMatrix::from_rows(ScoreKind::Probability, &[vec![0.9]]).unwrap();
        let ood = ScoreMatrix::new(ScoreKind::Probability, 1, vec![]).unwrap();
        let result = ood_sweep(
            &labels,
            &[SweepMethod {
                name: "vanilla".into(),
                detector: DetectorConfig::VanillaArgmax,
                in_dist_scores: in_dist,
                ood_scores: ood,
            }],
            &SweepConfig {
                ood_counts: vec![0],
                repetitions: 1,
                seed: 0,
            },
        )
        .unwrap();
        let table = compare_report(&result);
        assert_eq!(table.lines().count(), 2);
    }

    #[test]
    fn confusion_csv_layout() {
        let result = small_sweep();
        let report = result.report_for("bh", 3, 0).unwrap();
        let csv = confusion_csv(
            &report.confusion,
            &["a".to_string(), "b".to_string()],
        )
        .unwrap();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "true,a,b,OOD");
        assert_eq!(lines.len(), 4);
        assert!(lines[3].starts_with("OOD,"));
        // Cell sum equals the number of evaluated samples (2 in-dist + 3).
        let total: u64 = lines[1..]
            .iter()
            .flat_map(|l| l.split(',').skip(1))
            .map(|v| v.parse::<u64>().unwrap())
            .sum();
        assert_eq!(total, 5);
    }

    #[test]
    fn svg_chart_is_deterministic_and_complete() {
        let series = vec![
            ChartSeries {
                name: "bh".into(),
                points: vec![(0.0, 0.9), (10.0, 0.8), (20.0, 0.75)],
            },
            ChartSeries {
                name: "vanilla".into(),
                points: vec![(0.0, 0.9), (10.0, 0.7), (20.0, 0.6)],
            },
        ];
        let a = render_line_chart("accuracy vs OOD count", "ood_count", "accuracy", &series)
            .unwrap();
        let b = render_line_chart("accuracy vs OOD count", "ood_count", "accuracy", &series)
            .unwrap();
        assert_eq!(a, b);
        assert!(a.starts_with("<svg"));
        assert!(a.contains("viewBox=\"0 0 800 500\""));
        assert_eq!(a.matches("<polyline").count(), 2);
        assert!(a.contains(">bh</text>"));
        assert!(a.contains(">vanilla</text>"));
        assert!(a.trim_end().ends_with("</svg>"));
    }

    #[test]
    fn svg_rejects_empty_and_non_finite_input() {
        assert!(render_line_chart("t", "x", "y", &[]).is_err());
        let bad = vec![ChartSeries {
            name: "s".into(),
            points: vec![(0.0, f64::NAN)],
        }];
        assert!(render_line_chart("t", "x", "y", &bad).is_err());
    }

    #[test]
    fn parse_sweep_csv_rejects_malformed_rows() {
        assert!(parse_sweep_csv("").is_err());
        assert!(parse_sweep_csv("wrong,header\n").is_err());
        let good_header =
            "method,ood_count,repetition,accuracy,balanced_accuracy,ood_recall,ood_precision\n";
        let err =
            parse_sweep_csv(&format!("{good_header}bh,0,0,1.0,1.0\n")).unwrap_err();
        assert!(err.to_string().contains("line 2"), "{err}");
        let err = parse_sweep_csv(&format!("{good_header}bh,0,0,x,1.0,0.0,\n"))
            .unwrap_err();
        assert!(err.to_string().contains("bad number"), "{err}");
    }
}
