//! Figure tables as CSV and their SVG renderings.

use std::collections::BTreeMap;
use std::path::Path;

use cdu_core::eval::{Cell, FigureTable, FIGURES};
use plotters::prelude::*;

use crate::error::{CliError, Result};

pub fn write_table(path: &Path, t: &FigureTable) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| CliError::format(path, e))?;
    w.write_record(&t.columns)
        .map_err(|e| CliError::format(path, e))?;
    for row in &t.rows {
        let rec: Vec<String> = row
            .iter()
            .map(|c| match c {
                Cell::Num(v) => v.to_string(),
                Cell::Text(s) => s.clone(),
            })
            .collect();
        w.write_record(&rec)
            .map_err(|e| CliError::format(path, e))?;
    }
    w.flush().map_err(CliError::io(path))
}

/// Read a table written by [`write_table`]; the figure id is the file stem.
pub fn read_table(path: &Path) -> Result<FigureTable> {
    let figure = path
        .file_stem()
        .and_then(|s| s.to_str())
        .ok_or_else(|| CliError::format(path, "file name is not a figure id"))?;
    let mut t = FigureTable::new(figure).map_err(|e| CliError::format(path, e))?;
    let mut r = csv::Reader::from_path(path).map_err(|e| CliError::format(path, e))?;
    let header: Vec<String> = r
        .headers()
        .map_err(|e| CliError::format(path, e))?
        .iter()
        .map(str::to_string)
        .collect();
    if header != t.columns {
        return Err(CliError::format(
            path,
            format!("columns {header:?} do not match {:?}", t.columns),
        ));
    }
    for rec in r.records() {
        let rec = rec.map_err(|e| CliError::format(path, e))?;
        t.rows.push(
            rec.iter()
                .map(|s| {
                    s.parse::<f64>()
                        .map_or_else(|_| Cell::Text(s.to_string()), Cell::Num)
                })
                .collect(),
        );
    }
    Ok(t)
}

type Series = BTreeMap<String, Vec<(f64, f64)>>;

struct Panel {
    title: String,
    x_label: &'static str,
    series: Series,
    marker: Option<f64>,
}

fn text(row: &[Cell], i: usize) -> String {
    match &row[i] {
        Cell::Text(s) => s.clone(),
        Cell::Num(v) => v.to_string(),
    }
}

fn num(row: &[Cell], i: usize) -> f64 {
    row[i].as_f64().unwrap_or(f64::NAN)
}

fn col(t: &FigureTable, name: &str) -> Result<usize> {
    t.column(name)
        .ok_or_else(|| CliError::Config(format!("figure {} has no column {name}", t.figure)))
}

fn line_panels(t: &FigureTable) -> Result<Vec<Panel>> {
    let method = col(t, "method")?;
    let mut panels: BTreeMap<String, Panel> = BTreeMap::new();
    let mut add =
        |key: String, x_label: &'static str, name: String, x: f64, y: f64, marker: Option<f64>| {
            let p = panels.entry(key.clone()).or_insert_with(|| Panel {
                title: key,
                x_label,
                series: Series::new(),
                marker: None,
            });
            if marker.is_some() {
                p.marker = marker;
            }
            if x.is_finite() && y.is_finite() {
                p.series.entry(name).or_default().push((x, y));
            }
        };
    match t.figure.as_str() {
        "trajectories" => {
            let (s, l, g) = (
                col(t, "step")?,
                col(t, "lagrangian")?,
                col(t, "dual_value")?,
            );
            for r in &t.rows {
                add(
                    "lagrangian".into(),
                    "step",
                    text(r, method),
                    num(r, s),
                    num(r, l),
                    None,
                );
                add(
                    "dual_value".into(),
                    "step",
                    text(r, method),
                    num(r, s),
                    num(r, g),
                    None,
                );
            }
        }
        "descent" => {
            let (p, l, v) = (col(t, "panel")?, col(t, "layer")?, col(t, "value")?);
            for r in &t.rows {
                add(
                    text(r, p),
                    "layer",
                    text(r, method),
                    num(r, l),
                    num(r, v),
                    None,
                );
            }
        }
        "ood" => {
            let (a, x, m, s, d) = (
                col(t, "axis")?,
                col(t, "value")?,
                col(t, "metric")?,
                col(t, "score")?,
                col(t, "in_distribution")?,
            );
            for r in &t.rows {
                let marker = (num(r, d) == 1.0).then(|| num(r, x));
                let key = format!("{} vs {}", text(r, m), text(r, a));
                add(key, "value", text(r, method), num(r, x), num(r, s), marker);
            }
        }
        other => {
            return Err(CliError::Config(format!(
                "figure {other} is not a line figure"
            )))
        }
    }
    let mut out: Vec<Panel> = panels
        .into_values()
        .filter(|p| !p.series.is_empty())
        .collect();
    for p in &mut out {
        for pts in p.series.values_mut() {
            pts.sort_by(|a, b| a.0.total_cmp(&b.0));
        }
    }
    Ok(out)
}

fn bounds(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| {
        (a.min(v), b.max(v))
    });
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    let pad = if hi > lo {
        0.05 * (hi - lo)
    } else {
        0.5 * lo.abs().max(1.0)
    };
    (lo - pad, hi + pad)
}

fn plot_err<E: std::fmt::Display>(path: &Path) -> impl Fn(E) -> CliError + '_ {
    move |e| CliError::format(path, e)
}

fn draw_lines(path: &Path, figure: &str, panels: &[Panel]) -> Result<()> {
    let size = (480 * panels.len() as u32, 360);
    let root = SVGBackend::new(path, size).into_drawing_area();
    root.fill(&WHITE).map_err(plot_err(path))?;
    let areas = root.split_evenly((1, panels.len()));
    for (area, p) in areas.iter().zip(panels) {
        let (x0, x1) = bounds(p.series.values().flatten().map(|q| q.0));
        let (y0, y1) = bounds(p.series.values().flatten().map(|q| q.1));
        let mut chart = ChartBuilder::on(area)
            .caption(format!("{figure}: {}", p.title), ("sans-serif", 16))
            .margin(10)
            .x_label_area_size(30)
            .y_label_area_size(50)
            .build_cartesian_2d(x0..x1, y0..y1)
            .map_err(plot_err(path))?;
        chart
            .configure_mesh()
            .x_desc(p.x_label)
            .draw()
            .map_err(plot_err(path))?;
        for (i, (name, pts)) in p.series.iter().enumerate() {
            let color = Palette99::pick(i).to_rgba();
            chart
                .draw_series(LineSeries::new(pts.iter().copied(), color.stroke_width(2)))
                .map_err(plot_err(path))?
                .label(name.clone())
                .legend(move |(x, y)| {
                    PathElement::new(vec![(x, y), (x + 16, y)], color.stroke_width(2))
                });
        }
        if let Some(m) = p.marker {
            chart
                .draw_series(LineSeries::new([(m, y0), (m, y1)], BLACK.mix(0.4)))
                .map_err(plot_err(path))?;
        }
        chart
            .configure_series_labels()
            .background_style(WHITE.mix(0.8))
            .border_style(BLACK)
            .draw()
            .map_err(plot_err(path))?;
    }
    root.present().map_err(plot_err(path))
}

fn draw_histogram(path: &Path, t: &FigureTable, bins: usize) -> Result<()> {
    let (m, r, f) = (col(t, "method")?, col(t, "rate")?, col(t, "r_min")?);
    let mut by_method: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for row in &t.rows {
        let v = num(row, r);
        if v.is_finite() {
            by_method.entry(text(row, m)).or_default().push(v);
        }
    }
    let r_min = t.rows.first().map(|row| num(row, f));
    let hi = by_method
        .values()
        .flatten()
        .fold(r_min.unwrap_or(1.0), |a, &b| a.max(b));
    let width = hi / bins as f64;
    let count = |v: &[f64]| {
        let mut c = vec![0u32; bins];
        for &x in v {
            c[((x / width) as usize).min(bins - 1)] += 1;
        }
        c
    };
    let counts: Vec<(String, Vec<u32>)> = by_method
        .iter()
        .map(|(k, v)| (k.clone(), count(v)))
        .collect();
    let top = counts
        .iter()
        .flat_map(|(_, c)| c.iter().copied())
        .max()
        .unwrap_or(1);

    let root = SVGBackend::new(path, (640, 400)).into_drawing_area();
    root.fill(&WHITE).map_err(plot_err(path))?;
    let mut chart = ChartBuilder::on(&root)
        .caption("rate-histogram", ("sans-serif", 16))
        .margin(10)
        .x_label_area_size(30)
        .y_label_area_size(50)
        .build_cartesian_2d(
            (0u32..bins as u32).into_segmented(),
            0u32..top + top / 10 + 1,
        )
        .map_err(plot_err(path))?;
    chart
        .configure_mesh()
        .x_desc("rate (bin)")
        .y_desc("users")
        .x_label_formatter(&|s| match s {
            SegmentValue::Exact(i) | SegmentValue::CenterOf(i) => {
                format!("{:.1}", (*i as f64 + 0.5) * width)
            }
            SegmentValue::Last => String::new(),
        })
        .draw()
        .map_err(plot_err(path))?;
    for (i, (name, c)) in counts.iter().enumerate() {
        let color = Palette99::pick(i).mix(0.45);
        chart
            .draw_series(
                Histogram::vertical(&chart)
                    .style(color.filled())
                    .data(c.iter().enumerate().map(|(b, &n)| (b as u32, n))),
            )
            .map_err(plot_err(path))?
            .label(name.clone())
            .legend(move |(x, y)| Rectangle::new([(x, y - 5), (x + 12, y + 5)], color.filled()));
    }
    if let Some(rm) = r_min {
        let b = ((rm / width) as u32).min(bins as u32 - 1);
        chart
            .draw_series(LineSeries::new(
                [(SegmentValue::Exact(b), 0), (SegmentValue::Exact(b), top)],
                BLACK.stroke_width(2),
            ))
            .map_err(plot_err(path))?
            .label("r_min")
            .legend(|(x, y)| PathElement::new(vec![(x, y), (x + 16, y)], BLACK.stroke_width(2)));
    }
    chart
        .configure_series_labels()
        .background_style(WHITE.mix(0.8))
        .border_style(BLACK)
        .draw()
        .map_err(plot_err(path))?;
    root.present().map_err(plot_err(path))
}

/// Render `t` to an SVG file. Empty tables are an error.
pub fn render(path: &Path, t: &FigureTable) -> Result<()> {
    if !FIGURES.iter().any(|(f, _)| *f == t.figure) {
        return Err(CliError::Config(format!("unknown figure {}", t.figure)));
    }
    if t.rows.is_empty() {
        return Err(CliError::Config(format!("figure {} has no rows", t.figure)));
    }
    if t.figure == "rate-histogram" {
        return draw_histogram(path, t, 30);
    }
    let panels = line_panels(t)?;
    if panels.is_empty() {
        return Err(CliError::Config(format!(
            "figure {} has no finite points",
            t.figure
        )));
    }
    draw_lines(path, &t.figure, &panels)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn descent() -> FigureTable {
        let mut t = FigureTable::new("descent").unwrap();
        for l in 0..4 {
            for (panel, v) in [
                ("grad_norm", 1.0 / (l + 1) as f64),
                ("slackness", 0.1 * l as f64),
            ] {
                t.rows.push(vec![
                    Cell::Text("cdu".into()),
                    Cell::Text(panel.into()),
                    Cell::Num(l as f64),
                    Cell::Num(v),
                ]);
            }
        }
        t
    }

    #[test]
    fn table_csv_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("descent.csv");
        let t = descent();
        write_table(&p, &t).unwrap();
        assert_eq!(read_table(&p).unwrap(), t);
    }

    #[test]
    fn renders_svg_and_rejects_empty_tables() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("descent.svg");
        render(&p, &descent()).unwrap();
        assert!(std::fs::read_to_string(&p).unwrap().starts_with("<svg"));
        let empty = FigureTable::new("ood").unwrap();
        assert!(matches!(render(&p, &empty), Err(CliError::Config(_))));
    }

    #[test]
    fn renders_rate_histogram() {
        let mut t = FigureTable::new("rate-histogram").unwrap();
        for (m, r) in [("cdu", 2.0), ("cdu", 0.4), ("sa", 1.7)] {
            t.rows
                .push(vec![Cell::Text(m.into()), Cell::Num(r), Cell::Num(1.5)]);
        }
        let dir = tempfile::tempdir().unwrap();
        render(&dir.path().join("h.svg"), &t).unwrap();
    }
}
