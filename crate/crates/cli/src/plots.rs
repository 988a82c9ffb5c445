use plotters::coord::ranged1d::ValueFormatter;
use plotters::prelude::*;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Style {
    Line,
    Points,
    Dashed,
}

#[derive(Debug, Clone)]
pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
    pub style: Style,
}

impl Series {
    pub fn new(label: impl Into<String>, points: Vec<(f64, f64)>, style: Style) -> Self {
        Self {
            label: label.into(),
            points,
            style,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    Linear,
    Log,
}

pub struct Figure<'a> {
    pub title: &'a str,
    pub x_label: &'a str,
    pub y_label: &'a str,
    pub x_axis: Axis,
    pub y_axis: Axis,
    pub series: Vec<Series>,
    /// Free text lines drawn in the top-left corner.
    pub notes: Vec<String>,
}

const PALETTE: [RGBColor; 6] = [
    RGBColor(31, 119, 180),
    RGBColor(214, 39, 40),
    RGBColor(44, 160, 44),
    RGBColor(148, 103, 189),
    RGBColor(255, 127, 14),
    RGBColor(23, 190, 207),
];

fn usable(v: f64, axis: Axis) -> bool {
    v.is_finite() && (axis == Axis::Linear || v > 0.0)
}

fn range(values: impl Iterator<Item = f64>, axis: Axis) -> Option<(f64, f64)> {
    let (lo, hi) = values
        .filter(|&v| usable(v, axis))
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    if !lo.is_finite() {
        return None;
    }
    Some(match axis {
        Axis::Log if hi > lo => (lo / 1.2, hi * 1.2),
        Axis::Log => (lo / 2.0, lo * 2.0),
        Axis::Linear if hi > lo => {
            let pad = 0.05 * (hi - lo);
            (lo - pad, hi + pad)
        }
        Axis::Linear => (lo - 1.0, lo + 1.0),
    })
}

type DrawResult<T> = Result<T, String>;

fn err<E: std::fmt::Debug>(e: E) -> String {
    format!("plot rendering failed: {e:?}")
}

/// Renders the figure as an SVG document.
pub fn render(fig: &Figure) -> DrawResult<String> {
    let xr = range(fig.series.iter().flat_map(|s| s.points.iter().map(|p| p.0)), fig.x_axis)
        .ok_or_else(|| format!("figure `{}` has no plottable x values", fig.title))?;
    let yr = range(fig.series.iter().flat_map(|s| s.points.iter().map(|p| p.1)), fig.y_axis)
        .ok_or_else(|| format!("figure `{}` has no plottable y values", fig.title))?;
    let mut out = String::new();
    {
        let root = SVGBackend::with_string(&mut out, (720, 520)).into_drawing_area();
        root.fill(&WHITE).map_err(err)?;
        let mut builder = ChartBuilder::on(&root);
        builder
            .caption(fig.title, ("sans-serif", 20))
            .margin(14)
            .x_label_area_size(44)
            .y_label_area_size(64);
        match (fig.x_axis, fig.y_axis) {
            (Axis::Log, Axis::Log) => {
                let chart = builder
                    .build_cartesian_2d((xr.0..xr.1).log_scale(), (yr.0..yr.1).log_scale())
                    .map_err(err)?;
                draw_chart(chart, fig)?;
            }
            (Axis::Linear, Axis::Log) => {
                let chart = builder
                    .build_cartesian_2d(xr.0..xr.1, (yr.0..yr.1).log_scale())
                    .map_err(err)?;
                draw_chart(chart, fig)?;
            }
            (Axis::Log, Axis::Linear) => {
                let chart = builder
                    .build_cartesian_2d((xr.0..xr.1).log_scale(), yr.0..yr.1)
                    .map_err(err)?;
                draw_chart(chart, fig)?;
            }
            (Axis::Linear, Axis::Linear) => {
                let chart = builder.build_cartesian_2d(xr.0..xr.1, yr.0..yr.1).map_err(err)?;
                draw_chart(chart, fig)?;
            }
        }
        for (i, note) in fig.notes.iter().enumerate() {
            root.draw(&Text::new(
                note.clone(),
                (96, 44 + 18 * i as i32),
                ("sans-serif", 14).into_font().color(&BLACK),
            ))
            .map_err(err)?;
        }
        root.present().map_err(err)?;
    }
    Ok(out)
}

fn draw_chart<'a, 'b: 'a, X, Y>(mut chart: ChartContext<'a, SVGBackend<'b>, Cartesian2d<X, Y>>, fig: &Figure) -> DrawResult<()>
where
    X: Ranged<ValueType = f64> + ValueFormatter<f64>,
    Y: Ranged<ValueType = f64> + ValueFormatter<f64>,
{
    chart
        .configure_mesh()
        .x_desc(fig.x_label)
        .y_desc(fig.y_label)
        .light_line_style(WHITE)
        .draw()
        .map_err(err)?;
    for (i, s) in fig.series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let pts: Vec<(f64, f64)> = s
            .points
            .iter()
            .copied()
            .filter(|&(x, y)| usable(x, fig.x_axis) && usable(y, fig.y_axis))
            .collect();
        let legend = move |(x, y): (i32, i32)| PathElement::new(vec![(x, y), (x + 18, y)], color.stroke_width(2));
        match s.style {
            Style::Line => {
                chart
                    .draw_series(LineSeries::new(pts, color.stroke_width(2)))
                    .map_err(err)?
                    .label(s.label.clone())
                    .legend(legend);
            }
            Style::Dashed => {
                chart
                    .draw_series(DashedLineSeries::new(pts, 8, 5, color.stroke_width(2)))
                    .map_err(err)?
                    .label(s.label.clone())
                    .legend(legend);
            }
            Style::Points => {
                chart
                    .draw_series(pts.into_iter().map(|p| Circle::new(p, 3, color.filled())))
                    .map_err(err)?
                    .label(s.label.clone())
                    .legend(legend);
            }
        }
    }
    chart
        .configure_series_labels()
        .position(SeriesLabelPosition::UpperRight)
        .background_style(WHITE.mix(0.85))
        .border_style(BLACK)
        .draw()
        .map_err(err)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn renders_labels_and_notes() {
        let fig = Figure {
            title: "decay",
            x_label: "t",
            y_label: "p",
            x_axis: Axis::Log,
            y_axis: Axis::Log,
            series: vec![Series::new("data", vec![(1e-3, 10.0), (1e-2, 3.0)], Style::Points)],
            notes: vec!["reference slope -0.5".into()],
        };
        let svg = render(&fig).unwrap();
        assert!(svg.starts_with("<svg"));
        assert!(svg.contains("reference slope -0.5"));
        assert!(svg.contains("data"));
    }

    #[test]
    fn empty_figure_is_an_error() {
        let fig = Figure {
            title: "empty",
            x_label: "x",
            y_label: "y",
            x_axis: Axis::Log,
            y_axis: Axis::Log,
            series: vec![Series::new("none", vec![(0.0, -1.0)], Style::Line)],
            notes: vec![],
        };
        assert!(render(&fig).is_err());
    }
}
