//! Labeled fraction matrices as SVG heatmaps plus CSV.

use std::fmt::Write;

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledMatrix {
    pub row_labels: Vec<String>,
    pub col_labels: Vec<String>,
    /// Row-major, `row_labels.len()` rows of `col_labels.len()` values.
    pub values: Vec<Vec<f64>>,
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum HeatmapError {
    #[error("value {value} at ({row}, {col}) is outside [0, 1]")]
    OutOfRange { row: usize, col: usize, value: f64 },
    #[error("matrix shape does not match its labels")]
    Shape,
}

const CELL: usize = 40;
const LEFT: usize = 160;
const TOP: usize = 120;
/// Fill at value 1; value 0 is white.
const DARK: (f64, f64, f64) = (8.0, 48.0, 107.0);

/// Linear blend from white to [`DARK`]; every channel decreases with `v`.
pub fn shade(v: f64) -> String {
    let ch = |dark: f64| (255.0 - v * (255.0 - dark)).round() as u8;
    format!("#{:02x}{:02x}{:02x}", ch(DARK.0), ch(DARK.1), ch(DARK.2))
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

impl LabeledMatrix {
    fn check(&self) -> Result<(), HeatmapError> {
        if self.values.len() != self.row_labels.len() || self.values.iter().any(|r| r.len() != self.col_labels.len()) {
            return Err(HeatmapError::Shape);
        }
        for (row, r) in self.values.iter().enumerate() {
            for (col, &value) in r.iter().enumerate() {
                if !(0.0..=1.0).contains(&value) {
                    return Err(HeatmapError::OutOfRange { row, col, value });
                }
            }
        }
        Ok(())
    }

    pub fn to_csv(&self) -> Result<String, HeatmapError> {
        self.check()?;
        let mut w = csv::Writer::from_writer(Vec::new());
        let header: Vec<&str> = std::iter::once("").chain(self.col_labels.iter().map(String::as_str)).collect();
        w.write_record(&header).expect("in-memory write");
        for (label, row) in self.row_labels.iter().zip(&self.values) {
            let cells: Vec<String> = std::iter::once(label.clone()).chain(row.iter().map(f64::to_string)).collect();
            w.write_record(&cells).expect("in-memory write");
        }
        Ok(String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8"))
    }
}

/// One `<rect class="cell">` per matrix entry, with row and column labels.
pub fn render_heatmap_svg(m: &LabeledMatrix, title: &str) -> Result<String, HeatmapError> {
    m.check()?;
    let (rows, cols) = (m.row_labels.len(), m.col_labels.len());
    let (width, height) = (LEFT + cols * CELL + 20, TOP + rows * CELL + 20);
    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="11">"#);
    let _ = writeln!(s, r#"<title>{}</title>"#, escape(title));
    let _ = writeln!(s, r##"<rect x="0" y="0" width="{width}" height="{height}" fill="#ffffff"/>"##);
    for (j, label) in m.col_labels.iter().enumerate() {
        let x = LEFT + j * CELL + CELL / 2;
        let _ = writeln!(s, r#"<text class="col-label" x="{x}" y="{}" transform="rotate(-60 {x} {})">{}</text>"#, TOP - 6, TOP - 6, escape(label));
    }
    for (i, label) in m.row_labels.iter().enumerate() {
        let y = TOP + i * CELL + CELL / 2 + 4;
        let _ = writeln!(s, r#"<text class="row-label" x="{}" y="{y}" text-anchor="end">{}</text>"#, LEFT - 6, escape(label));
        for (j, &v) in m.values[i].iter().enumerate() {
            let _ = writeln!(
                s,
                r##"<rect class="cell" x="{}" y="{}" width="{CELL}" height="{CELL}" fill="{}" stroke="#cccccc"><title>{} / {}: {v}</title></rect>"##,
                LEFT + j * CELL,
                TOP + i * CELL,
                shade(v),
                escape(label),
                escape(&m.col_labels[j]),
            );
        }
    }
    s.push_str("</svg>\n");
    Ok(s)
}
