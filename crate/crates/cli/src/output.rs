//! File outputs: CSV tables (one-line schema header + provenance line) and
//! SVG heatmaps.
//!
//! Data rows are a pure function of the run configuration — floats are
//! written in Rust's shortest round-trip form so re-running a sweep yields
//! byte-identical rows.  The provenance line carries the config hash, the
//! crate version and a wall-clock timestamp; it is the only line allowed to
//! differ between reruns.

use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use sha2::{Digest, Sha256};

use crate::error::{CliError, Result};

/// Hex SHA-256 of the raw config text, the sweep's identity for resume.
pub fn config_hash(config_text: &str) -> String {
    let mut hasher = Sha256::new();
    hasher.update(config_text.as_bytes());
    let digest = hasher.finalize();
    let mut hex = String::with_capacity(64);
    for byte in digest {
        let _ = write!(hex, "{byte:02x}");
    }
    hex
}

pub fn provenance_line(config_text: &str) -> String {
    let stamp = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    format!(
        "# provenance: config_sha256={} version={} generated_unix={stamp}",
        config_hash(config_text),
        env!("CARGO_PKG_VERSION")
    )
}

/// Extracts the config hash recorded in a CSV's provenance line.
pub fn recorded_hash(line: &str) -> Option<&str> {
    line.split_whitespace()
        .find_map(|field| field.strip_prefix("config_sha256="))
}

pub fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(&format!("creating {}", dir.display()), e))
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| CliError::io(&format!("writing {}", path.display()), e))
}

/// Formats an optional count; absent values stay empty so the column parses
/// as "no steady cycle" rather than a sentinel number.
pub fn opt_usize(v: Option<usize>) -> String {
    v.map(|n| n.to_string()).unwrap_or_default()
}

/// Incremental CSV sink: headers on creation, rows appended and flushed as
/// they arrive so an interrupted sweep keeps its completed prefix.
pub struct CsvSink {
    file: fs::File,
    path: std::path::PathBuf,
}

impl CsvSink {
    pub fn create(path: &Path, provenance: &str, schema: &str) -> Result<CsvSink> {
        let mut file = fs::File::create(path)
            .map_err(|e| CliError::io(&format!("creating {}", path.display()), e))?;
        file.write_all(format!("{provenance}\n{schema}\n").as_bytes())
            .map_err(|e| CliError::io(&format!("writing {}", path.display()), e))?;
        Ok(CsvSink { file, path: path.to_path_buf() })
    }

    /// Reopens an existing CSV for appending, verifying the stored config
    /// hash and returning the number of complete data rows already present.
    pub fn resume(path: &Path, config_text: &str, schema: &str) -> Result<(CsvSink, usize)> {
        let existing = fs::read_to_string(path)
            .map_err(|e| CliError::io(&format!("reading {}", path.display()), e))?;
        let mut lines = existing.lines();
        let head = lines.next().unwrap_or("");
        match recorded_hash(head) {
            Some(hash) if hash == config_hash(config_text) => {}
            _ => {
                return Err(CliError::Config(format!(
                    "{} was produced by a different config; refusing to resume",
                    path.display()
                )));
            }
        }
        if lines.next() != Some(schema) {
            return Err(CliError::Config(format!(
                "{} has a different schema; refusing to resume",
                path.display()
            )));
        }
        // Keep only complete rows: a crash mid-write may leave a torn tail.
        let header_len = existing.lines().take(2).map(|l| l.len() + 1).sum::<usize>();
        let body = &existing[header_len.min(existing.len())..];
        let mut keep = header_len;
        let mut rows = 0;
        let mut cursor = 0;
        while let Some(nl) = body[cursor..].find('\n') {
            cursor += nl + 1;
            keep = header_len + cursor;
            rows += 1;
        }
        let mut file = fs::OpenOptions::new()
            .read(true)
            .write(true)
            .open(path)
            .map_err(|e| CliError::io(&format!("opening {}", path.display()), e))?;
        file.set_len(keep as u64)
            .map_err(|e| CliError::io(&format!("truncating {}", path.display()), e))?;
        use std::io::Seek;
        file.seek(std::io::SeekFrom::End(0))
            .map_err(|e| CliError::io(&format!("seeking {}", path.display()), e))?;
        Ok((CsvSink { file, path: path.to_path_buf() }, rows))
    }

    pub fn write_row(&mut self, row: &str) -> Result<()> {
        self.file
            .write_all(row.as_bytes())
            .and_then(|_| self.file.write_all(b"\n"))
            .and_then(|_| self.file.flush())
            .map_err(|e| CliError::io(&format!("writing {}", self.path.display()), e))
    }
}

/// One heatmap cell; `value` is ignored for cells whose regime is not a
/// swimming state — those render as hatched.
pub struct HeatCell {
    pub value: f64,
    pub regime: &'static str,
}

/// Renders a grid as an SVG heatmap: one rect per cell, column index along
/// x, row index along y (first row at the top).  Swimming cells use a
/// single-hue ramp; every failure regime gets its own hatch pattern.  The
/// value range is printed in the legend.
pub fn heatmap_svg(
    x_label: &str,
    y_label: &str,
    x_values: &[f64],
    y_values: &[f64],
    cells: &[HeatCell],
) -> String {
    assert_eq!(cells.len(), x_values.len() * y_values.len());
    let cell_px = 24.0;
    let margin_left = 64.0;
    let margin_top = 24.0;
    let plot_w = cell_px * x_values.len() as f64;
    let plot_h = cell_px * y_values.len() as f64;
    let width = margin_left + plot_w + 24.0;
    let height = margin_top + plot_h + 88.0;

    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for cell in cells {
        if cell.regime == "ok" {
            lo = lo.min(cell.value);
            hi = hi.max(cell.value);
        }
    }
    if !(lo <= hi) {
        lo = 0.0;
        hi = 0.0;
    }

    let shade = |v: f64| -> String {
        let t = if hi > lo { ((v - lo) / (hi - lo)).clamp(0.0, 1.0) } else { 0.0 };
        // Single-hue blue ramp, light to dark.
        let lerp = |a: f64, b: f64| (a + (b - a) * t).round() as u8;
        format!("rgb({},{},{})", lerp(247.0, 8.0), lerp(251.0, 48.0), lerp(255.0, 107.0))
    };

    let mut svg = String::new();
    let _ = write!(
        svg,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width:.0}\" height=\"{height:.0}\" \
         viewBox=\"0 0 {width:.0} {height:.0}\" font-family=\"monospace\" font-size=\"11\">\n"
    );
    svg.push_str("<defs>\n");
    for (regime, color) in [
        ("self_contact", "#b22"),
        ("coiling", "#a2b"),
        ("floppy", "#888"),
        ("not_converged", "#d81"),
    ] {
        let _ = write!(
            svg,
            "<pattern id=\"hatch_{regime}\" width=\"6\" height=\"6\" \
             patternUnits=\"userSpaceOnUse\" patternTransform=\"rotate(45)\">\
             <rect width=\"6\" height=\"6\" fill=\"#eee\"/>\
             <line x1=\"0\" y1=\"0\" x2=\"0\" y2=\"6\" stroke=\"{color}\" stroke-width=\"2\"/>\
             </pattern>\n"
        );
    }
    let _ = write!(
        svg,
        "<linearGradient id=\"ramp\"><stop offset=\"0\" stop-color=\"{}\"/>\
         <stop offset=\"1\" stop-color=\"{}\"/></linearGradient>\n",
        shade(lo),
        shade(hi)
    );
    svg.push_str("</defs>\n");

    for (iy, _) in y_values.iter().enumerate() {
        for (ix, _) in x_values.iter().enumerate() {
            let cell = &cells[iy * x_values.len() + ix];
            let x = margin_left + cell_px * ix as f64;
            let y = margin_top + cell_px * iy as f64;
            let fill = match cell.regime {
                "ok" => shade(cell.value),
                other => format!("url(#hatch_{other})"),
            };
            let _ = write!(
                svg,
                "<rect x=\"{x:.1}\" y=\"{y:.1}\" width=\"{cell_px}\" height=\"{cell_px}\" \
                 fill=\"{fill}\" stroke=\"#fff\" stroke-width=\"0.5\"><title>{xl}={xv} {yl}={yv} \
                 value={v} regime={r}</title></rect>\n",
                xl = x_label,
                xv = x_values[ix],
                yl = y_label,
                yv = y_values[iy],
                v = cell.value,
                r = cell.regime,
            );
        }
    }

    // Axis annotations: label plus the first/last tick values.
    let _ = write!(
        svg,
        "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\">{x_label}</text>\n",
        margin_left + plot_w / 2.0,
        margin_top + plot_h + 30.0
    );
    let _ = write!(
        svg,
        "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"start\">{}</text>\n",
        margin_left,
        margin_top + plot_h + 14.0,
        x_values.first().copied().unwrap_or(0.0)
    );
    let _ = write!(
        svg,
        "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"end\">{}</text>\n",
        margin_left + plot_w,
        margin_top + plot_h + 14.0,
        x_values.last().copied().unwrap_or(0.0)
    );
    let _ = write!(
        svg,
        "<text x=\"8\" y=\"{:.1}\">{y_label}={}</text>\n",
        margin_top + 10.0,
        y_values.first().copied().unwrap_or(0.0)
    );
    let _ = write!(
        svg,
        "<text x=\"8\" y=\"{:.1}\">{y_label}={}</text>\n",
        margin_top + plot_h - 4.0,
        y_values.last().copied().unwrap_or(0.0)
    );
    // Legend: printed value range plus regime hatch swatches.
    let ly = margin_top + plot_h + 48.0;
    let _ = write!(
        svg,
        "<rect x=\"{margin_left}\" y=\"{ly:.1}\" width=\"120\" height=\"12\" fill=\"url(#ramp)\"/>\n\
         <text x=\"{:.1}\" y=\"{:.1}\">value range [{lo}, {hi}]</text>\n",
        margin_left + 128.0,
        ly + 10.0,
    );
    for (i, regime) in ["self_contact", "coiling", "floppy", "not_converged"].iter().enumerate() {
        let y = ly + 20.0 + 14.0 * i as f64;
        let _ = write!(
            svg,
            "<rect x=\"{margin_left}\" y=\"{y:.1}\" width=\"12\" height=\"12\" \
             fill=\"url(#hatch_{regime})\"/>\
             <text x=\"{:.1}\" y=\"{:.1}\">{regime}</text>\n",
            margin_left + 18.0,
            y + 10.0,
        );
    }
    svg.push_str("</svg>\n");
    svg
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hash_is_stable_and_hex() {
        let h = config_hash("design.kind = finger\n");
        assert_eq!(h.len(), 64);
        assert_eq!(h, config_hash("design.kind = finger\n"));
        assert!(h.chars().all(|c| c.is_ascii_hexdigit()));
    }

    #[test]
    fn provenance_hash_round_trips() {
        let line = provenance_line("a = 1\n");
        assert_eq!(recorded_hash(&line), Some(config_hash("a = 1\n").as_str()));
    }

    #[test]
    fn heatmap_mentions_every_cell_once_and_hatches_failures() {
        let cells = vec![
            HeatCell { value: 0.1, regime: "ok" },
            HeatCell { value: 0.2, regime: "ok" },
            HeatCell { value: 0.0, regime: "coiling" },
            HeatCell { value: 0.3, regime: "ok" },
        ];
        let svg = heatmap_svg("Mn", "Fn", &[0.0, 250.0], &[5.0, 30.0], &cells);
        assert_eq!(svg.matches("<rect x=").count(), 4 + 1 + 4); // cells + ramp + swatches
        assert!(svg.contains("url(#hatch_coiling)"));
        assert!(svg.contains("value range ["));
    }
}
