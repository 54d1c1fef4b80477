//! Static SVG maps of a network and an expansion.
//!
//! Sites are placed with an equirectangular projection. Active sites are
//! uniform squares. Candidates are circles whose radius scales linearly with
//! base sales; candidates without base sales get the floor radius. Chosen
//! candidates are filled, the rest outlined.

use std::fmt::Write as _;
use std::path::Path;

use super::IoError;
use crate::geo::Network;

const WIDTH: f64 = 800.0;
const MARGIN: f64 = 40.0;
const LEGEND_HEIGHT: f64 = 70.0;
const SQUARE: f64 = 9.0;
const MIN_RADIUS: f64 = 3.0;
const MAX_RADIUS: f64 = 12.0;
const MISSING_RADIUS: f64 = 2.0;

const ACTIVE_FILL: &str = "#f2c14e";
const CHOSEN_FILL: &str = "#2b6cb0";
const OUTLINE: &str = "#333333";

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
        .replace('\'', "&apos;")
}

/// Radius for each candidate's base sales.
fn radii(values: &[Option<f64>]) -> Vec<f64> {
    let present: Vec<f64> = values.iter().flatten().copied().collect();
    let lo = present.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = present.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    values
        .iter()
        .map(|v| match *v {
            None => MISSING_RADIUS,
            Some(_) if hi <= lo => 0.5 * (MIN_RADIUS + MAX_RADIUS),
            Some(g) => MIN_RADIUS + (g - lo) / (hi - lo) * (MAX_RADIUS - MIN_RADIUS),
        })
        .collect()
}

pub fn render_map_svg(network: &Network, chosen: &[usize], title: &str) -> Result<String, IoError> {
    let sites = network.sites();
    if sites.is_empty() {
        return Err(IoError::Map("empty network".into()));
    }
    if let Some(&bad) = chosen.iter().find(|&&c| c >= sites.len() || sites[c].is_active()) {
        return Err(IoError::Map(format!("chosen index {bad} is not a candidate site")));
    }

    let lat_min = sites.iter().map(|s| s.lat).fold(f64::INFINITY, f64::min);
    let lat_max = sites.iter().map(|s| s.lat).fold(f64::NEG_INFINITY, f64::max);
    let lon_min = sites.iter().map(|s| s.lon).fold(f64::INFINITY, f64::min);
    let lon_max = sites.iter().map(|s| s.lon).fold(f64::NEG_INFINITY, f64::max);
    let aspect = (0.5 * (lat_min + lat_max)).to_radians().cos().max(1e-6);
    let span_x = ((lon_max - lon_min) * aspect).max(1e-9);
    let span_y = (lat_max - lat_min).max(1e-9);
    let inner = WIDTH - 2.0 * MARGIN;
    let scale = inner / span_x.max(span_y);
    let height = span_y * scale + 2.0 * MARGIN + LEGEND_HEIGHT;
    let x = |lon: f64| MARGIN + (lon - lon_min) * aspect * scale;
    let y = |lat: f64| MARGIN + (lat_max - lat) * scale;

    let candidates = network.candidates();
    let r = radii(&candidates.iter().map(|&c| sites[c].base_sales).collect::<Vec<_>>());

    let mut out = String::new();
    let _ = writeln!(out, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{height:.1}" viewBox="0 0 {WIDTH} {height:.1}">"#
    );
    let _ = writeln!(out, "<title>{}</title>", escape(title));
    let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);

    let _ = writeln!(out, r#"<g id="candidates">"#);
    for (&c, &radius) in candidates.iter().zip(&r) {
        let s = &sites[c];
        let fill = if chosen.contains(&c) { CHOSEN_FILL } else { "none" };
        let _ = writeln!(
            out,
            r#"<circle cx="{:.2}" cy="{:.2}" r="{radius:.2}" fill="{fill}" stroke="{CHOSEN_FILL}" stroke-width="1"><title>{}</title></circle>"#,
            x(s.lon),
            y(s.lat),
            escape(&s.id)
        );
    }
    let _ = writeln!(out, "</g>");

    let _ = writeln!(out, r#"<g id="active">"#);
    for s in sites.iter().filter(|s| s.is_active()) {
        let _ = writeln!(
            out,
            r#"<rect x="{:.2}" y="{:.2}" width="{SQUARE}" height="{SQUARE}" fill="{ACTIVE_FILL}" stroke="{OUTLINE}" stroke-width="0.8"><title>{}</title></rect>"#,
            x(s.lon) - SQUARE / 2.0,
            y(s.lat) - SQUARE / 2.0,
            escape(&s.id)
        );
    }
    let _ = writeln!(out, "</g>");

    let ly = height - LEGEND_HEIGHT + 15.0;
    let _ = writeln!(out, r#"<g id="legend" font-family="sans-serif" font-size="12">"#);
    let _ = writeln!(
        out,
        r#"<rect x="{MARGIN}" y="{:.1}" width="{SQUARE}" height="{SQUARE}" fill="{ACTIVE_FILL}" stroke="{OUTLINE}"/><text x="{}" y="{:.1}">active site</text>"#,
        ly - SQUARE / 2.0,
        MARGIN + 16.0,
        ly + 4.0
    );
    let _ = writeln!(
        out,
        r#"<circle cx="{:.1}" cy="{ly:.1}" r="6" fill="{CHOSEN_FILL}" stroke="{CHOSEN_FILL}"/><text x="{:.1}" y="{:.1}">chosen candidate</text>"#,
        MARGIN + 150.0,
        MARGIN + 162.0,
        ly + 4.0
    );
    let _ = writeln!(
        out,
        r#"<circle cx="{:.1}" cy="{ly:.1}" r="6" fill="none" stroke="{CHOSEN_FILL}"/><text x="{:.1}" y="{:.1}">other candidate</text>"#,
        MARGIN + 310.0,
        MARGIN + 322.0,
        ly + 4.0
    );
    let _ = writeln!(
        out,
        r#"<text x="{MARGIN}" y="{:.1}">circle size: candidate base-product sales ({} chosen of {})</text>"#,
        ly + 28.0,
        chosen.len(),
        candidates.len()
    );
    let _ = writeln!(out, "</g>");
    let _ = writeln!(out, "</svg>");
    Ok(out)
}

pub fn emit_map_svg(network: &Network, chosen: &[usize], title: &str, path: &Path) -> Result<(), IoError> {
    super::write_text(path, &render_map_svg(network, chosen, title)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn radius_scale() {
        assert_eq!(radii(&[Some(5.0), Some(5.0)]), vec![7.5, 7.5]);
        assert_eq!(
            radii(&[Some(0.0), Some(10.0), None]),
            vec![MIN_RADIUS, MAX_RADIUS, MISSING_RADIUS]
        );
    }

    #[test]
    fn escapes_markup() {
        assert_eq!(escape("a<b&\"c\""), "a&lt;b&amp;&quot;c&quot;");
    }
}
