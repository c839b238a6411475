//! Error-vector scatter plots as standalone SVG.

use std::fmt::Write;

use chartforge::metrics::ErrorVectorSet;

pub const VIEW: f64 = 1000.0;
const MARGIN: f64 = 50.0;

/// Maps data coordinates (meters, y up) into the view box (y down),
/// preserving aspect ratio.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ViewMap {
    pub scale: f64,
    pub x_offset: f64,
    pub y_offset: f64,
}

impl ViewMap {
    pub fn fit(points: impl IntoIterator<Item = [f64; 2]>) -> Self {
        let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
        for p in points {
            for a in 0..2 {
                lo[a] = lo[a].min(p[a]);
                hi[a] = hi[a].max(p[a]);
            }
        }
        if !lo[0].is_finite() {
            lo = [0.0; 2];
            hi = [1.0; 2];
        }
        let span = [hi[0] - lo[0], hi[1] - lo[1]];
        let inner = VIEW - 2.0 * MARGIN;
        let scale = inner / span[0].max(span[1]).max(1e-12);
        let pad = [(inner - scale * span[0]) / 2.0, (inner - scale * span[1]) / 2.0];
        Self {
            scale,
            x_offset: MARGIN + pad[0] - scale * lo[0],
            y_offset: VIEW - MARGIN - pad[1] + scale * lo[1],
        }
    }

    pub fn apply(&self, p: [f64; 2]) -> [f64; 2] {
        [self.scale * p[0] + self.x_offset, -self.scale * p[1] + self.y_offset]
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// True positions (blue), predictions (red) and one `<line>` from each
/// truth to its prediction.
pub fn render_error_vectors(ev: &ErrorVectorSet, title: &str) -> String {
    let map = ViewMap::fit(ev.pairs.iter().flat_map(|(t, p)| [*t, *p]));
    let mut s = String::new();
    let _ = writeln!(s, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
    let _ = writeln!(
        s,
        "<!-- data-to-view: x_view = {:.9} * x + {:.9}; y_view = {:.9} * y + {:.9} -->",
        map.scale, map.x_offset, -map.scale, map.y_offset
    );
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 {VIEW} {VIEW}" width="{VIEW}" height="{VIEW}">"#
    );
    let _ = writeln!(s, "<title>{}</title>", escape(title));
    let _ = writeln!(s, r#"<rect width="{VIEW}" height="{VIEW}" fill="white"/>"#);
    let _ = writeln!(s, r##"<g id="errors" stroke="#888888" stroke-width="1">"##);
    for (t, p) in &ev.pairs {
        let (a, b) = (map.apply(*t), map.apply(*p));
        let _ = writeln!(s, r#"<line x1="{:.3}" y1="{:.3}" x2="{:.3}" y2="{:.3}"/>"#, a[0], a[1], b[0], b[1]);
    }
    let _ = writeln!(s, "</g>");
    for (id, colour, pick) in [("truth", "#1f4e9c", 0usize), ("predicted", "#c0392b", 1)] {
        let _ = writeln!(s, r#"<g id="{id}" fill="{colour}">"#);
        for pair in &ev.pairs {
            let q = map.apply(if pick == 0 { pair.0 } else { pair.1 });
            let _ = writeln!(s, r#"<circle cx="{:.3}" cy="{:.3}" r="3"/>"#, q[0], q[1]);
        }
        let _ = writeln!(s, "</g>");
    }
    s.push_str("</svg>\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn view_map_fills_the_box() {
        let m = ViewMap::fit([[0.0, 0.0], [10.0, 5.0]]);
        assert_eq!(m.apply([0.0, 0.0])[0], MARGIN);
        assert!((m.apply([10.0, 0.0])[0] - (VIEW - MARGIN)).abs() < 1e-9);
        // y is flipped and the shorter axis is centred
        let top = m.apply([0.0, 5.0])[1];
        let bottom = m.apply([0.0, 0.0])[1];
        assert!(top < bottom);
        assert!(((top + bottom) / 2.0 - VIEW / 2.0).abs() < 1e-9);
    }

    #[test]
    fn one_line_per_point() {
        let ev = ErrorVectorSet {
            pairs: (0..7).map(|i| ([i as f64, 0.0], [i as f64, 1.0])).collect(),
        };
        let svg = render_error_vectors(&ev, "a < b & c");
        assert_eq!(svg.matches("<line ").count(), 7);
        assert_eq!(svg.matches("<circle ").count(), 14);
        assert!(svg.contains("a &lt; b &amp; c"));
        assert!(svg.contains("data-to-view"));
    }

    #[test]
    fn degenerate_inputs_render() {
        let one = ErrorVectorSet {
            pairs: vec![([1.0, 1.0], [1.0, 1.0])],
        };
        assert!(render_error_vectors(&one, "x").contains("<line "));
        let none = ErrorVectorSet { pairs: vec![] };
        assert!(!render_error_vectors(&none, "x").contains("<line "));
    }
}
