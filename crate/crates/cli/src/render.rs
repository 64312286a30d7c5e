//! SVG drawings of roots, panel strips and dendrograms.
//!
//! Laterals are coloured by correspondence label, so a lateral keeps its
//! colour across the panels of a geodesic or mode sweep.

use std::collections::HashMap;

use svg::node::element::{Group, Line, Polyline, Rectangle, Text};
use svg::Document;
use treeshape::clustering::Dendrogram;
use treeshape::{Point2, RootTree};

#[derive(Debug, Clone, PartialEq)]
pub struct RenderStyle {
    pub stroke_width: f64,
    pub main_color: String,
    /// Lateral colours, indexed by correspondence label modulo length.
    pub palette: Vec<String>,
    /// Size of one panel in pixels.
    pub width: f64,
    pub height: f64,
    pub margin: f64,
}

impl Default for RenderStyle {
    fn default() -> Self {
        RenderStyle {
            stroke_width: 2.0,
            main_color: "#2f2f2f".into(),
            palette: [
                "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22",
                "#17becf",
            ]
            .map(String::from)
            .to_vec(),
            width: 240.0,
            height: 320.0,
            margin: 16.0,
        }
    }
}

impl RenderStyle {
    pub fn validate(&self) -> Result<(), String> {
        let dims = [self.stroke_width, self.width, self.height];
        if dims.iter().any(|d| !(d.is_finite() && *d > 0.0)) {
            return Err("stroke width and panel size must be positive".into());
        }
        if !(self.margin >= 0.0) || 2.0 * self.margin >= self.width.min(self.height) {
            return Err("margin must be nonnegative and leave room for the drawing".into());
        }
        if self.palette.is_empty() {
            return Err("palette is empty".into());
        }
        Ok(())
    }

    fn color(&self, label: usize) -> &str {
        &self.palette[label % self.palette.len()]
    }
}

/// A root with optional per-lateral correspondence labels and a caption.
#[derive(Debug, Clone)]
pub struct Panel<'a> {
    pub tree: &'a RootTree,
    pub labels: Option<&'a [usize]>,
    pub caption: Option<String>,
}

impl<'a> Panel<'a> {
    pub fn new(tree: &'a RootTree) -> Self {
        Panel {
            tree,
            labels: None,
            caption: None,
        }
    }

    pub fn labeled(tree: &'a RootTree, labels: &'a [usize]) -> Self {
        Panel {
            tree,
            labels: Some(labels),
            caption: None,
        }
    }

    pub fn caption(mut self, text: impl Into<String>) -> Self {
        self.caption = Some(text.into());
        self
    }
}

#[derive(Debug, Clone, Copy)]
struct Bounds {
    min_x: f64,
    max_x: f64,
    min_y: f64,
    max_y: f64,
}

impl Bounds {
    fn of(trees: &[&RootTree]) -> Bounds {
        let mut b = Bounds {
            min_x: f64::INFINITY,
            max_x: f64::NEG_INFINITY,
            min_y: f64::INFINITY,
            max_y: f64::NEG_INFINITY,
        };
        let points = trees
            .iter()
            .flat_map(|t| t.main().points().iter().chain(t.laterals().iter().flat_map(|l| l.branch.points())));
        for p in points {
            b.min_x = b.min_x.min(p.x);
            b.max_x = b.max_x.max(p.x);
            b.min_y = b.min_y.min(p.y);
            b.max_y = b.max_y.max(p.y);
        }
        b
    }

    fn span(&self) -> (f64, f64) {
        ((self.max_x - self.min_x).max(1e-9), (self.max_y - self.min_y).max(1e-9))
    }
}

/// Maps root coordinates (y up) to panel pixels (y down), keeping aspect.
#[derive(Debug, Clone, Copy)]
struct Frame {
    scale: f64,
    bounds: Bounds,
    offset_x: f64,
    offset_y: f64,
}

impl Frame {
    fn fit(bounds: Bounds, style: &RenderStyle, caption_room: f64) -> Frame {
        let (sx, sy) = bounds.span();
        let avail_w = style.width - 2.0 * style.margin;
        let avail_h = style.height - 2.0 * style.margin - caption_room;
        let scale = (avail_w / sx).min(avail_h / sy);
        Frame {
            scale,
            bounds,
            offset_x: style.margin + (avail_w - sx * scale) / 2.0,
            offset_y: style.margin + (avail_h - sy * scale) / 2.0,
        }
    }

    fn map(&self, p: &Point2) -> (f64, f64) {
        (
            self.offset_x + (p.x - self.bounds.min_x) * self.scale,
            self.offset_y + (self.bounds.max_y - p.y) * self.scale,
        )
    }
}

fn polyline(points: &[Point2], frame: &Frame, color: &str, width: f64) -> Polyline {
    let coords = points
        .iter()
        .map(|p| {
            let (x, y) = frame.map(p);
            format!("{x:.2},{y:.2}")
        })
        .collect::<Vec<_>>()
        .join(" ");
    Polyline::new()
        .set("points", coords)
        .set("fill", "none")
        .set("stroke", color)
        .set("stroke-width", width)
        .set("stroke-linecap", "round")
        .set("stroke-linejoin", "round")
}

fn panel_group(panel: &Panel, frame: &Frame, style: &RenderStyle) -> Group {
    let tree = panel.tree;
    let mut g = Group::new().set("class", "root").set("data-id", tree.id());
    g = g.add(polyline(tree.main().points(), frame, &style.main_color, style.stroke_width * 1.5));
    for (k, lat) in tree.laterals().iter().enumerate() {
        if lat.branch.is_virtual() {
            continue;
        }
        let label = panel.labels.and_then(|l| l.get(k).copied()).unwrap_or(k);
        g = g.add(polyline(lat.branch.points(), frame, style.color(label), style.stroke_width));
    }
    if let Some(text) = &panel.caption {
        g = g.add(
            Text::new(text.as_str())
                .set("x", style.width / 2.0)
                .set("y", style.height - style.margin / 2.0)
                .set("text-anchor", "middle")
                .set("font-family", "sans-serif")
                .set("font-size", 12),
        );
    }
    g
}

fn document(width: f64, height: f64) -> Document {
    Document::new()
        .set("width", width)
        .set("height", height)
        .set("viewBox", (0, 0, width, height))
        .add(
            Rectangle::new()
                .set("width", "100%")
                .set("height", "100%")
                .set("fill", "white"),
        )
}

/// One root in a single panel. Without labels, lateral `k` takes colour `k`.
pub fn render_tree(tree: &RootTree, style: &RenderStyle, labels: Option<&[usize]>) -> String {
    render_strip(
        &[Panel {
            tree,
            labels,
            caption: None,
        }],
        style,
    )
}

/// Panels side by side on a common scale.
pub fn render_strip(panels: &[Panel], style: &RenderStyle) -> String {
    let trees: Vec<&RootTree> = panels.iter().map(|p| p.tree).collect();
    let caption_room = if panels.iter().any(|p| p.caption.is_some()) { 14.0 } else { 0.0 };
    let bounds = Bounds::of(&trees);
    let mut doc = document(style.width * panels.len().max(1) as f64, style.height);
    for (i, panel) in panels.iter().enumerate() {
        // common scale, each panel centred on its own tree
        let mut frame = Frame::fit(bounds, style, caption_room);
        let own = Bounds::of(&[panel.tree]);
        let (ox, oy) = frame.map(&Point2::new(own.min_x, own.max_y));
        let (w, h) = ((own.max_x - own.min_x) * frame.scale, (own.max_y - own.min_y) * frame.scale);
        frame.offset_x += (style.width - w) / 2.0 - ox;
        frame.offset_y += style.margin.max((style.height - caption_room - h) / 2.0) - oy;
        let g = panel_group(panel, &frame, style).set("transform", format!("translate({},0)", i as f64 * style.width));
        doc = doc.add(g);
    }
    doc.to_string()
}

/// Dendrogram with leaves along the bottom and merge height upward. Leaves
/// are coloured by cluster when `clusters` is given.
pub fn render_dendrogram(dend: &Dendrogram, style: &RenderStyle, clusters: Option<&[usize]>) -> String {
    let m = dend.leaves();
    let order = dend.leaf_order();
    let label_room = 60.0;
    let width = (m.max(2) as f64 * 24.0 + 2.0 * style.margin).max(style.width);
    let height = style.height;
    let plot_h = height - 2.0 * style.margin - label_room;
    let top = dend.merges.last().map_or(1.0, |mg| mg.height).max(1e-12);
    let step = (width - 2.0 * style.margin) / m.max(1) as f64;

    let mut pos: HashMap<usize, (f64, f64)> = HashMap::new();
    for (slot, &leaf) in order.iter().enumerate() {
        pos.insert(leaf, (style.margin + step * (slot as f64 + 0.5), style.margin + plot_h));
    }
    let y_of = |h: f64| style.margin + plot_h * (1.0 - h / top);
    let line = |x1: f64, y1: f64, x2: f64, y2: f64| {
        Line::new()
            .set("x1", format!("{x1:.2}"))
            .set("y1", format!("{y1:.2}"))
            .set("x2", format!("{x2:.2}"))
            .set("y2", format!("{y2:.2}"))
            .set("stroke", style.main_color.as_str())
            .set("stroke-width", style.stroke_width / 2.0)
    };

    let mut doc = document(width, height);
    for (k, mg) in dend.merges.iter().enumerate() {
        let (xl, yl) = pos[&mg.left];
        let (xr, yr) = pos[&mg.right];
        let y = y_of(mg.height);
        doc = doc.add(line(xl, yl, xl, y)).add(line(xr, yr, xr, y)).add(line(xl, y, xr, y));
        pos.insert(m + k, ((xl + xr) / 2.0, y));
    }
    for &leaf in &order {
        let (x, y) = pos[&leaf];
        let color = clusters.map_or(style.main_color.as_str(), |c| style.color(c[leaf]));
        doc = doc.add(
            Text::new(dend.leaf_labels[leaf].as_str())
                .set("x", format!("{x:.2}"))
                .set("y", format!("{:.2}", y + 8.0))
                .set("transform", format!("rotate(60 {x:.2} {:.2})", y + 8.0))
                .set("font-family", "sans-serif")
                .set("font-size", 10)
                .set("fill", color),
        );
    }
    doc.to_string()
}
