//! Native disk plots of 2-D ball embeddings, written as SVG 1.1, and the
//! `id,class,z0,z1,...` embedding CSV they are drawn from.

use std::fmt::Write as _;
use std::path::Path;

use crate::data::HierDataset;
use crate::error::{HaeError, Result};
use crate::geometry::kernels;
use crate::io::fmt_f64;
use crate::model::HaeModel;

/// Points sampled along each drawn geodesic, endpoints included.
pub const GEODESIC_SAMPLES: usize = 64;

#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingRow {
    pub id: usize,
    pub class: usize,
    pub z: Vec<f64>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Embeddings {
    /// Zero when read from a file with no header.
    pub dim: usize,
    pub rows: Vec<EmbeddingRow>,
}

impl Embeddings {
    pub fn position(&self, id: usize) -> Option<usize> {
        self.rows.iter().position(|r| r.id == id)
    }
}

/// Encodes every sample of `ds`.
pub fn embed(model: &HaeModel, ds: &HierDataset) -> Result<Embeddings> {
    let rows = ds
        .samples
        .iter()
        .map(|s| {
            let (_, z) = model.encode(&s.features)?;
            Ok(EmbeddingRow {
                id: s.id,
                class: s.class,
                z: z.into_coords(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Embeddings {
        dim: model.config.ball_dim,
        rows,
    })
}

pub fn write_embeddings_to<W: std::io::Write>(emb: &Embeddings, w: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    let mut header = vec!["id".to_string(), "class".to_string()];
    header.extend((0..emb.dim).map(|d| format!("z{d}")));
    wtr.write_record(&header)?;
    for r in &emb.rows {
        let mut rec = vec![r.id.to_string(), r.class.to_string()];
        rec.extend(r.z.iter().map(|&v| fmt_f64(v)));
        wtr.write_record(&rec)?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn write_embeddings(emb: &Embeddings, path: &Path) -> Result<()> {
    write_embeddings_to(emb, std::fs::File::create(path)?)
}

pub fn read_embeddings(path: &Path) -> Result<Embeddings> {
    read_embeddings_from(std::fs::File::open(path)?, path)
}

pub fn read_embeddings_from<R: std::io::Read>(reader: R, path: &Path) -> Result<Embeddings> {
    let err = |line: usize, msg: String| HaeError::Parse {
        path: path.to_path_buf(),
        line,
        msg,
    };
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(reader);
    let header = rdr.headers()?.clone();
    if header.is_empty() {
        return Ok(Embeddings::default());
    }
    if header.len() < 2 || &header[0] != "id" || &header[1] != "class" {
        return Err(err(1, "header must start with id,class".into()));
    }
    let dim = header.len() - 2;
    for (d, h) in header.iter().skip(2).enumerate() {
        if h != format!("z{d}") {
            return Err(err(1, format!("expected column z{d}, found `{h}`")));
        }
    }
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        if rec.len() != header.len() {
            return Err(err(
                line,
                format!("expected {} fields, found {}", header.len(), rec.len()),
            ));
        }
        let int = |i: usize| -> Result<usize> {
            rec[i].parse().map_err(|_| {
                err(
                    line,
                    format!("column `{}`: `{}` is not an integer", &header[i], &rec[i]),
                )
            })
        };
        let z = rec
            .iter()
            .skip(2)
            .enumerate()
            .map(|(d, f)| match f.parse::<f64>() {
                Ok(v) if v.is_finite() => Ok(v),
                _ => Err(err(line, format!("column z{d}: `{f}` is not a finite number"))),
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push(EmbeddingRow {
            id: int(0)?,
            class: int(1)?,
            z,
        });
    }
    Ok(Embeddings { dim, rows })
}

#[derive(Clone, Debug)]
pub struct PlotOptions {
    /// Width and height in pixels.
    pub size: f64,
    pub margin: f64,
    pub marker_radius: f64,
    pub curvature: f64,
    /// Pairs of sample ids joined by a geodesic.
    pub geodesics: Vec<(usize, usize)>,
}

impl Default for PlotOptions {
    fn default() -> Self {
        PlotOptions {
            size: 512.0,
            margin: 16.0,
            marker_radius: 3.0,
            curvature: 1.0,
            geodesics: Vec::new(),
        }
    }
}

/// Evenly spaced hues, assigned in order of first appearance.
fn class_color(rank: usize, n: usize) -> String {
    let hue = 360.0 * rank as f64 / n.max(1) as f64;
    format!("hsl({hue:.1},70%,45%)")
}

struct Frame {
    center: f64,
    scale: f64,
}

impl Frame {
    fn px(&self, z: &[f64]) -> (f64, f64) {
        (self.center + z[0] * self.scale, self.center - z[1] * self.scale)
    }
}

/// Renders the disk boundary, one marker per embedding and the requested
/// geodesics. Fails unless the embeddings are 2-D.
pub fn render_svg(emb: &Embeddings, opts: &PlotOptions) -> Result<String> {
    if !emb.rows.is_empty() && emb.dim != 2 {
        return Err(HaeError::InvalidArgument(format!(
            "disk plots need 2-D embeddings, got dimension {}; train a model with ball_dim = 2 (e.g. `hae train --ball-dim 2`)",
            emb.dim
        )));
    }
    if opts.curvature.is_nan() || opts.curvature <= 0.0 || opts.size.is_nan() || opts.size <= 2.0 * opts.margin {
        return Err(HaeError::InvalidArgument("plot needs c > 0 and size > 2·margin".into()));
    }
    let c = opts.curvature;
    let boundary = opts.size / 2.0 - opts.margin;
    let frame = Frame {
        center: opts.size / 2.0,
        scale: boundary * c.sqrt(),
    };

    let mut svg = String::new();
    let s = opts.size;
    writeln!(
        svg,
        r#"<?xml version="1.0" encoding="UTF-8"?>
<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{s}" height="{s}" viewBox="0 0 {s} {s}">
<rect width="{s}" height="{s}" fill="white"/>
<circle id="boundary" cx="{0:.3}" cy="{0:.3}" r="{boundary:.3}" fill="none" stroke="black" stroke-width="1"/>"#,
        frame.center
    )
    .expect("write to String");

    for &(a, b) in &opts.geodesics {
        let find = |id| {
            emb.position(id)
                .map(|i| &emb.rows[i].z)
                .ok_or_else(|| HaeError::InvalidArgument(format!("geodesic endpoint id {id} not in embeddings")))
        };
        let (x, y) = (find(a)?, find(b)?);
        let mut pts = Vec::with_capacity(GEODESIC_SAMPLES);
        for i in 0..GEODESIC_SAMPLES {
            // endpoints taken verbatim so they land exactly on the markers
            let p = match i {
                0 => x.clone(),
                i if i == GEODESIC_SAMPLES - 1 => y.clone(),
                i => kernels::geodesic(x, y, i as f64 / (GEODESIC_SAMPLES - 1) as f64, c),
            };
            let (px, py) = frame.px(&p);
            pts.push(format!("{px:.3},{py:.3}"));
        }
        writeln!(
            svg,
            r#"<polyline class="geodesic" data-from="{a}" data-to="{b}" points="{}" fill="none" stroke="gray" stroke-width="1"/>"#,
            pts.join(" ")
        )
        .expect("write to String");
    }

    let mut classes: Vec<usize> = Vec::new();
    for r in &emb.rows {
        if !classes.contains(&r.class) {
            classes.push(r.class);
        }
    }
    for r in &emb.rows {
        let rank = classes
            .iter()
            .position(|&k| k == r.class)
            .expect("class collected above");
        let (px, py) = frame.px(&r.z);
        writeln!(
            svg,
            r#"<circle class="point" data-id="{}" data-class="{}" cx="{px:.3}" cy="{py:.3}" r="{}" fill="{}"/>"#,
            r.id,
            r.class,
            opts.marker_radius,
            class_color(rank, classes.len())
        )
        .expect("write to String");
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}

pub fn write_svg(emb: &Embeddings, opts: &PlotOptions, path: &Path) -> Result<()> {
    std::fs::write(path, render_svg(emb, opts)?)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn attr<'a>(elem: &'a str, name: &str) -> &'a str {
        let key = format!(" {name}=\"");
        let start = elem.find(&key).expect("attribute present") + key.len();
        let len = elem[start..].find('"').unwrap();
        &elem[start..start + len]
    }

    fn emb(rows: &[(usize, usize, [f64; 2])]) -> Embeddings {
        Embeddings {
            dim: 2,
            rows: rows
                .iter()
                .map(|&(id, class, z)| EmbeddingRow {
                    id,
                    class,
                    z: z.to_vec(),
                })
                .collect(),
        }
    }

    #[test]
    fn empty_file_gives_boundary_only() {
        let e = read_embeddings_from("".as_bytes(), Path::new("e.csv")).unwrap();
        let svg = render_svg(&e, &PlotOptions::default()).unwrap();
        assert!(svg.contains("id=\"boundary\""));
        assert!(!svg.contains("class=\"point\""));
        let e = read_embeddings_from("id,class,z0,z1\n".as_bytes(), Path::new("e.csv")).unwrap();
        assert!(e.rows.is_empty());
        assert!(!render_svg(&e, &PlotOptions::default())
            .unwrap()
            .contains("class=\"point\""));
    }

    #[test]
    fn origin_marker_sits_at_the_center() {
        let svg = render_svg(&emb(&[(0, 0, [0.0, 0.0])]), &PlotOptions::default()).unwrap();
        let marker = svg.lines().find(|l| l.contains("class=\"point\"")).unwrap();
        assert_eq!(attr(marker, "cx"), "256.000");
        assert_eq!(attr(marker, "cy"), "256.000");
    }

    #[test]
    fn geodesic_endpoints_meet_the_markers() {
        let e = emb(&[(4, 0, [0.5, 0.1]), (9, 1, [-0.3, -0.6])]);
        let opts = PlotOptions {
            geodesics: vec![(4, 9)],
            ..PlotOptions::default()
        };
        let svg = render_svg(&e, &opts).unwrap();
        let line = svg.lines().find(|l| l.contains("<polyline")).unwrap();
        let pts: Vec<&str> = attr(line, "points").split(' ').collect();
        assert_eq!(pts.len(), GEODESIC_SAMPLES);
        let markers: Vec<String> = svg
            .lines()
            .filter(|l| l.contains("class=\"point\""))
            .map(|l| format!("{},{}", attr(l, "cx"), attr(l, "cy")))
            .collect();
        assert_eq!(pts[0], markers[0]);
        assert_eq!(pts[GEODESIC_SAMPLES - 1], markers[1]);
    }

    #[test]
    fn non_planar_embeddings_are_rejected_with_guidance() {
        let e = Embeddings {
            dim: 3,
            rows: vec![EmbeddingRow {
                id: 0,
                class: 0,
                z: vec![0.0; 3],
            }],
        };
        let msg = render_svg(&e, &PlotOptions::default()).unwrap_err().to_string();
        assert!(msg.contains("ball_dim = 2"), "{msg}");
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let e = emb(&[(0, 3, [0.1234567890123, -1e-17]), (1, 2, [0.0, 0.9])]);
        let mut buf = Vec::new();
        write_embeddings_to(&e, &mut buf).unwrap();
        assert_eq!(read_embeddings_from(&buf[..], Path::new("e.csv")).unwrap(), e);
    }

    #[test]
    fn unknown_geodesic_id_is_an_error() {
        let opts = PlotOptions {
            geodesics: vec![(0, 7)],
            ..PlotOptions::default()
        };
        assert!(render_svg(&emb(&[(0, 0, [0.1, 0.1])]), &opts).is_err());
    }
}
