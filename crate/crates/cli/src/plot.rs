//! Ternary scatter plots of K = 3 particle clouds.

use std::fmt::Write as _;

use anyhow::{bail, Result};

use opu_core::teachers::ParticleCloud;

const SIZE: f64 = 400.0;
const MARGIN: f64 = 30.0;

/// x = π₂ + π₃/2, y = (√3/2)π₃: vertex 1 at (0, 0), vertex 2 at (1, 0),
/// vertex 3 at (1/2, √3/2).
pub fn ternary(p: &[f64]) -> (f64, f64) {
    (p[1] + p[2] / 2.0, 3f64.sqrt() / 2.0 * p[2])
}

fn check_k3(cloud: &ParticleCloud) -> Result<()> {
    if cloud.k() != 3 {
        bail!("ternary plots require K=3 (this cloud has K={})", cloud.k());
    }
    Ok(())
}

fn to_canvas((x, y): (f64, f64)) -> (f64, f64) {
    (MARGIN + SIZE * x, MARGIN + SIZE * (3f64.sqrt() / 2.0 - y))
}

/// One `<circle>` per particle inside the simplex outline.
pub fn simplex_svg(cloud: &ParticleCloud, config_hash: &str) -> Result<String> {
    check_k3(cloud)?;
    let w = SIZE + 2.0 * MARGIN;
    let h = SIZE * 3f64.sqrt() / 2.0 + 2.0 * MARGIN;
    let mut s = String::new();
    writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w:.0}" height="{h:.0}" viewBox="0 0 {w:.0} {h:.0}">"#)?;
    writeln!(s, "<!-- config_hash: {config_hash} -->")?;
    writeln!(s, "<title>input {}: {} samples</title>", cloud.input_id, cloud.len())?;
    let corners: Vec<(f64, f64)> = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]].iter().map(|p| to_canvas(ternary(p))).collect();
    let outline: Vec<String> = corners.iter().map(|(x, y)| format!("{x:.3},{y:.3}")).collect();
    writeln!(s, r#"<polygon points="{}" fill="none" stroke="black" stroke-width="1"/>"#, outline.join(" "))?;
    for (i, (x, y)) in corners.iter().enumerate() {
        let dy = if i == 2 { -8.0 } else { 18.0 };
        writeln!(s, r#"<text x="{x:.3}" y="{:.3}" font-size="12" text-anchor="middle">class {}</text>"#, y + dy, i + 1)?;
    }
    writeln!(s, r#"<g fill="steelblue" fill-opacity="0.5">"#)?;
    for p in &cloud.points {
        let (x, y) = to_canvas(ternary(p.probs()));
        writeln!(s, r#"<circle cx="{x:.3}" cy="{y:.3}" r="2"/>"#)?;
    }
    writeln!(s, "</g>\n</svg>")?;
    Ok(s)
}

/// Twin of the SVG: one row per particle with its probabilities and
/// ternary coordinates.
pub fn simplex_csv(cloud: &ParticleCloud) -> Result<String> {
    check_k3(cloud)?;
    let mut s = String::from("sample,pi1,pi2,pi3,x,y\n");
    for (i, p) in cloud.points.iter().enumerate() {
        let q = p.probs();
        let (x, y) = ternary(q);
        writeln!(s, "{i},{:?},{:?},{:?},{x:?},{y:?}", q[0], q[1], q[2])?;
    }
    Ok(s)
}
