use std::io::{BufRead, BufReader, Read, Write};

use super::IoError;
use crate::geometry::Vec3;
use crate::matcher::{CloudPoint, PointCloud};

const PROPERTIES: [&str; 5] = ["x", "y", "z", "intensity", "gap"];

/// ASCII PLY 1.0 with one `vertex` element of five float properties.
/// Values are written at single precision, matching the declared type.
pub fn write_ply<W: Write>(w: W, cloud: &PointCloud) -> Result<(), IoError> {
    let mut w = std::io::BufWriter::new(w);
    writeln!(w, "ply\nformat ascii 1.0\nelement vertex {}", cloud.points.len())?;
    for p in PROPERTIES {
        writeln!(w, "property float {p}")?;
    }
    writeln!(w, "end_header")?;
    for p in &cloud.points {
        let q = &p.position;
        writeln!(
            w,
            "{} {} {} {} {}",
            q.x as f32, q.y as f32, q.z as f32, p.intensity as f32, p.gap as f32
        )?;
    }
    w.flush()?;
    Ok(())
}

/// Reads the files [`write_ply`] produces.
pub fn read_ply<R: Read>(r: R) -> Result<PointCloud, IoError> {
    let bad = |m: String| IoError::format("PLY", m);
    let mut lines = BufReader::new(r).lines();
    let mut next = || -> Result<String, IoError> {
        lines
            .next()
            .transpose()?
            .ok_or_else(|| IoError::format("PLY", "unexpected end of file"))
    };
    if next()?.trim() != "ply" {
        return Err(bad("missing ply magic".into()));
    }
    if next()?.trim() != "format ascii 1.0" {
        return Err(bad("only ascii 1.0 is supported".into()));
    }
    let element = next()?;
    let count: usize = element
        .trim()
        .strip_prefix("element vertex ")
        .and_then(|n| n.parse().ok())
        .ok_or_else(|| bad(format!("expected vertex element, found {element:?}")))?;
    for p in PROPERTIES {
        let line = next()?;
        if line.trim() != format!("property float {p}") {
            return Err(bad(format!("expected property {p}, found {line:?}")));
        }
    }
    if next()?.trim() != "end_header" {
        return Err(bad("missing end_header".into()));
    }
    let mut points = Vec::with_capacity(count);
    for i in 0..count {
        let line = next()?;
        let v: Vec<f32> = line
            .split_whitespace()
            .map(|t| t.parse::<f32>())
            .collect::<Result<_, _>>()
            .map_err(|e| bad(format!("vertex {i}: {e}")))?;
        if v.len() != 5 {
            return Err(bad(format!("vertex {i} has {} values", v.len())));
        }
        points.push(CloudPoint {
            position: Vec3::new(v[0] as f64, v[1] as f64, v[2] as f64),
            intensity: v[3] as f64,
            gap: v[4] as f64,
        });
    }
    Ok(PointCloud { points })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_at_single_precision() {
        let cloud = PointCloud {
            points: vec![
                CloudPoint {
                    position: Vec3::new(0.125, -1.5, 2.0),
                    intensity: 0.75,
                    gap: 0.0625,
                },
                CloudPoint {
                    position: Vec3::new(1.0 / 3.0, 0.1, 3.7),
                    intensity: 0.2,
                    gap: 0.0,
                },
            ],
        };
        let mut buf = Vec::new();
        write_ply(&mut buf, &cloud).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("ply\nformat ascii 1.0\nelement vertex 2\nproperty float x\n"));
        let back = read_ply(&buf[..]).unwrap();
        assert_eq!(back.points[0], cloud.points[0]);
        assert_eq!(back.points[1].position.x, (1.0f32 / 3.0) as f64);
        let mut again = Vec::new();
        write_ply(&mut again, &back).unwrap();
        assert_eq!(again, buf);
    }

    #[test]
    fn empty_cloud() {
        let mut buf = Vec::new();
        write_ply(&mut buf, &PointCloud { points: vec![] }).unwrap();
        assert!(read_ply(&buf[..]).unwrap().points.is_empty());
    }

    #[test]
    fn rejects_binary() {
        assert!(read_ply(&b"ply\nformat binary_little_endian 1.0\n"[..]).is_err());
    }
}
