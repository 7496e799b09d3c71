use std::io::{BufRead, BufReader, Read, Write};

use super::IoError;
use crate::geometry::Vec3;
use crate::optics::{CameraId, Pixel, StereoRig};
use crate::search_domain::{EpipolarLocus, LocusSample, RowInterval, SearchDomain};
use crate::simulator::{CornerObservation, NoiseSpec, SceneSpec, StereoPair, Target};

const OBS_HEADER: [&str; 7] = ["view_id", "camera", "board_x", "board_y", "board_z", "u", "v"];

pub fn write_observations<W: Write>(w: W, obs: &[CornerObservation]) -> Result<(), IoError> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(OBS_HEADER)?;
    for o in obs {
        out.write_record([
            o.view_id.to_string(),
            o.camera.letter().to_string(),
            o.board_point.x.to_string(),
            o.board_point.y.to_string(),
            o.board_point.z.to_string(),
            o.pixel.x.to_string(),
            o.pixel.y.to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

/// Parses `view_id,camera,board_x,board_y,board_z,u,v` with camera `L` or `R`.
pub fn read_observations<R: Read>(r: R) -> Result<Vec<CornerObservation>, IoError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(r);
    let header = rdr.headers()?.clone();
    if header.iter().ne(OBS_HEADER) {
        return Err(IoError::format(
            "observation CSV",
            format!("header must be {}", OBS_HEADER.join(",")),
        ));
    }
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let row = i + 2;
        let bad = |what: &str| IoError::format("observation CSV", format!("line {row}: bad {what}"));
        let num = |k: usize| -> Result<f64, IoError> {
            rec[k].parse::<f64>().ok().filter(|v| v.is_finite()).ok_or_else(|| bad(OBS_HEADER[k]))
        };
        let camera = match &rec[1] {
            "L" => CameraId::Left,
            "R" => CameraId::Right,
            _ => return Err(bad("camera (expected L or R)")),
        };
        let board_point = Vec3::new(num(2)?, num(3)?, num(4)?);
        if board_point.z != 0.0 {
            return Err(bad("board_z (board points lie on z = 0)"));
        }
        out.push(CornerObservation {
            view_id: rec[0].parse().map_err(|_| bad("view_id"))?,
            camera,
            board_point,
            pixel: Pixel::new(num(5)?, num(6)?),
        });
    }
    Ok(out)
}

/// Locus samples (`z,u,v,in_bounds`), a blank line, then the domain rows
/// (`row,col_start,col_end`, end exclusive).
pub fn write_search_domain<W: Write>(w: W, locus: &EpipolarLocus, domain: &SearchDomain) -> Result<(), IoError> {
    let mut w = std::io::BufWriter::new(w);
    writeln!(w, "z,u,v,in_bounds")?;
    for s in &locus.samples {
        writeln!(w, "{},{},{},{}", s.depth_z, s.pixel.x, s.pixel.y, s.in_bounds as u8)?;
    }
    writeln!(w, "\nrow,col_start,col_end")?;
    for r in &domain.rows {
        writeln!(w, "{},{},{}", r.row, r.col_start, r.col_end)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_search_domain<R: Read>(r: R) -> Result<(Vec<LocusSample>, Vec<RowInterval>), IoError> {
    let bad = |m: String| IoError::format("search-domain CSV", m);
    let mut samples = Vec::new();
    let mut rows = Vec::new();
    let mut section = 0;
    for (i, line) in BufReader::new(r).lines().enumerate() {
        let line = line?;
        let line = line.trim();
        match (section, line) {
            (0, "z,u,v,in_bounds") => section = 1,
            (1, "") => section = 2,
            (2, "row,col_start,col_end") => section = 3,
            (1, l) => {
                let f: Vec<&str> = l.split(',').collect();
                let num = |k: usize| f.get(k).and_then(|t| t.parse::<f64>().ok());
                match (num(0), num(1), num(2), f.get(3)) {
                    (Some(z), Some(u), Some(v), Some(b)) if f.len() == 4 && (*b == "0" || *b == "1") => {
                        samples.push(LocusSample {
                            depth_z: z,
                            pixel: Pixel::new(u, v),
                            in_bounds: *b == "1",
                        })
                    }
                    _ => return Err(bad(format!("line {}: bad sample {l:?}", i + 1))),
                }
            }
            (3, l) if !l.is_empty() => {
                let f: Vec<usize> = l
                    .split(',')
                    .map(|t| t.parse())
                    .collect::<Result<_, _>>()
                    .map_err(|_| bad(format!("line {}: bad interval {l:?}", i + 1)))?;
                if f.len() != 3 {
                    return Err(bad(format!("line {}: bad interval {l:?}", i + 1)));
                }
                rows.push(RowInterval {
                    row: f[0],
                    col_start: f[1],
                    col_end: f[2],
                });
            }
            (3, _) => {}
            (_, l) => return Err(bad(format!("line {}: unexpected {l:?}", i + 1))),
        }
    }
    if section != 3 {
        return Err(bad("missing interval section".into()));
    }
    Ok((samples, rows))
}

/// One line per left pixel that has a true right-image correspondence:
/// `col,row,depth,u,v`.
pub fn write_truth_match<W: Write>(w: W, pair: &StereoPair) -> Result<(), IoError> {
    let mut w = std::io::BufWriter::new(w);
    writeln!(w, "col,row,depth,u,v")?;
    let width = pair.truth.width;
    for (i, m) in pair.truth_match.iter().enumerate() {
        if let Some(p) = m {
            writeln!(w, "{},{},{},{},{}", i % width, i / width, pair.truth.depth[i], p.x, p.y)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Plain `key = value` summary of a simulated scene.
pub fn write_scene_meta<W: Write>(
    w: W,
    rig: &StereoRig,
    scene: &SceneSpec,
    noise: &NoiseSpec,
    pair: &StereoPair,
) -> Result<(), IoError> {
    let mut w = std::io::BufWriter::new(w);
    let l = &rig.left.intrinsics;
    writeln!(w, "kind = {}", scene.target.kind_name())?;
    writeln!(w, "width = {}\nheight = {}", l.width, l.height)?;
    let t = scene.plane_pose.translation;
    let n = scene.plane_pose.normal();
    writeln!(w, "plane_origin = {} {} {}", t.x, t.y, t.z)?;
    writeln!(w, "plane_normal = {} {} {}", n.x, n.y, n.z)?;
    writeln!(w, "extent = {}", scene.extent)?;
    if let Target::TexturedPlane(tex) = scene.target {
        writeln!(w, "texture_seed = {}", tex.seed)?;
    }
    writeln!(w, "n_water = {}", rig.media.n_water)?;
    writeln!(w, "noise_seed = {}", noise.seed)?;
    writeln!(w, "intensity_sigma = {}", noise.intensity_sigma)?;
    writeln!(w, "truth_pixels = {}", pair.truth.valid_count())?;
    writeln!(w, "truth_matches = {}", pair.truth_match.iter().flatten().count())?;
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rigs;
    use crate::search_domain::{build_search_domain, epipolar_locus};

    #[test]
    fn observations_round_trip() {
        let obs = vec![
            CornerObservation {
                view_id: 0,
                camera: CameraId::Left,
                board_point: Vec3::new(0.03, -0.06, 0.0),
                pixel: Pixel::new(12.25, 200.0 / 3.0),
            },
            CornerObservation {
                view_id: 4,
                camera: CameraId::Right,
                board_point: Vec3::new(0.0, 0.0, 0.0),
                pixel: Pixel::new(0.0, 1e-3),
            },
        ];
        let mut buf = Vec::new();
        write_observations(&mut buf, &obs).unwrap();
        assert!(buf.starts_with(b"view_id,camera,board_x,board_y,board_z,u,v\n0,L,"));
        assert_eq!(read_observations(&buf[..]).unwrap(), obs);
    }

    #[test]
    fn observation_errors() {
        let h = "view_id,camera,board_x,board_y,board_z,u,v\n";
        assert!(read_observations(format!("{h}0,X,0,0,0,1,1\n").as_bytes()).is_err());
        assert!(read_observations(format!("{h}0,L,0,0,0.1,1,1\n").as_bytes()).is_err());
        assert!(read_observations(format!("{h}0,L,0,0,0,1\n").as_bytes()).is_err());
        assert!(read_observations("a,b\n".as_bytes()).is_err());
        assert!(read_observations(h.as_bytes()).unwrap().is_empty());
    }

    #[test]
    fn search_domain_round_trip() {
        let rig = rigs::standard();
        let locus = epipolar_locus(&rig, CameraId::Left, &Pixel::new(100.0, 80.0), 0.5, 5.0, 8).unwrap();
        let domain = build_search_domain(&locus, 2).unwrap();
        let mut buf = Vec::new();
        write_search_domain(&mut buf, &locus, &domain).unwrap();
        let (samples, rows) = read_search_domain(&buf[..]).unwrap();
        assert_eq!(samples, locus.samples);
        assert_eq!(rows, domain.rows);
    }
}
