//! Flat `[section]` / `key = value` rig configuration.
//!
//! ```text
//! [left]
//! fx = 360
//! ...
//! rotation = 1 0 0  0 1 0  0 0 1   # world to camera, row-major
//! translation = 0 0 0
//! ```
//!
//! Vector values are separated by whitespace or commas. `#` starts a comment.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};

use nalgebra::Matrix3;

use crate::geometry::{MediaIndices, PortPlane, RigidTransform, Vec3};
use crate::optics::{Camera, CameraIntrinsics, CameraPose, IndexCoefficients, StereoRig};
use crate::simulator::{NoiseSpec, SceneSpec, Target, ValueNoise};

#[derive(Debug, Clone, PartialEq)]
pub struct RigConfig {
    pub rig: StereoRig,
    pub scene: Option<SceneSpec>,
    pub noise: Option<NoiseSpec>,
}

impl RigConfig {
    pub fn rig_only(rig: StereoRig) -> Self {
        Self {
            rig,
            scene: None,
            noise: None,
        }
    }
}

/// A config problem located at `file:line` (line 0 when it concerns the
/// file as a whole).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigError {
    pub file: String,
    pub line: usize,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.line == 0 {
            write!(f, "{}: {}", self.file, self.message)
        } else {
            write!(f, "{}:{}: {}", self.file, self.line, self.message)
        }
    }
}

impl std::error::Error for ConfigError {}

const CAMERA_KEYS: &[&str] = &["fx", "fy", "cx", "cy", "k1", "k2", "width", "height", "rotation", "translation"];
const PORT_KEYS: &[&str] = &["normal", "inner_offset", "thickness"];
const MEDIA_KEYS: &[&str] = &["n_air", "n_glass", "n_water"];
const SCENE_KEYS: &[&str] = &[
    "kind",
    "rotation",
    "translation",
    "extent",
    "texture_seed",
    "octaves",
    "cell",
    "contrast",
    "square",
    "rows",
    "cols",
    "spacing",
];
const NOISE_KEYS: &[&str] = &["pixel_sigma", "intensity_sigma", "seed"];

fn section_keys(name: &str) -> Option<&'static [&'static str]> {
    Some(match name {
        "left" | "right" => CAMERA_KEYS,
        "port" => PORT_KEYS,
        "media" => MEDIA_KEYS,
        "index_model" => &IndexCoefficients::NAMES,
        "scene" => SCENE_KEYS,
        "noise" => NOISE_KEYS,
        _ => return None,
    })
}

struct Entry {
    line: usize,
    raw: String,
}

struct Section {
    line: usize,
    entries: BTreeMap<String, Entry>,
}

struct Parsed<'a> {
    file: &'a str,
    sections: BTreeMap<String, Section>,
}

impl<'a> Parsed<'a> {
    fn err(&self, line: usize, message: impl Into<String>) -> ConfigError {
        ConfigError {
            file: self.file.to_string(),
            line,
            message: message.into(),
        }
    }

    fn section(&self, name: &str) -> Result<&Section, ConfigError> {
        self.sections
            .get(name)
            .ok_or_else(|| self.err(0, format!("missing section [{name}]")))
    }

    fn entry<'s>(&self, sec: &'s Section, name: &str, key: &str) -> Result<&'s Entry, ConfigError> {
        sec.entries
            .get(key)
            .ok_or_else(|| self.err(sec.line, format!("[{name}] is missing key {key}")))
    }

    fn floats(&self, e: &Entry, key: &str, n: usize) -> Result<Vec<f64>, ConfigError> {
        let vals: Vec<f64> = e
            .raw
            .split(|c: char| c.is_whitespace() || c == ',')
            .filter(|t| !t.is_empty())
            .map(|t| t.parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|_| self.err(e.line, format!("{key}: expected {n} number(s), found {:?}", e.raw)))?;
        if vals.len() != n || vals.iter().any(|v| !v.is_finite()) {
            return Err(self.err(e.line, format!("{key}: expected {n} finite number(s), found {:?}", e.raw)));
        }
        Ok(vals)
    }

    fn float(&self, sec: &Section, name: &str, key: &str) -> Result<f64, ConfigError> {
        Ok(self.floats(self.entry(sec, name, key)?, key, 1)?[0])
    }

    fn float_or(&self, sec: &Section, key: &str, default: f64) -> Result<f64, ConfigError> {
        match sec.entries.get(key) {
            Some(e) => Ok(self.floats(e, key, 1)?[0]),
            None => Ok(default),
        }
    }

    fn integer<T: std::str::FromStr>(&self, e: &Entry, key: &str) -> Result<T, ConfigError> {
        e.raw
            .trim()
            .parse::<T>()
            .map_err(|_| self.err(e.line, format!("{key}: expected a non-negative integer, found {:?}", e.raw)))
    }

    fn matrix(&self, sec: &Section, key: &str) -> Result<Matrix3<f64>, ConfigError> {
        match sec.entries.get(key) {
            Some(e) => Ok(Matrix3::from_row_slice(&self.floats(e, key, 9)?)),
            None => Ok(Matrix3::identity()),
        }
    }

    fn vector(&self, sec: &Section, name: &str, key: &str, required: bool) -> Result<Vec3, ConfigError> {
        match (sec.entries.get(key), required) {
            (Some(e), _) => Ok(Vec3::from_column_slice(&self.floats(e, key, 3)?)),
            (None, false) => Ok(Vec3::zeros()),
            (None, true) => Err(self.err(sec.line, format!("[{name}] is missing key {key}"))),
        }
    }
}

fn tokenize<'a>(text: &str, file: &'a str) -> Result<Parsed<'a>, ConfigError> {
    let mut parsed = Parsed {
        file,
        sections: BTreeMap::new(),
    };
    let mut current: Option<String> = None;
    for (i, raw_line) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw_line.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        if let Some(rest) = content.strip_prefix('[') {
            let name = rest
                .strip_suffix(']')
                .map(str::trim)
                .ok_or_else(|| parsed.err(line, format!("malformed section header {content:?}")))?;
            if section_keys(name).is_none() {
                return Err(parsed.err(line, format!("unknown section [{name}]")));
            }
            if parsed.sections.contains_key(name) {
                return Err(parsed.err(line, format!("duplicate section [{name}]")));
            }
            parsed.sections.insert(
                name.to_string(),
                Section {
                    line,
                    entries: BTreeMap::new(),
                },
            );
            current = Some(name.to_string());
            continue;
        }
        let Some((key, value)) = content.split_once('=') else {
            return Err(parsed.err(line, format!("expected key = value, found {content:?}")));
        };
        let key = key.trim();
        let Some(name) = current.clone() else {
            return Err(parsed.err(line, format!("key {key} appears before any section")));
        };
        let allowed = section_keys(&name).unwrap_or(&[]);
        if !allowed.contains(&key) {
            return Err(parsed.err(line, format!("unknown key {key} in [{name}]")));
        }
        let section = parsed.sections.get_mut(&name).expect("section was inserted");
        if section.entries.contains_key(key) {
            return Err(parsed.err(line, format!("duplicate key {key} in [{name}]")));
        }
        section.entries.insert(
            key.to_string(),
            Entry {
                line,
                raw: value.trim().to_string(),
            },
        );
    }
    Ok(parsed)
}

fn camera(p: &Parsed, name: &str) -> Result<Camera, ConfigError> {
    let sec = p.section(name)?;
    let f = |key: &str| p.float(sec, name, key);
    let dim = |key: &str| -> Result<usize, ConfigError> { p.integer(p.entry(sec, name, key)?, key) };
    let intrinsics = CameraIntrinsics::new(
        f("fx")?,
        f("fy")?,
        f("cx")?,
        f("cy")?,
        p.float_or(sec, "k1", 0.0)?,
        p.float_or(sec, "k2", 0.0)?,
        dim("width")?,
        dim("height")?,
    )
    .map_err(|e| p.err(sec.line, format!("[{name}]: {e}")))?;
    let rot_line = sec.entries.get("rotation").map_or(sec.line, |e| e.line);
    let pose = CameraPose::new(p.matrix(sec, "rotation")?, p.vector(sec, name, "translation", false)?)
        .map_err(|e| p.err(rot_line, format!("[{name}]: {e}")))?;
    Ok(Camera { intrinsics, pose })
}

fn scene(p: &Parsed) -> Result<Option<SceneSpec>, ConfigError> {
    let Some(sec) = p.sections.get("scene") else {
        return Ok(None);
    };
    let kind_entry = p.entry(sec, "scene", "kind")?;
    let kind = kind_entry.raw.trim();
    let used: &[&str] = match kind {
        "textured_plane" => &["texture_seed", "octaves", "cell", "contrast"],
        "checkerboard" => &["square"],
        "point_grid" => &["rows", "cols", "spacing"],
        other => {
            return Err(p.err(
                kind_entry.line,
                format!("unknown scene kind {other:?} (textured_plane, checkerboard or point_grid)"),
            ))
        }
    };
    for (key, e) in &sec.entries {
        if !["kind", "rotation", "translation", "extent"].contains(&key.as_str()) && !used.contains(&key.as_str()) {
            return Err(p.err(e.line, format!("key {key} does not apply to scene kind {kind}")));
        }
    }
    let target = match kind {
        "textured_plane" => {
            let d = ValueNoise::default();
            Target::TexturedPlane(ValueNoise {
                seed: match sec.entries.get("texture_seed") {
                    Some(e) => p.integer(e, "texture_seed")?,
                    None => d.seed,
                },
                octaves: match sec.entries.get("octaves") {
                    Some(e) => p.integer(e, "octaves")?,
                    None => d.octaves,
                },
                cell: p.float_or(sec, "cell", d.cell)?,
                contrast: p.float_or(sec, "contrast", d.contrast)?,
            })
        }
        "checkerboard" => Target::Checkerboard {
            square: p.float(sec, "scene", "square")?,
        },
        _ => Target::PointGrid {
            rows: p.integer(p.entry(sec, "scene", "rows")?, "rows")?,
            cols: p.integer(p.entry(sec, "scene", "cols")?, "cols")?,
            spacing: p.float(sec, "scene", "spacing")?,
        },
    };
    let rotation = p.matrix(sec, "rotation")?;
    let ortho = (rotation.transpose() * rotation - Matrix3::identity()).abs().max();
    if !(ortho <= 1e-10 && (rotation.determinant() - 1.0).abs() <= 1e-10) {
        let line = sec.entries.get("rotation").map_or(sec.line, |e| e.line);
        return Err(p.err(line, "[scene] rotation is not a proper rotation matrix"));
    }
    Ok(Some(SceneSpec {
        target,
        plane_pose: RigidTransform::new(rotation, p.vector(sec, "scene", "translation", true)?),
        extent: p.float(sec, "scene", "extent")?,
    }))
}

fn noise(p: &Parsed) -> Result<Option<NoiseSpec>, ConfigError> {
    let Some(sec) = p.sections.get("noise") else {
        return Ok(None);
    };
    let spec = NoiseSpec {
        pixel_sigma: p.float_or(sec, "pixel_sigma", 0.0)?,
        intensity_sigma: p.float_or(sec, "intensity_sigma", 0.0)?,
        seed: match sec.entries.get("seed") {
            Some(e) => p.integer(e, "seed")?,
            None => 0,
        },
    };
    if !(spec.pixel_sigma >= 0.0 && spec.intensity_sigma >= 0.0) {
        return Err(p.err(sec.line, "[noise] sigmas must be non-negative"));
    }
    Ok(Some(spec))
}

/// Parses config text; `file` only labels error messages.
pub fn parse_config(text: &str, file: &str) -> Result<RigConfig, ConfigError> {
    let p = tokenize(text, file)?;
    let left = camera(&p, "left")?;
    let right = camera(&p, "right")?;

    let port_sec = p.section("port")?;
    let port = PortPlane::new(
        p.vector(port_sec, "port", "normal", true)?,
        p.float(port_sec, "port", "inner_offset")?,
        p.float(port_sec, "port", "thickness")?,
    )
    .map_err(|e| p.err(port_sec.line, format!("[port]: {e}")))?;

    let media_sec = p.section("media")?;
    let mf = |k: &str| p.float(media_sec, "media", k);
    let media = MediaIndices::new(mf("n_air")?, mf("n_glass")?, mf("n_water")?)
        .map_err(|e| p.err(media_sec.line, format!("[media]: {e}")))?;

    let index_coefficients = match p.sections.get("index_model") {
        None => IndexCoefficients::default(),
        Some(sec) => {
            let mut c = IndexCoefficients::zero();
            for (key, e) in &sec.entries {
                let v = p.floats(e, key, 1)?[0];
                c.set(key, v);
            }
            c
        }
    };

    let rig = StereoRig::new(left, right, port, media, index_coefficients)
        .map_err(|e| p.err(port_sec.line, e.to_string()))?;
    let scene = scene(&p)?;
    if let Some(s) = &scene {
        let line = p.sections.get("scene").map_or(0, |s| s.line);
        s.validate(&rig).map_err(|e| p.err(line, format!("[scene]: {e}")))?;
    }
    Ok(RigConfig {
        rig,
        scene,
        noise: noise(&p)?,
    })
}

/// Reads and parses a config file. I/O failures are returned separately
/// from content errors.
pub fn read_config(path: &std::path::Path) -> Result<Result<RigConfig, ConfigError>, std::io::Error> {
    let text = std::fs::read_to_string(path)?;
    Ok(parse_config(&text, &path.display().to_string()))
}

fn join(vals: impl IntoIterator<Item = f64>) -> String {
    vals.into_iter().map(|v| v.to_string()).collect::<Vec<_>>().join(" ")
}

fn row_major(m: &Matrix3<f64>) -> String {
    join((0..3).flat_map(|r| (0..3).map(move |c| m[(r, c)])))
}

/// Serializes every field; numbers use the shortest exact decimal form, so
/// parsing the output reproduces the config bit for bit.
pub fn write_config(cfg: &RigConfig) -> String {
    let mut s = String::new();
    let rig = &cfg.rig;
    for (name, cam) in [("left", &rig.left), ("right", &rig.right)] {
        let k = &cam.intrinsics;
        let _ = writeln!(s, "[{name}]");
        for (key, v) in [("fx", k.fx), ("fy", k.fy), ("cx", k.cx), ("cy", k.cy), ("k1", k.k1), ("k2", k.k2)] {
            let _ = writeln!(s, "{key} = {v}");
        }
        let _ = writeln!(s, "width = {}\nheight = {}", k.width, k.height);
        let _ = writeln!(s, "rotation = {}", row_major(&cam.pose.rotation));
        let _ = writeln!(s, "translation = {}\n", join(cam.pose.translation.iter().copied()));
    }
    let port = &rig.port;
    let _ = writeln!(
        s,
        "[port]\nnormal = {}\ninner_offset = {}\nthickness = {}\n",
        join(port.normal().iter().copied()),
        port.inner_offset(),
        port.thickness()
    );
    let m = &rig.media;
    let _ = writeln!(s, "[media]\nn_air = {}\nn_glass = {}\nn_water = {}\n", m.n_air, m.n_glass, m.n_water);
    let _ = writeln!(s, "[index_model]");
    for (name, v) in IndexCoefficients::NAMES.iter().zip(rig.index_coefficients.values()) {
        let _ = writeln!(s, "{name} = {v}");
    }
    if let Some(scene) = &cfg.scene {
        let _ = writeln!(s, "\n[scene]\nkind = {}", scene.target.kind_name());
        let _ = writeln!(s, "rotation = {}", row_major(&scene.plane_pose.rotation));
        let _ = writeln!(s, "translation = {}", join(scene.plane_pose.translation.iter().copied()));
        let _ = writeln!(s, "extent = {}", scene.extent);
        match scene.target {
            Target::TexturedPlane(t) => {
                let _ = writeln!(
                    s,
                    "texture_seed = {}\noctaves = {}\ncell = {}\ncontrast = {}",
                    t.seed, t.octaves, t.cell, t.contrast
                );
            }
            Target::Checkerboard { square } => {
                let _ = writeln!(s, "square = {square}");
            }
            Target::PointGrid { rows, cols, spacing } => {
                let _ = writeln!(s, "rows = {rows}\ncols = {cols}\nspacing = {spacing}");
            }
        }
    }
    if let Some(n) = &cfg.noise {
        let _ = writeln!(
            s,
            "\n[noise]\npixel_sigma = {}\nintensity_sigma = {}\nseed = {}",
            n.pixel_sigma, n.intensity_sigma, n.seed
        );
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rigs;

    fn full() -> RigConfig {
        RigConfig {
            rig: rigs::standard(),
            scene: Some(SceneSpec::textured_plane_at(2.0)),
            noise: Some(NoiseSpec {
                pixel_sigma: 0.0,
                intensity_sigma: 0.01,
                seed: u64::MAX,
            }),
        }
    }

    #[test]
    fn round_trip_is_exact() {
        let cfg = full();
        let text = write_config(&cfg);
        let back = parse_config(&text, "rig.cfg").unwrap();
        assert_eq!(back, cfg);
        assert_eq!(write_config(&back), text);
    }

    #[test]
    fn every_scene_kind_round_trips() {
        for target in [
            Target::Checkerboard { square: 0.05 },
            Target::PointGrid {
                rows: 3,
                cols: 4,
                spacing: 0.1,
            },
        ] {
            let mut cfg = full();
            cfg.scene.as_mut().unwrap().target = target;
            assert_eq!(parse_config(&write_config(&cfg), "x").unwrap(), cfg);
        }
    }

    #[test]
    fn unknown_key_names_line() {
        let text = write_config(&full()).replacen("fy = ", "fz = ", 1);
        let e = parse_config(&text, "rig.cfg").unwrap_err();
        assert_eq!(e.line, 3);
        assert!(e.to_string().starts_with("rig.cfg:3:"));
        assert!(e.message.contains("fz"));
    }

    #[test]
    fn comments_commas_and_defaults() {
        let text = "\
# minimal rig
[left]
fx = 360  # focal
fy = 360
cx = 159.5
cy = 119.5
width = 320
height = 240
[right]
fx = 360
fy = 360
cx = 159.5
cy = 119.5
width = 320
height = 240
translation = -0.3, 0, 0
[port]
normal = 0, 0, 1
inner_offset = 0.05
thickness = 0.01
[media]
n_air = 1
n_glass = 1.49
n_water = 1.33
[index_model]
n0 = 1.34
";
        let cfg = parse_config(text, "m.cfg").unwrap();
        assert_eq!(cfg.rig.left.intrinsics.k1, 0.0);
        assert_eq!(cfg.rig.right.pose.center(), Vec3::new(0.3, 0.0, 0.0));
        assert_eq!(cfg.rig.index_coefficients, IndexCoefficients::constant(1.34));
        assert!(cfg.scene.is_none() && cfg.noise.is_none());
    }

    #[test]
    fn missing_index_section_uses_default_model() {
        let text = write_config(&full());
        let start = text.find("[index_model]").unwrap();
        let end = text.find("[scene]").unwrap();
        let cut = format!("{}{}", &text[..start], &text[end..]);
        assert_eq!(parse_config(&cut, "x").unwrap().rig.index_coefficients, IndexCoefficients::default());
    }

    #[test]
    fn rejects_bad_content() {
        let base = write_config(&full());
        let cases = [
            base.replacen("width = 320", "width = -3", 1),
            base.replacen("[port]", "[porthole]", 1),
            base.replacen("n_water = 1.33", "n_water = 2.5", 1),
            base.replacen("thickness = 0.01", "thickness = 0.01 0.02", 1),
            base.replacen("kind = textured_plane", "kind = sphere", 1),
            base.replacen("cell = 0.025", "square = 0.1", 1),
            base.replacen("translation = 0 0 2", "translation = 0 0 -2", 1),
            format!("fx = 1\n{base}"),
            format!("{base}\n[noise]\nseed = 1\n"),
        ];
        for (i, text) in cases.iter().enumerate() {
            assert!(parse_config(text, "x").is_err(), "case {i} accepted");
        }
        let e = parse_config(&base.replacen("[media]", "", 1).replacen("n_air = 1\n", "", 1), "x").unwrap_err();
        assert!(e.line > 0);
    }
}
