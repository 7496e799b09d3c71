//! Drives the `flatport` binary end to end.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use flatport::calibration::FreeParams;
use flatport::geometry::{RigidTransform, Vec3};
use flatport::io::{parse_config, read_pfm, read_pgm, read_search_domain, write_config, write_observations, RigConfig};
use flatport::optics::{CameraId, IndexCoefficients, Pixel};
use flatport::rigs;
use flatport::search_domain::{build_search_domain, epipolar_locus, RowInterval};
use flatport::simulator::{grid_points, observe_board, NoiseSpec, SceneSpec};

fn flatport(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_flatport")).args(args).output().unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn write_rig(dir: &Path, name: &str, cfg: &RigConfig) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, write_config(cfg)).unwrap();
    path
}

fn small_scene(dir: &Path) -> PathBuf {
    let cfg = RigConfig {
        rig: rigs::standard_sized(96, 72),
        scene: Some(SceneSpec::textured_plane_at(2.0)),
        noise: Some(NoiseSpec {
            pixel_sigma: 0.0,
            intensity_sigma: 0.005,
            seed: 3,
        }),
    };
    write_rig(dir, "rig.cfg", &cfg)
}

#[test]
fn simulate_writes_all_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_scene(dir.path());
    let out = dir.path().join("sim");
    let o = flatport(&["simulate", "--config", p(&cfg), "--out", p(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    for name in ["left.pgm", "right.pgm", "truth.pfm", "truth_match.csv", "scene_meta.txt"] {
        assert!(out.join(name).is_file(), "{name}");
    }
    let left = read_pgm(std::fs::File::open(out.join("left.pgm")).unwrap()).unwrap();
    assert_eq!((left.width(), left.height()), (96, 72));
    let truth = read_pfm(std::fs::File::open(out.join("truth.pfm")).unwrap()).unwrap();
    assert_eq!((truth.width, truth.height), (96, 72));
    let csv = std::fs::read_to_string(out.join("truth_match.csv")).unwrap();
    assert!(csv.starts_with("col,row,depth,u,v\n"));
    assert!(csv.lines().count() > 1000);
    let meta = std::fs::read_to_string(out.join("scene_meta.txt")).unwrap();
    assert!(meta.contains("kind = textured_plane"));
}

#[test]
fn simulate_is_deterministic_and_seeded() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_scene(dir.path());
    let run = |name: &str, extra: &[&str]| {
        let out = dir.path().join(name);
        let mut args = vec!["simulate", "--config", p(&cfg), "--out", p(&out)];
        args.extend_from_slice(extra);
        assert!(flatport(&args).status.success());
        std::fs::read(out.join("left.pgm")).unwrap()
    };
    let a = run("a", &[]);
    assert_eq!(a, run("b", &[]));
    assert_ne!(a, run("c", &["--noise-seed", "4"]));
}

#[test]
fn unknown_config_key_reports_its_line() {
    let dir = tempfile::tempdir().unwrap();
    let text = write_config(&RigConfig::rig_only(rigs::standard())).replacen("fx = 360", "fz = 360", 1);
    let line = text.lines().position(|l| l.starts_with("fz")).unwrap() + 1;
    let cfg = dir.path().join("bad.cfg");
    std::fs::write(&cfg, text).unwrap();
    let o = flatport(&["simulate", "--config", p(&cfg), "--out", p(&dir.path().join("x"))]);
    assert_eq!(o.status.code(), Some(2));
    let msg = stderr(&o);
    assert!(msg.contains("fz") && msg.contains(&format!(":{line}:")), "{msg}");
}

#[test]
fn missing_config_is_an_io_error() {
    let o = flatport(&["simulate", "--config", "/nonexistent/rig.cfg", "--out", "/tmp/x"]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn match_reconstructs_the_simulated_plane() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_scene(dir.path());
    let sim = dir.path().join("sim");
    assert!(flatport(&["simulate", "--config", p(&cfg), "--out", p(&sim)]).status.success());
    let (l, r) = (sim.join("left.pgm"), sim.join("right.pgm"));
    let depth = dir.path().join("depth.pfm");
    let cloud = dir.path().join("cloud.ply");
    let base = [
        "match", "--rig", p(&cfg), "--left", p(&l), "--right", p(&r), "--zmin", "1", "--zmax", "4", "--out", p(&depth),
    ];

    let mut args = base.to_vec();
    args.extend(["--cloud", p(&cloud)]);
    let o = flatport(&args);
    assert!(o.status.success(), "{}", stderr(&o));
    let line = stdout(&o);
    assert!(line.starts_with("valid=") && line.contains(" coverage=") && line.contains(" median_gap="), "{line}");
    let coverage: f64 = line.split("coverage=").nth(1).unwrap().split_whitespace().next().unwrap().parse().unwrap();
    assert!(coverage > 90.0, "{line}");
    let d = read_pfm(std::fs::File::open(&depth).unwrap()).unwrap();
    let valid: Vec<f32> = d.data.iter().copied().filter(|z| *z > 0.0).collect();
    assert!(valid.iter().all(|z| (1.0..=4.0).contains(z)));
    assert!(std::fs::read_to_string(&cloud).unwrap().starts_with("ply\n"));

    let mut sad = base.to_vec();
    sad.extend(["--metric", "sad", "--threshold", "0.1"]);
    assert!(flatport(&sad).status.success());

    let mut bad = base.to_vec();
    bad[8] = "4";
    assert_eq!(flatport(&bad).status.code(), Some(2), "zmin >= zmax");

    let mut bad = base.to_vec();
    bad.extend(["--K", "1"]);
    assert_eq!(flatport(&bad).status.code(), Some(2));

    let wrong = write_rig(dir.path(), "wide.cfg", &RigConfig::rig_only(rigs::standard_sized(100, 72)));
    let mut bad = base.to_vec();
    bad[2] = p(&wrong);
    assert_eq!(flatport(&bad).status.code(), Some(4), "image size mismatch");
}

fn board_poses() -> Vec<RigidTransform> {
    let rt = |ax: [f64; 3], deg: f64, t: [f64; 3]| {
        RigidTransform::from_axis_angle(Vec3::new(ax[0], ax[1], ax[2]), deg, Vec3::new(t[0], t[1], t[2]))
    };
    vec![
        rt([1.0, 0.0, 0.0], 20.0, [0.0, 0.0, 0.35]),
        rt([0.0, 1.0, 0.0], -20.0, [0.3, 0.0, 0.35]),
        rt([0.0, 1.0, 0.0], 30.0, [0.0, 0.0, 0.45]),
        rt([1.0, 1.0, 0.0], 25.0, [0.15, 0.0, 0.55]),
    ]
}

#[test]
fn calibrate_recovers_the_water_index() {
    let dir = tempfile::tempdir().unwrap();
    let truth = rigs::standard();
    let obs = observe_board(&truth, &grid_points(5, 8, 0.03), &board_poses(), &NoiseSpec::none());
    let obs_path = dir.path().join("obs.csv");
    write_observations(std::fs::File::create(&obs_path).unwrap(), &obs).unwrap();
    let start = write_rig(dir.path(), "start.cfg", &RigConfig::rig_only(truth.with_water_index(1.36)));
    let out = dir.path().join("out.cfg");
    let o = flatport(&[
        "calibrate", "--rig", p(&start), "--obs", p(&obs_path), "--free", "n_water", "--out", p(&out),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("converged=true"), "{}", stdout(&o));
    let refined = parse_config(&std::fs::read_to_string(&out).unwrap(), "out.cfg").unwrap();
    assert!((refined.rig.media.n_water - 1.33).abs() < 1e-6, "{}", refined.rig.media.n_water);
    assert_eq!(refined.rig.port, truth.port);

    let o = flatport(&["calibrate", "--rig", p(&start), "--obs", p(&obs_path), "--free", "focal", "--out", p(&out)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("focal"));
}

#[test]
fn calibrate_with_three_corners_is_underdetermined() {
    let dir = tempfile::tempdir().unwrap();
    let obs = observe_board(&rigs::standard(), &grid_points(5, 8, 0.03), &board_poses()[..1], &NoiseSpec::none());
    let obs_path = dir.path().join("obs.csv");
    write_observations(std::fs::File::create(&obs_path).unwrap(), &obs[..3]).unwrap();
    let rig = write_rig(dir.path(), "rig.cfg", &RigConfig::rig_only(rigs::standard()));
    let o = flatport(&[
        "calibrate", "--rig", p(&rig), "--obs", p(&obs_path), "--out", p(&dir.path().join("o.cfg")),
    ]);
    assert_eq!(o.status.code(), Some(5), "{}", stderr(&o));
    assert!(!dir.path().join("o.cfg").exists());
}

#[test]
fn calibrate_free_list_parsing() {
    let f = flatport::cli::parse_free("thickness, tilt").unwrap();
    assert_eq!(
        f,
        FreeParams {
            thickness: true,
            port_tilt: true,
            ..FreeParams::poses_only()
        }
    );
    assert!(flatport::cli::parse_free("").unwrap().board_poses);
}

#[test]
fn search_domain_files() {
    let dir = tempfile::tempdir().unwrap();
    let rig = rigs::standard();
    let cfg = write_rig(dir.path(), "rig.cfg", &RigConfig::rig_only(rig));
    let out = dir.path().join("domain.csv");
    let run = |cfg: &Path, pixel: &str, k: &str, r: &str| {
        flatport(&[
            "search-domain", "--rig", p(cfg), "--camera", "L", "--pixel", pixel, "--zmin", "1", "--zmax", "4", "--K", k,
            "--r", r, "--out", p(&out),
        ])
    };

    assert!(run(&cfg, "150,100", "2", "0").status.success());
    let (samples, _) = read_search_domain(std::fs::File::open(&out).unwrap()).unwrap();
    assert_eq!(samples.len(), 2);

    assert!(run(&cfg, "150.5,100.25", "32", "2").status.success());
    let (samples, rows) = read_search_domain(std::fs::File::open(&out).unwrap()).unwrap();
    let locus = epipolar_locus(&rig, CameraId::Left, &Pixel::new(150.5, 100.25), 1.0, 4.0, 32).unwrap();
    assert_eq!(samples, locus.samples);
    assert_eq!(rows, build_search_domain(&locus, 2).unwrap().rows);

    let rect = write_rig(dir.path(), "rect.cfg", &RigConfig::rig_only(rigs::rectified()));
    assert!(run(&rect, "200,77", "16", "0").status.success());
    let (samples, rows) = read_search_domain(std::fs::File::open(&out).unwrap()).unwrap();
    assert!(samples.iter().all(|s| (s.pixel.y - 77.0).abs() < 1e-7));
    assert!(rows.iter().all(|r: &RowInterval| r.row == 77));

    assert_eq!(run(&cfg, "400,10", "32", "2").status.code(), Some(2));
    assert_eq!(run(&cfg, "10", "32", "2").status.code(), Some(2));
}

#[test]
fn env_prints_and_applies_the_index() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = RigConfig::rig_only(rigs::standard());
    let rig = write_rig(dir.path(), "rig.cfg", &cfg);
    let env = |rig: &Path, t: &str, extra: &[&str]| {
        let mut args = vec![
            "env", "--rig", p(rig), "--temperature", t, "--salinity", "35", "--depth", "10", "--wavelength", "550",
        ];
        args.extend_from_slice(extra);
        flatport(&args)
    };

    let o = env(&rig, "15", &[]);
    assert!(o.status.success(), "{}", stderr(&o));
    let n: f64 = stdout(&o).trim().strip_prefix("n_water=").unwrap().parse().unwrap();
    assert!(n > 1.33 && n < 1.35, "{n}");

    assert_eq!(env(&rig, "-10", &[]).status.code(), Some(2));
    assert_eq!(env(&rig, "15", &["--apply"]).status.code(), Some(2));

    let out = dir.path().join("applied.cfg");
    assert!(env(&rig, "15", &["--apply", "--out", p(&out)]).status.success());
    let before = std::fs::read_to_string(&rig).unwrap();
    let after = std::fs::read_to_string(&out).unwrap();
    let changed: Vec<(&str, &str)> = before.lines().zip(after.lines()).filter(|(a, b)| a != b).collect();
    assert_eq!(changed.len(), 1, "{changed:?}");
    assert!(changed[0].1.starts_with("n_water = "));

    cfg.rig.index_coefficients = IndexCoefficients::constant(1.3375);
    let constant = write_rig(dir.path(), "const.cfg", &cfg);
    let o = env(&constant, "25", &[]);
    assert_eq!(stdout(&o).trim(), "n_water=1.3375");
}
