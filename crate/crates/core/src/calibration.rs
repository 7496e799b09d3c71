//! Housing calibration from underwater board observations.
//!
//! In-air intrinsics and camera poses are taken as known. The port offset,
//! port tilt, glass thickness, water index and the board poses are refined
//! by damped Gauss-Newton (Levenberg-Marquardt with Marquardt scaling) on
//! the refractive reprojection error. Jacobians are central finite
//! differences: the forward projection is itself an inner minimization.

use nalgebra::{DMatrix, DVector, Rotation3, SymmetricEigen};
use rayon::prelude::*;
use thiserror::Error;

use crate::geometry::{PortPlane, RigidTransform, Vec3};
use crate::optics::{CameraId, StereoRig};
use crate::projection::{forward_project, ProjectionError};
pub use crate::simulator::CornerObservation;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CalibrationError {
    #[error("observation {index}: {source}")]
    Projection {
        index: usize,
        #[source]
        source: ProjectionError,
    },
    #[error("normal equations are singular; some free parameter is unobservable")]
    SingularNormalEquations,
    #[error("{residuals} residuals cannot constrain {params} free parameters (need at least params + 6)")]
    Underdetermined { residuals: usize, params: usize },
    #[error("invalid problem: {0}")]
    InvalidProblem(String),
}

/// Which housing parameters the solver may move.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FreeParams {
    pub port_offset: bool,
    pub port_tilt: bool,
    pub thickness: bool,
    pub n_water: bool,
    pub board_poses: bool,
}

impl FreeParams {
    pub fn none() -> Self {
        Self {
            port_offset: false,
            port_tilt: false,
            thickness: false,
            n_water: false,
            board_poses: false,
        }
    }

    /// Offset, thickness and water index plus board poses; tilt held fixed.
    pub fn housing() -> Self {
        Self {
            port_offset: true,
            thickness: true,
            n_water: true,
            board_poses: true,
            ..Self::none()
        }
    }

    pub fn poses_only() -> Self {
        Self {
            board_poses: true,
            ..Self::none()
        }
    }

    fn count(&self, views: usize) -> usize {
        self.port_offset as usize
            + 2 * self.port_tilt as usize
            + self.thickness as usize
            + self.n_water as usize
            + if self.board_poses { 6 * views } else { 0 }
    }

    fn labels(&self, views: usize) -> Vec<String> {
        let mut out = Vec::new();
        if self.port_offset {
            out.push("port_offset".to_string());
        }
        if self.port_tilt {
            out.push("tilt_a".to_string());
            out.push("tilt_b".to_string());
        }
        if self.thickness {
            out.push("thickness".to_string());
        }
        if self.n_water {
            out.push("n_water".to_string());
        }
        if self.board_poses {
            for v in 0..views {
                for name in ["rx", "ry", "rz", "tx", "ty", "tz"] {
                    out.push(format!("view{v}.{name}"));
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationProblem {
    pub rig0: StereoRig,
    pub observations: Vec<CornerObservation>,
    /// Board-to-world transforms, one per view.
    pub board_poses0: Vec<RigidTransform>,
    pub free: FreeParams,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CalibrationOptions {
    pub max_iters: usize,
    pub gradient_tol: f64,
    pub step_tol: f64,
    pub initial_damping: f64,
}

impl Default for CalibrationOptions {
    fn default() -> Self {
        Self {
            max_iters: 100,
            gradient_tol: 1e-10,
            step_tol: 1e-12,
            initial_damping: 1e-3,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationReport {
    pub rig: StereoRig,
    pub board_poses: Vec<RigidTransform>,
    pub initial_rms_px: f64,
    /// Root mean square over all residual components (u and v separately).
    pub rms_px: f64,
    pub iterations: usize,
    pub converged: bool,
    /// `(label, sigma)` for every free parameter.
    pub per_parameter_sigma: Vec<(String, f64)>,
    /// Cost `0.5 |r|^2` after the start and after every accepted step.
    pub cost_history: Vec<f64>,
}

/// Point in the parameter space the solver moves through.
#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationState {
    pub rig: StereoRig,
    pub board_poses: Vec<RigidTransform>,
}

fn tangent_basis(n: &Vec3) -> (Vec3, Vec3) {
    let helper = if n.x.abs() < 0.9 { Vec3::x() } else { Vec3::y() };
    let e1 = (helper - n * n.dot(&helper)).normalize();
    (e1, n.cross(&e1))
}

impl CalibrationState {
    /// Applies an increment laid out as [`FreeParams`] orders it: offset,
    /// tilt (2), thickness, index, then six numbers per view (rotation
    /// vector composed on the left, translation added).
    pub fn apply(&self, free: &FreeParams, delta: &[f64]) -> Result<Self, CalibrationError> {
        let mut it = delta.iter().copied();
        let mut next = || it.next().expect("increment length matches free parameters");
        let port = self.rig.port;
        let mut normal = port.normal();
        let mut offset = port.inner_offset();
        let mut thickness = port.thickness();
        let mut rig = self.rig;
        if free.port_offset {
            offset += next();
        }
        if free.port_tilt {
            let (e1, e2) = tangent_basis(&normal);
            let rot = Rotation3::new(e1 * next() + e2 * next());
            normal = (rot * normal).normalize();
        }
        if free.thickness {
            thickness += next();
        }
        if free.n_water {
            rig.media.n_water += next();
        }
        rig.port = PortPlane::new(normal, offset, thickness)
            .map_err(|e| CalibrationError::InvalidProblem(e.to_string()))?;
        let board_poses = if free.board_poses {
            self.board_poses
                .iter()
                .map(|p| {
                    let r = Vec3::new(next(), next(), next());
                    let t = Vec3::new(next(), next(), next());
                    p.perturbed(&r, &t)
                })
                .collect()
        } else {
            self.board_poses.clone()
        };
        Ok(Self { rig, board_poses })
    }

    /// Natural size of each parameter, used to normalize the damping.
    fn damping_scales(&self, free: &FreeParams) -> Vec<f64> {
        let mut out = Vec::new();
        if free.port_offset {
            out.push(self.rig.port.inner_offset().abs());
        }
        if free.port_tilt {
            out.extend([1.0, 1.0]);
        }
        if free.thickness {
            out.push(self.rig.port.thickness());
        }
        if free.n_water {
            out.push(self.rig.media.n_water);
        }
        if free.board_poses {
            for p in &self.board_poses {
                let t = p.translation.norm();
                out.extend([1.0, 1.0, 1.0, t, t, t]);
            }
        }
        out
    }

    /// Magnitudes used to size finite-difference steps; rotations count as 1 rad.
    fn scales(&self, free: &FreeParams) -> Vec<f64> {
        let mut out = Vec::new();
        if free.port_offset {
            out.push(self.rig.port.inner_offset().abs());
        }
        if free.port_tilt {
            out.extend([1.0, 1.0]);
        }
        if free.thickness {
            out.push(self.rig.port.thickness());
        }
        if free.n_water {
            out.push(self.rig.media.n_water);
        }
        if free.board_poses {
            for p in &self.board_poses {
                out.extend([1.0, 1.0, 1.0]);
                out.extend(p.translation.iter().map(|t| t.abs()));
            }
        }
        out
    }
}

/// Reprojection residuals, `forward_project - observed`, two per observation
/// in observation order.
pub fn reprojection_residuals(
    rig: &StereoRig,
    board_poses: &[RigidTransform],
    observations: &[CornerObservation],
) -> Result<Vec<f64>, CalibrationError> {
    let per_obs: Result<Vec<[f64; 2]>, CalibrationError> = observations
        .par_iter()
        .enumerate()
        .map(|(index, o)| {
            let pose = board_poses.get(o.view_id).ok_or_else(|| {
                CalibrationError::InvalidProblem(format!("observation {index} refers to missing view {}", o.view_id))
            })?;
            let p = forward_project(rig, o.camera, &pose.apply(&o.board_point))
                .map_err(|source| CalibrationError::Projection { index, source })?;
            Ok([p.pixel.x - o.pixel.x, p.pixel.y - o.pixel.y])
        })
        .collect();
    Ok(per_obs?.into_iter().flatten().collect())
}

fn rms(r: &[f64]) -> f64 {
    if r.is_empty() {
        0.0
    } else {
        (r.iter().map(|v| v * v).sum::<f64>() / r.len() as f64).sqrt()
    }
}

fn cost(r: &[f64]) -> f64 {
    0.5 * r.iter().map(|v| v * v).sum::<f64>()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Difference {
    Central,
    Forward,
}

/// Finite-difference Jacobian of the residuals with respect to the state
/// increment. Step for parameter `j` is `max(rel * scale_j, abs_floor)`.
pub fn numeric_jacobian(
    state: &CalibrationState,
    free: &FreeParams,
    observations: &[CornerObservation],
    scheme: Difference,
    rel: f64,
    abs_floor: f64,
) -> Result<DMatrix<f64>, CalibrationError> {
    let scales = state.scales(free);
    let n = scales.len();
    let m = 2 * observations.len();
    let base = match scheme {
        Difference::Forward => Some(reprojection_residuals(&state.rig, &state.board_poses, observations)?),
        Difference::Central => None,
    };
    let eval = |j: usize, h: f64| -> Result<Vec<f64>, CalibrationError> {
        let mut delta = vec![0.0; n];
        delta[j] = h;
        let s = state.apply(free, &delta)?;
        reprojection_residuals(&s.rig, &s.board_poses, observations)
    };
    let columns: Result<Vec<Vec<f64>>, CalibrationError> = (0..n)
        .map(|j| {
            let h = (rel * scales[j]).max(abs_floor);
            let plus = eval(j, h)?;
            let (minus, span) = match &base {
                Some(b) => (b.clone(), h),
                None => match eval(j, -h) {
                    Ok(m) => (m, 2.0 * h),
                    // backward step leaves the feasible set (thickness near zero)
                    Err(CalibrationError::InvalidProblem(_)) => {
                        (reprojection_residuals(&state.rig, &state.board_poses, observations)?, h)
                    }
                    Err(e) => return Err(e),
                },
            };
            Ok(plus.iter().zip(&minus).map(|(p, q)| (p - q) / span).collect())
        })
        .collect();
    let columns = columns?;
    Ok(DMatrix::from_fn(m, n, |i, j| columns[j][i]))
}

/// Rejects normal equations whose unit-diagonal scaling has a (numerically)
/// zero eigenvalue.
fn check_rank(a: &DMatrix<f64>) -> Result<(), CalibrationError> {
    let n = a.nrows();
    let d: Vec<f64> = (0..n).map(|i| a[(i, i)]).collect();
    if d.iter().any(|v| !(*v > 0.0)) {
        return Err(CalibrationError::SingularNormalEquations);
    }
    let scaled = DMatrix::from_fn(n, n, |i, j| a[(i, j)] / (d[i] * d[j]).sqrt());
    let eig = SymmetricEigen::new(scaled);
    let min = eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
    if !(min > 1e-12) {
        return Err(CalibrationError::SingularNormalEquations);
    }
    Ok(())
}

const FD_REL_STEP: f64 = 1e-7;
const FD_ABS_STEP: f64 = 1e-9;

/// Solves the calibration problem.
pub fn calibrate(problem: &CalibrationProblem, options: &CalibrationOptions) -> Result<CalibrationReport, CalibrationError> {
    let views = problem.board_poses0.len();
    if views == 0 {
        return Err(CalibrationError::InvalidProblem("at least one view is required".into()));
    }
    let free = problem.free;
    let params = free.count(views);
    let residual_count = 2 * problem.observations.len();
    if residual_count < params + 6 {
        return Err(CalibrationError::Underdetermined {
            residuals: residual_count,
            params,
        });
    }
    if params == 0 {
        return Err(CalibrationError::InvalidProblem("no free parameters".into()));
    }

    let mut state = CalibrationState {
        rig: problem.rig0,
        board_poses: problem.board_poses0.clone(),
    };
    let obs = &problem.observations;
    let mut r = reprojection_residuals(&state.rig, &state.board_poses, obs)?;
    let initial_rms_px = rms(&r);
    let mut current = cost(&r);
    let mut cost_history = vec![current];
    let mut lambda = options.initial_damping;
    let mut converged = false;
    let mut iterations = 0;
    let mut last_jtj = None;

    while iterations < options.max_iters {
        iterations += 1;
        let j = numeric_jacobian(&state, &free, obs, Difference::Central, FD_REL_STEP, FD_ABS_STEP)?;
        let rv = DVector::from_column_slice(&r);
        let g = j.transpose() * &rv;
        let jtj = j.transpose() * &j;
        check_rank(&jtj)?;
        last_jtj = Some(jtj.clone());
        if g.amax() < options.gradient_tol {
            converged = true;
            break;
        }
        let x_norm = state.scales(&free).iter().map(|v| v * v).sum::<f64>().sqrt();
        // Levenberg damping in units of each parameter's own size. Scaling by
        // diag(JtJ) instead lets weakly observed parameters (glass thickness
        // against port offset) take huge steps along the near-null direction.
        let sizes = state.damping_scales(&free);
        let mu = (0..params).map(|i| jtj[(i, i)] * sizes[i] * sizes[i]).fold(0.0, f64::max);
        let mut accepted = false;
        loop {
            let mut damped = jtj.clone();
            for i in 0..params {
                damped[(i, i)] += lambda * mu / (sizes[i] * sizes[i]);
            }
            let Some(delta) = damped.cholesky().map(|c| c.solve(&(-&g))) else {
                lambda *= 10.0;
                continue;
            };
            let small_step = delta.norm() <= options.step_tol * (x_norm + options.step_tol);
            let trial = state.apply(&free, delta.as_slice());
            let trial_r = match &trial {
                Ok(s) => reprojection_residuals(&s.rig, &s.board_poses, obs).ok(),
                Err(_) => None,
            };
            match (trial, trial_r) {
                (Ok(s), Some(tr)) if cost(&tr) < current => {
                    state = s;
                    r = tr;
                    current = cost(&r);
                    cost_history.push(current);
                    lambda = (lambda / 3.0).max(1e-15);
                    accepted = true;
                    if small_step {
                        converged = true;
                    }
                    break;
                }
                _ => {
                    if small_step {
                        converged = true;
                        break;
                    }
                    lambda *= 10.0;
                    if lambda > 1e20 {
                        break;
                    }
                }
            }
        }
        if converged || !accepted {
            break;
        }
    }

    let rms_px = rms(&r);
    let dof = residual_count.saturating_sub(params).max(1) as f64;
    let sigma2 = 2.0 * current / dof;
    let labels = free.labels(views);
    let per_parameter_sigma = match last_jtj.and_then(|a| a.try_inverse()) {
        Some(cov) => labels
            .into_iter()
            .enumerate()
            .map(|(i, l)| (l, (sigma2 * cov[(i, i)]).max(0.0).sqrt()))
            .collect(),
        None => labels.into_iter().map(|l| (l, f64::NAN)).collect(),
    };
    Ok(CalibrationReport {
        rig: state.rig,
        board_poses: state.board_poses,
        initial_rms_px,
        rms_px,
        iterations,
        converged,
        per_parameter_sigma,
        cost_history,
    })
}

/// Rough board poses from in-air homographies, refined with the refractive
/// model (poses only). Used when no pose guess is available.
pub fn initial_board_poses(
    rig: &StereoRig,
    observations: &[CornerObservation],
) -> Result<Vec<RigidTransform>, CalibrationError> {
    let views = observations.iter().map(|o| o.view_id + 1).max().unwrap_or(0);
    let mut poses = Vec::with_capacity(views);
    for view in 0..views {
        let pick = |cam: CameraId| -> Vec<&CornerObservation> {
            observations.iter().filter(|o| o.view_id == view && o.camera == cam).collect()
        };
        let (camera, obs) = match (pick(CameraId::Left), pick(CameraId::Right)) {
            (l, _) if l.len() >= 4 => (CameraId::Left, l),
            (_, r) if r.len() >= 4 => (CameraId::Right, r),
            _ => {
                return Err(CalibrationError::InvalidProblem(format!(
                    "view {view} needs at least 4 corners in one camera"
                )))
            }
        };
        let cam = rig.camera(camera);
        let mut board = Vec::new();
        let mut image = Vec::new();
        for o in &obs {
            let (x, y) = cam
                .intrinsics
                .undistort(&o.pixel)
                .map_err(|e| CalibrationError::InvalidProblem(e.to_string()))?;
            board.push((o.board_point.x, o.board_point.y));
            image.push((x, y));
        }
        let h = homography(&board, &image)
            .ok_or_else(|| CalibrationError::InvalidProblem(format!("view {view}: degenerate corner layout")))?;
        let (rot_cam, mut t_cam) = decompose_homography(&h);
        // flat-port magnification makes in-air estimates about n_water too close
        t_cam *= rig.media.n_water;
        let rot_world = cam.pose.rotation.transpose() * rot_cam;
        let t_world = cam.pose.rotation.transpose() * (t_cam - cam.pose.translation);
        poses.push(RigidTransform::new(rot_world, t_world));
    }

    let view_obs: Vec<CornerObservation> = observations.to_vec();
    let refined = calibrate(
        &CalibrationProblem {
            rig0: *rig,
            observations: view_obs,
            board_poses0: poses.clone(),
            free: FreeParams::poses_only(),
        },
        &CalibrationOptions::default(),
    );
    match refined {
        Ok(rep) => Ok(rep.board_poses),
        Err(_) => Ok(poses),
    }
}

/// Direct linear transform for a plane-to-image homography (normalized by `h[8]`).
fn homography(src: &[(f64, f64)], dst: &[(f64, f64)]) -> Option<nalgebra::Matrix3<f64>> {
    let n = src.len();
    if n < 4 {
        return None;
    }
    let norm = |pts: &[(f64, f64)]| {
        let (mx, my) = pts.iter().fold((0.0, 0.0), |a, p| (a.0 + p.0, a.1 + p.1));
        let (mx, my) = (mx / pts.len() as f64, my / pts.len() as f64);
        let d = pts.iter().map(|p| ((p.0 - mx).powi(2) + (p.1 - my).powi(2)).sqrt()).sum::<f64>() / pts.len() as f64;
        let s = if d > 0.0 { std::f64::consts::SQRT_2 / d } else { 1.0 };
        nalgebra::Matrix3::new(s, 0.0, -s * mx, 0.0, s, -s * my, 0.0, 0.0, 1.0)
    };
    let ts = norm(src);
    let td = norm(dst);
    let mut a = DMatrix::zeros(2 * n, 9);
    for i in 0..n {
        let p = ts * Vec3::new(src[i].0, src[i].1, 1.0);
        let q = td * Vec3::new(dst[i].0, dst[i].1, 1.0);
        let (x, y, u, v) = (p.x, p.y, q.x, q.y);
        let rows = [
            [-x, -y, -1.0, 0.0, 0.0, 0.0, u * x, u * y, u],
            [0.0, 0.0, 0.0, -x, -y, -1.0, v * x, v * y, v],
        ];
        for (k, row) in rows.iter().enumerate() {
            for (c, val) in row.iter().enumerate() {
                a[(2 * i + k, c)] = *val;
            }
        }
    }
    let ata = a.transpose() * a;
    let eig = SymmetricEigen::new(ata);
    let (imin, _) = eig
        .eigenvalues
        .iter()
        .enumerate()
        .min_by(|x, y| x.1.total_cmp(y.1))?;
    let hv = eig.eigenvectors.column(imin);
    let hn = nalgebra::Matrix3::new(hv[0], hv[1], hv[2], hv[3], hv[4], hv[5], hv[6], hv[7], hv[8]);
    let h = td.try_inverse()? * hn * ts;
    Some(h / h[(2, 2)])
}

/// Board-to-camera rotation and translation from a normalized-coordinate homography.
fn decompose_homography(h: &nalgebra::Matrix3<f64>) -> (nalgebra::Matrix3<f64>, Vec3) {
    let h1 = h.column(0).into_owned();
    let h2 = h.column(1).into_owned();
    let h3 = h.column(2).into_owned();
    let mut s = 2.0 / (h1.norm() + h2.norm());
    // board must lie in front of the camera
    if h3.z * s < 0.0 {
        s = -s;
    }
    let r1 = h1 * s;
    let r2 = h2 * s;
    let r3 = r1.cross(&r2);
    let m = nalgebra::Matrix3::from_columns(&[r1, r2, r3]);
    let svd = m.svd(true, true);
    let (u, vt) = (svd.u.unwrap(), svd.v_t.unwrap());
    let mut rot = u * vt;
    if rot.determinant() < 0.0 {
        rot = -rot;
    }
    (rot, h3 * s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rigs;
    use crate::simulator::{grid_points, observe_board, NoiseSpec};

    fn views() -> Vec<RigidTransform> {
        vec![
            RigidTransform::from_axis_angle(Vec3::new(1.0, 0.0, 0.0), 20.0, Vec3::new(0.1, 0.0, 1.0)),
            RigidTransform::from_axis_angle(Vec3::new(0.0, 1.0, 0.0), -25.0, Vec3::new(0.2, 0.05, 1.4)),
            RigidTransform::from_axis_angle(Vec3::new(1.0, 1.0, 0.0), 15.0, Vec3::new(0.15, -0.1, 0.8)),
        ]
    }

    fn problem(free: FreeParams) -> (CalibrationProblem, StereoRig) {
        let rig = rigs::standard();
        let board = grid_points(4, 5, 0.06);
        let obs = observe_board(&rig, &board, &views(), &NoiseSpec::none());
        (
            CalibrationProblem {
                rig0: rig,
                observations: obs,
                board_poses0: views(),
                free,
            },
            rig,
        )
    }

    #[test]
    fn exact_data_has_zero_residuals() {
        let (p, rig) = problem(FreeParams::housing());
        let r = reprojection_residuals(&rig, &p.board_poses0, &p.observations).unwrap();
        assert_eq!(r.len(), 2 * p.observations.len());
        assert!(r.iter().all(|v| v.abs() < 1e-6));
        assert!(reprojection_residuals(&rig, &p.board_poses0, &[]).unwrap().is_empty());
    }

    #[test]
    fn start_at_truth_stays_put() {
        let (p, rig) = problem(FreeParams::housing());
        let rep = calibrate(&p, &CalibrationOptions::default()).unwrap();
        assert!(rep.converged);
        assert!(rep.iterations <= 2);
        assert!((rep.rig.port.inner_offset() - rig.port.inner_offset()).abs() < 1e-10);
        assert!((rep.rig.port.thickness() - rig.port.thickness()).abs() < 1e-10);
        assert!((rep.rig.media.n_water - rig.media.n_water).abs() < 1e-10);
    }

    #[test]
    fn pose_only_solve() {
        let (mut p, _) = problem(FreeParams::poses_only());
        let truth = p.board_poses0.clone();
        p.board_poses0 = truth
            .iter()
            .map(|t| t.perturbed(&Vec3::new(0.02, -0.01, 0.03), &Vec3::new(0.01, 0.02, -0.05)))
            .collect();
        let rep = calibrate(&p, &CalibrationOptions::default()).unwrap();
        assert!(rep.converged);
        let r = reprojection_residuals(&rep.rig, &rep.board_poses, &p.observations).unwrap();
        assert!(r.iter().all(|v| v.abs() < 1e-6), "{}", rep.rms_px);
        assert!(rep.cost_history.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn homography_initialization_is_close_enough() {
        let (p, _) = problem(FreeParams::poses_only());
        let poses = initial_board_poses(&p.rig0, &p.observations).unwrap();
        for (a, b) in poses.iter().zip(&p.board_poses0) {
            assert!((a.translation - b.translation).norm() < 1e-6);
        }
    }

    #[test]
    fn too_few_observations() {
        let (mut p, _) = problem(FreeParams::housing());
        p.observations.truncate(3);
        assert!(matches!(
            calibrate(&p, &CalibrationOptions::default()),
            Err(CalibrationError::Underdetermined { .. })
        ));
    }

    #[test]
    fn unobservable_parameter_is_singular() {
        // the board never appears, so its pose cannot be estimated
        let (mut p, _) = problem(FreeParams::housing());
        p.board_poses0.push(RigidTransform::from_axis_angle(Vec3::x(), 0.0, Vec3::new(0.0, 0.0, 1.0)));
        assert_eq!(calibrate(&p, &CalibrationOptions::default()), Err(CalibrationError::SingularNormalEquations));
    }

    #[test]
    fn forward_difference_jacobian_is_first_order() {
        let (p, _) = problem(FreeParams::housing());
        let state = CalibrationState {
            rig: p.rig0,
            board_poses: p.board_poses0.clone(),
        };
        let jac = |rel: f64| numeric_jacobian(&state, &p.free, &p.observations, Difference::Forward, rel, rel).unwrap();
        let (j1, j2, j4) = (jac(1e-2), jac(5e-3), jac(2.5e-3));
        let mut checked = 0;
        for (i, k) in [(0, 0), (5, 1), (17, 2), (40, 3), (3, 5), (70, 9), (101, 14), (20, 7)] {
            let d1 = j1[(i, k)] - j2[(i, k)];
            let d2 = j2[(i, k)] - j4[(i, k)];
            if d2.abs() <= 1e-6 * j4[(i, k)].abs().max(1.0) {
                continue;
            }
            let ratio = d1 / d2;
            assert!((1.8..=2.2).contains(&ratio), "entry ({i},{k}): ratio {ratio}");
            checked += 1;
        }
        assert!(checked >= 4);
    }

    #[test]
    fn jacobian_goes_one_sided_at_zero_thickness() {
        let (p, rig) = problem(FreeParams::housing());
        let mut thin = rig;
        thin.port = PortPlane::new(rig.port.normal(), rig.port.inner_offset(), 5e-10).unwrap();
        let state = CalibrationState {
            rig: thin,
            board_poses: p.board_poses0.clone(),
        };
        let central = numeric_jacobian(&state, &p.free, &p.observations, Difference::Central, 1e-7, 1e-9).unwrap();
        let forward = numeric_jacobian(&state, &p.free, &p.observations, Difference::Forward, 1e-7, 1e-9).unwrap();
        // thickness column (offset, thickness, index, poses)
        for i in 0..central.nrows() {
            assert_eq!(central[(i, 1)], forward[(i, 1)]);
        }
    }
}
