//! Vertex-versus-capsule clearance: each vertex is pushed the smallest
//! distance that leaves it at least `epsilon` outside every capsule it is not
//! skinned to.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::body_model::{global_transforms, BodyParams, BodyTemplate, BoneEnd, Mesh};
use crate::error::{Error, Result};

/// Projection sweeps allowed per vertex.
pub const MAX_SWEEPS: usize = 50;
/// Clearance shortfall tolerated as round-off when deciding a vertex is done.
const ACTIVE_TOL: f64 = 1e-12;
/// Constraints kept per vertex; older tangent planes are dropped first.
const MAX_PLANES: usize = 16;
/// Directions tried by the fallback search.
const FALLBACK_DIRECTIONS: usize = 1024;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Capsule {
    pub a: Vector3<f64>,
    pub b: Vector3<f64>,
    pub radius: f64,
    /// Driving joint of the bone.
    pub joint: usize,
}

impl Capsule {
    pub fn closest_axis_point(&self, x: &Vector3<f64>) -> Vector3<f64> {
        let ab = self.b - self.a;
        let len2 = ab.norm_squared();
        let t = if len2 > 0.0 {
            ((x - self.a).dot(&ab) / len2).clamp(0.0, 1.0)
        } else {
            0.0
        };
        self.a + t * ab
    }

    /// Distance from the capsule surface, negative inside.
    pub fn clearance(&self, x: &Vector3<f64>) -> f64 {
        (x - self.closest_axis_point(x)).norm() - self.radius
    }
}

/// Posed bone capsules plus, per vertex, the (up to two) joints with the
/// largest skinning weights. A capsule is skipped for a vertex when its
/// driving joint is one of them.
#[derive(Debug, Clone)]
pub struct Colliders {
    pub capsules: Vec<Capsule>,
    pub exclusions: Vec<[Option<usize>; 2]>,
}

impl Colliders {
    /// Capsules of the template's bones moved by the body's joint transforms.
    pub fn posed(template: &BodyTemplate, body: &BodyParams) -> Result<Self> {
        let rest = template.rest_joints_for_shape(&body.shape)?;
        let g = global_transforms(template, body, &rest)?;
        let capsules = template
            .bones()
            .iter()
            .map(|bone| {
                let j = bone.joint;
                let end = match &bone.end {
                    BoneEnd::Joint(c) => rest[*c],
                    BoneEnd::Tip(off) => rest[j] + Vector3::from(*off),
                };
                Capsule {
                    a: g[j].apply(&rest[j]),
                    b: g[j].apply(&end),
                    radius: bone.radius,
                    joint: j,
                }
            })
            .collect();
        Ok(Self {
            capsules,
            exclusions: dominant_joints(template),
        })
    }

    pub fn excluded(&self, vertex: usize, capsule: &Capsule) -> bool {
        self.exclusions[vertex].contains(&Some(capsule.joint))
    }

    /// Smallest clearance over all tested vertex/capsule pairs, as
    /// `(vertex, capsule, clearance)`.
    pub fn min_clearance(&self, mesh: &Mesh) -> Option<(usize, usize, f64)> {
        let mut worst: Option<(usize, usize, f64)> = None;
        for (v, x) in mesh.vertices.iter().enumerate() {
            for (c, cap) in self.capsules.iter().enumerate() {
                if self.excluded(v, cap) {
                    continue;
                }
                let d = cap.clearance(x);
                if worst.is_none_or(|w| d < w.2) {
                    worst = Some((v, c, d));
                }
            }
        }
        worst
    }
}

/// The two joints with the largest positive skinning weights of each vertex
/// (ties to the lower index).
pub fn dominant_joints(template: &BodyTemplate) -> Vec<[Option<usize>; 2]> {
    (0..template.vertex_count())
        .map(|v| {
            let row = template.skinning_row(v);
            let mut idx: Vec<usize> = (0..row.len()).filter(|&k| row[k] > 0.0).collect();
            idx.sort_by(|&a, &b| row[b].total_cmp(&row[a]).then(a.cmp(&b)));
            [idx.first().copied(), idx.get(1).copied()]
        })
        .collect()
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PenetrationReport {
    pub moved: usize,
    /// Metres.
    pub total_displacement: f64,
    pub max_displacement: f64,
    /// Largest number of projection sweeps any vertex needed.
    pub max_sweeps: usize,
    /// Vertices that needed the direction-search fallback.
    pub fallback: usize,
    /// Per-vertex displacement magnitude.
    #[serde(skip)]
    pub displacements: Vec<f64>,
}

/// `n . y >= b`
#[derive(Debug, Clone, Copy)]
struct HalfSpace {
    n: Vector3<f64>,
    b: f64,
}

enum VertexOutcome {
    Done {
        x: Vector3<f64>,
        sweeps: usize,
        fallback: bool,
    },
    Stuck {
        depth: f64,
    },
}

/// Moves every vertex that sits closer than `epsilon` to a non-excluded
/// capsule. A single contact is resolved by the exact radial projection;
/// several contacts by repeated projection of the original position onto the
/// intersection of the capsules' tangent half-spaces. When those half-spaces
/// are inconsistent a direction search finds the nearest clear point.
pub fn resolve_penetration(mesh: &Mesh, colliders: &Colliders, epsilon: f64) -> Result<(Mesh, PenetrationReport)> {
    if !(epsilon.is_finite() && epsilon >= 0.0) {
        return Err(Error::Config(format!(
            "epsilon must be finite and non-negative, got {epsilon}"
        )));
    }
    if colliders.exclusions.len() != mesh.len() {
        return Err(Error::Dimension {
            what: "collider exclusion map",
            expected: mesh.len(),
            got: colliders.exclusions.len(),
        });
    }
    let mut out = mesh.clone();
    let mut report = PenetrationReport {
        displacements: vec![0.0; mesh.len()],
        ..Default::default()
    };
    let mut stuck: Option<(usize, f64)> = None;
    for (v, x0) in mesh.vertices.iter().enumerate() {
        let caps: Vec<&Capsule> = colliders
            .capsules
            .iter()
            .filter(|c| !colliders.excluded(v, c))
            .collect();
        match resolve_vertex(x0, &caps, epsilon) {
            VertexOutcome::Done { x, sweeps, fallback } => {
                let d = (x - x0).norm();
                if d > 0.0 {
                    report.moved += 1;
                    report.total_displacement += d;
                    report.max_displacement = report.max_displacement.max(d);
                }
                report.max_sweeps = report.max_sweeps.max(sweeps);
                report.fallback += usize::from(fallback);
                report.displacements[v] = d;
                out.vertices[v] = x;
            }
            VertexOutcome::Stuck { depth } => {
                if stuck.is_none_or(|s| depth > s.1) {
                    stuck = Some((v, depth));
                }
            }
        }
    }
    if let Some((vertex, depth)) = stuck {
        return Err(Error::PenetrationNotConverged {
            sweeps: MAX_SWEEPS,
            vertex,
            depth,
        });
    }
    Ok((out, report))
}

/// Largest clearance shortfall of `x` and the capsules responsible for it.
fn shortfall(x: &Vector3<f64>, caps: &[&Capsule], epsilon: f64) -> f64 {
    caps.iter()
        .map(|c| epsilon - c.clearance(x))
        .fold(f64::NEG_INFINITY, f64::max)
}

fn resolve_vertex(x0: &Vector3<f64>, caps: &[&Capsule], epsilon: f64) -> VertexOutcome {
    if !x0.iter().all(|c| c.is_finite()) {
        return VertexOutcome::Stuck { depth: f64::INFINITY };
    }
    let mut x = *x0;
    let mut planes: Vec<HalfSpace> = Vec::new();
    for sweep in 0..=MAX_SWEEPS {
        let violated: Vec<&&Capsule> = caps.iter().filter(|c| c.clearance(&x) < epsilon - ACTIVE_TOL).collect();
        if violated.is_empty() {
            return VertexOutcome::Done {
                x,
                sweeps: sweep,
                fallback: false,
            };
        }
        if sweep == MAX_SWEEPS {
            break;
        }
        for c in violated {
            planes.push(tangent_plane(c, &x, x0, epsilon));
        }
        if planes.len() > MAX_PLANES {
            planes.drain(..planes.len() - MAX_PLANES);
        }
        match project_onto_halfspaces(x0, &planes) {
            Some(y) => x = y,
            None => break,
        }
    }
    match direction_search(x0, caps, epsilon) {
        Some(x) => VertexOutcome::Done {
            x,
            sweeps: MAX_SWEEPS,
            fallback: true,
        },
        None => VertexOutcome::Stuck {
            depth: shortfall(&x, caps, epsilon),
        },
    }
}

/// Half-space inside the exterior of the capsule dilated by `epsilon`,
/// touching it at the point nearest to `x`.
fn tangent_plane(c: &Capsule, x: &Vector3<f64>, x0: &Vector3<f64>, epsilon: f64) -> HalfSpace {
    let p = c.closest_axis_point(x);
    let mut n = x - p;
    if n.norm() <= f64::EPSILON * (1.0 + p.norm()) {
        n = x0 - p;
    }
    if n.norm() <= f64::EPSILON * (1.0 + p.norm()) {
        let axis = c.b - c.a;
        n = if axis.norm() > 0.0 {
            any_perpendicular(&axis)
        } else {
            Vector3::x()
        };
    }
    let n = n.normalize();
    HalfSpace {
        n,
        b: n.dot(&p) + c.radius + epsilon,
    }
}

fn any_perpendicular(v: &Vector3<f64>) -> Vector3<f64> {
    let helper = if v.x.abs() <= v.y.abs() && v.x.abs() <= v.z.abs() {
        Vector3::x()
    } else if v.y.abs() <= v.z.abs() {
        Vector3::y()
    } else {
        Vector3::z()
    };
    v.cross(&helper)
}

/// Nearest point to `x0` satisfying every half-space, found by enumerating
/// active sets of up to three planes. `None` when the planes are inconsistent.
fn project_onto_halfspaces(x0: &Vector3<f64>, planes: &[HalfSpace]) -> Option<Vector3<f64>> {
    let feasible = |y: &Vector3<f64>| planes.iter().all(|h| h.n.dot(y) >= h.b - ACTIVE_TOL);
    if feasible(x0) {
        return Some(*x0);
    }
    let m = planes.len();
    let mut best: Option<(f64, Vector3<f64>)> = None;
    let mut consider = |active: &[usize]| {
        let k = active.len();
        let mut gram = Matrix3::<f64>::identity();
        let mut rhs = Vector3::<f64>::zeros();
        for (r, &i) in active.iter().enumerate() {
            for (c, &j) in active.iter().enumerate() {
                gram[(r, c)] = planes[i].n.dot(&planes[j].n);
            }
            rhs[r] = planes[i].b - planes[i].n.dot(x0);
        }
        let sub = gram.view((0, 0), (k, k)).into_owned();
        let lu = sub.lu();
        if lu.determinant().abs() < 1e-12 {
            return;
        }
        let Some(lambda) = lu.solve(&rhs.rows(0, k).into_owned()) else {
            return;
        };
        if lambda.iter().any(|l| *l < 0.0) {
            return;
        }
        let y = active
            .iter()
            .zip(lambda.iter())
            .fold(*x0, |acc, (&i, l)| acc + *l * planes[i].n);
        if !feasible(&y) {
            return;
        }
        let d = (y - x0).norm_squared();
        if best.is_none_or(|b| d < b.0) {
            best = Some((d, y));
        }
    };
    for i in 0..m {
        consider(&[i]);
        for j in i + 1..m {
            consider(&[i, j]);
            for k in j + 1..m {
                consider(&[i, j, k]);
            }
        }
    }
    best.map(|b| b.1)
}

/// Nearest clear point along a fixed set of directions from `x0`. Along any
/// ray a capsule's clearance is convex, so the exit from each capsule is a
/// single root.
fn direction_search(x0: &Vector3<f64>, caps: &[&Capsule], epsilon: f64) -> Option<Vector3<f64>> {
    let mut best: Option<(f64, Vector3<f64>)> = None;
    for d in fibonacci_sphere(FALLBACK_DIRECTIONS) {
        let Some(t) = first_clear_parameter(x0, &d, caps, epsilon) else {
            continue;
        };
        if best.is_none_or(|b| t < b.0) {
            best = Some((t, d));
        }
    }
    let (mut t, mut d) = best?;
    // Pattern search on the sphere around the best grid direction.
    let mut step = 0.1;
    while step > 1e-10 {
        let (u, w) = (
            any_perpendicular(&d).normalize(),
            d.cross(&any_perpendicular(&d)).normalize(),
        );
        let mut improved = false;
        for e in [u, -u, w, -w] {
            let cand = (d + step * e).normalize();
            if let Some(tc) = first_clear_parameter(x0, &cand, caps, epsilon) {
                if tc < t {
                    (t, d) = (tc, cand);
                    improved = true;
                }
            }
        }
        if !improved {
            step *= 0.5;
        }
    }
    Some(x0 + t * d)
}

fn first_clear_parameter(x0: &Vector3<f64>, d: &Vector3<f64>, caps: &[&Capsule], epsilon: f64) -> Option<f64> {
    let mut t = 0.0;
    for _ in 0..4 * caps.len() + 4 {
        let at = x0 + t * d;
        let Some(c) = caps.iter().find(|c| c.clearance(&at) < epsilon) else {
            return Some(t);
        };
        // Far enough along the ray to be clear of this capsule.
        let mut hi = t + (at - c.a).norm() + (c.b - c.a).norm() + c.radius + epsilon + 1.0;
        let mut lo = t;
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if c.clearance(&(x0 + mid * d)) < epsilon {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        t = hi;
    }
    None
}

fn fibonacci_sphere(n: usize) -> Vec<Vector3<f64>> {
    let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
    (0..n)
        .map(|i| {
            let z = 1.0 - 2.0 * (i as f64 + 0.5) / n as f64;
            let r = (1.0 - z * z).sqrt();
            let phi = golden * i as f64;
            Vector3::new(r * phi.cos(), r * phi.sin(), z)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn capsule(a: [f64; 3], b: [f64; 3], radius: f64, joint: usize) -> Capsule {
        Capsule {
            a: Vector3::from(a),
            b: Vector3::from(b),
            radius,
            joint,
        }
    }

    fn colliders(capsules: Vec<Capsule>, n: usize) -> Colliders {
        Colliders {
            capsules,
            exclusions: vec![[None, None]; n],
        }
    }

    /// Closed-form nearest point at clearance `epsilon` outside one capsule.
    fn oracle_projection(c: &Capsule, x: &Vector3<f64>, epsilon: f64) -> Vector3<f64> {
        let ab = c.b - c.a;
        let t = ((x - c.a).dot(&ab) / ab.norm_squared()).clamp(0.0, 1.0);
        let p = c.a + t * ab;
        let r = (x - p).norm();
        let target = c.radius + epsilon;
        if r >= target {
            *x
        } else {
            p + (x - p) * (target / r)
        }
    }

    #[test]
    fn clear_mesh_is_unchanged() {
        let c = colliders(vec![capsule([0.0; 3], [0.0, 1.0, 0.0], 0.1, 0)], 2);
        let mesh = Mesh {
            vertices: vec![Vector3::new(1.0, 0.5, 0.0), Vector3::new(0.0, 2.0, 0.0)],
        };
        let (out, rep) = resolve_penetration(&mesh, &c, 0.005).unwrap();
        assert_eq!(out, mesh);
        assert_eq!(rep.moved, 0);
        assert_eq!(rep.total_displacement, 0.0);
    }

    #[test]
    fn vertex_on_axis_moves_to_dilated_radius() {
        let (r, eps) = (0.1, 0.005);
        let c = colliders(vec![capsule([0.0; 3], [0.0, 1.0, 0.0], r, 0)], 1);
        let mesh = Mesh {
            vertices: vec![Vector3::new(0.0, 0.5, 0.0)],
        };
        let (out, rep) = resolve_penetration(&mesh, &c, eps).unwrap();
        let x = out.vertices[0];
        assert!((Vector3::new(x.x, 0.0, x.z).norm() - (r + eps)).abs() < 1e-12);
        assert!((x.y - 0.5).abs() < 1e-15);
        assert!((rep.total_displacement - (r + eps)).abs() < 1e-12);
    }

    #[test]
    fn single_capsule_displacement_matches_closed_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let eps = 0.005;
        for _ in 0..20 {
            let cap = capsule(
                [
                    rng.random_range(-0.2..0.2),
                    rng.random_range(-0.2..0.2),
                    rng.random_range(-0.2..0.2),
                ],
                [
                    rng.random_range(0.3..0.6),
                    rng.random_range(0.3..0.6),
                    rng.random_range(-0.2..0.2),
                ],
                rng.random_range(0.03..0.15),
                0,
            );
            let verts: Vec<Vector3<f64>> = (0..300)
                .map(|_| {
                    let t: f64 = rng.random_range(-0.3..1.3);
                    cap.a
                        + t * (cap.b - cap.a)
                        + Vector3::new(
                            rng.random_range(-0.2..0.2),
                            rng.random_range(-0.2..0.2),
                            rng.random_range(-0.2..0.2),
                        )
                })
                .collect();
            let mesh = Mesh { vertices: verts };
            let (out, rep) = resolve_penetration(&mesh, &colliders(vec![cap], mesh.len()), eps).unwrap();
            let mut oracle_total = 0.0;
            for (v, x) in mesh.vertices.iter().enumerate() {
                let y = oracle_projection(&cap, x, eps);
                oracle_total += (y - x).norm();
                assert!((out.vertices[v] - y).norm() < 1e-12);
                assert!(cap.clearance(&out.vertices[v]) >= eps - 1e-9);
            }
            assert!(rep.moved > 0);
            assert!((rep.total_displacement - oracle_total).abs() < 1e-9);
        }
    }

    #[test]
    fn crossing_capsules_are_both_cleared() {
        let eps = 0.005;
        let c = colliders(
            vec![
                capsule([-0.5, 0.0, 0.0], [0.5, 0.0, 0.0], 0.1, 0),
                capsule([0.0, -0.5, 0.0], [0.0, 0.5, 0.0], 0.1, 1),
            ],
            4,
        );
        let mesh = Mesh {
            vertices: vec![
                Vector3::new(0.03, 0.02, 0.01),
                Vector3::new(0.0, 0.0, 0.0),
                Vector3::new(0.08, 0.09, -0.02),
                Vector3::new(0.12, 0.03, 0.0),
            ],
        };
        let (out, _) = resolve_penetration(&mesh, &c, eps).unwrap();
        let (_, _, worst) = c.min_clearance(&out).unwrap();
        assert!(worst >= eps - 1e-9, "worst clearance {worst}");
    }

    #[test]
    fn overlapping_parallel_capsules_use_the_fallback() {
        let eps = 0.005;
        let c = colliders(
            vec![
                capsule([0.5, 0.0, -1.0], [0.5, 0.0, 1.0], 0.6, 0),
                capsule([-0.5, 0.0, -1.0], [-0.5, 0.0, 1.0], 0.6, 1),
            ],
            1,
        );
        let mesh = Mesh {
            vertices: vec![Vector3::zeros()],
        };
        let (out, rep) = resolve_penetration(&mesh, &c, eps).unwrap();
        assert_eq!(rep.fallback, 1);
        assert!(c.min_clearance(&out).unwrap().2 >= eps - 1e-9);
        // The nearest clear point lies along y at sqrt(R^2 - 0.5^2).
        let exact = (0.605f64.powi(2) - 0.25).sqrt();
        assert!(
            (rep.total_displacement - exact).abs() < 1e-6,
            "{}",
            rep.total_displacement
        );
    }

    #[test]
    fn excluded_capsules_are_ignored() {
        let c = Colliders {
            capsules: vec![capsule([0.0; 3], [0.0, 1.0, 0.0], 0.1, 3)],
            exclusions: vec![[Some(3), None]],
        };
        let mesh = Mesh {
            vertices: vec![Vector3::new(0.0, 0.5, 0.0)],
        };
        let (out, rep) = resolve_penetration(&mesh, &c, 0.005).unwrap();
        assert_eq!(out, mesh);
        assert_eq!(rep.moved, 0);
        assert!(c.min_clearance(&out).is_none());
    }

    #[test]
    fn bad_inputs_are_errors() {
        let c = colliders(vec![capsule([0.0; 3], [0.0, 1.0, 0.0], 0.1, 0)], 1);
        let mesh = Mesh {
            vertices: vec![Vector3::new(f64::NAN, 0.0, 0.0)],
        };
        assert!(matches!(
            resolve_penetration(&mesh, &c, 0.005),
            Err(Error::PenetrationNotConverged { vertex: 0, .. })
        ));
        assert!(resolve_penetration(&mesh, &c, -1.0).is_err());
        let two = Mesh {
            vertices: vec![Vector3::zeros(); 2],
        };
        assert!(resolve_penetration(&two, &c, 0.005).is_err());
    }
}
