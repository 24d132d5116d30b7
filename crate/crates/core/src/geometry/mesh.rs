use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{GeometryError, Point3};

/// Closed triangulated surface with per-node outward normals and
/// vertex quadrature weights (one third of the incident triangle areas).
#[derive(Clone, Debug)]
pub struct SurfaceMesh {
    nodes: Vec<Point3>,
    triangles: Vec<[usize; 3]>,
    normals: Vec<Point3>,
    weights: Vec<f64>,
    tri_areas: Vec<f64>,
    tri_normals: Vec<Point3>,
    tri_centroids: Vec<Point3>,
    node_spacing: Vec<f64>,
    mean_spacing: f64,
    curvature: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MeshFile {
    nodes: Vec<Point3>,
    triangles: Vec<[usize; 3]>,
}

impl SurfaceMesh {
    /// Builds a mesh from raw connectivity. Normals are area-weighted face
    /// normals; orientation is flipped if the enclosed signed volume is negative.
    pub fn from_triangles(nodes: Vec<Point3>, triangles: Vec<[usize; 3]>) -> Result<Self, GeometryError> {
        Self::build(nodes, triangles, None)
    }

    /// Same as [`from_triangles`](Self::from_triangles) but with caller-supplied
    /// node normals (normalized on entry).
    pub fn with_normals(
        nodes: Vec<Point3>,
        triangles: Vec<[usize; 3]>,
        normals: Vec<Point3>,
    ) -> Result<Self, GeometryError> {
        Self::build(nodes, triangles, Some(normals))
    }

    fn build(
        nodes: Vec<Point3>,
        mut triangles: Vec<[usize; 3]>,
        normals: Option<Vec<Point3>>,
    ) -> Result<Self, GeometryError> {
        let n = nodes.len();
        if n < 4 || triangles.len() < 4 {
            return Err(GeometryError::TooSmall { nodes: n, triangles: triangles.len() });
        }
        if let Some(i) = nodes.iter().position(|p| !p.is_finite()) {
            return Err(GeometryError::NonFinite { node: i });
        }
        for (t, tri) in triangles.iter().enumerate() {
            if tri.iter().any(|&i| i >= n) {
                return Err(GeometryError::IndexOutOfRange { triangle: t, nodes: n });
            }
            if tri[0] == tri[1] || tri[1] == tri[2] || tri[0] == tri[2] {
                return Err(GeometryError::DegenerateTriangle { triangle: t });
            }
        }
        check_watertight(&triangles)?;

        let volume: f64 = triangles
            .iter()
            .map(|t| nodes[t[0]].dot(nodes[t[1]].cross(nodes[t[2]])))
            .sum::<f64>()
            / 6.0;
        if volume < 0.0 {
            for t in triangles.iter_mut() {
                t.swap(1, 2);
            }
        }

        let mut tri_areas = Vec::with_capacity(triangles.len());
        let mut tri_normals = Vec::with_capacity(triangles.len());
        let mut tri_centroids = Vec::with_capacity(triangles.len());
        let mut weights = vec![0.0; n];
        let mut acc_normals = vec![Point3::ZERO; n];
        for (t, tri) in triangles.iter().enumerate() {
            let [a, b, c] = tri.map(|i| nodes[i]);
            let cr = (b - a).cross(c - a);
            let area = 0.5 * cr.norm();
            if !(area > 0.0) {
                return Err(GeometryError::DegenerateTriangle { triangle: t });
            }
            tri_areas.push(area);
            tri_normals.push(cr / (2.0 * area));
            tri_centroids.push((a + b + c) / 3.0);
            for &i in tri {
                weights[i] += area / 3.0;
                acc_normals[i] += cr * 0.5;
            }
        }
        if let Some(i) = weights.iter().position(|&w| w == 0.0) {
            return Err(GeometryError::IsolatedNode { node: i });
        }

        let normals = match normals {
            Some(given) => {
                if given.len() != n {
                    return Err(GeometryError::LengthMismatch { expected: n, got: given.len() });
                }
                given.into_iter().map(Point3::normalized).collect()
            }
            None => acc_normals.into_iter().map(Point3::normalized).collect::<Vec<_>>(),
        };

        let mut nbrs: Vec<Vec<usize>> = vec![Vec::new(); n];
        for tri in &triangles {
            for k in 0..3 {
                let (i, j) = (tri[k], tri[(k + 1) % 3]);
                if !nbrs[i].contains(&j) {
                    nbrs[i].push(j);
                }
                if !nbrs[j].contains(&i) {
                    nbrs[j].push(i);
                }
            }
        }
        let mut node_spacing = vec![0.0; n];
        let mut curvature = vec![0.0; n];
        let mut edge_sum = 0.0;
        let mut edge_count = 0usize;
        for i in 0..n {
            let (mut len, mut h) = (0.0, 0.0);
            for &j in &nbrs[i] {
                let d = nodes[i] - nodes[j];
                let r2 = d.norm_squared();
                len += r2.sqrt();
                h += 2.0 * d.dot(normals[i]) / r2;
                if j > i {
                    edge_sum += r2.sqrt();
                    edge_count += 1;
                }
            }
            let k = nbrs[i].len() as f64;
            node_spacing[i] = len / k;
            curvature[i] = h / k;
        }

        Ok(Self {
            nodes,
            triangles,
            normals,
            weights,
            tri_areas,
            tri_normals,
            tri_centroids,
            node_spacing,
            mean_spacing: edge_sum / edge_count as f64,
            curvature,
        })
    }

    pub fn from_json_str(s: &str) -> Result<Self, GeometryError> {
        let f: MeshFile = serde_json::from_str(s)?;
        Self::from_triangles(f.nodes, f.triangles)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, GeometryError> {
        Self::from_json_str(&std::fs::read_to_string(path)?)
    }

    /// Nodes and triangles only; normals and weights are derived data.
    pub fn to_json_string(&self) -> String {
        let f = MeshFile { nodes: self.nodes.clone(), triangles: self.triangles.clone() };
        serde_json::to_string(&f).expect("mesh serialization")
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), GeometryError> {
        std::fs::write(path, self.to_json_string())?;
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[Point3] {
        &self.nodes
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn normals(&self) -> &[Point3] {
        &self.normals
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn triangle_areas(&self) -> &[f64] {
        &self.tri_areas
    }

    pub fn triangle_normals(&self) -> &[Point3] {
        &self.tri_normals
    }

    pub fn triangle_centroids(&self) -> &[Point3] {
        &self.tri_centroids
    }

    /// Mean length of the edges incident to each node.
    pub fn node_spacing(&self) -> &[f64] {
        &self.node_spacing
    }

    /// Mean edge length over the whole mesh.
    pub fn mean_spacing(&self) -> f64 {
        self.mean_spacing
    }

    /// Discrete mean curvature at each node from its one-ring
    /// (1 on the unit sphere, positive for convex outward-facing surfaces).
    pub fn mean_curvature(&self) -> &[f64] {
        &self.curvature
    }

    pub fn total_area(&self) -> f64 {
        self.weights.iter().sum()
    }

    pub fn bounding_box(&self) -> (Point3, Point3) {
        let mut lo = self.nodes[0];
        let mut hi = self.nodes[0];
        for &p in &self.nodes[1..] {
            lo = lo.min(p);
            hi = hi.max(p);
        }
        (lo, hi)
    }

    /// Enclosed volume by the divergence theorem.
    pub fn enclosed_volume(&self) -> f64 {
        self.triangles
            .iter()
            .map(|t| self.nodes[t[0]].dot(self.nodes[t[1]].cross(self.nodes[t[2]])))
            .sum::<f64>()
            / 6.0
    }

    /// Index of the node within `tol` of `x`, if any.
    pub fn node_at(&self, x: Point3, tol: f64) -> Option<usize> {
        self.nodes.iter().position(|p| p.distance(x) <= tol)
    }

    /// Closest point on the surface to `x`, with the triangle it lies on.
    pub fn closest_point(&self, x: Point3) -> (Point3, usize, f64) {
        let mut best = (self.nodes[0], 0, f64::INFINITY);
        for (t, tri) in self.triangles.iter().enumerate() {
            let q = closest_point_on_triangle(x, self.nodes[tri[0]], self.nodes[tri[1]], self.nodes[tri[2]]);
            let d = q.distance(x);
            if d < best.2 {
                best = (q, t, d);
            }
        }
        best
    }

    /// Unsigned distance from `x` to the surface.
    pub fn distance(&self, x: Point3) -> f64 {
        self.closest_point(x).2
    }

    /// Generalized winding number: total signed solid angle of the triangles
    /// seen from `x`, divided by 4π. Exactly 1 inside and 0 outside up to rounding.
    pub fn winding_number(&self, x: Point3) -> f64 {
        let mut total = 0.0;
        for tri in &self.triangles {
            total += triangle_solid_angle(x, self.nodes[tri[0]], self.nodes[tri[1]], self.nodes[tri[2]]);
        }
        total / (4.0 * std::f64::consts::PI)
    }
}

fn check_watertight(triangles: &[[usize; 3]]) -> Result<(), GeometryError> {
    let mut edges: HashMap<(usize, usize), u32> = HashMap::with_capacity(triangles.len() * 3 / 2);
    for tri in triangles {
        for k in 0..3 {
            let (a, b) = (tri[k], tri[(k + 1) % 3]);
            *edges.entry((a.min(b), a.max(b))).or_insert(0) += 1;
        }
    }
    let mut bad: Vec<_> = edges.into_iter().filter(|&(_, c)| c != 2).collect();
    bad.sort_unstable();
    match bad.first() {
        Some(&((a, b), count)) => Err(GeometryError::NotWatertight { a, b, count }),
        None => Ok(()),
    }
}

/// Signed solid angle of triangle (a, b, c) seen from `x`
/// (Van Oosterom and Strackee). Positive when `x` is behind the
/// counter-clockwise face.
pub fn triangle_solid_angle(x: Point3, a: Point3, b: Point3, c: Point3) -> f64 {
    let (a, b, c) = (a - x, b - x, c - x);
    let (la, lb, lc) = (a.norm(), b.norm(), c.norm());
    let num = a.dot(b.cross(c));
    let den = la * lb * lc + a.dot(b) * lc + a.dot(c) * lb + b.dot(c) * la;
    2.0 * num.atan2(den)
}

/// Closest point to `p` on triangle (a, b, c) (Ericson, Real-Time Collision Detection 5.1.5).
pub fn closest_point_on_triangle(p: Point3, a: Point3, b: Point3, c: Point3) -> Point3 {
    let ab = b - a;
    let ac = c - a;
    let ap = p - a;
    let d1 = ab.dot(ap);
    let d2 = ac.dot(ap);
    if d1 <= 0.0 && d2 <= 0.0 {
        return a;
    }
    let bp = p - b;
    let d3 = ab.dot(bp);
    let d4 = ac.dot(bp);
    if d3 >= 0.0 && d4 <= d3 {
        return b;
    }
    let vc = d1 * d4 - d3 * d2;
    if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
        return a + ab * (d1 / (d1 - d3));
    }
    let cp = p - c;
    let d5 = ab.dot(cp);
    let d6 = ac.dot(cp);
    if d6 >= 0.0 && d5 <= d6 {
        return c;
    }
    let vb = d5 * d2 - d1 * d6;
    if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
        return a + ac * (d2 / (d2 - d6));
    }
    let va = d3 * d6 - d5 * d4;
    if va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0 {
        return b + (c - b) * ((d4 - d3) / ((d4 - d3) + (d5 - d6)));
    }
    let denom = 1.0 / (va + vb + vc);
    a + ab * (vb * denom) + ac * (vc * denom)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tetra() -> (Vec<Point3>, Vec<[usize; 3]>) {
        let nodes = vec![
            Point3::new(0.0, 0.0, 0.0),
            Point3::new(1.0, 0.0, 0.0),
            Point3::new(0.0, 1.0, 0.0),
            Point3::new(0.0, 0.0, 1.0),
        ];
        let tris = vec![[0, 2, 1], [0, 1, 3], [0, 3, 2], [1, 2, 3]];
        (nodes, tris)
    }

    #[test]
    fn tetra_volume_and_area() {
        let (n, t) = tetra();
        let m = SurfaceMesh::from_triangles(n, t).unwrap();
        assert!((m.enclosed_volume() - 1.0 / 6.0).abs() < 1e-14);
        let area = 1.5 + 3f64.sqrt() / 2.0;
        assert!((m.total_area() - area).abs() < 1e-14);
    }

    #[test]
    fn inverted_orientation_is_fixed() {
        let (n, mut t) = tetra();
        for tri in t.iter_mut() {
            tri.swap(0, 1);
        }
        let m = SurfaceMesh::from_triangles(n, t).unwrap();
        assert!(m.enclosed_volume() > 0.0);
        let c = Point3::new(0.1, 0.1, 0.1);
        assert!((m.winding_number(c) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn open_surface_rejected() {
        let (n, mut t) = tetra();
        t.pop();
        t.push([0, 1, 2]);
        assert!(matches!(
            SurfaceMesh::from_triangles(n, t),
            Err(GeometryError::NotWatertight { .. })
        ));
    }

    #[test]
    fn bad_index_rejected() {
        let (n, mut t) = tetra();
        t[0][1] = 7;
        assert!(matches!(
            SurfaceMesh::from_triangles(n, t),
            Err(GeometryError::IndexOutOfRange { .. })
        ));
    }

    #[test]
    fn winding_outside_is_zero() {
        let (n, t) = tetra();
        let m = SurfaceMesh::from_triangles(n, t).unwrap();
        assert!(m.winding_number(Point3::new(2.0, 0.3, -1.0)).abs() < 1e-12);
    }

    #[test]
    fn closest_point_regions() {
        let a = Point3::new(0.0, 0.0, 0.0);
        let b = Point3::new(1.0, 0.0, 0.0);
        let c = Point3::new(0.0, 1.0, 0.0);
        let q = closest_point_on_triangle(Point3::new(0.2, 0.2, 3.0), a, b, c);
        assert!(q.distance(Point3::new(0.2, 0.2, 0.0)) < 1e-15);
        let q = closest_point_on_triangle(Point3::new(-1.0, -1.0, 0.0), a, b, c);
        assert_eq!(q, a);
        let q = closest_point_on_triangle(Point3::new(1.0, 1.0, 0.0), a, b, c);
        assert!(q.distance(Point3::new(0.5, 0.5, 0.0)) < 1e-15);
    }

    #[test]
    fn json_roundtrip() {
        let (n, t) = tetra();
        let m = SurfaceMesh::from_triangles(n, t).unwrap();
        let back = SurfaceMesh::from_json_str(&m.to_json_string()).unwrap();
        assert_eq!(back.nodes(), m.nodes());
        assert_eq!(back.weights(), m.weights());
    }

    #[test]
    fn json_unknown_key_rejected() {
        let s = r#"{"nodes": [], "triangles": [], "normals": []}"#;
        assert!(matches!(SurfaceMesh::from_json_str(s), Err(GeometryError::Json(_))));
    }
}
