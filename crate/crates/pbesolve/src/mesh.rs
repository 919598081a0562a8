//! 2-D simplicial meshes with interface-conforming region tags.
//!
//! The generator builds a concentric-disk geometry inside a square: rings of
//! nodes share a common angular resolution, two rings lie exactly on the
//! molecular circle `r_m` and the ion-exclusion circle `r_iel`, and the
//! outermost ring lies on the square boundary. Every element is contained in
//! one region, so the permittivity jump never crosses an element. Uniform
//! (red) refinement snaps midpoints of circle edges back onto their circle,
//! keeping the interfaces exact under refinement.

use crate::error::{Error, Result};
use crate::geometry::analytic_disk_regions;
use crate::model::RegionTag;
use std::collections::HashMap;
use std::fmt::Write as _;
use std::sync::Arc;

/// Minimum relative element area: below this a triangle counts as degenerate.
const DEGENERACY_REL: f64 = 1e-14;
/// A node is considered to lie on a snapping circle when its radius matches
/// to this tolerance.
const CIRCLE_TOL: f64 = 1e-9;

/// Conforming triangle mesh with per-element region tags and marked
/// boundary/interface nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct Mesh {
    pub nodes: Vec<[f64; 2]>,
    pub triangles: Vec<[usize; 3]>,
    pub elem_region: Vec<RegionTag>,
    /// Nodes on the outer boundary, sorted ascending.
    pub boundary_nodes: Vec<usize>,
    /// Nodes on the region circles (molecular interface and IEL ring), sorted.
    pub interface_nodes: Vec<usize>,
    /// Radii of the circles nodes are snapped to under refinement.
    pub circles: Vec<f64>,
}

/// Nodal P1 coefficient vector bound to a mesh.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteField {
    pub mesh: Arc<Mesh>,
    pub values: Vec<f64>,
}

impl DiscreteField {
    pub fn new(mesh: Arc<Mesh>, values: Vec<f64>) -> Result<Self> {
        if values.len() != mesh.nodes.len() {
            return Err(Error::InvalidInput(format!(
                "field has {} values for {} nodes",
                values.len(),
                mesh.nodes.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("field contains nonfinite values".into()));
        }
        Ok(DiscreteField { mesh, values })
    }

    /// Nodal interpolant of a point function.
    pub fn interpolate(mesh: Arc<Mesh>, f: impl Fn([f64; 2]) -> f64) -> Result<Self> {
        let values = mesh.nodes.iter().map(|&x| f(x)).collect();
        DiscreteField::new(mesh, values)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }
}

pub fn signed_area(a: [f64; 2], b: [f64; 2], c: [f64; 2]) -> f64 {
    0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]))
}

impl Mesh {
    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn n_triangles(&self) -> usize {
        self.triangles.len()
    }

    pub fn tri_nodes(&self, t: usize) -> [[f64; 2]; 3] {
        let [i, j, k] = self.triangles[t];
        [self.nodes[i], self.nodes[j], self.nodes[k]]
    }

    pub fn tri_area(&self, t: usize) -> f64 {
        let [a, b, c] = self.tri_nodes(t);
        signed_area(a, b, c)
    }

    pub fn tri_centroid(&self, t: usize) -> [f64; 2] {
        let [a, b, c] = self.tri_nodes(t);
        [(a[0] + b[0] + c[0]) / 3.0, (a[1] + b[1] + c[1]) / 3.0]
    }

    pub fn total_area(&self) -> f64 {
        (0..self.n_triangles()).map(|t| self.tri_area(t)).sum()
    }

    /// Bounding-box diagonal.
    pub fn diameter(&self) -> f64 {
        let mut lo = [f64::INFINITY; 2];
        let mut hi = [f64::NEG_INFINITY; 2];
        for &p in &self.nodes {
            for k in 0..2 {
                lo[k] = lo[k].min(p[k]);
                hi[k] = hi[k].max(p[k]);
            }
        }
        ((hi[0] - lo[0]).powi(2) + (hi[1] - lo[1]).powi(2)).sqrt()
    }

    /// Longest element edge; the mesh size h of convergence tables.
    pub fn max_edge_length(&self) -> f64 {
        let mut h = 0.0f64;
        for t in 0..self.n_triangles() {
            let p = self.tri_nodes(t);
            for e in 0..3 {
                let a = p[e];
                let b = p[(e + 1) % 3];
                h = h.max(((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt());
            }
        }
        h
    }

    /// Smallest interior angle over all elements, in radians.
    pub fn min_angle(&self) -> f64 {
        let mut worst = f64::INFINITY;
        for t in 0..self.n_triangles() {
            let p = self.tri_nodes(t);
            for v in 0..3 {
                let a = p[v];
                let b = p[(v + 1) % 3];
                let c = p[(v + 2) % 3];
                let u = [b[0] - a[0], b[1] - a[1]];
                let w = [c[0] - a[0], c[1] - a[1]];
                let nu = (u[0] * u[0] + u[1] * u[1]).sqrt();
                let nw = (w[0] * w[0] + w[1] * w[1]).sqrt();
                let cosang = ((u[0] * w[0] + u[1] * w[1]) / (nu * nw)).clamp(-1.0, 1.0);
                worst = worst.min(cosang.acos());
            }
        }
        worst
    }

    /// Edge incidence map: (lo, hi) node pair -> triangles.
    fn edge_map(&self) -> HashMap<(usize, usize), Vec<usize>> {
        let mut edges: HashMap<(usize, usize), Vec<usize>> = HashMap::new();
        for (t, tri) in self.triangles.iter().enumerate() {
            for e in 0..3 {
                let a = tri[e];
                let b = tri[(e + 1) % 3];
                let key = (a.min(b), a.max(b));
                edges.entry(key).or_default().push(t);
            }
        }
        edges
    }

    /// Structural validity: index ranges, orientation, non-degeneracy,
    /// conformity, and region alignment (elements on the two sides of an
    /// interior edge may differ in tag only across marked interface nodes).
    pub fn validate(&self) -> Result<()> {
        let n = self.n_nodes();
        if self.elem_region.len() != self.n_triangles() {
            return Err(Error::Mesh("region tag count differs from triangle count".into()));
        }
        let diam2 = self.diameter().powi(2);
        for (t, tri) in self.triangles.iter().enumerate() {
            if tri.iter().any(|&i| i >= n) {
                return Err(Error::Mesh(format!("triangle {t} references a missing node")));
            }
            let area = self.tri_area(t);
            if !(area > DEGENERACY_REL * diam2) {
                return Err(Error::Mesh(format!(
                    "triangle {t} degenerate or negatively oriented (area {area:.3e})"
                )));
            }
        }
        let interface: std::collections::HashSet<usize> =
            self.interface_nodes.iter().copied().collect();
        for ((a, b), ts) in self.edge_map() {
            match ts.len() {
                1 | 2 => {}
                k => {
                    return Err(Error::Mesh(format!(
                        "edge ({a},{b}) shared by {k} triangles; mesh not conforming"
                    )))
                }
            }
            if ts.len() == 2 && self.elem_region[ts[0]] != self.elem_region[ts[1]] {
                if !(interface.contains(&a) && interface.contains(&b)) {
                    return Err(Error::Mesh(format!(
                        "region boundary crosses unmarked edge ({a},{b})"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Nodes incident to edges with a single incident triangle.
    pub fn boundary_nodes_from_topology(&self) -> Vec<usize> {
        let mut out: Vec<usize> = self
            .edge_map()
            .into_iter()
            .filter(|(_, ts)| ts.len() == 1)
            .flat_map(|((a, b), _)| [a, b])
            .collect();
        out.sort_unstable();
        out.dedup();
        out
    }

    /// Triangle containing `x` (tolerant barycentric test) and its
    /// barycentric coordinates.
    pub fn find_triangle(&self, x: [f64; 2]) -> Option<(usize, [f64; 3])> {
        for t in 0..self.n_triangles() {
            let p = self.tri_nodes(t);
            let area = signed_area(p[0], p[1], p[2]);
            if area <= 0.0 {
                continue;
            }
            let l0 = signed_area(x, p[1], p[2]) / area;
            let l1 = signed_area(p[0], x, p[2]) / area;
            let l2 = signed_area(p[0], p[1], x) / area;
            let tol = -1e-12;
            if l0 >= tol && l1 >= tol && l2 >= tol {
                return Some((t, [l0, l1, l2]));
            }
        }
        None
    }

    /// Distance from `x` to the nearest mesh node.
    pub fn nearest_node_distance(&self, x: [f64; 2]) -> f64 {
        self.nodes
            .iter()
            .map(|p| ((p[0] - x[0]).powi(2) + (p[1] - x[1]).powi(2)).sqrt())
            .fold(f64::INFINITY, f64::min)
    }
}

/// Generate the concentric-disk mesh: circles of radii `r_m < r_iel` inside
/// the square `[-half_width, half_width]^2`, with `n` nodes per ring.
/// `n` must be a positive multiple of 8 (so the square corners are mesh
/// nodes) and at least 8.
pub fn generate_disk_mesh(r_m: f64, r_iel: f64, half_width: f64, n: usize) -> Result<Mesh> {
    if !(0.0 < r_m && r_m < r_iel && r_iel < half_width) {
        return Err(Error::InvalidInput(format!(
            "need 0 < r_m < r_iel < half_width, got {r_m}, {r_iel}, {half_width}"
        )));
    }
    if n < 8 || n % 8 != 0 {
        return Err(Error::InvalidInput(format!(
            "angular resolution must be a multiple of 8 and at least 8, got {n}"
        )));
    }
    let region_map = analytic_disk_regions(r_m, r_iel, half_width)?;
    let target = 2.0 * std::f64::consts::PI * r_m / n as f64;

    // Ring radii: through the disk, the IEL band, a concentric buffer band,
    // then blended to the square. Refinement snaps circle-edge midpoints
    // outward by the chord sagitta ~ r (2 pi / n)^2 / 8, squeezing the
    // elements just outside the circle; the ring gap outside each snapping
    // circle must dominate that sagitta or deep refinements invert children.
    let theta = 2.0 * std::f64::consts::PI / n as f64;
    let min_gap = |r: f64| 0.7 * r * theta * theta;
    let k_in = ((r_m / target).ceil() as usize).max(2);
    let band_iel = r_iel - r_m;
    if band_iel < min_gap(r_m) {
        return Err(Error::InvalidInput(format!(
            "IEL band {band_iel:.3e} thinner than the snapping-safe gap {:.3e}; increase n",
            min_gap(r_m)
        )));
    }
    let k_iel = (((band_iel / target).ceil() as usize).max(1))
        .min(((band_iel / min_gap(r_m)).floor() as usize).max(1));
    let r_c = (0.5 * (r_iel + half_width)).max(r_iel + min_gap(r_iel));
    if r_c >= 0.995 * half_width {
        return Err(Error::InvalidInput(
            "angular resolution too coarse for this geometry; increase n".into(),
        ));
    }
    let k_circ = ((((r_c - r_iel) / target).ceil() as usize).max(1))
        .min((((r_c - r_iel) / min_gap(r_iel)).floor() as usize).max(1));
    let corner = half_width * std::f64::consts::SQRT_2;
    let k_out = (((corner - r_c) / target).ceil() as usize).max(2);

    let angles: Vec<f64> = (0..n)
        .map(|j| 2.0 * std::f64::consts::PI * j as f64 / n as f64)
        .collect();
    let square_radius = |theta: f64| -> f64 {
        let c = theta.cos().abs();
        let s = theta.sin().abs();
        half_width / c.max(s)
    };

    let mut nodes: Vec<[f64; 2]> = Vec::new();
    // Central node, offset from the origin so that a charge placed at the
    // origin sits strictly inside an element and never on a node.
    let rho1 = r_m / k_in as f64;
    let off_angle = 0.7f64;
    nodes.push([
        0.25 * rho1 * off_angle.cos(),
        0.25 * rho1 * off_angle.sin(),
    ]);
    let mut ring_radius_of: Vec<Option<f64>> = vec![None]; // per ring: exact circle or None
    let push_ring = |nodes: &mut Vec<[f64; 2]>, radii: &[f64]| {
        for (&r, &th) in radii.iter().zip(&angles) {
            nodes.push([r * th.cos(), r * th.sin()]);
        }
    };

    let mut rings: Vec<Vec<f64>> = Vec::new(); // per ring: radius at each angle
    for i in 1..=k_in {
        rings.push(vec![r_m * i as f64 / k_in as f64; n]);
        ring_radius_of.push(Some(r_m * i as f64 / k_in as f64));
    }
    for i in 1..=k_iel {
        let r = r_m + (r_iel - r_m) * i as f64 / k_iel as f64;
        rings.push(vec![r; n]);
        ring_radius_of.push(Some(r));
    }
    for i in 1..=k_circ {
        let r = r_iel + (r_c - r_iel) * i as f64 / k_circ as f64;
        rings.push(vec![r; n]);
        ring_radius_of.push(Some(r));
    }
    for i in 1..=k_out {
        let t = i as f64 / k_out as f64;
        rings.push(
            angles
                .iter()
                .map(|&th| r_c + (square_radius(th) - r_c) * t)
                .collect(),
        );
        ring_radius_of.push(None);
    }
    for ring in &rings {
        push_ring(&mut nodes, ring);
    }

    let ring_start = |ring: usize| 1 + ring * n; // ring index 0-based after the center node
    let n_rings = rings.len();

    // Tags follow the ring bands: the polygonal interface through the
    // circle nodes is the discrete region boundary, so tags are constant per
    // element by construction. The band assignment agrees with the analytic
    // disk classifier away from the chord slivers of the coarse polygon.
    let band_tag = |annulus: usize| -> RegionTag {
        if annulus + 1 < k_in {
            RegionTag::Molecule
        } else if annulus + 1 < k_in + k_iel {
            RegionTag::Iel
        } else {
            RegionTag::Ions
        }
    };

    let mut triangles: Vec<[usize; 3]> = Vec::new();
    let mut elem_region: Vec<RegionTag> = Vec::new();
    // Fan around the offset center node.
    for j in 0..n {
        let a = ring_start(0) + j;
        let b = ring_start(0) + (j + 1) % n;
        triangles.push([0, a, b]);
        elem_region.push(RegionTag::Molecule);
    }
    // Annuli.
    for ring in 0..(n_rings - 1) {
        for j in 0..n {
            let a0 = ring_start(ring) + j;
            let a1 = ring_start(ring) + (j + 1) % n;
            let b0 = ring_start(ring + 1) + j;
            let b1 = ring_start(ring + 1) + (j + 1) % n;
            triangles.push([a0, b0, b1]);
            triangles.push([a0, b1, a1]);
            elem_region.push(band_tag(ring));
            elem_region.push(band_tag(ring));
        }
    }
    // Enforce positive orientation.
    for tri in &mut triangles {
        let a = nodes[tri[0]];
        let b = nodes[tri[1]];
        let c = nodes[tri[2]];
        if signed_area(a, b, c) < 0.0 {
            tri.swap(1, 2);
        }
    }
    // Cross-check the band tags against the analytic classifier on the
    // element centroids of interior (non-sliver) elements.
    debug_assert!(triangles.iter().zip(&elem_region).all(|(tri, &tag)| {
        let cx = (nodes[tri[0]][0] + nodes[tri[1]][0] + nodes[tri[2]][0]) / 3.0;
        let cy = (nodes[tri[0]][1] + nodes[tri[1]][1] + nodes[tri[2]][1]) / 3.0;
        let rho = (cx * cx + cy * cy).sqrt();
        let clearly_inside = |r: f64| rho < r - 0.25 * target || rho > r + 0.25 * target;
        if clearly_inside(r_m) && clearly_inside(r_iel) {
            region_map.classify([cx, cy, 0.0]) == tag
        } else {
            true
        }
    }));

    let boundary_nodes: Vec<usize> =
        (ring_start(n_rings - 1)..ring_start(n_rings - 1) + n).collect();
    let mut interface_nodes = Vec::new();
    for (ring, r) in ring_radius_of.iter().enumerate().skip(1) {
        if let Some(r) = r {
            if (r - r_m).abs() <= CIRCLE_TOL || (r - r_iel).abs() <= CIRCLE_TOL {
                interface_nodes.extend(ring_start(ring - 1)..ring_start(ring - 1) + n);
            }
        }
    }
    interface_nodes.sort_unstable();

    let mesh = Mesh {
        nodes,
        triangles,
        elem_region,
        boundary_nodes,
        interface_nodes,
        circles: vec![r_m, r_iel],
    };
    mesh.validate()?;
    Ok(mesh)
}

fn on_circle(p: [f64; 2], r: f64) -> bool {
    ((p[0] * p[0] + p[1] * p[1]).sqrt() - r).abs() <= CIRCLE_TOL * (1.0 + r)
}

/// Red refinement: each triangle splits into four via edge midpoints.
/// Midpoints of edges whose endpoints both lie on a snapping circle are
/// pulled radially back onto that circle; tags are inherited.
pub fn refine_uniform(mesh: &Mesh) -> Result<Mesh> {
    let mut nodes = mesh.nodes.clone();
    let mut midpoint: HashMap<(usize, usize), usize> = HashMap::new();
    let mut mid = |a: usize, b: usize, nodes: &mut Vec<[f64; 2]>| -> usize {
        let key = (a.min(b), a.max(b));
        if let Some(&m) = midpoint.get(&key) {
            return m;
        }
        let pa = nodes[a];
        let pb = nodes[b];
        let mut p = [(pa[0] + pb[0]) / 2.0, (pa[1] + pb[1]) / 2.0];
        for &r in &mesh.circles {
            if on_circle(pa, r) && on_circle(pb, r) {
                let norm = (p[0] * p[0] + p[1] * p[1]).sqrt();
                if norm > 0.0 {
                    p = [p[0] * r / norm, p[1] * r / norm];
                }
                break;
            }
        }
        let idx = nodes.len();
        nodes.push(p);
        midpoint.insert(key, idx);
        idx
    };

    let mut triangles = Vec::with_capacity(4 * mesh.n_triangles());
    let mut elem_region = Vec::with_capacity(4 * mesh.n_triangles());
    for (t, tri) in mesh.triangles.iter().enumerate() {
        let [v0, v1, v2] = *tri;
        let m01 = mid(v0, v1, &mut nodes);
        let m12 = mid(v1, v2, &mut nodes);
        let m02 = mid(v0, v2, &mut nodes);
        let children = [
            [v0, m01, m02],
            [v1, m12, m01],
            [v2, m02, m12],
            [m01, m12, m02],
        ];
        for child in children {
            let area = signed_area(nodes[child[0]], nodes[child[1]], nodes[child[2]]);
            if !(area > 0.0) {
                return Err(Error::Mesh(format!(
                    "refinement of triangle {t} inverted a child after circle snapping"
                )));
            }
            triangles.push(child);
            elem_region.push(mesh.elem_region[t]);
        }
    }

    // Boundary and interface markers: parents keep their role, midpoints of
    // edges with both parents marked (and geometrically on the feature)
    // inherit it.
    let old_boundary: std::collections::HashSet<usize> =
        mesh.boundary_nodes.iter().copied().collect();
    let old_interface: std::collections::HashSet<usize> =
        mesh.interface_nodes.iter().copied().collect();
    let mut boundary_nodes = mesh.boundary_nodes.clone();
    let mut interface_nodes = mesh.interface_nodes.clone();
    // Edge incidence on the parent mesh distinguishes true boundary edges.
    let parent_edges = {
        let mut edges: HashMap<(usize, usize), usize> = HashMap::new();
        for tri in &mesh.triangles {
            for e in 0..3 {
                let a = tri[e];
                let b = tri[(e + 1) % 3];
                *edges.entry((a.min(b), a.max(b))).or_insert(0) += 1;
            }
        }
        edges
    };
    for (&(a, b), &m) in &midpoint {
        let incidence = parent_edges.get(&(a, b)).copied().unwrap_or(0);
        if incidence == 1 && old_boundary.contains(&a) && old_boundary.contains(&b) {
            boundary_nodes.push(m);
        }
        if old_interface.contains(&a) && old_interface.contains(&b) {
            let p = nodes[m];
            if mesh.circles.iter().any(|&r| on_circle(p, r)) {
                interface_nodes.push(m);
            }
        }
    }
    boundary_nodes.sort_unstable();
    boundary_nodes.dedup();
    interface_nodes.sort_unstable();
    interface_nodes.dedup();

    let refined = Mesh {
        nodes,
        triangles,
        elem_region,
        boundary_nodes,
        interface_nodes,
        circles: mesh.circles.clone(),
    };
    refined.validate()?;
    Ok(refined)
}

/// Extract the submesh of one region tag. Returns the submesh and the map
/// from submesh node index to parent node index. The submesh boundary is
/// re-derived from its own topology (for the molecular region it is the
/// interface ring).
pub fn extract_submesh(mesh: &Mesh, tag: RegionTag) -> Result<(Mesh, Vec<usize>)> {
    let kept: Vec<usize> = (0..mesh.n_triangles())
        .filter(|&t| mesh.elem_region[t] == tag)
        .collect();
    if kept.is_empty() {
        return Err(Error::InvalidInput(format!("no elements tagged {tag:?}")));
    }
    let mut new_of_old: HashMap<usize, usize> = HashMap::new();
    let mut node_map: Vec<usize> = Vec::new();
    let mut nodes = Vec::new();
    let mut triangles = Vec::new();
    for &t in &kept {
        let mut tri = [0usize; 3];
        for (slot, &v) in mesh.triangles[t].iter().enumerate() {
            let idx = *new_of_old.entry(v).or_insert_with(|| {
                node_map.push(v);
                nodes.push(mesh.nodes[v]);
                nodes.len() - 1
            });
            tri[slot] = idx;
        }
        triangles.push(tri);
    }
    let elem_region = vec![tag; triangles.len()];
    let mut sub = Mesh {
        nodes,
        triangles,
        elem_region,
        boundary_nodes: Vec::new(),
        interface_nodes: Vec::new(),
        circles: mesh.circles.clone(),
    };
    sub.boundary_nodes = sub.boundary_nodes_from_topology();
    sub.interface_nodes = sub.boundary_nodes.clone();
    sub.validate()?;
    Ok((sub, node_map))
}

/// Serialize a mesh to the line-oriented text format. The output is
/// deterministic and `load_mesh(save_mesh(m))` reproduces every field to
/// full precision.
pub fn save_mesh(mesh: &Mesh) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "# pbesolve mesh");
    let _ = writeln!(s, "nodes {}", mesh.n_nodes());
    for p in &mesh.nodes {
        let _ = writeln!(s, "{:?} {:?}", p[0], p[1]);
    }
    let _ = writeln!(s, "triangles {}", mesh.n_triangles());
    for (tri, tag) in mesh.triangles.iter().zip(&mesh.elem_region) {
        let _ = writeln!(s, "{} {} {} {}", tri[0], tri[1], tri[2], tag.code());
    }
    let _ = writeln!(s, "boundary {}", mesh.boundary_nodes.len());
    for b in &mesh.boundary_nodes {
        let _ = writeln!(s, "{b}");
    }
    let _ = writeln!(s, "interface {}", mesh.interface_nodes.len());
    for b in &mesh.interface_nodes {
        let _ = writeln!(s, "{b}");
    }
    let _ = writeln!(s, "circles {}", mesh.circles.len());
    for c in &mesh.circles {
        let _ = writeln!(s, "{c:?}");
    }
    s
}

struct LineReader<'a> {
    lines: std::iter::Enumerate<std::str::Lines<'a>>,
}

impl<'a> LineReader<'a> {
    fn new(text: &'a str) -> Self {
        LineReader {
            lines: text.lines().enumerate(),
        }
    }

    /// Next non-comment, non-empty line with its 1-based number.
    fn next(&mut self) -> Option<(usize, &'a str)> {
        for (i, line) in self.lines.by_ref() {
            let t = line.trim();
            if t.is_empty() || t.starts_with('#') {
                continue;
            }
            return Some((i + 1, t));
        }
        None
    }

    fn expect_section(&mut self, name: &str) -> Result<(usize, usize)> {
        let (lineno, line) = self.next().ok_or_else(|| Error::Parse {
            line: 0,
            message: format!("missing section '{name}' (file truncated)"),
        })?;
        let mut it = line.split_whitespace();
        let head = it.next().unwrap_or("");
        if head != name {
            return Err(Error::Parse {
                line: lineno,
                message: format!("expected section '{name}', found '{head}'"),
            });
        }
        let count = it
            .next()
            .ok_or_else(|| Error::Parse {
                line: lineno,
                message: format!("section '{name}' missing count"),
            })?
            .parse::<usize>()
            .map_err(|_| Error::Parse {
                line: lineno,
                message: format!("section '{name}' has a non-integer count"),
            })?;
        Ok((lineno, count))
    }
}

fn parse_f64(tok: &str, line: usize) -> Result<f64> {
    tok.parse::<f64>().map_err(|_| Error::Parse {
        line,
        message: format!("'{tok}' is not a number"),
    })
}

fn parse_usize(tok: &str, line: usize) -> Result<usize> {
    tok.parse::<usize>().map_err(|_| Error::Parse {
        line,
        message: format!("'{tok}' is not an index"),
    })
}

/// Parse the text format produced by [`save_mesh`].
pub fn load_mesh(text: &str) -> Result<Mesh> {
    let mut rd = LineReader::new(text);
    let (_, n_nodes) = rd.expect_section("nodes")?;
    let mut nodes = Vec::with_capacity(n_nodes);
    for _ in 0..n_nodes {
        let (lineno, line) = rd.next().ok_or_else(|| Error::Parse {
            line: 0,
            message: "node list truncated".into(),
        })?;
        let toks: Vec<&str> = line.split_whitespace().collect();
        if toks.len() != 2 {
            return Err(Error::Parse {
                line: lineno,
                message: format!("node line needs 2 fields, found {}", toks.len()),
            });
        }
        nodes.push([parse_f64(toks[0], lineno)?, parse_f64(toks[1], lineno)?]);
    }
    let (_, n_tris) = rd.expect_section("triangles")?;
    let mut triangles = Vec::with_capacity(n_tris);
    let mut elem_region = Vec::with_capacity(n_tris);
    for _ in 0..n_tris {
        let (lineno, line) = rd.next().ok_or_else(|| Error::Parse {
            line: 0,
            message: "triangle list truncated".into(),
        })?;
        let toks: Vec<&str> = line.split_whitespace().collect();
        if toks.len() != 4 {
            return Err(Error::Parse {
                line: lineno,
                message: format!("triangle line needs 4 fields, found {}", toks.len()),
            });
        }
        triangles.push([
            parse_usize(toks[0], lineno)?,
            parse_usize(toks[1], lineno)?,
            parse_usize(toks[2], lineno)?,
        ]);
        let code = toks[3].parse::<i32>().map_err(|_| Error::Parse {
            line: lineno,
            message: format!("'{}' is not a region code", toks[3]),
        })?;
        elem_region.push(RegionTag::from_code(code).map_err(|_| Error::Parse {
            line: lineno,
            message: format!("unknown region code {code}"),
        })?);
    }
    let (_, n_bnd) = rd.expect_section("boundary")?;
    let mut boundary_nodes = Vec::with_capacity(n_bnd);
    for _ in 0..n_bnd {
        let (lineno, line) = rd.next().ok_or_else(|| Error::Parse {
            line: 0,
            message: "boundary list truncated".into(),
        })?;
        boundary_nodes.push(parse_usize(line, lineno)?);
    }
    let (_, n_int) = rd.expect_section("interface")?;
    let mut interface_nodes = Vec::with_capacity(n_int);
    for _ in 0..n_int {
        let (lineno, line) = rd.next().ok_or_else(|| Error::Parse {
            line: 0,
            message: "interface list truncated".into(),
        })?;
        interface_nodes.push(parse_usize(line, lineno)?);
    }
    let (_, n_circ) = rd.expect_section("circles")?;
    let mut circles = Vec::with_capacity(n_circ);
    for _ in 0..n_circ {
        let (lineno, line) = rd.next().ok_or_else(|| Error::Parse {
            line: 0,
            message: "circle list truncated".into(),
        })?;
        circles.push(parse_f64(line, lineno)?);
    }
    let mesh = Mesh {
        nodes,
        triangles,
        elem_region,
        boundary_nodes,
        interface_nodes,
        circles,
    };
    mesh.validate()?;
    Ok(mesh)
}
