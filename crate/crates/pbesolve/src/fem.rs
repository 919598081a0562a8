//! P1 finite-element assembly for the weak forms of the split
//! Poisson-Boltzmann problems: stiffness with region-wise permittivity,
//! the 2-term/3-term splitting right-hand sides, ionic reaction terms
//! (linearized and nonlinear with tangent), generic loads, symmetric
//! Dirichlet elimination, the convex energy functional, point evaluation
//! and error norms.

use crate::coulomb::CoulombField;
use crate::error::{Error, Result};
use crate::linalg::SparseMatrix;
use crate::mesh::{signed_area, Mesh};
use crate::model::{
    eval_b, eval_b_prime, eval_big_b, linearized_coefficients, PbeProblem, Permittivity,
    RegionTag, EXP_GUARD,
};

/// Quadrature rule on the reference triangle in barycentric coordinates;
/// weights sum to one and the rule is exact for polynomials up to `order`.
#[derive(Debug, Clone)]
pub struct QuadratureRule {
    pub points: Vec<[f64; 3]>,
    pub weights: Vec<f64>,
    pub order: usize,
}

impl QuadratureRule {
    /// 3-point rule, exact through degree 2; the workhorse for the
    /// nonlinear and Coulomb-gradient terms.
    pub fn order2() -> Self {
        let a = 2.0 / 3.0;
        let b = 1.0 / 6.0;
        QuadratureRule {
            points: vec![[a, b, b], [b, a, b], [b, b, a]],
            weights: vec![1.0 / 3.0; 3],
            order: 2,
        }
    }

    /// 6-point rule, exact through degree 4; used by the error norms.
    pub fn order4() -> Self {
        let a = 0.445948490915965;
        let wa = 0.223381589678011;
        let b = 0.091576213509771;
        let wb = 0.109951743655322;
        QuadratureRule {
            points: vec![
                [1.0 - 2.0 * a, a, a],
                [a, 1.0 - 2.0 * a, a],
                [a, a, 1.0 - 2.0 * a],
                [1.0 - 2.0 * b, b, b],
                [b, 1.0 - 2.0 * b, b],
                [b, b, 1.0 - 2.0 * b],
            ],
            weights: vec![wa, wa, wa, wb, wb, wb],
            order: 4,
        }
    }

    /// 13-point rule, exact through degree 7; test oracle for the
    /// lower-order rules.
    pub fn order7() -> Self {
        let mut points = vec![[1.0 / 3.0; 3]];
        let mut weights = vec![-0.149570044467670];
        let a = 0.260345966079038;
        points.extend([
            [1.0 - 2.0 * a, a, a],
            [a, 1.0 - 2.0 * a, a],
            [a, a, 1.0 - 2.0 * a],
        ]);
        weights.extend([0.175615257433204; 3]);
        let b = 0.065130102902216;
        points.extend([
            [1.0 - 2.0 * b, b, b],
            [b, 1.0 - 2.0 * b, b],
            [b, b, 1.0 - 2.0 * b],
        ]);
        weights.extend([0.053347235608839; 3]);
        let (c, d) = (0.638444188569809, 0.312865496004875);
        let e = 1.0 - c - d;
        points.extend([
            [c, d, e],
            [c, e, d],
            [d, c, e],
            [d, e, c],
            [e, c, d],
            [e, d, c],
        ]);
        weights.extend([0.077113760890257; 6]);
        QuadratureRule {
            points,
            weights,
            order: 7,
        }
    }
}

/// Constant P1 shape-function gradients and area of a triangle.
pub fn p1_gradients(p: &[[f64; 2]; 3]) -> ([[f64; 2]; 3], f64) {
    let area = signed_area(p[0], p[1], p[2]);
    let f = 1.0 / (2.0 * area);
    let grads = [
        [(p[1][1] - p[2][1]) * f, (p[2][0] - p[1][0]) * f],
        [(p[2][1] - p[0][1]) * f, (p[0][0] - p[2][0]) * f],
        [(p[0][1] - p[1][1]) * f, (p[1][0] - p[0][0]) * f],
    ];
    (grads, area)
}

fn map_point(p: &[[f64; 2]; 3], bary: [f64; 3]) -> [f64; 2] {
    [
        bary[0] * p[0][0] + bary[1] * p[1][0] + bary[2] * p[2][0],
        bary[0] * p[0][1] + bary[1] * p[1][1] + bary[2] * p[2][1],
    ]
}

/// Stiffness matrix of `a(u, v) = int eps grad u . grad v`, with the
/// permittivity evaluated per element (at the centroid for spatially
/// varying coefficients; exact for region-wise constants).
pub fn assemble_stiffness(
    mesh: &Mesh,
    eps: impl Fn(RegionTag, [f64; 2]) -> f64,
) -> Result<SparseMatrix> {
    let n = mesh.n_nodes();
    let mut triplets = Vec::with_capacity(9 * mesh.n_triangles());
    for t in 0..mesh.n_triangles() {
        let p = mesh.tri_nodes(t);
        let (grads, area) = p1_gradients(&p);
        if !(area > 0.0) {
            return Err(Error::Mesh(format!("degenerate element {t} in assembly")));
        }
        let e = eps(mesh.elem_region[t], mesh.tri_centroid(t));
        if !(e > 0.0) {
            return Err(Error::InvalidInput(format!(
                "nonpositive permittivity {e} on element {t}"
            )));
        }
        let tri = mesh.triangles[t];
        for i in 0..3 {
            for j in 0..3 {
                let v = e * area * (grads[i][0] * grads[j][0] + grads[i][1] * grads[j][1]);
                triplets.push((tri[i], tri[j], v));
            }
        }
    }
    SparseMatrix::from_triplets(n, &triplets)
}

/// Right-hand-side functional of the splitting the regular component solves.
#[derive(Debug, Clone, Copy)]
pub enum SplittingRhs<'a> {
    /// `int_{Omega_s} (eps_m - eps_s) grad G . grad v`.
    TwoTerm { eps_m: f64, eps_s: Permittivity },
    /// `-int_{Omega_m} eps_m grad u_H . grad v + int_{Omega_s} eps_m grad G . grad v`.
    ThreeTerm { eps_m: f64, u_harmonic: &'a [f64] },
}

/// Assemble the splitting right-hand side; the Coulomb gradient is
/// integrated with the degree-2 rule (G is smooth on the solvent region).
pub fn assemble_splitting_rhs(
    mesh: &Mesh,
    field: &CoulombField,
    mode: SplittingRhs,
) -> Result<Vec<f64>> {
    if let SplittingRhs::ThreeTerm { u_harmonic, .. } = mode {
        if u_harmonic.len() != mesh.n_nodes() {
            return Err(Error::InvalidInput(
                "harmonic component length differs from node count".into(),
            ));
        }
    }
    let quad = QuadratureRule::order2();
    let mut rhs = vec![0.0; mesh.n_nodes()];
    for t in 0..mesh.n_triangles() {
        let tag = mesh.elem_region[t];
        let p = mesh.tri_nodes(t);
        let (grads, area) = p1_gradients(&p);
        let tri = mesh.triangles[t];
        match mode {
            SplittingRhs::TwoTerm { eps_m, eps_s } => {
                if tag == RegionTag::Molecule {
                    continue;
                }
                let mut avg = [0.0f64; 2];
                for (bary, w) in quad.points.iter().zip(&quad.weights) {
                    let x = map_point(&p, *bary);
                    let g = field.eval_grad_g_2d(x)?;
                    let c = eps_m - eps_s.eval(x);
                    avg[0] += w * c * g[0];
                    avg[1] += w * c * g[1];
                }
                for i in 0..3 {
                    rhs[tri[i]] += area * (avg[0] * grads[i][0] + avg[1] * grads[i][1]);
                }
            }
            SplittingRhs::ThreeTerm { eps_m, u_harmonic } => {
                if tag == RegionTag::Molecule {
                    // grad u_H is constant per element: exact.
                    let mut gu = [0.0f64; 2];
                    for i in 0..3 {
                        gu[0] += u_harmonic[tri[i]] * grads[i][0];
                        gu[1] += u_harmonic[tri[i]] * grads[i][1];
                    }
                    for i in 0..3 {
                        rhs[tri[i]] -=
                            eps_m * area * (gu[0] * grads[i][0] + gu[1] * grads[i][1]);
                    }
                } else {
                    let mut avg = [0.0f64; 2];
                    for (bary, w) in quad.points.iter().zip(&quad.weights) {
                        let x = map_point(&p, *bary);
                        let g = field.eval_grad_g_2d(x)?;
                        avg[0] += w * g[0];
                        avg[1] += w * g[1];
                    }
                    for i in 0..3 {
                        rhs[tri[i]] +=
                            eps_m * area * (avg[0] * grads[i][0] + avg[1] * grads[i][1]);
                    }
                }
            }
        }
    }
    Ok(rhs)
}

/// Diagnostic form of the 2-term right-hand side for constant solvent
/// permittivity: the interface flux integral
/// `-int_Gamma (eps_m - eps_s) grad G . n v ds` over the polygonal
/// molecular interface, by 2-point Gauss quadrature per edge. Used to
/// cross-check the volume form; entries agree on interior nodes up to
/// quadrature and interface-geometry error.
pub fn assemble_two_term_interface_rhs(
    mesh: &Mesh,
    field: &CoulombField,
    eps_m: f64,
    eps_s: f64,
) -> Result<Vec<f64>> {
    let mut rhs = vec![0.0; mesh.n_nodes()];
    // Gamma edges: shared by one Molecule and one non-Molecule element.
    let mut edges: std::collections::HashMap<(usize, usize), Vec<usize>> =
        std::collections::HashMap::new();
    for (t, tri) in mesh.triangles.iter().enumerate() {
        for e in 0..3 {
            let a = tri[e];
            let b = tri[(e + 1) % 3];
            edges.entry((a.min(b), a.max(b))).or_default().push(t);
        }
    }
    let gauss = [
        0.5 - 0.5 / 3.0f64.sqrt(),
        0.5 + 0.5 / 3.0f64.sqrt(),
    ];
    for ((a, b), ts) in edges {
        if ts.len() != 2 {
            continue;
        }
        let tags = [mesh.elem_region[ts[0]], mesh.elem_region[ts[1]]];
        let mol = match (
            tags[0] == RegionTag::Molecule,
            tags[1] == RegionTag::Molecule,
        ) {
            (true, false) => ts[0],
            (false, true) => ts[1],
            _ => continue,
        };
        let pa = mesh.nodes[a];
        let pb = mesh.nodes[b];
        let ev = [pb[0] - pa[0], pb[1] - pa[1]];
        let len = (ev[0] * ev[0] + ev[1] * ev[1]).sqrt();
        let mut normal = [ev[1] / len, -ev[0] / len];
        // orient away from the molecular element
        let opposite = mesh.triangles[mol]
            .iter()
            .copied()
            .find(|&v| v != a && v != b)
            .expect("triangle has a third vertex");
        let po = mesh.nodes[opposite];
        let mid = [(pa[0] + pb[0]) / 2.0, (pa[1] + pb[1]) / 2.0];
        if normal[0] * (po[0] - mid[0]) + normal[1] * (po[1] - mid[1]) > 0.0 {
            normal = [-normal[0], -normal[1]];
        }
        for &s in &gauss {
            let x = [pa[0] + s * ev[0], pa[1] + s * ev[1]];
            let g = field.eval_grad_g_2d(x)?;
            let flux = (eps_m - eps_s) * (g[0] * normal[0] + g[1] * normal[1]);
            let w = len / 2.0;
            rhs[a] -= w * flux * (1.0 - s);
            rhs[b] -= w * flux * s;
        }
    }
    Ok(rhs)
}

/// Linearized ionic terms: the mass matrix weighted by `m_bar^2` on the
/// ionic region and the load `int f0 v` with `f0 = ell` (3-term) or
/// `f0 = -m_bar^2 G + ell` (2-term, pass the Coulomb field).
pub fn assemble_linear_reaction(
    mesh: &Mesh,
    problem: &PbeProblem,
    two_term_field: Option<&CoulombField>,
) -> Result<(SparseMatrix, Vec<f64>)> {
    let n = mesh.n_nodes();
    let quad = QuadratureRule::order2();
    let mut triplets = Vec::new();
    let mut load = vec![0.0; n];
    for t in 0..mesh.n_triangles() {
        let tag = mesh.elem_region[t];
        let (m2, ell) = linearized_coefficients(problem, tag);
        if m2 == 0.0 && ell == 0.0 {
            continue;
        }
        let p = mesh.tri_nodes(t);
        let area = signed_area(p[0], p[1], p[2]);
        let tri = mesh.triangles[t];
        // consistent P1 mass matrix, exact for constant m2
        for i in 0..3 {
            for j in 0..3 {
                let v = m2 * area / 12.0 * if i == j { 2.0 } else { 1.0 };
                triplets.push((tri[i], tri[j], v));
            }
            load[tri[i]] += ell * area / 3.0;
        }
        if let Some(field) = two_term_field {
            for (bary, w) in quad.points.iter().zip(&quad.weights) {
                let x = map_point(&p, *bary);
                let g = field.eval_g_2d(x)?;
                for i in 0..3 {
                    load[tri[i]] -= w * area * m2 * g * bary[i];
                }
            }
        }
    }
    Ok((SparseMatrix::from_triplets(n, &triplets)?, load))
}

/// Background field the nonlinearity is evaluated against:
/// `b(x, u + w)` with `w = G` for the 2-term splitting, `w = 0` otherwise.
#[derive(Debug, Clone, Copy)]
pub enum WMode<'a> {
    GField(&'a CoulombField),
    Zero,
}

impl WMode<'_> {
    fn eval(&self, x: [f64; 2]) -> Result<f64> {
        match self {
            WMode::GField(f) => f.eval_g_2d(x),
            WMode::Zero => Ok(0.0),
        }
    }
}

/// Nonlinear ionic term: residual contribution `int b(x, u_h + w) phi_i`
/// and tangent `int b'(x, u_h + w) phi_i phi_j` (symmetric positive
/// semidefinite), degree-2 quadrature, only ionic elements contribute.
pub fn assemble_semilinear(
    mesh: &Mesh,
    problem: &PbeProblem,
    u: &[f64],
    w_mode: WMode,
) -> Result<(Vec<f64>, SparseMatrix)> {
    let n = mesh.n_nodes();
    if u.len() != n {
        return Err(Error::InvalidInput("state length differs from node count".into()));
    }
    let quad = QuadratureRule::order2();
    let mut residual = vec![0.0; n];
    let mut triplets = Vec::new();
    for t in 0..mesh.n_triangles() {
        let tag = mesh.elem_region[t];
        if tag != RegionTag::Ions {
            continue;
        }
        let p = mesh.tri_nodes(t);
        let area = signed_area(p[0], p[1], p[2]);
        let tri = mesh.triangles[t];
        for (bary, w) in quad.points.iter().zip(&quad.weights) {
            let x = map_point(&p, *bary);
            let uq = bary[0] * u[tri[0]] + bary[1] * u[tri[1]] + bary[2] * u[tri[2]];
            let arg = uq + w_mode.eval(x)?;
            let b = eval_b(problem, tag, arg)?;
            let bp = eval_b_prime(problem, tag, arg)?;
            for i in 0..3 {
                residual[tri[i]] += w * area * b * bary[i];
                for j in 0..3 {
                    triplets.push((tri[i], tri[j], w * area * bp * bary[i] * bary[j]));
                }
            }
        }
    }
    Ok((residual, SparseMatrix::from_triplets(n, &triplets)?))
}

/// Generic load `int (f0 v + f . grad v)`, degree-2 quadrature.
pub fn assemble_load(
    mesh: &Mesh,
    f0: impl Fn([f64; 2]) -> f64,
    fvec: impl Fn([f64; 2]) -> [f64; 2],
) -> Result<Vec<f64>> {
    let quad = QuadratureRule::order2();
    let mut load = vec![0.0; mesh.n_nodes()];
    for t in 0..mesh.n_triangles() {
        let p = mesh.tri_nodes(t);
        let (grads, area) = p1_gradients(&p);
        let tri = mesh.triangles[t];
        for (bary, w) in quad.points.iter().zip(&quad.weights) {
            let x = map_point(&p, *bary);
            let s = f0(x);
            let v = fvec(x);
            if !(s.is_finite() && v[0].is_finite() && v[1].is_finite()) {
                return Err(Error::InvalidInput(format!(
                    "nonfinite load data at ({}, {})",
                    x[0], x[1]
                )));
            }
            for i in 0..3 {
                load[tri[i]] +=
                    w * area * (s * bary[i] + v[0] * grads[i][0] + v[1] * grads[i][1]);
            }
        }
    }
    Ok(load)
}

/// Reduced system after symmetric elimination of Dirichlet nodes.
#[derive(Debug, Clone)]
pub struct AssembledSystem {
    pub reduced: SparseMatrix,
    pub rhs: Vec<f64>,
    /// free-node index -> full index
    pub free: Vec<usize>,
    pub constrained: Vec<(usize, f64)>,
    pub n_full: usize,
}

impl AssembledSystem {
    /// Full-length vector with the Dirichlet values reinstated.
    pub fn expand(&self, reduced: &[f64]) -> Vec<f64> {
        let mut full = vec![0.0; self.n_full];
        for &(node, value) in &self.constrained {
            full[node] = value;
        }
        for (k, &node) in self.free.iter().enumerate() {
            full[node] = reduced[k];
        }
        full
    }

    /// Restriction of a full vector to the free nodes.
    pub fn restrict(&self, full: &[f64]) -> Vec<f64> {
        self.free.iter().map(|&i| full[i]).collect()
    }
}

/// Symmetric elimination of Dirichlet values: constrained rows and columns
/// are removed and the right-hand side picks up `-A_fc g`.
pub fn apply_dirichlet(
    matrix: &SparseMatrix,
    rhs: &[f64],
    values: &[(usize, f64)],
) -> Result<AssembledSystem> {
    let n = matrix.n;
    if rhs.len() != n {
        return Err(Error::InvalidInput("rhs length differs from matrix".into()));
    }
    let mut constrained_value: Vec<Option<f64>> = vec![None; n];
    for &(node, g) in values {
        if node >= n {
            return Err(Error::IndexOutOfRange { index: node, n });
        }
        match constrained_value[node] {
            Some(prev) if prev != g => {
                return Err(Error::InvalidInput(format!(
                    "node {node} constrained to both {prev} and {g}"
                )));
            }
            _ => constrained_value[node] = Some(g),
        }
    }
    let mut free = Vec::with_capacity(n);
    let mut reduced_index = vec![usize::MAX; n];
    for i in 0..n {
        if constrained_value[i].is_none() {
            reduced_index[i] = free.len();
            free.push(i);
        }
    }
    let mut triplets = Vec::new();
    let mut red_rhs: Vec<f64> = free.iter().map(|&i| rhs[i]).collect();
    for (k, &row) in free.iter().enumerate() {
        for idx in matrix.row_offsets[row]..matrix.row_offsets[row + 1] {
            let col = matrix.col_indices[idx];
            let v = matrix.values[idx];
            match constrained_value[col] {
                None => triplets.push((k, reduced_index[col], v)),
                Some(g) => red_rhs[k] -= v * g,
            }
        }
    }
    let constrained: Vec<(usize, f64)> = constrained_value
        .iter()
        .enumerate()
        .filter_map(|(i, v)| v.map(|g| (i, g)))
        .collect();
    Ok(AssembledSystem {
        reduced: SparseMatrix::from_triplets(free.len(), &triplets)?,
        rhs: red_rhs,
        free,
        constrained,
        n_full: n,
    })
}

/// Value of the energy functional, with the extended-real convention:
/// quadrature overflow in the exponential term reports `Infinite` rather
/// than an error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EnergyValue {
    Finite(f64),
    Infinite,
}

impl EnergyValue {
    pub fn finite(self) -> Option<f64> {
        match self {
            EnergyValue::Finite(v) => Some(v),
            EnergyValue::Infinite => None,
        }
    }

    /// Strictly-less comparison treating `Infinite` as larger than any
    /// finite value.
    pub fn lt(self, other: EnergyValue) -> bool {
        match (self, other) {
            (EnergyValue::Finite(a), EnergyValue::Finite(b)) => a < b,
            (EnergyValue::Finite(_), EnergyValue::Infinite) => true,
            _ => false,
        }
    }
}

/// The discrete energy
/// `J(u) = 1/2 u^T A u + int B(x, u_h + w) - rhs^T u`
/// with the ionic term integrated by the same degree-2 rule as the
/// residual, so descent checks and gradient checks are consistent.
pub fn energy_j(
    mesh: &Mesh,
    problem: &PbeProblem,
    stiffness: &SparseMatrix,
    u: &[f64],
    w_mode: WMode,
    rhs: &[f64],
) -> Result<EnergyValue> {
    let au = stiffness.matvec(u);
    let mut value = 0.5 * crate::linalg::dot(u, &au) - crate::linalg::dot(rhs, u);
    let quad = QuadratureRule::order2();
    for t in 0..mesh.n_triangles() {
        let tag = mesh.elem_region[t];
        if tag != RegionTag::Ions {
            continue;
        }
        let p = mesh.tri_nodes(t);
        let area = signed_area(p[0], p[1], p[2]);
        let tri = mesh.triangles[t];
        for (bary, w) in quad.points.iter().zip(&quad.weights) {
            let x = map_point(&p, *bary);
            let uq = bary[0] * u[tri[0]] + bary[1] * u[tri[1]] + bary[2] * u[tri[2]];
            let arg = uq + w_mode.eval(x)?;
            if problem
                .species
                .iter()
                .any(|sp| (f64::from(sp.valence) * arg).abs() > EXP_GUARD)
            {
                return Ok(EnergyValue::Infinite);
            }
            value += w * area * eval_big_b(problem, tag, arg)?;
        }
    }
    Ok(EnergyValue::Finite(value))
}

/// P1 interpolation at a point inside the mesh.
pub fn point_eval(mesh: &Mesh, values: &[f64], x: [f64; 2]) -> Result<f64> {
    let (t, bary) = mesh
        .find_triangle(x)
        .ok_or(Error::OutsideMesh { x: x[0], y: x[1] })?;
    let tri = mesh.triangles[t];
    Ok(bary[0] * values[tri[0]] + bary[1] * values[tri[1]] + bary[2] * values[tri[2]])
}

/// L2 and H1-seminorm errors of a nodal field against an exact solution,
/// degree-4 quadrature.
pub fn error_norms(
    mesh: &Mesh,
    u: &[f64],
    exact: impl Fn([f64; 2]) -> f64,
    exact_grad: impl Fn([f64; 2]) -> [f64; 2],
) -> (f64, f64) {
    let quad = QuadratureRule::order4();
    let mut l2 = 0.0;
    let mut h1 = 0.0;
    for t in 0..mesh.n_triangles() {
        let p = mesh.tri_nodes(t);
        let (grads, area) = p1_gradients(&p);
        let tri = mesh.triangles[t];
        let mut gu = [0.0f64; 2];
        for i in 0..3 {
            gu[0] += u[tri[i]] * grads[i][0];
            gu[1] += u[tri[i]] * grads[i][1];
        }
        for (bary, w) in quad.points.iter().zip(&quad.weights) {
            let x = map_point(&p, *bary);
            let uq = bary[0] * u[tri[0]] + bary[1] * u[tri[1]] + bary[2] * u[tri[2]];
            let d = uq - exact(x);
            l2 += w * area * d * d;
            let ge = exact_grad(x);
            let dx = gu[0] - ge[0];
            let dy = gu[1] - ge[1];
            h1 += w * area * (dx * dx + dy * dy);
        }
    }
    (l2.sqrt(), h1.sqrt())
}

/// Integral of the square of a P1 field over elements selected by a region
/// predicate; exact (mass-matrix formula per element).
pub fn l2_norm_on(
    mesh: &Mesh,
    values: &[f64],
    select: impl Fn(RegionTag) -> bool,
) -> f64 {
    let mut acc = 0.0;
    for t in 0..mesh.n_triangles() {
        if !select(mesh.elem_region[t]) {
            continue;
        }
        let p = mesh.tri_nodes(t);
        let area = signed_area(p[0], p[1], p[2]);
        let tri = mesh.triangles[t];
        let v = [values[tri[0]], values[tri[1]], values[tri[2]]];
        let sum_sq = v[0] * v[0] + v[1] * v[1] + v[2] * v[2];
        let sum_cross = v[0] * v[1] + v[1] * v[2] + v[0] * v[2];
        acc += area / 6.0 * (sum_sq + sum_cross);
    }
    acc.sqrt()
}
