//! Molecular-region construction: PQR ingestion, distances to ball unions,
//! rolling-ball closing/opening on voxel grids, region classification.
//!
//! The solvent-excluded (Connolly) region is the morphological closing of the
//! van der Waals ball union by the probe radius: a point is outside the
//! closing iff some probe ball covers it while avoiding the union.
//!
//! In 2-D each cell center is classified against the exact continuum
//! closing (the admissible probe centers form the complement of the
//! probe-dilated union, whose boundary is a finite arc arrangement), so the
//! set inclusions `opening <= set <= closing` and monotonicity of the
//! closing in the probe radius hold cell-exactly. In 3-D the closing uses
//! two distance fields instead: the analytic distance to the union marks the
//! admissible probe-center cells `S = {c : dist(c, V) >= r_p}` and an exact
//! Euclidean grid distance transform from `S` marks a cell inside iff its
//! distance to `S` is at least `r_p`, with O(h) boundary accuracy. Closing a
//! mask ([`close_mask`]) always uses the grid-transform form, whose output
//! is a fixed point of itself: closing twice equals closing once cell-exactly.

use crate::error::{Error, Result};
use crate::model::{Charge, ChargeSystem, RegionTag};
use rayon::prelude::*;
use std::io::BufRead;

/// Sentinel for "no seed anywhere" in the distance transform.
const FAR: f64 = 1e30;

/// A ball in `dim` dimensions (third coordinate ignored for `dim == 2`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ball {
    pub center: [f64; 3],
    pub radius: f64,
}

/// Finite union of balls (the van der Waals set of a molecule).
#[derive(Debug, Clone, PartialEq)]
pub struct BallUnion {
    pub balls: Vec<Ball>,
    pub dim: usize,
}

impl BallUnion {
    pub fn new(balls: Vec<Ball>, dim: usize) -> Result<Self> {
        if dim != 2 && dim != 3 {
            return Err(Error::InvalidInput(format!("dimension must be 2 or 3, got {dim}")));
        }
        if balls.is_empty() {
            return Err(Error::EmptyInput("ball union needs at least one ball".into()));
        }
        if balls.iter().any(|b| !(b.radius > 0.0)) {
            return Err(Error::InvalidInput("ball radii must be positive".into()));
        }
        Ok(BallUnion { balls, dim })
    }

    /// Van der Waals set of a charge system. Charges with zero radius are
    /// given `fallback_radius`.
    pub fn from_charges(charges: &ChargeSystem, fallback_radius: f64) -> Result<Self> {
        let balls = charges
            .charges
            .iter()
            .map(|c| Ball {
                center: c.position,
                radius: if c.radius > 0.0 { c.radius } else { fallback_radius },
            })
            .collect();
        BallUnion::new(balls, charges.dim)
    }

    /// Dilation by `r`: same centers, radii enlarged by `r`.
    pub fn dilate(&self, r: f64) -> BallUnion {
        BallUnion {
            balls: self
                .balls
                .iter()
                .map(|b| Ball {
                    center: b.center,
                    radius: b.radius + r,
                })
                .collect(),
            dim: self.dim,
        }
    }

    /// Axis-aligned bounding box, per-axis (lo, hi).
    pub fn bounding_box(&self) -> ([f64; 3], [f64; 3]) {
        let mut lo = [f64::INFINITY; 3];
        let mut hi = [f64::NEG_INFINITY; 3];
        for b in &self.balls {
            for k in 0..self.dim {
                lo[k] = lo[k].min(b.center[k] - b.radius);
                hi[k] = hi[k].max(b.center[k] + b.radius);
            }
        }
        for k in self.dim..3 {
            lo[k] = 0.0;
            hi[k] = 0.0;
        }
        (lo, hi)
    }
}

/// Distance from `x` to the union: `max(0, min_i(|x - c_i| - R_i))`.
/// Exact for exterior points, zero inside.
pub fn dist_to_union(u: &BallUnion, x: [f64; 3]) -> f64 {
    let mut best = f64::INFINITY;
    for b in &u.balls {
        let mut s = 0.0;
        for k in 0..u.dim {
            let d = x[k] - b.center[k];
            s += d * d;
        }
        best = best.min(s.sqrt() - b.radius);
    }
    best.max(0.0)
}

/// Uniform cell-centered voxel grid. Cell `(i, j, k)` has its center at
/// `origin + (index + 1/2) * spacing` per axis; for `dim == 2` the grid is a
/// single layer with centers at `z = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct VoxelGrid {
    pub origin: [f64; 3],
    pub spacing: f64,
    pub extents: [usize; 3],
    pub dim: usize,
}

impl VoxelGrid {
    pub fn new(origin: [f64; 3], spacing: f64, extents: [usize; 3], dim: usize) -> Result<Self> {
        if dim != 2 && dim != 3 {
            return Err(Error::InvalidInput(format!("dimension must be 2 or 3, got {dim}")));
        }
        if !(spacing > 0.0) {
            return Err(Error::InvalidInput("grid spacing must be positive".into()));
        }
        let active = if dim == 2 { 2 } else { 3 };
        for k in 0..active {
            if extents[k] < 2 {
                return Err(Error::InvalidInput(format!(
                    "grid extent along axis {k} must be at least 2"
                )));
            }
        }
        let mut extents = extents;
        if dim == 2 {
            extents[2] = 1;
        }
        Ok(VoxelGrid {
            origin,
            spacing,
            extents,
            dim,
        })
    }

    /// Grid covering `u` dilated by `margin`, with `n_longest` cells along
    /// the longest axis.
    pub fn covering(u: &BallUnion, margin: f64, n_longest: usize) -> Result<Self> {
        if n_longest < 2 {
            return Err(Error::InvalidInput("need at least 2 cells per axis".into()));
        }
        let (lo, hi) = u.dilate(margin).bounding_box();
        let mut longest = 0.0f64;
        for k in 0..u.dim {
            longest = longest.max(hi[k] - lo[k]);
        }
        let spacing = longest / n_longest as f64;
        let mut extents = [1usize; 3];
        let mut origin = [0.0f64; 3];
        for k in 0..u.dim {
            extents[k] = (((hi[k] - lo[k]) / spacing).ceil() as usize).max(2);
            // center the covered box
            let span = extents[k] as f64 * spacing;
            origin[k] = 0.5 * (lo[k] + hi[k]) - 0.5 * span;
        }
        if u.dim == 2 {
            origin[2] = -0.5 * spacing;
        }
        VoxelGrid::new(origin, spacing, extents, u.dim)
    }

    pub fn len(&self) -> usize {
        self.extents[0] * self.extents[1] * self.extents[2]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        (k * self.extents[1] + j) * self.extents[0] + i
    }

    pub fn cell_center(&self, i: usize, j: usize, k: usize) -> [f64; 3] {
        [
            self.origin[0] + (i as f64 + 0.5) * self.spacing,
            self.origin[1] + (j as f64 + 0.5) * self.spacing,
            if self.dim == 2 {
                0.0
            } else {
                self.origin[2] + (k as f64 + 0.5) * self.spacing
            },
        ]
    }

    /// Centers of all cells in index order.
    pub fn centers(&self) -> Vec<[f64; 3]> {
        let mut out = Vec::with_capacity(self.len());
        for k in 0..self.extents[2] {
            for j in 0..self.extents[1] {
                for i in 0..self.extents[0] {
                    out.push(self.cell_center(i, j, k));
                }
            }
        }
        out
    }

    /// Index of the cell containing `x` (clamped to the grid).
    pub fn locate(&self, x: [f64; 3]) -> usize {
        let mut idx = [0usize; 3];
        for k in 0..self.dim {
            let t = ((x[k] - self.origin[k]) / self.spacing).floor();
            idx[k] = t.clamp(0.0, (self.extents[k] - 1) as f64) as usize;
        }
        self.index(idx[0], idx[1], idx[2])
    }

    fn contains_box(&self, lo: [f64; 3], hi: [f64; 3]) -> bool {
        for k in 0..self.dim {
            let g_lo = self.origin[k];
            let g_hi = self.origin[k] + self.extents[k] as f64 * self.spacing;
            if lo[k] < g_lo - 1e-12 || hi[k] > g_hi + 1e-12 {
                return false;
            }
        }
        true
    }
}

/// Boolean per-cell mask bound to a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskGrid {
    pub grid: VoxelGrid,
    pub inside: Vec<bool>,
}

impl MaskGrid {
    pub fn count_inside(&self) -> usize {
        self.inside.iter().filter(|&&b| b).count()
    }

    /// Total measure of the mask (cell count times cell volume/area).
    pub fn measure(&self) -> f64 {
        let cell = self.grid.spacing.powi(self.grid.dim as i32);
        self.count_inside() as f64 * cell
    }
}

/// Exact squared Euclidean distance transform (in cell-index units) to the
/// nearest seed cell, by separable lower-envelope passes. Cells in grids
/// without seeds report `>= FAR`.
fn squared_edt(seeds: &[bool], grid: &VoxelGrid) -> Vec<f64> {
    let [nx, ny, nz] = grid.extents;
    let mut d: Vec<f64> = seeds.iter().map(|&s| if s { 0.0 } else { FAR }).collect();

    // Pass along x: exact squared distance within each row.
    d.par_chunks_mut(nx).for_each(|row| {
        let mut left = vec![FAR; nx];
        let mut run = FAR;
        for i in 0..nx {
            run = if row[i] == 0.0 { 0.0 } else { run + 1.0 };
            left[i] = run;
        }
        run = FAR;
        for i in (0..nx).rev() {
            run = if row[i] == 0.0 { 0.0 } else { run + 1.0 };
            let lin = run.min(left[i]);
            row[i] = if lin >= FAR { FAR } else { lin * lin };
        }
    });

    // Pass along y (and z in 3-D): lower envelope of parabolas.
    let columns: Vec<(usize, usize)> = (0..nz)
        .flat_map(|k| (0..nx).map(move |i| (i, k)))
        .collect();
    let results: Vec<(usize, usize, Vec<f64>)> = columns
        .par_iter()
        .map(|&(i, k)| {
            let mut f = vec![0.0; ny];
            for j in 0..ny {
                f[j] = d[grid.index(i, j, k)];
            }
            let out = lower_envelope(&f);
            (i, k, out)
        })
        .collect();
    for (i, k, col) in results {
        for j in 0..ny {
            d[grid.index(i, j, k)] = col[j];
        }
    }

    if grid.dim == 3 && nz > 1 {
        let pillars: Vec<(usize, usize)> = (0..ny)
            .flat_map(|j| (0..nx).map(move |i| (i, j)))
            .collect();
        let results: Vec<(usize, usize, Vec<f64>)> = pillars
            .par_iter()
            .map(|&(i, j)| {
                let mut f = vec![0.0; nz];
                for k in 0..nz {
                    f[k] = d[grid.index(i, j, k)];
                }
                let out = lower_envelope(&f);
                (i, j, out)
            })
            .collect();
        for (i, j, pil) in results {
            for k in 0..nz {
                d[grid.index(i, j, k)] = pil[k];
            }
        }
    }
    d
}

/// 1-D squared-distance transform `d(q) = min_p (q - p)^2 + f(p)`.
fn lower_envelope(f: &[f64]) -> Vec<f64> {
    let n = f.len();
    let mut d = vec![0.0; n];
    if n == 1 {
        d[0] = f[0];
        return d;
    }
    let mut v = vec![0usize; n];
    let mut z = vec![0.0f64; n + 1];
    let intersect = |q: usize, p: usize| -> f64 {
        let (qf, pf) = (q as f64, p as f64);
        ((f[q] + qf * qf) - (f[p] + pf * pf)) / (2.0 * qf - 2.0 * pf)
    };
    let mut k = 0usize;
    v[0] = 0;
    z[0] = f64::NEG_INFINITY;
    z[1] = f64::INFINITY;
    for q in 1..n {
        let mut s = intersect(q, v[k]);
        while k > 0 && s <= z[k] {
            k -= 1;
            s = intersect(q, v[k]);
        }
        if k == 0 && s <= z[0] {
            v[0] = q;
        } else {
            k += 1;
            v[k] = q;
            z[k] = s;
            z[k + 1] = f64::INFINITY;
        }
    }
    k = 0;
    for q in 0..n {
        while z[k + 1] < q as f64 {
            k += 1;
        }
        let dq = q as f64 - v[k] as f64;
        d[q] = (dq * dq + f[v[k]]).min(FAR);
    }
    d
}

/// Distance (physical units) from each cell to the nearest `true` cell.
pub fn grid_distance_to(seeds: &[bool], grid: &VoxelGrid) -> Vec<f64> {
    squared_edt(seeds, grid)
        .into_iter()
        .map(|d2| if d2 >= FAR { f64::INFINITY } else { d2.sqrt() * grid.spacing })
        .collect()
}

fn check_resolution(r_p: f64, grid: &VoxelGrid) -> Result<()> {
    if !(r_p > 0.0) {
        return Err(Error::InvalidInput(format!("probe radius must be positive, got {r_p}")));
    }
    if grid.spacing > r_p / 4.0 {
        return Err(Error::Resolution(format!(
            "spacing {:.6e} exceeds r_p/4 = {:.6e}; the closing is undetectable at this resolution",
            grid.spacing,
            r_p / 4.0
        )));
    }
    Ok(())
}

/// Intersection points of two circles, if they properly intersect.
fn circle_intersections(
    c1: [f64; 2],
    r1: f64,
    c2: [f64; 2],
    r2: f64,
) -> Option<([f64; 2], [f64; 2])> {
    let dx = c2[0] - c1[0];
    let dy = c2[1] - c1[1];
    let d = (dx * dx + dy * dy).sqrt();
    if d <= 0.0 || d >= r1 + r2 || d <= (r1 - r2).abs() {
        return None;
    }
    let a = (d * d + r1 * r1 - r2 * r2) / (2.0 * d);
    let h2 = r1 * r1 - a * a;
    if h2 <= 0.0 {
        return None;
    }
    let h = h2.sqrt();
    let mx = c1[0] + a * dx / d;
    let my = c1[1] + a * dy / d;
    let ex = -dy / d;
    let ey = dx / d;
    Some(([mx + h * ex, my + h * ey], [mx - h * ex, my - h * ey]))
}

/// Exact 2-D closing test for one point. `dilated` holds `(center, R_i + r_p)`
/// and `pairs` the indices of properly intersecting dilated circles. A point
/// is outside the closing iff a free probe center (a point at distance at
/// least `r_p` from the union, i.e. outside every dilated disk) lies within
/// `r_p` of it; the nearest free point is either a radial projection onto a
/// dilated circle or an intersection point of two of them.
fn closing_contains_2d(
    u: &BallUnion,
    r_p: f64,
    dilated: &[([f64; 2], f64)],
    pairs: &[(usize, usize)],
    x: [f64; 2],
) -> bool {
    if dist_to_union(u, [x[0], x[1], 0.0]) >= r_p {
        return false; // x itself is an admissible probe center
    }
    let covered = |p: [f64; 2], skip1: usize, skip2: usize| -> bool {
        dilated.iter().enumerate().any(|(k, &(c, rho))| {
            if k == skip1 || k == skip2 {
                return false;
            }
            let dx = p[0] - c[0];
            let dy = p[1] - c[1];
            (dx * dx + dy * dy).sqrt() < rho - 1e-12 * (1.0 + rho)
        })
    };
    // Radial projections onto each dilated circle.
    for (i, &(c, rho)) in dilated.iter().enumerate() {
        let dx = x[0] - c[0];
        let dy = x[1] - c[1];
        let di = (dx * dx + dy * dy).sqrt();
        if di == 0.0 {
            continue; // every point of this circle is rho >= r_p away
        }
        if (di - rho).abs() < r_p {
            let p = [c[0] + rho * dx / di, c[1] + rho * dy / di];
            if !covered(p, i, i) {
                return false;
            }
        }
    }
    // Corners of the free boundary: pairwise circle intersections.
    for &(i, j) in pairs {
        let (ci, ri) = dilated[i];
        let (cj, rj) = dilated[j];
        let reachable = {
            let dxi = x[0] - ci[0];
            let dyi = x[1] - ci[1];
            let dxj = x[0] - cj[0];
            let dyj = x[1] - cj[1];
            // a point on a circle can be within r_p of x only if x is
            // within r_p of the circle itself
            ((dxi * dxi + dyi * dyi).sqrt() - ri).abs() <= r_p
                && ((dxj * dxj + dyj * dyj).sqrt() - rj).abs() <= r_p
        };
        if !reachable {
            continue;
        }
        if let Some((q1, q2)) = circle_intersections(ci, ri, cj, rj) {
            for q in [q1, q2] {
                let dx = x[0] - q[0];
                let dy = x[1] - q[1];
                if (dx * dx + dy * dy).sqrt() < r_p && !covered(q, i, j) {
                    return false;
                }
            }
        }
    }
    true
}

/// Morphological closing of the ball union by a probe of radius `r_p`,
/// rasterized on `grid`. Exact per cell in 2-D; O(h) two-field grid
/// construction in 3-D.
pub fn rolling_ball_close(u: &BallUnion, r_p: f64, grid: &VoxelGrid) -> Result<MaskGrid> {
    check_resolution(r_p, grid)?;
    let (lo, hi) = u.dilate(r_p).bounding_box();
    if !grid.contains_box(lo, hi) {
        return Err(Error::InvalidInput(
            "grid does not cover the probe-dilated ball union".into(),
        ));
    }
    if u.dim == 2 {
        let dilated: Vec<([f64; 2], f64)> = u
            .balls
            .iter()
            .map(|b| ([b.center[0], b.center[1]], b.radius + r_p))
            .collect();
        let mut pairs = Vec::new();
        for i in 0..dilated.len() {
            for j in (i + 1)..dilated.len() {
                let (ci, ri) = dilated[i];
                let (cj, rj) = dilated[j];
                let d = ((ci[0] - cj[0]).powi(2) + (ci[1] - cj[1]).powi(2)).sqrt();
                if d < ri + rj && d > (ri - rj).abs() {
                    pairs.push((i, j));
                }
            }
        }
        let centers = grid.centers();
        let inside: Vec<bool> = centers
            .par_iter()
            .map(|&c| closing_contains_2d(u, r_p, &dilated, &pairs, [c[0], c[1]]))
            .collect();
        return Ok(MaskGrid {
            grid: grid.clone(),
            inside,
        });
    }
    let centers = grid.centers();
    let seeds: Vec<bool> = centers
        .par_iter()
        .map(|&c| dist_to_union(u, c) >= r_p)
        .collect();
    let dist = grid_distance_to(&seeds, grid);
    Ok(MaskGrid {
        grid: grid.clone(),
        inside: dist.into_iter().map(|d| d >= r_p).collect(),
    })
}

/// Morphological closing of an arbitrary mask by radius `r` (used to check
/// idempotence and to post-process masks).
pub fn close_mask(mask: &MaskGrid, r: f64) -> Result<MaskGrid> {
    check_resolution(r, &mask.grid)?;
    let dist_to_mask = grid_distance_to(&mask.inside, &mask.grid);
    let safe: Vec<bool> = dist_to_mask.iter().map(|&d| d >= r).collect();
    let dist_to_safe = grid_distance_to(&safe, &mask.grid);
    Ok(MaskGrid {
        grid: mask.grid.clone(),
        inside: dist_to_safe.into_iter().map(|d| d >= r).collect(),
    })
}

/// Morphological opening of the ball union by radius `r` on `grid`:
/// the union of probe balls contained in the set.
pub fn rolling_ball_open(u: &BallUnion, r: f64, grid: &VoxelGrid) -> Result<MaskGrid> {
    check_resolution(r, grid)?;
    let centers = grid.centers();
    let outside: Vec<bool> = centers
        .par_iter()
        .map(|&c| dist_to_union(u, c) > 0.0)
        .collect();
    let depth = grid_distance_to(&outside, grid);
    let admissible: Vec<bool> = depth.iter().map(|&d| d >= r).collect();
    let dist = grid_distance_to(&admissible, grid);
    Ok(MaskGrid {
        grid: grid.clone(),
        inside: dist.into_iter().map(|d| d < r).collect(),
    })
}

/// Region classifier: total map from points to region tags.
#[derive(Debug, Clone)]
pub enum RegionMap {
    /// Grid-backed tags from the rolling-ball pipeline.
    Grid { grid: VoxelGrid, tags: Vec<RegionTag> },
    /// Exact concentric-disk classifier `|x| < r_m | r_iel`.
    AnalyticDisk { r_m: f64, r_iel: f64 },
}

impl RegionMap {
    pub fn classify(&self, x: [f64; 3]) -> RegionTag {
        match self {
            RegionMap::Grid { grid, tags } => tags[grid.locate(x)],
            RegionMap::AnalyticDisk { r_m, r_iel } => {
                let rho = (x[0] * x[0] + x[1] * x[1]).sqrt();
                if rho < *r_m {
                    RegionTag::Molecule
                } else if rho < *r_iel {
                    RegionTag::Iel
                } else {
                    RegionTag::Ions
                }
            }
        }
    }

    pub fn provenance(&self) -> &'static str {
        match self {
            RegionMap::Grid { .. } => "grid-based",
            RegionMap::AnalyticDisk { .. } => "analytic-disk",
        }
    }

    /// Per-region measure on the grid (grid-backed maps only).
    pub fn region_measure(&self, tag: RegionTag) -> Option<f64> {
        match self {
            RegionMap::Grid { grid, tags } => {
                let cell = grid.spacing.powi(grid.dim as i32);
                Some(tags.iter().filter(|&&t| t == tag).count() as f64 * cell)
            }
            RegionMap::AnalyticDisk { .. } => None,
        }
    }
}

/// Build the molecular/IEL/ionic classification: the molecule is the
/// rolling-ball closing of the van der Waals set, the ion exclusion layer is
/// the `r_I`-dilation minus the molecule, everything else is ionic.
/// Requires `r_I > r_p`.
pub fn build_region_map(
    u: &BallUnion,
    r_p: f64,
    r_i: f64,
    grid: &VoxelGrid,
) -> Result<RegionMap> {
    if !(r_i > r_p) {
        return Err(Error::InvalidInput(format!(
            "ion exclusion radius r_I = {r_i} must exceed probe radius r_p = {r_p}; smaller values are not defined by the model"
        )));
    }
    let molecule = rolling_ball_close(u, r_p, grid)?;
    let centers = grid.centers();
    let tags: Vec<RegionTag> = centers
        .par_iter()
        .zip(&molecule.inside)
        .map(|(&c, &in_mol)| {
            if in_mol {
                RegionTag::Molecule
            } else if dist_to_union(u, c) < r_i {
                RegionTag::Iel
            } else {
                RegionTag::Ions
            }
        })
        .collect();
    // Every ball center is a charge position candidate; the closing contains
    // the union, so centers must be tagged Molecule.
    for b in &u.balls {
        let t = tags[grid.locate(b.center)];
        if t != RegionTag::Molecule {
            return Err(Error::InvalidInput(format!(
                "ball center {:?} classified {:?}; grid too coarse for the molecule",
                b.center, t
            )));
        }
    }
    Ok(RegionMap::Grid {
        grid: grid.clone(),
        tags,
    })
}

/// Exact-geometry classifier for concentric-disk solver tests;
/// `0 < r_m < r_iel < domain_halfwidth` required.
pub fn analytic_disk_regions(r_m: f64, r_iel: f64, domain_halfwidth: f64) -> Result<RegionMap> {
    if !(0.0 < r_m && r_m < r_iel && r_iel < domain_halfwidth) {
        return Err(Error::InvalidInput(format!(
            "need 0 < r_m < r_iel < half-width, got r_m = {r_m}, r_iel = {r_iel}, half-width = {domain_halfwidth}"
        )));
    }
    Ok(RegionMap::AnalyticDisk { r_m, r_iel })
}

/// Smallest positive surface-to-surface gap between two balls of the union,
/// if any pair is disjoint. A heuristic for the thin-passage hypothesis of
/// the smooth-interface theory (passages thinner than the probe diameter
/// leave kinks on the closed surface).
pub fn min_surface_gap(u: &BallUnion) -> Option<f64> {
    let mut best: Option<f64> = None;
    for i in 0..u.balls.len() {
        for j in (i + 1)..u.balls.len() {
            let a = &u.balls[i];
            let b = &u.balls[j];
            let mut d2 = 0.0;
            for k in 0..u.dim {
                let d = a.center[k] - b.center[k];
                d2 += d * d;
            }
            let gap = d2.sqrt() - a.radius - b.radius;
            if gap > 0.0 {
                best = Some(best.map_or(gap, |g: f64| g.min(gap)));
            }
        }
    }
    best
}

/// Parse PQR text: one charge per ATOM/HETATM record, the last five
/// whitespace-separated fields being `x y z charge radius` (in Angstrom and
/// elementary charges); all other record types are ignored.
pub fn ingest_pqr<R: BufRead>(reader: R) -> Result<ChargeSystem> {
    let mut charges = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::Io {
            path: "<pqr stream>".into(),
            source: e,
        })?;
        let line_number = lineno + 1;
        let fields: Vec<&str> = line.split_whitespace().collect();
        match fields.first() {
            Some(&"ATOM") | Some(&"HETATM") => {}
            _ => continue,
        }
        if fields.len() < 6 {
            return Err(Error::Parse {
                line: line_number,
                message: format!("ATOM record has {} fields, need at least 6", fields.len()),
            });
        }
        let tail = &fields[fields.len() - 5..];
        let mut nums = [0.0f64; 5];
        for (k, raw) in tail.iter().enumerate() {
            nums[k] = raw.parse::<f64>().map_err(|_| Error::Parse {
                line: line_number,
                message: format!("field '{raw}' is not a number"),
            })?;
        }
        charges.push(Charge {
            position: [nums[0], nums[1], nums[2]],
            valence: nums[3],
            radius: nums[4],
        });
    }
    if charges.is_empty() {
        return Err(Error::EmptyInput("PQR stream contained no ATOM/HETATM records".into()));
    }
    ChargeSystem::new(charges, 3)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::io::Cursor;

    fn two_balls(dist: f64, r: f64) -> BallUnion {
        BallUnion::new(
            vec![
                Ball {
                    center: [-dist / 2.0, 0.0, 0.0],
                    radius: r,
                },
                Ball {
                    center: [dist / 2.0, 0.0, 0.0],
                    radius: r,
                },
            ],
            2,
        )
        .unwrap()
    }

    #[test]
    fn pqr_single_atom() {
        let text = "ATOM      1  N   VAL A   1     0.0 0.0 0.0 1.0 1.5\n";
        let cs = ingest_pqr(Cursor::new(text)).unwrap();
        assert_eq!(cs.charges.len(), 1);
        assert_eq!(cs.charges[0].position, [0.0, 0.0, 0.0]);
        assert_eq!(cs.charges[0].valence, 1.0);
        assert_eq!(cs.charges[0].radius, 1.5);
    }

    #[test]
    fn pqr_filters_record_types() {
        let text = "REMARK generated\nATOM 1 N V 1 0.0 0.0 0.0 1.0 1.5\nHETATM 2 O W 2 3.0 0.0 0.0 -0.5 1.2\nTER\n";
        let cs = ingest_pqr(Cursor::new(text)).unwrap();
        assert_eq!(cs.charges.len(), 2);
    }

    #[test]
    fn pqr_malformed_field_reports_line() {
        let text = "ATOM 1 N V 1 0.0 0.0 0.0 1.0 1.5\nATOM 2 O W 2 xyz 0.0 0.0 -0.5 1.2\n";
        match ingest_pqr(Cursor::new(text)) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn pqr_empty_input_is_error() {
        assert!(matches!(
            ingest_pqr(Cursor::new("REMARK nothing\n")),
            Err(Error::EmptyInput(_))
        ));
    }

    #[test]
    fn pqr_synthetic_protein_scale_count() {
        // Synthetic many-atom file: the charge count must equal the ATOM
        // record count (line-count oracle).
        let mut text = String::from("REMARK synthetic\n");
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 800;
        for i in 0..n {
            let (x, y, z): (f64, f64, f64) = (
                rng.gen_range(-20.0..20.0),
                rng.gen_range(-20.0..20.0),
                rng.gen_range(-20.0..20.0),
            );
            text.push_str(&format!(
                "ATOM {} C RES A {} {:.4} {:.4} {:.4} {:.3} {:.3}\n",
                i + 1,
                i + 1,
                x,
                y,
                z,
                rng.gen_range(-1.0..1.0),
                rng.gen_range(1.0..2.0),
            ));
        }
        text.push_str("END\n");
        let atom_lines = text.lines().filter(|l| l.starts_with("ATOM")).count();
        let cs = ingest_pqr(Cursor::new(text.clone())).unwrap();
        assert_eq!(cs.charges.len(), atom_lines);
        assert_eq!(atom_lines, n);
    }

    #[test]
    fn distance_inside_and_single_ball() {
        let u = BallUnion::new(
            vec![Ball {
                center: [0.0, 0.0, 0.0],
                radius: 1.0,
            }],
            2,
        )
        .unwrap();
        assert_eq!(dist_to_union(&u, [0.0, 0.0, 0.0]), 0.0);
        assert!((dist_to_union(&u, [3.0, 0.0, 0.0]) - 2.0).abs() <= 1e-15);
    }

    #[test]
    fn distance_matches_surface_sampling_oracle() {
        let u = two_balls(2.2, 1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            let x = [rng.gen_range(-4.0..4.0), rng.gen_range(-4.0..4.0), 0.0];
            // Oracle: dense sampling of both sphere surfaces.
            let mut best = f64::INFINITY;
            let mut inside = false;
            for b in &u.balls {
                let dx = x[0] - b.center[0];
                let dy = x[1] - b.center[1];
                if (dx * dx + dy * dy).sqrt() < b.radius {
                    inside = true;
                }
                for s in 0..20000 {
                    let th = 2.0 * std::f64::consts::PI * (s as f64) / 20000.0;
                    let px = b.center[0] + b.radius * th.cos();
                    let py = b.center[1] + b.radius * th.sin();
                    best = best.min(((x[0] - px).powi(2) + (x[1] - py).powi(2)).sqrt());
                }
            }
            let oracle = if inside { 0.0 } else { best };
            assert!(
                (dist_to_union(&u, x) - oracle).abs() <= 1e-7,
                "point {x:?}"
            );
        }
    }

    #[test]
    fn dilation_identity_is_exact() {
        let u = two_balls(2.7, 0.8);
        let r = 0.45;
        let d = u.dilate(r);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..200 {
            let x = [rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0), 0.0];
            let direct = dist_to_union(&d, x);
            let shifted = (dist_to_union(&u, x) - r).max(0.0);
            // Equality can only differ where the clamp to zero kicks in,
            // inside the dilated-but-outside-original shell.
            if dist_to_union(&u, x) >= r {
                assert!((direct - shifted).abs() <= 1e-9);
            } else {
                assert_eq!(direct, 0.0);
            }
        }
    }

    /// Brute-force closing oracle: a cell is outside the closing iff some
    /// probe ball (centered on a refined grid) contains it while avoiding
    /// the union.
    fn brute_force_close(u: &BallUnion, r_p: f64, grid: &VoxelGrid) -> Vec<bool> {
        let refine = 2usize;
        let nx = grid.extents[0] * refine;
        let ny = grid.extents[1] * refine;
        let h = grid.spacing / refine as f64;
        let mut probe_ok = Vec::with_capacity(nx * ny);
        for j in 0..ny {
            for i in 0..nx {
                let c = [
                    grid.origin[0] + (i as f64 + 0.5) * h,
                    grid.origin[1] + (j as f64 + 0.5) * h,
                    0.0,
                ];
                probe_ok.push((c, dist_to_union(u, c) >= r_p));
            }
        }
        grid.centers()
            .iter()
            .map(|&x| {
                let covered = probe_ok.iter().any(|&(c, ok)| {
                    ok && {
                        let dx = x[0] - c[0];
                        let dy = x[1] - c[1];
                        (dx * dx + dy * dy).sqrt() < r_p
                    }
                });
                !covered
            })
            .collect()
    }

    fn boundary_discrepancy_ok(got: &[bool], oracle: &[bool], grid: &VoxelGrid, band: i64) -> bool {
        let nx = grid.extents[0] as i64;
        let ny = grid.extents[1] as i64;
        for j in 0..ny {
            for i in 0..nx {
                let idx = (j * nx + i) as usize;
                if got[idx] == oracle[idx] {
                    continue;
                }
                // A differing cell must lie within `band` cells of the oracle boundary.
                let mut near_boundary = false;
                'scan: for dj in -band..=band {
                    for di in -band..=band {
                        let (i2, j2) = (i + di, j + dj);
                        if i2 < 0 || j2 < 0 || i2 >= nx || j2 >= ny {
                            continue;
                        }
                        if oracle[(j2 * nx + i2) as usize] != oracle[idx] {
                            near_boundary = true;
                            break 'scan;
                        }
                    }
                }
                if !near_boundary {
                    return false;
                }
            }
        }
        true
    }

    #[test]
    fn single_ball_is_closed() {
        let u = BallUnion::new(
            vec![Ball {
                center: [0.1, -0.2, 0.0],
                radius: 1.0,
            }],
            2,
        )
        .unwrap();
        let grid = VoxelGrid::covering(&u, 1.0, 96).unwrap();
        let mask = rolling_ball_close(&u, 0.5, &grid).unwrap();
        // The closing of a ball is the ball: cell-exact in 2-D.
        let centers = grid.centers();
        for (idx, &c) in centers.iter().enumerate() {
            let in_ball = dist_to_union(&u, c) == 0.0;
            assert_eq!(mask.inside[idx], in_ball, "cell {idx} at {c:?}");
        }
    }

    #[test]
    fn single_ball_closed_in_3d_within_one_cell() {
        let u = BallUnion::new(
            vec![Ball {
                center: [0.0, 0.0, 0.0],
                radius: 1.0,
            }],
            3,
        )
        .unwrap();
        let grid = VoxelGrid::covering(&u, 1.0, 48).unwrap();
        let mask = rolling_ball_close(&u, 0.4, &grid).unwrap();
        for (idx, &c) in grid.centers().iter().enumerate() {
            let d = dist_to_union(&u, c);
            if d == 0.0 {
                assert!(mask.inside[idx], "interior cell marked outside at {c:?}");
            } else if d > 1.5 * grid.spacing {
                assert!(!mask.inside[idx], "far cell marked inside at {c:?}");
            }
        }
    }

    #[test]
    fn thin_gap_is_closed_and_matches_oracle() {
        let u = two_balls(2.5, 1.0); // gap 0.5 between surfaces
        let grid = VoxelGrid::covering(&u, 1.5, 128).unwrap();
        let mask = rolling_ball_close(&u, 1.0, &grid).unwrap();
        // The inter-ball gap midpoint becomes interior.
        let mid = grid.locate([0.0, 0.0, 0.0]);
        assert!(mask.inside[mid]);
        let oracle = brute_force_close(&u, 1.0, &grid);
        assert!(boundary_discrepancy_ok(&mask.inside, &oracle, &grid, 2));
    }

    #[test]
    fn distant_balls_stay_separate() {
        let u = two_balls(10.0, 1.0);
        let grid = VoxelGrid::covering(&u, 1.0, 160).unwrap();
        let mask = rolling_ball_close(&u, 0.5, &grid).unwrap();
        let mid = grid.locate([0.0, 0.0, 0.0]);
        assert!(!mask.inside[mid]);
        let oracle = brute_force_close(&u, 0.5, &grid);
        assert!(boundary_discrepancy_ok(&mask.inside, &oracle, &grid, 2));
    }

    #[test]
    fn too_coarse_grid_is_resolution_error() {
        let u = two_balls(2.0, 1.0);
        let grid = VoxelGrid::covering(&u, 1.0, 8).unwrap();
        assert!(matches!(
            rolling_ball_close(&u, 0.2, &grid),
            Err(Error::Resolution(_))
        ));
    }

    #[test]
    fn region_map_rejects_bad_radii() {
        let u = two_balls(2.0, 1.0);
        let grid = VoxelGrid::covering(&u, 2.0, 64).unwrap();
        assert!(build_region_map(&u, 0.5, 0.5, &grid).is_err());
        assert!(build_region_map(&u, 0.5, 0.4, &grid).is_err());
    }

    #[test]
    fn region_map_partitions_and_contains_centers() {
        let u = two_balls(2.4, 1.0);
        let grid = VoxelGrid::covering(&u, 2.2, 128).unwrap();
        let map = build_region_map(&u, 0.4, 0.9, &grid).unwrap();
        if let RegionMap::Grid { ref tags, .. } = map {
            assert_eq!(tags.len(), grid.len()); // total: every cell has exactly one tag
        } else {
            panic!("expected grid map");
        }
        for b in &u.balls {
            assert_eq!(map.classify(b.center), RegionTag::Molecule);
        }
    }

    #[test]
    fn single_ball_region_areas_converge() {
        let u = BallUnion::new(
            vec![Ball {
                center: [0.0, 0.0, 0.0],
                radius: 1.0,
            }],
            2,
        )
        .unwrap();
        let r_p = 0.3;
        let r_i = 0.6;
        // Closing of one ball is the ball; IEL is the annulus R..R+r_I.
        let exact_mol = std::f64::consts::PI;
        let exact_iel = std::f64::consts::PI * ((1.0 + r_i) * (1.0 + r_i) - 1.0);
        let mut errs = Vec::new();
        for n in [64usize, 128, 256] {
            let grid = VoxelGrid::covering(&u, 1.0, n).unwrap();
            let map = build_region_map(&u, r_p, r_i, &grid).unwrap();
            let mol = map.region_measure(RegionTag::Molecule).unwrap();
            let iel = map.region_measure(RegionTag::Iel).unwrap();
            errs.push(((mol - exact_mol).abs(), (iel - exact_iel).abs()));
        }
        assert!(errs[2].0 < errs[0].0, "molecule area error not decreasing: {errs:?}");
        assert!(errs[2].1 < errs[0].1, "IEL area error not decreasing: {errs:?}");
        assert!(errs[2].0 < 0.05 && errs[2].1 < 0.08, "{errs:?}");
    }

    #[test]
    fn analytic_disk_classification() {
        let map = analytic_disk_regions(1.0, 2.0, 4.0).unwrap();
        assert_eq!(map.classify([0.0, 0.0, 0.0]), RegionTag::Molecule);
        assert_eq!(map.classify([1.5, 0.0, 0.0]), RegionTag::Iel);
        assert_eq!(map.classify([3.0, 0.0, 0.0]), RegionTag::Ions);
        assert!(analytic_disk_regions(2.0, 1.0, 4.0).is_err());
        assert!(analytic_disk_regions(1.0, 2.0, 1.5).is_err());
    }

    #[test]
    fn edt_matches_per_cell_scan() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let grid = VoxelGrid::new([0.0, 0.0, 0.0], 0.1, [40, 30, 1], 2).unwrap();
        let seeds: Vec<bool> = (0..grid.len()).map(|_| rng.gen_bool(0.07)).collect();
        let fast = grid_distance_to(&seeds, &grid);
        let centers = grid.centers();
        let seed_centers: Vec<[f64; 3]> = centers
            .iter()
            .zip(&seeds)
            .filter(|(_, &s)| s)
            .map(|(&c, _)| c)
            .collect();
        for (idx, &c) in centers.iter().enumerate() {
            let mut best = f64::INFINITY;
            for s in &seed_centers {
                let dx = c[0] - s[0];
                let dy = c[1] - s[1];
                best = best.min((dx * dx + dy * dy).sqrt());
            }
            if best.is_finite() {
                assert!((fast[idx] - best).abs() <= 1e-9, "cell {idx}");
            } else {
                assert!(fast[idx].is_infinite());
            }
        }
    }

    #[test]
    fn nesting_idempotence_monotonicity_random_configs() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for case in 0..6 {
            let n_balls = 2 + (case % 2);
            let balls: Vec<Ball> = (0..n_balls)
                .map(|_| Ball {
                    center: [rng.gen_range(-1.2..1.2), rng.gen_range(-1.2..1.2), 0.0],
                    radius: rng.gen_range(0.5..1.0),
                })
                .collect();
            let u = BallUnion::new(balls, 2).unwrap();
            let grid = VoxelGrid::covering(&u, 1.4, 128).unwrap();
            let r = 0.3;
            let r_big = 0.6;
            let closed = rolling_ball_close(&u, r, &grid).unwrap();
            let opened = rolling_ball_open(&u, r, &grid).unwrap();
            let closed_big = rolling_ball_close(&u, r_big, &grid).unwrap();
            let centers = grid.centers();
            for idx in 0..grid.len() {
                let in_union = dist_to_union(&u, centers[idx]) == 0.0;
                // nesting: opening <= union <= closing
                assert!(!opened.inside[idx] || in_union, "case {case}: opening escapes the set");
                assert!(!in_union || closed.inside[idx], "case {case}: closing lost a set cell");
                // monotonicity in probe radius
                assert!(
                    !closed.inside[idx] || closed_big.inside[idx],
                    "case {case}: closing not monotone in radius at cell {idx}"
                );
            }
            // idempotence of the mask-closing operator, cell-exact
            let raster = MaskGrid {
                grid: grid.clone(),
                inside: centers
                    .iter()
                    .map(|&c| dist_to_union(&u, c) == 0.0)
                    .collect(),
            };
            let once = close_mask(&raster, r).unwrap();
            let twice = close_mask(&once, r).unwrap();
            assert_eq!(twice.inside, once.inside, "case {case}: closing not idempotent");
        }
    }
}
