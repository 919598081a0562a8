//! Closed-form Coulomb potential of the fixed charges in a uniform
//! dielectric, its gradient, and Dirichlet boundary-data generators.
//!
//! In 3-D the kernel is `1/r`, in 2-D the logarithm: with
//! `scale_G = e0^2 / (eps_m kB T)` (or 1 in synthetic units),
//! `G(x) = scale_G * sum_i z_i / |x - x_i|`      (d = 3),
//! `G(x) = -2 scale_G * sum_i z_i ln|x - x_i|`   (d = 2).
//! `G` is harmonic away from the charges, which the quadrature of the
//! splitting right-hand sides relies on.

use crate::error::{Error, Result};
use crate::model::{ChargeSystem, PbeProblem, UnitMode};

/// Relative singularity guard: evaluation closer than
/// `SINGULARITY_GUARD * domain_diameter` to a charge is an error.
pub const SINGULARITY_GUARD: f64 = 1e-12;

/// The Coulomb field of a charge system in uniform dielectric `eps_m`.
#[derive(Debug, Clone)]
pub struct CoulombField {
    pub charges: ChargeSystem,
    pub eps_m: f64,
    /// `e0^2 / (eps_m kB T)` in physical units, 1 in synthetic units.
    pub scale_g: f64,
    /// Diameter of the computational domain, fixing the singularity guard.
    pub domain_diameter: f64,
}

impl CoulombField {
    pub fn new(
        charges: ChargeSystem,
        eps_m: f64,
        scale_g: f64,
        domain_diameter: f64,
    ) -> Result<Self> {
        if !(scale_g > 0.0) {
            return Err(Error::InvalidInput(format!("scale_G must be positive, got {scale_g}")));
        }
        if !(domain_diameter > 0.0) {
            return Err(Error::InvalidInput("domain diameter must be positive".into()));
        }
        Ok(CoulombField {
            charges,
            eps_m,
            scale_g,
            domain_diameter,
        })
    }

    /// Field consistent with a problem's unit mode.
    pub fn for_problem(
        charges: ChargeSystem,
        problem: &PbeProblem,
        domain_diameter: f64,
    ) -> Result<Self> {
        let scale_g = match problem.unit_mode {
            UnitMode::Physical => {
                problem.constants.elementary_charge.powi(2)
                    / (problem.eps_m * problem.constants.boltzmann * problem.temperature)
            }
            UnitMode::Synthetic => 1.0,
        };
        CoulombField::new(charges, problem.eps_m, scale_g, domain_diameter)
    }

    pub fn dim(&self) -> usize {
        self.charges.dim
    }

    fn guard_distance(&self) -> f64 {
        SINGULARITY_GUARD * self.domain_diameter
    }

    fn check_distance(&self, x: [f64; 3]) -> Result<()> {
        let guard = self.guard_distance();
        for (i, c) in self.charges.charges.iter().enumerate() {
            if distance(x, c.position, self.charges.dim) < guard {
                return Err(Error::Singularity {
                    x: x[0],
                    y: x[1],
                    z: x[2],
                    charge: i,
                    guard,
                });
            }
        }
        Ok(())
    }

    /// Potential at `x`.
    pub fn eval_g(&self, x: [f64; 3]) -> Result<f64> {
        self.check_distance(x)?;
        let mut sum = 0.0;
        match self.charges.dim {
            3 => {
                for c in &self.charges.charges {
                    sum += c.valence / distance(x, c.position, 3);
                }
                Ok(self.scale_g * sum)
            }
            _ => {
                for c in &self.charges.charges {
                    sum += c.valence * distance(x, c.position, 2).ln();
                }
                Ok(-2.0 * self.scale_g * sum)
            }
        }
    }

    /// 2-D convenience wrapper.
    pub fn eval_g_2d(&self, x: [f64; 2]) -> Result<f64> {
        self.eval_g([x[0], x[1], 0.0])
    }

    /// Analytic gradient at `x`.
    pub fn eval_grad_g(&self, x: [f64; 3]) -> Result<[f64; 3]> {
        self.check_distance(x)?;
        let mut g = [0.0; 3];
        match self.charges.dim {
            3 => {
                for c in &self.charges.charges {
                    let r = distance(x, c.position, 3);
                    let f = -self.scale_g * c.valence / (r * r * r);
                    for k in 0..3 {
                        g[k] += f * (x[k] - c.position[k]);
                    }
                }
            }
            _ => {
                for c in &self.charges.charges {
                    let r2 = sq_distance(x, c.position, 2);
                    let f = -2.0 * self.scale_g * c.valence / r2;
                    for k in 0..2 {
                        g[k] += f * (x[k] - c.position[k]);
                    }
                }
            }
        }
        Ok(g)
    }

    /// 2-D gradient.
    pub fn eval_grad_g_2d(&self, x: [f64; 2]) -> Result<[f64; 2]> {
        let g = self.eval_grad_g([x[0], x[1], 0.0])?;
        Ok([g[0], g[1]])
    }
}

/// Dirichlet data for the full potential on the outer boundary.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BoundaryMode {
    /// `g = 0`.
    Zero,
    /// `g = G` restricted to the boundary, so the 2-term regular component
    /// has homogeneous data.
    RestrictedG,
    /// Screened Coulomb data (3-D only):
    /// `(scale_G eps_m / eps_s) sum_i z_i exp(-kappa |x - x_i|) / |x - x_i|`.
    ScreenedCoulomb { kappa: f64, eps_s: f64 },
}

/// Boundary value of the chosen mode at a boundary point `x`.
pub fn boundary_data(field: &CoulombField, mode: BoundaryMode, x: [f64; 3]) -> Result<f64> {
    match mode {
        BoundaryMode::Zero => Ok(0.0),
        BoundaryMode::RestrictedG => field.eval_g(x),
        BoundaryMode::ScreenedCoulomb { kappa, eps_s } => {
            if field.charges.dim != 3 {
                return Err(Error::UnsupportedMode(
                    "screened Coulomb boundary data needs d = 3 (the 2-D screened kernel is a Bessel function)"
                        .into(),
                ));
            }
            if !(eps_s > 0.0) || kappa < 0.0 {
                return Err(Error::InvalidInput(
                    "screened boundary data needs eps_s > 0 and kappa >= 0".into(),
                ));
            }
            let mut sum = 0.0;
            for c in &field.charges.charges {
                let r = distance(x, c.position, 3);
                sum += c.valence * (-kappa * r).exp() / r;
            }
            Ok(field.scale_g * field.eps_m / eps_s * sum)
        }
    }
}

fn sq_distance(a: [f64; 3], b: [f64; 3], dim: usize) -> f64 {
    let mut s = 0.0;
    for k in 0..dim {
        let d = a[k] - b[k];
        s += d * d;
    }
    s
}

fn distance(a: [f64; 3], b: [f64; 3], dim: usize) -> f64 {
    sq_distance(a, b, dim).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Charge;

    fn unit_charge_3d() -> CoulombField {
        let cs = ChargeSystem::new(
            vec![Charge {
                position: [0.0, 0.0, 0.0],
                valence: 1.0,
                radius: 1.0,
            }],
            3,
        )
        .unwrap();
        CoulombField::new(cs, 2.0, 1.0, 10.0).unwrap()
    }

    fn unit_charge_2d(scale: f64) -> CoulombField {
        CoulombField::new(ChargeSystem::single_2d(0.0, 0.0, 1.0), 2.0, scale, 10.0).unwrap()
    }

    #[test]
    fn three_d_kernel_is_one_over_r() {
        let f = unit_charge_3d();
        for &r in &[0.5, 1.0, 3.7] {
            let g = f.eval_g([r, 0.0, 0.0]).unwrap();
            assert!((g - f.scale_g / r).abs() <= 1e-15 * (1.0 + g.abs()));
        }
    }

    #[test]
    fn two_d_kernel_vanishes_on_unit_circle() {
        let f = unit_charge_2d(1.3);
        let g = f.eval_g_2d([0.6, 0.8]).unwrap();
        assert!(g.abs() <= 1e-14);
    }

    #[test]
    fn superposition_of_two_charges() {
        let c1 = Charge {
            position: [1.0, 0.0, 0.0],
            valence: 0.7,
            radius: 1.0,
        };
        let c2 = Charge {
            position: [-1.0, 0.5, 0.0],
            valence: -1.2,
            radius: 1.0,
        };
        let both =
            CoulombField::new(ChargeSystem::new(vec![c1, c2], 2).unwrap(), 2.0, 1.0, 10.0).unwrap();
        let only1 =
            CoulombField::new(ChargeSystem::new(vec![c1], 2).unwrap(), 2.0, 1.0, 10.0).unwrap();
        let only2 =
            CoulombField::new(ChargeSystem::new(vec![c2], 2).unwrap(), 2.0, 1.0, 10.0).unwrap();
        let x = [0.3, -0.9];
        let sum = only1.eval_g_2d(x).unwrap() + only2.eval_g_2d(x).unwrap();
        assert!((both.eval_g_2d(x).unwrap() - sum).abs() <= 1e-14);
    }

    #[test]
    fn radial_gradient_magnitude_3d() {
        let f = unit_charge_3d();
        let r = 2.0;
        let g = f.eval_grad_g([r, 0.0, 0.0]).unwrap();
        assert!((g[0] + f.scale_g / (r * r)).abs() <= 1e-15);
        assert_eq!(g[1], 0.0);
    }

    #[test]
    fn gradient_vanishes_at_midpoint_of_equal_charges() {
        let cs = ChargeSystem::new(
            vec![
                Charge {
                    position: [-1.0, 0.0, 0.0],
                    valence: 1.0,
                    radius: 1.0,
                },
                Charge {
                    position: [1.0, 0.0, 0.0],
                    valence: 1.0,
                    radius: 1.0,
                },
            ],
            2,
        )
        .unwrap();
        let f = CoulombField::new(cs, 2.0, 1.0, 10.0).unwrap();
        let g = f.eval_grad_g_2d([0.0, 0.0]).unwrap();
        assert!(g[0].abs() <= 1e-15 && g[1].abs() <= 1e-15);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let cs = ChargeSystem::new(
            vec![
                Charge {
                    position: [0.4, -0.2, 0.0],
                    valence: 1.5,
                    radius: 1.0,
                },
                Charge {
                    position: [-0.7, 0.9, 0.0],
                    valence: -0.4,
                    radius: 1.0,
                },
            ],
            2,
        )
        .unwrap();
        let f = CoulombField::new(cs, 2.0, 0.8, 10.0).unwrap();
        let points = [[1.3, 0.7], [-1.1, -0.55], [0.1, 1.9]];
        for x in points {
            let g = f.eval_grad_g_2d(x).unwrap();
            let scale = (g[0] * g[0] + g[1] * g[1]).sqrt().max(1e-8);
            let h = 1e-6;
            for k in 0..2 {
                let mut xp = x;
                let mut xm = x;
                xp[k] += h;
                xm[k] -= h;
                let fd =
                    (f.eval_g_2d(xp).unwrap() - f.eval_g_2d(xm).unwrap()) / (2.0 * h);
                assert!(
                    (g[k] - fd).abs() / scale <= 1e-6,
                    "component {k} at {x:?}: {g:?} vs fd {fd}"
                );
            }
        }
    }

    #[test]
    fn evaluation_at_charge_is_singularity_error() {
        let f = unit_charge_3d();
        assert!(matches!(
            f.eval_g([0.0, 0.0, 0.0]),
            Err(Error::Singularity { .. })
        ));
    }

    #[test]
    fn boundary_modes() {
        let f = unit_charge_3d();
        let x = [3.0, 0.0, 0.0];
        assert_eq!(boundary_data(&f, BoundaryMode::Zero, x).unwrap(), 0.0);
        assert_eq!(
            boundary_data(&f, BoundaryMode::RestrictedG, x).unwrap(),
            f.eval_g(x).unwrap()
        );
        // Degenerate screening equals plain G.
        let s = boundary_data(
            &f,
            BoundaryMode::ScreenedCoulomb {
                kappa: 0.0,
                eps_s: f.eps_m,
            },
            x,
        )
        .unwrap();
        assert!((s - f.eval_g(x).unwrap()).abs() <= 1e-15);
    }

    #[test]
    fn screened_mode_rejected_in_2d() {
        let f = unit_charge_2d(1.0);
        let got = boundary_data(
            &f,
            BoundaryMode::ScreenedCoulomb {
                kappa: 1.0,
                eps_s: 80.0,
            },
            [3.0, 0.0, 0.0],
        );
        assert!(matches!(got, Err(Error::UnsupportedMode(_))));
    }

    /// Five-point (2-D) and seven-point (3-D) discrete Laplacians of G decay
    /// at second order under grid refinement away from the charges.
    #[test]
    fn discrete_harmonicity_second_order() {
        let f2 = unit_charge_2d(1.0);
        let lap2 = |x: [f64; 2], h: f64| -> f64 {
            let c = f2.eval_g_2d(x).unwrap();
            let xp = f2.eval_g_2d([x[0] + h, x[1]]).unwrap();
            let xm = f2.eval_g_2d([x[0] - h, x[1]]).unwrap();
            let yp = f2.eval_g_2d([x[0], x[1] + h]).unwrap();
            let ym = f2.eval_g_2d([x[0], x[1] - h]).unwrap();
            (xp + xm + yp + ym - 4.0 * c) / (h * h)
        };
        let x = [0.35, 0.21];
        let mut prev = f64::INFINITY;
        for &h in &[0.02, 0.01, 0.005] {
            let e = lap2(x, h).abs();
            assert!(e < prev, "no decay at h = {h}");
            if prev.is_finite() {
                let ratio = prev / e;
                assert!(ratio > 3.0 && ratio < 5.0, "2-D ratio {ratio} not near 4");
            }
            prev = e;
        }

        let f3 = unit_charge_3d();
        let lap3 = |x: [f64; 3], h: f64| -> f64 {
            let mut acc = -6.0 * f3.eval_g(x).unwrap();
            for k in 0..3 {
                let mut xp = x;
                let mut xm = x;
                xp[k] += h;
                xm[k] -= h;
                acc += f3.eval_g(xp).unwrap() + f3.eval_g(xm).unwrap();
            }
            acc / (h * h)
        };
        let x3 = [0.3, 0.25, 0.2];
        let mut prev = f64::INFINITY;
        for &h in &[0.02, 0.01, 0.005] {
            let e = lap3(x3, h).abs();
            if prev.is_finite() {
                let ratio = prev / e;
                assert!(ratio > 3.0 && ratio < 5.0, "3-D ratio {ratio} not near 4");
            }
            prev = e;
        }
    }
}
