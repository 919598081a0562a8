//! Physical model: ion species, the Boltzmann nonlinearity and its
//! antiderivative, linearization coefficients, region semantics.
//!
//! Everything is expressed for the dimensionless potential `phi = e0 phi_hat / (kB T)`.
//! In `Physical` unit mode the CGS prefactor `4 pi e0^2 / (kB T)` multiplies the
//! ionic terms; `Synthetic` mode pins that prefactor to 1 so manufactured
//! problems carry clean numbers.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Exponent guard for `exp`: beyond this the double format overflows.
pub const EXP_GUARD: f64 = 700.0;

/// CGS physical constants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhysicalConstants {
    /// Avogadro's number, 1/mol.
    pub avogadro: f64,
    /// Elementary charge, esu (statcoulomb).
    pub elementary_charge: f64,
    /// Boltzmann's constant, erg/K.
    pub boltzmann: f64,
}

impl Default for PhysicalConstants {
    fn default() -> Self {
        PhysicalConstants {
            avogadro: 6.022_140_857e23,
            elementary_charge: 4.803_242_4e-10,
            boltzmann: 1.380_648_52e-16,
        }
    }
}

impl PhysicalConstants {
    pub fn validate(&self) -> Result<()> {
        if self.avogadro > 0.0 && self.elementary_charge > 0.0 && self.boltzmann > 0.0 {
            Ok(())
        } else {
            Err(Error::InvalidInput(
                "physical constants must be strictly positive".into(),
            ))
        }
    }
}

/// One mobile ion species: bulk concentration in ions/cm^3 and integer valence.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IonSpecies {
    pub concentration: f64,
    pub valence: i32,
}

impl IonSpecies {
    pub fn new(concentration: f64, valence: i32) -> Result<Self> {
        if !(concentration >= 0.0) {
            return Err(Error::InvalidInput(format!(
                "ion concentration must be nonnegative, got {concentration}"
            )));
        }
        if valence == 0 {
            return Err(Error::InvalidInput("ion valence must be nonzero".into()));
        }
        Ok(IonSpecies {
            concentration,
            valence,
        })
    }
}

/// Subdomain classification. `Molecule` holds the fixed charges, `Iel` is the
/// ion exclusion layer, and only `Ions` carries mobile charge.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RegionTag {
    Molecule,
    Iel,
    Ions,
}

impl RegionTag {
    /// Stable integer code used in mesh files and VTK cell data.
    pub fn code(self) -> i32 {
        match self {
            RegionTag::Molecule => 0,
            RegionTag::Iel => 1,
            RegionTag::Ions => 2,
        }
    }

    pub fn from_code(code: i32) -> Result<Self> {
        match code {
            0 => Ok(RegionTag::Molecule),
            1 => Ok(RegionTag::Iel),
            2 => Ok(RegionTag::Ions),
            _ => Err(Error::InvalidInput(format!("unknown region code {code}"))),
        }
    }
}

/// A fixed partial charge: position, valence (in units of e0), van der Waals radius.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Charge {
    pub position: [f64; 3],
    pub valence: f64,
    pub radius: f64,
}

/// The fixed partial charges of the solute. For `dim == 2` the third
/// coordinate is zero and ignored by distance computations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChargeSystem {
    pub charges: Vec<Charge>,
    pub dim: usize,
}

impl ChargeSystem {
    pub fn new(charges: Vec<Charge>, dim: usize) -> Result<Self> {
        if dim != 2 && dim != 3 {
            return Err(Error::InvalidInput(format!("dimension must be 2 or 3, got {dim}")));
        }
        if charges.is_empty() {
            return Err(Error::EmptyInput("charge system needs at least one charge".into()));
        }
        for c in &charges {
            if c.radius < 0.0 {
                return Err(Error::InvalidInput("charge radius must be nonnegative".into()));
            }
            if dim == 2 && c.position[2] != 0.0 {
                return Err(Error::InvalidInput(
                    "2-D charge system with nonzero third coordinate".into(),
                ));
            }
        }
        for i in 0..charges.len() {
            for j in (i + 1)..charges.len() {
                if charges[i].position == charges[j].position {
                    return Err(Error::InvalidInput(format!(
                        "charges {i} and {j} share the same position"
                    )));
                }
            }
        }
        Ok(ChargeSystem { charges, dim })
    }

    /// Single 2-D charge of valence `z` at `(x, y)` with zero radius.
    pub fn single_2d(x: f64, y: f64, z: f64) -> Self {
        ChargeSystem {
            charges: vec![Charge {
                position: [x, y, 0.0],
                valence: z,
                radius: 0.0,
            }],
            dim: 2,
        }
    }
}

/// Solvent permittivity on the non-molecular region: constant or affine in x.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Permittivity {
    Constant(f64),
    /// `c0 + gx*x + gy*y`; the caller is responsible for positivity on the domain.
    Affine { c0: f64, gx: f64, gy: f64 },
}

impl Permittivity {
    pub fn eval(&self, x: [f64; 2]) -> f64 {
        match *self {
            Permittivity::Constant(v) => v,
            Permittivity::Affine { c0, gx, gy } => c0 + gx * x[0] + gy * x[1],
        }
    }
}

/// Unit handling: `Physical` uses the CGS constants verbatim, `Synthetic`
/// pins the ionic prefactor and the Coulomb prefactor to 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum UnitMode {
    Physical,
    Synthetic,
}

/// The continuous model: permittivities, temperature, ion species and the
/// derived ionic prefactor `scale = 4 pi e0^2 / (kB T)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PbeProblem {
    pub eps_m: f64,
    pub eps_s: Permittivity,
    pub temperature: f64,
    pub species: Vec<IonSpecies>,
    pub constants: PhysicalConstants,
    pub unit_mode: UnitMode,
    /// `4 pi e0^2 / (kB T)` in physical mode, exactly 1 in synthetic mode.
    pub scale: f64,
}

impl PbeProblem {
    pub fn new(
        eps_m: f64,
        eps_s: Permittivity,
        temperature: f64,
        species: Vec<IonSpecies>,
        constants: PhysicalConstants,
        unit_mode: UnitMode,
    ) -> Result<Self> {
        constants.validate()?;
        if !(eps_m > 0.0) {
            return Err(Error::InvalidInput(format!("eps_m must be positive, got {eps_m}")));
        }
        if let Permittivity::Constant(v) = eps_s {
            if !(v > 0.0) {
                return Err(Error::InvalidInput(format!("eps_s must be positive, got {v}")));
            }
        }
        if !(temperature > 0.0) {
            return Err(Error::InvalidInput(format!(
                "temperature must be positive, got {temperature}"
            )));
        }
        let scale = match unit_mode {
            UnitMode::Physical => {
                4.0 * std::f64::consts::PI * constants.elementary_charge.powi(2)
                    / (constants.boltzmann * temperature)
            }
            UnitMode::Synthetic => 1.0,
        };
        if !(scale > 0.0) {
            return Err(Error::InvalidInput("derived scale must be positive".into()));
        }
        Ok(PbeProblem {
            eps_m,
            eps_s,
            temperature,
            species,
            constants,
            unit_mode,
            scale,
        })
    }

    /// Synthetic-unit problem with documented default permittivities 2/80.
    pub fn synthetic(species: Vec<IonSpecies>) -> Self {
        PbeProblem::new(
            2.0,
            Permittivity::Constant(80.0),
            298.15,
            species,
            PhysicalConstants::default(),
            UnitMode::Synthetic,
        )
        .expect("default synthetic problem is valid")
    }

    /// Permittivity on a given region at a point.
    pub fn eps(&self, region: RegionTag, x: [f64; 2]) -> f64 {
        match region {
            RegionTag::Molecule => self.eps_m,
            _ => self.eps_s.eval(x),
        }
    }

    /// Smallest permittivity value seen by the bilinear form; used as the
    /// ellipticity constant in the boundedness diagnostics. For affine
    /// eps_s the caller supplies sample points through `eps`.
    pub fn eps_min_constant(&self) -> f64 {
        match self.eps_s {
            Permittivity::Constant(v) => self.eps_m.min(v),
            Permittivity::Affine { .. } => self.eps_m,
        }
    }

    fn guard(&self, region: RegionTag, t: f64) -> Result<()> {
        if region != RegionTag::Ions {
            return Ok(());
        }
        if !t.is_finite() {
            return Err(Error::InvalidInput(format!("nonfinite potential argument {t}")));
        }
        for (j, sp) in self.species.iter().enumerate() {
            let exponent = f64::from(sp.valence) * t;
            if exponent.abs() > EXP_GUARD {
                return Err(Error::OverflowGuard {
                    species: j,
                    valence: sp.valence,
                    t,
                    exponent,
                });
            }
        }
        Ok(())
    }
}

/// The Boltzmann nonlinearity
/// `b(x, t) = -scale * sum_j M_j xi_j exp(-xi_j t)` on the ionic region,
/// identically zero on the molecular region and the ion exclusion layer.
pub fn eval_b(problem: &PbeProblem, region: RegionTag, t: f64) -> Result<f64> {
    if region != RegionTag::Ions {
        return Ok(0.0);
    }
    problem.guard(region, t)?;
    let mut sum = 0.0;
    for sp in &problem.species {
        let xi = f64::from(sp.valence);
        sum += sp.concentration * xi * (-xi * t).exp();
    }
    Ok(-problem.scale * sum)
}

/// `d/dt b(x, t) = scale * sum_j M_j xi_j^2 exp(-xi_j t) >= 0`.
pub fn eval_b_prime(problem: &PbeProblem, region: RegionTag, t: f64) -> Result<f64> {
    if region != RegionTag::Ions {
        return Ok(0.0);
    }
    problem.guard(region, t)?;
    let mut sum = 0.0;
    for sp in &problem.species {
        let xi = f64::from(sp.valence);
        sum += sp.concentration * xi * xi * (-xi * t).exp();
    }
    Ok(problem.scale * sum)
}

/// Antiderivative `B(x, t) = scale * sum_j M_j exp(-xi_j t) >= 0` with
/// `dB/dt = b`; zero off the ionic region.
pub fn eval_big_b(problem: &PbeProblem, region: RegionTag, t: f64) -> Result<f64> {
    if region != RegionTag::Ions {
        return Ok(0.0);
    }
    problem.guard(region, t)?;
    let mut sum = 0.0;
    for sp in &problem.species {
        let xi = f64::from(sp.valence);
        sum += sp.concentration * (-xi * t).exp();
    }
    Ok(problem.scale * sum)
}

/// Coefficients of the linearized equation on a region:
/// `m_bar_sq = scale * sum_j M_j xi_j^2` and `ell = scale * sum_j M_j xi_j`
/// on the ionic region, `(0, 0)` elsewhere.
///
/// The ionic prefactor is included so that the linearized equation is the
/// exact Maclaurin linearization of the nonlinear one and `m_bar_sq`
/// coincides with the Debye coefficient for symmetric 1:1 electrolytes.
pub fn linearized_coefficients(problem: &PbeProblem, region: RegionTag) -> (f64, f64) {
    if region != RegionTag::Ions {
        return (0.0, 0.0);
    }
    let mut m2 = 0.0;
    let mut ell = 0.0;
    for sp in &problem.species {
        let xi = f64::from(sp.valence);
        m2 += sp.concentration * xi * xi;
        ell += sp.concentration * xi;
    }
    (problem.scale * m2, problem.scale * ell)
}

/// Debye coefficient `k_bar^2 = 8 pi N_A e0^2 I_s / (1000 kB T)` from the
/// ionic strength `I_s` in mol/L.
pub fn kappa_sq_from_ionic_strength(constants: &PhysicalConstants, i_s: f64, t: f64) -> f64 {
    8.0 * std::f64::consts::PI * constants.avogadro * constants.elementary_charge.powi(2) * i_s
        / (1000.0 * constants.boltzmann * t)
}

/// `sum_j M_j xi_j`; zero exactly when the solvent is electroneutral.
pub fn charge_neutrality_defect(species: &[IonSpecies]) -> f64 {
    species
        .iter()
        .map(|sp| sp.concentration * f64::from(sp.valence))
        .sum()
}

/// Two species with opposite unit valences and equal concentration `m`:
/// the classical sinh nonlinearity.
pub fn symmetric_1_1(m: f64) -> Vec<IonSpecies> {
    vec![
        IonSpecies::new(m, 1).unwrap(),
        IonSpecies::new(m, -1).unwrap(),
    ]
}
