//! Line-oriented `key = value` configuration with `[section]` headers and
//! `#` comments. Unknown keys are errors, not warnings; every diagnostic
//! carries the line number. `echo()` emits the canonical form, and
//! `parse(echo(parse(c))) == parse(c)`.

use crate::error::{Error, Result};
use crate::model::{IonSpecies, UnitMode};
use crate::solver::{BcMode, NewtonParams, Splitting};

/// Top-level command; selected on the command line, not in the file.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Surface,
    Mesh,
    Solve,
    Verify,
    Convergence,
    Energy,
}

impl Command {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "surface" => Ok(Command::Surface),
            "mesh" => Ok(Command::Mesh),
            "solve" => Ok(Command::Solve),
            "verify" => Ok(Command::Verify),
            "convergence" => Ok(Command::Convergence),
            "energy" => Ok(Command::Energy),
            _ => Err(Error::InvalidInput(format!("unknown command '{s}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GeometryKind {
    Disk,
    Pqr,
}

/// Fully validated run configuration with defaults applied.
#[derive(Debug, Clone)]
pub struct RunConfig {
    // [geometry]
    pub geometry_kind: GeometryKind,
    pub r_m: f64,
    pub r_iel: f64,
    pub half_width: f64,
    pub resolution: usize,
    pub refinements: usize,
    pub pqr_path: Option<String>,
    pub probe_radius: f64,
    pub ion_radius: f64,
    pub grid_cells: usize,
    // [problem]
    pub unit_mode: UnitMode,
    pub eps_m: f64,
    pub eps_s: f64,
    pub eps_s_gx: f64,
    pub eps_s_gy: f64,
    pub temperature: f64,
    pub species: Vec<IonSpecies>,
    // [charges]
    pub charge_valence: f64,
    // [solver]
    pub splitting: Splitting,
    pub bc: BcMode,
    pub linearized: bool,
    pub newton: NewtonParams,
    // [study]
    pub case: String,
    pub levels: usize,
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            geometry_kind: GeometryKind::Disk,
            r_m: 0.5,
            r_iel: 1.0,
            half_width: 2.0,
            resolution: 16,
            refinements: 0,
            pqr_path: None,
            probe_radius: 1.4,
            ion_radius: 2.0,
            grid_cells: 96,
            unit_mode: UnitMode::Synthetic,
            eps_m: 2.0,
            eps_s: 80.0,
            eps_s_gx: 0.0,
            eps_s_gy: 0.0,
            temperature: 298.15,
            species: Vec::new(),
            charge_valence: 1.0,
            splitting: Splitting::TwoTerm,
            bc: BcMode::RestrictedG,
            linearized: false,
            newton: NewtonParams::default(),
            case: "linear_jump".to_string(),
            levels: 4,
            seed: 42,
        }
    }
}

fn parse_num<T: std::str::FromStr>(value: &str, line: usize, key: &str) -> Result<T> {
    value.parse::<T>().map_err(|_| Error::Parse {
        line,
        message: format!("value '{value}' for key '{key}' has the wrong type"),
    })
}

fn parse_list<T: std::str::FromStr>(value: &str, line: usize, key: &str) -> Result<Vec<T>> {
    value
        .split_whitespace()
        .map(|tok| parse_num::<T>(tok, line, key))
        .collect()
}

/// Parse and validate a configuration.
pub fn parse_config(text: &str) -> Result<RunConfig> {
    let mut cfg = RunConfig::default();
    let mut section = String::new();
    let mut concentrations: Vec<f64> = Vec::new();
    let mut valences: Vec<i32> = Vec::new();
    let mut bc_kappa = 0.0f64;
    let mut bc_name = String::from("restricted_g");

    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let t = raw.trim();
        if t.is_empty() || t.starts_with('#') {
            continue;
        }
        if t.starts_with('[') {
            if !t.ends_with(']') {
                return Err(Error::Parse {
                    line,
                    message: format!("malformed section header '{t}'"),
                });
            }
            section = t[1..t.len() - 1].trim().to_string();
            match section.as_str() {
                "geometry" | "problem" | "charges" | "solver" | "study" => continue,
                other => {
                    return Err(Error::Parse {
                        line,
                        message: format!("unknown section '[{other}]'"),
                    })
                }
            }
        }
        let (key, value) = match t.split_once('=') {
            Some((k, v)) => (k.trim(), v.trim()),
            None => {
                return Err(Error::Parse {
                    line,
                    message: format!("expected 'key = value', found '{t}'"),
                })
            }
        };
        let qualified = format!("{section}.{key}");
        match qualified.as_str() {
            "geometry.kind" => {
                cfg.geometry_kind = match value {
                    "disk" => GeometryKind::Disk,
                    "pqr" => GeometryKind::Pqr,
                    _ => {
                        return Err(Error::Parse {
                            line,
                            message: format!("geometry kind must be disk or pqr, got '{value}'"),
                        })
                    }
                }
            }
            "geometry.r_m" => cfg.r_m = parse_num(value, line, key)?,
            "geometry.r_iel" => cfg.r_iel = parse_num(value, line, key)?,
            "geometry.half_width" => cfg.half_width = parse_num(value, line, key)?,
            "geometry.resolution" => cfg.resolution = parse_num(value, line, key)?,
            "geometry.refinements" => cfg.refinements = parse_num(value, line, key)?,
            "geometry.pqr_path" => cfg.pqr_path = Some(value.to_string()),
            "geometry.probe_radius" => cfg.probe_radius = parse_num(value, line, key)?,
            "geometry.ion_radius" => cfg.ion_radius = parse_num(value, line, key)?,
            "geometry.grid_cells" => cfg.grid_cells = parse_num(value, line, key)?,
            "problem.unit_mode" => {
                cfg.unit_mode = match value {
                    "synthetic" => UnitMode::Synthetic,
                    "physical" => UnitMode::Physical,
                    _ => {
                        return Err(Error::Parse {
                            line,
                            message: format!("unit_mode must be synthetic or physical, got '{value}'"),
                        })
                    }
                }
            }
            "problem.eps_m" => cfg.eps_m = parse_num(value, line, key)?,
            "problem.eps_s" => cfg.eps_s = parse_num(value, line, key)?,
            "problem.eps_s_gx" => cfg.eps_s_gx = parse_num(value, line, key)?,
            "problem.eps_s_gy" => cfg.eps_s_gy = parse_num(value, line, key)?,
            "problem.temperature" => cfg.temperature = parse_num(value, line, key)?,
            "problem.species_concentrations" => {
                concentrations = parse_list(value, line, key)?;
            }
            "problem.species_valences" => {
                valences = parse_list(value, line, key)?;
            }
            "charges.valence" => cfg.charge_valence = parse_num(value, line, key)?,
            "solver.splitting" => {
                cfg.splitting = match value {
                    "two_term" => Splitting::TwoTerm,
                    "three_term" => Splitting::ThreeTerm,
                    _ => {
                        return Err(Error::Parse {
                            line,
                            message: format!("splitting must be two_term or three_term, got '{value}'"),
                        })
                    }
                }
            }
            "solver.bc" => {
                bc_name = value.to_string();
            }
            "solver.bc_kappa" => bc_kappa = parse_num(value, line, key)?,
            "solver.linearized" => cfg.linearized = parse_num(value, line, key)?,
            "solver.newton_tol" => cfg.newton.tol = parse_num(value, line, key)?,
            "solver.newton_max_iterations" => {
                cfg.newton.max_iterations = parse_num(value, line, key)?
            }
            "solver.armijo_c" => cfg.newton.armijo_c = parse_num(value, line, key)?,
            "solver.backtrack" => cfg.newton.backtrack = parse_num(value, line, key)?,
            "solver.cg_tol" => cfg.newton.cg_tol = parse_num(value, line, key)?,
            "study.case" => cfg.case = value.to_string(),
            "study.levels" => cfg.levels = parse_num(value, line, key)?,
            "study.seed" => cfg.seed = parse_num(value, line, key)?,
            _ => {
                return Err(Error::Parse {
                    line,
                    message: format!("unknown key '{key}' in section '[{section}]'"),
                })
            }
        }
    }

    if concentrations.len() != valences.len() {
        return Err(Error::InvalidInput(format!(
            "species_concentrations has {} entries, species_valences has {}",
            concentrations.len(),
            valences.len()
        )));
    }
    cfg.species = concentrations
        .iter()
        .zip(&valences)
        .map(|(&m, &xi)| IonSpecies::new(m, xi))
        .collect::<Result<Vec<_>>>()?;

    cfg.bc = match bc_name.as_str() {
        "zero" => BcMode::Zero,
        "restricted_g" => BcMode::RestrictedG,
        "screened" => BcMode::ScreenedCoulomb { kappa: bc_kappa },
        other => {
            return Err(Error::InvalidInput(format!(
                "bc must be zero, restricted_g or screened, got '{other}'"
            )))
        }
    };

    validate(&cfg)?;
    Ok(cfg)
}

fn validate(cfg: &RunConfig) -> Result<()> {
    if !(0.0 < cfg.r_m && cfg.r_m < cfg.r_iel && cfg.r_iel < cfg.half_width) {
        return Err(Error::InvalidInput(
            "geometry needs 0 < r_m < r_iel < half_width".into(),
        ));
    }
    if !(cfg.eps_m > 0.0 && cfg.eps_s > 0.0 && cfg.temperature > 0.0) {
        return Err(Error::InvalidInput(
            "permittivities and temperature must be positive".into(),
        ));
    }
    if cfg.resolution < 8 || cfg.resolution % 8 != 0 {
        return Err(Error::InvalidInput(
            "resolution must be a multiple of 8, at least 8".into(),
        ));
    }
    if cfg.levels == 0 || cfg.levels > 8 {
        return Err(Error::InvalidInput("levels must be between 1 and 8".into()));
    }
    if !(cfg.probe_radius > 0.0) || !(cfg.ion_radius > cfg.probe_radius) {
        return Err(Error::InvalidInput(
            "need probe_radius > 0 and ion_radius > probe_radius".into(),
        ));
    }
    if cfg.grid_cells < 8 || cfg.grid_cells > 512 {
        return Err(Error::InvalidInput("grid_cells must be in [8, 512]".into()));
    }
    CaseCheck::check(&cfg.case)?;
    Ok(())
}

struct CaseCheck;
impl CaseCheck {
    fn check(case: &str) -> Result<()> {
        crate::verify::CaseId::parse(case).map(|_| ())
    }
}

/// Canonical serialization; parsing the echo reproduces the config.
pub fn echo(cfg: &RunConfig) -> String {
    let mut s = String::new();
    s.push_str("# pbesolve configuration (canonical echo)\n");
    s.push_str("[geometry]\n");
    s.push_str(&format!(
        "kind = {}\n",
        match cfg.geometry_kind {
            GeometryKind::Disk => "disk",
            GeometryKind::Pqr => "pqr",
        }
    ));
    s.push_str(&format!("r_m = {:?}\n", cfg.r_m));
    s.push_str(&format!("r_iel = {:?}\n", cfg.r_iel));
    s.push_str(&format!("half_width = {:?}\n", cfg.half_width));
    s.push_str(&format!("resolution = {}\n", cfg.resolution));
    s.push_str(&format!("refinements = {}\n", cfg.refinements));
    if let Some(p) = &cfg.pqr_path {
        s.push_str(&format!("pqr_path = {p}\n"));
    }
    s.push_str(&format!("probe_radius = {:?}\n", cfg.probe_radius));
    s.push_str(&format!("ion_radius = {:?}\n", cfg.ion_radius));
    s.push_str(&format!("grid_cells = {}\n", cfg.grid_cells));
    s.push_str("[problem]\n");
    s.push_str(&format!(
        "unit_mode = {}\n",
        match cfg.unit_mode {
            UnitMode::Synthetic => "synthetic",
            UnitMode::Physical => "physical",
        }
    ));
    s.push_str(&format!("eps_m = {:?}\n", cfg.eps_m));
    s.push_str(&format!("eps_s = {:?}\n", cfg.eps_s));
    s.push_str(&format!("eps_s_gx = {:?}\n", cfg.eps_s_gx));
    s.push_str(&format!("eps_s_gy = {:?}\n", cfg.eps_s_gy));
    s.push_str(&format!("temperature = {:?}\n", cfg.temperature));
    let conc: Vec<String> = cfg
        .species
        .iter()
        .map(|sp| format!("{:?}", sp.concentration))
        .collect();
    let val: Vec<String> = cfg.species.iter().map(|sp| sp.valence.to_string()).collect();
    s.push_str(&format!("species_concentrations = {}\n", conc.join(" ")));
    s.push_str(&format!("species_valences = {}\n", val.join(" ")));
    s.push_str("[charges]\n");
    s.push_str(&format!("valence = {:?}\n", cfg.charge_valence));
    s.push_str("[solver]\n");
    s.push_str(&format!(
        "splitting = {}\n",
        match cfg.splitting {
            Splitting::TwoTerm => "two_term",
            Splitting::ThreeTerm => "three_term",
        }
    ));
    match cfg.bc {
        BcMode::Zero => s.push_str("bc = zero\n"),
        BcMode::RestrictedG => s.push_str("bc = restricted_g\n"),
        BcMode::ScreenedCoulomb { kappa } => {
            s.push_str("bc = screened\n");
            s.push_str(&format!("bc_kappa = {kappa:?}\n"));
        }
    }
    s.push_str(&format!("linearized = {}\n", cfg.linearized));
    s.push_str(&format!("newton_tol = {:?}\n", cfg.newton.tol));
    s.push_str(&format!(
        "newton_max_iterations = {}\n",
        cfg.newton.max_iterations
    ));
    s.push_str(&format!("armijo_c = {:?}\n", cfg.newton.armijo_c));
    s.push_str(&format!("backtrack = {:?}\n", cfg.newton.backtrack));
    s.push_str(&format!("cg_tol = {:?}\n", cfg.newton.cg_tol));
    s.push_str("[study]\n");
    s.push_str(&format!("case = {}\n", cfg.case));
    s.push_str(&format!("levels = {}\n", cfg.levels));
    s.push_str(&format!("seed = {}\n", cfg.seed));
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "\
[geometry]
r_m = 0.5
r_iel = 1.0
[problem]
species_concentrations = 1.0 1.0
species_valences = 1 -1
";

    #[test]
    fn minimal_config_fills_defaults_and_echo_roundtrips() {
        let cfg = parse_config(MINIMAL).unwrap();
        assert_eq!(cfg.species.len(), 2);
        assert_eq!(cfg.resolution, 16);
        assert_eq!(cfg.seed, 42);
        let echoed = echo(&cfg);
        let reparsed = parse_config(&echoed).unwrap();
        assert_eq!(echo(&reparsed), echoed);
    }

    #[test]
    fn misspelled_key_names_key_and_line() {
        let text = "[geometry]\nr_m = 0.5\nr_mel = 1.0\n";
        match parse_config(text) {
            Err(Error::Parse { line, message }) => {
                assert_eq!(line, 3);
                assert!(message.contains("r_mel"), "{message}");
            }
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn type_mismatch_reports_line() {
        let text = "[geometry]\nresolution = fast\n";
        match parse_config(text) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn species_length_mismatch_rejected() {
        let text = "[problem]\nspecies_concentrations = 1.0\nspecies_valences = 1 -1\n";
        assert!(parse_config(text).is_err());
    }

    #[test]
    fn out_of_range_values_rejected() {
        assert!(parse_config("[geometry]\nr_m = 2.0\nr_iel = 1.0\n").is_err());
        assert!(parse_config("[geometry]\nresolution = 12\n").is_err());
        assert!(parse_config("[study]\ncase = bogus\n").is_err());
    }
}
