//! Command orchestration: each command reads the validated configuration,
//! runs the pipeline and writes its artifacts into the output directory.

use super::config::{echo, Command, RunConfig};
use super::output;
use crate::coulomb::CoulombField;
use crate::error::{Error, Result};
use crate::geometry::{
    build_region_map, ingest_pqr, min_surface_gap, BallUnion, RegionMap, VoxelGrid,
};
use crate::mesh::{generate_disk_mesh, refine_uniform, save_mesh, Mesh};
use crate::model::{
    eval_b, eval_b_prime, eval_big_b, ChargeSystem, PbeProblem, Permittivity, RegionTag,
};
use crate::solver::{
    reconstruct_phi, solvation_energy, solve_gpbe_regular, solve_lgpbe, SplitSolution,
};
use crate::verify::{
    apriori_bound, conservative_constants, extinction_check, manufactured_case, CaseId, DataNorms,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::path::{Path, PathBuf};
use std::sync::Arc;

fn problem_from(cfg: &RunConfig) -> Result<PbeProblem> {
    let eps_s = if cfg.eps_s_gx == 0.0 && cfg.eps_s_gy == 0.0 {
        Permittivity::Constant(cfg.eps_s)
    } else {
        Permittivity::Affine {
            c0: cfg.eps_s,
            gx: cfg.eps_s_gx,
            gy: cfg.eps_s_gy,
        }
    };
    PbeProblem::new(
        cfg.eps_m,
        eps_s,
        cfg.temperature,
        cfg.species.clone(),
        crate::model::PhysicalConstants::default(),
        cfg.unit_mode,
    )
}

fn disk_mesh_from(cfg: &RunConfig) -> Result<Arc<Mesh>> {
    let mut mesh = generate_disk_mesh(cfg.r_m, cfg.r_iel, cfg.half_width, cfg.resolution)?;
    for _ in 0..cfg.refinements {
        mesh = refine_uniform(&mesh)?;
    }
    Ok(Arc::new(mesh))
}

fn mesh_family_from(cfg: &RunConfig, levels: usize) -> Result<Vec<Arc<Mesh>>> {
    let mut meshes = vec![Arc::new(generate_disk_mesh(
        cfg.r_m,
        cfg.r_iel,
        cfg.half_width,
        cfg.resolution,
    )?)];
    for _ in 1..levels {
        meshes.push(Arc::new(refine_uniform(meshes.last().unwrap())?));
    }
    Ok(meshes)
}

fn field_from(cfg: &RunConfig, problem: &PbeProblem, mesh: &Mesh) -> Result<CoulombField> {
    let charges = ChargeSystem::single_2d(0.0, 0.0, cfg.charge_valence);
    CoulombField::for_problem(charges, problem, mesh.diameter())
}

fn out_path(out: &Path, name: &str) -> PathBuf {
    out.join(name)
}

fn solve_regular(
    cfg: &RunConfig,
    problem: &PbeProblem,
    mesh: &Arc<Mesh>,
    field: &CoulombField,
) -> Result<SplitSolution> {
    crate::solver::check_charges(mesh, &field.charges)?;
    if cfg.linearized {
        solve_lgpbe(problem, mesh, field, cfg.splitting, cfg.bc)
    } else {
        solve_gpbe_regular(problem, mesh, field, cfg.splitting, cfg.bc, &cfg.newton, None)
    }
}

/// Run one command; artifacts land in `out`. Returns the process exit code
/// contract through `Result`: input problems map to exit 1, numerical
/// failures to exit 2 (see `Error::exit_code`).
pub fn run(command: Command, cfg: &RunConfig, out: &Path) -> Result<()> {
    std::fs::create_dir_all(out).map_err(|e| Error::Io {
        path: out.display().to_string(),
        source: e,
    })?;
    // Every run echoes the exact configuration it used.
    output::emit(&out_path(out, "config_echo.cfg"), &echo(cfg))?;
    match command {
        Command::Mesh => run_mesh(cfg, out),
        Command::Surface => run_surface(cfg, out),
        Command::Solve => run_solve(cfg, out),
        Command::Energy => run_energy(cfg, out),
        Command::Convergence => run_convergence(cfg, out),
        Command::Verify => run_verify(cfg, out),
    }
}

fn run_mesh(cfg: &RunConfig, out: &Path) -> Result<()> {
    let mesh = disk_mesh_from(cfg)?;
    output::emit(&out_path(out, "mesh.txt"), &save_mesh(&mesh))?;
    println!(
        "mesh: {} nodes, {} triangles, h = {:.6e}",
        mesh.n_nodes(),
        mesh.n_triangles(),
        mesh.max_edge_length()
    );
    Ok(())
}

fn run_surface(cfg: &RunConfig, out: &Path) -> Result<()> {
    let path = cfg.pqr_path.as_ref().ok_or_else(|| {
        Error::InvalidInput("surface command needs geometry.pqr_path".into())
    })?;
    let file = std::fs::File::open(path).map_err(|e| Error::Io {
        path: path.clone(),
        source: e,
    })?;
    let charges = ingest_pqr(std::io::BufReader::new(file))?;
    let union = BallUnion::from_charges(&charges, 1.0)?;
    if let Some(gap) = min_surface_gap(&union) {
        println!(
            "min surface gap {:.6e} (passages thinner than {:.6e} kink the closed surface)",
            gap,
            2.0 * cfg.probe_radius
        );
    }
    let grid = VoxelGrid::covering(&union, cfg.ion_radius + cfg.probe_radius, cfg.grid_cells)?;
    let map = build_region_map(&union, cfg.probe_radius, cfg.ion_radius, &grid)?;
    let RegionMap::Grid { grid, tags } = &map else {
        return Err(Error::InvalidInput("expected grid-backed region map".into()));
    };
    let codes: Vec<i32> = tags.iter().map(|t| t.code()).collect();
    output::emit(
        &out_path(out, "regions.vtk"),
        &output::vtk_structured_points(grid, "region", &codes)?,
    )?;
    let molecule: Vec<i32> = tags
        .iter()
        .map(|&t| i32::from(t == RegionTag::Molecule))
        .collect();
    output::emit(
        &out_path(out, "molecule_mask.vtk"),
        &output::vtk_structured_points(grid, "molecule", &molecule)?,
    )?;
    println!(
        "surface: {} atoms, grid {:?}, molecule cells {}",
        charges.charges.len(),
        grid.extents,
        molecule.iter().filter(|&&v| v == 1).count()
    );
    Ok(())
}

fn run_solve(cfg: &RunConfig, out: &Path) -> Result<()> {
    let problem = problem_from(cfg)?;
    let mesh = disk_mesh_from(cfg)?;
    let field = field_from(cfg, &problem, &mesh)?;
    let solution = solve_regular(cfg, &problem, &mesh, &field)?;
    if !solution.report.converged {
        output::emit(
            &out_path(out, "report.jsonl"),
            &output::report_jsonl(&solution.report)?,
        )?;
        return Err(Error::Nonconvergence {
            iterations: solution.report.newton_iterations,
            residual: solution.report.final_residual,
            tol: solution.report.params.tol,
        });
    }
    let phi = reconstruct_phi(&solution, &field)?;
    let mut fields: Vec<(&str, &[f64])> =
        vec![("u", &solution.u.values), ("phi", &phi.nodal)];
    if let Some(uh) = &solution.u_harmonic {
        fields.push(("u_harmonic", &uh.values));
    }
    output::emit(&out_path(out, "u.vtk"), &output::vtk_unstructured(&mesh, &fields[..1])?)?;
    output::emit(
        &out_path(out, "phi.vtk"),
        &output::vtk_unstructured(&mesh, &fields[1..2])?,
    )?;
    if solution.u_harmonic.is_some() {
        output::emit(
            &out_path(out, "u_harmonic.vtk"),
            &output::vtk_unstructured(&mesh, &fields[2..3])?,
        )?;
    }
    output::emit(
        &out_path(out, "report.jsonl"),
        &output::report_jsonl(&solution.report)?,
    )?;
    let curve = crate::verify::theta_curve_of_field(&solution.u, 64)?;
    let theta_rows: Vec<Vec<String>> = curve
        .iter()
        .map(|&(k, m)| vec![format!("{k:?}"), format!("{m:?}")])
        .collect();
    output::emit(
        &out_path(out, "theta.csv"),
        &output::csv_table(&["level", "measure"], &theta_rows),
    )?;
    println!(
        "solve: converged in {} Newton iterations, residual {:.3e}, b_max {:.3e}, {:.1} ms",
        solution.report.newton_iterations,
        solution.report.final_residual,
        solution.report.b_max,
        solution.report.wall_time_s * 1e3
    );
    Ok(())
}

fn run_energy(cfg: &RunConfig, out: &Path) -> Result<()> {
    let problem = problem_from(cfg)?;
    let mesh = disk_mesh_from(cfg)?;
    let field = field_from(cfg, &problem, &mesh)?;
    let mut cfg2 = cfg.clone();
    cfg2.splitting = crate::solver::Splitting::TwoTerm; // reaction field needs the 2-term split
    let solution = solve_regular(&cfg2, &problem, &mesh, &field)?;
    if !solution.report.converged {
        return Err(Error::Nonconvergence {
            iterations: solution.report.newton_iterations,
            residual: solution.report.final_residual,
            tol: solution.report.params.tol,
        });
    }
    let energy = solvation_energy(&solution, &field.charges, &problem)?;
    let rows = vec![vec![
        format!("{:?}", energy.dimensionless),
        format!("{:?}", energy.erg),
        match cfg.unit_mode {
            crate::model::UnitMode::Synthetic => "synthetic".to_string(),
            crate::model::UnitMode::Physical => "physical".to_string(),
        },
        format!("{:?}", problem.constants.avogadro),
        format!("{:?}", problem.constants.elementary_charge),
        format!("{:?}", problem.constants.boltzmann),
        format!("{:?}", problem.temperature),
    ]];
    output::emit(
        &out_path(out, "energy.csv"),
        &output::csv_table(
            &[
                "dimensionless",
                "erg",
                "unit_mode",
                "avogadro",
                "elementary_charge",
                "boltzmann",
                "temperature",
            ],
            &rows,
        ),
    )?;
    println!(
        "solvation energy: {:?} (dimensionless), {:?} erg",
        energy.dimensionless, energy.erg
    );
    Ok(())
}

fn run_convergence(cfg: &RunConfig, out: &Path) -> Result<()> {
    let case = manufactured_case(CaseId::parse(&cfg.case)?);
    let meshes = mesh_family_from(cfg, cfg.levels)?;
    let table = crate::verify::convergence_study(&case, &meshes, &cfg.newton);
    output::emit(&out_path(out, "convergence.csv"), &table.to_csv())?;
    match (&table.aborted, table.slope_l2, table.slope_h1) {
        (Some(msg), _, _) => {
            println!("convergence study aborted: {msg}");
            return Err(Error::Nonconvergence {
                iterations: cfg.newton.max_iterations,
                residual: f64::NAN,
                tol: cfg.newton.tol,
            });
        }
        (None, Some(l2), Some(h1)) => {
            println!("convergence: {} rows, slopes L2 {l2:.3}, H1 {h1:.3}", table.rows.len())
        }
        _ => println!("convergence: errors at round-off floor (saturated)"),
    }
    Ok(())
}

/// The condensed invariant suite behind `pbesolve verify`.
fn run_verify(cfg: &RunConfig, out: &Path) -> Result<()> {
    let mut rows: Vec<Vec<String>> = Vec::new();
    let mut all_pass = true;
    let mut check = |name: &str, pass: bool, detail: String, rows: &mut Vec<Vec<String>>| {
        rows.push(vec![
            name.to_string(),
            if pass { "pass" } else { "fail" }.to_string(),
            detail,
        ]);
        all_pass &= pass;
    };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    // monotone nonlinearity and calculus consistency
    {
        let problem = PbeProblem::synthetic(vec![
            crate::model::IonSpecies::new(0.8, 2).unwrap(),
            crate::model::IonSpecies::new(1.3, -1).unwrap(),
        ]);
        let mut worst_mono = 0.0f64;
        let mut worst_fd = 0.0f64;
        for _ in 0..10_000 {
            let t1 = rng.gen_range(-10.0..10.0);
            let t2 = rng.gen_range(-10.0..10.0);
            let b1 = eval_b(&problem, RegionTag::Ions, t1)?;
            let b2 = eval_b(&problem, RegionTag::Ions, t2)?;
            worst_mono = worst_mono.min((b1 - b2) * (t1 - t2));
            let h = 1e-6 * (1.0 + t1.abs());
            let db = (eval_big_b(&problem, RegionTag::Ions, t1 + h)?
                - eval_big_b(&problem, RegionTag::Ions, t1 - h)?)
                / (2.0 * h);
            let rel = (db - b1).abs() / b1.abs().max(1.0);
            worst_fd = worst_fd.max(rel);
            let bp = eval_b_prime(&problem, RegionTag::Ions, t1)?;
            if bp < 0.0 {
                worst_mono = -1.0;
            }
        }
        check(
            "nonlinearity_monotone",
            worst_mono >= 0.0,
            format!("min (b1-b2)(t1-t2) = {worst_mono:.3e}"),
            &mut rows,
        );
        check(
            "nonlinearity_calculus",
            worst_fd <= 1e-5,
            format!("max rel FD error {worst_fd:.3e}"),
            &mut rows,
        );
    }

    // Coulomb gradient and harmonicity
    {
        let problem = PbeProblem::synthetic(vec![]);
        let field = field_from(cfg, &problem, &generate_disk_mesh(0.5, 1.0, 2.0, 8)?)?;
        let x = [1.3, 0.8];
        let g = field.eval_grad_g_2d(x)?;
        let h = 1e-6;
        let fdx = (field.eval_g_2d([x[0] + h, x[1]])? - field.eval_g_2d([x[0] - h, x[1]])?)
            / (2.0 * h);
        let rel = (g[0] - fdx).abs() / (g[0] * g[0] + g[1] * g[1]).sqrt().max(1e-8);
        check(
            "coulomb_gradient",
            rel <= 1e-6,
            format!("rel FD gap {rel:.3e}"),
            &mut rows,
        );
        let lap = |step: f64| -> Result<f64> {
            let c = field.eval_g_2d(x)?;
            Ok(
                (field.eval_g_2d([x[0] + step, x[1]])? + field.eval_g_2d([x[0] - step, x[1]])?
                    + field.eval_g_2d([x[0], x[1] + step])?
                    + field.eval_g_2d([x[0], x[1] - step])?
                    - 4.0 * c)
                    / (step * step),
            )
        };
        let ratio = lap(0.02)?.abs() / lap(0.01)?.abs().max(1e-300);
        check(
            "coulomb_harmonic_order2",
            ratio > 3.0 && ratio < 5.0,
            format!("Laplacian decay ratio {ratio:.2}"),
            &mut rows,
        );
    }

    // geometry nesting and idempotence on a random two-ball configuration
    {
        let u = BallUnion::new(
            vec![
                crate::geometry::Ball {
                    center: [rng.gen_range(-0.5..0.0), rng.gen_range(-0.3..0.3), 0.0],
                    radius: rng.gen_range(0.6..0.9),
                },
                crate::geometry::Ball {
                    center: [rng.gen_range(0.3..0.9), rng.gen_range(-0.3..0.3), 0.0],
                    radius: rng.gen_range(0.6..0.9),
                },
            ],
            2,
        )?;
        let grid = VoxelGrid::covering(&u, 1.2, 96)?;
        let closed = crate::geometry::rolling_ball_close(&u, 0.3, &grid)?;
        let opened = crate::geometry::rolling_ball_open(&u, 0.3, &grid)?;
        let centers = grid.centers();
        let nested = (0..grid.len()).all(|i| {
            let inside = crate::geometry::dist_to_union(&u, centers[i]) == 0.0;
            (!opened.inside[i] || inside) && (!inside || closed.inside[i])
        });
        check("geometry_nesting", nested, String::new(), &mut rows);
        let raster = crate::geometry::MaskGrid {
            grid: grid.clone(),
            inside: centers
                .iter()
                .map(|&c| crate::geometry::dist_to_union(&u, c) == 0.0)
                .collect(),
        };
        let once = crate::geometry::close_mask(&raster, 0.3)?;
        let twice = crate::geometry::close_mask(&once, 0.3)?;
        check(
            "geometry_close_idempotent",
            once.inside == twice.inside,
            String::new(),
            &mut rows,
        );
    }

    // mesh round-trip
    {
        let mesh = generate_disk_mesh(cfg.r_m, cfg.r_iel, cfg.half_width, cfg.resolution)?;
        let text = save_mesh(&mesh);
        let loaded = crate::mesh::load_mesh(&text)?;
        check(
            "mesh_roundtrip",
            save_mesh(&loaded) == text,
            String::new(),
            &mut rows,
        );
    }

    // synthetic extinction curve
    {
        let theta: Vec<(f64, f64)> = (0..=120)
            .map(|i| {
                let k = i as f64 / 100.0;
                (k, (1.0 - k).max(0.0).powi(3))
            })
            .collect();
        let v = extinction_check(&theta, 1.0 / 64.0, 3.0, 2.0)?;
        check(
            "extinction_synthetic",
            v.passed && (v.t_e - 1.0).abs() <= 1e-12,
            format!("t_e = {:.6}", v.t_e),
            &mut rows,
        );
    }

    // a priori bound algebra
    {
        let norms = DataNorms {
            f_ls: 1.0,
            domain_measure: (2.0 * cfg.half_width).powi(2),
            ..Default::default()
        };
        let (c_e, c_p) = conservative_constants(2.0 * cfg.half_width * 2.0f64.sqrt());
        let pass = apriori_bound(&norms, c_e, c_p, cfg.eps_m.min(cfg.eps_s), 8.0, 4.0, 4.0)
            .map(|b| b.k1 > 0.0 && b.beta > 1.0)
            .unwrap_or(false);
        check("apriori_bound_constants", pass, String::new(), &mut rows);
    }

    output::emit(
        &out_path(out, "verify.csv"),
        &output::csv_table(&["check", "status", "detail"], &rows),
    )?;
    for row in &rows {
        println!("{:<28} {}", row[0], row[1]);
    }
    if all_pass {
        Ok(())
    } else {
        Err(Error::Breakdown("verification suite reported failures".into()))
    }
}
