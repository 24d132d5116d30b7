use std::f64::consts::PI;
use std::sync::Arc;

use layerpot::bie::{self, evaluate_representation};
use layerpot::degree::{existence_from_degree, leray_schauder_degree};
use layerpot::hammerstein::{picard_best_effort, picard_solve};
use layerpot::potentials::{measure_jump, solid_angle, KernelConvention, Probe};
use layerpot::solver::{convergence_report, solve_semilinear, SemilinearProblem, SolverError, SourceFn};
use layerpot::symbols::{analyze, check_conditions, presets};
use layerpot::{make_unit_sphere, BoundaryField, Point3, VolumeGrid};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use crate::config::*;
use crate::report::{Check, SuiteOutput, Table};
use crate::CliError;

fn fail(e: impl std::fmt::Display) -> CliError {
    CliError::Computation(e.to_string())
}

fn random_direction(rng: &mut ChaCha8Rng) -> Point3 {
    loop {
        let p = Point3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        let n = p.norm();
        if n > 1e-3 && n <= 1.0 {
            return p / n;
        }
    }
}

fn rel_l2(got: &[f64], want: &[f64], w: &[f64]) -> f64 {
    let num: f64 = got.iter().zip(want).zip(w).map(|((a, b), w)| w * (a - b).powi(2)).sum();
    let den: f64 = want.iter().zip(w).map(|(b, w)| w * b * b).sum();
    (num / den).sqrt()
}

pub fn run(cmd: &Command, seed: u64) -> Result<SuiteOutput, CliError> {
    match cmd {
        Command::SolidAngle(p) => run_solid_angle(p, seed),
        Command::JumpTest(p) => run_jump(p, seed),
        Command::Dtn(p) => run_dtn(p),
        Command::Symbols(p) => run_symbols(p),
        Command::HammersteinSolve(p) => run_hammerstein_solve(p, seed),
        Command::HammersteinDegree(p) => run_hammerstein_degree(p, seed),
        Command::Poisson(p) => run_poisson(p, seed),
        Command::Convergence(p) => run_convergence(p),
    }
}

fn run_solid_angle(p: &SolidAngleParams, seed: u64) -> Result<SuiteOutput, CliError> {
    let mesh = make_unit_sphere(p.level);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut csv = String::from("kind,x,y,z,solid_angle\n");
    let sample = |kind: &str, x: Point3, probe: Probe, csv: &mut String| -> Result<f64, CliError> {
        let w = solid_angle(&mesh, probe).map_err(fail)?;
        csv.push_str(&format!("{kind},{:e},{:e},{:e},{:e}\n", x.x, x.y, x.z, w));
        Ok(w)
    };
    let (mut int_err, mut ext_err, mut bnd_err) = (0.0f64, 0.0f64, 0.0f64);
    let (mut interior, mut exterior, mut boundary) = (Vec::new(), Vec::new(), Vec::new());
    for _ in 0..p.interior {
        let x = random_direction(&mut rng) * (0.8 * rng.random::<f64>().cbrt());
        let w = sample("interior", x, x.into(), &mut csv)?;
        int_err = int_err.max((w / (-4.0 * PI) - 1.0).abs());
        interior.push(w);
    }
    for _ in 0..p.exterior {
        let x = random_direction(&mut rng) * rng.random_range(1.3..3.0);
        let w = sample("exterior", x, x.into(), &mut csv)?;
        ext_err = ext_err.max(w.abs());
        exterior.push(w);
    }
    for _ in 0..p.boundary {
        let i = rng.random_range(0..mesh.len());
        let w = sample("boundary", mesh.nodes()[i], Probe::Node(i), &mut csv)?;
        bnd_err = bnd_err.max((w / (-2.0 * PI) - 1.0).abs());
        boundary.push(w);
    }
    Ok(SuiteOutput {
        results: json!({ "nodes": mesh.len(), "interior": interior, "exterior": exterior, "boundary": boundary }),
        checks: vec![
            Check::at_most("interior relative error", int_err, 0.01),
            Check::at_most("exterior absolute value", ext_err, 0.05),
            Check::at_most("boundary relative error", bnd_err, 0.03),
        ],
        tables: vec![Table { name: "solid_angle".into(), csv }],
    })
}

fn run_jump(p: &JumpParams, seed: u64) -> Result<SuiteOutput, CliError> {
    let mesh = make_unit_sphere(p.level);
    let v: Vec<f64> = mesh.nodes().iter().map(|x| 1.0 + 0.5 * x.z).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut csv = String::from("node,interior,exterior,principal_value,jump,density\n");
    let mut worst = 0.0f64;
    let mut rows = Vec::new();
    for _ in 0..p.probes {
        let i = rng.random_range(0..mesh.len());
        let j = measure_jump(&mesh, &v, i, KernelConvention::Newton).map_err(fail)?;
        worst = worst.max((j.jump / j.density - 1.0).abs());
        csv.push_str(&format!("{},{:e},{:e},{:e},{:e},{:e}\n", i, j.interior, j.exterior, j.principal_value, j.jump, j.density));
        rows.push(j);
    }
    Ok(SuiteOutput {
        results: json!({ "nodes": mesh.len(), "measurements": rows }),
        checks: vec![Check::at_most("jump relative error", worst, p.tolerance)],
        tables: vec![Table { name: "jump".into(), csv }],
    })
}

fn run_dtn(p: &DtnParams) -> Result<SuiteOutput, CliError> {
    let mesh = make_unit_sphere(p.level);
    let sys = bie::assemble_neumann_system(&mesh).map_err(fail)?;
    let z: Vec<f64> = mesh.nodes().iter().map(|x| x.z).collect();
    let q: Vec<f64> = mesh.nodes().iter().map(|x| x.z * x.z - 0.5 * (x.x * x.x + x.y * x.y)).collect();
    let a5z = bie::solve_neumann_data(&sys, &z, None).map_err(fail)?;
    let a5q = bie::solve_neumann_data(&sys, &q, None).map_err(fail)?;
    let zero = sys.solve(&vec![0.0; mesh.len()]).map_err(fail)?;
    let q2: Vec<f64> = q.iter().map(|v| 2.0 * v).collect();
    let e_lin = rel_l2(&a5z, &z, mesh.weights());
    let e_quad = rel_l2(&a5q, &q2, mesh.weights());
    let e_zero = zero.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let mut csv = String::from("x,y,z,a5_linear,a5_quadratic\n");
    for (i, x) in mesh.nodes().iter().enumerate() {
        csv.push_str(&format!("{:e},{:e},{:e},{:e},{:e}\n", x.x, x.y, x.z, a5z[i], a5q[i]));
    }
    Ok(SuiteOutput {
        results: json!({
            "nodes": mesh.len(),
            "condition_estimate": sys.condition_estimate(),
            "linear_relative_l2": e_lin,
            "quadratic_relative_l2": e_quad,
            "homogeneous_max": e_zero,
        }),
        checks: vec![
            Check::at_most("A5 = z relative L2", e_lin, 0.02),
            Check::at_most("A5 = 2 A1 relative L2", e_quad, 0.03),
            Check::at_most("homogeneous solution max", e_zero, 1e-10),
        ],
        tables: vec![Table { name: "dtn".into(), csv }],
    })
}

fn run_symbols(p: &SymbolsParams) -> Result<SuiteOutput, CliError> {
    let (spec, params) = match &p.spec {
        SymbolSource::Preset(name) => {
            presets::by_name(name).ok_or_else(|| CliError::ConfigInvalid(format!("unknown preset {name:?}")))?
        }
        SymbolSource::Explicit { resolution, parameters } => (resolution.clone(), parameters.clone()),
    };
    let analysis = match analyze(&spec, &params) {
        Ok(a) => a,
        Err(e) => {
            return Ok(SuiteOutput {
                results: json!({ "error": e.to_string() }),
                checks: vec![Check::flag("symbol analysis", false)],
                tables: Vec::new(),
            })
        }
    };
    let f = &analysis.factor;
    let mut results = json!({
        "resolution": spec,
        "det": f.det.to_string(),
        "det_degree": f.det.degree(),
        "a1": f.a1.to_string(),
        "route": f.route,
        "b1_size": analysis.b1.rows(),
    });
    let mut checks = vec![Check::flag("symbol analysis", true)];
    if let Some(d) = p.expected_det_degree {
        checks.push(Check::flag(format!("det degree {d}"), f.det.degree() == d as i32));
    }
    match check_conditions(&f.a1, &f.a1_b1_inv, &analysis.a1_b1_inv_b2) {
        Ok((budget, report)) => {
            results["budget"] = serde_json::to_value(budget).expect("budget");
            results["conditions"] = serde_json::to_value(&report).expect("report");
            checks.push(Check::flag("conditions hold", true));
        }
        Err(e) => {
            results["conditions_error"] = Value::String(e.to_string());
            checks.push(Check::flag("conditions hold", false));
        }
    }
    Ok(SuiteOutput { results, checks, tables: Vec::new() })
}

fn node_table(nodes: &[Point3], values: &[f64]) -> String {
    let mut csv = String::from("x,y,z,f\n");
    for (x, v) in nodes.iter().zip(values) {
        csv.push_str(&format!("{:e},{:e},{:e},{:e}\n", x.x, x.y, x.z, v));
    }
    csv
}

fn run_hammerstein_solve(p: &HammersteinSolveParams, seed: u64) -> Result<SuiteOutput, CliError> {
    let problem = p.problem.build().map_err(|e| CliError::ConfigInvalid(e.to_string()))?;
    let bound = problem.contraction_bound();
    let solved = if p.best_effort {
        picard_best_effort(&problem, p.tol, p.max_iter, seed)
    } else {
        picard_solve(&problem, p.tol, p.max_iter)
    };
    Ok(match solved {
        Ok(sol) => SuiteOutput {
            results: json!({ "contraction_bound": bound, "solution": sol }),
            checks: vec![Check::at_most("residual", sol.residual_inf, p.tol)],
            tables: vec![Table { name: "solution".into(), csv: node_table(&sol.nodes, &sol.values) }],
        },
        Err(e) => SuiteOutput {
            results: json!({ "contraction_bound": bound, "error": e.to_string() }),
            checks: vec![Check::flag("solution found", false)],
            tables: Vec::new(),
        },
    })
}

fn run_hammerstein_degree(p: &HammersteinDegreeParams, seed: u64) -> Result<SuiteOutput, CliError> {
    let problem = p.problem.build().map_err(|e| CliError::ConfigInvalid(e.to_string()))?;
    let cert = match leray_schauder_degree(&problem, p.n, p.samples, seed) {
        Ok(c) => c,
        Err(e) => {
            return Ok(SuiteOutput {
                results: json!({ "error": e.to_string() }),
                checks: vec![Check::flag("certificate issued", false)],
                tables: Vec::new(),
            })
        }
    };
    let mut checks = vec![
        Check::at_most("kernel fit within tau/3", cert.sup_error_kernel, cert.budget),
        Check::at_most("offset fit within tau/3", cert.sup_error_offset, cert.budget),
    ];
    let mut results = json!({ "certificate": cert });
    let mut tables = Vec::new();
    if cert.degree != 0 {
        match existence_from_degree(&cert, &problem, p.tol) {
            Ok(sol) => {
                checks.push(Check::at_most("solution residual", sol.residual_inf, p.tol));
                tables.push(Table { name: "solution".into(), csv: node_table(&sol.nodes, &sol.values) });
                results["solution"] = serde_json::to_value(&sol).expect("solution");
            }
            Err(e) => {
                checks.push(Check::flag("solution found", false));
                results["existence_error"] = Value::String(e.to_string());
            }
        }
    }
    Ok(SuiteOutput { results, checks, tables })
}

/// Degree ≤ 2 harmonic polynomials.
fn harmonics() -> Vec<(&'static str, fn(Point3) -> f64)> {
    vec![
        ("1", |_| 1.0),
        ("x", |p| p.x),
        ("y", |p| p.y),
        ("z", |p| p.z),
        ("xy", |p| p.x * p.y),
        ("xz", |p| p.x * p.z),
        ("yz", |p| p.y * p.z),
        ("x2-y2", |p| p.x * p.x - p.y * p.y),
        ("2z2-x2-y2", |p| 2.0 * p.z * p.z - p.x * p.x - p.y * p.y),
    ]
}

fn run_poisson(p: &PoissonParams, seed: u64) -> Result<SuiteOutput, CliError> {
    let mesh = make_unit_sphere(p.level);
    let grid = VolumeGrid::from_mesh(&mesh, p.grid).map_err(fail)?;
    let sys = bie::assemble_neumann_system(&mesh).map_err(fail)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let probes: Vec<Point3> = (0..10).map(|_| random_direction(&mut rng) * (0.7 * rng.random::<f64>().cbrt())).collect();
    let zero_src = vec![0.0; grid.len()];
    let mut checks = Vec::new();
    let mut errors = serde_json::Map::new();
    let mut csv = String::from("harmonic,x,y,z,value,exact\n");
    for (name, h) in harmonics() {
        let a1: Vec<f64> = mesh.nodes().iter().map(|&x| h(x)).collect();
        let a5 = bie::solve_neumann_data(&sys, &a1, None).map_err(fail)?;
        let mut err = 0.0f64;
        let mut scale = 0.0f64;
        for &x in &probes {
            let u = evaluate_representation(&mesh, &grid, &a1, &a5, &zero_src, x).map_err(fail)?;
            err = err.max((u - h(x)).abs());
            scale = scale.max(h(x).abs());
            csv.push_str(&format!("{name},{:e},{:e},{:e},{:e},{:e}\n", x.x, x.y, x.z, u, h(x)));
        }
        errors.insert(name.into(), json!(err / scale));
        checks.push(Check::at_most(format!("harmonic {name} relative error"), err / scale, p.tolerance));
    }

    let ones = vec![1.0; grid.len()];
    let a1 = vec![0.0; mesh.len()];
    let a5 = bie::solve_neumann_data(&sys, &a1, Some((&grid, &ones))).map_err(fail)?;
    let u0 = evaluate_representation(&mesh, &grid, &a1, &a5, &ones, Point3::ZERO).map_err(fail)?;
    checks.push(Check::at_most("u(0) relative error", (u0 * 6.0 - 1.0).abs(), p.tolerance));
    Ok(SuiteOutput {
        results: json!({ "nodes": mesh.len(), "cells": grid.len(), "harmonic_errors": errors, "u0": u0 }),
        checks,
        tables: vec![Table { name: "harmonics".into(), csv }],
    })
}

fn run_convergence(p: &ConvergenceParams) -> Result<SuiteOutput, CliError> {
    let mesh = make_unit_sphere(p.level);
    let grid = VolumeGrid::from_mesh(&mesh, p.grid).map_err(fail)?;
    let ustar = |c: Point3| (1.0 - c.norm_squared()) / 6.0;
    let (a1, psi, lip, exact): (BoundaryField, SourceFn, [f64; 2], Box<dyn Fn(Point3) -> f64>) = match p.case {
        ConvergenceCase::Harmonic => {
            (BoundaryField::from_fn(&mesh, |x, _| x.z), Arc::new(|_, _, _| 0.0), [0.0, 0.0], Box::new(|c: Point3| c.z))
        }
        ConvergenceCase::Poisson => (BoundaryField::zeros(mesh.len()), Arc::new(|_, _, _| 1.0), [0.0, 0.0], Box::new(ustar)),
        ConvergenceCase::Manufactured => (
            BoundaryField::zeros(mesh.len()),
            Arc::new(move |u, _, x| 1.0 + (u - ustar(x))),
            [1.0, 0.0],
            Box::new(ustar),
        ),
    };
    let mut problem = SemilinearProblem::new(&mesh, &grid, a1, psi, lip, 10.0);
    let h = grid.spacing();
    let h2 = h.x.max(h.y).max(h.z).powi(2);
    problem.epsilon_schedule = p.schedule.iter().map(|u| u * h2).collect();
    problem.negative_order = p.negative_order;
    let sol = match solve_semilinear(&problem, p.tol, p.max_iter) {
        Ok(s) => s,
        Err(SolverError::DivergenceDetected { history }) => {
            let table = convergence_report(&history);
            return Ok(SuiteOutput {
                results: json!({ "diverged": true, "table": table }),
                checks: vec![Check::flag("converged", false)],
                tables: vec![
                    Table { name: "history".into(), csv: history.to_csv() },
                    Table { name: "convergence".into(), csv: table.to_csv() },
                ],
            });
        }
        Err(e) => return Err(fail(e)),
    };
    let table = convergence_report(&sol.history);
    let want: Vec<f64> = grid.centers().iter().map(|&c| exact(c)).collect();
    let field_err = match p.case {
        ConvergenceCase::Harmonic => rel_l2(&sol.values, &want, grid.weights()),
        _ => {
            let top = want.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            sol.values.iter().zip(&want).fold(0.0f64, |m, (a, b)| m.max((a - b).abs())) / top
        }
    };
    let initial = sol.history.iterations.first().map(|r| r.residual_negnorm).unwrap_or(0.0);
    let ratio = if initial > 0.0 { sol.state.residual_negnorm / initial } else { 0.0 };
    Ok(SuiteOutput {
        results: json!({
            "cells": grid.len(),
            "contraction_bound": sol.history.contraction_bound,
            "field_error": field_err,
            "negnorm_ratio": ratio,
            "table": table,
        }),
        checks: vec![
            Check::at_most("field error", field_err, p.tolerance),
            Check::at_most("final/initial negative-norm residual", ratio, 1e-3),
            Check::flag("limit residuals nonincreasing", table.tail_nonincreasing),
        ],
        tables: vec![
            Table { name: "history".into(), csv: sol.history.to_csv() },
            Table { name: "convergence".into(), csv: table.to_csv() },
        ],
    })
}
