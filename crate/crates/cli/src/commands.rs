use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::Parser;
use serde_json::json;
use shellcond::adc::{adc_matrix, AdcReport, DirectionSample};
use shellcond::mesh::remesh::remesh;
use shellcond::mesh::{build_geometry, GeometryOptions, Vec3};
use shellcond::optimize::{optimize_with, ArmijoConfig, ObjectiveSpec, OptConfig, Sense, StopReason};
use shellcond::revolve::{revolve_mesh, RevolutionProfile};
use shellcond::study::{eps_order, h_convergence, precon_sweep, Study};
use shellcond::surfgen::{self, generate_implicit, ImplicitKind, ImplicitSpec, PerturbSpec};
use shellcond::PeriodicSurfaceMesh;

use crate::manifest::RunManifest;
use crate::{Cli, Command, EvalArgs, Failure, GenArgs, OptimizeArgs, SenseArg, StudyArgs, StudyKind, SurfaceType};

/// Remesh passes applied by `gen --remesh-length`.
const GEN_REMESH_PASSES: usize = 3;

struct Outcome {
    inputs: Vec<PathBuf>,
    outputs: Vec<PathBuf>,
    seed: Option<u64>,
    summary: serde_json::Value,
    /// Failure to report after the manifest is written.
    deferred: Option<Failure>,
}

pub fn run(cli: Cli, args: &[String]) -> Result<(), Failure> {
    let start = Instant::now();
    let (name, out, outcome) = match &cli.command {
        Command::Gen(a) => ("gen", a.out.clone(), gen(a)?),
        Command::Eval(a) => ("eval", a.out.clone(), eval(a)?),
        Command::Optimize(a) => ("optimize", a.out.clone(), optimize(a)?),
        Command::Study(a) => ("study", a.out.clone(), study(a)?),
        Command::Replay { manifest } => return replay(manifest),
    };
    let config = match serde_json::to_value(&cli.command) {
        Ok(serde_json::Value::Object(mut map)) => map.remove(name).unwrap_or_default(),
        _ => serde_json::Value::Null,
    };
    let manifest = RunManifest {
        tool: env!("CARGO_PKG_NAME").to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        subcommand: name.to_string(),
        args: args.to_vec(),
        working_directory: std::env::current_dir().unwrap_or_default(),
        config,
        inputs: outcome.inputs,
        outputs: outcome.outputs,
        seed: outcome.seed,
        threads: rayon::current_num_threads(),
        wall_clock_seconds: start.elapsed().as_secs_f64(),
        summary: outcome.summary,
    };
    manifest.write(&out)?;
    match outcome.deferred {
        Some(f) => Err(f),
        None => Ok(()),
    }
}

fn replay(path: &Path) -> Result<(), Failure> {
    let manifest = RunManifest::read(path)?;
    if manifest.args.first().map(String::as_str) == Some("replay") {
        return Err(Failure::Usage("a replay manifest cannot be replayed".into()));
    }
    std::env::set_current_dir(&manifest.working_directory)
        .map_err(|e| Failure::Input(format!("{}: {e}", manifest.working_directory.display())))?;
    let argv = std::iter::once("shellcond".to_string()).chain(manifest.args.iter().cloned());
    let cli = Cli::try_parse_from(argv).map_err(|e| Failure::Usage(e.to_string()))?;
    run(cli, &manifest.args)
}

fn write_output(path: &Path, text: &str) -> Result<(), Failure> {
    std::fs::write(path, text).map_err(|e| Failure::Runtime(format!("writing {}: {e}", path.display())))
}

fn save_mesh(mesh: &PeriodicSurfaceMesh, path: &Path) -> Result<(), Failure> {
    write_output(path, &mesh.to_json_string())
}

fn load_mesh(path: &Path) -> Result<PeriodicSurfaceMesh, Failure> {
    PeriodicSurfaceMesh::load(path).map_err(|e| Failure::Input(format!("{}: {e}", path.display())))
}

fn mesh_summary(mesh: &PeriodicSurfaceMesh) -> serde_json::Value {
    json!({
        "vertices": mesh.num_vertices(),
        "faces": mesh.num_faces(),
        "area": mesh.total_area(),
        "euler": mesh.euler_characteristic().ok(),
    })
}

fn gen(a: &GenArgs) -> Result<Outcome, Failure> {
    let n = a.resolution;
    let implicit = |kind: ImplicitKind| generate_implicit(&ImplicitSpec { kind, level: a.level, resolution: n });
    let mut inputs = Vec::new();
    let mut seed = None;
    let level_set = match a.kind {
        SurfaceType::SchwarzP => Some(ImplicitKind::SchwarzP),
        SurfaceType::Gyroid => Some(ImplicitKind::Gyroid),
        SurfaceType::Diamond => Some(ImplicitKind::Diamond),
        SurfaceType::Iwp => Some(ImplicitKind::Iwp),
        _ => None,
    };
    let mesh = match a.kind {
        SurfaceType::Plane => implicit(ImplicitKind::Plane)?,
        SurfaceType::SchwarzP | SurfaceType::Gyroid | SurfaceType::Diamond | SurfaceType::Iwp => {
            implicit(level_set.clone().expect("implicit surface type"))?
        }
        SurfaceType::Cylinder => {
            if !(a.radius > 0.0 && a.radius < 1.0) || n < 8 {
                return Err(Failure::Usage("cylinder needs 0 < radius < 1 and resolution >= 8".into()));
            }
            surfgen::cylinder(a.radius, n, n)
        }
        SurfaceType::Revolve => {
            let src = a.profile.as_deref().ok_or_else(|| Failure::Usage("--profile is required for revolve".into()))?;
            revolve_mesh(&RevolutionProfile::parse(src)?, n, n)?
        }
        SurfaceType::Perturb => {
            let input = a.input.as_ref().ok_or_else(|| Failure::Usage("--in is required for perturb".into()))?;
            inputs.push(input.clone());
            seed = Some(a.seed);
            let base = load_mesh(input)?;
            let spec = PerturbSpec { strength: a.strength, cutoff: a.cutoff, seed: a.seed };
            surfgen::perturb(&base, &spec)
        }
    };
    let mesh = match a.remesh_length {
        Some(l) => {
            let mut m = mesh;
            for _ in 0..GEN_REMESH_PASSES {
                m = remesh(&m, l)?;
            }
            match &level_set {
                Some(kind) => surfgen::project_to_level_set(&m, kind, a.level),
                None => m,
            }
        }
        None => mesh,
    };
    mesh.validate().map_err(|e| Failure::Runtime(format!("generated mesh is invalid: {e}")))?;
    save_mesh(&mesh, &a.out)?;
    Ok(Outcome { inputs, outputs: vec![a.out.clone()], seed, summary: mesh_summary(&mesh), deferred: None })
}

/// Near-uniform points on the unit sphere (Fibonacci lattice).
fn sphere_directions(count: usize) -> Vec<Vec3> {
    let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
    (0..count)
        .map(|i| {
            let z = 1.0 - 2.0 * (i as f64 + 0.5) / count as f64;
            let r = (1.0 - z * z).sqrt();
            let phi = golden * i as f64;
            Vec3::new(r * phi.cos(), r * phi.sin(), z)
        })
        .collect()
}

fn eval(a: &EvalArgs) -> Result<Outcome, Failure> {
    let mesh = load_mesh(&a.mesh)?;
    let cache = build_geometry(&mesh, GeometryOptions::default())?;
    let result = adc_matrix(&mesh, &cache, a.kappa)?;
    let euler = mesh.euler_characteristic().map_err(|e| Failure::Input(e.to_string()))?;
    let mut report = AdcReport::new(&result, euler);
    report.directions = sphere_directions(a.directions)
        .iter()
        .map(|p| DirectionSample { p: [p.x, p.y, p.z], adc: result.directional(p), bound: result.upper_bound(p) })
        .collect();
    let text = serde_json::to_string_pretty(&report).map_err(|e| Failure::Runtime(e.to_string()))?;
    write_output(&a.out, &text)?;
    Ok(Outcome {
        inputs: vec![a.mesh.clone()],
        outputs: vec![a.out.clone()],
        seed: None,
        summary: json!({ "kA": report.ka, "aac": report.aac }),
        deferred: None,
    })
}

fn optimize(a: &OptimizeArgs) -> Result<Outcome, Failure> {
    let mut spec = ObjectiveSpec::parse(&a.objective)?;
    if let Some(s) = a.sense {
        spec = spec.with_sense(match s {
            SenseArg::Max => Sense::Maximize,
            SenseArg::Min => Sense::Minimize,
        });
    }
    let mesh = load_mesh(&a.mesh)?;
    let cfg = OptConfig {
        kappa: a.kappa,
        precondition_strength: a.precondition,
        fairing_weight: a.fairing,
        armijo: ArmijoConfig { initial_step: a.initial_step, ..Default::default() },
        remesh_target_length: a.remesh_length,
        surgery_threshold: a.surgery_threshold,
        max_iterations: a.max_iter,
        ..Default::default()
    };
    cfg.validate()?;

    let file = std::fs::File::create(&a.log).map_err(|e| Failure::Runtime(format!("{}: {e}", a.log.display())))?;
    let mut log = std::io::BufWriter::new(file);
    let mut log_error = None;
    let out = optimize_with(&mesh, &spec, &cfg, |r| {
        let line = serde_json::to_string(r).expect("record serialization");
        if let Err(e) = writeln!(log, "{line}").and_then(|_| log.flush()) {
            log_error.get_or_insert(e);
        }
    })?;
    if let Some(e) = log_error {
        return Err(Failure::Runtime(format!("{}: {e}", a.log.display())));
    }
    save_mesh(&out.mesh, &a.out)?;

    let first = out.records.first();
    let last = out.records.last();
    let deferred = match &out.stop {
        StopReason::Aborted(msg) => Some(Failure::Runtime(format!("optimization aborted: {msg}"))),
        _ => None,
    };
    Ok(Outcome {
        inputs: vec![a.mesh.clone()],
        outputs: vec![a.out.clone(), a.log.clone()],
        seed: None,
        summary: json!({
            "stop": out.stop,
            "iterations": out.records.len(),
            "initialObjective": first.map(|r| r.objective),
            "finalObjective": last.map(|r| r.accepted_objective),
            "finalKA": last.map(|r| r.ka),
            "mesh": mesh_summary(&out.mesh),
        }),
        deferred,
    })
}

fn study_csv(study: &Study, param: &str, path: &Path) -> Result<(), Failure> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Failure::Runtime(format!("{}: {e}", path.display())))?;
    let io = |e: csv::Error| Failure::Runtime(format!("{}: {e}", path.display()));
    w.write_record([param, "value", "reference", "error"]).map_err(io)?;
    for r in &study.rows {
        w.write_record([r.param, r.value, r.reference, r.error].map(|v| format!("{v:e}"))).map_err(io)?;
    }
    w.flush().map_err(|e| Failure::Runtime(e.to_string()))
}

fn study(a: &StudyArgs) -> Result<Outcome, Failure> {
    match a.kind {
        StudyKind::HConv => {
            let profile = RevolutionProfile::parse(&a.profile)?;
            let s = h_convergence(&profile, &a.resolutions, a.kappa)?;
            study_csv(&s, "h", &a.out)?;
            Ok(Outcome {
                inputs: vec![],
                outputs: vec![a.out.clone()],
                seed: None,
                summary: json!({ "slope": s.slope, "points": s.rows.len() }),
                deferred: None,
            })
        }
        StudyKind::EpsOrder => {
            let profile = RevolutionProfile::parse(&a.profile)?;
            let s = eps_order(&profile, &a.eps, a.n, a.m, a.kappa)?;
            study_csv(&s, "epsilon", &a.out)?;
            Ok(Outcome {
                inputs: vec![],
                outputs: vec![a.out.clone()],
                seed: None,
                summary: json!({ "slope": s.slope, "points": s.rows.len() }),
                deferred: None,
            })
        }
        StudyKind::PreconSweep => {
            let path = a.mesh.as_ref().ok_or_else(|| Failure::Usage("--mesh is required for precon-sweep".into()))?;
            let mesh = load_mesh(path)?;
            let spec = ObjectiveSpec::parse(&a.objective)?;
            let cfg = OptConfig {
                kappa: a.kappa,
                armijo: ArmijoConfig { initial_step: a.initial_step, ..Default::default() },
                remesh_target_length: a.remesh_length,
                max_iterations: a.max_iter,
                ..Default::default()
            };
            cfg.validate()?;
            let runs = precon_sweep(&mesh, &spec, &cfg, &a.c)?;
            let mut w =
                csv::Writer::from_path(&a.out).map_err(|e| Failure::Runtime(format!("{}: {e}", a.out.display())))?;
            let io = |e: csv::Error| Failure::Runtime(e.to_string());
            w.write_record(["c", "iteration", "flow_time", "objective", "step"]).map_err(io)?;
            for run in &runs {
                for r in &run.records {
                    w.write_record([
                        run.c.to_string(),
                        r.iteration.to_string(),
                        format!("{:e}", r.flow_time),
                        format!("{:e}", r.accepted_objective),
                        format!("{:e}", r.step),
                    ])
                    .map_err(io)?;
                }
            }
            w.flush().map_err(|e| Failure::Runtime(e.to_string()))?;
            let summary: Vec<_> = runs
                .iter()
                .map(|r| {
                    json!({
                        "c": r.c,
                        "stop": r.stop,
                        "iterations": r.records.len(),
                        "iterationsTo99": r.iterations_to_99,
                        "finalObjective": r.final_objective,
                        "flowTime": r.flow_time,
                    })
                })
                .collect();
            Ok(Outcome {
                inputs: vec![path.clone()],
                outputs: vec![a.out.clone()],
                seed: None,
                summary: json!({ "runs": summary }),
                deferred: None,
            })
        }
    }
}
