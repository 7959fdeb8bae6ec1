use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use gapdiff::eigen::EigenSettings;
use gapdiff::geometry::{polygon_from_csv, polygon_to_csv, segments_from_csv, segments_to_csv};
use gapdiff::io::{coo_text, field_csv, fmt_real, mesh_triangles_csv, mesh_vertices_csv};
use gapdiff::process::{estimates_csv, path_csv, sample_path_indexed};
use gapdiff::semigroup::{check_submarkov, march, step_count};
use gapdiff::{
    build_ctmc, eigen_smallest, estimate_many, hyperplane_support, koch_snowflake, Discretization,
    MassKind, PathStatus, SolverSettings, SupportSpec,
};
use serde_json::{json, Value};

use crate::config::{Document, FieldChoice, RunConfig, SupportConfig, Task};
use crate::error::CliError;

pub const MANIFEST_NAME: &str = "manifest.cfg";

#[derive(Debug, Clone)]
pub struct RunManifest {
    pub output_dir: PathBuf,
    /// Files written besides the manifest, relative to `output_dir`.
    pub files: Vec<String>,
    pub document: Document,
}

impl RunManifest {
    pub fn scalar(&self, key: &str) -> Option<&Value> {
        self.document.get("scalars", key).map(|e| &e.value)
    }
}

struct Outputs {
    dir: PathBuf,
    files: Vec<String>,
}

impl Outputs {
    fn write(&mut self, name: &str, contents: &str) -> Result<(), CliError> {
        let path = self.dir.join(name);
        fs::write(&path, contents).map_err(|e| CliError::io(path, e))?;
        self.files.push(name.to_string());
        Ok(())
    }
}

struct Timer {
    phases: Vec<(String, f64)>,
}

impl Timer {
    fn phase<T>(&mut self, name: &str, f: impl FnOnce() -> T) -> T {
        let t0 = Instant::now();
        let out = f();
        let seconds = t0.elapsed().as_secs_f64();
        log::info!("phase={name} seconds={seconds:.6}");
        self.phases.push((name.to_string(), seconds));
        out
    }
}

fn read_file(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}

fn support_spec(config: &RunConfig) -> Result<SupportSpec, CliError> {
    let density = config.density;
    Ok(match &config.support {
        SupportConfig::Full => SupportSpec::FullDomain,
        SupportConfig::Hyperplane => SupportSpec::Segments {
            segments: hyperplane_support(&config.domain)?,
            density,
        },
        SupportConfig::Snowflake { depth, center, side } => SupportSpec::Region {
            polygon: koch_snowflake(*depth, *center, *side)?,
            density,
        },
        SupportConfig::PolygonFile(path) => SupportSpec::Region {
            polygon: polygon_from_csv(&read_file(path)?)?,
            density,
        },
        SupportConfig::SegmentsFile(path) => SupportSpec::Segments {
            segments: segments_from_csv(&read_file(path)?)?,
            density,
        },
    })
}

/// Runs the configured task inside a pool of `config.threads` workers.
pub fn run(config: &RunConfig) -> Result<RunManifest, CliError> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = config.threads {
        builder = builder.num_threads(n);
    }
    let pool = builder.build().map_err(|e| CliError::Config {
        line: None,
        key: "run.threads".into(),
        message: e.to_string(),
    })?;
    pool.install(|| run_in_pool(config, pool.current_num_threads()))
}

fn run_in_pool(config: &RunConfig, threads: usize) -> Result<RunManifest, CliError> {
    let dir = config.output.clone();
    fs::create_dir_all(&dir).map_err(|e| CliError::io(&dir, e))?;
    let mut out = Outputs { dir, files: Vec::new() };
    let mut timer = Timer { phases: Vec::new() };
    let mut scalars: Vec<(&str, Value)> = Vec::new();

    let support = timer.phase("geometry", || support_spec(config))?;
    match &support {
        SupportSpec::Region { polygon, .. } => out.write("support_polygon.csv", &polygon_to_csv(polygon))?,
        SupportSpec::Segments { segments, .. } => out.write("support_segments.csv", &segments_to_csv(segments))?,
        SupportSpec::FullDomain => {}
    }

    let settings = SolverSettings {
        tol: config.tol,
        max_iter: config.max_iter,
        dense_threshold: config.dense_threshold,
    };
    let mut d = timer.phase("discretize", || {
        Discretization::build(config.domain, support, config.n_cells, config.quad_order, settings)
    })?;
    scalars.push(("mass_total", json!(d.measure.total())));
    scalars.push(("n_support", json!(d.partition.support.len())));
    scalars.push(("n_gap", json!(d.partition.gap.len())));
    scalars.push(("n_boundary", json!(d.partition.boundary.len())));
    scalars.push(("h", json!(d.mesh.h())));

    let mut dofs = String::from("dof,vertex_index,x,y,lumped_mass\n");
    for (k, (&v, m)) in d.partition.support.iter().zip(d.mass.lumped()).enumerate() {
        let p = d.mesh.vertex(v);
        let _ = writeln!(dofs, "{k},{v},{},{},{}", fmt_real(p.x), fmt_real(p.y), fmt_real(*m));
    }
    out.write("support_dofs.csv", &dofs)?;
    out.write("mesh_vertices.csv", &mesh_vertices_csv(&d.mesh))?;
    out.write("mesh_triangles.csv", &mesh_triangles_csv(&d.mesh))?;
    out.write("mass.coo", &coo_text(d.mass.consistent(), Some(&d.partition.support)))?;

    let dense = timer.phase("schur", || d.op.cache_dense_if_small())?;
    if let Some(s) = d.op.dense() {
        scalars.push(("schur_asymmetry", json!(s.asymmetry)));
    }
    log::debug!("dense schur cached: {dense}");

    let eig = EigenSettings {
        tol: config.eig_tol,
        seed: config.seed,
    };
    let write_field = |out: &mut Outputs, name: &str, values: &[f64]| -> Result<(), CliError> {
        let text = if config.extend {
            let ext = d.op.harmonic_extend(values)?;
            let all: Vec<usize> = (0..d.mesh.n_vertices()).collect();
            field_csv(&d.mesh, &all, &ext.values)
        } else {
            field_csv(&d.mesh, &d.partition.support, values)
        };
        out.write(name, &text)
    };

    match &config.task {
        Task::Eigen { k, mass } => {
            let pairs = timer.phase("eigen", || eigen_smallest(&d.op, &d.mass, *k, *mass, &eig))?;
            let mut table = String::from("k,lambda,residual\n");
            for (i, p) in pairs.iter().enumerate() {
                let _ = writeln!(table, "{},{},{}", i + 1, fmt_real(p.value), fmt_real(p.residual));
            }
            out.write("eigenvalues.csv", &table)?;
            timer.phase("write", || {
                pairs
                    .iter()
                    .enumerate()
                    .try_for_each(|(i, p)| write_field(&mut out, &format!("eigenvector_{}.csv", i + 1), &p.vector))
            })?;
            scalars.push(("lambda", json!(pairs.iter().map(|p| p.value).collect::<Vec<_>>())));
            scalars.push(("max_residual", json!(pairs.iter().fold(0.0f64, |m, p| m.max(p.residual)))));
        }
        Task::Evolve { f0, t_end, dt, every } => {
            let f0 = match f0 {
                FieldChoice::One => vec![1.0; d.dim()],
                FieldChoice::Ground => {
                    timer.phase("eigen", || eigen_smallest(&d.op, &d.mass, 1, MassKind::Lumped, &eig))?[0]
                        .vector
                        .clone()
                }
                FieldChoice::Indicator(p) => {
                    let mut f = vec![0.0; d.dim()];
                    f[d.nearest_dof(*p)] = 1.0;
                    f
                }
            };
            let n = step_count(*t_end, *dt);
            let mut snapshots = Vec::new();
            let mut masses = Vec::new();
            timer.phase("evolve", || {
                march(&d.op, &d.mass, &f0, n, *dt, |step, u| {
                    masses.push(d.mass.total_mass(u));
                    if step % every == 0 || step == n {
                        snapshots.push((step, u.to_vec()));
                    }
                })
            })?;
            let mut index = String::from("snapshot,step,t,file\n");
            for (s, (step, u)) in snapshots.iter().enumerate() {
                let name = format!("evolve_{step:06}.csv");
                write_field(&mut out, &name, u)?;
                let _ = writeln!(index, "{s},{step},{},{name}", fmt_real(*step as f64 * dt));
            }
            out.write("evolve_index.csv", &index)?;
            scalars.push(("steps", json!(n)));
            scalars.push(("final_mass", json!(masses.last().copied().unwrap_or(0.0))));
            let increase = masses.windows(2).fold(0.0f64, |m, w| m.max(w[1] - w[0]));
            scalars.push(("worst_mass_increase", json!(increase)));
        }
        Task::Walk {
            start,
            times,
            n_paths,
            export_paths,
        } => {
            let ground = timer.phase("eigen", || eigen_smallest(&d.op, &d.mass, 1, MassKind::Lumped, &eig))?;
            let chain = timer.phase("ctmc", || build_ctmc(&d.op, &d.mass))?;
            let start = d.nearest_dof(*start);
            let ones = vec![1.0; d.dim()];
            let est = timer.phase("walk", || {
                estimate_many(&chain, &[&ones, &ground[0].vector], start, times, *n_paths, config.seed)
            })?;
            out.write("estimates_survival.csv", &estimates_csv(&est[0]))?;
            out.write("estimates_ground.csv", &estimates_csv(&est[1]))?;
            let t_max = times.iter().copied().fold(0.0, f64::max);
            let points = d.support_points();
            let mut index = String::from("path,status,clock,file\n");
            for p in 0..*export_paths {
                let path = sample_path_indexed(&chain, start, t_max, config.seed, p as u64);
                let name = format!("path_{p:04}.csv");
                out.write(&name, &path_csv(&path, &points))?;
                let status = match path.status {
                    PathStatus::Alive => "alive",
                    PathStatus::Killed => "killed",
                };
                let _ = writeln!(index, "{p},{status},{},{name}", fmt_real(path.clock));
            }
            if *export_paths > 0 {
                out.write("paths_index.csv", &index)?;
            }
            scalars.push(("start_dof", json!(start)));
            scalars.push(("lambda_1", json!(ground[0].value)));
            scalars.push(("clipped", json!(chain.clipped())));
            scalars.push(("survival", json!(est[0].iter().map(|e| e.mean).collect::<Vec<_>>())));
        }
        Task::Verify { trials, t_end, dt } => {
            let report = timer.phase("verify", || check_submarkov(&d.op, &d.mass, *trials, *t_end, *dt, config.seed))?;
            let mut table = String::from("trial,min,max,positivity_violation,contraction_violation,mass_increase\n");
            for c in &report.checks {
                let _ = writeln!(
                    table,
                    "{},{},{},{},{},{}",
                    c.trial,
                    fmt_real(c.min),
                    fmt_real(c.max),
                    fmt_real(c.positivity_violation),
                    fmt_real(c.contraction_violation),
                    fmt_real(c.mass_increase)
                );
            }
            out.write("verify.csv", &table)?;
            scalars.push(("trials", json!(trials)));
            scalars.push(("worst_positivity_violation", json!(report.worst_positivity())));
            scalars.push(("worst_contraction_violation", json!(report.worst_contraction())));
            scalars.push(("worst_mass_increase", json!(report.worst_mass_increase())));
        }
    }

    let mut doc = Document::default();
    doc.set("run", "task", json!(config.task.name()));
    doc.set("run", "seed", json!(config.seed));
    doc.set("run", "threads", json!(threads));
    doc.set("versions", "gapdiff", json!(gapdiff::VERSION));
    doc.set("versions", "gapdiff_cli", json!(env!("CARGO_PKG_VERSION")));
    for (section, key, e) in config.source.entries() {
        let name = if section.is_empty() { "config".to_string() } else { format!("config.{section}") };
        doc.set(&name, key, e.value.clone());
    }
    for (name, seconds) in &timer.phases {
        doc.set("timings", name, json!(seconds));
    }
    doc.set("outputs", "files", json!(out.files));
    for (k, v) in scalars {
        doc.set("scalars", k, v);
    }
    let path = out.dir.join(MANIFEST_NAME);
    fs::write(&path, doc.render()).map_err(|e| CliError::io(path, e))?;
    Ok(RunManifest {
        output_dir: out.dir,
        files: out.files,
        document: doc,
    })
}
