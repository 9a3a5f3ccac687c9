use std::fs::File;
use std::io::{self, BufRead, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use contax::batch_bench::{bench, load_scene, sample_grid, Scene};
use contax::contact::{build_manifold, ContactManifold, ContactMode, ContactPoint};
use contax::diffcore::{value_and_gradient, Real, ScalarField, Vec3, V3};
use contax::geometry::{tree_sdf, GeometryTree, Pose};
use contax::smoothops::SmoothParams;
use contax::spline::{projection_cubic, solve_cubic_soft, QuadSpline};
use contax::Error;

#[derive(Parser)]
#[command(name = "contax", version, about = "Smooth SDF contact manifolds between meshes and superquadric shapes")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Full,
    Reduced,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    /// One JSON record per line.
    Jsonl,
    /// A single JSON document.
    Json,
}

#[derive(Subcommand)]
enum Cmd {
    /// SDF value and gradient of a body at query points.
    SdfEval {
        scene: PathBuf,
        #[arg(long)]
        body: String,
        /// File with one `x y z` point per line, or `-` for stdin.
        #[arg(long)]
        points: String,
    },
    /// Projects a point onto a quadratic spline.
    Project {
        /// Control points p1, p2, p3 as nine numbers.
        #[arg(long, num_args = 9, allow_hyphen_values = true, required = true)]
        spline: Vec<f64>,
        #[arg(long, num_args = 3, allow_hyphen_values = true, required = true)]
        point: Vec<f64>,
        #[arg(long)]
        tau_cmp: Option<f64>,
        #[arg(long)]
        tau_clip: Option<f64>,
    },
    /// Contact manifold between a mesh body and an SDF body at their scene poses.
    Manifold {
        scene: PathBuf,
        /// Two body names, `A,B`.
        #[arg(long, value_delimiter = ',', required = true)]
        pair: Vec<String>,
        #[arg(long, value_enum)]
        mode: Option<Mode>,
        #[arg(long)]
        iters: Option<usize>,
        #[arg(long, value_enum, default_value = "jsonl")]
        format: Format,
    },
    /// Batch-size throughput benchmark; writes per-trial CSV.
    Bench {
        scene: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Samples a body's SDF on a regular grid (binary, or CSV for `.csv`).
    SampleGrid {
        scene: PathBuf,
        #[arg(long)]
        body: String,
        /// Samples per axis: `N` or `NX,NY,NZ`.
        #[arg(long, value_delimiter = ',', default_value = "64")]
        res: Vec<usize>,
        /// `x0,y0,z0,x1,y1,z1`.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true, required = true)]
        bounds: Vec<f64>,
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli.cmd) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Error::Io { source, .. }) if source.kind() == io::ErrorKind::BrokenPipe => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_io() { 3 } else { 2 })
        }
    }
}

fn io_err(path: impl AsRef<Path>) -> impl FnOnce(io::Error) -> Error {
    let path = path.as_ref().to_path_buf();
    move |e| Error::Io { path, source: e }
}

fn arg_error(field: &str, reason: &str) -> Error {
    Error::InvalidParameter { field: field.into(), reason: reason.into() }
}

fn create(path: &Path) -> Result<BufWriter<File>, Error> {
    File::create(path).map(BufWriter::new).map_err(io_err(path))
}

fn run(cmd: Cmd) -> Result<(), Error> {
    match cmd {
        Cmd::SdfEval { scene, body, points } => sdf_eval(&load_scene(&scene)?, &body, &points),
        Cmd::Project { spline, point, tau_cmp, tau_clip } => {
            let mut params = SmoothParams::default();
            if let Some(t) = tau_cmp {
                params.tau_cmp = t;
            }
            if let Some(t) = tau_clip {
                params.tau_clip = t;
            }
            params.validate("--tau")?;
            project(&spline, &point, &params)
        }
        Cmd::Manifold { scene, pair, mode, iters, format } => {
            let mut scene = load_scene(&scene)?;
            if let Some(m) = mode {
                scene.contact.mode = match m {
                    Mode::Full => ContactMode::Full,
                    Mode::Reduced => ContactMode::Reduced,
                };
            }
            if let Some(n) = iters {
                if n == 0 {
                    return Err(arg_error("--iters", "must be at least 1"));
                }
                scene.contact.iters = n;
            }
            let [a, b] = pair.as_slice() else {
                return Err(arg_error("--pair", "expected two body names, `A,B`"));
            };
            manifold(&scene, a, b, format)
        }
        Cmd::Bench { scene, out, seed } => {
            let mut scene = load_scene(&scene)?;
            if let Some(s) = seed {
                scene.bench.seed = s;
            }
            let report = bench(&scene)?;
            let mut w = create(&out)?;
            w.write_all(report.to_csv().as_bytes()).and_then(|_| w.flush()).map_err(io_err(&out))?;
            for r in &report.records {
                println!(
                    "complexity={} batch={} per_item={:.3e}s total={:.3e}s active={}",
                    r.geometry_complexity, r.batch_size, r.per_item_time, r.total_time, r.contacts_active
                );
            }
            println!("seed={} per_item_monotone={}", report.seed, report.per_item_monotone);
            Ok(())
        }
        Cmd::SampleGrid { scene, body, res, bounds, out } => {
            let scene = load_scene(&scene)?;
            let dims = match res.as_slice() {
                [n] => [*n; 3],
                [x, y, z] => [*x, *y, *z],
                _ => return Err(arg_error("--res", "expected N or NX,NY,NZ")),
            };
            if bounds.len() != 6 {
                return Err(arg_error("--bounds", "expected x0,y0,z0,x1,y1,z1"));
            }
            let lo = Vec3::new(bounds[0], bounds[1], bounds[2]);
            let hi = Vec3::new(bounds[3], bounds[4], bounds[5]);
            let grid = sample_grid(&scene, &body, dims, lo, hi)?;
            let mut w = create(&out)?;
            let csv = out.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv"));
            if csv { grid.write_csv(&mut w) } else { grid.write_binary(&mut w) }
                .and_then(|_| w.flush())
                .map_err(io_err(&out))?;
            Ok(())
        }
    }
}

struct BodyField<'a> {
    tree: &'a GeometryTree,
    pose: &'a Pose,
    params: &'a SmoothParams,
}

impl ScalarField for BodyField<'_> {
    fn eval<T: Real>(&self, x: V3<T>) -> T {
        tree_sdf(self.tree, self.pose.to_local_of(x), self.params)
    }
}

fn parse_point(line: &str, source: &str, n: usize) -> Result<Option<Vec3>, Error> {
    let line = line.split('#').next().unwrap_or("").trim();
    if line.is_empty() {
        return Ok(None);
    }
    let vals: Vec<f64> = line
        .split(|c: char| c == ',' || c.is_whitespace())
        .filter(|s| !s.is_empty())
        .map(str::parse)
        .collect::<Result<_, _>>()
        .map_err(|e| Error::Parse { source_name: source.into(), line: n, msg: format!("{e}") })?;
    match vals.as_slice() {
        [x, y, z] if vals.iter().all(|v| v.is_finite()) => Ok(Some(Vec3::new(*x, *y, *z))),
        _ => Err(Error::Parse { source_name: source.into(), line: n, msg: "expected three finite numbers".into() }),
    }
}

fn sdf_eval(scene: &Scene, body: &str, points: &str) -> Result<(), Error> {
    let b = scene.body(body)?;
    let tree = b.tree().ok_or_else(|| arg_error("--body", &format!("`{body}` is a mesh body")))?;
    let field = BodyField { tree, pose: &b.pose, params: &scene.smoothing };
    let reader: Box<dyn BufRead> = if points == "-" {
        Box::new(io::stdin().lock())
    } else {
        Box::new(io::BufReader::new(File::open(points).map_err(io_err(points))?))
    };
    let stdout = io::stdout();
    let mut out = BufWriter::new(stdout.lock());
    let w = |e| Error::Io { path: "<stdout>".into(), source: e };
    writeln!(out, "x,y,z,phi,gx,gy,gz").map_err(w)?;
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(io_err(points))?;
        if let Some(p) = parse_point(&line, points, i + 1)? {
            let (phi, g) = value_and_gradient(&field, p);
            writeln!(out, "{},{},{},{},{},{},{}", p.x, p.y, p.z, phi, g.x, g.y, g.z).map_err(w)?;
        }
    }
    out.flush().map_err(w)
}

fn project(spline: &[f64], point: &[f64], params: &SmoothParams) -> Result<(), Error> {
    let mut a = [0.0; 9];
    a.copy_from_slice(spline);
    let s = QuadSpline::from_array(a);
    let x = Vec3::new(point[0], point[1], point[2]);
    if !s.is_finite() || !x.all_finite() {
        return Err(Error::NonFinite { op: "project" });
    }
    let c = projection_cubic(&s, x);
    let sol = solve_cubic_soft(c, params);
    println!("coefficients: {} {} {} {}", c[0], c[1], c[2], c[3]);
    println!("delta: {}", sol.delta);
    println!("delta_raw: {}", sol.delta_raw);
    println!("w_neg: {}", sol.w_neg);
    println!("w_pos: {}", sol.w_pos);
    println!("cubic_gate: {}", sol.cubic_gate);
    for (k, t) in sol.t_star.iter().enumerate() {
        let p = s.eval(*t);
        println!("t{}: {} point: {} {} {} distance: {}", k + 1, t, p.x, p.y, p.z, (p - x).norm());
    }
    Ok(())
}

fn contact_json(c: &ContactPoint) -> serde_json::Value {
    serde_json::json!({
        "source": c.source,
        "position": c.position,
        "depth": c.depth,
        "normal": c.normal,
        "activity": c.activity,
        "weights": c.weights,
        "jacobian": c.jacobian.iter().flatten().collect::<Vec<_>>(),
    })
}

fn manifold(scene: &Scene, a: &str, b: &str, format: Format) -> Result<(), Error> {
    let pair = scene.pair(a, b)?;
    let mut m: ContactManifold = build_manifold(
        pair.mesh,
        &pair.mesh_body.pose,
        pair.tree,
        &pair.sdf_body.pose,
        &pair.contact,
        &pair.smoothing,
    );
    m.mesh_body.clone_from(&pair.mesh_body.name);
    m.sdf_body.clone_from(&pair.sdf_body.name);
    let multi = m.multi_crossing_edges();
    if !multi.is_empty() {
        log::warn!("edges {multi:?} cross the SDF surface more than once; consider refining the mesh");
    }
    let stdout = io::stdout();
    let mut out = BufWriter::new(stdout.lock());
    let w = |e| Error::Io { path: "<stdout>".into(), source: e };
    match format {
        Format::Jsonl => {
            for c in &m.contacts {
                writeln!(out, "{}", contact_json(c)).map_err(w)?;
            }
        }
        Format::Json => {
            let doc = serde_json::json!({
                "mesh_body": m.mesh_body,
                "sdf_body": m.sdf_body,
                "mode": m.mode,
                "multi_crossing_edges": multi,
                "contacts": m.contacts.iter().map(contact_json).collect::<Vec<_>>(),
            });
            writeln!(out, "{}", serde_json::to_string_pretty(&doc).expect("serializable")).map_err(w)?;
        }
    }
    out.flush().map_err(w)
}
