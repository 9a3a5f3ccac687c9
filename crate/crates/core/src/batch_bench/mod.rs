//! Scene configuration, the batched manifold entry point, the throughput
//! benchmark and SDF grid export.

mod grid;
mod scene;

use std::sync::OnceLock;
use std::time::{Duration, Instant};

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::contact::{build_manifolds_lanes, ContactConfig, ContactManifold};
use crate::diffcore::{Lane4, Lanes, Vec3};
use crate::error::{Error, Result};
use crate::geometry::{GeometryTree, Pose};
use crate::mesh::TriangleMesh;
use crate::smoothops::SmoothParams;

pub use grid::{sample_grid, Grid, GRID_MAGIC, GRID_VERSION};
pub use scene::{load_scene, parse_scene, truncate_union, BenchSettings, Body, BodyPair, Scene, Shape};

/// Activity above which a contact counts as active in benchmark output.
pub const ACTIVE_THRESHOLD: f64 = 0.5;

/// Worker pool, capped by `CONTAX_THREADS` when set.
pub fn pool() -> &'static rayon::ThreadPool {
    static POOL: OnceLock<rayon::ThreadPool> = OnceLock::new();
    POOL.get_or_init(|| {
        let mut b = rayon::ThreadPoolBuilder::new();
        if let Some(n) = std::env::var("CONTAX_THREADS").ok().and_then(|s| s.parse::<usize>().ok()) {
            if n > 0 {
                b = b.num_threads(n);
            }
        }
        b.build().expect("thread pool")
    })
}

/// Manifolds for each `(mesh pose, SDF pose)`. Configurations are packed four
/// to a SIMD lane group; a lone configuration runs the same kernel broadcast,
/// so every output is bitwise equal to [`crate::contact::build_manifold`].
pub fn run_batch(pair: &BodyPair<'_>, poses: &[(Pose, Pose)]) -> Result<Vec<ContactManifold>> {
    let mut out = run_batch_raw(pair.mesh, pair.tree, &pair.contact, &pair.smoothing, poses)?;
    for m in &mut out {
        m.mesh_body.clone_from(&pair.mesh_body.name);
        m.sdf_body.clone_from(&pair.sdf_body.name);
    }
    Ok(out)
}

/// [`run_batch`] without body names.
pub fn run_batch_raw(
    mesh: &TriangleMesh,
    tree: &GeometryTree,
    cfg: &ContactConfig,
    params: &SmoothParams,
    poses: &[(Pose, Pose)],
) -> Result<Vec<ContactManifold>> {
    if poses.is_empty() {
        return Err(Error::EmptyInput { op: "run_batch" });
    }
    cfg.validate("contact")?;
    let w = Lane4::WIDTH;
    if poses.len() <= w {
        return Ok(build_manifolds_lanes::<Lane4>(mesh, tree, poses, cfg, params));
    }
    let chunks: Vec<Vec<ContactManifold>> = pool().install(|| {
        poses
            .par_chunks(w)
            .map(|c| build_manifolds_lanes::<Lane4>(mesh, tree, c, cfg, params))
            .collect()
    });
    Ok(chunks.into_iter().flatten().collect())
}

/// Uniform rotation by the subgroup algorithm (Shoemake).
pub fn random_rotation(rng: &mut impl RngExt) -> [f64; 4] {
    let (u1, u2, u3): (f64, f64, f64) = (rng.random(), rng.random(), rng.random());
    let tau = std::f64::consts::TAU;
    let (a, b) = ((1.0 - u1).sqrt(), u1.sqrt());
    [b * (tau * u3).cos(), a * (tau * u2).sin(), a * (tau * u2).cos(), b * (tau * u3).sin()]
}

/// `n` configurations: the SDF body stays at its scene pose and the mesh body
/// gets a uniform rotation and a translation drawn from the settings' box,
/// both relative to the SDF body.
pub fn random_poses(pair: &BodyPair<'_>, settings: &BenchSettings, n: usize, rng: &mut impl RngExt) -> Vec<(Pose, Pose)> {
    let (lo, hi) = (settings.translation_min, settings.translation_max);
    let base = pair.sdf_body.pose;
    (0..n)
        .map(|_| {
            let t = Vec3::from_array([0, 1, 2].map(|k| {
                let (a, b) = (lo.get(k), hi.get(k));
                if a < b {
                    rng.random_range(a..b)
                } else {
                    a
                }
            }));
            let local = Pose::from_quaternion(random_rotation(rng), t).expect("unit quaternion");
            (base.compose(&local), base)
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TrialRow {
    pub complexity: usize,
    pub batch_size: usize,
    pub trial: usize,
    pub total_seconds: f64,
    pub per_item_seconds: f64,
    pub active_contacts: usize,
}

/// Median over the trials of one `(complexity, batch size)` cell.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BenchRecord {
    pub geometry_complexity: usize,
    pub batch_size: usize,
    pub total_time: f64,
    pub per_item_time: f64,
    pub per_item_min: f64,
    pub per_item_max: f64,
    pub contacts_active: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BenchReport {
    pub seed: u64,
    pub records: Vec<BenchRecord>,
    pub trials: Vec<TrialRow>,
    /// Whether per-item time never increases with batch size, per complexity.
    pub per_item_monotone: bool,
}

impl BenchReport {
    pub const CSV_HEADER: &'static str =
        "seed,complexity,batch_size,trial,total_seconds,per_item_seconds,active_contacts";

    pub fn to_csv(&self) -> String {
        let mut s = String::from(Self::CSV_HEADER);
        s.push('\n');
        for r in &self.trials {
            s.push_str(&format!(
                "{},{},{},{},{:.9e},{:.9e},{}\n",
                self.seed, r.complexity, r.batch_size, r.trial, r.total_seconds, r.per_item_seconds, r.active_contacts
            ));
        }
        s
    }

    pub fn record(&self, complexity: usize, batch_size: usize) -> Option<&BenchRecord> {
        self.records
            .iter()
            .find(|r| r.geometry_complexity == complexity && r.batch_size == batch_size)
    }
}

pub fn median(xs: &[f64]) -> f64 {
    assert!(!xs.is_empty());
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Times `work` on each input after `warmups` untimed runs. Only the calls to
/// `work` are inside the timed region.
pub fn time_trials<I, O>(inputs: &[I], warmups: usize, mut work: impl FnMut(&I) -> O) -> (Vec<Duration>, Vec<O>) {
    for i in inputs.iter().cycle().take(warmups) {
        std::hint::black_box(work(i));
    }
    let mut times = Vec::with_capacity(inputs.len());
    let mut outs = Vec::with_capacity(inputs.len());
    for i in inputs {
        let t0 = Instant::now();
        let o = std::hint::black_box(work(i));
        times.push(t0.elapsed());
        outs.push(o);
    }
    (times, outs)
}

/// Runs the benchmark on the scene's default pair.
pub fn bench(scene: &Scene) -> Result<BenchReport> {
    bench_pair(&scene.default_pair()?, &scene.bench)
}

pub fn bench_pair(pair: &BodyPair<'_>, settings: &BenchSettings) -> Result<BenchReport> {
    if settings.batch_sizes.is_empty() || settings.trials == 0 || settings.queries == 0 {
        return Err(Error::param("bench", "batch sizes, trials and queries must be non-empty"));
    }
    let full = pair.tree.superquadric_count();
    let levels = if settings.complexity_levels.is_empty() {
        vec![full]
    } else {
        settings.complexity_levels.clone()
    };
    let mut records = Vec::new();
    let mut trials = Vec::new();
    let mut monotone = true;
    for (li, &level) in levels.iter().enumerate() {
        let tree = if level == full { pair.tree.clone() } else { truncate_union(pair.tree, level)? };
        let mut last = f64::INFINITY;
        for (bi, &b) in settings.batch_sizes.iter().enumerate() {
            let mut rng = ChaCha8Rng::seed_from_u64(settings.seed ^ ((li as u64) << 32) ^ bi as u64);
            let n_inputs = settings.warmups.max(1) + settings.trials;
            let inputs: Vec<Vec<Vec<(Pose, Pose)>>> = (0..n_inputs)
                .map(|_| (0..settings.queries).map(|_| random_poses(pair, settings, b, &mut rng)).collect())
                .collect();
            let (warm, timed) = inputs.split_at(n_inputs - settings.trials);
            for q in warm.iter().take(settings.warmups) {
                for poses in q {
                    std::hint::black_box(run_batch_raw(pair.mesh, &tree, &pair.contact, &pair.smoothing, poses)?);
                }
            }
            let (times, outs) = time_trials(timed, 0, |q| {
                q.iter()
                    .map(|poses| run_batch_raw(pair.mesh, &tree, &pair.contact, &pair.smoothing, poses))
                    .collect::<Result<Vec<_>>>()
            });
            let mut per_item = Vec::new();
            let mut totals = Vec::new();
            let mut actives = Vec::new();
            for (t, (dur, out)) in times.iter().zip(outs).enumerate() {
                let active = out?
                    .iter()
                    .flatten()
                    .map(|m| m.active(ACTIVE_THRESHOLD).count())
                    .sum::<usize>();
                let total = dur.as_secs_f64();
                let p = total / (b * settings.queries) as f64;
                trials.push(TrialRow {
                    complexity: level,
                    batch_size: b,
                    trial: t,
                    total_seconds: total,
                    per_item_seconds: p,
                    active_contacts: active,
                });
                per_item.push(p);
                totals.push(total);
                actives.push(active);
            }
            let med = median(&per_item);
            monotone &= med <= last;
            last = med;
            let mut sorted = actives.clone();
            sorted.sort_unstable();
            records.push(BenchRecord {
                geometry_complexity: level,
                batch_size: b,
                total_time: median(&totals),
                per_item_time: med,
                per_item_min: per_item.iter().copied().fold(f64::INFINITY, f64::min),
                per_item_max: per_item.iter().copied().fold(0.0, f64::max),
                contacts_active: sorted[sorted.len() / 2],
            });
        }
    }
    if !monotone {
        log::info!("per-item time is not monotone in batch size");
    }
    Ok(BenchReport {
        seed: settings.seed,
        records,
        trials,
        per_item_monotone: monotone,
    })
}
