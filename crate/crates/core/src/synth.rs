//! Seeded synthetic scenes: a corridor with boxes, pillars and spheres,
//! scanned from a row of viewpoints. Every scan is a subset of one shared
//! world lattice, so with zero noise the ground truth is exact.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::path::Path;

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_distr::{Distribution, Normal};

use crate::cloud::{Point3, PointCloud};
use crate::pcd::write_pcd_file;
use crate::problem::{ProblemError, SequenceSpec};
use crate::transform::{BenchRng, PerturbationBounds, Regime};

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub seed: u64,
    pub n_scans: usize,
    /// Lattice spacing of the sampled surfaces, meters.
    pub spacing: f64,
    /// Sensor range, meters.
    pub range: f64,
    /// Standard deviation of additive Gaussian noise per coordinate, meters.
    pub noise: f64,
    pub length: f64,
    pub width: f64,
    pub height: f64,
    pub n_objects: usize,
    pub overlap_threshold: f64,
    pub local_translation: [f64; 2],
    pub global_translation: [f64; 2],
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            n_scans: 12,
            spacing: 0.2,
            range: 5.0,
            noise: 0.0,
            length: 24.0,
            width: 6.0,
            height: 3.0,
            n_objects: 14,
            overlap_threshold: 0.25,
            local_translation: [0.0, 1.0],
            global_translation: [0.0, 3.0],
        }
    }
}

fn lattice(extent: f64, spacing: f64) -> impl Iterator<Item = f64> {
    let n = (extent / spacing).floor().max(1.0) as usize;
    let step = extent / n as f64;
    (0..n).map(move |i| (i as f64 + 0.5) * step)
}

/// Points on an axis-aligned rectangle spanned by `u` and `v` from `origin`.
fn rectangle(
    out: &mut Vec<Point3>,
    origin: Vector3<f64>,
    u: Vector3<f64>,
    v: Vector3<f64>,
    spacing: f64,
) {
    let (lu, lv) = (u.norm(), v.norm());
    let (du, dv) = (u / lu, v / lv);
    for a in lattice(lu, spacing) {
        for b in lattice(lv, spacing) {
            out.push(Point3::from(origin + du * a + dv * b));
        }
    }
}

fn sphere(out: &mut Vec<Point3>, center: Vector3<f64>, radius: f64, spacing: f64) {
    // Fibonacci lattice
    let n = ((4.0 * PI * radius * radius) / (spacing * spacing)).ceil().max(8.0) as usize;
    let golden = PI * (3.0 - 5f64.sqrt());
    for i in 0..n {
        let z = 1.0 - 2.0 * (i as f64 + 0.5) / n as f64;
        let r = (1.0 - z * z).sqrt();
        let theta = golden * i as f64;
        out.push(Point3::from(
            center + radius * Vector3::new(r * theta.cos(), r * theta.sin(), z),
        ));
    }
}

fn cylinder(out: &mut Vec<Point3>, base: Vector3<f64>, radius: f64, height: f64, spacing: f64) {
    let n = ((2.0 * PI * radius) / spacing).ceil().max(6.0) as usize;
    for h in lattice(height, spacing) {
        for k in 0..n {
            let a = 2.0 * PI * k as f64 / n as f64;
            out.push(Point3::from(
                base + Vector3::new(radius * a.cos(), radius * a.sin(), h),
            ));
        }
    }
}

/// Box resting on the floor, rotated by `yaw` about its vertical axis.
fn boxed(
    out: &mut Vec<Point3>,
    center: Vector3<f64>,
    size: Vector3<f64>,
    yaw: f64,
    spacing: f64,
) {
    let mut local = Vec::new();
    let (sx, sy, sz) = (size.x, size.y, size.z);
    let o = Vector3::new(-sx / 2.0, -sy / 2.0, 0.0);
    rectangle(&mut local, o, Vector3::new(sx, 0.0, 0.0), Vector3::new(0.0, 0.0, sz), spacing);
    rectangle(
        &mut local,
        o + Vector3::new(0.0, sy, 0.0),
        Vector3::new(sx, 0.0, 0.0),
        Vector3::new(0.0, 0.0, sz),
        spacing,
    );
    rectangle(&mut local, o, Vector3::new(0.0, sy, 0.0), Vector3::new(0.0, 0.0, sz), spacing);
    rectangle(
        &mut local,
        o + Vector3::new(sx, 0.0, 0.0),
        Vector3::new(0.0, sy, 0.0),
        Vector3::new(0.0, 0.0, sz),
        spacing,
    );
    rectangle(
        &mut local,
        o + Vector3::new(0.0, 0.0, sz),
        Vector3::new(sx, 0.0, 0.0),
        Vector3::new(0.0, sy, 0.0),
        spacing,
    );
    let (s, c) = yaw.sin_cos();
    out.extend(local.into_iter().map(|p| {
        Point3::new(
            center.x + c * p.x - s * p.y,
            center.y + s * p.x + c * p.y,
            center.z + p.z,
        )
    }));
}

/// Random furniture: boxes, pillars and spheres inside `[0, extent]` in x and y.
fn objects(out: &mut Vec<Point3>, rng: &mut BenchRng, count: usize, extent: [f64; 2], spacing: f64) {
    for k in 0..count {
        let margin = 0.8;
        let c = Vector3::new(
            rng.random_range(margin..extent[0] - margin),
            rng.random_range(margin..extent[1] - margin),
            0.0,
        );
        match k % 3 {
            0 => {
                let size = Vector3::new(
                    rng.random_range(0.4..1.4),
                    rng.random_range(0.4..1.2),
                    rng.random_range(0.5..1.8),
                );
                boxed(out, c, size, rng.random_range(0.0..PI), spacing);
            }
            1 => cylinder(out, c, rng.random_range(0.15..0.4), rng.random_range(1.0..2.5), spacing),
            _ => {
                let r = rng.random_range(0.25..0.6);
                sphere(out, c + Vector3::new(0.0, 0.0, r + rng.random_range(0.0..0.8)), r, spacing);
            }
        }
    }
}

/// The full corridor scene, sampled on a lattice.
pub fn corridor_world(cfg: &SynthConfig) -> PointCloud {
    let mut rng = BenchRng::seed_from_u64(cfg.seed);
    let (l, w, h, s) = (cfg.length, cfg.width, cfg.height, cfg.spacing);
    let mut pts = Vec::new();
    let zero = Vector3::zeros();
    rectangle(&mut pts, zero, Vector3::new(l, 0.0, 0.0), Vector3::new(0.0, w, 0.0), s);
    rectangle(&mut pts, zero, Vector3::new(l, 0.0, 0.0), Vector3::new(0.0, 0.0, h), s);
    rectangle(&mut pts, Vector3::new(0.0, w, 0.0), Vector3::new(l, 0.0, 0.0), Vector3::new(0.0, 0.0, h), s);
    rectangle(&mut pts, zero, Vector3::new(0.0, w, 0.0), Vector3::new(0.0, 0.0, h), s);
    rectangle(&mut pts, Vector3::new(l, 0.0, 0.0), Vector3::new(0.0, w, 0.0), Vector3::new(0.0, 0.0, h), s);
    objects(&mut pts, &mut rng, cfg.n_objects, [l, w], s);
    PointCloud::with_label(pts, "world")
}

/// Drop points closer than `min_dist` to an already kept point, in input order.
pub fn thin(points: &[Point3], min_dist: f64) -> Vec<Point3> {
    let key = |p: &Point3| {
        [
            (p.x / min_dist).floor() as i64,
            (p.y / min_dist).floor() as i64,
            (p.z / min_dist).floor() as i64,
        ]
    };
    let mut grid: HashMap<[i64; 3], Vec<usize>> = HashMap::new();
    let mut kept: Vec<Point3> = Vec::new();
    for p in points {
        let k = key(p);
        let mut clear = true;
        'search: for dx in -1..=1 {
            for dy in -1..=1 {
                for dz in -1..=1 {
                    if let Some(ids) = grid.get(&[k[0] + dx, k[1] + dy, k[2] + dz]) {
                        if ids.iter().any(|&i| (kept[i] - p).norm() < min_dist) {
                            clear = false;
                            break 'search;
                        }
                    }
                }
            }
        }
        if clear {
            grid.entry(k).or_default().push(kept.len());
            kept.push(*p);
        }
    }
    kept
}

fn random_unit<R: Rng + ?Sized>(rng: &mut R) -> Vector3<f64> {
    loop {
        let v = Vector3::new(
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        );
        let n = v.norm();
        if n > 1e-3 && n <= 1.0 {
            return v / n;
        }
    }
}

/// A free-standing object about two meters across: a box, a cylinder and a
/// sphere fused together, randomly sampled with no two points closer than
/// `spacing`.
pub fn compact_object(seed: u64, spacing: f64) -> PointCloud {
    let mut rng = BenchRng::seed_from_u64(seed);
    let density = 3.0 / (spacing * spacing);
    let mut raw = Vec::new();

    let size = Vector3::new(
        rng.random_range(0.8..1.3),
        rng.random_range(0.5..0.9),
        rng.random_range(0.4..0.8),
    );
    let faces = [
        (size.y * size.z, 0usize),
        (size.x * size.z, 1),
        (size.x * size.y, 2),
    ];
    for &(area, axis) in &faces {
        for side in [-0.5, 0.5] {
            for _ in 0..(area * density) as usize {
                let mut v = Vector3::new(
                    rng.random_range(-0.5..0.5),
                    rng.random_range(-0.5..0.5),
                    rng.random_range(-0.5..0.5),
                );
                v[axis] = side;
                raw.push(Point3::from(v.component_mul(&size)));
            }
        }
    }

    let (r, h) = (rng.random_range(0.15..0.3), rng.random_range(0.8..1.4));
    let base = Vector3::new(size.x / 2.0 + r * 0.5, rng.random_range(-0.2..0.2), -size.z / 2.0);
    for _ in 0..(2.0 * PI * r * h * density) as usize {
        let a = rng.random_range(0.0..2.0 * PI);
        raw.push(Point3::from(
            base + Vector3::new(r * a.cos(), r * a.sin(), rng.random_range(0.0..h)),
        ));
    }
    for _ in 0..(PI * r * r * density) as usize {
        let (a, q) = (rng.random_range(0.0..2.0 * PI), r * rng.random::<f64>().sqrt());
        raw.push(Point3::from(base + Vector3::new(q * a.cos(), q * a.sin(), h)));
    }

    let rs = rng.random_range(0.3..0.45);
    let center = Vector3::new(-size.x / 2.0, size.y / 2.0, size.z / 2.0 + rs * 0.5);
    for _ in 0..(4.0 * PI * rs * rs * density) as usize {
        raw.push(Point3::from(center + rs * random_unit(&mut rng)));
    }

    PointCloud::with_label(thin(&raw, spacing), "object")
}

/// Scanner positions along the corridor axis.
pub fn scan_positions(cfg: &SynthConfig) -> Vec<Point3> {
    let margin = 1.5;
    let n = cfg.n_scans.max(1);
    (0..n)
        .map(|k| {
            let t = if n > 1 { k as f64 / (n - 1) as f64 } else { 0.5 };
            Point3::new(
                margin + t * (cfg.length - 2.0 * margin),
                cfg.width / 2.0,
                1.2,
            )
        })
        .collect()
}

/// All world points within `range` of `position`, in world order.
pub fn scan(world: &PointCloud, position: &Point3, range: f64) -> PointCloud {
    PointCloud::new(
        world
            .iter()
            .filter(|p| (*p - position).norm() < range)
            .copied()
            .collect(),
    )
}

#[derive(Debug, Clone)]
pub struct SyntheticSequence {
    pub name: String,
    pub clouds: Vec<PointCloud>,
    pub positions: Vec<Point3>,
    pub config: SynthConfig,
}

impl SyntheticSequence {
    pub fn generate(name: &str, cfg: &SynthConfig) -> Self {
        let world = corridor_world(cfg);
        let positions = scan_positions(cfg);
        let mut noise_rng = BenchRng::seed_from_u64(cfg.seed ^ 0x6e6f_6973_65);
        let normal = Normal::new(0.0, cfg.noise.max(0.0)).expect("finite noise");
        let clouds = positions
            .iter()
            .enumerate()
            .map(|(k, pos)| {
                let mut c = scan(&world, pos, cfg.range);
                if cfg.noise > 0.0 {
                    for p in &mut c.points {
                        p.coords += Vector3::from_fn(|_, _| normal.sample(&mut noise_rng));
                    }
                }
                c.frame_label = scan_name(k);
                c
            })
            .collect();
        Self {
            name: name.to_owned(),
            clouds,
            positions,
            config: cfg.clone(),
        }
    }

    /// Sequence description of these clouds, stored as `dir/scan_XXX.pcd`.
    pub fn spec(&self, dir: &Path) -> SequenceSpec {
        SequenceSpec {
            name: self.name.clone(),
            clouds: (0..self.clouds.len())
                .map(|k| dir.join(format!("{}.pcd", scan_name(k))))
                .collect(),
            overlap_threshold: self.config.overlap_threshold,
            bounds_local: PerturbationBounds::with_translation(
                Regime::Local,
                self.config.local_translation[0],
                self.config.local_translation[1],
            ),
            bounds_global: PerturbationBounds::with_translation(
                Regime::Global,
                self.config.global_translation[0],
                self.config.global_translation[1],
            ),
            seed: self.config.seed,
        }
    }

    /// Write every scan as PCD plus `sequence.toml`; returns the spec.
    pub fn write(&self, dir: &Path) -> Result<SequenceSpec, ProblemError> {
        std::fs::create_dir_all(dir).map_err(|source| ProblemError::Io {
            path: dir.to_owned(),
            source,
        })?;
        let spec = self.spec(dir);
        for (cloud, path) in self.clouds.iter().zip(&spec.clouds) {
            write_pcd_file(cloud, path).map_err(|source| ProblemError::Cloud {
                path: path.clone(),
                source,
            })?;
        }
        spec.save(&dir.join("sequence.toml"))?;
        Ok(spec)
    }
}

pub fn scan_name(k: usize) -> String {
    format!("scan_{k:03}")
}
