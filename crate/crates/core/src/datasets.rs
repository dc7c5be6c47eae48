//! Synthetic manifolds and CSV point-cloud IO.

use std::f64::consts::PI;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use ndarray::{Array1, Array2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// `N x n` ambient points, optionally with the manifold parameters that
/// generated them.
#[derive(Clone, Debug, PartialEq)]
pub struct PointCloud {
    pub points: Array2<f64>,
    pub intrinsic: Option<Array2<f64>>,
    pub name: String,
}

impl PointCloud {
    pub fn new(points: Array2<f64>, intrinsic: Option<Array2<f64>>, name: impl Into<String>) -> Result<Self> {
        if points.nrows() == 0 {
            return Err(Error::Degenerate("point cloud has no points".into()));
        }
        if let Some((row, _)) = points
            .rows()
            .into_iter()
            .enumerate()
            .find(|(_, r)| r.iter().any(|v| !v.is_finite()))
        {
            return Err(Error::Degenerate(format!("non-finite coordinate in point {row}")));
        }
        if let Some(m) = &intrinsic {
            if m.nrows() != points.nrows() {
                return Err(crate::error::shape_err(
                    "intrinsic coordinates",
                    points.nrows(),
                    m.nrows(),
                ));
            }
        }
        Ok(Self {
            points,
            intrinsic,
            name: name.into(),
        })
    }

    pub fn len(&self) -> usize {
        self.points.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.points.nrows() == 0
    }

    pub fn dim(&self) -> usize {
        self.points.ncols()
    }

    /// Subtracts the per-coordinate mean in place and returns it. Scale is
    /// left alone so distances keep their meaning.
    pub fn center(&mut self) -> Array1<f64> {
        let mean = self.points.mean_axis(Axis(0)).expect("non-empty cloud");
        self.points -= &mean;
        mean
    }

    /// Writes one point per row, intrinsic columns appended.
    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        self.write_csv(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        for (i, row) in self.points.rows().into_iter().enumerate() {
            let mut first = true;
            let extra = self.intrinsic.as_ref().map(|m| m.row(i));
            for v in row.iter().chain(extra.iter().flat_map(|r| r.iter())) {
                if !first {
                    w.write_all(b",")?;
                }
                first = false;
                // shortest representation that round-trips exactly
                write!(w, "{v:?}")?;
            }
            w.write_all(b"\n")?;
        }
        Ok(())
    }
}

pub const SWISS_ROLL_T_MIN: f64 = 1.5 * PI;
pub const SWISS_ROLL_T_MAX: f64 = 4.5 * PI;
pub const SWISS_ROLL_HEIGHT: f64 = 21.0;

/// Consecutive rejections after which sampling gives up.
const MAX_REJECTIONS: usize = 100_000;

/// A disk removed from the Swiss Roll's `(t, h)` parameter rectangle.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Hole {
    pub center: [f64; 2],
    pub radius: f64,
}

impl Hole {
    /// Hole centered at fractions `(ft, fh)` of the parameter rectangle.
    pub fn at_fraction(ft: f64, fh: f64, radius: f64) -> Self {
        Self {
            center: [
                SWISS_ROLL_T_MIN + ft * (SWISS_ROLL_T_MAX - SWISS_ROLL_T_MIN),
                fh * SWISS_ROLL_HEIGHT,
            ],
            radius,
        }
    }

    /// Two disks of radius 0.15 x the rectangle diagonal at (1/3, 1/3) and
    /// (2/3, 2/3).
    pub fn default_pair() -> [Hole; 2] {
        let diag = (SWISS_ROLL_T_MAX - SWISS_ROLL_T_MIN).hypot(SWISS_ROLL_HEIGHT);
        let r = 0.15 * diag;
        [
            Hole::at_fraction(1.0 / 3.0, 1.0 / 3.0, r),
            Hole::at_fraction(2.0 / 3.0, 2.0 / 3.0, r),
        ]
    }

    fn contains(&self, t: f64, h: f64) -> bool {
        (t - self.center[0]).hypot(h - self.center[1]) < self.radius
    }
}

/// Maps Swiss Roll parameters to `(t cos t, h, t sin t)`.
pub fn swiss_roll_point(t: f64, h: f64) -> [f64; 3] {
    [t * t.cos(), h, t * t.sin()]
}

/// Samples `(t, h)` uniformly on `[1.5pi, 4.5pi] x [0, 21]`, rejecting
/// samples inside any hole.
pub fn swiss_roll(n_points: usize, holes: &[Hole], seed: u64) -> Result<PointCloud> {
    if n_points == 0 {
        return Err(Error::Parameter {
            name: "n_points",
            reason: "must be at least 1".into(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut points = Array2::zeros((n_points, 3));
    let mut intrinsic = Array2::zeros((n_points, 2));
    for i in 0..n_points {
        let mut attempts = 0;
        let (t, h) = loop {
            let t = rng.gen_range(SWISS_ROLL_T_MIN..=SWISS_ROLL_T_MAX);
            let h = rng.gen_range(0.0..=SWISS_ROLL_HEIGHT);
            if !holes.iter().any(|hole| hole.contains(t, h)) {
                break (t, h);
            }
            attempts += 1;
            if attempts >= MAX_REJECTIONS {
                return Err(Error::GenerationExhausted { attempts });
            }
        };
        let p = swiss_roll_point(t, h);
        points.row_mut(i).assign(&Array1::from(p.to_vec()));
        intrinsic[[i, 0]] = t;
        intrinsic[[i, 1]] = h;
    }
    PointCloud::new(points, Some(intrinsic), "swiss-roll")
}

/// Point at parameter `s` on a helix with `windings` turns around a torus.
pub fn toroidal_helix_point(s: f64, major_radius: f64, minor_radius: f64, windings: usize) -> [f64; 3] {
    let w = windings as f64;
    let ring = major_radius + minor_radius * (w * s).cos();
    [ring * s.cos(), ring * s.sin(), minor_radius * (w * s).sin()]
}

/// `s` is drawn uniformly from `[0, 2pi)` with one sample per equal-width
/// stratum, which keeps the curve free of large sampling gaps.
pub fn toroidal_helix(
    n_points: usize,
    major_radius: f64,
    minor_radius: f64,
    windings: usize,
    seed: u64,
) -> Result<PointCloud> {
    if n_points == 0 {
        return Err(Error::Parameter {
            name: "n_points",
            reason: "must be at least 1".into(),
        });
    }
    for (name, v) in [("major_radius", major_radius), ("minor_radius", minor_radius)] {
        if !(v.is_finite() && v > 0.0) {
            return Err(Error::Parameter {
                name,
                reason: format!("must be positive, got {v}"),
            });
        }
    }
    if windings == 0 {
        return Err(Error::Parameter {
            name: "n_windings",
            reason: "must be at least 1".into(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut points = Array2::zeros((n_points, 3));
    let mut intrinsic = Array2::zeros((n_points, 1));
    let width = 2.0 * PI / n_points as f64;
    for i in 0..n_points {
        let s = ((i as f64 + rng.gen::<f64>()) * width).min(2.0 * PI * (1.0 - f64::EPSILON));
        let p = toroidal_helix_point(s, major_radius, minor_radius, windings);
        points.row_mut(i).assign(&Array1::from(p.to_vec()));
        intrinsic[[i, 0]] = s;
    }
    PointCloud::new(points, Some(intrinsic), "toroidal-helix")
}

/// Reads a comma-separated table. `#` lines are comments. When
/// `has_intrinsic` is set, the last `intrinsic_dims` columns become the
/// intrinsic coordinates.
pub fn load_csv(path: &Path, has_intrinsic: bool, intrinsic_dims: usize) -> Result<PointCloud> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .comment(Some(b'#'))
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::Parse {
            row: 0,
            reason: e.to_string(),
        })?;
    let mut values = Vec::new();
    let mut width = None;
    let mut rows = 0;
    for record in reader.records() {
        let record = record.map_err(|e| Error::Parse {
            row: e.position().map_or(0, |p| p.line() as usize),
            reason: e.to_string(),
        })?;
        let row = record.position().map_or(rows + 1, |p| p.line() as usize);
        match width {
            None => width = Some(record.len()),
            Some(w) if w != record.len() => {
                return Err(Error::Parse {
                    row,
                    reason: format!("expected {w} columns, found {}", record.len()),
                })
            }
            _ => {}
        }
        for cell in record.iter() {
            let v: f64 = cell.parse().map_err(|_| Error::Parse {
                row,
                reason: format!("non-numeric cell {cell:?}"),
            })?;
            values.push(v);
        }
        rows += 1;
    }
    let width = width.ok_or_else(|| Error::Parse {
        row: 0,
        reason: "no data rows".into(),
    })?;
    let table = Array2::from_shape_vec((rows, width), values).expect("rectangular by construction");
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    if has_intrinsic {
        if intrinsic_dims == 0 || intrinsic_dims >= width {
            return Err(Error::Parameter {
                name: "intrinsic_dims",
                reason: format!("need 1 <= intrinsic_dims < {width} columns"),
            });
        }
        let split = width - intrinsic_dims;
        let points = table.slice(ndarray::s![.., ..split]).to_owned();
        let intrinsic = table.slice(ndarray::s![.., split..]).to_owned();
        PointCloud::new(points, Some(intrinsic), name)
    } else {
        PointCloud::new(table, None, name)
    }
}
