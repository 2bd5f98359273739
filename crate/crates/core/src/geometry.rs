//! Random network configurations on the unit-area sphere.
//!
//! Each node owns a uniformly oriented great circle carrying `side = sqrt(n)`
//! equidistant lattice points. For every unordered pair of nodes one of the
//! two circle intersections is picked at random; the pair can only talk when
//! both nodes sit on the lattice points nearest that intersection.

use std::f64::consts::{FRAC_PI_2, PI, TAU};

use nalgebra::Vector3;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::error::ConfigError;

/// Radius of the sphere with unit surface area, `1 / (2 sqrt(pi))`.
pub const RADIUS: f64 = 0.282_094_791_773_878_14;

/// Cross products with a smaller norm than this mean the two circles coincide.
const COINCIDENT_EPS: f64 = 1e-9;

/// A point on the sphere of radius [`RADIUS`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpherePoint(Vector3<f64>);

impl SpherePoint {
    /// Projects a non-zero direction onto the sphere.
    pub fn from_direction(dir: Vector3<f64>) -> Self {
        SpherePoint(dir.normalize() * RADIUS)
    }

    pub fn coords(&self) -> &Vector3<f64> {
        &self.0
    }

    /// Unit vector pointing at this point.
    pub fn unit(&self) -> Vector3<f64> {
        self.0 / RADIUS
    }

    pub fn antipode(&self) -> Self {
        SpherePoint(-self.0)
    }
}

/// Great-circle distance between two points on the sphere.
pub fn geodesic_distance(p: &SpherePoint, q: &SpherePoint) -> f64 {
    let cross = p.0.cross(&q.0).norm();
    let dot = p.0.dot(&q.0);
    RADIUS * cross.atan2(dot)
}

/// One node's track: a great circle with a lattice of `side` points.
#[derive(Debug, Clone, PartialEq)]
pub struct GreatCircle {
    pole: Vector3<f64>,
    phase: f64,
    frame: [Vector3<f64>; 2],
    side: usize,
}

impl GreatCircle {
    /// Builds the circle whose plane is perpendicular to `pole_dir`.
    ///
    /// The in-plane frame is taken from cross products with `e_z`, or with
    /// `e_x` when the pole is within `1e-9` of the z axis.
    pub fn new(pole_dir: Vector3<f64>, phase: f64, side: usize) -> Self {
        assert!(side >= 1, "lattice needs at least one point");
        let pole = pole_dir.normalize();
        let reference = if pole.z.abs() > 1.0 - 1e-9 {
            Vector3::x()
        } else {
            Vector3::z()
        };
        let f0 = pole.cross(&reference).normalize();
        let f1 = pole.cross(&f0);
        GreatCircle {
            pole,
            phase: phase.rem_euclid(TAU),
            frame: [f0, f1],
            side,
        }
    }

    /// Unit pole vector.
    pub fn pole(&self) -> &Vector3<f64> {
        &self.pole
    }

    pub fn pole_point(&self) -> SpherePoint {
        SpherePoint(self.pole * RADIUS)
    }

    pub fn phase(&self) -> f64 {
        self.phase
    }

    pub fn frame(&self) -> &[Vector3<f64>; 2] {
        &self.frame
    }

    pub fn side(&self) -> usize {
        self.side
    }

    /// Angular spacing of the lattice.
    pub fn spacing_angle(&self) -> f64 {
        TAU / self.side as f64
    }

    /// The point at in-plane angle `angle` measured from frame vector 0.
    pub fn point_at_angle(&self, angle: f64) -> SpherePoint {
        let [f0, f1] = &self.frame;
        SpherePoint((f0 * angle.cos() + f1 * angle.sin()) * RADIUS)
    }

    /// Lattice index whose point is nearest to `p` (projected into the plane).
    pub fn nearest_lattice_index(&self, p: &SpherePoint) -> usize {
        let [f0, f1] = &self.frame;
        let angle = p.0.dot(f1).atan2(p.0.dot(f0));
        let steps = ((angle - self.phase) / self.spacing_angle()).round() as i64;
        steps.rem_euclid(self.side as i64) as usize
    }
}

/// Position of lattice point `k` on `circle`.
///
/// Panics if `k >= circle.side()`.
pub fn lattice_position(circle: &GreatCircle, k: usize) -> SpherePoint {
    assert!(k < circle.side, "lattice index {k} out of range 0..{}", circle.side);
    circle.point_at_angle(circle.phase + circle.spacing_angle() * k as f64)
}

/// The two intersection points of two circles, or `None` if they coincide.
pub fn intersections(a: &GreatCircle, b: &GreatCircle) -> Option<[SpherePoint; 2]> {
    let cross = a.pole.cross(&b.pole);
    if cross.norm() < COINCIDENT_EPS {
        return None;
    }
    let p = SpherePoint::from_direction(cross);
    Some([p, p.antipode()])
}

/// Precomputed form of [`circle_intersects_disk`] for a fixed radius.
#[derive(Debug, Clone, Copy)]
pub struct DiskTest {
    sin_theta: f64,
    always: bool,
}

impl DiskTest {
    pub fn new(radius_geodesic: f64) -> Self {
        let theta = radius_geodesic / RADIUS;
        DiskTest {
            sin_theta: theta.min(FRAC_PI_2).sin(),
            always: theta >= FRAC_PI_2,
        }
    }

    /// Fraction of the sphere's poles whose circle meets the disk.
    pub fn hit_probability(&self) -> f64 {
        if self.always {
            1.0
        } else {
            self.sin_theta
        }
    }

    /// `center_unit` must be a unit vector.
    #[inline]
    pub fn hits(&self, circle: &GreatCircle, center_unit: &Vector3<f64>) -> bool {
        // |angle(pole, center) - pi/2| <= theta  <=>  |cos angle| <= sin theta
        self.always || circle.pole.dot(center_unit).abs() <= self.sin_theta
    }
}

/// Whether `circle` passes through the geodesic disk around `center`.
///
/// A circle meets the disk iff its pole lies in the band of half-width
/// `radius_geodesic` around the disk center's own great circle. Disks with
/// radius at least a quarter circumference meet every circle.
pub fn circle_intersects_disk(circle: &GreatCircle, center: &SpherePoint, radius_geodesic: f64) -> bool {
    DiskTest::new(radius_geodesic).hits(circle, &center.unit())
}

/// Multipliers of the expected circle count that bound a typical disk.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TypicalityBand {
    pub low: f64,
    pub high: f64,
}

impl Default for TypicalityBand {
    fn default() -> Self {
        TypicalityBand { low: 0.5, high: 2.0 }
    }
}

impl TypicalityBand {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(self.low > 0.0 && self.high > self.low && self.high.is_finite()) {
            return Err(ConfigError::Invalid {
                key: "band_low".into(),
                reason: format!("need 0 < band_low < band_high, got {} and {}", self.low, self.high),
            });
        }
        Ok(())
    }
}

/// Geometry shared by one unordered node pair `(i, j)` with `i < j`.
#[derive(Debug, Clone, PartialEq)]
pub struct PairGeometry {
    pub pair: (usize, usize),
    /// The chosen intersection; also the center of the pair's disk.
    pub z: SpherePoint,
    /// Lattice index on circle `i` nearest `z`.
    pub a: usize,
    /// Lattice index on circle `j` nearest `z`.
    pub b: usize,
}

/// Circle counts for every pair disk and the resulting verdict.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TypicalityReport {
    pub counts: Vec<u32>,
    /// Expected number of other circles crossing a disk.
    pub expected: f64,
    pub low: f64,
    pub high: f64,
    pub typical: bool,
}

impl TypicalityReport {
    /// `[min, max, mean]` of the per-pair counts.
    pub fn count_summary(&self) -> [f64; 3] {
        if self.counts.is_empty() {
            return [0.0, 0.0, 0.0];
        }
        let min = *self.counts.iter().min().unwrap() as f64;
        let max = *self.counts.iter().max().unwrap() as f64;
        let mean = self.counts.iter().map(|&c| c as f64).sum::<f64>() / self.counts.len() as f64;
        [min, max, mean]
    }
}

/// A node's membership in its source-destination pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Role {
    pub pair: usize,
    pub is_source: bool,
}

/// JSON summary of a configuration.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConfigSummary {
    pub n: usize,
    pub delta: f64,
    pub seed: u64,
    pub typical: bool,
    pub counts: [f64; 3],
}

/// A sampled (or hand-built) network instance. Immutable once built.
#[derive(Debug, Clone)]
pub struct Configuration {
    n: usize,
    side: usize,
    delta: f64,
    circles: Vec<GreatCircle>,
    pairs: Vec<PairGeometry>,
    sd_pairs: Vec<(usize, usize)>,
    roles: Vec<Role>,
    report: TypicalityReport,
    lattice: Vec<Vec<SpherePoint>>,
    // meet[i][k] lists (j, position j must hold) for the pairs where node i's
    // meeting point is lattice index k.
    meet: Vec<Vec<Vec<(usize, usize)>>>,
}

/// Side length of the lattice torus for `n` nodes.
pub fn lattice_side(n: usize) -> Result<usize, ConfigError> {
    let side = (n as f64).sqrt().round() as usize;
    if n < 4 || n % 2 != 0 || side * side != n {
        return Err(ConfigError::NodeCount(n));
    }
    Ok(side)
}

/// Geodesic radius of every pair disk, `(2 + delta) sqrt(pi / n)`.
pub fn disk_radius(n: usize, delta: f64) -> f64 {
    (2.0 + delta) * (PI / n as f64).sqrt()
}

fn check_delta(delta: f64) -> Result<(), ConfigError> {
    if !(delta > 0.0 && delta.is_finite()) {
        return Err(ConfigError::Invalid {
            key: "delta".into(),
            reason: format!("delta must be positive, got {delta}"),
        });
    }
    Ok(())
}

/// Samples a configuration with the default typicality band.
pub fn sample_configuration<R: Rng + ?Sized>(n: usize, delta: f64, rng: &mut R) -> Result<Configuration, ConfigError> {
    sample_configuration_with_band(n, delta, TypicalityBand::default(), rng)
}

/// Samples i.i.d. uniform circles and phases, random intersection choices and
/// a uniform random source-destination matching.
pub fn sample_configuration_with_band<R: Rng + ?Sized>(
    n: usize,
    delta: f64,
    band: TypicalityBand,
    rng: &mut R,
) -> Result<Configuration, ConfigError> {
    let side = lattice_side(n)?;
    check_delta(delta)?;
    band.validate()?;

    let mut circles: Vec<GreatCircle> = Vec::with_capacity(n);
    while circles.len() < n {
        let dir = Vector3::new(
            rng.sample::<f64, _>(StandardNormal),
            rng.sample::<f64, _>(StandardNormal),
            rng.sample::<f64, _>(StandardNormal),
        );
        if dir.norm() < 1e-12 {
            continue;
        }
        let phase = rng.gen_range(0.0..TAU);
        let candidate = GreatCircle::new(dir, phase, side);
        if let Some(k) = circles.iter().position(|c| intersections(c, &candidate).is_none()) {
            log::warn!("pole of node {} coincides with node {k}; resampling", circles.len());
            continue;
        }
        circles.push(candidate);
    }

    let mut nodes: Vec<usize> = (0..n).collect();
    nodes.shuffle(rng);
    let sd_pairs: Vec<(usize, usize)> = nodes.chunks(2).map(|c| (c[0], c[1])).collect();

    Ok(Configuration::build(delta, circles, sd_pairs, band, &mut || rng.gen::<bool>()))
}

impl Configuration {
    /// Assembles a configuration from explicit circles and pairing.
    ///
    /// `pick_antipode` is called once per pair, in pair order, to choose
    /// between the two intersections. Coincident circles get the point at
    /// angle zero of the first circle as their meeting point.
    pub fn build(
        delta: f64,
        circles: Vec<GreatCircle>,
        sd_pairs: Vec<(usize, usize)>,
        band: TypicalityBand,
        pick_antipode: &mut dyn FnMut() -> bool,
    ) -> Configuration {
        let n = circles.len();
        let side = circles.first().map(|c| c.side).unwrap_or(0);
        assert!(circles.iter().all(|c| c.side == side), "all circles need the same lattice");

        let mut roles = vec![Role { pair: usize::MAX, is_source: false }; n];
        for (p, &(s, d)) in sd_pairs.iter().enumerate() {
            roles[s] = Role { pair: p, is_source: true };
            roles[d] = Role { pair: p, is_source: false };
        }
        assert!(roles.iter().all(|r| r.pair != usize::MAX), "pairs must cover every node");

        let mut pairs = Vec::with_capacity(n * n.saturating_sub(1) / 2);
        for i in 0..n {
            for j in (i + 1)..n {
                let antipode = pick_antipode();
                let z = match intersections(&circles[i], &circles[j]) {
                    Some([p, q]) => {
                        if antipode {
                            q
                        } else {
                            p
                        }
                    }
                    None => circles[i].point_at_angle(0.0),
                };
                pairs.push(PairGeometry {
                    pair: (i, j),
                    z,
                    a: circles[i].nearest_lattice_index(&z),
                    b: circles[j].nearest_lattice_index(&z),
                });
            }
        }

        let lattice = circles
            .iter()
            .map(|c| (0..side).map(|k| lattice_position(c, k)).collect())
            .collect();

        let mut meet = vec![vec![Vec::new(); side]; n];
        for pg in &pairs {
            let (i, j) = pg.pair;
            meet[i][pg.a].push((j, pg.b));
            meet[j][pg.b].push((i, pg.a));
        }
        for buckets in &mut meet {
            for bucket in buckets.iter_mut() {
                bucket.sort_unstable();
            }
        }

        let mut cfg = Configuration {
            n,
            side,
            delta,
            circles,
            pairs,
            sd_pairs,
            roles,
            report: TypicalityReport {
                counts: Vec::new(),
                expected: 0.0,
                low: 0.0,
                high: 0.0,
                typical: false,
            },
            lattice,
            meet,
        };
        cfg.report = typicality_report(&cfg, band);
        cfg
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn side(&self) -> usize {
        self.side
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn circles(&self) -> &[GreatCircle] {
        &self.circles
    }

    pub fn pairs(&self) -> &[PairGeometry] {
        &self.pairs
    }

    pub fn sd_pairs(&self) -> &[(usize, usize)] {
        &self.sd_pairs
    }

    pub fn role(&self, node: usize) -> Role {
        self.roles[node]
    }

    pub fn typical(&self) -> bool {
        self.report.typical
    }

    pub fn typicality(&self) -> &TypicalityReport {
        &self.report
    }

    pub fn disk_radius(&self) -> f64 {
        disk_radius(self.n, self.delta)
    }

    /// Index of the unordered pair `{i, j}` in [`Configuration::pairs`].
    pub fn pair_index(&self, i: usize, j: usize) -> usize {
        assert!(i != j && i < self.n && j < self.n);
        let (i, j) = if i < j { (i, j) } else { (j, i) };
        // rows 0..i contribute (n-1) + (n-2) + ... + (n-i) entries
        i * (2 * self.n - i - 1) / 2 + (j - i - 1)
    }

    pub fn pair(&self, i: usize, j: usize) -> &PairGeometry {
        &self.pairs[self.pair_index(i, j)]
    }

    /// Positions `(pos_i, pos_j)` at which `i` and `j` are neighbors.
    pub fn meeting_positions(&self, i: usize, j: usize) -> (usize, usize) {
        let pg = self.pair(i, j);
        if pg.pair.0 == i {
            (pg.a, pg.b)
        } else {
            (pg.b, pg.a)
        }
    }

    /// Cached location of lattice point `k` on node `node`'s circle.
    #[inline]
    pub fn lattice_point(&self, node: usize, k: usize) -> &SpherePoint {
        &self.lattice[node][k]
    }

    /// Nodes that meet `node` when it sits at lattice index `k`, each with the
    /// position it must hold. Sorted by node id.
    #[inline]
    pub fn meeting_candidates(&self, node: usize, k: usize) -> &[(usize, usize)] {
        &self.meet[node][k]
    }

    pub fn summary(&self, seed: u64) -> ConfigSummary {
        ConfigSummary {
            n: self.n,
            delta: self.delta,
            seed,
            typical: self.report.typical,
            counts: self.report.count_summary(),
        }
    }
}

/// Counts, for every pair disk, the other circles passing through it, and
/// checks every count against `band` times the expected count
/// `(n - 2) * P(random circle meets a disk)`.
pub fn typicality_report(config: &Configuration, band: TypicalityBand) -> TypicalityReport {
    let n = config.n;
    let test = DiskTest::new(config.disk_radius());
    let expected = n.saturating_sub(2) as f64 * test.hit_probability();
    let (low, high) = (band.low * expected, band.high * expected);
    let counts: Vec<u32> = config
        .pairs
        .iter()
        .map(|pg| {
            let center = pg.z.unit();
            let (i, j) = pg.pair;
            config
                .circles
                .iter()
                .enumerate()
                .filter(|&(k, c)| k != i && k != j && test.hits(c, &center))
                .count() as u32
        })
        .collect();
    let typical = counts.iter().all(|&c| (c as f64) >= low && (c as f64) <= high);
    TypicalityReport {
        counts,
        expected,
        low,
        high,
        typical,
    }
}
