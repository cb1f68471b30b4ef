//! Cell geometry, cache-node coverage and requesting-user placement.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::phy::LinkState;

/// Pathloss reference distance in meters.
pub const REFERENCE_DISTANCE: f64 = 1.0;

const PLACEMENT_ATTEMPTS: usize = 20_000;
const PLACEMENT_RESTARTS: usize = 200;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const ORIGIN: Point = Point { x: 0.0, y: 0.0 };

    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(&self, other: &Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    pub fn norm(&self) -> f64 {
        self.x.hypot(self.y)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CacheNode {
    pub position: Point,
    pub service_radius: f64,
}

impl CacheNode {
    pub fn covers(&self, p: &Point) -> bool {
        self.position.distance(p) <= self.service_radius
    }
}

/// Power-law pathloss `(d / d0)^-exponent`; distances below `d0` are clamped.
pub fn pathloss(a: &Point, b: &Point, exponent: f64) -> f64 {
    let d = a.distance(b).max(REFERENCE_DISTANCE);
    (d / REFERENCE_DISTANCE).powf(-exponent)
}

/// One cell: BS at the origin, disjoint cache coverage disks.
#[derive(Clone, Debug, PartialEq)]
pub struct CellLayout {
    cell_radius: f64,
    cache_nodes: Vec<CacheNode>,
    pathloss_exponent: f64,
}

impl CellLayout {
    pub fn new(
        cell_radius: f64,
        cache_nodes: Vec<CacheNode>,
        pathloss_exponent: f64,
    ) -> Result<Self> {
        if !(cell_radius > 0.0 && cell_radius.is_finite()) {
            return Err(Error::Layout("cell radius must be positive".into()));
        }
        if !(pathloss_exponent > 0.0) {
            return Err(Error::Layout("pathloss exponent must be positive".into()));
        }
        for (i, n) in cache_nodes.iter().enumerate() {
            if !(n.service_radius > 0.0) {
                return Err(Error::Layout(format!(
                    "cache {i}: service radius must be positive"
                )));
            }
            if n.position.norm() > cell_radius {
                return Err(Error::Layout(format!("cache {i} lies outside the cell")));
            }
            for (j, m) in cache_nodes.iter().enumerate().take(i) {
                if n.position.distance(&m.position) <= n.service_radius + m.service_radius {
                    return Err(Error::Layout(format!(
                        "coverage disks of caches {j} and {i} overlap"
                    )));
                }
            }
        }
        Ok(Self {
            cell_radius,
            cache_nodes,
            pathloss_exponent,
        })
    }

    /// Random placement of `count` nodes with uniform angle on the annulus
    /// `[inner, outer]`, rejecting candidates that overlap placed nodes.
    pub fn place_on_annulus<R: Rng + ?Sized>(
        cell_radius: f64,
        count: usize,
        inner: f64,
        outer: f64,
        service_radius: f64,
        pathloss_exponent: f64,
        rng: &mut R,
    ) -> Result<Self> {
        if !(0.0 <= inner && inner <= outer && outer <= cell_radius) {
            return Err(Error::Layout(
                "annulus must satisfy 0 <= inner <= outer <= cell radius".into(),
            ));
        }
        'restart: for _ in 0..PLACEMENT_RESTARTS {
            let mut nodes: Vec<CacheNode> = Vec::with_capacity(count);
            while nodes.len() < count {
                let mut placed = false;
                for _ in 0..PLACEMENT_ATTEMPTS {
                    let u: f64 = rng.random();
                    let r = (inner * inner + u * (outer * outer - inner * inner)).sqrt();
                    let phi = rng.random::<f64>() * std::f64::consts::TAU;
                    let cand = Point::new(r * phi.cos(), r * phi.sin());
                    if nodes
                        .iter()
                        .all(|n| n.position.distance(&cand) > n.service_radius + service_radius)
                    {
                        nodes.push(CacheNode {
                            position: cand,
                            service_radius,
                        });
                        placed = true;
                        break;
                    }
                }
                if !placed {
                    continue 'restart;
                }
            }
            return Self::new(cell_radius, nodes, pathloss_exponent);
        }
        Err(Error::Layout(format!(
            "could not place {count} disjoint caches of radius {service_radius} on the annulus"
        )))
    }

    pub fn cell_radius(&self) -> f64 {
        self.cell_radius
    }

    pub fn pathloss_exponent(&self) -> f64 {
        self.pathloss_exponent
    }

    pub fn cache_nodes(&self) -> &[CacheNode] {
        &self.cache_nodes
    }

    pub fn n_caches(&self) -> usize {
        self.cache_nodes.len()
    }

    pub fn bs_position(&self) -> Point {
        Point::ORIGIN
    }

    /// Index of the cache whose disk contains `p`; boundary points count as inside.
    pub fn coverage_region_of(&self, p: &Point) -> Option<usize> {
        self.cache_nodes.iter().position(|n| n.covers(p))
    }

    pub fn pathloss_to(&self, p: &Point) -> f64 {
        pathloss(&self.bs_position(), p, self.pathloss_exponent)
    }

    pub fn cache_pathloss(&self, c: usize) -> f64 {
        self.pathloss_to(&self.cache_nodes[c].position)
    }

    /// Fraction of the cell area covered by cache disks, assuming every
    /// disk lies fully inside the cell.
    pub fn covered_area_fraction(&self) -> f64 {
        let covered: f64 = self
            .cache_nodes
            .iter()
            .map(|n| n.service_radius.powi(2))
            .sum();
        covered / self.cell_radius.powi(2)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HotZone {
    pub center: Point,
    pub radius: f64,
    pub mass: f64,
}

/// Mixture of a uniform background over the cell and uniform hot-zone disks.
#[derive(Clone, Debug, PartialEq)]
pub struct UserDistribution {
    hotzones: Vec<HotZone>,
    background_mass: f64,
}

impl UserDistribution {
    pub fn uniform() -> Self {
        Self {
            hotzones: Vec::new(),
            background_mass: 1.0,
        }
    }

    pub fn hotzone_mixture(
        hotzones: Vec<HotZone>,
        background_mass: f64,
        layout: &CellLayout,
    ) -> Result<Self> {
        let total: f64 = background_mass + hotzones.iter().map(|z| z.mass).sum::<f64>();
        if background_mass < 0.0 || hotzones.iter().any(|z| !(z.mass >= 0.0)) {
            return Err(Error::Layout(
                "probability masses must be nonnegative".into(),
            ));
        }
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::Layout(format!(
                "probability masses sum to {total}, expected 1"
            )));
        }
        for (k, z) in hotzones.iter().enumerate() {
            if !(z.radius > 0.0)
                || z.center.norm() + z.radius > layout.cell_radius() * (1.0 + 1e-12)
            {
                return Err(Error::Layout(format!(
                    "hot zone {k} must lie inside the cell"
                )));
            }
        }
        Ok(Self {
            hotzones,
            background_mass,
        })
    }

    pub fn is_uniform(&self) -> bool {
        self.hotzones.iter().all(|z| z.mass == 0.0)
    }

    pub fn hotzones(&self) -> &[HotZone] {
        &self.hotzones
    }

    pub fn background_mass(&self) -> f64 {
        self.background_mass
    }

    pub fn sample_point<R: Rng + ?Sized>(&self, cell_radius: f64, rng: &mut R) -> Point {
        let mut u: f64 = rng.random();
        for z in &self.hotzones {
            if u < z.mass {
                let p = uniform_in_disk(z.radius, rng);
                return Point::new(z.center.x + p.x, z.center.y + p.y);
            }
            u -= z.mass;
        }
        uniform_in_disk(cell_radius, rng)
    }
}

fn uniform_in_disk<R: Rng + ?Sized>(radius: f64, rng: &mut R) -> Point {
    let r = radius * rng.random::<f64>().sqrt();
    let phi = rng.random::<f64>() * std::f64::consts::TAU;
    Point::new(r * phi.cos(), r * phi.sin())
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct UserLocation {
    pub point: Point,
    pub serving_cache: Option<usize>,
}

impl UserLocation {
    pub fn at(point: Point, layout: &CellLayout) -> Self {
        Self {
            point,
            serving_cache: layout.coverage_region_of(&point),
        }
    }
}

pub fn sample_user<R: Rng + ?Sized>(
    dist: &UserDistribution,
    layout: &CellLayout,
    rng: &mut R,
) -> UserLocation {
    UserLocation::at(dist.sample_point(layout.cell_radius(), rng), layout)
}

/// Log-normal shadowing, truncated symmetrically at `clip_sigmas` standard
/// deviations by resampling.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ShadowingModel {
    pub sigma_db: f64,
    pub clip_sigmas: Option<f64>,
}

impl ShadowingModel {
    pub fn new(sigma_db: f64, clip_sigmas: Option<f64>) -> Result<Self> {
        if !(sigma_db >= 0.0) {
            return Err(Error::InvalidParameter(
                "shadowing sigma must be nonnegative".into(),
            ));
        }
        if let Some(k) = clip_sigmas {
            if !(k > 0.0) {
                return Err(Error::InvalidParameter(
                    "shadowing clip must be positive".into(),
                ));
            }
        }
        Ok(Self {
            sigma_db,
            clip_sigmas,
        })
    }

    pub fn none() -> Self {
        Self {
            sigma_db: 0.0,
            clip_sigmas: None,
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        if self.sigma_db == 0.0 {
            return 1.0;
        }
        let z = loop {
            let z: f64 = StandardNormal.sample(rng);
            match self.clip_sigmas {
                Some(k) if z.abs() > k => continue,
                _ => break z,
            }
        };
        10f64.powf(z * self.sigma_db / 10.0)
    }

    /// Smallest gain the model can produce; zero when untruncated.
    pub fn worst_gain(&self) -> f64 {
        match self.clip_sigmas {
            _ if self.sigma_db == 0.0 => 1.0,
            Some(k) => 10f64.powf(-k * self.sigma_db / 10.0),
            None => 0.0,
        }
    }
}

/// Generates large-scale link states for users and cache nodes.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LinkModel {
    pub shadowing: ShadowingModel,
    pub interference: f64,
}

impl LinkModel {
    pub fn user_link<R: Rng + ?Sized>(
        &self,
        layout: &CellLayout,
        p: &Point,
        rng: &mut R,
    ) -> LinkState<f64> {
        LinkState {
            pathloss: layout.pathloss_to(p),
            shadowing: self.shadowing.sample(rng),
            interference: self.interference,
        }
    }

    pub fn cache_link<R: Rng + ?Sized>(
        &self,
        layout: &CellLayout,
        c: usize,
        rng: &mut R,
    ) -> LinkState<f64> {
        LinkState {
            pathloss: layout.cache_pathloss(c),
            shadowing: self.shadowing.sample(rng),
            interference: self.interference,
        }
    }

    pub fn cache_links<R: Rng + ?Sized>(
        &self,
        layout: &CellLayout,
        rng: &mut R,
    ) -> Vec<LinkState<f64>> {
        (0..layout.n_caches())
            .map(|c| self.cache_link(layout, c, rng))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use statrs::distribution::{ChiSquared, ContinuousCDF};

    fn two_cache_layout() -> CellLayout {
        CellLayout::new(
            500.0,
            vec![
                CacheNode {
                    position: Point::new(300.0, 0.0),
                    service_radius: 90.0,
                },
                CacheNode {
                    position: Point::new(-300.0, 0.0),
                    service_radius: 90.0,
                },
            ],
            3.5,
        )
        .unwrap()
    }

    #[test]
    fn pathloss_examples() {
        let o = Point::ORIGIN;
        assert_eq!(pathloss(&o, &Point::new(1.0, 0.0), 3.5), 1.0);
        let a = pathloss(&o, &Point::new(10.0, 0.0), 3.5);
        let b = pathloss(&o, &Point::new(20.0, 0.0), 3.5);
        assert!((b / a - 2f64.powf(-3.5)).abs() < 1e-15);
        let d500 = pathloss(&o, &Point::new(0.0, 500.0), 3.5);
        let via_log = (-3.5 * 500f64.ln()).exp();
        assert!((d500 - via_log).abs() < 1e-12 * via_log);
        assert_eq!(pathloss(&o, &o, 3.5), 1.0);
    }

    #[test]
    fn coverage_membership() {
        let l = two_cache_layout();
        assert_eq!(l.coverage_region_of(&Point::new(310.0, 10.0)), Some(0));
        assert_eq!(l.coverage_region_of(&Point::ORIGIN), None);
        assert_eq!(l.coverage_region_of(&Point::new(-390.0, 0.0)), Some(1));
        assert_eq!(l.coverage_region_of(&Point::new(-390.0001, 0.0)), None);
    }

    #[test]
    fn overlapping_disks_rejected() {
        let nodes = vec![
            CacheNode {
                position: Point::new(100.0, 0.0),
                service_radius: 60.0,
            },
            CacheNode {
                position: Point::new(200.0, 0.0),
                service_radius: 60.0,
            },
        ];
        assert!(matches!(
            CellLayout::new(500.0, nodes, 3.5),
            Err(Error::Layout(_))
        ));
    }

    #[test]
    fn annulus_placement_is_disjoint_and_seeded() {
        let mut r1 = ChaCha8Rng::seed_from_u64(3);
        let mut r2 = ChaCha8Rng::seed_from_u64(3);
        let a = CellLayout::place_on_annulus(500.0, 20, 120.0, 430.0, 70.0, 3.5, &mut r1).unwrap();
        let b = CellLayout::place_on_annulus(500.0, 20, 120.0, 430.0, 70.0, 3.5, &mut r2).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.n_caches(), 20);
        for n in a.cache_nodes() {
            let r = n.position.norm();
            assert!((120.0..=430.0).contains(&r));
        }
    }

    #[test]
    fn degenerate_hotzone_keeps_samples_inside() {
        let l = two_cache_layout();
        let zone = HotZone {
            center: Point::new(100.0, 100.0),
            radius: 40.0,
            mass: 1.0,
        };
        let d = UserDistribution::hotzone_mixture(vec![zone], 0.0, &l).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..10_000 {
            let u = sample_user(&d, &l, &mut rng);
            assert!(u.point.distance(&zone.center) <= 40.0);
        }
    }

    #[test]
    fn hotzone_masses_must_sum_to_one() {
        let l = two_cache_layout();
        let zone = HotZone {
            center: Point::ORIGIN,
            radius: 40.0,
            mass: 0.3,
        };
        assert!(UserDistribution::hotzone_mixture(vec![zone], 0.6, &l).is_err());
        let outside = HotZone {
            center: Point::new(480.0, 0.0),
            radius: 40.0,
            mass: 0.5,
        };
        assert!(UserDistribution::hotzone_mixture(vec![outside], 0.5, &l).is_err());
    }

    #[test]
    fn uniform_coverage_matches_area_ratio() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let l = CellLayout::place_on_annulus(500.0, 6, 200.0, 400.0, 90.0, 3.5, &mut rng).unwrap();
        let d = UserDistribution::uniform();
        let n = 1_000_000;
        let hits = (0..n)
            .filter(|_| sample_user(&d, &l, &mut rng).serving_cache.is_some())
            .count();
        let p = 6.0 * (90.0f64 / 500.0).powi(2);
        let sigma = (p * (1.0 - p) / n as f64).sqrt();
        let emp = hits as f64 / n as f64;
        assert!((emp - p).abs() < 3.0 * sigma, "emp {emp} analytic {p}");
    }

    /// Chi-squared over a polar grid of equal-area cells.
    fn chi2_pvalue(
        points: &[Point],
        expected: impl Fn(usize, usize) -> f64,
        rings: usize,
        sectors: usize,
    ) -> f64 {
        let mut counts = vec![0usize; rings * sectors];
        for p in points {
            let r = (p.norm() / 500.0).powi(2);
            let ring = ((r * rings as f64) as usize).min(rings - 1);
            let ang = p.y.atan2(p.x).rem_euclid(std::f64::consts::TAU);
            let sector = ((ang / std::f64::consts::TAU * sectors as f64) as usize).min(sectors - 1);
            counts[ring * sectors + sector] += 1;
        }
        let mut stat = 0.0;
        for ring in 0..rings {
            for sector in 0..sectors {
                let e = expected(ring, sector);
                let o = counts[ring * sectors + sector] as f64;
                stat += (o - e).powi(2) / e;
            }
        }
        let dof = (rings * sectors - 1) as f64;
        1.0 - ChiSquared::new(dof).unwrap().cdf(stat)
    }

    #[test]
    fn uniform_sampler_chi_squared() {
        let l = two_cache_layout();
        let d = UserDistribution::uniform();
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let n = 200_000;
        let pts: Vec<Point> = (0..n)
            .map(|_| sample_user(&d, &l, &mut rng).point)
            .collect();
        let p = chi2_pvalue(&pts, |_, _| n as f64 / 64.0, 8, 8);
        assert!(p > 0.01, "p = {p}");
    }

    #[test]
    fn hotzone_sampler_chi_squared() {
        // A centered hot zone covering exactly the innermost ring keeps the
        // expected counts analytic on the equal-area polar grid.
        let l = two_cache_layout();
        let rings = 4;
        let inner_radius = 500.0 * (1.0f64 / rings as f64).sqrt();
        let zone = HotZone {
            center: Point::ORIGIN,
            radius: inner_radius,
            mass: 0.4,
        };
        let d = UserDistribution::hotzone_mixture(vec![zone], 0.6, &l).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(28);
        let n = 200_000;
        let pts: Vec<Point> = (0..n)
            .map(|_| sample_user(&d, &l, &mut rng).point)
            .collect();
        let sectors = 8;
        let p = chi2_pvalue(
            &pts,
            |ring, _| {
                let base = 0.6 / (rings * sectors) as f64;
                let extra = if ring == 0 { 0.4 / sectors as f64 } else { 0.0 };
                n as f64 * (base + extra)
            },
            rings,
            sectors,
        );
        assert!(p > 0.01, "p = {p}");
    }

    #[test]
    fn truncated_shadowing_stays_in_range() {
        let m = ShadowingModel::new(8.0, Some(3.0)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let lo = m.worst_gain();
        for _ in 0..100_000 {
            let g = m.sample(&mut rng);
            assert!(g >= lo && g <= 1.0 / lo);
        }
    }
}
