//! Landmark geometry and the blending-mask pipeline: convex hull, vertex
//! jitter, rasterization and Gaussian feathering.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{CdfaError, Result};
use crate::grid::MaskImage;

/// Number of points in the standard 68-point facial landmark layout.
pub const LANDMARK_COUNT: usize = 68;

const EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Point { x, y }
    }

    pub fn distance(self, other: Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

impl From<[f64; 2]> for Point {
    fn from([x, y]: [f64; 2]) -> Self {
        Point { x, y }
    }
}

/// Twice the signed area of triangle `(o, a, b)`; positive when counter-clockwise.
pub fn cross(o: Point, a: Point, b: Point) -> f64 {
    (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x)
}

/// 68 facial landmarks in pixel coordinates, iBUG ordering.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<[f64; 2]>", into = "Vec<[f64; 2]>")]
pub struct Landmarks {
    points: Vec<Point>,
}

impl Landmarks {
    pub fn new(points: Vec<Point>) -> Result<Self> {
        if points.len() != LANDMARK_COUNT {
            return Err(CdfaError::DataIntegrity(format!(
                "expected {} landmarks, got {}",
                LANDMARK_COUNT,
                points.len()
            )));
        }
        if points.iter().any(|p| !p.x.is_finite() || !p.y.is_finite()) {
            return Err(CdfaError::DataIntegrity("non-finite landmark".into()));
        }
        Ok(Landmarks { points })
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    /// Checks that every point lies inside `[0, width) × [0, height)`.
    pub fn validate_bounds(&self, height: usize, width: usize) -> Result<()> {
        let (w, h) = (width as f64, height as f64);
        match self
            .points
            .iter()
            .position(|p| p.x < 0.0 || p.y < 0.0 || p.x >= w || p.y >= h)
        {
            Some(i) => Err(CdfaError::DataIntegrity(format!(
                "landmark {} at ({}, {}) outside {}x{} frame",
                i, self.points[i].x, self.points[i].y, width, height
            ))),
            None => Ok(()),
        }
    }

    /// Sum over corresponding points of the Euclidean point distance.
    pub fn distance(&self, other: &Landmarks) -> f64 {
        self.points
            .iter()
            .zip(&other.points)
            .map(|(a, b)| a.distance(*b))
            .sum()
    }

    pub fn translated(&self, dx: f64, dy: f64) -> Landmarks {
        Landmarks {
            points: self
                .points
                .iter()
                .map(|p| Point::new(p.x + dx, p.y + dy))
                .collect(),
        }
    }
}

impl TryFrom<Vec<[f64; 2]>> for Landmarks {
    type Error = CdfaError;

    fn try_from(raw: Vec<[f64; 2]>) -> Result<Self> {
        Landmarks::new(raw.into_iter().map(Point::from).collect())
    }
}

impl From<Landmarks> for Vec<[f64; 2]> {
    fn from(l: Landmarks) -> Self {
        l.points.into_iter().map(|p| [p.x, p.y]).collect()
    }
}

/// A closed polygon. Vertices are counter-clockwise (in `x` right, `y` down
/// coordinates the orientation test uses the standard cross product sign).
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Polygon {
    vertices: Vec<Point>,
}

impl Polygon {
    pub fn new(vertices: Vec<Point>) -> Self {
        Polygon { vertices }
    }

    pub fn empty() -> Self {
        Polygon::default()
    }

    pub fn vertices(&self) -> &[Point] {
        &self.vertices
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    /// `(min_x, min_y, max_x, max_y)`, or `None` for an empty polygon.
    pub fn bounding_box(&self) -> Option<(f64, f64, f64, f64)> {
        let first = self.vertices.first()?;
        Some(self.vertices.iter().fold(
            (first.x, first.y, first.x, first.y),
            |(x0, y0, x1, y1), p| (x0.min(p.x), y0.min(p.y), x1.max(p.x), y1.max(p.y)),
        ))
    }

    pub fn clipped(&self, height: usize, width: usize) -> Polygon {
        Polygon {
            vertices: self
                .vertices
                .iter()
                .map(|p| Point::new(p.x.clamp(0.0, width as f64), p.y.clamp(0.0, height as f64)))
                .collect(),
        }
    }

    /// Inside-or-on-boundary test, valid for any simple or self-intersecting
    /// polygon (non-zero winding rule).
    pub fn contains(&self, p: Point) -> bool {
        let n = self.vertices.len();
        if n < 3 {
            return false;
        }
        let mut winding = 0i32;
        for i in 0..n {
            let a = self.vertices[i];
            let b = self.vertices[(i + 1) % n];
            if on_segment(a, b, p) {
                return true;
            }
            if a.y <= p.y {
                if b.y > p.y && cross(a, b, p) > 0.0 {
                    winding += 1;
                }
            } else if b.y <= p.y && cross(a, b, p) < 0.0 {
                winding -= 1;
            }
        }
        winding != 0
    }
}

fn on_segment(a: Point, b: Point, p: Point) -> bool {
    let len = a.distance(b);
    if len < EPS {
        return a.distance(p) < EPS;
    }
    if (cross(a, b, p) / len).abs() > EPS {
        return false;
    }
    let dot = (p.x - a.x) * (b.x - a.x) + (p.y - a.y) * (b.y - a.y);
    dot >= -EPS && dot <= len * len + EPS
}

/// Minimal convex polygon containing `points`, counter-clockwise, with
/// collinear boundary points removed (Andrew's monotone chain).
pub fn convex_hull(points: &[Point]) -> Result<Polygon> {
    let mut pts: Vec<Point> = points.to_vec();
    if pts.iter().any(|p| !p.x.is_finite() || !p.y.is_finite()) {
        return Err(CdfaError::DegenerateGeometry("non-finite point".into()));
    }
    pts.sort_by(|a, b| a.x.total_cmp(&b.x).then(a.y.total_cmp(&b.y)));
    pts.dedup();
    if pts.len() < 3 {
        return Err(CdfaError::DegenerateGeometry(format!(
            "{} distinct point(s), need at least 3",
            pts.len()
        )));
    }

    let mut hull: Vec<Point> = Vec::with_capacity(2 * pts.len());
    for &p in &pts {
        while hull.len() >= 2 && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0.0 {
            hull.pop();
        }
        hull.push(p);
    }
    let lower_len = hull.len() + 1;
    for &p in pts.iter().rev().skip(1) {
        while hull.len() >= lower_len && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0.0
        {
            hull.pop();
        }
        hull.push(p);
    }
    hull.pop();

    if hull.len() < 3 {
        return Err(CdfaError::DegenerateGeometry(
            "all points are collinear".into(),
        ));
    }
    Ok(Polygon::new(hull))
}

/// Sets every pixel whose center lies inside or on the polygon to 1. Pixel
/// `(row, col)` is centered at `(x, y) = (col, row)`.
pub fn rasterize(polygon: &Polygon, height: usize, width: usize) -> MaskImage {
    let mut mask = MaskImage::zeros(height, width);
    let Some((x0, y0, x1, y1)) = polygon.bounding_box() else {
        return mask;
    };
    if polygon.vertices().len() < 3 {
        return mask;
    }
    let col_range = pixel_span(x0, x1, width);
    let row_range = pixel_span(y0, y1, height);
    for row in row_range {
        for col in col_range.clone() {
            if polygon.contains(Point::new(col as f64, row as f64)) {
                mask.set(row, col, 1.0);
            }
        }
    }
    mask
}

fn pixel_span(lo: f64, hi: f64, len: usize) -> std::ops::Range<usize> {
    let start = (lo - EPS).ceil().max(0.0) as usize;
    let end = ((hi + EPS).floor() + 1.0).clamp(0.0, len as f64) as usize;
    start.min(end)..end
}

/// Independently jitters each vertex coordinate by a uniform draw from
/// `[-magnitude, magnitude]`.
pub fn deform_polygon<R: Rng + ?Sized>(polygon: &Polygon, rng: &mut R, magnitude: f64) -> Polygon {
    if magnitude <= 0.0 {
        return polygon.clone();
    }
    Polygon::new(
        polygon
            .vertices()
            .iter()
            .map(|p| {
                let dx = rng.gen_range(-magnitude..=magnitude);
                let dy = rng.gen_range(-magnitude..=magnitude);
                Point::new(p.x + dx, p.y + dy)
            })
            .collect(),
    )
}

/// Radius of the truncated Gaussian kernel for `sigma`.
pub fn blur_radius(sigma: f64) -> usize {
    if sigma <= 0.0 {
        0
    } else {
        (3.0 * sigma).ceil() as usize
    }
}

fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let radius = blur_radius(sigma) as isize;
    let mut kernel: Vec<f64> = (-radius..=radius)
        .map(|k| (-((k * k) as f64) / (2.0 * sigma * sigma)).exp())
        .collect();
    let sum: f64 = kernel.iter().sum();
    kernel.iter_mut().for_each(|w| *w /= sum);
    kernel
}

/// Half-sample symmetric reflection: `-1 -> 0`, `len -> len - 1`.
fn reflect(i: isize, len: usize) -> usize {
    let n = len as isize;
    let period = 2 * n;
    let mut m = i.rem_euclid(period);
    if m >= n {
        m = period - 1 - m;
    }
    m as usize
}

/// Separable Gaussian blur with the kernel truncated at `±ceil(3σ)` and
/// renormalized, reflective borders.
pub fn gaussian_blur(mask: &MaskImage, sigma: f64) -> MaskImage {
    if sigma <= 0.0 {
        return mask.clone();
    }
    let (h, w) = (mask.height(), mask.width());
    let kernel = gaussian_kernel(sigma);
    let radius = (kernel.len() / 2) as isize;

    let src = mask.values();
    let mut tmp = vec![0.0; h * w];
    for row in 0..h {
        let line = &src[row * w..(row + 1) * w];
        for col in 0..w {
            let mut acc = 0.0;
            for (k, &wt) in kernel.iter().enumerate() {
                let c = reflect(col as isize + k as isize - radius, w);
                acc += wt * line[c];
            }
            tmp[row * w + col] = acc;
        }
    }
    let mut out = vec![0.0; h * w];
    for row in 0..h {
        for col in 0..w {
            let mut acc = 0.0;
            for (k, &wt) in kernel.iter().enumerate() {
                let r = reflect(row as isize + k as isize - radius, h);
                acc += wt * tmp[r * w + col];
            }
            out[row * w + col] = acc.clamp(0.0, 1.0);
        }
    }
    MaskImage::from_vec(h, w, out).expect("shape preserved")
}

/// Knobs of the blending-mask pipeline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MaskParams {
    /// Per-coordinate vertex jitter in pixels for a 64-pixel-wide frame;
    /// scaled linearly with the actual frame width.
    pub deform_magnitude: f64,
    /// Blur sigma is drawn uniformly from `[sigma_min, sigma_max]`.
    pub sigma_min: f64,
    pub sigma_max: f64,
    /// Global mask scale, drawn uniformly from this set when enabled.
    pub intensity_levels: Vec<f64>,
    pub use_intensity: bool,
}

impl Default for MaskParams {
    fn default() -> Self {
        MaskParams {
            deform_magnitude: 4.0,
            sigma_min: 1.0,
            sigma_max: 3.0,
            intensity_levels: vec![0.25, 0.5, 0.75, 1.0],
            use_intensity: true,
        }
    }
}

impl MaskParams {
    /// Pipeline collapsed to the bare hull rasterization.
    pub fn exact_hull() -> Self {
        MaskParams {
            deform_magnitude: 0.0,
            sigma_min: 0.0,
            sigma_max: 0.0,
            intensity_levels: vec![1.0],
            use_intensity: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.deform_magnitude.is_nan() || self.deform_magnitude < 0.0 {
            return Err(CdfaError::Config("deform_magnitude must be >= 0".into()));
        }
        if !(self.sigma_min >= 0.0 && self.sigma_max >= self.sigma_min) {
            return Err(CdfaError::Config("need 0 <= sigma_min <= sigma_max".into()));
        }
        if self.use_intensity
            && (self.intensity_levels.is_empty()
                || self
                    .intensity_levels
                    .iter()
                    .any(|v| !(0.0..=1.0).contains(v)))
        {
            return Err(CdfaError::Config(
                "intensity_levels must be a non-empty subset of [0, 1]".into(),
            ));
        }
        Ok(())
    }

    pub fn magnitude_for(&self, width: usize) -> f64 {
        self.deform_magnitude * width as f64 / 64.0
    }
}

/// Draws of the random stages of one mask realization.
#[derive(Debug, Clone, PartialEq)]
pub struct BlendMask {
    pub mask: MaskImage,
    pub deformed_hull: Polygon,
    pub sigma: f64,
    pub intensity: f64,
}

/// `Deform(ConvexHull(landmarks))`, rasterized, blurred and scaled.
pub fn make_blend_mask<R: Rng + ?Sized>(
    landmarks: &Landmarks,
    height: usize,
    width: usize,
    rng: &mut R,
    params: &MaskParams,
) -> Result<BlendMask> {
    let hull = convex_hull(landmarks.points())?;
    let deformed = deform_polygon(&hull, rng, params.magnitude_for(width)).clipped(height, width);
    let mut mask = rasterize(&deformed, height, width);

    let sigma = if params.sigma_max > params.sigma_min {
        rng.gen_range(params.sigma_min..=params.sigma_max)
    } else {
        params.sigma_min
    };
    mask = gaussian_blur(&mask, sigma);

    let intensity = if params.use_intensity && !params.intensity_levels.is_empty() {
        params.intensity_levels[rng.gen_range(0..params.intensity_levels.len())]
    } else {
        1.0
    };
    if intensity != 1.0 {
        mask.values_mut().iter_mut().for_each(|v| *v *= intensity);
    }
    Ok(BlendMask {
        mask,
        deformed_hull: deformed,
        sigma,
        intensity,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn pts(raw: &[(f64, f64)]) -> Vec<Point> {
        raw.iter().map(|&(x, y)| Point::new(x, y)).collect()
    }

    fn signed_area(p: &Polygon) -> f64 {
        let v = p.vertices();
        (0..v.len())
            .map(|i| {
                let (a, b) = (v[i], v[(i + 1) % v.len()]);
                a.x * b.y - b.x * a.y
            })
            .sum::<f64>()
            / 2.0
    }

    /// Keeps a point iff no triangle of other points strictly contains it and
    /// it is not strictly between two other points on a segment.
    fn brute_force_hull_vertices(points: &[Point]) -> Vec<Point> {
        let n = points.len();
        let strictly_inside = |p: Point, a: Point, b: Point, c: Point| {
            let (d1, d2, d3) = (cross(a, b, p), cross(b, c, p), cross(c, a, p));
            (d1 > 0.0 && d2 > 0.0 && d3 > 0.0) || (d1 < 0.0 && d2 < 0.0 && d3 < 0.0)
        };
        let mut keep = Vec::new();
        'outer: for i in 0..n {
            let p = points[i];
            for a in 0..n {
                for b in 0..n {
                    if a == i || b == i || a == b {
                        continue;
                    }
                    let (pa, pb) = (points[a], points[b]);
                    // p strictly inside segment ab
                    if cross(pa, pb, p) == 0.0
                        && (p.x - pa.x) * (p.x - pb.x) + (p.y - pa.y) * (p.y - pb.y) < 0.0
                    {
                        continue 'outer;
                    }
                    for (c, &pc) in points.iter().enumerate() {
                        if c == i || c == a || c == b {
                            continue;
                        }
                        if strictly_inside(p, pa, pb, pc) {
                            continue 'outer;
                        }
                    }
                }
            }
            keep.push(p);
        }
        keep
    }

    #[test]
    fn hull_of_unit_square_is_itself() {
        let square = pts(&[(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0)]);
        let hull = convex_hull(&square).unwrap();
        assert_eq!(hull.vertices().len(), 4);
        for p in &square {
            assert!(hull.vertices().contains(p));
        }
        assert!(signed_area(&hull) > 0.0);
    }

    #[test]
    fn hull_of_triangle_is_itself() {
        let tri = pts(&[(0.0, 0.0), (4.0, 0.0), (2.0, 3.0)]);
        let hull = convex_hull(&tri).unwrap();
        assert_eq!(hull.vertices().len(), 3);
        for p in &tri {
            assert!(hull.vertices().contains(p));
        }
    }

    #[test]
    fn hull_matches_brute_force_on_random_disk_points() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..25 {
            let points: Vec<Point> = (0..20)
                .map(|_| {
                    let r = 5.0 * rng.gen::<f64>().sqrt();
                    let th = rng.gen::<f64>() * std::f64::consts::TAU;
                    Point::new(r * th.cos(), r * th.sin())
                })
                .collect();
            let hull = convex_hull(&points).unwrap();
            let mut expected = brute_force_hull_vertices(&points);
            let mut got = hull.vertices().to_vec();
            let key = |a: &Point, b: &Point| a.x.total_cmp(&b.x).then(a.y.total_cmp(&b.y));
            expected.sort_by(key);
            got.sort_by(key);
            assert_eq!(got, expected);
        }
    }

    #[test]
    fn degenerate_inputs_are_rejected() {
        assert!(matches!(
            convex_hull(&pts(&[(0.0, 0.0), (1.0, 1.0)])),
            Err(CdfaError::DegenerateGeometry(_))
        ));
        assert!(matches!(
            convex_hull(&pts(&[(0.0, 0.0), (1.0, 1.0), (2.0, 2.0), (3.0, 3.0)])),
            Err(CdfaError::DegenerateGeometry(_))
        ));
        assert!(matches!(
            convex_hull(&pts(&[(1.0, 1.0), (1.0, 1.0), (1.0, 1.0)])),
            Err(CdfaError::DegenerateGeometry(_))
        ));
    }

    #[test]
    fn collinear_boundary_points_are_dropped() {
        let hull = convex_hull(&pts(&[
            (0.0, 0.0),
            (1.0, 0.0),
            (2.0, 0.0),
            (2.0, 2.0),
            (0.0, 2.0),
            (1.0, 1.0),
        ]))
        .unwrap();
        assert_eq!(hull.vertices().len(), 4);
    }

    #[test]
    fn rasterize_full_cover_and_empty() {
        let full = Polygon::new(pts(&[(0.0, 0.0), (8.0, 0.0), (8.0, 6.0), (0.0, 6.0)]));
        assert!(rasterize(&full, 6, 8).values().iter().all(|&v| v == 1.0));
        assert!(rasterize(&Polygon::empty(), 6, 8)
            .values()
            .iter()
            .all(|&v| v == 0.0));
    }

    #[test]
    fn rasterize_small_square_matches_point_in_polygon_oracle() {
        let sq = Polygon::new(pts(&[(0.5, 0.5), (2.5, 0.5), (2.5, 2.5), (0.5, 2.5)]));
        let mask = rasterize(&sq, 4, 4);
        for row in 0..4 {
            for col in 0..4 {
                let (cx, cy) = (col as f64, row as f64);
                let inside = (0.5..=2.5).contains(&cx) && (0.5..=2.5).contains(&cy);
                assert_eq!(mask.get(row, col) == 1.0, inside, "pixel ({row},{col})");
            }
        }
        assert_eq!(mask.support(), 4);
        for (r, c) in [(1, 1), (1, 2), (2, 1), (2, 2)] {
            assert_eq!(mask.get(r, c), 1.0);
        }
    }

    #[test]
    fn deform_zero_magnitude_is_identity_and_bounded_otherwise() {
        let poly = Polygon::new(pts(&[(1.0, 1.0), (5.0, 1.0), (5.0, 5.0), (1.0, 5.0)]));
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        assert_eq!(deform_polygon(&poly, &mut rng, 0.0), poly);

        for seed in 0..200 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let out = deform_polygon(&poly, &mut rng, 3.0);
            let max_delta = poly
                .vertices()
                .iter()
                .zip(out.vertices())
                .flat_map(|(a, b)| [(a.x - b.x).abs(), (a.y - b.y).abs()])
                .fold(0.0, f64::max);
            assert!(max_delta <= 3.0);
        }
        let a = deform_polygon(&poly, &mut ChaCha8Rng::seed_from_u64(9), 2.0);
        let b = deform_polygon(&poly, &mut ChaCha8Rng::seed_from_u64(9), 2.0);
        assert_eq!(a, b);
    }

    #[test]
    fn blur_identity_constant_and_symmetry() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let values: Vec<f64> = (0..7 * 9).map(|_| rng.gen()).collect();
        let m = MaskImage::from_vec(7, 9, values).unwrap();
        assert_eq!(gaussian_blur(&m, 0.0), m);

        let c = MaskImage::filled(7, 9, 0.37);
        let out = gaussian_blur(&c, 2.3);
        assert!(out.values().iter().all(|&v| (v - 0.37).abs() < 1e-12));

        let mut sym = MaskImage::zeros(7, 9);
        for row in 0..7 {
            for col in 0..9 {
                let v = m.get(row, col.min(8 - col));
                sym.set(row, col, v);
            }
        }
        let out = gaussian_blur(&sym, 1.7);
        for row in 0..7 {
            for col in 0..9 {
                assert!((out.get(row, col) - out.get(row, 8 - col)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn blur_radius_larger_than_image_still_reflects() {
        let m = MaskImage::filled(2, 3, 0.5);
        let out = gaussian_blur(&m, 4.0);
        assert!(out.values().iter().all(|&v| (v - 0.5).abs() < 1e-12));
    }

    fn circle_landmarks(cx: f64, cy: f64, r: f64) -> Landmarks {
        Landmarks::new(
            (0..LANDMARK_COUNT)
                .map(|i| {
                    let th = i as f64 / LANDMARK_COUNT as f64 * std::f64::consts::TAU;
                    Point::new(cx + r * th.cos(), cy + r * th.sin())
                })
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn collapsed_mask_pipeline_equals_hull_rasterization() {
        let lm = circle_landmarks(16.0, 16.0, 9.0);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let bm = make_blend_mask(&lm, 32, 32, &mut rng, &MaskParams::exact_hull()).unwrap();
        let hull = convex_hull(lm.points()).unwrap();
        assert_eq!(bm.mask, rasterize(&hull, 32, 32));
    }

    #[test]
    fn blend_mask_is_bounded_by_intensity_and_deterministic() {
        let lm = circle_landmarks(20.0, 18.0, 10.0);
        let params = MaskParams::default();
        for seed in 0..50 {
            let bm = make_blend_mask(&lm, 40, 40, &mut ChaCha8Rng::seed_from_u64(seed), &params)
                .unwrap();
            assert!(bm.mask.min() >= 0.0);
            assert!(bm.mask.max() <= bm.intensity + 1e-12);
            let again = make_blend_mask(&lm, 40, 40, &mut ChaCha8Rng::seed_from_u64(seed), &params)
                .unwrap();
            assert_eq!(bm.mask, again.mask);
        }
    }

    #[test]
    fn blend_mask_support_stays_near_deformed_hull() {
        let lm = circle_landmarks(20.0, 18.0, 8.0);
        let params = MaskParams::default();
        for seed in 0..50 {
            let bm = make_blend_mask(&lm, 40, 40, &mut ChaCha8Rng::seed_from_u64(seed), &params)
                .unwrap();
            let (x0, y0, x1, y1) = bm.deformed_hull.bounding_box().unwrap();
            let pad = blur_radius(bm.sigma) as f64;
            for row in 0..40 {
                for col in 0..40 {
                    if bm.mask.get(row, col) > 0.0 {
                        let (cx, cy) = (col as f64, row as f64);
                        assert!(cx >= x0 - pad - 1.0 && cx <= x1 + pad + 1.0);
                        assert!(cy >= y0 - pad - 1.0 && cy <= y1 + pad + 1.0);
                    }
                }
            }
        }
    }

    #[test]
    fn landmark_validation() {
        assert!(Landmarks::new(vec![Point::new(0.0, 0.0); 67]).is_err());
        let lm = circle_landmarks(5.0, 5.0, 4.0);
        assert!(lm.validate_bounds(10, 10).is_ok());
        assert!(lm.validate_bounds(8, 10).is_err());
    }

    fn arb_points(n: std::ops::Range<usize>) -> impl Strategy<Value = Vec<Point>> {
        prop::collection::vec((0.0..30.0f64, 0.0..30.0f64), n)
            .prop_map(|v| v.into_iter().map(|(x, y)| Point::new(x, y)).collect())
    }

    proptest! {
        #[test]
        fn hull_is_idempotent(points in arb_points(3..40)) {
            if let Ok(h) = convex_hull(&points) {
                let again = convex_hull(h.vertices()).unwrap();
                prop_assert_eq!(h.vertices().len(), again.vertices().len());
                for v in h.vertices() {
                    prop_assert!(again.vertices().contains(v));
                }
            }
        }

        #[test]
        fn hull_area_dominates_subset_area(points in arb_points(6..30), keep in 3usize..6) {
            let subset = &points[..keep];
            if let (Ok(full), Ok(sub)) = (convex_hull(&points), convex_hull(subset)) {
                let a = rasterize(&full, 32, 32).support();
                let b = rasterize(&sub, 32, 32).support();
                prop_assert!(a >= b);
            }
        }

        #[test]
        fn blur_preserves_range_envelope(
            values in prop::collection::vec(0.2..0.9f64, 36),
            sigma in 0.0..4.0f64,
        ) {
            let m = MaskImage::from_vec(6, 6, values).unwrap();
            let out = gaussian_blur(&m, sigma);
            prop_assert!(out.min() >= m.min() - 1e-12);
            prop_assert!(out.max() <= m.max() + 1e-12);
        }
    }
}
