//! The skew sawtooth circle map.
//!
//! `g(z) = (w + a(z − z_sw) + z_sw) mod 1` with slope `a = a_L` left of the
//! kink `z_sw = (a_R − 1)/(a_R − a_L)` and `a = a_R` right of it. With
//! `a_L ≤ 1 < a_R` the kink lies in `(0, 1]`; `a_L = 1` degenerates to rigid
//! rotation by `w`, and `a_L ≤ 0` makes the map non-invertible.

use rayon::prelude::*;
use thiserror::Error;

use crate::grid::{CellLock, GridAxis, ScanGrid};
use crate::tol;

/// Errors from sawtooth parameter validation.
#[derive(Debug, Error)]
pub enum SawtoothError {
    #[error("slopes must satisfy a_L <= 1 < a_R, got a_L = {a_l}, a_R = {a_r}")]
    SlopeRange { a_l: f64, a_r: f64 },
}

/// Parameters of the map: left/right slopes and the rotation offset `w`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SawtoothParams {
    pub a_l: f64,
    pub a_r: f64,
    pub w: f64,
    /// Kink position `(a_R − 1)/(a_R − a_L)`, in `(0, 1]`.
    pub z_sw: f64,
}

impl SawtoothParams {
    /// Validates `a_L ≤ 1 < a_R` and derives the kink position.
    pub fn new(a_l: f64, a_r: f64, w: f64) -> Result<SawtoothParams, SawtoothError> {
        if !(a_l <= 1.0 && a_r > 1.0) || !a_l.is_finite() || !a_r.is_finite() {
            return Err(SawtoothError::SlopeRange { a_l, a_r });
        }
        let z_sw = (a_r - 1.0) / (a_r - a_l);
        Ok(SawtoothParams { a_l, a_r, w, z_sw })
    }

    /// Same slopes, different offset.
    pub fn with_w(&self, w: f64) -> SawtoothParams {
        SawtoothParams { w, ..*self }
    }

    /// True when the map is an orientation-preserving homeomorphism of the
    /// circle (unique rotation number).
    pub fn invertible(&self) -> bool {
        self.a_l > 0.0
    }

    /// Slope at `z`; the kink itself takes the left slope.
    pub fn slope_at(&self, z: f64) -> f64 {
        if z <= self.z_sw {
            self.a_l
        } else {
            self.a_r
        }
    }
}

/// Unwrapped branch value: `w + a(z − z_sw) + z_sw` without the mod.
pub fn sw_lift(p: &SawtoothParams, z: f64) -> f64 {
    p.w + p.slope_at(z) * (z - p.z_sw) + p.z_sw
}

/// One step of the circle map; the result is wrapped into `[0, 1)`.
pub fn sw_step(p: &SawtoothParams, z: f64) -> f64 {
    wrap_unit(sw_lift(p, z))
}

/// The integer the lift exceeds the wrapped step by.
pub fn delta_k(p: &SawtoothParams, z: f64) -> i64 {
    let lift = sw_lift(p, z);
    let step = wrap_unit(lift);
    (lift - step).round() as i64
}

/// Wraps into `[0, 1)`.
pub fn wrap_unit(z: f64) -> f64 {
    let r = z.rem_euclid(1.0);
    if r >= 1.0 {
        0.0
    } else {
        r
    }
}

/// Distance on the circle of circumference 1.
pub fn circle_dist(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(1.0);
    d.min(1.0 - d)
}

/// Controls for rotation-number measurement.
#[derive(Clone, Copy, Debug)]
pub struct RotationOptions {
    pub transient: usize,
    pub n_iter: usize,
    /// Snap to `p/q` when the estimate is within this of the rational.
    pub snap_tol: f64,
    pub q_max: i64,
    /// Orbit must close to within this for the snap to be confirmed.
    pub closure_tol: f64,
}

impl Default for RotationOptions {
    fn default() -> RotationOptions {
        RotationOptions {
            transient: 1_000,
            n_iter: 20_000,
            snap_tol: tol::SNAP_TOL,
            q_max: tol::SNAP_MAX_DEN,
            closure_tol: tol::ORBIT_CLOSURE_TOL,
        }
    }
}

/// A measured rotation number.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RotationNumber {
    /// Raw displacement average.
    pub estimate: f64,
    /// Confirmed rational `(p, q)`, when the estimate snapped.
    pub snapped: Option<(i64, i64)>,
    /// False when `a_L ≤ 0`, where the rotation number need not be unique.
    pub unique: bool,
}

impl RotationNumber {
    /// Snapped value when confirmed, estimate otherwise.
    pub fn value(&self) -> f64 {
        match self.snapped {
            Some((p, q)) => p as f64 / q as f64,
            None => self.estimate,
        }
    }
}

/// Measures the rotation number from `z₀ = 0` by averaging lift
/// displacements, then snaps to a nearby rational confirmed by orbit closure.
pub fn rotation_number(p: &SawtoothParams, opts: &RotationOptions) -> RotationNumber {
    let mut z = 0.0f64;
    for _ in 0..opts.transient {
        z = sw_step(p, z);
    }
    let mut disp = 0.0f64;
    for _ in 0..opts.n_iter {
        let lift = sw_lift(p, z);
        disp += lift - z;
        z = wrap_unit(lift);
    }
    let estimate = disp / opts.n_iter as f64;
    let snapped = snap_rational(estimate, opts.snap_tol, opts.q_max)
        .filter(|&(_, q)| orbit_closes(p, z, q as usize, opts.closure_tol));
    RotationNumber {
        estimate,
        snapped,
        unique: p.invertible(),
    }
}

/// Smallest-denominator rational within `tol` of `x`, if any.
pub fn snap_rational(x: f64, tolerance: f64, q_max: i64) -> Option<(i64, i64)> {
    for q in 1..=q_max {
        let p = (x * q as f64).round() as i64;
        if (x - p as f64 / q as f64).abs() < tolerance {
            let g = gcd(p.abs().max(1), q);
            return Some((p / g, q / g));
        }
    }
    None
}

fn gcd(mut a: i64, mut b: i64) -> i64 {
    while b != 0 {
        (a, b) = (b, a.rem_euclid(b));
    }
    a
}

fn orbit_closes(p: &SawtoothParams, z: f64, q: usize, tolerance: f64) -> bool {
    let mut y = z;
    for _ in 0..q {
        y = sw_step(p, y);
    }
    circle_dist(y, z) < tolerance
}

/// Lyapunov exponent: average of `ln|slope|` along the orbit from `z₀ = 0`,
/// after a transient. Kink hits take the left slope.
pub fn lyapunov(p: &SawtoothParams, n: usize) -> f64 {
    let mut z = 0.0f64;
    for _ in 0..1_000 {
        z = sw_step(p, z);
    }
    let mut acc = 0.0f64;
    for _ in 0..n {
        acc += p.slope_at(z).abs().ln();
        z = sw_step(p, z);
    }
    acc / n as f64
}

/// One detected periodic orbit of the sawtooth map.
#[derive(Clone, Debug)]
pub struct SawtoothOrbit {
    /// Orbit points starting from the detected phase.
    pub points: Vec<f64>,
    /// Circle wraps per period; rotation number is `wraps/period`.
    pub wraps: i64,
    /// Product of branch slopes along the orbit.
    pub multiplier: f64,
    /// Number of orbit points on the left branch (`z ≤ z_sw`).
    pub count_left: u32,
}

impl SawtoothOrbit {
    pub fn period(&self) -> usize {
        self.points.len()
    }
}

/// Detects a periodic orbit from seed `z₀`: least period `q ≤ q_max` with
/// every point of the sampled window `q`-periodic to `tol`.
pub fn detect_orbit(
    p: &SawtoothParams,
    z0: f64,
    transient: usize,
    q_max: usize,
    tolerance: f64,
) -> Option<SawtoothOrbit> {
    let mut z = z0;
    for _ in 0..transient {
        z = sw_step(p, z);
    }
    let window = 2 * q_max + 1;
    let mut tail = Vec::with_capacity(window);
    tail.push(z);
    for _ in 1..window {
        z = sw_step(p, z);
        tail.push(z);
    }
    for q in 1..=q_max {
        let ok = (0..tail.len() - q).all(|i| circle_dist(tail[i + q], tail[i]) < tolerance);
        if !ok {
            continue;
        }
        let start = tail.len() - q;
        let points: Vec<f64> = tail[start..].to_vec();
        let mut wraps = 0i64;
        let mut multiplier = 1.0f64;
        let mut count_left = 0u32;
        for &zi in &points {
            wraps += delta_k(p, zi);
            multiplier *= p.slope_at(zi);
            if zi <= p.z_sw {
                count_left += 1;
            }
        }
        return Some(SawtoothOrbit {
            points,
            wraps,
            multiplier,
            count_left,
        });
    }
    None
}

/// One cell of a tongue scan.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TongueCell {
    /// Snapped rotation number, when confirmed.
    pub rotation: Option<(i64, i64)>,
    /// Raw rotation estimate.
    pub estimate: f64,
    /// Detected period (0 when no periodic orbit was found).
    pub period: u32,
    /// Stability multiplier of the detected orbit (slope product).
    pub multiplier: f64,
    /// Orbit points on the left branch.
    pub count_left: u32,
}

impl TongueCell {
    pub fn stable(&self) -> bool {
        self.period > 0 && self.multiplier.abs() < 1.0
    }
}

/// Tongue scan results over a `(w, θ)` grid.
#[derive(Clone, Debug)]
pub struct TongueScan {
    /// `w` axis.
    pub x: GridAxis,
    /// `θ` axis.
    pub y: GridAxis,
    /// Row-major cells, `iy * x.count + ix`.
    pub cells: Vec<TongueCell>,
}

impl TongueScan {
    pub fn cell(&self, ix: usize, iy: usize) -> &TongueCell {
        &self.cells[iy * self.x.count + ix]
    }

    /// Standard grid form: rotation labels and stability flags.
    pub fn to_scan_grid(&self) -> ScanGrid {
        let mut g = ScanGrid::new(self.x.clone(), self.y.clone(), "sawtooth-tongues");
        g.cells = self
            .cells
            .iter()
            .map(|c| {
                if c.period == 0 {
                    None
                } else {
                    let (m, n) = c.rotation.unwrap_or((0, 0));
                    Some(CellLock {
                        period: c.period,
                        m: m.unsigned_abs() as u32,
                        n: n as u32,
                        stable: c.stable(),
                    })
                }
            })
            .collect();
        g
    }

    /// Cells where a multiplier crosses −1 between `θ`-neighbours of equal
    /// period: the stability-loss boundary in the non-invertible regime.
    pub fn stability_loss_pairs(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for ix in 0..self.x.count {
            for iy in 0..self.y.count.saturating_sub(1) {
                let a = self.cell(ix, iy);
                let b = self.cell(ix, iy + 1);
                if a.period > 0
                    && a.period == b.period
                    && a.multiplier < 0.0
                    && b.multiplier < 0.0
                    && (a.multiplier + 1.0) * (b.multiplier + 1.0) < 0.0
                {
                    out.push((ix, iy));
                }
            }
        }
        out
    }
}

/// Scans tongues of the sawtooth family over a `(w, θ)` grid.
///
/// `slope_rule` maps `θ` to `(a_L, a_R)`. Each cell measures the rotation
/// number and looks for a periodic orbit from a fixed seed. Rows run in
/// parallel and merge in index order.
pub fn tongue_scan(
    slope_rule: &(dyn Fn(f64) -> (f64, f64) + Sync),
    w_axis: &GridAxis,
    theta_axis: &GridAxis,
    opts: &RotationOptions,
) -> TongueScan {
    let cells: Vec<Vec<TongueCell>> = (0..theta_axis.count)
        .into_par_iter()
        .map(|iy| {
            let theta = theta_axis.value(iy);
            let (a_l, a_r) = slope_rule(theta);
            (0..w_axis.count)
                .map(|ix| {
                    let w = w_axis.value(ix);
                    match SawtoothParams::new(a_l, a_r, w) {
                        Ok(p) => scan_cell(&p, opts),
                        Err(_) => TongueCell {
                            rotation: None,
                            estimate: f64::NAN,
                            period: 0,
                            multiplier: f64::NAN,
                            count_left: 0,
                        },
                    }
                })
                .collect()
        })
        .collect();
    TongueScan {
        x: w_axis.clone(),
        y: theta_axis.clone(),
        cells: cells.into_iter().flatten().collect(),
    }
}

fn scan_cell(p: &SawtoothParams, opts: &RotationOptions) -> TongueCell {
    let rho = rotation_number(p, opts);
    let orbit = detect_orbit(p, 0.25, opts.transient, opts.q_max as usize, 1e-9);
    match orbit {
        Some(o) => TongueCell {
            rotation: Some((o.wraps, o.period() as i64)).map(|(a, b)| {
                let g = gcd(a.abs().max(1), b);
                (a / g, b / g)
            }),
            estimate: rho.estimate,
            period: o.period() as u32,
            multiplier: o.multiplier,
            count_left: o.count_left,
        },
        None => TongueCell {
            rotation: rho.snapped,
            estimate: rho.estimate,
            period: 0,
            multiplier: f64::NAN,
            count_left: 0,
        },
    }
}

/// Counts distinct attractors reached from evenly spaced seeds.
pub fn attractor_count(p: &SawtoothParams, n_seeds: usize) -> usize {
    let mut found: Vec<SawtoothOrbit> = Vec::new();
    for i in 0..n_seeds {
        let z0 = (i as f64 + 0.5) / n_seeds as f64;
        if let Some(orbit) = detect_orbit(p, z0, 2_000, 200, 1e-9) {
            let is_new = !found.iter().any(|o| same_orbit(o, &orbit));
            if is_new {
                found.push(orbit);
            }
        }
    }
    found.len()
}

fn same_orbit(a: &SawtoothOrbit, b: &SawtoothOrbit) -> bool {
    if a.period() != b.period() {
        return false;
    }
    // Compare as point sets on the circle.
    b.points
        .iter()
        .all(|zb| a.points.iter().any(|za| circle_dist(*za, *zb) < 1e-6))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn kink_position_example() {
        let p = SawtoothParams::new(0.5, 2.0, 0.25).unwrap();
        assert_relative_eq!(p.z_sw, 2.0 / 3.0, epsilon = 1e-15);
        assert_relative_eq!(sw_step(&p, 0.0), 0.25 + 0.5 * (-2.0 / 3.0) + 2.0 / 3.0, epsilon = 1e-15);
    }

    #[test]
    fn kink_is_fixed_point_without_offset() {
        let p = SawtoothParams::new(0.5, 2.0, 0.0).unwrap();
        assert_relative_eq!(sw_step(&p, p.z_sw), p.z_sw, epsilon = 1e-15);
    }

    #[test]
    fn branches_agree_at_kink() {
        let p = SawtoothParams::new(0.3, 1.7, 0.37).unwrap();
        let left = p.w + p.a_l * (p.z_sw - p.z_sw) + p.z_sw;
        let right = p.w + p.a_r * (p.z_sw - p.z_sw) + p.z_sw;
        assert!((left - right).abs() < 1e-15);
    }

    #[test]
    fn slope_range_validated() {
        assert!(SawtoothParams::new(1.2, 2.0, 0.0).is_err());
        assert!(SawtoothParams::new(0.5, 0.9, 0.0).is_err());
        assert!(SawtoothParams::new(1.0, 2.0, 0.0).is_ok());
        assert!(SawtoothParams::new(-3.0, 2.0, 0.0).is_ok());
    }

    #[test]
    fn delta_k_is_integral() {
        let mut state = 0x9e3779b97f4a7c15u64;
        let mut next = || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (state >> 11) as f64 / (1u64 << 53) as f64
        };
        for _ in 0..10_000 {
            let a_l = next() * 2.0 - 1.0;
            let a_r = 1.0 + next() * 3.0;
            let w = next();
            let p = SawtoothParams::new(a_l, a_r, w).unwrap();
            let z = next();
            let lift = sw_lift(&p, z);
            let step = sw_step(&p, z);
            let dk = lift - step;
            assert!((dk - dk.round()).abs() < 1e-12);
            assert_eq!(delta_k(&p, z), dk.round() as i64);
        }
    }

    #[test]
    fn rigid_rotation_edge_rotation_number() {
        for &w in &[0.25, 0.375, 0.7] {
            let p = SawtoothParams::new(1.0, 2.0, w).unwrap();
            assert_eq!(p.z_sw, 1.0);
            let rho = rotation_number(&p, &RotationOptions::default());
            assert!(
                (rho.value() - w).abs() < 1e-9,
                "w = {w}: got {}",
                rho.value()
            );
        }
    }

    #[test]
    fn zero_offset_rotation_number_is_zero() {
        let p = SawtoothParams::new(0.5, 2.0, 0.0).unwrap();
        let rho = rotation_number(&p, &RotationOptions::default());
        assert_eq!(rho.snapped, Some((0, 1)));
    }

    #[test]
    fn rotation_number_monotone_in_w() {
        let mut last = -1.0;
        for i in 0..40 {
            let w = i as f64 / 40.0;
            let p = SawtoothParams::new(0.5, 1.8, w).unwrap();
            let rho = rotation_number(&p, &RotationOptions::default()).value();
            assert!(rho >= last - 1e-9, "w = {w}: {rho} < {last}");
            last = rho;
        }
    }

    #[test]
    fn rotation_number_seed_independent_when_invertible() {
        let p = SawtoothParams::new(0.4, 1.9, 0.33).unwrap();
        let opts = RotationOptions::default();
        let mut values = Vec::new();
        for i in 0..16 {
            let mut z = i as f64 / 16.0;
            for _ in 0..opts.transient {
                z = sw_step(&p, z);
            }
            let mut disp = 0.0;
            for _ in 0..opts.n_iter {
                let lift = sw_lift(&p, z);
                disp += lift - z;
                z = wrap_unit(lift);
            }
            values.push(disp / opts.n_iter as f64);
        }
        let spread = values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
            - values.iter().copied().fold(f64::INFINITY, f64::min);
        assert!(spread < 1e-6, "spread = {spread}");
    }

    #[test]
    fn lift_monotone_when_invertible() {
        let p = SawtoothParams::new(0.5, 2.0, 0.37).unwrap();
        let mut last = f64::NEG_INFINITY;
        for i in 0..=1_000 {
            let z = i as f64 / 1_000.0 * (1.0 - 1e-12);
            let lift = sw_lift(&p, z);
            assert!(lift >= last - 1e-12);
            last = lift;
        }
    }

    #[test]
    fn lyapunov_of_stable_orbit_matches_multiplier() {
        let p = SawtoothParams::new(0.5, 2.0, 0.31).unwrap();
        let orbit = detect_orbit(&p, 0.25, 1_000, 200, 1e-9).unwrap();
        let expected = orbit.multiplier.abs().ln() / orbit.period() as f64;
        // Measure over whole periods so the average telescopes exactly.
        let n = (20_000 / orbit.period()) * orbit.period();
        let measured = lyapunov(&p, n);
        assert_relative_eq!(measured, expected, epsilon = 1e-10);
    }

    #[test]
    fn lyapunov_zero_on_rigid_edge() {
        let p = SawtoothParams::new(1.0, 2.0, 0.3333).unwrap();
        assert_relative_eq!(lyapunov(&p, 10_000), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn detect_orbit_finds_fixed_point() {
        // w = 0 fixes the kink; nearby orbits converge to it from the left.
        let p = SawtoothParams::new(0.5, 2.0, 0.0).unwrap();
        let orbit = detect_orbit(&p, 0.1, 1_000, 50, 1e-9).unwrap();
        assert_eq!(orbit.period(), 1);
        assert!(circle_dist(orbit.points[0], p.z_sw) < 1e-6);
    }
}
