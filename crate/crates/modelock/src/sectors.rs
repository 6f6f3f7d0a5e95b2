//! Sector geometry around a shrinking point.
//!
//! Near a shrinking point, the mode-locking regions of the nearby
//! higher-period families accumulate along hyperbola-like curves
//! `r ≈ Γ(θ)/k` in scaled polar coordinates. The annular sector between two
//! consecutive such curves, clipped to an angle window `(θ_min, θ_max)`,
//! carries `(δ, θ)` coordinates in which it is nearly a rectangle, and on it
//! the dynamics reduce to a skew sawtooth map whose slopes depend on `θ`
//! alone. This module builds the polar frame, the `Γ` profile, boundary
//! radii, sector specifications with their corner points, and the sawtooth
//! parameter assignment.

use rayon::prelude::*;
use thiserror::Error;

use crate::linalg;
use crate::plmap::{cycle, word_matrices, ParamSlice, PlmapError};
use crate::sawtooth::{SawtoothError, SawtoothParams};
use crate::shrink::{eta_nu, eta_nu_jacobian, ShrinkError, ShrinkPointData};
use crate::symbolic::{g_word, FamilySign, GFamilyIndex, SymbolWord, SymbolicError};
use crate::tol;

use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI};

/// Errors from sector construction and coordinate transforms.
#[derive(Debug, Error)]
pub enum SectorError {
    #[error("gamma profile has a pole at theta = {0}")]
    GammaPole(f64),
    #[error("tangent pole at theta = {0}")]
    TanPole(f64),
    #[error("theta = {theta} outside sector window ({min}, {max})")]
    ThetaOutsideWindow { theta: f64, min: f64, max: f64 },
    #[error("sector {sign:?}[{k},{dl}] excluded: both slope coefficients negative")]
    Excluded { sign: FamilySign, k: i64, dl: i64 },
    #[error("{what} did not converge, residual {residual:.3e}")]
    NoConvergence { what: String, residual: f64 },
    #[error(transparent)]
    Shrink(#[from] ShrinkError),
    #[error(transparent)]
    Plmap(#[from] PlmapError),
    #[error(transparent)]
    Symbolic(#[from] SymbolicError),
    #[error(transparent)]
    Sawtooth(#[from] SawtoothError),
}

/// Scaled polar coordinates centred on a shrinking point.
#[derive(Clone, Copy, Debug)]
pub struct PolarFrame {
    /// Scale of the first switching coordinate: `|c t_d / a|`.
    pub scale_eta: f64,
    /// Scale of the second: `|c t_{(l-1)d} / a|`.
    pub scale_nu: f64,
    /// The shrinking point.
    pub origin: (f64, f64),
}

impl PolarFrame {
    pub fn new(data: &ShrinkPointData) -> PolarFrame {
        let d = data.base.d;
        let ell = data.base.ell;
        PolarFrame {
            scale_eta: (data.c * data.t_at(d) / data.a).abs(),
            scale_nu: (data.c * data.t_at((ell - 1) * d) / data.a).abs(),
            origin: data.xi,
        }
    }

    /// `(η, ν) → (r, θ)` with `r ≥ 0`, `θ ∈ [0, 2π)`.
    pub fn to_polar(&self, eta: f64, nu: f64) -> (f64, f64) {
        let x = eta / self.scale_eta;
        let y = nu / self.scale_nu;
        let r = x.hypot(y);
        let theta = y.atan2(x).rem_euclid(2.0 * PI);
        (r, theta)
    }

    /// `(r, θ) → (η, ν)`.
    pub fn from_polar(&self, r: f64, theta: f64) -> (f64, f64) {
        (
            self.scale_eta * r * theta.cos(),
            self.scale_nu * r * theta.sin(),
        )
    }
}

/// Radial profile of the accumulation curves: on `(0, π/2)` the ratio
/// `(ln cosθ − ln sinθ)/(cosθ − sinθ)`, extended with period `π/2`; the gap
/// at `π/4` is removable with value `√2`.
pub fn gamma(theta: f64) -> Result<f64, SectorError> {
    let t = theta.rem_euclid(FRAC_PI_2);
    if t < 1e-9 || FRAC_PI_2 - t < 1e-9 {
        return Err(SectorError::GammaPole(theta));
    }
    let c = t.cos();
    let s = t.sin();
    if (c - s).abs() < 1e-5 {
        let u = t - FRAC_PI_4;
        Ok(2.0f64.sqrt() * (1.0 + (5.0 / 6.0) * u * u))
    } else {
        Ok((c.ln() - s.ln()) / (c - s))
    }
}

/// Inverts the switching-coordinate map: finds `ξ` with the requested
/// `(η, ν)`, by Newton iteration started from the linearisation at the
/// shrinking point.
pub fn xi_from_eta_nu(
    slice: &ParamSlice,
    data: &ShrinkPointData,
    target: (f64, f64),
    start: Option<(f64, f64)>,
) -> Result<(f64, f64), SectorError> {
    let j = &data.jacobian;
    let det = j[0][0] * j[1][1] - j[0][1] * j[1][0];
    let mut xi = start.unwrap_or_else(|| {
        (
            data.xi.0 + (j[1][1] * target.0 - j[0][1] * target.1) / det,
            data.xi.1 + (-j[1][0] * target.0 + j[0][0] * target.1) / det,
        )
    });
    let mut residual = f64::INFINITY;
    for _ in 0..tol::NEWTON_MAX_ITER {
        let (eta, nu) = eta_nu(slice, &data.base, xi)?;
        let (re, rn) = (eta - target.0, nu - target.1);
        residual = re.hypot(rn);
        if residual < 1e-13 {
            return Ok(xi);
        }
        let jc = eta_nu_jacobian(slice, &data.base, xi).map_err(SectorError::from)?;
        let dc = jc[0][0] * jc[1][1] - jc[0][1] * jc[1][0];
        if dc.abs() < 1e-18 {
            break;
        }
        let dx = (jc[1][1] * re - jc[0][1] * rn) / dc;
        let dy = (-jc[1][0] * re + jc[0][0] * rn) / dc;
        let mut scale = 1.0;
        let mut advanced = false;
        for _ in 0..8 {
            let trial = (xi.0 - scale * dx, xi.1 - scale * dy);
            if let Ok((te, tn)) = eta_nu(slice, &data.base, trial) {
                if (te - target.0).hypot(tn - target.1) < residual {
                    xi = trial;
                    advanced = true;
                    break;
                }
            }
            scale *= 0.5;
        }
        if !advanced {
            break;
        }
    }
    Err(SectorError::NoConvergence {
        what: "coordinate inversion".into(),
        residual,
    })
}

/// One solved point of a region boundary.
#[derive(Clone, Copy, Debug)]
pub struct BoundaryPoint {
    pub r: f64,
    pub theta: f64,
    /// Cycle index whose switching value vanishes here.
    pub border_index: usize,
    pub xi: (f64, f64),
    /// Achieved `|s|` at the border index.
    pub residual: f64,
}

/// Solves one border condition along the ray `θ`: the switching value of
/// `word` at index `border` vanishes near the radius `r_seed`. The sign
/// change nearest the seed is bracketed over widening windows and bisected.
#[allow(clippy::too_many_arguments)]
fn radial_root(
    slice: &ParamSlice,
    data: &ShrinkPointData,
    frame: &PolarFrame,
    word: &SymbolWord,
    border: usize,
    theta: f64,
    r_seed: f64,
    warm_start: Option<(f64, f64)>,
) -> Result<BoundaryPoint, SectorError> {
    let mut warm = warm_start;
    let mut eval = |r: f64| -> Result<(f64, (f64, f64)), SectorError> {
        let (eta, nu) = frame.from_polar(r, theta);
        let xi = xi_from_eta_nu(slice, data, (eta, nu), warm)?;
        warm = Some(xi);
        let map = slice.eval(xi.0, xi.1);
        let cyc = cycle(&map, word)?;
        Ok((cyc.s_values[border], xi))
    };

    let mut bracket: Option<(f64, f64, f64)> = None;
    for (span, steps) in [(0.08, 6usize), (0.3, 10), (0.6, 20)] {
        let lo = r_seed * (1.0 - span);
        let dr = 2.0 * r_seed * span / steps as f64;
        let values: Vec<Option<f64>> = (0..=steps)
            .map(|i| eval(lo + dr * i as f64).ok().map(|(f, _)| f))
            .collect();
        let mut best_dist = f64::INFINITY;
        for i in 0..steps {
            if let (Some(fa), Some(fb)) = (values[i], values[i + 1]) {
                if fa * fb <= 0.0 {
                    let ra = lo + dr * i as f64;
                    let dist = (ra + 0.5 * dr - r_seed).abs();
                    if dist < best_dist {
                        best_dist = dist;
                        bracket = Some((ra, ra + dr, fa));
                    }
                }
            }
        }
        if bracket.is_some() {
            break;
        }
    }
    let Some((mut ra, mut rb, mut fa)) = bracket else {
        return Err(SectorError::NoConvergence {
            what: format!("border {border} bracket at theta = {theta}"),
            residual: f64::NAN,
        });
    };
    for _ in 0..55 {
        if rb - ra < 1e-14 * r_seed {
            break;
        }
        let rm = 0.5 * (ra + rb);
        let (fm, _) = eval(rm)?;
        if fa * fm <= 0.0 {
            rb = rm;
        } else {
            ra = rm;
            fa = fm;
        }
    }
    let r = 0.5 * (ra + rb);
    let (f, xi) = eval(r)?;
    if f.abs() > tol::BOUNDARY_RESIDUAL_TOL {
        return Err(SectorError::NoConvergence {
            what: format!("border {border} at theta = {theta}"),
            residual: f.abs(),
        });
    }
    Ok(BoundaryPoint {
        r,
        theta,
        border_index: border,
        xi,
        residual: f.abs(),
    })
}

/// The two candidate border indices of a family word.
fn border_indices(idx: &GFamilyIndex) -> [usize; 2] {
    [0usize, ((idx.ell - 1) * idx.d).rem_euclid(idx.n) as usize]
}

/// Solves the boundary condition along the ray `θ` for every candidate
/// border index of the family's word, in index order. The admissible band
/// of the family's mode-locking region lies between the two roots; the band
/// pinches to zero width at the corner points.
pub fn boundary_roots(
    slice: &ParamSlice,
    data: &ShrinkPointData,
    sign: FamilySign,
    k: i64,
    dl: i64,
    theta: f64,
) -> Result<Vec<BoundaryPoint>, SectorError> {
    let (word, idx) = g_word(sign, k, dl, &data.base)?;
    let frame = PolarFrame::new(data);
    let r0 = gamma(theta)? / k as f64;
    Ok(border_indices(&idx)
        .iter()
        .filter_map(|&border| {
            radial_root(slice, data, &frame, &word, border, theta, r0, None).ok()
        })
        .collect())
}

/// Radial position of the inner boundary of the period-`k` family's
/// mode-locking region along the ray `θ`.
///
/// The boundary is where the family's cycle loses admissibility: its
/// switching value vanishes at one of two candidate indices. For each the
/// sign change nearest the seed `Γ(θ)/k` is bracketed and bisected; the
/// smaller root is the inner edge and is returned.
pub fn boundary_r(
    slice: &ParamSlice,
    data: &ShrinkPointData,
    sign: FamilySign,
    k: i64,
    dl: i64,
    theta: f64,
) -> Result<BoundaryPoint, SectorError> {
    boundary_roots(slice, data, sign, k, dl, theta)?
        .into_iter()
        .min_by(|a, b| a.r.partial_cmp(&b.r).unwrap())
        .ok_or(SectorError::NoConvergence {
            what: format!("boundary solve at theta = {theta}"),
            residual: f64::NAN,
        })
}

/// Boundary points along many rays, solved in parallel.
pub fn boundary_polyline(
    slice: &ParamSlice,
    data: &ShrinkPointData,
    sign: FamilySign,
    k: i64,
    dl: i64,
    thetas: &[f64],
) -> Vec<Result<BoundaryPoint, SectorError>> {
    thetas
        .par_iter()
        .map(|&th| boundary_r(slice, data, sign, k, dl, th))
        .collect()
}

/// Transverse sector coordinate: `δ = (1/k)(1 − r/r_k(θ))`, zero on the
/// sector's outer boundary and about `1/k²` on its inner one.
pub fn delta_coord(
    slice: &ParamSlice,
    data: &ShrinkPointData,
    sign: FamilySign,
    k: i64,
    dl: i64,
    r: f64,
    theta: f64,
) -> Result<f64, SectorError> {
    let b = boundary_r(slice, data, sign, k, dl, theta)?;
    Ok((1.0 - r / b.r) / k as f64)
}

/// How a sector corner terminates the boundary arc.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CornerKind {
    /// A shrinking point of the sub-family word.
    SubShrink,
    /// A point where the sub-family cycle has a multiplier of −1.
    StabilityLoss,
}

/// One solved corner of a sector.
#[derive(Clone, Copy, Debug)]
pub struct Corner {
    /// Family size at this corner (`k` or `k+1`).
    pub k: i64,
    /// Family offset of the word that degenerates here.
    pub dl: i64,
    pub kind: CornerKind,
    pub xi: (f64, f64),
    pub r: f64,
    pub theta: f64,
}

/// A sector between consecutive boundary curves, with its angle window,
/// slope coefficients, and (optionally) solved corner points.
#[derive(Clone, Debug)]
pub struct SectorSpec {
    pub sign: FamilySign,
    pub k: i64,
    pub dl: i64,
    /// Angle of the lower-index family member bound to this sector.
    pub theta_lo: f64,
    /// Angle of the higher-index member.
    pub theta_hi: f64,
    /// Slope coefficient of the lower-index member.
    pub kappa_lo: f64,
    /// Slope coefficient of the higher-index member.
    pub kappa_hi: f64,
    /// Solved corner points, when requested.
    pub corners: Vec<Corner>,
}

/// The family offsets whose angles and slope coefficients bound the sector:
/// `(Δl−1, Δl)` for the plus family and `(Δl, Δl+1)` for the minus family,
/// matching the orientation in which flipping the leading symbol moves
/// between the two members.
pub fn member_offsets(sign: FamilySign, dl: i64) -> (i64, i64) {
    match sign {
        FamilySign::Plus => (dl - 1, dl),
        FamilySign::Minus => (dl, dl + 1),
    }
}

impl SectorSpec {
    /// Builds the sector's angle window and slope coefficients. Corners are
    /// left unsolved; see [`sector_corners`].
    pub fn new(
        data: &ShrinkPointData,
        sign: FamilySign,
        k: i64,
        dl: i64,
    ) -> Result<SectorSpec, SectorError> {
        let (lo, hi) = member_offsets(sign, dl);
        let kappa_lo = data.kappa(sign, lo)?;
        let kappa_hi = data.kappa(sign, hi)?;
        if kappa_lo < 0.0 && kappa_hi < 0.0 {
            return Err(SectorError::Excluded { sign, k, dl });
        }
        let theta_lo = data.theta(sign, lo)?;
        let theta_hi = data.theta(sign, hi)?;
        Ok(SectorSpec {
            sign,
            k,
            dl,
            theta_lo,
            theta_hi,
            kappa_lo,
            kappa_hi,
            corners: Vec::new(),
        })
    }

    pub fn theta_min(&self) -> f64 {
        self.theta_lo.min(self.theta_hi)
    }

    pub fn theta_max(&self) -> f64 {
        self.theta_lo.max(self.theta_hi)
    }

    /// True when the two slope coefficients have opposite signs; the left
    /// sawtooth slope is then negative and the approximating map is
    /// non-invertible.
    pub fn mixed(&self) -> bool {
        self.kappa_lo * self.kappa_hi < 0.0
    }

    /// Sawtooth slopes at angle `θ`. Within the window both are finite,
    /// `a_R > 1`, and `a_L ∈ (−1, 1)`.
    pub fn slopes(&self, theta: f64) -> Result<(f64, f64), SectorError> {
        let tan = theta.tan();
        let tan_min = self.theta_min().tan();
        let tan_max = self.theta_max().tan();
        if !tan.is_finite() || !tan_min.is_finite() || !tan_max.is_finite() {
            return Err(SectorError::TanPole(theta));
        }
        let s_l = if self.mixed() { -1.0 } else { 1.0 };
        Ok(match self.sign {
            FamilySign::Plus => (s_l * tan / tan_min, tan / tan_max),
            FamilySign::Minus => (s_l * tan_max / tan, tan_min / tan),
        })
    }

    /// The slope ratio `a_R/a_L`, constant over the sector.
    pub fn slope_ratio(&self) -> f64 {
        let s_l = if self.mixed() { -1.0 } else { 1.0 };
        self.theta_min().tan() / (s_l * self.theta_max().tan())
    }

    /// The same ratio through the determinant/κ route; agreement with
    /// [`SectorSpec::slope_ratio`] cross-checks the two derivations.
    ///
    /// The tangent formulas for the two member angles share a switching-value
    /// prefactor except when the member pair straddles the formula split at
    /// offset zero; there the prefactors combine to `-a/b` through the
    /// four-value determinant identity. The coefficient varies as `1/tan θ`
    /// along the plus family and as `tan θ` along the minus family, so the
    /// weak-to-strong orientation of the ratio flips with the angle ordering
    /// of the two members.
    pub fn kappa_ratio(&self, data: &ShrinkPointData) -> f64 {
        let weight = if self.dl == 0 { -data.a / data.b } else { 1.0 };
        let lo_leads = match self.sign {
            FamilySign::Plus => self.theta_lo > self.theta_hi,
            FamilySign::Minus => self.theta_lo < self.theta_hi,
        };
        if lo_leads {
            weight * self.kappa_lo / self.kappa_hi
        } else {
            self.kappa_hi / (weight * self.kappa_lo)
        }
    }

    /// Closure form of [`SectorSpec::slopes`] for tongue scans.
    pub fn slope_rule(&self) -> impl Fn(f64) -> (f64, f64) + Sync + '_ {
        move |theta| self.slopes(theta).unwrap_or((f64::NAN, f64::NAN))
    }
}

/// Sawtooth parameters at sector coordinates `(δ, θ)`: slopes from the
/// angle, offset `w = k²δ`.
pub fn sector_params(
    spec: &SectorSpec,
    delta: f64,
    theta: f64,
) -> Result<SawtoothParams, SectorError> {
    let (a_l, a_r) = spec.slopes(theta)?;
    let w = (spec.k * spec.k) as f64 * delta;
    Ok(SawtoothParams::new(a_l, a_r, w)?)
}

/// Parameter point at sector coordinates `(δ, θ)`: radius from the solved
/// boundary, then the coordinate inversion.
pub fn deltatheta_to_xi(
    slice: &ParamSlice,
    data: &ShrinkPointData,
    spec: &SectorSpec,
    delta: f64,
    theta: f64,
) -> Result<(f64, f64), SectorError> {
    let b = boundary_r(slice, data, spec.sign, spec.k, spec.dl, theta)?;
    let r = b.r * (1.0 - spec.k as f64 * delta);
    let frame = PolarFrame::new(data);
    let target = frame.from_polar(r, theta);
    xi_from_eta_nu(slice, data, target, Some(b.xi))
}

/// Builds the sector and solves its four corner points: for each of the two
/// bounding family offsets at sizes `k` and `k+1`, either the sub-family
/// shrinking point (positive coefficient) or the stability-loss point where
/// the sub-family cycle's multiplier is −1 (negative coefficient).
pub fn sector_corners(
    slice: &ParamSlice,
    data: &ShrinkPointData,
    sign: FamilySign,
    k: i64,
    dl: i64,
) -> Result<SectorSpec, SectorError> {
    let mut spec = SectorSpec::new(data, sign, k, dl)?;
    let (lo, hi) = member_offsets(sign, dl);
    let frame = PolarFrame::new(data);
    let theta_mid = 0.5 * (spec.theta_lo + spec.theta_hi);
    let mut corners = Vec::with_capacity(4);
    for &kk in &[k, k + 1] {
        for &(member, kappa, theta_c) in &[
            (lo, spec.kappa_lo, spec.theta_lo),
            (hi, spec.kappa_hi, spec.theta_hi),
        ] {
            let corner = CornerSolve {
                sign,
                k: kk,
                dl,
                member,
                kappa,
                theta_c,
                theta_mid,
            }
            .run(slice, data, &frame)?;
            corners.push(corner);
        }
    }
    spec.corners = corners;
    Ok(spec)
}

/// One border root curve of a family's band, tracked along `θ` by
/// continuation: each solve is seeded with this branch's previous radius
/// and parameter point, so the walk follows the same root branch through
/// regions where the cold `Γ(θ)/k` seed is poor.
struct BranchTracker<'a> {
    slice: &'a ParamSlice,
    data: &'a ShrinkPointData,
    frame: &'a PolarFrame,
    word: &'a SymbolWord,
    border: usize,
    k: i64,
    seed: Option<f64>,
    warm: Option<(f64, f64)>,
}

impl<'a> BranchTracker<'a> {
    fn root_at(&mut self, theta: f64) -> Result<BoundaryPoint, SectorError> {
        let r_seed = match self.seed {
            Some(r) => r,
            None => gamma(theta)? / self.k as f64,
        };
        let b = radial_root(
            self.slice, self.data, self.frame, self.word, self.border, theta, r_seed, self.warm,
        )?;
        self.seed = Some(b.r);
        self.warm = Some(b.xi);
        Ok(b)
    }
}

/// One corner solve of [`sector_corners`].
struct CornerSolve {
    sign: FamilySign,
    k: i64,
    dl: i64,
    member: i64,
    kappa: f64,
    theta_c: f64,
    theta_mid: f64,
}

impl CornerSolve {
    fn run(
        &self,
        slice: &ParamSlice,
        data: &ShrinkPointData,
        frame: &PolarFrame,
    ) -> Result<Corner, SectorError> {
        let (word_dl, idx) = g_word(self.sign, self.k, self.dl, &data.base)?;
        let borders = border_indices(&idx);
        let (xi, kind) = if self.kappa > 0.0 {
            // The corner is the sub-family's shrinking point. Root-curve
            // continuation cannot be trusted here: the curves can fold
            // back in angle or run against poles of the cycle solve near
            // the corner. The shrinking-point solve itself has a wide
            // basin and rejects the inadmissible virtual roots nearby, so
            // a fan of seeds around the member angle at the mid-sector
            // band radius is tried and the first located point inside the
            // angular acceptance window wins.
            (self.seed_fan(slice, data, frame)?, CornerKind::SubShrink)
        } else {
            // The bounding family's cycle reaches a multiplier of −1 on
            // the sector's own boundary arc; the crossing seeds a 2D
            // Newton on both conditions.
            let (word_member, _) = g_word(self.sign, self.k, self.member, &data.base)?;
            let seed = self.walk(slice, data, frame, &word_dl, borders, |slice, _, b| {
                Ok(multiplier_offset(slice, &word_member, b.xi))
            })?;
            let border = seed.border_index;
            let residual_fn = |xi: (f64, f64)| -> Result<(f64, f64), SectorError> {
                let map = slice.eval(xi.0, xi.1);
                let cyc = cycle(&map, &word_dl)?;
                Ok((
                    multiplier_offset(slice, &word_member, xi),
                    cyc.s_values[border],
                ))
            };
            let xi = newton_2d(residual_fn, seed.xi, 1e-11)?;
            (xi, CornerKind::StabilityLoss)
        };
        let (eta, nu) = eta_nu(slice, &data.base, xi)?;
        let (r, theta) = frame.to_polar(eta, nu);
        Ok(Corner {
            k: self.k,
            dl: self.member,
            kind,
            xi,
            r,
            theta,
        })
    }

    /// Locates the sub-family shrinking point from a fan of seeds around
    /// the member angle. Accepts the first located point whose angle falls
    /// inside the expected window around the member angle.
    fn seed_fan(
        &self,
        slice: &ParamSlice,
        data: &ShrinkPointData,
        frame: &PolarFrame,
    ) -> Result<(f64, f64), SectorError> {
        let r_mid = boundary_r(slice, data, self.sign, self.k, self.dl, self.theta_mid)?.r;
        let params = GFamilyIndex::new(self.sign, self.k, self.member, &data.base)?.params();
        let window = 1.8 / self.k as f64;
        let mut offsets = vec![0.0];
        for j in 1..=4 {
            let dt = 0.2 * j as f64 * window;
            offsets.push(-dt);
            offsets.push(dt);
        }
        for &dt in &offsets {
            for &fr in &[1.0, 0.85, 1.2, 0.7, 1.4] {
                let target = frame.from_polar(fr * r_mid, self.theta_c + dt);
                let Ok(seed) = xi_from_eta_nu(slice, data, target, None) else {
                    continue;
                };
                let Ok(sub) = crate::shrink::locate(slice, &params, seed, 1e-12) else {
                    continue;
                };
                let (eta, nu) = eta_nu(slice, &data.base, sub.xi)?;
                let (_, th) = frame.to_polar(eta, nu);
                let wrapped = (th - self.theta_c).rem_euclid(std::f64::consts::TAU);
                let dist = wrapped.min(std::f64::consts::TAU - wrapped);
                if dist <= window {
                    return Ok(sub.xi);
                }
            }
        }
        Err(SectorError::NoConvergence {
            what: format!(
                "sub-family shrinking point near theta = {:.4} at k = {}",
                self.theta_c, self.k
            ),
            residual: f64::NAN,
        })
    }

    /// Walks `θ` from mid-sector toward the corner angle and a little past
    /// it, tracking each border root curve by continuation, until the
    /// criterion changes sign on either branch; the crossing is then
    /// bisected along that branch. The two branches are advanced
    /// independently so the walk survives one of them losing its root.
    fn walk<C>(
        &self,
        slice: &ParamSlice,
        data: &ShrinkPointData,
        frame: &PolarFrame,
        word: &SymbolWord,
        borders: [usize; 2],
        criterion: C,
    ) -> Result<BoundaryPoint, SectorError>
    where
        C: Fn(&ParamSlice, usize, &BoundaryPoint) -> Result<f64, SectorError>,
    {
        let mut trackers = borders.map(|border| BranchTracker {
            slice,
            data,
            frame,
            word,
            border,
            k: self.k,
            seed: None,
            warm: None,
        });
        let dir = (self.theta_c - self.theta_mid).signum();
        let theta_stop = self.theta_c + dir * 1.2 / self.k as f64;
        let dtheta = (0.25 / self.k as f64).min(0.035);
        let steps = ((theta_stop - self.theta_mid).abs() / dtheta).ceil() as usize;
        let mut prev: [Option<(f64, f64)>; 2] = [None, None];
        for i in 0..=steps {
            let theta = {
                let t = self.theta_mid + dir * dtheta * i as f64;
                if dir > 0.0 {
                    t.min(theta_stop)
                } else {
                    t.max(theta_stop)
                }
            };
            for j in 0..2 {
                let Ok(b) = trackers[j].root_at(theta) else {
                    continue;
                };
                let Ok(g) = criterion(slice, j, &b) else {
                    continue;
                };
                if let Some((tp, gp)) = prev[j] {
                    if gp * g <= 0.0 {
                        let (mut ta, mut tb, mut fa) = if tp < theta {
                            (tp, theta, gp)
                        } else {
                            (theta, tp, g)
                        };
                        for _ in 0..45 {
                            if tb - ta < 1e-9 {
                                break;
                            }
                            let tm = 0.5 * (ta + tb);
                            let Ok(bm) = trackers[j].root_at(tm) else { break };
                            let Ok(gm) = criterion(slice, j, &bm) else { break };
                            if fa * gm <= 0.0 {
                                tb = tm;
                            } else {
                                ta = tm;
                                fa = gm;
                            }
                        }
                        let tm = 0.5 * (ta + tb);
                        return trackers[j]
                            .root_at(tm)
                            .or_else(|_| trackers[j].root_at(ta));
                    }
                }
                prev[j] = Some((theta, g));
            }
        }
        Err(SectorError::NoConvergence {
            what: format!(
                "corner walk toward theta = {:.4} at k = {}",
                self.theta_c, self.k
            ),
            residual: f64::NAN,
        })
    }
}

/// Real part plus one of the cycle multiplier closest to −1.
fn multiplier_offset(slice: &ParamSlice, word: &SymbolWord, xi: (f64, f64)) -> f64 {
    let map = slice.eval(xi.0, xi.1);
    let (m, _) = word_matrices(&map, word);
    let eigs = linalg::complex_eigenvalues(&m);
    let mult = eigs
        .iter()
        .min_by(|a, b| {
            let da = (*a + 1.0).norm();
            let db = (*b + 1.0).norm();
            da.partial_cmp(&db).unwrap()
        })
        .copied()
        .expect("nonempty spectrum");
    mult.re + 1.0
}

/// Damped 2D Newton with a finite-difference Jacobian.
fn newton_2d<F>(f: F, guess: (f64, f64), tolerance: f64) -> Result<(f64, f64), SectorError>
where
    F: Fn((f64, f64)) -> Result<(f64, f64), SectorError>,
{
    let mut xi = guess;
    let (mut r0, mut r1) = f(xi)?;
    let mut norm = r0.hypot(r1);
    for _ in 0..tol::NEWTON_MAX_ITER {
        if norm < tolerance {
            return Ok(xi);
        }
        let mut jac = [[0.0f64; 2]; 2];
        for col in 0..2 {
            let x = if col == 0 { xi.0 } else { xi.1 };
            let h = tol::FD_STEP * (1.0 + x.abs());
            let mut plus = xi;
            let mut minus = xi;
            if col == 0 {
                plus.0 += h;
                minus.0 -= h;
            } else {
                plus.1 += h;
                minus.1 -= h;
            }
            let (p0, p1) = f(plus)?;
            let (m0, m1) = f(minus)?;
            jac[0][col] = (p0 - m0) / (2.0 * h);
            jac[1][col] = (p1 - m1) / (2.0 * h);
        }
        let det = jac[0][0] * jac[1][1] - jac[0][1] * jac[1][0];
        if det.abs() < 1e-300 {
            break;
        }
        let dx = (-r0 * jac[1][1] + r1 * jac[0][1]) / det;
        let dy = (-r1 * jac[0][0] + r0 * jac[1][0]) / det;
        let mut step = 1.0f64;
        let mut accepted = false;
        for _ in 0..10 {
            let trial = (xi.0 + step * dx, xi.1 + step * dy);
            if let Ok((t0, t1)) = f(trial) {
                let tn = t0.hypot(t1);
                if tn < norm {
                    xi = trial;
                    r0 = t0;
                    r1 = t1;
                    norm = tn;
                    accepted = true;
                    break;
                }
            }
            step *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    if norm < tolerance {
        Ok(xi)
    } else {
        Err(SectorError::NoConvergence {
            what: "2d solve".into(),
            residual: norm,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::shrink::locate;
    use crate::symbolic::RotationalParams;
    use approx::assert_relative_eq;

    fn fig1_slice() -> ParamSlice {
        ParamSlice::by_name("bcnf3-fig1").unwrap()
    }

    fn point_338() -> ShrinkPointData {
        let base = RotationalParams::new(3, 3, 8).unwrap();
        locate(&fig1_slice(), &base, (-1.45, 0.1), 1e-12).unwrap()
    }

    fn point_225() -> ShrinkPointData {
        let base = RotationalParams::new(2, 2, 5).unwrap();
        locate(&fig1_slice(), &base, (-2.12, 0.17), 1e-12).unwrap()
    }

    #[test]
    fn gamma_centre_value_and_continuity() {
        assert_relative_eq!(gamma(FRAC_PI_4).unwrap(), 2.0f64.sqrt(), epsilon = 1e-15);
        for &du in &[1e-6, -1e-6, 1e-4, -1e-4] {
            let g = gamma(FRAC_PI_4 + du).unwrap();
            assert!((g - 2.0f64.sqrt()).abs() < 1e-7, "du = {du}: {g}");
        }
        // No jump across the series/direct switch.
        let a = gamma(FRAC_PI_4 + 7.0e-6).unwrap();
        let b = gamma(FRAC_PI_4 + 7.2e-6).unwrap();
        assert!((a - b).abs() < 1e-8);
    }

    #[test]
    fn gamma_periodic_and_poles() {
        for &t in &[0.3, 0.7, 1.1] {
            assert_relative_eq!(
                gamma(t).unwrap(),
                gamma(t + FRAC_PI_2).unwrap(),
                epsilon = 1e-12
            );
            assert_relative_eq!(gamma(t).unwrap(), gamma(t + PI).unwrap(), epsilon = 1e-12);
        }
        assert!(gamma(0.0).is_err());
        assert!(gamma(FRAC_PI_2).is_err());
        assert!(gamma(PI).is_err());
    }

    #[test]
    fn polar_round_trip() {
        let data = point_338();
        let frame = PolarFrame::new(&data);
        assert!(frame.scale_eta > 0.0 && frame.scale_nu > 0.0);
        let (r0, _) = frame.to_polar(0.0, 0.0);
        assert_eq!(r0, 0.0);
        for &(r, th) in &[(0.3, 5.2), (0.05, 2.0), (1.0, 0.4)] {
            let (eta, nu) = frame.from_polar(r, th);
            let (r2, th2) = frame.to_polar(eta, nu);
            assert_relative_eq!(r, r2, epsilon = 1e-12);
            assert_relative_eq!(th, th2, epsilon = 1e-12);
        }
    }

    #[test]
    fn sector_ratios_golden_338() {
        let data = point_338();
        let s20 = SectorSpec::new(&data, FamilySign::Plus, 2, 0).unwrap();
        assert_relative_eq!(s20.slope_ratio(), 14.7884, epsilon = 1e-3);
        assert_relative_eq!(s20.theta_min(), 5.1288, epsilon = 1e-3);
        assert_relative_eq!(s20.theta_max(), 6.1315, epsilon = 1e-3);
        let s31 = SectorSpec::new(&data, FamilySign::Plus, 3, 1).unwrap();
        assert_relative_eq!(s31.slope_ratio(), 1.5856, epsilon = 1e-3);
    }

    #[test]
    fn sector_ratios_golden_225() {
        let data = point_225();
        let plus = SectorSpec::new(&data, FamilySign::Plus, 5, 0).unwrap();
        assert_relative_eq!(plus.slope_ratio(), -38.0 / 3.0, epsilon = 1e-3);
        assert!(plus.mixed());
        let minus = SectorSpec::new(&data, FamilySign::Minus, 5, 0).unwrap();
        assert_relative_eq!(minus.slope_ratio(), 21.5, epsilon = 1e-3);
        assert!(!minus.mixed());
    }

    #[test]
    fn slope_ratio_agrees_with_kappa_route() {
        let data338 = point_338();
        let data225 = point_225();
        let cases = [
            (&data338, FamilySign::Plus, 2, 0),
            (&data338, FamilySign::Plus, 3, 1),
            (&data338, FamilySign::Minus, 3, 0),
            (&data338, FamilySign::Minus, 3, 1),
            (&data225, FamilySign::Plus, 5, 0),
            // The dl = 1 member angle exceeds the dl = 0 angle here, the
            // reverse of every other plus-family case in this list.
            (&data225, FamilySign::Plus, 5, 1),
            (&data225, FamilySign::Minus, 5, 0),
            (&data225, FamilySign::Minus, 5, 1),
        ];
        for (data, sign, k, dl) in cases {
            let spec = SectorSpec::new(data, sign, k, dl).unwrap();
            let tan_route = spec.slope_ratio();
            let kappa_route = spec.kappa_ratio(data);
            assert_relative_eq!(tan_route, kappa_route, epsilon = 1e-6);
        }
    }

    #[test]
    fn boundary_radius_near_gamma_profile() {
        let data = point_338();
        let slice = fig1_slice();
        let spec = SectorSpec::new(&data, FamilySign::Plus, 2, 0).unwrap();
        let theta = 0.5 * (spec.theta_min() + spec.theta_max());
        for k in 2..=4 {
            let b = boundary_r(&slice, &data, FamilySign::Plus, k, 0, theta).unwrap();
            assert!(b.residual < tol::BOUNDARY_RESIDUAL_TOL);
            let g = gamma(theta).unwrap();
            let err = (k as f64 * b.r - g).abs() / g;
            assert!(err < 0.5, "k = {k}: k*r = {}, gamma = {g}", k as f64 * b.r);
        }
    }

    #[test]
    fn boundary_admissible_on_region_side() {
        let data = point_338();
        let slice = fig1_slice();
        let spec = SectorSpec::new(&data, FamilySign::Plus, 2, 0).unwrap();
        let theta = 0.5 * (spec.theta_min() + spec.theta_max());
        let b = boundary_r(&slice, &data, FamilySign::Plus, 2, 0, theta).unwrap();
        let (word, _) = g_word(FamilySign::Plus, 2, 0, &data.base).unwrap();
        let frame = PolarFrame::new(&data);
        let probe = |r: f64| {
            let target = frame.from_polar(r, theta);
            let xi = xi_from_eta_nu(&slice, &data, target, Some(b.xi)).unwrap();
            let map = slice.eval(xi.0, xi.1);
            cycle(&map, &word).unwrap().admissible(tol::ADMISSIBLE_TOL)
        };
        let eps = 1e-6 * b.r;
        let outside = probe(b.r + eps);
        let inside = probe(b.r - eps);
        assert!(
            outside != inside,
            "admissibility must change across the boundary"
        );
    }

    #[test]
    fn delta_and_xi_round_trip() {
        let data = point_338();
        let slice = fig1_slice();
        let spec = SectorSpec::new(&data, FamilySign::Plus, 2, 0).unwrap();
        let theta = 0.5 * (spec.theta_min() + spec.theta_max());
        let delta = 1.0 / (2.0 * (spec.k * spec.k) as f64);
        let xi = deltatheta_to_xi(&slice, &data, &spec, delta, theta).unwrap();
        let (eta, nu) = eta_nu(&slice, &data.base, xi).unwrap();
        let frame = PolarFrame::new(&data);
        let (r, th) = frame.to_polar(eta, nu);
        let d2 = delta_coord(&slice, &data, spec.sign, spec.k, spec.dl, r, th).unwrap();
        assert_relative_eq!(th, theta, epsilon = 1e-8);
        assert_relative_eq!(d2, delta, epsilon = 1e-8);
    }

    #[test]
    fn sector_params_slopes_and_offset() {
        let data = point_338();
        let spec = SectorSpec::new(&data, FamilySign::Plus, 2, 0).unwrap();
        let theta = 0.5 * (spec.theta_min() + spec.theta_max());
        let p = sector_params(&spec, 0.1, theta).unwrap();
        assert_relative_eq!(p.w, 0.4, epsilon = 1e-12);
        assert!(p.a_l < 1.0 && p.a_r > 1.0);
        assert_relative_eq!(p.a_r / p.a_l, spec.slope_ratio(), epsilon = 1e-12);
        // Slopes approach 1 at the respective window ends.
        let near_min = spec.slopes(spec.theta_min() + 1e-9).unwrap();
        let near_max = spec.slopes(spec.theta_max() - 1e-9).unwrap();
        assert_relative_eq!(near_min.0, 1.0, epsilon = 1e-6);
        assert_relative_eq!(near_max.1, 1.0, epsilon = 1e-6);
    }

    #[test]
    fn corners_near_member_angles() {
        let data = point_338();
        let slice = fig1_slice();
        let spec = sector_corners(&slice, &data, FamilySign::Plus, 2, 0).unwrap();
        assert_eq!(spec.corners.len(), 4);
        for corner in &spec.corners {
            assert_eq!(corner.kind, CornerKind::SubShrink);
            let expected = if corner.dl == spec.dl {
                spec.theta_hi
            } else {
                spec.theta_lo
            };
            let err = (corner.theta - expected).abs();
            assert!(
                err < 2.0 / corner.k as f64,
                "corner k={} dl={}: theta {} vs {expected}",
                corner.k,
                corner.dl,
                corner.theta
            );
        }
    }

    #[test]
    fn stability_loss_corner_225() {
        let data = point_225();
        let slice = fig1_slice();
        let spec = sector_corners(&slice, &data, FamilySign::Plus, 5, 0).unwrap();
        // The higher-index member has negative coefficient, so its corners
        // are stability-loss points; the lower-index corners are sub-family
        // shrinking points.
        for corner in &spec.corners {
            if corner.dl == 0 {
                assert_eq!(corner.kind, CornerKind::StabilityLoss);
            } else {
                assert_eq!(corner.kind, CornerKind::SubShrink);
            }
        }
    }
}
