//! Shrinking points: codimension-two parameter points where a mode-locking
//! region pinches to zero width.
//!
//! At such a point the cycle matrix of the rotational word `S = F[l,m,n]`
//! acquires a unit eigenvalue, and the cycle of the 0-flipped word has
//! switching values vanishing exactly at indices `0` and `l·d mod n`. This
//! module locates these points in a two-parameter slice by Newton iteration
//! and computes the scalar and eigenvector data attached to them, including
//! the `κ` coefficients and `θ` angles that organise the nearby sectors.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex;
use thiserror::Error;

use crate::linalg::{self, LinalgError};
use crate::plmap::{cycle, word_matrices, AffinePair, ParamSlice, PlmapError};
use crate::symbolic::{flip_at, shift, FamilySign, RotationalParams};
use crate::tol;

/// Errors from locating or analysing a shrinking point.
#[derive(Debug, Error)]
pub enum ShrinkError {
    #[error("word F[{ell},{m},{n}] needs 2 <= l <= n-2 for a shrinking point")]
    BadWord { ell: i64, m: i64, n: i64 },
    #[error("Newton did not converge in {iters} iterations, residual {residual:.3e}")]
    NoConvergence { iters: usize, residual: f64 },
    #[error("genericity failure: {0}")]
    NotGeneric(String),
    #[error("flipped-word cycle is not admissible at the located point")]
    NotAdmissible,
    #[error("switching value t_{index} = {value:.3e} is too close to zero")]
    SpuriousZero { index: usize, value: f64 },
    #[error("unit eigenvalue residual |lambda - 1| = {0:.3e} too large")]
    UnitEigenResidual(f64),
    #[error("unit eigenvalues of shifted-word matrices disagree by {0:.3e}")]
    EigenMismatch(f64),
    #[error("kappa vanishes at dl = {0}, angle undefined")]
    KappaZero(i64),
    #[error("coordinate Jacobian is singular, det = {0:.3e}")]
    SingularJacobian(f64),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Plmap(#[from] PlmapError),
}

/// Left/right eigenvector pair of one shifted-word cycle matrix for its unit
/// eigenvalue, normalised by `uᵀv = 1` and `e₁ᵀv = 1`.
#[derive(Clone, Debug)]
pub struct EigenFrame {
    /// Shift index of the word this frame belongs to (reduced mod n).
    pub j: usize,
    pub value: f64,
    pub u: DVector<f64>,
    pub v: DVector<f64>,
}

/// Everything computed at a located shrinking point.
#[derive(Clone, Debug)]
pub struct ShrinkPointData {
    pub base: RotationalParams,
    /// Located parameter point in the slice.
    pub xi: (f64, f64),
    /// The map at `xi`.
    pub map: AffinePair,
    /// Cycle points of the 0-flipped word.
    pub y: Vec<DVector<f64>>,
    /// Their switching values; zero at indices 0 and `l·d mod n`.
    pub t: Vec<f64>,
    /// `det(I − M)` for the 0-flipped word.
    pub a: f64,
    /// `det(I − M)` for the word flipped at `l·d mod n`.
    pub b: f64,
    /// Product of `1 − ρ_j` over the non-unit eigenvalues of the base-word
    /// cycle matrix.
    pub c: f64,
    /// Largest modulus among the non-unit eigenvalues.
    pub rho_max: f64,
    /// All eigenvalues of the base-word cycle matrix, unit one first.
    pub rho: Vec<Complex<f64>>,
    /// Jacobian of the two switching coordinates with respect to the slice
    /// parameters, by central differences.
    pub jacobian: [[f64; 2]; 2],
    /// Unit eigenvalue of the `(−d)`-shifted word's cycle matrix.
    pub lambda: f64,
    /// Its left eigenvector, normalised `ωᵀζ = 1`.
    pub omega: DVector<f64>,
    /// Its right eigenvector, normalised `e₁ᵀζ = 1`.
    pub zeta: DVector<f64>,
    frames: [EigenFrame; 4],
}

/// Genericity quantities with pass/fail flags.
#[derive(Clone, Copy, Debug)]
pub struct GenericityReport {
    /// `e₁ᵀ adj(I − A_L) B`.
    pub adj_term: f64,
    /// `det(I − M)` of the 0-flipped word.
    pub a: f64,
    /// `det(I − M)` of the word flipped at `l·d mod n`.
    pub b: f64,
    pub rho_max: f64,
    pub c: f64,
    /// All three scalars clear the singularity threshold.
    pub generic: bool,
    /// `rho_max < 1`: nearby cycles are attracting on one side, so the point
    /// joins a genuine mode-locking region.
    pub mode_locking: bool,
}

/// Switching values at indices 0 and `l·d mod n` of the 0-flipped word's
/// cycle: the two coordinates that vanish at a shrinking point.
pub fn eta_nu(
    slice: &ParamSlice,
    base: &RotationalParams,
    xi: (f64, f64),
) -> Result<(f64, f64), ShrinkError> {
    let map = slice.eval(xi.0, xi.1);
    let w0 = flip_at(&base.word(), 0).expect("index 0 in range");
    let cyc = cycle(&map, &w0)?;
    let ld = base.ell_d_mod_n() as usize;
    Ok((cyc.s_values[0], cyc.s_values[ld]))
}

/// Central-difference Jacobian of [`eta_nu`] with respect to the slice
/// parameters.
pub fn eta_nu_jacobian(
    slice: &ParamSlice,
    base: &RotationalParams,
    xi: (f64, f64),
) -> Result<[[f64; 2]; 2], ShrinkError> {
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
        let (ep, np) = eta_nu(slice, base, plus)?;
        let (em, nm) = eta_nu(slice, base, minus)?;
        jac[0][col] = (ep - em) / (2.0 * h);
        jac[1][col] = (np - nm) / (2.0 * h);
    }
    Ok(jac)
}

/// Locates a shrinking point of the word `base` by a damped 2D Newton
/// iteration on the two vanishing switching values, then computes and
/// validates all attached data.
pub fn locate(
    slice: &ParamSlice,
    base: &RotationalParams,
    guess: (f64, f64),
    tolerance: f64,
) -> Result<ShrinkPointData, ShrinkError> {
    if base.ell < 2 || base.ell > base.n - 2 {
        return Err(ShrinkError::BadWord {
            ell: base.ell,
            m: base.m,
            n: base.n,
        });
    }
    let mut xi = guess;
    let (mut eta, mut nu) = eta_nu(slice, base, xi)?;
    let mut residual = eta.hypot(nu);
    let mut converged = residual < tolerance;
    for iter in 0..tol::NEWTON_MAX_ITER {
        if converged {
            break;
        }
        let jac = eta_nu_jacobian(slice, base, xi)?;
        let det = jac[0][0] * jac[1][1] - jac[0][1] * jac[1][0];
        if det.abs() < tol::SINGULAR_TOL {
            return Err(ShrinkError::SingularJacobian(det));
        }
        let dx = (-eta * jac[1][1] + nu * jac[0][1]) / det;
        let dy = (-nu * jac[0][0] + eta * jac[1][0]) / det;
        let mut step = 1.0f64;
        let mut accepted = false;
        for _ in 0..10 {
            let trial = (xi.0 + step * dx, xi.1 + step * dy);
            match eta_nu(slice, base, trial) {
                Ok((e, n)) => {
                    let r = e.hypot(n);
                    if r < residual {
                        xi = trial;
                        eta = e;
                        nu = n;
                        residual = r;
                        accepted = true;
                        break;
                    }
                }
                Err(_) => {}
            }
            step *= 0.5;
        }
        if !accepted {
            return Err(ShrinkError::NoConvergence {
                iters: iter + 1,
                residual,
            });
        }
        converged = residual < tolerance;
    }
    if !converged {
        return Err(ShrinkError::NoConvergence {
            iters: tol::NEWTON_MAX_ITER,
            residual,
        });
    }
    build_data(slice, base, xi)
}

fn build_data(
    slice: &ParamSlice,
    base: &RotationalParams,
    xi: (f64, f64),
) -> Result<ShrinkPointData, ShrinkError> {
    let map = slice.eval(xi.0, xi.1);
    let word = base.word();
    let n = base.n as usize;
    let ld = base.ell_d_mod_n() as usize;

    let w0 = flip_at(&word, 0).expect("index 0 in range");
    let wld = flip_at(&word, ld).expect("index l*d in range");
    let cyc = cycle(&map, &w0)?;
    if !cyc.admissible(tol::ADMISSIBLE_TOL) {
        return Err(ShrinkError::NotAdmissible);
    }
    for (i, &ti) in cyc.s_values.iter().enumerate() {
        if i != 0 && i != ld && ti.abs() <= tol::T_MARGIN {
            return Err(ShrinkError::SpuriousZero { index: i, value: ti });
        }
    }

    let (m0, _) = word_matrices(&map, &w0);
    let (mld, _) = word_matrices(&map, &wld);
    let dim = map.dim();
    let eye = DMatrix::<f64>::identity(dim, dim);
    let a = (&eye - &m0).determinant();
    let b = (&eye - &mld).determinant();

    let adj_term = adjugate_first_row_dot(&(&eye - map.a_left()), map.b());
    let generic_scale = 1.0 + linalg::max_row_sum(map.a_left());
    if adj_term.abs() < tol::SINGULAR_TOL * generic_scale {
        return Err(ShrinkError::NotGeneric(format!(
            "e1.adj(I - A_L).B = {adj_term:.3e}"
        )));
    }
    if a.abs() < tol::SINGULAR_TOL * generic_scale {
        return Err(ShrinkError::NotGeneric(format!("a = {a:.3e}")));
    }
    if b.abs() < tol::SINGULAR_TOL * generic_scale {
        return Err(ShrinkError::NotGeneric(format!("b = {b:.3e}")));
    }

    let (m_s, _) = word_matrices(&map, &word);
    let rho_all = linalg::complex_eigenvalues(&m_s);
    let unit_idx = (0..rho_all.len())
        .min_by(|&i, &j| {
            let di = (rho_all[i] - 1.0).norm();
            let dj = (rho_all[j] - 1.0).norm();
            di.partial_cmp(&dj).unwrap()
        })
        .expect("nonempty spectrum");
    let unit_dist = (rho_all[unit_idx] - 1.0).norm();
    if unit_dist > tol::UNIT_EIG_RESIDUAL {
        return Err(ShrinkError::UnitEigenResidual(unit_dist));
    }
    let mut rho = vec![rho_all[unit_idx]];
    let mut rho_max = 0.0f64;
    let mut c_complex = Complex::new(1.0, 0.0);
    for (i, &r) in rho_all.iter().enumerate() {
        if i == unit_idx {
            continue;
        }
        if (r - 1.0).norm() < tol::EIG_SEPARATION {
            return Err(ShrinkError::NotGeneric(format!(
                "unit eigenvalue is not simple: second eigenvalue at {r}"
            )));
        }
        rho.push(r);
        rho_max = rho_max.max(r.norm());
        c_complex *= Complex::new(1.0, 0.0) - r;
    }
    let c = c_complex.re;

    let d = base.d;
    let w_md = shift(&word, -d);
    let (m_md, _) = word_matrices(&map, &w_md);
    let pair = linalg::eigen_pair_near(&m_md, 1.0)?;
    let mismatch = (pair.value - rho_all[unit_idx].re).abs();
    if mismatch > 1e-9 {
        return Err(ShrinkError::EigenMismatch(mismatch));
    }
    let (omega, zeta) = normalise_frame(pair.left, pair.right)?;

    let jacobian = eta_nu_jacobian(slice, base, xi)?;
    let detj = jacobian[0][0] * jacobian[1][1] - jacobian[0][1] * jacobian[1][0];
    if detj.abs() < tol::SINGULAR_TOL {
        return Err(ShrinkError::SingularJacobian(detj));
    }

    let frame_for = |j: i64| -> Result<EigenFrame, ShrinkError> {
        let jr = j.rem_euclid(base.n) as usize;
        let wj = shift(&word, jr as i64);
        let (mj, _) = word_matrices(&map, &wj);
        let p = linalg::eigen_pair_near(&mj, 1.0)?;
        let (u, v) = normalise_frame(p.left, p.right)?;
        Ok(EigenFrame {
            j: jr,
            value: p.value,
            u,
            v,
        })
    };
    let frames = [
        frame_for(0)?,
        frame_for((base.ell - 1) * d)?,
        frame_for(base.ell * d)?,
        frame_for(-d)?,
    ];

    let _ = n;
    Ok(ShrinkPointData {
        base: *base,
        xi,
        map,
        y: cyc.points,
        t: cyc.s_values,
        a,
        b,
        c,
        rho_max,
        rho,
        jacobian,
        lambda: pair.value,
        omega,
        zeta,
        frames,
    })
}

/// Rescales a left/right eigenvector pair to `e₁ᵀv = 1`, `uᵀv = 1`.
fn normalise_frame(
    u: DVector<f64>,
    v: DVector<f64>,
) -> Result<(DVector<f64>, DVector<f64>), ShrinkError> {
    let e1v = v[0];
    if e1v.abs() < 1e-12 {
        return Err(ShrinkError::NotGeneric(
            "right eigenvector has vanishing first component".into(),
        ));
    }
    let v = v / e1v;
    let uv = u.dot(&v);
    if uv.abs() < 1e-12 {
        return Err(ShrinkError::NotGeneric(
            "left and right eigenvectors are orthogonal".into(),
        ));
    }
    let u = u / uv;
    Ok((u, v))
}

/// `e₁ᵀ adj(M) b` by cofactor expansion; stays finite when `M` is singular.
fn adjugate_first_row_dot(m: &DMatrix<f64>, b: &DVector<f64>) -> f64 {
    let n = m.nrows();
    let mut acc = 0.0f64;
    for j in 0..n {
        let minor = m.clone().remove_row(j).remove_column(0);
        let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
        acc += sign * minor.determinant() * b[j];
    }
    acc
}

impl ShrinkPointData {
    /// Switching value of the 0-flipped word's cycle at cyclic index `i`.
    pub fn t_at(&self, i: i64) -> f64 {
        self.t[i.rem_euclid(self.base.n) as usize]
    }

    /// Relative residual of the determinant/switching-value identity
    /// `a/b = −(t_d t_{(l−1)d})/(t_{−d} t_{(l+1)d})`.
    pub fn fourt_residual(&self) -> f64 {
        let d = self.base.d;
        let ell = self.base.ell;
        let lhs = self.a / self.b;
        let rhs = -(self.t_at(d) * self.t_at((ell - 1) * d))
            / (self.t_at(-d) * self.t_at((ell + 1) * d));
        (lhs - rhs).abs() / lhs.abs().max(rhs.abs())
    }

    /// Eigenvector frame for shift index `j` (mod n); one of
    /// `{0, (l−1)d, l·d, −d}`.
    pub fn frame(&self, j: i64) -> Option<&EigenFrame> {
        let jr = j.rem_euclid(self.base.n) as usize;
        self.frames.iter().find(|f| f.j == jr)
    }

    /// The four stored eigenvector frames.
    pub fn frames(&self) -> &[EigenFrame; 4] {
        &self.frames
    }

    /// Coefficient `κ±_Δl`: a power of a flipped-word cycle matrix sandwiched
    /// between eigenvectors of two shifted words.
    pub fn kappa(&self, sign: FamilySign, dl: i64) -> Result<f64, ShrinkError> {
        let word = self.base.word();
        let d = self.base.d;
        let ell = self.base.ell;
        let ld = self.base.ell_d_mod_n() as usize;
        let w0 = flip_at(&word, 0).expect("index 0 in range");
        let wld = flip_at(&word, ld).expect("index l*d in range");
        let (u, mat, power, v) = match (sign, dl) {
            (FamilySign::Plus, dl) if dl <= -1 => {
                let m = word_matrices(&self.map, &shift(&w0, ld as i64)).0;
                (ell * d, m, (-dl - 1) as usize, (ell - 1) * d)
            }
            (FamilySign::Plus, dl) => {
                let m = word_matrices(&self.map, &wld).0;
                (0, m, dl as usize, -d)
            }
            (FamilySign::Minus, dl) if dl <= 0 => {
                let m = word_matrices(&self.map, &w0).0;
                (-d, m, (-dl) as usize, 0)
            }
            (FamilySign::Minus, dl) => {
                let m = word_matrices(&self.map, &shift(&wld, ld as i64)).0;
                ((ell - 1) * d, m, (dl - 1) as usize, ell * d)
            }
        };
        let uf = self.frame(u).expect("frame cached");
        let vf = self.frame(v).expect("frame cached");
        let mp = linalg::matrix_power(&mat, power);
        Ok(uf.u.dot(&(&mp * &vf.v)))
    }

    /// Angle `θ±_Δl`: arctangent of a switching-value ratio scaled by
    /// `|κ±_Δl|`, placed in the quadrant dictated by the sign of `a`.
    pub fn theta(&self, sign: FamilySign, dl: i64) -> Result<f64, ShrinkError> {
        let kappa = self.kappa(sign, dl)?;
        if kappa == 0.0 || !kappa.is_finite() {
            return Err(ShrinkError::KappaZero(dl));
        }
        let d = self.base.d;
        let ell = self.base.ell;
        let tan = match (sign, dl) {
            (FamilySign::Plus, dl) if dl <= -1 => {
                self.t_at((ell + 1) * d) / (self.t_at((ell - 1) * d) * kappa.abs())
            }
            (FamilySign::Plus, _) => self.t_at(d) / (self.t_at(-d) * kappa.abs()),
            (FamilySign::Minus, dl) if dl <= 0 => {
                self.t_at(d) * kappa.abs() / self.t_at(-d)
            }
            (FamilySign::Minus, _) => {
                self.t_at((ell + 1) * d) * kappa.abs() / self.t_at((ell - 1) * d)
            }
        };
        let principal = tan.atan();
        let upper = match sign {
            FamilySign::Plus => self.a > 0.0,
            FamilySign::Minus => self.a < 0.0,
        };
        Ok(if upper {
            principal + std::f64::consts::PI
        } else {
            principal + 2.0 * std::f64::consts::PI
        })
    }

    /// Genericity scalars and flags.
    pub fn genericity_report(&self) -> GenericityReport {
        let dim = self.map.dim();
        let eye = DMatrix::<f64>::identity(dim, dim);
        let adj_term = adjugate_first_row_dot(&(&eye - self.map.a_left()), self.map.b());
        let scale = 1.0 + linalg::max_row_sum(self.map.a_left());
        let generic = adj_term.abs() >= tol::SINGULAR_TOL * scale
            && self.a.abs() >= tol::SINGULAR_TOL * scale
            && self.b.abs() >= tol::SINGULAR_TOL * scale;
        GenericityReport {
            adj_term,
            a: self.a,
            b: self.b,
            rho_max: self.rho_max,
            c: self.c,
            generic,
            mode_locking: self.rho_max < 1.0,
        }
    }

    /// `κ` and `θ` values over a window of `Δl`, for both family signs.
    pub fn kappa_table(&self, dl_min: i64, dl_max: i64) -> Result<KappaTable, ShrinkError> {
        let mut rows = Vec::new();
        for dl in dl_min..=dl_max {
            let kp = self.kappa(FamilySign::Plus, dl)?;
            let km = self.kappa(FamilySign::Minus, dl)?;
            let tp = self.theta(FamilySign::Plus, dl).ok();
            let tm = self.theta(FamilySign::Minus, dl).ok();
            rows.push(KappaRow {
                dl,
                kappa_plus: kp,
                kappa_minus: km,
                theta_plus: tp,
                theta_minus: tm,
            });
        }
        Ok(KappaTable {
            rows,
            frames: self.frames.clone(),
        })
    }
}

/// One `Δl` row of a [`KappaTable`].
#[derive(Clone, Copy, Debug)]
pub struct KappaRow {
    pub dl: i64,
    pub kappa_plus: f64,
    pub kappa_minus: f64,
    /// Absent when the corresponding `κ` vanishes.
    pub theta_plus: Option<f64>,
    pub theta_minus: Option<f64>,
}

/// `κ±` and `θ±` over a `Δl` window, with the eigenvector frames backing
/// them.
#[derive(Clone, Debug)]
pub struct KappaTable {
    pub rows: Vec<KappaRow>,
    pub frames: [EigenFrame; 4],
}

#[cfg(test)]
mod tests {
    use super::*;
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
    fn locate_338_vanishing_coordinates() {
        let data = point_338();
        let (eta, nu) = eta_nu(&fig1_slice(), &data.base, data.xi).unwrap();
        assert!(eta.hypot(nu) < 1e-10, "residual {}", eta.hypot(nu));
        assert!(data.t_at(0).abs() < 1e-10);
        assert!(data.t_at(data.base.ell_d_mod_n()).abs() < 1e-10);
    }

    #[test]
    fn locate_338_identity_and_spectrum() {
        let data = point_338();
        assert!(data.fourt_residual() < 1e-8, "{}", data.fourt_residual());
        assert!(data.rho_max < 1.0);
        assert!(data.c > 0.0);
        assert!((data.rho[0] - 1.0).norm() < 1e-10);
        assert!(data.genericity_report().generic);
    }

    #[test]
    fn locate_338_switching_value_signs() {
        let data = point_338();
        let d = data.base.d;
        let ell = data.base.ell;
        assert!(data.t_at(d) < 0.0);
        assert!(data.t_at((ell - 1) * d) < 0.0);
        assert!(data.t_at(-d) > 0.0);
        assert!(data.t_at((ell + 1) * d) > 0.0);
    }

    #[test]
    fn locate_reconverges_from_perturbed_start() {
        let data = point_338();
        let moved = locate(
            &fig1_slice(),
            &data.base,
            (data.xi.0 + 1e-3, data.xi.1 + 1e-3),
            1e-12,
        )
        .unwrap();
        assert!((moved.xi.0 - data.xi.0).abs() < 1e-9);
        assert!((moved.xi.1 - data.xi.1).abs() < 1e-9);
    }

    #[test]
    fn eigenvector_normalisations_exact() {
        let data = point_338();
        for f in data.frames() {
            assert!((f.u.dot(&f.v) - 1.0).abs() < 1e-12);
            assert!((f.v[0] - 1.0).abs() < 1e-12);
            assert!((f.value - data.lambda).abs() < 1e-9);
        }
        assert!((data.zeta[0] - 1.0).abs() < 1e-12);
        assert!((data.omega.dot(&data.zeta) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn theta_golden_value_338() {
        let data = point_338();
        let th = data.theta(FamilySign::Plus, 0).unwrap();
        assert_relative_eq!(th, 5.1288, epsilon = 1e-3);
    }

    #[test]
    fn theta_quadrants_respect_sign_of_a() {
        use std::f64::consts::PI;
        let data = point_338();
        assert!(data.a < 0.0);
        for dl in -2..=2 {
            let tp = data.theta(FamilySign::Plus, dl).unwrap();
            let tm = data.theta(FamilySign::Minus, dl).unwrap();
            assert!(tp > 1.5 * PI && tp < 2.0 * PI, "theta+ {tp}");
            assert!(tm > 0.5 * PI && tm < PI, "theta- {tm}");
        }
    }

    #[test]
    fn kappa_signs_225() {
        let data = point_225();
        assert!(data.kappa(FamilySign::Plus, 0).unwrap() < 0.0);
        assert!(data.kappa(FamilySign::Plus, -1).unwrap() > 0.0);
    }

    #[test]
    fn kappa_exact_values_225() {
        // Rational values implied by the worked tongue ratios at this point.
        let data = point_225();
        assert_relative_eq!(data.a, -41.0 / 5.0, epsilon = 1e-6);
        assert_relative_eq!(data.b, 123.0 / 125.0, epsilon = 1e-6);
        assert_relative_eq!(
            data.kappa(FamilySign::Plus, -1).unwrap(),
            38.0 / 55.0,
            epsilon = 1e-6
        );
        assert_relative_eq!(
            data.kappa(FamilySign::Plus, 0).unwrap(),
            -5.0 / 11.0,
            epsilon = 1e-6
        );
        assert_relative_eq!(
            data.kappa(FamilySign::Minus, 0).unwrap(),
            43.0 / 55.0,
            epsilon = 1e-6
        );
        assert_relative_eq!(
            data.kappa(FamilySign::Minus, 1).unwrap(),
            10.0 / 33.0,
            epsilon = 1e-6
        );
    }

    #[test]
    fn bad_word_rejected() {
        let base = RotationalParams::new(1, 1, 4).unwrap();
        let err = locate(&fig1_slice(), &base, (-1.5, 0.1), 1e-12);
        assert!(matches!(err, Err(ShrinkError::BadWord { .. })));
    }
}
