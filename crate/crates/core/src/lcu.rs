//! Linear-combination-of-unitaries realizations of the loss map e^{-H_A dt}.
//!
//! The non-unitary factor of one time step is approximated (or, for the
//! on-site loss generator of this model, realized exactly) as a weighted
//! mixture of forward and backward evolutions under a Hermitian auxiliary
//! generator:
//!
//! `e^{-H_A dt}  ~=  A_0 + sum_b A_b (e^{+i R dtau_b} + e^{-i R dtau_b})`
//!
//! with `R^2 = H_A`. Matching Taylor coefficients in powers of the H_A
//! eigenvalue gives the moment system solved here. Because the ladder's loss
//! generator is diagonal, an arccos of the wanted decay per basis state turns
//! the d=2 mixture into an exact realization at any step size.

use crate::encoding::SectorEncoding;
use crate::linalg::{expm, hermitian_eig, CMat};
use crate::{Error, Result};
use nalgebra::DMatrix;
use num_complex::Complex64;

type RMat = DMatrix<f64>;
type RVec = nalgebra::DVector<f64>;

/// Coefficients of a forward/backward mixture approximating e^{-H_A dt}.
#[derive(Clone, Debug)]
pub struct LcuSolution {
    /// Identity weight A_0 (>= 0).
    pub a0: f64,
    /// (A_b, dtau_b) per forward/backward pair; A_b > 0.
    pub pairs: Vec<(f64, f64)>,
    /// Matched Taylor order kappa: the scalar residual is O(lambda^kappa).
    pub order: usize,
    /// True when the realization is exact rather than order-kappa.
    pub exact: bool,
}

impl LcuSolution {
    /// A_0 + 2 sum A_b; equals 1 for a Taylor-matched solution.
    pub fn total_weight(&self) -> f64 {
        self.a0 + 2.0 * self.pairs.iter().map(|(a, _)| a).sum::<f64>()
    }

    /// Scalar approximant `A_0 + 2 sum A_b cos(sqrt(lambda) dtau_b)` of
    /// e^{-lambda dt}, evaluated on one H_A eigenvalue lambda >= 0.
    pub fn scalar_value(&self, lambda: f64) -> f64 {
        let root = lambda.sqrt();
        self.a0 + 2.0 * self.pairs.iter().map(|(a, dt)| a * (root * dt).cos()).sum::<f64>()
    }

    /// Dense realized operator `A_0 I + sum A_b (e^{+iR dtau} + e^{-iR dtau})`.
    pub fn realized_operator(&self, r: &CMat) -> CMat {
        let n = r.nrows();
        let mut out = CMat::identity(n, n) * Complex64::new(self.a0, 0.0);
        for &(a, dtau) in &self.pairs {
            let gen = r * Complex64::new(0.0, dtau);
            let fwd = expm(&gen);
            let bwd = expm(&(-&gen));
            out += (fwd + bwd) * Complex64::new(a, 0.0);
        }
        out
    }
}

/// Solves the moment system
///   A_0 + 2 sum_b A_b = 1,
///   2 sum_b A_b dtau_b^{2j} / (2j)! = dt^j / j!   for j = 1..kappa-1
/// by damped Newton from a geometrically spread start. With `pin_a0` the
/// identity weight is fixed at zero, as in the closed-form d=2 solution
/// A_1 = 1/2, dtau = sqrt(2 dt).
pub fn solve_expansion(kappa: usize, b_pairs: usize, dt: f64, pin_a0: bool) -> Result<LcuSolution> {
    if kappa < 2 {
        return Err(Error::InvalidParams(format!("expansion order must be >= 2, got {kappa}")));
    }
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::InvalidParams(format!("step must be positive, got {dt}")));
    }
    let free = 2 * b_pairs + usize::from(!pin_a0);
    if free < kappa {
        return Err(Error::InvalidParams(format!(
            "{b_pairs} pairs give {free} free parameters, fewer than {kappa} moment equations"
        )));
    }

    // unknown layout: [A_1..A_B, dtau_1..dtau_B, (A_0)]
    let nb = b_pairs;
    let nu = 2 * nb + usize::from(!pin_a0);
    let mut u = RVec::zeros(nu);
    for b in 0..nb {
        u[b] = 0.5 / nb as f64;
        u[nb + b] = (2.0 * dt).sqrt() * 1.5f64.powi(b as i32);
    }
    if !pin_a0 {
        u[2 * nb] = 0.0;
    }

    let residual = |u: &RVec| -> RVec {
        let mut f = RVec::zeros(kappa);
        let a0 = if pin_a0 { 0.0 } else { u[2 * nb] };
        f[0] = a0 + 2.0 * (0..nb).map(|b| u[b]).sum::<f64>() - 1.0;
        let mut fact2j = 1.0f64; // (2j)!
        let mut factj = 1.0f64; // j!
        let mut dtj = 1.0f64; // dt^j
        for j in 1..kappa {
            fact2j *= (2 * j - 1) as f64 * (2 * j) as f64;
            factj *= j as f64;
            dtj *= dt;
            f[j] = 2.0 * (0..nb).map(|b| u[b] * u[nb + b].powi(2 * j as i32)).sum::<f64>()
                / fact2j
                - dtj / factj;
        }
        f
    };
    let jacobian = |u: &RVec| -> RMat {
        let mut jm = RMat::zeros(kappa, nu);
        for b in 0..nb {
            jm[(0, b)] = 2.0;
        }
        if !pin_a0 {
            jm[(0, 2 * nb)] = 1.0;
        }
        let mut fact2j = 1.0f64;
        for j in 1..kappa {
            fact2j *= (2 * j - 1) as f64 * (2 * j) as f64;
            for b in 0..nb {
                jm[(j, b)] = 2.0 * u[nb + b].powi(2 * j as i32) / fact2j;
                jm[(j, nb + b)] =
                    4.0 * j as f64 * u[b] * u[nb + b].powi(2 * j as i32 - 1) / fact2j;
            }
        }
        jm
    };

    let mut f = residual(&u);
    for _ in 0..200 {
        if f.norm() <= 1e-13 {
            break;
        }
        let jm = jacobian(&u);
        // square solve when determined, minimum-norm step otherwise
        let step = if nu == kappa {
            jm.clone().lu().solve(&(-&f))
        } else {
            let jjt = &jm * jm.transpose();
            jjt.lu().solve(&(-&f)).map(|y| jm.transpose() * y)
        }
        .ok_or_else(|| Error::Solver("singular Jacobian in moment-system Newton".into()))?;

        let mut scale = 1.0;
        let mut improved = false;
        for _ in 0..40 {
            let trial = &u + &step * scale;
            let ft = residual(&trial);
            if ft.norm() < f.norm() {
                u = trial;
                f = ft;
                improved = true;
                break;
            }
            scale *= 0.5;
        }
        if !improved {
            break;
        }
    }
    if f.norm() > 1e-12 {
        return Err(Error::Solver(format!(
            "moment system did not converge: residual {:.3e}",
            f.norm()
        )));
    }

    let a0 = if pin_a0 { 0.0 } else { u[2 * nb] };
    let pairs: Vec<(f64, f64)> = (0..nb).map(|b| (u[b], u[nb + b].abs())).collect();
    if a0 < -1e-12 || pairs.iter().any(|&(a, _)| a <= 0.0) {
        return Err(Error::Solver(format!(
            "moment system converged to an invalid weight vector (A0 = {a0:.3e})"
        )));
    }
    Ok(LcuSolution { a0: a0.max(0.0), pairs, order: kappa, exact: false })
}

/// Kind of auxiliary Hermitian generator realizing the loss map.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AuxKind {
    /// R with R^2 = H_A; pairs with a Taylor-matched `LcuSolution`.
    Root,
    /// Diagonal arccos generator; equal-weight mixture is exact.
    ExactOnsite,
}

/// Hermitian generator of the forward/backward unitaries, with the success
/// rescaling eta for the exact construction.
#[derive(Clone, Debug)]
pub struct AuxGenerator {
    pub matrix: CMat,
    pub kind: AuxKind,
    /// Scale in `e^{-H_A dt} = (1 / 2 eta)(e^{+iH_aux} + e^{-iH_aux})`;
    /// 1 for decaying steps, min(1, e^{dt lambda_max}) in general.
    pub eta: f64,
}

impl AuxGenerator {
    /// The non-unitary map this generator realizes at equal weights:
    /// `(1 / 2 eta)(e^{+iH} + e^{-iH})`.
    pub fn realized(&self) -> CMat {
        let gen = &self.matrix * Complex64::new(0.0, 1.0);
        let fwd = expm(&gen);
        let bwd = expm(&(-&gen));
        (fwd + bwd) * Complex64::new(0.5 / self.eta, 0.0)
    }

    /// Success-branch Kraus operator `(1 / 2)(e^{+iH} + e^{-iH})`; the state
    /// conditioned on ancilla 0 is this applied and renormalized.
    pub fn success_kraus(&self) -> CMat {
        let gen = &self.matrix * Complex64::new(0.0, 1.0);
        let fwd = expm(&gen);
        let bwd = expm(&(-&gen));
        (fwd + bwd) * Complex64::new(0.5, 0.0)
    }
}

/// Hermitian square root R of a PSD matrix via eigendecomposition;
/// eigenvalues in [-1e-10, 0) are clamped to zero.
pub fn hermitian_root(h_a: &CMat) -> Result<AuxGenerator> {
    if h_a.nrows() != h_a.ncols() {
        return Err(Error::Dimension("square root needs a square matrix".into()));
    }
    let herm_err = (h_a - h_a.adjoint()).iter().map(|c| c.norm()).fold(0.0, f64::max);
    if herm_err > 1e-10 {
        return Err(Error::InvalidParams(format!(
            "matrix is not Hermitian (deviation {herm_err:.2e})"
        )));
    }
    let (vals, vecs) = hermitian_eig(h_a);
    if let Some(neg) = vals.iter().find(|&&v| v < -1e-10) {
        return Err(Error::InvalidParams(format!(
            "not positive semidefinite: eigenvalue {neg:.3e}"
        )));
    }
    let n = h_a.nrows();
    let mut root = CMat::zeros(n, n);
    for (i, &v) in vals.iter().enumerate() {
        root[(i, i)] = Complex64::new(v.max(0.0).sqrt(), 0.0);
    }
    let r = &vecs * root * vecs.adjoint();
    // symmetrize away rounding
    let r = (&r + r.adjoint()) * Complex64::new(0.5, 0.0);
    Ok(AuxGenerator { matrix: r, kind: AuxKind::Root, eta: 1.0 })
}

fn check_finite_angle(dt: f64, gamma: f64) -> Result<()> {
    if !dt.is_finite() || !gamma.is_finite() || gamma <= 0.0 {
        return Err(Error::InvalidParams(format!("need finite dt and gamma > 0, got dt={dt}, gamma={gamma}")));
    }
    Ok(())
}

/// Exact single-particle on-site generator: angle arccos(e^{-gamma |dt|}) on
/// every b-site projector for dt >= 0 (on a sites for dt < 0), with
/// eta = min(1, e^{gamma dt}).
pub fn exact_onsite_single_particle(gamma: f64, dt: f64, n_cells: usize) -> Result<AuxGenerator> {
    check_finite_angle(dt, gamma)?;
    let dim = 2 * n_cells;
    let theta = (-gamma * dt.abs()).exp().acos();
    let on_b = dt >= 0.0;
    let mut m = CMat::zeros(dim, dim);
    for z in 0..dim {
        let is_b = z % 2 == 1;
        if is_b == on_b {
            m[(z, z)] = Complex64::new(theta, 0.0);
        }
    }
    let eta = (gamma * dt).exp().min(1.0);
    Ok(AuxGenerator { matrix: m, kind: AuxKind::ExactOnsite, eta })
}

/// Loss eigenvalue (gamma times b-site occupancy) per encoded basis state.
fn loss_eigenvalues(gamma: f64, enc: &SectorEncoding) -> Result<Vec<f64>> {
    (0..enc.dim())
        .map(|i| {
            let sites = enc.unrank(i)?;
            Ok(gamma * sites.iter().filter(|&&z| z % 2 == 1).count() as f64)
        })
        .collect()
}

/// Exact sector generator: diagonal angle arccos(e^{-dt lambda_j}) per basis
/// state for dt >= 0, where lambda_j is that state's loss eigenvalue; for
/// dt < 0 the decays are measured from the largest eigenvalue and the excess
/// growth moves into eta = e^{dt lambda_max}. Equal-weight mixing then
/// reproduces e^{-H_A dt} exactly on the sector.
pub fn exact_onsite_sector(gamma: f64, dt: f64, enc: &SectorEncoding) -> Result<AuxGenerator> {
    check_finite_angle(dt, gamma)?;
    let lambdas = loss_eigenvalues(gamma, enc)?;
    let d = enc.dim();
    let mut m = CMat::zeros(d, d);
    let (eta, angles): (f64, Vec<f64>) = if dt >= 0.0 {
        (1.0, lambdas.iter().map(|&l| (-dt * l).exp().acos()).collect())
    } else {
        let lmax = lambdas.iter().cloned().fold(0.0, f64::max);
        let eta = (dt * lmax).exp();
        (eta, lambdas.iter().map(|&l| (dt.abs() * (l - lmax)).exp().acos()).collect())
    };
    for (i, &a) in angles.iter().enumerate() {
        if !a.is_finite() {
            return Err(Error::Solver(format!("non-finite on-site angle at basis state {i}")));
        }
        m[(i, i)] = Complex64::new(a, 0.0);
    }
    Ok(AuxGenerator { matrix: m, kind: AuxKind::ExactOnsite, eta })
}

/// Literal per-site form: one scalar angle arccos(e^{-gamma dt}) on every
/// b-site number operator, summed over sites. Exact in the single-particle
/// sector; for states with k >= 2 occupied b sites it realizes cos(k theta)
/// rather than e^{-k gamma dt}, so it is kept only for comparison.
pub fn onsite_scalar_angle_sector(gamma: f64, dt: f64, enc: &SectorEncoding) -> Result<AuxGenerator> {
    check_finite_angle(dt, gamma)?;
    if dt < 0.0 {
        return Err(Error::InvalidParams(
            "the per-site scalar-angle form is only defined for forward steps".into(),
        ));
    }
    let theta = (-gamma * dt).exp().acos();
    let d = enc.dim();
    let mut m = CMat::zeros(d, d);
    for i in 0..d {
        let k = enc.unrank(i)?.iter().filter(|&&z| z % 2 == 1).count() as f64;
        m[(i, i)] = Complex64::new(k * theta, 0.0);
    }
    Ok(AuxGenerator { matrix: m, kind: AuxKind::ExactOnsite, eta: 1.0 })
}
