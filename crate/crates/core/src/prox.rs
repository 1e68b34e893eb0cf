//! Closed-form proximal maps of quadratics, used to certify the stability
//! bounds of proximal trajectories numerically.
//!
//! For `F(x) = ½xᵀHx − cᵀx` the proximal update with coupling `β` is
//! `P(v) = argmin_x F(x) + (β/2)‖x − v‖² = (H + βI)⁻¹(c + βv)`, defined when
//! `β > ρ = max(0, −λ_min(H))`. Everything here runs in double precision.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::error::{Error, Result};

const SYMMETRY_TOL: f64 = 1e-12;

#[derive(Clone, Debug)]
pub struct QuadInstance {
    pub h: DMatrix<f64>,
    pub c: DVector<f64>,
    /// `max(0, λ_min(H))`.
    pub mu: f64,
    /// `max(0, −λ_min(H))`.
    pub rho: f64,
}

impl QuadInstance {
    /// Curvature constants are read off the spectrum of `h`.
    pub fn new(h: DMatrix<f64>, c: DVector<f64>) -> Result<Self> {
        let n = h.nrows();
        if n == 0 || h.ncols() != n || c.len() != n {
            return Err(Error::shape("quad instance", format!("{n}x{n} and {n}"), format!("{}x{} and {}", h.nrows(), h.ncols(), c.len())));
        }
        let asym = (&h - h.transpose()).abs().max();
        if asym > SYMMETRY_TOL {
            return Err(Error::invalid(format!("Hessian is not symmetric (max asymmetry {asym:e})")));
        }
        let lmin = SymmetricEigen::new(h.clone()).eigenvalues.min();
        Ok(QuadInstance {
            h,
            c,
            mu: lmin.max(0.0),
            rho: (-lmin).max(0.0),
        })
    }

    /// `F(x) = ½‖Ax − y‖² + (λ/2)‖x‖²`, i.e. `H = AᵀA + λI`, `c = Aᵀy`.
    pub fn least_squares(a: &DMatrix<f64>, y: &DVector<f64>, lambda: f64) -> Result<Self> {
        if a.nrows() != y.len() {
            return Err(Error::shape("least squares", format!("{} rows", a.nrows()), format!("{}", y.len())));
        }
        let mut h = a.transpose() * a;
        h = (&h + h.transpose()) * 0.5;
        for i in 0..h.nrows() {
            h[(i, i)] += lambda;
        }
        Self::new(h, a.transpose() * y)
    }

    /// `H = Q diag(e) Qᵀ` with a random orthogonal `Q`; the curvature
    /// constants come from `e` exactly instead of a numerical spectrum.
    pub fn from_spectrum(eigenvalues: &[f64], rng: &mut impl Rng) -> Result<Self> {
        let n = eigenvalues.len();
        if n == 0 {
            return Err(Error::invalid("spectrum must be nonempty"));
        }
        let q = random_orthogonal(n, rng);
        let d = DMatrix::from_diagonal(&DVector::from_column_slice(eigenvalues));
        let mut h = &q * d * q.transpose();
        h = (&h + h.transpose()) * 0.5;
        let lmin = eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
        Ok(QuadInstance {
            h,
            c: random_vector(n, rng),
            mu: lmin.max(0.0),
            rho: (-lmin).max(0.0),
        })
    }

    /// Positive semidefinite Hessian with half of its spectrum at zero, the
    /// shape of an unregularized, underdetermined `AᵀA`.
    pub fn random_convex(n: usize, rng: &mut impl Rng) -> Result<Self> {
        let mut spectrum: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..4.0)).collect();
        for v in spectrum.iter_mut().take(n.div_ceil(2)) {
            *v = 0.0;
        }
        Self::from_spectrum(&spectrum, rng)
    }

    /// Indefinite Hessian with `λ_min = −rho` exactly.
    pub fn random_weakly_convex(n: usize, rho: f64, rng: &mut impl Rng) -> Result<Self> {
        if !(rho > 0.0) {
            return Err(Error::invalid(format!("weak convexity constant must be positive, got {rho}")));
        }
        let mut spectrum: Vec<f64> = (0..n).map(|_| rng.random_range(-rho..4.0)).collect();
        spectrum[0] = -rho;
        Self::from_spectrum(&spectrum, rng)
    }

    /// Positive definite Hessian with `λ_min = mu` exactly.
    pub fn random_strongly_convex(n: usize, mu: f64, rng: &mut impl Rng) -> Result<Self> {
        if !(mu > 0.0) {
            return Err(Error::invalid(format!("strong convexity constant must be positive, got {mu}")));
        }
        let mut spectrum: Vec<f64> = (0..n).map(|_| rng.random_range(mu..mu + 4.0)).collect();
        spectrum[0] = mu;
        Self::from_spectrum(&spectrum, rng)
    }

    /// `H = mu·I`, `c = 0`.
    pub fn isotropic(n: usize, mu: f64) -> Result<Self> {
        Self::new(DMatrix::identity(n, n) * mu, DVector::zeros(n))
    }

    pub fn dim(&self) -> usize {
        self.c.len()
    }

    pub fn objective(&self, x: &DVector<f64>) -> f64 {
        0.5 * x.dot(&(&self.h * x)) - self.c.dot(x)
    }

    /// `∇F(x) = Hx − c`.
    pub fn gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.h * x - &self.c
    }

    /// `β/(β − ρ)`, the Lipschitz constant of the proximal map.
    pub fn lipschitz_factor(&self, beta: f64) -> f64 {
        beta / (beta - self.rho)
    }

    /// `β/(β + μ)`, the contraction factor when `μ > 0`.
    pub fn contraction_factor(&self, beta: f64) -> Option<f64> {
        (self.mu > 0.0).then(|| beta / (beta + self.mu))
    }
}

fn random_vector(n: usize, rng: &mut impl Rng) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.sample(StandardNormal))
}

fn random_unit(n: usize, rng: &mut impl Rng) -> DVector<f64> {
    loop {
        let v = random_vector(n, rng);
        let norm = v.norm();
        if norm > 1e-8 {
            return v / norm;
        }
    }
}

fn random_orthogonal(n: usize, rng: &mut impl Rng) -> DMatrix<f64> {
    let g = DMatrix::from_fn(n, n, |_, _| rng.sample(StandardNormal));
    g.qr().q()
}

/// `(H + βI)⁻¹(c + β·x_ref)` by Cholesky.
pub fn quad_prox(inst: &QuadInstance, beta: f64, x_ref: &DVector<f64>) -> Result<DVector<f64>> {
    if x_ref.len() != inst.dim() {
        return Err(Error::shape("quad_prox", format!("{}", inst.dim()), format!("{}", x_ref.len())));
    }
    if !(beta > inst.rho) {
        return Err(Error::IllPosedProx { beta, rho: inst.rho });
    }
    let mut m = inst.h.clone();
    for i in 0..m.nrows() {
        m[(i, i)] += beta;
    }
    let chol = m.cholesky().ok_or(Error::IllPosedProx { beta, rho: inst.rho })?;
    Ok(chol.solve(&(&inst.c + x_ref * beta)))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TransitionCheck {
    /// `β‖x* − x_ref‖`.
    pub lhs: f64,
    /// `‖g*‖` with `g* = Hx* − c`.
    pub rhs: f64,
    /// `‖g* + β(x* − x_ref)‖`.
    pub residual: f64,
}

impl TransitionCheck {
    pub fn stationarity_tolerance(&self, tol: f64) -> f64 {
        tol * (1.0 + self.rhs)
    }

    pub fn stationary(&self, tol: f64) -> bool {
        self.residual <= self.stationarity_tolerance(tol)
    }

    /// `|lhs − rhs|` relative to the larger side (0 when both vanish).
    pub fn identity_error(&self) -> f64 {
        let scale = self.lhs.max(self.rhs);
        if scale == 0.0 {
            0.0
        } else {
            (self.lhs - self.rhs).abs() / scale
        }
    }
}

/// Solves the prox and evaluates the optimality identity
/// `β(x* − x_ref) = −g*`, whose norm form is the transition bound at zero
/// approximation error.
pub fn verify_transition_bound(inst: &QuadInstance, beta: f64, x_ref: &DVector<f64>) -> Result<TransitionCheck> {
    let x = quad_prox(inst, beta, x_ref)?;
    let g = inst.gradient(&x);
    let step = &x - x_ref;
    Ok(TransitionCheck {
        lhs: beta * step.norm(),
        rhs: g.norm(),
        residual: (&g + &step * beta).norm(),
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LipschitzCertificate {
    pub max_ratio: f64,
    pub min_ratio: f64,
    /// `β/(β − ρ)`.
    pub lipschitz_factor: f64,
    /// `β/(β + μ)` when `μ > 0`.
    pub contraction_factor: Option<f64>,
}

/// `‖P(a) − P(b)‖/‖a − b‖` over `trials` random pairs; a coincident pair
/// counts as ratio 0.
pub fn prox_lipschitz_certificate(inst: &QuadInstance, beta: f64, trials: usize, seed: u64) -> Result<LipschitzCertificate> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = inst.dim();
    let mut max_ratio = 0.0f64;
    let mut min_ratio = f64::INFINITY;
    for _ in 0..trials {
        let a = random_vector(n, &mut rng);
        let b = random_vector(n, &mut rng) * rng.random_range(0.1..2.0);
        let ratio = pair_ratio(inst, beta, &a, &b)?;
        max_ratio = max_ratio.max(ratio);
        min_ratio = min_ratio.min(ratio);
    }
    if trials == 0 {
        min_ratio = 0.0;
    }
    Ok(LipschitzCertificate {
        max_ratio,
        min_ratio,
        lipschitz_factor: inst.lipschitz_factor(beta),
        contraction_factor: inst.contraction_factor(beta),
    })
}

pub fn pair_ratio(inst: &QuadInstance, beta: f64, a: &DVector<f64>, b: &DVector<f64>) -> Result<f64> {
    let gap = (a - b).norm();
    if gap == 0.0 {
        return Ok(0.0);
    }
    let pa = quad_prox(inst, beta, a)?;
    let pb = quad_prox(inst, beta, b)?;
    Ok((pa - pb).norm() / gap)
}

/// One step of a proximal trajectory: the instance `F_t` and coupling `β_t`.
#[derive(Clone, Debug)]
pub struct ProxStep {
    pub inst: QuadInstance,
    pub beta: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PropagationRow {
    pub t: usize,
    /// `‖x_t − x̃_t‖`.
    pub deviation: f64,
    /// `Σ_{s≥t} δ_s Π_{t≤i<s} β_i/(β_i − ρ_i)`.
    pub bound: f64,
    /// Same with the contraction factors, when every `μ_i > 0`.
    pub contraction_bound: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PropagationReport {
    /// Ordered `t = T−1, …, 0`; the last row is the final reconstruction.
    pub rows: Vec<PropagationRow>,
}

impl PropagationReport {
    pub fn final_row(&self) -> &PropagationRow {
        self.rows.last().expect("trajectory has at least one step")
    }

    /// First step at which a deviation exceeds its bound plus `slack`.
    pub fn check(&self, slack: f64) -> Result<()> {
        for row in &self.rows {
            if row.deviation > row.bound + slack {
                return Err(Error::BoundViolation {
                    bound: "lipschitz propagation".into(),
                    step: row.t,
                    lhs: row.deviation,
                    rhs: row.bound + slack,
                });
            }
            if let Some(cb) = row.contraction_bound {
                if row.deviation > cb + slack {
                    return Err(Error::BoundViolation {
                        bound: "contraction propagation".into(),
                        step: row.t,
                        lhs: row.deviation,
                        rhs: cb + slack,
                    });
                }
            }
        }
        Ok(())
    }
}

/// Runs the exact trajectory `x̃_t = P_t(x̃_{t+1})` from `x_start` next to a
/// perturbed one where a seeded error of norm exactly `deltas[t]` is added
/// after each exact step. `steps[t]` and `deltas[t]` are indexed by `t`.
pub fn verify_error_propagation(
    steps: &[ProxStep],
    deltas: &[f64],
    x_start: &DVector<f64>,
    seed: u64,
) -> Result<PropagationReport> {
    if steps.is_empty() || steps.len() != deltas.len() {
        return Err(Error::invalid(format!(
            "need one error per step, got {} steps and {} errors",
            steps.len(),
            deltas.len()
        )));
    }
    if let Some(d) = deltas.iter().find(|d| !(**d >= 0.0)) {
        return Err(Error::invalid(format!("injected errors must be nonnegative, got {d}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = x_start.len();
    let mut ideal = x_start.clone();
    let mut noisy = x_start.clone();
    let mut bound = 0.0;
    let mut contraction = steps.iter().all(|s| s.inst.mu > 0.0).then_some(0.0);
    let mut rows = Vec::with_capacity(steps.len());
    for t in (0..steps.len()).rev() {
        let ProxStep { inst, beta } = &steps[t];
        ideal = quad_prox(inst, *beta, &ideal)?;
        noisy = quad_prox(inst, *beta, &noisy)? + random_unit(n, &mut rng) * deltas[t];
        bound = inst.lipschitz_factor(*beta) * bound + deltas[t];
        contraction = contraction.map(|c| inst.contraction_factor(*beta).unwrap_or(1.0) * c + deltas[t]);
        rows.push(PropagationRow {
            t,
            deviation: (&noisy - &ideal).norm(),
            bound,
            contraction_bound: contraction,
        });
    }
    Ok(PropagationReport { rows })
}

/// `δ(1 − q^T)/(1 − q)`: accumulated error under uniform contraction `q`.
pub fn geometric_bound(delta: f64, q: f64, steps: usize) -> f64 {
    if q == 1.0 {
        delta * steps as f64
    } else {
        delta * (1.0 - q.powi(steps as i32)) / (1.0 - q)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Remark1Row {
    pub shift: f64,
    /// `‖argmin F_s − x_ref‖`: the uncoupled step.
    pub uncoupled_distance: f64,
    /// `‖P(x_ref) − x_ref‖` at the given `β`.
    pub coupled_distance: f64,
    /// `‖g*‖/β` at the coupled solution.
    pub coupled_bound: f64,
}

/// Shifts the minimizer of a strongly convex `F` to `x_ref + s·d` and
/// reports how far one step moves from `x_ref` with and without coupling.
/// Without coupling the step size grows with `s` unboundedly.
pub fn remark1_demo(inst: &QuadInstance, x_ref: &DVector<f64>, beta: f64, shifts: &[f64], seed: u64) -> Result<Vec<Remark1Row>> {
    if !(inst.mu > 0.0) {
        return Err(Error::invalid("the uncoupled minimizer needs a strongly convex instance"));
    }
    if !(beta > 0.0) {
        return Err(Error::invalid(format!("coupling must be positive, got {beta}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dir = random_unit(x_ref.len(), &mut rng);
    shifts
        .iter()
        .map(|&s| {
            let target = x_ref + &dir * s;
            let shifted = QuadInstance {
                c: &inst.h * &target,
                ..inst.clone()
            };
            let argmin = inst.h.clone().cholesky().ok_or(Error::IllPosedProx { beta: 0.0, rho: inst.rho })?.solve(&shifted.c);
            let check = verify_transition_bound(&shifted, beta, x_ref)?;
            Ok(Remark1Row {
                shift: s,
                uncoupled_distance: (argmin - x_ref).norm(),
                coupled_distance: check.lhs / beta,
                coupled_bound: check.rhs / beta,
            })
        })
        .collect()
}

/// Tolerances of the certificate suite.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Tolerances {
    /// Stationarity residual relative to `1 + ‖g*‖`.
    pub stationarity: f64,
    /// Relative error of `β‖x* − x_ref‖ = ‖g*‖`.
    pub identity: f64,
    /// Additive slack on Lipschitz ratios and propagation bounds.
    pub slack: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            stationarity: 1e-10,
            identity: 1e-9,
            slack: 1e-9,
        }
    }
}

impl Tolerances {
    /// Tolerances no certificate can meet; exercises the failure path.
    pub fn sabotaged() -> Self {
        Tolerances {
            stationarity: -1.0,
            identity: -1.0,
            slack: -1.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Certificate {
    pub instance: String,
    pub bound: String,
    pub lhs: f64,
    pub rhs: f64,
    pub pass: bool,
}

impl Certificate {
    fn new(instance: impl Into<String>, bound: &str, lhs: f64, rhs: f64) -> Self {
        Certificate {
            instance: instance.into(),
            bound: bound.to_string(),
            lhs,
            rhs,
            pass: lhs <= rhs,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Family {
    Convex,
    WeaklyConvex,
    StronglyConvex,
}

impl Family {
    const ALL: [Family; 3] = [Family::Convex, Family::WeaklyConvex, Family::StronglyConvex];

    fn name(self) -> &'static str {
        match self {
            Family::Convex => "convex",
            Family::WeaklyConvex => "weakly_convex",
            Family::StronglyConvex => "strongly_convex",
        }
    }

    /// A random instance and a coupling admissible for it.
    fn sample(self, n: usize, rng: &mut impl Rng) -> Result<(QuadInstance, f64)> {
        match self {
            Family::Convex => Ok((QuadInstance::random_convex(n, rng)?, rng.random_range(0.1..10.0))),
            Family::WeaklyConvex => {
                let rho = rng.random_range(0.1..1.0);
                let beta = rho * rng.random_range(1.2..4.0);
                Ok((QuadInstance::random_weakly_convex(n, rho, rng)?, beta))
            }
            Family::StronglyConvex => {
                let mu = rng.random_range(0.1..1.0);
                Ok((QuadInstance::random_strongly_convex(n, mu, rng)?, rng.random_range(0.1..10.0)))
            }
        }
    }
}

/// Full certificate table: optimality and transition identity on `trials`
/// random instances per family, prox Lipschitz ratios over `trials` pairs,
/// and error propagation over `T ∈ {2, 4, 8}` for every family.
pub fn verify_theorems(n: usize, trials: usize, seed: u64, tol: Tolerances) -> Result<Vec<Certificate>> {
    if n == 0 {
        return Err(Error::invalid("dimension must be positive"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut certs = Vec::new();

    for family in Family::ALL {
        for i in 0..trials {
            let (inst, beta) = family.sample(n, &mut rng)?;
            let x_ref = random_vector(n, &mut rng);
            let check = verify_transition_bound(&inst, beta, &x_ref)?;
            let id = format!("{}_{i}", family.name());
            certs.push(Certificate::new(&id, "stationarity", check.residual, check.stationarity_tolerance(tol.stationarity)));
            certs.push(Certificate::new(&id, "transition_identity", check.identity_error(), tol.identity));
        }
    }

    let mut lipschitz = |id: String, inst: &QuadInstance, beta: f64, rng: &mut ChaCha8Rng| -> Result<()> {
        let cert = prox_lipschitz_certificate(inst, beta, trials, rng.random())?;
        certs.push(Certificate::new(&id, "prox_lipschitz", cert.max_ratio, cert.lipschitz_factor + tol.slack));
        if let Some(q) = cert.contraction_factor {
            certs.push(Certificate::new(&id, "prox_contraction", cert.max_ratio, q + tol.slack));
        }
        Ok(())
    };
    for family in Family::ALL {
        let (inst, beta) = family.sample(n, &mut rng)?;
        lipschitz(format!("{}_lipschitz", family.name()), &inst, beta, &mut rng)?;
    }
    let rho = 0.5;
    let weak = QuadInstance::random_weakly_convex(n, rho, &mut rng)?;
    lipschitz("weakly_convex_beta_2rho".into(), &weak, 2.0 * rho, &mut rng)?;
    let iso = QuadInstance::isotropic(n, 0.5)?;
    let iso_cert = prox_lipschitz_certificate(&iso, 1.0, trials, rng.random())?;
    let q = iso.contraction_factor(1.0).unwrap_or(1.0);
    let spread = if trials == 0 {
        0.0
    } else {
        (iso_cert.max_ratio - q).abs().max((iso_cert.min_ratio - q).abs())
    };
    certs.push(Certificate::new("isotropic", "prox_contraction_exact", spread, tol.slack));

    for family in Family::ALL {
        for t_len in [2usize, 4, 8] {
            let steps = (0..t_len)
                .map(|_| family.sample(n, &mut rng).map(|(inst, beta)| ProxStep { inst, beta }))
                .collect::<Result<Vec<_>>>()?;
            let deltas: Vec<f64> = (0..t_len).map(|_| rng.random_range(0.0..0.1)).collect();
            let start = random_vector(n, &mut rng);
            let report = verify_error_propagation(&steps, &deltas, &start, rng.random())?;
            let id = format!("{}_T{t_len}", family.name());
            let worst = report
                .rows
                .iter()
                .max_by(|a, b| (a.deviation - a.bound).total_cmp(&(b.deviation - b.bound)))
                .expect("nonempty trajectory");
            certs.push(Certificate::new(&id, "error_propagation", worst.deviation, worst.bound + tol.slack));
            if family == Family::StronglyConvex {
                let worst = report
                    .rows
                    .iter()
                    .filter_map(|r| r.contraction_bound.map(|c| (r.deviation, c)))
                    .max_by(|a, b| (a.0 - a.1).total_cmp(&(b.0 - b.1)))
                    .expect("strongly convex steps carry contraction bounds");
                certs.push(Certificate::new(&id, "error_contraction", worst.0, worst.1 + tol.slack));
            }
        }
    }

    let (delta, t_len) = (0.1, 4);
    let steps = vec![
        ProxStep {
            inst: QuadInstance::isotropic(n, 1.0)?,
            beta: 1.0,
        };
        t_len
    ];
    let report = verify_error_propagation(&steps, &vec![delta; t_len], &random_vector(n, &mut rng), rng.random())?;
    let closed = geometric_bound(delta, 0.5, t_len);
    let recursive = report.final_row().contraction_bound.unwrap_or(f64::INFINITY);
    certs.push(Certificate::new("uniform_q0.5_T4", "geometric_closed_form", (recursive - closed).abs(), tol.slack));
    certs.push(Certificate::new("uniform_q0.5_T4", "geometric_deviation", report.final_row().deviation, closed + tol.slack));

    Ok(certs)
}
