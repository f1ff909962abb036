//! Compartmental surveillance models.
//!
//! The susceptible/infected/recovered (SIR) model tracks neonates and infants
//! only: births enter `S` as an external forcing, neonates leave `S` by
//! mortality, infection or growing out of the neonatal window, and recovered
//! infants are tracked for the remainder of the first year. The SIRH variant
//! adds a hydrocephalic class fed from `R`, and the contagious variant adds a
//! mass-action `β·S·I` infection term.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Which compartmental structure to build.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Sir,
    Sirh,
}

impl Variant {
    pub fn dim(self) -> usize {
        match self {
            Variant::Sir => 3,
            Variant::Sirh => 4,
        }
    }

    pub fn labels(self) -> &'static [&'static str] {
        match self {
            Variant::Sir => &["S", "I", "R"],
            Variant::Sirh => &["S", "I", "R", "H"],
        }
    }
}

pub const S: usize = 0;
pub const I: usize = 1;
pub const R: usize = 2;
pub const H: usize = 3;

/// Population-level inputs from which all daily rates are derived.
///
/// Mortality and infection figures are fractions per live birth (29 per 1000
/// is `0.029`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EpidemiologicalInputs {
    /// Length of the neonatal (susceptible) period `T_S`, days.
    pub neonatal_days: f64,
    /// Length of infancy `T_i`, days.
    pub infant_days: f64,
    /// Daily births `b`.
    pub births_per_day: f64,
    /// Neonatal mortality `m_1`.
    pub neonatal_mortality: f64,
    /// Fraction `s` of neonatal mortality attributable to sepsis.
    pub sepsis_fraction: f64,
    /// Sepsis cases per live birth over the neonatal period.
    pub infections_per_birth: f64,
    /// Infant (first-year) mortality `m_2`.
    pub infant_mortality: f64,
    /// Postinfectious hydrocephalus cases per live birth `p` (SIRH only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pih_per_birth: Option<f64>,
    /// Fraction of hydrocephalus cases that die during infancy (SIRH only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pih_death_fraction: Option<f64>,
}

impl EpidemiologicalInputs {
    /// Neonatal sepsis in Uganda, 2014–2015.
    ///
    /// 29 neonatal deaths per 1000 births, 7 of them from sepsis; 30 sepsis
    /// cases per 1000 births; 77 infant deaths per 1000 births.
    pub fn uganda_sir() -> Self {
        Self {
            neonatal_days: 28.0,
            infant_days: 365.0,
            births_per_day: 4562.0,
            neonatal_mortality: 0.029,
            sepsis_fraction: 7.0 / 29.0,
            infections_per_birth: 0.030,
            infant_mortality: 0.077,
            pih_per_birth: None,
            pih_death_fraction: None,
        }
    }

    /// [`uganda_sir`](Self::uganda_sir) plus 3 PIH cases per 1000 births, a
    /// third of which die.
    pub fn uganda_sirh() -> Self {
        Self {
            pih_per_birth: Some(0.003),
            pih_death_fraction: Some(1.0 / 3.0),
            ..Self::uganda_sir()
        }
    }

    pub fn validate(&self, variant: Variant) -> Result<()> {
        let fields = [
            ("neonatal_days", self.neonatal_days),
            ("infant_days", self.infant_days),
            ("births_per_day", self.births_per_day),
            ("neonatal_mortality", self.neonatal_mortality),
            ("sepsis_fraction", self.sepsis_fraction),
            ("infections_per_birth", self.infections_per_birth),
            ("infant_mortality", self.infant_mortality),
        ];
        for (name, v) in fields {
            if !v.is_finite() || v < 0.0 {
                return Err(invalid(format!("{name} must be finite and nonnegative, got {v}")));
            }
        }
        if self.neonatal_days <= 0.0 {
            return Err(invalid("neonatal_days must be positive"));
        }
        if self.infant_days <= self.neonatal_days {
            return Err(invalid(format!(
                "infant_days ({}) must exceed neonatal_days ({})",
                self.infant_days, self.neonatal_days
            )));
        }
        if self.sepsis_fraction > 1.0 {
            return Err(invalid("sepsis_fraction must lie in [0, 1]"));
        }
        if self.neonatal_mortality > self.infant_mortality {
            return Err(invalid("neonatal_mortality must not exceed infant_mortality"));
        }
        if variant == Variant::Sirh {
            for (name, v) in [
                ("pih_per_birth", self.pih_per_birth),
                ("pih_death_fraction", self.pih_death_fraction),
            ] {
                match v {
                    None => return Err(invalid(format!("{name} is required for the SIRH model"))),
                    Some(v) if !v.is_finite() || v < 0.0 => {
                        return Err(invalid(format!("{name} must be finite and nonnegative")))
                    }
                    Some(_) => {}
                }
            }
        }
        Ok(())
    }
}

fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidInput(msg.into())
}

/// Daily transition rates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DerivedRates {
    /// Infection rate `a` (per susceptible per day).
    pub infection: f64,
    /// Neonatal grow-up rate `g_S = 1/T_S`.
    pub g_s: f64,
    /// Recovered grow-up rate `g_R = 1/T_R`.
    pub g_r: f64,
    /// Non-sepsis neonatal mortality `d`.
    pub d: f64,
    /// Sepsis mortality among the infected `d_I`.
    pub d_i: f64,
    /// Mortality among the recovered `d_R`.
    pub d_r: f64,
    /// Recovery rate `c`.
    pub c: f64,
    /// Recovered to hydrocephalic rate `h` (zero for SIR).
    pub h: f64,
    /// Hydrocephalus mortality `d_H` (zero for SIR).
    pub d_h: f64,
    /// Recovered tracking window `T_R = T_i − T_S`, days.
    pub t_r: f64,
}

impl DerivedRates {
    /// Named rates in a fixed order, for reporting.
    pub fn named(&self) -> [(&'static str, f64); 10] {
        [
            ("a", self.infection),
            ("g_S", self.g_s),
            ("g_R", self.g_r),
            ("d", self.d),
            ("d_I", self.d_i),
            ("d_R", self.d_r),
            ("c", self.c),
            ("h", self.h),
            ("d_H", self.d_h),
            ("T_R", self.t_r),
        ]
    }
}

/// Derives daily rates from population-level inputs.
///
/// The infection rate is `a = infections_per_birth / T_S`; `d_I` divides the
/// sepsis share of neonatal mortality by the per-birth infection figure, so
/// `c = g_S − d − d_I` makes every infected neonate leave `I` within `T_S`.
/// For SIRH, `h` spreads the per-birth PIH incidence over the recovered
/// fraction of births and `d_R` excludes deaths already counted in `H`.
pub fn derive_rates(inputs: &EpidemiologicalInputs, variant: Variant) -> Result<DerivedRates> {
    inputs.validate(variant)?;
    let t_s = inputs.neonatal_days;
    let t_r = inputs.infant_days - t_s;
    let m1 = inputs.neonatal_mortality;
    let s = inputs.sepsis_fraction;
    let a_raw = inputs.infections_per_birth;

    let g_s = 1.0 / t_s;
    let g_r = 1.0 / t_r;
    let d = (1.0 - s) * m1 / t_s;
    let sepsis_deaths = s * m1;
    let d_i = if sepsis_deaths == 0.0 {
        0.0
    } else if a_raw > 0.0 {
        sepsis_deaths / (a_raw * t_s)
    } else {
        return Err(invalid("sepsis deaths require a positive infections_per_birth"));
    };
    let c = g_s - d - d_i;
    if c < 0.0 {
        return Err(invalid(format!(
            "inputs imply a negative recovery rate c = {c:e}: sepsis and other deaths exceed infections"
        )));
    }

    let (h, d_h, d_r) = match variant {
        Variant::Sir => (0.0, 0.0, (inputs.infant_mortality - m1) / t_r),
        Variant::Sirh => {
            let p = inputs.pih_per_birth.unwrap_or_default();
            let death_frac = inputs.pih_death_fraction.unwrap_or_default();
            // per birth: infections, minus sepsis deaths, minus other-cause deaths among the infected
            let recovered_per_birth = a_raw - sepsis_deaths - a_raw * (1.0 - s) * m1;
            let h = if p == 0.0 {
                0.0
            } else if recovered_per_birth > 0.0 {
                p / recovered_per_birth / t_r
            } else {
                return Err(invalid("PIH incidence requires a positive recovered fraction"));
            };
            let d_r = (inputs.infant_mortality - m1 - p * death_frac) / t_r;
            (h, death_frac / t_r, d_r)
        }
    };
    if d_r < 0.0 {
        return Err(invalid(format!("inputs imply a negative recovered mortality d_R = {d_r:e}")));
    }

    let rates = DerivedRates {
        infection: a_raw / t_s,
        g_s,
        g_r,
        d,
        d_i,
        d_r,
        c,
        h,
        d_h,
        t_r,
    };
    for (name, v) in rates.named().into_iter().take(9) {
        if v >= 1.0 {
            return Err(invalid(format!("daily rate {name} = {v} must be below 1")));
        }
    }
    Ok(rates)
}

/// A value that is either fixed or indexed by time step.
///
/// Steps past the end of a sequence reuse its last entry.
#[derive(Debug, Clone, PartialEq)]
pub enum Schedule<T> {
    Constant(T),
    PerStep(Vec<T>),
}

impl<T> Schedule<T> {
    pub fn at(&self, k: usize) -> &T {
        match self {
            Schedule::Constant(v) => v,
            Schedule::PerStep(v) => &v[k.min(v.len() - 1)],
        }
    }

    fn all(&self) -> Box<dyn Iterator<Item = &T> + '_> {
        match self {
            Schedule::Constant(v) => Box::new(std::iter::once(v)),
            Schedule::PerStep(v) => Box::new(v.iter()),
        }
    }

    fn check_nonempty(&self) -> Result<()> {
        match self {
            Schedule::PerStep(v) if v.is_empty() => Err(invalid("empty per-step schedule")),
            _ => Ok(()),
        }
    }
}

impl<T> From<T> for Schedule<T> {
    fn from(v: T) -> Self {
        Schedule::Constant(v)
    }
}

/// State propagation used by filters and simulators.
///
/// Propagating to step `k` uses the step-`k-1` transition (`F_{k−1}`,
/// `G_{k−1}`) and the step-`k` forcing `b_k`.
pub trait Dynamics {
    fn dim(&self) -> usize;

    /// Mean map `x_{k−1} ↦ x_k` without noise or clamping.
    fn propagate(&self, x: &DVector<f64>, control: Option<&DVector<f64>>, k: usize) -> DVector<f64>;

    /// Derivative of [`propagate`](Self::propagate) with respect to `x`.
    fn jacobian(&self, x: &DVector<f64>, k: usize) -> DMatrix<f64>;

    /// System noise covariance `W`.
    fn noise_cov(&self) -> &DMatrix<f64>;

    /// Observation-rate matrix `B_k`.
    fn observation(&self, k: usize) -> &DMatrix<f64>;

    /// Copy with `W` multiplied by `factor`.
    fn with_noise_scale(&self, factor: f64) -> Self
    where
        Self: Sized;
}

/// Linear dynamics `x_k = F x_{k−1} + G u_{k−1} + b_k + w_{k−1}` observed
/// through Poisson counts with rates `B x_k`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearModel {
    transition: Schedule<DMatrix<f64>>,
    control: Option<DMatrix<f64>>,
    forcing: Schedule<DVector<f64>>,
    noise: DMatrix<f64>,
    observation: Schedule<DMatrix<f64>>,
}

impl LinearModel {
    /// Noise-free, unobserved model; see [`with_noise`](Self::with_noise) and
    /// [`with_observation`](Self::with_observation).
    pub fn new(
        transition: impl Into<Schedule<DMatrix<f64>>>,
        forcing: impl Into<Schedule<DVector<f64>>>,
    ) -> Result<Self> {
        let transition = transition.into();
        let forcing = forcing.into();
        transition.check_nonempty()?;
        forcing.check_nonempty()?;
        let n = transition.at(0).nrows();
        if transition.all().any(|f| f.nrows() != n || f.ncols() != n) {
            return Err(Error::Dimension(format!("transition matrices must be {n}x{n}")));
        }
        if forcing.all().any(|b| b.len() != n) {
            return Err(Error::Dimension(format!("forcing vectors must have length {n}")));
        }
        Ok(Self {
            transition,
            control: None,
            forcing,
            noise: DMatrix::zeros(n, n),
            observation: Schedule::Constant(DMatrix::zeros(0, n)),
        })
    }

    pub fn with_noise(mut self, w: DMatrix<f64>) -> Result<Self> {
        let n = self.dim();
        if w.nrows() != n || w.ncols() != n {
            return Err(Error::Dimension(format!("noise covariance must be {n}x{n}")));
        }
        if (&w - w.transpose()).amax() > 1e-12 * w.amax().max(1.0) {
            return Err(invalid("noise covariance must be symmetric"));
        }
        if w.iter().any(|v| !v.is_finite()) {
            return Err(invalid("noise covariance must be finite"));
        }
        let min_eig = w.clone().symmetric_eigenvalues().min();
        if min_eig < -1e-9 * w.trace().abs().max(f64::MIN_POSITIVE) {
            return Err(Error::NotPositiveSemidefinite);
        }
        self.noise = w;
        Ok(self)
    }

    pub fn with_observation(mut self, b: impl Into<Schedule<DMatrix<f64>>>) -> Result<Self> {
        let b = b.into();
        b.check_nonempty()?;
        let n = self.dim();
        let m = b.at(0).nrows();
        for bk in b.all() {
            if bk.ncols() != n || bk.nrows() != m {
                return Err(Error::Dimension(format!("observation matrices must be {m}x{n}")));
            }
            if bk.iter().any(|v| !v.is_finite() || *v < 0.0) {
                return Err(invalid("observation rates must be finite and nonnegative"));
            }
        }
        self.observation = b;
        Ok(self)
    }

    pub fn with_control(mut self, g: DMatrix<f64>) -> Result<Self> {
        if g.nrows() != self.dim() {
            return Err(Error::Dimension(format!("control matrix must have {} rows", self.dim())));
        }
        self.control = Some(g);
        Ok(self)
    }

    pub fn transition(&self, k: usize) -> &DMatrix<f64> {
        self.transition.at(k)
    }

    pub fn forcing(&self, k: usize) -> &DVector<f64> {
        self.forcing.at(k)
    }

    pub fn obs_dim(&self) -> usize {
        self.observation.at(0).nrows()
    }
}

impl Dynamics for LinearModel {
    fn dim(&self) -> usize {
        self.transition.at(0).nrows()
    }

    fn propagate(&self, x: &DVector<f64>, control: Option<&DVector<f64>>, k: usize) -> DVector<f64> {
        let prev = k.saturating_sub(1);
        let mut next = self.transition.at(prev) * x;
        if let (Some(g), Some(u)) = (&self.control, control) {
            next += g * u;
        }
        next += self.forcing.at(k);
        next
    }

    fn jacobian(&self, _x: &DVector<f64>, k: usize) -> DMatrix<f64> {
        self.transition.at(k.saturating_sub(1)).clone()
    }

    fn noise_cov(&self) -> &DMatrix<f64> {
        &self.noise
    }

    fn observation(&self, k: usize) -> &DMatrix<f64> {
        self.observation.at(k)
    }

    fn with_noise_scale(&self, factor: f64) -> Self {
        Self {
            noise: &self.noise * factor,
            ..self.clone()
        }
    }
}

/// Contagious SIRH: the linear SIRH map plus `∓β·S·I` moving susceptibles
/// into the infected class.
#[derive(Debug, Clone, PartialEq)]
pub struct NonlinearModel {
    linear: LinearModel,
    beta: f64,
}

impl NonlinearModel {
    /// Adds contagion to a linear SIRH (or SIR) model.
    pub fn new(linear: LinearModel, beta: f64) -> Result<Self> {
        if !beta.is_finite() || beta < 0.0 {
            return Err(invalid(format!("contagion coefficient must be nonnegative, got {beta}")));
        }
        if linear.dim() < 2 {
            return Err(Error::Dimension("contagion needs S and I compartments".into()));
        }
        Ok(Self { linear, beta })
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn linear(&self) -> &LinearModel {
        &self.linear
    }

    /// Damped fixed-point iteration `x ← ½x + ½f(x)` from `start`.
    pub fn equilibrium(&self, start: &DVector<f64>, opts: FixedPointOptions) -> Result<SteadyState> {
        fixed_point(self, start, opts)
    }
}

impl Dynamics for NonlinearModel {
    fn dim(&self) -> usize {
        self.linear.dim()
    }

    fn propagate(&self, x: &DVector<f64>, control: Option<&DVector<f64>>, k: usize) -> DVector<f64> {
        let mut next = self.linear.propagate(x, control, k);
        let flow = self.beta * x[S] * x[I];
        next[S] -= flow;
        next[I] += flow;
        next
    }

    fn jacobian(&self, x: &DVector<f64>, k: usize) -> DMatrix<f64> {
        let mut j = self.linear.jacobian(x, k);
        j[(S, S)] -= self.beta * x[I];
        j[(S, I)] -= self.beta * x[S];
        j[(I, S)] += self.beta * x[I];
        j[(I, I)] += self.beta * x[S];
        j
    }

    fn noise_cov(&self) -> &DMatrix<f64> {
        self.linear.noise_cov()
    }

    fn observation(&self, k: usize) -> &DMatrix<f64> {
        self.linear.observation(k)
    }

    fn with_noise_scale(&self, factor: f64) -> Self {
        Self {
            linear: self.linear.with_noise_scale(factor),
            beta: self.beta,
        }
    }
}

fn sir_block(rates: &DerivedRates, dim: usize) -> DMatrix<f64> {
    let r = rates;
    let mut f = DMatrix::zeros(dim, dim);
    f[(S, S)] = 1.0 - r.d - r.infection - r.g_s;
    f[(I, S)] = r.infection;
    f[(I, I)] = 1.0 - r.d - r.d_i - r.c;
    f[(R, I)] = r.c;
    f[(R, R)] = 1.0 - r.d_r - r.g_r - r.h;
    f
}

fn births(b: f64, dim: usize) -> DVector<f64> {
    let mut v = DVector::zeros(dim);
    v[S] = b;
    v
}

/// Three-state noncontagious SIR model with constant births `b`.
pub fn build_linear_sir(rates: &DerivedRates, b: f64) -> Result<LinearModel> {
    let sir = DerivedRates {
        h: 0.0,
        d_h: 0.0,
        ..rates.clone()
    };
    LinearModel::new(sir_block(&sir, 3), births(b, 3))
}

/// Four-state noncontagious SIRH model with constant births `b`.
pub fn build_linear_sirh(rates: &DerivedRates, b: f64) -> Result<LinearModel> {
    let mut f = sir_block(rates, 4);
    f[(H, R)] = rates.h;
    f[(H, H)] = 1.0 - rates.d_r - rates.d_h;
    LinearModel::new(f, births(b, 4))
}

/// Contagious SIRH model with contagion coefficient `beta` (per person per day).
pub fn build_contagious_sirh(rates: &DerivedRates, b: f64, beta: f64) -> Result<NonlinearModel> {
    NonlinearModel::new(build_linear_sirh(rates, b)?, beta)
}

/// Poisson observation-rate matrix reporting `c_I·I` (and `c_H·H` for SIRH).
pub fn observation_matrix(c_i: f64, c_h: f64, variant: Variant) -> Result<DMatrix<f64>> {
    if !(c_i >= 0.0 && c_h >= 0.0 && c_i.is_finite() && c_h.is_finite()) {
        return Err(invalid("observation rates must be finite and nonnegative"));
    }
    Ok(match variant {
        Variant::Sir => {
            let mut b = DMatrix::zeros(1, 3);
            b[(0, I)] = c_i;
            b
        }
        Variant::Sirh => {
            let mut b = DMatrix::zeros(2, 4);
            b[(0, I)] = c_i;
            b[(1, H)] = c_h;
            b
        }
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SteadyState {
    pub values: DVector<f64>,
}

/// Closed-form equilibrium of the noncontagious model with constant births.
pub fn steady_state_closed_form(rates: &DerivedRates, b: f64, variant: Variant) -> Result<SteadyState> {
    let r = rates;
    let leave_s = r.d + r.infection + r.g_s;
    let leave_i = r.d + r.d_i + r.c;
    let h = match variant {
        Variant::Sir => 0.0,
        Variant::Sirh => r.h,
    };
    let leave_r = r.d_r + r.g_r + h;
    let leave_h = r.d_r + r.d_h;
    let mut denominators = vec![("d + a + g_S", leave_s), ("d + d_I + c", leave_i), ("d_R + g_R + h", leave_r)];
    if variant == Variant::Sirh {
        denominators.push(("d_R + d_H", leave_h));
    }
    for (name, v) in denominators {
        if v <= 0.0 {
            return Err(invalid(format!("steady state undefined: {name} = {v}")));
        }
    }

    let s_inf = b / leave_s;
    let i_inf = r.infection * b / (leave_i * leave_s);
    let r_inf = r.infection * b * r.c / (leave_r * leave_i * leave_s);
    let values = match variant {
        Variant::Sir => DVector::from_vec(vec![s_inf, i_inf, r_inf]),
        Variant::Sirh => DVector::from_vec(vec![s_inf, i_inf, r_inf, h * r_inf / leave_h]),
    };
    Ok(SteadyState { values })
}

/// Equilibrium of a constant linear model by solving `(I − F) x = b`.
pub fn steady_state_numeric(model: &LinearModel) -> Result<SteadyState> {
    let f = model.transition(0);
    let n = f.nrows();
    let radius = f
        .clone()
        .complex_eigenvalues()
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max);
    if radius >= 1.0 {
        return Err(invalid(format!("transition spectral radius {radius} is not below 1")));
    }
    let lhs = DMatrix::identity(n, n) - f;
    let values = lhs
        .lu()
        .solve(model.forcing(0))
        .ok_or_else(|| invalid("I - F is singular"))?;
    Ok(SteadyState { values })
}

#[derive(Debug, Clone, Copy)]
pub struct FixedPointOptions {
    pub damping: f64,
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for FixedPointOptions {
    fn default() -> Self {
        Self {
            damping: 0.5,
            tolerance: 1e-12,
            max_iterations: 1_000_000,
        }
    }
}

/// Damped fixed-point iteration of a (possibly nonlinear) map.
///
/// Stops once `‖Δx‖ ≤ tolerance·‖x‖`.
pub fn fixed_point<D: Dynamics>(model: &D, start: &DVector<f64>, opts: FixedPointOptions) -> Result<SteadyState> {
    if start.len() != model.dim() {
        return Err(Error::Dimension(format!("start must have length {}", model.dim())));
    }
    let mut x = start.clone();
    for _ in 0..opts.max_iterations {
        let fx = model.propagate(&x, None, 1);
        let next = &x * (1.0 - opts.damping) + fx * opts.damping;
        let step = (&next - &x).norm();
        x = next;
        if !x.iter().all(|v| v.is_finite()) {
            break;
        }
        if step <= opts.tolerance * x.norm() {
            return Ok(SteadyState { values: x });
        }
    }
    Err(Error::NoConvergence(opts.max_iterations))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn uganda_sirh_rates() -> DerivedRates {
        derive_rates(&EpidemiologicalInputs::uganda_sirh(), Variant::Sirh).unwrap()
    }

    #[test]
    fn recovery_rate_identity() {
        let r = derive_rates(&EpidemiologicalInputs::uganda_sir(), Variant::Sir).unwrap();
        assert_eq!(r.c, r.g_s - r.d - r.d_i);
        assert_relative_eq!(r.c + r.d + r.d_i, r.g_s, max_relative = 1e-15);
    }

    #[test]
    fn uganda_sir_rates_match_hand_arithmetic() {
        let r = derive_rates(&EpidemiologicalInputs::uganda_sir(), Variant::Sir).unwrap();
        assert_relative_eq!(r.d, 22.0 / 1000.0 / 28.0, max_relative = 1e-12);
        assert_relative_eq!(r.d_i, 7.0 / 30.0 / 28.0, max_relative = 1e-12);
        assert_relative_eq!(r.c, 22.34 / 30.0 / 28.0, max_relative = 1e-12);
        assert_relative_eq!(r.d_r, 48.0 / 1000.0 / 337.0, max_relative = 1e-12);
        assert_relative_eq!(r.infection, 30.0 / 1000.0 / 28.0, max_relative = 1e-12);
        assert_eq!(r.t_r, 337.0);
    }

    #[test]
    fn uganda_sirh_rates_match_hand_values() {
        let r = uganda_sirh_rates();
        assert_relative_eq!(r.h, 3.0 / 22.34 / 337.0, max_relative = 1e-12);
        assert_relative_eq!(r.d_h, 1.0 / 3.0 / 337.0, max_relative = 1e-12);
        assert_relative_eq!(r.d_r, (0.077 - 0.029 - 0.003 / 3.0) / 337.0, max_relative = 1e-12);
    }

    #[test]
    fn rejects_impossible_inputs() {
        let mut inputs = EpidemiologicalInputs::uganda_sir();
        inputs.infant_days = inputs.neonatal_days;
        assert!(derive_rates(&inputs, Variant::Sir).is_err());

        // more sepsis deaths than infections: d_I > g_S
        let mut inputs = EpidemiologicalInputs::uganda_sir();
        inputs.infections_per_birth = 0.001;
        assert!(matches!(derive_rates(&inputs, Variant::Sir), Err(Error::InvalidInput(_))));

        let inputs = EpidemiologicalInputs::uganda_sir();
        assert!(derive_rates(&inputs, Variant::Sirh).is_err());
    }

    #[test]
    fn sir_matrix_layout() {
        let r = derive_rates(&EpidemiologicalInputs::uganda_sir(), Variant::Sir).unwrap();
        let m = build_linear_sir(&r, 4562.0).unwrap();
        let f = m.transition(0);
        assert_eq!(f[(0, 0)], 1.0 - r.d - r.infection - r.g_s);
        assert_eq!(f[(1, 0)], r.infection);
        assert_eq!(f[(1, 1)], 1.0 - r.d - r.d_i - r.c);
        assert_eq!(f[(2, 1)], r.c);
        assert_eq!(f[(2, 2)], 1.0 - r.d_r - r.g_r);
        assert_eq!(f[(0, 1)], 0.0);
        assert_eq!(m.forcing(0), &DVector::from_vec(vec![4562.0, 0.0, 0.0]));
    }

    #[test]
    fn zero_rates_give_identity() {
        let zero = DerivedRates {
            infection: 0.0,
            g_s: 0.0,
            g_r: 0.0,
            d: 0.0,
            d_i: 0.0,
            d_r: 0.0,
            c: 0.0,
            h: 0.0,
            d_h: 0.0,
            t_r: 1.0,
        };
        let m = build_linear_sir(&zero, 0.0).unwrap();
        assert_eq!(m.transition(0), &DMatrix::identity(3, 3));
        assert_eq!(m.forcing(0), &DVector::zeros(3));
    }

    #[test]
    fn sirh_matrix_layout() {
        let r = uganda_sirh_rates();
        let m = build_linear_sirh(&r, 4562.0).unwrap();
        let f = m.transition(0);
        assert_eq!(f[(3, 2)], r.h);
        assert_eq!(f[(3, 3)], 1.0 - r.d_r - r.d_h);
        assert_eq!(f[(2, 2)], 1.0 - r.d_r - r.g_r - r.h);
    }

    #[test]
    fn no_hydrocephalus_inflow_gives_zero_h() {
        let r = DerivedRates { h: 0.0, ..uganda_sirh_rates() };
        let ss = steady_state_closed_form(&r, 4562.0, Variant::Sirh).unwrap();
        assert_eq!(ss.values[3], 0.0);
        let m = build_linear_sirh(&r, 4562.0).unwrap();
        assert_eq!(m.transition(0).row(3).iter().take(3).sum::<f64>(), 0.0);
    }

    #[test]
    fn uganda_sir_steady_state() {
        let r = derive_rates(&EpidemiologicalInputs::uganda_sir(), Variant::Sir).unwrap();
        let ss = steady_state_closed_form(&r, 4562.0, Variant::Sir).unwrap();
        let rounded: Vec<f64> = ss.values.iter().map(|v| v.round()).collect();
        assert_eq!(rounded, vec![121422.0, 3643.0, 31152.0]);
    }

    #[test]
    fn uganda_sirh_hydrocephalic_steady_state() {
        let r = uganda_sirh_rates();
        let ss = steady_state_closed_form(&r, 4562.0, Variant::Sirh).unwrap();
        assert!((8000.0..12000.0).contains(&ss.values[3]), "H = {}", ss.values[3]);
    }

    #[test]
    fn closed_form_is_fixed_point() {
        for variant in [Variant::Sir, Variant::Sirh] {
            let r = uganda_sirh_rates();
            let ss = steady_state_closed_form(&r, 4562.0, variant).unwrap();
            let m = match variant {
                Variant::Sir => build_linear_sir(&r, 4562.0).unwrap(),
                Variant::Sirh => build_linear_sirh(&r, 4562.0).unwrap(),
            };
            let image = m.propagate(&ss.values, None, 1);
            assert!((image - &ss.values).norm() / ss.values.norm() < 1e-9);
        }
    }

    #[test]
    fn zero_births_zero_steady_state() {
        let r = uganda_sirh_rates();
        let ss = steady_state_closed_form(&r, 0.0, Variant::Sirh).unwrap();
        assert_eq!(ss.values, DVector::zeros(4));
    }

    #[test]
    fn numeric_matches_closed_form() {
        let r = uganda_sirh_rates();
        let closed = steady_state_closed_form(&r, 4562.0, Variant::Sirh).unwrap();
        let numeric = steady_state_numeric(&build_linear_sirh(&r, 4562.0).unwrap()).unwrap();
        for (a, b) in closed.values.iter().zip(numeric.values.iter()) {
            assert_relative_eq!(a, b, max_relative = 1e-9);
        }
    }

    #[test]
    fn numeric_with_zero_transition() {
        let m = LinearModel::new(DMatrix::zeros(3, 3), DVector::from_vec(vec![1.0, 2.0, 3.0])).unwrap();
        let ss = steady_state_numeric(&m).unwrap();
        assert_eq!(ss.values, DVector::from_vec(vec![1.0, 2.0, 3.0]));
    }

    #[test]
    fn numeric_rejects_unstable() {
        let m = LinearModel::new(DMatrix::identity(2, 2) * 1.5, DVector::zeros(2)).unwrap();
        assert!(steady_state_numeric(&m).is_err());
    }

    #[test]
    fn contagion_raises_infected_equilibrium() {
        let r = uganda_sirh_rates();
        let noncontagious = steady_state_closed_form(&r, 4562.0, Variant::Sirh).unwrap();
        let model = build_contagious_sirh(&r, 4562.0, 1e-6).unwrap();
        let eq = model.equilibrium(&noncontagious.values, FixedPointOptions::default()).unwrap();
        assert!(eq.values[1] > noncontagious.values[1]);
        let image = model.propagate(&eq.values, None, 1);
        assert!((image - &eq.values).norm() / eq.values.norm() < 1e-9);
    }

    #[test]
    fn fixed_point_reports_non_convergence() {
        let r = uganda_sirh_rates();
        let model = build_contagious_sirh(&r, 4562.0, 1e-6).unwrap();
        let start = steady_state_closed_form(&r, 4562.0, Variant::Sirh).unwrap().values;
        let opts = FixedPointOptions { max_iterations: 10, ..Default::default() };
        assert!(matches!(model.equilibrium(&start, opts), Err(Error::NoConvergence(10))));
    }

    #[test]
    fn contagion_jacobian_at_noncontagious_equilibrium() {
        let r = uganda_sirh_rates();
        let model = build_contagious_sirh(&r, 4562.0, 1e-6).unwrap();
        let eq = steady_state_closed_form(&r, 4562.0, Variant::Sirh).unwrap();
        let j = model.jacobian(&eq.values, 1);
        assert_relative_eq!(j[(0, 1)], -1e-6 * eq.values[0], max_relative = 1e-15);
        assert_relative_eq!(j[(0, 1)], -0.121422, max_relative = 1e-5);
    }

    #[test]
    fn zero_beta_is_linear_map() {
        let r = uganda_sirh_rates();
        let linear = build_linear_sirh(&r, 4562.0).unwrap();
        let nonlinear = build_contagious_sirh(&r, 4562.0, 0.0).unwrap();
        let x = DVector::from_vec(vec![1.0e5, 5.0e3, 2.0e4, 9.0e3]);
        assert_eq!(nonlinear.propagate(&x, None, 1), linear.propagate(&x, None, 1));
        assert_eq!(nonlinear.jacobian(&x, 1), linear.jacobian(&x, 1));
    }

    #[test]
    fn observation_matrix_layout() {
        let b = observation_matrix(0.2 / 28.0, 0.6 / 337.0, Variant::Sirh).unwrap();
        assert_eq!(b.shape(), (2, 4));
        assert_eq!(b[(0, 1)], 0.2 / 28.0);
        assert_eq!(b[(1, 3)], 0.6 / 337.0);
        assert_eq!(b.iter().filter(|v| **v != 0.0).count(), 2);

        assert_eq!(observation_matrix(0.0, 0.0, Variant::Sirh).unwrap(), DMatrix::zeros(2, 4));
        let sir = observation_matrix(0.0002 / 28.0, 0.0, Variant::Sir).unwrap();
        assert_eq!(sir.shape(), (1, 3));
        assert_eq!(sir[(0, 1)], 0.0002 / 28.0);
        assert!(observation_matrix(-1.0, 0.0, Variant::Sir).is_err());
    }

    #[test]
    fn time_varying_schedule() {
        let fs = vec![DMatrix::identity(2, 2), DMatrix::identity(2, 2) * 0.5];
        let bs = vec![DVector::from_vec(vec![1.0, 0.0]), DVector::from_vec(vec![0.0, 1.0])];
        let m = LinearModel::new(Schedule::PerStep(fs), Schedule::PerStep(bs)).unwrap();
        let x = DVector::from_vec(vec![2.0, 2.0]);
        // k = 1 uses F_0 and b_1
        assert_eq!(m.propagate(&x, None, 1), DVector::from_vec(vec![2.0, 3.0]));
        // k = 5 uses the last entries
        assert_eq!(m.propagate(&x, None, 5), DVector::from_vec(vec![1.0, 2.0]));
    }

    #[test]
    fn noise_must_be_psd() {
        let m = LinearModel::new(DMatrix::identity(2, 2), DVector::zeros(2)).unwrap();
        let bad = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(matches!(m.clone().with_noise(bad), Err(Error::NotPositiveSemidefinite)));
        assert!(m.with_noise(DMatrix::from_diagonal_element(2, 2, 3.0)).is_ok());
    }
}
