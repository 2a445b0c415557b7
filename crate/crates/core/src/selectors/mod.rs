//! Bandwidth selectors for density gradient estimation.
//!
//! NS and AT are closed-form rules. CV, PI and SCV minimise their criterion and
//! IT solves its bandwidth equation, each over the unconstrained or diagonal
//! class. The search runs on an unconstrained parametrisation relative to the
//! start `H_0 = L_0 L_0'`: unconstrained matrices are `L_0 M M' L_0'` with `M`
//! lower triangular and a log-diagonal, diagonal matrices use log-variances
//! and the scalar class a single log `h^2`.

pub mod criteria;
pub mod optim;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::DataSet;
use crate::error::{Error, Result};
use crate::kernels::{BandwidthClass, BandwidthMatrix};

pub use criteria::{
    cv_criterion, it_residual, pi_bias_term, pi_criterion, scv_criterion, variance_term, Criteria,
    PairDifferences,
};
pub use optim::{nelder_mead, Minimum, NelderMeadSettings};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Ns,
    At,
    Cv,
    Pi,
    Scv,
    It,
}

impl Method {
    fn id(self) -> &'static str {
        match self {
            Method::Ns => "ns",
            Method::At => "at",
            Method::Cv => "cv",
            Method::Pi => "pi",
            Method::Scv => "scv",
            Method::It => "it",
        }
    }

    fn needs_pilot(self) -> bool {
        matches!(self, Method::Pi | Method::Scv | Method::It)
    }
}

/// Pilot bandwidth `G` for the PI, SCV and IT criteria.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PilotRule {
    /// `G = (4/(d+2))^{2/(d+4)} n^{-2/(d+4)} S`.
    NormalScale,
    Fixed(BandwidthMatrix),
}

impl PilotRule {
    pub fn resolve(&self, data: &DataSet) -> Result<BandwidthMatrix> {
        match self {
            PilotRule::NormalScale => normal_scale_pilot(data),
            PilotRule::Fixed(g) => {
                crate::error::check_dim(data.dim(), g.dim())?;
                Ok(g.clone())
            }
        }
    }
}

impl FromStr for PilotRule {
    type Err = Error;

    /// `normal-scale`, or `fixed:` followed by the `d x d` entries row by row,
    /// comma separated.
    fn from_str(s: &str) -> Result<Self> {
        if s == "normal-scale" {
            return Ok(PilotRule::NormalScale);
        }
        let Some(list) = s.strip_prefix("fixed:") else {
            return Err(Error::InvalidArgument(format!(
                "pilot must be normal-scale or fixed:<entries>, got {s:?}"
            )));
        };
        let entries: Vec<f64> = list
            .split(',')
            .map(|v| v.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::InvalidArgument(format!("pilot entries: {e}")))?;
        let d = (entries.len() as f64).sqrt().round() as usize;
        if d == 0 || d * d != entries.len() {
            return Err(Error::InvalidArgument(format!(
                "pilot needs d x d entries, got {}",
                entries.len()
            )));
        }
        Ok(PilotRule::Fixed(BandwidthMatrix::from_rows(d, &entries)?))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SelectorSpec {
    pub method: Method,
    pub class: BandwidthClass,
    #[serde(default = "default_pilot")]
    pub pilot: PilotRule,
    #[serde(default)]
    pub optimizer: NelderMeadSettings,
    /// Run a second simplex search from the first one's result.
    #[serde(default = "default_true")]
    pub restart: bool,
    /// IT accepts `|residual| <= root_tol * first term`.
    #[serde(default = "default_root_tol")]
    pub root_tol: f64,
}

fn default_pilot() -> PilotRule {
    PilotRule::NormalScale
}

fn default_true() -> bool {
    true
}

fn default_root_tol() -> f64 {
    1e-6
}

impl SelectorSpec {
    pub fn new(method: Method, class: BandwidthClass) -> Self {
        let class = match method {
            Method::Ns => BandwidthClass::Unconstrained,
            Method::At => BandwidthClass::Diagonal,
            _ => class,
        };
        Self {
            method,
            class,
            pilot: default_pilot(),
            optimizer: NelderMeadSettings::default(),
            restart: true,
            root_tol: default_root_tol(),
        }
    }

    /// The ten selectors of the comparison study, in report order.
    pub fn roster() -> Vec<SelectorSpec> {
        ["ns", "at", "cvu", "cvd", "piu", "pid", "scvu", "scvd", "itu", "itd"]
            .iter()
            .map(|s| s.parse().expect("roster ids parse"))
            .collect()
    }

    /// Short identifier such as `ns`, `cvu` or `itd`.
    pub fn id(&self) -> String {
        match self.method {
            Method::Ns | Method::At => self.method.id().to_string(),
            m => {
                let suffix = match self.class {
                    BandwidthClass::Unconstrained => 'u',
                    BandwidthClass::Diagonal => 'd',
                    BandwidthClass::Scalar => 's',
                };
                format!("{}{suffix}", m.id())
            }
        }
    }

    pub fn with_pilot(mut self, pilot: PilotRule) -> Self {
        self.pilot = pilot;
        self
    }

    /// The start of the search: NS restricted to the class.
    pub fn start(&self, data: &DataSet) -> Result<BandwidthMatrix> {
        restrict(&ns_bandwidth(data)?, self.class)
    }

    /// Criterion (or IT residual) at `h`; `None` for the closed-form rules.
    pub fn criterion_at(&self, data: &DataSet, h: &BandwidthMatrix) -> Result<Option<f64>> {
        let pilot = match self.method.needs_pilot() {
            true => Some(self.pilot.resolve(data)?),
            false => None,
        };
        let c = Criteria::new(data, pilot.as_ref())?;
        Ok(match self.method {
            Method::Ns | Method::At => None,
            Method::Cv => Some(c.cv(h)?),
            Method::Pi => Some(c.pi(h)?),
            Method::Scv => Some(c.scv(h)?),
            Method::It => Some(c.it_residual(h)?),
        })
    }
}

impl fmt::Display for SelectorSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.id())
    }
}

impl FromStr for SelectorSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let lower = s.to_ascii_lowercase();
        match lower.as_str() {
            "ns" => return Ok(Self::new(Method::Ns, BandwidthClass::Unconstrained)),
            "at" => return Ok(Self::new(Method::At, BandwidthClass::Diagonal)),
            _ => {}
        }
        let (head, tail) = lower.split_at(lower.len().saturating_sub(1));
        let class = match tail {
            "u" => BandwidthClass::Unconstrained,
            "d" => BandwidthClass::Diagonal,
            "s" => BandwidthClass::Scalar,
            _ => return Err(Error::InvalidArgument(format!("unknown selector {s:?}"))),
        };
        let method = match head {
            "cv" => Method::Cv,
            "pi" => Method::Pi,
            "scv" => Method::Scv,
            "it" => Method::It,
            _ => return Err(Error::InvalidArgument(format!("unknown selector {s:?}"))),
        };
        Ok(Self::new(method, class))
    }
}

/// Output of [`select`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SelectionResult {
    pub selector: String,
    pub h: BandwidthMatrix,
    /// Criterion value (IT: residual) at `h`; absent for closed-form rules.
    pub value: Option<f64>,
    pub evaluations: usize,
    pub converged: bool,
    pub pilot: Option<BandwidthMatrix>,
}

/// `(4/(d+4))^{2/(d+6)} n^{-2/(d+6)} S`, the normal-scale gradient bandwidth.
pub fn ns_bandwidth(data: &DataSet) -> Result<BandwidthMatrix> {
    let (n, d) = (data.len() as f64, data.dim() as f64);
    if data.len() < data.dim() + 1 {
        return Err(Error::InvalidArgument(format!(
            "normal-scale bandwidth needs at least {} points",
            data.dim() + 1
        )));
    }
    let c = (4.0 / (d + 4.0)).powf(2.0 / (d + 6.0)) * n.powf(-2.0 / (d + 6.0));
    sample_covariance(data)?.scaled(c)
}

/// Diagonal density-estimation normal-scale bandwidth shrunk by 3/4:
/// `h_i = 3/4 (4/(d+2))^{1/(d+4)} n^{-1/(d+4)} s_i`.
pub fn at_bandwidth(data: &DataSet) -> Result<BandwidthMatrix> {
    let (n, d) = (data.len() as f64, data.dim() as f64);
    let s = data.std_devs()?;
    if let Some(k) = s.iter().position(|v| !(*v > 0.0)) {
        return Err(Error::InvalidArgument(format!("coordinate {} has zero variance", k + 1)));
    }
    let c = 0.75 * (4.0 / (d + 2.0)).powf(1.0 / (d + 4.0)) * n.powf(-1.0 / (d + 4.0));
    BandwidthMatrix::diagonal(&s.iter().map(|v| (c * v).powi(2)).collect::<Vec<_>>())
}

/// `(4/(d+2))^{2/(d+4)} n^{-2/(d+4)} S`, the normal-scale density bandwidth.
pub fn normal_scale_pilot(data: &DataSet) -> Result<BandwidthMatrix> {
    let (n, d) = (data.len() as f64, data.dim() as f64);
    let c = (4.0 / (d + 2.0)).powf(2.0 / (d + 4.0)) * n.powf(-2.0 / (d + 4.0));
    sample_covariance(data)?.scaled(c)
}

fn sample_covariance(data: &DataSet) -> Result<BandwidthMatrix> {
    let s = data.covariance()?;
    BandwidthMatrix::from_matrix(&s).map_err(|_| Error::SingularCovariance)
}

fn restrict(h: &BandwidthMatrix, class: BandwidthClass) -> Result<BandwidthMatrix> {
    let d = h.dim();
    match class {
        BandwidthClass::Unconstrained => Ok(h.clone()),
        BandwidthClass::Diagonal => {
            BandwidthMatrix::diagonal(&(0..d).map(|k| h.get(k, k)).collect::<Vec<_>>())
        }
        BandwidthClass::Scalar => BandwidthMatrix::scalar(d, h.trace() / d as f64),
    }
}

/// Maps search coordinates to matrices of one class around a start.
struct Parametrization {
    class: BandwidthClass,
    dim: usize,
    start: BandwidthMatrix,
}

impl Parametrization {
    fn len(&self) -> usize {
        match self.class {
            BandwidthClass::Unconstrained => self.dim * (self.dim + 1) / 2,
            BandwidthClass::Diagonal => self.dim,
            BandwidthClass::Scalar => 1,
        }
    }

    /// Coordinates of `c * start`.
    fn scaled_start(&self, c: f64) -> Vec<f64> {
        let d = self.dim;
        match self.class {
            BandwidthClass::Unconstrained => {
                let mut t = vec![0.0; self.len()];
                let mut k = 0;
                for i in 0..d {
                    for j in 0..=i {
                        if i == j {
                            t[k] = 0.5 * c.ln();
                        }
                        k += 1;
                    }
                }
                t
            }
            BandwidthClass::Diagonal => vec![c.ln(); d],
            BandwidthClass::Scalar => vec![c.ln()],
        }
    }

    fn matrix(&self, t: &[f64]) -> Result<BandwidthMatrix> {
        let d = self.dim;
        match self.class {
            BandwidthClass::Unconstrained => {
                let l0 = self.start.cholesky_factor();
                let mut m = vec![0.0; d * d];
                let mut k = 0;
                for i in 0..d {
                    for j in 0..=i {
                        m[i * d + j] = if i == j { t[k].exp() } else { t[k] };
                        k += 1;
                    }
                }
                // A = L0 M stays lower triangular; H = A A'.
                let mut a = vec![0.0; d * d];
                for i in 0..d {
                    for j in 0..=i {
                        a[i * d + j] = (j..=i).map(|k| l0[i * d + k] * m[k * d + j]).sum();
                    }
                }
                let mut h = vec![0.0; d * d];
                for i in 0..d {
                    for j in 0..=i {
                        let v: f64 = (0..=j).map(|k| a[i * d + k] * a[j * d + k]).sum();
                        h[i * d + j] = v;
                        h[j * d + i] = v;
                    }
                }
                BandwidthMatrix::from_rows(d, &h)
            }
            BandwidthClass::Diagonal => BandwidthMatrix::diagonal(
                &(0..d).map(|k| self.start.get(k, k) * t[k].exp()).collect::<Vec<_>>(),
            ),
            BandwidthClass::Scalar => BandwidthMatrix::scalar(d, self.start.get(0, 0) * t[0].exp()),
        }
    }
}

/// Runs a selector on a sample.
///
/// Optimiser trouble never fails the call: the best iterate is returned with
/// `converged = false`. Errors are reserved for invalid input.
pub fn select(spec: &SelectorSpec, data: &DataSet) -> Result<SelectionResult> {
    let closed = |h: BandwidthMatrix| SelectionResult {
        selector: spec.id(),
        h,
        value: None,
        evaluations: 0,
        converged: true,
        pilot: None,
    };
    match spec.method {
        Method::Ns => return Ok(closed(ns_bandwidth(data)?)),
        Method::At => return Ok(closed(at_bandwidth(data)?)),
        _ => {}
    }
    if data.len() < 2 {
        return Err(Error::InvalidArgument("selectors need at least two points".into()));
    }
    let pilot = match spec.method.needs_pilot() {
        true => Some(spec.pilot.resolve(data)?),
        false => None,
    };
    let mut crit = Criteria::new(data, pilot.as_ref())?;
    match spec.method {
        Method::Pi => crit.prepare_pi()?,
        Method::Scv | Method::It => crit.prepare_scv()?,
        _ => {}
    }
    let param = Parametrization {
        class: spec.class,
        dim: data.dim(),
        start: spec.start(data)?,
    };
    let value = |h: &BandwidthMatrix| -> Result<f64> {
        match spec.method {
            Method::Cv => crit.cv(h),
            Method::Pi => crit.pi(h),
            Method::Scv => crit.scv(h),
            Method::It => {
                let (a, b) = crit.it_terms(h)?;
                Ok(((a + b) / a).powi(2))
            }
            Method::Ns | Method::At => unreachable!(),
        }
    };
    let objective = |t: &[f64]| param.matrix(t).and_then(|h| value(&h)).unwrap_or(f64::INFINITY);

    let mut evaluations = 0;
    let mut x0 = param.scaled_start(1.0);
    let mut f0 = f64::INFINITY;
    for c in [0.5, 1.0, 2.0] {
        let t = param.scaled_start(c);
        let v = objective(&t);
        evaluations += 1;
        if v < f0 {
            f0 = v;
            x0 = t;
        }
    }
    let mut best = nelder_mead(objective, &x0, &spec.optimizer);
    evaluations += best.evals;
    if spec.restart {
        let again = nelder_mead(objective, &best.x, &spec.optimizer);
        evaluations += again.evals;
        let converged = again.converged;
        if again.f <= best.f {
            best = again;
        }
        best.converged = converged;
    }
    let mut h = param.matrix(&best.x)?;
    let mut converged = best.converged;

    let reported = if spec.method == Method::It {
        let (h_root, residual, evals, ok) = polish_root(&crit, &h, spec.root_tol)?;
        evaluations += evals;
        h = h_root;
        converged = ok;
        residual
    } else {
        value(&h)?
    };
    Ok(SelectionResult {
        selector: spec.id(),
        h,
        value: Some(reported),
        evaluations,
        converged,
        pilot,
    })
}

/// Solves the IT equation along the ray `e^s H`, starting from the simplex
/// result. Returns the matrix, residual, evaluations and acceptance.
fn polish_root(
    crit: &Criteria,
    h: &BandwidthMatrix,
    tol: f64,
) -> Result<(BandwidthMatrix, f64, usize, bool)> {
    let at = |s: f64| -> Result<(f64, f64)> {
        let hs = h.scaled(s.exp())?;
        let (a, b) = crit.it_terms(&hs)?;
        Ok((a + b, a))
    };
    let accept = |r: f64, first: f64| r.abs() <= tol * first.abs();
    let (r0, a0) = at(0.0)?;
    let mut evals = 1;
    if accept(r0, a0) {
        return Ok((h.clone(), r0, evals, true));
    }
    let mut bracket = None;
    let mut step = 0.02;
    while step <= 4.0 && bracket.is_none() {
        for s in [step, -step] {
            let (r, _) = at(s)?;
            evals += 1;
            if r * r0 <= 0.0 {
                bracket = Some((s, r));
                break;
            }
        }
        step *= 2.0;
    }
    let Some((s1, r1)) = bracket else {
        return Ok((h.clone(), r0, evals, false));
    };
    let (lo, hi, flo, fhi) = if s1 < 0.0 { (s1, 0.0, r1, r0) } else { (0.0, s1, r0, r1) };
    // The first term at either end bounds it inside the bracket from below.
    let floor = at(hi)?.1.abs().min(at(lo)?.1.abs());
    evals += 2;
    let mut err = None;
    let (s, _, e) = optim::illinois(
        |s| match at(s) {
            Ok((r, _)) => r,
            Err(x) => {
                err.get_or_insert(x);
                0.0
            }
        },
        lo,
        hi,
        flo,
        fhi,
        |r| r.abs() <= 0.5 * tol * floor,
        100,
    );
    if let Some(x) = err {
        return Err(x);
    }
    evals += e;
    let hs = h.scaled(s.exp())?;
    let (a, b) = crit.it_terms(&hs)?;
    evals += 1;
    Ok((hs, a + b, evals, accept(a + b, a)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ids_round_trip() {
        let ids: Vec<String> = SelectorSpec::roster().iter().map(|s| s.id()).collect();
        assert_eq!(ids, ["ns", "at", "cvu", "cvd", "piu", "pid", "scvu", "scvd", "itu", "itd"]);
        assert!("xyz".parse::<SelectorSpec>().is_err());
        assert!("cvq".parse::<SelectorSpec>().is_err());
        assert_eq!("CVS".parse::<SelectorSpec>().unwrap().class, BandwidthClass::Scalar);
    }

    #[test]
    fn pilot_parsing() {
        assert_eq!("normal-scale".parse::<PilotRule>().unwrap(), PilotRule::NormalScale);
        match "fixed:0.5,0.1,0.1,0.4".parse::<PilotRule>().unwrap() {
            PilotRule::Fixed(g) => assert_eq!(g.get(1, 0), 0.1),
            _ => panic!(),
        }
        assert!("fixed:1,2,3".parse::<PilotRule>().is_err());
        assert!("fixed:1,2,2,1".parse::<PilotRule>().is_err());
    }

    #[test]
    fn parametrization_reproduces_scaled_start() {
        let start = BandwidthMatrix::from_rows(2, &[0.4, 0.1, 0.1, 0.2]).unwrap();
        for class in [BandwidthClass::Unconstrained, BandwidthClass::Diagonal, BandwidthClass::Scalar] {
            let start = restrict(&start, class).unwrap();
            let p = Parametrization {
                class,
                dim: 2,
                start: start.clone(),
            };
            let h = p.matrix(&p.scaled_start(2.0)).unwrap();
            for (a, b) in h.entries().iter().zip(start.entries()) {
                assert!((a - 2.0 * b).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn ns_and_at_closed_forms() {
        let data = DataSet::from_rows(&[[0.0, 0.0], [1.0, 0.5], [2.0, -1.0], [0.5, 2.0]]).unwrap();
        let s = data.covariance().unwrap();
        let c = (4.0f64 / 6.0).powf(0.25) * 4f64.powf(-0.25);
        let h = ns_bandwidth(&data).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                assert!((h.get(i, j) - c * s[(i, j)]).abs() < 1e-15);
            }
        }
        let a = at_bandwidth(&data).unwrap();
        assert_eq!(a.get(0, 1), 0.0);
        let h1 = 0.75 * 4f64.powf(-1.0 / 6.0) * s[(0, 0)].sqrt();
        assert!((a.get(0, 0) - h1 * h1).abs() < 1e-15);
    }
}
