//! Exact cost formulas and parameter sweeps.
//!
//! `R = (C(N,S) - C(M,S)) / ((C(N,S) - C(M,S)) Nr - C(N,S)(N - M))` is the
//! achievable cost with groupwise keys; `Rn = 1 / (Nr - N + M)` is the
//! non-secure linear optimum. Binomials use arbitrary precision and
//! `C(x, y) = 0` for `y > x`.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AnalysisError {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("feasibility S >= N-Nr+2 violated")]
    GroupSizeTooSmall,
    #[error("cost denominator (C(N,S)-C(M,S))*Nr - C(N,S)*(N-M) is not positive")]
    NonPositiveDenominator,
    #[error("Nr - N + M is not positive")]
    NoLinearScheme,
    #[error("unknown sweep axis {0:?} (expected M, S, Nr or N)")]
    UnknownAxis(String),
    #[error("csv output failed: {0}")]
    Csv(String),
}

/// `(N, Nr, M, S)`; the dataset count does not enter the cost.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct CostParams {
    #[serde(rename = "N")]
    pub servers: usize,
    #[serde(rename = "Nr")]
    pub responders: usize,
    #[serde(rename = "M")]
    pub replication: usize,
    #[serde(rename = "S")]
    pub group_size: usize,
}

impl CostParams {
    pub fn new(servers: usize, responders: usize, replication: usize, group_size: usize) -> Self {
        CostParams {
            servers,
            responders,
            replication,
            group_size,
        }
    }

    fn check_ranges(&self) -> Result<(), AnalysisError> {
        let n = self.servers;
        let ok = n >= 1
            && (1..=n).contains(&self.responders)
            && (1..=n).contains(&self.replication)
            && (1..=n).contains(&self.group_size);
        if ok {
            Ok(())
        } else {
            Err(AnalysisError::InvalidParams(format!(
                "need 1 <= Nr, M, S <= N, got N={}, Nr={}, M={}, S={}",
                n, self.responders, self.replication, self.group_size
            )))
        }
    }
}

impl fmt::Display for CostParams {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "(N={}, Nr={}, M={}, S={})",
            self.servers, self.responders, self.replication, self.group_size
        )
    }
}

pub fn binom_big(n: usize, k: usize) -> BigInt {
    if k > n {
        BigInt::zero()
    } else {
        num_integer::binomial(BigInt::from(n), BigInt::from(k))
    }
}

fn int(v: usize) -> BigInt {
    BigInt::from(v)
}

/// `(numerator r, denominator n)` of `R`, checked for feasibility.
fn cost_fraction(p: &CostParams) -> Result<(BigInt, BigInt), AnalysisError> {
    p.check_ranges()?;
    if p.group_size + p.responders < p.servers + 2 {
        return Err(AnalysisError::GroupSizeTooSmall);
    }
    let total = binom_big(p.servers, p.group_size);
    let r = &total - binom_big(p.replication, p.group_size);
    let n = &r * int(p.responders) - &total * int(p.servers - p.replication);
    if !n.is_positive() || !r.is_positive() {
        return Err(AnalysisError::NonPositiveDenominator);
    }
    Ok((r, n))
}

/// Achievable secure cost `R = r / n`.
pub fn cost_r(p: &CostParams) -> Result<BigRational, AnalysisError> {
    let (r, n) = cost_fraction(p)?;
    Ok(BigRational::new(r, n))
}

/// Non-secure optimum `1 / (Nr - N + M)`.
pub fn cost_rn(
    servers: usize,
    responders: usize,
    replication: usize,
) -> Result<BigRational, AnalysisError> {
    let d = responders as i64 - servers as i64 + replication as i64;
    if d <= 0 {
        return Err(AnalysisError::NoLinearScheme);
    }
    Ok(BigRational::new(BigInt::one(), BigInt::from(d)))
}

/// `beta = C(N,S) / (C(N,S) - C(M,S))` and
/// `ratio = (Nr - (N - M)) / (Nr - beta (N - M))`.
pub fn ratio_and_beta(p: &CostParams) -> Result<(BigRational, BigRational), AnalysisError> {
    let (r, _) = cost_fraction(p)?;
    let total = binom_big(p.servers, p.group_size);
    let beta = BigRational::new(total, r);
    let gap = BigRational::from_integer(int(p.servers - p.replication));
    let nr = BigRational::from_integer(int(p.responders));
    let ratio = (&nr - &gap) / (&nr - &beta * &gap);
    Ok((ratio, beta))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Regime {
    #[serde(rename = "S>M")]
    GroupExceedsReplication,
    #[serde(rename = "S<=M")]
    GroupWithinReplication,
    #[serde(rename = "infeasible")]
    Infeasible,
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Regime::GroupExceedsReplication => "S>M",
            Regime::GroupWithinReplication => "S<=M",
            Regime::Infeasible => "infeasible",
        })
    }
}

/// One evaluated tuple. Cost fields are absent exactly when infeasible, except
/// `rn`, which only needs `Nr - N + M > 0`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CostPoint {
    pub params: CostParams,
    pub r: Option<BigRational>,
    pub rn: Option<BigRational>,
    pub ratio: Option<BigRational>,
    pub beta: Option<BigRational>,
    pub regime: Regime,
    /// Why the tuple is infeasible.
    pub reason: Option<AnalysisError>,
}

pub fn cost_point(p: &CostParams) -> CostPoint {
    let rn = cost_rn(p.servers, p.responders, p.replication).ok();
    match (cost_r(p), ratio_and_beta(p)) {
        (Ok(r), Ok((ratio, beta))) => CostPoint {
            params: *p,
            r: Some(r),
            rn,
            ratio: Some(ratio),
            beta: Some(beta),
            regime: if p.group_size > p.replication {
                Regime::GroupExceedsReplication
            } else {
                Regime::GroupWithinReplication
            },
            reason: None,
        },
        (Err(e), _) | (_, Err(e)) => CostPoint {
            params: *p,
            r: None,
            rn,
            ratio: None,
            beta: None,
            regime: Regime::Infeasible,
            reason: Some(e),
        },
    }
}

impl CostPoint {
    pub fn feasible(&self) -> bool {
        self.regime != Regime::Infeasible
    }

    /// `{N, Nr, M, S, K: null, R, R_dec, Rn, Rn_dec, ratio, ratio_dec, beta, regime}`.
    pub fn to_json(&self) -> serde_json::Value {
        let frac = |v: &Option<BigRational>| v.as_ref().map(|x| x.to_string());
        let dec = |v: &Option<BigRational>| v.as_ref().map(|x| decimal(x, DECIMAL_DIGITS));
        serde_json::json!({
            "N": self.params.servers,
            "Nr": self.params.responders,
            "M": self.params.replication,
            "S": self.params.group_size,
            "K": null,
            "R": frac(&self.r),
            "R_dec": dec(&self.r),
            "Rn": frac(&self.rn),
            "Rn_dec": dec(&self.rn),
            "ratio": frac(&self.ratio),
            "ratio_dec": dec(&self.ratio),
            "beta": frac(&self.beta),
            "regime": self.regime.to_string(),
        })
    }
}

/// Significant digits in decimal renderings.
pub const DECIMAL_DIGITS: u32 = 12;

/// Exact decimal rendering of `x` rounded half-up to `digits` significant
/// digits, trailing zeros removed, no exponent.
pub fn decimal(x: &BigRational, digits: u32) -> String {
    if x.is_zero() {
        return "0".to_string();
    }
    let sign = if x.is_negative() { "-" } else { "" };
    let x = x.abs();
    let ten = BigInt::from(10);
    // e = floor(log10 x)
    let mut e: i64 = 0;
    let pow10 = |k: i64| -> BigRational {
        if k >= 0 {
            BigRational::from_integer(num_traits::pow(ten.clone(), k as usize))
        } else {
            BigRational::new(BigInt::one(), num_traits::pow(ten.clone(), (-k) as usize))
        }
    };
    while x >= pow10(e + 1) {
        e += 1;
    }
    while x < pow10(e) {
        e -= 1;
    }
    let shift = digits as i64 - 1 - e;
    let scaled = &x * pow10(shift);
    let half = BigRational::new(BigInt::one(), BigInt::from(2));
    let mut mantissa = (scaled + half).floor().to_integer();
    let mut shift = shift;
    if mantissa >= num_traits::pow(ten.clone(), digits as usize) {
        mantissa /= &ten;
        shift -= 1;
    }
    let text = mantissa.to_string();
    let body = if shift <= 0 {
        format!("{}{}", text, "0".repeat((-shift) as usize))
    } else {
        let shift = shift as usize;
        let padded = if text.len() <= shift {
            format!("{}{}", "0".repeat(shift - text.len() + 1), text)
        } else {
            text
        };
        let (whole, frac) = padded.split_at(padded.len() - shift);
        let frac = frac.trim_end_matches('0');
        if frac.is_empty() {
            whole.to_string()
        } else {
            format!("{whole}.{frac}")
        }
    };
    format!("{sign}{body}")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    Replication,
    GroupSize,
    Responders,
    Servers,
}

impl Axis {
    pub fn name(&self) -> &'static str {
        match self {
            Axis::Replication => "M",
            Axis::GroupSize => "S",
            Axis::Responders => "Nr",
            Axis::Servers => "N",
        }
    }

    fn apply(&self, base: &CostParams, value: usize) -> CostParams {
        let mut p = *base;
        match self {
            Axis::Replication => p.replication = value,
            Axis::GroupSize => p.group_size = value,
            Axis::Responders => p.responders = value,
            Axis::Servers => p.servers = value,
        }
        p
    }
}

impl FromStr for Axis {
    type Err = AnalysisError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "M" => Ok(Axis::Replication),
            "S" => Ok(Axis::GroupSize),
            "Nr" => Ok(Axis::Responders),
            "N" => Ok(Axis::Servers),
            other => Err(AnalysisError::UnknownAxis(other.to_string())),
        }
    }
}

/// Fixed parameters plus one axis varied over `from..=to`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SweepSpec {
    pub base: CostParams,
    pub axis: Axis,
    pub from: usize,
    pub to: usize,
}

/// One point per axis value; an empty range yields no points.
pub fn sweep(spec: &SweepSpec) -> Vec<CostPoint> {
    (spec.from..=spec.to)
        .map(|v| cost_point(&spec.axis.apply(&spec.base, v)))
        .collect()
}

pub const CSV_HEADER: [&str; 9] = [
    "axis",
    "value",
    "R_frac",
    "R_dec",
    "Rn_frac",
    "Rn_dec",
    "ratio_frac",
    "ratio_dec",
    "regime",
];

/// Writes the sweep table; infeasible points leave the cost cells empty.
pub fn write_sweep_csv<W: Write>(
    spec: &SweepSpec,
    points: &[CostPoint],
    out: W,
) -> Result<(), AnalysisError> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(out);
    let err = |e: csv::Error| AnalysisError::Csv(e.to_string());
    w.write_record(CSV_HEADER).map_err(err)?;
    for p in points {
        let value = match spec.axis {
            Axis::Replication => p.params.replication,
            Axis::GroupSize => p.params.group_size,
            Axis::Responders => p.params.responders,
            Axis::Servers => p.params.servers,
        };
        let frac = |v: &Option<BigRational>| v.as_ref().map(|x| x.to_string()).unwrap_or_default();
        let dec = |v: &Option<BigRational>| {
            v.as_ref()
                .map(|x| decimal(x, DECIMAL_DIGITS))
                .unwrap_or_default()
        };
        w.write_record([
            spec.axis.name().to_string(),
            value.to_string(),
            frac(&p.r),
            dec(&p.r),
            frac(&p.rn),
            dec(&p.rn),
            frac(&p.ratio),
            dec(&p.ratio),
            p.regime.to_string(),
        ])
        .map_err(err)?;
    }
    w.flush().map_err(|e| AnalysisError::Csv(e.to_string()))
}

/// The sweep rendered as a CSV string.
pub fn sweep_csv(spec: &SweepSpec) -> Result<String, AnalysisError> {
    let mut buf = Vec::new();
    write_sweep_csv(spec, &sweep(spec), &mut buf)?;
    Ok(String::from_utf8(buf).expect("csv output is UTF-8"))
}

/// Every feasible `(N, Nr, M, S)` with `2 <= N <= max_n`.
pub fn feasible_tuples(max_n: usize) -> Vec<CostParams> {
    let mut out = Vec::new();
    for n in 2..=max_n {
        for nr in 1..=n {
            for m in 1..=n {
                for s in 1..=n {
                    let p = CostParams::new(n, nr, m, s);
                    if cost_fraction(&p).is_ok() {
                        out.push(p);
                    }
                }
            }
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OptimalityReport {
    pub tuples_checked: usize,
    /// Human-readable description of each failed assertion.
    pub violations: Vec<String>,
    pub max_ratio: BigRational,
    pub maximizers: Vec<CostParams>,
    /// Every maximizer has `S = 2` and `Nr = N`.
    pub maximizer_at_s2_full_response: bool,
    /// Any `(N, M)` where `beta` increases with `S` inside `S <= M`.
    pub beta_increases: Vec<(usize, usize)>,
}

impl OptimalityReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
            && self.maximizer_at_s2_full_response
            && self.beta_increases.is_empty()
    }
}

/// Exhaustive check over `N <= max_n`: `S > M` gives `R = Rn`, `S <= M` gives
/// `Rn < R <= 2 Rn`, the two ratio routes agree, and the largest ratio sits at
/// `S = 2`, `Nr = N`.
pub fn order_optimality_check(max_n: usize) -> OptimalityReport {
    let two = BigRational::from_integer(BigInt::from(2));
    let mut violations = Vec::new();
    let mut max_ratio = BigRational::zero();
    let mut maximizers = Vec::new();
    let tuples = feasible_tuples(max_n);
    for p in &tuples {
        let point = cost_point(p);
        let (Some(r), Some(rn), Some(ratio)) = (&point.r, &point.rn, &point.ratio) else {
            violations.push(format!("{p}: feasible for R but Rn undefined"));
            continue;
        };
        if &(r / rn) != ratio {
            violations.push(format!(
                "{p}: R/Rn = {} but ratio formula gives {ratio}",
                r / rn
            ));
        }
        if p.group_size > p.replication {
            if r != rn {
                violations.push(format!("{p}: S>M but R = {r} != Rn = {rn}"));
            }
        } else if !(rn < r && r <= &(&two * rn)) {
            violations.push(format!(
                "{p}: S<=M but not Rn < R <= 2Rn (R = {r}, Rn = {rn})"
            ));
        }
        match ratio.cmp(&max_ratio) {
            std::cmp::Ordering::Greater => {
                max_ratio = ratio.clone();
                maximizers = vec![*p];
            }
            std::cmp::Ordering::Equal => maximizers.push(*p),
            std::cmp::Ordering::Less => {}
        }
    }
    let maximizer_at_s2_full_response = !maximizers.is_empty()
        && maximizers
            .iter()
            .all(|p| p.group_size == 2 && p.responders == p.servers);

    let mut beta_increases = Vec::new();
    for n in 2..=max_n {
        for m in 1..=n {
            // beta depends only on (N, M, S); r > 0 needs C(N,S) > C(M,S)
            let betas: Vec<BigRational> = (2..=m)
                .filter(|&s| binom_big(n, s) > binom_big(m, s))
                .map(|s| BigRational::new(binom_big(n, s), binom_big(n, s) - binom_big(m, s)))
                .collect();
            if betas.windows(2).any(|w| w[1] > w[0]) {
                beta_increases.push((n, m));
            }
        }
    }
    OptimalityReport {
        tuples_checked: tuples.len(),
        violations,
        max_ratio,
        maximizers,
        maximizer_at_s2_full_response,
        beta_increases,
    }
}

/// Lowest terms with a positive denominator.
pub fn is_canonical(x: &BigRational) -> bool {
    x.denom().is_positive() && x.numer().gcd(x.denom()).is_one()
}
