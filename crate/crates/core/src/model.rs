//! Market and firm data, plans, and the evaluation functions every solver is
//! checked against.
//!
//! Periods are numbered `1..=T` in the public operations that take a period
//! index; the vectors inside [`MarketInstance`] and [`Plan`] are indexed
//! from zero as usual.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Horizon and per-period linear inverse demand `P_t(Q) = max(a_t - b_t Q, 0)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarketInstance {
    a: Vec<f64>,
    b: Vec<f64>,
}

impl MarketInstance {
    pub fn new(a: Vec<f64>, b: Vec<f64>) -> Result<Self> {
        if a.is_empty() {
            return Err(Error::InvalidInput(
                "periods: at least one period required".into(),
            ));
        }
        if a.len() != b.len() {
            return Err(Error::LengthMismatch {
                what: "demand slopes",
                expected: a.len(),
                got: b.len(),
            });
        }
        for (t, (&at, &bt)) in a.iter().zip(&b).enumerate() {
            if !(at.is_finite() && at >= 0.0) {
                return Err(Error::InvalidInput(format!("a[{}] must be >= 0", t + 1)));
            }
            if !(bt.is_finite() && bt > 0.0) {
                return Err(Error::InvalidInput(format!("b[{}] must be > 0", t + 1)));
            }
        }
        Ok(Self { a, b })
    }

    /// Same intercept in every period.
    pub fn with_constant_intercept(a: f64, b: Vec<f64>) -> Result<Self> {
        Self::new(vec![a; b.len()], b)
    }

    pub fn periods(&self) -> usize {
        self.a.len()
    }

    pub fn intercepts(&self) -> &[f64] {
        &self.a
    }

    pub fn slopes(&self) -> &[f64] {
        &self.b
    }

    /// The market restricted to periods `start..T` (zero-based `start`).
    pub fn suffix(&self, start: usize) -> Result<Self> {
        if start >= self.periods() {
            return Err(Error::PeriodOutOfRange {
                index: start + 1,
                periods: self.periods(),
            });
        }
        Ok(Self {
            a: self.a[start..].to_vec(),
            b: self.b[start..].to_vec(),
        })
    }

    /// Clipped price in zero-based period `idx`.
    pub(crate) fn price_at(&self, idx: usize, total: f64) -> f64 {
        (self.a[idx] - self.b[idx] * total).max(0.0)
    }

    /// Quantity at which the price in zero-based period `idx` reaches zero.
    pub(crate) fn choke_quantity(&self, idx: usize) -> f64 {
        self.a[idx] / self.b[idx]
    }
}

/// One firm's technology: setup cost `F`, unit holding cost `H`, capacity `K`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FirmParams {
    pub setup_cost: f64,
    pub holding_cost: f64,
    pub capacity: f64,
}

impl FirmParams {
    pub fn new(setup_cost: f64, holding_cost: f64, capacity: f64) -> Result<Self> {
        let p = Self {
            setup_cost,
            holding_cost,
            capacity,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.setup_cost.is_finite() && self.setup_cost >= 0.0) {
            return Err(Error::InvalidInput("F must be >= 0".into()));
        }
        if !(self.holding_cost.is_finite() && self.holding_cost >= 0.0) {
            return Err(Error::InvalidInput("H must be >= 0".into()));
        }
        if !(self.capacity.is_finite() && self.capacity > 0.0) {
            return Err(Error::InvalidInput("K must be > 0".into()));
        }
        Ok(())
    }
}

/// A firm's full decision over the horizon.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Plan {
    /// Setup indicators.
    pub y: Vec<bool>,
    /// Production.
    pub x: Vec<f64>,
    /// End-of-period inventory.
    pub h: Vec<f64>,
    /// Quantity placed in the market.
    pub q: Vec<f64>,
}

impl Plan {
    /// The plan that never produces or sells.
    pub fn zero(periods: usize) -> Self {
        Self {
            y: vec![false; periods],
            x: vec![0.0; periods],
            h: vec![0.0; periods],
            q: vec![0.0; periods],
        }
    }

    pub fn periods(&self) -> usize {
        self.q.len()
    }

    pub fn setups(&self) -> usize {
        self.y.iter().filter(|&&y| y).count()
    }

    fn check_lengths(&self, periods: usize) -> Result<()> {
        for (what, len) in [
            ("plan.y", self.y.len()),
            ("plan.x", self.x.len()),
            ("plan.h", self.h.len()),
            ("plan.q", self.q.len()),
        ] {
            if len != periods {
                return Err(Error::LengthMismatch {
                    what,
                    expected: periods,
                    got: len,
                });
            }
        }
        Ok(())
    }
}

/// Aggregate market quantities, prices and per-firm profits for a set of plans.
#[derive(Debug, Clone, PartialEq)]
pub struct MarketOutcome {
    pub total: Vec<f64>,
    pub prices: Vec<f64>,
    pub profits: Vec<f64>,
}

/// Comparison slacks used across the crate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerances {
    pub feas_eps: f64,
    pub price_eps: f64,
    pub dev_eps: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            feas_eps: 1e-9,
            price_eps: 1e-9,
            dev_eps: 1e-6,
        }
    }
}

impl Tolerances {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("feas_eps", self.feas_eps),
            ("price_eps", self.price_eps),
            ("dev_eps", self.dev_eps),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidInput(format!("{name} must be > 0")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ViolationKind {
    /// `h_{t-1} + x_t = q_t + h_t` fails.
    Balance,
    /// `x_t <= K y_t` fails.
    SetupCoupling,
    NegativeProduction,
    NegativeInventory,
    NegativeSales,
}

impl fmt::Display for ViolationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ViolationKind::Balance => "inventory balance",
            ViolationKind::SetupCoupling => "setup coupling",
            ViolationKind::NegativeProduction => "negative production",
            ViolationKind::NegativeInventory => "negative inventory",
            ViolationKind::NegativeSales => "negative sales",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    /// One-based period.
    pub period: usize,
    pub kind: ViolationKind,
    /// Size of the violation.
    pub amount: f64,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}, period {} (by {:.3e})",
            self.kind, self.period, self.amount
        )
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct FeasibilityReport {
    pub violations: Vec<Violation>,
}

impl FeasibilityReport {
    pub fn ok(&self) -> bool {
        self.violations.is_empty()
    }
}

impl fmt::Display for FeasibilityReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.ok() {
            return f.write_str("feasible");
        }
        let parts: Vec<String> = self.violations.iter().map(|v| v.to_string()).collect();
        f.write_str(&parts.join("; "))
    }
}

/// Clipped price in one-based period `t` for total market quantity `total`.
pub fn price(inst: &MarketInstance, t: usize, total: f64) -> Result<f64> {
    if t == 0 || t > inst.periods() {
        return Err(Error::PeriodOutOfRange {
            index: t,
            periods: inst.periods(),
        });
    }
    if !(total >= 0.0) {
        return Err(Error::InvalidInput(format!(
            "total quantity must be >= 0, got {total}"
        )));
    }
    Ok(inst.price_at(t - 1, total))
}

/// Feasibility with no opening stock.
pub fn check_feasible(
    inst: &MarketInstance,
    fp: &FirmParams,
    plan: &Plan,
    tol: &Tolerances,
) -> Result<FeasibilityReport> {
    check_feasible_with_stock(inst, fp, plan, 0.0, tol)
}

/// Feasibility when the firm enters period 1 holding `opening_stock` units.
///
/// Violations are collected, not raised; only a length mismatch is an error.
pub fn check_feasible_with_stock(
    inst: &MarketInstance,
    fp: &FirmParams,
    plan: &Plan,
    opening_stock: f64,
    tol: &Tolerances,
) -> Result<FeasibilityReport> {
    plan.check_lengths(inst.periods())?;
    let eps = tol.feas_eps;
    let mut report = FeasibilityReport::default();
    let mut prev = opening_stock;
    for t in 0..inst.periods() {
        let period = t + 1;
        let mut push = |kind, amount: f64| {
            report.violations.push(Violation {
                period,
                kind,
                amount,
            })
        };
        let (x, h, q) = (plan.x[t], plan.h[t], plan.q[t]);
        let imbalance = prev + x - q - h;
        if imbalance.abs() > eps || !imbalance.is_finite() {
            push(ViolationKind::Balance, imbalance.abs());
        }
        let cap = if plan.y[t] { fp.capacity } else { 0.0 };
        if x > cap + eps {
            push(ViolationKind::SetupCoupling, x - cap);
        }
        if x < -eps {
            push(ViolationKind::NegativeProduction, -x);
        }
        if h < -eps {
            push(ViolationKind::NegativeInventory, -h);
        }
        if q < -eps {
            push(ViolationKind::NegativeSales, -q);
        }
        prev = h;
    }
    Ok(report)
}

/// Setup plus holding cost `sum_t (F y_t + H h_t)`.
pub fn plan_cost(fp: &FirmParams, plan: &Plan) -> f64 {
    plan.y
        .iter()
        .zip(&plan.h)
        .map(|(&y, &h)| if y { fp.setup_cost } else { 0.0 } + fp.holding_cost * h)
        .sum()
}

/// Sales revenue at clipped prices given the opponents' total quantities.
pub fn revenue(inst: &MarketInstance, plan: &Plan, opp_q: &[f64]) -> Result<f64> {
    let periods = inst.periods();
    plan.check_lengths(periods)?;
    if opp_q.len() != periods {
        return Err(Error::LengthMismatch {
            what: "opponent quantities",
            expected: periods,
            got: opp_q.len(),
        });
    }
    Ok((0..periods)
        .map(|t| plan.q[t] * inst.price_at(t, plan.q[t] + opp_q[t]))
        .sum())
}

/// Profit of `plan` when the other firms jointly sell `opp_q`.
pub fn profit(inst: &MarketInstance, fp: &FirmParams, plan: &Plan, opp_q: &[f64]) -> Result<f64> {
    Ok(revenue(inst, plan, opp_q)? - plan_cost(fp, plan))
}

/// Per-period sum across firms, skipping firm `skip` when given.
pub fn aggregate_quantities(plans: &[&[f64]], periods: usize, skip: Option<usize>) -> Vec<f64> {
    let mut total = vec![0.0; periods];
    for (i, q) in plans.iter().enumerate() {
        if Some(i) == skip {
            continue;
        }
        for (acc, v) in total.iter_mut().zip(q.iter()) {
            *acc += v;
        }
    }
    total
}

/// Prices and profits when every firm executes its plan.
pub fn market_outcome(
    inst: &MarketInstance,
    firms: &[FirmParams],
    plans: &[Plan],
) -> Result<MarketOutcome> {
    if firms.len() != plans.len() {
        return Err(Error::LengthMismatch {
            what: "plans",
            expected: firms.len(),
            got: plans.len(),
        });
    }
    let periods = inst.periods();
    let qs: Vec<&[f64]> = plans.iter().map(|p| p.q.as_slice()).collect();
    let total = aggregate_quantities(&qs, periods, None);
    let prices = (0..periods).map(|t| inst.price_at(t, total[t])).collect();
    let profits = firms
        .iter()
        .zip(plans)
        .enumerate()
        .map(|(i, (fp, plan))| {
            let opp = aggregate_quantities(&qs, periods, Some(i));
            profit(inst, fp, plan, &opp)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(MarketOutcome {
        total,
        prices,
        profits,
    })
}
