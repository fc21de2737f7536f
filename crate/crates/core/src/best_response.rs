//! Exact single-firm optimization against fixed opponent quantities.
//!
//! For a fixed setup pattern `y` the firm's problem is a concave quadratic
//! program in `(q, h)` once production is eliminated with the inventory
//! balance `x_t = q_t + h_t - h_{t-1}`. [`best_response`] enumerates every
//! pattern, solves each subproblem with the active-set method in
//! [`crate::qp`], and keeps the most profitable plan.
//!
//! Subproblems are first solved with the linear (unclipped) price. If the
//! optimum sells into a negative price in some period, the subproblem is
//! solved again with `q_t <= max(a_t / b_t - opp_q_t, 0)` in every period, on
//! which the linear and clipped revenues coincide. A firm holding opening
//! stock may also flood a period past that point, selling at price zero; see
//! [`solve_continuous_with_stock`].

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::{self, FirmParams, MarketInstance, Plan, Tolerances};
use crate::qp::{ConvexQp, LinearConstraint};

/// Two profits closer than this are treated as tied.
pub const PROFIT_TIE_EPS: f64 = 1e-9;

/// Values this close to zero are snapped to zero in emitted plans.
const SNAP_EPS: f64 = 1e-11;

/// A fixed vector of setup decisions.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SetupPattern {
    bits: Vec<bool>,
}

impl SetupPattern {
    pub fn new(bits: Vec<bool>) -> Self {
        Self { bits }
    }

    pub fn none(periods: usize) -> Self {
        Self::new(vec![false; periods])
    }

    /// Pattern number `index` in ascending lexicographic order, period 1 being
    /// the most significant bit.
    pub fn from_index(index: u64, periods: usize) -> Self {
        let bits = (0..periods)
            .map(|t| (index >> (periods - 1 - t)) & 1 == 1)
            .collect();
        Self { bits }
    }

    pub fn index(&self) -> u64 {
        self.bits
            .iter()
            .fold(0u64, |acc, &b| (acc << 1) | u64::from(b))
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn setups(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PatternStatus {
    /// Solved with the linear price; every sold unit fetches a nonnegative price.
    Optimal,
    /// Re-solved with sales capped at the zero-price quantity.
    Clipped,
}

#[derive(Debug, Clone)]
pub struct BestResponseOptions {
    /// Largest horizon accepted by the 2^T enumeration.
    pub enumeration_cap: usize,
    pub tol: Tolerances,
    /// Solve setup patterns on the rayon pool.
    pub parallel: bool,
}

impl Default for BestResponseOptions {
    fn default() -> Self {
        Self {
            enumeration_cap: 24,
            tol: Tolerances::default(),
            parallel: true,
        }
    }
}

/// Optimum of the continuous subproblem for one setup pattern.
#[derive(Debug, Clone)]
pub struct ContinuousSolution {
    pub plan: Plan,
    /// Profit including the setup costs of the pattern.
    pub profit: f64,
    pub status: PatternStatus,
    pub kkt_residual: f64,
    pub iterations: usize,
}

#[derive(Debug, Clone)]
pub struct BestResponseResult {
    pub plan: Plan,
    pub profit: f64,
    pub pattern: SetupPattern,
    pub patterns_explored: usize,
    /// Status of every pattern, indexed by [`SetupPattern::index`].
    pub subproblem_status: Vec<PatternStatus>,
    /// Worst KKT residual over all subproblems.
    pub max_kkt_residual: f64,
}

/// Single-period monopoly decision.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SinglePeriodDecision {
    pub quantity: f64,
    pub produce: bool,
}

/// Single-period monopoly: sell `a / 2b` if the revenue there beats the setup cost.
pub fn monopoly_single_period(a: f64, b: f64, setup_cost: f64) -> Result<SinglePeriodDecision> {
    if !(b > 0.0) {
        return Err(Error::InvalidInput("b must be > 0".into()));
    }
    let q = a / (2.0 * b);
    let produce = q * (a - b * q) > setup_cost;
    Ok(SinglePeriodDecision {
        quantity: if produce { q } else { 0.0 },
        produce,
    })
}

/// Symmetric one-period Cournot quantity for `n` identical firms without
/// fixed costs.
///
/// Each firm's stationarity condition gives `q_i = max(a - b sum_{j!=i} q_j, 0) / 2b`,
/// whose symmetric solution is `a / ((n + 1) b)`.
pub fn cournot_single_period(a: f64, b: f64, n: usize) -> Result<f64> {
    if !(b > 0.0) {
        return Err(Error::InvalidInput("b must be > 0".into()));
    }
    if n == 0 {
        return Err(Error::InvalidInput("n must be >= 1".into()));
    }
    Ok(a / ((n as f64 + 1.0) * b))
}

/// One-period best response to the others' total quantity, ignoring fixed costs.
pub fn cournot_reaction(a: f64, b: f64, others: f64) -> f64 {
    (a - b * others).max(0.0) / (2.0 * b)
}

fn check_opponents(inst: &MarketInstance, opp_q: &[f64]) -> Result<()> {
    if opp_q.len() != inst.periods() {
        return Err(Error::LengthMismatch {
            what: "opponent quantities",
            expected: inst.periods(),
            got: opp_q.len(),
        });
    }
    if let Some(t) = opp_q.iter().position(|&v| !(v >= 0.0) || !v.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "opp_q[{}] must be >= 0",
            t + 1
        )));
    }
    Ok(())
}

/// Continuous optimum for a fixed setup pattern and no opening stock.
pub fn solve_continuous(
    inst: &MarketInstance,
    fp: &FirmParams,
    pattern: &SetupPattern,
    opp_q: &[f64],
    tol: &Tolerances,
) -> Result<ContinuousSolution> {
    solve_continuous_with_stock(inst, fp, pattern, opp_q, 0.0, tol)
}

/// Continuous optimum for a fixed setup pattern, entering period 1 with
/// `opening_stock` units on hand.
///
/// When prices clip, periods can also be played past the zero-price
/// quantity at zero revenue, which is how a firm gets rid of stock that is
/// dearer to hold than to give away.
pub fn solve_continuous_with_stock(
    inst: &MarketInstance,
    fp: &FirmParams,
    pattern: &SetupPattern,
    opp_q: &[f64],
    opening_stock: f64,
    tol: &Tolerances,
) -> Result<ContinuousSolution> {
    check_opponents(inst, opp_q)?;
    if pattern.len() != inst.periods() {
        return Err(Error::LengthMismatch {
            what: "setup pattern",
            expected: inst.periods(),
            got: pattern.len(),
        });
    }
    if !(opening_stock >= 0.0) {
        return Err(Error::InvalidInput("opening stock must be >= 0".into()));
    }

    let (plan, iterations, kkt) =
        solve_pattern(inst, fp, pattern, opp_q, opening_stock, None, None)?;
    let clipped = (0..inst.periods()).any(|t| {
        plan.q[t] > tol.feas_eps
            && inst.intercepts()[t] - inst.slopes()[t] * (plan.q[t] + opp_q[t]) < -tol.price_eps
    });
    let priced = if clipped {
        None
    } else {
        Some((plan, iterations, kkt))
    };
    let (plan, more, kkt, flooded) =
        solve_regimes(inst, fp, pattern, opp_q, opening_stock, priced)?;
    let iterations = if clipped { iterations + more } else { more };
    let status = if clipped || flooded {
        PatternStatus::Clipped
    } else {
        PatternStatus::Optimal
    };
    let profit = model::profit(inst, fp, &plan, opp_q)?;
    Ok(ContinuousSolution {
        plan,
        profit,
        status,
        kkt_residual: kkt,
        iterations,
    })
}

/// Best plan over the sales regimes of the clipped price.
///
/// Past the zero-price quantity `c_t = max(a_t / b_t - opp_q_t, 0)` a
/// period earns nothing, so besides selling at most `c_t` everywhere the
/// firm may flood one period with `q_t >= c_t` to get rid of opening stock
/// that costs more to carry than it can earn. Flooding a second period never
/// helps: its units could have gone out in the first one. Only periods with
/// `c_t` within the opening stock are candidates, since topping a flood up
/// with fresh production is dominated by selling the stock there at a
/// positive price.
fn solve_regimes(
    inst: &MarketInstance,
    fp: &FirmParams,
    pattern: &SetupPattern,
    opp_q: &[f64],
    opening_stock: f64,
    priced: Option<(Plan, usize, f64)>,
) -> Result<(Plan, usize, f64, bool)> {
    let periods = inst.periods();
    let caps: Vec<f64> = (0..periods)
        .map(|t| (inst.choke_quantity(t) - opp_q[t]).max(0.0))
        .collect();
    let (mut plan, mut iterations, mut kkt, mut flooded) = match priced {
        Some((plan, it, kkt)) => (plan, it, kkt, false),
        None => {
            let (plan, it, kkt) =
                solve_pattern(inst, fp, pattern, opp_q, opening_stock, Some(&caps), None)?;
            (plan, it, kkt, false)
        }
    };
    if opening_stock <= 0.0 {
        return Ok((plan, iterations, kkt, flooded));
    }
    let mut best_profit = model::profit(inst, fp, &plan, opp_q)?;
    for t in (0..periods).filter(|&t| caps[t] <= opening_stock) {
        // Carry the stock to period t and release all of it there.
        let mut start = DVector::zeros(2 * periods);
        for s in 0..t {
            start[periods + s] = opening_stock;
        }
        start[t] = opening_stock;
        let mut dump = vec![false; periods];
        dump[t] = true;
        let (candidate, it, res) = solve_pattern(
            inst,
            fp,
            pattern,
            opp_q,
            opening_stock,
            Some(&caps),
            Some((&dump, &caps, &start)),
        )?;
        iterations += it;
        let p = model::profit(inst, fp, &candidate, opp_q)?;
        if p > best_profit + PROFIT_TIE_EPS {
            best_profit = p;
            plan = candidate;
            kkt = res;
            flooded = true;
        }
    }
    Ok((plan, iterations, kkt, flooded))
}

/// Flooded periods, their sales floors and a feasible start.
type DumpRegime<'a> = (&'a [bool], &'a [f64], &'a DVector<f64>);

/// Builds and solves the reduced QP over `z = (q_1..q_T, h_1..h_T)`.
fn solve_pattern(
    inst: &MarketInstance,
    fp: &FirmParams,
    pattern: &SetupPattern,
    opp_q: &[f64],
    opening_stock: f64,
    sales_caps: Option<&[f64]>,
    dump: Option<DumpRegime<'_>>,
) -> Result<(Plan, usize, f64)> {
    let periods = inst.periods();
    let n = 2 * periods;
    let (a, b) = (inst.intercepts(), inst.slopes());
    let dumped = |t: usize| dump.is_some_and(|(d, _, _)| d[t]);

    let mut hessian = DMatrix::zeros(n, n);
    let mut linear = DVector::zeros(n);
    for t in 0..periods {
        if !dumped(t) {
            hessian[(t, t)] = 2.0 * b[t];
            linear[t] = -(a[t] - b[t] * opp_q[t]);
        }
        linear[periods + t] = fp.holding_cost;
    }

    let mut constraints = Vec::with_capacity(5 * periods);
    for t in 0..periods {
        // Production x_t = q_t + h_t - h_{t-1}, with h_0 = opening_stock.
        let mut row = DVector::zeros(n);
        row[t] = 1.0;
        row[periods + t] = 1.0;
        if t > 0 {
            row[periods + t - 1] = -1.0;
        }
        let carried = if t == 0 { opening_stock } else { 0.0 };
        if pattern.bits()[t] {
            constraints.push(LinearConstraint::ge(row.clone(), carried));
            constraints.push(LinearConstraint::ge(-row, -fp.capacity - carried));
        } else {
            constraints.push(LinearConstraint::eq(row, carried));
        }
    }
    for i in 0..n {
        let mut row = DVector::zeros(n);
        row[i] = 1.0;
        constraints.push(LinearConstraint::ge(row, 0.0));
    }
    if let Some(caps) = sales_caps {
        for (t, &cap) in caps.iter().enumerate() {
            let mut row = DVector::zeros(n);
            if dumped(t) {
                row[t] = 1.0;
                constraints.push(LinearConstraint::ge(row, dump.unwrap().1[t]));
            } else {
                row[t] = -1.0;
                constraints.push(LinearConstraint::ge(row, -cap));
            }
        }
    }

    let qp = ConvexQp {
        hessian,
        linear,
        constraints,
    };
    let start = match dump {
        Some((_, _, z)) => z.clone(),
        None => {
            // Selling nothing and carrying the opening stock is always feasible.
            let mut z = DVector::zeros(n);
            for t in 0..periods {
                z[periods + t] = opening_stock;
            }
            z
        }
    };
    let sol = qp.solve(start, 10 * periods * periods)?;

    let snap = |v: f64| if v.abs() < SNAP_EPS { 0.0 } else { v };
    let q: Vec<f64> = (0..periods).map(|t| snap(sol.x[t]).max(0.0)).collect();
    let h: Vec<f64> = (0..periods)
        .map(|t| snap(sol.x[periods + t]).max(0.0))
        .collect();
    let mut prev = opening_stock;
    let mut x = Vec::with_capacity(periods);
    for t in 0..periods {
        let made = if pattern.bits()[t] {
            snap(q[t] + h[t] - prev).clamp(0.0, fp.capacity)
        } else {
            0.0
        };
        x.push(made);
        prev = h[t];
    }
    let plan = Plan {
        y: pattern.bits().to_vec(),
        x,
        h,
        q,
    };
    Ok((plan, sol.iterations, sol.kkt_residual))
}

/// Best response with no opening stock.
pub fn best_response(
    inst: &MarketInstance,
    fp: &FirmParams,
    opp_q: &[f64],
    opts: &BestResponseOptions,
) -> Result<BestResponseResult> {
    best_response_with_stock(inst, fp, opp_q, 0.0, opts)
}

/// Profit-maximizing plan over all `2^T` setup patterns.
///
/// Ties within [`PROFIT_TIE_EPS`] go to the lexicographically smallest
/// pattern. The reduction runs sequentially over the collected results, so
/// the answer does not depend on how many threads solved the subproblems.
pub fn best_response_with_stock(
    inst: &MarketInstance,
    fp: &FirmParams,
    opp_q: &[f64],
    opening_stock: f64,
    opts: &BestResponseOptions,
) -> Result<BestResponseResult> {
    let periods = inst.periods();
    if periods > opts.enumeration_cap || periods >= 64 {
        return Err(Error::TooLargeForEnumeration {
            periods,
            cap: opts.enumeration_cap,
        });
    }
    check_opponents(inst, opp_q)?;
    let count = 1u64 << periods;
    let solve = |index: u64| {
        let pattern = SetupPattern::from_index(index, periods);
        solve_continuous_with_stock(inst, fp, &pattern, opp_q, opening_stock, &opts.tol)
    };
    let solutions: Vec<ContinuousSolution> = if opts.parallel {
        (0..count)
            .into_par_iter()
            .map(solve)
            .collect::<Result<_>>()?
    } else {
        (0..count).map(solve).collect::<Result<_>>()?
    };

    let mut best = 0usize;
    for (i, sol) in solutions.iter().enumerate().skip(1) {
        if sol.profit > solutions[best].profit + PROFIT_TIE_EPS {
            best = i;
        }
    }
    let max_kkt_residual = solutions.iter().map(|s| s.kkt_residual).fold(0.0, f64::max);
    let subproblem_status = solutions.iter().map(|s| s.status).collect();
    let winner = &solutions[best];
    Ok(BestResponseResult {
        plan: winner.plan.clone(),
        profit: winner.profit,
        pattern: SetupPattern::from_index(best as u64, periods),
        patterns_explored: solutions.len(),
        subproblem_status,
        max_kkt_residual,
    })
}

/// Cheapest production plan that delivers exactly `q`, or `None` if no
/// setup pattern has the capacity.
///
/// For a fixed pattern the opening stock is sold first and production is
/// scheduled as late as capacity allows, which minimizes every cumulative
/// inventory level at once. Ties go to the lexicographically smallest pattern.
pub fn min_cost_delivery(fp: &FirmParams, q: &[f64], opening_stock: f64) -> Option<Plan> {
    let periods = q.len();
    if periods >= 64 {
        return None;
    }
    let mut best: Option<(f64, Plan)> = None;
    for index in 0..(1u64 << periods) {
        let pattern = SetupPattern::from_index(index, periods);
        let Some(plan) = deliver_with_pattern(fp, q, opening_stock, pattern.bits()) else {
            continue;
        };
        let cost = model::plan_cost(fp, &plan);
        if best
            .as_ref()
            .is_none_or(|(c, _)| cost < *c - PROFIT_TIE_EPS)
        {
            best = Some((cost, plan));
        }
    }
    best.map(|(_, plan)| plan)
}

fn deliver_with_pattern(
    fp: &FirmParams,
    q: &[f64],
    opening_stock: f64,
    setups: &[bool],
) -> Option<Plan> {
    let periods = q.len();
    // Net requirements after the opening stock covers the earliest sales.
    let mut stock = opening_stock;
    let mut need: Vec<f64> = q
        .iter()
        .map(|&d| {
            let used = stock.min(d);
            stock -= used;
            d - used
        })
        .collect();
    let mut x = vec![0.0; periods];
    let mut backlog = 0.0;
    for t in (0..periods).rev() {
        backlog += need[t];
        if setups[t] {
            let made = backlog.min(fp.capacity);
            x[t] = made;
            backlog -= made;
        }
        need[t] = 0.0;
    }
    if backlog > 1e-9 {
        return None;
    }
    let mut h = Vec::with_capacity(periods);
    let mut prev = opening_stock;
    for t in 0..periods {
        let next = prev + x[t] - q[t];
        let next = if next.abs() < SNAP_EPS {
            0.0
        } else {
            next.max(0.0)
        };
        h.push(next);
        prev = next;
    }
    Some(Plan {
        y: setups.to_vec(),
        x,
        h,
        q: q.to_vec(),
    })
}
