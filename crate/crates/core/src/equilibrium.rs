//! Multi-firm solution concepts built on [`best_response`](crate::best_response).
//!
//! [`fixed_point`] runs Gauss-Seidel best-response sweeps: firm `i` answers
//! the latest quantities of every other firm, including those already
//! updated in the current sweep. Iteration stops when the L1 change of all
//! quantity profiles over a sweep drops below `epsilon`. Best-response
//! dynamics can cycle once setups are discrete, so hitting `max_iters` is
//! reported through [`EquilibriumResult::converged`] rather than as an error.

use crate::best_response::{
    best_response, best_response_with_stock, min_cost_delivery, solve_continuous_with_stock,
    BestResponseOptions, BestResponseResult, SetupPattern,
};
use crate::error::{Error, Result};
use crate::model::{self, aggregate_quantities, FirmParams, MarketInstance, Plan};

#[derive(Debug, Clone)]
pub struct IterationConfig {
    /// Convergence threshold on the L1 change per sweep.
    pub epsilon: f64,
    pub max_iters: usize,
    /// Starting quantity profile per firm; all-zero when `None`.
    pub init_q: Option<Vec<Vec<f64>>>,
    /// Inventory each firm holds entering period 1; zero when `None`.
    pub opening_stock: Option<Vec<f64>>,
    pub solver: BestResponseOptions,
}

impl Default for IterationConfig {
    fn default() -> Self {
        Self {
            epsilon: 1e-6,
            max_iters: 1000,
            init_q: None,
            opening_stock: None,
            solver: BestResponseOptions::default(),
        }
    }
}

impl IterationConfig {
    fn validate(&self, firms: usize, periods: usize) -> Result<()> {
        if !(self.epsilon > 0.0) {
            return Err(Error::InvalidInput("epsilon must be > 0".into()));
        }
        if self.max_iters == 0 {
            return Err(Error::InvalidInput("max_iters must be >= 1".into()));
        }
        if let Some(init) = &self.init_q {
            if init.len() != firms {
                return Err(Error::LengthMismatch {
                    what: "init_q profiles",
                    expected: firms,
                    got: init.len(),
                });
            }
            for (i, q) in init.iter().enumerate() {
                if q.len() != periods {
                    return Err(Error::LengthMismatch {
                        what: "init_q profile",
                        expected: periods,
                        got: q.len(),
                    });
                }
                if q.iter().any(|&v| !(v >= 0.0)) {
                    return Err(Error::InvalidInput(format!(
                        "init_q[{}] must be >= 0",
                        i + 1
                    )));
                }
            }
        }
        if let Some(stock) = &self.opening_stock {
            if stock.len() != firms {
                return Err(Error::LengthMismatch {
                    what: "opening stocks",
                    expected: firms,
                    got: stock.len(),
                });
            }
            if stock.iter().any(|&v| !(v >= 0.0)) {
                return Err(Error::InvalidInput("opening stock must be >= 0".into()));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct EquilibriumResult {
    pub plans: Vec<Plan>,
    /// Profit of each plan against the others' final quantities.
    pub profits: Vec<f64>,
    /// L1 change of the quantity profiles in each sweep.
    pub trace: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
}

#[derive(Debug, Clone)]
pub struct DeviationReport {
    pub is_equilibrium: bool,
    /// Best unilateral profit improvement available to each firm.
    pub gains: Vec<f64>,
    pub best_responses: Vec<BestResponseResult>,
}

/// The single firm's optimal plan when nobody else sells.
pub fn solve_monopoly(
    inst: &MarketInstance,
    fp: &FirmParams,
    opts: &BestResponseOptions,
) -> Result<(Plan, f64)> {
    let br = best_response(inst, fp, &vec![0.0; inst.periods()], opts)?;
    Ok((br.plan, br.profit))
}

fn l1_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum()
}

/// Best-response iteration towards a Cournot equilibrium.
pub fn fixed_point(
    inst: &MarketInstance,
    firms: &[FirmParams],
    cfg: &IterationConfig,
) -> Result<EquilibriumResult> {
    let n = firms.len();
    let periods = inst.periods();
    if n == 0 {
        return Err(Error::InvalidInput("at least one firm required".into()));
    }
    cfg.validate(n, periods)?;
    let stocks = cfg.opening_stock.clone().unwrap_or_else(|| vec![0.0; n]);
    let mut profiles = cfg
        .init_q
        .clone()
        .unwrap_or_else(|| vec![vec![0.0; periods]; n]);
    let mut plans: Vec<Plan> = (0..n).map(|_| Plan::zero(periods)).collect();
    let mut trace = Vec::new();
    let mut converged = false;

    for _sweep in 0..cfg.max_iters {
        let mut delta = 0.0;
        for i in 0..n {
            let views: Vec<&[f64]> = profiles.iter().map(Vec::as_slice).collect();
            let opp = aggregate_quantities(&views, periods, Some(i));
            let br = best_response_with_stock(inst, &firms[i], &opp, stocks[i], &cfg.solver)?;
            delta += l1_distance(&br.plan.q, &profiles[i]);
            profiles[i] = br.plan.q.clone();
            plans[i] = br.plan;
        }
        trace.push(delta);
        // Nobody to react to: the first answer is final.
        if n == 1 || delta < cfg.epsilon {
            converged = true;
            break;
        }
    }

    let views: Vec<&[f64]> = plans.iter().map(|p| p.q.as_slice()).collect();
    let profits = firms
        .iter()
        .zip(&plans)
        .enumerate()
        .map(|(i, (fp, plan))| {
            model::profit(
                inst,
                fp,
                plan,
                &aggregate_quantities(&views, periods, Some(i)),
            )
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(EquilibriumResult {
        iterations: trace.len(),
        plans,
        profits,
        trace,
        converged,
    })
}

/// Checks that no firm can gain more than `opts.tol.dev_eps` by deviating alone.
pub fn verify_equilibrium(
    inst: &MarketInstance,
    firms: &[FirmParams],
    plans: &[Plan],
    opts: &BestResponseOptions,
) -> Result<DeviationReport> {
    if firms.len() != plans.len() {
        return Err(Error::LengthMismatch {
            what: "plans",
            expected: firms.len(),
            got: plans.len(),
        });
    }
    let periods = inst.periods();
    for (i, (fp, plan)) in firms.iter().zip(plans).enumerate() {
        let report = model::check_feasible(inst, fp, plan, &opts.tol)?;
        if !report.ok() {
            return Err(Error::InfeasiblePlan {
                firm: i + 1,
                detail: report.to_string(),
            });
        }
    }
    let views: Vec<&[f64]> = plans.iter().map(|p| p.q.as_slice()).collect();
    let mut gains = Vec::with_capacity(firms.len());
    let mut best_responses = Vec::with_capacity(firms.len());
    for (i, (fp, plan)) in firms.iter().zip(plans).enumerate() {
        let opp = aggregate_quantities(&views, periods, Some(i));
        let current = model::profit(inst, fp, plan, &opp)?;
        let br = best_response(inst, fp, &opp, opts)?;
        gains.push(br.profit - current);
        best_responses.push(br);
    }
    let is_equilibrium = gains.iter().all(|&g| g <= opts.tol.dev_eps);
    Ok(DeviationReport {
        is_equilibrium,
        gains,
        best_responses,
    })
}

/// Search settings for [`deterrence`].
#[derive(Debug, Clone)]
pub struct DeterrenceConfig {
    /// Largest multiple of the leader's monopoly profile tried.
    pub lambda_max: f64,
    /// Absolute bisection tolerance on the multiple.
    pub lambda_tol: f64,
    pub leader_stock: f64,
    pub follower_stock: f64,
    pub solver: BestResponseOptions,
}

impl Default for DeterrenceConfig {
    fn default() -> Self {
        Self {
            lambda_max: 10.0,
            lambda_tol: 1e-4,
            leader_stock: 0.0,
            follower_stock: 0.0,
            solver: BestResponseOptions::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct DeterrenceResult {
    /// Multiple of the leader's monopoly profile that is played.
    pub lambda: f64,
    pub leader_plan: Plan,
    pub leader_profit: f64,
    /// The follower's best reply to the leader's quantities.
    pub follower_response: BestResponseResult,
}

impl DeterrenceResult {
    pub fn follower_profit(&self) -> f64 {
        self.follower_response.profit
    }
}

/// Smallest multiple `lambda >= 1` of the leader's monopoly quantities that
/// leaves the follower no profitable entry.
///
/// The follower counts as deterred when producing gains it at most `dev_eps`
/// over selling only its opening stock (with no stock: when its best-response
/// profit is at most `dev_eps`). It then stays out, and the leader's profit is
/// evaluated against those stock sales alone. The leader's production is the cheapest delivery of the
/// scaled profile.
pub fn deterrence(
    inst: &MarketInstance,
    leader: &FirmParams,
    follower: &FirmParams,
    cfg: &DeterrenceConfig,
) -> Result<DeterrenceResult> {
    if !(cfg.lambda_max >= 1.0) || !(cfg.lambda_tol > 0.0) {
        return Err(Error::InvalidInput(
            "lambda_max must be >= 1 and lambda_tol > 0".into(),
        ));
    }
    let periods = inst.periods();
    let zero = vec![0.0; periods];
    let base = best_response_with_stock(inst, leader, &zero, cfg.leader_stock, &cfg.solver)?
        .plan
        .q;
    let dev_eps = cfg.solver.tol.dev_eps;
    let idle = SetupPattern::none(periods);
    // Gain of producing over selling off the opening stock only.
    let respond = |lambda: f64| -> Result<(BestResponseResult, f64)> {
        let q: Vec<f64> = base.iter().map(|v| v * lambda).collect();
        let br = best_response_with_stock(inst, follower, &q, cfg.follower_stock, &cfg.solver)?;
        let stay_out = if cfg.follower_stock > 0.0 {
            solve_continuous_with_stock(
                inst,
                follower,
                &idle,
                &q,
                cfg.follower_stock,
                &cfg.solver.tol,
            )?
            .profit
        } else {
            0.0
        };
        let gain = br.profit - stay_out;
        Ok((br, gain))
    };

    let (mut response, gain) = respond(1.0)?;
    let mut lambda = 1.0;
    if gain > dev_eps {
        if base.iter().all(|&v| v == 0.0) {
            return Err(Error::DeterrenceInfeasible(
                "the leader sells nothing on its own, so scaling cannot deter".into(),
            ));
        }
        let (top, top_gain) = respond(cfg.lambda_max)?;
        if top_gain > dev_eps {
            return Err(Error::DeterrenceInfeasible(format!(
                "follower still gains {:.6} from producing against {} times the leader's monopoly quantities",
                top_gain, cfg.lambda_max
            )));
        }
        let (mut lo, mut hi) = (1.0, cfg.lambda_max);
        response = top;
        while hi - lo > cfg.lambda_tol {
            let mid = 0.5 * (lo + hi);
            let (r, g) = respond(mid)?;
            if g <= dev_eps {
                hi = mid;
                response = r;
            } else {
                lo = mid;
            }
        }
        lambda = hi;
    }

    let q: Vec<f64> = base.iter().map(|v| v * lambda).collect();
    let leader_plan = min_cost_delivery(leader, &q, cfg.leader_stock).ok_or_else(|| {
        Error::DeterrenceInfeasible(format!(
            "leader cannot deliver {lambda:.4} times its monopoly quantities within capacity"
        ))
    })?;
    // A deterred follower only sells what it already holds.
    let leader_profit = if cfg.follower_stock > 0.0 {
        let stay_out = solve_continuous_with_stock(
            inst,
            follower,
            &idle,
            &q,
            cfg.follower_stock,
            &cfg.solver.tol,
        )?;
        model::profit(inst, leader, &leader_plan, &stay_out.plan.q)?
    } else {
        model::profit(inst, leader, &leader_plan, &zero)?
    };
    Ok(DeterrenceResult {
        lambda,
        leader_plan,
        leader_profit,
        follower_response: response,
    })
}
