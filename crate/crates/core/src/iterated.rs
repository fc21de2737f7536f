//! Repeated play: each period both firms commit to that period's move only,
//! replanning the rest of the horizon from their current inventories.
//!
//! A cooperative move is the first period of a Cournot equilibrium of the
//! remaining game. Equilibria are often asymmetric, so a firm must pick a
//! slot in it; [`Strategy::role_index`] fixes that choice (slot 0 is the
//! firm that best-responds first). A defection starts from the deterrence
//! plan computed by [`deterrence`] on the remaining game, and the firm keeps
//! executing that plan for as long as it goes on defecting.
//!
//! After each period a firm judges the opponent's quantity against every
//! cooperative quantity the opponent could have been playing, that is its
//! slot in the remaining-game equilibrium under either role assignment.

use std::fmt;

use crate::best_response::BestResponseOptions;
use crate::equilibrium::{
    deterrence, fixed_point, DeterrenceConfig, EquilibriumResult, IterationConfig,
};
use crate::error::{Error, Result};
use crate::model::{self, FirmParams, MarketInstance, Plan};

/// Default one-sided slack used when classifying moves.
pub const DEFAULT_DELTA: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StrategyKind {
    /// Cooperate first, then copy the opponent's last classified move.
    TitForTat,
    AlwaysCooperate,
    AlwaysDefect,
}

impl fmt::Display for StrategyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            StrategyKind::TitForTat => "tft",
            StrategyKind::AlwaysCooperate => "cooperate",
            StrategyKind::AlwaysDefect => "defect",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Strategy {
    pub kind: StrategyKind,
    /// Slot this firm takes in the Cournot equilibria it computes (0 or 1).
    pub role_index: usize,
}

impl Strategy {
    pub fn new(kind: StrategyKind, role_index: usize) -> Result<Self> {
        if role_index > 1 {
            return Err(Error::InvalidInput(format!(
                "role index must be 0 or 1, got {role_index}"
            )));
        }
        Ok(Self { kind, role_index })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Classification {
    Cooperate,
    Defect,
}

impl fmt::Display for Classification {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Classification::Cooperate => "C",
            Classification::Defect => "D",
        })
    }
}

/// One period's commitment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Move {
    /// One-based period of the full game.
    pub period: usize,
    pub q: f64,
    pub x: f64,
    pub y: bool,
}

impl Move {
    fn first_of(plan: &Plan, period: usize) -> Self {
        Self::first_of_at(plan, 0, period)
    }

    fn first_of_at(plan: &Plan, idx: usize, period: usize) -> Self {
        Self {
            period,
            q: plan.q[idx],
            x: plan.x[idx],
            y: plan.y[idx],
        }
    }
}

/// Where the game stands when a firm decides.
#[derive(Debug, Clone)]
pub struct Position {
    /// Periods still to play.
    pub remaining: MarketInstance,
    /// One-based index of the first remaining period.
    pub period: usize,
    pub own_stock: f64,
    pub opponent_stock: f64,
}

impl Position {
    pub fn start(inst: &MarketInstance) -> Self {
        Self {
            remaining: inst.clone(),
            period: 1,
            own_stock: 0.0,
            opponent_stock: 0.0,
        }
    }

    /// The same position seen by the other firm.
    pub fn for_opponent(&self) -> Self {
        Self {
            remaining: self.remaining.clone(),
            period: self.period,
            own_stock: self.opponent_stock,
            opponent_stock: self.own_stock,
        }
    }
}

/// A cooperative move together with the equilibrium it came from.
#[derive(Debug, Clone)]
pub struct CooperativeMove {
    pub chosen: Move,
    pub equilibrium: EquilibriumResult,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Intent {
    Cooperate,
    Defect,
}

#[derive(Debug, Clone)]
pub struct IteratedTrajectory {
    /// Per firm, per period.
    pub moves: Vec<Vec<Move>>,
    /// What each firm set out to play, per period.
    pub intents: Vec<Vec<Intent>>,
    /// How the opponent classified each firm's move, per period.
    pub classifications: Vec<Vec<Classification>>,
    /// Realized plans, including end-of-period inventories.
    pub plans: Vec<Plan>,
    pub prices: Vec<f64>,
    pub profits: Vec<f64>,
}

#[derive(Debug, Clone, Default)]
pub struct IteratedOptions {
    pub cooperation: IterationConfig,
    pub deterrence: DeterrenceConfig,
}

impl IteratedOptions {
    /// Uses `solver` for every best response of both move types.
    pub fn with_solver(solver: BestResponseOptions) -> Self {
        Self {
            cooperation: IterationConfig {
                solver: solver.clone(),
                ..Default::default()
            },
            deterrence: DeterrenceConfig {
                solver,
                ..Default::default()
            },
        }
    }
}

/// `Defect` iff the observed quantity exceeds the reference by more than `delta`.
pub fn classify_move(q_observed: f64, q_reference: f64, delta: f64) -> Classification {
    if q_observed > q_reference + delta {
        Classification::Defect
    } else {
        Classification::Cooperate
    }
}

/// First move of the remaining-game Cournot equilibrium, taking slot
/// `role_index` in it.
///
/// `cfg.init_q`, when set, is in slot order: the firm in slot 0 first.
pub fn cooperate_move(
    pos: &Position,
    own: &FirmParams,
    opponent: &FirmParams,
    role_index: usize,
    cfg: &IterationConfig,
) -> Result<CooperativeMove> {
    if role_index > 1 {
        return Err(Error::InvalidInput(format!(
            "role index must be 0 or 1, got {role_index}"
        )));
    }
    let (firms, stocks) = if role_index == 0 {
        ([*own, *opponent], vec![pos.own_stock, pos.opponent_stock])
    } else {
        ([*opponent, *own], vec![pos.opponent_stock, pos.own_stock])
    };
    let cfg = IterationConfig {
        opening_stock: Some(stocks),
        ..cfg.clone()
    };
    let equilibrium = fixed_point(&pos.remaining, &firms, &cfg)?;
    let chosen = Move::first_of(&equilibrium.plans[role_index], pos.period);
    Ok(CooperativeMove {
        chosen,
        equilibrium,
    })
}

/// Deterrence plan against `opponent` over the remaining game.
pub fn defect_plan(
    pos: &Position,
    own: &FirmParams,
    opponent: &FirmParams,
    cfg: &DeterrenceConfig,
) -> Result<Plan> {
    let cfg = DeterrenceConfig {
        leader_stock: pos.own_stock,
        follower_stock: pos.opponent_stock,
        ..cfg.clone()
    };
    Ok(deterrence(&pos.remaining, own, opponent, &cfg)?.leader_plan)
}

/// First move of the deterrence plan against `opponent` on the remaining game.
pub fn defect_move(
    pos: &Position,
    own: &FirmParams,
    opponent: &FirmParams,
    cfg: &DeterrenceConfig,
) -> Result<Move> {
    Ok(Move::first_of(
        &defect_plan(pos, own, opponent, cfg)?,
        pos.period,
    ))
}

/// Largest quantity the opponent could sell this period while cooperating,
/// whichever role it took.
fn cooperative_ceiling(as_slot0: &CooperativeMove, as_slot1: &CooperativeMove) -> f64 {
    as_slot0.chosen.q.max(as_slot1.chosen.q)
}

/// Plays the two-firm repeated game over the whole horizon.
pub fn play_iterated(
    inst: &MarketInstance,
    firms: &[FirmParams],
    strategies: &[Strategy],
    delta: f64,
    opts: &IteratedOptions,
) -> Result<IteratedTrajectory> {
    if firms.len() != 2 || strategies.len() != 2 {
        return Err(Error::InvalidInput(
            "the repeated game needs exactly two firms and two strategies".into(),
        ));
    }
    if !(delta > 0.0) {
        return Err(Error::InvalidInput("delta must be > 0".into()));
    }
    for s in strategies {
        Strategy::new(s.kind, s.role_index)?;
    }
    let periods = inst.periods();
    let mut stocks = [0.0f64; 2];
    let mut moves: Vec<Vec<Move>> = (0..2).map(|_| Vec::with_capacity(periods)).collect();
    let mut intents: Vec<Vec<Intent>> = (0..2).map(|_| Vec::with_capacity(periods)).collect();
    let mut classifications: Vec<Vec<Classification>> =
        (0..2).map(|_| Vec::with_capacity(periods)).collect();
    let mut plans: Vec<Plan> = vec![Plan::zero(periods); 2];
    let mut continuation: [[Option<Vec<Vec<f64>>>; 2]; 2] = Default::default();
    // Deterrence plan of an ongoing run of defections and the period it began.
    let mut defection: [Option<(usize, Plan)>; 2] = [None, None];

    for k in 0..periods {
        let first = Position {
            remaining: inst.suffix(k)?,
            period: k + 1,
            own_stock: stocks[0],
            opponent_stock: stocks[1],
        };
        let positions = [first.clone(), first.for_opponent()];
        // Cooperative moves of each firm under either role, each warm-started
        // from the continuation of last period's equilibrium for that role.
        let mut coop: Vec<[CooperativeMove; 2]> = Vec::with_capacity(2);
        for i in 0..2 {
            let j = 1 - i;
            let mut solve = |role: usize| {
                let cfg = IterationConfig {
                    init_q: continuation[i][role].take(),
                    ..opts.cooperation.clone()
                };
                cooperate_move(&positions[i], &firms[i], &firms[j], role, &cfg)
            };
            let slot0 = solve(0)?;
            let slot1 = solve(1)?;
            coop.push([slot0, slot1]);
        }
        for (i, moves) in coop.iter().enumerate() {
            for (role, m) in moves.iter().enumerate() {
                continuation[i][role] = if k + 1 < periods {
                    Some(
                        m.equilibrium
                            .plans
                            .iter()
                            .map(|p| p.q[1..].to_vec())
                            .collect(),
                    )
                } else {
                    None
                };
            }
        }

        let mut chosen = Vec::with_capacity(2);
        for i in 0..2 {
            let j = 1 - i;
            let intent = match strategies[i].kind {
                StrategyKind::AlwaysCooperate => Intent::Cooperate,
                StrategyKind::AlwaysDefect => Intent::Defect,
                StrategyKind::TitForTat => match classifications[j].last() {
                    None | Some(Classification::Cooperate) => Intent::Cooperate,
                    Some(Classification::Defect) => Intent::Defect,
                },
            };
            chosen.push(match intent {
                Intent::Cooperate => coop[i][strategies[i].role_index].chosen,
                Intent::Defect => {
                    if defection[i].is_none() {
                        let plan =
                            defect_plan(&positions[i], &firms[i], &firms[j], &opts.deterrence)?;
                        defection[i] = Some((k, plan));
                    }
                    let (start, plan) = defection[i].as_ref().expect("defection plan set above");
                    Move::first_of_at(plan, k - *start, k + 1)
                }
            });
            if intent == Intent::Cooperate {
                defection[i] = None;
            }
            intents[i].push(intent);
        }

        for i in 0..2 {
            let reference = cooperative_ceiling(&coop[i][0], &coop[i][1]);
            classifications[i].push(classify_move(chosen[i].q, reference, delta));
            let m: Move = chosen[i];
            let next = stocks[i] + m.x - m.q;
            stocks[i] = if next.abs() < 1e-11 {
                0.0
            } else {
                next.max(0.0)
            };
            plans[i].y[k] = m.y;
            plans[i].x[k] = m.x;
            plans[i].q[k] = m.q;
            plans[i].h[k] = stocks[i];
            moves[i].push(m);
        }
    }

    let outcome = model::market_outcome(inst, firms, &plans)?;
    Ok(IteratedTrajectory {
        moves,
        intents,
        classifications,
        plans,
        prices: outcome.prices,
        profits: outcome.profits,
    })
}
