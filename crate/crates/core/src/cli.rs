//! Scenario files, command dispatch and report rendering for the `lotgame`
//! binary.
//!
//! A scenario is a JSON document:
//!
//! ```json
//! {
//!   "periods": [{"a": 10, "b": 1}, {"a": 10, "b": 0.5}],
//!   "firms": [{"name": "firm1", "F": 10, "H": 1, "K": 25}],
//!   "config": {"epsilon": 1e-6, "max_iters": 1000, "delta": 0.05,
//!              "init_q": [[0, 0]], "roles": [0, 1], "dev_eps": 1e-6}
//! }
//! ```
//!
//! `config` and all of its keys are optional.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Parser, ValueEnum};
use serde::Deserialize;

use crate::best_response::{min_cost_delivery, BestResponseOptions};
use crate::equilibrium::{
    deterrence, fixed_point, solve_monopoly, verify_equilibrium, DeterrenceConfig, IterationConfig,
};
use crate::error::{Error, Result};
use crate::iterated::{play_iterated, IteratedOptions, Strategy, StrategyKind, DEFAULT_DELTA};
use crate::model::{self, FirmParams, MarketInstance, Plan, Tolerances};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Command {
    /// Each firm alone in the market.
    Monopoly,
    /// Best-response iteration from `init_q` (all-zero by default).
    Equilibrium,
    /// Nash check of the `init_q` profiles, or of the iteration result.
    Verify,
    /// First firm deters the second.
    Deterrence,
    /// Period-by-period repeated game between two firms.
    Iterated,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, ValueEnum)]
pub enum OutputMode {
    #[default]
    Table,
    Csv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum StrategyArg {
    Tft,
    Cooperate,
    Defect,
}

impl From<StrategyArg> for StrategyKind {
    fn from(s: StrategyArg) -> Self {
        match s {
            StrategyArg::Tft => StrategyKind::TitForTat,
            StrategyArg::Cooperate => StrategyKind::AlwaysCooperate,
            StrategyArg::Defect => StrategyKind::AlwaysDefect,
        }
    }
}

/// Command line of the `lotgame` binary.
#[derive(Debug, Clone, Parser)]
#[command(
    name = "lotgame",
    version,
    about = "Equilibria and repeated play in lot-sizing markets"
)]
pub struct Cli {
    #[arg(value_enum)]
    pub command: Command,
    /// Scenario file (JSON).
    #[arg(long)]
    pub scenario: PathBuf,
    #[arg(long, value_enum, default_value_t = OutputMode::Table)]
    pub output: OutputMode,
    /// Convergence threshold on the L1 change per sweep.
    #[arg(long)]
    pub epsilon: Option<f64>,
    #[arg(long)]
    pub max_iters: Option<usize>,
    /// Largest profit gain still accepted as no deviation.
    #[arg(long)]
    pub dev_eps: Option<f64>,
    #[arg(long, value_enum, default_value_t = StrategyArg::Tft)]
    pub strategy1: StrategyArg,
    #[arg(long, value_enum, default_value_t = StrategyArg::Tft)]
    pub strategy2: StrategyArg,
    #[arg(long)]
    pub role1: Option<usize>,
    #[arg(long)]
    pub role2: Option<usize>,
    /// Slack above the cooperative quantity before a move counts as defection.
    #[arg(long)]
    pub delta: Option<f64>,
    /// Worker threads for the setup enumeration (default: all cores).
    #[arg(long)]
    pub threads: Option<usize>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScenario {
    periods: Option<Vec<RawPeriod>>,
    firms: Option<Vec<RawFirm>>,
    config: Option<RawConfig>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPeriod {
    a: f64,
    b: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawFirm {
    name: Option<String>,
    #[serde(rename = "F")]
    setup_cost: f64,
    #[serde(rename = "H")]
    holding_cost: f64,
    #[serde(rename = "K")]
    capacity: f64,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    epsilon: Option<f64>,
    max_iters: Option<usize>,
    delta: Option<f64>,
    init_q: Option<Vec<Vec<f64>>>,
    roles: Option<[usize; 2]>,
    dev_eps: Option<f64>,
}

/// A validated scenario with every default filled in.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub market: MarketInstance,
    pub names: Vec<String>,
    pub firms: Vec<FirmParams>,
    pub epsilon: f64,
    pub max_iters: usize,
    pub delta: f64,
    pub dev_eps: f64,
    /// One quantity profile per firm.
    pub init_q: Option<Vec<Vec<f64>>>,
    pub roles: [usize; 2],
}

pub fn parse_scenario(path: &Path) -> Result<Scenario> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::InvalidInput(format!("{}: {e}", path.display())))?;
    parse_scenario_str(&text)
}

pub fn parse_scenario_str(text: &str) -> Result<Scenario> {
    let raw: RawScenario = serde_json::from_str(text)
        .map_err(|e| Error::InvalidInput(format!("scenario syntax: {e}")))?;
    let periods = raw
        .periods
        .ok_or_else(|| Error::InvalidInput("periods: required".into()))?;
    let firms_raw = raw
        .firms
        .ok_or_else(|| Error::InvalidInput("firms: required".into()))?;
    if firms_raw.is_empty() {
        return Err(Error::InvalidInput(
            "firms: at least one firm required".into(),
        ));
    }
    let market = MarketInstance::new(
        periods.iter().map(|p| p.a).collect(),
        periods.iter().map(|p| p.b).collect(),
    )?;
    let mut names = Vec::with_capacity(firms_raw.len());
    let mut firms = Vec::with_capacity(firms_raw.len());
    for (i, f) in firms_raw.into_iter().enumerate() {
        let fp =
            FirmParams::new(f.setup_cost, f.holding_cost, f.capacity).map_err(|e| match e {
                Error::InvalidInput(msg) => Error::InvalidInput(format!("firms[{}]: {msg}", i + 1)),
                other => other,
            })?;
        names.push(f.name.unwrap_or_else(|| format!("firm{}", i + 1)));
        firms.push(fp);
    }

    let cfg = raw.config.unwrap_or_default();
    let scenario = Scenario {
        market,
        names,
        firms,
        epsilon: cfg.epsilon.unwrap_or(IterationConfig::default().epsilon),
        max_iters: cfg
            .max_iters
            .unwrap_or(IterationConfig::default().max_iters),
        delta: cfg.delta.unwrap_or(DEFAULT_DELTA),
        dev_eps: cfg.dev_eps.unwrap_or(Tolerances::default().dev_eps),
        init_q: cfg.init_q,
        roles: cfg.roles.unwrap_or([0, 1]),
    };
    scenario.validate()?;
    Ok(scenario)
}

impl Scenario {
    pub fn periods(&self) -> usize {
        self.market.periods()
    }

    fn validate(&self) -> Result<()> {
        if !(self.epsilon.is_finite() && self.epsilon > 0.0) {
            return Err(Error::InvalidInput("config.epsilon must be > 0".into()));
        }
        if self.max_iters == 0 {
            return Err(Error::InvalidInput("config.max_iters must be >= 1".into()));
        }
        if !(self.delta.is_finite() && self.delta > 0.0) {
            return Err(Error::InvalidInput("config.delta must be > 0".into()));
        }
        if !(self.dev_eps.is_finite() && self.dev_eps > 0.0) {
            return Err(Error::InvalidInput("config.dev_eps must be > 0".into()));
        }
        for (i, &r) in self.roles.iter().enumerate() {
            if r > 1 {
                return Err(Error::InvalidInput(format!(
                    "config.roles[{}] must be 0 or 1",
                    i + 1
                )));
            }
        }
        if let Some(init) = &self.init_q {
            if init.len() != self.firms.len() {
                return Err(Error::LengthMismatch {
                    what: "config.init_q profiles",
                    expected: self.firms.len(),
                    got: init.len(),
                });
            }
            for (i, q) in init.iter().enumerate() {
                if q.len() != self.periods() {
                    return Err(Error::LengthMismatch {
                        what: "config.init_q profile length",
                        expected: self.periods(),
                        got: q.len(),
                    });
                }
                if let Some(t) = q.iter().position(|v| !(v.is_finite() && *v >= 0.0)) {
                    return Err(Error::InvalidInput(format!(
                        "config.init_q[{}][{}] must be >= 0",
                        i + 1,
                        t + 1
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Command-line settings that override or extend the scenario.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub epsilon: Option<f64>,
    pub max_iters: Option<usize>,
    pub dev_eps: Option<f64>,
    pub delta: Option<f64>,
    pub roles: [Option<usize>; 2],
    pub strategies: [Option<StrategyKind>; 2],
}

impl From<&Cli> for Overrides {
    fn from(cli: &Cli) -> Self {
        Self {
            epsilon: cli.epsilon,
            max_iters: cli.max_iters,
            dev_eps: cli.dev_eps,
            delta: cli.delta,
            roles: [cli.role1, cli.role2],
            strategies: [Some(cli.strategy1.into()), Some(cli.strategy2.into())],
        }
    }
}

/// One firm's column block in a report.
#[derive(Debug, Clone, PartialEq)]
pub struct FirmBlock {
    pub name: String,
    pub plan: Plan,
    /// Market price each period as seen by this firm.
    pub prices: Vec<f64>,
    pub profit: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub command: Command,
    pub market: MarketInstance,
    pub blocks: Vec<FirmBlock>,
    /// Free-form lines printed under the table.
    pub notes: Vec<String>,
}

/// Runs `command` on `scenario`.
pub fn run(command: Command, scenario: &Scenario, over: &Overrides) -> Result<Report> {
    let mut sc = scenario.clone();
    if let Some(e) = over.epsilon {
        sc.epsilon = e;
    }
    if let Some(m) = over.max_iters {
        sc.max_iters = m;
    }
    if let Some(d) = over.dev_eps {
        sc.dev_eps = d;
    }
    if let Some(d) = over.delta {
        sc.delta = d;
    }
    for i in 0..2 {
        if let Some(r) = over.roles[i] {
            sc.roles[i] = r;
        }
    }
    sc.validate()?;
    let solver = BestResponseOptions {
        tol: Tolerances {
            dev_eps: sc.dev_eps,
            ..Tolerances::default()
        },
        ..BestResponseOptions::default()
    };
    let iteration = IterationConfig {
        epsilon: sc.epsilon,
        max_iters: sc.max_iters,
        init_q: sc.init_q.clone(),
        opening_stock: None,
        solver: solver.clone(),
    };
    match command {
        Command::Monopoly => run_monopoly(&sc, &solver),
        Command::Equilibrium => run_equilibrium(&sc, &iteration),
        Command::Verify => run_verify(&sc, &iteration),
        Command::Deterrence => run_deterrence(&sc, &solver),
        Command::Iterated => run_iterated(&sc, over, &solver, &iteration),
    }
}

fn run_monopoly(sc: &Scenario, solver: &BestResponseOptions) -> Result<Report> {
    let mut blocks = Vec::with_capacity(sc.firms.len());
    for (name, fp) in sc.names.iter().zip(&sc.firms) {
        let (plan, profit) = solve_monopoly(&sc.market, fp, solver)?;
        let prices = (0..sc.periods())
            .map(|t| sc.market.price_at(t, plan.q[t]))
            .collect();
        blocks.push(FirmBlock {
            name: name.clone(),
            plan,
            prices,
            profit,
        });
    }
    Ok(Report {
        command: Command::Monopoly,
        market: sc.market.clone(),
        blocks,
        notes: Vec::new(),
    })
}

fn joint_blocks(
    sc: &Scenario,
    names: &[String],
    firms: &[FirmParams],
    plans: Vec<Plan>,
) -> Result<Vec<FirmBlock>> {
    let outcome = model::market_outcome(&sc.market, firms, &plans)?;
    Ok(names
        .iter()
        .zip(plans)
        .zip(outcome.profits)
        .map(|((name, plan), profit)| FirmBlock {
            name: name.clone(),
            plan,
            prices: outcome.prices.clone(),
            profit,
        })
        .collect())
}

fn run_equilibrium(sc: &Scenario, cfg: &IterationConfig) -> Result<Report> {
    let res = fixed_point(&sc.market, &sc.firms, cfg)?;
    let mut notes = vec![if res.converged {
        format!(
            "converged after {} sweeps (last change {:.3e})",
            res.iterations,
            res.trace.last().copied().unwrap_or(0.0)
        )
    } else {
        format!(
            "not converged: {} sweeps, last change {:.3e}",
            res.iterations,
            res.trace.last().copied().unwrap_or(f64::NAN)
        )
    }];
    let blocks = joint_blocks(sc, &sc.names, &sc.firms, res.plans)?;
    if !res.converged {
        notes.push("plans shown are those of the last sweep".into());
    }
    Ok(Report {
        command: Command::Equilibrium,
        market: sc.market.clone(),
        blocks,
        notes,
    })
}

fn run_verify(sc: &Scenario, cfg: &IterationConfig) -> Result<Report> {
    let (plans, mut notes) = match &sc.init_q {
        Some(profiles) => {
            let mut plans = Vec::with_capacity(profiles.len());
            for (i, (fp, q)) in sc.firms.iter().zip(profiles).enumerate() {
                let plan = min_cost_delivery(fp, q, 0.0).ok_or_else(|| Error::InfeasiblePlan {
                    firm: i + 1,
                    detail: "profile exceeds what capacity can deliver".into(),
                })?;
                plans.push(plan);
            }
            (
                plans,
                vec!["checking the init_q profiles with cheapest production".to_string()],
            )
        }
        None => {
            let res = fixed_point(&sc.market, &sc.firms, cfg)?;
            let note = format!(
                "checking the iteration result ({} after {} sweeps)",
                if res.converged {
                    "converged"
                } else {
                    "not converged"
                },
                res.iterations
            );
            (res.plans, vec![note])
        }
    };
    let report = verify_equilibrium(&sc.market, &sc.firms, &plans, &cfg.solver)?;
    for (name, gain) in sc.names.iter().zip(&report.gains) {
        notes.push(format!("{name}: best deviation gain {gain:.6}"));
    }
    notes.push(format!(
        "equilibrium: {} (dev_eps {:e})",
        if report.is_equilibrium { "yes" } else { "no" },
        sc.dev_eps
    ));
    let blocks = joint_blocks(sc, &sc.names, &sc.firms, plans)?;
    Ok(Report {
        command: Command::Verify,
        market: sc.market.clone(),
        blocks,
        notes,
    })
}

fn run_deterrence(sc: &Scenario, solver: &BestResponseOptions) -> Result<Report> {
    if sc.firms.len() < 2 {
        return Err(Error::InvalidInput(
            "firms: deterrence needs a leader and a follower".into(),
        ));
    }
    let cfg = DeterrenceConfig {
        solver: solver.clone(),
        ..DeterrenceConfig::default()
    };
    let res = deterrence(&sc.market, &sc.firms[0], &sc.firms[1], &cfg)?;
    let notes = vec![
        format!(
            "lambda = {:.4} times {}'s monopoly quantities",
            res.lambda, sc.names[0]
        ),
        format!(
            "{}'s best entry earns {:.6}, so it stays out",
            sc.names[1],
            res.follower_profit()
        ),
    ];
    let plans = vec![res.leader_plan, Plan::zero(sc.periods())];
    let blocks = joint_blocks(sc, &sc.names[..2], &sc.firms[..2], plans)?;
    Ok(Report {
        command: Command::Deterrence,
        market: sc.market.clone(),
        blocks,
        notes,
    })
}

fn run_iterated(
    sc: &Scenario,
    over: &Overrides,
    solver: &BestResponseOptions,
    iteration: &IterationConfig,
) -> Result<Report> {
    if sc.firms.len() != 2 {
        return Err(Error::InvalidInput(format!(
            "firms: the repeated game needs exactly two firms, got {}",
            sc.firms.len()
        )));
    }
    let mut strategies = Vec::with_capacity(2);
    for i in 0..2 {
        let kind = over.strategies[i].unwrap_or(StrategyKind::TitForTat);
        strategies.push(Strategy::new(kind, sc.roles[i])?);
    }
    let opts = IteratedOptions {
        cooperation: IterationConfig {
            init_q: None,
            ..iteration.clone()
        },
        ..IteratedOptions::with_solver(solver.clone())
    };
    let tr = play_iterated(&sc.market, &sc.firms, &strategies, sc.delta, &opts)?;
    let mut notes = Vec::with_capacity(2);
    for (i, s) in strategies.iter().enumerate() {
        let cls: String = tr.classifications[i]
            .iter()
            .map(|c| c.to_string())
            .collect();
        notes.push(format!(
            "{} ({}, role {}): moves {}",
            sc.names[i], s.kind, s.role_index, cls
        ));
    }
    let blocks = sc
        .names
        .iter()
        .zip(tr.plans)
        .zip(tr.profits)
        .map(|((name, plan), profit)| FirmBlock {
            name: name.clone(),
            plan,
            prices: tr.prices.clone(),
            profit,
        })
        .collect();
    Ok(Report {
        command: Command::Iterated,
        market: sc.market.clone(),
        blocks,
        notes,
    })
}

impl Report {
    pub fn render(&self, mode: OutputMode) -> String {
        match mode {
            OutputMode::Table => self.to_table(),
            OutputMode::Csv => self.to_csv(),
        }
    }

    /// Fixed-width layout, three decimals.
    pub fn to_table(&self) -> String {
        const BLOCK: usize = 32;
        let mut out = String::new();
        let _ = write!(out, "{:>3} {:>8} {:>8} ", "", "", "");
        for b in &self.blocks {
            let _ = write!(out, "| {:<width$} ", b.name, width = BLOCK);
        }
        out.push('\n');
        let _ = write!(out, "{:>3} {:>8} {:>8} ", "t", "a_t", "b_t");
        for _ in &self.blocks {
            let _ = write!(out, "| {:>2} {:>9} {:>9} {:>9} ", "y", "x_t", "h_t", "q_t");
        }
        out.push('\n');
        let a = self.market.intercepts();
        let b = self.market.slopes();
        for t in 0..self.market.periods() {
            let _ = write!(out, "{:>3} {:>8.3} {:>8.3} ", t + 1, a[t], b[t]);
            for blk in &self.blocks {
                let p = &blk.plan;
                let _ = write!(
                    out,
                    "| {:>2} {:>9.3} {:>9.3} {:>9.3} ",
                    u8::from(p.y[t]),
                    p.x[t],
                    p.h[t],
                    p.q[t]
                );
            }
            out.push('\n');
        }
        for (i, blk) in self.blocks.iter().enumerate() {
            if self.command == Command::Monopoly {
                let _ = writeln!(out, "{}: Π = {:.3}", blk.name, blk.profit);
            } else {
                let _ = writeln!(out, "{}: Π^{} = {:.3}", blk.name, i + 1, blk.profit);
            }
        }
        for note in &self.notes {
            let _ = writeln!(out, "{note}");
        }
        out
    }

    /// One row per firm and period, full precision.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("firm,period,y,x,h,q,price,profit_total\n");
        for blk in &self.blocks {
            let p = &blk.plan;
            for t in 0..p.periods() {
                let _ = writeln!(
                    out,
                    "{},{},{},{:?},{:?},{:?},{:?},{:?}",
                    blk.name,
                    t + 1,
                    u8::from(p.y[t]),
                    p.x[t],
                    p.h[t],
                    p.q[t],
                    blk.prices[t],
                    blk.profit
                );
            }
        }
        out
    }
}

/// Process exit status for an error: 2 for bad input, 1 for solver failures.
pub fn exit_code(err: &Error) -> i32 {
    if err.is_input_error() {
        2
    } else {
        1
    }
}

/// Parses the scenario, runs the command and renders the report.
pub fn execute(cli: &Cli) -> Result<String> {
    let scenario = parse_scenario(&cli.scenario)?;
    let report = run(cli.command, &scenario, &Overrides::from(cli))?;
    Ok(report.render(cli.output))
}
