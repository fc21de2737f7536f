#![allow(dead_code)]

use lotgame::model::{FirmParams, MarketInstance};
use rand::Rng;

pub const SMALL_B: [f64; 6] = [1.0, 1.0, 1.0, 0.5, 0.5, 0.5];
pub const LARGE_B: [f64; 6] = [0.25, 0.25, 0.25, 0.125, 0.125, 0.125];

/// Reference deterrence quantities for firm 2, rounded to three decimals.
pub const DETERRENCE_Q: [f64; 6] = [5.439, 5.449, 5.469, 13.409, 12.889, 12.769];

pub fn small() -> MarketInstance {
    MarketInstance::with_constant_intercept(10.0, SMALL_B.to_vec()).unwrap()
}

pub fn large() -> MarketInstance {
    MarketInstance::with_constant_intercept(10.0, LARGE_B.to_vec()).unwrap()
}

pub fn firm(capacity: f64) -> FirmParams {
    FirmParams::new(10.0, 1.0, capacity).unwrap()
}

pub fn scenario_path(name: &str) -> std::path::PathBuf {
    std::path::Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../scenarios")
        .join(name)
}

/// Smallest holding cost of delivering `q` with setups `y`, or `None`.
///
/// `L_t` is the least cumulative production by period `t`: it must cover
/// cumulative sales net of the opening stock and leave room to reach
/// `L_{t+1}` with one period of capacity.
pub fn oracle_holding(
    q: &[f64],
    y: &[bool],
    capacity: f64,
    holding: f64,
    stock: f64,
) -> Option<f64> {
    let n = q.len();
    let mut sold = vec![0.0; n];
    let mut acc = 0.0;
    for t in 0..n {
        acc += q[t];
        sold[t] = acc;
    }
    let need: Vec<f64> = sold.iter().map(|s| (s - stock).max(0.0)).collect();
    let cap = |t: usize| if y[t] { capacity } else { 0.0 };
    let mut least = vec![0.0; n];
    least[n - 1] = need[n - 1];
    for t in (0..n - 1).rev() {
        least[t] = need[t].max(least[t + 1] - cap(t + 1));
    }
    if least[0] > cap(0) + 1e-9 {
        return None;
    }
    Some(
        (0..n)
            .map(|t| holding * (stock + least[t] - sold[t]).max(0.0))
            .sum(),
    )
}

/// Best profit for setups `y` by coarse grid search over sales, refined by
/// a shrinking compass search that ends well below a step of 1e-2.
pub fn oracle_pattern_profit(
    a: &[f64],
    b: &[f64],
    fp: &FirmParams,
    y: &[bool],
    opp: &[f64],
    stock: f64,
) -> f64 {
    let n = a.len();
    let setups = y.iter().filter(|&&v| v).count() as f64 * fp.setup_cost;
    let mut upper = vec![0.0; n];
    let mut cum = stock;
    for t in 0..n {
        if y[t] {
            cum += fp.capacity;
        }
        upper[t] = cum;
        if stock == 0.0 {
            // Without stock to shed, selling past the zero-price point is dominated.
            upper[t] = upper[t].min((a[t] / b[t] - opp[t]).max(0.0));
        }
    }
    let value = |q: &[f64]| -> f64 {
        match oracle_holding(q, y, fp.capacity, fp.holding_cost, stock) {
            None => f64::NEG_INFINITY,
            Some(hold) => {
                let rev: f64 = (0..n)
                    .map(|t| q[t] * (a[t] - b[t] * (q[t] + opp[t])).max(0.0))
                    .sum();
                rev - hold - setups
            }
        }
    };

    const POINTS: usize = 24;
    let mut best_q = vec![0.0; n];
    let mut best = value(&best_q);
    let mut idx = vec![0usize; n];
    loop {
        let q: Vec<f64> = (0..n)
            .map(|t| upper[t] * idx[t] as f64 / POINTS as f64)
            .collect();
        let v = value(&q);
        if v > best {
            best = v;
            best_q = q;
        }
        let mut d = 0;
        while d < n {
            idx[d] += 1;
            if idx[d] <= POINTS {
                break;
            }
            idx[d] = 0;
            d += 1;
        }
        if d == n {
            break;
        }
    }

    let mut step = upper.iter().cloned().fold(0.0, f64::max) / POINTS as f64;
    while step > 1e-7 {
        let mut moved = true;
        while moved {
            moved = false;
            for t in 0..n {
                for dir in [-1.0, 1.0] {
                    let mut q = best_q.clone();
                    q[t] = (q[t] + dir * step).clamp(0.0, upper[t]);
                    let v = value(&q);
                    if v > best + 1e-13 {
                        best = v;
                        best_q = q;
                        moved = true;
                    }
                }
            }
            // Diagonal moves help along the inventory ridge h_t = 0.
            for s in 0..n {
                for t in (s + 1)..n {
                    for (ds, dt) in [(1.0, -1.0), (-1.0, 1.0), (1.0, 1.0), (-1.0, -1.0)] {
                        let mut q = best_q.clone();
                        q[s] = (q[s] + ds * step).clamp(0.0, upper[s]);
                        q[t] = (q[t] + dt * step).clamp(0.0, upper[t]);
                        let v = value(&q);
                        if v > best + 1e-13 {
                            best = v;
                            best_q = q;
                            moved = true;
                        }
                    }
                }
            }
        }
        step *= 0.5;
    }
    best
}

/// Brute-force best-response profit: every setup pattern, grid-searched.
pub fn oracle_best_response(
    inst: &MarketInstance,
    fp: &FirmParams,
    opp: &[f64],
    stock: f64,
) -> f64 {
    let n = inst.periods();
    let mut best = f64::NEG_INFINITY;
    for mask in 0u32..(1 << n) {
        let y: Vec<bool> = (0..n).map(|t| mask & (1 << (n - 1 - t)) != 0).collect();
        let v = oracle_pattern_profit(inst.intercepts(), inst.slopes(), fp, &y, opp, stock);
        best = best.max(v);
    }
    best
}

pub struct RandomCase {
    pub inst: MarketInstance,
    pub fp: FirmParams,
    pub opp: Vec<f64>,
}

/// Instance drawn from the ranges of the oracle comparison.
pub fn random_case<R: Rng>(rng: &mut R, max_periods: usize) -> RandomCase {
    let n = rng.random_range(1..=max_periods);
    let a: Vec<f64> = (0..n).map(|_| rng.random_range(5.0..=15.0)).collect();
    let b: Vec<f64> = (0..n).map(|_| rng.random_range(0.1..=2.0)).collect();
    let fp = FirmParams::new(
        rng.random_range(0.0..=20.0),
        rng.random_range(0.0..=2.0),
        rng.random_range(2.0..=30.0),
    )
    .unwrap();
    let opp = if rng.random_bool(0.3) {
        vec![0.0; n]
    } else {
        (0..n)
            .map(|t| rng.random_range(0.0..=0.8 * a[t] / b[t]))
            .collect()
    };
    RandomCase {
        inst: MarketInstance::new(a, b).unwrap(),
        fp,
        opp,
    }
}

pub fn random_firm<R: Rng>(rng: &mut R) -> FirmParams {
    FirmParams::new(
        rng.random_range(0.0..=20.0),
        rng.random_range(0.0..=2.0),
        rng.random_range(2.0..=30.0),
    )
    .unwrap()
}
