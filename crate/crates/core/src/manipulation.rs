//! Expected round-trip costs under transient impact and exhaustive search
//! for price-manipulation strategies.

use std::cmp::Ordering;
use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::impact::Kernel;
use crate::tape::pow_psi;

const MODULE: &str = "manipulation";

/// Default cap on the number of complete round trips a search may enumerate.
pub const DEFAULT_BUDGET: u64 = 10_000_000;
/// Largest `max_len` accepted by the exhaustive search.
pub const MAX_SEARCH_LEN: usize = 12;
const QUANTUM: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Trade {
    /// Time slot, `1..=horizon`.
    pub slot: usize,
    /// Signed volume, nonzero.
    pub q: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Strategy {
    pub trades: Vec<Trade>,
    pub horizon: usize,
}

impl Strategy {
    pub fn new(trades: Vec<Trade>, horizon: usize) -> Result<Self> {
        let s = Self { trades, horizon };
        s.validate()?;
        Ok(s)
    }

    pub fn empty(horizon: usize) -> Self {
        Self {
            trades: Vec::new(),
            horizon,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (i, t) in self.trades.iter().enumerate() {
            if t.slot == 0 || t.slot > self.horizon {
                return Err(Error::input(
                    MODULE,
                    format!("trade {i} at slot {} outside 1..={}", t.slot, self.horizon),
                ));
            }
            if !(t.q.is_finite() && t.q != 0.0) {
                return Err(Error::input(
                    MODULE,
                    format!("trade {i} has volume {}", t.q),
                ));
            }
        }
        if self.trades.windows(2).any(|w| w[1].slot <= w[0].slot) {
            return Err(Error::input(
                MODULE,
                "trade slots must be strictly increasing",
            ));
        }
        Ok(())
    }

    pub fn net_volume(&self) -> f64 {
        self.trades.iter().map(|t| t.q).sum()
    }

    pub fn is_round_trip(&self) -> bool {
        let scale = self.trades.iter().fold(0.0f64, |m, t| m.max(t.q.abs()));
        self.net_volume().abs() <= 1e-12 * scale.max(1.0)
    }

    /// `q → -q` for every trade.
    pub fn mirrored(&self) -> Self {
        Self {
            trades: self
                .trades
                .iter()
                .map(|t| Trade {
                    slot: t.slot,
                    q: -t.q,
                })
                .collect(),
            horizon: self.horizon,
        }
    }

    /// Compact text form, e.g. `1:+1 2:+1 10:-9`.
    pub fn encode(&self) -> String {
        self.trades
            .iter()
            .map(|t| format!("{}:{:+}", t.slot, t.q))
            .collect::<Vec<_>>()
            .join(" ")
    }
}

/// How much of its own immediate impact a trade pays.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OwnImpact {
    /// Execution at the post-impact price `λ G(1) f(q_n)` above the pre-trade price.
    #[default]
    Full,
    /// Execution halfway through the own impact.
    Half,
}

impl OwnImpact {
    fn factor(self) -> f64 {
        match self {
            OwnImpact::Full => 1.0,
            OwnImpact::Half => 0.5,
        }
    }

    pub fn describe(self) -> &'static str {
        match self {
            OwnImpact::Full => "each trade pays its full own impact lambda*G(1)*|q|^psi",
            OwnImpact::Half => "each trade pays half its own impact lambda*G(1)*|q|^psi/2",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostReport {
    pub expected_cost: f64,
    /// Execution price of each trade minus `p_0`.
    pub execution_prices: Vec<f64>,
    pub round_trip: bool,
    pub lambda: f64,
    pub psi: f64,
    pub own_impact: OwnImpact,
    pub convention: String,
}

fn check_model(kernel: &Kernel, lambda: f64, psi: f64) -> Result<()> {
    kernel.validate()?;
    if !(lambda.is_finite() && lambda >= 0.0) {
        return Err(Error::param(
            MODULE,
            format!("lambda = {lambda} must be >= 0"),
        ));
    }
    if !(psi.is_finite() && psi > 0.0 && psi <= 1.0) {
        return Err(Error::param(
            MODULE,
            format!("psi = {psi} must lie in (0, 1]"),
        ));
    }
    Ok(())
}

fn signed_power(q: f64, psi: f64) -> f64 {
    q.signum() * pow_psi(q.abs(), psi)
}

/// Expected cost `Σ q_n (x_n - p_0)` where trade `n` executes at
/// `x_n = p_0 + λ Σ_{m<n} G(t_n - t_m) f(q_m) + c λ G(1) f(q_n)`,
/// `f(q) = sign(q)|q|^ψ`, and `c` is 1 or 1/2 according to `own`.
pub fn strategy_cost(
    strategy: &Strategy,
    kernel: &Kernel,
    lambda: f64,
    psi: f64,
    own: OwnImpact,
) -> Result<CostReport> {
    strategy.validate()?;
    check_model(kernel, lambda, psi)?;
    let f: Vec<f64> = strategy
        .trades
        .iter()
        .map(|t| signed_power(t.q, psi))
        .collect();
    let g1 = kernel.value(1);
    let mut prices = Vec::with_capacity(f.len());
    let mut cost = 0.0;
    for (n, t) in strategy.trades.iter().enumerate() {
        let past: f64 = strategy.trades[..n]
            .iter()
            .zip(&f)
            .map(|(prev, fm)| kernel.value(t.slot - prev.slot) * fm)
            .sum();
        let x = lambda * (past + own.factor() * g1 * f[n]);
        prices.push(x);
        cost += t.q * x;
    }
    Ok(CostReport {
        expected_cost: cost,
        execution_prices: prices,
        round_trip: strategy.is_round_trip(),
        lambda,
        psi,
        own_impact: own,
        convention: own.describe().to_string(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchParams {
    pub lambda: f64,
    pub max_len: usize,
    /// Positive trade sizes; both signs are searched.
    pub volume_grid: Vec<f64>,
    #[serde(default = "default_budget")]
    pub budget: u64,
    #[serde(default)]
    pub own_impact: OwnImpact,
}

fn default_budget() -> u64 {
    DEFAULT_BUDGET
}

impl SearchParams {
    pub fn new(lambda: f64, max_len: usize, volume_grid: Vec<f64>) -> Self {
        Self {
            lambda,
            max_len,
            volume_grid,
            budget: DEFAULT_BUDGET,
            own_impact: OwnImpact::Full,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchResult {
    pub best: Strategy,
    pub min_cost: f64,
    /// Number of distinct round trips evaluated.
    pub candidates: u128,
    pub manipulation_found: bool,
    pub convention: String,
}

/// Number of round trips the search would evaluate: strategies whose first
/// trade is a buy at slot 1 (cost is invariant under time shifts and under
/// `q → -q`), later trades on increasing slots up to `max_len`, net volume 0.
pub fn search_space_size(max_len: usize, volume_grid: &[f64]) -> Result<u128> {
    let keys = grid_keys(volume_grid)?;
    if max_len < 2 || keys.is_empty() {
        return Ok(0);
    }
    let mut memo = HashMap::new();
    let mut total = 0u128;
    for &k in &keys {
        total = total.saturating_add(completions(max_len - 1, k, &keys, &mut memo));
    }
    Ok(total)
}

/// Ways to finish from net position `q` with `r` free slots ahead, counting
/// every prefix that ends flat.
fn completions(r: usize, q: i128, keys: &[i128], memo: &mut HashMap<(usize, i128), u128>) -> u128 {
    if let Some(&v) = memo.get(&(r, q)) {
        return v;
    }
    let mut total = u128::from(q == 0);
    for gap in 1..=r {
        for &k in keys {
            for s in [k, -k] {
                total = total.saturating_add(completions(r - gap, q + s, keys, memo));
            }
        }
    }
    memo.insert((r, q), total);
    total
}

fn grid_keys(grid: &[f64]) -> Result<Vec<i128>> {
    let mut keys = Vec::with_capacity(grid.len());
    for &g in grid {
        if !(g.is_finite() && g > 0.0 && g <= 1e12) {
            return Err(Error::param(
                MODULE,
                format!("grid volume {g} must be in (0, 1e12]"),
            ));
        }
        keys.push((g / QUANTUM).round() as i128);
    }
    let mut sorted = keys.clone();
    sorted.sort_unstable();
    sorted.dedup();
    if sorted.len() != keys.len() {
        return Err(Error::param(MODULE, "volume grid has duplicate sizes"));
    }
    Ok(keys)
}

#[derive(Clone)]
struct Best {
    cost: f64,
    /// `(slot, signed grid value)` pairs.
    trades: Vec<(usize, f64)>,
}

impl Best {
    fn empty() -> Self {
        Best {
            cost: 0.0,
            trades: Vec::new(),
        }
    }

    fn better_than(&self, other: &Best) -> bool {
        match self.cost.total_cmp(&other.cost) {
            Ordering::Less => true,
            Ordering::Greater => false,
            Ordering::Equal => lexicographic(&self.trades, &other.trades) == Ordering::Less,
        }
    }
}

fn lexicographic(a: &[(usize, f64)], b: &[(usize, f64)]) -> Ordering {
    for (x, y) in a.iter().zip(b) {
        let o = x.0.cmp(&y.0).then(x.1.total_cmp(&y.1));
        if o != Ordering::Equal {
            return o;
        }
    }
    a.len().cmp(&b.len())
}

struct Searcher<'a> {
    g: Vec<f64>,
    lambda: f64,
    own: f64,
    max_len: usize,
    /// `(grid value, key, f(value))`, both signs.
    moves: &'a [(f64, i128, f64)],
    max_key: i128,
}

struct Path {
    slots: Vec<usize>,
    q: Vec<f64>,
    f: Vec<f64>,
}

impl Searcher<'_> {
    /// Adds a trade and recurses. Returns the number of round trips seen.
    fn push(
        &self,
        path: &mut Path,
        slot: usize,
        mv: (f64, i128, f64),
        net: i128,
        cost: f64,
        best: &mut Best,
    ) -> u128 {
        let (q, key, fq) = mv;
        let mut past = 0.0;
        for (s, f) in path.slots.iter().zip(&path.f) {
            past += self.g[slot - s] * f;
        }
        let cost = cost + q * self.lambda * (past + self.own * self.g[1] * fq);
        let net = net + key;
        path.slots.push(slot);
        path.q.push(q);
        path.f.push(fq);
        let mut seen = 0;
        if net == 0 {
            seen += 1;
            let cand = Best {
                cost,
                trades: path
                    .slots
                    .iter()
                    .copied()
                    .zip(path.q.iter().copied())
                    .collect(),
            };
            if cand.better_than(best) {
                *best = cand;
            }
        }
        for next in slot + 1..=self.max_len {
            let left = (self.max_len - next) as i128;
            for &m in self.moves {
                // Skip positions that can no longer be closed in the slots left.
                if (net + m.1).abs() > left * self.max_key {
                    continue;
                }
                seen += self.push(path, next, m, net, cost, best);
            }
        }
        path.slots.pop();
        path.q.pop();
        path.f.pop();
        seen
    }
}

/// Exhaustive search for the cheapest round trip. The empty strategy (cost 0)
/// is always admissible, so the result is never positive; ties are broken by
/// the lexicographic order of `(slot, q)` sequences.
pub fn search_round_trips(
    kernel: &Kernel,
    psi: f64,
    params: &SearchParams,
) -> Result<SearchResult> {
    check_model(kernel, params.lambda, psi)?;
    if params.max_len > MAX_SEARCH_LEN {
        return Err(Error::param(
            MODULE,
            format!(
                "max_len = {} above the exhaustive limit {MAX_SEARCH_LEN}",
                params.max_len
            ),
        ));
    }
    let size = search_space_size(params.max_len, &params.volume_grid)?;
    if size > u128::from(params.budget) {
        return Err(Error::Budget {
            size,
            budget: params.budget,
        });
    }
    let convention = params.own_impact.describe().to_string();
    if size == 0 {
        return Ok(SearchResult {
            best: Strategy::empty(params.max_len),
            min_cost: 0.0,
            candidates: 0,
            manipulation_found: false,
            convention,
        });
    }
    let keys = grid_keys(&params.volume_grid)?;
    let mut moves = Vec::with_capacity(2 * keys.len());
    for (&v, &k) in params.volume_grid.iter().zip(&keys) {
        moves.push((v, k, signed_power(v, psi)));
        moves.push((-v, -k, signed_power(-v, psi)));
    }
    let searcher = Searcher {
        g: (0..=params.max_len).map(|l| kernel.value(l)).collect(),
        lambda: params.lambda,
        own: params.own_impact.factor(),
        max_len: params.max_len,
        moves: &moves,
        max_key: keys.iter().copied().max().unwrap_or(0),
    };
    // Independent subtrees: opening buy at slot 1, then the second trade.
    let mut roots = Vec::new();
    for &first in moves.iter().filter(|m| m.1 > 0) {
        for second_slot in 2..=params.max_len {
            for &second in &moves {
                roots.push((first, second_slot, second));
            }
        }
    }
    let results: Vec<(Best, u128)> = roots
        .par_iter()
        .map(|&(first, slot2, second)| {
            let mut best = Best::empty();
            let mut path = Path {
                slots: vec![1],
                q: vec![first.0],
                f: vec![first.2],
            };
            let own_cost = first.0 * searcher.lambda * searcher.own * searcher.g[1] * first.2;
            let left = (params.max_len - slot2) as i128;
            let seen = if (first.1 + second.1).abs() > left * searcher.max_key {
                0
            } else {
                searcher.push(&mut path, slot2, second, first.1, own_cost, &mut best)
            };
            (best, seen)
        })
        .collect();
    let mut best = Best::empty();
    let mut seen = 0u128;
    for (b, s) in results {
        seen += s;
        if b.better_than(&best) {
            best = b;
        }
    }
    debug_assert_eq!(seen, size);
    let strategy = Strategy::new(
        best.trades
            .iter()
            .map(|&(slot, q)| Trade { slot, q })
            .collect(),
        params.max_len,
    )?;
    Ok(SearchResult {
        best: strategy,
        min_cost: best.cost,
        candidates: seen,
        manipulation_found: best.cost < 0.0,
        convention,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrontierCell {
    pub beta: f64,
    pub psi: f64,
    pub min_cost: f64,
    pub argmin: Strategy,
    pub candidates: u128,
}

/// Runs [`search_round_trips`] for every `(β, ψ)` with kernel
/// `G(ℓ) = ℓ^(-β)`. Cells are ordered by β, then ψ, as given.
pub fn gatheral_frontier(
    betas: &[f64],
    psis: &[f64],
    params: &SearchParams,
) -> Result<Vec<FrontierCell>> {
    let cells: Vec<(f64, f64)> = betas
        .iter()
        .flat_map(|&b| psis.iter().map(move |&p| (b, p)))
        .collect();
    cells
        .par_iter()
        .map(|&(beta, psi)| {
            let kernel = Kernel::power_law(beta, 1.0, 0.0)?;
            let r = search_round_trips(&kernel, psi, params)?;
            Ok(FrontierCell {
                beta,
                psi,
                min_cost: r.min_cost,
                argmin: r.best,
                candidates: r.candidates,
            })
        })
        .collect()
}
