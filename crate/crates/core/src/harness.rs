//! Property suites. Each trial draws fresh states, evaluates both sides of
//! every inequality or identity under test, and records the signed slack
//! with a verdict.
//!
//! Inequalities are stored as `lhs ≥ rhs` with `slack = lhs − rhs`;
//! identities store `slack = −|lhs − rhs|`.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::discgame;
use crate::error::{Error, Result};
use crate::measures::{self, DiscordOptions, Flag, MeasureResult, SmoothParams};
use crate::qmat::{self, DensityMatrix, DephasingPattern, MultipartiteOperator};
use crate::sampler::{self, SeededRng};

/// Environment variable holding the worker count (0 or unset: all cores).
pub const THREADS_ENV: &str = "COHERENCE_LAB_THREADS";
pub const DEFAULT_EPS: [f64; 4] = [0.0, 0.01, 0.05, 0.1];
pub const MAX_EPS: f64 = 0.25;
/// Branches with smaller probability are dropped from ensembles.
pub const BRANCH_CUTOFF: f64 = 1e-12;
/// Random instruments per S10 trial.
const S10_RANDOM_INSTRUMENTS: usize = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Suite {
    S1,
    S2,
    S3,
    S4,
    S5,
    S6,
    S7,
    S8,
    S9,
    S10,
    S11,
    S12,
}

impl Suite {
    pub const ALL: [Suite; 12] = [
        Suite::S1,
        Suite::S2,
        Suite::S3,
        Suite::S4,
        Suite::S5,
        Suite::S6,
        Suite::S7,
        Suite::S8,
        Suite::S9,
        Suite::S10,
        Suite::S11,
        Suite::S12,
    ];

    pub fn number(self) -> u64 {
        Suite::ALL.iter().position(|&s| s == self).unwrap() as u64 + 1
    }

    pub fn description(self) -> &'static str {
        match self {
            Suite::S1 => "ordering C_min ≤ C_r ≤ C_max and the D_min ≤ D ≤ D_max sandwich",
            Suite::S2 => "bipartite distribution of C_r and its discord form",
            Suite::S3 => "smooth C_max(AB) ≥ C_max(A|B) + C_min(B)",
            Suite::S4 => "smooth C_max(A|B) ≥ E_max(A:B) + C_min(A)",
            Suite::S5 => "smooth E_max(A:B:C) decompositions",
            Suite::S6 => "monogamy of C_r(·|B)",
            Suite::S7 => "chain rule for C_r and its smooth versions",
            Suite::S8 => "conditional mutual information bounds",
            Suite::S9 => "gentle operator lemma",
            Suite::S10 => "subchannel discrimination ratio",
            Suite::S11 => "properties of C_max(A|B)",
            Suite::S12 => "single-shot total coherence vs entanglement and local coherence",
        }
    }

    fn min_factors(self) -> usize {
        match self {
            Suite::S9 => 1,
            Suite::S5 | Suite::S6 | Suite::S7 | Suite::S8 | Suite::S12 => 3,
            _ => 2,
        }
    }

    /// Dims classes and the trial count for each when none are given.
    fn default_classes(self, trials: usize) -> Vec<(Vec<usize>, usize)> {
        match self {
            Suite::S5 | Suite::S7 | Suite::S8 | Suite::S12 => vec![(vec![2, 2, 2], trials)],
            Suite::S6 => vec![(vec![2, 2, 2], trials), (vec![2, 2, 2, 2], trials.div_ceil(4))],
            _ => vec![(vec![2, 2], trials), (vec![2, 3], trials)],
        }
    }
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "S{}", self.number())
    }
}

impl FromStr for Suite {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let t = s.trim();
        t.strip_prefix(['S', 's'])
            .and_then(|n| n.parse::<usize>().ok())
            .and_then(|n| n.checked_sub(1))
            .and_then(|i| Suite::ALL.get(i).copied())
            .ok_or_else(|| Error::InvalidArgument(format!("unknown suite '{t}'")))
    }
}

/// `all` or a comma list such as `S1,S4`.
pub fn parse_suites(s: &str) -> Result<Vec<Suite>> {
    if s.trim().eq_ignore_ascii_case("all") {
        return Ok(Suite::ALL.to_vec());
    }
    let mut v = s.split(',').filter(|p| !p.trim().is_empty()).map(Suite::from_str).collect::<Result<Vec<_>>>()?;
    v.sort();
    v.dedup();
    Ok(v)
}

/// `2x2x2` style dims.
pub fn parse_dims(s: &str) -> Result<Vec<usize>> {
    let dims = s
        .split(['x', 'X'])
        .map(|p| p.trim().parse::<usize>().map_err(|_| Error::InvalidArgument(format!("bad dims '{s}'"))))
        .collect::<Result<Vec<_>>>()?;
    if dims.is_empty() || dims.contains(&0) {
        return Err(Error::InvalidArgument(format!("bad dims '{s}'")));
    }
    Ok(dims)
}

pub fn parse_eps_list(s: &str) -> Result<Vec<f64>> {
    s.split(',')
        .filter(|p| !p.trim().is_empty())
        .map(|p| p.trim().parse::<f64>().map_err(|_| Error::InvalidArgument(format!("bad eps '{p}'"))))
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    pub identity_tol: f64,
    pub ineq_tol: f64,
    pub sdp_cross_tol: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self { identity_tol: 1e-8, ineq_tol: 1e-7, sdp_cross_tol: 1e-6 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SuiteConfig {
    pub suites: Vec<Suite>,
    /// `None` runs every suite on its default dims classes.
    pub dims: Option<Vec<usize>>,
    /// Trials per dims class.
    pub trials: usize,
    pub seed: u64,
    pub eps: Vec<f64>,
    pub tolerances: Tolerances,
    /// Worker count; `None` defers to [`THREADS_ENV`]. Results never depend on it.
    #[serde(skip)]
    pub parallelism: Option<usize>,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        Self {
            suites: Suite::ALL.to_vec(),
            dims: None,
            trials: 200,
            seed: 42,
            eps: DEFAULT_EPS.to_vec(),
            tolerances: Tolerances::default(),
            parallelism: None,
        }
    }
}

impl SuiteConfig {
    pub fn new(suites: Vec<Suite>, trials: usize, seed: u64) -> Self {
        Self { suites, trials, seed, ..Self::default() }
    }

    pub fn with_dims(mut self, dims: Vec<usize>) -> Self {
        self.dims = Some(dims);
        self
    }

    pub fn with_eps(mut self, eps: Vec<f64>) -> Self {
        self.eps = eps;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(&e) = self.eps.iter().find(|e| !(0.0..=MAX_EPS).contains(*e)) {
            return Err(Error::InvalidArgument(format!("eps {e} outside [0, {MAX_EPS}]")));
        }
        if let Some(dims) = &self.dims {
            if dims.is_empty() || dims.contains(&0) {
                return Err(Error::InvalidArgument(format!("bad dims {dims:?}")));
            }
            for s in &self.suites {
                if dims.len() < s.min_factors() {
                    return Err(Error::InvalidArgument(format!("{s} needs at least {} factors, got {dims:?}", s.min_factors())));
                }
            }
        }
        let t = &self.tolerances;
        if [t.identity_tol, t.ineq_tol, t.sdp_cross_tol].iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
            return Err(Error::InvalidArgument("tolerances must be finite and nonnegative".into()));
        }
        Ok(())
    }

    fn sorted_eps(&self) -> Vec<f64> {
        let mut e = self.eps.clone();
        e.sort_by(f64::total_cmp);
        e.dedup();
        e
    }

    fn classes(&self, suite: Suite) -> Vec<(Vec<usize>, usize)> {
        match &self.dims {
            Some(d) => vec![(d.clone(), self.trials)],
            None => suite.default_classes(self.trials),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Verified,
    Inconclusive,
    Falsified,
    SolverFailure,
}

impl Verdict {
    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::Verified => "verified",
            Verdict::Inconclusive => "inconclusive",
            Verdict::Falsified => "falsified",
            Verdict::SolverFailure => "solver_failure",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ItemKind {
    Inequality,
    Identity,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ItemRecord {
    pub item: String,
    pub kind: ItemKind,
    pub eps: Option<f64>,
    pub lhs: Option<f64>,
    pub rhs: Option<f64>,
    pub slack: Option<f64>,
    pub tol: f64,
    pub flags: BTreeSet<Flag>,
    pub verdict: Verdict,
    /// The right-hand side is ≤ 0, so the inequality carries no content.
    pub vacuous: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub suite: Suite,
    pub dims: Vec<usize>,
    pub trial: usize,
    pub seed: u64,
    /// Generator stream of this trial; `(seed, stream)` reproduces its draws.
    pub stream: u64,
    pub rank: usize,
    pub values: BTreeMap<String, f64>,
    pub items: Vec<ItemRecord>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub errors: Vec<String>,
}

impl TrialRecord {
    pub fn item(&self, name: &str) -> Option<&ItemRecord> {
        self.items.iter().find(|i| i.item == name)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counts {
    pub items: usize,
    pub verified: usize,
    pub inconclusive: usize,
    pub falsified: usize,
    pub solver_failure: usize,
    pub vacuous: usize,
}

impl Counts {
    fn add(&mut self, it: &ItemRecord) {
        self.items += 1;
        match it.verdict {
            Verdict::Verified => self.verified += 1,
            Verdict::Inconclusive => self.inconclusive += 1,
            Verdict::Falsified => self.falsified += 1,
            Verdict::SolverFailure => self.solver_failure += 1,
        }
        if it.vacuous {
            self.vacuous += 1;
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Environment {
    pub crate_version: String,
    pub os: String,
    pub arch: String,
}

impl Environment {
    fn current() -> Self {
        Self {
            crate_version: env!("CARGO_PKG_VERSION").to_string(),
            os: std::env::consts::OS.to_string(),
            arch: std::env::consts::ARCH.to_string(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub config: SuiteConfig,
    pub environment: Environment,
    pub totals: Counts,
    pub summary: BTreeMap<Suite, Counts>,
    pub trials: Vec<TrialRecord>,
}

impl SuiteReport {
    pub fn items(&self) -> impl Iterator<Item = (&TrialRecord, &ItemRecord)> {
        self.trials.iter().flat_map(|t| t.items.iter().map(move |i| (t, i)))
    }

    pub fn solver_failure_rate(&self) -> f64 {
        if self.totals.items == 0 {
            0.0
        } else {
            self.totals.solver_failure as f64 / self.totals.items as f64
        }
    }

    /// 0 all verified or inconclusive, 1 any falsified, 3 solver failure
    /// rate above 1%.
    pub fn exit_code(&self) -> i32 {
        if self.totals.falsified > 0 {
            1
        } else if self.solver_failure_rate() > 0.01 {
            3
        } else {
            0
        }
    }
}

// ---------------------------------------------------------------------------
// Trial bookkeeping
// ---------------------------------------------------------------------------

/// A computed quantity with its flags and the direction in which it may
/// deviate from the exact value.
#[derive(Clone, Debug, Default)]
struct Val {
    v: f64,
    flags: BTreeSet<Flag>,
    /// May lie below the exact value (outer relaxations).
    low: bool,
    /// May lie above the exact value (local searches of a minimum).
    high: bool,
}

impl Val {
    fn exact(v: f64) -> Self {
        Self { v, ..Self::default() }
    }

    fn scaled(&self, c: f64) -> Self {
        let (low, high) = if c >= 0.0 { (self.low, self.high) } else { (self.high, self.low) };
        Self { v: c * self.v, flags: self.flags.clone(), low, high }
    }
}

type Q = Option<Val>;

/// `Σ c_k v_k`, failing if any term failed.
fn lin(terms: &[(f64, &Q)]) -> Q {
    let mut out = Val::exact(0.0);
    for (c, t) in terms {
        let t = t.as_ref()?.scaled(*c);
        out.v += t.v;
        out.flags.extend(t.flags);
        out.low |= t.low;
        out.high |= t.high;
    }
    Some(out)
}

fn sum(terms: &[&Q]) -> Q {
    lin(&terms.iter().map(|t| (1.0, *t)).collect::<Vec<_>>())
}

fn max_of(terms: &[&Q]) -> Q {
    let mut best: Option<Val> = None;
    let mut flags = BTreeSet::new();
    let (mut low, mut high) = (false, false);
    for t in terms {
        let t = t.as_ref()?;
        flags.extend(t.flags.iter().copied());
        low |= t.low;
        high |= t.high;
        if best.as_ref().is_none_or(|b| t.v > b.v) {
            best = Some(t.clone());
        }
    }
    best.map(|b| Val { v: b.v, flags, low, high })
}

struct Ctx<'a> {
    tol: &'a Tolerances,
    values: BTreeMap<String, f64>,
    items: Vec<ItemRecord>,
    errors: Vec<String>,
}

impl<'a> Ctx<'a> {
    fn new(tol: &'a Tolerances) -> Self {
        Self { tol, values: BTreeMap::new(), items: Vec::new(), errors: Vec::new() }
    }

    fn measure(&mut self, key: &str, r: Result<MeasureResult>) -> Q {
        match r {
            Ok(m) => {
                self.values.insert(key.to_string(), m.value);
                let relaxed = m.has_flag(Flag::PptRelaxed);
                let heuristic = m.has_flag(Flag::Heuristic);
                Some(Val { v: m.value, flags: m.flags, low: relaxed, high: heuristic })
            }
            Err(e) => {
                self.errors.push(format!("{key}: {e}"));
                None
            }
        }
    }

    fn scalar(&mut self, key: &str, r: Result<f64>) -> Q {
        match r {
            Ok(v) => {
                self.values.insert(key.to_string(), v);
                Some(Val::exact(v))
            }
            Err(e) => {
                self.errors.push(format!("{key}: {e}"));
                None
            }
        }
    }

    fn push(&mut self, item: &str, kind: ItemKind, eps: Option<f64>, lhs: &Q, rhs: &Q, tol: f64) {
        let mut flags = BTreeSet::new();
        for v in [lhs, rhs].into_iter().flatten() {
            flags.extend(v.flags.iter().copied());
        }
        let (slack, verdict) = match (lhs, rhs) {
            (Some(l), Some(r)) => {
                let (slack, explained) = match kind {
                    ItemKind::Inequality => (l.v - r.v, l.low || r.high),
                    ItemKind::Identity => (-(l.v - r.v).abs(), l.low || l.high || r.low || r.high),
                };
                let verdict = if slack >= -tol {
                    Verdict::Verified
                } else if explained {
                    Verdict::Inconclusive
                } else {
                    Verdict::Falsified
                };
                (Some(slack), verdict)
            }
            _ => (None, Verdict::SolverFailure),
        };
        let vacuous = kind == ItemKind::Inequality && rhs.as_ref().is_some_and(|r| r.v <= 0.0);
        self.items.push(ItemRecord {
            item: item.to_string(),
            kind,
            eps,
            lhs: lhs.as_ref().map(|v| v.v),
            rhs: rhs.as_ref().map(|v| v.v),
            slack,
            tol,
            flags,
            verdict,
            vacuous,
            note: None,
        });
    }

    /// `lhs ≥ rhs` within `ineq_tol`.
    fn ineq(&mut self, item: &str, eps: Option<f64>, lhs: &Q, rhs: &Q) {
        let tol = self.tol.ineq_tol;
        self.push(item, ItemKind::Inequality, eps, lhs, rhs, tol);
    }

    fn identity(&mut self, item: &str, eps: Option<f64>, lhs: &Q, rhs: &Q, tol: f64) {
        self.push(item, ItemKind::Identity, eps, lhs, rhs, tol);
    }

    /// The `ε′` ball reaches the zero operator, so the smoothed right-hand
    /// side is −∞ and the inequality holds without content.
    fn vacuous_ball(&mut self, item: &str, eps: f64, lhs: &Q) {
        self.items.push(ItemRecord {
            item: item.to_string(),
            kind: ItemKind::Inequality,
            eps: Some(eps),
            lhs: lhs.as_ref().map(|v| v.v),
            rhs: None,
            slack: None,
            tol: self.tol.ineq_tol,
            flags: BTreeSet::new(),
            verdict: Verdict::Verified,
            vacuous: true,
            note: Some("eps' ≥ 1: the smoothing ball contains 0".into()),
        });
    }
}

fn key(name: &str, eps: f64) -> String {
    format!("{name}@{eps}")
}

// ---------------------------------------------------------------------------
// Identities
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IdentityCheck {
    pub name: String,
    pub lhs: f64,
    pub rhs: f64,
    pub deviation: f64,
}

/// Evaluates both sides of a named identity independently.
///
/// - `basis_identity`: `C_r(A|B) = C_r(A) + S(ρ_A) + Σ p_i S(ρ_{B|i}) − S(ρ_AB)`,
///   `A` the first factor and `B` the rest.
/// - `cmi_identity`: `C_r(AB|C) − C_r(A|C) − C_r(B|C) = I(A:B|C)_ρ − I(A:B|C)_{Δ_AΔ_B ρ}`,
///   `C` all factors after the second.
/// - `entropy_chain`: `S(AB|C) = S(A|BC) + S(B|C)`.
pub fn check_identity(name: &str, rho: &DensityMatrix) -> Result<IdentityCheck> {
    let (lhs, rhs) = match name {
        "basis_identity" => {
            let rho = discgame::as_bipartite(rho)?;
            let lhs = measures::c_r(&rho, &DephasingPattern::single(0))?.value;
            let rhs = measures::c_r_marginal(&rho, &[0], &[0])? + measures::basis_discord(&rho, 0)?;
            (lhs, rhs)
        }
        "cmi_identity" => {
            let rho = tripartite(rho)?;
            let lhs = measures::c_r(&rho, &DephasingPattern::new(&[0, 1], 3)?)?.value
                - measures::c_r_marginal(&rho, &[0, 2], &[0])?
                - measures::c_r_marginal(&rho, &[1, 2], &[1])?;
            let dephased = rho.dephased(&DephasingPattern::new(&[0, 1], 3)?)?;
            let rhs = measures::conditional_mutual_information(&rho, &[0], &[1], &[2])?
                - measures::conditional_mutual_information(&dephased, &[0], &[1], &[2])?;
            (lhs, rhs)
        }
        "entropy_chain" => {
            let rho = tripartite(rho)?;
            let s_abc = measures::von_neumann_entropy(&rho);
            let s_bc = measures::marginal_entropy(&rho, &[1, 2])?;
            let s_c = measures::marginal_entropy(&rho, &[2])?;
            (s_abc - s_c, (s_abc - s_bc) + (s_bc - s_c))
        }
        other => return Err(Error::InvalidArgument(format!("unknown identity '{other}'"))),
    };
    Ok(IdentityCheck { name: name.to_string(), lhs, rhs, deviation: (lhs - rhs).abs() })
}

/// Merges every factor after the second into `C`.
fn tripartite(rho: &DensityMatrix) -> Result<DensityMatrix> {
    let d = rho.dims();
    if d.len() < 3 {
        return Err(Error::InvalidArgument("state must have at least three factors".into()));
    }
    rho.with_dims(vec![d[0], d[1], qmat::product(&d[2..])])
}

// ---------------------------------------------------------------------------
// Suites
// ---------------------------------------------------------------------------

fn zero() -> SmoothParams {
    SmoothParams::zero()
}

fn s1(ctx: &mut Ctx, rho: &DensityMatrix, rng: &mut SeededRng) -> Result<()> {
    let rho = discgame::as_bipartite(rho)?;
    let a = DephasingPattern::single(0);
    let cmin = ctx.measure("c_min(A|B)", measures::c_min(&rho, &a, zero()));
    let cr = ctx.measure("c_r(A|B)", measures::c_r(&rho, &a));
    let cmax = ctx.measure("c_max(A|B)", measures::c_max(&rho, &a, zero()));
    ctx.ineq("ordering_r_ge_min", None, &cr, &cmin);
    ctx.ineq("ordering_max_ge_r", None, &cmax, &cr);

    let dephased = rho.dephased(&a)?;
    let random = sampler::ginibre_state(rho.dims(), rho.side(), rng)?;
    for (label, sigma) in [("dephased", &dephased), ("random", &random)] {
        let div = |r: Result<measures::Divergence>| {
            r.and_then(|d| d.is_finite().then(|| d.value()).ok_or_else(|| Error::InvalidArgument("unexpected infinite divergence".into())))
        };
        let dmin = ctx.scalar(&format!("d_min({label})"), div(measures::d_min(&rho, sigma)));
        let rel = ctx.scalar(&format!("d({label})"), div(measures::relative_entropy(&rho, sigma)));
        let dmax = ctx.scalar(&format!("d_max({label})"), div(measures::d_max(&rho, sigma)));
        ctx.ineq(&format!("sandwich_{label}_rel_ge_min"), None, &rel, &dmin);
        ctx.ineq(&format!("sandwich_{label}_max_ge_rel"), None, &dmax, &rel);
    }
    Ok(())
}

fn s2(ctx: &mut Ctx, rho: &DensityMatrix, rng: &mut SeededRng) -> Result<()> {
    let rho = discgame::as_bipartite(rho)?;
    let total = ctx.measure("c_r(AB)", measures::c_r(&rho, &DephasingPattern::full(2)));
    let cond = ctx.measure("c_r(A|B)", measures::c_r(&rho, &DephasingPattern::single(0)));
    let c_a = ctx.scalar("c_r(A)", measures::c_r_marginal(&rho, &[0], &[0]));
    let c_b = ctx.scalar("c_r(B)", measures::c_r_marginal(&rho, &[1], &[1]));
    let bd_ab = ctx.scalar("basis_discord(A→B)", measures::basis_discord(&rho, 0));
    let bd_ba = ctx.scalar("basis_discord(B→A)", measures::basis_discord(&rho, 1));
    let opts = |seed| DiscordOptions { starts: 2, seed, ..DiscordOptions::default() };
    let heuristic = |r: Result<MeasureResult>| {
        r.map(|mut m| {
            m.flags.insert(Flag::Heuristic);
            m
        })
    };
    let d_ab = heuristic(measures::discord(&rho, 0, &opts(rng.next_u64())));
    let d_ba = heuristic(measures::discord(&rho, 1, &opts(rng.next_u64())));
    let d_ab = ctx.measure("discord(A→B)", d_ab);
    let d_ba = ctx.measure("discord(B→A)", d_ba);

    ctx.ineq("distribution_bipartite", None, &total, &sum(&[&cond, &c_b]));
    ctx.ineq("distribution_basis_discord", None, &total, &sum(&[&c_a, &c_b, &max_of(&[&bd_ab, &bd_ba])]));
    ctx.ineq("distribution_discord", None, &total, &sum(&[&c_a, &c_b, &max_of(&[&d_ab, &d_ba])]));
    ctx.ineq("basis_discord_ge_discord", None, &bd_ab, &d_ab);
    let tol = ctx.tol.identity_tol;
    let id = check_identity("basis_identity", &rho);
    let (l, r) = split_identity(ctx, id);
    ctx.identity("basis_identity", None, &l, &r, tol);
    Ok(())
}

fn split_identity(ctx: &mut Ctx, r: Result<IdentityCheck>) -> (Q, Q) {
    match r {
        Ok(c) => {
            ctx.values.insert(format!("{}.lhs", c.name), c.lhs);
            ctx.values.insert(format!("{}.rhs", c.name), c.rhs);
            (Some(Val::exact(c.lhs)), Some(Val::exact(c.rhs)))
        }
        Err(e) => {
            ctx.errors.push(format!("identity: {e}"));
            (None, None)
        }
    }
}

/// Adds the across-ε monotonicity items for one smooth quantity.
fn monotone_in_eps(ctx: &mut Ctx, item: &str, series: &[(f64, Q)], nonincreasing: bool) {
    for w in series.windows(2) {
        let (small, large) = (&w[0].1, &w[1].1);
        let (lhs, rhs) = if nonincreasing { (small, large) } else { (large, small) };
        ctx.ineq(item, Some(w[1].0), lhs, rhs);
    }
}

fn s3(ctx: &mut Ctx, rho: &DensityMatrix, eps: &[f64]) -> Result<()> {
    let rho = discgame::as_bipartite(rho)?;
    let rho_b = rho.reduced(&[1])?;
    let (full, a, one) = (DephasingPattern::full(2), DephasingPattern::single(0), DephasingPattern::full(1));
    let mut max_series = Vec::new();
    let mut min_series = Vec::new();
    for &e in eps {
        let s = SmoothParams::new(e)?;
        let lhs = ctx.measure(&key("c_max(AB)", e), measures::c_max(&rho, &full, s));
        let cmin_b = ctx.measure(&key("c_min(B)", e), measures::c_min(&rho_b, &one, s));
        match s.prime() {
            Ok(sp) => {
                let cmax_ab = ctx.measure(&key("c_max(A|B)", sp.eps()), measures::c_max(&rho, &a, sp));
                ctx.ineq("smooth_total_ge_conditional_plus_local", Some(e), &lhs, &sum(&[&cmax_ab, &cmin_b]));
            }
            Err(_) => ctx.vacuous_ball("smooth_total_ge_conditional_plus_local", e, &lhs),
        }
        max_series.push((e, lhs));
        min_series.push((e, cmin_b));
    }
    monotone_in_eps(ctx, "c_max_nonincreasing_in_eps", &max_series, true);
    monotone_in_eps(ctx, "c_min_nondecreasing_in_eps", &min_series, false);
    Ok(())
}

fn s4(ctx: &mut Ctx, rho: &DensityMatrix, eps: &[f64]) -> Result<()> {
    let rho = discgame::as_bipartite(rho)?;
    let rho_a = rho.reduced(&[0])?;
    let cut = [vec![0], vec![1]];
    for &e in eps {
        let s = SmoothParams::new(e)?;
        let lhs = ctx.measure(&key("c_max(A|B)", e), measures::c_max(&rho, &DephasingPattern::single(0), s));
        let cmin_a = ctx.measure(&key("c_min(A)", e), measures::c_min(&rho_a, &DephasingPattern::full(1), s));
        match s.prime() {
            Ok(sp) => {
                let em = ctx.measure(&key("e_max(A:B)", sp.eps()), measures::e_max(&rho, &cut, sp));
                ctx.ineq("smooth_conditional_ge_entanglement_plus_local", Some(e), &lhs, &sum(&[&em, &cmin_a]));
            }
            Err(_) => ctx.vacuous_ball("smooth_conditional_ge_entanglement_plus_local", e, &lhs),
        }
    }
    Ok(())
}

fn s5(ctx: &mut Ctx, rho: &DensityMatrix, eps: &[f64]) -> Result<()> {
    let rho = tripartite(rho)?;
    let rho_bc = rho.reduced(&[1, 2])?;
    let rho_ab = rho.reduced(&[0, 1])?;
    let pair = [vec![0], vec![1]];
    for &e in eps {
        let s = SmoothParams::new(e)?;
        let lhs = ctx.measure(&key("e_max(A:B:C)", e), measures::e_max(&rho, &[vec![0], vec![1], vec![2]], s));
        let emin_bc = ctx.measure(&key("e_min(B:C)", e), measures::e_min(&rho_bc, &pair, s));
        match s.prime() {
            Ok(sp) => {
                let em_a_bc = ctx.measure(&key("e_max(A:BC)", sp.eps()), measures::e_max(&rho, &[vec![0], vec![1, 2]], sp));
                let em_ab = ctx.measure(&key("e_max(A:B)", sp.eps()), measures::e_max(&rho_ab, &pair, sp));
                ctx.ineq("entanglement_split_a_bc", Some(e), &lhs, &sum(&[&em_a_bc, &emin_bc]));
                ctx.ineq("entanglement_split_a_b", Some(e), &lhs, &sum(&[&em_ab, &emin_bc]));
            }
            Err(_) => {
                ctx.vacuous_ball("entanglement_split_a_bc", e, &lhs);
                ctx.vacuous_ball("entanglement_split_a_b", e, &lhs);
            }
        }
    }
    Ok(())
}

fn s6(ctx: &mut Ctx, rho: &DensityMatrix) -> Result<()> {
    let n = rho.factors();
    let parts: Vec<usize> = (0..n - 1).collect();
    let all: Vec<usize> = (0..n).collect();
    let joint = ctx.scalar("c_r(A_1..A_N|B)", measures::c_r_marginal(rho, &all, &parts));
    let singles: Vec<Q> = parts.iter().map(|&k| ctx.scalar(&format!("c_r(A_{}|B)", k + 1), measures::c_r_marginal(rho, &[k, n - 1], &[k]))).collect();
    ctx.ineq("monogamy", None, &joint, &sum(&singles.iter().collect::<Vec<_>>()));
    let score = ctx.scalar("monogamy_score", measures::monogamy_score(rho, &parts, &[n - 1]));
    ctx.ineq("monogamy_score_nonpositive", None, &Some(Val::exact(0.0)), &score);
    Ok(())
}

fn s7(ctx: &mut Ctx, rho: &DensityMatrix, eps: &[f64]) -> Result<()> {
    let rho = tripartite(rho)?;
    let rho_bc = rho.reduced(&[1, 2])?;
    let rho_ac = rho.reduced(&[0, 2])?;
    let ab = DephasingPattern::new(&[0, 1], 3)?;
    let a = DephasingPattern::single(0);
    let cr_ab_c = ctx.measure("c_r(AB|C)", measures::c_r(&rho, &ab));
    let cr_a_bc = ctx.measure("c_r(A|BC)", measures::c_r(&rho, &a));
    let cr_b_c = ctx.measure("c_r(B|C)", measures::c_r(&rho_bc, &a));
    ctx.ineq("chain_rule", None, &cr_ab_c, &sum(&[&cr_a_bc, &cr_b_c]));
    for &e in eps {
        let s = SmoothParams::new(e)?;
        let lhs = ctx.measure(&key("c_max(AB|C)", e), measures::c_max(&rho, &ab, s));
        let cmin_bc = ctx.measure(&key("c_min(B|C)", e), measures::c_min(&rho_bc, &a, s));
        match s.prime() {
            Ok(sp) => {
                let c1 = ctx.measure(&key("c_max(A|BC)", sp.eps()), measures::c_max(&rho, &a, sp));
                let c2 = ctx.measure(&key("c_max(A|C)", sp.eps()), measures::c_max(&rho_ac, &a, sp));
                ctx.ineq("smooth_chain_a_bc", Some(e), &lhs, &sum(&[&c1, &cmin_bc]));
                ctx.ineq("smooth_chain_a_c", Some(e), &lhs, &sum(&[&c2, &cmin_bc]));
            }
            Err(_) => {
                ctx.vacuous_ball("smooth_chain_a_bc", e, &lhs);
                ctx.vacuous_ball("smooth_chain_a_c", e, &lhs);
            }
        }
    }
    Ok(())
}

fn s8(ctx: &mut Ctx, rho: &DensityMatrix) -> Result<()> {
    let rho = tripartite(rho)?;
    let cr_ab_c = ctx.measure("c_r(AB|C)", measures::c_r(&rho, &DephasingPattern::new(&[0, 1], 3)?));
    let cr_a_bc = ctx.measure("c_r(A|BC)", measures::c_r(&rho, &DephasingPattern::single(0)));
    let cr_a_c = ctx.scalar("c_r(A|C)", measures::c_r_marginal(&rho, &[0, 2], &[0]));
    let cr_b_c = ctx.scalar("c_r(B|C)", measures::c_r_marginal(&rho, &[1, 2], &[1]));
    let cmi = ctx.scalar("I(A:B|C)", measures::conditional_mutual_information(&rho, &[0], &[1], &[2]));
    ctx.ineq("joint_le_sum_plus_cmi", None, &sum(&[&cr_a_c, &cr_b_c, &cmi]), &cr_ab_c);
    ctx.ineq("non_lockability", None, &cmi, &lin(&[(1.0, &cr_a_bc), (-1.0, &cr_a_c)]));
    ctx.ineq("cmi_nonnegative", None, &cmi, &Some(Val::exact(0.0)));
    let tol = ctx.tol.identity_tol;
    for name in ["cmi_identity", "entropy_chain"] {
        let id = check_identity(name, &rho);
        let (l, r) = split_identity(ctx, id);
        ctx.identity(name, None, &l, &r, tol);
    }
    Ok(())
}

fn s9(ctx: &mut Ctx, rho: &DensityMatrix, rng: &mut SeededRng) -> Result<()> {
    let n = rho.side();
    let t = rng.uniform();
    let m = qmat::identity(n).scale(1.0 - t) + sampler::random_effect(n, rng).scale(t);
    let eps = (1.0 - qmat::inner_re(&m, rho.matrix())).max(0.0);
    let root = qmat::psd_sqrt(&m);
    let disturbed = &root * rho.matrix() * &root;
    let dist = qmat::singular_values(&(rho.matrix() - disturbed)).sum();
    ctx.values.insert("eps".into(), eps);
    ctx.values.insert("disturbance".into(), dist);
    ctx.ineq("gentle_operator", Some(eps), &Some(Val::exact(2.0 * eps.sqrt())), &Some(Val::exact(dist)));
    Ok(())
}

fn s10(ctx: &mut Ctx, rho: &DensityMatrix, rng: &mut SeededRng) -> Result<()> {
    let rho = discgame::as_bipartite(rho)?;
    let g = match discgame::verify_theorem1(&rho, S10_RANDOM_INSTRUMENTS, rng.next_u64()) {
        Ok(g) => g,
        Err(e) => {
            ctx.errors.push(format!("verify_theorem1: {e}"));
            let none: Q = None;
            for item in ["ratio_equals_bound", "iq_baseline", "dual_povm_optimal"] {
                ctx.identity(item, None, &none, &none, 0.0);
            }
            return Ok(());
        }
    };
    for (k, v) in [
        ("c_max(A|B)", g.c_max),
        ("bound", g.bound),
        ("p_succ", g.p_succ),
        ("p_succ_iq", g.p_succ_iq),
        ("ratio", g.ratio),
        ("p_succ_optimal", g.p_succ_optimal),
    ] {
        ctx.values.insert(k.into(), v);
    }
    let (tol_id, tol_sdp) = (ctx.tol.identity_tol, ctx.tol.sdp_cross_tol);
    let ex = |v: f64| Some(Val::exact(v));
    ctx.identity("ratio_equals_bound", None, &ex(g.ratio), &ex(g.bound), tol_sdp);
    ctx.identity("iq_baseline", None, &ex(g.p_succ_iq), &ex(1.0 / g.d_a as f64), tol_id);
    ctx.identity("dual_povm_optimal", None, &ex(g.p_succ), &ex(g.p_succ_optimal), tol_sdp);
    for (k, t) in g.random_instruments.iter().enumerate() {
        ctx.values.insert(format!("random_ratio[{k}]"), t.ratio);
        let ratio = Some(Val { v: t.ratio, flags: BTreeSet::from([Flag::Heuristic]), low: false, high: true });
        ctx.ineq("random_instrument_ratio_le_bound", None, &ex(g.bound), &ratio);
    }
    Ok(())
}

fn s11(ctx: &mut Ctx, rho: &DensityMatrix, rng: &mut SeededRng) -> Result<()> {
    let rho = discgame::as_bipartite(rho)?;
    let dims = rho.dims().to_vec();
    let (da, db) = (dims[0], dims[1]);
    let a = DephasingPattern::single(0);
    let cmax = |r: &DensityMatrix| measures::c_max(r, &a, zero());
    let base = ctx.measure("c_max(ρ)", cmax(&rho));

    // (i) positivity, and the two directions of "= 0 iff IQ".
    ctx.ineq("positivity", None, &base, &Some(Val::exact(0.0)));
    let offdiag = rho.op().sub(rho.dephased(&a)?.op())?.trace_norm();
    let pinsker = offdiag * offdiag / (2.0 * std::f64::consts::LN_2);
    ctx.values.insert("pinsker_bound".into(), pinsker);
    ctx.ineq("positive_unless_iq", None, &base, &Some(Val::exact(pinsker)));
    let iq = sampler::random_iq_state(&dims, &a, 1 + rng.below(3), rng)?;
    let c_iq = ctx.measure("c_max(iq)", cmax(&iq));
    let tol = ctx.tol.sdp_cross_tol;
    ctx.identity("zero_on_iq", None, &c_iq, &Some(Val::exact(0.0)), tol);

    // (ii)-(iii) incoherent instrument on A.
    let inst = sampler::random_incoherent_channel(da, 2 + rng.below(2), rng)?;
    let mut total = MultipartiteOperator::new(dims.clone(), qmat::CMat::zeros(da * db, da * db))?;
    let mut averaged: Q = Some(Val::exact(0.0));
    for k in 0..inst.len() {
        let branch = inst.apply_branch(k, rho.op())?;
        total = total.add(&branch)?;
        let p = branch.trace();
        if p < BRANCH_CUTOFF {
            continue;
        }
        let conditional = DensityMatrix::normalized(&branch)?;
        let ck = ctx.measure(&format!("c_max(branch[{k}])"), cmax(&conditional));
        ctx.values.insert(format!("p[{k}]"), p);
        averaged = lin(&[(1.0, &averaged), (p, &ck)]);
    }
    let after = ctx.measure("c_max(io(ρ))", cmax(&DensityMatrix::new(total)?));
    ctx.ineq("io_monotone", None, &base, &after);
    ctx.ineq("strong_monotone", None, &base, &averaged);

    // (iv) any channel on B.
    let ch = sampler::random_channel(db, db, 1 + rng.below(3), rng)?;
    let out_b = DensityMatrix::new(ch.apply(rho.op(), &[1])?)?;
    let after_b = ctx.measure("c_max(cptp_b(ρ))", cmax(&out_b));
    ctx.ineq("cptp_b_monotone", None, &base, &after_b);

    // (v) quasi-convexity.
    let extra = 1 + rng.below(2);
    let mut states = vec![rho.clone()];
    for _ in 0..extra {
        states.push(sampler::suite_state(&dims, rng)?);
    }
    let weights = rng.simplex(states.len());
    let mix = DensityMatrix::mixture(&weights, &states)?;
    let mut comps: Vec<Q> = vec![base.clone()];
    for (k, s) in states.iter().enumerate().skip(1) {
        comps.push(ctx.measure(&format!("c_max(component[{k}])"), cmax(s)));
    }
    let c_mix = ctx.measure("c_max(mixture)", cmax(&mix));
    ctx.ineq("quasi_convex", None, &max_of(&comps.iter().collect::<Vec<_>>()), &c_mix);
    Ok(())
}

fn s12(ctx: &mut Ctx, rho: &DensityMatrix) -> Result<()> {
    let rho = tripartite(rho)?;
    let full = DephasingPattern::full(3);
    let one = DephasingPattern::full(1);
    let total = ctx.measure("c_max(ABC)", measures::c_max(&rho, &full, zero()));
    let em_res = measures::e_max(&rho, &[vec![0], vec![1], vec![2]], zero());
    let omega = em_res.as_ref().ok().and_then(|r| r.certificate("omega").cloned());
    let em = ctx.measure("e_max(A:B:C)", em_res);
    let mut local = Vec::new();
    for (k, name) in ["c_min(A)", "c_min(B)", "c_min(C)"].iter().enumerate() {
        let marginal = rho.reduced(&[k])?;
        local.push(ctx.measure(name, measures::c_min(&marginal, &one, zero())));
    }
    ctx.ineq("total_ge_entanglement_plus_local", None, &total, &sum(&[&em, &local[0], &local[1], &local[2]]));

    let c_sigma = match omega {
        Some(w) => {
            let clipped = qmat::hermitian_fn(&w, |x| x.max(0.0));
            let sigma = MultipartiteOperator::new(rho.dims().to_vec(), clipped).and_then(|op| DensityMatrix::normalized(&op));
            ctx.measure("c_max(sigma)", sigma.and_then(|s| measures::c_max(&s, &full, zero())))
        }
        None => None,
    };
    ctx.ineq("total_le_entanglement_plus_sigma", None, &sum(&[&em, &c_sigma]), &total);
    Ok(())
}

fn run_trial(cfg: &SuiteConfig, eps: &[f64], suite: Suite, class: usize, dims: &[usize], trial: usize) -> TrialRecord {
    let stream = (suite.number() << 48) | ((class as u64) << 32) | trial as u64;
    let mut rng = SeededRng::new(cfg.seed, stream);
    let mut ctx = Ctx::new(&cfg.tolerances);
    let mut rank = 0;
    let outcome = sampler::suite_state(dims, &mut rng).and_then(|rho| {
        rank = rho.op().rank(qmat::RANK_TOL);
        match suite {
            Suite::S1 => s1(&mut ctx, &rho, &mut rng),
            Suite::S2 => s2(&mut ctx, &rho, &mut rng),
            Suite::S3 => s3(&mut ctx, &rho, eps),
            Suite::S4 => s4(&mut ctx, &rho, eps),
            Suite::S5 => s5(&mut ctx, &rho, eps),
            Suite::S6 => s6(&mut ctx, &rho),
            Suite::S7 => s7(&mut ctx, &rho, eps),
            Suite::S8 => s8(&mut ctx, &rho),
            Suite::S9 => s9(&mut ctx, &rho, &mut rng),
            Suite::S10 => s10(&mut ctx, &rho, &mut rng),
            Suite::S11 => s11(&mut ctx, &rho, &mut rng),
            Suite::S12 => s12(&mut ctx, &rho),
        }
    });
    if let Err(e) = outcome {
        ctx.errors.push(format!("trial aborted: {e}"));
        let none: Q = None;
        ctx.ineq("trial", None, &none, &none);
    }
    TrialRecord {
        suite,
        dims: dims.to_vec(),
        trial,
        seed: cfg.seed,
        stream,
        rank,
        values: ctx.values,
        items: ctx.items,
        errors: ctx.errors,
    }
}

/// Worker count from the config, else [`THREADS_ENV`], else all cores.
pub fn parallel_width(cfg: &SuiteConfig) -> usize {
    cfg.parallelism
        .or_else(|| std::env::var(THREADS_ENV).ok().and_then(|v| v.trim().parse().ok()))
        .unwrap_or(0)
}

/// Runs the selected suites. Trials run in parallel but the report is
/// assembled in (suite, class, trial) order, so its content depends only on
/// the configuration.
pub fn run_suite(cfg: &SuiteConfig) -> Result<SuiteReport> {
    cfg.validate()?;
    let eps = cfg.sorted_eps();
    let mut jobs = Vec::new();
    for &suite in &cfg.suites {
        for (class, (dims, n)) in cfg.classes(suite).into_iter().enumerate() {
            for trial in 0..n {
                jobs.push((suite, class, dims.clone(), trial));
            }
        }
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(parallel_width(cfg))
        .build()
        .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?;
    let trials: Vec<TrialRecord> =
        pool.install(|| jobs.par_iter().map(|(suite, class, dims, trial)| run_trial(cfg, &eps, *suite, *class, dims, *trial)).collect());

    let mut totals = Counts::default();
    let mut summary: BTreeMap<Suite, Counts> = cfg.suites.iter().map(|&s| (s, Counts::default())).collect();
    for t in &trials {
        for it in &t.items {
            totals.add(it);
            summary.entry(t.suite).or_default().add(it);
        }
    }
    Ok(SuiteReport { config: cfg.clone(), environment: Environment::current(), totals, summary, trials })
}

// ---------------------------------------------------------------------------
// Output
// ---------------------------------------------------------------------------

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ReportFormat {
    Json,
    Csv,
}

pub const CSV_HEADER: [&str; 16] = [
    "suite", "dims", "trial", "seed", "stream", "rank", "item", "kind", "eps", "lhs", "rhs", "slack", "tol", "flags", "verdict",
    "vacuous",
];

#[derive(Serialize)]
struct CsvRow<'a> {
    suite: String,
    dims: String,
    trial: usize,
    seed: u64,
    stream: u64,
    rank: usize,
    item: &'a str,
    kind: ItemKind,
    eps: Option<f64>,
    lhs: Option<f64>,
    rhs: Option<f64>,
    slack: Option<f64>,
    tol: f64,
    flags: String,
    verdict: Verdict,
    vacuous: bool,
}

fn flag_name(f: Flag) -> String {
    serde_json::to_value(f).ok().and_then(|v| v.as_str().map(str::to_string)).unwrap_or_default()
}

/// One row per (trial, item); the header is written even for empty runs.
pub fn write_csv<W: Write>(report: &SuiteReport, out: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    w.write_record(CSV_HEADER)?;
    for (t, it) in report.items() {
        w.serialize(CsvRow {
            suite: t.suite.to_string(),
            dims: t.dims.iter().map(|d| d.to_string()).collect::<Vec<_>>().join("x"),
            trial: t.trial,
            seed: t.seed,
            stream: t.stream,
            rank: t.rank,
            item: &it.item,
            kind: it.kind,
            eps: it.eps,
            lhs: it.lhs,
            rhs: it.rhs,
            slack: it.slack,
            tol: it.tol,
            flags: it.flags.iter().map(|&f| flag_name(f)).collect::<Vec<_>>().join(";"),
            verdict: it.verdict,
            vacuous: it.vacuous,
        })?;
    }
    w.flush()?;
    Ok(())
}

pub fn emit_report(report: &SuiteReport, format: ReportFormat, path: &Path) -> Result<()> {
    match format {
        ReportFormat::Json => crate::io::write_json(path, report),
        ReportFormat::Csv => write_csv(report, std::io::BufWriter::new(std::fs::File::create(path)?)),
    }
}
