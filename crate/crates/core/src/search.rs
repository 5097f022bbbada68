//! Greedy kernel structure search scored by BIC.
//!
//! Round 0 fits every base kernel. Each later round expands the incumbents
//! with the grammar moves `S → S + B`, `S → S × B`, `S → CP(S, B)` and
//! `S → CW(S, B)` applied at every subexpression `S`, refits every
//! candidate, and keeps the `beam_width` best by BIC. The search stops after
//! `max_depth` rounds or as soon as a round fails to improve on the best BIC.

use std::cmp::Ordering;
use std::collections::HashSet;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::algebra::simplify;
use crate::dsl::{render, render_structure, BaseKernel, BaseKind, KernelExpr};
use crate::error::{Error, Result};
use crate::gp::{bic_from_lml, optimize_hyperparams, NoisePolicy, OptimizeConfig, TimeSeriesDataset};

/// BIC values closer than this are treated as tied.
pub const BIC_TIE: f64 = 1e-9;

/// Quantiles of the training times where new change points are placed.
pub const CHANGE_QUANTILES: [f64; 3] = [0.25, 0.5, 0.75];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Operator {
    Add,
    Multiply,
    #[serde(rename = "cp")]
    ChangePoint,
    #[serde(rename = "cw")]
    ChangeWindow,
}

impl Operator {
    pub const ALL: [Operator; 4] = [
        Operator::Add,
        Operator::Multiply,
        Operator::ChangePoint,
        Operator::ChangeWindow,
    ];

    pub fn symbol(self) -> &'static str {
        match self {
            Operator::Add => "+",
            Operator::Multiply => "*",
            Operator::ChangePoint => "CP",
            Operator::ChangeWindow => "CW",
        }
    }

    pub fn from_symbol(s: &str) -> Option<Operator> {
        match s {
            "+" | "add" => Some(Operator::Add),
            "*" | "x" | "mul" => Some(Operator::Multiply),
            "CP" | "cp" => Some(Operator::ChangePoint),
            "CW" | "cw" => Some(Operator::ChangeWindow),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchConfig {
    /// Number of rounds including the base-kernel round.
    pub max_depth: usize,
    pub base_set: Vec<BaseKind>,
    pub operators: Vec<Operator>,
    pub beam_width: usize,
    pub restarts: usize,
    pub max_iters: usize,
    pub seed: u64,
    pub noise: NoisePolicy,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig {
            max_depth: 3,
            base_set: BaseKind::ALL.to_vec(),
            operators: Operator::ALL.to_vec(),
            beam_width: 1,
            restarts: 5,
            max_iters: 400,
            seed: 0,
            noise: NoisePolicy::default(),
        }
    }
}

impl SearchConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_depth < 1 {
            return Err(Error::SearchFailed("max_depth must be at least 1".into()));
        }
        if self.base_set.is_empty() {
            return Err(Error::SearchFailed("base kernel set is empty".into()));
        }
        if self.beam_width < 1 {
            return Err(Error::SearchFailed("beam width must be at least 1".into()));
        }
        Ok(())
    }
}

/// One fitted (or failed) candidate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub round: usize,
    /// Rendered expression with fitted hyperparameters (the unfitted one on failure).
    pub kernel: String,
    pub n_params: usize,
    pub noise_variance: Option<f64>,
    pub lml: Option<f64>,
    pub bic: Option<f64>,
    pub accepted: bool,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SearchTrace {
    pub records: Vec<TraceRecord>,
}

impl SearchTrace {
    /// One JSON object per line.
    pub fn write_jsonl(&self, mut out: impl Write) -> std::io::Result<()> {
        for r in &self.records {
            serde_json::to_writer(&mut out, r)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn read_jsonl(text: &str) -> serde_json::Result<SearchTrace> {
        let records = text
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(serde_json::from_str)
            .collect::<serde_json::Result<_>>()?;
        Ok(SearchTrace { records })
    }

    /// BIC of the accepted candidate of each round that had one.
    pub fn accepted_bics(&self) -> Vec<f64> {
        self.records
            .iter()
            .filter(|r| r.accepted)
            .filter_map(|r| r.bic)
            .collect()
    }
}

/// A fitted candidate.
#[derive(Debug, Clone, PartialEq)]
pub struct Scored {
    pub expr: KernelExpr,
    pub noise_variance: f64,
    pub lml: f64,
    pub bic: f64,
    pub n_params: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchResult {
    pub best: Scored,
    pub trace: SearchTrace,
}

/// Lower BIC first; near-ties go to fewer parameters, then render order.
fn rank(a: &Scored, b: &Scored) -> Ordering {
    if (a.bic - b.bic).abs() > BIC_TIE {
        a.bic.total_cmp(&b.bic)
    } else {
        a.n_params
            .cmp(&b.n_params)
            .then_with(|| render(&a.expr).cmp(&render(&b.expr)))
    }
}

/// Structural identity: canonical terms with base hyperparameters stripped, sorted.
pub fn structure_key(expr: &KernelExpr) -> String {
    let mut terms: Vec<String> = simplify(expr)
        .terms
        .iter()
        .map(|t| render_structure(&t.to_expr()))
        .collect();
    terms.sort();
    terms.join(" + ")
}

/// Where new change points and windows are placed.
#[derive(Debug, Clone, PartialEq)]
pub struct ChangePlacement {
    pub locations: Vec<f64>,
    pub window: (f64, f64),
    pub steepness: f64,
}

impl Default for ChangePlacement {
    fn default() -> Self {
        ChangePlacement {
            locations: vec![crate::dsl::DEFAULT_LOCATION],
            window: crate::dsl::DEFAULT_WINDOW,
            steepness: crate::dsl::DEFAULT_STEEPNESS,
        }
    }
}

impl ChangePlacement {
    /// Quantiles of the training times; windows over the middle third.
    pub fn for_data(data: &TimeSeriesDataset) -> ChangePlacement {
        let t = data.train_times();
        let (lo, hi) = data.train_range();
        let span = hi - lo;
        ChangePlacement {
            locations: CHANGE_QUANTILES.iter().map(|&q| quantile(t, q)).collect(),
            window: (lo + span / 3.0, lo + 2.0 * span / 3.0),
            steepness: if span > 0.0 { span / 20.0 } else { 1.0 },
        }
    }
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let i = pos.floor() as usize;
    let frac = pos - i as f64;
    if i + 1 < sorted.len() {
        sorted[i] + frac * (sorted[i + 1] - sorted[i])
    } else {
        sorted[i]
    }
}

/// Candidate expansions with default leaves and change placement.
pub fn expand(expr: &KernelExpr, config: &SearchConfig) -> Vec<KernelExpr> {
    expand_with(expr, config, &ChangePlacement::default(), &|k| KernelExpr::base(k), &|k| KernelExpr::base(k))
}

/// Candidate expansions. `additive_leaf` builds the new kernel for `+`, CP and
/// CW moves; `multiplicative_leaf` for `×`.
pub fn expand_with(
    expr: &KernelExpr,
    config: &SearchConfig,
    placement: &ChangePlacement,
    additive_leaf: &dyn Fn(BaseKind) -> KernelExpr,
    multiplicative_leaf: &dyn Fn(BaseKind) -> KernelExpr,
) -> Vec<KernelExpr> {
    let mut seen: HashSet<String> = HashSet::new();
    seen.insert(structure_key(expr));
    let mut out = Vec::new();
    for path in node_paths(expr) {
        let target = node_at(expr, &path);
        for &kind in &config.base_set {
            for &op in &config.operators {
                let replacements: Vec<KernelExpr> = match op {
                    Operator::Add => vec![KernelExpr::Sum(vec![target.clone(), additive_leaf(kind)])],
                    Operator::Multiply => {
                        vec![KernelExpr::Product(vec![target.clone(), multiplicative_leaf(kind)])]
                    }
                    Operator::ChangePoint => placement
                        .locations
                        .iter()
                        .map(|&loc| KernelExpr::ChangePoint {
                            left: Box::new(target.clone()),
                            right: Box::new(additive_leaf(kind)),
                            location: loc,
                            steepness: placement.steepness,
                        })
                        .collect(),
                    Operator::ChangeWindow => vec![KernelExpr::ChangeWindow {
                        inside: Box::new(target.clone()),
                        outside: Box::new(additive_leaf(kind)),
                        start: placement.window.0,
                        end: placement.window.1,
                        steepness: placement.steepness,
                    }],
                };
                for r in replacements {
                    let candidate = flatten(&replace_at(expr, &path, r));
                    if seen.insert(structure_key(&candidate)) {
                        out.push(candidate);
                    }
                }
            }
        }
    }
    out
}

/// Child-index paths of every node, pre-order.
fn node_paths(expr: &KernelExpr) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    fn walk(e: &KernelExpr, path: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        out.push(path.clone());
        for (i, c) in e.children().into_iter().enumerate() {
            path.push(i);
            walk(c, path, out);
            path.pop();
        }
    }
    walk(expr, &mut Vec::new(), &mut out);
    out
}

fn node_at<'a>(expr: &'a KernelExpr, path: &[usize]) -> &'a KernelExpr {
    path.iter().fold(expr, |e, &i| e.children()[i])
}

fn replace_at(expr: &KernelExpr, path: &[usize], with: KernelExpr) -> KernelExpr {
    let mut out = expr.clone();
    let mut slot = &mut out;
    for &i in path {
        slot = slot.children_mut().swap_remove(i);
    }
    *slot = with;
    out
}

/// Merge sums nested directly in sums and products nested in products.
fn flatten(expr: &KernelExpr) -> KernelExpr {
    let mut e = expr.clone();
    for c in e.children_mut() {
        *c = flatten(c);
    }
    match e {
        KernelExpr::Sum(c) => KernelExpr::sum_of(c),
        KernelExpr::Product(c) => KernelExpr::product_of(c),
        other => other,
    }
}

/// Data-scaled starting values for a new leaf.
struct LeafInit {
    t_min: f64,
    span: f64,
    var_y: f64,
}

impl LeafInit {
    fn new(data: &TimeSeriesDataset) -> LeafInit {
        let (lo, hi) = data.train_range();
        LeafInit {
            t_min: lo,
            span: if hi > lo { hi - lo } else { 1.0 },
            var_y: data.train_variance(),
        }
    }

    fn leaf(&self, kind: BaseKind, variance: f64) -> KernelExpr {
        KernelExpr::Base(match kind {
            BaseKind::WhiteNoise => BaseKernel::WhiteNoise {
                variance: 0.1 * variance,
            },
            BaseKind::Constant => BaseKernel::Constant { variance },
            BaseKind::Linear => BaseKernel::Linear {
                variance: variance / (self.span * self.span),
                offset: self.t_min,
            },
            BaseKind::SquaredExp => BaseKernel::SquaredExp {
                variance,
                lengthscale: self.span / 10.0,
            },
            BaseKind::Periodic => BaseKernel::Periodic {
                variance,
                lengthscale: 1.0,
                period: self.span / 10.0,
            },
        })
    }
}

fn fit(
    expr: &KernelExpr,
    data: &TimeSeriesDataset,
    noise: NoisePolicy,
    config: &SearchConfig,
    seed: u64,
) -> Result<Scored> {
    let opt = OptimizeConfig {
        restarts: config.restarts,
        max_iters: config.max_iters,
        seed,
    };
    let f = optimize_hyperparams(expr, data, noise, &opt)?;
    let n_params = f.expr.num_hyperparams() + 1;
    Ok(Scored {
        bic: bic_from_lml(f.lml, n_params, data.n_train()),
        expr: f.expr,
        noise_variance: f.noise_variance,
        lml: f.lml,
        n_params,
    })
}

/// Per-candidate seed derived from the search seed, round and position.
fn candidate_seed(seed: u64, round: usize, index: usize) -> u64 {
    seed ^ ((round as u64) << 40) ^ (index as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

fn fit_round(
    round: usize,
    candidates: &[(KernelExpr, NoisePolicy)],
    data: &TimeSeriesDataset,
    config: &SearchConfig,
) -> Vec<(KernelExpr, Result<Scored>)> {
    candidates
        .par_iter()
        .enumerate()
        .map(|(i, (e, noise))| {
            let seed = candidate_seed(config.seed, round, i);
            (e.clone(), fit(e, data, *noise, config, seed))
        })
        .collect()
}

/// Run the greedy search on the training prefix of `data`.
pub fn search(data: &TimeSeriesDataset, config: &SearchConfig) -> Result<SearchResult> {
    config.validate()?;
    if data.n_train() < 5 {
        return Err(Error::InvalidDataset(format!(
            "structure search needs at least 5 training points, got {}",
            data.n_train()
        )));
    }
    let init = LeafInit::new(data);
    let placement = ChangePlacement::for_data(data);
    let mut trace = SearchTrace::default();
    let mut seen: HashSet<String> = HashSet::new();

    let round0: Vec<(KernelExpr, NoisePolicy)> = config
        .base_set
        .iter()
        .map(|&k| (init.leaf(k, init.var_y), config.noise))
        .filter(|(e, _)| seen.insert(structure_key(e)))
        .collect();
    let mut incumbents = record_round(0, fit_round(0, &round0, data, config), config, &mut trace);
    let Some(mut best) = incumbents.first().cloned() else {
        return Err(Error::SearchFailed("every base kernel failed to fit".into()));
    };

    for round in 1..config.max_depth {
        let mut candidates = Vec::new();
        for inc in &incumbents {
            let noise = match config.noise {
                NoisePolicy::Learn { .. } => NoisePolicy::Learn {
                    initial: inc.noise_variance,
                },
                fixed => fixed,
            };
            let expanded = expand_with(
                &inc.expr,
                config,
                &placement,
                &|k| init.leaf(k, init.var_y),
                &|k| init.leaf(k, 1.0),
            );
            for e in expanded {
                if seen.insert(structure_key(&e)) {
                    candidates.push((e, noise));
                }
            }
        }
        if candidates.is_empty() {
            break;
        }
        let results = fit_round(round, &candidates, data, config);
        let start = trace.records.len();
        let ranked = record_round(round, results, config, &mut trace);
        match ranked.first() {
            Some(top) if rank(top, &best) == Ordering::Less && top.bic < best.bic => {
                best = top.clone();
                incumbents = ranked;
            }
            _ => {
                // nothing improved: this round has no accepted candidate
                for r in &mut trace.records[start..] {
                    r.accepted = false;
                }
                break;
            }
        }
    }
    Ok(SearchResult { best, trace })
}

/// Append a round to the trace and return its successful fits, best first,
/// truncated to the beam width. The round's best is marked accepted.
fn record_round(
    round: usize,
    results: Vec<(KernelExpr, Result<Scored>)>,
    config: &SearchConfig,
    trace: &mut SearchTrace,
) -> Vec<Scored> {
    let start = trace.records.len();
    let mut ok: Vec<(usize, Scored)> = Vec::new();
    for (expr, res) in results {
        let idx = trace.records.len();
        match res {
            Ok(s) => {
                trace.records.push(TraceRecord {
                    round,
                    kernel: render(&s.expr),
                    n_params: s.n_params,
                    noise_variance: Some(s.noise_variance),
                    lml: Some(s.lml),
                    bic: Some(s.bic),
                    accepted: false,
                    error: None,
                });
                ok.push((idx, s));
            }
            Err(e) => trace.records.push(TraceRecord {
                round,
                kernel: render(&expr),
                n_params: expr.num_hyperparams() + 1,
                noise_variance: None,
                lml: None,
                bic: None,
                accepted: false,
                error: Some(e.to_string()),
            }),
        }
    }
    ok.sort_by(|a, b| rank(&a.1, &b.1));
    if let Some((idx, _)) = ok.first() {
        trace.records[*idx].accepted = true;
    }
    debug_assert!(trace.records[start..].iter().filter(|r| r.accepted).count() <= 1);
    ok.into_iter()
        .take(config.beam_width)
        .map(|(_, s)| s)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsl::parse;

    fn keys(list: &[KernelExpr]) -> Vec<String> {
        let mut k: Vec<String> = list.iter().map(render).collect();
        k.sort();
        k
    }

    #[test]
    fn expand_se_with_add_and_multiply() {
        let cfg = SearchConfig {
            base_set: vec![BaseKind::SquaredExp, BaseKind::Linear],
            operators: vec![Operator::Add, Operator::Multiply],
            ..SearchConfig::default()
        };
        let got = expand(&parse("SE").unwrap(), &cfg);
        // SE * SE simplifies to an SE core and is dropped as a duplicate of SE
        assert_eq!(keys(&got), vec!["SE * LIN", "SE + LIN", "SE + SE"]);
    }

    #[test]
    fn expand_without_operators_is_empty() {
        let cfg = SearchConfig {
            operators: vec![],
            ..SearchConfig::default()
        };
        assert!(expand(&parse("SE + PER").unwrap(), &cfg).is_empty());
    }

    #[test]
    fn candidates_differ_from_input() {
        let cfg = SearchConfig::default();
        let e = parse("SE * LIN + PER").unwrap();
        let key = structure_key(&e);
        let got = expand(&e, &cfg);
        assert!(!got.is_empty());
        for c in &got {
            assert_ne!(structure_key(c), key);
            c.validate().unwrap();
        }
        let unique: HashSet<String> = got.iter().map(structure_key).collect();
        assert_eq!(unique.len(), got.len());
    }

    #[test]
    fn expansions_reach_every_subexpression() {
        let cfg = SearchConfig {
            base_set: vec![BaseKind::Periodic],
            operators: vec![Operator::Multiply],
            ..SearchConfig::default()
        };
        let got = keys(&expand(&parse("SE + LIN").unwrap(), &cfg));
        assert_eq!(got, vec!["(SE + LIN) * PER", "SE * PER + LIN", "SE + LIN * PER"]);
    }

    #[test]
    fn change_moves_use_every_location() {
        let cfg = SearchConfig {
            base_set: vec![BaseKind::Constant],
            operators: vec![Operator::ChangePoint],
            ..SearchConfig::default()
        };
        let placement = ChangePlacement {
            locations: vec![1.0, 2.0, 3.0],
            window: (1.0, 2.0),
            steepness: 0.5,
        };
        let leaf = |k| KernelExpr::base(k);
        let got = expand_with(&parse("SE").unwrap(), &cfg, &placement, &leaf, &leaf);
        assert_eq!(got.len(), 3);
    }

    #[test]
    fn structure_key_ignores_order_and_hyperparameters() {
        let a = parse("SE[lengthscale=2] + LIN * PER").unwrap();
        let b = parse("PER[period=3] * LIN + SE").unwrap();
        assert_eq!(structure_key(&a), structure_key(&b));
        assert_ne!(structure_key(&a), structure_key(&parse("SE + PER").unwrap()));
    }

    #[test]
    fn quantiles_interpolate() {
        let t = [0.0, 1.0, 2.0, 3.0, 4.0];
        assert_eq!(quantile(&t, 0.5), 2.0);
        assert_eq!(quantile(&t, 0.25), 1.0);
        assert_eq!(quantile(&[0.0, 1.0], 0.25), 0.25);
    }

    #[test]
    fn trace_jsonl_roundtrip() {
        let trace = SearchTrace {
            records: vec![TraceRecord {
                round: 0,
                kernel: "SE[lengthscale=0.5]".into(),
                n_params: 3,
                noise_variance: Some(0.01),
                lml: Some(-3.5),
                bic: Some(10.25),
                accepted: true,
                error: None,
            }],
        };
        let mut buf = Vec::new();
        trace.write_jsonl(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 1);
        assert_eq!(SearchTrace::read_jsonl(&text).unwrap(), trace);
    }

    #[test]
    fn max_depth_one_returns_a_base_kernel() {
        let times: Vec<f64> = (0..30).map(|i| i as f64 * 0.2).collect();
        let values = times.iter().map(|t: &f64| (1.3 * t).sin()).collect();
        let data = TimeSeriesDataset::train_only(times, values).unwrap();
        let cfg = SearchConfig {
            max_depth: 1,
            restarts: 2,
            max_iters: 100,
            ..SearchConfig::default()
        };
        let res = search(&data, &cfg).unwrap();
        assert!(matches!(res.best.expr, KernelExpr::Base(_)));
        assert_eq!(res.trace.records.len(), 5);
        assert_eq!(res.trace.records.iter().filter(|r| r.accepted).count(), 1);
        let min = res
            .trace
            .records
            .iter()
            .filter_map(|r| r.bic)
            .fold(f64::INFINITY, f64::min);
        assert_eq!(res.best.bic, min);
    }

    #[test]
    fn rejects_tiny_datasets_and_bad_config() {
        let data = TimeSeriesDataset::train_only(vec![0.0, 1.0, 2.0, 3.0], vec![0.0; 4]).unwrap();
        assert!(search(&data, &SearchConfig::default()).is_err());
        let cfg = SearchConfig {
            base_set: vec![],
            ..SearchConfig::default()
        };
        assert!(cfg.validate().is_err());
    }
}
