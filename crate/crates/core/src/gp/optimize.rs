//! Hyperparameter fitting by maximizing the log marginal likelihood.
//!
//! Parameters are mapped to an unconstrained space (log for positive values,
//! log-gap for window ends, span-normalized for locations) and searched with
//! a Nelder-Mead simplex from several starting points. The best vertex of
//! every run is at least as good as its start, so the likelihood never
//! decreases relative to the initial hyperparameters.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::data::TimeSeriesDataset;
use super::posterior::{log_marginal_likelihood, NOISE_FLOOR};
use crate::dsl::{Hyperparam, KernelExpr, ParamKind};
use crate::error::{Error, Result};

/// How observation noise is handled while fitting.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NoisePolicy {
    /// Fit the noise variance jointly, starting from this value.
    Learn { initial: f64 },
    Fixed(f64),
}

impl Default for NoisePolicy {
    fn default() -> Self {
        NoisePolicy::Learn { initial: 0.1 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimizeConfig {
    /// Number of starting points; the first is the expression's current values.
    pub restarts: usize,
    /// Simplex iterations per start.
    pub max_iters: usize,
    pub seed: u64,
}

impl Default for OptimizeConfig {
    fn default() -> Self {
        OptimizeConfig {
            restarts: 5,
            max_iters: 400,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub expr: KernelExpr,
    pub noise_variance: f64,
    pub lml: f64,
}

/// Data-derived scales used to place parameters and random starts.
#[derive(Debug, Clone, Copy)]
struct Scales {
    t_min: f64,
    span: f64,
    var_y: f64,
}

impl Scales {
    fn new(data: &TimeSeriesDataset) -> Scales {
        let (lo, hi) = data.train_range();
        Scales {
            t_min: lo,
            span: if hi > lo { hi - lo } else { 1.0 },
            var_y: data.train_variance(),
        }
    }
}

/// Bijection between hyperparameters and unconstrained coordinates.
struct Transform {
    kinds: Vec<ParamKind>,
    learn_noise: bool,
    scales: Scales,
}

impl Transform {
    fn encode(&self, values: &[f64], noise: f64) -> Vec<f64> {
        let mut out = Vec::with_capacity(values.len() + 1);
        for (i, (&v, kind)) in values.iter().zip(&self.kinds).enumerate() {
            out.push(match kind {
                ParamKind::Positive => v.ln(),
                ParamKind::Real => (v - self.scales.t_min) / self.scales.span,
                ParamKind::AfterPrevious => ((v - values[i - 1]) / self.scales.span).ln(),
            });
        }
        if self.learn_noise {
            out.push(noise.max(NOISE_FLOOR).ln());
        }
        out
    }

    fn decode(&self, theta: &[f64]) -> (Vec<f64>, Option<f64>) {
        let mut values: Vec<f64> = Vec::with_capacity(self.kinds.len());
        for (i, kind) in self.kinds.iter().enumerate() {
            let v = match kind {
                ParamKind::Positive => theta[i].exp(),
                ParamKind::Real => self.scales.t_min + theta[i] * self.scales.span,
                ParamKind::AfterPrevious => values[i - 1] + theta[i].exp() * self.scales.span,
            };
            values.push(v);
        }
        let noise = self
            .learn_noise
            .then(|| theta[self.kinds.len()].exp().max(NOISE_FLOOR));
        (values, noise)
    }
}

/// Random starting values, log-uniform around data scales.
fn random_start(params: &[Hyperparam], scales: Scales, rng: &mut ChaCha8Rng) -> (Vec<f64>, f64) {
    fn log_uniform(rng: &mut ChaCha8Rng, center: f64, lo_dec: f64, hi_dec: f64) -> f64 {
        center * 10f64.powf(rng.gen_range(lo_dec..hi_dec))
    }
    let mut values: Vec<f64> = Vec::with_capacity(params.len());
    for (i, p) in params.iter().enumerate() {
        let v = match (p.name, p.kind) {
            ("variance", _) if is_linear(params, i) => {
                log_uniform(rng, scales.var_y / (scales.span * scales.span), -1.0, 1.0)
            }
            ("variance", _) => log_uniform(rng, scales.var_y, -1.0, 1.0),
            ("lengthscale", _) if is_periodic(params, i) => log_uniform(rng, 1.0, -1.0, 1.0),
            ("lengthscale", _) => log_uniform(rng, scales.span, -2.0, 0.0),
            ("period", _) => log_uniform(rng, scales.span, -2.0, -0.3),
            ("steepness", _) => log_uniform(rng, scales.span, -3.0, -1.0),
            (_, ParamKind::Real) => scales.t_min + scales.span * rng.gen_range(0.05..0.95),
            (_, ParamKind::AfterPrevious) => {
                let room = (scales.t_min + scales.span - values[i - 1]).max(0.05 * scales.span);
                values[i - 1] + room * rng.gen_range(0.05..0.95)
            }
            (_, ParamKind::Positive) => log_uniform(rng, 1.0, -1.0, 1.0),
        };
        values.push(v);
    }
    let noise = log_uniform(rng, scales.var_y, -3.0, -1.0);
    (values, noise)
}

fn is_linear(params: &[Hyperparam], i: usize) -> bool {
    params.get(i + 1).is_some_and(|n| n.name == "offset" && n.path == params[i].path)
}

fn is_periodic(params: &[Hyperparam], i: usize) -> bool {
    params.get(i + 1).is_some_and(|n| n.name == "period" && n.path == params[i].path)
}

/// Fit hyperparameters (and optionally noise) by local LML maximization from
/// `config.restarts` starts. Deterministic for a given seed, independent of
/// thread scheduling.
pub fn optimize_hyperparams(
    expr: &KernelExpr,
    data: &TimeSeriesDataset,
    noise: NoisePolicy,
    config: &OptimizeConfig,
) -> Result<FitResult> {
    if data.n_train() < 2 {
        return Err(Error::InvalidDataset(
            "fitting needs at least two training points".into(),
        ));
    }
    let params = expr.hyperparams();
    let scales = Scales::new(data);
    let (learn_noise, noise0) = match noise {
        NoisePolicy::Learn { initial } => (true, initial.max(NOISE_FLOOR)),
        NoisePolicy::Fixed(v) => (false, v),
    };
    let transform = Transform {
        kinds: params.iter().map(|p| p.kind).collect(),
        learn_noise,
        scales,
    };
    let initial_values: Vec<f64> = params.iter().map(|p| p.value).collect();

    let objective = |theta: &[f64]| -> f64 {
        let (values, learned) = transform.decode(theta);
        let noise = learned.unwrap_or(noise0);
        let Ok(candidate) = expr.with_hyperparams(&values) else {
            return f64::INFINITY;
        };
        if candidate.validate().is_err() {
            return f64::INFINITY;
        }
        match log_marginal_likelihood(&candidate, data, noise) {
            Ok(lml) if lml.is_finite() => -lml,
            _ => f64::INFINITY,
        }
    };

    let restarts = config.restarts.max(1);
    let runs: Vec<(usize, Vec<f64>, f64)> = (0..restarts)
        .into_par_iter()
        .map(|r| {
            let theta0 = if r == 0 {
                transform.encode(&initial_values, noise0)
            } else {
                let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
                rng.set_stream(r as u64);
                let (values, n) = random_start(&params, scales, &mut rng);
                transform.encode(&values, n)
            };
            let (theta, f) = nelder_mead(&objective, theta0, config.max_iters);
            (r, theta, f)
        })
        .collect();

    // deterministic argmin, lowest restart index wins ties
    let (best_r, best_theta, best_f) = runs
        .into_iter()
        .fold(None::<(usize, Vec<f64>, f64)>, |acc, run| match acc {
            Some(a) if !(run.2 < a.2) => Some(a),
            _ => Some(run),
        })
        .unwrap();
    if !best_f.is_finite() {
        return Err(Error::OptimizationFailed(format!(
            "no finite likelihood for `{expr}` in {restarts} restarts"
        )));
    }
    let initial_theta = transform.encode(&initial_values, noise0);
    let (fitted, noise_variance) = if best_r == 0 && best_theta == initial_theta {
        // keep the exact starting values rather than their exp(ln(.)) round trip
        (expr.clone(), noise0)
    } else {
        let (values, learned) = transform.decode(&best_theta);
        (expr.with_hyperparams(&values)?, learned.unwrap_or(noise0))
    };
    Ok(FitResult {
        expr: fitted,
        noise_variance,
        lml: -best_f,
    })
}

/// Minimize `f` from `x0`. Returns the best vertex and its value; the start is
/// always a vertex, so the result is never worse than `f(x0)`.
pub(crate) fn nelder_mead(f: &(impl Fn(&[f64]) -> f64 + Sync), x0: Vec<f64>, max_iters: usize) -> (Vec<f64>, f64) {
    let n = x0.len();
    let f0 = f(&x0);
    if max_iters == 0 || n == 0 {
        return (x0, f0);
    }
    let step = 0.5;
    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(n + 1);
    simplex.push((x0.clone(), f0));
    for i in 0..n {
        let mut x = x0.clone();
        x[i] += step;
        let fx = f(&x);
        simplex.push((x, fx));
    }
    let order = |s: &mut Vec<(Vec<f64>, f64)>| {
        // stable sort keeps insertion order among equal values
        s.sort_by(|a, b| a.1.total_cmp(&b.1));
    };
    let lerp = |a: &[f64], b: &[f64], t: f64| -> Vec<f64> {
        a.iter().zip(b).map(|(x, y)| x + t * (y - x)).collect()
    };
    for _ in 0..max_iters {
        order(&mut simplex);
        let best = simplex[0].1;
        let worst = simplex[n].1;
        if best.is_finite() && (worst - best).abs() <= 1e-10 * (1.0 + best.abs()) {
            let size = simplex[1..]
                .iter()
                .flat_map(|(x, _)| x.iter().zip(&simplex[0].0).map(|(a, b)| (a - b).abs()))
                .fold(0.0, f64::max);
            if size < 1e-8 {
                break;
            }
        }
        let mut centroid = vec![0.0; n];
        for (x, _) in &simplex[..n] {
            for (c, v) in centroid.iter_mut().zip(x) {
                *c += v / n as f64;
            }
        }
        let worst_x = simplex[n].0.clone();
        let reflected = lerp(&centroid, &worst_x, -1.0);
        let fr = f(&reflected);
        if fr < simplex[0].1 {
            let expanded = lerp(&centroid, &worst_x, -2.0);
            let fe = f(&expanded);
            simplex[n] = if fe < fr { (expanded, fe) } else { (reflected, fr) };
        } else if fr < simplex[n - 1].1 {
            simplex[n] = (reflected, fr);
        } else {
            let (contracted, fc) = if fr < worst {
                let c = lerp(&centroid, &worst_x, -0.5);
                let fc = f(&c);
                (c, fc)
            } else {
                let c = lerp(&centroid, &worst_x, 0.5);
                let fc = f(&c);
                (c, fc)
            };
            if fc < worst.min(fr) {
                simplex[n] = (contracted, fc);
            } else {
                let best_x = simplex[0].0.clone();
                for v in simplex.iter_mut().skip(1) {
                    let x = lerp(&best_x, &v.0, 0.5);
                    let fx = f(&x);
                    *v = (x, fx);
                }
            }
        }
    }
    order(&mut simplex);
    simplex.swap_remove(0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsl::parse;

    fn sine_data(n: usize) -> TimeSeriesDataset {
        let times: Vec<f64> = (0..n).map(|i| i as f64 * 0.2).collect();
        let values = times.iter().map(|t| t.sin()).collect();
        TimeSeriesDataset::train_only(times, values).unwrap()
    }

    #[test]
    fn nelder_mead_finds_quadratic_minimum() {
        let f = |x: &[f64]| (x[0] - 1.0).powi(2) + 3.0 * (x[1] + 2.0).powi(2);
        let (x, v) = nelder_mead(&f, vec![0.0, 0.0], 500);
        assert!(v < 1e-12);
        assert!((x[0] - 1.0).abs() < 1e-5 && (x[1] + 2.0).abs() < 1e-5);
    }

    #[test]
    fn zero_iterations_is_identity() {
        let d = sine_data(10);
        let e = parse("SE[variance=0.3, lengthscale=1.7]").unwrap();
        let cfg = OptimizeConfig {
            restarts: 1,
            max_iters: 0,
            seed: 1,
        };
        let fit = optimize_hyperparams(&e, &d, NoisePolicy::Learn { initial: 0.05 }, &cfg).unwrap();
        assert_eq!(fit.expr, e);
        assert_eq!(fit.noise_variance, 0.05);
        assert_eq!(fit.lml, log_marginal_likelihood(&e, &d, 0.05).unwrap());
    }

    #[test]
    fn same_seed_same_result() {
        let d = sine_data(15);
        let e = parse("SE + LIN").unwrap();
        let cfg = OptimizeConfig {
            restarts: 3,
            max_iters: 60,
            seed: 9,
        };
        let a = optimize_hyperparams(&e, &d, NoisePolicy::default(), &cfg).unwrap();
        let b = optimize_hyperparams(&e, &d, NoisePolicy::default(), &cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn likelihood_never_decreases() {
        let d = sine_data(20);
        for text in ["SE", "PER", "LIN", "SE * LIN", "CP(SE, C)", "CW(SE, C)"] {
            let e = parse(text).unwrap().bind_change_defaults(0.0, 3.8);
            let before = log_marginal_likelihood(&e, &d, 0.1).unwrap();
            let cfg = OptimizeConfig {
                restarts: 1,
                max_iters: 50,
                seed: 3,
            };
            let fit = optimize_hyperparams(&e, &d, NoisePolicy::Learn { initial: 0.1 }, &cfg).unwrap();
            assert!(fit.lml >= before, "{text}: {} < {before}", fit.lml);
            fit.expr.validate().unwrap();
        }
    }

    #[test]
    fn fixed_noise_is_kept() {
        let d = sine_data(12);
        let cfg = OptimizeConfig {
            restarts: 2,
            max_iters: 30,
            seed: 0,
        };
        let fit = optimize_hyperparams(&parse("SE").unwrap(), &d, NoisePolicy::Fixed(0.01), &cfg).unwrap();
        assert_eq!(fit.noise_variance, 0.01);
    }

    #[test]
    fn window_end_stays_after_start() {
        let t = Transform {
            kinds: vec![ParamKind::Real, ParamKind::AfterPrevious, ParamKind::Positive],
            learn_noise: true,
            scales: Scales {
                t_min: 2.0,
                span: 10.0,
                var_y: 1.0,
            },
        };
        let theta = t.encode(&[3.0, 4.5, 0.2], 0.01);
        let (back, noise) = t.decode(&theta);
        assert!((back[0] - 3.0).abs() < 1e-12 && (back[1] - 4.5).abs() < 1e-12 && (back[2] - 0.2).abs() < 1e-12);
        assert!((noise.unwrap() - 0.01).abs() < 1e-15);
        let (wild, _) = t.decode(&[-50.0, -30.0, 0.0, 0.0]);
        assert!(wild[1] > wild[0]);
    }
}
