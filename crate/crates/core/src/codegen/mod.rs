//! Stan program emission for a kernel and a dataset.
//!
//! The program conditions a GP on `(x1, y1)` and draws `y2` at `x2` as
//! `mu + L * z` with `z` standard normal. Hyperparameters, the noise variance
//! and the jitter are inlined as literals.

mod interp;

use std::collections::BTreeSet;
use std::fmt::Write as _;

use serde::Serialize;

use crate::algebra::{simplify, CanonicalKernel, ProductTerm, Side, Weight};
use crate::dsl::{BaseKernel, BaseKind, KernelExpr};
use crate::error::{Error, Result};
use crate::gp::{posterior, sample_moments, sample_mvn, TimeSeriesDataset};

pub use interp::ProgramGrams;

/// Output language. Only one backend exists.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Dialect {
    #[default]
    Stan2,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EmitOptions {
    pub noise_variance: f64,
    /// Diagonal jitter added before both Cholesky factorizations.
    pub jitter: f64,
    pub dialect: Dialect,
}

impl EmitOptions {
    pub fn new(noise_variance: f64, jitter: f64) -> EmitOptions {
        EmitOptions {
            noise_variance,
            jitter,
            dialect: Dialect::Stan2,
        }
    }

    /// Jitter large enough for the engine's own factorizations of this
    /// posterior, and at least `1e-10` times the mean prior variance at `x2`.
    pub fn for_data(expr: &KernelExpr, data: &TimeSeriesDataset, noise_variance: f64) -> Result<EmitOptions> {
        let post = posterior(expr, data, noise_variance)?;
        let kss = crate::gp::gram(expr, data.test_times(), data.test_times());
        let floor = 1e-10 * kss.diagonal().mean().abs().max(f64::MIN_POSITIVE);
        let jitter = post.jitter.max(post.train_jitter).max(floor);
        Ok(EmitOptions::new(noise_variance, jitter))
    }
}

/// A named numeric literal that appears in the program text.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Literal {
    pub name: String,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct Manifest {
    pub functions: Vec<String>,
    pub literals: Vec<Literal>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmittedProgram {
    pub functions_block: String,
    pub data_block: String,
    pub parameters_block: String,
    pub transformed_parameters_block: String,
    pub model_block: String,
    pub generated_quantities_block: String,
    pub rendered: String,
    pub manifest: Manifest,
}

/// Block headers in program order.
pub const SECTIONS: [&str; 6] = [
    "functions",
    "data",
    "parameters",
    "transformed parameters",
    "model",
    "generated quantities",
];

pub const SIGMOID_FUNCTION: &str = "sigmoid_weight";

/// Literal with 17 significant digits.
pub fn literal(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn kernel_function_name(kind: BaseKind) -> String {
    format!("kernel_{}", kind.name().to_ascii_lowercase())
}

fn kernel_function(kind: BaseKind) -> String {
    let name = kernel_function_name(kind);
    let (params, body) = match kind {
        BaseKind::WhiteNoise => ("real variance", "x1[i] == x2[j] ? variance : 0"),
        BaseKind::Constant => ("real variance", "variance"),
        BaseKind::Linear => ("real variance, real offset", "variance * (x1[i] - offset) * (x2[j] - offset)"),
        BaseKind::SquaredExp => (
            "real variance, real lengthscale",
            "variance * exp(-square(x1[i] - x2[j]) / (2 * square(lengthscale)))",
        ),
        BaseKind::Periodic => (
            "real variance, real lengthscale, real period",
            "variance * (exp(a * (cos(2 * pi() * (x1[i] - x2[j]) / period) - 1)) - b) / (1 - b)",
        ),
    };
    let mut s = String::new();
    writeln!(s, "  matrix {name}(vector x1, vector x2, {params}) {{").unwrap();
    s.push_str("    int n1 = rows(x1);\n    int n2 = rows(x2);\n    matrix[n1, n2] k;\n");
    if kind == BaseKind::Periodic {
        // exponentially scaled I0 keeps large 1/l^2 finite
        s.push_str("    real a = inv_square(lengthscale);\n");
        s.push_str("    real b = exp(log_modified_bessel_first_kind(0, a) - a);\n");
    }
    s.push_str("    for (i in 1:n1) {\n      for (j in 1:n2) {\n");
    writeln!(s, "        k[i, j] = {body};").unwrap();
    s.push_str("      }\n    }\n    return k;\n  }\n");
    s
}

fn sigmoid_function() -> String {
    format!(
        "  // close to 1 before location, close to 0 after\n  vector {SIGMOID_FUNCTION}(vector x, real location, real steepness) {{\n    return 0.5 * (1 + tanh((location - x) / steepness));\n  }}\n"
    )
}

fn term_kinds(term: &ProductTerm) -> impl Iterator<Item = BaseKind> + '_ {
    term.core
        .factors()
        .into_iter()
        .map(|b| b.kind())
        .chain(term.lin_offsets.iter().map(|_| BaseKind::Linear))
}

/// One function per base kind used, plus the sigmoid helper if any term is weighted.
pub fn emit_kernel_functions(canon: &CanonicalKernel) -> String {
    let body = kernel_function_set(canon)
        .iter()
        .map(|f| match BaseKind::ALL.iter().find(|k| kernel_function_name(**k) == *f) {
            Some(&k) => kernel_function(k),
            None => sigmoid_function(),
        })
        .collect::<Vec<_>>()
        .join("\n");
    format!("functions {{\n{body}}}\n")
}

fn kernel_function_set(canon: &CanonicalKernel) -> Vec<String> {
    let used: BTreeSet<BaseKind> = canon.terms.iter().flat_map(term_kinds).collect();
    let mut names: Vec<String> = BaseKind::ALL
        .iter()
        .filter(|k| used.contains(k))
        .map(|&k| kernel_function_name(k))
        .collect();
    if canon.has_weights() {
        names.push(SIGMOID_FUNCTION.to_string());
    }
    names
}

/// Declarations only; values go in the companion data file.
pub fn emit_data_block(data: &TimeSeriesDataset) -> Result<String> {
    require_test(data)?;
    Ok("data {\n  int<lower=1> N1;\n  vector[N1] x1;\n  vector[N1] y1;\n  int<lower=1> N2;\n  vector[N2] x2;\n}\n".to_string())
}

fn require_test(data: &TimeSeriesDataset) -> Result<()> {
    if data.n_test() == 0 {
        return Err(Error::InvalidDataset("program emission needs at least one test point".into()));
    }
    Ok(())
}

/// Companion data file contents.
#[derive(Debug, Serialize)]
#[allow(non_snake_case)]
struct DataFile<'a> {
    N1: usize,
    x1: &'a [f64],
    y1: &'a [f64],
    N2: usize,
    x2: &'a [f64],
}

/// JSON with keys `N1`, `x1`, `y1`, `N2`, `x2`; numbers round-trip exactly.
pub fn emit_data_json(data: &TimeSeriesDataset) -> Result<String> {
    require_test(data)?;
    let file = DataFile {
        N1: data.n_train(),
        x1: data.train_times(),
        y1: data.train_values(),
        N2: data.n_test(),
        x2: data.test_times(),
    };
    let mut s = serde_json::to_string_pretty(&file).map_err(|e| Error::ProgramFormat(e.to_string()))?;
    s.push('\n');
    Ok(s)
}

/// Weight vector over `x`.
fn weight_vector(w: &Weight, x: &str) -> String {
    let sig = |loc: f64, s: f64| format!("{SIGMOID_FUNCTION}({x}, {}, {})", literal(loc), literal(s));
    match *w {
        Weight::Sigmoid(f) => match f.side {
            Side::Before => sig(f.location, f.steepness),
            Side::After => format!("(1 - {})", sig(f.location, f.steepness)),
        },
        Weight::OutsideWindow { start, end, steepness } => format!(
            "(1 - (1 - {}) .* {})",
            sig(start, steepness),
            sig(end, steepness)
        ),
    }
}

fn base_call(b: &BaseKernel, rows: &str, cols: &str) -> String {
    let args: Vec<String> = b.params().iter().map(|(_, v, _)| literal(*v)).collect();
    format!("{}({rows}, {cols}, {})", kernel_function_name(b.kind()), args.join(", "))
}

fn term_factors(term: &ProductTerm) -> Vec<BaseKernel> {
    let mut f = term.core.factors();
    f.extend(term.lin_offsets.iter().map(|&offset| BaseKernel::Linear { variance: 1.0, offset }));
    f
}

/// Gram expression: a sum over terms of Hadamard products of kernel calls,
/// with each weight applied as the outer product `g(rows) g(cols)'`.
fn gram_expr(canon: &CanonicalKernel, rows: &str, cols: &str) -> String {
    let terms: Vec<String> = canon
        .terms
        .iter()
        .map(|t| {
            let mut parts: Vec<String> = t.weights.iter().map(|w| {
                format!("({} * {}')", weight_vector(w, rows), weight_vector(w, cols))
            }).collect();
            parts.extend(term_factors(t).iter().map(|b| base_call(b, rows, cols)));
            parts.join(" .* ")
        })
        .collect();
    terms.join("\n      + ")
}

fn manifest_literals(canon: &CanonicalKernel, options: &EmitOptions) -> Vec<Literal> {
    let mut out = Vec::new();
    for (i, t) in canon.terms.iter().enumerate() {
        for (j, w) in t.weights.iter().enumerate() {
            let names: Vec<(&str, f64)> = match *w {
                Weight::Sigmoid(f) => vec![("location", f.location), ("steepness", f.steepness)],
                Weight::OutsideWindow { start, end, steepness } => {
                    vec![("start", start), ("end", end), ("steepness", steepness)]
                }
            };
            for (n, v) in names {
                out.push(Literal { name: format!("term{i}.weight{j}.{n}"), value: v });
            }
        }
        for (j, b) in term_factors(t).iter().enumerate() {
            for (n, v, _) in b.params() {
                out.push(Literal {
                    name: format!("term{i}.{}{j}.{n}", b.kind().name().to_ascii_lowercase()),
                    value: v,
                });
            }
        }
    }
    out.push(Literal { name: "noise".into(), value: options.noise_variance });
    out.push(Literal { name: "jitter".into(), value: options.jitter });
    out
}

/// Parameters, transformed parameters, model and generated quantities blocks.
pub fn emit_model_core(
    canon: &CanonicalKernel,
    data: &TimeSeriesDataset,
    options: &EmitOptions,
) -> Result<(String, String, String, String)> {
    require_test(data)?;
    if canon.terms.is_empty() {
        return Err(Error::MalformedExpr("kernel has no terms".into()));
    }
    let parameters = "parameters {\n  vector[N2] z;\n}\n".to_string();
    let mut tp = String::from("transformed parameters {\n");
    writeln!(tp, "  matrix[N1, N1] Sigma = {};", gram_expr(canon, "x1", "x1")).unwrap();
    writeln!(tp, "  matrix[N2, N2] Omega = {};", gram_expr(canon, "x2", "x2")).unwrap();
    writeln!(tp, "  matrix[N1, N2] K = {};", gram_expr(canon, "x1", "x2")).unwrap();
    tp.push_str("  vector[N2] mu;\n  matrix[N2, N2] L;\n  {\n");
    writeln!(tp, "    real noise = {};", literal(options.noise_variance)).unwrap();
    writeln!(tp, "    real jitter = {};", literal(options.jitter)).unwrap();
    tp.push_str(concat!(
        "    matrix[N1, N1] L_Sigma = cholesky_decompose(add_diag(Sigma, noise + jitter));\n",
        "    matrix[N1, N2] v = mdivide_left_tri_low(L_Sigma, K);\n",
        "    vector[N1] a = mdivide_left_tri_low(L_Sigma, y1);\n",
        "    matrix[N2, N2] C = Omega - v' * v;\n",
        "    mu = v' * a;\n",
        "    L = cholesky_decompose(add_diag(0.5 * (C + C'), jitter));\n",
        "  }\n}\n",
    ));
    let model = "model {\n  z ~ std_normal();\n}\n".to_string();
    let generated = "generated quantities {\n  vector[N2] y2 = mu + L * z;\n}\n".to_string();
    Ok((parameters, tp, model, generated))
}

/// Complete program. Pure: the same inputs give byte-identical text.
pub fn emit_program(expr: &KernelExpr, data: &TimeSeriesDataset, options: &EmitOptions) -> Result<EmittedProgram> {
    expr.validate()?;
    for (name, v) in [("noise_variance", options.noise_variance), ("jitter", options.jitter)] {
        if !(v.is_finite() && v >= 0.0) {
            return Err(Error::InvalidHyperparameter { name: name.into(), value: v, reason: "must be finite and non-negative" });
        }
    }
    let canon = simplify(expr);
    let functions_block = emit_kernel_functions(&canon);
    let data_block = emit_data_block(data)?;
    let (parameters_block, transformed_parameters_block, model_block, generated_quantities_block) =
        emit_model_core(&canon, data, options)?;
    let rendered = [
        &functions_block,
        &data_block,
        &parameters_block,
        &transformed_parameters_block,
        &model_block,
        &generated_quantities_block,
    ]
    .map(String::as_str)
    .join("\n");
    Ok(EmittedProgram {
        manifest: Manifest {
            functions: kernel_function_set(&canon),
            literals: manifest_literals(&canon, options),
        },
        functions_block,
        data_block,
        parameters_block,
        transformed_parameters_block,
        model_block,
        generated_quantities_block,
        rendered,
    })
}

/// Outcome of [`validate_semantics`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SemanticsReport {
    pub n_draws: usize,
    /// Largest `|mean error| / sqrt((Σii + jitter) / n)` over components.
    pub max_mean_z: f64,
    /// `‖cov error‖_F / ‖Σ‖_F`.
    pub cov_rel_error: f64,
    /// Largest absolute difference between the program's `mu` and the engine's.
    pub max_mu_diff: f64,
}

/// Allowed mean deviation in Monte Carlo standard errors.
pub const MEAN_Z_TOL: f64 = 3.0;
/// Allowed relative Frobenius covariance error.
pub const COV_REL_TOL: f64 = 0.05;

/// Run the program's own Gram expressions and literals through `mu + L z`
/// and compare the sample moments with the engine's analytic posterior.
pub fn validate_semantics(
    prog: &EmittedProgram,
    expr: &KernelExpr,
    data: &TimeSeriesDataset,
    n_draws: usize,
    seed: u64,
) -> Result<SemanticsReport> {
    if n_draws < 2 {
        return Err(Error::SemanticsMismatch("need at least two draws".into()));
    }
    let grams = ProgramGrams::evaluate(prog, data)?;
    let (mu, l) = grams.mu_and_factor()?;
    let reference = posterior(expr, data, grams.noise)?;
    let draws = sample_mvn(&mu, &l, n_draws, seed);
    let (mean, cov) = sample_moments(&draws);
    let n = n_draws as f64;
    let mut max_mean_z: f64 = 0.0;
    for i in 0..mean.len() {
        let se = ((reference.covariance[(i, i)].max(0.0) + grams.jitter) / n).sqrt();
        let dev = (mean[i] - reference.mean[i]).abs();
        let z = if se > 0.0 {
            dev / se
        } else if dev <= 1e-12 * (1.0 + reference.mean[i].abs()) {
            0.0
        } else {
            f64::INFINITY
        };
        max_mean_z = max_mean_z.max(z);
    }
    let err = (&cov - &reference.covariance).norm();
    let scale = reference.covariance.norm();
    // jitter adds jitter·I to the sampled covariance
    let slack = 2.0 * grams.jitter * (mean.len() as f64).sqrt();
    let cov_rel_error = if scale > 0.0 {
        (err - slack).max(0.0) / scale
    } else if err <= slack + 1e-12 {
        0.0
    } else {
        f64::INFINITY
    };
    let report = SemanticsReport {
        n_draws,
        max_mean_z,
        cov_rel_error,
        max_mu_diff: (&mu - &reference.mean).amax(),
    };
    if !(report.max_mean_z <= MEAN_Z_TOL && report.cov_rel_error <= COV_REL_TOL) {
        return Err(Error::SemanticsMismatch(format!(
            "mean deviation {:.3} standard errors, covariance relative error {:.4}",
            report.max_mean_z, report.cov_rel_error
        )));
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsl::parse;

    fn toy() -> TimeSeriesDataset {
        TimeSeriesDataset::new(vec![0.0, 0.5, 1.0, 1.5, 2.0], vec![0.1, 0.4, 0.2, -0.3, 0.0], 3).unwrap()
    }

    fn emit(text: &str, noise: f64) -> EmittedProgram {
        let e = parse(text).unwrap();
        emit_program(&e, &toy(), &EmitOptions::new(noise, 1e-10)).unwrap()
    }

    #[test]
    fn se_only_gives_one_function() {
        let p = emit("SE", 0.1);
        assert_eq!(p.manifest.functions, vec!["kernel_se"]);
        assert_eq!(p.functions_block.matches("matrix kernel_").count(), 1);
        assert!(p.transformed_parameters_block.contains("Sigma = kernel_se(x1, x1, "));
        assert!(!p.transformed_parameters_block.contains(".*"));
    }

    #[test]
    fn repeated_kind_is_emitted_once() {
        let p = emit("SE[lengthscale=2] + SE[lengthscale=0.1] * LIN", 0.1);
        assert_eq!(p.manifest.functions, vec!["kernel_lin", "kernel_se"]);
        assert_eq!(p.functions_block.matches("matrix kernel_se(").count(), 1);
    }

    #[test]
    fn sum_gives_one_call_per_term() {
        let p = emit("SE + C", 0.1);
        let sigma = p.transformed_parameters_block.lines().skip(1).take(2).collect::<Vec<_>>().join("\n");
        assert_eq!(sigma.matches("kernel_").count(), 2);
    }

    #[test]
    fn flagship_functions() {
        let p = emit("CW(SE + CW(WN + SE, WN), C)", 0.1);
        assert_eq!(p.manifest.functions, vec!["kernel_wn", "kernel_c", "kernel_se", SIGMOID_FUNCTION]);
    }

    #[test]
    fn sections_in_order() {
        let p = emit("SE * PER", 0.1);
        let mut pos = 0;
        for s in SECTIONS {
            let header = format!("{s} {{\n");
            let at = p.rendered[pos..].find(&header).map(|i| i + pos);
            let at = at.unwrap_or_else(|| panic!("missing {s}"));
            assert!(at == 0 || p.rendered.as_bytes()[at - 1] == b'\n');
            pos = at + header.len();
        }
        assert!(p.rendered.contains("vector[N2] z;"));
        assert!(p.rendered.contains("y2 = mu + L * z;"));
        assert!(!p.rendered.contains('\r'));
    }

    #[test]
    fn literals_keep_17_digits() {
        assert_eq!(literal(0.1), "1.0000000000000001e-1");
        assert_eq!(literal(1.0 / 3.0).parse::<f64>().unwrap(), 1.0 / 3.0);
        let p = emit("SE[lengthscale=0.123456789012345678]", 0.1);
        assert!(p.rendered.contains("1.2345678901234568e-1"));
    }

    #[test]
    fn emission_is_deterministic() {
        assert_eq!(emit("CP(SE, PER) * LIN", 0.2), emit("CP(SE, PER) * LIN", 0.2));
    }

    #[test]
    fn data_file_keys_and_values() {
        let json = emit_data_json(&toy()).unwrap();
        let v: serde_json::Value = serde_json::from_str(&json).unwrap();
        let keys: Vec<&String> = v.as_object().unwrap().keys().collect();
        assert_eq!(keys.len(), 5);
        assert_eq!(v["N1"], 3);
        assert_eq!(v["N2"], 2);
        assert_eq!(v["x2"][1], 2.0);
        let order: Vec<usize> = ["\"N1\"", "\"x1\"", "\"y1\"", "\"N2\"", "\"x2\""].iter().map(|k| json.find(k).unwrap()).collect();
        assert!(order.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn no_test_points_is_rejected() {
        let d = TimeSeriesDataset::train_only(vec![0.0, 1.0], vec![0.0, 1.0]).unwrap();
        assert!(emit_data_block(&d).is_err());
        assert!(emit_program(&parse("SE").unwrap(), &d, &EmitOptions::new(0.1, 0.0)).is_err());
    }

    #[test]
    fn single_test_point() {
        let d = toy().with_test_count(1).unwrap();
        let p = emit_program(&parse("SE").unwrap(), &d, &EmitOptions::new(0.1, 1e-10)).unwrap();
        assert!(p.data_block.contains("vector[N2] x2;"));
        validate_semantics(&p, &parse("SE").unwrap(), &d, 20_000, 1).unwrap();
    }

    #[test]
    fn semantics_hold_for_weighted_kernels() {
        let e = parse("CW(SE + CW(WN + SE, WN), C)[start=0.4, end=1.6, steepness=0.2] + CP(LIN, PER)[location=1, steepness=0.3]").unwrap();
        let p = emit_program(&e, &toy(), &EmitOptions::for_data(&e, &toy(), 0.05).unwrap()).unwrap();
        let r = validate_semantics(&p, &e, &toy(), 50_000, 3).unwrap();
        assert!(r.max_mu_diff < 1e-9, "{r:?}");
    }

    #[test]
    fn corrupted_literal_is_detected() {
        let e = parse("SE[lengthscale=0.7]").unwrap();
        let p = emit_program(&e, &toy(), &EmitOptions::new(0.01, 1e-10)).unwrap();
        let bad = literal(0.7);
        let mut broken = p.clone();
        broken.transformed_parameters_block = p.transformed_parameters_block.replacen(&bad, &literal(2.1), 1);
        assert_ne!(broken.transformed_parameters_block, p.transformed_parameters_block);
        let err = validate_semantics(&broken, &e, &toy(), 50_000, 0).unwrap_err();
        assert_eq!(err.kind(), "semantics_mismatch");
    }

    #[test]
    fn degenerate_posterior_draws_equal_mean() {
        // one noiseless observation of a constant pins the test value exactly
        let d = TimeSeriesDataset::new(vec![0.0, 1.0], vec![1.0, 0.0], 1).unwrap();
        let e = parse("C[variance=4]").unwrap();
        let p = emit_program(&e, &d, &EmitOptions::new(0.0, 1e-12)).unwrap();
        let g = ProgramGrams::evaluate(&p, &d).unwrap();
        let (mu, l) = g.mu_and_factor().unwrap();
        assert!((mu[0] - 1.0).abs() < 1e-11);
        for draw in sample_mvn(&mu, &l, 1000, 5).iter() {
            assert!((draw - 1.0).abs() < 1e-5);
        }
        validate_semantics(&p, &e, &d, 1000, 5).unwrap();
    }
}
