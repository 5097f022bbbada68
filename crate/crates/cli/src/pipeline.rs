use std::io::Write as _;
use std::path::Path;

use anyhow::{bail, Context, Result};
use gpcompose::codegen::{emit_data_json, emit_program, EmitOptions};
use gpcompose::dsl::{parse_with_defaults, ParseDefaults};
use gpcompose::gp::{optimize_hyperparams, posterior_at, OptimizeConfig};
use gpcompose::search::{search, SearchTrace};
use gpcompose::{describe, render, KernelExpr, TimeSeriesDataset};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::config::{Mode, RunConfig, RunRecord, Versions};
use crate::ingest::{ingest, Series};
use crate::plot::{render_svg, PlotInput};

#[derive(Debug, Clone)]
pub struct Fitted {
    pub expr: KernelExpr,
    pub noise_variance: f64,
    pub trace: Option<SearchTrace>,
}

pub fn load(config: &RunConfig) -> Result<Series> {
    ingest(&config.input, &config.time_column, &config.value_column, config.split)
}

/// Search for a kernel, or fit (or keep) the given one.
pub fn fit_model(data: &TimeSeriesDataset, config: &RunConfig) -> Result<Fitted> {
    match &config.mode {
        Mode::Search => {
            let res = search(data, &config.search.to_search_config(config.seed)?)?;
            Ok(Fitted {
                expr: res.best.expr,
                noise_variance: res.best.noise_variance,
                trace: Some(res.trace),
            })
        }
        Mode::Fixed { kernel, no_fit } => {
            let (lo, hi) = data.train_range();
            let expr = parse_with_defaults(kernel, &ParseDefaults::for_range(lo, hi))?;
            if *no_fit {
                return Ok(Fitted { expr, noise_variance: config.search.noise, trace: None });
            }
            let opt = OptimizeConfig {
                restarts: config.search.restarts,
                max_iters: config.search.max_iters,
                seed: config.seed,
            };
            let fit = optimize_hyperparams(&expr, data, config.search.noise_policy(), &opt)?;
            Ok(Fitted { expr: fit.expr, noise_variance: fit.noise_variance, trace: None })
        }
    }
}

/// Two-sided standard normal quantile for a central interval.
pub fn zscore(level: f64) -> f64 {
    let n = Normal::new(0.0, 1.0).expect("unit normal");
    n.inverse_cdf(0.5 + 0.5 * level)
}

pub struct Predictions {
    pub times: Vec<f64>,
    pub mean: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

/// Predictive mean and interval at every time in the dataset, conditioned
/// on the training prefix.
pub fn predict(fitted: &Fitted, data: &TimeSeriesDataset, level: f64, latent_only: bool) -> Result<Predictions> {
    let post = posterior_at(
        &fitted.expr,
        data.train_times(),
        data.train_values(),
        data.times(),
        fitted.noise_variance,
    )?;
    let z = zscore(level);
    let sd = post.marginal_std(!latent_only);
    let mean: Vec<f64> = post.mean.iter().copied().collect();
    Ok(Predictions {
        times: data.times().to_vec(),
        lower: mean.iter().zip(sd.iter()).map(|(m, s)| m - z * s).collect(),
        upper: mean.iter().zip(sd.iter()).map(|(m, s)| m + z * s).collect(),
        mean,
    })
}

pub fn predictions_csv(p: &Predictions) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["time", "mean", "lower", "upper"])?;
    for i in 0..p.times.len() {
        w.write_record([p.times[i], p.mean[i], p.lower[i], p.upper[i]].map(|v| v.to_string()))?;
    }
    Ok(String::from_utf8(w.into_inner()?)?)
}

/// Write through a temporary file in the same directory, then rename.
pub fn write_atomic(dir: &Path, name: &str, contents: &[u8]) -> Result<()> {
    let mut tmp = tempfile::NamedTempFile::new_in(dir)
        .with_context(|| format!("cannot create a temporary file in {}", dir.display()))?;
    tmp.write_all(contents)?;
    tmp.as_file().sync_all()?;
    tmp.persist(dir.join(name))
        .with_context(|| format!("cannot write {}", dir.join(name).display()))?;
    Ok(())
}

fn prepare_output(config: &RunConfig) -> Result<()> {
    std::fs::create_dir_all(&config.output)
        .with_context(|| format!("cannot create output directory {}", config.output.display()))
}

fn write_model_summary(config: &RunConfig, fitted: &Fitted) -> Result<()> {
    let out = &config.output;
    write_atomic(out, "kernel.txt", format!("{}\n", render(&fitted.expr)).as_bytes())?;
    write_atomic(out, "description.txt", format!("{}\n", describe(&fitted.expr)).as_bytes())?;
    if let Some(trace) = &fitted.trace {
        let mut buf = Vec::new();
        trace.write_jsonl(&mut buf)?;
        write_atomic(out, "trace.jsonl", &buf)?;
    }
    Ok(())
}

fn write_program(config: &RunConfig, fitted: &Fitted, data: &TimeSeriesDataset) -> Result<()> {
    if data.n_test() == 0 {
        bail!("program emission needs a non-empty test split");
    }
    let options = EmitOptions::for_data(&fitted.expr, data, fitted.noise_variance)?;
    let prog = emit_program(&fitted.expr, data, &options)?;
    write_atomic(&config.output, "program.stan", prog.rendered.as_bytes())?;
    write_atomic(&config.output, "data.json", emit_data_json(data)?.as_bytes())?;
    Ok(())
}

fn write_run_record(config: &RunConfig) -> Result<()> {
    let rec = RunRecord {
        config: config.clone(),
        seed: config.seed,
        versions: Versions::current(),
    };
    let mut text = serde_json::to_string_pretty(&rec)?;
    text.push('\n');
    write_atomic(&config.output, "run.json", text.as_bytes())
}

/// `fit`: model selection only.
pub fn run_fit(config: &RunConfig) -> Result<Fitted> {
    config.validate()?;
    let series = load(config)?;
    prepare_output(config)?;
    let fitted = fit_model(&series.data, config)?;
    write_model_summary(config, &fitted)?;
    write_run_record(config)?;
    Ok(fitted)
}

/// `compile`: fixed kernel to program and data file.
pub fn run_compile(config: &RunConfig) -> Result<Fitted> {
    config.validate()?;
    if config.mode == Mode::Search {
        bail!("compile needs --kernel");
    }
    let series = load(config)?;
    prepare_output(config)?;
    let fitted = fit_model(&series.data, config)?;
    write_model_summary(config, &fitted)?;
    write_program(config, &fitted, &series.data)?;
    write_run_record(config)?;
    Ok(fitted)
}

/// `report`: the whole pipeline.
pub fn run_report(config: &RunConfig) -> Result<Fitted> {
    config.validate()?;
    let series = load(config)?;
    prepare_output(config)?;
    let data = &series.data;
    let fitted = fit_model(data, config)?;
    write_model_summary(config, &fitted)?;
    write_program(config, &fitted, data)?;
    let pred = predict(&fitted, data, config.interval_level, config.latent_only)?;
    write_atomic(&config.output, "predictions.csv", predictions_csv(&pred)?.as_bytes())?;
    let svg = render_svg(&PlotInput {
        times: data.times(),
        values: data.values(),
        n_train: data.n_train(),
        grid: &pred.times,
        mean: &pred.mean,
        lower: &pred.lower,
        upper: &pred.upper,
    });
    write_atomic(&config.output, "plot.svg", svg.as_bytes())?;
    write_run_record(config)?;
    Ok(fitted)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zscore_for_95_percent() {
        assert!((zscore(0.95) - 1.959964).abs() < 1e-6);
        assert!((zscore(0.5) - 0.6744897501960817).abs() < 1e-9);
    }

    #[test]
    fn csv_has_four_columns() {
        let p = Predictions { times: vec![0.0, 1.5], mean: vec![1.0, 2.0], lower: vec![0.0, 1.0], upper: vec![2.0, 3.0] };
        assert_eq!(predictions_csv(&p).unwrap(), "time,mean,lower,upper\n0,1,0,2\n1.5,2,1,3\n");
    }

    #[test]
    fn atomic_write_replaces() {
        let dir = tempfile::tempdir().unwrap();
        write_atomic(dir.path(), "a.txt", b"one").unwrap();
        write_atomic(dir.path(), "a.txt", b"two").unwrap();
        assert_eq!(std::fs::read(dir.path().join("a.txt")).unwrap(), b"two");
        assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 1);
    }
}
