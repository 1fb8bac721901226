use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand, ValueEnum};
use nalgebra::DMatrix;
use serde_json::json;

use hgmm::analysis::{
    em_baseline, generate_synthetic, geweke_prior, getting_it_right, informative_prior, pca_biplot, population_sizes,
    recovery_table, summarize, EmConfig, GeneratorSpec, GewekeConfig, GroundTruth,
};
use hgmm::dist::RngStream;
use hgmm::error::exit_code;
use hgmm::io::{read_json, read_sample, write_json, ArtifactManifest, RunConfig};
use hgmm::mcmc::trace_io::{read_trace, write_trace, TraceManifest};
use hgmm::mcmc::{run_chain, Mutation};
use hgmm::merge::{merge_clusters, population_quantiles, soft_cluster_weights, QUANTILE_LEVELS};
use hgmm::model::{CellMatrix, Dataset};
use hgmm::{Error, Result};

#[derive(Parser)]
#[command(name = "hgmm", version, about = "Hierarchical Gaussian mixtures for grouped cytometry samples")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Preset {
    /// 80 samples of 15000 cells (times --scale), four clusters in 3-D.
    Reference,
    /// 20 samples of 2000 cells with the same clusters.
    Desk,
}

#[derive(Subcommand)]
enum Command {
    /// Draw a synthetic dataset with known parameters.
    Simulate {
        #[arg(long, conflicts_with = "spec", required_unless_present = "spec")]
        preset: Option<Preset>,
        /// Cell-count multiplier for the reference preset.
        #[arg(long, default_value_t = 1.0)]
        scale: f64,
        /// Generator specification (JSON).
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long, default_value_t = 2024)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the sampler as described by a TOML run configuration.
    Fit {
        #[arg(long)]
        config: PathBuf,
        /// Override `[output] dir`.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Override `[mcmc] workers`.
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Merge the clusters of a fitted trace into populations.
    Merge {
        #[arg(long)]
        trace: PathBuf,
        #[arg(long)]
        config: PathBuf,
        /// Defaults to `<trace>/merge`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Posterior means and 95% intervals, optionally against the truth.
    Summarize {
        #[arg(long)]
        trace: PathBuf,
        /// `truth.json` written by `simulate`.
        #[arg(long)]
        truth: Option<PathBuf>,
        /// Defaults to `<trace>/summary`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Principal components of per-sample population sizes.
    Pca {
        /// `population_sizes.csv` written by `merge`.
        #[arg(long)]
        populations: PathBuf,
        /// Defaults to the directory of the input.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Getting-it-right check of the sampler; prints a JSON report.
    Validate {
        #[arg(long, default_value_t = 10_000)]
        iterations: usize,
        #[arg(long, default_value_t = 2)]
        seed: u64,
        /// Run with a deliberately broken update, e.g. `drop_sigma_prior_dof`.
        #[arg(long)]
        mutation: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Fit one sample by EM for comparison with the hierarchical model.
    EmBaseline {
        #[arg(long)]
        sample: PathBuf,
        #[arg(long)]
        k: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 10)]
        restarts: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn args() -> Vec<String> {
    std::env::args().skip(1).collect()
}

fn csv_writer(path: &Path) -> Result<csv::Writer<std::fs::File>> {
    Ok(csv::Writer::from_path(path)?)
}

fn num(v: f64) -> String {
    format!("{v:?}")
}

fn opt(v: Option<usize>) -> String {
    v.map_or_else(String::new, |x| x.to_string())
}

fn simulate(preset: Option<Preset>, scale: f64, spec: Option<PathBuf>, seed: u64, out: &Path) -> Result<()> {
    let spec = match (preset, &spec) {
        (_, Some(p)) => read_json::<GeneratorSpec>(p)?,
        (Some(Preset::Reference), None) => {
            if !(scale > 0.0) {
                return Err(Error::Config("--scale must be positive".into()));
            }
            GeneratorSpec::reference(scale)
        }
        (Some(Preset::Desk), None) => GeneratorSpec::desk(),
        (None, None) => return Err(Error::Config("give --preset or --spec".into())),
    };
    let (data, truth) = generate_synthetic(&spec, &mut RngStream::new(seed, 0))?;
    // zero-padded ids keep file-name order equal to sample order
    let width = data.num_samples().to_string().len();
    let ids: Vec<String> = (1..=data.num_samples()).map(|j| format!("sample_{j:0width$}")).collect();
    let markers = (1..=spec.dim()).map(|m| format!("x{m}")).collect();
    let data = Dataset::new(data.samples().to_vec(), markers, ids.clone())?;
    std::fs::create_dir_all(out)?;
    hgmm::io::save_dataset(&data, &out.join("data"))?;
    write_json(&out.join("generator.json"), &spec)?;
    write_json(&out.join("truth.json"), &truth)?;
    write_json(&out.join("prior.json"), &informative_prior(&truth, &data))?;

    let mut w = csv_writer(&out.join("truth_parameters.csv"))?;
    w.write_record(["parameter", "k", "j", "coordinate", "value"])?;
    let d = spec.dim();
    for (k, l) in truth.latent.iter().enumerate() {
        let kk = (k + 1).to_string();
        for a in 0..d {
            w.write_record(["theta", &kk, "", &a.to_string(), &num(l.theta[a])])?;
        }
        let cov = l.latent_covariance();
        for a in 0..d {
            for b in a..d {
                w.write_record(["latent_cov", &kk, "", &format!("{a}_{b}"), &num(cov[(a, b)])])?;
            }
        }
        w.write_record(["nu", &kk, "", "", &l.nu.to_string()])?;
    }
    for (j, s) in truth.samples.iter().enumerate() {
        let jj = j.to_string();
        w.write_record(["pi", "0", &jj, "", &num(s.pi[0])])?;
        for k in 0..s.mu.len() {
            let kk = (k + 1).to_string();
            w.write_record(["active", &kk, &jj, "", if s.active[k] { "1" } else { "0" }])?;
            w.write_record(["pi", &kk, &jj, "", &num(s.pi[k + 1])])?;
            for a in 0..d {
                w.write_record(["mu", &kk, &jj, &a.to_string(), &num(s.mu[k][a])])?;
            }
            for a in 0..d {
                for b in a..d {
                    w.write_record(["sigma", &kk, &jj, &format!("{a}_{b}"), &num(s.sigma[k][(a, b)])])?;
                }
            }
        }
    }
    w.flush()?;

    let mut w = csv_writer(&out.join("truth_assignments.csv"))?;
    w.write_record(["sample", "cell", "component"])?;
    for (id, s) in ids.iter().zip(&truth.samples) {
        for (i, x) in s.assignments.iter().enumerate() {
            w.write_record([id.as_str(), &i.to_string(), &x.to_string()])?;
        }
    }
    w.flush()?;

    // a ready-to-run configuration for the informative prior
    let k = spec.clusters.len();
    std::fs::write(
        out.join("fit.toml"),
        format!(
            "[data]\nsample_dir = \"data\"\nscale = false\n\n[prior]\nfile = \"prior.json\"\nclusters = {k}\n\n\
             [mcmc]\nburn_in = 2000\nproduction = 10000\nthin = 10\nseed = 1\n\n[merge]\n\n[output]\ndir = \"fit\"\n"
        ),
    )?;

    let mut m = ArtifactManifest::new("simulate", args(), serde_json::to_value(&spec)?, vec![seed]);
    m.files = ["data/", "generator.json", "truth.json", "prior.json", "truth_parameters.csv", "truth_assignments.csv", "fit.toml"]
        .map(String::from)
        .to_vec();
    m.write(out)?;
    eprintln!("wrote {} samples ({} cells) to {}", data.num_samples(), data.total_cells(), out.display());
    Ok(())
}

fn fit(config: &Path, out: Option<PathBuf>, workers: Option<usize>) -> Result<()> {
    let mut cfg = RunConfig::load(config)?;
    if let Some(o) = out {
        cfg.output.dir = o;
    }
    if let Some(w) = workers {
        cfg.mcmc.workers = w;
    }
    let prepared = cfg.prepare_data()?;
    let prior = cfg.build_prior(&prepared.data)?;
    log::info!(
        "fitting K = {} to {} samples, {} cells",
        prior.num_clusters(),
        prepared.data.num_samples(),
        prepared.data.total_cells()
    );
    let start = Instant::now();
    let trace = run_chain(&prepared.data, &prior, &cfg.mcmc)?;
    let wall = start.elapsed().as_secs_f64();
    let manifest = TraceManifest::new(&trace, &prior, &cfg.mcmc).with_run_config(args(), serde_json::to_value(&cfg)?);
    let dir = &cfg.output.dir;
    write_trace(dir, &trace, &manifest)?;
    if let Some(t) = &prepared.scaling {
        write_json(&dir.join("scaling.json"), t)?;
    }
    write_json(
        &dir.join("run.json"),
        &json!({
            "seed": cfg.mcmc.seed,
            "workers": cfg.mcmc.workers,
            "wall_time_seconds": wall,
            "nu_acceptance_rates": trace.diagnostics.nu_acceptance_rates(),
            "sample_ids": prepared.data.sample_ids(),
            "markers": prepared.data.marker_names(),
        }),
    )?;
    eprintln!("wrote {} draws to {} in {wall:.1}s", trace.draws.len(), dir.display());
    Ok(())
}

fn merge(trace_dir: &Path, config: &Path, out: Option<PathBuf>) -> Result<()> {
    let cfg = RunConfig::load(config)?;
    let (trace, manifest) = read_trace(trace_dir)?;
    let prepared = cfg.prepare_data()?;
    let data = prepared.data;
    if data.sizes() != manifest.sample_sizes {
        return Err(Error::Data(format!(
            "data sample sizes {:?} do not match the trace {:?}",
            data.sizes(),
            manifest.sample_sizes
        )));
    }
    cfg.merge.validate(data.dim())?;
    let weights = soft_cluster_weights(&trace)?;
    let result = merge_clusters(&weights, &data, &cfg.merge)?;
    let out = out.unwrap_or_else(|| trace_dir.join("merge"));
    std::fs::create_dir_all(&out)?;
    write_json(&out.join("merge.json"), &result)?;

    let mut w = csv_writer(&out.join("partition.csv"))?;
    w.write_record(["cluster", "population"])?;
    for (k, p) in result.partition.iter().enumerate() {
        w.write_record([(k + 1).to_string(), p.to_string()])?;
    }
    w.flush()?;

    let mut w = csv_writer(&out.join("merge_log.csv"))?;
    w.write_record(["step", "left", "right", "distance", "criterion", "min_p_value"])?;
    for (i, s) in result.merge_log.iter().enumerate() {
        let join = |v: &[usize]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(" ");
        let p = s.tests.iter().map(|t| t.p_value).fold(f64::NAN, f64::min);
        w.write_record([
            (i + 1).to_string(),
            join(&s.left),
            join(&s.right),
            num(s.distance),
            format!("{:?}", s.criterion).to_lowercase(),
            if p.is_nan() { String::new() } else { num(p) },
        ])?;
    }
    w.flush()?;

    let sizes = population_sizes(&trace, &result.partition)?;
    let mut w = csv_writer(&out.join("population_sizes.csv"))?;
    let m = result.num_populations();
    let mut header = vec!["sample".to_string(), "outlier".to_string()];
    header.extend((1..=m).map(|p| format!("pop_{p}")));
    w.write_record(&header)?;
    for (j, id) in data.sample_ids().iter().enumerate() {
        let mut row = vec![id.clone(), num(sizes.outlier[j])];
        row.extend((0..m).map(|p| num(sizes.sizes[(j, p)])));
        w.write_record(&row)?;
    }
    w.flush()?;

    if let Some(sw) = &result.soft_weights {
        let q = population_quantiles(sw, &data, &QUANTILE_LEVELS)?;
        let mut w = csv_writer(&out.join("population_quantiles.csv"))?;
        let mut header = vec!["population".to_string(), "level".to_string()];
        header.extend(data.marker_names().iter().cloned());
        w.write_record(&header)?;
        for pq in &q {
            for (l, level) in pq.levels.iter().enumerate() {
                let mut row = vec![pq.population.to_string(), num(*level)];
                row.extend(pq.values[l].iter().map(|v| num(*v)));
                w.write_record(&row)?;
            }
        }
        w.flush()?;
    }

    let params = json!({ "merge": cfg.merge, "trace_config_hash": manifest.config_hash });
    let mut mf = ArtifactManifest::new("merge", args(), params, vec![cfg.merge.dip_seed]);
    mf.files = ["merge.json", "partition.csv", "merge_log.csv", "population_sizes.csv", "population_quantiles.csv"]
        .map(String::from)
        .to_vec();
    mf.write(&out)?;
    eprintln!("{} clusters merged into {} populations; wrote {}", trace.num_clusters, m, out.display());
    Ok(())
}

fn summarize_cmd(trace_dir: &Path, truth: Option<PathBuf>, out: Option<PathBuf>) -> Result<()> {
    let (trace, manifest) = read_trace(trace_dir)?;
    let summary = summarize(&trace)?;
    let out = out.unwrap_or_else(|| trace_dir.join("summary"));
    std::fs::create_dir_all(&out)?;
    write_json(&out.join("summary.json"), &summary)?;
    let mut w = csv_writer(&out.join("summary.csv"))?;
    w.write_record(["parameter", "k", "j", "coordinate", "mean", "lower", "upper"])?;
    for r in summary.rows() {
        w.write_record([r.parameter, r.k.to_string(), opt(r.j), r.coordinate, num(r.mean), num(r.lower), num(r.upper)])?;
    }
    w.flush()?;

    let mut w = csv_writer(&out.join("activation.csv"))?;
    w.write_record(["j", "k", "probability"])?;
    for j in 0..trace.num_samples() {
        for k in 0..trace.num_clusters {
            w.write_record([j.to_string(), (k + 1).to_string(), num(trace.activation_probability(j, k))])?;
        }
    }
    w.flush()?;

    let mut files = vec!["summary.json", "summary.csv", "activation.csv"];
    if let Some(path) = &truth {
        let truth: GroundTruth = read_json(path)?;
        let table = recovery_table(&summary, &truth)?;
        let mut w = csv_writer(&out.join("recovery.csv"))?;
        w.write_record([
            "parameter",
            "k",
            "j",
            "coordinate",
            "truth",
            "estimate",
            "difference",
            "lower_difference",
            "upper_difference",
            "covered",
        ])?;
        for r in &table.rows {
            w.write_record([
                r.parameter.clone(),
                r.k.to_string(),
                opt(r.j),
                r.coordinate.clone(),
                num(r.truth),
                num(r.estimate),
                num(r.difference),
                num(r.lower_difference),
                num(r.upper_difference),
                r.covered.to_string(),
            ])?;
        }
        w.flush()?;
        files.push("recovery.csv");
        for p in ["theta", "latent_cov", "mu", "sigma"] {
            let (inside, total) = table.coverage(p);
            if total > 0 {
                eprintln!("{p}: {inside}/{total} true values inside the 95% interval");
            }
        }
    }
    let mut mf = ArtifactManifest::new(
        "summarize",
        args(),
        json!({ "trace_config_hash": manifest.config_hash, "truth": truth }),
        vec![manifest.mcmc.seed],
    );
    mf.files = files.into_iter().map(String::from).collect();
    mf.write(&out)?;
    eprintln!("wrote {}", out.display());
    Ok(())
}

fn pca(populations: &Path, out: Option<PathBuf>) -> Result<()> {
    let mut r = csv::Reader::from_path(populations)?;
    let header: Vec<String> = r.headers()?.iter().map(String::from).collect();
    let cols: Vec<usize> = header.iter().enumerate().filter(|(_, h)| h.starts_with("pop_")).map(|(i, _)| i).collect();
    if cols.is_empty() {
        return Err(Error::Data(format!("{}: no pop_<m> columns", populations.display())));
    }
    let mut ids = Vec::new();
    let mut values = Vec::new();
    for (row, rec) in r.records().enumerate() {
        let rec = rec?;
        ids.push(rec.get(0).unwrap_or_default().to_string());
        for &c in &cols {
            let field = rec.get(c).unwrap_or_default();
            values.push(field.parse::<f64>().map_err(|_| Error::Parse {
                path: populations.to_path_buf(),
                row: row + 1,
                column: c + 1,
                message: format!("cannot parse {field:?} as a number"),
            })?);
        }
    }
    let x = DMatrix::from_row_slice(ids.len(), cols.len(), &values);
    let p = pca_biplot(&x)?;
    let out = out.unwrap_or_else(|| populations.parent().unwrap_or(Path::new(".")).to_path_buf());
    std::fs::create_dir_all(&out)?;
    let r_count = p.singular_values.len();
    let pcs: Vec<String> = (1..=r_count).map(|c| format!("pc{c}")).collect();

    let mut w = csv_writer(&out.join("pca_scores.csv"))?;
    w.write_record(std::iter::once("sample".to_string()).chain(pcs.iter().cloned()))?;
    for (j, id) in ids.iter().enumerate() {
        w.write_record(std::iter::once(id.clone()).chain((0..r_count).map(|c| num(p.scores[(j, c)]))))?;
    }
    w.flush()?;
    let mut w = csv_writer(&out.join("pca_loadings.csv"))?;
    w.write_record(std::iter::once("population".to_string()).chain(pcs.iter().cloned()))?;
    for (m, &c) in cols.iter().enumerate() {
        w.write_record(std::iter::once(header[c].clone()).chain((0..r_count).map(|a| num(p.loadings[(m, a)]))))?;
    }
    w.flush()?;
    let mut w = csv_writer(&out.join("pca_variance.csv"))?;
    w.write_record(["component", "singular_value", "explained_variance_ratio"])?;
    for c in 0..r_count {
        w.write_record([pcs[c].clone(), num(p.singular_values[c]), num(p.explained_variance_ratio[c])])?;
    }
    w.flush()?;
    let mut mf = ArtifactManifest::new("pca", args(), json!({ "input": populations }), vec![]);
    mf.files = ["pca_scores.csv", "pca_loadings.csv", "pca_variance.csv"].map(String::from).to_vec();
    mf.write(&out)?;
    let share: f64 = p.explained_variance_ratio.iter().take(2).sum();
    eprintln!("first two components explain {:.1}% of the variance", 100.0 * share);
    Ok(())
}

fn validate(iterations: usize, seed: u64, mutation: Option<String>, out: Option<PathBuf>) -> Result<()> {
    let mutation: Option<Mutation> = mutation
        .map(|m| serde_json::from_value(serde_json::Value::String(m.clone())).map_err(|_| Error::Config(format!("unknown mutation {m:?}"))))
        .transpose()?;
    let mut config = GewekeConfig::new(vec![20; 3], iterations, seed);
    config.mutation = mutation;
    let report = getting_it_right(&geweke_prior(2, 2), &config)?;
    let max_z = report.max_abs_z();
    let value = json!({
        "config": config,
        "max_abs_z": max_z,
        "passed": max_z < 4.0,
        "report": report,
    });
    match out {
        Some(p) => write_json(&p, &value)?,
        None => println!("{}", serde_json::to_string_pretty(&value)?),
    }
    Ok(())
}

fn em(sample: &Path, k: usize, seed: u64, restarts: usize, out: Option<PathBuf>) -> Result<()> {
    let (header, cells): (Vec<String>, CellMatrix) = read_sample(sample)?;
    let config = EmConfig { restarts, ..EmConfig::default() };
    let fit = em_baseline(&cells, k, &config, &mut RngStream::new(seed, 0))?;
    let value = json!({ "markers": header, "k": k, "fit": fit });
    match out {
        None => println!("{}", serde_json::to_string_pretty(&value)?),
        Some(out) => {
            std::fs::create_dir_all(&out)?;
            write_json(&out.join("em_fit.json"), &value)?;
            let labels = fit.classify(&cells)?;
            let mut w = csv_writer(&out.join("em_assignments.csv"))?;
            w.write_record(["cell", "component"])?;
            for (i, l) in labels.iter().enumerate() {
                w.write_record([i.to_string(), (l + 1).to_string()])?;
            }
            w.flush()?;
            let mut mf = ArtifactManifest::new("em-baseline", args(), json!({ "sample": sample, "k": k, "em": config }), vec![seed]);
            mf.files = ["em_fit.json", "em_assignments.csv"].map(String::from).to_vec();
            mf.write(&out)?;
        }
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate {
            preset,
            scale,
            spec,
            seed,
            out,
        } => simulate(preset, scale, spec, seed, &out),
        Command::Fit { config, out, workers } => fit(&config, out, workers),
        Command::Merge { trace, config, out } => merge(&trace, &config, out),
        Command::Summarize { trace, truth, out } => summarize_cmd(&trace, truth, out),
        Command::Pca { populations, out } => pca(&populations, out),
        Command::Validate {
            iterations,
            seed,
            mutation,
            out,
        } => validate(iterations, seed, mutation, out),
        Command::EmBaseline {
            sample,
            k,
            seed,
            restarts,
            out,
        } => em(&sample, k, seed, restarts, out),
    }
}

fn fail(kind: &str, message: String, code: i32) -> ExitCode {
    let body = json!({ "error": { "kind": kind, "message": message, "exit_code": code } });
    eprintln!("{body}");
    ExitCode::from(code as u8)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            // --help and --version
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => return fail("usage", e.to_string().trim_end().to_string(), exit_code::CONFIG),
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => fail(e.kind(), e.to_string(), e.exit_code()),
    }
}
