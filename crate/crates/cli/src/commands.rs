use std::fs::{self, File};
use std::io::BufReader;
use std::path::Path;
use std::time::Instant;

use mvnclust::io::{
    format_f64, read_assignment, read_dataset, read_matrix_json, write_assignment, write_dataset,
    DatasetFile,
};
use mvnclust::likelihood::{log_likelihood, LikelihoodBreakdown, PriorSpec};
use mvnclust::search::{
    dendrogram_proposals, greedy_improve, metropolis_sample, DistanceTransform, SearchConfig,
    SearchMode,
};
use mvnclust::sim::{generate, SimulationConfig, SnrSummary};
use mvnclust::stats::{equal_means_chisq, select_k, ChiSqResult};
use mvnclust::{Dataset, Partition};
use serde::Serialize;

use crate::output::{CliResult, Failure, OutDir};
use crate::{
    ClusterArgs, DatasetFormat, DistanceArg, EvaluateArgs, KChoice, PriorArgs, PriorKind,
    SearchArg, SelectArgs, SimulateArgs,
};

fn normal_prior(args: &PriorArgs, p: usize) -> CliResult<PriorSpec> {
    let prior = match &args.prior_precision_file {
        Some(path) => {
            let f = File::open(path)
                .map_err(|e| Failure::validation(format!("{}: {e}", path.display())))?;
            PriorSpec::normal(read_matrix_json(BufReader::new(f))?)?
        }
        None => PriorSpec::normal_isotropic(p, args.prior_sigma2.unwrap_or(1.0))?,
    };
    prior.check_dim(p)?;
    Ok(prior)
}

fn chosen_prior(args: &PriorArgs, p: usize) -> CliResult<PriorSpec> {
    match args.prior {
        PriorKind::Flat => Ok(PriorSpec::Flat),
        PriorKind::Normal => normal_prior(args, p),
    }
}

fn transform(d: DistanceArg) -> DistanceTransform {
    match d {
        DistanceArg::AsIs => DistanceTransform::AsIs,
        DistanceArg::Sqrt => DistanceTransform::Sqrt,
    }
}

fn load(path: &Path) -> CliResult<Dataset> {
    read_dataset(path).map_err(|e| {
        let mut f = Failure::from(e);
        f.message = format!("{}: {}", path.display(), f.message);
        f
    })
}

fn k_range(k_min: Option<usize>, k_max: Option<usize>, n: usize) -> (usize, usize) {
    (k_min.unwrap_or(1), k_max.unwrap_or(n))
}

// −(log-likelihood) without a negative zero
fn negated(total: f64) -> f64 {
    0.0 - total
}

#[derive(Serialize)]
struct TrueClusterRecord {
    cluster: usize,
    size: usize,
    mean: Vec<f64>,
    covariance: Vec<Vec<f64>>,
}

#[derive(Serialize)]
struct SimulationSummary<'a> {
    config: &'a SimulationConfig,
    snr: SnrSummary,
    clusters: Vec<TrueClusterRecord>,
}

pub fn simulate(args: &SimulateArgs) -> CliResult {
    let started = Instant::now();
    let mut config = match (&args.config, &args.preset) {
        (Some(path), _) => {
            let text = fs::read_to_string(path)
                .map_err(|e| Failure::validation(format!("{}: {e}", path.display())))?;
            toml::from_str::<SimulationConfig>(&text)
                .map_err(|e| Failure::validation(format!("{}: {e}", path.display())))?
        }
        (None, Some(name)) => SimulationConfig::preset(name, 0)
            .ok_or_else(|| Failure::validation(format!("unknown preset `{name}`")))?,
        (None, None) => {
            return Err(Failure::validation(
                "one of --config and --preset is required",
            ))
        }
    };
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    config.validate()?;
    let sim = generate(&config)?;

    let mut out = OutDir::create(&args.out)?;
    let name = match args.format {
        DatasetFormat::Json => "dataset.json",
        DatasetFormat::Csv => "dataset.csv",
    };
    write_dataset(
        &out.path(name),
        &DatasetFile::with_covariances(&sim.dataset, &sim.covariances)?,
    )?;
    write_assignment(out.create_file("truth.csv")?, &sim.dataset, &sim.truth)?;
    let clusters = sim
        .true_clusters
        .iter()
        .enumerate()
        .map(|(g, c)| TrueClusterRecord {
            cluster: g + 1,
            size: c.size,
            mean: c.mu.iter().copied().collect(),
            covariance: c.covariance.to_rows(),
        })
        .collect();
    out.write_json(
        "simulation.json",
        &SimulationSummary {
            config: &config,
            snr: sim.snr,
            clusters,
        },
    )?;

    #[derive(Serialize)]
    struct Echo<'a> {
        cli: &'a SimulateArgs,
        config: &'a SimulationConfig,
    }
    let inputs: Vec<&Path> = args.config.iter().map(|p| p.as_path()).collect();
    out.finish(
        "simulate",
        &Echo {
            cli: args,
            config: &config,
        },
        vec![config.seed],
        inputs,
        started,
    )
}

#[derive(Serialize)]
struct SelectSummary {
    n: usize,
    k_min: usize,
    k_max: usize,
    alpha: f64,
    prior: PriorKind,
    /// Likelihood maximum under `prior`.
    chosen_k: usize,
    best_k_flat: usize,
    best_k_normal: Option<usize>,
    fewest_k_not_rejected: Option<usize>,
}

pub fn select(args: &SelectArgs) -> CliResult {
    let started = Instant::now();
    let ds = load(&args.input)?;
    let (k_min, k_max) = k_range(args.k_min, args.k_max, ds.len());
    let normal = normal_prior(&args.prior, ds.dimension())?;
    let parts = dendrogram_proposals(&ds, k_min, k_max, transform(args.distance))?;
    let report = select_k(&ds, &parts, Some(&normal), args.alpha)?;

    let mut out = OutDir::create(&args.out)?;
    let mut w = csv::Writer::from_writer(out.create_file("curve.csv")?);
    w.write_record([
        "k",
        "neg_loglik_flat",
        "neg_loglik_normal",
        "chisq",
        "dof",
        "p_value",
    ])?;
    for row in &report.rows {
        let normal_total = row.normal.map_or(f64::NAN, |b| b.total);
        w.write_record([
            row.k.to_string(),
            format_f64(negated(row.flat.total)),
            format_f64(negated(normal_total)),
            format_f64(row.chisq.statistic),
            row.chisq.dof.to_string(),
            format_f64(row.chisq.p_value),
        ])?;
    }
    w.flush()?;

    let mut w = csv::Writer::from_writer(out.create_file("partitions.csv")?);
    let mut header = vec!["id".to_string()];
    header.extend(report.rows.iter().map(|r| format!("k_{}", r.k)));
    w.write_record(&header)?;
    for (i, item) in ds.items().iter().enumerate() {
        let mut rec = vec![item.id().to_string()];
        rec.extend(
            report
                .rows
                .iter()
                .map(|r| (r.partition.label(i) + 1).to_string()),
        );
        w.write_record(&rec)?;
    }
    w.flush()?;

    let best_k_normal = report.best_k_normal;
    let chosen_k = match args.prior.prior {
        PriorKind::Flat => report.best_k_flat,
        PriorKind::Normal => best_k_normal.unwrap_or(report.best_k_flat),
    };
    out.write_json(
        "summary.json",
        &SelectSummary {
            n: ds.len(),
            k_min,
            k_max,
            alpha: args.alpha,
            prior: args.prior.prior,
            chosen_k,
            best_k_flat: report.best_k_flat,
            best_k_normal,
            fewest_k_not_rejected: report.fewest_k_not_rejected,
        },
    )?;
    out.finish("select", args, vec![], vec![&args.input], started)
}

#[derive(Serialize)]
struct ClusterReport {
    search: SearchArg,
    prior: PriorKind,
    k: usize,
    breakdown: LikelihoodBreakdown,
    chisq: ChiSqResult,
}

/// Dendrogram cut at a fixed k, or the likelihood-maximising cut over a range.
fn dendrogram_choice(ds: &Dataset, args: &ClusterArgs, prior: &PriorSpec) -> CliResult<Partition> {
    let t = transform(args.distance);
    match args.k {
        KChoice::Fixed(k) => Ok(dendrogram_proposals(ds, k, k, t)?.remove(0)),
        KChoice::Auto => {
            let (k_min, k_max) = k_range(args.k_min, args.k_max, ds.len());
            let mut best: Option<(f64, Partition)> = None;
            for part in dendrogram_proposals(ds, k_min, k_max, t)? {
                let total = log_likelihood(ds, &part, prior)?.total;
                if best.as_ref().is_none_or(|(b, _)| total > *b) {
                    best = Some((total, part));
                }
            }
            Ok(best.expect("nonempty k range").1)
        }
    }
}

pub fn cluster(args: &ClusterArgs) -> CliResult {
    let started = Instant::now();
    let ds = load(&args.input)?;
    let prior = chosen_prior(&args.prior, ds.dimension())?;
    let start = dendrogram_choice(&ds, args, &prior)?;
    let mut config = SearchConfig {
        mode: SearchMode::Greedy,
        max_sweeps: args.sweeps,
        temperature: args.temperature,
        seed: args.seed,
        restarts: args.restarts,
    };
    config.validate()?;

    let mut out = OutDir::create(&args.out)?;
    let (partition, breakdown) = match args.search {
        SearchArg::Dendrogram => {
            let b = log_likelihood(&ds, &start, &prior)?;
            (start, b)
        }
        SearchArg::Greedy => greedy_improve(&ds, &start, &prior, &config)?,
        SearchArg::Metropolis => {
            config.mode = SearchMode::Metropolis;
            let visits = metropolis_sample(&ds, &start, &prior, &config)?;
            let mut w = csv::Writer::from_writer(out.create_file("visits.csv")?);
            w.write_record(["rank", "visits", "loglik", "k"])?;
            for (rank, v) in visits.iter().take(100).enumerate() {
                w.write_record([
                    (rank + 1).to_string(),
                    v.visits.to_string(),
                    format_f64(v.total),
                    v.partition.num_clusters().to_string(),
                ])?;
            }
            w.flush()?;
            // highest likelihood among visited partitions
            let best = visits
                .into_iter()
                .reduce(|a, b| if b.total > a.total { b } else { a })
                .expect("chain visits at least one partition");
            let b = log_likelihood(&ds, &best.partition, &prior)?;
            (best.partition, b)
        }
    };
    write_assignment(out.create_file("assignment.csv")?, &ds, &partition)?;
    let chisq = equal_means_chisq(&ds, &partition)?;
    out.write_json(
        "breakdown.json",
        &ClusterReport {
            search: args.search,
            prior: args.prior.prior,
            k: partition.num_clusters(),
            breakdown,
            chisq,
        },
    )?;
    out.finish("cluster", args, vec![args.seed], vec![&args.input], started)
}

#[derive(Serialize)]
struct EvaluateReport {
    n: usize,
    k: usize,
    prior: PriorKind,
    breakdown: LikelihoodBreakdown,
    chisq: ChiSqResult,
}

pub fn evaluate(args: &EvaluateArgs) -> CliResult {
    let started = Instant::now();
    let ds = load(&args.input)?;
    let f = File::open(&args.assignment)
        .map_err(|e| Failure::validation(format!("{}: {e}", args.assignment.display())))?;
    let partition = read_assignment(BufReader::new(f), &ds)?;
    let prior = chosen_prior(&args.prior, ds.dimension())?;
    let report = EvaluateReport {
        n: ds.len(),
        k: partition.num_clusters(),
        prior: args.prior.prior,
        breakdown: log_likelihood(&ds, &partition, &prior)?,
        chisq: equal_means_chisq(&ds, &partition)?,
    };
    println!("{}", serde_json::to_string_pretty(&report)?);
    if let Some(dir) = &args.out {
        let mut out = OutDir::create(dir)?;
        out.write_json("report.json", &report)?;
        out.finish(
            "evaluate",
            args,
            vec![],
            vec![&args.input, &args.assignment],
            started,
        )?;
    }
    Ok(())
}
