use std::path::Path;

use ndarray::Array1;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use hdlogit::amp::{amp_run, calibrated_start, AmpOptions};
use hdlogit::glm::{fit_mle, gradient, Dataset, DesignTag, FitOptions, FitResult, NullTester};
use hdlogit::inference::{adjust, AdjustOptions, AdjustedInference, ColumnVariance, TripleSource};
use hdlogit::phase_boundary::{g_mle, g_mle_inverse};
use hdlogit::probe_frontier::{estimate_gamma, ProbeOptions, ProbeSummary, Sampling};
use hdlogit::sim::{gen_beta, gen_gaussian_design, gen_response, run_experiment, Aggregates, BetaPattern, CheckOutcome, ExperimentConfig, Outputs};
use hdlogit::state_evolution::{solve_system, SolutionTriple, SolveOptions};
use hdlogit::{Error, Result};

use crate::output::{emit, sig4};
use crate::{
    AdjustArgs, AmpCheckArgs, BoundaryArgs, Cli, Command, FitArgs, ProbeArgs, ProbeFlags, SamplingArg, SimulateArgs,
    SolveArgs, VarianceArg, EXIT_CHECK, EXIT_CONVERGENCE, EXIT_SEPARATION,
};

pub fn run(cli: &Cli) -> Result<u8> {
    let ctx = Ctx {
        seed: cli.global.seed.unwrap_or(0),
        seed_given: cli.global.seed.is_some(),
        output: cli.global.output.as_deref(),
        quiet: cli.global.quiet,
    };
    match &cli.command {
        Command::Solve(a) => solve(&ctx, a),
        Command::Boundary(a) => boundary(&ctx, a),
        Command::Fit(a) => fit(&ctx, a),
        Command::Adjust(a) => adjust_cmd(&ctx, a),
        Command::Probe(a) => probe(&ctx, a),
        Command::Simulate(a) => simulate(&ctx, a),
        Command::AmpCheck(a) => amp_check(&ctx, a),
        Command::Man => Ok(0),
    }
}

struct Ctx<'a> {
    seed: u64,
    seed_given: bool,
    output: Option<&'a Path>,
    quiet: bool,
}

impl Ctx<'_> {
    fn emit<T: Serialize>(&self, value: &T) -> Result<()> {
        emit(value, self.output).map_err(Error::from)
    }

    fn say(&self, text: impl AsRef<str>) {
        if !self.quiet {
            eprintln!("{}", text.as_ref());
        }
    }
}

#[derive(Serialize)]
struct SolveOutput {
    kappa: f64,
    gamma: f64,
    alpha_star: f64,
    sigma_star: f64,
    lambda_star: f64,
    lrt_factor: f64,
    residual_norm: f64,
    iterations: usize,
}

impl From<&SolutionTriple> for SolveOutput {
    fn from(t: &SolutionTriple) -> Self {
        Self {
            kappa: t.kappa,
            gamma: t.gamma,
            alpha_star: t.alpha_star,
            sigma_star: t.sigma_star,
            lambda_star: t.lambda_star,
            lrt_factor: t.lrt_factor(),
            residual_norm: t.residual_norm,
            iterations: t.iterations,
        }
    }
}

fn triple_line(t: &SolutionTriple) -> String {
    format!(
        "alpha* = {}  sigma* = {}  lambda* = {}  kappa sigma*^2/lambda* = {}",
        sig4(t.alpha_star),
        sig4(t.sigma_star),
        sig4(t.lambda_star),
        sig4(t.lrt_factor())
    )
}

fn solve(ctx: &Ctx, a: &SolveArgs) -> Result<u8> {
    let opts = SolveOptions {
        quad_order: a.quad_order,
        ..SolveOptions::default()
    };
    let t = solve_system(a.kappa, a.gamma, &opts)?;
    ctx.emit(&SolveOutput::from(&t))?;
    ctx.say(format!("kappa = {}, gamma = {}: {}", sig4(a.kappa), sig4(a.gamma), triple_line(&t)));
    Ok(0)
}

#[derive(Serialize)]
struct BoundaryRow {
    gamma: f64,
    kappa: f64,
}

#[derive(Serialize)]
struct BoundaryOutput {
    points: Vec<BoundaryRow>,
}

fn boundary(ctx: &Ctx, a: &BoundaryArgs) -> Result<u8> {
    let mut points = Vec::new();
    if let Some(m) = a.points {
        if m < 2 {
            return Err(Error::InvalidArgument("--points must be at least 2".into()));
        }
        for i in 0..m {
            let gamma = a.gamma_max * i as f64 / (m - 1) as f64;
            points.push(BoundaryRow {
                gamma,
                kappa: g_mle_inverse(gamma)?.kappa_boundary,
            });
        }
    } else if !a.kappa.is_empty() {
        for &kappa in &a.kappa {
            points.push(BoundaryRow { gamma: g_mle(kappa)?, kappa });
        }
    } else if !a.gamma.is_empty() {
        for &gamma in &a.gamma {
            points.push(BoundaryRow {
                gamma,
                kappa: g_mle_inverse(gamma)?.kappa_boundary,
            });
        }
    } else {
        return Err(Error::InvalidArgument("give --gamma, --kappa or --points".into()));
    }
    if let Some(path) = &a.csv {
        let mut w = csv::Writer::from_path(path).map_err(|e| Error::Io(e.to_string()))?;
        for p in &points {
            w.serialize(p).map_err(|e| Error::Io(e.to_string()))?;
        }
        w.flush()?;
    }
    for p in &points {
        ctx.say(format!("gamma = {}  kappa = {}", sig4(p.gamma), sig4(p.kappa)));
    }
    ctx.emit(&BoundaryOutput { points })?;
    Ok(0)
}

#[derive(Serialize)]
struct FitOutput<'a> {
    n: usize,
    p: usize,
    #[serde(flatten)]
    fit: &'a FitResult,
    se_plugin: Option<Vec<f64>>,
}

fn load(path: &Path) -> Result<Dataset> {
    Dataset::load(path).map_err(|e| match e {
        Error::Io(msg) => Error::Io(format!("{}: {msg}", path.display())),
        other => other,
    })
}

fn fit(ctx: &Ctx, a: &FitArgs) -> Result<u8> {
    let data = load(&a.data.data)?;
    let opts = FitOptions {
        check_separation: !a.no_separation_check,
        max_iter: a.max_iter,
        ..FitOptions::default()
    };
    let fit = fit_mle(&data, &opts)?;
    let se_plugin = if fit.converged {
        Some(NullTester::from_fit(&data, fit.clone(), &opts)?.plugin_se().to_vec())
    } else {
        None
    };
    ctx.emit(&FitOutput {
        n: data.n(),
        p: data.p(),
        fit: &fit,
        se_plugin,
    })?;
    if fit.separated {
        ctx.say(format!("n = {}, p = {}: data are separated; the MLE does not exist", data.n(), data.p()));
        return Ok(EXIT_SEPARATION);
    }
    ctx.say(format!(
        "n = {}, p = {}: converged in {} iterations, |grad| = {}, -loglik = {}",
        data.n(),
        data.p(),
        fit.iterations,
        sig4(fit.grad_norm),
        sig4(fit.neg_log_likelihood)
    ));
    Ok(0)
}

fn probe_options(ctx: &Ctx, f: &ProbeFlags) -> ProbeOptions {
    ProbeOptions {
        grid_step: f.grid_step,
        replicates: f.replicates,
        threshold: f.threshold,
        seed: ctx.seed,
        sampling: match f.sampling {
            SamplingArg::Nested => Sampling::Nested,
            SamplingArg::Independent => Sampling::Independent,
        },
        coarse_to_fine: f.coarse_to_fine,
    }
}

#[derive(Serialize)]
struct AdjustOutput<'a> {
    n: usize,
    p: usize,
    seed: u64,
    #[serde(flatten)]
    report: &'a AdjustedInference,
}

fn adjust_cmd(ctx: &Ctx, a: &AdjustArgs) -> Result<u8> {
    let data = load(&a.data.data)?;
    let (n, p) = (data.n(), data.p());
    let fit_opts = FitOptions {
        check_separation: true,
        ..FitOptions::default()
    };
    let fit = fit_mle(&data, &fit_opts)?;
    if fit.separated {
        return Err(Error::Separated);
    }
    let kappa = p as f64 / n as f64;
    let (gamma, provenance) = match a.gamma {
        Some(g) => (g, TripleSource::Theoretical { gamma: g }),
        None => {
            let opts = probe_options(ctx, &a.probe_flags);
            let r = estimate_gamma(&data, &opts)?;
            (
                r.gamma_hat,
                TripleSource::ProbeFrontier {
                    gamma_hat: r.gamma_hat,
                    kappa_hat: r.kappa_hat,
                    replicates: r.b,
                    seed: r.seed,
                },
            )
        }
    };
    let triple = solve_system(kappa, gamma, &SolveOptions::default())?;
    let opts = AdjustOptions {
        column_variance: match a.column_variance {
            VarianceArg::Estimated => ColumnVariance::Estimated,
            VarianceArg::UnitOverN => ColumnVariance::UnitOverN,
        },
        coordinates: a.coordinates.clone(),
        fit: fit_opts,
    };
    let report = adjust(&data, &fit, &triple, provenance, &opts)?;
    ctx.emit(&AdjustOutput {
        n,
        p,
        seed: ctx.seed,
        report: &report,
    })?;
    let rejected = report.pvalues.iter().filter(|&&v| v <= 0.05).count();
    let rejected_classical = report.pvalues_classical.iter().filter(|&&v| v <= 0.05).count();
    ctx.say(format!("n = {n}, p = {p}, gamma = {}: {}", sig4(gamma), triple_line(&triple)));
    ctx.say(format!(
        "{} coordinates tested; p <= 0.05: {} adjusted, {} classical",
        report.tested.len(),
        rejected,
        rejected_classical
    ));
    Ok(0)
}

fn probe(ctx: &Ctx, a: &ProbeArgs) -> Result<u8> {
    let data = load(&a.data.data)?;
    let r = estimate_gamma(&data, &probe_options(ctx, &a.probe_flags))?;
    if let Some(path) = &a.curve {
        r.write_curve_csv(path)?;
    }
    let summary: ProbeSummary = r.summary();
    ctx.emit(&summary)?;
    ctx.say(format!(
        "kappa_hat = {}, gamma_hat = {} ({} grid points, B = {})",
        sig4(r.kappa_hat),
        sig4(r.gamma_hat),
        r.kappa_grid.len(),
        r.b
    ));
    Ok(0)
}

#[derive(Serialize)]
struct SimulateOutput<'a> {
    config_hash: String,
    seed: u64,
    replicates: usize,
    gamma: f64,
    triple: Option<SolutionTriple>,
    aggregates: &'a Aggregates,
    checks: Vec<CheckOutcome>,
}

fn simulate(ctx: &Ctx, a: &SimulateArgs) -> Result<u8> {
    let mut cfg = ExperimentConfig::load(&a.config)?;
    if ctx.seed_given {
        cfg.seed = ctx.seed;
    }
    if let Some(r) = a.replicates {
        cfg.replicates = r;
    }
    if let Some(dir) = &a.out {
        let coefficients = cfg.outputs.as_ref().is_some_and(|o| o.coefficients);
        cfg.outputs = Some(Outputs {
            dir: dir.clone(),
            coefficients,
        });
    }
    cfg.validate()?;
    let result = run_experiment(&cfg)?;
    let checks = result.check();
    let agg = &result.aggregates;
    ctx.emit(&SimulateOutput {
        config_hash: cfg.hash(),
        seed: cfg.seed,
        replicates: cfg.replicates,
        gamma: result.gamma,
        triple: result.triple,
        aggregates: agg,
        checks: checks.clone(),
    })?;
    ctx.say(format!(
        "{} replicates ({} failed): alpha_hat = {}, sigma_hat = {}",
        agg.replicates_ok + agg.replicates_failed,
        agg.replicates_failed,
        sig4(agg.alpha_hat),
        sig4(agg.sigma_hat)
    ));
    if agg.lrt_count > 0 {
        let t = &agg.tails[0];
        ctx.say(format!(
            "{} null LRTs: P(p <= 0.05) classical {}, adjusted {}",
            agg.lrt_count,
            sig4(t.classical),
            sig4(t.adjusted)
        ));
    }
    for c in &checks {
        ctx.say(format!(
            "check {}: {} (target {} +- {}) {}",
            c.metric,
            c.value.map_or("missing".into(), sig4),
            sig4(c.target),
            sig4(c.tolerance),
            if c.pass { "pass" } else { "FAIL" }
        ));
    }
    if a.check && checks.iter().any(|c| !c.pass) {
        return Ok(EXIT_CHECK);
    }
    Ok(0)
}

#[derive(Serialize)]
struct AmpCheckOutput {
    n: usize,
    p: usize,
    gamma: f64,
    seed: u64,
    lambda_star: f64,
    converged: bool,
    iterations: usize,
    max_abs_diff: f64,
    grad_norm: f64,
    newton_grad_norm: f64,
}

fn amp_check(ctx: &Ctx, a: &AmpCheckArgs) -> Result<u8> {
    let mut rng = ChaCha8Rng::seed_from_u64(ctx.seed);
    let (data, truth) = match &a.data {
        Some(path) => (load(path)?, None),
        None => {
            if a.p == 0 || a.n <= a.p {
                return Err(Error::InvalidArgument("need 0 < p < n".into()));
            }
            let beta = gen_beta(
                &BetaPattern::HalfConst { value: 1.0 },
                a.p,
                Some(a.gamma),
                1.0 / a.n as f64,
                &mut rng,
            )?;
            let x = gen_gaussian_design(a.n, a.p, &mut rng);
            let y = gen_response(&x, &beta, &mut rng)?;
            (Dataset::new(x, y, DesignTag::Gaussian)?, Some(beta))
        }
    };
    let (n, p) = (data.n(), data.p());
    let triple = solve_system(p as f64 / n as f64, a.gamma, &SolveOptions::default())?;
    let newton = fit_mle(&data, &FitOptions::default())?;
    let start = match &truth {
        Some(beta) => calibrated_start(&beta.view(), &triple, &mut rng),
        None => Array1::zeros(p),
    };
    let opts = AmpOptions {
        max_iter: a.max_iter,
        tol: a.tol,
        ..AmpOptions::default()
    };
    let traj = amp_run(&data, &triple, start, &opts, Some(&newton.beta_hat))?;
    if let Some(path) = &a.trajectory {
        traj.write_csv(path)?;
    }
    let beta_amp = &traj.state.beta_t;
    let max_abs_diff = beta_amp
        .iter()
        .zip(newton.beta_hat.iter())
        .fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
    let grad_norm = gradient(&beta_amp.view(), &data)?.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    ctx.emit(&AmpCheckOutput {
        n,
        p,
        gamma: a.gamma,
        seed: ctx.seed,
        lambda_star: triple.lambda_star,
        converged: traj.converged,
        iterations: traj.state.t,
        max_abs_diff,
        grad_norm,
        newton_grad_norm: newton.grad_norm,
    })?;
    ctx.say(format!(
        "AMP {} after {} iterations: |beta_amp - beta_newton|_inf = {}, |grad|_inf = {}",
        if traj.converged { "converged" } else { "did not converge" },
        traj.state.t,
        sig4(max_abs_diff),
        sig4(grad_norm)
    ));
    Ok(if traj.converged { 0 } else { EXIT_CONVERGENCE })
}
