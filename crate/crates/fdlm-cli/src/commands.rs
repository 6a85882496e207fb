//! One function per subcommand. Every command validates its configuration
//! fully before creating any file, computes in memory, and only then writes
//! its outputs plus a manifest — a failed run leaves no partial artifacts.

use std::fmt::Write as _;

use anyhow::{anyhow, bail, Context, Result};
use chrono::{Days, NaiveDate, NaiveTime};
use fdlm::kalman::{filter, smooth};
use fdlm::mcmc::{
    initial_kernel_guess, posterior_bands, run_sampler, summarize, PosteriorDraws, SamplerConfig,
};
use fdlm::statespace::{local_level_spec, simulate, FdlmSpec, FunctionalSeries};
use fdlm::verify::run_all_checks;
use nalgebra::DVector;

use crate::config::RunConfig;
use crate::ingest::{ingest, IngestReport};
use crate::io::{self, Manifest};

fn base_date() -> NaiveDate {
    NaiveDate::from_ymd_opt(2000, 1, 1).expect("valid date")
}

/// Local-level model with every kernel pinned down (simulate/filter/smooth).
fn fixed_spec(cfg: &RunConfig) -> Result<FdlmSpec> {
    let grid = cfg.grid()?;
    let d = grid.len();
    let c0 = cfg.model.c0.to_params("model.c0")?;
    let v = cfg.model.v.require_fixed("model.v")?;
    let w = cfg.model.w.require_fixed("model.w")?;
    let m0 = DVector::from_element(d, cfg.model.m0);
    local_level_spec(grid, c0, w, v, m0).context("building the model")
}

fn load_series(cfg: &RunConfig) -> Result<(FunctionalSeries, IngestReport)> {
    let grid = cfg.grid()?;
    let (series, report) = ingest(cfg.input()?, &grid, cfg.data.log_transform)?;
    println!("{report}");
    Ok((series, report))
}

fn ensure_output_dir(cfg: &RunConfig) -> Result<()> {
    std::fs::create_dir_all(&cfg.output.dir)
        .with_context(|| format!("cannot create output dir {}", cfg.output.dir.display()))
}

pub fn cmd_simulate(cfg: &RunConfig) -> Result<()> {
    cfg.validate_common()?;
    let spec = fixed_spec(cfg)?;
    let d = spec.obs_dim();
    let Some(sim) = &cfg.simulate else {
        bail!("simulate: section is required for this subcommand");
    };
    if sim.days == 0 {
        bail!("simulate.days: must be at least 1");
    }
    if d > 86_400 {
        bail!("grid: at most 86400 points per day fit into distinct timestamps");
    }
    let seed = cfg.sampler.seed;
    let path = simulate(&spec, sim.days, seed)?;

    // One reading per grid point per day, evenly spread over the day so that
    // ingestion groups them back into the same curves.
    let mut data_csv = String::from("timestamp,value\n");
    for t in 0..sim.days {
        let date = base_date() + Days::new(t as u64);
        for j in 0..d {
            let secs = (j * 86_400 / d) as u32;
            let time = NaiveTime::from_num_seconds_from_midnight_opt(secs, 0).expect("valid time");
            let _ = writeln!(
                data_csv,
                "{date}T{time},{}",
                io::fmt_f64(path.observations.curves[(t, j)])
            );
        }
    }

    let mut truth_csv = String::from("t,grid_point,value\n");
    let points = spec.state_grid.points();
    for t in 0..path.states.len() {
        for (j, point) in points.iter().enumerate() {
            let _ = writeln!(
                truth_csv,
                "{t},{},{}",
                io::fmt_f64(*point),
                io::fmt_f64(path.states.curves[(t, j)])
            );
        }
    }

    ensure_output_dir(cfg)?;
    let dir = &cfg.output.dir;
    let mut manifest = Manifest::new("simulate", cfg, seed, 1)?;
    for (name, body) in [("data.csv", &data_csv), ("truth_states.csv", &truth_csv)] {
        let path = dir.join(name);
        io::write_file(&path, body)?;
        manifest.record(&path);
    }
    manifest.write(dir)?;
    println!(
        "simulated {} days of {} readings into {}",
        sim.days,
        d,
        dir.display()
    );
    Ok(())
}

pub fn cmd_fit(cfg: &RunConfig) -> Result<()> {
    cfg.validate_common()?;
    let grid = cfg.grid()?;
    cfg.model.v.require_estimated("model.v")?;
    cfg.model.w.require_estimated("model.w")?;
    let c0 = cfg.model.c0.to_params("model.c0")?;
    let prior = cfg.prior.to_prior_spec();
    prior.validate().context("prior")?;
    let base = cfg.sampler.to_sampler_config();
    base.validate().context("sampler")?;

    let (series, _report) = load_series(cfg)?;
    let init = initial_kernel_guess(&series);
    let m0 = DVector::from_element(grid.len(), cfg.model.m0);
    let spec = local_level_spec(grid, c0, init.clone(), init, m0).context("building the model")?;

    // Bands need the sampled trajectories even when the caller did not ask
    // to persist them.
    let keep_states = base.save_states || cfg.output.bands;
    let n_chains = cfg.sampler.chains;
    let chain_cfg = |i: usize| SamplerConfig {
        seed: base.seed.wrapping_add(i as u64),
        save_states: keep_states,
        ..base
    };

    let results: Vec<PosteriorDraws> = if n_chains == 1 {
        vec![run_sampler(&spec, &series, &prior, &chain_cfg(0))?]
    } else {
        // Independent chains: distinct seeds, shared read-only inputs, each
        // chain owns its own output.
        std::thread::scope(|scope| {
            let handles: Vec<_> = (0..n_chains)
                .map(|i| {
                    let cfg_i = chain_cfg(i);
                    let (spec, series, prior) = (&spec, &series, &prior);
                    scope.spawn(move || run_sampler(spec, series, prior, &cfg_i))
                })
                .collect();
            handles
                .into_iter()
                .enumerate()
                .map(|(i, h)| {
                    h.join()
                        .map_err(|_| anyhow!("chain {i} panicked"))?
                        .with_context(|| format!("chain {i}"))
                })
                .collect::<Result<Vec<_>>>()
        })?
    };

    let pooled = io::pool_draws(&results);
    let summary = summarize(&pooled).context("summarizing the chain")?;
    let table = io::summary_table(&summary, Some(pooled.acceptance_rates));
    let summary_json = io::summary_json(&summary, Some(pooled.acceptance_rates))?;

    let bands_text = if cfg.output.bands {
        let states = pooled
            .state_draws
            .as_ref()
            .expect("states were kept because bands were requested");
        let bands = posterior_bands(states, cfg.output.band_level)?;
        Some(io::bands_csv(&series, &bands))
    } else {
        None
    };

    ensure_output_dir(cfg)?;
    let dir = &cfg.output.dir;
    let mut manifest = Manifest::new("fit", cfg, base.seed, n_chains)?;
    let write = |name: &str, body: &str, manifest: &mut Manifest| -> Result<()> {
        let path = dir.join(name);
        io::write_file(&path, body)?;
        manifest.record(&path);
        Ok(())
    };

    write("draws.csv", &io::draws_csv(&pooled.draws), &mut manifest)?;
    if n_chains > 1 {
        for (i, chain) in results.iter().enumerate() {
            write(
                &format!("draws_chain_{:02}.csv", i + 1),
                &io::draws_csv(&chain.draws),
                &mut manifest,
            )?;
        }
    }
    write("summary.txt", &table, &mut manifest)?;
    write("summary.json", &summary_json, &mut manifest)?;
    if let Some(text) = &bands_text {
        write("bands.csv", text, &mut manifest)?;
    }
    if base.save_states {
        let states = pooled.state_draws.as_ref().expect("saved on request");
        write(
            "state_draws.csv",
            &io::state_draws_csv(states),
            &mut manifest,
        )?;
    }
    manifest.write(dir)?;
    print!("{table}");
    println!("wrote fit outputs to {}", dir.display());
    Ok(())
}

fn moment_rows(
    steps: impl Iterator<Item = (DVector<f64>, nalgebra::DMatrix<f64>)>,
) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let mut means = Vec::new();
    let mut sds = Vec::new();
    for (mean, cov) in steps {
        means.push(mean.iter().copied().collect());
        sds.push(cov.diagonal().iter().map(|v| v.max(0.0).sqrt()).collect());
    }
    (means, sds)
}

pub fn cmd_filter(cfg: &RunConfig) -> Result<()> {
    cfg.validate_common()?;
    let spec = fixed_spec(cfg)?;
    let (series, _report) = load_series(cfg)?;
    let output = filter(&spec, &series)?;
    let (means, sds) = moment_rows(
        output
            .steps
            .iter()
            .map(|s| (s.filtered_mean.clone(), s.filtered_cov.clone())),
    );
    let csv = io::moments_csv(spec.state_grid.points(), 1, &means, &sds);

    ensure_output_dir(cfg)?;
    let dir = &cfg.output.dir;
    let mut manifest = Manifest::new("filter", cfg, cfg.sampler.seed, 1)?;
    manifest.log_likelihood = Some(output.log_likelihood);
    let path = dir.join("filtered.csv");
    io::write_file(&path, &csv)?;
    manifest.record(&path);
    manifest.write(dir)?;
    println!("log-likelihood: {}", io::fmt_f64(output.log_likelihood));
    println!("wrote filtered moments to {}", dir.display());
    Ok(())
}

pub fn cmd_smooth(cfg: &RunConfig) -> Result<()> {
    cfg.validate_common()?;
    let spec = fixed_spec(cfg)?;
    let (series, _report) = load_series(cfg)?;
    let output = filter(&spec, &series)?;
    let steps = smooth(&spec, &output)?;
    let (means, sds) = moment_rows(steps.into_iter().map(|s| (s.mean, s.cov)));
    // Row t = 0 is the posterior for the initial state.
    let csv = io::moments_csv(spec.state_grid.points(), 0, &means, &sds);

    ensure_output_dir(cfg)?;
    let dir = &cfg.output.dir;
    let mut manifest = Manifest::new("smooth", cfg, cfg.sampler.seed, 1)?;
    manifest.log_likelihood = Some(output.log_likelihood);
    let path = dir.join("smoothed.csv");
    io::write_file(&path, &csv)?;
    manifest.record(&path);
    manifest.write(dir)?;
    println!("log-likelihood: {}", io::fmt_f64(output.log_likelihood));
    println!("wrote smoothed moments to {}", dir.display());
    Ok(())
}

pub fn cmd_summarize(cfg: &RunConfig) -> Result<()> {
    cfg.validate_common()?;
    let draws = io::read_draws_csv(cfg.input()?)?;
    let pd = PosteriorDraws {
        draws,
        acceptance_rates: (0.0, 0.0),
        state_draws: None,
    };
    let summary = summarize(&pd).context("summarizing the draws")?;
    let table = io::summary_table(&summary, None);
    let json = io::summary_json(&summary, None)?;

    ensure_output_dir(cfg)?;
    let dir = &cfg.output.dir;
    let mut manifest = Manifest::new("summarize", cfg, cfg.sampler.seed, 1)?;
    for (name, body) in [
        ("summary.txt", table.as_str()),
        ("summary.json", json.as_str()),
    ] {
        let path = dir.join(name);
        io::write_file(&path, body)?;
        manifest.record(&path);
    }
    manifest.write(dir)?;
    print!("{table}");
    Ok(())
}

pub fn cmd_verify(cfg: &RunConfig) -> Result<()> {
    let outcomes = run_all_checks();
    let mut report = String::new();
    for o in &outcomes {
        let line = format!(
            "{} {} — {}",
            if o.passed { "PASS" } else { "FAIL" },
            o.name,
            o.detail
        );
        println!("{line}");
        report.push_str(&line);
        report.push('\n');
    }
    let failed = outcomes.iter().filter(|o| !o.passed).count();
    let _ = writeln!(
        report,
        "{} of {} checks passed",
        outcomes.len() - failed,
        outcomes.len()
    );

    ensure_output_dir(cfg)?;
    let dir = &cfg.output.dir;
    let mut manifest = Manifest::new("verify", cfg, cfg.sampler.seed, 1)?;
    let path = dir.join("verify_report.txt");
    io::write_file(&path, &report)?;
    manifest.record(&path);
    manifest.write(dir)?;

    if failed > 0 {
        bail!("{failed} of {} checks failed", outcomes.len());
    }
    println!("all {} checks passed", outcomes.len());
    Ok(())
}
