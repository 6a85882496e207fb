//! Output files: CSVs at 17 significant digits (lossless f64 round-trip),
//! human and machine summaries, and the run manifest.
//!
//! Manifests deliberately contain no timestamps or host details: a rerun
//! with the same config and seed must reproduce every output byte for byte.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use fdlm::mcmc::{Bands, ChainSummary, PosteriorDraws};
use fdlm::statespace::FunctionalSeries;
use nalgebra::DMatrix;
use serde::Serialize;
use sha2::{Digest, Sha256};

/// 17 significant digits: enough to reparse the exact double.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn write_file(path: &Path, contents: &str) -> Result<()> {
    std::fs::write(path, contents).with_context(|| format!("cannot write {}", path.display()))
}

/// Posterior draws, one row per kept iteration (pooled across chains).
pub fn draws_csv(draws: &DMatrix<f64>) -> String {
    let mut out = String::from("iter,sigma2_v,log_beta_v,sigma2_w,log_beta_w\n");
    for i in 0..draws.nrows() {
        let _ = write!(out, "{}", i + 1);
        for j in 0..4 {
            let _ = write!(out, ",{}", fmt_f64(draws[(i, j)]));
        }
        out.push('\n');
    }
    out
}

/// Parse a draws CSV back into a kept x 4 matrix, validating the header.
pub fn read_draws_csv(path: &Path) -> Result<DMatrix<f64>> {
    let mut reader =
        csv::Reader::from_path(path).with_context(|| format!("cannot open {}", path.display()))?;
    let headers = reader.headers().context("missing header")?.clone();
    let expected = ["iter", "sigma2_v", "log_beta_v", "sigma2_w", "log_beta_w"];
    let got: Vec<&str> = headers.iter().collect();
    if got != expected {
        bail!(
            "{}: expected header {:?}, found {:?}",
            path.display(),
            expected.join(","),
            got.join(",")
        );
    }
    let mut rows: Vec<[f64; 4]> = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record.with_context(|| format!("row {}: malformed record", i + 2))?;
        if record.len() != 5 {
            bail!("row {}: expected 5 fields, found {}", i + 2, record.len());
        }
        let mut row = [0.0f64; 4];
        for (j, slot) in row.iter_mut().enumerate() {
            *slot = record[j + 1]
                .parse::<f64>()
                .with_context(|| format!("row {}: bad number {:?}", i + 2, &record[j + 1]))?;
        }
        rows.push(row);
    }
    if rows.is_empty() {
        bail!("{}: no draws", path.display());
    }
    Ok(DMatrix::from_fn(rows.len(), 4, |i, j| rows[i][j]))
}

/// Long-format moments: one row per (time, grid point).
pub fn moments_csv(
    grid_points: &[f64],
    first_t: usize,
    means: &[Vec<f64>],
    sds: &[Vec<f64>],
) -> String {
    let mut out = String::from("t,grid_point,mean,sd\n");
    for (offset, (mean_row, sd_row)) in means.iter().zip(sds).enumerate() {
        let t = first_t + offset;
        for (j, point) in grid_points.iter().enumerate() {
            let _ = writeln!(
                out,
                "{t},{},{},{}",
                fmt_f64(*point),
                fmt_f64(mean_row[j]),
                fmt_f64(sd_row[j])
            );
        }
    }
    out
}

/// Plot-ready posterior bands next to the observations, t = 1..=T.
pub fn bands_csv(data: &FunctionalSeries, bands: &Bands) -> String {
    let mut out = String::from("t,grid_point,observed,smoothed_median,lower,upper\n");
    let points = data.grid.points();
    for t in 1..bands.median.nrows() {
        for (j, point) in points.iter().enumerate() {
            let _ = writeln!(
                out,
                "{t},{},{},{},{},{}",
                fmt_f64(*point),
                fmt_f64(data.curves[(t - 1, j)]),
                fmt_f64(bands.median[(t, j)]),
                fmt_f64(bands.lower[(t, j)]),
                fmt_f64(bands.upper[(t, j)])
            );
        }
    }
    out
}

/// State draws in long form, keyed by (iter, t, grid index). Only written on
/// request: this grows as draws x (T + 1) x d.
pub fn state_draws_csv(state_draws: &[DMatrix<f64>]) -> String {
    let mut out = String::from("iter,t,grid_index,value\n");
    for (i, draw) in state_draws.iter().enumerate() {
        for t in 0..draw.nrows() {
            for j in 0..draw.ncols() {
                let _ = writeln!(out, "{},{t},{j},{}", i + 1, fmt_f64(draw[(t, j)]));
            }
        }
    }
    out
}

fn fmt_cell(value: Option<f64>) -> String {
    match value {
        Some(v) => format!("{v:>12.5e}"),
        None => format!("{:>12}", "-"),
    }
}

/// Fixed-width table: one row per hyperparameter with posterior mean, Monte
/// Carlo standard error, autocorrelation time, and the 90% interval.
pub fn summary_table(summary: &ChainSummary, acceptance: Option<(f64, f64)>) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<12}{:>12}{:>12}{:>10}{:>12}{:>12}",
        "parameter", "mean", "mcse", "tau_int", "q05", "q95"
    );
    for p in &summary.parameters {
        let tau = match p.tau_int {
            Some(t) => format!("{t:>10.2}"),
            None => format!("{:>10}", "-"),
        };
        let _ = writeln!(
            out,
            "{:<12}{}{}{}{}{}",
            p.name,
            fmt_cell(Some(p.mean)),
            fmt_cell(p.mcse),
            tau,
            fmt_cell(Some(p.q05)),
            fmt_cell(Some(p.q95))
        );
    }
    let _ = writeln!(out, "\nkept draws: {}", summary.n);
    if let Some((rate_v, rate_w)) = acceptance {
        let _ = writeln!(
            out,
            "acceptance rates: log_beta_v {rate_v:.3}, log_beta_w {rate_w:.3}"
        );
    }
    out
}

#[derive(Debug, Serialize)]
pub struct ParameterJson {
    pub name: String,
    pub mean: f64,
    pub mcse: Option<f64>,
    pub tau_int: Option<f64>,
    pub q05: f64,
    pub q95: f64,
    pub degenerate: bool,
}

#[derive(Debug, Serialize)]
pub struct SummaryJson {
    pub kept_draws: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub acceptance_rates: Option<AcceptanceJson>,
    pub parameters: Vec<ParameterJson>,
}

#[derive(Debug, Serialize)]
pub struct AcceptanceJson {
    pub log_beta_v: f64,
    pub log_beta_w: f64,
}

pub fn summary_json(summary: &ChainSummary, acceptance: Option<(f64, f64)>) -> Result<String> {
    let doc = SummaryJson {
        kept_draws: summary.n,
        acceptance_rates: acceptance.map(|(v, w)| AcceptanceJson {
            log_beta_v: v,
            log_beta_w: w,
        }),
        parameters: summary
            .parameters
            .iter()
            .map(|p| ParameterJson {
                name: p.name.clone(),
                mean: p.mean,
                mcse: p.mcse,
                tau_int: p.tau_int,
                q05: p.q05,
                q95: p.q95,
                degenerate: p.degenerate,
            })
            .collect(),
    };
    Ok(serde_json::to_string_pretty(&doc)? + "\n")
}

/// Stack per-chain draws into one matrix, chains in seed order.
pub fn pool_draws(chains: &[PosteriorDraws]) -> PosteriorDraws {
    let total: usize = chains.iter().map(|c| c.draws.nrows()).sum();
    let mut draws = DMatrix::zeros(total, 4);
    let mut row = 0;
    for chain in chains {
        draws
            .rows_mut(row, chain.draws.nrows())
            .copy_from(&chain.draws);
        row += chain.draws.nrows();
    }
    let n = chains.len() as f64;
    let rates = (
        chains.iter().map(|c| c.acceptance_rates.0).sum::<f64>() / n,
        chains.iter().map(|c| c.acceptance_rates.1).sum::<f64>() / n,
    );
    let state_draws = if chains.iter().all(|c| c.state_draws.is_some()) {
        let mut all = Vec::new();
        for chain in chains {
            all.extend(chain.state_draws.as_ref().unwrap().iter().cloned());
        }
        Some(all)
    } else {
        None
    };
    PosteriorDraws {
        draws,
        acceptance_rates: rates,
        state_draws,
    }
}

/// Everything needed to reproduce a run: command, seed, config (resolved,
/// post-override) and its hash, and crate versions. No timestamps.
#[derive(Debug, Serialize)]
pub struct Manifest {
    pub command: String,
    pub seed: u64,
    pub chains: usize,
    pub config_sha256: String,
    pub versions: Versions,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub log_likelihood: Option<f64>,
    pub outputs: Vec<String>,
    pub config: serde_json::Value,
}

#[derive(Debug, Serialize)]
pub struct Versions {
    pub fdlm: String,
    pub fdlm_cli: String,
}

impl Manifest {
    pub fn new<C: Serialize>(command: &str, config: &C, seed: u64, chains: usize) -> Result<Self> {
        let canonical = toml::to_string(config).context("serializing config for the manifest")?;
        let mut hasher = Sha256::new();
        hasher.update(canonical.as_bytes());
        Ok(Self {
            command: command.to_string(),
            seed,
            chains,
            config_sha256: format!("{:x}", hasher.finalize()),
            versions: Versions {
                fdlm: fdlm::VERSION.to_string(),
                fdlm_cli: env!("CARGO_PKG_VERSION").to_string(),
            },
            log_likelihood: None,
            outputs: Vec::new(),
            config: serde_json::to_value(config)?,
        })
    }

    pub fn record(&mut self, path: &Path) {
        if let Some(name) = path.file_name() {
            self.outputs.push(name.to_string_lossy().into_owned());
        }
    }

    pub fn write(&self, dir: &Path) -> Result<PathBuf> {
        let path = dir.join("manifest.json");
        let body = serde_json::to_string_pretty(self)? + "\n";
        write_file(&path, &body)?;
        Ok(path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn float_format_round_trips_exactly() {
        for x in [
            2.76e-4,
            -2.83,
            1.0 / 3.0,
            f64::MIN_POSITIVE,
            1.2345678901234567e300,
        ] {
            let s = fmt_f64(x);
            assert_eq!(s.parse::<f64>().unwrap(), x, "{s}");
        }
    }

    #[test]
    fn draws_csv_round_trips_bitwise() {
        let draws = DMatrix::from_row_slice(
            2,
            4,
            &[
                2.76e-4,
                -2.83,
                2.14e-4,
                -3.23,
                1.0 / 3.0,
                0.1 + 0.2,
                1e-300,
                7.0,
            ],
        );
        let text = draws_csv(&draws);
        let file = tempfile::NamedTempFile::new().unwrap();
        std::fs::write(file.path(), &text).unwrap();
        let back = read_draws_csv(file.path()).unwrap();
        assert_eq!(back, draws);
    }

    #[test]
    fn read_draws_rejects_wrong_header() {
        let file = tempfile::NamedTempFile::new().unwrap();
        std::fs::write(file.path(), "a,b,c,d,e\n1,2,3,4,5\n").unwrap();
        let err = read_draws_csv(file.path()).unwrap_err().to_string();
        assert!(err.contains("expected header"), "{err}");
    }

    #[test]
    fn manifest_has_no_timestamp_and_hash_is_stable() {
        #[derive(Serialize)]
        struct Cfg {
            x: u32,
        }
        let a = Manifest::new("fit", &Cfg { x: 1 }, 7, 2).unwrap();
        let b = Manifest::new("fit", &Cfg { x: 1 }, 7, 2).unwrap();
        assert_eq!(a.config_sha256, b.config_sha256);
        let text = serde_json::to_string(&a).unwrap();
        for needle in ["time", "date", "host"] {
            assert!(!text.contains(needle), "manifest leaks {needle}: {text}");
        }
        let c = Manifest::new("fit", &Cfg { x: 2 }, 7, 2).unwrap();
        assert_ne!(a.config_sha256, c.config_sha256);
    }
}
