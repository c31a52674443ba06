//! One function per subcommand. Each returns `Ok(false)` only when a
//! verification it ran has failed.

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::Path;

use anyhow::Context;
use serde_json::{json, Value};

use crate::config::{config_err, RunConfig};
use gpp_core::df::{read_battery_json, run_battery, standard_battery, write_battery_csv, DfQuery};
use gpp_core::gp::to_generalized;
use gpp_core::lifting::{
    estimate_norming, lift as lift_sample, smooth_norming, FieldSample, Scenario43,
};
use gpp_core::maxstable::{
    doa_empirical_check, validation_checks, DoaSource, MaxStableSampler, PenroseConfig,
};
use gpp_core::pareto::{write_radii_csv, write_samples_csv, ConditioningMethod, ParetoSampler};
use gpp_core::verify::{run_all, Scale};
use gpp_core::RandomStream;

/// Seed of `verify-all` when none is configured.
pub const DEFAULT_VERIFY_SEED: u64 = 20_240_601;

fn create(dir: &Path, name: &str) -> anyhow::Result<BufWriter<File>> {
    let path = dir.join(name);
    Ok(BufWriter::new(
        File::create(&path).with_context(|| format!("creating {}", path.display()))?,
    ))
}

fn out_dir(cfg: &RunConfig) -> anyhow::Result<std::path::PathBuf> {
    let dir = cfg.out_dir();
    fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    Ok(dir)
}

fn manifest(cfg: &RunConfig, command: &str, seed: u64, outputs: &[&str]) -> Value {
    json!({
        "command": command,
        "version": env!("CARGO_PKG_VERSION"),
        "core_version": gpp_core::VERSION,
        "seed": seed,
        "config_sha256": cfg.hash(),
        "config": crate::config::RunConfig { out: None, ..cfg.clone() },
        "outputs": outputs,
    })
}

fn write_manifest(dir: &Path, m: &Value) -> anyhow::Result<()> {
    fs::write(
        dir.join("manifest.json"),
        serde_json::to_string_pretty(m)? + "\n",
    )?;
    Ok(())
}

pub fn simulate(cfg: &RunConfig) -> anyhow::Result<bool> {
    let seed = cfg.seed()?;
    let grid = cfg.grid()?;
    let spec = cfg.spec()?;
    let gp = cfg.gp_params(&grid)?;
    let sampler = ParetoSampler::new(&spec, grid).map_err(config_err)?;
    let method = match cfg.simulate.method.as_str() {
        "stability" => ConditioningMethod::Stability,
        "rejection" => ConditioningMethod::Rejection,
        other => return Err(config_err(format!("unknown conditioning method {other:?}"))),
    };
    let n = cfg.simulate.n;
    let mut rng = RandomStream::new(seed);
    let samples = match cfg.simulate.r {
        None => sampler.sample_batch(n, &mut rng),
        Some(r) => sampler
            .conditional(r, n, method, &mut rng)
            .map_err(config_err)?,
    };

    let dir = out_dir(cfg)?;
    write_samples_csv(&samples, create(&dir, "samples.csv")?)?;
    write_radii_csv(&samples, create(&dir, "radii.csv")?)?;
    let mut outputs = vec!["samples.csv", "radii.csv"];
    if let Some(p) = &gp {
        let fields = samples
            .iter()
            .map(|s| to_generalized(&s.w, p))
            .collect::<gpp_core::Result<Vec<_>>>()?;
        FieldSample::new(fields, "generalized_pareto", Some(seed))?
            .write_csv(create(&dir, "generalized.csv")?)?;
        outputs.push("generalized.csv");
    }
    write_manifest(&dir, &manifest(cfg, "simulate", seed, &outputs))?;
    println!(
        "simulate: {n} fields of {} sites -> {}",
        samples[0].w.len(),
        dir.display()
    );
    Ok(true)
}

pub fn df_battery(cfg: &RunConfig) -> anyhow::Result<bool> {
    let seed = cfg.seed()?;
    let grid = cfg.grid()?;
    let spec = cfg.spec()?;
    let b = &cfg.df_battery;
    let queries: Vec<DfQuery> = match &b.input {
        Some(path) => {
            let f = File::open(path).map_err(|e| config_err(format!("{}: {e}", path.display())))?;
            read_battery_json(f)
                .map_err(config_err)?
                .iter()
                .map(|q| q.to_query(&grid))
                .collect::<gpp_core::Result<_>>()
                .map_err(config_err)?
        }
        None => standard_battery(&grid, spec.omega0, b.n_mc, seed).map_err(config_err)?,
    };
    let rows = run_battery(&queries, &spec, &grid, b.n_oracle)?;
    let dir = out_dir(cfg)?;
    write_battery_csv(&rows, create(&dir, "battery.csv")?)?;
    write_manifest(&dir, &manifest(cfg, "df-battery", seed, &["battery.csv"]))?;
    for r in &rows {
        println!(
            "query {}: formula {:.5} ({:.5}) direct {:.5} ({:.5}) {}",
            r.query_id,
            r.estimate,
            r.std_error,
            r.oracle_estimate,
            r.oracle_se,
            if r.pass { "agree" } else { "DISAGREE" }
        );
    }
    Ok(true)
}

pub fn maxstable_check(cfg: &RunConfig) -> anyhow::Result<bool> {
    let seed = cfg.seed()?;
    let grid = cfg.grid()?;
    let spec = cfg.spec()?;
    let m = &cfg.maxstable;
    let pcfg = PenroseConfig::new(spec, grid.clone()).with_truncation(m.truncation);
    pcfg.validate().map_err(config_err)?;
    let ms = MaxStableSampler::new(&pcfg).map_err(config_err)?;
    let root = RandomStream::new(seed);

    let fields = ms.sample_batch(m.n, &mut root.fork(0));
    let mut sites = vec![0, grid.len() / 2, grid.len() - 1];
    sites.dedup();
    let points: Vec<Vec<f64>> = vec![
        vec![1.0; sites.len()],
        (0..sites.len()).map(|i| 0.5 + 1.25 * i as f64).collect(),
    ];
    let checks = validation_checks(&ms, m.n, &sites, &points, m.m, &mut root.fork(1))?;
    let xs = [1.0, 2.0, 5.0];
    let doa = [DoaSource::SimplePareto, DoaSource::MaxStable]
        .iter()
        .enumerate()
        .map(|(i, s)| {
            doa_empirical_check(&pcfg, *s, m.t, m.n_rep, &xs, &mut root.fork(2 + i as u64))
        })
        .collect::<gpp_core::Result<Vec<_>>>()?;

    let dir = out_dir(cfg)?;
    FieldSample::new(fields, "max_stable", Some(seed))?
        .write_csv(create(&dir, "maxstable.csv")?)?;
    let report = json!({ "validation": checks, "doa": doa });
    fs::write(
        dir.join("checks.json"),
        serde_json::to_string_pretty(&report)? + "\n",
    )?;
    write_manifest(
        &dir,
        &manifest(
            cfg,
            "maxstable-check",
            seed,
            &["maxstable.csv", "checks.json"],
        ),
    )?;
    for c in checks.iter().chain(doa.iter().flat_map(|d| &d.checks)) {
        println!(
            "{:<28} {:>10.5} vs {:<8} {}",
            c.name,
            c.statistic,
            c.threshold,
            if c.pass { "ok" } else { "FAIL" }
        );
    }
    Ok(true)
}

pub fn lift(cfg: &RunConfig) -> anyhow::Result<bool> {
    let l = &cfg.lift;
    let input = l
        .input
        .as_ref()
        .ok_or_else(|| config_err("lift needs --input"))?;
    let f = File::open(input).map_err(|e| config_err(format!("{}: {e}", input.display())))?;
    let label = input
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let data = FieldSample::read_csv(f, None, label).map_err(config_err)?;
    let k = l.k.unwrap_or((data.len() / 20).max(2));
    let mut nf = estimate_norming(&data, k)?;
    if let Some(w) = l.smooth {
        nf = smooth_norming(&nf, w).map_err(config_err)?;
    }
    let report = lift_sample(&data, &nf, l.t0, &l.policy).map_err(config_err)?;
    let dir = out_dir(cfg)?;
    let mut m = manifest(
        cfg,
        "lift",
        cfg.seed.unwrap_or(0),
        &["norming.json", "selected.csv", "lifted.csv"],
    );
    m["input"] = json!(input);
    report.write_dir(&data, &dir, m)?;
    println!(
        "lift: {} of {} fields selected (k = {k}, t = {}), t0 = {} -> {}",
        report.selected_ids.len(),
        data.len(),
        nf.t,
        l.t0,
        dir.display()
    );
    Ok(true)
}

pub fn scenario43(cfg: &RunConfig) -> anyhow::Result<bool> {
    let seed = cfg.seed()?;
    let sc = Scenario43::new(cfg.scenario43.clone()).map_err(config_err)?;
    let out = sc.run(&mut RandomStream::new(seed))?;
    let dir = out_dir(cfg)?;
    out.data.write_csv(create(&dir, "sample.csv")?)?;
    out.write_figures(&dir)?;
    let m = manifest(
        cfg,
        "scenario43",
        seed,
        &[
            "sample.csv",
            "figure_normalized.csv",
            "figure_lifted.csv",
            "norming.json",
            "selected.csv",
            "lifted.csv",
        ],
    );
    out.report.write_dir(&out.data, &dir, m)?;
    println!(
        "scenario43: {} of {} fields selected, t0 = {} -> {}",
        out.report.selected_ids.len(),
        out.data.len(),
        sc.config.t0,
        dir.display()
    );
    Ok(true)
}

pub fn verify_all(cfg: &RunConfig) -> anyhow::Result<bool> {
    let seed = cfg.seed.unwrap_or(DEFAULT_VERIFY_SEED);
    let scale = if cfg.verify.quick {
        Scale::Quick
    } else {
        Scale::Full
    };
    let dir = out_dir(cfg)?;
    let outcomes = run_all(scale, seed, Some(&dir.join("figures")))?;
    for o in &outcomes {
        println!("{}", o.line());
    }
    fs::write(
        dir.join("verify.json"),
        serde_json::to_string_pretty(&outcomes)? + "\n",
    )?;
    write_manifest(
        &dir,
        &manifest(cfg, "verify-all", seed, &["verify.json", "figures/"]),
    )?;
    let failed = outcomes.iter().filter(|o| !o.pass).count();
    println!(
        "{} of {} checks passed",
        outcomes.len() - failed,
        outcomes.len()
    );
    Ok(failed == 0)
}
