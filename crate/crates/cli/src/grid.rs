//! Cross-validated grid search.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use anyhow::{Context, Result};
use cdl::dataio::{self, Fold};
use cdl::eval::{self, CandidatePolicy, MeanStd};
use cdl::trainer::{self, expand_grid, HyperParams, TrainData};
use cdl::CdlError;
use rayon::prelude::*;

use crate::commands::{create_dir, load_train_data, write_file};
use crate::manifest::RunManifest;
use crate::GridArgs;

#[derive(Debug, Clone)]
struct RunResult {
    config: usize,
    fold: usize,
    recall: f64,
    map: f64,
    users: usize,
    sweeps: usize,
}

/// Keys whose value differs between at least two configs, in file order.
fn varying_keys(configs: &[HyperParams]) -> Vec<String> {
    let rendered: Vec<Vec<String>> = configs
        .iter()
        .map(|h| h.to_config_string().lines().map(str::to_string).collect())
        .collect();
    let first = &rendered[0];
    first
        .iter()
        .enumerate()
        .filter(|(i, _)| rendered.iter().any(|r| r.get(*i) != Some(&first[*i])))
        .filter_map(|(_, line)| line.split_once('=').map(|(k, _)| k.to_string()))
        .collect()
}

fn settings(h: &HyperParams, keys: &[String]) -> String {
    let text = h.to_config_string();
    let picked: Vec<&str> = text
        .lines()
        .filter(|l| l.split_once('=').is_some_and(|(k, _)| keys.iter().any(|x| x == k)))
        .collect();
    if picked.is_empty() {
        "-".to_string()
    } else {
        picked.join(" ")
    }
}

fn run_one(
    config: usize,
    fold: usize,
    hyper: &HyperParams,
    data: &Fold,
    content: Option<&cdl::dataio::ContentMatrix>,
    args: &GridArgs,
    dir: &Path,
) -> Result<RunResult> {
    let train = TrainData::new(data.train.clone(), content.cloned())?;
    let model = match trainer::train(args.variant, &train, hyper) {
        Ok(m) => m,
        Err(CdlError::Diverged { sweep, .. }) => {
            log::warn!("config {config} fold {fold} diverged at sweep {sweep}");
            return Ok(RunResult {
                config,
                fold,
                recall: f64::NAN,
                map: f64::NAN,
                users: 0,
                sweeps: sweep,
            });
        }
        Err(e) => return Err(e.into()),
    };
    create_dir(dir)?;
    let mut report = Vec::new();
    model.report.write_tsv(&mut report)?;
    write_file(&dir.join("report.tsv"), report)?;
    let test = data.test.with_dims(train.num_users(), train.num_items())?;
    let metrics = eval::evaluate(
        model.factors.users.view(),
        model.factors.items.view(),
        &train.ratings,
        &test,
        &[args.m],
        CandidatePolicy::ExcludeTrain,
    )?;
    let (recall, map, users) = metrics.map_or((f64::NAN, f64::NAN, 0), |m| (m.recall[0], m.map, m.num_users));
    log::info!("config {config} fold {fold}: recall@{} {recall:.4}", args.m);
    Ok(RunResult {
        config,
        fold,
        recall,
        map,
        users,
        sweeps: model.report.records.len(),
    })
}

fn mean_std_finite(xs: &[f64]) -> MeanStd {
    let ok: Vec<f64> = xs.iter().copied().filter(|x| x.is_finite()).collect();
    if ok.is_empty() {
        return MeanStd { mean: f64::NAN, std: f64::NAN };
    }
    let n = ok.len() as f64;
    let mean = ok.iter().sum::<f64>() / n;
    let std = if ok.len() < 2 {
        0.0
    } else {
        (ok.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    };
    MeanStd { mean, std }
}

pub fn run(args: GridArgs) -> Result<()> {
    let text = fs::read_to_string(&args.config).with_context(|| format!("reading {}", args.config.display()))?;
    let mut configs = expand_grid(&text).with_context(|| format!("grid {}", args.config.display()))?;
    if let Some(s) = args.seed {
        for h in &mut configs {
            h.seed = s;
        }
    }
    let seed = configs[0].seed;
    let mut manifest = RunManifest::new(Some(seed));
    manifest.input("grid", &args.config)?;
    manifest.config = Some(format!(
        "variant={}\nfolds={}\nM={}\nconfigs={}\n{text}",
        args.variant,
        args.folds,
        args.m,
        configs.len()
    ));
    let data = load_train_data(&args.ratings, args.content.as_deref(), args.variant, &configs[0], &mut manifest)?;
    let folds = dataio::kfold(&data.ratings, args.folds, seed)?;
    create_dir(&args.out)?;

    let jobs: Vec<(usize, usize)> = (0..configs.len())
        .flat_map(|c| (0..args.folds).map(move |f| (c, f)))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(args.threads)
        .build()
        .context("building the worker pool")?;
    log::info!(
        "{} configs x {} folds = {} runs on {} threads",
        configs.len(),
        args.folds,
        jobs.len(),
        pool.current_num_threads()
    );
    let results: Vec<RunResult> = pool.install(|| {
        jobs.par_iter()
            .map(|&(c, f)| {
                let dir = args.out.join("runs").join(format!("c{c}-f{f}"));
                run_one(c, f, &configs[c], &folds[f], data.content.as_ref(), &args, &dir)
            })
            .collect::<Result<_>>()
    })?;

    let mut runs = format!("config\tfold\trecall@{}\tmap@500\tusers\tsweeps\n", args.m);
    for r in &results {
        let _ = writeln!(runs, "{}\t{}\t{}\t{}\t{}\t{}", r.config, r.fold, r.recall, r.map, r.users, r.sweeps);
        if r.users > 0 || r.recall.is_finite() {
            manifest.output(format!("runs/c{}-f{}/report.tsv", r.config, r.fold));
        }
    }
    write_file(&args.out.join("runs.tsv"), runs)?;

    let scores: Vec<MeanStd> = (0..configs.len())
        .map(|c| {
            let xs: Vec<f64> = results.iter().filter(|r| r.config == c).map(|r| r.recall).collect();
            mean_std_finite(&xs)
        })
        .collect();
    let mut order: Vec<usize> = (0..configs.len()).collect();
    let key = |c: usize| if scores[c].mean.is_nan() { f64::NEG_INFINITY } else { scores[c].mean };
    order.sort_by(|&a, &b| key(b).total_cmp(&key(a)));
    let keys = varying_keys(&configs);
    let mut summary = format!("rank\tconfig\tmean_recall@{m}\tstd_recall@{m}\tsettings\n", m = args.m);
    for (rank, &c) in order.iter().enumerate() {
        let _ = writeln!(
            summary,
            "{}\t{c}\t{}\t{}\t{}",
            rank + 1,
            scores[c].mean,
            scores[c].std,
            settings(&configs[c], &keys)
        );
    }
    write_file(&args.out.join("summary.tsv"), &summary)?;
    let best = order[0];
    write_file(&args.out.join("best.txt"), configs[best].to_config_string())?;
    for name in ["runs.tsv", "summary.tsv", "best.txt"] {
        manifest.output(name);
    }
    manifest.write(&args.out)?;
    print!("{summary}");
    Ok(())
}
