use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use cdl::bayes::{self, ChainConfig};
use cdl::cf::{self, LatentFactors};
use cdl::dataio::{self, ContentMatrix, ContentTriples, RatingsMatrix, SplitManifest, SplitSpec, SyntheticConfig, Vocabulary};
use cdl::eval::{self, RepetitionMetrics};
use cdl::sdae;
use cdl::trainer::{self, HyperParams, TrainData, Variant};
use cdl::CdlError;
use ndarray::Axis;

use crate::manifest::RunManifest;
use crate::model;
use crate::{EvalArgs, PredictArgs, SampleArgs, SplitArgs, SynthArgs, TrainArgs, VocabArgs};

pub fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

pub fn write_file(path: &Path, bytes: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
}

/// Reads a config file, applying an optional seed override.
pub fn load_hyper(path: &Path, seed: Option<u64>) -> Result<HyperParams> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut hyper = HyperParams::from_config_str(&text).with_context(|| format!("config {}", path.display()))?;
    if let Some(s) = seed {
        hyper.seed = s;
    }
    Ok(hyper)
}

/// Loads ratings and, when the variant needs it, content.
pub fn load_train_data(
    ratings: &Path,
    content: Option<&Path>,
    variant: Variant,
    hyper: &HyperParams,
    manifest: &mut RunManifest,
) -> Result<TrainData> {
    manifest.input("ratings", ratings)?;
    let r = dataio::load_ratings(ratings)?;
    let c = match (variant.uses_content(), content) {
        (true, Some(p)) => {
            manifest.input("content", p)?;
            Some(dataio::load_content(p, hyper.normalization)?)
        }
        (true, None) => bail!("variant {variant} needs --content"),
        (false, Some(p)) => {
            log::warn!("variant {variant} ignores the content file {}", p.display());
            None
        }
        (false, None) => None,
    };
    Ok(TrainData::new(r, c)?)
}

pub fn split(args: SplitArgs) -> Result<()> {
    let mut manifest = RunManifest::new(Some(args.seed));
    manifest.input("ratings", &args.ratings)?;
    let ratings = dataio::load_ratings(&args.ratings)?;
    if args.repetitions == 0 {
        bail!("--repetitions must be at least 1");
    }
    let spec = SplitSpec {
        p: args.p,
        seed: args.seed,
        repetitions: args.repetitions,
    };
    create_dir(&args.out)?;
    for (r, s) in spec.splits(&ratings)?.iter().enumerate() {
        let prefix = if args.repetitions == 1 {
            String::new()
        } else {
            format!("rep{r}/")
        };
        create_dir(&args.out.join(&prefix))?;
        for (name, m) in [("train.tsv", &s.train), ("test.tsv", &s.test)] {
            dataio::save_ratings(args.out.join(format!("{prefix}{name}")), m)?;
            manifest.output(format!("{prefix}{name}"));
        }
        SplitManifest::from_split(s).save(args.out.join(format!("{prefix}split.txt")))?;
        manifest.output(format!("{prefix}split.txt"));
        log::info!(
            "split {r}: {} train, {} test entries, {} evaluated users",
            s.train.nnz(),
            s.test.nnz(),
            s.eval_users.len()
        );
    }
    manifest.write(&args.out)
}

pub fn train(args: TrainArgs) -> Result<()> {
    let hyper = load_hyper(&args.config, args.seed)?;
    let mut manifest = RunManifest::new(Some(hyper.seed));
    manifest.input("config", &args.config)?;
    let data = load_train_data(&args.ratings, args.content.as_deref(), args.variant, &hyper, &mut manifest)?;
    manifest.config = Some(format!("variant={}\n{}", args.variant, hyper.to_config_string()));
    create_dir(&args.out)?;
    let trained = match trainer::train(args.variant, &data, &hyper) {
        Ok(m) => m,
        Err(CdlError::Diverged { sweep, retries, last_good }) => {
            let dir = args.out.join("last_good");
            create_dir(&dir)?;
            if let Some(net) = &last_good.network {
                sdae::save_network(dir.join(model::NETWORK), net, &hyper.to_config_string())?;
                manifest.output(format!("last_good/{}", model::NETWORK));
            }
            cf::save_factors(dir.join(model::FACTORS), &last_good.factors)?;
            manifest.output(format!("last_good/{}", model::FACTORS));
            manifest.write(&args.out)?;
            bail!(
                "training diverged at sweep {sweep} after {retries} learning-rate halvings; \
                 last good state written to {}",
                dir.display()
            );
        }
        Err(e) => return Err(e.into()),
    };
    for name in model::save(&args.out, &trained, &hyper, &data.ratings)? {
        manifest.output(name);
    }
    manifest.write(&args.out)?;
    if let Some(obj) = trained.report.final_objective() {
        println!(
            "{}: {} sweeps, final objective {obj:e}",
            args.variant,
            trained.report.records.len()
        );
    }
    Ok(())
}

fn record_model_inputs(manifest: &mut RunManifest, dir: &Path) -> Result<()> {
    for name in [model::CONFIG, model::NETWORK, model::FACTORS, model::TRAIN] {
        let p = dir.join(name);
        if p.exists() {
            manifest.input("model", &p)?;
        }
    }
    Ok(())
}

pub fn eval(args: EvalArgs) -> Result<()> {
    if args.model.len() != args.test.len() {
        bail!(
            "got {} --model and {} --test arguments; they pair up one to one",
            args.model.len(),
            args.test.len()
        );
    }
    let mut manifest = RunManifest::new(None);
    let mut reps = Vec::new();
    for (dir, test_path) in args.model.iter().zip(&args.test) {
        let saved = model::load(dir)?;
        record_model_inputs(&mut manifest, dir)?;
        manifest.input("test", test_path)?;
        let test = model::conform(&dataio::load_ratings(test_path)?, &saved, test_path)?;
        let metrics = eval::evaluate(
            saved.factors.users.view(),
            saved.factors.items.view(),
            &saved.train,
            &test,
            &args.m_grid,
            args.policy,
        )?;
        reps.push(metrics.unwrap_or_else(|| {
            log::warn!("{}: no test ratings; reporting zero evaluated users", test_path.display());
            RepetitionMetrics {
                m_grid: args.m_grid.clone(),
                recall: vec![f64::NAN; args.m_grid.len()],
                map: f64::NAN,
                num_users: 0,
            }
        }));
    }
    let report = eval::aggregate(reps)?;
    create_dir(&args.out)?;
    let mut tsv = Vec::new();
    report.write_tsv(&mut tsv)?;
    write_file(&args.out.join("metrics.tsv"), &tsv)?;
    manifest.output("metrics.tsv");
    manifest.write(&args.out)?;
    print!("{}", String::from_utf8_lossy(&tsv));
    Ok(())
}

/// Scores for new items described by content rows; the offset is zero.
fn cold_start_scores(saved: &model::SavedModel, user: usize, path: &Path) -> Result<Vec<(usize, f64)>> {
    let Some(net) = &saved.network else {
        bail!("this model has no network; cold-start scoring needs a content model");
    };
    let raw = dataio::load_content_triples(path)?;
    if raw.vocab_size > net.input_width() {
        bail!(
            "{}: word ids reach {} but the network reads {} words",
            path.display(),
            raw.vocab_size,
            net.input_width()
        );
    }
    let rows = ContentMatrix::from_triples(
        &ContentTriples {
            vocab_size: net.input_width(),
            ..raw
        },
        saved.hyper.normalization,
    )?
    .to_dense();
    let u = saved.factors.users.row(user);
    rows.rows()
        .into_iter()
        .enumerate()
        .map(|(j, x)| {
            let code = sdae::encode(net, x)?;
            Ok((j, cf::predict_new_item(u, code.view())?))
        })
        .collect()
}

pub fn predict(args: PredictArgs) -> Result<()> {
    let saved = model::load(&args.model)?;
    let num_users = saved.factors.num_users();
    if args.user >= num_users {
        bail!("unknown user {} (the model has {num_users} users)", args.user);
    }
    let mut manifest = RunManifest::new(None);
    record_model_inputs(&mut manifest, &args.model)?;
    let mut out = String::new();
    if let Some(path) = &args.item_content {
        manifest.input("item-content", path)?;
        let _ = writeln!(out, "item\tscore");
        for (j, s) in cold_start_scores(&saved, args.user, path)? {
            let _ = writeln!(out, "{j}\t{s}");
        }
    } else {
        let u = saved.factors.users.row(args.user);
        let seen: Vec<(usize, usize)> = saved.train.user_items(args.user).iter().map(|&j| (0, j)).collect();
        let train = RatingsMatrix::new(1, saved.factors.num_items(), seen)?;
        let policy = if args.include_train {
            eval::CandidatePolicy::AllItems
        } else {
            eval::CandidatePolicy::ExcludeTrain
        };
        let users = u.to_owned().insert_axis(Axis(0));
        let ranked = eval::rank_top(users.view(), saved.factors.items.view(), &train, policy, args.top)?;
        let _ = writeln!(out, "rank\titem\tscore");
        for (r, &j) in ranked.user(0).iter().enumerate() {
            let s = cf::predict(u, saved.factors.items.row(j))?;
            let _ = writeln!(out, "{}\t{j}\t{s}", r + 1);
        }
    }
    print!("{out}");
    if let Some(dir) = &args.out {
        create_dir(dir)?;
        write_file(&dir.join("predictions.tsv"), &out)?;
        manifest.output("predictions.tsv");
        manifest.write(dir)?;
    }
    Ok(())
}

pub fn sample(args: SampleArgs) -> Result<()> {
    let hyper = load_hyper(&args.config, args.seed)?;
    let mut manifest = RunManifest::new(Some(hyper.seed));
    manifest.input("config", &args.config)?;
    let data = load_train_data(&args.ratings, Some(&args.content), Variant::Cdl, &hyper, &mut manifest)?;
    let config = ChainConfig {
        iters: args.iters,
        burn_in: args.burn_in,
        thin: args.thin,
        initial_step: args.step,
        ..ChainConfig::default()
    };
    manifest.config = Some(format!(
        "iters={}\nburn_in={}\nthin={}\ninitial_step={}\n{}",
        config.iters,
        config.burn_in,
        config.thin,
        config.initial_step,
        hyper.to_config_string()
    ));
    let summary = bayes::run_chain(&data, &hyper, &config)?;
    for w in &summary.warnings {
        log::warn!("{w}");
    }
    create_dir(&args.out)?;
    let mut chain = Vec::new();
    summary.write_tsv(&mut chain)?;
    write_file(&args.out.join("chain.tsv"), chain)?;
    let mut report = Vec::new();
    summary.write_report(&mut report)?;
    write_file(&args.out.join("summary.tsv"), report)?;
    manifest.output("chain.tsv");
    manifest.output("summary.tsv");
    manifest.write(&args.out)?;
    for b in &summary.blocks {
        println!("{}\tstep {}\taccept {:.3}", b.name, b.step, b.rate());
    }
    Ok(())
}

pub fn synth(args: SynthArgs) -> Result<()> {
    let hyper = load_hyper(&args.config, args.seed)?;
    let mut manifest = RunManifest::new(Some(hyper.seed));
    manifest.input("config", &args.config)?;
    manifest.config = Some(format!(
        "users={}\nitems={}\nvocab={}\ndensity={}\n{}",
        args.users,
        args.items,
        args.vocab,
        args.density,
        hyper.to_config_string()
    ));
    let config = SyntheticConfig {
        input_density: args.density,
        ..SyntheticConfig::new(args.users, args.items, args.vocab, hyper.clone(), hyper.seed)
    };
    let data = dataio::generate_synthetic(&config)?;
    create_dir(&args.out)?;
    dataio::save_ratings(args.out.join("ratings.tsv"), &data.ratings)?;
    dataio::save_content(args.out.join("content.tsv"), &data.content)?;
    cf::save_factors(
        args.out.join("true_factors.txt"),
        &LatentFactors::new(data.users.clone(), data.items.clone())?,
    )?;
    sdae::save_network(args.out.join("true_network.txt"), &data.network, &hyper.to_config_string())?;
    for name in ["ratings.tsv", "content.tsv", "true_factors.txt", "true_network.txt"] {
        manifest.output(name);
    }
    manifest.write(&args.out)?;
    println!(
        "{} users, {} items, {} ratings, {} content entries (load content with normalization=none)",
        data.ratings.num_users(),
        data.ratings.num_items(),
        data.ratings.nnz(),
        data.content.nnz()
    );
    Ok(())
}

fn save_triples(path: &Path, t: &ContentTriples) -> Result<()> {
    let mut out = String::new();
    let _ = writeln!(out, "# items={} words={}", t.num_items, t.vocab_size);
    for (j, w, c) in &t.triples {
        let _ = writeln!(out, "{j}\t{w}\t{c}");
    }
    write_file(path, out)
}

pub fn vocab(args: VocabArgs) -> Result<()> {
    let mut manifest = RunManifest::new(None);
    manifest.input("content", &args.content)?;
    manifest.input("tokens", &args.tokens)?;
    let triples = dataio::load_content_triples(&args.content)?;
    let tokens = dataio::load_vocab_file(&args.tokens)?;
    let vocab = Vocabulary::select(&tokens, &triples, args.size)?;
    create_dir(&args.out)?;
    dataio::save_vocab_file(args.out.join("vocab.tsv"), &vocab.selected_tokens())?;
    save_triples(&args.out.join("content.tsv"), &vocab.remap(&triples))?;
    let mut scores = String::from("rank\ttoken\tword_id\tdoc_freq\tscore\n");
    for (r, t) in vocab.terms.iter().enumerate() {
        let _ = writeln!(scores, "{r}\t{}\t{}\t{}\t{}", t.token, t.word_id, t.doc_freq, t.score);
    }
    write_file(&args.out.join("scores.tsv"), scores)?;
    for name in ["vocab.tsv", "content.tsv", "scores.tsv"] {
        manifest.output(name);
    }
    manifest.write(&args.out)?;
    println!("selected {} of {} words", vocab.selected_size, tokens.len());
    Ok(())
}

