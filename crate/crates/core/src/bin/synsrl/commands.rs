use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use rayon::prelude::*;
use synsrl_core::corpus::{
    draw_pool, generate_synthetic, read_corpus, sample_fraction, strip_noisy_parses, write_corpus, Corpus,
    GenConfig, Instance, Split,
};
use synsrl_core::decode::{parse_constraint_mode, ConstraintSet, DecodeOptions, DecoderKind};
use synsrl_core::evalmetrics::{evaluate, report_table, Averaging, EvalSummary};
use synsrl_core::span_algebra::{SpanSet, TagSet};
use synsrl_core::tagger::Checkpoint;
use synsrl_core::train::{
    predict_with, prepare_corpus, train_joint_scratch, train_joint_ssl, train_si_continue, train_supervised,
    train_supervised_continue, Objective, TrainConfig, TrainReport,
};
use synsrl_core::Error;

use crate::manifest::RunManifest;
use crate::{expand_config, parse, Command, DecodeArgs, EvalArgs, Failure, ReplayArgs, SynthArgs, TrainArgs};

pub fn execute(command: Command, flags: Vec<String>) -> Result<()> {
    let (manifest, path) = match command {
        Command::Synth(a) => synth(&a, flags)?,
        Command::Train(a) => train(&a, flags)?,
        Command::Decode(a) => decode(&a, flags)?,
        Command::Eval(a) => eval(&a, flags)?,
        Command::Replay(a) => return replay(&a),
    };
    manifest.write(&path)
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| {
        Error::Io {
            path: path.to_path_buf(),
            source: e,
        }
        .into()
    })
}

fn create_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).map_err(|e| {
        Error::Io {
            path: path.to_path_buf(),
            source: e,
        }
        .into()
    })
}

fn create_parent(path: &Path) -> Result<()> {
    match path.parent() {
        Some(dir) if !dir.as_os_str().is_empty() => create_dir(dir),
        _ => Ok(()),
    }
}

fn keep_or_strip(value: &str, flag: &str) -> Result<bool> {
    match value {
        "keep" => Ok(false),
        "strip" => Ok(true),
        other => Err(Failure::Usage(format!("--{flag} must be keep or strip, got {other:?}")).into()),
    }
}

fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

// Split seeds are offset in the high half so instance streams never collide.
fn split_seed(seed: u64, split: Split) -> u64 {
    let k = match split {
        Split::Train => 0,
        Split::Dev => 1,
        Split::Test => 2,
        Split::Unlabeled => 3,
    };
    seed.wrapping_add(k << 32)
}

fn synth(a: &SynthArgs, flags: Vec<String>) -> Result<(RunManifest, PathBuf)> {
    create_dir(&a.out_dir)?;
    let base = GenConfig {
        min_len: a.min_len,
        max_len: a.max_len,
        roles: a.roles.clone(),
        marker_rate: a.marker_rate,
        distractor_rate: a.distractor_rate,
        noise_rate: a.noise,
        ..GenConfig::default()
    };
    let mut manifest = RunManifest::new("synth", flags);
    manifest.seeds = vec![a.seed];
    let mut ledger = String::new();
    for (split, n) in [
        (Split::Train, a.n_train),
        (Split::Dev, a.n_dev),
        (Split::Test, a.n_test),
        (Split::Unlabeled, a.n_unlabeled),
    ] {
        let config = GenConfig {
            n_instances: n,
            seed: split_seed(a.seed, split),
            ..base.clone()
        };
        let synthetic = generate_synthetic(&config, split)?;
        let path = a.out_dir.join(format!("{split}.txt"));
        write_corpus(&synthetic.corpus, &path)?;
        manifest.add_output(&path)?;
        let _ = writeln!(ledger, "# split={split} corrupted_instances={}", synthetic.corrupted_instances().len());
        ledger.push_str(&synthetic.ledger_text());
    }
    let ledger_path = a.out_dir.join("ledger.txt");
    write_text(&ledger_path, &ledger)?;
    manifest.add_output(&ledger_path)?;
    let path = a.manifest.clone().unwrap_or_else(|| a.out_dir.join("manifest.txt"));
    println!("wrote {} corpora and ledger to {}", 4, a.out_dir.display());
    Ok((manifest, path))
}

fn train_config(a: &TrainArgs, objective: Objective, seed: u64) -> Result<TrainConfig> {
    let mut c = TrainConfig::for_objective(objective);
    c.seed = seed;
    c.labeled_fraction = a.fraction;
    c.unlabeled_multiplier = a.unlabeled_mult;
    if let Some(v) = a.alpha1 {
        c.weights.alpha1 = v;
    }
    if let Some(v) = a.alpha2 {
        c.weights.alpha2 = v;
    }
    if let Some(v) = a.beta {
        c.beta = v;
    }
    if let Some(v) = a.lr {
        c.learning_rate = v;
    }
    if let Some(v) = a.patience {
        c.patience = v;
    }
    if let Some(v) = a.max_epochs {
        c.max_epochs = v;
    }
    if let Some(v) = a.batch_size {
        c.batch_size = v;
    }
    if let Some(v) = &a.si_coefficient {
        c.si_coefficient = v.parse()?;
    }
    if let Some(v) = &a.si_decoder {
        c.si_decoder = v.parse()?;
    }
    if let Some(v) = &a.clip_norm {
        c.clip_norm = match v.as_str() {
            "none" => None,
            x => Some(x.parse().map_err(|_| Failure::Usage(format!("bad --clip-norm {x:?}")))?),
        };
    }
    if let Some(v) = a.buckets {
        c.buckets = v;
    }
    if let Some(v) = a.embed {
        c.embed = v;
    }
    if let Some(v) = a.hidden {
        c.hidden = v;
    }
    c.validate()?;
    Ok(c)
}

fn resolved_config(c: &TrainConfig) -> Vec<(String, String)> {
    let clip = c.clip_norm.map_or("none".to_string(), |v| v.to_string());
    vec![
        ("objective".into(), c.objective.to_string()),
        ("alpha1".into(), c.weights.alpha1.to_string()),
        ("alpha2".into(), c.weights.alpha2.to_string()),
        ("beta".into(), c.beta.to_string()),
        ("lr".into(), c.learning_rate.to_string()),
        ("patience".into(), c.patience.to_string()),
        ("max_epochs".into(), c.max_epochs.to_string()),
        ("batch_size".into(), c.batch_size.to_string()),
        ("si_coefficient".into(), c.si_coefficient.to_string()),
        ("si_decoder".into(), c.si_decoder.to_string()),
        ("clip_norm".into(), clip),
        ("buckets".into(), c.buckets.to_string()),
        ("embed".into(), c.embed.to_string()),
        ("hidden".into(), c.hidden.to_string()),
    ]
}

struct SeedRun {
    seed: u64,
    checkpoint: Checkpoint,
    report: TrainReport,
    pretrained: Option<PathBuf>,
}

#[allow(clippy::too_many_arguments)]
fn train_seed(
    a: &TrainArgs,
    objective: Objective,
    seed: u64,
    train: &Corpus,
    dev: &Corpus,
    unlabeled: Option<&Corpus>,
    tagset: &TagSet,
    strip: bool,
) -> Result<SeedRun> {
    let config = train_config(a, objective, seed)?;
    let sample = sample_fraction(train, a.fraction, seed)?;
    let labeled = if strip {
        strip_noisy_parses(&sample.labeled, tagset)?
    } else {
        sample.labeled
    };
    let source = unlabeled.unwrap_or(&sample.remainder);
    let pool = draw_pool(source, a.unlabeled_mult * labeled.len(), seed);
    let mut pretrained_path = None;
    let pretrained = if objective.continues() {
        let template = a
            .from
            .as_deref()
            .ok_or_else(|| Failure::Usage(format!("--objective {objective} needs --from")))?;
        let path = PathBuf::from(template.replace("{seed}", &seed.to_string()));
        let ckpt = Checkpoint::load(&path).with_context(|| format!("loading {}", path.display()))?;
        if ckpt.tagset != *tagset {
            return Err(Error::Contract(format!(
                "checkpoint {} was trained for roles {:?}, corpus has {:?}",
                path.display(),
                ckpt.tagset.roles(),
                tagset.roles()
            ))
            .into());
        }
        pretrained_path = Some(path);
        Some(ckpt.params)
    } else {
        if a.from.is_some() {
            return Err(Failure::Usage(format!("--objective {objective} trains from scratch; drop --from")).into());
        }
        None
    };
    let (params, report) = match (objective, &pretrained) {
        (Objective::Supervised, None) => train_supervised(&labeled, dev, tagset, &config)?,
        (Objective::JointScratch, None) => train_joint_scratch(&labeled, dev, tagset, &config)?,
        (Objective::SiContinue, Some(p)) => train_si_continue(p, &pool, dev, tagset, &config)?,
        (Objective::JointSslContinue, Some(p)) => train_joint_ssl(p, &labeled, &pool, dev, tagset, &config)?,
        (Objective::SupervisedContinue, Some(p)) => train_supervised_continue(p, &labeled, dev, tagset, &config)?,
        _ => unreachable!("continue objectives always carry a checkpoint"),
    };
    Ok(SeedRun {
        seed,
        checkpoint: Checkpoint::new(params, tagset.clone())?,
        report,
        pretrained: pretrained_path,
    })
}

fn summary_text(name: &str, runs: &[SeedRun]) -> String {
    let mut out = String::from("model\tseed\tbest_epoch\tdev_f1\tdev_disagreement\n");
    let fmt_dis = |d: Option<f64>| d.map_or("-".to_string(), |v| format!("{v:.4}"));
    for r in runs {
        let epoch = r.report.best_epoch.map_or("-".to_string(), |e| e.to_string());
        let _ = writeln!(
            out,
            "{name}\t{}\t{epoch}\t{:.6}\t{}",
            r.seed,
            r.report.best_dev.f1,
            fmt_dis(r.report.best_dev.avg_disagreement)
        );
    }
    let k = runs.len() as f64;
    let f1 = runs.iter().map(|r| r.report.best_dev.f1).sum::<f64>() / k;
    let dis: Option<Vec<f64>> = runs.iter().map(|r| r.report.best_dev.avg_disagreement).collect();
    let dis = dis.map(|v| v.iter().sum::<f64>() / k);
    let _ = writeln!(out, "{name}\tmean\t-\t{f1:.6}\t{}", fmt_dis(dis));
    out
}

fn train(a: &TrainArgs, flags: Vec<String>) -> Result<(RunManifest, PathBuf)> {
    let objective: Objective = a.objective.parse()?;
    let strip = keep_or_strip(&a.labeled_parses, "labeled-parses")?;
    if a.seeds.is_empty() {
        return Err(Failure::Usage("--seeds must list at least one seed".into()).into());
    }
    // Fail fast on flag conflicts before reading any data.
    let first = train_config(a, objective, a.seeds[0])?;
    let train = read_corpus(&a.train, Split::Train)?;
    let dev = read_corpus(&a.dev, Split::Dev)?;
    let unlabeled = match &a.unlabeled {
        Some(p) => {
            let pool = read_corpus(p, Split::Unlabeled)?;
            if let Some(i) = pool.iter().position(|inst| inst.gold_tags.is_some()) {
                return Err(Failure::Contract(format!(
                    "{}: unlabeled instance {} carries gold tags",
                    p.display(),
                    i + 1
                ))
                .into());
            }
            Some(pool)
        }
        None => None,
    };
    let tagset = train.tagset()?;
    let runs: Vec<SeedRun> = a
        .seeds
        .par_iter()
        .map(|&seed| train_seed(a, objective, seed, &train, &dev, unlabeled.as_ref(), &tagset, strip))
        .collect::<Result<_>>()?;

    create_dir(&a.out_dir)?;
    let name = a.name.clone().unwrap_or_else(|| objective.to_string());
    let mut manifest = RunManifest::new("train", flags);
    manifest.seeds = a.seeds.clone();
    manifest.resolved = resolved_config(&first);
    manifest.add_input(&a.train)?;
    manifest.add_input(&a.dev)?;
    if let Some(p) = &a.unlabeled {
        manifest.add_input(p)?;
    }
    for r in &runs {
        if let Some(p) = &r.pretrained {
            manifest.add_input(p)?;
        }
    }
    for r in &runs {
        let ckpt = a.out_dir.join(format!("{name}-seed{}.ckpt", r.seed));
        r.checkpoint.save(&ckpt)?;
        manifest.add_output(&ckpt)?;
        let report = a.out_dir.join(format!("{name}-seed{}.report.txt", r.seed));
        write_text(&report, &r.report.to_records())?;
        manifest.add_output(&report)?;
    }
    let summary = summary_text(&name, &runs);
    let summary_path = a.out_dir.join(format!("{name}-summary.txt"));
    write_text(&summary_path, &summary)?;
    manifest.add_output(&summary_path)?;
    print!("{summary}");
    let path = a
        .manifest
        .clone()
        .unwrap_or_else(|| a.out_dir.join(format!("{name}.manifest.txt")));
    Ok((manifest, path))
}

fn decode(a: &DecodeArgs, flags: Vec<String>) -> Result<(RunManifest, PathBuf)> {
    let decoder: DecoderKind = a.decoder.parse()?;
    let strip = keep_or_strip(&a.noisy_parses, "noisy-parses")?;
    let ckpt = Checkpoint::load(&a.checkpoint)?;
    let tagset = &ckpt.tagset;
    let mode = parse_constraint_mode(&a.syntax_mode)?;
    let options = DecodeOptions {
        decoder,
        constraints: ConstraintSet::from_names(&a.constraints, mode, tagset)?,
        steps: a.steps,
        step_size: a.step_size,
    };
    let input = read_corpus(&a.input, Split::Test)?;
    if options.needs_parses() && input.iter().all(|i| i.parse.is_none()) {
        return Err(Error::Invalid(format!(
            "decoder {decoder} with these constraints needs parses, but {} has none",
            a.input.display()
        ))
        .into());
    }
    let working = if strip {
        if input.iter().any(|i| i.gold_tags.is_none()) {
            return Err(Error::Invalid("--noisy-parses strip needs gold tags on every input instance".into()).into());
        }
        strip_noisy_parses(&input, tagset)?
    } else {
        input.clone()
    };
    let prepared = prepare_corpus(&working, tagset)?;
    let predictions = predict_with(&ckpt.params, &prepared, tagset, &options)?;
    let instances: Vec<Instance> = input
        .iter()
        .zip(&predictions)
        .map(|(inst, tags)| Instance {
            gold_tags: Some(tags.iter().map(|&t| tagset.name(t).to_string()).collect()),
            ..inst.clone()
        })
        .collect();
    let out = Corpus::new(input.split, instances);
    create_parent(&a.out)?;
    write_corpus(&out, &a.out)?;
    let mut manifest = RunManifest::new("decode", flags);
    manifest.add_input(&a.checkpoint)?;
    manifest.add_input(&a.input)?;
    manifest.add_output(&a.out)?;
    println!("decoded {} instances with {decoder} into {}", out.len(), a.out.display());
    let path = a.manifest.clone().unwrap_or_else(|| with_suffix(&a.out, ".manifest.txt"));
    Ok((manifest, path))
}

fn check_aligned(gold: &Corpus, pred: &Corpus, name: &str) -> Result<()> {
    if gold.len() != pred.len() {
        return Err(Error::Format(format!(
            "{name} has {} instances, gold has {}",
            pred.len(),
            gold.len()
        ))
        .into());
    }
    for (i, (g, p)) in gold.iter().zip(pred.iter()).enumerate() {
        if g.tokens != p.tokens || g.predicate_index != p.predicate_index {
            return Err(Error::Format(format!("{name} instance {i} does not match the gold instance")).into());
        }
        if p.gold_tags.is_none() {
            return Err(Error::Format(format!("{name} instance {i} has no predicted tags")).into());
        }
    }
    Ok(())
}

fn eval(a: &EvalArgs, flags: Vec<String>) -> Result<(RunManifest, PathBuf)> {
    let averaging: Averaging = a.averaging.parse()?;
    let strip = keep_or_strip(&a.noisy_parses, "noisy-parses")?;
    let records = match a.format.as_str() {
        "table" => false,
        "records" => true,
        other => return Err(Failure::Usage(format!("--format must be table or records, got {other:?}")).into()),
    };
    let gold = read_corpus(&a.gold, Split::Test)?;
    let tagset = gold.tagset()?;
    let gold_eval = if strip { strip_noisy_parses(&gold, &tagset)? } else { gold.clone() };
    let parses: Vec<Option<SpanSet>> = gold_eval.iter().map(Instance::parse_spans).collect::<synsrl_core::Result<_>>()?;
    let golds: Vec<Vec<usize>> = gold
        .iter()
        .enumerate()
        .map(|(i, inst)| match &inst.gold_tags {
            Some(t) => Ok(tagset.parse_tags(t)?),
            None => Err(Error::Format(format!("gold instance {i} has no tags")).into()),
        })
        .collect::<Result<_>>()?;

    let mut manifest = RunManifest::new("eval", flags);
    manifest.add_input(&a.gold)?;
    let mut rows: Vec<(String, EvalSummary)> = Vec::new();
    for spec in &a.pred {
        let (name, path) = match spec.split_once('=') {
            Some((n, p)) => (n.to_string(), PathBuf::from(p)),
            None => {
                let p = PathBuf::from(spec);
                let stem = p.file_stem().map_or_else(|| spec.clone(), |s| s.to_string_lossy().into_owned());
                (stem, p)
            }
        };
        if rows.iter().any(|(n, _)| *n == name) {
            return Err(Failure::Usage(format!("prediction name {name:?} given twice")).into());
        }
        let pred = read_corpus(&path, Split::Test)?;
        check_aligned(&gold, &pred, &name)?;
        let preds: Vec<Vec<usize>> = pred
            .iter()
            .map(|p| tagset.parse_tags(p.gold_tags.as_deref().unwrap_or_default()))
            .collect::<synsrl_core::Result<_>>()?;
        rows.push((name, evaluate(&preds, &golds, &parses, &tagset, averaging)?));
        manifest.add_input(&path)?;
    }
    if let Some(b) = &a.baseline {
        if !rows.iter().any(|(n, _)| n == b) {
            return Err(Failure::Usage(format!("--baseline {b:?} is not among the prediction names")).into());
        }
    }
    let text = if records {
        rows.iter().map(|(n, s)| s.to_record(n) + "\n").collect::<String>()
    } else {
        report_table(&rows, a.baseline.as_deref())?
    };
    print!("{text}");
    if let Some(out) = &a.out {
        create_parent(out)?;
        write_text(out, &text)?;
        manifest.add_output(out)?;
    } else {
        manifest.add_output_bytes("<stdout>", text.as_bytes());
    }
    let path = a.manifest.clone().unwrap_or_else(|| match &a.out {
        Some(out) => with_suffix(out, ".manifest.txt"),
        None => PathBuf::from("eval.manifest.txt"),
    });
    Ok((manifest, path))
}

fn replay(a: &ReplayArgs) -> Result<()> {
    let recorded = RunManifest::read(&a.manifest)?;
    let version = env!("CARGO_PKG_VERSION");
    if recorded.version != version {
        return Err(Failure::Contract(format!(
            "manifest written by version {}, this is {version}",
            recorded.version
        ))
        .into());
    }
    for (path, digest) in &recorded.inputs {
        let now = crate::manifest::file_digest(path)?;
        if now != *digest {
            return Err(Failure::Data(format!("input {} changed since the run", path.display())).into());
        }
    }
    let mut argv = vec!["synsrl".to_string(), recorded.command.clone()];
    argv.extend(recorded.args.iter().cloned());
    let argv = expand_config(argv)?;
    let (command, flags) = parse(argv).map_err(|e| Failure::Usage(e.to_string()))?;
    if matches!(command, Command::Replay(_)) {
        return Err(Failure::Usage("a replay manifest cannot replay itself".into()).into());
    }
    let (fresh, path) = match command {
        Command::Synth(a) => synth(&a, flags)?,
        Command::Train(a) => train(&a, flags)?,
        Command::Decode(a) => decode(&a, flags)?,
        Command::Eval(a) => eval(&a, flags)?,
        Command::Replay(_) => unreachable!(),
    };
    if fresh.outputs != recorded.outputs {
        let differing: Vec<String> = recorded
            .outputs
            .iter()
            .filter(|o| !fresh.outputs.contains(o))
            .map(|(p, _)| p.display().to_string())
            .collect();
        return Err(Failure::Contract(format!("replay differs in outputs: {}", differing.join(", "))).into());
    }
    fresh.write(&path)?;
    println!("replay identical: {} outputs match", fresh.outputs.len());
    Ok(())
}
