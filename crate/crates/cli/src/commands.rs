use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use redr_core::data::{
    assemble_examples, load_embeddings, parse_coqa, parse_coqa_file, parse_squad, Dataset, HistoryAnswers, Passage,
    PassageText, Story,
};
use redr_core::metrics::{evaluate, linguistic_profile};
use redr_core::model::{checkpoint, Redr, TrainConfig};
use redr_core::oracle::{GoldReplayOracle, LexicalOracle, MarkerOracle, NullOracle, PipeOracle, QaOracle};
use redr_core::rollout::{generate_conversation, to_coqa_json};
use redr_core::train::{finetune_rl, rl_instances, train_mle, JsonlLog, NullLog, TrainLog};
use serde_json::{json, Value};

use crate::failure::{CheckFailed, FlagError};
use crate::{
    AnalyzeArgs, Cli, Command, EvaluateArgs, FinetuneArgs, GenerateArgs, GradcheckArgs, OracleArgs, OracleKind,
    PassageFormat, TrainArgs,
};

pub fn run(cli: Cli) -> Result<ExitCode> {
    let Cli { config, seed, command } = cli;
    let runtime = || -> Result<Runtime> {
        Ok(Runtime {
            config: config.as_deref().map(|p| load_config(Some(p), None)).transpose()?,
            seed,
        })
    };
    match command {
        Command::Train(args) => train(load_config(config.as_deref(), seed)?, args),
        Command::FinetuneRl(args) => finetune(runtime()?, args),
        Command::Generate(args) => generate(runtime()?, args),
        Command::Evaluate(args) => evaluate_files(args),
        Command::Analyze(args) => analyze(args),
        Command::Gradcheck(args) => gradcheck(args),
    }
}

fn load_config(path: Option<&Path>, seed: Option<u64>) -> Result<TrainConfig> {
    let mut config = match path {
        Some(p) => TrainConfig::load(p).with_context(|| format!("reading config {}", p.display()))?,
        None => TrainConfig::default(),
    };
    if let Some(s) = seed {
        config.seed = s;
    }
    Ok(config)
}

/// Settings applied on top of a checkpoint's own config: everything except
/// the architecture, which the stored parameters fix.
struct Runtime {
    config: Option<TrainConfig>,
    seed: Option<u64>,
}

impl Runtime {
    fn apply(&self, model: &mut Redr) {
        if let Some(c) = &self.config {
            let arch = model.config.clone();
            model.config = TrainConfig {
                hidden_size: arch.hidden_size,
                lstm_layers: arch.lstm_layers,
                emb_dim: arch.emb_dim,
                reasoning_layers: arch.reasoning_layers,
                decision_maker: arch.decision_maker,
                ..c.clone()
            };
        }
        if let Some(s) = self.seed {
            model.config.seed = s;
        }
    }
}

fn required<'a>(value: &'a Option<PathBuf>, flag: &'static str) -> Result<&'a Path> {
    let path = value.as_deref().ok_or(FlagError::missing(flag))?;
    if !path.exists() {
        return Err(FlagError::invalid(flag, format!("{} does not exist", path.display())).into());
    }
    Ok(path)
}

fn existing<'a>(value: &'a Option<PathBuf>, flag: &'static str) -> Result<Option<&'a Path>> {
    value.as_ref().map(|_| required(value, flag)).transpose()
}

fn build_oracle(args: &OracleArgs) -> Result<Box<dyn QaOracle>> {
    Ok(match args.oracle {
        OracleKind::Lexical => Box::new(LexicalOracle::default()),
        OracleKind::Gold => Box::new(GoldReplayOracle),
        OracleKind::Marker => Box::new(MarkerOracle::new(args.marker.clone())),
        OracleKind::Null => Box::new(NullOracle),
        OracleKind::Pipe => {
            let cmd = args.oracle_cmd.as_deref().ok_or(FlagError::missing("--oracle-cmd"))?;
            let mut parts = cmd.split_whitespace().map(str::to_string);
            let program = parts
                .next()
                .ok_or(FlagError::invalid("--oracle-cmd", "empty command"))?;
            Box::new(PipeOracle::spawn(&program, &parts.collect::<Vec<_>>())?)
        }
    })
}

fn open_log(path: Option<&PathBuf>) -> Result<Box<dyn TrainLog>> {
    Ok(match path {
        Some(p) => {
            let file = File::create(p).with_context(|| format!("creating log {}", p.display()))?;
            Box::new(JsonlLog::new(BufWriter::new(file)))
        }
        None => Box::new(NullLog),
    })
}

fn write_json(out: Option<&Path>, value: &Value) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    match out {
        Some(p) => std::fs::write(p, text + "\n").with_context(|| format!("writing {}", p.display()))?,
        None => match writeln!(std::io::stdout().lock(), "{text}") {
            Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => {}
            r => r?,
        },
    }
    Ok(())
}

fn read_stories(path: &Path, flag: &'static str) -> Result<Vec<Story>> {
    let stories = parse_coqa_file(path).with_context(|| format!("{flag} {}", path.display()))?;
    if stories.is_empty() {
        return Err(FlagError::invalid(flag, "corpus holds no stories").into());
    }
    Ok(stories)
}

/// Examples of `stories` encoded with an existing vocabulary.
fn dataset_with_vocab(
    stories: &[Story],
    config: &TrainConfig,
    vocab: &redr_core::data::Vocabulary,
    answers: HistoryAnswers<'_>,
) -> Result<Dataset> {
    let examples = assemble_examples(stories, config.history_limits(), answers)?;
    let passages = stories.iter().map(|s| PassageText::from(&s.passage)).collect();
    Ok(Dataset::new(vocab.clone(), passages, examples))
}

fn train(mut config: TrainConfig, args: TrainArgs) -> Result<ExitCode> {
    let train_path = required(&args.train, "--train")?;
    let dev_path = existing(&args.dev, "--dev")?;
    let emb_path = existing(&args.embeddings, "--embeddings")?;
    if let Some(e) = args.epochs {
        config.max_epochs = e;
    }
    config.validate()?;
    let oracle = build_oracle(&args.oracle)?;
    let answers = if args.predicted_history {
        HistoryAnswers::Predicted(oracle.as_ref())
    } else {
        HistoryAnswers::Gold
    };

    let stories = read_stories(train_path, "--train")?;
    let train_ds = Dataset::from_stories(&stories, config.history_limits(), answers, config.min_freq)?;
    let dev_ds = match dev_path {
        Some(p) => Some(dataset_with_vocab(
            &read_stories(p, "--dev")?,
            &config,
            &train_ds.vocab,
            answers,
        )?),
        None => None,
    };
    log::info!(
        "train: {} examples, vocabulary {}, dev {} examples",
        train_ds.encoded.len(),
        train_ds.vocab.len(),
        dev_ds.as_ref().map_or(0, |d| d.encoded.len())
    );

    let mut model = Redr::new(config.clone(), train_ds.vocab.clone())?;
    if let Some(p) = emb_path {
        let file = File::open(p).with_context(|| format!("--embeddings {}", p.display()))?;
        let (table, hits) = load_embeddings(BufReader::new(file), &model.vocab, config.emb_dim, config.seed)?;
        log::info!("embeddings: {hits} of {} rows from file", model.vocab.len());
        model.set_embeddings(table)?;
    }

    let mut log = open_log(args.log.as_ref())?;
    let dev = dev_ds.as_ref().map_or(&[][..], |d| &d.encoded[..]);
    let report = train_mle(&mut model, &train_ds.encoded, dev, log.as_mut())?;
    drop(log);
    checkpoint::save(&args.out, &model).with_context(|| format!("--out {}", args.out.display()))?;

    let epochs: Vec<Value> = report
        .epochs
        .iter()
        .map(|e| {
            json!({
                "epoch": e.epoch,
                "train_loss": e.train.mean_loss(),
                "train_perplexity": e.train.perplexity(),
                "dev_loss": e.dev.map(|d| d.mean_loss()),
                "dev_perplexity": e.dev.map(|d| d.perplexity()),
            })
        })
        .collect();
    write_json(
        None,
        &json!({
            "checkpoint": args.out,
            "steps": report.steps,
            "best_epoch": report.best_epoch,
            "best_dev_loss": report.best_dev_loss,
            "epochs": epochs,
            "diverged": report.diverged,
        }),
    )?;
    if let Some(reason) = report.diverged {
        return Err(redr_core::Error::Training(format!("diverged: {reason}")).into());
    }
    Ok(ExitCode::SUCCESS)
}

fn finetune(runtime: Runtime, args: FinetuneArgs) -> Result<ExitCode> {
    let model_path = required(&args.model, "--model")?;
    let train_path = required(&args.train, "--train")?;
    let dev_path = existing(&args.dev, "--dev")?;
    let mut model = checkpoint::load(model_path).with_context(|| format!("--model {}", model_path.display()))?;
    runtime.apply(&mut model);
    if let Some(n) = args.max_updates {
        model.config.rl_max_updates = n;
    }
    let oracle = build_oracle(&args.oracle)?;
    let config = model.config.clone();
    let vocab = model.vocab.clone();
    let train_ds = dataset_with_vocab(
        &read_stories(train_path, "--train")?,
        &config,
        &vocab,
        HistoryAnswers::Gold,
    )?;
    let dev_ds = match dev_path {
        Some(p) => Some(dataset_with_vocab(
            &read_stories(p, "--dev")?,
            &config,
            &vocab,
            HistoryAnswers::Gold,
        )?),
        None => None,
    };
    let train = rl_instances(&train_ds)?;
    let dev = match &dev_ds {
        Some(d) => rl_instances(d)?,
        None => Vec::new(),
    };

    let mut log = open_log(args.log.as_ref())?;
    let report = finetune_rl(&mut model, &train, &dev, oracle.as_ref(), log.as_mut())?;
    drop(log);
    checkpoint::save(&args.out, &model).with_context(|| format!("--out {}", args.out.display()))?;
    write_json(
        None,
        &json!({
            "checkpoint": args.out,
            "updates": report.updates,
            "skipped": report.skipped,
            "evaluations": report.evaluations,
            "best_dev_reward": report.best_dev_reward,
            "epoch_rewards": report.epoch_rewards,
            "stop": report.stop,
        }),
    )?;
    Ok(ExitCode::SUCCESS)
}

fn read_passages(path: &Path, format: PassageFormat) -> Result<Vec<Passage>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("--passages {}", path.display()))?;
    let coqa =
        |t: &str| -> redr_core::Result<Vec<Passage>> { Ok(parse_coqa(t)?.into_iter().map(|s| s.passage).collect()) };
    let passages = match format {
        PassageFormat::Squad => parse_squad(&text)?,
        PassageFormat::Coqa => coqa(&text)?,
        PassageFormat::Auto => match parse_squad(&text) {
            Ok(p) => p,
            Err(squad) => coqa(&text)
                .map_err(|e| FlagError::invalid("--passages", format!("neither SQuAD ({squad}) nor CoQA ({e})")))?,
        },
    };
    if passages.is_empty() {
        return Err(FlagError::invalid("--passages", "file holds no passages").into());
    }
    Ok(passages)
}

fn generate(runtime: Runtime, args: GenerateArgs) -> Result<ExitCode> {
    if args.turns == 0 {
        return Err(FlagError::invalid("--turns", "must be at least 1").into());
    }
    let model_path = required(&args.model, "--model")?;
    let passages_path = required(&args.passages, "--passages")?;
    let mut model = checkpoint::load(model_path).with_context(|| format!("--model {}", model_path.display()))?;
    runtime.apply(&mut model);
    model.config.validate()?;
    let oracle = build_oracle(&args.oracle)?;
    let mut passages = read_passages(passages_path, args.format)?;
    if let Some(n) = args.limit {
        passages.truncate(n);
    }

    let mut conversations = Vec::with_capacity(passages.len());
    for (i, p) in passages.iter().enumerate() {
        let conv = generate_conversation(p, &model, oracle.as_ref(), args.turns)
            .with_context(|| format!("passage `{}`", p.id))?;
        log::info!("generated {}/{}: {}", i + 1, passages.len(), p.id);
        conversations.push(conv);
    }
    if let Some(path) = &args.trace {
        write_json(Some(path), &serde_json::to_value(&conversations)?)?;
    }
    write_json(args.out.as_deref(), &to_coqa_json(&conversations))?;
    Ok(ExitCode::SUCCESS)
}

fn read_questions(path: &Path, flag: &'static str) -> Result<Vec<Vec<String>>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("{flag} {}", path.display()))?;
    Ok(text
        .lines()
        .map(|l| l.split_whitespace().map(str::to_string).collect())
        .collect())
}

fn evaluate_files(args: EvaluateArgs) -> Result<ExitCode> {
    let hyp = read_questions(required(&args.hyp, "--hyp")?, "--hyp")?;
    let refs = read_questions(required(&args.reference, "--ref")?, "--ref")?;
    if hyp.len() != refs.len() {
        return Err(FlagError::invalid(
            "--ref",
            format!("{} references for {} hypotheses", refs.len(), hyp.len()),
        )
        .into());
    }
    let report = evaluate(&hyp, &refs)?;
    write_json(args.out.as_deref(), &serde_json::to_value(report)?)?;
    Ok(ExitCode::SUCCESS)
}

fn analyze(args: AnalyzeArgs) -> Result<ExitCode> {
    let questions = read_questions(required(&args.questions, "--questions")?, "--questions")?;
    let profile = linguistic_profile(&questions);
    write_json(args.out.as_deref(), &serde_json::to_value(profile)?)?;
    Ok(ExitCode::SUCCESS)
}

fn gradcheck(args: GradcheckArgs) -> Result<ExitCode> {
    if args.seeds == 0 {
        return Err(FlagError::invalid("--seeds", "must be at least 1").into());
    }
    let summary = crate::gradcheck::run(args.seeds, args.epsilon, args.tolerance)?;
    write_json(None, &summary.json)?;
    if summary.max_relative_error < args.tolerance {
        Ok(ExitCode::SUCCESS)
    } else {
        Err(CheckFailed(format!(
            "max relative error {:.3e} is not below {:e}",
            summary.max_relative_error, args.tolerance
        ))
        .into())
    }
}
