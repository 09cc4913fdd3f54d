//! `dualfilter` command-line entry point. Each subcommand reads and writes
//! files, so the pipeline can be run in one go (`run`) or step by step.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, CommandFactory, FromArgMatches, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use dualfilter::corpus::{expand_to_nli, load_corpus, write_corpus, AspectSet, PairSet};
use dualfilter::embeddings::{load_embeddings, save_embeddings, score_pairs};
use dualfilter::filtering::{dual_filter, FilterConfig, LabseMode};
use dualfilter::metrics::{evaluate, stats_table};
use dualfilter::pipeline::{
    digest_bytes, format_versions, property_report, run_phase1, run_phase2, run_pipeline, write_run_dir, Regime,
    RegimeConfig,
};
use dualfilter::refclassifier::{fresh, import_logits, pseudo_label, train, LabelSource, TrainConfig};
use dualfilter::synth::{generate, run_benchmark, SynthConfig};
use dualfilter::{Classifier, Error, Result};

#[derive(Parser)]
#[command(name = "dualfilter", about = "Pseudo-label, dual-filter and evaluate aspect sentiment pairs")]
#[command(disable_version_flag = true)]
struct Cli {
    /// Run seed; overrides the config file.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Suppress summaries on stdout.
    #[arg(long, global = true)]
    quiet: bool,
    /// Directory for default outputs and manifests.
    #[arg(long, global = true, default_value = ".")]
    out_dir: PathBuf,
    /// JSON run configuration; flags override its fields.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Print toolkit and file format versions.
    #[arg(long)]
    version: bool,
    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Args, Clone, Default)]
struct TrainFlags {
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    /// Weight each pseudo-labeled example's gradient by its MSP.
    #[arg(long)]
    confidence_weighting: Option<bool>,
    /// Drop pseudo-labeled examples with MSP below this value.
    #[arg(long)]
    msp_gate: Option<f64>,
    #[arg(long, conflicts_with = "msp_gate")]
    no_gate: bool,
}

impl TrainFlags {
    fn apply(&self, cfg: &mut TrainConfig) {
        if let Some(v) = self.learning_rate {
            cfg.learning_rate = v;
        }
        if let Some(v) = self.epochs {
            cfg.epochs = v;
        }
        if let Some(v) = self.batch_size {
            cfg.batch_size = v;
        }
        if let Some(v) = self.confidence_weighting {
            cfg.confidence_weighting = v;
        }
        if let Some(v) = self.msp_gate {
            cfg.msp_gate = Some(v);
        }
        if self.no_gate {
            cfg.msp_gate = None;
        }
    }
}

#[derive(Args, Clone, Default)]
struct FilterFlags {
    #[arg(long)]
    msp_threshold: Option<f64>,
    /// `fixed` or `batch_mean`.
    #[arg(long)]
    labse_mode: Option<LabseMode>,
    #[arg(long)]
    labse_threshold: Option<f64>,
}

impl FilterFlags {
    fn apply(&self, cfg: &mut FilterConfig) {
        if let Some(v) = self.msp_threshold {
            cfg.msp_threshold = v;
        }
        if let Some(v) = self.labse_mode {
            cfg.labse_mode = v;
        }
        if let Some(v) = self.labse_threshold {
            cfg.labse_threshold = v;
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Labels {
    Gold,
    Pseudo,
}

#[derive(Subcommand)]
enum Command {
    /// Expand a review corpus into one pair per (review, aspect).
    Expand {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Comma list of `key=surface` items or default aspect keys.
        #[arg(long)]
        aspects: Option<String>,
    },
    /// Train a classifier on gold or pseudo labels.
    Train {
        #[arg(long)]
        pairs: PathBuf,
        #[arg(long, value_enum)]
        labels: Labels,
        /// Phase-1 model to transfer from (pseudo labels only).
        #[arg(long)]
        from: Option<PathBuf>,
        #[arg(long)]
        model_out: Option<PathBuf>,
        #[command(flatten)]
        train: TrainFlags,
    },
    /// Attach probabilities, pseudo labels and MSP from a model or imported logits.
    PseudoLabel {
        #[arg(long)]
        pairs: PathBuf,
        #[arg(long, required_unless_present = "logits", conflicts_with = "logits")]
        model: Option<PathBuf>,
        /// LGT1 logits keyed by pair id.
        #[arg(long)]
        logits: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Fill embedding similarity scores from EMB1 files.
    Score {
        #[arg(long)]
        pairs: PathBuf,
        #[arg(long)]
        review_emb: PathBuf,
        #[arg(long)]
        aspect_emb: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Keep pairs that pass both the confidence and the similarity gate.
    Filter {
        #[arg(long)]
        pairs: PathBuf,
        #[command(flatten)]
        filter: FilterFlags,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Phase 1, pseudo-labeling, filtering, phase 2 and optional evaluation.
    Run {
        #[arg(long)]
        source: PathBuf,
        #[arg(long)]
        target: PathBuf,
        #[arg(long)]
        test: Option<PathBuf>,
        /// Score target pairs first (requires --aspect-emb).
        #[arg(long, requires = "aspect_emb")]
        review_emb: Option<PathBuf>,
        #[arg(long, requires = "review_emb")]
        aspect_emb: Option<PathBuf>,
        /// `target_only`, `joint_shuffled` or `transfer`.
        #[arg(long)]
        regime: Option<Regime>,
        #[arg(long)]
        no_filter: bool,
        #[command(flatten)]
        filter: FilterFlags,
        /// Training flags, applied to both phases.
        #[command(flatten)]
        train: TrainFlags,
    },
    /// Score predicted pairs against gold pairs.
    Eval {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        gold: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Count, mean and std of both scores plus the `none` correlation.
    Stats {
        #[arg(long)]
        pairs: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Gradient-variance and confidence checks for a pair of models.
    Check {
        #[arg(long)]
        pre: PathBuf,
        #[arg(long)]
        post: PathBuf,
        /// Every pseudo-labeled target pair.
        #[arg(long)]
        full: PathBuf,
        /// Pairs that survived filtering.
        #[arg(long)]
        filtered: PathBuf,
        #[arg(long)]
        learning_rate: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write the synthetic two-dialect corpora and embeddings.
    Synth {
        #[arg(long)]
        source_reviews: Option<usize>,
        #[arg(long)]
        target_reviews: Option<usize>,
        #[arg(long)]
        test_reviews: Option<usize>,
        #[arg(long)]
        low_similarity_rate: Option<f64>,
        #[arg(long)]
        noise_rate: Option<f64>,
        /// Also run the filtered-vs-unfiltered benchmark.
        #[arg(long)]
        benchmark: bool,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Expand { .. } => "expand",
            Command::Train { .. } => "train",
            Command::PseudoLabel { .. } => "pseudo-label",
            Command::Score { .. } => "score",
            Command::Filter { .. } => "filter",
            Command::Run { .. } => "run",
            Command::Eval { .. } => "eval",
            Command::Stats { .. } => "stats",
            Command::Check { .. } => "check",
            Command::Synth { .. } => "synth",
        }
    }
}

fn version_text() -> String {
    let formats: Vec<String> = format_versions().iter().map(|(k, v)| format!("{k} v{v}")).collect();
    format!("dualfilter {} ({})", dualfilter::VERSION, formats.join(", "))
}

/// Files read and written by one invocation, recorded in its manifest.
struct Session {
    out_dir: PathBuf,
    quiet: bool,
    cfg: RegimeConfig,
    inputs: Vec<PathBuf>,
    outputs: Vec<PathBuf>,
}

impl Session {
    fn input(&mut self, path: &Path) -> PathBuf {
        self.inputs.push(path.to_path_buf());
        path.to_path_buf()
    }

    /// `explicit` if given, otherwise `default` inside the output directory.
    fn output(&mut self, explicit: &Option<PathBuf>, default: &str) -> PathBuf {
        let path = explicit.clone().unwrap_or_else(|| self.out_dir.join(default));
        self.outputs.push(path.clone());
        path
    }

    fn say(&self, text: impl AsRef<str>) {
        if !self.quiet {
            println!("{}", text.as_ref());
        }
    }

    fn write_manifest(&self, command: &str, settings: Value) -> Result<()> {
        let digests = |paths: &[PathBuf]| -> Result<BTreeMap<String, String>> {
            paths
                .iter()
                .map(|p| {
                    let bytes = fs::read(p).map_err(|e| io_error(p, e))?;
                    Ok((p.display().to_string(), digest_bytes(&bytes)))
                })
                .collect()
        };
        let manifest = json!({
            "toolkit_version": dualfilter::VERSION,
            "formats": format_versions(),
            "command": command,
            "settings": settings,
            "inputs": digests(&self.inputs)?,
            "outputs": digests(&self.outputs)?,
            "created_unix_secs": SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0),
        });
        let path = self.out_dir.join(format!("{command}.manifest.json"));
        fs::write(&path, serde_json::to_string_pretty(&manifest)? + "\n").map_err(|e| io_error(&path, e))
    }
}

fn io_error(path: &Path, source: std::io::Error) -> Error {
    Error::Io { path: path.to_path_buf(), source }
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| io_error(path, e))
}

fn load_config(path: Option<&Path>) -> Result<RegimeConfig> {
    match path {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| io_error(p, e))?;
            Ok(serde_json::from_str(&text)?)
        }
        None => Ok(RegimeConfig::default()),
    }
}

fn execute(s: &mut Session, command: Command) -> Result<()> {
    let name = command.name();
    let settings = match command {
        Command::Expand { input, out, aspects } => {
            let aspects = match &aspects {
                Some(list) => AspectSet::parse_list(list)?,
                None => AspectSet::default(),
            };
            let reviews = load_corpus(s.input(&input))?;
            let pairs = expand_to_nli(&reviews, &aspects)?;
            pairs.save(s.output(&out, "pairs.jsonl"))?;
            s.say(format!("{} reviews x {} aspects -> {} pairs", reviews.len(), aspects.len(), pairs.len()));
            let keys: Vec<&str> = aspects.iter().map(|a| a.key.as_str()).collect();
            json!({ "aspects": keys })
        }
        Command::Train { pairs, labels, from, model_out, train: flags } => {
            let set = PairSet::load(s.input(&pairs))?;
            let seed = s.cfg.seed;
            let (params, report, settings) = match (labels, &from) {
                (Labels::Gold, Some(_)) => {
                    return Err(Error::Config("--from applies to pseudo-label training only".into()))
                }
                (Labels::Gold, None) => {
                    let mut cfg = s.cfg.phase1.clone();
                    flags.apply(&mut cfg);
                    let out = run_phase1(&set, &cfg, seed)?;
                    (out.params, out.report, json!({ "labels": "gold", "train": cfg, "seed": seed }))
                }
                (Labels::Pseudo, Some(pre)) => {
                    // Same path as phase 2 of `run`, without filtering.
                    let pre = Classifier::load(s.input(pre))?;
                    let mut cfg = RegimeConfig { regime: Regime::Transfer, filtering_enabled: false, ..s.cfg.clone() };
                    flags.apply(&mut cfg.phase2);
                    let out = run_phase2(&pre, &set, None, &cfg)?;
                    let settings =
                        json!({ "labels": "pseudo", "regime": "transfer", "train": cfg.phase2, "seed": seed });
                    (out.params, out.manifest.phase2, settings)
                }
                (Labels::Pseudo, None) => {
                    let mut cfg = TrainConfig { seed, ..s.cfg.phase2.clone() };
                    flags.apply(&mut cfg);
                    let out = train(&fresh::<f32>(&set, seed), &set, &cfg, LabelSource::Pseudo)?;
                    (out.params, out.report, json!({ "labels": "pseudo", "train": cfg, "seed": seed }))
                }
            };
            params.save(s.output(&model_out, "model.kpc"))?;
            s.say(format!(
                "trained on {} examples, loss {:.4} -> {:.4}",
                report.active_examples,
                report.initial_loss,
                report.final_loss()
            ));
            json!({ "config": settings, "report": report, "model_digest": params.digest() })
        }
        Command::PseudoLabel { pairs, model, logits, out } => {
            let set = PairSet::load(s.input(&pairs))?;
            let labeled = match (&model, &logits) {
                (Some(m), _) => pseudo_label(&Classifier::load(s.input(m))?, set)?,
                (None, Some(l)) => import_logits(set, s.input(l))?,
                (None, None) => return Err(Error::Config("need --model or --logits".into())),
            };
            labeled.save(s.output(&out, "pseudo_labeled.jsonl"))?;
            s.say(format!("labeled {} pairs", labeled.len()));
            json!({ "source": if model.is_some() { "model" } else { "logits" } })
        }
        Command::Score { pairs, review_emb, aspect_emb, out } => {
            let set = PairSet::load(s.input(&pairs))?;
            let reviews = load_embeddings(s.input(&review_emb))?;
            let aspects = load_embeddings(s.input(&aspect_emb))?;
            let scored = score_pairs(set, &reviews, &aspects)?;
            scored.save(s.output(&out, "scored.jsonl"))?;
            s.say(format!("scored {} pairs", scored.len()));
            json!({ "dim": reviews.dim() })
        }
        Command::Filter { pairs, filter, out, report } => {
            let mut cfg = s.cfg.filter;
            filter.apply(&mut cfg);
            let set = PairSet::load(s.input(&pairs))?;
            let (kept, rep) = dual_filter(&set, &cfg)?;
            kept.save(s.output(&out, "filtered.jsonl"))?;
            write_text(&s.output(&report, "filter_report.json"), &(rep.to_json() + "\n"))?;
            s.say(format!(
                "kept {} of {} pairs (labse threshold {:.4})",
                rep.kept_count, rep.input_count, rep.effective_labse_threshold
            ));
            json!({ "filter": cfg })
        }
        Command::Run { source, target, test, review_emb, aspect_emb, regime, no_filter, filter, train: flags } => {
            let mut cfg = s.cfg.clone();
            if let Some(r) = regime {
                cfg.regime = r;
            }
            if no_filter {
                cfg.filtering_enabled = false;
            }
            filter.apply(&mut cfg.filter);
            flags.apply(&mut cfg.phase1);
            flags.apply(&mut cfg.phase2);
            let source = PairSet::load(&source)?;
            let mut target = PairSet::load(&target)?;
            if let (Some(r), Some(a)) = (&review_emb, &aspect_emb) {
                target = score_pairs(target, &load_embeddings(r)?, &load_embeddings(a)?)?;
            }
            let test = test.as_deref().map(PairSet::load).transpose()?;
            let run = run_pipeline(&source, &target, test.as_ref(), &cfg)?;
            write_run_dir(&s.out_dir, &run)?;
            s.say(format!(
                "{:?}: kept {} of {} target pairs",
                run.manifest.status,
                run.kept.len(),
                run.pseudo_labeled.len()
            ));
            if let Some(eval) = &run.manifest.eval {
                s.say(eval.render("phase 2").trim_end());
            }
            // The run directory carries its own manifest.
            return Ok(());
        }
        Command::Eval { pred, gold, out } => {
            let report = evaluate(&PairSet::load(s.input(&pred))?, &PairSet::load(s.input(&gold))?)?;
            write_text(&s.output(&out, "eval.json"), &(report.to_json() + "\n"))?;
            s.say(report.render("prediction").trim_end());
            Value::Null
        }
        Command::Stats { pairs, out } => {
            let table = stats_table(&PairSet::load(s.input(&pairs))?)?;
            let text = serde_json::to_string_pretty(&table)?;
            write_text(&s.output(&out, "stats.json"), &(text.clone() + "\n"))?;
            s.say(text);
            Value::Null
        }
        Command::Check { pre, post, full, filtered, learning_rate, out } => {
            let pre = Classifier::load(s.input(&pre))?;
            let post = Classifier::load(s.input(&post))?;
            let full = PairSet::load(s.input(&full))?;
            let filtered = PairSet::load(s.input(&filtered))?;
            let lr = learning_rate.unwrap_or(s.cfg.phase2.learning_rate);
            let report = property_report(&pre, &post, &full, &filtered, lr, s.cfg.seed)?;
            let text = serde_json::to_string_pretty(&report)?;
            write_text(&s.output(&out, "check.json"), &(text.clone() + "\n"))?;
            s.say(text);
            json!({ "learning_rate": lr, "seed": s.cfg.seed })
        }
        Command::Synth { source_reviews, target_reviews, test_reviews, low_similarity_rate, noise_rate, benchmark } => {
            let d = SynthConfig::default();
            let synth = SynthConfig {
                source_reviews: source_reviews.unwrap_or(d.source_reviews),
                target_reviews: target_reviews.unwrap_or(d.target_reviews),
                test_reviews: test_reviews.unwrap_or(d.test_reviews),
                seed: s.cfg.seed,
                low_similarity_rate: low_similarity_rate.unwrap_or(d.low_similarity_rate),
                noise_rate: noise_rate.unwrap_or(d.noise_rate),
            };
            let corpus = generate(&synth)?;
            write_corpus(s.output(&None, "source.jsonl"), &corpus.source)?;
            write_corpus(s.output(&None, "target.jsonl"), &corpus.target)?;
            write_corpus(s.output(&None, "test.jsonl"), &corpus.test)?;
            save_embeddings(s.output(&None, "review.emb"), &corpus.review_embeddings)?;
            save_embeddings(s.output(&None, "aspect.emb"), &corpus.aspect_embeddings)?;
            s.say(format!(
                "{} source, {} target, {} test reviews",
                corpus.source.len(),
                corpus.target.len(),
                corpus.test.len()
            ));
            let mut settings = json!({ "synth": synth });
            if benchmark {
                let run = run_benchmark(&synth, &s.cfg)?;
                let result = json!({
                    "filtered": run.filtered_eval,
                    "unfiltered": run.unfiltered_eval,
                    "properties": run.properties,
                });
                write_text(&s.output(&None, "benchmark.json"), &(serde_json::to_string_pretty(&result)? + "\n"))?;
                s.say(run.filtered_eval.render("filtered").trim_end());
                s.say(run.unfiltered_eval.render("unfiltered").trim_end());
                settings["regime"] = serde_json::to_value(&s.cfg)?;
            }
            settings
        }
    };
    s.write_manifest(name, settings)
}

fn main() -> ExitCode {
    let matches = Cli::command().get_matches();
    let cli = match Cli::from_arg_matches(&matches) {
        Ok(c) => c,
        Err(e) => e.exit(),
    };
    if cli.version {
        println!("{}", version_text());
        return ExitCode::SUCCESS;
    }
    let Some(command) = cli.command else {
        eprintln!("{}", Cli::command().render_usage());
        return ExitCode::from(2);
    };

    let result = (|| {
        let mut cfg = load_config(cli.config.as_deref())?;
        if let Some(seed) = cli.seed {
            cfg.seed = seed;
        }
        fs::create_dir_all(&cli.out_dir).map_err(|e| io_error(&cli.out_dir, e))?;
        let mut session = Session { out_dir: cli.out_dir, quiet: cli.quiet, cfg, inputs: vec![], outputs: vec![] };
        execute(&mut session, command)
    })();
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
