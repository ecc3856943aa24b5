//! Command-line interface composing dataset generation, subword learning,
//! training, decoding, and verification.

use std::fs;
use std::path::{Path, PathBuf};

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};

use crate::bpe::{encode, learn_bpe, load_merges, load_vocab, save_merges, save_vocab, Vocab};
use crate::decoding::beam_search;
use crate::error::{Error, Result};
use crate::harness::checkpoint::{checkpoint_load, checkpoint_save};
use crate::harness::configfile::{desk_defaults, load_config_file, AppConfig, DESK_BPE_MERGES};
use crate::harness::dataset::{
    all_captions, features_of, load_dataset, prepare_examples, save_dataset, save_references,
};
use crate::harness::synth::synth_generate;
use crate::metrics::{bleu4, cider_d, tokenize, NGramStats, DEFAULT_SIGMA};
use crate::model::{count_params, Model};
use crate::training::{
    self, finetune_rl, ids_to_words, train_xe, EpochLog, TrainExample, GRADCHECK_TOLERANCE,
};

#[derive(Parser, Debug)]
#[command(
    name = "caplite",
    version,
    about = "Lightweight image captioning: synthetic data, subwords, training, decoding, scoring",
    disable_help_subcommand = true
)]
struct Cli {
    /// Flat key = value configuration file; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate the synthetic scene dataset splits into a directory.
    SynthData {
        /// Number of distinct scenes across all splits.
        #[arg(long, default_value_t = 500)]
        n: usize,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Learn subword merges and the vocabulary from a dataset's captions.
    BpeLearn {
        /// Dataset (JSONL) whose captions form the corpus.
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value_t = DESK_BPE_MERGES)]
        n_merges: usize,
        #[arg(long)]
        merges_out: PathBuf,
        #[arg(long)]
        vocab_out: PathBuf,
    },
    /// Segment plain text (one sentence per line) with learned merges.
    BpeApply {
        #[arg(long)]
        merges: PathBuf,
        #[arg(long)]
        input: PathBuf,
        /// Defaults to stdout.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Teacher-forced training on train/val splits in a data directory.
    Train {
        /// Directory holding train.jsonl and val.jsonl.
        #[arg(long)]
        data_dir: PathBuf,
        #[arg(long)]
        merges: PathBuf,
        #[arg(long)]
        vocab: PathBuf,
        #[arg(long)]
        checkpoint_out: PathBuf,
        /// Also write the epoch log (TSV) here.
        #[arg(long)]
        log_out: Option<PathBuf>,
    },
    /// Policy-gradient fine-tuning from an existing checkpoint.
    FinetuneRl {
        #[arg(long)]
        data_dir: PathBuf,
        #[arg(long)]
        merges: PathBuf,
        #[arg(long)]
        vocab: PathBuf,
        /// Starting checkpoint.
        #[arg(long)]
        init: PathBuf,
        #[arg(long)]
        checkpoint_out: PathBuf,
        #[arg(long)]
        log_out: Option<PathBuf>,
    },
    /// Decode captions for every example in a dataset file.
    Decode {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        vocab: PathBuf,
        #[arg(long)]
        input: PathBuf,
        /// Defaults to stdout.
        #[arg(long)]
        output: Option<PathBuf>,
        #[arg(long, default_value_t = 3)]
        beam: usize,
        /// Defaults to the configured decode cap.
        #[arg(long)]
        max_len: Option<usize>,
    },
    /// Corpus BLEU-4 and CIDEr-D of candidates against references.
    Score {
        /// One candidate sentence per line.
        #[arg(long)]
        candidates: PathBuf,
        /// One line per candidate: tab-separated reference sentences.
        #[arg(long)]
        references: PathBuf,
    },
    /// Print the parameter breakdown of the configured model.
    Params,
    /// Run the finite-difference gradient suite over every model variant.
    Gradcheck,
}

/// Parse argv and execute; returns the process exit code.
pub fn run() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(err) => {
            eprintln!("error: {err}");
            err.exit_code()
        }
    }
}

fn write_lines(lines: &[String], target: Option<&Path>) -> Result<()> {
    match target {
        Some(path) => {
            let mut text = lines.join("\n");
            text.push('\n');
            fs::write(path, text)?;
        }
        None => {
            for line in lines {
                println!("{line}");
            }
        }
    }
    Ok(())
}

fn emit_logs(logs: &[EpochLog], log_out: Option<&Path>) -> Result<()> {
    let lines: Vec<String> = logs.iter().map(EpochLog::to_tsv).collect();
    for line in &lines {
        println!("{line}");
    }
    if let Some(path) = log_out {
        write_lines(&lines, Some(path))?;
    }
    Ok(())
}

/// Load the subword artifacts and a split, ready for a training loop.
fn load_split(
    dir: &Path,
    name: &str,
    v_dim: usize,
    merges: &crate::bpe::MergeTable,
    vocab: &Vocab,
) -> Result<Vec<TrainExample<f32>>> {
    let examples = load_dataset(&dir.join(format!("{name}.jsonl")), v_dim)?;
    prepare_examples(&examples, merges, vocab)
}

fn execute(cli: Cli) -> Result<()> {
    let mut config: AppConfig = match &cli.config {
        Some(path) => load_config_file(path)?,
        None => desk_defaults(),
    };
    if let Some(seed) = cli.seed {
        config.train.seed = seed;
    }

    match cli.command {
        Command::SynthData { n, out_dir } => {
            fs::create_dir_all(&out_dir)?;
            let splits = synth_generate(n, config.model.v_dim, config.train.seed)?;
            for (name, examples) in [
                ("train", &splits.train),
                ("val", &splits.val),
                ("test", &splits.test),
            ] {
                save_dataset(examples, &out_dir.join(format!("{name}.jsonl")))?;
                save_references(examples, &out_dir.join(format!("{name}.refs.tsv")))?;
            }
            eprintln!(
                "wrote {} train / {} val / {} test examples to {}",
                splits.train.len(),
                splits.val.len(),
                splits.test.len(),
                out_dir.display()
            );
            Ok(())
        }
        Command::BpeLearn {
            data,
            n_merges,
            merges_out,
            vocab_out,
        } => {
            let examples = load_dataset(&data, config.model.v_dim)?;
            let captions = all_captions(&examples);
            let merges = learn_bpe(&captions, n_merges);
            let encoded: Vec<Vec<String>> = captions.iter().map(|c| encode(c, &merges)).collect();
            let vocab = Vocab::build(&encoded);
            save_merges(&merges, &merges_out)?;
            save_vocab(&vocab, &vocab_out)?;
            eprintln!(
                "learned {} merges; vocabulary of {} tokens",
                merges.len(),
                vocab.size()
            );
            Ok(())
        }
        Command::BpeApply {
            merges,
            input,
            output,
        } => {
            let table = load_merges(&merges)?;
            let text = fs::read_to_string(&input)?;
            let lines: Vec<String> = text
                .lines()
                .map(|line| encode(line, &table).join(" "))
                .collect();
            write_lines(&lines, output.as_deref())
        }
        Command::Train {
            data_dir,
            merges,
            vocab,
            checkpoint_out,
            log_out,
        } => {
            let table = load_merges(&merges)?;
            let vocab = load_vocab(&vocab)?;
            config.model.vocab_size = vocab.size();
            config.model.validate()?;
            let train = load_split(&data_dir, "train", config.model.v_dim, &table, &vocab)?;
            let val = load_split(&data_dir, "val", config.model.v_dim, &table, &vocab)?;
            let mut model: Model<f32> = Model::new(config.model.clone(), config.train.seed)?;
            let logs = train_xe(&mut model, &train, &val, &vocab, &config.train)?;
            emit_logs(&logs, log_out.as_deref())?;
            checkpoint_save(&model, &checkpoint_out)?;
            eprintln!("saved checkpoint to {}", checkpoint_out.display());
            Ok(())
        }
        Command::FinetuneRl {
            data_dir,
            merges,
            vocab,
            init,
            checkpoint_out,
            log_out,
        } => {
            let table = load_merges(&merges)?;
            let vocab = load_vocab(&vocab)?;
            config.model.vocab_size = vocab.size();
            config.model.validate()?;
            let train = load_split(&data_dir, "train", config.model.v_dim, &table, &vocab)?;
            let val = load_split(&data_dir, "val", config.model.v_dim, &table, &vocab)?;
            let mut model = checkpoint_load(&init, &config.model)?;
            let logs = finetune_rl(&mut model, &train, &val, &vocab, &config.train)?;
            emit_logs(&logs, log_out.as_deref())?;
            checkpoint_save(&model, &checkpoint_out)?;
            eprintln!("saved checkpoint to {}", checkpoint_out.display());
            Ok(())
        }
        Command::Decode {
            checkpoint,
            vocab,
            input,
            output,
            beam,
            max_len,
        } => {
            let vocab = load_vocab(&vocab)?;
            config.model.vocab_size = vocab.size();
            config.model.validate()?;
            let model = checkpoint_load(&checkpoint, &config.model)?;
            let examples = load_dataset(&input, config.model.v_dim)?;
            let max_len = max_len.unwrap_or(config.model.max_len);
            let mut lines = Vec::with_capacity(examples.len());
            for ex in &examples {
                let features = features_of::<f32>(ex)?;
                let (ids, _) = beam_search(&model, &features, beam, max_len)?;
                lines.push(ids_to_words(&ids, &vocab)?.join(" "));
            }
            write_lines(&lines, output.as_deref())
        }
        Command::Score {
            candidates,
            references,
        } => {
            let cand_text = fs::read_to_string(&candidates)?;
            let ref_text = fs::read_to_string(&references)?;
            let cands: Vec<Vec<String>> = cand_text.lines().map(tokenize).collect();
            let refs: Vec<Vec<Vec<String>>> = ref_text
                .lines()
                .map(|line| line.split('\t').map(tokenize).collect())
                .collect();
            if cands.len() != refs.len() {
                return Err(Error::Validation(format!(
                    "{} candidates but {} reference lines",
                    cands.len(),
                    refs.len()
                )));
            }
            let stats = NGramStats::from_references(&refs)?;
            let b = bleu4(&cands, &refs)?;
            let c = cider_d(&cands, &refs, &stats, DEFAULT_SIGMA)?;
            println!("BLEU4={b:.6} CIDErD={c:.6}");
            Ok(())
        }
        Command::Params => {
            config.model.validate()?;
            let (total, breakdown) = count_params(&config.model);
            let mut check = 0u64;
            for (name, count) in &breakdown {
                println!("{name:<12} {count:>12}");
                check += count;
            }
            println!("total        {check:>12}");
            debug_assert_eq!(check, total);
            Ok(())
        }
        Command::Gradcheck => {
            let cells = training::xe_gradcheck_suite(8, 16, 20, 32)?;
            let mut worst: f64 = 0.0;
            for (label, report) in &cells {
                println!("{label}: max_rel_err={:.3e}", report.max_rel_err);
                worst = worst.max(report.max_rel_err);
            }
            if worst < GRADCHECK_TOLERANCE {
                println!(
                    "gradcheck passed: {} cells below {GRADCHECK_TOLERANCE:.0e}",
                    cells.len()
                );
                Ok(())
            } else {
                Err(Error::Validation(format!(
                    "gradient check failed: worst relative error {worst:.3e}"
                )))
            }
        }
    }
}
