// SPDX-License-Identifier: MIT OR Apache-2.0

//! `attn-edit` command-line driver.
//!
//! Results go to stdout as JSON or text tables; with `--out <dir>` the
//! artifacts are also written there. Failures print
//! `{"error": {"kind": ..., "message": ...}}` to stderr and exit nonzero.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use attn_edit::ar_model::AttentionKind;
use attn_edit::pipeline::{
    self, builtin_dataset, load_dataset, PromptPair, RunSettings, DEFAULT_SEEDS, DEFAULT_STRENGTHS,
};
use attn_edit::{
    align_prompts, evaluate, run_edit, BlendMode, EditSpec, Error, Execution, Model, ModelConfig,
    Prompt, Result, TokenGrid, Vocabulary,
};

#[derive(Parser, Debug)]
#[command(
    name = "attn-edit",
    version,
    about = "Attention-map editing on a toy codebook transformer"
)]
struct Cli {
    /// Sampling seed for single runs.
    #[arg(long, global = true, default_value_t = 1)]
    seed: u64,
    /// Overrides the model weight seed.
    #[arg(long, global = true)]
    weight_seed: Option<u64>,
    /// `key = value` file overriding model and codec defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Directory for output artifacts.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Vocabulary JSON (token -> id); defaults to the bundled one.
    #[arg(long, global = true)]
    vocab: Option<PathBuf>,
    /// Run batches on one thread.
    #[arg(long, global = true)]
    sequential: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a token grid from a prompt.
    Generate {
        #[arg(long)]
        prompt: String,
    },
    /// Capture a source run and regenerate under an edited prompt.
    Edit(EditArgs),
    /// Score an edited grid against a source grid.
    Eval {
        #[arg(long)]
        source_grid: PathBuf,
        #[arg(long)]
        edited_grid: PathBuf,
        #[arg(long)]
        source: String,
        #[arg(long)]
        target: String,
    },
    /// Run every dataset pair under every seed.
    RunDataset {
        #[command(flatten)]
        batch: BatchArgs,
        #[command(flatten)]
        mode: ModeArgs,
    },
    /// Hard injection against soft blending over the dataset.
    CompareBlending {
        #[command(flatten)]
        batch: BatchArgs,
    },
    /// Similarity curves over prompt strength.
    SweepStrength {
        #[command(flatten)]
        batch: BatchArgs,
        #[arg(long, value_delimiter = ',', default_values_t = DEFAULT_STRENGTHS)]
        strengths: Vec<f64>,
    },
    /// Write the attention maps of a generation as CSV.
    DumpAttn {
        #[arg(long)]
        prompt: String,
        #[arg(long, value_enum, default_value_t = KindArg::Cross)]
        kind: KindArg,
        /// Layer for the aggregated cross-attention heatmap.
        #[arg(long)]
        heatmap_layer: Option<usize>,
    },
}

#[derive(Args, Debug)]
struct EditArgs {
    #[arg(long)]
    source: String,
    #[arg(long)]
    target: String,
    #[arg(long, value_enum)]
    edit: EditKind,
    #[arg(long, default_value_t = 0)]
    tau: usize,
    /// Reweighted token, by text.
    #[arg(long)]
    j_star_token: Option<String>,
    /// Reweighted token, by index.
    #[arg(long, conflicts_with = "j_star_token")]
    j_star: Option<usize>,
    #[arg(long, default_value_t = 1.0, allow_negative_numbers = true)]
    c: f64,
    #[command(flatten)]
    mode: ModeArgs,
}

#[derive(Args, Debug)]
struct BatchArgs {
    /// JSONL prompt pairs; defaults to the bundled dataset.
    #[arg(long)]
    dataset: Option<PathBuf>,
    #[arg(long, value_delimiter = ',', default_values_t = DEFAULT_SEEDS)]
    seeds: Vec<u64>,
    #[arg(long, default_value_t = 0)]
    tau: usize,
}

#[derive(Args, Debug)]
struct ModeArgs {
    #[arg(long, value_enum, default_value_t = ModeArg::Hard)]
    mode: ModeArg,
    /// Weight of the free map for `--mode strength`.
    #[arg(long, default_value_t = 0.5)]
    strength: f64,
}

impl ModeArgs {
    fn blend(&self) -> BlendMode {
        match self.mode {
            ModeArg::Hard => BlendMode::HardInject,
            ModeArg::Soft => BlendMode::SoftBlend,
            ModeArg::Strength => BlendMode::Strength { s: self.strength },
        }
    }
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum EditKind {
    Replace,
    Refine,
    Reweight,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum ModeArg {
    Hard,
    Soft,
    Strength,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum KindArg {
    Cross,
    #[value(name = "self")]
    SelfAttn,
}

struct Context {
    model: Model,
    vocab: Vocabulary,
    exec: Execution,
    seed: u64,
    out: Option<PathBuf>,
}

impl Context {
    fn new(cli: &Cli) -> Result<Self> {
        let vocab = match &cli.vocab {
            Some(path) => Vocabulary::load(path)?,
            None => Vocabulary::builtin(),
        };
        let base = ModelConfig {
            vocab_size: vocab.len(),
            ..ModelConfig::default()
        };
        let mut config = match &cli.config {
            Some(path) => pipeline::load_config(path, base)?,
            None => base,
        };
        if let Some(ws) = cli.weight_seed {
            config.weight_seed = ws;
        }
        let out = cli.out.clone();
        if let Some(dir) = &out {
            std::fs::create_dir_all(dir).map_err(|e| io_error(dir, e))?;
        }
        Ok(Self {
            model: Model::new(config)?,
            vocab,
            exec: if cli.sequential {
                Execution::Sequential
            } else {
                Execution::Parallel
            },
            seed: cli.seed,
            out,
        })
    }

    fn prompt(&self, text: &str) -> Result<Prompt> {
        Prompt::new(text, &self.vocab)
    }

    fn write(&self, name: &str, contents: &str) -> Result<()> {
        if let Some(dir) = &self.out {
            let path = dir.join(name);
            std::fs::write(&path, contents).map_err(|e| io_error(&path, e))?;
        }
        Ok(())
    }

    fn pairs(&self, batch: &BatchArgs) -> Result<Vec<PromptPair>> {
        match &batch.dataset {
            Some(path) => load_dataset(path),
            None => Ok(builtin_dataset()),
        }
    }

    fn settings(&self, batch: &BatchArgs) -> RunSettings {
        RunSettings {
            tau: batch.tau,
            exec: self.exec,
        }
    }
}

fn io_error(path: &Path, e: std::io::Error) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        source: e,
    }
}

fn edit_spec(args: &EditArgs, p: &Prompt, q: &Prompt) -> Result<EditSpec> {
    Ok(match args.edit {
        EditKind::Replace => EditSpec::Replace { tau: args.tau },
        EditKind::Refine => EditSpec::Refine {
            tau: args.tau,
            alignment: align_prompts(p, q),
        },
        EditKind::Reweight => {
            let j_star = match (&args.j_star_token, args.j_star) {
                (_, Some(j)) => j,
                (Some(tok), None) => {
                    let tok = tok.to_lowercase();
                    let hits: Vec<usize> = (0..p.len()).filter(|&i| p.tokens[i] == tok).collect();
                    match hits.as_slice() {
                        [j] => *j,
                        _ => return Err(Error::EditPrecondition(format!(
                            "--j-star-token {tok:?} must occur exactly once in the source prompt"
                        ))),
                    }
                }
                (None, None) => {
                    return Err(Error::EditPrecondition(
                        "reweight needs --j-star-token or --j-star".into(),
                    ))
                }
            };
            EditSpec::Reweight { j_star, c: args.c }
        }
    })
}

fn read_grid(path: &Path, frame_rate: f64) -> Result<TokenGrid> {
    let text = std::fs::read_to_string(path).map_err(|e| io_error(path, e))?;
    TokenGrid::from_json(&text, frame_rate)
}

fn run(cli: &Cli) -> Result<()> {
    let cx = Context::new(cli)?;
    match &cli.command {
        Command::Generate { prompt } => {
            let p = cx.prompt(prompt)?;
            let (grid, _) = cx.model.generate(&p, cx.seed, None)?;
            let text = grid.to_json()?;
            cx.write("grid.json", &text)?;
            println!("{text}");
        }
        Command::Edit(args) => {
            let p = cx.prompt(&args.source)?;
            let q = cx.prompt(&args.target)?;
            let spec = edit_spec(args, &p, &q)?;
            let mode = args.mode.blend();
            let r = run_edit(&cx.model, &p, &q, &spec, mode, cx.seed)?;
            let report = evaluate(&r.source_grid, &r.edited_grid, &p, &q)?;
            cx.write("source_grid.json", &r.source_grid.to_json()?)?;
            cx.write("edited_grid.json", &r.edited_grid.to_json()?)?;
            let summary = json!({
                "edit": spec,
                "mode": mode.label(),
                "seed": cx.seed,
                "injected_steps": r.injected_steps.len(),
                "metrics": report,
            });
            let text = serde_json::to_string_pretty(&summary)?;
            cx.write("edit.json", &text)?;
            println!("{text}");
        }
        Command::Eval {
            source_grid,
            edited_grid,
            source,
            target,
        } => {
            let rate = cx.model.config().codec.frame_rate;
            let report = evaluate(
                &read_grid(source_grid, rate)?,
                &read_grid(edited_grid, rate)?,
                &cx.prompt(source)?,
                &cx.prompt(target)?,
            )?;
            let text = serde_json::to_string_pretty(&report)?;
            cx.write("metrics.json", &text)?;
            println!("{text}");
        }
        Command::RunDataset { batch, mode } => {
            let pairs = cx.pairs(batch)?;
            let mut records = pipeline::run_dataset(
                &cx.model,
                &cx.vocab,
                &pairs,
                &batch.seeds,
                mode.blend(),
                cx.settings(batch),
            )?;
            let table = pipeline::AggregateTable::from_records(&records);
            if let Some(dir) = &cx.out {
                pipeline::write_records(dir, &mut records)?;
            }
            cx.write("aggregate.csv", &table.to_csv()?)?;
            cx.write("aggregate.txt", &table.to_text())?;
            let failed = records.iter().filter(|r| r.error.is_some()).count();
            print!("{}", table.to_text());
            println!("records: {} ({failed} failed)", records.len());
        }
        Command::CompareBlending { batch } => {
            let pairs = cx.pairs(batch)?;
            let report = pipeline::compare_blending(
                &cx.model,
                &cx.vocab,
                &pairs,
                &batch.seeds,
                cx.settings(batch),
            )?;
            cx.write("blending.csv", &report.to_csv())?;
            cx.write("blending.txt", &report.to_text())?;
            print!("{}", report.to_text());
        }
        Command::SweepStrength { batch, strengths } => {
            let pairs = cx.pairs(batch)?;
            let sweep = pipeline::sweep_strength(
                &cx.model,
                &cx.vocab,
                &pairs,
                &batch.seeds,
                strengths,
                cx.settings(batch),
            )?;
            cx.write("strength_sweep.csv", &sweep.to_csv())?;
            print!("{}", sweep.to_csv());
            println!("note: {}", sweep.note);
        }
        Command::DumpAttn {
            prompt,
            kind,
            heatmap_layer,
        } => {
            let Some(dir) = &cx.out else {
                return Err(Error::InvalidConfig("dump-attn needs --out <dir>".into()));
            };
            let p = cx.prompt(prompt)?;
            let (_, trace) = cx.model.generate(&p, cx.seed, None)?;
            let kind = match kind {
                KindArg::Cross => AttentionKind::Cross,
                KindArg::SelfAttn => AttentionKind::SelfAttn,
            };
            let path = dir.join("attention.csv");
            let rows = pipeline::dump_attention(&trace, &path, kind)?;
            let mut written = vec![path.display().to_string()];
            if let Some(layer) = heatmap_layer {
                let heat = dir.join(format!("heatmap_layer{layer}.csv"));
                pipeline::dump_cross_heatmap(&trace, *layer, &heat)?;
                written.push(heat.display().to_string());
            }
            println!("{}", json!({ "rows": rows, "files": written }));
        }
    }
    Ok(())
}

fn fail(kind: &str, message: String) -> ExitCode {
    eprintln!(
        "{}",
        json!({ "error": { "kind": kind, "message": message } })
    );
    ExitCode::FAILURE
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => e.exit(),
        Err(e) => return fail("usage", e.to_string()),
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => fail(e.kind(), e.to_string()),
    }
}
