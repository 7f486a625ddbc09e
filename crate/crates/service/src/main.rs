use std::fs::{self, File};
use std::io::{self, BufReader, Write};
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;

use anyhow::{bail, Context as _, Result};
use clap::{Args, Parser, Subcommand};
use turnbeam::experiment::{full_grid, run_experiment, ExperimentMatrix};
use turnbeam::{api, EngineConfig, Registry, SessionStore};
use turnbeam_core::corpus::{build_vocabulary, read_corpus, to_conversations};
use turnbeam_core::metrics::{render_table, write_csv};
use turnbeam_core::multiturn::PartnerKind;
use turnbeam_core::oracle::{
    oracle_conservative_ranking, oracle_optimistic_ranking, oracle_utterance_argmax, OracleParams,
};
use turnbeam_core::{fit_ngram, fixtures, Conversation, NGramConfig, SpeakerRole, Turn, Utterance, UtteranceAlgorithm};

#[derive(Parser)]
#[command(name = "turnbeam", version, about = "Conversation-level decoding with multi-turn beam search")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit an n-gram speaker model on a JSONL corpus.
    Fit {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Number of conditioning tokens.
        #[arg(long, default_value_t = 2)]
        order: usize,
        #[arg(long, default_value_t = 0.1)]
        alpha: f64,
        /// Ignore persona lines.
        #[arg(long)]
        no_context: bool,
        #[arg(long, default_value = "</s>")]
        eos: String,
    },
    /// Decode one self utterance and print the candidates.
    Search {
        #[command(flatten)]
        engine: EngineArgs,
        /// Prior utterances, alternating from the self speaker.
        #[arg(long = "turn")]
        turns: Vec<String>,
        #[arg(long)]
        json: bool,
    },
    /// Run a strategy matrix over a corpus and write a CSV report.
    Experiment {
        /// Matrix JSON with model, search settings and cells.
        #[arg(long)]
        matrix: PathBuf,
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        models_dir: Option<PathBuf>,
        /// Replace the matrix cells with the full algorithm × steps × partner grid.
        #[arg(long)]
        grid: bool,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also print a table to stderr.
        #[arg(long)]
        table: bool,
    },
    /// Serve the session API over HTTP.
    Serve {
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long)]
        models_dir: Option<PathBuf>,
        /// Session logs; sessions are kept in memory only when absent.
        #[arg(long)]
        data_dir: Option<PathBuf>,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
    },
    /// Rank candidates exactly on a fixture by enumeration.
    Oracle {
        #[arg(long, default_value = "F2")]
        fixture: String,
        #[arg(short = 'T', long, default_value_t = 2)]
        max_tokens: usize,
        #[arg(short = 'L', long, default_value_t = 1)]
        lookahead: usize,
        #[arg(long, default_value = "transparent")]
        partner: PartnerKind,
        #[arg(long, default_value_t = 5)]
        top: usize,
    },
}

#[derive(Args)]
struct EngineArgs {
    #[arg(long, default_value = "F1")]
    model: String,
    #[arg(long)]
    models_dir: Option<PathBuf>,
    #[arg(long)]
    mindless_model: Option<String>,
    #[arg(long, default_value = "egocentric")]
    partner: PartnerKind,
    #[arg(long, default_value = "beam")]
    algorithm: UtteranceAlgorithm,
    #[arg(short = 'K', long, default_value_t = 10, allow_hyphen_values = true)]
    beam_width: i64,
    #[arg(short = 'L', long, default_value_t = 2, allow_hyphen_values = true)]
    lookahead: i64,
    #[arg(short = 'T', long, default_value_t = 20, allow_hyphen_values = true)]
    max_tokens: i64,
    #[arg(long, default_value_t = 4)]
    iterations: i64,
    #[arg(long, default_value_t = 3)]
    similarity_threshold: i64,
    #[arg(long)]
    self_context: Option<String>,
    #[arg(long)]
    partner_context: Option<String>,
}

impl EngineArgs {
    fn config(&self) -> EngineConfig {
        EngineConfig {
            mindless_model: self.mindless_model.clone(),
            partner: self.partner,
            algorithm: self.algorithm,
            beam_width: self.beam_width,
            lookahead: self.lookahead,
            max_tokens: self.max_tokens,
            iterations: self.iterations,
            similarity_threshold: self.similarity_threshold,
            self_context: self.self_context.clone(),
            partner_context: self.partner_context.clone(),
            ..EngineConfig::new(self.model.clone())
        }
    }
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Fit {
            corpus,
            out,
            order,
            alpha,
            no_context,
            eos,
        } => {
            let records = read_corpus(BufReader::new(
                File::open(&corpus).with_context(|| format!("opening {}", corpus.display()))?,
            ))?;
            let vocab = build_vocabulary(&records, &eos)?;
            let conversations = to_conversations(&records, &vocab)?;
            let config = NGramConfig {
                order,
                alpha,
                use_context: !no_context,
            };
            let model = fit_ngram(&conversations, &vocab, config)?;
            fs::write(&out, model.to_json())?;
            eprintln!(
                "fitted order-{order} model on {} conversations, {} tokens, wrote {}",
                conversations.len(),
                vocab.len(),
                out.display()
            );
        }
        Command::Search { engine, turns, json } => {
            let registry = Registry::with_dir(engine.models_dir.as_deref())?;
            let engine = engine.config().resolve(&registry)?;
            let mut conv: Conversation = engine.empty_conversation();
            for (i, text) in turns.iter().enumerate() {
                conv.push(Utterance::from_text(SpeakerRole::next_after(i), text, engine.vocabulary())?)?;
            }
            let (chosen, trace) = engine.respond(&conv.utterances)?;
            if json {
                serde_json::to_writer_pretty(io::stdout(), &trace)?;
                println!();
            } else {
                let vocab = engine.vocabulary();
                for (k, entry) in trace.h0.entries.iter().enumerate() {
                    let mark = if k == trace.selected_root_index { '*' } else { ' ' };
                    println!("{mark} {k:>3} {:>10.4}  {}", entry.score, vocab.decode(&entry.utterances[0].tokens));
                }
                if let Some(best) = trace.hypothesis_sets.last().and_then(|s| s.entries.first()) {
                    let path: Vec<String> = best.utterances.iter().map(|u| vocab.decode(&u.tokens)).collect();
                    println!("lookahead {:.4}: {}", best.score, path.join(" | "));
                }
                println!("chosen: {} ({:.4})", vocab.decode(chosen.tokens()), chosen.logprob);
            }
        }
        Command::Experiment {
            matrix,
            corpus,
            seed,
            models_dir,
            grid,
            out,
            table,
        } => {
            let mut matrix: ExperimentMatrix = serde_json::from_str(
                &fs::read_to_string(&matrix).with_context(|| format!("reading {}", matrix.display()))?,
            )?;
            if grid {
                matrix.cells = full_grid();
            }
            let registry = Registry::with_dir(models_dir.as_deref())?;
            let records = read_corpus(BufReader::new(
                File::open(&corpus).with_context(|| format!("opening {}", corpus.display()))?,
            ))?;
            let rows = run_experiment(&matrix, &records, &registry, seed)?;
            match out {
                Some(path) => write_csv(&rows, File::create(path)?)?,
                None => write_csv(&rows, io::stdout().lock())?,
            }
            if table {
                io::stderr().write_all(render_table(&rows).as_bytes())?;
            }
        }
        Command::Serve {
            port,
            models_dir,
            data_dir,
            host,
        } => {
            let registry = Arc::new(Registry::with_dir(models_dir.as_deref())?);
            let store = match data_dir {
                Some(dir) => SessionStore::open(registry, &dir)?,
                None => SessionStore::in_memory(registry),
            };
            let addr: SocketAddr = format!("{host}:{port}").parse()?;
            let rt = tokio::runtime::Runtime::new()?;
            rt.block_on(async move {
                let listener = tokio::net::TcpListener::bind(addr).await?;
                eprintln!("listening on http://{}", listener.local_addr()?);
                axum::serve(listener, api::router(Arc::new(store))).await
            })?;
        }
        Command::Oracle {
            fixture,
            max_tokens,
            lookahead,
            partner,
            top,
        } => {
            let Some(model) = fixtures::by_name(&fixture) else {
                bail!("unknown fixture `{fixture}`, expected one of {:?}", fixtures::NAMES);
            };
            let registry = Registry::builtin();
            let info = &registry.get(&fixture.to_ascii_uppercase())?.info;
            let self_ctx = turnbeam_core::Context::keyed(
                SpeakerRole::SelfSpeaker,
                info.default_self_context.clone().unwrap_or_default(),
            );
            let partner_ctx = turnbeam_core::Context::keyed(
                SpeakerRole::Partner,
                info.default_partner_context.clone().unwrap_or_default(),
            );
            if partner == PartnerKind::Mindless {
                bail!("fixtures have no separate mindless model");
            }
            let partner = turnbeam_core::make_partner(partner, &model, None, &self_ctx, Some(&partner_ctx))?;
            let this = turnbeam_core::SelfSide {
                model: &model,
                context: &self_ctx,
            };
            let vocab = turnbeam_core::SpeakerModel::vocabulary(&model);
            let params = OracleParams::new(max_tokens, lookahead);
            let argmax = oracle_utterance_argmax(
                Turn::new(&model, &self_ctx, &[], SpeakerRole::SelfSpeaker),
                &params,
            )?;
            println!("utterance-level argmax: {} ({:.6})", vocab.decode(argmax.tokens()), argmax.logprob);
            for (name, ranking) in [
                ("optimistic", oracle_optimistic_ranking(this, &partner, &[], &params)?),
                ("conservative", oracle_conservative_ranking(this, &partner, &[], &params)?),
            ] {
                println!("{name} (L = {lookahead}):");
                for c in ranking.iter().take(top) {
                    let cont: Vec<String> = c.continuation.iter().map(|u| vocab.decode(&u.tokens)).collect();
                    println!(
                        "  {:>10.6}  {}  | {}",
                        c.objective,
                        vocab.decode(c.candidate.tokens()),
                        cont.join(" | ")
                    );
                }
            }
        }
    }
    Ok(())
}
