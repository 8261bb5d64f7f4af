use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Parser, Subcommand, ValueEnum};
use hcgs::embed::CollectionKind;
use hcgs::pipeline::{self, BackendKind, EmbedBackendKind, RunConfig};
use hcgs::query::{answer_to_json, answer_to_table, QueryRequest};

#[derive(Parser)]
#[command(name = "hcgs", version, about = "Hierarchical code graph summarization and retrieval")]
struct Cli {
    /// JSON run configuration.
    #[arg(long, global = true, default_value = "hcgs.json")]
    config: PathBuf,
    /// Worker threads for the parallel stages.
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[arg(long, global = true, value_parser = clap::builder::PossibleValuesParser::new(["llm", "extractive", "replay"]))]
    backend: Option<String>,
    #[arg(long = "embed-backend", global = true, value_parser = clap::builder::PossibleValuesParser::new(["http", "hash"]))]
    embed_backend: Option<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum CollectionArg {
    Code,
    Summary,
}

impl From<CollectionArg> for CollectionKind {
    fn from(c: CollectionArg) -> Self {
        match c {
            CollectionArg::Code => CollectionKind::Code,
            CollectionArg::Summary => CollectionKind::Summary,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Table,
    Json,
}

#[derive(Subcommand)]
enum Command {
    /// Extract the code graph (or import one with --from-graph).
    Index {
        #[arg(long = "from-graph")]
        from_graph: Option<PathBuf>,
    },
    /// Summarize every function bottom-up, then every module.
    Summarize,
    /// Embed raw code and summaries into the two collections.
    Embed {
        /// Also write a JSON dump of both collections.
        #[arg(long)]
        export: Option<PathBuf>,
    },
    /// Retrieve the functions most similar to TEXT.
    Query {
        text: String,
        #[arg(long, value_enum, default_value = "summary")]
        collection: CollectionArg,
        #[arg(long, default_value_t = 5)]
        k: usize,
        /// Expand hits into their surrounding subgraph.
        #[arg(long = "expand-context")]
        expand_context: bool,
        #[arg(long, default_value_t = 1)]
        depth: usize,
        #[arg(long, value_enum, default_value = "table")]
        format: Format,
    },
    /// Generate benchmark queries and compare the two collections.
    Bench,
    /// index, summarize, embed and bench in sequence.
    Run {
        #[arg(long = "from-graph")]
        from_graph: Option<PathBuf>,
    },
}

fn config(cli: &Cli) -> Result<RunConfig> {
    let mut c = RunConfig::load(&cli.config)?;
    if let Some(w) = cli.workers {
        c.workers = w;
    }
    if let Some(b) = &cli.backend {
        c.backend = b.parse::<BackendKind>().map_err(anyhow::Error::msg)?;
    }
    if let Some(b) = &cli.embed_backend {
        c.embed_backend = b.parse::<EmbedBackendKind>().map_err(anyhow::Error::msg)?;
    }
    c.validate()?;
    Ok(c)
}

fn run(cli: Cli) -> Result<()> {
    let c = config(&cli)?;
    match cli.command {
        Command::Index { from_graph } => {
            let out = pipeline::cmd_index(&c, from_graph.as_deref())?;
            println!("{}", out.display());
        }
        Command::Summarize => {
            let out = pipeline::cmd_summarize(&c)?;
            println!("{}", out.display());
        }
        Command::Embed { export } => {
            let (code, summary) = pipeline::cmd_embed(&c, export.as_deref())?;
            println!("{}\n{}", code.display(), summary.display());
        }
        Command::Query {
            text,
            collection,
            k,
            expand_context,
            depth,
            format,
        } => {
            let mut request = QueryRequest::new(text, collection.into(), k);
            if expand_context {
                request = request.with_context(depth);
            }
            let (answer, collection) = pipeline::cmd_query(&c, &request)?;
            match format {
                Format::Json => println!("{}", serde_json::to_string_pretty(&answer_to_json(&answer, &collection))?),
                Format::Table => print!("{}", answer_to_table(&answer, &collection)),
            }
        }
        Command::Bench => {
            let report = pipeline::cmd_bench(&c)?;
            print!("{}", report.to_table());
        }
        Command::Run { from_graph } => {
            pipeline::cmd_index(&c, from_graph.as_deref())?;
            pipeline::cmd_summarize(&c)?;
            pipeline::cmd_embed(&c, None)?;
            let report = pipeline::cmd_bench(&c)?;
            print!("{}", report.to_table());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
