use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use chrono::NaiveDate;
use clap::{Args, Parser, Subcommand};
use log::{info, warn};

use symbourse::indicators::{indicator_vector, write_indicators, MIN_HISTORY};
use symbourse::market_data::{
    parse_instruments, parse_portfolio, parse_quotes, parse_taxonomy, write_instruments, write_portfolio,
    write_quotes, write_taxonomy, Dataset, DatasetManifest, Portfolio,
};
use symbourse::pyramid::{pyr_cluster, render_pyramid, RenderFormat};
use symbourse::query::{
    apply_method, build_table, describe_dataset, resolve_query, run, write_artifacts, Granularity, Level,
    Method, MethodConfig, Query, VariableSet,
};
use symbourse::symbolic::{dissimilarity_matrix, parse_dissimilarity, DissimilaritySpec, SymbolicTable};
use symbourse::synth::{market_sample, SampleConfig};

#[derive(Parser)]
#[command(name = "symbourse", version, about = "Symbolic data analysis of stock-market data")]
struct Cli {
    /// More log output (repeat for debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct DataArgs {
    #[arg(long)]
    quotes: Option<PathBuf>,
    #[arg(long)]
    instruments: Option<PathBuf>,
    #[arg(long)]
    taxonomy: Option<PathBuf>,
    /// Dataset manifest listing the three files with their checksums.
    #[arg(long, conflicts_with_all = ["quotes", "instruments", "taxonomy"])]
    manifest: Option<PathBuf>,
    #[arg(long)]
    portfolio: Option<PathBuf>,
}

#[derive(Args)]
struct QueryArgs {
    #[arg(long, default_value = "global-market")]
    level: Level,
    #[arg(long, default_value = "action")]
    granularity: Granularity,
    /// Market code, sector code or ticker, depending on the level.
    #[arg(long)]
    scope: Option<String>,
    /// Comma list of variables and set names (fundamental, medium-long, short).
    #[arg(long, default_value = "fundamental,medium-long")]
    variables: VariableSet,
    /// Analysis date, defaults to the last trading day.
    #[arg(long)]
    date: Option<NaiveDate>,
}

#[derive(Args)]
struct MethodArgs {
    #[arg(long, default_value_t = 8)]
    k: usize,
    /// Factor axes to plot, as `a,b`.
    #[arg(long, default_value = "1,2", value_parser = parse_axes)]
    axes: (usize, usize),
    /// Skip the inverse standard deviation scaling before DIV.
    #[arg(long)]
    no_normalize: bool,
}

#[derive(Args)]
struct OutArgs {
    #[arg(long, env = "SYMBOURSE_OUT", default_value = "symbourse-out")]
    out_dir: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Validate the input files and record them in a dataset manifest.
    Ingest {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Summarize a dataset.
    Describe {
        #[command(flatten)]
        data: DataArgs,
    },
    /// Per-stock indicators at a date, as CSV on stdout.
    Indicators {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        date: Option<NaiveDate>,
    },
    /// Build the symbolic table of a query and write it as table.csv.
    Aggregate {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        query: QueryArgs,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Divisive clustering of a table file or of a query.
    Div(MethodCommand),
    /// Interval PCA of a table file or of a query.
    Pca(MethodCommand),
    /// Pyramid from a dissimilarity file, a table file or a query.
    Pyramid {
        /// Dissimilarity CSV, or `computed` to derive it from the table.
        #[arg(long, default_value = "computed")]
        dissimilarity: String,
        #[command(flatten)]
        method: MethodCommand,
        #[arg(long)]
        svg: Option<PathBuf>,
        #[arg(long)]
        text: Option<PathBuf>,
    },
    /// Run a full query: scope, indicators, aggregation, method, report.
    Analyze {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        query: QueryArgs,
        #[arg(long, default_value = "div")]
        method: Method,
        #[command(flatten)]
        params: MethodArgs,
        #[command(flatten)]
        out: OutArgs,
        /// Print the plan without running it.
        #[arg(long)]
        dry_run: bool,
    },
    /// Write a synthetic sample dataset (quotes, instruments, taxonomy, portfolio).
    Synth {
        #[arg(long, default_value_t = 1999)]
        seed: u64,
        #[arg(long, default_value_t = 250)]
        tickers: usize,
        #[arg(long, default_value_t = 104)]
        days: usize,
        #[command(flatten)]
        out: OutArgs,
    },
}

#[derive(Args)]
struct MethodCommand {
    /// Symbolic table CSV written by `aggregate`; without it the query flags
    /// are used.
    #[arg(long)]
    input: Option<PathBuf>,
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    query: QueryArgs,
    #[command(flatten)]
    params: MethodArgs,
    #[command(flatten)]
    out: OutArgs,
}

fn parse_axes(s: &str) -> Result<(usize, usize), String> {
    let (a, b) = s.split_once(',').ok_or_else(|| format!("expected `a,b`, got `{s}`"))?;
    let num = |x: &str| x.trim().parse::<usize>().map_err(|e| format!("axis `{x}`: {e}"));
    Ok((num(a)?, num(b)?))
}

fn open(path: &Path) -> Result<fs::File> {
    fs::File::open(path).with_context(|| format!("cannot open {}", path.display()))
}

impl DataArgs {
    fn load(&self) -> Result<Dataset> {
        if let Some(m) = &self.manifest {
            let manifest = DatasetManifest::read(m).with_context(|| format!("reading {}", m.display()))?;
            let base = m.parent().unwrap_or(Path::new("."));
            return Ok(manifest.load(base)?);
        }
        let (Some(q), Some(i), Some(t)) = (&self.quotes, &self.instruments, &self.taxonomy) else {
            bail!("give --manifest, or all of --quotes, --instruments and --taxonomy");
        };
        let quotes = parse_quotes(open(q)?).with_context(|| format!("in {}", q.display()))?;
        let instruments = parse_instruments(open(i)?).with_context(|| format!("in {}", i.display()))?;
        let taxonomy = parse_taxonomy(open(t)?).with_context(|| format!("in {}", t.display()))?;
        Ok(Dataset::build(quotes, instruments, taxonomy)?)
    }

    fn portfolio(&self) -> Result<Option<Portfolio>> {
        self.portfolio
            .as_ref()
            .map(|p| parse_portfolio(open(p)?).with_context(|| format!("in {}", p.display())))
            .transpose()
    }
}

impl QueryArgs {
    fn query(&self, method: Method, params: &MethodArgs) -> Query {
        Query {
            level: self.level,
            granularity: self.granularity,
            scope: self.scope.clone(),
            variables: self.variables.clone(),
            config: params.config(method),
            date: self.date,
        }
    }
}

impl MethodArgs {
    fn config(&self, method: Method) -> MethodConfig {
        MethodConfig {
            method,
            k: self.k,
            axes: self.axes,
            normalize: !self.no_normalize,
        }
    }
}

fn report(paths: &[PathBuf]) {
    for p in paths {
        println!("wrote {}", p.display());
    }
}

fn run_method(cmd: &MethodCommand, method: Method) -> Result<()> {
    match &cmd.input {
        Some(input) => {
            let table = SymbolicTable::parse_csv(open(input)?).with_context(|| format!("in {}", input.display()))?;
            let artifacts = apply_method(&table, &cmd.params.config(method))?;
            report(&write_artifacts(&cmd.out.out_dir, &artifacts, None)?);
        }
        None => {
            let dataset = cmd.data.load()?;
            let portfolio = cmd.data.portfolio()?;
            let plan = resolve_query(&cmd.query.query(method, &cmd.params), &dataset, portfolio.as_ref())?;
            report(&run(&plan, &dataset, &cmd.out.out_dir)?);
        }
    }
    Ok(())
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, bytes).with_context(|| format!("cannot write {}", path.display()))?;
    println!("wrote {}", path.display());
    Ok(())
}

fn pyramid_command(dissimilarity: &str, cmd: &MethodCommand, svg: Option<&Path>, text: Option<&Path>) -> Result<()> {
    let (labels, d) = if dissimilarity == "computed" {
        let table = match &cmd.input {
            Some(input) => SymbolicTable::parse_csv(open(input)?)?,
            None => {
                let dataset = cmd.data.load()?;
                let portfolio = cmd.data.portfolio()?;
                let query = cmd.query.query(Method::Pyramid, &cmd.params);
                build_table(&resolve_query(&query, &dataset, portfolio.as_ref())?, &dataset)?
            }
        };
        let d = dissimilarity_matrix(&table, &DissimilaritySpec::from_table(&table))?;
        (table.labels().to_vec(), d)
    } else {
        let path = Path::new(dissimilarity);
        parse_dissimilarity(open(path)?).with_context(|| format!("in {}", path.display()))?
    };
    let pyramid = pyr_cluster(&d, &labels)?;
    let out = &cmd.out.out_dir;
    let text_path = text.map(Path::to_path_buf).unwrap_or_else(|| out.join("pyramid.txt"));
    let svg_path = svg.map(Path::to_path_buf).unwrap_or_else(|| out.join("pyramid.svg"));
    write_file(&text_path, render_pyramid(&pyramid, RenderFormat::Text).as_bytes())?;
    write_file(&svg_path, render_pyramid(&pyramid, RenderFormat::Svg).as_bytes())
}

fn main_inner(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Ingest { data, out } => {
            let dataset = data.load()?;
            print!("{}", describe_dataset(&dataset));
            if data.manifest.is_some() {
                println!("checksums verified");
                return Ok(());
            }
            let abs = |p: &Option<PathBuf>| -> Result<PathBuf> {
                let p = p.as_ref().expect("checked by load");
                Ok(fs::canonicalize(p)?)
            };
            let manifest = DatasetManifest::from_paths(
                &abs(&data.quotes)?,
                &abs(&data.instruments)?,
                &abs(&data.taxonomy)?,
            )?;
            fs::create_dir_all(&out.out_dir)?;
            write_file(&out.out_dir.join("dataset.json"), manifest.to_json()?.as_bytes())
        }
        Command::Describe { data } => {
            print!("{}", describe_dataset(&data.load()?));
            Ok(())
        }
        Command::Indicators { data, date } => {
            let dataset = data.load()?;
            let at = date.unwrap_or_else(|| dataset.last_date());
            let mut vectors = Vec::new();
            for ticker in dataset.tickers() {
                if dataset.series(ticker)?.history_at(at) < MIN_HISTORY {
                    warn!("{ticker}: fewer than {MIN_HISTORY} trading days at {at}, skipped");
                    continue;
                }
                vectors.push(indicator_vector(&dataset, ticker, at)?);
            }
            let stdout = io::stdout();
            write_indicators(stdout.lock(), &vectors)?;
            Ok(())
        }
        Command::Aggregate { data, query, out } => {
            let dataset = data.load()?;
            let portfolio = data.portfolio()?;
            let q = query.query(Method::Describe, &MethodArgs {
                k: 1,
                axes: (1, 2),
                no_normalize: false,
            });
            let table = build_table(&resolve_query(&q, &dataset, portfolio.as_ref())?, &dataset)?;
            let mut bytes = Vec::new();
            table.write_csv(&mut bytes)?;
            fs::create_dir_all(&out.out_dir)?;
            write_file(&out.out_dir.join("table.csv"), &bytes)
        }
        Command::Div(cmd) => run_method(&cmd, Method::Div),
        Command::Pca(cmd) => run_method(&cmd, Method::Pca),
        Command::Pyramid {
            dissimilarity,
            method,
            svg,
            text,
        } => pyramid_command(&dissimilarity, &method, svg.as_deref(), text.as_deref()),
        Command::Analyze {
            data,
            query,
            method,
            params,
            out,
            dry_run,
        } => {
            let dataset = data.load()?;
            let portfolio = data.portfolio()?;
            let plan = resolve_query(&query.query(method, &params), &dataset, portfolio.as_ref())?;
            if dry_run {
                print!("{plan}");
                return Ok(());
            }
            report(&run(&plan, &dataset, &out.out_dir)?);
            Ok(())
        }
        Command::Synth {
            seed,
            tickers,
            days,
            out,
        } => {
            let sample = market_sample(&SampleConfig {
                seed,
                tickers,
                days,
                ..SampleConfig::default()
            });
            let dir = &out.out_dir;
            fs::create_dir_all(dir)?;
            let mut q = Vec::new();
            write_quotes(&mut q, &sample.quotes)?;
            let mut i = Vec::new();
            write_instruments(&mut i, &sample.instruments)?;
            let mut t = Vec::new();
            write_taxonomy(&mut t, &sample.taxonomy)?;
            let mut p = Vec::new();
            write_portfolio(&mut p, &sample.portfolio)?;
            for (name, bytes) in [
                ("quotes.csv", &q),
                ("instruments.csv", &i),
                ("taxonomy.csv", &t),
                ("portfolio.csv", &p),
            ] {
                write_file(&dir.join(name), bytes)?;
            }
            let mut manifest = DatasetManifest::from_paths(
                &dir.join("quotes.csv"),
                &dir.join("instruments.csv"),
                &dir.join("taxonomy.csv"),
            )?;
            manifest.quotes.path = "quotes.csv".into();
            manifest.instruments.path = "instruments.csv".into();
            manifest.taxonomy.path = "taxonomy.csv".into();
            write_file(&dir.join("dataset.json"), manifest.to_json()?.as_bytes())?;
            info!("{} quotes for {} tickers", sample.quotes.len(), sample.instruments.len());
            Ok(())
        }
    }
}

fn main() {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    if let Err(e) = main_inner(cli) {
        let _ = writeln!(io::stderr(), "error: {e:#}");
        std::process::exit(1);
    }
}
