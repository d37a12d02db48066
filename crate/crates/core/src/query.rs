//! Analysis queries: which stocks, described at which granularity, analyzed
//! by which method. A query resolves against a dataset into a [`Plan`],
//! and running the plan writes the method's artifacts plus a manifest.

use std::collections::BTreeSet;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use chrono::NaiveDate;
use log::warn;
use serde::Serialize;

use crate::div::{div_cluster, render_division_tree};
use crate::error::{Error, Result};
use crate::indicators::{indicator_vector, unit_of, IndicatorVector, MIN_HISTORY, SD_RET, STANDARD};
use crate::ipca::{centers_pca, project_all, render_factor_plot, write_rectangles};
use crate::market_data::{sha256_hex, Dataset, Market, Portfolio, SectorLevel};
use crate::pyramid::{pyr_cluster, render_pyramid, RenderFormat};
use crate::symbolic::{
    aggregate, dissimilarity_matrix, write_dissimilarity, DissimilaritySpec, GroupKey, IndividualRow,
    Observation, SymbolicTable, SymbolicValue, VariableDescriptor, VariableKind,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Level {
    GlobalMarket,
    Market,
    Portfolio,
    Sector,
    Action,
}

impl Level {
    pub const ALL: [Level; 5] = [
        Level::GlobalMarket,
        Level::Market,
        Level::Portfolio,
        Level::Sector,
        Level::Action,
    ];
}

impl fmt::Display for Level {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Level::GlobalMarket => "global-market",
            Level::Market => "market",
            Level::Portfolio => "portfolio",
            Level::Sector => "sector",
            Level::Action => "action",
        })
    }
}

impl FromStr for Level {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "global-market" | "global" => Level::GlobalMarket,
            "market" => Level::Market,
            "portfolio" => Level::Portfolio,
            "sector" => Level::Sector,
            "action" | "stock" => Level::Action,
            other => return Err(Error::InvalidQuery(format!("unknown level `{other}`"))),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Granularity {
    Market,
    Sector(SectorLevel),
    Action,
    Week,
}

impl Granularity {
    pub const ALL: [Granularity; 6] = [
        Granularity::Market,
        Granularity::Sector(SectorLevel::L1),
        Granularity::Sector(SectorLevel::L2),
        Granularity::Sector(SectorLevel::L3),
        Granularity::Action,
        Granularity::Week,
    ];

    pub fn group_key(self) -> GroupKey {
        match self {
            Granularity::Market => GroupKey::Market,
            Granularity::Sector(level) => GroupKey::Sector(level),
            Granularity::Action => GroupKey::Ticker,
            Granularity::Week => GroupKey::Week,
        }
    }
}

impl fmt::Display for Granularity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Granularity::Market => f.write_str("market"),
            Granularity::Sector(level) => write!(f, "sector-{level}"),
            Granularity::Action => f.write_str("action"),
            Granularity::Week => f.write_str("week"),
        }
    }
}

impl FromStr for Granularity {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "market" => Granularity::Market,
            "sector" | "sector-l3" => Granularity::Sector(SectorLevel::L3),
            "sector-l2" => Granularity::Sector(SectorLevel::L2),
            "sector-l1" => Granularity::Sector(SectorLevel::L1),
            "action" | "stock" => Granularity::Action,
            "week" => Granularity::Week,
            other => return Err(Error::InvalidQuery(format!("unknown granularity `{other}`"))),
        })
    }
}

/// Whether `(level, granularity)` is one of the meaningful combinations:
/// the granularity must be strictly finer than the level, or time.
pub fn is_filled_cell(level: Level, granularity: Granularity) -> bool {
    use Granularity as G;
    match level {
        Level::GlobalMarket | Level::Portfolio => true,
        Level::Market => !matches!(granularity, G::Market),
        Level::Sector => matches!(granularity, G::Action | G::Week),
        Level::Action => matches!(granularity, G::Week),
    }
}

fn check_cell(level: Level, granularity: Granularity) -> Result<()> {
    if is_filled_cell(level, granularity) {
        Ok(())
    } else {
        Err(Error::InvalidCell {
            level: level.to_string(),
            granularity: granularity.to_string(),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    Div,
    Pca,
    Pyramid,
    Describe,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Div => "div",
            Method::Pca => "pca",
            Method::Pyramid => "pyramid",
            Method::Describe => "describe",
        })
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "div" => Method::Div,
            "pca" | "pcm" => Method::Pca,
            "pyramid" | "pyr" => Method::Pyramid,
            "describe" => Method::Describe,
            other => return Err(Error::InvalidQuery(format!("unknown method `{other}`"))),
        })
    }
}

pub const CATEGORICAL: [&str; 4] = ["market", "sector_l1", "sector_l2", "sector_l3"];

const BUILTIN_SETS: [(&str, &[&str]); 3] = [
    ("fundamental", &["capitmds", "capim10", "market", "sector_l3"]),
    ("medium-long", &["perfmois", "volat20"]),
    ("short", &["perf2sem", "volat10"]),
];

fn is_known_variable(name: &str) -> bool {
    name == SD_RET || STANDARD.iter().any(|(n, _)| *n == name) || CATEGORICAL.contains(&name)
}

/// Ordered, duplicate-free list of variable names, written as a comma list
/// mixing built-in set names and single variables.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VariableSet(Vec<String>);

impl VariableSet {
    pub fn names(&self) -> &[String] {
        &self.0
    }

    pub fn builtin(name: &str) -> Option<&'static [&'static str]> {
        BUILTIN_SETS.iter().find(|(n, _)| *n == name).map(|(_, v)| *v)
    }
}

impl Default for VariableSet {
    fn default() -> Self {
        "fundamental,medium-long".parse().expect("built-in sets")
    }
}

impl FromStr for VariableSet {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut names: Vec<String> = Vec::new();
        for token in s.split(',').map(str::trim).filter(|t| !t.is_empty()) {
            let expanded: Vec<&str> = match Self::builtin(token) {
                Some(set) => set.to_vec(),
                None if is_known_variable(token) => vec![token],
                None => return Err(Error::UnknownVariable(token.to_owned())),
            };
            for name in expanded {
                if !names.iter().any(|n| n == name) {
                    names.push(name.to_owned());
                }
            }
        }
        if names.is_empty() {
            return Err(Error::InvalidQuery("empty variable set".into()));
        }
        Ok(VariableSet(names))
    }
}

impl fmt::Display for VariableSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0.join(","))
    }
}

/// Parameters of the analysis step, independent of how the table was built.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MethodConfig {
    pub method: Method,
    pub k: usize,
    pub axes: (usize, usize),
    pub normalize: bool,
}

impl Default for MethodConfig {
    fn default() -> Self {
        Self {
            method: Method::Div,
            k: 8,
            axes: (1, 2),
            normalize: true,
        }
    }
}

impl MethodConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::InvalidQuery("K must be at least 1".into()));
        }
        let (a, b) = self.axes;
        if a == 0 || b == 0 || a == b {
            return Err(Error::InvalidQuery(format!("axes must be two distinct numbers from 1, got {a},{b}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Query {
    pub level: Level,
    pub granularity: Granularity,
    /// Market code, sector code or ticker, depending on the level.
    pub scope: Option<String>,
    pub variables: VariableSet,
    pub config: MethodConfig,
    /// Defaults to the last calendar date.
    pub date: Option<NaiveDate>,
}

impl Query {
    pub fn new(level: Level, granularity: Granularity) -> Self {
        Self {
            level,
            granularity,
            scope: None,
            variables: VariableSet::default(),
            config: MethodConfig::default(),
            date: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        check_cell(self.level, self.granularity)?;
        self.config.validate()
    }
}

/// A resolved query: the stocks it covers and every step it will run.
#[derive(Debug, Clone, PartialEq)]
pub struct Plan {
    pub query: Query,
    pub analysis_date: NaiveDate,
    pub scope: String,
    /// Stocks in scope with enough history, sorted.
    pub tickers: Vec<String>,
    /// Stocks in scope dropped for lack of history.
    pub insufficient: Vec<String>,
    pub portfolio: Option<Portfolio>,
}

impl Plan {
    pub fn group_key(&self) -> GroupKey {
        self.query.granularity.group_key()
    }

    /// Variables fed to the numeric methods.
    pub fn numeric_variables(&self) -> Vec<String> {
        numeric_only(self.query.variables.names())
    }
}

fn numeric_only(names: &[String]) -> Vec<String> {
    names
        .iter()
        .filter(|n| !CATEGORICAL.contains(&n.as_str()))
        .cloned()
        .collect()
}

impl fmt::Display for Plan {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let q = &self.query;
        writeln!(f, "level: {}", q.level)?;
        writeln!(f, "granularity: {}", q.granularity)?;
        writeln!(f, "scope: {}", self.scope)?;
        writeln!(f, "analysis date: {}", self.analysis_date)?;
        writeln!(f, "variables: {}", q.variables)?;
        writeln!(f, "stocks: {}", self.tickers.len())?;
        if !self.insufficient.is_empty() {
            writeln!(
                f,
                "skipped for insufficient history: {}",
                self.insufficient.join(", ")
            )?;
        }
        writeln!(f, "steps:")?;
        writeln!(f, "  1. filter stocks: {}", self.scope)?;
        match q.granularity {
            Granularity::Week => writeln!(
                f,
                "  2. compute indicators on every trading day up to {}",
                self.analysis_date
            )?,
            _ => writeln!(f, "  2. compute indicators at {}", self.analysis_date)?,
        }
        writeln!(f, "  3. aggregate by {}", self.group_key())?;
        let c = &q.config;
        let numeric = self.numeric_variables().join(",");
        match c.method {
            Method::Div => {
                let norm = if c.normalize { "inverse standard deviation" } else { "none" };
                writeln!(f, "  4. div on {numeric} with K = {}, normalization: {norm}", c.k)?;
                writeln!(f, "  5. write div_report.txt, div_classes.csv")?;
            }
            Method::Pca => {
                writeln!(f, "  4. pca on {numeric}, axes {} and {}", c.axes.0, c.axes.1)?;
                writeln!(f, "  5. write pca_axes.csv, pca_rectangles.csv, pca_plot.svg")?;
            }
            Method::Pyramid => {
                writeln!(f, "  4. dissimilarities on {}, then pyramid", q.variables)?;
                writeln!(f, "  5. write dissimilarity.csv, pyramid.txt, pyramid.svg")?;
            }
            Method::Describe => {
                writeln!(f, "  4. describe objects")?;
                writeln!(f, "  5. write describe.txt")?;
            }
        }
        writeln!(f, "  6. write table.csv and manifest.json")
    }
}

fn analysis_date(query: &Query, dataset: &Dataset) -> Result<NaiveDate> {
    let first = dataset.calendar()[0];
    match query.date {
        Some(d) if d < first => Err(Error::NoQuoteBefore(d)),
        Some(d) => Ok(d),
        None => Ok(dataset.last_date()),
    }
}

fn require_scope(query: &Query) -> Result<&str> {
    query
        .scope
        .as_deref()
        .ok_or_else(|| Error::InvalidQuery(format!("level {} needs --scope", query.level)))
}

/// Checks the query against the level and granularity grid and the dataset,
/// then fixes the stocks, the analysis date and the steps.
pub fn resolve_query(query: &Query, dataset: &Dataset, portfolio: Option<&Portfolio>) -> Result<Plan> {
    query.validate()?;
    let date = analysis_date(query, dataset)?;
    let taxonomy = dataset.taxonomy();

    let (scope, selected): (String, Vec<String>) = match query.level {
        Level::GlobalMarket => {
            if let Some(s) = &query.scope {
                return Err(Error::InvalidQuery(format!("global-market takes no scope, got `{s}`")));
            }
            ("all stocks".into(), dataset.tickers().map(str::to_owned).collect())
        }
        Level::Market => {
            let market: Market = require_scope(query)?.parse()?;
            let tickers = dataset
                .instruments()
                .filter(|i| i.market == market)
                .map(|i| i.ticker.clone())
                .collect();
            (format!("market = {market}"), tickers)
        }
        Level::Portfolio => {
            let p = portfolio.ok_or_else(|| Error::InvalidQuery("level portfolio needs --portfolio".into()))?;
            for t in p.tickers() {
                dataset.instrument(t)?;
            }
            let tickers = p.tickers().map(str::to_owned).collect();
            (format!("portfolio of {} positions", p.positions.len()), tickers)
        }
        Level::Sector => {
            let code = require_scope(query)?;
            let level = taxonomy
                .level_of(code)
                .ok_or_else(|| Error::UnknownSector(code.to_owned()))?;
            let tickers = dataset
                .instruments()
                .filter(|i| taxonomy.rollup(&i.sector_l3, level) == Some(code))
                .map(|i| i.ticker.clone())
                .collect();
            (format!("sector_{level} = {code}"), tickers)
        }
        Level::Action => {
            let ticker = require_scope(query)?;
            dataset.instrument(ticker)?;
            (format!("action = {ticker}"), vec![ticker.to_owned()])
        }
    };

    let mut tickers = Vec::new();
    let mut insufficient = Vec::new();
    for t in selected {
        if dataset.series(&t)?.history_at(date) >= MIN_HISTORY {
            tickers.push(t);
        } else {
            insufficient.push(t);
        }
    }
    tickers.sort();
    insufficient.sort();
    if !insufficient.is_empty() {
        warn!(
            "{} stock(s) skipped for insufficient history at {date}: {}",
            insufficient.len(),
            insufficient.join(", ")
        );
    }
    if tickers.is_empty() {
        return Err(Error::EmptyScope(scope));
    }
    Ok(Plan {
        query: query.clone(),
        analysis_date: date,
        scope,
        tickers,
        insufficient,
        portfolio: portfolio.cloned(),
    })
}

fn individual(
    dataset: &Dataset,
    vector: &IndicatorVector,
    week: Option<String>,
    in_portfolio: bool,
    variables: &[String],
) -> Result<IndividualRow> {
    let inst = dataset.instrument(&vector.ticker)?;
    let taxonomy = dataset.taxonomy();
    let sector = |level| {
        taxonomy
            .rollup(&inst.sector_l3, level)
            .map(str::to_owned)
            .ok_or_else(|| Error::UnknownSector(inst.sector_l3.clone()))
    };
    let sectors = [sector(SectorLevel::L1)?, sector(SectorLevel::L2)?, sector(SectorLevel::L3)?];
    let mut values = std::collections::BTreeMap::new();
    for name in variables {
        let obs = match name.as_str() {
            "market" => Observation::Category(inst.market.code().to_owned()),
            "sector_l1" => Observation::Category(sectors[0].clone()),
            "sector_l2" => Observation::Category(sectors[1].clone()),
            "sector_l3" => Observation::Category(sectors[2].clone()),
            other => Observation::Number(
                vector
                    .get(other)
                    .ok_or_else(|| Error::UnknownVariable(other.to_owned()))?,
            ),
        };
        values.insert(name.clone(), obs);
    }
    Ok(IndividualRow {
        ticker: vector.ticker.clone(),
        market: inst.market,
        sectors,
        week,
        in_portfolio,
        values,
    })
}

/// One row per stock at the analysis date or, for the week granularity, one
/// row per stock and trading day with a month of history behind it.
pub fn individual_rows(plan: &Plan, dataset: &Dataset) -> Result<Vec<IndividualRow>> {
    let variables = plan.query.variables.names();
    let in_portfolio = |t: &str| plan.portfolio.as_ref().is_some_and(|p| p.contains(t));
    let mut rows = Vec::new();
    for ticker in &plan.tickers {
        if plan.query.granularity == Granularity::Week {
            let series = dataset.series(ticker)?;
            for bar in series.bars() {
                if bar.date > plan.analysis_date || series.history_at(bar.date) < MIN_HISTORY {
                    continue;
                }
                let v = indicator_vector(dataset, ticker, bar.date)?;
                let week = bar.date.format("%G-W%V").to_string();
                rows.push(individual(dataset, &v, Some(week), in_portfolio(ticker), variables)?);
            }
        } else {
            let v = indicator_vector(dataset, ticker, plan.analysis_date)?;
            rows.push(individual(dataset, &v, None, in_portfolio(ticker), variables)?);
        }
    }
    Ok(rows)
}

pub fn build_table(plan: &Plan, dataset: &Dataset) -> Result<SymbolicTable> {
    let rows = individual_rows(plan, dataset).map_err(|e| e.in_stage("indicators"))?;
    let descriptors: Vec<VariableDescriptor> = plan
        .query
        .variables
        .names()
        .iter()
        .map(|n| VariableDescriptor::new(n, VariableKind::Interval, unit_of(n)))
        .collect();
    aggregate(&rows, plan.group_key(), &descriptors).map_err(|e| e.in_stage("aggregate"))
}

/// A file produced by a run, kept in memory until every stage succeeded.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Artifact {
    pub name: String,
    pub bytes: Vec<u8>,
}

impl Artifact {
    fn text(name: &str, text: String) -> Self {
        Self {
            name: name.to_owned(),
            bytes: text.into_bytes(),
        }
    }
}

fn numeric_columns(table: &SymbolicTable, method: Method) -> Result<Vec<String>> {
    let names: Vec<String> = table.variables().iter().map(|v| v.name.clone()).collect();
    let numeric = table.numeric_variables();
    let dropped: Vec<&String> = names.iter().filter(|n| !numeric.contains(n)).collect();
    if !dropped.is_empty() {
        warn!(
            "{method}: categorical variable(s) left out of the numeric matrix: {}",
            dropped.iter().map(|s| s.as_str()).collect::<Vec<_>>().join(", ")
        );
    }
    if numeric.is_empty() {
        return Err(Error::InvalidQuery(format!("{method} needs at least one numeric variable")));
    }
    Ok(numeric)
}

fn describe_table(table: &SymbolicTable) -> String {
    let mut out = format!("objects: {} (grouped by {})\n", table.len(), table.group_key());
    out.push_str(&format!(
        "individuals: {}\n",
        table.members().iter().sum::<usize>()
    ));
    out.push_str("variables:\n");
    for v in table.variables() {
        let unit = v.unit.as_deref().map(|u| format!(" [{u}]")).unwrap_or_default();
        match v.kind {
            VariableKind::Modal => {
                let cats: BTreeSet<&str> = table
                    .rows()
                    .filter_map(|r| r[table.variable_index(&v.name).ok()?].as_modal())
                    .flat_map(|m| m.iter().map(|(c, _)| c))
                    .collect();
                out.push_str(&format!(
                    "  {} (modal): {} categories: {}\n",
                    v.name,
                    cats.len(),
                    cats.into_iter().collect::<Vec<_>>().join(", ")
                ));
            }
            _ => {
                let j = table.variable_index(&v.name).unwrap_or(0);
                let spans: Vec<_> = table.rows().filter_map(|r| r[j].as_interval()).collect();
                let lo = spans.iter().map(|i| i.lo()).fold(f64::INFINITY, f64::min);
                let hi = spans.iter().map(|i| i.hi()).fold(f64::NEG_INFINITY, f64::max);
                out.push_str(&format!(
                    "  {}{unit} ({}): overall range [{lo:.6}, {hi:.6}]\n",
                    v.name, v.kind
                ));
            }
        }
    }
    out.push_str("objects detail:\n");
    for (i, label) in table.labels().iter().enumerate() {
        let cells: Vec<String> = table.row(i).iter().map(SymbolicValue::to_string).collect();
        out.push_str(&format!(
            "  {label} ({} members): {}\n",
            table.members()[i],
            cells.join(" ")
        ));
    }
    out
}

/// Runs the analysis step on an already built table.
pub fn apply_method(table: &SymbolicTable, config: &MethodConfig) -> Result<Vec<Artifact>> {
    config.validate()?;
    let stage = match config.method {
        Method::Div => "div",
        Method::Pca => "pca",
        Method::Pyramid => "pyramid",
        Method::Describe => "describe",
    };
    let run = || -> Result<Vec<Artifact>> {
        Ok(match config.method {
            Method::Div => {
                let names = numeric_columns(table, Method::Div)?;
                let matrix = table.midpoints(&names)?;
                let tree = div_cluster(&matrix, &names, table.labels(), config.k, config.normalize)?;
                let mut classes = Vec::new();
                tree.write_assignments(&mut classes)?;
                vec![
                    Artifact::text("div_report.txt", render_division_tree(&tree)),
                    Artifact {
                        name: "div_classes.csv".into(),
                        bytes: classes,
                    },
                ]
            }
            Method::Pca => {
                let names = numeric_columns(table, Method::Pca)?;
                let model = centers_pca(table, &names)?;
                let (a, b) = config.axes;
                let rects = project_all(&model, table, &[a, b])?;
                let mut axes = Vec::new();
                model.write_summary(&mut axes)?;
                let mut rect_csv = Vec::new();
                write_rectangles(&mut rect_csv, &rects)?;
                vec![
                    Artifact {
                        name: "pca_axes.csv".into(),
                        bytes: axes,
                    },
                    Artifact {
                        name: "pca_rectangles.csv".into(),
                        bytes: rect_csv,
                    },
                    Artifact::text("pca_plot.svg", render_factor_plot(&model, &rects, (a, b))?),
                ]
            }
            Method::Pyramid => {
                let spec = DissimilaritySpec::from_table(table);
                let d = dissimilarity_matrix(table, &spec)?;
                let pyramid = pyr_cluster(&d, table.labels())?;
                let mut d_csv = Vec::new();
                write_dissimilarity(&mut d_csv, table.labels(), &d)?;
                vec![
                    Artifact {
                        name: "dissimilarity.csv".into(),
                        bytes: d_csv,
                    },
                    Artifact::text("pyramid.txt", render_pyramid(&pyramid, RenderFormat::Text)),
                    Artifact::text("pyramid.svg", render_pyramid(&pyramid, RenderFormat::Svg)),
                ]
            }
            Method::Describe => vec![Artifact::text("describe.txt", describe_table(table))],
        })
    };
    run().map_err(|e| e.in_stage(stage))
}

#[derive(Debug, Serialize)]
struct QueryEcho {
    level: String,
    granularity: String,
    scope: Option<String>,
    variables: Vec<String>,
    method: String,
    k: usize,
    axes: [usize; 2],
    normalize: bool,
    date: Option<String>,
}

#[derive(Debug, Serialize)]
struct ArtifactEntry {
    path: String,
    sha256: String,
}

#[derive(Debug, Serialize)]
struct RunManifest {
    tool: &'static str,
    version: &'static str,
    query: QueryEcho,
    analysis_date: String,
    dataset_sha256: String,
    stocks: usize,
    objects: usize,
    artifacts: Vec<ArtifactEntry>,
}

pub const MANIFEST_NAME: &str = "manifest.json";

/// Every artifact of a plan, table first, manifest excluded.
pub fn plan_artifacts(plan: &Plan, dataset: &Dataset) -> Result<(SymbolicTable, Vec<Artifact>)> {
    let table = build_table(plan, dataset)?;
    let mut table_csv = Vec::new();
    table.write_csv(&mut table_csv).map_err(|e| e.in_stage("aggregate"))?;
    let mut artifacts = vec![Artifact {
        name: "table.csv".into(),
        bytes: table_csv,
    }];
    artifacts.extend(apply_method(&table, &plan.query.config)?);
    Ok((table, artifacts))
}

/// Writes `artifacts` into `out_dir`, then a manifest describing them.
/// Returns the written paths, manifest last.
pub fn write_artifacts(out_dir: &Path, artifacts: &[Artifact], manifest: Option<Vec<u8>>) -> Result<Vec<PathBuf>> {
    let io = |e: std::io::Error| Error::from(e).in_stage("write");
    fs::create_dir_all(out_dir).map_err(io)?;
    let mut paths = Vec::new();
    for a in artifacts {
        let path = out_dir.join(&a.name);
        fs::write(&path, &a.bytes).map_err(io)?;
        paths.push(path);
    }
    if let Some(bytes) = manifest {
        let path = out_dir.join(MANIFEST_NAME);
        fs::write(&path, bytes).map_err(io)?;
        paths.push(path);
    }
    Ok(paths)
}

/// Runs a plan end to end. Nothing is written unless every stage succeeds;
/// a manifest left by an earlier run in `out_dir` is removed first.
pub fn run(plan: &Plan, dataset: &Dataset, out_dir: &Path) -> Result<Vec<PathBuf>> {
    let stale = out_dir.join(MANIFEST_NAME);
    if stale.exists() {
        fs::remove_file(&stale).map_err(|e| Error::from(e).in_stage("write"))?;
    }
    let (table, artifacts) = plan_artifacts(plan, dataset)?;
    let q = &plan.query;
    let manifest = RunManifest {
        tool: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        query: QueryEcho {
            level: q.level.to_string(),
            granularity: q.granularity.to_string(),
            scope: q.scope.clone(),
            variables: q.variables.names().to_vec(),
            method: q.config.method.to_string(),
            k: q.config.k,
            axes: [q.config.axes.0, q.config.axes.1],
            normalize: q.config.normalize,
            date: q.date.map(|d| d.to_string()),
        },
        analysis_date: plan.analysis_date.to_string(),
        dataset_sha256: dataset.checksum().map_err(|e| e.in_stage("checksum"))?,
        stocks: plan.tickers.len(),
        objects: table.len(),
        artifacts: artifacts
            .iter()
            .map(|a| ArtifactEntry {
                path: a.name.clone(),
                sha256: sha256_hex(&a.bytes),
            })
            .collect(),
    };
    let mut json = serde_json::to_vec_pretty(&manifest)?;
    json.push(b'\n');
    write_artifacts(out_dir, &artifacts, Some(json))
}

/// Counts of tickers, markets and sectors, the calendar span and the stocks
/// without a month of history at the last date.
pub fn describe_dataset(dataset: &Dataset) -> String {
    let markets: BTreeSet<Market> = dataset.instruments().map(|i| i.market).collect();
    let taxonomy = dataset.taxonomy();
    let sectors_in_use = |level| -> BTreeSet<&str> {
        dataset
            .instruments()
            .filter_map(|i| taxonomy.rollup(&i.sector_l3, level))
            .collect()
    };
    let calendar = dataset.calendar();
    let last = dataset.last_date();
    let short: Vec<String> = dataset
        .tickers()
        .filter(|t| dataset.series(t).map(|s| s.history_at(last) < MIN_HISTORY).unwrap_or(true))
        .map(str::to_owned)
        .collect();
    let mut out = String::new();
    out.push_str(&format!(
        "{} markets, {} sectors (l3)\n",
        markets.len(),
        taxonomy.codes(SectorLevel::L3).len()
    ));
    out.push_str(&format!("tickers: {}\n", dataset.tickers().count()));
    out.push_str(&format!("quotes: {}\n", dataset.quote_rows().count()));
    for m in &markets {
        let n = dataset.instruments().filter(|i| i.market == *m).count();
        out.push_str(&format!("  market {m}: {n} tickers\n"));
    }
    for level in [SectorLevel::L1, SectorLevel::L2, SectorLevel::L3] {
        out.push_str(&format!(
            "sectors {level}: {} in taxonomy, {} with tickers\n",
            taxonomy.codes(level).len(),
            sectors_in_use(level).len()
        ));
    }
    out.push_str(&format!(
        "calendar: {} trading days from {} to {}\n",
        calendar.len(),
        calendar[0],
        last
    ));
    out.push_str(&format!(
        "insufficient history (< {MIN_HISTORY} trading days at {last}): {}\n",
        if short.is_empty() { "none".to_owned() } else { short.join(", ") }
    ));
    out
}
