//! Deterministic synthetic inputs: a Paris-like market sample over five
//! months and an indicator matrix with planted groups.

use chrono::{Datelike, Duration, NaiveDate, Weekday};
use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::Result;
use crate::market_data::{Dataset, Instrument, Market, Portfolio, Position, QuoteRow, Taxonomy};

/// (l3, l2, l1) rows of the three-level sector tree: 22 leaves, 12 middle
/// sectors, 3 top sectors.
pub const REFERENCE_TAXONOMY: [(&str, &str, &str); 22] = [
    ("PETROLE", "ENERGIE", "INDUSTRIE"),
    ("ELECTRICITE", "ENERGIE", "INDUSTRIE"),
    ("CHIMIE", "PRODUITS_DE_BASE", "INDUSTRIE"),
    ("METALLURGIE", "PRODUITS_DE_BASE", "INDUSTRIE"),
    ("BTP", "CONSTRUCTION", "INDUSTRIE"),
    ("MATERIAUX", "CONSTRUCTION", "INDUSTRIE"),
    ("TELECOMMUNICATIONS", "BIENS_EQUIPEMENT", "INDUSTRIE"),
    ("ELECTRONIQUE", "BIENS_EQUIPEMENT", "INDUSTRIE"),
    ("AERONAUTIQUE", "BIENS_EQUIPEMENT", "INDUSTRIE"),
    ("CONSTRUCTEURS_AUTO", "AUTOMOBILE", "INDUSTRIE"),
    ("EQUIPEMENTIERS", "AUTOMOBILE", "INDUSTRIE"),
    ("EQUIPEMENTS_DOMESTIQUES", "BIENS_CONSOMMATION", "INDUSTRIE"),
    ("LUXE", "BIENS_CONSOMMATION", "INDUSTRIE"),
    ("PHARMACIE", "BIENS_CONSOMMATION", "INDUSTRIE"),
    ("AGRO", "AGRO_ALIMENTAIRE", "INDUSTRIE"),
    ("DISTRIBUTION", "DISTRIBUTION", "SERVICES"),
    ("INFORMATIQUE", "AUTRES_SERVICES", "SERVICES"),
    ("MEDIAS", "AUTRES_SERVICES", "SERVICES"),
    ("SERVICES_COLLECTIFS", "AUTRES_SERVICES", "SERVICES"),
    ("IMMOBILIER", "IMMOBILIER", "FINANCE"),
    ("BANQUES", "SERVICES_FINANCIERS", "FINANCE"),
    ("HOLDINGS", "SOCIETES_INVESTISSEMENT", "FINANCE"),
];

pub fn reference_taxonomy() -> Taxonomy {
    let mut taxonomy = Taxonomy::default();
    for (l3, l2, l1) in REFERENCE_TAXONOMY {
        taxonomy
            .insert(l3, l2, l1)
            .expect("reference taxonomy is a tree");
    }
    taxonomy
}

/// First `days` weekdays from `start` on.
pub fn weekday_calendar(start: NaiveDate, days: usize) -> Vec<NaiveDate> {
    let mut out = Vec::with_capacity(days);
    let mut d = start;
    while out.len() < days {
        if !matches!(d.weekday(), Weekday::Sat | Weekday::Sun) {
            out.push(d);
        }
        d += Duration::days(1);
    }
    out
}

#[derive(Debug, Clone)]
pub struct SampleConfig {
    pub seed: u64,
    pub tickers: usize,
    pub days: usize,
    pub start: NaiveDate,
    pub portfolio_size: usize,
}

impl Default for SampleConfig {
    fn default() -> Self {
        Self {
            seed: 1999,
            tickers: 250,
            days: 104,
            start: NaiveDate::from_ymd_opt(1999, 11, 1).expect("valid date"),
            portfolio_size: 15,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Sample {
    pub quotes: Vec<QuoteRow>,
    pub instruments: Vec<Instrument>,
    pub taxonomy: Taxonomy,
    pub portfolio: Portfolio,
}

impl Sample {
    pub fn dataset(&self) -> Result<Dataset> {
        Dataset::build(self.quotes.clone(), self.instruments.clone(), self.taxonomy.clone())
    }
}

fn cents(x: f64) -> f64 {
    ((x * 100.0).round() / 100.0).max(0.01)
}

/// Random walk quotes for `tickers` stocks spread over every leaf sector and
/// the four markets. Some stocks split two-for-one midway (with the
/// adjustment recorded), some trade only on part of the days and two are
/// listed too late to have a month of history.
pub fn market_sample(config: &SampleConfig) -> Sample {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let calendar = weekday_calendar(config.start, config.days);
    let taxonomy = reference_taxonomy();
    let market_cycle = [
        Market::Rm,
        Market::Sm,
        Market::Rm,
        Market::Nm,
        Market::Rme,
        Market::Sm,
        Market::Rm,
        Market::Nm,
        Market::Sm,
        Market::Rm,
    ];
    let market_sd = |m: Market| match m {
        Market::Rm => 0.015,
        Market::Rme => 0.018,
        Market::Sm => 0.022,
        Market::Nm => 0.04,
    };
    let sector_drift: Vec<f64> = (0..REFERENCE_TAXONOMY.len())
        .map(|_| rng.random_range(-0.003..0.004))
        .collect();

    let mut quotes = Vec::new();
    let mut instruments = Vec::new();
    for i in 0..config.tickers {
        let ticker = format!("S{:03}", i + 1);
        let sector = i % REFERENCE_TAXONOMY.len();
        let market = market_cycle[(i / REFERENCE_TAXONOMY.len() + i) % market_cycle.len()];
        let shares = (10f64.powf(rng.random_range(6.0..9.0))).round();
        instruments.push(Instrument {
            ticker: ticker.clone(),
            name: format!("Societe {}", i + 1),
            market,
            sector_l3: REFERENCE_TAXONOMY[sector].0.to_owned(),
            shares_outstanding: shares,
        });

        let returns = Normal::new(sector_drift[sector], market_sd(market)).expect("positive sd");
        let turnover = 10f64.powf(rng.random_range(-4.0..-2.0));
        let first_day = if i % 97 == 50 { config.days.saturating_sub(14) } else { 0 };
        let thin = i % 25 == 7;
        let split_day = (i % 40 == 13).then_some(config.days / 2);
        let mut close = rng.random_range(8.0..400.0);
        for (t, &date) in calendar.iter().enumerate().skip(first_day) {
            let open = close * (1.0 + 0.3 * returns.sample(&mut rng) - 0.3 * sector_drift[sector]);
            close *= (1.0 + returns.sample(&mut rng)).max(0.5);
            let mut adjustment = 1.0;
            let mut factor = 1.0;
            if let Some(s) = split_day {
                if t >= s {
                    factor = 0.5;
                }
                if t == s {
                    adjustment = 0.5;
                }
            }
            if thin && t != first_day && t + 1 != config.days && rng.random_bool(0.3) {
                continue;
            }
            let (o, c) = (cents(open * factor), cents(close * factor));
            let high = cents(o.max(c) * (1.0 + rng.random_range(0.0..0.015))).max(o.max(c));
            let low = cents(o.min(c) * (1.0 - rng.random_range(0.0..0.015))).min(o.min(c));
            let volume = (shares * turnover * rng.random_range(0.3..1.7) / factor).round() as u64;
            quotes.push(QuoteRow {
                date,
                ticker: ticker.clone(),
                open: o,
                high,
                low,
                close: c,
                volume,
                adjustment,
            });
        }
    }

    // one holding per market first, then fill with well-traded stocks
    let mut chosen: Vec<usize> = Vec::new();
    for m in Market::ALL {
        if let Some(pos) = instruments.iter().position(|inst| inst.market == m) {
            chosen.push(pos);
        }
    }
    let mut pool: Vec<usize> = (0..instruments.len())
        .filter(|&i| i % 97 != 50 && !chosen.contains(&i))
        .collect();
    pool.shuffle(&mut rng);
    chosen.extend(pool.into_iter().take(config.portfolio_size.saturating_sub(chosen.len())));
    chosen.sort_unstable();
    let portfolio = Portfolio {
        positions: chosen
            .into_iter()
            .map(|i| Position {
                ticker: instruments[i].ticker.clone(),
                quantity: (rng.random_range(1..=20) * 50) as f64,
            })
            .collect(),
    };

    Sample {
        quotes,
        instruments,
        taxonomy,
        portfolio,
    }
}

/// Six-column indicator matrix (perfmois, perf2sem, volat20, volat10,
/// capim10, capitmds) with `groups` planted groups.
///
/// On every column each group gets its own center, the centers being a
/// random permutation of an evenly spaced ladder with step `separation`
/// within-group standard deviations. Noise is uniform, so groups never
/// overlap on any column. Returns the matrix and each row's group.
pub fn planted_groups(n: usize, groups: usize, separation: f64, seed: u64) -> (Array2<f64>, Vec<usize>) {
    const SCALE: [(f64, f64); 6] = [
        (0.0, 2.0),
        (1.0, 1.5),
        (3.0, 0.4),
        (3.0, 0.6),
        (5.0e7, 4.0e6),
        (2.0e3, 1.5e2),
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let truth: Vec<usize> = (0..n).map(|i| i * groups / n.max(1)).collect();
    let half_width = 3f64.sqrt();
    let mut matrix = Array2::zeros((n, SCALE.len()));
    for (j, &(base, sd)) in SCALE.iter().enumerate() {
        let mut ladder: Vec<usize> = (0..groups).collect();
        ladder.shuffle(&mut rng);
        for (i, &g) in truth.iter().enumerate() {
            let center = base + ladder[g] as f64 * separation * sd;
            matrix[[i, j]] = center + sd * rng.random_range(-half_width..half_width);
        }
    }
    (matrix, truth)
}
