mod common;

use std::collections::{BTreeMap, BTreeSet};

use ndarray::Array2;
use proptest::prelude::*;
use symbourse::market_data::{Market, SectorLevel};
use symbourse::symbolic::{
    aggregate, dissimilarity, dissimilarity_matrix, normalize, parse_dissimilarity, taxonomy_rollup,
    write_dissimilarity, DissimilaritySpec, GroupKey, IndividualRow, Interval, Modal, Observation, SymbolicTable,
    SymbolicValue, VariableDescriptor, VariableKind,
};
use symbourse::synth::{reference_taxonomy, REFERENCE_TAXONOMY};
use symbourse::Error;

const WEEKS: [&str; 3] = ["2000-W01", "2000-W02", "2000-W03"];

prop_compose! {
    fn arb_row(i: usize)(
        market in 0usize..4,
        sector in 0usize..22,
        week in 0usize..3,
        in_portfolio in any::<bool>(),
        x in -1e6f64..1e6,
        y in 0.0f64..10.0,
    ) -> IndividualRow {
        let (l3, l2, l1) = REFERENCE_TAXONOMY[sector];
        let m = Market::ALL[market];
        IndividualRow {
            ticker: format!("R{i:03}"),
            market: m,
            sectors: [l1.to_owned(), l2.to_owned(), l3.to_owned()],
            week: Some(WEEKS[week].to_owned()),
            in_portfolio,
            values: BTreeMap::from([
                ("x".to_owned(), Observation::Number(x)),
                ("y".to_owned(), Observation::Number(y)),
                ("market".to_owned(), Observation::Category(m.code().to_owned())),
            ]),
        }
    }
}

fn arb_rows() -> impl Strategy<Value = Vec<IndividualRow>> {
    (1usize..40).prop_flat_map(|n| (0..n).map(arb_row).collect::<Vec<_>>())
}

fn arb_key() -> impl Strategy<Value = GroupKey> {
    prop::sample::select(vec![
        GroupKey::All,
        GroupKey::Market,
        GroupKey::Sector(SectorLevel::L1),
        GroupKey::Sector(SectorLevel::L2),
        GroupKey::Sector(SectorLevel::L3),
        GroupKey::Portfolio,
        GroupKey::Week,
        GroupKey::Ticker,
    ])
}

fn descriptors() -> Vec<VariableDescriptor> {
    vec![
        VariableDescriptor::new("x", VariableKind::Interval, Some("EUR")),
        VariableDescriptor::new("y", VariableKind::Interval, None),
        VariableDescriptor::new("market", VariableKind::Modal, None),
    ]
}

fn modal_close(p: &Modal, q: &Modal, tol: f64) -> bool {
    let cats: BTreeSet<&str> = p.iter().chain(q.iter()).map(|(c, _)| c).collect();
    cats.into_iter().all(|c| (p.frequency(c) - q.frequency(c)).abs() <= tol)
}

fn tables_match(a: &SymbolicTable, b: &SymbolicTable) -> Result<(), String> {
    if a.labels() != b.labels() || a.members() != b.members() || a.group_key() != b.group_key() {
        return Err(format!("{:?} vs {:?}", a.labels(), b.labels()));
    }
    for (i, (r, s)) in a.rows().zip(b.rows()).enumerate() {
        for (x, y) in r.iter().zip(s) {
            let same = match (x, y) {
                (SymbolicValue::Modal(p), SymbolicValue::Modal(q)) => modal_close(p, q, 1e-12),
                _ => x == y,
            };
            if !same {
                return Err(format!("{}: {x} vs {y}", a.labels()[i]));
            }
        }
    }
    Ok(())
}

fn arb_value(kind: VariableKind) -> BoxedStrategy<SymbolicValue> {
    match kind {
        VariableKind::Single => (-1e3f64..1e3).prop_map(SymbolicValue::Single).boxed(),
        VariableKind::Interval => (-1e3f64..1e3, 0.0f64..50.0)
            .prop_map(|(lo, w)| SymbolicValue::Interval(Interval::new(lo, lo + w).unwrap()))
            .boxed(),
        VariableKind::Modal => prop::collection::vec(0u32..5, 3)
            .prop_filter("some mass", |w| w.iter().any(|&x| x > 0))
            .prop_map(|w| {
                let counts = ["A", "B", "C"].into_iter().zip(w.into_iter().map(f64::from));
                SymbolicValue::Modal(Modal::from_counts(counts).unwrap())
            })
            .boxed(),
    }
}

fn arb_table() -> impl Strategy<Value = SymbolicTable> {
    let kinds = prop::collection::vec(
        prop::sample::select(vec![VariableKind::Single, VariableKind::Interval, VariableKind::Modal]),
        1..5,
    );
    (kinds, 1usize..8).prop_flat_map(|(kinds, n)| {
        let row: Vec<BoxedStrategy<SymbolicValue>> = kinds.iter().map(|&k| arb_value(k)).collect();
        (
            Just(kinds),
            prop::collection::vec(row, n),
            prop::collection::vec(1usize..50, n),
        )
            .prop_map(|(kinds, cells, members)| {
                let vars = kinds
                    .iter()
                    .enumerate()
                    .map(|(j, &k)| VariableDescriptor::new(&format!("v{j}"), k, (j % 2 == 0).then_some("u")))
                    .collect();
                SymbolicTable::new("sector_l3", common::labels(cells.len()), members, vars, cells).unwrap()
            })
    })
}

proptest! {
    #[test]
    fn members_lie_in_their_group_interval(rows in arb_rows(), key in arb_key()) {
        let table = aggregate(&rows, key, &descriptors()).unwrap();
        prop_assert_eq!(table.members().iter().sum::<usize>(), rows.len());
        for row in &rows {
            let object = table.labels().iter().position(|l| *l == key.label_of(row).unwrap()).unwrap();
            for name in ["x", "y"] {
                let Observation::Number(v) = row.values[name] else { unreachable!() };
                let span = table.cell(object, name).unwrap().as_interval().unwrap();
                prop_assert!(span.contains(v), "{} = {} outside [{}, {}]", name, v, span.lo(), span.hi());
            }
            let modal = table.cell(object, "market").unwrap().as_modal().unwrap();
            prop_assert!(modal.frequency(row.market.code()) > 0.0);
        }
        for i in 0..table.len() {
            let modal = table.cell(i, "market").unwrap().as_modal().unwrap();
            let total: f64 = modal.iter().map(|(_, p)| p).sum();
            prop_assert!((total - 1.0).abs() <= 1e-9);
        }
    }

    #[test]
    fn rollup_paths_agree(rows in arb_rows()) {
        let taxonomy = reference_taxonomy();
        let l3 = aggregate(&rows, GroupKey::Sector(SectorLevel::L3), &descriptors()).unwrap();
        let l2 = taxonomy_rollup(&l3, &taxonomy, SectorLevel::L2).unwrap();
        let via = taxonomy_rollup(&l2, &taxonomy, SectorLevel::L1).unwrap();
        let direct = taxonomy_rollup(&l3, &taxonomy, SectorLevel::L1).unwrap();
        prop_assert_eq!(tables_match(&via, &direct), Ok(()));
        for level in [SectorLevel::L2, SectorLevel::L1] {
            let rolled = taxonomy_rollup(&l3, &taxonomy, level).unwrap();
            let fresh = aggregate(&rows, GroupKey::Sector(level), &descriptors()).unwrap();
            prop_assert_eq!(tables_match(&rolled, &fresh), Ok(()));
        }
    }

    #[test]
    fn dissimilarity_is_a_bounded_semimetric(table in arb_table()) {
        let spec = DissimilaritySpec::from_table(&table);
        let d = dissimilarity_matrix(&table, &spec).unwrap();
        let p = table.variables().len() as f64;
        for i in 0..table.len() {
            prop_assert_eq!(d[[i, i]], 0.0);
            prop_assert_eq!(dissimilarity(table.row(i), table.row(i), &spec).unwrap(), 0.0);
            for j in 0..table.len() {
                prop_assert_eq!(d[[i, j]], d[[j, i]]);
                prop_assert!(d[[i, j]] >= 0.0 && d[[i, j]] <= p + 1e-12);
                // Each variable alone stays within [0, 1].
                for v in 0..table.variables().len() {
                    let one = DissimilaritySpec { ranges: spec.ranges[v..=v].to_vec() };
                    let term = dissimilarity(&table.row(i)[v..=v], &table.row(j)[v..=v], &one).unwrap();
                    prop_assert!((0.0..=1.0 + 1e-12).contains(&term), "term {}", term);
                }
            }
        }
    }

    #[test]
    fn table_csv_round_trip(table in arb_table()) {
        let mut out = Vec::new();
        table.write_csv(&mut out).unwrap();
        let again = SymbolicTable::parse_csv(out.as_slice()).unwrap();
        prop_assert_eq!(tables_match(&again, &table), Ok(()));
        prop_assert_eq!(again.variables(), table.variables());
    }

    #[test]
    fn dissimilarity_csv_round_trip(table in arb_table()) {
        let d = dissimilarity_matrix(&table, &DissimilaritySpec::from_table(&table)).unwrap();
        let mut out = Vec::new();
        write_dissimilarity(&mut out, table.labels(), &d).unwrap();
        let (labels, again) = parse_dissimilarity(out.as_slice()).unwrap();
        prop_assert_eq!(labels, table.labels().to_vec());
        prop_assert_eq!(again, d);
    }

    #[test]
    fn normalization_is_idempotent(
        cells in prop::collection::vec(prop::collection::vec(-1e4f64..1e4, 3), 2..20),
    ) {
        let n = cells.len();
        let m = Array2::from_shape_fn((n, 3), |(i, j)| cells[i][j]);
        let names: Vec<String> = ["a", "b", "c"].map(String::from).to_vec();
        prop_assume!(m.columns().into_iter().all(|c| c.iter().any(|&v| v != c[0])));
        let (once, _) = normalize(&m, &names).unwrap();
        let (twice, scales) = normalize(&once, &names).unwrap();
        for s in scales {
            prop_assert!((s - 1.0).abs() <= 1e-9);
        }
        for (a, b) in once.iter().zip(twice.iter()) {
            prop_assert!((a - b).abs() <= 1e-9 * a.abs().max(1.0));
        }
    }
}

fn interval_table(spans: &[(f64, f64)]) -> SymbolicTable {
    let cells = spans
        .iter()
        .map(|&(lo, hi)| vec![SymbolicValue::Interval(Interval::new(lo, hi).unwrap())])
        .collect();
    SymbolicTable::new(
        "all",
        common::labels(spans.len()),
        vec![1; spans.len()],
        vec![VariableDescriptor::new("x", VariableKind::Interval, None)],
        cells,
    )
    .unwrap()
}

#[test]
fn dissimilarity_examples() {
    let t = interval_table(&[(0.0, 2.0), (1.0, 3.0)]);
    let d = dissimilarity_matrix(&t, &DissimilaritySpec::from_table(&t)).unwrap();
    assert!((d[[0, 1]] - 1.0 / 3.0).abs() < 1e-15);

    let a = [SymbolicValue::Modal(Modal::from_counts([("A", 1.0)]).unwrap())];
    let b = [SymbolicValue::Modal(Modal::from_counts([("B", 1.0)]).unwrap())];
    let spec = DissimilaritySpec { ranges: vec![None] };
    assert_eq!(dissimilarity(&a, &b, &spec).unwrap(), 1.0);

    // Three objects on one variable, range 10, computed by hand.
    let t = interval_table(&[(0.0, 4.0), (2.0, 10.0), (1.0, 1.0)]);
    let d = dissimilarity_matrix(&t, &DissimilaritySpec::from_table(&t)).unwrap();
    let expected = [[0.0, 0.6, 0.3], [0.6, 0.0, 0.9], [0.3, 0.9, 0.0]];
    for i in 0..3 {
        for j in 0..3 {
            assert!((d[[i, j]] - expected[i][j]).abs() < 1e-15, "d[{i}][{j}] = {}", d[[i, j]]);
        }
    }

    let single = interval_table(&[(1.0, 2.0)]);
    let d = dissimilarity_matrix(&single, &DissimilaritySpec::from_table(&single)).unwrap();
    assert_eq!(d, Array2::<f64>::zeros((1, 1)));

    let dup = interval_table(&[(1.0, 2.0), (1.0, 2.0), (0.0, 5.0)]);
    let d = dissimilarity_matrix(&dup, &DissimilaritySpec::from_table(&dup)).unwrap();
    assert_eq!(d[[0, 1]], 0.0);
}

#[test]
fn aggregation_examples() {
    let rows: Vec<IndividualRow> = ["RM", "RM", "NM"]
        .iter()
        .enumerate()
        .map(|(i, m)| IndividualRow {
            ticker: format!("T{i}"),
            market: m.parse().unwrap(),
            sectors: ["INDUSTRIE".into(), "ENERGIE".into(), "PETROLE".into()],
            week: None,
            in_portfolio: false,
            values: BTreeMap::from([
                ("market".to_owned(), Observation::Category((*m).to_owned())),
                ("perfmois".to_owned(), Observation::Number(3.2 + i as f64)),
            ]),
        })
        .collect();
    let vars = [
        VariableDescriptor::new("market", VariableKind::Modal, None),
        VariableDescriptor::new("perfmois", VariableKind::Interval, Some("%")),
    ];
    let t = aggregate(&rows, GroupKey::All, &vars).unwrap();
    let m = t.cell(0, "market").unwrap().as_modal().unwrap();
    assert!((m.frequency("RM") - 2.0 / 3.0).abs() < 1e-15);
    assert!((m.frequency("NM") - 1.0 / 3.0).abs() < 1e-15);
    assert_eq!(
        t.cell(0, "perfmois").unwrap().as_interval().unwrap(),
        Interval::new(3.2, 5.2).unwrap()
    );

    let one = aggregate(&rows[..1], GroupKey::Ticker, &vars).unwrap();
    assert_eq!(one.cell(0, "perfmois").unwrap().as_interval().unwrap(), Interval::point(3.2));

    assert!(matches!(aggregate(&[], GroupKey::All, &vars), Err(Error::EmptyGroups)));
    let missing = [VariableDescriptor::new("capim10", VariableKind::Interval, None)];
    assert!(matches!(
        aggregate(&rows, GroupKey::All, &missing),
        Err(Error::MissingVariable { .. })
    ));
}

#[test]
fn rollup_examples() {
    let taxonomy = reference_taxonomy();
    let cells = vec![
        vec![SymbolicValue::Interval(Interval::new(0.0, 1.0).unwrap())],
        vec![SymbolicValue::Interval(Interval::new(5.0, 9.0).unwrap())],
        vec![SymbolicValue::Interval(Interval::new(2.0, 3.0).unwrap())],
    ];
    let t = SymbolicTable::new(
        "sector_l3",
        vec!["PETROLE".into(), "ELECTRICITE".into(), "DISTRIBUTION".into()],
        vec![2, 3, 1],
        vec![VariableDescriptor::new("x", VariableKind::Interval, None)],
        cells,
    )
    .unwrap();
    let l2 = taxonomy_rollup(&t, &taxonomy, SectorLevel::L2).unwrap();
    assert_eq!(l2.labels(), ["DISTRIBUTION", "ENERGIE"]);
    assert_eq!(l2.members(), [1, 5]);
    assert_eq!(l2.cell(1, "x").unwrap().as_interval().unwrap(), Interval::new(0.0, 9.0).unwrap());
    assert_eq!(l2.cell(0, "x").unwrap(), t.cell(2, "x").unwrap());

    let unknown = SymbolicTable::new(
        "sector_l3",
        vec!["NOWHERE".into()],
        vec![1],
        vec![VariableDescriptor::new("x", VariableKind::Interval, None)],
        vec![vec![SymbolicValue::Interval(Interval::point(1.0))]],
    )
    .unwrap();
    assert!(matches!(
        taxonomy_rollup(&unknown, &taxonomy, SectorLevel::L1),
        Err(Error::UnknownSector(_))
    ));
}

#[test]
fn sample_groups_by_sector() {
    let fx = common::sample();
    let sectors: BTreeSet<&str> = fx.dataset.instruments().map(|i| i.sector_l3.as_str()).collect();
    assert_eq!(sectors.len(), 22);
}

#[test]
fn normalization_examples() {
    let names = vec!["a".to_string()];
    let m = Array2::from_shape_vec((2, 1), vec![0.0, 20.0]).unwrap();
    let (n, s) = normalize(&m, &names).unwrap();
    assert_eq!(s, [10.0]);
    assert_eq!(n.column(0).to_vec(), [0.0, 2.0]);
    let constant = Array2::from_elem((3, 1), 4.0);
    assert!(matches!(normalize(&constant, &names), Err(Error::ZeroVariance(v)) if v == "a"));
}
