use coda::oracle::{compare, record, CompareOptions, Comparison, GoldenFile};
use coda::run::{RunOptions, Scenario};

#[derive(Clone, Copy, Debug)]
pub enum Mutation {
    Time,
    Event,
    Obs,
    Drop,
}

pub const MUTATIONS: [Mutation; 4] = [Mutation::Time, Mutation::Event, Mutation::Obs, Mutation::Drop];

fn mutate(g: &GoldenFile, i: usize, m: Mutation) -> GoldenFile {
    let mut bad = g.clone();
    match m {
        Mutation::Time => bad.records[i].time += 1,
        Mutation::Event => bad.records[i].event.push('X'),
        Mutation::Obs => match bad.records[i].obs.values_mut().next() {
            Some(v) => v.push('X'),
            None => bad.records[i].event.push('X'),
        },
        Mutation::Drop => {
            bad.records.remove(i);
            for (j, r) in bad.records.iter_mut().enumerate() {
                r.i = j;
            }
        }
    }
    bad
}

/// Where a comparison must first report the mutated golden as divergent.
/// Dropping a record shifts the rest, so the first difference is the
/// first position where the shifted record differs from the original.
fn expected_index(g: &GoldenFile, bad: &GoldenFile, i: usize, m: Mutation) -> usize {
    match m {
        Mutation::Drop => (i..g.records.len())
            .find(|&j| {
                bad.records.get(j).map(|r| (r.time, &r.event, &r.params, &r.obs))
                    != Some((g.records[j].time, &g.records[j].event, &g.records[j].params, &g.records[j].obs))
            })
            .unwrap(),
        _ => i,
    }
}

/// Records the scenario's golden, checks it passes unchanged, then applies
/// every mutation at every index and checks each is caught where it was
/// made. Returns the number of mutants checked.
pub fn every_mutation_is_found(model: &str, scn: &str) -> usize {
    let vm = super::load(model);
    let sc = Scenario::parse(&super::read(scn)).unwrap();
    let g = record(&vm, &sc, &RunOptions::default()).unwrap();
    let text = g.to_text();
    assert_eq!(GoldenFile::parse(&text).unwrap(), g, "{scn}");
    let opts = CompareOptions::default();
    assert!(compare(&vm, &sc, &g, &opts).unwrap().passed(), "{scn}");
    let mut n = 0;
    for i in 0..g.records.len() {
        for m in MUTATIONS {
            let bad = mutate(&g, i, m);
            let want = expected_index(&g, &bad, i, m);
            match compare(&vm, &sc, &bad, &opts).unwrap() {
                Comparison::Diverged(d) => assert_eq!(d.index, want, "{scn}: {m:?} at {i}"),
                other => panic!("{scn}: {m:?} at {i} not detected: {other:?}"),
            }
            n += 1;
        }
    }
    n
}
