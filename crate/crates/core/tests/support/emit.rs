use coda::emit::emit;

pub fn section<'a>(text: &'a str, start: &str, end: &str) -> Vec<&'a str> {
    text.lines()
        .skip_while(|l| l.trim() != start)
        .skip(1)
        .take_while(|l| l.trim() != end)
        .collect()
}

pub fn tick_guards(machine: &str) -> Vec<String> {
    machine
        .lines()
        .skip_while(|l| l.trim() != "event tick")
        .take_while(|l| l.trim() != "then")
        .filter(|l| l.contains("@grd"))
        .map(|l| l.trim().split_once(' ').unwrap().1.to_string())
        .collect()
}

/// Names are read back from the model source text, not the compiled program.
pub fn declared(src: &str, keyword: &str) -> Vec<String> {
    src.lines()
        .map(str::trim)
        .filter_map(|l| l.strip_prefix(keyword))
        .map(|rest| rest.split([':', ' ', '{']).find(|s| !s.is_empty()).unwrap().to_string())
        .collect()
}

/// Exactly one typing line per connector and per component wake queue, a
/// single clock, and tick guards that exclude exactly those maps.
pub fn structural(name: &str) {
    let src = super::read(name);
    let out = emit(&super::load(name));
    let connectors = declared(&src, "connector ");
    let components = declared(&src, "component ");

    let invariants = section(&out.machine, "invariants", "events");
    let maps: Vec<&str> = invariants.iter().copied().filter(|l| l.contains("∈ ℕ ⇸")).collect();
    assert_eq!(maps.len(), connectors.len() + components.len(), "{name}");
    for c in &connectors {
        assert_eq!(maps.iter().filter(|l| l.contains(&format!(" {c} ∈ ℕ ⇸"))).count(), 1, "{name}: {c}");
    }
    for c in &components {
        let w = format!(" {c}_wakeup ∈ ℕ ⇸ WakeKind");
        assert_eq!(maps.iter().filter(|l| l.ends_with(&w)).count(), 1, "{name}: {c}");
    }
    assert_eq!(invariants.iter().filter(|l| l.ends_with("current_time ∈ ℕ")).count(), 1, "{name}");

    let mut expected: Vec<String> = connectors;
    expected.extend(components.into_iter().map(|c| format!("{c}_wakeup")));
    let mut found: Vec<String> = tick_guards(&out.machine)
        .iter()
        .filter_map(|g| g.strip_prefix("current_time ∉ dom("))
        .map(|g| g.split(')').next().unwrap().to_string())
        .collect();
    expected.sort();
    found.sort();
    assert_eq!(found, expected, "{name}");

    let again = emit(&super::load(name));
    assert_eq!(out.context.as_bytes(), again.context.as_bytes(), "{name}");
    assert_eq!(out.machine.as_bytes(), again.machine.as_bytes(), "{name}");
}
