use std::path::PathBuf;

fn models_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../models")
}

#[test]
fn every_shipped_model_validates() {
    let mut failures = Vec::new();
    for entry in std::fs::read_dir(models_dir()).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().and_then(|e| e.to_str()) != Some("coda") {
            continue;
        }
        match coda::load_file(&path) {
            Ok(vm) => {
                for w in &vm.warnings {
                    eprintln!("{}: {}", path.display(), w);
                }
            }
            Err(diags) => {
                for d in diags {
                    failures.push(format!("{}: {}", path.display(), d));
                }
            }
        }
    }
    assert!(failures.is_empty(), "{}", failures.join("\n"));
}
