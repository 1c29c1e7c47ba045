//! Bundled scenarios against recorded traces. Set `BLESS=1` to rewrite them.

use std::path::Path;

use berrygrip::harness::scenario::load_scenario;
use berrygrip::sim::{run_pick_cycle, SimConfig};

#[test]
fn bundled_scenarios_match_recorded_traces() {
    let root = Path::new(env!("CARGO_MANIFEST_DIR"));
    let golden = root.join("tests/golden");
    let bless = std::env::var_os("BLESS").is_some();
    let mut seen = 0;
    let mut entries: Vec<_> =
        std::fs::read_dir(root.join("../../scenarios")).unwrap().map(|e| e.unwrap().path()).collect();
    entries.sort();
    for path in entries.into_iter().filter(|p| p.extension().is_some_and(|e| e == "json")) {
        let sc = load_scenario(&path).unwrap();
        let cfg = sc.config(&SimConfig::default(), &path).unwrap();
        let trace = run_pick_cycle(&sc.scene(sc.seed).unwrap(), &cfg).unwrap();
        let mut got = Vec::new();
        trace.write_jsonl(&mut got).unwrap();
        let name = path.file_stem().unwrap().to_string_lossy();
        let file = golden.join(format!("{name}.trace.jsonl"));
        if bless {
            std::fs::create_dir_all(&golden).unwrap();
            std::fs::write(&file, &got).unwrap();
        } else {
            let want = std::fs::read(&file).unwrap_or_else(|_| panic!("{} missing; run with BLESS=1", file.display()));
            assert!(got == want, "{name}: trace differs from {}", file.display());
        }
        seen += 1;
    }
    assert!(seen >= 2);
}
