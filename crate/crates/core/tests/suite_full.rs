use localinv_core::suite::{register_builtin, run_problem, RunOptions, Task};

#[test]
fn every_builtin_problem_passes_its_full_suite() {
    let opts = RunOptions {
        seed: 7,
        ..RunOptions::default()
    };
    let mut failed = Vec::new();
    for record in register_builtin() {
        let start = std::time::Instant::now();
        let frag = run_problem(&record, Task::FullSuite, &opts);
        eprintln!(
            "{:<16} {:>4} checks {:>8.2?}",
            record.name,
            frag.checks.len(),
            start.elapsed()
        );
        failed.extend(frag.checks.into_iter().filter(|c| !c.passed));
    }
    for c in &failed {
        eprintln!("FAILED {} {:?} {:?} {}", c.name, c.measured, c.oracle, c.note);
    }
    assert!(failed.is_empty());
}
