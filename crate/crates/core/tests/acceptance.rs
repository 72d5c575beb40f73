//! One PASS/FAIL line per acceptance criterion. Exits non-zero if any fail.

mod common;

use std::collections::BTreeSet;
use std::hint::black_box;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use assistkit::eval::{evaluate, host_params, parse_suite, EvalSetup, Label};
use assistkit::flowgraph::build_flow_graph;
use assistkit::minilang::parse_program;
use assistkit::par::Parallelism;
use assistkit::pipeline::{analyze, AnalysisOptions};
use assistkit::qfs::{abstract_queries_at, Mode};
use assistkit::runtime::{run_program, sanitize_numeric, sanitize_string, RunOptions};
use assistkit::sqlschema::{load_schema, Resolved};
use assistkit::SanitizerKind;
use common::*;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

type Check = Result<String, String>;
type Criterion = (&'static str, fn() -> Check);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn ac1_walkthrough() -> Check {
    let schema = load_schema(&corpus_file("books.schema")).map_err(|e| e.to_string())?;
    let source = corpus_file("bookstore_mini.qs");
    let start = Instant::now();
    let a = analyze(
        "bookstore_mini.qs",
        &source,
        &schema,
        &AnalysisOptions::default(),
    )
    .map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    let queries: Vec<_> = a.report.queries().collect();
    let rendered: Vec<String> = queries.iter().map(|q| q.query.render()).collect();
    ensure(
        rendered
            == [
                "SELECT * FROM BOOKS WHERE",
                "SELECT * FROM BOOKS WHERE author = '«r4»'",
                "SELECT * FROM BOOKS WHERE price < «r11»",
            ],
        || format!("queries {rendered:?}"),
    )?;
    let invalid: Vec<_> = queries
        .iter()
        .filter(|q| !q.is_valid())
        .map(|q| q.query.render())
        .collect();
    ensure(invalid == ["SELECT * FROM BOOKS WHERE"], || {
        format!("invalid {invalid:?}")
    })?;
    let res: Vec<(String, Resolved)> = a
        .report
        .resolutions
        .iter()
        .map(|r| (r.name.clone(), r.resolved.clone()))
        .collect();
    ensure(
        res == [
            ("r4".to_string(), Resolved::Kind(SanitizerKind::String)),
            ("r11".to_string(), Resolved::Kind(SanitizerKind::Numeric)),
        ],
        || format!("resolutions {res:?}"),
    )?;
    ensure(elapsed < Duration::from_secs(1), || {
        format!("took {elapsed:?}")
    })?;
    Ok(format!(
        "3 queries, 1 invalid, r4 string, r11 numeric in {elapsed:?}"
    ))
}

fn ac2_attacks() -> Check {
    let schema = apps_schema();
    let (mut attacks, mut legit, mut fneg, mut sfp, mut fp) = (0, 0, 0, 0, 0);
    for name in CORPUS {
        let a = analyze_corpus(name);
        let instrumented = a.instrumented().map_err(|e| e.to_string())?;
        let hosts = host_params(&a.graph);
        let suite =
            parse_suite(&corpus_file(&format!("{name}.suite"))).map_err(|e| e.to_string())?;
        let setup = EvalSetup {
            program_id: name,
            original: &a.program,
            instrumented: &instrumented,
            schema: &schema,
            host_params: &hosts,
            run: RunOptions::default(),
            parallelism: Parallelism::Parallel,
        };
        let r = evaluate(&setup, &suite);
        ensure(r.summary.run_errors == 0, || format!("{name}: run errors"))?;
        attacks += suite.iter().filter(|t| t.label == Label::Attack).count();
        legit += suite.iter().filter(|t| t.label == Label::Legit).count();
        fneg += r.summary.false_negatives;
        sfp += r.summary.structural_false_positives;
        fp += r.summary.false_positives;
    }
    let msg = format!(
        "{} programs, {attacks} attacks, {legit} legit: {fneg} successful attacks, {sfp} structural modifications ({fp} byte-level)",
        CORPUS.len()
    );
    ensure(
        CORPUS.len() >= 5 && attacks >= 50 && legit >= 50 && fneg == 0 && sfp == 0,
        || msg.clone(),
    )?;
    Ok(msg)
}

fn ac3_oracle() -> Check {
    let mut rng = StdRng::seed_from_u64(0xacce);
    let mut points = 0;
    for i in 0..150 {
        let src = ProgramGen::new(&mut rng).generate();
        let program = parse_program(&src).map_err(|e| e.to_string())?;
        let g = build_flow_graph(&program).map_err(|e| e.to_string())?;
        let facts = enumerate_paths(&program);
        ensure(facts.queries.len() == g.exec_points().len(), || {
            format!("program {i}: execution points differ")
        })?;
        for ep in g.exec_points() {
            let qs = abstract_queries_at(&g, ep.node, Mode::Exact, 1 << 16)
                .map_err(|e| e.to_string())?;
            let ours: BTreeSet<_> = qs.iter().map(|q| symbolic(&g, q)).collect();
            ensure(ours == facts.queries[&ep.loc], || {
                format!("program {i} at {}:\n{src}", ep.loc)
            })?;
            points += 1;
        }
    }
    Ok(format!("150 programs, {points} execution points agree"))
}

fn ac4_sanitizers() -> Check {
    let mut rng = StdRng::seed_from_u64(0x5a4e);
    let re = numeral_regex();
    let n = 20_000;
    for _ in 0..n {
        let s = random_string(&mut rng, 24);
        let once = sanitize_string(&s);
        ensure(sanitize_string(&once) == once, || {
            format!("not idempotent on {s:?}")
        })?;
        ensure(hazard_free(&once), || format!("hazard in {once:?}"))?;
        ensure(once == oracle_sanitize_string(&s), || {
            format!("differs from reference on {s:?}")
        })?;
        let num = sanitize_numeric(&s);
        let expected = if re.is_match(&s) { s.as_str() } else { "null" };
        ensure(num == expected, || format!("numeric {s:?} gave {num:?}"))?;
    }
    Ok(format!("{n} strings, 0 violations"))
}

/// Median over 10 runs of the time for `reps` calls on `input`.
fn median_time(input: &str, reps: usize) -> Duration {
    let mut runs: Vec<Duration> = (0..10)
        .map(|_| {
            let start = Instant::now();
            for _ in 0..reps {
                black_box(sanitize_string(black_box(input)));
            }
            start.elapsed()
        })
        .collect();
    runs.sort();
    runs[5]
}

fn ac5_linear() -> Check {
    let mut rng = StdRng::seed_from_u64(0x11);
    let make = |rng: &mut StdRng, len: usize| -> String {
        (0..len)
            .map(|_| ['a', 'b', '\'', '\\', '"', ' ', '1'][rng.random_range(0..7)])
            .collect()
    };
    let (s1k, s10k, s100k) = (
        make(&mut rng, 1_000),
        make(&mut rng, 10_000),
        make(&mut rng, 100_000),
    );
    // the same number of calls at each length, enough to dwarf timer noise
    let reps = 50;
    median_time(&s100k, reps); // warm-up
    let t1 = median_time(&s1k, reps);
    let t10 = median_time(&s10k, reps);
    let t100 = median_time(&s100k, reps);
    let ratio = t100.as_secs_f64() / t10.as_secs_f64();
    let msg = format!("1k {t1:?}, 10k {t10:?}, 100k {t100:?}; 100k/10k = {ratio:.2}");
    ensure((8.0..=13.0).contains(&ratio), || msg.clone())?;
    Ok(msg)
}

fn ac6_fixpoint_and_transparency() -> Check {
    let mut rng = StdRng::seed_from_u64(0x66);
    let schema = apps_schema();
    let mut runs = 0;
    for name in CORPUS {
        let a = analyze_corpus(name);
        let once = a.instrumented_source().map_err(|e| e.to_string())?;
        let twice = analyze("again.qs", &once, &schema, &AnalysisOptions::default())
            .and_then(|b| b.instrumented_source())
            .map_err(|e| e.to_string())?;
        ensure(once == twice, || {
            format!("{name}: instrumenting again changed the output")
        })?;

        let out = a.instrumented().map_err(|e| e.to_string())?;
        let kinds = param_kinds(&a);
        let suite =
            parse_suite(&corpus_file(&format!("{name}.suite"))).map_err(|e| e.to_string())?;
        for input in suite.iter().filter(|t| t.label == Label::Legit) {
            for _ in 0..10 {
                let mut params = input.params.clone();
                for (k, v) in params.iter_mut() {
                    match kinds.get(k) {
                        Some(SanitizerKind::Numeric) => {
                            *v = rng.random_range(-1000..1000).to_string()
                        }
                        Some(SanitizerKind::String) => {
                            let len = rng.random_range(0..10);
                            *v = (0..len)
                                .map(|_| rng.random_range(b'a'..=b'z') as char)
                                .collect();
                        }
                        None => {}
                    }
                }
                let (x, y) = (run_program(&a.program, &params), run_program(&out, &params));
                ensure(x == y, || format!("{name} {params:?}: {x:?} vs {y:?}"))?;
                runs += 1;
            }
        }
    }
    Ok(format!(
        "{} programs are fixpoints, {runs} clean runs with identical logs",
        CORPUS.len()
    ))
}

fn ac7_loop() -> Check {
    let g = build_flow_graph(
        &parse_program(&corpus_file("analysis/loop.qs")).map_err(|e| e.to_string())?,
    )
    .map_err(|e| e.to_string())?;
    let ep = g.exec_points().first().ok_or("no execution point")?.node;
    for mode in [Mode::Exact, Mode::Covering] {
        let qs = abstract_queries_at(&g, ep, mode, 1 << 16).map_err(|e| e.to_string())?;
        let rendered: Vec<String> = qs.iter().map(|q| q.render()).collect();
        ensure(rendered == ["S", "SX"], || {
            format!("{mode:?}: {rendered:?}")
        })?;
    }
    Ok("{\"S\", \"SX\"} in both modes".into())
}

fn main() -> ExitCode {
    let criteria: [Criterion; 7] = [
        ("AC1 walkthrough reproduction", ac1_walkthrough),
        ("AC2 attack neutralization", ac2_attacks),
        ("AC3 oracle equivalence", ac3_oracle),
        ("AC4 sanitizer properties", ac4_sanitizers),
        ("AC5 linear sanitizer time", ac5_linear),
        (
            "AC6 instrumentation fixpoint and transparency",
            ac6_fixpoint_and_transparency,
        ),
        ("AC7 loop underapproximation", ac7_loop),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        match check() {
            Ok(detail) => println!("[PASS] {name}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("[FAIL] {name}: {detail}");
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
