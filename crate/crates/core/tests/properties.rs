//! Seeded corpus runs of every checked property, plus determinism and
//! printing round trips over generated inputs.

use nrc_core::corpus::{check_round_trip, db_text, fuzz, run_case, GenConfig, GenMode, Property};
use nrc_core::expr::alpha_normalize;
use nrc_core::syntax::{parse_query, parse_value};
use nrc_core::{typecheck, Mode};

fn assert_clean(p: Property, cases: u64) {
    let report = fuzz(&GenConfig::with_seed(42), &[p], cases);
    assert_eq!(report.cases, cases);
    if let Some(cx) = report.failures.first() {
        panic!("{} failures for {p}; first:\n{cx}", report.failures.len());
    }
}

#[test]
fn delta_corpus() {
    assert_clean(Property::Delta, 300);
}

#[test]
fn shredded_delta_corpus() {
    assert_clean(Property::ShreddedDelta, 300);
}

#[test]
fn shred_corpus() {
    assert_clean(Property::Shred, 300);
}

#[test]
fn degree_corpus() {
    assert_clean(Property::Degree, 150);
}

#[test]
fn cost_corpus() {
    assert_clean(Property::Cost, 300);
}

#[test]
fn ivm_corpus() {
    assert_clean(Property::Ivm, 100);
}

#[test]
fn a_different_seed_is_also_clean() {
    let cfg = GenConfig::with_seed(7);
    for p in [Property::Delta, Property::Shred, Property::Cost] {
        for i in 0..100 {
            run_case(&cfg, p, i).unwrap_or_else(|cx| panic!("{cx}"));
        }
    }
}

fn corpus_text(seed: u64) -> String {
    let cfg = GenConfig::with_seed(seed);
    let mut out = String::new();
    for p in Property::ALL {
        for i in 0..50 {
            let case = cfg.case(i).gen_case(p, 3);
            out.push_str(&format!("{p} {i}\n{}\n{}", case.query, db_text(&case.schema, &case.db)));
            for (r, u) in &case.updates {
                out.push_str(&format!("update {r} {u}\n"));
            }
        }
    }
    out
}

#[test]
fn fixed_seed_reproduces_the_corpus() {
    let a = corpus_text(42);
    assert_eq!(a, corpus_text(42));
    assert_ne!(a, corpus_text(43));
}

#[test]
fn printed_queries_parse_back() {
    for mode in [GenMode::Inc, GenMode::Nrc] {
        let cfg = GenConfig { mode, ..GenConfig::with_seed(42) };
        for i in 0..300 {
            let mut g = cfg.case(i);
            let schema = g.gen_schema();
            let q = g.gen_query(&schema);
            let text = q.to_string();
            let back = parse_query(&text).unwrap_or_else(|e| panic!("{text}: {e}"));
            assert_eq!(alpha_normalize(&back), alpha_normalize(&q), "{text}");
            assert_eq!(back.to_string(), text);
            let tm = if mode == GenMode::Inc { Mode::Inc } else { Mode::Nrc };
            typecheck(&back, &schema, tm).unwrap();
        }
    }
}

#[test]
fn printed_values_parse_back() {
    let cfg = GenConfig::with_seed(42);
    for i in 0..300 {
        let mut g = cfg.case(i);
        let ty = g.gen_type();
        let v = g.gen_value(&ty);
        let text = v.to_string();
        let back = parse_value(&text).unwrap_or_else(|e| panic!("{text}: {e}"));
        assert_eq!(back, v);
        assert_eq!(back.to_string(), text);
    }
}

#[test]
fn deep_values_round_trip_through_shredding() {
    let cfg = GenConfig { max_type_depth: 4, ..GenConfig::with_seed(42) };
    for i in 0..300 {
        let mut g = cfg.case(i);
        let ty = g.gen_type();
        let v = g.gen_relation(&ty);
        check_round_trip(&v, ty.bag_elem().unwrap()).unwrap_or_else(|e| panic!("{v}: {e}"));
    }
}
