use std::ops::Range;
use std::panic::{self, AssertUnwindSafe};
use std::path::Path;

use concord_cli::gen::{random_schema, QueryGen};
use concord_core::specdsl::{parse, print_document, print_query, token_spans, SpecDocument};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn corpus() -> Vec<(&'static str, String)> {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures");
    ["panem/panem.spec", "casestudy/casestudy.spec"]
        .into_iter()
        .map(|f| (f, std::fs::read_to_string(dir.join(f)).unwrap()))
        .collect()
}

fn reparse(doc: &SpecDocument) -> SpecDocument {
    let printed = print_document(doc);
    parse(&printed).unwrap_or_else(|e| panic!("printed document does not parse: {e}\n{printed}"))
}

#[test]
fn corpus_round_trips() {
    for (name, text) in corpus() {
        let doc = parse(&text).unwrap_or_else(|e| panic!("{name}: {e}"));
        doc.validate().unwrap_or_else(|e| panic!("{name}: {e}"));
        assert_eq!(reparse(&doc), doc, "{name}");
    }
}

fn delete(text: &str, spans: &[Range<usize>]) -> String {
    let mut out = String::with_capacity(text.len());
    let mut at = 0;
    for s in spans {
        out.push_str(&text[at..s.start]);
        out.push(' ');
        at = s.end;
    }
    out.push_str(&text[at..]);
    out
}

#[test]
fn token_deletions_never_crash_or_corrupt() {
    let mut mutants = 0;
    let mut rejected = 0;
    for (name, text) in corpus() {
        let spans = token_spans(&text).unwrap();
        let singles = spans.iter().map(|s| vec![s.clone()]);
        let pairs = spans.windows(2).map(|w| w.to_vec());
        for cut in singles.chain(pairs) {
            let mutant = delete(&text, &cut);
            let outcome = panic::catch_unwind(AssertUnwindSafe(|| match parse(&mutant) {
                Err(e) => {
                    assert!(e.line >= 1 && e.col >= 1, "{e}");
                    true
                }
                Ok(doc) => {
                    assert_eq!(reparse(&doc), doc, "accepted mutant must round-trip");
                    false
                }
            }));
            match outcome {
                Ok(was_rejected) => rejected += usize::from(was_rejected),
                Err(_) => panic!("{name}: parser panicked on mutant deleting {cut:?}"),
            }
            mutants += 1;
        }
    }
    assert!(mutants >= 500, "only {mutants} mutants");
    assert!(rejected * 2 > mutants, "{rejected} of {mutants} rejected");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn generated_queries_print_and_reparse(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let schema = random_schema(&mut rng);
        let q = QueryGen::new(&schema).query(&mut rng, 4);
        let text = format!("view V := {};", print_query(&q));
        let doc = parse(&text).map_err(|e| TestCaseError::fail(format!("{e}\n{text}")))?;
        prop_assert_eq!(&doc.views[0].queries[0], &q, "{}", text);
    }
}
