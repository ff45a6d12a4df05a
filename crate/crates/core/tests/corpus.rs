use mathsearch::corpus::{write_corpus, DiagnosticKind};
use mathsearch::informalize::split_corpus_entry;
use mathsearch::{extract_links, format_corpus_entry, parse_corpus, Corpus, InformalPair};
use proptest::prelude::*;

const CHOOSE: &str = r#"{"id":"Exists.choose","name":"Exists.choose","kind":"definition","statement":"def Exists.choose {p : α → Prop} (P : ∃ a, p a) : α","docstring":"Extract an element from an existential statement, using Classical.choose.","source_path":"Mathlib/Logic/Basic.lean"}"#;
const CHOOSE_SPEC: &str = r#"{"id":"Exists.choose_spec","name":"Exists.choose_spec","kind":"theorem","statement":"theorem Exists.choose_spec {p : α → Prop} (P : ∃ a, p a) : p ([Exists.choose](Exists.choose) P)","docstring":"Show that an element extracted from P : ∃ a, p a using P.choose satisfies p.","source_path":"Mathlib/Logic/Basic.lean"}"#;

#[test]
fn hyperlinked_definition_becomes_dependency() {
    let input = format!("{CHOOSE}\n{CHOOSE_SPEC}\n");
    let (corpus, diags) = Corpus::load(input.as_bytes()).unwrap();
    assert!(diags.is_empty(), "{diags:?}");
    let spec = corpus.get("Exists.choose_spec").unwrap();
    assert_eq!(spec.dependencies.len(), 1);
    assert_eq!(spec.dependencies[0].name, "Exists.choose");
    assert!(spec.dependencies[0].docstring.as_deref().unwrap().starts_with("Extract an element"));
    assert_eq!(
        spec.formal_statement,
        "theorem Exists.choose_spec {p : α → Prop} (P : ∃ a, p a) : p (Exists.choose P)"
    );
    assert_eq!(corpus.searchable().count(), 1);
}

#[test]
fn round_trip_is_byte_identical() {
    let input = format!("{CHOOSE}\n{CHOOSE_SPEC}\n");
    let parsed = parse_corpus(input.as_bytes()).unwrap();
    let mut out = Vec::new();
    write_corpus(&parsed.records, &mut out).unwrap();
    assert_eq!(String::from_utf8(out).unwrap(), input);
}

#[test]
fn bad_lines_become_diagnostics() {
    let input = format!(
        "{CHOOSE}\n\n{{\"id\":\"x\",\"name\":\"x\",\"kind\":\"theorem\",\"source_path\":\"p\"}}\nnot json\n{CHOOSE_SPEC}\n"
    );
    let parsed = parse_corpus(input.as_bytes()).unwrap();
    assert_eq!(parsed.records.len(), 2);
    assert_eq!(parsed.schema_errors(), 2);
    assert!(parsed.diagnostics[0].message.contains("statement"));
    assert_eq!(parsed.diagnostics[0].line, Some(3));
}

#[test]
fn duplicates_keep_the_last_record() {
    let second = CHOOSE.replace("Extract an element", "Replaced");
    let input = format!("{CHOOSE}\n{second}\n");
    let (corpus, diags) = Corpus::load(input.as_bytes()).unwrap();
    assert_eq!(corpus.len(), 1);
    assert!(corpus.get("Exists.choose").unwrap().docstring.as_deref().unwrap().starts_with("Replaced"));
    assert_eq!(diags.len(), 1);
    assert_eq!(diags[0].kind, DiagnosticKind::DuplicateId);
}

/// Character-by-character reference: an anchor is `[`, a non-empty run
/// without brackets or newlines, `](`, a non-empty run without whitespace or
/// brackets or parentheses, `)`.
fn reference_scan(markup: &str) -> (String, Vec<(usize, usize, String)>) {
    let c: Vec<char> = markup.chars().collect();
    let mut plain = Vec::new();
    let mut links = Vec::new();
    let mut i = 0;
    'outer: while i < c.len() {
        if c[i] == '[' {
            let mut j = i + 1;
            while j < c.len() && c[j] != ']' && c[j] != '[' && c[j] != '\n' {
                j += 1;
            }
            if j < c.len() && c[j] == ']' && j > i + 1 && j + 1 < c.len() && c[j + 1] == '(' {
                let mut t = j + 2;
                while t < c.len() && c[t] != ')' {
                    if c[t].is_whitespace() || "()[]".contains(c[t]) {
                        break;
                    }
                    t += 1;
                }
                if t < c.len() && c[t] == ')' && t > j + 2 {
                    let start = plain.len();
                    plain.extend_from_slice(&c[i + 1..j]);
                    links.push((start, plain.len(), c[j + 2..t].iter().collect()));
                    i = t + 1;
                    continue 'outer;
                }
            }
        }
        plain.push(c[i]);
        i += 1;
    }
    (plain.into_iter().collect(), links)
}

fn segment() -> impl Strategy<Value = String> {
    prop_oneof![
        "[a-zα-ω →∀∃:(){}.,]{0,8}",
        ("[a-zA-Z.]{1,6}", "[A-Za-z._]{1,10}").prop_map(|(d, t)| format!("[{d}]({t})")),
        Just("[Decidable P]".to_string()),
        Just("[broken](".to_string()),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn extract_links_matches_reference(parts in prop::collection::vec(segment(), 0..8)) {
        let markup: String = parts.concat();
        let (linked, _) = extract_links(&markup);
        let (plain, links) = reference_scan(&markup);
        prop_assert_eq!(&linked.plain_text, &plain);
        let got: Vec<(usize, usize, String)> =
            linked.links.iter().map(|l| (l.start, l.end, l.target.clone())).collect();
        prop_assert_eq!(&got, &links);
        let n = plain.chars().count();
        for w in linked.links.windows(2) {
            prop_assert!(w[0].end <= w[1].start);
        }
        for l in &linked.links {
            prop_assert!(l.start < l.end && l.end <= n);
        }
    }

    #[test]
    fn well_formed_anchors_leave_no_delimiters(
        parts in prop::collection::vec(
            prop_oneof![
                "[a-z →:]{0,8}",
                ("[a-z]{1,6}", "[A-Za-z.]{1,8}").prop_map(|(d, t)| format!("[{d}]({t})")),
            ],
            0..8,
        )
    ) {
        let (linked, issues) = extract_links(&parts.concat());
        prop_assert!(issues.is_empty());
        prop_assert!(!linked.plain_text.contains(['[', ']']));
        prop_assert_eq!(linked.to_markup(), parts.concat());
    }

    #[test]
    fn parse_and_write_round_trip(
        records in prop::collection::vec(
            ("[a-z]{1,6}", "[a-z][a-z →:]{0,11}", proptest::option::of("[a-z ]{1,10}"), 0usize..3),
            0..6,
        ),
        garbage in prop::collection::vec("[a-z{}]{1,6}", 0..4),
    ) {
        let kinds = ["theorem", "definition", "other"];
        let mut lines: Vec<String> = records
            .iter()
            .enumerate()
            .map(|(i, (name, stmt, doc, kind))| {
                let doc = doc
                    .as_ref()
                    .map(|d| format!(",\"docstring\":{}", serde_json::json!(d)))
                    .unwrap_or_default();
                format!(
                    r#"{{"id":"{name}{i}","name":"{name}","kind":"{}","statement":{}{doc},"source_path":"Mathlib/X.lean"}}"#,
                    kinds[*kind],
                    serde_json::json!(stmt),
                )
            })
            .collect();
        let good = lines.clone();
        lines.extend(garbage.iter().cloned());
        let input = lines.join("\n");
        let parsed = parse_corpus(input.as_bytes()).unwrap();
        prop_assert_eq!(parsed.records.len() + parsed.schema_errors(), lines.len());
        let mut out = Vec::new();
        write_corpus(&parsed.records, &mut out).unwrap();
        let mut expected = good.join("\n");
        if !good.is_empty() {
            expected.push('\n');
        }
        prop_assert_eq!(String::from_utf8(out).unwrap(), expected);
    }

    #[test]
    fn corpus_entry_splits_back(
        formal in "[a-z][a-z →∀(){}]{0,20}",
        name in "[A-Za-z :]{1,15}",
        statement in "[A-Za-z :.]{0,30}",
    ) {
        let input = format!(r#"{{"id":"t","name":"t","kind":"theorem","statement":{},"source_path":"p"}}"#, serde_json::json!(formal));
        let record = parse_corpus(input.as_bytes()).unwrap().records.remove(0);
        let pair = InformalPair::new("t", &name, &statement);
        prop_assume!(!pair.informal_name.is_empty());
        let doc = format_corpus_entry(&record, &pair).unwrap();
        let (f, n, s) = split_corpus_entry(&doc).unwrap();
        prop_assert_eq!(f, record.formal_statement.as_str());
        prop_assert_eq!(n, pair.informal_name.as_str());
        prop_assert_eq!(s, pair.informal_statement.as_str());
    }
}
