use proptest::prelude::*;
use tutor_core::lexer::{tokenize, LexError};
use tutor_core::Language;

fn fragment(language: Language) -> BoxedStrategy<String> {
    let shared = prop_oneof![
        "[a-zA-Z_][a-zA-Z0-9_]{0,6}",
        "[0-9]{1,4}(\\.[0-9]{1,3})?(e-?[0-9])?",
        "'([a-z ]|\\\\'|\\\\\"|é|日){0,6}'",
        "\"([a-z ]|\\\\'|\\\\\"|ü){0,6}\"",
        "[ \t]{1,3}",
        Just("\n".to_string()),
        "#[^\n]{0,10}\n",
        prop::sample::select(vec![
            "(", ")", "[", "]", "{", "}", ",", ";", "==", "!=", "<=", ">=", "<", ">", "+", "-",
            "*", "/", "!"
        ])
        .prop_map(str::to_string),
        "[€λ`\\\\]",
    ];
    match language {
        Language::R => prop_oneof![
            4 => shared,
            1 => "[a-z][a-z0-9_.]{0,6}\\.[a-z]{1,3}",
            1 => prop::sample::select(vec!["<-", "<<-", "->", "$", ":", "::", "[[", "]]", "%in%", "%>%", "%%", "TRUE", "FALSE", "NA", "0L", ".5"])
                .prop_map(str::to_string),
        ]
        .boxed(),
        Language::Python => prop_oneof![
            4 => shared,
            1 => prop::sample::select(vec![".", "=", ":", "**", "//", "+=", "->", ":=", "True", "False", "None", "@"])
                .prop_map(str::to_string),
        ]
        .boxed(),
    }
}

fn snippet(language: Language) -> impl Strategy<Value = String> {
    prop::collection::vec(fragment(language), 0..24).prop_map(|parts| parts.concat())
}

fn check(language: Language, source: &str) -> Result<(), TestCaseError> {
    let tokens = tokenize(language, source).map_err(|e| TestCaseError::fail(e.to_string()))?;
    prop_assert_eq!(tokens.reconstruct(), source);
    let mut at = 0;
    for t in &tokens.tokens {
        prop_assert_eq!(t.span.start, at);
        prop_assert!(!t.lexeme.is_empty());
        at = t.span.end;
    }
    prop_assert_eq!(at, source.chars().count());
    Ok(())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn r_snippets_round_trip(src in snippet(Language::R)) {
        check(Language::R, &src)?;
    }

    #[test]
    fn python_snippets_round_trip(src in snippet(Language::Python)) {
        check(Language::Python, &src)?;
    }

    #[test]
    fn arbitrary_text_round_trips_or_reports_a_string(src in "\\PC{0,40}", r in any::<bool>()) {
        let language = if r { Language::R } else { Language::Python };
        match tokenize(language, &src) {
            Ok(tokens) => prop_assert_eq!(tokens.reconstruct(), src),
            Err(LexError::UnterminatedString { offset }) => {
                let c = src.chars().nth(offset);
                prop_assert!(c == Some('\'') || c == Some('"'));
            }
            Err(other) => return Err(TestCaseError::fail(other.to_string())),
        }
    }
}
