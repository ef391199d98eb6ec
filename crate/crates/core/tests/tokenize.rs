use proptest::prelude::*;
use urltran::tokenize::{
    decode, encode, load_wordpiece_vocab, tokenize, train_bpe, VocabKind, Vocabulary, PAD_ID,
};

const BERT_VOCAB: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/data/bert-base-uncased-vocab.txt");

#[test]
fn bert_uncased_wordpiece_banking_url() {
    let v = load_wordpiece_vocab(BERT_VOCAB).unwrap();
    assert_eq!(v.len(), 30522);
    let pieces = tokenize(&v, "secure.bankofamerica.com/login/sign-in/signOnV2Screen.go");
    let expected = [
        "secure", ".", "bank", "##of", "##ame", "##rica", ".", "com", "/", "log", "##in", "/",
        "sign", "-", "in", "/", "sign", "##on", "##v", "##2", "##screen", ".", "go",
    ];
    assert_eq!(pieces, expected);
}

#[test]
fn wordpiece_manifest_round_trip_keeps_encoding() {
    let v = load_wordpiece_vocab(BERT_VOCAB).unwrap();
    let back = Vocabulary::from_json(&v.to_json()).unwrap();
    let url = "https://login.microsoftonline.com/common/oauth2?client_id=abc";
    assert_eq!(tokenize(&back, url), tokenize(&v, url));
}

/// Brute force: at every emitted piece's start, no longer vocabulary entry
/// matches the remaining word.
#[test]
fn wordpiece_pieces_are_longest_matches() {
    let v = load_wordpiece_vocab(BERT_VOCAB).unwrap();
    for url in [
        "secure.bankofamerica.com/login/sign-in/signOnV2Screen.go",
        "paypal-account-verify.example.net/update?session=88ab",
        "www.wellsfargo.com/online-banking/",
    ] {
        let pieces = tokenize(&v, url);
        let lower = url.to_lowercase();
        // Re-walk the words: concatenated pieces of one word must reproduce it.
        let mut words: Vec<Vec<String>> = Vec::new();
        for p in &pieces {
            if p.starts_with("##") {
                words.last_mut().unwrap().push(p.clone());
            } else {
                words.push(vec![p.clone()]);
            }
        }
        let mut rebuilt = String::new();
        for w in &words {
            let word: String = w.iter().map(|p| p.trim_start_matches("##")).collect();
            let chars: Vec<char> = word.chars().collect();
            let mut pos = 0;
            for p in w {
                let len = p.trim_start_matches("##").chars().count();
                for longer in pos + len + 1..=chars.len() {
                    let prefix = if pos > 0 { "##" } else { "" };
                    let cand: String = prefix.to_string() + &chars[pos..longer].iter().collect::<String>();
                    assert!(v.id(&cand).is_none(), "{cand} is longer than {p} in {url}");
                }
                pos += len;
            }
            rebuilt.push_str(&word);
        }
        assert_eq!(rebuilt, lower.replace(' ', ""));
    }
}

fn url_strategy() -> impl Strategy<Value = String> {
    prop::string::string_regex("[a-zA-Z0-9./:?=&%_~-]{0,60}|[\\PC]{0,20}").unwrap()
}

fn small_byte_vocab() -> &'static Vocabulary {
    static V: std::sync::OnceLock<Vocabulary> = std::sync::OnceLock::new();
    V.get_or_init(|| {
    let corpus: Vec<String> = (0..200)
        .map(|i| format!("https://site{}.example.com/path/{}?id={}&ref=mail", i % 17, i % 5, i))
        .collect();
    train_bpe(&corpus, 400, VocabKind::ByteBpe).unwrap()
    })
}

proptest! {
    #[test]
    fn byte_bpe_round_trip(url in url_strategy()) {
        let v = small_byte_vocab();
        let s = encode(v, &url, 512).unwrap();
        prop_assume!(s.attended_len() < 512);
        prop_assert_eq!(decode(v, &s.ids).unwrap(), url);
    }

    #[test]
    fn encode_shape_invariants(url in url_strategy(), max_len in 3usize..40) {
        let v = small_byte_vocab();
        let s = encode(v, &url, max_len).unwrap();
        prop_assert_eq!(s.ids.len(), max_len);
        prop_assert_eq!(s.attention_mask.len(), max_len);
        let n = s.attended_len();
        prop_assert!(s.attention_mask[n..].iter().all(|&m| m == 0));
        prop_assert!(s.ids.iter().all(|&i| (i as usize) < v.len()));
        prop_assert!(s.ids[n..].iter().all(|&i| i == PAD_ID));
    }
}

#[test]
fn training_is_deterministic() {
    let corpus: Vec<String> = (0..300).map(|i| format!("http://host{}.com/{}", i % 11, i % 7)).collect();
    let a = train_bpe(&corpus, 350, VocabKind::CharBpe).unwrap();
    let b = train_bpe(&corpus, 350, VocabKind::CharBpe).unwrap();
    assert_eq!(a.merges(), b.merges());
    assert_eq!(a.to_json(), b.to_json());
}
