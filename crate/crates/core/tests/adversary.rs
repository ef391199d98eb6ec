use rand::Rng;
use urltran::adversary::{
    build_adversarial_dataset, compound_attack, compound_split, homoglyph_attack, reorder_params, HomoglyphTable,
    WordDictionary,
};
use urltran::corpus::{parse_url, Dataset, Label, Origin, UrlRecord};
use urltran::rng;

const WORDS: [&str; 20] = [
    "a", "b", "ab", "ba", "abc", "cab", "bca", "aab", "bba", "cc", "acb", "bab", "abab", "cbc", "aaaa", "bcb", "cabca",
    "bbbb", "ca", "abcab",
];

fn dict() -> WordDictionary {
    WordDictionary::new(WORDS).unwrap()
}

/// Tries every one of the 2^(n-1) cut patterns. Among valid segmentations
/// keeps the fewest parts, then the lexicographically largest part lengths.
fn brute_force(s: &str) -> Option<Vec<String>> {
    let chars: Vec<char> = s.chars().collect();
    let n = chars.len();
    let mut best: Option<(usize, Vec<usize>, Vec<String>)> = None;
    for mask in 0u32..(1 << (n - 1)) {
        let mut parts = Vec::new();
        let mut start = 0;
        for i in 1..=n {
            if i == n || mask & (1 << (i - 1)) != 0 {
                parts.push(chars[start..i].iter().collect::<String>());
                start = i;
            }
        }
        if !parts.iter().all(|p| WORDS.contains(&p.as_str())) {
            continue;
        }
        let lens: Vec<usize> = parts.iter().map(|p| p.len()).collect();
        let better = match &best {
            None => true,
            Some((k, l, _)) => parts.len() < *k || (parts.len() == *k && lens > *l),
        };
        if better {
            best = Some((parts.len(), lens, parts));
        }
    }
    best.map(|b| b.2)
}

fn strings(alphabet: &[char], max_len: usize) -> Vec<String> {
    let mut out = Vec::new();
    let mut frontier = vec![String::new()];
    for _ in 0..max_len {
        let mut next = Vec::new();
        for s in &frontier {
            for &c in alphabet {
                let mut t = s.clone();
                t.push(c);
                next.push(t);
            }
        }
        out.extend(next.iter().cloned());
        frontier = next;
    }
    out
}

#[test]
fn split_matches_exhaustive_enumeration() {
    let d = dict();
    let mut cases = strings(&['a', 'b'], 12);
    cases.extend(strings(&['a', 'b', 'c'], 9));
    let mut splittable = 0;
    for s in &cases {
        let got = compound_split(s, &d).unwrap();
        let want = brute_force(s);
        assert_eq!(got.splittable, want.is_some(), "{s}");
        if let Some(w) = want {
            assert_eq!(got.parts, w, "{s}");
            assert_eq!(got.parts.concat(), *s);
            splittable += 1;
        }
    }
    assert!(splittable > 1000);
}

fn random_url(r: &mut impl Rng) -> String {
    let labels = ["paypal", "bankofamerica", "mail", "secure", "login", "shop", "a1b2", "my-site", "777", "appleid"];
    let tlds = ["com", "net", "co.uk", "org", "io"];
    let mut host = String::new();
    if r.random_bool(0.4) {
        host.push_str(["www.", "m.", "login.", "cdn2."][r.random_range(0..4)]);
    }
    host.push_str(labels[r.random_range(0..labels.len())]);
    host.push('.');
    host.push_str(tlds[r.random_range(0..tlds.len())]);
    let scheme = ["http://", "https://", ""][r.random_range(0..3)];
    let port = if r.random_bool(0.1) { ":8080" } else { "" };
    let path = ["/", "/index.php", "/a/b/c.html", ""][r.random_range(0..4)];
    let mut url = format!("{scheme}{host}{port}{path}");
    let pairs = r.random_range(0..5);
    for i in 0..pairs {
        url.push(if i == 0 { '?' } else { '&' });
        let key = ["id", "q", "ref", "x", "session"][r.random_range(0..5)];
        if r.random_bool(0.2) {
            url.push_str(key);
        } else {
            url.push_str(&format!("{key}={}", r.random_range(0..20)));
        }
    }
    if r.random_bool(0.2) {
        url.push_str("#frag");
    }
    url
}

#[test]
fn homoglyph_outputs_differ_by_one_table_substitution() {
    let table = HomoglyphTable::builtin();
    let mut r = rng::rng(1);
    let mut done = 0;
    let mut i = 0u64;
    while done < 10_000 {
        let url = random_url(&mut r);
        i += 1;
        let src = parse_url(&url).unwrap();
        let out = match homoglyph_attack(&url, &table, i) {
            Ok(o) => o,
            Err(_) => {
                assert!(src.host.chars().all(|c| table.get(c).is_none()));
                continue;
            }
        };
        assert_eq!((out.label, out.origin), (Label::Phish, Origin::Homoglyph));
        let dst = parse_url(&out.url).unwrap();
        let a: Vec<char> = src.host.chars().collect();
        let b: Vec<char> = dst.host.chars().collect();
        assert_eq!(a.len(), b.len());
        let diffs: Vec<usize> = (0..a.len()).filter(|&k| a[k] != b[k]).collect();
        assert_eq!(diffs.len(), 1, "{url} -> {}", out.url);
        let k = diffs[0];
        assert!(table.get(a[k]).unwrap().contains(&b[k]));
        assert_eq!((src.path, src.query, src.port), (dst.path, dst.query, dst.port));
        done += 1;
    }
}

#[test]
fn compound_outputs_invert_by_removing_hyphens() {
    let d = WordDictionary::builtin();
    let mut r = rng::rng(2);
    let mut done = 0;
    for _ in 0..3000 {
        let url = random_url(&mut r);
        let Ok(out) = compound_attack(&url, &d) else { continue };
        let src = parse_url(&url).unwrap();
        let dst = parse_url(&out.url).unwrap();
        assert_eq!(out.label, Label::Phish);
        assert_eq!(src.host.replace('-', ""), dst.host.replace('-', ""));
        assert!(dst.host.matches('-').count() > src.host.matches('-').count());
        assert_eq!(url.replace(&src.host, ""), out.url.replace(&dst.host, ""));
        done += 1;
    }
    assert!(done > 100);
}

#[test]
fn reorder_outputs_preserve_pairs_and_other_bytes() {
    let mut r = rng::rng(3);
    let mut done = 0;
    let mut i = 0u64;
    while done < 10_000 {
        let url = random_url(&mut r);
        i += 1;
        let label = if i.is_multiple_of(2) { Label::Phish } else { Label::Benign };
        let src = parse_url(&url).unwrap();
        let Ok(out) = reorder_params(&url, label, i) else {
            assert!(src.pairs().len() < 2);
            continue;
        };
        assert_eq!(out.label, label);
        let dst = parse_url(&out.url).unwrap();
        let mut a = src.pairs().to_vec();
        let mut b = dst.pairs().to_vec();
        a.sort();
        b.sort();
        assert_eq!(a, b);
        let strip_query = |p: &urltran::corpus::UrlParts| {
            let mut p = p.clone();
            p.query = None;
            p.to_url()
        };
        assert_eq!(strip_query(&src), strip_query(&dst));
        done += 1;
    }
}

#[test]
fn augmentation_proportions_and_contracts() {
    let mut r = rng::rng(4);
    let records: Vec<UrlRecord> = (0..10_000)
        .map(|i| UrlRecord::new(random_url(&mut r), if i % 4 == 0 { Label::Phish } else { Label::Benign }).unwrap())
        .collect();
    let ds = Dataset::new(records);
    let (out, rep) =
        build_adversarial_dataset(&ds, &HomoglyphTable::builtin(), &WordDictionary::builtin(), 77).unwrap();
    let n = ds.len() as f64;
    assert!((rep.selected as f64 / n - 0.5).abs() < 0.02, "{rep:?}");
    for c in rep.chosen {
        assert!((c as f64 / rep.selected as f64 - 1.0 / 3.0).abs() < 0.02, "{rep:?}");
    }
    assert!(out.len() >= ds.len() && out.len() <= 2 * ds.len());
    assert_eq!(out.len(), ds.len() + rep.succeeded.iter().sum::<usize>());
    let originals: Vec<&UrlRecord> = out.records.iter().filter(|x| x.origin == Origin::Original).collect();
    assert_eq!(originals.len(), ds.len());
    let mut src = ds.records.iter();
    let mut last_label = Label::Benign;
    for rec in &out.records {
        match rec.origin {
            Origin::Original => {
                assert_eq!(rec, src.next().unwrap());
                last_label = rec.label;
            }
            Origin::Homoglyph | Origin::Compound => assert_eq!(rec.label, Label::Phish),
            Origin::Reorder => assert_eq!(rec.label, last_label),
        }
    }
    let (again, _) =
        build_adversarial_dataset(&ds, &HomoglyphTable::builtin(), &WordDictionary::builtin(), 77).unwrap();
    assert_eq!(again, out);
}
