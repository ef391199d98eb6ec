//! Permissive RFC 3986-shaped URL decomposition.
//!
//! Real phishing URLs are often malformed, so this splitter never validates
//! characters. It only locates the component delimiters and keeps every byte,
//! which makes [`UrlParts::to_url`] the exact inverse of [`parse_url`].

use std::fmt;
use std::ops::Range;

use crate::{Error, Result};

/// One `key=value` element of a query string, kept percent-encoded as written.
///
/// `value` is `None` when the element has no `=` at all (`?flag`), which is
/// distinct from an empty value (`?flag=`).
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct QueryPair {
    pub key: String,
    pub value: Option<String>,
}

impl QueryPair {
    pub fn new(key: impl Into<String>, value: impl Into<String>) -> Self {
        Self {
            key: key.into(),
            value: Some(value.into()),
        }
    }

    fn parse(raw: &str) -> Self {
        match raw.split_once('=') {
            Some((k, v)) => Self::new(k, v),
            None => Self {
                key: raw.to_string(),
                value: None,
            },
        }
    }
}

impl fmt::Display for QueryPair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.value {
            Some(v) => write!(f, "{}={}", self.key, v),
            None => f.write_str(&self.key),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct UrlParts {
    /// Scheme without the `://` separator.
    pub scheme: Option<String>,
    /// Userinfo without the trailing `@`.
    pub userinfo: Option<String>,
    /// Host name, without userinfo or port.
    pub host: String,
    /// Port digits without the leading `:`.
    pub port: Option<String>,
    /// Path including its leading `/`, or empty.
    pub path: String,
    /// `None` when the URL has no `?`.
    pub query: Option<Vec<QueryPair>>,
    /// Fragment without the leading `#`.
    pub fragment: Option<String>,
}

impl UrlParts {
    /// Query pairs in parse order; empty when there is no query.
    pub fn pairs(&self) -> &[QueryPair] {
        self.query.as_deref().unwrap_or(&[])
    }

    /// Reassembles the URL. Exact inverse of [`parse_url`] for unmodified parts.
    pub fn to_url(&self) -> String {
        let mut out = String::with_capacity(self.host.len() + self.path.len() + 32);
        if let Some(s) = &self.scheme {
            out.push_str(s);
            out.push_str("://");
        }
        if let Some(u) = &self.userinfo {
            out.push_str(u);
            out.push('@');
        }
        out.push_str(&self.host);
        if let Some(p) = &self.port {
            out.push(':');
            out.push_str(p);
        }
        out.push_str(&self.path);
        if let Some(q) = &self.query {
            out.push('?');
            for (i, pair) in q.iter().enumerate() {
                if i > 0 {
                    out.push('&');
                }
                out.push_str(&pair.to_string());
            }
        }
        if let Some(f) = &self.fragment {
            out.push('#');
            out.push_str(f);
        }
        out
    }

    /// Byte range (within `host`) of the registrable label, e.g. `bankofamerica`
    /// in `secure.bankofamerica.co.uk`.
    pub fn registrable_label(&self) -> Range<usize> {
        registrable_label(&self.host)
    }
}

impl fmt::Display for UrlParts {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_url())
    }
}

fn scheme_len(url: &str) -> Option<usize> {
    let idx = url.find("://")?;
    let scheme = &url[..idx];
    let mut chars = scheme.chars();
    let first = chars.next()?;
    (first.is_ascii_alphabetic()
        && chars.all(|c| c.is_ascii_alphanumeric() || matches!(c, '+' | '-' | '.')))
    .then_some(idx)
}

pub fn parse_url(url: &str) -> Result<UrlParts> {
    if url.trim().is_empty() {
        return Err(Error::MalformedUrl(url.to_string()));
    }
    let (scheme, rest) = match scheme_len(url) {
        Some(n) => (Some(url[..n].to_string()), &url[n + 3..]),
        None => (None, url),
    };

    let auth_end = rest.find(['/', '?', '#']).unwrap_or(rest.len());
    let (authority, rest) = rest.split_at(auth_end);

    let (userinfo, hostport) = match authority.rfind('@') {
        Some(i) => (Some(authority[..i].to_string()), &authority[i + 1..]),
        None => (None, authority),
    };
    let (host, port) = split_port(hostport);
    if host.is_empty() {
        return Err(Error::MalformedUrl(url.to_string()));
    }

    let (before_frag, fragment) = match rest.split_once('#') {
        Some((a, f)) => (a, Some(f.to_string())),
        None => (rest, None),
    };
    let (path, query) = match before_frag.split_once('?') {
        Some((p, q)) => (p, Some(q.split('&').map(QueryPair::parse).collect())),
        None => (before_frag, None),
    };

    Ok(UrlParts {
        scheme,
        userinfo,
        host: host.to_string(),
        port: port.map(str::to_string),
        path: path.to_string(),
        query,
        fragment,
    })
}

fn split_port(hostport: &str) -> (&str, Option<&str>) {
    // Bracketed IPv6 literals contain colons of their own.
    let search_from = hostport.rfind(']').unwrap_or(0);
    match hostport[search_from..].rfind(':') {
        Some(rel) => {
            let i = search_from + rel;
            let digits = &hostport[i + 1..];
            if digits.bytes().all(|b| b.is_ascii_digit()) {
                (&hostport[..i], Some(digits))
            } else {
                (hostport, None)
            }
        }
        None => (hostport, None),
    }
}

/// Second-level labels that behave like a public suffix under a ccTLD
/// (`co.uk`, `com.au`, ...).
const SECOND_LEVEL_SUFFIXES: &[&str] = &[
    "ac", "co", "com", "edu", "gov", "govt", "gob", "go", "ltd", "me", "mil", "ne", "net", "nic",
    "or", "org", "plc", "sch",
];

pub fn registrable_label(host: &str) -> Range<usize> {
    let trimmed = host.trim_end_matches('.');
    let labels: Vec<(usize, &str)> = {
        let mut start = 0;
        trimmed
            .split('.')
            .map(|l| {
                let s = start;
                start += l.len() + 1;
                (s, l)
            })
            .collect()
    };
    let n = labels.len();
    let pick = match n {
        0 | 1 => 0,
        2 => 0,
        _ => {
            let tld = labels[n - 1].1;
            let sld = labels[n - 2].1.to_ascii_lowercase();
            if tld.len() == 2 && SECOND_LEVEL_SUFFIXES.contains(&sld.as_str()) {
                n - 3
            } else {
                n - 2
            }
        }
    };
    let (start, label) = labels[pick];
    start..start + label.len()
}
