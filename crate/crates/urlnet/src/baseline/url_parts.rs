//! Structural split of a URL string into hostname, domain, TLD, path
//! tokens, and query argument names.

use crate::tokenizer::tokenize_words;

/// Lexical components of a URL. No public-suffix list is consulted: the
/// TLD is simply the final dot-label of the hostname, so multi-label
/// suffixes like `co.uk` are split naively.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct UrlParts {
    /// Hostname minus its final dot-label (empty for single-label hosts).
    pub primary_domain: String,
    /// Everything between the scheme separator and the first `/`.
    pub hostname: String,
    /// Final dot-label of the hostname.
    pub tld: String,
    /// Word tokens of everything after the hostname, query included.
    pub path_token_list: Vec<String>,
    /// Raw path portion (after the first `/`, before any `?`).
    pub path_str: String,
    /// Last non-empty `/`-segment of the path, kept verbatim.
    pub last_path_token: String,
    /// Keys of `?k=v&…` pairs, values discarded.
    pub argument_names: Vec<String>,
}

fn looks_like_scheme(prefix: &str) -> bool {
    !prefix.is_empty()
        && prefix
            .chars()
            .all(|c| c.is_ascii_lowercase() || c.is_ascii_digit() || "+-.".contains(c))
}

/// Splits a URL into [`UrlParts`]. Total on any string; degenerate inputs
/// yield empty parts. The URL is lowercased first, matching tokenization.
pub fn split_url(url: &str) -> UrlParts {
    let lowered = url.to_lowercase();
    let rest = match lowered.split_once("://") {
        Some((scheme, rest)) if looks_like_scheme(scheme) => rest,
        _ => lowered.as_str(),
    };
    let (hostname, remainder) = match rest.split_once('/') {
        Some((host, rem)) => (host.to_string(), rem),
        None => (rest.to_string(), ""),
    };
    let (path_str, query) = match remainder.split_once('?') {
        Some((p, q)) => (p.to_string(), q),
        None => (remainder.to_string(), ""),
    };
    let (primary_domain, tld) = match hostname.rsplit_once('.') {
        Some((front, last)) => (front.to_string(), last.to_string()),
        None => (String::new(), hostname.clone()),
    };
    let last_path_token = path_str
        .rsplit('/')
        .find(|seg| !seg.is_empty())
        .unwrap_or("")
        .to_string();
    let argument_names = query
        .split('&')
        .map(|pair| pair.split_once('=').map_or(pair, |(k, _)| k))
        .filter(|k| !k.is_empty())
        .map(str::to_string)
        .collect();
    UrlParts {
        primary_domain,
        hostname,
        tld,
        path_token_list: tokenize_words(remainder, false),
        path_str,
        last_path_token,
        argument_names,
    }
}
