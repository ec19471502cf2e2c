//! Bracketed source markers (`[1]`, `[2][3]`) and reference lists.

use std::sync::LazyLock;

use regex::Regex;

static MARKER: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\[(\d{1,9})\]").unwrap());
static REFERENCE: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r#"^\s*\[(\d{1,9})\]:?\s*<?(https?://[^\s>]+)>?(?:\s+.*)?$"#).unwrap()
});
static LIST_ITEM: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^\s*(?:\d{1,3}[.)]|[-•*+])\s+(.+?)\s*$").unwrap());

/// Removes every `[n]` marker. Returns the cleaned text (whitespace
/// collapsed) and the marker numbers, deduplicated in first-seen order.
pub fn parse_source_markers(text: &str) -> (String, Vec<u32>) {
    let mut indices: Vec<u32> = Vec::new();
    let mut current = text.to_owned();
    // removing a marker can expose a new one, e.g. "[[1]2]"
    while MARKER.is_match(&current) {
        let mut out = String::with_capacity(current.len());
        let mut last = 0;
        for caps in MARKER.captures_iter(&current) {
            let m = caps.get(0).unwrap();
            out.push_str(&current[last..m.start()]);
            if let Ok(n) = caps[1].parse::<u32>() {
                if !indices.contains(&n) {
                    indices.push(n);
                }
            }
            last = m.end();
            let before = out.chars().last();
            let after = current[last..].chars().next();
            if let (Some(b), Some(a)) = (before, after) {
                if b.is_alphanumeric() && a.is_alphanumeric() {
                    out.push(' ');
                }
            }
        }
        out.push_str(&current[last..]);
        current = out;
    }
    let collapsed = current.split_whitespace().collect::<Vec<_>>().join(" ");
    (tidy_punctuation(&collapsed), indices)
}

/// Drops the space a removed marker leaves before closing punctuation.
fn tidy_punctuation(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    let mut chars = text.chars().peekable();
    while let Some(c) = chars.next() {
        if c == ' ' && matches!(chars.peek(), Some('.' | ',' | ';' | ':' | '!' | '?')) {
            continue;
        }
        out.push(c);
    }
    out
}

/// Splits trailing `[n]: https://...` reference lines from a response.
/// Returns the remaining body and the URLs ordered by reference number.
pub fn split_references(text: &str) -> (String, Vec<String>) {
    let mut refs: Vec<(u32, String)> = Vec::new();
    let mut body = Vec::new();
    for line in text.lines() {
        match REFERENCE.captures(line) {
            Some(c) => {
                let n: u32 = c[1].parse().unwrap_or(u32::MAX);
                if !refs.iter().any(|(k, _)| *k == n) {
                    refs.push((n, c[2].to_owned()));
                }
            }
            None => body.push(line),
        }
    }
    refs.sort_by_key(|(n, _)| *n);
    (
        body.join("\n").trim().to_owned(),
        refs.into_iter().map(|(_, u)| u).collect(),
    )
}

/// Items of a numbered (`1.`, `1)`) or bulleted (`-`, `•`, `*`) list. Lines
/// outside the list are ignored.
pub fn parse_list_items(text: &str) -> Vec<String> {
    text.lines()
        .filter(|l| !REFERENCE.is_match(l))
        .filter_map(|l| LIST_ITEM.captures(l))
        .map(|c| c[1].replace("**", "").trim().to_owned())
        .filter(|s| !s.is_empty())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn trailing_marker() {
        assert_eq!(
            parse_source_markers("This city is on the Potomac. [2]"),
            ("This city is on the Potomac.".to_owned(), vec![2])
        );
    }

    #[test]
    fn no_markers() {
        assert_eq!(
            parse_source_markers("No markers here."),
            ("No markers here.".to_owned(), vec![])
        );
    }

    #[test]
    fn inline_and_repeated_markers() {
        assert_eq!(
            parse_source_markers("A [1] and B [1][3]"),
            ("A and B".to_owned(), vec![1, 3])
        );
        assert_eq!(
            parse_source_markers("Potomac [2]."),
            ("Potomac.".to_owned(), vec![2])
        );
        assert_eq!(
            parse_source_markers("word[1]next"),
            ("word next".to_owned(), vec![1])
        );
        assert_eq!(
            parse_source_markers("x [[1]2] y"),
            ("x y".to_owned(), vec![1, 2])
        );
        assert_eq!(parse_source_markers("[a] and [ 1 ]").1, Vec::<u32>::new());
    }

    #[test]
    fn references_and_lists() {
        let resp = "Here are some hints:\n1. It is old. [1]\n2) It is big [2]\n- It is red\n\n[1]: https://a.example/x \"A\"\n[2] https://b.example/y";
        let (body, refs) = split_references(resp);
        assert_eq!(refs, vec!["https://a.example/x", "https://b.example/y"]);
        let items = parse_list_items(&body);
        assert_eq!(items, vec!["It is old. [1]", "It is big [2]", "It is red"]);
        assert_eq!(
            parse_list_items("- **Paris**\n* London\n• Rome"),
            vec!["Paris", "London", "Rome"]
        );
        assert!(parse_list_items("no list at all").is_empty());
    }

    proptest! {
        #[test]
        fn markers_fully_removed_and_lossless(
            parts in proptest::collection::vec(("[a-zA-Z.,]{0,6}", proptest::option::of(0u32..20)), 0..8)
        ) {
            let mut text = String::new();
            let mut markers = Vec::new();
            for (word, marker) in &parts {
                text.push_str(word);
                text.push(' ');
                if let Some(m) = marker {
                    text.push_str(&format!("[{m}]"));
                    markers.push(*m);
                }
            }
            let (clean, idx) = parse_source_markers(&text);
            prop_assert!(!MARKER.is_match(&clean));
            let mut expected = markers.clone();
            let mut seen = std::collections::HashSet::new();
            expected.retain(|m| seen.insert(*m));
            prop_assert_eq!(idx, expected);
            // character multiset, ignoring whitespace, is preserved
            let strip = |s: &str| { let mut v: Vec<char> = s.chars().filter(|c| !c.is_whitespace()).collect(); v.sort(); v };
            let mut rebuilt = clean.clone();
            for m in &markers { rebuilt.push_str(&format!("[{m}]")); }
            prop_assert_eq!(strip(&rebuilt), strip(&text));
        }
    }
}
