//! Word lemmas: an exception table for irregular forms, then suffix rules.
//!
//! The table only lists forms the rules would get wrong, so the rules in
//! [`suffix_rules`] must stay in sync with `scripts/build_lemma_table.py`.

use std::collections::HashMap;
use std::sync::LazyLock;

static EXCEPTIONS: LazyLock<HashMap<&'static str, &'static str>> = LazyLock::new(|| {
    include_str!("../../data/lemma_exceptions.tsv")
        .lines()
        .filter(|l| !l.starts_with('#') && !l.trim().is_empty())
        .filter_map(|l| l.split_once('\t'))
        .collect()
});

const VOWELS: &[char] = &['a', 'e', 'i', 'o', 'u', 'y'];

pub fn lemmatize(token: &str) -> String {
    let word = token.to_lowercase();
    match EXCEPTIONS.get(word.as_str()) {
        Some(lemma) => (*lemma).to_owned(),
        None => suffix_rules(&word),
    }
}

fn has_vowel(s: &str) -> bool {
    s.contains(VOWELS)
}

fn undouble(stem: &str) -> &str {
    let mut rev = stem.chars().rev();
    match (rev.next(), rev.next()) {
        (Some(a), Some(b)) if a == b && !VOWELS.contains(&a) && !"lsz".contains(a) => {
            &stem[..stem.len() - a.len_utf8()]
        }
        _ => stem,
    }
}

fn suffix_rules(w: &str) -> String {
    if !w.chars().all(char::is_alphabetic) || w.chars().count() <= 3 {
        return w.to_owned();
    }
    let n = w.chars().count();
    if w.ends_with("ies") && n > 4 {
        return format!("{}y", &w[..w.len() - 3]);
    }
    if w.ends_with("sses")
        || ["xes", "ches", "shes", "zzes"]
            .iter()
            .any(|s| w.ends_with(s))
    {
        return w[..w.len() - 2].to_owned();
    }
    if w.ends_with('s') && !(w.ends_with("ss") || w.ends_with("us") || w.ends_with("is")) {
        return w[..w.len() - 1].to_owned();
    }
    if let Some(stem) = w.strip_suffix("ing") {
        if stem.chars().count() >= 3 && has_vowel(stem) {
            return undouble(stem).to_owned();
        }
        return w.to_owned();
    }
    if w.ends_with("ied") && n > 4 {
        return format!("{}y", &w[..w.len() - 3]);
    }
    if let Some(stem) = w.strip_suffix("ed") {
        if !w.ends_with("eed") && stem.chars().count() >= 3 && has_vowel(stem) {
            return undouble(stem).to_owned();
        }
    }
    w.to_owned()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn irregular_forms_come_from_the_table() {
        assert_eq!(lemmatize("mice"), "mouse");
        assert_eq!(lemmatize("Children"), "child");
        assert_eq!(lemmatize("went"), "go");
        assert_eq!(lemmatize("ran"), "run");
        assert!(EXCEPTIONS.len() > 5000);
    }

    #[test]
    fn suffix_rules_cover_regular_forms() {
        assert_eq!(lemmatize("cities"), "city");
        assert_eq!(lemmatize("run"), "run");
        assert_eq!(lemmatize("boxes"), "box");
        assert_eq!(lemmatize("churches"), "church");
        assert_eq!(lemmatize("classes"), "class");
        assert_eq!(lemmatize("planets"), "planet");
        assert_eq!(lemmatize("walked"), "walk");
        assert_eq!(lemmatize("stopped"), "stop");
        assert_eq!(lemmatize("stopping"), "stop");
        // noun readings win, as with noun-default lemmatizers
        assert_eq!(lemmatize("running"), "running");
        assert_eq!(lemmatize("carried"), "carry");
        assert_eq!(lemmatize("glass"), "glass");
        assert_eq!(lemmatize("virus"), "virus");
        assert_eq!(lemmatize("1990s"), "1990s");
    }

    #[test]
    fn lemmas_are_fixpoints_for_common_words() {
        for w in [
            "mouse",
            "city",
            "run",
            "go",
            "child",
            "beatle",
            "poland",
            "polish",
            "washington",
        ] {
            assert_eq!(lemmatize(w), w);
        }
    }
}
