//! Shared tokenization and answer normalization.

/// Number of whitespace-separated words in a question. A `?` standing alone
/// as the final token is punctuation, not a word.
pub fn question_word_count(question: &str) -> usize {
    let mut count = question.split_whitespace().count();
    if question.split_whitespace().last() == Some("?") {
        count -= 1;
    }
    count
}

/// Whitespace word count used for hint-length statistics.
pub fn word_count(text: &str) -> usize {
    text.split_whitespace().count()
}

const ARTICLES: [&str; 3] = ["a", "an", "the"];

/// Lowercases, replaces punctuation with spaces and drops a leading article.
/// Periods of initialisms are removed so that `D.C.` and `DC` agree.
///
/// `"The Answer is Washington, D.C."` becomes `["answer", "is", "washington", "dc"]`.
pub fn normalize_tokens(text: &str) -> Vec<String> {
    let chars: Vec<char> = text.chars().collect();
    let mut lowered = String::with_capacity(text.len());
    for (i, &c) in chars.iter().enumerate() {
        if c.is_alphanumeric() {
            lowered.extend(c.to_lowercase());
        } else if c == '.' && is_initial(&chars, i) {
            continue;
        } else {
            lowered.push(' ');
        }
    }
    let mut tokens: Vec<String> = lowered.split_whitespace().map(str::to_owned).collect();
    if tokens.len() > 1 && ARTICLES.contains(&tokens[0].as_str()) {
        tokens.remove(0);
    }
    tokens
}

/// A period right after a lone letter, as in `U.S.` or `J. Smith`.
fn is_initial(chars: &[char], dot: usize) -> bool {
    dot >= 1 && chars[dot - 1].is_alphabetic() && (dot < 2 || !chars[dot - 2].is_alphanumeric())
}

/// Normalized form joined by single spaces; used for deduplication.
pub fn normalized_key(text: &str) -> String {
    normalize_tokens(text).join(" ")
}

/// True when `needle` occurs as a contiguous run inside `haystack`.
pub fn contains_run(haystack: &[String], needle: &[String]) -> bool {
    if needle.is_empty() || needle.len() > haystack.len() {
        return false;
    }
    haystack.windows(needle.len()).any(|w| w == needle)
}
