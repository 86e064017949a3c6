//! Rule-based mapping of free-form answers onto option indices.

use std::collections::BTreeSet;

const ANSWER_PREFIXES: [&str; 2] = ["final answer:", "answer:"];

/// Case-folds, collapses whitespace, drops whitespace next to punctuation
/// and strips a leading `final answer:` / `answer:`.
pub fn normalize_answer(text: &str) -> String {
    let folded = text.to_lowercase();
    let words: Vec<&str> = folded.split_whitespace().collect();
    let collapsed = words.join(" ");
    let chars: Vec<char> = collapsed.chars().collect();
    let mut out = String::with_capacity(collapsed.len());
    for (i, &c) in chars.iter().enumerate() {
        if c == ' ' {
            let before = i.checked_sub(1).map(|j| chars[j]);
            let after = chars.get(i + 1).copied();
            if before.is_some_and(|b| b.is_ascii_punctuation()) || after.is_some_and(|a| a.is_ascii_punctuation()) {
                continue;
            }
        }
        out.push(c);
    }
    for prefix in ANSWER_PREFIXES {
        if let Some(rest) = out.strip_prefix(prefix) {
            return rest.to_string();
        }
    }
    out
}

fn letter(index: usize) -> char {
    (b'a' + index as u8) as char
}

/// Maps an answer to an option index, or `None` when no rule yields a unique hit.
///
/// Rules, in priority order: a parenthesized letter `(b)`; a leading letter
/// followed by `.`, `)`, `:` or the end of the text; the text of an option
/// longer than one character, as a whole word or phrase.
pub fn match_option(answer_text: &str, options: &[String]) -> Option<usize> {
    let count = options.len().min(26);
    if count == 0 {
        return None;
    }
    let text = normalize_answer(answer_text);

    let parenthesized: BTreeSet<usize> = (0..count)
        .filter(|&i| text.contains(&format!("({})", letter(i))))
        .collect();
    if let Some(hit) = unique(&parenthesized) {
        return Some(hit);
    }
    if !parenthesized.is_empty() {
        return None;
    }

    let mut chars = text.chars();
    if let Some(first) = chars.next() {
        let next = chars.next();
        if let Some(index) = (0..count).find(|&i| letter(i) == first) {
            if matches!(next, None | Some('.' | ')' | ':')) {
                return Some(index);
            }
        }
    }

    let contained: BTreeSet<usize> = (0..count)
        .filter(|&i| {
            let option = normalize_answer(&options[i]);
            option.chars().count() > 1 && contains_word(&text, &option)
        })
        .collect();
    unique(&contained)
}

/// `needle` occurs in `haystack` without alphanumerics on either side.
fn contains_word(haystack: &str, needle: &str) -> bool {
    haystack.match_indices(needle).any(|(start, _)| {
        let before = haystack[..start].chars().next_back();
        let after = haystack[start + needle.len()..].chars().next();
        !before.is_some_and(char::is_alphanumeric) && !after.is_some_and(char::is_alphanumeric)
    })
}

fn unique(hits: &BTreeSet<usize>) -> Option<usize> {
    match hits.len() {
        1 => hits.iter().next().copied(),
        _ => None,
    }
}
