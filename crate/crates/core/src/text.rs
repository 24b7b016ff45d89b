//! Small text helpers shared by rendering, grading and statistics.

fn is_cjk(c: char) -> bool {
    matches!(c as u32,
        0x3040..=0x30FF | 0x3400..=0x4DBF | 0x4E00..=0x9FFF | 0xF900..=0xFAFF | 0xAC00..=0xD7AF)
}

fn is_word_char(c: char) -> bool {
    c.is_alphanumeric() && !is_cjk(c)
}

/// Unicode word segmentation: runs of letters/digits form one token, each
/// CJK character is a token of its own, everything else separates.
pub fn tokenize(text: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let mut start: Option<usize> = None;
    for (i, c) in text.char_indices() {
        if is_word_char(c) {
            if start.is_none() {
                start = Some(i);
            }
            continue;
        }
        if let Some(s) = start.take() {
            out.push(&text[s..i]);
        }
        if is_cjk(c) {
            out.push(&text[i..i + c.len_utf8()]);
        }
    }
    if let Some(s) = start {
        out.push(&text[s..]);
    }
    out
}

pub fn token_count(text: &str) -> usize {
    tokenize(text).len()
}

/// Whether `needle` occurs in `haystack` without being glued to adjacent
/// letters or digits, so "36" is not found inside "13651039007".
pub fn contains_verbatim(haystack: &str, needle: &str) -> bool {
    if needle.is_empty() {
        return false;
    }
    let first = needle.chars().next().unwrap();
    let last = needle.chars().next_back().unwrap();
    let mut from = 0;
    while let Some(pos) = haystack[from..].find(needle) {
        let start = from + pos;
        let end = start + needle.len();
        let before_ok = !is_word_char(first)
            || haystack[..start].chars().next_back().is_none_or(|c| !is_word_char(c));
        let after_ok = !is_word_char(last)
            || haystack[end..].chars().next().is_none_or(|c| !is_word_char(c));
        if before_ok && after_ok {
            return true;
        }
        from = start + first.len_utf8();
    }
    false
}

/// Attribute display names read inside a sentence: "Phone Number" becomes
/// "phone number" while acronyms such as "ID" keep their case.
pub fn phrase_case(display: &str) -> String {
    display
        .split(' ')
        .map(|w| {
            let letters: Vec<char> = w.chars().filter(|c| c.is_alphabetic()).collect();
            if letters.len() > 1 && letters.iter().all(|c| c.is_uppercase()) {
                w.to_string()
            } else {
                w.to_lowercase()
            }
        })
        .collect::<Vec<_>>()
        .join(" ")
}

/// Upper-case the first character, for labels that open a sentence.
pub fn capitalize(s: &str) -> String {
    let mut chars = s.chars();
    match chars.next() {
        Some(c) => c.to_uppercase().chain(chars).collect(),
        None => String::new(),
    }
}

pub fn slug(s: &str) -> String {
    s.chars()
        .filter(|c| c.is_alphanumeric())
        .flat_map(char::to_lowercase)
        .collect()
}

/// Join labels the way a question lists people: "a, b and c".
pub fn join_list(items: &[String]) -> String {
    match items {
        [] => String::new(),
        [one] => one.clone(),
        [init @ .., last] => format!("{} and {}", init.join(", "), last),
    }
}

/// Inverse of [`join_list`].
pub fn split_list(s: &str) -> Vec<String> {
    let (init, last) = match s.rsplit_once(" and ") {
        Some((i, l)) => (i, Some(l)),
        None => (s, None),
    };
    let mut out: Vec<String> = init.split(", ").map(|x| x.trim().to_string()).collect();
    if let Some(l) = last {
        out.push(l.trim().to_string());
    }
    out.retain(|x| !x.is_empty());
    out
}
