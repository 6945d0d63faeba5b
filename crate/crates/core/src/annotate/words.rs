//! Whitespace word splitting with punctuation peeling.

const LEADING: &[char] = &['(', '[', '{', '"', '\'', '\u{201c}', '\u{2018}'];
const TRAILING: &[char] = &[
    ')', ']', '}', '"', '\'', ',', ';', ':', '!', '?', '\u{201d}', '\u{2019}',
];

/// Abbreviations that keep their trailing period.
const ABBREVIATIONS: &[&str] = &[
    "mr.", "mrs.", "ms.", "dr.", "st.", "jr.", "sr.", "prof.", "gen.", "gov.", "sen.", "rep.",
    "rev.", "lt.", "col.", "sgt.", "capt.", "inc.", "co.", "corp.", "ltd.", "no.", "vs.", "mt.",
    "ave.", "jan.", "feb.", "mar.", "apr.", "aug.", "sept.", "sep.", "oct.", "nov.", "dec.",
];

fn keeps_period(word: &str) -> bool {
    let lower = word.to_lowercase();
    if ABBREVIATIONS.contains(&lower.as_str()) {
        return true;
    }
    // Initialisms such as "U.S." and "a.m.", and single initials such as "J."
    let bytes = word.as_bytes();
    bytes.len() >= 2 && bytes.chunks(2).all(|c| c.len() == 2 && c[0].is_ascii_alphabetic() && c[1] == b'.')
}

/// Splits text into words, separating surrounding punctuation and a
/// possessive `'s`. Punctuation marks become words of their own.
pub fn split_words(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    for chunk in text.split_whitespace() {
        let mut core = chunk;
        let mut lead = Vec::new();
        while let Some(c) = core.chars().next().filter(|c| LEADING.contains(c)) {
            lead.push(c.to_string());
            core = &core[c.len_utf8()..];
        }
        let mut trail = Vec::new();
        loop {
            let Some(c) = core.chars().next_back() else { break };
            if TRAILING.contains(&c) || (c == '.' && !keeps_period(core)) {
                trail.push(c.to_string());
                core = &core[..core.len() - c.len_utf8()];
            } else {
                break;
            }
        }
        out.extend(lead);
        if !core.is_empty() {
            let possessive = ["'s", "\u{2019}s"]
                .iter()
                .find(|p| core.len() > p.len() && core.ends_with(*p));
            match possessive {
                Some(p) => {
                    out.push(core[..core.len() - p.len()].to_string());
                    out.push("'s".to_string());
                }
                None => out.push(core.to_string()),
            }
        }
        out.extend(trail.into_iter().rev());
    }
    out
}
