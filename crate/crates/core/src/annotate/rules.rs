//! Pattern rules for entities the gazetteer does not list.
//!
//! Applied at each word not already covered by a gazetteer match, first
//! rule wins:
//!
//! | type | pattern |
//! |------|---------|
//! | PERSON | title (`Mr.`, `Ms.`, `Dr.`, ...) followed by capitalised words |
//! | DATE | capitalised month with optional day and year; weekday; year (`1990`, `1990s`); `yesterday`/`today`/`tomorrow`; `last`/`next`/`this` + week, month, year, season or weekday |
//! | TIME | clock time (`3`, `3:30`) followed by `a.m.`/`p.m.`; bare `3:30`; `noon`, `midnight`, `tonight`; `last`/`this` + morning, afternoon, evening or night |
//! | MONEY | currency symbol amount with optional scale word; amount + dollars/euros/cents |
//! | PERCENT | `12%`, `12.5%`; amount + `percent` |
//! | QUANTITY | amount + unit of measure |
//! | ORDINAL | `1st`, `22nd`, ...; `first` to `twelfth` |
//! | CARDINAL | digits with optional scale word; number word with optional scale word |

use std::sync::LazyLock;

use regex::Regex;

use super::EntityType;

const TITLES: &[&str] = &[
    "mr.", "mrs.", "ms.", "dr.", "prof.", "gov.", "sen.", "rep.", "gen.", "lt.", "col.", "sgt.",
    "capt.", "rev.",
];
const MONTHS: &[&str] = &[
    "january", "february", "march", "april", "may", "june", "july", "august", "september",
    "october", "november", "december", "jan.", "feb.", "mar.", "apr.", "aug.", "sept.", "sep.",
    "oct.", "nov.", "dec.",
];
const WEEKDAYS: &[&str] = &[
    "monday", "tuesday", "wednesday", "thursday", "friday", "saturday", "sunday",
];
const RELATIVE_DAYS: &[&str] = &["yesterday", "today", "tomorrow"];
const PERIODS: &[&str] = &[
    "week", "month", "year", "weekend", "summer", "winter", "spring", "fall", "season",
];
const TIME_WORDS: &[&str] = &["noon", "midnight", "tonight"];
const DAY_PARTS: &[&str] = &["morning", "afternoon", "evening", "night"];
const MERIDIEM: &[&str] = &["a.m.", "p.m.", "am", "pm"];
const SCALES: &[&str] = &["hundred", "thousand", "million", "billion", "trillion"];
const CURRENCIES: &[&str] = &["dollars", "dollar", "euros", "euro", "cents", "yen"];
const UNITS: &[&str] = &[
    "miles", "mile", "feet", "foot", "inches", "inch", "yards", "meters", "metres", "kilometers",
    "km", "acres", "acre", "tons", "pounds", "ounces", "gallons", "degrees", "square", "hectares",
];
const ORDINAL_WORDS: &[&str] = &[
    "first", "second", "third", "fourth", "fifth", "sixth", "seventh", "eighth", "ninth", "tenth",
    "eleventh", "twelfth",
];
const NUMBER_WORDS: &[&str] = &[
    "one", "two", "three", "four", "five", "six", "seven", "eight", "nine", "ten", "eleven",
    "twelve", "thirteen", "fourteen", "fifteen", "sixteen", "seventeen", "eighteen", "nineteen",
    "twenty", "thirty", "forty", "fifty", "sixty", "seventy", "eighty", "ninety", "hundreds",
    "thousands", "millions", "dozens", "dozen",
];

static YEAR: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"^(1[6-9]|20)\d\d(s|'s)?$").unwrap());
static DAY: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^(0?[1-9]|[12]\d|3[01])(st|nd|rd|th)?$").unwrap());
static HOUR: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^(0?[1-9]|1[0-2])(:[0-5]\d)?$").unwrap());
static CLOCK: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"^([01]?\d|2[0-3]):[0-5]\d$").unwrap());
static MONEY: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^[$€£]\d[\d,]*(\.\d+)?[kmb]?$").unwrap());
static PERCENT: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"^\d+(\.\d+)?%$").unwrap());
static NUMBER: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"^\d[\d,]*(\.\d+)?$").unwrap());
static ORDINAL: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"^\d+(st|nd|rd|th)$").unwrap());

fn capitalised(word: &str) -> bool {
    word.starts_with(|c: char| c.is_uppercase())
}

fn is_in(word: &str, list: &[&str]) -> bool {
    list.contains(&word.to_lowercase().as_str())
}

fn is_amount(word: &str) -> bool {
    NUMBER.is_match(word) || is_in(word, NUMBER_WORDS)
}

/// Sums the lengths of optional trailing parts that match in order.
fn optional_run(words: &[&str], parts: &[&dyn Fn(&str) -> bool]) -> usize {
    let mut n = 0;
    for part in parts {
        match words.get(n) {
            Some(w) if part(w) => n += 1,
            _ => {}
        }
    }
    n
}

fn person(w: &[&str]) -> Option<usize> {
    if !is_in(w[0], TITLES) {
        return None;
    }
    let names = w[1..]
        .iter()
        .take_while(|x| capitalised(x) && x.chars().any(char::is_alphabetic))
        .count();
    (names > 0).then_some(1 + names)
}

fn date(w: &[&str]) -> Option<usize> {
    let first = w[0];
    if capitalised(first) && is_in(first, MONTHS) {
        let day = |x: &str| DAY.is_match(x);
        let year = |x: &str| YEAR.is_match(x);
        let mut n = 1 + optional_run(&w[1..], &[&day]);
        // a comma only belongs to the date when a year follows it
        if w.get(n) == Some(&",") && w.get(n + 1).is_some_and(|x| year(x)) {
            n += 2;
        } else if w.get(n).is_some_and(|x| year(x)) {
            n += 1;
        }
        return Some(n);
    }
    if capitalised(first) && is_in(first, WEEKDAYS) {
        return Some(1);
    }
    if YEAR.is_match(first) || is_in(first, RELATIVE_DAYS) {
        return Some(1);
    }
    if is_in(first, &["last", "next", "this"])
        && w.get(1).is_some_and(|x| is_in(x, PERIODS) || (capitalised(x) && is_in(x, WEEKDAYS)))
    {
        return Some(2);
    }
    None
}

fn time(w: &[&str]) -> Option<usize> {
    if HOUR.is_match(w[0]) && w.get(1).is_some_and(|x| is_in(x, MERIDIEM)) {
        return Some(2);
    }
    if CLOCK.is_match(w[0]) || is_in(w[0], TIME_WORDS) {
        return Some(1);
    }
    if is_in(w[0], &["last", "this"]) && w.get(1).is_some_and(|x| is_in(x, DAY_PARTS)) {
        return Some(2);
    }
    None
}

fn money(w: &[&str]) -> Option<usize> {
    if MONEY.is_match(w[0]) {
        return Some(1 + optional_run(&w[1..], &[&|x| is_in(x, SCALES)]));
    }
    if NUMBER.is_match(w[0]) {
        let scale = optional_run(&w[1..], &[&|x| is_in(x, SCALES)]);
        if w.get(1 + scale).is_some_and(|x| is_in(x, CURRENCIES)) {
            return Some(2 + scale);
        }
    }
    None
}

fn percent(w: &[&str]) -> Option<usize> {
    if PERCENT.is_match(w[0]) {
        return Some(1);
    }
    if is_amount(w[0]) && w.get(1).is_some_and(|x| is_in(x, &["percent"])) {
        return Some(2);
    }
    None
}

fn quantity(w: &[&str]) -> Option<usize> {
    if is_amount(w[0]) && w.get(1).is_some_and(|x| is_in(x, UNITS)) {
        return Some(2);
    }
    None
}

fn ordinal(w: &[&str]) -> Option<usize> {
    (ORDINAL.is_match(w[0]) || is_in(w[0], ORDINAL_WORDS)).then_some(1)
}

fn cardinal(w: &[&str]) -> Option<usize> {
    is_amount(w[0]).then(|| 1 + optional_run(&w[1..], &[&|x| is_in(x, SCALES)]))
}

/// Tries every rule at the start of `window`. Returns the matched length and type.
pub fn match_at(window: &[&str]) -> Option<(usize, EntityType)> {
    if window.is_empty() {
        return None;
    }
    let rules: [(fn(&[&str]) -> Option<usize>, EntityType); 8] = [
        (person, EntityType::Person),
        (date, EntityType::Date),
        (time, EntityType::Time),
        (money, EntityType::Money),
        (percent, EntityType::Percent),
        (quantity, EntityType::Quantity),
        (ordinal, EntityType::Ordinal),
        (cardinal, EntityType::Cardinal),
    ];
    rules
        .iter()
        .find_map(|(rule, t)| rule(window).map(|n| (n.min(window.len()), *t)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(s: &str) -> Option<(usize, EntityType)> {
        let w: Vec<&str> = s.split(' ').collect();
        match_at(&w)
    }

    #[test]
    fn rule_table() {
        use EntityType::*;
        let cases = [
            ("Dr. Ana Ruiz spoke", Some((3, Person))),
            ("May 5 , 2015 in", Some((4, Date))),
            ("May 5 , in", Some((2, Date))),
            ("may be", None),
            ("Monday night", Some((1, Date))),
            ("1990s", Some((1, Date))),
            ("last week", Some((2, Date))),
            ("3:30 p.m.", Some((2, Time))),
            ("noon", Some((1, Time))),
            ("$4.5 million", Some((2, Money))),
            ("20 dollars", Some((2, Money))),
            ("12%", Some((1, Percent))),
            ("five percent", Some((2, Percent))),
            ("300 feet", Some((2, Quantity))),
            ("3rd", Some((1, Ordinal))),
            ("second", Some((1, Ordinal))),
            ("two million people", Some((2, Cardinal))),
            ("1,200", Some((1, Cardinal))),
            ("museum", None),
        ];
        for (text, want) in cases {
            assert_eq!(m(text), want, "{text}");
        }
    }
}
