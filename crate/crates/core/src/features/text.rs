//! Surface text statistics used by the review features.

const FIRST_PERSON: [&str; 10] = [
    "i", "me", "my", "mine", "myself", "we", "us", "our", "ours", "ourselves",
];

/// Whitespace-separated tokens with leading/trailing non-alphanumerics
/// stripped; tokens that strip to nothing are not words.
pub fn words(text: &str) -> impl Iterator<Item = &str> {
    text.split_whitespace()
        .map(|tok| tok.trim_matches(|c: char| !c.is_alphanumeric()))
        .filter(|w| !w.is_empty())
}

/// At least two characters, at least one uppercase letter, no lowercase ones.
pub fn is_capital_word(word: &str) -> bool {
    word.chars().count() >= 2
        && word.chars().any(char::is_uppercase)
        && !word.chars().any(char::is_lowercase)
}

pub fn is_first_person(word: &str) -> bool {
    let lower = word.to_lowercase();
    FIRST_PERSON.contains(&lower.as_str())
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct TextStats {
    pub words: usize,
    pub capital_words: usize,
    pub first_person: usize,
    pub exclamations: usize,
}

impl TextStats {
    pub fn of(text: &str) -> Self {
        let mut stats = TextStats {
            exclamations: text.chars().filter(|&c| c == '!').count(),
            ..Default::default()
        };
        for word in words(text) {
            stats.words += 1;
            if is_capital_word(word) {
                stats.capital_words += 1;
            }
            if is_first_person(word) {
                stats.first_person += 1;
            }
        }
        stats
    }

    pub fn capital_ratio(&self) -> f64 {
        ratio(self.capital_words, self.words)
    }

    pub fn first_person_ratio(&self) -> f64 {
        ratio(self.first_person, self.words)
    }
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shouting_review() {
        let stats = TextStats::of("WOW GREAT food here!!");
        assert_eq!(stats.words, 4);
        assert_eq!(stats.capital_words, 2);
        assert_eq!(stats.capital_ratio(), 0.5);
        assert_eq!(stats.exclamations, 2);
    }

    #[test]
    fn punctuation_only_tokens_are_not_words() {
        let stats = TextStats::of("ok ... !!! -- fine.");
        assert_eq!(stats.words, 2);
        assert_eq!(stats.exclamations, 3);
    }

    #[test]
    fn single_letters_and_digits_are_not_capital_words() {
        assert!(!is_capital_word("I"));
        assert!(!is_capital_word("42"));
        assert!(is_capital_word("BBQ"));
        assert!(is_capital_word("A1"));
        assert!(!is_capital_word("Great"));
        assert!(is_capital_word("ÉTÉ"));
    }

    #[test]
    fn first_person_is_case_insensitive() {
        let stats = TextStats::of("I loved it, MY friends and we (us!) agree. You too.");
        assert_eq!(stats.first_person, 4);
        assert_eq!(stats.words, 11);
    }

    #[test]
    fn empty_text() {
        let stats = TextStats::of("   ");
        assert_eq!(stats, TextStats::default());
        assert_eq!(stats.capital_ratio(), 0.0);
        assert_eq!(stats.first_person_ratio(), 0.0);
    }
}
