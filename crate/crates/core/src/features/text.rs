//! Tokenizer, sentence splitter and a closed-list part-of-speech proxy.
//!
//! Tokenization lowercases words and emits two kinds of tokens: maximal
//! runs of alphanumeric characters (an apostrophe is kept when it sits
//! between two alphanumerics, as in `don't`), and every other
//! non-whitespace character as a token of its own.

pub fn tokenize(text: &str) -> Vec<String> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let mut word = String::new();
    for (i, &ch) in chars.iter().enumerate() {
        let inner_apostrophe = (ch == '\'' || ch == '\u{2019}')
            && !word.is_empty()
            && chars.get(i + 1).is_some_and(|c| c.is_alphanumeric());
        if ch.is_alphanumeric() || inner_apostrophe {
            let lower: String = ch.to_lowercase().collect();
            if lower.chars().all(|c| c.is_alphanumeric() || c == ch) {
                word.push_str(&lower);
            } else {
                word.push(ch);
            }
            continue;
        }
        if !word.is_empty() {
            out.push(std::mem::take(&mut word));
        }
        if !ch.is_whitespace() {
            out.push(ch.to_string());
        }
    }
    if !word.is_empty() {
        out.push(word);
    }
    out
}

pub fn is_word(token: &str) -> bool {
    token.chars().any(char::is_alphanumeric)
}

/// Segments of text separated by runs of `.`, `!` or `?` that contain at
/// least one alphanumeric character, each paired with its terminator (or
/// `None` for a trailing unterminated segment).
pub fn sentences(text: &str) -> Vec<(&str, Option<char>)> {
    let mut out = Vec::new();
    let mut start = 0;
    let mut iter = text.char_indices().peekable();
    while let Some((i, ch)) = iter.next() {
        if matches!(ch, '.' | '!' | '?') {
            let seg = &text[start..i];
            let mut last = ch;
            let mut end = i + ch.len_utf8();
            while let Some(&(j, c)) = iter.peek() {
                if !matches!(c, '.' | '!' | '?') {
                    break;
                }
                last = c;
                end = j + c.len_utf8();
                iter.next();
            }
            if seg.chars().any(char::is_alphanumeric) {
                out.push((seg, Some(last)));
            }
            start = end;
        }
    }
    let tail = &text[start..];
    if tail.chars().any(char::is_alphanumeric) {
        out.push((tail, None));
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PosProxy {
    Noun,
    Verb,
    Adjective,
    Adverb,
    Pronoun,
}

const PRONOUNS: &[&str] = &[
    "i",
    "me",
    "my",
    "mine",
    "myself",
    "you",
    "your",
    "yours",
    "yourself",
    "yourselves",
    "he",
    "him",
    "his",
    "himself",
    "she",
    "her",
    "hers",
    "herself",
    "it",
    "its",
    "itself",
    "we",
    "us",
    "our",
    "ours",
    "ourselves",
    "they",
    "them",
    "their",
    "theirs",
    "themselves",
    "who",
    "whom",
    "whose",
    "someone",
    "anyone",
    "everyone",
    "somebody",
    "anybody",
    "everybody",
    "nobody",
    "something",
    "anything",
    "everything",
    "nothing",
    "i'm",
    "you're",
    "it's",
    "we're",
    "they're",
    "i've",
];

const VERBS: &[&str] = &[
    "is", "are", "was", "were", "be", "been", "being", "am", "have", "has", "had", "do", "does", "did", "can", "could",
    "will", "would", "shall", "should", "may", "might", "must", "get", "gets", "got", "go", "goes", "went", "make",
    "makes", "made", "know", "knows", "knew", "think", "thinks", "thought", "take", "takes", "took", "see", "sees",
    "saw", "come", "comes", "came", "want", "wants", "need", "needs", "give", "gives", "gave", "say", "says", "said",
    "tell", "tells", "told", "ask", "asks", "try", "tries", "pay", "pays", "paid", "let", "put", "keep", "find", "use",
    "work", "apply", "help", "call", "leave", "left", "bring", "brought", "buy", "bought", "send", "sent", "stay",
    "live", "wonder", "extend", "renew", "change", "visit", "can't", "don't", "doesn't", "didn't", "won't", "isn't",
    "aren't", "wasn't",
];

const ADVERBS: &[&str] = &[
    "very", "not", "also", "just", "only", "too", "here", "there", "now", "then", "always", "never", "often", "still",
    "already", "soon", "again", "almost", "even", "ever", "yet", "quite", "rather", "maybe", "perhaps", "however",
    "why", "how", "when", "where", "well", "much", "more", "most", "less", "least", "so", "once", "twice", "abroad",
    "back", "away",
];

const ADJECTIVES: &[&str] = &[
    "good",
    "bad",
    "new",
    "old",
    "big",
    "small",
    "great",
    "best",
    "better",
    "worse",
    "worst",
    "high",
    "low",
    "long",
    "short",
    "easy",
    "hard",
    "free",
    "full",
    "sure",
    "nice",
    "same",
    "other",
    "different",
    "able",
    "possible",
    "many",
    "few",
    "little",
    "own",
    "right",
    "wrong",
    "true",
    "last",
    "next",
    "first",
    "local",
    "cheap",
    "expensive",
    "valid",
    "legal",
    "happy",
];

const FUNCTION_WORDS: &[&str] = &[
    "a", "an", "the", "this", "that", "these", "those", "and", "or", "but", "if", "because", "as", "of", "in", "on",
    "at", "to", "for", "with", "by", "from", "about", "into", "over", "under", "after", "before", "between", "through",
    "during", "without", "within", "up", "down", "out", "off", "than", "what", "which", "any", "some", "all", "each",
    "every", "no", "yes", "both", "either", "neither", "such", "whether", "while", "until", "since", "per", "via",
];

const ADJECTIVE_SUFFIXES: &[&str] = &["ous", "ful", "able", "ible", "ive", "less", "ical", "ish"];

/// Heuristic class of a lowercase token; `None` for punctuation, numbers
/// and function words.
///
/// Closed lists are consulted first, in the order pronoun, verb, adverb,
/// adjective, function word; after that suffix rules apply: `-ly` adverb,
/// `-ing`/`-ed` verb, a small set of adjectival suffixes, and any other
/// alphabetic token is a noun.
pub fn pos_proxy(token: &str) -> Option<PosProxy> {
    if !token.chars().any(char::is_alphabetic) {
        return None;
    }
    let lists: [(&[&str], PosProxy); 4] = [
        (PRONOUNS, PosProxy::Pronoun),
        (VERBS, PosProxy::Verb),
        (ADVERBS, PosProxy::Adverb),
        (ADJECTIVES, PosProxy::Adjective),
    ];
    for (list, class) in lists {
        if list.contains(&token) {
            return Some(class);
        }
    }
    if FUNCTION_WORDS.contains(&token) {
        return None;
    }
    let n = token.chars().count();
    if n > 4 && token.ends_with("ly") {
        return Some(PosProxy::Adverb);
    }
    if n > 4 && (token.ends_with("ing") || token.ends_with("ed")) {
        return Some(PosProxy::Verb);
    }
    if n > 5 && ADJECTIVE_SUFFIXES.iter().any(|s| token.ends_with(s)) {
        return Some(PosProxy::Adjective);
    }
    Some(PosProxy::Noun)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct PosCounts {
    pub nouns: usize,
    pub verbs: usize,
    pub adjectives: usize,
    pub adverbs: usize,
    pub pronouns: usize,
}

pub fn pos_counts(tokens: &[String]) -> PosCounts {
    let mut c = PosCounts::default();
    for t in tokens {
        match pos_proxy(t) {
            Some(PosProxy::Noun) => c.nouns += 1,
            Some(PosProxy::Verb) => c.verbs += 1,
            Some(PosProxy::Adjective) => c.adjectives += 1,
            Some(PosProxy::Adverb) => c.adverbs += 1,
            Some(PosProxy::Pronoun) => c.pronouns += 1,
            None => {}
        }
    }
    c
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn tokenizer_examples() {
        assert!(tokenize("").is_empty());
        assert_eq!(
            tokenize("How can I extend a family visit visa?"),
            ["how", "can", "i", "extend", "a", "family", "visit", "visa", "?"]
        );
        assert_eq!(
            tokenize("months.Any  don't, 'x'"),
            ["months", ".", "any", "don't", ",", "'", "x", "'"]
        );
        assert_eq!(tokenize("Ünïcode ÄB"), ["ünïcode", "äb"]);
    }

    #[test]
    fn sentence_splitting() {
        assert!(sentences("").is_empty());
        assert!(sentences("?!...").is_empty());
        let s = sentences("Hi there!!! How are you? fine");
        assert_eq!(s.len(), 3);
        assert_eq!(s[0].1, Some('!'));
        assert_eq!(s[1].1, Some('?'));
        assert_eq!(s[2], (" fine", None));
        assert_eq!(sentences("Is it ok?!").len(), 1);
    }

    #[test]
    fn pos_proxy_rules() {
        assert_eq!(pos_proxy("she"), Some(PosProxy::Pronoun));
        assert_eq!(pos_proxy("running"), Some(PosProxy::Verb));
        assert_eq!(pos_proxy("quickly"), Some(PosProxy::Adverb));
        assert_eq!(pos_proxy("beautiful"), Some(PosProxy::Adjective));
        assert_eq!(pos_proxy("visa"), Some(PosProxy::Noun));
        assert_eq!(pos_proxy("the"), None);
        assert_eq!(pos_proxy("?"), None);
        assert_eq!(pos_proxy("2016"), None);
    }

    proptest! {
        #[test]
        fn tokenize_is_idempotent_on_words(words in proptest::collection::vec("[a-z0-9]{1,8}", 0..12)) {
            let tokens = tokenize(&words.join(" "));
            prop_assert_eq!(&tokens, &words);
            prop_assert_eq!(tokenize(&tokens.join(" ")), tokens);
        }

        #[test]
        fn tokenize_round_trips_its_output(text in "\\PC{0,60}") {
            let tokens = tokenize(&text);
            prop_assert_eq!(tokenize(&tokens.join(" ")), tokens);
        }
    }
}
