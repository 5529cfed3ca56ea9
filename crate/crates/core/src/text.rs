//! Word normalization, tokenization and stopword lists.

use std::collections::HashSet;
use std::fs;
use std::path::Path;

use unicode_normalization::UnicodeNormalization;
use unicode_segmentation::UnicodeSegmentation;

const DEFAULT_EN: &str = include_str!("../data/stopwords_en.txt");
const DEFAULT_ZH: &str = include_str!("../data/stopwords_zh.txt");

/// Dictionary membership, used for longest-match segmentation of CJK runs.
pub trait Lexicon {
    fn contains(&self, word: &str) -> bool;

    /// Longest entry length in characters.
    fn max_word_chars(&self) -> usize;
}

/// A lexicon with no entries. CJK text falls back to single characters.
#[derive(Debug, Default, Clone, Copy)]
pub struct EmptyLexicon;

impl Lexicon for EmptyLexicon {
    fn contains(&self, _: &str) -> bool {
        false
    }

    fn max_word_chars(&self) -> usize {
        0
    }
}

/// NFC, lowercase, typographic apostrophe folded, English possessive `'s` dropped.
pub fn normalize_word(word: &str) -> String {
    let mut w: String = word
        .nfc()
        .flat_map(char::to_lowercase)
        .map(|c| if c == '\u{2019}' { '\'' } else { c })
        .collect();
    if w.chars().count() > 2 && w.ends_with("'s") {
        w.truncate(w.len() - 2);
    }
    w
}

/// Han ideographs and kana, which carry meaning as single characters.
pub fn is_cjk(c: char) -> bool {
    matches!(c as u32,
        0x3040..=0x30FF      // hiragana, katakana
        | 0x3400..=0x4DBF    // extension A
        | 0x4E00..=0x9FFF    // unified ideographs
        | 0xF900..=0xFAFF    // compatibility ideographs
        | 0x20000..=0x2FA1F) // extensions B-F, compatibility supplement
}

fn is_cjk_word(w: &str) -> bool {
    !w.is_empty() && w.chars().all(is_cjk)
}

/// Splits text into normalized word tokens.
pub trait Tokenizer: Send + Sync {
    fn tokenize(&self, text: &str, lexicon: &dyn Lexicon) -> Vec<String>;
}

/// Unicode word-boundary tokenizer.
///
/// Runs of CJK characters produce one token per character plus the greedy
/// longest-match segmentation of the run against the lexicon (words of two
/// or more characters only).
#[derive(Debug, Default, Clone, Copy)]
pub struct UnicodeTokenizer;

impl Tokenizer for UnicodeTokenizer {
    fn tokenize(&self, text: &str, lexicon: &dyn Lexicon) -> Vec<String> {
        let text: String = text.nfc().collect();
        let mut out = Vec::new();
        let mut run: Vec<char> = Vec::new();
        let mut run_end = 0usize;
        for (start, word) in text.unicode_word_indices() {
            if is_cjk_word(word) {
                if !run.is_empty() && start != run_end {
                    flush_cjk_run(&mut run, lexicon, &mut out);
                }
                run.extend(word.chars());
                run_end = start + word.len();
                continue;
            }
            flush_cjk_run(&mut run, lexicon, &mut out);
            let w = normalize_word(word);
            if !w.is_empty() {
                out.push(w);
            }
        }
        flush_cjk_run(&mut run, lexicon, &mut out);
        out
    }
}

fn flush_cjk_run(run: &mut Vec<char>, lexicon: &dyn Lexicon, out: &mut Vec<String>) {
    if run.is_empty() {
        return;
    }
    let max = lexicon.max_word_chars();
    let mut matches = vec![None; run.len()];
    let mut i = 0;
    while i < run.len() {
        let longest = (2..=max.min(run.len() - i))
            .rev()
            .map(|len| run[i..i + len].iter().collect::<String>())
            .find(|cand| lexicon.contains(cand));
        match longest {
            Some(word) => {
                let len = word.chars().count();
                matches[i] = Some(word);
                i += len;
            }
            None => i += 1,
        }
    }
    for (c, m) in run.iter().zip(matches) {
        out.push(normalize_word(&c.to_string()));
        if let Some(word) = m {
            out.push(word);
        }
    }
    run.clear();
}

/// Set of words ignored during keyword extraction.
#[derive(Debug, Clone, Default)]
pub struct Stopwords {
    words: HashSet<String>,
}

impl Stopwords {
    /// Bundled English and Chinese lists.
    pub fn default_lists() -> Self {
        let mut s = Self::default();
        s.extend_from_text(DEFAULT_EN);
        s.extend_from_text(DEFAULT_ZH);
        s
    }

    /// One word per line; `#` comments and blank lines skipped.
    pub fn from_text(text: &str) -> Self {
        let mut s = Self::default();
        s.extend_from_text(text);
        s
    }

    pub fn load(path: impl AsRef<Path>) -> std::io::Result<Self> {
        Ok(Self::from_text(&fs::read_to_string(path)?))
    }

    fn extend_from_text(&mut self, text: &str) {
        self.words.extend(
            text.lines()
                .map(str::trim)
                .filter(|l| !l.is_empty() && !l.starts_with('#'))
                .map(normalize_word),
        );
    }

    pub fn contains(&self, word: &str) -> bool {
        self.words.contains(word)
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Words(&'static [&'static str]);

    impl Lexicon for Words {
        fn contains(&self, word: &str) -> bool {
            self.0.contains(&word)
        }
        fn max_word_chars(&self) -> usize {
            self.0.iter().map(|w| w.chars().count()).max().unwrap_or(0)
        }
    }

    #[test]
    fn english_tokens() {
        let toks = UnicodeTokenizer.tokenize("I went to the Park… the day-before yesterday!", &EmptyLexicon);
        assert_eq!(
            toks,
            vec!["i", "went", "to", "the", "park", "the", "day", "before", "yesterday"]
        );
    }

    #[test]
    fn possessive_and_curly_apostrophe() {
        let toks = UnicodeTokenizer.tokenize("grandson’s studies, grandson's exam", &EmptyLexicon);
        assert_eq!(toks, vec!["grandson", "studies", "grandson", "exam"]);
    }

    #[test]
    fn nfc_normalization() {
        let decomposed = "cafe\u{301}";
        assert_eq!(UnicodeTokenizer.tokenize(decomposed, &EmptyLexicon), vec!["café"]);
    }

    #[test]
    fn cjk_characters_without_lexicon() {
        let toks = UnicodeTokenizer.tokenize("我喜欢公园", &EmptyLexicon);
        assert_eq!(toks, vec!["我", "喜", "欢", "公", "园"]);
    }

    #[test]
    fn cjk_longest_match() {
        let lex = Words(&["公园", "钓鱼", "公园里"]);
        let toks = UnicodeTokenizer.tokenize("在公园里钓鱼。好", &lex);
        assert_eq!(toks, vec!["在", "公", "公园里", "园", "里", "钓", "钓鱼", "鱼", "好"]);
    }

    #[test]
    fn mixed_scripts() {
        let lex = Words(&["公园"]);
        let toks = UnicodeTokenizer.tokenize("XiShan公园 park", &lex);
        assert_eq!(toks, vec!["xishan", "公", "公园", "园", "park"]);
    }

    #[test]
    fn stopword_lists() {
        let s = Stopwords::default_lists();
        assert!(s.contains("the"));
        assert!(s.contains("的"));
        assert!(!s.contains("park"));
        let custom = Stopwords::from_text("# comment\nFoo\n\n bar \n");
        assert_eq!(custom.len(), 2);
        assert!(custom.contains("foo"));
    }
}
