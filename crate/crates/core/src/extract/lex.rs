//! Shared lexing helpers: literal/comment masking, tokenizing, line lookup.

/// Blanks out comments and string/char literals with spaces, keeping every
/// byte offset and newline in place.
pub(crate) fn mask_c_like(text: &str) -> String {
    let bytes = text.as_bytes();
    let mut out = bytes.to_vec();
    let mut i = 0;
    let blank = |out: &mut [u8], from: usize, to: usize| {
        for b in &mut out[from..to.min(bytes.len())] {
            if *b != b'\n' {
                *b = b' ';
            }
        }
    };
    while i < bytes.len() {
        match bytes[i] {
            b'/' if bytes.get(i + 1) == Some(&b'/') => {
                let end = find_from(bytes, i, b"\n").unwrap_or(bytes.len());
                blank(&mut out, i, end);
                i = end;
            }
            b'/' if bytes.get(i + 1) == Some(&b'*') => {
                let end = find_from(bytes, i + 2, b"*/").map_or(bytes.len(), |e| e + 2);
                blank(&mut out, i, end);
                i = end;
            }
            b'"' if bytes[i..].starts_with(b"\"\"\"") => {
                let end = find_from(bytes, i + 3, b"\"\"\"").map_or(bytes.len(), |e| e + 3);
                blank(&mut out, i, end);
                i = end;
            }
            q @ (b'"' | b'\'') => {
                let end = literal_end(bytes, i + 1, q);
                blank(&mut out, i, end);
                i = end;
            }
            _ => i += 1,
        }
    }
    into_string(out)
}

/// Python flavour: `#` comments, single/triple quoted strings with prefixes.
pub(crate) fn mask_python(text: &str) -> String {
    let bytes = text.as_bytes();
    let mut out = bytes.to_vec();
    let mut i = 0;
    let blank = |out: &mut [u8], from: usize, to: usize| {
        for b in &mut out[from..to.min(bytes.len())] {
            if *b != b'\n' {
                *b = b' ';
            }
        }
    };
    while i < bytes.len() {
        match bytes[i] {
            b'#' => {
                let end = find_from(bytes, i, b"\n").unwrap_or(bytes.len());
                blank(&mut out, i, end);
                i = end;
            }
            q @ (b'"' | b'\'') => {
                let triple = [q, q, q];
                let end = if bytes[i..].starts_with(&triple) {
                    find_from(bytes, i + 3, &triple).map_or(bytes.len(), |e| e + 3)
                } else {
                    literal_end(bytes, i + 1, q)
                };
                blank(&mut out, i, end);
                i = end;
            }
            _ => i += 1,
        }
    }
    into_string(out)
}

fn find_from(hay: &[u8], from: usize, needle: &[u8]) -> Option<usize> {
    if from >= hay.len() {
        return None;
    }
    hay[from..].windows(needle.len()).position(|w| w == needle).map(|p| p + from)
}

/// End offset (exclusive) of a quoted literal whose body starts at `i`.
/// Unterminated literals stop at end of line.
fn literal_end(bytes: &[u8], mut i: usize, quote: u8) -> usize {
    while i < bytes.len() {
        match bytes[i] {
            b'\\' => i += 2,
            b'\n' => return i,
            b if b == quote => return i + 1,
            _ => i += 1,
        }
    }
    bytes.len()
}

fn into_string(bytes: Vec<u8>) -> String {
    // Blanked runs start and end on ASCII bytes, so this stays valid UTF-8.
    match String::from_utf8(bytes) {
        Ok(s) => s,
        Err(e) => String::from_utf8_lossy(e.as_bytes()).into_owned(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct Tok<'a> {
    pub text: &'a str,
    pub off: usize,
}

impl Tok<'_> {
    pub fn is(&self, s: &str) -> bool {
        self.text == s
    }

    pub fn is_ident(&self) -> bool {
        self.text.chars().next().is_some_and(|c| c.is_alphabetic() || c == '_' || c == '$')
    }

    pub fn is_capitalized(&self) -> bool {
        self.text.chars().next().is_some_and(char::is_uppercase)
    }
}

/// Identifiers and single-character punctuation; numbers and whitespace are
/// skipped.
pub(crate) fn tokenize(masked: &str) -> Vec<Tok<'_>> {
    let mut toks = Vec::new();
    let mut chars = masked.char_indices().peekable();
    while let Some((i, c)) = chars.next() {
        if c.is_whitespace() {
            continue;
        }
        if c.is_alphabetic() || c == '_' || c == '$' {
            let mut end = i + c.len_utf8();
            while let Some(&(j, d)) = chars.peek() {
                if d.is_alphanumeric() || d == '_' || d == '$' {
                    end = j + d.len_utf8();
                    chars.next();
                } else {
                    break;
                }
            }
            toks.push(Tok { text: &masked[i..end], off: i });
        } else if c.is_ascii_digit() {
            while let Some(&(_, d)) = chars.peek() {
                if d.is_alphanumeric() || d == '_' || d == '.' {
                    chars.next();
                } else {
                    break;
                }
            }
        } else {
            toks.push(Tok { text: &masked[i..i + c.len_utf8()], off: i });
        }
    }
    toks
}

/// Maps byte offsets to 1-based line numbers.
pub(crate) struct LineIndex {
    starts: Vec<usize>,
}

impl LineIndex {
    pub fn new(text: &str) -> Self {
        let starts = std::iter::once(0)
            .chain(text.match_indices('\n').map(|(i, _)| i + 1))
            .collect();
        Self { starts }
    }

    pub fn line(&self, offset: usize) -> usize {
        match self.starts.binary_search(&offset) {
            Ok(i) => i + 1,
            Err(i) => i,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn masks_comments_and_strings() {
        let src = "a = \"x(y)\"; // c()\n/* d\ne */ b('z');";
        let m = mask_c_like(src);
        assert_eq!(m.len(), src.len());
        assert!(!m.contains('x') && !m.contains('d') && !m.contains('z'));
        assert_eq!(m.matches('\n').count(), 2);
        assert!(m.contains("b(   )"));
    }

    #[test]
    fn masks_python_triple_quotes() {
        let src = "def f():\n    \"\"\"doc Foo()\n    more\"\"\"\n    return Bar() # Baz()\n";
        let m = mask_python(src);
        assert!(!m.contains("Foo") && !m.contains("Baz"));
        assert!(m.contains("Bar()"));
        assert_eq!(m.matches('\n').count(), 4);
    }

    #[test]
    fn tokens_and_lines() {
        let text = "class A<T> {\n  int x = 10L;\n}";
        let toks = tokenize(text);
        let words: Vec<_> = toks.iter().map(|t| t.text).collect();
        assert_eq!(words, ["class", "A", "<", "T", ">", "{", "int", "x", "=", ";", "}"]);
        let idx = LineIndex::new(text);
        assert_eq!(idx.line(0), 1);
        assert_eq!(idx.line(toks[6].off), 2);
        assert_eq!(idx.line(text.len() - 1), 3);
    }

    #[test]
    fn unicode_survives_masking() {
        let m = mask_c_like("s = \"héllo\"; é");
        assert!(m.ends_with('é'));
    }
}
