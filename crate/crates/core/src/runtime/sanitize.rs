use crate::SanitizerKind;

/// Characters the string sanitizer treats as hazardous. A backslash
/// followed by one of these is an escaped pair and is left alone.
pub const ESCAPABLE: [char; 3] = ['\'', '"', '\\'];

/// Escapes quotes and stray backslashes without escaping anything twice.
///
/// ```
/// use assistkit::runtime::sanitize_string;
/// assert_eq!(sanitize_string("';DROP TABLE BOOKS;--"), "\\';DROP TABLE BOOKS;--");
/// assert_eq!(sanitize_string("a\\'b"), "a\\'b");
/// assert_eq!(sanitize_string("abc\\"), "abc\\\\");
/// ```
pub fn sanitize_string(s: &str) -> String {
    let mut out = String::with_capacity(s.len() + s.len() / 8);
    let mut chars = s.chars().peekable();
    while let Some(c) = chars.next() {
        match c {
            '\\' => match chars.peek() {
                Some(&next) if ESCAPABLE.contains(&next) => {
                    out.push('\\');
                    out.push(next);
                    chars.next();
                }
                _ => out.push_str("\\\\"),
            },
            '\'' | '"' => {
                out.push('\\');
                out.push(c);
            }
            _ => out.push(c),
        }
    }
    out
}

/// `-? digits (. digits)?`, optionally surrounded by whitespace.
pub fn is_numeral(s: &str) -> bool {
    let body = s.trim().as_bytes();
    let digits = |from: usize| {
        body[from..]
            .iter()
            .take_while(|b| b.is_ascii_digit())
            .count()
    };
    let mut i = usize::from(body.first() == Some(&b'-'));
    let int = digits(i);
    if int == 0 {
        return false;
    }
    i += int;
    if body.get(i) == Some(&b'.') {
        let frac = digits(i + 1);
        if frac == 0 {
            return false;
        }
        i += 1 + frac;
    }
    i == body.len()
}

/// Returns `s` unchanged if it is a numeral, otherwise the SQL keyword `null`.
pub fn sanitize_numeric(s: &str) -> String {
    if is_numeral(s) {
        s.to_string()
    } else {
        "null".to_string()
    }
}

pub fn sanitize(kind: SanitizerKind, s: &str) -> String {
    match kind {
        SanitizerKind::String => sanitize_string(s),
        SanitizerKind::Numeric => sanitize_numeric(s),
    }
}
