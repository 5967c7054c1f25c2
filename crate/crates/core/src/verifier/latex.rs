//! Normalization of LaTeX answer strings before comparison.

/// Unit words dropped by default during normalization.
pub const DEFAULT_UNIT_WORDS: &str = include_str!("../../templates/unit_words.txt");

/// Ordered cleanup rules applied to an answer before string or symbolic comparison.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LatexNormalizer {
    pub unit_words: Vec<String>,
}

impl Default for LatexNormalizer {
    fn default() -> Self {
        Self::with_unit_words(DEFAULT_UNIT_WORDS)
    }
}

impl LatexNormalizer {
    /// Unit words are whitespace separated.
    pub fn with_unit_words(list: &str) -> Self {
        Self {
            unit_words: list.split_whitespace().map(str::to_string).collect(),
        }
    }

    pub fn normalize(&self, expr: &str) -> String {
        let s = strip_delimiters(expr);
        let s = remove_sizing(&s);
        let s = s.replace("\\dfrac", "\\frac").replace("\\tfrac", "\\frac");
        let s = unwrap_commands(&s, &["\\text", "\\mbox", "\\boxed"]);
        let s = s.replace("\\!", "").replace("\\,", "");
        let s = collapse_whitespace(&s);
        let s = drop_trailing_period(&s);
        let s = s.replace("^{\\circ}", "").replace("^\\circ", "");
        let s = self.drop_unit_words(&s);
        let s = collapse_whitespace(&s);
        let s = drop_trailing_period(&s);
        unwrap_single_char_scripts(&s)
    }

    fn drop_unit_words(&self, s: &str) -> String {
        let chars: Vec<char> = s.chars().collect();
        let mut out = String::with_capacity(s.len());
        let mut i = 0;
        while i < chars.len() {
            if chars[i].is_alphabetic() && (i == 0 || chars[i - 1] != '\\') {
                let start = i;
                while i < chars.len() && chars[i].is_alphabetic() {
                    i += 1;
                }
                let word: String = chars[start..i].iter().collect();
                let standalone = start == 0 || !chars[start - 1].is_alphabetic();
                if standalone && self.unit_words.iter().any(|u| u == &word) {
                    i = skip_unit_power(&chars, i);
                } else {
                    out.push_str(&word);
                }
                continue;
            }
            if chars[i] == '\\' {
                // copy a command name whole so its letters are never treated as a word
                out.push('\\');
                i += 1;
                while i < chars.len() && chars[i].is_ascii_alphabetic() {
                    out.push(chars[i]);
                    i += 1;
                }
                continue;
            }
            out.push(chars[i]);
            i += 1;
        }
        out
    }
}

/// Normalizes with the default unit-word list.
pub fn normalize_latex(expr: &str) -> String {
    LatexNormalizer::default().normalize(expr)
}

fn skip_unit_power(chars: &[char], i: usize) -> usize {
    let rest: String = chars[i..].iter().take(4).collect();
    for p in ["^{2}", "^{3}", "^2", "^3"] {
        if rest.starts_with(p) {
            return i + p.chars().count();
        }
    }
    i
}

fn strip_delimiters(s: &str) -> String {
    s.replace('$', "").replace("\\(", "").replace("\\)", "")
}

fn remove_sizing(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    let mut rest = s;
    while let Some(pos) = rest.find('\\') {
        out.push_str(&rest[..pos]);
        let tail = &rest[pos..];
        let matched = ["\\left", "\\right"].into_iter().find(|cmd| {
            tail.starts_with(cmd)
                && !tail[cmd.len()..]
                    .chars()
                    .next()
                    .is_some_and(|c| c.is_ascii_alphabetic())
        });
        match matched {
            Some(cmd) => rest = &tail[cmd.len()..],
            None => {
                out.push('\\');
                rest = &tail[1..];
            }
        }
    }
    out.push_str(rest);
    out
}

/// Replaces `\cmd{body}` with `body` for each listed command.
fn unwrap_commands(s: &str, commands: &[&str]) -> String {
    let mut s = s.to_string();
    for cmd in commands {
        let opener = format!("{cmd}{{");
        while let Some(start) = s.find(&opener) {
            let body_start = start + opener.len();
            let Some(body_end) = matching_brace(&s, body_start) else {
                break;
            };
            let body = s[body_start..body_end].to_string();
            s.replace_range(start..=body_end, &body);
        }
    }
    s
}

/// Index of the `}` closing a group whose content starts at `from`.
fn matching_brace(s: &str, from: usize) -> Option<usize> {
    let mut depth = 1usize;
    let mut escaped = false;
    for (offset, c) in s[from..].char_indices() {
        if escaped {
            escaped = false;
            continue;
        }
        match c {
            '\\' => escaped = true,
            '{' => depth += 1,
            '}' => {
                depth -= 1;
                if depth == 0 {
                    return Some(from + offset);
                }
            }
            _ => {}
        }
    }
    None
}

/// Collapses whitespace runs and keeps a single space only between two
/// alphanumeric characters (where removing it would merge tokens).
fn collapse_whitespace(s: &str) -> String {
    let chars: Vec<char> = s.trim().chars().collect();
    let mut out = String::with_capacity(chars.len());
    let mut i = 0;
    while i < chars.len() {
        if chars[i].is_whitespace() {
            let prev = out.chars().last();
            while i < chars.len() && chars[i].is_whitespace() {
                i += 1;
            }
            let next = chars.get(i).copied();
            if let (Some(p), Some(n)) = (prev, next) {
                if p.is_alphanumeric() && n.is_alphanumeric() {
                    out.push(' ');
                }
            }
            continue;
        }
        out.push(chars[i]);
        i += 1;
    }
    out
}

fn drop_trailing_period(s: &str) -> String {
    s.strip_suffix('.').unwrap_or(s).trim_end().to_string()
}

fn unwrap_single_char_scripts(s: &str) -> String {
    let chars: Vec<char> = s.chars().collect();
    let mut out = String::with_capacity(s.len());
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if (c == '^' || c == '_')
            && i + 3 < chars.len() + 1
            && chars.get(i + 1) == Some(&'{')
            && chars.get(i + 3) == Some(&'}')
            && chars.get(i + 2).is_some_and(|x| !matches!(x, '\\' | '{' | '}'))
        {
            out.push(c);
            out.push(chars[i + 2]);
            i += 4;
            continue;
        }
        out.push(c);
        i += 1;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sizing_commands_removed() {
        assert_eq!(normalize_latex("\\left( x+1 \\right)"), "(x+1)");
    }

    #[test]
    fn dfrac_rewritten() {
        assert_eq!(normalize_latex("\\dfrac{1}{2}"), "\\frac{1}{2}");
        assert_eq!(normalize_latex("\\tfrac{3}{4}"), "\\frac{3}{4}");
    }

    #[test]
    fn text_units_removed() {
        assert_eq!(normalize_latex("0.5 \\text{ cm}"), "0.5");
        assert_eq!(normalize_latex("12 \\mbox{inches}"), "12");
        assert_eq!(normalize_latex("25 \\text{cm}^2"), "25");
    }

    #[test]
    fn delimiters_and_spacing() {
        assert_eq!(normalize_latex("$\\frac{1}{2}$"), "\\frac{1}{2}");
        assert_eq!(normalize_latex("\\(3\\,000\\)"), "3000");
        assert_eq!(normalize_latex("x\\!+\\!1"), "x+1");
    }

    #[test]
    fn trailing_period_and_degrees() {
        assert_eq!(normalize_latex("5."), "5");
        assert_eq!(normalize_latex("90^\\circ"), "90");
        assert_eq!(normalize_latex("90^{\\circ}"), "90");
    }

    #[test]
    fn single_char_scripts_unwrapped() {
        assert_eq!(normalize_latex("x^{2}+a_{1}"), "x^2+a_1");
        assert_eq!(normalize_latex("x^{10}"), "x^{10}");
        assert_eq!(normalize_latex("x^{\\pi}"), "x^{\\pi}");
    }

    #[test]
    fn commands_are_not_unit_words_or_sizing() {
        assert_eq!(normalize_latex("\\rightarrow"), "\\rightarrow");
        assert_eq!(normalize_latex("\\sec x"), "\\sec x");
        assert_eq!(normalize_latex("2 \\pi r"), "2\\pi r");
    }

    #[test]
    fn unbalanced_text_passes_through() {
        assert_eq!(normalize_latex("\\text{oops"), "\\text{oops");
    }

    #[test]
    fn boxed_unwrapped() {
        assert_eq!(normalize_latex("\\boxed{\\dfrac{3}{4}}"), "\\frac{3}{4}");
    }

    #[test]
    fn custom_unit_list() {
        let n = LatexNormalizer::with_unit_words("apples");
        assert_eq!(n.normalize("3 apples"), "3");
        assert_eq!(n.normalize("3 cm"), "3 cm");
    }

    #[test]
    fn idempotent_on_examples() {
        for s in ["\\left( x+1 \\right)", "0.5 \\text{ cm}", "x^{2}", "\\dfrac{1}{2}."] {
            let once = normalize_latex(s);
            assert_eq!(normalize_latex(&once), once);
        }
    }
}
