use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("no <{tag}>…</{tag}> pair found")]
pub struct ExtractionFailed {
    pub tag: String,
}

/// Returns the trimmed content of the last well-formed `<tag>…</tag>` pair.
/// Pairs are matched left to right: each opening tag closes at the next closing tag.
pub fn extract_tagged(text: &str, tag: &str) -> Result<String, ExtractionFailed> {
    let open = format!("<{tag}>");
    let close = format!("</{tag}>");
    let mut last = None;
    let mut rest = text;
    while let Some(start) = rest.find(&open) {
        let body = &rest[start + open.len()..];
        match body.find(&close) {
            Some(end) => {
                last = Some(body[..end].trim());
                rest = &body[end + close.len()..];
            }
            None => break,
        }
    }
    last.map(str::to_string).ok_or_else(|| ExtractionFailed {
        tag: tag.to_string(),
    })
}
