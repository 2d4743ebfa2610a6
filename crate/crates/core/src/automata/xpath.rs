use std::fmt;

use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum XPathError {
    #[error("syntax error at {position}: {message}")]
    Syntax { position: usize, message: String },
    #[error("unsupported XPath feature: {0}")]
    Unsupported(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Axis {
    Child,
    Descendant,
    FollowingSibling,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum NodeTest {
    Name(String),
    Star,
    Text,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Step {
    pub axis: Axis,
    pub test: NodeTest,
}

/// An absolute location path over the child, descendant and
/// following-sibling axes, without predicates.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct XPathQuery {
    pub steps: Vec<Step>,
}

impl fmt::Display for XPathQuery {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for s in &self.steps {
            match s.axis {
                Axis::Child => write!(f, "/")?,
                Axis::Descendant => write!(f, "//")?,
                Axis::FollowingSibling => write!(f, "/following-sibling::")?,
            }
            match &s.test {
                NodeTest::Name(n) => write!(f, "{n}")?,
                NodeTest::Star => write!(f, "*")?,
                NodeTest::Text => write!(f, "text()")?,
            }
        }
        Ok(())
    }
}

fn is_name_start(c: char) -> bool {
    c.is_alphabetic() || c == '_'
}

fn is_name_char(c: char) -> bool {
    c.is_alphanumeric() || matches!(c, '_' | '-' | '.')
}

pub fn parse_xpath(src: &str) -> Result<XPathQuery, XPathError> {
    let s = src.trim();
    let syntax = |position: usize, message: &str| XPathError::Syntax {
        position,
        message: message.to_string(),
    };
    let mut steps = Vec::new();
    let mut pos = 0;
    if s.is_empty() {
        return Err(syntax(0, "empty query"));
    }
    while pos < s.len() {
        let rest = &s[pos..];
        let mut axis = if rest.starts_with("//") {
            pos += 2;
            Axis::Descendant
        } else if rest.starts_with('/') {
            pos += 1;
            Axis::Child
        } else {
            return Err(syntax(pos, "expected '/' or '//'"));
        };
        let rest = &s[pos..];
        if let Some(colons) = rest.find("::") {
            let name = &rest[..colons];
            if !name.is_empty() && name.chars().all(|c| is_name_char(c)) {
                let explicit = match name {
                    "child" => Axis::Child,
                    "descendant" => Axis::Descendant,
                    "following-sibling" => Axis::FollowingSibling,
                    other => return Err(XPathError::Unsupported(format!("axis {other}"))),
                };
                if axis == Axis::Descendant {
                    return Err(XPathError::Unsupported(format!("'//' followed by {name}::")));
                }
                axis = explicit;
                pos += colons + 2;
            }
        }
        if axis == Axis::FollowingSibling && steps.is_empty() {
            return Err(XPathError::Unsupported("following-sibling as the first step".into()));
        }
        let rest = &s[pos..];
        let test = if rest.starts_with('*') {
            pos += 1;
            NodeTest::Star
        } else if rest.starts_with("text()") {
            pos += 6;
            NodeTest::Text
        } else if rest.starts_with('@') {
            return Err(XPathError::Unsupported("attribute axis".into()));
        } else if rest.starts_with('.') {
            return Err(XPathError::Unsupported("self and parent steps".into()));
        } else {
            let end = rest
                .char_indices()
                .find(|&(i, c)| if i == 0 { !is_name_start(c) } else { !is_name_char(c) })
                .map_or(rest.len(), |(i, _)| i);
            if end == 0 {
                return Err(syntax(pos, "expected a name test"));
            }
            if rest[end..].starts_with('(') {
                return Err(XPathError::Unsupported(format!("node test {}()", &rest[..end])));
            }
            pos += end;
            NodeTest::Name(rest[..end].to_string())
        };
        steps.push(Step { axis, test });
        match s[pos..].chars().next() {
            None | Some('/') => {}
            Some('[') => return Err(XPathError::Unsupported("filters".into())),
            Some('|') => return Err(XPathError::Unsupported("union".into())),
            Some(_) => return Err(syntax(pos, "unexpected character")),
        }
    }
    Ok(XPathQuery { steps })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn name(n: &str) -> NodeTest {
        NodeTest::Name(n.into())
    }

    #[test]
    fn benchmark_shapes() {
        let q = parse_xpath("//listitem//keyword").unwrap();
        assert_eq!(
            q.steps,
            [
                Step { axis: Axis::Descendant, test: name("listitem") },
                Step { axis: Axis::Descendant, test: name("keyword") },
            ]
        );
        let q = parse_xpath("/site/regions").unwrap();
        assert_eq!(q.steps.iter().map(|s| s.axis).collect::<Vec<_>>(), [Axis::Child, Axis::Child]);
        let q = parse_xpath("/site/regions/*/item//keyword").unwrap();
        assert_eq!(q.steps[2].test, NodeTest::Star);
        let q = parse_xpath("//a/following-sibling::b/text()").unwrap();
        assert_eq!(q.steps[1].axis, Axis::FollowingSibling);
        assert_eq!(q.steps[2].test, NodeTest::Text);
        assert_eq!(q.to_string(), "//a/following-sibling::b/text()");
    }

    #[test]
    fn rejected_inputs() {
        assert!(matches!(parse_xpath("//a[b]"), Err(XPathError::Unsupported(_))));
        assert!(matches!(parse_xpath("/a/parent::b"), Err(XPathError::Unsupported(_))));
        assert!(matches!(parse_xpath("/a/@id"), Err(XPathError::Unsupported(_))));
        assert!(matches!(parse_xpath("/following-sibling::a"), Err(XPathError::Unsupported(_))));
        assert!(matches!(parse_xpath("a/b"), Err(XPathError::Syntax { .. })));
        assert!(matches!(parse_xpath("/a/"), Err(XPathError::Syntax { .. })));
        assert!(matches!(parse_xpath(""), Err(XPathError::Syntax { .. })));
        assert!(matches!(parse_xpath("/a b"), Err(XPathError::Syntax { .. })));
    }
}
