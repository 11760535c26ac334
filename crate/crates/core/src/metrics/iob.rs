use std::fmt;

use crate::error::TagError;

/// One IOB slot tag.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Tag<'a> {
    Outside,
    Begin(&'a str),
    Inside(&'a str),
}

impl<'a> Tag<'a> {
    pub fn parse(s: &'a str) -> Result<Self, TagError> {
        if s == "O" {
            return Ok(Tag::Outside);
        }
        let (kind, ty) = s.split_once('-').ok_or_else(|| TagError(s.to_string()))?;
        if ty.is_empty() || ty.chars().any(char::is_whitespace) {
            return Err(TagError(s.to_string()));
        }
        match kind {
            "B" => Ok(Tag::Begin(ty)),
            "I" => Ok(Tag::Inside(ty)),
            _ => Err(TagError(s.to_string())),
        }
    }

    pub fn slot_type(&self) -> Option<&'a str> {
        match self {
            Tag::Outside => None,
            Tag::Begin(t) | Tag::Inside(t) => Some(t),
        }
    }
}

impl fmt::Display for Tag<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tag::Outside => f.write_str("O"),
            Tag::Begin(t) => write!(f, "B-{t}"),
            Tag::Inside(t) => write!(f, "I-{t}"),
        }
    }
}
