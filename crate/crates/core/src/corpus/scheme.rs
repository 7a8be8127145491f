use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::CorpusError;

/// Tagging scheme for flat entity spans.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "UPPERCASE")]
pub enum Scheme {
    Bio,
    #[default]
    Bioes,
}

impl Scheme {
    /// Number of tags contributed by each entity type.
    pub fn tags_per_type(self) -> usize {
        match self {
            Scheme::Bio => 2,
            Scheme::Bioes => 4,
        }
    }

    fn prefixes(self) -> &'static [Prefix] {
        match self {
            Scheme::Bio => &[Prefix::Begin, Prefix::Inside],
            Scheme::Bioes => &[Prefix::Begin, Prefix::Inside, Prefix::End, Prefix::Single],
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Scheme::Bio => f.write_str("BIO"),
            Scheme::Bioes => f.write_str("BIOES"),
        }
    }
}

impl FromStr for Scheme {
    type Err = CorpusError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_uppercase().as_str() {
            "BIO" | "IOB2" => Ok(Scheme::Bio),
            "BIOES" | "IOBES" => Ok(Scheme::Bioes),
            _ => Err(CorpusError::UnknownScheme(s.to_string())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Prefix {
    Begin,
    Inside,
    End,
    Single,
}

impl Prefix {
    fn as_char(self) -> char {
        match self {
            Prefix::Begin => 'B',
            Prefix::Inside => 'I',
            Prefix::End => 'E',
            Prefix::Single => 'S',
        }
    }
}

/// A parsed tag: `O` or a prefix plus an entity type.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Tag {
    Outside,
    Entity(Prefix, String),
}

impl Tag {
    pub fn parse(s: &str) -> Result<Tag, CorpusError> {
        if s == "O" {
            return Ok(Tag::Outside);
        }
        let mut chars = s.chars();
        let prefix = match chars.next() {
            Some('B') => Prefix::Begin,
            Some('I') => Prefix::Inside,
            Some('E') => Prefix::End,
            Some('S') => Prefix::Single,
            _ => return Err(CorpusError::BadTag(s.to_string())),
        };
        match chars.next() {
            Some('-') => {}
            _ => return Err(CorpusError::BadTag(s.to_string())),
        }
        let ty = chars.as_str();
        if ty.is_empty() || ty == "O" {
            return Err(CorpusError::BadTag(s.to_string()));
        }
        Ok(Tag::Entity(prefix, ty.to_string()))
    }

    pub fn entity_type(&self) -> Option<&str> {
        match self {
            Tag::Outside => None,
            Tag::Entity(_, ty) => Some(ty),
        }
    }

    /// Whether the tag can occur under `scheme`.
    pub fn fits(&self, scheme: Scheme) -> bool {
        match self {
            Tag::Outside => true,
            Tag::Entity(p, _) => scheme.prefixes().contains(p),
        }
    }
}

impl fmt::Display for Tag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tag::Outside => f.write_str("O"),
            Tag::Entity(p, ty) => write!(f, "{}-{}", p.as_char(), ty),
        }
    }
}

/// Entity types plus a scheme; fixes the tag vocabulary and its ordering.
///
/// Tag index 0 is always `O`; type `k` then occupies the next
/// `scheme.tags_per_type()` indices in B, I, E, S order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "LabelSetRepr", into = "LabelSetRepr")]
pub struct LabelSet {
    types: Vec<String>,
    scheme: Scheme,
    tags: Vec<String>,
    index: HashMap<String, usize>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LabelSetRepr {
    types: Vec<String>,
    scheme: Scheme,
}

impl TryFrom<LabelSetRepr> for LabelSet {
    type Error = CorpusError;

    fn try_from(r: LabelSetRepr) -> Result<Self, Self::Error> {
        LabelSet::new(r.types, r.scheme)
    }
}

impl From<LabelSet> for LabelSetRepr {
    fn from(l: LabelSet) -> Self {
        LabelSetRepr {
            types: l.types,
            scheme: l.scheme,
        }
    }
}

impl LabelSet {
    pub fn new<S: Into<String>>(
        types: impl IntoIterator<Item = S>,
        scheme: Scheme,
    ) -> Result<LabelSet, CorpusError> {
        let types: Vec<String> = types.into_iter().map(Into::into).collect();
        let mut tags = vec!["O".to_string()];
        for ty in &types {
            if ty.is_empty() || ty == "O" || ty.contains(char::is_whitespace) {
                return Err(CorpusError::BadType(ty.clone()));
            }
            for p in scheme.prefixes() {
                tags.push(Tag::Entity(*p, ty.clone()).to_string());
            }
        }
        let mut index = HashMap::with_capacity(tags.len());
        for (i, t) in tags.iter().enumerate() {
            if index.insert(t.clone(), i).is_some() {
                return Err(CorpusError::DuplicateType(t[2..].to_string()));
            }
        }
        Ok(LabelSet {
            types,
            scheme,
            tags,
            index,
        })
    }

    /// Collects the entity types seen in `sentences`, sorted by name.
    pub fn infer<'a>(
        sentences: impl IntoIterator<Item = &'a super::LabeledSentence>,
        scheme: Scheme,
    ) -> Result<LabelSet, CorpusError> {
        let mut types = std::collections::BTreeSet::new();
        for s in sentences {
            for t in &s.tags {
                if let Some(ty) = Tag::parse(t)?.entity_type() {
                    types.insert(ty.to_string());
                }
            }
        }
        LabelSet::new(types, scheme)
    }

    pub fn types(&self) -> &[String] {
        &self.types
    }

    pub fn scheme(&self) -> Scheme {
        self.scheme
    }

    pub fn tags(&self) -> &[String] {
        &self.tags
    }

    pub fn len(&self) -> usize {
        self.tags.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tags.is_empty()
    }

    pub fn tag_index(&self, tag: &str) -> Option<usize> {
        self.index.get(tag).copied()
    }

    pub fn tag_name(&self, idx: usize) -> &str {
        &self.tags[idx]
    }

    pub fn has_type(&self, ty: &str) -> bool {
        self.types.iter().any(|t| t == ty)
    }

    /// Whether `to` may follow `from` in a well-formed sequence.
    /// `None` stands for the sequence boundary.
    pub fn transition_allowed(&self, from: Option<usize>, to: Option<usize>) -> bool {
        let parse = |i: usize| Tag::parse(&self.tags[i]).expect("label set tags are well formed");
        let from = from.map(parse);
        let to = to.map(parse);
        // Tags that continue an open span, and tags that leave one open.
        let continues = |t: &Tag| matches!(t, Tag::Entity(Prefix::Inside | Prefix::End, _));
        let leaves_open = |t: &Tag| match (self.scheme, t) {
            (Scheme::Bioes, Tag::Entity(Prefix::Begin | Prefix::Inside, _)) => true,
            _ => false,
        };
        match (from, to) {
            (None, None) => true,
            (None, Some(t)) => !continues(&t),
            (Some(f), None) => !leaves_open(&f),
            (Some(f), Some(t)) => {
                if continues(&t) {
                    match &f {
                        Tag::Entity(Prefix::Begin | Prefix::Inside, fty) => {
                            Some(fty.as_str()) == t.entity_type()
                        }
                        _ => false,
                    }
                } else {
                    !leaves_open(&f)
                }
            }
        }
    }
}
