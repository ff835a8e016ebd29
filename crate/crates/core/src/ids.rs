use alloc::string::String;
use serde::{Deserialize, Serialize};

/// Dense index of a user node in an [`InteractionGraph`](crate::InteractionGraph).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct UserIx(pub u32);

/// Dense index of an item node in an [`InteractionGraph`](crate::InteractionGraph).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ItemIx(pub u32);

impl UserIx {
    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl ItemIx {
    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

/// An article id paired with a relevance score.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredItem {
    pub id: String,
    pub score: f64,
}

impl ScoredItem {
    pub fn new(id: impl Into<String>, score: f64) -> Self {
        Self { id: id.into(), score }
    }
}

/// Descending score, ascending id. The ordering every ranking in this crate
/// falls back on.
pub(crate) fn by_score_then_id(a: &ScoredItem, b: &ScoredItem) -> core::cmp::Ordering {
    b.score
        .total_cmp(&a.score)
        .then_with(|| a.id.cmp(&b.id))
}
