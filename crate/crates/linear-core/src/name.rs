use std::cmp::Ordering;
use std::fmt;
use std::hash::{Hash, Hasher};
use std::sync::atomic::{AtomicU32, Ordering as AtomicOrdering};
use std::sync::Arc;

static NEXT_ID: AtomicU32 = AtomicU32::new(1);

/// An identifier: the source spelling plus a process-wide unique id.
///
/// Equality, ordering and hashing look only at the id, so two binders that
/// share a spelling never collide. The spelling is kept for printing.
#[derive(Clone)]
pub struct Name {
    id: u32,
    text: Arc<str>,
}

impl Name {
    pub fn fresh(text: &str) -> Name {
        Name {
            id: NEXT_ID.fetch_add(1, AtomicOrdering::Relaxed),
            text: Arc::from(text),
        }
    }

    /// Same spelling, new identity.
    pub fn refresh(&self) -> Name {
        Name {
            id: NEXT_ID.fetch_add(1, AtomicOrdering::Relaxed),
            text: self.text.clone(),
        }
    }

    pub fn id(&self) -> u32 {
        self.id
    }

    pub fn text(&self) -> &str {
        &self.text
    }
}

impl PartialEq for Name {
    fn eq(&self, other: &Self) -> bool {
        self.id == other.id
    }
}

impl Eq for Name {}

impl Hash for Name {
    fn hash<H: Hasher>(&self, state: &mut H) {
        self.id.hash(state)
    }
}

impl PartialOrd for Name {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Name {
    fn cmp(&self, other: &Self) -> Ordering {
        self.id.cmp(&other.id)
    }
}

impl fmt::Debug for Name {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}_{}", self.text, self.id)
    }
}

impl fmt::Display for Name {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_text_distinct_identity() {
        let a = Name::fresh("x");
        let b = Name::fresh("x");
        assert_ne!(a, b);
        assert_eq!(a.text(), b.text());
        assert_ne!(a.refresh(), a);
    }
}
