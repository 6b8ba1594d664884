use std::ops::AddAssign;

use serde::{Deserialize, Serialize};

use super::ExchangeUsage;
use crate::journal::JournalEvent;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct UsageTotals {
    pub context_tokens: u64,
    pub generation_tokens: u64,
    pub call_count: u64,
}

impl UsageTotals {
    pub fn add(&mut self, x: &ExchangeUsage) {
        self.context_tokens += x.context_tokens;
        self.generation_tokens += x.generation_tokens;
        self.call_count += 1;
    }
}

impl AddAssign for UsageTotals {
    fn add_assign(&mut self, rhs: Self) {
        self.context_tokens += rhs.context_tokens;
        self.generation_tokens += rhs.generation_tokens;
        self.call_count += rhs.call_count;
    }
}

impl<'a> FromIterator<&'a ExchangeUsage> for UsageTotals {
    fn from_iter<I: IntoIterator<Item = &'a ExchangeUsage>>(iter: I) -> Self {
        let mut t = UsageTotals::default();
        for x in iter {
            t.add(x);
        }
        t
    }
}

/// Sums token usage over every exchange recorded in a journal.
pub fn usage_totals<'a>(events: impl IntoIterator<Item = &'a JournalEvent>) -> UsageTotals {
    events
        .into_iter()
        .flat_map(|e| e.payload.exchanges())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm::ProviderKind;

    fn usage(c: u64, g: u64) -> ExchangeUsage {
        ExchangeUsage {
            prompt_digest: String::new(),
            context_tokens: c,
            generation_tokens: g,
            provider: ProviderKind::Mock,
        }
    }

    #[test]
    fn zero_calls() {
        assert_eq!(usage_totals(std::iter::empty()), UsageTotals::default());
    }

    #[test]
    fn additivity() {
        let xs = [usage(100, 20), usage(50, 10)];
        let t: UsageTotals = xs.iter().collect();
        assert_eq!(
            t,
            UsageTotals {
                context_tokens: 150,
                generation_tokens: 30,
                call_count: 2
            }
        );
    }
}
