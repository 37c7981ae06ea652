use rust_decimal::Decimal;
use serde::{Deserialize, Serialize};

/// Token counts reported for one request.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Usage {
    pub input_tokens: u64,
    pub output_tokens: u64,
}

impl Usage {
    pub fn new(input_tokens: u64, output_tokens: u64) -> Self {
        Usage {
            input_tokens,
            output_tokens,
        }
    }
}

/// Per-token prices in currency units.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct PriceTable {
    #[serde(with = "rust_decimal::serde::str")]
    pub input_per_token: Decimal,
    #[serde(with = "rust_decimal::serde::str")]
    pub output_per_token: Decimal,
}

impl PriceTable {
    pub fn flat(per_token: Decimal) -> Self {
        PriceTable {
            input_per_token: per_token,
            output_per_token: per_token,
        }
    }

    pub fn cost(&self, usage: Usage) -> Decimal {
        self.input_per_token * Decimal::from(usage.input_tokens)
            + self.output_per_token * Decimal::from(usage.output_tokens)
    }
}

impl Default for PriceTable {
    /// 0.15 / 0.60 currency units per million input / output tokens.
    fn default() -> Self {
        PriceTable {
            input_per_token: Decimal::new(15, 8),
            output_per_token: Decimal::new(60, 8),
        }
    }
}

/// Running estimate of spend. Real provider billing may differ slightly;
/// the ledger only knows the configured price table.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CostLedger {
    pub prompt_count: u64,
    pub input_tokens: u64,
    pub output_tokens: u64,
    #[serde(with = "rust_decimal::serde::str")]
    pub monetary_cost: Decimal,
    #[serde(with = "rust_decimal::serde::str_option")]
    pub budget_cap: Option<Decimal>,
    pub prices: PriceTable,
}

impl CostLedger {
    pub fn new(prices: PriceTable, budget_cap: Option<Decimal>) -> Self {
        CostLedger {
            prompt_count: 0,
            input_tokens: 0,
            output_tokens: 0,
            monetary_cost: Decimal::ZERO,
            budget_cap,
            prices,
        }
    }

    /// Record one request's usage. Returns whether the cap is now exceeded.
    pub fn charge(&mut self, usage: Usage) -> bool {
        self.prompt_count += 1;
        self.input_tokens += usage.input_tokens;
        self.output_tokens += usage.output_tokens;
        self.monetary_cost += self.prices.cost(usage);
        self.exceeded()
    }

    pub fn exceeded(&self) -> bool {
        self.budget_cap.is_some_and(|cap| self.monetary_cost > cap)
    }

    /// Pre-send check: would sending a prompt of this many input tokens
    /// push the spend over the cap?
    pub fn would_exceed(&self, estimated_input_tokens: u64) -> bool {
        let Some(cap) = self.budget_cap else {
            return false;
        };
        let projected = self.monetary_cost
            + self.prices.input_per_token * Decimal::from(estimated_input_tokens);
        projected > cap
    }

    pub fn remaining(&self) -> Option<Decimal> {
        self.budget_cap.map(|cap| (cap - self.monetary_cost).max(Decimal::ZERO))
    }
}

/// Rough token estimate (four characters per token) used for mock
/// providers and for the pre-send budget check.
pub fn estimate_tokens(text: &str) -> u64 {
    (text.chars().count() as u64).div_ceil(4)
}
