use serde_json::{Map, Value};

use super::{HookDecision, HookError, PreHook};
use crate::model::Context;

/// Stops the run once the conversation has cost more than `max_cost` USD.
pub struct BudgetControlHook {
    max_cost: f64,
}

impl BudgetControlHook {
    pub fn new(max_cost: f64) -> Self {
        assert!(max_cost >= 0.0, "max_cost must not be negative");
        BudgetControlHook { max_cost }
    }

    pub fn check(&self, total_cost: f64) -> HookDecision {
        if total_cost > self.max_cost {
            HookDecision::interrupt(format!("Budget exceeded: ${total_cost:.2} > ${:.2}", self.max_cost))
        } else {
            HookDecision::approve()
        }
    }
}

impl PreHook for BudgetControlHook {
    fn name(&self) -> &str {
        "BudgetControlHook"
    }

    fn before_call(&mut self, _: &str, _: &Map<String, Value>, context: &Context) -> Result<HookDecision, HookError> {
        Ok(self.check(context.total_cost()))
    }
}
