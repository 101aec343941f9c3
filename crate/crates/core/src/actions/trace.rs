//! Line-oriented action traces:
//!
//! ```text
//! add <attach_to> <element> <charge> <bond_order>
//! connect <to_node> <bond_order>
//! terminate
//! ```
//!
//! All fields are vocabulary indices.

use std::fmt::Write;

use super::{Action, ActionError, ActionSequence};

pub fn write_trace(seq: &ActionSequence) -> String {
    let mut out = String::new();
    for a in &seq.steps {
        match a {
            Action::AddNode {
                attach_to,
                element,
                charge,
                bond_order,
            } => writeln!(out, "add {attach_to} {element} {charge} {bond_order}"),
            Action::Connect { to_node, bond_order } => writeln!(out, "connect {to_node} {bond_order}"),
            Action::Terminate => writeln!(out, "terminate"),
        }
        .unwrap();
    }
    out
}

pub fn parse_trace(text: &str) -> Result<ActionSequence, ActionError> {
    let mut steps = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let err = |reason: &str| ActionError::Trace {
            line: n + 1,
            reason: reason.to_string(),
        };
        let mut fields = line.split_whitespace();
        let verb = fields.next().unwrap();
        let nums: Vec<usize> = fields
            .map(|f| f.parse::<usize>().map_err(|_| err("expected a non-negative integer")))
            .collect::<Result<_, _>>()?;
        let action = match (verb, nums.as_slice()) {
            ("add", &[attach_to, element, charge, bond_order]) => Action::AddNode {
                attach_to,
                element,
                charge,
                bond_order,
            },
            ("connect", &[to_node, bond_order]) => Action::Connect { to_node, bond_order },
            ("terminate", &[]) => Action::Terminate,
            _ => return Err(err("unrecognised action")),
        };
        steps.push(action);
    }
    Ok(ActionSequence::new(steps))
}
