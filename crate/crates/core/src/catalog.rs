//! Built-in policies for generated systems.
//!
//! * `true`, `false`
//! * `id-parity`: permit uses of odd-numbered objects
//! * `activated-lt-K`: permit while fewer than `K` uses are activated
//! * `completed-lt-K`: permit while fewer than `K` uses are completed
//!
//! `activated-count<K` and `completed-count<K` are accepted as aliases.

/// A named built-in policy and its rule text.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BuiltinPolicy {
    pub name: String,
    pub text: String,
}

fn count_below(status: &str, k: u64) -> String {
    format!("(< (aggregate count uses (= (attr x st) \"{status}\")) {k})")
}

/// Rule text of the built-in policy `name`.
pub fn builtin_policy(name: &str) -> Option<String> {
    match name {
        "true" | "false" => Some(name.to_string()),
        "id-parity" => Some("(= (attr object parity) 1)".to_string()),
        _ => {
            let (status, k) = name
                .strip_prefix("activated-lt-")
                .map(|k| ("activated", k))
                .or_else(|| name.strip_prefix("completed-lt-").map(|k| ("completed", k)))
                .or_else(|| {
                    name.strip_prefix("activated-count<")
                        .map(|k| ("activated", k))
                })
                .or_else(|| {
                    name.strip_prefix("completed-count<")
                        .map(|k| ("completed", k))
                })?;
            let k: u64 = k.parse().ok()?;
            Some(count_below(status, k))
        }
    }
}

/// Candidates for matching published statistics at `n` uses: the constant
/// policies, `id-parity`, and both count thresholds for `K = 1..=n`.
pub fn sweep_candidates(n: usize) -> Vec<BuiltinPolicy> {
    let mut names = vec![
        "true".to_string(),
        "false".to_string(),
        "id-parity".to_string(),
    ];
    for k in 1..=n {
        names.push(format!("activated-lt-{k}"));
    }
    for k in 1..=n {
        names.push(format!("completed-lt-{k}"));
    }
    names
        .into_iter()
        .map(|name| BuiltinPolicy {
            text: builtin_policy(&name).expect("catalog names resolve"),
            name,
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ModelKind, SystemBuilder, UseCounts};

    #[test]
    fn names_resolve_and_parse() {
        let c = SystemBuilder::generated(ModelKind::Pre, UseCounts::uses(3))
            .build()
            .unwrap();
        for p in sweep_candidates(3) {
            crate::policy::parse_policy(&p.text, &c).unwrap();
        }
        assert_eq!(sweep_candidates(3).len(), 9);
        assert_eq!(builtin_policy("activated-lt-x"), None);
        assert_eq!(builtin_policy("nope"), None);
        assert_eq!(
            builtin_policy("activated-count<2"),
            builtin_policy("activated-lt-2")
        );
    }
}
