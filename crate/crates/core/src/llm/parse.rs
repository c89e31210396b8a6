use std::collections::BTreeMap;

use super::LlmError;

/// A plain decimal in `[0, 1]`: digits with an optional fractional part.
fn unit_decimal(s: &str) -> Option<f64> {
    let s = s.trim();
    let (int, frac) = match s.split_once('.') {
        Some((i, f)) => (i, Some(f)),
        None => (s, None),
    };
    let digits = |x: &str| !x.is_empty() && x.bytes().all(|b| b.is_ascii_digit());
    if !digits(int) || frac.is_some_and(|f| !digits(f)) {
        return None;
    }
    let v: f64 = s.parse().ok()?;
    (0.0..=1.0).contains(&v).then_some(v)
}

/// Every `[x]` with `x` a decimal in `[0, 1]`, in order of appearance.
fn bracket_scores(text: &str) -> Vec<f64> {
    let mut out = Vec::new();
    let mut rest = text;
    while let Some(open) = rest.find('[') {
        let after = &rest[open + 1..];
        match after.find(['[', ']']) {
            Some(close) if after.as_bytes()[close] == b']' => {
                if let Some(v) = unit_decimal(&after[..close]) {
                    out.push(v);
                }
                rest = &after[close + 1..];
            }
            Some(close) => rest = &after[close..],
            None => break,
        }
    }
    out
}

/// The last bracketed score in a single-user answer.
pub fn parse_separate_score(raw: &str) -> Result<f64, LlmError> {
    bracket_scores(raw).pop().ok_or_else(|| LlmError::NoScore { raw: raw.to_string() })
}

/// `user <i> ... [x]` or `user <i>: x` on one line; returns the user number and score.
fn combine_line(line: &str) -> Option<(usize, f64)> {
    let lower = line.to_ascii_lowercase();
    let mut from = 0;
    while let Some(pos) = lower[from..].find("user") {
        let start = from + pos;
        from = start + 4;
        if start > 0 && lower.as_bytes()[start - 1].is_ascii_alphanumeric() {
            continue;
        }
        let tail = &line[start + 4..];
        let trimmed = tail.trim_start();
        if trimmed.len() == tail.len() {
            continue;
        }
        let n_digits = trimmed.bytes().take_while(|b| b.is_ascii_digit()).count();
        if n_digits == 0 {
            continue;
        }
        let Ok(idx) = trimmed[..n_digits].parse::<usize>() else { continue };
        let after = &trimmed[n_digits..];
        if let Some(v) = bracket_scores(after).pop() {
            return Some((idx, v));
        }
        if let Some(rest) = after.trim_start().strip_prefix(':') {
            let token: String = rest.trim_start().chars().take_while(|c| c.is_ascii_digit() || *c == '.').collect();
            if let Some(v) = unit_decimal(token.trim_end_matches('.')) {
                return Some((idx, v));
            }
        }
    }
    None
}

/// Maps `user 1..N` lines onto `agent_ids` by position.
pub fn parse_combine_scores(raw: &str, agent_ids: &[String]) -> Result<BTreeMap<String, f64>, LlmError> {
    let mut found: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
    for line in raw.lines() {
        if let Some((i, v)) = combine_line(line) {
            if (1..=agent_ids.len()).contains(&i) {
                found.entry(i).or_default().push(v);
            }
        }
    }
    let mut resolved = BTreeMap::new();
    let mut unresolved = Vec::new();
    for (k, id) in agent_ids.iter().enumerate() {
        match found.get(&(k + 1)).map(Vec::as_slice) {
            Some([v]) => {
                resolved.insert(id.clone(), *v);
            }
            _ => unresolved.push(id.clone()),
        }
    }
    if unresolved.is_empty() {
        Ok(resolved)
    } else {
        Err(LlmError::PartialParse { resolved, unresolved, raw: raw.to_string() })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ids(n: usize) -> Vec<String> {
        (1..=n).map(|i| format!("a{i}")).collect()
    }

    #[test]
    fn separate_last_match() {
        assert_eq!(parse_separate_score("Estimated Anomaly Score: [0.65]").unwrap(), 0.65);
        assert_eq!(parse_separate_score("range [0, 1] ... first [0.2] then [0.9].").unwrap(), 0.9);
        assert_eq!(parse_separate_score("[1] or [1.5] or [abc]").unwrap(), 1.0);
        assert!(parse_separate_score("no brackets here").is_err());
        assert!(parse_separate_score("[] and [ ] and [-0.1]").is_err());
    }

    #[test]
    fn combine_formats() {
        let m = parse_combine_scores("user 1: [0.2]\nuser 2: [0.9]", &ids(2)).unwrap();
        assert_eq!(m["a1"], 0.2);
        assert_eq!(m["a2"], 0.9);
        let m = parse_combine_scores("user 1: 0.35\nuser 2: 0.10", &ids(2)).unwrap();
        assert_eq!((m["a1"], m["a2"]), (0.35, 0.10));
        let m = parse_combine_scores("User 2 looks odd, score [0.7].\nUSER 1 - fine [0.1]", &ids(2)).unwrap();
        assert_eq!((m["a1"], m["a2"]), (0.1, 0.7));
    }

    #[test]
    fn combine_partial() {
        match parse_combine_scores("User 2 ... [0.7]", &ids(2)) {
            Err(LlmError::PartialParse { resolved, unresolved, .. }) => {
                assert_eq!(resolved.len(), 1);
                assert_eq!(unresolved, vec!["a1".to_string()]);
            }
            other => panic!("{other:?}"),
        }
        // a repeated index is ambiguous
        assert!(parse_combine_scores("user 1: [0.2]\nuser 1: [0.3]", &ids(1)).is_err());
        // "superuser 1: [0.5]" is not a user line
        assert!(parse_combine_scores("superuser 1: [0.5]", &ids(1)).is_err());
    }
}
