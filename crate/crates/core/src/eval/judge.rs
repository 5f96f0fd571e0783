//! LLM-judged instruction following.

use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::llm::LlmClient;

pub const JUDGE_INSTRUCTION: &str =
    "Below is a pair of question and response. Identify if the response answers the question. Return yes or no.";

pub fn judge_prompt(question: &str, answer: &str) -> String {
    format!("{JUDGE_INSTRUCTION}\nQuestion: {question}\nResponse: {answer}")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Yes,
    No,
    Abstain,
}

/// Reads the leading word of the judge's reply.
pub fn parse_verdict(reply: &str) -> Verdict {
    let word: String = reply
        .trim_start()
        .chars()
        .skip_while(|c| !c.is_alphanumeric())
        .take_while(|c| c.is_alphanumeric())
        .collect::<String>()
        .to_lowercase();
    match word.as_str() {
        "yes" => Verdict::Yes,
        "no" => Verdict::No,
        _ => Verdict::Abstain,
    }
}

pub fn judge_instruction_following(question: &str, answer: &str, client: &dyn LlmClient) -> Result<Verdict, EvalError> {
    let reply = client.complete(&judge_prompt(question, answer))?;
    Ok(parse_verdict(&reply))
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct JudgeReport {
    pub yes: usize,
    pub no: usize,
    pub abstain: usize,
    /// `yes / (yes + no)`; abstentions are reported, not scored.
    pub following_rate: Option<f64>,
    pub abstained: Vec<usize>,
}

pub fn judge_batch(pairs: &[(String, String)], client: &dyn LlmClient) -> Result<JudgeReport, EvalError> {
    let mut r = JudgeReport::default();
    for (i, (q, a)) in pairs.iter().enumerate() {
        match judge_instruction_following(q, a, client)? {
            Verdict::Yes => r.yes += 1,
            Verdict::No => r.no += 1,
            Verdict::Abstain => {
                r.abstain += 1;
                r.abstained.push(i);
            }
        }
    }
    if r.yes + r.no > 0 {
        r.following_rate = Some(r.yes as f64 / (r.yes + r.no) as f64);
    }
    Ok(r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm::{MockClient, ReplayFixture};

    #[test]
    fn verdicts() {
        assert_eq!(parse_verdict("Yes"), Verdict::Yes);
        assert_eq!(parse_verdict("no, it does not."), Verdict::No);
        assert_eq!(parse_verdict("  **YES**."), Verdict::Yes);
        assert_eq!(parse_verdict("Maybe"), Verdict::Abstain);
        assert_eq!(parse_verdict("Nope"), Verdict::Abstain);
    }

    #[test]
    fn nine_of_ten() {
        let pairs: Vec<(String, String)> = (0..10).map(|i| (format!("q{i}?"), format!("a{i}"))).collect();
        let fixtures = pairs
            .iter()
            .enumerate()
            .map(|(i, (q, a))| ReplayFixture {
                prompt: judge_prompt(q, a),
                response: if i == 4 { "No.".into() } else { "Yes".into() },
            })
            .collect();
        let mock = MockClient::replay(fixtures);
        let r = judge_batch(&pairs, &mock).unwrap();
        assert_eq!(r.following_rate, Some(0.9));
        assert_eq!(mock.call_count(), 10);
    }
}
