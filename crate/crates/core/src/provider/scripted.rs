use std::collections::VecDeque;
use std::sync::Mutex;

use super::{LlmProvider, MockProvider, ProviderError, ProviderMode, Tier};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ScriptStep {
    Reply(String),
    Fail(String),
}

impl From<&str> for ScriptStep {
    fn from(s: &str) -> Self {
        ScriptStep::Reply(s.to_string())
    }
}

/// Returns completions from a fixed script, in order, regardless of the
/// prompt. Embeddings come from the mock embedder. When `repeat_last` is
/// set the final step is replayed forever instead of failing.
pub struct ScriptedProvider {
    steps: Mutex<VecDeque<ScriptStep>>,
    served: Mutex<usize>,
    repeat_last: bool,
    prompts: Mutex<Vec<String>>,
    embedder: MockProvider,
}

impl ScriptedProvider {
    pub fn new<I, S>(steps: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<ScriptStep>,
    {
        Self {
            steps: Mutex::new(steps.into_iter().map(Into::into).collect()),
            served: Mutex::new(0),
            repeat_last: false,
            prompts: Mutex::new(Vec::new()),
            embedder: MockProvider::new(),
        }
    }

    pub fn repeating(mut self) -> Self {
        self.repeat_last = true;
        self
    }

    /// Every prompt received so far.
    pub fn prompts(&self) -> Vec<String> {
        self.prompts.lock().expect("prompts lock").clone()
    }
}

impl LlmProvider for ScriptedProvider {
    fn complete(&self, prompt: &str, _tier: Tier) -> Result<String, ProviderError> {
        self.prompts.lock().expect("prompts lock").push(prompt.to_string());
        let mut steps = self.steps.lock().expect("script lock");
        let mut served = self.served.lock().expect("script lock");
        let step = if self.repeat_last && steps.len() == 1 { steps.front().cloned() } else { steps.pop_front() };
        match step {
            Some(ScriptStep::Reply(r)) => {
                *served += 1;
                Ok(r)
            }
            Some(ScriptStep::Fail(msg)) => Err(ProviderError::Failure(msg)),
            None => Err(ProviderError::Exhausted(*served)),
        }
    }

    fn embed(&self, text: &str) -> Result<Vec<f32>, ProviderError> {
        self.embedder.embed(text)
    }

    fn mode(&self) -> ProviderMode {
        ProviderMode::Mock
    }

    fn dimension(&self) -> usize {
        self.embedder.dimension()
    }

    fn embedding_family(&self) -> String {
        self.embedder.embedding_family()
    }
}

impl From<String> for ScriptStep {
    fn from(s: String) -> Self {
        ScriptStep::Reply(s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn script_order_and_exhaustion() {
        let p = ScriptedProvider::new([ScriptStep::from("a"), ScriptStep::Fail("boom".into()), "b".into()]);
        assert_eq!(p.complete("x", Tier::Fast).unwrap(), "a");
        assert!(matches!(p.complete("y", Tier::Fast), Err(ProviderError::Failure(_))));
        assert_eq!(p.complete("z", Tier::Deep).unwrap(), "b");
        assert_eq!(p.complete("w", Tier::Deep), Err(ProviderError::Exhausted(2)));
        assert_eq!(p.prompts(), ["x", "y", "z", "w"]);
    }

    #[test]
    fn repeating_last_step() {
        let p = ScriptedProvider::new(["a", "b"]).repeating();
        let got: Vec<_> = (0..4).map(|_| p.complete("", Tier::Deep).unwrap()).collect();
        assert_eq!(got, ["a", "b", "b", "b"]);
    }
}
