use std::sync::atomic::{AtomicUsize, Ordering};

use super::{Backend, BackendError, History, Message};

/// Returns canned responses in order regardless of the history.
#[derive(Debug)]
pub struct ScriptedBackend {
    responses: Vec<String>,
    next: AtomicUsize,
}

impl ScriptedBackend {
    pub fn new(responses: Vec<String>) -> Self {
        ScriptedBackend {
            responses,
            next: AtomicUsize::new(0),
        }
    }

    /// Responses separated by lines consisting only of `---`.
    pub fn from_script(text: &str) -> Self {
        let mut responses = Vec::new();
        let mut current: Vec<&str> = Vec::new();
        for line in text.lines() {
            if line.trim_end() == "---" {
                responses.push(current.join("\n"));
                current.clear();
            } else {
                current.push(line);
            }
        }
        if !current.is_empty() {
            responses.push(current.join("\n"));
        }
        ScriptedBackend::new(responses)
    }

    pub fn len(&self) -> usize {
        self.responses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.responses.is_empty()
    }
}

impl Backend for ScriptedBackend {
    fn complete(&self, _history: &History) -> Result<Message, BackendError> {
        let i = self.next.fetch_add(1, Ordering::SeqCst);
        self.responses
            .get(i)
            .map(|r| Message::assistant(r.clone()))
            .ok_or(BackendError::ScriptExhausted(i))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn three_then_exhausted() {
        let b = ScriptedBackend::from_script("one\n---\ntwo\nlines\n---\nthree\n");
        let h = History::new("s");
        assert_eq!(b.complete(&h).unwrap().content, "one");
        assert_eq!(b.complete(&h).unwrap().content, "two\nlines");
        assert_eq!(b.complete(&h).unwrap().content, "three");
        assert_eq!(b.complete(&h), Err(BackendError::ScriptExhausted(3)));
    }
}
