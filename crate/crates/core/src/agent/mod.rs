//! Conversational layer: a deterministic command grammar that turns
//! utterances into dashboard mutations, and BM25 passage retrieval over a
//! local knowledge corpus.

mod apply;
mod grammar;
mod retrieval;

pub use apply::{
    apply_command, command_mutation, describe_value, AgentError, AgentReply,
};
pub use grammar::{parse_utterance, AgentCommand, Intent, NoMatch, NoMatchReason, WidgetRef};
pub use retrieval::{
    answer, bm25_idf, AnswerSynthesizer, Bm25Params, Extractive, IndexError, Passage,
    RetrievalIndex, ScoredPassage, SkippedFile, MAX_PASSAGE_TOKENS,
};

/// Lowercased alphanumeric runs. Shared by the grammar and the retriever.
pub fn tokenize(text: &str) -> Vec<String> {
    token_spans(text)
        .into_iter()
        .map(|(s, e)| text[s..e].to_lowercase())
        .collect()
}

/// Byte ranges of alphanumeric runs in `text`.
pub(crate) fn token_spans(text: &str) -> Vec<(usize, usize)> {
    let mut spans = Vec::new();
    let mut start = None;
    for (i, c) in text.char_indices() {
        match (c.is_alphanumeric(), start) {
            (true, None) => start = Some(i),
            (false, Some(s)) => {
                spans.push((s, i));
                start = None;
            }
            _ => {}
        }
    }
    if let Some(s) = start {
        spans.push((s, text.len()));
    }
    spans
}
