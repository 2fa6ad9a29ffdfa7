use std::path::Path;

use rlgaf_core::tasks::{format_record, parse_corpus, CorpusLoad};
use rlgaf_core::seqmodel::Sequence;

use crate::error::{Result, RunError};

/// Read a corpus file; see [`rlgaf_core::tasks::parse_corpus`] for the format.
pub fn load_corpus(path: &Path, max_prompt_tokens: usize) -> Result<CorpusLoad> {
    let text = std::fs::read_to_string(path).map_err(|e| RunError::io(path, e))?;
    Ok(parse_corpus(&text, max_prompt_tokens)?)
}

pub fn write_corpus(path: &Path, seqs: &[Sequence]) -> Result<()> {
    let mut out = String::new();
    for s in seqs {
        out.push_str(&format_record(s));
        out.push('\n');
    }
    std::fs::write(path, out).map_err(|e| RunError::io(path, e))
}
