//! Parser for the bAbI plain-text QA format.
//!
//! Each line starts with a numeric id; an id of 1 opens a new story block.
//! Statement lines extend the current story. Question lines carry
//! tab-separated question text, an answer word, and optionally
//! space-separated supporting statement ids; each yields one sample whose
//! story is every statement seen so far in the block.

use std::io::BufRead;

use super::{encode_sample, DataError, QASample, Vocabulary};

/// A tokenized but not yet index-encoded sample.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawSample {
    pub story: Vec<Vec<String>>,
    pub question: Vec<String>,
    pub answer: String,
    pub supporting: Option<Vec<usize>>,
}

/// Parse result: encoded samples, the vocabulary built over the whole
/// stream, and how many samples were dropped for multi-word answers.
#[derive(Debug, Clone)]
pub struct ParsedCorpus {
    pub samples: Vec<QASample>,
    pub vocab: Vocabulary,
    pub skipped_multiword_answers: usize,
}

/// Lowercases and splits a line into word tokens, shedding trailing `.`
/// and `?` punctuation.
pub fn tokenize_line(text: &str) -> Vec<String> {
    text.split_whitespace()
        .map(|w| {
            w.to_lowercase()
                .trim_end_matches(['.', '?'])
                .to_string()
        })
        .filter(|w| !w.is_empty())
        .collect()
}

/// Parses a bAbI-format stream.
pub fn parse_babi(reader: impl BufRead) -> Result<ParsedCorpus, DataError> {
    let mut vocab = Vocabulary::new();
    let mut raws: Vec<RawSample> = Vec::new();
    let mut story: Vec<Vec<String>> = Vec::new();
    let mut skipped = 0usize;

    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        // Only the left side is trimmed: a trailing tab is significant (it
        // marks a question line with an empty answer field).
        let (id_text, rest) = line
            .trim_start()
            .split_once(char::is_whitespace)
            .ok_or(DataError::BadLineId { line: line_no })?;
        let id: usize = id_text
            .parse()
            .map_err(|_| DataError::BadLineId { line: line_no })?;
        if id == 1 {
            story.clear();
        }

        if rest.contains('\t') {
            // Question line: question \t answer [\t supporting ids].
            let mut fields = rest.split('\t');
            let question_text = fields.next().unwrap_or("");
            let answer_text = fields
                .next()
                .ok_or(DataError::MalformedQuestion { line: line_no })?
                .trim();
            if answer_text.is_empty() {
                return Err(DataError::EmptyAnswer { line: line_no });
            }
            let supporting = match fields.next() {
                None => None,
                Some(ids) => Some(
                    ids.split_whitespace()
                        .map(|t| {
                            t.parse::<usize>()
                                .map_err(|_| DataError::BadSupportingIds { line: line_no })
                        })
                        .collect::<Result<Vec<usize>, _>>()?,
                ),
            };
            if answer_text.contains(',') || answer_text.contains(char::is_whitespace) {
                // Multi-word answers are out of scope; skip with a tally.
                skipped += 1;
                continue;
            }
            let question = tokenize_line(question_text);
            if question.is_empty() {
                return Err(DataError::MalformedQuestion { line: line_no });
            }
            let answer = answer_text.to_lowercase();
            for tok in question.iter().chain(story.iter().flatten()) {
                vocab.intern(tok);
            }
            vocab.intern(&answer);
            vocab.intern_answer(&answer);
            raws.push(RawSample {
                story: story.clone(),
                question,
                answer,
                supporting,
            });
        } else {
            let tokens = tokenize_line(rest);
            if tokens.is_empty() {
                return Err(DataError::BadLineId { line: line_no });
            }
            for tok in &tokens {
                vocab.intern(tok);
            }
            story.push(tokens);
        }
    }

    let samples = raws
        .iter()
        .map(|raw| encode_sample(raw, &vocab))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(ParsedCorpus {
        samples,
        vocab,
        skipped_multiword_answers: skipped,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::decode_sentence;

    const TINY: &str = "1 Mary went to the kitchen.\n2 Where is Mary?\tkitchen\t1\n";

    #[test]
    fn two_line_story_parses_to_one_sample() {
        let corpus = parse_babi(TINY.as_bytes()).unwrap();
        assert_eq!(corpus.samples.len(), 1);
        let s = &corpus.samples[0];
        assert_eq!(s.story.len(), 1);
        assert_eq!(
            decode_sentence(&s.story[0], &corpus.vocab),
            vec!["mary", "went", "to", "the", "kitchen"]
        );
        assert_eq!(
            decode_sentence(&s.question, &corpus.vocab),
            vec!["where", "is", "mary"]
        );
        assert_eq!(s.answer, corpus.vocab.answer_label("kitchen").unwrap());
        assert_eq!(s.supporting_fact_ids, Some(vec![1]));
    }

    #[test]
    fn id_reset_starts_a_new_story_block() {
        let text = "\
1 John moved to the garden.
2 Where is John?\tgarden\t1
1 Sandra ran to the office.
2 Where is Sandra?\toffice\t1
";
        let corpus = parse_babi(text.as_bytes()).unwrap();
        assert_eq!(corpus.samples.len(), 2);
        // The second sample's story contains only its own block.
        assert_eq!(corpus.samples[1].story.len(), 1);
        assert_eq!(
            decode_sentence(&corpus.samples[1].story[0], &corpus.vocab)[0],
            "sandra"
        );
    }

    #[test]
    fn questions_do_not_join_the_story() {
        let text = "\
1 Mary went to the kitchen.
2 Where is Mary?\tkitchen\t1
3 John went to the garden.
4 Where is John?\tgarden\t3
";
        let corpus = parse_babi(text.as_bytes()).unwrap();
        assert_eq!(corpus.samples[1].story.len(), 2);
    }

    #[test]
    fn empty_input_yields_empty_corpus() {
        let corpus = parse_babi("".as_bytes()).unwrap();
        assert!(corpus.samples.is_empty());
        assert_eq!(corpus.vocab.vocab_size(), 0);
        assert_eq!(corpus.skipped_multiword_answers, 0);
    }

    #[test]
    fn missing_id_reports_line_number() {
        let text = "1 Mary went home.\nno id here\n";
        match parse_babi(text.as_bytes()) {
            Err(DataError::BadLineId { line: 2 }) => {}
            other => panic!("expected bad-id at line 2, got {other:?}"),
        }
    }

    #[test]
    fn question_without_answer_field_reports_line_number() {
        let text = "1 Mary went home.\n2 Where is Mary?\t\n";
        match parse_babi(text.as_bytes()) {
            Err(DataError::EmptyAnswer { line: 2 }) => {}
            other => panic!("expected empty-answer at line 2, got {other:?}"),
        }
    }

    #[test]
    fn multiword_answers_are_skipped_with_a_count() {
        let text = "\
1 The path goes north then east.
2 How do you go?\tn,e\t1
3 Where does it start?\tnorth\t1
";
        let corpus = parse_babi(text.as_bytes()).unwrap();
        assert_eq!(corpus.skipped_multiword_answers, 1);
        assert_eq!(corpus.samples.len(), 1);
        assert_eq!(corpus.vocab.answer_count(), 1);
    }

    #[test]
    fn tokenizer_strips_trailing_punctuation_and_lowercases() {
        assert_eq!(
            tokenize_line("Where is Mary?"),
            vec!["where", "is", "mary"]
        );
        assert_eq!(
            tokenize_line("John went BACK."),
            vec!["john", "went", "back"]
        );
    }

    #[test]
    fn answers_count_toward_vocabulary() {
        // The answer word also appears as a token so sentences mentioning
        // it later encode cleanly.
        let corpus = parse_babi(TINY.as_bytes()).unwrap();
        assert!(corpus.vocab.token_index("kitchen").is_some());
    }
}
