//! HTTP plug-ins: a retrieval scorer and a modality answerer served by
//! another process.

use std::sync::atomic::{AtomicBool, Ordering};
use std::time::Duration;

use mmhop_core::atomic::Modality;
use mmhop_core::distractor::{LexicalScorer, RetrievalScorer};
use mmhop_core::executor::{Answers, ExecError, HopRequest, ModalityAnswerer};
use serde::{Deserialize, Serialize};
use serde_json::json;

fn client(timeout: Duration) -> reqwest::blocking::Client {
    reqwest::blocking::Client::builder()
        .timeout(timeout)
        .build()
        .expect("http client builds")
}

#[derive(Debug, Deserialize)]
struct ScoreResponse {
    scores: Vec<f64>,
}

/// POSTs `{question, paragraphs}` and reads `{scores}`. Any failure falls
/// back to the lexical scorer, with one warning on stderr.
pub struct ExternalScorer {
    url: String,
    client: reqwest::blocking::Client,
    fallback: LexicalScorer,
    warned: AtomicBool,
}

impl ExternalScorer {
    pub fn new(url: &str, timeout: Duration, fallback: LexicalScorer) -> Self {
        ExternalScorer {
            url: url.to_string(),
            client: client(timeout),
            fallback,
            warned: AtomicBool::new(false),
        }
    }

    fn remote(&self, question: &str, paragraphs: &[&str]) -> Result<Vec<f64>, String> {
        let r: ScoreResponse = self
            .client
            .post(&self.url)
            .json(&json!({ "question": question, "paragraphs": paragraphs }))
            .send()
            .and_then(|r| r.error_for_status())
            .and_then(|r| r.json())
            .map_err(|e| e.to_string())?;
        if r.scores.len() != paragraphs.len() {
            return Err(format!("{} scores for {} paragraphs", r.scores.len(), paragraphs.len()));
        }
        Ok(r.scores)
    }
}

impl RetrievalScorer for ExternalScorer {
    fn score(&self, question: &str, paragraph: &str) -> f64 {
        self.score_batch(question, &[paragraph])[0]
    }

    fn score_batch(&self, question: &str, paragraphs: &[&str]) -> Vec<f64> {
        match self.remote(question, paragraphs) {
            Ok(s) => s,
            Err(e) => {
                if !self.warned.swap(true, Ordering::Relaxed) {
                    eprintln!("warning: scorer {} failed ({e}); using the lexical scorer", self.url);
                }
                self.fallback.score_batch(question, paragraphs)
            }
        }
    }
}

#[derive(Debug, Serialize)]
struct ContextRef<'a> {
    qid: &'a str,
    context_id: &'a str,
}

#[derive(Debug, Serialize)]
struct AnswerRequest<'a> {
    question: &'a str,
    question_type: &'a str,
    hop: u8,
    hop1_answers: Option<&'a [String]>,
    modality: Modality,
    context_ref: ContextRef<'a>,
}

/// One modality's answerer behind an HTTP endpoint. Fields are sent in the
/// fixed hop request order.
pub struct ExternalAnswerer {
    url: String,
    modality: Modality,
    client: reqwest::blocking::Client,
}

impl ExternalAnswerer {
    pub fn new(url: &str, modality: Modality, timeout: Duration) -> Self {
        ExternalAnswerer {
            url: url.to_string(),
            modality,
            client: client(timeout),
        }
    }
}

impl ModalityAnswerer for ExternalAnswerer {
    fn answer(&self, req: &HopRequest<'_>) -> Result<Answers, ExecError> {
        let body = AnswerRequest {
            question: req.question,
            question_type: req.question_type,
            hop: req.hop,
            hop1_answers: req.hop1_answers,
            modality: self.modality,
            context_ref: ContextRef {
                qid: &req.example.qid,
                context_id: &req.example.context.context_id,
            },
        };
        let a: Answers = self
            .client
            .post(&self.url)
            .json(&body)
            .send()
            .and_then(|r| r.error_for_status())
            .and_then(|r| r.json())
            .map_err(|e| ExecError::Answerer(format!("{}: {e}", self.url)))?;
        if a.confidences.len() != a.answers.len() {
            return Err(ExecError::Answerer(format!("{}: answers and confidences differ in length", self.url)));
        }
        Ok(a)
    }
}
