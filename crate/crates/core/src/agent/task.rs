use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::render::ViewBundle;
use crate::vlm::{self, ChatRequest, ChatTurn, Role, UserPart, VlmBackend};
use crate::{Error, Result};

pub const TASK_SYSTEM: &str = "You are an assistant that understands 3D scenes from multi-view images.";

pub const QA_INSTRUCTION: &str = "Understand a 3D scene without direct access to the point clouds but only images from different viewpoints. \
Later, I'll ask you a series of questions about the scene, and I'd like your responses one-by-one with correspondence number, \
in the order the questions are presented. Please keep each response short and clear.";

pub const QA_EXAMPLE_BLOCK: &str = "Examples: questions: [1. How many chairs are around the table? 2. what's the color of the table? \
3. Where is the beige wooden working table placed? 4. What is in the corner of the bath? ].\n\
Answers: [1. 3 2. Brown 3. right of tall cabinet 4. shower]";

const QA_RETRY: &str = "Your previous reply did not contain one numbered answer per question. Reply ONLY with 'Answers: [1. ... 2. ...]' covering every question.";

const SCENE_INTRO: &str = "The images show one 3D scene from different viewpoints.";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    Qa,
    Caption,
    Decomposition,
    Dialog,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum TaskPayload {
    Qa { questions: Vec<String> },
    Caption,
    Decomposition { goal: Option<String> },
    /// `history` alternates user and assistant messages, starting with the user.
    Dialog { history: Vec<String>, message: String },
}

impl TaskPayload {
    pub fn kind(&self) -> TaskKind {
        match self {
            TaskPayload::Qa { .. } => TaskKind::Qa,
            TaskPayload::Caption => TaskKind::Caption,
            TaskPayload::Decomposition { .. } => TaskKind::Decomposition,
            TaskPayload::Dialog { .. } => TaskKind::Dialog,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskAnswer {
    pub kind: TaskKind,
    /// One entry per question for QA; the single reply text otherwise.
    pub answers: Vec<String>,
    pub raw_reply: String,
}

impl TaskAnswer {
    pub fn text(&self) -> &str {
        self.answers.first().map_or("", String::as_str)
    }
}

fn images(views: &[ViewBundle]) -> Vec<UserPart> {
    views.iter().map(|v| UserPart::Image(Arc::new(v.color.clone()))).collect()
}

pub fn qa_text(questions: &[String]) -> String {
    let mut s = format!("{QA_INSTRUCTION}\n{QA_EXAMPLE_BLOCK}\nQuestions: [");
    for (k, q) in questions.iter().enumerate() {
        if k > 0 {
            s.push(' ');
        }
        s.push_str(&format!("{}. {}", k + 1, q.trim()));
    }
    s.push_str("].\nAnswers:");
    s
}

/// Kind-specific prompt with every view image attached.
pub fn build_task_request(views: &[ViewBundle], payload: &TaskPayload) -> Result<ChatRequest> {
    if views.is_empty() {
        return Err(Error::InvalidRequest("task needs at least one view".into()));
    }
    let mut parts = images(views);
    let req = match payload {
        TaskPayload::Qa { questions } => {
            if questions.is_empty() {
                return Err(Error::InvalidRequest("no questions".into()));
            }
            parts.push(UserPart::Text(qa_text(questions)));
            ChatRequest::new(TASK_SYSTEM, parts)
        }
        TaskPayload::Caption => {
            parts.push(UserPart::Text(format!(
                "{SCENE_INTRO} Describe the scene in a few sentences: the main objects, their attributes and where they are relative to each other."
            )));
            ChatRequest::new(TASK_SYSTEM, parts)
        }
        TaskPayload::Decomposition { goal } => {
            let goal = goal.as_deref().unwrap_or("tidy up the room");
            parts.push(UserPart::Text(format!(
                "{SCENE_INTRO} Break the task \"{goal}\" into a short numbered list of concrete steps that refer to objects visible in the scene."
            )));
            ChatRequest::new(TASK_SYSTEM, parts)
        }
        TaskPayload::Dialog { history, message } => {
            let mut turns = Vec::new();
            for (k, text) in history.iter().enumerate() {
                let role = if k % 2 == 0 { Role::User } else { Role::Assistant };
                let mut tp = Vec::new();
                if k == 0 {
                    tp.append(&mut parts);
                    tp.push(UserPart::Text(format!("{SCENE_INTRO} {text}")));
                } else {
                    tp.push(UserPart::Text(text.clone()));
                }
                turns.push(ChatTurn { role, parts: tp });
            }
            let user = if history.is_empty() {
                parts.push(UserPart::Text(format!("{SCENE_INTRO} {message}")));
                parts
            } else {
                vec![UserPart::Text(message.clone())]
            };
            let mut req = ChatRequest::new(TASK_SYSTEM, user);
            req.history = turns;
            req
        }
    };
    Ok(req)
}

/// Runs one task. QA replies get one re-prompt when the numbered list does
/// not cover every question.
pub fn run_task(views: &[ViewBundle], payload: &TaskPayload, backend: &dyn VlmBackend) -> Result<TaskAnswer> {
    let req = build_task_request(views, payload)?;
    let reply = vlm::complete(&req, backend)?;
    let kind = payload.kind();
    let TaskPayload::Qa { questions } = payload else {
        return Ok(TaskAnswer {
            kind,
            answers: vec![reply.text.clone()],
            raw_reply: reply.text,
        });
    };
    match parse_numbered_answers(&reply.text, questions.len()) {
        Ok(answers) => Ok(TaskAnswer {
            kind,
            answers,
            raw_reply: reply.text,
        }),
        Err(_) => {
            let mut retry = req.clone();
            retry.user_parts.push(UserPart::Text(QA_RETRY.into()));
            let second = vlm::complete(&retry, backend)?;
            let answers = parse_numbered_answers(&second.text, questions.len())?;
            Ok(TaskAnswer {
                kind,
                answers,
                raw_reply: second.text,
            })
        }
    }
}

/// Finds `k.` or `k)` at or after `from`, not glued to a preceding
/// alphanumeric and not followed by a digit. Returns (start, end).
fn find_marker(text: &str, k: usize, from: usize) -> Option<(usize, usize)> {
    let bytes = text.as_bytes();
    let num = k.to_string();
    let mut pos = from;
    while let Some(off) = text[pos..].find(&num) {
        let start = pos + off;
        let after = start + num.len();
        let before_ok = start == 0 || !(bytes[start - 1].is_ascii_alphanumeric());
        let sep_ok = matches!(bytes.get(after), Some(b'.') | Some(b')'));
        let next_ok = bytes.get(after + 1).is_none_or(|b| !b.is_ascii_digit());
        if before_ok && sep_ok && next_ok {
            return Some((start, after + 1));
        }
        pos = start + 1;
        while !text.is_char_boundary(pos) {
            pos += 1;
        }
    }
    None
}

fn clean(s: &str) -> String {
    s.trim_matches(|c: char| c.is_whitespace() || matches!(c, '[' | ']' | ',' | ';'))
        .to_string()
}

/// Splits a numbered reply into exactly `n` answers.
pub fn parse_numbered_answers(text: &str, n: usize) -> Result<Vec<String>> {
    if n == 0 {
        return Err(Error::InvalidSpec("answer count must be at least 1".into()));
    }
    let mut spans = Vec::with_capacity(n + 1);
    let mut pos = 0;
    for k in 1..=n {
        let (s, e) = find_marker(text, k, pos).ok_or_else(|| Error::AnswerParse(format!("missing item {k} of {n}")))?;
        spans.push((s, e));
        pos = e;
    }
    let tail = find_marker(text, n + 1, pos).map_or(text.len(), |(s, _)| s);
    Ok((0..n)
        .map(|k| {
            let end = if k + 1 < n { spans[k + 1].0 } else { tail };
            clean(&text[spans[k].1..end])
        })
        .collect())
}
