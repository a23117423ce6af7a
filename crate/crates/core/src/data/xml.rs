//! Reader for the SemEval cQA XML layout:
//!
//! ```text
//! OrgQuestion[ORGQ_ID] > OrgQSubject, OrgQBody, Thread >
//!     RelQuestion[RELQ_ID, RELQ_USERID, RELQ_RELEVANCE2ORGQ] > RelQSubject, RelQBody
//!     RelComment[RELC_ID, RELC_USERID, RELC_RELEVANCE2ORGQ, RELC_RELEVANCE2RELQ] > RelCText
//! ```
//!
//! Consecutive `OrgQuestion` elements with the same id are merged into one
//! group, as the official files repeat the original question per thread.
//! Subject and body are joined with a single space. A comment's relevance to
//! its own thread gives the A label and its relevance to the original
//! question the C label.

use quick_xml::events::{BytesStart, Event};
use quick_xml::Reader;

use super::{validate, Comment, LabelMap, QuestionGroup, Thread};
use crate::error::{Error, Result};
use crate::task::Task;

#[derive(Clone, Copy, PartialEq)]
enum Field {
    OrgSubject,
    OrgBody,
    RelSubject,
    RelBody,
    CommentText,
}

struct Ctx<'a> {
    origin: &'a str,
    map: &'a LabelMap,
}

impl Ctx<'_> {
    fn err(&self, pos: u64, message: impl Into<String>) -> Error {
        Error::Malformed {
            location: format!("{}: byte {pos}", self.origin),
            message: message.into(),
        }
    }

    fn attr(&self, e: &BytesStart<'_>, name: &str, pos: u64) -> Result<Option<String>> {
        for a in e.attributes() {
            let a = a.map_err(|err| self.err(pos, err.to_string()))?;
            if a.key.as_ref() == name.as_bytes() {
                let v = a.unescape_value().map_err(|err| self.err(pos, err.to_string()))?;
                return Ok(Some(v.into_owned()));
            }
        }
        Ok(None)
    }

    fn required(&self, e: &BytesStart<'_>, name: &str, pos: u64) -> Result<String> {
        self.attr(e, name, pos)?
            .ok_or_else(|| self.err(pos, format!("missing attribute {name}")))
    }

    fn label(&self, e: &BytesStart<'_>, name: &str, task: Task, pos: u64) -> Result<Option<bool>> {
        match self.attr(e, name, pos)? {
            None => Ok(None),
            Some(raw) if raw.is_empty() || raw == "?" => Ok(None),
            Some(raw) => self
                .map
                .resolve(task, &raw, &format!("{}: byte {pos} ({name})", self.origin))
                .map(Some),
        }
    }
}

fn join(a: &str, b: &str) -> String {
    match (a.trim(), b.trim()) {
        ("", b) => b.to_string(),
        (a, "") => a.to_string(),
        (a, b) => format!("{a} {b}"),
    }
}

pub fn parse_semeval_xml(text: &str, map: &LabelMap, origin: &str) -> Result<Vec<QuestionGroup>> {
    let ctx = Ctx { origin, map };
    let mut reader = Reader::from_str(text);
    let mut groups: Vec<QuestionGroup> = Vec::new();
    let mut subject = String::new();
    let mut body = String::new();
    let mut rel_subject = String::new();
    let mut rel_body = String::new();
    let mut field: Option<Field> = None;
    let mut buffer = String::new();
    let mut group: Option<QuestionGroup> = None;
    let mut thread: Option<Thread> = None;
    let mut comment: Option<Comment> = None;

    loop {
        let pos = reader.buffer_position();
        let event = reader
            .read_event()
            .map_err(|e| ctx.err(reader.buffer_position(), e.to_string()))?;
        match event {
            Event::Start(e) | Event::Empty(e) if e.name().as_ref() == b"OrgQuestion" => {
                let id = ctx.required(&e, "ORGQ_ID", pos)?;
                match &group {
                    Some(g) if g.id == id => {}
                    _ => {
                        if let Some(g) = group.take() {
                            groups.push(g);
                        }
                        group = Some(QuestionGroup {
                            id,
                            text: String::new(),
                            author: None,
                            threads: Vec::new(),
                        });
                    }
                }
                subject.clear();
                body.clear();
            }
            Event::Start(e) => {
                let name = e.name().as_ref().to_vec();
                match name.as_slice() {
                    b"OrgQSubject" => field = Some(Field::OrgSubject),
                    b"OrgQBody" => field = Some(Field::OrgBody),
                    b"RelQSubject" => field = Some(Field::RelSubject),
                    b"RelQBody" => field = Some(Field::RelBody),
                    b"RelCText" => field = Some(Field::CommentText),
                    b"Thread" => {
                        if group.is_none() {
                            return Err(ctx.err(pos, "Thread outside OrgQuestion"));
                        }
                    }
                    b"RelQuestion" => {
                        let g = group
                            .as_ref()
                            .ok_or_else(|| ctx.err(pos, "RelQuestion outside OrgQuestion"))?;
                        rel_subject.clear();
                        rel_body.clear();
                        thread = Some(Thread {
                            id: ctx.required(&e, "RELQ_ID", pos)?,
                            rank: g.threads.len() + 1,
                            text: String::new(),
                            author: ctx.attr(&e, "RELQ_USERID", pos)?,
                            label_b: ctx.label(&e, "RELQ_RELEVANCE2ORGQ", Task::B, pos)?,
                            features: None,
                            comments: Vec::new(),
                        });
                    }
                    b"RelComment" => {
                        let g = group
                            .as_mut()
                            .ok_or_else(|| ctx.err(pos, "RelComment outside OrgQuestion"))?;
                        let t = g
                            .threads
                            .last()
                            .ok_or_else(|| ctx.err(pos, "RelComment before RelQuestion"))?;
                        comment = Some(Comment {
                            id: ctx.required(&e, "RELC_ID", pos)?,
                            rank: t.comments.len() + 1,
                            text: String::new(),
                            author: ctx.attr(&e, "RELC_USERID", pos)?,
                            label_a: ctx.label(&e, "RELC_RELEVANCE2RELQ", Task::A, pos)?,
                            label_c: ctx.label(&e, "RELC_RELEVANCE2ORGQ", Task::C, pos)?,
                            features: None,
                            features_c: None,
                        });
                    }
                    _ => {}
                }
                buffer.clear();
            }
            Event::Text(t) => {
                if field.is_some() {
                    let s = t.unescape().map_err(|e| ctx.err(pos, e.to_string()))?;
                    buffer.push_str(&s);
                }
            }
            Event::CData(t) => {
                if field.is_some() {
                    buffer.push_str(&String::from_utf8_lossy(&t));
                }
            }
            Event::End(e) => {
                let name = e.name().as_ref().to_vec();
                match name.as_slice() {
                    b"OrgQSubject" => subject = std::mem::take(&mut buffer),
                    b"OrgQBody" => body = std::mem::take(&mut buffer),
                    b"RelQSubject" => rel_subject = std::mem::take(&mut buffer),
                    b"RelQBody" => rel_body = std::mem::take(&mut buffer),
                    b"RelCText" => {
                        if let Some(c) = comment.as_mut() {
                            c.text = std::mem::take(&mut buffer).trim().to_string();
                        }
                    }
                    b"RelQuestion" => {
                        if let (Some(mut t), Some(g)) = (thread.take(), group.as_mut()) {
                            t.text = join(&rel_subject, &rel_body);
                            g.threads.push(t);
                        }
                    }
                    b"RelComment" => {
                        if let (Some(c), Some(g)) = (comment.take(), group.as_mut()) {
                            if let Some(t) = g.threads.last_mut() {
                                t.comments.push(c);
                            }
                        }
                    }
                    b"OrgQuestion" => {
                        if let Some(g) = group.as_mut() {
                            let text = join(&subject, &body);
                            if g.text.is_empty() {
                                g.text = text;
                            }
                        }
                    }
                    _ => {}
                }
                field = None;
            }
            Event::Eof => break,
            _ => {}
        }
    }
    if let Some(g) = group.take() {
        groups.push(g);
    }
    validate(&groups)?;
    Ok(groups)
}
