use std::fmt;

use serde::{Deserialize, Serialize};

/// The three interdependent subtasks.
///
/// A: is a comment good for its own thread question. B: is a retrieved
/// question related to the new question. C: is a comment relevant to the new
/// question.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Task {
    A,
    B,
    C,
}

impl Task {
    pub const ALL: [Task; 3] = [Task::A, Task::B, Task::C];

    pub fn index(self) -> usize {
        match self {
            Task::A => 0,
            Task::B => 1,
            Task::C => 2,
        }
    }

    pub fn lower(self) -> &'static str {
        match self {
            Task::A => "a",
            Task::B => "b",
            Task::C => "c",
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Task::A => "A",
            Task::B => "B",
            Task::C => "C",
        };
        f.write_str(s)
    }
}

/// Per-task values, indexable by [`Task`].
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PerTask<T> {
    pub a: T,
    pub b: T,
    pub c: T,
}

impl<T> PerTask<T> {
    pub fn new(a: T, b: T, c: T) -> Self {
        Self { a, b, c }
    }

    pub fn get(&self, task: Task) -> &T {
        match task {
            Task::A => &self.a,
            Task::B => &self.b,
            Task::C => &self.c,
        }
    }

    pub fn get_mut(&mut self, task: Task) -> &mut T {
        match task {
            Task::A => &mut self.a,
            Task::B => &mut self.b,
            Task::C => &mut self.c,
        }
    }

    pub fn as_ref(&self) -> PerTask<&T> {
        PerTask::new(&self.a, &self.b, &self.c)
    }

    pub fn map<U>(&self, mut f: impl FnMut(Task, &T) -> U) -> PerTask<U> {
        PerTask {
            a: f(Task::A, &self.a),
            b: f(Task::B, &self.b),
            c: f(Task::C, &self.c),
        }
    }
}
