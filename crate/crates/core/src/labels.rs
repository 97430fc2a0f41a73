//! Task definitions and exam label codes shared by every stage.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// One of the three graded AMD tasks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Task {
    /// Presence of advanced (late) AMD.
    Advamd,
    /// Presence of pigmentary abnormalities.
    Pig,
    /// Maximum drusen size.
    Drus,
}

impl Task {
    pub const ALL: [Task; 3] = [Task::Advamd, Task::Pig, Task::Drus];

    /// Canonical upper-case key used in JSON answers.
    pub fn key(self) -> &'static str {
        match self {
            Task::Advamd => "ADVAMD",
            Task::Pig => "PIG",
            Task::Drus => "DRUS",
        }
    }

    /// Number of classes in the task's label domain.
    pub fn num_classes(self) -> u8 {
        match self {
            Task::Advamd | Task::Pig => 2,
            Task::Drus => 3,
        }
    }

    pub fn is_binary(self) -> bool {
        self.num_classes() == 2
    }

    pub fn contains(self, value: u8) -> bool {
        value < self.num_classes()
    }

    pub fn classes(self) -> impl Iterator<Item = u8> {
        0..self.num_classes()
    }

    /// Human readable class name, used in summaries.
    pub fn class_name(self, value: u8) -> &'static str {
        match (self, value) {
            (Task::Drus, 0) => "small/none",
            (Task::Drus, 1) => "intermediate",
            (Task::Drus, 2) => "large",
            (_, 0) => "no",
            (_, 1) => "yes",
            _ => "invalid",
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.key())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown task `{0}` (expected ADVAMD, PIG or DRUS)")]
pub struct UnknownTask(pub String);

impl FromStr for Task {
    type Err = UnknownTask;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "advamd" | "lateamd" | "advanced amd" => Ok(Task::Advamd),
            "pig" => Ok(Task::Pig),
            "drus" => Ok(Task::Drus),
            _ => Err(UnknownTask(s.to_string())),
        }
    }
}

/// Ground-truth reading-center grades for one image.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ExamLabels {
    pub advamd: u8,
    pub pig: u8,
    pub drus: u8,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("{task} value {value} is outside its domain")]
pub struct LabelOutOfDomain {
    pub task: Task,
    pub value: i64,
}

impl ExamLabels {
    pub fn new(advamd: u8, pig: u8, drus: u8) -> Result<Self, LabelOutOfDomain> {
        let labels = ExamLabels { advamd, pig, drus };
        for task in Task::ALL {
            let value = labels.get(task);
            if !task.contains(value) {
                return Err(LabelOutOfDomain { task, value: value.into() });
            }
        }
        Ok(labels)
    }

    pub fn get(&self, task: Task) -> u8 {
        match task {
            Task::Advamd => self.advamd,
            Task::Pig => self.pig,
            Task::Drus => self.drus,
        }
    }

    pub fn set(&mut self, task: Task, value: u8) {
        match task {
            Task::Advamd => self.advamd = value,
            Task::Pig => self.pig = value,
            Task::Drus => self.drus = value,
        }
    }

    /// Every combination of the label domain (2 x 2 x 3 = 12).
    pub fn all_combinations() -> Vec<ExamLabels> {
        let mut out = Vec::with_capacity(12);
        for advamd in 0..2 {
            for pig in 0..2 {
                for drus in 0..3 {
                    out.push(ExamLabels { advamd, pig, drus });
                }
            }
        }
        out
    }
}

/// A possibly incomplete set of task answers extracted from model output.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PartialLabels {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub advamd: Option<u8>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pig: Option<u8>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub drus: Option<u8>,
}

impl PartialLabels {
    pub fn get(&self, task: Task) -> Option<u8> {
        match task {
            Task::Advamd => self.advamd,
            Task::Pig => self.pig,
            Task::Drus => self.drus,
        }
    }

    pub fn set(&mut self, task: Task, value: u8) {
        match task {
            Task::Advamd => self.advamd = Some(value),
            Task::Pig => self.pig = Some(value),
            Task::Drus => self.drus = Some(value),
        }
    }

    pub fn is_empty(&self) -> bool {
        Task::ALL.iter().all(|t| self.get(*t).is_none())
    }
}

impl From<ExamLabels> for PartialLabels {
    fn from(l: ExamLabels) -> Self {
        PartialLabels { advamd: Some(l.advamd), pig: Some(l.pig), drus: Some(l.drus) }
    }
}
