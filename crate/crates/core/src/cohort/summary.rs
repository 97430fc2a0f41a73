use serde::{Deserialize, Serialize};

use super::CohortManifest;
use crate::labels::Task;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassCount {
    pub class: u8,
    pub name: String,
    pub count: usize,
    pub percent: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskDistribution {
    pub task: Task,
    pub total: usize,
    pub classes: Vec<ClassCount>,
}

impl TaskDistribution {
    pub fn count(&self, class: u8) -> usize {
        self.classes.iter().find(|c| c.class == class).map_or(0, |c| c.count)
    }

    pub fn percent(&self, class: u8) -> f64 {
        self.classes.iter().find(|c| c.class == class).map_or(0.0, |c| c.percent)
    }
}

/// Per-task label counts, laid out like a cohort characteristics table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistributionTable {
    pub total_images: usize,
    pub tasks: Vec<TaskDistribution>,
}

impl DistributionTable {
    pub fn task(&self, task: Task) -> &TaskDistribution {
        self.tasks.iter().find(|t| t.task == task).expect("every task is summarized")
    }

    /// Rows of `task, class, count, percent` for CSV export.
    pub fn rows(&self) -> Vec<(Task, String, usize, f64)> {
        self.tasks
            .iter()
            .flat_map(|t| t.classes.iter().map(move |c| (t.task, c.name.clone(), c.count, c.percent)))
            .collect()
    }
}

/// `1781` and `13.5308...` render as `1,781 (13.53)`.
pub fn format_count_percent(count: usize, percent: f64) -> String {
    let digits = count.to_string();
    let mut grouped = String::new();
    for (i, ch) in digits.chars().enumerate() {
        if i > 0 && (digits.len() - i) % 3 == 0 {
            grouped.push(',');
        }
        grouped.push(ch);
    }
    format!("{grouped} ({percent:.2})")
}

pub fn label_summary(manifest: &CohortManifest) -> DistributionTable {
    let total = manifest.len();
    let tasks = Task::ALL
        .iter()
        .map(|&task| {
            let mut counts = vec![0usize; task.num_classes() as usize];
            for r in manifest.records() {
                counts[r.labels.get(task) as usize] += 1;
            }
            let classes = task
                .classes()
                .map(|class| {
                    let count = counts[class as usize];
                    let percent = if total == 0 { 0.0 } else { count as f64 / total as f64 * 100.0 };
                    ClassCount { class, name: task.class_name(class).to_string(), count, percent }
                })
                .collect();
            TaskDistribution { task, total, classes }
        })
        .collect();
    DistributionTable { total_images: total, tasks }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cohort::synthetic::{simple_manifest, SyntheticCase};
    use crate::labels::ExamLabels;

    #[test]
    fn empty_manifest_is_all_zero() {
        let t = label_summary(&CohortManifest::default());
        assert_eq!(t.total_images, 0);
        assert!(t.tasks.iter().all(|d| d.classes.iter().all(|c| c.count == 0 && c.percent == 0.0)));
    }

    #[test]
    fn two_records_drusen_split() {
        let m = simple_manifest(&[
            SyntheticCase::new("a", "p").with_labels(ExamLabels::new(0, 0, 0).unwrap()),
            SyntheticCase::new("b", "q").with_labels(ExamLabels::new(0, 0, 2).unwrap()),
        ]);
        let d = label_summary(&m);
        let drus = d.task(Task::Drus);
        assert_eq!(drus.percent(0), 50.0);
        assert_eq!(drus.percent(1), 0.0);
        assert_eq!(drus.percent(2), 50.0);
    }

    #[test]
    fn formatting() {
        assert_eq!(format_count_percent(1781, 1781.0 / 13166.0 * 100.0), "1,781 (13.53)");
        assert_eq!(format_count_percent(46167, 100.0), "46,167 (100.00)");
        assert_eq!(format_count_percent(5, 1.0), "5 (1.00)");
    }
}
