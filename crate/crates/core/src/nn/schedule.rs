use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScheduleKind {
    Cosine,
}

/// Learning-rate schedule decaying from `lr_max` to zero over `total_steps`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainSchedule {
    pub lr_max: f64,
    pub total_steps: u64,
    pub kind: ScheduleKind,
}

impl TrainSchedule {
    pub fn cosine(lr_max: f64, total_steps: u64) -> Self {
        Self {
            lr_max,
            total_steps,
            kind: ScheduleKind::Cosine,
        }
    }

    /// Learning rate at `step`; steps past the end clamp to `total_steps`.
    pub fn lr(&self, step: u64) -> f64 {
        cosine_lr(step, self)
    }
}

/// `lr_max * 0.5 * (1 + cos(pi * step / total_steps))`, step clamped to `[0, total_steps]`.
pub fn cosine_lr(step: u64, schedule: &TrainSchedule) -> f64 {
    if schedule.total_steps == 0 {
        return 0.0;
    }
    let step = step.min(schedule.total_steps);
    if step == schedule.total_steps {
        return 0.0;
    }
    let frac = step as f64 / schedule.total_steps as f64;
    schedule.lr_max * 0.5 * (1.0 + (std::f64::consts::PI * frac).cos())
}
