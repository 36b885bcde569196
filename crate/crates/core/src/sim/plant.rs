//! Containers, presses and the bales they produce.

use serde::{Deserialize, Serialize};

use crate::material::MaterialVector;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Container {
    pub contents: MaterialVector,
    /// Material type this container is meant to collect (equal to its index).
    pub dominant_type: usize,
    pub capacity: f64,
    pub threshold: f64,
}

impl Container {
    pub fn new(dominant_type: usize, capacity: f64, threshold: f64) -> Self {
        Container {
            contents: MaterialVector::ZERO,
            dominant_type,
            capacity,
            threshold,
        }
    }

    pub fn fill(&self) -> f64 {
        self.contents.total()
    }

    pub fn is_empty(&self) -> bool {
        self.contents.is_empty()
    }

    pub fn free_capacity(&self) -> f64 {
        (self.capacity - self.fill()).max(0.0)
    }

    /// Share of the dominant type; an empty container reports its threshold.
    pub fn purity(&self) -> f64 {
        let total = self.fill();
        if total > 0.0 {
            (self.contents[self.dominant_type] / total).clamp(0.0, 1.0)
        } else {
            self.threshold
        }
    }

    /// Adds `inflow`, scaling it down to the free capacity. Returns the volume
    /// that did not fit.
    pub fn deposit(&mut self, inflow: MaterialVector) -> f64 {
        let offered = inflow.total();
        if offered <= 0.0 {
            return 0.0;
        }
        let free = self.free_capacity();
        if offered <= free {
            self.contents += inflow;
            return 0.0;
        }
        let accepted = inflow.scaled(free / offered);
        self.contents += accepted;
        offered - accepted.total()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PressStatus {
    Idle,
    Busy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bale {
    /// Emptied volume in units of the standard bale size.
    pub size_bales: f64,
    pub volume: f64,
    pub purity: f64,
    pub material: usize,
    pub press: usize,
    pub created_at: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Press {
    /// Steps until the press is free again; the press is idle iff this is zero.
    pub remaining: u32,
    pub history: Vec<Bale>,
}

impl Press {
    pub fn status(&self) -> PressStatus {
        if self.remaining == 0 {
            PressStatus::Idle
        } else {
            PressStatus::Busy
        }
    }

    pub fn is_idle(&self) -> bool {
        self.remaining == 0
    }

    pub fn tick(&mut self) {
        self.remaining = self.remaining.saturating_sub(1);
    }
}
