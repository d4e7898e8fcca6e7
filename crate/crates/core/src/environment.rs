//! Slot-by-slot world the online loop runs against.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::model::types::{EnergyParams, SensingDatum, SlotObservation, Topology, ValueWeights};
use crate::real::Real;

/// Model constants shared by every slot of a world.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelSettings<T> {
    pub noise_power_w: T,
    pub rate_floor_bps: T,
    pub weights: ValueWeights<T>,
    pub energy: EnergyParams<T>,
    pub stability_margin: T,
}

/// One slot of the world: the observation plus the catalog state at that slot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Frame<T> {
    pub observation: SlotObservation<T>,
    pub catalog: Vec<SensingDatum<T>>,
}

/// A sequential source of frames.
pub trait Environment<T: Real> {
    fn topology(&self) -> &Arc<Topology<T>>;
    fn settings(&self) -> &ModelSettings<T>;
    fn horizon(&self) -> usize;
    /// Frame for the next slot, `None` past the horizon.
    fn next_frame(&mut self) -> Option<Result<Frame<T>>>;
}

/// A fully materialized world, e.g. loaded from a snapshot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Replay<T> {
    pub topology: Arc<Topology<T>>,
    pub settings: ModelSettings<T>,
    pub frames: Vec<Frame<T>>,
    #[serde(skip)]
    cursor: usize,
}

impl<T: Real> Replay<T> {
    pub fn new(topology: Arc<Topology<T>>, settings: ModelSettings<T>, frames: Vec<Frame<T>>) -> Self {
        Self { topology, settings, frames, cursor: 0 }
    }

    pub fn rewind(&mut self) {
        self.cursor = 0;
    }
}

impl<T: Real> Environment<T> for Replay<T> {
    fn topology(&self) -> &Arc<Topology<T>> {
        &self.topology
    }

    fn settings(&self) -> &ModelSettings<T> {
        &self.settings
    }

    fn horizon(&self) -> usize {
        self.frames.len()
    }

    fn next_frame(&mut self) -> Option<Result<Frame<T>>> {
        let f = self.frames.get(self.cursor).cloned()?;
        self.cursor += 1;
        Some(Ok(f))
    }
}
