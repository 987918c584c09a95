//! Driving-condition-aware integrated thermal and energy management (ITEM)
//! for a power-split hybrid electric vehicle.
//!
//! The pipeline runs bottom-up:
//!
//! * [`cycles`] loads drive cycles and cuts them into 20 s micro-trips with
//!   two features (average speed, maximum acceleration).
//! * [`clustering`] groups micro-trips with k-means into three driving
//!   conditions; [`recognizer`] trains a small classifier on those labels and
//!   runs it over a sliding speed window in real time.
//! * [`plant`] is the quasi-static power-split powertrain with battery
//!   electro-thermal-aging, engine coolant and cabin thermal states.
//! * [`control`] holds the low-level controllers (HVAC PIDs, engine power
//!   increments, battery cooling rule, rule-based EMS).
//! * [`agents`] trains two independent double-DQN agents (cabin thermal and
//!   energy management) that optionally observe the recognized condition.
//! * [`report`] aggregates episodes and compares recognition-aware against
//!   recognition-blind control.

pub mod agents;
pub mod clustering;
pub mod config;
pub mod control;
pub mod cycles;
pub mod error;
pub mod manifest;
pub mod nn;
pub mod plant;
pub mod recognizer;
pub mod report;

pub use error::{Error, Result};
