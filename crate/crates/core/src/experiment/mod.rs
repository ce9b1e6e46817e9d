//! Sweeps, figure presets, validation and output.

pub mod output;
pub mod presets;
mod reference_data;
pub mod sweep;
pub mod validate;

pub use output::Format;
pub use presets::{preset, reproduce_figure, FigurePreset, FigureReport, PRESET_IDS};
pub use sweep::{run_sweep, GapPair, NormalizerChoice, SweepRow, SweepSpec, SweepTable};
pub use validate::{validate, validate_with, Suite, ValidationHooks};
