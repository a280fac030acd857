//! Streaming accelerator model: compilation into pipeline stages, a
//! cycle-level simulator, resource/power/energy estimates and a structural
//! netlist format.

pub mod design;
pub mod device;
mod fit;
pub mod netlist;
pub mod power;
pub mod reference;
pub mod resources;
pub mod sim;

pub use design::{
    analytic_cycles, compile, compile_with, energy_mj, latency_ms, stage_timing, AcceleratorDesign, CycleParams,
    LayerSchedule, LinkPlan, Port, StageOp,
};
pub use device::{DeviceProfile, BRAM18_BITS};
pub use netlist::{emit_netlist, parse_netlist};
pub use power::{calibrate_power, estimate_power, Calibration, PowerModel, PowerSample};
pub use reference::{fit_cycle_params, reference_cycle_fit, reference_power_model, CycleFit, ReferenceRow, REFERENCE_ROWS};
pub use resources::{estimate_resources, estimate_resources_with, memories, LutModel, Memory, ResourceReport};
pub use sim::{simulate, simulate_with, SimOptions, SimResult};
