//! Fixed-point Izhikevich neuron processing, the custom RISC-V neuron
//! instructions, a cycle-counting RV32IM machine, and network simulation.

pub mod dcu;
pub mod fixedpoint;
pub mod isa;
pub mod machine;
pub mod npu;
pub mod netsim;
