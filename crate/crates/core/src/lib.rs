//! Operator circuits for finite-dimensional quantum theory: typed wiring,
//! circuit-trace contraction, duotensors, physicality checks, gadget
//! factories and numeric reconstruction witnesses.

pub mod circuit;
pub mod dsl;
pub mod duotensor;
pub mod error;
pub mod fragment;
pub mod gadgets;
pub mod linalg;
pub mod physicality;
pub mod reconstruction;

pub use circuit::{FragmentNode, Payload, PortRef, SystemType, ValidationReport, Violation, Wire, WireGraph};
pub use error::{Error, Result};
pub use fragment::{ChoiForm, ContractionOrder, OperatorFragment, Port};
pub use linalg::{CMatrix, DenseHermitian, Label, LabeledSpace, C64};
