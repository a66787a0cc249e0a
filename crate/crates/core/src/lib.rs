//! Event-camera spiking network and streaming ISP simulator.
//!
//! The crate is split along the data path:
//!
//! * [`events`] parses DVS event streams, cuts them into fixed windows and
//!   encodes each window as a binary voxel grid.
//! * [`snn`] runs leaky integrate-and-fire networks over voxel grids and
//!   trains them with surrogate-gradient BPTT and AdamW.
//! * [`isp`] is a line-buffered, fixed-point image pipeline driven one pixel
//!   token at a time through valid/ready handshakes.
//! * [`cogloop`] closes the loop: network activity and ISP statistics turn
//!   into directives that reconfigure the ISP at frame boundaries.
//! * [`imgio`] holds the on-disk formats and the JSON configuration.
//! * [`cli`] is the command-line front end used by the `neuroisp` binary.

pub mod cli;
pub mod cogloop;
pub mod events;
pub mod fixed;
pub mod imgio;
pub mod isp;
pub mod snn;

pub use cogloop::{NpuDirective, PolicyConfig};
pub use events::{DvsEvent, EventWindow, SensorDims, VoxelGrid};
pub use imgio::AppConfig;
pub use isp::{BayerPattern, Frame, IspConfig, PixelToken};
pub use snn::{LifParams, SpikingNet};
