//! S4NN: single-spike temporal-coding networks trained with temporal
//! backpropagation.
//!
//! Images are encoded so that brighter pixels spike earlier, non-leaky
//! integrate-and-fire neurons each fire at most once, and the first output
//! spike is the decision. Training backpropagates errors between actual and
//! relative target firing times ([`objective`], [`backprop`]); the forward
//! pass is event-driven ([`forward`]) with a dense clock-driven reference
//! implementation ([`reference`]) that the tests hold it to.

pub mod backprop;
mod bytes;
pub mod data;
pub mod encoding;
pub mod error;
pub mod forward;
pub mod network;
pub mod objective;
pub mod reference;
pub mod seeds;
pub mod trainer;

pub use error::{Result, S4nnError};
