//! Tracking a ground user from LEO satellite and RIS channel parameters.

pub mod channel;
pub mod filter;
pub mod fim;
pub mod geometry;
pub mod linalg;
pub mod manifold;
pub mod scenario;
