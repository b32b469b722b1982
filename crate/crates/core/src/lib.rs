//! MDP-driven topology formation for network-coded wireless ad hoc networks.

pub mod galois;
pub mod rlnc;
pub mod mdp;
pub mod stationary;
pub mod netsim;
