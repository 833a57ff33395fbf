//! Kinematics, coupled-workspace analysis, region planning, control and
//! simulation for arrays of three-legged tilting tiles joined by an
//! inextensible flexible surface.

pub mod kinematics;
pub mod workspace;
pub mod regions;
pub mod export;
pub mod surface;
pub mod trajectory;
pub mod controller;
pub mod bus;
pub mod scenario;
pub mod sim;
