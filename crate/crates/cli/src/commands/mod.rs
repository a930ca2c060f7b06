pub mod coords;
pub mod ensemble;
pub mod md;
pub mod quantum;
