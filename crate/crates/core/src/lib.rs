pub mod certifier;
pub mod controller;
pub mod dynamics;
pub mod mission;
pub mod planner;
pub mod poly;
pub mod smooth;
pub mod spline;
pub mod stl;
