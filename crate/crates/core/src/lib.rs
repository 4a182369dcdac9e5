pub mod estimators;
pub mod interval;
pub mod linalg;
pub mod predictor;
pub mod qp;
pub mod simulation;
pub mod weights;
