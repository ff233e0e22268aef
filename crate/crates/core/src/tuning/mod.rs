//! Desk-scale tuning with teacher guidance: synthetic tasks, a linear
//! student and its training loop.

mod toy;
mod train;

pub use crate::ranking::select_top_k;
pub use toy::{
    cluster_task, generate_toy_task, linear_regression_task, TeacherSpec, ToyTask, ToyTaskSpec,
    CLUSTER_CENTERS, CLUSTER_SPREAD,
};
pub use train::{
    build_objective, prepare_teachers, run_on_task, train_student, LossParts, Objective,
    Parameters, Regularizer, StudentSpec, TeacherContext, ToyExperiment, ToyStudent, TrainData,
    TrainReport, TuneConfig,
};
