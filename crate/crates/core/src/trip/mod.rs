//! Trip-distribution estimation: how many trajectories start in state `i`
//! and end in state `j`.
//!
//! The noisy model only reveals, per state, the length-normalized number of
//! trajectories starting (`b_i`) and ending (`q_j`) there. Approximating every
//! trajectory's length by the node count of the shortest path between its
//! endpoints turns this into a least-squares problem over the simplex.

mod graph;
mod solver;

pub use graph::{
    build_state_graph, dijkstra, path_key_less, shortest_path_lengths, PathLengthMatrix, StateGraph,
};
pub use solver::{
    estimate_trip_distribution, estimate_trip_distribution_with, project_simplex, trip_objective,
    SolverOptions, SolverReport, TripMatrix,
};
