//! Turning per-point uncertainty into a choice of pool house.

mod select;
mod window;

pub use select::{
    combine_rank, combine_round_robin, combine_uniform, query_singly, rank_houses, select, select_random,
    AcquisitionScore, ScoreTable, Selection, Strategy,
};
pub use window::{aggregate_house_score, AggregationWindow, Kernel, WindowMode};
