//! Household power data: ingest, synthesis, splits, normalization and windowing.

mod csv_io;
mod normalize;
mod series;
mod split;
pub mod synth;
mod view;
mod windows;

pub use csv_io::{ingest_csv, parse_timestamp, write_csv, CsvLayout, CsvSchema};
pub use normalize::{Normalizer, STD_FLOOR_W};
pub use series::{Dataset, PowerSeries, MINUTES_PER_DAY};
pub use split::SplitSpec;
pub use synth::{synthesize, SynthConfig};
pub use view::{AuditLog, Channel, DatasetView, Phase, ReadEvent};
pub use windows::{
    check_seq_len, input_matrix, make_windows, make_windows_strided, midpoints, windows_from_slices,
    WindowSample,
};
