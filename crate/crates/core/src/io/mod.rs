//! Persistence: splat PLY files, camera JSON, PNG images, TOML config and
//! sweep/training reports.

pub mod cameras;
pub mod config;
pub mod images;
pub mod ply;
pub mod report;

pub use cameras::{load_cameras, parse_cameras, save_cameras, CameraEntry};
pub use config::{load_config, parse_config, Config, DEFAULT_CONFIG_TOML};
pub use images::{decode_png, encode_png, read_image, write_image};
pub use ply::{encode_ply, load_ply, parse_ply, save_ply, LoadedPly};
pub use report::{history_csv, sweep_csv, write_history_csv, write_sweep_csv, SceneMeta, SweepReport};
