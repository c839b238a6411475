use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "chartforge", version, about = "Channel charting with an LSTM autoencoder")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Synthesise a CSI dataset along a trajectory.
    Synth(SynthArgs),
    /// Train the autoencoder on a dataset.
    Train(TrainArgs),
    /// Align a trained chart and score it.
    Eval(EvalArgs),
    /// Classical-MDS chart of the same data, scored the same way.
    Baseline(BaselineArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum TrajKind {
    Circle,
    Lissajous,
    Polyline,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, value_enum, default_value_t = TrajKind::Circle)]
    pub traj: TrajKind,
    /// Circle radius in meters.
    #[arg(long, default_value_t = 5.0)]
    pub radius: f64,
    /// Lissajous amplitudes `ax,ay` in meters.
    #[arg(long, value_parser = parse_pair, default_value = "5,3")]
    pub amplitude: [f64; 2],
    /// Lissajous frequencies `fx,fy`.
    #[arg(long, value_parser = parse_pair, default_value = "3,2")]
    pub frequency: [f64; 2],
    /// Polyline waypoints `x1,y1;x2,y2;...`, closed automatically.
    #[arg(long, value_parser = parse_waypoints)]
    pub waypoints: Option<Waypoints>,
    #[arg(long, default_value_t = 2000)]
    pub n: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 4)]
    pub anchors: usize,
    /// Radius of the ring the anchors sit on.
    #[arg(long, default_value_t = 8.0)]
    pub anchor_radius: f64,
    /// Scatterers per link.
    #[arg(long, default_value_t = 3)]
    pub scatterers: usize,
    /// Scatterers are drawn from `[-extent, extent]²`.
    #[arg(long, default_value_t = 8.0)]
    pub extent: f64,
    #[arg(long, default_value_t = 4)]
    pub subcarriers: usize,
    #[arg(long, default_value_t = 32)]
    pub taps: usize,
    /// Carrier wavelength in meters.
    #[arg(long, default_value_t = 1.0)]
    pub wavelength: f64,
    /// Sounding bandwidth in Hz.
    #[arg(long, default_value_t = 20e6)]
    pub bandwidth: f64,
    /// Noise standard deviation as a fraction of the mean tap magnitude.
    #[arg(long, conflicts_with = "noise_std")]
    pub noise_rel: Option<f64>,
    /// Absolute noise standard deviation.
    #[arg(long)]
    pub noise_std: Option<f64>,
    /// User speed in m/s.
    #[arg(long, default_value_t = 0.3)]
    pub speed: f64,
    /// Sampling interval in seconds.
    #[arg(long, default_value_t = 0.192)]
    pub interval: f64,
    #[arg(long)]
    pub out: PathBuf,
    /// Defaults to the output path with a `.positions.csv` extension.
    #[arg(long)]
    pub positions_csv: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Waypoints(pub Vec<[f64; 2]>);

/// Windowing and split settings shared by `train` and `baseline`.
#[derive(Debug, Args, Clone)]
pub struct DataFlags {
    #[arg(long, default_value_t = 10)]
    pub seq_len: usize,
    /// Fraction of windows used for training.
    #[arg(long, default_value_t = 0.9)]
    pub ratio: f64,
    /// Per-feature standardisation of the flattened CSI.
    #[arg(long)]
    pub standardize: bool,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Required unless `--manifest` names the dataset.
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub out_dir: PathBuf,
    /// Reuse every setting of an earlier run.
    #[arg(long, conflicts_with_all = ["lr", "batch", "epochs", "alpha", "seed", "units", "latent",
        "seq_len", "ratio", "standardize", "patience", "lr_factor", "min_lr"])]
    pub manifest: Option<PathBuf>,
    #[arg(long, default_value_t = 1e-3)]
    pub lr: f64,
    #[arg(long, default_value_t = 64)]
    pub batch: usize,
    #[arg(long, default_value_t = 150)]
    pub epochs: usize,
    #[arg(long, default_value_t = 0.75)]
    pub alpha: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 64)]
    pub units: usize,
    #[arg(long, default_value_t = 32)]
    pub latent: usize,
    #[arg(long, default_value_t = 5)]
    pub patience: usize,
    #[arg(long, default_value_t = 0.5)]
    pub lr_factor: f64,
    #[arg(long, default_value_t = 1e-6)]
    pub min_lr: f64,
    #[command(flatten)]
    pub data_flags: DataFlags,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Directory written by `train`.
    #[arg(long)]
    pub run: PathBuf,
    /// Overrides the dataset recorded in the run manifest.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Neighbourhood size for continuity and trustworthiness.
    #[arg(long)]
    pub k: Option<usize>,
    /// Also report the 64-bin KL divergence of pairwise distances.
    #[arg(long)]
    pub kl: bool,
    /// Defaults to the run directory.
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BaselineArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// Take window length, split ratio, seed and standardisation from a run.
    #[arg(long, conflicts_with_all = ["seq_len", "ratio", "standardize", "seed"])]
    pub run: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Most points passed to MDS.
    #[arg(long, default_value_t = 2000)]
    pub limit: usize,
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub kl: bool,
    #[arg(long)]
    pub out_dir: PathBuf,
    #[command(flatten)]
    pub data_flags: DataFlags,
}

fn parse_pair(s: &str) -> Result<[f64; 2], String> {
    let v: Vec<f64> = s
        .split(',')
        .map(|p| p.trim().parse::<f64>().map_err(|e| format!("{p:?}: {e}")))
        .collect::<Result<_, _>>()?;
    v.try_into().map_err(|v: Vec<f64>| format!("expected 2 comma-separated numbers, got {}", v.len()))
}

fn parse_waypoints(s: &str) -> Result<Waypoints, String> {
    let pts = s.split(';').filter(|p| !p.trim().is_empty()).map(parse_pair).collect::<Result<Vec<_>, _>>()?;
    if pts.len() < 2 {
        return Err("a polyline needs at least 2 waypoints".into());
    }
    Ok(Waypoints(pts))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pairs_and_waypoints() {
        assert_eq!(parse_pair("1.5, -2").unwrap(), [1.5, -2.0]);
        assert!(parse_pair("1").is_err());
        assert!(parse_pair("a,b").is_err());
        assert_eq!(parse_waypoints("0,0;4,0;4,3").unwrap().0.len(), 3);
        assert!(parse_waypoints("0,0").is_err());
    }

    #[test]
    fn cli_definition_is_consistent() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }
}
