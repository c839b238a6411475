//! Path-sum multipath CSI along a known trajectory.
//!
//! Each link connects one anchor to the moving user. Its frequency response
//! at wavelength `λ` is the sum of one phasor `exp(−j·2π·d/λ) / d` per path:
//! the direct path plus one path through every scatterer of that link.
//! The band is split into `n_subcarriers` sub-bands of `n_taps` bins each;
//! every sub-band is converted to `n_taps` delay taps with a 1/n-normalised
//! inverse DFT, so the tap power of a sub-band equals the mean bin power.

use std::f64::consts::PI;

use rayon::prelude::*;
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use super::{CsiDataset, CsiShape, DEFAULT_SAMPLING_INTERVAL, DEFAULT_SEQ_LEN, DEFAULT_SPEED};
use crate::error::{Error, Result};
use crate::ndkernel::{Matrix, Rng};

const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// User trajectory in the plane.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Trajectory {
    Circle {
        center: [f64; 2],
        radius: f64,
    },
    /// `x = cx + ax·sin(2π·fx·τ + phase)`, `y = cy + ay·sin(2π·fy·τ)`.
    Lissajous {
        center: [f64; 2],
        amplitude: [f64; 2],
        frequency: [f64; 2],
        phase: f64,
    },
    /// Closed polyline through the waypoints.
    PiecewiseLinear { waypoints: Vec<[f64; 2]> },
}

impl Trajectory {
    fn validate(&self) -> Result<()> {
        let ok = match self {
            Trajectory::Circle { center, radius } => {
                *radius > 0.0 && radius.is_finite() && center.iter().all(|v| v.is_finite())
            }
            Trajectory::Lissajous {
                center,
                amplitude,
                frequency,
                phase,
            } => {
                center.iter().chain(amplitude).chain(frequency).all(|v| v.is_finite())
                    && phase.is_finite()
                    && amplitude.iter().zip(frequency).any(|(a, f)| a.abs() * f.abs() > 0.0)
            }
            Trajectory::PiecewiseLinear { waypoints } => {
                waypoints.len() >= 2
                    && waypoints.iter().flatten().all(|v| v.is_finite())
                    && waypoints.windows(2).any(|w| dist(w[0], w[1]) > 0.0)
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("degenerate trajectory {self:?}")))
        }
    }

    /// `n` points spaced `step` meters apart along the path, starting at
    /// the path's origin.
    pub fn sample(&self, n: usize, step: f64) -> Result<Vec<[f64; 2]>> {
        self.validate()?;
        if !(step > 0.0) {
            return Err(Error::Config(format!("step must be positive, got {step}")));
        }
        Ok(match self {
            Trajectory::Circle { center, radius } => (0..n)
                .map(|k| {
                    let a = k as f64 * step / radius;
                    [center[0] + radius * a.cos(), center[1] + radius * a.sin()]
                })
                .collect(),
            Trajectory::PiecewiseLinear { waypoints } => sample_polyline(waypoints, n, step),
            Trajectory::Lissajous {
                center,
                amplitude,
                frequency,
                phase,
            } => {
                let curve = |t: f64| {
                    [
                        center[0] + amplitude[0] * (2.0 * PI * frequency[0] * t + phase).sin(),
                        center[1] + amplitude[1] * (2.0 * PI * frequency[1] * t).sin(),
                    ]
                };
                let max_speed = 2.0
                    * PI
                    * (amplitude[0] * frequency[0]).hypot(amplitude[1] * frequency[1]);
                sample_curve(curve, max_speed, n, step)
            }
        })
    }
}

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

fn sample_polyline(waypoints: &[[f64; 2]], n: usize, step: f64) -> Vec<[f64; 2]> {
    let mut segs: Vec<([f64; 2], [f64; 2], f64)> = Vec::with_capacity(waypoints.len());
    for i in 0..waypoints.len() {
        let a = waypoints[i];
        let b = waypoints[(i + 1) % waypoints.len()];
        let len = dist(a, b);
        if len > 0.0 {
            segs.push((a, b, len));
        }
    }
    let total: f64 = segs.iter().map(|s| s.2).sum();
    (0..n)
        .map(|k| {
            let mut s = (k as f64 * step) % total;
            for &(a, b, len) in &segs {
                if s <= len {
                    let u = s / len;
                    return [a[0] + u * (b[0] - a[0]), a[1] + u * (b[1] - a[1])];
                }
                s -= len;
            }
            segs[0].0
        })
        .collect()
}

/// Walks a parametric curve in sub-steps much shorter than `step`, emitting
/// a point each time the accumulated chord length reaches the next multiple
/// of `step`.
fn sample_curve(curve: impl Fn(f64) -> [f64; 2], max_speed: f64, n: usize, step: f64) -> Vec<[f64; 2]> {
    let dt = step / (64.0 * max_speed);
    let mut out = Vec::with_capacity(n);
    let mut t = 0.0;
    let mut prev = curve(0.0);
    let mut travelled = 0.0;
    let mut next_mark = 0.0;
    if n > 0 {
        out.push(prev);
        next_mark = step;
    }
    while out.len() < n {
        t += dt;
        let cur = curve(t);
        let seg = dist(prev, cur);
        while out.len() < n && travelled + seg >= next_mark {
            let u = if seg > 0.0 { (next_mark - travelled) / seg } else { 0.0 };
            out.push([prev[0] + u * (cur[0] - prev[0]), prev[1] + u * (cur[1] - prev[1])]);
            next_mark += step;
        }
        travelled += seg;
        prev = cur;
    }
    out
}

/// Additive white Gaussian noise on every real and imaginary tap value.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum Noise {
    /// Absolute standard deviation.
    Std(f64),
    /// Standard deviation as a fraction of the mean noiseless tap magnitude.
    RelativeToMeanMagnitude(f64),
}

/// Propagation scene and sounding grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChannelSpec {
    /// One anchor (receiver) per link.
    pub anchors: Vec<[f64; 2]>,
    /// Scatterer positions per link; empty for line-of-sight only.
    pub scatterers: Vec<Vec<[f64; 2]>>,
    /// Carrier wavelength in meters (band centre).
    pub wavelength: f64,
    /// Total sounding bandwidth in Hz.
    pub bandwidth_hz: f64,
    pub n_subcarriers: usize,
    pub n_taps: usize,
    pub noise: Noise,
}

impl ChannelSpec {
    /// Anchors evenly spaced on a ring of radius `ring_radius` around the
    /// origin and `n_scatterers` scatterers per link drawn uniformly from the
    /// square `[-extent, extent]²`.
    pub fn ring_scene(n_anchors: usize, ring_radius: f64, n_scatterers: usize, extent: f64, seed: u64) -> Self {
        let mut rng = Rng::derive(seed, 0x5ca7);
        let anchors = (0..n_anchors)
            .map(|a| {
                let ang = 2.0 * PI * a as f64 / n_anchors.max(1) as f64 + PI / 7.0;
                [ring_radius * ang.cos(), ring_radius * ang.sin()]
            })
            .collect();
        let scatterers = (0..n_anchors)
            .map(|_| {
                (0..n_scatterers)
                    .map(|_| [rng.uniform(-extent, extent), rng.uniform(-extent, extent)])
                    .collect()
            })
            .collect();
        Self {
            anchors,
            scatterers,
            wavelength: 1.0,
            bandwidth_hz: 20e6,
            n_subcarriers: 4,
            n_taps: 32,
            noise: Noise::Std(0.0),
        }
    }

    fn validate(&self) -> Result<()> {
        if self.anchors.is_empty() {
            return Err(Error::Config("channel needs at least one anchor".into()));
        }
        if !(self.wavelength > 0.0 && self.wavelength.is_finite()) {
            return Err(Error::Config(format!("wavelength must be positive, got {}", self.wavelength)));
        }
        if !(self.bandwidth_hz >= 0.0 && self.bandwidth_hz.is_finite()) {
            return Err(Error::Config(format!("bandwidth must be non-negative, got {}", self.bandwidth_hz)));
        }
        if self.n_subcarriers == 0 || self.n_taps == 0 {
            return Err(Error::Config("subcarrier and tap counts must be positive".into()));
        }
        if !self.scatterers.is_empty() && self.scatterers.len() != self.anchors.len() {
            return Err(Error::Config(format!(
                "{} scatterer lists for {} anchors",
                self.scatterers.len(),
                self.anchors.len()
            )));
        }
        let sd = match self.noise {
            Noise::Std(s) | Noise::RelativeToMeanMagnitude(s) => s,
        };
        if !(sd >= 0.0 && sd.is_finite()) {
            return Err(Error::Config(format!("noise level must be non-negative, got {sd}")));
        }
        Ok(())
    }

    /// Wavelength of frequency bin `bin` of the `n_subcarriers · n_taps`
    /// grid, centred on the carrier.
    fn bin_wavelength(&self, bin: usize) -> f64 {
        let n_bins = (self.n_subcarriers * self.n_taps) as f64;
        let carrier = SPEED_OF_LIGHT / self.wavelength;
        let spacing = self.bandwidth_hz / n_bins;
        let f = carrier + (bin as f64 - (n_bins - 1.0) / 2.0) * spacing;
        SPEED_OF_LIGHT / f
    }

    fn scatterers_of(&self, link: usize) -> &[[f64; 2]] {
        self.scatterers.get(link).map_or(&[], Vec::as_slice)
    }
}

/// Everything needed to synthesise a dataset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub trajectory: Trajectory,
    pub channel: ChannelSpec,
    pub n_samples: usize,
    pub seed: u64,
    /// User speed in m/s.
    pub speed: f64,
    /// Sampling interval in seconds.
    pub sampling_interval: f64,
}

impl SynthSpec {
    pub fn new(trajectory: Trajectory, channel: ChannelSpec, n_samples: usize, seed: u64) -> Self {
        Self {
            trajectory,
            channel,
            n_samples,
            seed,
            speed: DEFAULT_SPEED,
            sampling_interval: DEFAULT_SAMPLING_INTERVAL,
        }
    }
}

/// Synthesises CSI for `spec.n_samples` positions along the trajectory.
pub fn generate_synthetic_csi(spec: &SynthSpec) -> Result<CsiDataset> {
    let ch = &spec.channel;
    ch.validate()?;
    if spec.n_samples < DEFAULT_SEQ_LEN + 1 {
        return Err(Error::Config(format!(
            "need at least {} samples, got {}",
            DEFAULT_SEQ_LEN + 1,
            spec.n_samples
        )));
    }
    if !(spec.speed > 0.0 && spec.sampling_interval > 0.0) {
        return Err(Error::Config("speed and sampling interval must be positive".into()));
    }
    let step = spec.speed * spec.sampling_interval;
    let points = spec.trajectory.sample(spec.n_samples, step)?;

    let shape = CsiShape {
        samples: spec.n_samples,
        links: ch.anchors.len(),
        subcarriers: ch.n_subcarriers,
        taps: ch.n_taps,
    };
    let features = shape.features();
    let fft = FftPlanner::<f64>::new().plan_fft_inverse(ch.n_taps);
    let wavelengths: Vec<f64> = (0..ch.n_subcarriers * ch.n_taps).map(|b| ch.bin_wavelength(b)).collect();

    let mut csi = vec![0.0; shape.len()];
    csi.par_chunks_mut(features)
        .zip(points.par_iter())
        .for_each(|(row, &pos)| {
            let mut bins = vec![Complex64::new(0.0, 0.0); ch.n_taps];
            let mut scratch = vec![Complex64::new(0.0, 0.0); fft.get_inplace_scratch_len()];
            let norm = 1.0 / ch.n_taps as f64;
            for (link, &anchor) in ch.anchors.iter().enumerate() {
                let mut paths = vec![dist(pos, anchor)];
                paths.extend(ch.scatterers_of(link).iter().map(|&s| dist(pos, s) + dist(s, anchor)));
                for sub in 0..ch.n_subcarriers {
                    for (k, bin) in bins.iter_mut().enumerate() {
                        let lambda = wavelengths[sub * ch.n_taps + k];
                        *bin = paths
                            .iter()
                            .map(|&d| Complex64::from_polar(1.0 / d, -2.0 * PI * d / lambda))
                            .sum();
                    }
                    fft.process_with_scratch(&mut bins, &mut scratch);
                    let base = ((link * 2) * ch.n_subcarriers + sub) * ch.n_taps;
                    let im_base = ((link * 2 + 1) * ch.n_subcarriers + sub) * ch.n_taps;
                    for (k, v) in bins.iter().enumerate() {
                        row[base + k] = v.re * norm;
                        row[im_base + k] = v.im * norm;
                    }
                }
            }
        });

    let sigma = match ch.noise {
        Noise::Std(s) => s,
        Noise::RelativeToMeanMagnitude(frac) => frac * mean_tap_magnitude(&csi, shape),
    };
    if sigma > 0.0 {
        let mut rng = Rng::derive(spec.seed, 1);
        for v in csi.iter_mut() {
            *v += sigma * rng.normal();
        }
    }
    if let Some(i) = csi.iter().position(|v| !v.is_finite()) {
        return Err(Error::Config(format!(
            "non-finite CSI at flat index {i}; is the user passing through an anchor or scatterer?"
        )));
    }

    let positions = Matrix::from_vec(spec.n_samples, 2, points.into_iter().flatten().collect())?;
    CsiDataset::new(
        shape,
        csi,
        positions,
        spec.sampling_interval,
        format!("synthetic:seed={}", spec.seed),
    )
}

/// Mean `|re + j·im|` over every complex tap.
fn mean_tap_magnitude(csi: &[f64], shape: CsiShape) -> f64 {
    let mut sum = 0.0;
    let mut count = 0usize;
    for n in 0..shape.samples {
        for l in 0..shape.links {
            for s in 0..shape.subcarriers {
                for t in 0..shape.taps {
                    let re = csi[shape.offset(n, l, 0, s, t)];
                    let im = csi[shape.offset(n, l, 1, s, t)];
                    sum += re.hypot(im);
                    count += 1;
                }
            }
        }
    }
    if count == 0 {
        0.0
    } else {
        sum / count as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::flatten;

    fn los_channel(anchor: [f64; 2]) -> ChannelSpec {
        ChannelSpec {
            anchors: vec![anchor],
            scatterers: vec![],
            wavelength: 0.5,
            bandwidth_hz: 40e6,
            n_subcarriers: 1,
            n_taps: 32,
            noise: Noise::Std(0.0),
        }
    }

    fn circle(radius: f64) -> Trajectory {
        Trajectory::Circle {
            center: [0.0, 0.0],
            radius,
        }
    }

    #[test]
    fn single_path_tap_power_is_inverse_square_distance() {
        // Parseval: with |H(f)| = 1/d on every bin and a 1/n inverse DFT,
        // Σ|h_k|² = (1/n)·Σ|H_f|² = 1/d².
        let anchor = [12.0, -3.0];
        let spec = SynthSpec::new(circle(4.0), los_channel(anchor), 20, 1);
        let d = generate_synthetic_csi(&spec).unwrap();
        let shape = d.shape();
        for n in 0..shape.samples {
            let p = d.positions().row(n);
            let dd = (p[0] - anchor[0]).hypot(p[1] - anchor[1]);
            let power: f64 = d.sample(n).iter().map(|v| v * v).sum();
            assert!((power - 1.0 / (dd * dd)).abs() < 1e-9, "sample {n}: {power}");
        }
    }

    #[test]
    fn identical_positions_give_identical_rows() {
        // a full lap of a circle returns to the start position
        let radius = DEFAULT_SPEED * DEFAULT_SAMPLING_INTERVAL * 20.0 / (2.0 * PI);
        let mut ch = ChannelSpec::ring_scene(3, 6.0, 2, 4.0, 9);
        ch.n_taps = 8;
        let spec = SynthSpec::new(circle(radius), ch, 21, 3);
        let d = generate_synthetic_csi(&spec).unwrap();
        let p0 = d.positions().row(0);
        let p20 = d.positions().row(20);
        assert!((p0[0] - p20[0]).abs() < 1e-12 && (p0[1] - p20[1]).abs() < 1e-12);
        let diff = d.sample(0).iter().zip(d.sample(20)).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(diff < 1e-12, "{diff}");
    }

    #[test]
    fn seeded_generation_is_bit_identical() {
        let mut ch = ChannelSpec::ring_scene(2, 8.0, 3, 6.0, 7);
        ch.noise = Noise::RelativeToMeanMagnitude(0.01);
        ch.n_taps = 8;
        let spec = SynthSpec::new(circle(5.0), ch, 2000, 7);
        let a = generate_synthetic_csi(&spec).unwrap();
        let b = generate_synthetic_csi(&spec).unwrap();
        assert_eq!(a.shape().samples, 2000);
        let bits = |d: &CsiDataset| d.csi().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&a), bits(&b));
        assert_eq!(a.positions(), b.positions());
    }

    #[test]
    fn adjacent_samples_are_closer_than_random_pairs() {
        let mut ch = ChannelSpec::ring_scene(2, 8.0, 3, 6.0, 11);
        ch.n_taps = 8;
        let spec = SynthSpec::new(circle(5.0), ch, 1500, 11);
        let d = generate_synthetic_csi(&spec).unwrap();
        let (flat, _) = flatten(&d, false);
        let dist = |a: usize, b: usize| -> f64 {
            flat.row(a).iter().zip(flat.row(b)).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
        };
        let n = flat.rows();
        let adjacent: f64 = (0..n - 1).map(|i| dist(i, i + 1)).sum::<f64>() / (n - 1) as f64;
        let mut rng = Rng::new(99);
        let pairs = 2000;
        let random: f64 = (0..pairs).map(|_| dist(rng.below(n), rng.below(n))).sum::<f64>() / pairs as f64;
        assert!(adjacent < random, "adjacent {adjacent} vs random {random}");
    }

    #[test]
    fn samples_are_spaced_by_speed_times_interval() {
        let step = DEFAULT_SPEED * DEFAULT_SAMPLING_INTERVAL;
        let trajectories = [
            circle(5.0),
            Trajectory::Lissajous {
                center: [1.0, 2.0],
                amplitude: [4.0, 3.0],
                frequency: [1.0, 2.0],
                phase: 0.3,
            },
            Trajectory::PiecewiseLinear {
                waypoints: vec![[0.0, 0.0], [3.0, 0.0], [3.0, 2.0], [0.0, 2.0]],
            },
        ];
        for traj in trajectories {
            let pts = traj.sample(400, step).unwrap();
            for w in pts.windows(2) {
                let d = dist(w[0], w[1]);
                // a chord never exceeds the arc; across a right-angle
                // corner it can shrink to step/√2
                assert!(d <= step + 1e-9 && d > 0.7 * step, "{traj:?}: {d}");
            }
        }
    }

    #[test]
    fn config_errors() {
        let mut ch = los_channel([5.0, 5.0]);
        ch.anchors.clear();
        assert!(matches!(
            generate_synthetic_csi(&SynthSpec::new(circle(1.0), ch, 50, 0)),
            Err(Error::Config(_))
        ));
        let mut ch = los_channel([5.0, 5.0]);
        ch.wavelength = 0.0;
        assert!(generate_synthetic_csi(&SynthSpec::new(circle(1.0), ch, 50, 0)).is_err());
        let ch = los_channel([5.0, 5.0]);
        assert!(generate_synthetic_csi(&SynthSpec::new(circle(1.0), ch, DEFAULT_SEQ_LEN, 0)).is_err());
        let ch = los_channel([5.0, 5.0]);
        assert!(generate_synthetic_csi(&SynthSpec::new(circle(-1.0), ch, 50, 0)).is_err());
    }

    #[test]
    fn relative_noise_scales_with_signal() {
        let mut ch = los_channel([10.0, 0.0]);
        ch.noise = Noise::RelativeToMeanMagnitude(0.01);
        let noisy = generate_synthetic_csi(&SynthSpec::new(circle(3.0), ch.clone(), 100, 5)).unwrap();
        ch.noise = Noise::Std(0.0);
        let clean = generate_synthetic_csi(&SynthSpec::new(circle(3.0), ch, 100, 5)).unwrap();
        let shape = clean.shape();
        let mean_mag = mean_tap_magnitude(clean.csi(), shape);
        let resid: Vec<f64> = noisy.csi().iter().zip(clean.csi()).map(|(a, b)| a - b).collect();
        let sd = (resid.iter().map(|r| r * r).sum::<f64>() / resid.len() as f64).sqrt();
        assert!((sd / (0.01 * mean_mag) - 1.0).abs() < 0.05, "{sd} vs {}", 0.01 * mean_mag);
    }
}
