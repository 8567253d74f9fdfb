//! Random processes of the simulation: block-fading channels, packet
//! arrivals, and the piecewise-constant harvest/price schedule.

use std::convert::Infallible;

use num_complex::Complex;
use rand::{RngExt, SeedableRng, TryRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::model::{ArrivalModel, ChannelState, EnergyPriceState, SystemConfig};
use crate::scalar::Scalar;

/// Stream ids. Each random process of a trajectory owns one so that
/// changing how often one process draws never shifts another.
pub mod streams {
    pub const CHANNEL: u64 = 1;
    pub const ARRIVALS: u64 = 2;
    pub const FALLBACK: u64 = 3;
    pub const INIT: u64 = 4;
}

/// A reproducible random stream identified by `(seed, stream_id)`.
#[derive(Clone, Debug)]
pub struct RngStream {
    seed: u64,
    stream_id: u64,
    rng: ChaCha8Rng,
}

impl RngStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream_id);
        Self { seed, stream_id, rng }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }
}

impl TryRng for RngStream {
    type Error = Infallible;

    fn try_next_u32(&mut self) -> Result<u32, Infallible> {
        self.rng.try_next_u32()
    }

    fn try_next_u64(&mut self) -> Result<u64, Infallible> {
        self.rng.try_next_u64()
    }

    fn try_fill_bytes(&mut self, dst: &mut [u8]) -> Result<(), Infallible> {
        self.rng.try_fill_bytes(dst)
    }
}

/// Circularly-symmetric complex Gaussian with total variance `var`.
pub fn complex_gaussian<T>(rng: &mut RngStream, var: T) -> Complex<T>
where
    T: Scalar,
    StandardNormal: Distribution<T>,
{
    let sd = (var / T::lit(2.0)).sqrt();
    let re: T = StandardNormal.sample(rng);
    let im: T = StandardNormal.sample(rng);
    Complex::new(re * sd, im * sd)
}

/// Draws a fresh frame of channels; entries of `h_n` are CN(0, d_n^-chi).
pub fn draw_channel<T>(cfg: &SystemConfig<T>, rng: &mut RngStream) -> ChannelState<T>
where
    T: Scalar,
    StandardNormal: Distribution<T>,
{
    let h = cfg
        .links
        .iter()
        .map(|l| {
            let var = l.distance.powf(-cfg.pathloss_exp);
            (0..cfg.n_antennas).map(|_| complex_gaussian(rng, var)).collect()
        })
        .collect();
    ChannelState { h }
}

/// Draws one frame of normalized arrivals, one per link.
pub fn draw_arrivals<T: Scalar>(cfg: &SystemConfig<T>, rng: &mut RngStream) -> Vec<T> {
    cfg.links
        .iter()
        .map(|l| {
            let u = l.arrival_mean;
            match cfg.arrivals {
                ArrivalModel::Bernoulli => {
                    // draw unconditionally so the stream position is independent of u
                    let x: f64 = rng.random();
                    if x < u.to_f64_lossy() {
                        T::one()
                    } else {
                        T::zero()
                    }
                }
                ArrivalModel::Uniform => {
                    let x = T::lit(rng.random::<f64>());
                    let half = T::lit(0.5);
                    if u <= half {
                        x * (u + u)
                    } else {
                        let lo = u + u - T::one();
                        lo + x * (T::one() - lo)
                    }
                }
            }
        })
        .collect()
}

/// Breakpoints `(start_frame, value)` for harvest and buy price, plus a
/// constant sell price.
#[derive(Clone, Debug, PartialEq)]
pub struct Schedule<T> {
    harvest: Vec<(usize, T)>,
    buy_price: Vec<(usize, T)>,
    sell_price: T,
}

fn check_breakpoints<T: Scalar>(name: &str, pts: &[(usize, T)]) -> Result<()> {
    match pts.first() {
        None => return Err(Error::Config(format!("{name} schedule is empty"))),
        Some(&(start, _)) if start != 0 => {
            return Err(Error::Config(format!("{name} schedule must start at frame 0")))
        }
        _ => {}
    }
    if pts.windows(2).any(|w| w[1].0 <= w[0].0) {
        return Err(Error::Config(format!("{name} schedule frames must strictly increase")));
    }
    if pts.iter().any(|&(_, v)| !v.is_finite()) {
        return Err(Error::Config(format!("{name} schedule has non-finite values")));
    }
    Ok(())
}

fn lookup<T: Copy>(pts: &[(usize, T)], t: usize) -> T {
    let idx = pts.partition_point(|&(start, _)| start <= t);
    pts[idx.saturating_sub(1)].1
}

impl<T: Scalar> Schedule<T> {
    pub fn new(harvest: Vec<(usize, T)>, buy_price: Vec<(usize, T)>, sell_price: T) -> Result<Self> {
        check_breakpoints("harvest", &harvest)?;
        check_breakpoints("buy price", &buy_price)?;
        if harvest.iter().any(|&(_, v)| v < T::zero()) {
            return Err(Error::Config("harvested power must be nonnegative".into()));
        }
        if !(sell_price > T::zero()) || buy_price.iter().any(|&(_, v)| v < sell_price) {
            return Err(Error::Config("prices must satisfy buy >= sell > 0".into()));
        }
        Ok(Self { harvest, buy_price, sell_price })
    }

    pub fn constant(e: EnergyPriceState<T>) -> Result<Self> {
        Self::new(vec![(0, e.harvest)], vec![(0, e.buy_price)], e.sell_price)
    }

    /// Four 1000-frame harvest segments (200, 100, 150, 300 mW) and eight
    /// 500-frame buy-price segments; selling at 1 cent/mW.
    pub fn default_segments() -> Self {
        let harvest = [200.0, 100.0, 150.0, 300.0];
        let buy = [1.2, 1.3, 1.9, 1.8, 1.6, 1.7, 1.2, 1.1];
        Self::new(
            harvest.iter().enumerate().map(|(i, &v)| (i * 1000, T::lit(v))).collect(),
            buy.iter().enumerate().map(|(i, &v)| (i * 500, T::lit(v))).collect(),
            T::one(),
        )
        .expect("built-in schedule is valid")
    }

    pub fn harvest(&self) -> &[(usize, T)] {
        &self.harvest
    }

    pub fn buy_price(&self) -> &[(usize, T)] {
        &self.buy_price
    }

    pub fn sell_price(&self) -> T {
        self.sell_price
    }

    /// The values of the last breakpoints with `start_frame <= t`.
    pub fn at(&self, t: usize) -> EnergyPriceState<T> {
        EnergyPriceState {
            harvest: lookup(&self.harvest, t),
            buy_price: lookup(&self.buy_price, t),
            sell_price: self.sell_price,
        }
    }
}

pub fn schedule_at<T: Scalar>(s: &Schedule<T>, t: usize) -> EnergyPriceState<T> {
    s.at(t)
}
