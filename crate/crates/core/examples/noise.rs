//! Q-Wiener increments by circulant embedding, checked against the exact
//! covariance and a dense Cholesky sampler.

use landscape_spde::noise::{NoiseGrid, DEFAULT_CLIP_TOL};
use landscape_spde::rng::stream;
use landscape_spde::{NoiseKind, NoiseModel};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let j = 32;
    let grid = NoiseGrid {
        points: j - 1,
        spacing: 1.0 / j as f64,
        periodic: false,
    };
    let model = NoiseModel::new(NoiseKind::Qwiener { l: 0.1 }, grid, DEFAULT_CLIP_TOL)?;
    println!("{model:?}");
    let spectrum = model.spectrum();
    let min = spectrum.iter().cloned().fold(f64::INFINITY, f64::min);
    println!("smallest circulant eigenvalue {min:.3e}, clipped {}", model.clip_count());

    let (n, dt) = (20_000, 0.01);
    let factor = model.cholesky_factor()?;
    let (mut rng, mut rng_oracle) = (stream(1, 0), stream(1, 1));
    let lags = [0, 1, 4, 16];
    let mut fft = [0.0; 4];
    let mut chol = [0.0; 4];
    for _ in 0..n {
        let a = model.sample_increment(dt, &mut rng);
        let b = model.cholesky_draw(&factor, dt, &mut rng_oracle);
        for (k, &lag) in lags.iter().enumerate() {
            fft[k] += a.dw1[0] * a.dw1[lag];
            chol[k] += b.dw1[0] * b.dw1[lag];
        }
    }
    println!("\nlag  dt*C        circulant    cholesky");
    for (k, &lag) in lags.iter().enumerate() {
        println!(
            "{lag:>3}  {:.6}  {:.6}  {:.6}",
            dt * model.covariance(0, lag),
            fft[k] / n as f64,
            chol[k] / n as f64
        );
    }
    Ok(())
}
