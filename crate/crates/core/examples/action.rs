//! Quasi-potential of constant profiles and the action of recorded paths:
//! a noiseless relaxation costs nothing, a noisy one does not.

use landscape_spde::ldp::{action_functional, barrier, quasi_potential};
use landscape_spde::noise::DEFAULT_CLIP_TOL;
use landscape_spde::rng::stream;
use landscape_spde::{
    simulate, Boundary, Discretization, FieldState, MollifiedLandscape, NoiseKind, NoiseModel,
    RawLandscape, RunParams, System, Well,
};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let raw = RawLandscape::unlabelled(vec![Well::new(0.0, 0.0, 1.0), Well::new(1.0, 0.0, 1.0)])?;
    let land = MollifiedLandscape::with_defaults(raw, 256)?;
    let disc = Discretization::new(32, Boundary::Neumann, 1.0, 1.0, 0.001, 1.0)?;

    let b = barrier(&land, 0, 1, disc.domain_length())?;
    println!("barrier {:.5}, saddle ({:.4}, {:.4})", b.barrier, b.saddle_point[0], b.saddle_point[1]);
    for p in [[0.0, 0.0], [0.25, 0.1], b.saddle_point] {
        let u = quasi_potential(&FieldState::constant(0.0, disc.nodes(), p), &land, &disc)?;
        println!("U(constant {p:.3?}) = {u:.5}");
    }

    let noise = NoiseModel::new(NoiseKind::Qwiener { l: 0.1 }, disc.noise_grid(), DEFAULT_CLIP_TOL)?;
    let system = System::new(land.clone(), noise, disc.clone())?;
    for sigma in [0.0, 0.02, 0.05] {
        let mut params = RunParams::new(sigma, 2.0, [0.3, 0.2]);
        params.keep_states = true;
        let path = simulate(&system, &params, &mut stream(3, 0))?;
        println!("sigma {sigma}: action of the recorded path {:.4e}", action_functional(&path, &land, &disc)?);
    }
    Ok(())
}
