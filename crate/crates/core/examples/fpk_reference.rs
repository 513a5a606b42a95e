// Propagates a uniform density under the spinning two-component model and
// reports how it concentrates while its mass stays at one.
//
// ```bash
// cargo run --example fpk_reference
// ```

use density_filter::grid::{assemble_generator, GridSpec, ScalarField};
use density_filter::model::{mixture_density, scenario_model, MixtureSpec};
use density_filter::reference::run_reference;
use density_filter::Result;

pub struct ReferenceReport {
    pub worst_column_sum: f64,
    pub worst_mass_dev: f64,
    pub min_value: f64,
    pub initial_peak: f64,
    pub final_peak: f64,
}

pub fn run_example() -> Result<ReferenceReport> {
    let grid = GridSpec::unit(30, 30)?;
    let spec = MixtureSpec::spinning_pair();
    let model = scenario_model(spec.clone(), 0.03)?;

    let a = assemble_generator(&grid, &model, 0.0)?;
    let worst_column_sum = a.column_sums().iter().fold(0.0f64, |m, s| m.max(s.abs()));
    println!("generator: {} cells, {} nonzeros, dt_max {:.4}", a.dim(), a.nnz(), a.dt_max());

    let states = run_reference(ScalarField::uniform_density(grid), &model, 20.0, 0.1, 50)?;
    let target = mixture_density(&spec, &grid, 20.0);
    let mut worst_mass_dev: f64 = 0.0;
    let mut min_value = f64::INFINITY;
    for s in &states {
        worst_mass_dev = worst_mass_dev.max((s.p.mass() - 1.0).abs());
        min_value = min_value.min(s.p.min());
        println!("t = {:5.1}  peak {:8.3}  min {:.3e}", s.t, s.p.max(), s.p.min());
    }
    println!("mixture peak at t = 20: {:.3}", target.max());

    Ok(ReferenceReport {
        worst_column_sum,
        worst_mass_dev,
        min_value,
        initial_peak: states[0].p.max(),
        final_peak: states.last().expect("at least one state").p.max(),
    })
}

fn main() -> Result<()> {
    let r = run_example()?;
    println!(
        "max |column sum| {:.1e}, max |mass - 1| {:.1e}",
        r.worst_column_sum, r.worst_mass_dev
    );
    Ok(())
}
