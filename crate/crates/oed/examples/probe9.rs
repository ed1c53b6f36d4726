use oed::eig::{argmax, estimate_eig, grid_scan, EigConfig};
use oed::opt::{ensemble_run, EigObjective};
use oed::model::{BatchModel, DesignSpace, NoiseModel, SimpleModel, UniformPrior};
use oed::opt::{nmns_run, NmnsConfig};
use oed::rng::stream;

fn main() {
    let model = BatchModel::new(SimpleModel, 2);
    let prior = UniformPrior::unit(1);
    let noise = NoiseModel::constant(0.01);
    let space = DesignSpace::unit(2);

    let grid = grid_scan(&model, &prior, &noise, &space, &[21, 21],
                         &EigConfig::reuse(10_000), 42).unwrap();
    let u_star = grid[argmax(&grid)].eig;
    for (i, j, label) in [(4usize, 4usize, "(0.2,0.2)"), (4, 20, "(0.2,1.0)"), (20, 20, "(1.0,1.0)")] {
        let p = &grid[i * 21 + j];
        println!("grid {label}: eig={:.4} se={:.4}  (band edge {:.4})",
                 p.eig, p.std_err, 0.95 * u_star);
    }
    println!("u_star={u_star:.4}");

    let objective = EigObjective {
        model: &model, prior: &prior, noise: noise.clone(),
        config: EigConfig::reuse(10),
    };
    let rescore = |design: &[f64], seed: u64| {
        let est = estimate_eig(&model, &prior, &noise, design,
                               &EigConfig::reuse(10_000), &mut stream(seed, 0))?;
        Ok((est.eig, est.std_err))
    };
    let nmns = ensemble_run(
        &space, 100,
        |x0, seed| nmns_run(&objective, &space, x0, &NmnsConfig::with_budget(10_000), seed),
        &rescore, 46,
    ).unwrap();

    let (mut corner_low, mut mixed, mut corner_high, mut other) = (0, 0, 0, 0);
    for m in &nmns {
        let (a, b) = (m.design[0].min(m.design[1]), m.design[0].max(m.design[1]));
        let class = if (a - 0.2).abs() < 0.1 && (b - 0.2).abs() < 0.1 { corner_low += 1; "LL" }
            else if (a - 0.2).abs() < 0.1 && (b - 1.0).abs() < 0.1 { mixed += 1; "LH" }
            else if (a - 1.0).abs() < 0.1 && (b - 1.0).abs() < 0.1 { corner_high += 1; "HH" }
            else { other += 1; "??" };
        let band = if (m.score_hq - u_star).abs() <= 0.05 * u_star { "in " } else { "OUT" };
        println!("run {:3}  d=({:.3},{:.3})  hq={:.4}  evals={:5}  {}  {}", m.run, m.design[0], m.design[1], m.score_hq, m.evals, band, class);
    }
    println!("LL={corner_low} LH={mixed} HH={corner_high} other={other}");
    let mut ev: Vec<usize> = nmns.iter().map(|m| m.evals).collect();
    ev.sort();
    println!("evals at exit: min={} median={} max={}", ev[0], ev[50], ev[99]);
}
