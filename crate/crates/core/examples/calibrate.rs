//! Internal calibration sweeps used while tuning grids and tolerances.
//! Run with: cargo run -p renewal-core --example calibrate [section]

use std::time::Instant;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use renewal_core::coefficients::CoefficientSpec;
use renewal_core::eigensolver::{
    floquet_eigenvalue, floquet_extrapolated, mixed_eigenvalue, perron_eigenvalue,
    ConstantCellCycle, ConstantPhase, SolveOptions,
};
use renewal_core::grid::GridSpec;
use renewal_core::matrix::{
    blend_matrices, perron_root, BlendMode, NonnegMatrix, PerronOptions,
};
use renewal_core::model::{CellCyclePhase, PhaseModel};

fn reference_cycle() -> PhaseModel {
    PhaseModel::cell_cycle(
        1.0,
        vec![
            CellCyclePhase::gated(
                CoefficientSpec::cosine(1.0, 10.0, 8.0, 0.0),
                10.0 / 24.0,
                CoefficientSpec::constant(0.0),
            ),
            CellCyclePhase::gated(
                CoefficientSpec::cosine(1.0, 10.0, -8.0, 0.0),
                10.0 / 24.0,
                CoefficientSpec::cos_power(1.0, 6, std::f64::consts::PI, 0.0),
            ),
            CellCyclePhase::gated(
                CoefficientSpec::constant(10.0),
                2.0 / 24.0,
                CoefficientSpec::constant(0.0),
            ),
        ],
    )
    .unwrap()
}

fn time_solve(label: &str, model: &PhaseModel, grid: &GridSpec, opts: &SolveOptions) -> f64 {
    let start = Instant::now();
    match floquet_eigenvalue(model, grid, opts) {
        Ok(r) => {
            println!(
                "{label}: lambda={:.9} periods={} spill_warn={} time={:.2?}",
                r.lambda,
                r.periods,
                r.truncation_warning,
                start.elapsed()
            );
            r.lambda
        }
        Err(e) => {
            println!("{label}: ERROR {e}");
            f64::NAN
        }
    }
}

fn section_reference() {
    let model = reference_cycle();
    let opts = SolveOptions::default();
    for steps in [144usize, 288, 576, 1152] {
        let grid = GridSpec::new(1.0, steps, 3.0).unwrap();
        time_solve(&format!("reference S={steps} lambda_F"), &model, &grid, &opts);
    }
    let grid = GridSpec::new(1.0, 1152, 3.0).unwrap();
    let start = Instant::now();
    let p = perron_eigenvalue(&model, &grid, &opts).unwrap();
    println!(
        "reference S=1152 lambda_P={:.9} periods={} time={:.2?}",
        p.lambda,
        p.periods,
        start.elapsed()
    );
    let start = Instant::now();
    let g = mixed_eigenvalue(&model, &grid, &opts).unwrap();
    println!(
        "reference S=1152 lambda_g={:.9} periods={} time={:.2?}",
        g.lambda,
        g.periods,
        start.elapsed()
    );
    let start = Instant::now();
    let frozen = model.freeze_deaths_arithmetic(1152);
    let u = floquet_eigenvalue(&frozen, &grid, &opts).unwrap();
    println!(
        "reference S=1152 lambda_u={:.9} periods={} time={:.2?}",
        u.lambda,
        u.periods,
        start.elapsed()
    );
    // A few death-phase shifts to see the swing of lambda(phi).
    for shift_idx in [0usize, 12, 24, 36] {
        let phi = shift_idx as f64 / 48.0;
        let shifted = model.shift_deaths(phi);
        let grid576 = GridSpec::new(1.0, 576, 3.0).unwrap();
        time_solve(
            &format!("reference S=576 shift={shift_idx}/48"),
            &shifted,
            &grid576,
            &opts,
        );
    }
}

fn draw_constant_chain(rng: &mut ChaCha8Rng) -> ConstantCellCycle {
    let phases = (0..3)
        .map(|_| ConstantPhase {
            rate: rng.random_range(1.0..20.0),
            threshold: rng.random_range(0..=230u32) as f64 / 512.0,
            death: rng.random_range(0.0..1.0),
        })
        .collect();
    ConstantCellCycle::new(phases)
}

fn section_constants() {
    let mut rng = ChaCha8Rng::seed_from_u64(20260816);
    let opts = SolveOptions::default();
    let mut worst_extrap = [0.0f64; 2];
    let mut worst_raw = 0.0f64;
    let mut total = std::time::Duration::ZERO;
    for trial in 0..8 {
        let chain = draw_constant_chain(&mut rng);
        let oracle = chain.characteristic_root().unwrap();
        let model = chain.to_model(1.0).unwrap();
        let max_a = chain
            .phases
            .iter()
            .map(|p| p.threshold)
            .fold(0.0f64, f64::max);
        let decay_min = chain
            .phases
            .iter()
            .map(|p| oracle + p.death + p.rate)
            .fold(f64::INFINITY, f64::min);
        let a_max = max_a + 14.0 / decay_min;
        for (idx, base) in [512usize, 1024].into_iter().enumerate() {
            let grid = GridSpec::new(1.0, base, a_max).unwrap();
            let start = Instant::now();
            let ex = floquet_extrapolated(&model, &grid, &opts).unwrap();
            let dt = start.elapsed();
            total += dt;
            let err = (ex.lambda - oracle).abs();
            let raw_c = (ex.coarse.lambda - oracle).abs();
            let raw_f = (ex.fine.lambda - oracle).abs();
            worst_extrap[idx] = worst_extrap[idx].max(err);
            if base == 1024 {
                worst_raw = worst_raw.max(raw_f);
            }
            println!(
                "const trial={trial} base={base} oracle={oracle:.6} extrap_err={err:.2e} \
                 raw={raw_c:.2e}->{raw_f:.2e} ratio={:.3} periods={}+{} a_max={a_max:.2} time={dt:.2?}",
                raw_f / raw_c.max(1e-300),
                ex.coarse.periods,
                ex.fine.periods,
            );
        }
    }
    println!(
        "const summary: worst extrap err base512={:.2e} base1024={:.2e} worst raw fine={:.2e} total={total:.2?}",
        worst_extrap[0], worst_extrap[1], worst_raw
    );
}

fn draw_periodic_model(rng: &mut ChaCha8Rng) -> PhaseModel {
    let phases = (0..3)
        .map(|_| {
            let base = rng.random_range(4.0..16.0);
            let amp = base * rng.random_range(0.0..0.9);
            let phase = rng.random_range(0.0..1.0);
            let threshold = rng.random_range(0..=200u32) as f64 / 512.0;
            let death_scale = rng.random_range(0.0..1.5);
            let death_phase = rng.random_range(0.0..1.0);
            CellCyclePhase::gated(
                CoefficientSpec::cosine(1.0, base, amp, phase),
                threshold,
                CoefficientSpec::cosine(1.0, death_scale, death_scale * 0.9, death_phase),
            )
        })
        .collect();
    PhaseModel::cell_cycle(1.0, phases).unwrap()
}

fn section_periodic_signs() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let opts = SolveOptions::default();
    let mut above = 0;
    let mut below = 0;
    let start = Instant::now();
    for seed in 0..25 {
        let model = draw_periodic_model(&mut rng);
        let grid = GridSpec::for_model(&model, Some(384), Some(2.5)).unwrap();
        let f = floquet_eigenvalue(&model, &grid, &opts).unwrap();
        let p = perron_eigenvalue(&model, &grid, &opts).unwrap();
        let g = mixed_eigenvalue(&model, &grid, &opts).unwrap();
        let diff = f.lambda - p.lambda;
        if diff > 0.01 {
            above += 1;
        }
        if diff < -0.01 {
            below += 1;
        }
        println!(
            "periodic seed={seed} lambda_F={:.6} lambda_P={:.6} lambda_g={:.6} F-P={diff:+.4} \
             g<=min={} periods={}",
            f.lambda,
            p.lambda,
            g.lambda,
            g.lambda <= f.lambda.min(p.lambda) + 1e-4,
            f.periods,
        );
    }
    println!(
        "periodic summary: F>P by 0.01: {above}, F<P by 0.01: {below}, time={:.2?}",
        start.elapsed()
    );
}

fn section_kingman() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let perron_opts = PerronOptions::default();
    let mut worst = [f64::INFINITY; 2];
    let mut failures = [0usize; 2];
    let trials = 100_000;
    let start = Instant::now();
    for _ in 0..trials {
        let a = NonnegMatrix::new(
            4,
            (0..16).map(|_| rng.random_range(0.05..1.05)).collect(),
        )
        .unwrap();
        let b = NonnegMatrix::new(
            4,
            (0..16).map(|_| rng.random_range(0.05..1.05)).collect(),
        )
        .unwrap();
        let theta: f64 = rng.random_range(0.0..=1.0);
        let ra = perron_root(&a, &perron_opts).unwrap();
        let rb = perron_root(&b, &perron_opts).unwrap();
        for (idx, mode) in [BlendMode::EntrywiseGeometric, BlendMode::DiagArithOffdiagGeom]
            .into_iter()
            .enumerate()
        {
            let c = blend_matrices(&a, &b, theta, mode).unwrap();
            let rc = perron_root(&c, &perron_opts).unwrap();
            let margin = theta * ra.ln() + (1.0 - theta) * rb.ln() - rc.ln();
            worst[idx] = worst[idx].min(margin);
            if margin < -1e-10 {
                failures[idx] += 1;
            }
        }
    }
    println!(
        "kingman {trials} trials: geometric worst={:.3e} fails={}, diag-arith worst={:.3e} fails={}, time={:.2?}",
        worst[0],
        failures[0],
        worst[1],
        failures[1],
        start.elapsed()
    );
}

fn section_kingman_dump() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let perron_opts = PerronOptions::default();
    let trials = 100_000;
    let mut worst_margin = f64::INFINITY;
    let mut worst: Option<(Vec<f64>, Vec<f64>, f64)> = None;
    for _ in 0..trials {
        let a_data: Vec<f64> = (0..16).map(|_| rng.random_range(0.05..1.05)).collect();
        let b_data: Vec<f64> = (0..16).map(|_| rng.random_range(0.05..1.05)).collect();
        let theta: f64 = rng.random_range(0.0..=1.0);
        let a = NonnegMatrix::new(4, a_data.clone()).unwrap();
        let b = NonnegMatrix::new(4, b_data.clone()).unwrap();
        let ra = perron_root(&a, &perron_opts).unwrap();
        let rb = perron_root(&b, &perron_opts).unwrap();
        let c = blend_matrices(&a, &b, theta, BlendMode::DiagArithOffdiagGeom).unwrap();
        let rc = perron_root(&c, &perron_opts).unwrap();
        let margin = theta * ra.ln() + (1.0 - theta) * rb.ln() - rc.ln();
        if margin < worst_margin {
            worst_margin = margin;
            worst = Some((a_data, b_data, theta));
        }
    }
    let (a_data, b_data, theta) = worst.unwrap();
    println!("worst diag-arith margin {worst_margin:.6e} at theta = {theta:.17e}");
    let fmt = |v: &[f64]| {
        v.iter()
            .map(|x| format!("{x:.17e}"))
            .collect::<Vec<_>>()
            .join(", ")
    };
    println!("a = [{}]", fmt(&a_data));
    println!("b = [{}]", fmt(&b_data));
}

fn section_crit1() {
    let model = PhaseModel::cell_cycle(
        1.0,
        vec![CellCyclePhase::new(
            CoefficientSpec::constant(1.0),
            CoefficientSpec::constant(0.0),
        )],
    )
    .unwrap();
    let opts = SolveOptions::default();
    let mut errs = Vec::new();
    for scale in [2.0f64, 4.0] {
        let grid = GridSpec::new(1.0, (1024.0 * scale) as usize, 10.0).unwrap();
        let start = Instant::now();
        let r = floquet_eigenvalue(&model, &grid, &opts).unwrap();
        let err = (r.lambda - 1.0).abs();
        errs.push(err);
        println!(
            "crit1 scale={scale} lambda={:.10} err={err:.3e} periods={} spill_warn={} time={:.2?}",
            r.lambda,
            r.periods,
            r.truncation_warning,
            start.elapsed()
        );
    }
    println!("crit1 ratio={:.4}", errs[1] / errs[0]);
}

fn section_lemma() {
    use renewal_core::adjoint::check_lemma_blend;
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let opts = SolveOptions {
        capture_eigenfunction: true,
        ..SolveOptions::default()
    };
    let start = Instant::now();
    for pair in 0..3 {
        let a = draw_periodic_model(&mut rng);
        let b = draw_periodic_model(&mut rng);
        let grid = GridSpec::for_model(&a, Some(384), Some(2.5)).unwrap();
        let t0 = Instant::now();
        match check_lemma_blend(&a, &b, &grid, 0.5, &opts, 1e-6) {
            Ok(rep) => println!(
                "lemma pair={pair} min_residual={:.3e} mu_blend={:.6} forward=({:.6},{:.6}) time={:.2?}",
                rep.residual.min_residual,
                rep.mu_blend,
                rep.forward_first,
                rep.forward_second,
                t0.elapsed()
            ),
            Err(e) => println!("lemma pair={pair} ERROR {e}"),
        }
    }
    println!("lemma total={:.2?}", start.elapsed());
}

fn section_conserve() {
    use renewal_core::adjoint::{adjoint_eigenfunction, check_conservation};
    let opts = SolveOptions {
        capture_eigenfunction: true,
        ..SolveOptions::default()
    };
    // Constant one-phase model at the default grid.
    let constant = PhaseModel::cell_cycle(
        1.0,
        vec![CellCyclePhase::new(
            CoefficientSpec::constant(1.0),
            CoefficientSpec::constant(0.2),
        )],
    )
    .unwrap();
    let grid = GridSpec::for_model(&constant, None, None).unwrap();
    let start = Instant::now();
    let fwd = floquet_eigenvalue(&constant, &grid, &opts).unwrap();
    let dual = adjoint_eigenfunction(&constant, &grid, &fwd, &opts).unwrap();
    let report = check_conservation(&constant, &grid, &dual, 20, None).unwrap();
    println!(
        "conserve constant: per_period={:.3e} total={:.3e} time={:.2?}",
        report.per_period_drift,
        report.total_drift,
        start.elapsed()
    );
    let model = reference_cycle();
    let grid = GridSpec::new(1.0, 1152, 3.0).unwrap();
    let start = Instant::now();
    let fwd = floquet_eigenvalue(&model, &grid, &opts).unwrap();
    let dual = adjoint_eigenfunction(&model, &grid, &fwd, &opts).unwrap();
    let report = check_conservation(&model, &grid, &dual, 20, None).unwrap();
    println!(
        "conserve reference: per_period={:.3e} total={:.3e} time={:.2?}",
        report.per_period_drift,
        report.total_drift,
        start.elapsed()
    );
}

fn section_crit3() {
    use renewal_core::matrix::{assemble_monodromy, perron_root, PerronOptions};
    use renewal_core::transport::Solver;
    let tight = SolveOptions {
        tol: 1e-12,
        ..SolveOptions::default()
    };
    let model = reference_cycle();
    let grid = GridSpec::new(1.0, 96, 3.0).unwrap();
    let start = Instant::now();
    let solver = Solver::new(&model, &grid).unwrap();
    let m = assemble_monodromy(&solver).unwrap();
    let rho = perron_root(&m, &PerronOptions::default()).unwrap();
    let lam_m = rho.ln() / grid.period();
    let t_mono = start.elapsed();
    let start = Instant::now();
    let r = floquet_eigenvalue(&model, &grid, &tight).unwrap();
    println!(
        "crit3 reference S=96 dim={} monodromy_lambda={:.12} floquet={:.12} diff={:.3e} mono_time={t_mono:.2?} floquet_time={:.2?}",
        m.dim(),
        lam_m,
        r.lambda,
        (lam_m - r.lambda).abs(),
        start.elapsed()
    );
}

fn main() {
    let section = std::env::args().nth(1).unwrap_or_else(|| "all".into());
    match section.as_str() {
        "reference" => section_reference(),
        "constants" => section_constants(),
        "periodic" => section_periodic_signs(),
        "kingman" => section_kingman(),
        "kingman_dump" => section_kingman_dump(),
        "crit1" => section_crit1(),
        "lemma" => section_lemma(),
        "conserve" => section_conserve(),
        "crit3" => section_crit3(),
        _ => {
            section_reference();
            section_constants();
            section_periodic_signs();
            section_kingman();
            section_crit1();
            section_lemma();
            section_conserve();
            section_crit3();
        }
    }
}
