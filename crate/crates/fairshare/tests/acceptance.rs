//! Acceptance suite: one test per headline property, each printing a
//! pass line on success. Quantitative checks run at desk scale with
//! seeded generators so every run is reproducible.

use std::collections::BTreeMap;

use fairshare::harness::{
    convergence_csv_body, reconfig_csv_body, run_convergence, run_reconfig, ExperimentConfig,
    InstanceSource, Mode,
};
use fairshare::kernel::{positive_root, project_simplex, prox_request, ProxInput};
use fairshare::model::{EdgeMeta, Instance, Link, Path, Request};
use fairshare::oracle::{fairness_certificate, lower_bound_check, solve_reference};
use fairshare::partition::partition_domains;
use fairshare::solver::{penalty_bound, SolverState, StopCriteria};
use fairshare::topology::{
    assemble_instance, generate_barabasi_albert, generate_requests, LinkMode,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn ba_instance(
    nodes: usize,
    requests: usize,
    paths: (usize, usize),
    capacity: f64,
    alpha: f64,
    seed: u64,
) -> Instance {
    let topo = generate_barabasi_albert(nodes, 4, seed).unwrap();
    let specs = generate_requests(&topo, requests, paths, seed).unwrap();
    assemble_instance(&topo, &specs, alpha, capacity, LinkMode::Undirected).unwrap()
}

fn linear_instance(alpha: f64) -> Instance {
    Instance {
        alpha,
        links: vec![
            Link { id: "j1".into(), capacity: 1.0 },
            Link { id: "j2".into(), capacity: 1.0 },
        ],
        paths: vec![
            Path { id: "p0".into(), links: vec!["j1".into(), "j2".into()] },
            Path { id: "p1".into(), links: vec!["j1".into()] },
            Path { id: "p2".into(), links: vec!["j2".into()] },
        ],
        requests: vec![
            Request { id: "r0".into(), weight: 1.0, paths: vec!["p0".into()], source_node: None },
            Request { id: "r1".into(), weight: 1.0, paths: vec!["p1".into()], source_node: None },
            Request { id: "r2".into(), weight: 1.0, paths: vec!["p2".into()], source_node: None },
        ],
        nodes: vec!["n0".into(), "n1".into(), "n2".into()],
        edges: vec![
            EdgeMeta { link: "j1".into(), from: "n0".into(), to: "n1".into() },
            EdgeMeta { link: "j2".into(), from: "n1".into(), to: "n2".into() },
        ],
    }
}

fn solved_state(instance: &Instance, domains: usize, tol: f64, max_iters: u64) -> SolverState {
    let part = partition_domains(instance, domains, 0).unwrap();
    let lambda = penalty_bound(instance).unwrap().lambda_star;
    let mut state = SolverState::new(instance, &part, lambda, None).unwrap();
    let trace = state
        .solve(&StopCriteria { residual_threshold: tol, max_iters, wall_clock: None }, None)
        .unwrap();
    assert!(trace.converged, "solver did not reach residual {tol} in {max_iters} rounds");
    state
}

#[test]
fn criterion_01_anytime_feasibility() {
    let alphas = [1.0, 2.0, 4.0];
    for i in 0..50u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + i);
        let requests = rng.gen_range(30..=60);
        let alpha = alphas[(i % 3) as usize];
        let instance = ba_instance(30, requests, (1, 4), 100.0, alpha, 1000 + i);
        let part = partition_domains(&instance, 4, i).unwrap();
        let lambda = penalty_bound(&instance).unwrap().lambda_star;
        let mut state = SolverState::new(&instance, &part, lambda, None).unwrap();
        for _ in 0..500 {
            state.iterate().unwrap();
            let feasible = state.feasible_point();
            assert!(feasible.iter().all(|&v| v >= 0.0), "negative feasible entry");
            assert!(
                state.min_slack(&feasible) >= -1e-9,
                "capacity violated: slack {}",
                state.min_slack(&feasible)
            );
        }
    }
    println!("ACCEPTANCE 1 PASS: anytime feasibility on 50 instances x 500 rounds");
}

#[test]
fn criterion_02_hand_derived_optimum() {
    let mut state = solved_state(&linear_instance(1.0), 1, 1e-2, 100_000);
    let y = state.compiled.aggregates(&state.feasible_point());
    assert!((y[0] - 1.0 / 3.0).abs() <= 1e-2, "y0 = {}", y[0]);
    assert!((y[1] - 2.0 / 3.0).abs() <= 1e-2, "y1 = {}", y[1]);
    assert!((y[2] - 2.0 / 3.0).abs() <= 1e-2, "y2 = {}", y[2]);

    state = solved_state(&linear_instance(4.0), 1, 1e-2, 100_000);
    let y = state.compiled.aggregates(&state.feasible_point());
    for (r, &yr) in y.iter().enumerate() {
        assert!((yr - 0.5).abs() <= 5e-2, "alpha=4: y{r} = {yr}");
    }
    println!("ACCEPTANCE 2 PASS: linear two-link optimum for alpha in {{1, 4}}");
}

#[test]
fn criterion_03_oracle_certification() {
    for i in 0..20u64 {
        let alpha = if i % 2 == 0 { 1.0 } else { 2.0 };
        let instance = ba_instance(20, 8, (2, 3), 10.0, alpha, 2000 + i);
        let state = solved_state(&instance, 2, 1e-4, 500_000);
        let weight_sum: f64 = instance.requests.iter().map(|r| r.weight).sum();
        let cert = fairness_certificate(&instance, &state.feasible_point(), 1e-3 * weight_sum)
            .unwrap();
        assert!(
            cert.certified(),
            "instance {i}: violation {} > {}",
            cert.violation,
            cert.tolerance
        );
    }
    println!("ACCEPTANCE 3 PASS: certified converged allocations on 20 instances");
}

#[test]
fn criterion_04_partition_independence() {
    for i in 0..10u64 {
        let instance = ba_instance(30, 15, (2, 3), 100.0, 1.0, 3000 + i);
        let lambda = penalty_bound(&instance).unwrap().lambda_star;
        let part1 = partition_domains(&instance, 1, i).unwrap();
        let mut base = SolverState::new(&instance, &part1, lambda, None).unwrap();
        let mut others: Vec<SolverState> = [2usize, 4, 8]
            .iter()
            .map(|&m| {
                let part = partition_domains(&instance, m, i).unwrap();
                SolverState::new(&instance, &part, lambda, None).unwrap()
            })
            .collect();
        for _ in 0..200 {
            base.iterate().unwrap();
            for other in &mut others {
                other.iterate().unwrap();
                for (a, b) in base.z_tilde.iter().zip(&other.z_tilde) {
                    assert!(
                        (a - b).abs() <= 1e-9,
                        "consensus diverged between partitions: {a} vs {b}"
                    );
                }
            }
        }
    }
    println!("ACCEPTANCE 4 PASS: consensus trace partition-independent to 1e-9 over 200 rounds");
}

#[test]
fn criterion_05_lower_bound() {
    // Hand case: exact bound values against the known optimum.
    let report = lower_bound_check(&linear_instance(1.0)).unwrap();
    assert!((report.d["r0"] - 1.0 / 3.0).abs() < 1e-12);
    assert!((report.d["r1"] - 0.5).abs() < 1e-12);
    assert!((report.d["r2"] - 0.5).abs() < 1e-12);
    assert!((report.y_star["r0"] - 1.0 / 3.0).abs() < 1e-3);
    assert!((report.y_star["r1"] - 2.0 / 3.0).abs() < 1e-3);
    assert!(report.holds);

    let alphas = [0.5, 1.0, 2.0, 4.0];
    for i in 0..30u64 {
        let alpha = alphas[(i % 4) as usize];
        let instance = ba_instance(15, 6, (2, 3), 10.0, alpha, 4000 + i);
        let report = lower_bound_check(&instance).unwrap();
        assert!(
            report.holds,
            "instance {i} (alpha {alpha}): worst margin {}",
            report.worst_margin
        );
    }
    println!("ACCEPTANCE 5 PASS: aggregate lower bound on 30 instances, both alpha branches");
}

#[test]
fn criterion_06_penalty_initialization_benefit() {
    let grid_factors = [1.0 / 27.0, 1.0 / 9.0, 1.0 / 3.0, 1.0, 3.0, 9.0, 27.0];
    let max_iters = 50_000u64;
    println!("instance  iters(lambda*)  best(iters, factor)");
    for i in 0..10u64 {
        let instance = ba_instance(15, 6, (2, 3), 10.0, 1.0, 5000 + i);
        let part = partition_domains(&instance, 1, 0).unwrap();
        let lambda_star = penalty_bound(&instance).unwrap().lambda_star;
        let iters_at = |lambda: f64| -> u64 {
            let mut state = SolverState::new(&instance, &part, lambda, None).unwrap();
            let trace = state
                .solve(
                    &StopCriteria { residual_threshold: 1e-2, max_iters, wall_clock: None },
                    None,
                )
                .unwrap();
            if trace.converged {
                trace.rows.len() as u64
            } else {
                max_iters
            }
        };
        let star = iters_at(lambda_star);
        let (best_factor, best) = grid_factors
            .iter()
            .map(|&f| (f, iters_at(f * lambda_star)))
            .min_by_key(|&(_, iters)| iters)
            .unwrap();
        println!("{i:>8}  {star:>14}  ({best}, x{best_factor})");
        assert!(
            star <= 3 * best,
            "instance {i}: lambda* took {star} rounds, best grid point {best}"
        );
    }
    println!("ACCEPTANCE 6 PASS: lambda* within factor 3 of the best grid penalty");
}

#[test]
fn criterion_07_switching_sweep() {
    let theta_grid = vec![0.0, 1e-3, 1e-2, 1e-1, 1.0, 100.0];
    let config = ExperimentConfig {
        instance: InstanceSource::BarabasiAlbert {
            nodes: 30,
            min_degree: 4,
            requests: 20,
            paths_min: 2,
            paths_max: 3,
            capacity: 100.0,
            alpha: 1.0,
            directed: false,
        },
        mode: Mode::Reconfig,
        seeds: (1..=15).collect(),
        domain_counts: vec![1],
        lambda: None,
        residual_threshold: 1e-2,
        max_iters: 50_000,
        theta_grid: theta_grid.clone(),
        weight_range: (1.0, 10.0),
        epsilon: 1e-2,
        workers: 4,
    };
    let results = run_reconfig(&config).unwrap();

    // Per-theta mean and dispersion of the reconfiguration count.
    let mut stats: Vec<(f64, f64, f64, f64)> = Vec::new(); // theta, mean n, sd, mean phi
    for &theta in &theta_grid {
        let ns: Vec<f64> =
            results.iter().filter(|r| r.theta == theta).map(|r| r.n as f64).collect();
        let phis: Vec<f64> =
            results.iter().filter(|r| r.theta == theta).map(|r| r.phi).collect();
        let mean = ns.iter().sum::<f64>() / ns.len() as f64;
        let var =
            ns.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (ns.len() as f64 - 1.0);
        let mean_phi = phis.iter().sum::<f64>() / phis.len() as f64;
        stats.push((theta, mean, var.sqrt(), mean_phi));
        println!("theta {theta}: mean n {mean:.2}, sd {:.2}, mean phi {mean_phi:.3}", var.sqrt());
    }

    // Monotone decrease allowing one inversion within dispersion overlap.
    let mut inversions = 0;
    for pair in stats.windows(2) {
        let (_, n_lo, sd_lo, _) = pair[0];
        let (_, n_hi, sd_hi, _) = pair[1];
        if n_hi > n_lo + 1e-9 {
            inversions += 1;
            assert!(n_hi - sd_hi <= n_lo + sd_lo, "inversion outside dispersion overlap");
        }
    }
    assert!(inversions <= 1, "{inversions} inversions in mean n(theta)");

    // theta = 0 equals the unconstrained reconfiguration count per seed.
    for &seed in &config.seeds {
        let instance = {
            let mut inst = ba_instance(30, 20, (2, 3), 100.0, 1.0, seed);
            for r in &mut inst.requests {
                r.weight = 1.0;
            }
            inst
        };
        let x0 = solve_reference(&instance, None).unwrap().x;
        let mut inst = instance.clone();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for r in &mut inst.requests {
            r.weight = rng.gen_range(1.0..=10.0);
        }
        let part = partition_domains(&inst, 1, seed).unwrap();
        let lambda = penalty_bound(&inst).unwrap().lambda_star;
        let init: BTreeMap<String, f64> =
            inst.paths.iter().zip(&x0).map(|(p, &v)| (p.id.clone(), v)).collect();
        let mut state = SolverState::new(&inst, &part, lambda, Some(&init)).unwrap();
        state
            .solve(
                &StopCriteria { residual_threshold: 1e-2, max_iters: 50_000, wall_clock: None },
                None,
            )
            .unwrap();
        let x = state.feasible_point();
        let unconstrained =
            x.iter().zip(&x0).filter(|(a, b)| (**a - **b).abs() > 1e-2).count();
        let sweep_n = results.iter().find(|r| r.seed == seed && r.theta == 0.0).unwrap().n;
        assert_eq!(sweep_n, unconstrained, "seed {seed}: n(0) mismatch");
    }

    // Largest theta nearly freezes the incumbent.
    let paths = ba_instance(30, 20, (2, 3), 100.0, 1.0, 1).paths.len();
    let (_, n_max, _, _) = *stats.last().unwrap();
    assert!(
        n_max <= 0.05 * paths as f64,
        "n(theta_max) = {n_max} over {paths} paths"
    );

    // Fairness does not deteriorate dramatically.
    let phi0 = stats[0].3;
    for &(theta, _, _, phi) in &stats {
        assert!(
            (phi0 - phi).abs() <= 0.10 * phi0.abs(),
            "theta {theta}: fairness {phi} vs {phi0}"
        );
    }
    println!("ACCEPTANCE 7 PASS: switching sweep shape over 15 seeds");
}

#[test]
fn criterion_08_message_accounting() {
    for i in 0..10u64 {
        let instance = ba_instance(20, 10, (2, 3), 10.0, 1.0, 6000 + i);
        let domains = [2, 4][(i % 2) as usize];
        let part = partition_domains(&instance, domains, i).unwrap();
        let mut state = SolverState::new(&instance, &part, 1.0, None).unwrap();
        for _ in 0..3 {
            state.iterate().unwrap();
            assert_eq!(
                state.floats_last_round,
                state.expected_pair_floats(),
                "counted floats differ from shared-path closed form"
            );
        }
    }
    println!("ACCEPTANCE 8 PASS: per-pair float counts match shared-path cardinalities");
}

#[test]
fn criterion_09_kernel_oracles() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);

    // Simplex projection vs refined 2-D grid search.
    for _ in 0..1000 {
        let radius = rng.gen_range(0.5..2.0);
        let point = [rng.gen_range(-1.0..3.0), rng.gen_range(-1.0..3.0)];
        let ours = project_simplex(&point, radius);
        let grid = grid_project_2d(&point, radius);
        assert!(
            (ours[0] - grid[0]).abs() <= 1e-4 && (ours[1] - grid[1]).abs() <= 1e-4,
            "projection {ours:?} vs grid {grid:?}"
        );
    }

    // Root finder vs the alpha = 1 closed form.
    for _ in 0..1000 {
        let s: f64 = rng.gen_range(-5.0..5.0);
        let lw: f64 = rng.gen_range(0.01..10.0);
        let closed = (s + (s * s + 4.0 * lw).sqrt()) / 2.0;
        let root = positive_root(s, lw, 1.0);
        assert!((root - closed).abs() <= 1e-10, "root {root} vs closed form {closed}");
    }

    // Proximal update vs the numeric argmin oracle.
    for _ in 0..200 {
        let n = rng.gen_range(1..5);
        let anchor: Vec<f64> = (0..n).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let lambda = rng.gen_range(0.1..5.0);
        let weight = rng.gen_range(0.2..3.0);
        let alpha = [1.0, 2.0, 4.0][rng.gen_range(0..3)];
        let input = ProxInput { anchor: &anchor, lambda, weight, alpha, switching: None };
        let ours = prox_request(&input).unwrap();
        let oracle = prox_oracle(&anchor, lambda, weight, alpha);
        for (a, b) in ours.iter().zip(&oracle) {
            assert!((a - b).abs() <= 1e-6, "prox {ours:?} vs oracle {oracle:?}");
        }
    }
    println!("ACCEPTANCE 9 PASS: kernel operations match independent numeric oracles");
}

#[test]
fn criterion_10_reproducibility() {
    let convergence = ExperimentConfig {
        instance: InstanceSource::BarabasiAlbert {
            nodes: 20,
            min_degree: 4,
            requests: 8,
            paths_min: 2,
            paths_max: 3,
            capacity: 10.0,
            alpha: 1.0,
            directed: false,
        },
        mode: Mode::Convergence,
        seeds: vec![1, 2, 3],
        domain_counts: vec![1, 2],
        lambda: None,
        residual_threshold: 1e-2,
        max_iters: 10_000,
        theta_grid: vec![0.0, 0.1],
        weight_range: (1.0, 10.0),
        epsilon: 1e-2,
        workers: 3,
    };
    let a = convergence_csv_body(&run_convergence(&convergence).unwrap());
    let b = convergence_csv_body(&run_convergence(&convergence).unwrap());
    assert_eq!(a, b, "convergence CSV bodies differ between runs");

    let mut reconfig = convergence.clone();
    reconfig.mode = Mode::Reconfig;
    reconfig.seeds = vec![1, 2];
    let a = reconfig_csv_body(&run_reconfig(&reconfig).unwrap());
    let b = reconfig_csv_body(&run_reconfig(&reconfig).unwrap());
    assert_eq!(a, b, "reconfig CSV bodies differ between runs");
    println!("ACCEPTANCE 10 PASS: byte-identical CSV bodies for identical seeds");
}

/// Iteratively refined grid search for the Euclidean projection onto
/// `{z >= 0, z1 + z2 <= radius}` in two dimensions.
fn grid_project_2d(point: &[f64], radius: f64) -> Vec<f64> {
    // Grid over the first coordinate; the second is minimized exactly per
    // column (clamp into [0, radius - z1]), so refinement is 1-D.
    let column_best = |z1: f64| -> (f64, [f64; 2]) {
        let z2 = point[1].clamp(0.0, (radius - z1).max(0.0));
        let d = (z1 - point[0]).powi(2) + (z2 - point[1]).powi(2);
        (d, [z1, z2])
    };
    let mut lo = 0.0_f64;
    let mut hi = radius;
    let mut best = (f64::INFINITY, [0.0_f64, 0.0]);
    for _ in 0..8 {
        let steps = 100;
        best = (f64::INFINITY, best.1);
        for i in 0..=steps {
            let z1 = lo + (hi - lo) * i as f64 / steps as f64;
            let cand = column_best(z1);
            if cand.0 < best.0 {
                best = cand;
            }
        }
        let span = (hi - lo) / steps as f64;
        lo = (best.1[0] - 2.0 * span).max(0.0);
        hi = (best.1[0] + 2.0 * span).min(radius);
    }
    best.1.to_vec()
}

/// Independent argmin oracle for the per-request proximal step: golden
/// section on the aggregate, then back-substitution onto the paths.
fn prox_oracle(anchor: &[f64], lambda: f64, w: f64, alpha: f64) -> Vec<f64> {
    let n = anchor.len() as f64;
    let s: f64 = anchor.iter().sum();
    let g = |y: f64| -> f64 {
        let utility = if (alpha - 1.0).abs() < 1e-12 {
            w * y.ln()
        } else {
            w * y.powf(1.0 - alpha) / (1.0 - alpha)
        };
        -utility + (y - s) * (y - s) / (2.0 * lambda * n)
    };
    let mut a = 1e-12;
    let mut b = s.max(0.0) + (lambda * w * n).powf(1.0 / (alpha + 1.0)) + 10.0;
    let phi = (5.0_f64.sqrt() - 1.0) / 2.0;
    for _ in 0..300 {
        let c = b - phi * (b - a);
        let d = a + phi * (b - a);
        if g(c) < g(d) {
            b = d;
        } else {
            a = c;
        }
    }
    let y = (a + b) / 2.0;
    anchor.iter().map(|&v| v + (y - s) / n).collect()
}
