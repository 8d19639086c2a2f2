use ptm_energy::hallucination::{
    composite_loss, run_batch, run_trajectory, toy_predictor, ConfidenceBundle, DesignConfig, DesignState, Designer,
    LossWeights, Objective, Predictor, PredictorConfig, SequenceLogits, Stage, TargetConfig, TrajectoryRow,
    ALPHABET_SIZE,
};
use ptm_energy::metrics::{self, TmKernel};
use ptm_energy::ChainMap;

fn small(objective: Objective, seed: u64) -> DesignConfig {
    DesignConfig {
        binder_length: 8,
        objective,
        stage_steps: [12, 6, 6],
        greedy_proposals: 50,
        plddt_terminate_below: 0.0,
        seed,
        target: TargetConfig { length: 10, seed: 4 },
        predictor: PredictorConfig {
            features: 6,
            bins: 12,
            seed: 9,
        },
        ..DesignConfig::default()
    }
}

fn entropy(p: &[f64]) -> f64 {
    p.iter().filter(|&&q| q > 0.0).map(|&q| -q * q.ln()).sum()
}

#[test]
fn trajectories_are_bit_reproducible() {
    for objective in [Objective::PtmEnergy, Objective::Iptm, Objective::IptmMean, Objective::None] {
        let config = small(objective, 17);
        let p = toy_predictor::<f64>(&config);
        let a = run_trajectory(&p, &config).unwrap();
        let b = run_trajectory(&toy_predictor::<f64>(&config), &config).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.trace_csv(), b.trace_csv());
    }
    let config = small(Objective::PtmEnergy, 30);
    let p = toy_predictor::<f64>(&config);
    let batch = run_batch(&p, &config, 4).unwrap();
    for (k, r) in batch.iter().enumerate() {
        let mut c = config.clone();
        c.seed = 30 + k as u64;
        assert_eq!(r, &run_trajectory(&p, &c).unwrap());
    }
}

#[test]
fn recorded_losses_recompose_and_greedy_improves() {
    for seed in 0..4 {
        for objective in [Objective::PtmEnergy, Objective::Iptm, Objective::None] {
            let config = small(objective, seed);
            let p = toy_predictor::<f64>(&config);
            let r = run_trajectory(&p, &config).unwrap();
            for row in &r.rows {
                assert!((row.components.total(&config.weights) - row.loss_total).abs() <= 1e-9);
            }
            let greedy = r.greedy_losses();
            assert!(!greedy.is_empty());
            assert!(greedy.windows(2).all(|w| w[1] < w[0]));
            // final loss is the last accepted state; row 0 is the stage-3 exit
            assert!(r.final_loss().unwrap() <= greedy[0]);
            assert!(r.straight_through_one_hot);
            assert_eq!(r.final_sequence.len(), config.binder_length);
        }
    }
}

#[test]
fn straight_through_forwards_are_one_hot_and_differ_from_relaxed() {
    let config = small(Objective::PtmEnergy, 5);
    let p = toy_predictor::<f64>(&config);
    let mut d = Designer::new(&p, &config).unwrap();
    let mut state = DesignState::<f64>::seeded(config.binder_length, 5);
    d.stage1_logit_descent(&mut state).unwrap();
    d.stage2_anneal(&mut state).unwrap();
    let relaxed = state.logits.relaxed(1.0);
    d.stage3_straight_through(&mut state).unwrap();
    assert_eq!(state.straight_through_inputs.len(), config.stage_steps[2]);
    for input in &state.straight_through_inputs {
        for row in input.chunks_exact(ALPHABET_SIZE) {
            assert_eq!(row.iter().filter(|&&v| v == 1.0).count(), 1);
            assert!(row.iter().all(|&v| v == 0.0 || v == 1.0));
        }
    }
    let discrete = d.loss(&state.straight_through_inputs[0]).unwrap().0;
    let soft = d.loss(&relaxed).unwrap().0;
    assert_ne!(discrete, soft);
}

#[test]
fn equal_temperatures_make_annealing_a_plain_continuation() {
    let mut split = small(Objective::PtmEnergy, 8);
    split.stage_steps = [5, 4, 0];
    split.temp_schedule = [1.0, 1.0];
    let mut joined = split.clone();
    joined.stage_steps = [9, 0, 0];

    let p = toy_predictor::<f64>(&split);
    let mut a = DesignState::<f64>::seeded(8, 8);
    let mut da = Designer::new(&p, &split).unwrap();
    da.stage1_logit_descent(&mut a).unwrap();
    da.stage2_anneal(&mut a).unwrap();

    let mut b = DesignState::<f64>::seeded(8, 8);
    Designer::new(&p, &joined).unwrap().stage1_logit_descent(&mut b).unwrap();

    assert_eq!(a.logits, b.logits);
    let losses = |rows: &[TrajectoryRow]| rows.iter().map(|r| r.loss_total).collect::<Vec<_>>();
    assert_eq!(losses(&a.rows), losses(&b.rows));
}

#[test]
fn annealing_sharpens_a_fixed_distribution() {
    let config = small(Objective::PtmEnergy, 2);
    let p = toy_predictor::<f64>(&config);
    let d = Designer::new(&p, &config).unwrap();
    let z = DesignState::<f64>::seeded(8, 2).logits;
    let mut schedule = vec![config.temp_schedule[0]];
    schedule.extend(d.anneal_temperatures());
    for i in 0..z.len() {
        let h: Vec<f64> = schedule
            .iter()
            .map(|&t| entropy(&z.relaxed(t)[i * ALPHABET_SIZE..(i + 1) * ALPHABET_SIZE]))
            .collect();
        assert!(h.windows(2).all(|w| w[1] <= w[0] + 1e-12), "residue {i}: {h:?}");
    }
}

#[test]
fn concentrated_logits_match_the_zero_temperature_limit() {
    let config = small(Objective::PtmEnergy, 3);
    let p = toy_predictor::<f64>(&config);
    let d = Designer::new(&p, &config).unwrap();
    let mut z = vec![0.0; 8 * ALPHABET_SIZE];
    for i in 0..8 {
        z[i * ALPHABET_SIZE + (3 * i) % ALPHABET_SIZE] = 100.0;
    }
    let z = SequenceLogits::new(z, 8).unwrap();
    let (hard, _) = d.loss(&z.one_hot()).unwrap();
    let (soft, _) = d.loss(&z.relaxed(0.01)).unwrap();
    assert_eq!(hard, soft);
}

#[test]
fn objective_support_at_the_first_step() {
    for seed in 0..6 {
        let e = small(Objective::PtmEnergy, seed);
        let p = toy_predictor::<f64>(&e);
        let r = run_trajectory(&p, &e).unwrap();
        assert_eq!(r.energy_gradient_support, Some(e.binder_length));

        let i = small(Objective::Iptm, seed);
        let r = run_trajectory(&p, &i).unwrap();
        let d = Designer::new(&p, &i).unwrap();
        let z = DesignState::<f64>::seeded(i.binder_length, seed).logits;
        let bundle = p.predict(&z.relaxed(i.temp_schedule[0])).unwrap();
        let (_, star) = metrics::iptm_with_argmax(&bundle.pae_logits, d.chains(), d.kernel()).unwrap();
        let reachable = if d.chains().is_binder(star) { 1 } else { i.binder_length };
        let support = r.energy_gradient_support.unwrap();
        assert!(support <= reachable, "seed {seed}: support {support}, argmax row {star}");
    }
}

fn bundle(seed: u64) -> (ConfidenceBundle<f64>, ChainMap, TmKernel<f64>, DesignConfig) {
    let config = small(Objective::PtmEnergy, seed);
    let p = toy_predictor::<f64>(&config);
    let z = DesignState::<f64>::seeded(config.binder_length, seed).logits;
    let b = p.predict(&z.relaxed(1.0)).unwrap();
    let chains = ChainMap::binder_target(config.binder_length, config.target.length).unwrap();
    let kernel = TmKernel::new(chains.len(), p.bin_centers()).unwrap();
    (b, chains, kernel, config)
}

#[test]
fn composite_loss_agrees_with_the_metrics() {
    let (b, chains, kernel, mut config) = bundle(1);
    let (total, c) = composite_loss(&b, &chains, &kernel, &config).unwrap();
    assert_eq!(c.energy, metrics::ptm_energy(&b.pae_logits, &chains, &kernel).unwrap());
    assert_eq!(c.plddt, 1.0 - metrics::plddt_mean(&b.plddt, &chains).unwrap());
    let (_, ipae) = metrics::expected_interface_pae(&b.pae_logits, &chains, kernel.bin_centers()).unwrap();
    assert_eq!(c.ipae, ipae);
    let (_, intra) = metrics::expected_binder_pae(&b.pae_logits, &chains, kernel.bin_centers()).unwrap();
    assert_eq!(c.intra_pae, intra);

    config.objective = Objective::None;
    let (none, _) = composite_loss(&b, &chains, &kernel, &config).unwrap();
    assert!((total - none - 0.05 * c.energy).abs() <= 1e-15);

    config.objective = Objective::Iptm;
    let (_, ci) = composite_loss(&b, &chains, &kernel, &config).unwrap();
    assert_eq!(ci.energy, 1.0 - metrics::iptm(&b.pae_logits, &chains, &kernel).unwrap());

    config.weights = LossWeights::ZERO;
    assert_eq!(composite_loss(&b, &chains, &kernel, &config).unwrap().0, 0.0);
}

const GOLDEN: &str = "tests/fixtures/golden_trace.csv";

/// Three annealing steps followed by three straight-through steps from a
/// seeded start, compared against the committed trace. Regenerate with
/// `PTM_ENERGY_BLESS=1 cargo test --test design golden`.
#[test]
fn golden_trace() {
    let mut config = small(Objective::PtmEnergy, 12);
    config.stage_steps = [0, 3, 3];
    let p = toy_predictor::<f64>(&config);
    let mut d = Designer::new(&p, &config).unwrap();
    let mut state = DesignState::<f64>::seeded(config.binder_length, 12);
    d.stage2_anneal(&mut state).unwrap();
    d.stage3_straight_through(&mut state).unwrap();
    assert_eq!(
        state.rows.iter().map(|r| r.stage).collect::<Vec<_>>(),
        [[Stage::Anneal; 3], [Stage::StraightThrough; 3]].concat()
    );
    let mut csv = String::from("step,stage,loss_total,energy,plddt,ipae,intra_pae,con_inter,con_intra,rad_gyr,temperature\n");
    for r in &state.rows {
        let c = &r.components;
        let values = [r.loss_total, c.energy, c.plddt, c.ipae, c.intra_pae, c.con_inter, c.con_intra, c.rad_gyr, r.temperature];
        let cells: Vec<String> = values.iter().map(|v| format!("{v:e}")).collect();
        csv.push_str(&format!("{},{},{}\n", r.step, u8::from(r.stage), cells.join(",")));
    }
    let path = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join(GOLDEN);
    if std::env::var_os("PTM_ENERGY_BLESS").is_some() {
        std::fs::write(&path, &csv).unwrap();
    }
    let golden = std::fs::read_to_string(&path).expect("golden trace fixture");
    let parse = |text: &str| -> Vec<Vec<f64>> {
        text.lines().skip(1).map(|l| l.split(',').map(|v| v.parse().unwrap()).collect()).collect()
    };
    let (want, got) = (parse(&golden), parse(&csv));
    assert_eq!(want.len(), got.len());
    for (w, g) in want.iter().zip(&got) {
        for (a, b) in w.iter().zip(g) {
            assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0), "{a} vs {b}");
        }
    }
}

/// 200 recorded gradient steps; the trajectory itself is irrelevant.
fn sparsity_run() -> (ptm_energy::gradients::GradientReport, ptm_energy::gradients::GradientReport, usize) {
    let config = DesignConfig {
        binder_length: 12,
        stage_steps: [100, 50, 50],
        greedy_proposals: 0,
        plddt_terminate_below: 0.0,
        target: TargetConfig { length: 20, seed: 7 },
        predictor: PredictorConfig {
            features: 8,
            bins: 16,
            seed: 11,
        },
        ..DesignConfig::default()
    };
    let p = toy_predictor::<f64>(&config);
    let mut d = Designer::new(&p, &config).unwrap().record_gradients(10).unwrap();
    d.run(DesignState::seeded(12, 0), 0).unwrap();
    let (e, i) = d.recorder().unwrap().reports().unwrap();
    (e, i, config.target.length)
}

#[test]
fn energy_gradients_engage_more_of_the_target_than_iptm() {
    let (e, i, target) = sparsity_run();
    assert_eq!(e.steps, 200);
    // every target residue carries pTMEnergy gradient at every step
    assert!(e.per_pair_max.iter().flatten().all(|&v| v > 0.0));
    assert_eq!(e.topk_frequency.iter().sum::<usize>(), 200 * 10);
    assert!(e.engaged_count() > i.engaged_count(), "{} vs {}", e.engaged_count(), i.engaged_count());
    assert!(i.engaged_fraction < 1.0);
    assert!(e.engaged_count() >= 10 && e.engaged_count() <= target);
}

/// The toy predictor's per-target gradient magnitudes barely move over a
/// run, so the same top-k residues dominate every step and pTMEnergy falls
/// short of engaging the whole target.
#[test]
#[ignore = "fails on the toy predictor: pTMEnergy engages a stable subset of the target"]
fn energy_gradients_engage_every_target_residue() {
    let (e, _, _) = sparsity_run();
    assert_eq!(e.engaged_fraction, 1.0);
}
