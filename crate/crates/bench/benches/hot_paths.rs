use std::hint::black_box;
use std::sync::Arc;

use criterion::{criterion_group, criterion_main, Criterion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use reforest_core::comms::build_graph;
use reforest_core::env::{AgentAction, DroneEnv, EnvConfig};
use reforest_core::nn::{NetConfig, OutputGrad, PolicyNet};
use reforest_core::obs::{ObsLayout, ObsStacker};
use reforest_core::terrain::{generate_scenario, ScenarioConfig};

fn terrain(c: &mut Criterion) {
    let cfg = ScenarioConfig::new(0, 5);
    c.bench_function("generate_scenario 1200m", |b| {
        b.iter(|| generate_scenario(black_box(&cfg)).unwrap())
    });
}

fn env_step(c: &mut Criterion) {
    let scenario = Arc::new(generate_scenario(&ScenarioConfig::new(0, 5)).unwrap());
    let mut env = DroneEnv::new(scenario, EnvConfig::default(), 0).unwrap();
    let mut stacker = ObsStacker::new(ObsLayout::Full21, env.n_agents());
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    c.bench_function("env step + observe, 10 drones", |b| {
        b.iter(|| {
            let actions: Vec<AgentAction> = (0..10)
                .map(|_| AgentAction {
                    movement: [
                        rng.random_range(-1.0..1.0),
                        rng.random_range(-1.0..1.0),
                        0.0,
                    ],
                    drop_seed: rng.random_bool(0.01),
                    save_location: rng.random_bool(0.01),
                })
                .collect();
            let r = env.step(&actions).unwrap();
            if r.done {
                env.reset(2);
                stacker.reset();
            }
            black_box(stacker.observe(&env.scenario, &env.state))
        })
    });
}

fn comms(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let positions: Vec<[f64; 3]> = (0..10)
        .map(|_| {
            [
                rng.random_range(-600.0..600.0),
                50.0,
                rng.random_range(-600.0..600.0),
            ]
        })
        .collect();
    c.bench_function("build_graph 10 agents", |b| {
        b.iter(|| build_graph(black_box(&positions), 200.0, 3))
    });
}

fn network(c: &mut Criterion) {
    let net = PolicyNet::new(NetConfig::default());
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let params: Vec<f32> = net.init_params(&mut rng);
    let input: Vec<f32> = (0..net.config.input_len())
        .map(|_| rng.random_range(0.0..1.0))
        .collect();
    c.bench_function("policy forward", |b| {
        b.iter(|| net.forward(black_box(&params), black_box(&input)).unwrap())
    });
    let mut grads = vec![0.0f32; params.len()];
    c.bench_function("policy forward + backward", |b| {
        b.iter(|| {
            let (out, cache) = net.forward_cached(&params, &input).unwrap();
            let mut g = OutputGrad::zeros(&out);
            g.value = 1.0;
            g.means.iter_mut().for_each(|m| *m = 0.5);
            net.backward(&params, &cache, &g, &mut grads);
        })
    });
}

criterion_group!(benches, terrain, env_step, comms, network);
criterion_main!(benches);
