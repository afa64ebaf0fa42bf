use donor_backaction::pulse::Channel;
use donor_backaction::trajectory::{trajectory_rng, TrajectorySimulator};
use donor_backaction::{run_trajectories, PreparedSystem, PulseSchedule, SpinSystemSpec, TrajectoryConfig};

fn p117() -> SpinSystemSpec {
    SpinSystemSpec::single_donor(117.0).unwrap()
}

#[test]
fn closed_system_never_flips() {
    let pulse = PulseSchedule::readout(f64::INFINITY, f64::INFINITY, 1000.0).unwrap();
    let cfg = TrajectoryConfig::new(p117(), pulse, "Uu".parse().unwrap(), 2000, 1).unwrap();
    let est = run_trajectories(&cfg).unwrap();
    assert_eq!(est.counts, vec![2000, 0]);
    assert_eq!(est.probabilities, vec![1.0, 0.0]);
    assert_eq!(est.total_tunnel_in + est.total_tunnel_out, 0);
}

#[test]
fn tunnel_out_waiting_times_are_exponential() {
    let pulse = PulseSchedule::readout(80.0, f64::INFINITY, 2000.0).unwrap();
    let sys = PreparedSystem::new(&p117(), &pulse).unwrap();
    let sim = TrajectorySimulator::new(&sys, &"e4".parse().unwrap()).unwrap();
    let n = 4000;
    let mut times: Vec<f64> = (0..n)
        .map(|i| {
            let rec = sim.run_one(&mut trajectory_rng(99, i)).unwrap();
            let first = rec.jumps.first().expect("a tunnel-out within 25 lifetimes");
            assert!(matches!(first.channel, Channel::TunnelOut { .. }));
            first.time
        })
        .collect();
    times.sort_by(f64::total_cmp);
    let d = times
        .iter()
        .enumerate()
        .map(|(k, t)| {
            let cdf = 1.0 - (-t / 80.0).exp();
            (cdf - k as f64 / n as f64).abs().max(((k + 1) as f64 / n as f64 - cdf).abs())
        })
        .fold(0.0, f64::max);
    assert!(d < 1.628 / (n as f64).sqrt(), "KS statistic {d}");
    let mean = times.iter().sum::<f64>() / n as f64;
    assert!((mean - 80.0).abs() < 4.0 * 80.0 / (n as f64).sqrt());
}

#[test]
fn estimates_are_reproducible_and_normalized() {
    let cfg = TrajectoryConfig::new(p117(), PulseSchedule::standard_resonant(), "e4".parse().unwrap(), 20_000, 5).unwrap();
    let a = run_trajectories(&cfg).unwrap();
    let b = run_trajectories(&cfg).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.counts.iter().sum::<u64>(), 20_000);
    assert_eq!(a.probabilities.iter().sum::<f64>(), 1.0);
    for (p, se) in a.probabilities.iter().zip(&a.standard_errors) {
        assert_eq!(*se, (p * (1.0 - p) / 20_000.0).sqrt());
    }
    assert!((a.mean_tunnel_in() - 5.0).abs() < 0.5, "{}", a.mean_tunnel_in());
}

#[test]
fn quadrupling_the_sample_is_consistent() {
    let spec = SpinSystemSpec::single_donor(200.0).unwrap();
    for (seed, other) in [(3, 4), (30, 40)] {
        let small = TrajectoryConfig::new(spec.clone(), PulseSchedule::standard_resonant(), "e4".parse().unwrap(), 50_000, seed).unwrap();
        let large = TrajectoryConfig { num_trajectories: 200_000, seed: other, ..small.clone() };
        let (a, b) = (run_trajectories(&small).unwrap(), run_trajectories(&large).unwrap());
        let pooled = (a.counts[1] + b.counts[1]) as f64 / 250_000.0;
        let se = (pooled * (1.0 - pooled) * (1.0 / 50_000.0 + 1.0 / 200_000.0)).sqrt();
        assert!((a.probabilities[1] - b.probabilities[1]).abs() < 3.0 * se, "{a:?} {b:?}");
    }
}
