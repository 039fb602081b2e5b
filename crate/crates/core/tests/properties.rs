//! Randomised invariants over the public API.

use memsyn::calibration::{minimize_simplex, SimplexOptions};
use memsyn::io::config::SimOverrides;
use memsyn::io::csv::{parse_csv, samples_from, write_trace_csv};
use memsyn::io::{parse_config, Format, RunConfig};
use memsyn::simulator::{run, run_final, TraceMeta};
use memsyn::waveform::{SpikeShape, StdpPairSpec, ReadSpec};
use memsyn::{par, protocols};
use memsyn::{DeviceParams, DeviceState, Segment, SimConfig, Trace, TraceSample, Waveform};
use proptest::prelude::*;

fn segment() -> impl Strategy<Value = Segment> {
    let v = -3.0..3.0f64;
    let d = 1e-6..2e-4f64;
    prop_oneof![
        (v.clone(), v.clone(), d.clone()).prop_map(|(a, b, d)| Segment::Ramp { v_from: a, v_to: b, duration: d }),
        (v.clone(), d.clone()).prop_map(|(v, d)| Segment::Hold { v, duration: d }),
        (0.05..0.2f64, d).prop_map(|(v, d)| Segment::Read { v, duration: d }),
    ]
}

fn waveform() -> impl Strategy<Value = Waveform> {
    prop::collection::vec(segment(), 1..6).prop_map(|s| Waveform::new(s).unwrap())
}

fn quiet() -> DeviceParams {
    DeviceParams { tau_ret: f64::INFINITY, sigma_c2c: 0.0, ..DeviceParams::default() }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn state_and_current_stay_bounded(w in waveform(), x0 in 0.0..=1.0f64, i_cc in prop::option::of(1e-4..5e-3f64)) {
        let params = DeviceParams::default();
        let cfg = SimConfig { i_cc, ..SimConfig::pulse() };
        let (end, trace) = run(&w, &DeviceState::new(x0), &cfg, &params).unwrap();
        prop_assert!((0.0..=1.0).contains(&end.x));
        for s in &trace.samples {
            prop_assert!((0.0..=1.0).contains(&s.x), "x = {}", s.x);
            prop_assert!(s.i.is_finite());
            if let Some(limit) = i_cc {
                prop_assert!(s.i.abs() <= limit * (1.0 + 1e-9), "i = {} > {}", s.i, limit);
            }
        }
        for pair in trace.samples.windows(2) {
            prop_assert!(pair[1].t >= pair[0].t);
            prop_assert!(pair[1].damage >= pair[0].damage);
        }
    }

    #[test]
    fn segment_boundaries_are_sampled(w in waveform()) {
        let params = DeviceParams::default();
        let cfg = SimConfig::pulse().with_decimation(50);
        let (_, trace) = run(&w, &DeviceState::fresh(&params), &cfg, &params).unwrap();
        for &b in w.boundaries() {
            let hit = trace.samples.iter().any(|s| (s.t - b).abs() <= 1e-12 * b.max(1e-6));
            prop_assert!(hit, "no sample at boundary {b}");
        }
    }

    #[test]
    fn dead_zone_bias_conserves_state(x0 in 0.0..=1.0f64, v in -0.29..0.29f64, d in 1e-6..1.0f64) {
        let params = quiet();
        let w = Waveform::new(vec![Segment::Hold { v, duration: d }]).unwrap();
        let cfg = SimConfig::pulse().with_dt_max(d / 10.0);
        let end = run_final(&w, &DeviceState::new(x0), &cfg, &params).unwrap();
        prop_assert_eq!(end.x, x0);
    }

    #[test]
    fn swapping_pre_and_post_negates_pair(dt in -60e-6..60e-6f64, t in 0.0..200e-6f64) {
        let spike = SpikeShape::default();
        let a = StdpPairSpec::new(spike, dt, ReadSpec::default());
        let b = StdpPairSpec::new(spike, -dt, ReadSpec::default());
        prop_assert!((a.pair_voltage(t) + b.pair_voltage(t)).abs() < 1e-12);
    }

    #[test]
    fn stdp_is_antisymmetric_for_symmetric_rates(dt in 1e-6..60e-6f64) {
        let params = DeviceParams { k_r: 143.0, v0r: 0.2, ..quiet() };
        let settings = protocols::StdpSettings::default();
        let cfg = SimConfig::pulse();
        let s0 = DeviceState::new(0.5);
        let pos = protocols::stdp_point(&s0, dt, &settings, &cfg, &params).unwrap();
        let neg = protocols::stdp_point(&s0, -dt, &settings, &cfg, &params).unwrap();
        prop_assert!(pos.delta_g != 0.0);
        prop_assert!((pos.delta_g + neg.delta_g).abs() <= 1e-6 * pos.delta_g.abs(), "{} vs {}", pos.delta_g, neg.delta_g);
    }

    #[test]
    fn potentiation_is_monotone(amp in 0.8..1.5f64, width in 5e-6..50e-6f64) {
        let params = DeviceParams { sigma_c2c: 0.0, ..DeviceParams::default() };
        let cfg = SimConfig::pulse().with_compliance(1e-3);
        let r = protocols::run_ltp_ltd(amp, width, 8, &cfg, &params).unwrap();
        for pair in r.ltp.g.windows(2) {
            prop_assert!(pair[1] >= pair[0] * (1.0 - 1e-6), "{:?}", r.ltp.g);
        }
        for pair in r.ltd.g.windows(2) {
            prop_assert!(pair[1] <= pair[0] * (1.0 + 1e-6), "{:?}", r.ltd.g);
        }
    }

    #[test]
    fn simplex_never_worse_than_start(
        center in prop::collection::vec(-3.0..3.0f64, 3),
        start in prop::collection::vec(-5.0..5.0f64, 3),
    ) {
        let f = |x: &[f64]| x.iter().zip(&center).map(|(a, c)| (a - c).powi(2)).sum::<f64>();
        let f0 = f(&start);
        let mut opts = SimplexOptions::unbounded(3);
        opts.max_evals = 200;
        let m = minimize_simplex(f, &start, &opts).unwrap();
        prop_assert!(m.f <= f0);
        prop_assert!((f(&m.x) - m.f).abs() <= 1e-12 * (1.0 + m.f));
    }

    #[test]
    fn trace_csv_round_trips(rows in prop::collection::vec(prop::array::uniform6(-1e3..1e3f64), 0..20)) {
        let samples: Vec<TraceSample> = rows
            .iter()
            .map(|r| TraceSample { t: r[0], v_applied: r[1], v_device: r[2], i: r[3], x: r[4], damage: r[5] })
            .collect();
        let trace = Trace { samples, meta: TraceMeta { params_hash: "h".into(), seed: 1, config: SimConfig::pulse() } };
        let mut buf = Vec::new();
        write_trace_csv(&trace, &[], &mut buf).unwrap();
        let back = samples_from(&parse_csv(std::str::from_utf8(&buf).unwrap()).unwrap()).unwrap();
        prop_assert_eq!(back.len(), trace.samples.len());
        for (a, b) in back.iter().zip(&trace.samples) {
            for (p, q) in [(a.t, b.t), (a.v_applied, b.v_applied), (a.v_device, b.v_device), (a.i, b.i), (a.x, b.x), (a.damage, b.damage)] {
                prop_assert!((p - q).abs() <= 5e-10 * q.abs(), "{p} vs {q}");
            }
        }
    }

    #[test]
    fn config_round_trips(
        seed in prop::option::of(any::<u64>()),
        dt_max in prop::option::of(1e-9..1e-3f64),
        i_cc in prop::option::of(1e-5..1e-2f64),
        a1 in 5e-5..8e-4f64,
        json in any::<bool>(),
    ) {
        let config = RunConfig {
            device: DeviceParams { a1, ..DeviceParams::default() },
            sim: SimOverrides { seed, dt_max, i_cc, ..SimOverrides::default() },
            format: if json { Format::Json } else { Format::Csv },
            ..RunConfig::default()
        };
        let text = serde_json::to_string(&config).unwrap();
        prop_assert_eq!(parse_config(&text).unwrap(), config);
    }

    #[test]
    fn parallel_map_preserves_order(items in prop::collection::vec(any::<i32>(), 0..200)) {
        let seq: Vec<i64> = items.iter().map(|&v| i64::from(v) * 3 - 1).collect();
        prop_assert_eq!(par::map(&items, |&v| i64::from(v) * 3 - 1), seq);
    }
}
