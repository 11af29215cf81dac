use phaseq_core::experiments::{
    avoided_crossing_oracle, default_ramsey_grid, run_gate_map, run_ramsey_filter, run_spectroscopy, run_tsep_sweep, GateMapConfig, Lab,
    PowerMode, Serial, SpectroscopyConfig,
};
use phaseq_core::pulses::PulseSpec;
use phaseq_core::system::TlsParams;
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn coherent_ramsey_beat_tracks_the_anharmonicity(eta in 100.0f64..400.0) {
        let mut lab = Lab::default();
        lab.system.anharmonicity_mhz = eta;
        lab.decoherence = false;
        let grid = default_ramsey_grid(&PulseSpec::gaussian(5.0)).unwrap();
        let o = run_ramsey_filter(&lab, &grid, 5.0, &Serial).unwrap();
        let f = o.fit.frequency * 1e3;
        prop_assert!((f / eta - 1.0).abs() < 1e-4, "beat {} MHz for eta {} MHz", f, eta);
    }

    // Above this range a 5 ns pulse leaks too little for the fringe to
    // stand out of the relaxation drift.
    #[test]
    fn ramsey_beat_tracks_the_anharmonicity(eta in 100.0f64..250.0) {
        let mut lab = Lab::default();
        lab.system.anharmonicity_mhz = eta;
        let grid = default_ramsey_grid(&PulseSpec::gaussian(5.0)).unwrap();
        let o = run_ramsey_filter(&lab, &grid, 5.0, &Serial).unwrap();
        let f = o.fit.frequency * 1e3;
        prop_assert!((f / eta - 1.0).abs() < 0.01, "beat {} MHz for eta {} MHz", f, eta);
    }
}

fn lin(lo: f64, hi: f64, step: f64) -> Vec<f64> {
    let n = ((hi - lo) / step).round() as usize;
    (0..=n).map(|k| lo + step * k as f64).collect()
}

#[test]
fn protocols_are_deterministic() {
    let lab = Lab::default();
    let a = run_tsep_sweep(&lab, &[0.0, 12.0, 25.0], &Serial).unwrap();
    let b = run_tsep_sweep(&lab, &[0.0, 12.0, 25.0], &Serial).unwrap();
    assert_eq!(a, b);
    let cfg = GateMapConfig { detunings_mhz: vec![-5.0, 5.0], thetas: vec![0.0, 2.0], ..GateMapConfig::default() };
    assert_eq!(run_gate_map(&lab, &cfg, &Serial).unwrap(), run_gate_map(&lab, &cfg, &Serial).unwrap());
    for c in &a.columns {
        if c.probability {
            assert!(c.values.iter().all(|v| (0.0..=1.0).contains(v)), "{}", c.name);
        }
    }
}

#[test]
fn low_power_spectroscopy_has_a_single_peak_at_f10() {
    let lab = Lab::default();
    let step = 0.002;
    let cfg = SpectroscopyConfig::new(lin(6.70, 6.80, step), PowerMode::Low);
    let r = run_spectroscopy(&lab, &cfg, &Serial).unwrap();
    assert_eq!(r.fit("peak_count"), Some(1.0), "{}", r.summary);
    assert!((r.fit("peak1_ghz").unwrap() - 6.75).abs() <= step);
}

#[test]
fn two_photon_peak_sits_half_an_anharmonicity_below_f10() {
    let mut lab = Lab::default();
    lab.system.f10_ghz = 6.25;
    let step = 0.005;
    let cfg = SpectroscopyConfig::new(lin(6.10, 6.30, step), PowerMode::High);
    let r = run_spectroscopy(&lab, &cfg, &Serial).unwrap();
    let n = r.fit("peak_count").unwrap() as usize;
    let peaks: Vec<f64> = (1..=n).map(|k| r.fit(&format!("peak{k}_ghz")).unwrap()).collect();
    let f10 = peaks.iter().copied().find(|p| (p - 6.25).abs() <= step).expect("no f10 peak");
    let two = peaks.iter().copied().find(|p| (p - 6.15).abs() <= step).expect("no two-photon peak");
    assert!(((f10 - two) - 0.1).abs() <= step, "{peaks:?}");
}

#[test]
fn far_detuned_defect_leaves_a_single_qubit_peak() {
    let mut lab = Lab { tls: TlsParams::enabled(), ..Lab::default() };
    lab.system.f10_ghz = 6.85;
    let step = 0.002;
    let cfg = SpectroscopyConfig::new(lin(6.80, 6.90, step), PowerMode::Low);
    let r = run_spectroscopy(&lab, &cfg, &Serial).unwrap();
    assert_eq!(r.fit("peak_count"), Some(1.0), "{}", r.summary);
    let (shifted, _) = avoided_crossing_oracle(6.85, &lab.tls);
    assert!((r.fit("peak1_ghz").unwrap() - shifted).abs() <= step);
    // Dispersive admixture of the defect into the excited qubit state.
    let mix = (lab.tls.coupling_mhz / ((lab.tls.f_tls_ghz - 6.85) * 1e3)).powi(2);
    assert!(r.values("pop_tls").unwrap().iter().all(|&p| p <= 1.5 * mix), "{mix}");
}
