use ndarray::Array2;
use popsan::energy::{count_snn_ops, savings, total_energy, LayerFlopProfile, OpCosts};
use popsan::popsan::{forward, init_popsan, PopSanArch};
use proptest::prelude::*;

fn profiles() -> impl Strategy<Value = Vec<LayerFlopProfile>> {
    prop::collection::vec((0..1_000_000u32, 0..1_000_000u32), 1..8).prop_map(|v| {
        v.into_iter()
            .enumerate()
            .map(|(k, (m, a))| LayerFlopProfile {
                name: format!("l{k}"),
                mac_count: m as f64,
                ac_count: a as f64,
            })
            .collect()
    })
}

pub fn doubling_counts_doubles_energy() {
    proptest!(|(p in profiles(), e_mac in 0.1..10.0f64, e_ac in 0.1..10.0f64)| {
        let costs = OpCosts::new(e_mac, e_ac).unwrap();
        let doubled: Vec<LayerFlopProfile> = p
            .iter()
            .map(|l| LayerFlopProfile { name: l.name.clone(), mac_count: 2.0 * l.mac_count, ac_count: 2.0 * l.ac_count })
            .collect();
        prop_assert_eq!(total_energy(&doubled, &costs), 2.0 * total_energy(&p, &costs));
    });
}

pub fn more_timesteps_never_reduce_accumulates() {
    proptest!(|(seed in any::<u64>(), t in 1..6usize, extra in 1..4usize, obs in prop::collection::vec(-1.0..1.0f64, 8))| {
        let mut arch = PopSanArch::new(2, 2);
        arch.pop_size = 4;
        arch.hidden_sizes = vec![8, 8];
        arch.timesteps = t;
        let mut short = init_popsan(&arch, &[(-1.0, 1.0); 2], seed).unwrap();
        for l in &mut short.layers {
            l.weights.mapv_inplace(|w| 3.0 * w);
        }
        let mut long = short.clone();
        long.timesteps = t + extra;
        let obs = Array2::from_shape_vec((4, 2), obs).unwrap();
        let a = count_snn_ops(&short, &forward(&short, obs.view()).unwrap()).unwrap();
        let b = count_snn_ops(&long, &forward(&long, obs.view()).unwrap()).unwrap();
        for (x, y) in a.iter().zip(&b) {
            prop_assert!(y.ac_count >= x.ac_count);
            prop_assert_eq!(y.mac_count, x.mac_count);
        }
    });
}

/// Reference energies (x 1e-6 mJ) and savings (%) for T = 1, 3, 5.
pub fn reference_savings_follow_from_reference_energies() {
    let ann = 85.96;
    for (snn, pct) in [(3.35, 96.10), (15.36, 82.13), (35.22, 59.03)] {
        let s = 100.0 * savings(snn, ann).unwrap();
        assert!(
            (s - pct).abs() <= 0.01,
            "{snn}: computed {s:.4}%, reference {pct}%"
        );
    }
}
