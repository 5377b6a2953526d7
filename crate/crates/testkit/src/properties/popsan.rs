use ndarray::{array, Array2};
use popsan::params::TensorVisitor;
use popsan::popsan::{
    backward, decoder_reach, encode, forward, init_popsan, receptive_field, EncoderParams,
    PopSanArch, PopSanParams,
};
use popsan::Parameters;
use proptest::prelude::*;

fn arch() -> impl Strategy<Value = (PopSanArch, u64)> {
    (
        1..4usize,
        1..3usize,
        2..6usize,
        prop::collection::vec(1..6usize, 0..3),
        1..6usize,
        any::<u64>(),
    )
        .prop_map(
            |(obs_dim, act_dim, pop_size, hidden_sizes, timesteps, seed)| {
                let mut a = PopSanArch::new(obs_dim, act_dim);
                a.pop_size = pop_size;
                a.hidden_sizes = hidden_sizes;
                a.timesteps = timesteps;
                (a, seed)
            },
        )
}

fn network() -> impl Strategy<Value = (PopSanParams, Array2<f64>)> {
    (
        arch(),
        prop::collection::vec(-1.5..1.5f64, 12),
        -1.0..1.0f64,
    )
        .prop_map(|((a, seed), obs, bias)| {
            let mut p = init_popsan(&a, &vec![(-1.0, 1.0); a.obs_dim], seed).unwrap();
            p.decoder.biases.fill(bias);
            for l in &mut p.layers {
                l.weights.mapv_inplace(|w| 4.0 * w);
            }
            let rows = 12 / a.obs_dim;
            let obs = Array2::from_shape_fn((rows, a.obs_dim), |(r, c)| obs[r * a.obs_dim + c]);
            (p, obs)
        })
}

pub fn actions_stay_within_decoder_reach() {
    proptest!(|((p, obs) in network())| {
        let trace = forward(&p, obs.view()).unwrap();
        for row in trace.actions.rows() {
            for (i, &a) in row.iter().enumerate() {
                let r = decoder_reach(&p.decoder, i);
                let b = p.decoder.biases[i];
                prop_assert!(a >= b - r - 1e-12 && a <= b + r + 1e-12);
            }
        }
    });
}

pub fn rates_are_counts_over_steps() {
    proptest!(|((p, obs) in network())| {
        let trace = forward(&p, obs.view()).unwrap();
        let t = p.timesteps as f64;
        for (&sc, &fr) in trace.spike_counts.iter().zip(&trace.firing_rates) {
            prop_assert!(sc.fract() == 0.0 && (0.0..=t).contains(&sc));
            prop_assert_eq!(fr, sc / t);
        }
    });
}

pub fn initial_encoder_covers_the_range() {
    proptest!(|(lo in -5.0..5.0f64, width in 0.1..10.0f64, pop in 2..12usize, u in 0.0..=1.0f64)| {
        let mut a = PopSanArch::new(1, 1);
        a.pop_size = pop;
        let p = init_popsan(&a, &[(lo, lo + width)], 0).unwrap();
        let s = lo + u * width;
        let best = (0..pop)
            .map(|j| receptive_field(s, p.encoder.means[[0, j]], p.encoder.deviations[[0, j]]))
            .fold(0.0, f64::max);
        prop_assert!(best >= (-1.0f64 / 8.0).exp() - 1e-12, "best activation {best}");
    });
}

pub fn spike_count_is_monotone_in_activation() {
    proptest!(|(s1 in -3.0..3.0f64, s2 in -3.0..3.0f64, t in 1..20usize)| {
        let enc = EncoderParams {
            means: array![[0.0]],
            deviations: array![[1.0]],
            obs_low: array![-3.0],
            obs_high: array![3.0],
        };
        let count = |s: f64| {
            let out = encode(&enc, array![[s]].view(), t).unwrap();
            (out.activation[[0, 0]], out.spikes.iter().map(|x| x[[0, 0]]).sum::<f64>())
        };
        let (a1, c1) = count(s1);
        let (a2, c2) = count(s2);
        if a2 >= a1 {
            prop_assert!(c2 >= c1);
        } else {
            prop_assert!(c1 >= c2);
        }
    });
}

pub fn gradient_covers_every_trainable_tensor() {
    proptest!(|((p, obs) in network())| {
        let trace = forward(&p, obs.view()).unwrap();
        let g = backward(&p, &trace, Array2::ones(trace.actions.dim()).view()).unwrap();
        let shapes = |x: &dyn Fn(&mut TensorVisitor)| {
            let mut out = Vec::new();
            x(&mut |n, d, v| out.push((n.to_string(), d.to_vec(), v.iter().all(|x| x.is_finite()))));
            out
        };
        let ps = shapes(&|f| p.visit(f));
        let gs = shapes(&|f| g.visit(f));
        prop_assert_eq!(ps.len(), 2 + 2 * p.layers.len() + 2);
        prop_assert_eq!(&ps, &gs);
    });
}
