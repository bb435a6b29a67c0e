use proptest::prelude::*;
use sigma_cli::checkpoint::Checkpoint;
use sigma_core::mcmc::{AcceptanceStats, ChainSnapshot};
use sigma_core::rng::RngState;
use sigma_core::spectral::CountertermKind;

fn checkpoint() -> impl Strategy<Value = Checkpoint> {
    (
        (1u64..5, 1u64..4, any::<bool>(), "[0-9a-f]{0,64}"),
        prop::array::uniform8(any::<f64>()),
        prop::array::uniform5(any::<u64>()),
        (
            prop::array::uniform32(any::<u8>()),
            any::<u64>(),
            any::<u128>(),
            any::<usize>(),
        ),
        prop::collection::vec(any::<f64>(), 0..20),
        any::<u64>(),
    )
        .prop_flat_map(|(shape, floats, counts, rng, thermal, sweep)| {
            let len = (shape.0 * shape.0 * shape.1) as usize;
            (
                Just((shape, floats, counts, rng, thermal, sweep)),
                prop::collection::vec(any::<f64>(), len),
            )
        })
        .prop_map(
            |(
                (
                    (n, comps, cutoff, hash),
                    f,
                    c,
                    (seed, stream, word_pos, steps),
                    thermal_actions,
                    sweep,
                ),
                values,
            )| Checkpoint {
                config_hash: hash,
                side_length: f[0],
                grid_points: n,
                components: comps,
                counterterm: if cutoff {
                    CountertermKind::CutoffEta
                } else {
                    CountertermKind::LatticeTadpole
                },
                counterterm_ref: f[1],
                counterterm_mass: f[2],
                mass: f[3],
                lambda: f[4],
                beta: f[5],
                chain: ChainSnapshot {
                    values,
                    step_size: f[6],
                    trajectory_steps: steps,
                    jitter: f[7],
                    stats: AcceptanceStats {
                        proposed: c[0],
                        accepted: c[1],
                        window_proposed: c[2],
                        window_accepted: c[3],
                        nonfinite: c[4],
                    },
                    rng: RngState {
                        seed,
                        stream,
                        word_pos,
                    },
                    sweep,
                    thermal_actions,
                },
            },
        )
}

proptest! {
    #[test]
    fn encode_decode_encode_is_byte_identical(c in checkpoint()) {
        let bytes = c.encode();
        let back = Checkpoint::decode(&bytes).unwrap();
        prop_assert_eq!(back.encode(), bytes);
        prop_assert_eq!(back.chain.rng, c.chain.rng);
        prop_assert_eq!(back.chain.sweep, c.chain.sweep);
    }

    #[test]
    fn every_strict_prefix_is_rejected(c in checkpoint(), cut in any::<prop::sample::Index>()) {
        let bytes = c.encode();
        let k = cut.index(bytes.len());
        prop_assert!(Checkpoint::decode(&bytes[..k]).is_err());
    }

    #[test]
    fn arbitrary_bytes_never_panic(bytes in prop::collection::vec(any::<u8>(), 0..400)) {
        let _ = Checkpoint::decode(&bytes);
    }
}
