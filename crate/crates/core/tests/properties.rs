use aiive_core::layout::{
    attractive_force, repulsive_force, weight_from_drag, LayoutGraph, NodeKind,
};
use aiive_core::nn::{cross_entropy, one_hot, softmax_rows, HiddenLayer, Mlp};
use aiive_core::protocol::{decode, encode, ClientMessage, Envelope};
use aiive_core::sonify::{FrequencyMapping, SonificationMode};
use ndarray::Array2;
use proptest::prelude::*;

fn finite() -> impl Strategy<Value = f64> {
    prop::num::f64::NORMAL | prop::num::f64::ZERO | prop::num::f64::SUBNORMAL
}

fn position() -> impl Strategy<Value = [f64; 3]> {
    [finite(), finite(), finite()]
}

fn client_message() -> impl Strategy<Value = ClientMessage> {
    let layer = prop_oneof![Just(HiddenLayer::First), Just(HiddenLayer::Second)];
    let mode = prop_oneof![
        Just(SonificationMode::AccuracyBoth),
        Just(SonificationMode::Split),
        Just(SonificationMode::LossBoth),
    ];
    prop_oneof![
        Just(ClientMessage::HelloAck),
        Just(ClientMessage::Pause),
        Just(ClientMessage::Resume),
        Just(ClientMessage::EvaluateNow),
        (finite(), finite()).prop_map(|(learning_rate, momentum)| ClientMessage::SetHyperparams {
            learning_rate,
            momentum
        }),
        (layer.clone(), position()).prop_map(|(layer, position)| ClientMessage::AddNeuron {
            layer,
            position
        }),
        (layer, any::<u32>(), position()).prop_map(|(layer, node_id, position)| {
            ClientMessage::RemoveNeuron {
                layer,
                node_id,
                position,
            }
        }),
        (any::<u32>(), position())
            .prop_map(|(node_id, position)| ClientMessage::DragNode { node_id, position }),
        any::<u32>().prop_map(|node_id| ClientMessage::ReleaseNode { node_id }),
        mode.prop_map(|mode| ClientMessage::SetSonification { mode }),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn client_messages_roundtrip(msg in client_message(), seq in proptest::option::of(any::<u64>())) {
        let env = Envelope::new(seq, msg);
        let back = decode::<ClientMessage>(&encode(&env).unwrap()).unwrap();
        prop_assert_eq!(back, env);
    }

    #[test]
    fn softmax_rows_are_distributions(
        logits in prop::collection::vec(-50.0f64..50.0, 1..40),
        classes in 1usize..8,
    ) {
        let rows = logits.len() / classes;
        prop_assume!(rows > 0);
        let z = Array2::from_shape_vec((rows, classes), logits[..rows * classes].to_vec()).unwrap();
        let y = softmax_rows(z.view());
        for row in y.rows() {
            prop_assert!((row.sum() - 1.0).abs() < 1e-12);
            prop_assert!(row.iter().all(|&p| (0.0..=1.0).contains(&p)));
        }
        let labels: Vec<usize> = (0..rows).map(|r| r % classes).collect();
        let loss = cross_entropy(y.view(), one_hot(&labels, classes).view());
        prop_assert!(loss.is_finite() && loss >= 0.0);
    }

    #[test]
    fn pair_forces_cancel(a in [-1e3f64..1e3, -1e3f64..1e3, -1e3f64..1e3], b in [-1e3f64..1e3, -1e3f64..1e3, -1e3f64..1e3], w in -1.0f64..1.0) {
        let f = attractive_force(a, b, w, 1.3, 1e-3);
        let g = attractive_force(b, a, w, 1.3, 1e-3);
        let r = repulsive_force(a, b, 0.7, 1e-3);
        let s = repulsive_force(b, a, 0.7, 1e-3);
        for k in 0..3 {
            prop_assert_eq!(f[k], -g[k]);
            if a != b {
                prop_assert_eq!(r[k], -s[k]);
            }
        }
    }

    #[test]
    fn drag_scales_with_inverse_square(w in -5.0f64..5.0, d in 0.01f64..100.0, k in 0.1f64..10.0) {
        let scaled = weight_from_drag(w, d, d / k, 1e-6);
        prop_assert!((scaled - w * k * k).abs() <= 1e-9 * (1.0 + (w * k * k).abs()));
    }

    #[test]
    fn normalisation_is_scale_invariant(seed in 0u64..1000, scale in 0.01f64..100.0) {
        let net = Mlp::init([6, 4, 3, 2], seed).unwrap();
        let mut graph = LayoutGraph::build(&net, seed);
        graph.sync_weights(&net);
        let before: Vec<f64> = graph.edges().iter().map(|e| e.norm_weight).collect();
        let raw: Vec<f64> = graph.edges().iter().map(|e| e.raw_weight * scale).collect();
        graph.set_raw_weights(&raw).unwrap();
        for (a, e) in before.iter().zip(graph.edges()) {
            prop_assert!((a - e.norm_weight).abs() <= 1e-12);
            prop_assert!(e.norm_weight.abs() <= 1.0);
        }
    }

    #[test]
    fn frequencies_stay_in_band(v in finite()) {
        for m in [
            FrequencyMapping::accuracy(),
            FrequencyMapping::loss(7),
            FrequencyMapping::learning_rate(),
            FrequencyMapping::momentum(),
        ] {
            let f = m.map_to_freq(v).unwrap();
            prop_assert!((m.f_min..=m.f_max).contains(&f));
        }
    }

    #[test]
    fn structural_edits_keep_layout_mirrored(
        seed in 0u64..500,
        grow in 1usize..4,
        remove in 0usize..3,
    ) {
        let mut net = Mlp::init([5, 3, 2, 3], seed).unwrap();
        net.resize_hidden_layer(HiddenLayer::First, 3 + grow, seed + 1).unwrap();
        net.remove_hidden_unit(HiddenLayer::Second, remove % 2).unwrap();
        prop_assert!(net.params().is_consistent());
        let graph = LayoutGraph::build(&net, seed);
        let count = |kind| graph.nodes().iter().filter(|n| n.kind == kind).count();
        prop_assert_eq!(count(NodeKind::Hidden1), 3 + grow);
        prop_assert_eq!(count(NodeKind::Hidden2), 1);
        prop_assert_eq!(graph.edges().len(), (3 + grow) + (3 + grow) + 1);
    }
}
