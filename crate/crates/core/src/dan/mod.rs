//! Deep averaging network with word-confidence variants, trained by
//! explicit backpropagation.

mod backward;
mod forward;
pub mod gradcheck;
mod model;
mod optim;
mod params;
pub mod tensor;
mod train;

pub use backward::{backward, Gradients};
pub use forward::{
    encode_confidence_weighted, encode_learned_confidence, encode_nbow, forward, loss,
    mean_confidence, predict_proba, DanInput, ForwardTrace, Mode,
};
pub use gradcheck::{finite_difference_check, GradCheckReport};
pub use model::DanModel;
pub use optim::{Adam, PlateauSchedule};
pub use params::{
    learned_confidence, BatchNorm, ConfRecal, DanParameters, DanShape, DenseLayer, Nonlinearity,
    Variant,
};
pub use tensor::Matrix;
pub use train::{train, EpochRecord, TrainConfig, TrainOutcome, TRAIN_KEYS};

#[cfg(test)]
mod tests {
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::gradcheck::{compare_with_finite_differences, random_instance};
    use super::*;

    fn embeddings() -> Matrix {
        Matrix {
            rows: 3,
            cols: 2,
            data: vec![0.0, 0.0, 1.0, 2.0, 3.0, -4.0],
        }
    }

    #[test]
    fn nbow_examples() {
        let e = embeddings();
        assert_eq!(encode_nbow(&e, &[1]).unwrap(), vec![1.0, 2.0]);
        assert_eq!(encode_nbow(&e, &[1, 2]).unwrap(), vec![2.0, -1.0]);
        assert_eq!(
            encode_nbow(&e, &[2, 1]).unwrap(),
            encode_nbow(&e, &[1, 2]).unwrap()
        );
        assert!(encode_nbow(&e, &[]).is_err());
        assert!(encode_nbow(&e, &[3]).is_err());
    }

    #[test]
    fn confidence_weighted_examples() {
        let e = embeddings();
        let r = encode_nbow(&e, &[1, 2]).unwrap();
        assert_eq!(
            encode_confidence_weighted(&e, &[1, 2], &[1.0, 1.0]).unwrap(),
            r
        );
        assert_eq!(
            encode_confidence_weighted(&e, &[1, 2], &[0.0, 0.0]).unwrap(),
            vec![0.0, 0.0]
        );
        assert_eq!(
            encode_confidence_weighted(&e, &[1, 2], &[1.0, 0.0]).unwrap(),
            vec![0.5, 1.0]
        );
        assert!(encode_confidence_weighted(&e, &[], &[]).is_err());
        assert!(encode_confidence_weighted(&e, &[1], &[0.5, 0.5]).is_err());
    }

    #[test]
    fn learned_confidence_encoder_examples() {
        let e = embeddings();
        let ids = [1, 2, 2];
        let c = [0.3, 0.9, 0.6];
        let identity = ConfRecal::default();
        let r = encode_nbow(&e, &ids).unwrap();
        assert_eq!(
            encode_learned_confidence(&e, &ids, &[1.0; 3], identity).unwrap(),
            r
        );
        assert_eq!(
            encode_learned_confidence(&e, &ids, &c, identity).unwrap(),
            encode_confidence_weighted(&e, &ids, &c).unwrap()
        );
        let doubling = ConfRecal {
            weight: 2.0,
            bias: 0.0,
        };
        let half = encode_learned_confidence(&e, &[1, 2], &[0.5, 0.5], doubling).unwrap();
        assert_eq!(half, encode_nbow(&e, &[1, 2]).unwrap());
        assert!(encode_learned_confidence(&e, &[], &[], identity).is_err());
    }

    #[test]
    fn mean_confidence_of_for_ten_points() {
        let m = mean_confidence(&[0.935, 0.935, 0.871]);
        assert_eq!((m * 1000.0).round() / 1000.0, 0.914);
    }

    #[test]
    fn loss_examples() {
        assert_eq!(loss(&[vec![0.0, 1.0]], &[1]).unwrap(), 0.0);
        let k = 7;
        let uniform = vec![1.0 / k as f64; k];
        assert!((loss(&[uniform], &[3]).unwrap() - (k as f64).ln()).abs() < 1e-12);
        let l = loss(&[vec![0.25, 0.75]], &[0]).unwrap();
        assert!((l - 4f64.ln()).abs() < 1e-15);
        assert!((l - 1.3863).abs() < 1e-4);
        assert!(loss(&[vec![1.0]], &[1]).is_err());
    }

    #[test]
    fn gradients_match_finite_differences_for_every_variant() {
        for variant in Variant::ALL {
            for seed in 0..3 {
                let (params, batch, gold) = random_instance(variant, seed).unwrap();
                let report = finite_difference_check(&params, &batch, &gold, 1e-5).unwrap();
                assert!(report.max_relative_error <= 1e-4, "{variant}: {report:?}");
            }
        }
    }

    #[test]
    fn normalized_weight_mode_has_exact_gradients() {
        let (mut params, batch, gold) = random_instance(Variant::ConfLearned, 4).unwrap();
        params.normalize_weights = true;
        let report = finite_difference_check(&params, &batch, &gold, 1e-5).unwrap();
        assert!(report.max_relative_error <= 1e-4, "{report:?}");
    }

    #[test]
    fn batchnorm_gradients_match_finite_differences() {
        let (params, batch, gold) = random_instance(Variant::ConfSoftmax, 9).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let shape = params.shape();
        let mut with_bn = DanParameters::init(
            &shape,
            Variant::ConfSoftmax,
            Nonlinearity::Tanh,
            true,
            &mut rng,
        )
        .unwrap();
        for bn in with_bn.batchnorm.iter_mut() {
            for (s, b) in bn.scale.iter_mut().zip(bn.shift.iter_mut()) {
                *s = rng.gen_range(0.5..1.5);
                *b = rng.gen_range(-0.2..0.2);
            }
        }
        let (_, trace) = forward(&with_bn, &batch, Mode::deterministic_train()).unwrap();
        let grads = backward(&with_bn, &trace, &gold).unwrap();
        let report =
            compare_with_finite_differences(&with_bn, &batch, &gold, 1e-5, &grads).unwrap();
        assert!(report.max_relative_error <= 1e-4, "{report:?}");
    }

    #[test]
    fn dropout_gradients_use_the_recorded_masks() {
        let (params, batch, gold) = random_instance(Variant::ConfWeighted, 2).unwrap();
        let mode = Mode::Train {
            dropout_rate: 0.3,
            mask_seed: 17,
        };
        let (_, trace) = forward(&params, &batch, mode).unwrap();
        let grads = backward(&params, &trace, &gold).unwrap();
        // Same masks on every evaluation: perturb one weight and compare.
        let eps = 1e-5;
        let mut p = params.clone();
        let idx = 7;
        p.hidden[0].weight.data[idx] += eps;
        let plus = loss(&forward(&p, &batch, mode).unwrap().0, &gold).unwrap();
        p.hidden[0].weight.data[idx] -= 2.0 * eps;
        let minus = loss(&forward(&p, &batch, mode).unwrap().0, &gold).unwrap();
        let numeric = (plus - minus) / (2.0 * eps);
        let analytic = grads.hidden[0].weight.data[idx];
        assert!(gradcheck::relative_error(analytic, numeric) < 1e-5);
    }

    #[test]
    fn perfect_prediction_has_zero_gradients() {
        // One class: softmax is identically 1, so the loss is flat.
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let shape = DanShape {
            vocab_size: 5,
            embedding_dim: 3,
            hidden_dims: vec![4],
            n_classes: 1,
        };
        let params = DanParameters::init(
            &shape,
            Variant::ConfLearned,
            Nonlinearity::Tanh,
            true,
            &mut rng,
        )
        .unwrap();
        let batch = vec![
            DanInput::new(vec![1, 2], vec![0.4, 0.9]),
            DanInput::clean(vec![3]),
        ];
        let (probs, trace) = forward(&params, &batch, Mode::deterministic_train()).unwrap();
        assert!(probs.iter().all(|p| p[0] == 1.0));
        let grads = backward(&params, &trace, &[0, 0]).unwrap();
        assert_eq!(grads.max_abs(), 0.0);
        assert_eq!(grads.loss, 0.0);
    }

    #[test]
    fn plain_variant_leaves_confidence_parameters_untouched() {
        let (params, batch, gold) = random_instance(Variant::Plain, 5).unwrap();
        let (_, trace) = forward(&params, &batch, Mode::deterministic_train()).unwrap();
        let grads = backward(&params, &trace, &gold).unwrap();
        assert_eq!(grads.conf_recal_bias, 0.0);
        assert_eq!(grads.conf_recal_weight, 0.0);
        assert!(grads.conf_output.iter().all(|&g| g == 0.0));
    }

    #[test]
    fn plain_variant_ignores_confidences() {
        let (params, batch, _) = random_instance(Variant::Plain, 6).unwrap();
        let altered: Vec<DanInput> = batch
            .iter()
            .map(|b| DanInput::new(b.token_ids.clone(), vec![0.123; b.token_ids.len()]))
            .collect();
        assert_eq!(
            predict_proba(&params, &batch).unwrap(),
            predict_proba(&params, &altered).unwrap()
        );
    }

    #[test]
    fn stale_and_eval_traces_are_rejected() {
        let (mut params, batch, gold) = random_instance(Variant::Plain, 7).unwrap();
        let (_, eval_trace) = forward(&params, &batch, Mode::Eval).unwrap();
        assert!(matches!(
            backward(&params, &eval_trace, &gold),
            Err(crate::Error::InvalidArgument(_))
        ));
        let (_, trace) = forward(&params, &batch, Mode::deterministic_train()).unwrap();
        params.bump_version();
        assert!(matches!(
            backward(&params, &trace, &gold),
            Err(crate::Error::StaleTrace { .. })
        ));
    }

    #[test]
    fn shape_mismatches_are_errors() {
        let (params, _, _) = random_instance(Variant::ConfWeighted, 8).unwrap();
        assert!(forward(&params, &[DanInput::new(vec![1, 2], vec![0.5])], Mode::Eval).is_err());
        assert!(forward(&params, &[DanInput::clean(vec![50])], Mode::Eval).is_err());
        assert!(forward(&params, &[], Mode::Eval).is_err());
    }
}
