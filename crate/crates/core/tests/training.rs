use vtapred::eval::{fit_scalers, to_example, CvSetup};
use vtapred::nn::{forward_batch, DecadeVocab, Example, Mode, NetworkParams, TaskWeights};
use vtapred::optim::{train, TrainConfig};
use vtapred::rng::{derive, stream};
use vtapred::synthetic::gaussian_task;

fn examples(n: usize, seed: u64) -> Vec<Example> {
    let samples = gaussian_task(n, 7, seed);
    let idx: Vec<usize> = (0..n).collect();
    let scalers = fit_scalers(&samples, &idx).unwrap();
    samples
        .iter()
        .map(|s| to_example(s, &scalers, &DecadeVocab::default()))
        .collect::<Result<_, _>>()
        .unwrap()
}

fn setup() -> CvSetup {
    CvSetup {
        hidden: [16, 12, 6],
        ..Default::default()
    }
}

#[test]
fn unseen_decade_rows_never_move() {
    let exs = examples(40, 1);
    let vocab = DecadeVocab::default();
    let used: Vec<usize> = exs.iter().map(|e| e.decade_index).collect();
    let params = NetworkParams::init(setup().shape(7), &mut derive(0, &[stream::INIT]));
    let config = TrainConfig {
        epochs: 60,
        ..Default::default()
    };
    let trained = train(&exs, &config, params.clone(), &mut derive(0, &[stream::DROPOUT])).unwrap().params;
    let before = params.embedding.as_ref().unwrap();
    let after = trained.embedding.as_ref().unwrap();
    let mut moved = 0;
    for row in 0..vocab.rows() {
        if used.contains(&row) {
            moved += usize::from(before.row(row) != after.row(row));
        } else {
            assert_eq!(before.row(row), after.row(row), "row {row} changed without examples");
        }
    }
    assert!(moved > 0);
}

#[test]
fn loss_falls_and_training_fits() {
    let exs = examples(60, 2);
    let params = NetworkParams::init(setup().shape(7), &mut derive(3, &[stream::INIT]));
    let config = TrainConfig {
        epochs: 300,
        ..Default::default()
    };
    let out = train(&exs, &config, params, &mut derive(3, &[stream::DROPOUT])).unwrap();
    let first = out.history.first().unwrap().total;
    let last = out.history.last().unwrap().total;
    assert!(last < 0.5 * first, "loss {first} -> {last}");
    let probs = forward_batch(&out.params, &exs, Mode::Infer, [true, false, false]).unwrap().vta_positive();
    let correct = probs.iter().zip(&exs).filter(|(p, e)| (**p >= 0.5) == (e.y_vta == 1)).count();
    assert!(correct >= 57, "{correct}/60");
}

#[test]
fn identical_inputs_give_identical_histories() {
    let exs = examples(30, 4);
    let run = || {
        let params = NetworkParams::init(setup().shape(7), &mut derive(8, &[stream::INIT]));
        let config = TrainConfig {
            epochs: 40,
            weights: TaskWeights::MULTI_TASK,
            ..Default::default()
        };
        train(&exs, &config, params, &mut derive(8, &[stream::DROPOUT])).unwrap()
    };
    let (a, b) = (run(), run());
    assert_eq!(a.history, b.history);
    assert_eq!(a.params, b.params);
}

#[test]
fn auxiliary_targets_change_the_shared_layer_only_when_weighted() {
    let exs = examples(30, 5);
    let params = NetworkParams::init(setup().shape(7), &mut derive(1, &[stream::INIT]));
    let fit = |weights| {
        let config = TrainConfig {
            epochs: 20,
            weights,
            ..Default::default()
        };
        train(&exs, &config, params.clone(), &mut derive(1, &[stream::DROPOUT])).unwrap().params
    };
    let single = fit(TaskWeights::SINGLE_TASK);
    let multi = fit(TaskWeights::MULTI_TASK);
    assert_ne!(single.shared, multi.shared);
    // Auxiliary branches are untouched when their weight is zero.
    assert_eq!(single.branches[1], params.branches[1]);
    assert_eq!(single.branches[2], params.branches[2]);
}
