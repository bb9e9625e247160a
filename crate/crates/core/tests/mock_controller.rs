use std::path::PathBuf;

use hardneg_core::controller::ScriptedBackend;
use hardneg_core::curriculum::{default_action_space, DecisionSource, PhaseConfig};
use hardneg_core::replay::replay_log;
use hardneg_core::sim::data::{gen_synthetic_dataset, DataConfig};
use hardneg_core::sim::log::TrajectoryRecord;
use hardneg_core::sim::train::{run_training, ControllerMode, TrainingSetup};

#[test]
fn scripted_responses_drive_the_run() {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/mock_controller.txt");
    let mut backend = ScriptedBackend::from_file(&path).unwrap();
    assert_eq!(backend.remaining(), 4);

    let ds = gen_synthetic_dataset(&DataConfig {
        num_docs: 30,
        seed: 4,
        ..Default::default()
    })
    .unwrap();
    let mut setup = TrainingSetup::new(ControllerMode::Mock);
    setup.phases = PhaseConfig {
        exploration_steps: 10,
        exploration_review_every: 2,
        transition_steps: 4,
        lockin_review_every: 4,
    };
    setup.train.steps = 18;
    setup.train.batch_size = 4;
    let out = run_training(&ds, &setup, Some(&mut backend)).unwrap();
    assert_eq!(backend.remaining(), 0);

    let decisions: Vec<_> = out
        .log
        .decisions()
        .map(|r| match r {
            TrajectoryRecord::Decision { from, to, decision, .. } => (from.letter(), to.letter(), decision.source),
            _ => unreachable!(),
        })
        .collect();
    let moves: Vec<(char, char)> = decisions.iter().map(|d| (d.0, d.1)).collect();
    assert_eq!(&moves[..4], &[('A', 'F'), ('F', 'D'), ('D', 'B'), ('B', 'C')]);
    assert!(decisions[..4].iter().all(|d| d.2 == DecisionSource::Llm));
    // Once the script is exhausted every call falls back to the oracle.
    assert!(decisions[4..].iter().all(|d| d.2 == DecisionSource::Oracle));
    assert!(replay_log(&out.log, &default_action_space()).is_clean());
}
