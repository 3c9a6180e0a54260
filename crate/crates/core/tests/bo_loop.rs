use std::path::PathBuf;
use std::sync::Mutex;

use bodegen::backends::{simulator_suite, PromptInput};
use bodegen::bo_loop::{Phase, SearchBoxPolicy};
use bodegen::{
    best_prompt, initialize, load_task, prompt_baseline, random_search, run, BackendError, Embedding,
    Evaluator, ExecutionLimits, Generator, RunConfig, RunMode, SearchBox, Simulator, StopReason,
    TaskFile, COT_SUFFIX, REPHRASE_INSTRUCTION,
};

fn square_task() -> TaskFile {
    load_task(PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../tasks/square.json")).unwrap()
}

fn small(seed: u64) -> RunConfig {
    RunConfig {
        m: 2,
        d: 24,
        k: 3,
        n_init: 4,
        t_max: 4,
        n_candidates: 300,
        n_code_samples: 3,
        seed,
        restarts: 2,
        ..RunConfig::default()
    }
}

fn evaluator() -> Evaluator {
    Evaluator::new(ExecutionLimits::default()).unwrap()
}

/// Backend whose programs pass a fixed number of the 20 square cases.
struct Fixed {
    correct: usize,
    d: usize,
    prompts: Mutex<Vec<String>>,
}

impl Fixed {
    fn new(correct: usize, d: usize) -> Self {
        Self {
            correct,
            d,
            prompts: Mutex::new(Vec::new()),
        }
    }
}

impl Generator for Fixed {
    fn name(&self) -> &str {
        "fixed"
    }
    fn dim(&self) -> usize {
        self.d
    }
    fn embed(&self, text: &str) -> Result<Vec<Embedding>, BackendError> {
        Ok(text.split_whitespace().map(|_| Embedding::zeros(self.d)).collect())
    }
    fn generate_prompt(&self, input: PromptInput<'_>) -> Result<String, BackendError> {
        Ok(format!("prompt of {} vectors", input.combined.len()))
    }
    fn generate_code(&self, prompt: &str, n: usize) -> Result<Vec<String>, BackendError> {
        self.prompts.lock().unwrap().push(prompt.to_string());
        let c = self.correct;
        Ok(vec![format!("def square(i):\n    return i * i if i <= {c} else -1\n"); n])
    }
    fn search_box(&self) -> Result<SearchBox, BackendError> {
        Ok(SearchBox::symmetric(self.d, 1.0)?)
    }
}

#[test]
fn constant_objective_fills_the_dataset() {
    let backend = Fixed::new(8, 24);
    let (dataset, log) = initialize(&small(0), &square_task(), &backend, &evaluator()).unwrap();
    assert_eq!(dataset.len(), 4);
    assert!(dataset.outputs().iter().all(|&y| y == 0.4));
    assert_eq!(log.trials.len(), 4);
    assert!(log.trials.iter().all(|t| t.phase == Phase::Init && t.objective == 0.4 && t.pass_at_1 == 0.0));
    assert_eq!(log.trials.iter().map(|t| t.iteration).collect::<Vec<_>>(), [-4, -3, -2, -1]);

    let full = run(&small(0), &square_task(), &backend, &evaluator()).unwrap();
    assert_eq!(full.trials.len(), 8);
    assert_eq!(full.stop_reason, StopReason::BudgetExhausted);
    assert_eq!(full.best_index, Some(0));
}

#[test]
fn perfect_accuracy_stops_immediately() {
    let backend = Fixed::new(20, 24);
    let log = run(&small(1), &square_task(), &backend, &evaluator()).unwrap();
    assert_eq!(log.trials.len(), 1);
    assert_eq!(log.stop_reason, StopReason::PerfectAccuracy);
    assert_eq!(log.trials[0].objective, 1.0);
    assert_eq!(log.trials[0].pass_at_1, 1.0);
}

#[test]
fn decoded_sequence_is_instruction_candidate_prompt() {
    let backend = Fixed::new(3, 24);
    let task = square_task();
    let log = run(&small(2), &task, &backend, &evaluator()).unwrap();
    let expected = REPHRASE_INSTRUCTION.split_whitespace().count() + 2 + task.initial_prompt.split_whitespace().count();
    assert!(log.trials.iter().all(|t| t.prompt_text == format!("prompt of {expected} vectors")));
}

#[test]
fn simulator_runs_are_reproducible_and_replayable() {
    let task = square_task();
    let config = small(3);
    let a = run(&config, &task, &Simulator::seeded(3, 2, 24).unwrap(), &evaluator()).unwrap();
    let b = run(&config, &task, &Simulator::seeded(3, 2, 24).unwrap(), &evaluator()).unwrap();
    assert_eq!(a.trials.len(), 8);
    for (x, y) in a.trials.iter().zip(&b.trials) {
        let mut y = y.clone();
        y.wall_time = x.wall_time;
        assert_eq!(*x, y);
    }
    assert_eq!(a.header, b.header);

    let projector = a.projector();
    let mut dataset_size = 4;
    for t in &a.trials {
        let block = a.candidate_block(t).unwrap();
        assert_eq!(projector.project_block(&block).unwrap(), *t.search_point.as_ref().unwrap());
        assert!((t.objective - t.per_sample_accuracy.iter().sum::<f64>() / 3.0).abs() < 1e-15);
        if let Some(s) = &t.surrogate {
            assert_eq!(s.dataset_size, dataset_size);
            dataset_size += 1;
            assert!(s.expected_improvement >= 0.0);
        }
    }
    assert_eq!(dataset_size, 8);
    let curve = a.incumbent_curve();
    assert!(curve.windows(2).all(|w| w[0].1 <= w[1].1));
    assert_eq!(curve.last().unwrap().1, best_prompt(&a).unwrap().1);
}

#[test]
fn random_search_shares_initial_points() {
    let task = square_task();
    let sim = Simulator::seeded(4, 2, 24).unwrap();
    let bo = run(&small(4), &task, &sim, &evaluator()).unwrap();
    let rs = random_search(&small(4), &task, &sim, &evaluator()).unwrap();
    assert_eq!(rs.trials.len(), 8);
    assert_eq!(rs.header.mode, RunMode::Random);
    for (x, y) in bo.trials.iter().zip(&rs.trials).take(4) {
        assert_eq!(x.candidate, y.candidate);
        assert_eq!(x.objective, y.objective);
    }
    assert!(rs.trials[4..].iter().all(|t| t.phase == Phase::Random && t.candidate.unwrap().index == 0));
}

#[test]
fn prompt_baselines() {
    let task = square_task();
    let backend = Fixed::new(5, 24);
    let initial = prompt_baseline(RunMode::Initial, &small(0), &task, &backend, &evaluator()).unwrap();
    let cot = prompt_baseline(RunMode::Cot, &small(0), &task, &backend, &evaluator()).unwrap();
    assert_eq!(initial.trials[0].prompt_text, task.initial_prompt);
    assert_eq!(cot.trials[0].prompt_text, format!("{}{}", task.initial_prompt, COT_SUFFIX));
    assert_eq!(backend.prompts.lock().unwrap()[1], format!("{} Let's think step by step", task.initial_prompt));
    assert_eq!(initial.trials[0].objective, 0.25);
    assert!(prompt_baseline(RunMode::Bo, &small(0), &task, &backend, &evaluator()).is_err());

    let sim = Simulator::seeded(0, 2, 24).unwrap();
    let a = prompt_baseline(RunMode::Initial, &small(0), &task, &sim, &evaluator()).unwrap();
    let b = prompt_baseline(RunMode::Cot, &small(0), &task, &sim, &evaluator()).unwrap();
    assert_eq!(a.trials[0].objective, b.trials[0].objective);
}

/// Fails code generation with a bridge-reported error on every call.
struct Refusing(Fixed);

impl Generator for Refusing {
    fn name(&self) -> &str {
        "refusing"
    }
    fn dim(&self) -> usize {
        self.0.dim()
    }
    fn embed(&self, text: &str) -> Result<Vec<Embedding>, BackendError> {
        self.0.embed(text)
    }
    fn generate_prompt(&self, input: PromptInput<'_>) -> Result<String, BackendError> {
        self.0.generate_prompt(input)
    }
    fn generate_code(&self, _: &str, _: usize) -> Result<Vec<String>, BackendError> {
        Err(BackendError::Reported {
            status: 503,
            code: "busy".into(),
            message: "try later".into(),
        })
    }
    fn search_box(&self) -> Result<SearchBox, BackendError> {
        self.0.search_box()
    }
}

/// Loses the connection after a few prompts.
struct Flaky(Fixed, Mutex<usize>);

impl Generator for Flaky {
    fn name(&self) -> &str {
        "flaky"
    }
    fn dim(&self) -> usize {
        self.0.dim()
    }
    fn embed(&self, text: &str) -> Result<Vec<Embedding>, BackendError> {
        self.0.embed(text)
    }
    fn generate_prompt(&self, input: PromptInput<'_>) -> Result<String, BackendError> {
        let mut calls = self.1.lock().unwrap();
        *calls += 1;
        if *calls > 5 {
            return Err(BackendError::Transport {
                attempts: 4,
                message: "connection refused".into(),
            });
        }
        self.0.generate_prompt(input)
    }
    fn generate_code(&self, prompt: &str, n: usize) -> Result<Vec<String>, BackendError> {
        self.0.generate_code(prompt, n)
    }
    fn search_box(&self) -> Result<SearchBox, BackendError> {
        self.0.search_box()
    }
}

#[test]
fn backend_errors_score_zero_but_transport_failures_stop() {
    let task = square_task();
    let log = run(&small(5), &task, &Refusing(Fixed::new(5, 24)), &evaluator()).unwrap();
    assert_eq!(log.trials.len(), 8);
    assert!(log.trials.iter().all(|t| t.objective == 0.0 && t.error.as_ref().unwrap().code == "busy"));
    assert_eq!(log.stop_reason, StopReason::BudgetExhausted);

    let log = run(&small(5), &task, &Flaky(Fixed::new(5, 24), Mutex::new(0)), &evaluator()).unwrap();
    assert_eq!(log.trials.len(), 5);
    assert_eq!(log.stop_reason, StopReason::Error);
    assert!(log.error.unwrap().contains("connection refused"));
}

#[test]
fn setup_is_validated() {
    let task = square_task();
    let sim = Simulator::seeded(0, 2, 24).unwrap();
    let bad = RunConfig { t_max: 0, ..small(0) };
    assert!(run(&bad, &task, &sim, &evaluator()).is_err());
    let wrong_d = RunConfig { d: 25, ..small(0) };
    assert!(run(&wrong_d, &task, &sim, &evaluator()).is_err());
    let boxed = RunConfig {
        search_box: SearchBoxPolicy::Symmetric { half_width: 0.5 },
        ..small(0)
    };
    let log = run(&boxed, &task, &sim, &evaluator()).unwrap();
    assert_eq!(log.header.search_box.unwrap().upper()[0], 0.5);
}

#[test]
fn simulator_suite_matches_bundled_task() {
    assert_eq!(square_task().tests, simulator_suite(20));
}
