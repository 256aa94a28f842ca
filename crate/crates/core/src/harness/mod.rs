//! Scenario files, batch runs, golden-trace comparison, the operator REPL
//! and benchmark scoring.

mod bench;
mod milestone;
mod repl;
mod scenario;

pub use bench::{
    overall, positive_average, score_benchmark, Annotation, BenchError, BenchResult, ExactJudge, GoldTask, Judge,
    PredictedTask, Prediction, RemoteJudge, SCORED_CATEGORIES,
};
pub use milestone::{compare_golden, MatchOp, Matcher, Milestone, Verdict};
pub use repl::{dump, replay, Repl, ReplOutput, USAGE};
pub use scenario::{
    run_scenario, run_to_end, MetricsReport, RawCommand, RunOutcome, ScenarioDoc, ScenarioError, ScheduleEntry,
    TimelineEntry,
};
