//! Scheduled runs, recorded traces and their JSON form.

use std::fmt;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::*;
use crate::quantum::RhoDigest;

/// JSON schema of [`TraceDocument`].
pub const TRACE_SCHEMA: &str = include_str!("../../schema/trace.schema.json");

#[derive(Debug, Clone, PartialEq)]
pub struct TraceStep {
    pub label: TransitionLabel,
    pub config: Configuration,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TraceEnd {
    Terminated,
    Deadlocked,
    /// The step budget ran out first.
    Budget,
    /// A runtime error stopped the run.
    Error,
}

impl TraceEnd {
    pub fn name(&self) -> &'static str {
        match self {
            TraceEnd::Terminated => "terminated",
            TraceEnd::Deadlocked => "deadlocked",
            TraceEnd::Budget => "budget",
            TraceEnd::Error => "error",
        }
    }
}

/// A run from `initial`. Running again with the same engine, policy, seed
/// and budget gives an identical trace.
#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub seed: u64,
    pub policy: SchedulerPolicy,
    pub max_steps: usize,
    pub initial: Configuration,
    pub steps: Vec<TraceStep>,
    pub end: TraceEnd,
}

impl Trace {
    pub fn last(&self) -> &Configuration {
        self.steps.last().map_or(&self.initial, |s| &s.config)
    }

    pub fn labels(&self) -> impl Iterator<Item = &TransitionLabel> {
        self.steps.iter().map(|s| &s.label)
    }

    /// Product of the Born probabilities of the measurements taken.
    pub fn probability(&self) -> f64 {
        self.labels()
            .map(|l| match l {
                TransitionLabel::Meas { probability, .. } => *probability,
                _ => 1.0,
            })
            .product()
    }

    pub fn document(&self) -> TraceDocument {
        TraceDocument {
            seed: self.seed,
            policy: self.policy.name().to_string(),
            steps: self.steps.iter().map(StepRecord::of).collect(),
            end: self.end.name().to_string(),
            error: None,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.document()).expect("trace documents always serialize")
    }

    /// Runs again from the same start and reports whether the result matches.
    pub fn replays_on(&self, engine: &Engine) -> bool {
        match engine.run_from(self.initial.clone(), self.policy, self.max_steps, self.seed) {
            Ok(t) => t == *self,
            Err(e) => e.partial.as_ref() == Some(self),
        }
    }
}

/// Serialized trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceDocument {
    pub seed: u64,
    pub policy: String,
    pub steps: Vec<StepRecord>,
    #[serde(rename = "final")]
    pub end: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub label: String,
    pub rule: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub channel: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gate: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub power: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub targets: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub outcome: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub probability: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub qvar: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub process: Option<String>,
    pub rho_digest: RhoDigest,
}

impl StepRecord {
    fn of(step: &TraceStep) -> StepRecord {
        let mut r = StepRecord {
            label: step.label.kind().to_string(),
            rule: step.label.rule().to_string(),
            channel: None,
            value: None,
            gate: None,
            power: None,
            targets: None,
            outcome: None,
            probability: None,
            qvar: None,
            process: None,
            rho_digest: RhoDigest::of(step.config.ctx.state()),
        };
        match &step.label {
            TransitionLabel::Tau(cause) => match cause {
                TauCause::ClassicalSync { channel, value } => {
                    r.channel = Some(channel.clone());
                    r.value = Some(*value);
                }
                TauCause::QuantumSync { channel, qvar } => {
                    r.channel = Some(channel.clone());
                    r.qvar = Some(qvar.clone());
                }
                TauCause::SeqEnd => {}
                TauCause::Declare { names } => r.targets = Some(names.clone()),
                TauCause::Call { name } => r.process = Some(name.clone()),
            },
            TransitionLabel::CSend { channel, value } | TransitionLabel::CRecv { channel, value } => {
                r.channel = Some(channel.clone());
                r.value = Some(*value);
            }
            TransitionLabel::QSend { channel, qvar }
            | TransitionLabel::QRecvFresh { channel, qvar, .. }
            | TransitionLabel::QRecvRef { channel, qvar } => {
                r.channel = Some(channel.clone());
                r.qvar = Some(qvar.clone());
            }
            TransitionLabel::Unit { gate, power, targets } => {
                r.gate = Some(gate.clone());
                r.power = *power;
                r.targets = Some(targets.clone());
            }
            TransitionLabel::Meas {
                targets,
                outcome,
                probability,
            } => {
                r.targets = Some(targets.clone());
                r.outcome = Some(outcome.iter().map(|b| if *b == 1 { '1' } else { '0' }).collect());
                r.probability = Some(*probability);
            }
        }
        r
    }
}

/// A failed run, with the steps taken before the failure when there were any.
#[derive(Debug, Clone, PartialEq)]
pub struct RunError {
    pub error: EngineError,
    pub partial: Option<Trace>,
}

impl RunError {
    pub fn document(&self) -> Option<TraceDocument> {
        self.partial.as_ref().map(|t| TraceDocument {
            error: Some(self.error.to_string()),
            ..t.document()
        })
    }
}

impl fmt::Display for RunError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.partial {
            Some(t) => write!(f, "{} (after {} steps)", self.error, t.steps.len()),
            None => write!(f, "{}", self.error),
        }
    }
}

impl std::error::Error for RunError {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        Some(&self.error)
    }
}

impl From<EngineError> for RunError {
    fn from(error: EngineError) -> Self {
        RunError { error, partial: None }
    }
}

/// Checks `file`, then runs its main process.
pub fn run(file: &SourceFile, policy: SchedulerPolicy, max_steps: usize, seed: u64) -> Result<Trace, Box<RunError>> {
    let report = well_formed_file(file);
    if let Some(v) = report.violations.first() {
        return Err(Box::new(EngineError::IllFormed(v.to_string()).into()));
    }
    let main = file
        .main
        .as_deref()
        .ok_or_else(|| Box::new(RunError::from(EngineError::NoMain)))?;
    let engine = Engine::new(file);
    let initial = engine.initial(main).map_err(|e| Box::new(RunError::from(e)))?;
    engine.run_from(initial, policy, max_steps, seed)
}

impl Engine {
    /// Steps from `initial` until it terminates, deadlocks or `max_steps`
    /// transitions have been taken.
    pub fn run_from(
        &self,
        initial: Configuration,
        policy: SchedulerPolicy,
        max_steps: usize,
        seed: u64,
    ) -> Result<Trace, Box<RunError>> {
        policy.validate().map_err(|e| Box::new(RunError::from(e)))?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut trace = Trace {
            seed,
            policy,
            max_steps,
            initial,
            steps: vec![],
            end: TraceEnd::Budget,
        };
        while trace.steps.len() < max_steps {
            match self.step(trace.last(), policy, &mut rng) {
                Ok(StepOutcome::Moved(t)) => trace.steps.push(TraceStep {
                    label: t.label,
                    config: t.next,
                }),
                Ok(StepOutcome::Terminated) => {
                    trace.end = TraceEnd::Terminated;
                    return Ok(trace);
                }
                Ok(StepOutcome::Deadlocked) => {
                    trace.end = TraceEnd::Deadlocked;
                    return Ok(trace);
                }
                Err(error) => {
                    trace.end = TraceEnd::Error;
                    return Err(Box::new(RunError {
                        error,
                        partial: Some(trace),
                    }));
                }
            }
        }
        // a run that used its whole budget may still have finished
        if trace.last().is_terminated() {
            trace.end = TraceEnd::Terminated;
        } else if self.enabled_transitions(trace.last()).is_ok_and(|ts| ts.is_empty()) {
            trace.end = TraceEnd::Deadlocked;
        }
        Ok(trace)
    }

    /// One trace per sequence of measurement outcomes. Other choices are
    /// resolved leftmost first. Fails when more than `max_paths` traces
    /// would be produced.
    pub fn branches(
        &self,
        initial: Configuration,
        max_steps: usize,
        max_paths: usize,
    ) -> Result<Vec<Trace>, EngineError> {
        let mut done = vec![];
        let mut pending = vec![(initial.clone(), Vec::<TraceStep>::new())];
        while let Some((cfg, steps)) = pending.pop() {
            let finish = |end| Trace {
                seed: 0,
                policy: SchedulerPolicy::Exhaustive {
                    bound: max_steps.max(1),
                },
                max_steps,
                initial: initial.clone(),
                steps: steps.clone(),
                end,
            };
            let end = if cfg.is_terminated() {
                Some(TraceEnd::Terminated)
            } else if steps.len() >= max_steps {
                Some(TraceEnd::Budget)
            } else {
                None
            };
            if let Some(end) = end {
                done.push(finish(end));
            } else {
                let ts = self.enabled_transitions(&cfg)?;
                if ts.is_empty() {
                    done.push(finish(TraceEnd::Deadlocked));
                } else {
                    // reversed so that branches come out in outcome order
                    for t in ts
                        .into_iter()
                        .filter(|t| t.choice == 0)
                        .collect::<Vec<_>>()
                        .into_iter()
                        .rev()
                    {
                        let mut s = steps.clone();
                        s.push(TraceStep {
                            label: t.label,
                            config: t.next.clone(),
                        });
                        pending.push((t.next, s));
                    }
                }
            }
            if done.len() + pending.len() > max_paths {
                return Err(EngineError::Budget(format!("more than {max_paths} branches")));
            }
        }
        Ok(done)
    }
}
