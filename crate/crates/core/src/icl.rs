//! In-context bandit scenarios played by a chat policy.
//!
//! Each turn resolves the phase, draws a query, renders the system prompt for
//! the active arms and a user message with the recent history, asks the
//! policy, parses its `Chosen Action:` line and samples a reward.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::metrics::{RunTrace, StepRecord};
use crate::policy::{PolicyBackend, PolicyRequest, ResponseFormat};
use crate::presentation::{match_label, offer, ContextMode};
use crate::seeding::{rng_for, Stream};
use crate::toyenv::sample_reward;

pub const HISTORY_WINDOW: usize = 20;
pub const TEMPERATURE: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ScenarioId {
    #[serde(rename = "fQfA")]
    FixedQueryFixedArms,
    #[serde(rename = "mQfA")]
    MultiQueryFixedArms,
    #[serde(rename = "fQmA")]
    FixedQueryMovingArms,
    #[serde(rename = "mQmA")]
    MultiQueryMovingArms,
}

impl ScenarioId {
    pub const ALL: [ScenarioId; 4] = [
        ScenarioId::FixedQueryFixedArms,
        ScenarioId::MultiQueryFixedArms,
        ScenarioId::FixedQueryMovingArms,
        ScenarioId::MultiQueryMovingArms,
    ];

    pub fn code(self) -> &'static str {
        match self {
            ScenarioId::FixedQueryFixedArms => "fQfA",
            ScenarioId::MultiQueryFixedArms => "mQfA",
            ScenarioId::FixedQueryMovingArms => "fQmA",
            ScenarioId::MultiQueryMovingArms => "mQmA",
        }
    }
}

impl fmt::Display for ScenarioId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

impl FromStr for ScenarioId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "fqfa" | "exp1" | "1" => Ok(ScenarioId::FixedQueryFixedArms),
            "mqfa" | "exp2" | "2" => Ok(ScenarioId::MultiQueryFixedArms),
            "fqma" | "exp3" | "3" => Ok(ScenarioId::FixedQueryMovingArms),
            "mqma" | "exp4" | "4" => Ok(ScenarioId::MultiQueryMovingArms),
            other => Err(domain(format!("unknown scenario {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmConfig {
    pub id: String,
    pub name: String,
    pub description: String,
    pub p_true: f64,
    pub p_subopt: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IclQuery {
    pub id: String,
    pub text: String,
    pub optimal_arm: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IclPhase {
    pub name: String,
    pub turns: usize,
    pub active_arm_ids: Vec<String>,
    pub active_query_ids: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub id: ScenarioId,
    pub arms: Vec<ArmConfig>,
    pub queries: Vec<IclQuery>,
    pub phases: Vec<IclPhase>,
    pub total_turns: usize,
    pub trials: usize,
    #[serde(default = "default_window")]
    pub history_window: usize,
    pub max_output_tokens: u32,
    #[serde(default = "default_temperature")]
    pub temperature: f64,
}

fn default_window() -> usize {
    HISTORY_WINDOW
}
fn default_temperature() -> f64 {
    TEMPERATURE
}

fn arm(id: &str, name: &str, description: &str, p_true: f64, p_subopt: f64) -> ArmConfig {
    ArmConfig {
        id: id.into(),
        name: name.into(),
        description: description.into(),
        p_true,
        p_subopt,
    }
}

fn query(id: &str, text: &str, optimal_arm: &str) -> IclQuery {
    IclQuery {
        id: id.into(),
        text: text.into(),
        optimal_arm: optimal_arm.into(),
    }
}

fn phase(name: &str, turns: usize, arms: &[&str], queries: &[&str]) -> IclPhase {
    IclPhase {
        name: name.into(),
        turns,
        active_arm_ids: arms.iter().map(|s| s.to_string()).collect(),
        active_query_ids: queries.iter().map(|s| s.to_string()).collect(),
    }
}

fn ids<T>(items: &[T], id: impl Fn(&T) -> &str) -> Vec<&str> {
    items.iter().map(id).collect()
}

impl ScenarioConfig {
    /// The four shipped scenarios.
    pub fn builtin(id: ScenarioId) -> Self {
        match id {
            ScenarioId::FixedQueryFixedArms => {
                let arms = vec![
                    arm("tool_A", "Data Analyzer", "Processes numerical data arrays to find trends.", 0.9, 0.55),
                    arm("tool_B", "Text Formatter", "Cleans and formats long text strings.", 0.9, 0.5),
                    arm("tool_C", "Image Resizer", "Changes the dimensions of image files.", 0.8, 0.6),
                ];
                let queries = vec![query(
                    "q_analyze",
                    "I have a list of sales figures for the last quarter, can you help me understand the growth pattern?",
                    "tool_A",
                )];
                Self::single_phase(id, arms, queries, 10, 5, 500)
            }
            ScenarioId::MultiQueryFixedArms => {
                let arms = vec![
                    arm(
                        "tool_translate",
                        "QuickTranslate",
                        "Translates short text snippets between common languages.",
                        0.85,
                        0.5,
                    ),
                    arm("tool_summarize", "BriefSummary", "Creates a one-sentence summary of a paragraph.", 0.75, 0.5),
                    arm("tool_calendar", "EventScheduler", "Adds events to a user's primary calendar.", 0.9, 0.55),
                    arm("tool_filesearch", "DocFinder", "Searches for local documents by keyword.", 0.7, 0.6),
                ];
                let queries = vec![
                    query("q_trans_hello", "How do you say 'hello' in Spanish?", "tool_translate"),
                    query(
                        "q_sum_paragraph",
                        "Give me the gist of this: 'The quick brown fox jumps over the lazy dog every day.'",
                        "tool_summarize",
                    ),
                    query("q_sched_meeting", "Schedule a meeting with Jane for tomorrow at 2 PM.", "tool_calendar"),
                    query("q_find_report", "Find the Q3 sales report document on my drive.", "tool_filesearch"),
                    query("q_trans_bye", "What is 'goodbye' in French?", "tool_translate"),
                    query(
                        "q_sum_news",
                        "Briefly, what's this news about: 'Local team wins championship after a dramatic final.'?",
                        "tool_summarize",
                    ),
                ];
                Self::single_phase(id, arms, queries, 50, 5, 500)
            }
            ScenarioId::FixedQueryMovingArms => {
                let arms = vec![
                    arm("E3_Calculator", "Basic Calculator", "Performs simple arithmetic (+, -, *, /).", 0.7, 0.1),
                    arm(
                        "E3_SciCalculator",
                        "Scientific Calculator",
                        "Advanced math functions: exponents, logs, trig.",
                        0.9,
                        0.15,
                    ),
                    arm(
                        "E3_UnitConverter",
                        "Unit Converter",
                        "Converts units (e.g., kg to lbs, meters to feet).",
                        0.8,
                        0.05,
                    ),
                    arm("E3_Plotter", "Data Plotter", "Generates simple plots from data.", 0.6, 0.1),
                    arm(
                        "E3_SuperCalc",
                        "SuperMath Solver",
                        "Handles complex algebra, calculus, and symbolic math. The ultimate math tool.",
                        0.95,
                        0.2,
                    ),
                ];
                let queries = vec![query(
                    "Q_ComplexMath",
                    "Solve the integral of x ^ 2 * sin(x) from 0 to pi, and also find the square root of 1764.",
                    "E3_SuperCalc",
                )];
                let q = ["Q_ComplexMath"];
                let phases = vec![
                    phase("P1_BasicTools", 7, &["E3_Calculator", "E3_UnitConverter"], &q),
                    phase(
                        "P2_SciCalc_Added",
                        10,
                        &["E3_Calculator", "E3_SciCalculator", "E3_UnitConverter"],
                        &q,
                    ),
                    phase("P3_SuperCalc_Arrives", 10, &["E3_SciCalculator", "E3_SuperCalc"], &q),
                    phase("P4_SuperCalc_Only", 8, &["E3_SuperCalc", "E3_Plotter"], &q),
                ];
                Self::phased(id, arms, queries, phases, 7, 1500)
            }
            ScenarioId::MultiQueryMovingArms => {
                // Descriptions and query texts are not given for this scenario;
                // these short synthetic ones can be overridden by config.
                let arms = vec![
                    arm("E4_Translate_EN_DE", "German Translator", "Translates English text into German.", 0.9, 0.1),
                    arm(
                        "E4_Summarize_News",
                        "News Summarizer",
                        "Summarizes news articles into a few sentences.",
                        0.85,
                        0.15,
                    ),
                    arm("E4_Weather_API", "City Weather", "Reports the current weather for a given city.", 0.92, 0.1),
                    arm("E4_Image_Resize", "Image Resizer", "Resizes images to the requested dimensions.", 0.8, 0.05),
                    arm("E4_Code_Python", "Python Code Assistant", "Writes and explains Python code snippets.", 0.75, 0.2),
                    arm("E4_General_QA", "Knowledge Bot", "Answers general knowledge questions.", 0.7, 0.3),
                ];
                let queries = vec![
                    query("Q_Translate_Hello_DE", "How do I say 'hello' in German?", "E4_Translate_EN_DE"),
                    query(
                        "Q_Summarize_Article",
                        "Summarize this news article about the new city budget.",
                        "E4_Summarize_News",
                    ),
                    query("Q_Weather_Berlin", "What is the weather in Berlin right now?", "E4_Weather_API"),
                    query("Q_Resize_Logo", "Resize our company logo to 200x200 pixels.", "E4_Image_Resize"),
                    query("Q_Python_Loop", "Write a Python loop that prints the numbers 1 to 10.", "E4_Code_Python"),
                    query("Q_Capital_France", "What is the capital of France?", "E4_General_QA"),
                    query("Q_Weather_Tokyo", "Will it rain in Tokyo today?", "E4_Weather_API"),
                    query("Q_Python_Function", "Write a Python function that reverses a string.", "E4_Code_Python"),
                ];
                let phases = vec![
                    phase(
                        "P1_Lang_Summary",
                        8,
                        &["E4_Translate_EN_DE", "E4_Summarize_News", "E4_General_QA"],
                        &["Q_Translate_Hello_DE", "Q_Summarize_Article", "Q_Capital_France"],
                    ),
                    phase(
                        "P2_Weather_Image",
                        10,
                        &["E4_Weather_API", "E4_Image_Resize", "E4_General_QA"],
                        &["Q_Weather_Berlin", "Q_Resize_Logo", "Q_Capital_France", "Q_Weather_Tokyo"],
                    ),
                    phase(
                        "P3_Coding_Focus",
                        10,
                        &["E4_Code_Python", "E4_General_QA", "E4_Weather_API"],
                        &["Q_Python_Loop", "Q_Capital_France", "Q_Weather_Tokyo", "Q_Python_Function"],
                    ),
                ];
                Self::phased(id, arms, queries, phases, 7, 1500)
            }
        }
    }

    fn single_phase(
        id: ScenarioId,
        arms: Vec<ArmConfig>,
        queries: Vec<IclQuery>,
        turns: usize,
        trials: usize,
        max_output_tokens: u32,
    ) -> Self {
        let p = phase(
            "P1",
            turns,
            &ids(&arms, |a| a.id.as_str()),
            &ids(&queries, |q| q.id.as_str()),
        );
        Self::phased(id, arms, queries, vec![p], trials, max_output_tokens)
    }

    fn phased(
        id: ScenarioId,
        arms: Vec<ArmConfig>,
        queries: Vec<IclQuery>,
        phases: Vec<IclPhase>,
        trials: usize,
        max_output_tokens: u32,
    ) -> Self {
        Self {
            id,
            total_turns: phases.iter().map(|p| p.turns).sum(),
            arms,
            queries,
            phases,
            trials,
            history_window: HISTORY_WINDOW,
            max_output_tokens,
            temperature: TEMPERATURE,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.phases.is_empty() || self.trials == 0 {
            return Err(domain(format!("scenario {} needs phases and trials", self.id)));
        }
        let sum: usize = self.phases.iter().map(|p| p.turns).sum();
        if sum != self.total_turns {
            return Err(domain(format!(
                "scenario {}: phase turns sum to {sum}, total_turns is {}",
                self.id, self.total_turns
            )));
        }
        for a in &self.arms {
            for p in [a.p_true, a.p_subopt] {
                if !(0.0..=1.0).contains(&p) {
                    return Err(domain(format!("arm {} has probability {p} outside [0,1]", a.id)));
                }
            }
        }
        for q in &self.queries {
            self.arm(&q.optimal_arm)?;
        }
        for p in &self.phases {
            if p.turns == 0 || p.active_query_ids.is_empty() || p.active_arm_ids.is_empty() {
                return Err(domain(format!("phase {} needs turns, arms and queries", p.name)));
            }
            for a in &p.active_arm_ids {
                self.arm(a)?;
            }
            for q in &p.active_query_ids {
                self.query(q)?;
            }
        }
        Ok(())
    }

    pub fn arm(&self, id: &str) -> Result<&ArmConfig> {
        self.arms
            .iter()
            .find(|a| a.id == id)
            .ok_or_else(|| Error::Configuration(format!("unknown arm {id:?} in scenario {}", self.id)))
    }

    pub fn query(&self, id: &str) -> Result<&IclQuery> {
        self.queries
            .iter()
            .find(|q| q.id == id)
            .ok_or_else(|| Error::Configuration(format!("unknown query {id:?} in scenario {}", self.id)))
    }

    /// 0-based phase index of 1-based `turn`.
    pub fn phase_at(&self, turn: usize) -> Result<usize> {
        if turn == 0 {
            return Err(domain("turns are 1-based"));
        }
        let mut end = 0;
        for (i, p) in self.phases.iter().enumerate() {
            end += p.turns;
            if turn <= end {
                return Ok(i);
            }
        }
        Err(domain(format!("turn {turn} beyond {}", self.total_turns)))
    }

    pub fn active_arms(&self, turn: usize) -> Result<Vec<&ArmConfig>> {
        let p = &self.phases[self.phase_at(turn)?];
        p.active_arm_ids.iter().map(|id| self.arm(id)).collect()
    }

    pub fn active_queries(&self, turn: usize) -> Result<Vec<&IclQuery>> {
        let p = &self.phases[self.phase_at(turn)?];
        p.active_query_ids.iter().map(|id| self.query(id)).collect()
    }
}

/// Success probability of `arm` on `query`.
pub fn effective_p(arm: &ArmConfig, query: &IclQuery) -> f64 {
    if arm.id == query.optimal_arm {
        arm.p_true
    } else {
        arm.p_subopt
    }
}

/// Best available arm by effective probability; first wins ties.
pub fn best_arm(arms: &[&ArmConfig], query: &IclQuery) -> Option<(usize, f64)> {
    arms.iter().enumerate().fold(None, |best, (i, a)| {
        let p = effective_p(a, query);
        match best {
            Some((_, b)) if b >= p => best,
            _ => Some((i, p)),
        }
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InteractionRecord {
    pub turn: usize,
    pub query_text: String,
    /// Arm id, if a valid arm was chosen.
    pub chosen: Option<String>,
    /// How the choice was shown to the policy at the time.
    pub label: Option<String>,
    pub reward: u8,
}

/// The system prompt with the active arms rendered for `mode`.
pub fn build_system_prompt(mode: ContextMode, arms: &[&ArmConfig]) -> Result<String> {
    if arms.is_empty() {
        return Err(Error::EmptyActionSet);
    }
    let (list, _) = offer(mode, arms.iter().map(|a| (a.name.as_str(), a.description.as_str())));
    let list: Vec<String> = list.lines().map(|l| format!("  {l}")).collect();
    Ok(format!("{}\n{}\n]", SYSTEM_HEADER.join("\n"), list.join("\n")))
}

// Several lines end in a space; kept as separate literals so that survives editing.
const SYSTEM_HEADER: [&str; 12] = [
    "You are an intelligent assistant playing a multi-armed bandit game.",
    "Your goal is to maximize your total reward over many turns. ",
    "The available actions (tools) or types of queries may change over time.",
    "In each turn, you are presented with a user query and a list of currently ",
    "available actions. Each action, when chosen for a query it is suited for, ",
    "has a specific hidden probability of yielding a reward of 1, and 0 otherwise.",
    "If an action is not suited for the query, or no suitable action is available, ",
    "it will likely yield a reward of 0.",
    "You must choose one action if suitable options exist. ",
    "If no actions are available or suitable, state that.",
    "",
    "Available actions: [",
];

const USER_FOOTER: [&str; 6] = [
    "Think step-by-step about which action is best for the current query. ",
    "Consider the query, CURRENTLY available action descriptions, and past experiences. ",
    "After your reasoning, state your final choice clearly. ",
    "For example: \"Reasoning: [...reasons...]. Chosen Action: ActionName Or Index\". ",
    "If no action is suitable or available, you can state 'Chosen Action: None'.",
    "Which action do you choose?",
];

/// The per-turn user message showing the last `window` records.
pub fn build_user_message(history: &[InteractionRecord], query: &str, global_turn: usize, window: usize) -> String {
    let mut out = String::from("Interaction History (most recent 20 turns shown for LLM context):\n");
    for r in &history[history.len().saturating_sub(window)..] {
        out.push_str(&format!(
            "Turn {}: Query: \"{}\", Your Choice: {}, Outcome: Reward {}\n",
            r.turn,
            r.query_text,
            r.label.as_deref().unwrap_or("None"),
            r.reward
        ));
    }
    out.push_str(&format!("\nCurrent User Query (Global Turn {global_turn}): \"{query}\"\n\n"));
    out.push_str(&USER_FOOTER.join("\n"));
    out
}

const CHOSEN: &str = "chosen action:";

/// Index into `arms` named after the last `Chosen Action:`, or `None` for a refusal.
pub fn parse_choice(response: &str, arms: &[&ArmConfig]) -> Result<Option<usize>> {
    // ASCII lowercasing keeps byte offsets aligned with the original
    let lower = response.to_ascii_lowercase();
    let at = lower
        .rfind(CHOSEN)
        .ok_or_else(|| Error::UnparsedChoice(response.to_string()))?;
    let rest = response[at + CHOSEN.len()..].lines().next().unwrap_or("").trim();
    let token = rest.trim_matches(|c: char| matches!(c, '"' | '\'' | '`' | '*' | '[' | ']' | '.' | ','));
    if token.eq_ignore_ascii_case("none") {
        return Ok(None);
    }
    let names: Vec<&str> = arms.iter().map(|a| a.name.as_str()).collect();
    match_label(rest, &names)
        .map(Some)
        .ok_or_else(|| Error::UnparsedChoice(rest.to_string()))
}

/// Bernoulli draw at the chosen arm's effective probability; 0 for no choice.
pub fn step_reward<R: Rng + ?Sized>(chosen: Option<&ArmConfig>, query: &IclQuery, rng: &mut R) -> Result<u8> {
    match chosen {
        None => Ok(0),
        Some(arm) => sample_reward(rng, effective_p(arm, query)),
    }
}

/// One line of the trial log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TurnRecord {
    pub trial: usize,
    pub turn: usize,
    pub query_id: String,
    pub chosen: Option<String>,
    pub reward: u8,
    /// 1-based.
    pub phase: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialLog {
    pub trial: usize,
    pub seed: u64,
    pub turns: Vec<TurnRecord>,
    pub trace: RunTrace,
    /// False when a backend failure cut the trial short.
    pub complete: bool,
    pub error: Option<String>,
}

impl TrialLog {
    pub fn total_reward(&self) -> u64 {
        self.turns.iter().map(|t| u64::from(t.reward)).sum()
    }
}

/// Plays one trial.
pub fn run_trial(
    scenario: &ScenarioConfig,
    mode: ContextMode,
    policy: &PolicyBackend,
    trial: usize,
    seed: u64,
) -> Result<TrialLog> {
    scenario.validate()?;
    let mut query_rng = rng_for(seed, Stream::Queries);
    let mut reward_rng = rng_for(seed, Stream::Rewards);
    let mut history: Vec<InteractionRecord> = Vec::new();
    let mut turns = Vec::with_capacity(scenario.total_turns);
    let mut steps = Vec::with_capacity(scenario.total_turns);
    let mut error = None;

    for turn in 1..=scenario.total_turns {
        let phase = scenario.phase_at(turn)?;
        let arms = scenario.active_arms(turn)?;
        let queries = scenario.active_queries(turn)?;
        let query = if queries.len() == 1 {
            queries[0]
        } else {
            queries[query_rng.random_range(0..queries.len())]
        };
        let (best_index, best_p) = best_arm(&arms, query).ok_or(Error::EmptyActionSet)?;
        let system = build_system_prompt(mode, &arms)?;
        let user = build_user_message(&history, &query.text, turn, scenario.history_window);
        let (_, offered) = offer(mode, arms.iter().map(|a| (a.name.as_str(), a.description.as_str())));
        let request = PolicyRequest {
            system,
            user,
            query: query.text.clone(),
            offered,
            format: ResponseFormat::ChosenAction,
            target: Some(best_index),
            salt: seed,
        };
        let response = match policy.complete(&request) {
            Ok(r) => r,
            Err(e) => {
                error = Some(e.to_string());
                break;
            }
        };
        let (choice, note) = match parse_choice(&response, &arms) {
            Ok(c) => (c, None),
            Err(e) => (None, Some(e.to_string())),
        };
        let chosen_arm = choice.map(|i| arms[i]);
        let reward = step_reward(chosen_arm, query, &mut reward_rng)?;
        let chosen_p = chosen_arm.map_or(0.0, |a| effective_p(a, query));
        history.push(InteractionRecord {
            turn,
            query_text: query.text.clone(),
            chosen: chosen_arm.map(|a| a.id.clone()),
            label: choice.map(|i| request.offered[i].label.clone()),
            reward,
        });
        turns.push(TurnRecord {
            trial,
            turn,
            query_id: query.id.clone(),
            chosen: chosen_arm.map(|a| a.id.clone()),
            reward,
            phase: phase + 1,
            note,
        });
        steps.push(StepRecord {
            t: turn - 1,
            query_id: query.id.clone(),
            chosen_tool_id: chosen_arm.map(|a| a.id.clone()),
            reward,
            chosen_expected: chosen_p,
            oracle_expected: best_p,
            ucb_scores: Vec::new(),
        });
    }

    Ok(TrialLog {
        trial,
        seed,
        complete: error.is_none(),
        error,
        turns,
        trace: RunTrace { steps },
    })
}

/// All trials of a scenario, run in parallel; trial `i` uses seed `base_seed + i`.
pub fn run_scenario(
    scenario: &ScenarioConfig,
    mode: ContextMode,
    policy: &PolicyBackend,
    base_seed: u64,
) -> Result<Vec<TrialLog>> {
    scenario.validate()?;
    (0..scenario.trials)
        .into_par_iter()
        .map(|i| run_trial(scenario, mode, policy, i, base_seed.wrapping_add(i as u64)))
        .collect()
}

pub fn write_trial_jsonl<W: Write>(mut out: W, logs: &[TrialLog]) -> Result<()> {
    for log in logs {
        for t in &log.turns {
            serde_json::to_writer(&mut out, t)?;
            out.write_all(b"\n")?;
        }
    }
    Ok(())
}
