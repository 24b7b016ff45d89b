//! End-to-end trajectory generation: profile, plan, noise, surface text,
//! choices, timeline, then the oracle check. Any step that cannot produce a
//! sound trajectory for a seed moves on to the next seed.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, Record};
use crate::error::{Error, Result};
use crate::hintgen::{infuse_noise, plan_qa, GenerationParams, PlanContext, QaPlan, QaType};
use crate::qa::{
    assemble_trajectory, derive_answer, oracle_grade, Answer, Rendered, TimelineConfig, Trajectory, TrajectoryDebug,
};
use crate::rng::derive_seed;
use crate::sampler::{sample_profile, Generators, Profile};
use crate::schema::{Schema, ValueSpace};
use crate::surface::llm::{Checks, Rewrite, Rewriter};
use crate::surface::{entity_views, render_choices, render_message, render_question, TemplateSet};
use crate::text::contains_verbatim;

fn default_attempts() -> usize {
    200
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenerateConfig {
    /// Trajectories per question type; types left out are not generated.
    pub counts: BTreeMap<QaType, usize>,
    pub params: GenerationParams,
    pub timeline: TimelineConfig,
    /// Seeds tried per trajectory before giving up.
    #[serde(default = "default_attempts")]
    pub max_attempts: usize,
    /// Extra profiles sampled for open-text distractors.
    pub alternatives: usize,
}

impl Default for GenerateConfig {
    fn default() -> Self {
        GenerateConfig {
            counts: BTreeMap::new(),
            params: GenerationParams::default(),
            timeline: TimelineConfig::default(),
            max_attempts: default_attempts(),
            alternatives: 6,
        }
    }
}

impl GenerateConfig {
    /// The same number of trajectories for every type.
    pub fn uniform(n: usize) -> Self {
        GenerateConfig { counts: QaType::ALL.iter().map(|t| (*t, n)).collect(), ..Default::default() }
    }
}

/// Per-type bookkeeping of a generation run.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitReport {
    pub generated: usize,
    /// Seeds tried in total, including the accepted ones.
    pub attempts: usize,
    /// Rejected seeds by reason.
    pub rejections: BTreeMap<String, usize>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RewriteReport {
    pub requests: usize,
    pub accepted: usize,
    pub fallbacks: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenerationReport {
    pub splits: BTreeMap<String, SplitReport>,
    pub rewrite: Option<RewriteReport>,
}

fn reason(e: &Error) -> String {
    let s = format!("{e:?}");
    s.split(['(', ' ', '{']).next().unwrap_or("other").to_string()
}

/// Everything generation reads, shared by all workers.
pub struct Pipeline<'a> {
    pub schema: &'a Schema,
    pub templates: &'a TemplateSet,
    pub generators: &'a Generators,
    pub rewriter: Option<&'a Rewriter>,
}

struct Built {
    trajectory: Trajectory,
    debug: TrajectoryDebug,
}

impl Pipeline<'_> {
    pub fn new<'a>(schema: &'a Schema, templates: &'a TemplateSet, generators: &'a Generators) -> Pipeline<'a> {
        Pipeline { schema, templates, generators, rewriter: None }
    }

    /// One trajectory from one seed, or the reason this seed cannot give one.
    pub fn build(&self, id: &str, qa_type: QaType, config: &GenerateConfig, seed: u64) -> Result<(Trajectory, TrajectoryDebug)> {
        let b = self.build_inner(id, qa_type, config, seed)?;
        Ok((b.trajectory, b.debug))
    }

    fn build_inner(&self, id: &str, qa_type: QaType, config: &GenerateConfig, seed: u64) -> Result<Built> {
        let profile = sample_profile(self.schema, derive_seed(seed, "profile"), self.generators)?;
        let views = entity_views(self.schema, &profile, self.templates)?;
        let ctx = PlanContext::new(self.schema, &profile, views);
        let plan = plan_qa(&ctx, qa_type, &config.params, derive_seed(seed, "plan"))?;
        let plan = infuse_noise(&plan, &ctx, config.params.noise_for(qa_type), derive_seed(seed, "noise"));
        plan.check()?;

        let answer = derive_answer(&plan)?;
        let messages = plan.all_hints().map(|h| render_message(h, self.templates)).collect::<Result<Vec<_>>>()?;
        let question = render_question(&plan, self.templates)?;
        check_no_leak(&question, &answer)?;
        let alternatives = self.alternatives(&plan, &answer, config, seed)?;
        let (choices, correct) = render_choices(&answer, &plan, self.schema, &alternatives, derive_seed(seed, "choices"))?;
        let rendered = Rendered { messages, question, choices, correct };
        let timeline_seed = derive_seed(seed, "timeline");

        if let Some(rw) = self.rewriter {
            let paraphrased = self.paraphrase(id, &plan, &answer, &rendered, rw)?;
            if let Ok(b) = self.finish(id, &plan, &paraphrased, config, timeline_seed, seed) {
                return Ok(b);
            }
            // the paraphrases together broke a check; keep the template text
            rw.stats.fallbacks.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
        }
        self.finish(id, &plan, &rendered, config, timeline_seed, seed)
    }

    fn finish(&self, id: &str, plan: &QaPlan, r: &Rendered, config: &GenerateConfig, tseed: u64, seed: u64) -> Result<Built> {
        let (mut trajectory, debug) = assemble_trajectory(id, plan, r, &config.timeline, tseed)?;
        trajectory.seed = seed;
        let grade = oracle_grade(&trajectory, plan);
        if !grade.all_ok() {
            return Err(Error::Invariant(format!("{id}: oracle check failed: {grade:?}")));
        }
        Ok(Built { trajectory, debug })
    }

    fn alternatives(&self, plan: &QaPlan, answer: &Answer, config: &GenerateConfig, seed: u64) -> Result<Vec<Profile>> {
        let Answer::Value(_) = answer else { return Ok(Vec::new()) };
        let open = plan
            .target_hints
            .last()
            .and_then(|h| self.schema.attribute(&h.attr_id))
            .is_some_and(|a| matches!(a.value_space, ValueSpace::Text { .. } | ValueSpace::Categorical { .. }));
        if !open {
            return Ok(Vec::new());
        }
        (0..config.alternatives)
            .map(|i| sample_profile(self.schema, derive_seed(seed, &format!("alternative/{i}")), self.generators))
            .collect()
    }

    fn paraphrase(&self, id: &str, plan: &QaPlan, answer: &Answer, r: &Rendered, rw: &Rewriter) -> Result<Rendered> {
        let targets: Vec<String> = plan.target_hints.iter().map(|h| h.value.to_string()).collect();
        let mut messages = Vec::with_capacity(r.messages.len());
        for (i, (h, text)) in plan.all_hints().zip(&r.messages).enumerate() {
            let value = h.value.to_string();
            let forbid = targets.iter().filter(|t| **t != value && !contains_verbatim(&value, t)).cloned().collect();
            let checks = Checks { keep: vec![value], forbid, suffix: None };
            messages.push(rw.rewrite(&format!("{id}/m{i}"), "message", text, &checks)?.text().to_string());
        }
        let forbid: Vec<String> = match answer {
            Answer::Value(_) | Answer::Derived(_) | Answer::Count(_) => vec![answer.raw()],
            _ => Vec::new(),
        };
        let keep: Vec<String> = match plan.qa_type {
            QaType::MultiHop | QaType::Noisy | QaType::PostProcessing => vec![plan.target_hints[0].value.to_string()],
            QaType::Comparative | QaType::Aggregative => plan.target_hints.iter().map(|h| h.label().to_string()).collect(),
            QaType::SingleHop => vec![plan.target_hints[0].label().to_string()],
        };
        let question = if plan.qa_type == QaType::Noisy {
            let mut base = plan.clone();
            base.qa_type = QaType::MultiHop;
            let base_q = render_question(&base, self.templates)?;
            let checks = Checks { keep, forbid, suffix: Some(base_q.clone()) };
            match rw.rewrite(&format!("{id}/q"), "noisy", &base_q, &checks)? {
                Rewrite::Accepted(q) => q,
                Rewrite::Fallback(_) => r.question.clone(),
            }
        } else {
            let checks = Checks { keep, forbid, suffix: None };
            rw.rewrite(&format!("{id}/q"), "question", &r.question, &checks)?.text().to_string()
        };
        Ok(Rendered { messages, question, choices: r.choices.clone(), correct: r.correct })
    }

    /// Trajectory `index` of a type: the first seed in its sequence that
    /// yields a sound trajectory.
    pub fn generate_one(
        &self,
        qa_type: QaType,
        index: usize,
        config: &GenerateConfig,
        seed: u64,
    ) -> Result<(Record, SplitReport)> {
        let id = format!("{}-{index:04}", qa_type.split_name());
        let mut report = SplitReport::default();
        let mut last = None;
        for attempt in 0..config.max_attempts.max(1) {
            let s = derive_seed(seed, &format!("{id}/{attempt}"));
            report.attempts += 1;
            match self.build_inner(&id, qa_type, config, s) {
                Ok(b) => {
                    report.generated = 1;
                    return Ok((Record { trajectory: b.trajectory, debug: Some(b.debug) }, report));
                }
                Err(e) if e.is_resample() => {
                    log::debug!("{id}: seed {s} rejected: {e}");
                    *report.rejections.entry(reason(&e)).or_default() += 1;
                    last = Some(e);
                }
                Err(e) => return Err(e),
            }
        }
        Err(match last {
            Some(Error::InsufficientStructure(why)) => Error::InsufficientStructure(format!("{id}: {why}")),
            l => {
                let l = l.map(|e| e.to_string()).unwrap_or_default();
                Error::ExhaustedResampling(format!("{id}: no sound trajectory in {} seeds; last: {l}", config.max_attempts))
            }
        })
    }

    /// All requested trajectories, in parallel on the current rayon pool.
    /// The result does not depend on the number of workers.
    pub fn generate(&self, config: &GenerateConfig, seed: u64) -> Result<(Dataset, GenerationReport)> {
        let mut dataset = Dataset { seed: Some(seed), ..Default::default() };
        let mut report = GenerationReport::default();
        for (&qa_type, &n) in &config.counts {
            let results: Vec<Result<(Record, SplitReport)>> =
                (0..n).into_par_iter().map(|i| self.generate_one(qa_type, i, config, seed)).collect();
            let mut records = Vec::with_capacity(n);
            let mut split = SplitReport::default();
            for r in results {
                let (rec, rep) = r?;
                records.push(rec);
                split.generated += rep.generated;
                split.attempts += rep.attempts;
                for (k, v) in rep.rejections {
                    *split.rejections.entry(k).or_default() += v;
                }
            }
            dataset.splits.insert(qa_type, records);
            report.splits.insert(qa_type.split_name().to_string(), split);
        }
        if let Some(rw) = self.rewriter {
            use std::sync::atomic::Ordering::Relaxed;
            report.rewrite = Some(RewriteReport {
                requests: rw.stats.requests.load(Relaxed),
                accepted: rw.stats.accepted.load(Relaxed),
                fallbacks: rw.stats.fallbacks.load(Relaxed),
            });
        }
        Ok((dataset, report))
    }
}

/// A question must not state its own answer. Comparative and argmax
/// questions name their candidate entities by necessity and are exempt.
pub fn check_no_leak(question: &str, answer: &Answer) -> Result<()> {
    match answer {
        Answer::Value(v) | Answer::Derived(v) if contains_verbatim(question, v) => {
            Err(Error::Invariant(format!("question `{question}` contains its answer `{v}`")))
        }
        Answer::Count(n) if contains_verbatim(question, &n.to_string()) => {
            Err(Error::Invariant(format!("question `{question}` contains its answer `{n}`")))
        }
        _ => Ok(()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schema::{load_schema, DAILY_LIFE_SCHEMA};

    #[test]
    fn every_type_generates_and_grades() {
        let schema = load_schema(DAILY_LIFE_SCHEMA).unwrap();
        let templates = TemplateSet::daily_life();
        let gens = Generators::offline();
        let p = Pipeline::new(&schema, &templates, &gens);
        let config = GenerateConfig::uniform(3);
        let (ds, report) = p.generate(&config, 11).unwrap();
        for t in QaType::ALL {
            let records = &ds.splits[&t];
            assert_eq!(records.len(), 3);
            for r in records {
                let debug = r.debug.as_ref().unwrap();
                assert!(oracle_grade(&r.trajectory, &debug.plan).all_ok());
                assert_eq!(r.trajectory.retrieval_target.len(), t.target_arity(4));
            }
        }
        assert_eq!(report.splits["simple"].generated, 3);
    }

    #[test]
    fn leak_check() {
        assert!(check_no_leak("How old is my cousin?", &Answer::Value("36".into())).is_ok());
        assert!(check_no_leak("Is 36 old?", &Answer::Value("36".into())).is_err());
        assert!(check_no_leak("Who is older, A or B?", &Answer::Entity("A".into())).is_ok());
    }
}
