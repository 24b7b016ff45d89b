//! Plan one question of every type from a sampled profile: which facts
//! the question needs, which distractor facts go alongside, and the answer.
//!
//!     cargo run --example plan_questions

use memsim::hintgen::{infuse_noise, plan_qa, GenerationParams, PlanContext, QaType};
use memsim::qa::{answer_text, derive_answer};
use memsim::sampler::{sample_profile, Generators};
use memsim::schema::{load_schema, DAILY_LIFE_SCHEMA};
use memsim::surface::{entity_views, TemplateSet};

fn main() -> memsim::Result<()> {
    let schema = load_schema(DAILY_LIFE_SCHEMA)?;
    let templates = TemplateSet::daily_life();
    let profile = sample_profile(&schema, 21, &Generators::offline())?;
    let ctx = PlanContext::new(&schema, &profile, entity_views(&schema, &profile, &templates)?);
    let params = GenerationParams::default();

    for (i, qa_type) in QaType::ALL.into_iter().enumerate() {
        // a profile may lack the structure a type needs; try a few seeds
        let plan = (0..20).find_map(|s| plan_qa(&ctx, qa_type, &params, (i * 100 + s) as u64).ok());
        let Some(plan) = plan else {
            println!("{qa_type}: this profile cannot support it");
            continue;
        };
        let plan = infuse_noise(&plan, &ctx, params.noise_for(qa_type), 5);
        println!("{qa_type}");
        for h in &plan.target_hints {
            println!("  target  {} / {} = {}", h.label(), h.attribute(), h.value);
        }
        for n in &plan.noise_hints {
            println!("  noise   {} / {} = {} ({:?})", n.hint.label(), n.hint.attribute(), n.hint.value, n.side);
        }
        if let Some(f) = &plan.reasoning_factor {
            println!("  factor  {}", f.id());
        }
        println!("  answer  {}", answer_text(&derive_answer(&plan)?));
    }
    Ok(())
}
