use icr_core::corpus::Turn;
use icr_core::gen::{
    generate_clarification, generate_rewrite, render_clarify_prompt, render_rewrite_prompt, GenKind, ScriptedMock,
};

const CLARIFY_GOLDEN: &str = include_str!("golden/clarify_prompt.txt");
const REWRITE_GOLDEN: &str = include_str!("golden/rewrite_prompt.txt");

fn belbin_history() -> Vec<Turn> {
    vec![Turn {
        query: "Who produced the original show one foot in the grave?".into(),
        answer: "Susan Belbin.".into(),
    }]
}

#[test]
fn clarify_prompt_matches_golden() {
    assert_eq!(render_clarify_prompt("Has she produced anything else?"), CLARIFY_GOLDEN);
}

#[test]
fn rewrite_prompt_matches_golden() {
    let got = render_rewrite_prompt(
        "Who does \"she\" refer to?",
        &belbin_history(),
        "Has she produced anything else?",
    );
    assert_eq!(got, REWRITE_GOLDEN);
}

#[test]
fn rendering_is_stable_and_literal() {
    let a = render_rewrite_prompt("{Conversation}", &[], "q {Clarification Question}");
    assert_eq!(
        a,
        render_rewrite_prompt("{Conversation}", &[], "q {Clarification Question}")
    );
    assert!(a.contains("#Clarification Question#:\n{Conversation}\n#Conversation#:\nQ: q {Clarification Question}\n"));
    assert!(a.ends_with("#Rewritten Query#:"));
}

#[test]
fn scripted_few_shot_examples() {
    let q = "Has she produced anything else?";
    let mock = ScriptedMock::new()
        .on(GenKind::Clarify, q, Some(0), "  Who does \"she\" refer to?\n")
        .on(GenKind::Rewrite, q, None, "Has susan belbin produced anything else?");
    let c = generate_clarification(&mock, q, 0, 1).unwrap();
    assert_eq!(c, "Who does \"she\" refer to?");
    let r = generate_rewrite(&mock, &belbin_history(), q, &c, 0, 1).unwrap();
    assert_eq!(r, "Has susan belbin produced anything else?");
    assert!(generate_clarification(&mock, q, 1, 1).is_err());
}
