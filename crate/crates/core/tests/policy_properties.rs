use photoguard_core::policy::DecisionInputs;
use photoguard_core::*;
use proptest::prelude::*;

fn system() -> impl Strategy<Value = SystemStatus> {
    prop_oneof![Just(SystemStatus::Locked), Just(SystemStatus::Unlocked)]
}

fn run_state() -> impl Strategy<Value = AppRunState> {
    prop_oneof![Just(AppRunState::Foreground), Just(AppRunState::Background)]
}

fn category() -> impl Strategy<Value = ContentCategory> {
    (0usize..5).prop_map(|i| ContentCategory::from_index(i).unwrap())
}

fn app_id() -> impl Strategy<Value = String> {
    "[a-z]{1,6}"
}

/// Workflow written out as nested branches, independent of `decide`.
fn workflow(inputs: DecisionInputs) -> (Verdict, Reason) {
    if inputs.whitelisted {
        (Verdict::Allow, Reason::Whitelisted)
    } else {
        match inputs.system {
            SystemStatus::Locked => (Verdict::Deny, Reason::ScreenLocked),
            SystemStatus::Unlocked => match inputs.app_state {
                AppRunState::Background => (Verdict::Deny, Reason::AppInBackground),
                AppRunState::Foreground => match inputs.category {
                    ContentCategory::Public => (Verdict::Allow, Reason::PublicContent),
                    _ => (Verdict::PromptRequired, Reason::PrivateContent),
                },
            },
        }
    }
}

#[test]
fn table_matches_workflow_oracle() {
    let table = decision_table();
    assert_eq!(table.len(), 40);
    let mut prompts = 0;
    for (inputs, decision) in &table {
        assert_eq!((decision.verdict(), decision.reason()), workflow(*inputs), "{inputs:?}");
        prompts += decision.is_prompt() as usize;
    }
    assert_eq!(prompts, 4);
    let mut distinct: Vec<_> = table.iter().map(|(i, _)| *i).collect();
    distinct.dedup();
    assert_eq!(distinct.len(), 40);
}

proptest! {
    #[test]
    fn whitelist_dominates(app in app_id(), sys in system(), run in run_state(), cat in category()) {
        let wl: Whitelist = [app.clone()].into_iter().collect();
        let req = AccessRequest::new(app, "p.jpg", 0).unwrap();
        let d = decide(&req, sys, run, cat, &wl);
        prop_assert_eq!((d.verdict(), d.reason()), (Verdict::Allow, Reason::Whitelisted));
    }

    #[test]
    fn locked_or_background_never_allows(app in app_id(), sys in system(), run in run_state(), cat in category()) {
        let req = AccessRequest::new(app, "p.jpg", 0).unwrap();
        let wl: Whitelist = ["someone-else-entirely"].into_iter().collect();
        let d = decide(&req, sys, run, cat, &wl);
        if sys == SystemStatus::Locked || run == AppRunState::Background {
            prop_assert!(!d.is_allow());
        }
    }

    #[test]
    fn prompt_confinement(app in app_id(), listed in any::<bool>(), sys in system(), run in run_state(), cat in category()) {
        let wl: Whitelist = if listed { [app.clone()].into_iter().collect() } else { Whitelist::new() };
        let req = AccessRequest::new(app, "p.jpg", 0).unwrap();
        let d = decide(&req, sys, run, cat, &wl);
        let expect = !listed && sys == SystemStatus::Unlocked && run == AppRunState::Foreground && cat.is_private();
        prop_assert_eq!(d.is_prompt(), expect);
    }

    #[test]
    fn decisions_are_pure(app in app_id(), sys in system(), run in run_state(), cat in category(), ts in any::<u64>()) {
        let req = AccessRequest::new(app, "p.jpg", ts).unwrap();
        let wl = Whitelist::new();
        let a = decide(&req, sys, run, cat, &wl);
        prop_assert_eq!(a, decide(&req, sys, run, cat, &wl));
        if a.is_prompt() {
            for c in [UserChoice::Allow, UserChoice::Deny, UserChoice::Timeout] {
                prop_assert_eq!(resolve_prompt(a, c).unwrap(), resolve_prompt(a, c).unwrap());
            }
        }
    }

    #[test]
    fn private_content_only_allowed_via_whitelist_or_user(
        app in app_id(), listed in any::<bool>(), sys in system(), run in run_state(), cat in category(),
        choice in prop_oneof![Just(UserChoice::Allow), Just(UserChoice::Deny), Just(UserChoice::Timeout)],
    ) {
        let wl: Whitelist = if listed { [app.clone()].into_iter().collect() } else { Whitelist::new() };
        let req = AccessRequest::new(app, "p.jpg", 0).unwrap();
        let mut d = decide(&req, sys, run, cat, &wl);
        if d.is_prompt() {
            d = resolve_prompt(d, choice).unwrap();
        }
        if cat.is_private() && d.is_allow() {
            prop_assert!(matches!(d.reason(), Reason::Whitelisted | Reason::UserAllowed));
        }
    }

    #[test]
    fn extension_match_ignores_case(stem in "[a-z]{1,8}", ext in prop::sample::select(ExtensionSet::DEFAULT.to_vec()), upper in any::<bool>()) {
        let ext = if upper { ext.to_uppercase() } else { ext.to_string() };
        let photo = format!("dir/{}.{}", stem, ext);
        let text = format!("{}.txt", photo);
        prop_assert!(requires_control(&photo, &ExtensionSet::default()));
        prop_assert!(!requires_control(&text, &ExtensionSet::default()));
    }
}
