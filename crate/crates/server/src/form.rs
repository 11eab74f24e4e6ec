//! The structured case body accepted by `PUT /sessions/:id/case`.
//!
//! Each field holds DBDL fragments (paths, literals, amounts). The fragments
//! are assembled into one `testcase` and parsed by the ordinary DBDL parser,
//! so the server accepts exactly what the language accepts.

use serde::{Deserialize, Serialize};

use kaya_core::dbdl::{Cmp, TestCase};
use kaya_core::lex::quote;
use kaya_core::pipeline::{load_suite, InputError};

#[derive(Clone, Debug, Default, PartialEq, Eq, Deserialize, Serialize)]
pub struct AccountForm {
    pub alias: String,
    /// DBDL amount, e.g. `1 ether` or `250 wei`.
    pub balance: String,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Deserialize, Serialize)]
pub struct AssignForm {
    pub path: String,
    pub value: String,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Deserialize, Serialize)]
pub struct EventForm {
    /// `Contract.function(arg, ...)`.
    pub call: String,
    pub from: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value: Option<String>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Deserialize, Serialize)]
pub struct ExpectForm {
    pub path: String,
    pub op: String,
    pub value: String,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct CaseForm {
    pub name: String,
    /// Contract names to deploy; every uploaded contract when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub contracts: Option<Vec<String>>,
    #[serde(default)]
    pub accounts: Vec<AccountForm>,
    #[serde(default)]
    pub prestate: Vec<AssignForm>,
    #[serde(default)]
    pub events: Vec<EventForm>,
    #[serde(default)]
    pub expectations: Vec<ExpectForm>,
}

impl CaseForm {
    /// Inverse of [`CaseForm::into_case`] up to formatting.
    pub fn from_case(case: &TestCase) -> Self {
        CaseForm {
            name: case.name.clone(),
            contracts: Some(case.contracts.iter().map(|c| c.alias.clone()).collect()),
            accounts: case
                .accounts
                .iter()
                .map(|a| AccountForm {
                    alias: a.alias.clone(),
                    balance: kaya_core::dbdl::format_amount(a.balance),
                })
                .collect(),
            prestate: case
                .prestate
                .iter()
                .map(|p| AssignForm {
                    path: p.path.to_string(),
                    value: p.value.to_string(),
                })
                .collect(),
            events: case
                .events
                .iter()
                .map(|e| {
                    let args: Vec<String> = e.args.iter().map(ToString::to_string).collect();
                    EventForm {
                        call: format!("{}.{}({})", e.contract, e.function, args.join(", ")),
                        from: e.sender.clone(),
                        value: (e.value != kaya_core::word::U256::ZERO)
                            .then(|| kaya_core::dbdl::format_amount(e.value)),
                    }
                })
                .collect(),
            expectations: case
                .expectations
                .iter()
                .map(|x| ExpectForm {
                    path: x.path.to_string(),
                    op: x.cmp.symbol().to_string(),
                    value: x.expected.to_string(),
                })
                .collect(),
        }
    }

    /// Parses the form into a case. `sources` maps each contract name to the
    /// upload it came from, which becomes the `from "..."` text.
    pub fn into_case(&self, sources: &[(String, String)]) -> Result<TestCase, InputError> {
        let fragment = |field: &str, text: &str| -> Result<(), InputError> {
            if text.contains(['{', '}', '\n', '#']) {
                Err(InputError::single(
                    "FormField",
                    format!("{field}: `{text}` contains characters not allowed in a fragment"),
                ))
            } else {
                Ok(())
            }
        };
        let mut text = format!("testcase {} {{\n", quote(&self.name));
        let names: Vec<String> = match &self.contracts {
            Some(list) => list.clone(),
            None => sources.iter().map(|(c, _)| c.clone()).collect(),
        };
        for name in &names {
            fragment("contracts", name)?;
            let file = sources
                .iter()
                .find(|(c, _)| c == name)
                .map_or(name.as_str(), |(_, f)| f.as_str());
            text.push_str(&format!("contract {name} from {}\n", quote(file)));
        }
        for a in &self.accounts {
            fragment("accounts.alias", &a.alias)?;
            fragment("accounts.balance", &a.balance)?;
            text.push_str(&format!(
                "account {} {{ balance: {} }}\n",
                a.alias, a.balance
            ));
        }
        text.push_str("prestate {\n");
        for p in &self.prestate {
            fragment("prestate.path", &p.path)?;
            fragment("prestate.value", &p.value)?;
            text.push_str(&format!("{} = {}\n", p.path, p.value));
        }
        text.push_str("}\nevents {\n");
        for e in &self.events {
            fragment("events.call", &e.call)?;
            fragment("events.from", &e.from)?;
            text.push_str(&format!("call {} from {}", e.call, e.from));
            if let Some(v) = &e.value {
                fragment("events.value", v)?;
                text.push_str(&format!(" value {v}"));
            }
            text.push('\n');
        }
        text.push_str("}\nexpect {\n");
        for x in &self.expectations {
            fragment("expectations.path", &x.path)?;
            fragment("expectations.value", &x.value)?;
            if Cmp::from_symbol(&x.op).is_none() {
                return Err(InputError::single(
                    "FormField",
                    format!("expectations.op: unknown comparison `{}`", x.op),
                ));
            }
            text.push_str(&format!("{} {} {}\n", x.path, x.op, x.value));
        }
        text.push_str("}\n}\n");
        let mut suite = load_suite("case", &text)?;
        let case = suite.cases.pop().expect("one testcase was assembled");
        let shape = (
            case.contracts.len(),
            case.accounts.len(),
            case.prestate.len(),
            case.events.len(),
            case.expectations.len(),
        );
        let wanted = (
            names.len(),
            self.accounts.len(),
            self.prestate.len(),
            self.events.len(),
            self.expectations.len(),
        );
        if !suite.cases.is_empty() || shape != wanted {
            return Err(InputError::single(
                "FormField",
                "fragments changed the case structure".into(),
            ));
        }
        Ok(case)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use kaya_core::dbdl::parse_dbdl;

    fn sources() -> Vec<(String, String)> {
        vec![("C".into(), "c.msol".into())]
    }

    #[test]
    fn form_round_trips_through_a_case() {
        let suite = parse_dbdl(
            r#"testcase "t" { contract C from "c.msol" account a { balance: 2 ether }
               prestate { C.m[a] = 5 } events { call C.f(1, a) from a value 3 wei }
               expect { C.x >= 2 } }"#,
        )
        .unwrap();
        let form = CaseForm::from_case(&suite.cases[0]);
        assert_eq!(form.into_case(&sources()).unwrap(), suite.cases[0]);
    }

    #[test]
    fn rejects_structure_smuggling() {
        let form = CaseForm {
            name: "t".into(),
            events: vec![EventForm {
                call: "C.f() from a } testcase \"u\" { contract C from \"x\" events { call C.f()"
                    .into(),
                from: "a".into(),
                value: None,
            }],
            ..CaseForm::default()
        };
        assert!(form.into_case(&sources()).is_err());
    }

    #[test]
    fn reports_syntax_positions() {
        let form = CaseForm {
            name: "t".into(),
            events: vec![EventForm {
                call: "C.f(".into(),
                from: "a".into(),
                value: None,
            }],
            ..CaseForm::default()
        };
        let err = form.into_case(&sources()).unwrap_err();
        assert!(err.diagnostics[0].line.is_some());
    }
}
