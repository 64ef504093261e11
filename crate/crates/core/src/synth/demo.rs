//! Demo grammar for a CS1-style problem: sum the even numbers of a list.
//!
//! Variable names are chosen once per program (one nonterminal family per
//! name combination) so generated code stays self-consistent. Labels mark
//! the structure used and every bug injected.

use std::collections::BTreeMap;

use super::{Grammar, Production, Symbol};

const ACCUMULATORS: &[(&str, f64)] = &[
    ("total", 5.0),
    ("result", 3.0),
    ("s", 2.0),
    ("evens_sum", 1.0),
    ("answer", 1.0),
    ("acc", 1.0),
];
const ITEMS: &[(&str, f64)] = &[
    ("num", 5.0),
    ("n", 3.0),
    ("x", 3.0),
    ("value", 1.0),
    ("elem", 1.0),
    ("i", 1.0),
];
const INDICES: &[(&str, f64)] = &[("i", 5.0), ("idx", 2.0), ("j", 1.0)];

struct Builder {
    rules: BTreeMap<String, Vec<Production>>,
}

fn p(weight: f64, body: Vec<Symbol>, labels: &[&str]) -> Production {
    Production {
        weight,
        body,
        labels: labels.iter().map(|s| s.to_string()).collect(),
    }
}

fn t(s: impl Into<String>) -> Symbol {
    Symbol::t(s)
}

fn nt(s: impl Into<String>) -> Symbol {
    Symbol::nt(s)
}

fn pad(n: usize) -> String {
    " ".repeat(n)
}

/// Nonterminal-name-safe key for an item expression.
fn key(expr: &str) -> String {
    expr.replace("nums[", "at_").replace(']', "")
}

impl Builder {
    fn rule(&mut self, name: impl Into<String>, prods: Vec<Production>) -> String {
        let name = name.into();
        self.rules.entry(name.clone()).or_insert(prods);
        name
    }

    fn init(&mut self) -> String {
        self.rule(
            "INIT",
            vec![
                p(8.0, vec![t("0")], &[]),
                p(1.0, vec![t("1")], &["wrong-initial-value"]),
                p(1.0, vec![t("nums[0]")], &["wrong-initial-value"]),
            ],
        )
    }

    fn parity(&mut self, expr: &str) -> String {
        self.rule(
            format!("COND_{}", key(expr)),
            vec![
                p(8.0, vec![t(format!("{expr} % 2 == 0"))], &[]),
                p(1.0, vec![t(format!("{expr} % 2 != 1"))], &[]),
                p(1.0, vec![t(format!("not {expr} % 2"))], &[]),
                p(2.0, vec![t(format!("{expr} % 2 == 1"))], &["sums-odd-numbers"]),
                p(1.0, vec![t(format!("{expr} % 2"))], &["sums-odd-numbers"]),
                p(1.0, vec![t(format!("{expr} // 2 == 0"))], &["wrong-parity-check"]),
            ],
        )
    }

    fn update(&mut self, acc: &str, expr: &str, indent: usize) -> String {
        let ind = pad(indent);
        self.rule(
            format!("UPD_{acc}_{}_{indent}", key(expr)),
            vec![
                p(6.0, vec![t(format!("{ind}{acc} += {expr}\n"))], &[]),
                p(3.0, vec![t(format!("{ind}{acc} = {acc} + {expr}\n"))], &[]),
                p(1.0, vec![t(format!("{ind}{acc} += 1\n"))], &["counts-instead-of-sums"]),
                p(1.0, vec![t(format!("{ind}{acc} = {expr}\n"))], &["overwrites-accumulator"]),
            ],
        )
    }

    /// Optional even check followed by the accumulator update.
    fn cond_update(&mut self, acc: &str, expr: &str) -> String {
        let cond = self.parity(expr);
        let inner = self.update(acc, expr, 12);
        let bare = self.update(acc, expr, 8);
        self.rule(
            format!("CU_{acc}_{}", key(expr)),
            vec![
                p(
                    10.0,
                    vec![t("        if "), nt(cond), t(":\n"), nt(inner)],
                    &["checks-parity"],
                ),
                p(1.0, vec![nt(bare)], &["missing-even-check"]),
            ],
        )
    }

    fn ret(&mut self, acc: &str) -> String {
        self.rule(
            format!("RET_{acc}"),
            vec![
                p(8.0, vec![t(format!("    return {acc}\n"))], &[]),
                p(2.0, vec![t(format!("        return {acc}\n"))], &["returns-inside-loop"]),
                p(1.0, vec![t(format!("    print({acc})\n"))], &["prints-instead-of-returns"]),
                p(1.0, vec![t("")], &["missing-return"]),
            ],
        )
    }

    fn for_each(&mut self) -> String {
        let mut prods = Vec::new();
        for &(acc, wa) in ACCUMULATORS {
            for &(item, wi) in ITEMS {
                let init = self.init();
                let cu = self.cond_update(acc, item);
                let ret = self.ret(acc);
                prods.push(p(
                    wa * wi,
                    vec![
                        t(format!("    {acc} = ")),
                        nt(init),
                        t(format!("\n    for {item} in nums:\n")),
                        nt(cu),
                        nt(ret),
                    ],
                    &[],
                ));
            }
        }
        self.rule("FOR_EACH", prods)
    }

    fn for_index(&mut self) -> String {
        let mut prods = Vec::new();
        for &(acc, wa) in ACCUMULATORS {
            for &(idx, wi) in INDICES {
                let range = self.rule(
                    "RANGE",
                    vec![
                        p(8.0, vec![t("range(len(nums))")], &[]),
                        p(1.0, vec![t("range(1, len(nums))")], &["skips-first-element"]),
                        p(1.0, vec![t("range(len(nums) - 1)")], &["off-by-one"]),
                    ],
                );
                let init = self.init();
                let cu = self.cond_update(acc, &format!("nums[{idx}]"));
                let ret = self.ret(acc);
                prods.push(p(
                    wa * wi,
                    vec![
                        t(format!("    {acc} = ")),
                        nt(init),
                        t(format!("\n    for {idx} in ")),
                        nt(range),
                        t(":\n"),
                        nt(cu),
                        nt(ret),
                    ],
                    &[],
                ));
            }
        }
        self.rule("FOR_INDEX", prods)
    }

    fn while_loop(&mut self) -> String {
        let mut prods = Vec::new();
        for &(acc, wa) in ACCUMULATORS {
            for &(idx, wi) in INDICES {
                let init = self.init();
                let wcond = self.rule(
                    format!("WCOND_{idx}"),
                    vec![
                        p(8.0, vec![t(format!("{idx} < len(nums)"))], &[]),
                        p(1.0, vec![t(format!("{idx} <= len(nums)"))], &["off-by-one"]),
                    ],
                );
                let cu = self.cond_update(acc, &format!("nums[{idx}]"));
                let inc = self.rule(
                    format!("INC_{idx}"),
                    vec![
                        p(8.0, vec![t(format!("        {idx} += 1\n"))], &[]),
                        p(2.0, vec![t(format!("        {idx} = {idx} + 1\n"))], &[]),
                        p(1.0, vec![t("")], &["missing-increment"]),
                    ],
                );
                let ret = self.ret(acc);
                prods.push(p(
                    wa * wi,
                    vec![
                        t(format!("    {acc} = ")),
                        nt(init),
                        t(format!("\n    {idx} = 0\n    while ")),
                        nt(wcond),
                        t(":\n"),
                        nt(cu),
                        nt(inc),
                        nt(ret),
                    ],
                    &[],
                ));
            }
        }
        self.rule("WHILE", prods)
    }

    fn comprehension(&mut self) -> String {
        let mut prods = Vec::new();
        for &(item, wi) in ITEMS {
            let cond = self.rule(
                format!("CCOND_{item}"),
                vec![
                    p(8.0, vec![t(format!(" if {item} % 2 == 0"))], &["checks-parity"]),
                    p(1.0, vec![t(format!(" if not {item} % 2"))], &["checks-parity"]),
                    p(2.0, vec![t(format!(" if {item} % 2 == 1"))], &["checks-parity", "sums-odd-numbers"]),
                    p(1.0, vec![t("")], &["missing-even-check"]),
                ],
            );
            let gen = format!("{item} for {item} in nums");
            let inner = self.rule(
                format!("GEN_{item}"),
                vec![
                    p(2.0, vec![t(format!("[{gen}")), nt(&cond), t("]")], &[]),
                    p(1.0, vec![t(gen.clone()), nt(&cond)], &[]),
                ],
            );
            prods.push(p(
                wi * 4.0,
                vec![t("    return sum("), nt(&inner), t(")\n")],
                &[],
            ));
            prods.push(p(
                wi,
                vec![t("    print(sum("), nt(&inner), t("))\n")],
                &["prints-instead-of-returns"],
            ));
        }
        self.rule("COMPREHENSION", prods)
    }
}

/// Builds the demo grammar. Its derivation count exceeds 120,000.
pub fn demo_grammar() -> Grammar {
    let mut b = Builder {
        rules: BTreeMap::new(),
    };
    let for_each = b.for_each();
    let for_index = b.for_index();
    let while_loop = b.while_loop();
    let comprehension = b.comprehension();
    b.rule(
        "BODY",
        vec![
            p(5.0, vec![nt(for_each)], &["uses-for-loop", "uses-accumulator"]),
            p(2.0, vec![nt(for_index)], &["uses-for-loop", "uses-index", "uses-accumulator"]),
            p(2.0, vec![nt(while_loop)], &["uses-while-loop", "uses-index", "uses-accumulator"]),
            p(2.0, vec![nt(comprehension)], &["uses-comprehension"]),
        ],
    );
    b.rule(
        "DOC",
        vec![
            p(6.0, vec![t("")], &[]),
            p(
                2.0,
                vec![t("    \"\"\"Return the sum of the even numbers in nums.\"\"\"\n")],
                &[],
            ),
            p(2.0, vec![t("    # add up the even numbers\n")], &[]),
        ],
    );
    b.rule(
        "GUARD",
        vec![
            p(6.0, vec![t("")], &[]),
            p(2.0, vec![t("    if not nums:\n        return 0\n")], &["checks-empty-input"]),
            p(1.0, vec![t("    if len(nums) == 0:\n        return 0\n")], &["checks-empty-input"]),
        ],
    );
    b.rule(
        "S",
        vec![p(
            1.0,
            vec![t("def sum_evens(nums):\n"), nt("DOC"), nt("GUARD"), nt("BODY")],
            &[],
        )],
    );
    Grammar {
        start: "S".into(),
        max_depth: 64,
        rules: b.rules,
    }
}
