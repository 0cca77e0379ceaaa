//! Derives the propeller gluing tables used by `build_propeller_pair`.
//!
//! Enumerates every edge-coloured tree on seven copies (colour = template
//! side, at most one edge of each colour per copy) up to isomorphism, keeps
//! the pairs admitting a Dirichlet transplantation with three signed entries
//! per row, and reports which of them embed without overlap for the template
//! (0,0), (5,0), (1.8,2.4).
//!
//!     cargo run --release -p drumkit --example derive_propeller

use std::collections::{BTreeMap, VecDeque};

use drumkit::fem::BcKind;
use drumkit::geometry::{CopyLayout, Point2, Triangle, PROPELLER_TREE_1, PROPELLER_TREE_2};
use drumkit::transplant::{search_transplantations, SidePartners};

const N: usize = 7;

fn rooted(t: &SidePartners, v: usize, parent: Option<usize>) -> String {
    let mut kids: Vec<String> = (0..3)
        .filter_map(|s| t[v][s].filter(|&w| Some(w) != parent).map(|w| format!("{s}{}", rooted(t, w, Some(v)))))
        .collect();
    kids.sort();
    format!("({})", kids.concat())
}

fn canonical(t: &SidePartners) -> String {
    (0..t.len()).map(|r| rooted(t, r, None)).min().unwrap()
}

fn enumerate_trees() -> Vec<SidePartners> {
    let mut level: BTreeMap<String, SidePartners> = BTreeMap::new();
    level.insert("()".into(), vec![[None; 3]]);
    for _ in 1..N {
        let mut next = BTreeMap::new();
        for t in level.values() {
            for v in 0..t.len() {
                for s in 0..3 {
                    if t[v][s].is_none() {
                        let mut u = t.clone();
                        u.push([None; 3]);
                        let w = u.len() - 1;
                        u[v][s] = Some(w);
                        u[w][s] = Some(v);
                        next.entry(canonical(&u)).or_insert(u);
                    }
                }
            }
        }
        level = next;
    }
    level.into_values().collect()
}

/// Relabels breadth-first from copy 0 (children by side) into 1-based
/// `(parent, side, child)` triples.
fn to_reflection_tree(t: &SidePartners) -> Vec<(usize, usize, usize)> {
    let mut label = vec![0usize; t.len()];
    label[0] = 1;
    let mut next = 2;
    let mut out = Vec::new();
    let mut q = VecDeque::from([0usize]);
    while let Some(v) = q.pop_front() {
        for s in 0..3 {
            if let Some(w) = t[v][s] {
                if label[w] == 0 {
                    label[w] = next;
                    next += 1;
                    out.push((label[v], s, label[w]));
                    q.push_back(w);
                }
            }
        }
    }
    out
}

fn partners_of(tree: &[(usize, usize, usize)]) -> SidePartners {
    let mut p = vec![[None; 3]; tree.len() + 1];
    for &(a, s, b) in tree {
        p[a - 1][s] = Some(b - 1);
        p[b - 1][s] = Some(a - 1);
    }
    p
}

fn main() {
    let template = Triangle::new(Point2::new(0.0, 0.0), Point2::new(5.0, 0.0), Point2::new(1.8, 2.4)).unwrap();
    let trees = enumerate_trees();
    println!("{} edge-coloured trees on {N} copies up to isomorphism", trees.len());
    let mut pairs = Vec::new();
    for a in 0..trees.len() {
        for b in a + 1..trees.len() {
            let s = search_transplantations(&trees[a], &trees[b], BcKind::Dirichlet, 3).unwrap();
            if !s.solutions.is_empty() {
                pairs.push((a, b, s.solutions.len()));
            }
        }
    }
    println!("{} pairs admit a three-term Dirichlet transplantation", pairs.len());
    let want = {
        let mut w = [canonical(&partners_of(&PROPELLER_TREE_1)), canonical(&partners_of(&PROPELLER_TREE_2))];
        w.sort();
        w
    };
    let mut found_constants = false;
    for (a, b, n_sol) in pairs {
        let (ta, tb) = (to_reflection_tree(&trees[a]), to_reflection_tree(&trees[b]));
        let la = CopyLayout::from_reflection_tree(&template, &ta);
        let lb = CopyLayout::from_reflection_tree(&template, &tb);
        let status = match (&la, &lb) {
            (Ok(la), Ok(lb)) => {
                let (pa, pb) = (la.union_polygon().unwrap(), lb.union_polygon().unwrap());
                if pa.is_congruent_to(&pb, 1e-9) {
                    "embeds, congruent".to_string()
                } else {
                    "embeds, non-congruent".to_string()
                }
            }
            (Err(e), _) | (_, Err(e)) => format!("rejected: {e}"),
        };
        let mut key = [canonical(&trees[a]), canonical(&trees[b])];
        key.sort();
        let is_constant = key == want;
        found_constants |= is_constant;
        println!(
            "{:?}\n{:?}\n  {n_sol} solution(s) up to sign; {status}{}",
            ta,
            tb,
            if is_constant { "  <- PROPELLER_TREE_1/2" } else { "" }
        );
    }
    assert!(found_constants, "the hardcoded trees are not among the derived pairs");
    println!("hardcoded propeller trees confirmed");
}
