use std::collections::{BTreeMap, BTreeSet};

use super::{simple_name, CodeUnit, ImportContext, RawRelation};

/// Outcome of resolving every raw relation in a system.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Resolution {
    /// Relations with `resolved` set, deduplicated on (src, kind, target uid).
    pub resolved: Vec<RawRelation>,
    pub unresolved: Vec<RawRelation>,
    /// Relations whose simple name matched several units, with the candidates.
    pub ambiguous: Vec<(RawRelation, Vec<String>)>,
    /// Relations that resolved back to their own source unit.
    pub internal: Vec<RawRelation>,
    /// Relations whose resolved edge was already produced by another reference.
    pub duplicate: Vec<RawRelation>,
}

/// Resolves relations grouped by the import context of the file they came
/// from. Order: exact uid, context expansion, then a unique simple name
/// across all units.
pub fn resolve_references(units: &[CodeUnit], files: &[(ImportContext, Vec<RawRelation>)]) -> Resolution {
    let uids: BTreeSet<&str> = units.iter().map(|u| u.uid.as_str()).collect();
    let mut by_simple: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    for u in units {
        by_simple.entry(simple_name(&u.uid)).or_default().push(u.uid.as_str());
    }

    let mut out = Resolution::default();
    let mut seen = BTreeSet::new();
    for (ctx, relations) in files {
        for rel in relations {
            let target = if uids.contains(rel.target_ref.as_str()) {
                Some(rel.target_ref.clone())
            } else if let Some(hit) = ctx.expand(&rel.target_ref).into_iter().find(|c| uids.contains(c.as_str())) {
                Some(hit)
            } else {
                match by_simple.get(simple_name(&rel.target_ref)).map(Vec::as_slice) {
                    Some([one]) => Some(one.to_string()),
                    Some(many) if many.len() > 1 => {
                        out.ambiguous.push((rel.clone(), many.iter().map(|s| s.to_string()).collect()));
                        continue;
                    }
                    _ => None,
                }
            };
            let Some(target) = target else {
                out.unresolved.push(rel.clone());
                continue;
            };
            let mut rel = rel.clone();
            if target == rel.src_uid {
                rel.resolved = Some(target);
                out.internal.push(rel);
                continue;
            }
            let fresh = seen.insert((rel.src_uid.clone(), rel.kind, target.clone()));
            rel.resolved = Some(target);
            if fresh {
                out.resolved.push(rel);
            } else {
                out.duplicate.push(rel);
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::extract::{RelationKind, UnitKind};

    fn unit(uid: &str) -> CodeUnit {
        CodeUnit {
            uid: uid.into(),
            kind: UnitKind::Class,
            name: simple_name(uid).into(),
            file: "f".into(),
            span: (1, 1),
            source: String::new(),
            members: vec![],
        }
    }

    fn dep(src: &str, target: &str) -> RawRelation {
        RawRelation::new(src, RelationKind::DependsOn, target)
    }

    #[test]
    fn resolution_order() {
        let units = [unit("m.OrderModel"), unit("p.OrderProcessor"), unit("p.OrderModel")];
        let ctx = ImportContext {
            symbols: BTreeMap::from([("OrderModel".into(), "m.OrderModel".into())]),
            prefixes: vec!["p.".into()],
        };
        let rels = vec![dep("p.OrderProcessor", "OrderModel"), dep("p.OrderProcessor", "p.OrderModel")];
        let r = resolve_references(&units, &[(ctx, rels)]);
        let got: Vec<_> = r.resolved.iter().map(|r| r.resolved.clone().unwrap()).collect();
        assert_eq!(got, ["m.OrderModel", "p.OrderModel"]);
    }

    #[test]
    fn unresolved_ambiguous_internal_and_dedup() {
        let units = [unit("a.Util"), unit("b.Util"), unit("c.Main"), unit("d.Helper")];
        let rels = vec![
            dep("c.Main", "String"),
            dep("c.Main", "Util"),
            dep("c.Main", "Main"),
            dep("c.Main", "Helper"),
            dep("c.Main", "d.Helper"),
        ];
        let r = resolve_references(&units, &[(ImportContext::default(), rels)]);
        assert_eq!(r.unresolved, [dep("c.Main", "String")]);
        assert_eq!(r.ambiguous.len(), 1);
        assert_eq!(r.ambiguous[0].1, ["a.Util", "b.Util"]);
        assert_eq!(r.internal.len(), 1);
        assert_eq!((r.resolved.len(), r.duplicate.len()), (1, 1));
        assert_eq!(r.resolved[0].resolved.as_deref(), Some("d.Helper"));
    }
}
