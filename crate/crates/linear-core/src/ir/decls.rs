use std::collections::HashMap;

use thiserror::Error;

use super::{subst_mult_ty, Mult, Name, Ty};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CtorDecl {
    pub name: String,
    pub fields: Vec<(Ty, Mult)>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DataDecl {
    pub tycon: String,
    pub params: Vec<Name>,
    pub ctors: Vec<CtorDecl>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SigError {
    #[error("unknown constructor {0}")]
    UnknownConstructor(String),
    #[error("{tycon} expects {expected} multiplicity arguments, got {found}")]
    ArityMismatch { tycon: String, expected: usize, found: usize },
    #[error("constructor {0} declared twice")]
    DuplicateConstructor(String),
    #[error("type {0} declared twice")]
    DuplicateType(String),
}

/// A constructor's fields after instantiating the datatype's multiplicity
/// parameters.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CtorSig {
    pub tycon: String,
    pub fields: Vec<(Ty, Mult)>,
    /// Zero-based positions of the fields whose multiplicity is not ω.
    pub linear: Vec<usize>,
}

#[derive(Clone, Debug, Default)]
pub struct Decls {
    decls: Vec<DataDecl>,
    ctors: HashMap<String, (usize, usize)>,
}

impl Decls {
    pub fn new(decls: Vec<DataDecl>) -> Result<Decls, SigError> {
        let mut ctors = HashMap::new();
        for (i, d) in decls.iter().enumerate() {
            if decls[..i].iter().any(|o| o.tycon == d.tycon) {
                return Err(SigError::DuplicateType(d.tycon.clone()));
            }
            for (j, c) in d.ctors.iter().enumerate() {
                if ctors.insert(c.name.clone(), (i, j)).is_some() {
                    return Err(SigError::DuplicateConstructor(c.name.clone()));
                }
            }
        }
        Ok(Decls { decls, ctors })
    }

    pub fn iter(&self) -> impl Iterator<Item = &DataDecl> {
        self.decls.iter()
    }

    pub fn data(&self, tycon: &str) -> Option<&DataDecl> {
        self.decls.iter().find(|d| d.tycon == tycon)
    }

    pub fn ctor(&self, k: &str) -> Option<(&DataDecl, &CtorDecl)> {
        let &(i, j) = self.ctors.get(k)?;
        Some((&self.decls[i], &self.decls[i].ctors[j]))
    }

    pub fn ctor_signature(&self, k: &str, mult_args: &[Mult]) -> Result<CtorSig, SigError> {
        let (d, c) = self.ctor(k).ok_or_else(|| SigError::UnknownConstructor(k.to_string()))?;
        if d.params.len() != mult_args.len() {
            return Err(SigError::ArityMismatch {
                tycon: d.tycon.clone(),
                expected: d.params.len(),
                found: mult_args.len(),
            });
        }
        let inst = |m: &Mult| match m {
            Mult::Var(p) => d
                .params
                .iter()
                .position(|q| q == p)
                .map_or_else(|| m.clone(), |i| mult_args[i].clone()),
            _ => m.clone(),
        };
        let fields: Vec<(Ty, Mult)> = c
            .fields
            .iter()
            .map(|(t, m)| {
                let t = d
                    .params
                    .iter()
                    .zip(mult_args)
                    .fold(t.clone(), |t, (p, a)| subst_mult_ty(&t, p, a));
                (t, inst(m))
            })
            .collect();
        let linear = fields
            .iter()
            .enumerate()
            .filter(|(_, (_, m))| m.is_linear())
            .map(|(i, _)| i)
            .collect();
        Ok(CtorSig { tycon: d.tycon.clone(), fields, linear })
    }

    /// `∀p̄. σ₁ →π₁ … → T p̄`.
    pub fn ctor_type(&self, k: &str) -> Result<Ty, SigError> {
        let (d, c) = self.ctor(k).ok_or_else(|| SigError::UnknownConstructor(k.to_string()))?;
        let res = Ty::Data(d.tycon.clone(), d.params.iter().cloned().map(Mult::Var).collect());
        let body = c
            .fields
            .iter()
            .rev()
            .fold(res, |acc, (t, m)| Ty::fun(t.clone(), m.clone(), acc));
        Ok(d.params.iter().rev().fold(body, |acc, p| Ty::Forall(p.clone(), Box::new(acc))))
    }

    /// Number of fields that are not ω, without instantiation: a field of
    /// parameter multiplicity counts as linear.
    pub fn linear_arity(&self, k: &str) -> Option<usize> {
        let (_, c) = self.ctor(k)?;
        Some(c.fields.iter().filter(|(_, m)| m.is_linear()).count())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pair_decl() -> (Decls, Name, Name) {
        let p = Name::fresh("p");
        let q = Name::fresh("q");
        let d = DataDecl {
            tycon: "Pair".into(),
            params: vec![p.clone(), q.clone()],
            ctors: vec![CtorDecl {
                name: "MkPair".into(),
                fields: vec![(Ty::data("a"), Mult::Var(p.clone())), (Ty::data("b"), Mult::Var(q.clone()))],
            }],
        };
        (Decls::new(vec![d]).unwrap(), p, q)
    }

    #[test]
    fn instantiates_parameters() {
        let (decls, _, _) = pair_decl();
        let sig = decls.ctor_signature("MkPair", &[Mult::One, Mult::One]).unwrap();
        assert_eq!(sig.fields, vec![(Ty::data("a"), Mult::One), (Ty::data("b"), Mult::One)]);
        assert_eq!(sig.linear, vec![0, 1]);
        let sig = decls.ctor_signature("MkPair", &[Mult::Many, Mult::One]).unwrap();
        assert_eq!(sig.linear, vec![1]);
    }

    #[test]
    fn signature_errors() {
        let (decls, _, _) = pair_decl();
        assert_eq!(
            decls.ctor_signature("Nope", &[]),
            Err(SigError::UnknownConstructor("Nope".into()))
        );
        assert!(matches!(
            decls.ctor_signature("MkPair", &[Mult::One]),
            Err(SigError::ArityMismatch { expected: 2, found: 1, .. })
        ));
    }

    #[test]
    fn duplicate_constructors_rejected() {
        let c = CtorDecl { name: "K".into(), fields: vec![] };
        let a = DataDecl { tycon: "A".into(), params: vec![], ctors: vec![c.clone()] };
        let b = DataDecl { tycon: "B".into(), params: vec![], ctors: vec![c] };
        assert!(matches!(Decls::new(vec![a, b]), Err(SigError::DuplicateConstructor(_))));
    }

    #[test]
    fn ctor_type_quantifies_parameters() {
        let (decls, p, q) = pair_decl();
        let t = decls.ctor_type("MkPair").unwrap();
        let expected = Ty::Forall(
            p.clone(),
            Box::new(Ty::Forall(
                q.clone(),
                Box::new(Ty::fun(
                    Ty::data("a"),
                    Mult::Var(p.clone()),
                    Ty::fun(
                        Ty::data("b"),
                        Mult::Var(q.clone()),
                        Ty::Data("Pair".into(), vec![Mult::Var(p), Mult::Var(q)]),
                    ),
                )),
            )),
        );
        assert_eq!(t, expected);
    }
}
