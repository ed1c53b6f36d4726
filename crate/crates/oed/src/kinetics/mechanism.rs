//! Species tables, elementary reactions, and the bundled mechanism.
//!
//! A [`Mechanism`] couples a species list (molecular weights, element
//! composition, NASA-7 thermodynamics) with a list of elementary
//! reactions in modified Arrhenius form. Both halves load from plain
//! text formats documented in the bundled data files; every reaction is
//! element-balance checked at load time, so a constructed mechanism
//! conserves mass by construction.

use std::collections::HashMap;

use super::thermo::Nasa7;
use crate::{Error, Result};

/// One chemical species: identity, weight, element makeup, thermo fit.
#[derive(Debug, Clone)]
pub struct SpeciesData {
    pub name: String,
    /// Molecular weight in kg/kmol.
    pub weight: f64,
    /// Element symbol with its atom count in one molecule.
    pub composition: Vec<(String, u32)>,
    pub thermo: Nasa7,
}

impl SpeciesData {
    /// Atoms of `element` in one molecule of this species.
    pub fn element_count(&self, element: &str) -> u32 {
        self.composition
            .iter()
            .find(|(e, _)| e == element)
            .map_or(0, |&(_, n)| n)
    }
}

/// One elementary reaction in modified Arrhenius form.
///
/// Stoichiometric coefficients are stored as (species index, count)
/// pairs against the owning mechanism's species list. `a` is in
/// (m^3/kmol)^(order-1)/s with any third body counted in the order,
/// and `ea` is in J/kmol.
#[derive(Debug, Clone)]
pub struct Reaction {
    /// The equation as written in the mechanism file.
    pub equation: String,
    pub reactants: Vec<(usize, u32)>,
    pub products: Vec<(usize, u32)>,
    pub a: f64,
    pub b: f64,
    pub ea: f64,
    /// False for '->' reactions, whose reverse rate is zero.
    pub reversible: bool,
    /// True when an 'M' collider appears on both sides.
    pub third_body: bool,
    /// Per-species collider efficiencies, 1.0 unless listed.
    pub efficiencies: Vec<f64>,
    /// Mole change: sum of product minus reactant coefficients.
    pub dnu: i32,
}

/// A species list plus a reaction list, validated together.
#[derive(Debug, Clone)]
pub struct Mechanism {
    pub species: Vec<SpeciesData>,
    pub reactions: Vec<Reaction>,
    elements: Vec<String>,
    index: HashMap<String, usize>,
}

impl Mechanism {
    /// Parse a thermo table and a reaction table.
    ///
    /// Formats are documented in the bundled data files. Errors carry
    /// 1-based line numbers into the offending text.
    pub fn parse(thermo_text: &str, mech_text: &str) -> Result<Self> {
        let species = parse_thermo(thermo_text)?;
        if species.is_empty() {
            return Err(Error::BadMechanism {
                reason: "no species in thermo data".into(),
            });
        }
        let mut index = HashMap::new();
        for (j, s) in species.iter().enumerate() {
            if index.insert(s.name.clone(), j).is_some() {
                return Err(Error::BadMechanism {
                    reason: format!("duplicate species {:?}", s.name),
                });
            }
        }
        let reactions = parse_reactions(mech_text, &species, &index)?;

        let mut elements: Vec<String> = Vec::new();
        for s in &species {
            for (e, _) in &s.composition {
                if !elements.contains(e) {
                    elements.push(e.clone());
                }
            }
        }
        elements.sort();

        let mech = Mechanism {
            species,
            reactions,
            elements,
            index,
        };
        mech.check_element_balance()?;
        Ok(mech)
    }

    /// The bundled 19-reaction hydrogen-oxygen mechanism.
    pub fn builtin() -> Mechanism {
        Mechanism::parse(
            include_str!("../../data/thermo_h2o2.dat"),
            include_str!("../../data/mech_h2o2_19.dat"),
        )
        .expect("bundled mechanism data is valid")
    }

    pub fn n_species(&self) -> usize {
        self.species.len()
    }

    /// Element symbols appearing anywhere in the species list, sorted.
    pub fn elements(&self) -> &[String] {
        &self.elements
    }

    /// Index of a species by name.
    pub fn species_index(&self, name: &str) -> Result<usize> {
        self.index
            .get(name)
            .copied()
            .ok_or_else(|| Error::UnknownSpecies { name: name.into() })
    }

    fn check_element_balance(&self) -> Result<()> {
        for (m, r) in self.reactions.iter().enumerate() {
            for e in &self.elements {
                let mut net: i64 = 0;
                for &(j, nu) in &r.products {
                    net += i64::from(nu) * i64::from(self.species[j].element_count(e));
                }
                for &(j, nu) in &r.reactants {
                    net -= i64::from(nu) * i64::from(self.species[j].element_count(e));
                }
                if net != 0 {
                    return Err(Error::ElementImbalance {
                        index: m,
                        element: e.clone(),
                        net: net as f64,
                    });
                }
            }
        }
        Ok(())
    }
}

/// Meaningful lines of a data file: (1-based line number, trimmed text).
fn data_lines(text: &str) -> Vec<(usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
        .collect()
}

fn parse_f64(token: &str, line: usize, what: &str) -> Result<f64> {
    token.parse::<f64>().map_err(|_| Error::Parse {
        line,
        reason: format!("expected a number for {what}, got {token:?}"),
    })
}

fn parse_thermo(text: &str) -> Result<Vec<SpeciesData>> {
    let lines = data_lines(text);
    let mut species = Vec::new();
    let mut it = lines.into_iter();
    while let Some((line, head)) = it.next() {
        let tokens: Vec<&str> = head.split_whitespace().collect();
        if tokens[0] != "species" {
            return Err(Error::Parse {
                line,
                reason: format!("expected a 'species' record, got {:?}", tokens[0]),
            });
        }
        if tokens.len() < 6 {
            return Err(Error::Parse {
                line,
                reason: "species record needs name, weight, composition, and three temperatures"
                    .into(),
            });
        }
        let name = tokens[1].to_string();
        let weight = parse_f64(tokens[2], line, "molecular weight")?;
        if !(weight > 0.0) {
            return Err(Error::Parse {
                line,
                reason: format!("molecular weight of {name} must be positive, got {weight}"),
            });
        }
        let mut composition = Vec::new();
        let mut rest = &tokens[3..];
        while let Some((tok, tail)) = rest.split_first() {
            let Some((elem, count)) = tok.split_once(':') else {
                break;
            };
            let count: u32 = count.parse().map_err(|_| Error::Parse {
                line,
                reason: format!("bad element count in {tok:?}"),
            })?;
            composition.push((elem.to_string(), count));
            rest = tail;
        }
        if composition.is_empty() {
            return Err(Error::Parse {
                line,
                reason: format!("species {name} lists no element composition"),
            });
        }
        if rest.len() != 3 {
            return Err(Error::Parse {
                line,
                reason: format!(
                    "species {name} needs exactly three temperatures after the composition"
                ),
            });
        }
        let t_low = parse_f64(rest[0], line, "T_low")?;
        let t_mid = parse_f64(rest[1], line, "T_mid")?;
        let t_high = parse_f64(rest[2], line, "T_high")?;
        if !(0.0 < t_low && t_low < t_mid && t_mid < t_high) {
            return Err(Error::Parse {
                line,
                reason: format!("temperatures of {name} must satisfy 0 < T_low < T_mid < T_high"),
            });
        }

        let low = parse_coeff_line(it.next(), "low")?;
        let high = parse_coeff_line(it.next(), "high")?;
        species.push(SpeciesData {
            name,
            weight,
            composition,
            thermo: Nasa7 {
                t_low,
                t_mid,
                t_high,
                low,
                high,
            },
        });
    }
    Ok(species)
}

fn parse_coeff_line(entry: Option<(usize, &str)>, keyword: &str) -> Result<[f64; 7]> {
    let Some((line, text)) = entry else {
        return Err(Error::Parse {
            line: 0,
            reason: format!("missing '{keyword}' coefficient line at end of thermo data"),
        });
    };
    let tokens: Vec<&str> = text.split_whitespace().collect();
    if tokens.first() != Some(&keyword) || tokens.len() != 8 {
        return Err(Error::Parse {
            line,
            reason: format!("expected '{keyword}' followed by seven coefficients"),
        });
    }
    let mut out = [0.0; 7];
    for (k, tok) in tokens[1..].iter().enumerate() {
        out[k] = parse_f64(tok, line, "NASA-7 coefficient")?;
    }
    Ok(out)
}

/// One side of an equation: stoichiometric pairs plus the M-collider count.
fn parse_side(
    side: &str,
    line: usize,
    index: &HashMap<String, usize>,
) -> Result<(Vec<(usize, u32)>, u32)> {
    let mut stoich: Vec<(usize, u32)> = Vec::new();
    let mut m_count = 0;
    for token in side.split('+') {
        let token = token.trim();
        if token.is_empty() {
            return Err(Error::Parse {
                line,
                reason: "empty species token in equation".into(),
            });
        }
        if token == "M" {
            m_count += 1;
            continue;
        }
        let Some(&j) = index.get(token) else {
            return Err(Error::UnknownSpecies {
                name: token.into(),
            });
        };
        match stoich.iter_mut().find(|(s, _)| *s == j) {
            Some((_, nu)) => *nu += 1,
            None => stoich.push((j, 1)),
        }
    }
    Ok((stoich, m_count))
}

fn parse_reactions(
    text: &str,
    species: &[SpeciesData],
    index: &HashMap<String, usize>,
) -> Result<Vec<Reaction>> {
    let mut reactions = Vec::new();
    for (line, record) in data_lines(text) {
        let fields: Vec<&str> = record.split(';').map(str::trim).collect();
        if fields.len() < 2 || fields.len() > 3 {
            return Err(Error::Parse {
                line,
                reason: "expected 'equation ; A b Ea [; third_body ...]'".into(),
            });
        }

        let equation = fields[0];
        let (lhs, rhs, reversible) = if let Some((l, r)) = equation.split_once("->") {
            (l, r, false)
        } else if let Some((l, r)) = equation.split_once('=') {
            (l, r, true)
        } else {
            return Err(Error::Parse {
                line,
                reason: format!("equation {equation:?} has no '=' or '->'"),
            });
        };
        let (reactants, m_left) = parse_side(lhs, line, index)?;
        let (products, m_right) = parse_side(rhs, line, index)?;
        if m_left != m_right || m_left > 1 {
            return Err(Error::BadMechanism {
                reason: format!(
                    "reaction {equation:?} must list 'M' exactly once on both sides or not at all"
                ),
            });
        }
        if reactants.is_empty() || products.is_empty() {
            return Err(Error::BadMechanism {
                reason: format!("reaction {equation:?} has an empty side"),
            });
        }
        let third_body = m_left == 1;

        let arr: Vec<&str> = fields[1].split_whitespace().collect();
        if arr.len() != 3 {
            return Err(Error::Parse {
                line,
                reason: "Arrhenius field must hold exactly A, b, Ea".into(),
            });
        }
        let a = parse_f64(arr[0], line, "A")?;
        let b = parse_f64(arr[1], line, "b")?;
        let ea = parse_f64(arr[2], line, "Ea")?;
        if !(a > 0.0) {
            return Err(Error::Parse {
                line,
                reason: format!("pre-exponential factor must be positive, got {a}"),
            });
        }

        let mut efficiencies = vec![1.0; species.len()];
        if fields.len() == 3 {
            if !third_body {
                return Err(Error::BadMechanism {
                    reason: format!(
                        "reaction {equation:?} lists efficiencies but has no 'M' collider"
                    ),
                });
            }
            let tokens: Vec<&str> = fields[2].split_whitespace().collect();
            if tokens.first() != Some(&"third_body") {
                return Err(Error::Parse {
                    line,
                    reason: "efficiency field must start with 'third_body'".into(),
                });
            }
            for pair in &tokens[1..] {
                let Some((name, eff)) = pair.split_once(':') else {
                    return Err(Error::Parse {
                        line,
                        reason: format!("bad efficiency pair {pair:?}"),
                    });
                };
                let Some(&j) = index.get(name) else {
                    return Err(Error::UnknownSpecies { name: name.into() });
                };
                efficiencies[j] = parse_f64(eff, line, "efficiency")?;
            }
        }

        let dnu = products.iter().map(|&(_, nu)| i32::try_from(nu).unwrap()).sum::<i32>()
            - reactants.iter().map(|&(_, nu)| i32::try_from(nu).unwrap()).sum::<i32>();

        reactions.push(Reaction {
            equation: equation.to_string(),
            reactants,
            products,
            a,
            b,
            ea,
            reversible,
            third_body,
            efficiencies,
            dnu,
        });
    }
    Ok(reactions)
}

#[cfg(test)]
mod tests {
    use super::super::thermo::{cp_r_from, h_rt_from, s_r_from};
    use super::*;

    #[test]
    fn builtin_mechanism_loads_and_is_well_formed() {
        let mech = Mechanism::builtin();
        assert_eq!(mech.n_species(), 8);
        assert_eq!(mech.reactions.len(), 19);
        assert_eq!(mech.elements(), ["H", "O"]);
        assert_eq!(mech.reactions[0].equation, "H + O2 = O + OH");
        assert!(mech.reactions.iter().all(|r| r.reversible));

        let third: Vec<usize> = mech
            .reactions
            .iter()
            .enumerate()
            .filter(|(_, r)| r.third_body)
            .map(|(m, _)| m)
            .collect();
        assert_eq!(third, [4, 5, 6, 7, 8, 14]);
        let h2 = mech.species_index("H2").unwrap();
        let h2o = mech.species_index("H2O").unwrap();
        let o2 = mech.species_index("O2").unwrap();
        for &m in &third {
            assert_eq!(mech.reactions[m].efficiencies[h2], 2.5);
            assert_eq!(mech.reactions[m].efficiencies[h2o], 12.0);
            assert_eq!(mech.reactions[m].efficiencies[o2], 1.0);
        }

        assert_eq!(mech.reactions[0].dnu, 0);
        assert_eq!(mech.reactions[4].dnu, 1);
        assert_eq!(mech.reactions[8].dnu, -1);
    }

    #[test]
    fn duplicate_species_tokens_accumulate_stoichiometry() {
        let mech = Mechanism::builtin();
        let oh = mech.species_index("OH").unwrap();
        let r4 = &mech.reactions[3];
        assert_eq!(r4.equation, "OH + OH = O + H2O");
        assert_eq!(r4.reactants, [(oh, 2)]);
    }

    #[test]
    fn thermo_is_continuous_at_the_range_switch() {
        let mech = Mechanism::builtin();
        for s in &mech.species {
            let t = s.thermo.t_mid;
            let pairs = [
                (cp_r_from(&s.thermo.low, t), cp_r_from(&s.thermo.high, t)),
                (h_rt_from(&s.thermo.low, t), h_rt_from(&s.thermo.high, t)),
                (s_r_from(&s.thermo.low, t), s_r_from(&s.thermo.high, t)),
            ];
            for (lo, hi) in pairs {
                assert!(
                    (lo - hi).abs() <= 1e-3 * lo.abs().max(hi.abs()),
                    "{} jumps at T_mid: {lo} vs {hi}",
                    s.name
                );
            }
        }
    }

    const TOY_THERMO: &str = "\
species A 10.0 H:2 200.0 1000.0 3500.0
low  2.5 0.0 0.0 0.0 0.0 100.0 1.0
high 2.5 0.0 0.0 0.0 0.0 100.0 1.0
species B 10.0 H:2 200.0 1000.0 3500.0
low  2.5 0.0 0.0 0.0 0.0 100.0 1.0
high 2.5 0.0 0.0 0.0 0.0 100.0 1.0
";

    #[test]
    fn unbalanced_reaction_is_rejected() {
        let thermo = "\
species H 1.0 H:1 200.0 1000.0 3500.0
low  2.5 0.0 0.0 0.0 0.0 0.0 0.0
high 2.5 0.0 0.0 0.0 0.0 0.0 0.0
species H2 2.0 H:2 200.0 1000.0 3500.0
low  2.5 0.0 0.0 0.0 0.0 0.0 0.0
high 2.5 0.0 0.0 0.0 0.0 0.0 0.0
";
        let err = Mechanism::parse(thermo, "H2 = H ; 1.0 0.0 0.0\n").unwrap_err();
        match err {
            Error::ElementImbalance { element, net, .. } => {
                assert_eq!(element, "H");
                assert_eq!(net, -1.0);
            }
            other => panic!("expected ElementImbalance, got {other}"),
        }
    }

    #[test]
    fn unknown_species_is_rejected() {
        let err = Mechanism::parse(TOY_THERMO, "A + XE = B + XE ; 1.0 0.0 0.0\n").unwrap_err();
        assert!(matches!(err, Error::UnknownSpecies { name } if name == "XE"));
    }

    #[test]
    fn malformed_records_report_line_numbers() {
        let err = Mechanism::parse(TOY_THERMO, "\n# comment\nA = B ; 1.0 zero 0.0\n").unwrap_err();
        match err {
            Error::Parse { line, reason } => {
                assert_eq!(line, 3);
                assert!(reason.contains("zero"));
            }
            other => panic!("expected Parse, got {other}"),
        }

        let bad_thermo = "\
species A 10.0 H:2 200.0 1000.0 3500.0
low  2.5 0.0 0.0 0.0 0.0 100.0
high 2.5 0.0 0.0 0.0 0.0 100.0 1.0
";
        let err = Mechanism::parse(bad_thermo, "").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }));
    }

    #[test]
    fn one_sided_collider_is_rejected() {
        let err = Mechanism::parse(TOY_THERMO, "A + M = B ; 1.0 0.0 0.0\n").unwrap_err();
        assert!(matches!(err, Error::BadMechanism { .. }));

        let err =
            Mechanism::parse(TOY_THERMO, "A = B ; 1.0 0.0 0.0 ; third_body A:2.0\n").unwrap_err();
        assert!(matches!(err, Error::BadMechanism { .. }));
    }

    #[test]
    fn zero_reaction_mechanism_is_allowed() {
        let mech = Mechanism::parse(TOY_THERMO, "# nothing here\n").unwrap();
        assert_eq!(mech.reactions.len(), 0);
        assert_eq!(mech.n_species(), 2);
    }

    #[test]
    fn irreversible_marker_is_parsed() {
        let mech = Mechanism::parse(TOY_THERMO, "A -> B ; 1000.0 0.0 0.0\n").unwrap();
        assert!(!mech.reactions[0].reversible);
    }
}
