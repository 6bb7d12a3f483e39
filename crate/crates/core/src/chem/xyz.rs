//! Extended-XYZ ingestion and serialization.
//!
//! A file is a concatenation of blocks: an atom-count line, a comment line
//! holding `key=value` property pairs, then one `element x y z` line per
//! atom. The first comment line may additionally declare units after a
//! literal `#units` marker, e.g. `gap=5.2 #units gap=eV`.

use std::collections::BTreeMap;

use super::{elements, ChemError, Dataset, Molecule, PropertyKind, PropertySpec, PropertyValue};

/// Values made solely of 0/1 characters and at least 8 long are read as
/// bit-vectors; everything else must parse as a scalar.
fn parse_value(raw: &str) -> Option<PropertyValue> {
    if raw.len() >= 8 && raw.chars().all(|c| c == '0' || c == '1') {
        return Some(PropertyValue::Bits(raw.chars().map(|c| c == '1').collect()));
    }
    raw.parse::<f64>().ok().map(PropertyValue::Scalar)
}

fn format_value(value: &PropertyValue) -> String {
    match value {
        PropertyValue::Scalar(v) => format!("{v}"),
        PropertyValue::Bits(bits) => bits.iter().map(|&b| if b { '1' } else { '0' }).collect(),
    }
}

struct CommentLine {
    properties: Vec<(String, PropertyValue)>,
    units: BTreeMap<String, String>,
}

fn parse_comment(line: &str, line_no: usize) -> Result<CommentLine, ChemError> {
    let mut properties = Vec::new();
    let mut units = BTreeMap::new();
    let mut in_units = false;
    for token in line.split_whitespace() {
        if token == "#units" {
            in_units = true;
            continue;
        }
        let (key, raw) = token.split_once('=').ok_or_else(|| ChemError::Parse {
            line: line_no,
            msg: format!("expected key=value pair, got `{token}`"),
        })?;
        if in_units {
            units.insert(key.to_string(), raw.to_string());
        } else {
            let value = parse_value(raw).ok_or_else(|| ChemError::Parse {
                line: line_no,
                msg: format!("property `{key}` has unparseable value `{raw}`"),
            })?;
            properties.push((key.to_string(), value));
        }
    }
    Ok(CommentLine { properties, units })
}

/// Parses a full extended-XYZ stream into a [`Dataset`]. The first block
/// fixes the property schema; later blocks must carry exactly the same keys.
pub fn parse_extended_xyz(text: &str) -> Result<Dataset, ChemError> {
    let lines: Vec<&str> = text.lines().collect();
    let mut dataset = Dataset::default();
    let mut units: BTreeMap<String, String> = BTreeMap::new();
    let mut cursor = 0usize;

    while cursor < lines.len() {
        if lines[cursor].trim().is_empty() {
            cursor += 1;
            continue;
        }
        let count_line_no = cursor + 1;
        let n_atoms: usize = lines[cursor].trim().parse().map_err(|_| ChemError::Parse {
            line: count_line_no,
            msg: format!("malformed atom count `{}`", lines[cursor].trim()),
        })?;
        if n_atoms == 0 {
            return Err(ChemError::Parse {
                line: count_line_no,
                msg: "atom count must be positive".into(),
            });
        }
        if cursor + 1 >= lines.len() {
            return Err(ChemError::Parse {
                line: count_line_no,
                msg: "missing comment line".into(),
            });
        }
        let comment = parse_comment(lines[cursor + 1], cursor + 2)?;
        if dataset.records.is_empty() {
            units = comment.units;
        }

        let mut elements_vec = Vec::with_capacity(n_atoms);
        let mut positions = Vec::with_capacity(n_atoms);
        for k in 0..n_atoms {
            let line_no = cursor + 3 + k;
            let line = lines.get(cursor + 2 + k).ok_or_else(|| ChemError::Parse {
                line: count_line_no,
                msg: format!("block declares {n_atoms} atoms but the stream ends early"),
            })?;
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.len() != 4 {
                return Err(ChemError::Parse {
                    line: line_no,
                    msg: format!("expected `element x y z`, got `{line}`"),
                });
            }
            let z = elements::atomic_number(fields[0]).ok_or_else(|| ChemError::Parse {
                line: line_no,
                msg: format!("unknown element symbol `{}`", fields[0]),
            })?;
            let mut coord = [0.0; 3];
            for (slot, raw) in coord.iter_mut().zip(&fields[1..]) {
                *slot = raw.parse().map_err(|_| ChemError::Parse {
                    line: line_no,
                    msg: format!("non-numeric coordinate `{raw}`"),
                })?;
            }
            elements_vec.push(z);
            positions.push(coord);
        }

        let mut molecule = Molecule::new(elements_vec, positions).map_err(|e| ChemError::Parse {
            line: count_line_no,
            msg: e.to_string(),
        })?;

        if dataset.records.is_empty() {
            for (name, value) in &comment.properties {
                let kind = match value {
                    PropertyValue::Scalar(_) => PropertyKind::Scalar,
                    PropertyValue::Bits(_) => PropertyKind::BitVector,
                };
                dataset.schema.push(PropertySpec {
                    name: name.clone(),
                    kind,
                    unit: units.get(name).cloned(),
                });
            }
        } else {
            for spec in &dataset.schema {
                if !comment.properties.iter().any(|(name, _)| name == &spec.name) {
                    return Err(ChemError::Parse {
                        line: cursor + 2,
                        msg: format!("missing schema property `{}`", spec.name),
                    });
                }
            }
            for (name, _) in &comment.properties {
                if !dataset.schema.iter().any(|spec| &spec.name == name) {
                    return Err(ChemError::Parse {
                        line: cursor + 2,
                        msg: format!("property `{name}` not present in the schema"),
                    });
                }
            }
        }
        for (name, value) in comment.properties {
            molecule.properties.insert(name, value);
        }
        dataset.records.push(molecule);
        cursor += 2 + n_atoms;
    }

    Ok(dataset)
}

/// Serializes a dataset back to extended-XYZ. Unit declarations go on the
/// first block's comment line; parsing the output reproduces the input
/// dataset exactly.
pub fn serialize_extended_xyz(dataset: &Dataset) -> String {
    let mut out = String::new();
    for (idx, molecule) in dataset.records.iter().enumerate() {
        out.push_str(&format!("{}\n", molecule.len()));
        let mut comment_parts = Vec::new();
        for spec in &dataset.schema {
            if let Some(value) = molecule.properties.get(&spec.name) {
                comment_parts.push(format!("{}={}", spec.name, format_value(value)));
            }
        }
        if idx == 0 {
            let with_units: Vec<&PropertySpec> = dataset
                .schema
                .iter()
                .filter(|s| s.unit.is_some())
                .collect();
            if !with_units.is_empty() {
                comment_parts.push("#units".to_string());
                for spec in with_units {
                    comment_parts.push(format!("{}={}", spec.name, spec.unit.as_ref().unwrap()));
                }
            }
        }
        out.push_str(&comment_parts.join(" "));
        out.push('\n');
        for (&z, pos) in molecule.elements.iter().zip(&molecule.positions) {
            out.push_str(&format!(
                "{} {} {} {}\n",
                elements::symbol(z).unwrap_or("?"),
                pos[0],
                pos[1],
                pos[2]
            ));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_block() {
        let dataset = parse_extended_xyz("1\ngap=5.0 #units gap=eV\nC 0 0 0\n").unwrap();
        assert_eq!(dataset.len(), 1);
        assert_eq!(dataset.records[0].elements, vec![6]);
        assert_eq!(
            dataset.records[0].properties.get("gap"),
            Some(&PropertyValue::Scalar(5.0))
        );
        let spec = dataset.property_spec("gap").unwrap();
        assert_eq!(spec.kind, PropertyKind::Scalar);
        assert_eq!(spec.unit.as_deref(), Some("eV"));
    }

    #[test]
    fn short_block_is_an_error() {
        let err = parse_extended_xyz("3\ngap=1.0\nC 0 0 0\nH 1 0 0\n").unwrap_err();
        assert!(err.to_string().contains("ends early"), "{err}");
    }

    #[test]
    fn malformed_count_is_an_error() {
        let err = parse_extended_xyz("x\ngap=1.0\nC 0 0 0\n").unwrap_err();
        assert!(err.to_string().contains("line 1"), "{err}");
    }

    #[test]
    fn unknown_element_is_an_error() {
        let err = parse_extended_xyz("1\ngap=1.0\nQq 0 0 0\n").unwrap_err();
        assert!(err.to_string().contains("Qq"), "{err}");
    }

    #[test]
    fn non_numeric_coordinate_is_an_error() {
        let err = parse_extended_xyz("1\ngap=1.0\nC 0 zero 0\n").unwrap_err();
        assert!(err.to_string().contains("zero"), "{err}");
    }

    #[test]
    fn missing_schema_property_is_an_error() {
        let text = "1\ngap=1.0\nC 0 0 0\n1\nother=2.0\nC 0 0 0\n";
        let err = parse_extended_xyz(text).unwrap_err();
        assert!(err.to_string().contains("gap"), "{err}");
    }

    #[test]
    fn bitvector_property() {
        let bits: String = "10110011".into();
        let text = format!("1\nfp={bits}\nO 0 0 0\n");
        let dataset = parse_extended_xyz(&text).unwrap();
        let got = dataset.records[0].properties.get("fp").unwrap();
        assert_eq!(
            got.as_bits().unwrap(),
            [true, false, true, true, false, false, true, true]
        );
    }

    #[test]
    fn five_molecule_roundtrip() {
        let text = "\
3
gap=5.25 u0=-1.5 #units gap=eV u0=eV
O 0 0 0
H 0.9572 0 0
H -0.239987 0.926627 0
2
gap=3.5 u0=-0.75
N 0 0 0
N 1.0977 0 0
1
gap=-2.25 u0=0.125
F 0.5 -0.25 0.125
4
gap=7.125 u0=-2.25
C 0 0 0
H 1.09 0 0
H -0.363333 1.027662 0
H -0.363333 -0.513831 -0.889981
2
gap=0.5 u0=1.0
C 0 0 0
O 1.128 0 0
";
        let first = parse_extended_xyz(text).unwrap();
        assert_eq!(first.len(), 5);
        let serialized = serialize_extended_xyz(&first);
        let second = parse_extended_xyz(&serialized).unwrap();
        assert_eq!(first, second);
    }
}
