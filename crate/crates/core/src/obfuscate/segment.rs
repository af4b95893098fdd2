//! Identifier word segmentation.

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PieceKind {
    Word,
    Digits,
    /// A run of underscores.
    Sep,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Piece<'a> {
    pub text: &'a str,
    pub kind: PieceKind,
}

fn class(c: char) -> u8 {
    if c == '_' {
        0
    } else if c.is_ascii_digit() {
        1
    } else if c.is_uppercase() {
        2
    } else {
        3
    }
}

/// Split an identifier into words, digit runs and separators, keeping the
/// original text of each piece so the name can be rebuilt.
pub fn pieces(name: &str) -> Vec<Piece<'_>> {
    let chars: Vec<(usize, char)> = name.char_indices().collect();
    let mut out = Vec::new();
    let mut start = 0;
    for k in 0..chars.len() {
        let (_, c) = chars[k];
        let Some(&(j, next)) = chars.get(k + 1) else { break };
        let (a, b) = (class(c), class(next));
        let after = chars.get(k + 2).map(|&(_, c)| class(c));
        let split = match (a, b) {
            (0, 0) => false,
            (0, _) | (_, 0) => true,
            (1, 1) => false,
            (1, _) | (_, 1) => true,
            (3, 2) => true,
            // "XMLHttp": split before the last capital of an upper run.
            (2, 2) => after == Some(3),
            _ => false,
        };
        if split {
            out.push(make_piece(&name[start..j]));
            start = j;
        }
    }
    if start < name.len() {
        out.push(make_piece(&name[start..]));
    }
    out
}

fn make_piece(text: &str) -> Piece<'_> {
    let kind = if text.starts_with('_') {
        PieceKind::Sep
    } else if text.starts_with(|c: char| c.is_ascii_digit()) {
        PieceKind::Digits
    } else {
        PieceKind::Word
    };
    Piece { text, kind }
}

/// Words of an identifier, lowercased, in order. Digit runs are kept as words.
pub fn segment_identifier(name: &str) -> Vec<String> {
    pieces(name)
        .into_iter()
        .filter(|p| p.kind != PieceKind::Sep)
        .map(|p| p.text.to_lowercase())
        .collect()
}

/// Letter case used by one word of an identifier.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WordCase {
    Lower,
    Upper,
    Capitalized,
}

/// Case of each word piece, judged against the whole identifier so that
/// `A_B` stays upper case while `getX` keeps a capitalized hump.
pub fn word_case(piece: &str, whole: &str) -> WordCase {
    let has_lower = whole.chars().any(|c| c.is_lowercase());
    let first_upper = piece.starts_with(|c: char| c.is_uppercase());
    let acronym = first_upper && piece.chars().count() > 1 && piece.chars().all(|c| c.is_uppercase());
    if (!has_lower && piece.chars().any(|c| c.is_uppercase())) || acronym {
        WordCase::Upper
    } else if first_upper {
        WordCase::Capitalized
    } else {
        WordCase::Lower
    }
}

pub fn apply_case(word: &str, case: WordCase) -> String {
    match case {
        WordCase::Lower => word.to_lowercase(),
        WordCase::Upper => word.to_uppercase(),
        WordCase::Capitalized => {
            let mut cs = word.chars();
            match cs.next() {
                Some(f) => f.to_uppercase().chain(cs.flat_map(|c| c.to_lowercase())).collect(),
                None => String::new(),
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn camel_snake_acronym() {
        assert_eq!(segment_identifier("expandIfNeeded"), ["expand", "if", "needed"]);
        assert_eq!(segment_identifier("lv_obj_set_pos"), ["lv", "obj", "set", "pos"]);
        assert_eq!(segment_identifier("XMLHttpRequest2"), ["xml", "http", "request", "2"]);
    }

    #[test]
    fn edge_shapes() {
        assert_eq!(segment_identifier("__init__"), ["init"]);
        assert_eq!(segment_identifier("RB_CAPACITY"), ["rb", "capacity"]);
        assert_eq!(segment_identifier("x"), ["x"]);
        assert_eq!(segment_identifier("vec3d"), ["vec", "3", "d"]);
        assert_eq!(segment_identifier("getX"), ["get", "x"]);
        assert_eq!(segment_identifier("_"), Vec::<String>::new());
    }

    #[test]
    fn cases() {
        assert_eq!(word_case("XML", "XMLHttp"), WordCase::Upper);
        assert_eq!(word_case("Http", "XMLHttp"), WordCase::Capitalized);
        assert_eq!(word_case("A", "A_B"), WordCase::Upper);
        assert_eq!(word_case("X", "getX"), WordCase::Capitalized);
        assert_eq!(apply_case("kotu", WordCase::Capitalized), "Kotu");
    }

    proptest! {
        #[test]
        fn pieces_concatenate_to_input(name in "[A-Za-z_][A-Za-z0-9_]{0,20}") {
            let joined: String = pieces(&name).iter().map(|p| p.text).collect();
            prop_assert_eq!(joined, name);
        }
    }
}
