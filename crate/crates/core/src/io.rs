//! Matrix file formats.
//!
//! * Dense CSV: one matrix row per line, `nan` marks an unobserved cell.
//! * MatrixMarket coordinate (`.mtx`): observed `(i, j, value)` triplets,
//!   1-based.
//!
//! Values are written with Rust's shortest round-trip formatting, so finite
//! values survive a write/read cycle bit-exactly.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::matrix::{DenseMatrix, MaskedMatrix};

fn parse_err(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|e| Error::io(path, e))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::io(path, e))
}

fn is_matrix_market(path: &Path) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| e.eq_ignore_ascii_case("mtx"))
}

/// Reads a `.mtx` file as MatrixMarket and anything else as dense CSV.
pub fn read_matrix(path: &Path) -> Result<MaskedMatrix> {
    let file = open(path)?;
    if is_matrix_market(path) {
        parse_matrix_market(file, path)
    } else {
        parse_matrix_csv(file, path)
    }
}

/// Writes `.mtx` as MatrixMarket and anything else as dense CSV.
pub fn write_matrix(path: &Path, m: &MaskedMatrix) -> Result<()> {
    let mut out = create(path)?;
    let written = if is_matrix_market(path) {
        format_matrix_market(&mut out, m)
    } else {
        format_matrix_csv(&mut out, m)
    };
    written
        .and_then(|_| out.flush())
        .map_err(|e| Error::io(path, e))
}

/// Writes a fully observed matrix as dense CSV.
pub fn write_dense_csv(path: &Path, m: &DenseMatrix) -> Result<()> {
    write_matrix(path, &MaskedMatrix::fully_observed(m.clone()))
}

pub fn parse_matrix_csv<R: Read>(reader: R, source: &Path) -> Result<MaskedMatrix> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(reader);
    let mut cols = None;
    let mut rows = 0;
    let mut triplets = Vec::new();
    for (line, record) in rdr.records().enumerate() {
        let line = line + 1;
        let record = record.map_err(|e| parse_err(source, line, e.to_string()))?;
        if record.len() == 1 && record[0].is_empty() {
            continue;
        }
        match cols {
            None => cols = Some(record.len()),
            Some(c) if c != record.len() => {
                return Err(parse_err(
                    source,
                    line,
                    format!("expected {c} fields, found {}", record.len()),
                ))
            }
            _ => {}
        }
        for (j, field) in record.iter().enumerate() {
            if field.eq_ignore_ascii_case("nan") {
                continue;
            }
            let v: f64 = field
                .parse()
                .map_err(|_| parse_err(source, line, format!("invalid number {field:?}")))?;
            if !v.is_finite() {
                return Err(parse_err(
                    source,
                    line,
                    format!("non-finite value {field:?}"),
                ));
            }
            triplets.push((rows, j, v));
        }
        rows += 1;
    }
    let cols = cols.ok_or_else(|| parse_err(source, 0, "empty matrix file"))?;
    MaskedMatrix::from_triplets(rows, cols, &triplets)
}

pub fn format_matrix_csv<W: Write>(out: &mut W, m: &MaskedMatrix) -> std::io::Result<()> {
    let (n1, n2) = m.shape();
    let mut line = String::new();
    for i in 0..n1 {
        line.clear();
        for j in 0..n2 {
            if j > 0 {
                line.push(',');
            }
            if m.mask().contains(i, j) {
                line.push_str(&m.values().get(i, j).to_string());
            } else {
                line.push_str("nan");
            }
        }
        writeln!(out, "{line}")?;
    }
    Ok(())
}

pub fn parse_matrix_market<R: Read>(reader: R, source: &Path) -> Result<MaskedMatrix> {
    let mut lines = BufReader::new(reader).lines().enumerate();
    let mut next_line = || -> Result<Option<(usize, String)>> {
        match lines.next() {
            None => Ok(None),
            Some((k, Ok(l))) => Ok(Some((k + 1, l))),
            Some((k, Err(e))) => Err(parse_err(source, k + 1, e.to_string())),
        }
    };

    let (_, banner) = next_line()?.ok_or_else(|| parse_err(source, 1, "empty file"))?;
    let tokens: Vec<String> = banner
        .split_whitespace()
        .map(str::to_ascii_lowercase)
        .collect();
    let supported = tokens.len() == 5
        && tokens[0] == "%%matrixmarket"
        && tokens[1] == "matrix"
        && tokens[2] == "coordinate"
        && (tokens[3] == "real" || tokens[3] == "integer")
        && tokens[4] == "general";
    if !supported {
        return Err(Error::Format(format!(
            "{}: expected a 'matrix coordinate real general' MatrixMarket banner, found {banner:?}",
            source.display()
        )));
    }

    let (size_line, size) = loop {
        let (k, l) = next_line()?.ok_or_else(|| parse_err(source, 0, "missing size line"))?;
        let t = l.trim();
        if !t.is_empty() && !t.starts_with('%') {
            break (k, t.to_string());
        }
    };
    let dims: Vec<usize> = size
        .split_whitespace()
        .map(str::parse)
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| parse_err(source, size_line, "invalid size line"))?;
    let &[n1, n2, nnz] = dims.as_slice() else {
        return Err(parse_err(
            source,
            size_line,
            "size line needs rows, cols and entry count",
        ));
    };

    let mut triplets = Vec::with_capacity(nnz);
    while let Some((k, l)) = next_line()? {
        let t = l.trim();
        if t.is_empty() || t.starts_with('%') {
            continue;
        }
        let fields: Vec<&str> = t.split_whitespace().collect();
        if fields.len() != 3 {
            return Err(parse_err(source, k, "entry needs row, column and value"));
        }
        let i: usize = fields[0]
            .parse()
            .map_err(|_| parse_err(source, k, "invalid row index"))?;
        let j: usize = fields[1]
            .parse()
            .map_err(|_| parse_err(source, k, "invalid column index"))?;
        let v: f64 = fields[2]
            .parse()
            .map_err(|_| parse_err(source, k, "invalid value"))?;
        if i == 0 || j == 0 || i > n1 || j > n2 {
            return Err(parse_err(
                source,
                k,
                format!("index ({i}, {j}) outside {n1}x{n2}"),
            ));
        }
        if !v.is_finite() {
            return Err(parse_err(source, k, "non-finite value"));
        }
        triplets.push((i - 1, j - 1, v));
    }
    if triplets.len() != nnz {
        return Err(parse_err(
            source,
            0,
            format!("header promises {nnz} entries, found {}", triplets.len()),
        ));
    }
    MaskedMatrix::from_triplets(n1, n2, &triplets)
}

pub fn format_matrix_market<W: Write>(out: &mut W, m: &MaskedMatrix) -> std::io::Result<()> {
    let (n1, n2) = m.shape();
    writeln!(out, "%%MatrixMarket matrix coordinate real general")?;
    writeln!(out, "{n1} {n2} {}", m.mask().len())?;
    for (i, j, v) in m.observed() {
        writeln!(out, "{} {} {}", i + 1, j + 1, v)?;
    }
    Ok(())
}

/// Path of the sidecar written next to `path` with the given suffix.
pub fn sidecar_path(path: &Path, suffix: &str) -> PathBuf {
    let mut name = path
        .file_name()
        .map(|n| n.to_os_string())
        .unwrap_or_default();
    name.push(suffix);
    path.with_file_name(name)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::ObservationSet;
    use proptest::prelude::*;

    fn src() -> &'static Path {
        Path::new("mem")
    }

    #[test]
    fn csv_with_holes() {
        let m = parse_matrix_csv("1, nan,3\nNaN,5,-0.25\n".as_bytes(), src()).unwrap();
        assert_eq!(m.shape(), (2, 3));
        assert_eq!(m.mask().pairs(), &[(0, 0), (0, 2), (1, 1), (1, 2)]);
        assert_eq!(m.values().get(1, 2), -0.25);
    }

    #[test]
    fn csv_errors_carry_line_numbers() {
        let err = parse_matrix_csv("1,2\n3\n".as_bytes(), src()).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }), "{err}");
        let err = parse_matrix_csv("1,x\n".as_bytes(), src()).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }));
        assert!(parse_matrix_csv("".as_bytes(), src()).is_err());
    }

    #[test]
    fn matrix_market_reads_one_based() {
        let text =
            "%%MatrixMarket matrix coordinate real general\n% comment\n2 3 2\n1 1 4.5\n2 3 -1\n";
        let m = parse_matrix_market(text.as_bytes(), src()).unwrap();
        assert_eq!(m.shape(), (2, 3));
        assert_eq!(m.mask().pairs(), &[(0, 0), (1, 2)]);
        assert_eq!(m.values().get(1, 2), -1.0);
    }

    #[test]
    fn matrix_market_errors() {
        let bad_banner = "%%MatrixMarket matrix array real general\n1 1\n1\n";
        assert!(matches!(
            parse_matrix_market(bad_banner.as_bytes(), src()),
            Err(Error::Format(_))
        ));
        let out_of_range = "%%MatrixMarket matrix coordinate real general\n2 2 1\n3 1 1.0\n";
        assert!(matches!(
            parse_matrix_market(out_of_range.as_bytes(), src()),
            Err(Error::Parse { line: 3, .. })
        ));
        let short = "%%MatrixMarket matrix coordinate real general\n2 2 2\n1 1 1.0\n";
        assert!(parse_matrix_market(short.as_bytes(), src()).is_err());
    }

    #[test]
    fn sidecar_naming() {
        assert_eq!(
            sidecar_path(Path::new("/a/ratings.csv"), ".provenance.json"),
            PathBuf::from("/a/ratings.csv.provenance.json")
        );
    }

    fn masked_strategy() -> impl Strategy<Value = MaskedMatrix> {
        (1usize..6, 1usize..6).prop_flat_map(|(r, c)| {
            (
                proptest::collection::vec(
                    any::<f64>().prop_filter("finite", |v| v.is_finite()),
                    r * c,
                ),
                proptest::collection::vec(any::<bool>(), r * c),
            )
                .prop_map(move |(vals, keep)| {
                    let pairs = (0..r * c)
                        .filter(|&k| keep[k])
                        .map(|k| (k / c, k % c))
                        .collect();
                    let mask = ObservationSet::new(r, c, pairs).unwrap();
                    MaskedMatrix::new(DenseMatrix::from_row_major(r, c, vals).unwrap(), mask)
                        .unwrap()
                })
        })
    }

    proptest! {
        #[test]
        fn formats_round_trip_bit_exactly(m in masked_strategy()) {
            let mut mtx = Vec::new();
            format_matrix_market(&mut mtx, &m).unwrap();
            let back = parse_matrix_market(mtx.as_slice(), src()).unwrap();
            prop_assert_eq!(back.mask(), m.mask());
            for (i, j, v) in m.observed() {
                prop_assert_eq!(back.values().get(i, j).to_bits(), v.to_bits());
            }

            let mut csv = Vec::new();
            format_matrix_csv(&mut csv, &m).unwrap();
            let back = parse_matrix_csv(csv.as_slice(), src()).unwrap();
            prop_assert_eq!(back.mask(), m.mask());
            for (i, j, v) in m.observed() {
                prop_assert_eq!(back.values().get(i, j).to_bits(), v.to_bits());
            }
        }
    }
}
