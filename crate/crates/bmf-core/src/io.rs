//! Matrix file formats, ratings ingestion, and hold-out splitting.
//!
//! Two text formats carry observed binary matrices:
//!
//! - sparse triplets: header `bmf-sparse v1 <n> <m>`, then one
//!   `<row> <col> <value>` line per observed cell (0-based, value 0 or 1);
//!   cells not listed are missing.
//! - dense grid: header `bmf-dense v1 <n> <m>`, then `n` rows of `m`
//!   space-separated symbols from `{0, 1, ?}` where `?` marks missing.
//!
//! Real-valued factor matrices use `bmf-real v1 <n> <m>` followed by `n`
//! rows of `m` floats. `read_matrix` auto-detects the binary formats from
//! the header token.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::matrix::{BinaryMatrix, Mask, ObservedMatrix, RealMatrix};

/// On-disk representation for observed binary matrices.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MatrixFormat {
    Dense,
    Triplets,
}

fn io_err(path: &Path, source: std::io::Error) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn parse_err(path: &Path, line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        msg: msg.into(),
    }
}

fn parse_header(path: &Path, line: &str) -> Result<(String, usize, usize)> {
    let fields: Vec<&str> = line.split_whitespace().collect();
    if fields.len() != 4 || fields[1] != "v1" {
        return Err(parse_err(
            path,
            1,
            format!("malformed header {line:?}, expected \"<format> v1 <n> <m>\""),
        ));
    }
    let n: usize = fields[2]
        .parse()
        .map_err(|_| parse_err(path, 1, format!("bad row count {:?}", fields[2])))?;
    let m: usize = fields[3]
        .parse()
        .map_err(|_| parse_err(path, 1, format!("bad column count {:?}", fields[3])))?;
    if n == 0 || m == 0 {
        return Err(parse_err(path, 1, "dimensions must be at least 1"));
    }
    Ok((fields[0].to_string(), n, m))
}

/// Read an observed binary matrix, auto-detecting the format.
pub fn read_matrix(path: impl AsRef<Path>) -> Result<ObservedMatrix> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| io_err(path, e))?;
    let mut lines = BufReader::new(file).lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or_else(|| parse_err(path, 1, "empty file"))?;
    let header = header.map_err(|e| io_err(path, e))?;
    let (format, n, m) = parse_header(path, &header)?;

    match format.as_str() {
        "bmf-sparse" => {
            let mut values = BinaryMatrix::zeros(n, m);
            let mut mask = Mask::empty(n, m);
            for (idx, line) in lines {
                let line_no = idx + 1;
                let line = line.map_err(|e| io_err(path, e))?;
                if line.trim().is_empty() {
                    continue;
                }
                let fields: Vec<&str> = line.split_whitespace().collect();
                if fields.len() != 3 {
                    return Err(parse_err(
                        path,
                        line_no,
                        format!("expected \"row col value\", got {line:?}"),
                    ));
                }
                let row: usize = fields[0]
                    .parse()
                    .map_err(|_| parse_err(path, line_no, format!("bad row {:?}", fields[0])))?;
                let col: usize = fields[1].parse().map_err(|_| {
                    parse_err(path, line_no, format!("bad column {:?}", fields[1]))
                })?;
                if row >= n || col >= m {
                    return Err(parse_err(
                        path,
                        line_no,
                        format!("index ({row}, {col}) outside {n}x{m}"),
                    ));
                }
                let value: u8 = match fields[2] {
                    "0" => 0,
                    "1" => 1,
                    other => {
                        return Err(parse_err(
                            path,
                            line_no,
                            format!("non-binary value {other:?}"),
                        ))
                    }
                };
                if mask.is_set(row, col) {
                    return Err(parse_err(
                        path,
                        line_no,
                        format!("duplicate cell ({row}, {col})"),
                    ));
                }
                mask.set(row, col, true);
                values.set(row, col, value);
            }
            ObservedMatrix::new(values, mask)
        }
        "bmf-dense" => {
            let mut values = BinaryMatrix::zeros(n, m);
            let mut mask = Mask::empty(n, m);
            let mut row = 0usize;
            for (idx, line) in lines {
                let line_no = idx + 1;
                let line = line.map_err(|e| io_err(path, e))?;
                if line.trim().is_empty() {
                    continue;
                }
                if row >= n {
                    return Err(parse_err(path, line_no, format!("more than {n} rows")));
                }
                let symbols: Vec<&str> = line.split_whitespace().collect();
                if symbols.len() != m {
                    return Err(parse_err(
                        path,
                        line_no,
                        format!("expected {m} symbols, got {}", symbols.len()),
                    ));
                }
                for (col, sym) in symbols.iter().enumerate() {
                    match *sym {
                        "0" => mask.set(row, col, true),
                        "1" => {
                            mask.set(row, col, true);
                            values.set(row, col, 1);
                        }
                        "?" => {}
                        other => {
                            return Err(parse_err(
                                path,
                                line_no,
                                format!("unexpected symbol {other:?}"),
                            ))
                        }
                    }
                }
                row += 1;
            }
            if row != n {
                return Err(parse_err(
                    path,
                    row + 1,
                    format!("expected {n} rows, got {row}"),
                ));
            }
            ObservedMatrix::new(values, mask)
        }
        other => Err(parse_err(path, 1, format!("unknown format {other:?}"))),
    }
}

/// Write an observed binary matrix in the requested format. Round-trips
/// losslessly, including the mask.
pub fn write_matrix(x: &ObservedMatrix, path: impl AsRef<Path>, format: MatrixFormat) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| io_err(path, e))?;
    let mut out = BufWriter::new(file);
    let result = match format {
        MatrixFormat::Triplets => {
            writeln!(out, "bmf-sparse v1 {} {}", x.n_rows(), x.n_cols()).and_then(|_| {
                for row in 0..x.n_rows() {
                    for col in 0..x.n_cols() {
                        if x.is_observed(row, col) {
                            writeln!(out, "{row} {col} {}", x.value(row, col))?;
                        }
                    }
                }
                Ok(())
            })
        }
        MatrixFormat::Dense => {
            writeln!(out, "bmf-dense v1 {} {}", x.n_rows(), x.n_cols()).and_then(|_| {
                for row in 0..x.n_rows() {
                    let symbols: Vec<&str> = (0..x.n_cols())
                        .map(|col| {
                            if !x.is_observed(row, col) {
                                "?"
                            } else if x.value(row, col) == 1 {
                                "1"
                            } else {
                                "0"
                            }
                        })
                        .collect();
                    writeln!(out, "{}", symbols.join(" "))?;
                }
                Ok(())
            })
        }
    };
    result.and_then(|_| out.flush()).map_err(|e| io_err(path, e))
}

/// Write a real matrix as `bmf-real v1 <n> <m>` plus one row per line.
pub fn write_real_matrix(x: &RealMatrix, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| io_err(path, e))?;
    let mut out = BufWriter::new(file);
    let result = writeln!(out, "bmf-real v1 {} {}", x.n_rows(), x.n_cols()).and_then(|_| {
        for row in 0..x.n_rows() {
            let fields: Vec<String> = x.row(row).iter().map(|v| v.to_string()).collect();
            writeln!(out, "{}", fields.join(" "))?;
        }
        Ok(())
    });
    result.and_then(|_| out.flush()).map_err(|e| io_err(path, e))
}

/// Read a `bmf-real` matrix back.
pub fn read_real_matrix(path: impl AsRef<Path>) -> Result<RealMatrix> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| io_err(path, e))?;
    let mut lines = BufReader::new(file).lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or_else(|| parse_err(path, 1, "empty file"))?;
    let header = header.map_err(|e| io_err(path, e))?;
    let (format, n, m) = parse_header(path, &header)?;
    if format != "bmf-real" {
        return Err(parse_err(path, 1, format!("unknown format {format:?}")));
    }
    let mut data = Vec::with_capacity(n * m);
    for (idx, line) in lines {
        let line_no = idx + 1;
        let line = line.map_err(|e| io_err(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        for field in line.split_whitespace() {
            let v: f64 = field
                .parse()
                .map_err(|_| parse_err(path, line_no, format!("bad float {field:?}")))?;
            data.push(v);
        }
    }
    RealMatrix::from_vec(n, m, data)
}

/// One parsed rating; the timestamp column is ignored at parse time.
#[derive(Debug, Clone, PartialEq)]
pub struct RatingsRecord {
    pub user: u64,
    pub item: u64,
    pub rating: f64,
}

/// Parse a ratings file with `user item rating [timestamp]` lines.
///
/// `delimiter` of `None` splits on whitespace (the MovieLens `u.data` tab
/// convention); `Some(sep)` splits on the given separator (for example
/// `"::"` for the 1M release).
pub fn read_ratings(path: impl AsRef<Path>, delimiter: Option<&str>) -> Result<Vec<RatingsRecord>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| io_err(path, e))?;
    let mut records = Vec::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|e| io_err(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = match delimiter {
            Some(sep) => line.split(sep).collect(),
            None => line.split_whitespace().collect(),
        };
        if fields.len() < 3 {
            return Err(parse_err(
                path,
                line_no,
                format!("expected \"user item rating [timestamp]\", got {line:?}"),
            ));
        }
        let user: u64 = fields[0]
            .trim()
            .parse()
            .map_err(|_| parse_err(path, line_no, format!("bad user id {:?}", fields[0])))?;
        let item: u64 = fields[1]
            .trim()
            .parse()
            .map_err(|_| parse_err(path, line_no, format!("bad item id {:?}", fields[1])))?;
        let rating: f64 = fields[2]
            .trim()
            .parse()
            .map_err(|_| parse_err(path, line_no, format!("bad rating {:?}", fields[2])))?;
        records.push(RatingsRecord { user, item, rating });
    }
    Ok(records)
}

/// Original user/item ids in row/column order of the binarized matrix.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IdIndex {
    pub users: Vec<u64>,
    pub items: Vec<u64>,
}

/// Binarize ratings against the global mean.
///
/// Users map to rows and items to columns in first-appearance order. A cell
/// is 1 when its rating is strictly above the global mean of all ratings
/// (`ties_as_one` switches the boundary case to 1); unrated pairs are
/// missing.
pub fn binarize_ratings(
    records: &[RatingsRecord],
    ties_as_one: bool,
) -> Result<(ObservedMatrix, IdIndex)> {
    if records.is_empty() {
        return Err(Error::InvalidParameter("no ratings to binarize".into()));
    }
    let mean = records.iter().map(|r| r.rating).sum::<f64>() / records.len() as f64;

    let mut users = Vec::new();
    let mut items = Vec::new();
    let mut user_index: HashMap<u64, usize> = HashMap::new();
    let mut item_index: HashMap<u64, usize> = HashMap::new();
    for record in records {
        user_index.entry(record.user).or_insert_with(|| {
            users.push(record.user);
            users.len() - 1
        });
        item_index.entry(record.item).or_insert_with(|| {
            items.push(record.item);
            items.len() - 1
        });
    }

    let (n, m) = (users.len(), items.len());
    let mut values = BinaryMatrix::zeros(n, m);
    let mut mask = Mask::empty(n, m);
    for record in records {
        let row = user_index[&record.user];
        let col = item_index[&record.item];
        if mask.is_set(row, col) {
            return Err(Error::InvalidParameter(format!(
                "duplicate rating for user {} item {}",
                record.user, record.item
            )));
        }
        let above = if ties_as_one {
            record.rating >= mean
        } else {
            record.rating > mean
        };
        mask.set(row, col, true);
        values.set(row, col, u8::from(above));
    }
    Ok((ObservedMatrix::new(values, mask)?, IdIndex { users, items }))
}

/// Split the observed cells of `x` into a training matrix and a held-out
/// mask.
///
/// Exactly `floor(observed * fraction)` cells stay observed for training;
/// the remaining observed cells form the held-out set. The two are disjoint
/// and together cover the original observed set.
pub fn holdout_split(
    x: &ObservedMatrix,
    observed_fraction: f64,
    seed: u64,
) -> Result<(ObservedMatrix, Mask)> {
    if !(observed_fraction > 0.0 && observed_fraction < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "observed fraction {observed_fraction} outside (0, 1)"
        )));
    }
    let observed: Vec<(usize, usize)> = (0..x.n_rows())
        .flat_map(|r| (0..x.n_cols()).map(move |c| (r, c)))
        .filter(|&(r, c)| x.is_observed(r, c))
        .collect();
    let total = observed.len();
    if total == 0 {
        return Err(Error::EmptyMask);
    }
    let keep = (total as f64 * observed_fraction).floor() as usize;
    if keep == 0 {
        return Err(Error::InvalidParameter(
            "fraction yields zero training cells".into(),
        ));
    }
    if keep >= total {
        return Err(Error::EmptyHoldout);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut train_mask = Mask::empty(x.n_rows(), x.n_cols());
    for idx in rand::seq::index::sample(&mut rng, total, keep) {
        let (r, c) = observed[idx];
        train_mask.set(r, c, true);
    }
    let mut heldout = Mask::empty(x.n_rows(), x.n_cols());
    for &(r, c) in &observed {
        if !train_mask.is_set(r, c) {
            heldout.set(r, c, true);
        }
    }
    let train = ObservedMatrix::new(x.values().clone(), train_mask)?;
    Ok((train, heldout))
}
