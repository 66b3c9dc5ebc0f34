use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs::File;
use std::io::Read;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::MaskedMatrix;
use crate::metrics::RatingScale;
use crate::sampling::selection_size;

const HEADER: [&str; 4] = ["userId", "movieId", "rating", "timestamp"];

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MovieLensOptions {
    /// Fraction of most active users kept.
    pub user_frac: f64,
    /// Fraction of most rated movies kept, counted among the kept users.
    pub item_frac: f64,
    pub scale: RatingScale,
}

impl Default for MovieLensOptions {
    fn default() -> Self {
        MovieLensOptions {
            user_frac: 0.6,
            item_frac: 0.5,
            scale: RatingScale { min: 0.5, max: 5.0 },
        }
    }
}

/// Ratings with rows and columns sorted by original id.
#[derive(Clone, Debug)]
pub struct RatingsMatrix {
    pub ratings: MaskedMatrix,
    pub user_ids: Vec<u64>,
    pub item_ids: Vec<u64>,
    pub scale: RatingScale,
}

/// Filter statistics written next to derived outputs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LoadProvenance {
    pub path: PathBuf,
    pub options: MovieLensOptions,
    pub ratings_read: usize,
    pub users_total: usize,
    pub users_kept: usize,
    pub items_after_user_filter: usize,
    pub items_kept: usize,
    pub ratings_kept: usize,
    pub density: f64,
}

pub fn load_movielens(
    path: &Path,
    opts: &MovieLensOptions,
) -> Result<(RatingsMatrix, LoadProvenance)> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    parse_movielens(file, path, opts)
}

fn check_frac(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v <= 1.0 {
        Ok(())
    } else {
        Err(Error::domain(format!("{name} must lie in (0, 1], got {v}")))
    }
}

/// Ids ordered by count descending then id ascending, truncated to
/// `round(frac * n)` (at least one).
fn top_by_count(counts: &HashMap<u64, usize>, frac: f64) -> BTreeSet<u64> {
    let mut ranked: Vec<(u64, usize)> = counts.iter().map(|(&id, &c)| (id, c)).collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
    let keep = if ranked.is_empty() {
        0
    } else {
        selection_size(ranked.len(), frac)
    };
    ranked.into_iter().take(keep).map(|(id, _)| id).collect()
}

pub fn parse_movielens<R: Read>(
    reader: R,
    source: &Path,
    opts: &MovieLensOptions,
) -> Result<(RatingsMatrix, LoadProvenance)> {
    check_frac("user_frac", opts.user_frac)?;
    check_frac("item_frac", opts.item_frac)?;
    let scale = RatingScale::new(opts.scale.min, opts.scale.max)?;
    let parse_err = |line: usize, message: String| Error::Parse {
        path: source.to_path_buf(),
        line,
        message,
    };

    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut records = rdr.records();
    let header = match records.next() {
        Some(r) => r.map_err(|e| parse_err(1, e.to_string()))?,
        None => return Err(parse_err(1, "empty file".into())),
    };
    if header.iter().collect::<Vec<_>>() != HEADER {
        return Err(parse_err(
            1,
            format!("expected header {}", HEADER.join(",")),
        ));
    }

    let mut ratings: BTreeMap<(u64, u64), f64> = BTreeMap::new();
    for (k, record) in records.enumerate() {
        let line = k + 2;
        let record = record.map_err(|e| parse_err(line, e.to_string()))?;
        if record.len() != 4 {
            return Err(parse_err(
                line,
                format!("expected 4 fields, found {}", record.len()),
            ));
        }
        let user: u64 = record[0]
            .parse()
            .map_err(|_| parse_err(line, format!("invalid user id {:?}", &record[0])))?;
        let item: u64 = record[1]
            .parse()
            .map_err(|_| parse_err(line, format!("invalid movie id {:?}", &record[1])))?;
        let rating: f64 = record[2]
            .parse()
            .map_err(|_| parse_err(line, format!("invalid rating {:?}", &record[2])))?;
        if !scale.contains(rating) {
            return Err(parse_err(
                line,
                format!("rating {rating} outside [{}, {}]", scale.min, scale.max),
            ));
        }
        if ratings.insert((user, item), rating).is_some() {
            return Err(parse_err(
                line,
                format!("duplicate rating for user {user}, movie {item}"),
            ));
        }
    }
    let ratings_read = ratings.len();

    let mut user_counts: HashMap<u64, usize> = HashMap::new();
    for &(u, _) in ratings.keys() {
        *user_counts.entry(u).or_default() += 1;
    }
    let users = top_by_count(&user_counts, opts.user_frac);

    let mut item_counts: HashMap<u64, usize> = HashMap::new();
    for &(u, m) in ratings.keys() {
        if users.contains(&u) {
            *item_counts.entry(m).or_default() += 1;
        }
    }
    let items = top_by_count(&item_counts, opts.item_frac);

    let user_ids: Vec<u64> = users.into_iter().collect();
    let item_ids: Vec<u64> = items.into_iter().collect();
    let row_of: HashMap<u64, usize> = user_ids.iter().enumerate().map(|(i, &u)| (u, i)).collect();
    let col_of: HashMap<u64, usize> = item_ids.iter().enumerate().map(|(j, &m)| (m, j)).collect();
    let triplets: Vec<(usize, usize, f64)> = ratings
        .iter()
        .filter_map(|(&(u, m), &v)| Some((*row_of.get(&u)?, *col_of.get(&m)?, v)))
        .collect();
    if triplets.is_empty() {
        return Err(Error::domain(format!(
            "{}: no ratings left after filtering",
            source.display()
        )));
    }

    let masked = MaskedMatrix::from_triplets(user_ids.len(), item_ids.len(), &triplets)?;
    let provenance = LoadProvenance {
        path: source.to_path_buf(),
        options: *opts,
        ratings_read,
        users_total: user_counts.len(),
        users_kept: user_ids.len(),
        items_after_user_filter: item_counts.len(),
        items_kept: item_ids.len(),
        ratings_kept: triplets.len(),
        density: masked.density(),
    };
    Ok((
        RatingsMatrix {
            ratings: masked,
            user_ids,
            item_ids,
            scale,
        },
        provenance,
    ))
}
