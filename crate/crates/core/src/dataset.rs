//! Interaction log ingestion, k-core filtering, and train/validation/test
//! splitting.

use std::collections::{HashMap, HashSet};
use std::io::BufRead;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Input separator for interaction logs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InputFormat {
    Csv,
    Tsv,
}

impl InputFormat {
    fn separator(self) -> char {
        match self {
            InputFormat::Csv => ',',
            InputFormat::Tsv => '\t',
        }
    }
}

/// Sparse binary user x item interaction matrix.
///
/// Records are held as a sorted, duplicate-free list of `(user, item)` index
/// pairs. Index spaces are dense: every index below `n_users` / `n_items`
/// corresponds to one entry of the external id lists.
#[derive(Debug, Clone, PartialEq)]
pub struct InteractionMatrix {
    n_users: usize,
    n_items: usize,
    records: Vec<(u32, u32)>,
    user_ids: Vec<String>,
    item_ids: Vec<String>,
}

impl InteractionMatrix {
    /// Builds a matrix from explicit parts, validating the type invariants.
    pub fn new(
        n_users: usize,
        n_items: usize,
        mut records: Vec<(u32, u32)>,
        user_ids: Vec<String>,
        item_ids: Vec<String>,
    ) -> Result<Self> {
        if user_ids.len() != n_users || item_ids.len() != n_items {
            return Err(Error::InvalidArgument(format!(
                "id list lengths ({}, {}) do not match dimensions ({}, {})",
                user_ids.len(),
                item_ids.len(),
                n_users,
                n_items
            )));
        }
        let unique_users: HashSet<&String> = user_ids.iter().collect();
        let unique_items: HashSet<&String> = item_ids.iter().collect();
        if unique_users.len() != n_users || unique_items.len() != n_items {
            return Err(Error::InvalidArgument(
                "external id lists contain duplicates".into(),
            ));
        }
        records.sort_unstable();
        records.dedup();
        for &(u, i) in &records {
            if u as usize >= n_users || i as usize >= n_items {
                return Err(Error::IndexOutOfRange(format!(
                    "record ({u}, {i}) outside {n_users} x {n_items}"
                )));
            }
        }
        Ok(Self {
            n_users,
            n_items,
            records,
            user_ids,
            item_ids,
        })
    }

    /// Convenience constructor for index-space data; external ids are
    /// generated as `u{index}` / `i{index}`.
    pub fn from_index_pairs(
        n_users: usize,
        n_items: usize,
        records: Vec<(u32, u32)>,
    ) -> Result<Self> {
        let user_ids = (0..n_users).map(|u| format!("u{u}")).collect();
        let item_ids = (0..n_items).map(|i| format!("i{i}")).collect();
        Self::new(n_users, n_items, records, user_ids, item_ids)
    }

    pub fn n_users(&self) -> usize {
        self.n_users
    }

    pub fn n_items(&self) -> usize {
        self.n_items
    }

    pub fn n_records(&self) -> usize {
        self.records.len()
    }

    /// Sorted, duplicate-free `(user, item)` pairs.
    pub fn records(&self) -> &[(u32, u32)] {
        &self.records
    }

    pub fn user_ids(&self) -> &[String] {
        &self.user_ids
    }

    pub fn item_ids(&self) -> &[String] {
        &self.item_ids
    }

    pub fn contains(&self, user: u32, item: u32) -> bool {
        self.records.binary_search(&(user, item)).is_ok()
    }

    /// Per-user sorted item lists.
    pub fn items_by_user(&self) -> Vec<Vec<u32>> {
        let mut out = vec![Vec::new(); self.n_users];
        for &(u, i) in &self.records {
            out[u as usize].push(i);
        }
        out
    }

    /// Per-item sorted user lists.
    pub fn users_by_item(&self) -> Vec<Vec<u32>> {
        let mut out = vec![Vec::new(); self.n_items];
        for &(u, i) in &self.records {
            out[i as usize].push(u);
        }
        out
    }
}

/// Train/validation/test partition sharing one index space.
#[derive(Debug, Clone)]
pub struct DatasetSplit {
    pub train: InteractionMatrix,
    pub validation: InteractionMatrix,
    pub test: InteractionMatrix,
}

/// Parses `user_id<sep>item_id[<sep>extra...]` lines into an interaction
/// matrix. Indices are assigned in first-appearance order and duplicate
/// pairs collapse to one record.
///
/// A leading header line is skipped when its second field is non-numeric
/// while the second field of the following line is numeric; files that use
/// non-numeric external ids throughout are taken as header-less.
pub fn load_interactions<R: BufRead>(source: R, format: InputFormat) -> Result<InteractionMatrix> {
    load_interactions_with_min_year(source, format, None)
}

/// As [`load_interactions`], additionally dropping records whose third
/// column parses as a calendar year below `min_year`. Records without a
/// year-like third column are kept.
pub fn load_interactions_with_min_year<R: BufRead>(
    source: R,
    format: InputFormat,
    min_year: Option<i32>,
) -> Result<InteractionMatrix> {
    let sep = format.separator();
    let mut user_index: HashMap<String, u32> = HashMap::new();
    let mut item_index: HashMap<String, u32> = HashMap::new();
    let mut user_ids: Vec<String> = Vec::new();
    let mut item_ids: Vec<String> = Vec::new();
    let mut records: Vec<(u32, u32)> = Vec::new();
    let mut seen: HashSet<(u32, u32)> = HashSet::new();

    let mut lines = source.lines().enumerate().peekable();
    if let Some((_, Ok(first))) = lines.peek() {
        if let Some(second_of_first) = field(first, sep, 1) {
            let first_is_header = !is_numeric(second_of_first);
            if first_is_header {
                // Peek one line further without consuming the iterator state.
                let consumed = lines.next();
                let next_numeric = matches!(
                    lines.peek(),
                    Some((_, Ok(line))) if field(line, sep, 1).is_some_and(is_numeric)
                );
                if !next_numeric {
                    // Not a header after all; process the line normally.
                    let (lineno, line) = consumed.unwrap();
                    let line = line?;
                    parse_line(
                        &line, lineno, sep, min_year, &mut user_index, &mut item_index,
                        &mut user_ids, &mut item_ids, &mut records, &mut seen,
                    )?;
                }
            }
        }
    }
    for (lineno, line) in lines {
        let line = line?;
        parse_line(
            &line, lineno, sep, min_year, &mut user_index, &mut item_index, &mut user_ids,
            &mut item_ids, &mut records, &mut seen,
        )?;
    }

    if records.is_empty() {
        return Err(Error::EmptyInput);
    }
    InteractionMatrix::new(user_ids.len(), item_ids.len(), records, user_ids, item_ids)
}

fn field(line: &str, sep: char, idx: usize) -> Option<&str> {
    line.split(sep).nth(idx).map(str::trim)
}

fn is_numeric(s: &str) -> bool {
    !s.is_empty() && s.parse::<f64>().is_ok()
}

fn year_of(s: &str) -> Option<i32> {
    let v: i64 = s.trim().parse().ok()?;
    (1000..=9999).contains(&v).then_some(v as i32)
}

#[allow(clippy::too_many_arguments)]
fn parse_line(
    line: &str,
    lineno: usize,
    sep: char,
    min_year: Option<i32>,
    user_index: &mut HashMap<String, u32>,
    item_index: &mut HashMap<String, u32>,
    user_ids: &mut Vec<String>,
    item_ids: &mut Vec<String>,
    records: &mut Vec<(u32, u32)>,
    seen: &mut HashSet<(u32, u32)>,
) -> Result<()> {
    let mut fields = line.split(sep).map(str::trim);
    let user = fields.next().unwrap_or("");
    let item = match fields.next() {
        Some(f) => f,
        None => {
            return Err(Error::Parse {
                line: lineno + 1,
                message: format!("expected at least 2 fields, got 1: {line:?}"),
            })
        }
    };
    if user.is_empty() || item.is_empty() {
        return Err(Error::Parse {
            line: lineno + 1,
            message: format!("empty id field: {line:?}"),
        });
    }
    if let Some(min) = min_year {
        if let Some(year) = fields.next().and_then(year_of) {
            if year < min {
                return Ok(());
            }
        }
    }
    let u = *user_index.entry(user.to_string()).or_insert_with(|| {
        user_ids.push(user.to_string());
        (user_ids.len() - 1) as u32
    });
    let i = *item_index.entry(item.to_string()).or_insert_with(|| {
        item_ids.push(item.to_string());
        (item_ids.len() - 1) as u32
    });
    if seen.insert((u, i)) {
        records.push((u, i));
    }
    Ok(())
}

/// Iteratively removes users and items with fewer than `k` records until a
/// fixpoint, then re-compacts the surviving indices preserving their
/// relative order. The result may be empty.
pub fn k_core_filter(matrix: &InteractionMatrix, k: usize) -> Result<InteractionMatrix> {
    if k == 0 {
        return Err(Error::InvalidArgument("k-core requires k >= 1".into()));
    }
    let mut user_items = matrix.items_by_user();
    let mut item_users = matrix.users_by_item();
    let mut user_deg: Vec<usize> = user_items.iter().map(Vec::len).collect();
    let mut item_deg: Vec<usize> = item_users.iter().map(Vec::len).collect();
    let mut user_dead = vec![false; matrix.n_users()];
    let mut item_dead = vec![false; matrix.n_items()];

    // Worklist of vertices dropping below k; each removal decrements the
    // degrees of its live neighbors.
    let mut queue: Vec<(bool, u32)> = Vec::new();
    for (u, &d) in user_deg.iter().enumerate() {
        if d < k {
            queue.push((true, u as u32));
        }
    }
    for (i, &d) in item_deg.iter().enumerate() {
        if d < k {
            queue.push((false, i as u32));
        }
    }
    while let Some((is_user, v)) = queue.pop() {
        let v = v as usize;
        if is_user {
            if user_dead[v] {
                continue;
            }
            user_dead[v] = true;
            for &i in &user_items[v] {
                let i = i as usize;
                if !item_dead[i] {
                    item_deg[i] -= 1;
                    if item_deg[i] < k {
                        queue.push((false, i as u32));
                    }
                }
            }
            user_items[v].clear();
        } else {
            if item_dead[v] {
                continue;
            }
            item_dead[v] = true;
            for &u in &item_users[v] {
                let u = u as usize;
                if !user_dead[u] {
                    user_deg[u] -= 1;
                    if user_deg[u] < k {
                        queue.push((true, u as u32));
                    }
                }
            }
            item_users[v].clear();
        }
    }

    compact(matrix, &user_dead, &item_dead, |u, i| {
        !user_dead[u as usize] && !item_dead[i as usize]
    })
}

/// Rebuilds a matrix keeping records accepted by `keep`, dropping vertices
/// flagged dead, and re-indexing survivors in relative order.
fn compact(
    matrix: &InteractionMatrix,
    user_dead: &[bool],
    item_dead: &[bool],
    keep: impl Fn(u32, u32) -> bool,
) -> Result<InteractionMatrix> {
    let mut user_map = vec![u32::MAX; matrix.n_users()];
    let mut item_map = vec![u32::MAX; matrix.n_items()];
    let mut user_ids = Vec::new();
    let mut item_ids = Vec::new();
    for (u, dead) in user_dead.iter().enumerate() {
        if !dead {
            user_map[u] = user_ids.len() as u32;
            user_ids.push(matrix.user_ids()[u].clone());
        }
    }
    for (i, dead) in item_dead.iter().enumerate() {
        if !dead {
            item_map[i] = item_ids.len() as u32;
            item_ids.push(matrix.item_ids()[i].clone());
        }
    }
    let records: Vec<(u32, u32)> = matrix
        .records()
        .iter()
        .filter(|&&(u, i)| keep(u, i))
        .map(|&(u, i)| (user_map[u as usize], item_map[i as usize]))
        .collect();
    InteractionMatrix::new(user_ids.len(), item_ids.len(), records, user_ids, item_ids)
}

/// Randomly partitions records into train/validation/test by the given
/// ratios using a seeded shuffle. Validation and test records whose user or
/// item has no train record are deleted, not reassigned. All three splits
/// keep the input's index space and id lists.
pub fn split_dataset(
    matrix: &InteractionMatrix,
    ratios: (f64, f64, f64),
    seed: u64,
) -> Result<DatasetSplit> {
    let (rt, rv, rs) = ratios;
    if rt <= 0.0 || rv <= 0.0 || rs <= 0.0 {
        return Err(Error::InvalidArgument(
            "split ratios must all be positive".into(),
        ));
    }
    if (rt + rv + rs - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidArgument(format!(
            "split ratios must sum to 1, got {}",
            rt + rv + rs
        )));
    }
    let n = matrix.n_records();
    if n < 3 {
        return Err(Error::InvalidArgument(format!(
            "need at least 3 records to split, got {n}"
        )));
    }

    let mut shuffled: Vec<(u32, u32)> = matrix.records().to_vec();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    shuffled.shuffle(&mut rng);

    let n_valid = (n as f64 * rv).floor() as usize;
    let n_test = (n as f64 * rs).floor() as usize;
    let n_train = n - n_valid - n_test;

    let train_records = shuffled[..n_train].to_vec();
    let valid_records = shuffled[n_train..n_train + n_valid].to_vec();
    let test_records = shuffled[n_train + n_valid..].to_vec();

    let mut user_in_train = vec![false; matrix.n_users()];
    let mut item_in_train = vec![false; matrix.n_items()];
    for &(u, i) in &train_records {
        user_in_train[u as usize] = true;
        item_in_train[i as usize] = true;
    }
    let warm = |recs: Vec<(u32, u32)>| -> Vec<(u32, u32)> {
        recs.into_iter()
            .filter(|&(u, i)| user_in_train[u as usize] && item_in_train[i as usize])
            .collect()
    };

    let build = |records: Vec<(u32, u32)>| {
        InteractionMatrix::new(
            matrix.n_users(),
            matrix.n_items(),
            records,
            matrix.user_ids().to_vec(),
            matrix.item_ids().to_vec(),
        )
    };
    Ok(DatasetSplit {
        train: build(train_records)?,
        validation: build(warm(valid_records))?,
        test: build(warm(test_records))?,
    })
}

/// Split and id-map file IO in the formats shared by the pipeline stages.
pub mod io {
    use std::fs;
    use std::io::Write;
    use std::path::Path;

    use super::InteractionMatrix;
    use crate::error::{Error, Result};

    /// Writes one record per line as `user_index<TAB>item_index`.
    pub fn write_records(path: &Path, matrix: &InteractionMatrix) -> Result<()> {
        let mut out = String::new();
        for &(u, i) in matrix.records() {
            out.push_str(&format!("{u}\t{i}\n"));
        }
        fs::write(path, out)?;
        Ok(())
    }

    /// Writes `index<TAB>external_id` lines.
    pub fn write_id_map(path: &Path, ids: &[String]) -> Result<()> {
        let mut f = fs::File::create(path)?;
        for (idx, id) in ids.iter().enumerate() {
            writeln!(f, "{idx}\t{id}")?;
        }
        Ok(())
    }

    pub fn read_id_map(path: &Path) -> Result<Vec<String>> {
        let text = fs::read_to_string(path)?;
        let mut ids = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let mut fields = line.split('\t');
            let idx: usize = fields
                .next()
                .and_then(|f| f.parse().ok())
                .ok_or_else(|| Error::Parse {
                    line: lineno + 1,
                    message: "bad id-map index".into(),
                })?;
            let id = fields.next().ok_or_else(|| Error::Parse {
                line: lineno + 1,
                message: "missing external id".into(),
            })?;
            if idx != ids.len() {
                return Err(Error::Parse {
                    line: lineno + 1,
                    message: format!("id-map indices must be dense, got {idx}"),
                });
            }
            ids.push(id.to_string());
        }
        Ok(ids)
    }

    /// Reads a records file written by [`write_records`] back into a matrix
    /// over the given id lists.
    pub fn read_records(
        path: &Path,
        user_ids: Vec<String>,
        item_ids: Vec<String>,
    ) -> Result<InteractionMatrix> {
        let text = fs::read_to_string(path)?;
        let mut records = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let mut fields = line.split('\t');
            let parse = |f: Option<&str>| -> Option<u32> { f.and_then(|v| v.parse().ok()) };
            match (parse(fields.next()), parse(fields.next())) {
                (Some(u), Some(i)) => records.push((u, i)),
                _ => {
                    return Err(Error::Parse {
                        line: lineno + 1,
                        message: format!("bad record line: {line:?}"),
                    })
                }
            }
        }
        InteractionMatrix::new(user_ids.len(), item_ids.len(), records, user_ids, item_ids)
    }
}
