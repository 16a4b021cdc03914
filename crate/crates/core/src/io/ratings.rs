//! Ratings CSV (`user_id,item_id,rating`) to a dense market: users become
//! buyers, items become goods, ratings become valuations.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::synthetic::positive_unit;
use super::IoError;
use crate::market::{normalize_instance, MarketInstance, UtilityKind};

/// How pairs without a rating are densified.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Fill {
    /// Missing pairs are valued at zero.
    #[default]
    Zero,
    /// Any missing pair is an error.
    Fail,
}

impl FromStr for Fill {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "zero" => Ok(Fill::Zero),
            "fail" => Ok(Fill::Fail),
            other => Err(format!("unknown fill rule `{other}` (expected zero or fail)")),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct IngestOptions {
    pub min_entries: usize,
    pub fill: Fill,
    /// Seeds the uniform budget draw.
    pub seed: u64,
    pub utility: UtilityKind,
}

impl IngestOptions {
    pub fn new(min_entries: usize, fill: Fill, seed: u64) -> Self {
        Self { min_entries, fill, seed, utility: UtilityKind::Linear }
    }
}

/// Ids compare by length first, so purely numeric ids sort numerically.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
struct Id(String);

impl Ord for Id {
    fn cmp(&self, other: &Self) -> Ordering {
        (self.0.len(), &self.0).cmp(&(other.0.len(), &other.0))
    }
}

impl PartialOrd for Id {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Rating {
    pub user_id: String,
    pub item_id: String,
    pub rating: f64,
}

/// User ids, item ids, and the row-major rating matrix.
type Dense = (Vec<String>, Vec<String>, Vec<f64>);

/// Deduplicated ratings keyed by (user, item). A repeated pair keeps the last value read.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RatingsTable {
    entries: BTreeMap<(Id, Id), f64>,
}

impl RatingsTable {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn insert(&mut self, user_id: &str, item_id: &str, rating: f64) {
        self.entries.insert((Id(user_id.to_string()), Id(item_id.to_string())), rating);
    }

    pub fn iter(&self) -> impl Iterator<Item = Rating> + '_ {
        self.entries.iter().map(|((u, i), &r)| Rating { user_id: u.0.clone(), item_id: i.0.clone(), rating: r })
    }

    fn users(&self) -> BTreeSet<&Id> {
        self.entries.keys().map(|(u, _)| u).collect()
    }

    fn items(&self) -> BTreeSet<&Id> {
        self.entries.keys().map(|(_, i)| i).collect()
    }

    pub fn user_ids(&self) -> Vec<String> {
        self.users().into_iter().map(|u| u.0.clone()).collect()
    }

    pub fn item_ids(&self) -> Vec<String> {
        self.items().into_iter().map(|i| i.0.clone()).collect()
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<(), IoError> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["user_id", "item_id", "rating"])?;
        for ((u, i), r) in &self.entries {
            out.write_record([u.0.as_str(), i.0.as_str(), &r.to_string()])?;
        }
        out.flush().map_err(|e| IoError::Csv(e.into()))?;
        Ok(())
    }

    /// Densifies into budgets-free rows in sorted user/item order.
    fn densify(&self, fill: Fill) -> Result<Dense, IoError> {
        let users = self.user_ids();
        let items = self.item_ids();
        let col: BTreeMap<&str, usize> = items.iter().enumerate().map(|(k, s)| (s.as_str(), k)).collect();
        let row: BTreeMap<&str, usize> = users.iter().enumerate().map(|(k, s)| (s.as_str(), k)).collect();
        let m = items.len();
        let mut vals = vec![None; users.len() * m];
        for ((u, i), &r) in &self.entries {
            vals[row[u.0.as_str()] * m + col[i.0.as_str()]] = Some(r);
        }
        if fill == Fill::Fail {
            if let Some(k) = vals.iter().position(Option::is_none) {
                return Err(IoError::MissingEntry { user: users[k / m].clone(), item: items[k % m].clone() });
            }
        }
        let vals: Vec<f64> = vals.into_iter().map(|v| v.unwrap_or(0.0)).collect();
        if let Some(i) = (0..users.len()).find(|&i| vals[i * m..(i + 1) * m].iter().all(|&v| v == 0.0)) {
            return Err(IoError::ZeroUser(users[i].clone()));
        }
        if let Some(j) = (0..m).find(|&j| (0..users.len()).all(|i| vals[i * m + j] == 0.0)) {
            return Err(IoError::ZeroItem(items[j].clone()));
        }
        Ok((users, items, vals))
    }
}

pub fn read_ratings<R: Read>(reader: R) -> Result<RatingsTable, IoError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let find = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| IoError::BadRating { record: 0, msg: format!("header lacks `{name}` column") })
    };
    let (cu, ci, cr) = (find("user_id")?, find("item_id")?, find("rating")?);
    let mut table = RatingsTable::default();
    for (k, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let record = k as u64 + 1;
        let field = |c: usize| rec.get(c).ok_or_else(|| IoError::BadRating { record, msg: "short record".into() });
        let raw = field(cr)?;
        let rating: f64 =
            raw.parse().map_err(|_| IoError::BadRating { record, msg: format!("rating `{raw}` is not a number") })?;
        if !(rating >= 0.0 && rating.is_finite()) {
            return Err(IoError::BadRating { record, msg: format!("rating {rating} must be finite and nonnegative") });
        }
        table.insert(field(cu)?, field(ci)?, rating);
    }
    Ok(table)
}

/// Drops users and items with fewer than `min_entries` ratings, repeating
/// until every survivor meets the threshold.
pub fn filter_ratings(table: &RatingsTable, min_entries: usize) -> RatingsTable {
    let mut entries = table.entries.clone();
    loop {
        let mut per_user: BTreeMap<&Id, usize> = BTreeMap::new();
        let mut per_item: BTreeMap<&Id, usize> = BTreeMap::new();
        for (u, i) in entries.keys() {
            *per_user.entry(u).or_default() += 1;
            *per_item.entry(i).or_default() += 1;
        }
        let drop: Vec<(Id, Id)> =
            entries.keys().filter(|(u, i)| per_user[u] < min_entries || per_item[i] < min_entries).cloned().collect();
        if drop.is_empty() {
            return RatingsTable { entries };
        }
        for key in drop {
            entries.remove(&key);
        }
    }
}

pub fn ingest_ratings_from_reader<R: Read>(reader: R, opts: &IngestOptions) -> Result<MarketInstance<f64>, IoError> {
    let table = filter_ratings(&read_ratings(reader)?, opts.min_entries);
    if table.is_empty() {
        return Err(IoError::EmptyAfterFilter);
    }
    let (users, items, vals) = table.densify(opts.fill)?;
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let budgets: Vec<f64> = (0..users.len()).map(|_| positive_unit(&mut rng)).collect();
    let inst = MarketInstance::from_flat(budgets, items.len(), vals, opts.utility)?;
    Ok(normalize_instance(&inst, false)?)
}

pub fn ingest_ratings(path: impl AsRef<Path>, opts: &IngestOptions) -> Result<MarketInstance<f64>, IoError> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| IoError::file(path, e))?;
    ingest_ratings_from_reader(std::io::BufReader::new(file), opts)
}

#[cfg(test)]
mod tests {
    use super::*;

    const TOY: &str = "user_id,item_id,rating\n1,a,4\n1,b,1\n2,a,2\n2,b,2\n3,a,5\n3,b,5\n";

    #[test]
    fn complete_toy_file() {
        let inst = ingest_ratings_from_reader(TOY.as_bytes(), &IngestOptions::new(1, Fill::Fail, 1)).unwrap();
        assert_eq!((inst.n(), inst.m()), (3, 2));
        assert_eq!(inst.row(0), &[0.8, 0.2]);
        assert_eq!(inst.row(2), &[0.5, 0.5]);
        assert!(inst.budgets().iter().all(|&b| b > 0.0 && b < 1.0));
    }

    #[test]
    fn numeric_ids_sort_numerically() {
        let csv = "user_id,item_id,rating\n10,2,1\n9,10,3\n10,10,1\n9,2,1\n";
        let t = read_ratings(csv.as_bytes()).unwrap();
        assert_eq!(t.user_ids(), ["9", "10"]);
        assert_eq!(t.item_ids(), ["2", "10"]);
        let inst = ingest_ratings_from_reader(csv.as_bytes(), &IngestOptions::new(1, Fill::Fail, 1)).unwrap();
        assert_eq!(inst.row(0), &[0.25, 0.75]);
    }

    #[test]
    fn duplicate_pair_keeps_last() {
        let t = read_ratings("user_id,item_id,rating\nu,i,1\nu,i,3\n".as_bytes()).unwrap();
        assert_eq!(t.len(), 1);
        assert_eq!(t.iter().next().unwrap().rating, 3.0);
    }

    #[test]
    fn filtering_cascades() {
        // u3 has one rating; dropping it leaves item c with one rating, which then goes too.
        let csv = "user_id,item_id,rating\nu1,a,1\nu1,b,1\nu2,a,1\nu2,b,1\nu2,c,1\nu3,c,1\n";
        let t = filter_ratings(&read_ratings(csv.as_bytes()).unwrap(), 2);
        assert_eq!(t.user_ids(), ["u1", "u2"]);
        assert_eq!(t.item_ids(), ["a", "b"]);
        assert_eq!(filter_ratings(&t, 2), t);
    }

    #[test]
    fn missing_pair_under_fail() {
        let csv = "user_id,item_id,rating\nu1,a,1\nu1,b,1\nu2,a,1\n";
        let err = ingest_ratings_from_reader(csv.as_bytes(), &IngestOptions::new(1, Fill::Fail, 1)).unwrap_err();
        assert!(matches!(err, IoError::MissingEntry { ref user, ref item } if user == "u2" && item == "b"));
        let inst = ingest_ratings_from_reader(csv.as_bytes(), &IngestOptions::new(1, Fill::Zero, 1)).unwrap();
        assert_eq!(inst.row(1), &[1.0, 0.0]);
    }

    #[test]
    fn zero_fill_rejects_dead_rows_and_columns() {
        let csv = "user_id,item_id,rating\nu1,a,1\nu2,b,0\n";
        let err = ingest_ratings_from_reader(csv.as_bytes(), &IngestOptions::new(1, Fill::Zero, 1)).unwrap_err();
        assert!(matches!(err, IoError::ZeroUser(ref u) if u == "u2"));
        let csv = "user_id,item_id,rating\nu1,a,1\nu1,b,0\n";
        let err = ingest_ratings_from_reader(csv.as_bytes(), &IngestOptions::new(1, Fill::Zero, 1)).unwrap_err();
        assert!(matches!(err, IoError::ZeroItem(ref i) if i == "b"));
    }

    #[test]
    fn malformed_input() {
        let opts = IngestOptions::new(1, Fill::Zero, 1);
        assert!(ingest_ratings_from_reader("user,item,rating\n1,a,1\n".as_bytes(), &opts).is_err());
        assert!(ingest_ratings_from_reader("user_id,item_id,rating\n1,a,x\n".as_bytes(), &opts).is_err());
        assert!(ingest_ratings_from_reader("user_id,item_id,rating\n1,a,-1\n".as_bytes(), &opts).is_err());
        assert!(ingest_ratings_from_reader("user_id,item_id,rating\n1,a\n".as_bytes(), &opts).is_err());
        let err = ingest_ratings_from_reader(TOY.as_bytes(), &IngestOptions::new(4, Fill::Zero, 1)).unwrap_err();
        assert!(matches!(err, IoError::EmptyAfterFilter));
    }

    #[test]
    fn budgets_follow_seed() {
        let a = ingest_ratings_from_reader(TOY.as_bytes(), &IngestOptions::new(1, Fill::Zero, 1)).unwrap();
        let b = ingest_ratings_from_reader(TOY.as_bytes(), &IngestOptions::new(1, Fill::Zero, 1)).unwrap();
        let c = ingest_ratings_from_reader(TOY.as_bytes(), &IngestOptions::new(1, Fill::Zero, 2)).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.budgets(), c.budgets());
    }
}
