//! Season-level data ingestion, covariate encoding, and cohort filters.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// The nine non-pitcher positions, in fixed index order.
pub const POSITIONS: [&str; 9] = ["1B", "2B", "3B", "SS", "LF", "CF", "RF", "C", "DH"];

pub fn position_index(label: &str) -> Option<usize> {
    POSITIONS.iter().position(|p| p.eq_ignore_ascii_case(label))
}

/// One observed player-year.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlayerSeason {
    pub player_id: String,
    pub year: i32,
    pub hr: u32,
    pub ab: u32,
    pub age: i32,
    /// Index into [`Dataset::parks`].
    pub park: usize,
    /// Index into [`POSITIONS`].
    pub position: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlayerGroup {
    pub id: String,
    /// Start of this player's contiguous run in `Dataset::seasons`.
    pub start: usize,
    pub len: usize,
}

impl PlayerGroup {
    pub fn range(&self) -> std::ops::Range<usize> {
        self.start..self.start + self.len
    }
}

/// Season records grouped per player (ascending year within player,
/// players in lexicographic id order) plus the covariate index tables.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Dataset {
    pub seasons: Vec<PlayerSeason>,
    pub players: Vec<PlayerGroup>,
    /// Park name per index, lexicographically sorted.
    pub parks: Vec<String>,
    pub year_range: (i32, i32),
}

impl Dataset {
    pub fn n_players(&self) -> usize {
        self.players.len()
    }

    pub fn n_parks(&self) -> usize {
        self.parks.len()
    }

    pub fn n_seasons(&self) -> usize {
        self.seasons.len()
    }

    pub fn player_seasons(&self, i: usize) -> &[PlayerSeason] {
        &self.seasons[self.players[i].range()]
    }

    pub fn player_index(&self, id: &str) -> Option<usize> {
        self.players
            .binary_search_by(|g| g.id.as_str().cmp(id))
            .ok()
    }

    pub fn park_index(&self, name: &str) -> Option<usize> {
        self.parks.binary_search_by(|p| p.as_str().cmp(name)).ok()
    }

    /// Lower median of all season ages; the reference age at which the
    /// fitted trajectories are pinned to zero.
    pub fn median_age(&self) -> f64 {
        if self.seasons.is_empty() {
            return 0.0;
        }
        let mut ages: Vec<i32> = self.seasons.iter().map(|s| s.age).collect();
        ages.sort_unstable();
        ages[(ages.len() - 1) / 2] as f64
    }

    pub fn age_range(&self) -> (i32, i32) {
        let lo = self.seasons.iter().map(|s| s.age).min().unwrap_or(20);
        let hi = self.seasons.iter().map(|s| s.age).max().unwrap_or(49);
        (lo, hi)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IngestConfig {
    pub delimiter: u8,
    pub year_min: i32,
    pub year_max: i32,
    /// Rows with fewer at-bats are dropped; zero-AB rows always are.
    pub min_ab: u32,
    pub age_min: i32,
    pub age_max: i32,
}

impl Default for IngestConfig {
    fn default() -> Self {
        IngestConfig {
            delimiter: b',',
            year_min: 1990,
            year_max: 2005,
            min_ab: 1,
            age_min: 20,
            age_max: 49,
        }
    }
}

const COLUMNS: [(&str, &[&str]); 7] = [
    ("player_id", &["player_id", "playerid", "player"]),
    ("year", &["year", "yearid", "season"]),
    ("hr", &["hr", "homeruns"]),
    ("ab", &["ab", "atbats"]),
    ("age", &["age"]),
    ("park", &["park", "ballpark"]),
    ("position", &["position", "pos"]),
];

struct ColumnMap {
    idx: [usize; 7],
}

fn resolve_columns(headers: &csv::StringRecord, path: &Path) -> Result<ColumnMap> {
    let mut idx = [usize::MAX; 7];
    for (slot, (canonical, aliases)) in COLUMNS.iter().enumerate() {
        for (i, h) in headers.iter().enumerate() {
            let h = h.trim();
            if aliases.iter().any(|a| h.eq_ignore_ascii_case(a)) {
                idx[slot] = i;
                break;
            }
        }
        if idx[slot] == usize::MAX {
            return Err(Error::MissingColumn {
                column: canonical.to_string(),
                path: path.to_path_buf(),
            });
        }
    }
    Ok(ColumnMap { idx })
}

fn parse_field<T: std::str::FromStr>(raw: &str, name: &str, line: u64) -> Result<T> {
    raw.trim()
        .parse::<T>()
        .map_err(|_| Error::Data(format!("line {line}: cannot parse {name} from `{raw}`")))
}

/// Load season records, applying the year window, the pitcher exclusion
/// (any position outside the nine fielder/DH labels is dropped), the
/// zero-AB and minimum-AB drops, and the admissible age window. Park
/// indices are assigned by lexicographic park-name order; players are
/// ordered lexicographically by id with seasons ascending in year.
pub fn load_seasons(path: impl AsRef<Path>, config: &IngestConfig) -> Result<Dataset> {
    let path = path.as_ref();
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(config.delimiter)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_path(path)
        .map_err(|e| match e.kind() {
            csv::ErrorKind::Io(_) => Error::io(path, std::io::Error::other(e.to_string())),
            _ => Error::Data(format!("{}: {e}", path.display())),
        })?;
    let headers = reader
        .headers()
        .map_err(|e| Error::Data(format!("{}: {e}", path.display())))?
        .clone();
    let cols = resolve_columns(&headers, path)?;

    struct RawRow {
        year: i32,
        hr: u32,
        ab: u32,
        age: i32,
        park: String,
        position: usize,
    }

    let mut by_player: BTreeMap<String, BTreeMap<i32, RawRow>> = BTreeMap::new();
    let mut park_names: Vec<String> = Vec::new();

    for record in reader.records() {
        let record = record.map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let field = |slot: usize| record.get(cols.idx[slot]).unwrap_or("");

        let position = match position_index(field(6)) {
            Some(p) => p,
            None => continue, // pitchers and anything unrecognized
        };
        let year: i32 = parse_field(field(1), "year", line)?;
        let hr: u32 = parse_field(field(2), "hr", line)?;
        let ab: u32 = parse_field(field(3), "ab", line)?;
        let age: i32 = parse_field(field(4), "age", line)?;
        let player_id = field(0).to_string();
        if player_id.is_empty() {
            return Err(Error::Data(format!("line {line}: empty player id")));
        }
        if hr > ab {
            return Err(Error::Data(format!(
                "line {line}: player {player_id} year {year} has hr {hr} > ab {ab}"
            )));
        }
        if year < config.year_min || year > config.year_max {
            continue;
        }
        if ab == 0 || ab < config.min_ab {
            continue;
        }
        if age < config.age_min || age > config.age_max {
            continue;
        }
        let park = field(5).to_string();
        let prev = by_player.entry(player_id.clone()).or_default().insert(
            year,
            RawRow {
                year,
                hr,
                ab,
                age,
                park: park.clone(),
                position,
            },
        );
        if prev.is_some() {
            return Err(Error::Data(format!(
                "line {line}: duplicate (player, year) key ({player_id}, {year})"
            )));
        }
        if !park_names.contains(&park) {
            park_names.push(park);
        }
    }

    park_names.sort();
    let park_of = |name: &str| park_names.binary_search_by(|p| p.as_str().cmp(name)).unwrap();

    let mut seasons = Vec::new();
    let mut players = Vec::new();
    let mut year_lo = i32::MAX;
    let mut year_hi = i32::MIN;
    for (id, rows) in by_player {
        let start = seasons.len();
        for (_, r) in rows {
            year_lo = year_lo.min(r.year);
            year_hi = year_hi.max(r.year);
            seasons.push(PlayerSeason {
                player_id: id.clone(),
                year: r.year,
                hr: r.hr,
                ab: r.ab,
                age: r.age,
                park: park_of(&r.park),
                position: r.position,
            });
        }
        players.push(PlayerGroup {
            id,
            start,
            len: seasons.len() - start,
        });
    }
    if seasons.is_empty() {
        year_lo = config.year_min;
        year_hi = config.year_max;
    }

    Ok(Dataset {
        seasons,
        players,
        parks: park_names,
        year_range: (year_lo, year_hi),
    })
}

/// Write a dataset back out in the ingest format (load → write → load is
/// the identity).
pub fn write_seasons(d: &Dataset, path: impl AsRef<Path>, delimiter: u8) -> Result<()> {
    let path = path.as_ref();
    let mut out = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let sep = delimiter as char;
    writeln!(
        out,
        "player_id{sep}year{sep}hr{sep}ab{sep}age{sep}park{sep}position"
    )
    .map_err(|e| Error::io(path, e))?;
    for s in &d.seasons {
        writeln!(
            out,
            "{}{sep}{}{sep}{}{sep}{}{sep}{}{sep}{}{sep}{}",
            s.player_id,
            s.year,
            s.hr,
            s.ab,
            s.age,
            d.parks[s.park],
            POSITIONS[s.position]
        )
        .map_err(|e| Error::io(path, e))?;
    }
    Ok(())
}

/// Retain exactly the players with at least one season of `min_ab` or more
/// at-bats and an HR rate of at least one per `rate_denominator` at-bats
/// (inclusive); all seasons of a retained player are kept.
pub fn elite_hitter_filter(d: &Dataset, min_ab: u32, rate_denominator: u32) -> Dataset {
    let keep: Vec<bool> = d
        .players
        .iter()
        .map(|g| {
            d.seasons[g.range()]
                .iter()
                .any(|s| s.ab >= min_ab && u64::from(s.hr) * u64::from(rate_denominator) >= u64::from(s.ab))
        })
        .collect();

    let mut seasons = Vec::new();
    let mut players = Vec::new();
    let mut used_parks = vec![false; d.parks.len()];
    for (g, keep) in d.players.iter().zip(&keep) {
        if !keep {
            continue;
        }
        let start = seasons.len();
        for s in &d.seasons[g.range()] {
            used_parks[s.park] = true;
            seasons.push(s.clone());
        }
        players.push(PlayerGroup {
            id: g.id.clone(),
            start,
            len: seasons.len() - start,
        });
    }

    // Reindex parks against the surviving season set so every table entry
    // stays resolvable.
    let parks: Vec<String> = d
        .parks
        .iter()
        .zip(&used_parks)
        .filter(|(_, u)| **u)
        .map(|(p, _)| p.clone())
        .collect();
    let park_of = |old: usize| {
        parks
            .binary_search_by(|p| p.as_str().cmp(&d.parks[old]))
            .unwrap()
    };
    for s in &mut seasons {
        s.park = park_of(s.park);
    }
    let year_range = if seasons.is_empty() {
        d.year_range
    } else {
        (
            seasons.iter().map(|s| s.year).min().unwrap(),
            seasons.iter().map(|s| s.year).max().unwrap(),
        )
    };
    Dataset {
        seasons,
        players,
        parks,
        year_range,
    }
}

/// Partition by prediction-season age: `young` holds entries with
/// age ≤ cutoff, `old` the rest.
pub fn split_by_age<T>(items: Vec<T>, age: impl Fn(&T) -> i32, cutoff: i32) -> (Vec<T>, Vec<T>) {
    let mut young = Vec::new();
    let mut old = Vec::new();
    for item in items {
        if age(&item) <= cutoff {
            young.push(item);
        } else {
            old.push(item);
        }
    }
    (young, old)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write_tmp(contents: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        f
    }

    const HEADER: &str = "player_id,year,hr,ab,age,park,position\n";

    #[test]
    fn loads_basic_rows() {
        let f = write_tmp(&format!(
            "{HEADER}bondsba01,2001,73,664,36,SFO,LF\naardsda01,1995,2,100,23,NYC,2B\n"
        ));
        let d = load_seasons(f.path(), &IngestConfig::default()).unwrap();
        assert_eq!(d.n_seasons(), 2);
        assert_eq!(d.n_players(), 2);
        // Players lexicographic, seasons grouped.
        assert_eq!(d.players[0].id, "aardsda01");
        let bonds = &d.seasons[d.players[1].range()][0];
        assert_eq!(bonds.hr, 73);
        assert_eq!(bonds.ab, 664);
        assert_eq!(bonds.position, position_index("LF").unwrap());
        // Parks sorted lexicographically.
        assert_eq!(d.parks, vec!["NYC".to_string(), "SFO".to_string()]);
    }

    #[test]
    fn empty_file_with_header() {
        let f = write_tmp(HEADER);
        let d = load_seasons(f.path(), &IngestConfig::default()).unwrap();
        assert_eq!(d.n_seasons(), 0);
        assert_eq!(d.n_players(), 0);
    }

    #[test]
    fn excludes_pitchers_and_filters() {
        let f = write_tmp(&format!(
            "{HEADER}\
             a,1995,5,300,25,X,P\n\
             b,1995,5,300,25,X,1B\n\
             c,1989,5,300,25,X,1B\n\
             d,1995,0,0,25,X,1B\n\
             e,1995,5,300,19,X,1B\n"
        ));
        let d = load_seasons(f.path(), &IngestConfig::default()).unwrap();
        assert_eq!(d.n_players(), 1);
        assert_eq!(d.players[0].id, "b");
    }

    #[test]
    fn schema_error_names_column() {
        let f = write_tmp("player_id,year,hr,ab,age,park\nx,1995,1,10,25,Y\n");
        let err = load_seasons(f.path(), &IngestConfig::default()).unwrap_err();
        match err {
            Error::MissingColumn { column, .. } => assert_eq!(column, "position"),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn data_errors_name_rows() {
        let f = write_tmp(&format!("{HEADER}x,1995,20,10,25,Y,1B\n"));
        let err = load_seasons(f.path(), &IngestConfig::default()).unwrap_err();
        assert!(err.to_string().contains("hr 20 > ab 10"), "{err}");

        let f = write_tmp(&format!("{HEADER}x,1995,zz,10,25,Y,1B\n"));
        let err = load_seasons(f.path(), &IngestConfig::default()).unwrap_err();
        assert!(err.to_string().contains("line 2"), "{err}");

        let f = write_tmp(&format!("{HEADER}x,1995,1,10,25,Y,1B\nx,1995,2,20,25,Y,1B\n"));
        let err = load_seasons(f.path(), &IngestConfig::default()).unwrap_err();
        assert!(err.to_string().contains("duplicate"), "{err}");
    }

    #[test]
    fn years_strictly_increasing_within_player() {
        let f = write_tmp(&format!(
            "{HEADER}x,1997,1,10,27,Y,1B\nx,1995,1,10,25,Y,1B\nx,1996,1,10,26,Y,1B\n"
        ));
        let d = load_seasons(f.path(), &IngestConfig::default()).unwrap();
        let years: Vec<i32> = d.player_seasons(0).iter().map(|s| s.year).collect();
        assert_eq!(years, vec![1995, 1996, 1997]);
        let total: usize = d.players.iter().map(|g| g.len).sum();
        assert_eq!(total, d.n_seasons());
    }

    #[test]
    fn roundtrip_is_identity() {
        let f = write_tmp(&format!(
            "{HEADER}\
             bondsba01,2001,73,664,36,SFO,LF\n\
             bondsba01,2002,46,403,37,SFO,LF\n\
             aardsda01,1995,2,100,23,NYC,2B\n\
             zzz,2000,12,400,30,ARL,DH\n"
        ));
        let d = load_seasons(f.path(), &IngestConfig::default()).unwrap();
        let out = tempfile::NamedTempFile::new().unwrap();
        write_seasons(&d, out.path(), b',').unwrap();
        let d2 = load_seasons(out.path(), &IngestConfig::default()).unwrap();
        assert_eq!(d, d2);
    }

    #[test]
    fn elite_filter_boundaries() {
        let f = write_tmp(&format!(
            "{HEADER}\
             exact,1995,10,400,25,Y,1B\n\
             exact,1996,0,350,26,Y,1B\n\
             under,1995,20,299,25,Y,1B\n\
             slow,1995,9,400,25,Y,1B\n"
        ));
        let d = load_seasons(f.path(), &IngestConfig::default()).unwrap();
        let filtered = elite_hitter_filter(&d, 300, 40);
        assert_eq!(filtered.n_players(), 1);
        assert_eq!(filtered.players[0].id, "exact");
        // All seasons of a retained player are kept.
        assert_eq!(filtered.n_seasons(), 2);
    }

    #[test]
    fn elite_filter_is_monotone() {
        // Adding a season to a retained player never drops them.
        let base = format!("{HEADER}a,1995,10,400,25,Y,1B\n");
        let more = format!("{HEADER}a,1995,10,400,25,Y,1B\na,1996,0,100,26,Y,1B\n");
        let fa = write_tmp(&base);
        let fb = write_tmp(&more);
        let da = load_seasons(fa.path(), &IngestConfig::default()).unwrap();
        let db = load_seasons(fb.path(), &IngestConfig::default()).unwrap();
        assert_eq!(elite_hitter_filter(&da, 300, 40).n_players(), 1);
        assert_eq!(elite_hitter_filter(&db, 300, 40).n_players(), 1);
    }

    #[test]
    fn split_by_age_boundary() {
        let (young, old) = split_by_age(vec![24, 26, 27], |a| *a, 26);
        assert_eq!(young, vec![24, 26]);
        assert_eq!(old, vec![27]);
        let (young, old) = split_by_age(Vec::<i32>::new(), |a| *a, 26);
        assert!(young.is_empty() && old.is_empty());
    }

    #[test]
    fn median_age_lower_median() {
        let f = write_tmp(&format!(
            "{HEADER}a,1995,1,10,24,Y,1B\nb,1995,1,10,26,Y,1B\nc,1995,1,10,30,Y,1B\nd,1995,1,10,31,Y,1B\n"
        ));
        let d = load_seasons(f.path(), &IngestConfig::default()).unwrap();
        assert_eq!(d.median_age(), 26.0);
    }
}
