use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};

use petgraph::algo::tarjan_scc;
use petgraph::graph::{DiGraph, NodeIndex};
use petgraph::unionfind::UnionFind;
use serde::{Deserialize, Serialize};

use super::{FitOptions, ModelVariant, Observation};
use crate::{ArticleId, Error, Result};

/// One observation reduced to parameter slots and covariate values.
#[derive(Clone, Debug)]
pub(crate) struct Row {
    pub article: usize,
    /// Slot of the free position parameter; `None` at the reference position.
    pub position: Option<usize>,
    pub votes: f64,
    pub ln_factorial: f64,
    pub covariates: [f64; 3],
}

/// An article dropped before fitting because it had too few votes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Exclusion {
    pub article_id: ArticleId,
    pub total_votes: u64,
}

/// Dense index from articles and positions to parameter slots.
///
/// Parameter layout: one `q` per retained article, then one `p` per
/// non-reference position (ascending), then the variant's slopes in the order
/// age, log-score, social.
#[derive(Clone, Debug)]
pub struct Design {
    pub(crate) variant: ModelVariant,
    pub(crate) articles: Vec<ArticleId>,
    /// All retained positions, ascending, including the reference.
    pub(crate) positions: Vec<u32>,
    pub(crate) reference_position: u32,
    pub(crate) rows: Vec<Row>,
    pub(crate) ridge: f64,
    pub excluded: Vec<Exclusion>,
    /// Observed positions left without any usable row: every cell there was
    /// separated. Their view rate is taken to be 0.
    pub silent_positions: Vec<u32>,
    /// Zero-vote rows dropped because their rate has no finite estimate.
    pub separated_rows: usize,
    /// Indices of the input observations that made it into the design.
    pub used_rows: Vec<usize>,
}

impl Design {
    pub fn variant(&self) -> ModelVariant {
        self.variant
    }

    pub fn articles(&self) -> &[ArticleId] {
        &self.articles
    }

    pub fn positions(&self) -> &[u32] {
        &self.positions
    }

    pub fn reference_position(&self) -> u32 {
        self.reference_position
    }

    pub fn n_observations(&self) -> usize {
        self.rows.len()
    }

    pub fn n_articles(&self) -> usize {
        self.articles.len()
    }

    /// Number of free position parameters.
    pub fn n_free_positions(&self) -> usize {
        self.positions.len() - 1
    }

    pub fn n_covariates(&self) -> usize {
        self.variant.covariate_count()
    }

    pub fn dim(&self) -> usize {
        self.n_articles() + self.n_free_positions() + self.n_covariates()
    }

    /// Slot index of `position`'s parameter, or `None` for the reference.
    pub(crate) fn position_slot(&self, position: u32) -> Option<Option<usize>> {
        let idx = self.positions.binary_search(&position).ok()?;
        let ref_idx = self.positions.binary_search(&self.reference_position).ok()?;
        Some(match idx.cmp(&ref_idx) {
            std::cmp::Ordering::Equal => None,
            std::cmp::Ordering::Less => Some(idx),
            std::cmp::Ordering::Greater => Some(idx - 1),
        })
    }

    /// Component label of every article (by slot) and of every position (in
    /// [`Design::positions`] order) in the article-position graph. Labels are
    /// small integers; q and p are only comparable within one component.
    pub fn component_labels(&self) -> (Vec<usize>, Vec<usize>) {
        let na = self.n_articles();
        let np = self.positions.len();
        let mut uf = UnionFind::<usize>::new(na + np);
        let ref_idx = self.positions.binary_search(&self.reference_position).unwrap();
        for row in &self.rows {
            let pos_idx = match row.position {
                None => ref_idx,
                Some(slot) if slot < ref_idx => slot,
                Some(slot) => slot + 1,
            };
            uf.union(row.article, na + pos_idx);
        }
        let mut label: HashMap<usize, usize> = HashMap::new();
        let labels: Vec<usize> = (0..na + np)
            .map(|i| {
                let root = uf.find_mut(i);
                let next = label.len();
                *label.entry(root).or_insert(next)
            })
            .collect();
        (labels[..na].to_vec(), labels[na..].to_vec())
    }

    /// Number of connected components of the article-position graph.
    /// More than one means the q/p split is not identified by a single pin.
    pub fn connected_components(&self) -> usize {
        let (articles, positions) = self.component_labels();
        articles.iter().chain(&positions).max().map_or(0, |m| m + 1)
    }
}

/// Strongly connected component of each node.
fn strongly_connected(n: usize, edges: &[(usize, usize)]) -> Vec<usize> {
    let mut graph: DiGraph<(), ()> = DiGraph::with_capacity(n, edges.len());
    let nodes: Vec<NodeIndex> = (0..n).map(|_| graph.add_node(())).collect();
    for &(a, b) in edges {
        graph.add_edge(nodes[a], nodes[b], ());
    }
    let mut comp = vec![0; n];
    for (label, scc) in tarjan_scc(&graph).into_iter().enumerate() {
        for node in scc {
            comp[node.index()] = label;
        }
    }
    comp
}

/// Zero-vote cells whose fitted rate tends to 0 at the likelihood supremum.
///
/// Articles and positions joined by positive-vote cells share one level.
/// A zero-vote cell from article group A to position group B only requires
/// `level(A) <= level(B)`; unless a chain of such cells also leads back from
/// B to A, raising every group downstream of B drives the cell's rate to 0
/// while improving the likelihood, so the MLE does not exist until the cell
/// is dropped.
fn separated_cells(cells: &[(usize, usize, bool)], n_articles: usize, n_positions: usize) -> Vec<bool> {
    let n = n_articles + n_positions;
    let mut uf = UnionFind::<usize>::new(n);
    for &(a, p, positive) in cells {
        if positive {
            uf.union(a, n_articles + p);
        }
    }
    let group: Vec<usize> = (0..n).map(|i| uf.find_mut(i)).collect();
    let edges: Vec<(usize, usize)> = cells
        .iter()
        .filter(|c| !c.2)
        .map(|&(a, p, _)| (group[a], group[n_articles + p]))
        .filter(|(x, y)| x != y)
        .collect();
    let scc = strongly_connected(n, &edges);
    cells
        .iter()
        .map(|&(a, p, positive)| !positive && scc[group[a]] != scc[group[n_articles + p]])
        .collect()
}

fn ln_factorial(n: u64) -> f64 {
    if n < 256 {
        (2..=n).map(|k| (k as f64).ln()).sum()
    } else {
        // Stirling series; error far below 1e-15 relative at n >= 256
        let x = n as f64;
        x * x.ln() - x + 0.5 * (2.0 * std::f64::consts::PI * x).ln() + 1.0 / (12.0 * x)
            - 1.0 / (360.0 * x.powi(3))
    }
}

pub(crate) fn covariates(variant: ModelVariant, age_hours: f64, displayed_score: i64) -> [f64; 3] {
    let mut out = [0.0; 3];
    let mut k = 0;
    if variant.has_age() {
        out[k] = age_hours;
        k += 1;
    }
    if variant.has_score() {
        out[k] = (displayed_score.max(1) as f64).ln();
        k += 1;
    }
    if variant.has_social() {
        out[k] = displayed_score.max(0) as f64;
    }
    out
}

/// Check an observation set and map it onto parameter slots.
///
/// Articles whose total votes fall below `options.min_article_votes` are
/// dropped and listed in [`Design::excluded`]. Unless
/// `options.drop_separated` is off, zero-vote rows whose rate would be
/// driven to 0 are dropped as well; positions left empty by that are listed
/// in [`Design::silent_positions`].
pub fn build_design(
    observations: &[Observation],
    variant: ModelVariant,
    options: &FitOptions,
) -> Result<Design> {
    if observations.is_empty() {
        return Err(Error::InvalidArgument("no observations".into()));
    }
    let mut seen = HashSet::with_capacity(observations.len());
    let mut totals: BTreeMap<&ArticleId, u64> = BTreeMap::new();
    for obs in observations {
        if obs.position == 0 {
            return Err(Error::Malformed(format!(
                "article {} at bucket {} has position 0",
                obs.article_id, obs.bucket
            )));
        }
        if !(obs.age_hours >= 0.0 && obs.age_hours.is_finite()) {
            return Err(Error::Malformed(format!(
                "article {} at bucket {} has age {}",
                obs.article_id, obs.bucket, obs.age_hours
            )));
        }
        if variant == ModelVariant::MusicLab && obs.total_votes() > 1 {
            return Err(Error::Malformed(format!(
                "download indicator for {} at bucket {} is {}",
                obs.article_id,
                obs.bucket,
                obs.total_votes()
            )));
        }
        if !seen.insert((obs.bucket, &obs.article_id)) {
            return Err(Error::Malformed(format!(
                "duplicate observation of {} at bucket {}",
                obs.article_id, obs.bucket
            )));
        }
        *totals.entry(&obs.article_id).or_default() += obs.total_votes();
    }

    // Candidate rows: articles above the vote threshold. With separation
    // checks on, zero-vote cells that push an effect to infinity go too.
    let eligible: Vec<usize> = (0..observations.len())
        .filter(|&i| totals[&observations[i].article_id] >= options.min_article_votes)
        .collect();
    let mut keep = vec![true; eligible.len()];
    let mut separated = 0;
    if options.drop_separated && !eligible.is_empty() {
        let mut a_idx: HashMap<&ArticleId, usize> = HashMap::new();
        let mut p_idx: HashMap<u32, usize> = HashMap::new();
        let cells: Vec<(usize, usize, bool)> = eligible
            .iter()
            .map(|&i| {
                let o = &observations[i];
                let na = a_idx.len();
                let np = p_idx.len();
                let a = *a_idx.entry(&o.article_id).or_insert(na);
                let p = *p_idx.entry(o.position).or_insert(np);
                (a, p, o.total_votes() > 0)
            })
            .collect();
        let dropped = separated_cells(&cells, a_idx.len(), p_idx.len());
        for (k, d) in keep.iter_mut().zip(&dropped) {
            *k = !d;
        }
        separated = dropped.iter().filter(|&&d| d).count();
    }
    let used: Vec<usize> = eligible.iter().zip(&keep).filter(|(_, &k)| k).map(|(&i, _)| i).collect();

    let used_articles: BTreeSet<&ArticleId> = used.iter().map(|&i| &observations[i].article_id).collect();
    let mut excluded = Vec::new();
    let mut article_slot: HashMap<&ArticleId, usize> = HashMap::new();
    let mut articles = Vec::new();
    for (&id, &total) in &totals {
        if used_articles.contains(id) {
            article_slot.insert(id, articles.len());
            articles.push(id.clone());
        } else {
            excluded.push(Exclusion { article_id: id.clone(), total_votes: total });
        }
    }
    if articles.is_empty() {
        return Err(Error::EmptyDesign);
    }

    let positions: Vec<u32> =
        used.iter().map(|&i| observations[i].position).collect::<BTreeSet<_>>().into_iter().collect();
    let silent_positions: Vec<u32> = observations
        .iter()
        .filter(|o| article_slot.contains_key(&o.article_id))
        .map(|o| o.position)
        .collect::<BTreeSet<_>>()
        .into_iter()
        .filter(|p| positions.binary_search(p).is_err())
        .collect();
    let reference_position = match options.reference_position {
        Some(r) if positions.binary_search(&r).is_ok() => r,
        Some(r) => return Err(Error::UnknownPosition(r)),
        None => positions[0],
    };

    let mut design = Design {
        variant,
        articles,
        positions,
        reference_position,
        rows: Vec::with_capacity(observations.len()),
        ridge: options.ridge,
        excluded,
        silent_positions,
        separated_rows: separated,
        used_rows: used.clone(),
    };
    for &i in &used {
        let obs = &observations[i];
        let article = article_slot[&obs.article_id];
        let position = design.position_slot(obs.position).expect("position collected above");
        let votes = obs.total_votes();
        design.rows.push(Row {
            article,
            position,
            votes: votes as f64,
            ln_factorial: ln_factorial(votes),
            covariates: covariates(variant, obs.age_hours, obs.displayed_score),
        });
    }
    Ok(design)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ln_factorial_matches_direct_sum_across_switch() {
        for n in [0u64, 1, 2, 10, 255, 256, 300, 1000] {
            let direct: f64 = (2..=n).map(|k| (k as f64).ln()).sum();
            assert!((ln_factorial(n) - direct).abs() <= 1e-12 * direct.max(1.0), "n = {n}");
        }
    }

    #[test]
    fn one_way_zero_cell_is_separated() {
        // A@1 and B@2 carry votes; the zero cell A@2 only bounds
        // level(A) <= level(B), so it is separated.
        let cells = [(0, 0, true), (1, 1, true), (0, 1, false)];
        assert_eq!(separated_cells(&cells, 2, 2), [false, false, true]);
        // A zero cell back from B to position 1 closes the cycle.
        let cells = [(0, 0, true), (1, 1, true), (0, 1, false), (1, 0, false)];
        assert_eq!(separated_cells(&cells, 2, 2), [false; 4]);
    }

    #[test]
    fn zero_cells_inside_a_group_are_kept() {
        let cells = [(0, 0, true), (0, 1, true), (1, 0, true), (1, 1, false), (2, 1, false)];
        // Article 2 never gets a vote: its only cell is separated.
        assert_eq!(separated_cells(&cells, 3, 2), [false, false, false, false, true]);
    }

    #[test]
    fn scc_labels_cycles_together() {
        let comp = strongly_connected(5, &[(0, 1), (1, 2), (2, 0), (2, 3), (4, 4)]);
        assert_eq!(comp[0], comp[1]);
        assert_eq!(comp[1], comp[2]);
        assert_ne!(comp[2], comp[3]);
        assert_ne!(comp[3], comp[4]);
    }
}
