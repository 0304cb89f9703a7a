//! Haplotype frequency estimation from unphased biallelic genotypes.
//!
//! Under random mating without recombination an individual's genotype is the
//! locus-wise union of two haplotypes drawn independently from the population
//! pool, so `P(Y_i) = sum over compatible (j, k) of theta_j theta_k` with
//! ordered pairs. An unordered heterozygous pair therefore weighs
//! `2 theta_j theta_k` and a homozygous pair `theta_j^2`.

use std::collections::{BTreeMap, BTreeSet};

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::em::{multi_start, EmConfig, EmProblem, EmTrace, StepContext};
use crate::numeric::{argmax, NeumaierSum};
use crate::seqio::{Genotype, GenotypeTable, LocusCoding};
use crate::{Error, Real, Result};

/// Default cap on heterozygous loci per individual (`2^19` phase pairs).
pub const MAX_HETEROZYGOUS: usize = 20;
/// Lower bound applied to frequencies between iterations.
pub const FREQUENCY_FLOOR: f64 = 1e-12;
/// Fitted frequencies below this are reported as zero.
pub const REPORT_ZERO_BELOW: f64 = 1e-8;

/// Allele (0 or 1) per locus.
pub type Haplotype = Vec<u8>;

/// Renders a haplotype with the locus allele labels, e.g. `ACGC`.
pub fn render(haplotype: &[u8], loci: &[LocusCoding]) -> String {
    haplotype
        .iter()
        .zip(loci)
        .map(|(&a, l)| l.label(a))
        .collect()
}

/// The `max(1, 2^(h-1))` unordered haplotype pairs compatible with `genotypes`,
/// each stored smaller haplotype first, in lexicographic order.
pub fn compatible_pairs(
    genotypes: &[Genotype],
    individual: &str,
    max_heterozygous: usize,
) -> Result<Vec<(Haplotype, Haplotype)>> {
    let het: Vec<usize> = (0..genotypes.len())
        .filter(|&l| genotypes[l].is_heterozygous())
        .collect();
    if het.len() > max_heterozygous {
        return Err(Error::Capacity {
            individual: individual.to_string(),
            heterozygous: het.len(),
            limit: max_heterozygous,
        });
    }
    let base: Haplotype = genotypes.iter().map(|g| g.lo).collect();
    let free = het.len().saturating_sub(1);
    let mut pairs = Vec::with_capacity(1 << free);
    for mask in 0u64..(1u64 << free) {
        let mut a = base.clone();
        let mut b = base.clone();
        if let Some(&first) = het.first() {
            b[first] = 1;
        }
        for (bit, &l) in het.iter().skip(1).enumerate() {
            if mask >> bit & 1 == 1 {
                a[l] = 1;
            } else {
                b[l] = 1;
            }
        }
        pairs.push(if a <= b { (a, b) } else { (b, a) });
    }
    pairs.sort();
    Ok(pairs)
}

/// Distinct haplotypes in lexicographic order with their frequencies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HaplotypePool<T> {
    pub haplotypes: Vec<Haplotype>,
    pub frequencies: Vec<T>,
}

/// Pool plus, per individual, its compatible pairs as pool indices.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseProblemData<T> {
    pub pool: HaplotypePool<T>,
    pub pairs: Vec<Vec<(usize, usize)>>,
}

/// Collects every haplotype appearing in any compatible pair; frequencies start uniform.
pub fn build_pool<T: Real>(
    table: &GenotypeTable,
    max_heterozygous: usize,
) -> Result<PhaseProblemData<T>> {
    if table.is_empty() || table.num_loci() == 0 {
        return Err(Error::Input(
            "genotype table needs at least one individual and one locus".into(),
        ));
    }
    let per_individual = table
        .genotypes
        .par_iter()
        .zip(&table.ids)
        .map(|(g, id)| compatible_pairs(g, id, max_heterozygous))
        .collect::<Result<Vec<_>>>()?;
    let set: BTreeSet<&Haplotype> = per_individual
        .iter()
        .flatten()
        .flat_map(|(a, b)| [a, b])
        .collect();
    let haplotypes: Vec<Haplotype> = set.into_iter().cloned().collect();
    let index: BTreeMap<&Haplotype, usize> =
        haplotypes.iter().enumerate().map(|(i, h)| (h, i)).collect();
    let pairs = per_individual
        .iter()
        .map(|ps| ps.iter().map(|(a, b)| (index[a], index[b])).collect())
        .collect();
    let m = haplotypes.len();
    Ok(PhaseProblemData {
        pool: HaplotypePool {
            frequencies: vec![T::one() / T::from_usize_lossy(m); m],
            haplotypes,
        },
        pairs,
    })
}

fn pair_weight<T: Real>(theta: &[T], (j, k): (usize, usize)) -> T {
    if j == k {
        theta[j] * theta[j]
    } else {
        T::lit(2.0) * theta[j] * theta[k]
    }
}

/// Posterior over one individual's compatible pairs and the log of its mass.
pub fn pair_posteriors<T: Real>(
    theta: &[T],
    pairs: &[(usize, usize)],
    individual: &str,
) -> Result<(Vec<T>, T)> {
    let w: Vec<T> = pairs.iter().map(|&p| pair_weight(theta, p)).collect();
    let total: T = w.iter().copied().collect::<NeumaierSum<T>>().value();
    if !(total > T::zero()) {
        return Err(Error::Numerical(format!(
            "individual {individual:?} has zero compatibility mass"
        )));
    }
    Ok((w.into_iter().map(|x| x / total).collect(), total.ln()))
}

/// Expected haplotype counts `E[n_j]` and the log-likelihood.
pub fn e_step<T: Real>(
    pairs: &[Vec<(usize, usize)>],
    ids: &[String],
    theta: &[T],
) -> Result<(Vec<T>, T)> {
    let per = pairs
        .par_iter()
        .zip(ids)
        .map(|(ps, id)| pair_posteriors(theta, ps, id))
        .collect::<Result<Vec<_>>>()?;
    let mut counts = vec![NeumaierSum::default(); theta.len()];
    let mut ll = NeumaierSum::default();
    for ((post, l), ps) in per.iter().zip(pairs) {
        ll.add(*l);
        for (&g, &(j, k)) in post.iter().zip(ps) {
            counts[j].add(g);
            counts[k].add(g);
        }
    }
    Ok((counts.iter().map(NeumaierSum::value).collect(), ll.value()))
}

/// `theta_j = E[n_j] / 2n`.
pub fn m_step<T: Real>(expected_counts: &[T], num_individuals: usize) -> Vec<T> {
    let denom = T::lit(2.0) * T::from_usize_lossy(num_individuals);
    expected_counts.iter().map(|&c| c / denom).collect()
}

fn floor_and_normalize<T: Real>(theta: &mut [T]) {
    let floor = T::lit(FREQUENCY_FLOOR);
    theta.iter_mut().for_each(|x| *x = x.max(floor));
    let s: T = theta.iter().copied().sum();
    theta.iter_mut().for_each(|x| *x /= s);
}

/// Haplotype frequency estimation as an [`EmProblem`].
pub struct PhaseProblem<'a, T> {
    data: &'a PhaseProblemData<T>,
    ids: &'a [String],
}

impl<'a, T: Real> PhaseProblem<'a, T> {
    pub fn new(data: &'a PhaseProblemData<T>, ids: &'a [String]) -> Self {
        PhaseProblem { data, ids }
    }
}

impl<T: Real> EmProblem for PhaseProblem<'_, T> {
    type Scalar = T;
    type Params = Vec<T>;
    type Stats = Vec<T>;

    /// Uniform frequencies on restart 0, flat-Dirichlet draws afterwards.
    fn initialize(&self, restart: usize, rng: &mut ChaCha8Rng) -> Result<Vec<T>> {
        let m = self.data.pool.haplotypes.len();
        if restart == 0 {
            return Ok(self.data.pool.frequencies.clone());
        }
        let mut theta: Vec<T> = (0..m).map(|_| T::lit(rng.sample::<f64, _>(Exp1))).collect();
        floor_and_normalize(&mut theta);
        Ok(theta)
    }

    fn e_step(&self, theta: &Vec<T>, _: StepContext) -> Result<(Vec<T>, T)> {
        e_step(&self.data.pairs, self.ids, theta)
    }

    fn m_step(&self, counts: &Vec<T>, _: &Vec<T>) -> Result<Vec<T>> {
        let mut theta = m_step(counts, self.ids.len());
        floor_and_normalize(&mut theta);
        Ok(theta)
    }

    fn log_likelihood(&self, theta: &Vec<T>) -> Result<T> {
        Ok(e_step(&self.data.pairs, self.ids, theta)?.1)
    }
}

/// Most probable phase of one individual.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseCall<T> {
    /// Pool indices, smaller haplotype first.
    pub first: usize,
    pub second: usize,
    pub posterior: T,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseResult<T> {
    /// Fitted pool; frequencies below the reporting threshold are exact zeros.
    pub pool: HaplotypePool<T>,
    pub calls: Vec<PhaseCall<T>>,
    /// Log-likelihood at the fitted (unrounded) frequencies.
    pub loglik: T,
    pub trace: EmTrace<T>,
    pub best_restart: usize,
}

/// Estimates pool frequencies by multi-start EM and calls each individual's
/// maximum-posterior phase, ties going to the earlier pair in canonical order.
pub fn phase<T: Real>(
    table: &GenotypeTable,
    em: &EmConfig,
    max_heterozygous: usize,
) -> Result<PhaseResult<T>> {
    let data = build_pool::<T>(table, max_heterozygous)?;
    let problem = PhaseProblem::new(&data, &table.ids);
    let result = multi_start(&problem, em)?;
    let theta = result.best.params;
    let mut calls = Vec::with_capacity(table.num_individuals());
    let mut ll = NeumaierSum::default();
    for (ps, id) in data.pairs.iter().zip(&table.ids) {
        let (post, l) = pair_posteriors(&theta, ps, id)?;
        ll.add(l);
        let best = argmax(&post).expect("at least one compatible pair");
        calls.push(PhaseCall {
            first: ps[best].0,
            second: ps[best].1,
            posterior: post[best],
        });
    }
    let mut reported = theta.clone();
    let cut = T::lit(REPORT_ZERO_BELOW);
    reported
        .iter_mut()
        .filter(|x| **x < cut)
        .for_each(|x| *x = T::zero());
    let s: T = reported.iter().copied().sum();
    reported.iter_mut().for_each(|x| *x /= s);
    Ok(PhaseResult {
        pool: HaplotypePool {
            haplotypes: data.pool.haplotypes,
            frequencies: reported,
        },
        calls,
        loglik: ll.value(),
        trace: result.best.trace,
        best_restart: result.best.index,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seqio::parse_genotypes;
    use proptest::prelude::*;

    const THREE_INDIVIDUALS: &str = "\
ind1 A/A C/C A/G C/C
ind2 A/T C/C A/G C/C
ind3 T/T G/G A/A C/T
";

    fn table() -> GenotypeTable {
        parse_genotypes(THREE_INDIVIDUALS.as_bytes()).unwrap()
    }

    fn names(pool: &HaplotypePool<f64>, loci: &[LocusCoding]) -> Vec<String> {
        pool.haplotypes.iter().map(|h| render(h, loci)).collect()
    }

    #[test]
    fn single_heterozygote_has_one_phase() {
        let t = table();
        let pairs = compatible_pairs(&t.genotypes[0], "ind1", MAX_HETEROZYGOUS).unwrap();
        let rendered: Vec<(String, String)> = pairs
            .iter()
            .map(|(a, b)| (render(a, &t.loci), render(b, &t.loci)))
            .collect();
        assert_eq!(rendered, vec![("ACAC".to_string(), "ACGC".to_string())]);
    }

    #[test]
    fn two_heterozygotes_have_two_phases() {
        let t = table();
        let pairs = compatible_pairs(&t.genotypes[1], "ind2", MAX_HETEROZYGOUS).unwrap();
        let rendered: Vec<(String, String)> = pairs
            .iter()
            .map(|(a, b)| (render(a, &t.loci), render(b, &t.loci)))
            .collect();
        assert_eq!(
            rendered,
            vec![
                ("ACAC".to_string(), "TCGC".to_string()),
                ("ACGC".to_string(), "TCAC".to_string())
            ]
        );
    }

    #[test]
    fn homozygote_pairs_with_itself() {
        let g = vec![Genotype::new(1, 1), Genotype::new(0, 0)];
        assert_eq!(
            compatible_pairs(&g, "x", 20).unwrap(),
            vec![(vec![1, 0], vec![1, 0])]
        );
    }

    #[test]
    fn pair_count_law() {
        for h in 0..=6usize {
            let g: Vec<Genotype> = (0..8)
                .map(|l| {
                    if l < h {
                        Genotype::new(0, 1)
                    } else {
                        Genotype::new(1, 1)
                    }
                })
                .collect();
            let pairs = compatible_pairs(&g, "x", 20).unwrap();
            assert_eq!(pairs.len(), 1usize.max(1 << h.saturating_sub(1)), "h = {h}");
            let distinct: BTreeSet<_> = pairs.iter().collect();
            assert_eq!(distinct.len(), pairs.len());
        }
    }

    #[test]
    fn too_many_heterozygotes_name_the_individual() {
        let g = vec![Genotype::new(0, 1); 4];
        match compatible_pairs(&g, "busy", 3).unwrap_err() {
            Error::Capacity {
                individual,
                heterozygous,
                limit,
            } => {
                assert_eq!((individual.as_str(), heterozygous, limit), ("busy", 4, 3));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn pool_of_three_individuals() {
        let t = table();
        let data = build_pool::<f64>(&t, MAX_HETEROZYGOUS).unwrap();
        assert_eq!(
            names(&data.pool, &t.loci),
            vec!["ACAC", "ACGC", "TCAC", "TCGC", "TGAC", "TGAT"]
        );
        assert!(data
            .pool
            .frequencies
            .iter()
            .all(|&f| (f - 1.0 / 6.0).abs() < 1e-15));
    }

    #[test]
    fn one_homozygote_pool() {
        let t = GenotypeTable::from_dosages(vec!["a".into()], &[vec![0, 2, 2]]).unwrap();
        let data = build_pool::<f64>(&t, 20).unwrap();
        assert_eq!(data.pool.haplotypes, vec![vec![0, 1, 1]]);
        assert_eq!(data.pool.frequencies, vec![1.0]);
        let (counts, ll) = e_step(&data.pairs, &t.ids, &data.pool.frequencies).unwrap();
        assert_eq!(counts, vec![2.0]);
        assert_eq!(ll, 0.0);
        assert_eq!(m_step(&counts, 1), vec![1.0]);
    }

    #[test]
    fn first_iteration_from_uniform() {
        let t = table();
        let data = build_pool::<f64>(&t, MAX_HETEROZYGOUS).unwrap();
        let (counts, _) = e_step(&data.pairs, &t.ids, &data.pool.frequencies).unwrap();
        // ind1 fixes ACAC + ACGC, ind2 splits evenly over its two phases, ind3 fixes TGAC + TGAT
        let expected = [1.5, 1.5, 0.5, 0.5, 1.0, 1.0];
        for (c, e) in counts.iter().zip(expected) {
            assert!((c - e).abs() < 1e-14);
        }
        let theta = m_step(&counts, 3);
        for (t, e) in theta.iter().zip(expected) {
            assert!((t - e / 6.0).abs() < 1e-14);
        }
    }

    #[test]
    fn unique_pair_splits_evenly() {
        let t = GenotypeTable::from_dosages(vec!["a".into()], &[vec![1, 0]]).unwrap();
        let data = build_pool::<f64>(&t, 20).unwrap();
        let (counts, _) = e_step(&data.pairs, &t.ids, &data.pool.frequencies).unwrap();
        assert_eq!(counts, vec![1.0, 1.0]);
        assert_eq!(m_step(&counts, 1), vec![0.5, 0.5]);
    }

    #[test]
    fn identical_homozygotes_concentrate_immediately() {
        let t = GenotypeTable::from_dosages(
            (0..5).map(|i| format!("i{i}")).collect(),
            &vec![vec![2, 0, 2]; 5],
        )
        .unwrap();
        let em = EmConfig::default();
        let fit = phase::<f64>(&t, &em, 20).unwrap();
        assert_eq!(fit.pool.frequencies, vec![1.0]);
        assert!(fit.trace.iterations <= 1);
    }

    #[test]
    fn phase_is_monotone_and_calls_best_pairs() {
        let t = table();
        let fit = phase::<f64>(&t, &EmConfig::default().with_restarts(3), 20).unwrap();
        assert!(fit.trace.is_monotone(1e-9));
        let s: f64 = fit.pool.frequencies.iter().sum();
        assert!((s - 1.0).abs() < 1e-12);
        let loci = &t.loci;
        let call = &fit.calls[1];
        let pair = (
            render(&fit.pool.haplotypes[call.first], loci),
            render(&fit.pool.haplotypes[call.second], loci),
        );
        // ACAC and ACGC are supported by ind1, so ind2's phase reuses one of them
        assert!(pair.0 == "ACAC" || pair.0 == "ACGC", "{pair:?}");
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn counts_sum_to_twice_individuals(
            dosages in prop::collection::vec(prop::collection::vec(0u8..3, 4), 1..6),
            seed in any::<u64>(),
        ) {
            let ids: Vec<String> = (0..dosages.len()).map(|i| format!("i{i}")).collect();
            let t = GenotypeTable::from_dosages(ids.clone(), &dosages).unwrap();
            let data = build_pool::<f64>(&t, 20).unwrap();
            let problem = PhaseProblem::new(&data, &ids);
            let mut rng = crate::rng::rng_from_seed(seed);
            let theta = problem.initialize(1, &mut rng).unwrap();
            let (counts, _) = e_step(&data.pairs, &ids, &theta).unwrap();
            prop_assert!((counts.iter().sum::<f64>() - 2.0 * ids.len() as f64).abs() < 1e-9);
            let next = m_step(&counts, ids.len());
            prop_assert!((next.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }

        #[test]
        fn individual_order_does_not_matter(
            dosages in prop::collection::vec(prop::collection::vec(0u8..3, 3), 2..6),
        ) {
            let ids: Vec<String> = (0..dosages.len()).map(|i| format!("i{i}")).collect();
            let t = GenotypeTable::from_dosages(ids.clone(), &dosages).unwrap();
            let mut rev = dosages.clone();
            rev.reverse();
            let mut rev_ids = ids.clone();
            rev_ids.reverse();
            let r = GenotypeTable::from_dosages(rev_ids, &rev).unwrap();
            let em = EmConfig::new(1e-12, 2000, 1, 0).unwrap();
            let a = phase::<f64>(&t, &em, 20).unwrap();
            let b = phase::<f64>(&r, &em, 20).unwrap();
            prop_assert_eq!(&a.pool.haplotypes, &b.pool.haplotypes);
            for (x, y) in a.pool.frequencies.iter().zip(&b.pool.frequencies) {
                prop_assert!((x - y).abs() < 1e-9);
            }
        }
    }
}
