use std::collections::HashMap;

/// Counts of every n-gram of order `n` in `tokens`.
pub fn ngram_counts(tokens: &[usize], n: usize) -> HashMap<&[usize], usize> {
    let mut counts = HashMap::new();
    if n == 0 || tokens.len() < n {
        return counts;
    }
    for w in tokens.windows(n) {
        *counts.entry(w).or_insert(0) += 1;
    }
    counts
}

/// Clipped matches and hypothesis n-gram totals for orders `1..=max_order`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct NgramStats {
    pub matches: Vec<usize>,
    pub totals: Vec<usize>,
    /// Reference n-gram totals, used to tell "no n-grams anywhere" apart from
    /// "hypothesis too short".
    pub ref_totals: Vec<usize>,
    pub hyp_len: usize,
    pub ref_len: usize,
}

impl NgramStats {
    pub fn new(max_order: usize) -> Self {
        NgramStats {
            matches: vec![0; max_order],
            totals: vec![0; max_order],
            ref_totals: vec![0; max_order],
            hyp_len: 0,
            ref_len: 0,
        }
    }

    pub fn compute(hyp: &[usize], reference: &[usize], max_order: usize) -> Self {
        let mut s = NgramStats::new(max_order);
        s.add(hyp, reference);
        s
    }

    /// Pools the statistics of one more sentence pair.
    pub fn add(&mut self, hyp: &[usize], reference: &[usize]) {
        for n in 1..=self.matches.len() {
            let h = ngram_counts(hyp, n);
            let r = ngram_counts(reference, n);
            self.matches[n - 1] += h
                .iter()
                .map(|(g, &c)| c.min(r.get(g).copied().unwrap_or(0)))
                .sum::<usize>();
            self.totals[n - 1] += hyp.len().saturating_sub(n - 1);
            self.ref_totals[n - 1] += reference.len().saturating_sub(n - 1);
        }
        self.hyp_len += hyp.len();
        self.ref_len += reference.len();
    }

    pub fn brevity_penalty(&self) -> f64 {
        if self.hyp_len == 0 {
            return 0.0;
        }
        (1.0 - self.ref_len as f64 / self.hyp_len as f64).min(0.0).exp()
    }
}

/// Smoothed sentence-level BLEU in `[0, 1]`.
///
/// Unigram precision is unsmoothed; orders `2..=max_order` use add-one
/// smoothing on both matches and totals. The geometric mean is multiplied by
/// the brevity penalty `exp(min(0, 1 - |ref|/|hyp|))`. An empty hypothesis
/// scores 0.
pub fn sentence_bleu(hyp: &[usize], reference: &[usize], max_order: usize) -> f64 {
    if hyp.is_empty() || reference.is_empty() || max_order == 0 {
        return 0.0;
    }
    let stats = NgramStats::compute(hyp, reference, max_order);
    let mut log_sum = 0.0;
    for n in 0..max_order {
        let (m, t) = (stats.matches[n] as f64, stats.totals[n] as f64);
        let p = if n == 0 { m / t } else { (m + 1.0) / (t + 1.0) };
        if p == 0.0 {
            return 0.0;
        }
        log_sum += p.ln();
    }
    (log_sum / max_order as f64).exp() * stats.brevity_penalty()
}
