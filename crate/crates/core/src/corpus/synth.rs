//! Synthetic recruitment corpus with a planted gender pathway.
//!
//! Resumes carry industry tokens, seniority tokens and gender-marker tokens.
//! Three channels depend on gender, all scaled by `bias_strength`:
//! male resumes get extra seniority tokens, marker tokens lean towards the
//! writer's gender, and industry choice leans towards the per-gender
//! industry distribution in [`INDUSTRY_GENDER_COUNTS`]. Vacancy salaries
//! grow with the vacancy's seniority level, so nearest-neighbour matching
//! on seniority-sensitive vectors turns the first channel into a wage gap.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Normal, Poisson};
use serde::{Deserialize, Serialize};

use super::{Document, Gender, N_INDUSTRIES};
use crate::error::{Error, Result};

/// (male, female) resume counts per industry group, used as priors for the
/// gender-dependent industry distribution.
pub const INDUSTRY_GENDER_COUNTS: [(u32, u32); N_INDUSTRIES] = [
    (45293, 167585),  // Administration/Secretarial
    (49527, 8547),    // Automation/Internet
    (40086, 33541),   // Policy/Executive
    (23134, 8821),    // Security/Defence/Police
    (92801, 66461),   // Commercial/Sales
    (69914, 42245),   // Consultancy/Advice
    (19279, 24839),   // Design/Creative/Journalism
    (67412, 32153),   // Management
    (34233, 25523),   // Financial/Accounting
    (34342, 29882),   // Financial services
    (26852, 53679),   // HR/Training
    (44647, 60588),   // Catering/Retail
    (99429, 29677),   // Procurement/Logistics/Transport
    (8638, 18488),    // Legal
    (20000, 71090),   // Customer service/Call centre/Front office
    (46832, 58598),   // Marketing/PR/Communications
    (24018, 85414),   // Medical/Healthcare
    (38430, 66318),   // Education/Research/Science
    (86749, 82728),   // Other
    (77790, 25452),   // Production/Operational
    (102798, 9097),   // Technology
];

pub const INDUSTRY_NAMES: [&str; N_INDUSTRIES] = [
    "Administration/Secretarial",
    "Automation/Internet",
    "Policy/Executive",
    "Security/Defence/Police",
    "Commercial/Sales",
    "Consultancy/Advice",
    "Design/Creative/Journalism",
    "Management",
    "Financial/Accounting",
    "Financial services",
    "HR/Training",
    "Catering/Retail",
    "Procurement/Logistics/Transport",
    "Legal",
    "Customer service/Call centre/Front office",
    "Marketing/PR/Communications",
    "Medical/Healthcare",
    "Education/Research/Science",
    "Other",
    "Production/Operational",
    "Technology",
];

const FEMALE_WORDS: &[&str] = &["she", "hers", "herself", "woman", "female", "girl", "zij", "haar"];
const MALE_WORDS: &[&str] = &["he", "his", "himself", "man", "male", "boy", "hij", "zijn"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub n_resumes: usize,
    pub n_vacancies: usize,
    pub n_industries: usize,
    /// Target female/male resume ratio.
    pub gender_ratio: f64,
    /// 0 makes every token distribution gender-independent.
    pub bias_strength: f64,
    /// Weight of the per-gender industry priors at `bias_strength = 1`.
    pub industry_skew: f64,
    /// Extra mean seniority tokens on male resumes at `bias_strength = 1`.
    pub seniority_offset: f64,
    pub seniority_levels: usize,
    pub seniority_tokens_per_level: f64,
    /// Hourly salary per industry before the seniority term.
    pub salary_base: Vec<f64>,
    /// Hourly salary increment per seniority level.
    pub salary_step: f64,
    pub salary_spread: f64,
    pub industry_tokens_per_label: f64,
    pub filler_tokens: f64,
    /// Mean gender-marker tokens per resume.
    pub marker_rate: f64,
    /// Mean gender-marker tokens per vacancy (gender-neutral mix).
    pub vacancy_marker_rate: f64,
    /// Share of marker tokens drawn from common gendered words rather than
    /// the synthetic marker families.
    pub pronoun_share: f64,
    pub industry_vocab: usize,
    pub seniority_vocab: usize,
    pub marker_vocab: usize,
    pub filler_vocab: usize,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_resumes: 5000,
            n_vacancies: 2000,
            n_industries: N_INDUSTRIES,
            gender_ratio: 0.93,
            bias_strength: 0.8,
            industry_skew: 0.4,
            seniority_offset: 1.5,
            seniority_levels: 5,
            seniority_tokens_per_level: 1.5,
            salary_base: vec![20.0; N_INDUSTRIES],
            salary_step: 2.5,
            salary_spread: 2.0,
            industry_tokens_per_label: 3.0,
            filler_tokens: 20.0,
            marker_rate: 3.0,
            vacancy_marker_rate: 1.0,
            pronoun_share: 0.3,
            industry_vocab: 12,
            seniority_vocab: 10,
            marker_vocab: 8,
            filler_vocab: 300,
            seed: 1,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("n_resumes", self.n_resumes),
            ("n_vacancies", self.n_vacancies),
            ("seniority_levels", self.seniority_levels),
            ("industry_vocab", self.industry_vocab),
            ("seniority_vocab", self.seniority_vocab),
            ("marker_vocab", self.marker_vocab),
            ("filler_vocab", self.filler_vocab),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::config(format!("synth.{name} must be positive")));
            }
        }
        if self.n_industries != N_INDUSTRIES {
            return Err(Error::config(format!("synth.n_industries must be {N_INDUSTRIES}")));
        }
        if self.salary_base.len() != N_INDUSTRIES {
            return Err(Error::config(format!(
                "synth.salary_base needs {N_INDUSTRIES} entries, got {}",
                self.salary_base.len()
            )));
        }
        for (name, v) in [
            ("bias_strength", self.bias_strength),
            ("industry_skew", self.industry_skew),
            ("pronoun_share", self.pronoun_share),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::config(format!("synth.{name} must be in [0, 1], got {v}")));
            }
        }
        let nonneg = [
            ("gender_ratio", self.gender_ratio),
            ("seniority_offset", self.seniority_offset),
            ("seniority_tokens_per_level", self.seniority_tokens_per_level),
            ("salary_step", self.salary_step),
            ("salary_spread", self.salary_spread),
            ("industry_tokens_per_label", self.industry_tokens_per_label),
            ("filler_tokens", self.filler_tokens),
            ("marker_rate", self.marker_rate),
            ("vacancy_marker_rate", self.vacancy_marker_rate),
        ];
        for (name, v) in nonneg.into_iter().chain(self.salary_base.iter().map(|&b| ("salary_base", b))) {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::config(format!("synth.{name} must be finite and >= 0, got {v}")));
            }
        }
        if self.gender_ratio == 0.0 {
            return Err(Error::config("synth.gender_ratio must be positive"));
        }
        Ok(())
    }
}

pub fn seniority_token(k: usize) -> String {
    format!("sen{k}")
}

pub fn industry_token(industry: usize, k: usize) -> String {
    format!("ind{industry:02}w{k}")
}

pub fn marker_token(gender: Gender, k: usize) -> String {
    match gender {
        Gender::Female => format!("fem{k}"),
        Gender::Male => format!("mal{k}"),
    }
}

pub fn is_seniority_token(t: &str) -> bool {
    t.strip_prefix("sen").is_some_and(|r| !r.is_empty() && r.bytes().all(|b| b.is_ascii_digit()))
}

fn poisson<R: Rng>(rng: &mut R, mean: f64) -> usize {
    if mean <= 0.0 {
        return 0;
    }
    let d = Poisson::new(mean).expect("positive mean");
    d.sample(rng) as usize
}

struct Sampler<'a> {
    cfg: &'a SynthConfig,
    rng: ChaCha8Rng,
    filler: WeightedIndex<f64>,
}

impl Sampler<'_> {
    fn fillers(&mut self, out: &mut Vec<String>) {
        let n = poisson(&mut self.rng, self.cfg.filler_tokens);
        for _ in 0..n {
            let k = self.filler.sample(&mut self.rng);
            out.push(format!("w{k}"));
        }
    }

    fn industry_tokens(&mut self, industry: usize, out: &mut Vec<String>) {
        let n = poisson(&mut self.rng, self.cfg.industry_tokens_per_label).max(1);
        for _ in 0..n {
            let k = self.rng.random_range(0..self.cfg.industry_vocab);
            out.push(industry_token(industry, k));
        }
    }

    fn seniority_tokens(&mut self, count: usize, out: &mut Vec<String>) {
        for _ in 0..count {
            let k = self.rng.random_range(0..self.cfg.seniority_vocab);
            out.push(seniority_token(k));
        }
    }

    /// Surplus seniority words come from the upper half of the seniority
    /// vocabulary only, the words vacancies and resumes share for senior roles.
    fn surplus_tokens(&mut self, count: usize, out: &mut Vec<String>) {
        let lo = self.cfg.seniority_vocab / 2;
        for _ in 0..count {
            let k = self.rng.random_range(lo..self.cfg.seniority_vocab);
            out.push(seniority_token(k));
        }
    }

    fn marker(&mut self, gender: Gender) -> String {
        if self.rng.random_bool(self.cfg.pronoun_share) {
            let words = match gender {
                Gender::Female => FEMALE_WORDS,
                Gender::Male => MALE_WORDS,
            };
            words[self.rng.random_range(0..words.len())].to_string()
        } else {
            marker_token(gender, self.rng.random_range(0..self.cfg.marker_vocab))
        }
    }

    fn shuffle(&mut self, tokens: &mut [String]) {
        use rand::seq::SliceRandom;
        tokens.shuffle(&mut self.rng);
    }
}

/// Generates `n_resumes` resumes followed by `n_vacancies` vacancies.
pub fn generate_synthetic(cfg: &SynthConfig) -> Result<Vec<Document>> {
    cfg.validate()?;
    let filler_weights: Vec<f64> = (0..cfg.filler_vocab).map(|r| 1.0 / (r as f64 + 1.0)).collect();
    let mut s = Sampler {
        cfg,
        rng: ChaCha8Rng::seed_from_u64(cfg.seed),
        filler: WeightedIndex::new(&filler_weights).expect("nonempty positive weights"),
    };

    let skew = cfg.bias_strength * cfg.industry_skew;
    let industry_dist = |gender: Gender| {
        let total: f64 = INDUSTRY_GENDER_COUNTS
            .iter()
            .map(|&(m, f)| if gender == Gender::Male { m } else { f } as f64)
            .sum();
        let w: Vec<f64> = INDUSTRY_GENDER_COUNTS
            .iter()
            .map(|&(m, f)| {
                let c = if gender == Gender::Male { m } else { f } as f64;
                (1.0 - skew) / N_INDUSTRIES as f64 + skew * c / total
            })
            .collect();
        WeightedIndex::new(w).expect("positive weights")
    };
    let female_industries = industry_dist(Gender::Female);
    let male_industries = industry_dist(Gender::Male);
    let p_female = cfg.gender_ratio / (1.0 + cfg.gender_ratio);
    let p_own_marker = 0.5 * (1.0 + cfg.bias_strength);

    let mut docs = Vec::with_capacity(cfg.n_resumes + cfg.n_vacancies);
    for i in 0..cfg.n_resumes {
        let gender = if s.rng.random_bool(p_female) { Gender::Female } else { Gender::Male };
        let n_labels = match s.rng.random_range(0..10) {
            0..=5 => 1,
            6..=8 => 2,
            _ => 3,
        };
        let dist = match gender {
            Gender::Female => &female_industries,
            Gender::Male => &male_industries,
        };
        let mut industries = std::collections::BTreeSet::new();
        while industries.len() < n_labels {
            industries.insert(dist.sample(&mut s.rng));
        }

        let mut tokens = Vec::new();
        s.fillers(&mut tokens);
        for &ind in &industries {
            s.industry_tokens(ind, &mut tokens);
        }
        let level = s.rng.random_range(0..cfg.seniority_levels);
        let n_senior = poisson(&mut s.rng, cfg.seniority_tokens_per_level * level as f64);
        s.seniority_tokens(n_senior, &mut tokens);
        let extra = poisson(&mut s.rng, cfg.bias_strength * cfg.seniority_offset);
        if gender == Gender::Male {
            s.surplus_tokens(extra, &mut tokens);
        }
        let n_markers = poisson(&mut s.rng, cfg.marker_rate);
        for _ in 0..n_markers {
            let other = match gender {
                Gender::Female => Gender::Male,
                Gender::Male => Gender::Female,
            };
            let g = if s.rng.random_bool(p_own_marker) { gender } else { other };
            let m = s.marker(g);
            tokens.push(m);
        }
        s.shuffle(&mut tokens);
        docs.push(Document::resume(format!("r{i:06}"), tokens, gender, industries));
    }

    let noise = Normal::new(0.0, cfg.salary_spread).map_err(|e| Error::config(e.to_string()))?;
    for i in 0..cfg.n_vacancies {
        let industry = s.rng.random_range(0..N_INDUSTRIES);
        let level = s.rng.random_range(0..cfg.seniority_levels);
        let mut tokens = Vec::new();
        s.fillers(&mut tokens);
        s.industry_tokens(industry, &mut tokens);
        let n_senior = poisson(&mut s.rng, cfg.seniority_tokens_per_level * level as f64);
        s.seniority_tokens(n_senior, &mut tokens);
        let n_markers = poisson(&mut s.rng, cfg.vacancy_marker_rate);
        for _ in 0..n_markers {
            let g = if s.rng.random_bool(0.5) { Gender::Female } else { Gender::Male };
            let m = s.marker(g);
            tokens.push(m);
        }
        s.shuffle(&mut tokens);
        let salary = (cfg.salary_base[industry] + cfg.salary_step * level as f64 + noise.sample(&mut s.rng)).max(0.0);
        docs.push(Document::vacancy(format!("v{i:06}"), tokens, [industry], Some(salary)));
    }
    Ok(docs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashMap;

    fn small(seed: u64, bias: f64) -> SynthConfig {
        SynthConfig {
            n_resumes: 4000,
            n_vacancies: 200,
            bias_strength: bias,
            seed,
            ..SynthConfig::default()
        }
    }

    fn seniority_counts(docs: &[Document]) -> Vec<(Gender, usize)> {
        docs.iter()
            .filter(|d| d.is_resume())
            .map(|d| (d.gender.unwrap(), d.tokens.iter().filter(|t| is_seniority_token(t)).count()))
            .collect()
    }

    /// Plug-in mutual information (nats) between gender and a discrete count.
    fn mutual_information(pairs: &[(Gender, usize)]) -> f64 {
        let n = pairs.len() as f64;
        let mut joint: HashMap<(Gender, usize), f64> = HashMap::new();
        let mut pg: HashMap<Gender, f64> = HashMap::new();
        let mut pc: HashMap<usize, f64> = HashMap::new();
        for &(g, c) in pairs {
            *joint.entry((g, c)).or_default() += 1.0;
            *pg.entry(g).or_default() += 1.0;
            *pc.entry(c).or_default() += 1.0;
        }
        joint
            .iter()
            .map(|(&(g, c), &k)| {
                let pxy = k / n;
                pxy * (pxy / ((pg[&g] / n) * (pc[&c] / n))).ln()
            })
            .sum()
    }

    #[test]
    fn counts_and_validity() {
        let cfg = SynthConfig { n_resumes: 30, n_vacancies: 12, ..SynthConfig::default() };
        let docs = generate_synthetic(&cfg).unwrap();
        assert_eq!(docs.iter().filter(|d| d.is_resume()).count(), 30);
        assert_eq!(docs.iter().filter(|d| d.is_vacancy()).count(), 12);
        for d in &docs {
            d.validate().unwrap();
            assert!(!d.industries.is_empty());
            if d.is_vacancy() {
                assert!(d.salary_hourly.unwrap() >= 0.0);
            }
        }
        assert_eq!(docs, generate_synthetic(&cfg).unwrap());
    }

    #[test]
    fn invalid_configs() {
        let bad = [
            SynthConfig { n_resumes: 0, ..SynthConfig::default() },
            SynthConfig { bias_strength: 1.5, ..SynthConfig::default() },
            SynthConfig { n_industries: 20, ..SynthConfig::default() },
            SynthConfig { salary_base: vec![1.0; 3], ..SynthConfig::default() },
        ];
        for cfg in bad {
            assert!(matches!(generate_synthetic(&cfg), Err(Error::Config(_))));
        }
    }

    #[test]
    fn default_gender_ratio() {
        let docs = generate_synthetic(&SynthConfig { seed: 1, ..SynthConfig::default() }).unwrap();
        let f = docs.iter().filter(|d| d.gender == Some(Gender::Female)).count() as f64;
        let m = docs.iter().filter(|d| d.gender == Some(Gender::Male)).count() as f64;
        assert!((f / m - 0.93).abs() < 0.05, "ratio {}", f / m);
    }

    #[test]
    fn full_bias_seniority_offset() {
        let cfg = SynthConfig { bias_strength: 1.0, ..small(1, 1.0) };
        let counts = seniority_counts(&generate_synthetic(&cfg).unwrap());
        let mean = |g: Gender| {
            let v: Vec<f64> = counts.iter().filter(|p| p.0 == g).map(|p| p.1 as f64).collect();
            v.iter().sum::<f64>() / v.len() as f64
        };
        let diff = mean(Gender::Male) - mean(Gender::Female);
        let target = cfg.seniority_offset;
        assert!((diff - target).abs() <= 0.1 * target, "diff {diff}");
    }

    #[test]
    fn zero_bias_is_gender_independent() {
        // Noise floor: MI of the same counts against permuted gender labels.
        use rand::seq::SliceRandom;
        for seed in 0..5 {
            let counts = seniority_counts(&generate_synthetic(&small(seed, 0.0)).unwrap());
            let mi = mutual_information(&counts);
            let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
            let mut genders: Vec<Gender> = counts.iter().map(|p| p.0).collect();
            let mut floor = 0.0;
            for _ in 0..20 {
                genders.shuffle(&mut rng);
                let permuted: Vec<_> = genders.iter().zip(&counts).map(|(&g, p)| (g, p.1)).collect();
                floor = f64::max(floor, mutual_information(&permuted));
            }
            assert!(mi <= floor * 1.5, "seed {seed}: mi {mi} floor {floor}");
            let biased = seniority_counts(&generate_synthetic(&small(seed, 1.0)).unwrap());
            assert!(mutual_information(&biased) > 5.0 * floor);
        }
    }
}
