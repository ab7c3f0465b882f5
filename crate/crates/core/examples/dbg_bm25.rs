use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use attrib_core::bm25::{Bm25Params, IndexedCorpus, ScoredChunk};

fn main() {
    let mut rng = ChaCha12Rng::seed_from_u64(202);
    let params = Bm25Params::default();
    for corpus_round in 0..5 {
        let n_docs = rng.gen_range(200..=1000);
        let chunks: Vec<(String, String)> = (0..n_docs)
            .map(|i| {
                let len = rng.gen_range(3..40);
                let text: Vec<String> = (0..len)
                    .map(|_| {
                        if rng.gen_bool(0.1) {
                            format!("rare{}", rng.gen_range(0..2000))
                        } else {
                            format!("v{:02}", rng.gen_range(0..60))
                        }
                    })
                    .collect();
                (format!("r{corpus_round}c{i:04}"), text.join(" "))
            })
            .collect();
        let index = IndexedCorpus::build(&chunks, params).unwrap();
        let analyzed: Vec<Vec<String>> = chunks
            .iter()
            .map(|(_, t)| t.to_lowercase().split_whitespace().map(str::to_owned).collect())
            .collect();
        let lens: Vec<f64> = analyzed.iter().map(|t| t.len() as f64).collect();
        let avg = lens.iter().sum::<f64>() / n_docs as f64;

        for qi in 0..20 {
            let q_len = rng.gen_range(1..8);
            let query: Vec<String> = (0..q_len)
                .map(|_| {
                    if rng.gen_bool(0.15) {
                        format!("rare{}", rng.gen_range(0..2000))
                    } else {
                        format!("v{:02}", rng.gen_range(0..60))
                    }
                })
                .collect();
            let query_text = query.join(" ");
            let got = index.retrieve("q", &query_text, n_docs + 10, None);
            let mut expected: Vec<ScoredChunk> = Vec::new();
            for (d, (id, _)) in chunks.iter().enumerate() {
                let mut score = 0.0;
                for term in &query {
                    let term = term.to_lowercase();
                    let tf = analyzed[d].iter().filter(|t| **t == term).count() as f64;
                    if tf == 0.0 { continue; }
                    let df = analyzed.iter().filter(|doc| doc.contains(&term)).count() as f64;
                    let idf = (1.0 + (n_docs as f64 - df + 0.5) / (df + 0.5)).ln();
                    let denom = tf + params.k1 * (1.0 - params.b + params.b * lens[d] / avg);
                    score += idf * tf * (params.k1 + 1.0) / denom;
                }
                if score > 0.0 {
                    expected.push(ScoredChunk { chunk_id: id.clone(), score });
                }
            }
            expected.sort_by(|a, b| b.score.total_cmp(&a.score).then_with(|| a.chunk_id.cmp(&b.chunk_id)));
            if got.entries.len() != expected.len() {
                println!("round {corpus_round} q{qi}: LEN {} vs {}", got.entries.len(), expected.len());
                continue;
            }
            for (g, e) in got.entries.iter().zip(&expected) {
                if g.chunk_id != e.chunk_id || (g.score - e.score).abs() >= 1e-9 {
                    println!("round {corpus_round} q{qi}: query={query_text:?} got=({}, {:.12}) want=({}, {:.12})", g.chunk_id, g.score, e.chunk_id, e.score);
                    break;
                }
            }
        }
    }
    println!("done");
}
